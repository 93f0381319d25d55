use std::fs::{self, File};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ecshare_cli::verify::{verify, Fault};
use ecshare_cli::{load_inputs, run, CliError, Selection, EXIT_INVARIANT, EXIT_USAGE};
use ecshare_core::ingestion::write_timeseries;
use ecshare_core::{generate_synthetic, Execution, Method, Scheme, Strategy, SyntheticSpec};

#[derive(Parser)]
#[command(name = "ecshare", version, about = "Energy community surplus sharing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate combinations and write community, feeder and participant reports.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the strategy in the config.
        #[arg(long)]
        strategy: Option<StrategyArg>,
        /// Defaults to the scheme in the config.
        #[arg(long)]
        scheme: Option<SchemeArg>,
        /// Defaults to the method in the config.
        #[arg(long)]
        method: Option<MethodArg>,
        #[arg(long)]
        out: PathBuf,
        /// Resample the data to this many minutes per interval before simulating.
        #[arg(long)]
        resample: Option<u32>,
        /// Run on one thread.
        #[arg(long)]
        sequential: bool,
        /// Leave wall-clock timings out of run.json so reruns are byte-identical.
        #[arg(long)]
        omit_timings: bool,
    },
    /// Check conservation, sharing, money and oracle invariants on a dataset.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        resample: Option<u32>,
        /// Corrupt one outcome at this interval to prove the audit catches it.
        #[arg(long, hide = true, value_name = "INTERVAL")]
        inject_fault: Option<usize>,
    },
    /// Write a seeded synthetic dataset as config.json and data.csv.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        days: u32,
        #[arg(long, default_value_t = 1)]
        interval: u32,
        /// Drop all generation so nobody has surplus.
        #[arg(long)]
        consumers_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    FeederAware,
    FeederAgnostic,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Equal,
    Proportional,
    #[value(alias = "rank-based")]
    Rank,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Static,
    Dynamic,
    Both,
}

impl StrategyArg {
    fn expand(self) -> Vec<Strategy> {
        match self {
            StrategyArg::FeederAware => vec![Strategy::FeederAware],
            StrategyArg::FeederAgnostic => vec![Strategy::FeederAgnostic],
            StrategyArg::Both => Strategy::ALL.to_vec(),
        }
    }
}

impl SchemeArg {
    fn expand(self) -> Vec<Scheme> {
        match self {
            SchemeArg::Equal => vec![Scheme::Equal],
            SchemeArg::Proportional => vec![Scheme::Proportional],
            SchemeArg::Rank => vec![Scheme::Rank],
            SchemeArg::All => Scheme::ALL.to_vec(),
        }
    }
}

impl MethodArg {
    fn expand(self) -> Vec<Method> {
        match self {
            MethodArg::Static => vec![Method::Static],
            MethodArg::Dynamic => vec![Method::Dynamic],
            MethodArg::Both => Method::ALL.to_vec(),
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Simulate {
            config,
            data,
            strategy,
            scheme,
            method,
            out,
            resample,
            sequential,
            omit_timings,
        } => {
            let (config, scenario) = load_inputs(&config, &data, resample)?;
            let selection = Selection {
                strategies: strategy.map(StrategyArg::expand).unwrap_or_default(),
                schemes: scheme.map(SchemeArg::expand).unwrap_or_default(),
                methods: method.map(MethodArg::expand).unwrap_or_default(),
            };
            let execution = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let report = run(&config, &scenario, &selection.combinations(&config), execution)?;
            report.write(&out, !omit_timings)?;
            for c in &report.combinations {
                let e = &c.community.energy;
                println!(
                    "{}: shared {:.3} MWh, imported {:.3} MWh, exported {:.3} MWh",
                    c.combination,
                    e.allocated() / 1e3,
                    e.grid_import / 1e3,
                    e.grid_export / 1e3
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            config,
            data,
            resample,
            inject_fault,
        } => {
            let (_, scenario) = load_inputs(&config, &data, resample)?;
            let checks = verify(&scenario, inject_fault.map(|interval| Fault { interval }));
            for check in &checks {
                println!("{check}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                println!("{failed} of {} invariants failed", checks.len());
                return Ok(ExitCode::from(EXIT_INVARIANT as u8));
            }
            println!("all {} invariants hold", checks.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate {
            seed,
            days,
            interval,
            consumers_only,
            out,
        } => {
            let mut spec = SyntheticSpec::reference(seed, days).with_interval(interval);
            if consumers_only {
                spec = spec.consumers_only();
            }
            let (profiles, config) = generate_synthetic(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.json"), config.to_json() + "\n")?;
            write_timeseries(&profiles, File::create(out.join("data.csv"))?)?;
            println!(
                "wrote {} intervals for {} participants to {}",
                profiles.intervals(),
                config.participants.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
