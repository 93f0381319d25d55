//! The invariant audit run by `ecshare verify`.

use std::fmt;

use ecshare_core::engine::SimulationSummary;
use ecshare_core::model::{approx_eq, approx_le};
use ecshare_core::settlement::community_line;
use ecshare_core::{AllocationOutcome, Combination, Execution, Scenario, Strategy};
use ecshare_oracle::{check_interval, reference_allocate, OracleInstance, OracleParticipant};

/// Intervals compared against the oracle per combination.
pub const SPOT_CHECKS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, failures: Vec<String>, checked: usize) -> Self {
        let detail = match failures.first() {
            None => format!("{checked} checked"),
            Some(first) => format!("{} of {checked} failed, first: {first}", failures.len()),
        };
        Check {
            name,
            passed: failures.is_empty(),
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// Deliberate corruption for exercising the audit: one kWh of extra grid
/// export for the first participant at `interval` in the first combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fault {
    pub interval: usize,
}

/// Runs every invariant over all 12 combinations of `scenario`.
pub fn verify(scenario: &Scenario, fault: Option<Fault>) -> Vec<Check> {
    let combinations = Combination::all();
    let mut checks = replay_checks(scenario, &combinations, fault);

    let mut failures = Vec::new();
    let summaries: Vec<SimulationSummary> = combinations
        .iter()
        .filter_map(|&c| {
            scenario
                .simulate(c, Execution::default())
                .map_err(|e| failures.push(format!("{c}: {e}")))
                .ok()
        })
        .collect();
    checks.push(Check::new(
        "settlement accepted every interval",
        failures,
        combinations.len(),
    ));

    checks.push(community_identities(&summaries));
    checks.push(maximal_sharing(&summaries));
    checks.push(strategy_equality(&summaries));
    checks.push(non_negative_benefits(scenario, &summaries));
    checks.push(oracle_spot_checks(scenario, &combinations));
    checks
}

fn replay_checks(scenario: &Scenario, combinations: &[Combination], fault: Option<Fault>) -> Vec<Check> {
    let tariff = *scenario.tariff();
    let mut energy = Vec::new();
    let mut money = Vec::new();
    let mut corrupted = Vec::new();
    for (k, &combination) in combinations.iter().enumerate() {
        scenario.replay(combination, |t, positions, outcomes| {
            let outcomes = match fault {
                Some(f) if k == 0 && f.interval == t => {
                    corrupted.clear();
                    corrupted.extend_from_slice(outcomes);
                    corrupted[0].grid_export += 1.0;
                    &corrupted[..]
                }
                _ => outcomes,
            };
            for v in check_interval(t, positions, outcomes) {
                energy.push(format!("{combination}: {v}"));
            }
            let (paid, earned) = outcomes.iter().fold((0.0, 0.0), |(paid, earned), o| {
                let line = community_line(o, &tariff);
                (
                    paid + line.energy_cost - o.grid_import * tariff.grid_energy_price,
                    earned + line.community_revenue,
                )
            });
            if !approx_eq(paid, earned) {
                money.push(format!(
                    "{combination}: interval {t}: buyers paid {paid}, sellers earned {earned}"
                ));
            }
        });
    }
    let checked = combinations.len() * scenario.intervals();
    vec![
        Check::new("per-interval energy conservation", energy, checked),
        Check::new("per-interval money conservation", money, checked),
    ]
}

fn community_identities(summaries: &[SimulationSummary]) -> Check {
    let mut failures = Vec::new();
    for s in summaries {
        let e = s.community().energy;
        if !approx_eq(e.allocated() + e.grid_export, e.surplus) {
            failures.push(format!("{}: shared + exported != surplus", s.combination));
        }
        if !approx_eq(e.allocated() + e.grid_import, e.demand) {
            failures.push(format!("{}: shared + imported != demand", s.combination));
        }
    }
    Check::new("community totals conserve energy", failures, summaries.len())
}

fn maximal_sharing(summaries: &[SimulationSummary]) -> Check {
    let maximal: Vec<_> = summaries
        .iter()
        .filter(|s| s.combination.is_maximal_sharing())
        .collect();
    let failures = maximal
        .iter()
        .filter(|s| !approx_eq(s.shared(), s.max_shareable))
        .map(|s| format!("{}: shared {} vs {}", s.combination, s.shared(), s.max_shareable))
        .collect();
    Check::new(
        "maximal schemes share min(S, D) every interval",
        failures,
        maximal.len(),
    )
}

fn strategy_equality(summaries: &[SimulationSummary]) -> Check {
    let mut failures = Vec::new();
    let mut checked = 0;
    for aware in summaries
        .iter()
        .filter(|s| s.combination.is_maximal_sharing() && s.combination.strategy == Strategy::FeederAware)
    {
        let Some(agnostic) = summaries.iter().find(|s| {
            s.combination
                == Combination {
                    strategy: Strategy::FeederAgnostic,
                    ..aware.combination
                }
        }) else {
            continue;
        };
        checked += 1;
        let same = approx_eq(aware.shared(), agnostic.shared())
            && approx_eq(aware.imported(), agnostic.imported())
            && approx_eq(aware.exported(), agnostic.exported());
        if !same {
            failures.push(format!("{} differs from {}", aware.combination, agnostic.combination));
        }
    }
    Check::new("maximal schemes match across strategies", failures, checked)
}

fn non_negative_benefits(scenario: &Scenario, summaries: &[SimulationSummary]) -> Check {
    let mut failures = Vec::new();
    for s in summaries {
        for (i, p) in s.participants.iter().enumerate() {
            let revenue = p.community.total_revenue() - p.baseline.total_revenue();
            let savings = p.baseline.total_cost() - p.community.total_cost();
            let earns_more = approx_le(p.baseline.total_revenue(), p.community.total_revenue());
            let pays_less = approx_le(p.community.total_cost(), p.baseline.total_cost());
            if !(earns_more && pays_less) {
                let id = &scenario.community().participant(i).id;
                failures.push(format!(
                    "{}: {id}: revenue {revenue:+}, cost reduction {savings:+}",
                    s.combination
                ));
            }
        }
    }
    Check::new(
        "participants never lose",
        failures,
        summaries.len() * scenario.community().len(),
    )
}

/// Evenly spaced intervals where energy actually changes hands, falling back
/// to evenly spaced intervals overall.
fn sample_intervals(scenario: &Scenario, count: usize) -> Vec<usize> {
    let active: Vec<usize> = (0..scenario.intervals())
        .filter(|&t| {
            let p = scenario.positions(t);
            p.iter().any(|x| x.surplus > 0.0) && p.iter().any(|x| x.demand > 0.0)
        })
        .collect();
    let pool: Vec<usize> = if active.is_empty() {
        (0..scenario.intervals()).collect()
    } else {
        active
    };
    if pool.len() <= count {
        return pool;
    }
    (0..count).map(|k| pool[k * pool.len() / count]).collect()
}

fn oracle_spot_checks(scenario: &Scenario, combinations: &[Combination]) -> Check {
    let community = scenario.community();
    let sample = sample_intervals(scenario, SPOT_CHECKS);
    let mut failures = Vec::new();
    for &combination in combinations {
        let allocator = scenario.allocator(combination);
        let mut scratch = Default::default();
        let mut engine = vec![AllocationOutcome::default(); community.len()];
        for &t in &sample {
            let positions = scenario.positions(t);
            allocator.allocate(positions, &mut scratch, &mut engine);
            let instance = OracleInstance::new(
                community
                    .participants()
                    .iter()
                    .zip(positions)
                    .zip(scenario.annual_demands())
                    .map(|((p, &position), &annual_demand)| OracleParticipant {
                        id: p.id.clone(),
                        feeder: p.feeder.clone(),
                        position,
                        annual_demand,
                    })
                    .collect(),
            );
            let reference = reference_allocate(&instance, combination.strategy, combination.scheme, combination.method);
            for (p, e) in community.participants().iter().zip(&engine) {
                if !outcomes_match(e, &reference[&p.id]) {
                    failures.push(format!(
                        "{combination}: interval {t}: {}: engine {e:?}, oracle {:?}",
                        p.id, reference[&p.id]
                    ));
                }
            }
        }
    }
    Check::new(
        "engine matches oracle on sampled intervals",
        failures,
        combinations.len() * sample.len(),
    )
}

/// Field-by-field agreement within the shared tolerance.
pub fn outcomes_match(a: &AllocationOutcome, b: &AllocationOutcome) -> bool {
    approx_eq(a.allocated_same, b.allocated_same)
        && approx_eq(a.allocated_other, b.allocated_other)
        && approx_eq(a.grid_import, b.grid_import)
        && approx_eq(a.sold_community, b.sold_community)
        && approx_eq(a.grid_export, b.grid_export)
}
