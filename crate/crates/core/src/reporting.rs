//! Report tables: community, feeder and participant rows per combination,
//! serialized to `community.csv`, `feeders.csv`, `participants.csv` and
//! `run.json`.
//!
//! Feeder rows are sums of their participants in id order and community rows
//! are sums of feeder rows in label order, so the files agree with each other
//! before formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::engine::{EnergyTotals, ParticipantTotals, Scenario, SimulationSummary};
use crate::model::{Combination, CommunityConfig, FeederId, Participant, ParticipantId, Tariff};
use crate::settlement::{benefits, Benefit, BenefitReport};

pub const COMMUNITY_HEADER: &str =
    "strategy,scheme,method,imported_mwh,shared_mwh,exported_mwh,revenue_increase_eur,cost_reduction_eur";
const DETAIL_COLUMNS: &str = "imported_mwh,received_same_mwh,received_other_mwh,sold_mwh,exported_mwh,\
revenue_increase_eur,cost_reduction_eur,total_benefit_eur";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Row {
    pub energy: EnergyTotals,
    pub benefit: Benefit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeederRow {
    pub feeder: FeederId,
    #[serde(flatten)]
    pub row: Row,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantRow {
    #[serde(flatten)]
    pub participant: Participant,
    #[serde(flatten)]
    pub row: Row,
}

/// Everything reported for one combination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinationReport {
    #[serde(flatten)]
    pub combination: Combination,
    pub community: Row,
    /// Cost reduction if the feeder discounts applied to other charges as
    /// well as the network charge.
    pub cost_reduction_eur_if_other_charges_discounted: f64,
    pub max_shareable_kwh: f64,
    pub feeders: Vec<FeederRow>,
    pub participants: Vec<ParticipantRow>,
}

impl CombinationReport {
    pub fn new(scenario: &Scenario, summary: &SimulationSummary) -> Self {
        let community = scenario.community();
        let tariff = scenario.tariff();
        let ids = |i: usize| community.participant(i).id.clone();

        let baseline: BTreeMap<ParticipantId, _> = summary
            .participants
            .iter()
            .enumerate()
            .map(|(i, t)| (ids(i), t.baseline))
            .collect();
        let settled: BTreeMap<ParticipantId, _> = summary
            .participants
            .iter()
            .enumerate()
            .map(|(i, t)| (ids(i), t.community))
            .collect();
        let feeder_of: BTreeMap<ParticipantId, FeederId> = community
            .participants()
            .iter()
            .map(|p| (p.id.clone(), p.feeder.clone()))
            .collect();
        let BenefitReport {
            participants: p_benefits,
            feeders: f_benefits,
            community: c_benefit,
        } = benefits(&baseline, &settled, &feeder_of).expect("same participant set");

        let participants: Vec<ParticipantRow> = summary
            .participants
            .iter()
            .enumerate()
            .map(|(i, t)| ParticipantRow {
                participant: community.participant(i).clone(),
                row: Row {
                    energy: t.energy,
                    benefit: p_benefits[&ids(i)],
                },
            })
            .collect();

        let feeders: Vec<FeederRow> = community
            .feeders()
            .iter()
            .enumerate()
            .map(|(f, feeder)| {
                let mut total = ParticipantTotals::default();
                for &i in community.members(f) {
                    total.accumulate(&summary.participants[i]);
                }
                FeederRow {
                    feeder: feeder.clone(),
                    row: Row {
                        energy: total.energy,
                        benefit: f_benefits[feeder],
                    },
                }
            })
            .collect();

        let mut energy = EnergyTotals::default();
        for f in &feeders {
            energy.accumulate(&f.row.energy);
        }
        Self {
            combination: summary.combination,
            cost_reduction_eur_if_other_charges_discounted: alt_cost_reduction(&energy, tariff),
            community: Row {
                energy,
                benefit: c_benefit,
            },
            max_shareable_kwh: summary.max_shareable,
            feeders,
            participants,
        }
    }
}

fn alt_cost_reduction(e: &EnergyTotals, t: &Tariff) -> f64 {
    let charges = t.grid_network_price + t.grid_other_price;
    let energy_saving = t.grid_energy_price - t.community_energy_price;
    e.allocated() * energy_saving
        + e.allocated_same * t.same_feeder_network_discount * charges
        + e.allocated_other * t.other_feeder_network_discount * charges
}

fn mwh(kwh: f64) -> String {
    format!("{:.3}", kwh / 1000.0)
}

fn eur(v: f64) -> String {
    // Avoid printing "-0.00" for values that are zero up to rounding noise.
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn combo_cells(c: &Combination) -> String {
    format!("{},{},{}", c.strategy, c.scheme, c.method)
}

fn detail_cells(r: &Row) -> String {
    let e = &r.energy;
    [
        mwh(e.grid_import),
        mwh(e.allocated_same),
        mwh(e.allocated_other),
        mwh(e.sold_community),
        mwh(e.grid_export),
        eur(r.benefit.revenue_increase),
        eur(r.benefit.cost_reduction),
        eur(r.benefit.total_benefit),
    ]
    .join(",")
}

pub fn community_csv(reports: &[CombinationReport]) -> String {
    let mut out = format!("{COMMUNITY_HEADER}\n");
    for r in reports {
        let e = &r.community.energy;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            combo_cells(&r.combination),
            mwh(e.grid_import),
            mwh(e.allocated()),
            mwh(e.grid_export),
            eur(r.community.benefit.revenue_increase),
            eur(r.community.benefit.cost_reduction),
        );
    }
    out
}

pub fn feeders_csv(reports: &[CombinationReport]) -> String {
    let mut out = format!("strategy,scheme,method,feeder,{DETAIL_COLUMNS}\n");
    for r in reports {
        for f in &r.feeders {
            let _ = writeln!(
                out,
                "{},{},{}",
                combo_cells(&r.combination),
                f.feeder,
                detail_cells(&f.row)
            );
        }
    }
    out
}

pub fn participants_csv(reports: &[CombinationReport]) -> String {
    let mut out = format!("strategy,scheme,method,participant,feeder,role,{DETAIL_COLUMNS}\n");
    for r in reports {
        for p in &r.participants {
            let role = match p.participant.role {
                crate::model::Role::Prosumer => "prosumer",
                crate::model::Role::Consumer => "consumer",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                combo_cells(&r.combination),
                p.participant.id,
                p.participant.feeder,
                role,
                detail_cells(&p.row)
            );
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DataInfo {
    pub start: String,
    pub step_minutes: u32,
    pub intervals: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    #[serde(flatten)]
    pub combination: Combination,
    pub millis: f64,
}

#[derive(Serialize)]
struct RunFile<'a> {
    version: &'a str,
    config: &'a CommunityConfig,
    data: &'a DataInfo,
    combinations: &'a [CombinationReport],
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<&'a [Timing]>,
}

/// A batch of combinations over one dataset.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: CommunityConfig,
    pub data: DataInfo,
    pub combinations: Vec<CombinationReport>,
    pub timings: Vec<Timing>,
}

impl RunReport {
    pub fn new(config: &CommunityConfig, scenario: &Scenario) -> Self {
        Self {
            config: config.clone(),
            data: DataInfo {
                start: scenario.start().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                step_minutes: scenario.step_minutes(),
                intervals: scenario.intervals(),
            },
            combinations: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn run_json(&self, with_timings: bool) -> String {
        let file = RunFile {
            version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            data: &self.data,
            combinations: &self.combinations,
            timings: with_timings.then_some(&self.timings[..]),
        };
        serde_json::to_string_pretty(&file).expect("report serializes") + "\n"
    }

    /// Writes the four report files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path, with_timings: bool) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("community.csv"), community_csv(&self.combinations))?;
        fs::write(dir.join("feeders.csv"), feeders_csv(&self.combinations))?;
        fs::write(dir.join("participants.csv"), participants_csv(&self.combinations))?;
        fs::write(dir.join("run.json"), self.run_json(with_timings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Execution;
    use crate::ingestion::{generate_synthetic, SyntheticSpec};
    use crate::model::approx_eq;

    fn reports() -> (CommunityConfig, Scenario, Vec<CombinationReport>) {
        let (profiles, config) = generate_synthetic(&SyntheticSpec::reference(11, 2)).unwrap();
        let scenario = Scenario::new(&config, &profiles).unwrap();
        let reports = Combination::all()
            .into_iter()
            .map(|c| CombinationReport::new(&scenario, &scenario.simulate(c, Execution::default()).unwrap()))
            .collect();
        (config, scenario, reports)
    }

    #[test]
    fn rollups_agree() {
        let (_, _, reports) = reports();
        for r in &reports {
            let mut from_feeders = 0.0;
            for f in &r.feeders {
                let members: f64 = r
                    .participants
                    .iter()
                    .filter(|p| p.participant.feeder == f.feeder)
                    .map(|p| p.row.benefit.cost_reduction)
                    .sum();
                assert!(approx_eq(members, f.row.benefit.cost_reduction));
                from_feeders += f.row.energy.grid_import;
            }
            assert!(approx_eq(from_feeders, r.community.energy.grid_import));
        }
    }

    #[test]
    fn csv_shapes() {
        let (config, scenario, reports) = reports();
        let community = community_csv(&reports);
        assert_eq!(community.lines().count(), 13);
        assert_eq!(community.lines().next().unwrap(), COMMUNITY_HEADER);
        assert_eq!(feeders_csv(&reports).lines().count(), 1 + 12 * 4);
        assert_eq!(participants_csv(&reports).lines().count(), 1 + 12 * 15);

        let mut run = RunReport::new(&config, &scenario);
        run.combinations = reports;
        let json: serde_json::Value = serde_json::from_str(&run.run_json(false)).unwrap();
        assert_eq!(json["combinations"].as_array().unwrap().len(), 12);
        assert_eq!(json["combinations"][0]["strategy"], "feeder-aware");
        assert!(json.get("timings").is_none());
    }

    #[test]
    fn alternative_discount_reading_saves_more() {
        let (_, _, reports) = reports();
        for r in &reports {
            assert!(r.cost_reduction_eur_if_other_charges_discounted >= r.community.benefit.cost_reduction - 1e-9);
        }
    }

    #[test]
    fn formatting() {
        assert_eq!(mwh(13942.4), "13.942");
        assert_eq!(eur(-0.001), "0.00");
        assert_eq!(eur(1.5), "1.50");
    }
}
