//! Whole-period simulation: net positions, interval allocation and settlement
//! for every interval, reduced into per-participant annual totals.
//!
//! Intervals are processed in fixed-size chunks. Each chunk accumulates its
//! own compensated sums and the chunk partials are merged in chunk order, so
//! sequential and parallel runs produce bit-identical totals.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::allocation::{net_position, IntervalAllocator, Scratch};
use crate::ingestion::ProfileSet;
use crate::model::{AllocationOutcome, Combination, Community, CommunityConfig, NetPosition, Tariff, Violation};
use crate::settlement::{baseline_line, check_interval, community_line, MoneyLine, SettlementError};
use crate::sum::{compensated_sum, CompensatedSum};

/// Intervals per reduction chunk.
pub const CHUNK_INTERVALS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Chunks on the rayon pool. Without the `parallel` feature this runs
    /// sequentially.
    #[default]
    Parallel,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {}", list(.0))]
    Config(Vec<Violation>),
    #[error("no profile for participant {0}")]
    MissingProfile(String),
    #[error("profile for {0} is not in the config")]
    UnexpectedProfile(String),
    #[error("profiles use {found}-minute intervals but the config says {expected}")]
    IntervalMismatch { expected: u32, found: u32 },
}

fn list(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
#[error("interval {interval}: {source}")]
pub struct SimulationError {
    pub interval: usize,
    #[source]
    pub source: SettlementError,
}

/// Per-participant net positions for every interval, ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    community: Community,
    tariff: Tariff,
    start: DateTime<Utc>,
    step_minutes: u32,
    intervals: usize,
    /// Interval-major: `positions[t * n + i]`.
    positions: Vec<NetPosition>,
    annual_demands: Vec<f64>,
}

impl Scenario {
    pub fn new(config: &CommunityConfig, profiles: &ProfileSet) -> Result<Self, ScenarioError> {
        let community = Community::from_config(config).map_err(ScenarioError::Config)?;
        if profiles.step_minutes() != config.interval_minutes {
            return Err(ScenarioError::IntervalMismatch {
                expected: config.interval_minutes,
                found: profiles.step_minutes(),
            });
        }
        for p in profiles.profiles() {
            if community.index_of(&p.id).is_none() {
                return Err(ScenarioError::UnexpectedProfile(p.id.to_string()));
            }
        }
        let series = community
            .participants()
            .iter()
            .map(|p| {
                profiles
                    .get(&p.id)
                    .ok_or_else(|| ScenarioError::MissingProfile(p.id.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let n = community.len();
        let intervals = profiles.intervals();
        let mut positions = Vec::with_capacity(n * intervals);
        for t in 0..intervals {
            positions.extend(
                series
                    .iter()
                    .map(|p| net_position(p.generation.values[t], p.consumption.values[t])),
            );
        }
        let annual_demands = (0..n)
            .map(|i| compensated_sum((0..intervals).map(|t| positions[t * n + i].demand)))
            .collect();
        Ok(Self {
            community,
            tariff: config.tariff,
            start: profiles.start(),
            step_minutes: profiles.step_minutes(),
            intervals,
            positions,
            annual_demands,
        })
    }

    pub fn community(&self) -> &Community {
        &self.community
    }

    pub fn tariff(&self) -> &Tariff {
        &self.tariff
    }

    pub fn with_tariff(mut self, tariff: Tariff) -> Self {
        self.tariff = tariff;
        self
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Net positions of interval `t`, indexed like the community.
    pub fn positions(&self, t: usize) -> &[NetPosition] {
        let n = self.community.len();
        &self.positions[t * n..(t + 1) * n]
    }

    /// Demand of each participant summed over the whole period.
    pub fn annual_demands(&self) -> &[f64] {
        &self.annual_demands
    }

    /// `Σ_t min(Σ_i S_it, Σ_i D_it)`: the most energy any scheme can share.
    pub fn max_shareable(&self) -> f64 {
        compensated_sum((0..self.intervals).map(|t| {
            let (s, d) = self
                .positions(t)
                .iter()
                .fold((0.0, 0.0), |(s, d), p| (s + p.surplus, d + p.demand));
            s.min(d)
        }))
    }

    pub fn allocator(&self, combination: Combination) -> IntervalAllocator<'_> {
        IntervalAllocator::new(&self.community, combination, &self.annual_demands)
    }

    /// Walks every interval in order, handing its positions and outcomes to
    /// `visit`.
    pub fn replay<F>(&self, combination: Combination, mut visit: F)
    where
        F: FnMut(usize, &[NetPosition], &[AllocationOutcome]),
    {
        let allocator = self.allocator(combination);
        let mut scratch = Scratch::new();
        let mut out = vec![AllocationOutcome::default(); self.community.len()];
        for t in 0..self.intervals {
            let positions = self.positions(t);
            allocator.allocate(positions, &mut scratch, &mut out);
            visit(t, positions, &out);
        }
    }

    pub fn simulate(
        &self,
        combination: Combination,
        execution: Execution,
    ) -> Result<SimulationSummary, SimulationError> {
        let allocator = self.allocator(combination);
        let chunks = self.intervals.div_ceil(CHUNK_INTERVALS);
        let run = |c: usize| self.run_chunk(&allocator, c);
        let partials: Vec<Result<Accumulator, SimulationError>> = match execution {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..chunks).into_par_iter().map(run).collect()
            }
            _ => (0..chunks).map(run).collect(),
        };

        let mut total = Accumulator::new(self.community.len());
        for partial in partials {
            total.merge(&partial?);
        }
        Ok(SimulationSummary {
            combination,
            intervals: self.intervals,
            max_shareable: self.max_shareable(),
            participants: total.finish(),
        })
    }

    fn run_chunk(&self, allocator: &IntervalAllocator<'_>, chunk: usize) -> Result<Accumulator, SimulationError> {
        let n = self.community.len();
        let mut acc = Accumulator::new(n);
        let mut scratch = Scratch::new();
        let mut out = vec![AllocationOutcome::default(); n];
        let end = ((chunk + 1) * CHUNK_INTERVALS).min(self.intervals);
        for t in chunk * CHUNK_INTERVALS..end {
            let positions = self.positions(t);
            allocator.allocate(positions, &mut scratch, &mut out);
            check_interval(&out).map_err(|source| SimulationError { interval: t, source })?;
            for (i, (p, o)) in positions.iter().zip(&out).enumerate() {
                acc.add(
                    i,
                    p,
                    o,
                    &baseline_line(p, &self.tariff),
                    &community_line(o, &self.tariff),
                );
            }
        }
        Ok(acc)
    }
}

/// Energy totals, kWh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyTotals {
    pub surplus: f64,
    pub demand: f64,
    pub allocated_same: f64,
    pub allocated_other: f64,
    pub grid_import: f64,
    pub sold_community: f64,
    pub grid_export: f64,
}

impl EnergyTotals {
    pub fn allocated(&self) -> f64 {
        self.allocated_same + self.allocated_other
    }

    fn fields_mut(&mut self) -> [&mut f64; 7] {
        [
            &mut self.surplus,
            &mut self.demand,
            &mut self.allocated_same,
            &mut self.allocated_other,
            &mut self.grid_import,
            &mut self.sold_community,
            &mut self.grid_export,
        ]
    }

    pub fn accumulate(&mut self, other: &EnergyTotals) {
        let o = *other;
        let add = [
            o.surplus,
            o.demand,
            o.allocated_same,
            o.allocated_other,
            o.grid_import,
            o.sold_community,
            o.grid_export,
        ];
        for (f, v) in self.fields_mut().into_iter().zip(add) {
            *f += v;
        }
    }
}

/// One participant's totals over the simulated period.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ParticipantTotals {
    pub energy: EnergyTotals,
    pub baseline: MoneyLine,
    pub community: MoneyLine,
}

impl ParticipantTotals {
    pub fn accumulate(&mut self, other: &ParticipantTotals) {
        self.energy.accumulate(&other.energy);
        self.baseline += other.baseline;
        self.community += other.community;
    }
}

const FIELDS: usize = 17;

struct Accumulator {
    sums: Vec<[CompensatedSum; FIELDS]>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            sums: vec![[CompensatedSum::new(); FIELDS]; n],
        }
    }

    #[inline]
    fn add(&mut self, i: usize, p: &NetPosition, o: &AllocationOutcome, base: &MoneyLine, comm: &MoneyLine) {
        let values = [
            p.surplus,
            p.demand,
            o.allocated_same,
            o.allocated_other,
            o.grid_import,
            o.sold_community,
            o.grid_export,
            base.energy_cost,
            base.network_cost,
            base.other_cost,
            base.grid_revenue,
            base.community_revenue,
            comm.energy_cost,
            comm.network_cost,
            comm.other_cost,
            comm.grid_revenue,
            comm.community_revenue,
        ];
        for (s, v) in self.sums[i].iter_mut().zip(values) {
            s.add(v);
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (mine, theirs) in self.sums.iter_mut().zip(&other.sums) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                a.merge(b);
            }
        }
    }

    fn finish(self) -> Vec<ParticipantTotals> {
        self.sums
            .into_iter()
            .map(|s| {
                let v: Vec<f64> = s.iter().map(CompensatedSum::value).collect();
                let line = |k: usize| MoneyLine {
                    energy_cost: v[k],
                    network_cost: v[k + 1],
                    other_cost: v[k + 2],
                    grid_revenue: v[k + 3],
                    community_revenue: v[k + 4],
                };
                ParticipantTotals {
                    energy: EnergyTotals {
                        surplus: v[0],
                        demand: v[1],
                        allocated_same: v[2],
                        allocated_other: v[3],
                        grid_import: v[4],
                        sold_community: v[5],
                        grid_export: v[6],
                    },
                    baseline: line(7),
                    community: line(12),
                }
            })
            .collect()
    }
}

/// Result of simulating one combination over a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub combination: Combination,
    pub intervals: usize,
    /// `Σ_t min(S_t, D_t)` for the scenario.
    pub max_shareable: f64,
    /// Indexed like the community.
    pub participants: Vec<ParticipantTotals>,
}

impl SimulationSummary {
    /// Community totals (sum over participants in index order).
    pub fn community(&self) -> ParticipantTotals {
        let mut total = ParticipantTotals::default();
        for p in &self.participants {
            total.accumulate(p);
        }
        total
    }

    /// Energy shared inside the community, kWh.
    pub fn shared(&self) -> f64 {
        self.community().energy.allocated()
    }

    pub fn imported(&self) -> f64 {
        self.community().energy.grid_import
    }

    pub fn exported(&self) -> f64 {
        self.community().energy.grid_export
    }
}

impl fmt::Display for SimulationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.community().energy;
        write!(
            f,
            "{}: imported {:.3} kWh, shared {:.3} kWh, exported {:.3} kWh",
            self.combination,
            c.grid_import,
            c.allocated(),
            c.grid_export
        )
    }
}
