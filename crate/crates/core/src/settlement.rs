//! Money: what each participant pays and earns with and without the
//! community.
//!
//! Only the energy component of community-sourced kWh moves between members.
//! Network charges (discounted by feeder of origin) and other charges are paid
//! out to the grid operator in both cases.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::Serialize;
use thiserror::Error;

use crate::model::{approx_eq, AllocationOutcome, FeederId, NetPosition, ParticipantId, Tariff};

/// Costs and revenues of one participant, EUR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MoneyLine {
    pub energy_cost: f64,
    pub network_cost: f64,
    pub other_cost: f64,
    /// Feed-in revenue for exports.
    pub grid_revenue: f64,
    /// Revenue from energy sold to other members.
    pub community_revenue: f64,
}

impl MoneyLine {
    pub fn total_cost(&self) -> f64 {
        self.energy_cost + self.network_cost + self.other_cost
    }

    pub fn total_revenue(&self) -> f64 {
        self.grid_revenue + self.community_revenue
    }
}

impl Add for MoneyLine {
    type Output = MoneyLine;

    fn add(mut self, rhs: MoneyLine) -> MoneyLine {
        self += rhs;
        self
    }
}

impl AddAssign for MoneyLine {
    fn add_assign(&mut self, rhs: MoneyLine) {
        self.energy_cost += rhs.energy_cost;
        self.network_cost += rhs.network_cost;
        self.other_cost += rhs.other_cost;
        self.grid_revenue += rhs.grid_revenue;
        self.community_revenue += rhs.community_revenue;
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SettlementError {
    #[error("participant {index}: {field} is negative or not finite ({value})")]
    InvalidField {
        index: usize,
        field: &'static str,
        value: f64,
    },
    #[error("participant {index} both buys and sells in one interval")]
    BuysAndSells { index: usize },
    #[error("community balance broken: {allocated} kWh allocated but {sold} kWh sold")]
    Imbalance { allocated: f64, sold: f64 },
    #[error("participant sets differ; missing from baseline: {missing_baseline:?}, missing from community: {missing_community:?}")]
    ParticipantMismatch {
        missing_baseline: Vec<ParticipantId>,
        missing_community: Vec<ParticipantId>,
    },
}

/// What a participant pays and earns on its own in one interval.
pub fn baseline_line(position: &NetPosition, tariff: &Tariff) -> MoneyLine {
    MoneyLine {
        energy_cost: position.demand * tariff.grid_energy_price,
        network_cost: position.demand * tariff.grid_network_price,
        other_cost: position.demand * tariff.grid_other_price,
        grid_revenue: position.surplus * tariff.feed_in_price,
        community_revenue: 0.0,
    }
}

/// What a participant pays and earns inside the community in one interval.
/// Assumes a valid outcome; see [`community_settle_interval`].
pub fn community_line(outcome: &AllocationOutcome, tariff: &Tariff) -> MoneyLine {
    let allocated = outcome.allocated();
    MoneyLine {
        energy_cost: allocated * tariff.community_energy_price + outcome.grid_import * tariff.grid_energy_price,
        network_cost: outcome.allocated_same * tariff.same_feeder_network_price()
            + outcome.allocated_other * tariff.other_feeder_network_price()
            + outcome.grid_import * tariff.grid_network_price,
        other_cost: (allocated + outcome.grid_import) * tariff.grid_other_price,
        grid_revenue: outcome.grid_export * tariff.feed_in_price,
        community_revenue: outcome.sold_community * tariff.community_energy_price,
    }
}

/// Baseline settlement summed over intervals. Each interval slice is indexed
/// by participant.
pub fn baseline_settle<'a, I>(intervals: I, participants: usize, tariff: &Tariff) -> Vec<MoneyLine>
where
    I: IntoIterator<Item = &'a [NetPosition]>,
{
    let mut out = vec![MoneyLine::default(); participants];
    for positions in intervals {
        for (line, p) in out.iter_mut().zip(positions) {
            *line += baseline_line(p, tariff);
        }
    }
    out
}

/// Checks one interval's outcomes and returns each participant's money line.
/// The first broken identity aborts the interval.
pub fn community_settle_interval(
    outcomes: &[AllocationOutcome],
    tariff: &Tariff,
) -> Result<Vec<MoneyLine>, SettlementError> {
    check_interval(outcomes)?;
    Ok(outcomes.iter().map(|o| community_line(o, tariff)).collect())
}

/// Community settlement summed over intervals.
pub fn community_settle<'a, I>(
    intervals: I,
    participants: usize,
    tariff: &Tariff,
) -> Result<Vec<MoneyLine>, SettlementError>
where
    I: IntoIterator<Item = &'a [AllocationOutcome]>,
{
    let mut out = vec![MoneyLine::default(); participants];
    for outcomes in intervals {
        for (line, add) in out.iter_mut().zip(community_settle_interval(outcomes, tariff)?) {
            *line += add;
        }
    }
    Ok(out)
}

/// Identities an interval's outcomes must satisfy before they are priced.
pub fn check_interval(outcomes: &[AllocationOutcome]) -> Result<(), SettlementError> {
    let mut allocated = 0.0;
    let mut sold = 0.0;
    for (index, o) in outcomes.iter().enumerate() {
        let fields = [
            ("allocated_same", o.allocated_same),
            ("allocated_other", o.allocated_other),
            ("grid_import", o.grid_import),
            ("sold_community", o.sold_community),
            ("grid_export", o.grid_export),
        ];
        for (field, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(SettlementError::InvalidField { index, field, value });
            }
        }
        if o.demand() > 0.0 && o.surplus() > 0.0 {
            return Err(SettlementError::BuysAndSells { index });
        }
        allocated += o.allocated();
        sold += o.sold_community;
    }
    if !approx_eq(allocated, sold) {
        return Err(SettlementError::Imbalance { allocated, sold });
    }
    Ok(())
}

/// Annual benefit of membership for one participant (or a group), EUR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Benefit {
    pub baseline_cost: f64,
    pub community_cost: f64,
    pub cost_reduction: f64,
    pub baseline_revenue: f64,
    pub community_revenue_total: f64,
    pub revenue_increase: f64,
    pub total_benefit: f64,
}

impl Benefit {
    pub fn from_lines(baseline: &MoneyLine, community: &MoneyLine) -> Self {
        let baseline_cost = baseline.total_cost();
        let community_cost = community.total_cost();
        let baseline_revenue = baseline.total_revenue();
        let community_revenue_total = community.total_revenue();
        let cost_reduction = baseline_cost - community_cost;
        let revenue_increase = community_revenue_total - baseline_revenue;
        Self {
            baseline_cost,
            community_cost,
            cost_reduction,
            baseline_revenue,
            community_revenue_total,
            revenue_increase,
            total_benefit: cost_reduction + revenue_increase,
        }
    }
}

impl AddAssign for Benefit {
    fn add_assign(&mut self, rhs: Benefit) {
        self.baseline_cost += rhs.baseline_cost;
        self.community_cost += rhs.community_cost;
        self.cost_reduction += rhs.cost_reduction;
        self.baseline_revenue += rhs.baseline_revenue;
        self.community_revenue_total += rhs.community_revenue_total;
        self.revenue_increase += rhs.revenue_increase;
        self.total_benefit += rhs.total_benefit;
    }
}

/// Participant benefits with feeder and community roll-ups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenefitReport {
    pub participants: BTreeMap<ParticipantId, Benefit>,
    pub feeders: BTreeMap<FeederId, Benefit>,
    pub community: Benefit,
}

/// Compares baseline and community settlements. Roll-ups sum members in id
/// order; the community sums feeders in label order.
pub fn benefits(
    baseline: &BTreeMap<ParticipantId, MoneyLine>,
    community: &BTreeMap<ParticipantId, MoneyLine>,
    feeder_of: &BTreeMap<ParticipantId, FeederId>,
) -> Result<BenefitReport, SettlementError> {
    let missing_baseline: Vec<_> = community
        .keys()
        .filter(|k| !baseline.contains_key(*k))
        .cloned()
        .collect();
    let missing_community: Vec<_> = baseline
        .keys()
        .filter(|k| !community.contains_key(*k))
        .cloned()
        .collect();
    if !missing_baseline.is_empty() || !missing_community.is_empty() {
        return Err(SettlementError::ParticipantMismatch {
            missing_baseline,
            missing_community,
        });
    }

    let participants: BTreeMap<_, _> = baseline
        .iter()
        .map(|(id, b)| (id.clone(), Benefit::from_lines(b, &community[id])))
        .collect();
    let mut feeders: BTreeMap<FeederId, Benefit> = BTreeMap::new();
    for (id, b) in &participants {
        if let Some(feeder) = feeder_of.get(id) {
            *feeders.entry(feeder.clone()).or_default() += *b;
        }
    }
    let mut total = Benefit::default();
    for b in feeders.values() {
        total += *b;
    }
    Ok(BenefitReport {
        participants,
        feeders,
        community: total,
    })
}
