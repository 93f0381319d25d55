//! Per-interval surplus allocation.
//!
//! A *phase* allocates one surplus pool against a set of demands under a
//! coefficient vector (single pass, `min(α·pool, demand)`, no redistribution of
//! slack) or a rank order (sequential fill). Whatever a phase does not consume
//! stays with its contributors, scaled down pro-rata, and either enters the next
//! phase or is exported.
//!
//! The feeder-aware strategy runs one phase per feeder and then a community
//! phase over the merged leftovers; the feeder-agnostic strategy runs a single
//! community phase. Source attribution (same feeder vs. other feeder) is
//! pro-rata by the feeder composition of the pool a recipient drew from.

use std::collections::BTreeMap;

use crate::coefficients::{fill_equal, fill_needers_equal, fill_proportional, fill_rank, CoefficientVector, RankOrder};
use crate::model::{
    AllocationOutcome, Combination, Community, FeederId, Method, NetPosition, ParticipantId, Scheme, Strategy,
};

/// Surplus and demand left after self-consumption.
///
/// Inputs must be finite and non-negative; ingestion rejects anything else.
pub fn net_position(generation: f64, consumption: f64) -> NetPosition {
    debug_assert!(generation.is_finite() && generation >= 0.0, "generation {generation}");
    debug_assert!(
        consumption.is_finite() && consumption >= 0.0,
        "consumption {consumption}"
    );
    NetPosition {
        surplus: (generation - consumption).max(0.0),
        demand: (consumption - generation).max(0.0),
    }
}

/// Slot-aligned allocation rule for one phase.
#[derive(Debug, Clone, Copy)]
pub enum SlotRule<'a> {
    Coefficients(&'a [f64]),
    Rank(&'a [usize]),
}

/// Allocates `pool` against `demands`, writing each slot's intake to
/// `received`. Returns the energy consumed.
pub fn fill_phase(pool: f64, demands: &[f64], rule: SlotRule<'_>, received: &mut [f64]) -> f64 {
    received.fill(0.0);
    if pool <= 0.0 {
        return 0.0;
    }
    match rule {
        SlotRule::Coefficients(weights) => {
            for ((r, &d), &w) in received.iter_mut().zip(demands).zip(weights) {
                *r = (w * pool).min(d);
            }
        }
        SlotRule::Rank(order) => {
            let mut remaining = pool;
            for &k in order {
                if remaining <= 0.0 {
                    break;
                }
                let take = remaining.min(demands[k]);
                received[k] = take;
                remaining -= take;
            }
        }
    }
    received.iter().sum::<f64>().min(pool)
}

/// Surplus offered to a phase, keyed by contributor and its feeder.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pool {
    contributions: BTreeMap<(ParticipantId, FeederId), f64>,
}

impl Pool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, participant: ParticipantId, feeder: FeederId, surplus: f64) {
        assert!(
            surplus >= 0.0 && surplus.is_finite(),
            "contribution must be a finite kWh >= 0"
        );
        *self.contributions.entry((participant, feeder)).or_insert(0.0) += surplus;
    }

    pub fn contributions(&self) -> &BTreeMap<(ParticipantId, FeederId), f64> {
        &self.contributions
    }

    pub fn total(&self) -> f64 {
        self.contributions.values().sum()
    }

    /// Pool total per contributing feeder.
    pub fn by_feeder(&self) -> BTreeMap<FeederId, f64> {
        let mut out = BTreeMap::new();
        for ((_, feeder), &v) in &self.contributions {
            *out.entry(feeder.clone()).or_insert(0.0) += v;
        }
        out
    }

    fn scaled(&self, factor: f64) -> Pool {
        Pool {
            contributions: self
                .contributions
                .iter()
                .map(|(k, &v)| (k.clone(), v * factor))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum PoolRule {
    Coefficients(CoefficientVector),
    Rank(RankOrder),
}

/// Result of one allocation phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseResult {
    pub received: BTreeMap<ParticipantId, f64>,
    pub leftover: Pool,
    /// Each recipient's intake split by contributing feeder.
    pub sources: BTreeMap<ParticipantId, BTreeMap<FeederId, f64>>,
}

/// Allocates one pool against `demands`. Participants missing from the rule
/// receive nothing; rule entries without a demand entry are treated as zero
/// demand.
pub fn allocate_pool(pool: &Pool, demands: &BTreeMap<ParticipantId, f64>, rule: &PoolRule) -> PhaseResult {
    let ids: Vec<&ParticipantId> = demands.keys().collect();
    let slot_demands: Vec<f64> = demands.values().copied().collect();
    let mut received = vec![0.0; ids.len()];
    let total = pool.total();

    let consumed = match rule {
        PoolRule::Coefficients(v) => {
            let weights: Vec<f64> = ids.iter().map(|id| v.get(id).unwrap_or(0.0)).collect();
            fill_phase(total, &slot_demands, SlotRule::Coefficients(&weights), &mut received)
        }
        PoolRule::Rank(order) => {
            let slots: Vec<usize> = order
                .as_slice()
                .iter()
                .filter_map(|id| demands.keys().position(|k| k == id))
                .collect();
            fill_phase(total, &slot_demands, SlotRule::Rank(&slots), &mut received)
        }
    };

    let leftover_ratio = if total > 0.0 {
        ((total - consumed) / total).max(0.0)
    } else {
        0.0
    };
    let composition = pool.by_feeder();
    let mut result = PhaseResult {
        leftover: pool.scaled(leftover_ratio),
        ..Default::default()
    };
    for (id, r) in ids.into_iter().zip(received) {
        if r <= 0.0 {
            continue;
        }
        result.received.insert(id.clone(), r);
        let split = composition
            .iter()
            .map(|(feeder, &share)| (feeder.clone(), r * share / total))
            .collect();
        result.sources.insert(id.clone(), split);
    }
    result
}

#[derive(Debug, Clone)]
enum StaticRule {
    Weights(Vec<f64>),
    Order(Vec<usize>),
}

impl StaticRule {
    fn build(scheme: Scheme, annual: &[f64]) -> Self {
        let mut weights = vec![0.0; annual.len()];
        match scheme {
            Scheme::Equal => {
                fill_equal(&mut weights);
                StaticRule::Weights(weights)
            }
            Scheme::Proportional => {
                fill_proportional(annual, &mut weights);
                StaticRule::Weights(weights)
            }
            Scheme::Rank => {
                let mut order = Vec::with_capacity(annual.len());
                fill_rank(annual, false, &mut order);
                StaticRule::Order(order)
            }
        }
    }

    fn as_slot_rule(&self) -> SlotRule<'_> {
        match self {
            StaticRule::Weights(w) => SlotRule::Coefficients(w),
            StaticRule::Order(o) => SlotRule::Rank(o),
        }
    }
}

/// Reusable buffers for [`IntervalAllocator::allocate`].
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    demands: Vec<f64>,
    weights: Vec<f64>,
    order: Vec<usize>,
    received: Vec<f64>,
    residual: Vec<f64>,
    feeder_surplus: Vec<f64>,
    feeder_leftover: Vec<f64>,
}

impl Scratch {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Allocates single intervals for one community and one combination. Static
/// rules are fixed at construction from annual demands.
#[derive(Debug, Clone)]
pub struct IntervalAllocator<'c> {
    community: &'c Community,
    combination: Combination,
    everyone: Vec<usize>,
    feeder_rules: Vec<StaticRule>,
    community_rule: Option<StaticRule>,
}

impl<'c> IntervalAllocator<'c> {
    /// `annual_demands[i]` is participant `i`'s demand summed over the year;
    /// it is only read for static methods.
    pub fn new(community: &'c Community, combination: Combination, annual_demands: &[f64]) -> Self {
        assert_eq!(
            annual_demands.len(),
            community.len(),
            "one annual demand per participant"
        );
        let everyone: Vec<usize> = (0..community.len()).collect();
        let (feeder_rules, community_rule) = match combination.method {
            Method::Dynamic => (Vec::new(), None),
            Method::Static => {
                let scoped = |members: &[usize]| {
                    let annual: Vec<f64> = members.iter().map(|&i| annual_demands[i]).collect();
                    StaticRule::build(combination.scheme, &annual)
                };
                let feeders = (0..community.feeder_count())
                    .map(|f| scoped(community.members(f)))
                    .collect();
                (feeders, Some(scoped(&everyone)))
            }
        };
        Self {
            community,
            combination,
            everyone,
            feeder_rules,
            community_rule,
        }
    }

    pub fn community(&self) -> &Community {
        self.community
    }

    pub fn combination(&self) -> Combination {
        self.combination
    }

    /// Runs one phase over `scope`, reading demands from `residual` and
    /// leaving each member's intake in `scratch.received` (slot-aligned).
    fn phase(
        &self,
        scope: &[usize],
        rule: Option<&StaticRule>,
        pool: f64,
        residual: &[f64],
        scratch: &mut Scratch,
    ) -> f64 {
        let Scratch {
            demands,
            weights,
            order,
            received,
            ..
        } = scratch;
        demands.clear();
        demands.extend(scope.iter().map(|&i| residual[i]));
        received.resize(scope.len(), 0.0);

        let rule = match rule {
            Some(rule) => rule.as_slot_rule(),
            None => {
                weights.resize(scope.len(), 0.0);
                match self.combination.scheme {
                    Scheme::Equal => {
                        fill_needers_equal(demands, weights);
                        SlotRule::Coefficients(weights)
                    }
                    Scheme::Proportional => {
                        fill_proportional(demands, weights);
                        SlotRule::Coefficients(weights)
                    }
                    Scheme::Rank => {
                        fill_rank(demands, true, order);
                        SlotRule::Rank(order)
                    }
                }
            }
        };
        fill_phase(pool, demands, rule, received)
    }

    /// Allocates one interval. `positions` and `out` are indexed like the
    /// community's participants.
    pub fn allocate(&self, positions: &[NetPosition], scratch: &mut Scratch, out: &mut [AllocationOutcome]) {
        let n = self.community.len();
        assert_eq!(positions.len(), n);
        assert_eq!(out.len(), n);
        let nf = self.community.feeder_count();

        let mut residual = std::mem::take(&mut scratch.residual);
        let mut feeder_surplus = std::mem::take(&mut scratch.feeder_surplus);
        let mut feeder_leftover = std::mem::take(&mut scratch.feeder_leftover);
        residual.clear();
        residual.extend(positions.iter().map(|p| p.demand));
        feeder_surplus.clear();
        feeder_surplus.resize(nf, 0.0);
        for (i, p) in positions.iter().enumerate() {
            feeder_surplus[self.community.feeder_of(i)] += p.surplus;
        }
        out.fill(AllocationOutcome::default());

        // Fraction of each contributor's surplus that is exported at the end.
        let export_ratio = |feeder: usize, leftover: &[f64], final_ratio: f64| {
            let s = feeder_surplus[feeder];
            if s > 0.0 {
                leftover[feeder] / s * final_ratio
            } else {
                0.0
            }
        };

        feeder_leftover.clear();
        let final_ratio;
        match self.combination.strategy {
            Strategy::FeederAware => {
                for (f, &pool) in feeder_surplus.iter().enumerate() {
                    let members = self.community.members(f);
                    let consumed = self.phase(members, self.feeder_rules.get(f), pool, &residual, scratch);
                    for (k, &i) in members.iter().enumerate() {
                        let r = scratch.received[k];
                        out[i].allocated_same += r;
                        residual[i] -= r;
                    }
                    feeder_leftover.push((pool - consumed).max(0.0));
                }
                let pool: f64 = feeder_leftover.iter().sum();
                let consumed = self.phase(&self.everyone, self.community_rule.as_ref(), pool, &residual, scratch);
                for i in 0..n {
                    let r = scratch.received[i];
                    if r > 0.0 {
                        // Ratio first: a lone feeder gives exactly 1 and no stray cross-feeder kWh.
                        let same = (r * (feeder_leftover[self.community.feeder_of(i)] / pool)).min(r);
                        out[i].allocated_same += same;
                        out[i].allocated_other += r - same;
                    }
                }
                final_ratio = if pool > 0.0 {
                    ((pool - consumed) / pool).max(0.0)
                } else {
                    0.0
                };
            }
            Strategy::FeederAgnostic => {
                let pool: f64 = feeder_surplus.iter().sum();
                let consumed = self.phase(&self.everyone, self.community_rule.as_ref(), pool, &residual, scratch);
                for i in 0..n {
                    let r = scratch.received[i];
                    if r > 0.0 {
                        let same = (r * (feeder_surplus[self.community.feeder_of(i)] / pool)).min(r);
                        out[i].allocated_same = same;
                        out[i].allocated_other = r - same;
                    }
                }
                // Every feeder keeps its full surplus until the single phase.
                feeder_leftover.extend_from_slice(&feeder_surplus);
                final_ratio = if pool > 0.0 {
                    ((pool - consumed) / pool).max(0.0)
                } else {
                    0.0
                };
            }
        }

        for (i, (o, p)) in out.iter_mut().zip(positions).enumerate() {
            o.grid_import = (p.demand - o.allocated()).max(0.0);
            if p.surplus > 0.0 {
                let ratio = export_ratio(self.community.feeder_of(i), &feeder_leftover, final_ratio);
                o.grid_export = p.surplus * ratio;
                o.sold_community = p.surplus - o.grid_export;
            }
        }

        scratch.residual = residual;
        scratch.feeder_surplus = feeder_surplus;
        scratch.feeder_leftover = feeder_leftover;
    }
}

/// Convenience wrapper around [`IntervalAllocator`] for one feeder-aware
/// interval.
pub fn allocate_interval_feeder_aware(
    positions: &[NetPosition],
    community: &Community,
    scheme: Scheme,
    method: Method,
    annual_demands: &[f64],
) -> Vec<AllocationOutcome> {
    allocate_once(
        positions,
        community,
        Combination::new(Strategy::FeederAware, scheme, method),
        annual_demands,
    )
}

/// Convenience wrapper around [`IntervalAllocator`] for one feeder-agnostic
/// interval.
pub fn allocate_interval_feeder_agnostic(
    positions: &[NetPosition],
    community: &Community,
    scheme: Scheme,
    method: Method,
    annual_demands: &[f64],
) -> Vec<AllocationOutcome> {
    allocate_once(
        positions,
        community,
        Combination::new(Strategy::FeederAgnostic, scheme, method),
        annual_demands,
    )
}

fn allocate_once(
    positions: &[NetPosition],
    community: &Community,
    combination: Combination,
    annual_demands: &[f64],
) -> Vec<AllocationOutcome> {
    let allocator = IntervalAllocator::new(community, combination, annual_demands);
    let mut out = vec![AllocationOutcome::default(); community.len()];
    allocator.allocate(positions, &mut Scratch::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{dynamic_equal, rank_order};
    use crate::model::{approx_eq, Participant, Role};

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<ParticipantId, f64> {
        pairs.iter().map(|&(id, d)| (ParticipantId::from(id), d)).collect()
    }

    fn pool_of(total: f64) -> Pool {
        let mut pool = Pool::new();
        pool.add("P".into(), "F1".into(), total);
        pool
    }

    #[test]
    fn net_position_examples() {
        assert_eq!(
            net_position(5.0, 3.0),
            NetPosition {
                surplus: 2.0,
                demand: 0.0
            }
        );
        assert_eq!(
            net_position(0.0, 4.0),
            NetPosition {
                surplus: 0.0,
                demand: 4.0
            }
        );
        assert_eq!(
            net_position(2.5, 2.5),
            NetPosition {
                surplus: 0.0,
                demand: 0.0
            }
        );
    }

    #[test]
    fn pool_dynamic_equal() {
        let demands = map(&[("A", 4.0), ("B", 2.0), ("C", 0.0)]);
        let rule = PoolRule::Coefficients(dynamic_equal(&demands));
        let r = allocate_pool(&pool_of(10.0), &demands, &rule);
        assert_eq!(r.received, map(&[("A", 4.0), ("B", 2.0)]));
        assert_eq!(r.leftover.total(), 4.0);
    }

    #[test]
    fn pool_rank_fill() {
        let demands = map(&[("A", 4.0), ("B", 2.0), ("C", 2.0)]);
        let order = rank_order(&demands, Method::Dynamic);
        assert_eq!(order.0, vec!["B".into(), "C".into(), ParticipantId::from("A")]);
        let r = allocate_pool(&pool_of(5.0), &demands, &PoolRule::Rank(order));
        assert_eq!(r.received, map(&[("A", 1.0), ("B", 2.0), ("C", 2.0)]));
        assert_eq!(r.leftover.total(), 0.0);
    }

    #[test]
    fn pool_static_proportional_leaves_slack() {
        let demands = map(&[("A", 1.0), ("B", 5.0)]);
        let alpha = map(&[("A", 0.8), ("B", 0.2)]).into_iter().collect();
        let r = allocate_pool(&pool_of(10.0), &demands, &PoolRule::Coefficients(alpha));
        assert_eq!(r.received, map(&[("A", 1.0), ("B", 2.0)]));
        assert!(approx_eq(r.leftover.total(), 7.0));
    }

    #[test]
    fn pool_sources_and_leftover_are_pro_rata() {
        let mut pool = Pool::new();
        pool.add("P".into(), "F1".into(), 6.0);
        pool.add("Q".into(), "F2".into(), 2.0);
        let demands = map(&[("X", 4.0)]);
        let rule = PoolRule::Coefficients(dynamic_equal(&demands));
        let r = allocate_pool(&pool, &demands, &rule);
        let src = &r.sources[&ParticipantId::from("X")];
        assert_eq!(src[&FeederId::from("F1")], 3.0);
        assert_eq!(src[&FeederId::from("F2")], 1.0);
        let left = r.leftover.contributions();
        assert_eq!(left[&("P".into(), "F1".into())], 3.0);
        assert_eq!(left[&("Q".into(), "F2".into())], 1.0);
    }

    #[test]
    fn empty_pool_is_identity() {
        let demands = map(&[("A", 4.0)]);
        let rule = PoolRule::Coefficients(dynamic_equal(&demands));
        let r = allocate_pool(&Pool::new(), &demands, &rule);
        assert!(r.received.is_empty());
        assert_eq!(r.leftover.total(), 0.0);
    }

    /// F1 = {P: S=6, X: D=2}, F2 = {Y: D=3}.
    fn two_feeders() -> (Community, Vec<NetPosition>) {
        let community = Community::new(&[
            Participant::new("P", "F1", Role::Prosumer),
            Participant::new("X", "F1", Role::Consumer),
            Participant::new("Y", "F2", Role::Consumer),
        ])
        .unwrap();
        let positions = vec![
            NetPosition {
                surplus: 6.0,
                demand: 0.0,
            },
            NetPosition {
                surplus: 0.0,
                demand: 2.0,
            },
            NetPosition {
                surplus: 0.0,
                demand: 3.0,
            },
        ];
        (community, positions)
    }

    #[test]
    fn feeder_aware_two_phase_trace() {
        let (community, positions) = two_feeders();
        let out =
            allocate_interval_feeder_aware(&positions, &community, Scheme::Proportional, Method::Dynamic, &[0.0; 3]);
        let [p, x, y] = [out[0], out[1], out[2]];
        assert_eq!((x.allocated_same, x.allocated_other, x.grid_import), (2.0, 0.0, 0.0));
        assert_eq!((y.allocated_same, y.allocated_other, y.grid_import), (0.0, 3.0, 0.0));
        assert_eq!((p.sold_community, p.grid_export), (5.0, 1.0));
    }

    #[test]
    fn feeder_agnostic_single_phase() {
        let (community, positions) = two_feeders();
        let out =
            allocate_interval_feeder_agnostic(&positions, &community, Scheme::Proportional, Method::Dynamic, &[0.0; 3]);
        let [p, x, y] = [out[0], out[1], out[2]];
        // Pool 6 against {X:2, Y:3}: X gets min(2.4, 2), Y gets min(3.6, 3).
        assert_eq!(x.allocated(), 2.0);
        assert_eq!(y.allocated(), 3.0);
        // All surplus originates on F1.
        assert_eq!(x.allocated_same, 2.0);
        assert_eq!(y.allocated_other, 3.0);
        assert_eq!((p.sold_community, p.grid_export), (5.0, 1.0));
    }

    #[test]
    fn balanced_interval_is_all_zero() {
        let (community, _) = two_feeders();
        let positions = vec![NetPosition::default(); 3];
        for combo in Combination::all() {
            let out = allocate_once(&positions, &community, combo, &[1.0, 2.0, 3.0]);
            assert!(out.iter().all(|o| *o == AllocationOutcome::default()), "{combo}");
        }
    }

    #[test]
    fn zero_surplus_imports_everything() {
        let (community, _) = two_feeders();
        let positions = vec![
            NetPosition {
                surplus: 0.0,
                demand: 1.0,
            },
            NetPosition {
                surplus: 0.0,
                demand: 2.0,
            },
            NetPosition {
                surplus: 0.0,
                demand: 3.0,
            },
        ];
        for combo in Combination::all() {
            let out = allocate_once(&positions, &community, combo, &[1.0, 2.0, 3.0]);
            for (o, p) in out.iter().zip(&positions) {
                assert_eq!(o.grid_import, p.demand);
                assert_eq!(o.allocated(), 0.0);
            }
        }
    }

    #[test]
    fn one_prosumer_one_consumer() {
        let community = Community::new(&[
            Participant::new("P", "F1", Role::Prosumer),
            Participant::new("C", "F2", Role::Consumer),
        ])
        .unwrap();
        // Index 0 is "C" after sorting.
        let positions = vec![
            NetPosition {
                surplus: 0.0,
                demand: 2.0,
            },
            NetPosition {
                surplus: 5.0,
                demand: 0.0,
            },
        ];
        let out = allocate_interval_feeder_agnostic(&positions, &community, Scheme::Equal, Method::Dynamic, &[0.0; 2]);
        assert_eq!(out[0].allocated_other, 2.0);
        assert_eq!(out[0].grid_import, 0.0);
        assert_eq!(out[1].grid_export, 3.0);
        assert_eq!(out[1].sold_community, 2.0);
    }

    #[test]
    fn static_equal_counts_everyone_in_the_community_phase() {
        // Two feeders with one member each. Phase 1 hands A its own feeder's
        // 0 kWh; phase 2 splits B's 4 kWh as 1/2 + 1/2, and B has no demand.
        let community = Community::new(&[
            Participant::new("A", "F1", Role::Consumer),
            Participant::new("B", "F2", Role::Prosumer),
        ])
        .unwrap();
        let positions = vec![
            NetPosition {
                surplus: 0.0,
                demand: 3.0,
            },
            NetPosition {
                surplus: 4.0,
                demand: 0.0,
            },
        ];
        let out = allocate_interval_feeder_aware(&positions, &community, Scheme::Equal, Method::Static, &[10.0, 10.0]);
        assert_eq!(out[0].allocated_other, 2.0);
        assert_eq!(out[1].grid_export, 2.0);
    }
}
