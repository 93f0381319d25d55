use std::collections::BTreeMap;

use ecshare_core::{AllocationOutcome, FeederId, Method, ParticipantId, Scheme, Strategy};

use crate::instance::{OracleInstance, OracleParticipant};

struct State {
    residual: BTreeMap<ParticipantId, f64>,
    unsold: BTreeMap<ParticipantId, f64>,
    /// (recipient, source feeder) -> kWh
    received_from: BTreeMap<(ParticipantId, FeederId), f64>,
}

/// How much each member takes from a pool of `pool` kWh.
fn takes(
    members: &[&OracleParticipant],
    residual: &BTreeMap<ParticipantId, f64>,
    pool: f64,
    scheme: Scheme,
    method: Method,
) -> BTreeMap<ParticipantId, f64> {
    let need = |p: &OracleParticipant| residual[&p.id];
    let mut out = BTreeMap::new();

    let mut by_share = |share: &dyn Fn(&OracleParticipant) -> f64| {
        for p in members {
            let want = share(p) * pool;
            out.insert(p.id.clone(), if want < need(p) { want } else { need(p) });
        }
    };
    match (scheme, method) {
        (Scheme::Equal, Method::Static) => {
            let n = members.len() as f64;
            by_share(&|_| 1.0 / n);
        }
        (Scheme::Equal, Method::Dynamic) => {
            let needers = members.iter().filter(|p| need(p) > 0.0).count() as f64;
            by_share(&|p| if need(p) > 0.0 { 1.0 / needers } else { 0.0 });
        }
        (Scheme::Proportional, Method::Static) => {
            let total: f64 = members.iter().map(|p| p.annual_demand).sum();
            by_share(&|p| if total > 0.0 { p.annual_demand / total } else { 0.0 });
        }
        (Scheme::Proportional, Method::Dynamic) => {
            let total: f64 = members.iter().map(|p| need(p)).sum();
            by_share(&|p| if total > 0.0 { need(p) / total } else { 0.0 });
        }
        (Scheme::Rank, method) => {
            let key = |p: &OracleParticipant| match method {
                Method::Static => p.annual_demand,
                Method::Dynamic => need(p),
            };
            let mut queue: Vec<&OracleParticipant> = members
                .iter()
                .copied()
                .filter(|p| method == Method::Static || need(p) > 0.0)
                .collect();
            queue.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap().then_with(|| a.id.cmp(&b.id)));
            let mut left = pool;
            for p in queue {
                let take = if left < need(p) { left } else { need(p) };
                out.insert(p.id.clone(), take);
                left -= take;
            }
        }
    }
    out
}

/// One pool: `contributors` offer what they have not sold yet, `members`
/// draw from it.
fn phase(
    state: &mut State,
    members: &[&OracleParticipant],
    contributors: &[&OracleParticipant],
    scheme: Scheme,
    method: Method,
) {
    let mut by_feeder: BTreeMap<FeederId, f64> = BTreeMap::new();
    for c in contributors {
        *by_feeder.entry(c.feeder.clone()).or_default() += state.unsold[&c.id];
    }
    let pool: f64 = by_feeder.values().sum();
    if pool <= 0.0 {
        return;
    }

    let takes = takes(members, &state.residual, pool, scheme, method);
    let consumed: f64 = takes.values().sum();
    let consumed = if consumed > pool { pool } else { consumed };
    for (id, take) in &takes {
        if *take <= 0.0 {
            continue;
        }
        *state.residual.get_mut(id).unwrap() -= take;
        for (feeder, amount) in &by_feeder {
            *state.received_from.entry((id.clone(), feeder.clone())).or_default() += take * amount / pool;
        }
    }
    let keep = ((pool - consumed) / pool).max(0.0);
    for c in contributors {
        *state.unsold.get_mut(&c.id).unwrap() *= keep;
    }
}

/// Allocates one interval by walking the two strategies literally.
pub fn reference_allocate(
    instance: &OracleInstance,
    strategy: Strategy,
    scheme: Scheme,
    method: Method,
) -> BTreeMap<ParticipantId, AllocationOutcome> {
    let everyone: Vec<&OracleParticipant> = instance.participants.iter().collect();
    let mut state = State {
        residual: everyone.iter().map(|p| (p.id.clone(), p.position.demand)).collect(),
        unsold: everyone.iter().map(|p| (p.id.clone(), p.position.surplus)).collect(),
        received_from: BTreeMap::new(),
    };

    if strategy == Strategy::FeederAware {
        let mut feeders: Vec<&FeederId> = everyone.iter().map(|p| &p.feeder).collect();
        feeders.sort();
        feeders.dedup();
        for feeder in feeders {
            let local: Vec<&OracleParticipant> = everyone.iter().copied().filter(|p| &p.feeder == feeder).collect();
            phase(&mut state, &local, &local, scheme, method);
        }
    }
    phase(&mut state, &everyone, &everyone, scheme, method);

    everyone
        .iter()
        .map(|p| {
            let mut same = 0.0;
            let mut other = 0.0;
            for ((recipient, source), kwh) in &state.received_from {
                if recipient == &p.id {
                    if source == &p.feeder {
                        same += kwh;
                    } else {
                        other += kwh;
                    }
                }
            }
            let export = state.unsold[&p.id];
            let outcome = AllocationOutcome {
                allocated_same: same,
                allocated_other: other,
                grid_import: (p.position.demand - same - other).max(0.0),
                sold_community: p.position.surplus - export,
                grid_export: export,
            };
            (p.id.clone(), outcome)
        })
        .collect()
}
