//! Sharing coefficients and rank orders.
//!
//! The map-based functions are the public surface; the slice kernels beneath
//! them are what the interval allocator calls on its hot path. Slices are
//! always in participant-id order.

use std::collections::BTreeMap;

use crate::model::{Method, ParticipantId};

/// Fraction of a surplus pool assigned to each participant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoefficientVector {
    entries: BTreeMap<ParticipantId, f64>,
}

impl CoefficientVector {
    pub fn get(&self, id: &ParticipantId) -> Option<f64> {
        self.entries.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParticipantId, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn into_map(self) -> BTreeMap<ParticipantId, f64> {
        self.entries
    }
}

impl FromIterator<(ParticipantId, f64)> for CoefficientVector {
    fn from_iter<I: IntoIterator<Item = (ParticipantId, f64)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Participants in fill order, lowest demand first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RankOrder(pub Vec<ParticipantId>);

impl RankOrder {
    pub fn as_slice(&self) -> &[ParticipantId] {
        &self.0
    }
}

/// `1/n` for every slot.
pub fn fill_equal(out: &mut [f64]) {
    let share = 1.0 / out.len() as f64;
    out.fill(share);
}

/// `1/N_need` for every slot with positive demand, zero elsewhere. Returns the
/// number of needers.
pub fn fill_needers_equal(demands: &[f64], out: &mut [f64]) -> usize {
    let needers = demands.iter().filter(|&&d| d > 0.0).count();
    if needers == 0 {
        out.fill(0.0);
        return 0;
    }
    let share = 1.0 / needers as f64;
    for (o, &d) in out.iter_mut().zip(demands) {
        *o = if d > 0.0 { share } else { 0.0 };
    }
    needers
}

/// `d_i / Σ d`. Returns `false` (and zeroes `out`) when every demand is zero.
pub fn fill_proportional(demands: &[f64], out: &mut [f64]) -> bool {
    let total: f64 = demands.iter().sum();
    if total <= 0.0 {
        out.fill(0.0);
        return false;
    }
    for (o, &d) in out.iter_mut().zip(demands) {
        *o = d / total;
    }
    true
}

/// Slot indices sorted by ascending demand, ties by slot index. With
/// `skip_zero` the zero-demand slots are left out.
pub fn fill_rank(demands: &[f64], skip_zero: bool, out: &mut Vec<usize>) {
    out.clear();
    out.extend((0..demands.len()).filter(|&k| !skip_zero || demands[k] > 0.0));
    // Stable sort keeps index order for equal demands.
    out.sort_by(|&a, &b| demands[a].total_cmp(&demands[b]));
}

fn split(demands: &BTreeMap<ParticipantId, f64>) -> (Vec<&ParticipantId>, Vec<f64>) {
    demands.iter().map(|(id, &d)| (id, d)).unzip()
}

/// Every member of the pool gets `1/|pool|`.
pub fn static_equal(pool: &[ParticipantId]) -> CoefficientVector {
    let mut ids = pool.to_vec();
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        return CoefficientVector::default();
    }
    let mut weights = vec![0.0; ids.len()];
    fill_equal(&mut weights);
    ids.into_iter().zip(weights).collect()
}

/// `1/N_need` for every participant with positive current demand; others are
/// absent.
pub fn dynamic_equal(pool_demands: &BTreeMap<ParticipantId, f64>) -> CoefficientVector {
    let (ids, demands) = split(pool_demands);
    let mut weights = vec![0.0; ids.len()];
    fill_needers_equal(&demands, &mut weights);
    ids.into_iter()
        .zip(demands.iter().zip(weights))
        .filter(|(_, (&d, _))| d > 0.0)
        .map(|(id, (_, w))| (id.clone(), w))
        .collect()
}

/// Share of annual demand. Zero-demand participants are kept with weight 0;
/// an all-zero pool gives an empty vector.
pub fn static_proportional(annual_demands: &BTreeMap<ParticipantId, f64>) -> CoefficientVector {
    let (ids, demands) = split(annual_demands);
    let mut weights = vec![0.0; ids.len()];
    if !fill_proportional(&demands, &mut weights) {
        return CoefficientVector::default();
    }
    ids.into_iter().cloned().zip(weights).collect()
}

/// Share of current demand. Zero-demand participants are absent.
pub fn dynamic_proportional(pool_demands: &BTreeMap<ParticipantId, f64>) -> CoefficientVector {
    let (ids, demands) = split(pool_demands);
    let mut weights = vec![0.0; ids.len()];
    fill_proportional(&demands, &mut weights);
    ids.into_iter()
        .zip(demands.iter().zip(weights))
        .filter(|(_, (&d, _))| d > 0.0)
        .map(|(id, (_, w))| (id.clone(), w))
        .collect()
}

/// Ascending-demand order. Static orders rank everyone (annual demand); dynamic
/// orders drop participants with no current demand.
pub fn rank_order(demands: &BTreeMap<ParticipantId, f64>, method: Method) -> RankOrder {
    let (ids, values) = split(demands);
    let mut order = Vec::with_capacity(ids.len());
    fill_rank(&values, method == Method::Dynamic, &mut order);
    RankOrder(order.into_iter().map(|k| ids[k].clone()).collect())
}
