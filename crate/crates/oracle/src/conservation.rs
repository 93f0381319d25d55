use std::fmt;

use ecshare_core::model::{approx_eq, approx_le};
use ecshare_core::{AllocationOutcome, NetPosition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NegativeField,
    /// More allocated than the participant demanded.
    OverAllocation,
    /// `grid_import != demand - allocated`.
    ImportMismatch,
    /// `sold + export != surplus`.
    SaleMismatch,
    /// Allocations and sales differ across the community.
    CommunityImbalance,
    LengthMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationViolation {
    pub interval: usize,
    /// `None` for community-level identities.
    pub participant: Option<usize>,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for ConservationViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "interval {}", self.interval)?;
        if let Some(p) = self.participant {
            write!(f, ", participant #{p}")?;
        }
        write!(f, ": {:?}: {}", self.kind, self.detail)
    }
}

/// Checks one interval. Each participant yields at most one violation, the
/// first in [`ViolationKind`] order. The community balance is only checked
/// once every participant passes, so one corrupted field is one violation.
pub fn check_interval(
    interval: usize,
    positions: &[NetPosition],
    outcomes: &[AllocationOutcome],
) -> Vec<ConservationViolation> {
    let mut out = Vec::new();
    let violation = |participant, kind, detail: String| ConservationViolation {
        interval,
        participant,
        kind,
        detail,
    };
    if positions.len() != outcomes.len() {
        out.push(violation(
            None,
            ViolationKind::LengthMismatch,
            format!("{} positions vs {} outcomes", positions.len(), outcomes.len()),
        ));
        return out;
    }

    let mut allocated_total = 0.0;
    let mut sold_total = 0.0;
    for (i, (p, o)) in positions.iter().zip(outcomes).enumerate() {
        let allocated = o.allocated_same + o.allocated_other;
        allocated_total += allocated;
        sold_total += o.sold_community;
        let fields = [
            o.allocated_same,
            o.allocated_other,
            o.grid_import,
            o.sold_community,
            o.grid_export,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            out.push(violation(Some(i), ViolationKind::NegativeField, format!("{o:?}")));
        } else if !approx_le(allocated, p.demand) {
            out.push(violation(
                Some(i),
                ViolationKind::OverAllocation,
                format!("allocated {allocated} > demand {}", p.demand),
            ));
        } else if !approx_eq(o.grid_import, p.demand - allocated) {
            out.push(violation(
                Some(i),
                ViolationKind::ImportMismatch,
                format!(
                    "import {} != demand {} - allocated {allocated}",
                    o.grid_import, p.demand
                ),
            ));
        } else if !approx_eq(o.sold_community + o.grid_export, p.surplus) {
            out.push(violation(
                Some(i),
                ViolationKind::SaleMismatch,
                format!(
                    "sold {} + export {} != surplus {}",
                    o.sold_community, o.grid_export, p.surplus
                ),
            ));
        }
    }
    if out.is_empty() && !approx_eq(allocated_total, sold_total) {
        out.push(violation(
            None,
            ViolationKind::CommunityImbalance,
            format!("allocated {allocated_total} != sold {sold_total}"),
        ));
    }
    out
}

/// Checks a stream of `(positions, outcomes)` intervals.
pub fn check_conservation<'a, I>(intervals: I) -> Vec<ConservationViolation>
where
    I: IntoIterator<Item = (&'a [NetPosition], &'a [AllocationOutcome])>,
{
    intervals
        .into_iter()
        .enumerate()
        .flat_map(|(t, (p, o))| check_interval(t, p, o))
        .collect()
}
