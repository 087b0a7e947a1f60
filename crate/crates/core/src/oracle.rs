//! The theoretical benchmark protocol.
//!
//! Unlimited transmission rate, light-speed propagation, and perfect
//! knowledge: a data unit reaches a node the instant a space-time path of
//! radio contacts and carrier movement exists. Computed by post-processing
//! a recorded trace: trajectories are piecewise linear between snapshots,
//! pairwise radio-contact intervals are solved exactly per segment, and a
//! foremost-arrival search spreads information instantaneously across every
//! momentary connected component while carriers hold it in between.

use std::collections::BTreeMap;

use crate::kernel::Seconds;
use crate::mobility::History;
use crate::radio::NodeId;
use crate::road::{Boundary, Road};
use crate::units::DataUnit;

/// One maximal interval during which a node pair is within radio range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub a: usize,
    pub b: usize,
    pub start: Seconds,
    pub end: Seconds,
}

/// All pairwise contact intervals among the `equipped` vehicle indices of
/// the trace, at range `r`. Indices refer to `history.ids` positions.
pub fn contact_intervals(history: &History, road: &Road, equipped: &[usize], r: f64) -> Vec<Contact> {
    let mut contacts = Vec::new();
    let steps = history.snapshots();
    if steps < 1 {
        return contacts;
    }
    for (ai, &a) in equipped.iter().enumerate() {
        for &b in &equipped[ai + 1..] {
            let mut open: Option<(Seconds, Seconds)> = None;
            for k in 0..steps.saturating_sub(1) {
                let t0 = history.time_of(k);
                let t1 = history.time_of(k + 1);
                for (s, e) in segment_in_range(history, road, a, b, k, r) {
                    let (s, e) = (t0 + s * (t1 - t0), t0 + e * (t1 - t0));
                    match open {
                        Some((os, oe)) if s <= oe + 1e-9 => open = Some((os, e.max(oe))),
                        Some((os, oe)) => {
                            contacts.push(Contact { a, b, start: os, end: oe });
                            open = Some((s, e));
                        }
                        None => open = Some((s, e)),
                    }
                }
            }
            if let Some((os, oe)) = open {
                contacts.push(Contact { a, b, start: os, end: oe });
            }
        }
    }
    contacts
}

/// Fractions of segment `k` during which |pos_a - pos_b| <= r, as 0..=1
/// sub-intervals. On a ring the displacement is considered modulo the road
/// length in both directions.
fn segment_in_range(
    history: &History,
    road: &Road,
    a: usize,
    b: usize,
    k: usize,
    r: f64,
) -> Vec<(f64, f64)> {
    let unwrap = |i: usize| -> (f64, f64) {
        let p0 = history.positions[i][k];
        let p1 = history.positions[i][k + 1];
        let mut d = p1 - p0;
        if road.boundary == Boundary::Ring {
            if d > road.length_m / 2.0 {
                d -= road.length_m;
            } else if d < -road.length_m / 2.0 {
                d += road.length_m;
            }
        }
        (p0, d)
    };
    let (a0, da) = unwrap(a);
    let (b0, db) = unwrap(b);
    // delta(t) = (a0 - b0) + (da - db) * t for t in [0, 1].
    let c = a0 - b0;
    let m = da - db;
    let offsets: &[f64] = match road.boundary {
        Boundary::Open => &[0.0],
        Boundary::Ring => &[-road.length_m, 0.0, road.length_m],
    };
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for &off in offsets {
        // |c + off + m t| <= r
        let lo = -r - (c + off);
        let hi = r - (c + off);
        let (mut s, mut e) = if m.abs() < 1e-12 {
            if (c + off).abs() <= r {
                (0.0, 1.0)
            } else {
                continue;
            }
        } else {
            let (x, y) = (lo / m, hi / m);
            (x.min(y), x.max(y))
        };
        s = s.max(0.0);
        e = e.min(1.0);
        if s <= e {
            spans.push((s, e));
        }
    }
    spans.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Merge the wrap candidates if they touch.
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for span in spans {
        match merged.last_mut() {
            Some(last) if span.0 <= last.1 + 1e-12 => last.1 = last.1.max(span.1),
            _ => merged.push(span),
        }
    }
    merged
}

/// Earliest-delivery map of the theoretical protocol for one unit.
///
/// `origin` is the trace index of the creating vehicle. Spread stops at the
/// unit's expiry. The map covers every equipped node reached, keyed by
/// vehicle id, with the origin delivered at creation time.
pub fn oracle_deliveries(
    history: &History,
    road: &Road,
    equipped: &[usize],
    unit: &DataUnit,
    origin: usize,
    r: f64,
) -> BTreeMap<NodeId, Seconds> {
    let contacts = contact_intervals(history, road, equipped, r);
    oracle_deliveries_with_contacts(history, &contacts, equipped, unit, origin)
}

/// Same as [`oracle_deliveries`] but reusing precomputed contacts (the
/// contact set is unit-independent).
pub fn oracle_deliveries_with_contacts(
    history: &History,
    contacts: &[Contact],
    equipped: &[usize],
    unit: &DataUnit,
    origin: usize,
) -> BTreeMap<NodeId, Seconds> {
    let deadline = unit.expires_at();
    let t0 = unit.created_at;
    // Adjacency over trace indices.
    let mut adj: BTreeMap<usize, Vec<(usize, Seconds, Seconds)>> = BTreeMap::new();
    for c in contacts {
        adj.entry(c.a).or_default().push((c.b, c.start, c.end));
        adj.entry(c.b).or_default().push((c.a, c.start, c.end));
    }
    let mut informed: BTreeMap<usize, Seconds> = BTreeMap::new();
    informed.insert(origin, t0);
    // Dijkstra-style foremost arrival: earliest times pop first.
    let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<(OrdF64, usize)>> =
        std::collections::BinaryHeap::new();
    heap.push(std::cmp::Reverse((OrdF64(t0), origin)));
    while let Some(std::cmp::Reverse((OrdF64(t), u))) = heap.pop() {
        if informed.get(&u).copied().unwrap_or(f64::INFINITY) < t {
            continue;
        }
        if let Some(neigh) = adj.get(&u) {
            for &(v, start, end) in neigh {
                if end < t || start > deadline {
                    continue;
                }
                let reach = start.max(t);
                if reach > deadline {
                    continue;
                }
                if reach < informed.get(&v).copied().unwrap_or(f64::INFINITY) {
                    informed.insert(v, reach);
                    heap.push(std::cmp::Reverse((OrdF64(reach), v)));
                }
            }
        }
    }
    let _ = equipped;
    informed.into_iter().map(|(idx, t)| (history.ids[idx], t)).collect()
}

#[derive(PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
