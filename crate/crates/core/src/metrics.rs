//! The evaluation quantities: channel usage per km, dissemination speed,
//! delivery ratio, and instantaneous network partitions. Everything here is
//! post-processing over immutable logs.

use std::collections::{BTreeMap, BTreeSet};

use crate::kernel::Seconds;
use crate::radio::{ChannelRecord, NodeId};
use crate::road::Road;
use crate::units::DataUnitId;

/// First delivery of one unit at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryEvent {
    pub unit: DataUnitId,
    pub node: NodeId,
    /// Node position at the moment of delivery.
    pub position: f64,
    pub time: Seconds,
}

/// Aggregated figures for one (protocol, penetration, concurrent units)
/// cell of the experiment matrix. Undefined quantities stay `None` and are
/// reported as absent, never as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub protocol: String,
    pub penetration: f64,
    pub concurrent_units: u32,
    pub channel_kbit_s_km: f64,
    pub speed_kmh: Option<f64>,
    pub delivery_ratio: Option<f64>,
}

impl MetricSeries {
    pub const CSV_HEADER: &'static str =
        "protocol,penetration,concurrent_units,channel_kbit_s_km,speed_kmh,delivery_ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.protocol,
            self.penetration,
            self.concurrent_units,
            self.channel_kbit_s_km,
            self.speed_kmh.map(|v| v.to_string()).unwrap_or_default(),
            self.delivery_ratio.map(|v| v.to_string()).unwrap_or_default(),
        )
    }
}

/// Transmitted bits per second per km of road: sum over the window divided
/// by window length and road length, in kbit/s/km.
pub fn channel_usage_per_km(
    log: &[ChannelRecord],
    window_start: Seconds,
    window: Seconds,
    road_length_km: f64,
) -> f64 {
    assert!(window > 0.0, "window must be positive");
    let bits: u64 = log
        .iter()
        .filter(|r| r.time >= window_start && r.time < window_start + window)
        .map(|r| r.bits)
        .sum();
    bits as f64 / window / road_length_km / 1000.0
}

/// Mean dissemination speed of one unit in km/h: per delivery the covered
/// distance over the elapsed time, averaged over deliveries. Deliveries at
/// the origin in zero time are excluded; `None` if nothing remains.
pub fn unit_dissemination_speed(
    deliveries: &[DeliveryEvent],
    origin_position: f64,
    origin_time: Seconds,
    road: &Road,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u32;
    for d in deliveries {
        let dist = road.distance(d.position, origin_position);
        let dt = d.time - origin_time;
        if dt <= 0.0 || dist <= 0.0 {
            continue; // degenerate 0/0 at the origin
        }
        sum += dist / dt * 3.6;
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(sum / n as f64)
    }
}

/// Protocol-level figure: mean over units of the per-unit mean speed.
pub fn dissemination_speed(per_unit: &[Option<f64>]) -> Option<f64> {
    let speeds: Vec<f64> = per_unit.iter().flatten().copied().collect();
    if speeds.is_empty() {
        None
    } else {
        Some(speeds.iter().sum::<f64>() / speeds.len() as f64)
    }
}

/// Delivered fraction of the eligible (unit, node) pairs; `None` when the
/// eligible set is empty.
pub fn delivery_ratio(
    deliveries: &[DeliveryEvent],
    eligible: &BTreeSet<(DataUnitId, NodeId)>,
) -> Option<f64> {
    if eligible.is_empty() {
        return None;
    }
    let hit = deliveries.iter().filter(|d| eligible.contains(&(d.unit, d.node))).count();
    Some(hit as f64 / eligible.len() as f64)
}

/// Connected components of the unit-disk graph over the given equipped
/// nodes. On a line (and on a ring) two nodes are connected exactly when a
/// chain of hops of length <= r links them, so a sorted sweep suffices.
pub fn partitions(nodes: &[(NodeId, f64)], r: f64, road: &Road) -> Vec<Vec<NodeId>> {
    if nodes.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<(NodeId, f64)> = nodes.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut components: Vec<Vec<NodeId>> = Vec::new();
    let mut current = vec![sorted[0].0];
    for w in sorted.windows(2) {
        if w[1].1 - w[0].1 <= r {
            current.push(w[1].0);
        } else {
            components.push(std::mem::take(&mut current));
            current.push(w[1].0);
        }
    }
    components.push(current);
    // A ring can close the gap between the last and first component.
    if components.len() > 1 && road.distance(sorted[0].1, sorted.last().unwrap().1) <= r {
        let last = components.pop().unwrap();
        components[0].splice(0..0, last);
    }
    for c in components.iter_mut() {
        c.sort_unstable();
    }
    components
}

/// Per-unit detail row written next to results.csv.
#[derive(Debug, Clone)]
pub struct UnitDetail {
    pub protocol: String,
    pub penetration: f64,
    pub concurrent_units: u32,
    pub seed: u64,
    pub unit: DataUnitId,
    pub created_at: Seconds,
    pub eligible: usize,
    pub delivered: usize,
    pub mean_speed_kmh: Option<f64>,
}

impl UnitDetail {
    pub const CSV_HEADER: &'static str =
        "protocol,penetration,concurrent_units,seed,unit,created_at,eligible,delivered,mean_speed_kmh";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.protocol,
            self.penetration,
            self.concurrent_units,
            self.seed,
            self.unit,
            self.created_at,
            self.eligible,
            self.delivered,
            self.mean_speed_kmh.map(|v| v.to_string()).unwrap_or_default(),
        )
    }
}

/// Group delivery events by unit id.
pub fn deliveries_by_unit(events: &[DeliveryEvent]) -> BTreeMap<DataUnitId, Vec<DeliveryEvent>> {
    let mut map: BTreeMap<DataUnitId, Vec<DeliveryEvent>> = BTreeMap::new();
    for e in events {
        map.entry(e.unit).or_default().push(*e);
    }
    map
}
