//! Broadcast medium: range-limited delivery, airtime accounting, and a
//! deterministic stand-in for MAC contention.
//!
//! Propagation is an ideal unit disk. A transmission occupies the interval
//! [sent_at + tx_delay, sent_at + tx_delay + airtime] at every receiver in
//! range; when two reception intervals overlap at the same receiver, both
//! packets are lost there (no capture). Protocols decorrelate their
//! transmissions with jitter instead of carrier sensing, which keeps the
//! medium stateless in time and the whole simulation replayable.

use crate::kernel::Seconds;
use crate::mobility::VehicleId;
use crate::road::Road;

pub type NodeId = VehicleId;

#[derive(Debug, Clone)]
pub struct RadioParams {
    /// Broadcast range R in meters.
    pub range_m: f64,
    pub bandwidth_bps: f64,
    pub tx_delay: Seconds,
    pub header_bytes: u32,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams { range_m: 250.0, bandwidth_bps: 1_000_000.0, tx_delay: 0.010, header_bytes: 25 }
    }
}

/// Broadcast scope: the full radio range R, or a shorter radius (the
/// speed-dependent congestion radius of the short-range local broadcast).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scope {
    R,
    Cr(f64),
}

impl Scope {
    pub fn radius(self, params: &RadioParams) -> f64 {
        match self {
            Scope::R => params.range_m,
            Scope::Cr(r) => r,
        }
    }
}

/// True iff the two positions are within `range` of each other (closed
/// interval, symmetric). For ring roads pass the ring distance instead.
pub fn in_range(a: f64, b: f64, range: f64) -> bool {
    (a - b).abs() <= range
}

/// Transmission duration of `size` bytes on the channel.
pub fn airtime(size_bytes: u32, bandwidth_bps: f64) -> Seconds {
    size_bytes as f64 * 8.0 / bandwidth_bps
}

/// Collision-free delivery set of one broadcast: every listed node within
/// the scope radius of the sender (boundary-aware), excluding the sender,
/// each delivered at sent_at + tx_delay + airtime.
#[allow(clippy::too_many_arguments)]
pub fn broadcast(
    sender: NodeId,
    sender_pos: f64,
    sent_at: Seconds,
    size_bytes: u32,
    scope: Scope,
    nodes: &[(NodeId, f64)],
    params: &RadioParams,
    road: &Road,
) -> Vec<(NodeId, Seconds)> {
    let radius = scope.radius(params);
    let deliver_at = sent_at + params.tx_delay + airtime(size_bytes, params.bandwidth_bps);
    nodes
        .iter()
        .filter(|(id, pos)| *id != sender && road.distance(*pos, sender_pos) <= radius)
        .map(|(id, _)| (*id, deliver_at))
        .collect()
}

/// One row of the channel-usage log: `(time, sender_position, bits)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRecord {
    pub time: Seconds,
    pub sender_position: f64,
    pub bits: u64,
}

/// Identifier for one (packet, receiver) reception attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptionId(pub usize);

#[derive(Debug, Clone, Copy)]
struct ActiveReception {
    start: Seconds,
    end: Seconds,
    id: usize,
}

/// Stateful medium: applies the collision rule across transmissions and
/// keeps the channel accounting. Transmissions must be submitted in
/// non-decreasing `sent_at` order (the kernel guarantees that).
pub struct Medium {
    pub params: RadioParams,
    pub collisions_enabled: bool,
    channel_log: Vec<ChannelRecord>,
    collided: Vec<bool>,
    active: Vec<(NodeId, Vec<ActiveReception>)>,
}

impl Medium {
    pub fn new(params: RadioParams, collisions_enabled: bool) -> Medium {
        Medium { params, collisions_enabled, channel_log: Vec::new(), collided: Vec::new(), active: Vec::new() }
    }

    /// Submit one broadcast. Returns the delivery set with reception ids;
    /// the caller schedules the deliveries and asks `is_lost` when each
    /// fires, since later overlapping transmissions may still kill them.
    #[allow(clippy::too_many_arguments)]
    pub fn transmit(
        &mut self,
        sender: NodeId,
        sender_pos: f64,
        sent_at: Seconds,
        size_bytes: u32,
        scope: Scope,
        nodes: &[(NodeId, f64)],
        road: &Road,
    ) -> Vec<(NodeId, Seconds, ReceptionId)> {
        debug_assert!(size_bytes >= self.params.header_bytes);
        self.channel_log.push(ChannelRecord {
            time: sent_at,
            sender_position: sender_pos,
            bits: size_bytes as u64 * 8,
        });
        let start = sent_at + self.params.tx_delay;
        let end = start + airtime(size_bytes, self.params.bandwidth_bps);
        let deliveries = broadcast(sender, sender_pos, sent_at, size_bytes, scope, nodes, &self.params, road);
        deliveries
            .into_iter()
            .map(|(receiver, deliver_at)| {
                let id = self.collided.len();
                self.collided.push(false);
                if self.collisions_enabled {
                    let slot = match self.active.iter_mut().find(|(n, _)| *n == receiver) {
                        Some((_, list)) => list,
                        None => {
                            self.active.push((receiver, Vec::new()));
                            &mut self.active.last_mut().expect("just pushed").1
                        }
                    };
                    slot.retain(|r| r.end > start);
                    for other in slot.iter() {
                        if other.start < end && start < other.end {
                            self.collided[other.id] = true;
                            self.collided[id] = true;
                        }
                    }
                    slot.push(ActiveReception { start, end, id });
                }
                (receiver, deliver_at, ReceptionId(id))
            })
            .collect()
    }

    pub fn is_lost(&self, id: ReceptionId) -> bool {
        self.collided[id.0]
    }

    pub fn channel_log(&self) -> &[ChannelRecord] {
        &self.channel_log
    }

    pub fn take_channel_log(&mut self) -> Vec<ChannelRecord> {
        std::mem::take(&mut self.channel_log)
    }
}
