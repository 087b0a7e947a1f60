//! Per-node state machines for the data-dissemination protocols.
//!
//! * flooding — rebroadcast every new unit exactly once, as soon as possible
//! * MILE — every `update_interval`, broadcast a random subset of the
//!   locally known units filling the packet
//! * MILE on-demand — broadcast the id list of held units instead; supply a
//!   full unit only after a neighbor's advertisement showed it missing
//! * AutoCast — probabilistic initial flood (expected two forwarders per
//!   reception) combined with MILE-on-demand id exchange at a
//!   density-adaptive interval of n / p_ref
//!
//! The theoretical benchmark protocol has no node state; it lives in
//! [`crate::oracle`]. Handlers here are pure: they mutate their own state
//! and return actions for the surrounding simulation to execute.

use std::collections::{BTreeMap, BTreeSet};

use crate::kernel::Seconds;
use crate::radio::NodeId;
use crate::rng::RngStream;
use crate::units::{DataUnit, DataUnitId, ID_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Protocol {
    Flooding,
    Mile,
    MileOnDemand,
    AutoCast,
    Oracle,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Flooding => "flooding",
            Protocol::Mile => "mile",
            Protocol::MileOnDemand => "mile_od",
            Protocol::AutoCast => "autocast",
            Protocol::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Protocol> {
        Some(match s {
            "flooding" => Protocol::Flooding,
            "mile" => Protocol::Mile,
            "mile_od" => Protocol::MileOnDemand,
            "autocast" => Protocol::AutoCast,
            "oracle" => Protocol::Oracle,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MileMode {
    Plain,
    OnDemand,
}

#[derive(Debug, Clone)]
pub struct AutoCastParams {
    /// Desired broadcasts per second per neighborhood.
    pub p_ref: f64,
    /// Expected number of forwarders per reception.
    pub fwd_target: f64,
    /// Fraction of neighbors hearing a rebroadcast for the first time.
    pub novelty_fraction: f64,
    /// Lower bound on the update wait; keeps n -> 0 from busy-looping.
    pub floor_wait: Seconds,
    /// Smoothing factor of the neighbor estimator.
    pub ema_alpha: f64,
}

impl Default for AutoCastParams {
    fn default() -> Self {
        AutoCastParams { p_ref: 5.4, fwd_target: 2.0, novelty_fraction: 0.4, floor_wait: 0.25, ema_alpha: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct DisseminationParams {
    pub protocol: Protocol,
    /// Fixed broadcast interval of the MILE family.
    pub update_interval: Seconds,
    /// Capacity for ids + units in one update packet, excluding the radio
    /// header.
    pub max_payload: u32,
    pub flood_jitter_max: Seconds,
    pub autocast: AutoCastParams,
}

impl Default for DisseminationParams {
    fn default() -> Self {
        DisseminationParams {
            protocol: Protocol::AutoCast,
            update_interval: 2.0,
            max_payload: 1200,
            flood_jitter_max: 0.010,
            autocast: AutoCastParams::default(),
        }
    }
}

/// Probability with which a node with `n` estimated neighbors forwards a
/// freshly received data unit: fwd_target / (n * novelty_fraction), clamped
/// to [0, 1]; a node with no known neighbors always forwards.
pub fn forwarding_probability(n: f64, params: &AutoCastParams) -> f64 {
    if n <= 0.0 {
        return 1.0;
    }
    (params.fwd_target / (n * params.novelty_fraction)).clamp(0.0, 1.0)
}

/// Waiting time until the next periodic id broadcast: n / p_ref, floored.
pub fn rebroadcast_wait(n: f64, params: &AutoCastParams) -> Seconds {
    if n <= 0.0 {
        return params.floor_wait;
    }
    (n / params.p_ref).max(params.floor_wait)
}

/// What goes on the air.
#[derive(Debug, Clone, PartialEq)]
pub enum PacketBody {
    /// A single full unit, flooded.
    Flood { unit: DataUnit },
    /// Periodic update: advertised ids of held units plus supplied units.
    Update { ids: Vec<DataUnitId>, units: Vec<DataUnit> },
}

impl PacketBody {
    /// Wire size including the radio header.
    pub fn wire_bytes(&self, header_bytes: u32) -> u32 {
        match self {
            PacketBody::Flood { unit } => header_bytes + unit.wire_bytes(),
            PacketBody::Update { ids, units } => {
                header_bytes
                    + ID_BYTES * ids.len() as u32
                    + units.iter().map(|u| u.wire_bytes()).sum::<u32>()
            }
        }
    }
}

/// Instructions handed back to the simulation loop.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// The node stored this unit for the first time.
    Deliver(DataUnit),
    /// Broadcast `body` after `delay` (transmission jitter).
    SendAfter { delay: Seconds, body: PacketBody },
}

/// Dissemination state of one equipped node.
#[derive(Debug, Clone)]
pub struct NodeProtocolState {
    pub node: NodeId,
    known: BTreeMap<DataUnitId, DataUnit>,
    /// Every id ever heard, including ids whose payload is still missing.
    known_ids: BTreeSet<DataUnitId>,
    /// Units owed to neighbors, oldest request first.
    pending_supply: Vec<DataUnitId>,
    /// Exponentially smoothed one-hop neighborhood size.
    pub neighbor_estimate: f64,
    window_senders: BTreeSet<NodeId>,
    pub next_update_at: Seconds,
}

impl NodeProtocolState {
    pub fn new(node: NodeId) -> NodeProtocolState {
        NodeProtocolState {
            node,
            known: BTreeMap::new(),
            known_ids: BTreeSet::new(),
            pending_supply: Vec::new(),
            neighbor_estimate: 0.0,
            window_senders: BTreeSet::new(),
            next_update_at: 0.0,
        }
    }

    pub fn knows(&self, id: DataUnitId) -> bool {
        self.known.contains_key(&id)
    }

    pub fn known_count(&self) -> usize {
        self.known.len()
    }

    /// Expired units disappear from storage and the supply queue. Bare ids
    /// stay in `known_ids`; they carry no expiry of their own and only
    /// suppress duplicate bookkeeping.
    pub fn purge_expired(&mut self, now: Seconds) {
        self.known.retain(|_, u| u.alive_at(now));
        let known = &self.known;
        self.pending_supply.retain(|id| known.contains_key(id));
    }

    /// Track a heard transmitter for the neighborhood estimator.
    pub fn note_sender(&mut self, sender: NodeId) {
        if sender != self.node {
            self.window_senders.insert(sender);
        }
    }

    /// A unit created at this node. Flood-family protocols broadcast it
    /// immediately; MILE lets the periodic packets carry it.
    pub fn originate(&mut self, unit: DataUnit, protocol: Protocol, now: Seconds) -> Vec<Action> {
        self.purge_expired(now);
        if !unit.alive_at(now) || self.known.contains_key(&unit.id) {
            return Vec::new();
        }
        self.known_ids.insert(unit.id);
        self.known.insert(unit.id, unit.clone());
        let mut actions = vec![Action::Deliver(unit.clone())];
        match protocol {
            Protocol::Flooding | Protocol::AutoCast => {
                actions.push(Action::SendAfter { delay: 0.0, body: PacketBody::Flood { unit } });
            }
            Protocol::Mile | Protocol::MileOnDemand | Protocol::Oracle => {}
        }
        actions
    }

    /// Flooding reception: store-and-forward exactly once per unit.
    pub fn flooding_on_receive(
        &mut self,
        unit: DataUnit,
        params: &DisseminationParams,
        now: Seconds,
        rng: &mut RngStream,
    ) -> Vec<Action> {
        self.purge_expired(now);
        if !unit.alive_at(now) || self.known.contains_key(&unit.id) {
            return Vec::new();
        }
        self.known_ids.insert(unit.id);
        self.known.insert(unit.id, unit.clone());
        vec![
            Action::Deliver(unit.clone()),
            Action::SendAfter {
                delay: rng.uniform_in(0.0, params.flood_jitter_max),
                body: PacketBody::Flood { unit },
            },
        ]
    }

    /// Periodic MILE broadcast.
    ///
    /// Plain mode fills the packet with a uniformly random subset of held
    /// units and stays silent when it holds nothing. On-demand mode always
    /// advertises the complete id list of held units, supplies everything
    /// owed first, and only then fills randomly.
    pub fn mile_on_timer(
        &mut self,
        mode: MileMode,
        max_payload: u32,
        now: Seconds,
        rng: &mut RngStream,
    ) -> Option<PacketBody> {
        self.purge_expired(now);
        match mode {
            MileMode::Plain => {
                if self.known.is_empty() {
                    return None;
                }
                let mut candidates: Vec<DataUnitId> = self.known.keys().copied().collect();
                rng.shuffle(&mut candidates);
                let units = self.fill_units(&candidates, &[], max_payload);
                Some(PacketBody::Update { ids: Vec::new(), units })
            }
            MileMode::OnDemand => {
                let ids: Vec<DataUnitId> = self.known.keys().copied().collect();
                let id_cost = ID_BYTES * ids.len() as u32;
                let budget = max_payload.saturating_sub(id_cost);
                let owed: Vec<DataUnitId> = std::mem::take(&mut self.pending_supply);
                let mut candidates: Vec<DataUnitId> =
                    self.known.keys().copied().filter(|id| !owed.contains(id)).collect();
                rng.shuffle(&mut candidates);
                let units = self.fill_units(&owed, &candidates, budget);
                // Whatever did not fit stays owed.
                let sent: BTreeSet<DataUnitId> = units.iter().map(|u| u.id).collect();
                self.pending_supply = owed.into_iter().filter(|id| !sent.contains(id)).collect();
                Some(PacketBody::Update { ids, units })
            }
        }
    }

    fn fill_units(&self, first: &[DataUnitId], then: &[DataUnitId], budget: u32) -> Vec<DataUnit> {
        let mut used = 0u32;
        let mut out = Vec::new();
        for id in first.iter().chain(then) {
            if let Some(u) = self.known.get(id) {
                let cost = u.wire_bytes();
                if used + cost <= budget {
                    used += cost;
                    out.push(u.clone());
                }
            }
        }
        out
    }

    /// MILE reception: store new units; in on-demand mode remember what the
    /// sender is missing so the next update supplies it. No transmission
    /// ever happens directly from here.
    pub fn mile_on_receive(&mut self, body: &PacketBody, mode: MileMode, now: Seconds) -> Vec<Action> {
        self.purge_expired(now);
        let mut actions = Vec::new();
        match body {
            PacketBody::Flood { unit } => {
                // MILE networks do not flood, but stay liberal in what we accept.
                actions.extend(self.store_unit(unit, now));
            }
            PacketBody::Update { ids, units } => {
                for unit in units {
                    actions.extend(self.store_unit(unit, now));
                }
                if mode == MileMode::OnDemand {
                    for id in ids {
                        self.known_ids.insert(*id);
                    }
                    let advertised: BTreeSet<DataUnitId> = ids.iter().copied().collect();
                    for id in self.known.keys() {
                        if !advertised.contains(id) && !self.pending_supply.contains(id) {
                            self.pending_supply.push(*id);
                        }
                    }
                }
            }
        }
        actions
    }

    /// AutoCast reception: MILE-on-demand bookkeeping plus the probabilistic
    /// flooding branch for genuinely new units.
    pub fn autocast_on_receive(
        &mut self,
        body: &PacketBody,
        params: &DisseminationParams,
        now: Seconds,
        rng: &mut RngStream,
    ) -> Vec<Action> {
        self.purge_expired(now);
        let fresh: Vec<DataUnit> = match body {
            PacketBody::Flood { unit } => vec![unit.clone()],
            PacketBody::Update { units, .. } => units.clone(),
        }
        .into_iter()
        .filter(|u| u.alive_at(now) && !self.known.contains_key(&u.id))
        .collect();

        let mut actions = self.mile_on_receive(body, MileMode::OnDemand, now);
        for unit in fresh {
            if rng.bernoulli(forwarding_probability(self.neighbor_estimate, &params.autocast)) {
                actions.push(Action::SendAfter {
                    delay: rng.uniform_in(0.0, params.flood_jitter_max),
                    body: PacketBody::Flood { unit },
                });
            }
        }
        actions
    }

    /// AutoCast periodic update: advertise held ids, supply owed units (no
    /// random fill: once the neighborhood is consistent, these packets carry
    /// ids only), refresh the neighbor estimate, and report when to fire
    /// next.
    pub fn autocast_on_timer(
        &mut self,
        params: &DisseminationParams,
        now: Seconds,
    ) -> (PacketBody, Seconds) {
        self.purge_expired(now);
        let heard = self.window_senders.len() as f64;
        self.window_senders.clear();
        let a = params.autocast.ema_alpha;
        self.neighbor_estimate = a * heard + (1.0 - a) * self.neighbor_estimate;

        let ids: Vec<DataUnitId> = self.known.keys().copied().collect();
        let budget = params.max_payload.saturating_sub(ID_BYTES * ids.len() as u32);
        let owed: Vec<DataUnitId> = std::mem::take(&mut self.pending_supply);
        let units = self.fill_units(&owed, &[], budget);
        let sent: BTreeSet<DataUnitId> = units.iter().map(|u| u.id).collect();
        self.pending_supply = owed.into_iter().filter(|id| !sent.contains(id)).collect();

        let next = now + rebroadcast_wait(self.neighbor_estimate, &params.autocast);
        self.next_update_at = next;
        (PacketBody::Update { ids, units }, next)
    }

    fn store_unit(&mut self, unit: &DataUnit, now: Seconds) -> Option<Action> {
        if !unit.alive_at(now) {
            return None;
        }
        self.known_ids.insert(unit.id);
        if self.known.contains_key(&unit.id) {
            return None;
        }
        self.known.insert(unit.id, unit.clone());
        Some(Action::Deliver(unit.clone()))
    }
}
