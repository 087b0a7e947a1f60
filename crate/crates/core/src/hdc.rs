//! Hovering data clouds at the back and front of a traffic jam.
//!
//! Every equipped vehicle runs the same state machine. Time is divided into
//! slots: a short presence sub-interval in which each processor beacons its
//! position within the congestion radius, and a longer telemetry
//! sub-interval in which (only) boundary candidates broadcast position,
//! speed and neighbor flags within full radio range. Receivers accumulate
//! the slot's telemetry, derive the rearmost and foremost congested
//! positions, and when they sit near a boundary themselves, promote to an
//! active HDC carrier. Active back carriers announce the jam back to
//! followers; active front carriers announce the front location, which
//! participants relay backwards. Carriers that drift away from the boundary
//! drop the role and approaching processors pick it up, so the cloud
//! outlives any individual vehicle.
//!
//! Handlers are pure: they mutate one processor's variables and return the
//! broadcasts and timer updates for the surrounding simulation to execute.

use std::collections::VecDeque;

use thiserror::Error;

use crate::kernel::Seconds;
use crate::radio::{NodeId, Scope};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdcStatus {
    Idle,
    Joining,
    Active,
}

impl HdcStatus {
    pub fn name(self) -> &'static str {
        match self {
            HdcStatus::Idle => "idle",
            HdcStatus::Joining => "joining",
            HdcStatus::Active => "active",
        }
    }
}

/// Congestion radius CR as a function of the observer's current speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrModel {
    Constant(f64),
    /// max(min_m, speed * headway_s): the two-second rule with a floor.
    Headway { min_m: f64, headway_s: f64 },
}

impl CrModel {
    pub fn radius(self, speed: f64) -> f64 {
        match self {
            CrModel::Constant(r) => r,
            CrModel::Headway { min_m, headway_s } => (speed * headway_s).max(min_m),
        }
    }
}

/// Congestion velocity CV as a function of the gap between two vehicles:
/// slower than appropriate for the distance suggests congestion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CvModel {
    Constant(f64),
    /// min(gap / headway_s, cap_mps).
    GapHeadway { headway_s: f64, cap_mps: f64 },
}

impl CvModel {
    pub fn threshold(self, gap: f64) -> f64 {
        match self {
            CvModel::Constant(v) => v,
            CvModel::GapHeadway { headway_s, cap_mps } => (gap / headway_s).min(cap_mps),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HdcParams {
    pub cr: CrModel,
    pub cv: CvModel,
    /// Absolute speed gate: idle non-participants faster than this stay
    /// silent in the telemetry sub-interval.
    pub cv_max: f64,
    /// Attachment radius: processors within it of an HDC location may carry
    /// the HDC.
    pub r_hdc: f64,
    /// Local-broadcast latency bound: a received message is processed
    /// exactly this long after arrival.
    pub d: Seconds,
    pub t_smdata: Seconds,
    pub t_data: Seconds,
    pub t_information: Seconds,
    pub t_aheadinfo: Seconds,
    /// Settling bound: boundary triggers are suppressed until the slot's
    /// telemetry broadcasts have had time to spread.
    pub t_ab: Seconds,
    /// Per-transmission send jitter, the stand-in for MAC contention.
    pub jitter_max: Seconds,
    /// Minimum vehicle spacing assumed by the env capacity formula.
    pub min_distance_m: f64,
    /// Initial opaque HDC payloads installed on fresh activation.
    pub v0_back: Vec<u8>,
    pub v0_front: Vec<u8>,
}

impl Default for HdcParams {
    fn default() -> Self {
        HdcParams {
            cr: CrModel::Headway { min_m: 15.0, headway_s: 2.0 },
            cv: CvModel::GapHeadway { headway_s: 2.0, cap_mps: 16.7 },
            cv_max: 16.7,
            r_hdc: 250.0,
            d: 0.05,
            t_smdata: 0.2,
            t_data: 1.0,
            t_information: 1.0,
            t_aheadinfo: 1.0,
            t_ab: 0.01,
            jitter_max: 0.02,
            min_distance_m: 7.5,
            v0_back: b"hdc-back-v0".to_vec(),
            v0_front: b"hdc-front-v0".to_vec(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HdcError {
    #[error("hdc parameter violation: {0}")]
    BadParam(&'static str),
    #[error("buffered-message timer fired with an empty buffer")]
    EmptyBuffer,
}

impl HdcParams {
    pub fn validate(&self) -> Result<(), HdcError> {
        if !(self.d > 0.0 && self.t_smdata > 0.0 && self.t_data > 0.0) {
            return Err(HdcError::BadParam("d, t_smdata, t_data must be positive"));
        }
        if self.d >= self.t_smdata {
            return Err(HdcError::BadParam("d must be smaller than t_smdata"));
        }
        if !(self.t_information > 0.0 && self.t_aheadinfo > 0.0 && self.t_ab >= 0.0) {
            return Err(HdcError::BadParam("timer periods must be positive"));
        }
        if !(self.r_hdc > 0.0 && self.min_distance_m > 0.0) {
            return Err(HdcError::BadParam("radii must be positive"));
        }
        Ok(())
    }

    /// Bounded size of the env table: 3 * ceil(2R / minimum distance).
    pub fn env_capacity(&self, radio_range_m: f64) -> usize {
        3 * ((2.0 * radio_range_m / self.min_distance_m).ceil() as usize)
    }
}

/// Messages of the HDC protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum HdcMessage {
    /// Short-range presence beacon (scope: congestion radius).
    Presence { ident: NodeId, l: f64, g: f64 },
    /// Telemetry within full radio range: position, speed, neighbor flags.
    Telemetry { ident: NodeId, l: f64, g: f64, behind: bool, ahead: bool },
    /// Back-HDC announcement toward followers.
    JamBack { l: f64, front_location: f64, g: f64 },
    /// Front-HDC location, relayed backwards through the jam.
    FrontLocation { l_front: f64 },
}

impl HdcMessage {
    pub fn wire_bytes(&self, header_bytes: u32) -> u32 {
        header_bytes
            + match self {
                HdcMessage::Presence { .. } => 24,
                HdcMessage::Telemetry { .. } => 26,
                HdcMessage::JamBack { .. } => 24,
                HdcMessage::FrontLocation { .. } => 8,
            }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HdcMessage::Presence { .. } => "presence",
            HdcMessage::Telemetry { .. } => "telemetry",
            HdcMessage::JamBack { .. } => "jam_back",
            HdcMessage::FrontLocation { .. } => "front_location",
        }
    }
}

/// Per-processor timers. All but `PendingMessage` are single-slot: arming
/// replaces a pending timer of the same kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdcTimer {
    /// Start of the presence sub-interval.
    Presence,
    /// Start of the telemetry sub-interval.
    Telemetry,
    /// A buffered message becomes due (one per reception).
    PendingMessage,
    /// Periodic back-HDC announcement.
    BackAnnounce,
    /// Periodic front-HDC announcement.
    FrontAnnounce,
}

impl HdcTimer {
    pub fn name(self) -> &'static str {
        match self {
            HdcTimer::Presence => "presence",
            HdcTimer::Telemetry => "telemetry",
            HdcTimer::PendingMessage => "pending",
            HdcTimer::BackAnnounce => "back_announce",
            HdcTimer::FrontAnnounce => "front_announce",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvEntry {
    pub ident: NodeId,
    pub l: f64,
    pub g: f64,
    pub behind: bool,
    pub ahead: bool,
}

/// Everything one processor remembers.
#[derive(Debug, Clone)]
pub struct HdcVars {
    pub status_back: HdcStatus,
    pub status_front: HdcStatus,
    /// Announced HDC locations (valid while the respective status is held).
    pub location_back: f64,
    pub location_front: f64,
    /// Rearmost / foremost congested positions derived this slot.
    pub jam_back: f64,
    pub jam_front: f64,
    pub back_holder: NodeId,
    pub front_holder: NodeId,
    /// Neighbor flags of the current back- and front-boundary holders.
    pub back_flags: (bool, bool),
    pub front_flags: (bool, bool),
    /// Own neighbor flags from presence beacons: someone behind / ahead
    /// within the congestion radius.
    pub heard_behind: bool,
    pub heard_ahead: bool,
    /// Previous-slot copies consumed by fresh activations.
    pub prev_back_ahead: bool,
    pub prev_front_behind: bool,
    pub congestion_counter: u32,
    pub participant: bool,
    pub participant_prev: bool,
    /// Pair-scan already counted this slot.
    pub counted_this_slot: bool,
    /// Front-HDC information has been received (as opposed to locally
    /// estimated).
    pub front_info_received: bool,
    pub front_hdc_location: f64,
    /// Start of the current telemetry slot.
    pub slot_start: Seconds,
    env: VecDeque<EnvEntry>,
    env_capacity: usize,
    buffer: VecDeque<(HdcMessage, Seconds)>,
    pub state_payload: Vec<u8>,
    /// Relay duplicate suppression: (message key, last relay time).
    relay_seen: Vec<(u64, Seconds)>,
}

impl HdcVars {
    pub fn new(env_capacity: usize) -> HdcVars {
        HdcVars {
            status_back: HdcStatus::Idle,
            status_front: HdcStatus::Idle,
            location_back: 0.0,
            location_front: 0.0,
            jam_back: f64::INFINITY,
            jam_front: 0.0,
            back_holder: 0,
            front_holder: 0,
            back_flags: (false, false),
            front_flags: (false, false),
            heard_behind: false,
            heard_ahead: false,
            prev_back_ahead: false,
            prev_front_behind: false,
            congestion_counter: 0,
            participant: false,
            participant_prev: false,
            counted_this_slot: false,
            front_info_received: false,
            front_hdc_location: 0.0,
            slot_start: 0.0,
            env: VecDeque::new(),
            env_capacity,
            buffer: VecDeque::new(),
            state_payload: Vec::new(),
            relay_seen: Vec::new(),
        }
    }

    pub fn env(&self) -> impl Iterator<Item = &EnvEntry> {
        self.env.iter()
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }
}

/// A status transition, for the event log and the golden traces.
#[derive(Debug, Clone, PartialEq)]
pub struct HdcTransition {
    pub field: &'static str,
    pub from: HdcStatus,
    pub to: HdcStatus,
}

/// What a handler wants done.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HdcOutput {
    pub broadcasts: Vec<(HdcMessage, Scope)>,
    /// (timer, fire time); replaces any pending timer of the same kind
    /// except PendingMessage, which queues.
    pub timers: Vec<(HdcTimer, Seconds)>,
    pub transitions: Vec<HdcTransition>,
}

impl HdcOutput {
    fn transition(&mut self, field: &'static str, from: HdcStatus, to: HdcStatus) {
        if from != to {
            self.transitions.push(HdcTransition { field, from, to });
        }
    }
}

fn next_multiple(interval: Seconds, now: Seconds) -> Seconds {
    crate::kernel::next_multiple(interval, now).expect("positive interval")
}

/// Start of the presence sub-interval: capture previous-slot flags, reset
/// the slot accumulators, beacon the own position within the congestion
/// radius, and hand over to the telemetry timer.
pub fn on_presence_timer(
    vars: &mut HdcVars,
    params: &HdcParams,
    me: NodeId,
    loc: f64,
    speed: f64,
    now: Seconds,
) -> HdcOutput {
    vars.prev_back_ahead = vars.back_flags.1;
    vars.prev_front_behind = vars.front_flags.0;
    vars.jam_back = f64::INFINITY;
    vars.jam_front = 0.0;
    vars.back_flags = (false, false);
    vars.front_flags = (false, false);
    vars.heard_behind = false;
    vars.heard_ahead = false;
    vars.counted_this_slot = false;
    HdcOutput {
        broadcasts: vec![(
            HdcMessage::Presence { ident: me, l: loc, g: speed },
            Scope::Cr(params.cr.radius(speed)),
        )],
        timers: vec![(HdcTimer::Telemetry, next_multiple(params.t_data, now))],
        transitions: Vec::new(),
    }
}

/// Start of the telemetry sub-interval: propagate participation across the
/// slot boundary, demote active carriers that stopped participating, and
/// broadcast telemetry when it carries information (boundary candidates and
/// active carriers).
pub fn on_telemetry_timer(
    vars: &mut HdcVars,
    params: &HdcParams,
    me: NodeId,
    loc: f64,
    speed: f64,
    now: Seconds,
) -> HdcOutput {
    let mut out = HdcOutput::default();
    vars.slot_start = now;
    vars.congestion_counter = 0;
    if vars.participant
        || (vars.heard_behind && vars.participant_prev)
        || (vars.heard_ahead && vars.participant_prev)
    {
        vars.participant_prev = true;
    } else {
        vars.participant = false;
        vars.prev_front_behind = false;
        vars.prev_back_ahead = false;
    }
    if vars.status_back == HdcStatus::Active && !vars.participant {
        out.transition("back", vars.status_back, HdcStatus::Idle);
        vars.status_back = HdcStatus::Idle;
        vars.front_info_received = false;
    }
    if vars.status_front == HdcStatus::Active && !vars.participant {
        out.transition("front", vars.status_front, HdcStatus::Idle);
        vars.status_front = HdcStatus::Idle;
    }
    let sends = (!vars.participant && speed <= params.cv_max)
        || vars.status_back == HdcStatus::Active
        || vars.status_front == HdcStatus::Active;
    if sends {
        out.broadcasts.push((
            HdcMessage::Telemetry {
                ident: me,
                l: loc,
                g: speed,
                behind: vars.heard_behind,
                ahead: vars.heard_ahead,
            },
            Scope::R,
        ));
    }
    out.timers.push((HdcTimer::Presence, next_multiple(params.t_smdata, now)));
    vars.participant_prev = vars.participant;
    vars.participant = false;
    vars.env.clear();
    out
}

/// Reception: buffer the message and schedule its processing after the
/// fixed latency bound.
pub fn on_receive(vars: &mut HdcVars, msg: HdcMessage, now: Seconds, d: Seconds) -> HdcOutput {
    vars.buffer.push_back((msg, now));
    HdcOutput {
        broadcasts: Vec::new(),
        timers: vec![(HdcTimer::PendingMessage, now + d)],
        transitions: Vec::new(),
    }
}

/// Process the oldest due buffered message.
pub fn on_buffered_message(
    vars: &mut HdcVars,
    params: &HdcParams,
    me: NodeId,
    loc: f64,
    speed: f64,
    now: Seconds,
) -> Result<HdcOutput, HdcError> {
    let (msg, _arrival) = vars.buffer.pop_front().ok_or(HdcError::EmptyBuffer)?;
    let mut out = HdcOutput::default();
    match msg {
        HdcMessage::Telemetry { ident, l, g, behind, ahead } => {
            let entry = EnvEntry { ident, l, g, behind, ahead };
            if vars.env.len() == vars.env_capacity {
                vars.env.pop_front();
            }
            vars.env.push_back(entry);

            // Sender against the receiver itself.
            let gap = (loc - l).abs();
            if gap < params.cr.radius(speed) && speed < params.cv.threshold(gap) {
                update_boundaries(
                    vars,
                    &[(loc, me, (vars.heard_behind, vars.heard_ahead)), (l, ident, (behind, ahead))],
                );
                vars.congestion_counter += 1;
                vars.counted_this_slot = true;
                vars.participant = true;
            }
            // Sender against every earlier entry of the slot.
            for j in 0..vars.env.len().saturating_sub(1) {
                let other = vars.env[j];
                let gap = (l - other.l).abs();
                if gap < params.cr.radius(g) && g < params.cv.threshold(gap) {
                    update_boundaries(
                        vars,
                        &[(other.l, other.ident, (other.behind, other.ahead)), (l, ident, (behind, ahead))],
                    );
                    if !vars.counted_this_slot {
                        vars.congestion_counter += 1;
                        vars.counted_this_slot = true;
                    }
                }
            }
            let settled = now >= vars.slot_start + params.t_ab + params.d;
            if vars.congestion_counter > 0
                && (vars.jam_back - loc).abs() < params.r_hdc
                && !vars.back_flags.0
                && settled
            {
                back_trigger(vars, params, now, &mut out);
                vars.participant = true;
            }
            if vars.congestion_counter > 0
                && (vars.jam_front - loc).abs() < params.r_hdc
                && !vars.front_flags.1
                && settled
            {
                front_trigger(vars, params, now, &mut out);
                vars.participant = true;
            }
            if !vars.front_info_received {
                vars.front_hdc_location = vars.jam_front;
            }
        }
        HdcMessage::JamBack { l, front_location, g } => {
            if l > loc && relay_allowed(vars, &msg, params.t_information, now) {
                out.broadcasts.push((HdcMessage::JamBack { l, front_location, g }, Scope::R));
            }
            if (l - loc).abs() < params.r_hdc {
                out.transition("back", vars.status_back, HdcStatus::Joining);
                vars.status_back = HdcStatus::Joining;
            }
        }
        HdcMessage::FrontLocation { l_front } => {
            if vars.status_back == HdcStatus::Active {
                vars.front_hdc_location = l_front;
                vars.front_info_received = true;
            } else if vars.participant && relay_allowed(vars, &msg, params.t_aheadinfo, now) {
                out.broadcasts.push((HdcMessage::FrontLocation { l_front }, Scope::R));
            }
        }
        HdcMessage::Presence { ident: _, l, g: _ } => {
            if l < loc {
                vars.heard_behind = true;
            }
            if l > loc {
                vars.heard_ahead = true;
            }
        }
    }
    Ok(out)
}

/// Fold `candidates` (position, holder, flags) into the slot's boundary
/// estimate. Later candidates win ties, matching the sequential updates of
/// the state machine's definition.
fn update_boundaries(vars: &mut HdcVars, candidates: &[(f64, NodeId, (bool, bool))]) {
    for &(pos, holder, flags) in candidates {
        if pos <= vars.jam_back {
            vars.jam_back = pos;
            vars.back_holder = holder;
            vars.back_flags = flags;
        }
    }
    for &(pos, holder, flags) in candidates {
        if pos >= vars.jam_front {
            vars.jam_front = pos;
            vars.front_holder = holder;
            vars.front_flags = flags;
        }
    }
}

fn relay_key(msg: &HdcMessage) -> u64 {
    // Content digest; duplicates within the suppression window are dropped.
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bits: u64| {
        for b in bits.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    match msg {
        HdcMessage::JamBack { l, front_location, g } => {
            eat(1);
            eat(l.to_bits());
            eat(front_location.to_bits());
            eat(g.to_bits());
        }
        HdcMessage::FrontLocation { l_front } => {
            eat(2);
            eat(l_front.to_bits());
        }
        _ => {}
    }
    h
}

/// One relay per message content per suppression window; unbounded
/// re-relaying between participants would storm the channel.
fn relay_allowed(vars: &mut HdcVars, msg: &HdcMessage, window: Seconds, now: Seconds) -> bool {
    let key = relay_key(msg);
    vars.relay_seen.retain(|(_, t)| now - *t < window);
    if vars.relay_seen.iter().any(|(k, _)| *k == key) {
        return false;
    }
    vars.relay_seen.push((key, now));
    true
}

/// Back-boundary trigger: maintain the back-HDC role.
fn back_trigger(vars: &mut HdcVars, params: &HdcParams, now: Seconds, out: &mut HdcOutput) {
    match vars.status_back {
        HdcStatus::Active => {
            if vars.location_back != vars.jam_back {
                vars.location_back = vars.jam_back;
            }
            out.timers.push((HdcTimer::BackAnnounce, next_multiple(params.t_information, now)));
        }
        HdcStatus::Joining => {
            out.transition("back", HdcStatus::Joining, HdcStatus::Active);
            vars.status_back = HdcStatus::Active;
            out.timers.push((HdcTimer::BackAnnounce, next_multiple(params.t_information, now)));
            vars.location_back = vars.jam_back;
        }
        HdcStatus::Idle => {
            if !vars.prev_back_ahead {
                vars.location_back = vars.jam_back;
                vars.state_payload = params.v0_back.clone();
                out.transition("back", HdcStatus::Idle, HdcStatus::Active);
                vars.status_back = HdcStatus::Active;
                out.timers.push((HdcTimer::BackAnnounce, next_multiple(params.t_information, now)));
            } else {
                out.transition("back", HdcStatus::Idle, HdcStatus::Joining);
                vars.status_back = HdcStatus::Joining;
            }
        }
    }
}

/// Front-boundary trigger, the mirror image.
fn front_trigger(vars: &mut HdcVars, params: &HdcParams, now: Seconds, out: &mut HdcOutput) {
    match vars.status_front {
        HdcStatus::Active => {
            if vars.location_front != vars.jam_front {
                vars.location_front = vars.jam_front;
            }
            out.timers.push((HdcTimer::FrontAnnounce, next_multiple(params.t_aheadinfo, now)));
        }
        HdcStatus::Joining => {
            out.transition("front", HdcStatus::Joining, HdcStatus::Active);
            vars.status_front = HdcStatus::Active;
            out.timers.push((HdcTimer::FrontAnnounce, next_multiple(params.t_aheadinfo, now)));
            vars.location_front = vars.jam_front;
        }
        HdcStatus::Idle => {
            if !vars.prev_front_behind {
                vars.location_front = vars.jam_front;
                vars.state_payload = params.v0_front.clone();
                out.transition("front", HdcStatus::Idle, HdcStatus::Active);
                vars.status_front = HdcStatus::Active;
                out.timers.push((HdcTimer::FrontAnnounce, next_multiple(params.t_aheadinfo, now)));
            } else {
                out.transition("front", HdcStatus::Idle, HdcStatus::Joining);
                vars.status_front = HdcStatus::Joining;
            }
        }
    }
}

/// Periodic back-HDC announcement. An active carrier that has drifted
/// beyond the attachment radius drops the role; the timer is then left
/// unarmed, so a stale firing on an idle processor does nothing.
pub fn on_back_announce_timer(
    vars: &mut HdcVars,
    params: &HdcParams,
    loc: f64,
    speed: f64,
    now: Seconds,
) -> HdcOutput {
    let mut out = HdcOutput::default();
    if vars.status_back == HdcStatus::Active {
        out.broadcasts.push((
            HdcMessage::JamBack {
                l: vars.location_back,
                front_location: vars.front_hdc_location,
                g: speed,
            },
            Scope::R,
        ));
        out.timers.push((HdcTimer::BackAnnounce, next_multiple(params.t_information, now)));
        if (loc - vars.location_back).abs() > params.r_hdc {
            out.transition("back", HdcStatus::Active, HdcStatus::Idle);
            vars.status_back = HdcStatus::Idle;
            vars.front_info_received = false;
        }
    }
    out
}

/// Periodic front-HDC announcement, mirroring the back side.
pub fn on_front_announce_timer(
    vars: &mut HdcVars,
    params: &HdcParams,
    loc: f64,
    _speed: f64,
    now: Seconds,
) -> HdcOutput {
    let mut out = HdcOutput::default();
    if vars.status_front == HdcStatus::Active {
        out.broadcasts
            .push((HdcMessage::FrontLocation { l_front: vars.location_front }, Scope::R));
        out.timers.push((HdcTimer::FrontAnnounce, next_multiple(params.t_aheadinfo, now)));
        if (loc - vars.location_front).abs() > params.r_hdc {
            out.transition("front", HdcStatus::Active, HdcStatus::Idle);
            vars.status_front = HdcStatus::Idle;
        }
    }
    out
}
