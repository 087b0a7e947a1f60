//! Golden-trace equipment for the jam-boundary protocol.
//!
//! Two engines consume the same fixture (scripted piecewise-linear car
//! trajectories, collision-free radio, zero send jitter) and emit one trace
//! line per handled event with the full variable state appended. The
//! production engine drives the real handlers through the real kernel; the
//! reference engine below is an independent straight-line interpreter of
//! the protocol with its own queue, its own timer grid and its own message
//! dispatch. Byte-identical traces mean the production state machine
//! matches the reference evolution event for event.
//!
//! Shared conventions both engines implement (divergence here is exactly
//! what the comparison would catch):
//! - positions interpolate as p0 + (p1 - p0) * ((t - t0) / (t1 - t0));
//!   speeds are the segment slope;
//! - timer grids use the smallest k*interval strictly greater than "now";
//! - a broadcast reaches every other car within the scope radius (linear
//!   distance) and is delivered at t + tx_delay + 8*bytes/bandwidth;
//! - equal-time events dispatch in insertion order; handlers insert
//!   broadcast deliveries (ascending receiver index) before timers;
//! - single-slot timers: arming presence/telemetry/announce timers replaces
//!   the pending one; pending-message timers queue.

use vanet_core::hdc::{self, CrModel, CvModel, HdcMessage, HdcParams, HdcTimer, HdcVars};
use vanet_core::kernel::Kernel;
use vanet_core::radio::{NodeId, RadioParams};

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub struct Car {
    /// Piecewise-linear trajectory breakpoints (time, position).
    pub track: Vec<(f64, f64)>,
}

impl Car {
    pub fn fixed(pos: f64) -> Car {
        Car { track: vec![(0.0, pos)] }
    }

    pub fn position(&self, t: f64) -> f64 {
        let track = &self.track;
        if t <= track[0].0 {
            return track[0].1;
        }
        for w in track.windows(2) {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            if t <= t1 {
                return p0 + (p1 - p0) * ((t - t0) / (t1 - t0));
            }
        }
        track.last().unwrap().1
    }

    pub fn speed(&self, t: f64) -> f64 {
        let track = &self.track;
        if track.len() < 2 || t <= track[0].0 {
            return if track.len() < 2 {
                0.0
            } else {
                (track[1].1 - track[0].1) / (track[1].0 - track[0].0)
            };
        }
        for w in track.windows(2) {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            if t <= t1 {
                return (p1 - p0) / (t1 - t0);
            }
        }
        0.0
    }
}

pub struct Fixture {
    pub name: &'static str,
    pub cars: Vec<Car>,
    pub params: HdcParams,
    pub radio: RadioParams,
    pub t_end: f64,
}

fn fixture_params() -> HdcParams {
    HdcParams {
        cr: CrModel::Constant(60.0),
        cv: CvModel::Constant(5.0),
        cv_max: 5.0,
        r_hdc: 120.0,
        d: 0.05,
        t_smdata: 0.2,
        t_data: 1.0,
        t_information: 1.0,
        t_aheadinfo: 1.0,
        t_ab: 0.0,
        jitter_max: 0.0,
        min_distance_m: 7.5,
        v0_back: b"b0".to_vec(),
        v0_front: b"f0".to_vec(),
    }
}

/// Three stopped cars: both boundary clouds form and keep re-electing
/// carriers.
pub fn fixture_three_cars() -> Fixture {
    Fixture {
        name: "three-stopped-cars",
        cars: vec![Car::fixed(100.0), Car::fixed(150.0), Car::fixed(200.0)],
        params: fixture_params(),
        radio: RadioParams::default(),
        t_end: 6.0,
    }
}

/// A standing queue, one car joining from behind, one cruiser leaving
/// ahead: exercises recruitment and the relay of back announcements.
pub fn fixture_five_cars() -> Fixture {
    Fixture {
        name: "five-cars-joining",
        cars: vec![
            Car { track: vec![(0.0, 60.0), (10.0, 260.0), (12.0, 262.0)] },
            Car::fixed(300.0),
            Car::fixed(330.0),
            Car::fixed(360.0),
            Car { track: vec![(0.0, 500.0), (12.0, 788.0)] },
        ],
        params: fixture_params(),
        radio: RadioParams::default(),
        t_end: 12.0,
    }
}

/// A longer queue that dissolves front to back while two cars approach and
/// two cruise far ahead: exercises demotion, hand-off and dissolution.
pub fn fixture_ten_cars() -> Fixture {
    let mut cars = Vec::new();
    // Six queued cars 30 m apart; the front three drive off at t = 5.
    for k in 0..6 {
        let pos = 1000.0 + 30.0 * k as f64;
        if k >= 3 {
            cars.push(Car { track: vec![(0.0, pos), (5.0, pos), (15.0, pos + 150.0)] });
        } else {
            cars.push(Car::fixed(pos));
        }
    }
    // Two approaching from behind.
    cars.push(Car { track: vec![(0.0, 700.0), (15.0, 970.0)] });
    cars.push(Car { track: vec![(0.0, 600.0), (15.0, 900.0)] });
    // Two cruisers far ahead, fast and silent.
    cars.push(Car { track: vec![(0.0, 2000.0), (15.0, 2375.0)] });
    cars.push(Car { track: vec![(0.0, 2100.0), (15.0, 2475.0)] });
    Fixture {
        name: "ten-cars-dissolving",
        cars,
        params: fixture_params(),
        radio: RadioParams::default(),
        t_end: 15.0,
    }
}

/// Like the five-car fixture but under the speed-dependent congestion
/// radius and gap-dependent speed threshold, so the model evaluation paths
/// are compared too.
pub fn fixture_headway_models() -> Fixture {
    let mut fx = fixture_five_cars();
    fx.name = "five-cars-headway-models";
    fx.params.cr = CrModel::Headway { min_m: 15.0, headway_s: 2.0 };
    fx.params.cv = CvModel::GapHeadway { headway_s: 2.0, cap_mps: 16.7 };
    fx.params.cv_max = 16.7;
    fx
}

#[allow(dead_code)] // each integration test binary uses its own subset
pub fn all_fixtures() -> Vec<Fixture> {
    vec![fixture_three_cars(), fixture_five_cars(), fixture_ten_cars(), fixture_headway_models()]
}

// ---------------------------------------------------------------------------
// Shared trace formatting
// ---------------------------------------------------------------------------

fn flag(b: bool) -> u8 {
    u8::from(b)
}

#[allow(clippy::too_many_arguments)]
fn format_line(
    t: f64,
    node: usize,
    event: &str,
    bcasts: &[(String, f64)],
    status_back: &str,
    status_front: &str,
    participant: bool,
    participant_prev: bool,
    heard_behind: bool,
    heard_ahead: bool,
    counter: u32,
    jam_back: f64,
    jam_front: f64,
    location_back: f64,
    location_front: f64,
    front_hdc_location: f64,
    prev_back_ahead: bool,
    prev_front_behind: bool,
    front_info_received: bool,
) -> String {
    let mut tx = String::new();
    for (kind, radius) in bcasts {
        tx.push_str(&format!(" tx:{kind}@{radius}"));
    }
    format!(
        "{t} n{node} {event}{tx} | sb={status_back} sf={status_front} part={} prev={} hb={} ha={} cnt={counter} jb={jam_back} jf={jam_front} lb={location_back} lf={location_front} fhl={front_hdc_location} pba={} pfb={} fir={}",
        flag(participant),
        flag(participant_prev),
        flag(heard_behind),
        flag(heard_ahead),
        flag(prev_back_ahead),
        flag(prev_front_behind),
        flag(front_info_received),
    )
}

// ---------------------------------------------------------------------------
// Production engine: real kernel + real handlers
// ---------------------------------------------------------------------------

enum Ev {
    Timer { node: usize, kind: HdcTimer },
    Deliver { node: usize, msg: HdcMessage },
}

pub fn run_production(fx: &Fixture) -> Vec<String> {
    let n = fx.cars.len();
    let mut vars: Vec<HdcVars> =
        (0..n).map(|_| HdcVars::new(fx.params.env_capacity(fx.radio.range_m))).collect();
    let mut kernel: Kernel<Ev> = Kernel::new();
    let mut handles: Vec<std::collections::BTreeMap<&'static str, vanet_core::kernel::EventHandle>> =
        vec![Default::default(); n];
    for (node, slot) in handles.iter_mut().enumerate() {
        let h = kernel.schedule(0.0, Ev::Timer { node, kind: HdcTimer::Presence }).unwrap();
        slot.insert(HdcTimer::Presence.name(), h);
    }
    let mut trace = Vec::new();
    struct Cx<'a> {
        fx: &'a Fixture,
        vars: Vec<HdcVars>,
        handles: Vec<std::collections::BTreeMap<&'static str, vanet_core::kernel::EventHandle>>,
        trace: Vec<String>,
    }
    let mut cx = Cx { fx, vars: std::mem::take(&mut vars), handles: std::mem::take(&mut handles), trace: std::mem::take(&mut trace) };

    kernel
        .run_until(fx.t_end, &mut cx, |kern, cx, t, ev| {
            let (node, event_name, out) = match ev {
                Ev::Timer { node, kind } => {
                    let loc = cx.fx.cars[node].position(t);
                    let speed = cx.fx.cars[node].speed(t);
                    let me = node as NodeId;
                    let out = match kind {
                        HdcTimer::Presence => {
                            hdc::on_presence_timer(&mut cx.vars[node], &cx.fx.params, me, loc, speed, t)
                        }
                        HdcTimer::Telemetry => {
                            hdc::on_telemetry_timer(&mut cx.vars[node], &cx.fx.params, me, loc, speed, t)
                        }
                        HdcTimer::PendingMessage => {
                            hdc::on_buffered_message(&mut cx.vars[node], &cx.fx.params, me, loc, speed, t)
                                .expect("buffer matches pending timers")
                        }
                        HdcTimer::BackAnnounce => {
                            hdc::on_back_announce_timer(&mut cx.vars[node], &cx.fx.params, loc, speed, t)
                        }
                        HdcTimer::FrontAnnounce => {
                            hdc::on_front_announce_timer(&mut cx.vars[node], &cx.fx.params, loc, speed, t)
                        }
                    };
                    (node, kind.name().to_string(), out)
                }
                Ev::Deliver { node, msg } => {
                    let kind = msg.kind();
                    let out = hdc::on_receive(&mut cx.vars[node], msg, t, cx.fx.params.d);
                    (node, format!("rx:{kind}"), out)
                }
            };
            // Broadcast deliveries first (ascending receiver index), then
            // timers, matching the shared convention.
            let mut bcast_desc = Vec::new();
            for (msg, scope) in &out.broadcasts {
                let radius = scope.radius(&cx.fx.radio);
                bcast_desc.push((msg.kind().to_string(), radius));
                let sender_pos = cx.fx.cars[node].position(t);
                let size = msg.wire_bytes(cx.fx.radio.header_bytes);
                let deliver_at = t + cx.fx.radio.tx_delay + size as f64 * 8.0 / cx.fx.radio.bandwidth_bps;
                for receiver in 0..cx.fx.cars.len() {
                    if receiver == node {
                        continue;
                    }
                    let rp = cx.fx.cars[receiver].position(t);
                    if (rp - sender_pos).abs() <= radius {
                        kern.schedule(deliver_at, Ev::Deliver { node: receiver, msg: msg.clone() })
                            .unwrap();
                    }
                }
            }
            for (kind, at) in &out.timers {
                if *kind == HdcTimer::PendingMessage {
                    kern.schedule(*at, Ev::Timer { node, kind: *kind }).unwrap();
                } else {
                    if let Some(h) = cx.handles[node].remove(kind.name()) {
                        kern.cancel(h);
                    }
                    let h = kern.schedule(*at, Ev::Timer { node, kind: *kind }).unwrap();
                    cx.handles[node].insert(kind.name(), h);
                }
            }
            let v = &cx.vars[node];
            cx.trace.push(format_line(
                t,
                node,
                &event_name,
                &bcast_desc,
                v.status_back.name(),
                v.status_front.name(),
                v.participant,
                v.participant_prev,
                v.heard_behind,
                v.heard_ahead,
                v.congestion_counter,
                v.jam_back,
                v.jam_front,
                v.location_back,
                v.location_front,
                v.front_hdc_location,
                v.prev_back_ahead,
                v.prev_front_behind,
                v.front_info_received,
            ));
        })
        .unwrap();
    cx.trace
}

// ---------------------------------------------------------------------------
// Reference engine: independent straight-line interpreter
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum RStatus {
    Idle,
    Joining,
    Active,
}

impl RStatus {
    fn name(self) -> &'static str {
        match self {
            RStatus::Idle => "idle",
            RStatus::Joining => "joining",
            RStatus::Active => "active",
        }
    }
}

#[derive(Clone, PartialEq)]
enum RMsg {
    Presence { ident: usize, l: f64, g: f64 },
    Telemetry { ident: usize, l: f64, g: f64, behind: bool, ahead: bool },
    JamBack { l: f64, front_location: f64, g: f64 },
    FrontLocation { l_front: f64 },
}

impl RMsg {
    fn kind(&self) -> &'static str {
        match self {
            RMsg::Presence { .. } => "presence",
            RMsg::Telemetry { .. } => "telemetry",
            RMsg::JamBack { .. } => "jam_back",
            RMsg::FrontLocation { .. } => "front_location",
        }
    }

    fn bytes(&self) -> u32 {
        match self {
            RMsg::Presence { .. } => 24,
            RMsg::Telemetry { .. } => 26,
            RMsg::JamBack { .. } => 24,
            RMsg::FrontLocation { .. } => 8,
        }
    }
}

struct RNode {
    status_back: RStatus,
    status_front: RStatus,
    location_back: f64,
    location_front: f64,
    back: f64,
    front: f64,
    back_flags: (bool, bool),
    front_flags: (bool, bool),
    p: bool,
    q: bool,
    p_before: bool,
    q_before: bool,
    counter: u32,
    participant: bool,
    participant_before: bool,
    counted: bool,
    ahead_known: bool,
    front_hdc: f64,
    slot_start: f64,
    env: Vec<(usize, f64, f64, bool, bool)>,
    buffer: std::collections::VecDeque<(RMsg, f64)>,
    relays: Vec<(u64, f64)>,
}

impl RNode {
    fn new() -> RNode {
        RNode {
            status_back: RStatus::Idle,
            status_front: RStatus::Idle,
            location_back: 0.0,
            location_front: 0.0,
            back: f64::INFINITY,
            front: 0.0,
            back_flags: (false, false),
            front_flags: (false, false),
            p: false,
            q: false,
            p_before: false,
            q_before: false,
            counter: 0,
            participant: false,
            participant_before: false,
            counted: false,
            ahead_known: false,
            front_hdc: 0.0,
            slot_start: 0.0,
            env: Vec::new(),
            buffer: std::collections::VecDeque::new(),
            relays: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum RTimer {
    Presence,
    Telemetry,
    Pending,
    BackAnnounce,
    FrontAnnounce,
}

impl RTimer {
    fn name(self) -> &'static str {
        match self {
            RTimer::Presence => "presence",
            RTimer::Telemetry => "telemetry",
            RTimer::Pending => "pending",
            RTimer::BackAnnounce => "back_announce",
            RTimer::FrontAnnounce => "front_announce",
        }
    }
}

enum RKind {
    Timer(RTimer),
    Deliver(RMsg),
}

struct REvent {
    time: f64,
    seq: u64,
    node: usize,
    kind: RKind,
    cancelled: bool,
}

struct Interp<'a> {
    fx: &'a Fixture,
    nodes: Vec<RNode>,
    queue: Vec<REvent>,
    seq: u64,
    /// Active single-slot timer per (node, timer) -> queue index.
    slots: Vec<Vec<(RTimer, usize)>>,
    trace: Vec<String>,
    pending_bcasts: Vec<(String, f64)>,
}

fn grid_next(interval: f64, now: f64) -> f64 {
    let mut k = (now / interval).floor() + 1.0;
    if k < 1.0 {
        k = 1.0;
    }
    let mut t = k * interval;
    while t <= now {
        k += 1.0;
        t = k * interval;
    }
    t
}

fn content_key(msg: &RMsg) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bits: u64| {
        for b in bits.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    match msg {
        RMsg::JamBack { l, front_location, g } => {
            eat(1);
            eat(l.to_bits());
            eat(front_location.to_bits());
            eat(g.to_bits());
        }
        RMsg::FrontLocation { l_front } => {
            eat(2);
            eat(l_front.to_bits());
        }
        _ => {}
    }
    h
}

impl<'a> Interp<'a> {
    fn cr(&self, speed: f64) -> f64 {
        match self.fx.params.cr {
            CrModel::Constant(r) => r,
            CrModel::Headway { min_m, headway_s } => (speed * headway_s).max(min_m),
        }
    }

    fn cv(&self, gap: f64) -> f64 {
        match self.fx.params.cv {
            CvModel::Constant(v) => v,
            CvModel::GapHeadway { headway_s, cap_mps } => (gap / headway_s).min(cap_mps),
        }
    }

    fn push_event(&mut self, time: f64, node: usize, kind: RKind) -> usize {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(REvent { time, seq, node, kind, cancelled: false });
        self.queue.len() - 1
    }

    fn arm(&mut self, node: usize, timer: RTimer, at: f64) {
        if timer != RTimer::Pending {
            if let Some(pos) = self.slots[node].iter().position(|(k, _)| *k == timer) {
                let (_, idx) = self.slots[node].remove(pos);
                self.queue[idx].cancelled = true;
            }
        }
        let idx = self.push_event(at, node, RKind::Timer(timer));
        if timer != RTimer::Pending {
            self.slots[node].push((timer, idx));
        }
    }

    fn broadcast(&mut self, sender: usize, t: f64, msg: RMsg, radius: f64) {
        self.pending_bcasts.push((msg.kind().to_string(), radius));
        let sender_pos = self.fx.cars[sender].position(t);
        // Airtime covers header + payload.
        let deliver_at = t
            + self.fx.radio.tx_delay
            + (msg.bytes() + self.fx.radio.header_bytes) as f64 * 8.0 / self.fx.radio.bandwidth_bps;
        for receiver in 0..self.fx.cars.len() {
            if receiver == sender {
                continue;
            }
            if (self.fx.cars[receiver].position(t) - sender_pos).abs() <= radius {
                self.push_event(deliver_at, receiver, RKind::Deliver(msg.clone()));
            }
        }
    }

    fn run(&mut self, t_end: f64) {
        loop {
            // Earliest (time, seq) live event.
            let mut best: Option<usize> = None;
            for (i, e) in self.queue.iter().enumerate() {
                if e.cancelled || e.time > t_end {
                    continue;
                }
                match best {
                    Some(b) => {
                        let bb = &self.queue[b];
                        if (e.time, e.seq) < (bb.time, bb.seq) {
                            best = Some(i);
                        }
                    }
                    None => best = Some(i),
                }
            }
            let Some(i) = best else { break };
            let time = self.queue[i].time;
            let node = self.queue[i].node;
            self.queue[i].cancelled = true;
            self.slots[node].retain(|(_, idx)| *idx != i);
            let kind = std::mem::replace(&mut self.queue[i].kind, RKind::Timer(RTimer::Pending));
            self.dispatch(time, node, kind);
        }
    }

    fn dispatch(&mut self, t: f64, node: usize, kind: RKind) {
        self.pending_bcasts.clear();
        let event_name = match kind {
            RKind::Timer(timer) => {
                match timer {
                    RTimer::Presence => self.presence(node, t),
                    RTimer::Telemetry => self.telemetry(node, t),
                    RTimer::Pending => self.pending(node, t),
                    RTimer::BackAnnounce => self.back_announce(node, t),
                    RTimer::FrontAnnounce => self.front_announce(node, t),
                }
                timer.name().to_string()
            }
            RKind::Deliver(msg) => {
                let name = format!("rx:{}", msg.kind());
                self.nodes[node].buffer.push_back((msg, t));
                self.arm(node, RTimer::Pending, t + self.fx.params.d);
                name
            }
        };
        let v = &self.nodes[node];
        let line = format_line(
            t,
            node,
            &event_name,
            &self.pending_bcasts,
            v.status_back.name(),
            v.status_front.name(),
            v.participant,
            v.participant_before,
            v.p,
            v.q,
            v.counter,
            v.back,
            v.front,
            v.location_back,
            v.location_front,
            v.front_hdc,
            v.q_before,
            v.p_before,
            v.ahead_known,
        );
        self.trace.push(line);
    }

    fn presence(&mut self, node: usize, t: f64) {
        let loc = self.fx.cars[node].position(t);
        let speed = self.fx.cars[node].speed(t);
        {
            let v = &mut self.nodes[node];
            v.q_before = v.back_flags.1;
            v.p_before = v.front_flags.0;
            v.back = f64::INFINITY;
            v.front = 0.0;
            v.back_flags = (false, false);
            v.front_flags = (false, false);
            v.p = false;
            v.q = false;
            v.counted = false;
        }
        let cr = self.cr(speed);
        self.broadcast(node, t, RMsg::Presence { ident: node, l: loc, g: speed }, cr);
        let at = grid_next(self.fx.params.t_data, t);
        self.arm(node, RTimer::Telemetry, at);
    }

    fn telemetry(&mut self, node: usize, t: f64) {
        let loc = self.fx.cars[node].position(t);
        let speed = self.fx.cars[node].speed(t);
        let sends;
        {
            let v = &mut self.nodes[node];
            v.slot_start = t;
            v.counter = 0;
            if v.participant || (v.p && v.participant_before) || (v.q && v.participant_before) {
                v.participant_before = true;
            } else {
                v.participant = false;
                v.p_before = false;
                v.q_before = false;
            }
            if v.status_back == RStatus::Active && !v.participant {
                v.status_back = RStatus::Idle;
                v.ahead_known = false;
            }
            if v.status_front == RStatus::Active && !v.participant {
                v.status_front = RStatus::Idle;
            }
            sends = (!v.participant && speed <= self.fx.params.cv_max)
                || v.status_back == RStatus::Active
                || v.status_front == RStatus::Active;
        }
        if sends {
            let (behind, ahead) = (self.nodes[node].p, self.nodes[node].q);
            self.broadcast(
                node,
                t,
                RMsg::Telemetry { ident: node, l: loc, g: speed, behind, ahead },
                self.fx.radio.range_m,
            );
        }
        let at = grid_next(self.fx.params.t_smdata, t);
        self.arm(node, RTimer::Presence, at);
        let v = &mut self.nodes[node];
        v.participant_before = v.participant;
        v.participant = false;
        v.env.clear();
    }

    fn pending(&mut self, node: usize, t: f64) {
        let loc = self.fx.cars[node].position(t);
        let speed = self.fx.cars[node].speed(t);
        let (msg, _arrival) = self.nodes[node].buffer.pop_front().expect("pending timer without message");
        match msg {
            RMsg::Telemetry { ident, l, g, behind, ahead } => {
                let cap = 3 * ((2.0 * self.fx.radio.range_m / self.fx.params.min_distance_m).ceil() as usize);
                {
                    let v = &mut self.nodes[node];
                    if v.env.len() == cap {
                        v.env.remove(0);
                    }
                    v.env.push((ident, l, g, behind, ahead));
                }
                let gap = (loc - l).abs();
                if gap < self.cr(speed) && speed < self.cv(gap) {
                    let hb = self.nodes[node].p;
                    let ha = self.nodes[node].q;
                    let v = &mut self.nodes[node];
                    // Rearmost of {back, own, sender}; sender wins ties.
                    if loc <= v.back {
                        v.back = loc;
                        v.back_flags = (hb, ha);
                    }
                    if l <= v.back {
                        v.back = l;
                        v.back_flags = (behind, ahead);
                    }
                    if loc >= v.front {
                        v.front = loc;
                        v.front_flags = (hb, ha);
                    }
                    if l >= v.front {
                        v.front = l;
                        v.front_flags = (behind, ahead);
                    }
                    v.counter += 1;
                    v.counted = true;
                    v.participant = true;
                }
                let prior = self.nodes[node].env.len().saturating_sub(1);
                for j in 0..prior {
                    let (_, jl, _, jb, ja) = self.nodes[node].env[j];
                    let gap = (l - jl).abs();
                    if gap < self.cr(g) && g < self.cv(gap) {
                        let v = &mut self.nodes[node];
                        if jl <= v.back {
                            v.back = jl;
                            v.back_flags = (jb, ja);
                        }
                        if l <= v.back {
                            v.back = l;
                            v.back_flags = (behind, ahead);
                        }
                        if jl >= v.front {
                            v.front = jl;
                            v.front_flags = (jb, ja);
                        }
                        if l >= v.front {
                            v.front = l;
                            v.front_flags = (behind, ahead);
                        }
                        if !v.counted {
                            v.counter += 1;
                            v.counted = true;
                        }
                    }
                }
                let settled =
                    t >= self.nodes[node].slot_start + self.fx.params.t_ab + self.fx.params.d;
                let trigger_back = {
                    let v = &self.nodes[node];
                    v.counter > 0
                        && (v.back - loc).abs() < self.fx.params.r_hdc
                        && !v.back_flags.0
                        && settled
                };
                if trigger_back {
                    self.back_role(node, t);
                    self.nodes[node].participant = true;
                }
                let trigger_front = {
                    let v = &self.nodes[node];
                    v.counter > 0
                        && (v.front - loc).abs() < self.fx.params.r_hdc
                        && !v.front_flags.1
                        && settled
                };
                if trigger_front {
                    self.front_role(node, t);
                    self.nodes[node].participant = true;
                }
                let v = &mut self.nodes[node];
                if !v.ahead_known {
                    v.front_hdc = v.front;
                }
            }
            RMsg::JamBack { l, front_location, g } => {
                if l > loc && self.relay_ok(node, &RMsg::JamBack { l, front_location, g }, self.fx.params.t_information, t) {
                    self.broadcast(node, t, RMsg::JamBack { l, front_location, g }, self.fx.radio.range_m);
                }
                if (l - loc).abs() < self.fx.params.r_hdc {
                    self.nodes[node].status_back = RStatus::Joining;
                }
            }
            RMsg::FrontLocation { l_front } => {
                if self.nodes[node].status_back == RStatus::Active {
                    let v = &mut self.nodes[node];
                    v.front_hdc = l_front;
                    v.ahead_known = true;
                } else if self.nodes[node].participant
                    && self.relay_ok(node, &RMsg::FrontLocation { l_front }, self.fx.params.t_aheadinfo, t)
                {
                    self.broadcast(node, t, RMsg::FrontLocation { l_front }, self.fx.radio.range_m);
                }
            }
            RMsg::Presence { ident: _, l, g: _ } => {
                if l < loc {
                    self.nodes[node].p = true;
                }
                if l > loc {
                    self.nodes[node].q = true;
                }
            }
        }
    }

    fn relay_ok(&mut self, node: usize, msg: &RMsg, window: f64, t: f64) -> bool {
        let key = content_key(msg);
        let v = &mut self.nodes[node];
        v.relays.retain(|(_, rt)| t - *rt < window);
        if v.relays.iter().any(|(k, _)| *k == key) {
            return false;
        }
        v.relays.push((key, t));
        true
    }

    fn back_role(&mut self, node: usize, t: f64) {
        let at = grid_next(self.fx.params.t_information, t);
        let mut arm_timer = false;
        {
            let v = &mut self.nodes[node];
            match v.status_back {
                RStatus::Active => {
                    if v.location_back != v.back {
                        v.location_back = v.back;
                    }
                    arm_timer = true;
                }
                RStatus::Joining => {
                    v.status_back = RStatus::Active;
                    v.location_back = v.back;
                    arm_timer = true;
                }
                RStatus::Idle => {
                    if !v.q_before {
                        v.location_back = v.back;
                        v.status_back = RStatus::Active;
                        arm_timer = true;
                    } else {
                        v.status_back = RStatus::Joining;
                    }
                }
            }
        }
        if arm_timer {
            self.arm(node, RTimer::BackAnnounce, at);
        }
    }

    fn front_role(&mut self, node: usize, t: f64) {
        let at = grid_next(self.fx.params.t_aheadinfo, t);
        let mut arm_timer = false;
        {
            let v = &mut self.nodes[node];
            match v.status_front {
                RStatus::Active => {
                    if v.location_front != v.front {
                        v.location_front = v.front;
                    }
                    arm_timer = true;
                }
                RStatus::Joining => {
                    v.status_front = RStatus::Active;
                    v.location_front = v.front;
                    arm_timer = true;
                }
                RStatus::Idle => {
                    if !v.p_before {
                        v.location_front = v.front;
                        v.status_front = RStatus::Active;
                        arm_timer = true;
                    } else {
                        v.status_front = RStatus::Joining;
                    }
                }
            }
        }
        if arm_timer {
            self.arm(node, RTimer::FrontAnnounce, at);
        }
    }

    fn back_announce(&mut self, node: usize, t: f64) {
        let loc = self.fx.cars[node].position(t);
        let speed = self.fx.cars[node].speed(t);
        if self.nodes[node].status_back == RStatus::Active {
            let (l, fhl) = (self.nodes[node].location_back, self.nodes[node].front_hdc);
            self.broadcast(node, t, RMsg::JamBack { l, front_location: fhl, g: speed }, self.fx.radio.range_m);
            let at = grid_next(self.fx.params.t_information, t);
            self.arm(node, RTimer::BackAnnounce, at);
            if (loc - self.nodes[node].location_back).abs() > self.fx.params.r_hdc {
                let v = &mut self.nodes[node];
                v.status_back = RStatus::Idle;
                v.ahead_known = false;
            }
        }
    }

    fn front_announce(&mut self, node: usize, t: f64) {
        let loc = self.fx.cars[node].position(t);
        if self.nodes[node].status_front == RStatus::Active {
            let l = self.nodes[node].location_front;
            self.broadcast(node, t, RMsg::FrontLocation { l_front: l }, self.fx.radio.range_m);
            let at = grid_next(self.fx.params.t_aheadinfo, t);
            self.arm(node, RTimer::FrontAnnounce, at);
            if (loc - self.nodes[node].location_front).abs() > self.fx.params.r_hdc {
                self.nodes[node].status_front = RStatus::Idle;
            }
        }
    }
}

pub fn run_reference(fx: &Fixture) -> Vec<String> {
    let n = fx.cars.len();
    let mut interp = Interp {
        fx,
        nodes: (0..n).map(|_| RNode::new()).collect(),
        queue: Vec::new(),
        seq: 0,
        slots: vec![Vec::new(); n],
        trace: Vec::new(),
        pending_bcasts: Vec::new(),
    };
    for node in 0..n {
        let idx = interp.push_event(0.0, node, RKind::Timer(RTimer::Presence));
        interp.slots[node].push((RTimer::Presence, idx));
    }
    interp.run(fx.t_end);
    interp.trace
}

/// Compare both engines on one fixture; returns the trace length on
/// success, panics with a readable diff on divergence.
pub fn compare_fixture(fx: &Fixture) -> usize {
    let prod = run_production(fx);
    let reference = run_reference(fx);
    for (i, (p, r)) in prod.iter().zip(reference.iter()).enumerate() {
        assert_eq!(
            p, r,
            "fixture {}: trace diverges at event {i}\n  production: {p}\n  reference:  {r}",
            fx.name
        );
    }
    assert_eq!(
        prod.len(),
        reference.len(),
        "fixture {}: trace lengths differ ({} vs {})",
        fx.name,
        prod.len(),
        reference.len()
    );
    assert!(!prod.is_empty());
    prod.len()
}
