//! Experiment execution: one seeded run wires the kernel, the mobility
//! model, the radio medium and the per-node protocol state together;
//! the matrix runner sweeps (protocol, penetration, concurrent units,
//! seed) and aggregates the metric series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::rc::Rc;

use thiserror::Error;

use crate::dissemination::{Action, MileMode, NodeProtocolState, PacketBody, Protocol};
use crate::hdc;
use crate::hdc::{HdcMessage, HdcStatus, HdcTimer, HdcVars};
use crate::jam::{self, JamParams};
use crate::kernel::{EventHandle, Kernel, Seconds};
use crate::metrics::{self, DeliveryEvent, MetricSeries, UnitDetail};
use crate::mobility::{sample_penetration, History, VehicleId, World};
use crate::oracle;
use crate::radio::{Medium, NodeId, ReceptionId, Scope};
use crate::rng::{RngStream, StreamId};
use crate::scenario::{Experiment, Scenario};
use crate::units::DataUnit;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("mobility: {0}")]
    Mobility(#[from] crate::mobility::MobilityError),
    #[error("kernel: {0}")]
    Kernel(#[from] crate::kernel::KernelError),
    #[error("hdc: {0}")]
    Hdc(#[from] crate::hdc::HdcError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Dissemination runs
// ---------------------------------------------------------------------------

enum DisEvent {
    UpdateTimer { node: usize },
    Tx { node: usize, body: Rc<PacketBody> },
    Deliver { node: usize, sender: NodeId, rec: ReceptionId, body: Rc<PacketBody> },
    SpawnUnit,
}

pub struct RunOutput {
    pub protocol: Protocol,
    pub penetration: f64,
    pub concurrent_units: u32,
    pub seed: u64,
    pub equipped: BTreeSet<VehicleId>,
    pub deliveries: Vec<DeliveryEvent>,
    pub eligible: BTreeSet<(crate::units::DataUnitId, NodeId)>,
    pub channel_log: Vec<crate::radio::ChannelRecord>,
    pub history: History,
    pub units: Vec<DataUnit>,
    pub dropped_receptions: u64,
    pub event_log: Option<String>,
}

struct DisCtx {
    world: World,
    history: History,
    medium: Medium,
    states: Vec<NodeProtocolState>,
    rngs: Vec<RngStream>,
    /// node index -> vehicle index (equipped nodes only are simulated).
    vehicle_of: Vec<usize>,
    deliveries: Vec<DeliveryEvent>,
    delivered: BTreeSet<(crate::units::DataUnitId, NodeId)>,
    units: Vec<DataUnit>,
    dropped: u64,
    measure_end: Seconds,
    log: Option<String>,
}

impl DisCtx {
    fn advance_world_to(&mut self, t: Seconds) {
        while t > self.world.t_from + self.world.dt() + 1e-9 {
            self.world.advance();
            if self.world.t_from <= self.measure_end + 1e-9 {
                self.history.record(&self.world);
            }
        }
    }

    fn node_positions(&self, t: Seconds) -> Vec<(NodeId, f64)> {
        self.vehicle_of
            .iter()
            .map(|&vi| (self.world.vehicle(vi).id, self.world.position_at(vi, t)))
            .collect()
    }

    fn record_delivery(&mut self, node: usize, unit: &DataUnit, t: Seconds) {
        let vi = self.vehicle_of[node];
        let id = self.world.vehicle(vi).id;
        if self.delivered.insert((unit.id, id)) {
            self.deliveries.push(DeliveryEvent {
                unit: unit.id,
                node: id,
                position: self.world.position_at(vi, t),
                time: t,
            });
        }
    }

    fn log_line(&mut self, t: Seconds, kind: &str, target: NodeId, detail: &str) {
        if let Some(log) = self.log.as_mut() {
            let _ = writeln!(log, "{t} {kind} {target} {detail}");
        }
    }
}

/// Execute one seeded dissemination run for one protocol.
pub fn run_dissemination(
    scenario: &Scenario,
    protocol: Protocol,
    penetration: f64,
    concurrent_units: u32,
    seed: u64,
    want_event_log: bool,
) -> Result<RunOutput, RunError> {
    let mut mobility = scenario.mobility.clone();
    mobility.v_max = scenario.v_max();
    let mut world = World::uniform(&mobility, seed)?;
    if let Some(p) = scenario.perturbation {
        world.perturbations.push(p);
    }
    let warmup_steps = (scenario.warmup_s / mobility.dt).round() as usize;
    for _ in 0..warmup_steps {
        world.advance();
    }

    let mut pen_rng = RngStream::derive(seed, StreamId::Penetration);
    let equipped = sample_penetration(world.snapshot(), penetration, &mut pen_rng)?;
    let vehicle_of: Vec<usize> = world
        .snapshot()
        .iter()
        .enumerate()
        .filter(|(_, v)| equipped.contains(&v.id))
        .map(|(i, _)| i)
        .collect();

    let measure_start = scenario.measure_start();
    let measure_end = scenario.measure_end();
    let road = world.road;

    let mut history = History::new(mobility.dt, measure_start);
    history.record(&world);

    let states: Vec<NodeProtocolState> =
        vehicle_of.iter().map(|&vi| NodeProtocolState::new(world.snapshot()[vi].id)).collect();
    let rngs: Vec<RngStream> = vehicle_of
        .iter()
        .map(|&vi| RngStream::derive(seed, StreamId::Protocol(world.snapshot()[vi].id as u64)))
        .collect();

    let mut ctx = DisCtx {
        world,
        history,
        medium: Medium::new(scenario.radio.clone(), scenario.collisions),
        states,
        rngs,
        vehicle_of,
        deliveries: Vec::new(),
        delivered: BTreeSet::new(),
        units: Vec::new(),
        dropped: 0,
        measure_end,
        log: want_event_log.then(String::new),
    };

    let mut kernel: Kernel<DisEvent> = Kernel::new();
    // The kernel clock starts at zero; jump it to the measurement window.
    kernel.run_until(measure_start, &mut (), |_, _, _, _: DisEvent| {})?;

    let n_nodes = ctx.states.len();
    let dis = &scenario.dissemination;
    match protocol {
        Protocol::Mile | Protocol::MileOnDemand => {
            for node in 0..n_nodes {
                let phase = ctx.rngs[node].uniform_in(0.0, dis.update_interval);
                kernel.schedule(measure_start + phase, DisEvent::UpdateTimer { node })?;
            }
        }
        Protocol::AutoCast => {
            for node in 0..n_nodes {
                let phase = ctx.rngs[node].uniform_in(0.0, dis.autocast.floor_wait);
                kernel.schedule(measure_start + phase, DisEvent::UpdateTimer { node })?;
            }
        }
        Protocol::Flooding | Protocol::Oracle => {}
    }

    // Unit generation grid: `concurrent_units` alive at steady state.
    let gen_interval = scenario.unit_lifetime_s / concurrent_units.max(1) as f64;
    let mut unit_times = Vec::new();
    let mut k = 0u32;
    loop {
        let t = measure_start + k as f64 * gen_interval;
        if t > measure_end - scenario.unit_lifetime_s + 1e-9 {
            break;
        }
        unit_times.push(t);
        kernel.schedule(t, DisEvent::SpawnUnit)?;
        k += 1;
    }
    let mut unit_rng = RngStream::derive(seed, StreamId::UnitGen);
    let payload_bytes = scenario.unit_payload_bytes as usize;

    if protocol == Protocol::Oracle {
        // The benchmark needs no network events, just the trace and the
        // generation schedule; there is no event log to write.
        ctx.log = None;
        drop(kernel);
        let steps = (scenario.measure_s / mobility.dt).round() as usize;
        for _ in 0..steps {
            ctx.world.advance();
            ctx.history.record(&ctx.world);
        }
        let equipped_idx: Vec<usize> = (0..ctx.history.ids.len())
            .filter(|i| equipped.contains(&ctx.history.ids[*i]))
            .collect();
        let contacts =
            oracle::contact_intervals(&ctx.history, &road, &equipped_idx, scenario.radio.range_m);
        for t in &unit_times {
            // No equipped candidate: skip the slot, like the live protocols do.
            let Some(origin) =
                nearest_equipped(&ctx.history, &road, &equipped_idx, scenario.origin_point(), *t)
            else {
                continue;
            };
            let payload: Vec<u8> = (0..payload_bytes).map(|_| unit_rng.next_u64() as u8).collect();
            let unit = DataUnit::new(
                ctx.history.position_at(&road, origin, *t),
                *t,
                scenario.unit_lifetime_s,
                scenario.unit_target_span_m,
                payload,
            );
            let informed =
                oracle::oracle_deliveries_with_contacts(&ctx.history, &contacts, &equipped_idx, &unit, origin);
            let by_index: BTreeMap<VehicleId, usize> =
                ctx.history.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
            for (node, at) in informed {
                let idx = by_index[&node];
                ctx.deliveries.push(DeliveryEvent {
                    unit: unit.id,
                    node,
                    position: ctx.history.position_at(&road, idx, at),
                    time: at,
                });
                ctx.delivered.insert((unit.id, node));
                if node != ctx.history.ids[origin] {
                    // One informing broadcast per delivery: the benchmark
                    // transmits only when it will reach someone.
                    ctx.medium.transmit(
                        ctx.history.ids[origin],
                        ctx.history.position_at(&road, idx, at),
                        at,
                        scenario.radio.header_bytes + unit.wire_bytes(),
                        Scope::R,
                        &[],
                        &road,
                    );
                }
            }
            ctx.units.push(unit);
        }
    } else {
        let mut kernel = kernel;
        run_dissemination_loop(&mut kernel, &mut ctx, scenario, protocol, measure_end, &mut unit_rng)?;
        // Drain remaining mobility so the history covers the full window.
        ctx.advance_world_to(measure_end + ctx.world.dt());
    }

    let eligible = eligibility(&ctx.history, &road, &equipped, &ctx.units, scenario);
    Ok(RunOutput {
        protocol,
        penetration,
        concurrent_units,
        seed,
        equipped,
        deliveries: std::mem::take(&mut ctx.deliveries),
        eligible,
        channel_log: ctx.medium.take_channel_log(),
        history: ctx.history,
        units: ctx.units,
        dropped_receptions: ctx.dropped,
        event_log: ctx.log,
    })
}

fn run_dissemination_loop(
    kernel: &mut Kernel<DisEvent>,
    ctx: &mut DisCtx,
    scenario: &Scenario,
    protocol: Protocol,
    measure_end: Seconds,
    unit_rng: &mut RngStream,
) -> Result<(), RunError> {
    let dis = scenario.dissemination.clone();
    let road = ctx.world.road;
    let origin_point = scenario.origin_point();
    kernel.run_until(measure_end, ctx, |kern, ctx, t, ev| {
        ctx.advance_world_to(t);
        match ev {
            DisEvent::UpdateTimer { node } => {
                ctx.log_line(t, "timer", ctx.states[node].node, "update");
                let (body, next) = match protocol {
                    Protocol::Mile | Protocol::MileOnDemand => {
                        let mode = if protocol == Protocol::Mile {
                            MileMode::Plain
                        } else {
                            MileMode::OnDemand
                        };
                        let body =
                            ctx.states[node].mile_on_timer(mode, dis.max_payload, t, &mut ctx.rngs[node]);
                        (body, t + dis.update_interval)
                    }
                    Protocol::AutoCast => {
                        let (body, next) = ctx.states[node].autocast_on_timer(&dis, t);
                        (Some(body), next)
                    }
                    _ => (None, t + 1.0),
                };
                if let Some(body) = body {
                    transmit(kern, ctx, scenario, node, Rc::new(body), t);
                }
                if next <= measure_end {
                    kern.schedule(next, DisEvent::UpdateTimer { node }).expect("future");
                }
            }
            DisEvent::Tx { node, body } => {
                transmit(kern, ctx, scenario, node, body, t);
            }
            DisEvent::Deliver { node, sender, rec, body } => {
                if ctx.medium.is_lost(rec) {
                    ctx.dropped += 1;
                    ctx.log_line(t, "drop", ctx.states[node].node, &body_summary(&body));
                    return;
                }
                ctx.log_line(t, "rx", ctx.states[node].node, &body_summary(&body));
                ctx.states[node].note_sender(sender);
                let actions = match protocol {
                    Protocol::Flooding => match body.as_ref() {
                        PacketBody::Flood { unit } => {
                            ctx.states[node].flooding_on_receive(unit.clone(), &dis, t, &mut ctx.rngs[node])
                        }
                        PacketBody::Update { .. } => Vec::new(),
                    },
                    Protocol::Mile => ctx.states[node].mile_on_receive(&body, MileMode::Plain, t),
                    Protocol::MileOnDemand => {
                        ctx.states[node].mile_on_receive(&body, MileMode::OnDemand, t)
                    }
                    Protocol::AutoCast => {
                        ctx.states[node].autocast_on_receive(&body, &dis, t, &mut ctx.rngs[node])
                    }
                    Protocol::Oracle => Vec::new(),
                };
                apply_actions(kern, ctx, node, actions, t, measure_end);
            }
            DisEvent::SpawnUnit => {
                let positions = ctx.node_positions(t);
                let origin = positions
                    .iter()
                    .enumerate()
                    .min_by(|(_, (ia, pa)), (_, (ib, pb))| {
                        road.distance(*pa, origin_point)
                            .total_cmp(&road.distance(*pb, origin_point))
                            .then(ia.cmp(ib))
                    })
                    .map(|(idx, _)| idx);
                let Some(origin) = origin else { return };
                let payload: Vec<u8> =
                    (0..scenario.unit_payload_bytes as usize).map(|_| unit_rng.next_u64() as u8).collect();
                let unit = DataUnit::new(
                    positions[origin].1,
                    t,
                    scenario.unit_lifetime_s,
                    scenario.unit_target_span_m,
                    payload,
                );
                ctx.log_line(t, "unit", positions[origin].0, &format!("id={}", unit.id));
                ctx.units.push(unit.clone());
                let actions = ctx.states[origin].originate(unit, protocol, t);
                apply_actions(kern, ctx, origin, actions, t, measure_end);
            }
        }
    })?;
    Ok(())
}

fn body_summary(body: &PacketBody) -> String {
    match body {
        PacketBody::Flood { unit } => format!("flood id={}", unit.id),
        PacketBody::Update { ids, units } => {
            format!("update ids={} units={}", ids.len(), units.len())
        }
    }
}

fn transmit(
    kernel: &mut Kernel<DisEvent>,
    ctx: &mut DisCtx,
    scenario: &Scenario,
    node: usize,
    body: Rc<PacketBody>,
    t: Seconds,
) {
    let road = ctx.world.road;
    let positions = ctx.node_positions(t);
    let vi = ctx.vehicle_of[node];
    let sender = ctx.world.vehicle(vi).id;
    let sender_pos = ctx.world.position_at(vi, t);
    let size = body.wire_bytes(scenario.radio.header_bytes);
    ctx.log_line(t, "tx", sender, &body_summary(&body));
    let deliveries = ctx.medium.transmit(sender, sender_pos, t, size, Scope::R, &positions, &road);
    let index_of: BTreeMap<NodeId, usize> =
        positions.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
    for (receiver, at, rec) in deliveries {
        let node = index_of[&receiver];
        kernel
            .schedule(at, DisEvent::Deliver { node, sender, rec, body: Rc::clone(&body) })
            .expect("deliveries are in the future");
    }
}

fn apply_actions(
    kernel: &mut Kernel<DisEvent>,
    ctx: &mut DisCtx,
    node: usize,
    actions: Vec<Action>,
    t: Seconds,
    measure_end: Seconds,
) {
    for a in actions {
        match a {
            Action::Deliver(unit) => ctx.record_delivery(node, &unit, t),
            Action::SendAfter { delay, body } => {
                let at = t + delay;
                if at <= measure_end {
                    kernel.schedule(at, DisEvent::Tx { node, body: Rc::new(body) }).expect("future");
                }
            }
        }
    }
}

fn nearest_equipped(
    history: &History,
    road: &crate::road::Road,
    equipped_idx: &[usize],
    origin_point: f64,
    t: Seconds,
) -> Option<usize> {
    equipped_idx
        .iter()
        .copied()
        .min_by(|&a, &b| {
            road.distance(history.position_at(road, a, t), origin_point)
                .total_cmp(&road.distance(history.position_at(road, b, t), origin_point))
                .then(history.ids[a].cmp(&history.ids[b]))
        })
}

/// An equipped node is eligible for a unit if it comes within the unit's
/// target span of the origin position at any recorded instant of the
/// unit's lifetime.
fn eligibility(
    history: &History,
    road: &crate::road::Road,
    equipped: &BTreeSet<VehicleId>,
    units: &[DataUnit],
    scenario: &Scenario,
) -> BTreeSet<(crate::units::DataUnitId, NodeId)> {
    let mut out = BTreeSet::new();
    let span = scenario.unit_target_span_m;
    for unit in units {
        for (i, id) in history.ids.iter().enumerate() {
            if !equipped.contains(id) {
                continue;
            }
            let mut k = ((unit.created_at - history.start_time) / history.dt).floor() as isize;
            if k < 0 {
                k = 0;
            }
            let k_end =
                (((unit.expires_at() - history.start_time) / history.dt).ceil() as usize).min(history.snapshots().saturating_sub(1));
            let mut eligible = false;
            for snap in (k as usize)..=k_end {
                if road.distance(history.positions[i][snap], unit.origin_position) <= span {
                    eligible = true;
                    break;
                }
            }
            if eligible {
                out.insert((unit.id, *id));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Matrix runner
// ---------------------------------------------------------------------------

pub struct MatrixOptions {
    pub event_log: bool,
}

pub struct MatrixOutput {
    pub results_csv: String,
    pub per_unit_csv: String,
    pub event_logs: Vec<(String, String)>,
}

/// Run every (protocol, penetration, units, seed) cell and aggregate one
/// metric row per cell group (seeds averaged).
pub fn run_matrix(scenario: &Scenario, opts: &MatrixOptions) -> Result<MatrixOutput, RunError> {
    let mut rows: Vec<MetricSeries> = Vec::new();
    let mut per_unit = String::from(UnitDetail::CSV_HEADER);
    per_unit.push('\n');
    let mut event_logs = Vec::new();
    let road = scenario.mobility.road();

    for &protocol in &scenario.protocols {
        for &penetration in &scenario.penetrations {
            for &units in &scenario.concurrent_units {
                let mut channel = Vec::new();
                let mut speeds = Vec::new();
                let mut ratios = Vec::new();
                for &seed in &scenario.seeds {
                    let out = run_dissemination(
                        scenario,
                        protocol,
                        penetration,
                        units,
                        seed,
                        opts.event_log,
                    )?;
                    let usage = metrics::channel_usage_per_km(
                        &out.channel_log,
                        scenario.measure_start(),
                        scenario.measure_s,
                        scenario.mobility.road_length_m / 1000.0,
                    );
                    channel.push(usage);
                    let by_unit = metrics::deliveries_by_unit(&out.deliveries);
                    let mut per_unit_speeds = Vec::new();
                    for unit in &out.units {
                        let deliveries = by_unit.get(&unit.id).map(|v| v.as_slice()).unwrap_or(&[]);
                        let speed = metrics::unit_dissemination_speed(
                            deliveries,
                            unit.origin_position,
                            unit.created_at,
                            &road,
                        );
                        per_unit_speeds.push(speed);
                        let eligible_count =
                            out.eligible.iter().filter(|(u, _)| *u == unit.id).count();
                        let delivered_count = deliveries
                            .iter()
                            .filter(|d| out.eligible.contains(&(d.unit, d.node)))
                            .count();
                        per_unit.push_str(
                            &UnitDetail {
                                protocol: protocol.name().into(),
                                penetration,
                                concurrent_units: units,
                                seed,
                                unit: unit.id,
                                created_at: unit.created_at,
                                eligible: eligible_count,
                                delivered: delivered_count,
                                mean_speed_kmh: speed,
                            }
                            .csv_row(),
                        );
                        per_unit.push('\n');
                    }
                    if let Some(s) = metrics::dissemination_speed(&per_unit_speeds) {
                        speeds.push(s);
                    }
                    if let Some(r) = metrics::delivery_ratio(&out.deliveries, &out.eligible) {
                        ratios.push(r);
                    }
                    if let Some(log) = out.event_log {
                        event_logs.push((
                            format!("{}_p{}_u{}_s{}.log", protocol.name(), penetration, units, seed),
                            log,
                        ));
                    }
                }
                rows.push(MetricSeries {
                    protocol: protocol.name().into(),
                    penetration,
                    concurrent_units: units,
                    channel_kbit_s_km: mean(&channel).unwrap_or(0.0),
                    speed_kmh: mean(&speeds),
                    delivery_ratio: mean(&ratios),
                });
            }
        }
    }
    let mut results = String::from(MetricSeries::CSV_HEADER);
    results.push('\n');
    for row in &rows {
        results.push_str(&row.csv_row());
        results.push('\n');
    }
    Ok(MatrixOutput { results_csv: results, per_unit_csv: per_unit, event_logs })
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

// ---------------------------------------------------------------------------
// Speed-limit experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SpeedLimitOutcome {
    pub v_max_kmh: f64,
    pub seed: u64,
    pub jam_detected: bool,
    pub first_jam_time: Option<Seconds>,
    pub history: History,
}

/// Mobility-only run with ground-truth jam detection on every snapshot.
pub fn run_speedlimit(
    scenario: &Scenario,
    v_max_kmh: f64,
    seed: u64,
) -> Result<SpeedLimitOutcome, RunError> {
    let mut mobility = scenario.mobility.clone();
    mobility.v_max = crate::mobility::kmh_to_mps(v_max_kmh);
    let mut world = World::uniform(&mobility, seed)?;
    if let Some(p) = scenario.perturbation {
        world.perturbations.push(p);
    }
    let road = world.road;
    let params = jam_params(scenario, mobility.v_max);
    let steps = ((scenario.warmup_s + scenario.measure_s) / mobility.dt).round() as usize;
    let mut history = History::new(mobility.dt, 0.0);
    history.record(&world);
    let mut first_jam_time = None;
    for _ in 0..steps {
        world.advance();
        history.record(&world);
        if world.t_from >= scenario.warmup_s && first_jam_time.is_none() {
            let jams = jam::detect_jams(world.snapshot(), &params, &road);
            if !jams.is_empty() {
                first_jam_time = Some(world.t_from);
            }
        }
    }
    Ok(SpeedLimitOutcome {
        v_max_kmh,
        seed,
        jam_detected: first_jam_time.is_some(),
        first_jam_time,
        history,
    })
}

pub fn jam_params(scenario: &Scenario, v_max: f64) -> JamParams {
    let mut p = JamParams::for_v_max(v_max);
    p.stop_speed = scenario.jam.stop_speed_mps;
    p.connect_gap = scenario.jam.connect_gap_m;
    p.window_s = scenario.jam.window_s;
    p
}

/// CSV report of a speed-limit sweep: `v_max_kmh,seed,jam_detected,first_jam_time`.
pub fn speedlimit_report(outcomes: &[SpeedLimitOutcome]) -> String {
    let mut out = String::from("v_max_kmh,seed,jam_detected,first_jam_time\n");
    for o in outcomes {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            o.v_max_kmh,
            o.seed,
            o.jam_detected,
            o.first_jam_time.map(|t| t.to_string()).unwrap_or_default()
        );
    }
    out
}

// ---------------------------------------------------------------------------
// HDC runs
// ---------------------------------------------------------------------------

enum HdcEvent {
    Timer { node: usize, kind: HdcTimer },
    Tx { node: usize, msg: HdcMessage, scope: Scope },
    Deliver { node: usize, rec: ReceptionId, msg: HdcMessage },
}

/// One line of the HDC event log: `time node event detail`.
#[derive(Debug, Clone)]
pub struct HdcLogLine {
    pub time: Seconds,
    pub node: NodeId,
    pub event: String,
    pub detail: String,
}

pub struct HdcRunOutput {
    pub log: Vec<HdcLogLine>,
    pub history: History,
    /// Sampled once per mobility step: every node holding an active back
    /// role and its announced back location.
    pub back_samples: Vec<(Seconds, Vec<(NodeId, f64)>)>,
    pub front_samples: Vec<(Seconds, Vec<(NodeId, f64)>)>,
}

impl HdcRunOutput {
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for l in &self.log {
            let _ = writeln!(out, "{} {} {} {}", l.time, l.node, l.event, l.detail);
        }
        out
    }
}

struct HdcCtx {
    world: World,
    history: History,
    medium: Medium,
    vars: Vec<HdcVars>,
    rngs: Vec<RngStream>,
    vehicle_of: Vec<usize>,
    handles: Vec<BTreeMap<&'static str, EventHandle>>,
    log: Vec<HdcLogLine>,
    back_samples: Vec<(Seconds, Vec<(NodeId, f64)>)>,
    front_samples: Vec<(Seconds, Vec<(NodeId, f64)>)>,
    end: Seconds,
}

impl HdcCtx {
    fn advance_world_to(&mut self, t: Seconds) {
        while t > self.world.t_from + self.world.dt() + 1e-9 {
            self.world.advance();
            if self.world.t_from <= self.end + 1e-9 {
                self.history.record(&self.world);
                self.sample_roles();
            }
        }
    }

    fn sample_roles(&mut self) {
        let t = self.world.t_from;
        let mut backs = Vec::new();
        let mut fronts = Vec::new();
        for (n, vars) in self.vars.iter().enumerate() {
            let id = self.world.vehicle(self.vehicle_of[n]).id;
            if vars.status_back == HdcStatus::Active {
                backs.push((id, vars.location_back));
            }
            if vars.status_front == HdcStatus::Active {
                fronts.push((id, vars.location_front));
            }
        }
        self.back_samples.push((t, backs));
        self.front_samples.push((t, fronts));
    }

    fn node_positions(&self, t: Seconds) -> Vec<(NodeId, f64)> {
        self.vehicle_of
            .iter()
            .map(|&vi| (self.world.vehicle(vi).id, self.world.position_at(vi, t)))
            .collect()
    }
}

/// Full HDC simulation over the scenario's traffic.
pub fn run_hdc(scenario: &Scenario, seed: u64) -> Result<HdcRunOutput, RunError> {
    let mut mobility = scenario.mobility.clone();
    mobility.v_max = scenario.v_max();
    let mut world = World::uniform(&mobility, seed)?;
    if let Some(p) = scenario.perturbation {
        world.perturbations.push(p);
    }
    let start = scenario.measure_start();
    let end = scenario.measure_end();
    let warmup_steps = (scenario.warmup_s / mobility.dt).round() as usize;
    for _ in 0..warmup_steps {
        world.advance();
    }

    let rate = scenario.penetrations.first().copied().unwrap_or(1.0);
    let mut pen_rng = RngStream::derive(seed, StreamId::Penetration);
    let equipped = sample_penetration(world.snapshot(), rate, &mut pen_rng)?;
    let vehicle_of: Vec<usize> = world
        .snapshot()
        .iter()
        .enumerate()
        .filter(|(_, v)| equipped.contains(&v.id))
        .map(|(i, _)| i)
        .collect();

    let mut history = History::new(mobility.dt, start);
    history.record(&world);

    let params = scenario.hdc.clone();
    params.validate()?;
    let env_capacity = params.env_capacity(scenario.radio.range_m);
    let vars: Vec<HdcVars> = vehicle_of.iter().map(|_| HdcVars::new(env_capacity)).collect();
    let rngs: Vec<RngStream> = vehicle_of
        .iter()
        .map(|&vi| RngStream::derive(seed, StreamId::Hdc(world.snapshot()[vi].id as u64)))
        .collect();
    let n_nodes = vars.len();

    let mut ctx = HdcCtx {
        world,
        history,
        medium: Medium::new(scenario.radio.clone(), scenario.collisions),
        vars,
        rngs,
        vehicle_of,
        handles: vec![BTreeMap::new(); n_nodes],
        log: Vec::new(),
        back_samples: Vec::new(),
        front_samples: Vec::new(),
        end,
    };

    let mut kernel: Kernel<HdcEvent> = Kernel::new();
    kernel.run_until(start, &mut (), |_, _, _, _: HdcEvent| {})?;
    for node in 0..n_nodes {
        kernel.schedule(start, HdcEvent::Timer { node, kind: HdcTimer::Presence })?;
    }

    let d = params.d;
    kernel.run_until(end, &mut ctx, |kern, ctx, t, ev| {
        ctx.advance_world_to(t);
        match ev {
            HdcEvent::Timer { node, kind } => {
                let vi = ctx.vehicle_of[node];
                let me = ctx.world.vehicle(vi).id;
                let loc = ctx.world.position_at(vi, t);
                let speed = ctx.world.speed_at(vi, t);
                let out = match kind {
                    HdcTimer::Presence => hdc::on_presence_timer(&mut ctx.vars[node], &params, me, loc, speed, t),
                    HdcTimer::Telemetry => hdc::on_telemetry_timer(&mut ctx.vars[node], &params, me, loc, speed, t),
                    HdcTimer::PendingMessage => {
                        hdc::on_buffered_message(&mut ctx.vars[node], &params, me, loc, speed, t)
                            .expect("pending timers match buffered messages")
                    }
                    HdcTimer::BackAnnounce => hdc::on_back_announce_timer(&mut ctx.vars[node], &params, loc, speed, t),
                    HdcTimer::FrontAnnounce => hdc::on_front_announce_timer(&mut ctx.vars[node], &params, loc, speed, t),
                };
                apply_hdc_output(kern, ctx, node, me, out, t, &params);
            }
            HdcEvent::Tx { node, msg, scope } => {
                let vi = ctx.vehicle_of[node];
                let sender = ctx.world.vehicle(vi).id;
                let pos = ctx.world.position_at(vi, t);
                let positions = ctx.node_positions(t);
                let size = msg.wire_bytes(ctx.medium.params.header_bytes);
                let road = ctx.world.road;
                let deliveries = ctx.medium.transmit(sender, pos, t, size, scope, &positions, &road);
                let index_of: BTreeMap<NodeId, usize> =
                    positions.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
                for (receiver, at, rec) in deliveries {
                    let node = index_of[&receiver];
                    kern.schedule(at, HdcEvent::Deliver { node, rec, msg: msg.clone() })
                        .expect("future");
                }
            }
            HdcEvent::Deliver { node, rec, msg } => {
                if ctx.medium.is_lost(rec) {
                    return;
                }
                let out = hdc::on_receive(&mut ctx.vars[node], msg, t, d);
                let me = ctx.world.vehicle(ctx.vehicle_of[node]).id;
                apply_hdc_output(kern, ctx, node, me, out, t, &params);
            }
        }
    })?;
    ctx.advance_world_to(end + ctx.world.dt());

    Ok(HdcRunOutput {
        log: ctx.log,
        history: ctx.history,
        back_samples: ctx.back_samples,
        front_samples: ctx.front_samples,
    })
}

fn apply_hdc_output(
    kernel: &mut Kernel<HdcEvent>,
    ctx: &mut HdcCtx,
    node: usize,
    me: NodeId,
    out: hdc::HdcOutput,
    t: Seconds,
    params: &hdc::HdcParams,
) {
    for tr in out.transitions {
        ctx.log.push(HdcLogLine {
            time: t,
            node: me,
            event: format!("status_{}", tr.field),
            detail: format!("{}->{}", tr.from.name(), tr.to.name()),
        });
    }
    for (msg, scope) in out.broadcasts {
        match &msg {
            HdcMessage::JamBack { l, front_location, g } => ctx.log.push(HdcLogLine {
                time: t,
                node: me,
                event: "announce_back".into(),
                detail: format!("l={l} front={front_location} g={g}"),
            }),
            HdcMessage::FrontLocation { l_front } => ctx.log.push(HdcLogLine {
                time: t,
                node: me,
                event: "announce_front".into(),
                detail: format!("l={l_front}"),
            }),
            _ => {}
        }
        let jitter = if params.jitter_max > 0.0 {
            ctx.rngs[node].uniform_in(0.0, params.jitter_max)
        } else {
            0.0
        };
        if t + jitter <= ctx.end {
            kernel
                .schedule(t + jitter, HdcEvent::Tx { node, msg, scope })
                .expect("future");
        }
    }
    for (kind, at) in out.timers {
        if at > ctx.end {
            continue;
        }
        if kind == HdcTimer::PendingMessage {
            kernel.schedule(at, HdcEvent::Timer { node, kind }).expect("future");
        } else {
            if let Some(h) = ctx.handles[node].remove(kind.name()) {
                kernel.cancel(h);
            }
            let h = kernel.schedule(at, HdcEvent::Timer { node, kind }).expect("future");
            ctx.handles[node].insert(kind.name(), h);
        }
    }
}

/// Run matching the scenario's experiment kind; used by the command line.
pub fn run_scenario(scenario: &Scenario, opts: &MatrixOptions) -> Result<ScenarioOutput, RunError> {
    match scenario.experiment {
        Experiment::Dissemination => Ok(ScenarioOutput::Dissemination(run_matrix(scenario, opts)?)),
        Experiment::SpeedLimit => {
            let mut outcomes = Vec::new();
            for &v in &scenario.v_max_sweep_kmh {
                for &seed in &scenario.seeds {
                    outcomes.push(run_speedlimit(scenario, v, seed)?);
                }
            }
            Ok(ScenarioOutput::SpeedLimit(outcomes))
        }
        Experiment::Hdc => {
            let mut runs = Vec::new();
            for &seed in &scenario.seeds {
                runs.push((seed, run_hdc(scenario, seed)?));
            }
            Ok(ScenarioOutput::Hdc(runs))
        }
    }
}

pub enum ScenarioOutput {
    Dissemination(MatrixOutput),
    SpeedLimit(Vec<SpeedLimitOutcome>),
    Hdc(Vec<(u64, HdcRunOutput)>),
}
