//! Vehicle kinematics on a straight multi-lane highway.
//!
//! The car-following update is a Krauss-style safe-speed model: accelerate
//! toward the limit, never exceed the speed that keeps the gap to the
//! leader closable at bounded deceleration, and randomly dawdle with a
//! configurable probability. That family is enough to reproduce spontaneous
//! jam formation at near-critical densities, which is all the downstream
//! consumers need.
//!
//! Lanes are signed: positive lanes travel toward growing positions,
//! negative lanes the opposite way. Opposing traffic matters only to the
//! radio graph, so it runs the same model in mirrored coordinates.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::kernel::Seconds;
use crate::rng::RngStream;
use crate::road::{Boundary, Road};

pub type VehicleId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub lane: i32,
    /// Meters along the road axis, in [0, road length).
    pub position: f64,
    /// Speed over ground in m/s; the speed the vehicle will hold until the
    /// next snapshot.
    pub speed: f64,
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct MobilityParams {
    pub road_length_m: f64,
    pub lanes_per_direction: u32,
    /// 1 = one-way traffic, 2 = both directions.
    pub directions: u32,
    /// Speed limit in m/s.
    pub v_max: f64,
    /// Mean vehicle density over all lanes, vehicles per km.
    pub mean_density_veh_km: f64,
    pub accel: f64,
    pub decel: f64,
    /// Dawdling probability per vehicle per step, in [0, 1].
    pub driver_imperfection: f64,
    /// Mobility timestep; also the follower reaction time.
    pub dt: Seconds,
    pub vehicle_length_m: f64,
    /// Initial placement noise as a fraction of the mean spacing.
    pub placement_jitter: f64,
    pub boundary: Boundary,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams {
            road_length_m: 10_000.0,
            lanes_per_direction: 2,
            directions: 2,
            v_max: kmh_to_mps(105.0),
            mean_density_veh_km: 36.0,
            accel: 0.8,
            decel: 4.5,
            driver_imperfection: 0.3,
            dt: 1.0,
            vehicle_length_m: 5.0,
            placement_jitter: 0.1,
            boundary: Boundary::Ring,
        }
    }
}

impl MobilityParams {
    pub fn road(&self) -> Road {
        Road::new(self.road_length_m, self.boundary)
    }

    pub fn validate(&self) -> Result<(), MobilityError> {
        let positive = [
            ("road_length_m", self.road_length_m),
            ("v_max", self.v_max),
            ("mean_density_veh_km", self.mean_density_veh_km),
            ("accel", self.accel),
            ("decel", self.decel),
            ("dt", self.dt),
            ("vehicle_length_m", self.vehicle_length_m),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(MobilityError::BadParam { name, value: v });
            }
        }
        if self.lanes_per_direction == 0 || !(1..=2).contains(&self.directions) {
            return Err(MobilityError::BadParam { name: "lanes", value: self.lanes_per_direction as f64 });
        }
        if !(0.0..=1.0).contains(&self.driver_imperfection) {
            return Err(MobilityError::BadParam { name: "driver_imperfection", value: self.driver_imperfection });
        }
        Ok(())
    }
}

/// Exact once-only conversion from the configured km/h figure.
pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("parameter {name} out of range: {value}")]
    BadParam { name: &'static str, value: f64 },
    #[error("vehicles in lane {lane} are not sorted by travel progress")]
    Unsorted { lane: i32 },
    #[error("vehicles {a} and {b} overlap in lane {lane}")]
    Overlap { lane: i32, a: VehicleId, b: VehicleId },
    #[error("penetration rate {0} outside [0, 1]")]
    BadRate(f64),
}

/// A forced slowdown: `vehicle` may not exceed `speed_cap` during
/// [start, start + duration). Used to inject perturbations.
#[derive(Debug, Clone, Copy)]
pub struct Perturbation {
    pub vehicle: VehicleId,
    pub start: Seconds,
    pub duration: Seconds,
    pub speed_cap: f64,
}

impl Perturbation {
    fn active(&self, t: Seconds) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

/// The simulated vehicle population between two snapshots: `from` at
/// `t_from` and the precomputed `to` at `t_to = t_from + dt`. Event
/// handlers that fire between snapshots interpolate.
#[derive(Debug)]
pub struct World {
    pub road: Road,
    pub params: MobilityParams,
    pub t_from: Seconds,
    from: Vec<VehicleState>,
    to: Vec<VehicleState>,
    /// Per-lane vehicle indices sorted rear-to-front in travel order.
    lanes: Vec<(i32, Vec<usize>)>,
    rng: Vec<RngStream>,
    pub perturbations: Vec<Perturbation>,
}

impl World {
    /// Uniformly spaced population with seeded placement jitter.
    pub fn uniform(params: &MobilityParams, master_seed: u64) -> Result<World, MobilityError> {
        params.validate()?;
        let total = (params.mean_density_veh_km * params.road_length_m / 1000.0).round() as usize;
        let mut lane_ids: Vec<i32> = Vec::new();
        for l in 1..=params.lanes_per_direction as i32 {
            lane_ids.push(l);
            if params.directions == 2 {
                lane_ids.push(-l);
            }
        }
        lane_ids.sort_unstable();
        let n_lanes = lane_ids.len();

        let mut vehicles = Vec::with_capacity(total);
        let mut next_id: VehicleId = 0;
        let mut placement = RngStream::derive(master_seed, crate::rng::StreamId::Mobility(u64::MAX));
        for (k, &lane) in lane_ids.iter().enumerate() {
            let n = total / n_lanes + usize::from(k < total % n_lanes);
            if n == 0 {
                continue;
            }
            let spacing = params.road_length_m / n as f64;
            let max_jitter =
                (params.placement_jitter * spacing).min((spacing - params.vehicle_length_m) * 0.45).max(0.0);
            for j in 0..n {
                let jitter = placement.uniform_in(-max_jitter, max_jitter);
                let progress = (j as f64 * spacing + jitter).clamp(0.0, params.road_length_m - 1e-6);
                let position = match lane.signum() {
                    1 => progress,
                    _ => params.road_length_m - progress,
                };
                let gap = spacing - params.vehicle_length_m;
                let speed = params.v_max.min((0.9 * gap / params.dt).max(0.0));
                vehicles.push(VehicleState {
                    id: next_id,
                    lane,
                    position: Road::new(params.road_length_m, Boundary::Ring).wrap(position),
                    speed,
                    length: params.vehicle_length_m,
                });
                next_id += 1;
            }
        }
        World::from_vehicles(params.clone(), vehicles, master_seed)
    }

    /// Build a world from explicit vehicle states; validates per-lane order
    /// and the no-overlap invariant.
    pub fn from_vehicles(
        params: MobilityParams,
        vehicles: Vec<VehicleState>,
        master_seed: u64,
    ) -> Result<World, MobilityError> {
        let road = params.road();
        let mut lanes: Vec<(i32, Vec<usize>)> = Vec::new();
        for (i, v) in vehicles.iter().enumerate() {
            match lanes.iter_mut().find(|(l, _)| *l == v.lane) {
                Some((_, idxs)) => idxs.push(i),
                None => lanes.push((v.lane, vec![i])),
            }
        }
        lanes.sort_by_key(|(l, _)| *l);
        for (lane, idxs) in lanes.iter_mut() {
            idxs.sort_by(|&a, &b| {
                progress(&vehicles[a], *lane, &road).total_cmp(&progress(&vehicles[b], *lane, &road))
            });
            for w in idxs.windows(2) {
                let (a, b) = (&vehicles[w[0]], &vehicles[w[1]]);
                let gap = progress(b, *lane, &road) - b.length - progress(a, *lane, &road);
                if gap < -1e-9 {
                    return Err(MobilityError::Overlap { lane: *lane, a: a.id, b: b.id });
                }
            }
        }
        let rng = vehicles
            .iter()
            .map(|v| RngStream::derive(master_seed, crate::rng::StreamId::Mobility(v.id as u64)))
            .collect();
        let mut world = World {
            road,
            params,
            t_from: 0.0,
            from: vehicles.clone(),
            to: vehicles,
            lanes,
            rng,
            perturbations: Vec::new(),
        };
        world.compute_next();
        Ok(world)
    }

    pub fn len(&self) -> usize {
        self.from.len()
    }

    pub fn is_empty(&self) -> bool {
        self.from.is_empty()
    }

    pub fn dt(&self) -> Seconds {
        self.params.dt
    }

    /// Snapshot currently in force (time `t_from`).
    pub fn snapshot(&self) -> &[VehicleState] {
        &self.from
    }

    pub fn vehicle(&self, idx: usize) -> &VehicleState {
        &self.from[idx]
    }

    /// Interpolated position of vehicle `idx` at `t` in [t_from, t_from+dt].
    pub fn position_at(&self, idx: usize, t: Seconds) -> f64 {
        let frac = ((t - self.t_from) / self.params.dt).clamp(0.0, 1.0);
        self.road.lerp_position(self.from[idx].position, self.to[idx].position, frac)
    }

    /// Speed is piecewise constant over a step.
    pub fn speed_at(&self, idx: usize, _t: Seconds) -> f64 {
        self.from[idx].speed
    }

    /// Advance one step: the precomputed `to` snapshot becomes current and
    /// the following one is computed.
    pub fn advance(&mut self) {
        self.t_from += self.params.dt;
        std::mem::swap(&mut self.from, &mut self.to);
        self.compute_next();
    }

    fn compute_next(&mut self) {
        let p = &self.params;
        let road = self.road;
        let tau = p.dt;
        self.to.clone_from(&self.from);

        // Ring wrap-around reshuffles progress coordinates, so the per-lane
        // rear-to-front order must be rebuilt from the current snapshot.
        for (lane, order) in self.lanes.iter_mut() {
            let from = &self.from;
            order.sort_by(|&a, &b| {
                progress(&from[a], *lane, &road).total_cmp(&progress(&from[b], *lane, &road))
            });
        }

        for (lane, order) in &self.lanes {
            let n = order.len();
            if n == 0 {
                continue;
            }
            // New speeds from the old snapshot, synchronously.
            let mut new_speed = vec![0.0f64; n];
            for (k, &idx) in order.iter().enumerate() {
                let me = &self.from[idx];
                let v = me.speed;
                let my_prog = progress(me, *lane, &road);
                let v_safe = if n == 1 && road.boundary == Boundary::Open {
                    f64::INFINITY
                } else {
                    let (leader_idx, leader_offset) = if k + 1 < n {
                        (order[k + 1], 0.0)
                    } else if road.boundary == Boundary::Ring {
                        (order[0], road.length_m)
                    } else {
                        (idx, f64::INFINITY) // open boundary, no leader
                    };
                    if leader_offset.is_infinite() {
                        f64::INFINITY
                    } else {
                        let leader = &self.from[leader_idx];
                        let gap = progress(leader, *lane, &road) + leader_offset
                            - leader.length
                            - my_prog;
                        krauss_safe_speed(v, leader.speed, gap, p.decel, tau)
                    }
                };
                let v_des = (v + p.accel * tau).min(p.v_max).min(v_safe).max(0.0);
                // Two draws per vehicle-step regardless of the branch, so
                // parameter variants replay the same randomness.
                let dawdles = self.rng[idx].bernoulli(p.driver_imperfection);
                let amount = self.rng[idx].uniform();
                let mut v_new = if dawdles { (v_des - amount * p.accel * tau).max(0.0) } else { v_des };
                for pert in &self.perturbations {
                    if pert.vehicle == self.from[idx].id && pert.active(self.t_from) {
                        v_new = v_new.min(pert.speed_cap);
                    }
                }
                new_speed[k] = v_new;
            }
            // New positions front-to-back with a hard no-overlap clamp.
            let mut new_prog = vec![0.0f64; n];
            for k in (0..n).rev() {
                let idx = order[k];
                let me = &self.from[idx];
                let my_prog = progress(me, *lane, &road);
                let mut target = my_prog + new_speed[k] * tau;
                let limit = if k + 1 < n {
                    let leader = &self.from[order[k + 1]];
                    Some(new_prog[k + 1] - leader.length)
                } else if road.boundary == Boundary::Ring && n > 1 {
                    // Front vehicle sees the rearmost across the seam; clamp
                    // against its old position, which it can only improve on.
                    let rear = &self.from[order[0]];
                    Some(progress(rear, *lane, &road) + road.length_m - rear.length)
                } else {
                    None
                };
                if let Some(limit) = limit {
                    if target > limit {
                        target = limit.max(my_prog);
                    }
                }
                new_prog[k] = target;
                let v_eff = (target - my_prog) / tau;
                let out = &mut self.to[idx];
                out.speed = v_eff;
                out.position = match lane.signum() {
                    1 => road.wrap(target),
                    _ => road.wrap(road.length_m - target),
                };
            }
        }
    }
}

fn progress(v: &VehicleState, lane: i32, road: &Road) -> f64 {
    if lane >= 0 {
        v.position
    } else {
        road.length_m - v.position
    }
}

/// Krauss safe speed: the fastest speed from which the follower can still
/// match the leader without closing the (bumper-to-bumper) gap below zero,
/// assuming both brake at most with `decel`.
fn krauss_safe_speed(v: f64, v_leader: f64, gap: f64, decel: f64, tau: f64) -> f64 {
    v_leader + (gap - v_leader * tau) / ((v + v_leader) / (2.0 * decel) + tau)
}

// ---------------------------------------------------------------------------
// Penetration sampling and the closed-form neighborhood size
// ---------------------------------------------------------------------------

/// Sample the set of equipped vehicles: each vehicle independently with
/// probability `rate`, in ascending id order from one dedicated stream.
pub fn sample_penetration(
    vehicles: &[VehicleState],
    rate: f64,
    rng: &mut RngStream,
) -> Result<BTreeSet<VehicleId>, MobilityError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(MobilityError::BadRate(rate));
    }
    let mut ids: Vec<VehicleId> = vehicles.iter().map(|v| v.id).collect();
    ids.sort_unstable();
    Ok(ids.into_iter().filter(|_| rng.bernoulli(rate)).collect())
}

/// Expected one-hop neighborhood size: density * (2R / 1000) * rate.
pub fn expected_neighborhood(density_veh_km: f64, rate: f64, range_m: f64) -> f64 {
    density_veh_km * (2.0 * range_m / 1000.0) * rate
}

// ---------------------------------------------------------------------------
// Trace history and its file format
// ---------------------------------------------------------------------------

/// Recorded world history at a fixed snapshot cadence. Vehicle-major layout
/// so post-processing can walk one trajectory cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub dt: Seconds,
    pub start_time: Seconds,
    pub ids: Vec<VehicleId>,
    pub lanes: Vec<i32>,
    /// Indexed as positions per vehicle, then per snapshot.
    pub positions: Vec<Vec<f64>>,
    pub speeds: Vec<Vec<f64>>,
}

impl History {
    pub fn new(dt: Seconds, start_time: Seconds) -> History {
        History { dt, start_time, ids: Vec::new(), lanes: Vec::new(), positions: Vec::new(), speeds: Vec::new() }
    }

    pub fn snapshots(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    pub fn end_time(&self) -> Seconds {
        self.start_time + self.dt * (self.snapshots().saturating_sub(1)) as f64
    }

    pub fn record(&mut self, world: &World) {
        if self.ids.is_empty() {
            for v in world.snapshot() {
                self.ids.push(v.id);
                self.lanes.push(v.lane);
                self.positions.push(Vec::new());
                self.speeds.push(Vec::new());
            }
        }
        for (i, v) in world.snapshot().iter().enumerate() {
            debug_assert_eq!(self.ids[i], v.id);
            self.positions[i].push(v.position);
            self.speeds[i].push(v.speed);
        }
    }

    /// Interpolated position of vehicle index `i` at time `t`, clamped to
    /// the recorded window.
    pub fn position_at(&self, road: &Road, i: usize, t: Seconds) -> f64 {
        let track = &self.positions[i];
        let s = (t - self.start_time) / self.dt;
        if s <= 0.0 {
            return track[0];
        }
        let last = track.len() - 1;
        let k = (s.floor() as usize).min(last);
        if k == last {
            return track[last];
        }
        road.lerp_position(track[k], track[k + 1], s - k as f64)
    }

    /// One full snapshot reconstituted at index `k`.
    pub fn snapshot_at(&self, k: usize, vehicle_length: f64) -> Vec<VehicleState> {
        (0..self.ids.len())
            .map(|i| VehicleState {
                id: self.ids[i],
                lane: self.lanes[i],
                position: self.positions[i][k],
                speed: self.speeds[i][k],
                length: vehicle_length,
            })
            .collect()
    }

    pub fn time_of(&self, k: usize) -> Seconds {
        self.start_time + k as f64 * self.dt
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: time goes backwards")]
    NonMonotoneTime { line: usize },
}

/// Write the portable trace format:
/// a `# vanet-trace v1 dt=<seconds>` header, then CSV records
/// `time,id,lane,position_m,speed_mps` sorted by (time, id).
pub fn export_trace(h: &History, out: &mut impl Write) -> Result<(), TraceError> {
    writeln!(out, "# vanet-trace v1 dt={}", h.dt)?;
    writeln!(out, "time,id,lane,position_m,speed_mps")?;
    for k in 0..h.snapshots() {
        let t = h.time_of(k);
        let mut order: Vec<usize> = (0..h.ids.len()).collect();
        order.sort_by_key(|&i| h.ids[i]);
        for i in order {
            writeln!(out, "{},{},{},{},{}", t, h.ids[i], h.lanes[i], h.positions[i][k], h.speeds[i][k])?;
        }
    }
    Ok(())
}

pub fn import_trace(input: &mut impl BufRead) -> Result<History, TraceError> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(TraceError::Malformed { line: 1, msg: "empty file, missing header".into() })?;
    let header = header?;
    let dt: Seconds = header
        .strip_prefix("# vanet-trace v1 dt=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or(TraceError::Malformed { line: 1, msg: "expected `# vanet-trace v1 dt=<seconds>`".into() })?;

    let mut h = History::new(dt, 0.0);
    let mut index_of: Vec<(VehicleId, usize)> = Vec::new();
    let mut last_time: Option<Seconds> = None;
    let mut started = false;
    for (lineno0, line) in lines {
        let line_no = lineno0 + 1;
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with("time,") {
            continue; // column header
        }
        let mut fields = line.split(',');
        let mut field = |name: &str| {
            fields
                .next()
                .ok_or_else(|| TraceError::Malformed { line: line_no, msg: format!("missing field {name}") })
        };
        let t: Seconds = parse(field("time")?, line_no, "time")?;
        let id: VehicleId = parse(field("id")?, line_no, "id")?;
        let lane: i32 = parse(field("lane")?, line_no, "lane")?;
        let pos: f64 = parse(field("position_m")?, line_no, "position_m")?;
        let speed: f64 = parse(field("speed_mps")?, line_no, "speed_mps")?;

        match last_time {
            None => {
                h.start_time = t;
                last_time = Some(t);
            }
            Some(lt) if t < lt => return Err(TraceError::NonMonotoneTime { line: line_no }),
            Some(lt) if t > lt => {
                last_time = Some(t);
                started = true;
            }
            _ => {}
        }
        let idx = match index_of.iter().find(|(vid, _)| *vid == id) {
            Some(&(_, idx)) => idx,
            None => {
                if started {
                    return Err(TraceError::Malformed {
                        line: line_no,
                        msg: format!("vehicle {id} appears after the first snapshot"),
                    });
                }
                let idx = h.ids.len();
                h.ids.push(id);
                h.lanes.push(lane);
                h.positions.push(Vec::new());
                h.speeds.push(Vec::new());
                index_of.push((id, idx));
                idx
            }
        };
        h.positions[idx].push(pos);
        h.speeds[idx].push(speed);
    }
    let n = h.snapshots();
    if h.positions.iter().any(|p| p.len() != n) {
        return Err(TraceError::Malformed { line: 0, msg: "snapshots do not cover all vehicles".into() });
    }
    Ok(h)
}

fn parse<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<T, TraceError> {
    s.trim()
        .parse()
        .map_err(|_| TraceError::Malformed { line, msg: format!("bad {name}: {s:?}") })
}
