//! Scenario configuration: a versioned, line-oriented `key = value` format,
//! built-in presets, and full-default printing. Unknown keys are rejected
//! and every error names the key and line, because byte-exact reproduction
//! of a run starts with a pinned config schema.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dissemination::{DisseminationParams, Protocol};
use crate::hdc::{CrModel, CvModel, HdcParams};
use crate::kernel::Seconds;
use crate::mobility::{kmh_to_mps, MobilityParams, Perturbation};
use crate::radio::RadioParams;
use crate::road::Boundary;

pub const SCENARIO_HEADER: &str = "# vanet-scenario v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Protocol x penetration x concurrent-units matrix.
    Dissemination,
    /// Jam emergence under a sweep of speed limits.
    SpeedLimit,
    /// Jam-boundary tracking with hovering data clouds.
    Hdc,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::Dissemination => "dissemination",
            Experiment::SpeedLimit => "speedlimit",
            Experiment::Hdc => "hdc",
        }
    }
}

/// Jam-detection knobs layered over the mobility speed limit.
#[derive(Debug, Clone)]
pub struct JamConfig {
    pub stop_speed_mps: f64,
    pub connect_gap_m: f64,
    pub window_s: Seconds,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub experiment: Experiment,
    pub warmup_s: Seconds,
    pub measure_s: Seconds,
    pub seeds: Vec<u64>,
    pub mobility: MobilityParams,
    /// km/h figure kept exact; converted to m/s exactly once.
    pub v_max_kmh: f64,
    /// Speed limits swept by the speed-limit experiment.
    pub v_max_sweep_kmh: Vec<f64>,
    pub perturbation: Option<Perturbation>,
    pub radio: RadioParams,
    pub collisions: bool,
    pub protocols: Vec<Protocol>,
    pub dissemination: DisseminationParams,
    pub penetrations: Vec<f64>,
    pub concurrent_units: Vec<u32>,
    pub unit_lifetime_s: Seconds,
    pub unit_target_span_m: f64,
    pub unit_payload_bytes: u32,
    /// Unit generation point; road middle when absent.
    pub unit_origin_m: Option<f64>,
    pub hdc: HdcParams,
    pub jam: JamConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            experiment: Experiment::Dissemination,
            warmup_s: 600.0,
            measure_s: 960.0,
            seeds: vec![1],
            mobility: MobilityParams::default(),
            v_max_kmh: 105.0,
            v_max_sweep_kmh: vec![105.0, 100.0],
            perturbation: None,
            radio: RadioParams::default(),
            collisions: true,
            protocols: vec![
                Protocol::Flooding,
                Protocol::Mile,
                Protocol::MileOnDemand,
                Protocol::AutoCast,
                Protocol::Oracle,
            ],
            dissemination: DisseminationParams::default(),
            penetrations: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            concurrent_units: vec![2, 50],
            unit_lifetime_s: 50.0,
            unit_target_span_m: 5000.0,
            unit_payload_bytes: 200,
            unit_origin_m: None,
            hdc: HdcParams::default(),
            jam: JamConfig { stop_speed_mps: 1.0, connect_gap_m: 50.0, window_s: 120.0 },
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing or wrong header line; expected `{SCENARIO_HEADER}`")]
    BadHeader,
    #[error("line {line}: malformed line (expected `key = value`)")]
    MalformedLine { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: &'static str },
    #[error("key `{key}`: {msg}")]
    Invalid { key: &'static str, msg: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl Scenario {
    /// Effective speed limit in m/s.
    pub fn v_max(&self) -> f64 {
        kmh_to_mps(self.v_max_kmh)
    }

    pub fn measure_start(&self) -> Seconds {
        self.warmup_s
    }

    pub fn measure_end(&self) -> Seconds {
        self.warmup_s + self.measure_s
    }

    pub fn origin_point(&self) -> f64 {
        self.unit_origin_m.unwrap_or(self.mobility.road_length_m / 2.0)
    }

    /// Built-in presets. `paper-*` reproduce the full-scale setups;
    /// `desk-*` scale road and duration down so the whole matrix runs on a
    /// laptop while keeping densities and rates identical.
    pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
        let mut s = Scenario::default();
        match name {
            "paper-dissemination" => {}
            "desk-dissemination" => {
                s.mobility.road_length_m = 2000.0;
                s.warmup_s = 60.0;
                s.measure_s = 240.0;
                s.penetrations = vec![0.2, 0.4, 0.6, 0.8, 1.0];
                s.concurrent_units = vec![10];
            }
            "paper-speedlimit" => {
                // Pinned witness of the speed-limit bifurcation: with this
                // configuration and seed the jam detector fires at 105 km/h
                // and stays quiet at 100 km/h.
                s.experiment = Experiment::SpeedLimit;
                s.mobility.mean_density_veh_km = 30.0;
                s.mobility.lanes_per_direction = 1;
                s.mobility.directions = 1;
                s.mobility.road_length_m = 6666.0;
                s.mobility.driver_imperfection = 0.5;
                s.mobility.accel = 0.6;
                s.v_max_sweep_kmh = vec![105.0, 100.0];
                s.warmup_s = 120.0;
                s.measure_s = 300.0;
                s.seeds = vec![7];
                s.perturbation =
                    Some(Perturbation { vehicle: 0, start: 150.0, duration: 10.0, speed_cap: 8.0 });
            }
            "desk-hdc" => {
                s.experiment = Experiment::Hdc;
                s.mobility.road_length_m = 3000.0;
                s.mobility.mean_density_veh_km = 8.0;
                s.mobility.lanes_per_direction = 1;
                s.mobility.directions = 1;
                s.mobility.driver_imperfection = 0.1;
                s.warmup_s = 30.0;
                s.measure_s = 240.0;
                s.penetrations = vec![1.0];
                s.seeds = vec![1, 2, 3];
                // A near-standstill bottleneck released after two minutes:
                // the queue grows (carrier churn at the back) and then
                // discharges. Sparse inflow keeps the queue shorter than
                // the attachment radius, and a fixed congestion radius
                // keeps fast approachers from masking the rear boundary.
                s.perturbation =
                    Some(Perturbation { vehicle: 0, start: 60.0, duration: 120.0, speed_cap: 0.5 });
                s.hdc.cr = CrModel::Constant(15.0);
                s.hdc.cv = CvModel::Constant(5.0);
                s.hdc.r_hdc = 150.0;
                s.hdc.t_information = 5.0;
                s.hdc.t_aheadinfo = 5.0;
            }
            other => return Err(ScenarioError::UnknownPreset(other.to_string())),
        }
        s.finish()
    }

    /// Apply derived fields and validate.
    fn finish(mut self) -> Result<Scenario, ScenarioError> {
        self.mobility.v_max = kmh_to_mps(self.v_max_kmh);
        self.mobility
            .validate()
            .map_err(|e| ScenarioError::Invalid { key: "mobility", msg: e.to_string() })?;
        self.hdc
            .validate()
            .map_err(|e| ScenarioError::Invalid { key: "hdc", msg: e.to_string() })?;
        if self.seeds.is_empty() {
            return Err(ScenarioError::Invalid { key: "sim.seeds", msg: "at least one seed".into() });
        }
        for &p in &self.penetrations {
            if !(0.0..=1.0).contains(&p) {
                return Err(ScenarioError::Invalid {
                    key: "penetration.rates",
                    msg: format!("rate {p} outside [0, 1]"),
                });
            }
        }
        if self.protocols.is_empty() {
            return Err(ScenarioError::Invalid { key: "protocol.kinds", msg: "none selected".into() });
        }
        if !self.unit_lifetime_s.is_finite() || self.unit_lifetime_s <= 0.0 {
            return Err(ScenarioError::Invalid {
                key: "units.lifetime_s",
                msg: "must be positive".into(),
            });
        }
        Ok(self)
    }

    /// Serialize every parameter; the output parses back to an identical
    /// scenario.
    pub fn to_config(&self) -> String {
        let mut out = String::new();
        out.push_str(SCENARIO_HEADER);
        out.push('\n');
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("experiment", self.experiment.name().into());
        kv("sim.warmup_s", self.warmup_s.to_string());
        kv("sim.measure_s", self.measure_s.to_string());
        kv("sim.seeds", join(&self.seeds));
        kv("mobility.road_length_m", self.mobility.road_length_m.to_string());
        kv("mobility.lanes_per_direction", self.mobility.lanes_per_direction.to_string());
        kv("mobility.directions", self.mobility.directions.to_string());
        kv("mobility.v_max_kmh", self.v_max_kmh.to_string());
        kv("mobility.v_max_sweep_kmh", join(&self.v_max_sweep_kmh));
        kv("mobility.density_veh_km", self.mobility.mean_density_veh_km.to_string());
        kv("mobility.accel_mps2", self.mobility.accel.to_string());
        kv("mobility.decel_mps2", self.mobility.decel.to_string());
        kv("mobility.driver_imperfection", self.mobility.driver_imperfection.to_string());
        kv("mobility.dt_s", self.mobility.dt.to_string());
        kv("mobility.vehicle_length_m", self.mobility.vehicle_length_m.to_string());
        kv("mobility.placement_jitter", self.mobility.placement_jitter.to_string());
        kv(
            "mobility.boundary",
            match self.mobility.boundary {
                Boundary::Ring => "ring".into(),
                Boundary::Open => "open".into(),
            },
        );
        match self.perturbation {
            Some(p) => {
                kv("perturb.vehicle", p.vehicle.to_string());
                kv("perturb.start_s", p.start.to_string());
                kv("perturb.duration_s", p.duration.to_string());
                kv("perturb.speed_mps", p.speed_cap.to_string());
            }
            None => kv("perturb.vehicle", "none".into()),
        }
        kv("radio.range_m", self.radio.range_m.to_string());
        kv("radio.bandwidth_bps", self.radio.bandwidth_bps.to_string());
        kv("radio.tx_delay_s", self.radio.tx_delay.to_string());
        kv("radio.header_bytes", self.radio.header_bytes.to_string());
        kv("radio.collisions", self.collisions.to_string());
        kv(
            "protocol.kinds",
            self.protocols.iter().map(|p| p.name()).collect::<Vec<_>>().join(","),
        );
        kv("protocol.update_interval_s", self.dissemination.update_interval.to_string());
        kv("protocol.max_payload_bytes", self.dissemination.max_payload.to_string());
        kv("protocol.flood_jitter_max_s", self.dissemination.flood_jitter_max.to_string());
        kv("protocol.p_ref", self.dissemination.autocast.p_ref.to_string());
        kv("protocol.fwd_target", self.dissemination.autocast.fwd_target.to_string());
        kv("protocol.novelty_fraction", self.dissemination.autocast.novelty_fraction.to_string());
        kv("protocol.floor_wait_s", self.dissemination.autocast.floor_wait.to_string());
        kv("protocol.ema_alpha", self.dissemination.autocast.ema_alpha.to_string());
        kv("penetration.rates", join(&self.penetrations));
        kv("units.concurrent", join(&self.concurrent_units));
        kv("units.lifetime_s", self.unit_lifetime_s.to_string());
        kv("units.target_span_m", self.unit_target_span_m.to_string());
        kv("units.payload_bytes", self.unit_payload_bytes.to_string());
        kv(
            "units.origin_m",
            self.unit_origin_m.map(|v| v.to_string()).unwrap_or_else(|| "auto".into()),
        );
        match self.hdc.cr {
            CrModel::Constant(r) => {
                kv("hdc.cr_model", "constant".into());
                kv("hdc.cr_constant_m", r.to_string());
            }
            CrModel::Headway { min_m, headway_s } => {
                kv("hdc.cr_model", "headway".into());
                kv("hdc.cr_min_m", min_m.to_string());
                kv("hdc.cr_headway_s", headway_s.to_string());
            }
        }
        match self.hdc.cv {
            CvModel::Constant(v) => {
                kv("hdc.cv_model", "constant".into());
                kv("hdc.cv_constant_mps", v.to_string());
            }
            CvModel::GapHeadway { headway_s, cap_mps } => {
                kv("hdc.cv_model", "gap_headway".into());
                kv("hdc.cv_headway_s", headway_s.to_string());
                kv("hdc.cv_cap_mps", cap_mps.to_string());
            }
        }
        kv("hdc.cv_max_mps", self.hdc.cv_max.to_string());
        kv("hdc.r_hdc_m", self.hdc.r_hdc.to_string());
        kv("hdc.d_s", self.hdc.d.to_string());
        kv("hdc.t_smdata_s", self.hdc.t_smdata.to_string());
        kv("hdc.t_data_s", self.hdc.t_data.to_string());
        kv("hdc.t_information_s", self.hdc.t_information.to_string());
        kv("hdc.t_aheadinfo_s", self.hdc.t_aheadinfo.to_string());
        kv("hdc.t_ab_s", self.hdc.t_ab.to_string());
        kv("hdc.jitter_max_s", self.hdc.jitter_max.to_string());
        kv("hdc.min_distance_m", self.hdc.min_distance_m.to_string());
        kv("jam.stop_speed_mps", self.jam.stop_speed_mps.to_string());
        kv("jam.connect_gap_m", self.jam.connect_gap_m.to_string());
        kv("jam.window_s", self.jam.window_s.to_string());
        out
    }

    /// Parse a scenario file. The listed keys are required; everything else
    /// falls back to the documented default.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == SCENARIO_HEADER => {}
            _ => return Err(ScenarioError::BadHeader),
        }
        let mut seen: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ScenarioError::MalformedLine { line: line_no })?;
            seen.insert(key.trim().to_string(), (line_no, value.trim().to_string()));
        }

        let mut s = Scenario::default();
        let mut required: BTreeMap<&str, bool> = [
            ("mobility.v_max_kmh", false),
            ("mobility.density_veh_km", false),
            ("mobility.road_length_m", false),
        ]
        .into_iter()
        .collect();

        for (key, (line, value)) in &seen {
            if let Some(flag) = required.get_mut(key.as_str()) {
                *flag = true;
            }
            apply_key(&mut s, key, value, *line)?;
        }
        for (key, present) in required {
            if !present {
                return Err(ScenarioError::MissingKey { key: match key {
                    "mobility.v_max_kmh" => "mobility.v_max_kmh",
                    "mobility.density_veh_km" => "mobility.density_veh_km",
                    _ => "mobility.road_length_m",
                } });
            }
        }
        s.finish()
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<Vec<T>, ScenarioError> {
    value
        .split(',')
        .map(|v| {
            v.trim().parse().map_err(|_| ScenarioError::BadValue {
                line,
                key: key.to_string(),
                msg: format!("bad list element {v:?}"),
            })
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(value: &str, key: &str, line: usize) -> Result<T, ScenarioError> {
    value.trim().parse().map_err(|_| ScenarioError::BadValue {
        line,
        key: key.to_string(),
        msg: format!("cannot parse {value:?}"),
    })
}

fn apply_key(s: &mut Scenario, key: &str, value: &str, line: usize) -> Result<(), ScenarioError> {
    let bad = |msg: &str| ScenarioError::BadValue { line, key: key.to_string(), msg: msg.to_string() };
    match key {
        "experiment" => {
            s.experiment = match value {
                "dissemination" => Experiment::Dissemination,
                "speedlimit" => Experiment::SpeedLimit,
                "hdc" => Experiment::Hdc,
                _ => return Err(bad("expected dissemination|speedlimit|hdc")),
            }
        }
        "sim.warmup_s" => s.warmup_s = parse_one(value, key, line)?,
        "sim.measure_s" => s.measure_s = parse_one(value, key, line)?,
        "sim.seeds" => s.seeds = parse_list(value, key, line)?,
        "mobility.road_length_m" => s.mobility.road_length_m = parse_one(value, key, line)?,
        "mobility.lanes_per_direction" => s.mobility.lanes_per_direction = parse_one(value, key, line)?,
        "mobility.directions" => s.mobility.directions = parse_one(value, key, line)?,
        "mobility.v_max_kmh" => s.v_max_kmh = parse_one(value, key, line)?,
        "mobility.v_max_sweep_kmh" => s.v_max_sweep_kmh = parse_list(value, key, line)?,
        "mobility.density_veh_km" => s.mobility.mean_density_veh_km = parse_one(value, key, line)?,
        "mobility.accel_mps2" => s.mobility.accel = parse_one(value, key, line)?,
        "mobility.decel_mps2" => s.mobility.decel = parse_one(value, key, line)?,
        "mobility.driver_imperfection" => s.mobility.driver_imperfection = parse_one(value, key, line)?,
        "mobility.dt_s" => s.mobility.dt = parse_one(value, key, line)?,
        "mobility.vehicle_length_m" => s.mobility.vehicle_length_m = parse_one(value, key, line)?,
        "mobility.placement_jitter" => s.mobility.placement_jitter = parse_one(value, key, line)?,
        "mobility.boundary" => {
            s.mobility.boundary = match value {
                "ring" => Boundary::Ring,
                "open" => Boundary::Open,
                _ => return Err(bad("expected ring|open")),
            }
        }
        "perturb.vehicle" => {
            if value == "none" {
                s.perturbation = None;
            } else {
                let p = s.perturbation.get_or_insert(Perturbation {
                    vehicle: 0,
                    start: 0.0,
                    duration: 0.0,
                    speed_cap: 0.0,
                });
                p.vehicle = parse_one(value, key, line)?;
            }
        }
        "perturb.start_s" | "perturb.duration_s" | "perturb.speed_mps" => {
            let v: f64 = parse_one(value, key, line)?;
            let p = s.perturbation.get_or_insert(Perturbation {
                vehicle: 0,
                start: 0.0,
                duration: 0.0,
                speed_cap: 0.0,
            });
            match key {
                "perturb.start_s" => p.start = v,
                "perturb.duration_s" => p.duration = v,
                _ => p.speed_cap = v,
            }
        }
        "radio.range_m" => s.radio.range_m = parse_one(value, key, line)?,
        "radio.bandwidth_bps" => s.radio.bandwidth_bps = parse_one(value, key, line)?,
        "radio.tx_delay_s" => s.radio.tx_delay = parse_one(value, key, line)?,
        "radio.header_bytes" => s.radio.header_bytes = parse_one(value, key, line)?,
        "radio.collisions" => s.collisions = parse_one(value, key, line)?,
        "protocol.kinds" => {
            s.protocols = value
                .split(',')
                .map(|p| Protocol::parse(p.trim()).ok_or_else(|| bad("unknown protocol")))
                .collect::<Result<_, _>>()?;
        }
        "protocol.update_interval_s" => s.dissemination.update_interval = parse_one(value, key, line)?,
        "protocol.max_payload_bytes" => s.dissemination.max_payload = parse_one(value, key, line)?,
        "protocol.flood_jitter_max_s" => s.dissemination.flood_jitter_max = parse_one(value, key, line)?,
        "protocol.p_ref" => s.dissemination.autocast.p_ref = parse_one(value, key, line)?,
        "protocol.fwd_target" => s.dissemination.autocast.fwd_target = parse_one(value, key, line)?,
        "protocol.novelty_fraction" => {
            s.dissemination.autocast.novelty_fraction = parse_one(value, key, line)?
        }
        "protocol.floor_wait_s" => s.dissemination.autocast.floor_wait = parse_one(value, key, line)?,
        "protocol.ema_alpha" => s.dissemination.autocast.ema_alpha = parse_one(value, key, line)?,
        "penetration.rates" => s.penetrations = parse_list(value, key, line)?,
        "units.concurrent" => s.concurrent_units = parse_list(value, key, line)?,
        "units.lifetime_s" => s.unit_lifetime_s = parse_one(value, key, line)?,
        "units.target_span_m" => s.unit_target_span_m = parse_one(value, key, line)?,
        "units.payload_bytes" => s.unit_payload_bytes = parse_one(value, key, line)?,
        "units.origin_m" => {
            s.unit_origin_m =
                if value == "auto" { None } else { Some(parse_one(value, key, line)?) };
        }
        "hdc.cr_model" => match value {
            "constant" => {
                if !matches!(s.hdc.cr, CrModel::Constant(_)) {
                    s.hdc.cr = CrModel::Constant(60.0);
                }
            }
            "headway" => {
                if !matches!(s.hdc.cr, CrModel::Headway { .. }) {
                    s.hdc.cr = CrModel::Headway { min_m: 15.0, headway_s: 2.0 };
                }
            }
            _ => return Err(bad("expected constant|headway")),
        },
        "hdc.cr_constant_m" => {
            let v = parse_one(value, key, line)?;
            s.hdc.cr = CrModel::Constant(v);
        }
        "hdc.cr_min_m" => {
            let v = parse_one(value, key, line)?;
            s.hdc.cr = match s.hdc.cr {
                CrModel::Headway { headway_s, .. } => CrModel::Headway { min_m: v, headway_s },
                _ => CrModel::Headway { min_m: v, headway_s: 2.0 },
            };
        }
        "hdc.cr_headway_s" => {
            let v = parse_one(value, key, line)?;
            s.hdc.cr = match s.hdc.cr {
                CrModel::Headway { min_m, .. } => CrModel::Headway { min_m, headway_s: v },
                _ => CrModel::Headway { min_m: 15.0, headway_s: v },
            };
        }
        "hdc.cv_model" => match value {
            "constant" => {
                if !matches!(s.hdc.cv, CvModel::Constant(_)) {
                    s.hdc.cv = CvModel::Constant(5.0);
                }
            }
            "gap_headway" => {
                if !matches!(s.hdc.cv, CvModel::GapHeadway { .. }) {
                    s.hdc.cv = CvModel::GapHeadway { headway_s: 2.0, cap_mps: 16.7 };
                }
            }
            _ => return Err(bad("expected constant|gap_headway")),
        },
        "hdc.cv_constant_mps" => {
            let v = parse_one(value, key, line)?;
            s.hdc.cv = CvModel::Constant(v);
        }
        "hdc.cv_headway_s" => {
            let v = parse_one(value, key, line)?;
            s.hdc.cv = match s.hdc.cv {
                CvModel::GapHeadway { cap_mps, .. } => CvModel::GapHeadway { headway_s: v, cap_mps },
                _ => CvModel::GapHeadway { headway_s: v, cap_mps: 16.7 },
            };
        }
        "hdc.cv_cap_mps" => {
            let v = parse_one(value, key, line)?;
            s.hdc.cv = match s.hdc.cv {
                CvModel::GapHeadway { headway_s, .. } => CvModel::GapHeadway { headway_s, cap_mps: v },
                _ => CvModel::GapHeadway { headway_s: 2.0, cap_mps: v },
            };
        }
        "hdc.cv_max_mps" => s.hdc.cv_max = parse_one(value, key, line)?,
        "hdc.r_hdc_m" => s.hdc.r_hdc = parse_one(value, key, line)?,
        "hdc.d_s" => s.hdc.d = parse_one(value, key, line)?,
        "hdc.t_smdata_s" => s.hdc.t_smdata = parse_one(value, key, line)?,
        "hdc.t_data_s" => s.hdc.t_data = parse_one(value, key, line)?,
        "hdc.t_information_s" => s.hdc.t_information = parse_one(value, key, line)?,
        "hdc.t_aheadinfo_s" => s.hdc.t_aheadinfo = parse_one(value, key, line)?,
        "hdc.t_ab_s" => s.hdc.t_ab = parse_one(value, key, line)?,
        "hdc.jitter_max_s" => s.hdc.jitter_max = parse_one(value, key, line)?,
        "hdc.min_distance_m" => s.hdc.min_distance_m = parse_one(value, key, line)?,
        "jam.stop_speed_mps" => s.jam.stop_speed_mps = parse_one(value, key, line)?,
        "jam.connect_gap_m" => s.jam.connect_gap_m = parse_one(value, key, line)?,
        "jam.window_s" => s.jam.window_s = parse_one(value, key, line)?,
        _ => return Err(ScenarioError::UnknownKey { line, key: key.to_string() }),
    }
    Ok(())
}
