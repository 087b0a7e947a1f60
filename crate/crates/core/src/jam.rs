//! Ground-truth jam detection, cluster tracking, and the five-way
//! congestion-type classification.
//!
//! A jam is a connected structure of same-direction vehicles below the
//! speed threshold that contains at least one stopped vehicle. Tracking
//! matches clusters across snapshots by spatial overlap. Classification
//! looks at the movement of the cluster boundaries over an observation
//! window, the extent trend, the speed profile between the boundaries, and
//! the presence of similar nearby clusters.

use crate::kernel::Seconds;
use crate::mobility::{History, VehicleId, VehicleState};
use crate::road::Road;

#[derive(Debug, Clone)]
pub struct JamParams {
    pub v_max: f64,
    /// Vehicles below this speed count as congested; half the limit.
    pub v_thresh: f64,
    /// At or below this speed a vehicle counts as stopped.
    pub stop_speed: f64,
    /// Maximum bumper gap for a connected structure.
    pub connect_gap: f64,
    /// Characteristic upstream wave speed, km/h (reporting only).
    pub wave_speed_ref_kmh: f64,
    /// Minimum observation window for classification.
    pub window_s: Seconds,
    /// A back drifting slower than this counts as stationary, km/h.
    pub back_stationary_kmh: f64,
    /// Oscillation detector: required detrended zero crossings per 10 min
    /// and minimum peak-to-trough amplitude as a fraction of v_thresh.
    pub osc_crossings_per_10min: f64,
    pub osc_amplitude_fraction: f64,
    /// Extent counts as growing above this relative increase per window.
    pub extent_growth_rel: f64,
    /// "Nearby" clusters for the wave-train test.
    pub neighbor_radius_m: f64,
    /// Amplitudes within this factor count as similar.
    pub amplitude_factor: f64,
}

impl JamParams {
    pub fn for_v_max(v_max: f64) -> JamParams {
        JamParams {
            v_max,
            v_thresh: v_max / 2.0,
            stop_speed: 1.0,
            connect_gap: 50.0,
            wave_speed_ref_kmh: 15.0,
            window_s: 120.0,
            back_stationary_kmh: 2.0,
            osc_crossings_per_10min: 3.0,
            osc_amplitude_fraction: 0.25,
            extent_growth_rel: 0.20,
            neighbor_radius_m: 5000.0,
            amplitude_factor: 2.0,
        }
    }
}

/// One congestion cluster in one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub direction: i32,
    /// Rearmost member position (upstream end in the driving direction).
    pub back: f64,
    /// Foremost member position.
    pub front: f64,
    pub members: Vec<VehicleId>,
    pub member_speeds: Vec<f64>,
}

impl Cluster {
    pub fn extent(&self) -> f64 {
        self.front - self.back
    }
}

/// Maximal connected runs of congested same-direction vehicles containing
/// at least one stopped vehicle.
pub fn detect_jams(snapshot: &[VehicleState], params: &JamParams, road: &Road) -> Vec<Cluster> {
    let mut out = Vec::new();
    for dir in [1i32, -1] {
        let mut slow: Vec<&VehicleState> = snapshot
            .iter()
            .filter(|v| v.lane.signum() == dir && v.speed < params.v_thresh)
            .collect();
        if slow.is_empty() {
            continue;
        }
        slow.sort_by(|a, b| a.position.total_cmp(&b.position).then(a.id.cmp(&b.id)));
        let mut runs: Vec<Vec<&VehicleState>> = Vec::new();
        let mut current = vec![slow[0]];
        for pair in slow.windows(2) {
            let gap = pair[1].position - pair[1].length - pair[0].position;
            if gap <= params.connect_gap {
                current.push(pair[1]);
            } else {
                runs.push(std::mem::take(&mut current));
                current.push(pair[1]);
            }
        }
        runs.push(current);
        // A ring seam can connect the outermost runs.
        if runs.len() > 1 {
            let first_pos = runs[0][0].position;
            let last = runs.last().unwrap().last().unwrap();
            if road.distance(last.position, first_pos) - last.length <= params.connect_gap
                && (last.position > first_pos)
            {
                let tail = runs.pop().unwrap();
                runs[0].splice(0..0, tail);
            }
        }
        for run in runs {
            if run.iter().any(|v| v.speed <= params.stop_speed) {
                // Back/front span read directly off member positions; for a
                // seam-wrapped run this is the enclosing interval.
                let back = run.iter().map(|v| v.position).fold(f64::INFINITY, f64::min);
                let front = run.iter().map(|v| v.position).fold(0.0f64, f64::max);
                out.push(Cluster {
                    direction: dir,
                    back,
                    front,
                    members: run.iter().map(|v| v.id).collect(),
                    member_speeds: run.iter().map(|v| v.speed).collect(),
                });
            }
        }
    }
    out
}

/// One time-stamped observation of a tracked cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterObservation {
    pub time: Seconds,
    pub back: f64,
    pub front: f64,
    pub member_speeds: Vec<f64>,
}

impl ClusterObservation {
    pub fn extent(&self) -> f64 {
        self.front - self.back
    }

    pub fn mean_speed(&self) -> f64 {
        if self.member_speeds.is_empty() {
            0.0
        } else {
            self.member_speeds.iter().sum::<f64>() / self.member_speeds.len() as f64
        }
    }
}

/// A cluster identity maintained across snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSeries {
    pub id: u32,
    pub direction: i32,
    pub observations: Vec<ClusterObservation>,
}

impl ClusterSeries {
    pub fn first_seen(&self) -> Seconds {
        self.observations.first().map_or(0.0, |o| o.time)
    }

    pub fn last_seen(&self) -> Seconds {
        self.observations.last().map_or(0.0, |o| o.time)
    }

    pub fn duration(&self) -> Seconds {
        self.last_seen() - self.first_seen()
    }

    fn mean_position(&self) -> f64 {
        let s: f64 = self.observations.iter().map(|o| (o.back + o.front) / 2.0).sum();
        s / self.observations.len() as f64
    }

    /// Severity proxy used for the "similar amplitude" test.
    pub fn amplitude(&self) -> f64 {
        let s: f64 = self.observations.iter().map(|o| o.extent()).sum();
        (s / self.observations.len() as f64).max(1.0)
    }
}

/// Spatial overlap of two cluster spans, padded by one vehicle length so a
/// single-vehicle cluster still occupies an interval.
fn overlap(a: &Cluster, b: &Cluster) -> f64 {
    const PAD: f64 = 5.0;
    ((a.front + PAD).min(b.front + PAD) - (a.back - PAD).max(b.back - PAD)).max(0.0)
}

/// Match clusters across consecutive snapshots by maximal spatial overlap.
/// A series continues only through an unambiguous one-to-one match; splits
/// and merges end the old identity and open new ones.
pub fn track_clusters(snapshots: &[(Seconds, Vec<Cluster>)]) -> Vec<ClusterSeries> {
    let mut series: Vec<ClusterSeries> = Vec::new();
    let mut next_id = 0u32;
    // Per live cluster: index into `series`.
    let mut live: Vec<(Cluster, usize)> = Vec::new();
    for (t, clusters) in snapshots {
        let mut assigned: Vec<Option<usize>> = vec![None; clusters.len()];
        // Count overlaps both ways to spot splits and merges.
        for (ci, c) in clusters.iter().enumerate() {
            let mut candidates: Vec<(usize, f64)> = live
                .iter()
                .enumerate()
                .filter(|(_, (p, _))| p.direction == c.direction)
                .map(|(pi, (p, _))| (pi, overlap(p, c)))
                .filter(|(_, ov)| *ov > 0.0)
                .collect();
            candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
            if let Some(&(pi, _)) = candidates.first() {
                let successors = clusters
                    .iter()
                    .filter(|c2| c2.direction == c.direction && overlap(&live[pi].0, c2) > 0.0)
                    .count();
                if successors == 1 && candidates.len() == 1 {
                    assigned[ci] = Some(pi);
                }
            }
        }
        let mut new_live: Vec<(Cluster, usize)> = Vec::new();
        for (ci, c) in clusters.iter().enumerate() {
            let sid = match assigned[ci] {
                Some(pi) => live[pi].1,
                None => {
                    series.push(ClusterSeries {
                        id: next_id,
                        direction: c.direction,
                        observations: Vec::new(),
                    });
                    next_id += 1;
                    series.len() - 1
                }
            };
            series[sid].observations.push(ClusterObservation {
                time: *t,
                back: c.back,
                front: c.front,
                member_speeds: c.member_speeds.clone(),
            });
            new_live.push((c.clone(), sid));
        }
        live = new_live;
    }
    series
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JamType {
    /// Pinned localized cluster: fixed upstream end.
    Plc,
    /// Oscillating congested traffic: growing extent, stop-and-go speeds.
    Oct,
    /// Stop-and-go waves: confined moving clusters in a train.
    Sgw,
    /// Homogeneous congested traffic: growing extent, uniformly low speed.
    Hct,
    /// Moving localized cluster: confined, isolated, drifting upstream.
    Mlc,
}

impl JamType {
    pub fn name(self) -> &'static str {
        match self {
            JamType::Plc => "PLC",
            JamType::Oct => "OCT",
            JamType::Sgw => "SGW",
            JamType::Hct => "HCT",
            JamType::Mlc => "MLC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Label(JamType),
    InsufficientObservation,
}

/// Least-squares slope and intercept of (t, y).
fn linear_fit(points: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64) {
    let n = points.clone().count() as f64;
    if n < 2.0 {
        return (0.0, points.clone().next().map_or(0.0, |(_, y)| y));
    }
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (t, y) in points {
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let denom = n * stt - st * st;
    if denom.abs() < 1e-12 {
        return (0.0, sy / n);
    }
    let slope = (n * sty - st * sy) / denom;
    let intercept = (sy - slope * st) / n;
    (slope, intercept)
}

/// Decision metrics extracted from one series, reported alongside labels.
#[derive(Debug, Clone, Copy)]
pub struct SeriesStats {
    pub back_velocity_kmh: f64,
    pub extent_slope_m_s: f64,
    pub extent_rel_growth: f64,
    pub oscillating: bool,
}

pub fn series_stats(series: &ClusterSeries, params: &JamParams) -> SeriesStats {
    let backs = series.observations.iter().map(|o| (o.time, o.back));
    let (back_slope, _) = linear_fit(backs);
    let extents = series.observations.iter().map(|o| (o.time, o.extent()));
    let (extent_slope, extent_b) = linear_fit(extents.clone());
    let t0 = series.first_seen();
    let duration = series.duration().max(1e-9);
    let extent_start = (extent_b + extent_slope * t0).max(1e-9);
    let rel_growth = extent_slope * duration / extent_start;

    // Oscillation: detrend the mean speed, count zero crossings, and
    // require a real amplitude.
    let speeds: Vec<(f64, f64)> = series.observations.iter().map(|o| (o.time, o.mean_speed())).collect();
    let (sp_slope, sp_b) = linear_fit(speeds.iter().copied());
    let residuals: Vec<f64> = speeds.iter().map(|(t, s)| s - (sp_b + sp_slope * t)).collect();
    let mut crossings = 0u32;
    for w in residuals.windows(2) {
        if (w[0] > 0.0 && w[1] <= 0.0) || (w[0] <= 0.0 && w[1] > 0.0) {
            crossings += 1;
        }
    }
    let peak = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let trough = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    let amplitude_ok = peak - trough >= params.osc_amplitude_fraction * params.v_thresh;
    let crossings_per_10min = crossings as f64 / duration * 600.0;
    let oscillating = amplitude_ok && crossings_per_10min >= params.osc_crossings_per_10min;

    SeriesStats {
        back_velocity_kmh: back_slope * 3.6,
        extent_slope_m_s: extent_slope,
        extent_rel_growth: rel_growth,
        oscillating,
    }
}

/// The decision tree over one observed cluster history.
///
/// 1. stationary back -> pinned localized cluster;
/// 2. moving back with growing extent -> oscillating speeds: OCT,
///    homogeneous low speeds: HCT;
/// 3. moving back, confined extent -> similar clusters nearby: SGW member,
///    isolated: MLC.
pub fn classify(
    series: &ClusterSeries,
    neighbors: &[&ClusterSeries],
    params: &JamParams,
) -> Classification {
    if series.duration() < params.window_s || series.observations.len() < 4 {
        return Classification::InsufficientObservation;
    }
    let stats = series_stats(series, params);
    if stats.back_velocity_kmh.abs() <= params.back_stationary_kmh {
        return Classification::Label(JamType::Plc);
    }
    let growing = stats.extent_slope_m_s > 0.0 && stats.extent_rel_growth >= params.extent_growth_rel;
    if growing {
        return Classification::Label(if stats.oscillating { JamType::Oct } else { JamType::Hct });
    }
    let me_pos = series.mean_position();
    let me_amp = series.amplitude();
    let similar_nearby = neighbors.iter().any(|n| {
        n.id != series.id
            && n.direction == series.direction
            && n.last_seen() >= series.first_seen()
            && n.first_seen() <= series.last_seen()
            && (n.mean_position() - me_pos).abs() <= params.neighbor_radius_m
            && {
                let r = n.amplitude() / me_amp;
                r <= params.amplitude_factor && r >= 1.0 / params.amplitude_factor
            }
    });
    Classification::Label(if similar_nearby { JamType::Sgw } else { JamType::Mlc })
}

/// Detect-and-track over a recorded history: the ground-truth series.
pub fn ground_truth_series(
    history: &History,
    params: &JamParams,
    road: &Road,
    vehicle_length: f64,
) -> Vec<ClusterSeries> {
    let snapshots: Vec<(Seconds, Vec<Cluster>)> = (0..history.snapshots())
        .map(|k| {
            let snap = history.snapshot_at(k, vehicle_length);
            (history.time_of(k), detect_jams(&snap, params, road))
        })
        .collect();
    track_clusters(&snapshots)
}

/// Build cluster series from an HDC event log (`time node event detail`
/// lines). Back announcements carry the announced back location, the known
/// front location and the carrier speed; announcements are bucketed to the
/// announcement period and each bucket becomes one observation. The log is
/// treated as describing a single jam, which holds for the scenarios that
/// produce these logs; multi-jam logs need the ground-truth path.
pub fn series_from_hdc_log_text(text: &str, bucket_s: Seconds) -> Vec<ClusterSeries> {
    let mut announces: Vec<(Seconds, f64, f64, f64)> = Vec::new();
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        let (Some(t), Some(_node), Some(event)) = (parts.next(), parts.next(), parts.next()) else {
            continue;
        };
        if event != "announce_back" {
            continue;
        }
        let Ok(t) = t.parse::<f64>() else { continue };
        let mut l = None;
        let mut front = None;
        let mut g = None;
        for field in parts {
            if let Some(v) = field.strip_prefix("l=") {
                l = v.parse().ok();
            } else if let Some(v) = field.strip_prefix("front=") {
                front = v.parse().ok();
            } else if let Some(v) = field.strip_prefix("g=") {
                g = v.parse().ok();
            }
        }
        if let (Some(l), Some(front), Some(g)) = (l, front, g) {
            announces.push((t, l, front, g));
        }
    }
    if announces.is_empty() {
        return Vec::new();
    }
    announces.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut observations = Vec::new();
    let mut bucket: Vec<(f64, f64, f64)> = Vec::new();
    let mut bucket_start = (announces[0].0 / bucket_s).floor() * bucket_s;
    let flush = |bucket: &mut Vec<(f64, f64, f64)>, t: f64, observations: &mut Vec<ClusterObservation>| {
        if bucket.is_empty() {
            return;
        }
        let mut backs: Vec<f64> = bucket.iter().map(|(l, _, _)| *l).collect();
        let mut fronts: Vec<f64> = bucket.iter().map(|(_, f, _)| *f).collect();
        backs.sort_by(f64::total_cmp);
        fronts.sort_by(f64::total_cmp);
        let back = backs[backs.len() / 2];
        let front = fronts[fronts.len() / 2].max(back);
        observations.push(ClusterObservation {
            time: t,
            back,
            front,
            member_speeds: bucket.iter().map(|(_, _, g)| *g).collect(),
        });
        bucket.clear();
    };
    for (t, l, front, g) in announces {
        if t >= bucket_start + bucket_s {
            flush(&mut bucket, bucket_start, &mut observations);
            bucket_start = (t / bucket_s).floor() * bucket_s;
        }
        bucket.push((l, front, g));
    }
    flush(&mut bucket, bucket_start, &mut observations);
    vec![ClusterSeries { id: 0, direction: 1, observations }]
}

/// Classification report rows:
/// `cluster_id,first_seen,last_seen,label,back_velocity_kmh,extent_trend`.
pub fn classification_report(series: &[ClusterSeries], params: &JamParams) -> String {
    let mut out = String::from("cluster_id,first_seen,last_seen,label,back_velocity_kmh,extent_trend\n");
    let refs: Vec<&ClusterSeries> = series.iter().collect();
    for s in series {
        let label = match classify(s, &refs, params) {
            Classification::Label(t) => t.name().to_string(),
            Classification::InsufficientObservation => "insufficient_observation".to_string(),
        };
        let stats = series_stats(s, params);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.id,
            s.first_seen(),
            s.last_seen(),
            label,
            stats.back_velocity_kmh,
            stats.extent_slope_m_s
        ));
    }
    out
}
