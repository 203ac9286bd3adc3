//! Vehicle trajectory handling: loading trace files, deriving kinematics,
//! extracting fog-centered scenarios, generating synthetic intersection
//! scenarios, and computing the ground-truth expected-warning set.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::BufRead;

use crate::error::{Error, Result};

pub type VehicleId = String;

/// One sampled point of a vehicle trajectory. Speed, heading and acceleration
/// may be absent in the input and filled in by `derive_kinematics`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub vehicle_id: VehicleId,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
    pub accel_x: f64,
    pub accel_y: f64,
    /// Velocity components (redundant with speed/heading, kept exact).
    pub vel_x: f64,
    pub vel_y: f64,
    /// True when derivatives could not be computed (single-point trajectory).
    pub derivatives_flagged: bool,
}

impl TrajectoryPoint {
    pub fn new(time: f64, vehicle_id: impl Into<VehicleId>, x: f64, y: f64) -> Self {
        Self {
            time,
            vehicle_id: vehicle_id.into(),
            x,
            y,
            speed: 0.0,
            heading: 0.0,
            accel_x: 0.0,
            accel_y: 0.0,
            vel_x: 0.0,
            vel_y: 0.0,
            derivatives_flagged: false,
        }
    }
}

/// A bounded spatio-temporal slice of trajectories plus the fog-node placement.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub vehicles: BTreeMap<VehicleId, Vec<TrajectoryPoint>>,
    pub fog_location: (f64, f64),
    pub comm_range: f64,
    pub t_start: f64,
    pub duration: f64,
    pub slot_period: f64,
}

impl Scenario {
    pub fn n_slots(&self) -> usize {
        (self.duration / self.slot_period).ceil() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioStats {
    pub vehicle_count: usize,
    /// Mean point speed in km/h.
    pub avg_speed: f64,
    /// Mean acceleration magnitude in m/s^2.
    pub avg_accel: f64,
}

/// One ground-truth or predicted conflict: two vehicles passing the same
/// roadway point within the headway threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionEvent {
    pub pair: (VehicleId, VehicleId),
    pub point_time_a: f64,
    pub point_time_b: f64,
    pub location: (f64, f64),
    pub headway: f64,
}

impl CollisionEvent {
    pub fn new(
        id_a: VehicleId,
        t_a: f64,
        id_b: VehicleId,
        t_b: f64,
        location: (f64, f64),
    ) -> Self {
        // Normalize so the pair is unordered.
        let ((pa, ta), (pb, tb)) =
            if id_a <= id_b { ((id_a, t_a), (id_b, t_b)) } else { ((id_b, t_b), (id_a, t_a)) };
        let headway = (ta - tb).abs();
        Self { pair: (pa, pb), point_time_a: ta, point_time_b: tb, location, headway }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryFormat {
    /// Whitespace-separated `time_s vehicle_id x_m y_m [speed_mps]`,
    /// `#` comment lines ignored.
    Canonical,
}

/// Parse a trajectory stream, grouping points by vehicle, sorted by time,
/// de-duplicated on (vehicle, time).
pub fn load_trajectories<R: BufRead>(
    source: R,
    format: TrajectoryFormat,
) -> Result<BTreeMap<VehicleId, Vec<TrajectoryPoint>>> {
    let TrajectoryFormat::Canonical = format;
    let mut map: BTreeMap<VehicleId, Vec<TrajectoryPoint>> = BTreeMap::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected at least 4 columns, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("non-numeric {what}: {s:?}"),
            })
        };
        let time = parse_f(fields[0], "time")?;
        let x = parse_f(fields[2], "x")?;
        let y = parse_f(fields[3], "y")?;
        if !(time.is_finite() && time >= 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::Parse { line: line_no, msg: "non-finite or negative-time point".into() });
        }
        let mut point = TrajectoryPoint::new(time, fields[1], x, y);
        if let Some(sp) = fields.get(4) {
            point.speed = parse_f(sp, "speed")?;
        }
        map.entry(fields[1].to_string()).or_default().push(point);
    }
    for points in map.values_mut() {
        points.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
        points.dedup_by(|b, a| {
            if a.time == b.time {
                // Keep the first occurrence of a duplicated timestamp only if
                // the coordinates agree; conflicting duplicates are data errors.
                a.x == b.x && a.y == b.y
            } else {
                false
            }
        });
        if points.windows(2).any(|w| w[0].time == w[1].time) {
            return Err(Error::Data(format!(
                "vehicle {} has conflicting points at a duplicated timestamp",
                points[0].vehicle_id
            )));
        }
    }
    Ok(map)
}

/// Serialize trajectories in the canonical format (round-trips with
/// `load_trajectories`).
pub fn write_trajectories<W: std::io::Write>(
    out: &mut W,
    vehicles: &BTreeMap<VehicleId, Vec<TrajectoryPoint>>,
) -> Result<()> {
    writeln!(out, "# time_s vehicle_id x_m y_m speed_mps")?;
    for points in vehicles.values() {
        for p in points {
            writeln!(out, "{} {} {} {} {}", p.time, p.vehicle_id, p.x, p.y, p.speed)?;
        }
    }
    Ok(())
}

/// Fill speed, heading and acceleration by forward finite differences.
/// The final point copies the penultimate derivative values; single-point
/// trajectories get zero derivatives and a flag.
pub fn derive_kinematics(points: &[TrajectoryPoint]) -> Result<Vec<TrajectoryPoint>> {
    let mut out = points.to_vec();
    if out.is_empty() {
        return Ok(out);
    }
    if out.len() == 1 {
        out[0].derivatives_flagged = true;
        return Ok(out);
    }
    if out.windows(2).any(|w| w[1].time <= w[0].time) {
        return Err(Error::Data("trajectory times must strictly increase".into()));
    }
    let n = out.len();
    let mut vel = vec![(0.0, 0.0); n];
    for i in 0..n - 1 {
        let dt = out[i + 1].time - out[i].time;
        vel[i] = ((out[i + 1].x - out[i].x) / dt, (out[i + 1].y - out[i].y) / dt);
    }
    vel[n - 1] = vel[n - 2];
    let mut acc = vec![(0.0, 0.0); n];
    for i in 0..n - 1 {
        let dt = out[i + 1].time - out[i].time;
        acc[i] = ((vel[i + 1].0 - vel[i].0) / dt, (vel[i + 1].1 - vel[i].1) / dt);
    }
    if n >= 2 {
        acc[n - 1] = acc[n - 2];
        if n >= 3 {
            // The last forward difference of velocity is degenerate
            // (vel[n-1] == vel[n-2]); copy the previous value instead.
            acc[n - 2] = acc[n - 3];
            acc[n - 1] = acc[n - 3];
        }
    }
    for i in 0..n {
        out[i].vel_x = vel[i].0;
        out[i].vel_y = vel[i].1;
        out[i].speed = vel[i].0.hypot(vel[i].1);
        out[i].heading = vel[i].1.atan2(vel[i].0);
        out[i].accel_x = acc[i].0;
        out[i].accel_y = acc[i].1;
    }
    Ok(out)
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Cut a fog-centered window out of a trajectory store. Vehicles that never
/// enter the communication range during the window are dropped.
pub fn extract_scenario(
    store: &BTreeMap<VehicleId, Vec<TrajectoryPoint>>,
    fog_location: (f64, f64),
    comm_range: f64,
    t_start: f64,
    duration: f64,
    slot_period: f64,
) -> Result<Scenario> {
    if !(comm_range > 0.0 && duration > 0.0 && slot_period > 0.0) {
        return Err(Error::Config("comm_range, duration and slot_period must be positive".into()));
    }
    let t_end = t_start + duration;
    let mut vehicles = BTreeMap::new();
    for (id, points) in store {
        let window: Vec<TrajectoryPoint> = points
            .iter()
            .filter(|p| p.time >= t_start && p.time <= t_end)
            .cloned()
            .collect();
        if window.is_empty() {
            continue;
        }
        if window.iter().any(|p| dist((p.x, p.y), fog_location) <= comm_range) {
            vehicles.insert(id.clone(), derive_kinematics(&window)?);
        }
    }
    Ok(Scenario { vehicles, fog_location, comm_range, t_start, duration, slot_period })
}

pub fn scenario_stats(scenario: &Scenario) -> ScenarioStats {
    let mut count = 0usize;
    let mut speed_sum = 0.0;
    let mut accel_sum = 0.0;
    let mut points = 0usize;
    for traj in scenario.vehicles.values() {
        count += 1;
        for p in traj {
            speed_sum += p.speed;
            accel_sum += p.accel_x.hypot(p.accel_y);
            points += 1;
        }
    }
    if points == 0 {
        return ScenarioStats { vehicle_count: count, avg_speed: 0.0, avg_accel: 0.0 };
    }
    ScenarioStats {
        vehicle_count: count,
        avg_speed: speed_sum / points as f64 * 3.6,
        avg_accel: accel_sum / points as f64,
    }
}

/// Position of a vehicle at `t` by linear interpolation, `None` outside its
/// time support.
pub fn position_at(points: &[TrajectoryPoint], t: f64) -> Option<(f64, f64)> {
    if points.is_empty() || t < points[0].time || t > points[points.len() - 1].time {
        return None;
    }
    let idx = points.partition_point(|p| p.time <= t);
    if idx == 0 {
        return Some((points[0].x, points[0].y));
    }
    let a = &points[idx - 1];
    if idx == points.len() || a.time == t {
        return Some((a.x, a.y));
    }
    let b = &points[idx];
    let w = (t - a.time) / (b.time - a.time);
    Some((a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)))
}

/// Kinematic state of a vehicle at `t`: interpolated position plus the
/// derivatives of the latest point at or before `t` (causal).
pub fn state_at(points: &[TrajectoryPoint], t: f64) -> Option<TrajectoryPoint> {
    let pos = position_at(points, t)?;
    let idx = points.partition_point(|p| p.time <= t);
    let base = &points[idx.saturating_sub(1).min(points.len() - 1)];
    let mut s = base.clone();
    s.time = t;
    s.x = pos.0;
    s.y = pos.1;
    Some(s)
}

/// Per-slot conflict detection on true trajectories; the raw, unmerged form of
/// the ground-truth oracle.
fn raw_expected(
    scenario: &Scenario,
    d_col: f64,
    headway_threshold: f64,
) -> Vec<(VehicleId, f64, VehicleId, f64, (f64, f64))> {
    let slot = scenario.slot_period;
    let n_grid = (scenario.duration / slot).floor() as usize;
    let grid: Vec<f64> = (0..=n_grid).map(|k| scenario.t_start + k as f64 * slot).collect();
    let sampled: Vec<(&VehicleId, Vec<(f64, (f64, f64))>)> = scenario
        .vehicles
        .iter()
        .map(|(id, pts)| {
            let s: Vec<(f64, (f64, f64))> = grid
                .iter()
                .filter_map(|&t| position_at(pts, t).map(|p| (t, p)))
                .collect();
            (id, s)
        })
        .collect();
    let mut detections = Vec::new();
    for i in 0..sampled.len() {
        for j in i + 1..sampled.len() {
            let (id_a, pa) = &sampled[i];
            let (id_b, pb) = &sampled[j];
            for &(ta, la) in pa {
                for &(tb, lb) in pb {
                    if dist(la, lb) < d_col && (ta - tb).abs() < headway_threshold {
                        let mid = ((la.0 + lb.0) / 2.0, (la.1 + lb.1) / 2.0);
                        detections.push(((*id_a).clone(), ta, (*id_b).clone(), tb, mid));
                    }
                }
            }
        }
    }
    detections
}

/// Collapse per-slot detections of the same pair into one event per continuous
/// episode (gap tolerance one slot); the representative detection is the one
/// with the smallest headway, earliest first on ties.
pub fn merge_detections(
    detections: Vec<(VehicleId, f64, VehicleId, f64, (f64, f64))>,
    slot_period: f64,
) -> Vec<CollisionEvent> {
    let mut by_pair: BTreeMap<(VehicleId, VehicleId), Vec<(f64, f64, (f64, f64))>> =
        BTreeMap::new();
    for (id_a, ta, id_b, tb, loc) in detections {
        let (key, times) = if id_a <= id_b {
            ((id_a, id_b), (ta, tb))
        } else {
            ((id_b, id_a), (tb, ta))
        };
        by_pair.entry(key).or_default().push((times.0, times.1, loc));
    }
    let gap = 2.0 * slot_period + 1e-9;
    let mut events = Vec::new();
    for ((id_a, id_b), mut dets) in by_pair {
        // Anchor each detection at its earlier passing time for episode grouping.
        dets.sort_by(|x, y| {
            x.0.min(x.1).partial_cmp(&y.0.min(y.1)).unwrap().then(x.0.partial_cmp(&y.0).unwrap())
        });
        let mut episode: Vec<(f64, f64, (f64, f64))> = Vec::new();
        let mut last_anchor = f64::NEG_INFINITY;
        for det in dets {
            let anchor = det.0.min(det.1);
            if !episode.is_empty() && anchor - last_anchor > gap {
                events.push(episode_event(&id_a, &id_b, &episode));
                episode.clear();
            }
            last_anchor = anchor;
            episode.push(det);
        }
        if !episode.is_empty() {
            events.push(episode_event(&id_a, &id_b, &episode));
        }
    }
    events
}

fn episode_event(id_a: &str, id_b: &str, episode: &[(f64, f64, (f64, f64))]) -> CollisionEvent {
    let best = episode
        .iter()
        .min_by(|x, y| {
            let hx = (x.0 - x.1).abs();
            let hy = (y.0 - y.1).abs();
            hx.partial_cmp(&hy).unwrap().then(x.0.partial_cmp(&y.0).unwrap())
        })
        .unwrap();
    CollisionEvent::new(id_a.to_string(), best.0, id_b.to_string(), best.1, best.2)
}

/// The ground-truth expected-warning set: conflicts computed from true
/// trajectories with zero latency and zero loss, using the same distance and
/// headway test as the warning pipeline.
pub fn expected_warnings(
    scenario: &Scenario,
    d_col: f64,
    headway_threshold: f64,
) -> Result<Vec<CollisionEvent>> {
    if !(d_col > 0.0 && headway_threshold > 0.0) {
        return Err(Error::Config("d_col and headway_threshold must be positive".into()));
    }
    Ok(merge_detections(raw_expected(scenario, d_col, headway_threshold), scenario.slot_period))
}

/// An approach direction through the intersection center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    East,
    North,
    West,
    South,
}

impl Approach {
    pub fn direction(self) -> (f64, f64) {
        match self {
            Approach::East => (1.0, 0.0),
            Approach::North => (0.0, 1.0),
            Approach::West => (-1.0, 0.0),
            Approach::South => (0.0, -1.0),
        }
    }
}

/// One scheduled vehicle of a synthetic scenario: a straight constant-speed
/// (optionally ramped) drive through the center, crossing it at `cross_time`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthVehicle {
    pub approach: Approach,
    /// Absolute time at which the vehicle passes the intersection center.
    pub cross_time: f64,
    /// Speed in m/s; `None` draws uniformly from the spec's speed range.
    pub speed: Option<f64>,
    /// Constant acceleration along the heading, m/s^2.
    #[serde(default)]
    pub accel: f64,
}

/// Generator parameters for a synthetic intersection scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub center: (f64, f64),
    pub comm_range: f64,
    pub t_start: f64,
    pub duration: f64,
    pub slot_period: f64,
    /// Speed range [min, max] m/s for vehicles without an explicit speed.
    pub speed_range: (f64, f64),
    /// Radius at which vehicles spawn and despawn, meters.
    pub spawn_radius: f64,
    /// Spacing of emitted trajectory points, seconds.
    pub point_dt: f64,
    pub vehicles: Vec<SynthVehicle>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.comm_range > 0.0 && self.duration > 0.0 && self.slot_period > 0.0) {
            return Err(Error::Config("comm_range, duration, slot_period must be positive".into()));
        }
        if !(self.speed_range.0 > 0.0 && self.speed_range.1 >= self.speed_range.0) {
            return Err(Error::Config("speed range must be positive and ordered".into()));
        }
        if !(self.spawn_radius > 0.0 && self.point_dt > 0.0) {
            return Err(Error::Config("spawn_radius and point_dt must be positive".into()));
        }
        Ok(())
    }
}

/// Generate a synthetic scenario; deterministic under the rng seed.
pub fn synth_scenario<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<Scenario> {
    spec.validate()?;
    let mut store: BTreeMap<VehicleId, Vec<TrajectoryPoint>> = BTreeMap::new();
    for (idx, v) in spec.vehicles.iter().enumerate() {
        let speed = match v.speed {
            Some(s) if s > 0.0 => s,
            Some(s) => return Err(Error::Config(format!("vehicle {idx} has speed {s}"))),
            None => rng.gen_range(spec.speed_range.0..=spec.speed_range.1),
        };
        let id = format!("v{:03}", idx);
        let dir = v.approach.direction();
        let mut points = Vec::new();
        let t_end = spec.t_start + spec.duration;
        let mut t = spec.t_start;
        while t <= t_end + 1e-9 {
            let dt = t - v.cross_time;
            // Signed distance from the center along the heading.
            let s = speed * dt + 0.5 * v.accel * dt * dt;
            if s.abs() <= spec.spawn_radius {
                let x = spec.center.0 + s * dir.0;
                let y = spec.center.1 + s * dir.1;
                points.push(TrajectoryPoint::new(t, id.clone(), x, y));
            }
            t += spec.point_dt;
        }
        if points.len() >= 2 {
            store.insert(id, points);
        }
    }
    extract_scenario(
        &store,
        spec.center,
        spec.comm_range,
        spec.t_start,
        spec.duration,
        spec.slot_period,
    )
}
