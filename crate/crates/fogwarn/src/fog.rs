//! Fog-node logic: the per-slot record/detection bookkeeping that recovers
//! lost status packets, latency-compensated location calibration, constant-
//! acceleration trajectory prediction, and the pairwise collision test.
//! Also provides the two uncalibrated baselines (cloud-based and fog-without-
//! calibration).

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::str::FromStr;

use crate::channel::StatusPacket;
use crate::error::{Error, Result};
use crate::stable::{self, StableParams};
use crate::trajectory::{CollisionEvent, VehicleId};

/// Which warning pipeline a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Trajectory-calibrated collision warning: loss recovery + calibration.
    Tccw,
    /// Fog warning without calibration: record bookkeeping, no recovery.
    Fwc,
    /// Cloud-based warning: no record/detection protocol, no calibration.
    Cbw,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Tccw, Algorithm::Fwc, Algorithm::Cbw];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tccw => "tccw",
            Algorithm::Fwc => "fwc",
            Algorithm::Cbw => "cbw",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tccw" => Ok(Algorithm::Tccw),
            "fwc" => Ok(Algorithm::Fwc),
            "cbw" => Ok(Algorithm::Cbw),
            _ => Err(Error::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// How the fog node estimates a packet's network latency for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LatencyEstimator {
    /// A random draw from the fitted latency law (the reference behavior).
    #[default]
    Random,
    /// The distribution mean, for ablation.
    Mean,
}

/// Tunable thresholds and environment of one fog node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FogConfig {
    /// Leave-rule distance margin below the communication range, meters.
    pub tau: f64,
    /// Loss-rule slack beyond one slot, seconds.
    pub gamma: f64,
    /// Headway threshold for the collision test, seconds.
    pub headway: f64,
    /// Same-point distance threshold, meters.
    pub d_col: f64,
    /// Prediction horizon, seconds.
    pub predict_horizon: f64,
    /// Upload slot period (1/frequency), seconds.
    pub slot_period: f64,
    /// Fitted latency law used for calibration estimates.
    pub latency_params: StableParams,
    #[serde(default)]
    pub latency_estimator: LatencyEstimator,
    pub fog_location: (f64, f64),
    pub comm_range: f64,
}

impl FogConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("tau and gamma must be non-negative".into()));
        }
        if !(self.headway > 0.0 && self.d_col > 0.0 && self.predict_horizon > 0.0) {
            return Err(Error::Config("headway, d_col, predict_horizon must be positive".into()));
        }
        if !(self.slot_period > 0.0 && self.comm_range > 0.0) {
            return Err(Error::Config("slot_period and comm_range must be positive".into()));
        }
        self.latency_params.validate()?;
        Ok(())
    }

    pub fn defaults(fog_location: (f64, f64), comm_range: f64, latency_params: StableParams) -> Self {
        Self {
            tau: 10.0,
            gamma: 0.2,
            headway: 1.0,
            d_col: 2.0,
            predict_horizon: 5.0,
            slot_period: 1.0,
            latency_params,
            latency_estimator: LatencyEstimator::Random,
            fog_location,
            comm_range,
        }
    }

    /// Number of prediction points per trajectory.
    fn horizon_slots(&self) -> usize {
        (self.predict_horizon / self.slot_period).ceil() as usize
    }

    /// History slots retained per vehicle; the detection rule never looks
    /// further back than one slot plus gamma, so this bounds memory safely.
    fn history_slots(&self) -> usize {
        ((self.slot_period + self.gamma + 5.0) / self.slot_period).ceil() as usize
    }
}

/// A received packet together with its fog-side arrival time.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub packet: StatusPacket,
    pub receive_time: f64,
}

/// Dead-reckoned future positions of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrajectory {
    pub vehicle_id: VehicleId,
    /// (absolute time, x, y), one point per slot over the horizon.
    pub points: Vec<(f64, f64, f64)>,
}

/// Per-slot warning output: binary flags plus the pair events behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct WarningSet {
    pub slot_time: f64,
    pub flags: BTreeMap<VehicleId, bool>,
    pub pair_events: Vec<CollisionEvent>,
}

impl WarningSet {
    pub fn empty(slot_time: f64) -> Self {
        Self { slot_time, flags: BTreeMap::new(), pair_events: Vec::new() }
    }

    pub fn flagged(&self) -> impl Iterator<Item = &VehicleId> {
        self.flags.iter().filter(|(_, &f)| f).map(|(id, _)| id)
    }
}

/// Result of one detection pass: packets recovered from history and vehicles
/// removed by the leave rule.
#[derive(Debug, Clone, Default)]
pub struct DetectionOutcome {
    pub recovered: Vec<PacketRecord>,
    pub removed: Vec<VehicleId>,
}

/// Mutable state of one fog node across slots.
#[derive(Debug, Clone)]
pub struct FogState {
    pub config: FogConfig,
    /// The maintained vehicle ID set.
    id_set: BTreeSet<VehicleId>,
    /// Bounded per-vehicle archive of received packets, newest last.
    history: BTreeMap<VehicleId, VecDeque<PacketRecord>>,
}

impl FogState {
    pub fn new(config: FogConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, id_set: BTreeSet::new(), history: BTreeMap::new() })
    }

    pub fn id_set(&self) -> &BTreeSet<VehicleId> {
        &self.id_set
    }

    pub fn last_record(&self, id: &str) -> Option<&PacketRecord> {
        self.history.get(id).and_then(|h| h.back())
    }

    /// Record step: register senders in the ID set, archive their packets,
    /// and return the slot working set (duplicates collapsed to the latest
    /// sensed packet) plus the set of IDs heard this slot.
    pub fn record_step(
        &mut self,
        received: &[PacketRecord],
    ) -> (Vec<PacketRecord>, BTreeSet<VehicleId>) {
        let mut working: BTreeMap<VehicleId, PacketRecord> = BTreeMap::new();
        for rec in received {
            let id = rec.packet.vehicle_id.clone();
            match working.get(&id) {
                Some(prev) if prev.packet.sensed_time >= rec.packet.sensed_time => {}
                _ => {
                    working.insert(id, rec.clone());
                }
            }
        }
        let cap = self.config.history_slots();
        let mut id_m = BTreeSet::new();
        for (id, rec) in &working {
            id_m.insert(id.clone());
            self.id_set.insert(id.clone());
            let ring = self.history.entry(id.clone()).or_default();
            ring.push_back(rec.clone());
            while ring.len() > cap {
                ring.pop_front();
            }
        }
        (working.into_values().collect(), id_m)
    }

    /// Detection step at slot close `e_k`: for every known vehicle silent this
    /// slot, either drop it (leaving the range) or, if its silence exceeds one
    /// slot plus gamma, declare the packet lost and resurrect the latest
    /// archived packet.
    pub fn detect_losses(&mut self, e_k: f64, id_m: &BTreeSet<VehicleId>) -> Result<DetectionOutcome> {
        let mut out = DetectionOutcome::default();
        let silent: Vec<VehicleId> =
            self.id_set.iter().filter(|id| !id_m.contains(*id)).cloned().collect();
        for id in silent {
            let rec = self
                .history
                .get(&id)
                .and_then(|h| h.back())
                .ok_or_else(|| Error::Internal(format!("vehicle {id} in id_set has no history")))?
                .clone();
            let (lx, ly) = rec.packet.location;
            let d = (lx - self.config.fog_location.0).hypot(ly - self.config.fog_location.1);
            if d >= self.config.comm_range - self.config.tau {
                self.id_set.remove(&id);
                out.removed.push(id);
            } else if e_k - rec.receive_time > self.config.slot_period + self.config.gamma {
                out.recovered.push(rec);
            }
        }
        Ok(out)
    }

    /// One latency estimate in milliseconds; non-negative, deterministic
    /// under the rng seed.
    pub fn estimate_latency<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.config.latency_estimator {
            LatencyEstimator::Mean => self.config.latency_params.mu.max(0.0),
            LatencyEstimator::Random => loop {
                let v = stable::sample(self.config.latency_params, rng);
                if v >= 0.0 {
                    return v;
                }
            },
        }
    }

    /// Run the full calibrated pipeline for slot `e_k`.
    pub fn tccw_step<R: Rng + ?Sized>(
        &mut self,
        received: &[PacketRecord],
        e_k: f64,
        rng: &mut R,
    ) -> Result<(WarningSet, DetectionOutcome)> {
        let (mut working, id_m) = self.record_step(received);
        let outcome = self.detect_losses(e_k, &id_m)?;
        working.extend(outcome.recovered.iter().cloned());
        let mut trajectories = Vec::with_capacity(working.len());
        for rec in &working {
            let latency_ms = self.estimate_latency(rng);
            let elapsed = (e_k - rec.receive_time) + latency_ms / 1000.0;
            trajectories.push(predict_from(&rec.packet, elapsed, e_k, &self.config));
        }
        let warnings =
            detect_collisions(&trajectories, self.config.d_col, self.config.headway, e_k);
        Ok((warnings, outcome))
    }

    /// Run one of the uncalibrated baselines for slot `e_k`: received
    /// locations are treated as current, no latency compensation. CBW skips
    /// the record/detection protocol entirely; FWC keeps the bookkeeping but
    /// never recovers lost packets.
    pub fn baseline_step(
        &mut self,
        received: &[PacketRecord],
        e_k: f64,
        mode: Algorithm,
    ) -> Result<WarningSet> {
        let working = match mode {
            Algorithm::Cbw => {
                let mut dedup: BTreeMap<VehicleId, PacketRecord> = BTreeMap::new();
                for rec in received {
                    let id = rec.packet.vehicle_id.clone();
                    match dedup.get(&id) {
                        Some(prev) if prev.packet.sensed_time >= rec.packet.sensed_time => {}
                        _ => {
                            dedup.insert(id, rec.clone());
                        }
                    }
                }
                dedup.into_values().collect::<Vec<_>>()
            }
            Algorithm::Fwc => self.record_step(received).0,
            Algorithm::Tccw => {
                return Err(Error::Config("baseline_step cannot run the calibrated mode".into()))
            }
        };
        let trajectories: Vec<PredictedTrajectory> =
            working.iter().map(|rec| predict_from(&rec.packet, 0.0, e_k, &self.config)).collect();
        Ok(detect_collisions(&trajectories, self.config.d_col, self.config.headway, e_k))
    }
}

/// Constant-acceleration displacement of a packet's state after `elapsed`
/// seconds: location + elapsed * velocity + elapsed^2 / 2 * acceleration.
fn dead_reckon(packet: &StatusPacket, elapsed: f64) -> (f64, f64) {
    (
        packet.location.0 + elapsed * packet.velocity.0 + 0.5 * elapsed * elapsed * packet.acceleration.0,
        packet.location.1 + elapsed * packet.velocity.1 + 0.5 * elapsed * elapsed * packet.acceleration.1,
    )
}

/// Calibrated current location at slot close `e_k`: the packet's kinematic
/// state advanced by the time it spent in flight and queued at the fog node.
pub fn calibrate(
    packet: &StatusPacket,
    receive_time: f64,
    e_k: f64,
    latency_estimate_ms: f64,
) -> (f64, f64) {
    dead_reckon(packet, (e_k - receive_time) + latency_estimate_ms / 1000.0)
}

/// Predict one trajectory over the configured horizon: points at
/// `e_k + j * slot` for j = 1.., each dead-reckoned from the packet state
/// with the cumulative elapsed time `base_elapsed + j * slot`.
fn predict_from(
    packet: &StatusPacket,
    base_elapsed: f64,
    e_k: f64,
    config: &FogConfig,
) -> PredictedTrajectory {
    let slot = config.slot_period;
    let points = (1..=config.horizon_slots())
        .map(|j| {
            let (x, y) = dead_reckon(packet, base_elapsed + j as f64 * slot);
            (e_k + j as f64 * slot, x, y)
        })
        .collect();
    PredictedTrajectory { vehicle_id: packet.vehicle_id.clone(), points }
}

/// Public prediction entry point matching the pipeline's calibrated use.
pub fn predict_trajectory(
    packet: &StatusPacket,
    base_elapsed: f64,
    e_k: f64,
    config: &FogConfig,
) -> PredictedTrajectory {
    predict_from(packet, base_elapsed, e_k, config)
}

/// Pairwise collision test: any two predicted points of distinct vehicles
/// closer than `d_col` with time difference below `headway_threshold` flag
/// both vehicles. One representative event (smallest headway, earliest on
/// ties) is kept per pair.
pub fn detect_collisions(
    trajectories: &[PredictedTrajectory],
    d_col: f64,
    headway_threshold: f64,
    slot_time: f64,
) -> WarningSet {
    let mut flags: BTreeMap<VehicleId, bool> =
        trajectories.iter().map(|t| (t.vehicle_id.clone(), false)).collect();
    let mut best: BTreeMap<(VehicleId, VehicleId), (f64, f64, (f64, f64))> = BTreeMap::new();
    for i in 0..trajectories.len() {
        for j in i + 1..trajectories.len() {
            let (a, b) = (&trajectories[i], &trajectories[j]);
            if a.vehicle_id == b.vehicle_id {
                continue;
            }
            for &(tu, xu, yu) in &a.points {
                for &(tv, xv, yv) in &b.points {
                    if (xu - xv).hypot(yu - yv) >= d_col {
                        continue;
                    }
                    let h = (tu - tv).abs();
                    if h >= headway_threshold {
                        continue;
                    }
                    flags.insert(a.vehicle_id.clone(), true);
                    flags.insert(b.vehicle_id.clone(), true);
                    let key = if a.vehicle_id <= b.vehicle_id {
                        (a.vehicle_id.clone(), b.vehicle_id.clone())
                    } else {
                        (b.vehicle_id.clone(), a.vehicle_id.clone())
                    };
                    let (ta, tb) = if a.vehicle_id <= b.vehicle_id { (tu, tv) } else { (tv, tu) };
                    let mid = ((xu + xv) / 2.0, (yu + yv) / 2.0);
                    let better = match best.get(&key) {
                        None => true,
                        Some(&(pa, pb, _)) => {
                            let ph = (pa - pb).abs();
                            h < ph || (h == ph && ta.min(tb) < pa.min(pb))
                        }
                    };
                    if better {
                        best.insert(key, (ta, tb, mid));
                    }
                }
            }
        }
    }
    let pair_events = best
        .into_iter()
        .map(|((id_a, id_b), (ta, tb, loc))| CollisionEvent::new(id_a, ta, id_b, tb, loc))
        .collect();
    WarningSet { slot_time, flags, pair_events }
}
