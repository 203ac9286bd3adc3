//! The discrete-time run loop: per-slot packet emission, channel transit,
//! fog-node stepping, and end-of-run scoring.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::channel::{Channel, Delivery, StatusPacket};
use crate::error::{Error, Result};
use crate::fog::{Algorithm, FogState, PacketRecord, WarningSet};
use crate::metrics::{match_warnings, score, MatchResult, Score};
use crate::sim::{atomic_write, derive_seed, RunConfig};
use crate::trajectory::{
    expected_warnings, merge_detections, scenario_stats, state_at, CollisionEvent, ScenarioStats,
    VehicleId,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacketCounts {
    pub sent: usize,
    pub delivered: usize,
    pub lost: usize,
    pub out_of_range: usize,
    /// Deliveries arriving outside the processed slot range.
    pub discarded: usize,
    /// Lost packets compensated by the detection protocol's history replay.
    pub recovered: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub stats: ScenarioStats,
    pub warnings: Vec<WarningSet>,
    pub predicted_events: Vec<CollisionEvent>,
    pub expected_events: Vec<CollisionEvent>,
    pub matches: MatchResult,
    pub score: Score,
    pub counts: PacketCounts,
    pub wall_time: Duration,
    pub empty_scenario: bool,
}

/// Map an arrival time to its processing slot index: slot k covers the
/// half-open interval (e_{k-1}, e_k]. Boundary arrivals snap to the boundary
/// slot despite floating-point noise.
fn slot_index(arrival: f64, t_start: f64, slot: f64) -> i64 {
    let r = (arrival - t_start) / slot;
    if (r - r.round()).abs() < 1e-9 {
        r.round() as i64
    } else {
        r.ceil() as i64
    }
}

/// Execute one simulation run. Fully determined by (config, seed).
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    config.validate()?;
    let scenario = config.build_scenario()?;
    let stats = scenario_stats(&scenario);
    let algo = config.algorithm.name;

    if scenario.is_empty() {
        let matches = MatchResult::default();
        let s = score(&matches);
        let report = RunReport {
            config: config.clone(),
            stats,
            warnings: Vec::new(),
            predicted_events: Vec::new(),
            expected_events: Vec::new(),
            matches,
            score: s,
            counts: PacketCounts::default(),
            wall_time: start.elapsed(),
            empty_scenario: true,
        };
        write_outputs(&report)?;
        return Ok(report);
    }

    let channel_cfg = config.build_channel_config(&scenario)?;
    let fog_cfg = config.build_fog_config(&scenario, &channel_cfg)?;
    let mut channel = Channel::new(channel_cfg)?;
    let mut channel_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["channel"]));
    let mut fog_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["fog", algo.name()]));
    let mut fog = FogState::new(fog_cfg)?;

    let slot = scenario.slot_period;
    let t_start = scenario.t_start;
    let n_slots = scenario.n_slots();
    let mut counts = PacketCounts::default();
    let mut buckets: Vec<Vec<PacketRecord>> = vec![Vec::new(); n_slots + 1];
    // Unmatched lost emissions per vehicle, for recovery accounting.
    let mut lost_emissions: BTreeMap<VehicleId, Vec<f64>> = BTreeMap::new();

    // Emission phase: every in-scenario vehicle uploads once per slot, at the
    // slot start. Iteration order is fixed (slot-major, vehicle id order) so
    // the channel rng stream is reproducible.
    for j in 0..n_slots {
        let t = t_start + j as f64 * slot;
        for (id, points) in &scenario.vehicles {
            let Some(state) = state_at(points, t) else { continue };
            let packet = StatusPacket {
                vehicle_id: id.clone(),
                sensed_time: t,
                location: (state.x, state.y),
                velocity: (state.vel_x, state.vel_y),
                acceleration: (state.accel_x, state.accel_y),
                heading: state.heading,
            };
            counts.sent += 1;
            let sender = packet.location;
            match channel.transmit(packet, sender, scenario.fog_location, &mut channel_rng)? {
                Delivery::Delivered { packet, arrival_time, .. } => {
                    counts.delivered += 1;
                    let k = slot_index(arrival_time, t_start, slot);
                    if k >= 1 && k <= n_slots as i64 {
                        buckets[k as usize].push(PacketRecord { packet, receive_time: arrival_time });
                    } else {
                        counts.discarded += 1;
                    }
                }
                Delivery::Lost { packet } => {
                    counts.lost += 1;
                    lost_emissions.entry(packet.vehicle_id).or_default().push(packet.sensed_time);
                }
                Delivery::OutOfRange { .. } => counts.out_of_range += 1,
            }
        }
    }
    if counts.delivered + counts.lost + counts.out_of_range != counts.sent {
        return Err(Error::Internal("packet accounting identity violated".into()));
    }

    // Slot loop: the fog node processes each slot's arrivals at slot close.
    let mut warnings = Vec::with_capacity(n_slots);
    for k in 1..=n_slots {
        let e_k = t_start + k as f64 * slot;
        let ws = match algo {
            Algorithm::Tccw => {
                let (ws, outcome) = fog.tccw_step(&buckets[k], e_k, &mut fog_rng)?;
                // Credit each recovery to the earliest unmatched lost emission
                // in the silence window; replays caused by vehicles simply
                // despawning are not loss recoveries.
                for rec in &outcome.recovered {
                    if let Some(times) = lost_emissions.get_mut(&rec.packet.vehicle_id) {
                        let window = rec.packet.sensed_time..=e_k;
                        if let Some(pos) = times.iter().position(|t| window.contains(t)) {
                            times.remove(pos);
                            counts.recovered += 1;
                        }
                    }
                }
                ws
            }
            Algorithm::Fwc | Algorithm::Cbw => fog.baseline_step(&buckets[k], e_k, algo)?,
        };
        warnings.push(ws);
    }

    // Collapse per-slot pair events into one predicted event per episode and
    // score against the ground-truth oracle.
    let raw: Vec<(VehicleId, f64, VehicleId, f64, (f64, f64))> = warnings
        .iter()
        .flat_map(|ws| ws.pair_events.iter())
        .map(|e| (e.pair.0.clone(), e.point_time_a, e.pair.1.clone(), e.point_time_b, e.location))
        .collect();
    let predicted_events = merge_detections(raw, slot);
    let expected_events =
        expected_warnings(&scenario, config.thresholds.d_col, config.thresholds.headway)?;
    let matches = match_warnings(&expected_events, &predicted_events, config.time_tolerance())?;
    let s = score(&matches);

    let report = RunReport {
        config: config.clone(),
        stats,
        warnings,
        predicted_events,
        expected_events,
        matches,
        score: s,
        counts,
        wall_time: start.elapsed(),
        empty_scenario: false,
    };
    write_outputs(&report)?;
    Ok(report)
}

/// Warning log in the documented CSV form: one row per flagged
/// (slot, vehicle) with its triggering pair event.
pub fn warning_log_csv(warnings: &[WarningSet]) -> String {
    let mut out = String::from("slot_time,vehicle_id,pair_a,pair_b,meet_x,meet_y,headway\n");
    for ws in warnings {
        for id in ws.flagged() {
            let ev = ws
                .pair_events
                .iter()
                .find(|e| &e.pair.0 == id || &e.pair.1 == id)
                .expect("flagged vehicle always has a pair event");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                ws.slot_time, id, ev.pair.0, ev.pair.1, ev.location.0, ev.location.1, ev.headway
            );
        }
    }
    out
}

/// Human-readable run summary; excludes wall time so files stay byte-stable.
pub fn report_text(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "algorithm: {}", report.config.algorithm.name.name());
    let _ = writeln!(out, "seed: {}", report.config.seed);
    let _ = writeln!(
        out,
        "scenario: {} vehicles, avg speed {:.2} km/h, avg |accel| {:.3} m/s^2",
        report.stats.vehicle_count, report.stats.avg_speed, report.stats.avg_accel
    );
    if report.empty_scenario {
        let _ = writeln!(out, "warning: scenario is empty; scores are vacuous");
    }
    let c = report.counts;
    let _ = writeln!(
        out,
        "packets: sent {} delivered {} lost {} out_of_range {} discarded {} recovered {}",
        c.sent, c.delivered, c.lost, c.out_of_range, c.discarded, c.recovered
    );
    let _ = writeln!(
        out,
        "events: expected {} predicted {} tp {} fp {} fn {}",
        report.expected_events.len(),
        report.predicted_events.len(),
        report.matches.true_positives,
        report.matches.false_positives,
        report.matches.false_negatives
    );
    let _ = writeln!(
        out,
        "precision: {:.4}\nrecall: {:.4}",
        report.score.precision, report.score.recall
    );
    out
}

fn write_outputs(report: &RunReport) -> Result<()> {
    let Some(dir) = &report.config.output.dir else { return Ok(()) };
    std::fs::create_dir_all(dir)?;
    atomic_write(&dir.join("warnings.csv"), &warning_log_csv(&report.warnings))?;
    let mut text = report_text(report);
    let echo = toml::to_string_pretty(&report.config)
        .map_err(|e| Error::Internal(format!("config echo: {e}")))?;
    text.push_str("\n[config]\n");
    text.push_str(&echo);
    atomic_write(&dir.join("report.txt"), &text)?;
    Ok(())
}
