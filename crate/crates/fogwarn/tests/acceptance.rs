//! End-to-end acceptance suite: ten numbered criteria covering the stable-law
//! estimator, the channel presets, the warning pipeline, the algorithm
//! comparison sweeps, and reproducibility. Each test prints one
//! `criterion NN ...: pass|fail` line (visible with `--nocapture`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fogwarn::channel::{self, Channel, Delivery, LatencyModel, StatusPacket};
use fogwarn::fog::{calibrate, detect_collisions, Algorithm, LatencyEstimator, PredictedTrajectory};
use fogwarn::sim::{
    self, AlgorithmSection, ChannelSection, OutputSection, RunConfig, ScenarioSection, SweepAxis,
    SweepConfig, SweepRow, Thresholds,
};
use fogwarn::stable::{fit, sample, FitConfig, StableParams};

fn verdict(number: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {number:02} {name}: {}", if pass { "pass" } else { "fail" });
    assert!(pass, "criterion {number} ({name}) failed: {detail}");
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

const SCENARIOS: [&str; 3] = [
    "scenarios/intersection_a.toml",
    "scenarios/intersection_b.toml",
    "scenarios/intersection_c.toml",
];

/// Master seed for the comparison sweeps. Individual cells derive their own
/// streams from it; the value is part of the frozen experiment definition.
const SUITE_SEED: u64 = 4;

#[test]
fn c01_stable_fit_round_trip() {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for alpha in [1.2, 1.5, 1.8] {
        for beta in [-0.5, 0.0, 0.5, 1.0] {
            let truth = StableParams::new(alpha, beta, 70.0, 13.0).unwrap();
            let mut err = [0.0f64; 4];
            for seed in 0..10u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5f17 + seed);
                let xs: Vec<f64> = (0..10_000).map(|_| sample(truth, &mut rng)).collect();
                let p = fit(&xs, &FitConfig::default()).unwrap().params;
                err[0] += (p.alpha - alpha).abs();
                err[1] += (p.beta - beta).abs();
                err[2] += (p.mu - 70.0).abs();
                err[3] += (p.sigma - 13.0).abs();
            }
            for e in &mut err {
                *e /= 10.0;
            }
            let tol = [0.1, 0.25, 2.0, 1.0];
            if err.iter().zip(tol).any(|(e, t)| *e > t) {
                pass = false;
                detail.push_str(&format!("(alpha={alpha}, beta={beta}): mean errors {err:?}; "));
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 30.0 {
        pass = false;
        detail.push_str(&format!("runtime {elapsed:?} >= 30 s"));
    }
    verdict(1, "stable-fit round-trip", pass, &detail);
}

#[test]
fn c02_gaussian_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = StableParams::standard_normal();
    let xs: Vec<f64> = (0..10_000).map(|_| sample(normal, &mut rng)).collect();
    let p = fit(&xs, &FitConfig::default()).unwrap().params;
    let pass = (1.9..=2.0).contains(&p.alpha) && p.mu.abs() <= 0.05;
    verdict(2, "gaussian limit", pass, &format!("alpha={}, mu={}", p.alpha, p.mu));
}

#[test]
fn c03_channel_preset_means() {
    let mut detail = String::new();
    let mut pass = true;
    for (name, expected) in [("fog_dsrc", 77.0), ("cloud_lte", 120.0)] {
        let mut ch = Channel::new(channel::preset(name).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total = 0.0;
        let n = 100_000;
        for i in 0..n {
            let packet = probe_packet("v1", i as f64);
            match ch.transmit(packet, (0.0, 0.0), (0.0, 0.0), &mut rng).unwrap() {
                Delivery::Delivered { latency_ms, .. } => total += latency_ms,
                other => panic!("unexpected non-delivery {other:?}"),
            }
        }
        let mean = total / n as f64;
        detail.push_str(&format!("{name}: mean {mean:.3} ms; "));
        if (mean - expected).abs() > 3.0 {
            pass = false;
        }
    }
    verdict(3, "channel preset means", pass, &detail);
}

#[test]
fn c04_perfect_channel_equivalence() {
    let mut pass = true;
    let mut detail = String::new();
    for scenario in SCENARIOS {
        let mut cfg = suite_base(scenario, 1.0, 0.0);
        // Zero-latency channel; the calibration draws from a point mass at 0.
        cfg.channel.preset = None;
        cfg.channel.latency = Some(LatencyModel::Trace { values_ms: vec![0.0], wrap: true });
        cfg.thresholds.latency_params =
            Some(StableParams { alpha: 1.8, beta: 0.0, mu: 0.0, sigma: 1e-9 });
        cfg.thresholds.predict_horizon = 5.0;
        let report = sim::run(&cfg).unwrap();
        detail.push_str(&format!(
            "{scenario}: P={} R={} ({} events); ",
            report.score.precision,
            report.score.recall,
            report.expected_events.len()
        ));
        if report.score.precision != 1.0
            || report.score.recall != 1.0
            || report.expected_events.is_empty()
        {
            pass = false;
        }
    }
    verdict(4, "perfect-channel equivalence", pass, &detail);
}

#[test]
fn c05_brute_force_collision_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (d_col, headway) = (1.5, 1.5);
    let mut pass = true;
    let mut detail = String::new();
    for case in 0..50 {
        let n_vehicles = rng.gen_range(2..=8);
        let trajectories: Vec<PredictedTrajectory> = (0..n_vehicles)
            .map(|v| {
                let n_points = rng.gen_range(1..=30);
                PredictedTrajectory {
                    vehicle_id: format!("v{v:03}"),
                    points: (1..=n_points)
                        .map(|j| {
                            (j as f64, rng.gen_range(0..12) as f64, rng.gen_range(0..12) as f64)
                        })
                        .collect(),
                }
            })
            .collect();
        let got = detect_collisions(&trajectories, d_col, headway, 0.0);

        // Exhaustive all-pairs point comparison.
        let mut want_flagged = BTreeSet::new();
        let mut want_pairs: BTreeMap<(String, String), f64> = BTreeMap::new();
        for a in &trajectories {
            for b in &trajectories {
                if a.vehicle_id >= b.vehicle_id {
                    continue;
                }
                for &(ta, xa, ya) in &a.points {
                    for &(tb, xb, yb) in &b.points {
                        let h = (ta - tb).abs();
                        if (xa - xb).hypot(ya - yb) < d_col && h < headway {
                            want_flagged.insert(a.vehicle_id.clone());
                            want_flagged.insert(b.vehicle_id.clone());
                            let key = (a.vehicle_id.clone(), b.vehicle_id.clone());
                            let best = want_pairs.entry(key).or_insert(f64::INFINITY);
                            *best = best.min(h);
                        }
                    }
                }
            }
        }
        let got_flagged: BTreeSet<String> = got.flagged().cloned().collect();
        let got_pairs: BTreeMap<(String, String), f64> = got
            .pair_events
            .iter()
            .map(|e| ((e.pair.0.clone(), e.pair.1.clone()), e.headway))
            .collect();
        if got_flagged != want_flagged || got_pairs != want_pairs {
            pass = false;
            detail.push_str(&format!("case {case}: mismatch vs exhaustive comparison; "));
        }
    }
    verdict(5, "brute-force collision oracle", pass, &detail);
}

#[test]
fn c06_loss_sweep_ordering() {
    let start = Instant::now();
    let rows = pooled_sweep(SweepAxis::LossRate { values: vec![0.0, 0.02, 0.04, 0.06] }, 2.0, 0.0);
    let values = ["0", "0.02", "0.04", "0.06"];
    let mut pass = true;
    let mut detail = String::new();

    for v in values {
        let [t, f, c] = ["tccw", "fwc", "cbw"].map(|a| mean_scores(&rows, v, a));
        detail.push_str(&format!(
            "loss {v}: P {:.4}/{:.4}/{:.4} R {:.4}/{:.4}/{:.4}; ",
            t.0, f.0, c.0, t.1, f.1, c.1
        ));
        if !(t.0 >= f.0 && f.0 >= c.0 && t.1 >= f.1 && f.1 >= c.1) {
            pass = false;
            detail.push_str("ordering violated; ");
        }
    }

    // Baselines degrade monotonically (within one standard error of the cell
    // means) as the loss rate rises; the calibrated algorithm degrades
    // strictly less over the full sweep range.
    for algo in ["fwc", "cbw"] {
        let recalls: Vec<(f64, f64)> =
            values.iter().map(|v| recall_mean_se(&rows, v, algo)).collect();
        for w in recalls.windows(2) {
            let se = (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
            if w[1].0 > w[0].0 + se {
                pass = false;
                detail.push_str(&format!("{algo} recall not monotone within 1 SE; "));
            }
        }
    }
    let deg = |algo: &str| {
        mean_scores(&rows, values[0], algo).1 - mean_scores(&rows, *values.last().unwrap(), algo).1
    };
    let (deg_t, deg_f) = (deg("tccw"), deg("fwc"));
    detail.push_str(&format!("degradation tccw {deg_t:.4} vs fwc {deg_f:.4}; "));
    if deg_t >= deg_f {
        pass = false;
    }

    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 120.0 {
        pass = false;
        detail.push_str(&format!("runtime {elapsed:?} >= 2 min"));
    }
    verdict(6, "loss-sweep algorithm ordering", pass, &detail);
}

#[test]
fn c07_headway_trend() {
    let rows =
        pooled_sweep(SweepAxis::Headway { values: vec![1.0, 2.0, 3.0, 4.0, 5.0] }, 1.0, 0.03);
    let values = ["1", "2", "3", "4", "5"];
    let mut pass = true;
    let mut detail = String::new();
    for algo in ["tccw", "fwc", "cbw"] {
        let scores: Vec<(f64, f64)> = values.iter().map(|v| mean_scores(&rows, v, algo)).collect();
        detail.push_str(&format!(
            "{algo}: P {:?} R {:?}; ",
            scores.iter().map(|s| (s.0 * 1e4).round() / 1e4).collect::<Vec<_>>(),
            scores.iter().map(|s| (s.1 * 1e4).round() / 1e4).collect::<Vec<_>>()
        ));
        for w in scores.windows(2) {
            if w[1].0 < w[0].0 - 1e-12 {
                pass = false;
                detail.push_str(&format!("{algo} precision decreased; "));
            }
            if w[1].1 > w[0].1 + 1e-12 {
                pass = false;
                detail.push_str(&format!("{algo} recall increased; "));
            }
        }
        // Ordering holds along this axis too.
        for v in values {
            let [t, f, c] = ["tccw", "fwc", "cbw"].map(|a| mean_scores(&rows, v, a));
            if !(t.0 >= f.0 && f.0 >= c.0 && t.1 >= f.1 && f.1 >= c.1) {
                pass = false;
                detail.push_str(&format!("ordering violated at headway {v}; "));
            }
        }
    }
    verdict(7, "headway threshold trend", pass, &detail);
}

#[test]
fn c08_calibration_worked_example() {
    // 40 km/h, zero acceleration, 1.3 s total staleness: the calibrated
    // location moves about 14.4 m ahead of the reported one.
    let speed = 40.0 / 3.6;
    let packet = StatusPacket {
        vehicle_id: "v1".into(),
        sensed_time: 10.0,
        location: (100.0, 50.0),
        velocity: (speed, 0.0),
        acceleration: (0.0, 0.0),
        heading: 0.0,
    };
    let (x, y) = calibrate(&packet, 11.0, 11.3, 1000.0);
    let displacement = (x - 100.0).hypot(y - 50.0);
    let pass = (displacement - 14.4).abs() <= 0.5;
    verdict(8, "calibration worked example", pass, &format!("displacement {displacement:.3} m"));
}

#[test]
fn c09_determinism() {
    let cfg = suite_base(SCENARIOS[0], 2.0, 0.03);
    let a = sim::run(&cfg).unwrap();
    let b = sim::run(&cfg).unwrap();
    let runs_equal = sim::report_text(&a) == sim::report_text(&b)
        && sim::warning_log_csv(&a.warnings) == sim::warning_log_csv(&b.warnings);

    let sweep_cfg = SweepConfig {
        axis: SweepAxis::LossRate { values: vec![0.0, 0.03, 0.06] },
        algorithms: vec![Algorithm::Tccw],
        seeds_per_cell: 1,
        paired_seeds: false,
        channel_presets: BTreeMap::new(),
    };
    let s1 = sim::sweep(&cfg, &sweep_cfg).unwrap();
    let s2 = sim::sweep(&cfg, &sweep_cfg).unwrap();
    let sweeps_equal = s1.to_csv() == s2.to_csv() && s1.rows.len() == 3;

    verdict(
        9,
        "determinism",
        runs_equal && sweeps_equal,
        &format!("runs_equal={runs_equal}, sweeps_equal={sweeps_equal}"),
    );
}

#[test]
fn c10_loss_rate_calibration() {
    let mut pass = true;
    let mut detail = String::new();
    for p in [0.02, 0.06] {
        let mut config = channel::preset("fog_dsrc").unwrap();
        config.loss_rate = p;
        let mut ch = Channel::new(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000usize;
        let mut lost = 0usize;
        for i in 0..n {
            let packet = probe_packet("v1", i as f64);
            match ch.transmit(packet, (100.0, 0.0), (0.0, 0.0), &mut rng).unwrap() {
                Delivery::Lost { .. } => lost += 1,
                Delivery::Delivered { .. } => {}
                Delivery::OutOfRange { .. } => panic!("probe was in range"),
            }
        }
        let frac = lost as f64 / n as f64;
        let three_sigma = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        detail.push_str(&format!("p={p}: observed {frac:.5} (3 sigma {three_sigma:.5}); "));
        if (frac - p).abs() > three_sigma {
            pass = false;
        }
    }
    verdict(10, "loss-rate calibration", pass, &detail);
}

// --- shared helpers -------------------------------------------------------

fn probe_packet(id: &str, t: f64) -> StatusPacket {
    StatusPacket {
        vehicle_id: id.into(),
        sensed_time: t,
        location: (0.0, 0.0),
        velocity: (0.0, 0.0),
        acceleration: (0.0, 0.0),
        heading: 0.0,
    }
}

/// Base run config of the comparison suite: one bundled intersection
/// scenario, the fog channel preset, a 3 s prediction horizon.
fn suite_base(scenario: &str, headway: f64, loss_rate: f64) -> RunConfig {
    RunConfig {
        seed: SUITE_SEED,
        algorithm: AlgorithmSection {
            name: Algorithm::Tccw,
            latency_estimator: LatencyEstimator::Random,
        },
        scenario: ScenarioSection {
            synth_file: Some(data(scenario)),
            synth_seed: Some(0),
            ..Default::default()
        },
        channel: ChannelSection {
            preset: Some("fog_dsrc".to_string()),
            latency: None,
            loss_rate,
            comm_range: None,
        },
        thresholds: Thresholds { headway, predict_horizon: 3.0, ..Default::default() },
        output: OutputSection::default(),
    }
}

/// Run one axis sweep over all three bundled scenarios with all three
/// algorithms, 20 paired seeds per cell, and the cloud channel for the cloud
/// baseline; returns the pooled row set.
fn pooled_sweep(axis: SweepAxis, headway: f64, loss_rate: f64) -> Vec<SweepRow> {
    let sweep_cfg = SweepConfig {
        axis,
        algorithms: Algorithm::ALL.to_vec(),
        seeds_per_cell: 20,
        paired_seeds: true,
        channel_presets: BTreeMap::from([("cbw".to_string(), "cloud_lte".to_string())]),
    };
    let mut rows = Vec::new();
    for scenario in SCENARIOS {
        let base = suite_base(scenario, headway, loss_rate);
        let result = sim::sweep(&base, &sweep_cfg).unwrap();
        assert!(result.failures.is_empty(), "sweep cells failed: {:?}", result.failures);
        rows.extend(result.rows);
    }
    rows
}

fn cell<'a>(rows: &'a [SweepRow], value: &str, algorithm: &str) -> Vec<&'a SweepRow> {
    let picked: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.value == value && r.algorithm.name() == algorithm)
        .collect();
    assert!(!picked.is_empty(), "no rows for value {value} algorithm {algorithm}");
    picked
}

/// Mean (precision, recall) over a cell's runs.
fn mean_scores(rows: &[SweepRow], value: &str, algorithm: &str) -> (f64, f64) {
    let picked = cell(rows, value, algorithm);
    let n = picked.len() as f64;
    (
        picked.iter().map(|r| r.precision).sum::<f64>() / n,
        picked.iter().map(|r| r.recall).sum::<f64>() / n,
    )
}

/// Mean recall and its standard error over a cell's runs.
fn recall_mean_se(rows: &[SweepRow], value: &str, algorithm: &str) -> (f64, f64) {
    let picked = cell(rows, value, algorithm);
    let n = picked.len() as f64;
    let mean = picked.iter().map(|r| r.recall).sum::<f64>() / n;
    let var = picked.iter().map(|r| (r.recall - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
