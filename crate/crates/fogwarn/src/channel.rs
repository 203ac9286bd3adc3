//! Communication channel between vehicles and the fog/cloud node: range
//! gating, independent Bernoulli packet loss, and per-packet application-layer
//! latency drawn from a stable law or replayed from a trace.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stable::{self, StableParams};
use crate::trajectory::VehicleId;

/// One status upload: the vehicle's sensed kinematic state at `sensed_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatusPacket {
    pub vehicle_id: VehicleId,
    pub sensed_time: f64,
    pub location: (f64, f64),
    pub velocity: (f64, f64),
    pub acceleration: (f64, f64),
    pub heading: f64,
}

/// Outcome of one transmission attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    Delivered { packet: StatusPacket, arrival_time: f64, latency_ms: f64 },
    Lost { packet: StatusPacket },
    OutOfRange { packet: StatusPacket },
}

impl Delivery {
    pub fn packet(&self) -> &StatusPacket {
        match self {
            Delivery::Delivered { packet, .. }
            | Delivery::Lost { packet }
            | Delivery::OutOfRange { packet } => packet,
        }
    }
}

/// Per-packet latency source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyModel {
    Stable { params: StableParams },
    /// Replay latencies (ms) sequentially; `wrap` restarts at the end,
    /// otherwise exhaustion is a configuration error.
    Trace { values_ms: Vec<f64>, wrap: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub latency_model: LatencyModel,
    pub loss_rate: f64,
    pub comm_range: f64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return Err(Error::Config(format!("loss_rate {} outside [0,1]", self.loss_rate)));
        }
        if !(self.comm_range > 0.0) {
            return Err(Error::Config(format!("comm_range {} must be positive", self.comm_range)));
        }
        match &self.latency_model {
            LatencyModel::Stable { params } => params.validate()?,
            LatencyModel::Trace { values_ms, .. } => {
                if values_ms.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Config("trace latencies must be finite and >= 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// Fitted DSRC uplink latency shape; the location parameter of the fog preset
/// is set so the mean matches the measured 77 ms fog-node average.
pub const FOG_LATENCY_SHAPE: StableParams =
    StableParams { alpha: 1.77395, beta: 1.0, mu: 77.0, sigma: 13.3685 };

/// Named channel presets: `fog_dsrc` (77 ms mean) and `cloud_lte` (120 ms
/// mean, same distribution shape shifted in location).
pub fn preset(name: &str) -> Result<ChannelConfig> {
    let params = match name {
        "fog_dsrc" => FOG_LATENCY_SHAPE,
        "cloud_lte" => StableParams { mu: 120.0, ..FOG_LATENCY_SHAPE },
        _ => return Err(Error::Config(format!("unknown channel preset {name:?}"))),
    };
    Ok(ChannelConfig {
        latency_model: LatencyModel::Stable { params },
        loss_rate: 0.0,
        comm_range: 500.0,
    })
}

/// Stateful channel: owns the trace replay cursor. Stable-model channels are
/// stateless apart from the caller's rng.
#[derive(Debug, Clone)]
pub struct Channel {
    config: ChannelConfig,
    trace_cursor: usize,
}

impl Channel {
    pub fn new(config: ChannelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, trace_cursor: 0 })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    fn draw_latency_ms<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        match &self.config.latency_model {
            LatencyModel::Stable { params } => {
                // Negative draws are redrawn rather than clamped so the
                // truncation does not pile mass at zero.
                for _ in 0..10_000 {
                    let v = stable::sample(*params, rng);
                    if v >= 0.0 {
                        return Ok(v);
                    }
                }
                Err(Error::Internal("latency redraw loop failed to find a non-negative value".into()))
            }
            LatencyModel::Trace { values_ms, wrap } => {
                if self.trace_cursor >= values_ms.len() {
                    if *wrap && !values_ms.is_empty() {
                        self.trace_cursor = 0;
                    } else {
                        return Err(Error::Config("latency trace exhausted".into()));
                    }
                }
                let v = values_ms[self.trace_cursor];
                self.trace_cursor += 1;
                Ok(v)
            }
        }
    }

    /// Attempt one upload. Range gating is decided before any rng draw so
    /// out-of-range packets never consume randomness.
    pub fn transmit<R: Rng + ?Sized>(
        &mut self,
        packet: StatusPacket,
        sender_location: (f64, f64),
        fog_location: (f64, f64),
        rng: &mut R,
    ) -> Result<Delivery> {
        let d = (sender_location.0 - fog_location.0).hypot(sender_location.1 - fog_location.1);
        if d > self.config.comm_range {
            return Ok(Delivery::OutOfRange { packet });
        }
        if rng.gen::<f64>() < self.config.loss_rate {
            return Ok(Delivery::Lost { packet });
        }
        let latency_ms = self.draw_latency_ms(rng)?;
        let arrival_time = packet.sensed_time + latency_ms / 1000.0;
        Ok(Delivery::Delivered { packet, arrival_time, latency_ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn packet(t: f64) -> StatusPacket {
        StatusPacket {
            vehicle_id: "v1".into(),
            sensed_time: t,
            location: (0.0, 0.0),
            velocity: (10.0, 0.0),
            acceleration: (0.0, 0.0),
            heading: 0.0,
        }
    }

    fn stable_config(loss_rate: f64) -> ChannelConfig {
        ChannelConfig {
            latency_model: LatencyModel::Stable {
                params: StableParams { alpha: 1.77395, beta: 1.0, mu: 72.7343, sigma: 13.3685 },
            },
            loss_rate,
            comm_range: 500.0,
        }
    }

    #[test]
    fn out_of_range_regardless_of_rng() {
        let mut ch = Channel::new(stable_config(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = ch.transmit(packet(1.0), (600.0, 0.0), (0.0, 0.0), &mut rng).unwrap();
        assert!(matches!(d, Delivery::OutOfRange { .. }));
    }

    #[test]
    fn certain_loss() {
        let mut ch = Channel::new(stable_config(1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = ch.transmit(packet(1.0), (100.0, 0.0), (0.0, 0.0), &mut rng).unwrap();
        assert!(matches!(d, Delivery::Lost { .. }));
    }

    #[test]
    fn mean_latency_matches_location_parameter() {
        // With alpha > 1 the mean equals mu; Monte-Carlo over 1e5 deliveries.
        let mut ch = Channel::new(stable_config(0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            match ch.transmit(packet(0.0), (0.0, 0.0), (0.0, 0.0), &mut rng).unwrap() {
                Delivery::Delivered { latency_ms, arrival_time, .. } => {
                    assert!(latency_ms >= 0.0);
                    assert!((arrival_time - latency_ms / 1000.0).abs() < 1e-12);
                    sum += latency_ms;
                }
                other => panic!("unexpected outcome {other:?}"),
            }
        }
        let mean = sum / n as f64;
        assert!((mean - 72.7343).abs() < 2.0, "mean latency {mean}");
    }

    #[test]
    fn preset_means() {
        for (name, expect) in [("fog_dsrc", 77.0), ("cloud_lte", 120.0)] {
            let mut ch = Channel::new(preset(name).unwrap()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let n = 100_000;
            let mut sum = 0.0;
            for _ in 0..n {
                match ch.transmit(packet(0.0), (0.0, 0.0), (0.0, 0.0), &mut rng).unwrap() {
                    Delivery::Delivered { latency_ms, .. } => sum += latency_ms,
                    other => panic!("unexpected outcome {other:?}"),
                }
            }
            let mean = sum / n as f64;
            assert!((mean - expect).abs() < 3.0, "{name} mean {mean}");
        }
    }

    #[test]
    fn unknown_preset_errors() {
        assert!(preset("bogus").is_err());
    }

    #[test]
    fn loss_fraction_within_binomial_bounds() {
        for &p in &[0.02, 0.06] {
            let mut ch = Channel::new(stable_config(p)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(23);
            let n = 100_000;
            let mut lost = 0usize;
            for _ in 0..n {
                if matches!(
                    ch.transmit(packet(0.0), (0.0, 0.0), (0.0, 0.0), &mut rng).unwrap(),
                    Delivery::Lost { .. }
                ) {
                    lost += 1;
                }
            }
            let frac = lost as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((frac - p).abs() <= 3.0 * sigma, "p={p} observed {frac}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let run = || {
            let mut ch = Channel::new(stable_config(0.1)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..50)
                .map(|i| ch.transmit(packet(i as f64), (10.0, 0.0), (0.0, 0.0), &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn out_of_range_consumes_no_randomness() {
        let seq = |with_oor: bool| {
            let mut ch = Channel::new(stable_config(0.0)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            if with_oor {
                let d = ch.transmit(packet(0.0), (900.0, 0.0), (0.0, 0.0), &mut rng).unwrap();
                assert!(matches!(d, Delivery::OutOfRange { .. }));
            }
            ch.transmit(packet(1.0), (0.0, 0.0), (0.0, 0.0), &mut rng).unwrap()
        };
        assert_eq!(seq(true), seq(false));
    }

    #[test]
    fn trace_replay_and_exhaustion() {
        let cfg = ChannelConfig {
            latency_model: LatencyModel::Trace { values_ms: vec![10.0, 20.0], wrap: false },
            loss_rate: 0.0,
            comm_range: 500.0,
        };
        let mut ch = Channel::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lat = |d: Delivery| match d {
            Delivery::Delivered { latency_ms, .. } => latency_ms,
            other => panic!("{other:?}"),
        };
        assert_eq!(lat(ch.transmit(packet(0.0), (0.0, 0.0), (0.0, 0.0), &mut rng).unwrap()), 10.0);
        assert_eq!(lat(ch.transmit(packet(1.0), (0.0, 0.0), (0.0, 0.0), &mut rng).unwrap()), 20.0);
        assert!(ch.transmit(packet(2.0), (0.0, 0.0), (0.0, 0.0), &mut rng).is_err());

        let mut wrapped = Channel::new(ChannelConfig {
            latency_model: LatencyModel::Trace { values_ms: vec![10.0, 20.0], wrap: true },
            ..cfg
        })
        .unwrap();
        for expect in [10.0, 20.0, 10.0, 20.0, 10.0] {
            let d = wrapped.transmit(packet(0.0), (0.0, 0.0), (0.0, 0.0), &mut rng).unwrap();
            assert_eq!(lat(d), expect);
        }
    }

    #[test]
    fn config_validation() {
        assert!(Channel::new(ChannelConfig { loss_rate: 1.5, ..stable_config(0.0) }).is_err());
        assert!(Channel::new(ChannelConfig { comm_range: 0.0, ..stable_config(0.0) }).is_err());
        let bad_trace = ChannelConfig {
            latency_model: LatencyModel::Trace { values_ms: vec![-1.0], wrap: false },
            loss_rate: 0.0,
            comm_range: 500.0,
        };
        assert!(Channel::new(bad_trace).is_err());
    }
}
