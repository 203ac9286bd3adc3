//! Simulation engine and experiment harness: run configuration, the per-slot
//! discrete-time loop driving channel + fog node + metrics, and parameter
//! sweeps with seeded reproducibility.

mod config;
mod engine;
mod sweep;

pub use config::{
    synth_run_config, AlgorithmSection, ChannelSection, OutputSection, RunConfig, ScenarioSection,
    Thresholds,
};
pub use engine::{report_text, run, warning_log_csv, PacketCounts, RunReport};
pub use sweep::{sweep, SweepAxis, SweepConfig, SweepResult, SweepRow, RESULTS_HEADER};

/// FNV-1a over the byte representations of the seed parts; used to derive
/// independent, reproducible rng streams (stable across platforms and builds,
/// unlike the std hasher).
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(&master.to_le_bytes());
    for p in parts {
        eat(p.as_bytes());
        eat(&[0xff]);
    }
    h
}

/// Write `content` to `path` atomically (temp file + rename) so concurrent
/// sweep cells and interrupted runs never leave partial files.
pub(crate) fn atomic_write(path: &std::path::Path, content: &str) -> crate::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
