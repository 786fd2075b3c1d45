//! Shared CLI plumbing: output layout, metadata sidecars, sweep parsing and
//! the desk-scale memory guardrail.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const METADATA_SCHEMA_VERSION: u32 = 1;

/// Sidecar written next to every result file. Holds everything needed to
/// re-run the command (`hopdream rerun <sidecar>`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    /// Which runner produced this (`simulate-retrieval`, `reproduce`, ...).
    pub command: String,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    /// SHA-256 over the canonical JSON of `config`.
    pub config_sha256: String,
    /// Defaults read off the figures rather than stated in text.
    pub figure_inferred_defaults: bool,
    /// Output files this run produced (relative to the sidecar).
    pub outputs: Vec<String>,
}

impl RunMetadata {
    pub fn new<C: Serialize>(
        command: &str,
        config: &C,
        figure_inferred_defaults: bool,
        outputs: Vec<String>,
    ) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let canonical = serde_json::to_vec(&config)?;
        let digest = Sha256::digest(&canonical);
        Ok(Self {
            schema_version: METADATA_SCHEMA_VERSION,
            tool: "hopdream".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            config_sha256: format!("{digest:x}"),
            figure_inferred_defaults,
            outputs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(self)?)
            .with_context(|| format!("writing metadata to {}", path.display()))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading metadata from {}", path.display()))?;
        let meta: Self = serde_json::from_slice(&bytes)?;
        if meta.schema_version != METADATA_SCHEMA_VERSION {
            bail!(
                "metadata schema {} not supported (expected {METADATA_SCHEMA_VERSION})",
                meta.schema_version
            );
        }
        Ok(meta)
    }
}

/// A `var=lo:hi:step` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub var: String,
    pub values: Vec<f64>,
}

pub fn parse_sweep(raw: &str) -> Result<Sweep> {
    let (var, range) = raw
        .split_once('=')
        .with_context(|| format!("sweep `{raw}` is not var=lo:hi:step"))?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        bail!("sweep `{raw}` needs lo:hi:step");
    }
    let lo: f64 = parts[0].parse().context("sweep lower bound")?;
    let hi: f64 = parts[1].parse().context("sweep upper bound")?;
    let step: f64 = parts[2].parse().context("sweep step")?;
    if !(step > 0.0) || hi < lo {
        bail!("sweep `{raw}` must have step > 0 and hi >= lo");
    }
    let count = ((hi - lo) / step).round() as usize;
    let mut values: Vec<f64> = (0..=count).map(|k| lo + k as f64 * step).collect();
    if let Some(last) = values.last_mut() {
        if (*last - hi).abs() < 1e-12 {
            *last = hi;
        }
    }
    values.retain(|v| *v <= hi + 1e-12);
    Ok(Sweep {
        var: var.trim().to_string(),
        values,
    })
}

/// Refuse runs whose dense matrices cannot fit comfortably in memory.
///
/// The estimate charges `matrices` dense `8 N^2` buffers per concurrent
/// task; `--force` bypasses it.
pub fn check_memory_budget(n: usize, matrices: usize, force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    let need = 8u64
        .saturating_mul(n as u64)
        .saturating_mul(n as u64)
        .saturating_mul(matrices.max(1) as u64);
    let available = available_memory_bytes().unwrap_or(u64::MAX);
    if need > available / 2 {
        let suggestion = ((available as f64 / 2.0 / (8.0 * matrices.max(1) as f64)).sqrt()
            as usize)
            .max(64);
        bail!(
            "estimated {:.1} GiB of dense matrices exceeds half of available memory \
             ({:.1} GiB); try --n {} or pass --force",
            need as f64 / (1u64 << 30) as f64,
            available as f64 / (1u64 << 30) as f64,
            suggestion
        );
    }
    Ok(())
}

fn available_memory_bytes() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("MemAvailable:") {
            let kb: u64 = rest.trim().trim_end_matches(" kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

/// CSV writer with a fixed header; flushes on drop via the inner writer.
pub fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    Ok(w)
}

/// Fixed float formatting for CSV cells: shortest round-trip decimal.
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        let s = parse_sweep("p=0:1:0.25").unwrap();
        assert_eq!(s.var, "p");
        assert_eq!(s.values, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(parse_sweep("p=1:0:0.1").is_err());
        assert!(parse_sweep("nonsense").is_err());
        assert!(parse_sweep("r=0:1:-1").is_err());
    }

    #[test]
    fn metadata_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = RunMetadata::new(
            "test",
            &serde_json::json!({"n": 10, "seed": 3}),
            false,
            vec!["a.csv".into()],
        )
        .unwrap();
        let path = dir.path().join("m.meta.json");
        meta.write(&path).unwrap();
        let back = RunMetadata::read(&path).unwrap();
        assert_eq!(back.config_sha256, meta.config_sha256);
        assert_eq!(back.command, "test");
    }

    #[test]
    fn memory_guardrail_refuses_absurd_sizes() {
        assert!(check_memory_budget(1 << 20, 4, false).is_err());
        assert!(check_memory_budget(1 << 20, 4, true).is_ok());
        assert!(check_memory_budget(512, 4, false).is_ok());
    }
}
