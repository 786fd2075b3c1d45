//! Dump formats: flat binary payloads with JSON sidecars.
//!
//! Two artifacts are exchanged with disk:
//!
//! * **matrix dumps** — a coupling matrix as row-major little-endian `f64`
//!   plus a sidecar `{schema_version, n, t, setting, seed}`;
//! * **dataset dumps** — patterns and examples as raw `+-1` bytes, one
//!   archetype followed by its `M` examples per block, plus a sidecar
//!   `{schema_version, n, p, m, r, seed, setting}`.
//!
//! The parse/decode functions are total: any byte input returns `Ok` or a
//! [`Error::Format`]-style error, never a panic. They are fuzzed under
//! `fuzz/`.

use crate::coupling::CouplingMatrix;
use crate::data::{ExampleSet, GroundTruthSet};
use crate::error::{Error, Result};
use crate::rng::RngSpec;
use crate::setting::{ModelSetting, SettingKind};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DUMP_SCHEMA_VERSION: u32 = 1;

/// Dreaming times may be `+inf` (projector limit), which JSON numbers cannot
/// carry; times are stored as strings (`"0"`, `"1.5"`, `"inf"`).
pub mod time_string {
    use serde::{self, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse::<f64>()
            .map_err(|e| serde::de::Error::custom(format!("bad dreaming time `{raw}`: {e}")))
    }
}

/// Sidecar for a coupling-matrix dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub schema_version: u32,
    pub n: usize,
    #[serde(with = "time_string")]
    pub t: f64,
    pub setting: ModelSetting,
    pub seed: Option<RngSpec>,
}

/// Sidecar for a dataset dump. `m = 0` means ground truths only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub schema_version: u32,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub r: f64,
    pub setting: SettingKind,
    pub seed: Option<RngSpec>,
}

fn check_schema(found: u32) -> Result<()> {
    if found != DUMP_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported dump schema version {found} (expected {DUMP_SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

/// Parse and validate a matrix sidecar.
pub fn parse_matrix_sidecar(bytes: &[u8]) -> Result<MatrixSidecar> {
    let sc: MatrixSidecar = serde_json::from_slice(bytes)?;
    check_schema(sc.schema_version)?;
    if sc.n == 0 {
        return Err(Error::Format("matrix sidecar has n = 0".into()));
    }
    if sc.t.is_nan() || sc.t < 0.0 {
        return Err(Error::Format(format!("bad dreaming time {}", sc.t)));
    }
    sc.setting.validate()?;
    Ok(sc)
}

/// Decode the binary payload of a matrix dump against its sidecar.
pub fn decode_matrix_payload(sidecar: &MatrixSidecar, bytes: &[u8]) -> Result<CouplingMatrix> {
    let n = sidecar.n;
    let count = n
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
    if bytes.len() != count {
        return Err(Error::Format(format!(
            "matrix payload holds {} bytes, expected {count} for n = {n}",
            bytes.len()
        )));
    }
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let off = (i * n + j) * 8;
            let v = f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8-byte chunk"));
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite matrix entry {v} at ({i},{j})"
                )));
            }
            m[(i, j)] = v;
        }
    }
    CouplingMatrix::from_matrix(m, sidecar.t, sidecar.setting)
}

/// Write `<base>.bin` and `<base>.json` under `dir`.
pub fn write_matrix_dump(
    dir: &Path,
    base: &str,
    j: &CouplingMatrix,
    seed: Option<RngSpec>,
) -> Result<(PathBuf, PathBuf)> {
    let n = j.num_neurons();
    let mut bytes = Vec::with_capacity(n * n * 8);
    let m = j.matrix();
    for i in 0..n {
        for l in 0..n {
            bytes.extend_from_slice(&m[(i, l)].to_le_bytes());
        }
    }
    let sidecar = MatrixSidecar {
        schema_version: DUMP_SCHEMA_VERSION,
        n,
        t: j.t(),
        setting: *j.setting(),
        seed,
    };
    std::fs::create_dir_all(dir)?;
    let bin_path = dir.join(format!("{base}.bin"));
    let json_path = dir.join(format!("{base}.json"));
    std::fs::write(&bin_path, bytes)?;
    std::fs::write(&json_path, serde_json::to_vec_pretty(&sidecar)?)?;
    Ok((bin_path, json_path))
}

/// Read a matrix dump back.
pub fn read_matrix_dump(bin_path: &Path, json_path: &Path) -> Result<(CouplingMatrix, MatrixSidecar)> {
    let sidecar = parse_matrix_sidecar(&std::fs::read(json_path)?)?;
    let j = decode_matrix_payload(&sidecar, &std::fs::read(bin_path)?)?;
    Ok((j, sidecar))
}

/// Parse and validate a dataset sidecar.
pub fn parse_dataset_sidecar(bytes: &[u8]) -> Result<DatasetSidecar> {
    let sc: DatasetSidecar = serde_json::from_slice(bytes)?;
    check_schema(sc.schema_version)?;
    if sc.n == 0 || sc.p == 0 {
        return Err(Error::Format("dataset sidecar needs n >= 1 and p >= 1".into()));
    }
    if sc.p > sc.n {
        return Err(Error::LoadDomain { p: sc.p, n: sc.n });
    }
    if !(0.0..=1.0).contains(&sc.r) || sc.r.is_nan() {
        return Err(Error::Format(format!("dataset quality r = {} outside [0,1]", sc.r)));
    }
    Ok(sc)
}

/// Decode a dataset payload: per class, one archetype row then `m` examples.
pub fn decode_dataset_payload(
    sidecar: &DatasetSidecar,
    bytes: &[u8],
) -> Result<(GroundTruthSet, Option<ExampleSet>)> {
    let (n, p, m) = (sidecar.n, sidecar.p, sidecar.m);
    let expect = p
        .checked_mul(m.checked_add(1).ok_or_else(overflow)?)
        .and_then(|rows| rows.checked_mul(n))
        .ok_or_else(overflow)?;
    if bytes.len() != expect {
        return Err(Error::Format(format!(
            "dataset payload holds {} bytes, expected {expect} for P={p}, M={m}, N={n}",
            bytes.len()
        )));
    }
    let as_spin = |b: u8, what: &str| -> Result<i8> {
        match b as i8 {
            1 => Ok(1),
            -1 => Ok(-1),
            other => Err(Error::Format(format!("{what} byte {other} is not +-1"))),
        }
    };
    let block = (m + 1) * n;
    let mut gt_data = Vec::with_capacity(p * n);
    let mut ex_data = Vec::with_capacity(p * m * n);
    for mu in 0..p {
        let chunk = &bytes[mu * block..(mu + 1) * block];
        for &b in &chunk[..n] {
            gt_data.push(as_spin(b, "archetype")?);
        }
        for &b in &chunk[n..] {
            ex_data.push(as_spin(b, "example")?);
        }
    }
    let gt = GroundTruthSet::from_raw(gt_data, p, n)?;
    let ex = if m > 0 {
        Some(ExampleSet::from_raw(ex_data, p, m, n, sidecar.r)?)
    } else {
        None
    };
    Ok((gt, ex))
}

fn overflow() -> Error {
    Error::Format("dataset dimensions overflow".into())
}

/// Write `<base>.bin` and `<base>.json` for a dataset.
pub fn write_dataset_dump(
    dir: &Path,
    base: &str,
    gt: &GroundTruthSet,
    ex: Option<&ExampleSet>,
    setting: SettingKind,
    seed: Option<RngSpec>,
) -> Result<(PathBuf, PathBuf)> {
    let (p, n) = (gt.num_patterns(), gt.num_neurons());
    if let Some(ex) = ex {
        if ex.num_classes() != p || ex.num_neurons() != n {
            return Err(Error::ShapeMismatch(format!(
                "example set {}x{}x{} does not match ground truths {p}x{n}",
                ex.num_classes(),
                ex.per_class(),
                ex.num_neurons()
            )));
        }
    }
    let m = ex.map_or(0, ExampleSet::per_class);
    let mut bytes = Vec::with_capacity(p * (m + 1) * n);
    for mu in 0..p {
        bytes.extend(gt.pattern(mu).iter().map(|&s| s as u8));
        if let Some(ex) = ex {
            for a in 0..m {
                bytes.extend(ex.example(mu, a).iter().map(|&s| s as u8));
            }
        }
    }
    let sidecar = DatasetSidecar {
        schema_version: DUMP_SCHEMA_VERSION,
        n,
        p,
        m,
        r: ex.map_or(1.0, ExampleSet::quality),
        setting,
        seed,
    };
    std::fs::create_dir_all(dir)?;
    let bin_path = dir.join(format!("{base}.bin"));
    let json_path = dir.join(format!("{base}.json"));
    std::fs::write(&bin_path, bytes)?;
    std::fs::write(&json_path, serde_json::to_vec_pretty(&sidecar)?)?;
    Ok((bin_path, json_path))
}

/// Read a dataset dump back.
pub fn read_dataset_dump(
    bin_path: &Path,
    json_path: &Path,
) -> Result<(GroundTruthSet, Option<ExampleSet>, DatasetSidecar)> {
    let sidecar = parse_dataset_sidecar(&std::fs::read(json_path)?)?;
    let (gt, ex) = decode_dataset_payload(&sidecar, &std::fs::read(bin_path)?)?;
    Ok((gt, ex, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{build_coupling, build_information_matrix, DataSource};
    use crate::data::{make_examples, make_ground_truths};

    fn spec() -> RngSpec {
        RngSpec::new(5, 1)
    }

    #[test]
    fn matrix_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let gt = make_ground_truths(20, 4, &spec()).unwrap();
        let info =
            build_information_matrix(DataSource::Patterns(&gt), SettingKind::BasicStoring)
                .unwrap();
        for t in [0.0, 2.5, f64::INFINITY] {
            let j = build_coupling(&info, t).unwrap();
            let (bin, json) = write_matrix_dump(dir.path(), &format!("j_{t}"), &j, Some(spec()))
                .unwrap();
            let (back, sidecar) = read_matrix_dump(&bin, &json).unwrap();
            assert_eq!(sidecar.n, 20);
            assert_eq!(sidecar.t.is_infinite(), t.is_infinite());
            assert_eq!((back.matrix() - j.matrix()).norm_max(), 0.0);
        }
    }

    #[test]
    fn dataset_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let gt = make_ground_truths(10, 3, &spec()).unwrap();
        let ex = make_examples(&gt, 4, 0.5, &spec()).unwrap();
        let (bin, json) = write_dataset_dump(
            dir.path(),
            "data",
            &gt,
            Some(&ex),
            SettingKind::Supervised,
            Some(spec()),
        )
        .unwrap();
        let (gt2, ex2, sc) = read_dataset_dump(&bin, &json).unwrap();
        assert_eq!(gt2, gt);
        assert_eq!(ex2.unwrap(), ex);
        assert_eq!(sc.m, 4);

        // Ground truths only.
        let (bin, json) = write_dataset_dump(
            dir.path(),
            "patterns",
            &gt,
            None,
            SettingKind::BasicStoring,
            None,
        )
        .unwrap();
        let (gt3, none, _) = read_dataset_dump(&bin, &json).unwrap();
        assert_eq!(gt3, gt);
        assert!(none.is_none());
    }

    #[test]
    fn malformed_sidecars_are_rejected() {
        assert!(parse_matrix_sidecar(b"not json").is_err());
        assert!(parse_matrix_sidecar(b"{}").is_err());
        let bad_version = serde_json::json!({
            "schema_version": 99, "n": 4, "t": "0",
            "setting": {"kind": "basic_storing", "alpha": 0.5, "r": 1.0, "m": 1},
            "seed": null
        });
        assert!(parse_matrix_sidecar(bad_version.to_string().as_bytes()).is_err());
        let bad_t = serde_json::json!({
            "schema_version": 1, "n": 4, "t": "-3",
            "setting": {"kind": "basic_storing", "alpha": 0.5, "r": 1.0, "m": 1},
            "seed": null
        });
        assert!(parse_matrix_sidecar(bad_t.to_string().as_bytes()).is_err());
        assert!(parse_dataset_sidecar(b"[1,2,3]").is_err());
    }

    #[test]
    fn malformed_payloads_are_rejected() {
        let sc = MatrixSidecar {
            schema_version: DUMP_SCHEMA_VERSION,
            n: 2,
            t: 0.0,
            setting: ModelSetting::storing(0.5).unwrap(),
            seed: None,
        };
        assert!(decode_matrix_payload(&sc, &[0u8; 7]).is_err());
        // Non-finite entry.
        let mut bytes = vec![0u8; 32];
        bytes[..8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_matrix_payload(&sc, &bytes).is_err());
        // Asymmetric payload.
        let mut bytes = Vec::new();
        for v in [0.0f64, 1.0, 2.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(decode_matrix_payload(&sc, &bytes).is_err());

        let dsc = DatasetSidecar {
            schema_version: DUMP_SCHEMA_VERSION,
            n: 2,
            p: 1,
            m: 1,
            r: 0.5,
            setting: SettingKind::Supervised,
            seed: None,
        };
        assert!(decode_dataset_payload(&dsc, &[1, 1, 1]).is_err());
        assert!(decode_dataset_payload(&dsc, &[1, 1, 3, 1]).is_err());
        assert!(decode_dataset_payload(&dsc, &[1, 255, 255, 1]).is_ok());
    }
}
