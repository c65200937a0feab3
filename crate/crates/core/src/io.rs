//! File formats: line-delimited datasets, result files, truth sidecars and
//! single-pose files.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! write/read cycle reproduces every value bit for bit. Units are radians
//! and meters; matrices are row-major.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::liegroup::RotationMatrix;
use crate::noise::{Cov3, MeasurementPair, NoisyPose};
use crate::pose::DecoupledPose;
use crate::transsolve::AxxbSolution;

pub const SCHEMA_VERSION: &str = "1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn check_schema(found: &str) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported schema_version {found:?} (expected {SCHEMA_VERSION:?})"
        )));
    }
    Ok(())
}

fn at_line(path: &str, line: usize) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::AtLine {
        path: path.to_string(),
        line,
        source: Box::new(e),
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::InvalidInput(e.to_string())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("finite values serialize");
    s.push('\n');
    s
}

fn parse_cov(name: &str, rows: &[f64; 9]) -> Result<Cov3> {
    Cov3::from_row_slice(rows).map_err(|e| Error::InvalidInput(format!("{name}: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl PoseRecord {
    pub fn from_pose(pose: &DecoupledPose) -> Self {
        Self {
            r: pose.rotation.to_row_major(),
            t: [pose.translation.x, pose.translation.y, pose.translation.z],
        }
    }

    /// Validates the rotation block, repairing it within the 1e-6 window.
    pub fn to_pose(&self) -> Result<DecoupledPose> {
        Ok(DecoupledPose::new(
            RotationMatrix::from_row_slice(&self.r)?,
            Vector3::from_row_slice(&self.t),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct PairRecord {
    pub A: PoseRecord,
    pub B: PoseRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_RA: Option<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_RB: Option<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_tA: Option<[f64; 9]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_tB: Option<[f64; 9]>,
}

/// Shared covariances for pairs that carry none.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AssumedCovariances {
    pub rot_a: Option<Cov3>,
    pub rot_b: Option<Cov3>,
    pub trans_a: Option<Cov3>,
    pub trans_b: Option<Cov3>,
}

impl PairRecord {
    pub fn from_pair(pair: &MeasurementPair, with_covariances: bool) -> Self {
        let cov = |c: &Cov3| with_covariances.then(|| c.to_row_major());
        Self {
            A: PoseRecord::from_pose(&pair.a.pose),
            B: PoseRecord::from_pose(&pair.b.pose),
            cov_RA: cov(&pair.a.cov_rot),
            cov_RB: cov(&pair.b.cov_rot),
            cov_tA: cov(&pair.a.cov_trans),
            cov_tB: cov(&pair.b.cov_trans),
        }
    }

    fn validate(&self) -> Result<()> {
        self.A.to_pose()?;
        self.B.to_pose()?;
        for (name, c) in [
            ("cov_RA", &self.cov_RA),
            ("cov_RB", &self.cov_RB),
            ("cov_tA", &self.cov_tA),
            ("cov_tB", &self.cov_tB),
        ] {
            if let Some(rows) = c {
                parse_cov(name, rows)?;
            }
        }
        Ok(())
    }

    /// Per-pair covariances win over `assumed`; a block missing from both is
    /// an error.
    pub fn to_pair(&self, assumed: &AssumedCovariances) -> Result<MeasurementPair> {
        let pick = |name: &str, own: &Option<[f64; 9]>, fallback: Option<Cov3>| -> Result<Cov3> {
            match (own, fallback) {
                (Some(rows), _) => parse_cov(name, rows),
                (None, Some(c)) => Ok(c),
                (None, None) => Err(Error::InvalidInput(format!(
                    "pair has no {name} and no assumed covariance was given"
                ))),
            }
        };
        Ok(MeasurementPair {
            a: NoisyPose::new(
                self.A.to_pose()?,
                pick("cov_RA", &self.cov_RA, assumed.rot_a)?,
                pick("cov_tA", &self.cov_tA, assumed.trans_a)?,
            ),
            b: NoisyPose::new(
                self.B.to_pose()?,
                pick("cov_RB", &self.cov_RB, assumed.rot_b)?,
                pick("cov_tB", &self.cov_tB, assumed.trans_b)?,
            ),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    schema_version: String,
    pairs: usize,
}

/// Header line `{"schema_version", "pairs"}` followed by one pair per line.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub pairs: Vec<PairRecord>,
}

impl DatasetFile {
    pub fn from_pairs(pairs: &[MeasurementPair], with_covariances: bool) -> Self {
        Self {
            pairs: pairs
                .iter()
                .map(|p| PairRecord::from_pair(p, with_covariances))
                .collect(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let header = DatasetHeader {
            schema_version: SCHEMA_VERSION.into(),
            pairs: self.pairs.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(p).expect("finite values serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses and validates; every error carries `source` and a 1-based
    /// line number. Blank lines are skipped.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (header_idx, header_line) = lines
            .next()
            .ok_or_else(|| Error::InvalidInput(format!("{source}: empty dataset")))?;
        let header: DatasetHeader = serde_json::from_str(header_line)
            .map_err(json_error)
            .map_err(at_line(source, header_idx + 1))?;
        check_schema(&header.schema_version).map_err(at_line(source, header_idx + 1))?;

        let mut pairs = Vec::with_capacity(header.pairs);
        for (idx, line) in lines {
            let record: PairRecord = serde_json::from_str(line)
                .map_err(json_error)
                .map_err(at_line(source, idx + 1))?;
            record.validate().map_err(at_line(source, idx + 1))?;
            pairs.push(record);
        }
        if pairs.len() != header.pairs {
            return Err(Error::InvalidInput(format!(
                "{source}: header announces {} pairs, found {}",
                header.pairs,
                pairs.len()
            )));
        }
        Ok(Self { pairs })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_jsonl())
    }

    pub fn measurement_set(&self, assumed: &AssumedCovariances) -> Result<Vec<MeasurementPair>> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.to_pair(assumed).map_err(|e| Error::AtLine {
                    path: "pair".into(),
                    line: i + 1,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Iterations {
    pub rotation: usize,
    pub translation: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Residuals {
    /// Weighted sum of squared residuals at the solution.
    pub rotation_objective: f64,
    pub translation_objective: f64,
    /// Largest component of the last update.
    pub rotation_last_update: f64,
    pub translation_last_update: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub input_sha256: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(input_sha256: Option<String>, seed: Option<u64>) -> Self {
        Self {
            input_sha256,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ResultFile {
    pub schema_version: String,
    pub X: PoseRecord,
    pub cov_R: [f64; 9],
    pub cov_t: [f64; 9],
    pub iterations: Iterations,
    pub residuals: Residuals,
    pub provenance: Provenance,
}

impl ResultFile {
    pub fn from_solution(solution: &AxxbSolution, provenance: Provenance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            X: PoseRecord::from_pose(&solution.pose()),
            cov_R: solution.rotation.cov_rot.to_row_major(),
            cov_t: solution.translation.cov_trans.to_row_major(),
            iterations: Iterations {
                rotation: solution.rotation.iterations,
                translation: solution.translation.iterations,
            },
            residuals: Residuals {
                rotation_objective: solution.rotation.objective,
                translation_objective: solution.translation.objective,
                rotation_last_update: solution.rotation.final_update_norm,
                translation_last_update: solution.translation.final_update_norm,
            },
            provenance,
        }
    }

    pub fn to_json(&self) -> String {
        to_json_pretty(self)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(json_error)?;
        check_schema(&r.schema_version)?;
        r.noisy_pose()?;
        Ok(r)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }

    pub fn noisy_pose(&self) -> Result<NoisyPose> {
        Ok(NoisyPose::new(
            self.X.to_pose()?,
            parse_cov("cov_R", &self.cov_R)?,
            parse_cov("cov_t", &self.cov_t)?,
        ))
    }
}

/// Ground truth written next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct TruthFile {
    pub schema_version: String,
    pub X: PoseRecord,
    pub lambda: f64,
    pub k: usize,
    pub seed: u64,
    pub cov_RA: [f64; 9],
    pub cov_RB: [f64; 9],
    pub cov_tA: [f64; 9],
    pub cov_tB: [f64; 9],
}

impl TruthFile {
    pub fn to_json(&self) -> String {
        to_json_pretty(self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let t: Self = serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        check_schema(&t.schema_version)?;
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }
}

/// A single pose with its rotation and translation covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFile {
    pub schema_version: String,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub cov_r: [f64; 9],
    pub cov_t: [f64; 9],
}

impl PoseFile {
    pub fn from_noisy_pose(p: &NoisyPose) -> Self {
        let rec = PoseRecord::from_pose(&p.pose);
        Self {
            schema_version: SCHEMA_VERSION.into(),
            r: rec.r,
            t: rec.t,
            cov_r: p.cov_rot.to_row_major(),
            cov_t: p.cov_trans.to_row_major(),
        }
    }

    pub fn to_noisy_pose(&self) -> Result<NoisyPose> {
        Ok(NoisyPose::new(
            PoseRecord { r: self.r, t: self.t }.to_pose()?,
            parse_cov("cov_r", &self.cov_r)?,
            parse_cov("cov_t", &self.cov_t)?,
        ))
    }

    pub fn to_json(&self) -> String {
        to_json_pretty(self)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(json_error)?;
        check_schema(&p.schema_version)?;
        p.to_noisy_pose()?;
        Ok(p)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }
}

/// Reads a pose file, or the X of a result file.
pub fn read_noisy_pose(path: &Path) -> Result<NoisyPose> {
    let text = read_text(path)?;
    let tag = |e: Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    match PoseFile::parse(&text) {
        Ok(p) => p.to_noisy_pose().map_err(tag),
        Err(pose_err) => match ResultFile::parse(&text) {
            Ok(r) => r.noisy_pose().map_err(tag),
            Err(_) => Err(tag(pose_err)),
        },
    }
}
