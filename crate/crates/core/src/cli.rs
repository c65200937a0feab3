//! Command-line front end. Machine-readable output goes to stdout, a short
//! human summary to stderr.
//!
//! Exit codes: 0 success, 2 usage, 3 validation, 4 degenerate geometry,
//! 5 no convergence.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use serde::Serialize;

use crate::compound::{compound_poses_flagged, PsdRepair};
use crate::error::{Error, Result};
use crate::io::{
    read_noisy_pose, sha256_hex, AssumedCovariances, DatasetFile, PoseFile, PoseRecord, Provenance, ResultFile,
    TruthFile, SCHEMA_VERSION,
};
use crate::montecarlo::{
    eps_metric, generate_dataset, random_truth, run_sweep, sample_chain_covariance, SyntheticConfig,
};
use crate::noise::Cov3;
use crate::transsolve::solve_axxb;

#[derive(Debug, Parser)]
#[command(
    name = "handeye-cov",
    version,
    about = "Hand-eye calibration AX = XB with covariance of X"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Estimate X and its covariance from a dataset.
    Calibrate(Box<CalibrateArgs>),
    /// Compare predicted and Monte-Carlo covariances on synthetic data.
    Validate(ValidateArgs),
    /// Compose a chain of uncertain poses.
    Compound(CompoundArgs),
    /// One-standard-deviation ellipse of a 2×2 covariance block as CSV.
    Ellipse(EllipseArgs),
}

fn parse_lambda(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(format!("lambda must be a finite value >= 0, got {s}"));
    }
    Ok(v)
}

/// Three values (diagonal) or nine (row-major).
fn parse_cov(s: &str) -> std::result::Result<Cov3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v.len() {
        3 => Cov3::new(nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(
            v[0], v[1], v[2],
        ))),
        9 => Cov3::from_row_slice(&v),
        n => return Err(format!("expected 3 or 9 comma-separated values, got {n}")),
    }
    .map_err(|e| e.to_string())
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "1e-5", value_parser = parse_lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset path (line-delimited JSON).
    #[arg(long, default_value = "dataset.jsonl")]
    pub out: PathBuf,
    /// Ground-truth path; defaults to the dataset path with `.truth.json`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Leave per-pair covariances out of the dataset.
    #[arg(long)]
    pub no_covariances: bool,
}

#[derive(Debug, clap::Args)]
pub struct CalibrateArgs {
    pub dataset: PathBuf,
    /// Also write the result file here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed recorded in the provenance block.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shared covariance for pairs without `cov_RA`: 3 (diagonal) or 9 values.
    #[arg(long, value_parser = parse_cov, allow_hyphen_values = true)]
    pub assume_cov_ra: Option<Cov3>,
    #[arg(long, value_parser = parse_cov, allow_hyphen_values = true)]
    pub assume_cov_rb: Option<Cov3>,
    #[arg(long, value_parser = parse_cov, allow_hyphen_values = true)]
    pub assume_cov_ta: Option<Cov3>,
    #[arg(long, value_parser = parse_cov, allow_hyphen_values = true)]
    pub assume_cov_tb: Option<Cov3>,
}

#[derive(Debug, clap::Args)]
pub struct ValidateArgs {
    #[arg(long, default_value = "1e-5", value_parser = parse_lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Number of datasets.
    #[arg(long = "M", visible_alias = "m", default_value_t = 1000, value_parser = clap::value_parser!(u64).range(2..))]
    pub m: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated noise scales; replaces --lambda.
    #[arg(long, value_delimiter = ',', value_parser = parse_lambda)]
    pub sweep: Option<Vec<f64>>,
}

#[derive(Debug, clap::Args)]
pub struct CompoundArgs {
    /// Pose files (or result files), composed left to right.
    #[arg(required = true)]
    pub poses: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cross-check the prediction against sampling.
    #[arg(long)]
    pub mc_check: bool,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(2..))]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisPair {
    Xy,
    Yz,
    Xz,
}

impl AxisPair {
    pub fn indices(self) -> (usize, usize) {
        match self {
            AxisPair::Xy => (0, 1),
            AxisPair::Yz => (1, 2),
            AxisPair::Xz => (0, 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Block {
    Rotation,
    Translation,
}

#[derive(Debug, clap::Args)]
pub struct EllipseArgs {
    /// Result or pose file.
    pub result: PathBuf,
    #[arg(long, value_enum, default_value = "xy")]
    pub axes: AxisPair,
    #[arg(long, value_enum, default_value = "rotation")]
    pub block: Block,
    #[arg(long, default_value_t = 360, value_parser = clap::value_parser!(u64).range(3..))]
    pub points: u64,
}

/// Points `V diag(√λ) [cos θ, sin θ]` for θ on a uniform grid, with
/// `V diag(λ) Vᵀ` the eigendecomposition of `block`.
pub fn ellipse_points(block: &Matrix2<f64>, n: usize) -> Vec<Vector2<f64>> {
    let eig = SymmetricEigen::new(*block);
    let scale = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    (0..n)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            eig.eigenvectors * Vector2::new(scale[0] * theta.cos(), scale[1] * theta.sin())
        })
        .collect()
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let s = serde_json::to_string_pretty(value).expect("finite values serialize");
        writeln!(self.out, "{s}")?;
        Ok(())
    }
}

fn default_truth_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_stem().unwrap_or_default().to_os_string();
    name.push(".truth.json");
    dataset.with_file_name(name)
}

#[derive(Serialize)]
struct SimulateSummary {
    dataset: String,
    truth: String,
    pairs: usize,
}

fn simulate(args: &SimulateArgs, io: &mut Io) -> Result<()> {
    let config = SyntheticConfig {
        lambda: args.lambda,
        k: args.k as usize,
        seed: args.seed,
        ..Default::default()
    };
    let x = random_truth(args.seed);
    let pairs = generate_dataset(&config, &x, 0);
    DatasetFile::from_pairs(&pairs, !args.no_covariances).write(&args.out)?;
    let truth_path = args.truth.clone().unwrap_or_else(|| default_truth_path(&args.out));
    TruthFile {
        schema_version: SCHEMA_VERSION.into(),
        X: PoseRecord::from_pose(&x),
        lambda: config.lambda,
        k: config.k,
        seed: config.seed,
        cov_RA: config.cov_ra().to_row_major(),
        cov_RB: config.cov_rb().to_row_major(),
        cov_tA: config.cov_ta().to_row_major(),
        cov_tB: config.cov_tb().to_row_major(),
    }
    .write(&truth_path)?;
    writeln!(
        io.err,
        "wrote {} pairs to {} (truth: {})",
        pairs.len(),
        args.out.display(),
        truth_path.display()
    )?;
    io.json(&SimulateSummary {
        dataset: args.out.display().to_string(),
        truth: truth_path.display().to_string(),
        pairs: pairs.len(),
    })
}

fn calibrate(args: &CalibrateArgs, io: &mut Io) -> Result<()> {
    let bytes = std::fs::read(&args.dataset).map_err(|e| Error::Io(format!("{}: {e}", args.dataset.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", args.dataset.display())))?;
    let file = DatasetFile::parse(&text, &args.dataset.display().to_string())?;
    let assumed = AssumedCovariances {
        rot_a: args.assume_cov_ra,
        rot_b: args.assume_cov_rb,
        trans_a: args.assume_cov_ta,
        trans_b: args.assume_cov_tb,
    };
    let pairs = file.measurement_set(&assumed)?;
    let solution = solve_axxb(&pairs)?;
    let result = ResultFile::from_solution(&solution, Provenance::new(Some(sha256_hex(&bytes)), args.seed));
    if let Some(out) = &args.out {
        result.write(out)?;
    }
    let t = solution.translation.translation;
    writeln!(
        io.err,
        "calibrated {} pairs: t = [{:.6}, {:.6}, {:.6}] m, sd(R) = [{:.3e}, {:.3e}, {:.3e}] rad, sd(t) = [{:.3e}, {:.3e}, {:.3e}] m",
        pairs.len(),
        t.x,
        t.y,
        t.z,
        solution.rotation.cov_rot.matrix()[(0, 0)].sqrt(),
        solution.rotation.cov_rot.matrix()[(1, 1)].sqrt(),
        solution.rotation.cov_rot.matrix()[(2, 2)].sqrt(),
        solution.translation.cov_trans.matrix()[(0, 0)].sqrt(),
        solution.translation.cov_trans.matrix()[(1, 1)].sqrt(),
        solution.translation.cov_trans.matrix()[(2, 2)].sqrt(),
    )?;
    io.json(&result)
}

fn fmt_eps(e: Option<f64>) -> String {
    e.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn validate(args: &ValidateArgs, io: &mut Io) -> Result<()> {
    let config = SyntheticConfig {
        k: args.k as usize,
        m: args.m as usize,
        seed: args.seed,
        ..Default::default()
    };
    let x = random_truth(args.seed);
    let lambdas = args.sweep.clone().unwrap_or_else(|| vec![args.lambda]);
    let reports = run_sweep(&config, &x, &lambdas)?;
    writeln!(io.err, "{:>10}  {:>9}  {:>9}", "lambda", "eps_rot", "eps_trans")?;
    for r in &reports {
        writeln!(
            io.err,
            "{:>10.1e}  {:>9}  {:>9}{}",
            r.lambda,
            fmt_eps(r.eps_rot),
            fmt_eps(r.eps_trans),
            if r.degenerate_metric {
                "  (degenerate: zero Monte-Carlo covariance)"
            } else {
                ""
            }
        )?;
    }
    if args.sweep.is_some() {
        io.json(&reports)
    } else {
        io.json(&reports[0])
    }
}

#[derive(Serialize)]
struct McCheck {
    samples: u64,
    seed: u64,
    cov_r_mc: [f64; 9],
    cov_t_mc: [f64; 9],
    eps_rot: Option<f64>,
    eps_trans: Option<f64>,
}

#[derive(Serialize)]
struct CompoundOutput {
    pose: PoseFile,
    psd_repair: PsdRepairFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_check: Option<McCheck>,
}

#[derive(Serialize)]
struct PsdRepairFlags {
    rotation: bool,
    translation: bool,
}

fn compound(args: &CompoundArgs, io: &mut Io) -> Result<()> {
    let poses = args
        .poses
        .iter()
        .map(|p| read_noisy_pose(p))
        .collect::<Result<Vec<_>>>()?;
    let mut repair = PsdRepair::default();
    let mut acc = poses[0];
    for p in &poses[1..] {
        let (next, r) = compound_poses_flagged(&acc, p)?;
        repair.rotation |= r.rotation;
        repair.translation |= r.translation;
        acc = next;
    }
    let file = PoseFile::from_noisy_pose(&acc);
    if let Some(out) = &args.out {
        file.write(out)?;
    }
    if repair.rotation || repair.translation {
        writeln!(io.err, "warning: compounded covariance needed PSD repair")?;
    }
    let mc_check = if args.mc_check {
        let (r, t) = sample_chain_covariance(&poses, args.samples as usize, args.seed)?;
        let check = McCheck {
            samples: args.samples,
            seed: args.seed,
            cov_r_mc: r.to_row_major(),
            cov_t_mc: t.to_row_major(),
            eps_rot: eps_metric(&acc.cov_rot, &r).ok(),
            eps_trans: eps_metric(&acc.cov_trans, &t).ok(),
        };
        writeln!(
            io.err,
            "composed {} poses; sampling check over {} draws: eps_rot {}, eps_trans {}",
            poses.len(),
            args.samples,
            fmt_eps(check.eps_rot),
            fmt_eps(check.eps_trans)
        )?;
        Some(check)
    } else {
        writeln!(io.err, "composed {} poses", poses.len())?;
        None
    };
    io.json(&CompoundOutput {
        pose: file,
        psd_repair: PsdRepairFlags {
            rotation: repair.rotation,
            translation: repair.translation,
        },
        mc_check,
    })
}

fn ellipse(args: &EllipseArgs, io: &mut Io) -> Result<()> {
    let pose = read_noisy_pose(&args.result)?;
    let cov = match args.block {
        Block::Rotation => pose.cov_rot,
        Block::Translation => pose.cov_trans,
    };
    let (i, j) = args.axes.indices();
    let m = cov.matrix();
    let block = Matrix2::new(m[(i, i)], m[(i, j)], m[(j, i)], m[(j, j)]);
    let names = ["x", "y", "z"];
    writeln!(io.out, "{},{}", names[i], names[j])?;
    for p in ellipse_points(&block, args.points as usize) {
        writeln!(io.out, "{:e},{:e}", p.x, p.y)?;
    }
    writeln!(
        io.err,
        "{} points, {:?} block, axes {}{}",
        args.points, args.block, names[i], names[j]
    )?;
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut io = Io { out, err };
    match &cli.command {
        Command::Simulate(a) => simulate(a, &mut io),
        Command::Calibrate(a) => calibrate(a, &mut io),
        Command::Validate(a) => validate(a, &mut io),
        Command::Compound(a) => compound(a, &mut io),
        Command::Ellipse(a) => ellipse(a, &mut io),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        // a closed downstream pipe is not a failure of the command
        Err(Error::Io(msg)) if msg.contains("Broken pipe") => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
