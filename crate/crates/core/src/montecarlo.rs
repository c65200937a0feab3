//! Synthetic datasets, Monte-Carlo covariance estimation and the
//! predicted-vs-empirical comparison.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::compound::propagate_chain;
use crate::error::{Error, Result};
use crate::liegroup::{exp_so3, log_so3, RotationMatrix};
use crate::noise::{rng_from_seed, sample_noisy_pose_with, Cov3, MeasurementPair, MeasurementSet, NoisyPose};
use crate::pose::DecoupledPose;
use crate::transsolve::{solve_axxb, AxxbSolution};

/// Below this Frobenius norm a Monte-Carlo covariance is treated as zero.
pub const DEGENERATE_MC_NORM: f64 = 1e-24;

/// Angle range of random motions, bounded away from 0 and π.
pub const MIN_MOTION_ANGLE: f64 = 0.1;
pub const MAX_MOTION_ANGLE: f64 = PI - 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    /// Noise scale applied to every base covariance.
    pub lambda: f64,
    /// Pairs per dataset.
    pub k: usize,
    /// Number of datasets.
    pub m: usize,
    pub seed: u64,
    pub base_cov_ra: Cov3,
    pub base_cov_rb: Cov3,
    pub base_cov_ta: Cov3,
    pub base_cov_tb: Cov3,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-5,
            k: 30,
            m: 1000,
            seed: 0,
            base_cov_ra: Cov3::from_diagonal([0.5, 0.2, 0.3]),
            base_cov_rb: Cov3::from_diagonal([0.7, 0.2, 0.8]),
            base_cov_ta: Cov3::from_diagonal([0.1, 0.2, 0.5]),
            base_cov_tb: Cov3::from_diagonal([0.7, 0.8, 0.1]),
        }
    }
}

impl SyntheticConfig {
    pub fn cov_ra(&self) -> Cov3 {
        self.base_cov_ra.scaled(self.lambda)
    }

    pub fn cov_rb(&self) -> Cov3 {
        self.base_cov_rb.scaled(self.lambda)
    }

    pub fn cov_ta(&self) -> Cov3 {
        self.base_cov_ta.scaled(self.lambda)
    }

    pub fn cov_tb(&self) -> Cov3 {
        self.base_cov_tb.scaled(self.lambda)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.k == 0 {
            return Err(Error::InvalidInput("k must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed of dataset `index`; independent of evaluation order.
    pub fn dataset_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}

/// Unit axis uniform on the sphere, angle uniform in
/// [`MIN_MOTION_ANGLE`, `MAX_MOTION_ANGLE`].
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).max(0.0).sqrt();
    let axis = Vector3::new(s * phi.cos(), s * phi.sin(), z);
    let angle = rng.random_range(MIN_MOTION_ANGLE..=MAX_MOTION_ANGLE);
    exp_so3(&(axis * angle))
}

/// Random rotation plus a translation uniform in [−1, 1]³ m.
pub fn random_pose<R: Rng + ?Sized>(rng: &mut R) -> DecoupledPose {
    let rotation = random_rotation(rng);
    let t = Vector3::new(
        rng.random_range(-1.0..=1.0),
        rng.random_range(-1.0..=1.0),
        rng.random_range(-1.0..=1.0),
    );
    DecoupledPose::new(rotation, t)
}

/// Random Ā and `B̄ = X̄⁻¹ Ā X̄`, so that `Ā X̄ = X̄ B̄`.
pub fn generate_true_pair<R: Rng + ?Sized>(x_true: &DecoupledPose, rng: &mut R) -> (DecoupledPose, DecoupledPose) {
    let a = random_pose(rng);
    let b = x_true.inverse().compose(&a).compose(x_true);
    (a, b)
}

/// Seeded form of [`generate_true_pair`].
pub fn generate_true_pair_seeded(x_true: &DecoupledPose, rng_seed: u64) -> (DecoupledPose, DecoupledPose) {
    generate_true_pair(x_true, &mut rng_from_seed(rng_seed))
}

/// The k uncorrupted pairs shared by every dataset of `config`.
pub fn generate_true_pairs(config: &SyntheticConfig, x_true: &DecoupledPose) -> Vec<(DecoupledPose, DecoupledPose)> {
    let mut rng = rng_from_seed(config.seed);
    (0..config.k).map(|_| generate_true_pair(x_true, &mut rng)).collect()
}

/// Corrupts `truth` with the λ-scaled noise of `config`, drawn from the
/// stream of dataset `index`.
pub fn corrupt_pairs(
    config: &SyntheticConfig,
    truth: &[(DecoupledPose, DecoupledPose)],
    index: usize,
) -> MeasurementSet {
    // dataset streams are offset by one so index 0 differs from the geometry stream
    let mut rng = rng_from_seed(config.dataset_seed(index).wrapping_add(1));
    let (cov_ra, cov_rb, cov_ta, cov_tb) = (config.cov_ra(), config.cov_rb(), config.cov_ta(), config.cov_tb());
    truth
        .iter()
        .map(|(a_true, b_true)| {
            let a = sample_noisy_pose_with(a_true, &cov_ra, &cov_ta, &mut rng);
            let b = sample_noisy_pose_with(b_true, &cov_rb, &cov_tb, &mut rng);
            MeasurementPair {
                a: NoisyPose::new(a, cov_ra, cov_ta),
                b: NoisyPose::new(b, cov_rb, cov_tb),
            }
        })
        .collect()
}

/// The `index`-th dataset of `config`: the shared uncorrupted pairs with
/// fresh noise, each pair carrying its λ-scaled covariances.
pub fn generate_dataset(config: &SyntheticConfig, x_true: &DecoupledPose, index: usize) -> MeasurementSet {
    corrupt_pairs(config, &generate_true_pairs(config, x_true), index)
}

/// Random ground-truth X̄ derived from a seed.
pub fn random_truth(seed: u64) -> DecoupledPose {
    // offset keeps the truth stream apart from dataset streams
    random_pose(&mut rng_from_seed(seed ^ 0x9e37_79b9_7f4a_7c15))
}

fn outer_mean(errors: &[Vector3<f64>]) -> Matrix3<f64> {
    let mut acc = Matrix3::zeros();
    for e in errors {
        acc += e * e.transpose();
    }
    acc / errors.len() as f64
}

/// `Σ_R = (1/M) Σ ξ_R ξ_Rᵀ` with `ξ_R = log(R̂ R̄⁻¹)^∨` and
/// `Σ_t = (1/M) Σ ξ_t ξ_tᵀ` with `ξ_t = t̂ − t̄`.
pub fn mc_covariance(estimates: &[DecoupledPose], truth: &DecoupledPose) -> Result<(Cov3, Cov3)> {
    if estimates.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "Monte-Carlo covariance needs at least 2 estimates, got {}",
            estimates.len()
        )));
    }
    let rt = truth.rotation.transpose();
    let rot: Vec<_> = estimates.iter().map(|e| log_so3(&(e.rotation * rt))).collect();
    let trans: Vec<_> = estimates.iter().map(|e| e.translation - truth.translation).collect();
    Ok((
        Cov3::from_symmetrized(outer_mean(&rot)),
        Cov3::from_symmetrized(outer_mean(&trans)),
    ))
}

/// `‖Σ_pred − Σ_mc‖_F / ‖Σ_mc‖_F`.
pub fn eps_metric(pred: &Cov3, mc: &Cov3) -> Result<f64> {
    let denom = mc.matrix().norm();
    if denom == 0.0 {
        return Err(Error::DivisionByZero("Monte-Carlo covariance is zero".into()));
    }
    Ok((pred.matrix() - mc.matrix()).norm() / denom)
}

/// Empirical noise of the B measurements against `B̄ᵢ = X⁻¹ Aᵢ X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalNoise {
    pub cov_rot: Cov3,
    pub cov_trans: Cov3,
    pub mean_rot: Vector3<f64>,
    pub mean_trans: Vector3<f64>,
    /// Set when a mean error is more than 4 standard errors from zero,
    /// which points at a biased reference X.
    pub biased: bool,
}

fn mean_is_significant(errors: &[Vector3<f64>], mean: &Vector3<f64>, second_moment: &Matrix3<f64>) -> bool {
    let n = errors.len() as f64;
    if n < 2.0 {
        return false;
    }
    (0..3).any(|i| {
        let var = (second_moment[(i, i)] - mean[i] * mean[i]).max(0.0);
        let se = (var / n).sqrt();
        mean[i].abs() > 4.0 * se && mean[i].abs() > 1e-12
    })
}

pub fn empirical_b_covariance(pairs: &[MeasurementPair], x_ref: &DecoupledPose) -> Result<EmpiricalNoise> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no pairs".into()));
    }
    let x_inv = x_ref.inverse();
    let mut rot = Vec::with_capacity(pairs.len());
    let mut trans = Vec::with_capacity(pairs.len());
    for p in pairs {
        let b_ref = x_inv.compose(&p.a.pose).compose(x_ref);
        rot.push(log_so3(&(p.b.pose.rotation * b_ref.rotation.transpose())));
        trans.push(p.b.pose.translation - b_ref.translation);
    }
    let n = pairs.len() as f64;
    let mean_rot = rot.iter().sum::<Vector3<f64>>() / n;
    let mean_trans = trans.iter().sum::<Vector3<f64>>() / n;
    let cov_rot = outer_mean(&rot);
    let cov_trans = outer_mean(&trans);
    let biased = mean_is_significant(&rot, &mean_rot, &cov_rot) || mean_is_significant(&trans, &mean_trans, &cov_trans);
    Ok(EmpiricalNoise {
        cov_rot: Cov3::from_symmetrized(cov_rot),
        cov_trans: Cov3::from_symmetrized(cov_trans),
        mean_rot,
        mean_trans,
        biased,
    })
}

/// `R_avg = exp(mean of log R̂ₘ)`, `t_avg = mean of t̂ₘ`.
pub fn average_solution(solutions: &[DecoupledPose]) -> Result<DecoupledPose> {
    if solutions.is_empty() {
        return Err(Error::InvalidInput("no solutions to average".into()));
    }
    for i in 0..solutions.len() {
        for j in (i + 1)..solutions.len() {
            let rel = solutions[i].rotation * solutions[j].rotation.transpose();
            if rel.angle() > PI / 2.0 {
                return Err(Error::LogBranchAmbiguity(i, j));
            }
        }
    }
    let n = solutions.len() as f64;
    let mean_log = solutions.iter().map(|s| log_so3(&s.rotation)).sum::<Vector3<f64>>() / n;
    let mean_t = solutions.iter().map(|s| s.translation).sum::<Vector3<f64>>() / n;
    Ok(DecoupledPose::new(exp_so3(&mean_log), mean_t))
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub lambda: f64,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub cov_rot_mc: [f64; 9],
    pub cov_trans_mc: [f64; 9],
    pub cov_rot_pred: [f64; 9],
    pub cov_trans_pred: [f64; 9],
    /// `None` when the Monte-Carlo covariance is numerically zero.
    pub eps_rot: Option<f64>,
    pub eps_trans: Option<f64>,
    pub degenerate_metric: bool,
    /// Largest relative Frobenius deviation of any dataset's predicted
    /// covariance from the reported one.
    pub prediction_spread_rot: f64,
    pub prediction_spread_trans: f64,
}

fn eps_or_degenerate(pred: &Cov3, mc: &Cov3) -> Option<f64> {
    if mc.matrix().norm() < DEGENERATE_MC_NORM {
        None
    } else {
        eps_metric(pred, mc).ok()
    }
}

fn relative_spread(reference: &Cov3, others: impl Iterator<Item = Cov3>) -> f64 {
    let denom = reference.matrix().norm();
    if denom == 0.0 {
        return 0.0;
    }
    others
        .map(|c| (c.matrix() - reference.matrix()).norm() / denom)
        .fold(0.0, f64::max)
}

/// Solves every dataset of `config` in parallel; results are in index order.
pub fn solve_datasets(config: &SyntheticConfig, x_true: &DecoupledPose) -> Result<Vec<AxxbSolution>> {
    config.validate()?;
    let truth = generate_true_pairs(config, x_true);
    (0..config.m)
        .into_par_iter()
        .map(|i| solve_axxb(&corrupt_pairs(config, &truth, i)))
        .collect()
}

/// Predicted covariances (dataset 0) against the Monte-Carlo covariance of
/// the M estimates.
pub fn run_validation(config: &SyntheticConfig, x_true: &DecoupledPose) -> Result<McReport> {
    if config.m < 2 {
        return Err(Error::InvalidInput(format!("M must be >= 2, got {}", config.m)));
    }
    let solutions = solve_datasets(config, x_true)?;
    let estimates: Vec<_> = solutions.iter().map(AxxbSolution::pose).collect();
    let (cov_rot_mc, cov_trans_mc) = mc_covariance(&estimates, x_true)?;
    let pred_rot = solutions[0].rotation.cov_rot;
    let pred_trans = solutions[0].translation.cov_trans;
    let eps_rot = eps_or_degenerate(&pred_rot, &cov_rot_mc);
    let eps_trans = eps_or_degenerate(&pred_trans, &cov_trans_mc);
    Ok(McReport {
        lambda: config.lambda,
        k: config.k,
        m: config.m,
        seed: config.seed,
        cov_rot_mc: cov_rot_mc.to_row_major(),
        cov_trans_mc: cov_trans_mc.to_row_major(),
        cov_rot_pred: pred_rot.to_row_major(),
        cov_trans_pred: pred_trans.to_row_major(),
        degenerate_metric: eps_rot.is_none() || eps_trans.is_none(),
        eps_rot,
        eps_trans,
        prediction_spread_rot: relative_spread(&pred_rot, solutions.iter().map(|s| s.rotation.cov_rot)),
        prediction_spread_trans: relative_spread(&pred_trans, solutions.iter().map(|s| s.translation.cov_trans)),
    })
}

/// [`run_validation`] at each λ, all other settings shared.
pub fn run_sweep(config: &SyntheticConfig, x_true: &DecoupledPose, lambdas: &[f64]) -> Result<Vec<McReport>> {
    lambdas
        .iter()
        .map(|&lambda| run_validation(&SyntheticConfig { lambda, ..*config }, x_true))
        .collect()
}

/// Empirical covariance of the composition of `poses` when each one is
/// drawn independently from its own noise, `samples` times.
pub fn sample_chain_covariance(poses: &[NoisyPose], samples: usize, seed: u64) -> Result<(Cov3, Cov3)> {
    let (first, rest) = poses
        .split_first()
        .ok_or_else(|| Error::InvalidInput("empty pose chain".into()))?;
    let mean = rest.iter().fold(first.pose, |acc, p| acc.compose(&p.pose));
    let mut rng = rng_from_seed(seed);
    let draws: Vec<DecoupledPose> = (0..samples)
        .map(|_| {
            poses.iter().fold(DecoupledPose::identity(), |acc, p| {
                acc.compose(&sample_noisy_pose_with(&p.pose, &p.cov_rot, &p.cov_trans, &mut rng))
            })
        })
        .collect();
    mc_covariance(&draws, &mean)
}

/// Object-pose chain `Y = bTe · X · cTo`: the robot pose and the object pose
/// in the camera carry their own noise, X comes from calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub calibration: SyntheticConfig,
    pub base_to_effector: NoisyPose,
    /// Object pose in the base frame; the mean camera-to-object pose is
    /// derived from it.
    pub y_true: DecoupledPose,
    pub cov_rot_camera_object: Cov3,
    pub cov_trans_camera_object: Cov3,
}

impl ChainConfig {
    /// Random bTe and Y from `seed`; a repeatable robot (1e-6 on both
    /// blocks) and a noisier camera pose estimate.
    pub fn random(calibration: SyntheticConfig, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed.wrapping_add(100));
        let base_to_effector = NoisyPose::new(
            random_pose(&mut rng),
            Cov3::from_diagonal([1e-6; 3]),
            Cov3::from_diagonal([1e-6; 3]),
        );
        Self {
            calibration,
            base_to_effector,
            y_true: random_pose(&mut rng),
            cov_rot_camera_object: Cov3::from_diagonal([3e-5, 1e-5, 2e-5]),
            cov_trans_camera_object: Cov3::from_diagonal([1e-5, 3e-5, 2e-5]),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub cov_rot_mc: [f64; 9],
    pub cov_trans_mc: [f64; 9],
    pub cov_rot_pred: [f64; 9],
    pub cov_trans_pred: [f64; 9],
    pub eps_rot: Option<f64>,
    pub eps_trans: Option<f64>,
}

/// For each dataset m: calibrate X̂ₘ, draw noisy bTe and cTo around their
/// means and form `Yₘ = bTe · X̂ₘ · cTo`. The prediction propagates the
/// three covariances (X from dataset 0) through the chain.
pub fn run_chain_validation(config: &ChainConfig, x_true: &DecoupledPose) -> Result<ChainReport> {
    let cal = &config.calibration;
    if cal.m < 2 {
        return Err(Error::InvalidInput(format!("M must be >= 2, got {}", cal.m)));
    }
    let bte = config.base_to_effector;
    let cto_mean = bte.pose.compose(x_true).inverse().compose(&config.y_true);
    let cto = NoisyPose::new(cto_mean, config.cov_rot_camera_object, config.cov_trans_camera_object);

    let solutions = solve_datasets(cal, x_true)?;
    let estimates: Vec<DecoupledPose> = solutions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            // separate stream from the dataset generator
            let mut rng = rng_from_seed(cal.dataset_seed(i) ^ 0x5851_f42d_4c95_7f2d);
            let b = sample_noisy_pose_with(&bte.pose, &bte.cov_rot, &bte.cov_trans, &mut rng);
            let c = sample_noisy_pose_with(&cto.pose, &cto.cov_rot, &cto.cov_trans, &mut rng);
            b.compose(&s.pose()).compose(&c)
        })
        .collect();
    let (cov_rot_mc, cov_trans_mc) = mc_covariance(&estimates, &config.y_true)?;
    let predicted = propagate_chain(&[bte, solutions[0].noisy_pose(), cto])?;
    Ok(ChainReport {
        cov_rot_mc: cov_rot_mc.to_row_major(),
        cov_trans_mc: cov_trans_mc.to_row_major(),
        cov_rot_pred: predicted.cov_rot.to_row_major(),
        cov_trans_pred: predicted.cov_trans.to_row_major(),
        eps_rot: eps_or_degenerate(&predicted.cov_rot, &cov_rot_mc),
        eps_trans: eps_or_degenerate(&predicted.cov_trans, &cov_trans_mc),
    })
}
