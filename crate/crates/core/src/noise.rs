//! Decoupled pose noise and first-order covariance propagation.
//!
//! Rotation noise is a left perturbation `R = exp([ξ_R]) R̄`, translation
//! noise is additive `t = ξ_t + t̄`, and the two are independent.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::liegroup::{exp_so3, left_jacobian_inv, AxisAngle};
use crate::pose::DecoupledPose;

/// Diagonal jitter applied to rank-deficient covariances before inversion.
pub const COV_JITTER: f64 = 1e-15;

/// Symmetry / PSD tolerance of [`Cov3`].
pub const COV_TOL: f64 = 1e-12;

/// Largest accepted condition number of a normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// The random generator behind every sampler: ChaCha20 seeded from a u64.
pub type NoiseRng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> NoiseRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Symmetric positive-semidefinite 3×3 covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov3(Matrix3<f64>);

impl Cov3 {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::NonPsd("non-finite entry".into()));
        }
        let scale = m.norm().max(1.0);
        let asym = (m - m.transpose()).norm();
        if asym > COV_TOL * scale {
            return Err(Error::NonPsd(format!("asymmetry {asym:.3e}")));
        }
        let sym = symmetrize(&m);
        let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
        if min_eig < -COV_TOL * scale {
            return Err(Error::NonPsd(format!("eigenvalue {min_eig:.3e}")));
        }
        Ok(Self(sym))
    }

    pub fn from_row_slice(rows: &[f64]) -> Result<Self> {
        if rows.len() != 9 {
            return Err(Error::DimensionMismatch(format!(
                "covariance needs 9 entries, got {}",
                rows.len()
            )));
        }
        Self::new(Matrix3::from_row_slice(rows))
    }

    pub fn zeros() -> Self {
        Self(Matrix3::zeros())
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_diagonal(d: [f64; 3]) -> Self {
        Self(Matrix3::from_diagonal(&Vector3::from(d)))
    }

    /// Symmetrizes `m` and wraps it without the PSD check. Used for
    /// quantities that are PSD by construction.
    pub fn from_symmetrized(m: Matrix3<f64>) -> Self {
        Self(symmetrize(&m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0 * c)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        crate::liegroup::row_major(&self.0)
    }

    /// `M Σ Mᵀ`, symmetrized.
    pub fn transformed(&self, m: &Matrix3<f64>) -> Self {
        Self::from_symmetrized(m * self.0 * m.transpose())
    }
}

impl std::ops::Add for Cov3 {
    type Output = Cov3;

    fn add(self, rhs: Cov3) -> Cov3 {
        Cov3::from_symmetrized(self.0 + rhs.0)
    }
}

/// A pose together with its decoupled rotation and translation covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyPose {
    pub pose: DecoupledPose,
    pub cov_rot: Cov3,
    pub cov_trans: Cov3,
}

impl NoisyPose {
    pub fn new(pose: DecoupledPose, cov_rot: Cov3, cov_trans: Cov3) -> Self {
        Self {
            pose,
            cov_rot,
            cov_trans,
        }
    }

    pub fn exact(pose: DecoupledPose) -> Self {
        Self::new(pose, Cov3::zeros(), Cov3::zeros())
    }
}

/// One (A, B) observation of the calibration dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementPair {
    pub a: NoisyPose,
    pub b: NoisyPose,
}

/// Ordered list of (A, B) pairs.
pub type MeasurementSet = Vec<MeasurementPair>;

pub fn symmetrize<const N: usize>(m: &nalgebra::SMatrix<f64, N, N>) -> nalgebra::SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

fn symmetrize_dyn(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Square-root factor `L` with `L Lᵀ = Σ`. Cholesky when Σ is positive
/// definite, otherwise the clipped eigen-decomposition so that exactly-zero
/// noise axes stay noise-free.
pub fn sqrt_factor(cov: &Cov3) -> Matrix3<f64> {
    if let Some(chol) = cov.matrix().cholesky() {
        return chol.l();
    }
    let eig = SymmetricEigen::new(*cov.matrix());
    let d = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    eig.eigenvectors * Matrix3::from_diagonal(&d)
}

/// Draws ξ ~ N(0, Σ).
pub fn sample_gaussian<R: Rng + ?Sized>(cov: &Cov3, rng: &mut R) -> Vector3<f64> {
    if cov.is_zero() {
        return Vector3::zeros();
    }
    let z = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    sqrt_factor(cov) * z
}

/// `(exp([ξ_R]) R̄, ξ_t + t̄)` with ξ drawn from the given covariances.
pub fn sample_noisy_pose_with<R: Rng + ?Sized>(
    mean: &DecoupledPose,
    cov_rot: &Cov3,
    cov_trans: &Cov3,
    rng: &mut R,
) -> DecoupledPose {
    let xi_r = sample_gaussian(cov_rot, rng);
    let xi_t = sample_gaussian(cov_trans, rng);
    let rotation = if xi_r == Vector3::zeros() {
        mean.rotation
    } else {
        exp_so3(&xi_r) * mean.rotation
    };
    DecoupledPose::new(rotation, mean.translation + xi_t)
}

/// Seeded form of [`sample_noisy_pose_with`]; the same seed always gives the
/// same pose.
pub fn sample_noisy_pose(
    mean: &DecoupledPose,
    cov_rot: &Cov3,
    cov_trans: &Cov3,
    rng_seed: u64,
) -> Result<DecoupledPose> {
    // re-validate: the newtype may have been built through from_symmetrized
    Cov3::new(*cov_rot.matrix())?;
    Cov3::new(*cov_trans.matrix())?;
    let mut rng = rng_from_seed(rng_seed);
    Ok(sample_noisy_pose_with(mean, cov_rot, cov_trans, &mut rng))
}

/// Forward propagation `J Σ Jᵀ`.
pub fn forward_propagate(cov: &DMatrix<f64>, jac: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov.is_square() || jac.ncols() != cov.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "covariance {}x{}, jacobian {}x{}",
            cov.nrows(),
            cov.ncols(),
            jac.nrows(),
            jac.ncols()
        )));
    }
    Ok(symmetrize_dyn(&(jac * cov * jac.transpose())))
}

fn condition_number(sym: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(sym.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 || max <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Backward propagation `(Jᵀ Σ_V⁻¹ J)⁻¹`.
pub fn backward_propagate(jac: &DMatrix<f64>, cov_v_inv: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov_v_inv.is_square() || jac.nrows() != cov_v_inv.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "jacobian {}x{}, inverse covariance {}x{}",
            jac.nrows(),
            jac.ncols(),
            cov_v_inv.nrows(),
            cov_v_inv.ncols()
        )));
    }
    let normal = symmetrize_dyn(&(jac.transpose() * cov_v_inv * jac));
    let cond = condition_number(&normal);
    if cond > MAX_CONDITION {
        return Err(Error::RankDeficient(cond));
    }
    let inv = normal.cholesky().ok_or(Error::RankDeficient(cond))?.inverse();
    Ok(symmetrize_dyn(&inv))
}

/// Covariance of the axis-angle vector of a rotation with left-perturbation
/// covariance `cov_r`: `J⁻¹ Σ J⁻ᵀ` evaluated at `rotvec`.
pub fn rotvec_covariance(rotvec: &AxisAngle, cov_r: &Cov3) -> Result<Cov3> {
    let jinv = left_jacobian_inv(rotvec)?;
    Ok(cov_r.transformed(&jinv))
}

/// Inverse of a covariance used as a least-squares weight. Rank-deficient
/// inputs get [`COV_JITTER`] on the diagonal first.
pub fn information_matrix(cov: &Matrix3<f64>) -> Matrix3<f64> {
    let sym = symmetrize(cov);
    let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
    let reg = if min_eig <= COV_JITTER {
        sym + Matrix3::identity() * COV_JITTER
    } else {
        sym
    };
    let inv = match reg.cholesky() {
        Some(c) => c.inverse(),
        None => reg.try_inverse().unwrap_or_else(|| Matrix3::identity() / COV_JITTER),
    };
    symmetrize(&inv)
}
