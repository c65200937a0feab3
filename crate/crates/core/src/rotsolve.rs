//! Covariance-weighted estimation of the rotation of X.
//!
//! With `αᵢ = log R_Aᵢ` and `βᵢ = log R_Bᵢ` the rotation constraint reads
//! `αᵢ = R βᵢ`. The βᵢ are copied into the parameter vector so that every
//! measurement `Vᵢ = (βᵢ, αᵢ)` is explained by
//! `f(P)ᵢ = (β̂ᵢ, exp([ξ_R]) R̂ β̂ᵢ)` with `P = (ξ_R, β̂₁, …, β̂ₖ)`.
//! Gauss-Newton on this model gives R* and, from the Schur complement at
//! the last iterate, Σ_R.

use nalgebra::{Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::liegroup::{exp_so3, hat, log_so3, AxisAngle, RotationMatrix};
use crate::noise::{information_matrix, rotvec_covariance, Cov3};
use crate::schur::{self, MeasurementBlock, SchurStep, SchurSystem};

pub use crate::schur::schur_solve;

/// Minimum relative spread of the rotation axes before the motion set is
/// considered degenerate.
pub const AXIS_SPREAD_TOL: f64 = 1e-6;

/// An accepted step that lowers the objective by less than this fraction
/// counts as stalled at the floating-point floor.
pub const OBJECTIVE_STALL: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Convergence threshold on ‖δ‖∞.
    pub tolerance: f64,
    pub max_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-12,
            max_halvings: 10,
        }
    }
}

/// One rotation measurement in log coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotMeasurement {
    pub alpha: AxisAngle,
    pub beta: AxisAngle,
    pub cov_alpha: Cov3,
    pub cov_beta: Cov3,
}

impl RotMeasurement {
    /// Takes logs of R_A, R_B and carries their left-perturbation
    /// covariances into log coordinates with the inverse left Jacobian.
    pub fn from_rotations(ra: &RotationMatrix, rb: &RotationMatrix, cov_ra: &Cov3, cov_rb: &Cov3) -> Result<Self> {
        let alpha = log_so3(ra);
        let beta = log_so3(rb);
        Ok(Self {
            alpha,
            beta,
            cov_alpha: rotvec_covariance(&alpha, cov_ra)?,
            cov_beta: rotvec_covariance(&beta, cov_rb)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotSolution {
    pub rotation: RotationMatrix,
    pub cov_rot: Cov3,
    pub refined_betas: Vec<AxisAngle>,
    pub iterations: usize,
    pub final_update_norm: f64,
    /// Weighted objective at the solution.
    pub objective: f64,
}

/// Jacobian blocks of one measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotJacobian {
    /// `[0; −[R̂ β̂ᵢ]]`
    pub wrt_rotation: Matrix6x3<f64>,
    /// `[I; R̂]`
    pub wrt_beta: Matrix6x3<f64>,
}

pub fn build_rotation_jacobian(r_hat: &RotationMatrix, betas: &[AxisAngle]) -> Vec<RotJacobian> {
    betas
        .iter()
        .map(|beta| {
            let mut wrt_rotation = Matrix6x3::zeros();
            wrt_rotation
                .fixed_view_mut::<3, 3>(3, 0)
                .copy_from(&(-hat(&r_hat.rotate(beta))));
            let mut wrt_beta = Matrix6x3::zeros();
            wrt_beta.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
            wrt_beta.fixed_view_mut::<3, 3>(3, 0).copy_from(r_hat.matrix());
            RotJacobian { wrt_rotation, wrt_beta }
        })
        .collect()
}

/// `Vᵢ − f(P)ᵢ = (βᵢ − β̂ᵢ, αᵢ − R̂ β̂ᵢ)`.
pub fn rotation_residuals(
    measurements: &[RotMeasurement],
    r_hat: &RotationMatrix,
    betas: &[AxisAngle],
) -> Vec<Vector6<f64>> {
    measurements
        .iter()
        .zip(betas)
        .map(|(m, b)| {
            let top = m.beta - b;
            let bottom = m.alpha - r_hat.rotate(b);
            Vector6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z)
        })
        .collect()
}

/// `Σ_{Vᵢ}⁻¹ = diag(Σ_βᵢ⁻¹, Σ_αᵢ⁻¹)`.
pub(crate) fn block_weight(first: &Cov3, second: &Cov3) -> Matrix6<f64> {
    let mut w = Matrix6::zeros();
    w.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&information_matrix(first.matrix()));
    w.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&information_matrix(second.matrix()));
    w
}

/// Builds U, Wᵢ, Zᵢ, ε from Jacobian blocks, `(Σ_βᵢ, Σ_αᵢ)` pairs and
/// residuals.
pub fn assemble_schur(
    jacobians: &[RotJacobian],
    covariances: &[(Cov3, Cov3)],
    residuals: &[Vector6<f64>],
) -> Result<SchurSystem> {
    if jacobians.len() != covariances.len() || jacobians.len() != residuals.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} jacobians, {} covariance pairs, {} residuals",
            jacobians.len(),
            covariances.len(),
            residuals.len()
        )));
    }
    let weights: Vec<_> = covariances.iter().map(|(b, a)| block_weight(b, a)).collect();
    schur::assemble(&blocks(jacobians, &weights, residuals))
}

fn blocks(jacobians: &[RotJacobian], weights: &[Matrix6<f64>], residuals: &[Vector6<f64>]) -> Vec<MeasurementBlock> {
    jacobians
        .iter()
        .zip(weights)
        .zip(residuals)
        .map(|((j, w), r)| MeasurementBlock {
            jac_global: j.wrt_rotation,
            jac_local: j.wrt_beta,
            weight: *w,
            residual: *r,
        })
        .collect()
}

pub(crate) fn weighted_objective(weights: &[Matrix6<f64>], residuals: &[Vector6<f64>]) -> f64 {
    weights
        .iter()
        .zip(residuals)
        .map(|(w, r)| (r.transpose() * w * r)[0])
        .sum()
}

/// Checks that the unit axes of `vectors` are not all parallel.
pub(crate) fn check_axis_spread(vectors: impl Iterator<Item = Vector3<f64>>) -> Result<()> {
    let axes: Vec<Vector3<f64>> = vectors.filter(|v| v.norm() > 1e-9).map(|v| v.normalize()).collect();
    if axes.len() < 2 {
        return Err(Error::DegenerateMotion(format!(
            "{} informative rotation(s); at least 2 with distinct axes are required",
            axes.len()
        )));
    }
    let mut scatter = Matrix3::zeros();
    for a in &axes {
        scatter += a * a.transpose();
    }
    let mut eig: Vec<f64> = scatter
        .symmetric_eigenvalues()
        .iter()
        .map(|x| x.max(0.0).sqrt())
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let spread = eig[1] / eig[0];
    if spread < AXIS_SPREAD_TOL {
        return Err(Error::DegenerateMotion(format!(
            "rotation axes are parallel (spread {spread:.3e})"
        )));
    }
    Ok(())
}

/// Orthogonal Procrustes: `argmin_R Σ ‖αᵢ − R βᵢ‖²`.
pub fn closed_form_rotation(measurements: &[RotMeasurement]) -> Result<RotationMatrix> {
    if measurements.len() < 2 {
        return Err(Error::DegenerateMotion(format!(
            "{} measurement(s); at least 2 are required",
            measurements.len()
        )));
    }
    check_axis_spread(measurements.iter().map(|m| m.alpha))?;
    check_axis_spread(measurements.iter().map(|m| m.beta))?;

    let mut h = Matrix3::zeros();
    for m in measurements {
        h += m.beta * m.alpha.transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v_t").transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Ok(RotationMatrix::from_matrix_unchecked(v * d * u.transpose()))
}

fn apply_step(r_hat: &RotationMatrix, betas: &[AxisAngle], step: &SchurStep) -> (RotationMatrix, Vec<AxisAngle>) {
    let r_next = exp_so3(&step.global) * *r_hat;
    let betas_next = betas.iter().zip(&step.locals).map(|(b, d)| b + d).collect();
    (r_next, betas_next)
}

fn degenerate_on_rank(e: Error) -> Error {
    match e {
        Error::RankDeficient(cond) => {
            Error::DegenerateMotion(format!("rotation is unobservable (condition number {cond:.3e})"))
        }
        other => other,
    }
}

pub fn solve_rotation(measurements: &[RotMeasurement], init: Option<RotationMatrix>) -> Result<RotSolution> {
    solve_rotation_with(measurements, init, &SolverOptions::default())
}

pub fn solve_rotation_with(
    measurements: &[RotMeasurement],
    init: Option<RotationMatrix>,
    options: &SolverOptions,
) -> Result<RotSolution> {
    let mut r_hat = match init {
        Some(r) => {
            if measurements.len() < 2 {
                return Err(Error::DegenerateMotion("at least 2 measurements are required".into()));
            }
            r
        }
        None => closed_form_rotation(measurements)?,
    };
    let mut betas: Vec<AxisAngle> = measurements.iter().map(|m| m.beta).collect();
    let weights: Vec<Matrix6<f64>> = measurements
        .iter()
        .map(|m| block_weight(&m.cov_beta, &m.cov_alpha))
        .collect();

    let mut residuals = rotation_residuals(measurements, &r_hat, &betas);
    let mut objective = weighted_objective(&weights, &residuals);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_update = f64::INFINITY;

    while iterations < options.max_iterations {
        iterations += 1;
        let jac = build_rotation_jacobian(&r_hat, &betas);
        let system = schur::assemble(&blocks(&jac, &weights, &residuals))?;
        let step = schur_solve(&system).map_err(degenerate_on_rank)?;
        last_update = step.max_abs();

        if last_update < options.tolerance {
            (r_hat, betas) = apply_step(&r_hat, &betas, &step);
            residuals = rotation_residuals(measurements, &r_hat, &betas);
            objective = weighted_objective(&weights, &residuals);
            converged = true;
            break;
        }

        let mut scale = 1.0;
        let mut accepted = false;
        let mut stalled = false;
        for _ in 0..=options.max_halvings {
            let (r_try, b_try) = apply_step(&r_hat, &betas, &step.scaled(scale));
            let res_try = rotation_residuals(measurements, &r_try, &b_try);
            let obj_try = weighted_objective(&weights, &res_try);
            if obj_try <= objective {
                stalled = objective - obj_try <= OBJECTIVE_STALL * objective;
                (r_hat, betas, residuals, objective) = (r_try, b_try, res_try, obj_try);
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if stalled && last_update < options.tolerance.sqrt() {
            converged = true;
            break;
        }
        if !accepted {
            // No descent along the Gauss-Newton direction: the objective is
            // at its floating-point floor.
            converged = last_update < options.tolerance.sqrt();
            break;
        }
    }

    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            last_update,
        });
    }

    let jac = build_rotation_jacobian(&r_hat, &betas);
    let system = schur::assemble(&blocks(&jac, &weights, &residuals))?;
    let cov_rot = system.covariance().map_err(degenerate_on_rank)?;

    Ok(RotSolution {
        rotation: RotationMatrix::from_matrix_unchecked(crate::liegroup::project_to_so3(r_hat.matrix())),
        cov_rot,
        refined_betas: betas,
        iterations,
        final_update_norm: last_update,
        objective,
    })
}
