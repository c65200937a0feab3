//! Covariance-weighted estimation of the translation of X.
//!
//! With R* fixed, the translation constraint is `qᵢ = (R_Aᵢ − I) t` where
//! `qᵢ = R* t_Bᵢ − t_Aᵢ`. The R_Aᵢ are copied into the parameter vector:
//! `Vᵢ = (R_Aᵢ, qᵢ)`, `f(P)ᵢ = (R̂_Aᵢ, (R̂_Aᵢ − I) t̂)` with
//! `P = (t, R_A₁, …, R_Aₖ)`; rotations are perturbed on the left.

use nalgebra::{Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::liegroup::{exp_so3, hat, left_jacobian_inv, log_so3, RotationMatrix};
use crate::noise::{Cov3, MeasurementPair};
use crate::rotsolve::{
    self, block_weight, weighted_objective, RotMeasurement, RotSolution, SolverOptions, OBJECTIVE_STALL,
};
use crate::schur::{self, schur_solve, MeasurementBlock, SchurStep};

/// Smallest accepted ratio of singular values of the stacked `R_Aᵢ − I`.
pub const TRANSLATION_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransMeasurement {
    pub ra: RotationMatrix,
    pub q: Vector3<f64>,
    pub cov_ra: Cov3,
    pub cov_q: Cov3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransSolution {
    pub translation: Vector3<f64>,
    pub cov_trans: Cov3,
    pub refined_ras: Vec<RotationMatrix>,
    pub iterations: usize,
    pub final_update_norm: f64,
    pub objective: f64,
}

/// Both halves of a hand-eye solution.
#[derive(Debug, Clone, PartialEq)]
pub struct AxxbSolution {
    pub rotation: RotSolution,
    pub translation: TransSolution,
}

impl AxxbSolution {
    pub fn pose(&self) -> crate::pose::DecoupledPose {
        crate::pose::DecoupledPose::new(self.rotation.rotation, self.translation.translation)
    }

    pub fn noisy_pose(&self) -> crate::noise::NoisyPose {
        crate::noise::NoisyPose::new(self.pose(), self.rotation.cov_rot, self.translation.cov_trans)
    }
}

/// `q = R* t_B − t_A` with
/// `Σ_q = Σ_tA + R* Σ_tB R*ᵀ + [R* t_B] Σ_R [R* t_B]ᵀ`.
pub fn build_q(r_star: &RotationMatrix, cov_r_star: &Cov3, pair: &MeasurementPair) -> TransMeasurement {
    let rtb = r_star.rotate(&pair.b.pose.translation);
    let q = rtb - pair.a.pose.translation;
    let cov_q = pair.a.cov_trans + pair.b.cov_trans.transformed(r_star.matrix()) + cov_r_star.transformed(&hat(&rtb));
    TransMeasurement {
        ra: pair.a.pose.rotation,
        q,
        cov_ra: pair.a.cov_rot,
        cov_q,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransJacobian {
    /// `[0; R̂_Aᵢ − I]`
    pub wrt_translation: Matrix6x3<f64>,
    /// `[I; −[R̂_Aᵢ t̂]]`
    pub wrt_rotation: Matrix6x3<f64>,
}

pub fn build_translation_jacobian(t_hat: &Vector3<f64>, ra_hats: &[RotationMatrix]) -> Vec<TransJacobian> {
    ra_hats
        .iter()
        .map(|ra| {
            let mut wrt_translation = Matrix6x3::zeros();
            wrt_translation
                .fixed_view_mut::<3, 3>(3, 0)
                .copy_from(&(ra.matrix() - Matrix3::identity()));
            let mut wrt_rotation = Matrix6x3::zeros();
            wrt_rotation
                .fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&Matrix3::identity());
            wrt_rotation
                .fixed_view_mut::<3, 3>(3, 0)
                .copy_from(&(-hat(&ra.rotate(t_hat))));
            TransJacobian {
                wrt_translation,
                wrt_rotation,
            }
        })
        .collect()
}

/// `(log(R_Aᵢ R̂_Aᵢᵀ)^∨, qᵢ − (R̂_Aᵢ − I) t̂)`.
pub fn translation_residuals(
    measurements: &[TransMeasurement],
    t_hat: &Vector3<f64>,
    ra_hats: &[RotationMatrix],
) -> Vec<Vector6<f64>> {
    measurements
        .iter()
        .zip(ra_hats)
        .map(|(m, ra)| {
            let top = log_so3(&(m.ra * ra.transpose()));
            let bottom = m.q - (ra.rotate(t_hat) - t_hat);
            Vector6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z)
        })
        .collect()
}

/// Unweighted least squares of `(R_Aᵢ − I) t = qᵢ`.
pub fn linear_translation(measurements: &[TransMeasurement]) -> Result<Vector3<f64>> {
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for m in measurements {
        let a = m.ra.matrix() - Matrix3::identity();
        normal += a.transpose() * a;
        rhs += a.transpose() * m.q;
    }
    // singular values of the stack are square roots of these eigenvalues
    let eig = normal.symmetric_eigenvalues();
    let (min, max) = (eig.min().max(0.0).sqrt(), eig.max().max(0.0).sqrt());
    if max == 0.0 || min / max < TRANSLATION_RANK_TOL {
        let cond = if min == 0.0 { f64::INFINITY } else { max / min };
        return Err(Error::RankDeficient(cond));
    }
    normal
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::RankDeficient(f64::INFINITY))
}

fn blocks(jacobians: &[TransJacobian], weights: &[Matrix6<f64>], residuals: &[Vector6<f64>]) -> Vec<MeasurementBlock> {
    jacobians
        .iter()
        .zip(weights)
        .zip(residuals)
        .map(|((j, w), r)| MeasurementBlock {
            jac_global: j.wrt_translation,
            jac_local: j.wrt_rotation,
            weight: *w,
            residual: *r,
        })
        .collect()
}

/// The step uses the exact derivative of the rotation residual
/// `log(R_Aᵢ R̂_Aᵢᵀ exp(−ξ))`, i.e. `J_l⁻¹(−rᵢ)` in place of I. It equals I at
/// zero residual, so the fixed point is the minimum of the weighted objective
/// and the covariance is still built from [`build_translation_jacobian`].
fn step_jacobian(
    t_hat: &Vector3<f64>,
    ras: &[RotationMatrix],
    residuals: &[Vector6<f64>],
) -> Result<Vec<TransJacobian>> {
    let mut jac = build_translation_jacobian(t_hat, ras);
    for (j, r) in jac.iter_mut().zip(residuals) {
        let top = Vector3::new(-r[0], -r[1], -r[2]);
        j.wrt_rotation
            .fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&left_jacobian_inv(&top)?);
    }
    Ok(jac)
}

fn apply_step(t_hat: &Vector3<f64>, ras: &[RotationMatrix], step: &SchurStep) -> (Vector3<f64>, Vec<RotationMatrix>) {
    let t_next = t_hat + step.global;
    let ras_next = ras.iter().zip(&step.locals).map(|(r, xi)| exp_so3(xi) * *r).collect();
    (t_next, ras_next)
}

pub fn solve_translation(measurements: &[TransMeasurement], init: Option<Vector3<f64>>) -> Result<TransSolution> {
    solve_translation_with(measurements, init, &SolverOptions::default())
}

pub fn solve_translation_with(
    measurements: &[TransMeasurement],
    init: Option<Vector3<f64>>,
    options: &SolverOptions,
) -> Result<TransSolution> {
    if measurements.len() < 2 {
        return Err(Error::DegenerateMotion(format!(
            "{} measurement(s); at least 2 are required",
            measurements.len()
        )));
    }
    let linear = linear_translation(measurements)?;
    let mut t_hat = init.unwrap_or(linear);
    let mut ras: Vec<RotationMatrix> = measurements.iter().map(|m| m.ra).collect();
    let weights: Vec<Matrix6<f64>> = measurements.iter().map(|m| block_weight(&m.cov_ra, &m.cov_q)).collect();

    let mut residuals = translation_residuals(measurements, &t_hat, &ras);
    let mut objective = weighted_objective(&weights, &residuals);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_update = f64::INFINITY;

    while iterations < options.max_iterations {
        iterations += 1;
        let jac = step_jacobian(&t_hat, &ras, &residuals)?;
        let system = schur::assemble(&blocks(&jac, &weights, &residuals))?;
        let step = schur_solve(&system)?;
        last_update = step.max_abs();

        if last_update < options.tolerance {
            (t_hat, ras) = apply_step(&t_hat, &ras, &step);
            residuals = translation_residuals(measurements, &t_hat, &ras);
            objective = weighted_objective(&weights, &residuals);
            converged = true;
            break;
        }

        let mut scale = 1.0;
        let mut accepted = false;
        let mut stalled = false;
        for _ in 0..=options.max_halvings {
            let (t_try, r_try) = apply_step(&t_hat, &ras, &step.scaled(scale));
            let res_try = translation_residuals(measurements, &t_try, &r_try);
            let obj_try = weighted_objective(&weights, &res_try);
            if obj_try <= objective {
                stalled = objective - obj_try <= OBJECTIVE_STALL * objective;
                (t_hat, ras, residuals, objective) = (t_try, r_try, res_try, obj_try);
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

    let jac = build_translation_jacobian(&t_hat, &ras);
    let system = schur::assemble(&blocks(&jac, &weights, &residuals))?;
    let cov_trans = system.covariance()?;

    Ok(TransSolution {
        translation: t_hat,
        cov_trans,
        refined_ras: ras,
        iterations,
        final_update_norm: last_update,
        objective,
    })
}

/// Rotation first, then translation with Σ_R fed into Σ_q.
pub fn solve_axxb(pairs: &[MeasurementPair]) -> Result<AxxbSolution> {
    if pairs.len() < 2 {
        return Err(Error::DegenerateMotion(format!(
            "{} pair(s); AX = XB needs at least 2",
            pairs.len()
        )));
    }
    let rot_measurements = pairs
        .iter()
        .map(|p| RotMeasurement::from_rotations(&p.a.pose.rotation, &p.b.pose.rotation, &p.a.cov_rot, &p.b.cov_rot))
        .collect::<Result<Vec<_>>>()?;
    let rotation = rotsolve::solve_rotation(&rot_measurements, None)?;
    let trans_measurements: Vec<_> = pairs
        .iter()
        .map(|p| build_q(&rotation.rotation, &rotation.cov_rot, p))
        .collect();
    let translation = solve_translation(&trans_measurements, None)?;
    Ok(AxxbSolution { rotation, translation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoisyPose;
    use crate::pose::DecoupledPose;
    use approx::assert_relative_eq;

    fn pair(ra: RotationMatrix, ta: Vector3<f64>, tb: Vector3<f64>, cov: f64) -> MeasurementPair {
        let c = Cov3::from_diagonal([cov, 2.0 * cov, 3.0 * cov]);
        MeasurementPair {
            a: NoisyPose::new(DecoupledPose::new(ra, ta), c, c),
            b: NoisyPose::new(DecoupledPose::new(RotationMatrix::identity(), tb), c, c),
        }
    }

    #[test]
    fn q_is_exact_without_noise() {
        let r = exp_so3(&Vector3::new(0.1, 0.2, 0.3));
        let p = pair(r, Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.0, 0.5, 0.0), 0.0);
        let m = build_q(&r, &Cov3::zeros(), &p);
        assert_eq!(m.cov_q, Cov3::zeros());
        assert_eq!(
            m.q,
            r.rotate(&Vector3::new(-1.0, 0.5, 0.0)) - Vector3::new(1.0, 2.0, 3.0)
        );
    }

    #[test]
    fn q_covariance_without_lever_arm() {
        let p = pair(
            RotationMatrix::identity(),
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::zeros(),
            1e-4,
        );
        let m = build_q(&RotationMatrix::identity(), &Cov3::from_diagonal([1.0, 1.0, 1.0]), &p);
        assert_relative_eq!(
            *m.cov_q.matrix(),
            p.a.cov_trans.matrix() + p.b.cov_trans.matrix(),
            epsilon = 1e-18
        );
    }

    #[test]
    fn jacobian_special_cases() {
        let j = build_translation_jacobian(&Vector3::new(1.0, 2.0, 3.0), &[RotationMatrix::identity()]);
        assert_eq!(j[0].wrt_translation, Matrix6x3::zeros());
        let j = build_translation_jacobian(&Vector3::zeros(), &[exp_so3(&Vector3::new(0.3, 0.1, 0.0))]);
        assert_eq!(
            j[0].wrt_rotation.fixed_view::<3, 3>(3, 0).into_owned(),
            Matrix3::zeros()
        );
    }

    #[test]
    fn pure_translations_are_rank_deficient() {
        let ms: Vec<_> = (0..4)
            .map(|i| TransMeasurement {
                ra: RotationMatrix::identity(),
                q: Vector3::new(i as f64, 0.0, 1.0),
                cov_ra: Cov3::zeros(),
                cov_q: Cov3::identity(),
            })
            .collect();
        assert!(matches!(solve_translation(&ms, None), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn single_pair_is_underdetermined() {
        let p = pair(
            exp_so3(&Vector3::new(0.5, 0.0, 0.0)),
            Vector3::zeros(),
            Vector3::zeros(),
            1e-5,
        );
        assert!(matches!(solve_axxb(&[p]), Err(Error::DegenerateMotion(_))));
    }
}
