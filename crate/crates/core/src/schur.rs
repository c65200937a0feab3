//! Arrow-shaped normal equations.
//!
//! Both solvers estimate one global 3-parameter block (the rotation
//! increment or the translation) together with one 3-parameter nuisance
//! block per measurement. Every measurement contributes a 6-row residual
//! that depends only on the global block and its own nuisance block, so
//! `Jᵀ Σ_V⁻¹ J` has the form
//!
//! ```text
//! | U   W₁  W₂ ... |
//! | W₁ᵀ Z₁         |
//! | W₂ᵀ     Z₂     |
//! | ...        ... |
//! ```
//!
//! and the nuisance blocks are eliminated with the Schur complement
//! `S = U − Σ Wᵢ Zᵢ⁻¹ Wᵢᵀ`. `S⁻¹` is also the top-left block of
//! `(Jᵀ Σ_V⁻¹ J)⁻¹`, i.e. the first-order covariance of the global block.

use nalgebra::{Matrix3, Matrix6, Matrix6x3, SymmetricEigen, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::noise::{symmetrize, Cov3, MAX_CONDITION};

/// Linearization of one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBlock {
    /// ∂f_i/∂(global parameter)
    pub jac_global: Matrix6x3<f64>,
    /// ∂f_i/∂(nuisance parameter i)
    pub jac_local: Matrix6x3<f64>,
    /// Σ_{V_i}⁻¹
    pub weight: Matrix6<f64>,
    /// V_i − f(P)_i
    pub residual: Vector6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchurSystem {
    pub u: Matrix3<f64>,
    pub w_blocks: Vec<Matrix3<f64>>,
    pub z_blocks: Vec<Matrix3<f64>>,
    pub eps_primary: Vector3<f64>,
    pub eps_blocks: Vec<Vector3<f64>>,
}

/// Solution of one normal-equation step.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurStep {
    pub global: Vector3<f64>,
    pub locals: Vec<Vector3<f64>>,
}

impl SchurStep {
    /// Largest absolute component across all blocks.
    pub fn max_abs(&self) -> f64 {
        self.locals.iter().fold(self.global.amax(), |acc, d| acc.max(d.amax()))
    }

    pub fn scaled(&self, c: f64) -> SchurStep {
        SchurStep {
            global: self.global * c,
            locals: self.locals.iter().map(|d| d * c).collect(),
        }
    }
}

fn sym_condition(m: &Matrix3<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let (min, max) = (eig.min(), eig.max());
    if min <= 0.0 || max <= 0.0 || !min.is_finite() || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Accumulates U, Wᵢ, Zᵢ and the right-hand sides from per-measurement
/// linearizations.
pub fn assemble(blocks: &[MeasurementBlock]) -> Result<SchurSystem> {
    let mut u = Matrix3::zeros();
    let mut eps_primary = Vector3::zeros();
    let mut w_blocks = Vec::with_capacity(blocks.len());
    let mut z_blocks = Vec::with_capacity(blocks.len());
    let mut eps_blocks = Vec::with_capacity(blocks.len());

    for (index, b) in blocks.iter().enumerate() {
        let gt_w = b.jac_global.transpose() * b.weight;
        let lt_w = b.jac_local.transpose() * b.weight;
        u += gt_w * b.jac_global;
        eps_primary += gt_w * b.residual;
        let z = symmetrize(&(lt_w * b.jac_local));
        let cond = sym_condition(&z);
        if cond > MAX_CONDITION {
            return Err(Error::SingularBlock { index, cond });
        }
        w_blocks.push(gt_w * b.jac_local);
        z_blocks.push(z);
        eps_blocks.push(lt_w * b.residual);
    }

    Ok(SchurSystem {
        u: symmetrize(&u),
        w_blocks,
        z_blocks,
        eps_primary,
        eps_blocks,
    })
}

impl SchurSystem {
    fn z_inverses(&self) -> Vec<Matrix3<f64>> {
        self.z_blocks
            .iter()
            .map(|z| {
                z.cholesky()
                    .map(|c| c.inverse())
                    .or_else(|| z.try_inverse())
                    .unwrap_or_else(Matrix3::zeros)
            })
            .collect()
    }

    /// `U − Σ Wᵢ Zᵢ⁻¹ Wᵢᵀ` together with the Zᵢ⁻¹ used to build it.
    fn reduce(&self) -> (Matrix3<f64>, Vec<Matrix3<f64>>) {
        let z_inv = self.z_inverses();
        let mut s = self.u;
        for (w, zi) in self.w_blocks.iter().zip(&z_inv) {
            s -= w * zi * w.transpose();
        }
        (symmetrize(&s), z_inv)
    }

    /// The reduced (Schur complement) matrix.
    pub fn reduced_matrix(&self) -> Matrix3<f64> {
        self.reduce().0
    }

    /// `(U − Σ Wᵢ Zᵢ⁻¹ Wᵢᵀ)⁻¹`, the first-order covariance of the global block.
    pub fn covariance(&self) -> Result<Cov3> {
        let s = self.reduced_matrix();
        let cond = sym_condition(&s);
        if cond > MAX_CONDITION {
            return Err(Error::RankDeficient(cond));
        }
        let inv = s.cholesky().ok_or(Error::RankDeficient(cond))?.inverse();
        Ok(Cov3::from_symmetrized(inv))
    }
}

/// Solves `(U − W Z⁻¹ Wᵀ) ξ = ε − W Z⁻¹ ε_loc`, then `Zᵢ δᵢ = ε_loc,i − Wᵢᵀ ξ`.
pub fn schur_solve(system: &SchurSystem) -> Result<SchurStep> {
    let (s, z_inv) = system.reduce();
    let mut rhs = system.eps_primary;
    for ((w, zi), e) in system.w_blocks.iter().zip(&z_inv).zip(&system.eps_blocks) {
        rhs -= w * zi * e;
    }
    let cond = sym_condition(&s);
    if cond > MAX_CONDITION {
        return Err(Error::RankDeficient(cond));
    }
    let global = s.cholesky().ok_or(Error::RankDeficient(cond))?.solve(&rhs);
    let locals = system
        .w_blocks
        .iter()
        .zip(&z_inv)
        .zip(&system.eps_blocks)
        .map(|((w, zi), e)| zi * (e - w.transpose() * global))
        .collect();
    Ok(SchurStep { global, locals })
}
