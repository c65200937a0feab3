//! SO(3) primitives.
//!
//! Rotations are stored as plain 3×3 matrices and perturbed on the left:
//! a noisy rotation is `exp([ξ]) R̄`. Tangent vectors are axis-angle
//! 3-vectors whose norm is the rotation angle in radians.
//!
//! The θ-dependent coefficients of `exp`, the left Jacobian and its inverse
//! are evaluated in closed form above [`SMALL_ANGLE`] and with fourth-order
//! Taylor series below it. The logarithm has a dedicated branch close to
//! θ = π where the antisymmetric part of `R` vanishes.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Axis-angle vector (radians, axis scaled by angle).
pub type AxisAngle = Vector3<f64>;

/// Below this angle the series expansions are used.
pub const SMALL_ANGLE: f64 = 1e-4;

/// Orthonormality tolerance of a valid rotation.
pub const ROTATION_TOL: f64 = 1e-9;

/// Inputs within this distance of SO(3) are projected back onto it.
pub const ROTATION_REPAIR_TOL: f64 = 1e-6;

/// Tolerance used by [`vee`] for the skew-symmetry check.
pub const SKEW_TOL: f64 = 1e-9;

const NEAR_PI: f64 = 1e-3;

/// A 3×3 orthonormal matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `m`. Matrices that miss the 1e-9 invariant but lie within
    /// 1e-6 of SO(3) are replaced by their nearest rotation.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let err = orthonormality_error(&m);
        if err <= ROTATION_TOL {
            return Ok(Self(m));
        }
        if err <= ROTATION_REPAIR_TOL {
            return Ok(Self(project_to_so3(&m)));
        }
        Err(Error::InvalidRotation(format!(
            "orthonormality error {err:.3e} exceeds {ROTATION_REPAIR_TOL:.0e}"
        )))
    }

    /// Builds from nine row-major entries.
    pub fn from_row_slice(rows: &[f64]) -> Result<Self> {
        if rows.len() != 9 {
            return Err(Error::DimensionMismatch(format!(
                "rotation needs 9 entries, got {}",
                rows.len()
            )));
        }
        Self::new(Matrix3::from_row_slice(rows))
    }

    /// Wraps a matrix that is already known to be a rotation, e.g. a product
    /// of rotations.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// Nine entries in row-major order.
    pub fn to_row_major(&self) -> [f64; 9] {
        row_major(&self.0)
    }

    pub fn angle(&self) -> f64 {
        log_so3(self).norm()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<&RotationMatrix> for &RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

pub(crate) fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

/// max(‖mᵀm − I‖_F, |det m − 1|)
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    let ortho = (m.transpose() * m - Matrix3::identity()).norm();
    let det = (m.determinant() - 1.0).abs();
    ortho.max(det)
}

/// Nearest rotation in the Frobenius sense (polar factor with det fix).
pub fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Skew-symmetric matrix with `hat(v) * w == v.cross(w)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`].
pub fn vee(s: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let asym = (s + s.transpose()).norm();
    if asym > SKEW_TOL {
        return Err(Error::NonSkew(asym));
    }
    Ok(vee_unchecked(s))
}

/// Reads the axial vector of the antisymmetric part without validation.
pub(crate) fn vee_unchecked(s: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (s[(2, 1)] - s[(1, 2)]),
        0.5 * (s[(0, 2)] - s[(2, 0)]),
        0.5 * (s[(1, 0)] - s[(0, 1)]),
    )
}

// sin θ / θ
fn sinc(theta: f64) -> f64 {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 - t2 / 6.0 + t2 * t2 / 120.0
    } else {
        theta.sin() / theta
    }
}

// (1 − cos θ) / θ²
fn one_minus_cos_over_sq(theta: f64) -> f64 {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        0.5 - t2 / 24.0 + t2 * t2 / 720.0
    } else {
        let s = (0.5 * theta).sin();
        2.0 * s * s / (theta * theta)
    }
}

// (θ − sin θ) / θ³
fn theta_minus_sin_over_cube(theta: f64) -> f64 {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    } else {
        (theta - theta.sin()) / (theta * theta * theta)
    }
}

/// Rodrigues' formula.
pub fn exp_so3(v: &AxisAngle) -> RotationMatrix {
    let theta = v.norm();
    let k = hat(v);
    let m = Matrix3::identity() + k * sinc(theta) + k * k * one_minus_cos_over_sq(theta);
    RotationMatrix(m)
}

/// Principal logarithm, `‖result‖ ≤ π`.
pub fn log_so3(r: &RotationMatrix) -> AxisAngle {
    let m = r.matrix();
    // vee(R − Rᵀ)/2 = sin θ · n
    let axial = vee_unchecked(m);
    let sin_theta = axial.norm();
    let cos_theta = 0.5 * (m.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        // θ / sin θ
        let scale = 1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0;
        return axial * scale;
    }
    if PI - theta > NEAR_PI {
        return axial * (theta / sin_theta);
    }

    // Near θ = π: (R + Rᵀ)/2 = cos θ I + (1 − cos θ) n nᵀ.
    let sym = 0.5 * (m + m.transpose());
    let nnt = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let mut k = 0;
    for i in 1..3 {
        if nnt[(i, i)] > nnt[(k, k)] {
            k = i;
        }
    }
    let nk = nnt[(k, k)].max(0.0).sqrt();
    let mut axis = Vector3::zeros();
    for j in 0..3 {
        axis[j] = if j == k { nk } else { nnt[(k, j)] / nk };
    }
    axis.normalize_mut();
    if axis.dot(&axial) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Left Jacobian of SO(3):
/// `J(v) = I + (1 − cos θ)/θ² [v] + (θ − sin θ)/θ³ [v]²`.
pub fn left_jacobian(v: &AxisAngle) -> Matrix3<f64> {
    let theta = v.norm();
    let k = hat(v);
    Matrix3::identity() + k * one_minus_cos_over_sq(theta) + k * k * theta_minus_sin_over_cube(theta)
}

/// Closed-form inverse of [`left_jacobian`].
pub fn left_jacobian_inv(v: &AxisAngle) -> Result<Matrix3<f64>> {
    let theta = v.norm();
    let two_pi = 2.0 * PI;
    if theta > PI && (theta / two_pi - (theta / two_pi).round()).abs() * two_pi < 1e-6 {
        return Err(Error::NearSingular(theta));
    }
    let k = hat(v);
    let coeff = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        // 1/θ² − sin θ / (2θ(1 − cos θ)), with 1 − cos θ = 2 sin²(θ/2)
        let half = 0.5 * theta;
        1.0 / (theta * theta) - theta.sin() / (4.0 * theta * half.sin() * half.sin())
    };
    Ok(Matrix3::identity() - k * 0.5 + k * k * coeff)
}

/// Checks `R [v] Rᵀ = [R v]` within 1e-10.
pub fn conjugate_identity_check(r: &RotationMatrix, v: &AxisAngle) -> bool {
    let lhs = r.matrix() * hat(v) * r.matrix().transpose();
    let rhs = hat(&(r.matrix() * v));
    (lhs - rhs).norm() <= 1e-10 * (1.0 + v.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hat_basis_and_zero() {
        assert_eq!(hat(&Vector3::zeros()), Matrix3::zeros());
        let h = hat(&Vector3::x());
        assert_eq!(h, Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
        let v = Vector3::new(0.3, -1.2, 2.2);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
    }

    #[test]
    fn vee_rejects_symmetric_part() {
        assert_eq!(vee(&Matrix3::zeros()).unwrap(), Vector3::zeros());
        assert_eq!(
            vee(&hat(&Vector3::new(2.0, 3.0, 4.0))).unwrap(),
            Vector3::new(2.0, 3.0, 4.0)
        );
        // ‖S + Sᵀ‖ = 0.1
        let mut s = hat(&Vector3::new(1.0, 0.0, 0.0));
        s[(0, 0)] = 0.05;
        assert!(matches!(vee(&s), Err(Error::NonSkew(_))));
    }

    #[test]
    fn exp_known_values() {
        assert_eq!(*exp_so3(&Vector3::zeros()).matrix(), Matrix3::identity());
        let r = exp_so3(&Vector3::new(PI / 2.0, 0.0, 0.0));
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_relative_eq!(*r.matrix(), expected, epsilon = 1e-15);
        let v = Vector3::new(0.1, 0.2, 0.3);
        assert_relative_eq!(log_so3(&exp_so3(&v)), v, epsilon = 1e-15);
    }

    #[test]
    fn log_known_values() {
        assert_eq!(log_so3(&RotationMatrix::identity()), Vector3::zeros());
        let half_turn = RotationMatrix::new(Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))).unwrap();
        assert_relative_eq!(log_so3(&half_turn), Vector3::new(PI, 0.0, 0.0), epsilon = 1e-15);
        let v = Vector3::new(0.4, -0.5, 0.6);
        assert_relative_eq!(log_so3(&exp_so3(&v)), v, epsilon = 1e-14);
    }

    #[test]
    fn log_half_turn_tie_breaks_to_lowest_axis() {
        // n = (1, 1, 0)/√2, both leading diagonal entries equal
        let n = Vector3::new(1.0, 1.0, 0.0).normalize();
        let r = RotationMatrix::new(2.0 * n * n.transpose() - Matrix3::identity()).unwrap();
        let v = log_so3(&r);
        assert_relative_eq!(v, n * PI, epsilon = 1e-14);
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        // exp(J(v) δ) exp(v) ≈ exp(v + δ)  ⇒  J columns = vee(d exp(v + h e_i)/dh · exp(v)ᵀ)
        let v = Vector3::new(0.7, 0.0, 0.0);
        let h = 1e-6;
        let r0 = exp_so3(&v);
        let mut fd = Matrix3::zeros();
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            let plus = exp_so3(&(v + e)).into_inner() * r0.matrix().transpose();
            let minus = exp_so3(&(v - e)).into_inner() * r0.matrix().transpose();
            let col = vee_unchecked(&((plus - minus) / (2.0 * h)));
            fd.set_column(i, &col);
        }
        assert_relative_eq!(left_jacobian(&v), fd, epsilon = 1e-5);
        assert_eq!(left_jacobian(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn left_jacobian_inverse_identities() {
        for v in [
            Vector3::new(0.3, 0.8, -0.4),
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::zeros(),
        ] {
            let prod = left_jacobian_inv(&v).unwrap() * left_jacobian(&v);
            assert_relative_eq!(prod, Matrix3::identity(), epsilon = 1e-10);
        }
        let v = Vector3::new(0.2, -0.1, 0.05);
        let generic = left_jacobian(&v).try_inverse().unwrap();
        assert_relative_eq!(left_jacobian_inv(&v).unwrap(), generic, epsilon = 1e-12);
        assert_eq!(left_jacobian_inv(&Vector3::zeros()).unwrap(), Matrix3::identity());
    }

    #[test]
    fn left_jacobian_inv_near_two_pi_is_rejected() {
        let v = Vector3::new(2.0 * PI - 1e-7, 0.0, 0.0);
        assert!(matches!(left_jacobian_inv(&v), Err(Error::NearSingular(_))));
    }

    #[test]
    fn small_angle_series_agree_with_closed_form() {
        for theta in [SMALL_ANGLE * 0.999, SMALL_ANGLE * 1.001] {
            let v = Vector3::new(theta, 0.0, 0.0);
            let j = left_jacobian(&v);
            let ji = left_jacobian_inv(&v).unwrap();
            assert_relative_eq!(ji * j, Matrix3::identity(), epsilon = 1e-15);
        }
    }

    #[test]
    fn rotation_validation_and_repair() {
        let r = exp_so3(&Vector3::new(0.3, 0.2, -0.1)).into_inner();
        let mut nudged = r;
        nudged[(0, 0)] += 1e-7;
        let repaired = RotationMatrix::new(nudged).unwrap();
        assert!(orthonormality_error(repaired.matrix()) < 1e-12);
        let mut broken = r;
        broken[(0, 0)] += 1e-3;
        assert!(matches!(RotationMatrix::new(broken), Err(Error::InvalidRotation(_))));
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RotationMatrix::new(reflection).is_err());
    }

    #[test]
    fn conjugation_examples() {
        let v = Vector3::new(0.4, -2.0, 1.0);
        assert!(conjugate_identity_check(&RotationMatrix::identity(), &v));
        assert!(conjugate_identity_check(
            &exp_so3(&Vector3::new(0.5, 0.0, 0.0)),
            &Vector3::y()
        ));
    }

    fn vec3(bound: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-bound..bound, -bound..bound, -bound..bound).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn exp_log_roundtrip(v in vec3(1.8)) {
            prop_assume!(v.norm() <= PI - 1e-6);
            prop_assert!((log_so3(&exp_so3(&v)) - v).norm() <= 1e-9);
        }

        #[test]
        fn conjugation_holds(w in vec3(3.0), v in vec3(5.0)) {
            prop_assert!(conjugate_identity_check(&exp_so3(&w), &v));
        }

        #[test]
        fn hat_is_linear(a in vec3(5.0), b in vec3(5.0), s in -3.0..3.0f64) {
            let lhs = hat(&(a * s + b));
            let rhs = hat(&a) * s + hat(&b);
            prop_assert!((lhs - rhs).norm() <= 1e-12);
        }

        #[test]
        fn jacobian_matches_exp_sensitivity(v in vec3(1.7)) {
            prop_assume!(v.norm() <= 3.0);
            let h = 1e-6;
            let r0 = exp_so3(&v).into_inner().transpose();
            let j = left_jacobian(&v);
            for i in 0..3 {
                let mut e = Vector3::zeros();
                e[i] = h;
                let d = (exp_so3(&(v + e)).into_inner() - exp_so3(&(v - e)).into_inner()) * r0 / (2.0 * h);
                let col = vee_unchecked(&d);
                prop_assert!((col - j.column(i)).norm() <= 1e-5);
            }
        }
    }
}
