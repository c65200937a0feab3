//! Compounding of uncertain poses with decoupled rotation and translation.
//!
//! For `T₁₂ = T₁ T₂` the means compose as usual. The rotation covariance
//! keeps the fourth-order terms of the SO(3) compounding formula, the
//! translation covariance is the first-order forward propagation.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::liegroup::hat;
use crate::noise::{symmetrize, Cov3, NoisyPose};

/// Negative eigenvalues down to this value are clipped to zero.
pub const PSD_REPAIR_TOL: f64 = 1e-12;

/// `⟨⟨M⟩⟩ = −tr(M) I + M`
pub fn bracket1(m: &Matrix3<f64>) -> Matrix3<f64> {
    m - Matrix3::identity() * m.trace()
}

/// `⟨⟨M, N⟩⟩ = ⟨⟨M⟩⟩⟨⟨N⟩⟩ + ⟨⟨N M⟩⟩`
pub fn bracket2(m: &Matrix3<f64>, n: &Matrix3<f64>) -> Matrix3<f64> {
    bracket1(m) * bracket1(n) + bracket1(&(n * m))
}

/// Whether the compounded covariances needed eigenvalue clipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PsdRepair {
    pub rotation: bool,
    pub translation: bool,
}

fn repair_psd(m: Matrix3<f64>) -> Result<(Cov3, bool)> {
    let sym = symmetrize(&m);
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok((Cov3::from_symmetrized(sym), false));
    }
    if min < -PSD_REPAIR_TOL {
        return Err(Error::NonPsd(format!("compounded covariance has eigenvalue {min:.3e}")));
    }
    let clipped = eig.eigenvalues.map(|x| x.max(0.0));
    let fixed = eig.eigenvectors * Matrix3::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok((Cov3::from_symmetrized(fixed), true))
}

/// Rotation covariance of `R₁ R₂` before PSD repair.
pub fn compound_rotation_covariance(
    r1: &crate::liegroup::RotationMatrix,
    cov_r1: &Cov3,
    cov_r2: &Cov3,
) -> Matrix3<f64> {
    let s1 = cov_r1.matrix();
    let s2 = cov_r2.transformed(r1.matrix());
    let s2 = s2.matrix();
    let a1 = bracket1(s1);
    let a2 = bracket1(s2);
    let b = bracket2(s1, s2);
    s1 + s2 + (a1 * s2 + s2 * a1.transpose() + s1 * a2 + s1 * a2.transpose()) / 12.0 + b / 4.0
}

pub fn compound_poses_flagged(p1: &NoisyPose, p2: &NoisyPose) -> Result<(NoisyPose, PsdRepair)> {
    let r1 = p1.pose.rotation;
    let pose = p1.pose.compose(&p2.pose);

    let cov_rot_raw = compound_rotation_covariance(&r1, &p1.cov_rot, &p2.cov_rot);
    let lever = hat(&r1.rotate(&p2.pose.translation));
    let cov_trans_raw = p1.cov_trans.matrix()
        + p2.cov_trans.transformed(r1.matrix()).matrix()
        + p1.cov_rot.transformed(&lever).matrix();

    let (cov_rot, rot_fixed) = repair_psd(cov_rot_raw)?;
    let (cov_trans, trans_fixed) = repair_psd(cov_trans_raw)?;
    Ok((
        NoisyPose::new(pose, cov_rot, cov_trans),
        PsdRepair {
            rotation: rot_fixed,
            translation: trans_fixed,
        },
    ))
}

/// Mean and covariance of `T₁ T₂`.
pub fn compound_poses(p1: &NoisyPose, p2: &NoisyPose) -> Result<NoisyPose> {
    compound_poses_flagged(p1, p2).map(|(p, _)| p)
}

/// Left fold of [`compound_poses`] over `poses`.
pub fn propagate_chain(poses: &[NoisyPose]) -> Result<NoisyPose> {
    let (first, rest) = poses
        .split_first()
        .ok_or_else(|| Error::InvalidInput("empty pose chain".into()))?;
    rest.iter().try_fold(*first, |acc, p| compound_poses(&acc, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{exp_so3, RotationMatrix};
    use crate::pose::DecoupledPose;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn pose(seed: f64) -> DecoupledPose {
        DecoupledPose::new(
            exp_so3(&Vector3::new(0.3 * seed, -0.2, 0.9 - seed)),
            Vector3::new(seed, -0.5 * seed, 0.25),
        )
    }

    #[test]
    fn bracket1_examples() {
        assert_eq!(bracket1(&Matrix3::identity()), Matrix3::identity() * -2.0);
        assert_eq!(bracket1(&Matrix3::zeros()), Matrix3::zeros());
        let d = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(bracket1(&d), Matrix3::from_diagonal(&Vector3::new(-5.0, -4.0, -3.0)));
    }

    #[test]
    fn bracket2_examples() {
        let n = Matrix3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0);
        assert_eq!(bracket2(&Matrix3::zeros(), &n), Matrix3::zeros());
        assert_eq!(
            bracket2(&Matrix3::identity(), &Matrix3::identity()),
            Matrix3::identity() * 2.0
        );
    }

    #[test]
    fn bracket2_matches_expanded_formula() {
        let m = Matrix3::new(0.3, -1.2, 0.4, 2.0, 0.1, -0.7, 0.5, 0.9, -0.3);
        let n = Matrix3::new(-0.6, 0.2, 1.1, 0.4, -0.8, 0.3, 1.5, -0.2, 0.7);
        // (−tr(M)I + M)(−tr(N)I + N) + (−tr(NM)I + NM), expanded by hand
        let i = Matrix3::identity();
        let (tm, tn, tnm) = (m.trace(), n.trace(), (n * m).trace());
        let expected = i * (tm * tn) - n * tm - m * tn + m * n - i * tnm + n * m;
        assert_relative_eq!(bracket2(&m, &n), expected, epsilon = 1e-14);
    }

    #[test]
    fn zero_covariance_composition_is_exact() {
        let p1 = NoisyPose::exact(pose(0.4));
        let p2 = NoisyPose::exact(pose(-0.7));
        let out = compound_poses(&p1, &p2).unwrap();
        assert_eq!(out.cov_rot, Cov3::zeros());
        assert_eq!(out.cov_trans, Cov3::zeros());
        assert_relative_eq!(
            out.pose.to_homogeneous(),
            p1.pose.to_homogeneous() * p2.pose.to_homogeneous(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn identity_first_pose_keeps_second_covariances() {
        let c2r = Cov3::from_diagonal([1e-4, 2e-4, 3e-4]);
        let c1t = Cov3::from_diagonal([1e-3, 1e-3, 2e-3]);
        let c2t = Cov3::from_diagonal([5e-4, 1e-4, 1e-4]);
        let p1 = NoisyPose::new(
            DecoupledPose::new(RotationMatrix::identity(), Vector3::new(1.0, 2.0, 3.0)),
            Cov3::zeros(),
            c1t,
        );
        let p2 = NoisyPose::new(
            DecoupledPose::new(exp_so3(&Vector3::new(0.2, 0.3, 0.1)), Vector3::zeros()),
            c2r,
            c2t,
        );
        let out = compound_poses(&p1, &p2).unwrap();
        assert_relative_eq!(*out.cov_trans.matrix(), c1t.matrix() + c2t.matrix(), epsilon = 1e-18);
        // with Σ₁ = 0 only the ⟨⟨0, Σ₂'⟩⟩/4 term could remain, and it vanishes
        let s2 = c2r.matrix();
        let expected = s2 + bracket2(&Matrix3::zeros(), s2) / 4.0;
        assert_relative_eq!(*out.cov_rot.matrix(), expected, epsilon = 1e-18);
    }

    #[test]
    fn chain_of_one_is_identity_and_empty_is_error() {
        let p = NoisyPose::new(
            pose(0.2),
            Cov3::from_diagonal([1e-4; 3]),
            Cov3::from_diagonal([2e-4; 3]),
        );
        assert_eq!(propagate_chain(&[p]).unwrap(), p);
        assert!(propagate_chain(&[]).is_err());
    }

    #[test]
    fn zero_covariance_chain_is_product_of_means() {
        let ps: Vec<_> = [0.1, 0.5, -0.3].iter().map(|&s| NoisyPose::exact(pose(s))).collect();
        let out = propagate_chain(&ps).unwrap();
        let expected = ps[0].pose.to_homogeneous() * ps[1].pose.to_homogeneous() * ps[2].pose.to_homogeneous();
        assert_relative_eq!(out.pose.to_homogeneous(), expected, epsilon = 1e-12);
        assert!(out.cov_rot.is_zero() && out.cov_trans.is_zero());
    }

    #[test]
    fn repair_rejects_clearly_negative() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, -1e-6, 1.0));
        assert!(repair_psd(m).is_err());
        let (c, fixed) = repair_psd(Matrix3::from_diagonal(&Vector3::new(1.0, -1e-14, 1.0))).unwrap();
        assert!(fixed);
        assert!(c.matrix().symmetric_eigenvalues().min() >= 0.0);
    }
}
