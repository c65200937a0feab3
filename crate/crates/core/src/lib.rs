//! Hand-eye calibration `AX = XB` with covariance of the estimated X.
//!
//! Rotation and translation are estimated and propagated separately: the
//! rotation from the axis-angle vectors of the A/B rotations, the
//! translation from the rotation estimate. Each solver is an iteratively
//! reweighted Gauss–Newton over the unknown plus per-measurement nuisance
//! variables, reduced with a Schur complement.

pub mod cli;
pub mod compound;
pub mod error;
pub mod io;
pub mod liegroup;
pub mod montecarlo;
pub mod noise;
pub mod pose;
pub mod rotsolve;
pub mod schur;
pub mod transsolve;

pub use compound::{compound_poses, propagate_chain};
pub use error::{Error, Result};
pub use liegroup::{exp_so3, hat, left_jacobian, left_jacobian_inv, log_so3, vee, RotationMatrix};
pub use noise::{Cov3, MeasurementPair, MeasurementSet, NoisyPose};
pub use pose::DecoupledPose;
pub use rotsolve::{solve_rotation, RotSolution};
pub use transsolve::{solve_axxb, solve_translation, AxxbSolution, TransSolution};
