use nalgebra::{Matrix4, Vector3};

use crate::liegroup::RotationMatrix;

/// Rigid transform with rotation and translation kept apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoupledPose {
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl DecoupledPose {
    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(RotationMatrix::identity(), Vector3::zeros())
    }

    /// `self * other`: (R₁R₂, R₁t₂ + t₁).
    pub fn compose(&self, other: &DecoupledPose) -> DecoupledPose {
        DecoupledPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> DecoupledPose {
        let rt = self.rotation.transpose();
        DecoupledPose {
            rotation: rt,
            translation: -rt.rotate(&self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}
