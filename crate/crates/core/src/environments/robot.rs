//! Serial manipulators described by Denavit–Hartenberg parameters.

use nalgebra::{DMatrix, Matrix4, Vector3};

use crate::{Error, Result};

pub const JOINTS: usize = 8;
/// Per-point model input: `[sin q (8), cos q (8), 1]`.
pub const FEATURES: usize = 2 * JOINTS + 1;
/// Stacked model for the three Cartesian outputs.
pub const MODEL_DIM: usize = 3 * FEATURES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhJoint {
    /// Twist about the common normal, radians.
    pub twist: f64,
    /// Link length along the common normal, meters.
    pub length: f64,
    /// Offset along the joint axis, meters.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotArm {
    pub joints: [DhJoint; JOINTS],
}

impl RobotArm {
    /// Descriptor layout: 8 twists, then 8 lengths, then 8 offsets.
    pub fn descriptor(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * JOINTS);
        out.extend(self.joints.iter().map(|j| j.twist));
        out.extend(self.joints.iter().map(|j| j.length));
        out.extend(self.joints.iter().map(|j| j.offset));
        out
    }

    pub fn from_descriptor(values: &[f64]) -> Result<Self> {
        if values.len() != 3 * JOINTS {
            return Err(Error::dims("robot descriptor", 3 * JOINTS, values.len()));
        }
        let joints = std::array::from_fn(|i| DhJoint {
            twist: values[i],
            length: values[JOINTS + i],
            offset: values[2 * JOINTS + i],
        });
        Ok(RobotArm { joints })
    }
}

/// Standard DH link transform `Rz(q) · Tz(d) · Tx(a) · Rx(α)`.
pub fn dh_transform(joint: &DhJoint, angle: f64) -> Matrix4<f64> {
    let (st, ct) = angle.sin_cos();
    let (sa, ca) = joint.twist.sin_cos();
    Matrix4::new(
        ct, -st * ca, st * sa, joint.length * ct,
        st, ct * ca, -ct * sa, joint.length * st,
        0.0, sa, ca, joint.offset,
        0.0, 0.0, 0.0, 1.0,
    )
}

/// End-effector position of the arm at the given joint angles.
pub fn robot_fk(arm: &RobotArm, angles: &[f64]) -> Result<Vector3<f64>> {
    if angles.len() != JOINTS {
        return Err(Error::dims("joint angles", JOINTS, angles.len()));
    }
    let t = arm
        .joints
        .iter()
        .zip(angles)
        .fold(Matrix4::identity(), |acc, (j, q)| acc * dh_transform(j, *q));
    Ok(Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)]))
}

/// Maps raw joint angles (`n × 8`) to model inputs (`n × 17`).
pub fn featurize_angles(angles: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if angles.ncols() != JOINTS {
        return Err(Error::dims("joint angle columns", JOINTS, angles.ncols()));
    }
    Ok(DMatrix::from_fn(angles.nrows(), FEATURES, |i, j| {
        if j < JOINTS {
            angles[(i, j)].sin()
        } else if j < 2 * JOINTS {
            angles[(i, j - JOINTS)].cos()
        } else {
            1.0
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn uniform_arm(twist: f64, length: f64, offset: f64) -> RobotArm {
        RobotArm {
            joints: [DhJoint { twist, length, offset }; JOINTS],
        }
    }

    /// Independent oracle: compose rotation/translation pieces one at a time
    /// as separate homogeneous matrices.
    fn oracle(arm: &RobotArm, q: &[f64]) -> Vector3<f64> {
        let rz = |t: f64| {
            let (s, c) = t.sin_cos();
            Matrix4::new(c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
        };
        let rx = |t: f64| {
            let (s, c) = t.sin_cos();
            Matrix4::new(1.0, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0)
        };
        let tr = |x: f64, z: f64| {
            Matrix4::new(1.0, 0.0, 0.0, x, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, z, 0.0, 0.0, 0.0, 1.0)
        };
        let mut t = Matrix4::identity();
        for (j, &qi) in arm.joints.iter().zip(q) {
            t = t * rz(qi) * tr(0.0, j.offset) * tr(j.length, 0.0) * rx(j.twist);
        }
        Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)])
    }

    #[test]
    fn straight_chain() {
        let arm = uniform_arm(0.0, 1.0, 0.0);
        let p = robot_fk(&arm, &[0.0; JOINTS]).unwrap();
        assert!((p - Vector3::new(8.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn first_joint_half_turn_flips_chain() {
        let arm = uniform_arm(0.0, 1.0, 0.0);
        let mut q = [0.0; JOINTS];
        q[0] = PI;
        let p = robot_fk(&arm, &q).unwrap();
        let o = oracle(&arm, &q);
        assert!((p - o).norm() < 1e-12);
        assert!((p - Vector3::new(-8.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pure_offsets_stack_along_axis() {
        let arm = uniform_arm(0.0, 0.0, 1.0);
        let q = [0.3, -0.2, 1.0, 0.5, -1.1, 0.0, 2.0, 0.7];
        let p = robot_fk(&arm, &q).unwrap();
        assert!((p - oracle(&arm, &q)).norm() < 1e-12);
        assert!((p.norm() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn random_arm_matches_oracle() {
        let arm = RobotArm::from_descriptor(
            &(0..24).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect::<Vec<_>>(),
        )
        .unwrap();
        let q = [0.1, 0.9, -0.4, 1.3, -2.0, 0.6, 0.25, -0.8];
        assert!((robot_fk(&arm, &q).unwrap() - oracle(&arm, &q)).norm() < 1e-12);
        assert_eq!(RobotArm::from_descriptor(&arm.descriptor()).unwrap(), arm);
    }

    #[test]
    fn features_layout() {
        let angles = DMatrix::from_row_slice(1, JOINTS, &[0.0, PI / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let f = featurize_angles(&angles).unwrap();
        assert_eq!(f.ncols(), FEATURES);
        assert!((f[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((f[(0, JOINTS)] - 1.0).abs() < 1e-15);
        assert_eq!(f[(0, FEATURES - 1)], 1.0);
    }
}
