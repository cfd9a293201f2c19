//! Rigid transforms in SE(3) and the intrinsic Z-Y-X (yaw, pitch, roll)
//! Euler convention used for feedback poses.

use serde::{Deserialize, Serialize};

use super::{GeometryError, Point3};

/// Pitch within this distance (radians) of ±π/2 is treated as gimbal lock.
pub const GIMBAL_LOCK_TOLERANCE: f64 = 1e-6;

const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

/// A 3x3 rotation matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation(pub [[f64; 3]; 3]);

impl Rotation {
    pub const IDENTITY: Rotation = Rotation([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Checks `RᵀR = I` and `det R = 1` within 1e-6.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let r = Rotation(m);
        if m.iter().flatten().any(|x| !x.is_finite()) {
            return Err(GeometryError::InvalidRotation("non-finite entry".into()));
        }
        let rtr = r.transpose().mul(&r);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (rtr.0[i][j] - expected).abs() > ORTHONORMAL_TOLERANCE {
                    return Err(GeometryError::InvalidRotation(format!(
                        "RᵀR[{i}][{j}] = {}",
                        rtr.0[i][j]
                    )));
                }
            }
        }
        let det = r.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOLERANCE {
            return Err(GeometryError::InvalidRotation(format!("det = {det}")));
        }
        Ok(r)
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    /// Rodrigues formula; `axis` need not be normalized.
    pub fn about_axis(axis: Point3, angle: f64) -> Self {
        let k = axis.normalized();
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Rotation([
            [
                c + k.x * k.x * t,
                k.x * k.y * t - k.z * s,
                k.x * k.z * t + k.y * s,
            ],
            [
                k.y * k.x * t + k.z * s,
                c + k.y * k.y * t,
                k.y * k.z * t - k.x * s,
            ],
            [
                k.z * k.x * t - k.y * s,
                k.z * k.y * t + k.x * s,
                c + k.z * k.z * t,
            ],
        ])
    }

    pub fn mul(&self, rhs: &Rotation) -> Rotation {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Rotation(out)
    }

    pub fn transpose(&self) -> Rotation {
        let m = self.0;
        Rotation([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let m = self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        let m = &self.0;
        Point3::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
            m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
            m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z,
        )
    }

    /// Geodesic angle between two rotations, radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let d = self.transpose().mul(other);
        let trace = d.0[0][0] + d.0[1][1] + d.0[2][2];
        ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

/// Rotation followed by translation: `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Point3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: Rotation::IDENTITY,
        translation: Point3::ORIGIN,
    };

    pub fn new(rotation: Rotation, translation: Point3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Point3) -> Self {
        Self::new(Rotation::IDENTITY, t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Point3::ORIGIN)
    }

    /// Validates both parts, for transforms that arrive from outside.
    pub fn checked(rotation: [[f64; 3]; 3], translation: Point3) -> Result<Self, GeometryError> {
        if !translation.is_finite() {
            return Err(GeometryError::InvalidRotation(
                "non-finite translation".into(),
            ));
        }
        Ok(Self::new(Rotation::new(rotation)?, translation))
    }

    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -rt.apply(self.translation))
    }

    /// `self · rhs`: applies `rhs` first.
    pub fn then_after(&self, rhs: &RigidTransform) -> RigidTransform {
        compose(self, rhs)
    }

    /// Homogeneous 4x4 form `[R t; 0 1]`.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation.0;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }
}

/// Group product `a · b`; the result maps `p ↦ a(b(p))`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform::new(
        a.rotation.mul(&b.rotation),
        a.rotation.apply(b.translation) + a.translation,
    )
}

/// The camera → render origin → world → display chain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameChain {
    pub k_c_o: RigidTransform,
    pub k_o_w: RigidTransform,
    pub k_w_h: RigidTransform,
}

impl FrameChain {
    /// `K_W^H · K_O^W · K_C^O` as one transform.
    pub fn collapsed(&self) -> RigidTransform {
        compose(&self.k_w_h, &compose(&self.k_o_w, &self.k_c_o))
    }
}

/// Expresses a camera-frame point in the display frame.
pub fn apply_chain(chain: &FrameChain, p: Point3) -> Point3 {
    chain.collapsed().apply(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub const fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition {
    pub angles: EulerAngles,
    /// Pitch hit ±π/2; roll was pinned to zero and yaw absorbs the rest.
    pub gimbal_locked: bool,
}

/// `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn euler_to_rotation(angles: EulerAngles) -> Rotation {
    Rotation::about_z(angles.yaw)
        .mul(&Rotation::about_y(angles.pitch))
        .mul(&Rotation::about_x(angles.roll))
}

pub fn rotation_to_euler(r: &Rotation) -> EulerDecomposition {
    let m = &r.0;
    let cos_pitch = m[0][0].hypot(m[1][0]);
    let pitch = (-m[2][0]).atan2(cos_pitch);
    if cos_pitch < GIMBAL_LOCK_TOLERANCE.sin() {
        log::warn!("degenerate pose: pitch {pitch:.9} at gimbal lock, roll pinned to 0");
        let yaw = (-m[0][1]).atan2(m[1][1]);
        return EulerDecomposition {
            angles: EulerAngles::new(yaw, pitch.signum() * std::f64::consts::FRAC_PI_2, 0.0),
            gimbal_locked: true,
        };
    }
    EulerDecomposition {
        angles: EulerAngles::new(m[1][0].atan2(m[0][0]), pitch, m[2][1].atan2(m[2][2])),
        gimbal_locked: false,
    }
}
