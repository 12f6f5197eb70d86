//! Minimal f64 vector/quaternion math shared by every module.
//!
//! Rotations are unit quaternions kept in canonical form (`w >= 0`) so that
//! the log map is single-valued. The exp/log pair uses the half-angle
//! convention: `exp(v) = (cos|v|, sin|v| * v/|v|)`, i.e. `v` is axis times
//! half the rotation angle.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Threshold below which exp/log switch to their series expansions.
const SMALL_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Unit vector in the same direction. Zero-length input yields NaNs;
    /// callers guard against that.
    pub fn normalized(self) -> Self {
        self / self.norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Self;
    fn div(self, s: f64) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion `(w, x, y, z)` representing a 3D rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a normalized, canonicalized quaternion from raw components.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }.normalized().canonicalized()
    }

    /// Rotation of `angle` radians about a (not necessarily unit) axis.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        quat_exp(axis * (0.5 * angle / n))
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    /// Resolves the double cover: flips sign so that `w >= 0`.
    pub fn canonicalized(self) -> Self {
        if self.w < 0.0 {
            Self {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            self
        }
    }

    pub fn conjugate(self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product; `(a * b).rotate(v) == a.rotate(b.rotate(v))`.
    pub fn mul(self, o: Self) -> Self {
        Self {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Applies the rotation to a vector.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotates by the inverse rotation.
    pub fn rotate_inv(self, v: Vec3) -> Vec3 {
        self.conjugate().rotate(v)
    }

    pub fn dot(self, o: Self) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// Exponential map: `exp(v) = (cos|v|, sin|v| * v/|v|)`, `exp(0) = identity`.
pub fn quat_exp(v: Vec3) -> Quat {
    let t = v.norm();
    let (w, s) = if t < SMALL_ANGLE {
        // 2nd-order series of cos t and sin t / t.
        (1.0 - t * t / 2.0, 1.0 - t * t / 6.0)
    } else {
        (t.cos(), t.sin() / t)
    };
    Quat {
        w,
        x: s * v.x,
        y: s * v.y,
        z: s * v.z,
    }
    .normalized()
    .canonicalized()
}

/// Log map, inverse of [`quat_exp`] on the canonical hemisphere.
pub fn quat_log(q: Quat) -> Vec3 {
    let q = q.canonicalized();
    let vn = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
    let scale = if vn < SMALL_ANGLE {
        // atan2(vn, w)/vn expanded around vn = 0 (w ~ 1 after canonicalization).
        1.0 / q.w - vn * vn / (3.0 * q.w * q.w * q.w)
    } else {
        vn.atan2(q.w) / vn
    };
    Vec3::new(q.x * scale, q.y * scale, q.z * scale)
}

/// Geodesic angle between two rotations, in radians.
pub fn rotation_angle(a: Quat, b: Quat) -> f64 {
    2.0 * a.dot(b).abs().min(1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_unit_vec3(rng: &mut impl Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n < 1.0 {
                return v / n;
            }
        }
    }

    pub(crate) fn random_quat(rng: &mut impl Rng) -> Quat {
        let axis = random_unit_vec3(rng);
        let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        Quat::from_axis_angle(axis, angle)
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(quat_log(Quat::IDENTITY), Vec3::ZERO);
    }

    #[test]
    fn exp_quarter_pi_about_x_is_90_deg_rotation() {
        let q = quat_exp(Vec3::new(std::f64::consts::FRAC_PI_4, 0.0, 0.0));
        assert_relative_eq!(q.w, std::f64::consts::FRAC_PI_4.cos(), epsilon = 1e-15);
        assert_relative_eq!(q.x, std::f64::consts::FRAC_PI_4.sin(), epsilon = 1e-15);
        assert_eq!((q.y, q.z), (0.0, 0.0));
        // 90 deg about x: +y -> +z.
        let r = q.rotate(Vec3::new(0.0, 1.0, 0.0));
        assert_relative_eq!(r.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let v = random_unit_vec3(&mut rng) * rng.random_range(0.0..std::f64::consts::FRAC_PI_2 * 0.999);
            let back = quat_log(quat_exp(v));
            assert!((back - v).norm() < 1e-9, "v={v:?} back={back:?}");
        }
    }

    #[test]
    fn exp_output_is_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let v = random_unit_vec3(&mut rng) * rng.random_range(0.0..10.0);
            assert!((quat_exp(v).norm() - 1.0).abs() < 1e-12);
        }
        // Near-zero norms go through the series branch.
        for &t in &[0.0, 1e-12, 1e-9, 1e-7] {
            assert!((quat_exp(Vec3::new(t, 0.0, 0.0)).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotate_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let q = random_quat(&mut rng);
            let v = random_unit_vec3(&mut rng) * rng.random_range(0.0..5.0);
            let nq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                q.w, q.x, q.y, q.z,
            ));
            let nv = nq * nalgebra::Vector3::new(v.x, v.y, v.z);
            let r = q.rotate(v);
            assert!((r.x - nv.x).abs() < 1e-12);
            assert!((r.y - nv.y).abs() < 1e-12);
            assert!((r.z - nv.z).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_angle_of_30_deg_is_30_deg() {
        let q = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), 30f64.to_radians());
        assert_relative_eq!(
            rotation_angle(Quat::IDENTITY, q).to_degrees(),
            30.0,
            epsilon = 1e-10
        );
    }
}
