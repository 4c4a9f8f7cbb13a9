//! SO(3)/SE(3) primitives used by the rod model.
//!
//! Twists and wrenches are 6-vectors with the angular (or moment) part first:
//! `η = [w; v]`, `ξ = [u; q]`, `Φ = [m; n]`.

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;
pub type Mat6 = Matrix6<f64>;
pub type Twist6 = Vector6<f64>;

/// Below this angle the exponential maps switch to truncated Taylor series.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Tolerance for the structural zero/skew pattern accepted by [`vee3`]/[`vee6`].
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Tolerance on `RᵀR = I` and `det R = 1` for [`Rotation::new`].
pub const ROTATION_TOL: f64 = 1e-9;

/// Angular/linear accessors on 6-vectors.
pub trait TwistExt {
    fn angular(&self) -> Vec3;
    fn linear(&self) -> Vec3;
}

impl TwistExt for Twist6 {
    #[inline]
    fn angular(&self) -> Vec3 {
        Vec3::new(self[0], self[1], self[2])
    }
    #[inline]
    fn linear(&self) -> Vec3 {
        Vec3::new(self[3], self[4], self[5])
    }
}

/// Builds a twist (or wrench) from its angular and linear parts.
#[inline]
pub fn twist(angular: Vec3, linear: Vec3) -> Twist6 {
    Twist6::new(angular.x, angular.y, angular.z, linear.x, linear.y, linear.z)
}

/// Skew-symmetric matrix with `hat3(v) * x == v × x`.
#[inline]
pub fn hat3(v: &Vec3) -> Mat3 {
    #[rustfmt::skip]
    let m = Mat3::new(
        0.0, -v.z, v.y,
        v.z, 0.0, -v.x,
        -v.y, v.x, 0.0,
    );
    m
}

pub fn hat6(t: &Twist6) -> Mat4 {
    let mut m = Mat4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat3(&t.angular()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t.linear());
    m
}

pub fn vee3(m: &Mat3) -> Result<Vec3> {
    let skew_defect = (m + m.transpose()).amax();
    if skew_defect > STRUCTURE_TOL {
        return Err(Error::Structure(format!(
            "matrix is not skew-symmetric (|M + Mᵀ|max = {skew_defect:.3e})"
        )));
    }
    Ok(Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

pub fn vee6(m: &Mat4) -> Result<Twist6> {
    let bottom = m.fixed_view::<1, 4>(3, 0).amax();
    if bottom > STRUCTURE_TOL {
        return Err(Error::Structure(format!(
            "bottom row of se(3) element must vanish (max |entry| = {bottom:.3e})"
        )));
    }
    let w = vee3(&m.fixed_view::<3, 3>(0, 0).into_owned())?;
    let v = m.fixed_view::<3, 1>(0, 3).into_owned();
    Ok(twist(w, v))
}

/// The adjoint (Lie bracket) matrix `ad_t = [[ŵ, 0], [v̂, ŵ]]`.
pub fn adjoint(t: &Twist6) -> Mat6 {
    let w_hat = hat3(&t.angular());
    let v_hat = hat3(&t.linear());
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w_hat);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&v_hat);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w_hat);
    m
}

/// `ad_a · b` without forming the 6×6 matrix.
#[inline]
pub fn ad_mul(a: &Twist6, b: &Twist6) -> Twist6 {
    let (aw, av) = (a.angular(), a.linear());
    let (bw, bv) = (b.angular(), b.linear());
    twist(aw.cross(&bw), av.cross(&bw) + aw.cross(&bv))
}

/// `ad_aᵀ · b` without forming the 6×6 matrix.
#[inline]
pub fn ad_transpose_mul(a: &Twist6, b: &Twist6) -> Twist6 {
    let (aw, av) = (a.angular(), a.linear());
    let (bm, bn) = (b.angular(), b.linear());
    // ŵᵀ = -ŵ
    twist(-aw.cross(&bm) - av.cross(&bn), -aw.cross(&bn))
}

/// A rotation matrix, kept as a 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Checked constructor: `RᵀR = I` and `det R = 1` within [`ROTATION_TOL`].
    pub fn new(m: Mat3) -> Result<Self> {
        let orth = (m.transpose() * m - Mat3::identity()).amax();
        let det = m.determinant();
        if !orth.is_finite() || orth > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::Structure(format!(
                "not a rotation: |RᵀR - I|max = {orth:.3e}, det = {det:.12}"
            )));
        }
        Ok(Rotation(m))
    }

    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    #[inline]
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Largest entry of `RᵀR - I`.
    pub fn orthogonality_defect(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).amax()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let skew = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        (0.5 * skew.norm()).atan2(0.5 * (m.trace() - 1.0))
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// A rigid pose `g = [[R, p], [0, 1]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub position: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            position: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation, position: Vec3) -> Self {
        Pose { rotation, position }
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            position: self.position + self.rotation * other.position,
        }
    }

    pub fn to_matrix(&self) -> Mat4 {
        let mut m = Mat4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }
}

/// Block-diagonal `diag(R, R)`, mapping a local moment/force pair into the
/// global frame. Its inverse is its transpose.
pub fn t_transform(r: &Rotation) -> Mat6 {
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(r.matrix());
    m
}

/// `T_Rᵀ · w` without forming the 6×6 matrix.
#[inline]
pub fn t_transform_transpose_mul(r: &Rotation, w: &Twist6) -> Twist6 {
    let rt = r.matrix().transpose();
    twist(rt * w.angular(), rt * w.linear())
}

/// Coefficients `(sin θ/θ, (1 - cos θ)/θ², (θ - sin θ)/θ³)` with a series
/// fallback near zero.
fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

/// Rodrigues' formula.
pub fn exp_so3(u: &Vec3) -> Rotation {
    let (a, b, _) = exp_coefficients(u.norm());
    let k = hat3(u);
    Rotation(Mat3::identity() + a * k + b * k * k)
}

/// Closed-form SE(3) exponential of `h · t`.
pub fn exp_se3(t: &Twist6, h: f64) -> Pose {
    let w = t.angular() * h;
    let v = t.linear() * h;
    let (a, b, c) = exp_coefficients(w.norm());
    let k = hat3(&w);
    let k2 = k * k;
    let rotation = Rotation(Mat3::identity() + a * k + b * k2);
    let jac = Mat3::identity() + b * k + c * k2;
    Pose {
        rotation,
        position: jac * v,
    }
}

/// Nearest rotation to `m` in the Frobenius sense (polar factor via SVD).
pub fn orthonormalize(m: &Mat3) -> Result<Rotation> {
    let det = m.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot orthonormalize a matrix with det = {det:.3e}"
        )));
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Degenerate("SVD failed to converge".into())),
    };
    Ok(Rotation(u * v_t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_is_accurate_for_tiny_and_half_turns() {
        for theta in [1e-12, 1e-8, 0.3, 3.0, std::f64::consts::PI] {
            let r = exp_so3(&(Vec3::new(1.0, 2.0, -2.0).normalize() * theta));
            assert!((r.angle() - theta).abs() <= 1e-15 * theta.max(1.0) * 4.0, "{theta}");
        }
    }
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn hat3_known_matrix() {
        let m = hat3(&Vec3::new(1.0, 2.0, 3.0));
        let expected = Mat3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(m, expected);
        assert_eq!(hat3(&Vec3::zeros()), Mat3::zeros());
    }

    #[test]
    fn hat6_pure_translation() {
        let m = hat6(&twist(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)));
        let mut expected = Mat4::zeros();
        expected[(0, 3)] = 1.0;
        assert_eq!(m, expected);
        assert_eq!(hat6(&Twist6::zeros()), Mat4::zeros());
    }

    #[test]
    fn vee_rejects_non_skew() {
        assert_eq!(vee3(&hat3(&Vec3::new(1.0, 2.0, 3.0))).unwrap(), Vec3::new(1.0, 2.0, 3.0));
        assert!(vee3(&Mat3::identity()).is_err());
        let mut m = hat6(&Twist6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0));
        m[(3, 3)] = 1.0;
        assert!(vee6(&m).is_err());
    }

    #[test]
    fn adjoint_of_pure_rotation() {
        let e1 = Vec3::new(1.0, 0.0, 0.0);
        let ad = adjoint(&twist(e1, Vec3::zeros()));
        let mut expected = Mat6::zeros();
        expected.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat3(&e1));
        expected.fixed_view_mut::<3, 3>(3, 3).copy_from(&hat3(&e1));
        assert_eq!(ad, expected);
        assert_eq!(adjoint(&Twist6::zeros()), Mat6::zeros());
    }

    #[test]
    fn fast_adjoint_products_match_matrices() {
        let a = Twist6::new(0.3, -1.2, 0.7, 2.0, 0.1, -0.4);
        let b = Twist6::new(-0.5, 0.2, 1.1, 0.3, -2.2, 0.9);
        assert_relative_eq!(ad_mul(&a, &b), adjoint(&a) * b, epsilon = 1e-14);
        assert_relative_eq!(
            ad_transpose_mul(&a, &b),
            adjoint(&a).transpose() * b,
            epsilon = 1e-14
        );
    }

    #[test]
    fn t_transform_maps_local_to_global() {
        assert_eq!(t_transform(&Rotation::identity()), Mat6::identity());
        let r = exp_so3(&Vec3::new(0.2, -0.4, 0.9));
        let l = Vec3::new(1.0, 2.0, 3.0);
        let f = Vec3::new(-1.0, 0.5, 0.25);
        let g = t_transform(&r) * twist(l, f);
        assert_relative_eq!(g, twist(r * l, r * f), epsilon = 1e-14);
        assert_relative_eq!(
            t_transform_transpose_mul(&r, &g),
            twist(l, f),
            epsilon = 1e-14
        );
    }

    #[test]
    fn exp_so3_quarter_turn_about_z() {
        let r = exp_so3(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(*r.matrix(), expected, epsilon = 1e-12);
        assert_eq!(*exp_so3(&Vec3::zeros()).matrix(), Mat3::identity());
    }

    #[test]
    fn exp_so3_small_angle_branch_is_continuous() {
        let theta = SMALL_ANGLE * 0.999;
        let (a, b, c) = exp_coefficients(theta);
        let (s, co) = theta.sin_cos();
        assert_relative_eq!(a, s / theta, max_relative = 1e-14);
        assert_relative_eq!(b, (1.0 - co) / (theta * theta), max_relative = 1e-4);
        assert!((c - 1.0 / 6.0).abs() < 1e-12);
        let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
        let below = exp_so3(&(axis * theta));
        assert!(below.orthogonality_defect() < 1e-15);
    }

    #[test]
    fn exp_se3_special_cases() {
        let p = exp_se3(&twist(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)), 0.5);
        assert_eq!(*p.rotation.matrix(), Mat3::identity());
        assert_relative_eq!(p.position, Vec3::new(0.5, 0.0, 0.0), epsilon = 1e-15);
        let t = Twist6::new(0.3, 0.1, -0.2, 1.0, 0.5, 0.0);
        assert_eq!(exp_se3(&t, 0.0), Pose::identity());
    }

    #[test]
    fn exp_se3_matches_matrix_exponential_series() {
        // Oracle: truncated power series of the 4×4 matrix exponential.
        let t = Twist6::new(0.7, -0.3, 1.1, 0.4, 1.0, -0.6);
        let h = 0.8;
        let x = hat6(&t) * h;
        let mut term = Mat4::identity();
        let mut sum = Mat4::identity();
        for k in 1..40 {
            term = term * x / k as f64;
            sum += term;
        }
        assert_relative_eq!(exp_se3(&t, h).to_matrix(), sum, epsilon = 1e-13);
    }

    #[test]
    fn exp_se3_constant_twist_step_halving() {
        // For a constant twist the product of N sub-steps is exact.
        let t = Twist6::new(0.0, 0.0, 2.0, 1.0, 0.0, 0.0);
        let compose = |n: usize| {
            let step = exp_se3(&t, 1.0 / n as f64);
            (0..n).fold(Pose::identity(), |g, _| g.compose(&step))
        };
        let coarse = compose(8);
        let fine = compose(16);
        let exact = exp_se3(&t, 1.0);
        assert_relative_eq!(coarse.position, exact.position, epsilon = 1e-13);
        assert_relative_eq!(fine.position, exact.position, epsilon = 1e-13);
        assert_relative_eq!(*fine.rotation.matrix(), *exact.rotation.matrix(), epsilon = 1e-13);
    }

    #[test]
    fn orthonormalize_cases() {
        let r = exp_so3(&Vec3::new(0.4, 0.1, -1.3));
        let back = orthonormalize(r.matrix()).unwrap();
        assert_relative_eq!(*back.matrix(), *r.matrix(), epsilon = 1e-14);

        let mut perturbed = Mat3::identity();
        perturbed[(0, 1)] += 1e-6;
        perturbed[(2, 0)] -= 3e-7;
        perturbed[(1, 1)] += 5e-7;
        let fixed = orthonormalize(&perturbed).unwrap();
        assert!(fixed.orthogonality_defect() < 1e-12);
        assert!(Rotation::new(*fixed.matrix()).is_ok());

        let singular = Mat3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0);
        assert!(matches!(orthonormalize(&singular), Err(Error::Degenerate(_))));
    }

    #[test]
    fn checked_rotation_constructor() {
        assert!(Rotation::new(Mat3::identity()).is_ok());
        assert!(Rotation::new(Mat3::identity() * 2.0).is_err());
        assert!(Rotation::new(-Mat3::identity()).is_err());
    }
}
