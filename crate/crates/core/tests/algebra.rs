use cosserat_observer::se3::*;
use nalgebra::Matrix6;
use proptest::prelude::*;

const TOL: f64 = 1e-12;

fn vec3() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-10.0f64..10.0).prop_map(Vec3::from)
}

fn twist6() -> impl Strategy<Value = Twist6> {
    prop::array::uniform6(-10.0f64..10.0).prop_map(|a| Twist6::from_row_slice(&a))
}

fn close<const R: usize, const C: usize>(a: &nalgebra::SMatrix<f64, R, C>, b: &nalgebra::SMatrix<f64, R, C>, scale: f64) -> bool {
    (a - b).amax() <= TOL * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn hat_vee_roundtrips(v in vec3(), t in twist6()) {
        prop_assert_eq!(vee3(&hat3(&v)).unwrap(), v);
        prop_assert_eq!(vee6(&hat6(&t)).unwrap(), t);
        prop_assert_eq!(hat3(&v).transpose(), -hat3(&v));
    }

    #[test]
    fn ad_is_antisymmetric(a in twist6(), b in twist6()) {
        let scale = a.amax() * b.amax();
        prop_assert!(close(&ad_mul(&a, &b), &-ad_mul(&b, &a), scale));
        prop_assert!(close(&(adjoint(&a) * b), &ad_mul(&a, &b), scale));
        prop_assert!(close(&(adjoint(&a).transpose() * b), &ad_transpose_mul(&a, &b), scale));
        prop_assert!(ad_mul(&a, &a).amax() <= TOL * scale.max(1.0));
    }

    #[test]
    fn ad_is_the_matrix_bracket(a in twist6(), b in twist6()) {
        let (ha, hb) = (hat6(&a), hat6(&b));
        let bracket = ha * hb - hb * ha;
        prop_assert!(close(&hat6(&ad_mul(&a, &b)), &bracket, a.amax() * b.amax()));
    }

    #[test]
    fn t_transform_is_orthogonal(u in vec3(), w in twist6()) {
        let r = exp_so3(&u);
        let t = t_transform(&r);
        prop_assert!(close(&(t.transpose() * t), &Matrix6::identity(), 1.0));
        prop_assert!(close(&(t.transpose() * w), &t_transform_transpose_mul(&r, &w), w.amax()));
        prop_assert!((t.determinant() - 1.0).abs() <= TOL);
    }

    #[test]
    fn exp_so3_matches_axis_angle(axis in vec3(), theta in -3.0f64..3.0, x in vec3()) {
        prop_assume!(axis.norm() > 1e-3);
        let e = axis.normalize();
        let r = exp_so3(&(e * theta));
        let m = r.matrix();
        prop_assert!(close(&(m.transpose() * m), &Mat3::identity(), 1.0));
        prop_assert!((m.determinant() - 1.0).abs() <= TOL);
        prop_assert!(close(&(m * e), &e, 1.0));
        let perp = x - e * e.dot(&x);
        let expected = perp * theta.cos() + e.cross(&perp) * theta.sin();
        prop_assert!(close(&(m * perp), &expected, x.norm()));
        prop_assert!(close(&(m * exp_so3(&(-e * theta)).matrix()), &Mat3::identity(), 1.0));
    }

    #[test]
    fn exp_se3_matches_matrix_exponential(t in twist6(), h in 0.0f64..0.2) {
        let closed = exp_se3(&t, h).to_matrix();
        let series = (hat6(&t) * h).exp();
        prop_assert!(close(&closed, &series, series.amax()));
    }
}

#[test]
fn exp_so3_special_angles() {
    let z = Vec3::z();
    let quarter = exp_so3(&(z * std::f64::consts::FRAC_PI_2));
    assert!(close(&(quarter.matrix() * Vec3::x()), &Vec3::y(), 1.0));
    let half = exp_so3(&(z * std::f64::consts::PI));
    assert!(close(half.matrix(), &Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0)), 1.0));
    assert_eq!(*exp_so3(&Vec3::zeros()).matrix(), Mat3::identity());
    let tiny = Vec3::new(1e-9, -2e-9, 3e-9);
    assert!(close(exp_so3(&tiny).matrix(), &(Mat3::identity() + hat3(&tiny)), 1.0));
}
