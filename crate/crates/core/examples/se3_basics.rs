//! Lie-group building blocks: hat/vee, the adjoint, exponentials and the
//! block rotation `T_R`.

use cosserat_observer::se3::*;

fn main() -> cosserat_observer::Result<()> {
    let eta = twist(Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0));
    let xi = twist(Vec3::new(0.3, -0.2, 0.0), Vec3::new(1.0, 0.1, 0.0));

    println!("hat6(eta) =\n{:.3}", hat6(&eta));
    assert_eq!(vee6(&hat6(&eta))?, eta);

    // ad_η ξ = −ad_ξ η
    let a = ad_mul(&eta, &xi);
    println!("ad_eta xi = {}", a.transpose());
    println!("ad_xi eta = {}", ad_mul(&xi, &eta).transpose());

    // Unit twist along a circle of radius 1 for a quarter turn.
    let quarter = exp_se3(&eta, std::f64::consts::FRAC_PI_2);
    println!("pose after a quarter turn:\n{:.4}", quarter.to_matrix());

    let r = exp_so3(&Vec3::new(0.4, -1.1, 0.7));
    println!("rotation angle {:.6} rad, orthogonality defect {:.2e}", r.angle(), r.orthogonality_defect());
    let t = t_transform(&r);
    println!("T_R^T T_R - I max entry {:.2e}", (t.transpose() * t - Mat6::identity()).amax());
    Ok(())
}
