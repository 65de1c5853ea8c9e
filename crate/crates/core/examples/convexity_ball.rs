//! `I` is strictly convex on the ball of radius `r_λ` around 0, which holds
//! `v⁺`. Outside it the Hessian form eventually turns negative along the
//! ground-state ray.

use std::sync::Arc;

use bnvar::solve::{ground_state, solve_nplus_default, SolverOptions};
use bnvar::verify::{convexity_ball_check, convexity_radius};
use bnvar::{build_domain, hessian_apply, solve_lift, BoundaryData, DomainSpec, Params, SpectralData};

fn main() -> bnvar::Result<()> {
    let domain = build_domain(DomainSpec::unit_box(3, 17))?;
    let spectral = SpectralData::compute(&domain)?;
    let lift = Arc::new(solve_lift(&BoundaryData::Constant(1.0), &domain)?);
    let p = Params::new(0.5 * spectral.lambda1, 0.01, spectral, lift)?;
    let opts = SolverOptions::default();
    let plus = solve_nplus_default(&p, &opts)?;
    let r = convexity_radius(&p);
    println!("r_lambda = {r:.6}, |v+| = {:.6e}", plus.v.h1_norm());
    print!("{}", convexity_ball_check(&p, 200, 7, Some(&plus.v))?.to_table());

    let gs = ground_state(&p.with(p.lambda, 0.0)?, &opts)?;
    let dir = gs.scaled(1.0 / gs.h1_norm());
    println!("Hessian form along the ground-state direction, Q(s) = <I''(s d) d, d> / |d|^2:");
    for s in [0.5, 1.0, 5.0, 10.0, 15.0, 20.0] {
        let v = dir.scaled(s * r);
        let q = hessian_apply(&v, &dir, &p).dot(&dir);
        println!("  |v| = {s:>4} r   Q = {q:+.6}");
    }
    Ok(())
}
