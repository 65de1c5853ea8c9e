//! The fibering map `t ↦ I(tv)` along a few rays: its two critical points
//! `t⁺ < t₀ < t⁻` and the sign of `T''` at each.

use std::sync::Arc;

use bnvar::grid::centered_bump;
use bnvar::{build_domain, classify, find_roots, solve_lift, BoundaryData, DomainSpec, Params, SpectralData};

fn main() -> bnvar::Result<()> {
    let domain = build_domain(DomainSpec::unit_box(3, 17))?;
    let spectral = SpectralData::compute(&domain)?;
    let lift = Arc::new(solve_lift(&BoundaryData::Constant(1.0), &domain)?);
    let p = Params::new(0.5 * spectral.lambda1, 0.01, Arc::clone(&spectral), lift)?;

    let rays = [
        ("e1", spectral.e1.clone()),
        ("bump", centered_bump(&domain)),
        ("sobolev minimizer", spectral.sobolev.minimizer.clone()),
    ];
    for (name, v) in &rays {
        let r = find_roots(v, &p)?;
        println!("ray {name}: pairing {:.4e}", r.pairing_sign);
        for (label, t) in [("t+", r.t_plus), ("t0", Some(r.t0)), ("t-", Some(r.t_minus))] {
            let Some(t) = t else { continue };
            let tv = v.scaled(t);
            let f = bnvar::fibering(v, &p, t)?;
            println!(
                "  {label} = {t:<12.6e} T = {:<13.6e} T' = {:<10.2e} T'' = {:<12.4e} {}",
                f.value,
                f.first,
                f.second,
                classify(&tv, &p).kind
            );
        }
    }
    Ok(())
}
