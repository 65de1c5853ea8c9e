//! Cut-off Talenti bubbles on a thick shell: their critical norm as ε
//! shrinks, and the energy of `v⁺ + tU` once projected onto N⁻.
//!
//! ```text
//! cargo run --release --example bubble_sanity -- [resolution] [delta0]
//! ```

use std::sync::Arc;

use bnvar::solve::{composite_seed, make_bubble, solve_nplus_default, SolverOptions};
use bnvar::{build_domain, solve_lift, BoundaryData, DomainSpec, Params, SpectralData};

fn main() -> bnvar::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let res: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(25);
    let delta0: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.45);

    let domain = build_domain(DomainSpec::annulus(delta0, 3, res))?;
    let spectral = SpectralData::compute(&domain)?;
    let lift = Arc::new(solve_lift(&BoundaryData::Constant(1.0), &domain)?);
    let q = domain.critical_exponent();
    let target = spectral.sobolev_s.powf(0.5 * domain.dimension() as f64);
    println!(
        "shell delta0 = {delta0}, grid {res}^3, h = {:.4}: S = {:.6}, S^(N/2) = {:.6}",
        domain.spacing()[0],
        spectral.sobolev_s,
        target
    );
    let p = Params::new(0.1 * spectral.lambda1, 0.005, spectral, lift)?;
    let plus = solve_nplus_default(&p, &SolverOptions::default())?;
    let ceiling = plus.energy + p.bubble_level();
    println!("m+ = {:.6e}, m+ + S^(N/2)/N = {:.6}", plus.energy, ceiling);

    println!(
        "{:>6} {:>12} {:>12} {:>10} {:>14}",
        "eps", "|U|^2*", "|U|^2/|U|_2*^2", "t", "I(t- (v+ + tU))"
    );
    for eps in [0.4, 0.2, 0.1, 0.05] {
        let b = make_bubble(eps, &[1.0, 0.0, 0.0], &domain, delta0)?;
        let crit = b.field.lp_pow(q);
        let quotient = b.field.h1_norm_sq() / crit.powf(2.0 / q);
        let c = composite_seed(&p, &plus, &b)?;
        println!(
            "{eps:>6} {crit:>12.6} {quotient:>12.6} {:>10.4} {:>14.6}{}",
            c.t,
            c.energy,
            if c.below_threshold { "  below" } else { "  above" }
        );
    }
    Ok(())
}
