//! N⁺ and N⁻ solutions on the unit cube with constant boundary data.
//!
//! ```text
//! cargo run --release --example two_solutions -- [resolution] [lambda/lambda1] [mu]
//! ```

use std::sync::Arc;
use std::time::Instant;

use bnvar::solve::{solve_nminus_default, solve_nplus_default, SolverOptions};
use bnvar::{build_domain, solve_lift, BoundaryData, DomainSpec, Params, SpectralData};

fn main() -> bnvar::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let res: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(21);
    let frac: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let mu: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.01);

    let clock = Instant::now();
    let domain = build_domain(DomainSpec::unit_box(3, res))?;
    let spectral = SpectralData::compute(&domain)?;
    let lift = Arc::new(solve_lift(&BoundaryData::Constant(1.0), &domain)?);
    println!(
        "grid {res}^3: lambda1 = {:.6}, S = {:.6}, setup {:.2?}",
        spectral.lambda1,
        spectral.sobolev_s,
        clock.elapsed()
    );
    let p = Params::new(frac * spectral.lambda1, mu, spectral, lift)?;
    let opts = SolverOptions::default();

    let clock = Instant::now();
    let plus = solve_nplus_default(&p, &opts)?;
    println!(
        "v+: energy {:.9e}  residual {:.2e}  ‖v‖ {:.6}  iterations {}  ({:.2?})",
        plus.energy,
        plus.grad_norm,
        plus.v.h1_norm(),
        plus.iterations,
        clock.elapsed()
    );
    let clock = Instant::now();
    let minus = solve_nminus_default(&p, &opts)?;
    println!(
        "v-: energy {:.9e}  residual {:.2e}  ‖v‖ {:.6}  max {:.4}  iterations {}  ({:.2?})",
        minus.energy,
        minus.grad_norm,
        minus.v.h1_norm(),
        minus.v.max(),
        minus.iterations,
        clock.elapsed()
    );
    let gap = minus.energy - plus.energy;
    println!("gap {:.6} against bubble level {:.6}", gap, p.bubble_level());
    Ok(())
}
