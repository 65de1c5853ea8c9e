//! Continuation in μ along the N⁺ branch for a few λ, giving lower
//! estimates of the existence boundary μ*(λ).

use std::sync::Arc;

use bnvar::solve::{estimate_existence_boundary, ContinuationOptions};
use bnvar::{build_domain, solve_lift, BoundaryData, DomainSpec, Params, SpectralData};

fn main() -> bnvar::Result<()> {
    let domain = build_domain(DomainSpec::unit_box(3, 13))?;
    let spectral = SpectralData::compute(&domain)?;
    let lift = Arc::new(solve_lift(&BoundaryData::Constant(1.0), &domain)?);
    let lambda1 = spectral.lambda1;
    let base = Params::new(0.0, 0.0, spectral, lift)?;
    let lambdas: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|r| r * lambda1).collect();
    let b = estimate_existence_boundary(&base, &lambdas, &ContinuationOptions::default())?;
    for ((l, m), branch) in b.lambda_grid.iter().zip(&b.mu_star_estimates).zip(&b.branch_data) {
        let last = branch.last();
        println!(
            "lambda = {:.2} lambda1: mu* >= {m:.6}  ({} branch points, m+ at the end {:.4e}, m- {})",
            l / lambda1,
            branch.len(),
            last.map_or(f64::NAN, |p| p.energy_plus),
            last.and_then(|p| p.energy_minus)
                .map_or("-".into(), |e| format!("{e:.4}"))
        );
    }
    Ok(())
}
