//! For λ ≥ λ₁ there is no positive solution. The certificate tests the
//! equation against `e₁` and a few other positive probes.

use std::sync::Arc;

use bnvar::solve::{solve_nplus_default, SolverOptions};
use bnvar::verify::{nonexistence_certificate, nonexistence_probes};
use bnvar::{build_domain, solve_lift, BoundaryData, DomainSpec, Params, SpectralData};

fn main() -> bnvar::Result<()> {
    let domain = build_domain(DomainSpec::unit_box(3, 13))?;
    let spectral = SpectralData::compute(&domain)?;
    let lift = Arc::new(solve_lift(&BoundaryData::Constant(1.0), &domain)?);
    for ratio in [1.0, 1.5] {
        let p = Params::new(ratio * spectral.lambda1, 0.01, Arc::clone(&spectral), Arc::clone(&lift))?;
        println!("lambda = {ratio} lambda1");
        let cert = nonexistence_certificate(&p, &nonexistence_probes(&p))?;
        print!("{}", cert.to_table());
        match solve_nplus_default(&p, &SolverOptions::default().with_budget(10)) {
            Ok(r) => println!("N+ solver returned a record with residual {:.2e}", r.grad_norm),
            Err(e) => println!("N+ solver: {e}"),
        }
    }
    Ok(())
}
