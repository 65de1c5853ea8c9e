//! Principal Dirichlet eigenvalue of the unit cube under grid refinement,
//! against the exact value 3π².

use bnvar::grid::{apply_laplacian, principal_eigenpair};
use bnvar::{build_domain, DomainSpec, Field};

fn main() -> bnvar::Result<()> {
    let exact = 3.0 * std::f64::consts::PI.powi(2);
    let mut prev: Option<(f64, f64)> = None;
    println!(
        "{:>5} {:>10} {:>16} {:>12} {:>8} {:>10}",
        "n", "h", "lambda1", "error", "order", "residual"
    );
    for n in [9, 17, 33] {
        let domain = build_domain(DomainSpec::unit_box(3, n))?;
        let (lambda, e1) = principal_eigenpair(&domain)?;
        let h = domain.spacing()[0];
        let err = (lambda - exact).abs();
        let order = prev.map(|(hp, ep)| (ep / err).ln() / (hp / h).ln());
        println!(
            "{n:>5} {h:>10.5} {lambda:>16.10} {err:>12.4e} {:>8} {:>10.2e}",
            order.map_or("-".into(), |o| format!("{o:.3}")),
            apply_laplacian_residual(&e1, lambda)
        );
        prev = Some((h, err));
    }
    Ok(())
}

/// `‖−Δe − λe‖₂`.
fn apply_laplacian_residual(e: &Field, lambda: f64) -> f64 {
    apply_laplacian(e).add_scaled(-lambda, e).l2_norm_sq().sqrt()
}
