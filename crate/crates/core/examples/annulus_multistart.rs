//! Several positive solutions on a thick shell: v⁺ plus a bubble placed
//! near each of ±e_i, projected onto N⁻ and relaxed. Distinct solutions
//! are told apart by their barycenters. A minimax search for a further
//! critical point between the two compactness thresholds runs last.
//!
//! ```text
//! cargo run --release --example annulus_multistart -- [resolution] [epsilon]
//! ```

use std::sync::Arc;

use bnvar::solve::{
    lattice_directions, minimax_gamma, multistart_nminus, solve_nminus_default, solve_nplus_default, MinimaxOutcome,
    SolverOptions,
};
use bnvar::verify::certify_solution;
use bnvar::{build_domain, solve_lift, BoundaryData, DomainSpec, Params, SpectralData};

fn main() -> bnvar::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let res: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(25);
    let eps: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.2);

    let domain = build_domain(DomainSpec::annulus(0.45, 3, res))?;
    let spectral = SpectralData::compute(&domain)?;
    let lift = Arc::new(solve_lift(&BoundaryData::Constant(1.0), &domain)?);
    let p = Params::new(0.1 * spectral.lambda1, 0.005, spectral, lift)?;
    let opts = SolverOptions::default();
    let plus = solve_nplus_default(&p, &opts)?;
    let minus = solve_nminus_default(&p, &opts)?;
    println!(
        "m+ = {:.6e}  m- = {:.6}  threshold m+ + S^(N/2)/N = {:.6}",
        plus.energy,
        minus.energy,
        plus.energy + p.bubble_level()
    );

    let dirs = lattice_directions(3, 6);
    let report = multistart_nminus(&p, &plus, &dirs, eps, &opts)?;
    for (d, (seed, outcome)) in dirs.iter().zip(report.seeds.iter().zip(&report.outcomes)) {
        let seed = match seed {
            Ok(s) => format!("seed energy {:.4}", s.energy),
            Err(e) => format!("seed failed: {e}"),
        };
        let result = match outcome {
            Ok(k) => format!("record {k}"),
            Err(e) => e.to_string(),
        };
        println!("direction {d:?}: {seed}, {result}");
    }
    for (k, r) in report.records.iter().enumerate() {
        let b = r.barycenter();
        let cert = certify_solution(r, &p, Some(plus.energy));
        println!(
            "record {k}: energy {:.8}  barycenter ({:+.3}, {:+.3}, {:+.3})  residual {:.1e}  certified {}",
            r.energy, b[0], b[1], b[2], r.grad_norm, cert.overall
        );
    }

    match minimax_gamma(&p, plus.energy, minus.energy, eps, &opts)? {
        MinimaxOutcome::Found {
            record,
            family_sup,
            window,
        } => println!(
            "minimax: found energy {:.6} (family sup {family_sup:.6}) in window ({:.6}, {:.6})",
            record.energy, window.0, window.1
        ),
        MinimaxOutcome::NotFound {
            reason,
            family_sup,
            window,
        } => println!(
            "minimax: not found ({reason}); family sup {family_sup:.6}, window ({:.6}, {:.6})",
            window.0, window.1
        ),
    }
    Ok(())
}
