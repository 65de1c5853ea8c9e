//! Harmonic lifts of three kinds of boundary data: constant, a smooth bump
//! around the +x axis, and a node table written to a temporary file.
//!
//! Constant data on a box lifts to the constant itself; the bump lift obeys
//! the discrete maximum principle.

use std::io::Write;

use bnvar::{build_domain, solve_lift, BoundaryData, DomainSpec};

fn main() -> bnvar::Result<()> {
    let domain = build_domain(DomainSpec::unit_box(3, 17))?;
    let cases = [
        ("constant 1", BoundaryData::Constant(1.0)),
        (
            "bump around +x",
            BoundaryData::BumpOnBoundary {
                direction: vec![1.0, 0.0, 0.0],
                width: 0.4,
                amplitude: 2.0,
            },
        ),
    ];
    for (name, g) in &cases {
        report(name, &solve_lift(g, &domain)?);
    }

    // one `index value` line per boundary node
    let mut path = std::env::temp_dir();
    path.push(format!("bnvar-lift-{}.txt", std::process::id()));
    let mut f = std::fs::File::create(&path)?;
    for b in 0..domain.num_boundary() {
        let x = domain.boundary_coord(b);
        let g = 1.0 + 0.5 * x[2];
        writeln!(f, "{b} {g:.17e}")?;
    }
    drop(f);
    let table = BoundaryData::load_node_table(&path, &domain)?;
    report("table 1 + z/2", &solve_lift(&table, &domain)?);
    std::fs::remove_file(&path)?;
    Ok(())
}

fn report(name: &str, lift: &bnvar::HarmonicLift) {
    println!(
        "{name:<16} residual {:.2e}  phi in [{:.6}, {:.6}]  g in [{:.6}, {:.6}]",
        lift.residual,
        lift.phi.min(),
        lift.phi.max(),
        lift.min_g(),
        lift.max_g()
    );
}
