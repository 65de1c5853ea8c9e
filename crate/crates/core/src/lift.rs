//! Boundary data and its discrete harmonic lift.
//!
//! With `Δφ = 0` in Ω and `φ = g` on ∂Ω, a solution `v` of the homogeneous
//! problem gives `u = v + μφ` for the boundary-value problem with data `μg`.

use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Field};

/// Nonnegative, nontrivial Dirichlet data on the mask-boundary nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundaryData {
    Constant(f64),
    /// `amplitude · (1 - (θ/width)²)²` for boundary nodes whose position makes
    /// an angle `θ < width` (radians) with `direction`, zero elsewhere.
    BumpOnBoundary {
        direction: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    /// One value per boundary node, in the domain's boundary ordering.
    NodeTable(Vec<f64>),
}

impl BoundaryData {
    /// Reads a two-column `index value` table; unlisted nodes get zero.
    pub fn load_node_table(path: &Path, domain: &Domain) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse_node_table(std::io::BufReader::new(file), domain, path)
    }

    pub fn parse_node_table<R: BufRead>(input: R, domain: &Domain, path: &Path) -> Result<Self> {
        let mut values = vec![0.0; domain.num_boundary()];
        for (k, line) in input.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message,
            };
            let mut cols = body.split_whitespace();
            let (Some(idx), Some(val), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(parse_err(format!("expected 'index value', got '{body}'")));
            };
            let idx: usize = idx.parse().map_err(|e| parse_err(format!("bad node index: {e}")))?;
            let val: f64 = val.parse().map_err(|e| parse_err(format!("bad value: {e}")))?;
            if idx >= values.len() {
                return Err(parse_err(format!(
                    "boundary node {idx} out of range (domain has {})",
                    values.len()
                )));
            }
            values[idx] = val;
        }
        Ok(BoundaryData::NodeTable(values))
    }

    /// Values on the boundary nodes of `domain`.
    pub fn node_values(&self, domain: &Domain) -> Result<Vec<f64>> {
        let nb = domain.num_boundary();
        let values = match self {
            BoundaryData::Constant(c) => vec![*c; nb],
            BoundaryData::BumpOnBoundary {
                direction,
                width,
                amplitude,
            } => {
                if direction.len() != domain.dimension() {
                    return Err(Error::Argument("bump direction has the wrong dimension".into()));
                }
                let dn = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
                if !(dn > 0.0 && *width > 0.0) {
                    return Err(Error::Argument(
                        "bump needs a nonzero direction and positive width".into(),
                    ));
                }
                (0..nb)
                    .map(|b| {
                        let x = domain.boundary_coord(b);
                        let xn = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                        if xn == 0.0 {
                            return 0.0;
                        }
                        let cos = x.iter().zip(direction).map(|(a, d)| a * d).sum::<f64>() / (xn * dn);
                        let theta = cos.clamp(-1.0, 1.0).acos();
                        if theta < *width {
                            amplitude * (1.0 - (theta / width).powi(2)).powi(2)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            BoundaryData::NodeTable(v) => {
                if v.len() != nb {
                    return Err(Error::Argument(format!(
                        "node table has {} entries but the domain has {nb} boundary nodes",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::BoundaryData(format!(
                "negative or non-finite boundary value {bad}"
            )));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::BoundaryData("boundary data vanishes identically".into()));
        }
        Ok(values)
    }
}

/// The discrete harmonic extension of `g` and its solve residual.
#[derive(Debug, Clone)]
pub struct HarmonicLift {
    pub phi: Field,
    pub g: BoundaryData,
    pub boundary_values: Vec<f64>,
    /// `‖-Δ_h φ‖₂` over the interior with the boundary values in the stencil.
    pub residual: f64,
}

impl HarmonicLift {
    pub fn domain(&self) -> &Arc<Domain> {
        self.phi.domain()
    }

    pub fn max_g(&self) -> f64 {
        self.boundary_values.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_g(&self) -> f64 {
        self.boundary_values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn lift_residual(domain: &Domain, phi: &[f64], rhs: &[f64]) -> f64 {
    let mut lphi = vec![0.0; phi.len()];
    domain.laplacian_into(phi, &mut lphi);
    let s: f64 = lphi.iter().zip(rhs).map(|(a, b)| (a - b).powi(2)).sum();
    (domain.weight() * s).sqrt()
}

/// Solves the discrete Laplace equation with Dirichlet data `g`.
pub fn solve_lift(g: &BoundaryData, domain: &Arc<Domain>) -> Result<HarmonicLift> {
    let gv = g.node_values(domain)?;
    let max_g = gv.iter().copied().fold(0.0, f64::max);
    let rhs = domain.boundary_rhs(&gv);
    let target = 1e-10 * max_g;
    let mut phi = vec![0.0; rhs.len()];
    let mut residual = f64::INFINITY;
    let mut tol = 1e-12;
    // restart CG from the current iterate until the true residual is small
    for _ in 0..6 {
        domain.solve_poisson_into(&rhs, &mut phi, tol)?;
        residual = lift_residual(domain, &phi, &rhs);
        if residual < target {
            break;
        }
        tol *= 0.1;
    }
    if !(residual < target) {
        return Err(Error::Numerical {
            message: "harmonic lift did not reach its residual target".into(),
            residual,
        });
    }
    Ok(HarmonicLift {
        phi: Field::from_values(domain, phi)?,
        g: g.clone(),
        boundary_values: gv,
        residual,
    })
}

/// `u = v + μφ` nodewise.
pub fn compose_solution(v: &Field, mu: f64, lift: &HarmonicLift) -> Result<Field> {
    v.check_same(&lift.phi)?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Argument(format!("mu = {mu} must be finite and >= 0")));
    }
    Ok(v.add_scaled(mu, &lift.phi))
}
