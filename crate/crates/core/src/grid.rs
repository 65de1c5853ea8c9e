//! Tensor-grid discretization of the domain.
//!
//! A [`Domain`] is a full tensor grid with a boolean interior mask. Fields carry
//! one value per interior node; every non-interior node is a homogeneous
//! Dirichlet ghost. The Laplacian is the standard (2N+1)-point stencil and the
//! quadrature weight is the uniform cell volume, so `<-Δu, v> = <u, -Δv>` holds
//! to rounding in the weighted product.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::power::{abs_pow, signed_pow};

const NONE: u32 = u32::MAX;

/// Geometry of the computational domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Axis-aligned box centered at the origin.
    Box { sides: Vec<f64> },
    /// Staircase shell `delta0 <= |x| <= 1/delta0` in a box just large enough
    /// to hold it.
    AnnulusD { delta0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    pub dimension: usize,
    /// Grid points per axis, boundary included.
    pub resolution: usize,
}

impl DomainSpec {
    pub fn unit_box(dimension: usize, resolution: usize) -> Self {
        Self {
            shape: Shape::Box {
                sides: vec![1.0; dimension],
            },
            dimension,
            resolution,
        }
    }

    pub fn annulus(delta0: f64, dimension: usize, resolution: usize) -> Self {
        Self {
            shape: Shape::AnnulusD { delta0 },
            dimension,
            resolution,
        }
    }

    /// Critical Sobolev exponent 2N/(N-2).
    pub fn critical_exponent(&self) -> f64 {
        let n = self.dimension as f64;
        2.0 * n / (n - 2.0)
    }

    fn validate(&self) -> Result<()> {
        if !(3..=5).contains(&self.dimension) {
            return Err(Error::Config(format!(
                "dimension {} unsupported (3, 4 or 5)",
                self.dimension
            )));
        }
        if self.resolution < 4 {
            return Err(Error::Config(format!(
                "resolution {} too coarse (need at least 4 points per axis)",
                self.resolution
            )));
        }
        match &self.shape {
            Shape::Box { sides } => {
                if sides.len() != self.dimension {
                    return Err(Error::Config(format!(
                        "box has {} sides but dimension is {}",
                        sides.len(),
                        self.dimension
                    )));
                }
                if sides.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(Error::Config("box sides must be positive".into()));
                }
            }
            Shape::AnnulusD { delta0 } => {
                if !(*delta0 > 0.0 && *delta0 < 1.0) {
                    return Err(Error::Config(format!("delta0 = {delta0} must lie in (0, 1)")));
                }
            }
        }
        Ok(())
    }
}

/// A built grid: node set, interior mask, stencil neighbours and quadrature.
#[derive(Debug)]
pub struct Domain {
    spec: DomainSpec,
    dims: Vec<usize>,
    strides: Vec<usize>,
    lower: Vec<f64>,
    spacing: Vec<f64>,
    inv_h2: Vec<f64>,
    weight: f64,
    interior: Vec<usize>,
    full_to_interior: Vec<u32>,
    boundary: Vec<usize>,
    full_to_boundary: Vec<u32>,
    /// `2N` entries per interior node: (axis, -) then (axis, +); interior index or NONE.
    nbr_interior: Vec<u32>,
    /// Same layout; boundary-node index or NONE.
    nbr_boundary: Vec<u32>,
    coords: Vec<f64>,
}

/// Build the discrete domain described by `spec`.
pub fn build_domain(spec: DomainSpec) -> Result<Arc<Domain>> {
    spec.validate()?;
    let dim = spec.dimension;
    let res = spec.resolution;
    let dims = vec![res; dim];
    let (lower, spacing) = match &spec.shape {
        Shape::Box { sides } => {
            let lower: Vec<f64> = sides.iter().map(|s| -0.5 * s).collect();
            let spacing: Vec<f64> = sides.iter().map(|s| s / (res - 1) as f64).collect();
            (lower, spacing)
        }
        Shape::AnnulusD { delta0 } => {
            // half-width R = 1/delta0 + h with h = 2R/(res-1)
            let half = (res - 1) as f64 / ((res - 3) as f64 * delta0);
            let h = 2.0 * half / (res - 1) as f64;
            (vec![-half; dim], vec![h; dim])
        }
    };
    let mut strides = vec![1usize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * dims[a + 1];
    }
    let total: usize = dims.iter().product();

    let coord_of = |f: usize, a: usize| -> f64 {
        let m = (f / strides[a]) % dims[a];
        lower[a] + m as f64 * spacing[a]
    };
    let on_box_boundary = |f: usize| -> bool {
        (0..dim).any(|a| {
            let m = (f / strides[a]) % dims[a];
            m == 0 || m == dims[a] - 1
        })
    };

    let mut full_to_interior = vec![NONE; total];
    let mut interior = Vec::new();
    for (f, slot) in full_to_interior.iter_mut().enumerate() {
        if on_box_boundary(f) {
            continue;
        }
        let inside = match &spec.shape {
            Shape::Box { .. } => true,
            Shape::AnnulusD { delta0 } => {
                let r = (0..dim).map(|a| coord_of(f, a).powi(2)).sum::<f64>().sqrt();
                let tol = 1e-12;
                r >= delta0 * (1.0 - tol) && r <= (1.0 / delta0) * (1.0 + tol)
            }
        };
        if inside {
            *slot = interior.len() as u32;
            interior.push(f);
        }
    }

    if let Shape::AnnulusD { delta0 } = &spec.shape {
        // interior nodes along the positive first axis inside the shell
        let across = interior
            .iter()
            .filter(|&&f| {
                let x0 = coord_of(f, 0);
                (1..dim).all(|a| coord_of(f, a).abs() < 0.5 * spacing[a]) && x0 > 0.0
            })
            .count();
        if across < 3 {
            return Err(Error::Config(format!(
                "resolution {res} leaves {across} interior node(s) across the shell {delta0} <= |x| <= {}; need at least 3",
                1.0 / delta0
            )));
        }
    }
    if interior.is_empty() {
        return Err(Error::Config("grid has no interior nodes".into()));
    }

    let n_int = interior.len();
    let mut nbr_interior = vec![NONE; n_int * 2 * dim];
    let mut nbr_full = vec![0usize; n_int * 2 * dim];
    for (i, &f) in interior.iter().enumerate() {
        for a in 0..dim {
            let lo = f - strides[a];
            let hi = f + strides[a];
            nbr_interior[(i * dim + a) * 2] = full_to_interior[lo];
            nbr_interior[(i * dim + a) * 2 + 1] = full_to_interior[hi];
            nbr_full[(i * dim + a) * 2] = lo;
            nbr_full[(i * dim + a) * 2 + 1] = hi;
        }
    }
    let mut full_to_boundary = vec![NONE; total];
    let mut is_boundary = vec![false; total];
    for (k, &nf) in nbr_full.iter().enumerate() {
        if nbr_interior[k] == NONE {
            is_boundary[nf] = true;
        }
    }
    let mut boundary = Vec::new();
    for f in 0..total {
        if is_boundary[f] {
            full_to_boundary[f] = boundary.len() as u32;
            boundary.push(f);
        }
    }
    let nbr_boundary: Vec<u32> = nbr_full
        .iter()
        .zip(&nbr_interior)
        .map(|(&nf, &ni)| if ni == NONE { full_to_boundary[nf] } else { NONE })
        .collect();

    let mut coords = Vec::with_capacity(n_int * dim);
    for &f in &interior {
        for a in 0..dim {
            coords.push(coord_of(f, a));
        }
    }
    let inv_h2 = spacing.iter().map(|h| 1.0 / (h * h)).collect();
    let weight = spacing.iter().product();

    Ok(Arc::new(Domain {
        spec,
        dims,
        strides,
        lower,
        spacing,
        inv_h2,
        weight,
        interior,
        full_to_interior,
        boundary,
        full_to_boundary,
        nbr_interior,
        nbr_boundary,
        coords,
    }))
}

impl Domain {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn critical_exponent(&self) -> f64 {
        self.spec.critical_exponent()
    }

    /// Points per axis of the full tensor grid.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Quadrature weight of every interior node (the cell volume).
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn num_boundary(&self) -> usize {
        self.boundary.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.full_to_interior.len()
    }

    /// Coordinates of interior node `i`.
    pub fn coord(&self, i: usize) -> &[f64] {
        let d = self.dimension();
        &self.coords[i * d..(i + 1) * d]
    }

    /// Coordinates of an arbitrary node of the full grid.
    pub fn full_coord(&self, f: usize) -> Vec<f64> {
        (0..self.dimension())
            .map(|a| self.lower[a] + ((f / self.strides[a]) % self.dims[a]) as f64 * self.spacing[a])
            .collect()
    }

    /// Coordinates of boundary node `b`.
    pub fn boundary_coord(&self, b: usize) -> Vec<f64> {
        self.full_coord(self.boundary[b])
    }

    /// Interior index of a full-grid node, if it is interior.
    pub fn interior_index(&self, full: usize) -> Option<usize> {
        match self.full_to_interior[full] {
            NONE => None,
            i => Some(i as usize),
        }
    }

    pub fn interior_full_index(&self, i: usize) -> usize {
        self.interior[i]
    }

    pub fn boundary_index(&self, full: usize) -> Option<usize> {
        match self.full_to_boundary[full] {
            NONE => None,
            b => Some(b as usize),
        }
    }

    /// Interior node closest to `x`.
    pub fn nearest_interior(&self, x: &[f64]) -> usize {
        (0..self.num_interior())
            .min_by(|&i, &j| {
                let di: f64 = self.coord(i).iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                let dj: f64 = self.coord(j).iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                di.total_cmp(&dj)
            })
            .expect("domain has interior nodes")
    }

    /// `out = -Δ u` with zero ghost values.
    pub(crate) fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        let d = self.dimension();
        let diag: f64 = 2.0 * self.inv_h2.iter().sum::<f64>();
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = diag * u[i];
            let base = i * d * 2;
            for a in 0..d {
                let lo = self.nbr_interior[base + 2 * a];
                let hi = self.nbr_interior[base + 2 * a + 1];
                let mut nb = 0.0;
                if lo != NONE {
                    nb += u[lo as usize];
                }
                if hi != NONE {
                    nb += u[hi as usize];
                }
                s -= self.inv_h2[a] * nb;
            }
            *o = s;
        }
    }

    /// Contribution of Dirichlet boundary values to the right-hand side:
    /// `b_i = Σ g_j / h_a²` over boundary neighbours `j` of `i`.
    pub(crate) fn boundary_rhs(&self, g: &[f64]) -> Vec<f64> {
        let d = self.dimension();
        (0..self.num_interior())
            .map(|i| {
                let base = i * d * 2;
                let mut s = 0.0;
                for a in 0..d {
                    for k in 0..2 {
                        let b = self.nbr_boundary[base + 2 * a + k];
                        if b != NONE {
                            s += self.inv_h2[a] * g[b as usize];
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// Solve `-Δx = b` by conjugate gradients starting from `x`.
    pub(crate) fn solve_poisson_into(&self, b: &[f64], x: &mut [f64], rel_tol: f64) -> Result<()> {
        let max_iter = 20 * self.num_interior().max(100);
        let rep = linalg::cg(|v, o| self.laplacian_into(v, o), b, x, rel_tol, max_iter);
        if !rep.converged && rep.relative_residual > rel_tol * 1e3 {
            return Err(Error::Numerical {
                message: format!("Poisson solve stalled after {} iterations", rep.iterations),
                residual: rep.relative_residual,
            });
        }
        Ok(())
    }

    pub(crate) fn solve_poisson(&self, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
        let mut x = vec![0.0; b.len()];
        self.solve_poisson_into(b, &mut x, rel_tol)?;
        Ok(x)
    }

    /// Σ over stencil edges of (difference / h)² times the weight; edges to
    /// ghost nodes count with the ghost value zero.
    pub(crate) fn h1_seminorm_sq_of(&self, u: &[f64]) -> f64 {
        let d = self.dimension();
        let mut s = 0.0;
        for i in 0..self.num_interior() {
            let base = i * d * 2;
            for a in 0..d {
                let lo = self.nbr_interior[base + 2 * a];
                let hi = self.nbr_interior[base + 2 * a + 1];
                let fwd = if hi == NONE { -u[i] } else { u[hi as usize] - u[i] };
                s += self.inv_h2[a] * fwd * fwd;
                if lo == NONE {
                    s += self.inv_h2[a] * u[i] * u[i];
                }
            }
        }
        s * self.weight
    }

    /// Stencil edges as (node, axis, forward difference, midpoint) for the
    /// gradient-weighted moments.
    pub(crate) fn for_each_edge(&self, u: &[f64], mut f: impl FnMut(usize, f64, &[f64])) {
        let d = self.dimension();
        let mut mid = vec![0.0; d];
        for i in 0..self.num_interior() {
            let base = i * d * 2;
            for a in 0..d {
                let lo = self.nbr_interior[base + 2 * a];
                let hi = self.nbr_interior[base + 2 * a + 1];
                let fwd = if hi == NONE { -u[i] } else { u[hi as usize] - u[i] };
                mid.copy_from_slice(self.coord(i));
                mid[a] += 0.5 * self.spacing[a];
                f(a, fwd / self.spacing[a], &mid);
                if lo == NONE {
                    mid.copy_from_slice(self.coord(i));
                    mid[a] -= 0.5 * self.spacing[a];
                    f(a, u[i] / self.spacing[a], &mid);
                }
            }
        }
    }
}

/// A grid function: one real value per interior node.
#[derive(Debug, Clone)]
pub struct Field {
    values: Vec<f64>,
    domain: Arc<Domain>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) && self.values == other.values
    }
}

impl Field {
    pub fn zeros(domain: &Arc<Domain>) -> Self {
        Self {
            values: vec![0.0; domain.num_interior()],
            domain: Arc::clone(domain),
        }
    }

    pub fn constant(domain: &Arc<Domain>, c: f64) -> Self {
        Self {
            values: vec![c; domain.num_interior()],
            domain: Arc::clone(domain),
        }
    }

    pub fn from_values(domain: &Arc<Domain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.num_interior() {
            return Err(Error::Argument(format!(
                "field has {} values but the domain has {} interior nodes",
                values.len(),
                domain.num_interior()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("field values must be finite".into()));
        }
        Ok(Self {
            values,
            domain: Arc::clone(domain),
        })
    }

    /// Samples `f` at every interior node.
    pub fn from_fn(domain: &Arc<Domain>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..domain.num_interior()).map(|i| f(domain.coord(i))).collect();
        Self {
            values,
            domain: Arc::clone(domain),
        }
    }

    pub(crate) fn from_raw(domain: &Arc<Domain>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.num_interior());
        Self {
            values,
            domain: Arc::clone(domain),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_domain(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain)
    }

    pub(crate) fn check_same(&self, other: &Field) -> Result<()> {
        if self.same_domain(other) {
            Ok(())
        } else {
            Err(Error::DomainMismatch)
        }
    }

    /// Quadrature inner product `∫ u v`.
    pub fn dot(&self, other: &Field) -> f64 {
        debug_assert!(self.same_domain(other));
        self.domain.weight * linalg::dot(&self.values, &other.values)
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field::from_raw(&self.domain, self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c * other`
    pub fn add_scaled(&self, c: f64, other: &Field) -> Field {
        debug_assert!(self.same_domain(other));
        Field::from_raw(
            &self.domain,
            self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        )
    }

    pub fn abs(&self) -> Field {
        Field::from_raw(&self.domain, self.values.iter().map(|v| v.abs()).collect())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `‖u‖²` (the H¹₀ seminorm squared).
    pub fn h1_norm_sq(&self) -> f64 {
        self.domain.h1_seminorm_sq_of(&self.values)
    }

    pub fn h1_norm(&self) -> f64 {
        self.h1_norm_sq().sqrt()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// `∫ |u|^p`.
    pub fn lp_pow(&self, p: f64) -> f64 {
        self.domain.weight * self.values.iter().map(|v| abs_pow(*v, p)).sum::<f64>()
    }

    /// Nodewise `|u|^(p-2) u`.
    pub fn signed_pow(&self, p: f64) -> Field {
        Field::from_raw(
            &self.domain,
            self.values.iter().map(|v| signed_pow(*v, p - 1.0)).collect(),
        )
    }
}

/// `-Δu` with homogeneous Dirichlet ghosts.
pub fn apply_laplacian(u: &Field) -> Field {
    let mut out = vec![0.0; u.len()];
    u.domain.laplacian_into(&u.values, &mut out);
    Field::from_raw(&u.domain, out)
}

/// The three norms used throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    /// `‖u‖² = ∫|∇u|²` via one-sided differences.
    pub h1_seminorm_sq: f64,
    pub l2_norm_sq: f64,
    /// `‖u‖_p`
    pub lp_norm: f64,
}

pub fn norms(u: &Field, p: f64) -> Result<Norms> {
    if !(p >= 1.0) {
        return Err(Error::Argument(format!("L^p norm needs p >= 1, got {p}")));
    }
    Ok(Norms {
        h1_seminorm_sq: u.h1_norm_sq(),
        l2_norm_sq: u.l2_norm_sq(),
        lp_norm: u.lp_pow(p).powf(1.0 / p),
    })
}

/// Principal Dirichlet eigenpair by inverse iteration with CG inner solves.
///
/// `e1` is positive and normalized to `‖e1‖₂ = 1`; the returned pair satisfies
/// `‖-Δe1 - λ1 e1‖₂ < 1e-10 λ1`.
pub fn principal_eigenpair(domain: &Arc<Domain>) -> Result<(f64, Field)> {
    const MAX_ITER: usize = 2000;
    let n = domain.num_interior();
    let w = domain.weight;
    let normalize = |x: &mut [f64]| {
        let s = (w * linalg::dot(x, x)).sqrt();
        x.iter_mut().for_each(|v| *v /= s);
    };
    let mut x = vec![1.0; n];
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut ax = vec![0.0; n];
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        domain.laplacian_into(&x, &mut ax);
        lambda = w * linalg::dot(&x, &ax);
        residual = (w * ax.iter().zip(&x).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>()).sqrt();
        if residual < 1e-10 * lambda {
            break;
        }
        // warm start: previous solution is close to x / lambda
        y.iter_mut().zip(&x).for_each(|(yi, xi)| *yi = xi / lambda);
        domain.solve_poisson_into(&x, &mut y, 1e-14)?;
        x.copy_from_slice(&y);
        normalize(&mut x);
    }
    if !(residual < 1e-10 * lambda) {
        return Err(Error::Numerical {
            message: "inverse iteration did not converge".into(),
            residual,
        });
    }
    let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    x.iter_mut().for_each(|v| *v *= sign);
    Ok((lambda, Field::from_raw(domain, x)))
}

/// Result of the discrete Sobolev-quotient minimization.
#[derive(Debug, Clone)]
pub struct SobolevEstimate {
    /// `min ‖u‖² / ‖u‖²_{2*}` reached.
    pub value: f64,
    pub minimizer: Field,
    pub iterations: usize,
    /// False when the descent stagnated before its gradient tolerance; the
    /// value is still an upper bound for the discrete infimum.
    pub converged: bool,
}

/// Quotient `‖u‖² / ‖u‖²_{2*}`.
pub fn sobolev_quotient(u: &Field) -> f64 {
    let p = u.domain.critical_exponent();
    u.h1_norm_sq() / u.lp_pow(p).powf(2.0 / p)
}

/// Centered smooth bump used to start the quotient descent; on the annulus it
/// sits in the middle of the shell on the first axis.
pub fn centered_bump(domain: &Arc<Domain>) -> Field {
    let d = domain.dimension();
    let (center, radius) = match &domain.spec.shape {
        Shape::Box { sides } => (vec![0.0; d], 0.5 * sides.iter().copied().fold(f64::INFINITY, f64::min)),
        Shape::AnnulusD { delta0 } => {
            let mut c = vec![0.0; d];
            c[0] = 0.5 * (delta0 + 1.0 / delta0);
            (c, 0.5 * (1.0 / delta0 - delta0))
        }
    };
    Field::from_fn(domain, |x| {
        let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (radius * radius);
        if r2 < 1.0 {
            (1.0 - r2).powi(2)
        } else {
            0.0
        }
    })
}

/// Talenti profile of width one grid spacing at the bump center (no cutoff).
pub fn centered_discrete_bubble(domain: &Arc<Domain>) -> Field {
    let d = domain.dimension();
    let mut center = vec![0.0; d];
    if let Shape::AnnulusD { delta0 } = &domain.spec.shape {
        center[0] = 0.5 * (delta0 + 1.0 / delta0);
    }
    let eps = domain.spacing.iter().copied().fold(f64::INFINITY, f64::min);
    let expo = 0.5 * (d as f64 - 2.0);
    Field::from_fn(domain, |x| {
        let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum();
        (eps / (eps * eps + r2)).powf(expo)
    })
}

fn minimize_quotient(start: &Field) -> Result<SobolevEstimate> {
    const MAX_ITER: usize = 400;
    const GRAD_TOL: f64 = 1e-9;
    let dom = Arc::clone(&start.domain);
    let p = dom.critical_exponent();
    let w = dom.weight;
    let mut u = start.values.clone();
    let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    u.iter_mut().for_each(|v| *v /= scale);
    let quotient = |u: &[f64]| -> (f64, f64, f64) {
        let a = dom.h1_seminorm_sq_of(u);
        let b = w * u.iter().map(|v| abs_pow(*v, p)).sum::<f64>();
        (a / b.powf(2.0 / p), a, b)
    };
    let (mut q, mut a, mut b) = quotient(&u);
    let mut z = vec![0.0; u.len()];
    let mut alpha: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..MAX_ITER {
        iterations = it;
        let r: Vec<f64> = u.iter().map(|v| signed_pow(*v, p - 1.0)).collect();
        dom.solve_poisson_into(&r, &mut z, 1e-12)?;
        // H¹₀ gradient direction of the quotient (up to a positive factor)
        let d: Vec<f64> = u.iter().zip(&z).map(|(ui, zi)| ui - (a / b) * zi).collect();
        let dd = dom.h1_seminorm_sq_of(&d);
        if dd.sqrt() < GRAD_TOL * a.sqrt() {
            converged = true;
            break;
        }
        let slope = 2.0 * dd / b.powf(2.0 / p);
        alpha = (2.0 * alpha).min(1.0);
        let mut accepted = false;
        while alpha > 1e-12 {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(ui, di)| ui - alpha * di).collect();
            let (qt, _, _) = quotient(&trial);
            if qt <= q - 1e-4 * alpha * slope {
                u = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        let m = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        u.iter_mut().for_each(|v| *v /= m);
        let (qn, an, bn) = quotient(&u);
        q = qn;
        a = an;
        b = bn;
    }
    Ok(SobolevEstimate {
        value: q,
        minimizer: Field::from_raw(&dom, u),
        iterations,
        converged,
    })
}

/// Discrete best Sobolev constant: descent on the quotient from the centered
/// bump (and from the centered discrete bubble, keeping the lower value).
pub fn estimate_sobolev_s(domain: &Arc<Domain>) -> Result<SobolevEstimate> {
    let from_bump = minimize_quotient(&centered_bump(domain))?;
    let from_bubble = minimize_quotient(&centered_discrete_bubble(domain))?;
    Ok(if from_bubble.value < from_bump.value {
        from_bubble
    } else {
        from_bump
    })
}

/// Principal eigenpair, discrete Sobolev constant and the cache of μ = 0
/// ground states, shared by every parameter cell on one domain.
#[derive(Debug)]
pub struct SpectralData {
    pub lambda1: f64,
    pub e1: Field,
    pub sobolev_s: f64,
    pub sobolev: SobolevEstimate,
    ground_states: RwLock<HashMap<u64, Field>>,
}

impl SpectralData {
    pub fn compute(domain: &Arc<Domain>) -> Result<Arc<Self>> {
        let (lambda1, e1) = principal_eigenpair(domain)?;
        let sobolev = estimate_sobolev_s(domain)?;
        Ok(Arc::new(Self {
            lambda1,
            e1,
            sobolev_s: sobolev.value,
            sobolev,
            ground_states: RwLock::new(HashMap::new()),
        }))
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.e1.domain()
    }

    /// `(1/N) S^{N/2}`, the single-bubble energy level.
    pub fn bubble_level(&self) -> f64 {
        let n = self.domain().dimension() as f64;
        self.sobolev_s.powf(0.5 * n) / n
    }

    pub fn cached_ground_state(&self, lambda: f64) -> Option<Field> {
        self.ground_states.read().ok()?.get(&lambda.to_bits()).cloned()
    }

    pub fn store_ground_state(&self, lambda: f64, u: Field) {
        if let Ok(mut m) = self.ground_states.write() {
            m.insert(lambda.to_bits(), u);
        }
    }
}

/// Writes the header `N n1 .. nN` followed by one value per full-grid node in
/// row-major order (non-interior nodes as 0).
pub fn write_field_dump<W: Write>(u: &Field, mut out: W) -> Result<()> {
    let dom = &u.domain;
    write!(out, "{}", dom.dimension())?;
    for n in &dom.dims {
        write!(out, " {n}")?;
    }
    writeln!(out)?;
    for f in 0..dom.num_nodes() {
        let v = dom.interior_index(f).map_or(0.0, |i| u.values[i]);
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}

pub fn read_field_dump<R: BufRead>(domain: &Arc<Domain>, input: R) -> Result<Field> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Argument("empty field dump".into()))??;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Argument(format!("bad field dump header '{header}': {e}")))?;
    if head.first() != Some(&domain.dimension()) || head[1..] != domain.dims[..] {
        return Err(Error::Argument(format!(
            "field dump header '{header}' does not match the grid ({} {:?})",
            domain.dimension(),
            domain.dims
        )));
    }
    let mut values = vec![0.0; domain.num_interior()];
    let mut count = 0;
    for line in lines {
        let line = line?;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|e| Error::Argument(format!("bad value '{tok}' in field dump: {e}")))?;
            if count >= domain.num_nodes() {
                return Err(Error::Argument("field dump has too many values".into()));
            }
            match domain.interior_index(count) {
                Some(i) => values[i] = v,
                None if v != 0.0 => {
                    return Err(Error::Argument(format!(
                        "non-zero value {v} at non-interior node {count}"
                    )))
                }
                None => {}
            }
            count += 1;
        }
    }
    if count != domain.num_nodes() {
        return Err(Error::Argument(format!(
            "field dump has {count} values, expected {}",
            domain.num_nodes()
        )));
    }
    Field::from_values(domain, values)
}
