//! Solvers for the shifted problem: the N⁺ minimizer, the N⁻ minimizer,
//! bubble-seeded N⁻ solutions, a lattice minimax search and the μ*(λ)
//! continuation.
//!
//! Every solver ends with a Newton polish on the full gradient, with MINRES
//! for the (possibly indefinite) Hessian systems.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{energy, gradient, hessian_apply_raw, hessian_weights, Params};
use crate::grid::{Domain, Field, Shape};
use crate::linalg;
use crate::nehari::{
    barycenter, classify_within, find_roots, gradient_direction, ray_maximum, ray_set_ratio, reduced_j_gradient,
    NehariClass, NehariKind,
};
use crate::verify::certify_solution;

/// Where a solve started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SeedKind {
    ZeroRelax,
    GroundStateRay,
    Bubble {
        direction: Vec<f64>,
    },
    Minimax,
    /// Caller-supplied field.
    Warm,
    /// Previous point of a μ-continuation.
    Continuation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_descent: usize,
    pub max_newton: usize,
    /// Descent hands over to Newton once the H¹₀ norm of the Sobolev
    /// gradient drops below `descent_tol·(1+|I|)`.
    pub descent_tol: f64,
    /// Newton target for `‖∇I‖₂ / (1+‖v‖)`.
    pub residual_tol: f64,
    /// Largest `‖∇I‖₂ / (1+‖v‖)` for which a record is accepted.
    pub accept_tol: f64,
    pub minres_tol: f64,
    pub minres_max: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_descent: 2000,
            max_newton: 30,
            descent_tol: 1e-5,
            residual_tol: 1e-10,
            accept_tol: 1e-8,
            minres_tol: 1e-11,
            minres_max: 20_000,
        }
    }
}

impl SolverOptions {
    /// All iteration caps multiplied by `factor`.
    pub fn with_budget(self, factor: usize) -> Self {
        Self {
            max_descent: self.max_descent * factor,
            max_newton: self.max_newton * factor,
            minres_max: self.minres_max * factor,
            ..self
        }
    }
}

/// A converged, checked solution.
#[derive(Debug, Clone)]
pub struct SolutionRecord {
    pub lambda: f64,
    pub mu: f64,
    pub v: Field,
    /// `v + μφ`
    pub u: Field,
    pub energy: f64,
    pub nehari_class: NehariClass,
    /// `‖-Δv − λu − u^{2*-1}‖₂`
    pub grad_norm: f64,
    pub positive: bool,
    pub seed: SeedKind,
    pub iterations: usize,
}

/// JSON form of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub lambda: f64,
    pub mu: f64,
    pub energy: f64,
    pub class: NehariKind,
    pub t_second_deriv: f64,
    pub grad_norm: f64,
    pub positive: bool,
    pub seed: SeedKind,
    pub barycenter: Vec<f64>,
    pub gradient_direction: Vec<f64>,
    pub iterations: usize,
    pub h1_norm: f64,
    /// Field dump of `v`, relative to the record file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl SolutionRecord {
    pub fn barycenter(&self) -> Vec<f64> {
        barycenter(&self.v).unwrap_or_else(|_| vec![0.0; self.v.domain().dimension()])
    }

    pub fn summary(&self) -> RecordSummary {
        RecordSummary {
            lambda: self.lambda,
            mu: self.mu,
            energy: self.energy,
            class: self.nehari_class.kind,
            t_second_deriv: self.nehari_class.t_second_deriv,
            grad_norm: self.grad_norm,
            positive: self.positive,
            seed: self.seed.clone(),
            barycenter: self.barycenter(),
            gradient_direction: gradient_direction(&self.v).unwrap_or_else(|_| vec![0.0; self.v.domain().dimension()]),
            iterations: self.iterations,
            h1_norm: self.v.h1_norm(),
            field: None,
        }
    }

    /// Residual bound used for acceptance.
    pub fn relative_residual(&self) -> f64 {
        self.grad_norm / (1.0 + self.v.h1_norm())
    }
}

/// `‖∇I(v)‖₂`, the weighted L² norm of the PDE residual.
pub fn residual_norm(v: &Field, p: &Params) -> f64 {
    gradient(v, p).l2_norm_sq().sqrt()
}

/// Builds a record for `v` without solving; classification uses a root
/// tolerance that covers the measured residual.
pub fn evaluate_record(v: Field, p: &Params, seed: SeedKind, iterations: usize) -> SolutionRecord {
    let grad_norm = residual_norm(&v, p);
    let tol_root = (1e-9 * (1.0 + v.h1_norm_sq())).max(10.0 * grad_norm * v.l2_norm_sq().sqrt());
    let nehari_class = classify_within(&v, p, tol_root);
    let u = p.compose(&v);
    SolutionRecord {
        lambda: p.lambda,
        mu: p.mu,
        energy: energy(&v, p),
        positive: u.values().iter().all(|x| *x > 0.0),
        u,
        v,
        nehari_class,
        grad_norm,
        seed,
        iterations,
    }
}

fn sobolev_gradient(g: &Field) -> Result<Field> {
    let dom = g.domain();
    let d = dom.solve_poisson(g.values(), 1e-10)?;
    Field::from_values(dom, d)
}

/// Newton iteration on `∇I = 0` with backtracking on `‖∇I‖₂`. Returns the
/// best iterate and the number of steps taken.
pub(crate) fn newton_polish(mut v: Field, p: &Params, opts: &SolverOptions) -> (Field, usize) {
    let dom = Arc::clone(v.domain());
    let mut g = gradient(&v, p);
    let mut r = g.l2_norm_sq().sqrt();
    let mut steps = 0;
    for _ in 0..opts.max_newton {
        if r <= opts.residual_tol * (1.0 + v.h1_norm()) {
            break;
        }
        let weights = hessian_weights(v.values(), p);
        let rhs: Vec<f64> = g.values().iter().map(|x| -x).collect();
        let (delta, _) = linalg::minres(
            |x, o| hessian_apply_raw(&dom, &weights, p.lambda, x, o),
            &rhs,
            opts.minres_tol,
            opts.minres_max,
        );
        if !delta.iter().all(|x| x.is_finite()) {
            break;
        }
        let delta = Field::from_raw(&dom, delta);
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial = v.add_scaled(alpha, &delta);
            let gt = gradient(&trial, p);
            let rt = gt.l2_norm_sq().sqrt();
            if rt.is_finite() && rt < (1.0 - 1e-4 * alpha) * r {
                v = trial;
                g = gt;
                r = rt;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        steps += 1;
        if !improved {
            break;
        }
    }
    (v, steps)
}

fn accept(rec: SolutionRecord, expected: NehariKind, opts: &SolverOptions) -> Result<SolutionRecord> {
    let rel = rec.relative_residual();
    if !(rel <= opts.accept_tol) {
        return Err(Error::Numerical {
            message: format!("solver stopped at relative residual {rel:e}"),
            residual: rec.grad_norm,
        });
    }
    if !rec.positive {
        return Err(Error::Numerical {
            message: "converged point is not positive".into(),
            residual: rec.grad_norm,
        });
    }
    if rec.nehari_class.kind != expected {
        return Err(Error::Numerical {
            message: format!(
                "converged point classified {} instead of {}",
                rec.nehari_class.kind, expected
            ),
            residual: rec.grad_norm,
        });
    }
    Ok(rec)
}

/// One Sobolev-gradient step from zero: `(-Δ)^{-1}(λμφ + (μφ)^{2*-1})`.
pub fn zero_relaxation(p: &Params) -> Result<Field> {
    sobolev_gradient(&gradient(&Field::zeros(p.domain()), p).scaled(-1.0))
}

fn project_plus(w: &Field, p: &Params) -> Result<Field> {
    let a = w.abs();
    if a.is_zero() {
        return Err(Error::DegenerateSeed("zero ray".into()));
    }
    let roots = find_roots(&a, p)?;
    let t = roots
        .t_plus
        .ok_or_else(|| Error::DegenerateSeed("ray has no t+ root (pairing <= 0)".into()))?;
    Ok(a.scaled(t))
}

/// Minimizer of the energy on N⁺: projected Sobolev-gradient descent with
/// `t⁺` re-projection of `|v|`, then Newton.
pub fn minimize_on_nplus(
    p: &Params,
    seed: &Field,
    seed_kind: SeedKind,
    opts: &SolverOptions,
) -> Result<SolutionRecord> {
    if p.mu == 0.0 {
        return Err(Error::BranchAbsent);
    }
    let start = if seed.is_zero() {
        zero_relaxation(p)?
    } else {
        seed.clone()
    };
    let mut v = project_plus(&start, p)?;
    let mut e = energy(&v, p);
    let mut alpha: f64 = 1.0;
    let mut iterations = 0;
    for it in 0..opts.max_descent {
        iterations = it + 1;
        let g = gradient(&v, p);
        let d = sobolev_gradient(&g)?;
        let gg = g.dot(&d);
        if gg.sqrt() <= opts.descent_tol * (1.0 + e.abs()) {
            break;
        }
        alpha = (2.0 * alpha).min(1.0);
        let mut accepted = false;
        while alpha > 1e-12 {
            if let Ok(trial) = project_plus(&v.add_scaled(-alpha, &d), p) {
                let et = energy(&trial, p);
                if et <= e - 1e-4 * alpha * gg {
                    v = trial;
                    e = et;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (v, steps) = newton_polish(v, p, opts);
    accept(
        evaluate_record(v, p, seed_kind, iterations + steps),
        NehariKind::Plus,
        opts,
    )
}

fn normalize_cone(w: &Field, q: f64) -> Result<Field> {
    let a = w.abs();
    let n = a.lp_pow(q);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Projection(format!("iterate left the cone (‖w‖^2* = {n:e})")));
    }
    Ok(a.scaled(n.powf(-1.0 / q)))
}

/// Minimizer on N⁻: descent of `w ↦ I(t⁻(w)w)` over the nonnegative unit
/// `2*`-sphere with retraction `w ↦ |w|/‖w‖_{2*}`, then Newton on `t⁻w`.
pub fn minimize_on_nminus(
    p: &Params,
    seed: &Field,
    seed_kind: SeedKind,
    opts: &SolverOptions,
) -> Result<SolutionRecord> {
    if seed.is_zero() {
        return Err(Error::DegenerateSeed("zero seed".into()));
    }
    let q = p.two_star;
    let mut w = normalize_cone(seed, q)?;
    let (mut j, mut t, mut g) = reduced_j_gradient(&w, p)?;
    let mut alpha = f64::NAN;
    let mut iterations = 0;
    for it in 0..opts.max_descent {
        iterations = it + 1;
        let d = sobolev_gradient(&g)?;
        let gg = g.dot(&d);
        if gg.sqrt() / t <= opts.descent_tol * (1.0 + j.abs()) {
            break;
        }
        if alpha.is_nan() {
            alpha = 0.05 * w.h1_norm() / gg.sqrt();
        } else {
            alpha *= 2.0;
        }
        let mut accepted = false;
        while alpha * gg.sqrt() > 1e-14 * w.h1_norm() {
            let trial = normalize_cone(&w.add_scaled(-alpha, &d), q)?;
            if let Ok((jt, tt, gt)) = reduced_j_gradient(&trial, p) {
                if jt <= j - 1e-4 * alpha * gg {
                    w = trial;
                    j = jt;
                    t = tt;
                    g = gt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (v, steps) = newton_polish(w.scaled(t), p, opts);
    accept(
        evaluate_record(v, p, seed_kind, iterations + steps),
        NehariKind::Minus,
        opts,
    )
}

/// Positive ground state at `(λ, 0)`, cached per λ in the spectral data.
pub fn ground_state(p: &Params, opts: &SolverOptions) -> Result<Field> {
    if let Some(u) = p.spectral.cached_ground_state(p.lambda) {
        return Ok(u);
    }
    let p0 = p.with(p.lambda, 0.0)?;
    let rec = minimize_on_nminus(&p0, &p.spectral.sobolev.minimizer, SeedKind::GroundStateRay, opts)?;
    p.spectral.store_ground_state(p.lambda, rec.v.clone());
    Ok(rec.v)
}

/// N⁻ solve seeded by the ground state ray.
pub fn solve_nminus_default(p: &Params, opts: &SolverOptions) -> Result<SolutionRecord> {
    let seed = ground_state(p, opts)?;
    minimize_on_nminus(p, &seed, SeedKind::GroundStateRay, opts)
}

/// N⁺ solve from the zero relaxation.
pub fn solve_nplus_default(p: &Params, opts: &SolverOptions) -> Result<SolutionRecord> {
    minimize_on_nplus(p, &Field::zeros(p.domain()), SeedKind::ZeroRelax, opts)
}

#[derive(Debug, Clone)]
pub struct BubbleSeed {
    pub epsilon: f64,
    pub direction: Vec<f64>,
    pub delta0: f64,
    pub field: Field,
}

/// Quintic ramp from 0 at `s = 0` to 1 at `s = 1`.
fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Radial cutoff: 0 below `δ₀`, 1 on `[2δ₀, 1/(2δ₀)]`, 0 beyond `1/δ₀`.
pub fn bubble_cutoff(r: f64, delta0: f64) -> f64 {
    let inner = smoothstep((r - delta0) / delta0);
    let (a, b) = (0.5 / delta0, 1.0 / delta0);
    let outer = smoothstep((b - r) / (b - a));
    inner * outer
}

/// Cut-off Talenti profile centred at `c`:
/// `ψ(|x|) (N(N−2)ε²)^{(N−2)/4} / (ε² + |x − c|²)^{(N−2)/2}`.
pub fn bubble_at(domain: &Arc<Domain>, epsilon: f64, center: &[f64], delta0: f64) -> Field {
    let n = domain.dimension() as f64;
    let amp = (n * (n - 2.0) * epsilon * epsilon).powf(0.25 * (n - 2.0));
    let e2 = epsilon * epsilon;
    Field::from_fn(domain, |x| {
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let psi = bubble_cutoff(r, delta0);
        if psi == 0.0 {
            return 0.0;
        }
        let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
        psi * amp / (e2 + d2).powf(0.5 * (n - 2.0))
    })
}

/// `U_{ε,ŷ}`: bubble at `(1−ε)ŷ` on an annulus.
pub fn make_bubble(epsilon: f64, direction: &[f64], domain: &Arc<Domain>, delta0: f64) -> Result<BubbleSeed> {
    if !matches!(domain.spec().shape, Shape::AnnulusD { .. }) {
        return Err(Error::Precondition("bubbles are placed on annular domains".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Argument(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    if direction.len() != domain.dimension() {
        return Err(Error::Argument("direction has the wrong dimension".into()));
    }
    let norm = direction.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Argument(format!("direction has norm {norm}, expected 1")));
    }
    if !(delta0 > 0.0 && delta0 < 0.5) {
        return Err(Error::Argument(format!("delta0 = {delta0} outside (0, 1/2)")));
    }
    let center: Vec<f64> = direction.iter().map(|a| (1.0 - epsilon) * a).collect();
    Ok(BubbleSeed {
        epsilon,
        direction: direction.to_vec(),
        delta0,
        field: bubble_at(domain, epsilon, &center, delta0),
    })
}

/// `±e_i` (and further coordinate-plane diagonals when more are asked for).
pub fn lattice_directions(dimension: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for a in 0..dimension {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; dimension];
            d[a] = s;
            out.push(d);
        }
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    'outer: for a in 0..dimension {
        for b in a + 1..dimension {
            for (sa, sb) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
                if out.len() >= count {
                    break 'outer;
                }
                let mut d = vec![0.0; dimension];
                d[a] = sa * r;
                d[b] = sb * r;
                out.push(d);
            }
        }
    }
    out.truncate(count);
    out
}

/// The composite seed `v⁺ + tU` placed on N⁻.
#[derive(Debug, Clone)]
pub struct CompositeSeed {
    pub direction: Vec<f64>,
    pub t: f64,
    /// `t⁻`-rescaled composite.
    pub field: Field,
    pub energy: f64,
    /// Whether `energy < m⁺ + S^{N/2}/N`.
    pub below_threshold: bool,
}

/// Finds `t` with `v⁺ + tU ∈ N⁻` by doubling and bisection on the ray ratio.
pub fn composite_seed(p: &Params, v_plus: &SolutionRecord, bubble: &BubbleSeed) -> Result<CompositeSeed> {
    let ratio = |t: f64| -> Result<f64> { Ok(ray_set_ratio(&v_plus.v.add_scaled(t, &bubble.field), p)?.0) };
    if !(ratio(0.0)? > 1.0) {
        return Err(Error::Seeding("v+ is not below N- on its ray".into()));
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while ratio(hi)? >= 1.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Seeding("composite ray never crosses N-".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let composite = v_plus.v.add_scaled(t, &bubble.field);
    let (e, tm) = ray_maximum(&composite, p)?;
    Ok(CompositeSeed {
        direction: bubble.direction.clone(),
        t,
        field: composite.scaled(tm),
        energy: e,
        below_threshold: e < v_plus.energy + p.bubble_level(),
    })
}

#[derive(Debug, Clone)]
pub struct MultistartReport {
    pub seeds: Vec<std::result::Result<CompositeSeed, String>>,
    /// Distinct converged records, in direction order.
    pub records: Vec<SolutionRecord>,
    /// Per direction: index into `records`, or the failure.
    pub outcomes: Vec<std::result::Result<usize, String>>,
}

/// Distance in H¹₀ below which two records are the same solution.
pub const DEDUP_DISTANCE: f64 = 1e-4;

/// Bubble-seeded N⁻ solves over `directions`, deduplicated.
pub fn multistart_nminus(
    p: &Params,
    v_plus: &SolutionRecord,
    directions: &[Vec<f64>],
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<MultistartReport> {
    let delta0 = match p.domain().spec().shape {
        Shape::AnnulusD { delta0 } => delta0,
        _ => return Err(Error::Precondition("multistart needs an annular domain".into())),
    };
    let runs: Vec<(Result<CompositeSeed>, Result<SolutionRecord>)> = directions
        .par_iter()
        .map(|dir| {
            let seed = make_bubble(epsilon, dir, p.domain(), delta0).and_then(|b| composite_seed(p, v_plus, &b));
            let rec = match &seed {
                Ok(s) => minimize_on_nminus(p, &s.field, SeedKind::Bubble { direction: dir.clone() }, opts),
                Err(e) => Err(Error::Seeding(e.to_string())),
            };
            (seed, rec)
        })
        .collect();
    if runs.iter().all(|(s, _)| s.is_err()) {
        return Err(Error::Seeding("no bubble seed admits an N- projection".into()));
    }
    let mut records: Vec<SolutionRecord> = Vec::new();
    let mut outcomes = Vec::new();
    let mut seeds = Vec::new();
    for (seed, rec) in runs {
        seeds.push(seed.map_err(|e| e.to_string()));
        match rec {
            Ok(r) => {
                let found = records
                    .iter()
                    .position(|o| o.v.add_scaled(-1.0, &r.v).h1_norm() < DEDUP_DISTANCE);
                match found {
                    Some(i) => outcomes.push(Ok(i)),
                    None => {
                        records.push(r);
                        outcomes.push(Ok(records.len() - 1));
                    }
                }
            }
            Err(e) => outcomes.push(Err(e.to_string())),
        }
    }
    Ok(MultistartReport {
        seeds,
        records,
        outcomes,
    })
}

/// Result of the lattice minimax search.
#[derive(Debug, Clone)]
pub enum MinimaxOutcome {
    Found {
        record: SolutionRecord,
        family_sup: f64,
        window: (f64, f64),
    },
    NotFound {
        reason: String,
        family_sup: f64,
        window: (f64, f64),
    },
}

impl MinimaxOutcome {
    pub fn record(&self) -> Option<&SolutionRecord> {
        match self {
            MinimaxOutcome::Found { record, .. } => Some(record),
            MinimaxOutcome::NotFound { .. } => None,
        }
    }
}

/// Mountain-pass search over a lattice family `x ↦ normalized bubble at x`
/// for `x` in the closed ball of radius `1−ε`; nodes on the sphere are
/// pinned, the rest are relaxed by reduced-functional descent on the current
/// maximizer. The maximizer is then polished by Newton and accepted only as
/// an N⁻ point with energy in `(m⁺ + S^{N/2}/N, m⁻ + S^{N/2}/N)`.
pub fn minimax_gamma(
    p: &Params,
    m_plus: f64,
    m_minus: f64,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<MinimaxOutcome> {
    const RADII: usize = 3;
    const SWEEPS: usize = 12;
    const STEPS_PER_SWEEP: usize = 5;
    let delta0 = match p.domain().spec().shape {
        Shape::AnnulusD { delta0 } => delta0,
        _ => return Err(Error::Precondition("minimax family needs an annular domain".into())),
    };
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Argument(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    let dom = p.domain();
    let q = p.two_star;
    let window = (m_plus + p.bubble_level(), m_minus + p.bubble_level());
    let dirs = lattice_directions(dom.dimension(), 2 * dom.dimension());
    // (field, pinned)
    let mut nodes: Vec<(Field, bool)> = vec![(bubble_at(dom, epsilon, &vec![0.0; dom.dimension()], delta0), false)];
    for k in 1..=RADII {
        let r = (1.0 - epsilon) * k as f64 / RADII as f64;
        for d in &dirs {
            let c: Vec<f64> = d.iter().map(|a| r * a).collect();
            nodes.push((bubble_at(dom, epsilon, &c, delta0), k == RADII));
        }
    }
    let mut family: Vec<(Field, bool, f64)> = nodes
        .into_par_iter()
        .filter_map(|(f, pinned)| {
            let w = normalize_cone(&f, q).ok()?;
            let (j, _) = ray_maximum(&w, p).ok()?;
            Some((w, pinned, j))
        })
        .collect();
    if family.iter().all(|(_, pinned, _)| *pinned) {
        return Ok(MinimaxOutcome::NotFound {
            reason: "no interior family node admits an N- projection".into(),
            family_sup: f64::NAN,
            window,
        });
    }
    let argmax = |fam: &[(Field, bool, f64)]| {
        fam.iter()
            .enumerate()
            .max_by(|a, b| a.1 .2.total_cmp(&b.1 .2))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };
    for _ in 0..SWEEPS {
        let i = argmax(&family);
        if family[i].1 {
            break;
        }
        let mut w = family[i].0.clone();
        let mut j = family[i].2;
        let mut alpha = f64::NAN;
        for _ in 0..STEPS_PER_SWEEP {
            let Ok((_, _, g)) = reduced_j_gradient(&w, p) else {
                break;
            };
            let d = sobolev_gradient(&g)?;
            let gg = g.dot(&d);
            if alpha.is_nan() {
                alpha = 0.05 * w.h1_norm() / gg.sqrt();
            }
            let mut moved = false;
            while alpha * gg.sqrt() > 1e-14 * w.h1_norm() {
                if let Ok(trial) = normalize_cone(&w.add_scaled(-alpha, &d), q) {
                    if let Ok((jt, _)) = ray_maximum(&trial, p) {
                        if jt <= j - 1e-4 * alpha * gg {
                            w = trial;
                            j = jt;
                            moved = true;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        family[i].0 = w;
        family[i].2 = j;
    }
    let i = argmax(&family);
    let family_sup = family[i].2;
    let (_, t) = ray_maximum(&family[i].0, p)?;
    let (v, steps) = newton_polish(family[i].0.scaled(t), p, opts);
    let rec = evaluate_record(v, p, SeedKind::Minimax, steps);
    let not_found = |reason: String| MinimaxOutcome::NotFound {
        reason,
        family_sup,
        window,
    };
    Ok(match accept(rec, NehariKind::Minus, opts) {
        Err(e) => not_found(format!("polish rejected: {e}")),
        Ok(rec) if !(rec.energy > window.0 && rec.energy < window.1) => not_found(format!(
            "polished energy {} outside ({}, {})",
            rec.energy, window.0, window.1
        )),
        Ok(record) => MinimaxOutcome::Found {
            record,
            family_sup,
            window,
        },
    })
}

/// One point of a μ-continuation branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub mu: f64,
    pub energy_plus: f64,
    pub energy_minus: Option<f64>,
    pub converged_plus: bool,
    pub converged_minus: bool,
    pub certified_plus: bool,
    pub certified_minus: bool,
}

/// Continuation estimate of μ*(λ) with the branch it followed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceRow {
    pub lambda: f64,
    pub mu_star: f64,
    pub branch: Vec<BranchPoint>,
    pub solves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceBoundary {
    pub lambda_grid: Vec<f64>,
    pub mu_star_estimates: Vec<f64>,
    pub branch_data: Vec<Vec<BranchPoint>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub mu_start: f64,
    /// Also solve for v⁻ at every successful μ.
    pub track_minus: bool,
    pub max_solves: usize,
    pub solver: SolverOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            mu_start: 1e-3,
            track_minus: true,
            max_solves: 200,
            solver: SolverOptions::default(),
        }
    }
}

/// Continuation in μ along the N⁺ branch, warm-started from the previous
/// solution. The step doubles after a success and halves after a failure;
/// the search stops once three consecutive failures have pushed the step
/// below `1e-6·μ`. Returns the last μ with a certified N⁺ record.
pub fn estimate_mu_star(base: &Params, lambda: f64, opts: &ContinuationOptions) -> Result<ExistenceRow> {
    let lambda1 = base.spectral.lambda1;
    if !(lambda > 0.0 && lambda < lambda1) {
        return Err(Error::Precondition(format!(
            "lambda = {lambda} outside (0, lambda1 = {lambda1})"
        )));
    }
    let mut branch = Vec::new();
    let mut last_mu = 0.0;
    let mut last_v: Option<Field> = None;
    let mut last_minus: Option<Field> = None;
    let mut step = opts.mu_start;
    let mut failures = 0;
    let mut solves = 0;
    while solves < opts.max_solves {
        let mu = last_mu + step;
        solves += 1;
        let p = base.with(lambda, mu)?;
        let (seed, kind) = match &last_v {
            Some(v) => (v.clone(), SeedKind::Continuation),
            None => (Field::zeros(p.domain()), SeedKind::ZeroRelax),
        };
        match minimize_on_nplus(&p, &seed, kind, &opts.solver) {
            Ok(rec) => {
                let minus = if opts.track_minus {
                    let seed = match &last_minus {
                        Some(v) => Ok(v.clone()),
                        None => ground_state(&p, &opts.solver),
                    };
                    seed.and_then(|s| minimize_on_nminus(&p, &s, SeedKind::Continuation, &opts.solver))
                        .ok()
                } else {
                    None
                };
                branch.push(BranchPoint {
                    mu,
                    energy_plus: rec.energy,
                    energy_minus: minus.as_ref().map(|r| r.energy),
                    converged_plus: true,
                    converged_minus: minus.is_some(),
                    certified_plus: certify_solution(&rec, &p, None).overall,
                    certified_minus: minus
                        .as_ref()
                        .is_some_and(|m| certify_solution(m, &p, Some(rec.energy)).overall),
                });
                if let Some(m) = minus {
                    last_minus = Some(m.v);
                }
                last_v = Some(rec.v);
                last_mu = mu;
                failures = 0;
                step *= 2.0;
            }
            Err(_) => {
                failures += 1;
                step *= 0.5;
                if failures >= 3 && step < 1e-6 * last_mu.max(opts.mu_start) {
                    break;
                }
            }
        }
    }
    if last_mu == 0.0 {
        return Err(Error::Incomplete(format!(
            "no certified N+ record at lambda = {lambda}"
        )));
    }
    Ok(ExistenceRow {
        lambda,
        mu_star: last_mu,
        branch,
        solves,
    })
}

/// [`estimate_mu_star`] over a λ grid, in parallel.
pub fn estimate_existence_boundary(
    base: &Params,
    lambdas: &[f64],
    opts: &ContinuationOptions,
) -> Result<ExistenceBoundary> {
    let rows: Vec<ExistenceRow> = lambdas
        .par_iter()
        .map(|l| estimate_mu_star(base, *l, opts))
        .collect::<Result<_>>()?;
    Ok(ExistenceBoundary {
        lambda_grid: lambdas.to_vec(),
        mu_star_estimates: rows.iter().map(|r| r.mu_star).collect(),
        branch_data: rows.into_iter().map(|r| r.branch).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::testutil::unit_box_setup;
    use crate::grid::{build_domain, DomainSpec, SpectralData};
    use crate::lift::{solve_lift, BoundaryData};

    fn box_params(res: usize, lam_frac: f64, mu: f64) -> Params {
        let (spec, lift) = unit_box_setup(3, res);
        Params::new(lam_frac * spec.lambda1, mu, spec, lift).unwrap()
    }

    #[test]
    fn nplus_and_nminus_on_small_box() {
        let p = box_params(11, 0.5, 0.01);
        let opts = SolverOptions::default();
        let plus = solve_nplus_default(&p, &opts).unwrap();
        assert!(plus.energy < 0.0);
        assert!(plus.energy <= energy(&Field::zeros(p.domain()), &p));
        assert_eq!(plus.nehari_class.kind, NehariKind::Plus);
        let minus = solve_nminus_default(&p, &opts).unwrap();
        assert!(minus.energy > 0.0);
        assert!(minus.relative_residual() < 1e-7);
        assert!(minus.energy < plus.energy + p.bubble_level());
        // warm restart reproduces the point
        let again = minimize_on_nplus(&p, &plus.v, SeedKind::Warm, &opts).unwrap();
        assert!(again.v.add_scaled(-1.0, &plus.v).h1_norm() < 1e-10 * (1.0 + plus.v.h1_norm()));
    }

    #[test]
    fn nplus_needs_positive_mu() {
        let p = box_params(7, 0.5, 0.0);
        assert!(matches!(
            solve_nplus_default(&p, &SolverOptions::default()),
            Err(Error::BranchAbsent)
        ));
    }

    #[test]
    fn bubble_shape() {
        let dom = build_domain(DomainSpec::annulus(0.45, 3, 15)).unwrap();
        let y = [0.0, 0.0, 1.0];
        let b = make_bubble(0.2, &y, &dom, 0.45).unwrap();
        assert!(b.field.min() >= 0.0, "{}", b.field.min());
        let peak = b
            .field
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let x = dom.coord(peak);
        assert!(x[2] > 0.5 && x[0].abs() < 0.3);
        for (i, v) in b.field.values().iter().enumerate() {
            let r = dom.coord(i).iter().map(|a| a * a).sum::<f64>().sqrt();
            if r <= 0.45 || r >= 1.0 / 0.45 {
                assert_eq!(*v, 0.0);
            }
        }
        let neg = make_bubble(0.2, &[0.0, 0.0, -1.0], &dom, 0.45).unwrap();
        let (spec, lift) = (
            SpectralData::compute(&dom).unwrap(),
            Arc::new(solve_lift(&BoundaryData::Constant(1.0), &dom).unwrap()),
        );
        let p = Params::new(0.1 * spec.lambda1, 0.005, spec, lift).unwrap();
        let (e1, e2) = (energy(&b.field, &p), energy(&neg.field, &p));
        assert!((e1 - e2).abs() < 1e-8 * (1.0 + e1.abs()));
        assert!(make_bubble(1.2, &y, &dom, 0.45).is_err());
        assert!(make_bubble(0.2, &[0.0, 0.0, 2.0], &dom, 0.45).is_err());
        let boxed = build_domain(DomainSpec::unit_box(3, 7)).unwrap();
        assert!(make_bubble(0.2, &y, &boxed, 0.45).is_err());
    }

    #[test]
    fn cutoff_ramps() {
        let d = 0.3;
        assert_eq!(bubble_cutoff(0.2, d), 0.0);
        assert_eq!(bubble_cutoff(0.6, d), 1.0);
        assert_eq!(bubble_cutoff(1.0, d), 1.0);
        assert_eq!(bubble_cutoff(1.0 / d, d), 0.0);
        let mut prev = 0.0;
        for k in 0..=100 {
            let r = d + d * k as f64 / 100.0;
            let c = bubble_cutoff(r, d);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn directions_are_unit() {
        let dirs = lattice_directions(3, 10);
        assert_eq!(dirs.len(), 10);
        for d in dirs {
            assert!((d.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }
}
