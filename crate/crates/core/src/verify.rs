//! Certificates: numerical checks of the computable statements about a
//! parameter cell and its solutions.
//!
//! A [`Certificate`] is a list of named checks with both sides of the tested
//! relation, so a failing check says by how much it failed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{energy, hessian_apply, Params};
use crate::grid::{centered_bump, Field};
use crate::nehari::{classify_within, NehariKind};
use crate::solve::{residual_norm, SeedKind, SolutionRecord};

/// Residual acceptance: `‖∇I(v)‖₂ < RESIDUAL_TOL·(1+‖v‖)`.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Required margin of strict inequalities.
pub const STRICT_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The relation tested, in terms of `lhs` and `rhs`.
    pub statement: String,
    pub status: CheckStatus,
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: &str, statement: &str, status: CheckStatus, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            statement: statement.to_string(),
            status,
            passed: status == CheckStatus::Pass,
            lhs,
            rhs,
            tolerance,
        }
    }

    /// `lhs < rhs - tol`.
    pub fn less(name: &str, statement: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let ok = lhs < rhs - tol;
        Self::new(name, statement, status_of(ok), lhs, rhs, tol)
    }

    /// `lhs > rhs + tol`.
    pub fn greater(name: &str, statement: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let ok = lhs > rhs + tol;
        Self::new(name, statement, status_of(ok), lhs, rhs, tol)
    }

    /// `lhs >= rhs - tol`.
    pub fn at_least(name: &str, statement: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let ok = lhs >= rhs - tol;
        Self::new(name, statement, status_of(ok), lhs, rhs, tol)
    }

    /// `lhs <= rhs + tol`.
    pub fn at_most(name: &str, statement: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let ok = lhs <= rhs + tol;
        Self::new(name, statement, status_of(ok), lhs, rhs, tol)
    }

    pub fn inconclusive(name: &str, statement: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self::new(name, statement, CheckStatus::Inconclusive, lhs, rhs, tol)
    }
}

fn status_of(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

/// Where an energy sits relative to an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// "below", "inside" or "above".
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub checks: Vec<Check>,
    pub overall: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub placements: Vec<Placement>,
}

impl Certificate {
    pub fn from_checks(checks: Vec<Check>) -> Self {
        let overall = !checks.is_empty() && checks.iter().all(|c| c.passed);
        Self {
            checks,
            overall,
            placements: Vec::new(),
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Plain-text table, one line per check.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Inconclusive => "INCONCLUSIVE",
            };
            s.push_str(&format!(
                "{status:<12} {:<34} lhs = {:<24e} rhs = {:<24e} tol = {:e}   [{}]\n",
                c.name, c.lhs, c.rhs, c.tolerance, c.statement
            ));
        }
        for pl in &self.placements {
            s.push_str(&format!(
                "{:<12} {:<34} value = {:e} in ({:e}, {:e})\n",
                pl.location, pl.name, pl.value, pl.lower, pl.upper
            ));
        }
        s.push_str(if self.overall {
            "overall: PASS\n"
        } else {
            "overall: FAIL\n"
        });
        s
    }
}

/// Whether a record came from minimizing over N⁺ or N⁻, as opposed to a
/// bubble or minimax search aiming at higher critical points.
pub fn claims_minimum(seed: &SeedKind) -> bool {
    !matches!(seed, SeedKind::Bubble { .. } | SeedKind::Minimax)
}

/// Residual, positivity, Nehari class, sign pattern and (when `m_plus` is
/// known and the record claims to minimize) the single-bubble gap for one
/// record. Everything is recomputed
/// from `rec.v`; stored fields are only compared.
pub fn certify_solution(rec: &SolutionRecord, p: &Params, m_plus: Option<f64>) -> Certificate {
    let v = &rec.v;
    let mut checks = Vec::new();
    checks.push(Check::at_most(
        "parameters",
        "|record (lambda, mu) - cell (lambda, mu)| = 0",
        (rec.lambda - p.lambda).abs() + (rec.mu - p.mu).abs(),
        0.0,
        0.0,
    ));
    if !v.same_domain(p.phi()) {
        checks.push(Check::new(
            "domain",
            "record lives on the cell grid",
            CheckStatus::Fail,
            0.0,
            0.0,
            0.0,
        ));
        return Certificate::from_checks(checks);
    }
    let norm = v.h1_norm();
    let res = residual_norm(v, p);
    checks.push(Check::less(
        "pde residual",
        "||-Lap v - lambda u - u^(2*-1)||_2 < 1e-7 (1 + ||v||)",
        res,
        RESIDUAL_TOL * (1.0 + norm),
        0.0,
    ));
    let u = p.compose(v);
    checks.push(Check::greater(
        "positivity",
        "min over nodes of u = v + mu phi > 0",
        u.min(),
        0.0,
        0.0,
    ));
    let tol_root = (1e-9 * (1.0 + v.h1_norm_sq())).max(10.0 * res * v.l2_norm_sq().sqrt());
    let class = classify_within(v, p, tol_root);
    let e = energy(v, p);
    checks.push(Check::at_most(
        "stored energy",
        "|stored energy - I(v)| <= 1e-10 (1 + |I(v)|)",
        (rec.energy - e).abs(),
        0.0,
        1e-10 * (1.0 + e.abs()),
    ));
    match class.kind {
        NehariKind::Plus => {
            checks.push(Check::greater(
                "nehari class",
                "T''(1) > tol_class with |T'(1)| <= tol_root (N+)",
                class.t_second_deriv,
                0.0,
                class.tolerance,
            ));
            let e0 = energy(&Field::zeros(v.domain()), p);
            checks.push(Check::at_most(
                "energy below zero ray",
                "I(v) <= I(0)",
                e,
                e0,
                STRICT_MARGIN,
            ));
            checks.push(Check::less("sign pattern", "I(v) < 0 on N+", e, 0.0, STRICT_MARGIN));
        }
        NehariKind::Minus => {
            checks.push(Check::less(
                "nehari class",
                "T''(1) < -tol_class with |T'(1)| <= tol_root (N-)",
                class.t_second_deriv,
                0.0,
                class.tolerance,
            ));
            checks.push(Check::greater("sign pattern", "I(v) > 0 on N-", e, 0.0, STRICT_MARGIN));
            if let Some(mp) = m_plus.filter(|_| claims_minimum(&rec.seed)) {
                checks.push(Check::less(
                    "energy gap",
                    "I(v) < m+ + S^(N/2)/N",
                    e,
                    mp + p.bubble_level(),
                    STRICT_MARGIN,
                ));
            }
        }
        _ => {
            checks.push(Check::new(
                "nehari class",
                "record lies on N+ or N-",
                CheckStatus::Fail,
                class.t_second_deriv,
                class.t_first_deriv,
                tol_root,
            ));
        }
    }
    Certificate::from_checks(checks)
}

/// Probe fields for the nonexistence identity: zero, `e₁`, the Sobolev
/// minimizer, `φ` and a centred bump.
pub fn nonexistence_probes(p: &Params) -> Vec<(String, Field)> {
    let dom = p.domain();
    let mut out = vec![
        ("zero".to_string(), Field::zeros(dom)),
        ("e1".to_string(), p.spectral.e1.clone()),
        ("sobolev minimizer".to_string(), p.spectral.sobolev.minimizer.clone()),
        ("phi".to_string(), p.phi().clone()),
    ];
    let bump = centered_bump(dom);
    if !bump.is_zero() {
        out.push(("bump".to_string(), bump));
    }
    out
}

/// Margin of the `e₁`-pairing identity for `v ≥ 0`:
/// `∫(λu + u^{2*-1})e₁ − ∫(−Δv)e₁`, with `u = v + μφ`.
pub fn pairing_margin(v: &Field, p: &Params) -> f64 {
    let e1 = &p.spectral.e1;
    let lap = crate::grid::apply_laplacian(v);
    let q = p.two_star;
    let u = p.compose(v);
    let rhs: f64 = e1.dot(&u.scaled(p.lambda)) + e1.dot(&u.signed_pow(q));
    rhs - lap.dot(e1)
}

/// A solution with `λ ≥ λ₁` would make the pairing margin vanish; for
/// `v ≥ 0` it is at least `λμ∫φe₁`. Each probe gets one check; without
/// probes only the a-priori bound is reported.
pub fn nonexistence_certificate(p: &Params, probes: &[(String, Field)]) -> Result<Certificate> {
    let lambda1 = p.spectral.lambda1;
    if p.lambda < lambda1 {
        return Err(Error::Precondition(format!(
            "lambda = {} is below lambda1 = {lambda1}",
            p.lambda
        )));
    }
    let e1 = &p.spectral.e1;
    let bound = p.lambda * p.mu * p.phi().dot(e1);
    let mut checks = Vec::new();
    if bound > STRICT_MARGIN {
        checks.push(Check::greater(
            "a-priori margin",
            "lambda mu int(phi e1) > 0",
            bound,
            0.0,
            STRICT_MARGIN,
        ));
    } else {
        checks.push(Check::inconclusive(
            "a-priori margin",
            "lambda mu int(phi e1) > 0 (degenerate at mu = 0)",
            bound,
            0.0,
            STRICT_MARGIN,
        ));
    }
    for (name, v) in probes {
        let margin = pairing_margin(v, p);
        let lap = crate::grid::apply_laplacian(v).dot(e1);
        // discrete self-adjointness: ∫(−Δv)e₁ = λ₁∫v e₁ up to the eigen residual
        let tol = 1e-9 * (1.0 + lap.abs() + margin.abs());
        let label = format!("pairing margin [{name}]");
        if v.min() < 0.0 {
            checks.push(Check::inconclusive(
                &label,
                "probe must be nonnegative",
                margin,
                bound,
                tol,
            ));
        } else if bound <= STRICT_MARGIN && margin.abs() <= tol {
            checks.push(Check::inconclusive(
                &label,
                "int(lambda u + u^(2*-1)) e1 - int(-Lap v) e1 >= lambda mu int(phi e1) (equality case)",
                margin,
                bound,
                tol,
            ));
        } else {
            checks.push(Check::at_least(
                &label,
                "int(lambda u + u^(2*-1)) e1 - int(-Lap v) e1 >= lambda mu int(phi e1)",
                margin,
                bound,
                tol,
            ));
        }
    }
    Ok(Certificate::from_checks(checks))
}

/// Radius of the strict-convexity ball,
/// `((½(1−λ/λ₁)S) / ((2*−1)2^{2*−2}S^{(2*−2)/2}))^{1/(2*−2)}`, with the
/// discrete `S` and `λ₁`.
pub fn convexity_radius(p: &Params) -> f64 {
    let q = p.two_star;
    let s = p.spectral.sobolev_s;
    let num = 0.5 * (1.0 - p.lambda / p.spectral.lambda1) * s;
    let den = (q - 1.0) * 2f64.powf(q - 2.0) * s.powf(0.5 * (q - 2.0));
    (num / den).powf(1.0 / (q - 2.0))
}

/// Random samples `u` with `‖u‖ < r_λ`, `h ≠ 0`: the Hessian form
/// `I''(u)(h, h)` must be positive. `v_plus`, if given, must lie in the ball.
pub fn convexity_ball_check(p: &Params, trials: usize, seed: u64, v_plus: Option<&Field>) -> Result<Certificate> {
    if p.lambda >= p.spectral.lambda1 {
        return Err(Error::Precondition("convexity ball needs lambda < lambda1".into()));
    }
    let r = convexity_radius(p);
    let dom = p.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let concentrated = p.spectral.sobolev.minimizer.clone();
    let mut worst = f64::INFINITY;
    let mut worst_ratio = f64::INFINITY;
    for k in 0..trials {
        // alternate rough, smooth and concentrated directions
        let dir = match k % 3 {
            0 => Field::from_fn(dom, |_| rng.gen_range(-1.0..1.0)),
            1 => {
                let c: Vec<f64> = (0..dom.dimension()).map(|_| rng.gen_range(-0.3..0.3)).collect();
                let s = rng.gen_range(0.05..0.4);
                Field::from_fn(dom, |x| {
                    let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                    (-d2 / (s * s)).exp()
                })
            }
            _ => concentrated.scaled(if rng.gen_bool(0.5) { 1.0 } else { -1.0 }),
        };
        let radius = r * rng.gen_range(0.0..1.0f64).powf(0.25);
        let u = dir.scaled(radius / dir.h1_norm());
        let h = if k % 4 == 3 {
            u.clone()
        } else {
            let f = Field::from_fn(dom, |_| rng.gen_range(-1.0..1.0));
            f.add_scaled(rng.gen_range(0.0..2.0), &dir)
        };
        if h.is_zero() {
            continue;
        }
        let form = hessian_apply(&u, &h, p).dot(&h);
        worst = worst.min(form);
        worst_ratio = worst_ratio.min(form / h.h1_norm_sq());
    }
    let mut checks = vec![Check::greater(
        "convexity ball",
        "min over samples in B(0, r) of I''(u)(h, h) > 0",
        worst,
        0.0,
        0.0,
    )];
    checks.push(Check::greater(
        "convexity ball (normalized)",
        "min over samples of I''(u)(h, h) / ||h||^2 > 0",
        worst_ratio,
        0.0,
        0.0,
    ));
    if let Some(v) = v_plus {
        checks.push(Check::less(
            "v+ inside ball",
            "||v+|| < r_lambda",
            v.h1_norm(),
            r,
            STRICT_MARGIN,
        ));
    }
    Ok(Certificate::from_checks(checks))
}

/// `m⁺`, `m⁻` and the compactness thresholds for a cell; every record is
/// placed relative to the window `(m⁺ + S^{N/2}/N, m⁻ + S^{N/2}/N)`.
pub fn threshold_report(p: &Params, records: &[SolutionRecord]) -> Result<Certificate> {
    let best = |kind: NehariKind| {
        records
            .iter()
            .filter(|r| r.nehari_class.kind == kind && r.seed != SeedKind::Minimax)
            .map(|r| r.energy)
            .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.min(e))))
    };
    let m_plus = best(NehariKind::Plus).ok_or_else(|| Error::Incomplete("no N+ record".into()))?;
    let m_minus = best(NehariKind::Minus).ok_or_else(|| Error::Incomplete("no N- record".into()))?;
    let level = p.bubble_level();
    let e0 = energy(&Field::zeros(p.domain()), p);
    let mut checks = vec![
        Check::at_most("m+ below zero ray", "m+ <= I(0)", m_plus, e0, STRICT_MARGIN),
        Check::less("I(0) negative", "I(0) < 0", e0, 0.0, 0.0),
        Check::greater("m- positive", "m- > 0", m_minus, 0.0, STRICT_MARGIN),
        Check::less(
            "energy gap",
            "m- < m+ + S^(N/2)/N",
            m_minus,
            m_plus + level,
            STRICT_MARGIN,
        ),
        Check::greater("bubble level", "S^(N/2)/N > 0", level, 0.0, 0.0),
    ];
    let window = (m_plus + level, m_minus + level);
    for r in records.iter().filter(|r| r.seed == SeedKind::Minimax) {
        checks.push(Check::greater(
            "minimax above window floor",
            "gamma > m+ + S^(N/2)/N",
            r.energy,
            window.0,
            STRICT_MARGIN,
        ));
        checks.push(Check::less(
            "minimax below window ceiling",
            "gamma < m- + S^(N/2)/N",
            r.energy,
            window.1,
            STRICT_MARGIN,
        ));
    }
    let mut cert = Certificate::from_checks(checks);
    cert.placements = records
        .iter()
        .enumerate()
        .map(|(i, r)| Placement {
            name: format!("record {i} ({})", r.nehari_class.kind),
            value: r.energy,
            lower: window.0,
            upper: window.1,
            location: if r.energy <= window.0 {
                "below"
            } else if r.energy < window.1 {
                "inside"
            } else {
                "above"
            }
            .to_string(),
        })
        .collect();
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::testutil::unit_box_setup;
    use crate::solve::{evaluate_record, solve_nminus_default, solve_nplus_default, SolverOptions};

    fn cell(lam_frac: f64, mu: f64) -> Params {
        let (spec, lift) = unit_box_setup(3, 9);
        Params::new(lam_frac * spec.lambda1, mu, spec, lift).unwrap()
    }

    #[test]
    fn certified_pair_and_corruption() {
        let p = cell(0.5, 0.01);
        let opts = SolverOptions::default();
        let plus = solve_nplus_default(&p, &opts).unwrap();
        let minus = solve_nminus_default(&p, &opts).unwrap();
        let c = certify_solution(&plus, &p, None);
        assert!(c.overall, "{}", c.to_table());
        assert!(c.check("sign pattern").unwrap().lhs < 0.0);
        let c = certify_solution(&minus, &p, Some(plus.energy));
        assert!(c.overall, "{}", c.to_table());
        let bad = evaluate_record(minus.v.scaled(1.1), &p, SeedKind::Warm, 0);
        let c = certify_solution(&bad, &p, Some(plus.energy));
        assert!(!c.check("pde residual").unwrap().passed);
        assert!(!c.overall);
        let t = threshold_report(&p, &[plus.clone(), minus]).unwrap();
        assert!(t.overall, "{}", t.to_table());
        assert!(matches!(threshold_report(&p, &[plus]), Err(Error::Incomplete(_))));
    }

    #[test]
    fn ground_state_at_zero_parameters() {
        let p = cell(0.0, 0.0);
        let rec = solve_nminus_default(&p, &SolverOptions::default()).unwrap();
        let c = certify_solution(&rec, &p, None);
        assert!(c.overall, "{}", c.to_table());
        assert_eq!(rec.nehari_class.kind, NehariKind::Minus);
    }

    #[test]
    fn nonexistence_margins() {
        for frac in [1.0, 1.5] {
            let p = cell(frac, 0.01);
            let probes = nonexistence_probes(&p);
            let c = nonexistence_certificate(&p, &probes).unwrap();
            assert!(c.overall, "{}", c.to_table());
            let bound = c.check("a-priori margin").unwrap().lhs;
            assert!(bound > 0.0);
            // margin grows with μ at fixed probe
            let q = p.with(p.lambda, 0.02).unwrap();
            assert!(pairing_margin(&p.spectral.e1, &q) > pairing_margin(&p.spectral.e1, &p));
        }
        let p = cell(1.0, 0.0);
        let c = nonexistence_certificate(&p, &[("zero".into(), Field::zeros(p.domain()))]).unwrap();
        assert!(c.checks.iter().all(|c| c.status == CheckStatus::Inconclusive));
        assert!(nonexistence_certificate(&cell(0.5, 0.01), &[]).is_err());
    }

    #[test]
    fn convexity_ball() {
        let p = cell(0.5, 0.01);
        let plus = solve_nplus_default(&p, &SolverOptions::default()).unwrap();
        let c = convexity_ball_check(&p, 60, 7, Some(&plus.v)).unwrap();
        assert!(c.overall, "{}", c.to_table());
        // Along the ground state ray the form changes sign at 5^{-1/4}‖U‖,
        // which is 32^{1/4}·S·r (about 10 r here); probe at 15 r.
        let p0 = cell(0.0, 0.0);
        let gs = solve_nminus_default(&p0, &SolverOptions::default()).unwrap().v;
        let u = gs.scaled(15.0 * convexity_radius(&p0) / gs.h1_norm());
        let form = hessian_apply(&u, &u, &p0).dot(&u);
        assert!(form < 0.0, "{form} {} {}", gs.h1_norm(), convexity_radius(&p0));
        let det = convexity_ball_check(&p, 30, 7, None).unwrap();
        assert_eq!(det, convexity_ball_check(&p, 30, 7, None).unwrap());
    }
}
