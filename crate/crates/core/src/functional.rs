//! Energy of the shifted problem and its fibering maps.
//!
//! For `u = v + μφ`,
//!
//! ```text
//! I(v) = ½‖v‖² − (λ/2)‖u‖₂² − (1/2*)‖u‖_{2*}^{2*}
//! ```
//!
//! and the fibering map along a ray is `T_v(t) = I(tv)`. All integrals use the
//! grid quadrature, so `T'(1) = <∇I(v), v>` holds to rounding.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Domain, Field, SpectralData};
use crate::lift::HarmonicLift;
use crate::linalg;
use crate::power::{abs_pow, signed_pow};

/// Parameters `(λ, μ)` together with the shared spectral data and lift.
#[derive(Debug, Clone)]
pub struct Params {
    pub lambda: f64,
    pub mu: f64,
    pub two_star: f64,
    pub spectral: Arc<SpectralData>,
    pub lift: Arc<HarmonicLift>,
    shift: Vec<f64>,
}

impl Params {
    pub fn new(lambda: f64, mu: f64, spectral: Arc<SpectralData>, lift: Arc<HarmonicLift>) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Argument(format!("lambda = {lambda} must be finite and >= 0")));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::Argument(format!("mu = {mu} must be finite and >= 0")));
        }
        if !Arc::ptr_eq(spectral.domain(), lift.domain()) {
            return Err(Error::DomainMismatch);
        }
        let two_star = spectral.domain().critical_exponent();
        let shift = lift.phi.values().iter().map(|p| mu * p).collect();
        Ok(Self {
            lambda,
            mu,
            two_star,
            spectral,
            lift,
            shift,
        })
    }

    /// Same domain and lift, different `(λ, μ)`.
    pub fn with(&self, lambda: f64, mu: f64) -> Result<Self> {
        Self::new(lambda, mu, Arc::clone(&self.spectral), Arc::clone(&self.lift))
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.spectral.domain()
    }

    pub fn dimension(&self) -> usize {
        self.domain().dimension()
    }

    pub fn phi(&self) -> &Field {
        &self.lift.phi
    }

    /// Nodal values of `μφ`.
    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// `(1/N) S^{N/2}` with the discrete Sobolev constant.
    pub fn bubble_level(&self) -> f64 {
        self.spectral.bubble_level()
    }

    /// `u = v + μφ`.
    pub fn compose(&self, v: &Field) -> Field {
        Field::from_raw(
            v.domain(),
            v.values().iter().zip(&self.shift).map(|(a, b)| a + b).collect(),
        )
    }

    /// Operational admissibility of `(λ, μ)`: on every probe ray the `t0`
    /// numerator is positive and `T'(t0) > 0`.
    pub fn admissibility(&self) -> Admissibility {
        let dom = self.domain();
        let mut probes = vec![
            ("e1", self.spectral.e1.clone()),
            ("-e1", self.spectral.e1.scaled(-1.0)),
            ("sobolev_minimizer", self.spectral.sobolev.minimizer.clone()),
        ];
        if self.mu > 0.0 {
            probes.push(("phi", self.lift.phi.clone()));
        }
        let bump = crate::grid::centered_bump(dom);
        if !bump.is_zero() {
            probes.push(("bump", bump));
        }
        let reports = probes
            .into_iter()
            .map(|(name, v)| {
                let prof = FiberingProfile::new(&v, self);
                match prof.and_then(|p| p.t0().map(|t0| (p, t0))) {
                    Ok((p, t0)) => ProbeReport {
                        name: name.to_string(),
                        numerator: p.t0_numerator(),
                        t0: Some(t0),
                        slope_at_t0: Some(p.eval(t0).first),
                    },
                    Err(Error::MuTooLarge { numerator }) => ProbeReport {
                        name: name.to_string(),
                        numerator,
                        t0: None,
                        slope_at_t0: None,
                    },
                    Err(_) => ProbeReport {
                        name: name.to_string(),
                        numerator: f64::NAN,
                        t0: None,
                        slope_at_t0: None,
                    },
                }
            })
            .collect();
        Admissibility { probes: reports }
    }

    pub fn check_admissible(&self) -> Result<()> {
        let adm = self.admissibility();
        if let Some(bad) = adm.probes.iter().find(|p| !(p.numerator > 0.0)) {
            return Err(Error::MuTooLarge {
                numerator: bad.numerator,
            });
        }
        if let Some(bad) = adm.probes.iter().find(|p| !(p.slope_at_t0.unwrap_or(f64::NAN) > 0.0)) {
            return Err(Error::MuBeyondRange(format!(
                "T'(t0) = {:e} on probe ray '{}'",
                bad.slope_at_t0.unwrap_or(f64::NAN),
                bad.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub name: String,
    pub numerator: f64,
    pub t0: Option<f64>,
    pub slope_at_t0: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Admissibility {
    pub probes: Vec<ProbeReport>,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.probes
            .iter()
            .all(|p| p.numerator > 0.0 && p.slope_at_t0.is_some_and(|s| s > 0.0))
    }
}

/// `I(v)`.
pub fn energy(v: &Field, p: &Params) -> f64 {
    let dom = v.domain();
    let q = p.two_star;
    let mut quad = 0.0;
    let mut crit = 0.0;
    for (vi, si) in v.values().iter().zip(p.shift()) {
        let u = vi + si;
        quad += u * u;
        crit += abs_pow(u, q);
    }
    let w = dom.weight();
    0.5 * v.h1_norm_sq() - 0.5 * p.lambda * w * quad - w * crit / q
}

/// L²-representation of `I'(v)`: `-Δv − λu − |u|^{2*-2}u`.
pub fn gradient(v: &Field, p: &Params) -> Field {
    let dom = v.domain();
    let mut out = vec![0.0; v.len()];
    dom.laplacian_into(v.values(), &mut out);
    let q = p.two_star;
    for ((o, vi), si) in out.iter_mut().zip(v.values()).zip(p.shift()) {
        let u = vi + si;
        *o -= p.lambda * u + signed_pow(u, q - 1.0);
    }
    Field::from_raw(dom, out)
}

/// `I''(v) h = -Δh − λh − (2*−1)|u|^{2*-2} h`.
pub fn hessian_apply(v: &Field, h: &Field, p: &Params) -> Field {
    let weights = hessian_weights(v.values(), p);
    let mut out = vec![0.0; h.len()];
    hessian_apply_raw(v.domain(), &weights, p.lambda, h.values(), &mut out);
    Field::from_raw(v.domain(), out)
}

/// Nodal `(2*−1)|v + μφ|^{2*-2}`.
pub(crate) fn hessian_weights(v: &[f64], p: &Params) -> Vec<f64> {
    let q = p.two_star;
    v.iter()
        .zip(p.shift())
        .map(|(vi, si)| (q - 1.0) * abs_pow(vi + si, q - 2.0))
        .collect()
}

pub(crate) fn hessian_apply_raw(dom: &Domain, weights: &[f64], lambda: f64, h: &[f64], out: &mut [f64]) {
    dom.laplacian_into(h, out);
    for ((o, hi), wi) in out.iter_mut().zip(h).zip(weights) {
        *o -= (lambda + wi) * hi;
    }
}

/// `(T, T', T'')` at one `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberingValues {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// Precomputed scalar data of the fibering map along one ray.
#[derive(Debug, Clone)]
pub struct FiberingProfile<'a> {
    v: &'a Field,
    params: &'a Params,
    /// `‖v‖²`
    pub norm_sq: f64,
    /// `‖v‖₂²`
    pub l2_sq: f64,
    /// `∫ φ v`
    pub phi_pairing: f64,
    /// `λμ∫φv + μ^{2*−1}∫φ^{2*−1}v`; equals `-T'(0)`.
    pub pairing_sign: f64,
    t0_numerator: f64,
    t0_denominator: f64,
}

impl<'a> FiberingProfile<'a> {
    pub fn new(v: &'a Field, params: &'a Params) -> Result<Self> {
        v.check_same(params.phi())?;
        if v.is_zero() {
            return Err(Error::Argument("fibering map needs a nonzero ray".into()));
        }
        let q = params.two_star;
        let w = v.domain().weight();
        let phi = params.phi().values();
        let mu = params.mu;
        let norm_sq = v.h1_norm_sq();
        let l2_sq = v.l2_norm_sq();
        let phi_pairing = w * linalg::dot(phi, v.values());
        let crit_pairing = w * phi
            .iter()
            .zip(v.values())
            .map(|(f, vi)| signed_pow(*f, q - 1.0) * vi)
            .sum::<f64>();
        let phi_weighted = w * phi
            .iter()
            .zip(v.values())
            .map(|(f, vi)| abs_pow(*f, q - 2.0) * vi * vi)
            .sum::<f64>();
        let crit_norm = v.lp_pow(q);
        let c = (q - 1.0) * 2f64.powf(q - 2.0);
        let mu_term = if mu == 0.0 { 0.0 } else { mu.powf(q - 2.0) };
        Ok(Self {
            v,
            params,
            norm_sq,
            l2_sq,
            phi_pairing,
            pairing_sign: params.lambda * mu * phi_pairing + mu_term * mu * crit_pairing,
            t0_numerator: norm_sq - params.lambda * l2_sq - c * mu_term * phi_weighted,
            t0_denominator: c * crit_norm,
        })
    }

    pub fn ray(&self) -> &Field {
        self.v
    }

    pub fn params(&self) -> &Params {
        self.params
    }

    pub fn t0_numerator(&self) -> f64 {
        self.t0_numerator
    }

    /// Closed-form `t0(v)`; `T'' > 0` on `(0, t0)`.
    pub fn t0(&self) -> Result<f64> {
        if !(self.t0_numerator > 0.0) {
            return Err(Error::MuTooLarge {
                numerator: self.t0_numerator,
            });
        }
        Ok((self.t0_numerator / self.t0_denominator).powf(1.0 / (self.params.two_star - 2.0)))
    }

    /// `(T(t), T'(t), T''(t))`; the critical-power integrals are re-quadratured
    /// at every `t`.
    pub fn eval(&self, t: f64) -> FiberingValues {
        let q = self.params.two_star;
        let (mut quad_tv, mut quad_lin, mut crit, mut crit_lin, mut crit_sq) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (vi, si) in self.v.values().iter().zip(self.params.shift()) {
            let z = t * vi + si;
            let a = abs_pow(z, q - 2.0);
            quad_tv += z * z;
            quad_lin += z * vi;
            crit += a * z * z;
            crit_lin += a * z * vi;
            crit_sq += a * vi * vi;
        }
        let w = self.v.domain().weight();
        let lambda = self.params.lambda;
        FiberingValues {
            value: 0.5 * t * t * self.norm_sq - 0.5 * lambda * w * quad_tv - w * crit / q,
            first: t * self.norm_sq - lambda * w * quad_lin - w * crit_lin,
            second: self.norm_sq - lambda * self.l2_sq - (q - 1.0) * w * crit_sq,
        }
    }

    /// `T'(t)` only.
    pub fn slope(&self, t: f64) -> f64 {
        self.eval(t).first
    }
}

/// `(T, T', T'')` of the fibering map of `v` at `t >= 0`.
pub fn fibering(v: &Field, p: &Params, t: f64) -> Result<FiberingValues> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Argument(format!("fibering parameter t = {t} must be >= 0")));
    }
    Ok(FiberingProfile::new(v, p)?.eval(t))
}

/// Closed-form `t0(v)`.
pub fn fibering_t0(v: &Field, p: &Params) -> Result<f64> {
    FiberingProfile::new(v, p)?.t0()
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::grid::{build_domain, DomainSpec};
    use crate::lift::{solve_lift, BoundaryData};

    /// Spectral data and constant-data lift on a small unit box.
    pub fn unit_box_setup(dimension: usize, resolution: usize) -> (Arc<SpectralData>, Arc<HarmonicLift>) {
        let dom = build_domain(DomainSpec::unit_box(dimension, resolution)).unwrap();
        let spectral = SpectralData::compute(&dom).unwrap();
        let lift = Arc::new(solve_lift(&BoundaryData::Constant(1.0), &dom).unwrap());
        (spectral, lift)
    }

    pub fn random_field(dom: &Arc<Domain>, seed: u64, amplitude: f64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(dom, |_| amplitude * rng.gen_range(-1.0..1.0))
    }

    /// Random smooth-ish positive ray: a sum of a few Gaussian bumps.
    pub fn random_bumps(dom: &Arc<Domain>, seed: u64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = dom.dimension();
        let bumps: Vec<(Vec<f64>, f64, f64)> = (0..3)
            .map(|_| {
                let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.3..0.3)).collect();
                (c, rng.gen_range(0.05..0.2), rng.gen_range(0.2..1.0))
            })
            .collect();
        Field::from_fn(dom, |x| {
            bumps
                .iter()
                .map(|(c, s, a)| {
                    let r2: f64 = x.iter().zip(c).map(|(p, q)| (p - q).powi(2)).sum();
                    a * (-r2 / (s * s)).exp()
                })
                .sum()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    /// Energy by a separate summation path: explicit edge loop for the
    /// Dirichlet term and direct powers for the rest.
    fn energy_oracle(v: &Field, lambda: f64, mu: f64, phi: &Field) -> f64 {
        let dom = v.domain();
        let q = dom.critical_exponent();
        let mut grad = 0.0;
        dom.for_each_edge(v.values(), |_, d, _| grad += d * d);
        let w = dom.weight();
        let mut quad = 0.0;
        let mut crit = 0.0;
        for (a, b) in v.values().iter().zip(phi.values()) {
            let u = a + mu * b;
            quad += u * u;
            crit += u.abs().powf(q);
        }
        0.5 * w * grad - 0.5 * lambda * w * quad - w * crit / q
    }

    #[test]
    fn energy_special_values() {
        let (spec, lift) = unit_box_setup(3, 9);
        let dom = Arc::clone(spec.domain());
        let p0 = Params::new(0.0, 0.0, Arc::clone(&spec), Arc::clone(&lift)).unwrap();
        assert_eq!(energy(&Field::zeros(&dom), &p0), 0.0);
        let lam = 0.5 * spec.lambda1;
        let p = Params::new(lam, 0.01, Arc::clone(&spec), Arc::clone(&lift)).unwrap();
        let e0 = energy(&Field::zeros(&dom), &p);
        let mphi = lift.phi.scaled(0.01);
        let expected = -0.5 * lam * mphi.l2_norm_sq() - mphi.lp_pow(6.0) / 6.0;
        assert!(e0 < 0.0);
        assert!((e0 - expected).abs() < 1e-14 * expected.abs());
        for s in 0..5 {
            let v = random_field(&dom, s, 0.5);
            let a = energy(&v, &p0);
            let b = energy_oracle(&v, 0.0, 0.0, &lift.phi);
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            let a = energy(&v, &p);
            let b = energy_oracle(&v, lam, 0.01, &lift.phi);
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (spec, lift) = unit_box_setup(3, 9);
        let dom = Arc::clone(spec.domain());
        let p = Params::new(0.5 * spec.lambda1, 0.01, spec, lift).unwrap();
        assert!(gradient(&Field::zeros(&dom), &p.with(0.0, 0.0).unwrap()).is_zero());
        for s in 0..10 {
            let v = random_field(&dom, s, 0.3);
            let h = random_field(&dom, 50 + s, 1.0);
            let g = gradient(&v, &p).dot(&h);
            let step = 1e-5;
            let fd = (energy(&v.add_scaled(step, &h), &p) - energy(&v.add_scaled(-step, &h), &p)) / (2.0 * step);
            assert!((g - fd).abs() / (1.0 + fd.abs()) < 1e-6, "{g} vs {fd}");
        }
    }

    #[test]
    fn hessian_symmetric_and_matches_gradient_differences() {
        let (spec, lift) = unit_box_setup(3, 9);
        let dom = Arc::clone(spec.domain());
        let p = Params::new(0.5 * spec.lambda1, 0.01, Arc::clone(&spec), lift).unwrap();
        let v = random_field(&dom, 1, 0.3);
        let h1 = random_field(&dom, 2, 1.0);
        let h2 = random_field(&dom, 3, 1.0);
        let a = hessian_apply(&v, &h1, &p).dot(&h2);
        let b = hessian_apply(&v, &h2, &p).dot(&h1);
        assert!((a - b).abs() <= 1e-12 * (a.abs() + b.abs()));
        assert!(hessian_apply(&v, &Field::zeros(&dom), &p).is_zero());
        let step = 1e-6;
        let fd = gradient(&v.add_scaled(step, &h1), &p)
            .add_scaled(-1.0, &gradient(&v.add_scaled(-step, &h1), &p))
            .scaled(0.5 / step);
        let hv = hessian_apply(&v, &h1, &p);
        let err = fd.add_scaled(-1.0, &hv).l2_norm_sq().sqrt() / hv.l2_norm_sq().sqrt();
        assert!(err < 1e-5, "{err}");
        // at v = 0, μ = 0 the form is ‖h‖² − λ‖h‖₂² ≥ (1 − λ/λ1)‖h‖²
        let p0 = p.with(0.5 * spec.lambda1, 0.0).unwrap();
        let form = hessian_apply(&Field::zeros(&dom), &h1, &p0).dot(&h1);
        assert!((form - (h1.h1_norm_sq() - p0.lambda * h1.l2_norm_sq())).abs() < 1e-10 * form);
        assert!(form >= 0.5 * h1.h1_norm_sq() * (1.0 - 1e-12));
    }

    #[test]
    fn fibering_closed_forms_and_identities() {
        let (spec, lift) = unit_box_setup(3, 9);
        let dom = Arc::clone(spec.domain());
        let p00 = Params::new(0.0, 0.0, Arc::clone(&spec), Arc::clone(&lift)).unwrap();
        let v = random_bumps(&dom, 4);
        let t = 0.7;
        let f = fibering(&v, &p00, t).unwrap();
        let expect = t * v.h1_norm_sq() - t.powi(5) * v.lp_pow(6.0);
        assert!((f.first - expect).abs() < 1e-12 * (1.0 + expect.abs()));

        let p = Params::new(0.5 * spec.lambda1, 0.01, spec, lift).unwrap();
        for s in 0..5 {
            let v = random_field(&dom, s, 1.0);
            let t1 = fibering(&v, &p, 1.0).unwrap().first;
            let g = gradient(&v, &p).dot(&v);
            assert!((t1 - g).abs() < 1e-12 * (1.0 + g.abs()));
            // derivatives against central differences of T
            let prof = FiberingProfile::new(&v, &p).unwrap();
            let t = 0.8;
            let step = 1e-5;
            let (a, b, c) = (prof.eval(t - step), prof.eval(t), prof.eval(t + step));
            let d1 = (c.value - a.value) / (2.0 * step);
            let d2 = (c.first - a.first) / (2.0 * step);
            assert!((d1 - b.first).abs() / (1.0 + b.first.abs()) < 1e-6);
            assert!((d2 - b.second).abs() / (1.0 + b.second.abs()) < 1e-6);
        }
        assert!(fibering(&Field::zeros(&dom), &p, 1.0).is_err());
        assert!(fibering(&v, &p, -1.0).is_err());
    }

    #[test]
    fn t0_formula_and_guarantee() {
        let (spec, lift) = unit_box_setup(3, 9);
        let dom = Arc::clone(spec.domain());
        let lam = 0.5 * spec.lambda1;
        let p0 = Params::new(lam, 0.0, Arc::clone(&spec), Arc::clone(&lift)).unwrap();
        let v = random_bumps(&dom, 9);
        let t0 = fibering_t0(&v, &p0).unwrap();
        let closed = ((v.h1_norm_sq() - lam * v.l2_norm_sq()) / (5.0 * 16.0 * v.lp_pow(6.0))).powf(0.25);
        assert!((t0 - closed).abs() < 1e-12 * closed);
        let t0_double = fibering_t0(&v.scaled(2.0), &p0).unwrap();
        assert!((t0_double - 0.5 * t0).abs() < 1e-12 * t0);

        let p = Params::new(lam, 0.01, spec, lift).unwrap();
        for s in 0..10 {
            let v = random_bumps(&dom, 100 + s);
            let t0 = fibering_t0(&v, &p).unwrap();
            for k in 1..20 {
                let t = t0 * k as f64 / 20.0;
                assert!(fibering(&v, &p, t).unwrap().second > 0.0);
            }
        }
        // λ beyond λ1 makes the numerator negative on e1
        let big = p.with(1.5 * p.spectral.lambda1, 0.01).unwrap();
        assert!(matches!(
            fibering_t0(&big.spectral.e1, &big),
            Err(Error::MuTooLarge { numerator }) if numerator < 0.0
        ));
    }

    #[test]
    fn eventual_negativity_of_slope() {
        let (spec, lift) = unit_box_setup(3, 9);
        let dom = Arc::clone(spec.domain());
        let p = Params::new(0.5 * spec.lambda1, 0.01, spec, lift).unwrap();
        for s in 0..5 {
            let v = random_field(&dom, s, 1.0);
            let prof = FiberingProfile::new(&v, &p).unwrap();
            let mut t = prof.t0().unwrap();
            let mut doublings = 0;
            while prof.slope(t) >= 0.0 {
                t *= 2.0;
                doublings += 1;
                assert!(doublings < 60);
            }
            assert!(prof.eval(t).second < 0.0);
        }
    }

    #[test]
    fn admissibility_small_mu_and_failure_beyond_lambda1() {
        let (spec, lift) = unit_box_setup(3, 9);
        let p = Params::new(0.5 * spec.lambda1, 0.01, Arc::clone(&spec), Arc::clone(&lift)).unwrap();
        assert!(p.check_admissible().is_ok());
        let q = p.with(spec.lambda1, 0.01).unwrap();
        assert!(q.check_admissible().is_err());
    }
}
