//! Fibering roots, Nehari classification and the reduced functional.
//!
//! Along a ray `v`, `T'` is negative near 0 when the lift pairing is positive,
//! turns positive before `t0(v)` and eventually negative again. The two
//! zeros are `t⁺(v) < t0(v) < t⁻(v)`; the first exists only for a positive
//! pairing. Both are bracketed against the anchor `t0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{energy, gradient, FiberingProfile, Params};
use crate::grid::Field;

const MAX_DOUBLINGS: usize = 200;
const MAX_REFINE: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NehariKind {
    Plus,
    Minus,
    Zero,
    NotOnManifold,
}

impl std::fmt::Display for NehariKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NehariKind::Plus => "Plus",
            NehariKind::Minus => "Minus",
            NehariKind::Zero => "Zero",
            NehariKind::NotOnManifold => "NotOnManifold",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NehariClass {
    pub kind: NehariKind,
    /// `T''(1)`
    pub t_second_deriv: f64,
    /// `T'(1)`
    pub t_first_deriv: f64,
    /// Threshold applied to `T''(1)`.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayRoots {
    pub t_plus: Option<f64>,
    pub t_minus: f64,
    pub t0: f64,
    pub bracket_history: Vec<(f64, f64)>,
    pub pairing_sign: f64,
    pub tol_root: f64,
}

/// Safeguarded Newton on a sign-changing bracket of `f = T'`.
fn refine_root(
    prof: &FiberingProfile<'_>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    history: &mut Vec<(f64, f64)>,
) -> Result<f64> {
    let f_lo = prof.slope(lo);
    let increasing = f_lo < 0.0;
    let mut t = 0.5 * (lo + hi);
    for _ in 0..MAX_REFINE {
        let fv = prof.eval(t);
        if fv.first.abs() <= tol {
            return Ok(t);
        }
        if (fv.first < 0.0) == increasing {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(t);
        }
        let newton = t - fv.first / fv.second;
        t = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    history.push((lo, hi));
    Err(Error::Numerical {
        message: format!("fibering root not resolved in [{lo:e}, {hi:e}]"),
        residual: prof.slope(t).abs(),
    })
}

/// Both fibering roots of the ray `v`.
pub fn find_roots(v: &Field, p: &Params) -> Result<RayRoots> {
    let prof = FiberingProfile::new(v, p)?;
    find_roots_with(&prof)
}

pub(crate) fn find_roots_with(prof: &FiberingProfile<'_>) -> Result<RayRoots> {
    let t0 = prof.t0()?;
    let s0 = prof.slope(t0);
    if !(s0 > 0.0) {
        return Err(Error::MuBeyondRange(format!("T'(t0) = {s0:e} is not positive")));
    }
    let tol = 1e-11 * (1.0 + s0.abs());
    let mut history = Vec::new();

    let (mut lo, mut hi) = (t0, 2.0 * t0);
    let mut doublings = 0;
    while prof.slope(hi) >= 0.0 {
        history.push((lo, hi));
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Numerical {
                message: "no sign change of T' beyond t0".into(),
                residual: prof.slope(hi),
            });
        }
    }
    history.push((lo, hi));
    let t_minus = refine_root(prof, lo, hi, tol, &mut history)?;

    let t_plus = if prof.pairing_sign > 0.0 {
        if !(prof.slope(0.0) < 0.0) {
            return Err(Error::MuBeyondRange(
                "positive pairing without a sign change on (0, t0)".into(),
            ));
        }
        history.push((0.0, t0));
        Some(refine_root(prof, 0.0, t0, tol, &mut history)?)
    } else {
        None
    };
    Ok(RayRoots {
        t_plus,
        t_minus,
        t0,
        bracket_history: history,
        pairing_sign: prof.pairing_sign,
        tol_root: tol,
    })
}

/// Classification by `T'(1)` and `T''(1)` with `tol_root = 1e-9(1+‖v‖²)`.
pub fn classify(v: &Field, p: &Params) -> NehariClass {
    let norm_sq = v.h1_norm_sq();
    classify_within(v, p, 1e-9 * (1.0 + norm_sq))
}

/// Classification with an explicit bound on `|T'(1)|`.
pub fn classify_within(v: &Field, p: &Params, tol_root: f64) -> NehariClass {
    let norm_sq = v.h1_norm_sq();
    let tol_class = 1e-9 * norm_sq;
    let vals = match FiberingProfile::new(v, p) {
        Ok(prof) => prof.eval(1.0),
        Err(_) => {
            return NehariClass {
                kind: NehariKind::NotOnManifold,
                t_second_deriv: f64::NAN,
                t_first_deriv: f64::NAN,
                tolerance: tol_class,
            }
        }
    };
    let kind = if !(vals.first.abs() <= tol_root) {
        NehariKind::NotOnManifold
    } else if vals.second > tol_class {
        NehariKind::Plus
    } else if vals.second < -tol_class {
        NehariKind::Minus
    } else if vals.first.abs() > 0.5 * tol_root {
        NehariKind::NotOnManifold
    } else {
        NehariKind::Zero
    };
    NehariClass {
        kind,
        t_second_deriv: vals.second,
        t_first_deriv: vals.first,
        tolerance: tol_class,
    }
}

/// `J(v) = I(t⁻(v) v)` for `v` on the nonnegative unit `2*`-sphere.
pub fn reduced_j(v_unit: &Field, p: &Params) -> Result<f64> {
    if v_unit.min() < 0.0 {
        return Err(Error::Argument("reduced functional needs v >= 0".into()));
    }
    let n = v_unit.lp_pow(p.two_star);
    if (n - 1.0).abs() > 1e-8 {
        return Err(Error::Argument(format!(
            "reduced functional needs unit 2*-norm, got ‖v‖^2* = {n}"
        )));
    }
    Ok(ray_maximum(v_unit, p)?.0)
}

/// `(I(t⁻v), t⁻)` for any nonzero ray.
pub fn ray_maximum(v: &Field, p: &Params) -> Result<(f64, f64)> {
    let t = find_roots(v, p)?.t_minus;
    Ok((energy(&v.scaled(t), p), t))
}

/// L²-representation of the differential of `v ↦ I(t⁻(v) v)`. The
/// `dt⁻/dv` term drops out since `T'(t⁻) = 0`, leaving `t⁻ ∇I(t⁻ v)`.
pub fn reduced_j_gradient(v: &Field, p: &Params) -> Result<(f64, f64, Field)> {
    let t = find_roots(v, p)?.t_minus;
    let w = v.scaled(t);
    Ok((energy(&w, p), t, gradient(&w, p).scaled(t)))
}

/// `β(v) = ∫ x |v|^{2*}` evaluated on `v / ‖v‖_{2*}`.
pub fn barycenter(v: &Field) -> Result<Vec<f64>> {
    if v.is_zero() {
        return Err(Error::Argument("barycenter of the zero field".into()));
    }
    let dom = v.domain();
    let q = dom.critical_exponent();
    let mut acc = vec![0.0; dom.dimension()];
    let mut mass = 0.0;
    for (i, vi) in v.values().iter().enumerate() {
        let m = crate::power::abs_pow(*vi, q);
        mass += m;
        for (a, x) in acc.iter_mut().zip(dom.coord(i)) {
            *a += m * x;
        }
    }
    Ok(acc.into_iter().map(|a| a / mass).collect())
}

/// `∫ (x/|x|) |∇v|² / ‖v‖²`, the gradient-weighted direction of `v`.
/// Edges through the origin are skipped.
pub fn gradient_direction(v: &Field) -> Result<Vec<f64>> {
    if v.is_zero() {
        return Err(Error::Argument("gradient direction of the zero field".into()));
    }
    let dom = v.domain();
    let mut acc = vec![0.0; dom.dimension()];
    let mut total = 0.0;
    dom.for_each_edge(v.values(), |_, d, mid| {
        let r = mid.iter().map(|x| x * x).sum::<f64>().sqrt();
        total += d * d;
        if r > 0.0 {
            for (a, x) in acc.iter_mut().zip(mid) {
                *a += d * d * x / r;
            }
        }
    });
    Ok(acc.into_iter().map(|a| a / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RaySet {
    /// `t⁻(u/‖u‖)/‖u‖ < 1`: beyond the N⁻ crossing of its ray.
    AMinus,
    /// `t⁻(u/‖u‖)/‖u‖ > 1`.
    APlus,
    OnNMinus,
}

/// Position of `u` relative to the N⁻ crossing on its ray, with
/// `τ = t⁻(u/‖u‖)/‖u‖` compared to 1 at relative tolerance 1e-9.
pub fn ray_set_membership(u: &Field, p: &Params) -> Result<RaySet> {
    Ok(ray_set_ratio(u, p)?.1)
}

/// `(τ, set)` for [`ray_set_membership`].
pub fn ray_set_ratio(u: &Field, p: &Params) -> Result<(f64, RaySet)> {
    if u.is_zero() {
        return Err(Error::Argument("ray set of the zero field".into()));
    }
    let n = u.h1_norm();
    let tau = find_roots(&u.scaled(1.0 / n), p)?.t_minus / n;
    let set = if (tau - 1.0).abs() <= 1e-9 {
        RaySet::OnNMinus
    } else if tau < 1.0 {
        RaySet::AMinus
    } else {
        RaySet::APlus
    };
    Ok((tau, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::testutil::*;
    use crate::grid::{build_domain, DomainSpec, SpectralData};
    use crate::lift::{solve_lift, BoundaryData};
    use std::sync::Arc;

    /// Sign changes of `T'` on `[a, b]` from `samples` uniform points, each
    /// refined by plain bisection.
    fn scan_roots(prof: &FiberingProfile<'_>, a: f64, b: f64, samples: usize) -> Vec<f64> {
        let mut roots = Vec::new();
        let h = (b - a) / (samples - 1) as f64;
        let mut prev_t = a;
        let mut prev = prof.slope(a);
        for k in 1..samples {
            let t = a + h * k as f64;
            let cur = prof.slope(t);
            if (prev < 0.0) != (cur < 0.0) {
                let (mut lo, mut hi) = (prev_t, t);
                let lo_neg = prev < 0.0;
                for _ in 0..100 {
                    let m = 0.5 * (lo + hi);
                    if (prof.slope(m) < 0.0) == lo_neg {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            prev = cur;
            prev_t = t;
        }
        roots
    }

    fn params(lam_frac: f64, mu: f64) -> Params {
        let (spec, lift) = unit_box_setup(3, 9);
        Params::new(lam_frac * spec.lambda1, mu, spec, lift).unwrap()
    }

    #[test]
    fn mu_zero_closed_form() {
        let p = params(0.5, 0.0);
        for s in 0..5 {
            let v = random_bumps(p.domain(), s);
            let r = find_roots(&v, &p).unwrap();
            assert!(r.t_plus.is_none());
            let closed = ((v.h1_norm_sq() - p.lambda * v.l2_norm_sq()) / v.lp_pow(6.0)).powf(0.25);
            assert!((r.t_minus - closed).abs() < 1e-10 * closed, "{} {}", r.t_minus, closed);
        }
    }

    #[test]
    fn roots_match_scan_oracle_and_order() {
        let p = params(0.5, 0.01);
        for s in 0..6 {
            let v = random_bumps(p.domain(), 10 + s);
            let r = find_roots(&v, &p).unwrap();
            let prof = FiberingProfile::new(&v, &p).unwrap();
            let scan = scan_roots(&prof, 1e-4, 4.0 * r.t_minus, 100_000);
            let mut ours: Vec<f64> = r.t_plus.into_iter().collect();
            ours.push(r.t_minus);
            let a = scan.iter().copied().filter(|t| *t > 1e-4).collect::<Vec<_>>();
            assert_eq!(a.len(), ours.len(), "{a:?} vs {ours:?}");
            for (x, y) in a.iter().zip(&ours) {
                assert!((x - y).abs() < 1e-6, "{x} vs {y}");
            }
            let tp = r.t_plus.unwrap();
            assert!(0.0 < tp && tp < r.t0 && r.t0 < r.t_minus);
            assert!(prof.eval(tp).second > 0.0 && prof.eval(r.t_minus).second < 0.0);
            // T(t⁺) is the minimum over [0, t⁻]
            let tmin = (0..=2000)
                .map(|k| prof.eval(r.t_minus * k as f64 / 2000.0).value)
                .fold(f64::INFINITY, f64::min);
            assert!(prof.eval(tp).value <= tmin + 1e-14);
        }
    }

    #[test]
    fn negative_pairing_has_no_plus_root() {
        let p = params(0.5, 0.01);
        let v = p.spectral.e1.scaled(-1.0);
        let r = find_roots(&v, &p).unwrap();
        assert!(r.pairing_sign < 0.0);
        assert!(r.t_plus.is_none());
        assert!(r.t_minus > r.t0);
    }

    #[test]
    fn classification_by_construction() {
        let p = params(0.5, 0.01);
        let mut zero = 0;
        for s in 0..40 {
            let w = random_bumps(p.domain(), 200 + s);
            let r = find_roots(&w, &p).unwrap();
            let minus = classify(&w.scaled(r.t_minus), &p);
            assert_eq!(minus.kind, NehariKind::Minus);
            let plus = classify(&w.scaled(r.t_plus.unwrap()), &p);
            assert_eq!(plus.kind, NehariKind::Plus);
            zero += [minus.kind, plus.kind]
                .iter()
                .filter(|k| **k == NehariKind::Zero)
                .count();
            assert_eq!(
                classify(&w.scaled(1.37 * r.t_minus), &p).kind,
                NehariKind::NotOnManifold
            );
        }
        assert_eq!(zero, 0);
    }

    #[test]
    fn reduced_functional_mu_zero_and_ray_max() {
        let p = params(0.5, 0.0);
        let v = random_bumps(p.domain(), 3);
        let v = v.scaled(1.0 / v.lp_pow(6.0).powf(1.0 / 6.0));
        let j = reduced_j(&v, &p).unwrap();
        let closed = (v.h1_norm_sq() - p.lambda * v.l2_norm_sq()).powf(1.5) / 3.0;
        assert!((j - closed).abs() < 1e-10 * closed);
        assert!(reduced_j(&v.scaled(2.0), &p).is_err());

        let p = p.with(p.lambda, 0.01).unwrap();
        let j = reduced_j(&v, &p).unwrap();
        assert!(j > 0.0);
        let t_minus = find_roots(&v, &p).unwrap().t_minus;
        for k in 0..100 {
            let t = 3.0 * t_minus * k as f64 / 99.0;
            assert!(energy(&v.scaled(t), &p) <= j + 1e-12 * j.abs());
        }
    }

    #[test]
    fn reduced_gradient_matches_differences() {
        let p = params(0.5, 0.01);
        let v = random_bumps(p.domain(), 5);
        let h = random_bumps(p.domain(), 6);
        let (_, _, g) = reduced_j_gradient(&v, &p).unwrap();
        let step = 1e-6;
        let fd = (ray_maximum(&v.add_scaled(step, &h), &p).unwrap().0
            - ray_maximum(&v.add_scaled(-step, &h), &p).unwrap().0)
            / (2.0 * step);
        assert!((g.dot(&h) - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{} {}", g.dot(&h), fd);
    }

    #[test]
    fn barycenter_symmetry_and_translation() {
        let dom = build_domain(DomainSpec::unit_box(3, 17)).unwrap();
        let bump = |c: [f64; 3]| {
            Field::from_fn(&dom, move |x| {
                let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                if r2 < 0.04 {
                    (1.0 - r2 / 0.04).powi(3)
                } else {
                    0.0
                }
            })
        };
        let b0 = barycenter(&bump([0.0; 3])).unwrap();
        assert!(b0.iter().all(|x| x.abs() < 1e-10));
        let shift = 0.125;
        let b1 = barycenter(&bump([shift, 0.0, 0.0])).unwrap();
        assert!((b1[0] - shift).abs() < 1e-10 && b1[1].abs() < 1e-10);
        assert!(gradient_direction(&bump([0.0; 3]))
            .unwrap()
            .iter()
            .all(|x| x.abs() < 1e-10));
        assert!(barycenter(&Field::zeros(&dom)).is_err());
    }

    #[test]
    fn annulus_barycenter_follows_concentration() {
        let dom = build_domain(DomainSpec::annulus(0.45, 3, 17)).unwrap();
        let y = [0.0, 1.0, 0.0];
        let v = Field::from_fn(&dom, |x| {
            let r2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
            (-r2 / 0.1).exp()
        });
        let b = barycenter(&v).unwrap();
        assert!(b[1] > 0.5 && b[0].abs() < 1e-10);
        assert!(gradient_direction(&v).unwrap()[1] > 0.0);
    }

    #[test]
    fn ray_sets() {
        let p = params(0.5, 0.01);
        let w = random_bumps(p.domain(), 8);
        let r = find_roots(&w, &p).unwrap();
        let on = w.scaled(r.t_minus);
        assert_eq!(ray_set_membership(&on, &p).unwrap(), RaySet::OnNMinus);
        assert_eq!(ray_set_membership(&on.scaled(3.0), &p).unwrap(), RaySet::AMinus);
        let plus = w.scaled(r.t_plus.unwrap());
        assert_eq!(ray_set_membership(&plus.scaled(0.5), &p).unwrap(), RaySet::APlus);
        assert_eq!(ray_set_membership(&plus, &p).unwrap(), RaySet::APlus);
    }

    #[test]
    fn annulus_lift_roots() {
        let dom = build_domain(DomainSpec::annulus(0.45, 3, 13)).unwrap();
        let spec = SpectralData::compute(&dom).unwrap();
        let lift = Arc::new(solve_lift(&BoundaryData::Constant(1.0), &dom).unwrap());
        let p = Params::new(0.1 * spec.lambda1, 0.005, Arc::clone(&spec), lift).unwrap();
        let r = find_roots(&spec.e1, &p).unwrap();
        assert!(r.t_plus.is_some() && r.t_minus > r.t0);
    }
}
