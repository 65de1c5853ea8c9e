#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use bnvar::{build_domain, solve_lift, BoundaryData, Domain, DomainSpec, Field, Params, SpectralData};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Setup {
    pub domain: Arc<Domain>,
    pub spectral: Arc<SpectralData>,
    pub lift: Arc<bnvar::HarmonicLift>,
}

impl Setup {
    pub fn new(spec: DomainSpec) -> Self {
        let domain = build_domain(spec).unwrap();
        let spectral = SpectralData::compute(&domain).unwrap();
        let lift = Arc::new(solve_lift(&BoundaryData::Constant(1.0), &domain).unwrap());
        Self { domain, spectral, lift }
    }

    pub fn unit_box(res: usize) -> Self {
        Self::new(DomainSpec::unit_box(3, res))
    }

    pub fn params(&self, lambda: f64, mu: f64) -> Params {
        Params::new(lambda, mu, Arc::clone(&self.spectral), Arc::clone(&self.lift)).unwrap()
    }

    pub fn lambda1(&self) -> f64 {
        self.spectral.lambda1
    }
}

/// Smooth random field: a few Gaussian blobs with random signs (or all
/// positive), times a random nodal jitter.
pub fn random_field(dom: &Arc<Domain>, rng: &mut ChaCha8Rng, positive: bool) -> Field {
    let n = dom.dimension();
    let blobs: Vec<(Vec<f64>, f64, f64)> = (0..3)
        .map(|_| {
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let w = rng.gen_range(0.1..0.4);
            let a = if positive {
                rng.gen_range(0.2..1.5)
            } else {
                rng.gen_range(-1.5..1.5)
            };
            (c, w, a)
        })
        .collect();
    let jitter: Vec<f64> = (0..dom.num_interior()).map(|_| rng.gen_range(0.9..1.1)).collect();
    let mut k = 0;
    Field::from_fn(dom, |x| {
        let s: f64 = blobs
            .iter()
            .map(|(c, w, a)| {
                let d2: f64 = x.iter().zip(c).map(|(p, q)| (p - q).powi(2)).sum();
                a * (-d2 / (w * w)).exp()
            })
            .sum();
        let j = jitter[k];
        k += 1;
        s * j
    })
}

/// `∫ u w` with the nodal weight.
pub fn l2_dot(u: &Field, w: &Field) -> f64 {
    let h = u.domain().weight();
    u.values().iter().zip(w.values()).map(|(a, b)| a * b).sum::<f64>() * h
}

type EdgeTable = Arc<Vec<(Option<usize>, bool)>>;

/// Per interior node and axis: forward neighbour (if interior) and whether
/// the backward neighbour is interior. Built from lattice coordinates.
fn edge_table(dom: &Arc<Domain>) -> EdgeTable {
    static CACHE: OnceLock<Mutex<HashMap<String, EdgeTable>>> = OnceLock::new();
    let key = format!("{:?}", dom.spec());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(&key) {
        return Arc::clone(t);
    }
    let n = dom.dimension();
    let origin = dom.full_coord(0);
    let h = dom.spacing().to_vec();
    let lattice = |x: &[f64]| -> Vec<i64> { (0..n).map(|a| ((x[a] - origin[a]) / h[a]).round() as i64).collect() };
    let index: HashMap<Vec<i64>, usize> = (0..dom.num_interior()).map(|i| (lattice(dom.coord(i)), i)).collect();
    let mut table = Vec::with_capacity(n * dom.num_interior());
    for i in 0..dom.num_interior() {
        let key = lattice(dom.coord(i));
        for a in 0..n {
            let mut fwd = key.clone();
            fwd[a] += 1;
            let mut back = key.clone();
            back[a] -= 1;
            table.push((index.get(&fwd).copied(), index.contains_key(&back)));
        }
    }
    let table = Arc::new(table);
    cache.lock().unwrap().insert(key, Arc::clone(&table));
    table
}

/// Dirichlet form `Σ_edges (D u)(D w) h^N`, summed edge by edge with zero
/// outside the interior.
pub fn edge_form(u: &Field, w: &Field) -> f64 {
    let dom = u.domain();
    let n = dom.dimension();
    let h = dom.spacing();
    let table = edge_table(dom);
    let (uv, wv) = (u.values(), w.values());
    let mut s = 0.0;
    for i in 0..dom.num_interior() {
        for a in 0..n {
            let (fwd, back_inside) = table[i * n + a];
            let (uf, wf) = fwd.map_or((0.0, 0.0), |j| (uv[j], wv[j]));
            let mut e = (uf - uv[i]) * (wf - wv[i]);
            if !back_inside {
                e += uv[i] * wv[i];
            }
            s += e / (h[a] * h[a]);
        }
    }
    s * dom.weight()
}

/// `T'(t)` straight from the definition, by nodal quadrature.
pub fn slope_oracle(v: &Field, p: &Params, norm_sq: f64, t: f64) -> f64 {
    let q = p.two_star;
    let w = v.domain().weight();
    let e = q - 2.0;
    let pow = |a: f64| if e.fract() == 0.0 { a.powi(e as i32) } else { a.powf(e) };
    let mut lin = 0.0;
    let mut crit = 0.0;
    for (vi, phi) in v.values().iter().zip(p.phi().values()) {
        let u = t * vi + p.mu * phi;
        lin += u * vi;
        crit += pow(u.abs()) * u * vi;
    }
    t * norm_sq - p.lambda * w * lin - w * crit
}

/// Roots of `T'` on `(0, ∞)` from a dense uniform scan plus bisection.
pub fn scan_roots(v: &Field, p: &Params, samples: usize) -> Vec<f64> {
    let norm_sq = edge_form(v, v);
    let f = |t: f64| slope_oracle(v, p, norm_sq, t);
    let mut t_hi = 1.0;
    while f(t_hi) > -1.0 || f(2.0 * t_hi) > f(t_hi) {
        t_hi *= 2.0;
        assert!(t_hi < 1e12, "fibering slope never turns negative");
    }
    let t_hi = 2.0 * t_hi;
    let mut roots = Vec::new();
    let mut prev_t = 0.0;
    let mut prev_f = f(0.0);
    for k in 1..=samples {
        let t = t_hi * k as f64 / samples as f64;
        let ft = f(t);
        if prev_f != 0.0 && (ft == 0.0 || (ft < 0.0) != (prev_f < 0.0)) {
            let (mut lo, mut hi) = (prev_t, t);
            let neg_lo = prev_f < 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (f(mid) < 0.0) == neg_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_t = t;
        prev_f = ft;
    }
    roots
}
