//! Dense-vector Krylov solvers for the symmetric stencil operators.
//!
//! Operators are passed as closures `apply(x, out)` so that the stencil never
//! has to be assembled. All inner products are plain Euclidean sums; the grid
//! uses a uniform quadrature weight, so symmetry in the weighted product and in
//! the Euclidean product coincide.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct KrylovReport {
    pub iterations: usize,
    /// Euclidean norm of the final recursive residual divided by `||b||`.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradients for a symmetric positive definite operator.
///
/// `x` holds the initial guess on entry and the solution on exit.
pub(crate) fn cg<F>(apply: F, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> KrylovReport
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovReport {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let target = (rel_tol * bnorm).powi(2);
    let mut it = 0;
    while it < max_iter && rr > target {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
        it += 1;
    }
    KrylovReport {
        iterations: it,
        relative_residual: rr.sqrt() / bnorm,
        converged: rr <= target,
    }
}

/// MINRES (Paige-Saunders) for a symmetric, possibly indefinite operator,
/// started from `x = 0`.
pub(crate) fn minres<F>(apply: F, b: &[f64], rel_tol: f64, max_iter: usize) -> (Vec<f64>, KrylovReport)
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = vec![0.0; n];
    let beta1 = norm(b);
    if beta1 == 0.0 {
        return (
            x,
            KrylovReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let mut v_prev = vec![0.0; n];
    let mut v: Vec<f64> = b.iter().map(|bi| bi / beta1).collect();
    let mut w_prev = vec![0.0; n];
    let mut w_prev2 = vec![0.0; n];
    let mut av = vec![0.0; n];

    let mut beta = beta1;
    let (mut c_prev, mut s_prev) = (1.0, 0.0);
    let (mut c_prev2, mut s_prev2) = (1.0, 0.0);
    let mut eta = beta1;
    let mut resid = beta1;
    let mut it = 0;

    while it < max_iter {
        apply(&v, &mut av);
        let alpha = dot(&v, &av);
        // Lanczos three-term recurrence
        let mut v_next = av.clone();
        axpy(-alpha, &v, &mut v_next);
        axpy(-beta, &v_prev, &mut v_next);
        let beta_next = norm(&v_next);

        // apply the two previous rotations to the new column
        let delta = c_prev * alpha - c_prev2 * s_prev * beta;
        let rho2 = s_prev * alpha + c_prev2 * c_prev * beta;
        let rho3 = s_prev2 * beta;
        let rho1 = (delta * delta + beta_next * beta_next).sqrt();
        if rho1 == 0.0 {
            break;
        }
        let c = delta / rho1;
        let s = beta_next / rho1;

        let mut w: Vec<f64> = v.clone();
        axpy(-rho3, &w_prev2, &mut w);
        axpy(-rho2, &w_prev, &mut w);
        w.iter_mut().for_each(|wi| *wi /= rho1);

        axpy(c * eta, &w, &mut x);
        eta *= -s;
        resid = eta.abs();
        it += 1;

        if resid <= rel_tol * beta1 || beta_next == 0.0 {
            break;
        }
        w_prev2 = std::mem::replace(&mut w_prev, w);
        v_prev = std::mem::replace(&mut v, v_next);
        v.iter_mut().for_each(|vi| *vi /= beta_next);
        beta = beta_next;
        c_prev2 = c_prev;
        s_prev2 = s_prev;
        c_prev = c;
        s_prev = s;
    }
    let converged = resid <= rel_tol * beta1;
    (
        x,
        KrylovReport {
            iterations: it,
            relative_residual: resid / beta1,
            converged,
        },
    )
}
