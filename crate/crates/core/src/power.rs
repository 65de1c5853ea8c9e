//! Real powers of possibly negative nodal values.
//!
//! For N = 3, 4 the critical exponent is an integer and `powi` is used; for
//! N = 5 it is 10/3 and the power goes through `powf` on |s|.

const FLUSH: f64 = 1e-300;

fn integer_exponent(p: f64) -> Option<i32> {
    if p.fract() == 0.0 && p.abs() < 64.0 {
        Some(p as i32)
    } else {
        None
    }
}

/// |s|^p, with |s| below 1e-300 flushed to zero.
#[inline]
pub(crate) fn abs_pow(s: f64, p: f64) -> f64 {
    let a = s.abs();
    if a < FLUSH {
        return if p == 0.0 { 1.0 } else { 0.0 };
    }
    match integer_exponent(p) {
        Some(k) => a.powi(k),
        None => a.powf(p),
    }
}

/// sign(s)·|s|^p, i.e. |s|^(p-1) s.
#[inline]
pub(crate) fn signed_pow(s: f64, p: f64) -> f64 {
    let a = abs_pow(s, p);
    if s < 0.0 {
        -a
    } else {
        a
    }
}
