//! Scalar root finding and maximization on a bracket.

use crate::error::{domain, Error, Result};

/// Closed search interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(domain(format!("invalid bracket [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

const MAX_ITER: usize = 500;

/// Root of `f` inside `bracket`; stops once `|f(x)| ≤ tol` or the bracket
/// has shrunk below `tol`.
pub fn find_root<F>(mut f: F, bracket: Bracket, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    try_find_root(|x| Ok(f(x)), bracket, tol, tol)
}

/// Like [`root_search`] but treats hitting the iteration cap as an error.
pub fn try_find_root<F>(f: F, bracket: Bracket, xtol: f64, ftol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = root_search(f, bracket, xtol, ftol)?;
    if !r.converged {
        return Err(Error::NoConvergence {
            what: "find_root",
            bound: r.bound,
        });
    }
    Ok(r.x)
}

/// Outcome of [`root_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Width of the final bracket.
    pub bound: f64,
}

/// Brent's zero-in (inverse quadratic interpolation, secant and bisection)
/// for a fallible objective, with separate argument and residual tolerances.
///
/// Running out of iterations is not an error here: the last iterate comes
/// back with `converged == false`.
pub fn root_search<F>(mut f: F, bracket: Bracket, xtol: f64, ftol: f64) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (bracket.lo, bracket.hi);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    let done = |x: f64, iterations: usize| Root {
        x,
        iterations,
        converged: true,
        bound: 0.0,
    };
    if fa == 0.0 {
        return Ok(done(a, 0));
    }
    if fb == 0.0 {
        return Ok(done(b, 0));
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::NoSignChange { lo: a, hi: b });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for it in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 || fb.abs() <= ftol {
            return Ok(Root {
                bound: (c - b).abs(),
                ..done(b, it)
            });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(Root {
        x: b,
        iterations: MAX_ITER,
        converged: false,
        bound: (c - b).abs(),
    })
}

/// Grows `hi` by doubling until `f(hi)` has the opposite sign of `f(lo)`,
/// giving up beyond `cap`. The returned bracket always ends at or below `cap`.
pub fn expand_upper<F>(mut f: F, lo: f64, hi_start: f64, cap: f64) -> Result<Bracket>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f_lo = f(lo)?;
    let mut hi = hi_start
        .min(cap)
        .max(lo + f64::EPSILON.max(lo.abs() * 1e-12));
    loop {
        let f_hi = f(hi)?;
        if f_hi.signum() != f_lo.signum() || f_hi == 0.0 {
            return Bracket::new(lo, hi);
        }
        if hi >= cap {
            return Err(Error::NoSignChange { lo, hi });
        }
        hi = (2.0 * hi).min(cap);
    }
}

const INV_GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Brent's derivative-free maximization of `f` on `bracket`.
///
/// Returns `(argmax, max)`. When an endpoint is at least as high as the
/// interior optimum the endpoint is returned, so boundary maxima come back
/// exactly as `lo` or `hi`.
pub fn maximize_1d<F>(mut f: F, bracket: Bracket, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    try_maximize_1d(|x| Ok(f(x)), bracket, tol)
}

pub fn try_maximize_1d<F>(f: F, bracket: Bracket, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let m = maximum_search(f, bracket, tol)?;
    if !m.converged {
        return Err(Error::NoConvergence {
            what: "maximize_1d",
            bound: m.bound,
        });
    }
    Ok((m.x, m.value))
}

/// Outcome of [`maximum_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Width of the final bracket.
    pub bound: f64,
}

/// Brent maximization that reports, rather than rejects, an exhausted
/// iteration budget.
pub fn maximum_search<F>(mut f: F, bracket: Bracket, tol: f64) -> Result<Maximum>
where
    F: FnMut(f64) -> Result<f64>,
{
    // Minimize g = -f.
    let (mut a, mut b) = (bracket.lo, bracket.hi);
    let mut x = a + INV_GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = -f(x)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    let mut converged = false;
    let mut iterations = MAX_ITER;
    for it in 0..MAX_ITER {
        let xm = 0.5 * (a + b);
        let tol1 = f64::EPSILON.sqrt() * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            converged = true;
            iterations = it;
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = INV_GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = -f(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    let mut best = (x, -fx);
    for end in [bracket.lo, bracket.hi] {
        let fe = f(end)?;
        if fe >= best.1 {
            best = (end, fe);
        }
    }
    Ok(Maximum {
        x: best.0,
        value: best.1,
        iterations,
        converged,
        bound: b - a,
    })
}
