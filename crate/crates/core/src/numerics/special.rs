//! Gamma-function helpers and the Hedges small-sample correction.

use crate::error::{domain, Result};

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma(x))
}

/// Unchecked `ln Γ(x)`; Stirling series above 10, Lanczos below.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    if x >= STIRLING_MIN {
        (x - 0.5) * x.ln() - x + HALF_LN_2PI + stirling_tail(x)
    } else {
        statrs::function::gamma::ln_gamma(x)
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const STIRLING_MIN: f64 = 10.0;

/// `ln Γ(z) − [(z − ½) ln z − z + ½ ln 2π]`, valid for `z ≥ 10` to full
/// double precision.
fn stirling_tail(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    r * (1.0 / 12.0
        + r2 * (-1.0 / 360.0
            + r2 * (1.0 / 1260.0
                + r2 * (-1.0 / 1680.0
                    + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360_360.0 + r2 / 156.0))))))
}

/// `ln Γ(z + ½) − ln Γ(z)` without the cancellation of subtracting two
/// large log-gammas.
pub(crate) fn ln_gamma_half_ratio(z: f64) -> f64 {
    if z >= STIRLING_MIN {
        // (z)·ln(1 + 1/(2z)) + ½ ln z − ½ plus the tail difference
        z * (0.5 / z).ln_1p() + 0.5 * z.ln() - 0.5 + stirling_tail(z + 0.5) - stirling_tail(z)
    } else {
        // ratio(z) = ratio(z + 1) − ln(1 + 1/(2z))
        let mut shift = 0.0;
        let mut zz = z;
        while zz < STIRLING_MIN {
            shift += (0.5 / zz).ln_1p();
            zz += 1.0;
        }
        ln_gamma_half_ratio(zz) - shift
    }
}

/// Hedges correction `J(m) = Γ(m/2) / (√(m/2) Γ((m−1)/2))`.
///
/// `J(n − 1)·X̄/s` is unbiased for `μ/σ` with normal data.
pub fn hedges_j(m: f64) -> Result<f64> {
    if !(m > 1.0) || !m.is_finite() {
        return Err(domain(format!("hedges_j requires m > 1, got {m}")));
    }
    let z = 0.5 * (m - 1.0);
    Ok((ln_gamma_half_ratio(z) - 0.5 * (0.5 * m).ln()).exp())
}
