//! Per-arm standardized means and the per-study difference of standardized
//! means.
//!
//! For an arm with `n` observations, mean `X̄` and standard deviation `s`,
//! `d = X̄/s` and `g = J(n−1)·d` is unbiased for `δ = μ/σ` under normal
//! data; `√n·g/J(n−1)` follows a noncentral t with `n − 1` degrees of
//! freedom and noncentrality `√n·δ`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::hedges_j;

/// Smallest arm size for which the variance formulas are finite.
pub const MIN_ARM_SIZE: u32 = 4;

/// Raw summary statistics of one study arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub n: u32,
    pub mean: f64,
    pub sd: f64,
}

impl ArmSummary {
    pub fn new(n: u32, mean: f64, sd: f64) -> Result<Self> {
        check_arm_size(n)?;
        if !mean.is_finite() {
            return Err(domain(format!("arm mean must be finite, got {mean}")));
        }
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(domain(format!(
                "arm sd must be positive and finite, got {sd}"
            )));
        }
        Ok(Self { n, mean, sd })
    }
}

fn check_arm_size(n: u32) -> Result<()> {
    if n < MIN_ARM_SIZE {
        Err(domain(format!(
            "arm size must be at least {MIN_ARM_SIZE}, got {n}"
        )))
    } else {
        Ok(())
    }
}

/// One study's DSM and its estimated variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyDsm {
    pub g_t: f64,
    pub g_c: f64,
    /// `g_T − g_C`
    pub d_hat: f64,
    /// Unbiased estimate of `Var(d_hat)`.
    pub v2_hat: f64,
    pub n_t: u32,
    pub n_c: u32,
    /// Effective sample size `n_T·n_C/(n_T + n_C)`.
    pub n_tilde: f64,
}

impl StudyDsm {
    /// Build from already bias-corrected standardized means.
    pub fn from_corrected(g_t: f64, n_t: u32, g_c: f64, n_c: u32) -> Result<Self> {
        if !g_t.is_finite() || !g_c.is_finite() {
            return Err(domain("standardized means must be finite"));
        }
        let v2_hat = var_g_hat(n_t, g_t)? + var_g_hat(n_c, g_c)?;
        let (nt, nc) = (f64::from(n_t), f64::from(n_c));
        Ok(Self {
            g_t,
            g_c,
            d_hat: g_t - g_c,
            v2_hat,
            n_t,
            n_c,
            n_tilde: nt * nc / (nt + nc),
        })
    }
}

/// Third and fourth standardized moments of the outcome distribution,
/// shared by both arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub alpha3: f64,
    pub alpha4: f64,
}

impl MomentPair {
    pub const NORMAL: Self = Self {
        alpha3: 0.0,
        alpha4: 3.0,
    };

    pub fn new(alpha3: f64, alpha4: f64) -> Result<Self> {
        if !alpha3.is_finite() || !alpha4.is_finite() || alpha4 < 1.0 + alpha3 * alpha3 {
            return Err(domain(format!(
                "moments violate alpha4 >= 1 + alpha3^2 (alpha3={alpha3}, alpha4={alpha4})"
            )));
        }
        Ok(Self { alpha3, alpha4 })
    }
}

/// `(d, g)` for one arm.
pub fn standardized_mean(arm: &ArmSummary) -> Result<(f64, f64)> {
    check_arm_size(arm.n)?;
    let d = arm.mean / arm.sd;
    let g = hedges_j(f64::from(arm.n - 1))? * d;
    Ok((d, g))
}

/// `Var(g)` for true standardized mean `delta`.
pub fn var_g_true(n: u32, delta: f64) -> Result<f64> {
    check_arm_size(n)?;
    let nf = f64::from(n);
    let j = hedges_j(nf - 1.0)?;
    let d2 = delta * delta;
    Ok((nf - 1.0) * j * j / (nf * (nf - 3.0)) * (1.0 + nf * d2) - d2)
}

/// Coefficient of `g²` in the unbiased variance estimate,
/// `1 − (n−3)/((n−1)·J²(n−1))`; nonnegative for every `n ≥ 4`.
pub fn g_squared_coefficient(n: u32) -> Result<f64> {
    check_arm_size(n)?;
    let nf = f64::from(n);
    let j = hedges_j(nf - 1.0)?;
    Ok(1.0 - (nf - 3.0) / ((nf - 1.0) * j * j))
}

/// Unbiased estimate of `Var(g)` given the observed `g`.
pub fn var_g_hat(n: u32, g: f64) -> Result<f64> {
    Ok(1.0 / f64::from(n) + g_squared_coefficient(n)? * g * g)
}

pub fn study_dsm(treatment: &ArmSummary, control: &ArmSummary) -> Result<StudyDsm> {
    let (_, g_t) = standardized_mean(treatment)?;
    let (_, g_c) = standardized_mean(control)?;
    StudyDsm::from_corrected(g_t, treatment.n, g_c, control.n)
}

/// Large-sample variance of `d_hat` for outcome distributions with
/// standardized moments `moments`.
pub fn asymptotic_variance(
    delta_t: f64,
    delta_c: f64,
    n_t: u32,
    n_c: u32,
    moments: MomentPair,
) -> Result<f64> {
    if n_t == 0 || n_c == 0 {
        return Err(domain("arm sizes must be positive"));
    }
    let (nt, nc) = (f64::from(n_t), f64::from(n_c));
    let n_tilde = nt * nc / (nt + nc);
    let v = 1.0 / n_tilde - (delta_t / nt + delta_c / nc) * moments.alpha3
        + (delta_t * delta_t / nt + delta_c * delta_c / nc) * (moments.alpha4 - 1.0) / 4.0;
    if !(v > 0.0) {
        return Err(domain(format!(
            "asymptotic variance is not positive ({v}); check the moment inputs"
        )));
    }
    Ok(v)
}
