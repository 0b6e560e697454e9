//! Distribution of the weighted centering quadratic form
//! `Q = Σ wₖ (yₖ − ȳ_w)²` for independent normal `yₖ`.
//!
//! With `yₖ ~ N(μ, σₖ²)` the form reduces to `Σ λᵢ χ²₁,ᵢ`, where the `λᵢ`
//! are the eigenvalues of `D^{1/2} A D^{1/2}`, `D = diag(σₖ²)` and
//! `A = diag(w) − w wᵀ / W`. The common mean drops out because `A·1 = 0`.
//!
//! The CDF is evaluated with Ruben's expansion as a mixture of central
//! chi-squares (the scheme behind Farebrother's AS 204). When its error
//! bound is still above [`SERIES_ACCEPT`] after [`SERIES_MAX_TERMS`] terms,
//! Imhof's inversion of the characteristic function is used instead.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{domain, Error, Result};
use crate::numerics::quadrature::gauss_legendre;
use crate::numerics::special::ln_gamma;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const ZERO_EIGEN_REL: f64 = 1e-10;
/// Series error bound the iteration aims for.
const SERIES_TARGET: f64 = 1e-12;
/// Largest series error bound accepted before falling back to inversion.
pub const SERIES_ACCEPT: f64 = 1e-6;
pub const SERIES_MAX_TERMS: usize = 10_000;

/// Weights of a linear combination of independent central `χ²₁` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormSpec {
    /// Sorted in decreasing order; clamped zeros are kept as exact `0.0`.
    lambdas: Vec<f64>,
}

impl QuadFormSpec {
    pub fn new(mut lambdas: Vec<f64>) -> Result<Self> {
        if lambdas
            .iter()
            .any(|l| !l.is_finite() || *l < -ZERO_EIGEN_REL)
        {
            return Err(domain(
                "quadratic-form weights must be finite and nonnegative",
            ));
        }
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let max = lambdas.first().copied().unwrap_or(0.0).max(0.0);
        for l in &mut lambdas {
            if *l <= ZERO_EIGEN_REL * max {
                *l = 0.0;
            }
        }
        Ok(Self { lambdas })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// The strictly positive weights.
    pub fn positive(&self) -> &[f64] {
        let n = self.lambdas.iter().take_while(|l| **l > 0.0).count();
        &self.lambdas[..n]
    }

    /// `E(Q) = Σ λᵢ`.
    pub fn mean(&self) -> f64 {
        self.lambdas.iter().sum()
    }

    /// Same form with every weight multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lambdas: self.lambdas.iter().map(|l| l * c).collect(),
        }
    }
}

/// Eigenvalues of `D^{1/2} (diag(w) − w wᵀ/W) D^{1/2}` for positive weights
/// `w` and variances `D = diag(variances)`.
pub fn eigen_weights(weights: &[f64], variances: &[f64]) -> Result<QuadFormSpec> {
    let k = weights.len();
    if variances.len() != k {
        return Err(Error::DimensionMismatch {
            left: k,
            right: variances.len(),
        });
    }
    if k < 2 {
        return Err(Error::TooFewStudies { need: 2, got: k });
    }
    if weights
        .iter()
        .chain(variances)
        .any(|v| !(*v > 0.0) || !v.is_finite())
    {
        return Err(domain("weights and variances must be positive and finite"));
    }
    let total: f64 = weights.iter().sum();
    let sd: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let m = DMatrix::from_fn(k, k, |i, j| {
        let diag = if i == j { weights[i] } else { 0.0 };
        sd[i] * sd[j] * (diag - weights[i] * weights[j] / total)
    });
    let eig = SymmetricEigen::new(m).eigenvalues;
    QuadFormSpec::new(eig.iter().map(|l| l.max(0.0)).collect())
}

/// `P(Σ λᵢ χ²₁ ≤ x)`.
pub fn qf_cdf(spec: &QuadFormSpec, x: f64) -> Result<f64> {
    Ok(qf_both(spec, x)?.0)
}

/// `P(Σ λᵢ χ²₁ > x)`, summed directly rather than as `1 − cdf`.
pub fn qf_upper_tail(spec: &QuadFormSpec, x: f64) -> Result<f64> {
    Ok(qf_both(spec, x)?.1)
}

fn qf_both(spec: &QuadFormSpec, x: f64) -> Result<(f64, f64)> {
    if !x.is_finite() {
        return Err(domain(format!("quadratic-form CDF at non-finite x={x}")));
    }
    let lambdas = spec.positive();
    if lambdas.is_empty() {
        // Q ≡ 0
        return Ok(if x >= 0.0 { (1.0, 0.0) } else { (0.0, 1.0) });
    }
    if x <= 0.0 {
        return Ok((0.0, 1.0));
    }
    let series = ruben_series(lambdas, x);
    if series.bound <= SERIES_ACCEPT {
        return Ok((series.cdf, series.sf));
    }
    let sf = imhof_upper_tail(lambdas, x)?;
    Ok((1.0 - sf, sf))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SeriesResult {
    pub cdf: f64,
    pub sf: f64,
    /// Upper bound on the truncation error of either tail.
    pub bound: f64,
}

/// Ruben's expansion `P(Q ≤ x) = Σₖ aₖ P(χ²_{N+2k} ≤ x/β)` with
/// `β = min λ`, so that every `aₖ ≥ 0` and `Σ aₖ = 1`; the unsummed mass
/// then bounds the truncation error.
pub(crate) fn ruben_series(lambdas: &[f64], x: f64) -> SeriesResult {
    let n = lambdas.len();
    let beta = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let gammas: Vec<f64> = lambdas.iter().map(|l| 1.0 - beta / l).collect();
    let mut powers = gammas.clone();

    let a0 = (0.5 * lambdas.iter().map(|l| (beta / l).ln()).sum::<f64>()).exp();
    let y = 0.5 * x / beta;
    let mut half_df = 0.5 * n as f64;
    let mut lower = gamma_lr(half_df, y);
    let mut upper = gamma_ur(half_df, y);
    // (x/2β)^{m/2} e^{−x/2β} / Γ(m/2 + 1), the step between adjacent df
    let mut step = (half_df * y.ln() - y - ln_gamma(half_df + 1.0)).exp();

    let mut a = Vec::with_capacity(64);
    let mut g = Vec::with_capacity(64);
    a.push(a0);
    g.push(0.0);
    let mut cdf = a0 * lower;
    let mut sf = a0 * upper;
    let mut mass = a0;
    let mut bound = 1.0 - mass;
    for k in 1..=SERIES_MAX_TERMS {
        g.push(powers.iter().sum());
        for (p, gm) in powers.iter_mut().zip(&gammas) {
            *p *= gm;
        }
        let conv: f64 = (0..k).map(|r| g[k - r] * a[r]).sum();
        let ak = conv / (2.0 * k as f64);
        a.push(ak);

        lower = (lower - step).max(0.0);
        upper = (upper + step).min(1.0);
        step *= y / (half_df + 1.0);
        half_df += 1.0;

        cdf += ak * lower;
        sf += ak * upper;
        mass += ak;
        bound = (1.0 - mass).max(0.0);
        if bound <= SERIES_TARGET {
            break;
        }
    }
    SeriesResult {
        cdf: cdf.clamp(0.0, 1.0),
        sf: sf.clamp(0.0, 1.0),
        bound,
    }
}

const IMHOF_TARGET: f64 = 1e-8;
const IMHOF_MAX_PANELS: usize = 5_000_000;

/// Imhof's formula
/// `P(Q > x) = ½ + (1/π) ∫₀^∞ sin θ(u) / (u ρ(u)) du`,
/// `θ(u) = ½ Σ atan(λⱼ u) − ½ x u`, `ρ(u) = Π (1 + λⱼ² u²)^{1/4}`.
pub(crate) fn imhof_upper_tail(lambdas: &[f64], x: f64) -> Result<f64> {
    // Truncation point: ∫_U^∞ du/(uρ) ≤ 2 / (m U^{m/2} Π_S √λ) for the
    // subset S = {λ ≥ 1/U} of size m.
    let trunc_bound = |u: f64| -> f64 {
        let big: Vec<f64> = lambdas.iter().copied().filter(|l| l * u >= 1.0).collect();
        if big.is_empty() {
            return f64::INFINITY;
        }
        let m = big.len() as f64;
        let log_prod: f64 = big.iter().map(|l| 0.5 * (l * u).ln()).sum();
        2.0 / (m * log_prod.exp()) / std::f64::consts::PI
    };
    let lmax = lambdas.iter().copied().fold(0.0, f64::max);
    let mut upper = 1.0 / lmax;
    while trunc_bound(upper) > IMHOF_TARGET {
        upper *= 2.0;
        if !upper.is_finite() || upper * lmax > 1e300 {
            return Err(Error::NoConvergence {
                what: "qf_cdf (inversion)",
                bound: trunc_bound(upper),
            });
        }
    }
    let freq = 0.5 * (lambdas.iter().sum::<f64>() + x);
    let width = (2.0 * std::f64::consts::PI / freq).min(0.5 / lmax);
    let panels = (upper / width).ceil() as usize;
    if panels > IMHOF_MAX_PANELS {
        return Err(Error::NoConvergence {
            what: "qf_cdf (inversion)",
            bound: trunc_bound(upper),
        });
    }
    let integrand = |u: f64| {
        let theta = 0.5 * lambdas.iter().map(|l| (l * u).atan()).sum::<f64>() - 0.5 * x * u;
        let log_rho = 0.25 * lambdas.iter().map(|l| (l * l * u * u).ln_1p()).sum::<f64>();
        theta.sin() / (u * log_rho.exp())
    };
    let integral = gauss_legendre(integrand, 0.0, upper, panels.max(1));
    Ok((0.5 + integral / std::f64::consts::PI).clamp(0.0, 1.0))
}
