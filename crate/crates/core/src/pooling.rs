//! Point and interval estimators of the overall effect Δ.

use serde::{Deserialize, Serialize};

use crate::effects::StudyDsm;
use crate::error::{domain, Error, Result};
use crate::numerics::dist::{normal_quantile, student_t_quantile};
use crate::tau2::{estimate_tau2, tau2_dl, Tau2Estimate, Tau2Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EffectMethod {
    SSW,
    #[serde(rename = "IV-DL")]
    IvDl,
    #[serde(rename = "IV-REML")]
    IvReml,
    #[serde(rename = "IV-MP")]
    IvMp,
}

impl EffectMethod {
    pub const ALL: [Self; 4] = [Self::SSW, Self::IvDl, Self::IvReml, Self::IvMp];

    pub fn name(self) -> &'static str {
        match self {
            Self::SSW => "SSW",
            Self::IvDl => "IV-DL",
            Self::IvReml => "IV-REML",
            Self::IvMp => "IV-MP",
        }
    }

    /// The τ² estimator behind the weights; `None` for SSW.
    pub fn tau2_method(self) -> Option<Tau2Method> {
        match self {
            Self::SSW => None,
            Self::IvDl => Some(Tau2Method::DL),
            Self::IvReml => Some(Tau2Method::REML),
            Self::IvMp => Some(Tau2Method::MP),
        }
    }

    fn iv(tau2: Tau2Method) -> Result<Self> {
        match tau2 {
            Tau2Method::DL => Ok(Self::IvDl),
            Tau2Method::REML => Ok(Self::IvReml),
            Tau2Method::MP => Ok(Self::IvMp),
            other => Err(domain(format!(
                "inverse-variance pooling takes DL, REML or MP, got {}",
                other.name()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub method: EffectMethod,
    pub value: f64,
    pub se: f64,
    pub tau2_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EffectIntervalMethod {
    DL,
    REML,
    MP,
    HKSJ,
    SMC,
    SSC,
}

impl EffectIntervalMethod {
    pub const ALL: [Self; 6] = [
        Self::DL,
        Self::REML,
        Self::MP,
        Self::HKSJ,
        Self::SMC,
        Self::SSC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DL => "DL",
            Self::REML => "REML",
            Self::MP => "MP",
            Self::HKSJ => "HKSJ",
            Self::SMC => "SMC",
            Self::SSC => "SSC",
        }
    }

    /// τ² estimator behind the interval.
    pub fn tau2_method(self) -> Tau2Method {
        match self {
            Self::DL | Self::HKSJ => Tau2Method::DL,
            Self::REML => Tau2Method::REML,
            Self::MP => Tau2Method::MP,
            Self::SMC => Tau2Method::SMC,
            Self::SSC => Tau2Method::SSC,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectInterval {
    pub method: EffectIntervalMethod,
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl EffectInterval {
    fn symmetric(method: EffectIntervalMethod, center: f64, half: f64, level: f64) -> Self {
        Self {
            method,
            center,
            lo: center - half,
            hi: center + half,
            level,
        }
    }

    pub fn contains(&self, delta: f64) -> bool {
        self.lo <= delta && delta <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn check_nonempty(studies: &[StudyDsm]) -> Result<()> {
    if studies.is_empty() {
        return Err(Error::TooFewStudies { need: 1, got: 0 });
    }
    Ok(())
}

fn check_interval_input(studies: &[StudyDsm], level: f64) -> Result<()> {
    if studies.len() < 2 {
        return Err(Error::TooFewStudies {
            need: 2,
            got: studies.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

fn check_tau2(tau2: f64) -> Result<()> {
    if !(tau2 >= 0.0) || !tau2.is_finite() {
        return Err(domain(format!(
            "tau2 must be nonnegative and finite, got {tau2}"
        )));
    }
    Ok(())
}

/// `z_{1−α/2}` for a two-sided interval at `level`.
fn two_sided_z(level: f64) -> Result<f64> {
    normal_quantile(0.5 + 0.5 * level)
}

/// `Σñₖ d̂ₖ / Σñₖ`. The attached `se` assumes τ² = 0.
pub fn pool_ssw(studies: &[StudyDsm]) -> Result<EffectEstimate> {
    check_nonempty(studies)?;
    let n_sum: f64 = studies.iter().map(|s| s.n_tilde).sum();
    let value = studies.iter().map(|s| s.n_tilde * s.d_hat).sum::<f64>() / n_sum;
    Ok(EffectEstimate {
        method: EffectMethod::SSW,
        value,
        se: ssw_se(studies, 0.0),
        tau2_used: 0.0,
    })
}

/// `√(Σñₖ²(v̂ₖ² + τ²)) / Σñₖ`.
fn ssw_se(studies: &[StudyDsm], tau2: f64) -> f64 {
    let n_sum: f64 = studies.iter().map(|s| s.n_tilde).sum();
    let num: f64 = studies
        .iter()
        .map(|s| s.n_tilde * s.n_tilde * (s.v2_hat + tau2))
        .sum();
    num.sqrt() / n_sum
}

/// Inverse-variance pooling with weights `1/(v̂ₖ² + τ̂²)`.
pub fn pool_iv(studies: &[StudyDsm], tau2: &Tau2Estimate) -> Result<EffectEstimate> {
    let method = EffectMethod::iv(tau2.method)?;
    let mut out = pool_iv_with(studies, tau2.value)?;
    out.method = method;
    Ok(out)
}

/// [`pool_iv`] for a bare τ² value; labeled `IV-DL` unless relabeled.
pub fn pool_iv_with(studies: &[StudyDsm], tau2: f64) -> Result<EffectEstimate> {
    check_nonempty(studies)?;
    check_tau2(tau2)?;
    let (mu, sw) = iv_mean(studies, tau2);
    Ok(EffectEstimate {
        method: EffectMethod::IvDl,
        value: mu,
        se: sw.sqrt().recip(),
        tau2_used: tau2,
    })
}

fn iv_mean(studies: &[StudyDsm], tau2: f64) -> (f64, f64) {
    let mut sw = 0.0;
    let mut swy = 0.0;
    for s in studies {
        let w = 1.0 / (s.v2_hat + tau2);
        sw += w;
        swy += w * s.d_hat;
    }
    (swy / sw, sw)
}

/// Normal-quantile interval around the inverse-variance estimate with τ²
/// from DL, REML or MP.
pub fn ci_iv_normal(
    studies: &[StudyDsm],
    tau2_method: Tau2Method,
    level: f64,
) -> Result<EffectInterval> {
    check_interval_input(studies, level)?;
    let tau2 = estimate_tau2(studies, tau2_method)?;
    ci_iv_normal_with(studies, &tau2, level)
}

pub fn ci_iv_normal_with(
    studies: &[StudyDsm],
    tau2: &Tau2Estimate,
    level: f64,
) -> Result<EffectInterval> {
    check_interval_input(studies, level)?;
    let est = pool_iv(studies, tau2)?;
    let method = match tau2.method {
        Tau2Method::DL => EffectIntervalMethod::DL,
        Tau2Method::REML => EffectIntervalMethod::REML,
        _ => EffectIntervalMethod::MP,
    };
    Ok(EffectInterval::symmetric(
        method,
        est.value,
        two_sided_z(level)? * est.se,
        level,
    ))
}

/// Hartung–Knapp–Sidik–Jonkman interval with τ² from DL.
pub fn ci_hksj(studies: &[StudyDsm], level: f64) -> Result<EffectInterval> {
    check_interval_input(studies, level)?;
    ci_hksj_with(studies, tau2_dl(studies)?.value, level)
}

pub fn ci_hksj_with(studies: &[StudyDsm], tau2: f64, level: f64) -> Result<EffectInterval> {
    check_interval_input(studies, level)?;
    check_tau2(tau2)?;
    let (mu, sw) = iv_mean(studies, tau2);
    let df = (studies.len() - 1) as f64;
    let q = studies
        .iter()
        .map(|s| (s.d_hat - mu).powi(2) / (s.v2_hat + tau2))
        .sum::<f64>()
        / df;
    let t = student_t_quantile(0.5 + 0.5 * level, df)?;
    Ok(EffectInterval::symmetric(
        EffectIntervalMethod::HKSJ,
        mu,
        t * (q / sw).sqrt(),
        level,
    ))
}

/// Normal interval centered at SSW with τ² from SMC or SSC.
pub fn ci_ssw(studies: &[StudyDsm], tau2_method: Tau2Method, level: f64) -> Result<EffectInterval> {
    check_interval_input(studies, level)?;
    let tau2 = estimate_tau2(studies, tau2_method)?;
    ci_ssw_with(studies, &tau2, level)
}

pub fn ci_ssw_with(
    studies: &[StudyDsm],
    tau2: &Tau2Estimate,
    level: f64,
) -> Result<EffectInterval> {
    check_interval_input(studies, level)?;
    let method = match tau2.method {
        Tau2Method::SMC => EffectIntervalMethod::SMC,
        Tau2Method::SSC => EffectIntervalMethod::SSC,
        other => {
            return Err(domain(format!(
                "SSW intervals take SMC or SSC, got {}",
                other.name()
            )))
        }
    };
    check_tau2(tau2.value)?;
    let center = pool_ssw(studies)?.value;
    let half = two_sided_z(level)? * ssw_se(studies, tau2.value);
    Ok(EffectInterval::symmetric(method, center, half, level))
}

pub fn effect_interval(
    studies: &[StudyDsm],
    method: EffectIntervalMethod,
    level: f64,
) -> Result<EffectInterval> {
    match method {
        EffectIntervalMethod::HKSJ => ci_hksj(studies, level),
        EffectIntervalMethod::SMC | EffectIntervalMethod::SSC => {
            ci_ssw(studies, method.tau2_method(), level)
        }
        _ => ci_iv_normal(studies, method.tau2_method(), level),
    }
}
