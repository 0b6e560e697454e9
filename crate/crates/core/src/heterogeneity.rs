//! Cochran's Q under the two weighting schemes and the heterogeneity tests
//! built on it.

use serde::{Deserialize, Serialize};

use crate::effects::StudyDsm;
use crate::error::{domain, Error, Result};
use crate::numerics::dist::chi_square_sf;
use crate::quadform::{eigen_weights, qf_upper_tail};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightScheme {
    /// `wₖ = 1/v̂ₖ²`
    InverseVariance,
    /// `wₖ = ñₖ`
    EffectiveSampleSize,
}

impl WeightScheme {
    pub fn weights(self, studies: &[StudyDsm]) -> Vec<f64> {
        match self {
            Self::InverseVariance => studies.iter().map(|s| 1.0 / s.v2_hat).collect(),
            Self::EffectiveSampleSize => studies.iter().map(|s| s.n_tilde).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QResult {
    pub q: f64,
    /// `None` when the weights were supplied directly.
    pub scheme: Option<WeightScheme>,
    pub k: usize,
    /// Weighted mean of the effects.
    pub mean: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QApproximation {
    /// `Q_IV` referred to `χ²_{K−1}`.
    ChiSq,
    /// `Q_F` referred to its exact quadratic-form distribution with plug-in
    /// variances.
    #[serde(rename = "F_SSW")]
    FSsw,
}

impl QApproximation {
    pub const ALL: [Self; 2] = [Self::ChiSq, Self::FSsw];

    pub fn name(self) -> &'static str {
        match self {
            Self::ChiSq => "ChiSq",
            Self::FSsw => "F_SSW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HetTest {
    pub statistic: f64,
    pub approximation: QApproximation,
    pub p_value: f64,
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        Err(Error::TooFewStudies { need: 2, got: k })
    } else {
        Ok(())
    }
}

pub(crate) fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        Err(Error::DimensionMismatch { left: a, right: b })
    } else {
        Ok(())
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(domain("weights must be positive and finite"));
    }
    Ok(())
}

/// `Q = Σ wₖ (yₖ − ȳ_w)²`.
pub fn cochran_q(effects: &[f64], weights: &[f64]) -> Result<QResult> {
    check_same_len(effects.len(), weights.len())?;
    check_k(effects.len())?;
    check_weights(weights)?;
    if effects.iter().any(|y| !y.is_finite()) {
        return Err(domain("effects must be finite"));
    }
    let w_sum: f64 = weights.iter().sum();
    let mean = effects.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / w_sum;
    let q = effects
        .iter()
        .zip(weights)
        .map(|(y, w)| w * (y - mean).powi(2))
        .sum::<f64>();
    Ok(QResult {
        q,
        scheme: None,
        k: effects.len(),
        mean,
        weights: weights.to_vec(),
    })
}

pub fn q_statistic(studies: &[StudyDsm], scheme: WeightScheme) -> Result<QResult> {
    let effects: Vec<f64> = studies.iter().map(|s| s.d_hat).collect();
    let mut out = cochran_q(&effects, &scheme.weights(studies))?;
    out.scheme = Some(scheme);
    Ok(out)
}

/// `Σ pₖ(1 − pₖ)` with `pₖ = wₖ/W`, and `W`.
pub(crate) fn p_moments(weights: &[f64]) -> (f64, f64) {
    let w_sum: f64 = weights.iter().sum();
    let s = weights
        .iter()
        .map(|w| {
            let p = w / w_sum;
            p * (1.0 - p)
        })
        .sum();
    (s, w_sum)
}

/// `E(Q_F) = W Σ pₖ(1 − pₖ)(vₖ² + τ²)`.
pub fn expected_qf(weights: &[f64], variances: &[f64], tau2: f64) -> Result<f64> {
    check_same_len(weights.len(), variances.len())?;
    check_k(weights.len())?;
    check_weights(weights)?;
    if !(tau2 >= 0.0) || !tau2.is_finite() {
        return Err(domain(format!("tau2 must be nonnegative, got {tau2}")));
    }
    if variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(domain("variances must be nonnegative and finite"));
    }
    let w_sum: f64 = weights.iter().sum();
    Ok(weights
        .iter()
        .zip(variances)
        .map(|(w, v)| {
            let p = w / w_sum;
            p * (1.0 - p) * (v + tau2)
        })
        .sum::<f64>()
        * w_sum)
}

pub fn het_test(studies: &[StudyDsm], approximation: QApproximation) -> Result<HetTest> {
    check_k(studies.len())?;
    let (statistic, p_value) = match approximation {
        QApproximation::ChiSq => {
            let q = q_statistic(studies, WeightScheme::InverseVariance)?.q;
            (q, chi_square_sf(q, (studies.len() - 1) as f64)?)
        }
        QApproximation::FSsw => {
            let q = q_statistic(studies, WeightScheme::EffectiveSampleSize)?;
            let v2: Vec<f64> = studies.iter().map(|s| s.v2_hat).collect();
            let spec = eigen_weights(&q.weights, &v2)?;
            (q.q, qf_upper_tail(&spec, q.q)?)
        }
    };
    Ok(HetTest {
        statistic,
        approximation,
        p_value: p_value.clamp(0.0, 1.0),
    })
}
