//! Point and interval estimators of the between-study variance τ².
//!
//! Every root search works on `[0, hi]` where `hi` starts at
//! `max(1, 10·var(effects))` and doubles up to `10³·max(max v̂ₖ², 1)`.

use serde::{Deserialize, Serialize};

use crate::effects::StudyDsm;
use crate::error::{domain, Error, Result};
use crate::heterogeneity::{check_k, cochran_q, p_moments, q_statistic, WeightScheme};
use crate::numerics::dist::chi_square_quantile;
use crate::numerics::{expand_upper, maximum_search, root_search, Bracket, Root};
use crate::quadform::{eigen_weights, qf_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tau2Method {
    DL,
    REML,
    MP,
    SSC,
    SMC,
}

impl Tau2Method {
    pub const ALL: [Self; 5] = [Self::DL, Self::REML, Self::MP, Self::SSC, Self::SMC];

    pub fn name(self) -> &'static str {
        match self {
            Self::DL => "DL",
            Self::REML => "REML",
            Self::MP => "MP",
            Self::SSC => "SSC",
            Self::SMC => "SMC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tau2Estimate {
    pub method: Tau2Method,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// The untruncated estimate was `≤ 0` and `value` was set to zero.
    pub truncated: bool,
}

impl Tau2Estimate {
    fn closed_form(method: Tau2Method, raw: f64) -> Self {
        Self {
            method,
            value: raw.max(0.0),
            converged: true,
            iterations: 0,
            truncated: raw <= 0.0,
        }
    }

    fn zero(method: Tau2Method) -> Self {
        Self::closed_form(method, 0.0)
    }

    fn from_root(method: Tau2Method, root: Root) -> Self {
        Self {
            method,
            value: root.x.max(0.0),
            converged: root.converged,
            iterations: root.iterations,
            truncated: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tau2IntervalMethod {
    QP,
    PL,
    FPC,
}

impl Tau2IntervalMethod {
    pub const ALL: [Self; 3] = [Self::QP, Self::PL, Self::FPC];

    pub fn name(self) -> &'static str {
        match self {
            Self::QP => "QP",
            Self::PL => "PL",
            Self::FPC => "FPC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tau2Interval {
    pub method: Tau2IntervalMethod,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub converged: bool,
}

impl Tau2Interval {
    pub fn contains(&self, tau2: f64) -> bool {
        self.lo <= tau2 && tau2 <= self.hi
    }
}

const MP_FTOL: f64 = 1e-10;
const CDF_FTOL: f64 = 1e-9;
const QP_FTOL: f64 = 1e-9;
const PL_FTOL: f64 = 1e-8;
const MAX_TOL: f64 = 1e-8;

struct Data {
    y: Vec<f64>,
    v: Vec<f64>,
    n_tilde: Vec<f64>,
}

impl Data {
    fn new(studies: &[StudyDsm]) -> Result<Self> {
        check_k(studies.len())?;
        Ok(Self {
            y: studies.iter().map(|s| s.d_hat).collect(),
            v: studies.iter().map(|s| s.v2_hat).collect(),
            n_tilde: studies.iter().map(|s| s.n_tilde).collect(),
        })
    }

    fn k(&self) -> usize {
        self.y.len()
    }

    fn search_start(&self) -> f64 {
        let k = self.k() as f64;
        let mean = self.y.iter().sum::<f64>() / k;
        let var = self.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (10.0 * var).max(1.0)
    }

    fn search_cap(&self) -> f64 {
        1e3 * self.v.iter().copied().fold(1.0, f64::max)
    }

    /// `Σ wₖ(yₖ − μ̂)²` with `wₖ = 1/(v̂ₖ² + τ²)`, plus `Σw`, `Σw²` and
    /// `Σw²(yₖ − μ̂)²`.
    fn weighted(&self, tau2: f64) -> Weighted {
        let w: Vec<f64> = self.v.iter().map(|v| 1.0 / (v + tau2)).collect();
        let sw: f64 = w.iter().sum();
        let mu = w.iter().zip(&self.y).map(|(w, y)| w * y).sum::<f64>() / sw;
        let mut out = Weighted {
            q: 0.0,
            sw,
            sw2: 0.0,
            sw2r2: 0.0,
            slog: 0.0,
        };
        for ((w, y), v) in w.iter().zip(&self.y).zip(&self.v) {
            let r2 = (y - mu).powi(2);
            out.q += w * r2;
            out.sw2 += w * w;
            out.sw2r2 += w * w * r2;
            out.slog += (v + tau2).ln();
        }
        out
    }

    fn q_gen(&self, tau2: f64) -> f64 {
        self.weighted(tau2).q
    }

    fn q_f(&self) -> Result<f64> {
        Ok(cochran_q(&self.y, &self.n_tilde)?.q)
    }

    fn fssw_cdf(&self, q_f: f64, tau2: f64) -> Result<f64> {
        let var: Vec<f64> = self.v.iter().map(|v| v + tau2).collect();
        qf_cdf(&eigen_weights(&self.n_tilde, &var)?, q_f)
    }

    /// Smallest `τ² > lo` where the decreasing function `h` reaches zero.
    fn descending_root<F>(&self, mut h: F, lo: f64, ftol: f64) -> Result<Root>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let cap = self.search_cap();
        let start = self.search_start().max(2.0 * lo);
        let bracket = expand_upper(&mut h, lo, start, cap).map_err(|e| match e {
            Error::NoSignChange { .. } => Error::NoConvergence {
                what: "tau2 bracket expansion",
                bound: cap,
            },
            other => other,
        })?;
        root_search(h, bracket, 0.0, ftol)
    }
}

struct Weighted {
    q: f64,
    sw: f64,
    sw2: f64,
    sw2r2: f64,
    slog: f64,
}

#[derive(Clone, Copy)]
enum Likelihood {
    Restricted,
    Full,
}

impl Likelihood {
    fn value(self, d: &Data, tau2: f64) -> f64 {
        let s = d.weighted(tau2);
        match self {
            Self::Restricted => -0.5 * (s.slog + s.sw.ln() + s.q),
            Self::Full => -0.5 * (s.slog + s.q),
        }
    }

    fn score(self, d: &Data, tau2: f64) -> f64 {
        let s = d.weighted(tau2);
        match self {
            Self::Restricted => 0.5 * (s.sw2r2 - s.sw + s.sw2 / s.sw),
            Self::Full => 0.5 * (s.sw2r2 - s.sw),
        }
    }

    /// Maximize on `[0, hi]`, then polish interior optima on the score.
    fn maximize(self, d: &Data) -> Result<(Root, bool)> {
        let score0 = self.score(d, 0.0);
        let hi = if score0 > 0.0 {
            let cap = d.search_cap();
            expand_upper(|t| Ok(self.score(d, t)), 0.0, d.search_start(), cap)
                .map_err(|_| Error::NoConvergence {
                    what: "likelihood bracket expansion",
                    bound: cap,
                })?
                .hi
        } else {
            d.search_start()
        };
        let m = maximum_search(|t| Ok(self.value(d, t)), Bracket::new(0.0, hi)?, MAX_TOL)?;
        if m.x <= 0.0 {
            return Ok((
                Root {
                    x: 0.0,
                    iterations: m.iterations,
                    converged: m.converged,
                    bound: m.bound,
                },
                true,
            ));
        }
        let mut out = Root {
            x: m.x,
            iterations: m.iterations,
            converged: m.converged && m.x < hi,
            bound: m.bound,
        };
        let step = 1e-6 * (1.0 + m.x);
        let (a, b) = ((m.x - step).max(0.0), (m.x + step).min(hi));
        if a < b && self.score(d, a) > 0.0 && self.score(d, b) < 0.0 {
            let r = root_search(|t| Ok(self.score(d, t)), Bracket::new(a, b)?, 0.0, 0.0)?;
            if self.value(d, r.x) >= m.value - 1e-12 * m.value.abs() {
                out.x = r.x;
                out.iterations += r.iterations;
            }
        }
        Ok((out, false))
    }
}

/// `Q_gen(τ²)`: Cochran's Q with weights `1/(v̂ₖ² + τ²)`.
pub fn generalized_q(studies: &[StudyDsm], tau2: f64) -> Result<f64> {
    check_tau2(tau2)?;
    Ok(Data::new(studies)?.q_gen(tau2))
}

/// `F(Q_F | τ²)` with plug-in variances `v̂ₖ² + τ²` and weights `ñₖ`.
pub fn fssw_cdf(studies: &[StudyDsm], tau2: f64) -> Result<f64> {
    check_tau2(tau2)?;
    let d = Data::new(studies)?;
    d.fssw_cdf(d.q_f()?, tau2)
}

/// Restricted log-likelihood of τ² (up to a constant).
pub fn restricted_loglik(studies: &[StudyDsm], tau2: f64) -> Result<f64> {
    check_tau2(tau2)?;
    Ok(Likelihood::Restricted.value(&Data::new(studies)?, tau2))
}

/// Log-likelihood of τ² with the mean profiled out (up to a constant).
pub fn profile_loglik(studies: &[StudyDsm], tau2: f64) -> Result<f64> {
    check_tau2(tau2)?;
    Ok(Likelihood::Full.value(&Data::new(studies)?, tau2))
}

fn check_tau2(tau2: f64) -> Result<()> {
    if !(tau2 >= 0.0) || !tau2.is_finite() {
        return Err(domain(format!(
            "tau2 must be nonnegative and finite, got {tau2}"
        )));
    }
    Ok(())
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

pub fn tau2_dl(studies: &[StudyDsm]) -> Result<Tau2Estimate> {
    let q = q_statistic(studies, WeightScheme::InverseVariance)?;
    let sw: f64 = q.weights.iter().sum();
    let sw2: f64 = q.weights.iter().map(|w| w * w).sum();
    let raw = (q.q - (q.k - 1) as f64) / (sw - sw2 / sw);
    Ok(Tau2Estimate::closed_form(Tau2Method::DL, raw))
}

pub fn tau2_mp(studies: &[StudyDsm]) -> Result<Tau2Estimate> {
    let d = Data::new(studies)?;
    let target = (d.k() - 1) as f64;
    if d.q_gen(0.0) <= target {
        return Ok(Tau2Estimate::zero(Tau2Method::MP));
    }
    let root = d.descending_root(|t| Ok(d.q_gen(t) - target), 0.0, MP_FTOL)?;
    Ok(Tau2Estimate::from_root(Tau2Method::MP, root))
}

pub fn tau2_reml(studies: &[StudyDsm]) -> Result<Tau2Estimate> {
    let d = Data::new(studies)?;
    let (root, at_zero) = Likelihood::Restricted.maximize(&d)?;
    Ok(Tau2Estimate {
        truncated: at_zero,
        ..Tau2Estimate::from_root(Tau2Method::REML, root)
    })
}

/// Maximum-likelihood τ², the anchor of the profile-likelihood interval.
pub fn tau2_ml(studies: &[StudyDsm]) -> Result<f64> {
    Ok(Likelihood::Full.maximize(&Data::new(studies)?)?.0.x)
}

pub fn tau2_ssc(studies: &[StudyDsm]) -> Result<Tau2Estimate> {
    let d = Data::new(studies)?;
    let q_f = d.q_f()?;
    let (s, w_sum) = p_moments(&d.n_tilde);
    let plug_in: f64 = d
        .n_tilde
        .iter()
        .zip(&d.v)
        .map(|(w, v)| {
            let p = w / w_sum;
            p * (1.0 - p) * v
        })
        .sum();
    Ok(Tau2Estimate::closed_form(
        Tau2Method::SSC,
        (q_f / w_sum - plug_in) / s,
    ))
}

pub fn tau2_smc(studies: &[StudyDsm]) -> Result<Tau2Estimate> {
    let d = Data::new(studies)?;
    let q_f = d.q_f()?;
    if d.fssw_cdf(q_f, 0.0)? <= 0.5 {
        return Ok(Tau2Estimate::zero(Tau2Method::SMC));
    }
    let root = d.descending_root(|t| Ok(d.fssw_cdf(q_f, t)? - 0.5), 0.0, CDF_FTOL)?;
    Ok(Tau2Estimate::from_root(Tau2Method::SMC, root))
}

pub fn estimate_tau2(studies: &[StudyDsm], method: Tau2Method) -> Result<Tau2Estimate> {
    match method {
        Tau2Method::DL => tau2_dl(studies),
        Tau2Method::REML => tau2_reml(studies),
        Tau2Method::MP => tau2_mp(studies),
        Tau2Method::SSC => tau2_ssc(studies),
        Tau2Method::SMC => tau2_smc(studies),
    }
}

/// Endpoint where the decreasing `h` hits `target`, or 0 when `h(0)` is
/// already at or below it.
fn descending_endpoint<F>(d: &Data, mut h: F, target: f64, ftol: f64) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    if h(0.0)? <= target {
        return Ok(Root {
            x: 0.0,
            iterations: 0,
            converged: true,
            bound: 0.0,
        });
    }
    d.descending_root(|t| Ok(h(t)? - target), 0.0, ftol)
}

fn interval(method: Tau2IntervalMethod, lo: Root, hi: Root, level: f64) -> Tau2Interval {
    let (a, b) = (lo.x.max(0.0), hi.x.max(0.0));
    Tau2Interval {
        method,
        lo: a.min(b),
        hi: b.max(a),
        level,
        converged: lo.converged && hi.converged,
    }
}

pub fn tau2_interval_qp(studies: &[StudyDsm], level: f64) -> Result<Tau2Interval> {
    check_level(level)?;
    let d = Data::new(studies)?;
    let df = (d.k() - 1) as f64;
    let alpha = 1.0 - level;
    let upper_q = chi_square_quantile(1.0 - alpha / 2.0, df)?;
    let lower_q = chi_square_quantile(alpha / 2.0, df)?;
    let lo = descending_endpoint(&d, |t| Ok(d.q_gen(t)), upper_q, QP_FTOL)?;
    let hi = descending_endpoint(&d, |t| Ok(d.q_gen(t)), lower_q, QP_FTOL)?;
    Ok(interval(Tau2IntervalMethod::QP, lo, hi, level))
}

pub fn tau2_interval_fpc(studies: &[StudyDsm], level: f64) -> Result<Tau2Interval> {
    check_level(level)?;
    let d = Data::new(studies)?;
    let q_f = d.q_f()?;
    let alpha = 1.0 - level;
    let lo = descending_endpoint(&d, |t| d.fssw_cdf(q_f, t), 1.0 - alpha / 2.0, CDF_FTOL)?;
    let hi = descending_endpoint(&d, |t| d.fssw_cdf(q_f, t), alpha / 2.0, CDF_FTOL)?;
    Ok(interval(Tau2IntervalMethod::FPC, lo, hi, level))
}

pub fn tau2_interval_pl(studies: &[StudyDsm], level: f64) -> Result<Tau2Interval> {
    check_level(level)?;
    let d = Data::new(studies)?;
    let (ml, _) = Likelihood::Full.maximize(&d)?;
    let t_ml = ml.x;
    let l_max = Likelihood::Full.value(&d, t_ml);
    let threshold = chi_square_quantile(level, 1.0)?;
    let excess = |t: f64| 2.0 * (l_max - Likelihood::Full.value(&d, t)) - threshold;

    let lo = if t_ml > 0.0 && excess(0.0) > 0.0 {
        root_search(|t| Ok(excess(t)), Bracket::new(0.0, t_ml)?, 0.0, PL_FTOL)?
    } else {
        Root {
            x: 0.0,
            iterations: 0,
            converged: true,
            bound: 0.0,
        }
    };
    let cap = d.search_cap().max(2.0 * t_ml);
    let start = d.search_start().max(2.0 * t_ml);
    let bracket = expand_upper(|t| Ok(excess(t)), t_ml, start, cap).map_err(|_| {
        Error::FlatLikelihood(format!(
            "profile deviance stays below {threshold:.4} up to tau2 = {cap:.4e}"
        ))
    })?;
    let hi = root_search(|t| Ok(excess(t)), bracket, 0.0, PL_FTOL)?;
    Ok(interval(Tau2IntervalMethod::PL, lo, hi, level))
}

pub fn tau2_interval(
    studies: &[StudyDsm],
    method: Tau2IntervalMethod,
    level: f64,
) -> Result<Tau2Interval> {
    match method {
        Tau2IntervalMethod::QP => tau2_interval_qp(studies, level),
        Tau2IntervalMethod::PL => tau2_interval_pl(studies, level),
        Tau2IntervalMethod::FPC => tau2_interval_fpc(studies, level),
    }
}
