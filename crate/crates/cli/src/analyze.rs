//! The `analyze` report: every estimator, interval and test on one data set.

use std::fmt::Write as _;

use dsm_core::heterogeneity::q_statistic;
use dsm_core::pooling::{effect_interval, pool_iv, pool_ssw};
use dsm_core::tau2::{estimate_tau2, tau2_interval};
use dsm_core::{
    het_test, EffectEstimate, EffectInterval, EffectIntervalMethod, EffectMethod, HetTest,
    QApproximation, Tau2Estimate, Tau2Interval, Tau2IntervalMethod, Tau2Method, WeightScheme,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::input::StudyRecord;
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub study_id: String,
    pub g_t: f64,
    pub n_t: u32,
    pub g_c: f64,
    pub n_c: u32,
    pub d_hat: f64,
    pub v2_hat: f64,
    pub n_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRow {
    /// `IV` or `F`.
    pub weights: String,
    pub q: f64,
    pub weighted_mean: f64,
}

/// Result of one method; exactly one of `result` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome<T> {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T> Outcome<T> {
    fn new(method: &str, r: dsm_core::Result<T>) -> Self {
        let (result, error) = match r {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            method: method.into(),
            result,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub level: f64,
    pub k: usize,
    pub studies: Vec<StudyRow>,
    pub q: Vec<QRow>,
    pub heterogeneity: Vec<Outcome<HetTest>>,
    pub tau2: Vec<Outcome<Tau2Estimate>>,
    pub tau2_intervals: Vec<Outcome<Tau2Interval>>,
    pub effects: Vec<Outcome<EffectEstimate>>,
    pub effect_intervals: Vec<Outcome<EffectInterval>>,
}

impl Report {
    /// True when no estimator, interval or test produced a result.
    pub fn all_failed(&self) -> bool {
        self.heterogeneity.iter().all(|o| o.result.is_none())
            && self.tau2.iter().all(|o| o.result.is_none())
            && self.tau2_intervals.iter().all(|o| o.result.is_none())
            && self.effects.iter().all(|o| o.result.is_none())
            && self.effect_intervals.iter().all(|o| o.result.is_none())
    }
}

pub fn analyze(records: &[StudyRecord], level: f64) -> Result<Report> {
    if records.len() < 2 {
        return Err(CliError::Input(format!(
            "need at least 2 studies, got {}",
            records.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Input(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let studies: Vec<_> = records.iter().map(|r| r.dsm).collect();

    let rows = records
        .iter()
        .map(|r| StudyRow {
            study_id: r.study_id.clone(),
            g_t: r.dsm.g_t,
            n_t: r.dsm.n_t,
            g_c: r.dsm.g_c,
            n_c: r.dsm.n_c,
            d_hat: r.dsm.d_hat,
            v2_hat: r.dsm.v2_hat,
            n_tilde: r.dsm.n_tilde,
        })
        .collect();

    let mut q = Vec::new();
    for (name, scheme) in [
        ("IV", WeightScheme::InverseVariance),
        ("F", WeightScheme::EffectiveSampleSize),
    ] {
        let r = q_statistic(&studies, scheme)?;
        q.push(QRow {
            weights: name.into(),
            q: r.q,
            weighted_mean: r.mean,
        });
    }

    let heterogeneity = QApproximation::ALL
        .iter()
        .map(|a| Outcome::new(a.name(), het_test(&studies, *a)))
        .collect();

    let estimates: Vec<_> = Tau2Method::ALL
        .iter()
        .map(|m| (*m, estimate_tau2(&studies, *m)))
        .collect();
    let tau2 = estimates
        .iter()
        .map(|(m, e)| Outcome::new(m.name(), e.clone()))
        .collect();

    let tau2_intervals = Tau2IntervalMethod::ALL
        .iter()
        .map(|m| Outcome::new(m.name(), tau2_interval(&studies, *m, level)))
        .collect();

    let effects = EffectMethod::ALL
        .iter()
        .map(|m| {
            let r = match m.tau2_method() {
                None => pool_ssw(&studies),
                Some(t) => {
                    let est = &estimates
                        .iter()
                        .find(|(x, _)| *x == t)
                        .expect("all methods")
                        .1;
                    est.clone().and_then(|e| pool_iv(&studies, &e))
                }
            };
            Outcome::new(m.name(), r)
        })
        .collect();

    let effect_intervals = EffectIntervalMethod::ALL
        .iter()
        .map(|m| Outcome::new(m.name(), effect_interval(&studies, *m, level)))
        .collect();

    Ok(Report {
        format_version: FORMAT_VERSION,
        level,
        k: records.len(),
        studies: rows,
        q,
        heterogeneity,
        tau2,
        tau2_intervals,
        effects,
        effect_intervals,
    })
}

fn section<T>(
    out: &mut String,
    title: &str,
    header: &str,
    rows: &[Outcome<T>],
    fmt: impl Fn(&T) -> String,
) {
    let _ = writeln!(out, "\n{title}\n  {:<8}{header}", "method");
    for o in rows {
        let body = match (&o.result, &o.error) {
            (Some(r), _) => fmt(r),
            (None, Some(e)) => format!("failed: {e}"),
            (None, None) => "failed".into(),
        };
        let _ = writeln!(out, "  {:<8}{body}", o.method);
    }
}

/// Plain-text rendering of a report.
pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "studies (K = {})", r.k);
    let _ = writeln!(
        out,
        "  {:<12}{:>6}{:>12}{:>6}{:>12}{:>12}{:>12}{:>10}",
        "study_id", "n_t", "g_t", "n_c", "g_c", "d_hat", "v2_hat", "n_tilde"
    );
    for s in &r.studies {
        let _ = writeln!(
            out,
            "  {:<12}{:>6}{:>12.6}{:>6}{:>12.6}{:>12.6}{:>12.6}{:>10.3}",
            s.study_id, s.n_t, s.g_t, s.n_c, s.g_c, s.d_hat, s.v2_hat, s.n_tilde
        );
    }
    let _ = writeln!(out, "\nQ statistics");
    for q in &r.q {
        let _ = writeln!(
            out,
            "  Q_{:<6}{:>12.6}  weighted mean {:.6}",
            q.weights, q.q, q.weighted_mean
        );
    }
    section(
        &mut out,
        "heterogeneity tests",
        "       statistic     p-value",
        &r.heterogeneity,
        |t| format!("{:>16.6}{:>12.6}", t.statistic, t.p_value),
    );
    section(&mut out, "tau^2 estimates", "     estimate", &r.tau2, |t| {
        let mut s = format!("{:>13.6}", t.value);
        if t.truncated {
            s.push_str("  (truncated at 0)");
        }
        if !t.converged {
            s.push_str("  (not converged)");
        }
        s
    });
    let pct = r.level * 100.0;
    section(
        &mut out,
        &format!("{pct}% intervals for tau^2"),
        "           lo           hi",
        &r.tau2_intervals,
        |t| {
            let mut s = format!("{:>13.6}{:>13.6}", t.lo, t.hi);
            if !t.converged {
                s.push_str("  (not converged)");
            }
            s
        },
    );
    section(
        &mut out,
        "overall effect",
        "     estimate           se    tau^2 used",
        &r.effects,
        |e| format!("{:>13.6}{:>13.6}{:>14.6}", e.value, e.se, e.tau2_used),
    );
    section(
        &mut out,
        &format!("{pct}% intervals for the overall effect"),
        "           lo           hi",
        &r.effect_intervals,
        |e| format!("{:>13.6}{:>13.6}", e.lo, e.hi),
    );
    out
}
