//! Long-format simulation results: one row per cell, method and metric.

use std::io::{Read, Write};

use dsm_core::CellMetrics;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::FORMAT_VERSION;

pub const COLUMNS: [&str; 17] = [
    "format_version",
    "cell_id",
    "size_regime",
    "k",
    "n",
    "delta_c",
    "delta",
    "tau2",
    "reps",
    "family",
    "method",
    "metric",
    "nominal",
    "value",
    "mc_se",
    "n_ok",
    "n_failed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub format_version: u32,
    pub cell_id: String,
    pub size_regime: String,
    pub k: usize,
    /// `n` for equal sizes, `n̄` for unequal ones.
    pub n: u32,
    pub delta_c: f64,
    pub delta: f64,
    pub tau2: f64,
    pub reps: usize,
    /// `tau2_bias`, `tau2_coverage`, `delta_bias`, `delta_coverage` or
    /// `het_level`.
    pub family: String,
    pub method: String,
    /// `mean`, `bias`, `coverage`, `level` or `relative_error`.
    pub metric: String,
    /// Nominal tail area; set only for `het_level` rows.
    pub nominal: Option<f64>,
    pub value: f64,
    pub mc_se: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// Flattens one cell into result rows.
pub fn rows(m: &CellMetrics) -> Vec<ResultRow> {
    let c = &m.cell;
    let base = |family: &str, method: &str, metric: &str| ResultRow {
        format_version: FORMAT_VERSION,
        cell_id: c.label(),
        size_regime: c.sizes.regime().into(),
        k: c.k,
        n: c.sizes.average(),
        delta_c: c.delta_c,
        delta: c.delta,
        tau2: c.tau2,
        reps: c.reps,
        family: family.into(),
        method: method.into(),
        metric: metric.into(),
        nominal: None,
        value: f64::NAN,
        mc_se: f64::NAN,
        n_ok: 0,
        n_failed: 0,
    };
    let mut out = Vec::new();
    let mut push = |mut r: ResultRow, value: f64, mc_se: f64, n_ok: usize, n_failed: usize| {
        r.value = value;
        r.mc_se = mc_se;
        r.n_ok = n_ok;
        r.n_failed = n_failed;
        out.push(r);
    };
    for b in &m.tau2_bias {
        let name = b.method.name();
        push(
            base("tau2_bias", name, "mean"),
            b.mean,
            b.mc_se,
            b.n_ok,
            b.n_failed,
        );
        push(
            base("tau2_bias", name, "bias"),
            b.bias,
            b.mc_se,
            b.n_ok,
            b.n_failed,
        );
    }
    for r in &m.tau2_coverage {
        push(
            base("tau2_coverage", r.method.name(), "coverage"),
            r.rate,
            r.mc_se,
            r.n_ok,
            r.n_failed,
        );
    }
    for b in &m.delta_bias {
        let name = b.method.name();
        push(
            base("delta_bias", name, "mean"),
            b.mean,
            b.mc_se,
            b.n_ok,
            b.n_failed,
        );
        push(
            base("delta_bias", name, "bias"),
            b.bias,
            b.mc_se,
            b.n_ok,
            b.n_failed,
        );
    }
    for r in &m.delta_coverage {
        push(
            base("delta_coverage", r.method.name(), "coverage"),
            r.rate,
            r.mc_se,
            r.n_ok,
            r.n_failed,
        );
    }
    for l in &m.het_levels {
        let name = l.approximation.name();
        let mut level = base("het_level", name, "level");
        level.nominal = Some(l.nominal);
        push(level, l.level, l.mc_se, l.n_ok, l.n_failed);
        let mut rel = base("het_level", name, "relative_error");
        rel.nominal = Some(l.nominal);
        push(
            rel,
            l.relative_error,
            l.mc_se / l.nominal,
            l.n_ok,
            l.n_failed,
        );
    }
    out
}

pub fn write_results<W: Write>(w: W, metrics: &[CellMetrics]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(COLUMNS)?;
    for m in metrics {
        for r in rows(m) {
            wtr.serialize(r)?;
        }
    }
    wtr.flush().map_err(|e| CliError::io("<output>", e))?;
    Ok(())
}

pub fn read_results<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(CliError::Line {
            line: 1,
            message: format!("unexpected header; expected `{}`", COLUMNS.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: ResultRow = row?;
        if row.format_version != FORMAT_VERSION {
            return Err(CliError::Input(format!(
                "results have format_version {}, this build reads {FORMAT_VERSION}",
                row.format_version
            )));
        }
        out.push(row);
    }
    Ok(out)
}
