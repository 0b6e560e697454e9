//! Plot-ready tables from simulation results.
//!
//! Each appendix `A`–`F` selects one metric and an x-axis; the remaining
//! design factors split into a figure facet and a panel facet.
//!
//! | appendix | metric                               | x       | figure          |
//! |----------|--------------------------------------|---------|-----------------|
//! | A        | relative error of heterogeneity test | nominal | delta_c, delta  |
//! | B        | level of heterogeneity test at .05   | delta   | delta_c         |
//! | C        | bias of τ² estimators                | tau2    | delta_c, delta  |
//! | D        | coverage of τ² intervals             | tau2    | delta_c, delta  |
//! | E        | bias of effect estimators            | tau2    | delta_c, delta  |
//! | F        | coverage of effect intervals         | tau2    | delta_c, delta  |
//!
//! Panels are the factors left over, by default `size_regime, n, k`.

use std::cmp::Ordering;
use std::io::Write;

use crate::error::{CliError, Result};
use crate::results::ResultRow;
use crate::FORMAT_VERSION;

pub const COLUMNS: [&str; 11] = [
    "format_version",
    "appendix",
    "figure",
    "panel",
    "series",
    "x_name",
    "x",
    "value",
    "mc_se",
    "n_ok",
    "n_failed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Key {
    SizeRegime,
    N,
    K,
    DeltaC,
    Delta,
    Tau2,
    Nominal,
}

/// Keys that may appear in a facet, in panel order.
const FACET_KEYS: [Key; 6] = [
    Key::SizeRegime,
    Key::N,
    Key::K,
    Key::DeltaC,
    Key::Delta,
    Key::Tau2,
];

impl Key {
    pub fn name(self) -> &'static str {
        match self {
            Self::SizeRegime => "size_regime",
            Self::N => "n",
            Self::K => "k",
            Self::DeltaC => "delta_c",
            Self::Delta => "delta",
            Self::Tau2 => "tau2",
            Self::Nominal => "nominal",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        FACET_KEYS
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                CliError::Input(format!(
                    "unknown facet key `{s}`; expected one of {}",
                    FACET_KEYS.map(Key::name).join(", ")
                ))
            })
    }

    fn value(self, r: &ResultRow) -> Value {
        match self {
            Self::SizeRegime => Value::Text(r.size_regime.clone()),
            Self::N => Value::Num(r.n as f64),
            Self::K => Value::Num(r.k as f64),
            Self::DeltaC => Value::Num(r.delta_c),
            Self::Delta => Value::Num(r.delta),
            Self::Tau2 => Value::Num(r.tau2),
            Self::Nominal => Value::Num(r.nominal.unwrap_or(f64::NAN)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Num(f64),
    Text(String),
}

impl Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Self::Num(a), Self::Num(b)) => a.total_cmp(b),
            (Self::Text(a), Self::Text(b)) => a.cmp(b),
            (Self::Num(_), Self::Text(_)) => Ordering::Less,
            (Self::Text(_), Self::Num(_)) => Ordering::Greater,
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Num(x) => write!(f, "{x}"),
            Self::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Appendix {
    pub id: char,
    family: &'static str,
    metric: &'static str,
    nominal: Option<u32>,
    x: Key,
    figure: &'static [Key],
}

impl Appendix {
    pub const ALL: [Self; 6] = [
        Self::new(
            'A',
            "het_level",
            "relative_error",
            None,
            Key::Nominal,
            &[Key::DeltaC, Key::Delta],
        ),
        Self::new(
            'B',
            "het_level",
            "level",
            Some(50),
            Key::Delta,
            &[Key::DeltaC],
        ),
        Self::new(
            'C',
            "tau2_bias",
            "bias",
            None,
            Key::Tau2,
            &[Key::DeltaC, Key::Delta],
        ),
        Self::new(
            'D',
            "tau2_coverage",
            "coverage",
            None,
            Key::Tau2,
            &[Key::DeltaC, Key::Delta],
        ),
        Self::new(
            'E',
            "delta_bias",
            "bias",
            None,
            Key::Tau2,
            &[Key::DeltaC, Key::Delta],
        ),
        Self::new(
            'F',
            "delta_coverage",
            "coverage",
            None,
            Key::Tau2,
            &[Key::DeltaC, Key::Delta],
        ),
    ];

    /// `nominal` is in thousandths so the table can stay `const`.
    const fn new(
        id: char,
        family: &'static str,
        metric: &'static str,
        nominal: Option<u32>,
        x: Key,
        figure: &'static [Key],
    ) -> Self {
        Self {
            id,
            family,
            metric,
            nominal,
            x,
            figure,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|a| up.len() == 1 && up.starts_with(a.id))
            .ok_or_else(|| CliError::Input(format!("unknown appendix `{s}`; expected A-F")))
    }

    fn matches(&self, r: &ResultRow) -> bool {
        r.family == self.family
            && r.metric == self.metric
            && self.nominal.is_none_or(|m| {
                r.nominal
                    .is_some_and(|x| (x * 1000.0 - m as f64).abs() < 1e-9)
            })
    }

    fn keys(&self) -> impl Iterator<Item = Key> + '_ {
        // heterogeneity rows exist only at τ² = 0
        let het = self.family == "het_level";
        FACET_KEYS
            .into_iter()
            .filter(move |k| *k != self.x && !(het && *k == Key::Tau2))
    }
}

/// Parses a comma-separated facet list.
pub fn parse_facet(s: &str) -> Result<Vec<Key>> {
    let keys: Vec<Key> = s
        .split(',')
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(Key::parse)
        .collect::<Result<_>>()?;
    if keys.is_empty() {
        return Err(CliError::Input("empty facet".into()));
    }
    Ok(keys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub appendix: char,
    pub figure: String,
    pub panel: String,
    pub series: String,
    pub x_name: &'static str,
    pub x: f64,
    pub value: f64,
    pub mc_se: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

fn label(keys: &[Key], r: &ResultRow) -> String {
    keys.iter()
        .map(|k| format!("{}={}", k.name(), k.value(r)))
        .collect::<Vec<_>>()
        .join(";")
}

/// Rows of one appendix, ordered by figure, panel, series and x.
pub fn summarize_appendix(
    rows: &[ResultRow],
    appendix: Appendix,
    facet: Option<&[Key]>,
) -> Result<Vec<SummaryRow>> {
    let figure: Vec<Key> = facet.map_or_else(|| appendix.figure.to_vec(), <[Key]>::to_vec);
    let available: Vec<Key> = appendix.keys().collect();
    for k in &figure {
        if !available.contains(k) {
            return Err(CliError::Input(format!(
                "facet key `{}` is not available for appendix {}",
                k.name(),
                appendix.id
            )));
        }
    }
    let panel: Vec<Key> = available
        .into_iter()
        .filter(|k| !figure.contains(k))
        .collect();

    let mut series_order: Vec<&str> = Vec::new();
    let mut selected: Vec<&ResultRow> = Vec::new();
    for r in rows.iter().filter(|r| appendix.matches(r)) {
        if !series_order.contains(&r.method.as_str()) {
            series_order.push(&r.method);
        }
        selected.push(r);
    }
    let series_rank = |r: &ResultRow| series_order.iter().position(|s| *s == r.method);
    let cmp_keys = |keys: &[Key], a: &ResultRow, b: &ResultRow| {
        keys.iter()
            .map(|k| k.value(a).cmp(&k.value(b)))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    };
    selected.sort_by(|a, b| {
        cmp_keys(&figure, a, b)
            .then_with(|| cmp_keys(&panel, a, b))
            .then_with(|| series_rank(a).cmp(&series_rank(b)))
            .then_with(|| appendix.x.value(a).cmp(&appendix.x.value(b)))
    });

    Ok(selected
        .into_iter()
        .map(|r| SummaryRow {
            appendix: appendix.id,
            figure: label(&figure, r),
            panel: label(&panel, r),
            series: r.method.clone(),
            x_name: appendix.x.name(),
            x: match appendix.x.value(r) {
                Value::Num(x) => x,
                Value::Text(_) => f64::NAN,
            },
            value: r.value,
            mc_se: r.mc_se,
            n_ok: r.n_ok,
            n_failed: r.n_failed,
        })
        .collect())
}

pub fn summarize(
    rows: &[ResultRow],
    appendices: &[Appendix],
    facet: Option<&[Key]>,
) -> Result<Vec<SummaryRow>> {
    let mut out = Vec::new();
    for a in appendices {
        out.extend(summarize_appendix(rows, *a, facet)?);
    }
    Ok(out)
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(COLUMNS)?;
    for r in rows {
        wtr.write_record([
            FORMAT_VERSION.to_string(),
            r.appendix.to_string(),
            r.figure.clone(),
            r.panel.clone(),
            r.series.clone(),
            r.x_name.to_string(),
            r.x.to_string(),
            r.value.to_string(),
            r.mc_se.to_string(),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| CliError::io("<output>", e))?;
    Ok(())
}
