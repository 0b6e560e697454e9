//! Simulation config files.
//!
//! One `key = value` pair per line; list values are comma-separated, `#`
//! starts a comment and blank lines are ignored. Keys:
//!
//! | key            | kind   | default                       |
//! |----------------|--------|-------------------------------|
//! | `k`            | list   | 5, 10, 30                     |
//! | `equal_n`      | list   | 20, 40, 100, 250 (see below)  |
//! | `unequal_nbar` | list   | none                          |
//! | `delta_c`      | list   | -2.5, -1, 0, 1, 2.5           |
//! | `delta`        | list   | -2, -1, -0.5, 0, 0.5, 1, 2    |
//! | `tau2`         | list   | 0, 0.1, 0.5, 1, 1.5           |
//! | `reps`         | scalar | 1000                          |
//! | `seed`         | scalar | 1                             |
//! | `level`        | scalar | 0.95                          |
//!
//! `equal_n` takes its default only when neither size key is present.

use std::collections::HashSet;
use std::str::FromStr;

use dsm_core::simulation::{
    GridSpec, SimulationCell, StudySizes, STANDARD_DELTA, STANDARD_DELTA_C, STANDARD_EQUAL_N,
    STANDARD_K, STANDARD_TAU2, UNEQUAL_PATTERNS,
};

use crate::error::{CliError, Result};

pub const DEFAULT_REPS: usize = 1000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_LEVEL: f64 = 0.95;

const KEYS: [&str; 9] = [
    "k",
    "equal_n",
    "unequal_nbar",
    "delta_c",
    "delta",
    "tau2",
    "reps",
    "seed",
    "level",
];

fn list<T: FromStr>(line: u64, key: &str, value: &str) -> Result<Vec<T>> {
    let out: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse().map_err(|_| CliError::Line {
                line,
                message: format!("`{key}`: cannot parse `{v}`"),
            })
        })
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(CliError::Line {
            line,
            message: format!("`{key}` has no values"),
        });
    }
    Ok(out)
}

fn scalar<T: FromStr>(line: u64, key: &str, value: &str) -> Result<T> {
    let mut v = list(line, key, value)?;
    if v.len() != 1 {
        return Err(CliError::Line {
            line,
            message: format!("`{key}` takes a single value"),
        });
    }
    Ok(v.remove(0))
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// The standard factor levels, for error messages.
pub fn standard_levels() -> String {
    format!(
        "standard values: k = {}; equal_n = {}; unequal_nbar = {}; delta_c = {}; delta = {}; tau2 = {}",
        join(STANDARD_K),
        join(STANDARD_EQUAL_N),
        join(UNEQUAL_PATTERNS.iter().map(|(m, _)| *m)),
        join(STANDARD_DELTA_C),
        join(STANDARD_DELTA),
        join(STANDARD_TAU2)
    )
}

pub fn parse_config(text: &str) -> Result<GridSpec> {
    let mut spec = GridSpec {
        k: STANDARD_K.to_vec(),
        sizes: Vec::new(),
        delta_c: STANDARD_DELTA_C.to_vec(),
        delta: STANDARD_DELTA.to_vec(),
        tau2: STANDARD_TAU2.to_vec(),
        reps: DEFAULT_REPS,
        seed: DEFAULT_SEED,
        level: DEFAULT_LEVEL,
    };
    let mut seen = HashSet::new();
    let mut equal = Vec::new();
    let mut unequal = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(CliError::Line {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::Line {
                line,
                message: format!("unknown key `{key}`; expected one of {}", KEYS.join(", ")),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(CliError::Line {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        match key {
            "k" => spec.k = list(line, key, value)?,
            "equal_n" => equal = list(line, key, value)?,
            "unequal_nbar" => unequal = list(line, key, value)?,
            "delta_c" => spec.delta_c = list(line, key, value)?,
            "delta" => spec.delta = list(line, key, value)?,
            "tau2" => spec.tau2 = list(line, key, value)?,
            "reps" => spec.reps = scalar(line, key, value)?,
            "seed" => spec.seed = scalar(line, key, value)?,
            "level" => spec.level = scalar(line, key, value)?,
            _ => unreachable!("key list checked above"),
        }
    }
    if equal.is_empty() && unequal.is_empty() {
        equal = STANDARD_EQUAL_N.to_vec();
    }
    spec.sizes = equal
        .into_iter()
        .map(StudySizes::Equal)
        .chain(unequal.into_iter().map(StudySizes::Unequal))
        .collect();
    Ok(spec)
}

/// Expands a grid, rejecting invalid factor levels with the standard
/// levels echoed.
pub fn cells(spec: &GridSpec) -> Result<Vec<SimulationCell>> {
    spec.cells()
        .map_err(|e| CliError::Input(format!("invalid design: {e}\n{}", standard_levels())))
}
