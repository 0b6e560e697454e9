//! Factorial Monte Carlo study of the estimators.
//!
//! Each replicate draws its studies from a random stream keyed by
//! `(seed, cell key, replicate index)`, where the cell key hashes the cell
//! parameters. Results therefore depend neither on the worker count nor on
//! where a cell sits in the design.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::effects::StudyDsm;
use crate::error::{domain, Error, Result};
use crate::heterogeneity::{het_test, QApproximation};
use crate::numerics::rng::sample_standard_normal;
use crate::numerics::{hedges_j, sample_noncentral_t, RngStream};
use crate::pooling::{
    ci_hksj_with, ci_iv_normal_with, ci_ssw_with, pool_iv, pool_ssw, EffectIntervalMethod,
    EffectMethod,
};
use crate::tau2::{estimate_tau2, tau2_interval, Tau2Estimate, Tau2IntervalMethod, Tau2Method};

/// Fraction of each study's subjects in the control arm.
pub const CONTROL_FRACTION: f64 = 0.5;

/// Nominal tail areas at which heterogeneity-test levels are reported.
pub const NOMINAL_ALPHAS: [f64; 6] = [0.005, 0.01, 0.05, 0.1, 0.25, 0.5];

/// Unequal-size patterns as `(average total size, five study sizes)`.
pub const UNEQUAL_PATTERNS: [(u32, [u32; 5]); 4] = [
    (30, [12, 16, 18, 20, 84]),
    (60, [24, 32, 36, 40, 168]),
    (100, [64, 72, 76, 80, 208]),
    (160, [124, 132, 136, 140, 268]),
];

pub const STANDARD_K: [usize; 3] = [5, 10, 30];
pub const STANDARD_EQUAL_N: [u32; 4] = [20, 40, 100, 250];
pub const STANDARD_DELTA_C: [f64; 5] = [-2.5, -1.0, 0.0, 1.0, 2.5];
pub const STANDARD_DELTA: [f64; 7] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
pub const STANDARD_TAU2: [f64; 5] = [0.0, 0.1, 0.5, 1.0, 1.5];

pub const MIN_REPS: usize = 100;

/// Smallest total study size giving at least 4 subjects per arm.
const MIN_TOTAL: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StudySizes {
    /// Every study has `n` subjects in total.
    Equal(u32),
    /// The standard pattern with this average total size, repeated `K/5`
    /// times.
    Unequal(u32),
}

impl StudySizes {
    pub fn regime(self) -> &'static str {
        match self {
            Self::Equal(_) => "equal",
            Self::Unequal(_) => "unequal",
        }
    }

    /// `n` for equal sizes, `n̄` for unequal ones.
    pub fn average(self) -> u32 {
        match self {
            Self::Equal(n) | Self::Unequal(n) => n,
        }
    }

    fn pattern(nbar: u32) -> Option<[u32; 5]> {
        UNEQUAL_PATTERNS
            .iter()
            .find(|(m, _)| *m == nbar)
            .map(|(_, p)| *p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationCell {
    pub k: usize,
    pub sizes: StudySizes,
    pub delta_c: f64,
    pub delta: f64,
    pub tau2: f64,
    pub reps: usize,
    pub seed: u64,
    /// Confidence level of every interval.
    pub level: f64,
}

impl SimulationCell {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k: usize,
        sizes: StudySizes,
        delta_c: f64,
        delta: f64,
        tau2: f64,
        reps: usize,
        seed: u64,
        level: f64,
    ) -> Result<Self> {
        let cell = Self {
            k,
            sizes,
            delta_c,
            delta,
            tau2,
            reps,
            seed,
            level,
        };
        cell.validate()?;
        Ok(cell)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::TooFewStudies {
                need: 2,
                got: self.k,
            });
        }
        match self.sizes {
            StudySizes::Equal(n) if n < MIN_TOTAL => {
                return Err(domain(format!(
                    "study size must be at least {MIN_TOTAL}, got {n}"
                )))
            }
            StudySizes::Unequal(nbar) => {
                if StudySizes::pattern(nbar).is_none() {
                    return Err(domain(format!(
                        "no unequal-size pattern with average {nbar} (expected 30, 60, 100 or 160)"
                    )));
                }
                if !self.k.is_multiple_of(5) {
                    return Err(domain(format!(
                        "unequal sizes need K to be a multiple of 5, got {}",
                        self.k
                    )));
                }
            }
            _ => {}
        }
        if !self.delta_c.is_finite() || !self.delta.is_finite() {
            return Err(domain("delta_c and delta must be finite"));
        }
        if !(self.tau2 >= 0.0) || !self.tau2.is_finite() {
            return Err(domain(format!(
                "tau2 must be nonnegative, got {}",
                self.tau2
            )));
        }
        if self.reps < MIN_REPS {
            return Err(domain(format!(
                "reps must be at least {MIN_REPS}, got {}",
                self.reps
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(domain(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }

    /// Total sizes of the `K` studies.
    pub fn study_sizes(&self) -> Vec<u32> {
        match self.sizes {
            StudySizes::Equal(n) => vec![n; self.k],
            StudySizes::Unequal(nbar) => {
                let p = StudySizes::pattern(nbar).unwrap_or([nbar; 5]);
                p.iter().copied().cycle().take(self.k).collect()
            }
        }
    }

    /// Stable identifier such as `K10_equal_n100_dC2.5_D-0.5_t0.1`.
    pub fn label(&self) -> String {
        format!(
            "K{}_{}_n{}_dC{}_D{}_t{}",
            self.k,
            self.sizes.regime(),
            self.sizes.average(),
            self.delta_c,
            self.delta,
            self.tau2
        )
    }

    /// Hash of the data-generating parameters.
    pub fn key(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"dsm-cell/v1");
        h.update((self.k as u64).to_le_bytes());
        h.update(self.sizes.regime().as_bytes());
        h.update(self.sizes.average().to_le_bytes());
        for x in [self.delta_c, self.delta, self.tau2] {
            h.update(x.to_bits().to_le_bytes());
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }

    fn stream(&self, rep: usize) -> RngStream {
        RngStream::with_path(self.seed, &[self.key(), rep as u64])
    }
}

/// `(n_T, n_C)` for a study of `n` subjects.
pub fn arm_sizes(n: u32) -> (u32, u32) {
    let n_c = (f64::from(n) * CONTROL_FRACTION).floor() as u32;
    (n - n_c, n_c)
}

/// `J(n−1)·T/√n` with `T` noncentral t on `n − 1` df, noncentrality `√n·δ`.
fn sample_g<R: rand::Rng + ?Sized>(n: u32, delta: f64, rng: &mut R) -> Result<f64> {
    let nf = f64::from(n);
    let t = sample_noncentral_t(nf - 1.0, nf.sqrt() * delta, rng)?;
    Ok(hedges_j(nf - 1.0)? * t / nf.sqrt())
}

/// The `K` studies of replicate `rep`.
pub fn generate_replicate(cell: &SimulationCell, rep: usize) -> Result<Vec<StudyDsm>> {
    cell.validate()?;
    let mut rng = cell.stream(rep).rng();
    let tau = cell.tau2.sqrt();
    cell.study_sizes()
        .into_iter()
        .map(|n| {
            let delta_k = cell.delta + tau * sample_standard_normal(&mut rng);
            let (n_t, n_c) = arm_sizes(n);
            let g_c = sample_g(n_c, cell.delta_c, &mut rng)?;
            let g_t = sample_g(n_t, cell.delta_c + delta_k, &mut rng)?;
            StudyDsm::from_corrected(g_t, n_t, g_c, n_c)
        })
        .collect()
}

/// Everything computed on one replicate; `None` marks a failed estimator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicateOutcome {
    /// Indexed like [`Tau2Method::ALL`].
    pub tau2: [Option<f64>; 5],
    /// Indexed like [`Tau2IntervalMethod::ALL`].
    pub tau2_intervals: [Option<(f64, f64)>; 3],
    /// Indexed like [`EffectMethod::ALL`].
    pub effects: [Option<f64>; 4],
    /// Indexed like [`EffectIntervalMethod::ALL`].
    pub effect_intervals: [Option<(f64, f64)>; 6],
    /// p-values indexed like [`QApproximation::ALL`].
    pub het_p: [Option<f64>; 2],
}

fn converged(e: Result<Tau2Estimate>) -> Option<Tau2Estimate> {
    e.ok().filter(|e| e.converged)
}

/// Apply every test, estimator and interval to one set of studies.
pub fn evaluate(studies: &[StudyDsm], level: f64) -> ReplicateOutcome {
    let mut out = ReplicateOutcome::default();
    let tau2: Vec<Option<Tau2Estimate>> = Tau2Method::ALL
        .iter()
        .map(|m| converged(estimate_tau2(studies, *m)))
        .collect();
    for (slot, e) in out.tau2.iter_mut().zip(&tau2) {
        *slot = e.map(|e| e.value);
    }
    let by = |m: Tau2Method| tau2[Tau2Method::ALL.iter().position(|x| *x == m).unwrap_or(0)];

    for (slot, m) in out.tau2_intervals.iter_mut().zip(Tau2IntervalMethod::ALL) {
        *slot = tau2_interval(studies, m, level)
            .ok()
            .filter(|ci| ci.converged)
            .map(|ci| (ci.lo, ci.hi));
    }

    for (slot, m) in out.effects.iter_mut().zip(EffectMethod::ALL) {
        *slot = match m {
            EffectMethod::SSW => pool_ssw(studies).ok().map(|e| e.value),
            EffectMethod::IvDl => by(Tau2Method::DL)
                .and_then(|t| pool_iv(studies, &t).ok())
                .map(|e| e.value),
            EffectMethod::IvReml => by(Tau2Method::REML)
                .and_then(|t| pool_iv(studies, &t).ok())
                .map(|e| e.value),
            EffectMethod::IvMp => by(Tau2Method::MP)
                .and_then(|t| pool_iv(studies, &t).ok())
                .map(|e| e.value),
        };
    }

    for (slot, m) in out
        .effect_intervals
        .iter_mut()
        .zip(EffectIntervalMethod::ALL)
    {
        let t = by(m.tau2_method());
        let ci = t.and_then(|t| match m {
            EffectIntervalMethod::HKSJ => ci_hksj_with(studies, t.value, level).ok(),
            EffectIntervalMethod::SMC | EffectIntervalMethod::SSC => {
                ci_ssw_with(studies, &t, level).ok()
            }
            _ => ci_iv_normal_with(studies, &t, level).ok(),
        });
        *slot = ci.map(|ci| (ci.lo, ci.hi));
    }

    for (slot, a) in out.het_p.iter_mut().zip(QApproximation::ALL) {
        *slot = het_test(studies, a).ok().map(|t| t.p_value);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary<M> {
    pub method: M,
    pub mean: f64,
    /// `mean − truth`
    pub bias: f64,
    pub mc_se: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary<M> {
    pub method: M,
    pub rate: f64,
    pub mc_se: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub approximation: QApproximation,
    pub nominal: f64,
    pub level: f64,
    /// `(level − nominal)/nominal`
    pub relative_error: f64,
    pub mc_se: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub cell: SimulationCell,
    pub tau2_bias: Vec<BiasSummary<Tau2Method>>,
    pub tau2_coverage: Vec<RateSummary<Tau2IntervalMethod>>,
    pub delta_bias: Vec<BiasSummary<EffectMethod>>,
    pub delta_coverage: Vec<RateSummary<EffectIntervalMethod>>,
    /// Empty unless the cell has `τ² = 0`.
    pub het_levels: Vec<LevelSummary>,
}

fn bias<M>(method: M, values: impl Iterator<Item = Option<f64>>, truth: f64) -> BiasSummary<M> {
    let mut ok = Vec::new();
    let mut failed = 0;
    for v in values {
        match v {
            Some(v) => ok.push(v),
            None => failed += 1,
        }
    }
    let n = ok.len();
    let (mean, mc_se) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let mean = ok.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            f64::NAN
        };
        (mean, (var / n as f64).sqrt())
    };
    BiasSummary {
        method,
        mean,
        bias: mean - truth,
        mc_se,
        n_ok: n,
        n_failed: failed,
    }
}

/// Fraction of `true` among the non-failed entries with its binomial SE.
fn rate(flags: impl Iterator<Item = Option<bool>>) -> (f64, f64, usize, usize) {
    let (mut hits, mut n, mut failed) = (0usize, 0usize, 0usize);
    for f in flags {
        match f {
            Some(hit) => {
                n += 1;
                hits += usize::from(hit);
            }
            None => failed += 1,
        }
    }
    if n == 0 {
        return (f64::NAN, f64::NAN, 0, failed);
    }
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt(), n, failed)
}

fn coverage<M>(
    method: M,
    intervals: impl Iterator<Item = Option<(f64, f64)>>,
    truth: f64,
) -> RateSummary<M> {
    let (rate, mc_se, n_ok, n_failed) =
        rate(intervals.map(|ci| ci.map(|(lo, hi)| lo <= truth && truth <= hi)));
    RateSummary {
        method,
        rate,
        mc_se,
        n_ok,
        n_failed,
    }
}

/// Reduce per-replicate outcomes, in order, to cell metrics.
pub fn aggregate(cell: &SimulationCell, outcomes: &[ReplicateOutcome]) -> CellMetrics {
    let tau2_bias = Tau2Method::ALL
        .iter()
        .enumerate()
        .map(|(i, m)| bias(*m, outcomes.iter().map(|o| o.tau2[i]), cell.tau2))
        .collect();
    let tau2_coverage = Tau2IntervalMethod::ALL
        .iter()
        .enumerate()
        .map(|(i, m)| coverage(*m, outcomes.iter().map(|o| o.tau2_intervals[i]), cell.tau2))
        .collect();
    let delta_bias = EffectMethod::ALL
        .iter()
        .enumerate()
        .map(|(i, m)| bias(*m, outcomes.iter().map(|o| o.effects[i]), cell.delta))
        .collect();
    let delta_coverage = EffectIntervalMethod::ALL
        .iter()
        .enumerate()
        .map(|(i, m)| {
            coverage(
                *m,
                outcomes.iter().map(|o| o.effect_intervals[i]),
                cell.delta,
            )
        })
        .collect();
    let mut het_levels = Vec::new();
    if cell.tau2 == 0.0 {
        for (i, a) in QApproximation::ALL.iter().enumerate() {
            for alpha in NOMINAL_ALPHAS {
                let (level, mc_se, n_ok, n_failed) =
                    rate(outcomes.iter().map(|o| o.het_p[i].map(|p| p <= alpha)));
                het_levels.push(LevelSummary {
                    approximation: *a,
                    nominal: alpha,
                    level,
                    relative_error: (level - alpha) / alpha,
                    mc_se,
                    n_ok,
                    n_failed,
                });
            }
        }
    }
    CellMetrics {
        cell: *cell,
        tau2_bias,
        tau2_coverage,
        delta_bias,
        delta_coverage,
        het_levels,
    }
}

fn run_replicate(cell: &SimulationCell, rep: usize) -> ReplicateOutcome {
    match generate_replicate(cell, rep) {
        Ok(studies) => evaluate(&studies, cell.level),
        Err(_) => ReplicateOutcome::default(),
    }
}

/// Run one cell on the current rayon pool.
pub fn run_cell(cell: &SimulationCell) -> Result<CellMetrics> {
    cell.validate()?;
    let outcomes: Vec<ReplicateOutcome> = (0..cell.reps)
        .into_par_iter()
        .map(|r| run_replicate(cell, r))
        .collect();
    Ok(aggregate(cell, &outcomes))
}

/// Run every cell on a dedicated pool of `workers` threads. The output is
/// in design order and identical for any worker count.
pub fn run_grid(design: &[SimulationCell], workers: usize) -> Result<Vec<CellMetrics>> {
    run_grid_with_progress(design, workers, |_| {})
}

/// [`run_grid`] calling `on_cell(index)` as each cell finishes, in
/// completion order.
pub fn run_grid_with_progress<F>(
    design: &[SimulationCell],
    workers: usize,
    on_cell: F,
) -> Result<Vec<CellMetrics>>
where
    F: Fn(usize) + Sync,
{
    if design.is_empty() {
        return Err(domain("simulation design is empty"));
    }
    if workers == 0 {
        return Err(domain("workers must be at least 1"));
    }
    for c in design {
        c.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| domain(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        design
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let m = run_cell(c);
                on_cell(i);
                m
            })
            .collect()
    })
}

/// Factor levels of a full-factorial design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub k: Vec<usize>,
    pub sizes: Vec<StudySizes>,
    pub delta_c: Vec<f64>,
    pub delta: Vec<f64>,
    pub tau2: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub level: f64,
}

impl GridSpec {
    /// Cells in `K → sizes → δ_C → Δ → τ²` order.
    pub fn cells(&self) -> Result<Vec<SimulationCell>> {
        let mut out = Vec::new();
        for &k in &self.k {
            for &sizes in &self.sizes {
                for &delta_c in &self.delta_c {
                    for &delta in &self.delta {
                        for &tau2 in &self.tau2 {
                            out.push(SimulationCell::new(
                                k, sizes, delta_c, delta, tau2, self.reps, self.seed, self.level,
                            )?);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn standard(sizes: Vec<StudySizes>, reps: usize, seed: u64) -> GridSpec {
    GridSpec {
        k: STANDARD_K.to_vec(),
        sizes,
        delta_c: STANDARD_DELTA_C.to_vec(),
        delta: STANDARD_DELTA.to_vec(),
        tau2: STANDARD_TAU2.to_vec(),
        reps,
        seed,
        level: 0.95,
    }
}

/// The 2100 equal-size cells of the standard design.
pub fn standard_equal(reps: usize, seed: u64) -> GridSpec {
    standard(
        STANDARD_EQUAL_N
            .iter()
            .map(|n| StudySizes::Equal(*n))
            .collect(),
        reps,
        seed,
    )
}

/// The 2100 unequal-size cells of the standard design.
pub fn standard_unequal(reps: usize, seed: u64) -> GridSpec {
    standard(
        UNEQUAL_PATTERNS
            .iter()
            .map(|(m, _)| StudySizes::Unequal(*m))
            .collect(),
        reps,
        seed,
    )
}
