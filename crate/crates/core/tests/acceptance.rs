//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dsm_core::effects::{var_g_hat, var_g_true};
use dsm_core::numerics::rng::sample_standard_normal;
use dsm_core::numerics::{chi_square_cdf, chi_square_quantile, hedges_j, RngStream};
use dsm_core::pooling::EffectIntervalMethod;
use dsm_core::quadform::qf_cdf;
use dsm_core::simulation::{generate_replicate, run_cell, run_grid, SimulationCell, StudySizes};
use dsm_core::tau2::{
    fssw_cdf, generalized_q, restricted_loglik, tau2_dl, tau2_interval_fpc, tau2_interval_qp,
    tau2_mp, tau2_reml, tau2_smc, tau2_ssc,
};
use dsm_core::{QApproximation, QuadFormSpec, StudyDsm};

// Tolerances
const C1_SE_MULT: f64 = 3.0;
const C1_MAX_SECS: f64 = 10.0;
const C2_REL: f64 = 0.03;
const C3_SE_MULT: f64 = 3.0;
const C4_SE_MULT: f64 = 3.0;
const C4_EXACT: f64 = 1e-6;
const C4_MAX_SECS: f64 = 60.0;
const C5_BAND: (f64, f64) = (0.04, 0.06);
const C6_MAX_BIAS: f64 = 0.02;
const C7_BAND: (f64, f64) = (0.93, 0.97);
const C8_MP: f64 = 1e-8;
const C8_CDF: f64 = 1e-6;
const C8_ENDPOINT: f64 = 1e-6;
const C8_GRAD: f64 = 1e-5;
const C9_CLOSED: f64 = 1e-10;
const C9_GRID: f64 = 2e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// `g = J(n−1)·X̄/s` from `n` normal draws with mean `delta`, unit sd.
fn normal_g<R: rand::Rng>(n: usize, delta: f64, j: f64, rng: &mut R) -> f64 {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let x = delta + sample_standard_normal(rng);
        sum += x;
        sumsq += x * x;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sumsq - nf * mean * mean) / (nf - 1.0);
    j * mean / var.sqrt()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn g_draws() -> (Vec<f64>, Duration) {
    let start = Instant::now();
    let mut rng = RngStream::with_path(2024, &[1]).rng();
    let j = hedges_j(19.0).unwrap();
    let g = (0..200_000)
        .map(|_| normal_g(20, 1.0, j, &mut rng))
        .collect();
    (g, start.elapsed())
}

fn criterion_1(g: &[f64], elapsed: Duration) -> Outcome {
    let (m, sd) = mean_sd(g);
    let se = sd / (g.len() as f64).sqrt();
    let err = (m - 1.0).abs();
    outcome(
        err <= C1_SE_MULT * se && secs(elapsed) < C1_MAX_SECS,
        format!(
            "mean(g)={m:.5}, |mean-1|={err:.5} <= {C1_SE_MULT}*SE={:.5}; {:.2}s < {C1_MAX_SECS}s",
            C1_SE_MULT * se,
            secs(elapsed)
        ),
    )
}

fn criterion_2(g: &[f64], elapsed: Duration) -> Outcome {
    let (_, sd) = mean_sd(g);
    let want = var_g_true(20, 1.0).unwrap();
    let rel = (sd * sd - want).abs() / want;
    outcome(
        rel <= C2_REL && secs(elapsed) < C1_MAX_SECS,
        format!(
            "Var(g)={:.5} vs {want:.5}, rel diff {rel:.4} <= {C2_REL}",
            sd * sd
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    let mut pass = true;
    let reps = 200_000;
    for (i, n) in [10usize, 20, 100].into_iter().enumerate() {
        let j = hedges_j(n as f64 - 1.0).unwrap();
        for (l, delta) in [0.0, 1.0, 2.5].into_iter().enumerate() {
            let mut rng = RngStream::with_path(2024, &[3, i as u64, l as u64]).rng();
            let v: Vec<f64> = (0..reps)
                .map(|_| var_g_hat(n as u32, normal_g(n, delta, j, &mut rng)).unwrap())
                .collect();
            let (m, sd) = mean_sd(&v);
            let z = (m - var_g_true(n as u32, delta).unwrap()).abs() / (sd / (reps as f64).sqrt());
            worst = worst.max(z);
            pass &= z <= C3_SE_MULT;
        }
    }
    outcome(
        pass,
        format!("9 settings x {reps} reps, worst |E[v_hat]-Var g| = {worst:.2} SE <= {C3_SE_MULT}"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let lambdas = [2.0, 1.0, 0.5];
    let spec = QuadFormSpec::new(lambdas.to_vec()).unwrap();
    let n = 10_000_000usize;
    let mut rng = RngStream::with_path(2024, &[4]).rng();
    let mut draws: Vec<f64> = (0..n)
        .map(|_| {
            lambdas
                .iter()
                .map(|l| l * sample_standard_normal(&mut rng).powi(2))
                .sum()
        })
        .collect();
    draws.sort_unstable_by(f64::total_cmp);
    let mut worst = 0.0f64;
    for i in 1..=21 {
        let x = 0.5 * i as f64;
        let mc = draws.partition_point(|d| *d <= x) as f64 / n as f64;
        let se = (mc * (1.0 - mc) / n as f64).sqrt();
        worst = worst.max((qf_cdf(&spec, x).unwrap() - mc).abs() / se);
    }
    let mut exact_err = 0.0f64;
    let reductions: [(&[f64], f64, f64); 3] = [
        (&[1.0, 1.0, 1.0], 1.0, 3.0),
        (&[2.5, 2.5], 2.5, 2.0),
        (&[1.0], 1.0, 1.0),
    ];
    for (l, scale, df) in reductions {
        let s = QuadFormSpec::new(l.to_vec()).unwrap();
        for x in [0.1, 0.7, 1.5, 3.0, 6.0, 12.0] {
            let want = chi_square_cdf(x / scale, df).unwrap();
            exact_err = exact_err.max((qf_cdf(&s, x).unwrap() - want).abs());
        }
    }
    let t = secs(start.elapsed());
    outcome(
        worst <= C4_SE_MULT && exact_err <= C4_EXACT && t < C4_MAX_SECS,
        format!(
            "21 probes, worst {worst:.2} SE <= {C4_SE_MULT}; chi-square reductions max err {exact_err:.1e} <= {C4_EXACT:e}; {t:.1}s"
        ),
    )
}

fn equal_cell(
    k: usize,
    n: u32,
    delta_c: f64,
    delta: f64,
    tau2: f64,
    reps: usize,
) -> SimulationCell {
    SimulationCell::new(
        k,
        StudySizes::Equal(n),
        delta_c,
        delta,
        tau2,
        reps,
        2024,
        0.95,
    )
    .unwrap()
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let m = run_cell(&equal_cell(10, 250, 2.5, 0.0, 0.0, 10_000)).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for a in [QApproximation::ChiSq, QApproximation::FSsw] {
        let l = m
            .het_levels
            .iter()
            .find(|l| l.approximation == a && l.nominal == 0.05)
            .unwrap();
        pass &= C5_BAND.0 <= l.level && l.level <= C5_BAND.1 && l.n_failed == 0;
        parts.push(format!("{a:?}={:.4}", l.level));
    }
    outcome(
        pass,
        format!(
            "levels at .05: {} in [{}, {}]; {:.1}s",
            parts.join(", "),
            C5_BAND.0,
            C5_BAND.1,
            secs(start.elapsed())
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    let mut pass = true;
    for delta_c in [0.0, 1.0] {
        for delta in [0.0, 1.0] {
            for tau2 in [0.0, 0.5] {
                let m = run_cell(&equal_cell(10, 100, delta_c, delta, tau2, 2_000)).unwrap();
                let b = &m.delta_bias[0];
                worst = worst.max(b.bias.abs());
                pass &= b.bias.abs() <= C6_MAX_BIAS && b.n_failed == 0;
            }
        }
    }
    outcome(
        pass,
        format!("8 cells, worst |bias(SSW)| = {worst:.4} <= {C6_MAX_BIAS}"),
    )
}

// With K = 10 a normal quantile and a plug-in τ̂² under-cover by roughly
// the margin of t₉ over z (P(|t₉| < 1.96) ≈ 0.918), so this band is not
// reached. The same cell with the true τ² plugged in covers at ≈ 0.95.
fn criterion_7() -> Outcome {
    let m = run_cell(&equal_cell(10, 100, 0.0, 0.5, 0.5, 2_000)).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for method in [EffectIntervalMethod::SMC, EffectIntervalMethod::SSC] {
        let r = m
            .delta_coverage
            .iter()
            .find(|r| r.method == method)
            .unwrap();
        pass &= C7_BAND.0 <= r.rate && r.rate <= C7_BAND.1;
        parts.push(format!(
            "{method:?}={:.4} (n_failed {})",
            r.rate, r.n_failed
        ));
    }
    outcome(
        pass,
        format!(
            "coverage {} in [{}, {}]",
            parts.join(", "),
            C7_BAND.0,
            C7_BAND.1
        ),
    )
}

/// Five-point central difference of the restricted log-likelihood.
fn reml_gradient(s: &[StudyDsm], t: f64) -> f64 {
    let v_min = s.iter().map(|x| x.v2_hat).fold(f64::INFINITY, f64::min);
    let h = 1e-4 * (t + v_min);
    let l = |x: f64| restricted_loglik(s, x).unwrap();
    (l(t - 2.0 * h) - 8.0 * l(t - h) + 8.0 * l(t + h) - l(t + 2.0 * h)) / (12.0 * h)
}

fn criterion_8() -> Outcome {
    use rand::Rng;
    let mut rng = RngStream::with_path(2024, &[8]).rng();
    let mut worst = [0.0f64; 5];
    let mut interior = [0usize; 5];
    let mut errors = Vec::new();
    for i in 0..200 {
        let k = rng.random_range(3..=30usize);
        let n = [20u32, 40, 100, 250][rng.random_range(0..4usize)];
        let tau2 = [0.0, 0.1, 0.5, 1.0, 1.5][rng.random_range(0..5usize)];
        let cell = equal_cell(
            k,
            n,
            rng.random_range(-2.5..2.5),
            rng.random_range(-2.0..2.0),
            tau2,
            100,
        );
        let s = generate_replicate(&cell, i).unwrap();
        let df = (k - 1) as f64;
        let mut check = || -> dsm_core::Result<()> {
            let mp = tau2_mp(&s)?;
            if mp.value > 0.0 {
                interior[0] += 1;
                worst[0] = worst[0].max((generalized_q(&s, mp.value)? - df).abs());
            }
            let smc = tau2_smc(&s)?;
            if smc.value > 0.0 {
                interior[1] += 1;
                worst[1] = worst[1].max((fssw_cdf(&s, smc.value)? - 0.5).abs());
            }
            let qp = tau2_interval_qp(&s, 0.95)?;
            for (x, p) in [(qp.lo, 0.975), (qp.hi, 0.025)] {
                if x > 0.0 {
                    interior[2] += 1;
                    let target = chi_square_quantile(p, df)?;
                    worst[2] = worst[2].max((generalized_q(&s, x)? - target).abs());
                }
            }
            let fpc = tau2_interval_fpc(&s, 0.95)?;
            for (x, p) in [(fpc.lo, 0.975), (fpc.hi, 0.025)] {
                if x > 0.0 {
                    interior[3] += 1;
                    worst[3] = worst[3].max((fssw_cdf(&s, x)? - p).abs());
                }
            }
            let reml = tau2_reml(&s)?;
            if reml.value > 0.0 {
                interior[4] += 1;
                worst[4] = worst[4].max(reml_gradient(&s, reml.value).abs());
            }
            Ok(())
        };
        if let Err(e) = check() {
            errors.push(format!("fixture {i}: {e}"));
        }
    }
    let limits = [C8_MP, C8_CDF, C8_ENDPOINT, C8_ENDPOINT, C8_GRAD];
    let pass = errors.is_empty() && worst.iter().zip(limits).all(|(w, l)| *w <= l);
    let names = ["MP", "SMC", "QP", "FPC", "REML grad"];
    let parts: Vec<String> = names
        .iter()
        .zip(worst.iter().zip(interior.iter().zip(limits)))
        .map(|(n, (w, (c, l)))| format!("{n} {w:.1e}<={l:.0e} ({c} interior)"))
        .collect();
    outcome(
        pass,
        format!(
            "200 fixtures: {}; errors: {}",
            parts.join(", "),
            errors.len()
        ),
    )
}

fn fixture(y: &[f64], v: &[f64], n_tilde: &[f64]) -> Vec<StudyDsm> {
    y.iter()
        .zip(v)
        .zip(n_tilde)
        .map(|((y, v), n)| StudyDsm {
            g_t: *y,
            g_c: 0.0,
            d_hat: *y,
            v2_hat: *v,
            n_t: 0,
            n_c: 0,
            n_tilde: *n,
        })
        .collect()
}

fn criterion_9() -> Outcome {
    let three = fixture(&[0.0, 2.0, 4.0], &[1.0; 3], &[10.0; 3]);
    let two = fixture(&[0.0, 2.0], &[0.1, 0.1], &[10.0, 10.0]);
    // closed forms: DL = MP = 3 on the equal-variance fixture; SSC on the
    // two-study fixture solves E(Q_F) = Q_F, i.e. 20·0.5·(0.1 + τ²) = 20
    let closed = [
        (tau2_dl(&three).unwrap().value, 3.0),
        (tau2_mp(&three).unwrap().value, 3.0),
        (tau2_ssc(&two).unwrap().value, 1.9),
    ];
    let closed_err = closed
        .iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    // REML: independent restricted log-likelihood on a 1e-4 grid over [0, 10]
    let l = |t: f64| -0.5 * (3.0 * (1.0 + t).ln() + (3.0 / (1.0 + t)).ln() + 8.0 / (1.0 + t));
    let grid = (0..=100_000)
        .map(|i| i as f64 * 1e-4)
        .max_by(|a, b| l(*a).total_cmp(&l(*b)))
        .unwrap();
    let reml_err = (tau2_reml(&three).unwrap().value - grid).abs();

    // SMC: grid search on |F(Q_F | τ²) − ½| for a five-study fixture
    let five: Vec<StudyDsm> = [
        (0.9, 20, 0.1, 20),
        (-0.2, 35, 0.3, 30),
        (1.6, 12, 0.4, 14),
        (0.5, 50, -0.3, 45),
        (1.1, 25, 1.0, 25),
    ]
    .iter()
    .map(|&(gt, nt, gc, nc)| StudyDsm::from_corrected(gt, nt, gc, nc).unwrap())
    .collect();
    let dist = |t: f64| (fssw_cdf(&five, t).unwrap() - 0.5).abs();
    let coarse = (0..=300)
        .map(|i| i as f64 * 1e-2)
        .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
        .unwrap();
    let fine = (0..=2_000)
        .map(|i| (coarse - 1e-2 + i as f64 * 1e-5).max(0.0))
        .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
        .unwrap();
    let smc_err = (tau2_smc(&five).unwrap().value - fine).abs();

    outcome(
        closed_err <= C9_CLOSED && reml_err <= C9_GRID && smc_err <= C9_GRID,
        format!(
            "closed forms max err {closed_err:.1e} <= {C9_CLOSED:e}; REML grid {reml_err:.1e}, SMC grid {smc_err:.1e} <= {C9_GRID:e}"
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut design = Vec::new();
    for (k, sizes) in [(5, StudySizes::Equal(20)), (10, StudySizes::Unequal(60))] {
        for tau2 in [0.0, 0.5] {
            design.push(SimulationCell::new(k, sizes, 1.0, -0.5, tau2, 150, 99, 0.95).unwrap());
        }
    }
    let one = format!("{:?}", run_grid(&design, 1).unwrap());
    let eight = format!("{:?}", run_grid(&design, 8).unwrap());
    outcome(
        one == eight,
        format!(
            "{} cells, {} bytes of output, identical: {}",
            design.len(),
            one.len(),
            one == eight
        ),
    )
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() -> ExitCode {
    let (g, g_time) = g_draws();
    let criteria: Vec<(&str, Check)> = vec![
        ("unbiasedness of g", Box::new(|| criterion_1(&g, g_time))),
        ("variance of g", Box::new(|| criterion_2(&g, g_time))),
        ("unbiased variance estimate", Box::new(criterion_3)),
        ("quadratic-form CDF", Box::new(criterion_4)),
        ("null level of heterogeneity tests", Box::new(criterion_5)),
        ("SSW bias", Box::new(criterion_6)),
        ("SMC/SSC interval coverage", Box::new(criterion_7)),
        ("defining-equation residuals", Box::new(criterion_8)),
        ("oracle equivalence", Box::new(criterion_9)),
        ("determinism across worker counts", Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "acceptance {:>2} [{}] {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
