//! Normal, chi-square, Student t and noncentral t distributions.

use statrs::function::{beta::beta_reg, erf, gamma};

use super::quadrature::gauss_legendre;
use super::solve::{expand_upper, try_find_root};
use super::special::ln_gamma;
use crate::error::{domain, Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("probability must lie in (0,1), got {p}")))
    }
}

fn check_df(df: f64) -> Result<()> {
    if df > 0.0 && df.is_finite() {
        Ok(())
    } else {
        Err(domain(format!(
            "degrees of freedom must be positive, got {df}"
        )))
    }
}

/// Lower and upper standard normal tails `(Φ(x), 1 − Φ(x))`, each with
/// full relative accuracy (Cody's rational Chebyshev approximations).
fn normal_tails(x: f64) -> (f64, f64) {
    const A: [f64; 5] = [
        2.235_252_035_460_683_9,
        161.028_231_068_555_88,
        1_067.689_485_460_371,
        18_154.981_253_343_56,
        0.065_682_337_918_207_45,
    ];
    const B: [f64; 4] = [
        47.202_581_904_688_24,
        976.098_551_737_776_7,
        10_260.932_208_618_978,
        45_507.789_335_026_73,
    ];
    const C: [f64; 9] = [
        0.398_941_512_088_134_66,
        8.883_149_794_388_376,
        93.506_656_132_177_86,
        597.270_276_394_800_3,
        2_494.537_585_290_372_7,
        6_848.190_450_536_283,
        11_602.651_437_647_35,
        9_842.714_838_383_978,
        1.076_557_677_372_019_2e-8,
    ];
    const D: [f64; 8] = [
        22.266_688_044_328_116,
        235.387_901_782_625,
        1_519.377_599_407_554_8,
        6_485.558_298_266_761,
        18_615.571_640_885_1,
        34_900.952_721_145_98,
        38_912.003_286_093_27,
        19_685.429_676_859_99,
    ];
    const P: [f64; 6] = [
        0.215_898_534_057_957,
        0.127_401_161_160_247_36,
        0.022_235_277_870_649_807,
        0.001_421_619_193_227_893_5,
        2.911_287_495_116_879e-5,
        0.023_073_441_764_940_173,
    ];
    const Q: [f64; 5] = [
        1.284_260_096_144_911,
        0.468_238_212_480_865_1,
        0.065_988_137_868_928_55,
        0.003_782_396_332_027_582_4,
        7.297_515_550_839_662e-5,
    ];
    const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    if x.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    let y = x.abs();
    // exp(-y²/2) split to keep the exponent exact for large y
    let gauss = |y: f64| {
        let ysq = (y * 16.0).trunc() / 16.0;
        let del = (y - ysq) * (y + ysq);
        (-0.5 * ysq * ysq).exp() * (-0.5 * del).exp()
    };
    if y <= 0.674_489_75 {
        let (mut xnum, mut xden) = (0.0, 0.0);
        if y > f64::EPSILON * 0.5 {
            let xsq = x * x;
            xnum = A[4] * xsq;
            xden = xsq;
            for i in 0..3 {
                xnum = (xnum + A[i]) * xsq;
                xden = (xden + B[i]) * xsq;
            }
        }
        let temp = x * (xnum + A[3]) / (xden + B[3]);
        return (0.5 + temp, 0.5 - temp);
    }
    let small = if y <= 32f64.sqrt() {
        let mut xnum = C[8] * y;
        let mut xden = y;
        for i in 0..7 {
            xnum = (xnum + C[i]) * y;
            xden = (xden + D[i]) * y;
        }
        gauss(y) * (xnum + C[7]) / (xden + D[7])
    } else if y < 40.0 {
        let xsq = 1.0 / (y * y);
        let mut xnum = P[5] * xsq;
        let mut xden = xsq;
        for i in 0..4 {
            xnum = (xnum + P[i]) * xsq;
            xden = (xden + Q[i]) * xsq;
        }
        let temp = xsq * (xnum + P[4]) / (xden + Q[4]);
        gauss(y) * (FRAC_1_SQRT_2PI - temp) / y
    } else {
        0.0
    };
    if x > 0.0 {
        (1.0 - small, small)
    } else {
        (small, 1.0 - small)
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    normal_tails(x).0
}

pub fn normal_sf(x: f64) -> f64 {
    normal_tails(x).1
}

fn normal_pdf(x: f64) -> f64 {
    0.398_942_280_401_432_7 * (-0.5 * x * x).exp()
}

pub fn normal_quantile(p: f64) -> Result<f64> {
    check_prob(p)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    // Solve on the lower tail, where Φ keeps relative precision, then
    // polish the erfc⁻¹ starting value with Newton steps.
    let tail = p.min(1.0 - p);
    let mut z = -SQRT_2 * erf::erfc_inv(2.0 * tail);
    for _ in 0..3 {
        let step = (normal_cdf(z) - tail) / normal_pdf(z);
        z -= step;
        if step.abs() <= 1e-16 * z.abs() {
            break;
        }
    }
    Ok(if p < 0.5 { z } else { -z })
}

pub fn chi_square_cdf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    Ok(gamma::gamma_lr(0.5 * df, 0.5 * x))
}

/// Upper tail `P(χ²_df > x)`.
pub fn chi_square_sf(x: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(gamma::gamma_ur(0.5 * df, 0.5 * x))
}

pub fn chi_square_quantile(p: f64, df: f64) -> Result<f64> {
    check_prob(p)?;
    check_df(df)?;
    let start = df + 10.0 * (2.0 * df).sqrt() + 10.0;
    // Work on whichever tail is smaller so that tiny tails keep precision.
    let f = |x: f64| -> Result<f64> {
        if p <= 0.5 {
            Ok(chi_square_cdf(x, df)? - p)
        } else {
            Ok((1.0 - p) - chi_square_sf(x, df)?)
        }
    };
    let bracket = expand_upper(f, 0.0, start, 1e300)?;
    try_find_root(f, bracket, 1e-15 * start, 0.0)
}

/// Regularized incomplete beta `I_x(a, b)` given both `x` and `1 − x`
/// computed without cancellation.
fn beta_reg_split(a: f64, b: f64, x: f64, one_minus_x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if one_minus_x <= 0.0 {
        return 1.0;
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        beta_reg(a, b, x)
    } else {
        1.0 - beta_reg(b, a, one_minus_x)
    }
}

/// Upper tail `P(T > t)` of the central t for `t ≥ 0`.
fn student_t_sf_nonneg(t: f64, df: f64) -> f64 {
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    0.5 * beta_reg_split(0.5 * df, 0.5, x, y)
}

pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if t.is_nan() {
        return Err(domain("student_t_cdf of NaN"));
    }
    Ok(if t >= 0.0 {
        1.0 - student_t_sf_nonneg(t, df)
    } else {
        student_t_sf_nonneg(-t, df)
    })
}

pub fn student_t_quantile(p: f64, df: f64) -> Result<f64> {
    check_prob(p)?;
    check_df(df)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    let tail = p.min(1.0 - p);
    // sf(t) − tail is increasing from tail − ½ < 0 at t = 0.
    let f = |t: f64| Ok(tail - student_t_sf_nonneg(t, df));
    let bracket = expand_upper(f, 0.0, 4.0, 1e300)?;
    let t = try_find_root(f, bracket, 1e-15 * bracket.hi, 0.0)?;
    Ok(if p > 0.5 { t } else { -t })
}

/// Largest |ncp| handled by the mixture series; beyond it the Poisson
/// weights underflow and the defining integral is used instead.
const NCT_SERIES_MAX_NCP: f64 = 37.0;
const NCT_ERRMAX: f64 = 1e-12;
const NCT_ITRMAX: usize = 2000;

/// `P(T ≤ x)` for the noncentral t with `df` degrees of freedom and
/// noncentrality `ncp`.
pub fn noncentral_t_cdf(x: f64, df: f64, ncp: f64) -> Result<f64> {
    check_df(df)?;
    if x.is_nan() || !ncp.is_finite() {
        return Err(domain(format!("noncentral_t_cdf: x={x}, ncp={ncp}")));
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    if x == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if ncp == 0.0 {
        return student_t_cdf(x, df);
    }
    if ncp.abs() > NCT_SERIES_MAX_NCP {
        return Ok(noncentral_t_cdf_integral(x, df, ncp));
    }
    noncentral_t_cdf_series(x, df, ncp)
}

/// Lenth's mixture series: Poisson-weighted incomplete beta terms over the
/// even and odd halves of the expansion of the noncentral t.
pub(crate) fn noncentral_t_cdf_series(t: f64, df: f64, ncp: f64) -> Result<f64> {
    let (tt, del, negdel) = if t >= 0.0 {
        (t, ncp, false)
    } else {
        (-t, -ncp, true)
    };
    let t2 = tt * tt;
    let x = t2 / (t2 + df);
    let one_minus_x = df / (t2 + df);
    let mut tnc = 0.0;
    if x > 0.0 {
        let lambda = del * del;
        let mut p = 0.5 * (-0.5 * lambda).exp();
        let mut q = (2.0 / std::f64::consts::PI).sqrt() * p * del;
        let mut s = 0.5 - p;
        if s < 1e-7 {
            s = -0.5 * (-0.5 * lambda).exp_m1();
        }
        let mut a = 0.5;
        let b = 0.5 * df;
        let rxb = one_minus_x.powf(b);
        let albeta = 0.5 * std::f64::consts::PI.ln() + ln_gamma(b) - ln_gamma(0.5 + b);
        let mut xodd = beta_reg_split(a, b, x, one_minus_x);
        let mut godd = 2.0 * rxb * (a * x.ln() - albeta).exp();
        let bx = b * x;
        let mut xeven = if bx < f64::EPSILON { bx } else { 1.0 - rxb };
        let mut geven = bx * rxb;
        tnc = p * xodd + q * xeven;
        let mut converged = false;
        for it in 1..=NCT_ITRMAX {
            a += 1.0;
            xodd -= godd;
            xeven -= geven;
            godd *= x * (a + b - 1.0) / a;
            geven *= x * (a + b - 0.5) / (a + 0.5);
            p *= lambda / (2 * it) as f64;
            q *= lambda / (2 * it + 1) as f64;
            tnc += p * xodd + q * xeven;
            s -= p;
            if s <= 0.0 && it > 1 {
                converged = true;
                break;
            }
            let errbd = 2.0 * s * (xodd - godd);
            if errbd.abs() < NCT_ERRMAX {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                what: "noncentral_t_cdf",
                bound: 2.0 * s,
            });
        }
    }
    tnc += normal_cdf(-del);
    let tnc = tnc.clamp(0.0, 1.0);
    Ok(if negdel { 1.0 - tnc } else { tnc })
}

/// `P(T ≤ t) = E[Φ(t·√(V/df) − ncp)]` with `V ~ χ²(df)`, integrated over
/// `y = ln V`.
pub(crate) fn noncentral_t_cdf_integral(t: f64, df: f64, ncp: f64) -> f64 {
    let half = 0.5 * df;
    let norm = ln_gamma(half) + half * std::f64::consts::LN_2;
    let log_w = |y: f64| half * y - 0.5 * y.exp() - norm;
    let y0 = df.ln();
    let peak = log_w(y0);
    let cutoff = peak - 60.0;
    let step0 = (2.0 / df).sqrt().min(1.0);
    let mut lo = y0;
    let mut step = step0;
    while log_w(lo) > cutoff {
        lo -= step;
        step *= 1.5;
    }
    let mut hi = y0;
    step = step0;
    while log_w(hi) > cutoff {
        hi += step;
        step *= 1.5;
    }
    let scale = 1.0 / df.sqrt();
    let v = gauss_legendre(
        |y| normal_cdf(t * (0.5 * y).exp() * scale - ncp) * log_w(y).exp(),
        lo,
        hi,
        400,
    );
    v.clamp(0.0, 1.0)
}
