//! Distribution functions needed for inference: regularized incomplete gamma,
//! chi-square and standard normal CDFs and quantiles, and a one-sample
//! Kolmogorov–Smirnov test.

use std::f64::consts::{PI, SQRT_2};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (k, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "shape must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`, computed
/// without cancellation in the upper tail.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "shape must be positive");
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_q_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

pub fn chi2_cdf(x: f64, df: f64) -> f64 {
    gamma_p(0.5 * df, 0.5 * x)
}

/// Upper tail `P(chi2_df > x)`.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    gamma_q(0.5 * df, 0.5 * x)
}

/// Quantile of the chi-square distribution: the `x` with `cdf(x) = p`.
pub fn chi2_quantile(p: f64, df: f64) -> f64 {
    assert!((0.0..1.0).contains(&p), "probability must lie in [0, 1)");
    if p == 0.0 {
        return 0.0;
    }
    // bracket, then bisect to machine precision
    let mut hi = df.max(1.0);
    while chi2_cdf(hi, df) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if chi2_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    let half = 0.5 * gamma_p(0.5, 0.5 * z * z);
    if z >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    if p == 0.5 {
        return 0.0;
    }
    // |z| = sqrt(chi2_1 quantile at |2p - 1|)
    let z = chi2_quantile((2.0 * p - 1.0).abs(), 1.0).sqrt();
    if p > 0.5 {
        z
    } else {
        -z
    }
}

/// Two-sided normal critical value for level `alpha`.
pub fn normal_critical(alpha: f64) -> f64 {
    normal_quantile(1.0 - 0.5 * alpha)
}

/// Kolmogorov distribution upper tail `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-lambda theta-function form converges faster here
        let y = (-PI * PI / (8.0 * lambda * lambda)).exp();
        let mut sum = 0.0;
        let mut k = 1;
        loop {
            let term = y.powi((2 * k - 1) * (2 * k - 1));
            sum += term;
            if term < 1e-17 || k > 100 {
                break;
            }
            k += 1;
        }
        return 1.0 - (2.0 * PI).sqrt() / lambda * sum;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test of `sample` against `cdf`. The p-value
/// uses Stephens' finite-sample correction of the asymptotic distribution.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> KsResult {
    assert!(!sample.is_empty(), "KS test needs data");
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let rn = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d),
    }
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    2.0 * normal_cdf(x * SQRT_2) - 1.0
}
