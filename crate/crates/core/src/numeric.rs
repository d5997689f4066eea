//! Shared numeric helpers: probability clamping, log-domain utilities, and
//! the special functions needed by interval calibration and the chi-square
//! shift test.
//!
//! Probabilities are clamped to `[1e-12, 1]` before any logarithm taken
//! anywhere in the crate, so log-likelihoods and entropies stay finite for
//! hard zero/one probabilities.

/// Lower clamp applied to probabilities before logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Clamp a probability into `[PROB_FLOOR, 1]`.
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0)
}

/// Natural log of a clamped probability. Always finite.
pub fn ln_prob(p: f64) -> f64 {
    clamp_prob(p).ln()
}

/// Numerically stable log(sum(exp(x_i))).
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax of a logit vector.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = logsumexp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

/// Error function, accurate to roughly 1e-14 over the real line.
///
/// Uses the all-positive-term series `erf(x) = (2x/sqrt(pi)) e^(-x^2)
/// sum_n (2x^2)^n / (2n+1)!!` for |x| < 3, and the incomplete-gamma
/// identity `erfc(x) = Q(1/2, x^2)` beyond that.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        let x2 = x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        loop {
            term *= 2.0 * x2 / (2.0 * n + 1.0);
            sum += term;
            n += 1.0;
            if term < sum * 1e-17 || n > 200.0 {
                break;
            }
        }
        2.0 / std::f64::consts::PI.sqrt() * x * (-x2).exp() * sum
    } else {
        1.0 - reg_gamma_q(0.5, x * x)
    }
}

/// Inverse error function on (-1, 1).
///
/// Initial estimate from Acklam's rational approximation of the inverse
/// normal CDF, then one Newton step against [`erf`]; absolute error is
/// below 1e-9 across the open interval (and in practice near machine
/// precision away from the endpoints).
pub fn erf_inv(p: f64) -> f64 {
    assert!(
        p > -1.0 && p < 1.0,
        "erf_inv is defined on (-1, 1), got {p}"
    );
    if p == 0.0 {
        return 0.0;
    }
    let x0 = inverse_normal_cdf((p + 1.0) / 2.0) / std::f64::consts::SQRT_2;
    // Newton: f(x) = erf(x) - p, f'(x) = 2/sqrt(pi) e^(-x^2)
    let fx = erf(x0) - p;
    let d = 2.0 / std::f64::consts::PI.sqrt() * (-x0 * x0).exp();
    x0 - fx / d
}

/// Central-interval half-width multiplier: the z with
/// P(|X - mu| <= z * sigma) = p for a Gaussian, i.e. sqrt(2) * erf_inv(p).
pub fn central_interval_z(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erf_inv(p)
}

/// Acklam's rational approximation to the inverse standard normal CDF.
/// Relative error below 1.2e-9 on (0, 1).
#[allow(clippy::excessive_precision)] // published coefficients, kept verbatim
fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Natural log of the gamma function (Lanczos, g = 7, 9 coefficients).
#[allow(clippy::excessive_precision)] // published coefficients, kept verbatim
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn reg_gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn reg_gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = a;
    for _ in 0..500 {
        n += 1.0;
        term *= x / n;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (a * x.ln() - x - ln_gamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    // Lentz evaluation of the standard continued fraction for Q.
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (a * x.ln() - x - ln_gamma(a)).exp() * h
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom: P(X > x).
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    assert!(dof >= 1, "chi-square needs at least one degree of freedom");
    if x <= 0.0 {
        return 1.0;
    }
    reg_gamma_q(dof as f64 / 2.0, x / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    #[test]
    fn erf_reference_values() {
        close(erf(0.0), 0.0, 1e-15);
        close(erf(0.5), 0.520_499_877_813_046_5, 1e-13);
        close(erf(1.0), 0.842_700_792_949_714_9, 1e-13);
        close(erf(2.0), 0.995_322_265_018_952_7, 1e-13);
        close(erf(3.5), 0.999_999_256_901_627_7, 1e-13);
        close(erf(-1.0), -0.842_700_792_949_714_9, 1e-13);
    }

    #[test]
    fn erf_inv_roundtrip() {
        for i in 1..200 {
            let p = -0.995 + i as f64 * 0.01;
            if p <= -1.0 || p >= 1.0 {
                continue;
            }
            let x = erf_inv(p);
            close(erf(x), p, 1e-12);
        }
    }

    #[test]
    fn central_interval_reference() {
        // z for the central 70% interval equals the 0.85 normal quantile.
        close(central_interval_z(0.7), 1.036_433_389_493_789_8, 1e-9);
        close(central_interval_z(0.9), 1.644_853_626_951_472_7, 1e-9);
        close(central_interval_z(0.5), 0.674_489_750_196_081_7, 1e-9);
    }

    #[test]
    fn ln_gamma_reference() {
        close(ln_gamma(1.0), 0.0, 1e-12);
        close(ln_gamma(0.5), std::f64::consts::PI.ln() / 2.0, 1e-12);
        close(ln_gamma(5.0), 24.0_f64.ln(), 1e-12);
        close(ln_gamma(10.5), 13.940_625_219_403_763, 1e-10);
    }

    #[test]
    fn chi_square_reference_quantiles() {
        // Textbook 5% critical values.
        close(chi_square_sf(3.841_458_820_694_12, 1), 0.05, 1e-9);
        close(chi_square_sf(5.991_464_547_107_98, 2), 0.05, 1e-9);
        close(chi_square_sf(0.0, 3), 1.0, 1e-15);
        assert!(chi_square_sf(100.0, 2) < 1e-20);
    }

    #[test]
    fn gamma_pq_complement() {
        for &(a, x) in &[(0.5, 0.3), (2.0, 1.0), (5.0, 9.0), (10.0, 3.0)] {
            close(reg_gamma_p(a, x) + reg_gamma_q(a, x), 1.0, 1e-12);
        }
    }

    #[test]
    fn clamp_and_logs() {
        assert_eq!(clamp_prob(0.0), PROB_FLOOR);
        assert_eq!(clamp_prob(2.0), 1.0);
        assert_eq!(clamp_prob(0.5), 0.5);
        assert!(ln_prob(0.0).is_finite());
        close(ln_prob(1.0), 0.0, 1e-15);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        close(p.iter().sum::<f64>(), 1.0, 1e-12);
        assert!(p[2] > p[1] && p[1] > p[0]);
        close(logsumexp(&[0.0, 0.0]), 2.0_f64.ln(), 1e-12);
    }
}
