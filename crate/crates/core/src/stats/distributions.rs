use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Upper tail `1 - Φ(x)` for `x >= 0`.
fn upper_tail(x: f64) -> f64 {
    if x < 3.0 {
        // Marsaglia's series: Φ(x) = 1/2 + φ(x) (x + x³/3 + x⁵/(3·5) + ...)
        let (mut term, mut sum, x2) = (x, x, x * x);
        let mut k = 1.0;
        while term > sum * 1e-17 {
            k += 2.0;
            term *= x2 / k;
            sum += term;
        }
        0.5 - normal_pdf(x) * sum
    } else {
        // Laplace continued fraction φ(x) / (x + 1/(x + 2/(x + 3/(x + ...))))
        let mut frac = 0.0;
        for k in (1..=120).rev() {
            frac = k as f64 / (x + frac);
        }
        normal_pdf(x) / (x + frac)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 0.0 {
        1.0 - upper_tail(x)
    } else {
        upper_tail(-x)
    }
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const BETA_TOL: f64 = 1e-12;
const BETA_MAX_ITER: usize = 300;

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidValue(format!("beta parameters must be positive: a={a}, b={b}")));
    }
    if x.is_nan() || !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidValue(format!("incomplete beta argument {x} outside [0, 1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_front.exp() * beta_cf(x, a, b)? / a)
    } else {
        Ok(1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a)? / b)
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_TOL {
            return Ok(h);
        }
    }
    Err(Error::NumericConvergence("incomplete beta continued fraction"))
}

/// Two-sided tail probability `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) {
        return Err(Error::InvalidValue(format!("degrees of freedom {df} must be positive")));
    }
    if t.is_nan() {
        return Err(Error::InvalidValue("t statistic is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let x = df / (df + t * t);
    Ok(regularized_incomplete_beta(x, df / 2.0, 0.5)?.clamp(0.0, 1.0))
}

/// Student's t CDF.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    let tail = 0.5 * student_t_two_sided_p(t, df)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.96) - 0.975).abs() < 1e-4);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!((normal_sf(5.0) - 2.866_515_718_791_939e-7).abs() < 1e-18);
        assert!((normal_cdf(-3.0) - 1.349_898_031_630_094_6e-3).abs() < 1e-15);
    }

    #[test]
    fn normal_symmetry() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-8.0..8.0);
            assert!((normal_cdf(-x) - (1.0 - normal_cdf(x))).abs() < 1e-12);
        }
    }

    #[test]
    fn ln_gamma_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a
        assert!((regularized_incomplete_beta(0.3, 1.0, 1.0).unwrap() - 0.3).abs() < 1e-14);
        assert!((regularized_incomplete_beta(0.7, 3.0, 1.0).unwrap() - 0.343).abs() < 1e-13);
        assert!(regularized_incomplete_beta(1.5, 1.0, 1.0).is_err());
        assert!(regularized_incomplete_beta(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn student_t_basics() {
        assert_eq!(student_t_cdf(0.0, 5.0).unwrap(), 0.5);
        assert!((student_t_cdf(1.0, 1.0).unwrap() - 0.75).abs() < 1e-14);
        // df = 2 closed form: 1/2 + t / (2 sqrt(2 + t²))
        for t in [-3.0, -0.5, 0.25, 2.0, 7.0] {
            let want = 0.5 + t / (2.0 * (2.0f64 + t * t).sqrt());
            assert!((student_t_cdf(t, 2.0).unwrap() - want).abs() < 1e-12);
        }
        assert_eq!(student_t_two_sided_p(f64::INFINITY, 3.0).unwrap(), 0.0);
        assert!(student_t_cdf(1.0, 0.0).is_err());
    }

    #[test]
    fn large_df_converges() {
        for df in [1e3, 1e4, 1e5] {
            let p = student_t_two_sided_p(2.0, df).unwrap();
            assert!((p - 2.0 * normal_sf(2.0)).abs() < 1e-3);
        }
    }
}
