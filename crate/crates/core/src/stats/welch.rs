use serde::Serialize;

use super::distributions::student_t_two_sided_p;
use crate::error::{Error, Result};

/// Sample size, mean and (n-1) standard deviation of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl SampleSummary {
    pub fn new(n: usize, mean: f64, sd: f64) -> Self {
        SampleSummary { n, mean, sd }
    }

    pub fn from_sample(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        SampleSummary { n, mean, sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub mean_before: f64,
    pub mean_after: f64,
    pub sd_before: f64,
    pub sd_after: f64,
    pub n_before: usize,
    pub n_after: usize,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Welch's unequal-variance t-test; positive `t` means the after-mean is larger.
pub fn welch(before: SampleSummary, after: SampleSummary) -> Result<WelchResult> {
    for (label, s) in [("before", before), ("after", after)] {
        if s.n < 2 {
            return Err(Error::InsufficientData(format!(
                "Welch's test needs n >= 2 per group, {label} has {}",
                s.n
            )));
        }
        if !(s.sd >= 0.0) || !s.mean.is_finite() || !s.sd.is_finite() {
            return Err(Error::InvalidValue(format!("invalid {label} summary {s:?}")));
        }
    }
    let vb = before.sd * before.sd / before.n as f64;
    let va = after.sd * after.sd / after.n as f64;
    let se2 = va + vb;
    if se2 == 0.0 {
        return Err(Error::ZeroVariance("both groups have zero variance"));
    }
    let t = (after.mean - before.mean) / se2.sqrt();
    let df = se2 * se2 / (va * va / (after.n - 1) as f64 + vb * vb / (before.n - 1) as f64);
    let p = student_t_two_sided_p(t, df)?;
    Ok(WelchResult {
        mean_before: before.mean,
        mean_after: after.mean,
        sd_before: before.sd,
        sd_after: after.sd,
        n_before: before.n,
        n_after: after.n,
        t,
        df,
        p,
    })
}
