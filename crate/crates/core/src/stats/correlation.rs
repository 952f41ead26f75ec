use std::ops::RangeInclusive;

use chrono::Duration;
use serde::Serialize;

use super::distributions::student_t_two_sided_p;
use crate::aggregate::MetricSeries;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::records::CaseSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrMethod {
    Pearson,
    Spearman,
}

impl CorrMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrMethod::Pearson => "pearson",
            CorrMethod::Spearman => "spearman",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub method: CorrMethod,
    pub lag: u32,
    pub r: f64,
    pub n: usize,
    pub p: f64,
}

/// Two-sided p-value of a correlation coefficient via `t = r √((n-2)/(1-r²))`.
pub fn correlation_p_value(r: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::InsufficientData(format!("correlation needs n >= 3, got {n}")));
    }
    if r.abs() >= 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    student_t_two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "correlation needs n >= 3, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite value in correlation input".into()));
    }
    Ok(())
}

fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance("correlation input is constant"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y)?;
    let r = pearson_r(x, y)?;
    Ok(CorrelationResult {
        method: CorrMethod::Pearson,
        lag: 0,
        r,
        n: x.len(),
        p: correlation_p_value(r, x.len())?,
    })
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y)?;
    let r = pearson_r(&average_ranks(x), &average_ranks(y))?;
    Ok(CorrelationResult {
        method: CorrMethod::Spearman,
        lag: 0,
        r,
        n: x.len(),
        p: correlation_p_value(r, x.len())?,
    })
}

pub const MIN_LAG_OVERLAP: usize = 10;

/// Correlates `pct[t]` with `cases[t - k]` for every lag `k` and keeps the lag
/// with the highest coefficient (ties go to the smaller lag).
///
/// Alignment is by calendar date over the days both series cover; undefined
/// percentages are skipped. The reported p-value is that of the chosen lag
/// alone and is not adjusted for the search.
pub fn lag_max_correlation(
    cases: &CaseSeries,
    pct: &MetricSeries,
    lags: RangeInclusive<u32>,
    method: CorrMethod,
) -> Result<CorrelationResult> {
    let lag_list: Vec<u32> = lags.collect();
    if lag_list.is_empty() {
        return Err(Error::InvalidValue("empty lag range".into()));
    }
    let per_lag = par::map(Execution::default(), &lag_list, |&k| {
        let (x, y): (Vec<f64>, Vec<f64>) = pct
            .points
            .iter()
            .filter_map(|&(date, value)| {
                let v = value?;
                let c = cases.get(date - Duration::days(k as i64))?;
                Some((c as f64, v))
            })
            .unzip();
        if x.len() < MIN_LAG_OVERLAP {
            return Err(Error::InsufficientData(format!(
                "{}: {} overlapping days at lag {k}, need {MIN_LAG_OVERLAP}",
                pct.city_id,
                x.len()
            )));
        }
        let mut res = match method {
            CorrMethod::Pearson => pearson(&x, &y)?,
            CorrMethod::Spearman => spearman(&x, &y)?,
        };
        res.lag = k;
        Ok(res)
    });
    let mut best: Option<CorrelationResult> = None;
    for res in per_lag {
        let res = res?;
        if best.is_none_or(|b| res.r > b.r) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one lag"))
}
