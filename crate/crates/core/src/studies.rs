//! Before/after policy effects, trend tests, lagged correlations and the
//! protest-cohort comparison.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;

use crate::aggregate::{
    bucket_series, percentage, total, Cohort, CorpusAggregates, DailyAggregate, MetricKind,
    MetricSeries, Period,
};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::records::{CaseSeries, PolicyEvent, PolicyKind, StudyConfig};
use crate::stats::{
    lag_max_correlation, mann_kendall, welch, CorrMethod, CorrelationResult, SampleSummary,
    TrendResult, WelchResult,
};

/// Outcome of one per-city study; failures are kept as rows, not raised.
#[derive(Debug, Clone)]
pub struct StudyRow<T> {
    pub city_id: String,
    pub outcome: std::result::Result<T, String>,
}

impl<T> StudyRow<T> {
    fn new(city_id: &str, r: Result<T>) -> Self {
        StudyRow {
            city_id: city_id.to_string(),
            outcome: r.map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyEffectReport {
    pub city_id: String,
    pub event: PolicyEvent,
    pub metric: MetricKind,
    pub days_before: usize,
    pub days_after: usize,
    pub mean_before: f64,
    pub mean_after: f64,
    pub welch: WelchResult,
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CohortComparison {
    pub city_id: String,
    pub metric: MetricKind,
    pub blm: (u64, u64),
    pub non_blm: (u64, u64),
    pub blm_pct: f64,
    pub non_blm_pct: f64,
    /// `blm_pct - non_blm_pct`, in percentage points.
    pub difference: f64,
}

/// The metric each policy is expected to move.
pub fn policy_metric(kind: PolicyKind) -> MetricKind {
    match kind {
        PolicyKind::StayAtHome => MetricKind::PctGroup,
        PolicyKind::MaskMandate => MetricKind::PctMasked,
    }
}

pub fn is_significant(p: f64, alpha: f64) -> bool {
    p < alpha
}

/// Days before the effective date go to the first half, the effective date
/// and later to the second.
pub fn split_before_after(series: &MetricSeries, event: &PolicyEvent) -> Result<(MetricSeries, MetricSeries)> {
    let (Some(first), Some(last)) = (series.points.first(), series.points.last()) else {
        return Err(Error::EmptyInput("metric series"));
    };
    if event.effective_date < first.0 || event.effective_date > last.0 {
        return Err(Error::OutOfRange(format!(
            "{} effective {} outside series span {}..{}",
            event.kind.as_str(),
            event.effective_date,
            first.0,
            last.0
        )));
    }
    let cut = series.points.partition_point(|p| p.0 < event.effective_date);
    let part = |points: &[(NaiveDate, Option<f64>)]| MetricSeries {
        city_id: series.city_id.clone(),
        kind: series.kind,
        points: points.to_vec(),
    };
    Ok((part(&series.points[..cut]), part(&series.points[cut..])))
}

/// Welch test on the daily percentages either side of the event. Days with
/// an empty denominator are dropped.
pub fn policy_effect(
    daily: &[DailyAggregate],
    event: &PolicyEvent,
    metric: MetricKind,
    cfg: &StudyConfig,
) -> Result<PolicyEffectReport> {
    let start = daily.first().map_or(cfg.window.start, |d| d.date);
    let series = bucket_series(&event.city_id, daily, Period::Day, metric, start);
    let (before, after) = split_before_after(&series, event)?;
    let (b, a) = (before.defined_values(), after.defined_values());
    for (label, v) in [("before", &b), ("after", &a)] {
        if v.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "{} {}: {} defined days {label} the event",
                event.city_id,
                event.kind.as_str(),
                v.len()
            )));
        }
    }
    let w = welch(SampleSummary::from_sample(&b), SampleSummary::from_sample(&a))?;
    Ok(PolicyEffectReport {
        city_id: event.city_id.clone(),
        event: event.clone(),
        metric,
        days_before: before.points.len(),
        days_after: after.points.len(),
        mean_before: w.mean_before,
        mean_after: w.mean_after,
        significant: is_significant(w.p, cfg.alpha),
        welch: w,
    })
}

/// One report per configured event of `kind`, in config order.
pub fn policy_study(
    corpus: &CorpusAggregates,
    cfg: &StudyConfig,
    kind: PolicyKind,
    exec: Execution,
) -> Vec<StudyRow<PolicyEffectReport>> {
    let events: Vec<&PolicyEvent> = cfg.events(kind).collect();
    par::map(exec, &events, |e| {
        let daily = corpus.daily(&e.city_id, cfg.window);
        StudyRow::new(&e.city_id, policy_effect(&daily, e, policy_metric(kind), cfg))
    })
}

pub fn daily_series(corpus: &CorpusAggregates, cfg: &StudyConfig, city_id: &str, metric: MetricKind) -> MetricSeries {
    let daily = corpus.daily(city_id, cfg.window);
    bucket_series(city_id, &daily, Period::Day, metric, cfg.window.start)
}

/// Mann-Kendall on each city's daily masked percentage.
pub fn trend_study(corpus: &CorpusAggregates, cfg: &StudyConfig, exec: Execution) -> Vec<StudyRow<TrendResult>> {
    par::map(exec, &cfg.cities, |c| {
        let values = daily_series(corpus, cfg, &c.id, MetricKind::PctMasked).defined_values();
        StudyRow::new(&c.id, mann_kendall(&values))
    })
}

/// Lag-searched Pearson and Spearman rows per city, Pearson first.
pub fn correlation_study(
    corpus: &CorpusAggregates,
    cases: &BTreeMap<String, CaseSeries>,
    cfg: &StudyConfig,
    exec: Execution,
) -> Vec<StudyRow<CorrelationResult>> {
    let (lo, hi) = cfg.lag_range;
    let rows = par::map(exec, &cfg.cities, |c| {
        let series = daily_series(corpus, cfg, &c.id, MetricKind::PctMasked);
        [CorrMethod::Pearson, CorrMethod::Spearman].map(|method| {
            let r = match cases.get(&c.id) {
                Some(cs) => lag_max_correlation(cs, &series, lo..=hi, method),
                None => Err(Error::InsufficientData(format!("no case series for {}", c.id))),
            };
            StudyRow::new(&c.id, r)
        })
    });
    rows.into_iter().flatten().collect()
}

/// Pooled cohort percentages over the protest window for one city.
pub fn blm_comparison(
    corpus: &CorpusAggregates,
    cfg: &StudyConfig,
    city_id: &str,
    metric: MetricKind,
) -> Result<CohortComparison> {
    let pooled = |cohort| {
        let days = corpus.daily_cohort(city_id, cfg.blm_window, cohort);
        let agg = total(&days).unwrap_or_else(|| DailyAggregate::zero(cfg.blm_window.start));
        metric.counts(&agg)
    };
    let (blm, non_blm) = (pooled(Cohort::Blm), pooled(Cohort::NonBlm));
    compare_cohorts(city_id, metric, blm, non_blm)
}

pub fn compare_cohorts(city_id: &str, metric: MetricKind, blm: (u64, u64), non_blm: (u64, u64)) -> Result<CohortComparison> {
    let undefined = |label: &str| {
        Error::InsufficientData(format!(
            "{city_id}: {label} cohort has no {} denominator",
            metric.as_str()
        ))
    };
    let b = percentage(blm.0, blm.1).ok_or_else(|| undefined("blm"))?;
    let n = percentage(non_blm.0, non_blm.1).ok_or_else(|| undefined("non-blm"))?;
    Ok(CohortComparison {
        city_id: city_id.to_string(),
        metric,
        blm,
        non_blm,
        blm_pct: b.value(),
        non_blm_pct: n.value(),
        difference: b.value() - n.value(),
    })
}

pub fn blm_study(corpus: &CorpusAggregates, cfg: &StudyConfig) -> Vec<StudyRow<CohortComparison>> {
    let mut rows = Vec::new();
    for city in &cfg.blm_cities {
        for metric in [MetricKind::PctGroup, MetricKind::PctMaskedInGroup, MetricKind::PctMasked] {
            rows.push(StudyRow::new(city, blm_comparison(corpus, cfg, city, metric)));
        }
    }
    rows
}

/// Group summary from a published "sum of daily percentages / days" cell.
pub fn summary_from_sum(sum: f64, days: usize, sd: f64) -> SampleSummary {
    SampleSummary::new(days, sum / days as f64, sd)
}
