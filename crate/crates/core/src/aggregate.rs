//! Mergeable per-day adherence counts and the percentage series derived
//! from them.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::FitHistogram;
use crate::par::{self, Execution};
use crate::records::{classify_blm, is_celebrity, DateRange, PostRecord, StudyConfig};

/// Per-day counts. Forms a commutative monoid under [`merge`] with
/// [`DailyAggregate::zero`] as identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DailyAggregate {
    pub date: NaiveDate,
    pub n_posts: u64,
    pub n_faces: u64,
    pub n_masked: u64,
    /// Posts with at least two detected faces.
    pub n_group_posts: u64,
    pub n_faces_in_groups: u64,
    pub n_masked_in_groups: u64,
    /// Posts with at least one masked face.
    pub n_masked_posts: u64,
    pub n_celebrity_posts: u64,
    pub n_celebrity_masked_posts: u64,
    pub n_blm_posts: u64,
    pub fit_hist: FitHistogram,
}

impl DailyAggregate {
    pub fn zero(date: NaiveDate) -> Self {
        DailyAggregate {
            date,
            n_posts: 0,
            n_faces: 0,
            n_masked: 0,
            n_group_posts: 0,
            n_faces_in_groups: 0,
            n_masked_in_groups: 0,
            n_masked_posts: 0,
            n_celebrity_posts: 0,
            n_celebrity_masked_posts: 0,
            n_blm_posts: 0,
            fit_hist: FitHistogram::default(),
        }
    }

    pub fn add_post(&mut self, post: &PostRecord, cfg: &StudyConfig) {
        let faces = post.faces.len() as u64;
        let masked = post.n_masked() as u64;
        let celebrity = is_celebrity(post, cfg.celebrity_like_threshold);
        self.n_posts += 1;
        self.n_faces += faces;
        self.n_masked += masked;
        if post.is_group() {
            self.n_group_posts += 1;
            self.n_faces_in_groups += faces;
            self.n_masked_in_groups += masked;
        }
        if masked > 0 {
            self.n_masked_posts += 1;
            self.n_celebrity_masked_posts += celebrity as u64;
        }
        self.n_celebrity_posts += celebrity as u64;
        self.n_blm_posts += classify_blm(&post.tags, &cfg.blm_tags) as u64;
        for face in &post.faces {
            if let (true, Some(s)) = (face.is_masked(), face.fit_score) {
                self.fit_hist.add(s);
            }
        }
    }

    /// Fieldwise sum, ignoring dates.
    fn absorb(&mut self, other: &DailyAggregate) {
        self.n_posts += other.n_posts;
        self.n_faces += other.n_faces;
        self.n_masked += other.n_masked;
        self.n_group_posts += other.n_group_posts;
        self.n_faces_in_groups += other.n_faces_in_groups;
        self.n_masked_in_groups += other.n_masked_in_groups;
        self.n_masked_posts += other.n_masked_posts;
        self.n_celebrity_posts += other.n_celebrity_posts;
        self.n_celebrity_masked_posts += other.n_celebrity_masked_posts;
        self.n_blm_posts += other.n_blm_posts;
        self.fit_hist.merge(&other.fit_hist);
    }
}

pub fn aggregate_day(date: NaiveDate, posts: &[PostRecord], cfg: &StudyConfig) -> DailyAggregate {
    let mut agg = DailyAggregate::zero(date);
    for p in posts {
        agg.add_post(p, cfg);
    }
    agg
}

pub fn merge(a: &DailyAggregate, b: &DailyAggregate) -> Result<DailyAggregate> {
    if a.date != b.date {
        return Err(Error::MergeDateMismatch {
            left: a.date,
            right: b.date,
        });
    }
    let mut out = a.clone();
    out.absorb(b);
    Ok(out)
}

/// A count ratio expressed in percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Percentage {
    pub numerator: u64,
    pub denominator: u64,
}

impl Percentage {
    pub fn value(self) -> f64 {
        100.0 * self.numerator as f64 / self.denominator as f64
    }

    /// Hundredths of a percent, rounded half-up with exact integer arithmetic.
    pub fn hundredths(self) -> u128 {
        let (n, d) = (self.numerator as u128, self.denominator as u128);
        (20_000 * n + d) / (2 * d)
    }

    /// Reporting value: percent rounded half-up to two decimals.
    pub fn rounded(self) -> f64 {
        self.hundredths() as f64 / 100.0
    }
}

impl std::fmt::Display for Percentage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let h = self.hundredths();
        write!(f, "{}.{:02}", h / 100, h % 100)
    }
}

/// `100 n / d`, undefined when `d == 0`.
pub fn percentage(numerator: u64, denominator: u64) -> Option<Percentage> {
    (denominator > 0).then_some(Percentage {
        numerator,
        denominator,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    PctMasked,
    PctGroup,
    PctMaskedInGroup,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::PctMasked => "pct_masked",
            MetricKind::PctGroup => "pct_group",
            MetricKind::PctMaskedInGroup => "pct_masked_in_group",
        }
    }

    /// (numerator, denominator) of the metric.
    pub fn counts(self, a: &DailyAggregate) -> (u64, u64) {
        match self {
            MetricKind::PctMasked => (a.n_masked, a.n_faces),
            MetricKind::PctGroup => (a.n_group_posts, a.n_posts),
            MetricKind::PctMaskedInGroup => (a.n_masked_in_groups, a.n_faces_in_groups),
        }
    }

    pub fn percentage(self, a: &DailyAggregate) -> Option<Percentage> {
        let (n, d) = self.counts(a);
        percentage(n, d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub city_id: String,
    pub kind: MetricKind,
    /// (bucket start date, percentage); `None` where the denominator is zero.
    pub points: Vec<(NaiveDate, Option<f64>)>,
}

impl MetricSeries {
    pub fn defined_values(&self) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.1).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Day,
    Week,
    Month,
}

/// Merges date-sorted daily aggregates into period buckets.
///
/// Weeks are consecutive 7-day blocks starting at `anchor`; months are
/// calendar months. Each bucket carries the date of its first day.
pub fn bucket_aggregates(
    aggregates: &[DailyAggregate],
    period: Period,
    anchor: NaiveDate,
) -> Vec<DailyAggregate> {
    let mut out: Vec<(i64, DailyAggregate)> = Vec::new();
    for a in aggregates {
        let (key, start) = match period {
            Period::Day => (a.date.num_days_from_ce() as i64, a.date),
            Period::Week => {
                let k = (a.date - anchor).num_days().div_euclid(7);
                (k, anchor + chrono::Duration::days(7 * k))
            }
            Period::Month => (
                a.date.year() as i64 * 12 + a.date.month0() as i64,
                a.date.with_day(1).expect("day 1 exists"),
            ),
        };
        match out.last_mut() {
            Some((k, bucket)) if *k == key => bucket.absorb(a),
            _ => {
                let mut bucket = DailyAggregate::zero(start);
                bucket.absorb(a);
                out.push((key, bucket));
            }
        }
    }
    out.into_iter().map(|(_, b)| b).collect()
}

pub fn bucket_series(
    city_id: &str,
    aggregates: &[DailyAggregate],
    period: Period,
    kind: MetricKind,
    anchor: NaiveDate,
) -> MetricSeries {
    MetricSeries {
        city_id: city_id.to_string(),
        kind,
        points: bucket_aggregates(aggregates, period, anchor)
            .iter()
            .map(|b| (b.date, kind.percentage(b).map(Percentage::value)))
            .collect(),
    }
}

/// Percent of posts with a masked face that come from celebrity accounts.
pub fn celebrity_share(aggregates: &[DailyAggregate]) -> Option<f64> {
    let (n, d) = aggregates.iter().fold((0, 0), |(n, d), a| {
        (n + a.n_celebrity_masked_posts, d + a.n_masked_posts)
    });
    percentage(n, d).map(Percentage::value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    NonBlm,
    Blm,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AggregateKey {
    pub city_id: String,
    pub date: NaiveDate,
    pub cohort: Cohort,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestCounts {
    pub accepted: u64,
    pub unknown_city: u64,
    pub out_of_window: u64,
}

impl IngestCounts {
    fn absorb(&mut self, o: IngestCounts) {
        self.accepted += o.accepted;
        self.unknown_city += o.unknown_city;
        self.out_of_window += o.out_of_window;
    }
}

/// Daily aggregates keyed by (city, local date, BLM cohort).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusAggregates {
    map: BTreeMap<AggregateKey, DailyAggregate>,
    pub counts: IngestCounts,
}

impl CorpusAggregates {
    /// Buckets one post. Posts from unknown cities, or dated outside both the
    /// study window and (for protest cities) the protest window, are counted
    /// and dropped.
    pub fn add_post(&mut self, post: &PostRecord, cfg: &StudyConfig) -> bool {
        if cfg.city(&post.city_id).is_none() {
            self.counts.unknown_city += 1;
            return false;
        }
        let date = cfg.local_date(&post.city_id, post.timestamp);
        let in_blm = cfg.blm_window.contains(date) && cfg.blm_cities.contains(&post.city_id);
        if !cfg.window.contains(date) && !in_blm {
            self.counts.out_of_window += 1;
            return false;
        }
        let cohort = if classify_blm(&post.tags, &cfg.blm_tags) {
            Cohort::Blm
        } else {
            Cohort::NonBlm
        };
        let key = AggregateKey {
            city_id: post.city_id.clone(),
            date,
            cohort,
        };
        self.map
            .entry(key)
            .or_insert_with(|| DailyAggregate::zero(date))
            .add_post(post, cfg);
        self.counts.accepted += 1;
        true
    }

    pub fn merge(mut self, other: CorpusAggregates) -> CorpusAggregates {
        if self.map.len() < other.map.len() {
            return other.merge(self);
        }
        for (k, v) in other.map {
            match self.map.get_mut(&k) {
                Some(a) => a.absorb(&v),
                None => {
                    self.map.insert(k, v);
                }
            }
        }
        self.counts.absorb(other.counts);
        self
    }

    pub fn entries(&self) -> impl Iterator<Item = (&AggregateKey, &DailyAggregate)> {
        self.map.iter()
    }

    fn collect_days(
        &self,
        range: DateRange,
        keep: impl Fn(&AggregateKey) -> bool,
    ) -> Vec<DailyAggregate> {
        let mut days: Vec<DailyAggregate> = range.iter().map(DailyAggregate::zero).collect();
        for (k, v) in &self.map {
            if range.contains(k.date) && keep(k) {
                days[(k.date - range.start).num_days() as usize].absorb(v);
            }
        }
        days
    }

    /// One aggregate per day of `range` for a city, both cohorts pooled.
    pub fn daily(&self, city_id: &str, range: DateRange) -> Vec<DailyAggregate> {
        self.collect_days(range, |k| k.city_id == city_id)
    }

    pub fn daily_cohort(&self, city_id: &str, range: DateRange, cohort: Cohort) -> Vec<DailyAggregate> {
        self.collect_days(range, |k| k.city_id == city_id && k.cohort == cohort)
    }

    /// One aggregate per day of `range`, all cities pooled.
    pub fn pooled_daily(&self, range: DateRange) -> Vec<DailyAggregate> {
        self.collect_days(range, |_| true)
    }
}

/// Aggregates in-memory posts, partitioned across workers and merged.
pub fn aggregate_posts(posts: &[PostRecord], cfg: &StudyConfig, exec: Execution) -> CorpusAggregates {
    par::fold_reduce(
        exec,
        posts,
        CorpusAggregates::default,
        |mut acc, post| {
            acc.add_post(post, cfg);
            acc
        },
        CorpusAggregates::merge,
    )
}

/// Sums a slice of aggregates into one, keeping the first date.
pub fn total(aggregates: &[DailyAggregate]) -> Option<DailyAggregate> {
    let (first, rest) = aggregates.split_first()?;
    let mut out = first.clone();
    for a in rest {
        out.absorb(a);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::FitScore;
    use crate::geometry::{FaceBox, LandmarkSet};
    use crate::records::{FaceRecord, MaskLabel};
    use chrono::{Duration, TimeZone, Utc};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeSet;

    fn d(m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, m, day).unwrap()
    }

    fn face(masked: bool, fit: Option<f64>) -> FaceRecord {
        let b = FaceBox { x: 0.0, y: 0.0, width: 50.0, height: 50.0 };
        FaceRecord {
            landmarks: LandmarkSet::template(b).unwrap(),
            mask_label: if masked { MaskLabel::Masked } else { MaskLabel::Unmasked },
            mask_probability: if masked { 0.9 } else { 0.1 },
            seg_mask: fit.map(|_| "m.pgm".into()),
            fit_score: fit.map(|v| FitScore::new(v).unwrap()),
        }
    }

    fn post(id: usize, date: NaiveDate, masks: &[bool], likes: u64, tags: &[&str]) -> PostRecord {
        PostRecord {
            post_id: format!("p{id}"),
            city_id: "boston".into(),
            timestamp: Utc.from_utc_datetime(&date.and_hms_opt(12, 0, 0).unwrap()),
            tags: tags.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
            like_count: likes,
            faces: masks.iter().map(|&m| face(m, None)).collect(),
        }
    }

    #[test]
    fn empty_day_is_zero() {
        let cfg = StudyConfig::default();
        assert_eq!(aggregate_day(d(3, 1), &[], &cfg), DailyAggregate::zero(d(3, 1)));
    }

    #[test]
    fn group_post_definitions() {
        let cfg = StudyConfig::default();
        let a = aggregate_day(d(3, 1), &[post(0, d(3, 1), &[true, false], 5, &[])], &cfg);
        assert_eq!((a.n_group_posts, a.n_faces_in_groups, a.n_masked_in_groups), (1, 2, 1));
        assert_eq!((a.n_posts, a.n_faces, a.n_masked, a.n_masked_posts), (1, 2, 1, 1));
    }

    #[test]
    fn fit_scores_only_from_masked_faces() {
        let cfg = StudyConfig::default();
        let mut p = post(0, d(3, 1), &[], 0, &[]);
        p.faces = vec![face(true, Some(95.0)), face(true, None), face(true, Some(5.0))];
        let a = aggregate_day(d(3, 1), &[p], &cfg);
        assert_eq!(a.fit_hist.total, 2);
        assert_eq!(a.fit_hist.bins[9], 1);
    }

    #[test]
    fn percentages() {
        assert_eq!(percentage(25413, 200089).unwrap().to_string(), "12.70");
        assert_eq!(percentage(4847, 45301).unwrap().to_string(), "10.70");
        assert_eq!(percentage(4847, 45301).unwrap().rounded(), 10.70);
        assert!(percentage(0, 0).is_none());
        assert_eq!(percentage(1, 8).unwrap().to_string(), "12.50");
        // half-up at the third decimal: 1/1600 = 0.0625 %
        assert_eq!(percentage(1, 1600).unwrap().to_string(), "0.06");
        assert_eq!(percentage(1, 800).unwrap().to_string(), "0.13");
        assert_eq!(percentage(3, 3).unwrap().to_string(), "100.00");
    }

    #[test]
    fn merge_rejects_different_dates() {
        let r = merge(&DailyAggregate::zero(d(3, 1)), &DailyAggregate::zero(d(3, 2)));
        assert!(matches!(r, Err(Error::MergeDateMismatch { .. })));
    }

    fn random_posts(n: usize, date: NaiveDate, seed: u64) -> Vec<PostRecord> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let k = [0, 0, 1, 1, 2, 3][rng.gen_range(0..6)];
                let masks: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.3)).collect();
                let likes = if rng.gen_bool(0.05) { 20_000 } else { 10 };
                let tags: &[&str] = if rng.gen_bool(0.2) { &["blm"] } else { &[] };
                post(i, date, &masks, likes, tags)
            })
            .collect()
    }

    /// Straight counting loop, independent of `add_post`.
    fn naive(posts: &[PostRecord], date: NaiveDate) -> DailyAggregate {
        let mut a = DailyAggregate::zero(date);
        a.n_posts = posts.len() as u64;
        for p in posts {
            let masked = p.faces.iter().filter(|f| f.mask_label == MaskLabel::Masked).count() as u64;
            a.n_faces += p.faces.len() as u64;
            a.n_masked += masked;
            if p.faces.len() > 1 {
                a.n_group_posts += 1;
                a.n_faces_in_groups += p.faces.len() as u64;
                a.n_masked_in_groups += masked;
            }
            if masked > 0 {
                a.n_masked_posts += 1;
                if p.like_count > 10_000 {
                    a.n_celebrity_masked_posts += 1;
                }
            }
            if p.like_count > 10_000 {
                a.n_celebrity_posts += 1;
            }
            if p.tags.contains("blm") {
                a.n_blm_posts += 1;
            }
        }
        a
    }

    #[test]
    fn matches_naive_counter_and_split_merge() {
        let cfg = StudyConfig::default();
        let date = d(3, 5);
        let posts = random_posts(10_000, date, 42);
        let whole = aggregate_day(date, &posts, &cfg);
        assert_eq!(whole, naive(&posts, date));
        let (a, rest) = posts.split_at(3_000);
        let (b, c) = rest.split_at(4_500);
        let parts = [a, b, c].map(|chunk| aggregate_day(date, chunk, &cfg));
        let merged = merge(&merge(&parts[0], &parts[1]).unwrap(), &parts[2]).unwrap();
        assert_eq!(merged, whole);
        assert!(whole.n_masked_in_groups <= whole.n_masked);
        assert!(whole.n_masked_in_groups <= whole.n_faces_in_groups);
    }

    #[test]
    fn shuffle_and_duplication_invariance() {
        let cfg = StudyConfig::default();
        let date = d(3, 5);
        let mut posts = random_posts(500, date, 1);
        let a = aggregate_day(date, &posts, &cfg);
        posts.reverse();
        assert_eq!(a, aggregate_day(date, &posts, &cfg));
        let doubled: Vec<_> = posts.iter().chain(&posts).cloned().collect();
        let b = aggregate_day(date, &doubled, &cfg);
        for kind in [MetricKind::PctMasked, MetricKind::PctGroup, MetricKind::PctMaskedInGroup] {
            assert_eq!(kind.percentage(&a).unwrap().value(), kind.percentage(&b).unwrap().value());
        }
    }

    #[test]
    fn monthly_and_weekly_buckets() {
        let range = StudyConfig::default().window;
        let days: Vec<DailyAggregate> = range
            .iter()
            .map(|date| {
                let mut a = DailyAggregate::zero(date);
                a.n_posts = 10;
                a.n_group_posts = 1;
                a
            })
            .collect();
        let months = bucket_series("x", &days, Period::Month, MetricKind::PctGroup, range.start);
        assert_eq!(months.points.len(), 4);
        assert_eq!(months.points[1].0, d(3, 1));

        let first_120 = &days[..120];
        let weeks = bucket_aggregates(first_120, Period::Week, range.start);
        assert_eq!(weeks.len(), 18);
        assert!(weeks[..17].iter().all(|w| w.n_posts == 70));
        assert_eq!(weeks[17].n_posts, 10);
        assert_eq!(weeks.iter().map(|w| w.n_posts).sum::<u64>(), 1200);

        let single = bucket_series("x", &days[..1], Period::Day, MetricKind::PctGroup, range.start);
        assert_eq!(single.points, vec![(range.start, Some(10.0))]);
    }

    #[test]
    fn celebrity_share_cases() {
        let mut a = DailyAggregate::zero(d(3, 1));
        assert_eq!(celebrity_share(&[a.clone()]), None);
        a.n_masked_posts = 10;
        assert_eq!(celebrity_share(&[a.clone()]), Some(0.0));
        a.n_celebrity_masked_posts = 10;
        assert_eq!(celebrity_share(&[a]), Some(100.0));
    }

    #[test]
    fn corpus_filters_and_parallel_matches_sequential() {
        let cfg = StudyConfig::default();
        let mut posts = Vec::new();
        for k in 0..130 {
            posts.extend(random_posts(20, d(2, 1) + Duration::days(k), k as u64));
        }
        for (i, p) in posts.iter_mut().enumerate() {
            p.post_id = format!("q{i}");
        }
        posts[0].city_id = "gotham".into();
        let seq = aggregate_posts(&posts, &cfg, Execution::Sequential);
        let par = aggregate_posts(&posts, &cfg, Execution::Parallel);
        assert_eq!(seq, par);
        assert_eq!(seq.counts.unknown_city, 1);
        // boston is not a protest city: June posts fall outside every window
        assert_eq!(seq.counts.out_of_window, 9 * 20);
        let daily = seq.daily("boston", cfg.window);
        assert_eq!(daily.len(), 121);
        let pooled: u64 = daily.iter().map(|a| a.n_posts).sum();
        assert_eq!(pooled + 1, 121 * 20);
        let blm: u64 = seq.daily_cohort("boston", cfg.window, Cohort::Blm).iter().map(|a| a.n_posts).sum();
        let non: u64 = seq.daily_cohort("boston", cfg.window, Cohort::NonBlm).iter().map(|a| a.n_posts).sum();
        assert_eq!(blm + non, pooled);
    }

    fn agg_strategy() -> impl Strategy<Value = DailyAggregate> {
        proptest::collection::vec(0u64..1000, 10).prop_map(|v| {
            let mut a = DailyAggregate::zero(d(4, 1));
            a.n_posts = v[0];
            a.n_faces = v[1];
            a.n_masked = v[2];
            a.n_group_posts = v[3];
            a.n_faces_in_groups = v[4];
            a.n_masked_in_groups = v[5];
            a.n_masked_posts = v[6];
            a.n_celebrity_posts = v[7];
            a.n_blm_posts = v[8];
            a.fit_hist.bins[(v[9] % 10) as usize] = v[9];
            a.fit_hist.total = v[9];
            a
        })
    }

    proptest! {
        #[test]
        fn merge_is_commutative_with_identity(a in agg_strategy(), b in agg_strategy()) {
            prop_assert_eq!(merge(&a, &b).unwrap(), merge(&b, &a).unwrap());
            prop_assert_eq!(merge(&a, &DailyAggregate::zero(a.date)).unwrap(), a);
        }

        #[test]
        fn bucketing_conserves_counts(posts in proptest::collection::vec(0u64..50, 1..200), period in prop_oneof![Just(Period::Day), Just(Period::Week), Just(Period::Month)]) {
            let days: Vec<DailyAggregate> = posts.iter().enumerate().map(|(k, &n)| {
                let mut a = DailyAggregate::zero(d(2, 1) + Duration::days(k as i64));
                a.n_posts = n;
                a
            }).collect();
            let buckets = bucket_aggregates(&days, period, d(2, 1));
            prop_assert_eq!(buckets.iter().map(|b| b.n_posts).sum::<u64>(), posts.iter().sum::<u64>());
        }
    }
}
