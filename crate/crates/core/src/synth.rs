//! Seeded synthetic corpora with planted effects.
//!
//! Every (city, day) draws from its own ChaCha8 stream seeded from
//! `(seed, city, day)`, so output is identical across platforms and thread
//! counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::fit_score;
use crate::geometry::{build_roi_raster, BitMask, FaceBox, LandmarkSet, Point, RoiRegion, TEMPLATE};
use crate::par::{self, Execution};
use crate::pnm::encode_pgm;
use crate::records::{CaseSeries, FaceRecord, MaskLabel, PolicyKind, PostRecord, StudyConfig};

pub const GENERATOR: &str = "chacha8";

const PLAIN_TAGS: [&str; 10] = [
    "food", "travel", "sunset", "family", "coffee", "friends", "art", "fitness", "weekend", "music",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CityParams {
    /// Probability a face is masked on the first study day.
    pub base_mask_rate: f64,
    /// Percentage-point change in mask rate per day.
    pub daily_trend_pp: f64,
    /// Step in mask rate from the mask-mandate date on.
    pub mandate_effect_pp: f64,
    /// Mask-rate swing across the full range of normalized cumulative cases.
    pub case_coupling_pp: f64,
    /// Days by which the mask rate trails the case series.
    pub case_lag: u32,
    /// Probability a post shows two or more faces.
    pub group_post_rate: f64,
    /// Step in group-post rate from the stay-at-home date on.
    pub stay_at_home_effect_pp: f64,
    /// Probability a post shows no face.
    pub no_face_rate: f64,
    /// Mean number of faces beyond two in a group post.
    pub extra_group_faces_mean: f64,
    /// Share of protest-tagged posts inside the protest window.
    pub blm_share: f64,
    pub blm_group_boost_pp: f64,
    pub blm_masked_in_group_boost_pp: f64,
    pub like_median: f64,
    pub like_log_sigma: f64,
    /// Weight of the high-fit component of the fit-score mixture.
    pub fit_high_weight: f64,
    pub fit_high_shape: (f64, f64),
    pub fit_low_shape: (f64, f64),
}

impl Default for CityParams {
    fn default() -> Self {
        CityParams {
            base_mask_rate: 0.12,
            daily_trend_pp: 0.05,
            mandate_effect_pp: 2.0,
            case_coupling_pp: 40.0,
            case_lag: 1,
            group_post_rate: 0.20,
            stay_at_home_effect_pp: -3.0,
            no_face_rate: 0.57,
            extra_group_faces_mean: 0.7,
            blm_share: 0.25,
            blm_group_boost_pp: 7.0,
            blm_masked_in_group_boost_pp: 9.0,
            like_median: 60.0,
            like_log_sigma: 1.8,
            fit_high_weight: 0.55,
            fit_high_shape: (6.0, 1.0),
            fit_low_shape: (2.0, 4.0),
        }
    }
}

impl CityParams {
    /// Same composition with every planted effect removed.
    pub fn null(&self) -> CityParams {
        CityParams {
            daily_trend_pp: 0.0,
            mandate_effect_pp: 0.0,
            case_coupling_pp: 0.0,
            stay_at_home_effect_pp: 0.0,
            blm_group_boost_pp: 0.0,
            blm_masked_in_group_boost_pp: 0.0,
            ..self.clone()
        }
    }

    fn validate(&self, city: &str) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("{city}.{field}: {why}")));
        for (field, v) in [
            ("base_mask_rate", self.base_mask_rate),
            ("group_post_rate", self.group_post_rate),
            ("no_face_rate", self.no_face_rate),
            ("blm_share", self.blm_share),
            ("fit_high_weight", self.fit_high_weight),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(field, format!("{v} outside [0, 1]"));
            }
        }
        if self.group_post_rate + self.no_face_rate > 1.0 {
            return bad("group_post_rate", "group_post_rate + no_face_rate exceeds 1".into());
        }
        for (field, v) in [
            ("daily_trend_pp", self.daily_trend_pp),
            ("mandate_effect_pp", self.mandate_effect_pp),
            ("case_coupling_pp", self.case_coupling_pp),
            ("stay_at_home_effect_pp", self.stay_at_home_effect_pp),
            ("blm_group_boost_pp", self.blm_group_boost_pp),
            ("blm_masked_in_group_boost_pp", self.blm_masked_in_group_boost_pp),
        ] {
            if !v.is_finite() || v.abs() > 100.0 {
                return bad(field, format!("{v} must be finite and within +-100"));
            }
        }
        if !(0.0..=20.0).contains(&self.extra_group_faces_mean) {
            return bad("extra_group_faces_mean", "must lie in [0, 20]".into());
        }
        if !(self.like_median > 0.0 && self.like_median.is_finite()) {
            return bad("like_median", "must be positive".into());
        }
        if !(0.0..=5.0).contains(&self.like_log_sigma) {
            return bad("like_log_sigma", "must lie in [0, 5]".into());
        }
        for (field, (a, b)) in [("fit_high_shape", self.fit_high_shape), ("fit_low_shape", self.fit_low_shape)] {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return bad(field, "beta shapes must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub seed: u64,
    /// Posts generated per city per day.
    pub posts_per_day: usize,
    /// Share of masked faces that receive a segmentation bitmap and fit score.
    pub fit_sample_rate: f64,
    /// Pose perturbation of the landmark template, 0 for the exact template.
    pub landmark_jitter: f64,
    /// Parameters for every city not listed in `cities`.
    pub defaults: CityParams,
    pub cities: BTreeMap<String, CityParams>,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            seed: 2020,
            posts_per_day: 500,
            fit_sample_rate: 0.02,
            landmark_jitter: 0.05,
            defaults: CityParams::default(),
            cities: BTreeMap::new(),
        }
    }
}

impl SynthParams {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn city(&self, id: &str) -> &CityParams {
        self.cities.get(id).unwrap_or(&self.defaults)
    }

    pub fn validate(&self, cfg: &StudyConfig) -> Result<()> {
        if self.posts_per_day > 1_000_000 {
            return Err(Error::Config("posts_per_day: at most 1000000".into()));
        }
        if !(0.0..=1.0).contains(&self.fit_sample_rate) {
            return Err(Error::Config("fit_sample_rate: outside [0, 1]".into()));
        }
        if !(0.0..=0.25).contains(&self.landmark_jitter) {
            return Err(Error::Config("landmark_jitter: must lie in [0, 0.25]".into()));
        }
        self.defaults.validate("defaults")?;
        let ids = cfg.city_ids();
        for (id, p) in &self.cities {
            if !ids.contains(id) {
                return Err(Error::Config(format!("cities: {id:?} is not a configured city")));
            }
            p.validate(id)?;
        }
        for c in &cfg.cities {
            let lag = self.city(&c.id).case_lag;
            if lag > cfg.lag_range.1 {
                return Err(Error::Config(format!(
                    "{}.case_lag: {lag} exceeds the configured maximum lag {}",
                    c.id, cfg.lag_range.1
                )));
            }
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Seed of the stream for one (city, day); day is an offset from the window start.
pub fn substream_seed(seed: u64, city: &str, day: i64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(city)) ^ splitmix64(day as u64))
}

const CASE_STREAM: i64 = i64::MIN;

/// Template landmarks under a random affine pose inside a random face box.
pub fn generate_landmarks<R: Rng>(rng: &mut R, jitter: f64) -> LandmarkSet {
    let width: f64 = rng.gen_range(48.0..128.0);
    let height = width * rng.gen_range(0.95..1.15);
    let face_box = FaceBox {
        x: rng.gen_range(0.0..1920.0 - width).round(),
        y: rng.gen_range(0.0..1080.0 - height).round(),
        width: width.round(),
        height: height.round(),
    };
    if jitter == 0.0 {
        return LandmarkSet::template(face_box).expect("template is valid");
    }
    let mut u = || rng.gen_range(-1.0..1.0) * jitter;
    let theta = 0.5 * u();
    let shear = 0.5 * u();
    let (sx, sy) = (1.0 + u(), 1.0 + u());
    let (sin, cos) = theta.sin_cos();
    let noise: Vec<(f64, f64)> = (0..TEMPLATE.len()).map(|_| (0.02 * u(), 0.02 * u())).collect();
    let points = TEMPLATE
        .iter()
        .zip(noise)
        .map(|(&(x, y), (nx, ny))| {
            let (cx, cy) = (x - 0.5, y - 0.6);
            let (ax, ay) = (sx * (cx + shear * cy), sy * cy);
            let (rx, ry) = (cos * ax - sin * ay + 0.5 + nx, sin * ax + cos * ay + 0.5 + ny);
            let round = |v: f64| (v * 10.0).round() / 10.0;
            Point::new(
                round((face_box.x + rx * face_box.width).max(0.0)),
                round((face_box.y + ry * face_box.height).max(0.0)),
            )
        })
        .collect();
    LandmarkSet::with_derived_box(points).expect("bounded jitter keeps the template valid")
}

/// Prediction bitmap covering whole rows from the bottom of the face box
/// up, with its coverage of the nose-mouth region as close to `target` as
/// the rows allow.
pub fn synth_prediction(landmarks: &LandmarkSet, target: f64) -> Result<(BitMask, BitMask)> {
    let b = landmarks.face_box();
    let (w, h) = (b.width.round().max(1.0) as usize, b.height.round().max(1.0) as usize);
    let roi = build_roi_raster(landmarks, RoiRegion::NoseMouth, w, h)?;
    let row_counts: Vec<usize> = (0..h).map(|r| (0..w).filter(|&c| roi.get(r, c)).count()).collect();
    let total = roi.count_ones() as f64;
    let goal = target / 100.0 * total;
    let mut best = (h, f64::INFINITY);
    let mut covered = 0usize;
    for r0 in (0..=h).rev() {
        if r0 < h {
            covered += row_counts[r0];
        }
        let miss = (covered as f64 - goal).abs();
        if miss < best.1 {
            best = (r0, miss);
        }
    }
    let pred = BitMask::from_fn(w, h, |row, _| row >= best.0)?;
    Ok((pred, roi))
}

#[derive(Debug, Clone)]
pub struct SynthPost {
    pub record: PostRecord,
    /// (relative path, bitmap) for each face given a segmentation mask.
    pub bitmaps: Vec<(String, BitMask)>,
}

/// Resolved per-city generation plan.
#[derive(Debug, Clone)]
pub struct CityPlan {
    pub city_id: String,
    pub utc_offset_minutes: i32,
    pub params: CityParams,
    pub days: Vec<NaiveDate>,
    pub in_blm: BTreeSet<NaiveDate>,
    pub mask_mandate: Option<NaiveDate>,
    pub stay_at_home: Option<NaiveDate>,
    pub cases: CaseSeries,
    case_norm: BTreeMap<NaiveDate, f64>,
}

#[derive(Debug, Clone, Copy)]
struct DayRates {
    mask: f64,
    group: f64,
    clamped: bool,
}

impl CityPlan {
    fn rates(&self, start: NaiveDate, date: NaiveDate) -> DayRates {
        let p = &self.params;
        let t = (date - start).num_days() as f64;
        let lagged = date - Duration::days(p.case_lag as i64);
        let norm = self
            .case_norm
            .range(..=lagged)
            .next_back()
            .map_or(0.0, |(_, v)| *v);
        let mask = p.base_mask_rate
            + (p.daily_trend_pp * t
                + self.mask_mandate.filter(|&m| date >= m).map_or(0.0, |_| p.mandate_effect_pp)
                + p.case_coupling_pp * norm)
                / 100.0;
        let group = p.group_post_rate
            + self.stay_at_home.filter(|&s| date >= s).map_or(0.0, |_| p.stay_at_home_effect_pp) / 100.0;
        let max_group = 1.0 - p.no_face_rate;
        let clamped = !(0.0..=1.0).contains(&mask) || !(0.0..=max_group).contains(&group);
        DayRates {
            mask: mask.clamp(0.0, 1.0),
            group: group.clamp(0.0, max_group),
            clamped,
        }
    }
}

/// Cumulative cases dominated by irregular outbreak jumps over a slow background.
fn synth_cases(seed: u64, city: &str, first: NaiveDate, last: NaiveDate) -> Result<CaseSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, city, CASE_STREAM));
    let mut total: u64 = rng.gen_range(20..80);
    let mut next_burst = rng.gen_range(3..10);
    let mut entries = Vec::new();
    let mut k = 0i64;
    let mut date = first;
    while date <= last {
        total += 5 + (k / 10) as u64 + rng.gen_range(0..5);
        if k == next_burst {
            total += (1500.0 * rng.gen_range(0.6..1.4)) as u64;
            next_burst += rng.gen_range(18..32);
        }
        entries.push((date, total));
        date += Duration::days(1);
        k += 1;
    }
    CaseSeries::new(city, entries)
}

pub fn plan_corpus(params: &SynthParams, cfg: &StudyConfig) -> Result<Vec<CityPlan>> {
    params.validate(cfg)?;
    let event_date = |city: &str, kind| {
        cfg.policy_events
            .iter()
            .find(|e| e.city_id == city && e.kind == kind)
            .map(|e| e.effective_date)
    };
    cfg.cities
        .iter()
        .map(|c| {
            let mut days: BTreeSet<NaiveDate> = cfg.window.iter().collect();
            let mut in_blm = BTreeSet::new();
            if cfg.blm_cities.contains(&c.id) {
                in_blm.extend(cfg.blm_window.iter());
                days.extend(cfg.blm_window.iter());
            }
            let first_case = cfg.window.start - Duration::days(cfg.lag_range.1 as i64);
            let last = *days.last().expect("window is non-empty");
            let cases = synth_cases(params.seed, &c.id, first_case, last)?;
            let lo = cases.entries()[0].1 as f64;
            let hi = cases.get(cfg.window.end).expect("case series covers the window") as f64;
            let case_norm = cases.entries().iter().map(|&(d, v)| (d, (v as f64 - lo) / (hi - lo).max(1.0))).collect();
            Ok(CityPlan {
                city_id: c.id.clone(),
                utc_offset_minutes: c.utc_offset_minutes,
                params: params.city(&c.id).clone(),
                days: days.into_iter().collect(),
                in_blm,
                mask_mandate: event_date(&c.id, PolicyKind::MaskMandate),
                stay_at_home: event_date(&c.id, PolicyKind::StayAtHome),
                cases,
                case_norm,
            })
        })
        .collect()
}

fn sample_faces<R: Rng>(rng: &mut R, p: &CityParams, group: f64) -> usize {
    let u: f64 = rng.gen();
    if u < p.no_face_rate {
        0
    } else if u < p.no_face_rate + group {
        let cont = p.extra_group_faces_mean / (1.0 + p.extra_group_faces_mean);
        let mut n = 2;
        while n < 20 && rng.gen_bool(cont) {
            n += 1;
        }
        n
    } else {
        1
    }
}

/// All posts of one city on one local calendar day.
pub fn generate_day(
    params: &SynthParams,
    cfg: &StudyConfig,
    plan: &CityPlan,
    date: NaiveDate,
) -> Result<(Vec<SynthPost>, bool)> {
    let day_index = (date - cfg.window.start).num_days();
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(params.seed, &plan.city_id, day_index));
    let p = &plan.params;
    let rates = plan.rates(cfg.window.start, date);
    let blm_day = plan.in_blm.contains(&date);
    let blm_tags: Vec<&String> = cfg.blm_tags.iter().collect();
    let high = Beta::new(p.fit_high_shape.0, p.fit_high_shape.1).map_err(|e| Error::Config(e.to_string()))?;
    let low = Beta::new(p.fit_low_shape.0, p.fit_low_shape.1).map_err(|e| Error::Config(e.to_string()))?;
    let midnight = Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"))
        - Duration::minutes(plan.utc_offset_minutes as i64);

    let mut posts = Vec::with_capacity(params.posts_per_day);
    for i in 0..params.posts_per_day {
        let post_id = format!("{}-{}-{i:06}", plan.city_id, date.format("%Y%m%d"));
        let is_blm = blm_day && !blm_tags.is_empty() && rng.gen_bool(p.blm_share);
        let mut tags = BTreeSet::new();
        if is_blm {
            tags.insert(blm_tags[rng.gen_range(0..blm_tags.len())].clone());
        }
        let n_plain = rng.gen_range(0..3);
        for t in PLAIN_TAGS.choose_multiple(&mut rng, n_plain) {
            tags.insert(t.to_string());
        }
        let boost = if is_blm { p.blm_group_boost_pp / 100.0 } else { 0.0 };
        let group = (rates.group + boost).clamp(0.0, 1.0 - p.no_face_rate);
        let n_faces = sample_faces(&mut rng, p, group);
        let mask_rate = if is_blm && n_faces >= 2 {
            (rates.mask + p.blm_masked_in_group_boost_pp / 100.0).clamp(0.0, 1.0)
        } else {
            rates.mask
        };
        let mut faces = Vec::with_capacity(n_faces);
        let mut bitmaps = Vec::new();
        for k in 0..n_faces {
            let masked = rng.gen_bool(mask_rate);
            let landmarks = generate_landmarks(&mut rng, params.landmark_jitter);
            let mask_probability: f64 = if masked { rng.gen_range(0.5..=1.0) } else { rng.gen_range(0.0..0.5) };
            let (mut seg_mask, mut score) = (None, None);
            if masked && rng.gen_bool(params.fit_sample_rate) {
                let dist = if rng.gen_bool(p.fit_high_weight) { &high } else { &low };
                let target = 100.0 * dist.sample(&mut rng);
                let (pred, roi) = synth_prediction(&landmarks, target)?;
                let path = format!("masks/{post_id}_{k}.pgm");
                score = Some(fit_score(&pred, &roi)?);
                seg_mask = Some(path.clone());
                bitmaps.push((path, pred));
            }
            faces.push(FaceRecord {
                landmarks,
                mask_label: if masked { MaskLabel::Masked } else { MaskLabel::Unmasked },
                mask_probability: (mask_probability * 1e4).round() / 1e4,
                seg_mask,
                fit_score: score,
            });
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        let like_count = (p.like_median * (p.like_log_sigma * z).exp()).round() as u64;
        let timestamp = midnight + Duration::seconds(rng.gen_range(0..86_400));
        posts.push(SynthPost {
            record: PostRecord {
                post_id,
                city_id: plan.city_id.clone(),
                timestamp,
                tags,
                like_count,
                faces,
            },
            bitmaps,
        });
    }
    Ok((posts, rates.clamped))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CityManifest {
    pub city_id: String,
    pub params: CityParams,
    pub mask_mandate_date: Option<NaiveDate>,
    pub stay_at_home_date: Option<NaiveDate>,
    pub days: usize,
    /// Days on which a planted rate left its valid range and was clamped.
    pub clamped_days: usize,
    pub posts: u64,
    pub faces: u64,
    pub masked_faces: u64,
    pub group_posts: u64,
    pub blm_posts: u64,
    pub bitmaps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub seed: u64,
    pub posts_per_day: usize,
    pub fit_sample_rate: f64,
    pub landmark_jitter: f64,
    pub total_posts: u64,
    pub cities: Vec<CityManifest>,
}

impl Manifest {
    fn new(params: &SynthParams, plans: &[CityPlan]) -> Self {
        Manifest {
            generator: GENERATOR.into(),
            seed: params.seed,
            posts_per_day: params.posts_per_day,
            fit_sample_rate: params.fit_sample_rate,
            landmark_jitter: params.landmark_jitter,
            total_posts: 0,
            cities: plans
                .iter()
                .map(|p| CityManifest {
                    city_id: p.city_id.clone(),
                    params: p.params.clone(),
                    mask_mandate_date: p.mask_mandate,
                    stay_at_home_date: p.stay_at_home,
                    days: p.days.len(),
                    ..Default::default()
                })
                .collect(),
        }
    }

    fn record(&mut self, city: usize, posts: &[SynthPost], clamped: bool, blm_tags: &BTreeSet<String>) {
        let m = &mut self.cities[city];
        m.clamped_days += clamped as usize;
        for p in posts {
            m.posts += 1;
            m.faces += p.record.faces.len() as u64;
            m.masked_faces += p.record.n_masked() as u64;
            m.group_posts += p.record.is_group() as u64;
            m.blm_posts += crate::records::classify_blm(&p.record.tags, blm_tags) as u64;
            m.bitmaps += p.bitmaps.len() as u64;
        }
        self.total_posts += posts.len() as u64;
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub posts: Vec<PostRecord>,
    pub cases: BTreeMap<String, CaseSeries>,
    pub manifest: Manifest,
}

const DAYS_PER_BATCH: usize = 16;

/// Generates batches of days in parallel and hands them to `sink` in
/// (city, date) order.
fn drive<F>(params: &SynthParams, cfg: &StudyConfig, exec: Execution, mut sink: F) -> Result<(Vec<CityPlan>, Manifest)>
where
    F: FnMut(Vec<SynthPost>) -> Result<()>,
{
    let plans = plan_corpus(params, cfg)?;
    let mut manifest = Manifest::new(params, &plans);
    for (ci, plan) in plans.iter().enumerate() {
        for chunk in plan.days.chunks(DAYS_PER_BATCH) {
            let batch = par::map(exec, chunk, |&date| generate_day(params, cfg, plan, date));
            for day in batch {
                let (posts, clamped) = day?;
                manifest.record(ci, &posts, clamped, &cfg.blm_tags);
                sink(posts)?;
            }
        }
    }
    Ok((plans, manifest))
}

/// In-memory corpus; segmentation bitmaps are discarded after scoring.
pub fn generate_corpus(params: &SynthParams, cfg: &StudyConfig, exec: Execution) -> Result<SynthCorpus> {
    let mut posts = Vec::new();
    let (plans, manifest) = drive(params, cfg, exec, |batch| {
        posts.extend(batch.into_iter().map(|p| p.record));
        Ok(())
    })?;
    let cases = plans.into_iter().map(|p| (p.city_id, p.cases)).collect();
    Ok(SynthCorpus { posts, cases, manifest })
}

pub fn cases_csv(cases: &BTreeMap<String, CaseSeries>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "city_id", "cumulative_cases"])?;
    for (city, series) in cases {
        for (date, total) in series.entries() {
            w.write_record([date.to_string(), city.clone(), total.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| Error::InvalidValue(e.to_string()))
}

/// Streams a corpus to `out`: `posts.jsonl`, `cases.csv`, `config.json`,
/// `manifest.json` and `masks/*.pgm`.
pub fn write_corpus(params: &SynthParams, cfg: &StudyConfig, out: &Path, exec: Execution) -> Result<Manifest> {
    params.validate(cfg)?;
    let masks = out.join("masks");
    fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;
    let posts_path = out.join("posts.jsonl");
    let file = fs::File::create(&posts_path).map_err(|e| Error::io(&posts_path, e))?;
    let mut posts_out = BufWriter::with_capacity(1 << 20, file);
    let (plans, manifest) = drive(params, cfg, exec, |batch| {
        for post in batch {
            posts_out
                .write_all(post.record.to_json_line().as_bytes())
                .and_then(|_| posts_out.write_all(b"\n"))
                .map_err(|e| Error::io(&posts_path, e))?;
            for (rel, bitmap) in post.bitmaps {
                let p = out.join(rel);
                fs::write(&p, encode_pgm(&bitmap)).map_err(|e| Error::io(&p, e))?;
            }
        }
        Ok(())
    })?;
    posts_out.flush().map_err(|e| Error::io(&posts_path, e))?;
    let cases: BTreeMap<String, CaseSeries> = plans.into_iter().map(|p| (p.city_id, p.cases)).collect();
    let write = |name: &str, bytes: Vec<u8>| {
        let p = out.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write("cases.csv", cases_csv(&cases)?)?;
    write("config.json", serde_json::to_vec_pretty(cfg)?)?;
    write("manifest.json", serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}
