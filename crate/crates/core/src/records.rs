//! Input data model: posts with detected faces, case series, policy events
//! and the study configuration, plus their parsers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fit::FitScore;
use crate::geometry::{FaceBox, LandmarkSet, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskLabel {
    Masked,
    Unmasked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFace", into = "RawFace")]
pub struct FaceRecord {
    pub landmarks: LandmarkSet,
    pub mask_label: MaskLabel,
    pub mask_probability: f64,
    pub seg_mask: Option<String>,
    pub fit_score: Option<FitScore>,
}

impl FaceRecord {
    pub fn is_masked(&self) -> bool {
        self.mask_label == MaskLabel::Masked
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_probability) {
            return Err(Error::Record(format!(
                "mask_probability {} outside [0, 1]",
                self.mask_probability
            )));
        }
        if self.fit_score.is_some() && (self.seg_mask.is_none() || !self.is_masked()) {
            return Err(Error::Record(
                "fit_score requires a seg_mask and mask_label \"masked\"".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawFace {
    landmarks: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    face_box: Option<FaceBox>,
    mask_label: MaskLabel,
    mask_probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seg_mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit_score: Option<FitScore>,
}

impl TryFrom<RawFace> for FaceRecord {
    type Error = Error;

    fn try_from(raw: RawFace) -> Result<Self> {
        let landmarks = match raw.face_box {
            Some(b) => LandmarkSet::new(raw.landmarks, b)?,
            None => LandmarkSet::with_derived_box(raw.landmarks)?,
        };
        let face = FaceRecord {
            landmarks,
            mask_label: raw.mask_label,
            mask_probability: raw.mask_probability,
            seg_mask: raw.seg_mask,
            fit_score: raw.fit_score,
        };
        face.validate()?;
        Ok(face)
    }
}

impl From<FaceRecord> for RawFace {
    fn from(f: FaceRecord) -> Self {
        let points = f.landmarks.points().to_vec();
        let face_box = f.landmarks.face_box();
        let derived = FaceBox::around(&points);
        RawFace {
            face_box: (face_box != derived).then_some(face_box),
            landmarks: points,
            mask_label: f.mask_label,
            mask_probability: f.mask_probability,
            seg_mask: f.seg_mask,
            fit_score: f.fit_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub city_id: String,
    #[serde(serialize_with = "ser_timestamp", deserialize_with = "de_timestamp")]
    pub timestamp: DateTime<Utc>,
    #[serde(deserialize_with = "de_tags")]
    pub tags: BTreeSet<String>,
    pub like_count: u64,
    pub faces: Vec<FaceRecord>,
}

impl PostRecord {
    pub fn n_masked(&self) -> usize {
        self.faces.iter().filter(|f| f.is_masked()).count()
    }

    pub fn is_group(&self) -> bool {
        self.faces.len() >= 2
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("post records always serialize")
    }
}

fn ser_timestamp<S: Serializer>(ts: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::AutoSi, true))
}

fn de_timestamp<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
    let s = String::deserialize(d)?;
    parse_timestamp(&s).map_err(serde::de::Error::custom)
}

/// ISO-8601 date-time; a missing offset is read as UTC.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::<FixedOffset>::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    Err(Error::Record(format!("invalid timestamp {s:?}")))
}

fn de_tags<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeSet<String>, D::Error> {
    let tags = Vec::<String>::deserialize(d)?;
    Ok(tags.into_iter().map(|t| t.trim().to_lowercase()).collect())
}

/// A positioned per-line parse failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Default)]
pub struct ParsedPosts {
    pub records: Vec<PostRecord>,
    pub errors: Vec<LineError>,
}

/// Parses one line of the posts format.
pub fn parse_post_line(line: &[u8]) -> std::result::Result<PostRecord, String> {
    let text = std::str::from_utf8(line).map_err(|e| format!("invalid UTF-8: {e}"))?;
    let text = text.trim_end_matches(['\r', '\n']);
    if text.trim().is_empty() {
        return Err("empty line".into());
    }
    serde_json::from_str(text).map_err(|e| e.to_string())
}

/// Parses a whole line-delimited stream. Bad lines become [`LineError`]s and
/// never stop the stream; a read failure is reported against the line being read.
pub fn parse_posts<R: BufRead>(mut reader: R) -> ParsedPosts {
    let mut out = ParsedPosts::default();
    let mut seen = HashSet::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        line_no += 1;
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => break,
            Ok(_) => match parse_post_line(&buf) {
                Ok(r) => {
                    if seen.insert(r.post_id.clone()) {
                        out.records.push(r);
                    } else {
                        out.errors.push(LineError {
                            line: line_no,
                            message: format!("duplicate post_id {:?}", r.post_id),
                        });
                    }
                }
                Err(message) => out.errors.push(LineError {
                    line: line_no,
                    message,
                }),
            },
            Err(e) => {
                out.errors.push(LineError {
                    line: line_no,
                    message: format!("read error: {e}"),
                });
                break;
            }
        }
    }
    out
}

pub fn classify_blm(tags: &BTreeSet<String>, blm_tags: &BTreeSet<String>) -> bool {
    tags.iter().any(|t| blm_tags.contains(t))
}

pub fn is_celebrity(post: &PostRecord, threshold: u64) -> bool {
    post.like_count > threshold
}

/// Daily cumulative case counts for one city, gap-free.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSeries {
    pub city_id: String,
    entries: Vec<(NaiveDate, u64)>,
}

impl CaseSeries {
    pub fn new(city_id: impl Into<String>, mut entries: Vec<(NaiveDate, u64)>) -> Result<Self> {
        let city_id = city_id.into();
        entries.sort_by_key(|e| e.0);
        for w in entries.windows(2) {
            let ((d0, c0), (d1, c1)) = (w[0], w[1]);
            if d1 == d0 {
                return Err(Error::CaseDuplicate {
                    city: city_id,
                    date: d1,
                });
            }
            let next = d0 + Duration::days(1);
            if d1 != next {
                return Err(Error::CaseGap {
                    city: city_id,
                    missing: next,
                });
            }
            if c1 < c0 {
                return Err(Error::CaseDecrease {
                    city: city_id,
                    date: d1,
                    prev: c0,
                    next: c1,
                });
            }
        }
        Ok(CaseSeries { city_id, entries })
    }

    pub fn entries(&self) -> &[(NaiveDate, u64)] {
        &self.entries
    }

    pub fn get(&self, date: NaiveDate) -> Option<u64> {
        let first = self.entries.first()?.0;
        let offset = (date - first).num_days();
        if offset < 0 {
            return None;
        }
        self.entries.get(offset as usize).map(|e| e.1)
    }
}

#[derive(Deserialize)]
struct CaseRow {
    date: NaiveDate,
    city_id: String,
    cumulative_cases: u64,
}

/// Reads `date,city_id,cumulative_cases` rows into one series per city.
pub fn parse_case_series<R: std::io::Read>(
    reader: R,
    known_cities: Option<&BTreeSet<String>>,
) -> Result<BTreeMap<String, CaseSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["date", "city_id", "cumulative_cases"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Record(format!(
            "case file header must be {:?}, got {:?}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows: BTreeMap<String, Vec<(NaiveDate, u64)>> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: CaseRow = row?;
        if let Some(known) = known_cities {
            if !known.contains(&row.city_id) {
                return Err(Error::UnknownCity(row.city_id));
            }
        }
        rows.entry(row.city_id)
            .or_default()
            .push((row.date, row.cumulative_cases));
    }
    rows.into_iter()
        .map(|(city, entries)| Ok((city.clone(), CaseSeries::new(city, entries)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    StayAtHome,
    MaskMandate,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::StayAtHome => "stay_at_home",
            PolicyKind::MaskMandate => "mask_mandate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEvent {
    pub city_id: String,
    pub kind: PolicyKind,
    pub effective_date: NaiveDate,
}

/// Inclusive calendar-date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn days(&self) -> usize {
        ((self.end - self.start).num_days() + 1).max(0) as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        (0..self.days() as i64).map(move |k| start + Duration::days(k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityConfig {
    pub id: String,
    pub name: String,
    /// Offset applied to UTC timestamps before taking the calendar date.
    #[serde(default)]
    pub utc_offset_minutes: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub cities: Vec<CityConfig>,
    pub window: DateRange,
    pub blm_window: DateRange,
    pub blm_cities: Vec<String>,
    pub policy_events: Vec<PolicyEvent>,
    pub blm_tags: BTreeSet<String>,
    pub celebrity_like_threshold: u64,
    pub alpha: f64,
    pub lag_range: (u32, u32),
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid literal date")
}

impl Default for StudyConfig {
    fn default() -> Self {
        let cities = [
            ("new_york_city", "New York City"),
            ("dallas", "Dallas"),
            ("seattle", "Seattle"),
            ("new_orleans", "New Orleans"),
            ("boston", "Boston"),
            ("minneapolis", "Minneapolis"),
        ]
        .into_iter()
        .map(|(id, name)| CityConfig {
            id: id.into(),
            name: name.into(),
            utc_offset_minutes: 0,
        })
        .collect();
        let event = |city: &str, kind, d| PolicyEvent {
            city_id: city.into(),
            kind,
            effective_date: d,
        };
        use PolicyKind::*;
        StudyConfig {
            cities,
            window: DateRange::new(date(2020, 2, 1), date(2020, 5, 31)),
            blm_window: DateRange::new(date(2020, 5, 25), date(2020, 7, 15)),
            blm_cities: vec!["new_york_city".into(), "minneapolis".into()],
            policy_events: vec![
                event("boston", StayAtHome, date(2020, 3, 23)),
                event("minneapolis", StayAtHome, date(2020, 3, 27)),
                event("new_orleans", StayAtHome, date(2020, 3, 20)),
                event("dallas", StayAtHome, date(2020, 3, 23)),
                event("seattle", StayAtHome, date(2020, 3, 23)),
                event("new_york_city", StayAtHome, date(2020, 3, 20)),
                event("boston", MaskMandate, date(2020, 5, 6)),
                event("minneapolis", MaskMandate, date(2020, 4, 30)),
                event("new_york_city", MaskMandate, date(2020, 4, 15)),
            ],
            blm_tags: [
                "blm",
                "blacklivesmatter",
                "georgefloyd",
                "justiceforgeorgefloyd",
                "policebrutality",
                "protest",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            celebrity_like_threshold: 10_000,
            alpha: 0.01,
            lag_range: (0, 7),
        }
    }
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: StudyConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.blm_tags = cfg.blm_tags.iter().map(|t| t.trim().to_lowercase()).collect();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.window.start >= self.window.end {
            return bad(format!("window start {} must precede end {}", self.window.start, self.window.end));
        }
        if self.blm_window.start > self.blm_window.end {
            return bad("blm_window start after end".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        let (lo, hi) = self.lag_range;
        if lo > hi || hi > 30 {
            return bad(format!("lag_range ({lo}, {hi}) must satisfy min <= max <= 30"));
        }
        let ids = self.city_ids();
        if ids.len() != self.cities.len() {
            return bad("duplicate city id".into());
        }
        for c in &self.blm_cities {
            if !ids.contains(c) {
                return bad(format!("blm_cities: unknown city {c:?}"));
            }
        }
        let latest = self.window.end + Duration::days(1);
        for e in &self.policy_events {
            if !ids.contains(&e.city_id) {
                return bad(format!("policy event for unknown city {:?}", e.city_id));
            }
            if e.effective_date < self.window.start || e.effective_date > latest {
                return bad(format!(
                    "{} {} on {} lies outside the study window",
                    e.city_id,
                    e.kind.as_str(),
                    e.effective_date
                ));
            }
        }
        Ok(())
    }

    pub fn city_ids(&self) -> BTreeSet<String> {
        self.cities.iter().map(|c| c.id.clone()).collect()
    }

    pub fn city(&self, id: &str) -> Option<&CityConfig> {
        self.cities.iter().find(|c| c.id == id)
    }

    /// Calendar date of a timestamp in the city's configured offset.
    pub fn local_date(&self, city_id: &str, ts: DateTime<Utc>) -> NaiveDate {
        let offset = self.city(city_id).map_or(0, |c| c.utc_offset_minutes);
        (ts + Duration::minutes(offset as i64)).date_naive()
    }

    pub fn events(&self, kind: PolicyKind) -> impl Iterator<Item = &PolicyEvent> {
        self.policy_events.iter().filter(move |e| e.kind == kind)
    }
}
