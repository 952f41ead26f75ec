//! Report tables and their CSV / aligned-text renderings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::aggregate::{bucket_aggregates, percentage, total, CorpusAggregates, DailyAggregate, MetricKind, Period};
use crate::error::{Error, Result};
use crate::fit::{share_above, FitHistogram, FIT_BINS};
use crate::ingest::{InputDigest, InputError, IngestSummary};
use crate::par::Execution;
use crate::records::{CaseSeries, DateRange, PolicyKind, StudyConfig};
use crate::studies::{blm_study, correlation_study, policy_study, trend_study, StudyRow};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Table {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::InvalidValue(e.to_string()))
    }

    /// Space-aligned columns; numbers right-aligned, text left-aligned.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for r in &self.rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let numeric: Vec<bool> = (0..self.columns.len())
            .map(|i| !self.rows.is_empty() && self.rows.iter().all(|r| looks_numeric(&r[i])))
            .collect();
        let line = |cells: Vec<&str>| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if numeric[i] {
                        format!("{c:>w$}", w = widths[i])
                    } else {
                        format!("{c:<w$}", w = widths[i])
                    }
                })
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(self.columns.clone());
        out += &line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
        for r in &self.rows {
            out += &line(r.iter().map(String::as_str).collect());
        }
        if self.rows.is_empty() {
            out += "(no rows)\n";
        }
        out
    }
}

fn looks_numeric(s: &str) -> bool {
    s == "NA" || s.parse::<f64>().is_ok()
}

pub fn fmt_fixed(x: f64, decimals: usize) -> String {
    if x.is_finite() {
        format!("{x:.decimals$}")
    } else {
        "NA".into()
    }
}

pub fn fmt_p(p: f64) -> String {
    if p == 0.0 {
        "0".into()
    } else if p < 1e-4 {
        format!("{p:.3e}")
    } else {
        format!("{p:.6}")
    }
}

fn pct(n: u64, d: u64) -> String {
    percentage(n, d).map_or_else(|| "NA".into(), |p| p.to_string())
}

fn na_row(prefix: Vec<String>, width: usize, note: &str) -> Vec<String> {
    let mut r = prefix;
    while r.len() < width - 1 {
        r.push("NA".into());
    }
    r.push(note.to_string());
    r
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigInfo {
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ConfigInfo,
    pub inputs: Vec<InputDigest>,
    pub ingest: IngestSummary,
    pub accepted_posts: u64,
    pub unknown_city_posts: u64,
    pub out_of_window_posts: u64,
    pub tables: Vec<&'static str>,
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub tables: Vec<Table>,
    pub metadata: Metadata,
}

impl ReportBundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub text: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats { csv: true, text: true }
    }
}

pub struct ReportInputs<'a> {
    pub cfg: &'a StudyConfig,
    pub corpus: &'a CorpusAggregates,
    pub cases: &'a BTreeMap<String, CaseSeries>,
    pub config: ConfigInfo,
    pub inputs: Vec<InputDigest>,
    pub errors: &'a [InputError],
    pub ingest: IngestSummary,
}

pub fn build_bundle(r: ReportInputs<'_>, exec: Execution) -> Result<ReportBundle> {
    let (cfg, corpus) = (r.cfg, r.corpus);
    let window = cfg.window;
    let daily: BTreeMap<&str, Vec<DailyAggregate>> =
        cfg.cities.iter().map(|c| (c.id.as_str(), corpus.daily(&c.id, window))).collect();
    let all_days = |city: &str, range: DateRange| total(&corpus.daily(city, range));

    let mut tables = Vec::new();

    let mut t = Table::new(
        "city_summary",
        &["city_id", "posts", "faces", "masked_faces", "pct_masked", "group_posts", "pct_group"],
    );
    let mut sum = DailyAggregate::zero(window.start);
    for c in &cfg.cities {
        let a = total(&daily[c.id.as_str()]).expect("window has days");
        t.push(summary_row(&c.id, &a));
        sum = crate::aggregate::merge(&sum, &DailyAggregate { date: window.start, ..a })?;
    }
    t.push(summary_row("total", &sum));
    tables.push(t);

    let mut t = Table::new("monthly_masked", &["city_id", "month", "masked_faces", "faces", "pct_masked"]);
    for c in &cfg.cities {
        for m in bucket_aggregates(&daily[c.id.as_str()], Period::Month, window.start) {
            t.push(vec![
                c.id.clone(),
                m.date.format("%Y-%m").to_string(),
                m.n_masked.to_string(),
                m.n_faces.to_string(),
                pct(m.n_masked, m.n_faces),
            ]);
        }
    }
    tables.push(t);

    let mut t = Table::new("weekly_group", &["scope", "week_start", "group_posts", "posts", "pct_group"]);
    let pooled = corpus.pooled_daily(window);
    let scopes = std::iter::once(("all", &pooled)).chain(cfg.cities.iter().map(|c| (c.id.as_str(), &daily[c.id.as_str()])));
    for (scope, days) in scopes {
        for w in bucket_aggregates(days, Period::Week, window.start) {
            t.push(vec![
                scope.to_string(),
                w.date.to_string(),
                w.n_group_posts.to_string(),
                w.n_posts.to_string(),
                pct(w.n_group_posts, w.n_posts),
            ]);
        }
    }
    tables.push(t);

    let cols = [
        "city_id", "policy", "metric", "effective_date", "days_before", "days_after", "n_before", "n_after",
        "mean_before", "sd_before", "mean_after", "sd_after", "t", "df", "p", "significant", "note",
    ];
    let mut t = Table::new("policy_effects", &cols);
    for kind in [PolicyKind::StayAtHome, PolicyKind::MaskMandate] {
        let events: Vec<_> = cfg.events(kind).collect();
        for (e, row) in events.iter().zip(policy_study(corpus, cfg, kind, exec)) {
            let head = vec![
                row.city_id.clone(),
                kind.as_str().to_string(),
                crate::studies::policy_metric(kind).as_str().to_string(),
                e.effective_date.to_string(),
            ];
            t.push(match row.outcome {
                Ok(p) => {
                    let w = p.welch;
                    let mut r = head;
                    r.extend([
                        p.days_before.to_string(),
                        p.days_after.to_string(),
                        w.n_before.to_string(),
                        w.n_after.to_string(),
                        fmt_fixed(w.mean_before, 2),
                        fmt_fixed(w.sd_before, 2),
                        fmt_fixed(w.mean_after, 2),
                        fmt_fixed(w.sd_after, 2),
                        fmt_fixed(w.t, 4),
                        fmt_fixed(w.df, 2),
                        fmt_p(w.p),
                        p.significant.to_string(),
                        String::new(),
                    ]);
                    r
                }
                Err(msg) => na_row(head, cols.len(), &msg),
            });
        }
    }
    tables.push(t);

    let cols = ["city_id", "n", "s", "variance", "z", "p", "significant", "note"];
    let mut t = Table::new("trends", &cols);
    for row in trend_study(corpus, cfg, exec) {
        t.push(match row.outcome {
            Ok(m) => vec![
                row.city_id,
                m.n.to_string(),
                m.s_statistic.to_string(),
                fmt_fixed(m.variance, 2),
                fmt_fixed(m.z, 4),
                fmt_p(m.p),
                (m.p < cfg.alpha).to_string(),
                String::new(),
            ],
            Err(msg) => na_row(vec![row.city_id], cols.len(), &msg),
        });
    }
    tables.push(t);

    let cols = ["city_id", "method", "max_lag", "r", "n", "p", "note"];
    let mut t = Table::new("correlations", &cols);
    let methods = ["pearson", "spearman"].iter().cycle();
    for (row, method) in correlation_study(corpus, r.cases, cfg, exec).into_iter().zip(methods) {
        t.push(match row.outcome {
            Ok(c) => vec![
                row.city_id,
                c.method.as_str().to_string(),
                c.lag.to_string(),
                fmt_fixed(c.r, 4),
                c.n.to_string(),
                fmt_p(c.p),
                String::new(),
            ],
            Err(msg) => na_row(vec![row.city_id, method.to_string()], cols.len(), &msg),
        });
    }
    tables.push(t);

    let cols = [
        "city_id", "metric", "blm_n", "blm_d", "blm_pct", "non_blm_n", "non_blm_d", "non_blm_pct", "difference_pp", "note",
    ];
    let mut t = Table::new("blm_comparison", &cols);
    let metrics = [MetricKind::PctGroup, MetricKind::PctMaskedInGroup, MetricKind::PctMasked];
    for (row, metric) in blm_study(corpus, cfg).into_iter().zip(metrics.iter().cycle()) {
        t.push(cohort_row(row, *metric, cols.len()));
    }
    tables.push(t);

    let mut hist_t = Table::new("fit_histogram", &["scope", "bin", "count", "total", "pct"]);
    let mut share_t = Table::new("fit_summary", &["scope", "scored_faces", "pct_above_80", "pct_91_100"]);
    let hists: Vec<(String, FitHistogram)> = {
        let mut per_city: BTreeMap<&str, FitHistogram> = BTreeMap::new();
        for (k, a) in corpus.entries() {
            per_city.entry(k.city_id.as_str()).or_default().merge(&a.fit_hist);
        }
        let mut all = FitHistogram::default();
        let mut v = Vec::new();
        for c in &cfg.cities {
            let h = per_city.get(c.id.as_str()).cloned().unwrap_or_default();
            all.merge(&h);
            v.push((c.id.clone(), h));
        }
        v.push(("all".into(), all));
        v
    };
    for (scope, h) in &hists {
        for b in 0..FIT_BINS {
            hist_t.push(vec![
                scope.clone(),
                FitHistogram::bin_label(b + 1),
                h.bins[b].to_string(),
                h.total.to_string(),
                pct(h.bins[b], h.total),
            ]);
        }
        let share = |bin| share_above(h, bin).map_or_else(|_| "NA".into(), |s| fmt_fixed(s, 2));
        share_t.push(vec![scope.clone(), h.total.to_string(), share(8), share(9)]);
    }
    tables.push(hist_t);
    tables.push(share_t);

    let mut t = Table::new("celebrity", &["scope", "masked_posts", "celebrity_masked_posts", "pct_celebrity"]);
    let mut all = (0, 0);
    for c in &cfg.cities {
        let a = all_days(&c.id, window).expect("window has days");
        all = (all.0 + a.n_masked_posts, all.1 + a.n_celebrity_masked_posts);
        t.push(vec![
            c.id.clone(),
            a.n_masked_posts.to_string(),
            a.n_celebrity_masked_posts.to_string(),
            pct(a.n_celebrity_masked_posts, a.n_masked_posts),
        ]);
    }
    t.push(vec!["all".into(), all.0.to_string(), all.1.to_string(), pct(all.1, all.0)]);
    tables.push(t);

    let mut t = Table::new("input_errors", &["file", "line", "message"]);
    for e in r.errors {
        t.push(vec![e.path.clone(), e.line.to_string(), e.message.clone()]);
    }
    tables.push(t);

    let metadata = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: r.config,
        inputs: r.inputs,
        ingest: r.ingest,
        accepted_posts: corpus.counts.accepted,
        unknown_city_posts: corpus.counts.unknown_city,
        out_of_window_posts: corpus.counts.out_of_window,
        tables: tables.iter().map(|t| t.name).collect(),
    };
    Ok(ReportBundle { tables, metadata })
}

fn summary_row(label: &str, a: &DailyAggregate) -> Vec<String> {
    vec![
        label.to_string(),
        a.n_posts.to_string(),
        a.n_faces.to_string(),
        a.n_masked.to_string(),
        pct(a.n_masked, a.n_faces),
        a.n_group_posts.to_string(),
        pct(a.n_group_posts, a.n_posts),
    ]
}

fn cohort_row(row: StudyRow<crate::studies::CohortComparison>, metric: MetricKind, width: usize) -> Vec<String> {
    match row.outcome {
        Ok(c) => vec![
            row.city_id,
            metric.as_str().into(),
            c.blm.0.to_string(),
            c.blm.1.to_string(),
            pct(c.blm.0, c.blm.1),
            c.non_blm.0.to_string(),
            c.non_blm.1.to_string(),
            pct(c.non_blm.0, c.non_blm.1),
            fmt_fixed(c.difference, 2),
            String::new(),
        ],
        Err(msg) => na_row(vec![row.city_id, metric.as_str().into()], width, &msg),
    }
}

/// Writes the bundle into `out` atomically: everything goes to a sibling
/// staging directory that replaces `out` only once complete.
pub fn write_bundle(bundle: &ReportBundle, out: &Path, formats: Formats) -> Result<()> {
    let files = bundle_files(bundle, formats)?;
    write_dir_atomically(out, files)
}

pub fn bundle_files(bundle: &ReportBundle, formats: Formats) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for t in &bundle.tables {
        if formats.csv {
            files.push((format!("{}.csv", t.name), t.to_csv()?));
        }
        if formats.text {
            files.push((format!("{}.txt", t.name), t.to_text().into_bytes()));
        }
    }
    let mut meta = serde_json::to_vec_pretty(&bundle.metadata)?;
    meta.push(b'\n');
    files.push(("metadata.json".into(), meta));
    Ok(files)
}

pub(crate) fn staging_path(out: &Path) -> PathBuf {
    let name = out.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    out.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}

/// Replaces directory `out` with the given files, or leaves it untouched on failure.
pub fn write_dir_atomically(out: &Path, files: Vec<(String, Vec<u8>)>) -> Result<()> {
    let stage = staging_path(out);
    let result = (|| {
        if stage.exists() {
            fs::remove_dir_all(&stage).map_err(|e| Error::io(&stage, e))?;
        }
        fs::create_dir_all(&stage).map_err(|e| Error::io(&stage, e))?;
        for (name, bytes) in files {
            let p = stage.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        commit_dir(&stage, out)
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&stage);
    }
    result
}

/// Moves a finished staging directory into place, replacing any previous `out`.
pub(crate) fn commit_dir(stage: &Path, out: &Path) -> Result<()> {
    if out.exists() {
        let old = out.with_file_name(format!(
            ".{}.old-{}",
            out.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned()),
            std::process::id()
        ));
        fs::rename(out, &old).map_err(|e| Error::io(out, e))?;
        fs::rename(stage, out).map_err(|e| Error::io(out, e))?;
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    } else {
        fs::rename(stage, out).map_err(|e| Error::io(out, e))?;
    }
    Ok(())
}
