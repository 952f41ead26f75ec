//! Command-line front end: `analyze`, `fitscore` and `synth`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{build_roi_raster, RoiRegion};
use crate::ingest::{ingest_posts, read_with_digest, sha256_hex, BATCH_LINES};
use crate::par::{self, Execution};
use crate::pnm::read_bitmap;
use crate::records::{parse_case_series, parse_post_line, PostRecord, StudyConfig};
use crate::report::{build_bundle, commit_dir, staging_path, write_bundle, ConfigInfo, Formats, ReportBundle, ReportInputs};
use crate::synth::{write_corpus, Manifest, SynthParams};

#[derive(Debug, Parser)]
#[command(name = "maskwatch", version, about = "Mask-wearing and group-posting analytics over geotagged photo posts")]
pub struct Cli {
    /// Worker threads; 1 runs everything on the calling thread. Defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate posts and write the report tables.
    Analyze(AnalyzeArgs),
    /// Fill in fit scores from segmentation bitmaps.
    Fitscore(FitscoreArgs),
    /// Generate a synthetic corpus with planted effects.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Study configuration (JSON); built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Line-delimited post records.
    #[arg(long, required = true, num_args = 1..)]
    pub posts: Vec<PathBuf>,
    /// Cumulative case counts (`date,city_id,cumulative_cases`).
    #[arg(long)]
    pub cases: PathBuf,
    /// Report directory, replaced atomically.
    #[arg(long)]
    pub out: PathBuf,
    /// Table format; both CSV and text when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct FitscoreArgs {
    #[arg(long)]
    pub posts: PathBuf,
    /// Directory that `seg_mask` paths are relative to; defaults to the posts file's directory.
    #[arg(long)]
    pub bitmaps: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator parameters (JSON); defaults when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed from the parameter file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides posts per city per day.
    #[arg(long)]
    pub posts_per_day: Option<usize>,
}

/// Selects the execution mode and sizes the worker pool.
pub fn execution(jobs: Option<usize>) -> Execution {
    match jobs {
        Some(1) => Execution::Sequential,
        #[cfg(feature = "parallel")]
        Some(n) if n > 1 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Execution::Parallel
        }
        _ => Execution::Parallel,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let exec = execution(cli.jobs);
    match cli.command {
        Command::Analyze(a) => {
            let bundle = analyze(a.config.as_deref(), &a.posts, &a.cases, exec)?;
            let formats = match a.format {
                None => Formats::default(),
                Some(Format::Csv) => Formats { csv: true, text: false },
                Some(Format::Text) => Formats { csv: false, text: true },
            };
            write_bundle(&bundle, &a.out, formats)?;
            let m = &bundle.metadata;
            println!(
                "analyzed {} lines: {} posts accepted, {} input errors, {} outside window, {} unknown city",
                m.ingest.lines, m.accepted_posts, m.ingest.errors, m.out_of_window_posts, m.unknown_city_posts
            );
            println!("wrote {} tables to {}", bundle.tables.len(), a.out.display());
        }
        Command::Fitscore(f) => {
            let root = f.bitmaps.clone().unwrap_or_else(|| {
                f.posts.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
            });
            let s = fitscore(&f.posts, &root, &f.out, exec)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            if s.suppressed_warnings > 0 {
                eprintln!("warning: {} further warnings suppressed", s.suppressed_warnings);
            }
            println!(
                "scored {} faces; {} without seg_mask, {} missing bitmaps, {} unreadable bitmaps, {} bad lines passed through",
                s.scored, s.unsegmented, s.missing_bitmaps, s.unreadable_bitmaps, s.bad_lines
            );
        }
        Command::Synth(s) => {
            let m = synth(&s, exec)?;
            println!(
                "generated {} posts for {} cities into {}",
                m.total_posts,
                m.cities.len(),
                s.out.display()
            );
        }
    }
    Ok(())
}

pub fn load_config(path: Option<&Path>) -> Result<(StudyConfig, ConfigInfo)> {
    match path {
        Some(p) => {
            let (bytes, digest) = read_with_digest(p, "config")?;
            let text = String::from_utf8(bytes).map_err(|e| Error::in_file(p, Error::Config(e.to_string())))?;
            let cfg = StudyConfig::from_json(&text).map_err(|e| Error::in_file(p, e))?;
            Ok((
                cfg,
                ConfigInfo {
                    source: digest.path,
                    sha256: digest.sha256,
                },
            ))
        }
        None => {
            let cfg = StudyConfig::default();
            let sha256 = sha256_hex(&serde_json::to_vec(&cfg)?);
            Ok((
                cfg,
                ConfigInfo {
                    source: "default".into(),
                    sha256,
                },
            ))
        }
    }
}

/// Reads every input and computes the report bundle without writing it.
pub fn analyze(config: Option<&Path>, posts: &[PathBuf], cases: &Path, exec: Execution) -> Result<ReportBundle> {
    let (cfg, config_info) = load_config(config)?;
    let (case_bytes, case_digest) = read_with_digest(cases, "cases")?;
    let case_series = parse_case_series(case_bytes.as_slice(), Some(&cfg.city_ids())).map_err(|e| Error::in_file(cases, e))?;
    drop(case_bytes);
    for p in posts {
        if !p.is_file() {
            return Err(Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "posts file not found")));
        }
    }
    let ingested = ingest_posts(posts, &cfg, exec)?;
    let mut inputs = ingested.inputs;
    inputs.push(case_digest);
    build_bundle(
        ReportInputs {
            cfg: &cfg,
            corpus: &ingested.corpus,
            cases: &case_series,
            config: config_info,
            inputs,
            errors: &ingested.errors,
            ingest: ingested.summary,
        },
        exec,
    )
}

const MAX_WARNINGS: usize = 1000;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FitscoreSummary {
    pub lines: u64,
    pub bad_lines: u64,
    pub scored: u64,
    /// Masked faces without a `seg_mask` reference.
    pub unsegmented: u64,
    pub missing_bitmaps: u64,
    pub unreadable_bitmaps: u64,
    pub warnings: Vec<String>,
    pub suppressed_warnings: u64,
}

impl FitscoreSummary {
    fn warn(&mut self, w: String) {
        if self.warnings.len() < MAX_WARNINGS {
            self.warnings.push(w);
        } else {
            self.suppressed_warnings += 1;
        }
    }
}

enum FaceOutcome {
    Scored,
    Unsegmented,
    Missing(String),
    Unreadable(String),
}

fn score_faces(post: &mut PostRecord, root: &Path) -> Vec<(usize, FaceOutcome)> {
    let mut out = Vec::new();
    for (k, face) in post.faces.iter_mut().enumerate() {
        if !face.is_masked() {
            continue;
        }
        face.fit_score = None;
        let Some(rel) = face.seg_mask.clone() else {
            out.push((k, FaceOutcome::Unsegmented));
            continue;
        };
        let path = root.join(&rel);
        if !path.is_file() {
            out.push((k, FaceOutcome::Missing(format!("{} not found", path.display()))));
            continue;
        }
        let scored = read_bitmap(&path).and_then(|pred| {
            let roi = build_roi_raster(&face.landmarks, RoiRegion::NoseMouth, pred.width(), pred.height())?;
            crate::fit::fit_score(&pred, &roi)
        });
        match scored {
            Ok(s) => {
                face.fit_score = Some(s);
                out.push((k, FaceOutcome::Scored));
            }
            Err(e) => out.push((k, FaceOutcome::Unreadable(format!("{}: {e}", path.display())))),
        }
    }
    out
}

/// Rewrites `posts` with fit scores recomputed from each masked face's bitmap.
///
/// Faces without a readable bitmap are left unscored; unparseable lines are
/// copied through unchanged. The output file is replaced atomically.
pub fn fitscore(posts: &Path, root: &Path, out: &Path, exec: Execution) -> Result<FitscoreSummary> {
    let file = fs::File::open(posts).map_err(|e| Error::io(posts, e))?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let tmp = staging_path(out);
    let tmp_file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut writer = BufWriter::new(tmp_file);
    let mut summary = FitscoreSummary::default();
    let result = (|| {
        loop {
            let mut batch = Vec::with_capacity(BATCH_LINES);
            while batch.len() < BATCH_LINES {
                let mut buf = Vec::new();
                if reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(posts, e))? == 0 {
                    break;
                }
                batch.push(buf);
            }
            if batch.is_empty() {
                break;
            }
            let results = par::map(exec, &batch, |line| {
                parse_post_line(line).map(|mut p| {
                    let o = score_faces(&mut p, root);
                    (p, o)
                })
            });
            for (raw, r) in batch.iter().zip(results) {
                summary.lines += 1;
                let line = summary.lines;
                match r {
                    Ok((post, outcomes)) => {
                        for (k, o) in outcomes {
                            match o {
                                FaceOutcome::Scored => summary.scored += 1,
                                FaceOutcome::Unsegmented => summary.unsegmented += 1,
                                FaceOutcome::Missing(m) => {
                                    summary.missing_bitmaps += 1;
                                    summary.warn(format!("line {line} face {k}: {m}"));
                                }
                                FaceOutcome::Unreadable(m) => {
                                    summary.unreadable_bitmaps += 1;
                                    summary.warn(format!("line {line} face {k}: {m}"));
                                }
                            }
                        }
                        writer.write_all(post.to_json_line().as_bytes()).map_err(|e| Error::io(&tmp, e))?;
                        writer.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
                    }
                    Err(m) => {
                        summary.bad_lines += 1;
                        summary.warn(format!("line {line}: {m}"));
                        writer.write_all(raw).map_err(|e| Error::io(&tmp, e))?;
                        if !raw.ends_with(b"\n") {
                            writer.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
                        }
                    }
                }
            }
        }
        writer.flush().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, out).map_err(|e| Error::io(out, e))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map(|_| summary)
}

pub fn load_synth_params(path: Option<&Path>) -> Result<SynthParams> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            SynthParams::from_json(&text).map_err(|e| Error::in_file(p, e))
        }
        None => Ok(SynthParams::default()),
    }
}

pub fn synth(args: &SynthArgs, exec: Execution) -> Result<Manifest> {
    let mut params = load_synth_params(args.params.as_deref())?;
    let (cfg, _) = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    if let Some(n) = args.posts_per_day {
        params.posts_per_day = n;
    }
    params.validate(&cfg).map_err(|e| match &args.params {
        Some(p) => Error::in_file(p, e),
        None => e,
    })?;
    let stage = staging_path(&args.out);
    if stage.exists() {
        fs::remove_dir_all(&stage).map_err(|e| Error::io(&stage, e))?;
    }
    let result = write_corpus(&params, &cfg, &stage, exec).and_then(|m| commit_dir(&stage, &args.out).map(|_| m));
    if result.is_err() {
        let _ = fs::remove_dir_all(&stage);
    }
    result
}
