//! Streaming ingestion of post files into corpus aggregates.
//!
//! Lines are read in fixed-size batches, parsed in parallel and folded into
//! [`CorpusAggregates`]; only the aggregates and a set of seen post-id hashes
//! outlive a batch.

use std::collections::HashSet;
use std::fs::File;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::aggregate::CorpusAggregates;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::records::{parse_post_line, PostRecord, StudyConfig};

pub const BATCH_LINES: usize = 8192;
/// Line errors kept for the report; the total is always counted.
pub const MAX_REPORTED_ERRORS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub role: &'static str,
    pub path: String,
    pub bytes: u64,
    pub lines: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputError {
    pub path: String,
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestSummary {
    pub lines: u64,
    pub parsed: u64,
    pub errors: u64,
    pub duplicates: u64,
    pub first_timestamp: Option<DateTime<Utc>>,
    pub last_timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub corpus: CorpusAggregates,
    pub inputs: Vec<InputDigest>,
    pub errors: Vec<InputError>,
    pub summary: IngestSummary,
}

/// Reader adaptor that hashes and counts every byte passing through.
struct Hashing<R> {
    inner: R,
    hasher: Sha256,
    bytes: u64,
}

impl<R: Read> Read for Hashing<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        self.bytes += n as u64;
        Ok(n)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a whole file, returning its contents and digest.
pub fn read_with_digest(path: &Path, role: &'static str) -> Result<(Vec<u8>, InputDigest)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = InputDigest {
        role,
        path: path.display().to_string(),
        bytes: bytes.len() as u64,
        lines: bytecount_lines(&bytes),
        sha256: sha256_hex(&bytes),
    };
    Ok((bytes, digest))
}

fn bytecount_lines(bytes: &[u8]) -> u64 {
    let n = bytes.iter().filter(|&&b| b == b'\n').count() as u64;
    n + (!bytes.is_empty() && bytes.last() != Some(&b'\n')) as u64
}

fn id_hash(id: &str) -> u64 {
    let mut h = DefaultHasher::new();
    id.hash(&mut h);
    h.finish()
}

impl Ingested {
    fn push_error(&mut self, path: &Path, line: u64, message: String) {
        self.summary.errors += 1;
        if self.errors.len() < MAX_REPORTED_ERRORS {
            self.errors.push(InputError {
                path: path.display().to_string(),
                line,
                message,
            });
        }
    }

    fn note_timestamp(&mut self, ts: DateTime<Utc>) {
        let s = &mut self.summary;
        s.first_timestamp = Some(s.first_timestamp.map_or(ts, |f| f.min(ts)));
        s.last_timestamp = Some(s.last_timestamp.map_or(ts, |l| l.max(ts)));
    }
}

/// Streams every posts file, in order, into one set of aggregates.
pub fn ingest_posts(paths: &[PathBuf], cfg: &StudyConfig, exec: Execution) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut seen: HashSet<u64> = HashSet::new();
    for path in paths {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::with_capacity(
            1 << 20,
            Hashing {
                inner: file,
                hasher: Sha256::new(),
                bytes: 0,
            },
        );
        let mut line_no = 0u64;
        loop {
            let mut batch: Vec<Vec<u8>> = Vec::with_capacity(BATCH_LINES);
            while batch.len() < BATCH_LINES {
                let mut buf = Vec::new();
                match reader.read_until(b'\n', &mut buf) {
                    Ok(0) => break,
                    Ok(_) => batch.push(buf),
                    Err(e) => return Err(Error::io(path, e)),
                }
            }
            if batch.is_empty() {
                break;
            }
            let first_line = line_no + 1;
            line_no += batch.len() as u64;
            let parsed = par::map(exec, &batch, |l| parse_post_line(l));
            drop(batch);
            let mut accepted: Vec<PostRecord> = Vec::with_capacity(parsed.len());
            for (k, r) in parsed.into_iter().enumerate() {
                let line = first_line + k as u64;
                match r {
                    Ok(post) if seen.insert(id_hash(&post.post_id)) => accepted.push(post),
                    Ok(post) => {
                        out.summary.duplicates += 1;
                        out.push_error(path, line, format!("duplicate post_id {:?}", post.post_id));
                    }
                    Err(message) => out.push_error(path, line, message),
                }
            }
            out.summary.parsed += accepted.len() as u64;
            for p in &accepted {
                out.note_timestamp(p.timestamp);
            }
            let chunk = crate::aggregate::aggregate_posts(&accepted, cfg, exec);
            out.corpus = std::mem::take(&mut out.corpus).merge(chunk);
        }
        out.summary.lines += line_no;
        let inner = reader.into_inner();
        out.inputs.push(InputDigest {
            role: "posts",
            path: path.display().to_string(),
            bytes: inner.bytes,
            lines: line_no,
            sha256: hex::encode(inner.hasher.finalize()),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn errors_and_duplicates_are_counted_with_lines() {
        let cfg = StudyConfig::default();
        let good = r#"{"post_id":"a","city_id":"boston","timestamp":"2020-03-01T12:00:00Z","tags":[],"like_count":1,"faces":[]}"#;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{good}\nnot json\n{good}\n\n{}", good.replace("\"a\"", "\"b\"")).unwrap();
        let ing = ingest_posts(&[f.path().to_path_buf()], &cfg, Execution::Parallel).unwrap();
        assert_eq!(ing.summary.lines, 5);
        assert_eq!(ing.summary.parsed, 2);
        assert_eq!(ing.summary.errors, 3);
        assert_eq!(ing.summary.duplicates, 1);
        assert_eq!(ing.errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(ing.corpus.counts.accepted, 2);
        let bytes = std::fs::read(f.path()).unwrap();
        assert_eq!(ing.inputs[0].sha256, sha256_hex(&bytes));
        assert_eq!(ing.inputs[0].bytes, bytes.len() as u64);
    }

    #[test]
    fn missing_file_is_io_error() {
        let r = ingest_posts(&[PathBuf::from("/nonexistent/posts.jsonl")], &StudyConfig::default(), Execution::Sequential);
        assert!(matches!(r, Err(Error::Io { .. })));
    }

    #[test]
    fn line_counting() {
        assert_eq!(bytecount_lines(b""), 0);
        assert_eq!(bytecount_lines(b"a\nb"), 2);
        assert_eq!(bytecount_lines(b"a\nb\n"), 2);
    }
}
