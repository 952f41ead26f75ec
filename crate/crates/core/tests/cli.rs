mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use maskwatch::geometry::TEMPLATE;
use maskwatch::records::parse_posts;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn maskwatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskwatch"))
        .current_dir(manifest_dir())
        .args(args)
        .output()
        .expect("spawn maskwatch")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

const MINI: [&str; 6] = [
    "--config",
    "tests/fixtures/mini/config.json",
    "--posts",
    "tests/fixtures/mini/posts.jsonl",
    "--cases",
    "tests/fixtures/mini/cases.csv",
];

fn analyze_mini(extra: &[&str], out: &Path) -> Output {
    let mut args = extra.to_vec();
    args.push("analyze");
    args.extend(MINI);
    args.extend(["--out", out.to_str().unwrap()]);
    maskwatch(&args)
}

#[test]
fn mini_corpus_matches_golden_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("report");
    let run = analyze_mini(&[], &out);
    assert!(run.status.success(), "{}", stderr(&run));
    let got = dir_files(&out);
    let want = dir_files(&manifest_dir().join("tests/fixtures/mini/golden"));
    let names = |v: &[(String, Vec<u8>)]| v.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    assert_eq!(names(&got), names(&want));
    for ((name, a), (_, b)) in got.iter().zip(&want) {
        assert!(a == b, "{name} differs from golden copy");
    }
}

#[test]
fn single_thread_and_default_pool_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(analyze_mini(&["--jobs", "1"], &a).status.success());
    assert!(analyze_mini(&["--jobs", "4"], &b).status.success());
    assert_eq!(dir_files(&a), dir_files(&b));
}

#[test]
fn missing_cases_file_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("report");
    let run = maskwatch(&[
        "analyze",
        "--config",
        "tests/fixtures/mini/config.json",
        "--posts",
        "tests/fixtures/mini/posts.jsonl",
        "--cases",
        "tests/fixtures/mini/no_such_cases.csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("no_such_cases.csv"), "{}", stderr(&run));
    assert!(!out.exists());
}

#[test]
fn invalid_synth_params_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let params = tmp.path().join("params.json");
    fs::write(&params, r#"{"seed": 1, "defaults": {"base_mask_rate": 1.7}}"#).unwrap();
    let out = tmp.path().join("corpus");
    let run = maskwatch(&["synth", "--params", params.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("base_mask_rate"), "{}", stderr(&run));
    assert!(!out.exists());
}

#[test]
fn malformed_lines_are_reported_by_number() {
    let bytes = fs::read(manifest_dir().join("tests/fixtures/posts_1000.jsonl")).unwrap();
    let parsed = parse_posts(bytes.as_slice());
    assert_eq!(parsed.records.len(), 998);
    let lines: Vec<usize> = parsed.errors.iter().map(|e| e.line).collect();
    assert_eq!(lines, vec![137, 643]);
    assert!(parsed.errors[1].message.contains("68"), "{}", parsed.errors[1].message);
}

fn to_grid(p: (f64, f64), b: [f64; 4], w: usize, h: usize) -> (f64, f64) {
    ((p.0 - b[0]) * w as f64 / b[2], (p.1 - b[1]) * h as f64 / b[3])
}

#[test]
fn fitscore_matches_per_pixel_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut lines = Vec::new();
    let mut expected = Vec::new();
    for k in 0..20 {
        let (w, h) = (rng.gen_range(24..72), rng.gen_range(24..72));
        let b = [rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0), rng.gen_range(60.0..300.0), rng.gen_range(60.0..300.0)];
        let landmarks: Vec<(f64, f64)> = TEMPLATE
            .iter()
            .map(|&(x, y)| {
                let x = b[0] + (x + rng.gen_range(-0.02..0.02)) * b[2];
                let y = b[1] + (y - 0.1 + rng.gen_range(-0.02..0.02)) * b[3];
                ((x * 10.0).round() / 10.0, (y * 10.0).round() / 10.0)
            })
            .collect();
        let pred: Vec<bool> = match k {
            0 => vec![true; w * h],
            1 => vec![false; w * h],
            _ => {
                let fill = rng.gen_range(0.1..0.9);
                (0..w * h).map(|_| rng.gen_bool(fill)).collect()
            }
        };
        let mut pgm = format!("P5\n{w} {h}\n255\n").into_bytes();
        pgm.extend(pred.iter().map(|&on| if on { 255u8 } else { 0 }));
        fs::write(tmp.path().join(format!("m{k}.pgm")), pgm).unwrap();

        let region: Vec<(f64, f64)> = (32..=36)
            .chain(49..=68)
            .map(|n| to_grid(landmarks[n - 1], b, w, h))
            .collect();
        let roi = common::raster(&common::gift_wrap(&region), w, h);
        expected.push(common::fit_score(&pred, &roi));

        let post = json!({
            "post_id": format!("p{k}"),
            "city_id": "boston",
            "timestamp": "2020-04-01T12:00:00Z",
            "tags": [],
            "like_count": 3,
            "faces": [{
                "landmarks": landmarks.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>(),
                "face_box": b,
                "mask_label": "masked",
                "mask_probability": 0.9,
                "seg_mask": format!("m{k}.pgm"),
            }],
        });
        lines.push(post.to_string());
    }
    let posts = tmp.path().join("posts.jsonl");
    fs::write(&posts, lines.join("\n") + "\n").unwrap();
    let out = tmp.path().join("scored.jsonl");
    let run = maskwatch(&[
        "fitscore",
        "--posts",
        posts.to_str().unwrap(),
        "--bitmaps",
        tmp.path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let scored: Vec<f64> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            v["faces"][0]["fit_score"].as_f64().expect("scored face")
        })
        .collect();
    assert_eq!(scored, expected);
    assert_eq!(scored[0], 100.0);
    assert_eq!(scored[1], 0.0);
}
