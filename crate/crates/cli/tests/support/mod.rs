#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn quizdim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quizdim"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = quizdim(args);
    assert!(
        out.status.success(),
        "quizdim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub const REPORTS: [&str; 5] = ["groups", "null", "bins", "kde", "medians"];

/// Run every stage for one source into `dir`.
pub fn run_source(dir: &Path, source: &str, threads: Option<usize>) {
    let emb = fixture("embeddings.txt");
    let freq = fixture("frequencies.tsv");
    let input = fixture(if source == "crossword" {
        "crossword.csv"
    } else {
        "jeopardy.json"
    });
    let t = threads.map(|n| n.to_string());
    let with_threads = |mut args: Vec<String>| {
        if let Some(t) = &t {
            args.splice(0..0, ["--threads".to_string(), t.clone()]);
        }
        args
    };
    let run = |args: Vec<String>| {
        let args = with_threads(args);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&refs);
    };
    let p = |name: &str| dir.join(format!("{source}.{name}"));
    let own = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    run(own(&[
        "ingest",
        "--source",
        source,
        "--input",
        s(&input),
        "--embeddings",
        s(&emb),
        "--frequencies",
        s(&freq),
        "--out",
        s(&p("corpus.jsonl")),
        "--report",
        s(&p("ingest.json")),
    ]));
    run(own(&[
        "score",
        "--corpus",
        s(&p("corpus.jsonl")),
        "--embeddings",
        s(&emb),
        "--frequencies",
        s(&freq),
        "--out",
        s(&p("scored.jsonl")),
    ]));
    for report in REPORTS {
        run(own(&[
            "analyze",
            "--scored",
            s(&p("scored.jsonl")),
            "--report",
            report,
            "--embeddings",
            s(&emb),
            "--bootstrap",
            "200",
            "--out",
            s(&p(&format!("{report}.json"))),
        ]));
    }
    run(own(&[
        "regress",
        "--scored",
        s(&p("scored.jsonl")),
        "--dataset",
        source,
        "--out",
        s(&p("regress.txt")),
        "--csv",
        s(&p("regress.csv")),
        "--json",
        s(&p("regress.json")),
    ]));
}

/// Every output of the full pipeline for both sources, by file name.
pub fn run_pipeline(dir: &Path, threads: Option<usize>) -> Vec<(String, Vec<u8>)> {
    for source in ["crossword", "jeopardy"] {
        run_source(dir, source, threads);
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
