use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use quizdim::analysis::{
    group_means, kde_2d, median, median_frequency, null_model_mean, shared_grid, t_test, Grouping, OpacityModel,
};
use quizdim::corpus::{
    build_corpus, parse_crossword_file, parse_jeopardy_file, tokenize, CorpusConfig, PosTags, QuestionRecord, Source,
    Stoplist,
};
use quizdim::embedding::{capitalized, load_embeddings, EmbeddingFormat, EmbeddingSpace};
use quizdim::lexicon::{load_frequencies, FrequencyTable};
use quizdim::metrics::{
    score_corpus, DensityVocab, IndependentAggregation, OverlapMeasure, OverlapRule, ScoreConfig, ScoredRecord,
};
use quizdim::regress::{render_csv, render_table, run_model_suite, QLengthCount, RowPolicy, SuiteConfig};
use quizdim::stage::{read_stage, sha256_hex, write_stage, StageHeader, CORPUS_FORMAT, REPORT_FORMAT, SCORED_FORMAT};

use crate::cli::*;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {what} `{}`: {source}", path.display())]
    Open {
        what: &'static str,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write `{}`: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{context}: {source}")]
    Data { context: String, source: quizdim::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Open { .. } | CliError::Write { .. } => 4,
            CliError::Data { source, .. } if source.is_io() => 4,
            CliError::Data { .. } => 3,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

trait Context<T> {
    fn context(self, context: impl std::fmt::Display) -> CliResult<T>;
}

impl<T> Context<T> for quizdim::Result<T> {
    fn context(self, context: impl std::fmt::Display) -> CliResult<T> {
        self.map_err(|source| CliError::Data {
            context: context.to_string(),
            source,
        })
    }
}

fn read_bytes(what: &'static str, path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Open {
        what,
        path: path.to_path_buf(),
        source,
    })
}

fn open(what: &'static str, path: &Path) -> CliResult<File> {
    File::open(path).map_err(|source| CliError::Open {
        what,
        path: path.to_path_buf(),
        source,
    })
}

/// Fail before doing any work if an input is missing.
fn require_inputs(inputs: &[(&'static str, Option<&Path>)]) -> CliResult<()> {
    for (what, path) in inputs {
        if let Some(path) = path {
            fs::metadata(path).map_err(|source| CliError::Open {
                what,
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    Ok(())
}

/// Write through a temporary sibling file and rename, so a failed run never
/// leaves a truncated output behind.
fn write_output<F>(path: &Path, fill: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> quizdim::Result<()>,
{
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let write_err = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(&tmp).map_err(write_err)?;
    let mut out = BufWriter::new(file);
    let filled = fill(&mut out).and_then(|_| out.flush().map_err(quizdim::Error::from));
    if let Err(e) = filled {
        let _ = fs::remove_file(&tmp);
        return match e {
            quizdim::Error::Io(source) => Err(write_err(source)),
            other => Err(CliError::Data {
                context: format!("writing `{}`", path.display()),
                source: other,
            }),
        };
    }
    drop(out);
    fs::rename(&tmp, path).map_err(write_err)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_output(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n")?;
        Ok(())
    })
}

fn embedding_format(arg: EmbeddingFormatArg, path: &Path) -> EmbeddingFormat {
    match arg {
        EmbeddingFormatArg::Auto => EmbeddingFormat::from_path(path),
        EmbeddingFormatArg::Binary => EmbeddingFormat::Binary,
        EmbeddingFormatArg::Text => EmbeddingFormat::Text,
    }
}

fn load_space(path: &Path, format: EmbeddingFormatArg, keep: Option<&HashSet<String>>) -> CliResult<EmbeddingSpace> {
    let file = open("embeddings file", path)?;
    let (space, report) = load_embeddings(file, embedding_format(format, path), keep)
        .context(format!("loading embeddings `{}`", path.display()))?;
    eprintln!(
        "embeddings: {} vectors of dimension {} ({} zero-norm, {} duplicate, {} not needed)",
        report.loaded,
        space.dim(),
        report.skipped_zero_norm,
        report.skipped_duplicate,
        report.skipped_by_filter
    );
    Ok(space)
}

fn load_table(path: &Path) -> CliResult<FrequencyTable> {
    let file = open("frequency file", path)?;
    let (table, report) = load_frequencies(file, &path.display().to_string())
        .context(format!("loading frequencies `{}`", path.display()))?;
    if table.is_empty() {
        return Err(CliError::Data {
            context: format!("loading frequencies `{}`", path.display()),
            source: quizdim::Error::Schema("no usable frequency entries".into()),
        });
    }
    eprintln!(
        "frequencies: {} words ({} duplicates, {} malformed, {} nonpositive)",
        report.loaded, report.duplicates, report.skipped_malformed, report.skipped_nonpositive
    );
    Ok(table)
}

/// Lookup keys that keep `resolve` results identical to a full load.
fn with_capitalized<'a>(words: impl IntoIterator<Item = &'a str>) -> HashSet<String> {
    let mut keep = HashSet::new();
    for w in words {
        keep.insert(capitalized(w));
        keep.insert(w.to_string());
    }
    keep
}

fn data_error(context: impl Into<String>, source: quizdim::Error) -> CliError {
    CliError::Data {
        context: context.into(),
        source,
    }
}

pub fn ingest(args: &IngestArgs) -> CliResult<()> {
    require_inputs(&[
        ("input file", Some(&args.input)),
        ("embeddings file", Some(&args.embedding.embeddings)),
        ("frequency file", Some(&args.frequencies)),
        ("part-of-speech file", args.pos_annotations.as_deref()),
        ("stoplist", args.stoplist.as_deref()),
    ])?;
    let source: Source = args.source.into();
    let raw_bytes = read_bytes("input file", &args.input)?;
    let parsed = match source {
        Source::Crossword => parse_crossword_file(&raw_bytes[..]),
        Source::Jeopardy => parse_jeopardy_file(&raw_bytes[..]),
    };
    let (raws, parse_report) = parsed.context(format!("parsing `{}`", args.input.display()))?;

    let table = load_table(&args.frequencies)?;
    let tokens: HashSet<String> = raws
        .iter()
        .flat_map(|r| tokenize(&r.clue_text).into_iter().chain(tokenize(&r.answer_text)))
        .collect();
    let keep = with_capitalized(tokens.iter().map(String::as_str));
    let space = load_space(&args.embedding.embeddings, args.embedding.embedding_format, Some(&keep))?;

    let mut config = CorpusConfig::default();
    let mut inputs = BTreeMap::new();
    inputs.insert("raw".to_string(), sha256_hex(&raw_bytes));
    inputs.insert("embeddings".to_string(), space.digest().to_string());
    inputs.insert("frequencies".to_string(), table.digest().to_string());
    if let Some(path) = &args.stoplist {
        let bytes = read_bytes("stoplist", path)?;
        inputs.insert("stoplist".to_string(), sha256_hex(&bytes));
        config.stoplist = Stoplist::parse(&String::from_utf8_lossy(&bytes));
    }
    if let Some(path) = &args.pos_annotations {
        let bytes = read_bytes("part-of-speech file", path)?;
        inputs.insert("pos_annotations".to_string(), sha256_hex(&bytes));
        config.pos_tags = Some(PosTags::from_reader(&bytes[..]).context(format!("reading `{}`", path.display()))?);
    }
    if !args.abbreviation_markers.is_empty() {
        config.abbreviation_markers = args.abbreviation_markers.clone();
    }

    let (records, exclusions) = build_corpus(&raws, &space, &config);
    let accounted = parse_report.skipped() + exclusions.total() + records.len() as u64;
    if accounted != parse_report.rows {
        return Err(data_error(
            "row accounting",
            quizdim::Error::Schema(format!("{} rows in, {accounted} accounted for", parse_report.rows)),
        ));
    }
    let summary = json!({
        "rows": parse_report.rows,
        "parse": parse_report,
        "exclusions": exclusions,
        "records": records.len(),
    });
    let mut header = StageHeader::new(CORPUS_FORMAT);
    header.inputs = inputs;
    header.config = json!({ "source": source.as_str(), "corpus": config.describe() });
    header.summary = summary.clone();
    write_output(&args.out, |out| write_stage(out, &header, &records))?;
    if let Some(path) = &args.report {
        write_json(
            path,
            &json!({
                "format": REPORT_FORMAT,
                "format_version": quizdim::stage::FORMAT_VERSION,
                "tool_version": env!("CARGO_PKG_VERSION"),
                "report": "ingest",
                "inputs": header.inputs,
                "config": header.config,
                "results": summary,
            }),
        )?;
    }
    eprintln!(
        "ingest: {} rows, {} parse skips, {} excluded, {} records",
        parse_report.rows,
        parse_report.skipped(),
        exclusions.total(),
        records.len()
    );
    Ok(())
}

fn read_corpus(path: &Path) -> CliResult<(StageHeader, Vec<QuestionRecord>, String)> {
    let bytes = read_bytes("corpus file", path)?;
    let (header, records) = read_stage(&bytes[..], CORPUS_FORMAT).context(format!("reading `{}`", path.display()))?;
    Ok((header, records, sha256_hex(&bytes)))
}

fn read_scored(path: &Path) -> CliResult<(StageHeader, Vec<ScoredRecord>, String)> {
    let bytes = read_bytes("scored file", path)?;
    let (header, records) = read_stage(&bytes[..], SCORED_FORMAT).context(format!("reading `{}`", path.display()))?;
    Ok((header, records, sha256_hex(&bytes)))
}

pub fn score(args: &ScoreArgs) -> CliResult<()> {
    require_inputs(&[
        ("corpus file", Some(&args.corpus)),
        ("embeddings file", Some(&args.embedding.embeddings)),
        ("frequency file", Some(&args.frequencies)),
    ])?;
    if !(0.0..=1.0).contains(&args.overlap_threshold) {
        return Err(CliError::Usage("--overlap-threshold must lie in [0, 1]".into()));
    }
    let (corpus_header, records, corpus_digest) = read_corpus(&args.corpus)?;
    let table = load_table(&args.frequencies)?;
    corpus_header
        .require_input("frequencies", table.digest())
        .context("checking the corpus against --frequencies")?;

    let density_vocab = match args.density_vocab {
        DensityVocabArg::Corpus => DensityVocab::Corpus,
        DensityVocabArg::Top100k => DensityVocab::Top100k,
        DensityVocabArg::Full => DensityVocab::Full,
    };
    let keep = (density_vocab != DensityVocab::Full).then(|| {
        let mut keep: HashSet<String> = records
            .iter()
            .flat_map(|r| std::iter::once(&r.answer).chain(&r.content_tokens))
            .cloned()
            .collect();
        if density_vocab == DensityVocab::Top100k {
            keep.extend(with_capitalized(table.top_words(args.top_words)));
        }
        keep
    });
    let space = load_space(
        &args.embedding.embeddings,
        args.embedding.embedding_format,
        keep.as_ref(),
    )?;
    corpus_header
        .require_input("embeddings", space.digest())
        .context("checking the corpus against --embeddings")?;

    let config = ScoreConfig {
        independent: match args.independent {
            IndependentArg::CosineMean => IndependentAggregation::CosineMean,
            IndependentArg::AngleMean => IndependentAggregation::AngleMean,
        },
        density_vocab,
        top_words: args.top_words,
        overlap: OverlapRule {
            measure: match args.overlap_measure {
                OverlapArg::Shorter => OverlapMeasure::Shorter,
                OverlapArg::Longer => OverlapMeasure::Longer,
            },
            threshold: args.overlap_threshold,
        },
        conjunctions: args.conjunctions.clone().unwrap_or_else(|| {
            quizdim::metrics::DEFAULT_CONJUNCTIONS
                .iter()
                .map(|s| s.to_string())
                .collect()
        }),
    };
    let scored = score_corpus(&records, &space, &table, &config).context("scoring")?;

    let mut flags: BTreeMap<String, usize> = BTreeMap::new();
    for s in &scored {
        for f in &s.flags {
            let name = serde_json::to_value(f)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            *flags.entry(name).or_default() += 1;
        }
    }
    let mut header = StageHeader::new(SCORED_FORMAT);
    header.inputs = corpus_header.inputs.clone();
    header.inputs.insert("corpus".to_string(), corpus_digest);
    header.config = json!({ "corpus": corpus_header.config, "score": config });
    header.summary = json!({
        "records": scored.len(),
        "with_opacity": scored.iter().filter(|s| s.opacity.is_some()).count(),
        "flags": flags,
    });
    write_output(&args.out, |out| write_stage(out, &header, &scored))?;
    eprintln!("score: {} records", scored.len());
    Ok(())
}

fn report_envelope(kind: &str, inputs: &BTreeMap<String, String>, config: Value, results: Value) -> Value {
    json!({
        "format": REPORT_FORMAT,
        "format_version": quizdim::stage::FORMAT_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "report": kind,
        "inputs": inputs,
        "config": config,
        "results": results,
    })
}

fn angles(scored: &[ScoredRecord], model: OpacityModel, keep: impl Fn(&ScoredRecord) -> bool) -> Vec<f64> {
    scored
        .iter()
        .filter(|s| keep(s))
        .filter_map(|s| s.opacity.as_ref().map(|p| model.angle(p)))
        .collect()
}

fn labelled_test(name: &str, a: &[f64], b: &[f64]) -> Value {
    match t_test(a, b) {
        Ok(t) => json!({ "name": name, "test": t }),
        Err(e) => json!({ "name": name, "skipped": e.to_string() }),
    }
}

fn difficulty_range(scored: &[ScoredRecord]) -> CliResult<(u8, u8)> {
    let lo = scored.iter().map(|s| s.record.difficulty).min();
    let hi = scored.iter().map(|s| s.record.difficulty).max();
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok((lo, hi)),
        _ => Err(data_error(
            "analysis",
            quizdim::Error::Schema("scored file has no records".into()),
        )),
    }
}

pub fn analyze(args: &AnalyzeArgs) -> CliResult<()> {
    require_inputs(&[
        ("scored file", Some(&args.scored)),
        ("embeddings file", args.embeddings.as_deref()),
    ])?;
    let (header, scored, digest) = read_scored(&args.scored)?;
    let mut inputs = header.inputs.clone();
    inputs.insert("scored".to_string(), digest);
    let report = match args.report {
        ReportKind::Groups => "groups",
        ReportKind::Null => "null",
        ReportKind::Bins => "bins",
        ReportKind::Kde => "kde",
        ReportKind::Medians => "medians",
    };
    let mut config = json!({ "seed": args.seed, "bootstrap": args.bootstrap });

    let results = match args.report {
        ReportKind::Groups => {
            let mut tables = serde_json::Map::new();
            for (name, grouping) in [
                ("all", Grouping::All),
                ("difficulty", Grouping::Difficulty),
                ("pun", Grouping::PunFlag),
            ] {
                if grouping == Grouping::PunFlag && !scored.iter().any(|s| s.record.source == Source::Crossword) {
                    continue;
                }
                let t = group_means(&scored, grouping, args.bootstrap, args.seed).context("grouping")?;
                tables.insert(name.to_string(), serde_json::to_value(t).expect("serializable"));
            }
            let syn = angles(&scored, OpacityModel::Synergistic, |_| true);
            let ind = angles(&scored, OpacityModel::Independent, |_| true);
            let pun = angles(&scored, OpacityModel::Synergistic, |s| s.record.is_pun);
            let non_pun = angles(&scored, OpacityModel::Synergistic, |s| !s.record.is_pun);
            json!({
                "tables": tables,
                "tests": [
                    labelled_test("synergistic vs independent", &syn, &ind),
                    labelled_test("pun vs non-pun (synergistic)", &pun, &non_pun),
                ],
            })
        }
        ReportKind::Bins => {
            let t =
                group_means(&scored, Grouping::FrequencyBinDifficulty, args.bootstrap, args.seed).context("binning")?;
            serde_json::to_value(t).expect("serializable")
        }
        ReportKind::Null => {
            let Some(path) = &args.embeddings else {
                return Err(CliError::Usage("the null report needs --embeddings".into()));
            };
            let records: Vec<QuestionRecord> = scored.iter().map(|s| s.record.clone()).collect();
            let keep: HashSet<String> = records
                .iter()
                .flat_map(|r| std::iter::once(&r.answer).chain(&r.content_tokens))
                .cloned()
                .collect();
            let space = load_space(path, args.embedding_format, Some(&keep))?;
            header
                .require_input("embeddings", space.digest())
                .context("checking the scored file against --embeddings")?;
            let agg: IndependentAggregation = header
                .config
                .pointer("/score/independent")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .unwrap_or_default();
            let models: Vec<OpacityModel> = if args.models.is_empty() {
                OpacityModel::ALL.to_vec()
            } else {
                args.models.iter().map(|&m| m.into()).collect()
            };
            config["repetitions"] = json!(args.repetitions);
            config["independent"] = json!(agg);
            config["models"] = json!(models);
            let mut out = Vec::new();
            for model in models {
                let r =
                    null_model_mean(&records, &space, model, agg, args.seed, args.repetitions).context("null model")?;
                out.push(r);
            }
            json!({ "models": out })
        }
        ReportKind::Kde => {
            let (lo, hi) = difficulty_range(&scored)?;
            let points = |d: u8| -> Vec<(f64, f64)> {
                scored
                    .iter()
                    .filter(|s| s.record.difficulty == d)
                    .filter_map(|s| Some((s.opacity?.synergistic_deg, s.answer_fpm?.log10())))
                    .collect()
            };
            let (easy, hard) = (points(lo), points(hi));
            let grid = shared_grid(&[&easy, &hard], args.grid, args.grid).context("kde grid")?;
            config["grid"] = json!(grid);
            config["axes"] = json!({ "x": "synergistic opacity (degrees)", "y": "log10 answer frequency per million" });
            let easy_kde = kde_2d(&easy, grid).context(format!("kde for difficulty {lo}"))?;
            let hard_kde = kde_2d(&hard, grid).context(format!("kde for difficulty {hi}"))?;
            json!({
                "easy": { "difficulty": lo, "n": easy.len(), "mass": easy_kde.mass(), "grid": easy_kde },
                "hard": { "difficulty": hi, "n": hard.len(), "mass": hard_kde.mass(), "grid": hard_kde },
            })
        }
        ReportKind::Medians => {
            let (lo, hi) = difficulty_range(&scored)?;
            let mut levels = Vec::new();
            for d in lo..=hi {
                let fpms: Vec<f64> = scored
                    .iter()
                    .filter(|s| s.record.difficulty == d)
                    .filter_map(|s| s.answer_fpm)
                    .collect();
                if let Ok(m) = median(&fpms) {
                    levels.push(json!({ "difficulty": d, "n": fpms.len(), "median_fpm": m }));
                }
            }
            let log_fpm = |d: u8| -> Vec<f64> {
                scored
                    .iter()
                    .filter(|s| s.record.difficulty == d)
                    .filter_map(|s| s.answer_fpm.map(f64::log10))
                    .collect()
            };
            json!({
                "levels": levels,
                "overall_median_fpm": median_frequency(&scored, |_| true).ok(),
                "easiest_vs_hardest": labelled_test(
                    &format!("log10 fpm, difficulty {lo} vs {hi}"),
                    &log_fpm(lo),
                    &log_fpm(hi),
                ),
            })
        }
    };
    write_json(&args.out, &report_envelope(report, &inputs, config, results))?;
    eprintln!("analyze: wrote {report} report");
    Ok(())
}

pub fn regress(args: &RegressArgs) -> CliResult<()> {
    require_inputs(&[("scored file", Some(&args.scored))])?;
    let (header, scored, digest) = read_scored(&args.scored)?;
    let source: Source = args.dataset.into();
    let subset: Vec<ScoredRecord> = scored.into_iter().filter(|s| s.record.source == source).collect();
    if subset.is_empty() {
        return Err(data_error(
            "regress",
            quizdim::Error::Schema(format!("scored file has no {source} records")),
        ));
    }
    let config = SuiteConfig {
        rows: match args.rows {
            RowPolicyArg::PerModel => RowPolicy::PerModel,
            RowPolicyArg::Common => RowPolicy::Common,
        },
        q_length: match args.q_length {
            QLengthArg::Raw => QLengthCount::Raw,
            QLengthArg::Content => QLengthCount::Content,
        },
    };
    let suite = run_model_suite(&subset, config).context("fitting the regression suite")?;
    let title = match source {
        Source::Crossword => "Crossword",
        Source::Jeopardy => "Jeopardy",
    };
    let mut inputs = header.inputs.clone();
    inputs.insert("scored".to_string(), digest);

    let mut text = String::new();
    text.push_str(&format!("# quizdim {} regress report\n", env!("CARGO_PKG_VERSION")));
    for (name, d) in &inputs {
        text.push_str(&format!("# input {name} sha256={d}\n"));
    }
    text.push_str(&format!(
        "# config {}\n",
        serde_json::to_string(&config).expect("serializable")
    ));
    text.push_str(&render_table(title, &suite.models));
    if let Some(c) = &suite.obscurity_opacity {
        text.push_str(&format!(
            "Correlation of opacity and obscurity: r = {:.3}, p = {:.3e}, n = {}\n",
            c.r, c.p, c.n
        ));
    }
    write_output(&args.out, |out| Ok(out.write_all(text.as_bytes())?))?;
    if let Some(path) = &args.csv {
        let csv = render_csv(&suite.models);
        write_output(path, |out| Ok(out.write_all(csv.as_bytes())?))?;
    }
    if let Some(path) = &args.json {
        write_json(
            path,
            &report_envelope(
                "regress",
                &inputs,
                serde_json::to_value(config).expect("serializable"),
                json!(suite),
            ),
        )?;
    }
    eprintln!(
        "regress: fitted {} models on {} {source} records",
        suite.models.len(),
        subset.len()
    );
    Ok(())
}
