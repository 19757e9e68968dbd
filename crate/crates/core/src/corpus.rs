//! Crossword and Jeopardy ingestion: parsing raw dumps, tokenizing clues,
//! filtering, labeling difficulty and flagging puns.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSpace;
use crate::stage::sha256_hex;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Crossword,
    Jeopardy,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Crossword => "crossword",
            Source::Jeopardy => "jeopardy",
        }
    }

    /// Highest difficulty label for the source.
    pub fn max_difficulty(self) -> u8 {
        match self {
            Source::Crossword => 6,
            Source::Jeopardy => 8,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crossword" => Ok(Source::Crossword),
            "jeopardy" => Ok(Source::Jeopardy),
            other => Err(Error::argument(format!("unknown source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Round {
    Single,
    Double,
}

/// One clue–answer pair as it appears in the source dump.
#[derive(Debug, Clone, PartialEq)]
pub struct RawClue {
    pub source: Source,
    pub clue_text: String,
    pub answer_text: String,
    /// Publication date (crossword).
    pub date: Option<NaiveDate>,
    /// Board value in USD (Jeopardy).
    pub dollar_value: Option<u32>,
    pub round: Option<Round>,
    pub category: Option<String>,
}

impl RawClue {
    pub fn crossword(date: NaiveDate, clue: impl Into<String>, answer: impl Into<String>) -> Self {
        RawClue {
            source: Source::Crossword,
            clue_text: clue.into(),
            answer_text: answer.into(),
            date: Some(date),
            dollar_value: None,
            round: None,
            category: None,
        }
    }

    pub fn jeopardy(
        question: impl Into<String>,
        answer: impl Into<String>,
        dollar_value: u32,
        round: Round,
        category: impl Into<String>,
    ) -> Self {
        RawClue {
            source: Source::Jeopardy,
            clue_text: question.into(),
            answer_text: answer.into(),
            date: None,
            dollar_value: Some(dollar_value),
            round: Some(round),
            category: Some(category.into()),
        }
    }
}

/// Row accounting for the raw parsers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub rows: u64,
    pub parsed: u64,
    pub skipped_blank_answer: u64,
    pub skipped_bad_date: u64,
    pub skipped_missing_value: u64,
    pub skipped_unsupported_round: u64,
    pub skipped_malformed: u64,
}

impl ParseReport {
    pub fn skipped(&self) -> u64 {
        self.skipped_blank_answer
            + self.skipped_bad_date
            + self.skipped_missing_value
            + self.skipped_unsupported_round
            + self.skipped_malformed
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    ["%Y-%m-%d", "%m/%d/%Y", "%Y/%m/%d"]
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(s, fmt).ok())
}

/// Parse a delimited crossword dump. The header row must name `date`, `clue`
/// and `answer` columns (any order, case-insensitive); tab or comma
/// delimiters are detected from the header. Answers are lowercased.
pub fn parse_crossword_file<R: Read>(source: R) -> Result<(Vec<RawClue>, ParseReport)> {
    let mut reader = BufReader::new(source);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .has_headers(true)
        .from_reader(std::io::Cursor::new(first.into_bytes()).chain(reader));

    let headers = csv
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable crossword header: {e}")))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema(format!("crossword file has no `{name}` column")))
    };
    let (date_col, clue_col, answer_col) = (column("date")?, column("clue")?, column("answer")?);

    let mut report = ParseReport::default();
    let mut clues = Vec::new();
    for row in csv.records() {
        report.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => match e.into_kind() {
                csv::ErrorKind::Io(io) => return Err(Error::Io(io)),
                _ => {
                    report.skipped_malformed += 1;
                    continue;
                }
            },
        };
        let (Some(date), Some(clue), Some(answer)) = (row.get(date_col), row.get(clue_col), row.get(answer_col)) else {
            report.skipped_malformed += 1;
            continue;
        };
        let answer = answer.trim();
        if answer.is_empty() {
            report.skipped_blank_answer += 1;
            continue;
        }
        let Some(date) = parse_date(date) else {
            report.skipped_bad_date += 1;
            continue;
        };
        clues.push(RawClue::crossword(date, clue.trim(), answer.to_lowercase()));
        report.parsed += 1;
    }
    Ok((clues, report))
}

fn json_value_usd(v: Option<&serde_json::Value>) -> Option<u32> {
    match v? {
        serde_json::Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()),
        serde_json::Value::String(s) => {
            let digits: String = s.chars().filter(|c| !matches!(c, '$' | ',' | ' ')).collect();
            digits.parse().ok()
        }
        _ => None,
    }
    .filter(|&v| v > 0)
}

enum RoundParse {
    Round(Round),
    Unsupported,
}

fn parse_round(v: Option<&serde_json::Value>) -> RoundParse {
    let Some(s) = v.and_then(|v| v.as_str()) else {
        return RoundParse::Round(Round::Single);
    };
    let s = s.to_ascii_lowercase();
    if s.contains("double") {
        RoundParse::Round(Round::Double)
    } else if s.contains("final") || s.contains("tiebreaker") {
        RoundParse::Unsupported
    } else {
        RoundParse::Round(Round::Single)
    }
}

fn strip_markup(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut depth = 0usize;
    for ch in s.chars() {
        match ch {
            '<' => depth += 1,
            '>' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(ch),
            _ => {}
        }
    }
    out.trim().to_string()
}

/// Parse a Jeopardy dump: a JSON array of objects or one object per line,
/// with `question` (or `clue`), `answer`, `value`, `round` and `category`
/// fields. Values may be numbers or strings like `"$1,200"`; a record with no
/// value (e.g. Final Jeopardy) is skipped and reported.
pub fn parse_jeopardy_file<R: Read>(mut source: R) -> Result<(Vec<RawClue>, ParseReport)> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let objects: Vec<serde_json::Value> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("jeopardy file is not a JSON array: {e}")))?
    } else {
        let mut out = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            if !line.trim().is_empty() {
                out.push(
                    serde_json::from_str(line.trim())
                        .map_err(|e| Error::format(offset, format!("bad jeopardy record: {e}")))?,
                );
            }
            offset += line.len() as u64;
        }
        out
    };

    let mut report = ParseReport::default();
    let mut clues = Vec::new();
    for obj in &objects {
        report.rows += 1;
        let Some(map) = obj.as_object() else {
            report.skipped_malformed += 1;
            continue;
        };
        let question = map.get("question").or_else(|| map.get("clue")).and_then(|v| v.as_str());
        let answer = map.get("answer").and_then(|v| v.as_str()).map(strip_markup);
        let (Some(question), Some(answer)) = (question, answer) else {
            report.skipped_malformed += 1;
            continue;
        };
        if answer.is_empty() {
            report.skipped_blank_answer += 1;
            continue;
        }
        let round = match parse_round(map.get("round")) {
            RoundParse::Round(r) => r,
            RoundParse::Unsupported => {
                report.skipped_unsupported_round += 1;
                continue;
            }
        };
        let Some(value) = json_value_usd(map.get("value")) else {
            report.skipped_missing_value += 1;
            continue;
        };
        let category = map.get("category").and_then(|v| v.as_str()).unwrap_or_default();
        clues.push(RawClue::jeopardy(
            strip_markup(question),
            answer,
            value,
            round,
            category,
        ));
        report.parsed += 1;
    }
    Ok((clues, report))
}

/// Lowercased word tokens: runs of letters, keeping apostrophes and hyphens
/// only inside a word. Everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    fn is_joiner(c: char) -> bool {
        matches!(c, '\'' | '\u{2019}' | '-')
    }
    let mut tokens = Vec::new();
    let mut flush = |piece: &str| {
        let word = piece.trim_matches(is_joiner);
        if word.chars().any(char::is_alphabetic) {
            tokens.push(word.replace('\u{2019}', "'").to_lowercase());
        }
    };
    let mut start = None;
    for (i, c) in text.char_indices() {
        let inside = c.is_alphabetic() || is_joiner(c);
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                flush(&text[s..i]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        flush(&text[s..]);
    }
    tokens
}

/// Set of lowercase tokens removed before opacity is computed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stoplist {
    words: HashSet<String>,
    digest: String,
}

const DEFAULT_STOPLIST: &str = include_str!("data/stopwords.txt");

impl Default for Stoplist {
    fn default() -> Self {
        Stoplist::parse(DEFAULT_STOPLIST)
    }
}

impl Stoplist {
    /// One token per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or_default().trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
        Stoplist {
            words,
            digest: sha256_hex(text.as_bytes()),
        }
    }

    pub fn from_reader<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Ok(Stoplist::parse(&text))
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        let words: HashSet<String> = words.into_iter().map(Into::into).collect();
        let mut sorted: Vec<_> = words.iter().cloned().collect();
        sorted.sort();
        Stoplist {
            digest: sha256_hex(sorted.join("\n").as_bytes()),
            words,
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }
}

/// External part-of-speech annotation: token -> tag.
#[derive(Debug, Clone, Default)]
pub struct PosTags {
    tags: HashMap<String, String>,
    digest: String,
}

impl PosTags {
    /// Parse `token<TAB>TAG` lines. Penn (`NN*`, `VB*`, `JJ*`) and universal
    /// (`NOUN`, `PROPN`, `VERB`, `ADJ`) tags count as content words.
    pub fn from_reader<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let tags = text
            .lines()
            .filter_map(|l| {
                let (tok, tag) = l.split_once('\t')?;
                Some((tok.trim().to_lowercase(), tag.trim().to_string()))
            })
            .filter(|(t, _)| !t.is_empty())
            .collect();
        Ok(PosTags {
            tags,
            digest: sha256_hex(text.as_bytes()),
        })
    }

    pub fn from_pairs<I: IntoIterator<Item = (S, S)>, S: Into<String>>(pairs: I) -> Self {
        PosTags {
            tags: pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
            digest: String::new(),
        }
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Noun, verb or adjective. Untagged tokens are not content words.
    pub fn is_content(&self, token: &str) -> bool {
        self.tags.get(token).is_some_and(|tag| {
            let tag = tag.to_ascii_uppercase();
            tag.starts_with("NN")
                || tag.starts_with("VB")
                || tag.starts_with("JJ")
                || matches!(tag.as_str(), "NOUN" | "PROPN" | "VERB" | "ADJ")
        })
    }
}

/// Split `text` into raw tokens and the content tokens that survive the
/// stoplist and, when given, the part-of-speech filter.
pub fn tokenize_and_filter(text: &str, stoplist: &Stoplist, pos: Option<&PosTags>) -> (Vec<String>, Vec<String>) {
    let raw = tokenize(text);
    let content = raw
        .iter()
        .filter(|t| !stoplist.contains(t))
        .filter(|t| pos.is_none_or(|p| p.is_content(t)))
        .cloned()
        .collect();
    (raw, content)
}

/// Monday 1 through Saturday 6; Sunday rates like Friday.
pub fn label_crossword_difficulty(weekday: Weekday) -> u8 {
    match weekday {
        Weekday::Mon => 1,
        Weekday::Tue => 2,
        Weekday::Wed => 3,
        Weekday::Thu => 4,
        Weekday::Fri => 5,
        Weekday::Sat => 6,
        Weekday::Sun => 5,
    }
}

/// Board value to difficulty 1..=8, rounds collapsed. Daily-double wagers and
/// legacy half-scale values have no label.
pub fn label_jeopardy_difficulty(dollar_value: u32) -> Option<u8> {
    const VALUES: [u32; 8] = [200, 400, 600, 800, 1000, 1200, 1600, 2000];
    VALUES.iter().position(|&v| v == dollar_value).map(|i| i as u8 + 1)
}

/// Word-play clues end in a question mark.
pub fn classify_pun(clue_text: &str) -> bool {
    clue_text.trim().ends_with('?')
}

/// Reasons a raw clue does not become a record, in the order they are tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    UnlabeledDifficulty,
    NonWordClue,
    Abbreviation,
    MultiwordAnswer,
    OovAnswer,
    NoValidClueTokens,
    EmptyAfterFilter,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub unlabeled_difficulty: u64,
    pub non_word_clue: u64,
    pub abbreviation: u64,
    pub multiword_answer: u64,
    pub oov_answer: u64,
    pub no_valid_clue_tokens: u64,
    pub empty_after_filter: u64,
}

impl ExclusionReport {
    pub fn add(&mut self, reason: ExclusionReason) {
        *self.slot(reason) += 1;
    }

    pub fn count(&self, reason: ExclusionReason) -> u64 {
        match reason {
            ExclusionReason::UnlabeledDifficulty => self.unlabeled_difficulty,
            ExclusionReason::NonWordClue => self.non_word_clue,
            ExclusionReason::Abbreviation => self.abbreviation,
            ExclusionReason::MultiwordAnswer => self.multiword_answer,
            ExclusionReason::OovAnswer => self.oov_answer,
            ExclusionReason::NoValidClueTokens => self.no_valid_clue_tokens,
            ExclusionReason::EmptyAfterFilter => self.empty_after_filter,
        }
    }

    fn slot(&mut self, reason: ExclusionReason) -> &mut u64 {
        match reason {
            ExclusionReason::UnlabeledDifficulty => &mut self.unlabeled_difficulty,
            ExclusionReason::NonWordClue => &mut self.non_word_clue,
            ExclusionReason::Abbreviation => &mut self.abbreviation,
            ExclusionReason::MultiwordAnswer => &mut self.multiword_answer,
            ExclusionReason::OovAnswer => &mut self.oov_answer,
            ExclusionReason::NoValidClueTokens => &mut self.no_valid_clue_tokens,
            ExclusionReason::EmptyAfterFilter => &mut self.empty_after_filter,
        }
    }

    pub fn merge(&mut self, other: &ExclusionReport) {
        self.unlabeled_difficulty += other.unlabeled_difficulty;
        self.non_word_clue += other.non_word_clue;
        self.abbreviation += other.abbreviation;
        self.multiword_answer += other.multiword_answer;
        self.oov_answer += other.oov_answer;
        self.no_valid_clue_tokens += other.no_valid_clue_tokens;
        self.empty_after_filter += other.empty_after_filter;
    }

    pub fn total(&self) -> u64 {
        self.unlabeled_difficulty
            + self.non_word_clue
            + self.abbreviation
            + self.multiword_answer
            + self.oov_answer
            + self.no_valid_clue_tokens
            + self.empty_after_filter
    }
}

/// An analysis-ready clue–answer pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    /// Position of the source row in the parsed input.
    pub id: u64,
    pub source: Source,
    pub clue: String,
    /// Answer as spelled in the embedding space.
    pub answer: String,
    /// Tokens before stoplist / part-of-speech filtering.
    pub raw_tokens: Vec<String>,
    /// Filtered tokens, as spelled in the embedding space.
    pub content_tokens: Vec<String>,
    pub difficulty: u8,
    pub is_pun: bool,
}

impl QuestionRecord {
    /// Check the record invariants against `space`.
    pub fn validate(&self, space: &EmbeddingSpace) -> Result<()> {
        let fail = |m: String| Err(Error::Schema(format!("record {}: {m}", self.id)));
        if self.content_tokens.is_empty() {
            return fail("no content tokens".into());
        }
        if self.answer.is_empty() || self.answer.chars().any(char::is_whitespace) {
            return fail(format!("answer `{}` is not one token", self.answer));
        }
        if !(1..=self.source.max_difficulty()).contains(&self.difficulty) {
            return fail(format!("difficulty {} out of range", self.difficulty));
        }
        if self.is_pun && self.source != Source::Crossword {
            return fail("pun flag on a non-crossword record".into());
        }
        if let Some(t) = std::iter::once(&self.answer)
            .chain(&self.content_tokens)
            .find(|t| !space.contains(t))
        {
            return fail(format!("`{t}` is not in the embedding space"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub stoplist: Stoplist,
    pub pos_tags: Option<PosTags>,
    /// Case-insensitive substrings marking abbreviation clues (crossword only).
    pub abbreviation_markers: Vec<String>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            stoplist: Stoplist::default(),
            pos_tags: None,
            abbreviation_markers: vec!["abbr".to_string()],
        }
    }
}

impl CorpusConfig {
    /// JSON summary for stage headers.
    pub fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "stoplist_digest": self.stoplist.digest(),
            "stoplist_size": self.stoplist.len(),
            "pos_tags_digest": self.pos_tags.as_ref().map(PosTags::digest),
            "abbreviation_markers": self.abbreviation_markers,
        })
    }

    fn is_abbreviation(&self, clue: &str) -> bool {
        let lower = clue.to_lowercase();
        self.abbreviation_markers
            .iter()
            .any(|m| !m.is_empty() && lower.contains(&m.to_lowercase()))
    }
}

fn difficulty_of(raw: &RawClue) -> Option<u8> {
    match raw.source {
        Source::Crossword => raw.date.map(|d| label_crossword_difficulty(d.weekday())),
        Source::Jeopardy => raw.dollar_value.and_then(label_jeopardy_difficulty),
    }
}

fn build_record(
    id: u64,
    raw: &RawClue,
    space: &EmbeddingSpace,
    config: &CorpusConfig,
) -> std::result::Result<QuestionRecord, ExclusionReason> {
    let difficulty = difficulty_of(raw).ok_or(ExclusionReason::UnlabeledDifficulty)?;
    let raw_tokens = tokenize(&raw.clue_text);
    if raw_tokens.is_empty() {
        return Err(ExclusionReason::NonWordClue);
    }
    if raw.source == Source::Crossword && config.is_abbreviation(&raw.clue_text) {
        return Err(ExclusionReason::Abbreviation);
    }
    let answer_tokens = tokenize(&raw.answer_text);
    if answer_tokens.len() > 1 {
        return Err(ExclusionReason::MultiwordAnswer);
    }
    let answer = answer_tokens
        .first()
        .and_then(|a| space.resolve(a))
        .ok_or(ExclusionReason::OovAnswer)?;
    if !raw_tokens.iter().any(|t| space.resolve(t).is_some()) {
        return Err(ExclusionReason::NoValidClueTokens);
    }
    let content_tokens: Vec<String> = raw_tokens
        .iter()
        .filter(|t| !config.stoplist.contains(t))
        .filter(|t| config.pos_tags.as_ref().is_none_or(|p| p.is_content(t)))
        .filter_map(|t| space.resolve(t).map(str::to_string))
        .collect();
    if content_tokens.is_empty() {
        return Err(ExclusionReason::EmptyAfterFilter);
    }
    Ok(QuestionRecord {
        id,
        source: raw.source,
        clue: raw.clue_text.clone(),
        answer: answer.to_string(),
        raw_tokens,
        content_tokens,
        difficulty,
        is_pun: raw.source == Source::Crossword && classify_pun(&raw.clue_text),
    })
}

/// Filter and label raw clues. Every input is either returned as a record or
/// counted under exactly one exclusion reason; output keeps input order.
pub fn build_corpus(
    raws: &[RawClue],
    space: &EmbeddingSpace,
    config: &CorpusConfig,
) -> (Vec<QuestionRecord>, ExclusionReport) {
    let outcomes: Vec<_> = raws
        .par_iter()
        .enumerate()
        .map(|(i, raw)| build_record(i as u64, raw, space, config))
        .collect();
    let mut report = ExclusionReport::default();
    let mut records = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(reason) => report.add(reason),
        }
    }
    (records, report)
}
