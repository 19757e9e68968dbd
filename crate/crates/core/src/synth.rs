//! Deterministic synthetic lexicons and clue corpora.
//!
//! Words are pseudo-words built from consonant-vowel syllables, grouped into
//! topics whose vectors share a random centre. Frequencies follow a Zipf law
//! over the generated rank order. Clue generators pick clue words from the
//! answer's topic less often as difficulty rises, so opacity grows with
//! difficulty, and harder clues favour rarer answers.

use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::index::sample;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};
use rayon::prelude::*;
use serde_json::json;

use crate::corpus::{
    label_crossword_difficulty, label_jeopardy_difficulty, QuestionRecord, RawClue, Round, Source, Stoplist,
};
use crate::embedding::EmbeddingSpace;
use crate::lexicon::FrequencyTable;
use crate::rng::{rng_for, stream_tag};
use crate::Result;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const SYLLABLES_PER_WORD: u32 = 3;

/// Frequent function words given vectors and frequencies but no topic.
pub const FUNCTION_WORDS: [(&str, f64); 9] = [
    ("the", 50_000.0),
    ("of", 30_000.0),
    ("and", 28_000.0),
    ("a", 25_000.0),
    ("in", 20_000.0),
    ("for", 9_000.0),
    ("but", 4_500.0),
    ("or", 4_000.0),
    ("so", 2_000.0),
];

/// `n` distinct six-letter pseudo-words in a seed-dependent order, none of
/// them on the default stoplist.
pub fn pseudo_words(n: usize, seed: u64) -> Vec<String> {
    let stoplist = Stoplist::default();
    let syllables: Vec<[u8; 2]> = CONSONANTS
        .iter()
        .flat_map(|&c| VOWELS.iter().map(move |&v| [c, v]))
        .collect();
    let base = syllables.len();
    let total = base.pow(SYLLABLES_PER_WORD);
    let spare = 64;
    assert!(n + spare <= total, "at most {} pseudo-words available", total - spare);
    let mut rng = rng_for(seed, stream_tag("pseudo-words"), 0);
    sample(&mut rng, total, n + spare)
        .into_iter()
        .map(|mut code| {
            let mut w = String::with_capacity(6);
            for _ in 0..SYLLABLES_PER_WORD {
                let s = syllables[code % base];
                w.push(s[0] as char);
                w.push(s[1] as char);
                code /= base;
            }
            w
        })
        .filter(|w| !stoplist.contains(w))
        .take(n)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexiconSpec {
    pub words: usize,
    pub dim: usize,
    pub topics: usize,
    /// Standard deviation of a word's offset from its topic centre, relative
    /// to the unit-variance centre.
    pub spread: f32,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for LexiconSpec {
    fn default() -> Self {
        LexiconSpec {
            words: 5000,
            dim: 50,
            topics: 100,
            spread: 1.0,
            zipf_exponent: 1.0,
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

#[derive(Debug)]
pub struct SynthLexicon {
    pub space: EmbeddingSpace,
    pub table: FrequencyTable,
    /// Content words in frequency-rank order (most frequent first).
    pub words: Vec<String>,
    pub topic_of: Vec<usize>,
    pub by_topic: Vec<Vec<usize>>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f32) -> Vec<f32> {
    (0..dim)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng) as f32)
        .collect()
}

pub fn synth_lexicon(spec: &LexiconSpec) -> Result<SynthLexicon> {
    let words = pseudo_words(spec.words, spec.seed);
    let topics = spec.topics.max(1);
    let centre_tag = stream_tag("topic-centre");
    let centres: Vec<Vec<f32>> = (0..topics as u64)
        .map(|t| gaussian(&mut rng_for(spec.seed, centre_tag, t), spec.dim, 1.0))
        .collect();
    let mut topic_rng = rng_for(spec.seed, stream_tag("topic-assign"), 0);
    let topic_of: Vec<usize> = (0..words.len()).map(|_| topic_rng.random_range(0..topics)).collect();
    let mut by_topic = vec![Vec::new(); topics];
    for (i, &t) in topic_of.iter().enumerate() {
        by_topic[t].push(i);
    }

    let word_tag = stream_tag("word-vector");
    let mut vectors: Vec<(String, Vec<f32>)> = words
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut rng = rng_for(spec.seed, word_tag, i as u64);
            let noise = gaussian(&mut rng, spec.dim, spec.spread);
            let v = centres[topic_of[i]].iter().zip(noise).map(|(c, e)| c + e).collect();
            (w.clone(), v)
        })
        .collect();
    let function_tag = stream_tag("function-vector");
    for (i, (w, _)) in FUNCTION_WORDS.iter().enumerate() {
        let mut rng = rng_for(spec.seed, function_tag, i as u64);
        vectors.push((w.to_string(), gaussian(&mut rng, spec.dim, 1.0)));
    }
    let (space, _) = EmbeddingSpace::from_entries(spec.dim, vectors)?;

    let harmonic: f64 = (1..=words.len()).map(|r| (r as f64).powf(-spec.zipf_exponent)).sum();
    let scale = 1.0e6 / harmonic.max(1.0);
    let table = FrequencyTable::from_pairs(
        "synthetic",
        words
            .iter()
            .enumerate()
            .map(|(r, w)| (w.clone(), scale * ((r + 1) as f64).powf(-spec.zipf_exponent)))
            .chain(FUNCTION_WORDS.iter().map(|&(w, f)| (w.to_string(), f))),
    );
    Ok(SynthLexicon {
        space,
        table,
        words,
        topic_of,
        by_topic,
    })
}

impl SynthLexicon {
    /// Frequencies as `word\tfpm` lines.
    pub fn write_frequencies<W: Write>(&self, out: W) -> Result<()> {
        self.table.write_tsv(out)
    }

    /// Answer rank for a clue at relative difficulty `level` in [0, 1];
    /// harder clues draw from a flatter Zipf and so reach rarer words.
    fn answer_index(&self, rng: &mut ChaCha8Rng, level: f64) -> usize {
        let exponent = 1.1 - 0.4 * level;
        let zipf = Zipf::new(self.words.len() as f64, exponent).expect("valid Zipf parameters");
        (zipf.sample(rng) as usize).clamp(1, self.words.len()) - 1
    }

    /// Clue text and answer. The share of clue words from the answer's topic
    /// falls from 0.9 at the easiest level to 0.4 at the hardest, halved for puns.
    fn clue_for(&self, rng: &mut ChaCha8Rng, level: f64, pun: bool) -> (String, String) {
        let answer = self.answer_index(rng, level);
        let mut same_topic = 0.9 - 0.5 * level;
        if pun {
            same_topic /= 2.0;
        }
        let topic = &self.by_topic[self.topic_of[answer]];
        let count = rng.random_range(1..=4);
        let mut parts: Vec<&str> = Vec::new();
        for _ in 0..count {
            if rng.random_bool(0.3) {
                parts.push(FUNCTION_WORDS[rng.random_range(0..6)].0);
            }
            let pick = if topic.len() > 1 && rng.random_bool(same_topic) {
                *topic.choose(rng).expect("topic is not empty")
            } else {
                rng.random_range(0..self.words.len())
            };
            if pick != answer {
                parts.push(&self.words[pick]);
            }
        }
        if parts.iter().all(|p| FUNCTION_WORDS.iter().any(|(f, _)| f == p)) {
            let other = (answer + 1) % self.words.len();
            parts.push(&self.words[other]);
        }
        let mut text = parts.join(" ");
        if let Some(first) = text.get(..1) {
            text = first.to_uppercase() + &text[1..];
        }
        if pun {
            text.push('?');
        }
        (text, self.words[answer].clone())
    }

    /// Clean crossword clues dated across 2010-2016. Sunday clues are
    /// generated at the same rate as other weekdays.
    pub fn crossword_clues(&self, n: usize, seed: u64) -> Vec<RawClue> {
        let tag = stream_tag("crossword-clue");
        let first_monday = NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date");
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(seed, tag, i);
                let date = first_monday + Duration::days(rng.random_range(0..7 * 365));
                let difficulty = label_crossword_difficulty(date.weekday());
                let level = (difficulty - 1) as f64 / 5.0;
                let pun = rng.random_bool(0.08);
                let (clue, answer) = self.clue_for(&mut rng, level, pun);
                RawClue::crossword(date, clue, answer)
            })
            .collect()
    }

    /// Clean Jeopardy clues on the standard single and double boards.
    pub fn jeopardy_clues(&self, n: usize, seed: u64) -> Vec<RawClue> {
        const SINGLE: [u32; 5] = [200, 400, 600, 800, 1000];
        const DOUBLE: [u32; 5] = [400, 800, 1200, 1600, 2000];
        let tag = stream_tag("jeopardy-clue");
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(seed, tag, i);
                let (round, values) = if rng.random_bool(0.5) {
                    (Round::Single, SINGLE)
                } else {
                    (Round::Double, DOUBLE)
                };
                let value = values[rng.random_range(0..5)];
                let difficulty = label_jeopardy_difficulty(value).expect("board value");
                let level = (difficulty - 1) as f64 / 7.0;
                let (clue, answer) = self.clue_for(&mut rng, level, false);
                let category = self.words[rng.random_range(0..self.words.len())].to_uppercase();
                RawClue::jeopardy(clue, answer, value, round, category)
            })
            .collect()
    }

    fn two_words(&self, rng: &mut ChaCha8Rng) -> (&str, &str) {
        let a = &self.words[rng.random_range(0..self.words.len())];
        let b = &self.words[rng.random_range(0..self.words.len())];
        (a, b)
    }

    /// Crossword CSV (`date,clue,answer`) mixing clean clues with rows that
    /// exercise every parse skip and exclusion reason.
    pub fn write_crossword_csv<W: Write>(&self, clean: usize, seed: u64, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| crate::Error::Io(std::io::Error::other(e));
        w.write_record(["date", "clue", "answer"]).map_err(csv_err)?;
        let clues = self.crossword_clues(clean, seed);
        let mut rng = rng_for(seed, stream_tag("crossword-noise"), 0);
        for (i, c) in clues.iter().enumerate() {
            let date = c.date.expect("crossword date").format("%Y-%m-%d").to_string();
            w.write_record([date.as_str(), &c.clue_text, &c.answer_text.to_uppercase()])
                .map_err(csv_err)?;
            if i % 25 == 24 {
                let (a, b) = self.two_words(&mut rng);
                let noise: [[String; 3]; 8] = [
                    [date.clone(), format!("{a} {b}"), String::new()],
                    ["someday".into(), format!("{a} {b}"), b.to_uppercase()],
                    [date.clone(), format!("{a} org. (abbr.)"), b.to_uppercase()],
                    [date.clone(), "1, 2, 3 ...".into(), b.to_uppercase()],
                    [
                        date.clone(),
                        format!("{a} {b}"),
                        format!("{} {}", b.to_uppercase(), a.to_uppercase()),
                    ],
                    [date.clone(), format!("{a} {b}"), "XYQZZ".into()],
                    [date.clone(), "Xqj zzqx".into(), b.to_uppercase()],
                    [date.clone(), "The and of".into(), b.to_uppercase()],
                ];
                let row = &noise[(i / 25) % noise.len()];
                w.write_record(row).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Jeopardy JSON array mixing clean clues with final-round, unvalued,
    /// off-board, markup and string-valued entries.
    pub fn write_jeopardy_json<W: Write>(&self, clean: usize, seed: u64, mut out: W) -> Result<()> {
        let clues = self.jeopardy_clues(clean, seed);
        let mut rng = rng_for(seed, stream_tag("jeopardy-noise"), 0);
        let mut items = Vec::with_capacity(clues.len() + clues.len() / 20);
        for (i, c) in clues.iter().enumerate() {
            let round = match c.round {
                Some(Round::Double) => "Double Jeopardy!",
                _ => "Jeopardy!",
            };
            let value = c.dollar_value.expect("board value");
            let value = if i % 7 == 3 { json!(usd(value)) } else { json!(value) };
            let question = if i % 11 == 5 {
                format!("<i>{}</i>", c.clue_text)
            } else {
                c.clue_text.clone()
            };
            items.push(json!({
                "category": c.category,
                "question": question,
                "answer": c.answer_text,
                "value": value,
                "round": round,
            }));
            if i % 20 == 19 {
                let (a, b) = self.two_words(&mut rng);
                let noise = [
                    json!({"category": "FINAL", "question": format!("{a} {b}"), "answer": b, "value": null, "round": "Final Jeopardy!"}),
                    json!({"category": "X", "question": format!("{a} {b}"), "answer": b, "round": "Jeopardy!"}),
                    json!({"category": "X", "question": format!("{a} {b}"), "answer": b, "value": 300, "round": "Jeopardy!"}),
                    json!({"category": "X", "question": format!("{a} {b}"), "answer": "", "value": 400, "round": "Jeopardy!"}),
                    json!({"category": "X", "question": format!("{a} {b}"), "answer": format!("the {a} {b}"), "value": 400, "round": "Jeopardy!"}),
                ];
                items.push(noise[(i / 20) % noise.len()].clone());
            }
        }
        serde_json::to_writer_pretty(&mut out, &items)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

fn usd(value: u32) -> String {
    if value >= 1000 {
        format!("${},{:03}", value / 1000, value % 1000)
    } else {
        format!("${value}")
    }
}

/// Records whose clue vectors each lie within `max_angle_deg` of their
/// answer vector, together with the space they live in. Answers are
/// independent Gaussian directions.
pub fn near_clue_corpus(
    records: usize,
    dim: usize,
    max_angle_deg: f64,
    seed: u64,
) -> Result<(EmbeddingSpace, Vec<QuestionRecord>)> {
    let tag = stream_tag("near-clue");
    let mut entries: Vec<(String, Vec<f32>)> = Vec::new();
    let mut out = Vec::with_capacity(records);
    for i in 0..records {
        let mut rng = rng_for(seed, tag, i as u64);
        let a = unit(gaussian(&mut rng, dim, 1.0));
        let answer = format!("answer{i}");
        let mut tokens = Vec::new();
        for j in 0..rng.random_range(1..=3) {
            // Gram-Schmidt a random direction against the answer.
            let g = gaussian(&mut rng, dim, 1.0);
            let along: f64 = g.iter().zip(&a).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
            let u = unit(g.iter().zip(&a).map(|(x, y)| x - (along as f32) * y).collect());
            let theta = rng.random_range(0.0..max_angle_deg).to_radians();
            let v: Vec<f32> = a
                .iter()
                .zip(&u)
                .map(|(x, y)| (theta.cos() as f32) * x + (theta.sin() as f32) * y)
                .collect();
            let token = format!("clue{i}x{j}");
            entries.push((token.clone(), v));
            tokens.push(token);
        }
        entries.push((answer.clone(), a));
        out.push(QuestionRecord {
            id: i as u64,
            source: Source::Crossword,
            clue: tokens.join(" "),
            answer,
            raw_tokens: tokens.clone(),
            content_tokens: tokens,
            difficulty: 1 + (i % 6) as u8,
            is_pun: false,
        });
    }
    let (space, _) = EmbeddingSpace::from_entries(dim, entries)?;
    Ok((space, out))
}

fn unit(v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt() as f32;
    v.into_iter().map(|x| x / norm).collect()
}
