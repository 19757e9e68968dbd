//! Per-record difficulty features: the three opacity models, obscurity,
//! answer density and the auxiliary question features.

use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::QuestionRecord;
use crate::embedding::{cosine, cosine_to_degrees, squared_distance, squared_norm, vector_sum, EmbeddingSpace};
use crate::lexicon::{obscurity_of, FrequencyTable};
use crate::{Error, Result};

/// Opacity of one clue–answer pair under the three models, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpacityProfile {
    /// Answer vs. the unnormalized sum of clue vectors.
    pub synergistic_deg: f64,
    /// Answer vs. clue words taken one at a time and averaged.
    pub independent_deg: f64,
    /// Answer vs. the single most similar clue word.
    pub keyword_deg: f64,
}

/// How the independent model combines per-word similarities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndependentAggregation {
    /// arccos of the mean cosine.
    #[default]
    CosineMean,
    /// Mean of the per-word angles.
    AngleMean,
}

fn synergistic_from_vectors(answer: &[f32], clue: &[&[f32]]) -> Result<Option<f64>> {
    let sum = vector_sum(clue)?;
    if sum.is_zero_norm() {
        return Ok(None);
    }
    cosine(answer, &sum.values).map(|c| Some(cosine_to_degrees(c)))
}

/// Independent and keyword angles from the same per-word cosines, so that
/// keyword <= independent holds exactly.
fn independent_and_keyword(answer: &[f32], clue: &[&[f32]], agg: IndependentAggregation) -> Result<(f64, f64)> {
    if clue.is_empty() {
        return Err(Error::argument("no clue vectors"));
    }
    let cosines = clue.iter().map(|q| cosine(answer, q)).collect::<Result<Vec<f64>>>()?;
    let max = cosines.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = cosines.iter().copied().fold(f64::INFINITY, f64::min);
    let keyword = cosine_to_degrees(max);
    let independent = match agg {
        IndependentAggregation::CosineMean => {
            let mean = cosines.iter().sum::<f64>() / cosines.len() as f64;
            cosine_to_degrees(mean.clamp(min, max))
        }
        IndependentAggregation::AngleMean => {
            let mean = cosines.iter().map(|&c| cosine_to_degrees(c)).sum::<f64>() / cosines.len() as f64;
            mean.clamp(keyword, cosine_to_degrees(min))
        }
    };
    Ok((independent, keyword))
}

/// All three models from raw vectors. `None` when the clue vectors cancel.
pub fn profile_from_vectors(
    answer: &[f32],
    clue: &[&[f32]],
    agg: IndependentAggregation,
) -> Result<Option<OpacityProfile>> {
    let (independent_deg, keyword_deg) = independent_and_keyword(answer, clue, agg)?;
    Ok(
        synergistic_from_vectors(answer, clue)?.map(|synergistic_deg| OpacityProfile {
            synergistic_deg,
            independent_deg,
            keyword_deg,
        }),
    )
}

fn lookup<'s, S: AsRef<str>>(
    space: &'s EmbeddingSpace,
    tokens: &[S],
    answer: &str,
) -> Result<(&'s [f32], Vec<&'s [f32]>)> {
    let missing = |w: &str| Error::argument(format!("`{w}` is not in the embedding space"));
    let a = space.get(answer).ok_or_else(|| missing(answer))?;
    if tokens.is_empty() {
        return Err(Error::argument("no content tokens"));
    }
    let q = tokens
        .iter()
        .map(|t| space.get(t.as_ref()).ok_or_else(|| missing(t.as_ref())))
        .collect::<Result<Vec<_>>>()?;
    Ok((a, q))
}

/// Angle between the answer and the sum of the clue vectors. `Ok(None)` when
/// the sum has zero norm.
pub fn synergistic_opacity<S: AsRef<str>>(
    space: &EmbeddingSpace,
    content_tokens: &[S],
    answer: &str,
) -> Result<Option<f64>> {
    let (a, q) = lookup(space, content_tokens, answer)?;
    synergistic_from_vectors(a, &q)
}

pub fn independent_opacity<S: AsRef<str>>(
    space: &EmbeddingSpace,
    content_tokens: &[S],
    answer: &str,
    agg: IndependentAggregation,
) -> Result<f64> {
    let (a, q) = lookup(space, content_tokens, answer)?;
    independent_and_keyword(a, &q, agg).map(|(i, _)| i)
}

pub fn keyword_opacity<S: AsRef<str>>(space: &EmbeddingSpace, content_tokens: &[S], answer: &str) -> Result<f64> {
    let (a, q) = lookup(space, content_tokens, answer)?;
    independent_and_keyword(a, &q, IndependentAggregation::CosineMean).map(|(_, k)| k)
}

pub fn opacity_profile<S: AsRef<str>>(
    space: &EmbeddingSpace,
    content_tokens: &[S],
    answer: &str,
    agg: IndependentAggregation,
) -> Result<Option<OpacityProfile>> {
    let (a, q) = lookup(space, content_tokens, answer)?;
    profile_from_vectors(a, &q, agg)
}

/// How shared letters are normalized when testing for word stems.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMeasure {
    /// Shared letters over the shorter word's length ("etch"/"etched" = 1.0).
    #[default]
    Shorter,
    /// Shared letters over the longer word's length ("etch"/"etched" = 0.67).
    Longer,
}

/// Fraction of letters two words share, counting repeated letters as often as
/// both words contain them. Case-insensitive.
pub fn letter_overlap(a: &str, b: &str, measure: OverlapMeasure) -> f64 {
    let mut x: Vec<char> = a.chars().flat_map(char::to_lowercase).collect();
    let mut y: Vec<char> = b.chars().flat_map(char::to_lowercase).collect();
    if x.is_empty() || y.is_empty() {
        return 0.0;
    }
    x.sort_unstable();
    y.sort_unstable();
    let (mut i, mut j, mut shared) = (0, 0, 0usize);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let denom = match measure {
        OverlapMeasure::Shorter => x.len().min(y.len()),
        OverlapMeasure::Longer => x.len().max(y.len()),
    };
    shared as f64 / denom as f64
}

/// Candidates sharing at least `threshold` of their letters with the answer
/// are treated as stems of it and skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapRule {
    pub measure: OverlapMeasure,
    pub threshold: f64,
}

impl Default for OverlapRule {
    fn default() -> Self {
        OverlapRule {
            measure: OverlapMeasure::Shorter,
            threshold: 0.9,
        }
    }
}

impl OverlapRule {
    pub fn excludes(&self, answer: &str, candidate: &str) -> bool {
        letter_overlap(answer, candidate, self.measure) >= self.threshold
    }
}

/// Nearest non-stem neighbour of an answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHit {
    pub neighbor: String,
    pub distance: f64,
    /// `1 / distance`.
    pub density: f64,
}

/// Answers per matrix product. The candidate matrix is repacked on every
/// product, so larger blocks amortize that cost.
const DENSITY_BLOCK: usize = 256;
/// Smallest upper estimates tracked on the first pass.
const PROBE: usize = 8;

#[derive(Default)]
struct Scratch {
    upper: Vec<f64>,
    lower: Vec<f64>,
    probe: Vec<(f64, usize)>,
}

/// Exact nearest-neighbour search over a fixed candidate vocabulary.
///
/// Distances are first estimated for a block of answers at once with an
/// `f32` matrix product (`|a|^2 + |c|^2 - 2 a.c`). Every candidate whose
/// estimate, widened by a rounding-error bound, could still be the nearest
/// survivor is then re-measured exactly in `f64`, so results match a plain
/// scan bit for bit. Ties go to the lexicographically smaller word.
#[derive(Debug)]
pub struct DensityIndex<'s> {
    space: &'s EmbeddingSpace,
    rule: OverlapRule,
    /// Space row of each candidate, sorted by word.
    rows: Vec<usize>,
    packed: Vec<f32>,
    sq_norms: Vec<f64>,
    norms: Vec<f64>,
    err_coef: f64,
}

impl<'s> DensityIndex<'s> {
    /// Index the given words. Words absent from the space are ignored.
    pub fn new<'w, I>(space: &'s EmbeddingSpace, vocab: I, rule: OverlapRule) -> Self
    where
        I: IntoIterator<Item = &'w str>,
    {
        let words: BTreeSet<&str> = vocab.into_iter().filter(|w| space.contains(w)).collect();
        let dim = space.dim();
        let rows: Vec<usize> = words.iter().filter_map(|w| space.index_of(w)).collect();
        let mut packed = Vec::with_capacity(rows.len() * dim);
        for &r in &rows {
            packed.extend_from_slice(space.row(r));
        }
        let sq_norms: Vec<f64> = rows.iter().map(|&r| squared_norm(space.row(r))).collect();
        let norms = sq_norms.iter().map(|s| s.sqrt()).collect();
        DensityIndex {
            space,
            rule,
            rows,
            packed,
            sq_norms,
            norms,
            // |fl(a.c) - a.c| <= dim * 2^-24 * |a||c| for any summation order;
            // doubled for the 2 a.c term and doubled again for headroom.
            err_coef: 4.0 * (dim as f64 + 2.0) * f64::from(f32::EPSILON) / 2.0,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Nearest surviving candidate for one answer.
    pub fn nearest(&self, answer: &str) -> Result<Option<DensityHit>> {
        Ok(self.nearest_batch(&[answer])?.pop().flatten())
    }

    /// Nearest surviving candidate for each answer, in input order. The result
    /// does not depend on how the work is split across threads.
    pub fn nearest_batch<S: AsRef<str> + Sync>(&self, answers: &[S]) -> Result<Vec<Option<DensityHit>>> {
        let rows = answers
            .iter()
            .map(|a| {
                self.space
                    .index_of(a.as_ref())
                    .ok_or_else(|| Error::argument(format!("`{}` is not in the embedding space", a.as_ref())))
            })
            .collect::<Result<Vec<usize>>>()?;
        if self.rows.is_empty() {
            return Ok(vec![None; rows.len()]);
        }
        Ok(rows
            .par_chunks(DENSITY_BLOCK)
            .flat_map_iter(|block| self.search_block(block))
            .collect())
    }

    fn search_block(&self, answer_rows: &[usize]) -> Vec<Option<DensityHit>> {
        let dim = self.space.dim();
        let m = self.rows.len();
        let bs = answer_rows.len();
        let mut a = Vec::with_capacity(bs * dim);
        for &r in answer_rows {
            a.extend_from_slice(self.space.row(r));
        }
        let mut gram = vec![0f32; bs * m];
        // gram[i, j] = a_i . c_j; candidates are rows of `packed`, read transposed.
        unsafe {
            matrixmultiply::sgemm(
                bs,
                dim,
                m,
                1.0,
                a.as_ptr(),
                dim as isize,
                1,
                self.packed.as_ptr(),
                1,
                dim as isize,
                0.0,
                gram.as_mut_ptr(),
                m as isize,
                1,
            );
        }
        let mut scratch = Scratch::default();
        answer_rows
            .iter()
            .enumerate()
            .map(|(i, &row)| self.search_one(row, &gram[i * m..(i + 1) * m], &mut scratch))
            .collect()
    }

    fn search_one(&self, answer_row: usize, gram: &[f32], scratch: &mut Scratch) -> Option<DensityHit> {
        let m = self.rows.len();
        let answer = self.space.row(answer_row);
        let answer_word = self.space.word(answer_row);
        let a2 = squared_norm(answer);
        let c1 = self.err_coef * a2.sqrt();

        let Scratch { upper, lower, probe } = scratch;
        upper.resize(m, 0.0);
        lower.resize(m, 0.0);
        let norms = self.sq_norms.iter().zip(&self.norms);
        for (((u, l), (&s2, &n)), &g) in upper.iter_mut().zip(lower.iter_mut()).zip(norms).zip(gram) {
            let estimate = a2 + s2 - 2.0 * f64::from(g);
            let slack = c1 * n + 1e-12 * (a2 + s2);
            *u = estimate + slack;
            *l = estimate - slack;
        }

        // Exact squared distance if candidate j survives the filters.
        let survivor = |j: usize| -> Option<f64> {
            let row = self.rows[j];
            if row == answer_row {
                return None;
            }
            let word = self.space.word(row);
            if word == answer_word || self.rule.excludes(answer_word, word) {
                return None;
            }
            let d2 = squared_distance(answer, self.space.row(row));
            (d2 > 0.0).then_some(d2)
        };

        // Upper bound on the nearest survivor's squared distance, from the
        // first survivor in increasing upper-estimate order. The few smallest
        // estimates are tracked in one pass; a full sort is the fallback.
        probe.clear();
        let mut worst = f64::INFINITY;
        for (j, &u) in upper.iter().enumerate() {
            if u < worst || probe.len() < PROBE {
                let at = probe.partition_point(|&(v, _)| v <= u);
                probe.insert(at, (u, j));
                probe.truncate(PROBE);
                if probe.len() == PROBE {
                    worst = probe[PROBE - 1].0;
                }
            }
        }
        let mut bound = probe.iter().find(|&&(_, j)| survivor(j).is_some()).map(|&(u, _)| u);
        if bound.is_none() && m > probe.len() {
            let mut order: Vec<(f64, usize)> = upper.iter().copied().zip(0..).collect();
            order.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            bound = order[probe.len()..]
                .iter()
                .find(|&&(_, j)| survivor(j).is_some())
                .map(|&(u, _)| u);
        }
        let bound = bound?;

        let mut best: Option<(f64, usize)> = None;
        for (j, &l) in lower.iter().enumerate() {
            if l > bound {
                continue;
            }
            if let Some(d2) = survivor(j) {
                if best.is_none_or(|(b, _)| d2 < b) {
                    best = Some((d2, j));
                }
            }
        }
        best.map(|(d2, j)| {
            let distance = d2.sqrt();
            DensityHit {
                neighbor: self.space.word(self.rows[j]).to_string(),
                distance,
                density: 1.0 / distance,
            }
        })
    }
}

/// Inverse distance from `answer` to its nearest neighbour in `search_vocab`
/// that is not a stem of it. `Ok(None)` when every candidate is filtered out.
pub fn answer_density<'w, I>(
    space: &EmbeddingSpace,
    answer: &str,
    search_vocab: I,
    rule: OverlapRule,
) -> Result<Option<DensityHit>>
where
    I: IntoIterator<Item = &'w str>,
{
    if !space.contains(answer) {
        return Err(Error::argument(format!("`{answer}` is not in the embedding space")));
    }
    let index = DensityIndex::new(space, search_vocab.into_iter().filter(|w| *w != answer), rule);
    if index.is_empty() {
        return Err(Error::argument("density search vocabulary is empty"));
    }
    index.nearest(answer)
}

pub const DEFAULT_CONJUNCTIONS: [&str; 6] = ["and", "or", "but", "nor", "yet", "so"];

/// Length, rarest-word and conjunction features of the question text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionFeatures {
    pub q_length: usize,
    /// log10 fpm of the rarest raw token found in the lexicon.
    pub min_q_word_freq: Option<f64>,
    pub conjunction_freq: f64,
}

/// Features computed on raw tokens: conjunctions are stopwords and would
/// vanish from the content tokens.
pub fn question_features(
    record: &QuestionRecord,
    table: &FrequencyTable,
    conjunctions: &HashSet<String>,
) -> Result<QuestionFeatures> {
    let raw = &record.raw_tokens;
    if raw.is_empty() {
        return Err(Error::argument(format!("record {} has no raw tokens", record.id)));
    }
    let min_fpm = raw
        .iter()
        .filter_map(|t| table.fpm_folded(t))
        .fold(None, |m: Option<f64>, f| Some(m.map_or(f, |m| m.min(f))));
    let conj = raw.iter().filter(|t| conjunctions.contains(t.as_str())).count();
    Ok(QuestionFeatures {
        q_length: raw.len(),
        min_q_word_freq: min_fpm.map(f64::log10),
        conjunction_freq: conj as f64 / raw.len() as f64,
    })
}

/// Predictor values for one record; `None` marks an undefined feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub obscurity: Option<f64>,
    /// Synergistic angle in degrees.
    pub opacity: Option<f64>,
    pub answer_density: Option<f64>,
    pub q_length: usize,
    pub min_q_word_freq: Option<f64>,
    pub conjunction_freq: f64,
    pub difficulty: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFlag {
    /// Answer or some clue tokens are missing from the scoring space.
    OutOfVocabulary,
    ZeroNormClueSum,
    NoDensityCandidate,
    AnswerNotInLexicon,
    NoQuestionWordInLexicon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub record: QuestionRecord,
    pub opacity: Option<OpacityProfile>,
    pub answer_fpm: Option<f64>,
    pub density_neighbor: Option<String>,
    pub features: FeatureVector,
    pub flags: Vec<ScoreFlag>,
}

/// Which words the density search scans.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityVocab {
    /// Distinct corpus answers.
    Corpus,
    /// Corpus answers plus the most frequent lexicon words.
    #[default]
    Top100k,
    /// The whole embedding space.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub independent: IndependentAggregation,
    pub density_vocab: DensityVocab,
    /// Lexicon words added by [`DensityVocab::Top100k`].
    pub top_words: usize,
    pub overlap: OverlapRule,
    pub conjunctions: Vec<String>,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            independent: IndependentAggregation::default(),
            density_vocab: DensityVocab::default(),
            top_words: 100_000,
            overlap: OverlapRule::default(),
            conjunctions: DEFAULT_CONJUNCTIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn density_vocab<'s>(
    records: &'s [QuestionRecord],
    space: &'s EmbeddingSpace,
    table: &'s FrequencyTable,
    config: &ScoreConfig,
) -> Vec<&'s str> {
    match config.density_vocab {
        DensityVocab::Full => space.iter().map(|e| e.word).collect(),
        DensityVocab::Corpus | DensityVocab::Top100k => {
            let mut words: Vec<&str> = records.iter().map(|r| r.answer.as_str()).collect();
            if config.density_vocab == DensityVocab::Top100k {
                words.extend(
                    table
                        .top_words(config.top_words)
                        .into_iter()
                        .filter_map(|w| space.resolve(w)),
                );
            }
            words
        }
    }
}

/// Score every record. Undefined metrics are flagged, never imputed, and no
/// record is dropped. Output order follows input order.
pub fn score_corpus(
    records: &[QuestionRecord],
    space: &EmbeddingSpace,
    table: &FrequencyTable,
    config: &ScoreConfig,
) -> Result<Vec<ScoredRecord>> {
    let answers: Vec<&str> = records
        .iter()
        .map(|r| r.answer.as_str())
        .filter(|a| space.contains(a))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = DensityIndex::new(space, density_vocab(records, space, table, config), config.overlap);
    let hits: HashMap<&str, Option<DensityHit>> = answers.iter().copied().zip(index.nearest_batch(&answers)?).collect();
    let conjunctions: HashSet<String> = config.conjunctions.iter().cloned().collect();

    records
        .par_iter()
        .map(|record| {
            let mut flags = Vec::new();
            let answer_vec = space.get(&record.answer);
            let clue: Vec<&[f32]> = record.content_tokens.iter().filter_map(|t| space.get(t)).collect();
            if answer_vec.is_none() || clue.len() < record.content_tokens.len() {
                flags.push(ScoreFlag::OutOfVocabulary);
            }
            let opacity = match answer_vec {
                Some(a) if !clue.is_empty() => {
                    let p = profile_from_vectors(a, &clue, config.independent)?;
                    if p.is_none() {
                        flags.push(ScoreFlag::ZeroNormClueSum);
                    }
                    p
                }
                _ => None,
            };
            let hit = hits.get(record.answer.as_str()).cloned().flatten();
            if hit.is_none() {
                flags.push(ScoreFlag::NoDensityCandidate);
            }
            let answer_fpm = table.fpm_folded(&record.answer);
            if answer_fpm.is_none() {
                flags.push(ScoreFlag::AnswerNotInLexicon);
            }
            let q = question_features(record, table, &conjunctions)?;
            if q.min_q_word_freq.is_none() {
                flags.push(ScoreFlag::NoQuestionWordInLexicon);
            }
            Ok(ScoredRecord {
                record: record.clone(),
                opacity,
                answer_fpm,
                density_neighbor: hit.as_ref().map(|h| h.neighbor.clone()),
                features: FeatureVector {
                    obscurity: answer_fpm.map(obscurity_of),
                    opacity: opacity.map(|p| p.synergistic_deg),
                    answer_density: hit.map(|h| h.density),
                    q_length: q.q_length,
                    min_q_word_freq: q.min_q_word_freq,
                    conjunction_freq: q.conjunction_freq,
                    difficulty: record.difficulty,
                },
                flags,
            })
        })
        .collect()
}
