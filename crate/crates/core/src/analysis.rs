//! Statistics over scored corpora: null models, grouped means with bootstrap
//! errors, Welch t-tests, correlations, frequency medians and 2-D KDE.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{QuestionRecord, Source};
use crate::embedding::{cosine, cosine_to_degrees, EmbeddingSpace};
use crate::metrics::{profile_from_vectors, IndependentAggregation, OpacityProfile, ScoredRecord};
use crate::rng::{rng_for, stream_tag};
use crate::{Error, Result};

pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const DEFAULT_NULL_REPETITIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpacityModel {
    Synergistic,
    Independent,
    Keyword,
}

impl OpacityModel {
    pub const ALL: [OpacityModel; 3] = [
        OpacityModel::Synergistic,
        OpacityModel::Independent,
        OpacityModel::Keyword,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpacityModel::Synergistic => "synergistic",
            OpacityModel::Independent => "independent",
            OpacityModel::Keyword => "keyword",
        }
    }

    pub fn angle(self, p: &OpacityProfile) -> f64 {
        match self {
            OpacityModel::Synergistic => p.synergistic_deg,
            OpacityModel::Independent => p.independent_deg,
            OpacityModel::Keyword => p.keyword_deg,
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (n - 1 denominator).
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Exact median; the mean of the two middle values for even length.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::argument("median of an empty set"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => (2.0 * dist.sf(t.abs())).min(1.0),
        Err(_) => f64::NAN,
    }
}

/// Two-sample test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
}

/// Welch's unequal-variance two-sample t-test, two-sided.
pub fn t_test(sample_a: &[f64], sample_b: &[f64]) -> Result<TTest> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::argument("t-test needs at least two values per sample"));
    }
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let (ma, mb) = (mean(sample_a), mean(sample_b));
    let va = sample_variance(sample_a) / na;
    let vb = sample_variance(sample_b) / nb;
    let se2 = va + vb;
    let (t, df, p) = if se2 == 0.0 {
        if ma == mb {
            (0.0, na + nb - 2.0, 1.0)
        } else {
            (f64::INFINITY.copysign(ma - mb), na + nb - 2.0, 0.0)
        }
    } else {
        let t = (ma - mb) / se2.sqrt();
        let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
        (t, df, two_sided_p(t, df))
    };
    Ok(TTest {
        t,
        df,
        p,
        n_a: sample_a.len(),
        n_b: sample_b.len(),
        mean_a: ma,
        mean_b: mb,
    })
}

/// Standard deviation of `b` resample means (resampling with replacement at
/// the sample size). Each resample draws from its own stream derived from
/// `seed`, so the result is independent of thread count.
pub fn bootstrap_se(values: &[f64], b: usize, seed: u64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::argument("bootstrap of an empty sample"));
    }
    if b < 2 || values.len() == 1 {
        return Ok(0.0);
    }
    let n = values.len();
    let tag = stream_tag("bootstrap");
    let means: Vec<f64> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_for(seed, tag, rep);
            (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect();
    Ok(sample_variance(&means).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Sample Pearson correlation with a two-sided p value from the t transform.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::argument("correlation needs equal-length samples"));
    }
    if x.len() < 3 {
        return Err(Error::argument("correlation needs at least three pairs"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::argument("correlation is undefined for a constant sample"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let n = x.len();
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok(Correlation { r, p, n })
}

/// Outcome of re-pairing answers with clues at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModelResult {
    pub model: OpacityModel,
    pub repetitions: usize,
    pub seed: u64,
    /// Records with the answer and at least one clue token in the space.
    pub n: usize,
    /// Mean angle under the true pairing.
    pub data_mean: f64,
    /// Mean over repetitions of each repetition's mean angle.
    pub null_mean: f64,
    /// Standard deviation of the repetition means.
    pub null_sd: f64,
    pub null_se: f64,
    pub repetition_means: Vec<f64>,
    /// Welch test of true-pairing angles against the pooled null angles.
    pub data_vs_null: TTest,
    #[serde(skip)]
    pub data_angles: Vec<f64>,
    #[serde(skip)]
    pub null_angles: Vec<f64>,
}

fn pair_angle(answer: &[f32], clue: &[&[f32]], model: OpacityModel, agg: IndependentAggregation) -> Option<f64> {
    if model == OpacityModel::Keyword {
        let best = clue
            .iter()
            .filter_map(|q| cosine(answer, q).ok())
            .fold(f64::NEG_INFINITY, f64::max);
        return Some(cosine_to_degrees(best));
    }
    profile_from_vectors(answer, clue, agg)
        .ok()
        .flatten()
        .map(|p| model.angle(&p))
}

/// Null-model opacity: each repetition applies a seeded uniform permutation
/// of answers across records and recomputes `model`. Pairs whose clue sum
/// cancels are left out of that repetition's mean.
pub fn null_model_mean(
    records: &[QuestionRecord],
    space: &EmbeddingSpace,
    model: OpacityModel,
    agg: IndependentAggregation,
    seed: u64,
    repetitions: usize,
) -> Result<NullModelResult> {
    if repetitions < 1 {
        return Err(Error::argument("null model needs at least one repetition"));
    }
    let usable: Vec<(&[f32], Vec<&[f32]>)> = records
        .iter()
        .filter_map(|r| {
            let a = space.get(&r.answer)?;
            let q: Vec<&[f32]> = r.content_tokens.iter().filter_map(|t| space.get(t)).collect();
            (!q.is_empty()).then_some((a, q))
        })
        .collect();
    let n = usable.len();
    if n < 2 {
        return Err(Error::argument("null model needs at least two usable records"));
    }
    let data_angles: Vec<f64> = usable
        .par_iter()
        .filter_map(|(a, q)| pair_angle(a, q, model, agg))
        .collect();

    let tag = stream_tag("null-model");
    let per_rep: Vec<Vec<f64>> = (0..repetitions as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_for(seed, tag, rep);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            usable
                .iter()
                .zip(&perm)
                .filter_map(|((_, q), &j)| pair_angle(usable[j].0, q, model, agg))
                .collect()
        })
        .collect();
    let repetition_means: Vec<f64> = per_rep.iter().map(|a| mean(a)).collect();
    let null_mean = mean(&repetition_means);
    let null_sd = if repetitions > 1 {
        sample_variance(&repetition_means).sqrt()
    } else {
        0.0
    };
    let null_angles: Vec<f64> = per_rep.into_iter().flatten().collect();
    Ok(NullModelResult {
        model,
        repetitions,
        seed,
        n,
        data_mean: mean(&data_angles),
        null_mean,
        null_sd,
        null_se: null_sd / (repetitions as f64).sqrt(),
        repetition_means,
        data_vs_null: t_test(&data_angles, &null_angles)?,
        data_angles,
        null_angles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupKey {
    All,
    Difficulty { difficulty: u8 },
    Pun { is_pun: bool },
    FrequencyBin { bin: u8, difficulty: u8 },
}

impl GroupKey {
    fn label(&self) -> String {
        match self {
            GroupKey::All => "all".into(),
            GroupKey::Difficulty { difficulty } => format!("difficulty={difficulty}"),
            GroupKey::Pun { is_pun } => format!("pun={is_pun}"),
            GroupKey::FrequencyBin { bin, difficulty } => format!("bin={bin},difficulty={difficulty}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    All,
    Difficulty,
    PunFlag,
    FrequencyBinDifficulty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelStat {
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub key: GroupKey,
    /// Records with a defined opacity profile.
    pub n: usize,
    pub synergistic: ModelStat,
    pub independent: ModelStat,
    pub keyword: ModelStat,
    /// Independent minus synergistic mean angle.
    pub synergy_gap: f64,
    pub median_fpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTable {
    pub groups: Vec<GroupSummary>,
    /// Quartile cut points of log10 answer fpm, when binning was used.
    pub frequency_cutpoints: Option<[f64; 3]>,
    pub warnings: Vec<String>,
}

/// Quartile cut points of log10 answer fpm over every record with a frequency.
pub fn frequency_quartiles(scored: &[ScoredRecord]) -> Result<[f64; 3]> {
    let mut logs: Vec<f64> = scored.iter().filter_map(|s| s.answer_fpm).map(f64::log10).collect();
    if logs.is_empty() {
        return Err(Error::argument("no record has an answer frequency"));
    }
    logs.sort_by(f64::total_cmp);
    Ok([0.25, 0.5, 0.75].map(|q| quantile_sorted(&logs, q)))
}

/// Bin 1 (rarest) to 4 (most common).
pub fn frequency_bin(fpm: f64, cutpoints: &[f64; 3]) -> u8 {
    let x = fpm.log10();
    1 + cutpoints.iter().filter(|&&c| x > c).count() as u8
}

fn summarize(key: GroupKey, members: &[&ScoredRecord], bootstrap: usize, seed: u64) -> Result<Option<GroupSummary>> {
    let profiles: Vec<&OpacityProfile> = members.iter().filter_map(|s| s.opacity.as_ref()).collect();
    if profiles.is_empty() {
        return Ok(None);
    }
    let stat = |model: OpacityModel| -> Result<ModelStat> {
        let values: Vec<f64> = profiles.iter().map(|p| model.angle(p)).collect();
        let stream_seed = seed ^ stream_tag(&format!("{}/{}", key.label(), model.name()));
        Ok(ModelStat {
            mean: mean(&values),
            se: bootstrap_se(&values, bootstrap, stream_seed)?,
        })
    };
    let synergistic = stat(OpacityModel::Synergistic)?;
    let independent = stat(OpacityModel::Independent)?;
    let keyword = stat(OpacityModel::Keyword)?;
    let fpms: Vec<f64> = members.iter().filter_map(|s| s.answer_fpm).collect();
    Ok(Some(GroupSummary {
        key,
        n: profiles.len(),
        synergy_gap: independent.mean - synergistic.mean,
        synergistic,
        independent,
        keyword,
        median_fpm: median(&fpms).ok(),
    }))
}

/// Mean angles per group with bootstrap standard errors. Groups expected from
/// the data's label range but left empty are omitted and listed in `warnings`.
pub fn group_means(scored: &[ScoredRecord], grouping: Grouping, bootstrap: usize, seed: u64) -> Result<GroupTable> {
    if scored.is_empty() {
        return Err(Error::argument("cannot group an empty corpus"));
    }
    let max_difficulty = scored
        .iter()
        .map(|s| s.record.source.max_difficulty())
        .max()
        .unwrap_or(0);
    let has_crossword = scored.iter().any(|s| s.record.source == Source::Crossword);
    let mut cutpoints = None;

    let mut buckets: BTreeMap<GroupKey, Vec<&ScoredRecord>> = BTreeMap::new();
    match grouping {
        Grouping::All => {
            buckets.insert(GroupKey::All, scored.iter().collect());
        }
        Grouping::Difficulty => {
            for d in 1..=max_difficulty {
                buckets.insert(GroupKey::Difficulty { difficulty: d }, Vec::new());
            }
            for s in scored {
                buckets
                    .entry(GroupKey::Difficulty {
                        difficulty: s.record.difficulty,
                    })
                    .or_default()
                    .push(s);
            }
        }
        Grouping::PunFlag => {
            buckets.insert(GroupKey::Pun { is_pun: false }, Vec::new());
            if has_crossword {
                buckets.insert(GroupKey::Pun { is_pun: true }, Vec::new());
            }
            for s in scored {
                buckets
                    .entry(GroupKey::Pun {
                        is_pun: s.record.is_pun,
                    })
                    .or_default()
                    .push(s);
            }
        }
        Grouping::FrequencyBinDifficulty => {
            let cuts = frequency_quartiles(scored)?;
            cutpoints = Some(cuts);
            for bin in 1..=4 {
                for d in 1..=max_difficulty {
                    buckets.insert(GroupKey::FrequencyBin { bin, difficulty: d }, Vec::new());
                }
            }
            for s in scored {
                if let Some(f) = s.answer_fpm {
                    let key = GroupKey::FrequencyBin {
                        bin: frequency_bin(f, &cuts),
                        difficulty: s.record.difficulty,
                    };
                    buckets.entry(key).or_default().push(s);
                }
            }
        }
    }

    let mut groups = Vec::new();
    let mut warnings = Vec::new();
    for (key, members) in &buckets {
        match summarize(*key, members, bootstrap, seed)? {
            Some(g) => groups.push(g),
            None => warnings.push(format!("group {} is empty; omitted", key.label())),
        }
    }
    Ok(GroupTable {
        groups,
        frequency_cutpoints: cutpoints,
        warnings,
    })
}

/// Median answer frequency (per million) over the selected records.
pub fn median_frequency<F>(scored: &[ScoredRecord], selector: F) -> Result<f64>
where
    F: Fn(&ScoredRecord) -> bool,
{
    let fpms: Vec<f64> = scored
        .iter()
        .filter(|s| selector(s))
        .filter_map(|s| s.answer_fpm)
        .collect();
    median(&fpms).map_err(|_| Error::argument("no selected record has an answer frequency"))
}

/// Evaluation grid for [`kde_2d`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// Data range padded by four bandwidths on each side.
    Auto { nx: usize, ny: usize },
    Fixed {
        x_min: f64,
        x_max: f64,
        nx: usize,
        y_min: f64,
        y_max: f64,
        ny: usize,
    },
}

/// Gaussian product-kernel density on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeGrid {
    /// Opacity axis, degrees.
    pub x: Vec<f64>,
    /// log10 frequency-per-million axis.
    pub y: Vec<f64>,
    /// `density[i][j]` at `(x[i], y[j])`.
    pub density: Vec<Vec<f64>>,
    pub bandwidth: (f64, f64),
    pub n: usize,
}

impl KdeGrid {
    /// Trapezoidal integral over the grid.
    pub fn mass(&self) -> f64 {
        let trap_w = |axis: &[f64], i: usize| {
            let n = axis.len();
            let left = if i > 0 { axis[i] - axis[i - 1] } else { 0.0 };
            let right = if i + 1 < n { axis[i + 1] - axis[i] } else { 0.0 };
            (left + right) / 2.0
        };
        let mut total = 0.0;
        for (i, row) in self.density.iter().enumerate() {
            let wx = trap_w(&self.x, i);
            for (j, d) in row.iter().enumerate() {
                total += wx * trap_w(&self.y, j) * d;
            }
        }
        total
    }

    /// Grid point with the highest density.
    pub fn mode(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for (i, row) in self.density.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                if d > best_v {
                    best_v = d;
                    best = (i, j);
                }
            }
        }
        best
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

const KDE_CHUNK: usize = 4096;

/// Per-axis Scott bandwidths: `n^(-1/6)` times the axis standard deviation.
pub fn scott_bandwidth(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::argument("KDE needs at least two points"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (sx, sy) = (sample_variance(&xs).sqrt(), sample_variance(&ys).sqrt());
    if !(sx > 0.0 && sy > 0.0) {
        return Err(Error::argument("KDE points have no spread along one axis"));
    }
    let factor = (points.len() as f64).powf(-1.0 / 6.0);
    Ok((factor * sx, factor * sy))
}

/// Fixed grid covering every point set with four bandwidths of margin,
/// so each set's estimate can be compared cell by cell.
pub fn shared_grid(sets: &[&[(f64, f64)]], nx: usize, ny: usize) -> Result<GridSpec> {
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for set in sets {
        let (hx, hy) = scott_bandwidth(set)?;
        for &(x, y) in set.iter() {
            x_min = x_min.min(x - 4.0 * hx);
            x_max = x_max.max(x + 4.0 * hx);
            y_min = y_min.min(y - 4.0 * hy);
            y_max = y_max.max(y + 4.0 * hy);
        }
    }
    if !x_min.is_finite() {
        return Err(Error::argument("shared grid needs at least one point set"));
    }
    Ok(GridSpec::Fixed {
        x_min,
        x_max,
        nx,
        y_min,
        y_max,
        ny,
    })
}

/// Two-dimensional Gaussian KDE with per-axis Scott bandwidths
/// (`n^(-1/6)` times the axis standard deviation).
pub fn kde_2d(points: &[(f64, f64)], grid: GridSpec) -> Result<KdeGrid> {
    let n = points.len();
    if n < 2 {
        return Err(Error::argument("KDE needs at least two points"));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::argument("KDE points must be finite"));
    }
    // Canonical order makes the sum independent of input order.
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (hx, hy) = scott_bandwidth(&pts)?;

    let (gx, gy) = match grid {
        GridSpec::Auto { nx, ny } => {
            let (x0, x1) = (xs[0], xs[n - 1]);
            let (y0, y1) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            (
                linspace(x0 - 4.0 * hx, x1 + 4.0 * hx, nx),
                linspace(y0 - 4.0 * hy, y1 + 4.0 * hy, ny),
            )
        }
        GridSpec::Fixed {
            x_min,
            x_max,
            nx,
            y_min,
            y_max,
            ny,
        } => (linspace(x_min, x_max, nx), linspace(y_min, y_max, ny)),
    };
    let (nx, ny) = (gx.len(), gy.len());
    if nx == 0 || ny == 0 {
        return Err(Error::argument("KDE grid must have at least one point per axis"));
    }

    // density = Kx^T Ky, accumulated over chunks of points in a fixed order.
    let mut acc = vec![0f64; nx * ny];
    let mut kx = Vec::new();
    let mut ky = Vec::new();
    for chunk in pts.chunks(KDE_CHUNK) {
        kx.clear();
        ky.clear();
        for &(px, py) in chunk {
            kx.extend(gx.iter().map(|g| (-0.5 * ((g - px) / hx).powi(2)).exp()));
            ky.extend(gy.iter().map(|g| (-0.5 * ((g - py) / hy).powi(2)).exp()));
        }
        unsafe {
            matrixmultiply::dgemm(
                nx,
                chunk.len(),
                ny,
                1.0,
                kx.as_ptr(),
                1,
                nx as isize,
                ky.as_ptr(),
                ny as isize,
                1,
                1.0,
                acc.as_mut_ptr(),
                ny as isize,
                1,
            );
        }
    }
    let norm = 1.0 / (n as f64 * 2.0 * std::f64::consts::PI * hx * hy);
    let density = acc
        .chunks(ny)
        .map(|row| row.iter().map(|v| v * norm).collect())
        .collect();
    Ok(KdeGrid {
        x: gx,
        y: gy,
        density,
        bandwidth: (hx, hy),
        n,
    })
}
