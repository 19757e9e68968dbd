//! Standardized OLS regression of difficulty on question features.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analysis::{pearson_r, Correlation};
use crate::metrics::{FeatureVector, ScoredRecord};
use crate::{Error, Result};

/// Relative pivot size below which a QR column counts as collinear.
const RANK_TOLERANCE: f64 = 1e-10;

/// z-scores with the population standard deviation.
pub fn standardize(values: &[f64], name: &str) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::argument(format!(
            "cannot standardize {name}: fewer than two values"
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var.is_nan() || var <= 0.0 {
        return Err(Error::ZeroVariance(name.to_string()));
    }
    let sd = var.sqrt();
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    Obscurity,
    Opacity,
    AnswerDensity,
    QLength,
    MinQWordFreq,
    ConjunctionFreq,
}

impl Predictor {
    pub fn name(self) -> &'static str {
        match self {
            Predictor::Obscurity => "obscurity",
            Predictor::Opacity => "opacity",
            Predictor::AnswerDensity => "answer_density",
            Predictor::QLength => "q_length",
            Predictor::MinQWordFreq => "min_q_word_freq",
            Predictor::ConjunctionFreq => "conjunction_freq",
        }
    }

    pub fn value(self, f: &FeatureVector) -> Option<f64> {
        match self {
            Predictor::Obscurity => f.obscurity,
            Predictor::Opacity => f.opacity,
            Predictor::AnswerDensity => f.answer_density,
            Predictor::QLength => Some(f.q_length as f64),
            Predictor::MinQWordFreq => f.min_q_word_freq,
            Predictor::ConjunctionFreq => Some(f.conjunction_freq),
        }
        .filter(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub label: String,
    pub predictors: Vec<Predictor>,
}

impl ModelSpec {
    pub fn new(label: impl Into<String>, predictors: Vec<Predictor>) -> Result<Self> {
        for (i, p) in predictors.iter().enumerate() {
            if predictors[..i].contains(p) {
                return Err(Error::argument(format!("predictor {} listed twice", p.name())));
            }
        }
        Ok(ModelSpec {
            label: label.into(),
            predictors,
        })
    }

    /// Models I to IV, each nesting the previous one.
    pub fn suite() -> Vec<ModelSpec> {
        use Predictor::*;
        let mut specs = Vec::new();
        let steps: [(&str, &[Predictor]); 4] = [
            ("I", &[Obscurity]),
            ("II", &[Opacity]),
            ("III", &[AnswerDensity]),
            ("IV", &[QLength, MinQWordFreq, ConjunctionFreq]),
        ];
        let mut acc = Vec::new();
        for (label, add) in steps {
            acc.extend_from_slice(add);
            specs.push(ModelSpec {
                label: label.to_string(),
                predictors: acc.clone(),
            });
        }
        specs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

impl Coefficient {
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p)
    }
}

pub fn significance_stars(p: f64) -> &'static str {
    if p <= 1e-4 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub label: String,
    pub n: usize,
    /// Rows left out because a predictor or the response was undefined.
    pub dropped: usize,
    pub intercept: Coefficient,
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub rss: f64,
    pub aic: f64,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Ordinary least squares with an intercept. `columns[j]` holds predictor `j`
/// for every row. Solved by Householder QR; the covariance is
/// `sigma^2 (R^T R)^-1` with `sigma^2 = RSS / (n - k - 1)`, and
/// `AIC = n (ln(2 pi RSS / n) + 1) + 2 (k + 2)`.
pub fn least_squares(label: &str, columns: &[Vec<f64>], names: &[&str], y: &[f64]) -> Result<RegressionFit> {
    let n = y.len();
    let k = columns.len();
    if names.len() != k || columns.iter().any(|c| c.len() != n) {
        return Err(Error::argument("design columns and response differ in length"));
    }
    if n <= k + 1 {
        return Err(Error::argument(format!(
            "{label}: {n} rows cannot fit {k} predictors and an intercept"
        )));
    }
    let p = k + 1;
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let yv = DVector::from_column_slice(y);

    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let deficient: Vec<String> = (0..p)
        .filter(|&j| {
            let pivot = r[(j, j)].abs();
            pivot.is_nan() || pivot <= RANK_TOLERANCE * scale.max(1.0)
        })
        .map(|j| {
            if j == 0 {
                "intercept".to_string()
            } else {
                names[j - 1].to_string()
            }
        })
        .collect();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient(deficient));
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty.rows(0, p).into_owned())
        .ok_or_else(|| Error::RankDeficient(names.iter().map(|s| s.to_string()).collect()))?;

    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let df = (n - p) as f64;
    let sigma2 = rss / df;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient(names.iter().map(|s| s.to_string()).collect()))?;
    let cov_diag: Vec<f64> = (0..p).map(|j| r_inv.row(j).norm_squared() * sigma2).collect();

    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::argument(e.to_string()))?;
    let coef = |j: usize, name: &str| {
        let estimate = beta[j];
        let se = cov_diag[j].sqrt();
        let t = estimate / se;
        let p = if t.is_finite() {
            (2.0 * dist.sf(t.abs())).min(1.0)
        } else if t.is_nan() {
            1.0
        } else {
            0.0
        };
        Coefficient {
            name: name.to_string(),
            estimate,
            se,
            t,
            p,
        }
    };
    let nf = n as f64;
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(RegressionFit {
        label: label.to_string(),
        n,
        dropped: 0,
        intercept: coef(0, "intercept"),
        coefficients: (1..p).map(|j| coef(j, names[j - 1])).collect(),
        r_squared,
        rss,
        aic: nf * ((2.0 * std::f64::consts::PI * rss / nf).ln() + 1.0) + 2.0 * (k as f64 + 2.0),
    })
}

/// Fit `spec` on the rows where every predictor is defined. Predictors and
/// the difficulty response are standardized over those rows.
pub fn fit_ols(rows: &[FeatureVector], spec: &ModelSpec) -> Result<RegressionFit> {
    let complete: Vec<(&FeatureVector, Vec<f64>)> = rows
        .iter()
        .filter_map(|r| {
            let vals: Option<Vec<f64>> = spec.predictors.iter().map(|p| p.value(r)).collect();
            vals.map(|v| (r, v))
        })
        .collect();
    let n = complete.len();
    let y_raw: Vec<f64> = complete.iter().map(|(r, _)| r.difficulty as f64).collect();
    if n < 2 {
        return Err(Error::argument(format!(
            "model {}: fewer than two complete rows",
            spec.label
        )));
    }
    let y = standardize(&y_raw, "difficulty")?;
    let mut columns = Vec::with_capacity(spec.predictors.len());
    for (j, p) in spec.predictors.iter().enumerate() {
        let raw: Vec<f64> = complete.iter().map(|(_, v)| v[j]).collect();
        columns.push(standardize(&raw, p.name())?);
    }
    let names: Vec<&str> = spec.predictors.iter().map(|p| p.name()).collect();
    let mut fit = least_squares(&spec.label, &columns, &names, &y)?;
    fit.dropped = rows.len() - n;
    Ok(fit)
}

/// Which rows each model of a suite is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowPolicy {
    /// Each model uses every row where its own predictors are defined.
    #[default]
    PerModel,
    /// Every model uses the rows complete for the largest model.
    Common,
}

/// Which token count feeds the question-length predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QLengthCount {
    #[default]
    Raw,
    Content,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub rows: RowPolicy,
    pub q_length: QLengthCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub models: Vec<RegressionFit>,
    /// Correlation between raw obscurity and opacity over rows defining both.
    pub obscurity_opacity: Option<Correlation>,
}

/// Fit models I to IV on a scored corpus.
pub fn run_model_suite(scored: &[ScoredRecord], config: SuiteConfig) -> Result<SuiteReport> {
    let specs = ModelSpec::suite();
    let mut rows: Vec<FeatureVector> = scored
        .iter()
        .map(|s| {
            let mut f = s.features;
            if config.q_length == QLengthCount::Content {
                f.q_length = s.record.content_tokens.len();
            }
            f
        })
        .collect();
    if config.rows == RowPolicy::Common {
        let full = &specs[specs.len() - 1].predictors;
        rows.retain(|r| full.iter().all(|p| p.value(r).is_some()));
    }
    let models = specs.iter().map(|s| fit_ols(&rows, s)).collect::<Result<Vec<_>>>()?;
    let (ob, op): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| Some((Predictor::Obscurity.value(r)?, Predictor::Opacity.value(r)?)))
        .unzip();
    Ok(SuiteReport {
        config,
        models,
        obscurity_opacity: pearson_r(&ob, &op).ok(),
    })
}

/// Three decimals, without a sign on values that round to zero.
fn fixed3(x: f64) -> String {
    let s = format!("{x:.3}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// Plain-text table: one column per model, estimates with stars above
/// standard errors in parentheses, then N, R² and AIC.
pub fn render_table(title: &str, fits: &[RegressionFit]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for f in fits {
        for c in &f.coefficients {
            if !names.contains(&c.name.as_str()) {
                names.push(&c.name);
            }
        }
    }
    names.push("intercept");
    let width = 18;
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "Dependent variable: standardized difficulty");
    let _ = write!(out, "{:<20}", "");
    for f in fits {
        let _ = write!(out, "{:>width$}", format!("({})", f.label));
    }
    out.push('\n');
    for name in &names {
        let find = |f: &RegressionFit| -> Option<Coefficient> {
            if *name == "intercept" {
                Some(f.intercept.clone())
            } else {
                f.coefficient(name).cloned()
            }
        };
        let _ = write!(out, "{name:<20}");
        for f in fits {
            let cell = find(f)
                .map(|c| format!("{}{}", fixed3(c.estimate), c.stars()))
                .unwrap_or_default();
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
        let _ = write!(out, "{:<20}", "");
        for f in fits {
            let cell = find(f).map(|c| format!("({})", fixed3(c.se))).unwrap_or_default();
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
    }
    type Cell = fn(&RegressionFit) -> String;
    let footer: [(&str, Cell); 3] = [
        ("N", |f| f.n.to_string()),
        ("R2", |f| format!("{:.3}", f.r_squared)),
        ("AIC", |f| format!("{:.4e}", f.aic)),
    ];
    for (label, cell) in footer {
        let _ = write!(out, "{label:<20}");
        for f in fits {
            let _ = write!(out, "{:>width$}", cell(f));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "Note: *** p <= 0.0001; ** p <= 0.01; * p <= 0.05");
    out
}

/// CSV with one row per (model, term).
pub fn render_csv(fits: &[RegressionFit]) -> String {
    let mut out = String::from("model,term,estimate,se,t,p,stars,n,r_squared,aic\n");
    for f in fits {
        for c in f.coefficients.iter().chain(std::iter::once(&f.intercept)) {
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{:e},{:e},{},{},{:e},{:e}",
                f.label,
                c.name,
                c.estimate,
                c.se,
                c.t,
                c.p,
                c.stars(),
                f.n,
                f.r_squared,
                f.aic
            );
        }
    }
    out
}
