mod common;

use common::{normal_equations, zscore, Lcg};
use quizdim::metrics::FeatureVector;
use quizdim::regress::{fit_ols, least_squares, ModelSpec, Predictor};
use quizdim::Error;

const ALL: [Predictor; 6] = [
    Predictor::Obscurity,
    Predictor::Opacity,
    Predictor::AnswerDensity,
    Predictor::QLength,
    Predictor::MinQWordFreq,
    Predictor::ConjunctionFreq,
];

fn synthetic_rows(rng: &mut Lcg, n: usize) -> Vec<FeatureVector> {
    (0..n)
        .map(|_| {
            let obscurity = 2.0 + rng.normal();
            let opacity = 75.0 + 8.0 * rng.normal();
            let latent = 0.4 * obscurity + 0.05 * opacity + rng.normal();
            FeatureVector {
                obscurity: Some(obscurity),
                opacity: Some(opacity),
                answer_density: Some(0.5 + rng.unit()),
                q_length: 1 + rng.below(12),
                min_q_word_freq: Some(rng.normal()),
                conjunction_freq: rng.unit() * 0.3,
                difficulty: (latent - 2.0).round().clamp(1.0, 6.0) as u8,
            }
        })
        .collect()
}

#[test]
fn matches_normal_equations() {
    let mut rng = Lcg(3);
    for problem in 0..20 {
        let rows = synthetic_rows(&mut rng, 500);
        let k = 1 + problem % 6;
        let mut preds = ALL.to_vec();
        for i in (1..preds.len()).rev() {
            preds.swap(i, rng.below(i + 1));
        }
        preds.truncate(k);
        let spec = ModelSpec::new("m", preds.clone()).unwrap();
        let fit = fit_ols(&rows, &spec).unwrap();

        let columns: Vec<Vec<f64>> = preds
            .iter()
            .map(|p| zscore(&rows.iter().map(|r| p.value(r).unwrap()).collect::<Vec<_>>()))
            .collect();
        let y = zscore(&rows.iter().map(|r| r.difficulty as f64).collect::<Vec<_>>());
        let want = normal_equations(&columns, &y);

        assert!((fit.intercept.estimate - want.beta[0]).abs() < 1e-8);
        assert!((fit.intercept.se - want.se[0]).abs() < 1e-8);
        for (j, c) in fit.coefficients.iter().enumerate() {
            assert_eq!(c.name, preds[j].name());
            assert!(
                (c.estimate - want.beta[j + 1]).abs() < 1e-8,
                "{} {}",
                c.estimate,
                want.beta[j + 1]
            );
            assert!((c.se - want.se[j + 1]).abs() < 1e-8);
        }
        assert!((fit.rss - want.rss).abs() < 1e-6);
        assert!((fit.r_squared - want.r_squared).abs() < 1e-10);
        let n = 500.0;
        let aic = n * ((2.0 * std::f64::consts::PI * want.rss / n).ln() + 1.0) + 2.0 * (k as f64 + 2.0);
        assert!((fit.aic - aic).abs() < 1e-6);
    }
}

#[test]
fn recovers_noise_free_coefficients() {
    let mut rng = Lcg(5);
    let n = 200;
    let columns: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
    let beta = [0.7, -1.5, 2.25, 0.125];
    let y: Vec<f64> = (0..n)
        .map(|i| beta[0] + (0..3).map(|j| beta[j + 1] * columns[j][i]).sum::<f64>())
        .collect();
    let fit = least_squares("exact", &columns, &["a", "b", "c"], &y).unwrap();
    assert!((fit.intercept.estimate - beta[0]).abs() < 1e-12);
    for (c, b) in fit.coefficients.iter().zip(&beta[1..]) {
        assert!((c.estimate - b).abs() < 1e-12);
    }
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
}

#[test]
fn noise_free_difficulty_gives_unit_coefficient() {
    let rows: Vec<FeatureVector> = (0..120)
        .map(|i| {
            let d = 1 + (i % 6) as u8;
            FeatureVector {
                obscurity: Some(2.0 * d as f64 - 3.0),
                opacity: None,
                answer_density: None,
                q_length: 3,
                min_q_word_freq: None,
                conjunction_freq: 0.0,
                difficulty: d,
            }
        })
        .collect();
    let fit = fit_ols(&rows, &ModelSpec::suite()[0]).unwrap();
    assert!((fit.coefficients[0].estimate - 1.0).abs() < 1e-12);
    assert!(fit.intercept.estimate.abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
}

#[test]
fn nested_suite_r_squared_is_monotone() {
    let mut rng = Lcg(9);
    for _ in 0..10 {
        let rows = synthetic_rows(&mut rng, 400);
        let r2: Vec<f64> = ModelSpec::suite()
            .iter()
            .map(|s| fit_ols(&rows, s).unwrap().r_squared)
            .collect();
        assert!(r2.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{r2:?}");
    }
}

#[test]
fn undefined_predictors_are_dropped_listwise() {
    let mut rng = Lcg(21);
    let mut rows = synthetic_rows(&mut rng, 300);
    for r in rows.iter_mut().step_by(10) {
        r.opacity = None;
    }
    let suite = ModelSpec::suite();
    assert_eq!(fit_ols(&rows, &suite[0]).unwrap().dropped, 0);
    let fit = fit_ols(&rows, &suite[1]).unwrap();
    assert_eq!(fit.dropped, 30);
    assert_eq!(fit.n, 270);
}

#[test]
fn collinear_predictors_are_named() {
    let mut rng = Lcg(23);
    let a: Vec<f64> = (0..50).map(|_| rng.normal()).collect();
    let b: Vec<f64> = a.iter().map(|x| 3.0 * x).collect();
    let y: Vec<f64> = (0..50).map(|_| rng.normal()).collect();
    match least_squares("c", &[a, b], &["a", "b"], &y) {
        Err(Error::RankDeficient(names)) => assert_eq!(names, vec!["b".to_string()]),
        other => panic!("expected rank deficiency, got {other:?}"),
    }
}

#[test]
fn constant_predictor_is_zero_variance() {
    let mut rng = Lcg(29);
    let mut rows = synthetic_rows(&mut rng, 50);
    for r in &mut rows {
        r.obscurity = Some(1.0);
    }
    assert!(matches!(fit_ols(&rows, &ModelSpec::suite()[0]), Err(Error::ZeroVariance(n)) if n == "obscurity"));
}
