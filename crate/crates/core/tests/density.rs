mod common;

use common::{brute_nearest, random_vocabulary, Lcg};
use quizdim::embedding::EmbeddingSpace;
use quizdim::metrics::{answer_density, DensityIndex, OverlapMeasure, OverlapRule};

fn check(seed: u64, size: usize, dim: usize, rule: OverlapRule) {
    let mut rng = Lcg(seed);
    let (words, vectors) = random_vocabulary(&mut rng, size, dim);
    let (space, _) = EmbeddingSpace::from_entries(dim, words.iter().cloned().zip(vectors.iter().cloned())).unwrap();
    let shorter = rule.measure == OverlapMeasure::Shorter;
    let index = DensityIndex::new(&space, words.iter().map(String::as_str), rule);
    let batch = index.nearest_batch(&words).unwrap();
    for (i, got) in batch.iter().enumerate() {
        let want = brute_nearest(&words, &vectors, i, rule.threshold, shorter);
        let got = got.as_ref().map(|h| (h.neighbor.clone(), h.distance));
        assert_eq!(got, want, "seed {seed}, answer {}", words[i]);
        if i % 17 == 0 {
            let single = answer_density(&space, &words[i], words.iter().map(String::as_str), rule).unwrap();
            assert_eq!(single.map(|h| (h.neighbor, h.distance)), want);
        }
    }
}

#[test]
fn matches_brute_force_on_random_vocabularies() {
    for seed in 0..20 {
        check(
            seed,
            50 + (seed as usize * 37) % 400,
            2 + (seed as usize * 7) % 40,
            OverlapRule::default(),
        );
    }
}

#[test]
fn matches_brute_force_under_longer_overlap() {
    let rule = OverlapRule {
        measure: OverlapMeasure::Longer,
        threshold: 0.6,
    };
    for seed in 100..110 {
        check(seed, 300, 8, rule);
    }
}

#[test]
fn stems_are_skipped() {
    let (space, _) = EmbeddingSpace::from_entries(
        2,
        vec![
            ("etch", vec![1.0f32, 0.0]),
            ("etched", vec![1.0f32, 0.01]),
            ("carve", vec![1.0f32, 0.5]),
        ],
    )
    .unwrap();
    let hit = answer_density(&space, "etch", ["etch", "etched", "carve"], OverlapRule::default())
        .unwrap()
        .unwrap();
    assert_eq!(hit.neighbor, "carve");
    assert_eq!(hit.distance, 0.5);
    assert_eq!(hit.density, 2.0);
}

#[test]
fn ties_go_to_the_smaller_word() {
    let (space, _) = EmbeddingSpace::from_entries(
        2,
        vec![
            ("mid", vec![0.0f32, 1.0]),
            ("oak", vec![1.0f32, 1.0]),
            ("elm", vec![-1.0f32, 1.0]),
        ],
    )
    .unwrap();
    let hit = answer_density(&space, "mid", ["oak", "elm"], OverlapRule::default())
        .unwrap()
        .unwrap();
    assert_eq!(hit.neighbor, "elm");
    assert_eq!(hit.distance, 1.0);
}

#[test]
fn no_surviving_candidate_is_none() {
    let (space, _) =
        EmbeddingSpace::from_entries(2, vec![("read", vec![1.0f32, 0.0]), ("reads", vec![0.0f32, 1.0])]).unwrap();
    let hit = answer_density(&space, "read", ["reads"], OverlapRule::default()).unwrap();
    assert!(hit.is_none());
}
