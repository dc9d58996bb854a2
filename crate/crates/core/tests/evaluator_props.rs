mod common;

use common::{gaussian, normalized_space, rng, spearman, with_matrix};
use mmdmap::evaluator::{bli_accuracy, frequency_bucket_report, pearson, unsupervised_criterion, word_similarity};
use mmdmap::initializer::procrustes;
use mmdmap::linalg::random_orthogonal;
use mmdmap::synthetic::{generate, SyntheticConfig};
use mmdmap::{EmbeddingSpace, Lexicon, MappingMatrix, Method, NormStep, RetrievalConfig, ScoredPair};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn identity_gold(s: &EmbeddingSpace) -> Lexicon {
    s.vocab().words().iter().map(|w| (w.clone(), w.clone())).collect()
}

/// Rotation at distance ~`eps` from the identity.
fn near_identity(d: usize, eps: f64, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let a = gaussian(&mut r, d, d);
    let skew = (&a - a.transpose()) * (eps / (2.0 * (d as f64).sqrt()));
    let target = DMatrix::<f64>::identity(d, d) + skew;
    procrustes(&DMatrix::identity(d, d), &target).unwrap().into_inner()
}

fn normalized_pair(cfg: SyntheticConfig) -> mmdmap::synthetic::SyntheticPair {
    let mut p = generate(&cfg).unwrap();
    p.src = p.src.normalized(&NormStep::DEFAULT);
    p.tgt = p.tgt.normalized(&NormStep::DEFAULT);
    p
}

#[test]
fn identity_mapping_retrieves_itself() {
    let mut r = rng(30);
    let s = normalized_space(&mut r, 300, 16);
    for method in [Method::Nn, Method::Csls] {
        let cfg = RetrievalConfig { method, ..Default::default() };
        let rep = bli_accuracy(&MappingMatrix::identity(16), &s, &s, &identity_gold(&s), &cfg).unwrap();
        assert_eq!(rep.p_at_1, 1.0);
        assert_eq!(rep.p_at_5, 1.0);
        assert_eq!(rep.n_evaluated, 300);
    }
}

#[test]
fn pearson_of_self_and_negation() {
    let mut r = rng(31);
    let a: Vec<f64> = gaussian(&mut r, 50, 1).iter().copied().collect();
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn oov_gold_entries_are_skipped() {
    let mut r = rng(32);
    let s = normalized_space(&mut r, 40, 6);
    let mut gold = identity_gold(&s);
    gold.insert("missing", "w1").unwrap();
    gold.insert("w2", "missing").unwrap();
    gold.insert("w3", "missing").unwrap();
    let rep = bli_accuracy(&MappingMatrix::identity(6), &s, &s, &gold, &RetrievalConfig::default()).unwrap();
    // w2 and w3 keep their in-vocabulary translation
    assert_eq!(rep.n_evaluated, 40);
    assert_eq!(rep.n_skipped_oov, 1);
    assert_eq!(rep.p_at_1, 1.0);

    let mut only_oov = Lexicon::new();
    only_oov.insert("nope", "w1").unwrap();
    assert!(bli_accuracy(&MappingMatrix::identity(6), &s, &s, &only_oov, &RetrievalConfig::default()).is_err());
}

#[test]
fn criterion_tracks_accuracy_across_perturbations() {
    let p = normalized_pair(SyntheticConfig { n: 1500, d: 20, noise: 0.02, seed: 33, ..Default::default() });
    let cfg = RetrievalConfig::default();
    let mut crit = Vec::new();
    let mut acc = Vec::new();
    for level in 0..10 {
        let eps = 0.15 * level as f64;
        let w = MappingMatrix::new(&p.rotation * near_identity(20, eps, 34)).unwrap();
        crit.push(unsupervised_criterion(&w, &p.src, &p.tgt, 1500));
        acc.push(bli_accuracy(&w, &p.src, &p.tgt, &p.gold, &cfg).unwrap().p_at_1);
    }
    let rho = spearman(&crit, &acc);
    assert!(rho >= 0.9, "spearman {rho}, criterion {crit:?}, P@1 {acc:?}");
}

#[test]
fn random_rotation_scores_well_below_the_aligned_map() {
    let p = normalized_pair(SyntheticConfig { n: 1500, d: 20, noise: 0.02, seed: 35, ..Default::default() });
    let aligned = unsupervised_criterion(&MappingMatrix::new(p.rotation.clone()).unwrap(), &p.src, &p.tgt, 1500);
    let mut r = rng(36);
    for _ in 0..3 {
        let w = MappingMatrix::new(random_orthogonal(20, &mut r)).unwrap();
        let random = unsupervised_criterion(&w, &p.src, &p.tgt, 1500);
        assert!(aligned - random >= 0.2, "aligned {aligned}, random {random}");
    }
}

#[test]
fn rare_words_are_harder() {
    let p = normalized_pair(SyntheticConfig {
        n: 1200,
        d: 20,
        noise: 0.01,
        rare_from: Some(600),
        rare_noise_scale: 15.0,
        seed: 37,
        ..Default::default()
    });
    let w = MappingMatrix::new(p.rotation.clone()).unwrap();
    let b = frequency_bucket_report(&w, &p.src, &p.tgt, &p.gold, &RetrievalConfig::default(), 600).unwrap();
    let (common, rare) = (b.common.unwrap(), b.rare.unwrap());
    assert_eq!(common.n_evaluated, 600);
    assert_eq!(rare.n_evaluated, 600);
    assert!(common.p_at_1 > rare.p_at_1, "common {} rare {}", common.p_at_1, rare.p_at_1);

    let full = bli_accuracy(&w, &p.src, &p.tgt, &p.gold, &RetrievalConfig::default()).unwrap();
    assert!(full.buckets.rare.is_none());
    assert_eq!(full.buckets.common.unwrap().n_evaluated, 1200);
}

#[test]
fn similarity_of_mapped_pairs() {
    let mut r = rng(38);
    let s = normalized_space(&mut r, 30, 5);
    let rot = random_orthogonal(5, &mut r);
    let t = with_matrix(&s, s.matrix() * &rot);
    let w = MappingMatrix::new(rot).unwrap();
    let mut pairs = Vec::new();
    for i in 0..30 {
        let j = (i * 7 + 3) % 30;
        let cos = s.matrix().row(i).dot(&s.matrix().row(j));
        pairs.push(ScoredPair { src: format!("w{i}"), tgt: format!("w{j}"), score: 3.0 * cos + 1.0 });
    }
    pairs.push(ScoredPair { src: "absent".into(), tgt: "w0".into(), score: 0.0 });
    let rep = word_similarity(&w, &s, &t, &pairs).unwrap();
    assert_eq!(rep.n_used, 30);
    assert_eq!(rep.n_skipped_oov, 1);
    assert!((rep.pearson - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pearson_is_affine_invariant(
        v in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
        c in 0.1f64..10.0,
        e in -50.0f64..50.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        prop_assume!(pearson(&x, &y).is_ok());
        let base = pearson(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|t| a * t + b).collect();
        let ys: Vec<f64> = y.iter().map(|t| c * t + e).collect();
        prop_assert!((pearson(&xs, &ys).unwrap() - base).abs() < 1e-9);
        prop_assert!(base.abs() <= 1.0 + 1e-12);
        let yn: Vec<f64> = y.iter().map(|t| -t).collect();
        prop_assert!((pearson(&x, &yn).unwrap() + base).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn precision_at_one_never_exceeds_precision_at_five(seed in 0u64..10_000, noise in 0.0f64..0.3, csls in any::<bool>()) {
        let mut r = rng(seed);
        let s = normalized_space(&mut r, 150, 8);
        let t = with_matrix(&s, s.matrix() + gaussian(&mut r, 150, 8) * noise);
        let method = if csls { Method::Csls } else { Method::Nn };
        let cfg = RetrievalConfig { method, ..Default::default() };
        let rep = bli_accuracy(&MappingMatrix::identity(8), &s, &t, &identity_gold(&s), &cfg).unwrap();
        prop_assert!(rep.p_at_1 <= rep.p_at_5);
    }

    #[test]
    fn scores_are_invariant_to_a_shared_rotation(seed in 0u64..10_000, noise in 0.0f64..0.3) {
        let mut r = rng(seed);
        let s = normalized_space(&mut r, 150, 8);
        let t = with_matrix(&s, s.matrix() + gaussian(&mut r, 150, 8) * noise);
        let w = MappingMatrix::new(near_identity(8, 0.3, seed)).unwrap();
        let q = random_orthogonal(8, &mut r);
        // rotating the target by Q and composing the map with Q
        let tq = with_matrix(&t, t.matrix() * &q);
        let wq = MappingMatrix::new(w.as_matrix() * &q).unwrap();
        let gold = identity_gold(&s);
        let cfg = RetrievalConfig::default();
        let a = bli_accuracy(&w, &s, &t, &gold, &cfg).unwrap();
        let b = bli_accuracy(&wq, &s, &tq, &gold, &cfg).unwrap();
        prop_assert_eq!(a.p_at_1, b.p_at_1);
        prop_assert_eq!(a.p_at_5, b.p_at_5);
        let ca = unsupervised_criterion(&w, &s, &t, 150);
        let cb = unsupervised_criterion(&wq, &s, &tq, 150);
        prop_assert!((ca - cb).abs() < 1e-10);
    }
}
