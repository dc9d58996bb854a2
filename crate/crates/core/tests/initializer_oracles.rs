mod common;

use common::{brute_force_nn, gaussian, identity_fraction, normalized_space, rng, with_matrix};
use mmdmap::evaluator::bli_accuracy;
use mmdmap::initializer::{build_initial_mapping, match_signatures, procrustes, similarity_signature};
use mmdmap::linalg::{random_orthogonal, unit_rows};
use mmdmap::{InitConfig, Lexicon, Method, RetrievalConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn identity_gold(n: usize) -> Lexicon {
    (0..n).map(|i| (format!("w{i}"), format!("w{i}"))).collect()
}

#[test]
fn noisy_signatures_match_themselves() {
    let mut r = rng(10);
    let sig = gaussian(&mut r, 50, 10);
    let noisy = &sig + gaussian(&mut r, 50, 10) * 1e-3;
    // oracle: brute-force cosine retrieval
    let oracle = brute_force_nn(&sig, &noisy);
    let oracle_frac = oracle.iter().enumerate().filter(|(i, j)| i == *j).count() as f64 / 50.0;
    assert!(oracle_frac >= 0.95);
    let nn = match_signatures(&sig, &noisy, false, 10);
    assert_eq!(nn.iter().map(|p| p.1).collect::<Vec<_>>(), oracle);
    let csls = match_signatures(&sig, &noisy, true, 10);
    assert!(identity_fraction(&csls) >= 0.95);
}

#[test]
fn procrustes_recovers_random_rotations() {
    let mut r = rng(11);
    for d in [2, 5, 17, 50] {
        let x = gaussian(&mut r, 2 * d + 3, d);
        let rot = random_orthogonal(d, &mut r);
        let w = procrustes(&x, &(&x * &rot)).unwrap();
        assert!((w.as_matrix() - &rot).norm() <= 1e-8, "d={d}");
        assert!(w.defect() <= 1e-8);
    }
}

#[test]
fn initial_mapping_of_identical_spaces_is_identity() {
    let mut r = rng(12);
    let s = normalized_space(&mut r, 200, 12);
    let init = build_initial_mapping(&s, &s, &InitConfig::default()).unwrap();
    assert!((init.mapping.as_matrix() - DMatrix::<f64>::identity(12, 12)).amax() <= 1e-6);
}

#[test]
fn initial_mapping_recovers_rotation() {
    let mut r = rng(13);
    let s = normalized_space(&mut r, 500, 20);
    let rot = random_orthogonal(20, &mut r);
    let t = with_matrix(&s, s.matrix() * &rot);
    let init = build_initial_mapping(&s, &t, &InitConfig::default()).unwrap();
    assert!((init.mapping.as_matrix() - &rot).norm() <= 1e-6);
    let cfg = RetrievalConfig { method: Method::Nn, ..Default::default() };
    let report = bli_accuracy(&init.mapping, &s, &t, &identity_gold(500), &cfg).unwrap();
    assert_eq!(report.p_at_1, 1.0);
}

#[test]
fn initial_mapping_tolerates_noise() {
    let mut r = rng(14);
    let s = normalized_space(&mut r, 500, 20);
    let rot = random_orthogonal(20, &mut r);
    let t = with_matrix(&s, s.matrix() * &rot + gaussian(&mut r, 500, 20) * 0.01);
    let init = build_initial_mapping(&s, &t, &InitConfig::default()).unwrap();
    let cfg = RetrievalConfig { method: Method::Nn, ..Default::default() };
    let report = bli_accuracy(&init.mapping, &s, &t, &identity_gold(500), &cfg).unwrap();
    assert!(report.p_at_1 >= 0.9, "P@1 {}", report.p_at_1);
}

#[test]
fn initializer_rejects_bad_config() {
    let mut r = rng(15);
    let s = normalized_space(&mut r, 20, 4);
    let bad = InitConfig { vocab_cap: 1, ..Default::default() };
    assert!(build_initial_mapping(&s, &s, &bad).is_err());
    let bad = InitConfig { csls_k: 0, ..Default::default() };
    assert!(build_initial_mapping(&s, &s, &bad).is_err());
    let other = normalized_space(&mut r, 20, 5);
    assert!(build_initial_mapping(&s, &other, &InitConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn signatures_are_rotation_invariant(seed in 0u64..10_000, n in 3usize..40, d in 2usize..12) {
        let mut r = rng(seed);
        let x = unit_rows(&gaussian(&mut r, n, d));
        let rot = random_orthogonal(d, &mut r);
        let a = similarity_signature(&x, n).unwrap();
        let b = similarity_signature(&(&x * rot), n).unwrap();
        prop_assert!((a - b).amax() <= 1e-10);
    }

    #[test]
    fn procrustes_is_always_orthogonal(seed in 0u64..10_000, k in 1usize..30, d in 1usize..10) {
        let mut r = rng(seed);
        let x = gaussian(&mut r, k, d);
        let y = gaussian(&mut r, k, d);
        let w = procrustes(&x, &y).unwrap();
        prop_assert!(w.defect() <= 1e-8);
    }
}
