//! Bilingual lexicon induction accuracy, cross-lingual word similarity, the
//! unsupervised model-selection criterion, and the common/rare breakdown.

use std::collections::HashSet;

use crate::embeddings::{EmbeddingSpace, Lexicon, ScoredPair};
use crate::error::{Error, Result};
use crate::lexicon::{aligned_heads, Method, RetrievalConfig, Scorer};
use crate::linalg;
use crate::mmd::MappingMatrix;

/// Source words ranked below this are "common", the rest "rare".
pub const COMMON_CUTOFF: usize = 20_000;

/// Words per side used by the unsupervised criterion.
pub const CRITERION_WORDS: usize = 10_000;

/// Neighbourhood size of the CSLS retrieval inside the criterion.
pub const CRITERION_CSLS_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketStat {
    pub p_at_1: f64,
    pub n_evaluated: usize,
}

/// P@1 split by source frequency rank. An empty bucket is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBuckets {
    pub cutoff: usize,
    pub common: Option<BucketStat>,
    pub rare: Option<BucketStat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BliReport {
    pub p_at_1: f64,
    pub p_at_5: f64,
    pub n_evaluated: usize,
    pub n_skipped_oov: usize,
    pub buckets: FrequencyBuckets,
}

/// One evaluated gold source word.
struct Outcome {
    src_rank: usize,
    hit_at_1: bool,
    hit_at_5: bool,
}

fn retrieve_gold(w: &MappingMatrix, src: &EmbeddingSpace, tgt: &EmbeddingSpace, gold: &Lexicon, cfg: &RetrievalConfig) -> Result<(Vec<Outcome>, usize)> {
    if gold.is_empty() {
        return Err(Error::Empty("gold lexicon".into()));
    }
    if src.dim() != w.nrows() || tgt.dim() != w.ncols() {
        return Err(Error::Shape("mapping does not match embedding dimensions".into()));
    }
    let mut queries: Vec<(usize, HashSet<usize>)> = Vec::new();
    let mut skipped = 0;
    for (s, targets) in gold.grouped() {
        let translations: HashSet<usize> = targets.iter().filter_map(|t| tgt.vocab().rank(t)).collect();
        match src.vocab().rank(s) {
            Some(r) if !translations.is_empty() => queries.push((r, translations)),
            _ => skipped += 1,
        }
    }
    if queries.is_empty() {
        return Err(Error::Empty("all gold entries are out of vocabulary".into()));
    }
    let (pool, targets) = aligned_heads(w, src, tgt, src.len(), tgt.len());
    let rows: Vec<usize> = queries.iter().map(|(r, _)| *r).collect();
    let q = linalg::select_rows(&pool, &rows);
    let scorer = Scorer::new(&pool, &targets, cfg.method, cfg.csls_k);
    let ranked = scorer.top(&q, 5);
    let outcomes = queries
        .iter()
        .zip(ranked)
        .map(|((r, gold_t), hits)| Outcome {
            src_rank: *r,
            hit_at_1: hits.first().is_some_and(|h| gold_t.contains(&h.index)),
            hit_at_5: hits.iter().any(|h| gold_t.contains(&h.index)),
        })
        .collect();
    Ok((outcomes, skipped))
}

fn bucket(outcomes: &[Outcome], keep: impl Fn(usize) -> bool) -> Option<BucketStat> {
    let sel: Vec<&Outcome> = outcomes.iter().filter(|o| keep(o.src_rank)).collect();
    if sel.is_empty() {
        return None;
    }
    Some(BucketStat {
        p_at_1: sel.iter().filter(|o| o.hit_at_1).count() as f64 / sel.len() as f64,
        n_evaluated: sel.len(),
    })
}

fn buckets(outcomes: &[Outcome], cutoff: usize) -> FrequencyBuckets {
    FrequencyBuckets {
        cutoff,
        common: bucket(outcomes, |r| r < cutoff),
        rare: bucket(outcomes, |r| r >= cutoff),
    }
}

/// Precision@1 and @5 of retrieving gold translations for mapped source
/// words. A word counts as a hit if any of its gold translations is
/// retrieved; gold words missing from either vocabulary are skipped.
pub fn bli_accuracy(w: &MappingMatrix, src: &EmbeddingSpace, tgt: &EmbeddingSpace, gold: &Lexicon, cfg: &RetrievalConfig) -> Result<BliReport> {
    let (outcomes, skipped) = retrieve_gold(w, src, tgt, gold, cfg)?;
    let n = outcomes.len() as f64;
    Ok(BliReport {
        p_at_1: outcomes.iter().filter(|o| o.hit_at_1).count() as f64 / n,
        p_at_5: outcomes.iter().filter(|o| o.hit_at_5).count() as f64 / n,
        n_evaluated: outcomes.len(),
        n_skipped_oov: skipped,
        buckets: buckets(&outcomes, COMMON_CUTOFF),
    })
}

/// P@1 for gold words with source rank below `cutoff` versus the rest.
pub fn frequency_bucket_report(
    w: &MappingMatrix,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    gold: &Lexicon,
    cfg: &RetrievalConfig,
    cutoff: usize,
) -> Result<FrequencyBuckets> {
    let (outcomes, _) = retrieve_gold(w, src, tgt, gold, cfg)?;
    Ok(buckets(&outcomes, cutoff))
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("series lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Degenerate("pearson needs at least two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("zero variance series".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub pearson: f64,
    pub n_used: usize,
    pub n_skipped_oov: usize,
    /// Predicted cosines of the in-vocabulary pairs, in input order.
    pub predicted: Vec<f64>,
}

/// Pearson correlation between `cos(x W, y)` and human scores.
pub fn word_similarity(w: &MappingMatrix, src: &EmbeddingSpace, tgt: &EmbeddingSpace, pairs: &[ScoredPair]) -> Result<SimilarityReport> {
    let mut predicted = Vec::new();
    let mut human = Vec::new();
    let mut skipped = 0;
    for p in pairs {
        let (Some(i), Some(j)) = (src.vocab().rank(&p.src), tgt.vocab().rank(&p.tgt)) else {
            skipped += 1;
            continue;
        };
        let x = src.matrix().row(i) * w.as_matrix();
        let y = tgt.matrix().row(j);
        let denom = x.norm() * y.norm();
        predicted.push(if denom > 0.0 { x.dot(&y) / denom } else { 0.0 });
        human.push(p.score);
    }
    if predicted.len() < 2 {
        return Err(Error::Degenerate(format!("only {} in-vocabulary similarity pairs", predicted.len())));
    }
    Ok(SimilarityReport {
        pearson: pearson(&predicted, &human)?,
        n_used: predicted.len(),
        n_skipped_oov: skipped,
        predicted,
    })
}

/// Mean cosine between the `k_words` most frequent mapped source words and
/// their CSLS-retrieved targets among the `k_words` most frequent target
/// words. Higher is better.
pub fn unsupervised_criterion(w: &MappingMatrix, src: &EmbeddingSpace, tgt: &EmbeddingSpace, k_words: usize) -> f64 {
    let (a, b) = aligned_heads(w, src, tgt, k_words, k_words);
    let scorer = Scorer::new(&a, &b, Method::Csls, CRITERION_CSLS_K);
    let hits = scorer.best(&a);
    hits.iter().map(|h| h.cosine).sum::<f64>() / hits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::NormStep;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn space(n: usize, d: usize, seed: u64) -> EmbeddingSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        EmbeddingSpace::from_matrix("w", m).unwrap().normalized(&NormStep::DEFAULT)
    }

    fn identity_gold(s: &EmbeddingSpace) -> Lexicon {
        s.vocab().words().iter().map(|w| (w.clone(), w.clone())).collect()
    }

    #[test]
    fn pearson_values() {
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]).unwrap();
        // sxy = 5, sxx = 2, syy = 38/3
        let expected = 5.0 / (2f64.sqrt() * (38.0f64 / 3.0).sqrt());
        assert!((r - expected).abs() < 1e-12);
        // numpy.corrcoef: 0.9933992677987828
        assert!((r - 0.993_399_267_798_782_8).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn identity_bli_is_perfect() {
        let s = space(80, 12, 1);
        for method in [Method::Nn, Method::Csls] {
            let cfg = RetrievalConfig { method, ..Default::default() };
            let r = bli_accuracy(&MappingMatrix::identity(12), &s, &s, &identity_gold(&s), &cfg).unwrap();
            assert_eq!(r.p_at_1, 1.0);
            assert_eq!(r.p_at_5, 1.0);
            assert_eq!(r.n_evaluated, 80);
            assert!(r.buckets.rare.is_none());
        }
    }

    #[test]
    fn bli_counts_oov() {
        let s = space(20, 6, 2);
        let mut gold = identity_gold(&s);
        gold.insert("missing", "w0").unwrap();
        gold.insert("w1", "missing").unwrap();
        let r = bli_accuracy(&MappingMatrix::identity(6), &s, &s, &gold, &RetrievalConfig::default()).unwrap();
        // w1 still has its valid translation
        assert_eq!(r.n_evaluated, 20);
        assert_eq!(r.n_skipped_oov, 1);

        let mut oov = Lexicon::new();
        oov.insert("zz", "yy").unwrap();
        assert!(bli_accuracy(&MappingMatrix::identity(6), &s, &s, &oov, &RetrievalConfig::default()).is_err());
        assert!(bli_accuracy(&MappingMatrix::identity(6), &s, &s, &Lexicon::new(), &RetrievalConfig::default()).is_err());
    }

    #[test]
    fn bucket_cutoffs() {
        let s = space(50, 8, 3);
        let gold = identity_gold(&s);
        let w = MappingMatrix::identity(8);
        let cfg = RetrievalConfig::default();
        let b = frequency_bucket_report(&w, &s, &s, &gold, &cfg, 1000).unwrap();
        assert_eq!(b.common.unwrap().n_evaluated, 50);
        assert!(b.rare.is_none());
        let b = frequency_bucket_report(&w, &s, &s, &gold, &cfg, 20).unwrap();
        assert_eq!(b.common.unwrap().n_evaluated, 20);
        assert_eq!(b.rare.unwrap().n_evaluated, 30);
    }

    #[test]
    fn similarity_against_own_predictions() {
        let s = space(30, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<ScoredPair> = (0..25)
            .map(|i| ScoredPair {
                src: format!("w{}", rng.gen_range(0..30)),
                tgt: format!("w{}", rng.gen_range(0..30)),
                score: i as f64,
            })
            .collect();
        let w = MappingMatrix::identity(8);
        let first = word_similarity(&w, &s, &s, &pairs).unwrap();
        let echo: Vec<ScoredPair> = pairs
            .iter()
            .zip(&first.predicted)
            .map(|(p, c)| ScoredPair { score: *c, ..p.clone() })
            .collect();
        assert!((word_similarity(&w, &s, &s, &echo).unwrap().pearson - 1.0).abs() < 1e-12);
        let neg: Vec<ScoredPair> = echo.iter().map(|p| ScoredPair { score: -p.score, ..p.clone() }).collect();
        assert!((word_similarity(&w, &s, &s, &neg).unwrap().pearson + 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_needs_two_pairs() {
        let s = space(5, 3, 5);
        let pairs = vec![
            ScoredPair { src: "w0".into(), tgt: "w1".into(), score: 1.0 },
            ScoredPair { src: "x".into(), tgt: "w1".into(), score: 2.0 },
        ];
        assert!(word_similarity(&MappingMatrix::identity(3), &s, &s, &pairs).is_err());
    }

    #[test]
    fn criterion_of_identical_spaces() {
        let s = space(100, 10, 6);
        let c = unsupervised_criterion(&MappingMatrix::identity(10), &s, &s, CRITERION_WORDS);
        assert!((c - 1.0).abs() < 1e-6);
    }
}
