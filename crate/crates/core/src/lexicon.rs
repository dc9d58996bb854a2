//! Cross-lingual retrieval (nearest neighbour and CSLS), dictionary
//! induction, and iterative Procrustes refinement.

use std::str::FromStr;

use log::{debug, info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::initializer::procrustes_on_pairs;
use crate::linalg;
use crate::mmd::MappingMatrix;

/// Rows per similarity block; bounds the transient `block × m` matrix.
const BLOCK_ROWS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Plain cosine nearest neighbour.
    Nn,
    /// Cross-domain similarity local scaling.
    Csls,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(Method::Nn),
            "csls" => Ok(Method::Csls),
            other => Err(Error::Config(format!("unknown retrieval method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Nn => "nn",
            Method::Csls => "csls",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    pub method: Method,
    pub csls_k: usize,
    /// Words per side considered when inducing dictionaries.
    pub dict_vocab: usize,
    pub mutual_nn: bool,
    pub refine_iters: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            method: Method::Csls,
            csls_k: 10,
            dict_vocab: 20_000,
            mutual_nn: true,
            refine_iters: 5,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.csls_k < 1 {
            return Err(Error::Config("csls_k must be at least 1".into()));
        }
        if self.dict_vocab < 1 {
            return Err(Error::Config("dict_vocab must be at least 1".into()));
        }
        Ok(())
    }
}

/// `CSLS(i, j) = 2·sim(i, j) − r_tgt(i) − r_src(j)`, where `r_tgt(i)` is the
/// mean of row `i`'s `k` largest entries and `r_src(j)` the mean of column
/// `j`'s `k` largest entries.
pub fn csls_scores(sim: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let (n, m) = sim.shape();
    if k == 0 || k > n.min(m) {
        return Err(Error::Config(format!("csls k = {k} must be in 1..={}", n.min(m))));
    }
    let r_rows: Vec<f64> = (0..n)
        .map(|i| linalg::top_k_mean(&mut sim.row(i).iter().copied().collect::<Vec<_>>(), k))
        .collect();
    let r_cols: Vec<f64> = (0..m)
        .map(|j| linalg::top_k_mean(&mut sim.column(j).iter().copied().collect::<Vec<_>>(), k))
        .collect();
    Ok(DMatrix::from_fn(n, m, |i, j| 2.0 * sim[(i, j)] - r_rows[i] - r_cols[j]))
}

/// For each row of `a`, the mean of its `k` largest inner products with the
/// rows of `b`.
pub fn neighborhood_means(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let bt = b.transpose();
    let starts: Vec<usize> = (0..a.nrows()).step_by(BLOCK_ROWS).collect();
    starts
        .par_iter()
        .flat_map_iter(|&start| {
            let len = BLOCK_ROWS.min(a.nrows() - start);
            let sims = a.rows(start, len) * &bt;
            (0..len)
                .map(|r| linalg::top_k_mean(&mut sims.row(r).iter().copied().collect::<Vec<_>>(), k))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Ranks rows of a target matrix for query vectors.
///
/// Inputs are expected to have unit rows, so inner products are cosines.
/// Under CSLS the target penalty `r(j)` is computed against `pool`, the full
/// set of mapped source vectors queries are drawn from.
pub struct Scorer<'a> {
    targets: &'a DMatrix<f64>,
    targets_t: DMatrix<f64>,
    penalty: Option<Vec<f64>>,
}

/// A retrieved target with its cosine similarity to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub index: usize,
    pub cosine: f64,
}

impl<'a> Scorer<'a> {
    pub fn new(pool: &DMatrix<f64>, targets: &'a DMatrix<f64>, method: Method, csls_k: usize) -> Self {
        let penalty = match method {
            Method::Nn => None,
            Method::Csls => Some(neighborhood_means(targets, pool, csls_k.clamp(1, pool.nrows().max(1)))),
        };
        Scorer {
            targets,
            targets_t: targets.transpose(),
            penalty,
        }
    }

    pub fn num_targets(&self) -> usize {
        self.targets.nrows()
    }

    /// The `n` best targets for every query row, best first.
    pub fn top(&self, queries: &DMatrix<f64>, n: usize) -> Vec<Vec<Hit>> {
        let starts: Vec<usize> = (0..queries.nrows()).step_by(BLOCK_ROWS).collect();
        starts
            .par_iter()
            .flat_map_iter(|&start| {
                let len = BLOCK_ROWS.min(queries.nrows() - start);
                let sims = queries.rows(start, len) * &self.targets_t;
                (0..len).map(move |r| self.rank_row(&sims, r, n)).collect::<Vec<_>>()
            })
            .collect()
    }

    fn rank_row(&self, sims: &DMatrix<f64>, r: usize, n: usize) -> Vec<Hit> {
        let cos: Vec<f64> = sims.row(r).iter().copied().collect();
        let scores: Vec<f64> = match &self.penalty {
            None => cos.clone(),
            Some(p) => cos.iter().zip(p).map(|(s, pj)| 2.0 * s - pj).collect(),
        };
        let idx = if n == 1 {
            vec![linalg::argmax(&scores)]
        } else {
            linalg::top_k_indices(&scores, n)
        };
        idx.into_iter()
            .map(|j| Hit {
                index: j,
                cosine: cos[j],
            })
            .collect()
    }

    pub fn best(&self, queries: &DMatrix<f64>) -> Vec<Hit> {
        self.top(queries, 1).into_iter().map(|mut v| v.remove(0)).collect()
    }
}

/// Best target row for every query row; CSLS neighbourhoods are taken over
/// the queries themselves.
pub fn retrieve_best(queries: &DMatrix<f64>, targets: &DMatrix<f64>, method: Method, csls_k: usize) -> Vec<usize> {
    Scorer::new(queries, targets, method, csls_k)
        .best(queries)
        .into_iter()
        .map(|h| h.index)
        .collect()
}

/// Unit-normalized `src[..n] · W` and `tgt[..n]`.
pub(crate) fn aligned_heads(w: &MappingMatrix, src: &EmbeddingSpace, tgt: &EmbeddingSpace, n_src: usize, n_tgt: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let xs = src.matrix().rows(0, n_src.min(src.len())).into_owned();
    let ys = tgt.matrix().rows(0, n_tgt.min(tgt.len())).into_owned();
    (linalg::unit_rows(&w.apply(&xs)), linalg::unit_rows(&ys))
}

/// Translation pairs `(source rank, target rank)` implied by `w`, sorted by
/// source rank.
pub fn induce_dictionary(w: &MappingMatrix, src: &EmbeddingSpace, tgt: &EmbeddingSpace, cfg: &RetrievalConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate()?;
    if src.dim() != w.nrows() || tgt.dim() != w.ncols() {
        return Err(Error::Shape("mapping does not match embedding dimensions".into()));
    }
    let (a, b) = aligned_heads(w, src, tgt, cfg.dict_vocab, cfg.dict_vocab);
    let forward = retrieve_best(&a, &b, cfg.method, cfg.csls_k);
    let pairs: Vec<(usize, usize)> = if cfg.mutual_nn {
        let backward = retrieve_best(&b, &a, cfg.method, cfg.csls_k);
        forward
            .iter()
            .enumerate()
            .filter(|&(i, &j)| backward[j] == i)
            .map(|(i, &j)| (i, j))
            .collect()
    } else {
        forward.into_iter().enumerate().collect()
    };
    if pairs.is_empty() {
        return Err(Error::Degenerate("induced dictionary is empty".into()));
    }
    Ok(pairs)
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub mapping: MappingMatrix,
    /// Procrustes solves performed.
    pub iterations: usize,
    /// Size of the dictionary induced at each iteration.
    pub dictionary_sizes: Vec<usize>,
    /// An empty dictionary stopped refinement early.
    pub aborted: bool,
}

/// Alternates dictionary induction and Procrustes `refine_iters` times,
/// stopping early once the dictionary stops changing.
pub fn refine(w0: &MappingMatrix, src: &EmbeddingSpace, tgt: &EmbeddingSpace, cfg: &RetrievalConfig) -> Result<RefineOutcome> {
    cfg.validate()?;
    let mut w = w0.clone();
    let mut sizes = Vec::new();
    let mut previous: Option<Vec<(usize, usize)>> = None;
    let mut iterations = 0;
    for it in 0..cfg.refine_iters {
        let dict = match induce_dictionary(&w, src, tgt, cfg) {
            Ok(d) => d,
            Err(Error::Degenerate(msg)) => {
                warn!("refinement stopped at iteration {it}: {msg}");
                return Ok(RefineOutcome {
                    mapping: w,
                    iterations,
                    dictionary_sizes: sizes,
                    aborted: true,
                });
            }
            Err(e) => return Err(e),
        };
        sizes.push(dict.len());
        if previous.as_ref() == Some(&dict) {
            debug!("refinement converged after {iterations} iterations");
            break;
        }
        w = procrustes_on_pairs(src.matrix(), tgt.matrix(), &dict)?.mapping;
        iterations += 1;
        info!("refinement iteration {}: {} pairs", it + 1, dict.len());
        previous = Some(dict);
    }
    Ok(RefineOutcome {
        mapping: w,
        iterations,
        dictionary_sizes: sizes,
        aborted: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::NormStep;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_space(n: usize, d: usize, seed: u64) -> EmbeddingSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        EmbeddingSpace::from_matrix("w", m).unwrap().normalized(&NormStep::DEFAULT)
    }

    #[test]
    fn csls_of_constant_matrix_is_zero() {
        let sim = DMatrix::from_element(4, 5, 0.3);
        let c = csls_scores(&sim, 2).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn csls_hand_example() {
        let sim = DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.1, 0.1, 0.8, 0.1, 0.2, 0.1, 0.7]);
        let c = csls_scores(&sim, 1).unwrap();
        for i in 0..3 {
            let row: Vec<f64> = c.row(i).iter().copied().collect();
            assert_eq!(linalg::argmax(&row), i);
        }
        // row 2: r_row = 0.7, r_col = [0.9, 0.8, 0.7]
        assert!((c[(2, 0)] - (0.4 - 0.7 - 0.9)).abs() < 1e-12);
        assert!(csls_scores(&sim, 4).is_err());
    }

    #[test]
    fn csls_full_k_is_uniform_shift() {
        // symmetric circulant: every row and column has the same mean
        let sim = DMatrix::from_row_slice(3, 3, &[0.9, 0.2, 0.4, 0.4, 0.9, 0.2, 0.2, 0.4, 0.9]);
        let c = csls_scores(&sim, 3).unwrap();
        let mu = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                assert!((c[(i, j)] - (2.0 * sim[(i, j)] - 2.0 * mu)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scorer_matches_dense_csls() {
        let s = random_space(40, 8, 1);
        let t = random_space(30, 8, 2);
        let sim = s.matrix() * t.matrix().transpose();
        let dense = csls_scores(&sim, 5).unwrap();
        let best = retrieve_best(s.matrix(), t.matrix(), Method::Csls, 5);
        for (i, j) in best.into_iter().enumerate() {
            let row: Vec<f64> = dense.row(i).iter().copied().collect();
            assert_eq!(j, linalg::argmax(&row));
        }
    }

    #[test]
    fn identity_dictionary_on_identical_spaces() {
        let s = random_space(60, 10, 3);
        let cfg = RetrievalConfig::default();
        let dict = induce_dictionary(&MappingMatrix::identity(10), &s, &s, &cfg).unwrap();
        assert_eq!(dict, (0..60).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn refine_zero_iterations_is_identity() {
        let s = random_space(30, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = MappingMatrix::new(linalg::random_orthogonal(5, &mut rng)).unwrap();
        let cfg = RetrievalConfig {
            refine_iters: 0,
            ..Default::default()
        };
        let out = refine(&w, &s, &s, &cfg).unwrap();
        assert_eq!(out.mapping, w);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("nn".parse::<Method>().unwrap(), Method::Nn);
        assert_eq!("csls".parse::<Method>().unwrap(), Method::Csls);
        assert!("cosine".parse::<Method>().is_err());
        assert_eq!(Method::Csls.to_string(), "csls");
    }
}
