#![allow(dead_code)]

use mmdmap::{EmbeddingSpace, NormStep};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn normalized_space(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingSpace {
    EmbeddingSpace::from_matrix("w", gaussian(rng, n, d))
        .unwrap()
        .normalized(&NormStep::DEFAULT)
}

/// Space whose row i is row i of `m`, named like `base`.
pub fn with_matrix(base: &EmbeddingSpace, m: DMatrix<f64>) -> EmbeddingSpace {
    EmbeddingSpace::new(base.vocab().clone(), m).unwrap()
}

/// Fraction of rows of `pairs` that are (i, i).
pub fn identity_fraction(pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().filter(|(i, j)| i == j).count() as f64 / pairs.len() as f64
}

/// Brute-force cosine argmax per row.
pub fn brute_force_nn(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<usize> {
    (0..a.nrows())
        .map(|i| {
            let ai = a.row(i);
            let mut best = (0, f64::NEG_INFINITY);
            for j in 0..b.nrows() {
                let bj = b.row(j);
                let c = ai.dot(&bj) / (ai.norm() * bj.norm());
                if c > best.1 {
                    best = (j, c);
                }
            }
            best.0
        })
        .collect()
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut e = k;
            while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[k]] {
                e += 1;
            }
            let avg = (k + e) as f64 / 2.0;
            for &i in &idx[k..=e] {
                r[i] = avg;
            }
            k = e + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
