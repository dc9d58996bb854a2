//! Synthetic alignment problems with a known rotation and dictionary.
//!
//! The source space is an anisotropic Gaussian scaled so rows have unit
//! expected norm. The target is the rotated source plus isotropic Gaussian
//! noise, optionally with its rows shuffled, so the correct translation of
//! source word `i` is target row `truth[i]`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embeddings::{EmbeddingSpace, Lexicon};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    /// Standard deviation of the additive target noise.
    pub noise: f64,
    /// Ratio between the largest and smallest per-axis standard deviation.
    pub anisotropy: f64,
    pub shuffle: bool,
    /// Source ranks from which the noise is multiplied by `rare_noise_scale`.
    pub rare_from: Option<usize>,
    pub rare_noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 3000,
            d: 50,
            noise: 0.01,
            anisotropy: 10.0,
            shuffle: true,
            rare_from: None,
            rare_noise_scale: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub src: EmbeddingSpace,
    pub tgt: EmbeddingSpace,
    /// True mapping: `tgt[truth[i]] ≈ src[i] · rotation`.
    pub rotation: DMatrix<f64>,
    pub truth: Vec<usize>,
    /// `s{i} → t{truth[i]}` for every source word.
    pub gold: Lexicon,
}

impl SyntheticPair {
    /// Fraction of source rows whose index pair is correct.
    pub fn accuracy_of_pairs(&self, pairs: &[(usize, usize)]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        pairs.iter().filter(|&&(i, j)| self.truth[i] == j).count() as f64 / pairs.len() as f64
    }
}

/// Per-axis standard deviations decaying geometrically by `anisotropy`,
/// scaled so that `Σ σⱼ² = 1`.
pub fn axis_scales(d: usize, anisotropy: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..d)
        .map(|j| {
            let t = if d > 1 { j as f64 / (d - 1) as f64 } else { 0.0 };
            anisotropy.powf(-t)
        })
        .collect();
    let norm = raw.iter().map(|s| s * s).sum::<f64>().sqrt();
    raw.into_iter().map(|s| s / norm).collect()
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticPair> {
    if cfg.n < 2 || cfg.d < 1 {
        return Err(Error::Config("synthetic problem needs n ≥ 2 and d ≥ 1".into()));
    }
    if !(cfg.anisotropy >= 1.0) || !(cfg.noise >= 0.0) {
        return Err(Error::Config("anisotropy must be ≥ 1 and noise ≥ 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scales = axis_scales(cfg.d, cfg.anisotropy);
    let x = DMatrix::from_fn(cfg.n, cfg.d, |_, j| scales[j] * rng.sample::<f64, _>(StandardNormal));
    let rotation = linalg::random_orthogonal(cfg.d, &mut rng);
    let mut mapped = &x * &rotation;
    for i in 0..cfg.n {
        let scale = match cfg.rare_from {
            Some(r) if i >= r => cfg.noise * cfg.rare_noise_scale,
            _ => cfg.noise,
        };
        for j in 0..cfg.d {
            mapped[(i, j)] += scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut truth: Vec<usize> = (0..cfg.n).collect();
    if cfg.shuffle {
        truth.shuffle(&mut rng);
    }
    let mut y = DMatrix::zeros(cfg.n, cfg.d);
    for (i, &r) in truth.iter().enumerate() {
        y.row_mut(r).copy_from(&mapped.row(i));
    }
    let src = EmbeddingSpace::from_matrix("s", x)?;
    let tgt = EmbeddingSpace::from_matrix("t", y)?;
    let gold = truth.iter().enumerate().map(|(i, &r)| (format!("s{i}"), format!("t{r}"))).collect();
    Ok(SyntheticPair {
        src,
        tgt,
        rotation,
        truth,
        gold,
    })
}
