//! Warm-start mapping from the structural similarity of the two spaces.
//!
//! Each frequent word gets a signature: its row of the intra-language
//! similarity matrix, sorted in descending order and rescaled to unit length.
//! Sorting discards word identities, so signatures are unchanged by any
//! rotation of the space and can be compared across languages. Matching
//! signatures yields a seed dictionary, and Procrustes on that dictionary
//! gives the initial orthogonal mapping.

use log::{debug, warn};
use nalgebra::DMatrix;

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::lexicon::{self, Method};
use crate::linalg;
use crate::mmd::MappingMatrix;

/// Smallest singular value below which a Procrustes problem is flagged as
/// rank-deficient.
pub const DEGENERATE_SINGULAR_VALUE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    /// Number of most frequent words used for signatures.
    pub vocab_cap: usize,
    pub csls_k: usize,
    pub use_csls: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            vocab_cap: 4000,
            csls_k: 10,
            use_csls: true,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_cap < 2 {
            return Err(Error::Config("init vocab_cap must be at least 2".into()));
        }
        if self.csls_k < 1 {
            return Err(Error::Config("init csls_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sorted, unit-normalized rows of the Gram matrix of the first `cap` rows.
pub fn similarity_signature(matrix: &DMatrix<f64>, cap: usize) -> Result<DMatrix<f64>> {
    if cap > matrix.nrows() {
        return Err(Error::Config(format!(
            "signature cap {cap} exceeds vocabulary size {}",
            matrix.nrows()
        )));
    }
    if cap == 0 {
        return Err(Error::Config("signature cap must be positive".into()));
    }
    let head = matrix.rows(0, cap);
    let gram = &head * head.transpose();
    let mut sig = DMatrix::<f64>::zeros(cap, cap);
    let mut row = vec![0.0; cap];
    for i in 0..cap {
        for (j, v) in row.iter_mut().enumerate() {
            *v = gram[(i, j)];
        }
        row.sort_unstable_by(|a, b| b.total_cmp(a));
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        for (j, v) in row.iter().enumerate() {
            sig[(i, j)] = v * scale;
        }
    }
    Ok(sig)
}

fn zero_pad_columns(m: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    if m.ncols() == cols {
        return m.clone();
    }
    let mut out = DMatrix::zeros(m.nrows(), cols);
    out.columns_mut(0, m.ncols()).copy_from(m);
    out
}

/// Nearest target signature for every source signature, as `(src, tgt)`
/// index pairs in source order. Narrower signatures are zero-padded.
pub fn match_signatures(sig_x: &DMatrix<f64>, sig_y: &DMatrix<f64>, use_csls: bool, csls_k: usize) -> Vec<(usize, usize)> {
    let cols = sig_x.ncols().max(sig_y.ncols());
    let x = linalg::unit_rows(&zero_pad_columns(sig_x, cols));
    let y = linalg::unit_rows(&zero_pad_columns(sig_y, cols));
    let method = if use_csls { Method::Csls } else { Method::Nn };
    lexicon::retrieve_best(&x, &y, method, csls_k)
        .into_iter()
        .enumerate()
        .collect()
}

/// Result of an orthogonal Procrustes solve.
#[derive(Debug, Clone)]
pub struct ProcrustesFit {
    pub mapping: MappingMatrix,
    pub min_singular_value: f64,
    /// Cross-covariance was (numerically) rank-deficient.
    pub degenerate: bool,
}

/// Orthogonal `W` minimizing `‖x W − y‖_F`: `W = U Vᵀ` for `xᵀy = U Σ Vᵀ`.
pub fn procrustes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<MappingMatrix> {
    procrustes_fit(x, y).map(|fit| fit.mapping)
}

pub fn procrustes_fit(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ProcrustesFit> {
    if x.shape() != y.shape() {
        return Err(Error::Shape(format!("procrustes inputs {:?} and {:?}", x.shape(), y.shape())));
    }
    if x.nrows() == 0 {
        return Err(Error::Empty("procrustes pairs".into()));
    }
    let cross = x.tr_mul(y);
    if cross.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("procrustes cross-covariance".into()));
    }
    let svd = cross.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Degenerate("SVD did not produce singular vectors".into())),
    };
    let min_singular_value = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let degenerate = min_singular_value < DEGENERATE_SINGULAR_VALUE;
    if degenerate {
        debug!("procrustes cross-covariance is rank-deficient (σ_min = {min_singular_value:e})");
    }
    Ok(ProcrustesFit {
        mapping: MappingMatrix::new(u * v_t)?,
        min_singular_value,
        degenerate,
    })
}

/// Procrustes over the rows named by `pairs`.
pub fn procrustes_on_pairs(src: &DMatrix<f64>, tgt: &DMatrix<f64>, pairs: &[(usize, usize)]) -> Result<ProcrustesFit> {
    let (si, ti): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    procrustes_fit(&linalg::select_rows(src, &si), &linalg::select_rows(tgt, &ti))
}

/// Initial mapping together with the seed dictionary it was solved from.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub mapping: MappingMatrix,
    pub seed: Vec<(usize, usize)>,
}

/// Signature matching → seed lexicon → Procrustes.
pub fn build_initial_mapping(src: &EmbeddingSpace, tgt: &EmbeddingSpace, cfg: &InitConfig) -> Result<Initialization> {
    cfg.validate()?;
    if src.dim() != tgt.dim() {
        return Err(Error::Shape(format!("source dim {} vs target dim {}", src.dim(), tgt.dim())));
    }
    let cap_x = cfg.vocab_cap.min(src.len());
    let cap_y = cfg.vocab_cap.min(tgt.len());
    if cap_x < cfg.vocab_cap || cap_y < cfg.vocab_cap {
        warn!("signature vocabulary capped at {cap_x}/{cap_y} words (vocabulary smaller than {})", cfg.vocab_cap);
    }
    let sig_x = similarity_signature(src.matrix(), cap_x)?;
    let sig_y = similarity_signature(tgt.matrix(), cap_y)?;
    let k = cfg.csls_k.min(cap_x).min(cap_y);
    let seed = match_signatures(&sig_x, &sig_y, cfg.use_csls, k);
    let fit = procrustes_on_pairs(src.matrix(), tgt.matrix(), &seed)?;
    if fit.degenerate {
        warn!("seed dictionary gives a rank-deficient Procrustes problem");
    }
    Ok(Initialization {
        mapping: fit.mapping,
        seed,
    })
}
