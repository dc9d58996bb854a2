//! Minibatch MMD training of the mapping.
//!
//! Each step samples independent source and target batches from the most
//! frequent words, takes an Adam step on `W` against the MMD² gradient, and
//! pulls `W` back toward the orthogonal group with
//! `W ← (1 + β) W − β (W Wᵀ) W`. The learning rate halves after every
//! epoch, and the mapping with the best unsupervised criterion is returned.

use log::{debug, info};
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embeddings::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mmd::{mmd2_value_and_gradient, KernelSpec, MappingMatrix, Projector};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Retraction strength β.
    pub beta: f64,
    /// Learning rate of the first epoch; epoch `e` uses `lr0 · 2⁻ᵉ`.
    pub lr0: f64,
    pub max_epochs: usize,
    /// Batches are drawn from this many most frequent words; `None` samples
    /// the whole vocabulary.
    pub sample_vocab: Option<usize>,
    pub seed: u64,
    /// Epochs without criterion improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1280,
            beta: 0.01,
            lr0: 0.0003,
            max_epochs: 20,
            sample_vocab: Some(20_000),
            seed: 0,
            patience: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(Error::Config(format!("beta must lie in (0, 0.5), got {}", self.beta)));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr0)));
        }
        if self.sample_vocab == Some(0) {
            return Err(Error::Config("sample_vocab must be positive".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * 0.5f64.powi(epoch as i32)
    }
}

/// `(1 + β) W − β (W Wᵀ) W`.
pub fn orthogonality_retraction(w: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let wwt_w = (w * w.transpose()) * w;
    w * (1.0 + beta) - wwt_w * beta
}

/// Adam moment estimates for one matrix parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState {
            m: DMatrix::zeros(rows, cols),
            v: DMatrix::zeros(rows, cols),
            t: 0,
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update.
pub fn adam_step(w: &DMatrix<f64>, grad: &DMatrix<f64>, state: &AdamState, lr: f64) -> Result<(DMatrix<f64>, AdamState)> {
    if w.shape() != grad.shape() || w.shape() != state.m.shape() {
        return Err(Error::Shape(format!(
            "adam shapes: w {:?}, grad {:?}, state {:?}",
            w.shape(),
            grad.shape(),
            state.m.shape()
        )));
    }
    let t = state.t + 1;
    let m = &state.m * ADAM_BETA1 + grad * (1.0 - ADAM_BETA1);
    let v = &state.v * ADAM_BETA2 + grad.component_mul(grad) * (1.0 - ADAM_BETA2);
    let c1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(t as i32);
    let w_next = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        let m_hat = m[(i, j)] / c1;
        let v_hat = v[(i, j)] / c2;
        w[(i, j)] - lr * m_hat / (v_hat.sqrt() + ADAM_EPS)
    });
    Ok((w_next, AdamState { m, v, t }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub mmd2: f64,
    /// `‖WᵀW − I‖_F` after the retraction.
    pub defect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 0 is the starting mapping; trained epochs count from 1.
    pub epoch: usize,
    /// Learning rate used during the epoch (0 for the starting point).
    pub lr: f64,
    pub criterion: f64,
    pub defect: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    /// Starting point followed by one record per trained epoch.
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the returned mapping.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_criterion(&self) -> f64 {
        self.epochs[self.best_epoch].criterion
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub mapping: MappingMatrix,
    pub history: TrainHistory,
}

fn draw_batch<R: Rng>(rng: &mut R, pool: usize, size: usize) -> Vec<usize> {
    if size <= pool {
        sample(rng, pool, size).into_vec()
    } else {
        (0..size).map(|_| rng.gen_range(0..pool)).collect()
    }
}

/// Trains with a criterion only; see [`train_with_hook`].
pub fn train<C>(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    w0: &MappingMatrix,
    proj: &Projector,
    spec: &KernelSpec,
    cfg: &TrainConfig,
    criterion: C,
) -> Result<TrainOutcome>
where
    C: FnMut(&MappingMatrix) -> f64,
{
    train_with_hook(src, tgt, w0, proj, spec, cfg, criterion, |_, _| Ok(()))
}

/// Runs MMD training and returns the mapping with the highest criterion
/// value among the starting point and every epoch end. `on_epoch` sees each
/// epoch record together with the mapping it scored.
#[allow(clippy::too_many_arguments)]
pub fn train_with_hook<C, H>(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    w0: &MappingMatrix,
    proj: &Projector,
    spec: &KernelSpec,
    cfg: &TrainConfig,
    mut criterion: C,
    mut on_epoch: H,
) -> Result<TrainOutcome>
where
    C: FnMut(&MappingMatrix) -> f64,
    H: FnMut(&EpochRecord, &MappingMatrix) -> Result<()>,
{
    cfg.validate()?;
    let d = src.dim();
    if tgt.dim() != d || w0.nrows() != d || proj.input_dim() != d {
        return Err(Error::Shape("source, target, mapping and projector dimensions disagree".into()));
    }
    let src_pool = cfg.sample_vocab.map_or(src.len(), |v| v.min(src.len()));
    let tgt_pool = cfg.sample_vocab.map_or(tgt.len(), |v| v.min(tgt.len()));
    let steps_per_epoch = src_pool.div_ceil(cfg.batch_size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut w = w0.as_matrix().clone();
    let mut adam = AdamState::new(d, d);
    let mut history = TrainHistory::default();

    let start = EpochRecord {
        epoch: 0,
        lr: 0.0,
        criterion: criterion(w0),
        defect: w0.defect(),
    };
    on_epoch(&start, w0)?;
    history.epochs.push(start);
    let mut best = w0.clone();
    let mut since_improvement = 0;

    for epoch in 1..=cfg.max_epochs {
        let lr = cfg.learning_rate(epoch - 1);
        for _ in 0..steps_per_epoch {
            let xi = draw_batch(&mut rng, src_pool, cfg.batch_size);
            let yi = draw_batch(&mut rng, tgt_pool, cfg.batch_size);
            let xb = linalg::select_rows(src.matrix(), &xi);
            let yb = linalg::select_rows(tgt.matrix(), &yi);
            let current = MappingMatrix::new(w.clone())?;
            let (mmd2, grad) = mmd2_value_and_gradient(&current, &xb, &yb, proj, spec)?;
            if !mmd2.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "MMD² diverged at step {} (epoch {epoch}, value {mmd2})",
                    history.steps.len()
                )));
            }
            let (stepped, next) = adam_step(&w, &grad, &adam, lr)?;
            adam = next;
            w = orthogonality_retraction(&stepped, cfg.beta);
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("mapping diverged at step {}", history.steps.len())));
            }
            let defect = linalg::orthogonality_defect(&w);
            debug!("step {} mmd2 {mmd2:.6e} defect {defect:.3e}", history.steps.len());
            history.steps.push(StepRecord {
                step: history.steps.len(),
                mmd2,
                defect,
            });
        }

        let mapping = MappingMatrix::new(w.clone())?;
        let record = EpochRecord {
            epoch,
            lr,
            criterion: criterion(&mapping),
            defect: mapping.defect(),
        };
        info!(
            "epoch {epoch}: lr {lr:.2e}, criterion {:.5}, defect {:.2e}",
            record.criterion, record.defect
        );
        on_epoch(&record, &mapping)?;
        if !record.criterion.is_finite() {
            return Err(Error::NonFinite(format!("criterion at epoch {epoch}")));
        }
        history.epochs.push(record);
        if record.criterion > history.best_criterion() {
            history.best_epoch = history.epochs.len() - 1;
            best = mapping;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                info!("no criterion improvement for {since_improvement} epochs; stopping");
                break;
            }
        }
    }

    Ok(TrainOutcome { mapping: best, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retraction_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = linalg::random_orthogonal(6, &mut rng);
        let r = orthogonality_retraction(&q, 0.01);
        assert!((r - &q).amax() < 1e-12);
    }

    #[test]
    fn retraction_scalar() {
        let w = DMatrix::from_element(1, 1, 1.1);
        let r = orthogonality_retraction(&w, 0.01);
        assert!((r[(0, 0)] - 1.09769).abs() < 1e-12);
    }

    #[test]
    fn retraction_scaled_identity() {
        let w = DMatrix::<f64>::identity(2, 2) * 2.0;
        let r = orthogonality_retraction(&w, 0.01);
        assert!((r - DMatrix::<f64>::identity(2, 2) * 1.94).amax() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let (next, state) = adam_step(&w, &DMatrix::zeros(2, 2), &AdamState::new(2, 2), 0.1).unwrap();
        assert_eq!(next, w);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let w = DMatrix::from_element(1, 1, 0.0);
        let g = DMatrix::from_element(1, 1, 1.0);
        let (next, _) = adam_step(&w, &g, &AdamState::new(1, 1), 0.1).unwrap();
        assert!((next[(0, 0)] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn adam_is_deterministic_and_checks_shapes() {
        let w = DMatrix::from_row_slice(1, 3, &[0.5, -0.2, 0.1]);
        let g = DMatrix::from_row_slice(1, 3, &[0.3, 0.0, -2.0]);
        let s = AdamState::new(1, 3);
        let a = adam_step(&w, &g, &s, 0.01).unwrap();
        let b = adam_step(&w, &g, &s, 0.01).unwrap();
        assert_eq!(a, b);
        assert!(adam_step(&w, &DMatrix::zeros(3, 1), &s, 0.01).is_err());
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::default();
        for e in 0..10 {
            assert_eq!(cfg.learning_rate(e), 0.0003 / 2f64.powi(e as i32));
        }
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { batch_size: 1, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { beta: 0.5, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { beta: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { lr0: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { sample_vocab: Some(0), ..ok }.validate().is_err());
    }
}
