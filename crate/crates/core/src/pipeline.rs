//! Staged alignment: initialization → MMD training → refinement, each stage
//! switchable, with a convergence guard and the ablation matrix built on top.

use std::fmt;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::{EmbeddingSpace, Lexicon, NormStep};
use crate::error::{Error, Result};
use crate::evaluator::{self, BliReport};
use crate::initializer::{self, InitConfig};
use crate::lexicon::{self, RefineOutcome, RetrievalConfig};
use crate::linalg;
use crate::mmd::{fit_projector, KernelSpec, MappingMatrix, Projector};
use crate::trainer::{self, EpochRecord, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Init,
    Mmd,
    Refine,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Init => "init",
            Stage::Mmd => "mmd",
            Stage::Refine => "refine",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub init: InitConfig,
    pub train: TrainConfig,
    /// Retrieval used by refinement.
    pub refine: RetrievalConfig,
    pub normalize: Vec<NormStep>,
    /// Compressed dimension; `None`, or a value ≥ d, uses the identity.
    pub compress_dim: Option<usize>,
    pub enable_init: bool,
    pub enable_mmd: bool,
    pub enable_refine: bool,
    /// Words per side for the unsupervised criterion.
    pub criterion_words: usize,
    /// Minimum criterion gain over unaligned mappings for a run to count
    /// as converged.
    pub convergence_floor: f64,
    /// Random rotations averaged to estimate the unaligned criterion.
    pub chance_rotations: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            init: InitConfig::default(),
            train: TrainConfig::default(),
            refine: RetrievalConfig::default(),
            normalize: NormStep::DEFAULT.to_vec(),
            compress_dim: Some(50),
            enable_init: true,
            enable_mmd: true,
            enable_refine: true,
            criterion_words: evaluator::CRITERION_WORDS,
            convergence_floor: 0.05,
            chance_rotations: 3,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        self.train.validate()?;
        self.refine.validate()?;
        if self.criterion_words < 2 {
            return Err(Error::Config("criterion_words must be at least 2".into()));
        }
        if self.compress_dim == Some(0) {
            return Err(Error::Config("compress_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn stages(&self) -> Vec<(Stage, bool)> {
        vec![
            (Stage::Init, self.enable_init),
            (Stage::Mmd, self.enable_mmd),
            (Stage::Refine, self.enable_refine),
        ]
    }
}

/// Outcome class of an alignment run.
#[derive(Debug, Clone, PartialEq)]
pub enum AlignStatus {
    Converged,
    /// The objective diverged, or the mapping entering refinement is no
    /// better than an unaligned one.
    NonConvergence(String),
}

impl AlignStatus {
    pub fn converged(&self) -> bool {
        matches!(self, AlignStatus::Converged)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: Stage,
    pub ran: bool,
    /// Criterion of the mapping after the stage (if it ran).
    pub criterion: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AlignOutcome {
    pub mapping: MappingMatrix,
    pub status: AlignStatus,
    pub stages: Vec<StageRecord>,
    pub projector: Projector,
    pub kernel: KernelSpec,
    pub seed_pairs: Option<Vec<(usize, usize)>>,
    pub history: Option<TrainHistory>,
    pub refine: Option<RefineOutcome>,
    /// Mean criterion of random orthogonal mappings.
    pub chance_criterion: f64,
    pub final_criterion: f64,
}

/// Applies the configured normalization to a copy of `space`.
pub fn prepare(space: &EmbeddingSpace, steps: &[NormStep]) -> EmbeddingSpace {
    space.clone().normalized(steps)
}

fn projector_for(tgt: &EmbeddingSpace, compress_dim: Option<usize>) -> Result<Projector> {
    match compress_dim {
        Some(p) if p < tgt.dim() => fit_projector(tgt.matrix(), p),
        _ => Ok(Projector::identity(tgt.dim())),
    }
}

/// Mean criterion over `count` seeded random rotations.
pub fn chance_criterion(src: &EmbeddingSpace, tgt: &EmbeddingSpace, k_words: usize, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let count = count.max(1);
    (0..count)
        .map(|_| {
            let q = MappingMatrix::new(linalg::random_orthogonal(src.dim(), &mut rng)).expect("orthogonal matrix is finite");
            evaluator::unsupervised_criterion(&q, src, tgt, k_words)
        })
        .sum::<f64>()
        / count as f64
}

/// Runs the enabled stages on already-normalized spaces. `on_epoch` sees
/// every training epoch (for checkpointing).
pub fn align_prepared<H>(src: &EmbeddingSpace, tgt: &EmbeddingSpace, cfg: &PipelineConfig, on_epoch: H) -> Result<AlignOutcome>
where
    H: FnMut(&EpochRecord, &MappingMatrix) -> Result<()>,
{
    cfg.validate()?;
    if src.dim() != tgt.dim() {
        return Err(Error::Shape(format!("source dim {} vs target dim {}", src.dim(), tgt.dim())));
    }
    let d = src.dim();
    let k_words = cfg.criterion_words;
    let criterion = |w: &MappingMatrix| evaluator::unsupervised_criterion(w, src, tgt, k_words);

    let projector = projector_for(tgt, cfg.compress_dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let kernel = KernelSpec::median_heuristic(&projector.compress(tgt.matrix())?, &mut rng)?;
    let chance = chance_criterion(src, tgt, k_words, cfg.chance_rotations, cfg.train.seed);

    let mut stages = Vec::new();
    let mut w = MappingMatrix::identity(d);
    let mut seed_pairs = None;
    if cfg.enable_init {
        let init = initializer::build_initial_mapping(src, tgt, &cfg.init)?;
        info!("initialization: {} seed pairs", init.seed.len());
        w = init.mapping;
        seed_pairs = Some(init.seed);
        stages.push(StageRecord {
            stage: Stage::Init,
            ran: true,
            criterion: Some(criterion(&w)),
        });
    } else {
        stages.push(StageRecord {
            stage: Stage::Init,
            ran: false,
            criterion: None,
        });
    }

    let mut history = None;
    if cfg.enable_mmd {
        match trainer::train_with_hook(src, tgt, &w, &projector, &kernel, &cfg.train, criterion, on_epoch) {
            Ok(out) => {
                stages.push(StageRecord {
                    stage: Stage::Mmd,
                    ran: true,
                    criterion: Some(out.history.best_criterion()),
                });
                w = out.mapping;
                history = Some(out.history);
            }
            Err(Error::NonFinite(msg)) => {
                warn!("MMD training diverged: {msg}");
                stages.push(StageRecord {
                    stage: Stage::Mmd,
                    ran: true,
                    criterion: None,
                });
                return Ok(AlignOutcome {
                    mapping: w,
                    status: AlignStatus::NonConvergence(msg),
                    stages,
                    projector,
                    kernel,
                    seed_pairs,
                    history,
                    refine: None,
                    chance_criterion: chance,
                    final_criterion: f64::NAN,
                });
            }
            Err(e) => return Err(e),
        }
    } else {
        stages.push(StageRecord {
            stage: Stage::Mmd,
            ran: false,
            criterion: None,
        });
    }

    let pre_refine = criterion(&w);
    let gain = pre_refine - chance;
    if gain < cfg.convergence_floor {
        let msg = format!(
            "criterion {pre_refine:.4} is only {gain:.4} above unaligned mappings ({chance:.4}); floor {}",
            cfg.convergence_floor
        );
        warn!("non-convergence: {msg}");
        stages.push(StageRecord {
            stage: Stage::Refine,
            ran: false,
            criterion: None,
        });
        return Ok(AlignOutcome {
            mapping: w,
            status: AlignStatus::NonConvergence(msg),
            stages,
            projector,
            kernel,
            seed_pairs,
            history,
            refine: None,
            chance_criterion: chance,
            final_criterion: pre_refine,
        });
    }

    let mut refine = None;
    if cfg.enable_refine {
        let out = lexicon::refine(&w, src, tgt, &cfg.refine)?;
        w = out.mapping.clone();
        stages.push(StageRecord {
            stage: Stage::Refine,
            ran: true,
            criterion: Some(criterion(&w)),
        });
        refine = Some(out);
    } else {
        stages.push(StageRecord {
            stage: Stage::Refine,
            ran: false,
            criterion: None,
        });
    }

    let final_criterion = criterion(&w);
    Ok(AlignOutcome {
        mapping: w,
        status: AlignStatus::Converged,
        stages,
        projector,
        kernel,
        seed_pairs,
        history,
        refine,
        chance_criterion: chance,
        final_criterion,
    })
}

/// Normalizes both spaces and runs [`align_prepared`].
pub fn align(src: &EmbeddingSpace, tgt: &EmbeddingSpace, cfg: &PipelineConfig) -> Result<AlignOutcome> {
    let src = prepare(src, &cfg.normalize);
    let tgt = prepare(tgt, &cfg.normalize);
    align_prepared(&src, &tgt, cfg, |_, _| Ok(()))
}

/// One row of the ablation table.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: &'static str,
    pub enable_init: bool,
    pub enable_mmd: bool,
    pub enable_refine: bool,
    pub status: AlignStatus,
    /// `None` when the run did not converge.
    pub report: Option<BliReport>,
}

pub const ABLATIONS: [(&str, bool, bool, bool); 4] = [
    ("full", true, true, true),
    ("w/o MMD", true, false, true),
    ("w/o refinement", true, true, false),
    ("w/o initialization", false, true, true),
];

/// Runs the full model and the three single-stage ablations on the same
/// inputs and seed, scoring converged runs on `gold`.
pub fn ablate(src: &EmbeddingSpace, tgt: &EmbeddingSpace, gold: &Lexicon, cfg: &PipelineConfig, eval: &RetrievalConfig) -> Result<Vec<AblationRow>> {
    let src = prepare(src, &cfg.normalize);
    let tgt = prepare(tgt, &cfg.normalize);
    let mut rows = Vec::with_capacity(ABLATIONS.len());
    for (name, enable_init, enable_mmd, enable_refine) in ABLATIONS {
        let run_cfg = PipelineConfig {
            enable_init,
            enable_mmd,
            enable_refine,
            ..cfg.clone()
        };
        info!("ablation row {name:?}");
        let out = align_prepared(&src, &tgt, &run_cfg, |_, _| Ok(()))?;
        let report = if out.status.converged() {
            Some(evaluator::bli_accuracy(&out.mapping, &src, &tgt, gold, eval)?)
        } else {
            None
        };
        rows.push(AblationRow {
            name,
            enable_init,
            enable_mmd,
            enable_refine,
            status: out.status,
            report,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticConfig};

    fn small() -> crate::synthetic::SyntheticPair {
        generate(&SyntheticConfig {
            n: 300,
            d: 10,
            noise: 0.0,
            seed: 3,
            ..Default::default()
        })
        .unwrap()
    }

    fn quick() -> PipelineConfig {
        PipelineConfig {
            train: TrainConfig {
                batch_size: 64,
                max_epochs: 2,
                ..Default::default()
            },
            compress_dim: None,
            ..Default::default()
        }
    }

    #[test]
    fn stage_switches_are_recorded() {
        let p = small();
        let cfg = PipelineConfig {
            enable_mmd: false,
            ..quick()
        };
        let out = align(&p.src, &p.tgt, &cfg).unwrap();
        assert!(out.status.converged());
        assert!(out.history.is_none());
        let ran: Vec<(Stage, bool)> = out.stages.iter().map(|s| (s.stage, s.ran)).collect();
        assert_eq!(ran, vec![(Stage::Init, true), (Stage::Mmd, false), (Stage::Refine, true)]);
        assert!(out.mapping.defect() < 1e-8);
    }

    #[test]
    fn noiseless_recovers_rotation() {
        let p = small();
        let out = align(&p.src, &p.tgt, &quick()).unwrap();
        let src = prepare(&p.src, &NormStep::DEFAULT);
        let tgt = prepare(&p.tgt, &NormStep::DEFAULT);
        let r = evaluator::bli_accuracy(&out.mapping, &src, &tgt, &p.gold, &RetrievalConfig::default()).unwrap();
        assert_eq!(r.p_at_1, 1.0);
    }

    #[test]
    fn identity_start_without_stages_does_not_converge() {
        let p = generate(&SyntheticConfig {
            n: 800,
            d: 50,
            noise: 0.05,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let cfg = PipelineConfig {
            enable_init: false,
            enable_mmd: false,
            ..quick()
        };
        let out = align(&p.src, &p.tgt, &cfg).unwrap();
        assert!(!out.status.converged(), "{:?} chance {} final {}", out.status, out.chance_criterion, out.final_criterion);
    }

    #[test]
    fn projector_choice() {
        let p = small();
        assert_eq!(projector_for(&p.tgt, None).unwrap(), Projector::identity(10));
        assert_eq!(projector_for(&p.tgt, Some(10)).unwrap(), Projector::identity(10));
        assert_eq!(projector_for(&p.tgt, Some(4)).unwrap().output_dim(), 4);
    }
}
