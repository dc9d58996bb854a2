//! Subcommand implementations.

use std::path::Path;

use log::{info, warn};
use serde::Serialize;

use mmdmap::embeddings::{load_embeddings, load_lexicon, load_similarity_pairs, save_lexicon};
use mmdmap::evaluator::{bli_accuracy, word_similarity};
use mmdmap::lexicon::induce_dictionary;
use mmdmap::pipeline::{ablate, align_prepared, prepare, AlignStatus};
use mmdmap::{EmbeddingSpace, Lexicon, MappingMatrix, RetrievalConfig};

use crate::artifacts::{read_matrix, write_json, write_matrix, write_projector, write_text, Manifest, RunLog, StageEntry};
use crate::config::{Command, RunConfig};
use crate::error::{CliError, Result};
use crate::report;

pub const MAPPING_FILE: &str = "mapping.txt";
pub const PROJECTOR_FILE: &str = "projector.txt";
pub const HISTORY_FILE: &str = "history.json";
pub const RUN_LOG_FILE: &str = "run.jsonl";
pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const EVALUATION_FILE: &str = "evaluation.jsonl";
pub const ABLATION_FILE: &str = "ablation.jsonl";
pub const INDUCED_FILE: &str = "induced.txt";

/// Result of a command that did not fail outright.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Success,
    NonConvergence(String),
}

#[derive(Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event<'a> {
    Load {
        side: &'a str,
        words: usize,
        dim: usize,
        lines: usize,
        skipped: usize,
        duplicates: usize,
    },
    Epoch {
        epoch: usize,
        lr: f64,
        criterion: f64,
        defect: f64,
        checkpoint: &'a str,
    },
    Stage {
        stage: String,
        ran: bool,
        criterion: Option<f64>,
    },
    Status {
        converged: bool,
        chance_criterion: f64,
        final_criterion: Option<f64>,
        detail: Option<&'a str>,
    },
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.out.as_deref().ok_or_else(|| CliError::config("out is required"))
}

fn load_pair(cfg: &RunConfig, log: Option<&mut RunLog>) -> Result<(EmbeddingSpace, EmbeddingSpace)> {
    let mut log = log;
    let mut spaces = Vec::with_capacity(2);
    for (side, path) in [("src", &cfg.src_emb), ("tgt", &cfg.tgt_emb)] {
        let path = path.as_ref().ok_or_else(|| CliError::config(format!("{side}_emb is required")))?;
        let (space, rep) = load_embeddings(path, cfg.max_vocab)?;
        info!("{side}: {} words, dimension {} from {}", space.len(), space.dim(), path.display());
        if let Some(log) = log.as_deref_mut() {
            log.emit(&Event::Load {
                side,
                words: space.len(),
                dim: space.dim(),
                lines: rep.lines,
                skipped: rep.skipped,
                duplicates: rep.duplicates,
            })?;
        }
        spaces.push(prepare(&space, &cfg.pipeline.normalize));
    }
    let tgt = spaces.pop().expect("two spaces");
    let src = spaces.pop().expect("two spaces");
    if src.dim() != tgt.dim() {
        return Err(CliError::config(format!(
            "source dimension {} differs from target dimension {}",
            src.dim(),
            tgt.dim()
        )));
    }
    Ok((src, tgt))
}

fn load_mapping(cfg: &RunConfig, dim: usize) -> Result<MappingMatrix> {
    let path = cfg.mapping.as_ref().ok_or_else(|| CliError::config("mapping is required"))?;
    let m = read_matrix(path)?;
    if m.shape() != (dim, dim) {
        return Err(CliError::config(format!(
            "mapping {} is {}×{}, embeddings have dimension {dim}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(MappingMatrix::new(m)?)
}

fn retrieval(cfg: &RunConfig) -> RetrievalConfig {
    RetrievalConfig {
        method: cfg.retrieval,
        ..cfg.pipeline.refine.clone()
    }
}

fn finish(dir: &Path, cfg: &RunConfig, cmd: Command, status: &Outcome, stages: Vec<StageEntry>, files: &[String]) -> Result<()> {
    let (status_text, detail) = match status {
        Outcome::Success => ("success", None),
        Outcome::NonConvergence(m) => ("non-convergence", Some(m.clone())),
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        command: cmd.name().to_owned(),
        status: status_text.to_owned(),
        detail,
        config: cfg.to_pairs().into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
        stages,
        artifacts: Manifest::hash_artifacts(dir, files)?,
    };
    manifest.write(dir)
}

/// Runs the enabled stages and writes the mapping, projector, history,
/// per-epoch checkpoints, run log, effective config and manifest.
pub fn cmd_align(cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate_for(Command::Align)?;
    let dir = out_dir(cfg)?;
    let mut files: Vec<String> = vec![CONFIG_FILE.into(), RUN_LOG_FILE.into()];
    write_text(&dir.join(CONFIG_FILE), &cfg.to_text())?;
    let mut log = RunLog::create(&dir.join(RUN_LOG_FILE))?;
    let (src, tgt) = load_pair(cfg, Some(&mut log))?;

    let mut hook_files: Vec<String> = Vec::new();
    let mut hook_error: Option<CliError> = None;
    let aligned = align_prepared(&src, &tgt, &cfg.pipeline, |rec, w| {
        let rel = format!("{CHECKPOINT_DIR}/epoch_{:03}.txt", rec.epoch);
        let written = write_matrix(&dir.join(&rel), w.as_matrix()).and_then(|_| {
            log.emit(&Event::Epoch {
                epoch: rec.epoch,
                lr: rec.lr,
                criterion: rec.criterion,
                defect: rec.defect,
                checkpoint: &rel,
            })
        });
        match written {
            Ok(()) => {
                hook_files.push(rel);
                Ok(())
            }
            Err(e) => {
                hook_error = Some(e);
                Err(mmdmap::Error::Degenerate("checkpointing failed".into()))
            }
        }
    });
    if let Some(e) = hook_error {
        return Err(e);
    }
    let outcome = aligned?;
    files.extend(hook_files);

    let stages: Vec<StageEntry> = outcome
        .stages
        .iter()
        .map(|s| StageEntry {
            stage: s.stage.to_string(),
            ran: s.ran,
            criterion: s.criterion.and_then(finite),
        })
        .collect();
    for s in &stages {
        log.emit(&Event::Stage {
            stage: s.stage.clone(),
            ran: s.ran,
            criterion: s.criterion,
        })?;
    }
    let status = match &outcome.status {
        AlignStatus::Converged => Outcome::Success,
        AlignStatus::NonConvergence(m) => Outcome::NonConvergence(m.clone()),
    };
    log.emit(&Event::Status {
        converged: status == Outcome::Success,
        chance_criterion: outcome.chance_criterion,
        final_criterion: finite(outcome.final_criterion),
        detail: match &status {
            Outcome::NonConvergence(m) => Some(m.as_str()),
            Outcome::Success => None,
        },
    })?;

    write_matrix(&dir.join(MAPPING_FILE), outcome.mapping.as_matrix())?;
    write_projector(&dir.join(PROJECTOR_FILE), &outcome.projector)?;
    files.extend([MAPPING_FILE.into(), PROJECTOR_FILE.into()]);
    if let Some(h) = &outcome.history {
        write_json(&dir.join(HISTORY_FILE), &HistoryDoc::from(h))?;
        files.push(HISTORY_FILE.into());
    }
    log.finish()?;
    finish(dir, cfg, Command::Align, &status, stages, &files)?;
    match &status {
        Outcome::Success => info!("alignment converged; criterion {:.4}", outcome.final_criterion),
        Outcome::NonConvergence(m) => warn!("alignment did not converge: {m}"),
    }
    Ok(status)
}

#[derive(Serialize)]
struct HistoryDoc {
    best_epoch: usize,
    epochs: Vec<EpochDoc>,
    steps: Vec<StepDoc>,
}

#[derive(Serialize)]
struct EpochDoc {
    epoch: usize,
    lr: f64,
    criterion: f64,
    defect: f64,
}

#[derive(Serialize)]
struct StepDoc {
    step: usize,
    mmd2: f64,
    defect: f64,
}

impl From<&mmdmap::TrainHistory> for HistoryDoc {
    fn from(h: &mmdmap::TrainHistory) -> Self {
        HistoryDoc {
            best_epoch: h.best_epoch,
            epochs: h
                .epochs
                .iter()
                .map(|e| EpochDoc {
                    epoch: e.epoch,
                    lr: e.lr,
                    criterion: e.criterion,
                    defect: e.defect,
                })
                .collect(),
            steps: h
                .steps
                .iter()
                .map(|s| StepDoc {
                    step: s.step,
                    mmd2: s.mmd2,
                    defect: s.defect,
                })
                .collect(),
        }
    }
}

/// Scores a trained mapping on the gold lexicon and/or similarity pairs.
/// Returns the report lines and prints the table.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<(Outcome, Vec<report::ReportLine>)> {
    cfg.validate_for(Command::Evaluate)?;
    let (src, tgt) = load_pair(cfg, None)?;
    let w = load_mapping(cfg, src.dim())?;
    let mut lines = Vec::new();
    if let Some(gold_path) = &cfg.gold {
        let (gold, _) = load_lexicon(gold_path)?;
        let rep = bli_accuracy(&w, &src, &tgt, &gold, &retrieval(cfg))?;
        lines.extend(report::bli_lines(&rep, &cfg.retrieval.to_string()));
    }
    if let Some(pairs_path) = &cfg.sim_pairs {
        let (pairs, _) = load_similarity_pairs(pairs_path)?;
        let rep = word_similarity(&w, &src, &tgt, &pairs)?;
        lines.push(report::similarity_line(&rep));
    }
    print!("{}", report::evaluation_table(&lines));
    let json = report::to_json_lines(&lines);
    match &cfg.out {
        Some(dir) => {
            write_text(&dir.join(EVALUATION_FILE), &json)?;
            finish(dir, cfg, Command::Evaluate, &Outcome::Success, Vec::new(), &[EVALUATION_FILE.into()])?;
        }
        None => print!("{json}"),
    }
    Ok((Outcome::Success, lines))
}

/// Writes the dictionary a trained mapping induces.
pub fn cmd_induce(cfg: &RunConfig) -> Result<(Outcome, Lexicon)> {
    cfg.validate_for(Command::Induce)?;
    let dir = out_dir(cfg)?;
    let (src, tgt) = load_pair(cfg, None)?;
    let w = load_mapping(cfg, src.dim())?;
    let pairs = induce_dictionary(&w, &src, &tgt, &retrieval(cfg))?;
    let lex = Lexicon::from_index_pairs(&pairs, src.vocab(), tgt.vocab());
    save_lexicon(&lex, dir.join(INDUCED_FILE))?;
    info!("induced {} pairs", lex.len());
    finish(dir, cfg, Command::Induce, &Outcome::Success, Vec::new(), &[INDUCED_FILE.into()])?;
    Ok((Outcome::Success, lex))
}

/// Runs the full model and the three single-stage ablations.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<(Outcome, Vec<report::ReportLine>)> {
    cfg.validate_for(Command::Ablate)?;
    let dir = out_dir(cfg)?;
    let src = load_embeddings(cfg.src_emb.as_ref().expect("validated"), cfg.max_vocab)?.0;
    let tgt = load_embeddings(cfg.tgt_emb.as_ref().expect("validated"), cfg.max_vocab)?.0;
    if src.dim() != tgt.dim() {
        return Err(CliError::config("source and target dimensions differ"));
    }
    let (gold, _) = load_lexicon(cfg.gold.as_ref().expect("validated"))?;
    let rows = ablate(&src, &tgt, &gold, &cfg.pipeline, &retrieval(cfg))?;
    let lines = report::ablation_lines(&rows);
    print!("{}", report::ablation_table(&lines));
    match report::ablation_ordering_holds(&rows) {
        Some(true) => println!("ordering full >= w/o MMD >= w/o refinement: holds"),
        Some(false) => println!("ordering full >= w/o MMD >= w/o refinement: violated"),
        None => println!("ordering full >= w/o MMD >= w/o refinement: undetermined"),
    }
    write_text(&dir.join(ABLATION_FILE), &report::to_json_lines(&lines))?;
    write_text(&dir.join(CONFIG_FILE), &cfg.to_text())?;
    finish(
        dir,
        cfg,
        Command::Ablate,
        &Outcome::Success,
        Vec::new(),
        &[ABLATION_FILE.into(), CONFIG_FILE.into()],
    )?;
    Ok((Outcome::Success, lines))
}
