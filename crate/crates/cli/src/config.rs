//! Run configuration: a `key = value` text file with `#` comments, overridden
//! by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mmdmap::pipeline::PipelineConfig;
use mmdmap::{Method, NormStep};

use crate::error::{CliError, Result};

/// Which subcommand a configuration is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Align,
    Evaluate,
    Induce,
    Ablate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Align => "align",
            Command::Evaluate => "evaluate",
            Command::Induce => "induce",
            Command::Ablate => "ablate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub src_emb: Option<PathBuf>,
    pub tgt_emb: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub sim_pairs: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Trained mapping read by `evaluate` and `induce`.
    pub mapping: Option<PathBuf>,
    pub max_vocab: Option<usize>,
    /// Retrieval used for refinement, evaluation and induction.
    pub retrieval: Method,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            src_emb: None,
            tgt_emb: None,
            gold: None,
            sim_pairs: None,
            out: None,
            mapping: None,
            max_vocab: Some(200_000),
            retrieval: Method::Csls,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Every key accepted by [`RunConfig::set`], in serialization order.
pub const KEYS: &[&str] = &[
    "src_emb",
    "tgt_emb",
    "gold",
    "sim_pairs",
    "out",
    "mapping",
    "max_vocab",
    "retrieval",
    "seed",
    "batch_size",
    "beta",
    "lr",
    "epochs",
    "patience",
    "sample_vocab",
    "init",
    "mmd",
    "refine",
    "init_vocab",
    "init_csls",
    "init_csls_k",
    "csls_k",
    "dict_vocab",
    "mutual_nn",
    "refine_iters",
    "normalize",
    "compress_dim",
    "criterion_words",
    "convergence_floor",
    "chance_rotations",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_optional(key: &str, value: &str) -> Result<Option<usize>> {
    if value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn optional_text(v: Option<usize>) -> String {
    v.map_or_else(|| "none".to_owned(), |n| n.to_string())
}

fn path_text(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let p = &mut self.pipeline;
        match key {
            "src_emb" => self.src_emb = Some(value.into()),
            "tgt_emb" => self.tgt_emb = Some(value.into()),
            "gold" => self.gold = Some(value.into()),
            "sim_pairs" => self.sim_pairs = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "mapping" => self.mapping = Some(value.into()),
            "max_vocab" => self.max_vocab = parse_optional(key, value)?,
            "retrieval" => {
                self.retrieval = value.parse()?;
                p.refine.method = self.retrieval;
            }
            "seed" => p.train.seed = parse(key, value)?,
            "batch_size" => p.train.batch_size = parse(key, value)?,
            "beta" => p.train.beta = parse(key, value)?,
            "lr" => p.train.lr0 = parse(key, value)?,
            "epochs" => p.train.max_epochs = parse(key, value)?,
            "patience" => p.train.patience = parse(key, value)?,
            "sample_vocab" => p.train.sample_vocab = parse_optional(key, value)?,
            "init" => p.enable_init = parse_bool(key, value)?,
            "mmd" => p.enable_mmd = parse_bool(key, value)?,
            "refine" => p.enable_refine = parse_bool(key, value)?,
            "init_vocab" => p.init.vocab_cap = parse(key, value)?,
            "init_csls" => p.init.use_csls = parse_bool(key, value)?,
            "init_csls_k" => p.init.csls_k = parse(key, value)?,
            "csls_k" => p.refine.csls_k = parse(key, value)?,
            "dict_vocab" => p.refine.dict_vocab = parse(key, value)?,
            "mutual_nn" => p.refine.mutual_nn = parse_bool(key, value)?,
            "refine_iters" => p.refine.refine_iters = parse(key, value)?,
            "normalize" => p.normalize = NormStep::parse_list(value)?,
            "compress_dim" => p.compress_dim = parse_optional(key, value)?,
            "criterion_words" => p.criterion_words = parse(key, value)?,
            "convergence_floor" => p.convergence_floor = parse(key, value)?,
            "chance_rotations" => p.chance_rotations = parse(key, value)?,
            other => return Err(CliError::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value, got {raw:?}", lineno + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("config file {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Every set key with its text value, in [`KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let p = &self.pipeline;
        let normalize = if p.normalize.is_empty() {
            "none".to_owned()
        } else {
            p.normalize.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        };
        let values: Vec<Option<String>> = vec![
            path_text(&self.src_emb),
            path_text(&self.tgt_emb),
            path_text(&self.gold),
            path_text(&self.sim_pairs),
            path_text(&self.out),
            path_text(&self.mapping),
            Some(optional_text(self.max_vocab)),
            Some(self.retrieval.to_string()),
            Some(p.train.seed.to_string()),
            Some(p.train.batch_size.to_string()),
            Some(p.train.beta.to_string()),
            Some(p.train.lr0.to_string()),
            Some(p.train.max_epochs.to_string()),
            Some(p.train.patience.to_string()),
            Some(optional_text(p.train.sample_vocab)),
            Some(p.enable_init.to_string()),
            Some(p.enable_mmd.to_string()),
            Some(p.enable_refine.to_string()),
            Some(p.init.vocab_cap.to_string()),
            Some(p.init.use_csls.to_string()),
            Some(p.init.csls_k.to_string()),
            Some(p.refine.csls_k.to_string()),
            Some(p.refine.dict_vocab.to_string()),
            Some(p.refine.mutual_nn.to_string()),
            Some(p.refine.refine_iters.to_string()),
            Some(normalize),
            Some(optional_text(p.compress_dim)),
            Some(p.criterion_words.to_string()),
            Some(p.convergence_floor.to_string()),
            Some(p.chance_rotations.to_string()),
        ];
        KEYS.iter()
            .zip(values)
            .filter_map(|(k, v)| v.map(|v| (*k, v)))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Checks required inputs for `cmd`, that they exist, and that the
    /// output directory can be created.
    pub fn validate_for(&self, cmd: Command) -> Result<()> {
        self.pipeline.validate()?;
        if self.pipeline.refine.method != self.retrieval {
            return Err(CliError::config("refinement and evaluation retrieval disagree"));
        }
        let need = |name: &str, p: &Option<PathBuf>| -> Result<()> {
            match p {
                None => Err(CliError::config(format!("{} requires {name}", cmd.name()))),
                Some(p) if !p.is_file() => Err(CliError::config(format!("{name} {} does not exist", p.display()))),
                Some(_) => Ok(()),
            }
        };
        need("src_emb", &self.src_emb)?;
        need("tgt_emb", &self.tgt_emb)?;
        match cmd {
            Command::Align => {}
            Command::Evaluate => {
                need("mapping", &self.mapping)?;
                if self.gold.is_none() && self.sim_pairs.is_none() {
                    return Err(CliError::config("evaluate requires gold and/or sim_pairs"));
                }
                if self.gold.is_some() {
                    need("gold", &self.gold)?;
                }
                if self.sim_pairs.is_some() {
                    need("sim_pairs", &self.sim_pairs)?;
                }
            }
            Command::Induce => need("mapping", &self.mapping)?,
            Command::Ablate => need("gold", &self.gold)?,
        }
        let out_required = cmd != Command::Evaluate;
        match &self.out {
            None if out_required => return Err(CliError::config(format!("{} requires out", cmd.name()))),
            None => {}
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| CliError::config(format!("output directory {}: {e}", dir.display())))?;
                let meta = fs::metadata(dir).map_err(|e| CliError::config(format!("output directory {}: {e}", dir.display())))?;
                if meta.permissions().readonly() {
                    return Err(CliError::config(format!("output directory {} is read-only", dir.display())));
                }
            }
        }
        Ok(())
    }
}
