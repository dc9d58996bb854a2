//! Command-line flags. Flags override values from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "mmdmap", version, about = "Unsupervised cross-lingual embedding mapping by kernel MMD matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Subcmd,
}

#[derive(Debug, Subcommand)]
pub enum Subcmd {
    /// Learn a mapping: initialization, MMD training, refinement.
    Align(RunArgs),
    /// Score a trained mapping on a gold lexicon and/or similarity pairs.
    Evaluate(RunArgs),
    /// Write the dictionary a trained mapping induces.
    Induce(RunArgs),
    /// Run the full model and its three single-stage ablations.
    Ablate(RunArgs),
}

impl Subcmd {
    pub fn split(&self) -> (Command, &RunArgs) {
        match self {
            Subcmd::Align(a) => (Command::Align, a),
            Subcmd::Evaluate(a) => (Command::Evaluate, a),
            Subcmd::Induce(a) => (Command::Induce, a),
            Subcmd::Ablate(a) => (Command::Ablate, a),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Key-value config file (`key = value`, `#` comments).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub src_emb: Option<PathBuf>,
    #[arg(long)]
    pub tgt_emb: Option<PathBuf>,
    /// Gold lexicon, one `source target` pair per line.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Similarity pairs, `source target score` per line.
    #[arg(long)]
    pub sim_pairs: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trained mapping for `evaluate` and `induce`.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Orthogonality retraction strength.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub no_init: bool,
    #[arg(long)]
    pub no_mmd: bool,
    #[arg(long)]
    pub no_refine: bool,
    /// `nn` or `csls`.
    #[arg(long, value_parser = ["nn", "csls"])]
    pub retrieval: Option<String>,
    /// Words loaded per language, or `none`.
    #[arg(long)]
    pub max_vocab: Option<String>,
    /// Compressed dimension for the MMD, or `none`.
    #[arg(long)]
    pub compress_dim: Option<String>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    /// Flag values as config key-value pairs, in application order.
    pub fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.push((k.to_owned(), v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("src_emb", path(&self.src_emb));
        put("tgt_emb", path(&self.tgt_emb));
        put("gold", path(&self.gold));
        put("sim_pairs", path(&self.sim_pairs));
        put("out", path(&self.out));
        put("mapping", path(&self.mapping));
        put("seed", self.seed.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("beta", self.beta.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("init", self.no_init.then(|| "false".to_owned()));
        put("mmd", self.no_mmd.then(|| "false".to_owned()));
        put("refine", self.no_refine.then(|| "false".to_owned()));
        put("retrieval", self.retrieval.clone());
        put("max_vocab", self.max_vocab.clone());
        put("compress_dim", self.compress_dim.clone());
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            kv.push((k.trim().to_owned(), v.to_owned()));
        }
        Ok(kv)
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (k, v) in self.overrides()? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "seed = 1\nbatch_size = 64\nmmd = true\n").unwrap();
        let cli = Cli::try_parse_from([
            "mmdmap",
            "align",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "9",
            "--no-mmd",
            "--retrieval",
            "nn",
            "--compress-dim",
            "none",
            "--set",
            "patience=7",
        ])
        .unwrap();
        let (cmd, args) = cli.command.split();
        assert_eq!(cmd, Command::Align);
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.pipeline.train.seed, 9);
        assert_eq!(cfg.pipeline.train.batch_size, 64);
        assert_eq!(cfg.pipeline.train.patience, 7);
        assert!(!cfg.pipeline.enable_mmd);
        assert_eq!(cfg.pipeline.compress_dim, None);
        assert_eq!(cfg.retrieval, mmdmap::Method::Nn);
    }

    #[test]
    fn unknown_retrieval_is_rejected_by_the_parser() {
        assert!(Cli::try_parse_from(["mmdmap", "align", "--retrieval", "dot"]).is_err());
    }
}
