//! Output artifacts: text matrices, the JSON-lines run log, and the run
//! manifest with content hashes.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mmdmap::Projector;

use crate::error::{CliError, Result};

/// Writes `rows cols` followed by one whitespace-separated row per line.
/// Values round-trip exactly.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| CliError::io(path, e);
    writeln!(out, "{} {}", m.nrows(), m.ncols()).map_err(io)?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| CliError::config(format!("matrix {}: {e}", path.display())))?;
    let bad = |msg: String| CliError::config(format!("matrix {}: {msg}", path.display()));
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| CliError::io(path, e))?
        .ok_or_else(|| bad("empty file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad header {header:?}"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad(format!("bad header {header:?}")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for line in lines.take(rows) {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let before = data.len();
        for t in line.split_whitespace() {
            data.push(t.parse::<f64>().map_err(|_| bad(format!("bad value {t:?}")))?);
        }
        if data.len() - before != cols {
            return Err(bad(format!("expected {cols} values per row")));
        }
    }
    if data.len() != rows * cols {
        return Err(bad(format!("expected {rows} rows")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Projection matrix (`p × d`) followed by a final row holding the offset.
pub fn write_projector(path: &Path, proj: &Projector) -> Result<()> {
    let mut m = proj.matrix.clone().insert_row(proj.output_dim(), 0.0);
    m.row_mut(proj.output_dim()).copy_from(&proj.offset.transpose());
    write_matrix(path, &m)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Append-only JSON-lines event log.
pub struct RunLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RunLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(RunLog {
            path: path.to_owned(),
            out: create(path)?,
        })
    }

    pub fn emit<T: Serialize>(&mut self, event: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, event)?;
        writeln!(self.out).map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub ran: bool,
    pub criterion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: String,
    pub detail: Option<String>,
    pub config: Vec<(String, String)>,
    pub stages: Vec<StageEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

pub const MANIFEST: &str = "manifest.json";

impl Manifest {
    /// Hashes every file in `files` (relative to `dir`), sorted by path.
    pub fn hash_artifacts(dir: &Path, files: &[String]) -> Result<Vec<ArtifactEntry>> {
        let mut sorted = files.to_vec();
        sorted.sort();
        sorted.dedup();
        sorted
            .into_iter()
            .map(|rel| {
                let full = dir.join(&rel);
                let bytes = fs::metadata(&full).map_err(|e| CliError::io(&full, e))?.len();
                Ok(ArtifactEntry {
                    sha256: sha256_file(&full)?,
                    path: rel,
                    bytes,
                })
            })
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST), self)
    }

    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
