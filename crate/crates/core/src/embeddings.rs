//! Monolingual embedding spaces, lexicons, and their text formats.
//!
//! Embeddings use the fastText `.vec` layout: a header line `n d` followed by
//! one `word c1 … cd` line per word, most frequent word first. Lexicons are
//! two-column `src tgt` text, and word-similarity sets are three-column
//! `src tgt score` text.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Malformed lines are tolerated up to this fraction of the lines read.
const MAX_MALFORMED_FRACTION: f64 = 0.01;

/// Frequency-ordered word list with an exact reverse index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary, keeping the first occurrence of repeated words.
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::default();
        for w in words {
            vocab.push(w.into());
        }
        vocab
    }

    /// Appends `word` and returns its rank, or `None` if it is already present.
    fn push(&mut self, word: String) -> Option<usize> {
        if self.index.contains_key(&word) {
            return None;
        }
        let rank = self.words.len();
        self.index.insert(word.clone(), rank);
        self.words.push(word);
        Some(rank)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, rank: usize) -> &str {
        &self.words[rank]
    }

    pub fn rank(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    fn truncated(&self, n: usize) -> Vocabulary {
        Vocabulary::new(self.words.iter().take(n).cloned())
    }

    fn permuted(&self, order: &[usize]) -> Vocabulary {
        Vocabulary::new(order.iter().map(|&i| self.words[i].clone()))
    }
}

/// Preprocessing step applied by [`EmbeddingSpace::normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormStep {
    /// Divide every row by its Euclidean norm.
    Unit,
    /// Subtract the column mean.
    Center,
}

impl NormStep {
    /// The default `[unit, center, unit]` pipeline.
    pub const DEFAULT: [NormStep; 3] = [NormStep::Unit, NormStep::Center, NormStep::Unit];

    pub fn parse_list(s: &str) -> Result<Vec<NormStep>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty() && *t != "none")
            .map(|t| match t {
                "unit" => Ok(NormStep::Unit),
                "center" => Ok(NormStep::Center),
                other => Err(Error::Config(format!("unknown normalization step {other:?}"))),
            })
            .collect()
    }
}

impl std::fmt::Display for NormStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormStep::Unit => "unit",
            NormStep::Center => "center",
        })
    }
}

/// A vocabulary paired with an `n × d` matrix whose row `i` is the vector of
/// word `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    vocab: Vocabulary,
    matrix: DMatrix<f64>,
}

impl EmbeddingSpace {
    pub fn new(vocab: Vocabulary, matrix: DMatrix<f64>) -> Result<Self> {
        if vocab.len() != matrix.nrows() {
            return Err(Error::Shape(format!(
                "{} words but {} rows",
                vocab.len(),
                matrix.nrows()
            )));
        }
        if vocab.is_empty() || matrix.ncols() == 0 {
            return Err(Error::Empty("embedding space".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding matrix".into()));
        }
        Ok(EmbeddingSpace { vocab, matrix })
    }

    /// Space with generated words `w0, w1, …` (or `prefix0, …`).
    pub fn from_matrix(prefix: &str, matrix: DMatrix<f64>) -> Result<Self> {
        let vocab = Vocabulary::new((0..matrix.nrows()).map(|i| format!("{prefix}{i}")));
        EmbeddingSpace::new(vocab, matrix)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn vector(&self, word: &str) -> Option<Vec<f64>> {
        self.vocab
            .rank(word)
            .map(|r| self.matrix.row(r).iter().copied().collect())
    }

    /// The `n` most frequent words (or all of them).
    pub fn head(&self, n: usize) -> EmbeddingSpace {
        let n = n.min(self.len());
        EmbeddingSpace {
            vocab: self.vocab.truncated(n),
            matrix: self.matrix.rows(0, n).into_owned(),
        }
    }

    /// Reorders rows: output row `i` is input row `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<EmbeddingSpace> {
        let mut seen = vec![false; self.len()];
        if order.len() != self.len() || order.iter().any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::Shape("order is not a permutation of the rows".into()));
        }
        Ok(EmbeddingSpace {
            vocab: self.vocab.permuted(order),
            matrix: crate::linalg::select_rows(&self.matrix, order),
        })
    }

    /// Applies `steps` in order and returns the number of zero rows that
    /// `unit` steps had to leave untouched.
    pub fn normalize(&mut self, steps: &[NormStep]) -> usize {
        let mut zero_rows = 0;
        for step in steps {
            match step {
                NormStep::Unit => {
                    for mut row in self.matrix.row_iter_mut() {
                        let norm = row.norm();
                        if norm > 0.0 {
                            row /= norm;
                        } else {
                            zero_rows += 1;
                        }
                    }
                }
                NormStep::Center => {
                    let mean = self.matrix.row_mean();
                    for mut row in self.matrix.row_iter_mut() {
                        row -= &mean;
                    }
                }
            }
        }
        if zero_rows > 0 {
            warn!("normalization left {zero_rows} zero rows unscaled");
        }
        zero_rows
    }

    /// Consuming form of [`normalize`](Self::normalize).
    pub fn normalized(mut self, steps: &[NormStep]) -> EmbeddingSpace {
        self.normalize(steps);
        self
    }
}

/// Line accounting for the text loaders.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseReport {
    /// Data lines examined (header excluded).
    pub lines: usize,
    /// Lines skipped as malformed.
    pub skipped: usize,
    /// Well-formed lines dropped because their word was already seen.
    pub duplicates: usize,
}

impl ParseReport {
    fn check_malformed(&self) -> Result<()> {
        if self.skipped as f64 > MAX_MALFORMED_FRACTION * self.lines as f64 {
            return Err(Error::TooManyMalformed {
                skipped: self.skipped,
                lines: self.lines,
            });
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Loads a `.vec` file, keeping at most `max_vocab` words.
pub fn load_embeddings(path: impl AsRef<Path>, max_vocab: Option<usize>) -> Result<(EmbeddingSpace, ParseReport)> {
    let path = path.as_ref();
    read_embeddings(open(path)?, max_vocab).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        Error::Empty(_) => Error::Empty(path.display().to_string()),
        other => other,
    })
}

/// Parses `.vec` text from any buffered reader.
///
/// Rows whose component count disagrees with the dimension, or that contain
/// a non-numeric or non-finite component, are skipped with a warning. More
/// than 1% skipped lines is an error. When the header disagrees with the
/// data, the observed dimension (first data row) and row count win.
pub fn read_embeddings<R: BufRead>(reader: R, max_vocab: Option<usize>) -> Result<(EmbeddingSpace, ParseReport)> {
    let max_vocab = max_vocab.unwrap_or(usize::MAX);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::Empty("embedding file".into()))?;
    let (header_n, header_d) = parse_header(&header)?;

    let mut report = ParseReport::default();
    let mut vocab = Vocabulary::default();
    let mut data: Vec<f64> = Vec::with_capacity(header_n.min(max_vocab).saturating_mul(header_d));
    let mut dim: Option<usize> = None;
    let mut row = Vec::with_capacity(header_d);

    for (lineno, line) in lines.enumerate() {
        if vocab.len() >= max_vocab {
            break;
        }
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let mut fields = line.split_ascii_whitespace();
        let word = fields.next().unwrap_or_default();
        row.clear();
        let mut numeric = true;
        for f in fields {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    numeric = false;
                    break;
                }
            }
        }
        if !numeric {
            warn!("line {}: non-numeric component, skipped", lineno + 2);
            report.skipped += 1;
            continue;
        }
        let d = *dim.get_or_insert_with(|| {
            if row.len() != header_d {
                warn!("header declares dimension {header_d} but rows have {}; using observed", row.len());
            }
            row.len()
        });
        if row.len() != d || d == 0 {
            warn!("line {}: expected {d} components, found {}, skipped", lineno + 2, row.len());
            report.skipped += 1;
            continue;
        }
        if vocab.push(word.to_owned()).is_none() {
            report.duplicates += 1;
            continue;
        }
        data.extend_from_slice(&row);
    }

    report.check_malformed()?;
    let dim = dim.unwrap_or(0);
    if vocab.is_empty() || dim == 0 {
        return Err(Error::Empty("embedding file".into()));
    }
    if vocab.len() != header_n && vocab.len() < max_vocab {
        warn!("header declares {header_n} vectors but {} were read; using observed", vocab.len());
    }
    let matrix = DMatrix::from_row_slice(vocab.len(), dim, &data);
    Ok((EmbeddingSpace::new(vocab, matrix)?, report))
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    match fields.as_slice() {
        [n, d] => match (n.parse(), d.parse()) {
            (Ok(n), Ok(d)) => Ok((n, d)),
            _ => Err(Error::Header(line.to_owned())),
        },
        _ => Err(Error::Header(line.to_owned())),
    }
}

/// Writes `space` in `.vec` format. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn save_embeddings(space: &EmbeddingSpace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    write_embeddings(space, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_embeddings<W: Write>(space: &EmbeddingSpace, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{} {}", space.len(), space.dim())?;
    for (word, row) in space.vocab.words().iter().zip(space.matrix.row_iter()) {
        write!(out, "{word}")?;
        for v in row.iter() {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Ordered, deduplicated list of translation pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicon {
    pairs: Vec<(String, String)>,
    seen: HashSet<(String, String)>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pair unless it is already present. Returns whether it was added.
    ///
    /// Words must be nonempty and free of whitespace so the text form
    /// round-trips.
    pub fn insert(&mut self, src: impl Into<String>, tgt: impl Into<String>) -> Result<bool> {
        let (src, tgt) = (src.into(), tgt.into());
        for w in [&src, &tgt] {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid lexicon word {w:?}")));
            }
        }
        let pair = (src, tgt);
        if self.seen.contains(&pair) {
            return Ok(false);
        }
        self.seen.insert(pair.clone());
        self.pairs.push(pair);
        Ok(true)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Converts rank pairs into a word lexicon.
    pub fn from_index_pairs(pairs: &[(usize, usize)], src: &Vocabulary, tgt: &Vocabulary) -> Lexicon {
        let mut lex = Lexicon::new();
        for &(i, j) in pairs {
            // vocabulary words never contain ASCII whitespace
            let _ = lex.insert(src.word(i), tgt.word(j));
        }
        lex
    }

    /// Target words grouped by source word, in first-appearance order.
    pub fn grouped(&self) -> Vec<(&str, Vec<&str>)> {
        let mut order: Vec<(&str, Vec<&str>)> = Vec::new();
        let mut pos: HashMap<&str, usize> = HashMap::new();
        for (s, t) in &self.pairs {
            let i = *pos.entry(s.as_str()).or_insert_with(|| {
                order.push((s.as_str(), Vec::new()));
                order.len() - 1
            });
            order[i].1.push(t.as_str());
        }
        order
    }
}

impl FromIterator<(String, String)> for Lexicon {
    /// Invalid pairs are dropped.
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        let mut lex = Lexicon::new();
        for (s, t) in iter {
            let _ = lex.insert(s, t);
        }
        lex
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<(Lexicon, ParseReport)> {
    let path = path.as_ref();
    read_lexicon(open(path)?).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    })
}

/// Parses two-column lexicon text. Lines without exactly two fields are
/// skipped with a warning.
pub fn read_lexicon<R: BufRead>(reader: R) -> Result<(Lexicon, ParseReport)> {
    let mut lex = Lexicon::new();
    let mut report = ParseReport::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if let [s, t] = fields.as_slice() {
            if !lex.insert(*s, *t)? {
                report.duplicates += 1;
            }
        } else {
            warn!("lexicon line {}: expected 2 fields, found {}", lineno + 1, fields.len());
            report.skipped += 1;
        }
    }
    Ok((lex, report))
}

pub fn save_lexicon(lex: &Lexicon, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    write_lexicon(lex, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_lexicon<W: Write>(lex: &Lexicon, out: &mut W) -> std::io::Result<()> {
    for (s, t) in &lex.pairs {
        writeln!(out, "{s} {t}")?;
    }
    Ok(())
}

/// A cross-lingual word pair with a human similarity judgement.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub src: String,
    pub tgt: String,
    pub score: f64,
}

pub fn load_similarity_pairs(path: impl AsRef<Path>) -> Result<(Vec<ScoredPair>, ParseReport)> {
    let path = path.as_ref();
    read_similarity_pairs(open(path)?).map_err(|e| match e {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    })
}

/// Parses three-column `src tgt score` text; other lines are skipped.
pub fn read_similarity_pairs<R: BufRead>(reader: R) -> Result<(Vec<ScoredPair>, ParseReport)> {
    let mut pairs = Vec::new();
    let mut report = ParseReport::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [s, t, score] => match score.parse::<f64>() {
                Ok(score) if score.is_finite() => pairs.push(ScoredPair {
                    src: (*s).to_owned(),
                    tgt: (*t).to_owned(),
                    score,
                }),
                _ => {
                    warn!("similarity line {}: bad score {score:?}", lineno + 1);
                    report.skipped += 1;
                }
            },
            _ => {
                warn!("similarity line {}: expected 3 fields, found {}", lineno + 1, fields.len());
                report.skipped += 1;
            }
        }
    }
    Ok((pairs, report))
}
