//! Vocabularies, embedding sets and the word2vec text format.
//!
//! All reductions here (norms, column means, projections) are sequential
//! per row so results do not depend on thread count.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_PRECISION: usize = 4;

/// An ordered set of unique tokens with a reverse index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary, failing on the first duplicate.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::new();
        for token in tokens {
            let token = token.into();
            if vocab.contains(&token) {
                return Err(Error::InvalidArgument(format!("duplicate token `{token}`")));
            }
            vocab.push(token);
        }
        Ok(vocab)
    }

    /// Appends a token. Returns its index, or `None` if it was already present.
    pub fn push(&mut self, token: impl Into<String>) -> Option<usize> {
        let token = token.into();
        if self.index.contains_key(&token) {
            return None;
        }
        let idx = self.tokens.len();
        self.index.insert(token.clone(), idx);
        self.tokens.push(token);
        Some(idx)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

/// A vocabulary paired with one `dim`-dimensional row per token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    vocab: Vocabulary,
    matrix: Array2<f64>,
}

impl EmbeddingSet {
    pub fn new(vocab: Vocabulary, matrix: Array2<f64>) -> Result<Self> {
        if vocab.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                actual: matrix.nrows(),
            });
        }
        if let Some((row, _)) = matrix
            .outer_iter()
            .enumerate()
            .find(|(_, row)| row.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Numerical(format!(
                "non-finite value in row of `{}`",
                vocab.token(row)
            )));
        }
        Ok(EmbeddingSet { vocab, matrix })
    }

    pub fn empty(dim: usize) -> Self {
        EmbeddingSet {
            vocab: Vocabulary::new(),
            matrix: Array2::zeros((0, dim)),
        }
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn row(&self, idx: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(idx)
    }

    pub fn vector(&self, token: &str) -> Option<ArrayView1<'_, f64>> {
        self.vocab.get(token).map(|idx| self.matrix.row(idx))
    }

    pub fn into_parts(self) -> (Vocabulary, Array2<f64>) {
        (self.vocab, self.matrix)
    }

    /// Copies the rows of `tokens`, in the given order.
    pub fn select<'a, I>(&self, tokens: I) -> Result<EmbeddingSet>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut vocab = Vocabulary::new();
        let mut rows = Vec::new();
        for token in tokens {
            let idx = self
                .vocab
                .get(token)
                .ok_or_else(|| Error::UnknownToken(token.to_string()))?;
            if vocab.push(token).is_some() {
                rows.push(idx);
            }
        }
        let matrix = self.matrix.select(Axis(0), &rows);
        Ok(EmbeddingSet { vocab, matrix })
    }

    /// Like [`select`](Self::select) but keeps rows in this set's order and
    /// silently skips tokens it does not contain.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> EmbeddingSet {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| keep(self.vocab.token(i)))
            .collect();
        let vocab = Vocabulary::from_tokens(rows.iter().map(|&i| self.vocab.token(i)))
            .expect("subset of a valid vocabulary");
        EmbeddingSet {
            vocab,
            matrix: self.matrix.select(Axis(0), &rows),
        }
    }
}

/// Reads word2vec text format. Returns the set and the number of skipped
/// duplicate tokens.
pub fn read_embeddings<R: BufRead>(
    mut reader: R,
    source: &Path,
    max_vocab: Option<usize>,
) -> Result<(EmbeddingSet, usize)> {
    let mut buf = Vec::new();
    let mut line_no = 0;

    let mut next_line = |buf: &mut Vec<u8>, line_no: &mut usize| -> Result<Option<String>> {
        buf.clear();
        let n = reader
            .read_until(b'\n', buf)
            .map_err(|e| Error::io(source, e))?;
        if n == 0 {
            return Ok(None);
        }
        *line_no += 1;
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        String::from_utf8(std::mem::take(buf))
            .map(Some)
            .map_err(|_| Error::parse(source, *line_no, "invalid UTF-8"))
    };

    let header = next_line(&mut buf, &mut line_no)?
        .ok_or_else(|| Error::parse(source, 1, "missing header"))?;
    let mut fields = header.split_whitespace();
    let parse_header_field = |f: Option<&str>| -> Result<usize> {
        f.and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(source, 1, "header must be `<count> <dim>`"))
    };
    let declared = parse_header_field(fields.next())?;
    let dim = parse_header_field(fields.next())?;
    if fields.next().is_some() {
        return Err(Error::parse(source, 1, "header must be `<count> <dim>`"));
    }

    let limit = max_vocab.map_or(declared, |m| m.min(declared));
    let mut vocab = Vocabulary::new();
    let mut data = Vec::with_capacity(limit.min(1 << 20) * dim);
    let mut duplicates = 0;

    while vocab.len() < limit {
        let Some(line) = next_line(&mut buf, &mut line_no)? else {
            break;
        };
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line");
        let start = data.len();
        for part in parts {
            let value: f64 = part.parse().map_err(|_| {
                Error::parse(source, line_no, format!("cannot parse `{part}` as a number"))
            })?;
            if !value.is_finite() {
                return Err(Error::parse(source, line_no, "non-finite value"));
            }
            data.push(value);
        }
        let found = data.len() - start;
        if found != dim {
            return Err(Error::parse(
                source,
                line_no,
                format!("expected {dim} values, found {found}"),
            ));
        }
        if vocab.push(token).is_none() {
            data.truncate(start);
            duplicates += 1;
        }
    }

    if vocab.len() < limit {
        warn!(
            "{}: header declares {declared} vectors, read {}",
            source.display(),
            vocab.len()
        );
    }
    if duplicates > 0 {
        warn!(
            "{}: skipped {duplicates} duplicate token(s)",
            source.display()
        );
    }

    let matrix = Array2::from_shape_vec((vocab.len(), dim), data)
        .expect("row count and width checked while reading");
    Ok((EmbeddingSet { vocab, matrix }, duplicates))
}

pub fn load_embeddings(path: impl AsRef<Path>, max_vocab: Option<usize>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), path, max_vocab).map(|(set, _)| set)
}

pub fn write_embeddings<W: Write>(set: &EmbeddingSet, mut out: W, precision: usize) -> std::io::Result<()> {
    writeln!(out, "{} {}", set.len(), set.dim())?;
    for (token, row) in set.vocab.iter().zip(set.matrix.outer_iter()) {
        out.write_all(token.as_bytes())?;
        for v in row {
            write!(out, " {v:.precision$}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>, precision: usize) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(set, BufWriter::new(file), precision).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Unit,
    CenterUnit,
    None,
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(NormMode::Unit),
            "center_unit" | "center-unit" => Ok(NormMode::CenterUnit),
            "none" => Ok(NormMode::None),
            _ => Err(Error::InvalidArgument(format!(
                "unknown normalization `{s}` (expected unit, center_unit or none)"
            ))),
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMode::Unit => "unit",
            NormMode::CenterUnit => "center_unit",
            NormMode::None => "none",
        })
    }
}

pub fn normalize(set: &EmbeddingSet, mode: NormMode) -> Result<EmbeddingSet> {
    let mut matrix = set.matrix.clone();
    match mode {
        NormMode::None => return Ok(set.clone()),
        NormMode::Unit => {}
        NormMode::CenterUnit => {
            let mean = column_mean(&matrix);
            for mut row in matrix.outer_iter_mut() {
                row -= &mean;
            }
        }
    }
    for (idx, mut row) in matrix.outer_iter_mut().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm(set.vocab.token(idx).to_string()));
        }
        row /= norm;
    }
    Ok(EmbeddingSet {
        vocab: set.vocab.clone(),
        matrix,
    })
}

fn column_mean(matrix: &Array2<f64>) -> ndarray::Array1<f64> {
    let mut mean = ndarray::Array1::zeros(matrix.ncols());
    for row in matrix.outer_iter() {
        mean += &row;
    }
    if matrix.nrows() > 0 {
        mean /= matrix.nrows() as f64;
    }
    mean
}

/// One projected point of a PCA export.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaRow {
    pub token: String,
    pub label: String,
    pub coords: Vec<f64>,
}

/// Projects the union of `sets` onto its top `dims` principal directions.
///
/// Rows are centered jointly. Each direction's sign is chosen so its
/// largest-magnitude loading is positive.
pub fn pca_project(sets: &[(&EmbeddingSet, &str)], dims: usize) -> Result<Vec<PcaRow>> {
    let Some((first, _)) = sets.first() else {
        return Err(Error::Empty("no embedding sets given".into()));
    };
    let d = first.dim();
    if let Some((other, _)) = sets.iter().find(|(s, _)| s.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: other.dim(),
        });
    }
    if dims == 0 || dims > d {
        return Err(Error::InvalidArgument(format!(
            "cannot project {d}-dimensional vectors onto {dims} components"
        )));
    }
    let n: usize = sets.iter().map(|(s, _)| s.len()).sum();
    if n < dims {
        return Err(Error::InvalidArgument(format!(
            "need at least {dims} rows for PCA, got {n}"
        )));
    }

    let mut mean = vec![0.0; d];
    for (set, _) in sets {
        for row in set.matrix.outer_iter() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut centered = DMatrix::<f64>::zeros(n, d);
    let mut r = 0;
    for (set, _) in sets {
        for row in set.matrix.outer_iter() {
            for (c, v) in row.iter().enumerate() {
                centered[(r, c)] = v - mean[c];
            }
            r += 1;
        }
    }

    let svd = centered.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    // nalgebra does not guarantee sorted singular values.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut directions = DMatrix::<f64>::zeros(d, dims);
    for (out_col, &comp) in order.iter().take(dims).enumerate() {
        let mut dir: Vec<f64> = v_t.row(comp).iter().copied().collect();
        let pivot = dir
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > dir[best].abs() { i } else { best });
        if dir[pivot] < 0.0 {
            dir.iter_mut().for_each(|v| *v = -*v);
        }
        for (i, v) in dir.into_iter().enumerate() {
            directions[(i, out_col)] = v;
        }
    }
    let coords = &centered * &directions;

    let mut out = Vec::with_capacity(n);
    let mut r = 0;
    for (set, label) in sets {
        for token in set.vocab.iter() {
            out.push(PcaRow {
                token: token.to_string(),
                label: label.to_string(),
                coords: coords.row(r).iter().copied().collect(),
            });
            r += 1;
        }
    }
    Ok(out)
}

fn pca_column_name(i: usize) -> String {
    match i {
        0 => "x".into(),
        1 => "y".into(),
        2 => "z".into(),
        _ => format!("c{}", i + 1),
    }
}

/// Writes `token\tlabel\tx\ty` TSV with a header line.
pub fn write_pca_tsv<W: Write>(rows: &[PcaRow], mut out: W) -> std::io::Result<()> {
    let dims = rows.first().map_or(2, |r| r.coords.len());
    write!(out, "token\tlabel")?;
    for i in 0..dims {
        write!(out, "\t{}", pca_column_name(i))?;
    }
    out.write_all(b"\n")?;
    for row in rows {
        write!(out, "{}\t{}", row.token, row.label)?;
        for v in &row.coords {
            write!(out, "\t{v}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}
