//! Exact nearest-neighbour retrieval by cosine similarity and CSLS.
//!
//! Similarities are computed block-wise as matrix products of unit-normalized
//! rows. Top-k selection orders by score, then by lower target index, so
//! results are deterministic regardless of the number of worker threads.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::embed_io::EmbeddingSet;
use crate::error::{Error, Result};

pub const DEFAULT_CSLS_K: usize = 10;

const BLOCK_ROWS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Cosine,
    /// Cross-domain similarity local scaling over `k` neighbours.
    Csls { k: usize },
}

impl Default for Metric {
    fn default() -> Self {
        Metric::Csls { k: DEFAULT_CSLS_K }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Cosine => f.write_str("cosine"),
            Metric::Csls { k } => write!(f, "csls(k={k})"),
        }
    }
}

impl Metric {
    /// Parses `cosine` or `csls`, using `k` for the latter.
    pub fn parse(name: &str, k: usize) -> Result<Metric> {
        match name {
            "cosine" | "nn" => Ok(Metric::Cosine),
            "csls" => Ok(Metric::Csls { k }),
            _ => Err(Error::InvalidArgument(format!(
                "unknown metric `{name}` (expected csls or cosine)"
            ))),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::parse(s, DEFAULT_CSLS_K)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub index: usize,
    pub score: f64,
}

/// Ranked hits per query; `queries[i]` is the source row of `hits[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResult {
    pub queries: Vec<usize>,
    pub hits: Vec<Vec<Hit>>,
}

impl RetrievalResult {
    /// Resolves indices to tokens: `(query, [(target, score)])`.
    pub fn resolve<'a>(
        &'a self,
        src: &'a EmbeddingSet,
        tgt: &'a EmbeddingSet,
    ) -> impl Iterator<Item = (&'a str, Vec<(&'a str, f64)>)> + 'a {
        self.queries.iter().zip(&self.hits).map(move |(&q, hits)| {
            (
                src.vocab().token(q),
                hits.iter()
                    .map(|h| (tgt.vocab().token(h.index), h.score))
                    .collect(),
            )
        })
    }
}

/// `a` ranks before `b`.
fn ranks_before(a: &Hit, b: &Hit) -> bool {
    match a.score.partial_cmp(&b.score) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => a.index < b.index,
    }
}

/// Bounded insertion-sorted top-k.
struct TopK {
    k: usize,
    hits: Vec<Hit>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            hits: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, index: usize, score: f64) {
        let hit = Hit { index, score };
        if self.hits.len() == self.k {
            match self.hits.last() {
                Some(last) if ranks_before(&hit, last) => {}
                _ => return,
            }
        }
        let pos = self.hits.partition_point(|h| ranks_before(h, &hit));
        self.hits.insert(pos, hit);
        self.hits.truncate(self.k);
    }

    fn into_hits(self) -> Vec<Hit> {
        self.hits
    }
}

/// Top-`k` of one row of scores.
fn top_k_row(row: impl Iterator<Item = f64>, k: usize) -> Vec<Hit> {
    let mut top = TopK::new(k);
    for (j, s) in row.enumerate() {
        top.offer(j, s);
    }
    top.into_hits()
}

/// Mean of the `k` largest values, summed largest first.
fn mean_top_k(row: impl Iterator<Item = f64>, k: usize) -> f64 {
    let hits = top_k_row(row, k);
    hits.iter().map(|h| h.score).sum::<f64>() / hits.len() as f64
}

pub(crate) fn unit_rows(set: &EmbeddingSet) -> Result<Array2<f64>> {
    let mut m = set.matrix().clone();
    for (i, mut row) in m.outer_iter_mut().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm(set.vocab().token(i).to_string()));
        }
        row /= norm;
    }
    Ok(m)
}

/// Applies `f(first_row, block_of_similarities)` to consecutive row blocks of
/// `a · bᵀ`, in parallel, and concatenates the per-block outputs in order.
fn for_blocks<T, F>(a: ArrayView2<f64>, b: ArrayView2<f64>, rows: &[usize], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[usize], ArrayView2<f64>) -> Vec<T> + Sync,
{
    let bt = b.t();
    rows.par_chunks(BLOCK_ROWS)
        .map(|chunk| {
            let block = a.select(Axis(0), chunk);
            let sims = block.dot(&bt);
            f(chunk, sims.view())
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Precomputed state for repeated retrieval from `src` into `tgt`.
pub struct Retriever {
    src: Array2<f64>,
    tgt: Array2<f64>,
    metric: Metric,
    /// Mean similarity of each source row to its k nearest targets.
    src_hub: Vec<f64>,
    /// Mean similarity of each target row to its k nearest sources.
    tgt_hub: Vec<f64>,
}

impl Retriever {
    pub fn new(src: &EmbeddingSet, tgt: &EmbeddingSet, metric: Metric) -> Result<Self> {
        if src.dim() != tgt.dim() {
            return Err(Error::DimensionMismatch {
                expected: src.dim(),
                actual: tgt.dim(),
            });
        }
        let src_m = unit_rows(src)?;
        let tgt_m = unit_rows(tgt)?;
        let (src_hub, tgt_hub) = match metric {
            Metric::Cosine => (Vec::new(), Vec::new()),
            Metric::Csls { k } => {
                if k == 0 || k > src.len() || k > tgt.len() {
                    return Err(Error::InvalidArgument(format!(
                        "CSLS neighbourhood k={k} must lie in 1..={}",
                        src.len().min(tgt.len())
                    )));
                }
                let hub = |a: &Array2<f64>, b: &Array2<f64>| -> Vec<f64> {
                    let rows: Vec<usize> = (0..a.nrows()).collect();
                    for_blocks(a.view(), b.view(), &rows, |_, sims| {
                        sims.outer_iter()
                            .map(|row| mean_top_k(row.iter().copied(), k))
                            .collect()
                    })
                };
                (hub(&src_m, &tgt_m), hub(&tgt_m, &src_m))
            }
        };
        Ok(Retriever {
            src: src_m,
            tgt: tgt_m,
            metric,
            src_hub,
            tgt_hub,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Ranked targets for each listed source row.
    pub fn retrieve(&self, queries: &[usize], k_out: usize) -> RetrievalResult {
        let hits = for_blocks(self.src.view(), self.tgt.view(), queries, |chunk, sims| {
            chunk
                .iter()
                .zip(sims.outer_iter())
                .map(|(&q, row)| match self.metric {
                    Metric::Cosine => top_k_row(row.iter().copied(), k_out),
                    Metric::Csls { .. } => {
                        let rq = self.src_hub[q];
                        top_k_row(
                            row.iter()
                                .zip(&self.tgt_hub)
                                .map(|(&c, &rt)| 2.0 * c - rq - rt),
                            k_out,
                        )
                    }
                })
                .collect()
        });
        RetrievalResult {
            queries: queries.to_vec(),
            hits,
        }
    }

    pub fn retrieve_all(&self, k_out: usize) -> RetrievalResult {
        let queries: Vec<usize> = (0..self.src.nrows()).collect();
        self.retrieve(&queries, k_out)
    }

    /// For every target row, the best-scoring source row under the same
    /// score function. Used for mutual nearest neighbours.
    pub fn best_sources(&self) -> Vec<Hit> {
        let rows: Vec<usize> = (0..self.tgt.nrows()).collect();
        for_blocks(self.tgt.view(), self.src.view(), &rows, |chunk, sims| {
            chunk
                .iter()
                .zip(sims.outer_iter())
                .map(|(&t, row)| {
                    let best = match self.metric {
                        Metric::Cosine => top_k_row(row.iter().copied(), 1),
                        Metric::Csls { .. } => {
                            let rt = self.tgt_hub[t];
                            top_k_row(
                                row.iter()
                                    .zip(&self.src_hub)
                                    .map(|(&c, &rs)| 2.0 * c - rs - rt),
                                1,
                            )
                        }
                    };
                    best[0]
                })
                .collect()
        })
    }

    pub fn num_sources(&self) -> usize {
        self.src.nrows()
    }

    pub fn num_targets(&self) -> usize {
        self.tgt.nrows()
    }

    /// Cosine similarity between source row `i` and target row `j`.
    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        self.src.slice(s![i, ..]).dot(&self.tgt.slice(s![j, ..]))
    }
}

pub fn cosine_knn(queries: &EmbeddingSet, targets: &EmbeddingSet, k_out: usize) -> Result<RetrievalResult> {
    Ok(Retriever::new(queries, targets, Metric::Cosine)?.retrieve_all(k_out))
}

/// CSLS(x, y) = 2 cos(x, y) - r_T(x) - r_S(y), with the hubness terms taken
/// over all of `queries` and `targets`.
pub fn csls(queries: &EmbeddingSet, targets: &EmbeddingSet, k: usize, k_out: usize) -> Result<RetrievalResult> {
    Ok(Retriever::new(queries, targets, Metric::Csls { k })?.retrieve_all(k_out))
}
