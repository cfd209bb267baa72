//! Linear maps between embedding spaces: least-squares and orthogonal
//! Procrustes solvers, dictionary induction and self-learning refinement.
//!
//! Convention: `W` maps the source space into the target space, acting on
//! column vectors. Embedding rows are mapped as `x ↦ W x`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::{debug, warn};
use nalgebra::DMatrix;
use ndarray::{Array2, Axis};

use crate::dictionary::SeedDictionary;
use crate::embed_io::{EmbeddingSet, Vocabulary};
use crate::error::{Error, Result};
use crate::realloc::{Allocation, ReallocatedVocabulary};
use crate::retrieval::{Metric, Retriever};

/// Tolerance on `‖WᵀW − I‖_∞` for a matrix to count as orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentMatrix {
    w: Array2<f64>,
    orthogonal: bool,
    /// Set when the solution is not unique (repeated or vanishing singular
    /// values in the Procrustes cross-covariance).
    degenerate: bool,
}

impl AlignmentMatrix {
    pub fn identity(dim: usize) -> Self {
        AlignmentMatrix {
            w: Array2::eye(dim),
            orthogonal: true,
            degenerate: false,
        }
    }

    /// Wraps a square matrix; the orthogonal flag is set if it passes the
    /// orthogonality check.
    pub fn from_matrix(w: Array2<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::DimensionMismatch {
                expected: w.nrows(),
                actual: w.ncols(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite alignment matrix".into()));
        }
        let orthogonal = orthogonality_error(&w) <= ORTHOGONALITY_TOL;
        Ok(AlignmentMatrix {
            w,
            orthogonal,
            degenerate: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn transpose(&self) -> AlignmentMatrix {
        AlignmentMatrix {
            w: self.w.t().to_owned(),
            ..*self
        }
    }

    /// `‖WᵀW − I‖_∞` (largest absolute entry).
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.w)
    }

    pub fn map_vector(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .outer_iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Maps every row of `set`.
    pub fn map(&self, set: &EmbeddingSet) -> Result<EmbeddingSet> {
        if set.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: set.dim(),
            });
        }
        let mapped = set.matrix().dot(&self.w.t());
        EmbeddingSet::new(set.vocab().clone(), mapped)
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.dim())?;
        for row in self.w.outer_iter() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    /// Reads the text form from `lines`, consuming exactly `d + 1` lines.
    pub fn read_lines<I>(lines: &mut I, source: &Path, first_line: usize) -> Result<Self>
    where
        I: Iterator<Item = std::io::Result<String>>,
    {
        let mut line_no = first_line;
        let mut next = |line_no: &mut usize| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(source, *line_no, "unexpected end of matrix"))?
                .map_err(|e| Error::io(source, e))?;
            *line_no += 1;
            Ok(line)
        };
        let header = next(&mut line_no)?;
        let d: usize = header
            .trim()
            .parse()
            .map_err(|_| Error::parse(source, line_no, "expected matrix dimension"))?;
        let mut data = Vec::with_capacity(d * d);
        for _ in 0..d {
            let line = next(&mut line_no)?;
            let start = data.len();
            for f in line.split_whitespace() {
                data.push(
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(source, line_no, format!("bad number `{f}`")))?,
                );
            }
            if data.len() - start != d {
                return Err(Error::parse(source, line_no, format!("expected {d} values")));
            }
        }
        Self::from_matrix(Array2::from_shape_vec((d, d), data).expect("checked shape"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_lines(&mut BufReader::new(file).lines(), path, 0)
    }
}

fn orthogonality_error(w: &Array2<f64>) -> f64 {
    let gram = w.t().dot(w);
    gram.indexed_iter()
        .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Column-paired training data: column `j` of `src` and of `tgt` belong to
/// `kept[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingMatrices {
    pub src: Array2<f64>,
    pub tgt: Array2<f64>,
    pub kept: Vec<(String, String)>,
    pub dropped: Vec<(String, String)>,
}

impl TrainingMatrices {
    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }
}

/// Stacks the vectors of in-vocabulary dictionary pairs as `d × K` columns.
pub fn build_training_matrices(
    dict: &SeedDictionary,
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
) -> Result<TrainingMatrices> {
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            actual: tgt.dim(),
        });
    }
    let mut src_rows = Vec::new();
    let mut tgt_rows = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (s, t) in dict.iter() {
        match (src.vocab().get(s), tgt.vocab().get(t)) {
            (Some(i), Some(j)) => {
                src_rows.push(i);
                tgt_rows.push(j);
                kept.push((s.to_string(), t.to_string()));
            }
            _ => dropped.push((s.to_string(), t.to_string())),
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty(format!(
            "no dictionary pair is in vocabulary ({} dropped)",
            dropped.len()
        )));
    }
    if !dropped.is_empty() {
        debug!("dropped {} out-of-vocabulary dictionary pairs", dropped.len());
    }
    Ok(TrainingMatrices {
        src: src.matrix().select(Axis(0), &src_rows).reversed_axes(),
        tgt: tgt.matrix().select(Axis(0), &tgt_rows).reversed_axes(),
        kept,
        dropped,
    })
}

/// Keeps the pairs that can constrain the map of the first language's
/// exclusive rows: source in L1', target in L2' or shared'.
pub fn filter_framework_pairs(
    dict: &SeedDictionary,
    realloc: &ReallocatedVocabulary,
) -> (SeedDictionary, SeedDictionary) {
    let l1: HashSet<&str> = realloc.tokens_in(Allocation::L1).collect();
    let tgt: HashSet<&str> = realloc.target_side().collect();
    let (kept, dropped): (Vec<_>, Vec<_>) = dict
        .pairs()
        .iter()
        .cloned()
        .partition(|(s, t)| l1.contains(s.as_str()) && tgt.contains(t.as_str()));
    (SeedDictionary::new(kept), SeedDictionary::new(dropped))
}

fn check_pair_shapes(x_src: &Array2<f64>, x_tgt: &Array2<f64>) -> Result<()> {
    if x_src.nrows() != x_tgt.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x_src.nrows(),
            actual: x_tgt.nrows(),
        });
    }
    if x_src.ncols() != x_tgt.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x_src.ncols(),
            actual: x_tgt.ncols(),
        });
    }
    if x_src.ncols() == 0 || x_src.nrows() == 0 {
        return Err(Error::Empty("training matrices".into()));
    }
    if x_src.iter().chain(x_tgt.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite training matrix".into()));
    }
    Ok(())
}

/// Unconstrained least squares: `W = X_tgt · pinv(X_src)`, which equals
/// `X_tgt X_srcᵀ (X_src X_srcᵀ)⁻¹` when `X_src` has full row rank.
pub fn solve_linear(x_src: &Array2<f64>, x_tgt: &Array2<f64>) -> Result<AlignmentMatrix> {
    check_pair_shapes(x_src, x_tgt)?;
    let a = to_nalgebra(x_src);
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let eps = s_max * f64::EPSILON * x_src.nrows().max(x_src.ncols()) as f64;
    let degenerate =
        svd.singular_values.len() < x_src.nrows() || svd.singular_values.iter().any(|&s| s <= eps);
    let pinv = svd
        .pseudo_inverse(eps)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let w = to_nalgebra(x_tgt) * pinv;
    Ok(AlignmentMatrix {
        w: from_nalgebra(&w),
        orthogonal: false,
        degenerate,
    })
}

/// Orthogonal Procrustes: `W = U Vᵀ` where `U Σ Vᵀ = SVD(X_tgt X_srcᵀ)`.
pub fn procrustes(x_src: &Array2<f64>, x_tgt: &Array2<f64>) -> Result<AlignmentMatrix> {
    check_pair_shapes(x_src, x_tgt)?;
    let m = to_nalgebra(&x_tgt.dot(&x_src.t()));
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD did not converge".into())),
    };
    let w = u * v_t;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD produced non-finite factors".into()));
    }

    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let tol = 1e-10 * sv[0].max(f64::MIN_POSITIVE);
    let degenerate = sv.windows(2).any(|p| p[0] - p[1] <= tol) || sv[sv.len() - 1] <= tol;
    if degenerate {
        warn!("Procrustes solution is not unique (repeated or zero singular values)");
    }
    Ok(AlignmentMatrix {
        w: from_nalgebra(&w),
        orthogonal: true,
        degenerate,
    })
}

/// `‖W X_src − X_tgt‖_F`.
pub fn frobenius_loss(w: &AlignmentMatrix, x_src: &Array2<f64>, x_tgt: &Array2<f64>) -> f64 {
    let r = w.matrix().dot(x_src) - x_tgt;
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Maps `e1` by `W`; `e2` and `shared` pass through bit-for-bit. The output
/// vocabulary is `e1`, then `e2`, then `shared`.
pub fn apply_alignment(
    w: &AlignmentMatrix,
    e1: &EmbeddingSet,
    e2: &EmbeddingSet,
    shared: &EmbeddingSet,
) -> Result<EmbeddingSet> {
    for set in [e1, e2, shared] {
        if set.dim() != w.dim() {
            return Err(Error::DimensionMismatch {
                expected: w.dim(),
                actual: set.dim(),
            });
        }
    }
    let mapped = w.map(e1)?;
    let mut vocab = Vocabulary::new();
    for token in e1.vocab().iter().chain(e2.vocab().iter()).chain(shared.vocab().iter()) {
        if vocab.push(token).is_none() {
            return Err(Error::OverlappingVocabulary(token.to_string()));
        }
    }
    let matrix = ndarray::concatenate(
        Axis(0),
        &[mapped.matrix().view(), e2.matrix().view(), shared.matrix().view()],
    )
    .expect("widths checked");
    EmbeddingSet::new(vocab, matrix)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InduceParams {
    pub metric: Metric,
    pub mutual: bool,
    /// Keep at most this many pairs, best first.
    pub top_n: Option<usize>,
    /// Only consider the first `max_rank` rows of each set (frequency rank).
    pub max_rank: Option<usize>,
}

impl Default for InduceParams {
    fn default() -> Self {
        InduceParams {
            metric: Metric::default(),
            mutual: true,
            top_n: None,
            max_rank: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InducedDictionary {
    pub dict: SeedDictionary,
    /// Metric score of each pair, aligned with `dict`.
    pub scores: Vec<f64>,
}

impl InducedDictionary {
    pub fn mean_score(&self) -> f64 {
        if self.scores.is_empty() {
            return f64::NAN;
        }
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

fn head(set: &EmbeddingSet, max_rank: Option<usize>) -> std::borrow::Cow<'_, EmbeddingSet> {
    match max_rank {
        Some(n) if n < set.len() => std::borrow::Cow::Owned(
            set.select(set.vocab().tokens()[..n].iter().map(String::as_str))
                .expect("prefix of own vocabulary"),
        ),
        _ => std::borrow::Cow::Borrowed(set),
    }
}

/// Pairs each source row with its best target; optionally keeps only mutual
/// best matches. Pairs are ranked by score (ties: lower source index).
pub fn induce_dictionary(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    params: &InduceParams,
) -> Result<InducedDictionary> {
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Empty("embedding set for dictionary induction".into()));
    }
    let src = head(src, params.max_rank);
    let tgt = head(tgt, params.max_rank);
    let retriever = Retriever::new(&src, &tgt, params.metric)?;
    let forward = retriever.retrieve_all(1);
    let backward = params.mutual.then(|| retriever.best_sources());

    let mut pairs: Vec<(usize, usize, f64)> = forward
        .hits
        .iter()
        .enumerate()
        .map(|(i, hits)| (i, hits[0].index, hits[0].score))
        .filter(|&(i, j, _)| backward.as_ref().is_none_or(|b| b[j].index == i))
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    if let Some(n) = params.top_n {
        pairs.truncate(n);
    }
    Ok(InducedDictionary {
        dict: pairs
            .iter()
            .map(|&(i, j, _)| {
                (
                    src.vocab().token(i).to_string(),
                    tgt.vocab().token(j).to_string(),
                )
            })
            .collect(),
        scores: pairs.iter().map(|p| p.2).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineStep {
    pub iteration: usize,
    pub dict_size: usize,
    pub mean_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub w: AlignmentMatrix,
    pub trace: Vec<RefineStep>,
    /// Set when an iteration induced an empty dictionary; `w` is then the
    /// last successfully solved map (identity if none).
    pub stopped_early: bool,
}

/// Self-learning loop: induce a dictionary in the current mapped space, solve
/// Procrustes on the original vectors, remap the original source, repeat.
pub fn refine_unsupervised(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    iterations: usize,
    params: &InduceParams,
) -> Result<Refinement> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            actual: tgt.dim(),
        });
    }
    let mut w = AlignmentMatrix::identity(src.dim());
    let mut trace = Vec::with_capacity(iterations);
    let mut mapped = src.clone();
    for iteration in 1..=iterations {
        let induced = induce_dictionary(&mapped, tgt, params)?;
        if induced.dict.is_empty() {
            warn!("iteration {iteration}: induced dictionary is empty, stopping");
            return Ok(Refinement {
                w,
                trace,
                stopped_early: true,
            });
        }
        let step = RefineStep {
            iteration,
            dict_size: induced.dict.len(),
            mean_score: induced.mean_score(),
        };
        debug!(
            "iteration {iteration}: {} pairs, mean score {:.6}",
            step.dict_size, step.mean_score
        );
        trace.push(step);
        let pairs = build_training_matrices(&induced.dict, src, tgt)?;
        w = procrustes(&pairs.src, &pairs.tgt)?;
        mapped = w.map(src)?;
    }
    Ok(Refinement {
        w,
        trace,
        stopped_early: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| StandardNormal.sample(rng))
    }

    fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
        let q = to_nalgebra(&gaussian(rng, d, d)).qr().q();
        from_nalgebra(&q)
    }

    fn set_from(prefix: &str, m: Array2<f64>) -> EmbeddingSet {
        let v = Vocabulary::from_tokens((0..m.nrows()).map(|i| format!("{prefix}{i}"))).unwrap();
        EmbeddingSet::new(v, m).unwrap()
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn training_matrices_follow_dictionary() {
        let src = set_from("s", array![[1.0, 2.0], [3.0, 4.0]]);
        let tgt = set_from("t", array![[5.0, 6.0]]);
        let dict = SeedDictionary::from_pairs([("s1", "t0"), ("q", "t0")]);
        let tm = build_training_matrices(&dict, &src, &tgt).unwrap();
        assert_eq!(tm.len(), 1);
        assert_eq!(tm.src, array![[3.0], [4.0]]);
        assert_eq!(tm.tgt, array![[5.0], [6.0]]);
        assert_eq!(tm.dropped, vec![("q".to_string(), "t0".to_string())]);

        let none = SeedDictionary::from_pairs([("q", "t0")]);
        assert!(build_training_matrices(&none, &src, &tgt).is_err());
    }

    #[test]
    fn oov_filter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = set_from("s", gaussian(&mut rng, 100, 3));
        let tgt = set_from("t", gaussian(&mut rng, 100, 3));
        let oov: HashSet<usize> = [3, 17, 18, 40, 66, 80, 99].into_iter().collect();
        let pairs: Vec<(String, String)> = (0..100)
            .map(|i| {
                let s = if oov.contains(&i) { format!("oov{i}") } else { format!("s{i}") };
                (s, format!("t{i}"))
            })
            .collect();
        let tm = build_training_matrices(&SeedDictionary::new(pairs), &src, &tgt).unwrap();
        assert_eq!(tm.len(), 93);
        assert_eq!(tm.dropped.len(), 7);
    }

    #[test]
    fn linear_identity_and_scaling() {
        let y = array![[1.0, 2.0, 0.5], [0.0, -1.0, 3.0], [4.0, 0.0, 1.0]];
        let w = solve_linear(&Array2::eye(3), &y).unwrap();
        assert!(max_abs_diff(w.matrix(), &y) < 1e-12);
        assert!(!w.is_orthogonal());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian(&mut rng, 4, 9);
        let w = solve_linear(&x, &(&x * 2.0)).unwrap();
        assert!(max_abs_diff(w.matrix(), &(Array2::eye(4) * 2.0)) < 1e-10);
    }

    #[test]
    fn linear_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gaussian(&mut rng, 4, 10);
        let y = gaussian(&mut rng, 4, 10);
        let w = solve_linear(&x, &y).unwrap();
        let best = frobenius_loss(&w, &x, &y);
        for _ in 0..1000 {
            let delta = gaussian(&mut rng, 4, 4) * 1e-3;
            let other = AlignmentMatrix::from_matrix(w.matrix() + &delta).unwrap();
            assert!(best <= frobenius_loss(&other, &x, &y));
        }
    }

    #[test]
    fn linear_rank_deficient_uses_pseudo_inverse() {
        // K < d: exact fit exists; pinv gives it.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(&mut rng, 5, 2);
        let y = gaussian(&mut rng, 5, 2);
        let w = solve_linear(&x, &y).unwrap();
        assert!(frobenius_loss(&w, &x, &y) < 1e-10);
        assert!(w.is_degenerate());
    }

    #[test]
    fn procrustes_fixed_point_and_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian(&mut rng, 6, 24);
        let w = procrustes(&x, &x).unwrap();
        assert!(max_abs_diff(w.matrix(), &Array2::eye(6)) < 1e-10);

        let r = random_orthogonal(&mut rng, 6);
        let w = procrustes(&x, &r.dot(&x)).unwrap();
        let err = (w.matrix() - &r).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err <= 1e-8, "{err}");
        assert!(w.orthogonality_error() <= ORTHOGONALITY_TOL);
        assert!(!w.is_degenerate());
    }

    #[test]
    fn procrustes_beats_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gaussian(&mut rng, 5, 20);
        let y = gaussian(&mut rng, 5, 20);
        let w = procrustes(&x, &y).unwrap();
        let best = frobenius_loss(&w, &x, &y);
        for _ in 0..10_000 {
            let q = AlignmentMatrix::from_matrix(random_orthogonal(&mut rng, 5)).unwrap();
            assert!(best <= frobenius_loss(&q, &x, &y) + 1e-12);
        }
    }

    #[test]
    fn procrustes_flags_degenerate_input() {
        // X_tgt X_srcᵀ = I has a fully repeated spectrum.
        let w = procrustes(&Array2::eye(3), &Array2::eye(3)).unwrap();
        assert!(w.is_degenerate());
        assert!(w.orthogonality_error() <= ORTHOGONALITY_TOL);
    }

    #[test]
    fn procrustes_rejects_non_finite() {
        let x = array![[1.0, f64::NAN], [0.0, 1.0]];
        assert!(matches!(procrustes(&x, &Array2::eye(2)), Err(Error::Numerical(_))));
    }

    #[test]
    fn apply_identity_and_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e1 = set_from("a", gaussian(&mut rng, 3, 4));
        let e2 = set_from("b", gaussian(&mut rng, 2, 4));
        let es = set_from("s", gaussian(&mut rng, 2, 4));
        let merged = apply_alignment(&AlignmentMatrix::identity(4), &e1, &e2, &es).unwrap();
        assert_eq!(merged.len(), 7);
        for part in [&e1, &e2, &es] {
            for t in part.vocab().iter() {
                assert_eq!(merged.vector(t).unwrap(), part.vector(t).unwrap());
            }
        }

        let q = AlignmentMatrix::from_matrix(random_orthogonal(&mut rng, 4)).unwrap();
        let merged = apply_alignment(&q, &e1, &e2, &es).unwrap();
        for t in es.vocab().iter().chain(e2.vocab().iter()) {
            let before = if es.vocab().contains(t) { es.vector(t) } else { e2.vector(t) };
            let after = merged.vector(t).unwrap();
            assert!(after.iter().zip(before.unwrap()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        for t in e1.vocab().iter() {
            let n0 = e1.vector(t).unwrap().dot(&e1.vector(t).unwrap()).sqrt();
            let n1 = merged.vector(t).unwrap().dot(&merged.vector(t).unwrap()).sqrt();
            assert!((n0 - n1).abs() <= 1e-6);
        }
    }

    #[test]
    fn apply_rejects_overlap() {
        let e1 = set_from("a", Array2::ones((1, 2)));
        let e2 = set_from("a", Array2::ones((1, 2)));
        let es = EmbeddingSet::empty(2);
        assert!(matches!(
            apply_alignment(&AlignmentMatrix::identity(2), &e1, &e2, &es),
            Err(Error::OverlappingVocabulary(_))
        ));
    }

    #[test]
    fn induce_self_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = set_from("w", gaussian(&mut rng, 30, 6));
        let params = InduceParams {
            metric: Metric::Cosine,
            mutual: true,
            ..Default::default()
        };
        let d = induce_dictionary(&s, &s, &params).unwrap();
        assert_eq!(d.dict.len(), 30);
        assert!(d.dict.iter().all(|(a, b)| a == b));

        let top = induce_dictionary(&s, &s, &InduceParams { top_n: Some(1), ..params }).unwrap();
        assert_eq!(top.dict.len(), 1);
        assert!(d.scores.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn induce_csls_hand_case() {
        let src = set_from("x", array![[1.0, 0.0]]);
        let tgt = set_from("t", array![[1.0, 0.0], [0.0, 1.0]]);
        let params = InduceParams {
            metric: Metric::Csls { k: 1 },
            mutual: false,
            ..Default::default()
        };
        let d = induce_dictionary(&src, &tgt, &params).unwrap();
        assert_eq!(d.dict.pairs(), &[("x0".to_string(), "t0".to_string())]);
        assert_eq!(d.scores, vec![0.0]);
    }

    #[test]
    fn refine_aligned_inputs_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = set_from("w", gaussian(&mut rng, 50, 8));
        let r = refine_unsupervised(&s, &s, 1, &InduceParams::default()).unwrap();
        assert!(max_abs_diff(r.w.matrix(), &Array2::eye(8)) <= 1e-6 / 8.0);
        assert_eq!(r.trace.len(), 1);
        assert!(!r.stopped_early);
    }

    #[test]
    fn matrix_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let w = AlignmentMatrix::from_matrix(random_orthogonal(&mut rng, 5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.txt");
        w.save(&p).unwrap();
        let back = AlignmentMatrix::load(&p).unwrap();
        assert_eq!(back, w);
        assert!(back.is_orthogonal());
    }
}
