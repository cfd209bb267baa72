//! Alignment of contextual feature dumps.
//!
//! Features are exchanged as TSV, one record per line:
//! `sent_id<TAB>tok_idx<TAB>token<TAB>layer<TAB>v1 v2 ... vd`.
//! Word alignments use the fast_align `i-j` format, one sentence pair per
//! line, 0-based indices.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::align::{procrustes, solve_linear, AlignmentMatrix};
use crate::error::{Error, Result};

/// Layer id given to features produced by [`sum_layers`].
pub const SUMMED_LAYER: i64 = -1;

pub const DEFAULT_PAIR_CAP: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct TokenFeatureRecord {
    pub sent_id: usize,
    pub tok_idx: usize,
    pub token: String,
    pub layer: i64,
    pub vector: Vec<f64>,
}

impl TokenFeatureRecord {
    fn parse(line: &str, path: &Path, line_no: usize) -> Result<Self> {
        let bad = |m: &str| Error::parse(path, line_no, m.to_string());
        let mut f = line.splitn(5, '\t');
        let mut field = |name: &str| f.next().ok_or_else(|| bad(&format!("missing {name}")));
        let sent_id = field("sent_id")?.parse().map_err(|_| bad("bad sent_id"))?;
        let tok_idx = field("tok_idx")?.parse().map_err(|_| bad("bad tok_idx"))?;
        let token = field("token")?.to_string();
        let layer = field("layer")?.parse().map_err(|_| bad("bad layer"))?;
        let vector = field("vector")?
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad(&format!("bad value `{v}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(bad("empty vector"));
        }
        Ok(TokenFeatureRecord {
            sent_id,
            tok_idx,
            token,
            layer,
            vector,
        })
    }

    fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write!(out, "{}\t{}\t{}\t{}\t", self.sent_id, self.tok_idx, self.token, self.layer)?;
        for (i, v) in self.vector.iter().enumerate() {
            if i > 0 {
                out.write_all(b" ")?;
            }
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")
    }
}

/// Streams records from a feature file, checking the dimension is constant.
fn for_each_record(path: &Path, mut f: impl FnMut(TokenFeatureRecord) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let rec = TokenFeatureRecord::parse(&line, path, i + 1)?;
        match dim {
            None => dim = Some(rec.vector.len()),
            Some(d) if d != rec.vector.len() => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {d} values, found {}", rec.vector.len()),
                ))
            }
            _ => {}
        }
        f(rec)?;
    }
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<TokenFeatureRecord>> {
    let path = path.as_ref();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for_each_record(path, |rec| {
        if !seen.insert((rec.sent_id, rec.tok_idx, rec.layer)) {
            return Err(Error::parse(
                path,
                records.len() + 1,
                format!(
                    "duplicate record (sentence {}, token {}, layer {})",
                    rec.sent_id, rec.tok_idx, rec.layer
                ),
            ));
        }
        records.push(rec);
        Ok(())
    })?;
    Ok(records)
}

pub fn write_features(records: &[TokenFeatureRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        r.write_to(&mut w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PoolStrategy {
    #[default]
    Mean,
}

/// Pools the subword vectors of one word.
pub fn pool_subwords(vectors: &[&[f64]], strategy: PoolStrategy) -> Result<Vec<f64>> {
    let Some(first) = vectors.first() else {
        return Err(Error::Empty("no subword vectors to pool".into()));
    };
    let d = first.len();
    let mut out = vec![0.0; d];
    for v in vectors {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.len(),
            });
        }
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    match strategy {
        PoolStrategy::Mean => out.iter_mut().for_each(|o| *o /= vectors.len() as f64),
    }
    Ok(out)
}

/// Merges WordPiece records (`##` marks a continuation) into word records.
/// Within each (sentence, layer), subwords are taken in `tok_idx` order and
/// words are renumbered from 0.
pub fn pool_wordpieces(records: &[TokenFeatureRecord], strategy: PoolStrategy) -> Result<Vec<TokenFeatureRecord>> {
    let mut groups: BTreeMap<(usize, i64), Vec<&TokenFeatureRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.sent_id, r.layer)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((sent_id, layer), mut recs) in groups {
        recs.sort_by_key(|r| r.tok_idx);
        let mut word: Vec<&TokenFeatureRecord> = Vec::new();
        let mut next_idx = 0;
        let mut flush = |word: &mut Vec<&TokenFeatureRecord>, out: &mut Vec<TokenFeatureRecord>| -> Result<()> {
            if word.is_empty() {
                return Ok(());
            }
            let token: String = word
                .iter()
                .map(|r| r.token.strip_prefix("##").unwrap_or(&r.token))
                .collect();
            let vectors: Vec<&[f64]> = word.iter().map(|r| r.vector.as_slice()).collect();
            out.push(TokenFeatureRecord {
                sent_id,
                tok_idx: next_idx,
                token,
                layer,
                vector: pool_subwords(&vectors, strategy)?,
            });
            word.clear();
            next_idx += 1;
            Ok(())
        };
        for r in recs {
            if !r.token.starts_with("##") {
                flush(&mut word, &mut out)?;
            }
            word.push(r);
        }
        flush(&mut word, &mut out)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WordAlignmentSet {
    /// Links `(source index, target index)` per sentence pair.
    pub links: Vec<Vec<(usize, usize)>>,
    /// Links dropped for pointing outside their sentence.
    pub dropped: usize,
}

impl WordAlignmentSet {
    pub fn num_links(&self) -> usize {
        self.links.iter().map(Vec::len).sum()
    }
}

fn sentence_lengths(path: &Path) -> Result<Vec<usize>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|l| {
            l.map(|l| l.split_whitespace().count())
                .map_err(|e| Error::io(path, e))
        })
        .collect()
}

fn parse_link(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once('-')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

pub fn parse_word_alignments(
    alignments: impl AsRef<Path>,
    src_sentences: impl AsRef<Path>,
    tgt_sentences: impl AsRef<Path>,
) -> Result<WordAlignmentSet> {
    let path = alignments.as_ref();
    let src_len = sentence_lengths(src_sentences.as_ref())?;
    let tgt_len = sentence_lengths(tgt_sentences.as_ref())?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    if lines.len() != src_len.len() || lines.len() != tgt_len.len() {
        return Err(Error::InvalidArgument(format!(
            "line counts differ: {} alignments, {} source and {} target sentences",
            lines.len(),
            src_len.len(),
            tgt_len.len()
        )));
    }
    let mut set = WordAlignmentSet::default();
    for (n, line) in lines.iter().enumerate() {
        let mut links = Vec::new();
        for item in line.split_whitespace() {
            let (i, j) = parse_link(item)
                .ok_or_else(|| Error::parse(path, n + 1, format!("malformed link `{item}`")))?;
            if i < src_len[n] && j < tgt_len[n] {
                links.push((i, j));
            } else {
                set.dropped += 1;
            }
        }
        set.links.push(links);
    }
    if set.dropped > 0 {
        warn!("{}: dropped {} out-of-range links", path.display(), set.dropped);
    }
    Ok(set)
}

/// How to treat a source word linked to several target words.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LinkPolicy {
    /// Every link is an independent training pair.
    #[default]
    All,
    /// Only the first link of each source word is used.
    FirstOnly,
}

impl FromStr for LinkPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(LinkPolicy::All),
            "first" | "first-only" => Ok(LinkPolicy::FirstOnly),
            _ => Err(Error::InvalidArgument(format!("unknown link policy `{s}`"))),
        }
    }
}

/// Aligned feature pairs for one layer, as row lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerPairs {
    pub src: Vec<Vec<f64>>,
    pub tgt: Vec<Vec<f64>>,
}

impl LayerPairs {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Collects per-layer feature pairs for every alignment link. Sentence pair
/// `n` of the alignment set matches `sent_id == n` in both feature sets.
/// Links whose features are missing are skipped.
pub fn collect_aligned_pairs(
    src_features: &[TokenFeatureRecord],
    tgt_features: &[TokenFeatureRecord],
    alignments: &WordAlignmentSet,
    policy: LinkPolicy,
) -> BTreeMap<i64, LayerPairs> {
    type Key = (usize, usize, i64);
    let index = |recs: &[TokenFeatureRecord]| -> HashMap<Key, usize> {
        recs.iter()
            .enumerate()
            .map(|(i, r)| ((r.sent_id, r.tok_idx, r.layer), i))
            .collect()
    };
    let (src_idx, tgt_idx) = (index(src_features), index(tgt_features));
    let layers: std::collections::BTreeSet<i64> = src_features.iter().map(|r| r.layer).collect();

    let mut out: BTreeMap<i64, LayerPairs> = BTreeMap::new();
    let mut missing = 0usize;
    for (sent, links) in alignments.links.iter().enumerate() {
        let mut used = HashSet::new();
        for &(i, j) in links {
            if policy == LinkPolicy::FirstOnly && !used.insert(i) {
                continue;
            }
            for &layer in &layers {
                match (src_idx.get(&(sent, i, layer)), tgt_idx.get(&(sent, j, layer))) {
                    (Some(&a), Some(&b)) => {
                        let entry = out.entry(layer).or_default();
                        entry.src.push(src_features[a].vector.clone());
                        entry.tgt.push(tgt_features[b].vector.clone());
                    }
                    _ => missing += 1,
                }
            }
        }
    }
    if missing > 0 {
        warn!("{missing} aligned links had no features and were skipped");
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CtxSolver {
    #[default]
    Procrustes,
    Linear,
}

impl FromStr for CtxSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "procrustes" => Ok(CtxSolver::Procrustes),
            "linear" => Ok(CtxSolver::Linear),
            _ => Err(Error::InvalidArgument(format!("unknown solver `{s}`"))),
        }
    }
}

fn columns(rows: &[&Vec<f64>]) -> Array2<f64> {
    let d = rows[0].len();
    Array2::from_shape_fn((d, rows.len()), |(i, j)| rows[j][i])
}

/// Solves one map per layer, each from at most `pair_cap` pairs drawn
/// uniformly without replacement.
pub fn learn_ctx_alignment(
    pairs: &BTreeMap<i64, LayerPairs>,
    pair_cap: usize,
    solver: CtxSolver,
    seed: u64,
) -> Result<BTreeMap<i64, AlignmentMatrix>> {
    if pairs.is_empty() {
        return Err(Error::Empty("no layers with aligned pairs".into()));
    }
    pairs
        .par_iter()
        .map(|(&layer, lp)| {
            if lp.is_empty() {
                return Err(Error::Empty(format!("no aligned pairs for layer {layer}")));
            }
            let d = lp.src[0].len();
            if lp.src.iter().chain(&lp.tgt).any(|v| v.len() != d) {
                return Err(Error::InvalidArgument(format!("inconsistent dimensions in layer {layer}")));
            }
            let mut chosen: Vec<usize> = if lp.len() > pair_cap {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(layer as u64);
                rand::seq::index::sample(&mut rng, lp.len(), pair_cap).into_vec()
            } else {
                (0..lp.len()).collect()
            };
            chosen.sort_unstable();
            if chosen.len() < d {
                warn!("layer {layer}: {} pairs for {d} dimensions", chosen.len());
            }
            let x_src = columns(&chosen.iter().map(|&i| &lp.src[i]).collect::<Vec<_>>());
            let x_tgt = columns(&chosen.iter().map(|&i| &lp.tgt[i]).collect::<Vec<_>>());
            let w = match solver {
                CtxSolver::Procrustes => procrustes(&x_src, &x_tgt)?,
                CtxSolver::Linear => solve_linear(&x_src, &x_tgt)?,
            };
            Ok((layer, w))
        })
        .collect()
}

/// Writes `layer <id>` followed by the matrix text block, for each layer.
pub fn save_layer_matrices(ws: &BTreeMap<i64, AlignmentMatrix>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (layer, m) in ws {
        writeln!(w, "layer {layer}").map_err(|e| Error::io(path, e))?;
        m.write(&mut w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_layer_matrices(path: impl AsRef<Path>) -> Result<BTreeMap<i64, AlignmentMatrix>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let mut out = BTreeMap::new();
    let mut line_no = 0;
    while let Some(line) = lines.next() {
        let line = line.map_err(|e| Error::io(path, e))?;
        line_no += 1;
        if line.trim().is_empty() {
            continue;
        }
        let layer: i64 = line
            .strip_prefix("layer ")
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| Error::parse(path, line_no, "expected `layer <id>`"))?;
        let m = AlignmentMatrix::read_lines(&mut lines, path, line_no)?;
        line_no += m.dim() + 1;
        out.insert(layer, m);
    }
    Ok(out)
}

/// Replaces every record's vector by `W_layer · vector`. Returns the number
/// of records written.
pub fn apply_ctx_alignment(
    ws: &BTreeMap<i64, AlignmentMatrix>,
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
) -> Result<usize> {
    let (input, output) = (input.as_ref(), output.as_ref());
    let file = File::create(output).map_err(|e| Error::io(output, e))?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for_each_record(input, |mut rec| {
        let m = ws
            .get(&rec.layer)
            .ok_or_else(|| Error::InvalidArgument(format!("no alignment matrix for layer {}", rec.layer)))?;
        if m.dim() != rec.vector.len() {
            return Err(Error::DimensionMismatch {
                expected: m.dim(),
                actual: rec.vector.len(),
            });
        }
        rec.vector = m.map_vector(&rec.vector);
        rec.write_to(&mut w).map_err(|e| Error::io(output, e))?;
        n += 1;
        Ok(())
    })?;
    w.flush().map_err(|e| Error::io(output, e))?;
    Ok(n)
}

/// Elementwise sum of several layers' features for the same tokens. Every
/// input must hold exactly the same `(sentence, token)` keys.
pub fn sum_layers(inputs: &[Vec<TokenFeatureRecord>], layer: i64) -> Result<Vec<TokenFeatureRecord>> {
    let Some((first, rest)) = inputs.split_first() else {
        return Err(Error::Empty("no feature sets to sum".into()));
    };
    let mut out: Vec<TokenFeatureRecord> = first
        .iter()
        .map(|r| TokenFeatureRecord { layer, ..r.clone() })
        .collect();
    let index: HashMap<(usize, usize), usize> = out
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.sent_id, r.tok_idx), i))
        .collect();
    if index.len() != out.len() {
        return Err(Error::InvalidArgument("duplicate (sentence, token) key in a layer".into()));
    }
    for other in rest {
        if other.len() != out.len() {
            return Err(Error::InvalidArgument(format!(
                "layer sizes differ: {} vs {}",
                out.len(),
                other.len()
            )));
        }
        for r in other {
            let &i = index.get(&(r.sent_id, r.tok_idx)).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "key (sentence {}, token {}) missing from the first layer",
                    r.sent_id, r.tok_idx
                ))
            })?;
            let acc = &mut out[i].vector;
            if acc.len() != r.vector.len() {
                return Err(Error::DimensionMismatch {
                    expected: acc.len(),
                    actual: r.vector.len(),
                });
            }
            for (a, v) in acc.iter_mut().zip(&r.vector) {
                *a += v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn rec(sent: usize, tok: usize, token: &str, layer: i64, v: &[f64]) -> TokenFeatureRecord {
        TokenFeatureRecord {
            sent_id: sent,
            tok_idx: tok,
            token: token.into(),
            layer,
            vector: v.to_vec(),
        }
    }

    #[test]
    fn mean_pooling() {
        let res: &[f64] = &[1.0, 0.0];
        let sumption: &[f64] = &[0.0, 1.0];
        assert_eq!(pool_subwords(&[res, sumption], PoolStrategy::Mean).unwrap(), vec![0.5, 0.5]);
        assert_eq!(pool_subwords(&[res], PoolStrategy::Mean).unwrap(), res.to_vec());
        let v: &[f64] = &[0.3, -0.7];
        let pooled = pool_subwords(&[v, v, v], PoolStrategy::Mean).unwrap();
        assert!(pooled.iter().zip(v).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(pool_subwords(&[], PoolStrategy::Mean).is_err());
    }

    #[test]
    fn wordpieces_merge_into_words() {
        let records = vec![
            rec(0, 0, "Re", 12, &[1.0, 0.0]),
            rec(0, 1, "##sumption", 12, &[0.0, 1.0]),
            rec(0, 2, "of", 12, &[2.0, 2.0]),
            rec(1, 0, "Wie", 12, &[4.0, 0.0]),
            rec(1, 1, "##dera", 12, &[0.0, 4.0]),
            rec(1, 2, "##uf", 12, &[0.0, 0.0]),
            rec(1, 3, "##nahme", 12, &[0.0, 0.0]),
        ];
        let words = pool_wordpieces(&records, PoolStrategy::Mean).unwrap();
        assert_eq!(words.len(), 3);
        assert_eq!(words[0], rec(0, 0, "Resumption", 12, &[0.5, 0.5]));
        assert_eq!(words[1], rec(0, 1, "of", 12, &[2.0, 2.0]));
        assert_eq!(words[2], rec(1, 0, "Wiederaufnahme", 12, &[1.0, 1.0]));
    }

    #[test]
    fn feature_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.tsv");
        let records = vec![rec(0, 0, "a", 1, &[0.25, -1.5]), rec(0, 1, "b", 1, &[1e-3, 2.0])];
        write_features(&records, &p).unwrap();
        assert_eq!(read_features(&p).unwrap(), records);

        fs::write(&p, "0\t0\ta\t1\t1 2\n0\t1\tb\t1\t1\n").unwrap();
        assert!(matches!(read_features(&p), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "0\t0\ta\t1\t1 2\n0\t0\ta\t1\t1 2\n").unwrap();
        assert!(read_features(&p).is_err());
    }

    fn write3(dir: &Path, a: &str, s: &str, t: &str) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
        let (pa, ps, pt) = (dir.join("a"), dir.join("s"), dir.join("t"));
        fs::write(&pa, a).unwrap();
        fs::write(&ps, s).unwrap();
        fs::write(&pt, t).unwrap();
        (pa, ps, pt)
    }

    #[test]
    fn parses_fast_align_lines() {
        let dir = tempfile::tempdir().unwrap();
        let (a, s, t) = write3(dir.path(), "0-0 1-2\n\n0-5\n", "a b\nc\nd e\n", "x y z\nw\nv\n");
        let set = parse_word_alignments(&a, &s, &t).unwrap();
        assert_eq!(set.links, vec![vec![(0, 0), (1, 2)], vec![], vec![]]);
        assert_eq!(set.dropped, 1);
    }

    #[test]
    fn alignment_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (a, s, t) = write3(dir.path(), "0-0 x\n", "a\n", "b\n");
        assert!(matches!(parse_word_alignments(&a, &s, &t), Err(Error::Parse { line: 1, .. })));
        let (a, s, t) = write3(dir.path(), "0-0\n", "a\nb\n", "c\n");
        assert!(parse_word_alignments(&a, &s, &t).is_err());
    }

    #[test]
    fn first_only_link_policy() {
        let src = vec![rec(0, 0, "a", 0, &[1.0]), rec(0, 1, "b", 0, &[2.0])];
        let tgt = vec![rec(0, 0, "x", 0, &[3.0]), rec(0, 1, "y", 0, &[4.0])];
        let set = WordAlignmentSet {
            links: vec![vec![(0, 0), (0, 1), (1, 1)]],
            dropped: 0,
        };
        assert_eq!(collect_aligned_pairs(&src, &tgt, &set, LinkPolicy::All)[&0].len(), 3);
        let first = collect_aligned_pairs(&src, &tgt, &set, LinkPolicy::FirstOnly);
        assert_eq!(first[&0].src, vec![vec![1.0], vec![2.0]]);
        assert_eq!(first[&0].tgt, vec![vec![3.0], vec![4.0]]);
    }

    #[test]
    fn sums_layers() {
        let v = [0.5, -1.0, 2.0];
        let layer = |l: i64| vec![rec(0, 0, "a", l, &v), rec(0, 1, "b", l, &[1.0, 1.0, 1.0])];
        let out = sum_layers(&[layer(9), layer(10), layer(11), layer(12)], SUMMED_LAYER).unwrap();
        assert_eq!(out[0].vector, vec![2.0, -4.0, 8.0]);
        assert_eq!(out[0].layer, SUMMED_LAYER);

        let plus = vec![rec(0, 0, "a", 1, &[1.0, -2.0])];
        let minus = vec![rec(0, 0, "a", 2, &[-1.0, 2.0])];
        assert_eq!(sum_layers(&[plus.clone(), minus], 0).unwrap()[0].vector, vec![0.0, 0.0]);

        let other = vec![rec(0, 5, "a", 2, &[-1.0, 2.0])];
        assert!(sum_layers(&[plus, other], 0).is_err());
    }

    #[test]
    fn apply_requires_known_layers() {
        let dir = tempfile::tempdir().unwrap();
        let (i, o) = (dir.path().join("i"), dir.path().join("o"));
        write_features(&[rec(0, 0, "a", 3, &[1.0, 2.0])], &i).unwrap();
        let ws: BTreeMap<i64, AlignmentMatrix> = [(4, AlignmentMatrix::identity(2))].into_iter().collect();
        assert!(apply_ctx_alignment(&ws, &i, &o).is_err());
    }

    #[test]
    fn layer_matrix_file_round_trip() {
        let ws: BTreeMap<i64, AlignmentMatrix> = [
            (-1, AlignmentMatrix::identity(2)),
            (7, AlignmentMatrix::from_matrix(ndarray::array![[0.0, 1.0], [1.0, 0.0]]).unwrap()),
        ]
        .into_iter()
        .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w");
        save_layer_matrices(&ws, &p).unwrap();
        assert_eq!(load_layer_matrices(&p).unwrap(), ws);
    }
}
