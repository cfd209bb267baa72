//! Bilingual lexicon induction (BLI) evaluation: precision at 1.
//!
//! Gold translations are grouped by source word and a prediction counts as
//! correct if it matches any of them. Under [`OovPolicy::Paper`] every test
//! source is scored: an out-of-vocabulary source "retrieves itself" (the
//! prediction is the source string), and an in-vocabulary source whose gold
//! targets are all out of vocabulary is incorrect. [`OovPolicy::Drop`]
//! instead removes out-of-vocabulary pairs before grouping, as the common
//! MUSE evaluation script does.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::dictionary::SeedDictionary;
use crate::embed_io::EmbeddingSet;
use crate::error::{Error, Result};
use crate::retrieval::{Metric, Retriever};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OovPolicy {
    #[default]
    Paper,
    Drop,
}

impl FromStr for OovPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(OovPolicy::Paper),
            "drop" => Ok(OovPolicy::Drop),
            _ => Err(Error::InvalidArgument(format!("unknown OOV policy `{s}`"))),
        }
    }
}

impl fmt::Display for OovPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OovPolicy::Paper => "paper",
            OovPolicy::Drop => "drop",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PairFilter {
    #[default]
    None,
    /// Drop pairs whose source and target strings are identical.
    RemoveSameSurface,
}

impl FromStr for PairFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PairFilter::None),
            "same-surface" | "remove_same_surface" => Ok(PairFilter::RemoveSameSurface),
            _ => Err(Error::InvalidArgument(format!("unknown filter `{s}`"))),
        }
    }
}

impl fmt::Display for PairFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairFilter::None => "none",
            PairFilter::RemoveSameSurface => "same-surface",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BliParams {
    pub metric: Metric,
    pub oov_policy: OovPolicy,
    pub filter: PairFilter,
    /// Lowercase the test dictionary before lookup.
    pub lowercase: bool,
}

impl Default for BliParams {
    fn default() -> Self {
        BliParams {
            metric: Metric::default(),
            oov_policy: OovPolicy::Paper,
            filter: PairFilter::None,
            lowercase: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BliReport {
    /// Lines in the test dictionary.
    pub pairs_read: usize,
    /// Lines left after the surface-form filter.
    pub pairs_after_filter: usize,
    /// Scored source words (the P@1 denominator).
    pub total: usize,
    pub correct: usize,
    pub p_at_1: f64,
    /// Sources retrieved in the embedding space.
    pub in_vocab: usize,
    /// Out-of-vocabulary sources scored by self-retrieval.
    pub source_oov_self_retrieved: usize,
    /// In-vocabulary sources with no in-vocabulary gold target.
    pub target_oov_incorrect: usize,
    /// Source words removed under the `drop` policy.
    pub excluded: usize,
    pub oov_policy: String,
    pub filter: String,
    pub metric: String,
}

impl BliReport {
    pub fn summary(&self) -> String {
        format!("P@1 {:.4} ({}/{})", self.p_at_1, self.correct, self.total)
    }
}

impl fmt::Display for BliReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary())
    }
}

/// Test pairs grouped by source, in order of first appearance.
fn group_by_source(pairs: &[(String, String)]) -> Vec<(String, Vec<String>)> {
    let mut order: Vec<(String, Vec<String>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (s, t) in pairs {
        let slot = *index.entry(s.as_str()).or_insert_with(|| {
            order.push((s.clone(), Vec::new()));
            order.len() - 1
        });
        if !order[slot].1.contains(t) {
            order[slot].1.push(t.clone());
        }
    }
    order
}

pub fn evaluate_bli(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    test: &SeedDictionary,
    params: &BliParams,
) -> Result<BliReport> {
    if test.is_empty() {
        return Err(Error::Empty("test dictionary".into()));
    }
    let test = if params.lowercase {
        test.lowercased()
    } else {
        test.clone()
    };
    let pairs: Vec<(String, String)> = test
        .pairs()
        .iter()
        .filter(|(s, t)| params.filter == PairFilter::None || s != t)
        .cloned()
        .collect();

    let mut report = BliReport {
        pairs_read: test.len(),
        pairs_after_filter: pairs.len(),
        total: 0,
        correct: 0,
        p_at_1: 0.0,
        in_vocab: 0,
        source_oov_self_retrieved: 0,
        target_oov_incorrect: 0,
        excluded: 0,
        oov_policy: params.oov_policy.to_string(),
        filter: params.filter.to_string(),
        metric: params.metric.to_string(),
    };

    let groups = match params.oov_policy {
        OovPolicy::Paper => group_by_source(&pairs),
        OovPolicy::Drop => {
            let all_sources = group_by_source(&pairs).len();
            let kept: Vec<(String, String)> = pairs
                .iter()
                .filter(|(s, t)| src.vocab().contains(s) && tgt.vocab().contains(t))
                .cloned()
                .collect();
            let groups = group_by_source(&kept);
            report.excluded = all_sources - groups.len();
            groups
        }
    };

    // (group index, source row) for sources that need a retrieval.
    let mut queries = Vec::new();
    for (g, (source, golds)) in groups.iter().enumerate() {
        report.total += 1;
        match src.vocab().get(source) {
            None => {
                report.source_oov_self_retrieved += 1;
                if golds.contains(source) {
                    report.correct += 1;
                }
            }
            Some(row) => {
                if golds.iter().any(|t| tgt.vocab().contains(t)) {
                    report.in_vocab += 1;
                    queries.push((g, row));
                } else {
                    report.target_oov_incorrect += 1;
                }
            }
        }
    }

    if !queries.is_empty() {
        let retriever = Retriever::new(src, tgt, params.metric)?;
        let rows: Vec<usize> = queries.iter().map(|&(_, row)| row).collect();
        let result = retriever.retrieve(&rows, 1);
        for (&(g, _), hits) in queries.iter().zip(&result.hits) {
            let predicted = tgt.vocab().token(hits[0].index);
            if groups[g].1.iter().any(|t| t == predicted) {
                report.correct += 1;
            }
        }
    }

    if report.total > 0 {
        report.p_at_1 = report.correct as f64 / report.total as f64;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_io::Vocabulary;
    use ndarray::array;

    fn set(tokens: &[&str], m: ndarray::Array2<f64>) -> EmbeddingSet {
        EmbeddingSet::new(Vocabulary::from_tokens(tokens.iter().copied()).unwrap(), m).unwrap()
    }

    fn cosine() -> BliParams {
        BliParams {
            metric: Metric::Cosine,
            ..Default::default()
        }
    }

    #[test]
    fn single_correct_pair() {
        let src = set(&["a"], array![[1.0, 0.0]]);
        let tgt = set(&["b", "c"], array![[1.0, 0.1], [0.0, 1.0]]);
        let r = evaluate_bli(&src, &tgt, &SeedDictionary::from_pairs([("a", "b")]), &cosine()).unwrap();
        assert_eq!(r.p_at_1, 1.0);
        assert_eq!(r.summary(), "P@1 1.0000 (1/1)");
    }

    #[test]
    fn oov_source_retrieves_itself() {
        let src = set(&["x"], array![[1.0, 0.0]]);
        let tgt = set(&["y"], array![[1.0, 0.0]]);
        let r = evaluate_bli(&src, &tgt, &SeedDictionary::from_pairs([("age", "age")]), &cosine()).unwrap();
        assert_eq!((r.correct, r.total, r.source_oov_self_retrieved), (1, 1, 1));
    }

    #[test]
    fn target_oov_is_incorrect_or_dropped() {
        let src = set(&["x"], array![[1.0, 0.0]]);
        let tgt = set(&["z"], array![[1.0, 0.0]]);
        let dict = SeedDictionary::from_pairs([("x", "y")]);
        let r = evaluate_bli(&src, &tgt, &dict, &cosine()).unwrap();
        assert_eq!((r.correct, r.total, r.target_oov_incorrect), (0, 1, 1));

        let drop = BliParams {
            oov_policy: OovPolicy::Drop,
            ..cosine()
        };
        let r = evaluate_bli(&src, &tgt, &dict, &drop).unwrap();
        assert_eq!((r.total, r.excluded), (0, 1));
    }

    #[test]
    fn any_gold_target_counts() {
        let src = set(&["a"], array![[1.0, 0.0]]);
        let tgt = set(&["b", "c"], array![[0.0, 1.0], [1.0, 0.0]]);
        let dict = SeedDictionary::from_pairs([("a", "b"), ("a", "c")]);
        let r = evaluate_bli(&src, &tgt, &dict, &cosine()).unwrap();
        assert_eq!((r.correct, r.total, r.pairs_read), (1, 1, 2));
    }

    #[test]
    fn lowercases_dictionary_by_default() {
        let src = set(&["a"], array![[1.0, 0.0]]);
        let tgt = set(&["b"], array![[1.0, 0.0]]);
        let dict = SeedDictionary::from_pairs([("A", "B")]);
        assert_eq!(evaluate_bli(&src, &tgt, &dict, &cosine()).unwrap().correct, 1);
        let cased = BliParams {
            lowercase: false,
            ..cosine()
        };
        assert_eq!(evaluate_bli(&src, &tgt, &dict, &cased).unwrap().correct, 0);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        let s = set(&["a"], array![[1.0]]);
        assert!(evaluate_bli(&s, &s, &SeedDictionary::default(), &cosine()).is_err());
    }
}
