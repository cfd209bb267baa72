//! Vocabulary reallocation: shared tokens whose relative frequencies differ
//! too much between the two corpora are moved to the language where they are
//! more frequent.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::{CorpusStats, JointVocabulary, Membership};
use crate::embed_io::EmbeddingSet;
use crate::error::{Error, Result};

/// The reallocation grid searched for gamma.
pub const GAMMA_GRID: [f64; 4] = [0.7, 0.8, 0.9, 0.95];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Allocation {
    L1,
    L2,
    Shared,
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Allocation::L1 => "l1",
            Allocation::L2 => "l2",
            Allocation::Shared => "shared",
        })
    }
}

impl FromStr for Allocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Allocation::L1),
            "l2" => Ok(Allocation::L2),
            "shared" => Ok(Allocation::Shared),
            _ => Err(Error::InvalidArgument(format!("unknown allocation `{s}`"))),
        }
    }
}

impl From<Membership> for Allocation {
    fn from(m: Membership) -> Self {
        match m {
            Membership::L1Only => Allocation::L1,
            Membership::L2Only => Allocation::L2,
            Membership::Shared => Allocation::Shared,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReallocEntry {
    pub token: String,
    pub before: Membership,
    pub after: Allocation,
    /// Count ratio; only computed for tokens that were shared.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReallocatedVocabulary {
    entries: Vec<ReallocEntry>,
    gamma: f64,
}

impl ReallocatedVocabulary {
    /// Wraps a joint vocabulary without moving anything.
    pub fn unchanged(joint: &JointVocabulary) -> Self {
        ReallocatedVocabulary {
            entries: joint
                .entries()
                .iter()
                .map(|e| ReallocEntry {
                    token: e.token.clone(),
                    before: e.membership,
                    after: e.membership.into(),
                    ratio: None,
                })
                .collect(),
            gamma: 1.0,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn entries(&self) -> &[ReallocEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tokens_in(&self, class: Allocation) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(move |e| e.after == class)
            .map(|e| e.token.as_str())
    }

    pub fn class_size(&self, class: Allocation) -> usize {
        self.tokens_in(class).count()
    }

    pub fn allocation(&self, token: &str) -> Option<Allocation> {
        self.entries.iter().find(|e| e.token == token).map(|e| e.after)
    }

    /// Tokens visible from the first language: L1' plus shared'.
    pub fn source_side(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| e.after != Allocation::L2)
            .map(|e| e.token.as_str())
    }

    /// Tokens visible from the second language: L2' plus shared'.
    pub fn target_side(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| e.after != Allocation::L1)
            .map(|e| e.token.as_str())
    }

    /// Writes the report TSV `token, old_membership, new_membership, r`.
    /// `r` is empty for tokens that were never shared.
    pub fn write_report<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "token\told_membership\tnew_membership\tr")?;
        for e in &self.entries {
            let r = e.ratio.map(|r| r.to_string()).unwrap_or_default();
            writeln!(out, "{}\t{}\t{}\t{}", e.token, e.before, e.after, r)?;
        }
        out.flush()
    }

    pub fn save_report(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_report(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a report written by [`write_report`](Self::write_report).
    /// The gamma is not stored in the report and must be supplied.
    pub fn load_report(path: impl AsRef<Path>, gamma: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line.starts_with("token\t") {
                continue;
            }
            let bad = || Error::parse(path, i + 1, "expected `token<TAB>old<TAB>new<TAB>r`");
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            entries.push(ReallocEntry {
                token: f[0].to_string(),
                before: f[1].parse().map_err(|_| bad())?,
                after: f[2].parse().map_err(|_| bad())?,
                ratio: if f[3].is_empty() {
                    None
                } else {
                    Some(f[3].parse().map_err(|_| bad())?)
                },
            });
        }
        Ok(ReallocatedVocabulary { entries, gamma })
    }
}

/// `r = (T2 / T1) * (C1(w) / C2(w))`, with `+inf` when the token is absent
/// from the second corpus and `0` when absent from the first.
pub fn count_ratio(token: &str, stats1: &CorpusStats, stats2: &CorpusStats) -> Result<f64> {
    let (c1, c2) = (stats1.count(token), stats2.count(token));
    match (c1, c2) {
        (0, 0) => Err(Error::UnknownToken(token.to_string())),
        (_, 0) => Ok(f64::INFINITY),
        (0, _) => Ok(0.0),
        _ => Ok((stats2.total() as f64 / stats1.total() as f64) * (c1 as f64 / c2 as f64)),
    }
}

/// Inclusive bounds `[(1-g)/g, g/(1-g)]` for a token to stay shared.
pub fn shared_bounds(gamma: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.5 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie strictly between 0.5 and 1, got {gamma}"
        )));
    }
    Ok(((1.0 - gamma) / gamma, gamma / (1.0 - gamma)))
}

pub fn reallocate(
    joint: &JointVocabulary,
    stats1: &CorpusStats,
    stats2: &CorpusStats,
    gamma: f64,
) -> Result<ReallocatedVocabulary> {
    let (lo, hi) = shared_bounds(gamma)?;
    let mut entries = Vec::with_capacity(joint.len());
    for e in joint.entries() {
        let (after, ratio) = match e.membership {
            Membership::Shared => {
                let r = count_ratio(&e.token, stats1, stats2)?;
                let after = if r > hi {
                    Allocation::L1
                } else if r < lo {
                    Allocation::L2
                } else {
                    Allocation::Shared
                };
                (after, Some(r))
            }
            m => (m.into(), None),
        };
        entries.push(ReallocEntry {
            token: e.token.clone(),
            before: e.membership,
            after,
            ratio,
        });
    }
    Ok(ReallocatedVocabulary { entries, gamma })
}

/// The three row subsets of a joint embedding set, in input row order.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitEmbeddings {
    pub l1: EmbeddingSet,
    pub l2: EmbeddingSet,
    pub shared: EmbeddingSet,
}

pub fn split_embeddings(set: &EmbeddingSet, realloc: &ReallocatedVocabulary) -> Result<SplitEmbeddings> {
    let mut class = std::collections::HashMap::with_capacity(realloc.len());
    for e in realloc.entries() {
        if !set.vocab().contains(&e.token) {
            return Err(Error::UnknownToken(e.token.clone()));
        }
        class.insert(e.token.as_str(), e.after);
    }
    let pick = |want: Allocation| set.filter(|t| class.get(t) == Some(&want));
    Ok(SplitEmbeddings {
        l1: pick(Allocation::L1),
        l2: pick(Allocation::L2),
        shared: pick(Allocation::Shared),
    })
}
