//! Corpus statistics, the joint vocabulary and corpus rewriting utilities.
//!
//! Corpora are UTF-8 text, one sentence per line, tokens separated by
//! whitespace.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dictionary::SeedDictionary;
use crate::embed_io::Vocabulary;
use crate::error::{Error, Result};

/// Per-language token counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    label: String,
    counts: HashMap<String, u64>,
    total: u64,
}

impl CorpusStats {
    pub fn new(label: impl Into<String>) -> Self {
        CorpusStats {
            label: label.into(),
            ..Default::default()
        }
    }

    pub fn from_counts<I, S>(label: impl Into<String>, counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut stats = CorpusStats::new(label);
        for (token, count) in counts {
            let token = token.into();
            if count == 0 {
                return Err(Error::InvalidArgument(format!("zero count for `{token}`")));
            }
            stats.add(token, count);
        }
        Ok(stats)
    }

    pub fn add(&mut self, token: impl Into<String>, count: u64) {
        *self.counts.entry(token.into()).or_insert(0) += count;
        self.total += count;
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.counts.contains_key(token)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Tokens by decreasing count, ties in lexicographic order.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(t, &c)| (t.as_str(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    /// Pointwise sum of two count tables.
    pub fn merged(&self, other: &CorpusStats) -> CorpusStats {
        let mut out = self.clone();
        for (t, &c) in &other.counts {
            out.add(t.clone(), c);
        }
        out
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "token\tcount")?;
        for (token, count) in self.ranked() {
            writeln!(out, "{token}\t{count}")?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, label: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut stats = CorpusStats::new(label);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if i == 0 && line == "token\tcount" {
                continue;
            }
            let (token, count) = line
                .split_once('\t')
                .and_then(|(t, c)| c.parse::<u64>().ok().map(|c| (t, c)))
                .filter(|&(_, c)| c > 0)
                .ok_or_else(|| Error::parse(path, i + 1, "expected `token<TAB>count`"))?;
            stats.add(token, count);
        }
        Ok(stats)
    }
}

/// Reads one line as raw bytes and validates UTF-8, reporting the line number.
fn read_utf8_line<R: BufRead>(
    reader: &mut R,
    buf: &mut Vec<u8>,
    path: &Path,
    line_no: usize,
) -> Result<Option<String>> {
    buf.clear();
    let n = reader.read_until(b'\n', buf).map_err(|e| Error::io(path, e))?;
    if n == 0 {
        return Ok(None);
    }
    while matches!(buf.last(), Some(b'\n' | b'\r')) {
        buf.pop();
    }
    String::from_utf8(std::mem::take(buf))
        .map(Some)
        .map_err(|_| Error::parse(path, line_no, "invalid UTF-8"))
}

pub fn count_tokens(
    corpus: impl AsRef<Path>,
    label: impl Into<String>,
    lowercase: bool,
    min_count: u64,
) -> Result<CorpusStats> {
    let path = corpus.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    while let Some(line) = read_utf8_line(&mut reader, &mut buf, path, line_no + 1)? {
        line_no += 1;
        for token in line.split_whitespace() {
            if lowercase {
                *counts.entry(token.to_lowercase()).or_insert(0) += 1;
            } else if let Some(c) = counts.get_mut(token) {
                *c += 1;
            } else {
                counts.insert(token.to_string(), 1);
            }
        }
    }
    let mut stats = CorpusStats::new(label);
    for (token, count) in counts {
        if count >= min_count.max(1) {
            stats.add(token, count);
        }
    }
    Ok(stats)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Membership {
    L1Only,
    L2Only,
    Shared,
}

impl fmt::Display for Membership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Membership::L1Only => "l1",
            Membership::L2Only => "l2",
            Membership::Shared => "shared",
        })
    }
}

impl FromStr for Membership {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Membership::L1Only),
            "l2" => Ok(Membership::L2Only),
            "shared" => Ok(Membership::Shared),
            _ => Err(Error::InvalidArgument(format!("unknown membership `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointEntry {
    pub token: String,
    pub membership: Membership,
    pub count1: u64,
    pub count2: u64,
}

/// The union of two vocabularies, each token labelled L1-only, L2-only or
/// shared. Entries are ordered by combined count, then lexicographically.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct JointVocabulary {
    entries: Vec<JointEntry>,
    index: HashMap<String, usize>,
}

impl JointVocabulary {
    fn from_entries(entries: Vec<JointEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.token.clone(), i))
            .collect();
        JointVocabulary { entries, index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[JointEntry] {
        &self.entries
    }

    pub fn membership(&self, token: &str) -> Option<Membership> {
        self.index.get(token).map(|&i| self.entries[i].membership)
    }

    pub fn tokens_in(&self, class: Membership) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(move |e| e.membership == class)
            .map(|e| e.token.as_str())
    }

    pub fn class_size(&self, class: Membership) -> usize {
        self.tokens_in(class).count()
    }

    /// The training vocabulary: one row per joint token, shared tokens once.
    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_tokens(self.entries.iter().map(|e| e.token.as_str()))
            .expect("joint entries are unique")
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "token\tmembership\tcount1\tcount2")?;
        for e in &self.entries {
            writeln!(out, "{}\t{}\t{}\t{}", e.token, e.membership, e.count1, e.count2)?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if i == 0 && line.starts_with("token\t") {
                continue;
            }
            let bad = || Error::parse(path, i + 1, "expected `token<TAB>membership<TAB>count1<TAB>count2`");
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            entries.push(JointEntry {
                token: f[0].to_string(),
                membership: f[1].parse().map_err(|_| bad())?,
                count1: f[2].parse().map_err(|_| bad())?,
                count2: f[3].parse().map_err(|_| bad())?,
            });
        }
        let vocab = JointVocabulary::from_entries(entries);
        if vocab.index.len() != vocab.entries.len() {
            return Err(Error::parse(path, 0, "duplicate token in joint vocabulary"));
        }
        Ok(vocab)
    }
}

pub fn build_joint_vocab(
    stats1: &CorpusStats,
    stats2: &CorpusStats,
    max_size: Option<usize>,
) -> Result<JointVocabulary> {
    if stats1.is_empty() || stats2.is_empty() {
        return Err(Error::Empty("corpus statistics".into()));
    }
    let mut entries: Vec<JointEntry> = stats1
        .counts
        .keys()
        .chain(stats2.counts.keys().filter(|t| !stats1.contains(t)))
        .map(|token| {
            let (c1, c2) = (stats1.count(token), stats2.count(token));
            let membership = match (c1 > 0, c2 > 0) {
                (true, true) => Membership::Shared,
                (true, false) => Membership::L1Only,
                _ => Membership::L2Only,
            };
            JointEntry {
                token: token.clone(),
                membership,
                count1: c1,
                count2: c2,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        (b.count1 + b.count2)
            .cmp(&(a.count1 + a.count2))
            .then_with(|| a.token.cmp(&b.token))
    });
    if let Some(cap) = max_size {
        entries.truncate(cap);
    }
    Ok(JointVocabulary::from_entries(entries))
}

fn read_lines_raw(path: &Path) -> Result<Vec<Vec<u8>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut lines = Vec::new();
    loop {
        let mut buf = Vec::new();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        if buf.last() != Some(&b'\n') {
            buf.push(b'\n');
        }
        lines.push(buf);
    }
    Ok(lines)
}

/// Concatenates two corpora line-wise, optionally shuffling the lines with a
/// seeded permutation.
pub fn concat_corpora(
    corpus1: impl AsRef<Path>,
    corpus2: impl AsRef<Path>,
    out: impl AsRef<Path>,
    shuffle_seed: Option<u64>,
) -> Result<()> {
    let out = out.as_ref();
    let mut lines = read_lines_raw(corpus1.as_ref())?;
    lines.extend(read_lines_raw(corpus2.as_ref())?);
    if let Some(seed) = shuffle_seed {
        lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    for line in &lines {
        w.write_all(line).map_err(|e| Error::io(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReplaceStats {
    /// Token occurrences with at least one translation.
    pub eligible: u64,
    pub replaced: u64,
}

/// Builds a pseudo-bilingual corpus by replacing dictionary words with one of
/// their translations, each occurrence independently with probability `prob`.
/// Whitespace between tokens is copied verbatim.
pub fn replace_with_dictionary(
    corpus: impl AsRef<Path>,
    dict: &SeedDictionary,
    prob: f64,
    seed: u64,
    out: impl AsRef<Path>,
) -> Result<ReplaceStats> {
    let (path, out) = (corpus.as_ref(), out.as_ref());
    if dict.is_empty() {
        return Err(Error::Empty("replacement dictionary".into()));
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::InvalidArgument(format!(
            "replacement probability {prob} outside [0, 1]"
        )));
    }
    let mut translations: HashMap<&str, Vec<&str>> = HashMap::new();
    for (s, t) in dict.iter() {
        let entry = translations.entry(s).or_default();
        if !entry.contains(&t) {
            entry.push(t);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ReplaceStats::default();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let out_file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(out_file);
    let mut buf = Vec::new();
    let mut line_no = 0;
    let mut rewritten = String::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let line = std::str::from_utf8(&buf).map_err(|_| Error::parse(path, line_no, "invalid UTF-8"))?;
        rewritten.clear();
        let mut rest = line;
        while !rest.is_empty() {
            let ws = rest.len() - rest.trim_start().len();
            rewritten.push_str(&rest[..ws]);
            rest = &rest[ws..];
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            let token = &rest[..end];
            rest = &rest[end..];
            match translations.get(token) {
                Some(targets) => {
                    stats.eligible += 1;
                    if rng.random::<f64>() < prob {
                        stats.replaced += 1;
                        let pick = if targets.len() == 1 {
                            0
                        } else {
                            rng.random_range(0..targets.len())
                        };
                        rewritten.push_str(targets[pick]);
                    } else {
                        rewritten.push_str(token);
                    }
                }
                None => rewritten.push_str(token),
            }
        }
        w.write_all(rewritten.as_bytes()).map_err(|e| Error::io(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn stats(pairs: &[(&str, u64)]) -> CorpusStats {
        CorpusStats::from_counts("x", pairs.iter().map(|&(t, c)| (t, c))).unwrap()
    }

    #[test]
    fn counts_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c", "the cat the\n");
        let s = count_tokens(&p, "en", false, 0).unwrap();
        assert_eq!(s.count("the"), 2);
        assert_eq!(s.count("cat"), 1);
        assert_eq!(s.total(), 3);
    }

    #[test]
    fn lowercasing_folds_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c", "The the\n");
        let s = count_tokens(&p, "en", true, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.count("the"), 2);
    }

    #[test]
    fn min_count_filters_and_total_follows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c", "a a b\n");
        let s = count_tokens(&p, "en", false, 2).unwrap();
        assert_eq!(s.ranked(), vec![("a", 2)]);
        assert_eq!(s.total(), 2);
    }

    #[test]
    fn count_rejects_invalid_utf8() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c");
        fs::write(&p, b"ok\n\xff\xfe\n").unwrap();
        assert!(matches!(
            count_tokens(&p, "en", false, 0),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            count_tokens(dir.path().join("missing"), "en", false, 0),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn stats_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = stats(&[("a", 5), ("b", 3)]);
        let p = dir.path().join("s.tsv");
        s.save(&p).unwrap();
        assert_eq!(CorpusStats::load(&p, "x").unwrap(), s);
    }

    #[test]
    fn joint_vocab_memberships() {
        let v = build_joint_vocab(&stats(&[("a", 5), ("b", 3)]), &stats(&[("b", 2), ("c", 4)]), None).unwrap();
        assert_eq!(v.membership("a"), Some(Membership::L1Only));
        assert_eq!(v.membership("b"), Some(Membership::Shared));
        assert_eq!(v.membership("c"), Some(Membership::L2Only));
        assert_eq!(v.vocabulary().tokens(), &["a", "b", "c"]);
    }

    #[test]
    fn disjoint_vocabularies_share_nothing() {
        let v = build_joint_vocab(&stats(&[("a", 1)]), &stats(&[("b", 1)]), None).unwrap();
        assert_eq!(v.class_size(Membership::Shared), 0);
    }

    #[test]
    fn cap_keeps_largest_combined_counts_with_lexicographic_ties() {
        // combined: a=5, b=5, c=4
        let v = build_joint_vocab(&stats(&[("a", 5), ("b", 3)]), &stats(&[("b", 2), ("c", 4)]), Some(2)).unwrap();
        let kept: Vec<&str> = v.entries().iter().map(|e| e.token.as_str()).collect();
        assert_eq!(kept, vec!["a", "b"]);
    }

    #[test]
    fn empty_stats_rejected() {
        assert!(build_joint_vocab(&CorpusStats::new("x"), &stats(&[("a", 1)]), None).is_err());
    }

    #[test]
    fn joint_vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = build_joint_vocab(&stats(&[("a", 5), ("b", 3)]), &stats(&[("b", 2), ("c", 4)]), None).unwrap();
        let p = dir.path().join("j.tsv");
        v.save(&p).unwrap();
        assert_eq!(JointVocabulary::load(&p).unwrap(), v);
    }

    #[test]
    fn concat_without_shuffle_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a", "a b");
        let b = write(dir.path(), "b", "c d\n");
        let out = dir.path().join("o");
        concat_corpora(&a, &b, &out, None).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), "a b\nc d\n");
    }

    #[test]
    fn concat_shuffle_is_seeded_permutation() {
        let dir = tempfile::tempdir().unwrap();
        let text1: String = (0..50).map(|i| format!("x{i}\n")).collect();
        let text2: String = (0..50).map(|i| format!("y{i}\n")).collect();
        let a = write(dir.path(), "a", &text1);
        let b = write(dir.path(), "b", &text2);
        let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
        concat_corpora(&a, &b, &o1, Some(7)).unwrap();
        concat_corpora(&a, &b, &o2, Some(7)).unwrap();
        let (r1, r2) = (fs::read(&o1).unwrap(), fs::read(&o2).unwrap());
        assert_eq!(r1, r2);
        let mut got: Vec<String> = String::from_utf8(r1).unwrap().lines().map(String::from).collect();
        let mut want: Vec<String> = text1.lines().chain(text2.lines()).map(String::from).collect();
        assert_ne!(got, want);
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn replace_probability_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c", "a b a\n  a\tb \n");
        let dict = SeedDictionary::from_pairs([("a", "x")]);
        let out = dir.path().join("o");

        replace_with_dictionary(&p, &dict, 0.0, 1, &out).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), "a b a\n  a\tb \n");

        let s = replace_with_dictionary(&p, &dict, 1.0, 1, &out).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), "x b x\n  x\tb \n");
        assert_eq!(s, ReplaceStats { eligible: 3, replaced: 3 });
    }

    #[test]
    fn replace_rate_concentrates() {
        let dir = tempfile::tempdir().unwrap();
        let line = "a b c a d\n".repeat(6000);
        let p = write(dir.path(), "c", &line);
        let dict = SeedDictionary::from_pairs([("a", "x"), ("a", "y"), ("c", "z")]);
        let out = dir.path().join("o");
        let s = replace_with_dictionary(&p, &dict, 0.5, 42, &out).unwrap();
        assert_eq!(s.eligible, 18_000);
        let frac = s.replaced as f64 / s.eligible as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
        // both translations of `a` are used
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.contains('x') && text.contains('y'));

        let out2 = dir.path().join("o2");
        replace_with_dictionary(&p, &dict, 0.5, 42, &out2).unwrap();
        assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());
    }

    proptest! {
        #[test]
        fn counts_are_additive_over_concatenation(
            a in proptest::collection::vec("[a-e]{1,2}( [a-e]{1,2}){0,5}", 0..8),
            b in proptest::collection::vec("[a-e]{1,2}( [a-e]{1,2}){0,5}", 0..8),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let pa = write(dir.path(), "a", &a.join("\n"));
            let pb = write(dir.path(), "b", &b.join("\n"));
            let pc = dir.path().join("c");
            concat_corpora(&pa, &pb, &pc, None).unwrap();
            let sa = count_tokens(&pa, "x", false, 0).unwrap();
            let sb = count_tokens(&pb, "x", false, 0).unwrap();
            let sc = count_tokens(&pc, "x", false, 0).unwrap();
            prop_assert_eq!(sc, sa.merged(&sb));
        }

        #[test]
        fn joint_vocab_partitions_union(
            a in proptest::collection::btree_map("[a-h]", 1u64..20, 1..8),
            b in proptest::collection::btree_map("[a-h]", 1u64..20, 1..8),
            cap in proptest::option::of(1usize..10),
        ) {
            let s1 = CorpusStats::from_counts("1", a.clone()).unwrap();
            let s2 = CorpusStats::from_counts("2", b.clone()).unwrap();
            let v = build_joint_vocab(&s1, &s2, cap).unwrap();
            let union: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
            let sizes = v.class_size(Membership::L1Only) + v.class_size(Membership::L2Only)
                + v.class_size(Membership::Shared);
            prop_assert_eq!(sizes, v.len());
            prop_assert_eq!(v.len(), cap.map_or(union.len(), |c| c.min(union.len())));
            for e in v.entries() {
                prop_assert_eq!(e.membership == Membership::Shared,
                    a.contains_key(&e.token) && b.contains_key(&e.token));
            }
        }
    }
}
