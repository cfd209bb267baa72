//! Synthetic "cipher" bilingual corpora with planted translations.
//!
//! The first language is sampled from a sparse random Markov chain over a
//! Zipf-weighted vocabulary, so every word has its own context profile. The
//! second language is the same text with every word renamed, except for a
//! chosen fraction of anchor words that keep their surface form. Optionally,
//! some surfaces are deliberately overshared: the second language writes a
//! rare word with the surface of an unrelated frequent first-language word.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::dictionary::SeedDictionary;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CipherConfig {
    /// Word types of the first language.
    pub vocab_size: usize,
    /// Running tokens of the first language (the second has the same).
    pub tokens: usize,
    /// Fraction of word types written identically in both languages.
    pub shared_fraction: f64,
    /// Number of overshared surfaces with a different meaning per language.
    pub ambiguous_anchors: usize,
    /// Size of the planted test dictionary of non-shared words.
    pub test_pairs: usize,
    /// Out-degree of each word in the generating chain.
    pub successors: usize,
    /// Probability of restarting from the unigram distribution.
    pub jump_prob: f64,
    pub min_sentence: usize,
    pub max_sentence: usize,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for CipherConfig {
    fn default() -> Self {
        CipherConfig {
            vocab_size: 3000,
            tokens: 1_000_000,
            shared_fraction: 0.2,
            ambiguous_anchors: 0,
            test_pairs: 500,
            successors: 12,
            jump_prob: 0.2,
            min_sentence: 8,
            max_sentence: 20,
            zipf_exponent: 1.0,
            seed: 1,
        }
    }
}

/// Paths and planted facts of a generated cipher corpus.
#[derive(Clone, Debug)]
pub struct CipherCorpus {
    pub corpus1: PathBuf,
    pub corpus2: PathBuf,
    /// Every first-language word and its true translation.
    pub full_dictionary: SeedDictionary,
    /// Test pairs over non-shared, non-ambiguous words.
    pub test_dictionary: SeedDictionary,
    /// `(surface, true translation)` of each overshared surface as a
    /// first-language word.
    pub ambiguous_dictionary: SeedDictionary,
    pub shared: Vec<String>,
}

fn l1_surface(w: usize) -> String {
    format!("w{w}")
}

fn l2_renamed(w: usize) -> String {
    format!("v{w}")
}

struct Chain {
    unigram: WeightedAliasIndex<f64>,
    next: Vec<(Vec<usize>, WeightedAliasIndex<f64>)>,
}

impl Chain {
    fn new(cfg: &CipherConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let zipf: Vec<f64> = (0..cfg.vocab_size)
            .map(|r| 1.0 / ((r + 1) as f64).powf(cfg.zipf_exponent))
            .collect();
        let unigram = WeightedAliasIndex::new(zipf).map_err(|e| Error::Numerical(e.to_string()))?;
        let mut next = Vec::with_capacity(cfg.vocab_size);
        for _ in 0..cfg.vocab_size {
            let mut succ = Vec::with_capacity(cfg.successors);
            while succ.len() < cfg.successors.min(cfg.vocab_size) {
                let s = unigram.sample(rng);
                if !succ.contains(&s) {
                    succ.push(s);
                }
            }
            let weights: Vec<f64> = succ.iter().map(|_| rng.random_range(0.2..1.0)).collect();
            let dist = WeightedAliasIndex::new(weights).map_err(|e| Error::Numerical(e.to_string()))?;
            next.push((succ, dist));
        }
        Ok(Chain { unigram, next })
    }

    fn sentence(&self, cfg: &CipherConfig, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        out.clear();
        let len = rng.random_range(cfg.min_sentence..=cfg.max_sentence);
        let mut w = self.unigram.sample(rng);
        out.push(w);
        while out.len() < len {
            w = if rng.random::<f64>() < cfg.jump_prob {
                self.unigram.sample(rng)
            } else {
                let (succ, dist) = &self.next[w];
                succ[dist.sample(rng)]
            };
            out.push(w);
        }
    }
}

fn write_lines(path: &Path, sentences: &[Vec<usize>], name: impl Fn(usize) -> String) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let names: Vec<String> = (0..=sentences.iter().flatten().max().copied().unwrap_or(0))
        .map(name)
        .collect();
    for s in sentences {
        let line: Vec<&str> = s.iter().map(|&t| names[t].as_str()).collect();
        writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Generates `corpus1.txt`, `corpus2.txt` and the planted dictionaries in
/// `dir`.
pub fn generate_cipher(cfg: &CipherConfig, dir: impl AsRef<Path>) -> Result<CipherCorpus> {
    let dir = dir.as_ref();
    if cfg.vocab_size < 2 || cfg.min_sentence == 0 || cfg.min_sentence > cfg.max_sentence {
        return Err(Error::InvalidArgument("degenerate cipher configuration".into()));
    }
    if !(0.0..1.0).contains(&cfg.shared_fraction) {
        return Err(Error::InvalidArgument("shared fraction must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let chain = Chain::new(cfg, &mut rng)?;

    let mut sentences = Vec::new();
    let mut produced = 0;
    let mut buf = Vec::new();
    while produced < cfg.tokens {
        chain.sentence(cfg, &mut rng, &mut buf);
        produced += buf.len();
        sentences.push(buf.clone());
    }
    let mut counts = vec![0u64; cfg.vocab_size];
    for &w in sentences.iter().flatten() {
        counts[w] += 1;
    }
    let mut seen: Vec<usize> = (0..cfg.vocab_size).filter(|&w| counts[w] > 0).collect();
    // frequency rank order, ties by id
    seen.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));

    let mut shuffled = seen.clone();
    shuffled.shuffle(&mut rng);
    let n_shared = (cfg.shared_fraction * seen.len() as f64).round() as usize;
    let shared: HashSet<usize> = shuffled[..n_shared].iter().copied().collect();

    // Overshared pairs (a, b): b is rendered in the second language with a's
    // surface. a is frequent, b at least 12 times rarer.
    let mut ambiguous: Vec<(usize, usize)> = Vec::new();
    if cfg.ambiguous_anchors > 0 {
        let free: Vec<usize> = seen.iter().copied().filter(|w| !shared.contains(w)).collect();
        let mut used = HashSet::new();
        let mut rare_iter = free.iter().rev();
        for &a in free.iter().skip(10) {
            if ambiguous.len() == cfg.ambiguous_anchors {
                break;
            }
            let Some(&b) = rare_iter.find(|&&b| !used.contains(&b) && b != a && counts[b] >= 5) else {
                break;
            };
            if counts[a] < 12 * counts[b] {
                break;
            }
            used.insert(a);
            used.insert(b);
            ambiguous.push((a, b));
        }
        if ambiguous.len() < cfg.ambiguous_anchors {
            return Err(Error::InvalidArgument(format!(
                "corpus too small for {} ambiguous anchors",
                cfg.ambiguous_anchors
            )));
        }
    }
    let ambiguous_a: HashSet<usize> = ambiguous.iter().map(|p| p.0).collect();
    let ambiguous_b: Vec<Option<usize>> = {
        let mut v = vec![None; cfg.vocab_size];
        for &(a, b) in &ambiguous {
            v[b] = Some(a);
        }
        v
    };

    let l2_name = |w: usize| -> String {
        if shared.contains(&w) {
            l1_surface(w)
        } else if let Some(a) = ambiguous_b[w] {
            l1_surface(a)
        } else {
            l2_renamed(w)
        }
    };

    let corpus1 = dir.join("corpus1.txt");
    let corpus2 = dir.join("corpus2.txt");
    write_lines(&corpus1, &sentences, l1_surface)?;
    write_lines(&corpus2, &sentences, l2_name)?;

    let full_dictionary: SeedDictionary = seen.iter().map(|&w| (l1_surface(w), l2_name(w))).collect();

    let eligible: Vec<usize> = seen
        .iter()
        .copied()
        .filter(|w| !shared.contains(w) && !ambiguous_a.contains(w) && ambiguous_b[*w].is_none())
        .take(3 * cfg.test_pairs)
        .collect();
    if eligible.len() < cfg.test_pairs {
        return Err(Error::InvalidArgument(format!(
            "only {} candidate test words for {} test pairs",
            eligible.len(),
            cfg.test_pairs
        )));
    }
    let mut picked: Vec<usize> = eligible
        .choose_multiple(&mut rng, cfg.test_pairs)
        .copied()
        .collect();
    picked.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let test_dictionary = picked.iter().map(|&w| (l1_surface(w), l2_renamed(w))).collect();
    let ambiguous_dictionary = ambiguous.iter().map(|&(a, _)| (l1_surface(a), l2_renamed(a))).collect();

    let mut shared_tokens: Vec<String> = seen.iter().filter(|w| shared.contains(w)).map(|&w| l1_surface(w)).collect();
    shared_tokens.sort();

    Ok(CipherCorpus {
        corpus1,
        corpus2,
        full_dictionary,
        test_dictionary,
        ambiguous_dictionary,
        shared: shared_tokens,
    })
}
