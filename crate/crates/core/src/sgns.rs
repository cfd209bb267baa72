//! Skip-gram with negative sampling over a fixed vocabulary.
//!
//! Every vocabulary token owns exactly one input row, so a token occurring in
//! both halves of a concatenated bilingual corpus is trained from the contexts
//! of both languages.
//!
//! Parameters live in relaxed atomics. With one worker this is an ordinary
//! sequential SGD; with several workers it is lock-free Hogwild-style training
//! whose result depends on thread scheduling.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use log::info;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::embed_io::{EmbeddingSet, Vocabulary};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThreadMode {
    DeterministicSingle,
    ParallelLockfree { threads: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to zero over training.
    pub learning_rate: f64,
    /// Subsampling threshold `t`.
    pub subsample: f64,
    pub min_count: u64,
    pub seed: u64,
    pub threads: ThreadMode,
    pub lowercase: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.05,
            subsample: 1e-4,
            min_count: 5,
            seed: 1,
            threads: ThreadMode::DeterministicSingle,
            lowercase: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if self.negatives == 0 {
            return fail("negatives must be at least 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning rate must be positive");
        }
        if !(self.subsample > 0.0) {
            return fail("subsample threshold must be positive");
        }
        if let ThreadMode::ParallelLockfree { threads: 0 } = self.threads {
            return fail("thread count must be at least 1");
        }
        Ok(())
    }
}

/// Keep probability of one occurrence of a word seen `count` times out of
/// `total`: `min(1, sqrt(t T / C) + t T / C)`.
pub fn subsample_keep_prob(count: u64, total: u64, threshold: f64) -> f64 {
    let x = threshold * total as f64 / count as f64;
    (x.sqrt() + x).min(1.0)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln σ(x)`, computed without overflow.
#[inline]
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss of one training example: the center predicts `context` against the
/// sampled `negatives`.
pub fn example_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    neg_log_sigmoid(dot(center, context))
        + negatives
            .iter()
            .map(|n| neg_log_sigmoid(-dot(center, n)))
            .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExampleGradient {
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Analytic gradient of [`example_loss`].
pub fn example_gradient(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> ExampleGradient {
    let mut g_center = vec![0.0; center.len()];
    let coeff = sigmoid(dot(center, context)) - 1.0;
    for (g, u) in g_center.iter_mut().zip(context) {
        *g += coeff * u;
    }
    let g_context = center.iter().map(|h| coeff * h).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for n in negatives {
        let coeff = sigmoid(dot(center, n));
        for (g, u) in g_center.iter_mut().zip(n.iter()) {
            *g += coeff * u;
        }
        g_negs.push(center.iter().map(|h| coeff * h).collect());
    }
    ExampleGradient {
        center: g_center,
        context: g_context,
        negatives: g_negs,
    }
}

/// SGD on one (center, target) term: updates `target` in place, accumulates
/// the center's update into `center_delta`, returns the term's loss.
#[inline]
fn update_target(center: &[f64], target: &mut [f64], center_delta: &mut [f64], label: bool, lr: f64) -> f64 {
    let f = dot(center, target);
    let (loss, g) = if label {
        (neg_log_sigmoid(f), (1.0 - sigmoid(f)) * lr)
    } else {
        (neg_log_sigmoid(-f), -sigmoid(f) * lr)
    };
    for ((d, t), h) in center_delta.iter_mut().zip(target.iter_mut()).zip(center) {
        *d += g * *t;
        *t += g * h;
    }
    loss
}

/// Row-major matrix of relaxed atomics, shared between workers.
struct SharedMatrix {
    data: Vec<AtomicU64>,
    dim: usize,
}

impl SharedMatrix {
    fn from_fn(rows: usize, dim: usize, mut f: impl FnMut() -> f64) -> Self {
        SharedMatrix {
            data: (0..rows * dim).map(|_| AtomicU64::new(f().to_bits())).collect(),
            dim,
        }
    }

    #[inline]
    fn load(&self, row: usize, out: &mut [f64]) {
        let src = &self.data[row * self.dim..(row + 1) * self.dim];
        for (o, a) in out.iter_mut().zip(src) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }

    #[inline]
    fn store(&self, row: usize, values: &[f64]) {
        let dst = &self.data[row * self.dim..(row + 1) * self.dim];
        for (a, v) in dst.iter().zip(values) {
            a.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    fn into_array(self, rows: usize) -> Array2<f64> {
        let data = self
            .data
            .into_iter()
            .map(|a| f64::from_bits(a.into_inner()))
            .collect();
        Array2::from_shape_vec((rows, self.dim), data).expect("shape fixed at construction")
    }
}

/// The corpus as vocabulary ids, sentence by sentence.
struct EncodedCorpus {
    ids: Vec<u32>,
    /// Exclusive end offset of every sentence in `ids`.
    ends: Vec<usize>,
    counts: Vec<u64>,
}

impl EncodedCorpus {
    fn read(path: &Path, vocab: &Vocabulary, lowercase: bool) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut ids = Vec::new();
        let mut ends = Vec::new();
        let mut counts = vec![0u64; vocab.len()];
        let mut buf = Vec::new();
        let mut line_no = 0;
        loop {
            buf.clear();
            if reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))? == 0 {
                break;
            }
            line_no += 1;
            let line = std::str::from_utf8(&buf).map_err(|_| Error::parse(path, line_no, "invalid UTF-8"))?;
            let start = ids.len();
            for token in line.split_whitespace() {
                let id = if lowercase {
                    vocab.get(&token.to_lowercase())
                } else {
                    vocab.get(token)
                };
                if let Some(id) = id {
                    ids.push(id as u32);
                    counts[id] += 1;
                }
            }
            if ids.len() > start {
                ends.push(ids.len());
            }
        }
        Ok(EncodedCorpus { ids, ends, counts })
    }

    fn sentence(&self, i: usize) -> &[u32] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] };
        &self.ids[start..self.ends[i]]
    }
}

struct Trainer<'a> {
    corpus: &'a EncodedCorpus,
    config: &'a TrainConfig,
    input: SharedMatrix,
    output: SharedMatrix,
    keep_prob: Vec<f64>,
    noise: WeightedAliasIndex<f64>,
    processed: AtomicU64,
    total_work: u64,
}

#[derive(Default, Clone, Copy)]
struct EpochLoss {
    sum: f64,
    examples: u64,
}

impl Trainer<'_> {
    fn learning_rate(&self) -> f64 {
        let done = self.processed.load(Ordering::Relaxed) as f64 / self.total_work as f64;
        self.config.learning_rate * (1.0 - done).max(1e-4)
    }

    fn run_sentences(&self, sentences: std::ops::Range<usize>, rng: &mut ChaCha8Rng) -> EpochLoss {
        let d = self.config.dim;
        let mut center = vec![0.0; d];
        let mut delta = vec![0.0; d];
        let mut target = vec![0.0; d];
        let mut kept: Vec<u32> = Vec::new();
        let mut loss = EpochLoss::default();

        for s in sentences {
            let sentence = self.corpus.sentence(s);
            let lr = self.learning_rate();
            kept.clear();
            for &w in sentence {
                let p = self.keep_prob[w as usize];
                if p >= 1.0 || rng.random::<f64>() < p {
                    kept.push(w);
                }
            }
            for i in 0..kept.len() {
                let reach = self.config.window - rng.random_range(0..self.config.window);
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(kept.len() - 1);
                let c = kept[i] as usize;
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let o = kept[j] as usize;
                    self.input.load(c, &mut center);
                    delta.iter_mut().for_each(|v| *v = 0.0);

                    self.output.load(o, &mut target);
                    let mut example = update_target(&center, &mut target, &mut delta, true, lr);
                    self.output.store(o, &target);
                    for _ in 0..self.config.negatives {
                        let n = self.noise.sample(rng);
                        if n == o {
                            continue;
                        }
                        self.output.load(n, &mut target);
                        example += update_target(&center, &mut target, &mut delta, false, lr);
                        self.output.store(n, &target);
                    }

                    for (h, dv) in center.iter_mut().zip(&delta) {
                        *h += dv;
                    }
                    self.input.store(c, &center);
                    loss.sum += example;
                    loss.examples += 1;
                }
            }
            self.processed.fetch_add(sentence.len() as u64, Ordering::Relaxed);
        }
        loss
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutput {
    pub embeddings: EmbeddingSet,
    /// Mean example loss of every epoch.
    pub epoch_loss: Vec<f64>,
    /// In-vocabulary corpus tokens per epoch.
    pub corpus_tokens: u64,
}

/// Trains one input vector per vocabulary token on the corpus at `corpus`.
/// Tokens outside `vocab` are skipped.
pub fn train_sgns(corpus: impl AsRef<Path>, vocab: &Vocabulary, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    if vocab.is_empty() {
        return Err(Error::Empty("training vocabulary".into()));
    }
    let corpus = EncodedCorpus::read(corpus.as_ref(), vocab, config.lowercase)?;
    if corpus.ids.len() < 2 {
        return Err(Error::Empty("no in-vocabulary tokens in corpus".into()));
    }
    let total = corpus.ids.len() as u64;
    let keep_prob = corpus
        .counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { subsample_keep_prob(c, total, config.subsample) })
        .collect();
    let weights: Vec<f64> = corpus.counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let noise = WeightedAliasIndex::new(weights).map_err(|e| Error::Numerical(e.to_string()))?;

    let d = config.dim;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let input = SharedMatrix::from_fn(vocab.len(), d, || (init_rng.random::<f64>() - 0.5) / d as f64);
    let output = SharedMatrix::from_fn(vocab.len(), d, || 0.0);

    let trainer = Trainer {
        corpus: &corpus,
        config,
        input,
        output,
        keep_prob,
        noise,
        processed: AtomicU64::new(0),
        total_work: total * config.epochs as u64,
    };

    let n_sent = corpus.ends.len();
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let loss = match config.threads {
            ThreadMode::DeterministicSingle => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(epoch as u64 + 1);
                trainer.run_sentences(0..n_sent, &mut rng)
            }
            ThreadMode::ParallelLockfree { threads } => {
                let per = n_sent.div_ceil(threads);
                std::thread::scope(|scope| {
                    let handles: Vec<_> = (0..threads)
                        .map(|t| {
                            let trainer = &trainer;
                            scope.spawn(move || {
                                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                                rng.set_stream(((epoch as u64 + 1) << 16) | t as u64);
                                trainer.run_sentences((t * per).min(n_sent)..((t + 1) * per).min(n_sent), &mut rng)
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("training worker panicked"))
                        .fold(EpochLoss::default(), |a, b| EpochLoss {
                            sum: a.sum + b.sum,
                            examples: a.examples + b.examples,
                        })
                })
            }
        };
        let mean = loss.sum / loss.examples.max(1) as f64;
        info!("epoch {}: mean loss {mean:.5} over {} examples", epoch + 1, loss.examples);
        epoch_loss.push(mean);
    }

    let matrix = trainer.input.into_array(vocab.len());
    Ok(TrainOutput {
        embeddings: EmbeddingSet::new(vocab.clone(), matrix)?,
        epoch_loss,
        corpus_tokens: total,
    })
}
