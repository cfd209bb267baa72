//! End-to-end orchestration: joint initialization, vocabulary reallocation
//! and alignment refinement.
//!
//! Every stage reads its inputs from disk and writes its outputs to disk, so
//! running the stages one by one with the same root seed reproduces the
//! pipeline's artifacts exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};

use crate::align::{
    apply_alignment, build_training_matrices, filter_framework_pairs, procrustes, refine_unsupervised,
    AlignmentMatrix, InduceParams, RefineStep,
};
use crate::bli::{evaluate_bli, BliParams, BliReport, OovPolicy, PairFilter};
use crate::corpus::{build_joint_vocab, concat_corpora, count_tokens, CorpusStats, JointVocabulary};
use crate::dictionary::SeedDictionary;
use crate::embed_io::{load_embeddings, normalize, save_embeddings, EmbeddingSet, NormMode, DEFAULT_PRECISION};
use crate::error::{Error, Result};
use crate::realloc::{reallocate, shared_bounds, split_embeddings, Allocation, ReallocatedVocabulary, GAMMA_GRID};
use crate::retrieval::{Metric, DEFAULT_CSLS_K};
use crate::sgns::{train_sgns, ThreadMode, TrainConfig};

/// Derives the seed of one stage from the root seed.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    // FNV-1a of the stage name, mixed into the root with splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = root ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub enum AlignMode {
    Supervised { dict: PathBuf },
    Unsupervised { iterations: usize, csls_k: usize },
    /// Stop after reallocation; `W` is the identity.
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub corpus1: PathBuf,
    pub corpus2: PathBuf,
    pub lowercase: bool,
    pub max_vocab: Option<usize>,
    /// Shuffle the concatenated corpus lines.
    pub shuffle: bool,
    pub train: TrainConfig,
    pub normalize: NormMode,
    pub gamma: f64,
    /// When false, the joint membership is kept as is.
    pub reallocate: bool,
    pub align: AlignMode,
    pub eval_dicts: Vec<PathBuf>,
    pub eval: BliParams,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub precision: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus1: PathBuf::new(),
            corpus2: PathBuf::new(),
            lowercase: true,
            max_vocab: None,
            shuffle: true,
            train: TrainConfig::default(),
            normalize: NormMode::Unit,
            gamma: 0.9,
            reallocate: true,
            align: AlignMode::Unsupervised {
                iterations: 5,
                csls_k: DEFAULT_CSLS_K,
            },
            eval_dicts: Vec::new(),
            eval: BliParams::default(),
            out_dir: PathBuf::from("out"),
            seed: 1,
            precision: DEFAULT_PRECISION,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("bad boolean `{value}` for `{key}`"))),
    }
}

impl PipelineConfig {
    /// Sets one option by its configuration-file key.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "corpus1" => self.corpus1 = PathBuf::from(value),
            "corpus2" => self.corpus2 = PathBuf::from(value),
            "lowercase" => {
                self.lowercase = parse_bool(key, value)?;
                t.lowercase = self.lowercase;
            }
            "max_vocab" => self.max_vocab = Some(parse_value(key, value)?),
            "shuffle" => self.shuffle = parse_bool(key, value)?,
            "dim" => t.dim = parse_value(key, value)?,
            "window" => t.window = parse_value(key, value)?,
            "negatives" => t.negatives = parse_value(key, value)?,
            "epochs" => t.epochs = parse_value(key, value)?,
            "lr" | "learning_rate" => t.learning_rate = parse_value(key, value)?,
            "subsample" => t.subsample = parse_value(key, value)?,
            "min_count" => t.min_count = parse_value(key, value)?,
            "threads" => {
                let n: usize = parse_value(key, value)?;
                t.threads = if n <= 1 {
                    ThreadMode::DeterministicSingle
                } else {
                    ThreadMode::ParallelLockfree { threads: n }
                };
            }
            "thread_mode" => {
                t.threads = match value {
                    "deterministic_single" | "deterministic" => ThreadMode::DeterministicSingle,
                    "parallel_lockfree" | "parallel" => ThreadMode::ParallelLockfree {
                        threads: rayon::current_num_threads(),
                    },
                    _ => return Err(Error::InvalidArgument(format!("unknown thread mode `{value}`"))),
                }
            }
            "normalize" => self.normalize = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "reallocate" => self.reallocate = parse_bool(key, value)?,
            "align" => {
                self.align = match value {
                    "supervised" => AlignMode::Supervised { dict: PathBuf::new() },
                    "unsupervised" => AlignMode::Unsupervised {
                        iterations: 5,
                        csls_k: DEFAULT_CSLS_K,
                    },
                    "none" => AlignMode::None,
                    _ => return Err(Error::InvalidArgument(format!("unknown alignment mode `{value}`"))),
                }
            }
            "dict" => self.align = AlignMode::Supervised { dict: PathBuf::from(value) },
            "iterations" => match &mut self.align {
                AlignMode::Unsupervised { iterations, .. } => *iterations = parse_value(key, value)?,
                _ => return Err(Error::InvalidArgument("`iterations` needs align = unsupervised".into())),
            },
            "csls_k" => {
                let k: usize = parse_value(key, value)?;
                if let AlignMode::Unsupervised { csls_k, .. } = &mut self.align {
                    *csls_k = k;
                }
                self.eval.metric = Metric::Csls { k };
            }
            "eval" => {
                self.eval_dicts = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "oov_policy" => self.eval.oov_policy = parse_value::<OovPolicy>(key, value)?,
            "filter" => self.eval.filter = parse_value::<PairFilter>(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = parse_value(key, value)?,
            "precision" => self.precision = parse_value(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; blank lines and `#` comments are
    /// ignored.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `key = value`"))?;
            self.apply_kv(key.trim(), value.trim())
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut paths = vec![&self.corpus1, &self.corpus2];
        if let AlignMode::Supervised { dict } = &self.align {
            paths.push(dict);
        }
        paths.extend(&self.eval_dicts);
        for p in paths {
            if !p.is_file() {
                return Err(Error::InvalidArgument(format!("no such file: {}", p.display())));
            }
        }
        shared_bounds(self.gamma)?;
        if !GAMMA_GRID.contains(&self.gamma) {
            warn!("gamma {} is outside the grid {:?}", self.gamma, GAMMA_GRID);
        }
        if let AlignMode::Unsupervised { iterations: 0, .. } = self.align {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        self.train.validate()
    }
}

/// Artifact locations inside an output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub stats1: PathBuf,
    pub stats2: PathBuf,
    pub joint_vocab: PathBuf,
    pub joint_corpus: PathBuf,
    pub joint_vec: PathBuf,
    pub train_loss: PathBuf,
    pub normalized_vec: PathBuf,
    pub realloc: PathBuf,
    pub e1: PathBuf,
    pub e2: PathBuf,
    pub es: PathBuf,
    pub w: PathBuf,
    pub trace: PathBuf,
    pub aligned_vec: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Artifacts {
            stats1: d.join("stats1.tsv"),
            stats2: d.join("stats2.tsv"),
            joint_vocab: d.join("joint_vocab.tsv"),
            joint_corpus: d.join("joint_corpus.txt"),
            joint_vec: d.join("joint.vec"),
            train_loss: d.join("train_loss.tsv"),
            normalized_vec: d.join("joint.norm.vec"),
            realloc: d.join("realloc.tsv"),
            e1: d.join("e1.vec"),
            e2: d.join("e2.vec"),
            es: d.join("es.vec"),
            w: d.join("W.txt"),
            trace: d.join("trace.tsv"),
            aligned_vec: d.join("aligned.vec"),
        }
    }

    /// Report file for one evaluation dictionary; `baseline` selects the
    /// pre-refinement joint space.
    pub fn bli_report(&self, dict: &Path, baseline: bool) -> PathBuf {
        let stem = dict.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let dir = self.w.parent().unwrap_or(Path::new("."));
        let prefix = if baseline { "bli_joint" } else { "bli" };
        dir.join(format!("{prefix}.{stem}.json"))
    }
}

/// Runs `body`; on failure removes the listed outputs and tags the error with
/// the stage name.
pub fn run_stage<T>(name: &str, outputs: &[&Path], body: impl FnOnce() -> Result<T>) -> Result<T> {
    info!("[{name}] start");
    match body() {
        Ok(v) => {
            info!("[{name}] done");
            Ok(v)
        }
        Err(e) => {
            for p in outputs {
                if p.exists() {
                    let _ = std::fs::remove_file(p);
                }
            }
            Err(Error::Stage {
                stage: name.to_string(),
                source: Box::new(e),
            })
        }
    }
}

pub fn stage_count(corpus: &Path, label: &str, lowercase: bool, min_count: u64, out: &Path) -> Result<CorpusStats> {
    run_stage("count", &[out], || {
        let stats = count_tokens(corpus, label, lowercase, min_count)?;
        info!("[count] {label}: {} types, {} tokens", stats.len(), stats.total());
        stats.save(out)?;
        Ok(stats)
    })
}

pub fn stage_joint_vocab(stats1: &Path, stats2: &Path, max_size: Option<usize>, out: &Path) -> Result<JointVocabulary> {
    run_stage("joint-vocab", &[out], || {
        let s1 = CorpusStats::load(stats1, "1")?;
        let s2 = CorpusStats::load(stats2, "2")?;
        let joint = build_joint_vocab(&s1, &s2, max_size)?;
        info!(
            "[joint-vocab] {} tokens ({} shared)",
            joint.len(),
            joint.class_size(crate::corpus::Membership::Shared)
        );
        joint.save(out)?;
        Ok(joint)
    })
}

pub fn stage_concat(corpus1: &Path, corpus2: &Path, shuffle: bool, root_seed: u64, out: &Path) -> Result<()> {
    run_stage("concat", &[out], || {
        concat_corpora(corpus1, corpus2, out, shuffle.then(|| stage_seed(root_seed, "concat")))
    })
}

/// Trains on `corpus` over the joint vocabulary. `config.seed` is the root
/// seed; the stage salts it.
pub fn stage_train(
    corpus: &Path,
    joint_vocab: &Path,
    config: &TrainConfig,
    precision: usize,
    out: &Path,
    loss_out: &Path,
) -> Result<()> {
    run_stage("train", &[out, loss_out], || {
        let joint = JointVocabulary::load(joint_vocab)?;
        let config = TrainConfig {
            seed: stage_seed(config.seed, "train"),
            ..config.clone()
        };
        let trained = train_sgns(corpus, &joint.vocabulary(), &config)?;
        save_embeddings(&trained.embeddings, out, precision)?;
        let file = File::create(loss_out).map_err(|e| Error::io(loss_out, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(loss_out, e);
        writeln!(w, "epoch\tloss").map_err(io)?;
        for (epoch, loss) in trained.epoch_loss.iter().enumerate() {
            writeln!(w, "{}\t{loss}", epoch + 1).map_err(io)?;
        }
        w.flush().map_err(io)
    })
}

pub fn stage_normalize(input: &Path, mode: NormMode, precision: usize, out: &Path) -> Result<()> {
    run_stage("normalize", &[out], || {
        let set = load_embeddings(input, None)?;
        save_embeddings(&normalize(&set, mode)?, out, precision)
    })
}

pub fn stage_realloc(
    joint_vocab: &Path,
    stats1: &Path,
    stats2: &Path,
    gamma: Option<f64>,
    out: &Path,
) -> Result<ReallocatedVocabulary> {
    run_stage("realloc", &[out], || {
        let joint = JointVocabulary::load(joint_vocab)?;
        let realloc = match gamma {
            Some(g) => {
                let s1 = CorpusStats::load(stats1, "1")?;
                let s2 = CorpusStats::load(stats2, "2")?;
                reallocate(&joint, &s1, &s2, g)?
            }
            None => ReallocatedVocabulary::unchanged(&joint),
        };
        info!(
            "[realloc] l1 {}, l2 {}, shared {}",
            realloc.class_size(Allocation::L1),
            realloc.class_size(Allocation::L2),
            realloc.class_size(Allocation::Shared)
        );
        realloc.save_report(out)?;
        Ok(realloc)
    })
}

pub fn stage_split(
    embeddings: &Path,
    realloc: &Path,
    precision: usize,
    e1: &Path,
    e2: &Path,
    es: &Path,
) -> Result<()> {
    run_stage("split", &[e1, e2, es], || {
        let set = load_embeddings(embeddings, None)?;
        let realloc = ReallocatedVocabulary::load_report(realloc, f64::NAN)?;
        let split = split_embeddings(&set, &realloc)?;
        save_embeddings(&split.l1, e1, precision)?;
        save_embeddings(&split.l2, e2, precision)?;
        save_embeddings(&split.shared, es, precision)
    })
}

fn union(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<EmbeddingSet> {
    let mut vocab = a.vocab().clone();
    for t in b.vocab().iter() {
        if vocab.push(t).is_none() {
            return Err(Error::OverlappingVocabulary(t.to_string()));
        }
    }
    let matrix = ndarray::concatenate(ndarray::Axis(0), &[a.matrix().view(), b.matrix().view()])
        .map_err(|_| Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        })?;
    EmbeddingSet::new(vocab, matrix)
}

/// Supervised Procrustes from E1' to E2' ∪ Es' on the pairs allowed by the
/// reallocation.
pub fn stage_align(
    dict: &Path,
    realloc: &Path,
    e1: &Path,
    e2: &Path,
    es: &Path,
    out: &Path,
) -> Result<AlignmentMatrix> {
    run_stage("align", &[out], || {
        let dict = SeedDictionary::load(dict)?;
        let realloc = ReallocatedVocabulary::load_report(realloc, f64::NAN)?;
        let (kept, dropped) = filter_framework_pairs(&dict, &realloc);
        info!("[align] {} pairs usable, {} outside L1' x target side", kept.len(), dropped.len());
        let src = load_embeddings(e1, None)?;
        let tgt = union(&load_embeddings(e2, None)?, &load_embeddings(es, None)?)?;
        let m = build_training_matrices(&kept, &src, &tgt)?;
        let w = procrustes(&m.src, &m.tgt)?;
        if w.is_degenerate() {
            warn!("[align] Procrustes solution is not unique");
        }
        w.save(out)?;
        Ok(w)
    })
}

pub fn write_trace(trace: &[RefineStep], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "iteration\tdict_size\tmean_score").map_err(io)?;
    for s in trace {
        writeln!(w, "{}\t{}\t{}", s.iteration, s.dict_size, s.mean_score).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Unsupervised self-learning from E1' to E2'.
pub fn stage_refine(
    e1: &Path,
    e2: &Path,
    iterations: usize,
    params: &InduceParams,
    out: &Path,
    trace_out: &Path,
) -> Result<AlignmentMatrix> {
    run_stage("refine", &[out, trace_out], || {
        let src = load_embeddings(e1, None)?;
        let tgt = load_embeddings(e2, None)?;
        let refinement = refine_unsupervised(&src, &tgt, iterations, params)?;
        for s in &refinement.trace {
            info!("[refine] iteration {}: {} pairs, mean score {:.4}", s.iteration, s.dict_size, s.mean_score);
        }
        if refinement.stopped_early {
            warn!("[refine] stopped early; keeping the last solved map");
        }
        refinement.w.save(out)?;
        write_trace(&refinement.trace, trace_out)?;
        Ok(refinement.w)
    })
}

pub fn stage_apply(w: &Path, e1: &Path, e2: &Path, es: &Path, precision: usize, out: &Path) -> Result<()> {
    run_stage("apply", &[out], || {
        let w = AlignmentMatrix::load(w)?;
        let merged = apply_alignment(
            &w,
            &load_embeddings(e1, None)?,
            &load_embeddings(e2, None)?,
            &load_embeddings(es, None)?,
        )?;
        save_embeddings(&merged, out, precision)
    })
}

/// Source and target retrieval spaces of a merged embedding set: `L1' ∪
/// shared'` and `L2' ∪ shared'`, in the reallocation's (frequency) order.
pub fn language_views(set: &EmbeddingSet, realloc: &ReallocatedVocabulary) -> Result<(EmbeddingSet, EmbeddingSet)> {
    Ok((set.select(realloc.source_side())?, set.select(realloc.target_side())?))
}

pub fn stage_eval(
    embeddings: &Path,
    realloc: &Path,
    dict: &Path,
    params: &BliParams,
    out: &Path,
) -> Result<BliReport> {
    run_stage("eval-bli", &[out], || {
        let set = load_embeddings(embeddings, None)?;
        let realloc = ReallocatedVocabulary::load_report(realloc, f64::NAN)?;
        let (src, tgt) = language_views(&set, &realloc)?;
        let report = evaluate_bli(&src, &tgt, &SeedDictionary::load(dict)?, params)?;
        info!("[eval-bli] {}: {}", dict.display(), report.summary());
        write_report(&report, out)?;
        Ok(report)
    })
}

pub fn write_report(report: &BliReport, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// BLI reports of one evaluation dictionary.
#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub dict: PathBuf,
    /// Pre-refinement joint space with the original membership.
    pub baseline: BliReport,
    pub aligned: BliReport,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub artifacts: Artifacts,
    pub evaluations: Vec<EvalOutcome>,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let a = Artifacts::in_dir(&cfg.out_dir);
    let train = TrainConfig {
        seed: cfg.seed,
        lowercase: cfg.lowercase,
        ..cfg.train.clone()
    };

    stage_count(&cfg.corpus1, "1", cfg.lowercase, train.min_count, &a.stats1)?;
    stage_count(&cfg.corpus2, "2", cfg.lowercase, train.min_count, &a.stats2)?;
    stage_joint_vocab(&a.stats1, &a.stats2, cfg.max_vocab, &a.joint_vocab)?;
    stage_concat(&cfg.corpus1, &cfg.corpus2, cfg.shuffle, cfg.seed, &a.joint_corpus)?;
    stage_train(&a.joint_corpus, &a.joint_vocab, &train, cfg.precision, &a.joint_vec, &a.train_loss)?;
    stage_normalize(&a.joint_vec, cfg.normalize, cfg.precision, &a.normalized_vec)?;
    stage_realloc(
        &a.joint_vocab,
        &a.stats1,
        &a.stats2,
        cfg.reallocate.then_some(cfg.gamma),
        &a.realloc,
    )?;
    stage_split(&a.normalized_vec, &a.realloc, cfg.precision, &a.e1, &a.e2, &a.es)?;
    match &cfg.align {
        AlignMode::Supervised { dict } => {
            stage_align(dict, &a.realloc, &a.e1, &a.e2, &a.es, &a.w)?;
        }
        AlignMode::Unsupervised { iterations, csls_k } => {
            let params = InduceParams {
                metric: Metric::Csls { k: *csls_k },
                ..Default::default()
            };
            stage_refine(&a.e1, &a.e2, *iterations, &params, &a.w, &a.trace)?;
        }
        AlignMode::None => {
            let dim = load_embeddings(&a.e1, Some(1))?.dim();
            AlignmentMatrix::identity(dim).save(&a.w)?;
        }
    }
    stage_apply(&a.w, &a.e1, &a.e2, &a.es, cfg.precision, &a.aligned_vec)?;

    let mut evaluations = Vec::new();
    if !cfg.eval_dicts.is_empty() {
        // Baseline views use the joint membership before reallocation.
        let baseline_partition = cfg.out_dir.join("joint_partition.tsv");
        stage_realloc(&a.joint_vocab, &a.stats1, &a.stats2, None, &baseline_partition)?;
        for dict in &cfg.eval_dicts {
            let baseline = stage_eval(
                &a.normalized_vec,
                &baseline_partition,
                dict,
                &cfg.eval,
                &a.bli_report(dict, true),
            )?;
            let aligned = stage_eval(&a.aligned_vec, &a.realloc, dict, &cfg.eval, &a.bli_report(dict, false))?;
            evaluations.push(EvalOutcome {
                dict: dict.clone(),
                baseline,
                aligned,
            });
        }
    }
    Ok(PipelineOutcome {
        artifacts: a,
        evaluations,
    })
}
