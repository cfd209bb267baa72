use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use joint_align::align::{induce_dictionary, InduceParams};
use joint_align::bli::{evaluate_bli, BliParams, BliReport, OovPolicy, PairFilter};
use joint_align::corpus::replace_with_dictionary;
use joint_align::ctx::{
    apply_ctx_alignment, collect_aligned_pairs, learn_ctx_alignment, load_layer_matrices, parse_word_alignments,
    pool_wordpieces, read_features, save_layer_matrices, sum_layers, write_features, CtxSolver, LinkPolicy,
    PoolStrategy, DEFAULT_PAIR_CAP, SUMMED_LAYER,
};
use joint_align::dictionary::SeedDictionary;
use joint_align::embed_io::{load_embeddings, pca_project, write_pca_tsv, NormMode, DEFAULT_PRECISION};
use joint_align::pipeline::{self, AlignMode, PipelineConfig};
use joint_align::realloc::{ReallocatedVocabulary, GAMMA_GRID};
use joint_align::retrieval::{Metric, DEFAULT_CSLS_K};
use joint_align::sgns::{ThreadMode, TrainConfig};
use joint_align::synth::{generate_cipher, CipherConfig};

#[derive(Parser)]
#[command(name = "joint-align", version, about = "Joint training, vocabulary reallocation and alignment refinement for cross-lingual word embeddings")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Upper bound on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log level for standard error (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage from raw corpora to aligned embeddings and reports.
    Pipeline(PipelineArgs),
    /// Count tokens of one corpus.
    Count(CountArgs),
    /// Build the joint vocabulary of two count tables.
    JointVocab(JointVocabArgs),
    /// Concatenate two corpora.
    Concat(ConcatArgs),
    /// Train skip-gram embeddings over a joint vocabulary.
    Train(TrainArgs),
    /// Normalize an embedding file.
    Normalize(NormalizeArgs),
    /// Reallocate shared tokens by their count ratio.
    Realloc(ReallocArgs),
    /// Split embeddings into L1', L2' and shared' files.
    Split(SplitArgs),
    /// Learn W from a seed dictionary (supervised).
    Align(AlignArgs),
    /// Induce a dictionary by nearest-neighbour retrieval.
    Induce(InduceArgs),
    /// Learn W by unsupervised self-learning.
    Refine(RefineArgs),
    /// Map L1' by W and merge with L2' and shared'.
    Apply(ApplyArgs),
    /// Evaluate bilingual lexicon induction (P@1).
    EvalBli(EvalArgs),
    /// Export a PCA projection of one or more embedding files.
    Pca(PcaArgs),
    /// Mean-pool WordPiece features into word features.
    CtxPool(CtxPoolArgs),
    /// Validate word alignments against their sentences.
    CtxParse(CtxParseArgs),
    /// Learn per-layer alignment matrices for contextual features.
    CtxLearn(CtxLearnArgs),
    /// Apply per-layer alignment matrices to a feature file.
    CtxApply(CtxApplyArgs),
    /// Sum the features of several layers.
    CtxSum(CtxSumArgs),
    /// Randomly replace words by dictionary translations.
    Replace(ReplaceArgs),
    /// Generate a synthetic cipher corpus pair with planted translations.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First-language corpus, one sentence per line.
    #[arg(long)]
    corpus1: Option<PathBuf>,
    /// Second-language corpus, one sentence per line.
    #[arg(long)]
    corpus2: Option<PathBuf>,
    /// Directory for every artifact.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Root seed; each stage derives its own.
    #[arg(long)]
    seed: Option<u64>,
    /// Reallocation threshold in (0.5, 1).
    #[arg(long)]
    gamma: Option<f64>,
    /// Supervised alignment with this seed dictionary.
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Evaluation dictionary; repeatable.
    #[arg(long)]
    eval: Vec<PathBuf>,
    /// Any configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "corpus")]
    label: String,
    #[arg(long, default_value_t = 5)]
    min_count: u64,
    #[arg(long)]
    no_lowercase: bool,
}

#[derive(Args)]
struct JointVocabArgs {
    #[arg(long)]
    stats1: PathBuf,
    #[arg(long)]
    stats2: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_vocab: Option<usize>,
}

#[derive(Args)]
struct ConcatArgs {
    #[arg(long)]
    corpus1: PathBuf,
    #[arg(long)]
    corpus2: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_shuffle: bool,
    /// Root seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Joint vocabulary TSV.
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss TSV (default: next to the output).
    #[arg(long)]
    loss_out: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    subsample: f64,
    #[arg(long)]
    no_lowercase: bool,
    /// Lock-free parallel updates (not reproducible).
    #[arg(long)]
    parallel: bool,
    /// Root seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision: usize,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// unit, center_unit or none.
    #[arg(long, default_value = "unit")]
    mode: NormMode,
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision: usize,
}

#[derive(Args)]
struct ReallocArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    stats1: PathBuf,
    #[arg(long)]
    stats2: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// Comma-separated γ values; writes `<out stem>.<γ>.tsv` for each.
    #[arg(long, value_delimiter = ',')]
    gamma_sweep: Vec<f64>,
    /// Keep the joint membership unchanged.
    #[arg(long)]
    none: bool,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    realloc: PathBuf,
    /// Directory for e1.vec, e2.vec and es.vec.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision: usize,
}

#[derive(Args)]
struct SplitFiles {
    #[arg(long)]
    e1: PathBuf,
    #[arg(long)]
    e2: PathBuf,
    #[arg(long)]
    es: PathBuf,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    realloc: PathBuf,
    #[command(flatten)]
    split: SplitFiles,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricArgs {
    /// csls or cosine.
    #[arg(long, default_value = "csls")]
    metric: String,
    /// CSLS neighbourhood size.
    #[arg(long, default_value_t = DEFAULT_CSLS_K)]
    k: usize,
}

impl MetricArgs {
    fn metric(&self) -> Result<Metric> {
        Ok(Metric::parse(&self.metric, self.k)?)
    }
}

#[derive(Args)]
struct InduceArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    /// Keep every forward match, not only mutual ones.
    #[arg(long)]
    no_mutual: bool,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    max_rank: Option<usize>,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    e1: PathBuf,
    #[arg(long)]
    e2: PathBuf,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    #[arg(long, default_value_t = DEFAULT_CSLS_K)]
    k: usize,
    #[arg(long)]
    max_rank: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    w: PathBuf,
    #[command(flatten)]
    split: SplitFiles,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PRECISION)]
    precision: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Merged embeddings; needs `--realloc` to derive the two sides.
    #[arg(long, conflicts_with_all = ["src", "tgt"])]
    embeddings: Option<PathBuf>,
    #[arg(long, requires = "embeddings")]
    realloc: Option<PathBuf>,
    #[arg(long, requires = "tgt")]
    src: Option<PathBuf>,
    #[arg(long, requires = "src")]
    tgt: Option<PathBuf>,
    #[arg(long)]
    dict: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    /// paper or drop.
    #[arg(long, default_value = "paper")]
    policy: OovPolicy,
    /// none or same-surface.
    #[arg(long, default_value = "none")]
    filter: PairFilter,
    #[arg(long)]
    no_lowercase: bool,
    /// JSON report path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PcaArgs {
    /// `label=path`; repeatable.
    #[arg(long = "input", required = true)]
    inputs: Vec<String>,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CtxPoolArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AlignmentInputs {
    /// fast_align output (`i-j` per link).
    #[arg(long)]
    alignments: PathBuf,
    #[arg(long)]
    src_text: PathBuf,
    #[arg(long)]
    tgt_text: PathBuf,
}

#[derive(Args)]
struct CtxParseArgs {
    #[command(flatten)]
    inputs: AlignmentInputs,
    /// Cleaned alignment file with out-of-range links removed.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CtxLearnArgs {
    #[arg(long)]
    src_features: PathBuf,
    #[arg(long)]
    tgt_features: PathBuf,
    #[command(flatten)]
    inputs: AlignmentInputs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PAIR_CAP)]
    pair_cap: usize,
    /// procrustes or linear.
    #[arg(long, default_value = "procrustes")]
    solver: CtxSolver,
    /// all or first-only.
    #[arg(long, default_value = "all")]
    links: LinkPolicy,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct CtxApplyArgs {
    #[arg(long)]
    w: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CtxSumArgs {
    /// Feature file; repeatable.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = SUMMED_LAYER, allow_negative_numbers = true)]
    layer: i64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplaceArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    prob: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 3000)]
    vocab_size: usize,
    #[arg(long, default_value_t = 1_000_000)]
    tokens: usize,
    #[arg(long, default_value_t = 0.2)]
    shared_fraction: f64,
    #[arg(long, default_value_t = 0)]
    ambiguous: usize,
    #[arg(long, default_value_t = 500)]
    test_pairs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn pipeline_config(args: &PipelineArgs, threads: Option<usize>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    if let Some(n) = threads {
        cfg.apply_kv("threads", &n.to_string())?;
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{kv}`"))?;
        cfg.apply_kv(k.trim(), v.trim())?;
    }
    if let Some(p) = &args.corpus1 {
        cfg.corpus1 = p.clone();
    }
    if let Some(p) = &args.corpus2 {
        cfg.corpus2 = p.clone();
    }
    if let Some(p) = &args.out_dir {
        cfg.out_dir = p.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(d) = &args.dict {
        cfg.align = AlignMode::Supervised { dict: d.clone() };
    }
    if !args.eval.is_empty() {
        cfg.eval_dicts = args.eval.clone();
    }
    let mut missing = Vec::new();
    if cfg.corpus1.as_os_str().is_empty() {
        missing.push("--corpus1");
    }
    if cfg.corpus2.as_os_str().is_empty() {
        missing.push("--corpus2");
    }
    if let AlignMode::Supervised { dict } = &cfg.align {
        if dict.as_os_str().is_empty() {
            missing.push("--dict");
        }
    }
    if !missing.is_empty() {
        bail!("missing required settings: {}", missing.join(", "));
    }
    Ok(cfg)
}

fn print_report(report: &BliReport) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    Ok(())
}

fn sweep_path(out: &Path, gamma: f64) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "tsv".into());
    out.with_file_name(format!("{stem}.{gamma}.{ext}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pipeline(args) => {
            let cfg = pipeline_config(&args, cli.threads)?;
            let outcome = pipeline::run_pipeline(&cfg)?;
            for e in &outcome.evaluations {
                println!(
                    "{}\tjoint {}\taligned {}",
                    e.dict.display(),
                    e.baseline.summary(),
                    e.aligned.summary()
                );
            }
            info!("artifacts in {}", cfg.out_dir.display());
        }
        Command::Count(a) => {
            pipeline::stage_count(&a.corpus, &a.label, !a.no_lowercase, a.min_count, &a.out)?;
        }
        Command::JointVocab(a) => {
            pipeline::stage_joint_vocab(&a.stats1, &a.stats2, a.max_vocab, &a.out)?;
        }
        Command::Concat(a) => pipeline::stage_concat(&a.corpus1, &a.corpus2, !a.no_shuffle, a.seed, &a.out)?,
        Command::Train(a) => {
            let config = TrainConfig {
                dim: a.dim,
                window: a.window,
                negatives: a.negatives,
                epochs: a.epochs,
                learning_rate: a.lr,
                subsample: a.subsample,
                seed: a.seed,
                lowercase: !a.no_lowercase,
                threads: if a.parallel {
                    ThreadMode::ParallelLockfree {
                        threads: cli.threads.unwrap_or_else(rayon::current_num_threads),
                    }
                } else {
                    ThreadMode::DeterministicSingle
                },
                ..TrainConfig::default()
            };
            let loss_out = a.loss_out.clone().unwrap_or_else(|| a.out.with_extension("loss.tsv"));
            pipeline::stage_train(&a.corpus, &a.vocab, &config, a.precision, &a.out, &loss_out)?;
        }
        Command::Normalize(a) => pipeline::stage_normalize(&a.input, a.mode, a.precision, &a.out)?,
        Command::Realloc(a) => {
            if a.none {
                pipeline::stage_realloc(&a.vocab, &a.stats1, &a.stats2, None, &a.out)?;
            } else if a.gamma_sweep.is_empty() {
                pipeline::stage_realloc(&a.vocab, &a.stats1, &a.stats2, Some(a.gamma), &a.out)?;
            } else {
                for &g in &a.gamma_sweep {
                    if !GAMMA_GRID.contains(&g) {
                        log::warn!("gamma {g} is outside the grid {GAMMA_GRID:?}");
                    }
                    pipeline::stage_realloc(&a.vocab, &a.stats1, &a.stats2, Some(g), &sweep_path(&a.out, g))?;
                }
            }
        }
        Command::Split(a) => {
            std::fs::create_dir_all(&a.out_dir).with_context(|| a.out_dir.display().to_string())?;
            pipeline::stage_split(
                &a.embeddings,
                &a.realloc,
                a.precision,
                &a.out_dir.join("e1.vec"),
                &a.out_dir.join("e2.vec"),
                &a.out_dir.join("es.vec"),
            )?;
        }
        Command::Align(a) => {
            let w = pipeline::stage_align(&a.dict, &a.realloc, &a.split.e1, &a.split.e2, &a.split.es, &a.out)?;
            info!("[align] orthogonality error {:.3e}", w.orthogonality_error());
        }
        Command::Induce(a) => {
            let params = InduceParams {
                metric: a.metric.metric()?,
                mutual: !a.no_mutual,
                top_n: a.top_n,
                max_rank: a.max_rank,
            };
            let induced = induce_dictionary(&load_embeddings(&a.src, None)?, &load_embeddings(&a.tgt, None)?, &params)?;
            info!("[induce] {} pairs, mean score {:.4}", induced.dict.len(), induced.mean_score());
            induced.dict.save(&a.out)?;
        }
        Command::Refine(a) => {
            let params = InduceParams {
                metric: Metric::Csls { k: a.k },
                max_rank: a.max_rank,
                ..Default::default()
            };
            pipeline::stage_refine(&a.e1, &a.e2, a.iterations, &params, &a.out, &a.trace)?;
        }
        Command::Apply(a) => {
            pipeline::stage_apply(&a.w, &a.split.e1, &a.split.e2, &a.split.es, a.precision, &a.out)?;
        }
        Command::EvalBli(a) => {
            let params = BliParams {
                metric: a.metric.metric()?,
                oov_policy: a.policy,
                filter: a.filter,
                lowercase: !a.no_lowercase,
            };
            let report = match (&a.embeddings, &a.realloc, &a.src, &a.tgt) {
                (Some(e), Some(r), _, _) => {
                    let set = load_embeddings(e, None)?;
                    let realloc = ReallocatedVocabulary::load_report(r, f64::NAN)?;
                    let (src, tgt) = pipeline::language_views(&set, &realloc)?;
                    evaluate_bli(&src, &tgt, &SeedDictionary::load(&a.dict)?, &params)?
                }
                (_, _, Some(s), Some(t)) => evaluate_bli(
                    &load_embeddings(s, None)?,
                    &load_embeddings(t, None)?,
                    &SeedDictionary::load(&a.dict)?,
                    &params,
                )?,
                _ => bail!("give --embeddings with --realloc, or --src with --tgt"),
            };
            info!("[eval-bli] {}", report.summary());
            match &a.out {
                Some(p) => pipeline::write_report(&report, p)?,
                None => print_report(&report)?,
            }
        }
        Command::Pca(a) => {
            let mut sets = Vec::new();
            for spec in &a.inputs {
                let (label, path) = spec
                    .split_once('=')
                    .with_context(|| format!("expected label=path, got `{spec}`"))?;
                sets.push((label.to_string(), load_embeddings(path, None)?));
            }
            let refs: Vec<_> = sets.iter().map(|(l, s)| (s, l.as_str())).collect();
            let rows = pca_project(&refs, a.dims)?;
            let file = std::fs::File::create(&a.out).with_context(|| a.out.display().to_string())?;
            write_pca_tsv(&rows, std::io::BufWriter::new(file))?;
        }
        Command::CtxPool(a) => {
            let pooled = pool_wordpieces(&read_features(&a.input)?, PoolStrategy::Mean)?;
            write_features(&pooled, &a.out)?;
            info!("[ctx-pool] {} word records", pooled.len());
        }
        Command::CtxParse(a) => {
            let set = parse_word_alignments(&a.inputs.alignments, &a.inputs.src_text, &a.inputs.tgt_text)?;
            let mut text = String::new();
            for links in &set.links {
                let items: Vec<String> = links.iter().map(|(i, j)| format!("{i}-{j}")).collect();
                text.push_str(&items.join(" "));
                text.push('\n');
            }
            std::fs::write(&a.out, text).with_context(|| a.out.display().to_string())?;
            info!("[ctx-parse] {} links kept, {} dropped", set.num_links(), set.dropped);
        }
        Command::CtxLearn(a) => {
            let set = parse_word_alignments(&a.inputs.alignments, &a.inputs.src_text, &a.inputs.tgt_text)?;
            let pairs = collect_aligned_pairs(
                &read_features(&a.src_features)?,
                &read_features(&a.tgt_features)?,
                &set,
                a.links,
            );
            for (layer, p) in &pairs {
                info!("[ctx-learn] layer {layer}: {} pairs", p.len());
            }
            let ws = learn_ctx_alignment(&pairs, a.pair_cap, a.solver, a.seed)?;
            save_layer_matrices(&ws, &a.out)?;
        }
        Command::CtxApply(a) => {
            let n = apply_ctx_alignment(&load_layer_matrices(&a.w)?, &a.input, &a.out)?;
            info!("[ctx-apply] {n} records mapped");
        }
        Command::CtxSum(a) => {
            let inputs = a.inputs.iter().map(read_features).collect::<joint_align::Result<Vec<_>>>()?;
            write_features(&sum_layers(&inputs, a.layer)?, &a.out)?;
        }
        Command::Replace(a) => {
            let stats = replace_with_dictionary(&a.corpus, &SeedDictionary::load(&a.dict)?, a.prob, a.seed, &a.out)?;
            info!("[replace] {} of {} eligible tokens replaced", stats.replaced, stats.eligible);
        }
        Command::Synth(a) => {
            std::fs::create_dir_all(&a.out_dir).with_context(|| a.out_dir.display().to_string())?;
            let cfg = CipherConfig {
                vocab_size: a.vocab_size,
                tokens: a.tokens,
                shared_fraction: a.shared_fraction,
                ambiguous_anchors: a.ambiguous,
                test_pairs: a.test_pairs,
                seed: a.seed,
                ..CipherConfig::default()
            };
            let c = generate_cipher(&cfg, &a.out_dir)?;
            c.full_dictionary.save(a.out_dir.join("dict.full.txt"))?;
            c.test_dictionary.save(a.out_dir.join("dict.test.txt"))?;
            if !c.ambiguous_dictionary.is_empty() {
                c.ambiguous_dictionary.save(a.out_dir.join("dict.ambiguous.txt"))?;
            }
            info!("[synth] {} shared types", c.shared.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
