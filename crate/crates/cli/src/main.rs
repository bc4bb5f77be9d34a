//! `maxent-cluster`: train, evaluate, benchmark and inspect topic-conditioned
//! maximum entropy bigram models.

mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use maxent_cluster::bench::{bench_pass, compare_engines};
use maxent_cluster::synth::{self, generate_instance, InstanceShape, SynthConfig};
use maxent_cluster::{
    exec, extract_counts, parse_corpus, perplexity, prepare, residual_report, save_model, train_with,
    Algorithm, Corpus, EngineKind, Exec, Feature, FeatureConfig, HistoryTable, LoadOptions, Mixture, Params,
    TrainConfig, TrainedModel,
};

use manifest::{sidecar, Manifest};

const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "maxent-cluster", version, about = "Topic-conditioned maximum entropy bigram models")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Single-threaded unless --threads says otherwise; diagnostics carry
    /// no wall-clock times, so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Worker threads (0 = one per core). Defaults to 1 with --deterministic.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    /// Read corpora without lowercasing tokens.
    #[arg(long, global = true)]
    keep_case: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build features from a corpus, fit them, write the model.
    Train(TrainArgs),
    /// Per-token perplexity of a model on a corpus.
    Eval(EvalArgs),
    /// Time one Z + coefficients pass of each engine.
    Bench(BenchArgs),
    /// Summarize a model file.
    Inspect(InspectArgs),
    /// Write a seeded synthetic topic-labeled corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct FeatureArgs {
    /// Words seen fewer times map to <unk>.
    #[arg(long, default_value_t = 2)]
    vocab_min_count: u64,
    #[arg(long, default_value_t = 3)]
    bigram_min_count: u64,
    /// Topic words kept per topic, ranked by mutual information.
    #[arg(long, default_value_t = 8)]
    topic_words_k: usize,
    #[arg(long, default_value_t = 5)]
    topic_words_min_count: u64,
    /// Add the slack feature (always on for GIS).
    #[arg(long)]
    slack: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "iis", value_parser = parse_from_str::<Algorithm>)]
    algorithm: Algorithm,
    #[arg(long, default_value = "cluster", value_parser = parse_from_str::<EngineKind>)]
    engine: EngineKind,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Write the untrained (λ = 0, uniform) model and stop.
    #[arg(long)]
    init_only: bool,
    #[command(flatten)]
    features: FeatureArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "true-topic", value_parser = parse_from_str::<Mixture>)]
    mixture: Mixture,
    /// Also print the N largest constraint residuals on this corpus.
    #[arg(long, value_name = "N")]
    residuals: Option<usize>,
    #[arg(long, default_value = "direct", value_parser = parse_from_str::<EngineKind>)]
    engine: EngineKind,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Benchmark a trained model's features and λ instead of a generated
    /// instance; histories come from --corpus.
    #[arg(long, requires = "corpus")]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    vocab: usize,
    #[arg(long, default_value_t = 50)]
    topics: usize,
    #[arg(long, default_value_t = 200)]
    topic_words: usize,
    /// Predecessors carrying bigram constraints.
    #[arg(long, default_value_t = 500)]
    predecessors: usize,
    /// Bigram successors per predecessor.
    #[arg(long, default_value_t = 200)]
    successors: usize,
    #[arg(long, default_value_t = 4)]
    topics_per_prev: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    slack: bool,
    /// Time only this engine; no equivalence check, no speedup.
    #[arg(long, value_parser = parse_from_str::<EngineKind>)]
    engine_only: Option<EngineKind>,
    /// Keep the fastest of this many passes.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Also list the N features with the largest |λ|.
    #[arg(long, value_name = "N", default_value_t = 10)]
    top: usize,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 250)]
    utterances: usize,
    #[arg(long, default_value_t = 48)]
    words: usize,
    #[arg(long, default_value_t = 3)]
    topics: usize,
}

fn parse_from_str<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

struct Run {
    deterministic: bool,
    threads: usize,
    seed: u64,
    exec: Exec,
    load: LoadOptions,
}

impl Run {
    fn new(cli: &Cli) -> Self {
        let threads = cli.threads.unwrap_or(if cli.deterministic { 1 } else { 0 });
        let exec = if threads == 1 { Exec::SEQUENTIAL } else { Exec::parallel() };
        Run { deterministic: cli.deterministic, threads, seed: cli.seed, exec, load: LoadOptions { lowercase: !cli.keep_case } }
    }

    fn manifest(&self, command: &str) -> Manifest {
        let mut m = Manifest::new(command);
        m.set("deterministic", self.deterministic);
        m.set("threads", self.threads);
        m.set("parallel", self.exec.is_parallel());
        m.set("seed", self.seed);
        m.set("lowercase", self.load.lowercase);
        m
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = Run::new(&cli);
    let threads = if run.threads == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { run.threads };
    let result = exec::with_threads(threads, || match &cli.command {
        Command::Train(a) => cmd_train(&run, a),
        Command::Eval(a) => cmd_eval(&run, a),
        Command::Bench(a) => cmd_bench(&run, a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Synth(a) => cmd_synth(&run, a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_corpus(path: &Path, opts: LoadOptions) -> Result<(Corpus, Vec<u8>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading corpus {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("corpus {} is not UTF-8", path.display()))?;
    let corpus = parse_corpus(text, opts).with_context(|| format!("corpus {}", path.display()))?;
    Ok((corpus, bytes))
}

fn read_model(path: &Path) -> Result<(TrainedModel, Vec<u8>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading model {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).with_context(|| format!("model {} is not UTF-8", path.display()))?;
    let model = TrainedModel::from_text(text).with_context(|| format!("model {}", path.display()))?;
    Ok((model, bytes))
}

fn cmd_train(run: &Run, a: &TrainArgs) -> Result<ExitCode> {
    let (corpus, bytes) = read_corpus(&a.corpus, run.load)?;
    let fa = &a.features;
    let cfg = FeatureConfig {
        vocab_min_count: fa.vocab_min_count,
        bigram_min_count: fa.bigram_min_count,
        topic_words_k: fa.topic_words_k,
        topic_words_min_count: fa.topic_words_min_count,
        slack: fa.slack || a.algorithm == Algorithm::Gis,
    };
    let problem = prepare(&corpus, &cfg).context("building features")?;
    let tc = TrainConfig { algorithm: a.algorithm, engine: a.engine, max_iters: a.max_iters, tol: a.tol, exec: run.exec, ..TrainConfig::default() };

    let mut m = run.manifest("train");
    m.input("corpus", &a.corpus, &bytes);
    m.set("model", a.model.display());
    m.set("algorithm", a.algorithm);
    m.set("engine", a.engine);
    m.set("tol", a.tol);
    m.set("max_iters", a.max_iters);
    m.set("init_only", a.init_only);
    m.set("vocab_min_count", cfg.vocab_min_count);
    m.set("bigram_min_count", cfg.bigram_min_count);
    m.set("topic_words_k", cfg.topic_words_k);
    m.set("topic_words_min_count", cfg.topic_words_min_count);
    m.set("slack", cfg.slack);
    m.set("vocab_size", problem.vocab.len());
    m.set("topics", problem.features.num_topics());
    m.set("features", problem.features.len());
    m.set("events", problem.counts.total());

    let priors = TrainedModel::topic_priors_from(&problem.counts);
    let mut diag = String::new();
    let (params, converged, summary) = if a.init_only {
        (Params::zeros(problem.features.len()), true, "init_only=true".to_owned())
    } else {
        let deterministic = run.deterministic;
        let result = train_with(&tc, &problem.features, &problem.targets, &problem.hist, |s| {
            let mut s = s.clone();
            if deterministic {
                s.secs = 0.0;
            }
            let _ = writeln!(diag, "{s}");
        })
        .context("training")?;
        let last = result.diagnostics.last().expect("at least one evaluation");
        let summary = format!(
            "converged={} steps={} ll={} max_resid={}",
            result.converged, result.steps, last.log_likelihood, last.max_resid
        );
        (result.params, result.converged, summary)
    };
    m.set("converged", converged);

    let model = TrainedModel::new(problem.features, params, problem.vocab, priors)?;
    save_model(&model, &a.model).with_context(|| format!("writing model {}", a.model.display()))?;
    let diag_path = sidecar(&a.model, "diag");
    std::fs::write(&diag_path, diag).with_context(|| format!("writing diagnostics {}", diag_path.display()))?;
    m.write(&sidecar(&a.model, "manifest"))?;

    println!("{summary}");
    if converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("warning: no convergence within {} iterations; model saved", a.max_iters);
        Ok(ExitCode::from(EXIT_NOT_CONVERGED))
    }
}

fn cmd_eval(run: &Run, a: &EvalArgs) -> Result<ExitCode> {
    let (model, _) = read_model(&a.model)?;
    let (corpus, _) = read_corpus(&a.corpus, run.load)?;
    let report = perplexity(&model, &corpus, a.mixture, run.exec)
        .with_context(|| format!("evaluating {} on {}", a.model.display(), a.corpus.display()))?;
    println!("mixture={}", a.mixture);
    println!("{report}");
    if let Some(n) = a.residuals {
        let counts = extract_counts(&corpus, &model.vocab);
        let residuals = residual_report(&model, &counts, a.engine).context("residual report")?;
        for r in residuals.iter().take(n) {
            println!("{r}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(run: &Run, a: &BenchArgs) -> Result<ExitCode> {
    let (features, params, hist) = match (&a.model, &a.corpus) {
        (Some(model_path), Some(corpus_path)) => {
            let (model, _) = read_model(model_path)?;
            let (corpus, _) = read_corpus(corpus_path, run.load)?;
            let hist = HistoryTable::from_counts(&extract_counts(&corpus, &model.vocab));
            (model.features, model.params, hist)
        }
        _ => {
            let shape = InstanceShape {
                vocab: a.vocab,
                topics: a.topics,
                topic_words: a.topic_words,
                predecessors: a.predecessors,
                successors: a.successors,
                topics_per_prev: a.topics_per_prev,
                lambda: a.lambda,
                slack: a.slack,
            };
            let inst = generate_instance(&shape, run.seed).context("generating instance")?;
            (inst.features, inst.params, inst.hist)
        }
    };
    println!("vocab={} topics={} features={} histories={}", features.vocab_size(), features.num_topics(), features.len(), hist.len());
    if let Some(kind) = a.engine_only {
        let pass = bench_pass(&params, &features, &hist, kind, run.exec, a.repeats)?;
        for line in pass.lines() {
            println!("{line}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let cmp = compare_engines(&params, &features, &hist, run.exec, run.exec, a.repeats)?;
    for line in cmp.direct.lines().iter().chain(cmp.cluster.lines().iter()) {
        println!("{line}");
    }
    println!("max_rel_z={:e} max_rel_coef={:e}", cmp.z_rel, cmp.coef_rel);
    println!("speedup={}", cmp.speedup());
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(a: &InspectArgs) -> Result<ExitCode> {
    let (model, bytes) = read_model(&a.model)?;
    let fs = &model.features;
    let lambda = model.params.lambda();
    println!("model={} sha256={}", a.model.display(), manifest::sha256_hex(&bytes));
    println!("vocab={} topics={} features={}", fs.vocab_size(), fs.num_topics(), fs.len());
    println!(
        "unigrams={} bigrams={} topic_unigrams={} slack={}",
        fs.num_unigrams(),
        fs.num_bigrams(),
        fs.num_topic_features(),
        fs.slack().is_some()
    );
    let (lo, hi) = lambda.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    if !lambda.is_empty() {
        println!("lambda_min={lo} lambda_max={hi}");
    }
    let priors: Vec<String> = model.topic_priors.iter().map(|p| format!("{p:.6}")).collect();
    println!("topic_priors={}", priors.join(","));

    let mut order: Vec<usize> = (0..lambda.len()).collect();
    order.sort_by(|&x, &y| lambda[y].abs().total_cmp(&lambda[x].abs()).then(x.cmp(&y)));
    let word = |j| model.vocab.word(j).unwrap_or("?");
    for &id in order.iter().take(a.top) {
        let name = match fs.feature(id) {
            Feature::Unigram(j) => format!("unigram {}", word(j)),
            Feature::Bigram(i, j) => format!("bigram {} {}", word(i), word(j)),
            Feature::TopicUnigram(t, j) => format!("topic {t} {}", word(j)),
            Feature::Slack => "slack".to_owned(),
        };
        println!("lambda={} feature={name}", lambda[id]);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(run: &Run, a: &SynthArgs) -> Result<ExitCode> {
    let cfg = SynthConfig { seed: run.seed, utterances: a.utterances, words: a.words, topics: a.topics, ..SynthConfig::default() };
    let text = synth::corpus_text(&cfg)?;
    std::fs::write(&a.out, &text).with_context(|| format!("writing corpus {}", a.out.display()))?;
    let mut m = run.manifest("synth");
    m.set("out", a.out.display());
    m.set("utterances", a.utterances);
    m.set("words", a.words);
    m.set("topics", a.topics);
    m.set("out_sha256", manifest::sha256_hex(text.as_bytes()));
    m.write(&sidecar(&a.out, "manifest"))?;
    Ok(ExitCode::SUCCESS)
}
