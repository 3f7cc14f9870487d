//! Command-line entry point: corpus generation, embedding pretraining,
//! training, evaluation, and report emission driven by a JSON run config
//! with flag overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use mtlcoder::corpus::{
    build_vocab, generate_synthetic, load_corpus, save_corpus, Corpus, CorpusError, GeneratorSpec,
    LabelSpace,
};
use mtlcoder::evalreport::{
    baseline_always_present, emit_report, f1_per_label, EvalReport, ReportFormat,
};
use mtlcoder::model::{ModelConfig, Regime};
use mtlcoder::sgns::{pretrain_embeddings, SgnsConfig};
use mtlcoder::trainer::{
    load_checkpoint, multitask_checkpoint, predict_posteriors_multitask,
    predict_posteriors_single, reference_and_predicted, save_checkpoint, single_checkpoint,
    train_multitask, train_single_task, Checkpoint, TaskSide, TrainError,
};

#[derive(Parser)]
#[command(name = "mtlcoder", version, about = "Multi-label multi-task behavioral code prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus from a generator spec.
    Generate {
        /// Generator spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// Output corpus path; the label space is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain word embeddings on a corpus with skip-gram negative sampling.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train one model per seed and write checkpoints plus metrics logs.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a checkpoint on a corpus and write a report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
    },
    /// Re-emit a JSON report in another format.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "table")]
        format: String,
    },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    regime: Option<String>,
    /// on | off
    #[arg(long = "sample-weights")]
    sample_weights: Option<String>,
    /// Context radius C.
    #[arg(long)]
    context: Option<usize>,
    /// Number of random initializations.
    #[arg(long)]
    seeds: Option<usize>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

/// Run configuration file: paths plus model hyperparameter overrides.
#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    corpus: Option<PathBuf>,
    corpus_b: Option<PathBuf>,
    label_space: Option<PathBuf>,
    label_space_b: Option<PathBuf>,
    embedding: Option<PathBuf>,
    init_a: Option<PathBuf>,
    init_b: Option<PathBuf>,
    out: Option<PathBuf>,
    model: ModelConfig,
    sgns: SgnsConfig,
}

enum CliError {
    Usage(String),
    Numeric(String),
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Numeric(e.to_string()),
            TrainError::Tensor(mtlcoder::tensor::TensorError::NonFinite(_)) => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<mtlcoder::trainer::CheckpointError> for CliError {
    fn from(e: mtlcoder::trainer::CheckpointError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MTLCODER_LOG", "error")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { spec, out } => cmd_generate(&spec, &out),
        Command::Pretrain { config, overrides } => cmd_pretrain(&config, &overrides),
        Command::Train { config, overrides } => cmd_train(&config, &overrides),
        Command::Eval {
            checkpoint,
            corpus,
            report,
            format,
        } => cmd_eval(&checkpoint, &corpus, &report, &format),
        Command::Report { report, format } => cmd_report(&report, &format),
    }
}

fn load_run_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut config: RunConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(regime) = &overrides.regime {
        config.model.regime = regime
            .parse::<Regime>()
            .map_err(CliError::Usage)?;
    }
    if let Some(sw) = &overrides.sample_weights {
        config.model.sample_weighting = match sw.as_str() {
            "on" => true,
            "off" => false,
            other => return Err(CliError::Usage(format!("--sample-weights {other}: expected on|off"))),
        };
    }
    if let Some(c) = overrides.context {
        config.model.context_radius = c;
    }
    if let Some(n) = overrides.seeds {
        config.model.n_seeds = n;
    }
    if let Some(s) = overrides.seed {
        config.model.seed = s;
    }
    if let Some(lr) = overrides.lr {
        config.model.learning_rate = lr;
    }
    if let Some(p) = overrides.patience {
        config.model.patience = p;
    }
    if let Some(out) = &overrides.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn space_path_for(corpus_path: &Path) -> PathBuf {
    let mut p = corpus_path.as_os_str().to_owned();
    p.push(".space.json");
    PathBuf::from(p)
}

fn cmd_generate(spec_path: &Path, out: &Path) -> Result<(), CliError> {
    let spec = GeneratorSpec::from_file(spec_path)?;
    let corpus = generate_synthetic(&spec)?;
    save_corpus(&corpus, out)?;
    let space_path = space_path_for(out);
    fs::write(
        &space_path,
        serde_json::to_vec_pretty(&corpus.space).expect("label space serialization"),
    )?;
    println!("sessions: {}", corpus.sessions.len());
    println!("turns: {}", corpus.num_turns());
    println!("words: {}", corpus.num_words());
    let n_turns = corpus.num_turns().max(1);
    for (l, code) in corpus.space.codes.iter().enumerate() {
        let positives: usize = corpus
            .sessions
            .iter()
            .flat_map(|s| &s.turns)
            .filter(|t| t.labels.as_ref().is_some_and(|y| y.bits[l] == 1))
            .count();
        println!(
            "label {code}: {positives} positives ({:.4})",
            positives as f64 / n_turns as f64
        );
    }
    Ok(())
}

fn load_corpus_from(
    corpus_field: &Option<PathBuf>,
    space_field: &Option<PathBuf>,
) -> Result<Corpus, CliError> {
    let corpus_path = corpus_field
        .as_ref()
        .ok_or_else(|| CliError::Usage("no corpus path in config".to_string()))?;
    let space_path = match space_field {
        Some(p) => p.clone(),
        None => space_path_for(corpus_path),
    };
    let space = LabelSpace::from_file(&space_path)?;
    Ok(load_corpus(corpus_path, &space)?)
}

fn out_dir(config: &RunConfig) -> Result<PathBuf, CliError> {
    let out = config
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory configured".to_string()))?;
    fs::create_dir_all(&out)?;
    Ok(out)
}

fn cmd_pretrain(config_path: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let config = load_run_config(config_path, overrides)?;
    let corpus = load_corpus_from(&config.corpus, &config.label_space)?;
    let vocab = build_vocab(&corpus, 1);
    let mut sgns = config.sgns.clone();
    sgns.seed = config.model.seed;
    let table = pretrain_embeddings(&corpus, &vocab, &sgns)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let out = out_dir(&config)?;
    let checkpoint = Checkpoint::from_embedding(&table, &config.model, config.model.seed);
    save_checkpoint(&checkpoint, &out.join("embeddings.ckpt"))?;
    println!("pretrained {} x {} embeddings", table.vocab_size(), table.dim);
    Ok(())
}

fn config_fingerprint(config: &ModelConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serialization");
    let digest = Sha256::digest(&json);
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

fn write_metrics_log(path: &Path, logs: &[mtlcoder::trainer::EpochLog]) -> Result<(), CliError> {
    let mut out = String::new();
    for log in logs {
        out.push_str(&serde_json::to_string(log).expect("log serialization"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn cmd_train(config_path: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let config = load_run_config(config_path, overrides)?;
    let out = out_dir(&config)?;
    let corpus = load_corpus_from(&config.corpus, &config.label_space)?;
    let embedding = match &config.embedding {
        Some(path) => Some(load_checkpoint(path)?.into_embedding()?),
        None => None,
    };
    let mut per_seed_macro = Vec::new();
    match config.model.regime {
        Regime::Mlmt => {
            let corpus_b = load_corpus_from(&config.corpus_b, &config.label_space_b)?;
            let (init_a, init_b) = match (&config.init_a, &config.init_b) {
                (Some(a), Some(b)) => (
                    load_checkpoint(a)?.into_single()?,
                    load_checkpoint(b)?.into_single()?,
                ),
                _ => {
                    return Err(CliError::Usage(
                        "ML-MT training requires init_a and init_b single-task checkpoints"
                            .to_string(),
                    ))
                }
            };
            for i in 0..config.model.n_seeds {
                let mut model_config = config.model.clone();
                model_config.seed = config.model.seed + i as u64;
                let outcome =
                    train_multitask(&corpus, &corpus_b, &model_config, &init_a, &init_b)?;
                let checkpoint = multitask_checkpoint(&outcome.model, outcome.meta.clone());
                save_checkpoint(&checkpoint, &out.join(format!("seed{}.ckpt", model_config.seed)))?;
                write_metrics_log(
                    &out.join(format!("seed{}.metrics.jsonl", model_config.seed)),
                    &outcome.epoch_logs,
                )?;
            }
        }
        _ => {
            for i in 0..config.model.n_seeds {
                let mut model_config = config.model.clone();
                model_config.seed = config.model.seed + i as u64;
                let outcome = train_single_task(&corpus, &model_config, embedding.as_ref())?;
                let macro_f1 = {
                    let (_, val) = mtlcoder::corpus::split_train_val(
                        &corpus,
                        model_config.validation_fraction,
                        model_config.seed,
                    )?;
                    mtlcoder::trainer::evaluate_macro_f1(&outcome.model, &val)?
                };
                per_seed_macro.push(macro_f1);
                let checkpoint = single_checkpoint(&outcome.model, outcome.meta.clone());
                save_checkpoint(&checkpoint, &out.join(format!("seed{}.ckpt", model_config.seed)))?;
                write_metrics_log(
                    &out.join(format!("seed{}.metrics.jsonl", model_config.seed)),
                    &outcome.epoch_logs,
                )?;
            }
        }
    }
    if !per_seed_macro.is_empty() {
        let mean = per_seed_macro.iter().sum::<f64>() / per_seed_macro.len() as f64;
        for (i, f1) in per_seed_macro.iter().enumerate() {
            println!("seed {}: validation macro-f1 {f1:.4}", config.model.seed + i as u64);
        }
        println!("mean validation macro-f1 over {} seeds: {mean:.4}", per_seed_macro.len());
    }
    println!("checkpoints written to {}", out.display());
    Ok(())
}

fn cmd_eval(
    checkpoint_path: &Path,
    corpus_path: &Path,
    report_path: &Path,
    format: &str,
) -> Result<(), CliError> {
    let format: ReportFormat = format.parse().map_err(CliError::Usage)?;
    let checkpoint = load_checkpoint(checkpoint_path)?;
    let config = checkpoint.config.clone();
    let (task, space, posteriors, corpus) = if checkpoint.spaces.len() == 2 {
        let model = checkpoint.into_multitask()?;
        // Pick the task whose label space matches the corpus file's space.
        let probe_space = LabelSpace::from_file(&space_path_for(corpus_path))?;
        let side = if probe_space.task == model.space_a.task {
            TaskSide::A
        } else if probe_space.task == model.space_b.task {
            TaskSide::B
        } else {
            return Err(CliError::Usage(format!(
                "corpus task '{}' matches neither checkpoint task ('{}', '{}')",
                probe_space.task, model.space_a.task, model.space_b.task
            )));
        };
        let space = match side {
            TaskSide::A => model.space_a.clone(),
            TaskSide::B => model.space_b.clone(),
        };
        let corpus = load_corpus(corpus_path, &space)?;
        let posteriors = predict_posteriors_multitask(&model, side, &corpus)?;
        (space.task.clone(), space, posteriors, corpus)
    } else {
        let model = checkpoint.into_single()?;
        let space = model.space.clone();
        let corpus = load_corpus(corpus_path, &space)?;
        let posteriors = predict_posteriors_single(&model, &corpus)?;
        (space.task.clone(), space, posteriors, corpus)
    };
    let (refs, preds) = reference_and_predicted(&corpus, &posteriors, config.decision_threshold)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let metrics = f1_per_label(&refs, &preds).map_err(|e| CliError::Usage(e.to_string()))?;
    let baseline = baseline_always_present(&refs).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = EvalReport {
        task,
        labels: space.codes.clone(),
        metrics,
        baseline,
        per_seed_macro_f1: Vec::new(),
        config_fingerprint: config_fingerprint(&config),
    };
    fs::write(report_path, emit_report(&report, format))?;
    println!("macro-f1: {:.6}", report.metrics.macro_f1);
    Ok(())
}

fn cmd_report(report_path: &Path, format: &str) -> Result<(), CliError> {
    let format: ReportFormat = format.parse().map_err(CliError::Usage)?;
    let bytes = fs::read(report_path)?;
    let report: EvalReport = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("{}: {e}", report_path.display())))?;
    let out = emit_report(&report, format);
    std::io::Write::write_all(&mut std::io::stdout(), &out)?;
    Ok(())
}
