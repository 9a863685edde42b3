//! Command-line surface: corpus generation, training, evaluation,
//! prediction, ablation and explanation export.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, Parser, Subcommand};
use tgbully_core::data::embedding::PretrainedVectors;
use tgbully_core::data::generate::{generate_corpus, CorpusSpec};
use tgbully_core::data::session::Session;
use tgbully_core::train::{self, run_ablation, RunResult};
use tgbully_core::{AblationFlags, TimeTransform, TrainConfig};

use crate::{checkpoint, explain, io, parallel, report, Error};

fn defaults() -> TrainConfig {
    TrainConfig::default()
}

#[derive(Debug, Parser)]
#[command(name = "tgbully", version, about = "Session-level cyberbullying detection with temporal graph attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic session corpus (JSONL).
    GenData(GenDataArgs),
    /// Train one model and write a checkpoint, epoch log and metrics CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a session file.
    Eval(EvalArgs),
    /// Write one bullying probability per session.
    Predict(PredictArgs),
    /// Train every ablation variant over several seeds.
    Ablate(AblateArgs),
    /// Export attention and graph weights for one session.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Corpus spec as JSON; missing fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Training hyperparameters. A flag given on the command line overrides the
/// same field of `--config`.
#[derive(Debug, Args)]
pub struct Hyper {
    /// Training config as JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Word vectors in text format (`word v1 v2 ...` per line).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = defaults().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = defaults().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = defaults().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = defaults().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = defaults().dropout_rate)]
    pub dropout_rate: f64,
    #[arg(long, default_value_t = defaults().limits.max_session_len)]
    pub max_session_len: usize,
    #[arg(long, default_value_t = defaults().limits.max_comment_len)]
    pub max_comment_len: usize,
    #[arg(long, default_value_t = defaults().limits.max_history_len)]
    pub max_history_len: usize,
    #[arg(long, default_value_t = defaults().embed_dim)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = defaults().h_sent)]
    pub h_sent: usize,
    #[arg(long, default_value_t = defaults().h_sess)]
    pub h_sess: usize,
    #[arg(long, default_value = time_name(defaults().time_transform), value_parser = ["normalized", "raw"])]
    pub time_transform: String,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    #[arg(long, default_value_t = defaults().patience.unwrap_or(0))]
    pub patience: usize,
    /// Oversample bullying sessions with SMOTE and retrain the head.
    #[arg(long)]
    pub oversample: bool,
    #[arg(long, default_value_t = defaults().smote_k)]
    pub smote_k: usize,
    #[arg(long, default_value_t = defaults().head_epochs)]
    pub head_epochs: usize,
    /// Global gradient norm cap; 0 disables clipping.
    #[arg(long, default_value_t = defaults().grad_clip.unwrap_or(0.0))]
    pub grad_clip: f64,
    #[arg(long)]
    pub shared_history_encoder: bool,
    /// Keep the embedding table fixed.
    #[arg(long)]
    pub freeze_embeddings: bool,
    #[arg(long)]
    pub track_train_accuracy: bool,
}

fn time_name(t: TimeTransform) -> &'static str {
    match t {
        TimeTransform::Normalized => "normalized",
        TimeTransform::Raw => "raw",
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Aspects to remove: no_topic, no_time, no_history, no_graph, or han
    /// for all four.
    #[arg(long, value_delimiter = ',', value_parser = ["no_topic", "no_time", "no_history", "no_graph", "han"])]
    pub ablate: Vec<String>,
    /// Epoch log path [default: <out>.log].
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Metrics CSV path [default: <out>.metrics.csv].
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also write the metrics as CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Evaluation threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluation threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// Ablation CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub session: String,
    /// Bundle directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Applies `--config` and then every hyperparameter flag the user typed.
pub fn resolve_config(h: &Hyper, m: &ArgMatches) -> Result<TrainConfig, Error> {
    let mut cfg = match &h.config {
        Some(p) => serde_json::from_str(&io::read(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => TrainConfig::default(),
    };
    let given = |id: &str| m.value_source(id) == Some(ValueSource::CommandLine);
    macro_rules! take {
        ($($id:ident => $field:expr),* $(,)?) => {$(
            if given(stringify!($id)) {
                $field = h.$id.clone();
            }
        )*};
    }
    take! {
        seed => cfg.seed,
        epochs => cfg.epochs,
        learning_rate => cfg.learning_rate,
        batch_size => cfg.batch_size,
        dropout_rate => cfg.dropout_rate,
        max_session_len => cfg.limits.max_session_len,
        max_comment_len => cfg.limits.max_comment_len,
        max_history_len => cfg.limits.max_history_len,
        embed_dim => cfg.embed_dim,
        h_sent => cfg.h_sent,
        h_sess => cfg.h_sess,
        oversample => cfg.oversample,
        smote_k => cfg.smote_k,
        head_epochs => cfg.head_epochs,
        shared_history_encoder => cfg.shared_history_encoder,
        track_train_accuracy => cfg.track_train_accuracy,
    }
    if given("time_transform") {
        cfg.time_transform = if h.time_transform == "raw" { TimeTransform::Raw } else { TimeTransform::Normalized };
    }
    if given("patience") {
        cfg.patience = (h.patience > 0).then_some(h.patience);
    }
    if given("grad_clip") {
        cfg.grad_clip = (h.grad_clip > 0.0).then_some(h.grad_clip);
    }
    if given("freeze_embeddings") {
        cfg.train_embeddings = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pretrained(h: &Hyper) -> Result<Option<PretrainedVectors>, Error> {
    h.embeddings.as_deref().map(io::load_embeddings).transpose()
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn out_err(e: std::io::Error) -> Error {
    Error::Io { path: PathBuf::from("<stdout>"), source: e }
}

fn threads(n: usize) -> usize {
    if n == 0 {
        parallel::default_threads()
    } else {
        n
    }
}

fn gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<(), Error> {
    let mut spec: CorpusSpec = match &a.spec {
        Some(p) => serde_json::from_str(&io::read(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => CorpusSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let sessions = generate_corpus(&spec).map_err(|e| Error::Config(e.to_string()))?;
    io::save_sessions(&a.out, &sessions)?;
    let bully = sessions.iter().filter(|s| s.is_bully()).count();
    writeln!(out, "sessions {} bully {} benign {}", sessions.len(), bully, sessions.len() - bully).map_err(out_err)
}

fn train_cmd(a: &TrainArgs, m: &ArgMatches, out: &mut dyn Write) -> Result<(), Error> {
    let mut cfg = resolve_config(&a.hyper, m)?;
    for name in &a.ablate {
        if name == "han" {
            cfg.ablation = AblationFlags::HAN;
        } else {
            cfg.ablation.set(name);
        }
    }
    let sessions = io::load_sessions(&a.data)?;
    let vectors = pretrained(&a.hyper)?;
    let outcome = train::train(&sessions, &cfg, vectors.as_ref())?;

    let log = report::epoch_log(&cfg, &outcome.log);
    let run = RunResult {
        run: 0,
        seed: cfg.seed,
        val: outcome.val.metrics,
        test: outcome.test.metrics,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.log.len(),
    };
    checkpoint::save(&a.out, &outcome.model, Some(&cfg))?;
    io::write(&a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log")), log.as_bytes())?;
    let csv = report::metrics_csv(std::slice::from_ref(&run), None);
    io::write(&a.metrics.clone().unwrap_or_else(|| with_suffix(&a.out, ".metrics.csv")), csv.as_bytes())?;

    let mut text = log;
    if let Some(s) = &outcome.smote {
        text.push_str(&format!(
            "smote: train counts {:?} -> {:?}, {} synthetic\n",
            s.counts_before,
            s.counts_after,
            s.synthetic.len()
        ));
    }
    text.push_str(&report::metrics_line("val", &outcome.val.metrics));
    text.push('\n');
    text.push_str(&report::metrics_line("test", &outcome.test.metrics));
    text.push('\n');
    out.write_all(text.as_bytes()).map_err(out_err)
}

fn load_for_eval(checkpoint: &Path, data: &Path) -> Result<(tgbully_core::Model, Vec<Session>), Error> {
    Ok((checkpoint::load(checkpoint)?, io::load_sessions(data)?))
}

fn eval_cmd(a: &EvalArgs, out: &mut dyn Write) -> Result<(), Error> {
    let (model, sessions) = load_for_eval(&a.checkpoint, &a.data)?;
    let prepared: Vec<_> = sessions.iter().map(|s| model.prepare(s)).collect();
    let e = parallel::evaluate(&model, &prepared, threads(a.threads))?;
    if let Some(p) = &a.metrics {
        io::write(p, report::split_metrics_csv(&[("eval", &e.metrics)]).as_bytes())?;
    }
    writeln!(out, "{} loss {:.6}", report::metrics_line("eval", &e.metrics), e.loss).map_err(out_err)
}

fn predict_cmd(a: &PredictArgs, out: &mut dyn Write) -> Result<(), Error> {
    let (model, sessions) = load_for_eval(&a.checkpoint, &a.data)?;
    let prepared: Vec<_> = sessions.iter().map(|s| model.prepare(s)).collect();
    let probs = parallel::probabilities(&model, &prepared, threads(a.threads))?;
    let mut text = String::new();
    for p in probs {
        text.push_str(&p.to_string());
        text.push('\n');
    }
    match &a.out {
        Some(p) => io::write(p, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(out_err),
    }
}

fn ablate_cmd(a: &AblateArgs, m: &ArgMatches, out: &mut dyn Write) -> Result<(), Error> {
    let cfg = resolve_config(&a.hyper, m)?;
    let sessions = io::load_sessions(&a.data)?;
    let vectors = pretrained(&a.hyper)?;
    let rows = run_ablation(&sessions, &cfg, a.seeds, vectors.as_ref())?;
    if let Some(p) = &a.out {
        io::write(p, report::ablation_csv(&rows).as_bytes())?;
    }
    out.write_all(report::ablation_table(&rows).as_bytes()).map_err(out_err)
}

fn explain_cmd(a: &ExplainArgs, out: &mut dyn Write) -> Result<(), Error> {
    let (model, sessions) = load_for_eval(&a.checkpoint, &a.data)?;
    let session = sessions
        .iter()
        .find(|s| s.session_id == a.session)
        .ok_or_else(|| Error::Usage(format!("session {:?} not found in {}", a.session, a.data.display())))?;
    let e = explain::explain(&model, session).map_err(|err| Error::data(&a.data, err))?;
    explain::write_bundle(&a.out, &e)?;
    let top: Vec<String> = e.top(3).iter().map(usize::to_string).collect();
    writeln!(
        out,
        "session {} probability {} label {} top comments {}",
        e.session_id,
        e.probability,
        e.label,
        top.join(",")
    )
    .map_err(out_err)
}

/// Runs a parsed command line. `matches` must come from the same parse as
/// `cli`; it tells which flags were typed.
pub fn execute(cli: &Cli, matches: &ArgMatches, out: &mut dyn Write) -> Result<(), Error> {
    let sub = matches.subcommand().map(|(_, m)| m).unwrap_or(matches);
    match &cli.command {
        Command::GenData(a) => gen_data(a, out),
        Command::Train(a) => train_cmd(a, sub, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::Predict(a) => predict_cmd(a, out),
        Command::Ablate(a) => ablate_cmd(a, sub, out),
        Command::Explain(a) => explain_cmd(a, out),
    }
}
