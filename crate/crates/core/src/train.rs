//! Training loop, evaluation, oversampling, repeated runs and ablations.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::autodiff::Tape;
use crate::classifier::{self, AblationFlags, THRESHOLD};
use crate::data::embedding::{embedding_table, PretrainedVectors};
use crate::data::prepare::{Limits, PreparedSession};
use crate::data::session::{fingerprint, Session};
use crate::data::split::SplitIndices;
use crate::data::vocab::{UserIndex, Vocabulary};
use crate::encoder::Dropout;
use crate::error::{TensorError, TrainError};
use crate::graph::TimeTransform;
use crate::metrics::{summarize, Confusion, Metrics, Summary};
use crate::model::{Model, ModelConfig};
use crate::optim::{clip_global_norm, Adam, AdamConfig};
use crate::params::ModelDims;
use crate::rng::{self, Stream};
use crate::smote::{smote, synthetic_count, SmoteConfig, SyntheticPoint};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub limits: Limits,
    pub embed_dim: usize,
    pub h_sent: usize,
    pub h_sess: usize,
    pub ablation: AblationFlags,
    pub time_transform: TimeTransform,
    /// Epochs without validation improvement before stopping; `None` runs
    /// every epoch.
    pub patience: Option<usize>,
    pub oversample: bool,
    pub smote_k: usize,
    /// Epochs of head retraining on real plus synthetic session vectors.
    pub head_epochs: usize,
    /// Global gradient norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub shared_history_encoder: bool,
    pub train_embeddings: bool,
    /// Also record eval-mode training accuracy after every epoch.
    pub track_train_accuracy: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 8,
            dropout_rate: 0.2,
            limits: Limits::default(),
            embed_dim: 400,
            h_sent: 32,
            h_sess: 64,
            ablation: AblationFlags::FULL,
            time_transform: TimeTransform::Normalized,
            patience: Some(10),
            oversample: false,
            smote_k: 5,
            head_epochs: 50,
            grad_clip: Some(5.0),
            shared_history_encoder: false,
            train_embeddings: true,
            track_train_accuracy: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.into()));
        if self.batch_size == 0 || self.embed_dim == 0 || self.h_sent == 0 || self.h_sess == 0 {
            return fail("batch_size, embed_dim, h_sent and h_sess must be positive");
        }
        if self.limits.max_session_len == 0 || self.limits.max_comment_len == 0 {
            return fail("max_session_len and max_comment_len must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must be in [0, 1)");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return fail("grad_clip must be positive");
        }
        if self.oversample && self.smote_k == 0 {
            return fail("smote_k must be at least 1");
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            dims: ModelDims { vocab_size, embed_dim: self.embed_dim, h_sent: self.h_sent, h_sess: self.h_sess },
            limits: self.limits,
            ablation: self.ablation,
            time_transform: self.time_transform,
            shared_history_encoder: self.shared_history_encoder,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.learning_rate, ..AdamConfig::default() }
    }
}

/// One line of the epoch log.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val: Metrics,
    pub train_accuracy: Option<f64>,
    /// Optimizer steps whose gradient was clipped.
    pub clipped_steps: usize,
    /// Whether this epoch produced the kept checkpoint.
    pub best: bool,
}

/// Model outputs over a set of sessions.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
    pub metrics: Metrics,
    pub loss: f64,
}

impl Evaluation {
    pub fn from_scores(probabilities: Vec<f64>, labels: Vec<u8>) -> Self {
        let metrics = Metrics::compute(&probabilities, &labels, THRESHOLD);
        let loss = if labels.is_empty() {
            0.0
        } else {
            probabilities.iter().zip(&labels).map(|(&p, &y)| classifier::loss_value(p, f64::from(y))).sum::<f64>()
                / labels.len() as f64
        };
        Self { probabilities, labels, metrics, loss }
    }

    pub fn accuracy(&self) -> f64 {
        Confusion::from_scores(&self.probabilities, &self.labels, THRESHOLD).accuracy()
    }
}

/// Sequential evaluation.
pub fn evaluate(model: &Model, sessions: &[PreparedSession]) -> Result<Evaluation, TensorError> {
    let probabilities = sessions.iter().map(|s| model.probability(s)).collect::<Result<Vec<_>, _>>()?;
    Ok(Evaluation::from_scores(probabilities, sessions.iter().map(|s| s.label).collect()))
}

/// What oversampling did.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SmoteReport {
    pub minority_label: u8,
    /// `[negatives, positives]` in the training split before oversampling.
    pub counts_before: [usize; 2],
    pub counts_after: [usize; 2],
    pub synthetic: Vec<SyntheticPoint>,
    /// The minority session vectors the synthetics interpolate.
    pub minority_vectors: Vec<Vec<f64>>,
}

/// FNV-1a hashes of the raw sessions of each split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitFingerprints {
    pub train: u64,
    pub val: u64,
    pub test: u64,
}

impl SplitFingerprints {
    pub fn of(corpus: &[Session], split: &SplitIndices) -> Self {
        Self {
            train: fingerprint(&SplitIndices::select(corpus, &split.train)),
            val: fingerprint(&SplitIndices::select(corpus, &split.val)),
            test: fingerprint(&SplitIndices::select(corpus, &split.test)),
        }
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub split: SplitIndices,
    /// Epoch of the kept checkpoint; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub val: Evaluation,
    pub test: Evaluation,
    pub smote: Option<SmoteReport>,
    /// Split hashes taken before training.
    pub fingerprints_before: SplitFingerprints,
    /// Hashes of the sessions the final evaluations actually used.
    pub fingerprints_after: SplitFingerprints,
}

/// Number of user slots needed so every author in the corpus gets a token.
pub fn user_slots(corpus: &[Session]) -> usize {
    corpus.iter().map(|s| UserIndex::for_session(s).len()).max().unwrap_or(0)
}

/// Trains on the 80% split of `corpus`, selects the checkpoint by
/// validation AUC (then validation loss), and evaluates on validation and
/// test.
pub fn train(
    corpus: &[Session],
    config: &TrainConfig,
    pretrained: Option<&PretrainedVectors>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    for s in corpus {
        s.validate()?;
    }
    let split = SplitIndices::new(corpus.len(), config.seed)?;
    let fingerprints_before = SplitFingerprints::of(corpus, &split);
    let train_raw = SplitIndices::select(corpus, &split.train);
    let val_raw = SplitIndices::select(corpus, &split.val);
    let test_raw = SplitIndices::select(corpus, &split.test);

    let vocab = Vocabulary::build(&train_raw, user_slots(corpus));
    let mcfg = config.model_config(vocab.len());
    let table = embedding_table(&vocab, config.embed_dim, pretrained, config.seed)?;
    let mut model = Model::new(mcfg, vocab, table, config.seed)?;

    let prep = |v: &[Session], m: &Model| v.iter().map(|s| m.prepare(s)).collect::<Vec<_>>();
    let train_set = prep(&train_raw, &model);
    let val_set = prep(&val_raw, &model);
    let test_set = prep(&test_raw, &model);

    let (log, best_epoch) = fit(&mut model, &train_set, &val_set, config)?;

    let smote = if config.oversample { Some(oversample_head(&mut model, &train_set, config)?) } else { None };

    let val = evaluate(&model, &val_set)?;
    let test = evaluate(&model, &test_set)?;
    let fingerprints_after =
        SplitFingerprints { train: fingerprint(&train_raw), val: fingerprint(&val_raw), test: fingerprint(&test_raw) };
    Ok(TrainOutcome { model, log, split, best_epoch, val, test, smote, fingerprints_before, fingerprints_after })
}

/// Higher is better: validation AUC when defined, ties (and single-class
/// validation sets) broken by lower loss.
fn selection_score(eval: &Evaluation) -> (bool, f64, f64) {
    match eval.metrics.auc {
        Some(a) => (true, a, -eval.loss),
        None => (false, 0.0, -eval.loss),
    }
}

/// Non-finite values inside the forward pass mean the parameters blew up.
fn diverged(epoch: usize) -> impl Fn(TensorError) -> TrainError {
    move |e| match e {
        TensorError::NonFinite => TrainError::Diverged { epoch },
        other => other.into(),
    }
}

/// Mini-batch Adam over `train_set` with early stopping on `val_set`.
/// Leaves the best checkpoint in `model`.
pub fn fit(
    model: &mut Model,
    train_set: &[PreparedSession],
    val_set: &[PreparedSession],
    config: &TrainConfig,
) -> Result<(Vec<EpochRecord>, Option<usize>), TrainError> {
    let embedding = model.layout.embedding;
    let train_embeddings = config.train_embeddings;
    let trainable = move |id: usize| train_embeddings || id != embedding;
    let mut adam = Adam::new(config.adam(), model.store.tensors());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = rng::stream(config.seed, Stream::Shuffle);
    let mut drop_rng = rng::stream(config.seed, Stream::Dropout);

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<((bool, f64, f64), usize, Vec<Tensor>)> = None;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total_loss = 0.0;
        let mut clipped_steps = 0;
        for batch in order.chunks(config.batch_size) {
            let mut sum: Option<Vec<Tensor>> = None;
            for &i in batch {
                let mut drop = Some(Dropout { rate: config.dropout_rate, rng: &mut drop_rng });
                let lg = model.loss_and_grads(&train_set[i], trainable, &mut drop).map_err(diverged(epoch))?;
                if !lg.loss.is_finite() {
                    return Err(TrainError::Diverged { epoch });
                }
                total_loss += lg.loss;
                match &mut sum {
                    None => sum = Some(lg.grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&lg.grads) {
                            a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            let Some(mut grads) = sum else { continue };
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|x| *x *= inv));
            if let Some(max) = config.grad_clip {
                let norm = clip_global_norm(&mut grads, max);
                if !norm.is_finite() {
                    return Err(TrainError::Diverged { epoch });
                }
                if norm > max {
                    clipped_steps += 1;
                }
            }
            adam.step(model.store.tensors_mut(), &grads, |id| !trainable(id));
        }
        let train_loss = if train_set.is_empty() { 0.0 } else { total_loss / train_set.len() as f64 };

        let val_eval = evaluate(model, val_set).map_err(diverged(epoch))?;
        if !val_eval.loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let train_accuracy =
            if config.track_train_accuracy { Some(evaluate(model, train_set)?.accuracy()) } else { None };
        let score = selection_score(&val_eval);
        let improved = best.as_ref().is_none_or(|(b, _, _)| score > *b);
        if improved {
            best = Some((score, epoch, model.store.tensors().to_vec()));
            stale = 0;
        } else {
            stale += 1;
        }
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: val_eval.loss,
            val: val_eval.metrics,
            train_accuracy,
            clipped_steps,
            best: improved,
        });
        if config.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }

    let best_epoch = best.map(|(_, epoch, tensors)| {
        model.store.tensors_mut().clone_from_slice(&tensors);
        epoch
    });
    Ok((log, best_epoch))
}

/// Frozen session vector `s` of every session, evaluation mode.
pub fn session_vectors(model: &Model, sessions: &[PreparedSession]) -> Result<Vec<Vec<f64>>, TensorError> {
    sessions.iter().map(|s| model.predict_prepared(s).map(|p| p.session_vector)).collect()
}

/// SMOTE on frozen session vectors of the training split, then retrains the
/// dense output layer on real plus synthetic vectors.
pub fn oversample_head(
    model: &mut Model,
    train_set: &[PreparedSession],
    config: &TrainConfig,
) -> Result<SmoteReport, TrainError> {
    let vectors = session_vectors(model, train_set)?;
    let labels: Vec<u8> = train_set.iter().map(|s| s.label).collect();
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let counts_before = [labels.len() - positives, positives];
    let minority_label = u8::from(counts_before[1] <= counts_before[0]);
    let minority_vectors: Vec<Vec<f64>> =
        vectors.iter().zip(&labels).filter(|(_, &y)| y == minority_label).map(|(v, _)| v.clone()).collect();
    let minority = counts_before[minority_label as usize];
    let majority = counts_before[1 - minority_label as usize];
    let smote_cfg = SmoteConfig { k_neighbors: config.smote_k, target_ratio: 1.0, seed: config.seed };
    let count = synthetic_count(minority, majority, smote_cfg.target_ratio);
    let synthetic = smote(&minority_vectors, count, &smote_cfg)?;

    let mut xs = vectors;
    let mut ys = labels;
    for p in &synthetic {
        xs.push(p.vector.clone());
        ys.push(minority_label);
    }
    let mut counts_after = counts_before;
    counts_after[minority_label as usize] += synthetic.len();
    retrain_head(model, &xs, &ys, config)?;
    Ok(SmoteReport { minority_label, counts_before, counts_after, synthetic, minority_vectors })
}

/// Mini-batch Adam on the dense layer alone, `σ(w·s + b)` against `ys`.
pub fn retrain_head(model: &mut Model, xs: &[Vec<f64>], ys: &[u8], config: &TrainConfig) -> Result<(), TrainError> {
    let w_id = model.layout.head.w_out;
    let b_id = model.layout.head.bias;
    let mut params = vec![model.store.get(w_id).clone(), model.store.get(b_id).clone()];
    let mut adam = Adam::new(config.adam(), &params);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut shuffle_rng = rng::stream(config.seed.wrapping_add(1), Stream::Smote);
    let inputs: Vec<Tensor> = xs.iter().map(|x| Tensor::vector(x.clone())).collect();
    for epoch in 1..=config.head_epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let mut grads = vec![Tensor::zeros(params[0].shape()), Tensor::zeros(&[])];
            for &i in batch {
                let mut tape = Tape::new();
                let w = tape.param(&params[0], true);
                let b = tape.param(&params[1], true);
                let s = tape.param(&inputs[i], false);
                let z = tape.dot(w, s)?;
                let z = tape.add_scalar(z, b)?;
                let p = tape.sigmoid(z);
                let loss = tape.bce(p, f64::from(ys[i]))?;
                if !tape.value(loss).item().is_finite() {
                    return Err(TrainError::Diverged { epoch });
                }
                let g = tape.backward(loss)?;
                for (acc, v) in grads.iter_mut().zip([w, b]) {
                    let gv = g.wrt_or_zeros(&tape, v);
                    acc.data_mut().iter_mut().zip(gv.data()).for_each(|(x, y)| *x += y / batch.len() as f64);
                }
            }
            if let Some(max) = config.grad_clip {
                clip_global_norm(&mut grads, max);
            }
            adam.step(&mut params, &grads, |_| false);
        }
    }
    let [w, b]: [Tensor; 2] = params.try_into().map_err(|_| TrainError::Config("head params".into()))?;
    *model.store.get_mut(w_id) = w;
    *model.store.get_mut(b_id) = b;
    Ok(())
}

/// Metrics of one seed.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub val: Metrics,
    pub test: Metrics,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RepeatedRuns {
    pub runs: Vec<RunResult>,
    pub test_summary: Summary,
    pub val_summary: Summary,
}

/// Trains with seeds `base_seed + 0 .. n_seeds` and aggregates mean and
/// population std.
pub fn repeat_runs(
    corpus: &[Session],
    config: &TrainConfig,
    n_seeds: usize,
    pretrained: Option<&PretrainedVectors>,
) -> Result<RepeatedRuns, TrainError> {
    repeat_runs_with(corpus, config, n_seeds, pretrained, |_| {})
}

/// [`repeat_runs`] with a callback receiving each finished run.
pub fn repeat_runs_with(
    corpus: &[Session],
    config: &TrainConfig,
    n_seeds: usize,
    pretrained: Option<&PretrainedVectors>,
    mut on_run: impl FnMut(&TrainOutcome),
) -> Result<RepeatedRuns, TrainError> {
    if n_seeds == 0 {
        return Err(TrainError::Config("n_seeds must be at least 1".into()));
    }
    let mut runs = Vec::with_capacity(n_seeds);
    for i in 0..n_seeds {
        let cfg = TrainConfig { seed: config.seed.wrapping_add(i as u64), ..config.clone() };
        let out = train(corpus, &cfg, pretrained)?;
        on_run(&out);
        runs.push(RunResult {
            run: i,
            seed: cfg.seed,
            val: out.val.metrics,
            test: out.test.metrics,
            best_epoch: out.best_epoch,
            epochs_run: out.log.len(),
        });
    }
    let test: Vec<Metrics> = runs.iter().map(|r| r.test).collect();
    let val: Vec<Metrics> = runs.iter().map(|r| r.val).collect();
    Ok(RepeatedRuns { test_summary: summarize(&test), val_summary: summarize(&val), runs })
}

/// The leave-one-out variants: full model, each single aspect removed, and
/// the hierarchical attention reference with everything removed.
pub fn ablation_variants() -> Vec<(String, AblationFlags)> {
    let one = |name: &str| {
        let mut f = AblationFlags::FULL;
        f.set(name);
        (name.into(), f)
    };
    vec![
        ("full".into(), AblationFlags::FULL),
        one("no_topic"),
        one("no_time"),
        one("no_history"),
        ("han".into(), AblationFlags::HAN),
    ]
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AblationRow {
    pub name: String,
    pub flags: AblationFlags,
    pub results: RepeatedRuns,
}

/// Trains every variant of [`ablation_variants`] over the same seeds.
pub fn run_ablation(
    corpus: &[Session],
    base: &TrainConfig,
    n_seeds: usize,
    pretrained: Option<&PretrainedVectors>,
) -> Result<Vec<AblationRow>, TrainError> {
    ablation_variants()
        .into_iter()
        .map(|(name, flags)| {
            let cfg = TrainConfig { ablation: flags, ..base.clone() };
            let results = repeat_runs(corpus, &cfg, n_seeds, pretrained)?;
            Ok(AblationRow { name, flags, results })
        })
        .collect()
}
