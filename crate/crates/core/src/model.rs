//! A model instance: configuration, vocabulary and parameter values.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::classifier::{self, AblationFlags, ForwardNodes, ForwardOptions, Prediction};
use crate::data::prepare::{Limits, PreparedSession};
use crate::data::session::Session;
use crate::data::vocab::{Vocabulary, PAD};
use crate::encoder::Dropout;
use crate::error::{DataError, TensorError};
use crate::graph::TimeTransform;
use crate::params::{self, Init, ModelDims, ModelParams, ParamId, ParamStore};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Everything needed to rebuild the parameter layout and run inference.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub dims: ModelDims,
    pub limits: Limits,
    pub ablation: AblationFlags,
    pub time_transform: TimeTransform,
    /// Histories use the comment encoder's weights instead of their own.
    pub shared_history_encoder: bool,
}

impl ModelConfig {
    pub fn forward_options(&self) -> ForwardOptions {
        ForwardOptions { flags: self.ablation, time_transform: self.time_transform, unit_edge_weights: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub layout: ModelParams<ParamId>,
}

/// Loss and per-parameter gradients of one session.
pub struct LossGrad {
    pub loss: f64,
    pub probability: f64,
    /// Indexed by [`ParamId`]; zeros where nothing flowed.
    pub grads: Vec<Tensor>,
}

impl Model {
    /// Fresh model. Weights are uniform in `±1/sqrt(fan_in)`, biases and
    /// `w_t` start at zero, and `embedding` is the `|V| x embed_dim` table.
    pub fn new(config: ModelConfig, vocab: Vocabulary, embedding: Tensor, seed: u64) -> Result<Self, DataError> {
        let expected = [config.dims.vocab_size, config.dims.embed_dim];
        if vocab.len() != config.dims.vocab_size || embedding.shape() != expected {
            return Err(DataError::Format(format!(
                "embedding table {:?} / vocabulary {} do not match dims {:?}",
                embedding.shape(),
                vocab.len(),
                expected
            )));
        }
        let mut rng = rng::stream(seed, Stream::Init);
        let mut store = ParamStore::new();
        let mut embedding = Some(embedding);
        let layout = params::layout(&config.dims, config.shared_history_encoder, &mut |name, shape, init| {
            let tensor = match init {
                Init::Embedding => embedding.take().expect("single embedding table"),
                Init::Zeros => Tensor::zeros(&shape),
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / libm::sqrt(fan_in as f64);
                    let n = shape.iter().product();
                    let data = (0..n).map(|_| rng::uniform(&mut rng, -bound, bound)).collect();
                    Tensor::new(shape, data).expect("length matches shape")
                }
            };
            store.push(name, tensor)
        });
        Ok(Self { config, vocab, store, layout })
    }

    /// Rebuilds a model from saved `(name, tensor)` pairs, which must match
    /// the layout implied by `config` in order, name and shape.
    pub fn from_parts(config: ModelConfig, vocab: Vocabulary, saved: Vec<(String, Tensor)>) -> Result<Self, DataError> {
        if vocab.len() != config.dims.vocab_size {
            return Err(DataError::Format(format!(
                "vocabulary has {} tokens, config says {}",
                vocab.len(),
                config.dims.vocab_size
            )));
        }
        let mut expected: Vec<(String, Vec<usize>)> = Vec::new();
        let layout = params::layout(&config.dims, config.shared_history_encoder, &mut |name, shape, _| {
            expected.push((name, shape));
            expected.len() - 1
        });
        if expected.len() != saved.len() {
            return Err(DataError::Format(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                saved.len()
            )));
        }
        let mut store = ParamStore::new();
        for ((name, shape), (saved_name, tensor)) in expected.into_iter().zip(saved) {
            if name != saved_name || tensor.shape() != shape.as_slice() {
                return Err(DataError::Format(format!(
                    "parameter {saved_name} {:?} does not match expected {name} {shape:?}",
                    tensor.shape()
                )));
            }
            if !tensor.is_finite() {
                return Err(DataError::Format(format!("parameter {name} has non-finite values")));
            }
            store.push(name, tensor);
        }
        Ok(Self { config, vocab, store, layout })
    }

    pub fn prepare(&self, session: &Session) -> PreparedSession {
        PreparedSession::new(session, &self.vocab, &self.config.limits)
    }

    /// Places every parameter on `tape` and returns one handle per
    /// [`ParamId`] plus the typed layout over those handles.
    pub fn bind<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        trainable: impl Fn(ParamId) -> bool,
    ) -> (Vec<Var>, ModelParams<Var>) {
        let vars: Vec<Var> =
            self.store.tensors().iter().enumerate().map(|(id, t)| tape.param(t, trainable(id))).collect();
        let bound = self.layout.map(&mut |&id| vars[id]);
        (vars, bound)
    }

    fn run<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        bound: &ModelParams<Var>,
        session: &PreparedSession,
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<ForwardNodes, TensorError> {
        classifier::forward_nodes(tape, bound, session, &self.config.forward_options(), drop)
    }

    /// Evaluation-mode forward pass.
    pub fn predict_prepared(&self, session: &PreparedSession) -> Result<Prediction, TensorError> {
        let mut tape = Tape::new();
        let (_, bound) = self.bind(&mut tape, |_| false);
        let nodes = self.run(&mut tape, &bound, session, &mut None)?;
        Ok(Prediction::from_nodes(&tape, &nodes, session))
    }

    /// Validates and predicts one raw session.
    pub fn predict(&self, session: &Session) -> Result<Prediction, DataError> {
        session.validate()?;
        self.predict_prepared(&self.prepare(session))
            .map_err(|e| DataError::Invalid { session_id: session.session_id.clone(), reason: format!("{e}") })
    }

    /// Probability only, evaluation mode.
    pub fn probability(&self, session: &PreparedSession) -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let (_, bound) = self.bind(&mut tape, |_| false);
        let nodes = self.run(&mut tape, &bound, session, &mut None)?;
        Ok(tape.value(nodes.probability).item())
    }

    /// BCE loss of one session and its gradient for every parameter. The
    /// PAD embedding row never receives gradient.
    pub fn loss_and_grads(
        &self,
        session: &PreparedSession,
        trainable: impl Fn(ParamId) -> bool,
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<LossGrad, TensorError> {
        let mut tape = Tape::new();
        let (vars, bound) = self.bind(&mut tape, trainable);
        let nodes = self.run(&mut tape, &bound, session, drop)?;
        let loss = classifier::loss(&mut tape, nodes.probability, session.label)?;
        let grads = tape.backward(loss)?;
        let mut out: Vec<Tensor> = vars.iter().map(|&v| grads.wrt_or_zeros(&tape, v)).collect();
        let emb = &mut out[self.layout.embedding];
        let dim = self.config.dims.embed_dim;
        let pad = PAD as usize;
        emb.data_mut()[pad * dim..(pad + 1) * dim].fill(0.0);
        Ok(LossGrad { loss: tape.value(loss).item(), probability: tape.value(nodes.probability).item(), grads: out })
    }
}
