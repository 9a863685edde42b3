//! Session classification: gated history/graph merge, user-level attention,
//! dense output, and the composition of the whole forward pass.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::data::prepare::PreparedSession;
use crate::data::session::interval_matrix;
use crate::data::vocab::{TokenId, PAD};
use crate::encoder::{attend, encode_comments, encode_histories, Dropout};
use crate::error::TensorError;
use crate::graph::{aggregate, AggregateOptions, EdgeTerms, TimeTransform};
use crate::params::{GateParams, HeadParams, ModelParams};
use crate::tensor::Tensor;

pub const THRESHOLD: f64 = 0.5;

/// Leave-one-out switches.
///
/// * `no_topic`: edge weight is `tanh(time term)`.
/// * `no_time`: edge weight is `tanh(topic term)`.
/// * `no_history`: the gate is bypassed, `u = g`.
/// * `no_graph`: the graph layer is skipped and `r^c` feeds the merge step.
///
/// All four together give the plain hierarchical attention network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct AblationFlags {
    pub no_topic: bool,
    pub no_time: bool,
    pub no_history: bool,
    pub no_graph: bool,
}

impl AblationFlags {
    pub const FULL: Self = Self { no_topic: false, no_time: false, no_history: false, no_graph: false };

    pub const HAN: Self = Self { no_topic: true, no_time: true, no_history: true, no_graph: true };

    pub fn is_han(&self) -> bool {
        *self == Self::HAN
    }

    /// Names of the set flags, e.g. `["no_time"]`.
    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (on, name) in [
            (self.no_topic, "no_topic"),
            (self.no_time, "no_time"),
            (self.no_history, "no_history"),
            (self.no_graph, "no_graph"),
        ] {
            if on {
                out.push(name);
            }
        }
        out
    }

    /// Sets the flag called `name`; returns false for an unknown name.
    pub fn set(&mut self, name: &str) -> bool {
        match name {
            "no_topic" => self.no_topic = true,
            "no_time" => self.no_time = true,
            "no_history" => self.no_history = true,
            "no_graph" => self.no_graph = true,
            _ => return false,
        }
        true
    }
}

/// Forward-pass switches that are not learnable.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ForwardOptions {
    pub flags: AblationFlags,
    pub time_transform: TimeTransform,
    /// Test hook forwarded to the graph layer.
    pub unit_edge_weights: bool,
}

/// `u = β ⊙ r^h + (1 - β) ⊙ g` with `β = σ(W_h r^h + W_g g + b_c)`, row-wise
/// over `[n, d]` inputs. Returns `(u, β)`.
pub fn gate_merge(tape: &mut Tape<'_>, r_h: Var, g: Var, gate: &GateParams<Var>) -> Result<(Var, Var), TensorError> {
    if tape.value(r_h).shape() != tape.value(g).shape() {
        return Err(TensorError::Shape {
            op: "gate_merge",
            left: tape.value(r_h).shape().to_vec(),
            right: tape.value(g).shape().to_vec(),
        });
    }
    let wh = tape.transpose(gate.w_h)?;
    let wg = tape.transpose(gate.w_g)?;
    let a = tape.matmul(r_h, wh)?;
    let b = tape.matmul(g, wg)?;
    let pre = tape.add(a, b)?;
    let pre = tape.add_row(pre, gate.b_c)?;
    let beta = tape.sigmoid(pre);
    let from_history = tape.mul(beta, r_h)?;
    let rest = tape.one_minus(beta);
    let from_graph = tape.mul(rest, g)?;
    let u = tape.add(from_history, from_graph)?;
    Ok((u, beta))
}

/// Pools the rows of `u` into the session vector. Returns `(s, α^s)`.
pub fn user_attention(
    tape: &mut Tape<'_>,
    u: Var,
    mask: Option<&[bool]>,
    head: &HeadParams<Var>,
) -> Result<(Var, Var), TensorError> {
    attend(tape, u, mask, &head.attention)
}

/// `σ(w_out · s + bias)`.
pub fn predict(tape: &mut Tape<'_>, s: Var, head: &HeadParams<Var>) -> Result<Var, TensorError> {
    let z = tape.dot(head.w_out, s)?;
    let z = tape.add_scalar(z, head.bias)?;
    Ok(tape.sigmoid(z))
}

/// Binary cross-entropy of a probability node.
pub fn loss(tape: &mut Tape<'_>, probability: Var, label: u8) -> Result<Var, TensorError> {
    tape.bce(probability, f64::from(label))
}

pub use crate::autodiff::bce_value as loss_value;

/// Tape nodes of one forward pass.
pub struct ForwardNodes {
    pub probability: Var,
    pub user_attention: Var,
    pub session_vector: Var,
    pub gate: Option<Var>,
    pub edge_weights: Option<Var>,
    pub word_weights: Vec<Var>,
    /// Slot index of each real comment.
    pub real_positions: Vec<usize>,
    /// How many times the graph layer ran.
    pub graph_aggregations: usize,
}

fn real_comments(session: &PreparedSession) -> Result<(Vec<usize>, Vec<&[TokenId]>), TensorError> {
    let real = session.real_positions();
    if real.is_empty() {
        return Err(TensorError::Contract("session has no real comments"));
    }
    let comments = real.iter().map(|&i| session.comments[i].as_slice()).collect();
    Ok((real, comments))
}

/// Full pipeline: encoders, temporal graph, gate, user attention, output.
pub fn forward_nodes(
    tape: &mut Tape<'_>,
    params: &ModelParams<Var>,
    session: &PreparedSession,
    opts: &ForwardOptions,
    drop: &mut Option<Dropout<'_>>,
) -> Result<ForwardNodes, TensorError> {
    let (real, comments) = real_comments(session)?;
    let encoded = encode_comments(tape, &comments, params.embedding, &params.comment, drop)?;
    let rc = tape.stack(&encoded.reps)?;

    let mut graph_aggregations = 0;
    let (g, edge_weights) = if opts.flags.no_graph {
        (rc, None)
    } else {
        let times: Vec<f64> = real.iter().map(|&i| session.times[i]).collect();
        let scaled = opts.time_transform.apply(&interval_matrix(&times));
        let agg_opts = AggregateOptions {
            terms: EdgeTerms { topic: !opts.flags.no_topic, time: !opts.flags.no_time },
            unit_weights: opts.unit_edge_weights,
        };
        let out = aggregate(tape, rc, &scaled, &params.graph, agg_opts)?;
        graph_aggregations += 1;
        (out.g, Some(out.weights))
    };

    let (u, gate) = if opts.flags.no_history {
        (g, None)
    } else {
        let authors = real
            .iter()
            .map(|&i| session.authors[i].ok_or(TensorError::Contract("real comment without an author")))
            .collect::<Result<Vec<_>, _>>()?;
        let hist = encode_histories(tape, &session.histories, &authors, params.embedding, &params.history, drop)?;
        let r_h = tape.stack(&hist)?;
        let (u, beta) = gate_merge(tape, r_h, g, &params.gate)?;
        (u, Some(beta))
    };

    let (s, alpha) = user_attention(tape, u, None, &params.head)?;
    let probability = predict(tape, s, &params.head)?;
    Ok(ForwardNodes {
        probability,
        user_attention: alpha,
        session_vector: s,
        gate,
        edge_weights,
        word_weights: encoded.word_weights,
        real_positions: real,
        graph_aggregations,
    })
}

/// The hierarchical attention network path, written out separately:
/// comment encoder, then user attention, then the dense output. Returns the
/// probability node.
pub fn han_forward(
    tape: &mut Tape<'_>,
    params: &ModelParams<Var>,
    session: &PreparedSession,
    drop: &mut Option<Dropout<'_>>,
) -> Result<Var, TensorError> {
    let (_, comments) = real_comments(session)?;
    let encoded = encode_comments(tape, &comments, params.embedding, &params.comment, drop)?;
    let rc = tape.stack(&encoded.reps)?;
    let (s, _) = user_attention(tape, rc, None, &params.head)?;
    predict(tape, s, &params.head)
}

/// Output of one forward pass with every intermediate weight needed for
/// explanations.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub label: u8,
    /// `α^s` per comment slot; zero for padding.
    pub user_attention: Vec<f64>,
    /// `α^w` per comment slot, aligned with that slot's token ids; zero on PAD.
    pub word_attention: Vec<Vec<f64>>,
    /// `β`, `[n_real, d]`; absent without the history path.
    pub gate_values: Option<Tensor>,
    pub session_vector: Vec<f64>,
    /// `[n_real, n_real]` edge weights; absent without the graph layer.
    pub edge_weights: Option<Tensor>,
    pub real_positions: Vec<usize>,
    pub graph_aggregations: usize,
}

impl Prediction {
    pub fn from_nodes(tape: &Tape<'_>, nodes: &ForwardNodes, session: &PreparedSession) -> Self {
        let probability = tape.value(nodes.probability).item();
        let slots = session.comments.len();
        let mut user_attention = vec![0.0; slots];
        let mut word_attention: Vec<Vec<f64>> = session.comments.iter().map(|c| vec![0.0; c.len()]).collect();
        let alpha = tape.value(nodes.user_attention).data();
        for (k, &pos) in nodes.real_positions.iter().enumerate() {
            user_attention[pos] = alpha[k];
            let weights = tape.value(nodes.word_weights[k]).data();
            let mut w = weights.iter();
            for (slot, &tok) in word_attention[pos].iter_mut().zip(&session.comments[pos]) {
                if tok != PAD {
                    *slot = *w.next().expect("one weight per non-PAD token");
                }
            }
        }
        Self {
            probability,
            label: u8::from(probability >= THRESHOLD),
            user_attention,
            word_attention,
            gate_values: nodes.gate.map(|g| tape.value(g).clone()),
            session_vector: tape.value(nodes.session_vector).data().to_vec(),
            edge_weights: nodes.edge_weights.map(|e| tape.value(e).clone()),
            real_positions: nodes.real_positions.clone(),
            graph_aggregations: nodes.graph_aggregations,
        }
    }
}
