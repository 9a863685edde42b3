//! Temporal graph layer.
//!
//! Every session becomes a fully connected graph over its comments,
//! self-loops included. The edge from comment `k` to comment `j` carries the
//! weight
//!
//! ```text
//! π(k, j) = tanh( (r_k W_o)·r_j  +  W_t τ(t_j - t_k) )
//! ```
//!
//! where the first term measures topic coherence and the second is the
//! learned temporal factor. One hop of aggregation then gives
//! `g_j = Σ_k π(k, j) W_c r_k`. The weights are not normalized across
//! neighbors and may be negative.

use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::params::GraphParams;
use crate::tensor::Tensor;

/// How signed minute intervals are scaled before `W_t` multiplies them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum TimeTransform {
    /// Divide by the session's largest absolute interval, mapping into
    /// `[-1, 1]`. A session whose intervals are all zero maps to zeros.
    #[default]
    Normalized,
    /// Raw minutes.
    Raw,
}

impl TimeTransform {
    /// Factor applied to every interval of the given matrix.
    pub fn scale_for(self, intervals: &Tensor) -> f64 {
        match self {
            TimeTransform::Raw => 1.0,
            TimeTransform::Normalized => {
                let max = intervals.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if max > 0.0 {
                    1.0 / max
                } else {
                    0.0
                }
            }
        }
    }

    pub fn apply(self, intervals: &Tensor) -> Tensor {
        let s = self.scale_for(intervals);
        intervals.map(|v| v * s)
    }
}

/// Which terms enter the edge weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeTerms {
    pub topic: bool,
    pub time: bool,
}

impl Default for EdgeTerms {
    fn default() -> Self {
        Self { topic: true, time: true }
    }
}

/// `(r_k W_o)·r_j`, i.e. `Σ_ab r_k[a] W_o[a, b] r_j[b]`.
pub fn topic_coherence(r_k: &[f64], r_j: &[f64], w_o: &Tensor) -> Result<f64, TensorError> {
    let d = r_k.len();
    if w_o.shape() != [d, d] || r_j.len() != d {
        return Err(TensorError::Shape {
            op: "topic_coherence",
            left: alloc::vec![d, r_j.len()],
            right: w_o.shape().to_vec(),
        });
    }
    let mut total = 0.0;
    for (a, &rk) in r_k.iter().enumerate() {
        let row = w_o.row(a);
        total += rk * row.iter().zip(r_j).map(|(w, r)| w * r).sum::<f64>();
    }
    Ok(total)
}

/// `W_t · τ(t_kj)`, where `scale` comes from [`TimeTransform::scale_for`].
pub fn temporal_factor(t_kj: f64, w_t: f64, scale: f64) -> f64 {
    w_t * (t_kj * scale)
}

pub fn edge_weight(topic: f64, time: f64) -> f64 {
    libm::tanh(topic + time)
}

/// A session graph after aggregation, with the cached edge weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGraph {
    /// `[n, d]` comment vectors.
    pub nodes: Tensor,
    /// `[n, n]` signed minutes, `(k, j) = t_j - t_k`.
    pub intervals: Tensor,
    /// `[n, n]`, `(k, j)` is the weight of the edge from `k` into `j`.
    pub edge_weights: Tensor,
}

/// Tape nodes produced by [`aggregate`].
pub struct GraphOutput {
    /// `[n, d]` aggregated node vectors `g`.
    pub g: Var,
    /// `[n, n]` edge weights.
    pub weights: Var,
}

/// Options for [`aggregate`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AggregateOptions {
    pub terms: EdgeTerms,
    /// Test hook: force every edge weight to 1.
    pub unit_weights: bool,
}

/// One-hop aggregation over the real comments of a session.
///
/// `nodes` is `[n, d]`, `scaled_intervals` the `[n, n]` interval matrix
/// after the time transform.
pub fn aggregate(
    tape: &mut Tape<'_>,
    nodes: Var,
    scaled_intervals: &Tensor,
    params: &GraphParams<Var>,
    opts: AggregateOptions,
) -> Result<GraphOutput, TensorError> {
    let shape = tape.value(nodes).shape().to_vec();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(TensorError::Contract("aggregate needs at least one real comment"));
    }
    let n = shape[0];
    if scaled_intervals.shape() != [n, n] {
        return Err(TensorError::Shape { op: "aggregate", left: shape, right: scaled_intervals.shape().to_vec() });
    }
    let weights = if opts.unit_weights {
        tape.constant(Tensor::filled(&[n, n], 1.0))
    } else {
        let topic = if opts.terms.topic {
            let rw = tape.matmul(nodes, params.w_o)?;
            let rt = tape.transpose(nodes)?;
            Some(tape.matmul(rw, rt)?)
        } else {
            None
        };
        let time = if opts.terms.time {
            let tau = tape.constant(scaled_intervals.clone());
            Some(tape.scale_by(tau, params.w_t)?)
        } else {
            None
        };
        let logits = match (topic, time) {
            (Some(a), Some(b)) => tape.add(a, b)?,
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => tape.constant(Tensor::zeros(&[n, n])),
        };
        tape.tanh(logits)
    };
    // g_j = Σ_k π(k, j) W_c r_k  =>  G = Πᵀ (R W_cᵀ)
    let wct = tape.transpose(params.w_c)?;
    let messages = tape.matmul(nodes, wct)?;
    let pt = tape.transpose(weights)?;
    let g = tape.matmul(pt, messages)?;
    Ok(GraphOutput { g, weights })
}

/// Evaluates the graph layer outside a training tape.
pub fn build_graph(
    nodes: &Tensor,
    intervals: &Tensor,
    params: &GraphParams<Tensor>,
    transform: TimeTransform,
    opts: AggregateOptions,
) -> Result<(TemporalGraph, Tensor), TensorError> {
    let mut tape = Tape::new();
    let vars = GraphParams {
        w_c: tape.param(&params.w_c, false),
        w_o: tape.param(&params.w_o, false),
        w_t: tape.param(&params.w_t, false),
    };
    let r = tape.param(nodes, false);
    let scaled = transform.apply(intervals);
    let out = aggregate(&mut tape, r, &scaled, &vars, opts)?;
    let graph = TemporalGraph {
        nodes: nodes.clone(),
        intervals: intervals.clone(),
        edge_weights: tape.value(out.weights).clone(),
    };
    Ok((graph, tape.value(out.g).clone()))
}
