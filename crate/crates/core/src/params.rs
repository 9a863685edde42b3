//! Named parameter storage and the typed parameter layout of the model.
//!
//! Each layout struct is generic over its slot type: `ParamId` indexes into
//! a [`ParamStore`], and after binding to a tape the same struct holds
//! [`Var`](crate::Var) handles.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::Tensor;

pub type ParamId = usize;

/// Flat list of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: String, tensor: Tensor) -> ParamId {
        self.names.push(name);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Sizes of every learnable tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Hidden size of each direction of the word-level bi-GRU.
    pub h_sent: usize,
    /// Hidden size of each direction of the comment-level bi-GRU.
    pub h_sess: usize,
}

impl ModelDims {
    /// Width of comment, history, graph and session vectors.
    pub fn node_dim(&self) -> usize {
        2 * self.h_sess
    }
}

/// One GRU direction: input weights `w_*` are `[hidden, input]`, recurrent
/// weights `u_*` are `[hidden, hidden]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell<T> {
    pub w_z: T,
    pub w_r: T,
    pub w_h: T,
    pub u_z: T,
    pub u_r: T,
    pub u_h: T,
    pub b_z: T,
    pub b_r: T,
    pub b_h: T,
}

/// Context vector and scalar bias of an additive attention layer.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T> {
    pub v: T,
    pub b: T,
}

/// Word-level bi-GRU, word attention, comment-level bi-GRU.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T> {
    pub word_fwd: GruCell<T>,
    pub word_bwd: GruCell<T>,
    pub word_attention: AttentionParams<T>,
    pub comment_fwd: GruCell<T>,
    pub comment_bwd: GruCell<T>,
}

/// Aggregation transform `w_c`, topic transform `w_o`, time coefficient `w_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphParams<T> {
    pub w_c: T,
    pub w_o: T,
    pub w_t: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateParams<T> {
    pub w_h: T,
    pub w_g: T,
    pub b_c: T,
}

/// User-level attention plus the dense output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T> {
    pub attention: AttentionParams<T>,
    pub w_out: T,
    pub bias: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub embedding: T,
    pub comment: EncoderParams<T>,
    pub history: EncoderParams<T>,
    pub graph: GraphParams<T>,
    pub gate: GateParams<T>,
    pub head: HeadParams<T>,
}

impl<T> GruCell<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&'a T) -> U) -> GruCell<U> {
        GruCell {
            w_z: f(&self.w_z),
            w_r: f(&self.w_r),
            w_h: f(&self.w_h),
            u_z: f(&self.u_z),
            u_r: f(&self.u_r),
            u_h: f(&self.u_h),
            b_z: f(&self.b_z),
            b_r: f(&self.b_r),
            b_h: f(&self.b_h),
        }
    }
}

impl<T> AttentionParams<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&'a T) -> U) -> AttentionParams<U> {
        AttentionParams { v: f(&self.v), b: f(&self.b) }
    }
}

impl<T> EncoderParams<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&'a T) -> U) -> EncoderParams<U> {
        EncoderParams {
            word_fwd: self.word_fwd.map(f),
            word_bwd: self.word_bwd.map(f),
            word_attention: self.word_attention.map(f),
            comment_fwd: self.comment_fwd.map(f),
            comment_bwd: self.comment_bwd.map(f),
        }
    }
}

impl<T> ModelParams<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&'a T) -> U) -> ModelParams<U> {
        ModelParams {
            embedding: f(&self.embedding),
            comment: self.comment.map(f),
            history: self.history.map(f),
            graph: GraphParams { w_c: f(&self.graph.w_c), w_o: f(&self.graph.w_o), w_t: f(&self.graph.w_t) },
            gate: GateParams { w_h: f(&self.gate.w_h), w_g: f(&self.gate.w_g), b_c: f(&self.gate.b_c) },
            head: HeadParams {
                attention: self.head.attention.map(f),
                w_out: f(&self.head.w_out),
                bias: f(&self.head.bias),
            },
        }
    }
}

/// How a parameter is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    Uniform {
        fan_in: usize,
    },
    Zeros,
    /// The embedding table, supplied by the caller.
    Embedding,
}

/// Enumerates every parameter of the model in a fixed order. `add` receives
/// the name, shape and init rule and returns the id it assigned.
pub fn layout(
    dims: &ModelDims,
    shared_history_encoder: bool,
    add: &mut impl FnMut(String, Vec<usize>, Init) -> ParamId,
) -> ModelParams<ParamId> {
    let d = dims.node_dim();
    let embedding = add("embedding".into(), vec![dims.vocab_size, dims.embed_dim], Init::Embedding);
    let comment = encoder_layout("comment", dims, add);
    let history = if shared_history_encoder { comment.clone() } else { encoder_layout("history", dims, add) };
    let square = |name: &str, add: &mut dyn FnMut(String, Vec<usize>, Init) -> ParamId| {
        add(name.into(), vec![d, d], Init::Uniform { fan_in: d })
    };
    let graph = GraphParams {
        w_c: square("graph.w_c", add),
        w_o: square("graph.w_o", add),
        w_t: add("graph.w_t".into(), Vec::new(), Init::Zeros),
    };
    let gate = GateParams {
        w_h: square("gate.w_h", add),
        w_g: square("gate.w_g", add),
        b_c: add("gate.b_c".into(), vec![d], Init::Zeros),
    };
    let head = HeadParams {
        attention: AttentionParams {
            v: add("head.user_attention.v".into(), vec![d], Init::Uniform { fan_in: d }),
            b: add("head.user_attention.b".into(), Vec::new(), Init::Zeros),
        },
        w_out: add("head.dense.w".into(), vec![d], Init::Uniform { fan_in: d }),
        bias: add("head.dense.b".into(), Vec::new(), Init::Zeros),
    };
    ModelParams { embedding, comment, history, graph, gate, head }
}

fn encoder_layout(
    prefix: &str,
    dims: &ModelDims,
    add: &mut impl FnMut(String, Vec<usize>, Init) -> ParamId,
) -> EncoderParams<ParamId> {
    let word_fwd = gru_layout(&format!("{prefix}.word_fwd"), dims.embed_dim, dims.h_sent, add);
    let word_bwd = gru_layout(&format!("{prefix}.word_bwd"), dims.embed_dim, dims.h_sent, add);
    let att_dim = 2 * dims.h_sent;
    let word_attention = AttentionParams {
        v: add(format!("{prefix}.word_attention.v"), vec![att_dim], Init::Uniform { fan_in: att_dim }),
        b: add(format!("{prefix}.word_attention.b"), Vec::new(), Init::Zeros),
    };
    let comment_fwd = gru_layout(&format!("{prefix}.comment_fwd"), att_dim, dims.h_sess, add);
    let comment_bwd = gru_layout(&format!("{prefix}.comment_bwd"), att_dim, dims.h_sess, add);
    EncoderParams { word_fwd, word_bwd, word_attention, comment_fwd, comment_bwd }
}

fn gru_layout(
    prefix: &str,
    input: usize,
    hidden: usize,
    add: &mut impl FnMut(String, Vec<usize>, Init) -> ParamId,
) -> GruCell<ParamId> {
    let w = |g: &str, add: &mut dyn FnMut(String, Vec<usize>, Init) -> ParamId| {
        add(format!("{prefix}.w_{g}"), vec![hidden, input], Init::Uniform { fan_in: input })
    };
    let u = |g: &str, add: &mut dyn FnMut(String, Vec<usize>, Init) -> ParamId| {
        add(format!("{prefix}.u_{g}"), vec![hidden, hidden], Init::Uniform { fan_in: hidden })
    };
    let b = |g: &str, add: &mut dyn FnMut(String, Vec<usize>, Init) -> ParamId| {
        add(format!("{prefix}.b_{g}"), vec![hidden], Init::Zeros)
    };
    GruCell {
        w_z: w("z", add),
        w_r: w("r", add),
        w_h: w("h", add),
        u_z: u("z", add),
        u_r: u("r", add),
        u_h: u("h", add),
        b_z: b("z", add),
        b_r: b("r", add),
        b_h: b("h", add),
    }
}
