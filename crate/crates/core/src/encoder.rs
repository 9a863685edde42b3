//! Hierarchical sequence encoders: word embeddings, word-level bi-GRU,
//! word attention, comment-level bi-GRU. User histories run through the same
//! pipeline with their own parameters.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::data::vocab::{TokenId, PAD};
use crate::error::TensorError;
use crate::params::{AttentionParams, EncoderParams, GruCell};
use crate::rng::{self, ChaCha8Rng};
use crate::tensor::Tensor;

/// Inverted dropout applied during training.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

/// Applies dropout when `drop` is set and its rate is positive; identity
/// otherwise.
pub fn dropout(tape: &mut Tape<'_>, x: Var, drop: &mut Option<Dropout<'_>>) -> Result<Var, TensorError> {
    match drop {
        Some(d) if d.rate > 0.0 => {
            let keep = 1.0 / (1.0 - d.rate);
            let mask =
                (0..tape.value(x).len()).map(|_| if rng::bernoulli(d.rng, d.rate) { 0.0 } else { keep }).collect();
            tape.dropout(x, mask)
        }
        _ => Ok(x),
    }
}

/// One GRU update:
///
/// ```text
/// z = σ(W_z x + U_z h + b_z)
/// r = σ(W_r x + U_r h + b_r)
/// h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 - z) ⊙ h + z ⊙ h̃
/// ```
pub fn gru_step(tape: &mut Tape<'_>, x: Var, h: Var, cell: &GruCell<Var>) -> Result<Var, TensorError> {
    let gate = |tape: &mut Tape<'_>, w: Var, u: Var, b: Var, hh: Var| -> Result<Var, TensorError> {
        let wx = tape.matvec(w, x)?;
        let uh = tape.matvec(u, hh)?;
        let s = tape.add(wx, uh)?;
        tape.add(s, b)
    };
    let z_pre = gate(tape, cell.w_z, cell.u_z, cell.b_z, h)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, cell.w_r, cell.u_r, cell.b_r, h)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h)?;
    let cand_pre = gate(tape, cell.w_h, cell.u_h, cell.b_h, rh)?;
    let cand = tape.tanh(cand_pre);
    let keep = tape.one_minus(z);
    let old = tape.mul(keep, h)?;
    let new = tape.mul(z, cand)?;
    tape.add(old, new)
}

fn hidden_size(tape: &Tape<'_>, cell: &GruCell<Var>) -> usize {
    tape.value(cell.b_z).len()
}

/// Runs a forward GRU left to right and a backward GRU right to left, both
/// from a zero state, and concatenates their states position-wise.
pub fn bigru_encode(
    tape: &mut Tape<'_>,
    xs: &[Var],
    fwd: &GruCell<Var>,
    bwd: &GruCell<Var>,
) -> Result<Vec<Var>, TensorError> {
    if xs.is_empty() {
        return Err(TensorError::Empty { op: "bigru_encode" });
    }
    let zero_f = tape.constant(Tensor::zeros(&[hidden_size(tape, fwd)]));
    let zero_b = tape.constant(Tensor::zeros(&[hidden_size(tape, bwd)]));
    let mut forward = Vec::with_capacity(xs.len());
    let mut h = zero_f;
    for &x in xs {
        h = gru_step(tape, x, h, fwd)?;
        forward.push(h);
    }
    let mut backward = vec![zero_b; xs.len()];
    let mut h = zero_b;
    for (i, &x) in xs.iter().enumerate().rev() {
        h = gru_step(tape, x, h, bwd)?;
        backward[i] = h;
    }
    forward.into_iter().zip(backward).map(|(f, b)| tape.concat(f, b)).collect()
}

/// Additive attention over the rows of `reps` (`[n, d]`):
/// `s_i = tanh(v·r_i + b)`, weights are the softmax of `s` over unmasked
/// rows, and the pooled vector is `Σ weight_i r_i`. Masked rows get weight
/// exactly zero. Returns `(pooled, weights)`.
pub fn attend(
    tape: &mut Tape<'_>,
    reps: Var,
    mask: Option<&[bool]>,
    params: &AttentionParams<Var>,
) -> Result<(Var, Var), TensorError> {
    if mask.is_some_and(|m| !m.iter().any(|&k| k)) {
        return Err(TensorError::Contract("attend: every position is masked"));
    }
    let raw = tape.matvec(reps, params.v)?;
    let shifted = tape.add_scalar(raw, params.b)?;
    let scores = tape.tanh(shifted);
    let weights = tape.softmax_masked(scores, mask)?;
    let rt = tape.transpose(reps)?;
    let pooled = tape.matvec(rt, weights)?;
    Ok((pooled, weights))
}

/// Word-level half of the pipeline for one token list: embed, bi-GRU,
/// attention. PAD ids are skipped. Returns the pooled vector and the
/// attention weights over the non-PAD tokens.
pub fn encode_words(
    tape: &mut Tape<'_>,
    tokens: &[TokenId],
    embedding: Var,
    enc: &EncoderParams<Var>,
    drop: &mut Option<Dropout<'_>>,
) -> Result<(Var, Var), TensorError> {
    let ids: Vec<usize> = tokens.iter().filter(|&&t| t != PAD).map(|&t| t as usize).collect();
    if ids.is_empty() {
        return Err(TensorError::Empty { op: "encode_words" });
    }
    let embedded = tape.gather(embedding, &ids)?;
    let embedded = dropout(tape, embedded, drop)?;
    let rows = (0..ids.len()).map(|i| tape.row(embedded, i)).collect::<Result<Vec<_>, _>>()?;
    let states = bigru_encode(tape, &rows, &enc.word_fwd, &enc.word_bwd)?;
    let states = tape.stack(&states)?;
    let states = dropout(tape, states, drop)?;
    attend(tape, states, None, &enc.word_attention)
}

/// Output of [`encode_comments`].
pub struct EncodedComments {
    /// Contextualized comment vectors `r^c`, one per real comment.
    pub reps: Vec<Var>,
    /// Word attention weights per real comment (over its non-PAD tokens).
    pub word_weights: Vec<Var>,
}

/// Encodes the real comments of a session in order. Every entry of
/// `comments` must contain at least one non-PAD token.
pub fn encode_comments(
    tape: &mut Tape<'_>,
    comments: &[&[TokenId]],
    embedding: Var,
    enc: &EncoderParams<Var>,
    drop: &mut Option<Dropout<'_>>,
) -> Result<EncodedComments, TensorError> {
    if comments.is_empty() {
        return Err(TensorError::Empty { op: "encode_comments" });
    }
    let mut pooled = Vec::with_capacity(comments.len());
    let mut word_weights = Vec::with_capacity(comments.len());
    for tokens in comments {
        let (c, w) = encode_words(tape, tokens, embedding, enc, drop)?;
        pooled.push(c);
        word_weights.push(w);
    }
    let reps = bigru_encode(tape, &pooled, &enc.comment_fwd, &enc.comment_bwd)?;
    let reps = reps.into_iter().map(|r| dropout(tape, r, drop)).collect::<Result<Vec<_>, _>>()?;
    Ok(EncodedComments { reps, word_weights })
}

/// Encodes each distinct author's history once and returns one vector per
/// comment, aligned with `authors`. An empty history maps to the zero vector
/// of width `2 * h_sess`.
pub fn encode_histories(
    tape: &mut Tape<'_>,
    histories: &[Vec<TokenId>],
    authors: &[usize],
    embedding: Var,
    enc: &EncoderParams<Var>,
    drop: &mut Option<Dropout<'_>>,
) -> Result<Vec<Var>, TensorError> {
    let width = 2 * hidden_size(tape, &enc.comment_fwd);
    let mut per_author: Vec<Option<Var>> = vec![None; histories.len()];
    let mut zero = None;
    let mut out = Vec::with_capacity(authors.len());
    for &a in authors {
        let v = match per_author[a] {
            Some(v) => v,
            None => {
                let v = if histories[a].iter().all(|&t| t == PAD) {
                    *zero.get_or_insert_with(|| tape.constant(Tensor::zeros(&[width])))
                } else {
                    let (c, _) = encode_words(tape, &histories[a], embedding, enc, drop)?;
                    let rep = bigru_encode(tape, &[c], &enc.comment_fwd, &enc.comment_bwd)?[0];
                    dropout(tape, rep, drop)?
                };
                per_author[a] = Some(v);
                v
            }
        };
        out.push(v);
    }
    Ok(out)
}
