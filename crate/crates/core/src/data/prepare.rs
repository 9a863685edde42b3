use alloc::vec::Vec;

use crate::data::session::{interval_matrix, Session};
use crate::data::vocab::{tokenize, tokenize_history, TokenId, UserIndex, Vocabulary, PAD};
use crate::tensor::Tensor;

/// Truncation limits applied when a session is turned into token ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Limits {
    pub max_session_len: usize,
    pub max_comment_len: usize,
    pub max_history_len: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_session_len: 140, max_comment_len: 30, max_history_len: 60 }
    }
}

/// A session in model-ready form.
///
/// A comment slot whose token list is empty is padding. Within a comment,
/// `PAD` ids are padding too; the encoder skips both.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSession {
    pub comments: Vec<Vec<TokenId>>,
    pub times: Vec<f64>,
    /// Index into `histories` of each comment's author; `None` for padding.
    pub authors: Vec<Option<usize>>,
    /// One token list per distinct author (may be empty).
    pub histories: Vec<Vec<TokenId>>,
    pub label: u8,
}

impl PreparedSession {
    /// Tokenizes a validated session, keeping the earliest
    /// `max_session_len` comments.
    pub fn new(session: &Session, vocab: &Vocabulary, limits: &Limits) -> Self {
        let users = UserIndex::for_session(session);
        let kept = &session.comments[..session.comments.len().min(limits.max_session_len)];
        let mut author_order: Vec<&str> = Vec::new();
        let mut authors = Vec::with_capacity(kept.len());
        for c in kept {
            let pos = match author_order.iter().position(|u| *u == c.user) {
                Some(p) => p,
                None => {
                    author_order.push(&c.user);
                    author_order.len() - 1
                }
            };
            authors.push(Some(pos));
        }
        let histories = author_order
            .iter()
            .map(|u| {
                session
                    .histories
                    .get(*u)
                    .map(|h| tokenize_history(h, &users, vocab, limits.max_history_len))
                    .unwrap_or_default()
            })
            .collect();
        Self {
            comments: kept.iter().map(|c| tokenize(&c.text, &c.user, &users, vocab, limits.max_comment_len)).collect(),
            times: kept.iter().map(|c| c.t).collect(),
            authors,
            histories,
            label: session.label,
        }
    }

    /// Appends empty comment slots up to `len` and pads every comment to
    /// `token_len` with `PAD`.
    pub fn padded(&self, len: usize, token_len: usize) -> Self {
        let mut out = self.clone();
        let last_t = out.times.last().copied().unwrap_or(0.0);
        for c in &mut out.comments {
            c.resize(c.len().max(token_len), PAD);
        }
        while out.comments.len() < len {
            out.comments.push(Vec::new());
            out.times.push(last_t);
            out.authors.push(None);
        }
        out
    }

    /// Positions of the real (non-padding) comments.
    pub fn real_positions(&self) -> Vec<usize> {
        self.comments.iter().enumerate().filter(|(_, c)| c.iter().any(|&t| t != PAD)).map(|(i, _)| i).collect()
    }

    pub fn num_real(&self) -> usize {
        self.real_positions().len()
    }

    /// Signed intervals between the real comments.
    pub fn intervals(&self) -> Tensor {
        let ts: Vec<f64> = self.real_positions().iter().map(|&i| self.times[i]).collect();
        interval_matrix(&ts)
    }
}

/// Strips trailing PAD ids from a token list.
pub fn unpadded(tokens: &[TokenId]) -> &[TokenId] {
    let end = tokens.iter().rposition(|&t| t != PAD).map_or(0, |p| p + 1);
    &tokens[..end]
}
