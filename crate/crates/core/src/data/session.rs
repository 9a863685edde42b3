use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::DataError;
use crate::tensor::Tensor;

/// One comment of a session, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Comment {
    /// Opaque author id.
    pub user: String,
    /// Minutes since the session's initial post.
    pub t: f64,
    pub text: String,
}

/// A post together with its chronological comment thread.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Session {
    pub session_id: String,
    /// 1 marks a bullying session.
    pub label: u8,
    pub comments: Vec<Comment>,
    /// Author id to that user's concatenated history paragraph.
    #[cfg_attr(feature = "serde", serde(default))]
    pub histories: BTreeMap<String, String>,
}

impl Session {
    pub fn is_bully(&self) -> bool {
        self.label == 1
    }

    /// Checks the structural invariants: non-empty, first comment at `t = 0`,
    /// finite non-decreasing timestamps, binary label.
    pub fn validate(&self) -> Result<(), DataError> {
        let invalid = |reason: String| DataError::Invalid { session_id: self.session_id.clone(), reason };
        if self.label > 1 {
            return Err(invalid(format!("label must be 0 or 1, got {}", self.label)));
        }
        let first = self.comments.first().ok_or_else(|| invalid("session has no comments".into()))?;
        if first.t != 0.0 {
            return Err(invalid(format!("first comment must have t = 0, got {}", first.t)));
        }
        let mut prev = 0.0;
        for (i, c) in self.comments.iter().enumerate() {
            if !c.t.is_finite() || c.t < 0.0 {
                return Err(invalid(format!("comment {i} has invalid timestamp {}", c.t)));
            }
            if c.t < prev {
                return Err(invalid(format!("non-monotonic timestamps: comment {i} at {} follows {prev}", c.t)));
            }
            prev = c.t;
        }
        Ok(())
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.comments.iter().map(|c| c.t).collect()
    }
}

/// Signed interval matrix: entry `(k, j)` is `t_j - t_k`.
pub fn interval_matrix(timestamps: &[f64]) -> Tensor {
    let n = timestamps.len();
    let mut data = Vec::with_capacity(n * n);
    for &tk in timestamps {
        for &tj in timestamps {
            data.push(tj - tk);
        }
    }
    Tensor::new(alloc::vec![n, n], data).expect("n*n entries")
}

pub fn time_intervals(session: &Session) -> Tensor {
    interval_matrix(&session.timestamps())
}

/// Order-sensitive FNV-1a digest of a list of sessions, used to show that a
/// split was not modified by a training run.
pub fn fingerprint(sessions: &[Session]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
        // separator
        h ^= 0xff;
        h = h.wrapping_mul(PRIME);
    };
    for s in sessions {
        feed(s.session_id.as_bytes());
        feed(&[s.label]);
        for c in &s.comments {
            feed(c.user.as_bytes());
            feed(&c.t.to_bits().to_le_bytes());
            feed(c.text.as_bytes());
        }
        for (user, text) in &s.histories {
            feed(user.as_bytes());
            feed(text.as_bytes());
        }
    }
    h
}
