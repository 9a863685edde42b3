//! Evaluation fan-out across threads over a frozen model.

use std::num::NonZeroUsize;
use std::thread;

use tgbully_core::data::prepare::PreparedSession;
use tgbully_core::train::Evaluation;
use tgbully_core::{Model, TensorError};

pub fn default_threads() -> usize {
    thread::available_parallelism().map_or(1, NonZeroUsize::get)
}

/// Probabilities in input order. Each thread scores one contiguous chunk;
/// results are identical to sequential scoring for any thread count.
pub fn probabilities(model: &Model, sessions: &[PreparedSession], threads: usize) -> Result<Vec<f64>, TensorError> {
    let threads = threads.clamp(1, sessions.len().max(1));
    if threads == 1 {
        return sessions.iter().map(|s| model.probability(s)).collect();
    }
    let chunk = sessions.len().div_ceil(threads);
    let parts: Vec<Result<Vec<f64>, TensorError>> = thread::scope(|scope| {
        let handles: Vec<_> = sessions
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|s| model.probability(s)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(sessions.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn evaluate(model: &Model, sessions: &[PreparedSession], threads: usize) -> Result<Evaluation, TensorError> {
    let p = probabilities(model, sessions, threads)?;
    Ok(Evaluation::from_scores(p, sessions.iter().map(|s| s.label).collect()))
}
