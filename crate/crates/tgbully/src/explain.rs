//! Per-session explanation bundles: attention weights, graph weights and
//! the prediction with a comment ranking.

use std::path::Path;

use serde::Serialize;
use tgbully_core::data::session::Session;
use tgbully_core::{DataError, Model, Tensor};

use crate::{io, Error};

pub const USER_ATTENTION: &str = "user_attention.csv";
pub const WORD_ATTENTION: &str = "word_attention.csv";
pub const GRAPH_WEIGHTS: &str = "graph_weights.csv";
pub const PREDICTION: &str = "prediction.json";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedComment {
    pub comment_index: usize,
    pub user_token: String,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub session_id: String,
    pub probability: f64,
    pub label: u8,
    /// `(comment index, user token, α^s)` for each kept comment.
    pub users: Vec<RankedComment>,
    /// `(comment index, token, α^w)` for every token of every kept comment.
    pub words: Vec<(usize, String, f64)>,
    /// Edge weights between kept comments; `None` for models without the
    /// graph layer.
    pub graph: Option<Tensor>,
}

impl Explanation {
    /// Comments by decreasing user attention, ties by position.
    pub fn ranking(&self) -> Vec<RankedComment> {
        let mut r = self.users.clone();
        r.sort_by(|a, b| b.alpha.total_cmp(&a.alpha).then(a.comment_index.cmp(&b.comment_index)));
        r
    }

    pub fn top(&self, k: usize) -> Vec<usize> {
        self.ranking().into_iter().take(k).map(|c| c.comment_index).collect()
    }
}

pub fn explain(model: &Model, session: &Session) -> Result<Explanation, DataError> {
    let prepared = model.prepare(session);
    let p = model.predict(session)?;
    let name = |id| model.vocab.token(id).unwrap_or("<unk>").to_string();
    let mut users = Vec::new();
    let mut words = Vec::new();
    for &pos in &p.real_positions {
        let tokens = &prepared.comments[pos];
        users.push(RankedComment { comment_index: pos, user_token: name(tokens[0]), alpha: p.user_attention[pos] });
        for (&tok, &a) in tokens.iter().zip(&p.word_attention[pos]) {
            words.push((pos, name(tok), a));
        }
    }
    Ok(Explanation {
        session_id: session.session_id.clone(),
        probability: p.probability,
        label: p.label,
        users,
        words,
        graph: p.edge_weights,
    })
}

fn csv_string<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    if !header.is_empty() {
        w.write_record(header).expect("in-memory CSV");
    }
    for r in rows {
        w.write_record(r).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

#[derive(Serialize)]
struct PredictionJson<'a> {
    session_id: &'a str,
    probability: f64,
    label: u8,
    ranking: Vec<RankedComment>,
}

/// The four bundle files, by name.
pub fn render(e: &Explanation) -> Vec<(&'static str, String)> {
    let users = csv_string(
        &["comment_index", "user_token", "alpha"],
        e.users.iter().map(|c| [c.comment_index.to_string(), c.user_token.clone(), c.alpha.to_string()]),
    );
    let words = csv_string(
        &["comment_index", "token", "alpha"],
        e.words.iter().map(|(i, t, a)| [i.to_string(), t.clone(), a.to_string()]),
    );
    // Entry (i, j) is the weight of the edge from comment i into comment j.
    let graph = match &e.graph {
        Some(g) => csv_string(&[], (0..g.rows()).map(|i| g.row(i).iter().map(f64::to_string).collect::<Vec<_>>())),
        None => String::new(),
    };
    let pred =
        PredictionJson { session_id: &e.session_id, probability: e.probability, label: e.label, ranking: e.ranking() };
    let mut json = serde_json::to_string_pretty(&pred).expect("prediction serializes");
    json.push('\n');
    vec![(USER_ATTENTION, users), (WORD_ATTENTION, words), (GRAPH_WEIGHTS, graph), (PREDICTION, json)]
}

pub fn write_bundle(dir: &Path, e: &Explanation) -> Result<(), Error> {
    for (name, body) in render(e) {
        io::write(&dir.join(name), body.as_bytes())?;
    }
    Ok(())
}
