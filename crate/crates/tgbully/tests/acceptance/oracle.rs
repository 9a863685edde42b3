//! Straight-line forward pass over plain vectors. Parameters are looked up
//! by name; nothing here calls into the tape or the model's layers.

use std::collections::HashMap;

use tgbully_core::data::prepare::PreparedSession;

pub struct Weights {
    map: HashMap<String, (Vec<usize>, Vec<f64>)>,
}

pub struct Output {
    pub probability: f64,
    pub user_attention: Vec<f64>,
    pub word_attention: Vec<Vec<f64>>,
    /// `(k, j)` edge weights, empty when the graph layer is off.
    pub edges: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub session_vector: Vec<f64>,
}

#[derive(Clone, Copy)]
pub struct Switches {
    pub topic: bool,
    pub time: bool,
    pub history: bool,
    pub graph: bool,
    pub normalize_time: bool,
}

impl Weights {
    pub fn new<'a>(named: impl Iterator<Item = (&'a str, &'a tgbully_core::Tensor)>) -> Self {
        Self { map: named.map(|(n, t)| (n.to_string(), (t.shape().to_vec(), t.data().to_vec()))).collect() }
    }

    fn vec(&self, name: &str) -> &[f64] {
        &self.map.get(name).unwrap_or_else(|| panic!("no parameter {name}")).1
    }

    fn scalar(&self, name: &str) -> f64 {
        self.vec(name)[0]
    }

    /// Row `i` of a matrix parameter.
    fn row(&self, name: &str, i: usize) -> &[f64] {
        let (shape, data) = &self.map[name];
        &data[i * shape[1]..(i + 1) * shape[1]]
    }

    fn rows(&self, name: &str) -> usize {
        self.map[name].0[0]
    }

    /// `W x` for a `[rows, cols]` parameter.
    fn apply(&self, name: &str, x: &[f64]) -> Vec<f64> {
        (0..self.rows(name)).map(|i| dot(self.row(name, i), x)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gru(w: &Weights, p: &str, x: &[f64], h: &[f64]) -> Vec<f64> {
    let gate = |g: &str, hh: &[f64]| -> Vec<f64> {
        let a = w.apply(&format!("{p}.w_{g}"), x);
        let b = w.apply(&format!("{p}.u_{g}"), hh);
        let bias = w.vec(&format!("{p}.b_{g}"));
        a.iter().zip(&b).zip(bias).map(|((a, b), c)| a + b + c).collect()
    };
    let z: Vec<f64> = gate("z", h).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = gate("r", h).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(r, h)| r * h).collect();
    let cand: Vec<f64> = gate("h", &rh).into_iter().map(f64::tanh).collect();
    (0..h.len()).map(|i| (1.0 - z[i]) * h[i] + z[i] * cand[i]).collect()
}

fn bigru(w: &Weights, fwd: &str, bwd: &str, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let hidden = w.vec(&format!("{fwd}.b_z")).len();
    let mut f = Vec::new();
    let mut h = vec![0.0; hidden];
    for x in xs {
        h = gru(w, fwd, x, &h);
        f.push(h.clone());
    }
    let mut b = vec![Vec::new(); xs.len()];
    let mut h = vec![0.0; hidden];
    for i in (0..xs.len()).rev() {
        h = gru(w, bwd, &xs[i], &h);
        b[i] = h.clone();
    }
    f.into_iter()
        .zip(b)
        .map(|(mut f, b)| {
            f.extend(b);
            f
        })
        .collect()
}

/// `α = softmax(tanh(v·r_i + b))`, pooled `Σ α_i r_i`.
fn attention(w: &Weights, p: &str, reps: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let v = w.vec(&format!("{p}.v"));
    let b = w.scalar(&format!("{p}.b"));
    let scores: Vec<f64> = reps.iter().map(|r| (dot(v, r) + b).tanh()).collect();
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let total: f64 = e.iter().sum();
    let alpha: Vec<f64> = e.iter().map(|x| x / total).collect();
    let mut pooled = vec![0.0; reps[0].len()];
    for (a, r) in alpha.iter().zip(reps) {
        for (o, x) in pooled.iter_mut().zip(r) {
            *o += a * x;
        }
    }
    (pooled, alpha)
}

fn words(w: &Weights, enc: &str, tokens: &[u32]) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<Vec<f64>> =
        tokens.iter().filter(|&&t| t != 0).map(|&t| w.row("embedding", t as usize).to_vec()).collect();
    let states = bigru(w, &format!("{enc}.word_fwd"), &format!("{enc}.word_bwd"), &xs);
    attention(w, &format!("{enc}.word_attention"), &states)
}

/// Edge weights `π(k, j)` and aggregated `g_j = Σ_k π(k, j) W_c r_k`.
pub fn graph(w: &Weights, r: &[Vec<f64>], times: &[f64], s: Switches) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = r.len();
    let mut scale = 1.0;
    if s.normalize_time {
        let mut max: f64 = 0.0;
        for &a in times {
            for &b in times {
                max = max.max((b - a).abs());
            }
        }
        scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    }
    let w_t = w.scalar("graph.w_t");
    let mut pi = vec![vec![0.0; n]; n];
    for k in 0..n {
        let rk_wo: Vec<f64> =
            (0..r[k].len()).map(|b| (0..r[k].len()).map(|a| r[k][a] * w.row("graph.w_o", a)[b]).sum()).collect();
        for j in 0..n {
            let topic = if s.topic { dot(&rk_wo, &r[j]) } else { 0.0 };
            let time = if s.time { w_t * ((times[j] - times[k]) * scale) } else { 0.0 };
            pi[k][j] = (topic + time).tanh();
        }
    }
    let msgs: Vec<Vec<f64>> = r.iter().map(|rk| w.apply("graph.w_c", rk)).collect();
    let g = (0..n)
        .map(|j| {
            let mut acc = vec![0.0; msgs[0].len()];
            for k in 0..n {
                for (o, m) in acc.iter_mut().zip(&msgs[k]) {
                    *o += pi[k][j] * m;
                }
            }
            acc
        })
        .collect();
    (pi, g)
}

pub fn forward(w: &Weights, session: &PreparedSession, s: Switches) -> Output {
    let real: Vec<usize> = (0..session.comments.len()).filter(|&i| !session.comments[i].is_empty()).collect();
    let mut pooled = Vec::new();
    let mut word_attention = vec![Vec::new(); session.comments.len()];
    for &i in &real {
        let (c, a) = words(w, "comment", &session.comments[i]);
        pooled.push(c);
        let mut it = a.into_iter();
        word_attention[i] =
            session.comments[i].iter().map(|&t| if t == 0 { 0.0 } else { it.next().unwrap() }).collect();
    }
    let rc = bigru(w, "comment.comment_fwd", "comment.comment_bwd", &pooled);
    let times: Vec<f64> = real.iter().map(|&i| session.times[i]).collect();
    let (edges, g) = if s.graph { graph(w, &rc, &times, s) } else { (Vec::new(), rc.clone()) };

    let (u, beta) = if s.history {
        let d = rc[0].len();
        let rh: Vec<Vec<f64>> = real
            .iter()
            .map(|&i| {
                let h = &session.histories[session.authors[i].unwrap()];
                if h.iter().all(|&t| t == 0) {
                    vec![0.0; d]
                } else {
                    let (c, _) = words(w, "history", h);
                    bigru(w, "history.comment_fwd", "history.comment_bwd", &[c]).remove(0)
                }
            })
            .collect();
        let b_c = w.vec("gate.b_c");
        let mut u = Vec::new();
        let mut beta = Vec::new();
        for (h, gj) in rh.iter().zip(&g) {
            let a = w.apply("gate.w_h", h);
            let b = w.apply("gate.w_g", gj);
            let bj: Vec<f64> = (0..d).map(|i| sigmoid(a[i] + b[i] + b_c[i])).collect();
            u.push((0..d).map(|i| bj[i] * h[i] + (1.0 - bj[i]) * gj[i]).collect());
            beta.push(bj);
        }
        (u, beta)
    } else {
        (g, Vec::new())
    };

    let (sv, alpha) = attention(w, "head.user_attention", &u);
    let probability = sigmoid(dot(w.vec("head.dense.w"), &sv) + w.scalar("head.dense.b"));
    let mut user_attention = vec![0.0; session.comments.len()];
    for (k, &i) in real.iter().enumerate() {
        user_attention[i] = alpha[k];
    }
    Output { probability, user_attention, word_attention, edges, beta, session_vector: sv }
}
