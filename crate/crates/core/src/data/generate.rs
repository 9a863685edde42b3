//! Synthetic session corpora with planted bullying bursts.
//!
//! A bullying session carries a *burst*: a contiguous run of comments by
//! bully users, each drawing at least half of its words from the offensive
//! pool, re-using offensive words from earlier burst comments, and arriving
//! after short gaps. Everything else is benign chatter with long gaps. Bully
//! users' histories contain offensive words.
//!
//! Two knobs split the signal. With `decoy_fraction > 0` some benign
//! sessions carry an offensive run with neither signature (fresh words, long
//! gaps), so offensive words alone stop being evidence. With
//! `single_signature_fraction > 0` some bullying runs carry only one
//! signature: repetition with long gaps, or short gaps without repetition.
//! Catching all of them then takes both content similarity and timing.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::data::session::{Comment, Session};
use crate::error::DataError;
use crate::rng::{self, ChaCha8Rng, Stream};

const BENIGN: &[&str] = &[
    "love",
    "beautiful",
    "nice",
    "great",
    "photo",
    "amazing",
    "cute",
    "happy",
    "wow",
    "awesome",
    "friends",
    "fun",
    "summer",
    "beach",
    "party",
    "dog",
    "cat",
    "music",
    "game",
    "food",
    "pizza",
    "weekend",
    "lol",
    "thanks",
    "cool",
    "style",
    "dress",
    "hair",
    "smile",
    "sunset",
    "travel",
    "birthday",
    "congrats",
    "miss",
    "team",
    "goal",
    "dance",
    "song",
    "movie",
    "trip",
    "family",
    "morning",
    "coffee",
    "sweet",
    "pretty",
    "best",
    "omg",
    "yes",
];

const OFFENSIVE: &[&str] = &[
    "loser",
    "ugly",
    "stupid",
    "idiot",
    "fat",
    "dumb",
    "freak",
    "pathetic",
    "worthless",
    "gross",
    "weirdo",
    "creep",
    "moron",
    "clown",
    "trash",
    "disgusting",
];

/// Parameters of the synthetic generator. Ranges are inclusive `[min, max]`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct CorpusSpec {
    pub n_sessions: usize,
    pub bully_fraction: f64,
    pub comments_per_session: [usize; 2],
    pub words_per_comment: [usize; 2],
    pub users_per_session: [usize; 2],
    pub burst_len: [usize; 2],
    /// Minimum share of offensive words in a burst comment (at least 0.5).
    pub burst_offensive_fraction: f64,
    /// Chance that an offensive word in a later burst comment repeats one
    /// from an earlier burst comment.
    pub repeat_prob: f64,
    /// Mean of the exponential gap between burst comments, minutes.
    pub short_gap_minutes: f64,
    /// Mean of the exponential gap elsewhere, minutes.
    pub long_gap_minutes: f64,
    /// Chance that a benign comment contains one offensive word.
    pub stray_offensive_prob: f64,
    pub mention_prob: f64,
    /// Share of benign sessions that carry an offensive run with neither
    /// signature.
    pub decoy_fraction: f64,
    /// Share of bullying runs with only one signature, split evenly between
    /// repetition-only and timing-only.
    pub single_signature_fraction: f64,
    pub history_words: [usize; 2],
    /// Share of offensive words in the histories of burst authors, rounded
    /// up so any positive share yields at least one.
    pub bully_history_offensive_fraction: f64,
    pub benign_pool: Vec<String>,
    pub offensive_pool: Vec<String>,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_sessions: 500,
            bully_fraction: 0.31,
            comments_per_session: [8, 14],
            words_per_comment: [3, 7],
            users_per_session: [3, 6],
            burst_len: [3, 3],
            burst_offensive_fraction: 0.6,
            repeat_prob: 0.7,
            short_gap_minutes: 1.5,
            long_gap_minutes: 40.0,
            stray_offensive_prob: 0.08,
            mention_prob: 0.1,
            decoy_fraction: 0.0,
            single_signature_fraction: 0.0,
            history_words: [8, 16],
            bully_history_offensive_fraction: 0.3,
            benign_pool: BENIGN.iter().map(|s| String::from(*s)).collect(),
            offensive_pool: OFFENSIVE.iter().map(|s| String::from(*s)).collect(),
            seed: 7,
        }
    }
}

impl CorpusSpec {
    /// Corpus where every benign session holds a plain offensive run and
    /// every bullying run shows exactly one signature, so the bullying
    /// signal is split between repetition and timing.
    ///
    /// The preset also sharpens both signatures (longer runs, guaranteed
    /// repetition, wider gap contrast), narrows the vocabulary while keeping
    /// enough offensive words for a run without repeats, and drops histories
    /// so that a small model can pick up each signature within a few epochs.
    pub fn split_signal() -> Self {
        let base = Self::default();
        Self {
            comments_per_session: [8, 12],
            words_per_comment: [5, 5],
            users_per_session: [4, 4],
            burst_len: [4, 4],
            repeat_prob: 1.0,
            short_gap_minutes: 0.5,
            long_gap_minutes: 60.0,
            mention_prob: 0.0,
            decoy_fraction: 1.0,
            single_signature_fraction: 1.0,
            history_words: [0, 0],
            benign_pool: base.benign_pool[..16].to_vec(),
            offensive_pool: base.offensive_pool[..12].to_vec(),
            ..base
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Spec(m));
        if self.benign_pool.is_empty() || self.offensive_pool.is_empty() {
            return err("token pools must be non-empty".into());
        }
        if let Some(w) = self.benign_pool.iter().find(|w| self.offensive_pool.contains(w)) {
            return err(format!("pools overlap on {w:?}"));
        }
        for (name, v) in [
            ("bully_fraction", self.bully_fraction),
            ("burst_offensive_fraction", self.burst_offensive_fraction),
            ("repeat_prob", self.repeat_prob),
            ("stray_offensive_prob", self.stray_offensive_prob),
            ("mention_prob", self.mention_prob),
            ("decoy_fraction", self.decoy_fraction),
            ("single_signature_fraction", self.single_signature_fraction),
            ("bully_history_offensive_fraction", self.bully_history_offensive_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return err(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.burst_offensive_fraction < 0.5 {
            return err("burst_offensive_fraction must be at least 0.5".into());
        }
        for (name, [lo, hi]) in [
            ("comments_per_session", self.comments_per_session),
            ("words_per_comment", self.words_per_comment),
            ("users_per_session", self.users_per_session),
            ("burst_len", self.burst_len),
            ("history_words", self.history_words),
        ] {
            if lo > hi {
                return err(format!("{name} range is empty: [{lo}, {hi}]"));
            }
        }
        if self.comments_per_session[0] == 0 || self.users_per_session[0] == 0 {
            return err("sessions need at least one comment and one user".into());
        }
        if self.words_per_comment[0] == 0 {
            return err("words_per_comment must start at 1 or more".into());
        }
        if self.burst_len[0] < 3 {
            return err("bursts need at least 3 comments".into());
        }
        if self.comments_per_session[0] < self.burst_len[1] + 1 {
            return err("comments_per_session minimum must exceed the longest burst".into());
        }
        if !(self.short_gap_minutes > 0.0 && self.long_gap_minutes > 0.0) {
            return err("gap means must be positive".into());
        }
        Ok(())
    }

    pub fn n_bully(&self) -> usize {
        libm::round(self.n_sessions as f64 * self.bully_fraction) as usize
    }
}

/// Sessions plus the comment positions of each planted burst (empty for
/// benign sessions).
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedCorpus {
    pub sessions: Vec<Session>,
    pub planted: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum RunKind {
    Burst,
    RepetitionOnly,
    TimingOnly,
    Plain,
}

impl RunKind {
    fn short_gaps(self) -> bool {
        matches!(self, RunKind::Burst | RunKind::TimingOnly)
    }
    fn repeats(self) -> bool {
        matches!(self, RunKind::Burst | RunKind::RepetitionOnly)
    }
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<Session>, DataError> {
    generate(spec).map(|g| g.sessions)
}

pub fn generate(spec: &CorpusSpec) -> Result<GeneratedCorpus, DataError> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Stream::Corpus);
    let n_bully = spec.n_bully();
    let mut labels: Vec<u8> = (0..spec.n_sessions).map(|i| u8::from(i < n_bully)).collect();
    labels.shuffle(&mut rng);

    let mut sessions = Vec::with_capacity(spec.n_sessions);
    let mut planted = Vec::with_capacity(spec.n_sessions);
    for (i, &label) in labels.iter().enumerate() {
        let run = if label == 1 {
            Some(if rng::bernoulli(&mut rng, spec.single_signature_fraction) {
                if rng.random::<bool>() {
                    RunKind::RepetitionOnly
                } else {
                    RunKind::TimingOnly
                }
            } else {
                RunKind::Burst
            })
        } else if rng::bernoulli(&mut rng, spec.decoy_fraction) {
            Some(RunKind::Plain)
        } else {
            None
        };
        let (session, burst) = session(spec, &mut rng, format!("s{i:05}"), label, run);
        sessions.push(session);
        planted.push(if label == 1 { burst } else { Vec::new() });
    }
    Ok(GeneratedCorpus { sessions, planted })
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [String]) -> &'a str {
    pool.choose(rng).expect("validated non-empty pool")
}

fn round_minutes(t: f64) -> f64 {
    libm::round(t * 100.0) / 100.0
}

fn session(
    spec: &CorpusSpec,
    rng: &mut ChaCha8Rng,
    session_id: String,
    label: u8,
    run: Option<RunKind>,
) -> (Session, Vec<usize>) {
    let n = rng::range_inclusive(rng, spec.comments_per_session[0], spec.comments_per_session[1]);
    let n_users = rng::range_inclusive(rng, spec.users_per_session[0], spec.users_per_session[1]).min(n);
    let mut users: Vec<String> = Vec::with_capacity(n_users);
    while users.len() < n_users {
        let name = format!("user{}", rng.random_range(0..100_000u32));
        if !users.contains(&name) {
            users.push(name);
        }
    }

    // The run never covers the initial post.
    let (run_start, run_len) = match run {
        Some(_) => {
            let len = rng::range_inclusive(rng, spec.burst_len[0], spec.burst_len[1]);
            (rng::range_inclusive(rng, 1, n - len), len)
        }
        None => (0, 0),
    };
    let in_run = |c: usize| run.is_some() && c >= run_start && c < run_start + run_len;

    // Run authors come from a small set of "aggressive" users, never the owner.
    let aggressive: Vec<usize> = if run.is_some() && n_users > 1 {
        let k = rng::range_inclusive(rng, 1, 2.min(n_users - 1));
        let mut others: Vec<usize> = (1..n_users).collect();
        others.shuffle(rng);
        others.truncate(k);
        others.sort_unstable();
        others
    } else {
        vec![0]
    };

    let mut comments = Vec::with_capacity(n);
    let mut used_offensive: Vec<&str> = Vec::new();
    let mut t = 0.0;
    for c in 0..n {
        if c > 0 {
            let short = in_run(c) && c > run_start && run.is_some_and(RunKind::short_gaps);
            let mean = if short { spec.short_gap_minutes } else { spec.long_gap_minutes };
            t = round_minutes(t + rng::exponential(rng, mean));
        }
        let author = if c == 0 {
            0
        } else if in_run(c) {
            *aggressive.choose(rng).expect("non-empty")
        } else {
            rng.random_range(0..n_users)
        };
        let n_words = rng::range_inclusive(rng, spec.words_per_comment[0], spec.words_per_comment[1]);
        let mut words: Vec<&str> = Vec::with_capacity(n_words + 1);
        if let (true, Some(kind)) = (in_run(c), run) {
            let n_off = libm::ceil(n_words as f64 * spec.burst_offensive_fraction) as usize;
            let mut fresh: Vec<&str> = Vec::new();
            for _ in 0..n_off {
                let word = if kind.repeats() && !used_offensive.is_empty() && rng::bernoulli(rng, spec.repeat_prob) {
                    *used_offensive.choose(rng).expect("non-empty")
                } else if kind.repeats() {
                    pick(rng, &spec.offensive_pool)
                } else {
                    // runs without repetition avoid re-using any earlier run word
                    let unused: Vec<&str> = spec
                        .offensive_pool
                        .iter()
                        .map(String::as_str)
                        .filter(|w| !used_offensive.contains(w) && !fresh.contains(w))
                        .collect();
                    match unused.choose(rng) {
                        Some(w) => *w,
                        None => pick(rng, &spec.offensive_pool),
                    }
                };
                fresh.push(word);
                words.push(word);
            }
            for _ in n_off..n_words {
                words.push(pick(rng, &spec.benign_pool));
            }
            words.shuffle(rng);
            used_offensive.extend(fresh);
        } else {
            for _ in 0..n_words {
                words.push(pick(rng, &spec.benign_pool));
            }
            if rng::bernoulli(rng, spec.stray_offensive_prob) {
                let pos = rng.random_range(0..words.len());
                words[pos] = pick(rng, &spec.offensive_pool);
            }
        }
        let mut text = words.join(" ");
        if n_users > 1 && rng::bernoulli(rng, spec.mention_prob) {
            let mut target = rng.random_range(0..n_users);
            if target == author {
                target = (target + 1) % n_users;
            }
            text.push_str(" @");
            text.push_str(&users[target]);
        }
        comments.push(Comment { user: users[author].clone(), t, text });
    }

    let mut histories = BTreeMap::new();
    for (u, name) in users.iter().enumerate() {
        let n_words = rng::range_inclusive(rng, spec.history_words[0], spec.history_words[1]);
        let offensive_share = if run.is_some() && aggressive.contains(&u) && u != 0 {
            spec.bully_history_offensive_fraction
        } else {
            0.0
        };
        let n_off = libm::ceil(n_words as f64 * offensive_share) as usize;
        let mut words: Vec<&str> = (0..n_words)
            .map(|i| if i < n_off { pick(rng, &spec.offensive_pool) } else { pick(rng, &spec.benign_pool) })
            .collect();
        words.shuffle(rng);
        histories.insert(name.clone(), words.join(" "));
    }

    let burst = (run_start..run_start + run_len).collect();
    (Session { session_id, label, comments, histories }, burst)
}
