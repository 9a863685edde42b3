use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::session::Session;
use crate::error::DataError;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
const FIRST_USER: TokenId = 2;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token table with a reserved block of anonymized username tokens.
///
/// Layout: `0` is PAD, `1` is UNK, then `user_slots` tokens `USER_0 ..`, then
/// the word tokens. Word tokens are always lowercase while username tokens
/// are uppercase, so the two never collide.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, TokenId>,
    user_slots: usize,
}

impl Vocabulary {
    /// Empty vocabulary holding only the special and username tokens.
    pub fn new(user_slots: usize) -> Self {
        let mut v = Self { tokens: Vec::new(), index: BTreeMap::new(), user_slots };
        v.insert(PAD_TOKEN.into());
        v.insert(UNK_TOKEN.into());
        for k in 0..user_slots {
            v.insert(user_token_name(k));
        }
        v
    }

    /// Builds a vocabulary from every comment and history word of `sessions`,
    /// in first-seen order.
    pub fn build(sessions: &[Session], user_slots: usize) -> Self {
        let mut v = Self::new(user_slots);
        for s in sessions {
            for c in &s.comments {
                v.add_words(&c.text);
            }
            for text in s.histories.values() {
                v.add_words(text);
            }
        }
        v
    }

    /// Restores a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, DataError> {
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN) || tokens.get(1).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(DataError::Format("vocabulary must start with <pad>, <unk>".into()));
        }
        let user_slots = tokens[2..].iter().enumerate().take_while(|(k, t)| **t == user_token_name(*k)).count();
        let mut v = Self { tokens: Vec::with_capacity(tokens.len()), index: BTreeMap::new(), user_slots };
        for t in tokens {
            if v.index.contains_key(&t) {
                return Err(DataError::Format(format!("duplicate vocabulary token {t:?}")));
            }
            v.insert(t);
        }
        Ok(v)
    }

    fn insert(&mut self, token: String) -> TokenId {
        let id = self.tokens.len() as TokenId;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    fn add_words(&mut self, text: &str) {
        for raw in text.split_whitespace() {
            if let Some(w) = normalize_word(raw) {
                if !self.index.contains_key(&w) {
                    self.insert(w);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn user_slots(&self) -> usize {
        self.user_slots
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Id of an already-normalized token, if present.
    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn word_id(&self, word: &str) -> TokenId {
        self.get(word).unwrap_or(UNK)
    }

    pub fn user_token(&self, slot: usize) -> Option<TokenId> {
        (slot < self.user_slots).then(|| FIRST_USER + slot as TokenId)
    }

    pub fn is_user_token(&self, id: TokenId) -> bool {
        id >= FIRST_USER && ((id - FIRST_USER) as usize) < self.user_slots
    }
}

pub fn user_token_name(slot: usize) -> String {
    format!("USER_{slot}")
}

/// Lowercases and strips non-alphanumeric characters from both token edges.
pub fn normalize_word(raw: &str) -> Option<String> {
    let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
    (!trimmed.is_empty()).then(|| trimmed.to_lowercase())
}

/// Per-session anonymization: user id to username slot.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UserIndex {
    slots: BTreeMap<String, usize>,
}

impl UserIndex {
    /// Numbers the session's comment authors by order of first appearance.
    /// Relabeling the id strings of a session therefore leaves every token
    /// unchanged.
    pub fn for_session(session: &Session) -> Self {
        let mut slots = BTreeMap::new();
        for c in &session.comments {
            let next = slots.len();
            slots.entry(c.user.clone()).or_insert(next);
        }
        Self { slots }
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        Self { slots: pairs.into_iter().map(|(u, k)| (u.into(), k)).collect() }
    }

    pub fn slot(&self, user: &str) -> Option<usize> {
        self.slots.get(user).copied()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

fn user_id_or_unk(vocab: &Vocabulary, users: &UserIndex, user: &str) -> TokenId {
    users.slot(user).and_then(|k| vocab.user_token(k)).unwrap_or(UNK)
}

/// Maps words to ids, replacing `@user` mentions of known users with their
/// username token.
fn push_words(text: &str, users: &UserIndex, vocab: &Vocabulary, out: &mut Vec<TokenId>) {
    for raw in text.split_whitespace() {
        if let Some(rest) = raw.strip_prefix('@') {
            let name = rest.trim_end_matches(|c: char| !(c.is_alphanumeric() || c == '_'));
            if let Some(id) = users.slot(name).and_then(|k| vocab.user_token(k)) {
                out.push(id);
                continue;
            }
        }
        if let Some(w) = normalize_word(raw) {
            out.push(vocab.word_id(&w));
        }
    }
}

/// Tokenizes one comment: the author's username token, then the words.
/// The result holds at most `max_len` ids.
pub fn tokenize(text: &str, author: &str, users: &UserIndex, vocab: &Vocabulary, max_len: usize) -> Vec<TokenId> {
    let mut out = Vec::new();
    out.push(user_id_or_unk(vocab, users, author));
    push_words(text, users, vocab, &mut out);
    out.truncate(max_len);
    out
}

/// Tokenizes a history paragraph (no author prefix), truncated to `max_len`.
pub fn tokenize_history(text: &str, users: &UserIndex, vocab: &Vocabulary, max_len: usize) -> Vec<TokenId> {
    let mut out = Vec::new();
    push_words(text, users, vocab, &mut out);
    out.truncate(max_len);
    out
}
