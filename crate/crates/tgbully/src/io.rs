//! Session JSONL files and word-vector files.

use std::fs;
use std::io::Write;
use std::path::Path;

use tgbully_core::data::embedding::PretrainedVectors;
use tgbully_core::data::session::Session;
use tgbully_core::DataError;

use crate::Error;

/// Parses one JSON session per non-blank line and validates each.
pub fn parse_sessions(text: &str) -> Result<Vec<Session>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let session: Session =
            serde_json::from_str(line).map_err(|e| DataError::Parse { line: i + 1, message: e.to_string() })?;
        if let Err(e) = session.validate() {
            let reason = match e {
                DataError::Invalid { reason, .. } => reason,
                other => other.to_string(),
            };
            return Err(DataError::InvalidAt { line: i + 1, session_id: session.session_id, reason });
        }
        out.push(session);
    }
    Ok(out)
}

pub fn load_sessions(path: &Path) -> Result<Vec<Session>, Error> {
    let text = read(path)?;
    parse_sessions(&text).map_err(|e| Error::data(path, e))
}

/// One compact JSON object per line, newline-terminated.
pub fn sessions_to_string(sessions: &[Session]) -> String {
    let mut out = String::new();
    for s in sessions {
        out.push_str(&serde_json::to_string(s).expect("sessions always serialize"));
        out.push('\n');
    }
    out
}

pub fn save_sessions(path: &Path, sessions: &[Session]) -> Result<(), Error> {
    write(path, sessions_to_string(sessions).as_bytes())
}

pub fn load_embeddings(path: &Path) -> Result<PretrainedVectors, Error> {
    let text = read(path)?;
    PretrainedVectors::parse(&text).map_err(|e| Error::data(path, e))
}

pub(crate) fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let io = |e| Error::Io { path: path.to_path_buf(), source: e };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}
