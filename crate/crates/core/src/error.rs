use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported size {0} (expected 3, 4 or 5)")]
    UnsupportedSize(usize),

    #[error("malformed state {text:?}: {reason}")]
    Parse { text: String, reason: String },

    #[error("state is terminal and has no moves")]
    TerminalState,

    #[error("illegal move {0}")]
    IllegalMove(String),

    #[error("index {index} out of range for class ({x},{o}) with {size} entries")]
    IndexOutOfRange {
        x: u32,
        o: u32,
        index: u64,
        size: u64,
    },

    #[error("entry {0} is a sealed terminal value")]
    Sealed(u64),

    #[error("class ({x},{o}) is missing from {dir}")]
    MissingClass { x: u32, o: u32, dir: PathBuf },

    #[error("class ({x},{o}) still holds transient WinOrDraw values")]
    IncompleteClass { x: u32, o: u32 },

    #[error("database in {0} is incomplete")]
    IncompleteDatabase(PathBuf),

    #[error("manifest not found in {0}")]
    ManifestNotFound(PathBuf),

    #[error("corrupt class file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("database has no step values")]
    StepsMissing,

    #[error("policy {policy} does not apply to a {outcome} state")]
    PolicyInapplicable {
        policy: &'static str,
        outcome: &'static str,
    },

    #[error("step count exceeds the storable maximum of {0}")]
    StepOverflow(u8),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
