//! Strong solver for Quixo on 3×3, 4×4 and 5×5 boards.
//!
//! States are packed into a `u64` ([`board::QState`]), grouped into classes
//! by their X and O tile counts, and numbered densely inside each class
//! ([`rank`]). The [`solver`] walks the classes from full boards down to
//! the empty board, storing two-bit outcomes and optional step counts per
//! class ([`store`]). [`db`], [`analysis`] and [`play`] read a finished
//! database; [`oracle`] is an independent explicit-graph solver used to
//! cross-check results.

pub mod analysis;
pub mod board;
pub mod db;
pub mod error;
pub mod oracle;
pub mod play;
pub mod rank;
pub mod solver;
pub mod store;

pub use board::{Board, InsertEnd, Move, Outcome, QState, Symbol, Symmetry};
pub use db::Database;
pub use error::{Error, Result};
pub use rank::{ClassId, RankTables};
pub use solver::{solve, SolveConfig, SolveSummary};
pub use store::{ClassStore, Counts, Manifest};
