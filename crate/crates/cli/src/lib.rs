//! Shared pieces of the `quixo` command line tool: JSON views of
//! evaluations and the HTTP service.

pub mod service;

use quixo_core::board::{InsertEnd, Move, Outcome, QState, Symbol};
use quixo_core::play::{self, Evaluation};
use quixo_core::{Board, Database};
use serde::Serialize;

/// A move as shown to clients, with its grid position spelled out.
#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct MoveView {
    pub cell: u8,
    pub row: usize,
    pub col: usize,
    pub insert_end: InsertEnd,
}

impl MoveView {
    pub fn new(board: &Board, m: Move) -> MoveView {
        let n = board.n();
        MoveView {
            cell: m.cell,
            row: m.cell as usize / n,
            col: m.cell as usize % n,
            insert_end: m.insert_end,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct ChildView {
    #[serde(rename = "move")]
    pub mv: MoveView,
    /// Board after the move with the real symbols and the next player.
    pub board_after: String,
    /// Value of the move for the player making it.
    pub outcome: Outcome,
    pub step: Option<u8>,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct EvalView {
    pub size: usize,
    pub state: String,
    pub active: char,
    pub outcome: Outcome,
    pub step: Option<u8>,
    pub terminal: bool,
    pub moves: Vec<ChildView>,
}

/// A parsed position: the normalized state plus who is really to move.
#[derive(Clone, Copy, Debug)]
pub struct Position {
    pub state: QState,
    pub active: Symbol,
}

impl Position {
    pub fn parse(board: &Board, text: &str) -> quixo_core::Result<Position> {
        let (raw, active) = board.parse_raw(text)?;
        let state = match active {
            Symbol::X => raw,
            Symbol::O => raw.swap(),
        };
        Ok(Position { state, active })
    }

    pub fn render(&self, board: &Board) -> String {
        let raw = match self.active {
            Symbol::X => self.state,
            Symbol::O => self.state.swap(),
        };
        board.render_as(raw, self.active)
    }

    /// The position after a move, given the normalized child.
    pub fn after(&self, child: QState) -> Position {
        Position {
            state: child,
            active: self.active.other(),
        }
    }
}

pub fn eval_view(db: &Database, pos: Position) -> quixo_core::Result<(Evaluation, EvalView)> {
    let board = db.board();
    let eval = play::evaluate(db, pos.state)?;
    let moves = eval
        .moves
        .iter()
        .map(|m| ChildView {
            mv: MoveView::new(board, m.mv),
            board_after: pos.after(m.child).render(board),
            outcome: m.outcome,
            step: m.step,
        })
        .collect();
    let view = EvalView {
        size: board.n(),
        state: pos.render(board),
        active: pos.active.as_char(),
        outcome: eval.outcome,
        step: eval.step,
        terminal: eval.terminal,
        moves,
    };
    Ok((eval, view))
}

/// "Win in 7", "Loss in 22", "Draw".
pub fn describe(outcome: Outcome, step: Option<u8>) -> String {
    match (outcome, step) {
        (Outcome::Draw, _) => "Draw".to_string(),
        (o, Some(s)) => format!("{}{} in {s}", o.name()[..1].to_uppercase(), &o.name()[1..]),
        (o, None) => format!("{}{}", o.name()[..1].to_uppercase(), &o.name()[1..]),
    }
}

/// Formats a count with thousands separators.
pub fn grouped(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
