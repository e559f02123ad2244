//! Move selection and self-play from a solved database.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::board::{InsertEnd, Move, Outcome, QState, Symbol};
use crate::db::Database;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct MoveEval {
    #[serde(rename = "move")]
    pub mv: Move,
    /// Position after the move, normalized so the opponent is X.
    pub child: QState,
    /// Child value seen from the player making the move.
    pub outcome: Outcome,
    /// Step stored for the child.
    pub step: Option<u8>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Evaluation {
    pub state: QState,
    pub outcome: Outcome,
    pub step: Option<u8>,
    pub terminal: bool,
    /// Legal moves in canonical order; empty for finished games.
    pub moves: Vec<MoveEval>,
}

pub fn evaluate(db: &Database, s: QState) -> Result<Evaluation> {
    let board = db.board();
    let v = db.lookup(s)?;
    let terminal = board.is_terminal(s);
    let mut moves = Vec::new();
    if !terminal {
        for e in board.legal_entries(s) {
            let child = e.child(s);
            let cv = db.lookup(child)?;
            moves.push(MoveEval {
                mv: e.mv,
                child,
                outcome: cv.outcome.flip(),
                step: cv.step,
            });
        }
        moves.sort_by_key(|m| m.mv);
    }
    Ok(Evaluation {
        state: s,
        outcome: v.outcome,
        step: v.step,
        terminal,
        moves,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// From a Win state, the winning move with the shortest win.
    FastestWin,
    /// From a Loss state, the move that delays the loss longest.
    StubbornLoss,
    /// From a Draw state, a move that keeps the draw.
    HoldDraw,
    /// From a Win state, any winning move, uniformly at random.
    RandomWin,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::FastestWin,
        Policy::StubbornLoss,
        Policy::HoldDraw,
        Policy::RandomWin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::FastestWin => "fastest_win",
            Policy::StubbornLoss => "stubborn_loss",
            Policy::HoldDraw => "hold_draw",
            Policy::RandomWin => "random_win",
        }
    }

    pub fn parse(text: &str) -> Option<Policy> {
        Policy::ALL.into_iter().find(|p| p.name() == text)
    }

    /// The policy optimal play uses for a state with this outcome.
    pub fn for_outcome(o: Outcome) -> Policy {
        match o {
            Outcome::Win => Policy::FastestWin,
            Outcome::Loss => Policy::StubbornLoss,
            _ => Policy::HoldDraw,
        }
    }

    fn applies_to(self) -> Outcome {
        match self {
            Policy::FastestWin | Policy::RandomWin => Outcome::Win,
            Policy::StubbornLoss => Outcome::Loss,
            Policy::HoldDraw => Outcome::Draw,
        }
    }
}

/// Picks a move from an evaluation. Ties go to the earliest move in
/// canonical order; `rng` is only used by [`Policy::RandomWin`].
pub fn choose<R: Rng + ?Sized>(eval: &Evaluation, policy: Policy, rng: &mut R) -> Result<Move> {
    if eval.terminal {
        return Err(Error::TerminalState);
    }
    if eval.outcome != policy.applies_to() {
        return Err(Error::PolicyInapplicable {
            policy: policy.name(),
            outcome: eval.outcome.name(),
        });
    }
    let step = |m: &MoveEval| m.step.unwrap_or(0);
    let pick = match policy {
        Policy::FastestWin => eval
            .moves
            .iter()
            .filter(|m| m.outcome == Outcome::Win)
            .min_by_key(|m| step(m)),
        Policy::StubbornLoss => eval.moves.iter().rev().max_by_key(|m| step(m)),
        Policy::HoldDraw => eval.moves.iter().find(|m| m.outcome == Outcome::Draw),
        Policy::RandomWin => {
            let wins: Vec<&MoveEval> = eval
                .moves
                .iter()
                .filter(|m| m.outcome == Outcome::Win)
                .collect();
            wins.choose(rng).copied()
        }
    };
    pick.map(|m| m.mv).ok_or_else(|| {
        Error::Config(format!(
            "no move matches {} although the state is {}",
            policy.name(),
            eval.outcome
        ))
    })
}

pub fn best_move<R: Rng + ?Sized>(
    db: &Database,
    s: QState,
    policy: Policy,
    rng: &mut R,
) -> Result<Move> {
    choose(&evaluate(db, s)?, policy, rng)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct TranscriptMove {
    pub move_index: usize,
    pub mover: char,
    pub cell: u8,
    pub insert_end: InsertEnd,
    /// Board after the move, with the next player to move.
    pub board_after: String,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GameStatus {
    XWins,
    OWins,
    /// Stopped at the move cap without a winner.
    DrawCycle,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Transcript {
    pub status: GameStatus,
    pub moves: Vec<TranscriptMove>,
}

/// Plays optimally from `start` (X to move) for both sides: fastest win,
/// longest loss, or holding a draw. Stops after `max_moves` moves.
pub fn selfplay(db: &Database, start: QState, max_moves: usize) -> Result<Transcript> {
    let board = db.board();
    // Optimal play never picks at random; the generator only fills the slot.
    let mut rng = rand::rngs::StdRng::seed_from_u64(0);
    let mut state = start;
    let mut active = Symbol::X;
    let mut moves = Vec::new();
    loop {
        if let Some(t) = board.terminal_outcome(state) {
            let winner = if t == Outcome::Win {
                active
            } else {
                active.other()
            };
            let status = match winner {
                Symbol::X => GameStatus::XWins,
                Symbol::O => GameStatus::OWins,
            };
            return Ok(Transcript { status, moves });
        }
        if moves.len() >= max_moves {
            return Ok(Transcript {
                status: GameStatus::DrawCycle,
                moves,
            });
        }
        let eval = evaluate(db, state)?;
        let mv = choose(&eval, Policy::for_outcome(eval.outcome), &mut rng)?;
        let entry = board.entry(mv).expect("chosen from the legal list");
        state = entry.child(state);
        let mover = active;
        active = active.other();
        let actual = match active {
            Symbol::X => state,
            Symbol::O => state.swap(),
        };
        moves.push(TranscriptMove {
            move_index: moves.len() + 1,
            mover: mover.as_char(),
            cell: mv.cell,
            insert_end: mv.insert_end,
            board_after: board.render_as(actual, active),
        });
    }
}
