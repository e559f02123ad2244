use std::sync::OnceLock;

use quixo_core::play::{self, GameStatus, Policy};
use quixo_core::rank::RankTables;
use quixo_core::{analysis, solve, Database, Outcome, QState, SolveConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIG_LOSS_1: &str = "XOOO/OOXO/OXXO/OOOX X";
const FIG_LOSS_22: &str = "..OX/..../XOO./.... X";
const FIG_DRAW: &str = ".XX./O.OX/OXXX/OXXO X";

fn db4() -> &'static Database {
    static DB: OnceLock<(tempfile::TempDir, Database)> = OnceLock::new();
    &DB.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        solve(&SolveConfig::new(4, dir.path())).unwrap();
        let db = Database::open_preloaded(dir.path()).unwrap();
        (dir, db)
    })
    .1
}

fn random_state(rng: &mut impl Rng) -> QState {
    let (mut x, mut o) = (0u64, 0u64);
    for bit in 0..16 {
        match rng.gen_range(0..3) {
            1 => x |= 1 << bit,
            2 => o |= 1 << bit,
            _ => {}
        }
    }
    QState(x << 32 | o)
}

#[test]
fn sampled_decided_states_play_out_in_exactly_their_step() {
    let db = db4();
    let b = db.board();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut decided = 0;
    while decided < 400 {
        let s = random_state(&mut rng);
        let v = db.lookup(s).unwrap();
        let Some(step) = v.step else { continue };
        decided += 1;
        let mut cur = s;
        let mut moves = 0;
        while !b.is_terminal(cur) {
            let eval = play::evaluate(db, cur).unwrap();
            let mv = play::choose(&eval, Policy::for_outcome(eval.outcome), &mut rng).unwrap();
            cur = b.entry(mv).unwrap().child(cur);
            moves += 1;
            assert!(moves <= 30, "{}", b.render(s));
        }
        assert_eq!(moves, u32::from(step), "{}", b.render(s));
        if step > 0 {
            assert_eq!(step % 2 == 1, v.outcome == Outcome::Win);
        }
    }
}

#[test]
fn figure_states() {
    let db = db4();
    let b = db.board();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let s = b.parse(FIG_LOSS_1).unwrap();
    let e = play::evaluate(db, s).unwrap();
    assert_eq!((e.outcome, e.step), (Outcome::Loss, Some(1)));
    assert_eq!(e.moves.len(), 4);
    for m in &e.moves {
        // Each reply hands the opponent an immediate line.
        assert_eq!(m.outcome, Outcome::Loss);
        assert_eq!(m.step, Some(0));
    }

    let s = b.parse(FIG_LOSS_22).unwrap();
    let v = db.lookup(s).unwrap();
    assert_eq!((v.outcome, v.step), (Outcome::Loss, Some(22)));

    let s = b.parse(FIG_DRAW).unwrap();
    let e = play::evaluate(db, s).unwrap();
    assert_eq!(e.outcome, Outcome::Draw);
    let mv = play::choose(&e, Policy::HoldDraw, &mut rng).unwrap();
    let child = b.entry(mv).unwrap().child(s);
    assert_eq!(db.lookup(child).unwrap().outcome, Outcome::Draw);
    assert!(e.moves.iter().all(|m| m.outcome != Outcome::Win));
}

#[test]
fn drawn_positions_stay_drawn_under_optimal_play() {
    let db = db4();
    let b = db.board();
    let start = b.parse(FIG_DRAW).unwrap();
    let game = play::selfplay(db, start, 40).unwrap();
    assert_eq!(game.status, GameStatus::DrawCycle);
    assert_eq!(game.moves.len(), 40);
    for m in &game.moves {
        let (raw, _) = b.parse_raw(&m.board_after).unwrap();
        assert!(!b.is_terminal(raw) && !b.is_terminal(raw.swap()));
    }
}

#[test]
fn initial_state_and_first_move() {
    let db = db4();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let e = play::evaluate(db, QState::EMPTY).unwrap();
    assert_eq!((e.outcome, e.step), (Outcome::Win, Some(21)));
    let mv = play::choose(&e, Policy::FastestWin, &mut rng).unwrap();
    let chosen = e.moves.iter().find(|m| m.mv == mv).unwrap();
    assert_eq!(chosen.step, Some(20));
    assert_eq!(db.lookup(chosen.child).unwrap().outcome, Outcome::Loss);

    let game = play::selfplay(db, QState::EMPTY, 200).unwrap();
    assert_eq!(game.status, GameStatus::XWins);
    assert_eq!(game.moves.len(), 21);
}

#[test]
fn fewest_tile_decided_states() {
    let db = db4();
    let found = analysis::find_extremal(db, 50, |_, v| v.outcome != Outcome::Draw).unwrap();
    let t = found.tiles.unwrap();
    assert!(found.states.iter().all(|s| s.tiles() == t));
    assert!(found.total >= found.states.len() as u64);
    // Every state with fewer tiles is a draw.
    let tables = RankTables::for_size(4).unwrap();
    for c in tables.classes().filter(|c| c.x + c.o < t) {
        let store = db.class(c).unwrap();
        assert!((0..store.len()).all(|i| store.outcome(i) == Outcome::Draw));
    }
}
