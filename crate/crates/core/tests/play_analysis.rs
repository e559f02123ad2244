use std::path::Path;
use std::sync::OnceLock;

use quixo_core::analysis::{self, reachable, Reachability};
use quixo_core::oracle::{self, ExplicitGraph};
use quixo_core::play::{self, GameStatus, Policy};
use quixo_core::rank::{ClassId, RankTables};
use quixo_core::store::{class_path, ClassStore};
use quixo_core::{solve, Board, Database, Error, Outcome, QState, SolveConfig, Symbol};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn db3() -> &'static Database {
    static DB: OnceLock<(tempfile::TempDir, Database)> = OnceLock::new();
    &DB.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        solve(&SolveConfig::new(3, dir.path())).unwrap();
        let db = Database::open_preloaded(dir.path()).unwrap();
        (dir, db)
    })
    .1
}

fn all_states(n: usize) -> impl Iterator<Item = QState> {
    let t = RankTables::for_size(n).unwrap();
    t.classes()
        .flat_map(move |c| (0..t.class_size(c)).map(move |i| t.index_to_state(c, i).unwrap()))
}

/// Plays both sides optimally and returns the number of moves to the end.
fn optimal_length(db: &Database, mut s: QState, cap: usize) -> Option<usize> {
    let b = db.board();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for moves in 0..=cap {
        if b.is_terminal(s) {
            return Some(moves);
        }
        let eval = play::evaluate(db, s).unwrap();
        let mv = play::choose(&eval, Policy::for_outcome(eval.outcome), &mut rng).unwrap();
        s = b.entry(mv).unwrap().child(s);
    }
    None
}

#[test]
fn optimal_play_takes_exactly_the_stored_steps() {
    let db = db3();
    for s in all_states(3) {
        let v = db.lookup(s).unwrap();
        let step = v.step.expect("no draws on 3x3") as usize;
        assert_eq!(
            optimal_length(db, s, 50),
            Some(step),
            "{}",
            db.board().render(s)
        );
    }
}

#[test]
fn evaluation_is_consistent_with_its_children() {
    let db = db3();
    for s in all_states(3) {
        let e = play::evaluate(db, s).unwrap();
        if e.terminal {
            assert!(e.moves.is_empty());
            assert_eq!(e.step, Some(0));
            continue;
        }
        let any_win = e.moves.iter().any(|m| m.outcome == Outcome::Win);
        let all_loss = e.moves.iter().all(|m| m.outcome == Outcome::Loss);
        let expected = if any_win {
            Outcome::Win
        } else if all_loss {
            Outcome::Loss
        } else {
            Outcome::Draw
        };
        assert_eq!(e.outcome, expected);
        let moves: Vec<_> = e.moves.iter().map(|m| m.mv).collect();
        let mut sorted = moves.clone();
        sorted.sort();
        assert_eq!(moves, sorted);
    }
}

#[test]
fn policies_pick_the_documented_moves() {
    let db = db3();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let e = play::evaluate(db, QState::EMPTY).unwrap();
    let fastest = play::choose(&e, Policy::FastestWin, &mut rng).unwrap();
    let best = e.moves.iter().find(|m| m.mv == fastest).unwrap();
    assert_eq!(best.outcome, Outcome::Win);
    assert_eq!(best.step, Some(6));
    let first_best = e
        .moves
        .iter()
        .find(|m| m.outcome == Outcome::Win && m.step == Some(6))
        .unwrap();
    assert_eq!(first_best.mv, fastest);

    for _ in 0..20 {
        let mv = play::choose(&e, Policy::RandomWin, &mut rng).unwrap();
        let m = e.moves.iter().find(|m| m.mv == mv).unwrap();
        assert_eq!(m.outcome, Outcome::Win);
    }
    assert!(matches!(
        play::choose(&e, Policy::StubbornLoss, &mut rng),
        Err(Error::PolicyInapplicable { .. })
    ));
    assert!(matches!(
        play::choose(&e, Policy::HoldDraw, &mut rng),
        Err(Error::PolicyInapplicable { .. })
    ));

    let b = db.board();
    let terminal = b.parse("XXX/O.O/... X").unwrap();
    assert!(matches!(
        play::best_move(db, terminal, Policy::FastestWin, &mut rng),
        Err(Error::TerminalState)
    ));

    // A step-0 Loss child is always taken by the fastest win.
    let one_move = b.parse("XX./OO./... X").unwrap();
    let mv = play::best_move(db, one_move, Policy::FastestWin, &mut rng).unwrap();
    let child = b.entry(mv).unwrap().child(one_move);
    assert_eq!(b.terminal_outcome(child), Some(Outcome::Loss));
}

#[test]
fn selfplay_on_three_by_three() {
    let db = db3();
    let game = play::selfplay(db, QState::EMPTY, 100).unwrap();
    assert_eq!(game.status, GameStatus::XWins);
    assert_eq!(game.moves.len(), 7);
    for (i, m) in game.moves.iter().enumerate() {
        assert_eq!(m.move_index, i + 1);
        assert_eq!(m.mover, if i % 2 == 0 { 'X' } else { 'O' });
    }
    let last = &game.moves.last().unwrap().board_after;
    let (raw, active) = db.board().parse_raw(last).unwrap();
    assert_eq!(active, Symbol::O);
    assert!(db.board().has_line(raw, Symbol::X));

    let json = serde_json::to_value(&game.moves).unwrap();
    let first = &json[0];
    for key in ["move_index", "mover", "cell", "insert_end", "board_after"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }

    let capped = play::selfplay(db, QState::EMPTY, 3).unwrap();
    assert_eq!(capped.status, GameStatus::DrawCycle);
    assert_eq!(capped.moves.len(), 3);
}

#[test]
fn histogram_matches_the_reference_solver() {
    let db = db3();
    let hist = analysis::steps_histogram(db).unwrap();
    let graph = ExplicitGraph::build(3, &oracle::all_boards(3));
    let sol = graph.solve();
    let top = sol.step.iter().flatten().max().copied().unwrap() as usize;
    assert_eq!(hist.len(), top + 2);
    for row in &hist {
        let count = |o: Outcome| {
            (0..graph.len())
                .filter(|&i| sol.outcome[i] == o && sol.step[i] == Some(u32::from(row.step)))
                .count() as u64
        };
        assert_eq!(row.win, count(Outcome::Win), "step {}", row.step);
        assert_eq!(row.loss, count(Outcome::Loss), "step {}", row.step);
    }
}

#[test]
fn tally_and_csv() {
    let db = db3();
    let tally = analysis::tally(db).unwrap();
    assert_eq!(tally.totals.total(), 19_683);
    assert_eq!(tally.totals.draw, 0);
    let csv = tally.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x,o,win,loss,draw,win_pct,loss_pct,draw_pct"
    );
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 8);
        let pct: f64 = f[5..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((pct - 100.0).abs() < 0.01, "{line}");
    }
}

#[test]
fn reachability_is_closed_and_persists() {
    let b = Board::for_size(3).unwrap();
    let r = reachable(3).unwrap();
    assert!(r.contains(QState::EMPTY));
    let mut count = 0;
    for s in all_states(3) {
        if !r.contains(s) {
            continue;
        }
        count += 1;
        if !b.is_terminal(s) {
            for c in b.children(s).unwrap() {
                assert!(r.contains(c));
            }
        }
    }
    assert_eq!(count, r.count);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reach.bin");
    r.save(&path).unwrap();
    assert_eq!(Reachability::load(&path).unwrap(), r);
    assert!(reachable(5).is_err());
}

#[test]
fn extremal_states_have_the_fewest_tiles() {
    let db = db3();
    let found = analysis::find_extremal(db, 1000, |_, v| v.outcome == Outcome::Loss).unwrap();
    let brute = all_states(3)
        .filter(|&s| db.lookup(s).unwrap().outcome == Outcome::Loss)
        .map(|s| s.tiles())
        .min();
    assert_eq!(found.tiles, brute);
    let expected = all_states(3)
        .filter(|&s| s.tiles() == brute.unwrap() && db.lookup(s).unwrap().outcome == Outcome::Loss)
        .count() as u64;
    assert_eq!(found.total, expected);
    assert!(found.states.iter().all(|s| s.tiles() == brute.unwrap()));

    let none = analysis::find_extremal(db, 10, |_, v| v.outcome == Outcome::Draw).unwrap();
    assert_eq!(none.tiles, None);
}

fn copy_db(from: &Path, to: &Path) {
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
    }
}

#[test]
fn verify_accepts_the_solve_and_catches_tampering() {
    let db = db3();
    let report = analysis::verify(db).unwrap();
    assert!(report.ok());
    assert_eq!(report.checked, 19_683);

    let dir = tempfile::tempdir().unwrap();
    copy_db(db.dir(), dir.path());
    let c = ClassId::new(3, 3);
    let path = class_path(dir.path(), c);
    let store = ClassStore::load(&path).unwrap();
    let t = RankTables::for_size(3).unwrap();
    let i = (0..store.len())
        .find(|&i| !db.board().is_terminal(t.index_to_state(c, i).unwrap()))
        .unwrap();
    let flipped = store.outcome(i).flip();
    store.store_outcome(i, flipped);
    store.save(&path).unwrap();
    let tampered = Database::open_preloaded(dir.path()).unwrap();
    let report = analysis::verify(&tampered).unwrap();
    assert!(!report.ok());
    assert!(!report.examples.is_empty());
}
