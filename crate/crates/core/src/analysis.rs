//! Aggregates and audits over a solved database.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering::Relaxed};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::board::{Board, Outcome, QState};
use crate::db::{Database, Value};
use crate::error::{Error, Result};
use crate::oracle;
use crate::rank::{ClassId, RankTables};
use crate::store::{ClassStore, Counts, NO_STEP};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ClassTally {
    pub class: ClassId,
    pub counts: Counts,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tally {
    pub n: usize,
    pub classes: Vec<ClassTally>,
    pub totals: Counts,
}

impl Tally {
    /// One row per class: `x,o,win,loss,draw,win_pct,loss_pct,draw_pct`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,o,win,loss,draw,win_pct,loss_pct,draw_pct\n");
        for t in &self.classes {
            let c = t.counts;
            let total = c.total().max(1) as f64;
            let pct = |v: u64| 100.0 * v as f64 / total;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4},{:.4},{:.4}",
                t.class.x,
                t.class.o,
                c.win,
                c.loss,
                c.draw,
                pct(c.win),
                pct(c.loss),
                pct(c.draw)
            );
        }
        out
    }
}

fn require_complete(db: &Database) -> Result<()> {
    if db.manifest().complete {
        Ok(())
    } else {
        Err(Error::IncompleteDatabase(db.dir().to_path_buf()))
    }
}

/// Recounts every class file.
pub fn tally(db: &Database) -> Result<Tally> {
    require_complete(db)?;
    let mut classes = Vec::new();
    let mut totals = Counts::default();
    for c in db.class_ids() {
        let counts = db.class(c)?.counts();
        totals.add(counts);
        classes.push(ClassTally { class: c, counts });
    }
    Ok(Tally {
        n: db.n(),
        classes,
        totals,
    })
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct StepRow {
    pub step: u8,
    pub win: u64,
    pub loss: u64,
}

/// Win and Loss counts per step, from 0 up to one past the largest step.
pub fn steps_histogram(db: &Database) -> Result<Vec<StepRow>> {
    require_complete(db)?;
    if !db.has_steps() {
        return Err(Error::StepsMissing);
    }
    let mut win = [0u64; 256];
    let mut loss = [0u64; 256];
    for c in db.class_ids() {
        let store = db.class(c)?;
        for i in 0..store.len() {
            let step = store.step(i) as usize;
            match store.outcome(i) {
                Outcome::Win => win[step] += 1,
                Outcome::Loss => loss[step] += 1,
                _ => {}
            }
        }
    }
    let top = (0..NO_STEP as usize)
        .rev()
        .find(|&s| win[s] + loss[s] > 0)
        .map_or(0, |s| s + 1);
    Ok((0..=top)
        .map(|s| StepRow {
            step: s as u8,
            win: win[s],
            loss: loss[s],
        })
        .collect())
}

const REACH_MAGIC: &[u8; 4] = b"QXRB";

/// Positions reachable from the empty board, as a bitmap over the global
/// state numbering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reachability {
    pub n: usize,
    pub count: u64,
    bits: Vec<u64>,
}

impl Reachability {
    pub fn contains(&self, s: QState) -> bool {
        let g = RankTables::for_size(self.n)
            .expect("size checked")
            .global_index(s);
        self.bits[(g / 64) as usize] >> (g % 64) & 1 == 1
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(16 + self.bits.len() * 8);
        out.extend_from_slice(REACH_MAGIC);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        for w in &self.bits {
            out.extend_from_slice(&w.to_le_bytes());
        }
        let tmp = path.with_extension("tmp");
        std::fs::File::create(&tmp)?.write_all(&out)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Reachability> {
        let mut raw = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut raw)?;
        let corrupt = |reason: &str| Error::Corrupt {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        if raw.len() < 16 || &raw[..4] != REACH_MAGIC {
            return Err(corrupt("not a reachability bitmap"));
        }
        let n = u32::from_le_bytes(raw[4..8].try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(raw[8..16].try_into().expect("8 bytes"));
        let tables = RankTables::for_size(n)?;
        let words = tables.total_states().div_ceil(64) as usize;
        if raw.len() != 16 + words * 8 {
            return Err(corrupt("wrong length"));
        }
        let bits: Vec<u64> = raw[16..]
            .chunks_exact(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        if bits.iter().map(|w| u64::from(w.count_ones())).sum::<u64>() != count {
            return Err(corrupt("population does not match the stored count"));
        }
        Ok(Reachability { n, count, bits })
    }
}

/// Breadth-first closure from the empty board. Finished games are counted
/// but not expanded. Needs one bit per state, so only sizes up to 4.
pub fn reachable(n: usize) -> Result<Reachability> {
    let board = Board::for_size(n)?;
    let tables = RankTables::for_size(n)?;
    if n > 4 {
        return Err(Error::Config(format!(
            "reachability needs a bitmap over 3^{} states; only sizes up to 4 are supported",
            n * n
        )));
    }
    let mut bits = vec![0u64; tables.total_states().div_ceil(64) as usize];
    let mut mark = |s: QState| {
        let g = tables.global_index(s);
        let (w, b) = ((g / 64) as usize, g % 64);
        let fresh = bits[w] >> b & 1 == 0;
        bits[w] |= 1 << b;
        fresh
    };
    mark(QState::EMPTY);
    let mut count = 1u64;
    let mut frontier = vec![QState::EMPTY];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for s in frontier {
            if board.is_terminal(s) {
                continue;
            }
            for e in board.legal_entries(s) {
                let c = e.child(s);
                if mark(c) {
                    count += 1;
                    next.push(c);
                }
            }
        }
        frontier = next;
    }
    Ok(Reachability { n, count, bits })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Extremal {
    /// Fewest tiles among matching states, if any matched.
    pub tiles: Option<u32>,
    /// Matching states with that many tiles, by class then index.
    pub states: Vec<QState>,
    /// Number of matches before truncation to the limit.
    pub total: u64,
}

/// Finds the states with the fewest tiles satisfying `pred`.
pub fn find_extremal(
    db: &Database,
    limit: usize,
    pred: impl Fn(QState, Value) -> bool + Sync,
) -> Result<Extremal> {
    require_complete(db)?;
    let tables = db.tables();
    for tiles in 0..=db.board().cells() as u32 {
        let mut states = Vec::new();
        let mut total = 0u64;
        for x in 0..=tiles {
            let c = ClassId::new(x, tiles - x);
            let store = db.class(c)?;
            let span = tables.o_span(c);
            let found: Vec<QState> = (0..store.len())
                .into_par_iter()
                .filter_map(|i| {
                    let s = tables.state_at(c, span, i);
                    let step = store.step(i);
                    let v = Value {
                        outcome: store.outcome(i),
                        step: (step != NO_STEP).then_some(step),
                    };
                    pred(s, v).then_some(s)
                })
                .collect();
            total += found.len() as u64;
            states.extend(found.into_iter().take(limit.saturating_sub(states.len())));
        }
        if total > 0 {
            return Ok(Extremal {
                tiles: Some(tiles),
                states,
                total,
            });
        }
    }
    Ok(Extremal {
        tiles: None,
        states: Vec::new(),
        total: 0,
    })
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checked: u64,
    pub mismatches: u64,
    /// First few offending states in text form with a reason.
    pub examples: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches == 0
    }
}

/// Stores needed to look up a state of class `c` and all of its children.
struct Neighborhood {
    own: Arc<ClassStore>,
    partner: Arc<ClassStore>,
    cross: Option<Arc<ClassStore>>,
}

impl Neighborhood {
    fn load(db: &Database, c: ClassId) -> Result<Neighborhood> {
        let cross_id = ClassId::new(c.o, c.x + 1);
        Ok(Neighborhood {
            own: db.class(c)?,
            partner: db.class(c.swapped())?,
            cross: if cross_id.is_valid(db.board().cells()) {
                Some(db.class(cross_id)?)
            } else {
                None
            },
        })
    }

    fn value(&self, tables: &RankTables, s: QState) -> (Outcome, u8) {
        let c = ClassId::of(s);
        let store = if c == self.partner.class() {
            &self.partner
        } else {
            self.cross.as_ref().expect("child class loaded")
        };
        let i = tables.index_with_span(s, tables.o_span(c));
        (store.outcome(i), store.step(i))
    }
}

/// Checks every stored value against its children: terminals carry their
/// line outcome, Win needs a Loss child, Loss needs all children Win, Draw
/// neither. With steps the Win step must be one more than the smallest Loss
/// child step and the Loss step one more than the largest Win child step.
/// With steps this pins the solution uniquely.
pub fn verify(db: &Database) -> Result<VerifyReport> {
    require_complete(db)?;
    let board = db.board();
    let tables = db.tables();
    let with_steps = db.has_steps();
    let checked = AtomicU64::new(0);
    let mismatches = AtomicU64::new(0);
    let examples = Mutex::new(Vec::new());
    for c in db.class_ids() {
        let hood = Neighborhood::load(db, c)?;
        let span = tables.o_span(c);
        (0..hood.own.len()).into_par_iter().for_each(|i| {
            let s = tables.state_at(c, span, i);
            let stored = (hood.own.outcome(i), hood.own.step(i));
            let expected = if let Some(t) = board.terminal_outcome(s) {
                (t, 0)
            } else {
                let mut min_loss = None::<u8>;
                let mut max_win = 0u8;
                let mut all_win = true;
                for e in board.legal_entries(s) {
                    let (o, st) = hood.value(tables, e.child(s));
                    match o {
                        Outcome::Loss => min_loss = Some(min_loss.map_or(st, |m| m.min(st))),
                        Outcome::Win => max_win = max_win.max(st),
                        _ => all_win = false,
                    }
                    if o != Outcome::Win {
                        all_win = false;
                    }
                }
                match (min_loss, all_win) {
                    (Some(m), _) => (Outcome::Win, m.saturating_add(1)),
                    (None, true) => (Outcome::Loss, max_win.saturating_add(1)),
                    _ => (Outcome::Draw, NO_STEP),
                }
            };
            checked.fetch_add(1, Relaxed);
            let bad = stored.0 != expected.0 || (with_steps && stored.1 != expected.1);
            if bad {
                mismatches.fetch_add(1, Relaxed);
                let mut ex = examples.lock().expect("examples lock");
                if ex.len() < 10 {
                    ex.push(format!(
                        "{}: stored {} {}, children imply {} {}",
                        board.render(s),
                        stored.0,
                        stored.1,
                        expected.0,
                        expected.1
                    ));
                }
            }
        });
    }
    Ok(VerifyReport {
        checked: checked.into_inner(),
        mismatches: mismatches.into_inner(),
        examples: examples.into_inner().expect("examples lock"),
    })
}

/// Solves the states with at least `min_tiles` tiles with the brute-force
/// reference solver and compares every one against the database.
pub fn audit_with_oracle(db: &Database, min_tiles: usize) -> Result<VerifyReport> {
    let n = db.n();
    let board = db.board();
    let seeds = oracle::boards_with_tiles(n, min_tiles);
    let (graph, solution) = oracle::solve_closed_set(n, &seeds);
    let with_steps = db.has_steps();
    let mut report = VerifyReport::default();
    for id in 0..graph.len() {
        let text = graph.board(id).to_text();
        let s = board.parse(&text)?;
        let v = db.lookup(s)?;
        let want_step = solution.step[id].map(|s| s as u8);
        report.checked += 1;
        if v.outcome != solution.outcome[id] || (with_steps && v.step != want_step) {
            report.mismatches += 1;
            if report.examples.len() < 10 {
                report.examples.push(format!(
                    "{text}: database {} {:?}, reference {} {:?}",
                    v.outcome, v.step, solution.outcome[id], want_step
                ));
            }
        }
    }
    Ok(report)
}
