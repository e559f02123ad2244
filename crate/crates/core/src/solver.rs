//! Class-by-class retrograde solver.
//!
//! Classes are solved in pairs `C(x,o)` / `C(o,x)` from full boards down to
//! the empty board. A state's children lie either in the partner class (the
//! move reused an X tile) or in `C(o,x+1)` (the move took an empty tile),
//! which is already solved and loaded from disk. Each pair goes through
//! three passes:
//!
//! 1. terminals are marked, then every nonterminal parent of a terminal
//!    Loss inside the pair becomes Win;
//! 2. each undecided state looks at its children in the solved class: any
//!    Loss child makes it Win, a Draw child makes it WinOrDraw;
//! 3. sweeps over the remaining Draw states turn those whose in-pair
//!    children are all Win into Loss, marking their in-pair parents Win,
//!    until a sweep changes nothing. WinOrDraw states are never inspected
//!    and end up Draw.
//!
//! With steps enabled the third pass runs one sweep per step level, so a
//! Loss is decided exactly at level `1 + max(child steps)` and each Win
//! parent receives `1 + min(Loss child steps)`. Pass 2 records, for states
//! left Draw, the earliest level at which they could become Loss given
//! their solved-class Win children.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU8, Ordering::Relaxed};
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::board::{Board, Outcome, QState};
use crate::error::{Error, Result};
use crate::rank::{ClassId, RankTables};
use crate::store::{
    class_file_name, class_path, ClassEntry, ClassStore, Counts, Manifest, SolverMeta, MAX_STEP,
    NO_STEP,
};

#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub n: usize,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub with_steps: bool,
    /// Skip pairs already recorded in an existing manifest.
    pub resume: bool,
    /// Stop after the classes with this many tiles; 0 solves everything.
    /// Classes with at least `t` tiles form a closed set, so partial runs
    /// are exact on what they cover.
    pub min_tiles: u32,
}

impl SolveConfig {
    pub fn new(n: usize, out_dir: impl Into<PathBuf>) -> SolveConfig {
        SolveConfig {
            n,
            threads: 1,
            out_dir: out_dir.into(),
            with_steps: true,
            resume: false,
            min_tiles: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ClassSummary {
    pub class: ClassId,
    pub counts: Counts,
    pub iterations: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveSummary {
    pub n: usize,
    pub threads: usize,
    pub with_steps: bool,
    pub wall_time_secs: f64,
    pub classes: Vec<ClassSummary>,
    pub resumed: usize,
    pub totals: Counts,
}

struct LiveClass {
    class: ClassId,
    span: u64,
    store: ClassStore,
    /// Earliest Loss level for states still Draw after the cross pass.
    floors: Option<Box<[AtomicU8]>>,
}

/// The two classes of one pair while they are being solved.
pub struct PairSolver<'p> {
    board: &'static Board,
    tables: &'static RankTables,
    live: Vec<LiveClass>,
    pool: &'p rayon::ThreadPool,
    with_steps: bool,
    shards_per_class: usize,
}

impl<'p> PairSolver<'p> {
    /// Allocates `class` and its swapped partner (the same class when x = o).
    pub fn new(
        n: usize,
        class: ClassId,
        with_steps: bool,
        pool: &'p rayon::ThreadPool,
    ) -> Result<PairSolver<'p>> {
        let board = Board::for_size(n)?;
        let tables = RankTables::for_size(n)?;
        let mut classes = vec![class];
        if class.swapped() != class {
            classes.push(class.swapped());
        }
        let live = classes
            .into_iter()
            .map(|c| {
                let len = tables.class_size(c);
                let mut store = ClassStore::allocate(n, c, len, with_steps)?;
                store.enable_seal()?;
                Ok(LiveClass {
                    class: c,
                    span: tables.o_span(c),
                    store,
                    floors: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PairSolver {
            board,
            tables,
            live,
            pool,
            with_steps,
            shards_per_class: pool.current_num_threads() * 8,
        })
    }

    pub fn classes(&self) -> Vec<ClassId> {
        self.live.iter().map(|l| l.class).collect()
    }

    pub fn store(&self, c: ClassId) -> Option<&ClassStore> {
        self.live.iter().find(|l| l.class == c).map(|l| &l.store)
    }

    fn partner(&self, k: usize) -> usize {
        if self.live.len() == 1 {
            0
        } else {
            1 - k
        }
    }

    fn for_each_index(&self, k: usize, f: impl Fn(u64) + Sync) {
        let shards = self.live[k].store.shards(self.shards_per_class);
        self.pool.install(|| {
            shards.into_par_iter().for_each(|range| range.for_each(&f));
        });
    }

    #[inline]
    fn state(&self, k: usize, i: u64) -> QState {
        let l = &self.live[k];
        self.tables.state_at(l.class, l.span, i)
    }

    /// Marks terminal states, seals them, then marks the in-pair parents of
    /// terminal Loss states as Win with step 1.
    pub fn terminal_pass(&self) {
        for k in 0..self.live.len() {
            let store = &self.live[k].store;
            self.for_each_index(k, |i| {
                if let Some(t) = self.board.terminal_outcome(self.state(k, i)) {
                    store.store_outcome(i, t);
                    store.store_step(i, 0);
                    store.seal(i);
                }
            });
        }
        for k in 0..self.live.len() {
            let store = &self.live[k].store;
            let partner = &self.live[self.partner(k)];
            self.for_each_index(k, |i| {
                if store.outcome(i) != Outcome::Loss {
                    return;
                }
                self.board.for_each_parent(self.state(k, i), true, |p| {
                    let j = self.tables.index_with_span(p, partner.span);
                    partner.store.promote(j, Outcome::Win, false);
                    partner.store.lower_step(j, 1);
                });
            });
        }
    }

    /// Folds in the already solved class `C(o, x+1)` for each live class
    /// `C(x, o)`. `child_of` returns that class's store, or `None` when the
    /// board is full.
    pub fn cross_class_pass<'c>(
        &mut self,
        child_of: impl Fn(ClassId) -> Option<&'c ClassStore>,
    ) -> Result<()> {
        for k in 0..self.live.len() {
            let class = self.live[k].class;
            let expected = ClassId::new(class.o, class.x + 1);
            let child = child_of(class);
            if let Some(child) = child {
                if child.class() != expected || child.has_transient() {
                    return Err(Error::IncompleteClass {
                        x: expected.x,
                        o: expected.o,
                    });
                }
                if self.with_steps && !child.has_steps() {
                    return Err(Error::StepsMissing);
                }
            } else if expected.is_valid(self.board.cells()) {
                return Err(Error::MissingClass {
                    x: expected.x,
                    o: expected.o,
                    dir: PathBuf::new(),
                });
            }
            let floors = if self.with_steps {
                let len = self.live[k].store.len() as usize;
                Some((0..len).map(|_| AtomicU8::new(0)).collect::<Box<[_]>>())
            } else {
                None
            };
            self.live[k].floors = floors;

            let Some(child) = child else { continue };
            let span = self.tables.o_span(expected);
            let live = &self.live[k];
            let with_steps = self.with_steps;
            let overflow = AtomicBool::new(false);
            self.for_each_index(k, |i| {
                if live.store.outcome(i) != Outcome::Draw {
                    return;
                }
                let s = self.state(k, i);
                let (mut loss, mut draw) = (false, false);
                let (mut min_loss, mut max_win) = (NO_STEP, None::<u8>);
                for e in self.board.move_table() {
                    if s.0 & (e.take_x | e.take_o) != 0 {
                        continue;
                    }
                    let j = self.tables.index_with_span(e.child(s), span);
                    match child.outcome(j) {
                        Outcome::Loss => {
                            loss = true;
                            if !with_steps {
                                break;
                            }
                            min_loss = min_loss.min(child.step(j));
                        }
                        Outcome::Draw => draw = true,
                        _ => max_win = max_win.max(Some(child.step(j))),
                    }
                }
                if loss {
                    live.store.store_outcome(i, Outcome::Win);
                    if with_steps {
                        if min_loss >= MAX_STEP {
                            overflow.store(true, Relaxed);
                        }
                        live.store.store_step(i, min_loss.saturating_add(1));
                    }
                } else if draw {
                    live.store.store_outcome(i, Outcome::WinOrDraw);
                } else if let (Some(floors), Some(w)) = (&live.floors, max_win) {
                    floors[i as usize].store(w.saturating_add(1), Relaxed);
                }
            });
            if overflow.load(Relaxed) {
                return Err(Error::StepOverflow(MAX_STEP));
            }
        }
        Ok(())
    }

    /// Runs the in-pair sweeps to the fixpoint, then relabels WinOrDraw as
    /// Draw. Returns the number of sweeps.
    pub fn inpair_iterate(&mut self) -> Result<u32> {
        let sweeps = if self.with_steps {
            self.iterate_levels()?
        } else {
            self.iterate_plain()
        };
        for l in &mut self.live {
            for i in 0..l.store.len() {
                if l.store.outcome(i) == Outcome::WinOrDraw {
                    l.store.store_outcome(i, Outcome::Draw);
                }
            }
            l.floors = None;
        }
        Ok(sweeps)
    }

    /// True when every in-pair child of `s` satisfies `won`.
    #[inline]
    fn all_inpair_children(
        &self,
        s: QState,
        partner: &LiveClass,
        won: impl Fn(u64) -> bool,
    ) -> bool {
        self.board
            .move_table()
            .iter()
            .filter(|e| s.0 & e.take_x != 0)
            .all(|e| won(self.tables.index_with_span(e.child(s), partner.span)))
    }

    fn iterate_plain(&self) -> u32 {
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let updated = AtomicBool::new(false);
            for k in 0..self.live.len() {
                let store = &self.live[k].store;
                let partner = &self.live[self.partner(k)];
                self.for_each_index(k, |i| {
                    if store.outcome(i) != Outcome::Draw {
                        return;
                    }
                    let s = self.state(k, i);
                    let lost = self.all_inpair_children(s, partner, |j| {
                        partner.store.outcome(j) == Outcome::Win
                    });
                    if lost && store.promote(i, Outcome::Loss, true) == Outcome::Draw {
                        updated.store(true, Relaxed);
                        self.board.for_each_parent(s, true, |p| {
                            let j = self.tables.index_with_span(p, partner.span);
                            partner.store.promote(j, Outcome::Win, false);
                        });
                    }
                });
            }
            if !updated.load(Relaxed) {
                return sweeps;
            }
        }
    }

    fn iterate_levels(&self) -> Result<u32> {
        let horizon = AtomicU8::new(0);
        for l in &self.live {
            let floors = l.floors.as_ref();
            for i in 0..l.store.len() {
                let h = match l.store.outcome(i) {
                    Outcome::Draw => floors.map_or(0, |f| f[i as usize].load(Relaxed)),
                    Outcome::Win => l.store.step(i).saturating_add(1),
                    _ => 0,
                };
                horizon.fetch_max(h, Relaxed);
            }
        }

        let mut level: u8 = 1;
        let mut sweeps = 0;
        while level <= horizon.load(Relaxed) {
            if level >= MAX_STEP {
                return Err(Error::StepOverflow(MAX_STEP));
            }
            sweeps += 1;
            for k in 0..self.live.len() {
                let live = &self.live[k];
                let partner = &self.live[self.partner(k)];
                let floors = live.floors.as_ref().expect("cross pass ran");
                self.for_each_index(k, |i| {
                    if live.store.outcome(i) != Outcome::Draw
                        || floors[i as usize].load(Relaxed) > level
                    {
                        return;
                    }
                    let s = self.state(k, i);
                    let lost = self.all_inpair_children(s, partner, |j| {
                        partner.store.outcome(j) == Outcome::Win && partner.store.step(j) < level
                    });
                    if !lost || live.store.promote(i, Outcome::Loss, true) != Outcome::Draw {
                        return;
                    }
                    live.store.store_step(i, level);
                    horizon.fetch_max(level + 2, Relaxed);
                    self.board.for_each_parent(s, true, |p| {
                        let j = self.tables.index_with_span(p, partner.span);
                        if partner.store.promote(j, Outcome::Win, false) != Outcome::Loss {
                            partner.store.lower_step(j, level + 1);
                        }
                    });
                });
            }
            level += 1;
        }
        Ok(sweeps)
    }

    /// Hands back the solved stores.
    pub fn finish(self) -> Vec<ClassStore> {
        self.live.into_iter().map(|l| l.store).collect()
    }
}

pub fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    if threads == 0 {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .thread_name(|i| format!("quixo-solver-{i}"))
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Pairs `(x, o)` with `x <= o` in solving order.
pub fn schedule(n: usize, min_tiles: u32) -> Vec<ClassId> {
    let cells = (n * n) as u32;
    (min_tiles..=cells)
        .rev()
        .flat_map(|tiles| (0..=tiles / 2).map(move |x| ClassId::new(x, tiles - x)))
        .collect()
}

/// Runs the full backward induction and writes class files plus a manifest
/// into `config.out_dir`.
pub fn solve(config: &SolveConfig) -> Result<SolveSummary> {
    let started = Instant::now();
    let n = config.n;
    Board::for_size(n)?;
    let tables = RankTables::for_size(n)?;
    let pool = build_pool(config.threads)?;
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir)?;

    let mut manifest = match Manifest::read(dir) {
        Ok(m) if config.resume => {
            if m.n != n || m.with_steps != config.with_steps {
                return Err(Error::Config(format!(
                    "existing manifest in {} is for size {} (steps: {}); refusing to resume",
                    dir.display(),
                    m.n,
                    m.with_steps
                )));
            }
            m
        }
        _ => Manifest::new(n, config.with_steps),
    };
    manifest.complete = false;
    let prior_secs = if config.resume {
        manifest.solver.wall_time_secs
    } else {
        0.0
    };

    let mut summary = SolveSummary {
        n,
        threads: config.threads,
        with_steps: config.with_steps,
        wall_time_secs: 0.0,
        classes: Vec::new(),
        resumed: 0,
        totals: Counts::default(),
    };

    let cells = (n * n) as u32;
    for pair in schedule(n, config.min_tiles) {
        let members: Vec<ClassId> = if pair.swapped() == pair {
            vec![pair]
        } else {
            vec![pair, pair.swapped()]
        };
        if config.resume
            && members
                .iter()
                .all(|&c| manifest.entry(c).is_some() && class_path(dir, c).is_file())
        {
            summary.resumed += members.len();
            continue;
        }

        let pair_started = Instant::now();
        let mut solver = PairSolver::new(n, pair, config.with_steps, &pool)?;
        solver.terminal_pass();
        if pair.tiles() < cells {
            let mut children = Vec::new();
            for &c in &members {
                let child = ClassId::new(c.o, c.x + 1);
                if children.iter().any(|s: &ClassStore| s.class() == child) {
                    continue;
                }
                let path = class_path(dir, child);
                if !path.is_file() {
                    return Err(Error::MissingClass {
                        x: child.x,
                        o: child.o,
                        dir: dir.clone(),
                    });
                }
                children.push(ClassStore::load(&path)?);
            }
            solver.cross_class_pass(|c| {
                let want = ClassId::new(c.o, c.x + 1);
                children.iter().find(|s| s.class() == want)
            })?;
        } else {
            solver.cross_class_pass(|_| None)?;
        }
        let iterations = solver.inpair_iterate()?;

        for store in solver.finish() {
            let c = store.class();
            let crc = store.save(&class_path(dir, c))?;
            let counts = store.counts();
            debug!("class {c}: {counts:?}");
            manifest.record(ClassEntry {
                x: c.x,
                o: c.o,
                entries: store.len(),
                crc32: crc,
                file: class_file_name(c),
                counts,
                iterations,
            });
            summary.classes.push(ClassSummary {
                class: c,
                counts,
                iterations,
            });
        }
        manifest.solver = SolverMeta {
            wall_time_secs: prior_secs + started.elapsed().as_secs_f64(),
            threads: config.threads,
        };
        manifest.write(dir)?;
        info!(
            "solved pair {pair} ({} states) in {:.2?}, {iterations} sweeps",
            members.iter().map(|&c| tables.class_size(c)).sum::<u64>(),
            pair_started.elapsed()
        );
    }

    manifest.complete = config.min_tiles == 0;
    manifest.solver = SolverMeta {
        wall_time_secs: prior_secs + started.elapsed().as_secs_f64(),
        threads: config.threads,
    };
    manifest.write(dir)?;

    summary.wall_time_secs = manifest.solver.wall_time_secs;
    summary.totals = manifest.totals;
    Ok(summary)
}

/// Recomputes step arrays for a database that only holds outcomes. The
/// new solve goes to a work directory; each recomputed class must match the
/// stored outcomes exactly before the files replace the old ones.
pub fn compute_steps(dir: &std::path::Path, threads: usize) -> Result<SolveSummary> {
    let existing = Manifest::read(dir)?;
    let min_tiles = min_tiles_of(&existing);
    for pair in schedule(existing.n, min_tiles) {
        for c in [pair, pair.swapped()] {
            if existing.entry(c).is_none() || !class_path(dir, c).is_file() {
                return Err(Error::MissingClass {
                    x: c.x,
                    o: c.o,
                    dir: dir.to_path_buf(),
                });
            }
        }
    }

    let work = dir.join("steps.work");
    if work.exists() {
        std::fs::remove_dir_all(&work)?;
    }
    let config = SolveConfig {
        n: existing.n,
        threads,
        out_dir: work.clone(),
        with_steps: true,
        resume: false,
        min_tiles,
    };
    let summary = solve(&config)?;
    for e in &existing.classes {
        let c = ClassId::new(e.x, e.o);
        let old = ClassStore::load(&class_path(dir, c))?;
        let new = ClassStore::load(&class_path(&work, c))?;
        if old.len() != new.len() || (0..old.len()).any(|i| old.outcome(i) != new.outcome(i)) {
            return Err(Error::Corrupt {
                path: class_path(dir, c),
                reason: "recomputed outcomes differ from the stored ones".into(),
            });
        }
    }
    for e in &existing.classes {
        let c = ClassId::new(e.x, e.o);
        std::fs::rename(class_path(&work, c), class_path(dir, c))?;
    }
    let manifest = Manifest::read(&work)?;
    manifest.write(dir)?;
    std::fs::remove_dir_all(&work)?;
    Ok(summary)
}

fn min_tiles_of(m: &Manifest) -> u32 {
    m.classes.iter().map(|e| e.x + e.o).min().unwrap_or(0)
}
