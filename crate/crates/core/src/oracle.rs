//! Brute-force reference solver used to cross-check the class solver.
//!
//! Boards are plain cell arrays and the game graph is built explicitly in a
//! hash map, so nothing here shares code with the packed representation.
//! Outcomes come from classic retrograde analysis with undecided-child
//! counters; a second, slower fixpoint sweep exists to check the first.

use std::collections::{HashMap, VecDeque};

use crate::board::Outcome;

const EMPTY: u8 = 0;
const MINE: u8 = 1;
const THEIRS: u8 = 2;

/// An n×n board as a row-major cell array. `MINE` is the player to move.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NaiveBoard {
    n: usize,
    cells: Vec<u8>,
}

impl NaiveBoard {
    pub fn empty(n: usize) -> NaiveBoard {
        NaiveBoard {
            n,
            cells: vec![EMPTY; n * n],
        }
    }

    /// Base-3 digits, first cell most significant.
    pub fn from_key(n: usize, mut key: u64) -> NaiveBoard {
        let mut cells = vec![EMPTY; n * n];
        for c in cells.iter_mut().rev() {
            *c = (key % 3) as u8;
            key /= 3;
        }
        NaiveBoard { n, cells }
    }

    /// Reads the `rows X` text form; only X to move is accepted.
    pub fn from_text(n: usize, text: &str) -> Option<NaiveBoard> {
        let rows = text.trim().strip_suffix(" X")?;
        let cells: Vec<u8> = rows
            .chars()
            .filter(|&c| c != '/')
            .map(|c| match c {
                'X' => Some(MINE),
                'O' => Some(THEIRS),
                '.' => Some(EMPTY),
                _ => None,
            })
            .collect::<Option<_>>()?;
        (cells.len() == n * n).then_some(NaiveBoard { n, cells })
    }

    pub fn key(&self) -> u64 {
        self.cells.iter().fold(0, |k, &c| k * 3 + u64::from(c))
    }

    pub fn tiles(&self) -> usize {
        self.cells.iter().filter(|&&c| c != EMPTY).count()
    }

    /// Text form with X as the player to move.
    pub fn to_text(&self) -> String {
        let rows: Vec<String> = self
            .cells
            .chunks(self.n)
            .map(|row| {
                row.iter()
                    .map(|&c| match c {
                        MINE => 'X',
                        THEIRS => 'O',
                        _ => '.',
                    })
                    .collect()
            })
            .collect();
        format!("{} X", rows.join("/"))
    }

    fn has_line(&self, who: u8) -> bool {
        let n = self.n;
        let at = |r: usize, c: usize| self.cells[r * n + c] == who;
        (0..n).any(|r| (0..n).all(|c| at(r, c)))
            || (0..n).any(|c| (0..n).all(|r| at(r, c)))
            || (0..n).all(|i| at(i, i))
            || (0..n).all(|i| at(i, n - 1 - i))
    }

    /// Value of a finished game for the player to move, if it is finished.
    pub fn terminal(&self) -> Option<Outcome> {
        if self.has_line(MINE) {
            Some(Outcome::Win)
        } else if self.has_line(THEIRS) {
            Some(Outcome::Loss)
        } else {
            None
        }
    }

    /// Every successor position, seen from the new player to move. The list
    /// may contain duplicates.
    pub fn successors(&self) -> Vec<NaiveBoard> {
        let n = self.n;
        let mut out = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let on_border = r == 0 || c == 0 || r == n - 1 || c == n - 1;
                if !on_border || self.cells[r * n + c] == THEIRS {
                    continue;
                }
                // Slide the rest of the row or column toward the hole and
                // drop the tile in at the far end.
                let mut options: Vec<Vec<(usize, usize)>> = Vec::new();
                if c != 0 {
                    options.push((0..=c).map(|j| (r, j)).collect());
                }
                if c != n - 1 {
                    options.push((c..n).rev().map(|j| (r, j)).collect());
                }
                if r != 0 {
                    options.push((0..=r).map(|i| (i, c)).collect());
                }
                if r != n - 1 {
                    options.push((r..n).rev().map(|i| (i, c)).collect());
                }
                for line in options {
                    let mut next = self.cells.clone();
                    for w in (1..line.len()).rev() {
                        let (tr, tc) = line[w];
                        let (fr, fc) = line[w - 1];
                        next[tr * n + tc] = self.cells[fr * n + fc];
                    }
                    let (ir, ic) = line[0];
                    next[ir * n + ic] = MINE;
                    for cell in next.iter_mut() {
                        *cell = match *cell {
                            MINE => THEIRS,
                            THEIRS => MINE,
                            e => e,
                        };
                    }
                    out.push(NaiveBoard { n, cells: next });
                }
            }
        }
        out
    }
}

/// Every board of size `n`.
pub fn all_boards(n: usize) -> Vec<u64> {
    (0..3u64.pow((n * n) as u32)).collect()
}

/// Every board of size `n` with at least `min_tiles` tiles.
pub fn boards_with_tiles(n: usize, min_tiles: usize) -> Vec<u64> {
    let cells = n * n;
    let mut out = Vec::new();
    let mut cur = vec![EMPTY; cells];
    fn fill(pos: usize, empties: usize, max_empty: usize, cur: &mut Vec<u8>, out: &mut Vec<u64>) {
        if pos == cur.len() {
            out.push(cur.iter().fold(0, |k, &c| k * 3 + u64::from(c)));
            return;
        }
        for v in [EMPTY, MINE, THEIRS] {
            if v == EMPTY && empties == max_empty {
                continue;
            }
            cur[pos] = v;
            fill(
                pos + 1,
                empties + usize::from(v == EMPTY),
                max_empty,
                cur,
                out,
            );
        }
    }
    fill(0, 0, cells.saturating_sub(min_tiles), &mut cur, &mut out);
    out
}

/// Explicit game graph closed under successors.
pub struct ExplicitGraph {
    n: usize,
    keys: Vec<u64>,
    ids: HashMap<u64, u32>,
    terminal: Vec<Option<Outcome>>,
    child_start: Vec<u32>,
    children: Vec<u32>,
}

impl ExplicitGraph {
    /// Builds the closure of `seeds` (ternary keys). Terminal positions are
    /// members without successors.
    pub fn build(n: usize, seeds: &[u64]) -> ExplicitGraph {
        let mut g = ExplicitGraph {
            n,
            keys: Vec::new(),
            ids: HashMap::with_capacity(seeds.len()),
            terminal: Vec::new(),
            child_start: vec![0],
            children: Vec::new(),
        };
        for &k in seeds {
            g.intern(k);
        }
        let mut next = 0;
        while next < g.keys.len() {
            let b = NaiveBoard::from_key(n, g.keys[next]);
            let t = b.terminal();
            g.terminal.push(t);
            if t.is_none() {
                let mut kids: Vec<u32> = b.successors().iter().map(|c| g.intern(c.key())).collect();
                kids.sort_unstable();
                kids.dedup();
                g.children.extend(kids);
            }
            g.child_start.push(g.children.len() as u32);
            next += 1;
        }
        g
    }

    fn intern(&mut self, key: u64) -> u32 {
        let next = self.keys.len() as u32;
        *self.ids.entry(key).or_insert_with(|| {
            self.keys.push(key);
            next
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, id: usize) -> u64 {
        self.keys[id]
    }

    pub fn board(&self, id: usize) -> NaiveBoard {
        NaiveBoard::from_key(self.n, self.keys[id])
    }

    pub fn id(&self, key: u64) -> Option<usize> {
        self.ids.get(&key).map(|&i| i as usize)
    }

    fn kids(&self, id: usize) -> &[u32] {
        &self.children[self.child_start[id] as usize..self.child_start[id + 1] as usize]
    }

    /// Retrograde analysis from the terminals with undecided-child counters.
    /// A FIFO queue processes states in order of their step, so the first
    /// Loss child reaching a state gives its shortest win and the last Win
    /// child gives its longest loss.
    pub fn solve(&self) -> Solution {
        let len = self.len();
        let mut parent_start = vec![0u32; len + 1];
        for &c in &self.children {
            parent_start[c as usize + 1] += 1;
        }
        for i in 0..len {
            parent_start[i + 1] += parent_start[i];
        }
        let mut fill = parent_start.clone();
        let mut parents = vec![0u32; self.children.len()];
        for p in 0..len {
            for &c in self.kids(p) {
                parents[fill[c as usize] as usize] = p as u32;
                fill[c as usize] += 1;
            }
        }

        let mut outcome = vec![Outcome::Draw; len];
        let mut step: Vec<Option<u32>> = vec![None; len];
        let mut pending: Vec<u32> = (0..len).map(|i| self.kids(i).len() as u32).collect();
        let mut queue = VecDeque::new();
        for (i, t) in self.terminal.iter().enumerate() {
            if let Some(t) = *t {
                outcome[i] = t;
                step[i] = Some(0);
                queue.push_back(i);
            }
        }
        while let Some(s) = queue.pop_front() {
            let next = step[s].expect("decided") + 1;
            for &p in &parents[parent_start[s] as usize..parent_start[s + 1] as usize] {
                let p = p as usize;
                if step[p].is_some() {
                    continue;
                }
                match outcome[s] {
                    Outcome::Loss => {
                        outcome[p] = Outcome::Win;
                        step[p] = Some(next);
                        queue.push_back(p);
                    }
                    _ => {
                        pending[p] -= 1;
                        if pending[p] == 0 {
                            outcome[p] = Outcome::Loss;
                            step[p] = Some(next);
                            queue.push_back(p);
                        }
                    }
                }
            }
        }
        Solution { outcome, step }
    }

    /// Plain value iteration: every round decides states from the values
    /// known at the end of the previous round, until a round changes nothing.
    pub fn solve_by_sweeps(&self) -> Solution {
        let len = self.len();
        let mut outcome = vec![Outcome::Draw; len];
        let mut step: Vec<Option<u32>> = vec![None; len];
        for (i, t) in self.terminal.iter().enumerate() {
            if let Some(t) = *t {
                outcome[i] = t;
                step[i] = Some(0);
            }
        }
        let mut round = 0;
        loop {
            round += 1;
            let mut decided = Vec::new();
            for i in 0..len {
                if step[i].is_some() {
                    continue;
                }
                let kids = self.kids(i);
                if kids.iter().any(|&c| outcome[c as usize] == Outcome::Loss) {
                    decided.push((i, Outcome::Win));
                } else if kids.iter().all(|&c| outcome[c as usize] == Outcome::Win) {
                    decided.push((i, Outcome::Loss));
                }
            }
            if decided.is_empty() {
                return Solution { outcome, step };
            }
            for (i, o) in decided {
                outcome[i] = o;
                step[i] = Some(round);
            }
        }
    }
}

/// Per-state results, indexed like the graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub outcome: Vec<Outcome>,
    /// `None` for Draw.
    pub step: Vec<Option<u32>>,
}

/// Builds and solves the closure of `seeds` in one go.
pub fn solve_closed_set(n: usize, seeds: &[u64]) -> (ExplicitGraph, Solution) {
    let g = ExplicitGraph::build(n, seeds);
    let s = g.solve();
    (g, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_round_trip() {
        for key in [0, 1, 2, 3, 19_682, 12_345] {
            assert_eq!(NaiveBoard::from_key(3, key).key(), key);
        }
        let b = NaiveBoard::from_key(3, 1);
        assert_eq!(b.to_text(), ".../.../..X X");
    }

    #[test]
    fn empty_board_successor_counts() {
        assert_eq!(NaiveBoard::empty(3).successors().len(), 8 * 3 - 4);
        assert_eq!(NaiveBoard::empty(4).successors().len(), 32);
        assert_eq!(NaiveBoard::empty(5).successors().len(), 44);
    }

    #[test]
    fn terminal_only_set_keeps_terminal_values() {
        let keys: Vec<u64> = ["XXX/.../... X", "OOO/.../... X"]
            .iter()
            .map(|t| NaiveBoard::from_text(3, t).unwrap().key())
            .collect();
        let (g, s) = solve_closed_set(3, &keys);
        assert_eq!(g.len(), 2);
        assert_eq!(s.outcome, vec![Outcome::Win, Outcome::Loss]);
        assert_eq!(s.step, vec![Some(0), Some(0)]);
    }

    #[test]
    fn tile_slices_have_expected_sizes() {
        assert_eq!(boards_with_tiles(3, 0).len(), 19_683);
        assert_eq!(boards_with_tiles(3, 9).len(), 512);
        assert_eq!(boards_with_tiles(4, 15).len(), 16 * 32_768 + 65_536);
    }

    #[test]
    fn three_by_three_counter_and_sweeps_agree() {
        let g = ExplicitGraph::build(3, &all_boards(3));
        assert_eq!(g.len(), 19_683);
        let a = g.solve();
        let b = g.solve_by_sweeps();
        assert_eq!(a, b);
        let start = g.id(0).unwrap();
        assert_eq!(a.outcome[start], Outcome::Win);
        assert_eq!(a.step[start], Some(7));
    }
}
