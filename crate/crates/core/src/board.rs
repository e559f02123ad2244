//! Board rules on the packed 64-bit state.
//!
//! A state stores O occupancy in the low field (bits `0..n²`) and X
//! occupancy in the high field (bits `32..32+n²`). Inside a field, cell
//! `k = n*r + c` lives at bit `n² - 1 - k`, so reading a field from its most
//! significant bit spells the board row by row. X is always the player to
//! move; after every move the two fields are exchanged.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SIZE: usize = 3;
pub const MAX_SIZE: usize = 5;

/// Bit offset of the X field. The O field starts at bit 0.
pub const X_OFFSET: u32 = 32;

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct QState(pub u64);

impl QState {
    pub const EMPTY: QState = QState(0);

    #[inline]
    pub fn from_fields(x: u32, o: u32) -> QState {
        QState((u64::from(x) << X_OFFSET) | u64::from(o))
    }

    #[inline]
    pub fn x_field(self) -> u32 {
        (self.0 >> X_OFFSET) as u32
    }

    #[inline]
    pub fn o_field(self) -> u32 {
        self.0 as u32
    }

    /// Exchanges the X and O fields.
    #[inline]
    pub fn swap(self) -> QState {
        QState(self.0.rotate_left(X_OFFSET))
    }

    #[inline]
    pub fn x_count(self) -> u32 {
        self.x_field().count_ones()
    }

    #[inline]
    pub fn o_count(self) -> u32 {
        self.o_field().count_ones()
    }

    #[inline]
    pub fn tiles(self) -> u32 {
        self.0.count_ones()
    }
}

impl fmt::Display for QState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#018x}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Symbol {
    X,
    O,
}

impl Symbol {
    pub fn other(self) -> Symbol {
        match self {
            Symbol::X => Symbol::O,
            Symbol::O => Symbol::X,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Symbol::X => 'X',
            Symbol::O => 'O',
        }
    }
}

/// Value of a state for the player to move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Outcome {
    Draw = 0,
    Win = 1,
    Loss = 2,
    /// Solver-internal: a Draw child is known and no Loss child yet.
    WinOrDraw = 3,
}

impl Outcome {
    #[inline]
    pub fn from_bits(bits: u8) -> Outcome {
        match bits & 3 {
            0 => Outcome::Draw,
            1 => Outcome::Win,
            2 => Outcome::Loss,
            _ => Outcome::WinOrDraw,
        }
    }

    #[inline]
    pub fn bits(self) -> u8 {
        self as u8
    }

    /// The same position seen from the other player.
    pub fn flip(self) -> Outcome {
        match self {
            Outcome::Win => Outcome::Loss,
            Outcome::Loss => Outcome::Win,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Draw => "draw",
            Outcome::Win => "win",
            Outcome::Loss => "loss",
            Outcome::WinOrDraw => "win_or_draw",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// End of the taken tile's row or column where the tile goes back in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertEnd {
    RowLeft,
    RowRight,
    ColTop,
    ColBottom,
}

impl InsertEnd {
    pub const ALL: [InsertEnd; 4] = [
        InsertEnd::RowLeft,
        InsertEnd::RowRight,
        InsertEnd::ColTop,
        InsertEnd::ColBottom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InsertEnd::RowLeft => "row_left",
            InsertEnd::RowRight => "row_right",
            InsertEnd::ColTop => "col_top",
            InsertEnd::ColBottom => "col_bottom",
        }
    }

    pub fn parse(text: &str) -> Option<InsertEnd> {
        InsertEnd::ALL.into_iter().find(|e| e.name() == text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Move {
    pub cell: u8,
    pub insert_end: InsertEnd,
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.cell, self.insert_end.name())
    }
}

/// Precomputed constants for one move.
///
/// `mask` covers the pushed segment (insertion end through taken cell) in
/// both fields. Pushing is `((s & mask) shifted & mask) | (s & !mask) | insert`.
#[derive(Clone, Copy, Debug)]
pub struct MoveEntry {
    pub mv: Move,
    pub mask: u64,
    pub insert_x: u64,
    pub insert_o: u64,
    pub take_x: u64,
    pub take_o: u64,
    pub shift: u32,
    pub toward_msb: bool,
}

impl MoveEntry {
    #[inline]
    fn push(&self, s: u64) -> u64 {
        let seg = s & self.mask;
        let moved = if self.toward_msb {
            seg << self.shift
        } else {
            seg >> self.shift
        };
        moved & self.mask
    }

    #[inline]
    fn pull(&self, s: u64) -> u64 {
        let seg = s & self.mask;
        let moved = if self.toward_msb {
            seg >> self.shift
        } else {
            seg << self.shift
        };
        moved & self.mask
    }

    /// Pushes for the given mover without checking legality or swapping.
    #[inline]
    pub fn apply_for(&self, s: QState, mover: Symbol) -> QState {
        let insert = match mover {
            Symbol::X => self.insert_x,
            Symbol::O => self.insert_o,
        };
        QState(self.push(s.0) | (s.0 & !self.mask) | insert)
    }

    /// Child reached by X playing this move, already swapped so that the
    /// opponent is to move.
    #[inline]
    pub fn child(&self, s: QState) -> QState {
        QState(self.push(s.0) | (s.0 & !self.mask) | self.insert_x).swap()
    }

    /// Undoes an X move on the unswapped result `t`. Returns the predecessor
    /// with the taken cell empty; OR in `take_x` for the other candidate.
    /// Only meaningful when `t` holds an X at the insertion cell.
    #[inline]
    pub fn unapply(&self, t: QState) -> QState {
        QState(self.pull(t.0 & !self.insert_x) | (t.0 & !self.mask))
    }
}

/// One of the eight symmetries of the square: mirror left-right first
/// (when `index >= 4`), then rotate clockwise `index % 4` quarter turns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Symmetry(u8);

impl Symmetry {
    pub const IDENTITY: Symmetry = Symmetry(0);
    pub const ROT90: Symmetry = Symmetry(1);
    pub const MIRROR: Symmetry = Symmetry(4);

    pub fn all() -> impl Iterator<Item = Symmetry> {
        (0..8).map(Symmetry)
    }

    pub fn new(index: u8) -> Option<Symmetry> {
        (index < 8).then_some(Symmetry(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn rotations(self) -> u8 {
        self.0 & 3
    }

    pub fn mirrored(self) -> bool {
        self.0 >= 4
    }

    fn map(self, n: usize, r: usize, c: usize) -> (usize, usize) {
        let (mut r, mut c) = if self.mirrored() {
            (r, n - 1 - c)
        } else {
            (r, c)
        };
        for _ in 0..self.rotations() {
            (r, c) = (c, n - 1 - r);
        }
        (r, c)
    }
}

/// Rules and precomputed tables for one board size.
#[derive(Debug)]
pub struct Board {
    n: usize,
    cells: usize,
    field_mask: u32,
    x_lines: Vec<u64>,
    o_lines: Vec<u64>,
    border: Vec<u8>,
    moves: Vec<MoveEntry>,
    cell_moves: Vec<(usize, usize)>,
    perms: [Vec<u8>; 8],
}

impl Board {
    pub fn new(n: usize) -> Result<Board> {
        if !(MIN_SIZE..=MAX_SIZE).contains(&n) {
            return Err(Error::UnsupportedSize(n));
        }
        let cells = n * n;
        let bit = |r: usize, c: usize| 1u32 << (cells - 1 - (n * r + c));

        let mut lines = Vec::with_capacity(2 * n + 2);
        for r in 0..n {
            lines.push((0..n).fold(0, |m, c| m | bit(r, c)));
        }
        for c in 0..n {
            lines.push((0..n).fold(0, |m, r| m | bit(r, c)));
        }
        lines.push((0..n).fold(0, |m, i| m | bit(i, i)));
        lines.push((0..n).fold(0, |m, i| m | bit(i, n - 1 - i)));

        let both = |m: u32| (u64::from(m) << X_OFFSET) | u64::from(m);
        let mut border = Vec::new();
        let mut moves = Vec::new();
        let mut cell_moves = vec![(0, 0); cells];
        for k in 0..cells {
            let (r, c) = (k / n, k % n);
            if r != 0 && r != n - 1 && c != 0 && c != n - 1 {
                continue;
            }
            border.push(k as u8);
            let first = moves.len();
            for end in InsertEnd::ALL {
                let (segment, insert, shift, toward_msb) = match end {
                    InsertEnd::RowLeft if c != 0 => {
                        ((0..=c).fold(0, |m, j| m | bit(r, j)), bit(r, 0), 1, false)
                    }
                    InsertEnd::RowRight if c != n - 1 => {
                        ((c..n).fold(0, |m, j| m | bit(r, j)), bit(r, n - 1), 1, true)
                    }
                    InsertEnd::ColTop if r != 0 => (
                        (0..=r).fold(0, |m, i| m | bit(i, c)),
                        bit(0, c),
                        n as u32,
                        false,
                    ),
                    InsertEnd::ColBottom if r != n - 1 => (
                        (r..n).fold(0, |m, i| m | bit(i, c)),
                        bit(n - 1, c),
                        n as u32,
                        true,
                    ),
                    _ => continue,
                };
                moves.push(MoveEntry {
                    mv: Move {
                        cell: k as u8,
                        insert_end: end,
                    },
                    mask: both(segment),
                    insert_x: u64::from(insert) << X_OFFSET,
                    insert_o: u64::from(insert),
                    take_x: u64::from(bit(r, c)) << X_OFFSET,
                    take_o: u64::from(bit(r, c)),
                    shift,
                    toward_msb,
                });
            }
            cell_moves[k] = (first, moves.len());
        }

        let perms = std::array::from_fn(|t| {
            let sym = Symmetry(t as u8);
            (0..cells)
                .map(|k| {
                    let (r, c) = sym.map(n, k / n, k % n);
                    (n * r + c) as u8
                })
                .collect()
        });

        Ok(Board {
            n,
            cells,
            field_mask: if cells == 32 {
                u32::MAX
            } else {
                (1 << cells) - 1
            },
            x_lines: lines.iter().map(|&m| u64::from(m) << X_OFFSET).collect(),
            o_lines: lines.iter().map(|&m| u64::from(m)).collect(),
            border,
            moves,
            cell_moves,
            perms,
        })
    }

    /// Shared, lazily built board for size `n`.
    pub fn for_size(n: usize) -> Result<&'static Board> {
        static BOARDS: [OnceLock<Board>; MAX_SIZE - MIN_SIZE + 1] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        if !(MIN_SIZE..=MAX_SIZE).contains(&n) {
            return Err(Error::UnsupportedSize(n));
        }
        Ok(BOARDS[n - MIN_SIZE].get_or_init(|| Board::new(n).expect("size checked")))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn field_mask(&self) -> u32 {
        self.field_mask
    }

    /// Row stride in bits, the shift distance of vertical pushes.
    pub fn row_stride(&self) -> u32 {
        self.n as u32
    }

    pub fn border_cells(&self) -> &[u8] {
        &self.border
    }

    /// Line masks in the X field followed by the same lines in the O field.
    pub fn line_masks(&self) -> impl Iterator<Item = u64> + '_ {
        self.x_lines.iter().chain(&self.o_lines).copied()
    }

    /// Every (move, mover) constant, ordered by cell then insertion end.
    pub fn move_table(&self) -> &[MoveEntry] {
        &self.moves
    }

    pub fn moves_from_cell(&self, cell: usize) -> &[MoveEntry] {
        let (a, b) = self.cell_moves[cell];
        &self.moves[a..b]
    }

    pub fn cell_bit(&self, cell: usize) -> u32 {
        1 << (self.cells - 1 - cell)
    }

    pub fn cell(&self, s: QState, cell: usize) -> Option<Symbol> {
        let bit = self.cell_bit(cell);
        if s.x_field() & bit != 0 {
            Some(Symbol::X)
        } else if s.o_field() & bit != 0 {
            Some(Symbol::O)
        } else {
            None
        }
    }

    pub fn is_valid(&self, s: QState) -> bool {
        let (x, o) = (s.x_field(), s.o_field());
        x & o == 0 && (x | o) & !self.field_mask == 0
    }

    /// Parses `rows/joined/by/slashes P`. With `P = O` the symbols are
    /// flipped so that the returned state has X to move.
    pub fn parse(&self, text: &str) -> Result<QState> {
        let (s, active) = self.parse_raw(text)?;
        Ok(match active {
            Symbol::X => s,
            Symbol::O => s.swap(),
        })
    }

    /// Parses without normalizing; returns the board as written and the
    /// player to move.
    pub fn parse_raw(&self, text: &str) -> Result<(QState, Symbol)> {
        let fail = |reason: String| Error::Parse {
            text: text.to_string(),
            reason,
        };
        let (rows, player) = text
            .trim()
            .split_once(' ')
            .ok_or_else(|| fail("expected `<rows> <player>`".into()))?;
        let active = match player.trim() {
            "X" => Symbol::X,
            "O" => Symbol::O,
            p => return Err(fail(format!("unknown active player {p:?}"))),
        };
        let rows: Vec<&str> = rows.split('/').collect();
        if rows.len() != self.n {
            return Err(fail(format!(
                "expected {} rows, got {}",
                self.n,
                rows.len()
            )));
        }
        let (mut x, mut o) = (0u32, 0u32);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != self.n {
                return Err(fail(format!("row {r} does not have {} cells", self.n)));
            }
            for (c, ch) in row.chars().enumerate() {
                let bit = self.cell_bit(self.n * r + c);
                match ch {
                    '.' => {}
                    'X' => x |= bit,
                    'O' => o |= bit,
                    _ => return Err(fail(format!("illegal character {ch:?}"))),
                }
            }
        }
        Ok((QState::from_fields(x, o), active))
    }

    /// Renders the board with X to move.
    pub fn render(&self, s: QState) -> String {
        self.render_as(s, Symbol::X)
    }

    pub fn render_as(&self, s: QState, active: Symbol) -> String {
        let mut out = String::with_capacity(self.cells + self.n + 2);
        for r in 0..self.n {
            if r > 0 {
                out.push('/');
            }
            for c in 0..self.n {
                out.push(match self.cell(s, self.n * r + c) {
                    Some(sym) => sym.as_char(),
                    None => '.',
                });
            }
        }
        out.push(' ');
        out.push(active.as_char());
        out
    }

    #[inline]
    pub fn has_line(&self, s: QState, symbol: Symbol) -> bool {
        let lines = match symbol {
            Symbol::X => &self.x_lines,
            Symbol::O => &self.o_lines,
        };
        lines.iter().any(|&m| s.0 & m == m)
    }

    /// X lines are checked first: a move creating lines of both symbols
    /// loses for the mover, who is O after the swap.
    #[inline]
    pub fn terminal_outcome(&self, s: QState) -> Option<Outcome> {
        if self.has_line(s, Symbol::X) {
            Some(Outcome::Win)
        } else if self.has_line(s, Symbol::O) {
            Some(Outcome::Loss)
        } else {
            None
        }
    }

    #[inline]
    pub fn is_terminal(&self, s: QState) -> bool {
        self.line_masks().any(|m| s.0 & m == m)
    }

    /// Legal move constants for `s`, assuming it is not terminal.
    #[inline]
    pub fn legal_entries(&self, s: QState) -> impl Iterator<Item = &MoveEntry> + '_ {
        self.moves.iter().filter(move |e| s.0 & e.take_o == 0)
    }

    pub fn legal_moves(&self, s: QState) -> Result<Vec<Move>> {
        if self.is_terminal(s) {
            return Err(Error::TerminalState);
        }
        Ok(self.legal_entries(s).map(|e| e.mv).collect())
    }

    pub fn entry(&self, m: Move) -> Option<&MoveEntry> {
        let cell = m.cell as usize;
        if cell >= self.cells {
            return None;
        }
        self.moves_from_cell(cell).iter().find(|e| e.mv == m)
    }

    /// Plays `m` for X without swapping the players.
    pub fn apply_move(&self, s: QState, m: Move) -> Result<QState> {
        if self.is_terminal(s) {
            return Err(Error::TerminalState);
        }
        let entry = self
            .entry(m)
            .filter(|e| s.0 & e.take_o == 0)
            .ok_or_else(|| Error::IllegalMove(m.to_string()))?;
        Ok(entry.apply_for(s, Symbol::X))
    }

    /// Distinct successor states, each normalized so the opponent is X.
    pub fn children(&self, s: QState) -> Result<Vec<QState>> {
        if self.is_terminal(s) {
            return Err(Error::TerminalState);
        }
        let mut out: Vec<QState> = self.legal_entries(s).map(|e| e.child(s)).collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Calls `f` for every nonterminal predecessor of `s`, possibly more
    /// than once for the same predecessor. `same_tiles` selects
    /// predecessors whose move took an X tile (same tile count as `s`);
    /// otherwise the move took an empty tile.
    #[inline]
    pub fn for_each_parent(&self, s: QState, same_tiles: bool, mut f: impl FnMut(QState)) {
        let t = s.swap();
        for e in &self.moves {
            if t.0 & e.insert_x == 0 {
                continue;
            }
            let mut p = e.unapply(t);
            if same_tiles {
                p.0 |= e.take_x;
            }
            if !self.is_terminal(p) {
                f(p);
            }
        }
    }

    /// Distinct nonterminal predecessors of `s`.
    pub fn parents(&self, s: QState) -> Vec<QState> {
        let mut out = Vec::new();
        self.for_each_parent(s, true, |p| out.push(p));
        self.for_each_parent(s, false, |p| out.push(p));
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn transform(&self, s: QState, t: Symmetry) -> QState {
        let perm = &self.perms[t.0 as usize];
        let (x, o) = (s.x_field(), s.o_field());
        let (mut tx, mut to) = (0, 0);
        for k in 0..self.cells {
            let bit = self.cell_bit(k);
            let dest = self.cell_bit(perm[k] as usize);
            if x & bit != 0 {
                tx |= dest;
            }
            if o & bit != 0 {
                to |= dest;
            }
        }
        QState::from_fields(tx, to)
    }

    /// Smallest encoding among the eight symmetric images.
    pub fn canonicalize(&self, s: QState) -> QState {
        Symmetry::all()
            .map(|t| self.transform(s, t))
            .min()
            .expect("eight symmetries")
    }

    /// Composition `a` after `b`, derived from the cell permutations.
    pub fn compose(&self, a: Symmetry, b: Symmetry) -> Symmetry {
        let pa = &self.perms[a.0 as usize];
        let pb = &self.perms[b.0 as usize];
        let composed: Vec<u8> = pb.iter().map(|&k| pa[k as usize]).collect();
        Symmetry::all()
            .find(|t| self.perms[t.0 as usize] == composed)
            .expect("dihedral group is closed")
    }

    pub fn inverse(&self, t: Symmetry) -> Symmetry {
        Symmetry::all()
            .find(|&u| self.compose(u, t) == Symmetry::IDENTITY)
            .expect("every symmetry has an inverse")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Array model of the rules: cells hold 0 (empty), 1 (X) or 2 (O).
    fn to_cells(b: &Board, s: QState) -> Vec<u8> {
        (0..b.cells())
            .map(|k| match b.cell(s, k) {
                None => 0,
                Some(Symbol::X) => 1,
                Some(Symbol::O) => 2,
            })
            .collect()
    }

    fn from_cells(b: &Board, cells: &[u8]) -> QState {
        let (mut x, mut o) = (0, 0);
        for (k, &v) in cells.iter().enumerate() {
            match v {
                1 => x |= b.cell_bit(k),
                2 => o |= b.cell_bit(k),
                _ => {}
            }
        }
        QState::from_fields(x, o)
    }

    fn naive_push(n: usize, cells: &[u8], m: Move, mover: u8) -> Vec<u8> {
        let mut out = cells.to_vec();
        let (r, c) = (m.cell as usize / n, m.cell as usize % n);
        match m.insert_end {
            InsertEnd::RowLeft => {
                for j in (1..=c).rev() {
                    out[n * r + j] = out[n * r + j - 1];
                }
                out[n * r] = mover;
            }
            InsertEnd::RowRight => {
                for j in c..n - 1 {
                    out[n * r + j] = out[n * r + j + 1];
                }
                out[n * r + n - 1] = mover;
            }
            InsertEnd::ColTop => {
                for i in (1..=r).rev() {
                    out[n * i + c] = out[n * (i - 1) + c];
                }
                out[c] = mover;
            }
            InsertEnd::ColBottom => {
                for i in r..n - 1 {
                    out[n * i + c] = out[n * (i + 1) + c];
                }
                out[n * (n - 1) + c] = mover;
            }
        }
        out
    }

    fn naive_moves(n: usize, cells: &[u8]) -> Vec<Move> {
        let mut out = Vec::new();
        for k in 0..n * n {
            let (r, c) = (k / n, k % n);
            let border = r == 0 || c == 0 || r == n - 1 || c == n - 1;
            if !border || cells[k] == 2 {
                continue;
            }
            for end in InsertEnd::ALL {
                let ok = match end {
                    InsertEnd::RowLeft => c != 0,
                    InsertEnd::RowRight => c != n - 1,
                    InsertEnd::ColTop => r != 0,
                    InsertEnd::ColBottom => r != n - 1,
                };
                if ok {
                    out.push(Move {
                        cell: k as u8,
                        insert_end: end,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn spec_invariants_per_size() {
        for n in MIN_SIZE..=MAX_SIZE {
            let b = Board::new(n).unwrap();
            assert_eq!(b.border_cells().len(), 4 * n - 4);
            assert_eq!(b.x_lines.len(), 2 * n + 2);
            assert!(b.line_masks().all(|m| m.count_ones() as usize == n));
            assert_eq!(b.row_stride(), n as u32);
        }
        assert!(matches!(Board::new(6), Err(Error::UnsupportedSize(6))));
        assert!(matches!(Board::new(2), Err(Error::UnsupportedSize(2))));
    }

    #[test]
    fn parse_and_render() {
        let b5 = Board::for_size(5).unwrap();
        assert_eq!(
            b5.parse("...../...../...../...../..... X").unwrap(),
            QState::EMPTY
        );
        let b4 = Board::for_size(4).unwrap();
        let s = b4.parse("XOOO/OOXO/OXXO/OOOX X").unwrap();
        assert_eq!(s.x_count(), 5);
        assert_eq!(s.o_count(), 11);
        assert_eq!(b4.render(s), "XOOO/OOXO/OXXO/OOOX X");
        // O to move is stored with the symbols flipped.
        let flipped = b4.parse("XOOO/OOXO/OXXO/OOOX O").unwrap();
        assert_eq!(flipped, s.swap());

        for bad in [
            "XOOO/OOXO/OXXO X",
            "XOOO/OOXO/OXXO/OOO X",
            "XOOO/OOXO/OXXO/OOOZ X",
            "XOOO/OOXO/OXXO/OOOX",
            "XOOO/OOXO/OXXO/OOOX Y",
        ] {
            assert!(matches!(b4.parse(bad), Err(Error::Parse { .. })), "{bad}");
        }
    }

    #[test]
    fn encoding_matches_worked_example() {
        // O to move; the fields are stored as drawn, without swapping.
        let b = Board::for_size(5).unwrap();
        let (s, active) = b.parse_raw("..OO./.XO../XXXOX/OX.../.OX.. O").unwrap();
        assert_eq!(active, Symbol::O);
        let drawn = "0000000 00000 01000 11101 01000 00100 0000000 00110 00100 00010 10000 01000";
        let bits = u64::from_str_radix(&drawn.replace(' ', ""), 2).unwrap();
        assert_eq!(s.0, bits);

        let entry = b
            .entry(Move {
                cell: 9,
                insert_end: InsertEnd::RowLeft,
            })
            .unwrap();
        let mask = "0000000 00000 11111 00000 00000 00000 0000000 00000 11111 00000 00000 00000";
        let insert = "0000000 00000 00000 00000 00000 00000 0000000 00000 10000 00000 00000 00000";
        assert_eq!(
            entry.mask,
            u64::from_str_radix(&mask.replace(' ', ""), 2).unwrap()
        );
        assert_eq!(
            entry.insert_o,
            u64::from_str_radix(&insert.replace(' ', ""), 2).unwrap()
        );
        assert!(!entry.toward_msb);
        assert_eq!(entry.shift, 1);

        let after = entry.apply_for(s, Symbol::O);
        assert_eq!(
            b.render_as(after, Symbol::X),
            "..OO./O.XO./XXXOX/OX.../.OX.. X"
        );

        // Same move through the normalized path.
        let normalized = b.parse("..OO./.XO../XXXOX/OX.../.OX.. O").unwrap();
        let child = b.apply_move(normalized, entry.mv).unwrap().swap();
        assert_eq!(child, b.parse("..OO./O.XO./XXXOX/OX.../.OX.. X").unwrap());
    }

    #[test]
    fn swap_is_an_involution() {
        let b = Board::for_size(4).unwrap();
        assert_eq!(QState::EMPTY.swap(), QState::EMPTY);
        let s1 = b.parse("..OO/.XO./X.X./.... X").unwrap();
        let s4 = b.parse("..XX/.OX./O.O./.... X").unwrap();
        assert_eq!(s1.swap(), s4);
        assert_eq!(s1.swap().swap(), s1);
    }

    #[test]
    fn lines_and_terminals() {
        let b = Board::for_size(4).unwrap();
        assert!(!b.has_line(QState::EMPTY, Symbol::X));
        assert_eq!(b.terminal_outcome(QState::EMPTY), None);

        let last = b.parse("XOOX/X.XO/OO.O/XXXX X").unwrap();
        assert!(b.has_line(last, Symbol::X));
        assert_eq!(b.terminal_outcome(last), Some(Outcome::Win));

        let loss_in_one = b.parse("XOOO/OOXO/OXXO/OOOX X").unwrap();
        assert!(!b.has_line(loss_in_one, Symbol::X));
        assert!(!b.has_line(loss_in_one, Symbol::O));

        let both = b.parse("XXXX/OOOO/..../.... X").unwrap();
        assert_eq!(b.terminal_outcome(both), Some(Outcome::Win));
        let o_only = b.parse("X.../OOOO/..../X... X").unwrap();
        assert_eq!(b.terminal_outcome(o_only), Some(Outcome::Loss));

        let diag = b.parse("O.../.O../..O./...O X").unwrap();
        assert_eq!(b.terminal_outcome(diag), Some(Outcome::Loss));
        let anti = b.parse("...X/..X./.X../X... X").unwrap();
        assert_eq!(b.terminal_outcome(anti), Some(Outcome::Win));
    }

    #[test]
    fn line_masks_match_scan() {
        let b = Board::for_size(3).unwrap();
        let n = 3;
        for code in 0..3u32.pow(9) {
            let cells: Vec<u8> = (0..9).map(|k| ((code / 3u32.pow(k)) % 3) as u8).collect();
            let s = from_cells(&b, &cells);
            for (sym, v) in [(Symbol::X, 1), (Symbol::O, 2)] {
                let mut found = false;
                for i in 0..n {
                    found |= (0..n).all(|j| cells[n * i + j] == v);
                    found |= (0..n).all(|j| cells[n * j + i] == v);
                }
                found |= (0..n).all(|i| cells[n * i + i] == v);
                found |= (0..n).all(|i| cells[n * i + n - 1 - i] == v);
                assert_eq!(b.has_line(s, sym), found);
            }
        }
    }

    #[test]
    fn move_counts() {
        let b5 = Board::for_size(5).unwrap();
        assert_eq!(b5.legal_moves(QState::EMPTY).unwrap().len(), 44);
        assert_eq!(b5.children(QState::EMPTY).unwrap().len(), 16);
        let b4 = Board::for_size(4).unwrap();
        assert_eq!(b4.legal_moves(QState::EMPTY).unwrap().len(), 32);
        assert_eq!(b4.children(QState::EMPTY).unwrap().len(), 12);

        let loss_in_one = b4.parse("XOOO/OOXO/OXXO/OOOX X").unwrap();
        let moves = b4.legal_moves(loss_in_one).unwrap();
        assert_eq!(moves.len(), 4);
        assert!(moves.iter().all(|m| m.cell == 0 || m.cell == 15));
        assert_eq!(moves, naive_moves(4, &to_cells(b4, loss_in_one)));

        let terminal = b4.parse("XXXX/..../..../.... X").unwrap();
        assert!(matches!(
            b4.legal_moves(terminal),
            Err(Error::TerminalState)
        ));
        assert!(matches!(b4.children(terminal), Err(Error::TerminalState)));
    }

    #[test]
    fn move_order_is_canonical() {
        let b = Board::for_size(5).unwrap();
        let moves = b.legal_moves(QState::EMPTY).unwrap();
        let mut sorted = moves.clone();
        sorted.sort();
        assert_eq!(moves, sorted);
        assert_eq!(moves, naive_moves(5, &[0; 25]));
    }

    #[test]
    fn simple_pushes() {
        for n in MIN_SIZE..=MAX_SIZE {
            let b = Board::for_size(n).unwrap();
            let s = b
                .apply_move(
                    QState::EMPTY,
                    Move {
                        cell: 0,
                        insert_end: InsertEnd::RowRight,
                    },
                )
                .unwrap();
            assert_eq!(s, QState::from_fields(b.cell_bit(n - 1), 0));
        }
        let b = Board::for_size(4).unwrap();
        let s = b.parse("O.../..../..../.... X").unwrap();
        let illegal = Move {
            cell: 0,
            insert_end: InsertEnd::RowRight,
        };
        assert!(matches!(
            b.apply_move(s, illegal),
            Err(Error::IllegalMove(_))
        ));
        let center = Move {
            cell: 5,
            insert_end: InsertEnd::RowRight,
        };
        assert!(matches!(
            b.apply_move(s, center),
            Err(Error::IllegalMove(_))
        ));
    }

    #[test]
    fn pushes_match_array_model_on_all_3x3() {
        let b = Board::for_size(3).unwrap();
        let mut checked = 0u64;
        for code in 0..3u32.pow(9) {
            let cells: Vec<u8> = (0..9).map(|k| ((code / 3u32.pow(k)) % 3) as u8).collect();
            let s = from_cells(b, &cells);
            if b.is_terminal(s) {
                continue;
            }
            let moves = b.legal_moves(s).unwrap();
            assert_eq!(moves, naive_moves(3, &cells));
            for m in moves {
                let expect = from_cells(b, &naive_push(3, &cells, m, 1));
                assert_eq!(b.apply_move(s, m).unwrap(), expect);
                checked += 1;
            }
            // The O-mover constants are exercised on the same boards.
            for e in b.move_table().iter().filter(|e| s.0 & e.take_x == 0) {
                let expect = from_cells(b, &naive_push(3, &cells, e.mv, 2));
                assert_eq!(e.apply_for(s, Symbol::O), expect);
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn symmetries_match_figure() {
        let b = Board::for_size(4).unwrap();
        let s1 = b.parse("..OO/.XO./X.X./.... X").unwrap();
        let s2 = b.parse(".X../..X./.XOO/...O X").unwrap();
        let s3 = b.parse("OO../.OX./.X.X/.... X").unwrap();
        assert_eq!(b.transform(s1, Symmetry::ROT90), s2);
        assert_eq!(b.transform(s1, Symmetry::MIRROR), s3);
        assert_eq!(b.transform(s1, Symmetry::IDENTITY), s1);
        assert_eq!(b.canonicalize(s1), b.canonicalize(s2));
        assert_eq!(b.canonicalize(QState::EMPTY), QState::EMPTY);
    }

    #[test]
    fn dihedral_group_table() {
        // Symmetries as 2x2 integer matrices acting on centred coordinates.
        fn matrix(t: Symmetry) -> [i32; 4] {
            let mut m = if t.mirrored() {
                [1, 0, 0, -1]
            } else {
                [1, 0, 0, 1]
            };
            // (r, c) -> (c, -r) on centred coordinates.
            for _ in 0..t.rotations() {
                m = [m[2], m[3], -m[0], -m[1]];
            }
            m
        }
        fn mul(a: [i32; 4], b: [i32; 4]) -> [i32; 4] {
            [
                a[0] * b[0] + a[1] * b[2],
                a[0] * b[1] + a[1] * b[3],
                a[2] * b[0] + a[3] * b[2],
                a[2] * b[1] + a[3] * b[3],
            ]
        }
        for n in MIN_SIZE..=MAX_SIZE {
            let b = Board::for_size(n).unwrap();
            for t in Symmetry::all() {
                for u in Symmetry::all() {
                    let c = b.compose(t, u);
                    assert_eq!(matrix(c), mul(matrix(t), matrix(u)));
                }
                assert_eq!(b.compose(t, b.inverse(t)), Symmetry::IDENTITY);
            }
        }
    }

    #[test]
    fn parents_of_special_states() {
        let b = Board::for_size(4).unwrap();
        assert!(b.parents(QState::EMPTY).is_empty());
        let orphan = b.parse("..XX/OOOX/.XO./X.O. X").unwrap();
        assert!(b.parents(orphan).is_empty());
    }

    #[test]
    fn children_and_parents_agree_on_all_3x3() {
        let b = Board::for_size(3).unwrap();
        let states: Vec<QState> = (0..3u32.pow(9))
            .map(|code| {
                let cells: Vec<u8> = (0..9).map(|k| ((code / 3u32.pow(k)) % 3) as u8).collect();
                from_cells(b, &cells)
            })
            .collect();
        let mut inverted: std::collections::HashMap<QState, Vec<QState>> = Default::default();
        for &p in &states {
            if b.is_terminal(p) {
                continue;
            }
            for c in b.children(p).unwrap() {
                inverted.entry(c).or_default().push(p);
                let (x, o) = (p.x_count(), p.o_count());
                assert_eq!(c.x_count(), o);
                assert!(c.o_count() == x || c.o_count() == x + 1);
            }
        }
        for &s in &states {
            let mut expect = inverted.remove(&s).unwrap_or_default();
            expect.sort_unstable();
            assert_eq!(b.parents(s), expect, "{}", b.render(s));
        }
    }
}
