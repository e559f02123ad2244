//! Dense numbering of the states of one class `C(x, o)`.
//!
//! The index of a state is `ord(S_X) * C(n² - x, o) + ord(S_O)`, where
//! `S_X` is the raw X field, `S_O` is the O field with the X-occupied
//! positions squeezed out, and `ord` ranks a mask among all masks of the
//! same population count in ascending numeric order.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::board::{QState, MAX_SIZE, MIN_SIZE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassId {
    pub x: u32,
    pub o: u32,
}

impl ClassId {
    pub const fn new(x: u32, o: u32) -> ClassId {
        ClassId { x, o }
    }

    pub fn of(s: QState) -> ClassId {
        ClassId::new(s.x_count(), s.o_count())
    }

    pub fn tiles(self) -> u32 {
        self.x + self.o
    }

    /// Class holding the children of this class after the player swap when
    /// the move used an X tile.
    pub fn swapped(self) -> ClassId {
        ClassId::new(self.o, self.x)
    }

    pub fn is_valid(self, cells: usize) -> bool {
        (self.x + self.o) as usize <= cells
    }
}

impl std::fmt::Display for ClassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.x, self.o)
    }
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[inline]
fn has_bmi2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("bmi2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "bmi2")]
unsafe fn pext_bmi2(value: u32, mask: u32) -> u32 {
    std::arch::x86_64::_pext_u32(value, mask)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "bmi2")]
unsafe fn pdep_bmi2(value: u32, mask: u32) -> u32 {
    std::arch::x86_64::_pdep_u32(value, mask)
}

/// Gathers the bits of `value` selected by `mask` into the low bits.
#[inline]
pub fn extract_bits(value: u32, mask: u32) -> u32 {
    #[cfg(target_arch = "x86_64")]
    if has_bmi2() {
        // SAFETY: the CPU supports BMI2.
        return unsafe { pext_bmi2(value, mask) };
    }
    let (mut out, mut bit, mut m) = (0, 1, mask);
    while m != 0 {
        let low = m & m.wrapping_neg();
        if value & low != 0 {
            out |= bit;
        }
        bit <<= 1;
        m ^= low;
    }
    out
}

/// Scatters the low bits of `value` to the positions set in `mask`.
#[inline]
pub fn deposit_bits(value: u32, mask: u32) -> u32 {
    #[cfg(target_arch = "x86_64")]
    if has_bmi2() {
        // SAFETY: the CPU supports BMI2.
        return unsafe { pdep_bmi2(value, mask) };
    }
    let (mut out, mut bit, mut m) = (0, 1, mask);
    while m != 0 {
        let low = m & m.wrapping_neg();
        if value & bit != 0 {
            out |= low;
        }
        bit <<= 1;
        m ^= low;
    }
    out
}

/// `pop`/`ord` tables over all `2^(n²)` masks plus the inverse map.
pub struct RankTables {
    n: usize,
    cells: usize,
    ord: Vec<u32>,
    unrank: Vec<u32>,
    level_start: Vec<usize>,
    binom: Vec<Vec<u64>>,
    class_start: Vec<Vec<u64>>,
}

impl std::fmt::Debug for RankTables {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RankTables")
            .field("n", &self.n)
            .finish_non_exhaustive()
    }
}

impl RankTables {
    pub fn build(n: usize) -> Result<RankTables> {
        if !(MIN_SIZE..=MAX_SIZE).contains(&n) {
            return Err(Error::UnsupportedSize(n));
        }
        let cells = n * n;
        let binom: Vec<Vec<u64>> = (0..=cells as u64)
            .map(|a| (0..=cells as u64).map(|b| binomial(a, b)).collect())
            .collect();
        let mut level_start = vec![0usize; cells + 2];
        for p in 0..=cells {
            level_start[p + 1] = level_start[p] + binom[cells][p] as usize;
        }
        let total = 1usize << cells;
        let mut ord = vec![0u32; total];
        let mut unrank = vec![0u32; total];
        let mut next = vec![0u32; cells + 1];
        for m in 0..total {
            let p = (m as u32).count_ones() as usize;
            ord[m] = next[p];
            unrank[level_start[p] + next[p] as usize] = m as u32;
            next[p] += 1;
        }
        let mut class_start = vec![vec![0u64; cells + 1]; cells + 1];
        let mut acc = 0;
        for x in 0..=cells {
            for o in 0..=cells - x {
                class_start[x][o] = acc;
                acc += binom[cells][x] * binom[cells - x][o];
            }
        }
        Ok(RankTables {
            n,
            cells,
            ord,
            unrank,
            level_start,
            binom,
            class_start,
        })
    }

    /// Shared tables for size `n`, built on first use.
    pub fn for_size(n: usize) -> Result<&'static RankTables> {
        static TABLES: [OnceLock<RankTables>; MAX_SIZE - MIN_SIZE + 1] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        if !(MIN_SIZE..=MAX_SIZE).contains(&n) {
            return Err(Error::UnsupportedSize(n));
        }
        Ok(TABLES[n - MIN_SIZE].get_or_init(|| RankTables::build(n).expect("size checked")))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn pop(&self, mask: u32) -> u32 {
        mask.count_ones()
    }

    #[inline]
    pub fn ord(&self, mask: u32) -> u32 {
        self.ord[mask as usize]
    }

    /// The mask with population `pop` and rank `rank`.
    #[inline]
    pub fn mask_at(&self, pop: u32, rank: u32) -> u32 {
        self.unrank[self.level_start[pop as usize] + rank as usize]
    }

    #[inline]
    pub fn binom(&self, a: u32, b: u32) -> u64 {
        self.binom[a as usize][b as usize]
    }

    pub fn class_size(&self, c: ClassId) -> u64 {
        if !c.is_valid(self.cells) {
            return 0;
        }
        self.binom(self.cells as u32, c.x) * self.binom(self.cells as u32 - c.x, c.o)
    }

    /// All classes with `x + o <= n²`, ordered by x then o.
    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        (0..=self.cells as u32)
            .flat_map(move |x| (0..=self.cells as u32 - x).map(move |o| ClassId::new(x, o)))
    }

    /// Number of O placements once the Xs are fixed; the stride of `ord(S_X)`.
    #[inline]
    pub fn o_span(&self, c: ClassId) -> u64 {
        self.binom(self.cells as u32 - c.x, c.o)
    }

    #[inline]
    fn free_cells(&self, x_field: u32) -> u32 {
        !x_field & ((1u32 << self.cells) - 1)
    }

    /// Returns `(S_X, S_O)`.
    #[inline]
    pub fn compress_o_field(&self, s: QState) -> (u32, u32) {
        let x = s.x_field();
        (x, extract_bits(s.o_field(), self.free_cells(x)))
    }

    #[inline]
    pub fn expand_o_field(&self, sx: u32, so: u32) -> QState {
        QState::from_fields(sx, deposit_bits(so, self.free_cells(sx)))
    }

    /// Index within the state's class; `o_span` must be that class's.
    #[inline]
    pub fn index_with_span(&self, s: QState, o_span: u64) -> u64 {
        let (sx, so) = self.compress_o_field(s);
        u64::from(self.ord(sx)) * o_span + u64::from(self.ord(so))
    }

    pub fn state_to_index(&self, s: QState) -> (ClassId, u64) {
        let c = ClassId::of(s);
        (c, self.index_with_span(s, self.o_span(c)))
    }

    pub fn index_to_state(&self, c: ClassId, index: u64) -> Result<QState> {
        let size = self.class_size(c);
        if index >= size {
            return Err(Error::IndexOutOfRange {
                x: c.x,
                o: c.o,
                index,
                size,
            });
        }
        Ok(self.state_at(c, self.o_span(c), index))
    }

    /// Unchecked inverse of [`index_with_span`](Self::index_with_span).
    #[inline]
    pub fn state_at(&self, c: ClassId, o_span: u64, index: u64) -> QState {
        let sx = self.mask_at(c.x, (index / o_span) as u32);
        let so = self.mask_at(c.o, (index % o_span) as u32);
        self.expand_o_field(sx, so)
    }

    /// Position of the state in a numbering of all `3^(n²)` states that
    /// concatenates the classes in [`classes`](Self::classes) order.
    #[inline]
    pub fn global_index(&self, s: QState) -> u64 {
        let (c, i) = self.state_to_index(s);
        self.class_start[c.x as usize][c.o as usize] + i
    }

    pub fn class_offset(&self, c: ClassId) -> u64 {
        self.class_start[c.x as usize][c.o as usize]
    }

    pub fn total_states(&self) -> u64 {
        3u64.pow(self.cells as u32)
    }
}
