//! Packed per-class outcome and step arrays and their on-disk format.
//!
//! Outcomes take two bits per entry, least significant pair first within a
//! byte (0 = Draw, 1 = Win, 2 = Loss, 3 = WinOrDraw). Steps take one byte
//! per entry, with [`NO_STEP`] for Draw. All cells are atomics so workers
//! can share a store; sub-byte writes go through compare-and-swap.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU8, Ordering::Relaxed};

use serde::{Deserialize, Serialize};

use crate::board::Outcome;
use crate::error::{Error, Result};
use crate::rank::ClassId;

pub const MAGIC: &[u8; 4] = b"QXOD";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
pub const NO_STEP: u8 = 255;
pub const MAX_STEP: u8 = 254;

const FLAG_STEPS: u8 = 1;

fn atomic_bytes(len: usize, fill: u8) -> Result<Box<[AtomicU8]>> {
    let mut v: Vec<AtomicU8> = Vec::new();
    v.try_reserve_exact(len)
        .map_err(|e| Error::Config(format!("cannot allocate {len} bytes: {e}")))?;
    v.extend((0..len).map(|_| AtomicU8::new(fill)));
    Ok(v.into_boxed_slice())
}

fn as_bytes_mut(cells: &mut [AtomicU8]) -> &mut [u8] {
    // SAFETY: AtomicU8 has the size and alignment of u8, and the exclusive
    // borrow rules out concurrent atomic access for the slice's lifetime.
    unsafe { std::slice::from_raw_parts_mut(cells.as_mut_ptr().cast::<u8>(), cells.len()) }
}

fn as_bytes(cells: &[AtomicU8]) -> Vec<u8> {
    cells.iter().map(|c| c.load(Relaxed)).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub win: u64,
    pub loss: u64,
    pub draw: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.win + self.loss + self.draw
    }

    pub fn add(&mut self, other: Counts) {
        self.win += other.win;
        self.loss += other.loss;
        self.draw += other.draw;
    }
}

/// Outcomes (and optionally steps) of one class.
pub struct ClassStore {
    class: ClassId,
    n: u8,
    len: u64,
    outcomes: Box<[AtomicU8]>,
    steps: Option<Box<[AtomicU8]>>,
    sealed: Option<Box<[AtomicU8]>>,
}

impl std::fmt::Debug for ClassStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClassStore")
            .field("class", &self.class)
            .field("n", &self.n)
            .field("len", &self.len)
            .field("steps", &self.steps.is_some())
            .finish()
    }
}

impl ClassStore {
    /// All entries Draw, all steps [`NO_STEP`].
    pub fn allocate(n: usize, class: ClassId, len: u64, with_steps: bool) -> Result<ClassStore> {
        let bytes = usize::try_from(len.div_ceil(4))
            .map_err(|_| Error::Config(format!("class {class} does not fit in memory")))?;
        let steps = if with_steps {
            Some(atomic_bytes(len as usize, NO_STEP)?)
        } else {
            None
        };
        Ok(ClassStore {
            class,
            n: n as u8,
            len,
            outcomes: atomic_bytes(bytes, 0)?,
            steps,
            sealed: None,
        })
    }

    pub fn class(&self) -> ClassId {
        self.class
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn has_steps(&self) -> bool {
        self.steps.is_some()
    }

    pub fn payload_len(&self) -> usize {
        self.outcomes.len() + self.steps.as_ref().map_or(0, |s| s.len())
    }

    /// Turns on terminal sealing: sealed entries reject checked writes.
    pub fn enable_seal(&mut self) -> Result<()> {
        if self.sealed.is_none() {
            self.sealed = Some(atomic_bytes(self.len.div_ceil(8) as usize, 0)?);
        }
        Ok(())
    }

    #[inline]
    pub fn seal(&self, index: u64) {
        if let Some(bits) = &self.sealed {
            bits[(index / 8) as usize].fetch_or(1 << (index % 8), Relaxed);
        }
    }

    #[inline]
    pub fn is_sealed(&self, index: u64) -> bool {
        self.sealed
            .as_ref()
            .is_some_and(|bits| bits[(index / 8) as usize].load(Relaxed) & (1 << (index % 8)) != 0)
    }

    fn check(&self, index: u64) -> Result<()> {
        if index >= self.len {
            return Err(Error::IndexOutOfRange {
                x: self.class.x,
                o: self.class.o,
                index,
                size: self.len,
            });
        }
        Ok(())
    }

    /// Unchecked read.
    #[inline]
    pub fn outcome(&self, index: u64) -> Outcome {
        let byte = self.outcomes[(index >> 2) as usize].load(Relaxed);
        Outcome::from_bits(byte >> ((index & 3) * 2))
    }

    /// Unchecked write.
    #[inline]
    pub fn store_outcome(&self, index: u64, value: Outcome) {
        let shift = (index & 3) * 2;
        let cell = &self.outcomes[(index >> 2) as usize];
        let _ = cell.fetch_update(Relaxed, Relaxed, |b| {
            Some((b & !(3 << shift)) | (value.bits() << shift))
        });
    }

    /// Replaces the outcome with `to` if the current value is Draw or
    /// WinOrDraw (or only Draw when `only_draw`). Returns the value seen.
    #[inline]
    pub fn promote(&self, index: u64, to: Outcome, only_draw: bool) -> Outcome {
        let shift = (index & 3) * 2;
        let cell = &self.outcomes[(index >> 2) as usize];
        let result = cell.fetch_update(Relaxed, Relaxed, |b| {
            let cur = Outcome::from_bits(b >> shift);
            let open = match cur {
                Outcome::Draw => true,
                Outcome::WinOrDraw => !only_draw,
                _ => false,
            };
            open.then_some((b & !(3 << shift)) | (to.bits() << shift))
        });
        match result {
            Ok(b) | Err(b) => Outcome::from_bits(b >> shift),
        }
    }

    #[inline]
    pub fn step(&self, index: u64) -> u8 {
        self.steps
            .as_ref()
            .map_or(NO_STEP, |s| s[index as usize].load(Relaxed))
    }

    #[inline]
    pub fn store_step(&self, index: u64, step: u8) {
        if let Some(s) = &self.steps {
            s[index as usize].store(step, Relaxed);
        }
    }

    /// Lowers the step to `step` if it is currently larger.
    #[inline]
    pub fn lower_step(&self, index: u64, step: u8) {
        if let Some(s) = &self.steps {
            s[index as usize].fetch_min(step, Relaxed);
        }
    }

    pub fn get_outcome(&self, index: u64) -> Result<Outcome> {
        self.check(index)?;
        Ok(self.outcome(index))
    }

    pub fn set_outcome(&self, index: u64, value: Outcome) -> Result<()> {
        self.check(index)?;
        if self.is_sealed(index) {
            return Err(Error::Sealed(index));
        }
        self.store_outcome(index, value);
        Ok(())
    }

    pub fn get_step(&self, index: u64) -> Result<Option<u8>> {
        self.check(index)?;
        if self.steps.is_none() {
            return Err(Error::StepsMissing);
        }
        Ok(Some(self.step(index)).filter(|&s| s != NO_STEP))
    }

    pub fn set_step(&self, index: u64, step: u8) -> Result<()> {
        self.check(index)?;
        if self.steps.is_none() {
            return Err(Error::StepsMissing);
        }
        if self.is_sealed(index) {
            return Err(Error::Sealed(index));
        }
        self.store_step(index, step);
        Ok(())
    }

    /// Splits `0..len` into about `parts` ranges whose bounds fall on byte
    /// boundaries of the outcome array, so no two ranges share a byte.
    pub fn shards(&self, parts: usize) -> Vec<Range<u64>> {
        byte_aligned_shards(self.len, parts)
    }

    pub fn counts(&self) -> Counts {
        let mut c = Counts::default();
        for i in 0..self.len {
            match self.outcome(i) {
                Outcome::Win => c.win += 1,
                Outcome::Loss => c.loss += 1,
                _ => c.draw += 1,
            }
        }
        c
    }

    pub fn has_transient(&self) -> bool {
        (0..self.len).any(|i| self.outcome(i) == Outcome::WinOrDraw)
    }

    fn payload(&self) -> Vec<u8> {
        let mut bytes = as_bytes(&self.outcomes);
        if let Some(s) = &self.steps {
            bytes.extend(as_bytes(s));
        }
        bytes
    }

    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&self.payload())
    }

    /// Writes the class file atomically (temporary file, then rename).
    /// Returns the payload checksum.
    pub fn save(&self, path: &Path) -> Result<u32> {
        if self.has_transient() {
            return Err(Error::IncompleteClass {
                x: self.class.x,
                o: self.class.o,
            });
        }
        let payload = self.payload();
        let crc = crc32fast::hash(&payload);
        let mut header = [0u8; HEADER_LEN];
        header[0..4].copy_from_slice(MAGIC);
        header[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        header[6] = self.n;
        header[7] = self.class.x as u8;
        header[8] = self.class.o as u8;
        header[9] = if self.has_steps() { FLAG_STEPS } else { 0 };
        header[16..24].copy_from_slice(&self.len.to_le_bytes());
        header[24..28].copy_from_slice(&crc.to_le_bytes());

        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(&header)?;
            w.write_all(&payload)?;
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(crc)
    }

    pub fn load(path: &Path) -> Result<ClassStore> {
        let corrupt = |reason: &str| Error::Corrupt {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|_| corrupt("truncated header"))?;
        if &header[0..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != FORMAT_VERSION {
            return Err(corrupt(&format!("unsupported format version {version}")));
        }
        let n = header[6] as usize;
        let class = ClassId::new(u32::from(header[7]), u32::from(header[8]));
        let with_steps = header[9] & FLAG_STEPS != 0;
        let len = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
        let crc = u32::from_le_bytes(header[24..28].try_into().expect("4 bytes"));

        let mut store = ClassStore::allocate(n, class, len, with_steps)?;
        let mut hasher = crc32fast::Hasher::new();
        {
            let buf = as_bytes_mut(&mut store.outcomes);
            r.read_exact(buf)
                .map_err(|_| corrupt("truncated payload"))?;
            hasher.update(buf);
        }
        if let Some(steps) = store.steps.as_mut() {
            let buf = as_bytes_mut(steps);
            r.read_exact(buf)
                .map_err(|_| corrupt("truncated payload"))?;
            hasher.update(buf);
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        if hasher.finalize() != crc {
            return Err(corrupt("checksum mismatch"));
        }
        if store.has_transient() {
            return Err(corrupt("transient outcome on disk"));
        }
        Ok(store)
    }
}

pub fn byte_aligned_shards(len: u64, parts: usize) -> Vec<Range<u64>> {
    let parts = parts.max(1) as u64;
    let chunk = len.div_ceil(parts).div_ceil(4).max(1) * 4;
    (0..len)
        .step_by(chunk as usize)
        .map(|start| start..(start + chunk).min(len))
        .collect()
}

pub fn class_file_name(c: ClassId) -> String {
    format!("class_{:02}_{:02}.qxod", c.x, c.o)
}

pub fn class_path(dir: &Path, c: ClassId) -> PathBuf {
    dir.join(class_file_name(c))
}

pub const MANIFEST_NAME: &str = "manifest.json";
pub const RULES: &str = "quixo-2p/no-reinsert-at-origin/x-line-first";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ClassEntry {
    pub x: u32,
    pub o: u32,
    pub entries: u64,
    pub crc32: u32,
    pub file: String,
    pub counts: Counts,
    pub iterations: u32,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct SolverMeta {
    pub wall_time_secs: f64,
    pub threads: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub n: usize,
    pub version: u16,
    pub rules: String,
    pub with_steps: bool,
    pub complete: bool,
    pub classes: Vec<ClassEntry>,
    pub solver: SolverMeta,
    pub totals: Counts,
}

impl Manifest {
    pub fn new(n: usize, with_steps: bool) -> Manifest {
        Manifest {
            n,
            version: FORMAT_VERSION,
            rules: RULES.to_string(),
            with_steps,
            complete: false,
            classes: Vec::new(),
            solver: SolverMeta::default(),
            totals: Counts::default(),
        }
    }

    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_NAME);
        if !path.is_file() {
            return Err(Error::ManifestNotFound(dir.to_path_buf()));
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join("manifest.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        fs::rename(tmp, dir.join(MANIFEST_NAME))?;
        Ok(())
    }

    pub fn entry(&self, c: ClassId) -> Option<&ClassEntry> {
        self.classes.iter().find(|e| e.x == c.x && e.o == c.o)
    }

    pub fn record(&mut self, entry: ClassEntry) {
        self.classes.retain(|e| (e.x, e.o) != (entry.x, entry.o));
        self.classes.push(entry);
        self.classes.sort_by_key(|e| (e.x, e.o));
        self.totals = Counts::default();
        for e in &self.classes {
            self.totals.add(e.counts);
        }
    }
}
