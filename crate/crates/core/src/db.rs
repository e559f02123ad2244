//! Read access to a solved database directory.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::board::{Board, Outcome, QState};
use crate::error::{Error, Result};
use crate::rank::{ClassId, RankTables};
use crate::store::{class_path, ClassStore, Manifest, NO_STEP};

/// Stored value of one state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Value {
    pub outcome: Outcome,
    pub step: Option<u8>,
}

/// A database directory with its manifest and a cache of loaded classes.
///
/// `capacity` bounds the number of classes held at once; the least recently
/// used class is dropped first.
pub struct Database {
    dir: PathBuf,
    manifest: Manifest,
    board: &'static Board,
    tables: &'static RankTables,
    capacity: usize,
    cache: Mutex<Vec<(ClassId, Arc<ClassStore>)>>,
}

impl std::fmt::Debug for Database {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Database")
            .field("dir", &self.dir)
            .field("n", &self.manifest.n)
            .finish_non_exhaustive()
    }
}

impl Database {
    /// Opens lazily with an LRU of `capacity` classes.
    pub fn open(dir: impl AsRef<Path>, capacity: usize) -> Result<Database> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = Manifest::read(&dir)?;
        Ok(Database {
            board: Board::for_size(manifest.n)?,
            tables: RankTables::for_size(manifest.n)?,
            dir,
            manifest,
            capacity: capacity.max(1),
            cache: Mutex::new(Vec::new()),
        })
    }

    /// Opens and loads every class listed in the manifest.
    pub fn open_preloaded(dir: impl AsRef<Path>) -> Result<Database> {
        let db = Database::open(dir, usize::MAX)?;
        for e in &db.manifest.classes {
            db.class(ClassId::new(e.x, e.o))?;
        }
        Ok(db)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn n(&self) -> usize {
        self.manifest.n
    }

    pub fn board(&self) -> &'static Board {
        self.board
    }

    pub fn tables(&self) -> &'static RankTables {
        self.tables
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn has_steps(&self) -> bool {
        self.manifest.with_steps
    }

    pub fn contains(&self, c: ClassId) -> bool {
        self.manifest.entry(c).is_some()
    }

    /// Classes listed in the manifest, ordered by x then o.
    pub fn class_ids(&self) -> Vec<ClassId> {
        self.manifest
            .classes
            .iter()
            .map(|e| ClassId::new(e.x, e.o))
            .collect()
    }

    pub fn class(&self, c: ClassId) -> Result<Arc<ClassStore>> {
        {
            let mut cache = self.cache.lock().expect("cache lock");
            if let Some(pos) = cache.iter().position(|(id, _)| *id == c) {
                let hit = cache.remove(pos);
                let store = Arc::clone(&hit.1);
                cache.insert(0, hit);
                return Ok(store);
            }
        }
        if !self.contains(c) {
            return Err(Error::MissingClass {
                x: c.x,
                o: c.o,
                dir: self.dir.clone(),
            });
        }
        let store = Arc::new(ClassStore::load(&class_path(&self.dir, c))?);
        let mut cache = self.cache.lock().expect("cache lock");
        if !cache.iter().any(|(id, _)| *id == c) {
            cache.insert(0, (c, Arc::clone(&store)));
            cache.truncate(self.capacity);
        }
        Ok(store)
    }

    pub fn lookup(&self, s: QState) -> Result<Value> {
        if !self.board.is_valid(s) {
            return Err(Error::Parse {
                text: s.to_string(),
                reason: "state does not fit this board".into(),
            });
        }
        let (c, i) = self.tables.state_to_index(s);
        let store = self.class(c)?;
        let step = store.step(i);
        Ok(Value {
            outcome: store.outcome(i),
            step: (step != NO_STEP).then_some(step),
        })
    }
}
