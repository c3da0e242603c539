//! Memoized action spaces keyed by (task id, library digest, canonical SMILES).
//!
//! Each key owns a once-cell, so concurrent misses on one key run the
//! proposer exactly once and every caller sees the stored value. Entries are
//! optionally persisted to an append-only file, one JSON record per line:
//!
//! ```text
//! {"task_id":"sim","library_digest":"9f2c...","smiles":"CCN","terminal":false,
//!  "actions":[{"template_id":"n_alkylation","input_slot":0,
//!              "building_blocks":["CCBr"],"product":"CCNCC"}]}
//! ```
//!
//! `actions` lists the Reaction candidates in slot order; Stop is implied as
//! the final slot. `terminal` records molecules no template matches. On load,
//! every product is recomputed and records that disagree are skipped.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use once_cell::sync::OnceCell;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, EnvError, Expansion, Reaction};
use crate::molgraph::{parse_smiles, Molecule};
use crate::reactions::{apply_template, TemplateLibrary};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub task_id: String,
    pub library_digest: String,
    pub smiles: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedAction {
    pub template_id: String,
    pub input_slot: usize,
    pub building_blocks: Vec<String>,
    pub product: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub task_id: String,
    pub library_digest: String,
    pub smiles: String,
    pub terminal: bool,
    pub actions: Vec<CachedAction>,
}

impl CacheRecord {
    fn new(key: &CacheKey, expansion: &Expansion) -> Self {
        let actions = match expansion {
            Expansion::Terminal => Vec::new(),
            Expansion::Actions(space) => space
                .reactions()
                .map(|r| CachedAction {
                    template_id: r.template_id.clone(),
                    input_slot: r.input_slot,
                    building_blocks: r.building_blocks.iter().map(|b| b.canonical_smiles().to_string()).collect(),
                    product: r.product.canonical_smiles().to_string(),
                })
                .collect(),
        };
        CacheRecord {
            task_id: key.task_id.clone(),
            library_digest: key.library_digest.clone(),
            smiles: key.smiles.clone(),
            terminal: matches!(expansion, Expansion::Terminal),
            actions,
        }
    }

    /// Rebuilds the expansion, re-running every template application.
    fn restore(&self, lib: &TemplateLibrary) -> Result<Expansion, String> {
        if self.terminal {
            return Ok(Expansion::Terminal);
        }
        let state = parse_smiles(&self.smiles).map_err(|e| e.to_string())?;
        let mut candidates = Vec::with_capacity(self.actions.len() + 1);
        for a in &self.actions {
            let t = lib.get(&a.template_id).ok_or_else(|| format!("unknown template '{}'", a.template_id))?;
            let blocks = a
                .building_blocks
                .iter()
                .map(|s| parse_smiles(s).map_err(|e| e.to_string()))
                .collect::<Result<Vec<Molecule>, _>>()?;
            let mut it = blocks.iter();
            let reactants: Vec<&Molecule> = (0..t.arity())
                .map(|s| if s == a.input_slot { Some(&state) } else { it.next() })
                .collect::<Option<_>>()
                .ok_or("block count")?;
            let product = apply_template(t, &reactants).map_err(|e| e.to_string())?;
            if product.canonical_smiles() != a.product {
                return Err(format!("stored product {} but template gives {}", a.product, product.canonical_smiles()));
            }
            candidates.push(Action::Reaction(Reaction {
                template_id: t.id().to_string(),
                template_name: t.name().to_string(),
                input_slot: a.input_slot,
                building_blocks: blocks,
                product,
            }));
        }
        candidates.push(Action::Stop);
        Ok(Expansion::Actions(Arc::new(ActionSpace::new(candidates))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: usize,
    pub hits: u64,
    pub misses: u64,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

type Slot = Arc<OnceCell<Arc<Expansion>>>;

#[derive(Default)]
pub struct ReactionCache {
    entries: RwLock<HashMap<CacheKey, Slot>>,
    hits: AtomicU64,
    misses: AtomicU64,
    store: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl ReactionCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a persistent cache and loads the records
    /// written under `lib`'s digest.
    pub fn open(path: impl AsRef<Path>, lib: &TemplateLibrary) -> Result<Self, EnvError> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        if path.exists() {
            for (no, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord = serde_json::from_str(&line)
                    .map_err(|e| EnvError::Cache(format!("{}:{}: {e}", path.display(), no + 1)))?;
                if record.library_digest != lib.digest() {
                    continue;
                }
                let key = CacheKey {
                    task_id: record.task_id.clone(),
                    library_digest: record.library_digest.clone(),
                    smiles: record.smiles.clone(),
                };
                if entries.contains_key(&key) {
                    continue;
                }
                match record.restore(lib) {
                    Ok(exp) => {
                        entries.insert(key, Arc::new(OnceCell::with_value(Arc::new(exp))));
                    }
                    Err(e) => log::warn!("skipping cache record for {} at line {}: {e}", record.smiles, no + 1),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ReactionCache {
            entries: RwLock::new(entries),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            store: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Stored value for `key`, computing it with `compute` on a miss. A
    /// failed computation stores nothing.
    pub fn get_or_compute<F>(&self, key: &CacheKey, compute: F) -> Result<Arc<Expansion>, EnvError>
    where
        F: FnOnce() -> Result<Expansion, EnvError>,
    {
        let slot = {
            let read = self.entries.read();
            read.get(key).cloned()
        };
        let slot = match slot {
            Some(s) => s,
            None => self.entries.write().entry(key.clone()).or_default().clone(),
        };
        let mut computed = false;
        let value = slot.get_or_try_init(|| {
            computed = true;
            self.misses.fetch_add(1, Ordering::Relaxed);
            let exp = Arc::new(compute()?);
            self.persist(key, &exp)?;
            Ok::<_, EnvError>(exp)
        })?;
        if !computed {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        Ok(value.clone())
    }

    /// Stored value without computing or counting.
    pub fn peek(&self, key: &CacheKey) -> Option<Arc<Expansion>> {
        self.entries.read().get(key).and_then(|s| s.get().cloned())
    }

    fn persist(&self, key: &CacheKey, exp: &Expansion) -> Result<(), EnvError> {
        if let Some(store) = &self.store {
            let mut line = serde_json::to_string(&CacheRecord::new(key, exp)).expect("record serializes");
            line.push('\n');
            let mut f = store.lock();
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            entries: self.entries.read().values().filter(|s| s.get().is_some()).count(),
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }
}

/// Per-(task, digest) record counts of a cache file, without verification.
pub fn cache_file_summary(path: impl AsRef<Path>) -> Result<Vec<(String, String, usize, usize)>, EnvError> {
    let mut counts: std::collections::BTreeMap<(String, String), (usize, usize)> = Default::default();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: CacheRecord = serde_json::from_str(&line).map_err(|e| EnvError::Cache(e.to_string()))?;
        let c = counts.entry((r.task_id, r.library_digest)).or_default();
        c.0 += 1;
        c.1 += r.terminal as usize;
    }
    Ok(counts.into_iter().map(|((t, d), (n, term))| (t, d, n, term)).collect())
}
