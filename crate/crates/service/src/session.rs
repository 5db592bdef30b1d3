//! Registry of loaded volumes and cached morph fields.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use nrv_core::neuromorph::build_morph_field;
use nrv_core::{load_volume, Direction, LossConfig, MorphField, VesselnessParams, Volume3D};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub loss: LossConfig,
    pub vesselness: VesselnessParams,
}

impl SessionConfig {
    /// Foreground threshold used when a request does not name one.
    pub fn threshold(&self) -> f32 {
        self.loss.fg_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MorphKey {
    young: u64,
    old: u64,
    dir: Direction,
}

struct CachedField {
    young: Arc<Volume3D>,
    old: Arc<Volume3D>,
    field: Arc<MorphField>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Ready,
    Failed { code: String, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub volumes: usize,
    pub morph_cache_entries: usize,
    pub morph_cache_hits: u64,
    pub morph_cache_misses: u64,
    pub morph_fields_built: u64,
}

/// Shared server state. Volumes are immutable once registered; replacing one
/// swaps the `Arc` under the write lock, so readers see either the old or
/// the new volume in full.
pub struct Session {
    pub config: SessionConfig,
    volumes: RwLock<BTreeMap<String, Arc<Volume3D>>>,
    /// Volume ids are interned so cache keys stay small and copyable.
    interned: RwLock<HashMap<String, u64>>,
    morph_cache: RwLock<HashMap<MorphKey, CachedField>>,
    jobs: RwLock<HashMap<String, JobStatus>>,
    next_id: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
    built: AtomicU64,
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
}

impl Session {
    pub fn new(config: SessionConfig) -> Session {
        Session {
            config,
            volumes: RwLock::new(BTreeMap::new()),
            interned: RwLock::new(HashMap::new()),
            morph_cache: RwLock::new(HashMap::new()),
            jobs: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            built: AtomicU64::new(0),
        }
    }

    /// Registers every `*.nrv` file in `dir` under its file stem.
    pub fn load_dir(&self, dir: &Path) -> nrv_core::Result<usize> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "nrv"))
            .collect();
        paths.sort();
        let mut n = 0;
        for path in paths {
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).filter(|s| valid_id(s)) else {
                log::warn!("skipping {}: file stem is not a valid volume id", path.display());
                continue;
            };
            let v = load_volume(&path)?;
            log::info!("loaded {} as `{id}`", path.display());
            self.insert(id.to_string(), v);
            n += 1;
        }
        Ok(n)
    }

    pub fn fresh_id(&self, prefix: &str) -> String {
        loop {
            let id = format!("{prefix}-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
            if !self.volumes.read().unwrap().contains_key(&id) {
                return id;
            }
        }
    }

    fn intern(&self, id: &str) -> u64 {
        if let Some(&k) = self.interned.read().unwrap().get(id) {
            return k;
        }
        let mut map = self.interned.write().unwrap();
        let next = map.len() as u64;
        *map.entry(id.to_string()).or_insert(next)
    }

    /// Inserts or replaces a volume and drops cached morph fields that
    /// depended on the previous one.
    pub fn insert(&self, id: String, v: Volume3D) -> Arc<Volume3D> {
        let key = self.intern(&id);
        let v = Arc::new(v);
        let replaced = self.volumes.write().unwrap().insert(id, v.clone()).is_some();
        if replaced {
            self.morph_cache
                .write()
                .unwrap()
                .retain(|k, _| k.young != key && k.old != key);
        }
        v
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<Volume3D>> {
        self.volumes
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("volume", id))
    }

    pub fn list(&self) -> Vec<(String, Arc<Volume3D>)> {
        self.volumes
            .read()
            .unwrap()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    /// Cached field for the pair, if it was built from the volumes currently
    /// registered under these ids.
    pub fn cached_field(&self, young: &str, old: &str, dir: Direction) -> ApiResult<Option<Arc<MorphField>>> {
        let (y, o) = (self.get(young)?, self.get(old)?);
        let key = MorphKey {
            young: self.intern(young),
            old: self.intern(old),
            dir,
        };
        let cache = self.morph_cache.read().unwrap();
        Ok(cache
            .get(&key)
            .filter(|c| Arc::ptr_eq(&c.young, &y) && Arc::ptr_eq(&c.old, &o))
            .map(|c| c.field.clone()))
    }

    /// Returns the cached field or builds it on the calling thread. The second
    /// element is true on a cache hit.
    pub fn morph_field(&self, young: &str, old: &str, dir: Direction) -> ApiResult<(Arc<MorphField>, bool)> {
        if let Some(f) = self.cached_field(young, old, dir)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok((f, true));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let (y, o) = (self.get(young)?, self.get(old)?);
        let field = Arc::new(build_morph_field(&y, &o, self.config.threshold())?);
        self.built.fetch_add(1, Ordering::Relaxed);
        let key = MorphKey {
            young: self.intern(young),
            old: self.intern(old),
            dir,
        };
        // Only cache if neither parent was replaced while the field was built.
        let volumes = self.volumes.read().unwrap();
        let current = |id: &str, v: &Arc<Volume3D>| volumes.get(id).is_some_and(|c| Arc::ptr_eq(c, v));
        if current(young, &y) && current(old, &o) {
            self.morph_cache.write().unwrap().insert(
                key,
                CachedField {
                    young: y,
                    old: o,
                    field: field.clone(),
                },
            );
        }
        Ok((field, false))
    }

    pub fn new_job(&self) -> String {
        let id = format!("job-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        self.jobs.write().unwrap().insert(id.clone(), JobStatus::Pending);
        id
    }

    pub fn set_job(&self, id: &str, status: JobStatus) {
        self.jobs.write().unwrap().insert(id.to_string(), status);
    }

    pub fn job(&self, id: &str) -> ApiResult<JobStatus> {
        self.jobs
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("job", id))
    }

    pub fn stats(&self) -> Stats {
        Stats {
            volumes: self.volumes.read().unwrap().len(),
            morph_cache_entries: self.morph_cache.read().unwrap().len(),
            morph_cache_hits: self.hits.load(Ordering::Relaxed),
            morph_cache_misses: self.misses.load(Ordering::Relaxed),
            morph_fields_built: self.built.load(Ordering::Relaxed),
        }
    }
}
