use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::record::RunRecord;
use super::EngineError;

const INDEX: &str = "index.json";
const RECORD: &str = "record.json";
const ARTIFACTS: &str = "artifacts";
const TMP_PREFIX: &str = ".tmp-";

/// Serializes index rewrites across every store in the process.
static INDEX_LOCK: Mutex<()> = Mutex::new(());

fn storage(what: impl std::fmt::Display, e: impl std::fmt::Display) -> EngineError {
    EngineError::StorageFailure(format!("{what}: {e}"))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric())
}

fn valid_artifact_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

/// Run directory: `{dir}/{run_id}/record.json`, `{dir}/{run_id}/artifacts/*`
/// and `{dir}/index.json`, a sorted JSON list of committed run ids.
///
/// A run is written under `.tmp-{run_id}` and renamed into place; the index
/// is rewritten through a temp file and rename afterwards.
#[derive(Debug, Clone)]
pub struct RunStore {
    dir: PathBuf,
}

/// A fully written run that is not yet visible. Dropping it without
/// `commit` leaves only a temp directory, removed by the next `open`.
#[derive(Debug)]
#[must_use = "a staged run is invisible until committed"]
pub struct StagedRun {
    store: RunStore,
    run_id: String,
    tmp: PathBuf,
}

impl RunStore {
    /// Store handle without recovery; creates the directory if needed.
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, EngineError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| storage(dir.display(), e))?;
        Ok(Self { dir })
    }

    /// Store handle after crash recovery: stale temp directories are
    /// removed and committed runs missing from the index are added back.
    /// Call once per directory before serving requests from it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, EngineError> {
        let store = Self::new(dir)?;
        let _guard = INDEX_LOCK.lock().unwrap_or_else(|p| p.into_inner());
        let mut committed = Vec::new();
        let entries = fs::read_dir(&store.dir).map_err(|e| storage(store.dir.display(), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| storage(store.dir.display(), e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let path = entry.path();
            if !path.is_dir() {
                continue;
            }
            if name.starts_with(TMP_PREFIX) {
                fs::remove_dir_all(&path).map_err(|e| storage(path.display(), e))?;
            } else if valid_id(&name) && path.join(RECORD).is_file() {
                committed.push(name);
            }
        }
        let mut index = store.read_index()?;
        let before = index.len();
        for id in committed {
            if !index.contains(&id) {
                index.push(id);
            }
        }
        index.sort();
        if index.len() != before || !store.dir.join(INDEX).exists() {
            store.write_index(&index)?;
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read_index(&self) -> Result<Vec<String>, EngineError> {
        let path = self.dir.join(INDEX);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| storage(path.display(), e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(storage(path.display(), e)),
        }
    }

    fn write_index(&self, ids: &[String]) -> Result<(), EngineError> {
        let path = self.dir.join(INDEX);
        let tmp = self.dir.join(format!("{TMP_PREFIX}{INDEX}"));
        let text = serde_json::to_string_pretty(ids).expect("ids serialize");
        fs::write(&tmp, text).map_err(|e| storage(tmp.display(), e))?;
        fs::rename(&tmp, &path).map_err(|e| storage(path.display(), e))
    }

    /// Writes the record and artifacts under a temp directory.
    pub fn stage(
        &self,
        record: &RunRecord,
        artifacts: &[(String, Vec<u8>)],
    ) -> Result<StagedRun, EngineError> {
        let run_id = record.run_id.clone();
        if !valid_id(&run_id) {
            return Err(EngineError::StorageFailure(format!("invalid run id `{run_id}`")));
        }
        if self.dir.join(&run_id).exists() {
            return Err(EngineError::StorageFailure(format!("run `{run_id}` already exists")));
        }
        let tmp = self.dir.join(format!("{TMP_PREFIX}{run_id}"));
        let art_dir = tmp.join(ARTIFACTS);
        fs::create_dir_all(&art_dir).map_err(|e| storage(art_dir.display(), e))?;
        for (name, bytes) in artifacts {
            if !valid_artifact_name(name) {
                return Err(EngineError::StorageFailure(format!("invalid artifact name `{name}`")));
            }
            let path = art_dir.join(name);
            fs::write(&path, bytes).map_err(|e| storage(path.display(), e))?;
        }
        let json = serde_json::to_string_pretty(record)
            .map_err(|e| storage(format!("run `{run_id}`"), e))?;
        let path = tmp.join(RECORD);
        fs::write(&path, json).map_err(|e| storage(path.display(), e))?;
        Ok(StagedRun {
            store: self.clone(),
            run_id,
            tmp,
        })
    }

    pub fn persist(
        &self,
        record: &RunRecord,
        artifacts: &[(String, Vec<u8>)],
    ) -> Result<(), EngineError> {
        self.stage(record, artifacts)?.commit()
    }

    pub fn load(&self, run_id: &str) -> Result<RunRecord, EngineError> {
        if !valid_id(run_id) {
            return Err(EngineError::RunNotFound(run_id.to_string()));
        }
        let path = self.dir.join(run_id).join(RECORD);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(EngineError::RunNotFound(run_id.to_string()))
            }
            Err(e) => return Err(storage(path.display(), e)),
        };
        serde_json::from_str(&text).map_err(|e| storage(path.display(), e))
    }

    /// Committed run ids in sorted order.
    pub fn list(&self) -> Result<Vec<String>, EngineError> {
        self.read_index()
    }

    pub fn artifact(&self, run_id: &str, name: &str) -> Result<Vec<u8>, EngineError> {
        if !valid_id(run_id) || !self.dir.join(run_id).join(RECORD).is_file() {
            return Err(EngineError::RunNotFound(run_id.to_string()));
        }
        let missing = || EngineError::RunNotFound(format!("{run_id}/{name}"));
        if !valid_artifact_name(name) {
            return Err(missing());
        }
        fs::read(self.dir.join(run_id).join(ARTIFACTS).join(name)).map_err(|_| missing())
    }
}

impl StagedRun {
    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    /// Renames the run into place, then adds it to the index.
    pub fn commit(self) -> Result<(), EngineError> {
        let store = &self.store;
        let target = store.dir.join(&self.run_id);
        let _guard = INDEX_LOCK.lock().unwrap_or_else(|p| p.into_inner());
        if target.exists() {
            return Err(EngineError::StorageFailure(format!(
                "run `{}` already exists",
                self.run_id
            )));
        }
        fs::rename(&self.tmp, &target).map_err(|e| storage(target.display(), e))?;
        let mut index = store.read_index()?;
        if let Err(pos) = index.binary_search(&self.run_id) {
            index.insert(pos, self.run_id.clone());
        }
        store.write_index(&index)
    }
}
