use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, StageCause};

const COMPLETE_MARKER: &str = ".complete";
/// Bumped whenever a stage's on-disk output changes meaning.
const CACHE_SCHEMA: u32 = 1;

/// A finished stage output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageDir {
    pub stage: String,
    pub key: String,
    pub path: PathBuf,
}

impl StageDir {
    pub fn join(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.path.join(rel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub stage: String,
    pub key: String,
    pub reused: bool,
    pub seconds: f64,
}

/// Stage outputs under `<root>/cache/<stage>-<key prefix>/`, keyed by the
/// sha256 of the stage name, its parameters and its upstream keys.
#[derive(Debug)]
pub struct Cache {
    root: PathBuf,
    events: Mutex<Vec<StageEvent>>,
    tmp_counter: AtomicU64,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            events: Mutex::new(Vec::new()),
            tmp_counter: AtomicU64::new(0),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn key<P: Serialize>(stage: &str, params: &P, upstream: &[&StageDir]) -> String {
        let material = serde_json::json!({
            "schema": CACHE_SCHEMA,
            "stage": stage,
            "params": params,
            "upstream": upstream.iter().map(|u| &u.key).collect::<Vec<_>>(),
        });
        hex::encode(Sha256::digest(material.to_string().as_bytes()))
    }

    pub fn events(&self) -> Vec<StageEvent> {
        self.events.lock().expect("event log").clone()
    }

    /// Returns the cached output for `(stage, params, upstream)`, running
    /// `build` into a scratch directory first if it is missing. A failed build
    /// leaves earlier stages untouched.
    pub fn stage<P, F>(
        &self,
        stage: &str,
        params: &P,
        upstream: &[&StageDir],
        build: F,
    ) -> Result<StageDir, PipelineError>
    where
        P: Serialize,
        F: FnOnce(&Path) -> Result<(), StageCause>,
    {
        let key = Self::key(stage, params, upstream);
        let dir = self
            .root
            .join("cache")
            .join(format!("{stage}-{}", &key[..16]));
        let out = StageDir {
            stage: stage.to_string(),
            key: key.clone(),
            path: dir.clone(),
        };
        let start = Instant::now();
        if is_complete(&dir, &key) {
            self.log(stage, &key, true, start);
            return Ok(out);
        }
        let io = |e| PipelineError::io(format!("stage {stage}"), e);
        fs::create_dir_all(self.root.join("cache")).map_err(io)?;
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = self.root.join("cache").join(format!(
            ".{stage}-{}.partial-{}-{n}",
            &key[..16],
            std::process::id()
        ));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(io)?;
        }
        fs::create_dir_all(&tmp).map_err(io)?;
        if let Err(source) = build(&tmp) {
            let _ = fs::remove_dir_all(&tmp);
            return Err(PipelineError::Stage {
                stage: stage.to_string(),
                source,
            });
        }
        fs::write(tmp.join(COMPLETE_MARKER), &key).map_err(io)?;
        if dir.exists() {
            if is_complete(&dir, &key) {
                // finished concurrently by another job
                let _ = fs::remove_dir_all(&tmp);
                self.log(stage, &key, true, start);
                return Ok(out);
            }
            fs::remove_dir_all(&dir).map_err(io)?;
        }
        fs::rename(&tmp, &dir).map_err(io)?;
        self.log(stage, &key, false, start);
        Ok(out)
    }

    fn log(&self, stage: &str, key: &str, reused: bool, start: Instant) {
        self.events.lock().expect("event log").push(StageEvent {
            stage: stage.to_string(),
            key: key.to_string(),
            reused,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
}

fn is_complete(dir: &Path, key: &str) -> bool {
    fs::read_to_string(dir.join(COMPLETE_MARKER)).is_ok_and(|k| k == key)
}
