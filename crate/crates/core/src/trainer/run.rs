use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::grpo::AdamW;
use crate::replay::ReplayBuffer;
use crate::seqmodel::{Checkpoint, ModelState};
use crate::{io, Error, Result};

/// `config.json`, `run.json`, `metrics.jsonl`, `timing.jsonl`,
/// `checkpoints/` and `buffer.jsonl` under one directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        let ck = root.join("checkpoints");
        std::fs::create_dir_all(&ck).map_err(|e| Error::Io {
            path: ck.clone(),
            source: e,
        })?;
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }

    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.json"))
    }

    pub fn optimizer_path(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.optim.json"))
    }

    pub fn write_json<T: Serialize>(&self, file: &str, value: &T) -> Result<()> {
        io::write_json(&self.root.join(file), value)
    }

    /// Rewrites a JSONL file atomically with all records so far.
    pub fn write_jsonl<T: Serialize>(&self, file: &str, records: &[T]) -> Result<()> {
        io::write_jsonl(&self.root.join(file), records)
    }

    pub fn save_checkpoint(&self, name: &str, state: &ModelState, optimizer: Option<&AdamW>) -> Result<()> {
        Checkpoint::save(state, &self.checkpoint_path(name))?;
        if let Some(opt) = optimizer {
            io::write_json(&self.optimizer_path(name), opt)?;
        }
        Ok(())
    }

    pub fn load_checkpoint(&self, name: &str) -> Result<ModelState> {
        Checkpoint::load(&self.checkpoint_path(name))
    }

    pub fn save_buffer(&self, buffer: &ReplayBuffer) -> Result<()> {
        buffer.save(&self.root.join("buffer.jsonl"))
    }
}
