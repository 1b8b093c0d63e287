use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Arch, ModelState, Vocab};
use crate::error::{Error, Result};
use crate::io;

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model: versioned JSON with the vocabulary hash and every parameter
/// as a decimal float (serde_json writes shortest round-trip decimals, so a
/// reload is bit-exact).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub arch: Arch,
    pub vocab: Vocab,
    pub vocab_hash: String,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn of(state: &ModelState) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            arch: state.arch().clone(),
            vocab: state.vocab().clone(),
            vocab_hash: state.vocab().hash(),
            params: state.params().to_vec(),
        }
    }

    pub fn into_state(self) -> Result<ModelState> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        if self.vocab.hash() != self.vocab_hash {
            return Err(Error::Checkpoint("vocabulary hash mismatch".into()));
        }
        ModelState::from_params(self.arch, self.vocab, self.params)
    }

    pub fn save(state: &ModelState, path: &Path) -> Result<()> {
        io::write_json(path, &Checkpoint::of(state))
    }

    pub fn load(path: &Path) -> Result<ModelState> {
        io::read_json::<Checkpoint>(path)?.into_state()
    }
}
