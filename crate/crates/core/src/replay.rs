//! History of comparison triplets and the fresh/replay mix fed to the critic.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::io;
use crate::rollout::{ComparisonTriplet, Origin};
use crate::Result;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    entries: VecDeque<ComparisonTriplet>,
    /// `None` keeps everything.
    capacity: Option<usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: Option<usize>) -> Self {
        ReplayBuffer {
            entries: VecDeque::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &ComparisonTriplet> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&ComparisonTriplet> {
        self.entries.get(i)
    }

    /// Appends in order, evicting the oldest entries beyond capacity.
    pub fn append_all<I: IntoIterator<Item = ComparisonTriplet>>(&mut self, triplets: I) {
        for t in triplets {
            self.entries.push_back(t);
            if let Some(cap) = self.capacity {
                while self.entries.len() > cap {
                    self.entries.pop_front();
                }
            }
        }
    }

    /// Critic training stream of the same size as `fresh`: `ceil(n/2)` fresh
    /// triplets drawn without replacement followed by `floor(n/2)` drawn
    /// uniformly with replacement from history. With an empty history the
    /// fresh batch is returned as is.
    pub fn mix<R: Rng + ?Sized>(
        &self,
        fresh: &[ComparisonTriplet],
        rng: &mut R,
    ) -> Vec<ComparisonTriplet> {
        assert!(!fresh.is_empty(), "fresh batch must be non-empty");
        let tag = |t: &ComparisonTriplet, origin| ComparisonTriplet {
            origin,
            ..t.clone()
        };
        if self.entries.is_empty() {
            return fresh.iter().map(|t| tag(t, Origin::Fresh)).collect();
        }
        let n = fresh.len();
        let n_fresh = n.div_ceil(2);
        let mut out: Vec<ComparisonTriplet> = sample(rng, n, n_fresh)
            .into_iter()
            .map(|i| tag(&fresh[i], Origin::Fresh))
            .collect();
        for _ in 0..n / 2 {
            let i = rng.gen_range(0..self.entries.len());
            out.push(tag(&self.entries[i], Origin::Replay));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (a, b) = self.entries.as_slices();
        let mut all = a.to_vec();
        all.extend_from_slice(b);
        io::write_jsonl(path, &all)
    }

    pub fn load(path: &Path, capacity: Option<usize>) -> Result<Self> {
        let mut b = ReplayBuffer::new(capacity);
        b.append_all(io::read_jsonl::<ComparisonTriplet>(path)?);
        Ok(b)
    }
}
