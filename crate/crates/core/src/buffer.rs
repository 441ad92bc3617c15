//! Per-domain rehearsal buffer with FIFO eviction and random subsampling.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Identifies one target domain (one update round's data) within a run.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainId(pub String);

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DomainId {
    fn from(s: &str) -> Self {
        DomainId(s.to_owned())
    }
}

impl From<String> for DomainId {
    fn from(s: String) -> Self {
        DomainId(s)
    }
}

/// Labeled samples of a single target domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset {
    pub domain_id: DomainId,
    pub arrival_index: u64,
    features: FeatureMatrix,
    labels: Vec<usize>,
}

impl DomainDataset {
    pub fn new(
        domain_id: impl Into<DomainId>,
        arrival_index: u64,
        features: FeatureMatrix,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::contract(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        Ok(Self {
            domain_id: domain_id.into(),
            arrival_index,
            features,
            labels,
        })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// The rows at `indices`, keeping identity and arrival index.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.domain_id.clone(), self.arrival_index, features, labels)
    }
}

/// One buffered domain: at most `per_domain` samples of its source dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct BufferEntry {
    pub samples: DomainDataset,
}

impl BufferEntry {
    pub fn domain_id(&self) -> &DomainId {
        &self.samples.domain_id
    }

    pub fn arrival_index(&self) -> u64 {
        self.samples.arrival_index
    }
}

/// Capacity-bounded, oldest-first store of per-domain sample subsets.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperienceBuffer {
    capacity: usize,
    per_domain: usize,
    entries: VecDeque<BufferEntry>,
}

impl ExperienceBuffer {
    pub fn new(capacity: usize, per_domain: usize) -> Result<Self> {
        if capacity == 0 || per_domain == 0 {
            return Err(Error::contract(format!(
                "buffer bounds must be positive, got capacity {capacity}, per-domain {per_domain}"
            )));
        }
        Ok(Self {
            capacity,
            per_domain,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn per_domain(&self) -> usize {
        self.per_domain
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Oldest-first view of the buffered domains.
    pub fn stored_domains(&self) -> impl ExactSizeIterator<Item = &DomainDataset> + '_ {
        self.entries.iter().map(|e| &e.samples)
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &BufferEntry> + '_ {
        self.entries.iter()
    }

    /// Inserts a uniform random subset of `min(per_domain, |d|)` samples of
    /// `d` as the newest entry, first evicting the oldest entry if the buffer
    /// is full. Returns the evicted entry, if any.
    pub fn rs_ebu_update<R: Rng + ?Sized>(
        &mut self,
        d: &DomainDataset,
        rng: &mut R,
    ) -> Result<Option<BufferEntry>> {
        if let Some(newest) = self.entries.back() {
            if d.arrival_index <= newest.arrival_index() {
                return Err(Error::contract(format!(
                    "arrival index {} is not newer than buffered {}",
                    d.arrival_index,
                    newest.arrival_index()
                )));
            }
        }
        let keep = self.per_domain.min(d.len());
        let mut picked = rand::seq::index::sample(rng, d.len(), keep).into_vec();
        picked.sort_unstable();
        let samples = d.subset(&picked)?;

        let evicted = if self.is_full() {
            self.entries.pop_front()
        } else {
            None
        };
        self.entries.push_back(BufferEntry { samples });
        Ok(evicted)
    }
}
