//! Distance-driven experience selection.
//!
//! Every buffered domain is compared with the incoming one by MK-MMD; the
//! `l` most distant are replayed, each weighted by the sigmoid of its
//! distance so that more dissimilar domains pull harder on the update.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buffer::{DomainDataset, DomainId, ExperienceBuffer};
use crate::error::{Error, Result};
use crate::kernels::{mk_mmd, validate_kernel_weights, DistanceValue, MultiKernel};

/// Which end of the distance ranking is replayed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionOrder {
    /// Largest distances first.
    #[default]
    MostDistant,
    /// Smallest distances first (ascending sort, take the head).
    Ascending,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectedDomain {
    pub samples: DomainDataset,
    /// `None` when the domain was picked without measuring it.
    pub distance: Option<DistanceValue>,
    pub weight: f64,
}

/// The replay set for one update round, in selection order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelectionResult {
    pub selected: Vec<SelectedDomain>,
}

impl SelectionResult {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.selected.iter().map(|s| s.weight).collect()
    }

    pub fn distances(&self) -> Vec<Option<f64>> {
        self.selected
            .iter()
            .map(|s| s.distance.map(DistanceValue::value))
            .collect()
    }

    pub fn domain_ids(&self) -> Vec<&DomainId> {
        self.selected.iter().map(|s| &s.samples.domain_id).collect()
    }

    pub fn arrival_indices(&self) -> Vec<u64> {
        self.selected
            .iter()
            .map(|s| s.samples.arrival_index)
            .collect()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A buffered domain's distance to the current domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub arrival_index: u64,
    pub distance: f64,
}

/// Positions of `candidates` ordered by distance (direction per `order`),
/// ties going to the older arrival index.
pub fn rank_domains_by_distance(candidates: &[Candidate], order: SelectionOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (&candidates[i], &candidates[j]);
        let by_distance = match order {
            SelectionOrder::MostDistant => b.distance.total_cmp(&a.distance),
            SelectionOrder::Ascending => a.distance.total_cmp(&b.distance),
        };
        by_distance.then(a.arrival_index.cmp(&b.arrival_index))
    });
    idx
}

/// Selects the `min(l, |M|)` buffered domains farthest from `current`.
pub fn ddm_es(
    buf: &ExperienceBuffer,
    current: &DomainDataset,
    l: usize,
    mk: &MultiKernel,
) -> Result<SelectionResult> {
    ddm_es_ordered(buf, current, l, mk, SelectionOrder::MostDistant)
}

pub fn ddm_es_ordered(
    buf: &ExperienceBuffer,
    current: &DomainDataset,
    l: usize,
    mk: &MultiKernel,
    order: SelectionOrder,
) -> Result<SelectionResult> {
    if l == 0 {
        return Err(Error::contract("selection count must be at least 1"));
    }
    validate_kernel_weights(mk)?;
    if buf.is_empty() {
        return Ok(SelectionResult::empty());
    }

    let stored: Vec<&DomainDataset> = buf.stored_domains().collect();
    let distances = stored
        .par_iter()
        .map(|d| mk_mmd(current.features(), d.features(), mk))
        .collect::<Result<Vec<_>>>()?;

    let candidates: Vec<Candidate> = stored
        .iter()
        .zip(&distances)
        .map(|(d, dist)| Candidate {
            arrival_index: d.arrival_index,
            distance: dist.value(),
        })
        .collect();

    let selected = rank_domains_by_distance(&candidates, order)
        .into_iter()
        .take(l)
        .map(|i| SelectedDomain {
            samples: stored[i].clone(),
            distance: Some(distances[i]),
            weight: sigmoid(distances[i].value()),
        })
        .collect();
    Ok(SelectionResult { selected })
}

/// Uniformly random choice of `min(l, |M|)` buffered domains, weight 1 each.
pub fn random_selection<R: Rng + ?Sized>(
    buf: &ExperienceBuffer,
    l: usize,
    rng: &mut R,
) -> Result<SelectionResult> {
    if l == 0 {
        return Err(Error::contract("selection count must be at least 1"));
    }
    let stored: Vec<&DomainDataset> = buf.stored_domains().collect();
    let k = l.min(stored.len());
    let selected = rand::seq::index::sample(rng, stored.len(), k)
        .into_iter()
        .map(|i| SelectedDomain {
            samples: stored[i].clone(),
            distance: None,
            weight: 1.0,
        })
        .collect();
    Ok(SelectionResult { selected })
}
