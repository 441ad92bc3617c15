//! Synthetic cyclic domain streams.
//!
//! A phase is a constellation of Gaussian class clusters; a schedule lists
//! phases in the order they are encountered, repeated for a number of
//! cycles. Labels come from the generating class, which plays the part of
//! an oracle labeler.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::buffer::DomainDataset;
use crate::error::{Error, Result};
use crate::kernels::{mk_mmd, DistanceValue, MultiKernel};
use crate::matrix::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub phase_id: String,
    /// One mean vector per class.
    pub class_means: Vec<Vec<f64>>,
    pub class_spread: f64,
    pub samples_per_domain: usize,
}

impl PhaseSpec {
    pub fn num_classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn dim(&self) -> usize {
        self.class_means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::contract(format!("phase {}: {msg}", self.phase_id));
        if self.class_means.len() < 2 {
            return Err(ctx("needs at least two classes".into()));
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(ctx("class means must be non-empty".into()));
        }
        for (c, mean) in self.class_means.iter().enumerate() {
            if mean.len() != dim {
                return Err(ctx(format!(
                    "class {c} mean has {} entries, expected {dim}",
                    mean.len()
                )));
            }
            if mean.iter().any(|v| !v.is_finite()) {
                return Err(ctx(format!("class {c} mean is not finite")));
            }
        }
        for i in 0..self.class_means.len() {
            for j in i + 1..self.class_means.len() {
                if self.class_means[i] == self.class_means[j] {
                    return Err(ctx(format!("classes {i} and {j} share a mean")));
                }
            }
        }
        if !(self.class_spread.is_finite() && self.class_spread > 0.0) {
            return Err(ctx(format!(
                "spread must be positive, got {}",
                self.class_spread
            )));
        }
        if self.samples_per_domain == 0 {
            return Err(ctx("samples per domain must be positive".into()));
        }
        Ok(())
    }

    /// `n` labeled samples, class `i % num_classes` for sample `i`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(FeatureMatrix, Vec<usize>)> {
        self.validate()?;
        let k = self.num_classes();
        let dim = self.dim();
        let mut values = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % k;
            for &m in &self.class_means[class] {
                let z: f64 = StandardNormal.sample(rng);
                values.push(m + self.class_spread * z);
            }
            labels.push(class);
        }
        Ok((FeatureMatrix::new(n, dim, values)?, labels))
    }
}

/// Draws one target domain of `samples_per_domain` balanced samples.
pub fn generate_domain<R: Rng + ?Sized>(
    spec: &PhaseSpec,
    arrival_index: u64,
    rng: &mut R,
) -> Result<DomainDataset> {
    let (features, labels) = spec.sample(spec.samples_per_domain, rng)?;
    DomainDataset::new(
        format!("{}#{arrival_index}", spec.phase_id),
        arrival_index,
        features,
        labels,
    )
}

/// Replaces each label, with probability `rate`, by a uniformly chosen
/// different class.
pub fn apply_label_noise<R: Rng + ?Sized>(
    data: &DomainDataset,
    num_classes: usize,
    rate: f64,
    rng: &mut R,
) -> Result<DomainDataset> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::contract(format!(
            "label noise rate must be in [0, 1], got {rate}"
        )));
    }
    if rate == 0.0 {
        return Ok(data.clone());
    }
    let labels = data
        .labels()
        .iter()
        .map(|&y| {
            if rng.random::<f64>() < rate {
                let other = rng.random_range(0..num_classes - 1);
                if other >= y {
                    other + 1
                } else {
                    other
                }
            } else {
                y
            }
        })
        .collect();
    DomainDataset::new(
        data.domain_id.clone(),
        data.arrival_index,
        data.features().clone(),
        labels,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub arrival_index: u64,
    /// Index into [`Schedule::phases`].
    pub phase: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub phases: Vec<PhaseSpec>,
    pub entries: Vec<ScheduleEntry>,
    pub cycles: usize,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn phase_of(&self, entry: &ScheduleEntry) -> &PhaseSpec {
        &self.phases[entry.phase]
    }

    /// Phase ids in schedule order.
    pub fn labels(&self) -> Vec<&str> {
        self.entries
            .iter()
            .map(|e| self.phases[e.phase].phase_id.as_str())
            .collect()
    }
}

/// Each phase in order, once per cycle, with arrival indices `1..=|phases|·cycles`.
pub fn build_repeat_schedule(phases: Vec<PhaseSpec>, cycles: usize) -> Result<Schedule> {
    if phases.is_empty() {
        return Err(Error::contract("schedule needs at least one phase"));
    }
    if cycles == 0 {
        return Err(Error::contract("schedule needs at least one cycle"));
    }
    let dim = phases[0].dim();
    let mut seen = HashMap::new();
    for (i, p) in phases.iter().enumerate() {
        p.validate()?;
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        if let Some(prev) = seen.insert(p.phase_id.clone(), i) {
            return Err(Error::contract(format!(
                "phase id {:?} used by phases {prev} and {i}",
                p.phase_id
            )));
        }
    }
    let entries = (0..cycles)
        .flat_map(|_| 0..phases.len())
        .enumerate()
        .map(|(i, phase)| ScheduleEntry {
            arrival_index: i as u64 + 1,
            phase,
        })
        .collect();
    Ok(Schedule {
        phases,
        entries,
        cycles,
    })
}

/// Empirical MK-MMD between fresh `n`-point samples of two phases.
pub fn phase_distance_oracle<R: Rng + ?Sized>(
    a: &PhaseSpec,
    b: &PhaseSpec,
    mk: &MultiKernel,
    n: usize,
    rng: &mut R,
) -> Result<DistanceValue> {
    if n == 0 {
        return Err(Error::contract("oracle sample size must be positive"));
    }
    let (xa, _) = a.sample(n, rng)?;
    let (xb, _) = b.sample(n, rng)?;
    mk_mmd(&xa, &xb, mk)
}

/// Layout of the generated phase constellations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub dim: usize,
    pub num_classes: usize,
    pub samples_per_domain: usize,
    /// Typical distance between two class means within a phase.
    pub class_separation: f64,
    pub class_spread: f64,
    /// Norm of the per-scene translation (e.g. day1 vs day2).
    pub scene_shift: f64,
    /// Norm of the translation between the day and night constellations.
    pub night_shift: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            num_classes: 4,
            samples_per_domain: 400,
            class_separation: 5.0,
            class_spread: 1.0,
            scene_shift: 1.0,
            night_shift: 16.0,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.num_classes < 2 || self.samples_per_domain == 0 {
            return Err(Error::Config(
                "geometry needs dim >= 1, num_classes >= 2, samples_per_domain >= 1".into(),
            ));
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("class_spread", self.class_spread),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("scene_shift", self.scene_shift),
            ("night_shift", self.night_shift),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn base_means<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        // Coordinates N(0, s²/2d) put two independent means about s apart.
        let scale = self.class_separation / (2.0 * self.dim as f64).sqrt();
        (0..self.num_classes)
            .map(|_| self.gaussian_vector(scale, rng))
            .collect()
    }

    fn gaussian_vector<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Vec<f64> {
        (0..self.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
            .collect()
    }

    fn direction<R: Rng + ?Sized>(&self, norm: f64, rng: &mut R) -> Vec<f64> {
        let v = self.gaussian_vector(1.0, rng);
        let len = v
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        v.into_iter().map(|x| norm * x / len).collect()
    }

    fn phase(&self, id: String, base: &[Vec<f64>], offset: &[f64]) -> PhaseSpec {
        PhaseSpec {
            phase_id: id,
            class_means: base
                .iter()
                .map(|m| m.iter().zip(offset).map(|(a, b)| a + b).collect())
                .collect(),
            class_spread: self.class_spread,
            samples_per_domain: self.samples_per_domain,
        }
    }
}

/// Two day scenes and two night scenes: `day1, day2, night1, night2`.
///
/// All four share one class constellation. Day and night scenes sit at
/// `−o/2` and `+o/2` for a common offset `o` of norm `night_shift`, and scene
/// `k` of either kind carries its own small `scene_shift` translation.
pub fn day_night_phases<R: Rng + ?Sized>(
    geometry: &GeometryConfig,
    rng: &mut R,
) -> Result<Vec<PhaseSpec>> {
    geometry.validate()?;
    let base = geometry.base_means(rng);
    let half_night = geometry.direction(0.5 * geometry.night_shift, rng);
    let scenes = [
        geometry.direction(geometry.scene_shift, rng),
        geometry.direction(geometry.scene_shift, rng),
    ];
    let mut phases = Vec::with_capacity(4);
    for (kind, sign) in [("day", -1.0), ("night", 1.0)] {
        for (k, scene) in scenes.iter().enumerate() {
            let offset: Vec<f64> = scene
                .iter()
                .zip(&half_night)
                .map(|(s, h)| s + sign * h)
                .collect();
            phases.push(geometry.phase(format!("{kind}{}", k + 1), &base, &offset));
        }
    }
    Ok(phases)
}

/// `count` phases sharing one class constellation, each translated by its
/// own random offset whose norm is drawn uniformly from
/// `[0.5, 1.5] × night_shift`.
pub fn diverse_phases<R: Rng + ?Sized>(
    geometry: &GeometryConfig,
    count: usize,
    rng: &mut R,
) -> Result<Vec<PhaseSpec>> {
    geometry.validate()?;
    if count == 0 {
        return Err(Error::Config("need at least one phase".into()));
    }
    let base = geometry.base_means(rng);
    Ok((0..count)
        .map(|i| {
            let norm = geometry.night_shift * rng.random_range(0.5..1.5);
            let offset = geometry.direction(norm, rng);
            geometry.phase(format!("scene{}", i + 1), &base, &offset)
        })
        .collect())
}

/// Writes datasets as CSV: `f0..f{d-1}, label, domain_id`, one row per sample.
pub fn write_domains_csv(path: &Path, domains: &[DomainDataset]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let dim = domains.first().map_or(0, DomainDataset::dim);
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    header.push("domain_id".into());
    w.write_record(&header).map_err(csv_err)?;
    for d in domains {
        if d.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: d.dim(),
            });
        }
        for (x, y) in d.features().iter_rows().zip(d.labels()) {
            let mut record: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            record.push(y.to_string());
            record.push(d.domain_id.0.clone());
            w.write_record(&record).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads datasets written by [`write_domains_csv`] (or any CSV with the same
/// columns). Domains keep first-appearance order and get arrival indices
/// from 1.
pub fn read_domains_csv(path: &Path) -> Result<Vec<DomainDataset>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let bad = |msg: String| Error::contract(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    let n = header.len();
    if n < 3 || &header[n - 2] != "label" || &header[n - 1] != "domain_id" {
        return Err(bad("expected columns f0..f{d-1}, label, domain_id".into()));
    }
    for (i, h) in header.iter().take(n - 2).enumerate() {
        if h != format!("f{i}") {
            return Err(bad(format!("column {i} is {h:?}, expected \"f{i}\"")));
        }
    }
    let dim = n - 2;

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Vec<f64>, Vec<usize>)> = HashMap::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = line + 2;
        let mut values = Vec::with_capacity(dim);
        for field in record.iter().take(dim) {
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("row {row}: {e}")))?,
            );
        }
        let label = record[dim]
            .trim()
            .parse::<usize>()
            .map_err(|e| bad(format!("row {row}: label: {e}")))?;
        let id = record[dim + 1].to_string();
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            (Vec::new(), Vec::new())
        });
        entry.0.extend(values);
        entry.1.push(label);
    }
    order
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let (values, labels) = groups.remove(&id).expect("grouped id");
            let features = FeatureMatrix::new(labels.len(), dim, values)?;
            DomainDataset::new(id, i as u64 + 1, features, labels)
        })
        .collect()
}
