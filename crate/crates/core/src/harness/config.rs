use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{validate_kernel_weights, MultiKernel, DEFAULT_BANDWIDTH_SCALES};
use crate::simulator::{GeometryConfig, PhaseSpec};

/// How historical domains are chosen for replay each round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    /// MK-MMD ranking, most distant first, sigmoid weights.
    #[default]
    ErEmu,
    /// Uniformly random buffered domains, weight 1.
    RandomSelection,
    /// Current domain only.
    NoReplay,
    /// MK-MMD ranking, least distant first, sigmoid weights.
    LiteralAscending,
}

impl ReplayMode {
    pub const ALL: [ReplayMode; 4] = [
        ReplayMode::ErEmu,
        ReplayMode::RandomSelection,
        ReplayMode::NoReplay,
        ReplayMode::LiteralAscending,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReplayMode::ErEmu => "er_emu",
            ReplayMode::RandomSelection => "random_selection",
            ReplayMode::NoReplay => "no_replay",
            ReplayMode::LiteralAscending => "literal_ascending",
        }
    }
}

impl fmt::Display for ReplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReplayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReplayMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown replay mode {s:?} (expected er_emu, random_selection, no_replay or literal_ascending)"
                ))
            })
    }
}

/// Kernel set used for the per-round domain distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// Gaussian kernels at `scales × median-heuristic bandwidth`, the
    /// bandwidth recomputed each round over the current and buffered
    /// samples (strided down to at most `max_pooled_samples`).
    MedianHeuristic {
        scales: Vec<f64>,
        /// Defaults to uniform.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        max_pooled_samples: usize,
    },
    Fixed(MultiKernel),
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::MedianHeuristic {
            scales: DEFAULT_BANDWIDTH_SCALES.to_vec(),
            weights: None,
            max_pooled_samples: 512,
        }
    }
}

impl KernelConfig {
    /// The multi-kernel for a given base bandwidth.
    pub fn resolve(&self, base_bandwidth: f64) -> Result<MultiKernel> {
        match self {
            KernelConfig::MedianHeuristic {
                scales, weights, ..
            } => match weights {
                None => MultiKernel::gaussian_family(base_bandwidth, scales),
                Some(w) => {
                    let uniform = MultiKernel::gaussian_family(base_bandwidth, scales)?;
                    MultiKernel::new(uniform.kernels, w.clone())
                }
            },
            KernelConfig::Fixed(mk) => {
                validate_kernel_weights(mk)?;
                Ok(mk.clone())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let KernelConfig::MedianHeuristic {
            scales,
            max_pooled_samples,
            ..
        } = self
        {
            if *max_pooled_samples < 2 {
                return Err(Error::Config(
                    "max_pooled_samples must be at least 2".into(),
                ));
            }
            if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::Config("bandwidth scales must be positive".into()));
            }
        }
        self.resolve(1.0)
            .map(drop)
            .map_err(|e| Error::Config(format!("kernel: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub step_size: f64,
    pub steps_per_round: usize,
    /// Standard deviation of the initial weights.
    pub init_scale: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            steps_per_round: 5,
            init_scale: 0.01,
        }
    }
}

/// Which phases make up one cycle of the schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    /// `day1, day2, night1, night2`.
    #[default]
    DayNight,
    /// `count` mutually translated scenes.
    Diverse { count: usize },
    /// Phases given verbatim; the geometry settings are ignored.
    Explicit { phases: Vec<PhaseSpec> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub layout: Layout,
    pub cycles: usize,
    pub geometry: GeometryConfig,
    /// Held-out samples per phase used for evaluation.
    pub eval_samples_per_phase: usize,
    /// Probability that a training label is replaced by a wrong class.
    pub label_noise: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            layout: Layout::DayNight,
            cycles: 2,
            geometry: GeometryConfig::default(),
            eval_samples_per_phase: 200,
            label_noise: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Maximum number of buffered domains.
    pub buffer_capacity: usize,
    /// Samples kept per buffered domain.
    pub per_domain: usize,
    /// Historical domains replayed per round.
    pub select_count: usize,
    pub kernel: KernelConfig,
    pub learner: LearnerConfig,
    pub schedule: ScheduleConfig,
    pub replay_mode: ReplayMode,
    /// Master seed; every random stream of a run derives from it.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            buffer_capacity: 8,
            per_domain: 100,
            select_count: 3,
            kernel: KernelConfig::default(),
            learner: LearnerConfig::default(),
            schedule: ScheduleConfig::default(),
            replay_mode: ReplayMode::ErEmu,
            seed: 0,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("buffer_capacity", self.buffer_capacity),
            ("per_domain", self.per_domain),
            ("select_count", self.select_count),
            ("schedule.cycles", self.schedule.cycles),
            (
                "schedule.eval_samples_per_phase",
                self.schedule.eval_samples_per_phase,
            ),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let step = self.learner.step_size;
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Config(format!(
                "learner.step_size must be positive, got {step}"
            )));
        }
        let scale = self.learner.init_scale;
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::Config(format!(
                "learner.init_scale must be >= 0, got {scale}"
            )));
        }
        if !(0.0..=1.0).contains(&self.schedule.label_noise) {
            return Err(Error::Config(
                "schedule.label_noise must be in [0, 1]".into(),
            ));
        }
        match &self.schedule.layout {
            Layout::Diverse { count: 0 } => {
                return Err(Error::Config(
                    "schedule is empty: diverse layout with count 0".into(),
                ))
            }
            Layout::Explicit { phases } if phases.is_empty() => {
                return Err(Error::Config(
                    "schedule is empty: no explicit phases".into(),
                ))
            }
            Layout::Explicit { phases } => {
                for p in phases {
                    p.validate().map_err(|e| Error::Config(e.to_string()))?;
                }
            }
            _ => self.schedule.geometry.validate()?,
        }
        self.kernel.validate()
    }

    /// The configuration without its output location, as echoed in reports.
    pub fn echo(&self) -> Self {
        Self {
            output: None,
            ..self.clone()
        }
    }
}
