//! Adaptive experience replay for continually adapting classifiers.
//!
//! A learner that is fine-tuned on a stream of shifting target domains keeps
//! a small FIFO buffer of per-domain sample subsets ([`buffer`]). Before each
//! update, the buffered domains are ranked by multi-kernel MMD to the
//! incoming domain ([`kernels`], [`selection`]); the most distant ones are
//! replayed with sigmoid-of-distance weights in the training objective
//! ([`learner`]). [`simulator`] produces synthetic cyclic domain streams and
//! [`harness`] runs the whole loop, its ablations, and the `l` sweep.

pub mod buffer;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod learner;
pub mod matrix;
pub mod seeding;
pub mod selection;
pub mod simulator;

pub use buffer::{BufferEntry, DomainDataset, DomainId, ExperienceBuffer};
pub use error::{Error, Result};
pub use harness::{
    run, run_ablation, sweep_l, write_metrics, AblationReport, MetricsReport, ReplayMode,
    RunConfig, SweepReport,
};
pub use kernels::{
    kernel_eval, median_heuristic_bandwidth, mk_mmd, mmd_squared, validate_kernel_weights,
    DistanceValue, KernelSpec, MultiKernel,
};
pub use learner::{evaluate, loss, replay_loss, train_step, Learner, LinearSoftmax, WeightedBatch};
pub use matrix::FeatureMatrix;
pub use selection::{ddm_es, rank_domains_by_distance, sigmoid, SelectionOrder, SelectionResult};
pub use simulator::{build_repeat_schedule, generate_domain, PhaseSpec, Schedule};
