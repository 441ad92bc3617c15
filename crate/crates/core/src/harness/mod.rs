//! Seeded end-to-end runs of the replay update loop.
//!
//! Each round receives one target domain and then, strictly in this order:
//! selects historical domains from the buffer, trains on the weighted replay
//! objective, inserts the new domain into the buffer, and evaluates on
//! held-out samples of every phase seen so far.

mod config;
mod report;

pub use config::{KernelConfig, Layout, LearnerConfig, ReplayMode, RunConfig, ScheduleConfig};
pub use report::{
    read_metrics, write_ablation, write_metrics, write_sweep, AblationReport, MetricsReport,
    PhaseAccuracy, ReplayRecord, RevisitGain, RoundMetrics, SweepPoint, SweepReport, METRICS_FILE,
    TABLE_FILE,
};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::buffer::{DomainDataset, ExperienceBuffer};
use crate::error::{Error, Result};
use crate::kernels::median_heuristic_bandwidth;
use crate::learner::{evaluate, replay_loss, train_step, LinearSoftmax};
use crate::matrix::FeatureMatrix;
use crate::seeding::{derive_seed, stream_rng, Stream};
use crate::selection::{ddm_es_ordered, random_selection, SelectionOrder, SelectionResult};
use crate::simulator::{
    apply_label_noise, build_repeat_schedule, day_night_phases, diverse_phases, generate_domain,
    Schedule,
};

/// Builds the schedule a config describes; phase geometry draws from the
/// master seed's geometry stream.
pub fn build_schedule(config: &RunConfig) -> Result<Schedule> {
    let sched = &config.schedule;
    let mut rng = stream_rng(config.seed, Stream::Geometry, 0);
    let phases = match &sched.layout {
        Layout::DayNight => day_night_phases(&sched.geometry, &mut rng)?,
        Layout::Diverse { count } => diverse_phases(&sched.geometry, *count, &mut rng)?,
        Layout::Explicit { phases } => phases.clone(),
    };
    build_repeat_schedule(phases, sched.cycles)
}

/// State visible to a [`RoundObserver`] at the end of a round.
pub struct RoundView<'a> {
    pub round: usize,
    pub current: &'a DomainDataset,
    pub selection: &'a SelectionResult,
    pub learner: &'a LinearSoftmax,
    pub buffer: &'a ExperienceBuffer,
    pub metrics: &'a RoundMetrics,
}

pub trait RoundObserver {
    fn observe(&mut self, view: &RoundView<'_>);
}

impl<F: FnMut(&RoundView<'_>)> RoundObserver for F {
    fn observe(&mut self, view: &RoundView<'_>) {
        self(view)
    }
}

pub fn run(config: &RunConfig) -> Result<MetricsReport> {
    run_observed(config, &mut |_: &RoundView<'_>| {})
}

pub fn run_observed(config: &RunConfig, observer: &mut dyn RoundObserver) -> Result<MetricsReport> {
    config.validate()?;
    let schedule = build_schedule(config)?;
    let first = &schedule.phases[0];
    let num_classes = first.num_classes();
    let dim = first.dim();
    if schedule
        .phases
        .iter()
        .any(|p| p.num_classes() != num_classes)
    {
        return Err(Error::Config(
            "all phases must share one class count".into(),
        ));
    }

    // Held-out evaluation sets, one per phase, never trained on.
    let eval_sets = schedule
        .phases
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = stream_rng(config.seed, Stream::Evaluation, i as u64);
            let (x, y) = p.sample(config.schedule.eval_samples_per_phase, &mut rng)?;
            DomainDataset::new(format!("{}/eval", p.phase_id), 0, x, y)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut learner = LinearSoftmax::seeded(
        num_classes,
        dim,
        config.learner.step_size,
        config.learner.init_scale,
        derive_seed(config.seed, Stream::LearnerInit, 0),
    )?;
    let mut buffer = ExperienceBuffer::new(config.buffer_capacity, config.per_domain)?;
    let mut buffer_rng = stream_rng(config.seed, Stream::Buffer, 0);
    let mut selection_rng = stream_rng(config.seed, Stream::RandomSelection, 0);
    let mut seen: Vec<usize> = Vec::new();
    let mut rounds = Vec::with_capacity(schedule.len());

    for (round, entry) in schedule.entries.iter().enumerate() {
        let phase = schedule.phase_of(entry);
        let wrap = |e: Error| Error::Round {
            round: entry.arrival_index,
            phase: phase.phase_id.clone(),
            source: Box::new(e),
        };

        let mut rng = stream_rng(config.seed, Stream::Domain, entry.arrival_index);
        let current = generate_domain(phase, entry.arrival_index, &mut rng).map_err(wrap)?;
        let mut noise_rng = stream_rng(config.seed, Stream::LabelNoise, entry.arrival_index);
        let current = apply_label_noise(
            &current,
            num_classes,
            config.schedule.label_noise,
            &mut noise_rng,
        )
        .map_err(wrap)?;

        let selection = select(config, &buffer, &current, &mut selection_rng).map_err(wrap)?;
        for _ in 0..config.learner.steps_per_round {
            learner = train_step(&learner, &current, &selection).map_err(wrap)?;
        }
        let final_replay_loss = replay_loss(&learner, &current, &selection).map_err(wrap)?;
        buffer
            .rs_ebu_update(&current, &mut buffer_rng)
            .map_err(wrap)?;

        if !seen.contains(&entry.phase) {
            seen.push(entry.phase);
        }
        let phase_accuracies = seen
            .iter()
            .map(|&p| {
                Ok(PhaseAccuracy {
                    phase_id: schedule.phases[p].phase_id.clone(),
                    accuracy: evaluate(&learner, &eval_sets[p])?,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(wrap)?;
        let accuracy_after_adaptation =
            evaluate(&learner, &eval_sets[entry.phase]).map_err(wrap)?;
        let mean_seen = phase_accuracies.iter().map(|p| p.accuracy).sum::<f64>()
            / phase_accuracies.len() as f64;

        let metrics = RoundMetrics {
            arrival_index: entry.arrival_index,
            phase_id: phase.phase_id.clone(),
            domain_id: current.domain_id.to_string(),
            accuracy_after_adaptation,
            mean_accuracy_over_all_seen_phases: mean_seen,
            phase_accuracies,
            replayed: selection
                .selected
                .iter()
                .map(|s| ReplayRecord {
                    domain_id: s.samples.domain_id.to_string(),
                    arrival_index: s.samples.arrival_index,
                    distance: s.distance.map(|d| d.value()),
                    weight: s.weight,
                })
                .collect(),
            final_replay_loss,
        };
        observer.observe(&RoundView {
            round,
            current: &current,
            selection: &selection,
            learner: &learner,
            buffer: &buffer,
            metrics: &metrics,
        });
        rounds.push(metrics);
    }

    Ok(MetricsReport::summarize(
        config.replay_mode,
        config,
        rounds,
        schedule.phases.len(),
    ))
}

fn select(
    config: &RunConfig,
    buffer: &ExperienceBuffer,
    current: &DomainDataset,
    rng: &mut ChaCha8Rng,
) -> Result<SelectionResult> {
    let l = config.select_count;
    let order = match config.replay_mode {
        ReplayMode::NoReplay => return Ok(SelectionResult::empty()),
        ReplayMode::RandomSelection => return random_selection(buffer, l, rng),
        ReplayMode::ErEmu => SelectionOrder::MostDistant,
        ReplayMode::LiteralAscending => SelectionOrder::Ascending,
    };
    if buffer.is_empty() {
        return Ok(SelectionResult::empty());
    }
    let bandwidth = match &config.kernel {
        KernelConfig::MedianHeuristic {
            max_pooled_samples, ..
        } => pooled_bandwidth(current, buffer, *max_pooled_samples)?,
        KernelConfig::Fixed(_) => 1.0,
    };
    let mk = config.kernel.resolve(bandwidth)?;
    ddm_es_ordered(buffer, current, l, &mk, order)
}

/// Median-heuristic bandwidth over the current domain and the buffered
/// samples, each side strided down to at most `max_samples / 2` rows.
fn pooled_bandwidth(
    current: &DomainDataset,
    buffer: &ExperienceBuffer,
    max_samples: usize,
) -> Result<f64> {
    let half = (max_samples / 2).max(1);
    let stored = FeatureMatrix::vstack(buffer.stored_domains().map(DomainDataset::features))?;
    let a = strided(current.features(), half)?;
    let b = strided(&stored, half)?;
    median_heuristic_bandwidth(&a, &b)
}

fn strided(m: &FeatureMatrix, max_rows: usize) -> Result<FeatureMatrix> {
    if m.rows() <= max_rows {
        return Ok(m.clone());
    }
    let stride = m.rows().div_ceil(max_rows);
    let idx: Vec<usize> = (0..m.rows()).step_by(stride).collect();
    m.select_rows(&idx)
}

/// Full policy and random selection on identical seeds and schedules.
pub fn run_ablation(config: &RunConfig) -> Result<AblationReport> {
    let with_mode = |mode| RunConfig {
        replay_mode: mode,
        ..config.clone()
    };
    let (er_emu, random_selection) = rayon::join(
        || run(&with_mode(ReplayMode::ErEmu)),
        || run(&with_mode(ReplayMode::RandomSelection)),
    );
    let (er_emu, random_selection) = (er_emu?, random_selection?);
    Ok(AblationReport {
        mean_difference: er_emu.overall_mean - random_selection.overall_mean,
        er_emu,
        random_selection,
    })
}

/// One run per selection count, everything else held fixed.
pub fn sweep_l(config: &RunConfig, l_values: &[usize]) -> Result<SweepReport> {
    if l_values.is_empty() {
        return Err(Error::Config("no l values to sweep".into()));
    }
    if l_values.contains(&0) {
        return Err(Error::Config("l values must be at least 1".into()));
    }
    let points = l_values
        .par_iter()
        .map(|&l| {
            let report = run(&RunConfig {
                select_count: l,
                ..config.clone()
            })?;
            Ok(SweepPoint {
                select_count: l,
                overall_mean: report.overall_mean,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::new(points))
}

/// Runs `config` once per master seed, in parallel, reports in seed order.
pub fn run_seeds(config: &RunConfig, seeds: &[u64]) -> Result<Vec<MetricsReport>> {
    seeds
        .par_iter()
        .map(|&seed| {
            run(&RunConfig {
                seed,
                ..config.clone()
            })
        })
        .collect()
}
