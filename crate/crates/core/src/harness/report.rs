use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ReplayMode, RunConfig};
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.json";
pub const TABLE_FILE: &str = "table.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseAccuracy {
    pub phase_id: String,
    pub accuracy: f64,
}

/// A replayed domain as recorded in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub domain_id: String,
    pub arrival_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub arrival_index: u64,
    pub phase_id: String,
    pub domain_id: String,
    /// Held-out accuracy on the phase just adapted to.
    pub accuracy_after_adaptation: f64,
    /// Mean held-out accuracy over every phase seen so far, this one included.
    pub mean_accuracy_over_all_seen_phases: f64,
    /// Held-out accuracy per seen phase, in order of first appearance.
    pub phase_accuracies: Vec<PhaseAccuracy>,
    pub replayed: Vec<ReplayRecord>,
    /// Replay objective at the end of the round's training.
    pub final_replay_loss: f64,
}

impl RoundMetrics {
    pub fn accuracy_on(&self, phase_id: &str) -> Option<f64> {
        self.phase_accuracies
            .iter()
            .find(|p| p.phase_id == phase_id)
            .map(|p| p.accuracy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevisitGain {
    pub phase_id: String,
    pub first_visit: f64,
    pub second_visit: f64,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: ReplayMode,
    pub seed: u64,
    pub config: RunConfig,
    pub rounds: Vec<RoundMetrics>,
    /// Second-visit minus first-visit adaptation accuracy, for every phase
    /// visited at least twice.
    pub revisit_gain: Vec<RevisitGain>,
    /// Mean over rounds of `mean_accuracy_over_all_seen_phases`.
    pub overall_mean: f64,
    /// Mean over rounds of `accuracy_after_adaptation`.
    pub mean_adaptation_accuracy: f64,
    /// Mean `accuracy_after_adaptation` per schedule cycle.
    pub cycle_means: Vec<f64>,
}

impl MetricsReport {
    pub(crate) fn summarize(
        mode: ReplayMode,
        config: &RunConfig,
        rounds: Vec<RoundMetrics>,
        cycle_len: usize,
    ) -> Self {
        let mean = |it: &mut dyn Iterator<Item = f64>| {
            let (sum, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        };
        let overall_mean = mean(&mut rounds.iter().map(|r| r.mean_accuracy_over_all_seen_phases));
        let mean_adaptation_accuracy =
            mean(&mut rounds.iter().map(|r| r.accuracy_after_adaptation));
        let cycle_means = rounds
            .chunks(cycle_len.max(1))
            .map(|c| mean(&mut c.iter().map(|r| r.accuracy_after_adaptation)))
            .collect();

        let mut revisit_gain: Vec<RevisitGain> = Vec::new();
        let mut first_seen: Vec<(&str, f64, bool)> = Vec::new();
        for r in &rounds {
            match first_seen.iter_mut().find(|(p, _, _)| *p == r.phase_id) {
                None => first_seen.push((&r.phase_id, r.accuracy_after_adaptation, false)),
                Some((p, first, done)) if !*done => {
                    *done = true;
                    revisit_gain.push(RevisitGain {
                        phase_id: p.to_string(),
                        first_visit: *first,
                        second_visit: r.accuracy_after_adaptation,
                        gain: r.accuracy_after_adaptation - *first,
                    });
                }
                Some(_) => {}
            }
        }

        Self {
            mode,
            seed: config.seed,
            config: config.echo(),
            rounds,
            revisit_gain,
            overall_mean,
            mean_adaptation_accuracy,
            cycle_means,
        }
    }

    pub fn gain_for(&self, phase_id: &str) -> Option<f64> {
        self.revisit_gain
            .iter()
            .find(|g| g.phase_id == phase_id)
            .map(|g| g.gain)
    }

    pub fn schedule_labels(&self) -> Vec<&str> {
        self.rounds.iter().map(|r| r.phase_id.as_str()).collect()
    }
}

/// Paired full-policy vs. random-selection runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub er_emu: MetricsReport,
    pub random_selection: MetricsReport,
    /// `er_emu.overall_mean − random_selection.overall_mean`
    pub mean_difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub select_count: usize,
    pub overall_mean: f64,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// max − min of the per-point overall means.
    pub spread: f64,
}

impl SweepReport {
    pub(crate) fn new(points: Vec<SweepPoint>) -> Self {
        let max = points
            .iter()
            .map(|p| p.overall_mean)
            .fold(f64::NEG_INFINITY, f64::max);
        let min = points
            .iter()
            .map(|p| p.overall_mean)
            .fold(f64::INFINITY, f64::min);
        let spread = if points.is_empty() { 0.0 } else { max - min };
        Self { points, spread }
    }
}

/// Writes `metrics.json` and a one-row `table.csv` into `dir`.
pub fn write_metrics(report: &MetricsReport, dir: &Path) -> Result<()> {
    write_json(report, dir)?;
    write_table(&[(report.mode.to_string(), report)], dir)
}

pub fn write_ablation(report: &AblationReport, dir: &Path) -> Result<()> {
    write_json(report, dir)?;
    write_table(
        &[
            (report.er_emu.mode.to_string(), &report.er_emu),
            (
                report.random_selection.mode.to_string(),
                &report.random_selection,
            ),
        ],
        dir,
    )
}

pub fn write_sweep(report: &SweepReport, dir: &Path) -> Result<()> {
    write_json(report, dir)?;
    let rows: Vec<(String, &MetricsReport)> = report
        .points
        .iter()
        .map(|p| (format!("l={}", p.select_count), &p.report))
        .collect();
    write_table(&rows, dir)
}

pub fn read_metrics(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(value: &T, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(METRICS_FILE);
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|source| Error::Io { path, source })
}

/// Rows are methods, columns the schedule entries (mean accuracy over
/// phases seen so far, after each round) plus the overall mean.
fn write_table(rows: &[(String, &MetricsReport)], dir: &Path) -> Result<()> {
    let path = dir.join(TABLE_FILE);
    let csv_err = |source| Error::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    if let Some((_, first)) = rows.first() {
        let mut header = vec!["method".to_string()];
        header.extend(first.schedule_labels().into_iter().map(str::to_owned));
        header.push("Mean".into());
        w.write_record(&header).map_err(csv_err)?;
    }
    for (name, report) in rows {
        let mut record = vec![name.clone()];
        record.extend(
            report
                .rounds
                .iter()
                .map(|r| format!("{:.4}", r.mean_accuracy_over_all_seen_phases)),
        );
        record.push(format!("{:.4}", report.overall_mean));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })
}
