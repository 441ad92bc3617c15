//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use eremu_core::harness::{
    run_observed, run_seeds, write_ablation, write_metrics, write_sweep, Layout, MetricsReport,
    ReplayMode, RoundView, RunConfig, METRICS_FILE, TABLE_FILE,
};
use eremu_core::selection::{ddm_es_ordered, SelectionOrder};
use eremu_core::{
    ddm_es, mk_mmd, mmd_squared, run, run_ablation, sweep_l, validate_kernel_weights,
    DomainDataset, Error, ExperienceBuffer, FeatureMatrix, KernelSpec, Learner, LinearSoftmax,
    MultiKernel, WeightedBatch,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> FeatureMatrix {
    let values = (0..rows * dim)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    FeatureMatrix::new(rows, dim, values).unwrap()
}

/// Two matrices of a shared random dimension (≤ 4) with ≤ 8 rows each.
fn random_pair(rng: &mut ChaCha8Rng) -> (FeatureMatrix, FeatureMatrix) {
    let dim = rng.random_range(1..=4);
    let (m, n) = (rng.random_range(1..=8), rng.random_range(1..=8));
    (random_matrix(rng, m, dim), random_matrix(rng, n, dim))
}

fn random_kernel(rng: &mut ChaCha8Rng) -> KernelSpec {
    if rng.random_bool(0.2) {
        KernelSpec::Linear
    } else {
        KernelSpec::gaussian(rng.random_range(0.1..4.0)).unwrap()
    }
}

fn naive_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    match *spec {
        KernelSpec::Gaussian { bandwidth } => {
            let mut sq = 0.0;
            for k in 0..x.len() {
                sq += (x[k] - y[k]) * (x[k] - y[k]);
            }
            (-sq / (2.0 * bandwidth * bandwidth)).exp()
        }
        KernelSpec::Linear => {
            let mut s = 0.0;
            for k in 0..x.len() {
                s += x[k] * y[k];
            }
            s
        }
    }
}

/// Term-by-term biased estimate: mean k(x,x') + mean k(y,y') − 2·mean k(x,y).
fn naive_mmd(a: &FeatureMatrix, b: &FeatureMatrix, spec: &KernelSpec) -> f64 {
    let (m, n) = (a.rows() as f64, b.rows() as f64);
    let mut xx = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.rows() {
            xx += naive_kernel(spec, a.row(i), a.row(j));
        }
    }
    let mut yy = 0.0;
    for i in 0..b.rows() {
        for j in 0..b.rows() {
            yy += naive_kernel(spec, b.row(i), b.row(j));
        }
    }
    let mut xy = 0.0;
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            xy += naive_kernel(spec, a.row(i), b.row(j));
        }
    }
    xx / (m * m) + yy / (n * n) - 2.0 * xy / (m * n)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (a, b) = random_pair(&mut rng);
        let spec = random_kernel(&mut rng);
        let fast = mmd_squared(&a, &b, &spec).unwrap().value();
        let reverse = mmd_squared(&b, &a, &spec).unwrap().value();
        let same = mmd_squared(&a, &a, &spec).unwrap().value();
        let oracle = naive_mmd(&a, &b, &spec).max(0.0);
        worst = worst.max((fast - oracle).abs());
        if (fast - oracle).abs() > 1e-10 {
            return outcome(false, format!("oracle mismatch {fast} vs {oracle}"));
        }
        if fast < 0.0 || (fast - reverse).abs() > 1e-12 || same.abs() > 1e-10 {
            return outcome(
                false,
                format!("invariant broken: d={fast} rev={reverse} self={same}"),
            );
        }
    }
    outcome(true, format!("200 pairs, max |fast − naive| = {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..100 {
        let (a, b) = random_pair(&mut rng);
        let spec = random_kernel(&mut rng);
        let single = MultiKernel::single(spec).unwrap();
        let mk = mk_mmd(&a, &b, &single).unwrap().value();
        let plain = mmd_squared(&a, &b, &spec).unwrap().value();
        if mk.to_bits() != plain.to_bits() {
            return outcome(false, format!("single-kernel mismatch {mk} vs {plain}"));
        }
    }
    let kernels = vec![KernelSpec::gaussian(1.0).unwrap(), KernelSpec::Linear];
    let negative = MultiKernel {
        kernels: kernels.clone(),
        weights: vec![1.5, -0.5],
    };
    let unnormalized = MultiKernel {
        kernels,
        weights: vec![0.5, 0.6],
    };
    let rejects = matches!(
        validate_kernel_weights(&negative),
        Err(Error::NegativeWeight { .. })
    ) && matches!(
        validate_kernel_weights(&unnormalized),
        Err(Error::WeightsNotNormalized { .. })
    );
    outcome(
        rejects,
        "100 bitwise-equal reductions; negative and non-normalized weights rejected",
    )
}

fn point_cloud(rng: &mut ChaCha8Rng, id: String, arrival: u64, dim: usize) -> DomainDataset {
    let shift: f64 = rng.random_range(-3.0..3.0);
    let rows = rng.random_range(2..=6);
    let values = (0..rows * dim)
        .map(|_| shift + rng.random_range(-1.0..1.0))
        .collect();
    let x = FeatureMatrix::new(rows, dim, values).unwrap();
    DomainDataset::new(id, arrival, x, vec![0; rows]).unwrap()
}

/// Exhaustive ranking: a domain is picked iff fewer than `l` others beat it
/// (strictly larger distance, or equal distance and earlier arrival).
fn brute_force_selection(dist: &[(u64, f64)], l: usize) -> Vec<(u64, f64)> {
    let mut picked: Vec<(usize, u64, f64)> = Vec::new();
    for &(arr, d) in dist {
        let beaten_by = dist
            .iter()
            .filter(|&&(arr2, d2)| d2 > d || (d2 == d && arr2 < arr))
            .count();
        if beaten_by < l {
            picked.push((beaten_by, arr, 1.0 / (1.0 + (-d).exp())));
        }
    }
    picked.sort_by_key(|p| p.0);
    picked.into_iter().map(|(_, a, w)| (a, w)).collect()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for case in 0..100 {
        let dim = rng.random_range(1..=3);
        let domains = rng.random_range(0..=10);
        let mut buf = ExperienceBuffer::new(10, 50).unwrap();
        for k in 0..domains {
            let d = point_cloud(&mut rng, format!("d{k}"), k as u64 + 1, dim);
            buf.rs_ebu_update(&d, &mut rng).unwrap();
        }
        let current = point_cloud(&mut rng, "current".into(), domains as u64 + 1, dim);
        let scales = [0.5, 1.0, 2.0];
        let mk = MultiKernel::gaussian_family(rng.random_range(0.5..2.0), &scales).unwrap();
        let l = rng.random_range(1..=12);

        let dist: Vec<(u64, f64)> = buf
            .stored_domains()
            .map(|d| {
                let v: f64 = mk
                    .kernels
                    .iter()
                    .zip(&mk.weights)
                    .map(|(k, w)| w * naive_mmd(current.features(), d.features(), k))
                    .sum();
                (d.arrival_index, v.max(0.0))
            })
            .collect();
        let expected = brute_force_selection(&dist, l);
        let got = ddm_es(&buf, &current, l, &mk).unwrap();
        let got: Vec<(u64, f64)> = got
            .selected
            .iter()
            .map(|s| (s.samples.arrival_index, s.weight))
            .collect();
        if got.len() != expected.len()
            || got
                .iter()
                .zip(&expected)
                .any(|(g, e)| g.0 != e.0 || (g.1 - e.1).abs() > 1e-12)
        {
            return outcome(false, format!("case {case}: {got:?} vs {expected:?}"));
        }
        if got.iter().any(|g| g.0 == current.arrival_index) {
            return outcome(false, format!("case {case}: current domain selected"));
        }
    }

    // Identical domains tie exactly; the older arrivals must win, every time.
    let mut buf = ExperienceBuffer::new(6, 10).unwrap();
    let twin = FeatureMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    for k in 1..=5u64 {
        let d = DomainDataset::new(format!("t{k}"), k, twin.clone(), vec![0, 0]).unwrap();
        buf.rs_ebu_update(&d, &mut rng).unwrap();
    }
    let current = DomainDataset::new(
        "c",
        6,
        FeatureMatrix::from_rows(&[[3.0, 3.0]]).unwrap(),
        vec![0],
    )
    .unwrap();
    let mk = MultiKernel::gaussian_family(1.0, &[0.5, 1.0, 2.0]).unwrap();
    let first = ddm_es(&buf, &current, 3, &mk).unwrap();
    let ties_ok = first.arrival_indices() == [1, 2, 3]
        && (0..5).all(|_| ddm_es(&buf, &current, 3, &mk).unwrap() == first)
        && ddm_es_ordered(&buf, &current, 3, &mk, SelectionOrder::Ascending)
            .unwrap()
            .arrival_indices()
            == [1, 2, 3];

    // In the full loop the incoming domain is never among its own selection.
    let mut self_selected = false;
    let cfg = RunConfig::default();
    run_observed(&cfg, &mut |v: &RoundView<'_>| {
        self_selected |= v
            .selection
            .arrival_indices()
            .contains(&v.current.arrival_index);
    })
    .unwrap();

    outcome(
        ties_ok && !self_selected,
        format!("100 buffers match exhaustive ranking; ties→oldest: {ties_ok}; self-selection: {self_selected}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for seq in 0..1000 {
        let capacity = rng.random_range(1..=8);
        let per_domain = rng.random_range(1..=12);
        let mut buf = ExperienceBuffer::new(capacity, per_domain).unwrap();
        let mut sources: Vec<DomainDataset> = Vec::new();
        for t in 1..=rng.random_range(1..=20u64) {
            let n = rng.random_range(1..=20);
            // Row i of domain t is (t, i): every stored row names its origin.
            let rows: Vec<[f64; 2]> = (0..n).map(|i| [t as f64, i as f64]).collect();
            let labels = (0..n).map(|i| i % 3).collect();
            let d = DomainDataset::new(
                format!("s{seq}d{t}"),
                t,
                FeatureMatrix::from_rows(&rows).unwrap(),
                labels,
            )
            .unwrap();
            let evicted = buf.rs_ebu_update(&d, &mut rng).unwrap();
            sources.push(d);

            let expect_evicted = (sources.len() > capacity)
                .then(|| sources[sources.len() - capacity - 1].arrival_index);
            if evicted.map(|e| e.arrival_index()) != expect_evicted {
                return outcome(false, format!("sequence {seq}: wrong eviction"));
            }
            let start = sources.len().saturating_sub(capacity);
            let expected: Vec<u64> = sources[start..].iter().map(|d| d.arrival_index).collect();
            let stored: Vec<u64> = buf.stored_domains().map(|d| d.arrival_index).collect();
            if buf.len() > capacity || stored != expected {
                return outcome(
                    false,
                    format!("sequence {seq}: buffer order {stored:?} vs {expected:?}"),
                );
            }
            for entry in buf.stored_domains() {
                let src = &sources[(entry.arrival_index - 1) as usize];
                if entry.len() != per_domain.min(src.len()) || entry.domain_id != src.domain_id {
                    return outcome(false, format!("sequence {seq}: per-domain cap violated"));
                }
                let mut seen = std::collections::HashSet::new();
                for (row, &label) in entry.features().iter_rows().zip(entry.labels()) {
                    let i = row[1] as usize;
                    if row[0] != entry.arrival_index as f64
                        || i >= src.len()
                        || src.labels()[i] != label
                        || !seen.insert(i)
                    {
                        return outcome(
                            false,
                            format!("sequence {seq}: stored sample not from its source"),
                        );
                    }
                }
            }
        }
    }

    let mut buf = ExperienceBuffer::new(30, 200).unwrap();
    for t in 1..=40u64 {
        let x = random_matrix(&mut rng, 250, 2);
        let d = DomainDataset::new(format!("v{t}"), t, x, vec![0; 250]).unwrap();
        buf.rs_ebu_update(&d, &mut rng).unwrap();
    }
    let arrivals: Vec<u64> = buf.stored_domains().map(|d| d.arrival_index).collect();
    let newest =
        arrivals == (11..=40).collect::<Vec<_>>() && buf.stored_domains().all(|d| d.len() == 200);
    outcome(
        newest,
        "1000 sequences safe; capacity 30 / 200 per domain keeps arrivals 11..=40",
    )
}

fn labelled(rng: &mut ChaCha8Rng, id: &str, dim: usize, classes: usize) -> DomainDataset {
    let rows = rng.random_range(1..=10);
    let x = random_matrix(rng, rows, dim);
    let y = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    DomainDataset::new(id, 1, x, y).unwrap()
}

fn loss_at(base: &LinearSoftmax, params: Vec<f64>, batches: &[WeightedBatch<'_>]) -> f64 {
    let l = LinearSoftmax::with_parameters(base.num_classes(), base.dim(), params, 0.1, 0).unwrap();
    batches
        .iter()
        .map(|b| b.weight * l.loss(b.data).unwrap())
        .sum()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    let mut additivity: f64 = 0.0;
    for _ in 0..25 {
        let classes = rng.random_range(2..=5);
        let dim = rng.random_range(1..=4);
        let params = (0..classes * (dim + 1))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let model = LinearSoftmax::with_parameters(classes, dim, params, 0.1, 0).unwrap();
        let current = labelled(&mut rng, "cur", dim, classes);
        let old: Vec<DomainDataset> = (0..rng.random_range(0..=3))
            .map(|k| labelled(&mut rng, &format!("old{k}"), dim, classes))
            .collect();
        let mut batches = vec![WeightedBatch::new(&current, 1.0).unwrap()];
        for d in &old {
            batches.push(WeightedBatch::new(d, rng.random_range(0.5..1.0)).unwrap());
        }

        let analytic = model.gradient(&batches).unwrap();
        let h = 1e-5;
        let (mut diff, mut norm) = (0.0f64, 0.0f64);
        for p in 0..analytic.len() {
            let mut plus = model.parameters().to_vec();
            let mut minus = plus.clone();
            plus[p] += h;
            minus[p] -= h;
            let numeric =
                (loss_at(&model, plus, &batches) - loss_at(&model, minus, &batches)) / (2.0 * h);
            diff += (analytic[p] - numeric).powi(2);
            norm = norm.max(analytic[p].abs()).max(numeric.abs());
        }
        worst = worst.max(diff.sqrt() / norm.max(1e-12));

        let mut selection = eremu_core::SelectionResult::empty();
        for (d, b) in old.iter().zip(&batches[1..]) {
            selection
                .selected
                .push(eremu_core::selection::SelectedDomain {
                    samples: d.clone(),
                    distance: None,
                    weight: b.weight,
                });
        }
        let combined = eremu_core::replay_loss(&model, &current, &selection).unwrap();
        let by_terms = eremu_core::loss(&model, &current).unwrap()
            + old
                .iter()
                .zip(&batches[1..])
                .map(|(d, b)| b.weight * eremu_core::loss(&model, d).unwrap())
                .sum::<f64>();
        additivity = additivity.max((combined - by_terms).abs());
    }
    outcome(
        worst <= 1e-4 && additivity <= 1e-12,
        format!(
            "25 configurations, max relative error {worst:.2e}, additivity error {additivity:.1e}"
        ),
    )
}

fn day_accuracy(r: &eremu_core::harness::RoundMetrics, days: &[String]) -> f64 {
    days.iter().map(|d| r.accuracy_on(d).unwrap()).sum::<f64>() / days.len() as f64
}

/// Day-phase accuracy right after the last day round vs. right after the
/// following night round, averaged over day→night transitions.
fn forgetting(r: &MetricsReport) -> (f64, f64) {
    let (mut before, mut after, mut n) = (0.0, 0.0, 0.0);
    for w in r.rounds.windows(2) {
        if w[0].phase_id.starts_with("day") && w[1].phase_id.starts_with("night") {
            let days: Vec<String> = w[0]
                .phase_accuracies
                .iter()
                .filter(|p| p.phase_id.starts_with("day"))
                .map(|p| p.phase_id.clone())
                .collect();
            before += day_accuracy(&w[0], &days);
            after += day_accuracy(&w[1], &days);
            n += 1.0;
        }
    }
    (before / n, after / n)
}

fn with_mode(cfg: &RunConfig, mode: ReplayMode) -> RunConfig {
    RunConfig {
        replay_mode: mode,
        ..cfg.clone()
    }
}

/// Returns the outcomes for 6a, 6b, 6c and the mean er_emu − no_replay gap.
fn criterion_6() -> (Vec<(&'static str, Outcome)>, f64) {
    let cfg = RunConfig::default();
    let er = run_seeds(&with_mode(&cfg, ReplayMode::ErEmu), &SEEDS).unwrap();
    let nr = run_seeds(&with_mode(&cfg, ReplayMode::NoReplay), &SEEDS).unwrap();
    let forgets = nr
        .iter()
        .filter(|r| {
            let (before, after) = forgetting(r);
            after < before
        })
        .count();
    let beats = er
        .iter()
        .zip(&nr)
        .filter(|(e, n)| e.overall_mean > n.overall_mean)
        .count();
    let improves = er
        .iter()
        .filter(|r| r.cycle_means[1] >= r.cycle_means[0])
        .count();
    let gap = er
        .iter()
        .zip(&nr)
        .map(|(e, n)| e.overall_mean - n.overall_mean)
        .sum::<f64>()
        / SEEDS.len() as f64;
    (
        vec![
            (
                "6a",
                outcome(
                    forgets >= 8,
                    format!("no_replay forgets day phases in {forgets}/10 seeds"),
                ),
            ),
            (
                "6b",
                outcome(
                    beats >= 8,
                    format!("er_emu beats no_replay in {beats}/10 seeds (mean gap {gap:.4})"),
                ),
            ),
            (
                "6c",
                outcome(
                    improves >= 7,
                    format!("second cycle ≥ first cycle in {improves}/10 seeds"),
                ),
            ),
        ],
        gap,
    )
}

fn criterion_7() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.schedule.layout = Layout::Diverse { count: 8 };
    let er = run_seeds(&with_mode(&cfg, ReplayMode::ErEmu), &SEEDS).unwrap();
    let rs = run_seeds(&with_mode(&cfg, ReplayMode::RandomSelection), &SEEDS).unwrap();
    let wins = er
        .iter()
        .zip(&rs)
        .filter(|(e, r)| e.overall_mean >= r.overall_mean)
        .count();
    outcome(
        wins >= 8,
        format!("er_emu ≥ random_selection in {wins}/10 seeds"),
    )
}

fn criterion_8(gap: f64) -> Outcome {
    let sweep = sweep_l(&RunConfig::default(), &(1..=10).collect::<Vec<_>>()).unwrap();
    let ratio = sweep.spread / gap;
    outcome(
        gap > 0.0 && ratio <= 0.25,
        format!(
            "spread {:.4} = {:.1}% of gap {gap:.4}",
            sweep.spread,
            100.0 * ratio
        ),
    )
}

fn criterion_9() -> Outcome {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut diverse = RunConfig {
        seed: 3,
        ..RunConfig::default()
    };
    diverse.schedule.layout = Layout::Diverse { count: 8 };
    for dir in &dirs {
        let base = dir.path();
        for mode in ReplayMode::ALL {
            let report = run(&with_mode(&RunConfig::default(), mode)).unwrap();
            write_metrics(&report, &base.join(mode.as_str())).unwrap();
        }
        write_ablation(&run_ablation(&diverse).unwrap(), &base.join("ablation")).unwrap();
        write_sweep(
            &sweep_l(&RunConfig::default(), &[1, 5, 10]).unwrap(),
            &base.join("sweep"),
        )
        .unwrap();
    }
    let mut compared = 0;
    let subdirs = ReplayMode::ALL
        .iter()
        .map(|m| m.as_str())
        .chain(["ablation", "sweep"]);
    for sub in subdirs {
        for file in [METRICS_FILE, TABLE_FILE] {
            let a = fs::read(dirs[0].path().join(sub).join(file)).unwrap();
            let b = fs::read(dirs[1].path().join(sub).join(file)).unwrap();
            if a != b {
                return outcome(false, format!("{sub}/{file} differs between reruns"));
            }
            compared += 1;
        }
    }
    outcome(
        true,
        format!("{compared} output files bit-identical across reruns"),
    )
}

/// Name, check, runtime limit in seconds.
type Check = (&'static str, fn() -> Outcome, u64);

fn timed<T>(limit: Duration, f: impl FnOnce() -> T) -> (T, Duration, bool) {
    let start = Instant::now();
    let value = f();
    let took = start.elapsed();
    (value, took, took <= limit)
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |name: &str, o: Outcome, took: Duration, in_time: bool, limit: Duration| {
        let ok = o.passed && in_time;
        if !ok {
            failures += 1;
        }
        let timing = if in_time {
            format!("{:.2}s", took.as_secs_f64())
        } else {
            format!(
                "{:.2}s exceeds {:.0}s limit",
                took.as_secs_f64(),
                limit.as_secs_f64()
            )
        };
        println!(
            "[{}] {name}: {} ({timing})",
            if ok { "PASS" } else { "FAIL" },
            o.detail
        );
    };

    let simple: [Check; 5] = [
        ("1 mmd oracle", criterion_1, 5),
        ("2 mk-mmd reduction", criterion_2, 1),
        ("3 selection brute force", criterion_3, 30),
        ("4 buffer safety", criterion_4, 10),
        ("5 gradient check", criterion_5, 5),
    ];
    for (name, f, secs) in simple {
        let limit = Duration::from_secs(secs);
        let (o, took, in_time) = timed(limit, f);
        report(name, o, took, in_time, limit);
    }

    let limit = Duration::from_secs(180);
    let ((parts, gap), took, in_time) = timed(limit, criterion_6);
    for (name, o) in parts {
        report(
            &format!("{name} forgetting reproduction"),
            o,
            took,
            in_time,
            limit,
        );
    }
    let (o, took, in_time) = timed(limit, criterion_7);
    report("7 diverse ablation", o, took, in_time, limit);
    let limit = Duration::from_secs(300);
    let (o, took, in_time) = timed(limit, || criterion_8(gap));
    report("8 l robustness", o, took, in_time, limit);
    let (o, took, in_time) = timed(limit, criterion_9);
    report("9 determinism", o, took, in_time, limit);

    if failures == 0 {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
