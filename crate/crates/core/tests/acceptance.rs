//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary so every line is printed; exits non-zero if any
//! criterion fails.

use std::time::Instant;

use atlas::bspline::{activation, basis_count, input_scale, support_width};
use atlas::harness::{
    run_appendix, run_grid, spearman, ExperimentConfig, LrMode, NoiseMode, SummaryRow,
};
use atlas::off_target::permutation_prob;
use atlas::optim::{train_epochs, AdamMode, TrainConfig};
use atlas::rng::Stream;
use atlas::targets::{sample_dataset, sample_rbf_target, AnalyticId, SampleBox};
use atlas::verify::{check_expansion, check_gradient_bound, check_orthogonality, check_sparsity};
use atlas::{AtlasModel, Variant};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_model(n: usize, m: usize, r: u32, variant: Variant, scale: f64, seed: u64) -> AtlasModel {
    let mut model = AtlasModel::new(n, 1, m, r, variant).unwrap();
    let mut rng = Stream::new(seed);
    model.for_each_coeff_mut(|c| *c = rng.normal_with(0.0, scale));
    model
}

fn sparsity() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (n, want) in [(1, 84), (2, 168), (8, 672)] {
        let model = random_model(n, 10, 4, Variant::DistalOrthogonal, 0.05, n as u64);
        let bound = 4 * n * (2 * 10 + 1);
        assert_eq!(bound, want);
        let report = check_sparsity(&model, 1000, &mut Stream::new(100 + n as u64)).unwrap();
        pass &= report.violations == 0 && report.bound_used == bound as f64;
        parts.push(format!(
            "n={n}: max nnz {} <= {bound}, {} violations",
            report.worst_value, report.violations
        ));
    }
    outcome(pass, parts.join("; "))
}

fn trained_model() -> AtlasModel {
    let mut rng = Stream::new(7);
    let target = sample_rbf_target(2, &mut rng).unwrap();
    let unit = SampleBox::unit(2);
    let train = sample_dataset(&target, 2000, &unit, 0.1, &mut rng).unwrap();
    let val = sample_dataset(&target, 500, &unit, 0.0, &mut rng).unwrap();
    let mut model = AtlasModel::new(2, 1, 10, 4, Variant::DistalOrthogonal).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 100,
        lr: 0.01,
        adam_mode: AdamMode::Dense,
    };
    train_epochs(&mut model, &train, &val, &cfg, &mut rng).unwrap();
    model
}

fn gradient_bound() -> Outcome {
    let zero = AtlasModel::new(2, 1, 10, 4, Variant::DistalOrthogonal).unwrap();
    let trained = trained_model();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, model) in [("zero-init", &zero), ("trained", &trained)] {
        let report = check_gradient_bound(model, 1000, &mut Stream::new(200)).unwrap();
        pass &= report.violations == 0;
        parts.push(format!(
            "{name}: max L1 {:.4} < U {:.4}, {} violations",
            report.worst_value, report.bound_used, report.violations
        ));
    }
    outcome(pass, parts.join("; "))
}

fn orthogonality() -> Outcome {
    let gap = 4.0 / 61.0;
    assert_eq!(gap, support_width(4));
    let default = random_model(2, 10, 4, Variant::DistalOrthogonal, 0.05, 31);
    let ablation = random_model(2, 10, 4, Variant::AllDensitiesTrainable, 0.05, 31);
    let d = check_orthogonality(&default, 10_000, gap, &mut Stream::new(300)).unwrap();
    let a = check_orthogonality(&ablation, 10_000, gap, &mut Stream::new(300)).unwrap();
    outcome(
        d.violations == 0 && a.violations >= 1,
        format!(
            "gap 4/61: default {} of {} nonzero, ablation {} of {} nonzero",
            d.violations, d.samples, a.violations, a.samples
        ),
    )
}

fn expansion() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for (i, variant) in [Variant::DistalOrthogonal, Variant::AllDensitiesTrainable]
        .into_iter()
        .enumerate()
    {
        for n in [1, 2, 8] {
            let model = random_model(n, 4, 3, variant, 0.2, 40 + n as u64);
            let report = check_expansion(&model, &mut Stream::new(400 + i as u64)).unwrap();
            worst = worst.max(report.worst_value);
            violations += report.violations;
        }
    }
    outcome(
        violations == 0 && worst <= 1e-12,
        format!("max |change| {worst:e} over 1000 points per model"),
    )
}

fn finite_differences() -> Outcome {
    let step = 1e-5;
    let mut rng = Stream::new(500);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for config in 0..50 {
        let n = 1 + rng.below(3);
        let m = rng.below(4);
        let r = rng.below(5) as u32;
        let variant = if config % 2 == 0 {
            Variant::DistalOrthogonal
        } else {
            Variant::AllDensitiesTrainable
        };
        let model = random_model(n, m, r, variant, 0.2, 600 + config);
        let x: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let grad = model.backward(&x, &[1.0]).unwrap();
        let mut work = model.clone();
        for &(index, analytic) in grad.entries() {
            let original = *work.trainable_param_mut(index).unwrap();
            *work.trainable_param_mut(index).unwrap() = original + step;
            let plus = work.forward(&x).unwrap()[0];
            *work.trainable_param_mut(index).unwrap() = original - step;
            let minus = work.forward(&x).unwrap()[0];
            *work.trainable_param_mut(index).unwrap() = original;
            let numeric = (plus - minus) / (2.0 * step);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(err);
            checked += 1;
        }
    }
    outcome(
        worst < 1e-5,
        format!("50 configurations, {checked} partials, max relative error {worst:e}"),
    )
}

fn partition_of_unity() -> Outcome {
    let mut worst: f64 = 0.0;
    for rho in 0..=5 {
        let w = input_scale(rho);
        for i in 0..10_000 {
            let x = i as f64 / 9_999.0;
            let total: f64 = (0..basis_count(rho))
                .map(|q| activation(w * x + 3.0 - q as f64))
                .sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |sum - 1| {worst:e}"))
}

fn off_target_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [1u32, 2, 8] {
        for i in 1..=9 {
            let delta = i as f64 / 10.0;
            let e: f64 = (0..=n)
                .map(|k| (n - k) as f64 / n as f64 * permutation_prob(n, k, delta).unwrap())
                .sum();
            worst = worst.max((e - delta).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |E[eps] - delta| {worst:e}"))
}

fn scaled_grid() -> Vec<SummaryRow> {
    let cfg = ExperimentConfig {
        dims: vec![1, 2],
        widths: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        trials: 5,
        lr_mode: LrMode::Fixed { value: 0.005 },
        noise_mode: NoiseMode::Fixed { sigma: 0.1 },
        epochs_task1: 20,
        epochs_task2: 10,
        ..ExperimentConfig::default()
    };
    run_grid(&cfg, None).unwrap().summary
}

fn cell(summary: &[SummaryRow], n: usize, variant: Variant) -> Vec<&SummaryRow> {
    summary
        .iter()
        .filter(|s| s.n == n && s.variant == variant)
        .collect()
}

fn grid_trend(summary: &[SummaryRow]) -> Outcome {
    let rows = cell(summary, 2, Variant::DistalOrthogonal);
    let deltas: Vec<f64> = rows.iter().map(|s| s.delta).collect();
    let maes: Vec<f64> = rows
        .iter()
        .map(|s| s.mean_task2_test_mae.unwrap_or(f64::NAN))
        .collect();
    let rho = spearman(&deltas, &maes).unwrap_or(f64::NAN);
    let listed: Vec<String> = deltas
        .iter()
        .zip(&maes)
        .map(|(d, m)| format!("{d}:{m:.4}"))
        .collect();
    outcome(
        rho >= 0.8,
        format!(
            "n=2 default Task-2 test MAE by delta [{}], Spearman {rho:.3} (need >= 0.8)",
            listed.join(", ")
        ),
    )
}

fn grid_degradation(summary: &[SummaryRow]) -> Outcome {
    let at = |variant| {
        cell(summary, 2, variant)
            .into_iter()
            .find(|s| s.delta == 0.1)
            .and_then(|s| s.mean_degradation)
            .unwrap_or(f64::NAN)
    };
    let (d, a) = (
        at(Variant::DistalOrthogonal),
        at(Variant::AllDensitiesTrainable),
    );
    outcome(
        d < a,
        format!("n=2 delta=0.1 mean degradation: default {d:.4}, ablation {a:.4}"),
    )
}

fn appendix_a() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.appendix.segment_epochs = 10;
    let run = run_appendix(&cfg, AnalyticId::A).unwrap();
    let first = run.segments[0].end_validation_mae;
    let last = run.segments[4].end_validation_mae;
    let jump = run
        .segments
        .iter()
        .filter_map(|s| s.boundary_jump())
        .fold(0.0, f64::max);
    outcome(
        run.segments.len() == 5 && last < first && jump <= 1e-9,
        format!("validation MAE segment 1 {first:.4} -> segment 5 {last:.4}, max boundary jump {jump:e}"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, started: Instant, o: Outcome| {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {name}: {} [{:.1}s]",
            o.detail,
            started.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    };
    let checks: [(&str, fn() -> Outcome); 7] = [
        ("sparsity bound", sparsity),
        ("gradient L1 bound", gradient_bound),
        ("distal orthogonality", orthogonality),
        ("expansion invariance", expansion),
        ("finite-difference gradient", finite_differences),
        ("partition of unity", partition_of_unity),
        ("off-target expectation", off_target_identity),
    ];
    for (name, check) in checks {
        let t = Instant::now();
        report(name, t, check());
    }
    let t = Instant::now();
    let summary = scaled_grid();
    report(
        "scaled grid (a) Task-2 MAE rises with delta",
        t,
        grid_trend(&summary),
    );
    report(
        "scaled grid (b) degradation default < ablation",
        t,
        grid_degradation(&summary),
    );
    let t = Instant::now();
    report("scaled appendix A train-expand", t, appendix_a());
    println!("{failed} of 10 criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
