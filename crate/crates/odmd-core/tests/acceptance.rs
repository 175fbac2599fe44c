//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS/FAIL line. Run with
//!
//! ```text
//! cargo test -p odmd-core --test acceptance -- --nocapture
//! ```
//!
//! The two training criteria share a lock so their wall-clock budgets are
//! measured without competing against each other. Criterion 9 records what
//! is intentionally out of desk scope (full-scale multi-day training and the
//! physical-robot / driving rows) and which criteria substitute for it.

use std::sync::Mutex;
use std::time::Instant;

use odmd_core::eval::{
    DepthEstimator,
    evaluate, BenchmarkKind, BenchmarkSet, BoxLsEstimator, EndpointEstimator, NetworkEstimator,
    Split,
};
use odmd_core::generate::{generate_batch, presets, GenerationConfig};
use odmd_core::network::{
    backward, forward_last, loss, normalize, BatchInput, DBoxParams, LossMode, NetworkShape,
    NormalizedInput, PreparedBatch, Scalar,
};
use odmd_core::rng::StreamRng;
use odmd_core::solvers::DepthCue;
use odmd_core::train::{train, train_preset};

/// Serializes the training criteria (5 and 6) so each gets the whole CPU
/// for its wall-clock budget.
static TRAINING_GATE: Mutex<()> = Mutex::new(());

fn training_slot() -> std::sync::MutexGuard<'static, ()> {
    TRAINING_GATE
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[test]
fn criterion_1_stacked_solver_exact_on_normal_test_set() {
    let start = Instant::now();
    let set = BenchmarkSet::builtin(BenchmarkKind::Normal, Split::Test).unwrap();
    assert_eq!(set.examples.len(), 3000);
    let report = evaluate(&BoxLsEstimator, &set).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(report.failures, 0, "no example may fail on clean data");
    assert!(
        report.percent.mean <= 1e-6,
        "mean percent error {} exceeds 1e-6",
        report.percent.mean
    );
    assert!(elapsed < 5.0, "took {elapsed:.2} s, budget 5 s");
    println!(
        "criterion 1 PASS: box-ls mean percent error {:.3e} on 3000 normal examples in {elapsed:.2} s",
        report.percent.mean
    );
}

#[test]
fn criterion_2_two_observation_cues_exact_on_normal_test_set() {
    let set = BenchmarkSet::builtin(BenchmarkKind::Normal, Split::Test).unwrap();
    let mut means = Vec::new();
    for cue in [DepthCue::Expansion, DepthCue::Parallax] {
        let report = evaluate(&EndpointEstimator { cue }, &set).unwrap();
        assert_eq!(report.failures, 0, "{cue:?} failed on clean data");
        assert!(
            report.percent.mean <= 1e-6,
            "{cue:?} mean percent error {} exceeds 1e-6",
            report.percent.mean
        );
        means.push(report.percent.mean);
    }
    println!(
        "criterion 2 PASS: endpoint expansion {:.3e}, motion parallax {:.3e} mean percent error",
        means[0], means[1]
    );
}

#[test]
fn criterion_3_stacked_solver_under_perturbations() {
    let cases = [
        ("perturb-camera", presets::perturb_camera_motion(), 4.5, 1.5),
        ("perturb-detect", presets::perturb_object_detection(), 21.6, 5.0),
    ];
    for (name, cfg, target, tolerance) in cases {
        let mut means = Vec::new();
        for k in 0..5u64 {
            let set = BenchmarkSet::generate(name, &cfg, 3000, cfg.seed + k).unwrap();
            let report = evaluate(&BoxLsEstimator, &set).unwrap();
            means.push(report.percent.mean);
        }
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        assert!(
            (mean - target).abs() <= tolerance,
            "{name}: mean over 5 seeds {mean:.3} outside {target} +- {tolerance} ({means:?})"
        );
        println!(
            "criterion 3 PASS: box-ls on {name} mean {mean:.3} within {target} +- {tolerance} \
             (per-seed {means:?})"
        );
    }
}

#[test]
fn criterion_4_generation_throughput_and_thread_invariance() {
    let cfg = presets::normal();

    // Throughput: best of three trials of 100k unperturbed examples.
    let mut best_rate = 0.0f64;
    for _ in 0..3 {
        let start = Instant::now();
        let batch = generate_batch(&cfg, 100_000, 12345).unwrap();
        let rate = batch.len() as f64 / start.elapsed().as_secs_f64();
        best_rate = best_rate.max(rate);
    }
    assert!(
        best_rate >= 100_000.0,
        "generation rate {best_rate:.0} examples/s below 100k/s"
    );

    // Determinism across worker counts on 10k examples.
    let reference = generate_batch(&cfg, 10_000, 777).unwrap();
    for threads in [1usize, 2, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let got = pool.install(|| generate_batch(&cfg, 10_000, 777).unwrap());
        assert_eq!(reference, got, "output differs with {threads} threads");
    }
    println!(
        "criterion 4 PASS: {best_rate:.0} examples/s; 10k examples bit-identical across 1/2/4/8 threads"
    );
}

#[test]
fn criterion_5_desk_scale_training_budget_and_accuracy() {
    let _slot = training_slot();
    let cfg = train_preset("dbox-ns-z").unwrap();
    assert_eq!(cfg.iterations, 10_000);
    assert_eq!(cfg.batch_size, 512);

    let outcome = train(&cfg).unwrap();
    assert!(
        outcome.wall_seconds <= 1800.0,
        "training took {:.0} s, budget 1800 s",
        outcome.wall_seconds
    );
    assert_eq!(outcome.log.len(), 100, "one validation row per hundredth");

    let test_set = BenchmarkSet::generate(
        "z-clean-test",
        &presets::z_axis_clean(),
        3000,
        presets::seeds::Z_CLEAN_TEST,
    )
    .unwrap();
    let est = NetworkEstimator::new(outcome.params, outcome.loss_mode);
    let report = evaluate(&est, &test_set).unwrap();
    assert_eq!(report.failures, 0);
    assert!(
        report.percent.mean <= 15.0,
        "held-out mean percent error {:.3} exceeds 15%",
        report.percent.mean
    );

    // Temporal-robustness smoke figure (reported, not asserted): repeat the
    // final observation in place of the one before it (the fixed-n analog of
    // appending a duplicate) and measure the median prediction shift.
    let mut shifts = Vec::new();
    for ex in test_set.examples.iter().take(200) {
        let mut observations = ex.obs.observations().to_vec();
        let n = observations.len();
        observations[n - 2] = observations[n - 1];
        let repeated = odmd_core::ObservationSet::new(observations).unwrap();
        let base = est.estimate(&ex.obs, &test_set.intrinsics).unwrap();
        let dup = est.estimate(&repeated, &test_set.intrinsics).unwrap();
        shifts.push(((dup - base) / base).abs() * 100.0);
    }
    shifts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_shift = shifts[shifts.len() / 2];

    println!(
        "criterion 5 PASS: dbox-ns-z trained in {:.0} s (budget 1800 s), best val {:.3}% at \
         iteration {}, held-out clean z test {:.3}% (budget 15%); duplicated-final-observation \
         median prediction shift {median_shift:.2}% (reported, not asserted)",
        outcome.wall_seconds, outcome.best_val_error, outcome.best_iteration, report.percent.mean
    );
}

#[test]
fn criterion_6_perturbation_training_lowers_error_on_perturbed_data() {
    let _slot = training_slot();
    let test_set = BenchmarkSet::generate(
        "z-perturb-detect-test",
        &presets::z_axis_detect_perturbed(),
        3000,
        presets::seeds::Z_DETECT_TEST,
    )
    .unwrap();

    let median = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    };

    let mut errors = Vec::new(); // (clean-trained, perturb-trained) per seed
    for seed in [11u64, 12, 13] {
        let mut pair = Vec::new();
        for preset in ["dbox-ns-z-desk", "dbox-p-z-desk"] {
            let mut cfg = train_preset(preset).unwrap();
            cfg.seed = seed;
            let outcome = train(&cfg).unwrap();
            let est = NetworkEstimator::new(outcome.params, outcome.loss_mode);
            let report = evaluate(&est, &test_set).unwrap();
            pair.push(report.percent.mean);
        }
        errors.push((pair[0], pair[1]));
    }
    let clean = median(errors.iter().map(|e| e.0).collect());
    let perturbed = median(errors.iter().map(|e| e.1).collect());
    assert!(
        perturbed < clean,
        "perturbation-trained median {perturbed:.3} not below clean-trained {clean:.3} ({errors:?})"
    );
    println!(
        "criterion 6 PASS: on the detection-perturbed z test set, perturbation-trained median \
         {perturbed:.3}% < clean-trained median {clean:.3}% over 3 seeds (per-seed {errors:?})"
    );
}

#[test]
fn criterion_7_gradients_match_finite_differences() {
    let start = Instant::now();
    // Ten randomized small architectures, each checked in both loss modes.
    let shapes = [
        (2usize, 3usize, 6usize, 2usize),
        (2, 4, 8, 2),
        (3, 4, 8, 2),
        (3, 3, 6, 3),
        (3, 5, 8, 2),
        (5, 4, 8, 2),
        (5, 3, 6, 2),
        (5, 4, 6, 3),
        (2, 5, 6, 3),
        (3, 4, 6, 2),
    ];
    let mut worst_overall = 0.0f64;
    for (idx, (n, hidden, fc_width, fc_layers)) in shapes.into_iter().enumerate() {
        let shape = NetworkShape {
            n,
            hidden,
            fc_width,
            fc_layers,
        };
        for mode in [LossMode::Rel, LossMode::Abs] {
            let seed = 9000 + idx as u64;
            let worst = max_gradient_error(shape, mode, seed);
            assert!(
                worst < 1e-4,
                "network {idx} ({shape:?}, {mode:?}): gradient error {worst:.3e}"
            );
            worst_overall = worst_overall.max(worst);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "gradient checks took {elapsed:.1} s, budget 60 s");
    println!(
        "criterion 7 PASS: 10 networks x 2 loss modes, worst relative gradient error \
         {worst_overall:.3e} (budget 1e-4) in {elapsed:.1} s"
    );
}

fn max_gradient_error(shape: NetworkShape, mode: LossMode, seed: u64) -> f64 {
    let mut rng = StreamRng::new(seed);
    let mut params = DBoxParams::<f64>::zeros(shape);
    for v in params.flat_mut() {
        *v = rng.uniform(-0.4, 0.4);
    }
    let gen_cfg = GenerationConfig {
        n: shape.n,
        ..presets::z_axis_clean()
    };
    let examples = generate_batch(&gen_cfg, 4, seed ^ 0x5a5a).unwrap();
    let batch = PreparedBatch::new(&examples, &gen_cfg.intrinsics, mode, shape).unwrap();
    let (loss_scale, _) = loss(&params, &batch);
    let (_, grads) = backward(&params, &batch);

    // Central differences resolve a gradient only down to the rounding noise
    // of the loss itself, eps * |L| / step; parameters whose gradient sits
    // below that resolution cannot be certified by this oracle and are
    // skipped (their analytic value agrees with the noisy probe anyway).
    let step = 1e-5;
    let floor = 1e-6 * loss_scale.abs().max(1.0);
    let mut worst = 0.0f64;
    for i in 0..params.flat().len() {
        let orig = params.flat()[i];
        params.flat_mut()[i] = orig + step;
        let (up, _) = loss(&params, &batch);
        params.flat_mut()[i] = orig - step;
        let (down, _) = loss(&params, &batch);
        params.flat_mut()[i] = orig;
        let fd = (up - down) / (2.0 * step);
        let an = grads.flat()[i];
        let scale = fd.abs().max(an.abs());
        if scale < floor {
            continue;
        }
        worst = worst.max((fd - an).abs() / scale);
    }
    worst
}

#[test]
fn criterion_8_rel_mode_scale_invariance() {
    let shape = NetworkShape::dbox(10);
    let mut rng = StreamRng::new(808);
    let mut params = DBoxParams::<f32>::zeros(shape);
    for v in params.flat_mut() {
        *v = f32::from_f64(rng.uniform(-0.2, 0.2));
    }
    let cfg = presets::normal();
    let examples = generate_batch(&cfg, 1000, 313).unwrap();

    let base: Vec<NormalizedInput> = examples
        .iter()
        .map(|e| normalize(&e.obs, &cfg.intrinsics, LossMode::Rel).unwrap())
        .collect();
    let base_input = BatchInput::from_normalized(&base, shape).unwrap();
    let base_f = forward_last(&params, &base_input);

    let mut max_depth_dev = 0.0f64;
    for s in [0.1f64, 3.0, 42.0] {
        let scaled: Vec<NormalizedInput> = examples
            .iter()
            .map(|e| {
                normalize(&e.obs.positions_scaled(s), &cfg.intrinsics, LossMode::Rel).unwrap()
            })
            .collect();
        let scaled_input = BatchInput::from_normalized(&scaled, shape).unwrap();
        let scaled_f = forward_last(&params, &scaled_input);
        for (i, (a, b)) in base_f.iter().zip(&scaled_f).enumerate() {
            assert_eq!(
                a.to_bits(),
                b.to_bits(),
                "example {i}, s={s}: f_n changed ({a:e} vs {b:e})"
            );
        }
        for ((ni_a, ni_b), (fa, fb)) in base.iter().zip(&scaled).zip(base_f.iter().zip(&scaled_f))
        {
            let z = fa.as_f64() * ni_a.scale;
            let z_scaled = fb.as_f64() * ni_b.scale;
            if z != 0.0 {
                max_depth_dev = max_depth_dev.max((z_scaled / (s * z) - 1.0).abs());
            }
        }
    }
    assert!(
        max_depth_dev <= 1e-14,
        "depth scaling deviates by {max_depth_dev:e} in relative terms"
    );
    println!(
        "criterion 8 PASS: f_n bit-identical for s in {{0.1, 3, 42}} over 1000 examples; \
         predicted depth scales by s to within {max_depth_dev:.2e} relative"
    );
}

#[test]
fn criterion_9_out_of_scope_substitutions_documented() {
    // Full-scale training (1e7 iterations, multi-day) and the physical-robot
    // / driving / camera-phone rows require hardware and data this repo does
    // not ship. Criteria 5-8 plus the per-module invariant suites stand in
    // for them at desk scale; the full-scale presets (dbox-p, dbox-ns,
    // dbox-abs, dbox-p-1m, dbox-p-100k) remain available through the CLI for
    // anyone with the budget.
    let full = train_preset("dbox-p").unwrap();
    assert_eq!(full.iterations, 10_000_000);
    assert!(full.is_full_scale());
    println!(
        "criterion 9 PASS: full-scale runs excluded by design; desk substitutes are criteria 5-8"
    );
}
