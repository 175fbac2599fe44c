use odmd_core::eval::{evaluate, BenchmarkSet, NetworkEstimator};
use odmd_core::generate::{generate_batch, presets};
use odmd_core::network::{backward, DBoxParams, PreparedBatch};
use odmd_core::rng::derive_seed;
use odmd_core::train::{adam_step, train_preset, AdamState, TRAIN_CHUNK};
use rayon::prelude::*;

#[test]
fn probe_crossover_full_batch() {
    let test_set = BenchmarkSet::generate(
        "zpd", &presets::z_axis_detect_perturbed(), 1000, presets::seeds::Z_DETECT_TEST,
    ).unwrap();

    for preset in ["dbox-ns-z", "dbox-p-z"] {
        let cfg = {
            let mut c = train_preset(preset).unwrap();
            c.seed = 11;
            c
        };
        let mut params = DBoxParams::<f32>::init(cfg.shape, derive_seed(cfg.seed, 0x5eed_0001));
        let mut adam = AdamState::new(&params);
        let adam_cfg = cfg.adam();
        let data_seed = derive_seed(cfg.seed, 0x5eed_0002);
        for it in 1..=10_000u64 {
            let examples = generate_batch(&cfg.gen, cfg.batch_size, derive_seed(data_seed, it)).unwrap();
            let parts: Vec<(f64, DBoxParams<f32>, usize)> = examples
                .par_chunks(TRAIN_CHUNK)
                .map(|chunk| {
                    let p = PreparedBatch::new(chunk, &cfg.gen.intrinsics, cfg.loss_mode, cfg.shape).unwrap();
                    let n = p.targets.len();
                    let (l, g) = backward(&params, &p);
                    (l, g, n)
                })
                .collect();
            let total: usize = parts.iter().map(|(_, _, c)| c).sum();
            let mut grads = DBoxParams::<f32>::zeros(cfg.shape);
            for (_, g, c) in &parts {
                grads.add_scaled(g, (*c as f64 / total as f64) as f32).unwrap();
            }
            adam_step(&mut params, &grads, &mut adam, &adam_cfg).unwrap();
            if it % 1000 == 0 {
                let est = NetworkEstimator::new(params.clone(), cfg.loss_mode);
                let r = evaluate(&est, &test_set).unwrap();
                println!("{preset} b512 it {it}: perturbed-test mean {:.2}%", r.percent.mean);
            }
        }
    }
}
