//! Named training configurations.
//!
//! The full-motion configurations train for 1e7 iterations (multi-day on
//! this hardware); the z-axis configurations train for 1e4 iterations in
//! minutes. Each preset also has a `-desk` variant (batch 128, at most 1e4
//! iterations, smaller validation set) sized for CI.

use super::TrainConfig;
use crate::generate::presets as gen;
use crate::generate::presets::seeds;
use crate::network::{LossMode, NetworkShape};

fn base(
    name: &str,
    gen_cfg: crate::generate::GenerationConfig,
    loss_mode: LossMode,
    iterations: u64,
    val_seed: u64,
) -> TrainConfig {
    TrainConfig {
        name: name.to_string(),
        shape: NetworkShape::dbox(gen_cfg.n),
        gen: gen_cfg,
        loss_mode,
        iterations,
        batch_size: 512,
        lr: 1e-3,
        adam_beta1: 0.9,
        adam_beta2: 0.999,
        adam_eps: 1e-8,
        checkpoint_every: None,
        seed: 1,
        val_seed,
        val_size: gen::VALIDATION_SIZE,
    }
}

/// Dimensionless loss, all perturbations, full motion, 1e7 iterations.
pub fn dbox_p() -> TrainConfig {
    base("dbox-p", gen::perturb_all(), LossMode::Rel, 10_000_000, seeds::PERTURB_ALL_VAL)
}

/// Dimensionless loss, clean full-motion data, 1e7 iterations.
pub fn dbox_ns() -> TrainConfig {
    base("dbox-ns", gen::normal(), LossMode::Rel, 10_000_000, seeds::NORMAL_VAL)
}

/// Absolute-depth loss, all perturbations, full motion, 1e7 iterations.
pub fn dbox_abs() -> TrainConfig {
    base("dbox-abs", gen::perturb_all(), LossMode::Abs, 10_000_000, seeds::PERTURB_ALL_VAL)
}

/// dbox-p shortened to 1e6 iterations.
pub fn dbox_p_1m() -> TrainConfig {
    TrainConfig {
        name: "dbox-p-1m".into(),
        iterations: 1_000_000,
        ..dbox_p()
    }
}

/// dbox-p shortened to 1e5 iterations.
pub fn dbox_p_100k() -> TrainConfig {
    TrainConfig {
        name: "dbox-p-100k".into(),
        iterations: 100_000,
        ..dbox_p()
    }
}

/// z-axis motion, all perturbations, dimensionless loss, 1e4 iterations.
pub fn dbox_p_z() -> TrainConfig {
    base("dbox-p-z", gen::z_axis_perturbed(), LossMode::Rel, 10_000, seeds::Z_PERTURB_VAL)
}

/// z-axis motion, clean data, dimensionless loss, 1e4 iterations.
pub fn dbox_ns_z() -> TrainConfig {
    base("dbox-ns-z", gen::z_axis_clean(), LossMode::Rel, 10_000, seeds::Z_CLEAN_VAL)
}

/// z-axis motion, all perturbations, absolute loss, 1e4 iterations.
pub fn dbox_abs_z() -> TrainConfig {
    base("dbox-abs-z", gen::z_axis_perturbed(), LossMode::Abs, 10_000, seeds::Z_PERTURB_VAL)
}

/// CI-scale variant: batch 128, at most 1e4 iterations, 600-example
/// validation set.
pub fn desk_variant(mut cfg: TrainConfig) -> TrainConfig {
    cfg.name.push_str("-desk");
    cfg.batch_size = 128;
    let z_only = cfg.gen.move_max[0] == 0.0 && cfg.gen.move_max[1] == 0.0;
    cfg.iterations = cfg.iterations.min(if z_only { 2_000 } else { 10_000 });
    cfg.val_size = 600;
    cfg
}

/// Look a training preset up by its command-line name; `-desk` suffixes map
/// through [`desk_variant`].
pub fn train_preset(name: &str) -> Option<TrainConfig> {
    if let Some(stem) = name.strip_suffix("-desk") {
        return train_preset(stem).map(desk_variant);
    }
    match name {
        "dbox-p" => Some(dbox_p()),
        "dbox-ns" => Some(dbox_ns()),
        "dbox-abs" => Some(dbox_abs()),
        "dbox-p-1m" => Some(dbox_p_1m()),
        "dbox-p-100k" => Some(dbox_p_100k()),
        "dbox-p-z" => Some(dbox_p_z()),
        "dbox-ns-z" => Some(dbox_ns_z()),
        "dbox-abs-z" => Some(dbox_abs_z()),
        _ => None,
    }
}

/// Preset names accepted by [`train_preset`], for help text.
pub const TRAIN_PRESET_NAMES: &[&str] = &[
    "dbox-p",
    "dbox-ns",
    "dbox-abs",
    "dbox-p-1m",
    "dbox-p-100k",
    "dbox-p-z",
    "dbox-ns-z",
    "dbox-abs-z",
    "dbox-p-z-desk",
    "dbox-ns-z-desk",
    "dbox-abs-z-desk",
];
