//! Built-in data distributions for the benchmark sets and training runs.
//!
//! The full-motion configurations model a 640x480 robot grasp camera; the
//! z-axis configurations restrict movement to the optical axis with a more
//! generic focal length. Benchmark sets are regenerated from the fixed seeds
//! below rather than shipped as data.

use super::{GenerationConfig, PerturbConfig};
use crate::geometry::CameraIntrinsics;

/// Validation sets hold 2,400 examples.
pub const VALIDATION_SIZE: usize = 2400;
/// Test sets hold 3,000 examples.
pub const TEST_SIZE: usize = 3000;

/// Camera-position noise used by the perturbed configurations, meters.
pub const SIGMA_CAMERA: f64 = 1e-2;
/// Normalized-box noise used by the perturbed configurations.
pub const SIGMA_BOX: f64 = 1e-3;
/// Probability of one wrong-box replacement per example.
pub const REPLACE_PROB: f64 = 0.1;

/// Fixed stream seeds for regenerating the built-in benchmark sets.
pub mod seeds {
    pub const NORMAL_VAL: u64 = 1101;
    pub const NORMAL_TEST: u64 = 1102;
    pub const PERTURB_CAMERA_VAL: u64 = 2101;
    pub const PERTURB_CAMERA_TEST: u64 = 2102;
    pub const PERTURB_DETECT_VAL: u64 = 3101;
    pub const PERTURB_DETECT_TEST: u64 = 3102;
    pub const Z_CLEAN_VAL: u64 = 4101;
    pub const Z_CLEAN_TEST: u64 = 4102;
    pub const Z_PERTURB_VAL: u64 = 5101;
    pub const Z_PERTURB_TEST: u64 = 5102;
    pub const Z_DETECT_VAL: u64 = 6101;
    pub const Z_DETECT_TEST: u64 = 6102;
    pub const PERTURB_ALL_VAL: u64 = 7101;
    pub const PERTURB_ALL_TEST: u64 = 7102;
}

/// Grasp-camera intrinsics for the full-motion configurations.
pub fn grasp_camera() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 205.5,
        fy: 205.5,
        cx: 320.5,
        cy: 240.5,
        width: 640.0,
        height: 480.0,
    }
}

/// Generic intrinsics for the z-axis-only configurations.
pub fn z_axis_camera() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 240.5,
        fy: 240.5,
        cx: 320.5,
        cy: 240.5,
        width: 640.0,
        height: 480.0,
    }
}

/// Error-free full-motion distribution (the Normal set).
pub fn normal() -> GenerationConfig {
    GenerationConfig {
        n: 10,
        size_min: 0.01,
        size_max: 0.175,
        move_min: [0.0, 0.0, 0.05],
        move_max: [0.25, 0.175, 0.325],
        z1_min: 0.55,
        z1_max: 1.0,
        intrinsics: grasp_camera(),
        reverse_prob: 0.5,
        perturb: PerturbConfig::NONE,
        seed: seeds::NORMAL_TEST,
    }
}

/// Normal distribution plus camera-position noise.
pub fn perturb_camera_motion() -> GenerationConfig {
    GenerationConfig {
        perturb: PerturbConfig {
            sigma_cam: SIGMA_CAMERA,
            ..PerturbConfig::NONE
        },
        seed: seeds::PERTURB_CAMERA_TEST,
        ..normal()
    }
}

/// Normal distribution plus box noise and random box replacement.
pub fn perturb_object_detection() -> GenerationConfig {
    GenerationConfig {
        perturb: PerturbConfig {
            sigma_box: SIGMA_BOX,
            replace_prob: REPLACE_PROB,
            ..PerturbConfig::NONE
        },
        seed: seeds::PERTURB_DETECT_TEST,
        ..normal()
    }
}

/// All three perturbations together (the full training distribution).
pub fn perturb_all() -> GenerationConfig {
    GenerationConfig {
        perturb: PerturbConfig {
            sigma_cam: SIGMA_CAMERA,
            sigma_box: SIGMA_BOX,
            replace_prob: REPLACE_PROB,
            ..PerturbConfig::NONE
        },
        seed: seeds::PERTURB_DETECT_TEST,
        ..normal()
    }
}

/// Error-free z-axis-only distribution.
pub fn z_axis_clean() -> GenerationConfig {
    GenerationConfig {
        move_min: [0.0, 0.0, 0.05],
        move_max: [0.0, 0.0, 0.4625],
        intrinsics: z_axis_camera(),
        seed: seeds::Z_CLEAN_TEST,
        ..normal()
    }
}

/// z-axis distribution with all three perturbations.
pub fn z_axis_perturbed() -> GenerationConfig {
    GenerationConfig {
        perturb: PerturbConfig {
            sigma_cam: SIGMA_CAMERA,
            sigma_box: SIGMA_BOX,
            replace_prob: REPLACE_PROB,
            ..PerturbConfig::NONE
        },
        seed: seeds::Z_PERTURB_TEST,
        ..z_axis_clean()
    }
}

/// z-axis distribution with detection errors only (box noise + replacement).
pub fn z_axis_detect_perturbed() -> GenerationConfig {
    GenerationConfig {
        perturb: PerturbConfig {
            sigma_box: SIGMA_BOX,
            replace_prob: REPLACE_PROB,
            ..PerturbConfig::NONE
        },
        seed: seeds::Z_DETECT_TEST,
        ..z_axis_clean()
    }
}

/// Look a preset up by its command-line name.
pub fn by_name(name: &str) -> Option<GenerationConfig> {
    match name {
        "normal" => Some(normal()),
        "perturb-camera" => Some(perturb_camera_motion()),
        "perturb-detect" => Some(perturb_object_detection()),
        "perturb-all" => Some(perturb_all()),
        "z-normal" => Some(z_axis_clean()),
        "z-perturb" => Some(z_axis_perturbed()),
        "z-perturb-detect" => Some(z_axis_detect_perturbed()),
        _ => None,
    }
}

/// Names accepted by [`by_name`], for help text.
pub const PRESET_NAMES: &[&str] = &[
    "normal",
    "perturb-camera",
    "perturb-detect",
    "perturb-all",
    "z-normal",
    "z-perturb",
    "z-perturb-detect",
];
