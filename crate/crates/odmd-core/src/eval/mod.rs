//! Benchmark construction, evaluation metrics, and reporting.
//!
//! The benchmark metric is percent error `|Z - Ẑ| / Z * 100` at the final
//! observation. Evaluation runs any [`DepthEstimator`] over a
//! [`BenchmarkSet`]; per-example solver failures (degenerate geometry) are
//! excluded from the statistics and surfaced as a failure count. When
//! several sets are evaluated together, the aggregate score is the
//! unweighted mean of the per-set mean percent errors.

mod dataset;
mod mask;

pub use dataset::{
    read_dataset, read_generation_config, read_report, read_train_config, read_train_log,
    write_dataset, write_generation_config, write_plotdata, write_report, write_train_config,
    write_train_log, DATASET_SCHEMA_VERSION,
};
pub use mask::{mask_to_box, mask_to_box_with_anchor, BinaryMask};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OdmdError, Result};
use crate::generate::{generate_batch, presets, DepthExample, GenerationConfig};
use crate::geometry::{BoundingBox, CameraIntrinsics, CameraPosition, Observation, ObservationSet};
use crate::network::{predict_depth_batch, DBoxParams, LossMode};
use crate::rng::StreamRng;
use crate::solvers::{depth_box_ls, depth_endpoint_average, DepthCue};
use crate::train::EVAL_CHUNK;

/// Percent error of a depth prediction against a positive ground truth.
pub fn percent_error(truth: f64, prediction: f64) -> Result<f64> {
    if !(truth > 0.0) {
        return Err(OdmdError::domain(format!(
            "percent error needs positive ground truth, got {truth}"
        )));
    }
    Ok((truth - prediction).abs() / truth * 100.0)
}

/// Absolute error in meters.
pub fn absolute_error(truth: f64, prediction: f64) -> f64 {
    (truth - prediction).abs()
}

/// Complete a detection sequence by copying each missing box from the
/// nearest position with a detection; ties go to the earlier index.
pub fn fill_missing_detections(
    entries: &[(Option<BoundingBox>, CameraPosition)],
) -> Result<ObservationSet> {
    let detected: Vec<usize> = entries
        .iter()
        .enumerate()
        .filter_map(|(i, (b, _))| b.map(|_| i))
        .collect();
    if detected.is_empty() {
        return Err(OdmdError::input("no detections in any observation"));
    }
    let observations = entries
        .iter()
        .enumerate()
        .map(|(i, (bbox, position))| {
            let bbox = bbox.unwrap_or_else(|| {
                let nearest = *detected
                    .iter()
                    .min_by_key(|&&j| (i.abs_diff(j), j))
                    .expect("nonempty");
                entries[nearest].0.expect("detected index has a box")
            });
            Observation {
                bbox,
                position: *position,
            }
        })
        .collect();
    ObservationSet::new(observations)
}

/// Median prediction over random temporally-ordered subsequences.
///
/// Every subsequence keeps the final observation: the prediction target is
/// the depth at the final camera position, so dropping it would change the
/// question being asked. The first trial always uses the full set, so
/// `trials = 1` equals the direct prediction.
pub fn ensemble_predict(
    est: &dyn DepthEstimator,
    obs: &ObservationSet,
    k: &CameraIntrinsics,
    trials: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    if trials == 0 {
        return Err(OdmdError::input("ensemble needs at least one trial"));
    }
    let n = obs.len();
    let mut predictions = Vec::with_capacity(trials);
    let mut last_err = None;
    for trial in 0..trials {
        let result = if trial == 0 {
            est.estimate(obs, k)
        } else {
            // 1..n-1 earlier observations plus the mandatory final one.
            let len = 1 + rng.uniform_index(n - 1);
            let mut order: Vec<usize> = (0..n - 1).collect();
            for i in 0..len {
                let j = i + rng.uniform_index(n - 1 - i);
                order.swap(i, j);
            }
            let mut picked = order[..len].to_vec();
            picked.push(n - 1);
            picked.sort_unstable();
            let sub = obs.subsequence(&picked)?;
            est.estimate(&sub, k)
        };
        match result {
            Ok(z) => predictions.push(z),
            Err(e) => last_err = Some(e),
        }
    }
    if predictions.is_empty() {
        return Err(last_err.expect("every trial failed"));
    }
    predictions.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = predictions.len() / 2;
    Ok(if predictions.len() % 2 == 1 {
        predictions[mid]
    } else {
        0.5 * (predictions[mid - 1] + predictions[mid])
    })
}

// ---------------------------------------------------------------------------
// Estimators

/// Anything that predicts object depth at the final observation.
pub trait DepthEstimator: Sync {
    fn name(&self) -> &str;

    fn estimate(&self, obs: &ObservationSet, k: &CameraIntrinsics) -> Result<f64>;

    /// Batch evaluation; the default fans out in parallel with a
    /// deterministic output order.
    fn estimate_batch(&self, examples: &[DepthExample], k: &CameraIntrinsics) -> Vec<Result<f64>> {
        examples
            .par_iter()
            .map(|e| self.estimate(&e.obs, k))
            .collect()
    }
}

/// Stacked least-squares over all observations, queried at the final one.
pub struct BoxLsEstimator;

impl DepthEstimator for BoxLsEstimator {
    fn name(&self) -> &str {
        "box-ls"
    }

    fn estimate(&self, obs: &ObservationSet, _k: &CameraIntrinsics) -> Result<f64> {
        depth_box_ls(obs, obs.len() - 1).map(|s| s.z_hat)
    }
}

/// Endpoint-averaged two-observation cue.
pub struct EndpointEstimator {
    pub cue: DepthCue,
}

impl DepthEstimator for EndpointEstimator {
    fn name(&self) -> &str {
        match self.cue {
            DepthCue::Expansion => "expansion-2obs",
            DepthCue::Parallax => "parallax-2obs",
        }
    }

    fn estimate(&self, obs: &ObservationSet, k: &CameraIntrinsics) -> Result<f64> {
        depth_endpoint_average(obs, self.cue, Some(k)).map(|s| s.z_hat)
    }
}

/// A trained network checkpoint.
pub struct NetworkEstimator {
    pub params: DBoxParams<f32>,
    pub mode: LossMode,
    name: String,
}

impl NetworkEstimator {
    pub fn new(params: DBoxParams<f32>, mode: LossMode) -> Self {
        NetworkEstimator {
            params,
            mode,
            name: "dbox".to_string(),
        }
    }

    pub fn named(params: DBoxParams<f32>, mode: LossMode, name: impl Into<String>) -> Self {
        NetworkEstimator {
            params,
            mode,
            name: name.into(),
        }
    }
}

impl DepthEstimator for NetworkEstimator {
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, obs: &ObservationSet, k: &CameraIntrinsics) -> Result<f64> {
        crate::network::predict_depth(&self.params, obs, k, self.mode)
    }

    fn estimate_batch(&self, examples: &[DepthExample], k: &CameraIntrinsics) -> Vec<Result<f64>> {
        examples
            .par_chunks(EVAL_CHUNK)
            .map(|chunk| predict_depth_batch(&self.params, chunk, k, self.mode))
            .flatten()
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Benchmark sets

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Validation,
    Test,
}

/// The built-in simulated benchmark configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkKind {
    Normal,
    PerturbCameraMotion,
    PerturbObjectDetection,
}

/// How a regenerable set was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: GenerationConfig,
    pub seed: u64,
    pub generator_version: String,
}

/// A named collection of examples sharing one camera model.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSet {
    pub name: String,
    pub split: Option<Split>,
    pub intrinsics: CameraIntrinsics,
    pub examples: Vec<DepthExample>,
    pub provenance: Option<Provenance>,
}

impl BenchmarkSet {
    /// Regenerate a set from a config and explicit seed.
    pub fn generate(
        name: impl Into<String>,
        cfg: &GenerationConfig,
        count: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(BenchmarkSet {
            name: name.into(),
            split: None,
            intrinsics: cfg.intrinsics,
            examples: generate_batch(cfg, count, seed)?,
            provenance: Some(Provenance {
                config: cfg.clone(),
                seed,
                generator_version: env!("CARGO_PKG_VERSION").to_string(),
            }),
        })
    }

    /// One of the built-in simulated sets (validation 2,400 examples, test
    /// 3,000), regenerated from its fixed seed.
    pub fn builtin(kind: BenchmarkKind, split: Split) -> Result<Self> {
        use presets::seeds;
        let (cfg, name, val_seed, test_seed) = match kind {
            BenchmarkKind::Normal => (
                presets::normal(),
                "normal",
                seeds::NORMAL_VAL,
                seeds::NORMAL_TEST,
            ),
            BenchmarkKind::PerturbCameraMotion => (
                presets::perturb_camera_motion(),
                "perturb-camera",
                seeds::PERTURB_CAMERA_VAL,
                seeds::PERTURB_CAMERA_TEST,
            ),
            BenchmarkKind::PerturbObjectDetection => (
                presets::perturb_object_detection(),
                "perturb-detect",
                seeds::PERTURB_DETECT_VAL,
                seeds::PERTURB_DETECT_TEST,
            ),
        };
        let (count, seed, split_name) = match split {
            Split::Validation => (presets::VALIDATION_SIZE, val_seed, "val"),
            Split::Test => (presets::TEST_SIZE, test_seed, "test"),
        };
        let mut set = BenchmarkSet::generate(format!("{name}-{split_name}"), &cfg, count, seed)?;
        set.split = Some(split);
        Ok(set)
    }
}

// ---------------------------------------------------------------------------
// Reports

/// Summary statistics over per-example errors. `std` is the population
/// standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

impl ErrorStats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return ErrorStats {
                mean: 0.0,
                median: 0.0,
                min: 0.0,
                max: 0.0,
                std: 0.0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        ErrorStats {
            mean,
            median,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            std: var.sqrt(),
        }
    }
}

/// One evaluated example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub label: f64,
    pub prediction: f64,
    pub abs_error: f64,
    pub pct_error: f64,
}

/// Evaluation of one method over one set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub set_name: String,
    pub method: String,
    /// Examples that produced a prediction.
    pub examples: usize,
    /// Examples excluded because the method reported an error.
    pub failures: usize,
    pub percent: ErrorStats,
    pub absolute: ErrorStats,
    pub records: Vec<ExampleRecord>,
}

impl SetReport {
    pub fn from_records(
        set_name: impl Into<String>,
        method: impl Into<String>,
        records: Vec<ExampleRecord>,
        failures: usize,
    ) -> Self {
        let pct: Vec<f64> = records.iter().map(|r| r.pct_error).collect();
        let abs: Vec<f64> = records.iter().map(|r| r.abs_error).collect();
        SetReport {
            set_name: set_name.into(),
            method: method.into(),
            examples: records.len(),
            failures,
            percent: ErrorStats::from_values(&pct),
            absolute: ErrorStats::from_values(&abs),
            records,
        }
    }

    /// One human-readable summary row (mean/median/min/max/std of percent
    /// error).
    pub fn summary_row(&self) -> String {
        format!(
            "{:<18} {:>10} {:>8} {:>8.2} {:>8.2} {:>8.4} {:>9.2} {:>8.2}",
            self.set_name,
            self.method,
            self.examples,
            self.percent.mean,
            self.percent.median,
            self.percent.min,
            self.percent.max,
            self.percent.std
        )
    }
}

/// Evaluation over one or more sets plus the aggregate score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sets: Vec<SetReport>,
    /// Unweighted mean of per-set mean percent errors; present when more
    /// than one set was evaluated.
    pub all_sets_mean_percent: Option<f64>,
}

impl EvalReport {
    pub fn from_sets(sets: Vec<SetReport>) -> Self {
        let all = if sets.len() > 1 {
            Some(sets.iter().map(|s| s.percent.mean).sum::<f64>() / sets.len() as f64)
        } else {
            None
        };
        EvalReport {
            sets,
            all_sets_mean_percent: all,
        }
    }
}

/// Evaluate a method over a set: per-example prediction at the final
/// observation, then error statistics.
pub fn evaluate(est: &dyn DepthEstimator, set: &BenchmarkSet) -> Result<SetReport> {
    let predictions = est.estimate_batch(&set.examples, &set.intrinsics);
    let mut records = Vec::with_capacity(set.examples.len());
    let mut failures = 0usize;
    for (ex, pred) in set.examples.iter().zip(predictions) {
        match pred {
            Ok(prediction) => records.push(ExampleRecord {
                label: ex.label_z,
                prediction,
                abs_error: absolute_error(ex.label_z, prediction),
                pct_error: percent_error(ex.label_z, prediction)?,
            }),
            Err(_) => failures += 1,
        }
    }
    Ok(SetReport::from_records(
        set.name.clone(),
        est.name().to_string(),
        records,
        failures,
    ))
}

/// Evaluate over several sets and aggregate.
pub fn evaluate_many(est: &dyn DepthEstimator, sets: &[BenchmarkSet]) -> Result<EvalReport> {
    let reports = sets
        .iter()
        .map(|s| evaluate(est, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_sets(reports))
}
