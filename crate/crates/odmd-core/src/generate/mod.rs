//! Synthetic training-example and benchmark-set generation.
//!
//! An example is built in a fixed draw order from one random stream so that
//! `(config, base_seed, index)` pins every byte of the output:
//!
//! 1. overall camera movement: per-axis magnitude `U[move_min, move_max]`,
//!    then a Rademacher sign per axis; the final position is anchored at the
//!    origin and the first at minus the movement;
//! 2. intermediate camera positions: per axis, n-2 uniforms between the
//!    endpoints, sorted so the motion is monotonic along each axis;
//! 3. object: width and height `U[size_min, size_max]`, initial depth
//!    `U[effective_z1_min, z1_max]`, then the initial center drawn inside
//!    the depth-dependent view-constraint bounds;
//! 4. optional order reversal (probability `reverse_prob`), which re-anchors
//!    positions so the new final position is the origin and relabels the
//!    example with the depth at the new final observation;
//! 5. perturbations, applied after the ground-truth label is fixed: Gaussian
//!    camera noise on every position but the first, Gaussian box noise in
//!    normalized coordinates, and a random whole-box replacement.
//!
//! The view-constraint bounds guarantee that every unperturbed bounding box
//! stays inside the image at all n camera positions for any movement the
//! config can produce.

pub mod presets;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OdmdError, Result};
use crate::geometry::{
    displace_object, project_box, CameraIntrinsics, CameraPosition, Object3D, Observation,
    ObservationSet,
};
use crate::rng::StreamRng;

/// Smallest normalized box width/height left after perturbation, so that
/// solver scale ratios stay defined.
pub const MIN_NORMALIZED_SIZE: f64 = 1e-4;

/// Distribution of the wrong-object replacement box, in normalized image
/// coordinates. The defaults put a detection of arbitrary size anywhere in
/// frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplacementBoxConfig {
    pub center_min: f64,
    pub center_max: f64,
    pub size_min: f64,
    pub size_max: f64,
}

impl Default for ReplacementBoxConfig {
    fn default() -> Self {
        ReplacementBoxConfig {
            center_min: 0.1,
            center_max: 0.9,
            size_min: 0.02,
            size_max: 0.5,
        }
    }
}

/// Perturbation magnitudes. Camera noise is meters on raw positions; box
/// noise is dimensionless on normalized boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub sigma_cam: f64,
    pub sigma_box: f64,
    pub replace_prob: f64,
    #[serde(default)]
    pub replacement: ReplacementBoxConfig,
}

impl PerturbConfig {
    pub const NONE: PerturbConfig = PerturbConfig {
        sigma_cam: 0.0,
        sigma_box: 0.0,
        replace_prob: 0.0,
        replacement: ReplacementBoxConfig {
            center_min: 0.1,
            center_max: 0.9,
            size_min: 0.02,
            size_max: 0.5,
        },
    };

    pub fn is_none(&self) -> bool {
        self.sigma_cam == 0.0 && self.sigma_box == 0.0 && self.replace_prob == 0.0
    }

    fn validate(&self) -> Result<()> {
        if self.sigma_cam < 0.0 || self.sigma_box < 0.0 {
            return Err(OdmdError::config("perturbation sigmas must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.replace_prob) {
            return Err(OdmdError::config("replace_prob must be in [0, 1]"));
        }
        let r = &self.replacement;
        if !(r.center_min <= r.center_max && r.size_min > 0.0 && r.size_min <= r.size_max) {
            return Err(OdmdError::config("invalid replacement box distribution"));
        }
        Ok(())
    }
}

/// Everything that defines a data distribution: observation count, object
/// size and depth bounds, movement bounds per axis, camera model,
/// perturbations, and the default stream seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    /// Observations per example (n >= 2).
    pub n: usize,
    /// Object physical size bounds, meters.
    pub size_min: f64,
    pub size_max: f64,
    /// Per-axis overall-movement bounds, meters (componentwise 0 <= min <= max).
    pub move_min: [f64; 3],
    pub move_max: [f64; 3],
    /// Initial object depth bounds, meters.
    pub z1_min: f64,
    pub z1_max: f64,
    pub intrinsics: CameraIntrinsics,
    /// Probability of reversing the observation order.
    pub reverse_prob: f64,
    pub perturb: PerturbConfig,
    /// Default stream seed for dataset construction.
    pub seed: u64,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(OdmdError::config(format!("n must be >= 2, got {}", self.n)));
        }
        if !(self.size_min > 0.0 && self.size_min <= self.size_max) {
            return Err(OdmdError::config(format!(
                "object size bounds invalid: [{}, {}]",
                self.size_min, self.size_max
            )));
        }
        for a in 0..3 {
            if !(0.0 <= self.move_min[a] && self.move_min[a] <= self.move_max[a]) {
                return Err(OdmdError::config(format!(
                    "movement bounds invalid on axis {a}: [{}, {}]",
                    self.move_min[a], self.move_max[a]
                )));
            }
        }
        if !(self.z1_min > 0.0 && self.z1_min <= self.z1_max) {
            return Err(OdmdError::config(format!(
                "depth bounds invalid: [{}, {}]",
                self.z1_min, self.z1_max
            )));
        }
        if !(0.0..=1.0).contains(&self.reverse_prob) {
            return Err(OdmdError::config("reverse_prob must be in [0, 1]"));
        }
        self.intrinsics.validate()?;
        self.perturb.validate()?;

        if self.effective_z1_min() > self.z1_max {
            return Err(OdmdError::config(format!(
                "initial-depth range [{}, {}] is entirely below the minimum \
                 viewable depth {:.6}: the object cannot stay in frame for \
                 the configured movement and size",
                self.z1_min,
                self.z1_max,
                self.effective_z1_min()
            )));
        }
        Ok(())
    }

    /// Smallest initial depth at which the center-position bounds are
    /// non-empty, i.e. at which an object of the largest configured size can
    /// stay in view across the largest configured movement. Initial depths
    /// are sampled from `[effective_z1_min, z1_max]`; `z1_min` below this
    /// threshold is raised to it.
    pub fn effective_z1_min(&self) -> f64 {
        let k = &self.intrinsics;
        let z_feas_x = self.move_max[2] + (k.fx / k.width) * (2.0 * self.move_max[0] + self.size_max);
        let z_feas_y =
            self.move_max[2] + (k.fy / k.height) * (2.0 * self.move_max[1] + self.size_max);
        self.z1_min.max(z_feas_x).max(z_feas_y)
    }

    /// View-constraint bounds on the object's initial center at depth `z1`:
    /// `((x_min, x_max), (y_min, y_max))`. Uses the config-level maximum
    /// movement and object size, so any draw inside the bounds is in view
    /// for every path and object the config can produce.
    pub fn center_bounds(&self, z1: f64) -> ((f64, f64), (f64, f64)) {
        let k = &self.intrinsics;
        let dz = self.move_max[2];
        let half = self.size_max / 2.0;
        let x_min = (k.cx / k.fx) * (dz - z1) + self.move_max[0] + half;
        let x_max = ((k.width - k.cx) / k.fx) * (z1 - dz) - self.move_max[0] - half;
        let y_min = (k.cy / k.fy) * (dz - z1) + self.move_max[1] + half;
        let y_max = ((k.height - k.cy) / k.fy) * (z1 - dz) - self.move_max[1] - half;
        ((x_min, x_max), (y_min, y_max))
    }
}

/// Generation metadata kept for debugging and distribution checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleMeta {
    /// Physical object size, meters.
    pub object_width: f64,
    pub object_height: f64,
    /// Object center at the first camera position, before any reversal.
    pub initial_center: [f64; 3],
    pub reversed: bool,
    /// Example index within the generating batch (0 for standalone examples).
    pub stream: u64,
}

/// One labeled example: observations plus the ground-truth depth at the
/// final observation. The label refers to the unperturbed geometry even when
/// the observations carry perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthExample {
    pub obs: ObservationSet,
    pub label_z: f64,
    pub meta: Option<ExampleMeta>,
}

/// Random camera path: draws the overall movement, anchors the final
/// position at the origin, and fills monotonic intermediates.
pub fn sample_camera_path(cfg: &GenerationConfig, rng: &mut StreamRng) -> Vec<CameraPosition> {
    let mut movement = [0.0f64; 3];
    for (m, (lo, hi)) in movement.iter_mut().zip(cfg.move_min.iter().zip(&cfg.move_max)) {
        *m = rng.uniform(*lo, *hi);
    }
    for m in movement.iter_mut() {
        *m *= rng.sign();
    }
    path_with_movement(cfg.n, movement, rng)
}

/// Path construction for a fixed signed movement `p_n - p_1`.
pub(crate) fn path_with_movement(
    n: usize,
    movement: [f64; 3],
    rng: &mut StreamRng,
) -> Vec<CameraPosition> {
    let p1 = [-movement[0], -movement[1], -movement[2]];

    // Axis-major: draw and sort each axis independently, descending when the
    // movement along that axis is negative (all-equal values make the
    // ascending sort a no-op, which also covers a zero movement component).
    let mut axes: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for a in 0..3 {
        let lo = p1[a].min(0.0);
        let hi = p1[a].max(0.0);
        let mut vals: Vec<f64> = (0..n.saturating_sub(2)).map(|_| rng.uniform(lo, hi)).collect();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        if movement[a] < 0.0 {
            vals.reverse();
        }
        axes[a] = vals;
    }

    let mut path = Vec::with_capacity(n);
    path.push(CameraPosition::new(p1[0], p1[1], p1[2]));
    let (xs, rest) = (&axes[0], (&axes[1], &axes[2]));
    for ((x, y), z) in xs.iter().zip(rest.0).zip(rest.1) {
        path.push(CameraPosition::new(*x, *y, *z));
    }
    path.push(CameraPosition::ORIGIN);
    path
}

/// Random object placed at the first camera position. The center bounds use
/// the config-level maximum movement and size, so the object is in view at
/// all n positions of any path drawn from the same config.
pub fn sample_object(cfg: &GenerationConfig, rng: &mut StreamRng) -> Object3D {
    let width = rng.uniform(cfg.size_min, cfg.size_max);
    let height = rng.uniform(cfg.size_min, cfg.size_max);
    let z1 = rng.uniform(cfg.effective_z1_min(), cfg.z1_max);
    let ((x_lo, x_hi), (y_lo, y_hi)) = cfg.center_bounds(z1);
    // Rounding at the feasibility boundary can invert a range by ~1e-18 m;
    // collapse it to the midpoint.
    let (x_lo, x_hi) = ordered(x_lo, x_hi);
    let (y_lo, y_hi) = ordered(y_lo, y_hi);
    let x1 = rng.uniform(x_lo, x_hi);
    let y1 = rng.uniform(y_lo, y_hi);
    Object3D {
        x: x1,
        y: y1,
        z: z1,
        width,
        height,
    }
}

fn ordered(lo: f64, hi: f64) -> (f64, f64) {
    if lo <= hi {
        (lo, hi)
    } else {
        let mid = 0.5 * (lo + hi);
        (mid, mid)
    }
}

/// Add i.i.d. Gaussian noise to every camera position except the first.
pub fn perturb_camera(path: &mut [CameraPosition], sigma_cam: f64, rng: &mut StreamRng) {
    if sigma_cam == 0.0 {
        return;
    }
    for p in path.iter_mut().skip(1) {
        p.x += sigma_cam * rng.next_gaussian();
        p.y += sigma_cam * rng.next_gaussian();
        p.z += sigma_cam * rng.next_gaussian();
    }
}

/// Perturb a normalized box sequence: Gaussian noise on all four coordinates
/// of every box, then (with probability `replace_prob`) one whole-box
/// replacement, then the minimum-size floor on width and height.
///
/// Boxes are `[x, y, w, h]` in normalized image coordinates.
pub fn perturb_boxes(
    boxes: &mut [[f64; 4]],
    sigma_box: f64,
    replace_prob: f64,
    replacement: &ReplacementBoxConfig,
    rng: &mut StreamRng,
) {
    if sigma_box > 0.0 {
        for b in boxes.iter_mut() {
            for v in b.iter_mut() {
                *v += sigma_box * rng.next_gaussian();
            }
        }
    }
    if replace_prob > 0.0 && rng.chance(replace_prob) {
        let idx = rng.uniform_index(boxes.len());
        boxes[idx] = [
            rng.uniform(replacement.center_min, replacement.center_max),
            rng.uniform(replacement.center_min, replacement.center_max),
            rng.uniform(replacement.size_min, replacement.size_max),
            rng.uniform(replacement.size_min, replacement.size_max),
        ];
    }
    for b in boxes.iter_mut() {
        b[2] = b[2].max(MIN_NORMALIZED_SIZE);
        b[3] = b[3].max(MIN_NORMALIZED_SIZE);
    }
}

/// Generate one example from an explicit stream.
pub fn generate_example(cfg: &GenerationConfig, rng: &mut StreamRng) -> Result<DepthExample> {
    cfg.validate()?;
    Ok(generate_example_unchecked(cfg, rng, 0))
}

fn generate_example_unchecked(
    cfg: &GenerationConfig,
    rng: &mut StreamRng,
    stream: u64,
) -> DepthExample {
    let mut path = sample_camera_path(cfg, rng);
    let object = sample_object(cfg, rng);

    let mut boxes: Vec<_> = path
        .iter()
        .map(|p| {
            let at = displace_object(&object, &path[0], p);
            project_box(&at, &cfg.intrinsics)
                .expect("view constraints keep generated objects at positive depth")
        })
        .collect();

    // Depth of the (static) object plane at the final camera position.
    let mut label_z = object.z - (path[cfg.n - 1].z - path[0].z);
    let mut reversed = false;
    if cfg.reverse_prob > 0.0 && rng.chance(cfg.reverse_prob) {
        reversed = true;
        boxes.reverse();
        path.reverse();
        let anchor = path[cfg.n - 1];
        for p in path.iter_mut() {
            *p = CameraPosition::new(p.x - anchor.x, p.y - anchor.y, p.z - anchor.z);
        }
        // The new final observation is the old first one.
        label_z = object.z;
    }

    perturb_camera(&mut path, cfg.perturb.sigma_cam, rng);

    if cfg.perturb.sigma_box > 0.0 || cfg.perturb.replace_prob > 0.0 {
        let (w_img, h_img) = (cfg.intrinsics.width, cfg.intrinsics.height);
        let mut normalized: Vec<[f64; 4]> = boxes
            .iter()
            .map(|b| [b.x / w_img, b.y / h_img, b.w / w_img, b.h / h_img])
            .collect();
        perturb_boxes(
            &mut normalized,
            cfg.perturb.sigma_box,
            cfg.perturb.replace_prob,
            &cfg.perturb.replacement,
            rng,
        );
        for (b, nb) in boxes.iter_mut().zip(&normalized) {
            *b = crate::geometry::BoundingBox {
                x: nb[0] * w_img,
                y: nb[1] * h_img,
                w: nb[2] * w_img,
                h: nb[3] * h_img,
            };
        }
    }

    let observations: Vec<Observation> = boxes
        .into_iter()
        .zip(path)
        .map(|(bbox, position)| Observation { bbox, position })
        .collect();

    DepthExample {
        obs: ObservationSet::new(observations).expect("n >= 2 validated"),
        label_z,
        meta: Some(ExampleMeta {
            object_width: object.width,
            object_height: object.height,
            initial_center: [object.x, object.y, object.z],
            reversed,
            stream,
        }),
    }
}

/// Generate `count` examples deterministically. Example `k` uses stream
/// `(base_seed, k)`, so the output is a pure function of the arguments —
/// independent of thread count and scheduling.
pub fn generate_batch(
    cfg: &GenerationConfig,
    count: usize,
    base_seed: u64,
) -> Result<Vec<DepthExample>> {
    if count == 0 {
        return Err(OdmdError::config("count must be >= 1"));
    }
    cfg.validate()?;
    Ok((0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = StreamRng::for_stream(base_seed, k as u64);
            generate_example_unchecked(cfg, &mut rng, k as u64)
        })
        .collect())
}
