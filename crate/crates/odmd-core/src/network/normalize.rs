//! Input normalization for the depth regressor.
//!
//! Boxes are divided by the image size in both modes. Positions depend on
//! the mode:
//!
//! * `Rel` — incremental moves `(p_i - p_{i-1})` divided by the overall
//!   Euclidean movement range `||p_n - p_1||`, with the first row zero. The
//!   result is dimensionless, so the encoded input is invariant to uniform
//!   scaling of all positions; the range is returned as `scale` to undo the
//!   normalization at prediction time.
//! * `Abs` — positions relative to the final one, kept in meters
//!   (`scale = 1`).

use super::LossMode;
use crate::error::{OdmdError, Result};
use crate::geometry::{CameraIntrinsics, ObservationSet};

/// Movement range (meters) at or below which `Rel` normalization is refused.
pub const EPS_MOVEMENT_RANGE: f64 = 1e-6;

/// A normalized observation set: `n` rows of 7 features, observation-major,
/// plus the scale factor that maps dimensionless predictions back to meters.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedInput {
    pub n: usize,
    /// `7 n` values: `[x̄, ȳ, w̄, h̄, p̄x, p̄y, p̄z]` per observation.
    pub data: Vec<f64>,
    pub scale: f64,
}

pub fn normalize(
    obs: &ObservationSet,
    k: &CameraIntrinsics,
    mode: LossMode,
) -> Result<NormalizedInput> {
    let n = obs.len();
    let mut data = Vec::with_capacity(7 * n);
    let scale = match mode {
        LossMode::Rel => {
            let range = obs.movement_range();
            if range <= EPS_MOVEMENT_RANGE {
                return Err(OdmdError::degenerate(
                    "camera movement range too small for dimensionless normalization",
                    range,
                ));
            }
            range
        }
        LossMode::Abs => 1.0,
    };

    let observations = obs.observations();
    for (i, o) in observations.iter().enumerate() {
        data.push(o.bbox.x / k.width);
        data.push(o.bbox.y / k.height);
        data.push(o.bbox.w / k.width);
        data.push(o.bbox.h / k.height);
        match mode {
            LossMode::Rel => {
                if i == 0 {
                    data.extend_from_slice(&[0.0, 0.0, 0.0]);
                } else {
                    let d = o.position.delta(&observations[i - 1].position);
                    data.push(d[0] / scale);
                    data.push(d[1] / scale);
                    data.push(d[2] / scale);
                }
            }
            LossMode::Abs => {
                let d = o.position.delta(&observations[n - 1].position);
                data.extend_from_slice(&d);
            }
        }
    }

    Ok(NormalizedInput { n, data, scale })
}
