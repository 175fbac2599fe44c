//! Analytic object-depth estimators from bounding-box sequences.
//!
//! Three depth cues are available:
//!
//! * optical expansion — the change in box scale under z-axis camera motion
//!   relates two observations as `Z_i = (C_Zj - C_Zi) / (1 - w_i/w_j)`;
//! * motion parallax — the change in box position under lateral motion gives
//!   `Z_i = fx (C_Xi - C_Xj) / ((x_j - cx)(w_i/w_j) - (x_i - cx))` and the
//!   vertical analog;
//! * a stacked least-squares system over all n observations that solves
//!   jointly for the queried depth and the products `fx*W`, `fy*H`, which is
//!   what the width/height rows conserve across the sequence.
//!
//! Everything here is a pure function on immutable inputs; no intrinsics are
//! needed except for motion parallax.

mod lstsq;

use crate::error::{OdmdError, Result};
use crate::geometry::{CameraIntrinsics, Observation, ObservationSet};

/// Whether a two-observation cue measures scale change through box width or
/// box height.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleSource {
    Width,
    Height,
}

/// Lateral axis used by motion parallax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParallaxAxis {
    X,
    Y,
}

/// Depth cue selector for the endpoint-averaged two-observation solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthCue {
    Expansion,
    Parallax,
}

/// Depth below which `|1 - scale ratio|` counts as no optical expansion.
pub const EPS_EXPANSION: f64 = 1e-9;
/// Parallax denominator magnitude below which the geometry is degenerate.
pub const EPS_PARALLAX: f64 = 1e-9;
/// Smallest-to-largest singular value ratio below which the stacked system
/// is treated as rank deficient.
pub const EPS_RANK_RATIO: f64 = 1e-10;

/// A solved depth with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSolution {
    /// Estimated depth at the query observation, meters.
    pub z_hat: f64,
    /// Recovered `fx * W` (pixel-meters); stacked solver only.
    pub fx_w: Option<f64>,
    /// Recovered `fy * H` (pixel-meters); stacked solver only.
    pub fy_h: Option<f64>,
    /// Diagnostic scalar. For the stacked solver this is the condition number
    /// of the design matrix; for two-observation cues the denominator
    /// magnitude; for the endpoint average the number of degenerate variants
    /// that were dropped (0.0 or 1.0).
    pub condition: f64,
}

fn scale_ratio(obs_i: &Observation, obs_j: &Observation, source: ScaleSource) -> f64 {
    match source {
        ScaleSource::Width => obs_i.bbox.w / obs_j.bbox.w,
        ScaleSource::Height => obs_i.bbox.h / obs_j.bbox.h,
    }
}

/// Depth at `obs_i` from the change in bounding-box scale between two
/// observations with z-axis camera motion.
pub fn depth_optical_expansion(
    obs_i: &Observation,
    obs_j: &Observation,
    source: ScaleSource,
) -> Result<DepthSolution> {
    let denom = 1.0 - scale_ratio(obs_i, obs_j, source);
    if denom.abs() < EPS_EXPANSION {
        return Err(OdmdError::degenerate(
            "insufficient optical expansion",
            denom.abs(),
        ));
    }
    let z = (obs_j.position.z - obs_i.position.z) / denom;
    finite_solution(z, None, None, denom.abs())
}

/// Depth at `obs_i` from the change in bounding-box position between two
/// observations with lateral camera motion. Requires intrinsics, unlike the
/// expansion cue.
pub fn depth_motion_parallax(
    obs_i: &Observation,
    obs_j: &Observation,
    k: &CameraIntrinsics,
    axis: ParallaxAxis,
    source: ScaleSource,
) -> Result<DepthSolution> {
    let ratio = scale_ratio(obs_i, obs_j, source);
    let (numer, denom) = match axis {
        ParallaxAxis::X => (
            k.fx * (obs_i.position.x - obs_j.position.x),
            (obs_j.bbox.x - k.cx) * ratio - (obs_i.bbox.x - k.cx),
        ),
        ParallaxAxis::Y => (
            k.fy * (obs_i.position.y - obs_j.position.y),
            (obs_j.bbox.y - k.cy) * ratio - (obs_i.bbox.y - k.cy),
        ),
    };
    if denom.abs() < EPS_PARALLAX {
        return Err(OdmdError::degenerate(
            "insufficient motion parallax",
            denom.abs(),
        ));
    }
    finite_solution(numer / denom, None, None, denom.abs())
}

/// Least-squares depth at observation `query_index` using all n observations.
///
/// Stacks two rows per observation j (width then height):
///
/// ```text
/// [ w_j  1  0 ] [  Z_hat  ]   [ w_j (C_Zj - C_Zi) ]
/// [ h_j  0  1 ] [ -fx W   ] = [ h_j (C_Zj - C_Zi) ]
///               [ -fy H   ]
/// ```
///
/// and solves the 2n x 3 system by orthogonal factorization. Zero z-motion
/// makes all widths equal and the system rank 2, which is reported as
/// degenerate geometry together with the condition number.
pub fn depth_box_ls(obs: &ObservationSet, query_index: usize) -> Result<DepthSolution> {
    let n = obs.len();
    if query_index >= n {
        return Err(OdmdError::contract(format!(
            "query index {query_index} out of range for {n} observations"
        )));
    }
    let cz_i = obs.observations()[query_index].position.z;

    let rows = 2 * n;
    let mut a = Vec::with_capacity(rows * 3);
    let mut b = Vec::with_capacity(rows);
    for o in obs.observations() {
        let dz = o.position.z - cz_i;
        a.extend_from_slice(&[o.bbox.w, 1.0, 0.0]);
        b.push(o.bbox.w * dz);
        a.extend_from_slice(&[o.bbox.h, 0.0, 1.0]);
        b.push(o.bbox.h * dz);
    }

    let sigma = lstsq::singular_values(&a, rows, 3);
    let condition = if sigma[2] > 0.0 {
        sigma[0] / sigma[2]
    } else {
        f64::INFINITY
    };
    if sigma[2] < EPS_RANK_RATIO * sigma[0] {
        return Err(OdmdError::degenerate(
            "observation system is rank deficient (no depth-resolving motion)",
            condition,
        ));
    }

    let x = lstsq::solve_least_squares(&a, rows, 3, &b).ok_or_else(|| {
        OdmdError::degenerate("least-squares factorization failed", condition)
    })?;
    finite_solution(x[0], Some(-x[1]), Some(-x[2]), condition)
}

/// Two-observation solution averaged over both variants of a cue, evaluated
/// at the endpoint pair (i = last, j = first).
///
/// Expansion averages the width- and height-ratio solutions; parallax
/// averages the lateral solution with the width ratio and the vertical
/// solution with the height ratio. If one variant is degenerate the other is
/// returned alone (recorded in `condition`); if both are, the error
/// propagates.
pub fn depth_endpoint_average(
    obs: &ObservationSet,
    cue: DepthCue,
    k: Option<&CameraIntrinsics>,
) -> Result<DepthSolution> {
    let first = obs.first();
    let last = obs.last();
    let variants: [Result<DepthSolution>; 2] = match cue {
        DepthCue::Expansion => [
            depth_optical_expansion(last, first, ScaleSource::Width),
            depth_optical_expansion(last, first, ScaleSource::Height),
        ],
        DepthCue::Parallax => {
            let k = k.ok_or_else(|| {
                OdmdError::contract("motion parallax requires camera intrinsics")
            })?;
            [
                depth_motion_parallax(last, first, k, ParallaxAxis::X, ScaleSource::Width),
                depth_motion_parallax(last, first, k, ParallaxAxis::Y, ScaleSource::Height),
            ]
        }
    };

    let mut ok: Vec<f64> = Vec::with_capacity(2);
    let mut last_err = None;
    for v in variants {
        match v {
            Ok(sol) => ok.push(sol.z_hat),
            Err(e) => last_err = Some(e),
        }
    }
    match ok.len() {
        2 => finite_solution((ok[0] + ok[1]) / 2.0, None, None, 0.0),
        1 => finite_solution(ok[0], None, None, 1.0),
        _ => Err(last_err.expect("both variants failed")),
    }
}

fn finite_solution(
    z_hat: f64,
    fx_w: Option<f64>,
    fy_h: Option<f64>,
    condition: f64,
) -> Result<DepthSolution> {
    if !z_hat.is_finite() {
        return Err(OdmdError::degenerate("non-finite depth estimate", condition));
    }
    Ok(DepthSolution {
        z_hat,
        fx_w,
        fy_h,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundingBox, CameraPosition};

    fn obs(x: f64, y: f64, w: f64, h: f64, px: f64, py: f64, pz: f64) -> Observation {
        Observation {
            bbox: BoundingBox::new(x, y, w, h).unwrap(),
            position: CameraPosition::new(px, py, pz),
        }
    }

    #[test]
    fn expansion_hand_value() {
        // Camera advances 0.1 m, box width doubles 50 -> 100: Z_1 = 0.2 m.
        // Consistency: w_1 Z_1 = 50 * 0.2 = 10 = w_2 Z_2 with Z_2 = 0.1.
        let o1 = obs(0.0, 0.0, 50.0, 50.0, 0.0, 0.0, 0.0);
        let o2 = obs(0.0, 0.0, 100.0, 100.0, 0.0, 0.0, 0.1);
        let sol = depth_optical_expansion(&o1, &o2, ScaleSource::Width).unwrap();
        assert!((sol.z_hat - 0.2).abs() < 1e-15, "{sol:?}");
    }

    #[test]
    fn expansion_equal_widths_degenerate() {
        let o1 = obs(0.0, 0.0, 50.0, 50.0, 0.0, 0.0, 0.0);
        let o2 = obs(5.0, 0.0, 50.0, 60.0, 0.0, 0.0, 0.1);
        let err = depth_optical_expansion(&o1, &o2, ScaleSource::Width).unwrap_err();
        assert!(matches!(err, OdmdError::DegenerateGeometry { .. }));
    }

    #[test]
    fn parallax_hand_value() {
        // fx = 100, cx = 50, no z motion. Forward model: object at X_1 = 0.2,
        // Z = 1.0 projects to x_1 = 70; after the camera moves to C_X = 0.1
        // the object sits at X_2 = 0.1 and projects to x_2 = 60.
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 640.0, 480.0).unwrap();
        let o1 = obs(70.0, 0.0, 10.0, 10.0, 0.0, 0.0, 0.0);
        let o2 = obs(60.0, 0.0, 10.0, 10.0, 0.1, 0.0, 0.0);
        let sol =
            depth_motion_parallax(&o1, &o2, &k, ParallaxAxis::X, ScaleSource::Width).unwrap();
        assert!((sol.z_hat - 1.0).abs() < 1e-15, "{sol:?}");
    }

    #[test]
    fn parallax_no_motion_degenerate() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 640.0, 480.0).unwrap();
        let o1 = obs(70.0, 30.0, 10.0, 10.0, 0.0, 0.0, 0.0);
        let err =
            depth_motion_parallax(&o1, &o1, &k, ParallaxAxis::X, ScaleSource::Width).unwrap_err();
        assert!(matches!(err, OdmdError::DegenerateGeometry { .. }));
    }

    #[test]
    fn parallax_matches_simplified_formula_without_z_motion() {
        // With w_i == w_j the full expression reduces to
        // fx (C_Xi - C_Xj) / (x_j - x_i).
        let k = CameraIntrinsics::new(205.5, 205.5, 320.5, 240.5, 640.0, 480.0).unwrap();
        let o1 = obs(400.25, 0.0, 31.0, 17.0, 0.05, 0.0, 0.0);
        let o2 = obs(355.75, 0.0, 31.0, 17.0, 0.23, 0.0, 0.0);
        let sol =
            depth_motion_parallax(&o1, &o2, &k, ParallaxAxis::X, ScaleSource::Width).unwrap();
        let simplified = k.fx * (o1.position.x - o2.position.x) / (o2.bbox.x - o1.bbox.x);
        assert_eq!(sol.z_hat, simplified);
    }

    #[test]
    fn box_ls_hand_constructed_pair() {
        // fx = fy = 200, W = 0.1, H = 0.2, camera positions z = -0.5 and 0;
        // depth at the second position is 0.5, so the first sees the object
        // at depth 1.0: w = (20, 40), h = (40, 80).
        let o1 = obs(0.0, 0.0, 20.0, 40.0, 0.0, 0.0, -0.5);
        let o2 = obs(0.0, 0.0, 40.0, 80.0, 0.0, 0.0, 0.0);
        let set = ObservationSet::new(vec![o1, o2]).unwrap();
        let sol = depth_box_ls(&set, 1).unwrap();
        assert!((sol.z_hat - 0.5).abs() < 1e-12, "{sol:?}");
        assert!((sol.fx_w.unwrap() - 20.0).abs() < 1e-10, "{sol:?}");
        assert!((sol.fy_h.unwrap() - 40.0).abs() < 1e-10, "{sol:?}");
    }

    #[test]
    fn box_ls_query_at_other_index() {
        let o1 = obs(0.0, 0.0, 20.0, 40.0, 0.0, 0.0, -0.5);
        let o2 = obs(0.0, 0.0, 40.0, 80.0, 0.0, 0.0, 0.0);
        let set = ObservationSet::new(vec![o1, o2]).unwrap();
        let sol = depth_box_ls(&set, 0).unwrap();
        assert!((sol.z_hat - 1.0).abs() < 1e-12, "{sol:?}");
    }

    #[test]
    fn box_ls_zero_motion_is_degenerate() {
        let o = obs(12.0, 34.0, 20.0, 40.0, 0.1, 0.2, 0.3);
        let set = ObservationSet::new(vec![o; 5]).unwrap();
        let err = depth_box_ls(&set, 4).unwrap_err();
        match err {
            OdmdError::DegenerateGeometry { condition, .. } => {
                assert!(condition > 1e10, "condition {condition}");
            }
            other => panic!("expected degenerate geometry, got {other:?}"),
        }
    }

    #[test]
    fn box_ls_bad_query_index() {
        let o1 = obs(0.0, 0.0, 20.0, 40.0, 0.0, 0.0, -0.5);
        let o2 = obs(0.0, 0.0, 40.0, 80.0, 0.0, 0.0, 0.0);
        let set = ObservationSet::new(vec![o1, o2]).unwrap();
        assert!(matches!(
            depth_box_ls(&set, 2).unwrap_err(),
            OdmdError::Contract(_)
        ));
    }

    #[test]
    fn translation_invariance_is_bit_exact() {
        // Dyadic positions and translation keep the shifted positions exact,
        // so any dependence on absolute coordinates would show up bit-for-bit.
        let o1 = obs(310.0, 250.0, 25.0, 30.0, -0.0625, 0.03125, -0.3125);
        let o2 = obs(305.0, 260.0, 33.0, 39.6, 0.0625, -0.03125, -0.125);
        let o3 = obs(300.0, 270.0, 50.0, 60.0, 0.125, 0.046875, 0.0);
        let set = ObservationSet::new(vec![o1, o2, o3]).unwrap();
        let shifted = set.translated([17.25, -3.5, 101.0]);

        let a = depth_box_ls(&set, 2).unwrap();
        let b = depth_box_ls(&shifted, 2).unwrap();
        assert_eq!(a.z_hat.to_bits(), b.z_hat.to_bits());

        let a = depth_endpoint_average(&set, DepthCue::Expansion, None).unwrap();
        let b = depth_endpoint_average(&shifted, DepthCue::Expansion, None).unwrap();
        assert_eq!(a.z_hat.to_bits(), b.z_hat.to_bits());
    }

    #[test]
    fn metric_scale_equivariance() {
        // Regenerate the same scene scaled by s: object size, object center,
        // and camera positions all multiplied. Projected boxes are unchanged
        // and every solver's depth scales by s.
        use crate::geometry::{displace_object, project_box, CameraIntrinsics, Object3D};
        let k = CameraIntrinsics::new(205.5, 205.5, 320.5, 240.5, 640.0, 480.0).unwrap();
        let path = [
            CameraPosition::new(-0.11, 0.04, -0.29),
            CameraPosition::new(-0.06, 0.01, -0.13),
            CameraPosition::new(0.0, 0.0, 0.0),
        ];
        let build = |s: f64| -> ObservationSet {
            let obj = Object3D::new(0.06 * s, -0.04 * s, 0.82 * s, 0.09 * s, 0.13 * s).unwrap();
            let scaled_path: Vec<CameraPosition> = path
                .iter()
                .map(|p| CameraPosition::new(p.x * s, p.y * s, p.z * s))
                .collect();
            ObservationSet::new(
                scaled_path
                    .iter()
                    .map(|p| Observation {
                        bbox: project_box(&displace_object(&obj, &scaled_path[0], p), &k).unwrap(),
                        position: *p,
                    })
                    .collect(),
            )
            .unwrap()
        };
        let base = build(1.0);
        let z1 = depth_box_ls(&base, 2).unwrap().z_hat;
        for s in [0.1f64, 3.0, 42.0] {
            let scaled = build(s);
            let zs = depth_box_ls(&scaled, 2).unwrap().z_hat;
            assert!((zs / (s * z1) - 1.0).abs() < 1e-9, "s={s}: {zs} vs {}", s * z1);
            let e1 = depth_endpoint_average(&base, DepthCue::Expansion, None).unwrap().z_hat;
            let es = depth_endpoint_average(&scaled, DepthCue::Expansion, None).unwrap().z_hat;
            assert!((es / (s * e1) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn box_ls_with_two_observations_matches_optical_expansion() {
        let o1 = obs(300.0, 250.0, 20.0, 40.0, 0.02, -0.01, -0.5);
        let o2 = obs(310.0, 245.0, 40.0, 80.0, 0.05, 0.03, 0.0);
        let set = ObservationSet::new(vec![o1, o2]).unwrap();
        let ls = depth_box_ls(&set, 1).unwrap();
        let exp = depth_optical_expansion(&o2, &o1, ScaleSource::Width).unwrap();
        assert!(
            (ls.z_hat - exp.z_hat).abs() < 1e-9 * exp.z_hat.abs(),
            "{} vs {}",
            ls.z_hat,
            exp.z_hat
        );
    }

    #[test]
    fn endpoint_average_equals_expansion_for_symmetric_clean_pair() {
        // Pure z motion and a symmetric object make the width and height
        // variants identical.
        let o1 = obs(320.5, 240.5, 20.0, 20.0, 0.0, 0.0, -0.5);
        let o2 = obs(320.5, 240.5, 40.0, 40.0, 0.0, 0.0, 0.0);
        let set = ObservationSet::new(vec![o1, o2]).unwrap();
        let avg = depth_endpoint_average(&set, DepthCue::Expansion, None).unwrap();
        let single = depth_optical_expansion(&o2, &o1, ScaleSource::Width).unwrap();
        assert_eq!(avg.z_hat, single.z_hat);
        assert_eq!(avg.condition, 0.0);
    }

    #[test]
    fn endpoint_average_falls_back_to_surviving_variant() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 640.0, 480.0).unwrap();
        // x variant has parallax, y variant has none (equal centers, no
        // vertical motion).
        let o1 = obs(70.0, 20.0, 10.0, 10.0, 0.0, 0.0, 0.0);
        let o2 = obs(60.0, 20.0, 10.0, 10.0, 0.1, 0.0, 0.0);
        let set = ObservationSet::new(vec![o1, o2]).unwrap();
        let sol = depth_endpoint_average(&set, DepthCue::Parallax, Some(&k)).unwrap();
        assert!((sol.z_hat - 1.0).abs() < 1e-12);
        assert_eq!(sol.condition, 1.0);
    }

    #[test]
    fn endpoint_parallax_requires_intrinsics() {
        let o1 = obs(70.0, 20.0, 10.0, 10.0, 0.0, 0.0, 0.0);
        let o2 = obs(60.0, 20.0, 10.0, 10.0, 0.1, 0.0, 0.0);
        let set = ObservationSet::new(vec![o1, o2]).unwrap();
        assert!(matches!(
            depth_endpoint_average(&set, DepthCue::Parallax, None).unwrap_err(),
            OdmdError::Contract(_)
        ));
    }
}
