//! Pinhole camera geometry and the domain types shared by every module.
//!
//! Conventions: all 3D quantities are meters in the camera coordinate frame
//! (x right, y down, z along the optical axis); all image quantities are
//! pixels. Image coordinates are continuous — nothing is rounded at
//! projection. Objects are modeled as fronto-parallel rectangles of constant
//! physical size, so a bounding box is fully determined by the object's
//! center, width, and height at a given depth.

use serde::{Deserialize, Serialize};

use crate::error::{OdmdError, Result};

/// Pinhole camera parameters plus the image size they apply to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    /// Focal length along x, pixels.
    pub fx: f64,
    /// Focal length along y, pixels.
    pub fy: f64,
    /// Principal point x, pixels.
    pub cx: f64,
    /// Principal point y, pixels.
    pub cy: f64,
    /// Image width, pixels.
    pub width: f64,
    /// Image height, pixels.
    pub height: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(OdmdError::config(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(OdmdError::config(format!(
                "image size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(OdmdError::config("principal point must be finite"));
        }
        Ok(())
    }
}

/// Camera position in meters. Axes are aligned with the camera coordinate
/// frame; the absolute origin is arbitrary (only differences matter).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl CameraPosition {
    pub const ORIGIN: CameraPosition = CameraPosition {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        CameraPosition { x, y, z }
    }

    /// Component-wise `self - other`.
    pub fn delta(&self, other: &CameraPosition) -> [f64; 3] {
        [self.x - other.x, self.y - other.y, self.z - other.z]
    }

    pub fn translated(&self, d: [f64; 3]) -> CameraPosition {
        CameraPosition {
            x: self.x + d[0],
            y: self.y + d[1],
            z: self.z + d[2],
        }
    }
}

/// Axis-aligned bounding box with center `(x, y)` and size `(w, h)`, pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) {
            return Err(OdmdError::domain(format!(
                "box size must be positive, got w={w} h={h}"
            )));
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn left(&self) -> f64 {
        self.x - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.x + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.y - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h / 2.0
    }
}

/// One observation: a detected bounding box plus the camera position it was
/// taken from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub bbox: BoundingBox,
    pub position: CameraPosition,
}

/// An ordered sequence of at least two observations of the same object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet(Vec<Observation>);

impl ObservationSet {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        if observations.len() < 2 {
            return Err(OdmdError::input(format!(
                "an observation set needs at least 2 observations, got {}",
                observations.len()
            )));
        }
        Ok(ObservationSet(observations))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn observations(&self) -> &[Observation] {
        &self.0
    }

    pub fn first(&self) -> &Observation {
        &self.0[0]
    }

    pub fn last(&self) -> &Observation {
        &self.0[self.0.len() - 1]
    }

    pub fn get(&self, i: usize) -> Option<&Observation> {
        self.0.get(i)
    }

    /// Overall camera movement `p_n - p_1`.
    pub fn movement(&self) -> [f64; 3] {
        self.last().position.delta(&self.first().position)
    }

    /// Euclidean norm of the overall camera movement.
    pub fn movement_range(&self) -> f64 {
        let [dx, dy, dz] = self.movement();
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Same observations with every camera position shifted by `d`.
    pub fn translated(&self, d: [f64; 3]) -> ObservationSet {
        ObservationSet(
            self.0
                .iter()
                .map(|o| Observation {
                    bbox: o.bbox,
                    position: o.position.translated(d),
                })
                .collect(),
        )
    }

    /// Same observations with every camera position scaled by `s`.
    pub fn positions_scaled(&self, s: f64) -> ObservationSet {
        ObservationSet(
            self.0
                .iter()
                .map(|o| Observation {
                    bbox: o.bbox,
                    position: CameraPosition::new(
                        o.position.x * s,
                        o.position.y * s,
                        o.position.z * s,
                    ),
                })
                .collect(),
        )
    }

    /// A temporally-ordered subsequence selected by (sorted, distinct)
    /// indices. At least two indices are required.
    pub fn subsequence(&self, indices: &[usize]) -> Result<ObservationSet> {
        let picked: Vec<Observation> = indices
            .iter()
            .map(|&i| {
                self.0
                    .get(i)
                    .copied()
                    .ok_or_else(|| OdmdError::input(format!("index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        ObservationSet::new(picked)
    }
}

/// A fronto-parallel rectangular object: camera-frame center `(x, y, z)` and
/// physical size `(width, height)`, meters. Its depth is the depth of the
/// plane it lies in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Object3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub width: f64,
    pub height: f64,
}

impl Object3D {
    pub fn new(x: f64, y: f64, z: f64, width: f64, height: f64) -> Result<Self> {
        if !(z > 0.0) {
            return Err(OdmdError::domain(format!("object depth must be positive, got {z}")));
        }
        if !(width > 0.0 && height > 0.0) {
            return Err(OdmdError::domain(format!(
                "object size must be positive, got {width}x{height}"
            )));
        }
        Ok(Object3D {
            x,
            y,
            z,
            width,
            height,
        })
    }
}

/// Project a camera-frame point to continuous image coordinates.
///
/// `x = fx * X / Z + cx`, `y = fy * Y / Z + cy`. Fails for `Z <= 0`.
pub fn project_point(point: [f64; 3], k: &CameraIntrinsics) -> Result<[f64; 2]> {
    let [px, py, pz] = point;
    if !(pz > 0.0) {
        return Err(OdmdError::domain(format!(
            "cannot project point at non-positive depth {pz}"
        )));
    }
    Ok([k.fx * px / pz + k.cx, k.fy * py / pz + k.cy])
}

/// Project an object to its bounding box: the center projects as a point and
/// the size scales inversely with depth (`w = fx * W / Z`, `h = fy * H / Z`).
pub fn project_box(obj: &Object3D, k: &CameraIntrinsics) -> Result<BoundingBox> {
    let [cx, cy] = project_point([obj.x, obj.y, obj.z], k)?;
    BoundingBox::new(cx, cy, k.fx * obj.width / obj.z, k.fy * obj.height / obj.z)
}

/// Object position in the camera frame after the camera moves from `from` to
/// `to`: the object moves equal and opposite to the camera; size is unchanged.
///
/// The result may have non-positive depth (camera moved past the object);
/// that is only rejected at projection time.
pub fn displace_object(obj: &Object3D, from: &CameraPosition, to: &CameraPosition) -> Object3D {
    let d = to.delta(from);
    Object3D {
        x: obj.x - d[0],
        y: obj.y - d[1],
        z: obj.z - d[2],
        width: obj.width,
        height: obj.height,
    }
}
