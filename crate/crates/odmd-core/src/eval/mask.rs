//! Segmentation-mask to bounding-box conversion.
//!
//! Real masks can fragment into disconnected components (segmentation
//! errors); the conversion keeps the fragment minimizing
//! `distance(fragment centroid, anchor) / pixel count`, which favors large
//! fragments near the anchor. The anchor defaults to the image center; the
//! box spans the fragment's pixel extent inclusively, so a single pixel at
//! `(x, y)` becomes a 1x1 box centered there.

use std::collections::HashSet;

use crate::error::{OdmdError, Result};
use crate::geometry::BoundingBox;

/// A binary segmentation mask as a set of foreground pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    pixels: Vec<(u32, u32)>,
}

impl BinaryMask {
    /// Pixels are `(x, y)` with `x < width`, `y < height`; duplicates are
    /// collapsed.
    pub fn new(width: u32, height: u32, pixels: Vec<(u32, u32)>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(OdmdError::input("mask dimensions must be positive"));
        }
        for &(x, y) in &pixels {
            if x >= width || y >= height {
                return Err(OdmdError::input(format!(
                    "pixel ({x}, {y}) outside {width}x{height} mask"
                )));
            }
        }
        let mut pixels = pixels;
        pixels.sort_unstable();
        pixels.dedup();
        Ok(BinaryMask {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }
}

/// [`mask_to_box_with_anchor`] anchored at the image center.
pub fn mask_to_box(mask: &BinaryMask) -> Result<BoundingBox> {
    mask_to_box_with_anchor(
        mask,
        [mask.width as f64 / 2.0, mask.height as f64 / 2.0],
    )
}

/// Convert a mask to the bounding box of its best-scoring 8-connected
/// component.
pub fn mask_to_box_with_anchor(mask: &BinaryMask, anchor: [f64; 2]) -> Result<BoundingBox> {
    if mask.pixels.is_empty() {
        return Err(OdmdError::input("empty mask"));
    }

    let remaining: HashSet<(u32, u32)> = mask.pixels.iter().copied().collect();
    let mut visited: HashSet<(u32, u32)> = HashSet::new();
    let mut best: Option<(f64, BoundingBox)> = None;

    // Seeds iterate in sorted pixel order, so component discovery (and
    // tie-breaking on equal scores) is deterministic.
    for &seed in &mask.pixels {
        if visited.contains(&seed) {
            continue;
        }
        let mut stack = vec![seed];
        visited.insert(seed);
        let mut count = 0usize;
        let mut sum = [0.0f64; 2];
        let (mut min_x, mut max_x, mut min_y, mut max_y) = (seed.0, seed.0, seed.1, seed.1);
        while let Some((x, y)) = stack.pop() {
            count += 1;
            sum[0] += x as f64;
            sum[1] += y as f64;
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
            for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 {
                        continue;
                    }
                    let np = (nx as u32, ny as u32);
                    if remaining.contains(&np) && visited.insert(np) {
                        stack.push(np);
                    }
                }
            }
        }
        let centroid = [sum[0] / count as f64, sum[1] / count as f64];
        let dist = ((centroid[0] - anchor[0]).powi(2) + (centroid[1] - anchor[1]).powi(2)).sqrt();
        let score = dist / count as f64;
        let bbox = BoundingBox::new(
            (min_x + max_x) as f64 / 2.0,
            (min_y + max_y) as f64 / 2.0,
            (max_x - min_x + 1) as f64,
            (max_y - min_y + 1) as f64,
        )?;
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, bbox));
        }
    }
    Ok(best.expect("mask has pixels").1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_is_a_unit_box() {
        let mask = BinaryMask::new(640, 480, vec![(10, 20)]).unwrap();
        let b = mask_to_box(&mask).unwrap();
        assert_eq!((b.x, b.y, b.w, b.h), (10.0, 20.0, 1.0, 1.0));
    }

    #[test]
    fn solid_rectangle_spans_inclusively() {
        // x in [10, 20], y in [10, 30]: box (15, 20, 11, 21).
        let mut pixels = Vec::new();
        for x in 10..=20 {
            for y in 10..=30 {
                pixels.push((x, y));
            }
        }
        let mask = BinaryMask::new(640, 480, pixels).unwrap();
        let b = mask_to_box(&mask).unwrap();
        assert_eq!((b.x, b.y, b.w, b.h), (15.0, 20.0, 11.0, 21.0));
    }

    #[test]
    fn central_blob_beats_corner_speck() {
        // 100-pixel blob at the image center vs a 5-pixel fragment in the
        // corner: center distance ~0 makes the blob's score smaller.
        let mut pixels = Vec::new();
        for x in 315..325 {
            for y in 235..245 {
                pixels.push((x, y));
            }
        }
        for x in 0..5 {
            pixels.push((x, 0));
        }
        let mask = BinaryMask::new(640, 480, pixels).unwrap();
        let b = mask_to_box(&mask).unwrap();
        assert_eq!((b.x, b.y), (319.5, 239.5));
        assert_eq!((b.w, b.h), (10.0, 10.0));
    }

    #[test]
    fn large_offset_blob_can_lose_to_small_central_one() {
        // Score is distance / count: a 4-pixel fragment at the center beats
        // a 9-pixel fragment far away only if 9 is not big enough to offset
        // the distance ratio.
        let mut pixels = vec![(320, 240), (321, 240), (320, 241), (321, 241)];
        for x in 0..3 {
            for y in 0..3 {
                pixels.push((x, y));
            }
        }
        let mask = BinaryMask::new(640, 480, pixels).unwrap();
        let b = mask_to_box(&mask).unwrap();
        assert_eq!((b.w, b.h), (2.0, 2.0));
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let mask = BinaryMask::new(64, 64, vec![(10, 10), (11, 11), (12, 12)]).unwrap();
        let b = mask_to_box(&mask).unwrap();
        assert_eq!((b.x, b.y, b.w, b.h), (11.0, 11.0, 3.0, 3.0));
    }

    #[test]
    fn empty_and_invalid_masks_are_rejected() {
        let empty = BinaryMask::new(10, 10, vec![]).unwrap();
        assert!(matches!(
            mask_to_box(&empty).unwrap_err(),
            OdmdError::Input(_)
        ));
        assert!(BinaryMask::new(10, 10, vec![(10, 0)]).is_err());
        assert!(BinaryMask::new(0, 10, vec![]).is_err());
    }

    #[test]
    fn rasterized_projected_box_inverts_within_a_pixel() {
        // Project an object, rasterize its box (pixel centers inside the
        // continuous box), and convert back: center and size within 1 px.
        use crate::geometry::{project_box, CameraIntrinsics, Object3D};
        let k = CameraIntrinsics::new(205.5, 205.5, 320.5, 240.5, 640.0, 480.0).unwrap();
        for (x, y, z) in [(0.0, 0.0, 0.8), (0.21, -0.13, 0.6), (-0.3, 0.2, 1.1)] {
            let obj = Object3D::new(x, y, z, 0.14, 0.09).unwrap();
            let b = project_box(&obj, &k).unwrap();
            let mut pixels = Vec::new();
            for px in b.left().ceil() as u32..=b.right().floor() as u32 {
                for py in b.top().ceil() as u32..=b.bottom().floor() as u32 {
                    pixels.push((px, py));
                }
            }
            let mask = BinaryMask::new(640, 480, pixels).unwrap();
            let back = mask_to_box(&mask).unwrap();
            assert!((back.x - b.x).abs() <= 1.0, "{} vs {}", back.x, b.x);
            assert!((back.y - b.y).abs() <= 1.0);
            assert!((back.w - b.w).abs() <= 1.0);
            assert!((back.h - b.h).abs() <= 1.0);
        }
    }

    #[test]
    fn custom_anchor_changes_the_winner() {
        let mut pixels = vec![(5, 5), (6, 5), (5, 6), (6, 6)];
        for x in 50..54 {
            for y in 50..54 {
                pixels.push((x, y));
            }
        }
        let mask = BinaryMask::new(64, 64, pixels).unwrap();
        let near_origin = mask_to_box_with_anchor(&mask, [5.5, 5.5]).unwrap();
        assert_eq!((near_origin.w, near_origin.h), (2.0, 2.0));
        let near_far = mask_to_box_with_anchor(&mask, [51.5, 51.5]).unwrap();
        assert_eq!((near_far.w, near_far.h), (4.0, 4.0));
    }
}
