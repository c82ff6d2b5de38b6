use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::FeaturePlane;
use crate::error::{Error, Result};

/// Occupancy grid over the feature plane. Pixel `(x, y)` covers
/// `[origin + (x, y) * scale, origin + (x + 1, y + 1) * scale)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    bits: Vec<bool>,
    params: GridParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct GridParams {
    scale: f64,
    origin: [f64; 2],
}

impl Eq for GridParams {}

impl BinaryImage {
    pub fn new(width: usize, height: usize, scale: f64, origin: Point2<f64>) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
            params: GridParams {
                scale,
                origin: [origin.x, origin.y],
            },
        }
    }

    pub fn scale(&self) -> f64 {
        self.params.scale
    }

    pub fn origin(&self) -> Point2<f64> {
        Point2::new(self.params.origin[0], self.params.origin[1])
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like [`get`](Self::get), false outside the grid.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Signed pixel containing `p` (may fall outside the grid).
    pub fn pixel_coords(&self, p: &Point2<f64>) -> (i64, i64) {
        let o = self.origin();
        (
            ((p.x - o.x) / self.scale()).floor() as i64,
            ((p.y - o.y) / self.scale()).floor() as i64,
        )
    }

    pub fn pixel_of(&self, p: &Point2<f64>) -> Option<(usize, usize)> {
        let (x, y) = self.pixel_coords(p);
        (x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height)
            .then_some((x as usize, y as usize))
    }

    pub fn pixel_center(&self, x: usize, y: usize) -> Point2<f64> {
        let o = self.origin();
        let s = self.scale();
        Point2::new(o.x + (x as f64 + 0.5) * s, o.y + (y as f64 + 0.5) * s)
    }

    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).filter(move |&x| self.get(x, y)).map(move |x| (x, y)))
    }

    /// Binary PGM (P5), set pixels white, row 0 first.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }
}

/// Rasterize the plane's points at `scale` mm/pixel, padding the bounding box
/// by `pad_mm` on every side.
pub fn rasterize(plane: &FeaturePlane, scale: f64, pad_mm: f64) -> Result<BinaryImage> {
    rasterize_points(&plane.points2d, scale, pad_mm)
}

pub fn rasterize_points(points: &[Point2<f64>], scale: f64, pad_mm: f64) -> Result<BinaryImage> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "raster scale must be positive, got {scale}"
        )));
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let pad_px = (pad_mm.max(0.0) / scale).ceil();
    let origin = Point2::new(lo.x - pad_px * scale, lo.y - pad_px * scale);
    let width = ((hi.x - origin.x) / scale).floor() as usize + 1 + pad_px as usize;
    let height = ((hi.y - origin.y) / scale).floor() as usize + 1 + pad_px as usize;
    let mut image = BinaryImage::new(width, height, scale, origin);
    for p in points {
        let (x, y) = image.pixel_of(p).expect("inside padded bounds");
        image.set(x, y, true);
    }
    Ok(image)
}
