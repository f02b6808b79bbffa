//! Grayscale rasters and the geometric primitives shared by every stage.
//!
//! Luminance lives in `[0, 1]` with `1.0` as paper white. Coordinates are
//! `(x right, y down)`, storage is row-major.

mod draw;
mod filter;
mod io;

pub use draw::{draw_line, fill_rect, stroke_rect};
pub use filter::{downsample_half, gaussian_blur};
pub use io::{decode_png, encode_png, read_image, read_pgm, write_png};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("image dimensions must be non-zero")]
    Empty,
    #[error("unsupported image: {0}")]
    Unsupported(String),
    #[error("malformed PGM: {0}")]
    MalformedPgm(String),
    #[error(transparent)]
    Codec(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major luminance raster.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    /// Builds an image from raw luminance. Values are clamped into `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty);
        }
        if data.len() != width * height {
            return Err(ImageError::BadLength {
                expected: width * height,
                got: data.len(),
            });
        }
        for v in &mut data {
            *v = if v.is_nan() { 1.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Blank sheet of paper.
    pub fn white(width: usize, height: usize) -> Self {
        Self::filled(width, height, 1.0)
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        Self::from_vec(
            width,
            height,
            bytes.iter().map(|&b| f32::from(b) / 255.0).collect(),
        )
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Applies `f` to every pixel, clamping the result.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    /// `1 - v` per pixel: dark ink becomes high-valued.
    pub fn inverted(&self) -> Self {
        self.map(|v| 1.0 - v)
    }

    /// Copies the integer-aligned window `[x0, x0+w) × [y0, y0+h)`; pixels
    /// outside the source read as white.
    pub fn crop(&self, x0: i64, y0: i64, w: usize, h: usize) -> Self {
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (sx, sy) = (x0 + x, y0 + y);
                if sx >= 0 && sy >= 0 && (sx as usize) < self.width && (sy as usize) < self.height {
                    out.push(self.get(sx as usize, sy as usize));
                } else {
                    out.push(1.0);
                }
            }
        }
        Self {
            width: w,
            height: h,
            data: out,
        }
    }

    /// Samples the sub-pixel box `b` onto a `w × h` grid (pixel centers).
    pub fn crop_box(&self, b: &BoundingBox, w: usize, h: usize) -> Self {
        let sx = b.width() / w as f64;
        let sy = b.height() / h as f64;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let fy = b.y0 + (y as f64 + 0.5) * sy - 0.5;
            for x in 0..w {
                let fx = b.x0 + (x as f64 + 0.5) * sx - 0.5;
                out.push(bilinear_sample(self, fx, fy));
            }
        }
        Self {
            width: w,
            height: h,
            data: out,
        }
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn upscale_nearest(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let (w, h) = (self.width * factor, self.height * factor);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.get(x / factor, y / factor));
            }
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }

    /// Pads every side by `pad` pixels of `value`.
    pub fn padded(&self, pad: usize, value: f32) -> Self {
        let (w, h) = (self.width + 2 * pad, self.height + 2 * pad);
        let mut out = Self::filled(w, h, value);
        for y in 0..self.height {
            let dst = (y + pad) * w + pad;
            out.data[dst..dst + self.width]
                .copy_from_slice(&self.data[y * self.width..(y + 1) * self.width]);
        }
        out
    }

    pub fn mean(&self) -> f32 {
        self.data.iter().sum::<f32>() / self.data.len() as f32
    }
}

/// Axis-aligned box `[x0, x1) × [y0, y1)` in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    /// Returns `None` unless `x0 < x1` and `y0 < y1`.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Option<Self> {
        (x0 < x1 && y0 < y1).then_some(Self { x0, y0, x1, y1 })
    }

    /// Smallest box containing all `points`.
    pub fn enclosing(points: &[(f64, f64)]) -> Option<Self> {
        let mut it = points.iter();
        let &(x, y) = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
        for &(x, y) in it {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Self::new(x0, y0, x1, y1)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x0, self.y0),
            (self.x1, self.y0),
            (self.x1, self.y1),
            (self.x0, self.y1),
        ]
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }
}

/// Intersection over union of two boxes; `0` when they are disjoint.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let ih = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Bilinear interpolation at `(x, y)` with pixel centers on the integer
/// lattice. The white page extends beyond the raster: any of the four
/// neighbours outside the image contributes `1.0`.
pub fn bilinear_sample(img: &GrayImage, x: f64, y: f64) -> f32 {
    if !(x.is_finite() && y.is_finite()) {
        return 1.0;
    }
    let (w, h) = (img.width as i64, img.height as i64);
    if x <= -1.0 || y <= -1.0 || x >= w as f64 || y >= h as f64 {
        return 1.0;
    }
    let xf = x.floor();
    let yf = y.floor();
    let (ix, iy) = (xf as i64, yf as i64);
    let (fx, fy) = ((x - xf) as f32, (y - yf) as f32);
    let px = |xx: i64, yy: i64| -> f32 {
        if xx < 0 || yy < 0 || xx >= w || yy >= h {
            1.0
        } else {
            img.data[(yy * w + xx) as usize]
        }
    };
    let top = px(ix, iy) * (1.0 - fx) + px(ix + 1, iy) * fx;
    let bottom = px(ix, iy + 1) * (1.0 - fx) + px(ix + 1, iy + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear resampling to exactly `w × h`, aligning pixel centers.
///
/// Shrinking by more than 2× first box-averages so that every source pixel
/// contributes (a plain bilinear tap would skip rows).
pub fn resize_to(img: &GrayImage, w: usize, h: usize) -> GrayImage {
    assert!(w >= 1 && h >= 1, "target dimensions must be positive");
    if w == img.width && h == img.height {
        return img.clone();
    }
    if img.width >= 2 * w && img.height >= 2 * h && img.width % 2 == 0 && img.height % 2 == 0 {
        return resize_to(&downsample_half(img), w, h);
    }
    let sx = img.width as f64 / w as f64;
    let sy = img.height as f64 / h as f64;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        for x in 0..w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            data.push(bilinear_sample(img, fx, fy));
        }
    }
    GrayImage {
        width: w,
        height: h,
        data,
    }
}
