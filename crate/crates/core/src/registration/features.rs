use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RegistrationError;
use crate::imaging::{gaussian_blur, GrayImage};

pub const OCTAVES: usize = 3;
const SCALES_PER_OCTAVE: usize = 3;
const BASE_SIGMA: f64 = 1.6;
const ASSUMED_BLUR: f64 = 0.5;
pub const CONTRAST_THRESHOLD: f32 = 0.013;
const EDGE_RATIO: f32 = 10.0;
const GRID: usize = 4;
const ORIENTATIONS: usize = 8;
pub const DESCRIPTOR_LEN: usize = GRID * GRID * ORIENTATIONS;
const MIN_KEYPOINTS: usize = 8;
const MIN_SIDE: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Blob scale in base-image pixels.
    pub scale: f64,
    /// Unit-length, `DESCRIPTOR_LEN` entries.
    pub descriptor: Vec<f32>,
}

/// Every other pixel in each direction.
fn decimate(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width().div_ceil(2), img.height().div_ceil(2));
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(img.get(2 * x, 2 * y));
        }
    }
    GrayImage::from_vec(w, h, data).expect("dimensions from source")
}

struct Octave {
    gauss: Vec<GrayImage>,
    dog: Vec<Vec<f32>>,
    w: usize,
    h: usize,
}

fn build_octave(base: GrayImage) -> Octave {
    let k = 2f64.powf(1.0 / SCALES_PER_OCTAVE as f64);
    let mut gauss = vec![base];
    for i in 1..SCALES_PER_OCTAVE + 3 {
        let prev = BASE_SIGMA * k.powi(i as i32 - 1);
        let inc = (prev * k).powi(2) - prev * prev;
        gauss.push(gaussian_blur(&gauss[i - 1], inc.sqrt()));
    }
    let dog = gauss
        .windows(2)
        .map(|p| p[1].data().iter().zip(p[0].data()).map(|(a, b)| a - b).collect())
        .collect();
    let (w, h) = (gauss[0].width(), gauss[0].height());
    Octave { gauss, dog, w, h }
}

fn is_extremum(oct: &Octave, s: usize, x: usize, y: usize) -> bool {
    let w = oct.w;
    let v = oct.dog[s][y * w + x];
    let (mut is_max, mut is_min) = (true, true);
    for layer in &oct.dog[s - 1..=s + 1] {
        for yy in y - 1..=y + 1 {
            let row = &layer[yy * w + x - 1..yy * w + x + 2];
            for &n in row {
                // the centre compares equal to itself and is not disqualifying
                if n > v {
                    is_max = false;
                }
                if n < v {
                    is_min = false;
                }
            }
        }
        if !is_max && !is_min {
            return false;
        }
    }
    // flat plateaus are not blobs
    let strict = oct.dog[s][y * w + x + 1] != v || oct.dog[s][y * w + x - 1] != v;
    strict && (is_max || is_min)
}

/// Hessian edge test on the DoG layer.
fn passes_edge_test(d: &[f32], w: usize, x: usize, y: usize) -> bool {
    let at = |xx: usize, yy: usize| d[yy * w + xx];
    let c = at(x, y);
    let dxx = at(x + 1, y) + at(x - 1, y) - 2.0 * c;
    let dyy = at(x, y + 1) + at(x, y - 1) - 2.0 * c;
    let dxy = (at(x + 1, y + 1) - at(x + 1, y - 1) - at(x - 1, y + 1) + at(x - 1, y - 1)) / 4.0;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det > 0.0 && tr * tr * EDGE_RATIO < (EDGE_RATIO + 1.0).powi(2) * det
}

/// Sub-pixel offset from a per-axis parabola through three samples.
fn parabola(l: f32, c: f32, r: f32) -> f64 {
    let den = l - 2.0 * c + r;
    if den.abs() < 1e-12 {
        return 0.0;
    }
    f64::from((0.5 * (l - r) / den).clamp(-0.5, 0.5))
}

/// Per-pixel gradient magnitude and orientation (in histogram-bin units,
/// `[0, ORIENTATIONS)`) by central differences; zero on the border.
struct Gradients {
    w: usize,
    h: usize,
    mag: Vec<f32>,
    bin: Vec<f32>,
}

impl Gradients {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let d = img.data();
        let mut mag = vec![0f32; w * h];
        let mut bin = vec![0f32; w * h];
        let per_radian = ORIENTATIONS as f32 / std::f32::consts::TAU;
        for y in 1..h.saturating_sub(1) {
            for x in 1..w - 1 {
                let i = y * w + x;
                let gx = d[i + 1] - d[i - 1];
                let gy = d[i + w] - d[i - w];
                let m = gx.hypot(gy);
                if m > 0.0 {
                    mag[i] = m;
                    let b = gy.atan2(gx).rem_euclid(std::f32::consts::TAU) * per_radian;
                    bin[i] = if b >= ORIENTATIONS as f32 { 0.0 } else { b };
                }
            }
        }
        Self { w, h, mag, bin }
    }
}

/// Upright gradient-orientation histogram on a `GRID × GRID` lattice of
/// bins each `3σ` wide, with bilinear spatial and linear angular voting.
fn describe(g: &Gradients, x: f64, y: f64, sigma: f64) -> Vec<f32> {
    let bin = 3.0 * sigma;
    let half = bin * GRID as f64 / 2.0;
    let radius = (half * std::f64::consts::SQRT_2).ceil() as i64;
    let mut hist = vec![0f32; DESCRIPTOR_LEN];
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let (x0, x1) = ((cx - radius).max(1), (cx + radius).min(g.w as i64 - 2));
    let (y0, y1) = ((cy - radius).max(1), (cy + radius).min(g.h as i64 - 2));
    if x0 > x1 || y0 > y1 {
        return hist;
    }
    // separable Gaussian window and bin coordinates per column / row
    let axis = |lo: i64, hi: i64, c: f64| -> Vec<(f32, f32)> {
        (lo..=hi)
            .map(|p| {
                let r = p as f64 - c;
                (((r + half) / bin - 0.5) as f32, (-(r * r) / (2.0 * half * half)).exp() as f32)
            })
            .collect()
    };
    let cols = axis(x0, x1, x);
    let rows = axis(y0, y1, y);
    let grid = GRID as f32;
    for (py, &(by, wy)) in (y0..=y1).zip(&rows) {
        if by <= -1.0 || by >= grid {
            continue;
        }
        let base = py as usize * g.w;
        let yf = by.floor();
        let fy = by - yf;
        for (px, &(bx, wx)) in (x0..=x1).zip(&cols) {
            if bx <= -1.0 || bx >= grid {
                continue;
            }
            let i = base + px as usize;
            let m = g.mag[i];
            if m == 0.0 {
                continue;
            }
            let weight = m * wx * wy;
            let bo = g.bin[i];
            let (xf, of) = (bx.floor(), bo.floor());
            let (fx, fo) = (bx - xf, bo - of);
            let o0 = of as usize;
            let o1 = (o0 + 1) % ORIENTATIONS;
            for (yi, wy) in [(yf as i64, 1.0 - fy), (yf as i64 + 1, fy)] {
                if yi < 0 || yi >= GRID as i64 {
                    continue;
                }
                for (xi, wx) in [(xf as i64, 1.0 - fx), (xf as i64 + 1, fx)] {
                    if xi < 0 || xi >= GRID as i64 {
                        continue;
                    }
                    let cell = (yi as usize * GRID + xi as usize) * ORIENTATIONS;
                    let v = weight * wy * wx;
                    hist[cell + o0] += v * (1.0 - fo);
                    hist[cell + o1] += v * fo;
                }
            }
        }
    }
    normalize_clipped(&mut hist);
    hist
}

fn normalize_clipped(v: &mut [f32]) {
    let unit = |v: &mut [f32]| {
        let n = v.iter().map(|a| a * a).sum::<f32>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|a| *a /= n);
        }
    };
    unit(v);
    v.iter_mut().for_each(|a| *a = a.min(0.2));
    unit(v);
}

/// Difference-of-Gaussians keypoints with upright histogram descriptors,
/// in raster order per octave and scale.
pub fn detect_features(img: &GrayImage) -> Result<Vec<Keypoint>, RegistrationError> {
    if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        return Err(RegistrationError::NoFeatures { found: 0 });
    }
    let k = 2f64.powf(1.0 / SCALES_PER_OCTAVE as f64);
    let init = (BASE_SIGMA * BASE_SIGMA - ASSUMED_BLUR * ASSUMED_BLUR).sqrt();
    let mut base = gaussian_blur(img, init);
    let mut out = Vec::new();
    for o in 0..OCTAVES {
        if base.width() < 16 || base.height() < 16 {
            break;
        }
        let oct = build_octave(base);
        let factor = f64::from(1u32 << o);
        for s in 1..=SCALES_PER_OCTAVE {
            let d = &oct.dog[s];
            let sigma = BASE_SIGMA * k.powi(s as i32);
            let mut found: Vec<(f64, f64)> = Vec::new();
            for y in 1..oct.h - 1 {
                for x in 1..oct.w - 1 {
                    let v = d[y * oct.w + x];
                    if v.abs() < CONTRAST_THRESHOLD || !is_extremum(&oct, s, x, y) {
                        continue;
                    }
                    if !passes_edge_test(d, oct.w, x, y) {
                        continue;
                    }
                    let at = |xx: usize, yy: usize| d[yy * oct.w + xx];
                    let ox = parabola(at(x - 1, y), v, at(x + 1, y));
                    let oy = parabola(at(x, y - 1), v, at(x, y + 1));
                    found.push((x as f64 + ox, y as f64 + oy));
                }
            }
            if found.is_empty() {
                continue;
            }
            let grads = Gradients::new(&oct.gauss[s]);
            let found: Vec<Keypoint> = found
                .into_par_iter()
                .map(|(fx, fy)| Keypoint {
                    x: fx * factor,
                    y: fy * factor,
                    scale: sigma * factor,
                    descriptor: describe(&grads, fx, fy, sigma),
                })
                .collect();
            out.extend(found);
        }
        base = decimate(&oct.gauss[SCALES_PER_OCTAVE]);
    }
    if out.len() < MIN_KEYPOINTS {
        return Err(RegistrationError::NoFeatures { found: out.len() });
    }
    Ok(out)
}
