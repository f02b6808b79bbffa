//! Scan-to-template alignment: feature detection, vertically filtered
//! matching, RANSAC homography and perspective warping.

mod features;
mod homography;

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use features::{detect_features, Keypoint, DESCRIPTOR_LEN};
pub use homography::Homography;

use crate::imaging::{bilinear_sample, iou, BoundingBox, GrayImage};
use crate::template::FormTemplate;

#[derive(Debug, thiserror::Error)]
pub enum RegistrationError {
    #[error("only {found} keypoints found")]
    NoFeatures { found: usize },
    #[error("only {found} matches survived filtering")]
    TooFewMatches { found: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("invalid match filter: {0}")]
    InvalidConfig(String),
}

/// Paper-benchmark scan height at which the vertical threshold is stated.
pub const REFERENCE_HEIGHT: f64 = 5846.0;
pub const MIN_MATCHES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchFilterConfig {
    /// In reference-resolution pixels.
    pub vertical_threshold: f64,
    pub reference_height: f64,
    pub ratio_test: f64,
}

impl Default for MatchFilterConfig {
    fn default() -> Self {
        Self {
            vertical_threshold: 150.0,
            reference_height: REFERENCE_HEIGHT,
            ratio_test: 0.75,
        }
    }
}

impl MatchFilterConfig {
    /// Ratio test only.
    pub fn unfiltered() -> Self {
        Self {
            vertical_threshold: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RegistrationError> {
        if !(self.vertical_threshold > 0.0) {
            return Err(RegistrationError::InvalidConfig("vertical_threshold must be positive".into()));
        }
        if !(self.reference_height > 0.0 && self.reference_height.is_finite()) {
            return Err(RegistrationError::InvalidConfig("reference_height must be positive".into()));
        }
        if !(self.ratio_test > 0.0 && self.ratio_test < 1.0) {
            return Err(RegistrationError::InvalidConfig("ratio_test must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub scan_point: Keypoint,
    pub template_point: Keypoint,
    /// Euclidean descriptor distance.
    pub distance: f64,
}

/// Nearest and second-nearest template descriptor per scan keypoint, as
/// `(index, squared distance)` pairs.
fn two_nearest(scan: &[Keypoint], tmpl: &[Keypoint]) -> Vec<[(usize, f32); 2]> {
    let d = DESCRIPTOR_LEN;
    let t: Vec<f32> = tmpl.iter().flat_map(|k| k.descriptor.iter().copied()).collect();
    let m = tmpl.len();
    const BLOCK: usize = 256;
    scan.par_chunks(BLOCK)
        .flat_map_iter(|chunk| {
            let s: Vec<f32> = chunk.iter().flat_map(|k| k.descriptor.iter().copied()).collect();
            let n = chunk.len();
            let mut dots = vec![0f32; n * m];
            // dots = S (n×d) · Tᵀ (d×m)
            unsafe {
                matrixmultiply::sgemm(
                    n, d, m, 1.0,
                    s.as_ptr(), d as isize, 1,
                    t.as_ptr(), 1, d as isize,
                    0.0,
                    dots.as_mut_ptr(), m as isize, 1,
                );
            }
            (0..n)
                .map(|i| {
                    let mut best = [(usize::MAX, f32::INFINITY); 2];
                    for (j, dot) in dots[i * m..(i + 1) * m].iter().enumerate() {
                        // unit descriptors: |a - b|² = 2 - 2 a·b
                        let dist = (2.0 - 2.0 * dot).max(0.0);
                        if dist < best[0].1 {
                            best[1] = best[0];
                            best[0] = (j, dist);
                        } else if dist < best[1].1 {
                            best[1] = (j, dist);
                        }
                    }
                    best
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Vertical offset between a scan point and its template partner, in
/// reference-resolution pixels.
pub fn vertical_offset(scan_y: f64, template_y: f64, scan_height: f64, template_height: f64, reference_height: f64) -> f64 {
    (template_y - scan_y * template_height / scan_height).abs() * reference_height / template_height
}

/// Ratio-test matches, then the vertical filter. Deterministic; the
/// filtered set is always a subset of the `unfiltered` configuration's.
pub fn match_features(
    scan: &[Keypoint],
    tmpl: &[Keypoint],
    scan_height: usize,
    template_height: usize,
    cfg: &MatchFilterConfig,
) -> Result<Vec<Match>, RegistrationError> {
    cfg.validate()?;
    if scan.is_empty() || tmpl.is_empty() {
        return Err(RegistrationError::NoFeatures { found: 0 });
    }
    let ratio2 = (cfg.ratio_test * cfg.ratio_test) as f32;
    let (sh, th) = (scan_height as f64, template_height as f64);
    let mut out = Vec::new();
    for (kp, [(j, d1), (_, d2)]) in scan.iter().zip(two_nearest(scan, tmpl)) {
        // a lone template keypoint has no second neighbour and cannot pass
        if !(d1 < ratio2 * d2) {
            continue;
        }
        let tp = &tmpl[j];
        if vertical_offset(kp.y, tp.y, sh, th, cfg.reference_height) > cfg.vertical_threshold {
            continue;
        }
        out.push(Match {
            scan_point: kp.clone(),
            template_point: tp.clone(),
            distance: f64::from(d1).sqrt(),
        });
    }
    if out.len() < MIN_MATCHES {
        return Err(RegistrationError::TooFewMatches { found: out.len() });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Reprojection threshold in template pixels.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_threshold: 3.0,
            min_inliers: 10,
            seed: 0,
        }
    }
}

fn collinear(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = ((b.0 - a.0).hypot(b.1 - a.1) * (c.0 - a.0).hypot(c.1 - a.1)).max(1e-12);
    cross.abs() / scale < 1e-3
}

fn degenerate(p: &[(f64, f64)]) -> bool {
    (0..4).any(|skip| {
        let t: Vec<_> = (0..4).filter(|&i| i != skip).map(|i| p[i]).collect();
        collinear(t[0], t[1], t[2])
    })
}

fn reprojection_errors(h: &Homography, src: &[(f64, f64)], dst: &[(f64, f64)]) -> Vec<f64> {
    src.iter()
        .zip(dst)
        .map(|(s, d)| {
            let p = h.apply(*s);
            let e = (p.0 - d.0).hypot(p.1 - d.1);
            if e.is_finite() {
                e
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Scan → template homography by RANSAC with the default configuration.
pub fn estimate_homography(matches: &[Match]) -> Result<(Homography, Vec<bool>), RegistrationError> {
    estimate_homography_with(matches, &RansacConfig::default())
}

/// RANSAC over four-point samples, keeping the model with most inliers and
/// then lowest summed inlier error; refit by least squares on its inliers.
pub fn estimate_homography_with(matches: &[Match], cfg: &RansacConfig) -> Result<(Homography, Vec<bool>), RegistrationError> {
    let src: Vec<(f64, f64)> = matches.iter().map(|m| (m.scan_point.x, m.scan_point.y)).collect();
    let dst: Vec<(f64, f64)> = matches.iter().map(|m| (m.template_point.x, m.template_point.y)).collect();
    estimate_from_points(&src, &dst, cfg)
}

pub fn estimate_from_points(
    src: &[(f64, f64)],
    dst: &[(f64, f64)],
    cfg: &RansacConfig,
) -> Result<(Homography, Vec<bool>), RegistrationError> {
    let n = src.len();
    if n < 4 {
        return Err(RegistrationError::DegenerateConfiguration(format!("{n} correspondences, need 4")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, f64, Homography)> = None;
    for _ in 0..cfg.iterations {
        let idx = sample(&mut rng, n, 4);
        let s: Vec<_> = idx.iter().map(|i| src[i]).collect();
        let d: Vec<_> = idx.iter().map(|i| dst[i]).collect();
        if degenerate(&s) || degenerate(&d) {
            continue;
        }
        let Ok(h) = Homography::fit(&s, &d) else { continue };
        let errs = reprojection_errors(&h, src, dst);
        let (count, total) = errs
            .iter()
            .filter(|e| **e <= cfg.inlier_threshold)
            .fold((0usize, 0.0), |(c, t), e| (c + 1, t + e));
        let better = match &best {
            None => true,
            Some((bc, bt, _)) => count > *bc || (count == *bc && total < *bt),
        };
        if better {
            best = Some((count, total, h));
        }
    }
    let Some((count, _, h)) = best else {
        return Err(RegistrationError::DegenerateConfiguration("every sample was collinear".into()));
    };
    if count < cfg.min_inliers {
        return Err(RegistrationError::DegenerateConfiguration(format!(
            "best model has {count} inliers, need {}",
            cfg.min_inliers
        )));
    }
    let flags: Vec<bool> = reprojection_errors(&h, src, dst).iter().map(|e| *e <= cfg.inlier_threshold).collect();
    let (s, d): (Vec<_>, Vec<_>) = src.iter().zip(dst).zip(&flags).filter(|(_, f)| **f).map(|((s, d), _)| (*s, *d)).unzip();
    let refit = Homography::fit(&s, &d)?;
    let refit_flags: Vec<bool> = reprojection_errors(&refit, src, dst).iter().map(|e| *e <= cfg.inlier_threshold).collect();
    if refit_flags.iter().filter(|f| **f).count() >= count {
        Ok((refit, refit_flags))
    } else {
        Ok((h, flags))
    }
}

/// Resamples `src` onto a `w × h` grid: output pixel `p` reads
/// `src(dst_to_src(p))` bilinearly, white outside the source.
pub fn warp_perspective(src: &GrayImage, dst_to_src: &Homography, w: usize, h: usize) -> GrayImage {
    let mut data = vec![0f32; w * h];
    data.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let (sx, sy) = dst_to_src.apply((x as f64, y as f64));
            *v = bilinear_sample(src, sx, sy);
        }
    });
    GrayImage::from_vec(w, h, data).expect("dimensions match buffer")
}

/// The scan resampled into template page coordinates; `h` maps scan →
/// template.
pub fn warp_to_template(scan: &GrayImage, h: &Homography, t: &FormTemplate) -> Result<GrayImage, RegistrationError> {
    let inv = h.inverse()?;
    Ok(warp_perspective(scan, &inv, t.page_width, t.page_height))
}

/// Mean IoU between each true (scan) box mapped through `h` and its
/// template box. Boxes that map to non-finite coordinates score 0.
pub fn evaluate_alignment(true_boxes: &[BoundingBox], template_boxes: &[BoundingBox], h: &Homography) -> f64 {
    assert_eq!(true_boxes.len(), template_boxes.len(), "box lists must pair up");
    if true_boxes.is_empty() {
        return 0.0;
    }
    let total: f64 = true_boxes
        .iter()
        .zip(template_boxes)
        .map(|(t, r)| h.map_box(t).map_or(0.0, |m| iou(&m, r)))
        .sum();
    total / true_boxes.len() as f64
}

/// Full registration of one scan: detect, match, estimate.
#[derive(Clone, Debug)]
pub struct Registration {
    pub homography: Homography,
    pub matches: Vec<Match>,
    pub inliers: Vec<bool>,
}

impl Registration {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|f| **f).count()
    }
}

pub fn register(
    scan: &GrayImage,
    scan_features: &[Keypoint],
    template_features: &[Keypoint],
    template_height: usize,
    filter: &MatchFilterConfig,
    ransac: &RansacConfig,
) -> Result<Registration, RegistrationError> {
    let matches = match_features(scan_features, template_features, scan.height(), template_height, filter)?;
    let (homography, inliers) = estimate_homography_with(&matches, ransac)?;
    Ok(Registration {
        homography,
        matches,
        inliers,
    })
}

#[derive(Serialize)]
struct DumpRecord {
    scan_x: f64,
    scan_y: f64,
    scan_scale: f64,
    template_x: f64,
    template_y: f64,
    template_scale: f64,
    distance: f64,
    inlier: bool,
}

/// One JSON object per match with its inlier flag.
pub fn write_match_dump(out: &mut impl Write, matches: &[Match], inliers: &[bool]) -> std::io::Result<()> {
    for (m, inlier) in matches.iter().zip(inliers) {
        let rec = DumpRecord {
            scan_x: m.scan_point.x,
            scan_y: m.scan_point.y,
            scan_scale: m.scan_point.scale,
            template_x: m.template_point.x,
            template_y: m.template_point.y,
            template_scale: m.template_point.scale,
            distance: m.distance,
            inlier: *inlier,
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
