use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::glyphs::{font_dots, GlyphSampler};
use super::{BorderStyle, FormTemplate, RenderSpec, TemplateError, DIGITS_PER_ROW};
use crate::imaging::{resize_to, BoundingBox, GrayImage};
use crate::registration::{warp_perspective, Homography};

const INK: f32 = 0.08;
const PRINT: f32 = 0.15;
const LIGHT_RULE: f32 = 0.55;
const GLYPH_JITTER: i64 = 2;

/// A raster whose pixel `(0, 0)` sits at page coordinate `(ox, oy)`.
struct Canvas {
    img: GrayImage,
    ox: i64,
    oy: i64,
}

impl Canvas {
    fn page(w: usize, h: usize) -> Self {
        Self {
            img: GrayImage::white(w, h),
            ox: 0,
            oy: 0,
        }
    }

    fn fill(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, v: f32) {
        crate::imaging::fill_rect(&mut self.img, x0 - self.ox, y0 - self.oy, x1 - self.ox, y1 - self.oy, v);
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), t: f64, v: f32) {
        let (ox, oy) = (self.ox as f64, self.oy as f64);
        crate::imaging::draw_line(&mut self.img, (a.0 - ox, a.1 - oy), (b.0 - ox, b.1 - oy), t, v);
    }

    fn text_number(&mut self, n: usize, x: i64, y: i64, scale: i64) {
        for (k, ch) in n.to_string().bytes().enumerate() {
            let x0 = x + k as i64 * 6 * scale;
            for (c, r) in font_dots(ch - b'0') {
                self.fill(x0 + c * scale, y + r * scale, x0 + (c + 1) * scale, y + (r + 1) * scale, PRINT);
            }
        }
    }

    fn clear(&mut self, x0: i64, y0: i64, x1: i64, y1: i64) {
        let (w, h) = (self.img.width() as i64, self.img.height() as i64);
        for y in (y0 - self.oy).max(0)..(y1 - self.oy).min(h) {
            for x in (x0 - self.ox).max(0)..(x1 - self.ox).min(w) {
                self.img.set(x as usize, y as usize, 1.0);
            }
        }
    }

    /// Darkens by `1 - ink` (multiplicative, like ink on paper).
    fn multiply_ink(&mut self, ink: &GrayImage, x: i64, y: i64) {
        for gy in 0..ink.height() {
            for gx in 0..ink.width() {
                let (px, py) = (x + gx as i64 - self.ox, y + gy as i64 - self.oy);
                if px < 0 || py < 0 || px >= self.img.width() as i64 || py >= self.img.height() as i64 {
                    continue;
                }
                let (px, py) = (px as usize, py as usize);
                let cur = self.img.get(px, py);
                self.img.set(px, py, cur * (1.0 - ink.get(gx, gy)));
            }
        }
    }
}

fn id_seed(id: &str, salt: u64) -> u64 {
    // FNV-1a
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ salt;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A run of pseudo-letters: each letter is a few strokes in a 12×18 box.
fn pseudo_word(c: &mut Canvas, x: i64, y: i64, letters: usize, rng: &mut impl Rng) -> i64 {
    let (w, h) = (10i64, 18i64);
    for k in 0..letters as i64 {
        let x0 = x + k * (w + 4);
        let strokes: [((i64, i64), (i64, i64)); 7] = [
            ((0, 0), (0, h)),
            ((w, 0), (w, h)),
            ((w / 2, 0), (w / 2, h)),
            ((0, 0), (w, 0)),
            ((0, h / 2), (w, h / 2)),
            ((0, h), (w, h)),
            ((0, h), (w, 0)),
        ];
        let mask: u8 = rng.random_range(1..127);
        let mut drawn = 0;
        for (i, (a, b)) in strokes.iter().enumerate() {
            if mask >> i & 1 == 1 && drawn < 3 {
                c.line(((x0 + a.0) as f64, (y + a.1) as f64), ((x0 + b.0) as f64, (y + b.1) as f64), 2.0, PRINT);
                drawn += 1;
            }
        }
    }
    x + letters as i64 * (w + 4)
}

fn pseudo_line(c: &mut Canvas, x0: i64, x1: i64, y: i64, rng: &mut impl Rng) {
    let mut x = x0;
    while x < x1 - 40 {
        let letters = rng.random_range(2..8).min(((x1 - x) / 14) as usize);
        x = pseudo_word(c, x, y, letters, rng) + 16;
    }
}

/// Corner mark: a `+` or `×` inside two rings of up to eight dots each,
/// the rings' pattern taken from the low 16 bits of `code`.
fn corner_mark(c: &mut Canvas, cx: f64, cy: f64, diagonal: bool, code: u64) {
    let arm = 7.0;
    let v = 0.25;
    if diagonal {
        c.line((cx - arm, cy - arm), (cx + arm, cy + arm), 3.0, v);
        c.line((cx - arm, cy + arm), (cx + arm, cy - arm), 3.0, v);
    } else {
        c.line((cx - arm, cy), (cx + arm, cy), 3.0, v);
        c.line((cx, cy - arm), (cx, cy + arm), 3.0, v);
    }
    let (cx, cy) = (cx.round() as i64, cy.round() as i64);
    let ring = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];
    for (r, (d, s)) in [(11i64, 2i64), (16, 3)].into_iter().enumerate() {
        for (bit, (dx, dy)) in ring.into_iter().enumerate() {
            if code >> (r * 8 + bit) & 1 == 1 {
                let (x, y) = (cx + dx * d, cy + dy * d);
                c.fill(x - s, y - s, x + s, y + s, v);
            }
        }
    }
}

fn draw_template(c: &mut Canvas, t: &FormTemplate, spec: &RenderSpec) {
    if t.rows.is_empty() {
        return;
    }
    let (w, h) = (t.page_width as i64, t.page_height as i64);
    // fiducials: solid squares with a hole in a corner-specific quadrant
    let f = 48i64;
    let m = 60i64;
    for (k, (x, y)) in [(m, m), (w - m - f, m), (m, h - m - f), (w - m - f, h - m - f)].into_iter().enumerate() {
        c.fill(x, y, x + f, y + f, INK);
        let (hx, hy) = (x + 8 + (k as i64 % 2) * 20, y + 8 + (k as i64 / 2) * 20);
        c.clear(hx, hy, hx + 12, hy + 12);
    }
    // header and footer pseudo-text, fixed per template id
    let mut rng = ChaCha8Rng::seed_from_u64(id_seed(&t.id, 1));
    for line in 0..4 {
        pseudo_line(c, 200, w - 200, 150 + line * 48, &mut rng);
    }
    pseudo_line(c, 200, w - 400, h - 134, &mut rng);

    for row in &t.rows {
        let first = row.cells[0];
        let last = row.cells[DIGITS_PER_ROW - 1];
        let (y0, y1) = (first.y0.round() as i64, first.y1.round() as i64);
        // row number and a name field with per-row pseudo-text
        let scale = 4i64;
        c.text_number(row.row_index + 1, first.x0 as i64 - 110, y0 + (y1 - y0 - 7 * scale) / 2, scale);
        let mut rrng = ChaCha8Rng::seed_from_u64(id_seed(&t.id, 100 + row.row_index as u64));
        let name_end = first.x0 as i64 - 140;
        let letters = rrng.random_range(4..12);
        pseudo_word(c, 140, y0 + 10, letters, &mut rrng);
        c.fill(140, y1 + 2, name_end, y1 + 4, PRINT);

        let bleed = spec.border_bleed.round() as i64;
        match spec.border_style {
            BorderStyle::DarkJoined => {
                let tk = 4i64;
                let (x0, x1) = (first.x0.round() as i64, last.x1.round() as i64);
                c.fill(x0 - tk, y0 - tk, x1 + tk, y0 + bleed, INK);
                c.fill(x0 - tk, y1 - bleed, x1 + tk, y1 + tk, INK);
                c.fill(x0 - tk, y0, x0 + bleed, y1, INK);
                c.fill(x1 - bleed, y0, x1 + tk, y1, INK);
                for pair in row.cells.windows(2) {
                    let (a, b) = (pair[0].x1.round() as i64, pair[1].x0.round() as i64);
                    c.fill(a - bleed, y0, b.max(a + 1) + bleed, y1, INK);
                }
            }
            BorderStyle::LightSeparated => {
                for cell in &row.cells {
                    let (x0, x1) = (cell.x0.round() as i64, cell.x1.round() as i64);
                    let tk = 2i64;
                    c.fill(x0 - tk, y0 - tk, x1 + tk, y0 + bleed, LIGHT_RULE);
                    c.fill(x0 - tk, y1 - bleed, x1 + tk, y1 + tk, LIGHT_RULE);
                    c.fill(x0 - tk, y0, x0 + bleed, y1, LIGHT_RULE);
                    c.fill(x1 - bleed, y0, x1 + tk, y1, LIGHT_RULE);
                }
            }
        }
        if spec.corner_marks {
            // row `r` carries the marks of row `r + decoy_row_offset`
            let source = (row.row_index + spec.decoy_row_offset) % t.rows.len();
            let mut xs: Vec<f64> = vec![first.x0 - 8.0];
            xs.extend(row.cells.windows(2).map(|p| (p[0].x1 + p[1].x0) / 2.0));
            xs.push(last.x1 + 8.0);
            for (k, &x) in xs.iter().enumerate() {
                for (j, y) in [first.y0 - 12.0, first.y1 + 12.0].into_iter().enumerate() {
                    let code = id_seed(&t.id, 1000 + (source * 64 + k * 2 + j) as u64) >> 17;
                    corner_mark(c, x, y, (k + j) % 2 == 1, code);
                }
            }
        }
    }
}

/// The undistorted, noiseless page in the spec's border style.
pub fn render_blank_template(t: &FormTemplate, spec: &RenderSpec) -> GrayImage {
    let mut c = Canvas::page(t.page_width, t.page_height);
    draw_template(&mut c, t, spec);
    c.img
}

/// Places a digit into `cell`: scaled by `cell_width / 32`, inverted to ink
/// on paper, jittered by up to two pixels.
fn place_glyph(c: &mut Canvas, cell: &BoundingBox, glyph: &GrayImage, rng: &mut impl Rng) {
    let scale = cell.width() / 32.0;
    let gw = ((glyph.width() as f64) * scale).round().max(1.0) as usize;
    let gh = ((glyph.height() as f64) * scale).round().max(1.0) as usize;
    let ink = resize_to(glyph, gw, gh);
    let (cx, cy) = cell.center();
    let x = (cx - gw as f64 / 2.0).round() as i64 + rng.random_range(-GLYPH_JITTER..=GLYPH_JITTER);
    let y = (cy - gh as f64 / 2.0).round() as i64 + rng.random_range(-GLYPH_JITTER..=GLYPH_JITTER);
    c.multiply_ink(&ink, x, y);
}

fn add_noise(img: &mut GrayImage, sigma: f64, rng: &mut impl Rng) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0f32, sigma as f32).expect("finite sigma");
    let (w, h) = (img.width(), img.height());
    for y in 0..h {
        for x in 0..w {
            let v = img.get(x, y) + normal.sample(rng);
            img.set(x, y, v);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowTruth {
    pub row_index: usize,
    /// Ten digits, or `None` for an empty row.
    pub digits: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub form: String,
    pub rows: Vec<RowTruth>,
    /// Row-major true cell boxes in scan coordinates.
    pub true_boxes: Vec<BoundingBox>,
    /// The applied template → scan transform.
    pub distortion: Homography,
}

impl GroundTruth {
    /// Label of cell `(row, cell)`: a digit, or `None` for blank.
    pub fn cell_label(&self, row: usize, cell: usize) -> Option<u8> {
        self.rows
            .iter()
            .find(|r| r.row_index == row)
            .and_then(|r| r.digits.as_ref())
            .map(|d| d.as_bytes()[cell] - b'0')
    }
}

fn check_digits(digits: &[Option<String>]) -> Result<(), TemplateError> {
    for (row, d) in digits.iter().enumerate() {
        if let Some(s) = d {
            if s.len() != DIGITS_PER_ROW || !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(TemplateError::MalformedDigits { row, digits: s.clone() });
            }
        }
    }
    Ok(())
}

/// The template → scan distortion drawn for `spec`: independent corner
/// displacements followed by a page translation.
fn sample_distortion(t: &FormTemplate, spec: &RenderSpec, rng: &mut impl Rng) -> Homography {
    let (w, h) = (t.page_width as f64, t.page_height as f64);
    let src = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let (jx, jy) = (spec.corner_jitter * w, spec.corner_jitter * h);
    let mut dst = src;
    for p in &mut dst {
        if jx > 0.0 {
            p.0 += rng.random_range(-jx..=jx);
        }
        if jy > 0.0 {
            p.1 += rng.random_range(-jy..=jy);
        }
    }
    let (sx, sy) = if spec.crop_shift > 0.0 {
        (
            rng.random_range(-spec.crop_shift..=spec.crop_shift),
            rng.random_range(-spec.crop_shift..=spec.crop_shift),
        )
    } else {
        (0.0, 0.0)
    };
    for p in &mut dst {
        p.0 += sx;
        p.1 += sy;
    }
    if dst == src {
        return Homography::identity();
    }
    Homography::fit(&src, &dst).expect("corner displacements stay well inside the page")
}

/// Renders a filled, distorted, noisy scan. `digits[r]` fills template row
/// `r`; missing entries are blank rows.
pub fn render_filled_scan(
    t: &FormTemplate,
    digits: &[Option<String>],
    glyphs: &dyn GlyphSampler,
    spec: &RenderSpec,
    form_id: &str,
) -> Result<(GrayImage, GroundTruth), TemplateError> {
    spec.validate()?;
    check_digits(digits)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut c = Canvas::page(t.page_width, t.page_height);
    draw_template(&mut c, t, spec);
    let mut rows = Vec::with_capacity(t.rows.len());
    for (r, row) in t.rows.iter().enumerate() {
        let d = digits.get(r).cloned().flatten();
        if let Some(s) = &d {
            for (cell, ch) in row.cells.iter().zip(s.bytes()) {
                let g = glyphs.sample(ch - b'0', &mut rng);
                place_glyph(&mut c, cell, &g, &mut rng);
            }
        }
        rows.push(RowTruth {
            row_index: row.row_index,
            digits: d,
        });
    }
    let distortion = sample_distortion(t, spec, &mut rng);
    let mut scan = if distortion == Homography::identity() {
        c.img
    } else {
        let inv = distortion.inverse().expect("fitted distortion is invertible");
        warp_perspective(&c.img, &inv, t.page_width, t.page_height)
    };
    add_noise(&mut scan, spec.noise_sigma, &mut rng);
    let true_boxes = t
        .cells()
        .iter()
        .map(|b| distortion.map_box(b).expect("finite distortion"))
        .collect();
    Ok((
        scan,
        GroundTruth {
            form: form_id.to_string(),
            rows,
            true_boxes,
            distortion,
        },
    ))
}

/// A single model-ready cell crop (32×32, ink-high) rendered locally: the
/// page region around template cell `(row, cell)` with an optional digit,
/// cropped with up to `misalign` pixels of shift and 2% scale error.
pub fn render_cell_sample(
    t: &FormTemplate,
    spec: &RenderSpec,
    row: usize,
    cell: usize,
    glyph: Option<&GrayImage>,
    misalign: f64,
    rng: &mut dyn RngCore,
) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
    let b = t.rows[row].cells[cell];
    let margin = 24i64;
    let (ox, oy) = (b.x0.floor() as i64 - margin, b.y0.floor() as i64 - margin);
    let (w, h) = (b.width().ceil() as usize + 2 * margin as usize, b.height().ceil() as usize + 2 * margin as usize);
    let mut c = Canvas {
        img: GrayImage::white(w, h),
        ox,
        oy,
    };
    draw_template(&mut c, t, spec);
    if let Some(g) = glyph {
        place_glyph(&mut c, &b, g, &mut rng);
    }
    add_noise(&mut c.img, spec.noise_sigma, &mut rng);
    let (dx, dy) = if misalign > 0.0 {
        (rng.random_range(-misalign..=misalign), rng.random_range(-misalign..=misalign))
    } else {
        (0.0, 0.0)
    };
    let s = 1.0 + rng.random_range(-0.02..=0.02) * (misalign > 0.0) as u8 as f64;
    let (cx, cy) = b.center();
    let (hw, hh) = (b.width() * s / 2.0, b.height() * s / 2.0);
    let local = BoundingBox::new(cx - hw + dx - ox as f64, cy - hh + dy - oy as f64, cx + hw + dx - ox as f64, cy + hh + dy - oy as f64)
        .expect("positive cell");
    c.img.crop_box(&local, 32, 32).inverted()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::iou;
    use crate::template::glyphs::FontGlyphs;

    fn digits_all(n: usize) -> Vec<Option<String>> {
        (0..n).map(|r| Some(format!("{:010}", 1234567890u64 + r as u64 * 7919))).collect()
    }

    #[test]
    fn empty_template_is_white() {
        let mut t = FormTemplate::form1();
        t.rows.clear();
        let img = render_blank_template(&t, &RenderSpec::default());
        assert!(img.data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn joined_cells_share_one_rule() {
        let t = FormTemplate::form1();
        let img = render_blank_template(&t, &RenderSpec::clean(BorderStyle::DarkJoined, false));
        let (a, b) = (t.rows[0].cells[0], t.rows[0].cells[1]);
        let y = a.center().1 as usize;
        // the whole gap between neighbours is ink, both interiors are paper
        for x in a.x1 as usize..b.x0 as usize {
            assert!(img.get(x, y) < 0.2);
        }
        assert_eq!(img.get(a.x1 as usize - 2, y), 1.0);
        assert_eq!(img.get(b.x0 as usize + 1, y), 1.0);
    }

    #[test]
    fn light_cells_have_paper_between() {
        let t = FormTemplate::form2();
        let img = render_blank_template(&t, &RenderSpec::clean(BorderStyle::LightSeparated, false));
        let (a, b) = (t.rows[0].cells[0], t.rows[0].cells[1]);
        let y = a.center().1 as usize;
        let mid = ((a.x1 + b.x0) / 2.0) as usize;
        assert_eq!(img.get(mid, y), 1.0);
        assert!((img.get(a.x1 as usize, y) - LIGHT_RULE).abs() < 1e-6);
    }

    #[test]
    fn corner_marks_are_drawn_between_cells() {
        let t = FormTemplate::form2();
        let plain = render_blank_template(&t, &RenderSpec::clean(BorderStyle::LightSeparated, false));
        let marked = render_blank_template(&t, &RenderSpec::clean(BorderStyle::LightSeparated, true));
        let (a, b) = (t.rows[3].cells[4], t.rows[3].cells[5]);
        let (x, y) = (((a.x1 + b.x0) / 2.0) as usize, (a.y0 - 12.0) as usize);
        assert_eq!(plain.get(x, y), 1.0);
        assert!(marked.get(x, y) < 0.5);
    }

    #[test]
    fn identity_distortion_keeps_template_boxes() {
        let t = FormTemplate::form1();
        let spec = RenderSpec::clean(BorderStyle::DarkJoined, false);
        let (_, gt) = render_filled_scan(&t, &[], &FontGlyphs, &spec, "f").unwrap();
        assert!(gt.rows.iter().all(|r| r.digits.is_none()));
        for (a, b) in gt.true_boxes.iter().zip(t.cells()) {
            assert_eq!(iou(a, &b), 1.0);
        }
    }

    #[test]
    fn jitter_moves_boxes_and_rendering_is_deterministic() {
        let t = FormTemplate::form1();
        let spec = RenderSpec { corner_jitter: 0.01, seed: 9, ..RenderSpec::default() };
        let d = digits_all(3);
        let (a, ga) = render_filled_scan(&t, &d, &FontGlyphs, &spec, "f").unwrap();
        let (b, gb) = render_filled_scan(&t, &d, &FontGlyphs, &spec, "f").unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
        assert!(ga.true_boxes.iter().zip(t.cells()).any(|(x, y)| iou(x, &y) < 1.0));
        assert_eq!(ga.cell_label(1, 0), Some(d[1].as_ref().unwrap().as_bytes()[0] - b'0'));
        assert_eq!(ga.cell_label(5, 0), None);
    }

    #[test]
    fn malformed_digits_are_rejected() {
        let t = FormTemplate::form1();
        for bad in ["12345", "12345678x0"] {
            let r = render_filled_scan(&t, &[Some(bad.into())], &FontGlyphs, &RenderSpec::default(), "f");
            assert!(matches!(r, Err(TemplateError::MalformedDigits { row: 0, .. })));
        }
    }

    #[test]
    fn cell_samples_are_model_ready() {
        let t = FormTemplate::form1();
        let spec = RenderSpec::clean(BorderStyle::DarkJoined, false);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blank = render_cell_sample(&t, &spec, 2, 3, None, 0.0, &mut rng);
        assert_eq!((blank.width(), blank.height()), (32, 32));
        assert!(blank.mean() < 0.02);
        let g = FontGlyphs.sample(8, &mut rng);
        let digit = render_cell_sample(&t, &spec, 2, 3, Some(&g), 1.0, &mut rng);
        assert!(digit.mean() > 0.1);
    }
}
