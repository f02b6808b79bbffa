use rand::{Rng, RngCore};

use crate::datasets::LabeledDigitSet;
use crate::imaging::GrayImage;

/// Supplies ink-high digit images (typically 28×28).
pub trait GlyphSampler: Sync {
    fn sample(&self, digit: u8, rng: &mut dyn RngCore) -> GrayImage;
}

/// Draws glyphs uniformly from the samples of a labelled digit set.
pub struct SetGlyphs {
    set: LabeledDigitSet,
    by_digit: Vec<Vec<usize>>,
}

impl SetGlyphs {
    /// Panics if some digit has no sample.
    pub fn new(set: LabeledDigitSet) -> Self {
        let mut by_digit = vec![Vec::new(); 10];
        for (i, &l) in set.labels.iter().enumerate() {
            by_digit[l as usize].push(i);
        }
        assert!(by_digit.iter().all(|v| !v.is_empty()), "every digit needs a glyph");
        Self { set, by_digit }
    }
}

impl GlyphSampler for SetGlyphs {
    fn sample(&self, digit: u8, rng: &mut dyn RngCore) -> GrayImage {
        let pool = &self.by_digit[digit as usize];
        self.set.images[pool[rng.random_range(0..pool.len())]].clone()
    }
}

/// 5×7 bitmaps of the digits, one row per byte (low five bits, MSB left).
const FONT: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
];

/// Filled dots `(col, row)` of a digit in the 5×7 font.
pub(crate) fn font_dots(digit: u8) -> impl Iterator<Item = (i64, i64)> {
    let rows = FONT[digit as usize % 10];
    (0..7).flat_map(move |r| (0..5).filter(move |c| rows[r] >> (4 - c) & 1 == 1).map(move |c| (c as i64, r as i64)))
}

/// Stand-in glyphs rendered from the 5×7 font, for tests and demos without
/// a handwriting corpus. Thickness and offset vary per sample.
pub struct FontGlyphs;

impl GlyphSampler for FontGlyphs {
    fn sample(&self, digit: u8, rng: &mut dyn RngCore) -> GrayImage {
        let mut img = GrayImage::filled(28, 28, 0.0);
        let scale = 3i64;
        let (ox, oy) = (6 + rng.random_range(-1..=1i64), 3 + rng.random_range(-1..=1i64));
        let grow = rng.random_range(0..=1i64);
        for (c, r) in font_dots(digit) {
            for y in oy + r * scale..oy + (r + 1) * scale + grow {
                for x in ox + c * scale..ox + (c + 1) * scale + grow {
                    if (0..28).contains(&x) && (0..28).contains(&y) {
                        img.set(x as usize, y as usize, 1.0);
                    }
                }
            }
        }
        img
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Source;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn font_digit_one_has_vertical_stem() {
        let dots: Vec<_> = font_dots(1).collect();
        assert!((0..7).all(|r| dots.contains(&(2, r))));
    }

    #[test]
    fn set_glyphs_respect_labels() {
        let images = (0..20).map(|i| GrayImage::filled(28, 28, (i % 10) as f32 / 10.0)).collect();
        let labels = (0..20).map(|i| (i % 10) as u8).collect();
        let g = SetGlyphs::new(LabeledDigitSet::new(images, labels, 10, Source::Synthetic).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 0..10u8 {
            assert!((g.sample(d, &mut rng).get(0, 0) - f32::from(d) / 10.0).abs() < 1e-6);
        }
    }
}
