use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LabeledDigitSet, Source};
use crate::template::{render_cell_sample, BorderStyle, FormTemplate, GlyphSampler, RenderSpec};

/// Pixels of crop misalignment used for training cell models; covers the
/// residual error of registration.
pub const CELL_MISALIGN: f64 = 3.0;

/// Both built-in form styles under scan-like noise, with and without rule
/// bleed and corner marks.
pub fn cell_layouts() -> Vec<(FormTemplate, RenderSpec)> {
    let dark = RenderSpec {
        border_style: BorderStyle::DarkJoined,
        ..RenderSpec::default()
    };
    let light = RenderSpec {
        border_style: BorderStyle::LightSeparated,
        corner_marks: true,
        ..RenderSpec::default()
    };
    vec![
        (FormTemplate::form1(), dark.clone()),
        (FormTemplate::form1(), RenderSpec { border_bleed: 2.0, ..dark }),
        (FormTemplate::form2(), light.clone()),
        (FormTemplate::form2(), RenderSpec { border_bleed: 2.0, ..light }),
    ]
}

/// Cell crops as the pipeline sees them (32×32, ink-high, including rule
/// fragments and noise), drawn evenly across `layouts`.
fn cells(
    layouts: &[(FormTemplate, RenderSpec)],
    n: usize,
    misalign: f64,
    seed: u64,
    mut glyph: impl FnMut(usize, &mut ChaCha8Rng) -> (Option<crate::imaging::GrayImage>, u8),
) -> LabeledDigitSet {
    assert!(!layouts.is_empty(), "at least one layout");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (t, spec) = &layouts[i % layouts.len()];
        let row = rng.random_range(0..t.rows.len());
        let cell = rng.random_range(0..t.rows[row].cells.len());
        let (g, label) = glyph(i, &mut rng);
        images.push(render_cell_sample(t, spec, row, cell, g.as_ref(), misalign, &mut rng));
        labels.push(label);
    }
    LabeledDigitSet {
        images,
        labels,
        classes: 2,
        source: Source::Synthetic,
    }
}

/// Balanced blank (label 0) / digit (label 1) crops; even indices blank.
pub fn blank_cell_set(
    layouts: &[(FormTemplate, RenderSpec)],
    n: usize,
    glyphs: &dyn GlyphSampler,
    misalign: f64,
    seed: u64,
) -> LabeledDigitSet {
    cells(layouts, n, misalign, seed, |i, rng| {
        if i % 2 == 0 {
            (None, 0)
        } else {
            let d = rng.random_range(0..10u8);
            (Some(glyphs.sample(d, rng)), 1)
        }
    })
}

/// Digit crops labelled 0-9, the glyphs taken in order from `source`.
pub fn digit_cell_set(
    layouts: &[(FormTemplate, RenderSpec)],
    source: &LabeledDigitSet,
    misalign: f64,
    seed: u64,
) -> LabeledDigitSet {
    let mut set = cells(layouts, source.len(), misalign, seed, |i, _| {
        (Some(source.images[i].clone()), source.labels[i])
    });
    set.classes = 10;
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::{BorderStyle, FontGlyphs};

    #[test]
    fn blank_set_is_balanced_and_separable_by_ink() {
        let layouts = vec![
            (FormTemplate::form1(), RenderSpec::clean(BorderStyle::DarkJoined, false)),
            (FormTemplate::form2(), RenderSpec::clean(BorderStyle::LightSeparated, true)),
        ];
        let set = blank_cell_set(&layouts, 40, &FontGlyphs, 0.0, 1);
        assert_eq!(set.class_counts(), vec![20, 20]);
        for (img, l) in set.images.iter().zip(&set.labels) {
            assert_eq!((img.width(), img.height()), (32, 32));
            // a centred 16×16 window holds ink only for digits
            let centre: f32 = (8..24).flat_map(|y| (8..24).map(move |x| (x, y))).map(|(x, y)| img.get(x, y)).sum();
            assert_eq!(centre > 5.0, *l == 1, "label {l} centre ink {centre}");
        }
        let again = blank_cell_set(&layouts, 40, &FontGlyphs, 0.0, 1);
        assert_eq!(again.images, set.images);
    }
}
