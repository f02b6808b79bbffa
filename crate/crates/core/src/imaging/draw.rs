use super::GrayImage;

/// Darkens the pixels of `[x0, x1) × [y0, y1)` to at most `value`.
pub fn fill_rect(img: &mut GrayImage, x0: i64, y0: i64, x1: i64, y1: i64, value: f32) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, x1) = (x0.max(0), x1.min(w));
    let (y0, y1) = (y0.max(0), y1.min(h));
    for y in y0..y1 {
        for x in x0..x1 {
            let (xu, yu) = (x as usize, y as usize);
            let cur = img.get(xu, yu);
            img.set(xu, yu, cur.min(value));
        }
    }
}

/// Outline of thickness `t` drawn just outside the box `[x0, x1) × [y0, y1)`.
pub fn stroke_rect(img: &mut GrayImage, x0: i64, y0: i64, x1: i64, y1: i64, t: i64, value: f32) {
    fill_rect(img, x0 - t, y0 - t, x1 + t, y0, value);
    fill_rect(img, x0 - t, y1, x1 + t, y1 + t, value);
    fill_rect(img, x0 - t, y0, x0, y1, value);
    fill_rect(img, x1, y0, x1 + t, y1, value);
}

/// Anti-aliased-free thick segment: stamps a `t × t` square along the line.
pub fn draw_line(img: &mut GrayImage, from: (f64, f64), to: (f64, f64), t: f64, value: f32) {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let steps = dx.abs().max(dy.abs()).ceil().max(1.0) as usize;
    let half = t / 2.0;
    for i in 0..=steps {
        let s = i as f64 / steps as f64;
        let (cx, cy) = (from.0 + dx * s, from.1 + dy * s);
        fill_rect(
            img,
            (cx - half).round() as i64,
            (cy - half).round() as i64,
            (cx + half).round() as i64,
            (cy + half).round() as i64,
            value,
        );
    }
}
