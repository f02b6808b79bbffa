use super::GrayImage;

fn kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f32> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp() as f32
        })
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let reflect = |i: i64, n: i64| -> usize {
        let mut i = i;
        if n == 1 {
            return 0;
        }
        while i < 0 || i >= n {
            i = if i < 0 { -i - 1 } else { 2 * n - i - 1 };
        }
        i as usize
    };

    let mut tmp = vec![0.0f32; w * h];
    let mut padded = vec![0.0f32; w + 2 * r as usize];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[reflect(i as i64 - r, w as i64)];
        }
        let out = &mut tmp[y * w..(y + 1) * w];
        for (j, kv) in k.iter().enumerate() {
            for (d, s) in out.iter_mut().zip(&padded[j..j + w]) {
                *d += kv * s;
            }
        }
    }

    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        let yi = y as i64;
        let dst = &mut out[y * w..(y + 1) * w];
        for (j, kv) in k.iter().enumerate() {
            let sy = reflect(yi + j as i64 - r, h as i64);
            let srow = &tmp[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += kv * s;
            }
        }
    }
    GrayImage::from_vec(w, h, out).expect("dimensions preserved")
}

/// 2×2 box average; odd trailing rows/columns are dropped.
pub fn downsample_half(img: &GrayImage) -> GrayImage {
    let (w, h) = ((img.width() / 2).max(1), (img.height() / 2).max(1));
    if img.width() < 2 || img.height() < 2 {
        return img.clone();
    }
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s = img.get(2 * x, 2 * y)
                + img.get(2 * x + 1, 2 * y)
                + img.get(2 * x, 2 * y + 1)
                + img.get(2 * x + 1, 2 * y + 1);
            data.push(s / 4.0);
        }
    }
    GrayImage::from_vec(w, h, data).expect("dimensions preserved")
}
