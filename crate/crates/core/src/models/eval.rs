use crate::nn::Tensor;

/// Argmax with ties resolved toward the smaller class index.
pub fn argmax(row: &[f32]) -> (usize, f32) {
    let mut best = (0, row[0]);
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

pub fn accuracy_from_probs(probs: &Tensor<f32>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = (0..labels.len())
        .filter(|&i| argmax(probs.row(i)).0 == labels[i])
        .count();
    hits as f64 / labels.len() as f64
}

/// Per-class mean embeddings; classes without samples get an empty vector.
pub fn class_centroids(emb: &Tensor<f32>, labels: &[usize], classes: usize) -> Vec<Vec<f32>> {
    let d = emb.row_len();
    let mut sums = vec![vec![0.0f64; d]; classes];
    let mut counts = vec![0usize; classes];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(emb.row(i)) {
            *s += f64::from(*v);
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| {
            if c == 0 {
                Vec::new()
            } else {
                s.into_iter().map(|v| (v / c as f64) as f32).collect()
            }
        })
        .collect()
}

pub fn nearest_centroid_accuracy(emb: &Tensor<f32>, labels: &[usize], centroids: &[Vec<f32>]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = (0..labels.len())
        .filter(|&i| {
            let row = emb.row(i);
            let mut best = (usize::MAX, f32::INFINITY);
            for (c, cen) in centroids.iter().enumerate() {
                if cen.is_empty() {
                    continue;
                }
                let d: f32 = row.iter().zip(cen).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0 == labels[i]
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// Mean Euclidean distance over all same-class pairs and over all
/// different-class pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Separation {
    pub intra: f64,
    pub inter: f64,
}

pub fn embedding_separation(emb: &Tensor<f32>, labels: &[usize]) -> Separation {
    let n = emb.rows();
    let d = emb.row_len();
    let norms: Vec<f32> = (0..n).map(|i| emb.row(i).iter().map(|v| v * v).sum()).collect();
    let (mut intra, mut inter) = ((0.0f64, 0u64), (0.0f64, 0u64));
    const BLOCK: usize = 256;
    let mut gram = vec![0.0f32; BLOCK * n];
    for start in (0..n).step_by(BLOCK) {
        let rows = BLOCK.min(n - start);
        let a = &emb.values()[start * d..(start + rows) * d];
        crate::nn::Real::gemm(
            rows,
            d,
            n,
            1.0,
            a,
            d as isize,
            1,
            emb.values(),
            1,
            d as isize,
            0.0,
            &mut gram[..rows * n],
            n as isize,
            1,
        );
        for r in 0..rows {
            let i = start + r;
            for j in i + 1..n {
                let sq = (norms[i] + norms[j] - 2.0 * gram[r * n + j]).max(0.0);
                let dist = f64::from(sq.sqrt());
                let slot = if labels[i] == labels[j] { &mut intra } else { &mut inter };
                slot.0 += dist;
                slot.1 += 1;
            }
        }
    }
    Separation {
        intra: intra.0 / intra.1.max(1) as f64,
        inter: inter.0 / inter.1.max(1) as f64,
    }
}
