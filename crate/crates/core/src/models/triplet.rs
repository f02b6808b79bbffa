use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mining {
    /// Semi-hard negatives only.
    SemiHard,
    /// Semi-hard negatives, else the closest in-margin negative.
    HardestInMarginFallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletConfig {
    pub margin: f32,
    pub batch_size: usize,
    pub embedding_dim: usize,
    pub mining: Mining,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            batch_size: 256,
            embedding_dim: super::EMBEDDING_DIM,
            mining: Mining::HardestInMarginFallback,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripletKind {
    SemiHard,
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub kind: TripletKind,
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Pairwise squared distances of the rows of `[N, D]` embeddings.
pub fn squared_distances(emb: &Tensor<f32>) -> Vec<f32> {
    let n = emb.rows();
    let mut d = vec![0.0f32; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(emb.row(i), emb.row(j));
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// `max(‖a−p‖² − ‖a−n‖² + α, 0)`.
pub fn triplet_loss<T: Real>(a: &[T], p: &[T], n: &[T], margin: T) -> T {
    assert!(a.len() == p.len() && a.len() == n.len(), "embedding dimensions differ");
    (sq_dist(a, p) - sq_dist(a, n) + margin).max(T::zero())
}

/// For every ordered anchor-positive pair, all semi-hard negatives
/// (`d_ap < d_an < d_ap + α`); with the fallback policy, a pair without any
/// takes the closest negative with `d_an < d_ap + α`.
pub fn mine_triplets(
    emb: &Tensor<f32>,
    labels: &[usize],
    margin: f32,
    mining: Mining,
) -> Result<Vec<Triplet>, ModelError> {
    let n = emb.rows();
    assert_eq!(labels.len(), n, "one label per embedding");
    let d = squared_distances(emb);
    let mut out = Vec::new();
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            let d_ap = d[a * n + p];
            let before = out.len();
            let mut closest: Option<(usize, f32)> = None;
            for neg in 0..n {
                if labels[neg] == labels[a] {
                    continue;
                }
                let d_an = d[a * n + neg];
                if d_an >= d_ap + margin {
                    continue;
                }
                if d_an > d_ap {
                    out.push(Triplet {
                        anchor: a,
                        positive: p,
                        negative: neg,
                        kind: TripletKind::SemiHard,
                    });
                } else if closest.is_none_or(|(_, best)| d_an < best) {
                    closest = Some((neg, d_an));
                }
            }
            if out.len() == before && mining == Mining::HardestInMarginFallback {
                if let Some((neg, _)) = closest {
                    out.push(Triplet {
                        anchor: a,
                        positive: p,
                        negative: neg,
                        kind: TripletKind::Fallback,
                    });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(ModelError::NoValidTriplets);
    }
    Ok(out)
}

/// Mean loss over `triplets` and its gradient with respect to the
/// embeddings, computed as `S·E` with a sparse-in-spirit coefficient matrix.
pub fn batch_triplet_loss<T: Real>(emb: &Tensor<T>, triplets: &[Triplet], margin: T) -> (T, Tensor<T>) {
    let (n, dim) = (emb.rows(), emb.row_len());
    if triplets.is_empty() {
        return (T::zero(), Tensor::zeros(emb.shape().to_vec()));
    }
    let mut s = vec![0.0f64; n * n];
    let mut total = 0.0f64;
    let c = 2.0 / triplets.len() as f64;
    for t in triplets {
        let (a, p, ng) = (t.anchor, t.positive, t.negative);
        let l = triplet_loss(emb.row(a), emb.row(p), emb.row(ng), margin);
        if l <= T::zero() {
            continue;
        }
        total += l.to_f64().expect("finite loss");
        s[a * n + ng] += c;
        s[a * n + p] -= c;
        s[p * n + p] += c;
        s[p * n + a] -= c;
        s[ng * n + a] += c;
        s[ng * n + ng] -= c;
    }
    let s: Vec<T> = s.into_iter().map(|v| T::from_f64(v).expect("finite")).collect();
    let mut grad = vec![T::zero(); n * dim];
    T::gemm(n, n, dim, T::one(), &s, n as isize, 1, emb.values(), dim as isize, 1, T::zero(), &mut grad, dim as isize, 1);
    (
        T::from_f64(total / triplets.len() as f64).expect("finite"),
        Tensor::new(emb.shape().to_vec(), grad).expect("same shape"),
    )
}

/// Mean triplet loss over every valid `(a, p, n)` role assignment, easy
/// triplets included.
pub fn all_triplets_loss(emb: &Tensor<f32>, labels: &[usize], margin: f32) -> Option<f64> {
    let n = emb.rows();
    let d = squared_distances(emb);
    let (mut sum, mut count) = (0.0f64, 0u64);
    for a in 0..n {
        for p in 0..n {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            let d_ap = d[a * n + p];
            for neg in 0..n {
                if labels[neg] != labels[a] {
                    sum += f64::from((d_ap - d[a * n + neg] + margin).max(0.0));
                    count += 1;
                }
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Checks the selection inequality of every triplet against `emb`.
pub fn triplet_violations(emb: &Tensor<f32>, labels: &[usize], triplets: &[Triplet], margin: f32) -> usize {
    triplets
        .iter()
        .filter(|t| {
            let d_ap = sq_dist(emb.row(t.anchor), emb.row(t.positive));
            let d_an = sq_dist(emb.row(t.anchor), emb.row(t.negative));
            let roles = labels[t.anchor] == labels[t.positive]
                && labels[t.anchor] != labels[t.negative]
                && t.anchor != t.positive;
            let ok = match t.kind {
                TripletKind::SemiHard => d_ap < d_an && d_an < d_ap + margin,
                TripletKind::Fallback => d_an < d_ap + margin,
            };
            !(roles && ok)
        })
        .count()
}
