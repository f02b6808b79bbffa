use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::RegistrationError;
use crate::imaging::BoundingBox;

const MIN_DET: f64 = 1e-12;

/// Projective map of the plane, stored with `h[2][2] = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0),
        }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, RegistrationError> {
        let s = m[(2, 2)];
        if !s.is_finite() || s.abs() < MIN_DET || m.iter().any(|v| !v.is_finite()) {
            return Err(RegistrationError::DegenerateConfiguration("h22 vanishes".into()));
        }
        let m = m / s;
        if m.determinant().abs() <= MIN_DET {
            return Err(RegistrationError::DegenerateConfiguration("singular homography".into()));
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, RegistrationError> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    #[inline]
    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let m = &self.m;
        let w = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
        (
            (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / w,
            (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / w,
        )
    }

    pub fn inverse(&self) -> Result<Self, RegistrationError> {
        let inv = self
            .m
            .try_inverse()
            .ok_or_else(|| RegistrationError::DegenerateConfiguration("non-invertible homography".into()))?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Result<Self, RegistrationError> {
        Self::from_matrix(self.m * other.m)
    }

    /// Axis-aligned box enclosing the four mapped corners.
    pub fn map_box(&self, b: &BoundingBox) -> Option<BoundingBox> {
        let pts: Vec<(f64, f64)> = b.corners().iter().map(|&p| self.apply(p)).collect();
        if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return None;
        }
        BoundingBox::enclosing(&pts)
    }

    /// Largest absolute entry difference after normalization.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.m - other.m).amax()
    }

    /// Direct linear transform with Hartley normalization: the null vector of
    /// `AᵀA` from a symmetric eigen-decomposition. Needs at least 4 pairs.
    pub fn fit(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<Self, RegistrationError> {
        assert_eq!(src.len(), dst.len(), "correspondence lists differ in length");
        if src.len() < 4 {
            return Err(RegistrationError::DegenerateConfiguration(format!(
                "{} correspondences",
                src.len()
            )));
        }
        let (ts, ns) = normalizer(src)?;
        let (td, nd) = normalizer(dst)?;
        let mut ata = DMatrix::<f64>::zeros(9, 9);
        let mut row = [0.0f64; 9];
        for (&(x, y), &(u, v)) in ns.iter().zip(&nd) {
            for r in [
                [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u],
                [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v],
            ] {
                row.copy_from_slice(&r);
                for i in 0..9 {
                    for j in 0..9 {
                        ata[(i, j)] += row[i] * row[j];
                    }
                }
            }
        }
        let eig = SymmetricEigen::new(ata);
        let k = eig.eigenvalues.imin();
        let h = eig.eigenvectors.column(k);
        let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
        let td_inv = td
            .try_inverse()
            .ok_or_else(|| RegistrationError::DegenerateConfiguration("normalizer".into()))?;
        Self::from_matrix(td_inv * hn * ts)
    }
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(pts: &[(f64, f64)]) -> Result<(Matrix3<f64>, Vec<(f64, f64)>), RegistrationError> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mean_d = pts.iter().map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()).sum::<f64>() / n;
    if mean_d <= 1e-12 {
        return Err(RegistrationError::DegenerateConfiguration("coincident points".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_d;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let mapped = pts
        .iter()
        .map(|&(x, y)| {
            let v = t * Vector3::new(x, y, 1.0);
            (v[0], v[1])
        })
        .collect();
    Ok((t, mapped))
}

impl Serialize for Homography {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Self::from_rows(rows).map_err(serde::de::Error::custom)
    }
}
