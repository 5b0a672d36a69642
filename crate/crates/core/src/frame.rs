//! Orthonormal frames, complex test vectors and Stiefel-manifold helpers.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::dot;

/// Tolerance on inner products for a frame to count as orthonormal.
pub const FRAME_TOL: f64 = 1e-12;

/// An ordered orthonormal `K`-frame in ℝⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Frame<const K: usize> {
    vectors: [Vec<f64>; K],
}

pub type Frame4 = Frame<4>;
/// An orthonormal basis of a 2-plane.
pub type Plane = Frame<2>;

impl<const K: usize> Frame<K> {
    /// Validates orthonormality to [`FRAME_TOL`].
    pub fn new(vectors: [Vec<f64>; K]) -> Result<Self> {
        let n = vectors[0].len();
        if n < K {
            return Err(Error::BadFrame {
                reason: format!("{K} orthonormal vectors need n >= {K}, got {n}"),
            });
        }
        if vectors.iter().any(|v| v.len() != n) {
            return Err(Error::BadFrame {
                reason: "vectors have different lengths".into(),
            });
        }
        for a in 0..K {
            for b in a..K {
                let target = if a == b { 1.0 } else { 0.0 };
                let g = dot(&vectors[a], &vectors[b]);
                if (g - target).abs() > FRAME_TOL {
                    return Err(Error::BadFrame {
                        reason: format!("<e{},e{}> = {g:e}", a + 1, b + 1),
                    });
                }
            }
        }
        Ok(Self { vectors })
    }

    /// Modified Gram–Schmidt on the given vectors, in order.
    pub fn orthonormalized(vectors: [Vec<f64>; K]) -> Result<Self> {
        let mut vectors = vectors;
        if !orthonormalize_rows(&mut vectors) {
            return Err(Error::BadFrame {
                reason: "vectors are linearly dependent".into(),
            });
        }
        Ok(Self { vectors })
    }

    /// First `K` standard basis vectors of ℝⁿ.
    pub fn standard(n: usize) -> Self {
        assert!(n >= K);
        Self {
            vectors: std::array::from_fn(|a| unit(n, a)),
        }
    }

    /// Haar-distributed random frame.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        assert!(n >= K);
        loop {
            let mut vectors: [Vec<f64>; K] =
                std::array::from_fn(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect());
            if orthonormalize_rows(&mut vectors) {
                return Self { vectors };
            }
        }
    }

    pub(crate) fn from_rows_unchecked(n: usize, rows: &[f64]) -> Self {
        debug_assert_eq!(rows.len(), K * n);
        Self {
            vectors: std::array::from_fn(|a| rows[a * n..(a + 1) * n].to_vec()),
        }
    }

    pub(crate) fn to_rows(&self) -> Vec<f64> {
        self.vectors.iter().flatten().copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vector(&self, a: usize) -> &[f64] {
        &self.vectors[a]
    }

    pub fn vectors(&self) -> &[Vec<f64>; K] {
        &self.vectors
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..K {
            for b in a..K {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot(&self.vectors[a], &self.vectors[b]) - target).abs());
            }
        }
        worst
    }

    /// Reorders or re-signs the vectors: `out[a] = signs[a] · self[order[a]]`.
    pub fn permuted(&self, order: [usize; K], signs: [f64; K]) -> Self {
        Self {
            vectors: std::array::from_fn(|a| {
                self.vectors[order[a]].iter().map(|v| signs[a] * v).collect()
            }),
        }
    }

    /// Applies an orthogonal matrix to every vector.
    pub fn transformed(&self, q: &DMatrix<f64>) -> Self {
        let n = self.dim();
        Self {
            vectors: std::array::from_fn(|a| {
                (0..n)
                    .map(|i| (0..n).map(|j| q[(i, j)] * self.vectors[a][j]).sum())
                    .collect()
            }),
        }
    }

    /// Orthonormal basis of ℝⁿ (as rows) starting with this frame, completed
    /// by Gram–Schmidt over the standard basis vectors in order.
    pub fn completion(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut basis: Vec<Vec<f64>> = self.vectors.to_vec();
        for i in 0..n {
            if basis.len() == n {
                break;
            }
            let mut v = unit(n, i);
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
            }
        }
        basis
    }

    /// Frobenius distance between the orthogonal projectors onto the spans.
    pub fn span_distance(&self, other: &Self) -> f64 {
        // ‖P−Q‖² = 2K − 2 Σ_ab <u_a, v_b>²
        let mut overlap = 0.0;
        for u in &self.vectors {
            for v in &other.vectors {
                let c = dot(u, v);
                overlap += c * c;
            }
        }
        (2.0 * K as f64 - 2.0 * overlap).max(0.0).sqrt()
    }
}

impl<const K: usize> TryFrom<Vec<Vec<f64>>> for Frame<K> {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let vectors: [Vec<f64>; K] = rows.try_into().map_err(|rows: Vec<Vec<f64>>| {
            Error::BadFrame {
                reason: format!("expected {K} vectors, got {}", rows.len()),
            }
        })?;
        // Serialized frames carry 17 significant digits; accept a slightly
        // looser defect and re-orthonormalize.
        let frame = Self { vectors };
        if frame.orthonormality_defect() > 1e-9 {
            return Err(Error::BadFrame {
                reason: format!("orthonormality defect {:e}", frame.orthonormality_defect()),
            });
        }
        Self::orthonormalized(frame.vectors)
    }
}

impl<const K: usize> From<Frame<K>> for Vec<Vec<f64>> {
    fn from(frame: Frame<K>) -> Self {
        frame.vectors.to_vec()
    }
}

pub(crate) fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Modified Gram–Schmidt, run twice for stability. Returns false on rank loss.
pub(crate) fn orthonormalize_rows<V: AsMut<[f64]>>(rows: &mut [V]) -> bool {
    for a in 0..rows.len() {
        for _ in 0..2 {
            for b in 0..a {
                let (head, tail) = rows.split_at_mut(a);
                let u = head[b].as_mut();
                let v = tail[0].as_mut();
                let c = dot(v, u);
                v.iter_mut().zip(u.iter()).for_each(|(x, y)| *x -= c * y);
            }
        }
        let v = rows[a].as_mut();
        let norm = dot(v, v).sqrt();
        if !(norm > 1e-10) {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    true
}

/// Orthonormalizes the `k` rows of a flat row-major `k × n` buffer.
pub(crate) fn orthonormalize_flat(rows: &mut [f64], n: usize) -> bool {
    let mut chunks: Vec<&mut [f64]> = rows.chunks_mut(n).collect();
    orthonormalize_rows(&mut chunks)
}

/// A vector `re + i·im` in the complexified space ℂⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexVector {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVector {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Self {
        assert_eq!(re.len(), im.len());
        Self { re, im }
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.iter().map(|v| -v).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| *v == 0.0)
    }

    /// Complex-bilinear extension of the metric: `g(ζ, η)` without conjugation.
    pub fn bilinear(&self, other: &Self) -> num_complex::Complex64 {
        num_complex::Complex64::new(
            dot(&self.re, &other.re) - dot(&self.im, &other.im),
            dot(&self.re, &other.im) + dot(&self.im, &other.re),
        )
    }

    /// `a·self + b·other` for complex scalars.
    pub fn combine(
        a: num_complex::Complex64,
        x: &Self,
        b: num_complex::Complex64,
        y: &Self,
    ) -> Self {
        let n = x.dim();
        let re = (0..n)
            .map(|i| a.re * x.re[i] - a.im * x.im[i] + b.re * y.re[i] - b.im * y.im[i])
            .collect();
        let im = (0..n)
            .map(|i| a.re * x.im[i] + a.im * x.re[i] + b.re * y.im[i] + b.im * y.re[i])
            .collect();
        Self { re, im }
    }
}

/// Haar-random orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    while !orthonormalize_rows(&mut rows) {
        rows = (0..n)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
    }
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_frames_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 4..9 {
            let f = Frame4::random(n, &mut rng);
            assert!(f.orthonormality_defect() < 1e-14);
            Frame4::new(f.vectors().clone()).unwrap();
        }
    }

    #[test]
    fn non_orthonormal_frame_rejected() {
        let mut v: [Vec<f64>; 4] = Frame4::standard(5).vectors().clone();
        v[2][0] = 1e-6;
        assert!(matches!(Frame4::new(v), Err(Error::BadFrame { .. })));
        let short = [vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0; 3]];
        assert!(Frame4::new(short).is_err());
    }

    #[test]
    fn completion_is_orthonormal_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = Frame4::random(7, &mut rng);
        let basis = f.completion();
        assert_eq!(basis.len(), 7);
        for a in 0..7 {
            for b in 0..7 {
                let t = if a == b { 1.0 } else { 0.0 };
                assert!((dot(&basis[a], &basis[b]) - t).abs() < 1e-13);
            }
        }
        assert_eq!(&basis[0], f.vector(0));
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_orthogonal(6, &mut rng);
        let err = (&q * q.transpose() - DMatrix::identity(6, 6)).abs().max();
        assert!(err < 1e-13);
    }

    #[test]
    fn frame_serde_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Frame4::random(5, &mut rng);
        let text = serde_json::to_string(&f).unwrap();
        let back: Frame4 = serde_json::from_str(&text).unwrap();
        assert!(f.span_distance(&back) < 1e-12);
    }
}
