//! Inward-pointing quantities at the boundary of the isotropic-curvature cone.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::q::q_tensor;
use crate::frame::Frame4;
use crate::quantities::frame_values;
use crate::tensor::CurvatureTensor;

/// Isotropic combination of `Q(R)` in the frame:
/// `Q₁₃₁₃ + Q₁₄₁₄ + Q₂₃₂₃ + Q₂₄₂₄ − 2Q₁₂₃₄`.
pub fn boundary_inward_value(r: &CurvatureTensor, frame: &Frame4) -> Result<f64> {
    frame_values(r, frame)?;
    Ok(frame_values(&q_tensor(r), frame)?.isotropic())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyInequality {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs`.
    pub residual: f64,
    /// Part of `lhs − rhs` with both summation indices inside the frame.
    pub step1_block: f64,
    /// Part with exactly one index inside the frame (both orderings).
    pub step2_block: f64,
    /// Part with both indices in the orthogonal complement.
    pub step3_block: f64,
    /// `R₁₂₁₃ + R₁₂₄₂ + R₃₄₁₃ + R₃₄₄₂` and `R₁₂₁₄ + R₁₂₂₃ + R₃₄₁₄ + R₃₄₂₃`.
    pub step1_residuals: [f64; 2],
    /// Largest first-variation residual for rotating a frame vector towards
    /// the complement, e.g. `R₁₃₃q + R₁₄₄q + R₄₃₂q`; 0 when `n = 4`.
    pub step2_residual: f64,
}

/// Components of `R` in the completed basis whose first four vectors are the frame.
fn in_frame_basis(r: &CurvatureTensor, frame: &Frame4) -> CurvatureTensor {
    let basis = frame.completion();
    let n = r.dim();
    let q = DMatrix::from_fn(n, n, |a, i| basis[a][i]);
    r.rotated(&q)
}

/// Both sides of the key inequality
/// `Σ(R₁p1q+R₂p2q)(R₃p3q+R₄p4q) − ΣR₁₂pqR₃₄pq
///   ≥ Σ(R₁p3q+R₂p4q)(R₃p1q+R₄p2q) + Σ(R₁p4q−R₂p3q)(R₄p1q−R₃p2q)`,
/// summed over a completion of the frame, with its block decomposition and
/// the first-variation residuals that vanish at an isotropic minimizer.
pub fn key_inequality_residual(r: &CurvatureTensor, frame: &Frame4) -> Result<KeyInequality> {
    frame_values(r, frame)?;
    let n = r.dim();
    let t = in_frame_basis(r, frame);
    let full = t.full();
    let g = |a: usize, b: usize, c: usize, d: usize| full[((a * n + b) * n + c) * n + d];

    let (mut lhs, mut rhs) = (0.0, 0.0);
    let mut blocks = [0.0; 3];
    for p in 0..n {
        for q in 0..n {
            let l = (g(0, p, 0, q) + g(1, p, 1, q)) * (g(2, p, 2, q) + g(3, p, 3, q)) - g(0, 1, p, q) * g(2, 3, p, q);
            let rr = (g(0, p, 2, q) + g(1, p, 3, q)) * (g(2, p, 0, q) + g(3, p, 1, q))
                + (g(0, p, 3, q) - g(1, p, 2, q)) * (g(3, p, 0, q) - g(2, p, 1, q));
            lhs += l;
            rhs += rr;
            blocks[usize::from(p >= 4) + usize::from(q >= 4)] += l - rr;
        }
    }

    let step1_residuals = [
        g(0, 1, 0, 2) + g(0, 1, 3, 1) + g(2, 3, 0, 2) + g(2, 3, 3, 1),
        g(0, 1, 0, 3) + g(0, 1, 1, 2) + g(2, 3, 0, 3) + g(2, 3, 1, 2),
    ];
    let mut step2_residual = 0.0f64;
    for q in 4..n {
        let e1 = g(0, 2, 2, q) + g(0, 3, 3, q) + g(3, 2, 1, q);
        let e2 = g(q, 2, 1, 2) + g(q, 3, 1, 3) - g(0, q, 2, 3);
        let e3 = g(0, q, 0, 2) + g(1, q, 1, 2) - g(0, 1, q, 3);
        let e4 = g(0, q, 0, 3) + g(1, q, 1, 3) - g(0, 1, 2, q);
        for v in [e1, e2, e3, e4] {
            step2_residual = step2_residual.max(v.abs());
        }
    }
    Ok(KeyInequality {
        lhs,
        rhs,
        residual: lhs - rhs,
        step1_block: blocks[0],
        step2_block: blocks[1],
        step3_block: blocks[2],
        step1_residuals,
        step2_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::product;
    use crate::tensor::constant_curvature;

    #[test]
    fn round_sphere_diagnostic() {
        let r = constant_curvature(5, 1.0);
        let f = Frame4::standard(5);
        // Q = 2(n−1)·I, whose isotropic value is 4·2(n−1).
        assert!((boundary_inward_value(&r, &f).unwrap() - 32.0).abs() < 1e-12);
        let k = key_inequality_residual(&r, &f).unwrap();
        assert!(k.step1_residuals.iter().all(|v| v.abs() < 1e-14));
        assert!(k.step2_residual < 1e-14);
        assert!((k.step1_block + k.step2_block + k.step3_block - k.residual).abs() < 1e-12);
    }

    #[test]
    fn split_frame_on_product_of_spheres() {
        let s2 = constant_curvature(2, 1.0);
        let r = product(&s2, &s2);
        let f = Frame4::standard(4);
        assert!(boundary_inward_value(&r, &f).unwrap() >= -1e-9);
        let k = key_inequality_residual(&r, &f).unwrap();
        assert!(k.step1_residuals.iter().all(|v| v.abs() < 1e-14));
        assert!(k.residual >= 0.0);
    }
}
