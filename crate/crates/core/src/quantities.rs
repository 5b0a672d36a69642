//! Frame-based curvature quantities: isotropic curvature and its λ/μ-weighted
//! variants, the complexified evaluation `R(ζ,η,ζ̄,η̄)`, and the curvature
//! operator on two-forms.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ComplexVector, Frame4};
use crate::tensor::{bivector, dot, CurvatureTensor};

/// Admissible interval for the weights λ, μ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaRange {
    /// `[0, 1]`
    #[default]
    Unit,
    /// `[−1, 1]`
    Symmetric,
}

impl LambdaRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            LambdaRange::Unit => (0.0, 1.0),
            LambdaRange::Symmetric => (-1.0, 1.0),
        }
    }

    fn check(self, value: f64) -> Result<()> {
        let (lo, hi) = self.bounds();
        if value.is_finite() && value >= lo && value <= hi {
            Ok(())
        } else {
            Err(Error::RangeViolation { value, lo, hi })
        }
    }
}

/// The five frame components entering every isotropic-type quantity
/// (frame indices 1-based as in `R₁₃₁₃`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameValues {
    pub r1313: f64,
    pub r1414: f64,
    pub r2323: f64,
    pub r2424: f64,
    pub r1234: f64,
}

impl FrameValues {
    pub fn isotropic(&self) -> f64 {
        self.r1313 + self.r1414 + self.r2323 + self.r2424 - 2.0 * self.r1234
    }

    pub fn pic1(&self, lambda: f64) -> f64 {
        self.r1313 + lambda * lambda * self.r1414 + self.r2323 + lambda * lambda * self.r2424
            - 2.0 * lambda * self.r1234
    }

    pub fn pic2(&self, lambda: f64, mu: f64) -> f64 {
        let l2 = lambda * lambda;
        let m2 = mu * mu;
        self.r1313 + l2 * self.r1414 + m2 * self.r2323 + l2 * m2 * self.r2424
            - 2.0 * lambda * mu * self.r1234
    }

    /// Exact minimum of the PIC1 quadratic in λ over the range.
    pub fn min_pic1(&self, range: LambdaRange) -> (f64, f64) {
        let (lo, hi) = range.bounds();
        min_quadratic(
            self.r1414 + self.r2424,
            -2.0 * self.r1234,
            self.r1313 + self.r2323,
            lo,
            hi,
        )
    }

    /// Minimum of the PIC2 biquadratic over the range square: `(λ, μ, value)`.
    pub fn min_pic2(&self, range: LambdaRange) -> (f64, f64, f64) {
        min_pic2_weights(self, range)
    }
}

/// Minimizes `a x² + b x + c` over `[lo, hi]`: `(argmin, min)`. Ties keep the
/// first candidate in the order `lo, hi, interior`.
pub fn min_quadratic(a: f64, b: f64, c: f64, lo: f64, hi: f64) -> (f64, f64) {
    let f = |x: f64| (a * x + b) * x + c;
    let mut best = (lo, f(lo));
    let fh = f(hi);
    if fh < best.1 {
        best = (hi, fh);
    }
    if a > 0.0 {
        let x = -b / (2.0 * a);
        if x > lo && x < hi {
            let fx = f(x);
            if fx < best.1 {
                best = (x, fx);
            }
        }
    }
    best
}

const ALTERNATION_MAX: usize = 200;
const GRID_FALLBACK: usize = 33;

fn alternate(v: &FrameValues, lo: f64, hi: f64, mut lambda: f64, mut mu: f64) -> (f64, f64, f64, bool) {
    let mut value = v.pic2(lambda, mu);
    for _ in 0..ALTERNATION_MAX {
        let m2 = mu * mu;
        let (l, _) = min_quadratic(
            v.r1414 + m2 * v.r2424,
            -2.0 * mu * v.r1234,
            v.r1313 + m2 * v.r2323,
            lo,
            hi,
        );
        let l2 = l * l;
        let (m, _) = min_quadratic(
            v.r2323 + l2 * v.r2424,
            -2.0 * l * v.r1234,
            v.r1313 + l2 * v.r1414,
            lo,
            hi,
        );
        let next = v.pic2(l, m);
        let moved = (l - lambda).abs().max((m - mu).abs());
        if next <= value {
            lambda = l;
            mu = m;
            value = next;
        }
        if moved < 1e-15 {
            return (lambda, mu, value, true);
        }
    }
    (lambda, mu, value, false)
}

/// Alternating exact one-variable minimizations started from the corners and
/// the centre of the box; a dense grid seeds one more run if any alternation
/// fails to settle.
fn min_pic2_weights(v: &FrameValues, range: LambdaRange) -> (f64, f64, f64) {
    let (lo, hi) = range.bounds();
    let mid = 0.5 * (lo + hi);
    let starts = [(hi, hi), (lo, lo), (hi, lo), (lo, hi), (mid, mid)];
    let mut best = (lo, lo, f64::INFINITY);
    let mut settled = true;
    for (l0, m0) in starts {
        let (l, m, val, ok) = alternate(v, lo, hi, l0, m0);
        settled &= ok;
        if val < best.2 {
            best = (l, m, val);
        }
    }
    if !settled {
        let step = (hi - lo) / (GRID_FALLBACK - 1) as f64;
        let mut grid_best = (lo, lo, f64::INFINITY);
        for a in 0..GRID_FALLBACK {
            for b in 0..GRID_FALLBACK {
                let (l, m) = (lo + a as f64 * step, lo + b as f64 * step);
                let val = v.pic2(l, m);
                if val < grid_best.2 {
                    grid_best = (l, m, val);
                }
            }
        }
        let (l, m, val, _) = alternate(v, lo, hi, grid_best.0, grid_best.1);
        if val < best.2 {
            best = (l, m, val);
        }
    }
    best
}

/// Bivectors and their images under the pair matrix for the six frame pairs
/// `13, 14, 23, 24, 12, 34`.
pub(crate) struct FrameContraction {
    pub b: [Vec<f64>; 6],
    pub y: [Vec<f64>; 6],
}

/// Frame vector indices of the six pairs, in the order used by [`FrameContraction`].
pub(crate) const FRAME_PAIRS: [(usize, usize); 6] = [(0, 2), (0, 3), (1, 2), (1, 3), (0, 1), (2, 3)];

impl FrameContraction {
    pub fn new(r: &CurvatureTensor, rows: &[&[f64]; 4]) -> Self {
        let b: [Vec<f64>; 6] =
            std::array::from_fn(|s| bivector(rows[FRAME_PAIRS[s].0], rows[FRAME_PAIRS[s].1]));
        let y = std::array::from_fn(|s| r.apply_pairs(&b[s]));
        Self { b, y }
    }

    pub fn values(&self) -> FrameValues {
        FrameValues {
            r1313: dot(&self.b[0], &self.y[0]),
            r1414: dot(&self.b[1], &self.y[1]),
            r2323: dot(&self.b[2], &self.y[2]),
            r2424: dot(&self.b[3], &self.y[3]),
            r1234: dot(&self.b[4], &self.y[5]),
        }
    }

    /// Euclidean gradient (4 × n, row-major) of
    /// `c₀R₁₃₁₃ + c₁R₁₄₁₄ + c₂R₂₃₂₃ + c₃R₂₄₂₄ + c₄R₁₂₃₄` with respect to the
    /// frame vectors.
    pub fn gradient(&self, rows: &[&[f64]; 4], coef: [f64; 5], grad: &mut [f64]) {
        let n = rows[0].len();
        grad.iter_mut().for_each(|g| *g = 0.0);
        for s in 0..4 {
            if coef[s] != 0.0 {
                add_pair_gradient(&self.y[s], 2.0 * coef[s], FRAME_PAIRS[s], rows, n, grad);
            }
        }
        if coef[4] != 0.0 {
            add_pair_gradient(&self.y[5], coef[4], FRAME_PAIRS[4], rows, n, grad);
            add_pair_gradient(&self.y[4], coef[4], FRAME_PAIRS[5], rows, n, grad);
        }
    }
}

/// Adds the gradient of `scale · dᵀ(u_a ∧ u_b)` to the rows `a` and `b`.
pub(crate) fn add_pair_gradient(
    d: &[f64],
    scale: f64,
    (a, b): (usize, usize),
    rows: &[&[f64]],
    n: usize,
    grad: &mut [f64],
) {
    let u = rows[a];
    let v = rows[b];
    let mut idx = 0;
    for i in 0..n {
        for j in i + 1..n {
            let w = scale * d[idx];
            idx += 1;
            // D̂_ij = w, D̂_ji = −w; ∂/∂u = D̂ v, ∂/∂v = −D̂ u.
            grad[a * n + i] += w * v[j];
            grad[a * n + j] -= w * v[i];
            grad[b * n + i] -= w * u[j];
            grad[b * n + j] += w * u[i];
        }
    }
}

fn frame_rows(frame: &Frame4) -> [&[f64]; 4] {
    std::array::from_fn(|a| frame.vector(a))
}

fn check_frame(r: &CurvatureTensor, frame: &Frame4) -> Result<()> {
    if r.dim() < 4 {
        return Err(Error::WrongDimension {
            expected: "n >= 4".into(),
            got: r.dim(),
        });
    }
    if frame.dim() != r.dim() {
        return Err(Error::BadFrame {
            reason: format!("frame lives in R^{}, tensor in R^{}", frame.dim(), r.dim()),
        });
    }
    let defect = frame.orthonormality_defect();
    if defect > 1e-10 {
        return Err(Error::BadFrame {
            reason: format!("orthonormality defect {defect:e}"),
        });
    }
    Ok(())
}

/// The five frame components of `R` in `frame`.
pub fn frame_values(r: &CurvatureTensor, frame: &Frame4) -> Result<FrameValues> {
    check_frame(r, frame)?;
    Ok(FrameContraction::new(r, &frame_rows(frame)).values())
}

/// `R₁₃₁₃ + R₁₄₁₄ + R₂₃₂₃ + R₂₄₂₄ − 2R₁₂₃₄` in the given frame.
pub fn isotropic_quantity(r: &CurvatureTensor, frame: &Frame4) -> Result<f64> {
    Ok(frame_values(r, frame)?.isotropic())
}

/// `R₁₃₁₃ + λ²R₁₄₁₄ + R₂₃₂₃ + λ²R₂₄₂₄ − 2λR₁₂₃₄`.
pub fn pic1_quantity(
    r: &CurvatureTensor,
    frame: &Frame4,
    lambda: f64,
    range: LambdaRange,
) -> Result<f64> {
    range.check(lambda)?;
    Ok(frame_values(r, frame)?.pic1(lambda))
}

/// `R₁₃₁₃ + λ²R₁₄₁₄ + μ²R₂₃₂₃ + λ²μ²R₂₄₂₄ − 2λμR₁₂₃₄`.
pub fn pic2_quantity(
    r: &CurvatureTensor,
    frame: &Frame4,
    lambda: f64,
    mu: f64,
    range: LambdaRange,
) -> Result<f64> {
    range.check(lambda)?;
    range.check(mu)?;
    Ok(frame_values(r, frame)?.pic2(lambda, mu))
}

/// `R(ζ, η, ζ̄, η̄)` for the complex-multilinear extension of `R`, evaluated
/// by direct summation over all `n⁴` components.
pub fn complexify_eval(r: &CurvatureTensor, zeta: &ComplexVector, eta: &ComplexVector) -> Result<Complex64> {
    let n = r.dim();
    if n < 4 {
        return Err(Error::WrongDimension {
            expected: "n >= 4".into(),
            got: n,
        });
    }
    if zeta.dim() != n || eta.dim() != n {
        return Err(Error::WrongDimension {
            expected: format!("complex vectors in C^{n}"),
            got: zeta.dim().max(eta.dim()),
        });
    }
    let c = |v: &ComplexVector, i: usize| Complex64::new(v.re[i], v.im[i]);
    let full = r.full();
    let mut lower = vec![Complex64::new(0.0, 0.0); n * n];
    for k in 0..n {
        for l in 0..n {
            lower[k * n + l] = c(zeta, k).conj() * c(eta, l).conj();
        }
    }
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let upper = c(zeta, i) * c(eta, j);
            if upper == Complex64::new(0.0, 0.0) {
                continue;
            }
            let block = &full[(i * n + j) * n * n..(i * n + j + 1) * n * n];
            let inner: Complex64 = block.iter().zip(&lower).map(|(rv, w)| w * *rv).sum();
            total += upper * inner;
        }
    }
    Ok(total)
}

/// Matrix of the curvature operator on the two-form basis `{e_i ∧ e_j : i<j}`
/// (each element of unit norm), normalized so that
/// `φᵀ M φ = Σ_{ijkl} R_ijkl φ^{ij} φ^{kl}`; this is four times the pair matrix.
pub fn operator_matrix(r: &CurvatureTensor) -> DMatrix<f64> {
    r.pair_matrix() * 4.0
}

/// Eigenvalues of [`operator_matrix`] in ascending order with eigenvectors as columns.
pub fn operator_spectrum(r: &CurvatureTensor) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(operator_matrix(r));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&a| eig.eigenvalues[a]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, c| {
        eig.eigenvectors[(i, order[c])]
    });
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::constant_curvature;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_curvature_frame_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = constant_curvature(6, 1.0);
        let f = Frame4::random(6, &mut rng);
        assert!((isotropic_quantity(&r, &f).unwrap() - 4.0).abs() < 1e-12);
        assert!((pic1_quantity(&r, &f, 0.0, LambdaRange::Unit).unwrap() - 2.0).abs() < 1e-12);
        assert!((pic2_quantity(&r, &f, 0.0, 0.0, LambdaRange::Unit).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_collapse_to_isotropic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = crate::models::random_tensor(5, 11, 1.0);
        let f = Frame4::random(5, &mut rng);
        let iso = isotropic_quantity(&r, &f).unwrap();
        let p1 = pic1_quantity(&r, &f, 1.0, LambdaRange::Unit).unwrap();
        let p2 = pic2_quantity(&r, &f, 1.0, 1.0, LambdaRange::Unit).unwrap();
        assert!((iso - p1).abs() < 1e-12);
        assert!((iso - p2).abs() < 1e-12);
        for lambda in [0.0, 0.3, 0.9] {
            let a = pic1_quantity(&r, &f, lambda, LambdaRange::Unit).unwrap();
            let b = pic2_quantity(&r, &f, lambda, 1.0, LambdaRange::Unit).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn range_violations() {
        let r = constant_curvature(4, 1.0);
        let f = Frame4::standard(4);
        assert!(matches!(
            pic1_quantity(&r, &f, 1.5, LambdaRange::Unit),
            Err(Error::RangeViolation { .. })
        ));
        assert!(matches!(
            pic2_quantity(&r, &f, -0.5, 0.5, LambdaRange::Unit),
            Err(Error::RangeViolation { .. })
        ));
        pic2_quantity(&r, &f, -0.5, 0.5, LambdaRange::Symmetric).unwrap();
    }

    #[test]
    fn min_quadratic_cases() {
        assert_eq!(min_quadratic(1.0, -1.0, 0.0, 0.0, 1.0), (0.5, -0.25));
        assert_eq!(min_quadratic(1.0, 1.0, 0.0, 0.0, 1.0), (0.0, 0.0));
        assert_eq!(min_quadratic(-1.0, 0.0, 0.0, 0.0, 1.0), (1.0, -1.0));
        assert_eq!(min_quadratic(0.0, -2.0, 1.0, -1.0, 1.0), (1.0, -1.0));
    }

    #[test]
    fn pic2_weights_match_dense_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..200 {
            let r = crate::models::random_tensor(5, seed, 1.0);
            let f = Frame4::random(5, &mut rng);
            let v = frame_values(&r, &f).unwrap();
            for range in [LambdaRange::Unit, LambdaRange::Symmetric] {
                let (l, m, val) = v.min_pic2(range);
                assert!((v.pic2(l, m) - val).abs() < 1e-14);
                let (lo, hi) = range.bounds();
                let steps = 400;
                let mut grid_min = f64::INFINITY;
                for a in 0..=steps {
                    for b in 0..=steps {
                        let x = lo + (hi - lo) * a as f64 / steps as f64;
                        let y = lo + (hi - lo) * b as f64 / steps as f64;
                        grid_min = grid_min.min(v.pic2(x, y));
                    }
                }
                assert!(val <= grid_min + 1e-12, "seed {seed}: {val} > {grid_min}");
            }
        }
    }

    #[test]
    fn operator_matrix_quadratic_form() {
        let r = crate::models::random_tensor(4, 3, 1.0);
        let m = operator_matrix(&r);
        // φ = e0∧e1 + 2 e2∧e3 as a full antisymmetric array.
        let n = 4;
        let mut phi = vec![0.0; n * n];
        let mut set = |i: usize, j: usize, v: f64| {
            phi[i * n + j] = v;
            phi[j * n + i] = -v;
        };
        set(0, 1, 1.0);
        set(2, 3, 2.0);
        let mut direct = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        direct += r.get(i, j, k, l) * phi[i * n + j] * phi[k * n + l];
                    }
                }
            }
        }
        let x = nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let form = (x.transpose() * &m * &x)[(0, 0)];
        assert!((form - direct).abs() < 1e-12);
    }
}
