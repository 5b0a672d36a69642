//! Algebraic curvature tensors on ℝⁿ with the standard inner product.
//!
//! A tensor is stored through its action on two-forms: the symmetric
//! `N × N` matrix `A[(i,j),(k,l)] = R(i,j,k,l)` over index pairs `i < j`,
//! `N = n(n−1)/2`, packed as its upper triangle. Antisymmetry in each pair and
//! pair symmetry therefore hold exactly by construction; only the first
//! Bianchi identity has to be checked or enforced.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Structural tolerance used for symmetry and Bianchi checks (relative to max-norm).
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Tolerance for derived identities.
pub const DERIVED_TOL: f64 = 1e-10;

/// Number of index pairs `i < j` in dimension `n`.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of the pair `(i, j)`, `i < j`, in lexicographic order.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Inverse of [`pair_index`].
pub fn pair_at(n: usize, a: usize) -> (usize, usize) {
    let mut rest = a;
    for i in 0..n {
        let row = n - i - 1;
        if rest < row {
            return (i, i + 1 + rest);
        }
        rest -= row;
    }
    panic!("pair index {a} out of range for n = {n}");
}

/// All pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

#[inline]
fn packed_index(npairs: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * npairs - a * a.saturating_sub(1) / 2 + (b - a)
}

/// Components of the two-form `x ∧ y` in the pair basis: `x_i y_j − x_j y_i`.
pub fn bivector(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(pair_count(n));
    for i in 0..n {
        for j in i + 1..n {
            out.push(x[i] * y[j] - x[j] * y[i]);
        }
    }
    out
}

/// How [`make_tensor`] treats entries that violate the first Bianchi identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BianchiMode {
    /// Reject with [`Error::BianchiViolation`].
    #[default]
    Strict,
    /// Orthogonally project onto the Bianchi-satisfying subspace.
    Project,
}

/// A single `(i, j, k, l, value)` component.
pub type Entry = (usize, usize, usize, usize, f64);

#[derive(Debug, Clone)]
pub struct CurvatureTensor {
    n: usize,
    data: Vec<f64>,
    full: OnceLock<Arc<Vec<f64>>>,
}

impl PartialEq for CurvatureTensor {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.data == other.data
    }
}

/// Result of [`make_tensor`].
#[derive(Debug, Clone)]
pub struct Assembled {
    pub tensor: CurvatureTensor,
    /// Bianchi residual of the orbit-completed entries before any projection.
    pub bianchi_residual: f64,
    pub projected: bool,
}

/// Builds a tensor from a list of components, completing symmetry orbits.
pub fn make_tensor(n: usize, entries: &[Entry], mode: BianchiMode) -> Result<Assembled> {
    if n < 2 {
        return Err(Error::WrongDimension {
            expected: "n >= 2".into(),
            got: n,
        });
    }
    let npairs = pair_count(n);
    let mut slots: Vec<Option<(Entry, f64)>> = vec![None; npairs * (npairs + 1) / 2];
    let mut data = vec![0.0; npairs * (npairs + 1) / 2];
    let agree = |a: f64, b: f64| (a - b).abs() <= STRUCTURAL_TOL * 1f64.max(a.abs()).max(b.abs());

    for &entry in entries {
        let (i, j, k, l, value) = entry;
        if i >= n || j >= n || k >= n || l >= n {
            return Err(Error::IndexOutOfRange { n, i, j, k, l });
        }
        if i == j || k == l {
            // The orbit contains the negative of this component.
            if !agree(value, 0.0) {
                return Err(Error::SymmetryConflict {
                    first: entry,
                    second: (j, i, k, l, -value),
                });
            }
            continue;
        }
        let mut sign = 1.0;
        let (pi, pj) = if i < j { (i, j) } else { sign = -sign; (j, i) };
        let (pk, pl) = if k < l { (k, l) } else { sign = -sign; (l, k) };
        let idx = packed_index(npairs, pair_index(n, pi, pj), pair_index(n, pk, pl));
        let canonical = sign * value;
        match slots[idx] {
            Some((prev, prev_canonical)) if !agree(prev_canonical, canonical) => {
                return Err(Error::SymmetryConflict {
                    first: prev,
                    second: entry,
                });
            }
            Some(_) => {}
            None => {
                slots[idx] = Some((entry, canonical));
                data[idx] = canonical;
            }
        }
    }

    let mut tensor = CurvatureTensor::from_packed(n, data);
    let residual = tensor.bianchi_residual();
    let tolerance = STRUCTURAL_TOL * tensor.max_norm().max(f64::MIN_POSITIVE);
    let mut projected = false;
    if residual > tolerance {
        match mode {
            BianchiMode::Strict => return Err(Error::BianchiViolation { residual, tolerance }),
            BianchiMode::Project => {
                tensor = tensor.bianchi_projected();
                projected = true;
            }
        }
    }
    Ok(Assembled {
        tensor,
        bianchi_residual: residual,
        projected,
    })
}

impl CurvatureTensor {
    pub fn zeros(n: usize) -> Self {
        let npairs = pair_count(n);
        Self::from_packed(n, vec![0.0; npairs * (npairs + 1) / 2])
    }

    pub(crate) fn from_packed(n: usize, data: Vec<f64>) -> Self {
        let npairs = pair_count(n);
        assert_eq!(data.len(), npairs * (npairs + 1) / 2, "packed length mismatch");
        Self {
            n,
            data,
            full: OnceLock::new(),
        }
    }

    /// Builds a tensor from its symmetric pair matrix. The upper triangle is used.
    pub fn from_pair_matrix(n: usize, matrix: &DMatrix<f64>) -> Self {
        let npairs = pair_count(n);
        assert_eq!(matrix.nrows(), npairs);
        assert_eq!(matrix.ncols(), npairs);
        let mut data = Vec::with_capacity(npairs * (npairs + 1) / 2);
        for a in 0..npairs {
            for b in a..npairs {
                data.push(matrix[(a, b)]);
            }
        }
        Self::from_packed(n, data)
    }

    /// Builds a tensor by evaluating `f(i,j,k,l)` on canonical representatives.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let ps = pairs(n);
        let mut data = Vec::with_capacity(ps.len() * (ps.len() + 1) / 2);
        for (a, &(i, j)) in ps.iter().enumerate() {
            for &(k, l) in &ps[a..] {
                data.push(f(i, j, k, l));
            }
        }
        Self::from_packed(n, data)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn npairs(&self) -> usize {
        pair_count(self.n)
    }

    pub(crate) fn packed(&self) -> &[f64] {
        &self.data
    }

    /// Pair-matrix entry `A[a][b]`.
    #[inline]
    pub fn pair_entry(&self, a: usize, b: usize) -> f64 {
        self.data[packed_index(self.npairs(), a, b)]
    }

    pub fn pair_matrix(&self) -> DMatrix<f64> {
        let np = self.npairs();
        DMatrix::from_fn(np, np, |a, b| self.pair_entry(a, b))
    }

    /// Component `R(i,j,k,l)` in the standard basis.
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        if i == j || k == l {
            return 0.0;
        }
        let mut sign = 1.0;
        let (i, j) = if i < j { (i, j) } else { sign = -sign; (j, i) };
        let (k, l) = if k < l { (k, l) } else { sign = -sign; (l, k) };
        sign * self.pair_entry(pair_index(self.n, i, j), pair_index(self.n, k, l))
    }

    /// Canonical representatives `(i,j,k,l,value)` with `i<j`, `k<l`,
    /// `(i,j) ≤ (k,l)`, in lexicographic order.
    pub fn canonical_entries(&self) -> Vec<Entry> {
        let ps = pairs(self.n);
        let mut out = Vec::with_capacity(self.data.len());
        let mut it = self.data.iter();
        for (a, &(i, j)) in ps.iter().enumerate() {
            for &(k, l) in &ps[a..] {
                out.push((i, j, k, l, *it.next().unwrap()));
            }
        }
        out
    }

    /// Dense `n⁴` expansion, row-major in `(i,j,k,l)`. Computed once and cached.
    pub fn full(&self) -> &[f64] {
        self.full.get_or_init(|| {
            let n = self.n;
            let mut out = vec![0.0; n * n * n * n];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            out[((i * n + j) * n + k) * n + l] = self.get(i, j, k, l);
                        }
                    }
                }
            }
            Arc::new(out)
        })
    }

    /// `y = A x` for a vector `x` in the pair basis.
    pub fn apply_pairs(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_pairs_into(x, &mut y);
        y
    }

    pub(crate) fn apply_pairs_into(&self, x: &[f64], y: &mut [f64]) {
        let np = self.npairs();
        debug_assert_eq!(x.len(), np);
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut idx = 0;
        for a in 0..np {
            let xa = x[a];
            let mut acc = self.data[idx] * xa;
            idx += 1;
            for b in a + 1..np {
                let v = self.data[idx];
                idx += 1;
                acc += v * x[b];
                y[b] += v * xa;
            }
            y[a] += acc;
        }
    }

    /// `R(x, y, z, w)` for arbitrary vectors.
    pub fn eval(&self, x: &[f64], y: &[f64], z: &[f64], w: &[f64]) -> f64 {
        let bxy = bivector(x, y);
        let bzw = bivector(z, w);
        dot(&bxy, &self.apply_pairs(&bzw))
    }

    /// Sectional curvature of the plane spanned by `x` and `y`.
    pub fn sectional(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let xx = dot(x, x);
        let yy = dot(y, y);
        let xy = dot(x, y);
        let gram = xx * yy - xy * xy;
        if gram < 1e-14 * (xx * yy).max(1.0) {
            return Err(Error::DegeneratePlane { gram });
        }
        Ok(self.eval(x, y, x, y) / gram)
    }

    /// `Ric(X,Y) = Σ_k R(X,e_k,Y,e_k)` as an `n × n` matrix.
    pub fn ricci(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut ric = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..n).map(|k| self.get(i, k, j, k)).sum();
                ric[(i, j)] = v;
                ric[(j, i)] = v;
            }
        }
        ric
    }

    pub fn scalar(&self) -> f64 {
        self.ricci().trace()
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Componentwise inner product over all `n⁴` index quadruples.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        let np = self.npairs();
        let mut diag = 0.0;
        let mut off = 0.0;
        let mut idx = 0;
        for a in 0..np {
            for b in a..np {
                let p = self.data[idx] * other.data[idx];
                if a == b {
                    diag += p;
                } else {
                    off += p;
                }
                idx += 1;
            }
        }
        4.0 * diag + 8.0 * off
    }

    /// Frobenius norm over all `n⁴` components.
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_packed(self.n, self.data.iter().map(|v| c * v).collect())
    }

    /// `self + c · other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_packed(
            self.n,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + c * b)
                .collect(),
        )
    }

    /// The three canonical components `(R(ij,kl), R(ik,jl), R(il,jk))` of each
    /// quadruple `i<j<k<l`, whose combination `x − y + z` is the Bianchi sum.
    fn bianchi_triples(&self) -> impl Iterator<Item = ([usize; 3], f64)> + '_ {
        let n = self.n;
        let np = self.npairs();
        (0..n).flat_map(move |i| {
            (i + 1..n).flat_map(move |j| {
                (j + 1..n).flat_map(move |k| {
                    (k + 1..n).map(move |l| {
                        let ix = packed_index(np, pair_index(n, i, j), pair_index(n, k, l));
                        let iy = packed_index(np, pair_index(n, i, k), pair_index(n, j, l));
                        let iz = packed_index(np, pair_index(n, i, l), pair_index(n, j, k));
                        let s = self.data[ix] - self.data[iy] + self.data[iz];
                        ([ix, iy, iz], s)
                    })
                })
            })
        })
    }

    /// Largest absolute first-Bianchi sum over all index quadruples.
    ///
    /// With pair symmetries exact, the cyclic sum vanishes automatically unless
    /// all four indices are distinct, and for `i<j<k<l` it equals
    /// `R(ij,kl) − R(ik,jl) + R(il,jk)` up to sign.
    pub fn bianchi_residual(&self) -> f64 {
        self.bianchi_triples().fold(0.0f64, |m, (_, s)| m.max(s.abs()))
    }

    pub fn satisfies_bianchi(&self, rel_tol: f64) -> bool {
        self.bianchi_residual() <= rel_tol * self.max_norm().max(f64::MIN_POSITIVE)
    }

    /// Orthogonal projection onto the Bianchi-satisfying subspace.
    pub fn bianchi_projected(&self) -> Self {
        let corrections: Vec<_> = self.bianchi_triples().collect();
        let mut data = self.data.clone();
        for ([ix, iy, iz], s) in corrections {
            let d = s / 3.0;
            data[ix] -= d;
            data[iy] += d;
            data[iz] -= d;
        }
        Self::from_packed(self.n, data)
    }

    /// The tensor with all four slots transformed by `q`:
    /// `(q·R)(i,j,k,l) = Σ q_ia q_jb q_kc q_ld R(a,b,c,d)`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Self {
        let n = self.n;
        assert_eq!(q.nrows(), n);
        assert_eq!(q.ncols(), n);
        let ps = pairs(n);
        let np = ps.len();
        let lifted = DMatrix::from_fn(np, np, |row, col| {
            let (i, j) = ps[row];
            let (a, b) = ps[col];
            q[(i, a)] * q[(j, b)] - q[(i, b)] * q[(j, a)]
        });
        let rotated = &lifted * self.pair_matrix() * lifted.transpose();
        let sym = (&rotated + rotated.transpose()) * 0.5;
        Self::from_pair_matrix(n, &sym)
    }
}

impl Add for &CurvatureTensor {
    type Output = CurvatureTensor;
    fn add(self, rhs: Self) -> CurvatureTensor {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &CurvatureTensor {
    type Output = CurvatureTensor;
    fn sub(self, rhs: Self) -> CurvatureTensor {
        self.axpy(-1.0, rhs)
    }
}

impl Neg for &CurvatureTensor {
    type Output = CurvatureTensor;
    fn neg(self) -> CurvatureTensor {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for &CurvatureTensor {
    type Output = CurvatureTensor;
    fn mul(self, c: f64) -> CurvatureTensor {
        self.scaled(c)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `κ(δ_ik δ_jl − δ_il δ_jk)`.
pub fn constant_curvature(n: usize, kappa: f64) -> CurvatureTensor {
    CurvatureTensor::from_fn(n, |i, j, k, l| if (i, j) == (k, l) { kappa } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn pair_index_roundtrip() {
        for n in 2..9 {
            for (a, (i, j)) in pairs(n).into_iter().enumerate() {
                assert_eq!(pair_index(n, i, j), a);
                assert_eq!(pair_at(n, a), (i, j));
            }
        }
    }

    #[test]
    fn packed_layout_matches_canonical_order() {
        let np = 6;
        let mut expected = 0;
        for a in 0..np {
            for b in a..np {
                assert_eq!(packed_index(np, a, b), expected);
                assert_eq!(packed_index(np, b, a), expected);
                expected += 1;
            }
        }
    }

    #[test]
    fn two_dimensional_antisymmetry_is_forced() {
        let t = make_tensor(2, &[(0, 1, 0, 1, 1.0)], BianchiMode::Strict)
            .unwrap()
            .tensor;
        assert_eq!(t.get(0, 1, 1, 0), -1.0);
        assert_eq!(t.get(1, 0, 1, 0), 1.0);
    }

    #[test]
    fn bianchi_consistent_entries_accepted() {
        let built = make_tensor(
            4,
            &[(0, 1, 2, 3, 1.0), (1, 2, 0, 3, -1.0), (2, 0, 1, 3, 0.0)],
            BianchiMode::Strict,
        )
        .unwrap();
        assert_eq!(built.bianchi_residual, 0.0);
        assert!(!built.projected);
    }

    #[test]
    fn lone_mixed_component_violates_bianchi() {
        let err = make_tensor(4, &[(0, 1, 2, 3, 1.0)], BianchiMode::Strict).unwrap_err();
        assert!(matches!(err, Error::BianchiViolation { .. }));

        // Oracle: the cyclic sum over the completed orbit, enumerated directly.
        let projected = make_tensor(4, &[(0, 1, 2, 3, 1.0)], BianchiMode::Project).unwrap();
        let t = projected.tensor;
        for (i, j, k, l) in [(0, 1, 2, 3), (0, 2, 1, 3), (1, 2, 0, 3), (3, 2, 1, 0)] {
            let s = t.get(i, j, k, l) + t.get(j, k, i, l) + t.get(k, i, j, l);
            assert!(s.abs() < 1e-15);
        }
        assert!((projected.bianchi_residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conflicting_duplicates_rejected() {
        let err = make_tensor(
            3,
            &[(0, 1, 0, 1, 1.0), (1, 0, 1, 0, 2.0)],
            BianchiMode::Strict,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SymmetryConflict { .. }));
        let err = make_tensor(3, &[(0, 0, 1, 2, 0.5)], BianchiMode::Strict).unwrap_err();
        assert!(matches!(err, Error::SymmetryConflict { .. }));
        // Consistent duplicate through pair swap and sign flip.
        make_tensor(
            3,
            &[(0, 1, 0, 2, 0.3), (2, 0, 1, 0, 0.3)],
            BianchiMode::Strict,
        )
        .unwrap();
    }

    #[test]
    fn out_of_range_index_rejected() {
        let err = make_tensor(3, &[(0, 3, 0, 1, 1.0)], BianchiMode::Strict).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { .. }));
    }

    #[test]
    fn constant_curvature_contractions() {
        for n in 2..7 {
            let t = constant_curvature(n, 1.5);
            let ric = t.ricci();
            for i in 0..n {
                for j in 0..n {
                    let expected = if i == j { (n - 1) as f64 * 1.5 } else { 0.0 };
                    assert!((ric[(i, j)] - expected).abs() < 1e-14);
                }
            }
            assert!((t.scalar() - (n * (n - 1)) as f64 * 1.5).abs() < 1e-12);
        }
        let z = CurvatureTensor::zeros(4);
        assert_eq!(z.scalar(), 0.0);
        assert!(z.ricci().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sectional_basis_examples() {
        let t = constant_curvature(3, 1.0);
        let e1 = unit(3, 0);
        let e2 = unit(3, 1);
        assert!((t.sectional(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let two_e1: Vec<f64> = e1.iter().map(|v| 2.0 * v).collect();
        assert!((t.sectional(&two_e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            t.sectional(&e1, &two_e1),
            Err(Error::DegeneratePlane { .. })
        ));
    }

    #[test]
    fn full_expansion_matches_get_and_norm() {
        let t = make_tensor(
            4,
            &[(0, 1, 0, 1, 2.0), (0, 2, 1, 3, 0.5), (0, 3, 1, 2, 0.5), (0, 1, 2, 3, 0.0)],
            BianchiMode::Project,
        )
        .unwrap()
        .tensor;
        let full = t.full();
        let norm2: f64 = full.iter().map(|v| v * v).sum();
        assert!((norm2.sqrt() - t.norm()).abs() < 1e-12);
        assert_eq!(full[((1 * 4 + 0) * 4 + 1) * 4 + 0], t.get(1, 0, 1, 0));
    }
}
