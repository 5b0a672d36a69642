//! The quadratic reaction term
//! `Q(R)(X,Y,Z,W) = Σ R(X,Y,p,q)R(Z,W,p,q) + 2Σ R(X,p,Z,q)R(Y,p,W,q) − 2Σ R(X,p,W,q)R(Y,p,Z,q)`.

use crate::tensor::{pair_at, pair_count, CurvatureTensor};

/// Contraction-reordered evaluation.
///
/// The first sum is `2A²` in the pair basis. The other two are inner products
/// of the `n × n` slices `B^{ik}_{pq} = R(i,p,k,q)`, collected once in the
/// Gram matrix `G[(i,k),(j,l)] = ⟨B^{ik}, B^{jl}⟩`.
pub fn q_tensor(r: &CurvatureTensor) -> CurvatureTensor {
    let n = r.dim();
    let np = pair_count(n);
    let a = r.pair_matrix();
    let a2 = &a * &a;
    let full = r.full();
    let n2 = n * n;

    // slices[(i*n + k)] is B^{ik} flattened over (p, q).
    let mut slices = vec![0.0; n2 * n2];
    for i in 0..n {
        for p in 0..n {
            for k in 0..n {
                let src = &full[((i * n + p) * n + k) * n..((i * n + p) * n + k + 1) * n];
                let dst = (i * n + k) * n2 + p * n;
                slices[dst..dst + n].copy_from_slice(src);
            }
        }
    }
    let mut gram = vec![0.0; n2 * n2];
    for u in 0..n2 {
        let su = &slices[u * n2..(u + 1) * n2];
        for v in u..n2 {
            let g: f64 = su.iter().zip(&slices[v * n2..(v + 1) * n2]).map(|(x, y)| x * y).sum();
            gram[u * n2 + v] = g;
            gram[v * n2 + u] = g;
        }
    }
    let g = |i: usize, k: usize, j: usize, l: usize| gram[(i * n + k) * n2 + j * n + l];

    let mut data = Vec::with_capacity(np * (np + 1) / 2);
    for x in 0..np {
        let (i, j) = pair_at(n, x);
        for y in x..np {
            let (k, l) = pair_at(n, y);
            data.push(2.0 * a2[(x, y)] + 2.0 * g(i, k, j, l) - 2.0 * g(i, l, j, k));
        }
    }
    CurvatureTensor::from_packed(n, data)
}

/// Direct componentwise summation of the defining formula.
pub fn q_tensor_reference(r: &CurvatureTensor) -> CurvatureTensor {
    let n = r.dim();
    CurvatureTensor::from_fn(n, |x, y, z, w| {
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                s += r.get(x, y, p, q) * r.get(z, w, p, q);
                s += 2.0 * r.get(x, p, z, q) * r.get(y, p, w, q);
                s -= 2.0 * r.get(x, p, w, q) * r.get(y, p, z, q);
            }
        }
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::random_tensor;
    use crate::tensor::constant_curvature;

    #[test]
    fn matches_reference() {
        for n in 2..=6 {
            for seed in 0..5 {
                let r = random_tensor(n, seed, 1.0);
                let fast = q_tensor(&r);
                let slow = q_tensor_reference(&r);
                let scale = slow.max_norm().max(1.0);
                assert!((&fast - &slow).max_norm() <= 1e-12 * scale, "n={n} seed={seed}");
            }
        }
    }

    #[test]
    fn constant_curvature_value() {
        for n in 2..=7 {
            let q = q_tensor(&constant_curvature(n, 1.0));
            assert!((q.get(0, 1, 0, 1) - 2.0 * (n as f64 - 1.0)).abs() < 1e-12);
            assert!((&q - &constant_curvature(n, 2.0 * (n as f64 - 1.0))).max_norm() < 1e-12);
        }
    }

    #[test]
    fn trace_is_twice_ricci_norm() {
        for seed in 0..20 {
            let r = random_tensor(4, seed, 1.0);
            let q = q_tensor(&r);
            let ric = r.ricci();
            let ric_sq: f64 = ric.iter().map(|x| x * x).sum();
            assert!((q.scalar() - 2.0 * ric_sq).abs() < 1e-10);
        }
    }

    #[test]
    fn preserves_bianchi_and_scales_quadratically() {
        let r = random_tensor(5, 3, 1.0);
        let q = q_tensor(&r);
        assert!(q.bianchi_residual() < 1e-10);
        let q3 = q_tensor(&r.scaled(3.0));
        assert!((&q3 - &q.scaled(9.0)).max_norm() < 1e-12 * q3.max_norm());
    }
}
