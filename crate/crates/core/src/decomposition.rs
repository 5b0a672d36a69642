//! Orthogonal decomposition of a four-dimensional curvature tensor into
//! scalar, traceless-Ricci and Weyl parts, and the Gauss–Bonnet integrand.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::CurvatureTensor;

/// Kulkarni–Nomizu product
/// `(h⊙k)(i,j,k,l) = h_ik k_jl + h_jl k_ik − h_il k_jk − h_jk k_il`.
pub fn kulkarni_nomizu(h: &DMatrix<f64>, k: &DMatrix<f64>) -> CurvatureTensor {
    let n = h.nrows();
    CurvatureTensor::from_fn(n, |a, b, c, d| {
        h[(a, c)] * k[(b, d)] + h[(b, d)] * k[(a, c)] - h[(a, d)] * k[(b, c)] - h[(b, c)] * k[(a, d)]
    })
}

#[derive(Debug, Clone)]
pub struct Dim4Decomposition {
    pub scalar_part: f64,
    pub traceless_ricci: DMatrix<f64>,
    pub weyl: CurvatureTensor,
    /// Full sum `Σ_{ijkl} W_ijkl²`.
    pub weyl_norm_sq: f64,
    /// `scal²/6 − 2|Ric̊|² + |W|²`.
    pub gb_integrand: f64,
}

impl Dim4Decomposition {
    /// `(scal/24) g⊙g`.
    pub fn scalar_tensor(&self) -> CurvatureTensor {
        let g = DMatrix::identity(4, 4);
        kulkarni_nomizu(&g, &g).scaled(self.scalar_part / 24.0)
    }

    /// `½ Ric̊⊙g`.
    pub fn ricci_tensor(&self) -> CurvatureTensor {
        kulkarni_nomizu(&self.traceless_ricci, &DMatrix::identity(4, 4)).scaled(0.5)
    }

    pub fn recompose(&self) -> CurvatureTensor {
        &(&self.scalar_tensor() + &self.ricci_tensor()) + &self.weyl
    }
}

/// `R = (scal/24) g⊙g + ½ Ric̊⊙g + W` for `n = 4`.
pub fn dim4_decompose(r: &CurvatureTensor) -> Result<Dim4Decomposition> {
    if r.dim() != 4 {
        return Err(Error::WrongDimension {
            expected: "n = 4".into(),
            got: r.dim(),
        });
    }
    let scal = r.scalar();
    let traceless_ricci = r.ricci() - DMatrix::identity(4, 4) * (scal / 4.0);
    let mut parts = Dim4Decomposition {
        scalar_part: scal,
        traceless_ricci,
        weyl: CurvatureTensor::zeros(4),
        weyl_norm_sq: 0.0,
        gb_integrand: 0.0,
    };
    parts.weyl = &(r - &parts.scalar_tensor()) - &parts.ricci_tensor();
    parts.weyl_norm_sq = parts.weyl.inner(&parts.weyl);
    let ric0_sq = parts.traceless_ricci.iter().map(|x| x * x).sum::<f64>();
    parts.gb_integrand = scal * scal / 6.0 - 2.0 * ric0_sq + parts.weyl_norm_sq;
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{fubini_study, random_tensor};
    use crate::tensor::constant_curvature;

    #[test]
    fn round_sphere() {
        let d = dim4_decompose(&constant_curvature(4, 1.0)).unwrap();
        assert!((d.scalar_part - 12.0).abs() < 1e-12);
        assert!(d.traceless_ricci.iter().all(|x| x.abs() < 1e-12));
        assert!(d.weyl_norm_sq.abs() < 1e-24);
        assert!((d.gb_integrand - 24.0).abs() < 1e-12);
    }

    #[test]
    fn fubini_study_is_einstein_with_weyl() {
        let d = dim4_decompose(&fubini_study(2)).unwrap();
        assert!(d.traceless_ricci.iter().all(|x| x.abs() < 1e-12));
        assert!(d.weyl_norm_sq > 1.0);
        assert!((d.gb_integrand - (96.0 + d.weyl_norm_sq)).abs() < 1e-10);
    }

    #[test]
    fn random_parts_are_orthogonal_and_recompose() {
        for seed in 0..20 {
            let r = random_tensor(4, seed, 1.0);
            let d = dim4_decompose(&r).unwrap();
            assert!((&d.recompose() - &r).max_norm() < 1e-10);
            assert!(d.traceless_ricci.trace().abs() < 1e-12);
            assert!(d.weyl.ricci().iter().all(|x| x.abs() < 1e-10));
            let (s, e, w) = (d.scalar_tensor(), d.ricci_tensor(), &d.weyl);
            assert!(s.inner(&e).abs() < 1e-10);
            assert!(s.inner(w).abs() < 1e-10);
            assert!(e.inner(w).abs() < 1e-10);
        }
    }

    #[test]
    fn wrong_dimension() {
        assert!(matches!(
            dim4_decompose(&constant_curvature(5, 1.0)),
            Err(Error::WrongDimension { got: 5, .. })
        ));
        let d = dim4_decompose(&CurvatureTensor::zeros(4)).unwrap();
        assert_eq!(d.gb_integrand, 0.0);
    }
}
