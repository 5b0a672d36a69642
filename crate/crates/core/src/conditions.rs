//! Cone membership and margins for the curvature conditions: sectional
//! pinching, isotropic curvature and its PIC1/PIC2 strengthenings, curvature
//! operator positivity, and the Ricci / scalar-weighted pinching conditions.
//!
//! Frame-type margins are global minima over orthonormal frames found by
//! [`crate::optimize`]; weights λ, μ are minimized exactly for each frame.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ComplexVector, Frame, Frame4, Plane};
use crate::optimize::{minimize_frames, restart_rng, FrameObjective, MultiStartOutcome, OptimizerSettings};
use crate::quantities::{
    add_pair_gradient, complexify_eval, frame_values, operator_spectrum, FrameContraction, LambdaRange,
};
use crate::tensor::{bivector, dot, CurvatureTensor};

/// Relative threshold for strict membership: margin > `STRICTNESS` × max-norm.
pub const STRICTNESS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConeId {
    SecNonneg,
    Pic,
    Pic1,
    Pic2,
    TwoPositive,
    OperatorNonneg,
    PointwisePinched(f64),
    RicPinched(f64),
    Pic1ScalMargin(f64),
    /// Always evaluated over `λ, μ ∈ [−1, 1]`.
    Pic2ScalMargin(f64),
}

impl ConeId {
    pub fn validate(self) -> Result<Self> {
        match self {
            ConeId::PointwisePinched(d) if !(d > 0.0 && d <= 1.0) => {
                Err(Error::SpecInvalid(format!("pinching constant {d} outside (0, 1]")))
            }
            ConeId::RicPinched(r) | ConeId::Pic1ScalMargin(r) | ConeId::Pic2ScalMargin(r)
                if !(r > 0.0 && r.is_finite()) =>
            {
                Err(Error::SpecInvalid(format!("rho {r} must be positive")))
            }
            other => Ok(other),
        }
    }

    /// Whether the cone is defined through orthonormal four-frames.
    pub fn is_isotropic_family(self) -> bool {
        matches!(
            self,
            ConeId::Pic | ConeId::Pic1 | ConeId::Pic2 | ConeId::Pic1ScalMargin(_) | ConeId::Pic2ScalMargin(_)
        )
    }
}

impl fmt::Display for ConeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConeId::SecNonneg => write!(f, "sec"),
            ConeId::Pic => write!(f, "pic"),
            ConeId::Pic1 => write!(f, "pic1"),
            ConeId::Pic2 => write!(f, "pic2"),
            ConeId::TwoPositive => write!(f, "2pos"),
            ConeId::OperatorNonneg => write!(f, "opnonneg"),
            ConeId::PointwisePinched(d) => write!(f, "pinch({d})"),
            ConeId::RicPinched(r) => write!(f, "ric({r})"),
            ConeId::Pic1ScalMargin(r) => write!(f, "pic1scal({r})"),
            ConeId::Pic2ScalMargin(r) => write!(f, "pic2scal({r})"),
        }
    }
}

impl FromStr for ConeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.find('(') {
            Some(p) if s.ends_with(')') => (&s[..p], Some(&s[p + 1..s.len() - 1])),
            Some(p) => {
                return Err(Error::Parse {
                    position: p,
                    message: format!("unclosed argument list in cone '{s}'"),
                })
            }
            None => (s, None),
        };
        let number = |default: Option<f64>| -> Result<f64> {
            match arg {
                Some(a) => a.trim().parse::<f64>().map_err(|_| Error::Parse {
                    position: name.len() + 1,
                    message: format!("bad number '{a}' in cone '{s}'"),
                }),
                None => default.ok_or_else(|| Error::Parse {
                    position: s.len(),
                    message: format!("cone '{name}' needs a parameter"),
                }),
            }
        };
        let plain = |cone: ConeId| -> Result<ConeId> {
            match arg {
                None => Ok(cone),
                Some(_) => Err(Error::Parse {
                    position: name.len(),
                    message: format!("cone '{name}' takes no parameter"),
                }),
            }
        };
        let cone = match name.to_ascii_lowercase().as_str() {
            "sec" | "sec_nonneg" => plain(ConeId::SecNonneg)?,
            "pic" => plain(ConeId::Pic)?,
            "pic1" => plain(ConeId::Pic1)?,
            "pic2" => plain(ConeId::Pic2)?,
            "2pos" | "two_positive" | "twopos" => plain(ConeId::TwoPositive)?,
            "opnonneg" | "operator_nonneg" => plain(ConeId::OperatorNonneg)?,
            "pinch" | "pointwise_pinched" => ConeId::PointwisePinched(number(Some(0.25))?),
            "ric" | "ric_pinched" => ConeId::RicPinched(number(None)?),
            "pic1scal" | "pic1_scal_margin" => ConeId::Pic1ScalMargin(number(None)?),
            "pic2scal" | "pic2_scal_margin" => ConeId::Pic2ScalMargin(number(None)?),
            _ => {
                return Err(Error::Parse {
                    position: 0,
                    message: format!("unknown cone '{name}'"),
                })
            }
        };
        cone.validate()
    }
}

impl Serialize for ConeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Witness for a reported margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    Frame {
        frame: Frame4,
        lambda: Option<f64>,
        mu: Option<f64>,
    },
    Plane {
        plane: Plane,
    },
    PlanePair {
        min: Plane,
        max: Plane,
    },
    /// Unit eigenvectors of the curvature operator in the pair basis.
    TwoForms {
        forms: Vec<Vec<f64>>,
    },
    /// Unit eigenvector of `Ric − ρ·scal·Id`.
    Vector {
        vector: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub cone: ConeId,
    pub margin: f64,
    #[serde(rename = "minimizer")]
    pub certificate: Certificate,
    pub restarts_used: usize,
    pub converged: bool,
    /// Zero tensor: every homogeneous margin is 0 and the certificate is arbitrary.
    pub degenerate: bool,
    /// Other converged restarts within 1e-4 (relative) of the margin whose
    /// certificate spans a different subspace. Certificates are not unique.
    pub distinct_minimizers: usize,
    pub seed: u64,
}

impl ConditionReport {
    /// Strict membership: margin above [`STRICTNESS`] × max-norm of `r`.
    pub fn is_strict(&self, r: &CurvatureTensor) -> bool {
        self.margin > STRICTNESS * r.max_norm()
    }
}

#[derive(Debug, Clone)]
pub struct MarginOptions {
    pub optimizer: OptimizerSettings,
    pub lambda_range: LambdaRange,
    /// Extra starting frames (rows of 4 or 2 vectors, flattened) tried before
    /// the random restarts.
    pub warm_starts: Vec<Vec<f64>>,
}

impl Default for MarginOptions {
    fn default() -> Self {
        Self {
            optimizer: OptimizerSettings::default(),
            lambda_range: LambdaRange::Unit,
            warm_starts: Vec::new(),
        }
    }
}

impl MarginOptions {
    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.optimizer.restarts = restarts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.optimizer.seed = seed;
        self
    }

    /// Adds the frame of a previous certificate as a warm start.
    pub fn warm_from(mut self, certificate: &Certificate) -> Self {
        match certificate {
            Certificate::Frame { frame, .. } => self.warm_starts.push(frame.to_rows()),
            Certificate::Plane { plane } => self.warm_starts.push(plane.to_rows()),
            _ => {}
        }
        self
    }
}

struct SectionalObjective<'a> {
    r: &'a CurvatureTensor,
    sign: f64,
}

impl FrameObjective for SectionalObjective<'_> {
    fn frame_size(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        self.r.dim()
    }
    fn evaluate(&self, rows: &[f64], grad: &mut [f64]) -> (f64, [f64; 2]) {
        let n = self.r.dim();
        let (x, y) = rows.split_at(n);
        let b = bivector(x, y);
        let yb = self.r.apply_pairs(&b);
        grad.iter_mut().for_each(|g| *g = 0.0);
        add_pair_gradient(&yb, 2.0 * self.sign, (0, 1), &[x, y], n, grad);
        (self.sign * dot(&b, &yb), [0.0; 2])
    }
    fn scale(&self) -> f64 {
        self.r.max_norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Family {
    Isotropic,
    Pic1(LambdaRange),
    Pic2(LambdaRange),
    /// `R₁₂₃₄` alone.
    Mixed,
}

struct IsotropicObjective<'a> {
    r: &'a CurvatureTensor,
    family: Family,
}

impl FrameObjective for IsotropicObjective<'_> {
    fn frame_size(&self) -> usize {
        4
    }
    fn dim(&self) -> usize {
        self.r.dim()
    }
    fn evaluate(&self, rows: &[f64], grad: &mut [f64]) -> (f64, [f64; 2]) {
        let n = self.r.dim();
        let rr: [&[f64]; 4] = std::array::from_fn(|a| &rows[a * n..(a + 1) * n]);
        let fc = FrameContraction::new(self.r, &rr);
        let v = fc.values();
        let (value, coef, params) = match self.family {
            Family::Isotropic => (v.isotropic(), [1.0, 1.0, 1.0, 1.0, -2.0], [1.0, 1.0]),
            Family::Pic1(range) => {
                let (l, val) = v.min_pic1(range);
                (val, [1.0, l * l, 1.0, l * l, -2.0 * l], [l, 1.0])
            }
            Family::Pic2(range) => {
                let (l, m, val) = v.min_pic2(range);
                (val, [1.0, l * l, m * m, l * l * m * m, -2.0 * l * m], [l, m])
            }
            Family::Mixed => (v.r1234, [0.0, 0.0, 0.0, 0.0, 1.0], [0.0; 2]),
        };
        fc.gradient(&rr, coef, grad);
        (value, params)
    }
    fn scale(&self) -> f64 {
        self.r.max_norm()
    }
}

fn require_dim(r: &CurvatureTensor, min: usize) -> Result<()> {
    if r.dim() < min {
        Err(Error::WrongDimension {
            expected: format!("n >= {min}"),
            got: r.dim(),
        })
    } else {
        Ok(())
    }
}

fn ensure_converged(out: &MultiStartOutcome) -> Result<()> {
    if out.converged_runs() == 0 {
        Err(Error::OptimizerDiverged {
            restarts: out.runs.len(),
            best: out.best.value,
        })
    } else {
        Ok(())
    }
}

fn distinct_minimizers<const K: usize>(out: &MultiStartOutcome, n: usize, scale: f64) -> usize {
    let best = Frame::<K>::from_rows_unchecked(n, &out.best.rows);
    out.runs
        .iter()
        .filter(|run| run.converged && run.start != out.best.start)
        .filter(|run| run.value <= out.best.value + 1e-4 * scale)
        .filter(|run| Frame::<K>::from_rows_unchecked(n, &run.rows).span_distance(&best) > 1e-3)
        .count()
}

/// Extremal sectional curvatures at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionalExtremes {
    pub k_min: f64,
    pub k_max: f64,
    pub plane_min: Plane,
    pub plane_max: Plane,
    pub converged: bool,
}

fn sectional_search(r: &CurvatureTensor, sign: f64, opts: &MarginOptions) -> Result<MultiStartOutcome> {
    require_dim(r, 2)?;
    let warm: Vec<Vec<f64>> = opts
        .warm_starts
        .iter()
        .filter(|w| w.len() == 2 * r.dim())
        .cloned()
        .collect();
    let out = minimize_frames(&SectionalObjective { r, sign }, &opts.optimizer, &warm);
    ensure_converged(&out)?;
    Ok(out)
}

/// Minimum and maximum of the sectional curvature over all 2-planes.
pub fn sectional_extremes(r: &CurvatureTensor, opts: &MarginOptions) -> Result<SectionalExtremes> {
    let n = r.dim();
    if r.max_norm() == 0.0 {
        let plane = Plane::standard(n);
        return Ok(SectionalExtremes {
            k_min: 0.0,
            k_max: 0.0,
            plane_min: plane.clone(),
            plane_max: plane,
            converged: true,
        });
    }
    let lo = sectional_search(r, 1.0, opts)?;
    let hi = sectional_search(r, -1.0, &opts.clone().with_seed(opts.optimizer.seed ^ 0x5EC7))?;
    let plane_min = Plane::from_rows_unchecked(n, &lo.best.rows);
    let plane_max = Plane::from_rows_unchecked(n, &hi.best.rows);
    Ok(SectionalExtremes {
        k_min: lo.best.value,
        k_max: -hi.best.value,
        plane_min,
        plane_max,
        converged: lo.best.converged && hi.best.converged,
    })
}

/// `K_min / K_max`.
pub fn pointwise_pinching_ratio(r: &CurvatureTensor, opts: &MarginOptions) -> Result<f64> {
    let ext = sectional_extremes(r, opts)?;
    pinching_ratio_of(&ext)
}

pub fn pinching_ratio_of(ext: &SectionalExtremes) -> Result<f64> {
    if !(ext.k_max > 0.0) {
        return Err(Error::NonpositiveCurvature { k_max: ext.k_max });
    }
    Ok(ext.k_min / ext.k_max)
}

fn family_for(cone: ConeId, range: LambdaRange) -> Family {
    match cone {
        ConeId::Pic => Family::Isotropic,
        ConeId::Pic1 => Family::Pic1(range),
        ConeId::Pic2 => Family::Pic2(range),
        ConeId::Pic1ScalMargin(_) => Family::Pic1(LambdaRange::Unit),
        ConeId::Pic2ScalMargin(_) => Family::Pic2(LambdaRange::Symmetric),
        _ => unreachable!("not an isotropic-family cone"),
    }
}

fn degenerate_certificate(cone: ConeId, n: usize) -> Certificate {
    match cone {
        c if c.is_isotropic_family() && n >= 4 => Certificate::Frame {
            frame: Frame4::standard(n),
            lambda: None,
            mu: None,
        },
        ConeId::SecNonneg => Certificate::Plane {
            plane: Plane::standard(n),
        },
        ConeId::PointwisePinched(_) => Certificate::PlanePair {
            min: Plane::standard(n),
            max: Plane::standard(n),
        },
        ConeId::RicPinched(_) => Certificate::Vector {
            vector: crate::frame::unit(n, 0),
        },
        _ => Certificate::TwoForms {
            forms: vec![crate::frame::unit(crate::tensor::pair_count(n), 0)],
        },
    }
}

/// Global minimum of the cone's defining quantity over its admissible set.
pub fn cone_margin(r: &CurvatureTensor, cone: ConeId, opts: &MarginOptions) -> Result<ConditionReport> {
    let cone = cone.validate()?;
    let n = r.dim();
    match cone {
        c if c.is_isotropic_family() => require_dim(r, 4)?,
        ConeId::TwoPositive | ConeId::OperatorNonneg => require_dim(r, 3)?,
        _ => require_dim(r, 2)?,
    }
    let seed = opts.optimizer.seed;
    let scale = r.max_norm();
    if scale == 0.0 {
        return Ok(ConditionReport {
            cone,
            margin: 0.0,
            certificate: degenerate_certificate(cone, n),
            restarts_used: 0,
            converged: true,
            degenerate: true,
            distinct_minimizers: 0,
            seed,
        });
    }
    let report = |margin, certificate, restarts_used, converged, distinct_minimizers| ConditionReport {
        cone,
        margin,
        certificate,
        restarts_used,
        converged,
        degenerate: false,
        distinct_minimizers,
        seed,
    };

    match cone {
        ConeId::SecNonneg => {
            let out = sectional_search(r, 1.0, opts)?;
            Ok(report(
                out.best.value,
                Certificate::Plane {
                    plane: Plane::from_rows_unchecked(n, &out.best.rows),
                },
                out.runs.len(),
                out.best.converged,
                distinct_minimizers::<2>(&out, n, scale),
            ))
        }
        ConeId::PointwisePinched(delta) => {
            let ext = sectional_extremes(r, opts)?;
            Ok(report(
                ext.k_min - delta * ext.k_max,
                Certificate::PlanePair {
                    min: ext.plane_min,
                    max: ext.plane_max,
                },
                2 * (opts.optimizer.restarts + opts.warm_starts.len()),
                ext.converged,
                0,
            ))
        }
        ConeId::TwoPositive | ConeId::OperatorNonneg => {
            let (values, vectors) = operator_spectrum(r);
            let count = if cone == ConeId::TwoPositive { 2 } else { 1 };
            let margin = values[..count].iter().sum();
            let forms = (0..count).map(|c| vectors.column(c).iter().copied().collect()).collect();
            Ok(report(margin, Certificate::TwoForms { forms }, 0, true, 0))
        }
        ConeId::RicPinched(rho) => {
            let shifted = r.ricci() - DMatrix::identity(n, n) * (rho * r.scalar());
            let eig = SymmetricEigen::new(shifted);
            let (idx, &min) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty spectrum");
            let vector = eig.eigenvectors.column(idx).iter().copied().collect();
            Ok(report(min, Certificate::Vector { vector }, 0, true, 0))
        }
        _ => {
            let family = family_for(cone, opts.lambda_range);
            let warm: Vec<Vec<f64>> = opts
                .warm_starts
                .iter()
                .filter(|w| w.len() == 4 * n)
                .cloned()
                .collect();
            let out = minimize_frames(&IsotropicObjective { r, family }, &opts.optimizer, &warm);
            ensure_converged(&out)?;
            let offset = match cone {
                ConeId::Pic1ScalMargin(rho) | ConeId::Pic2ScalMargin(rho) => rho * r.scalar(),
                _ => 0.0,
            };
            let [l, m] = out.best.params;
            let (lambda, mu) = match family {
                Family::Pic1(_) => (Some(l), None),
                Family::Pic2(_) => (Some(l), Some(m)),
                _ => (None, None),
            };
            Ok(report(
                out.best.value - offset,
                Certificate::Frame {
                    frame: Frame4::from_rows_unchecked(n, &out.best.rows),
                    lambda,
                    mu,
                },
                out.runs.len(),
                out.best.converged,
                distinct_minimizers::<4>(&out, n, scale),
            ))
        }
    }
}

/// Re-evaluates the defining quantity of `cone` at a certificate.
pub fn certificate_value(r: &CurvatureTensor, cone: ConeId, certificate: &Certificate) -> Result<f64> {
    let mismatch = || Error::SpecInvalid(format!("certificate does not fit cone {cone}"));
    match (cone, certificate) {
        (c, Certificate::Frame { frame, lambda, mu }) if c.is_isotropic_family() => {
            let v = frame_values(r, frame)?;
            let raw = match c {
                ConeId::Pic => v.isotropic(),
                ConeId::Pic1 | ConeId::Pic1ScalMargin(_) => v.pic1(lambda.ok_or_else(mismatch)?),
                _ => v.pic2(lambda.ok_or_else(mismatch)?, mu.ok_or_else(mismatch)?),
            };
            let offset = match c {
                ConeId::Pic1ScalMargin(rho) | ConeId::Pic2ScalMargin(rho) => rho * r.scalar(),
                _ => 0.0,
            };
            Ok(raw - offset)
        }
        (ConeId::SecNonneg, Certificate::Plane { plane }) => r.sectional(plane.vector(0), plane.vector(1)),
        (ConeId::PointwisePinched(delta), Certificate::PlanePair { min, max }) => {
            Ok(r.sectional(min.vector(0), min.vector(1))? - delta * r.sectional(max.vector(0), max.vector(1))?)
        }
        (ConeId::TwoPositive | ConeId::OperatorNonneg, Certificate::TwoForms { forms }) => {
            let m = crate::quantities::operator_matrix(r);
            Ok(forms
                .iter()
                .map(|f| {
                    let x = nalgebra::DVector::from_column_slice(f);
                    (x.transpose() * &m * &x)[(0, 0)]
                })
                .sum())
        }
        (ConeId::RicPinched(rho), Certificate::Vector { vector }) => {
            let n = r.dim();
            let shifted = r.ricci() - DMatrix::identity(n, n) * (rho * r.scalar());
            let x = nalgebra::DVector::from_column_slice(vector);
            Ok((x.transpose() * shifted * &x)[(0, 0)])
        }
        _ => Err(mismatch()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationVerdict {
    pub stronger: ConeId,
    pub weaker: ConeId,
    pub stronger_margin: f64,
    pub weaker_margin: f64,
    /// Stronger cone strictly satisfied while the weaker margin is below `−tolerance`.
    pub violation: bool,
}

/// Checks one edge of the cone lattice on a single tensor.
pub fn implication_check(
    r: &CurvatureTensor,
    stronger: ConeId,
    weaker: ConeId,
    tolerance: f64,
    opts: &MarginOptions,
) -> Result<ImplicationVerdict> {
    let s = cone_margin(r, stronger, opts)?;
    let w = cone_margin(r, weaker, opts)?;
    Ok(ImplicationVerdict {
        stronger,
        weaker,
        stronger_margin: s.margin,
        weaker_margin: w.margin,
        violation: s.is_strict(r) && w.margin < -tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BergerResidual {
    pub k_min: f64,
    pub k_max: f64,
    /// `(2/3)(K_max − K_min)`.
    pub bound: f64,
    /// Largest `|R(e₁,e₂,e₃,e₄)|` found over orthonormal four-frames.
    pub max_mixed: f64,
    pub residual: f64,
    pub frame: Frame4,
}

/// `(2/3)(K_max − K_min) − max_F |R₁₂₃₄|`.
pub fn berger_bound_residual(r: &CurvatureTensor, opts: &MarginOptions) -> Result<BergerResidual> {
    require_dim(r, 4)?;
    let n = r.dim();
    let ext = sectional_extremes(r, opts)?;
    let (max_mixed, frame) = if r.max_norm() == 0.0 {
        (0.0, Frame4::standard(n))
    } else {
        // Swapping e₁ and e₂ flips the sign of R₁₂₃₄, so max |R₁₂₃₄| = −min R₁₂₃₄.
        let settings = OptimizerSettings {
            seed: opts.optimizer.seed ^ 0xBE26,
            ..opts.optimizer.clone()
        };
        let out = minimize_frames(&IsotropicObjective { r, family: Family::Mixed }, &settings, &[]);
        ensure_converged(&out)?;
        (-out.best.value, Frame4::from_rows_unchecked(n, &out.best.rows))
    };
    let bound = 2.0 / 3.0 * (ext.k_max - ext.k_min);
    Ok(BergerResidual {
        k_min: ext.k_min,
        k_max: ext.k_max,
        bound,
        max_mixed,
        residual: bound - max_mixed,
        frame,
    })
}

/// Both sides of the algebraic identity
/// `(1+λ²+μ²+λ²μ²)K_min − (4/3)λμ(K_max−K_min)
///  = ((1−λμ)² + (λ−μ)²)K_min + (4/3)λμ(4K_min − K_max)`.
pub fn quarter_pinch_chain(lambda: f64, mu: f64, k_min: f64, k_max: f64) -> (f64, f64) {
    let lm = lambda * mu;
    let lhs = (1.0 + lambda * lambda + mu * mu + lm * lm) * k_min - 4.0 / 3.0 * lm * (k_max - k_min);
    let rhs = ((1.0 - lm).powi(2) + (lambda - mu).powi(2)) * k_min + 4.0 / 3.0 * lm * (4.0 * k_min - k_max);
    (lhs, rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckVerdict {
    pub cone: ConeId,
    pub frame_margin: f64,
    /// Smallest normalized value over the frame-parametrized complex samples.
    pub min_sample: f64,
    /// How far any normalized sample fell below the frame margin (0 if none).
    pub worst_discrepancy: f64,
    pub negative_samples: usize,
    pub samples: usize,
    /// Sign of the frame margin agrees with the presence of negative samples.
    pub agree: bool,
}

/// `(e₁ + iμe₂, e₃ + iλe₄)` for a frame.
fn frame_pair(frame: &Frame4, lambda: f64, mu: f64) -> (ComplexVector, ComplexVector) {
    let scaled = |v: &[f64], c: f64| v.iter().map(|x| c * x).collect::<Vec<_>>();
    (
        ComplexVector::new(frame.vector(0).to_vec(), scaled(frame.vector(1), mu)),
        ComplexVector::new(frame.vector(2).to_vec(), scaled(frame.vector(3), lambda)),
    )
}

/// Samples complex vectors satisfying the cone's algebraic constraint and
/// compares the signs of `R(ζ,η,ζ̄,η̄)` with the frame-formulated margin.
///
/// Samples are `(e₁+iμe₂, e₃+iλe₄)` over random frames and weights (λ = μ = 1
/// for PIC, μ = 1 for PIC1), mixed by a random complex 2×2 matrix, which
/// preserves the constraint and scales the value by `|det|²`. The first sample
/// is built from the margin certificate. For PIC2 every pair of complex vectors
/// is admissible, and unconstrained Gaussian pairs are added to the sign count.
pub fn complex_condition_crosscheck(
    r: &CurvatureTensor,
    cone: ConeId,
    samples: usize,
    opts: &MarginOptions,
) -> Result<CrosscheckVerdict> {
    if !matches!(cone, ConeId::Pic | ConeId::Pic1 | ConeId::Pic2) {
        return Err(Error::ConstraintConstructionFailed(format!(
            "cone {cone} has no complex characterization"
        )));
    }
    require_dim(r, 4)?;
    if samples == 0 {
        return Err(Error::ConstraintConstructionFailed("no samples requested".into()));
    }
    let n = r.dim();
    let scale = r.max_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-9 * scale;
    let report = cone_margin(r, cone, opts)?;
    let (lo, hi) = opts.lambda_range.bounds();
    let mut rng = restart_rng(opts.optimizer.seed ^ 0xC0FFEE, 0);

    let mut min_sample = f64::INFINITY;
    let mut negative = 0;
    let mut total = 0;
    for s in 0..samples {
        let (frame, lambda, mu) = if s == 0 {
            match &report.certificate {
                Certificate::Frame { frame, lambda, mu } => (frame.clone(), lambda.unwrap_or(1.0), mu.unwrap_or(1.0)),
                _ => unreachable!("isotropic-family certificate"),
            }
        } else {
            let f = Frame4::random(n, &mut rng);
            let mut weight = || lo + (hi - lo) * rng.random::<f64>();
            match cone {
                ConeId::Pic => (f, 1.0, 1.0),
                ConeId::Pic1 => {
                    let l = weight();
                    (f, l, 1.0)
                }
                _ => {
                    let l = weight();
                    let m = weight();
                    (f, l, m)
                }
            }
        };
        let (zeta, eta) = frame_pair(&frame, lambda, mu);
        let mix: [Complex64; 4] = if s == 0 {
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
        } else {
            std::array::from_fn(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        };
        let det = mix[0] * mix[3] - mix[1] * mix[2];
        if det.norm_sqr() < 1e-6 {
            continue;
        }
        let z = ComplexVector::combine(mix[0], &zeta, mix[1], &eta);
        let w = ComplexVector::combine(mix[2], &zeta, mix[3], &eta);

        let (gzz, gzw, gww) = (z.bilinear(&z), z.bilinear(&w), w.bilinear(&w));
        let constraint = match cone {
            ConeId::Pic => gzz.norm().max(gzw.norm()).max(gww.norm()),
            ConeId::Pic1 => (gzz * gww - gzw * gzw).norm(),
            _ => 0.0,
        };
        let size = (z.re.iter().chain(&z.im).map(|x| x * x).sum::<f64>()
            * w.re.iter().chain(&w.im).map(|x| x * x).sum::<f64>())
        .max(1.0);
        if constraint > 1e-9 * size {
            return Err(Error::ConstraintConstructionFailed(format!(
                "constraint residual {constraint:e} for sample {s}"
            )));
        }
        let value = complexify_eval(r, &z, &w)?;
        let normalized = value.re / det.norm_sqr();
        total += 1;
        min_sample = min_sample.min(normalized);
        if value.re < -tol * det.norm_sqr() {
            negative += 1;
        }
        if cone == ConeId::Pic2 {
            let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
            let z = ComplexVector::new(gauss(&mut rng), gauss(&mut rng));
            let w = ComplexVector::new(gauss(&mut rng), gauss(&mut rng));
            let value = complexify_eval(r, &z, &w)?;
            let size = herm_wedge_norm_sq(&z, &w).max(f64::MIN_POSITIVE);
            total += 1;
            if value.re < -tol * size {
                negative += 1;
            }
        }
    }
    let worst_discrepancy = (report.margin - min_sample).max(0.0);
    let frame_negative = report.margin < -tol;
    Ok(CrosscheckVerdict {
        cone,
        frame_margin: report.margin,
        min_sample,
        worst_discrepancy,
        negative_samples: negative,
        samples: total,
        agree: frame_negative == (negative > 0),
    })
}

/// Hermitian norm² of `ζ ∧ η` in the pair basis.
fn herm_wedge_norm_sq(z: &ComplexVector, w: &ComplexVector) -> f64 {
    let re = {
        let a = bivector(&z.re, &w.re);
        let b = bivector(&z.im, &w.im);
        a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>()
    };
    let im = {
        let a = bivector(&z.re, &w.im);
        let b = bivector(&z.im, &w.re);
        a.iter().zip(&b).map(|(x, y)| x + y).collect::<Vec<_>>()
    };
    dot(&re, &re) + dot(&im, &im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::constant_curvature;

    #[test]
    fn cone_text_roundtrip() {
        for s in ["sec", "pic", "pic1", "pic2", "2pos", "opnonneg", "pinch(0.25)", "ric(0.2)", "pic1scal(0.1)", "pic2scal(0.05)"] {
            let c: ConeId = s.parse().unwrap();
            assert_eq!(c.to_string(), s);
        }
        assert_eq!("pinch".parse::<ConeId>().unwrap(), ConeId::PointwisePinched(0.25));
        assert!("pinch(1.5)".parse::<ConeId>().is_err());
        assert!("ric".parse::<ConeId>().is_err());
        assert!("foo".parse::<ConeId>().is_err());
        assert!("pic(1)".parse::<ConeId>().is_err());
    }

    #[test]
    fn quarter_chain_examples() {
        assert_eq!(quarter_pinch_chain(0.0, 0.0, 1.0, 4.0), (1.0, 1.0));
        let (l, r) = quarter_pinch_chain(1.0, 1.0, 1.0, 4.0);
        assert!(l.abs() < 1e-15 && r.abs() < 1e-15);
    }

    #[test]
    fn constant_curvature_margins() {
        let r = constant_curvature(4, 1.0);
        let opts = MarginOptions::default().with_restarts(8);
        let pic = cone_margin(&r, ConeId::Pic, &opts).unwrap();
        assert!((pic.margin - 4.0).abs() < 1e-12);
        let two = cone_margin(&r, ConeId::TwoPositive, &opts).unwrap();
        assert!((two.margin - 8.0).abs() < 1e-12);
        let ext = sectional_extremes(&r, &opts).unwrap();
        assert!((ext.k_min - 1.0).abs() < 1e-12 && (ext.k_max - 1.0).abs() < 1e-12);
        assert!((pointwise_pinching_ratio(&r, &opts).unwrap() - 1.0).abs() < 1e-12);
        let ric = cone_margin(&r, ConeId::RicPinched(0.2), &opts).unwrap();
        assert!((ric.margin - (3.0 - 0.2 * 12.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_tensor_is_degenerate() {
        let r = CurvatureTensor::zeros(5);
        for cone in [ConeId::Pic, ConeId::Pic2, ConeId::SecNonneg, ConeId::TwoPositive] {
            let rep = cone_margin(&r, cone, &MarginOptions::default()).unwrap();
            assert_eq!(rep.margin, 0.0);
            assert!(rep.degenerate);
        }
    }

    #[test]
    fn dimension_errors() {
        let r = constant_curvature(3, 1.0);
        assert!(matches!(
            cone_margin(&r, ConeId::Pic, &MarginOptions::default()),
            Err(Error::WrongDimension { .. })
        ));
        let flat = CurvatureTensor::zeros(4);
        assert!(matches!(
            pointwise_pinching_ratio(&flat, &MarginOptions::default()),
            Err(Error::NonpositiveCurvature { .. })
        ));
    }
}
