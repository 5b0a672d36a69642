//! Model curvature tensors: constant curvature, Fubini–Study, products, flat
//! extensions, seeded random tensors and random tensors shifted into a cone.
//!
//! Every model has a canonical text form:
//! `const(4,1.0)`, `fs(2)`, `prod(const(2,1.0),const(2,1.0))`,
//! `flat(const(4,1.0),1)`, `rand(5,seed=7,scale=0.3)`,
//! `shift(rand(4,seed=3,scale=1.0),pic,0.0)`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditions::{certificate_value, cone_margin, ConditionReport, ConeId, MarginOptions};
use crate::error::{Error, Result};
use crate::tensor::{constant_curvature, pair_count, CurvatureTensor};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    ConstantCurvature { n: usize, kappa: f64 },
    /// `CPᵐ` with holomorphic sectional curvature 4, so `K ∈ [1, 4]`.
    FubiniStudy { m: usize },
    Product(Box<ModelSpec>, Box<ModelSpec>),
    /// Product with flat `ℝᵏ`.
    FlatExtend(Box<ModelSpec>, usize),
    Random { n: usize, seed: u64, scale: f64 },
    /// `base + c·I` with the smallest `c ≥ 0` giving `margin(cone) ≥ target`.
    Shifted { base: Box<ModelSpec>, cone: ConeId, target: f64 },
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::ConstantCurvature { n, .. } | ModelSpec::Random { n, .. } => *n,
            ModelSpec::FubiniStudy { m } => 2 * m,
            ModelSpec::Product(a, b) => a.dim() + b.dim(),
            ModelSpec::FlatExtend(a, k) => a.dim() + k,
            ModelSpec::Shifted { base, .. } => base.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::SpecInvalid(msg));
        match self {
            ModelSpec::ConstantCurvature { n, kappa } => {
                if *n < 2 {
                    return bad(format!("dimension {n} < 2"));
                }
                if !kappa.is_finite() {
                    return bad("curvature must be finite".into());
                }
            }
            ModelSpec::FubiniStudy { m } if *m < 1 => return bad("fs needs m >= 1".into()),
            ModelSpec::FubiniStudy { .. } => {}
            ModelSpec::Product(a, b) => {
                a.validate()?;
                b.validate()?;
            }
            ModelSpec::FlatExtend(a, k) => {
                if *k < 1 {
                    return bad("flat factor needs k >= 1".into());
                }
                a.validate()?;
            }
            ModelSpec::Random { n, scale, .. } => {
                if *n < 2 {
                    return bad(format!("dimension {n} < 2"));
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return bad(format!("scale {scale} must be positive"));
                }
            }
            ModelSpec::Shifted { base, cone, target } => {
                base.validate()?;
                cone.validate()?;
                if !target.is_finite() {
                    return bad("target margin must be finite".into());
                }
            }
        }
        Ok(())
    }

    /// Builds the tensor with default margin options for shifted models.
    pub fn build(&self) -> Result<CurvatureTensor> {
        self.build_with(&MarginOptions::default())
    }

    pub fn build_with(&self, opts: &MarginOptions) -> Result<CurvatureTensor> {
        self.validate()?;
        Ok(match self {
            ModelSpec::ConstantCurvature { n, kappa } => constant_curvature(*n, *kappa),
            ModelSpec::FubiniStudy { m } => fubini_study(*m),
            ModelSpec::Product(a, b) => product(&a.build_with(opts)?, &b.build_with(opts)?),
            ModelSpec::FlatExtend(a, k) => product(&a.build_with(opts)?, &CurvatureTensor::zeros(*k)),
            ModelSpec::Random { n, seed, scale } => random_tensor(*n, *seed, *scale),
            ModelSpec::Shifted { base, cone, target } => {
                shift_into_cone(&base.build_with(opts)?, *cone, *target, opts)?.tensor
            }
        })
    }
}

/// `⟨e_i, J e_k⟩` for `J e_{2p} = e_{2p+1}`, `J e_{2p+1} = −e_{2p}`.
fn complex_structure(i: usize, k: usize) -> f64 {
    if i / 2 != k / 2 || i == k {
        0.0
    } else if i % 2 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Fubini–Study curvature on `ℝ^{2m}` with holomorphic sectional curvature 4:
/// `R(X,Y,Z,W) = ⟨X,Z⟩⟨Y,W⟩ − ⟨X,W⟩⟨Y,Z⟩ + ⟨X,JZ⟩⟨Y,JW⟩ − ⟨X,JW⟩⟨Y,JZ⟩ + 2⟨X,JY⟩⟨Z,JW⟩`.
pub fn fubini_study(m: usize) -> CurvatureTensor {
    let j = complex_structure;
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    CurvatureTensor::from_fn(2 * m, |x, y, z, w| {
        d(x, z) * d(y, w) - d(x, w) * d(y, z) + j(x, z) * j(y, w) - j(x, w) * j(y, z) + 2.0 * j(x, y) * j(z, w)
    })
}

/// Block tensor on `ℝ^{n_a + n_b}`; mixed components vanish.
pub fn product(a: &CurvatureTensor, b: &CurvatureTensor) -> CurvatureTensor {
    let (na, nb) = (a.dim(), b.dim());
    CurvatureTensor::from_fn(na + nb, |i, j, k, l| {
        if i < na && j < na && k < na && l < na {
            a.get(i, j, k, l)
        } else if i >= na && j >= na && k >= na && l >= na {
            b.get(i - na, j - na, k - na, l - na)
        } else {
            0.0
        }
    })
}

/// Uniform `[−scale, scale]` canonical components, projected onto the Bianchi
/// subspace. Deterministic per `(n, seed, scale)`.
pub fn random_tensor(n: usize, seed: u64, scale: f64) -> CurvatureTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = pair_count(n);
    let data = (0..np * (np + 1) / 2)
        .map(|_| rng.random_range(-scale..=scale))
        .collect();
    CurvatureTensor::from_packed(n, data).bianchi_projected()
}

#[derive(Debug, Clone)]
pub struct Shifted {
    pub tensor: CurvatureTensor,
    /// Multiple of the unit constant-curvature tensor that was added.
    pub shift: f64,
    pub report: ConditionReport,
    pub evaluations: usize,
}

/// Accepted band for the final margin around the target.
const BAND_BELOW: f64 = 1e-9;
const BAND_ABOVE: f64 = 1e-8;
const WIDTH_TOL: f64 = 1e-10;
const MAX_EVALUATIONS: usize = 200;

/// Smallest `c ≥ 0` with `margin(R + c·I) ≥ target`, where `I` is the unit
/// constant-curvature tensor.
///
/// The margin is a minimum of affine functions of `c`, hence concave and
/// nondecreasing, and its slope at `c` is the value of `I`'s defining quantity
/// at the current certificate. Newton steps from below therefore never
/// overshoot; they run inside a bisection bracket that takes over whenever a
/// step leaves it. Each margin evaluation is warm-started from the previous
/// certificate. Non-monotone readings trigger one retry with four times the
/// restart budget before failing.
pub fn shift_into_cone(r: &CurvatureTensor, cone: ConeId, target: f64, opts: &MarginOptions) -> Result<Shifted> {
    match bracket_shift(r, cone, target, opts) {
        Err(Error::BisectionFailed(_)) => {
            let mut bigger = opts.clone();
            bigger.optimizer.restarts = (opts.optimizer.restarts * 4).max(16);
            bracket_shift(r, cone, target, &bigger)
        }
        other => other,
    }
}

fn bracket_shift(r: &CurvatureTensor, cone: ConeId, target: f64, opts: &MarginOptions) -> Result<Shifted> {
    let n = r.dim();
    let unit = constant_curvature(n, 1.0);
    let probe = cone_margin(&unit, cone, opts)?;
    if !(probe.margin > 0.0) {
        return Err(Error::SpecInvalid(format!(
            "constant curvature is not inside cone {cone}; shifting cannot reach it"
        )));
    }

    let mut evaluations = 1;
    let report = cone_margin(r, cone, opts)?;
    if report.margin >= target {
        return Ok(Shifted {
            tensor: r.clone(),
            shift: 0.0,
            report,
            evaluations,
        });
    }

    let slope_at = |rep: &ConditionReport| -> f64 {
        certificate_value(&unit, cone, &rep.certificate)
            .ok()
            .filter(|s| *s > 0.0 && s.is_finite())
            .unwrap_or(probe.margin)
    };

    let mut lo = (0.0, report.margin);
    let mut hi: Option<(f64, CurvatureTensor, ConditionReport)> = None;
    let mut current = (0.0, report);
    loop {
        let (c, rep) = &current;
        let newton = c + (target - rep.margin) / slope_at(rep);
        let next = match &hi {
            Some((h, _, _)) if !(newton > lo.0 && newton < *h) => 0.5 * (lo.0 + h),
            None if !(newton > lo.0) => lo.0 + 2.0 * (target - lo.1).abs().max(WIDTH_TOL) / probe.margin,
            _ => newton,
        };
        let tensor = r.axpy(next, &unit);
        let warm = opts.clone().warm_from(&rep.certificate);
        let rep = cone_margin(&tensor, cone, &warm)?;
        evaluations += 1;

        if rep.margin < lo.1 - BAND_BELOW {
            return Err(Error::BisectionFailed(format!(
                "margin decreased from {:e} to {:e} while the shift grew to {next:e}",
                lo.1, rep.margin
            )));
        }
        if rep.margin >= target - BAND_BELOW && rep.margin <= target + BAND_ABOVE {
            return Ok(Shifted {
                tensor,
                shift: next,
                report: rep,
                evaluations,
            });
        }
        if rep.margin < target {
            lo = (next, rep.margin);
        } else {
            if let Some((h, _, hrep)) = &hi {
                if next < *h && rep.margin > hrep.margin + BAND_BELOW {
                    return Err(Error::BisectionFailed(format!(
                        "margin {:e} at shift {next:e} exceeds {:e} at larger shift {h:e}",
                        rep.margin, hrep.margin
                    )));
                }
            }
            hi = Some((next, tensor, rep.clone()));
        }
        if let Some((h, t, hrep)) = &hi {
            if h - lo.0 < WIDTH_TOL {
                return Ok(Shifted {
                    tensor: t.clone(),
                    shift: *h,
                    report: hrep.clone(),
                    evaluations,
                });
            }
        }
        if evaluations >= MAX_EVALUATIONS {
            return Err(Error::BisectionFailed(format!(
                "no shift within the margin band after {evaluations} evaluations"
            )));
        }
        current = (next, rep);
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::ConstantCurvature { n, kappa } => write!(f, "const({n},{kappa:?})"),
            ModelSpec::FubiniStudy { m } => write!(f, "fs({m})"),
            ModelSpec::Product(a, b) => write!(f, "prod({a},{b})"),
            ModelSpec::FlatExtend(a, k) => write!(f, "flat({a},{k})"),
            ModelSpec::Random { n, seed, scale } => write!(f, "rand({n},seed={seed},scale={scale:?})"),
            ModelSpec::Shifted { base, cone, target } => write!(f, "shift({base},{cone},{target:?})"),
        }
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser { src: s, pos: 0 };
        let spec = p.spec()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.error("trailing input"));
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Recursive-descent parser over the model grammar.
struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().map_or(1, char::len_utf8);
        }
    }

    fn eat(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    fn peek(&mut self, c: char) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with(c)
    }

    fn ident(&mut self) -> Result<&str> {
        self.skip_ws();
        let start = self.pos;
        let len = self.src[start..]
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(self.src.len() - start);
        if len == 0 {
            return Err(self.error("expected a name"));
        }
        self.pos += len;
        Ok(&self.src[start..start + len])
    }

    /// A bare token up to the next ',' or ')' at depth 0.
    fn token(&mut self) -> Result<(usize, &str)> {
        self.skip_ws();
        let start = self.pos;
        let mut depth = 0usize;
        for (off, c) in self.src[start..].char_indices() {
            match c {
                '(' => depth += 1,
                ')' if depth == 0 => {
                    self.pos = start + off;
                    break;
                }
                ')' => depth -= 1,
                ',' if depth == 0 => {
                    self.pos = start + off;
                    break;
                }
                _ => {}
            }
            self.pos = start + off + c.len_utf8();
        }
        let text = self.src[start..self.pos].trim();
        if text.is_empty() {
            return Err(Error::Parse {
                position: start,
                message: "expected a value".into(),
            });
        }
        Ok((start, text))
    }

    fn number<T: FromStr>(&mut self, what: &str) -> Result<T> {
        let (start, text) = self.token()?;
        text.parse().map_err(|_| Error::Parse {
            position: start,
            message: format!("bad {what} '{text}'"),
        })
    }

    /// Optional `key=` prefix; returns the key if present.
    fn key(&mut self) -> Option<String> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let name_len = rest.find(|c: char| !(c.is_ascii_alphabetic() || c == '_')).unwrap_or(rest.len());
        let after = rest[name_len..].trim_start();
        if name_len > 0 && after.starts_with('=') {
            let key = rest[..name_len].to_string();
            self.pos += name_len;
            self.skip_ws();
            self.pos += 1;
            Some(key)
        } else {
            None
        }
    }

    fn spec(&mut self) -> Result<ModelSpec> {
        let start = {
            self.skip_ws();
            self.pos
        };
        let name = self.ident()?.to_ascii_lowercase();
        self.eat('(')?;
        let spec = match name.as_str() {
            "const" => {
                let n = self.number("dimension")?;
                self.eat(',')?;
                let kappa = self.number("curvature")?;
                ModelSpec::ConstantCurvature { n, kappa }
            }
            "fs" => ModelSpec::FubiniStudy {
                m: self.number("complex dimension")?,
            },
            "prod" => {
                let a = self.spec()?;
                self.eat(',')?;
                let b = self.spec()?;
                ModelSpec::Product(Box::new(a), Box::new(b))
            }
            "flat" => {
                let a = self.spec()?;
                self.eat(',')?;
                let k = self.number("flat dimension")?;
                ModelSpec::FlatExtend(Box::new(a), k)
            }
            "rand" => {
                let n = self.number("dimension")?;
                let mut seed = 0u64;
                let mut scale = 1.0f64;
                let mut positional = 0;
                while self.peek(',') {
                    self.eat(',')?;
                    let at = self.pos;
                    match self.key().as_deref() {
                        Some("seed") => seed = self.number("seed")?,
                        Some("scale") => scale = self.number("scale")?,
                        Some(other) => {
                            return Err(Error::Parse {
                                position: at,
                                message: format!("unknown key '{other}'"),
                            })
                        }
                        None if positional == 0 => {
                            seed = self.number("seed")?;
                            positional += 1;
                        }
                        None if positional == 1 => {
                            scale = self.number("scale")?;
                            positional += 1;
                        }
                        None => return Err(self.error("too many arguments to rand")),
                    }
                }
                ModelSpec::Random { n, seed, scale }
            }
            "shift" => {
                let base = self.spec()?;
                self.eat(',')?;
                let (at, text) = self.token()?;
                let cone: ConeId = text.parse().map_err(|e| match e {
                    Error::Parse { position, message } => Error::Parse {
                        position: at + position,
                        message,
                    },
                    other => other,
                })?;
                self.eat(',')?;
                let target = self.number("target margin")?;
                ModelSpec::Shifted {
                    base: Box::new(base),
                    cone,
                    target,
                }
            }
            other => {
                return Err(Error::Parse {
                    position: start,
                    message: format!("unknown model '{other}'"),
                })
            }
        };
        self.eat(')')?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::sectional_extremes;
    use crate::tensor::DERIVED_TOL;

    #[test]
    fn fubini_study_contractions() {
        for m in 1..=3 {
            let r = fubini_study(m);
            let ric = r.ricci();
            let expect = 2.0 * (m as f64 + 1.0);
            for i in 0..2 * m {
                for j in 0..2 * m {
                    let want = if i == j { expect } else { 0.0 };
                    assert!((ric[(i, j)] - want).abs() < 1e-12);
                }
            }
            assert!(r.bianchi_residual() < 1e-14);
        }
        let r = fubini_study(2);
        assert!((r.scalar() - 24.0).abs() < 1e-12);
        let e0 = crate::frame::unit(4, 0);
        let je0 = crate::frame::unit(4, 1);
        assert!((r.sectional(&e0, &je0).unwrap() - 4.0).abs() < 1e-12);
        let e2 = crate::frame::unit(4, 2);
        assert!((r.sectional(&e0, &e2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_blocks() {
        let s2 = constant_curvature(2, 1.0);
        let r = product(&s2, &s2);
        assert_eq!(r.get(0, 1, 0, 1), 1.0);
        assert_eq!(r.get(2, 3, 2, 3), 1.0);
        assert_eq!(r.get(0, 2, 0, 2), 0.0);
        assert_eq!(r.scalar(), 4.0);
        let ext = sectional_extremes(&r, &MarginOptions::default().with_restarts(16)).unwrap();
        assert!(ext.k_min.abs() < 1e-9 && (ext.k_max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn random_is_deterministic_and_bianchi() {
        let a = random_tensor(4, 11, 0.5);
        let b = random_tensor(4, 11, 0.5);
        assert_eq!(a.packed(), b.packed());
        assert!(a.bianchi_residual() < 1e-12);
        assert_ne!(a.packed(), random_tensor(4, 12, 0.5).packed());
        assert!(a.max_norm() <= 0.5 + DERIVED_TOL);
    }

    #[test]
    fn text_form_roundtrip() {
        for s in [
            "const(4,1.0)",
            "fs(2)",
            "prod(const(2,1.0),const(2,1.0))",
            "flat(const(4,1.0),1)",
            "rand(5,seed=7,scale=0.3)",
            "shift(rand(4,seed=3,scale=1.0),pic2,0.0)",
            "shift(fs(2),pinch(0.25),0.5)",
        ] {
            let spec: ModelSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            assert_eq!(spec.to_string().parse::<ModelSpec>().unwrap(), spec);
        }
        let loose: ModelSpec = " prod( const(2, 1), const(2,1) ) ".parse().unwrap();
        assert_eq!(loose.to_string(), "prod(const(2,1.0),const(2,1.0))");
        let positional: ModelSpec = "rand(4,3,1.0)".parse().unwrap();
        assert_eq!(positional, ModelSpec::Random { n: 4, seed: 3, scale: 1.0 });
    }

    #[test]
    fn parse_errors_carry_positions() {
        match "const(4,x)".parse::<ModelSpec>() {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 8),
            other => panic!("{other:?}"),
        }
        match "prod(const(2,1),blob(3))".parse::<ModelSpec>() {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 16),
            other => panic!("{other:?}"),
        }
        assert!(matches!("const(1,1.0)".parse::<ModelSpec>(), Err(Error::SpecInvalid(_))));
        assert!(matches!("fs(2) x".parse::<ModelSpec>(), Err(Error::Parse { .. })));
    }

    #[test]
    fn shift_leaves_members_alone() {
        let r = constant_curvature(4, 1.0);
        let s = shift_into_cone(&r, ConeId::Pic, 1.0, &MarginOptions::default().with_restarts(4)).unwrap();
        assert_eq!(s.shift, 0.0);
        assert_eq!(s.tensor, r);
    }

    #[test]
    fn shift_to_pic_boundary_is_exact() {
        let r = random_tensor(4, 5, 1.0);
        let opts = MarginOptions::default().with_restarts(16);
        let s = shift_into_cone(&r, ConeId::Pic, 0.0, &opts).unwrap();
        assert!(s.report.margin >= -1e-9 && s.report.margin <= 1e-8, "{}", s.report.margin);
        assert!(s.shift > 0.0);
    }
}
