//! ODE-level experiments: cone invariance, convergence of the normalized flow
//! towards the constant-curvature ray, and the Ricci-pinched interior estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{
    cone_margin, pinching_ratio_of, sectional_extremes, Certificate, ConeId, MarginOptions, STRICTNESS,
};
use crate::error::{Error, Result};
use crate::flow::integrate::{detect_blowup, integrate, FlowTrajectory, Normalization, StepControl};
use crate::models::{random_tensor, shift_into_cone};
use crate::quantities::LambdaRange;
use crate::tensor::{constant_curvature, CurvatureTensor};

/// Records whose raw max-norm grew by at least `log_step` (natural log) since
/// the previous selected record; the first and last records are always kept.
pub fn checkpoints(traj: &FlowTrajectory, log_step: f64) -> Vec<usize> {
    let mut out = vec![0];
    let mut last = traj.raw_norm(0).max(f64::MIN_POSITIVE).ln();
    for i in 1..traj.len() {
        let cur = traj.raw_norm(i).max(f64::MIN_POSITIVE).ln();
        if (cur - last).abs() >= log_step {
            out.push(i);
            last = cur;
        }
    }
    if *out.last().unwrap() != traj.len() - 1 {
        out.push(traj.len() - 1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub t: f64,
    pub h: f64,
    pub scal: f64,
    /// Max-norm of the stored state.
    pub norm: f64,
    /// `K_min/K_max`, absent when `K_max ≤ 0`.
    pub pinching: Option<f64>,
    pub margins: Vec<f64>,
}

/// Scalar diagnostics at the selected records. Cone margins are evaluated on
/// the stored states, warm-started from the previous record's certificate.
pub fn diagnose(
    traj: &FlowTrajectory,
    indices: &[usize],
    cones: &[ConeId],
    with_pinching: bool,
    opts: &MarginOptions,
) -> Result<Vec<Diagnostic>> {
    let mut warm: Vec<Option<Certificate>> = vec![None; cones.len()];
    let mut pinch_warm: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let state = &traj.states[i];
        let mut margins = Vec::with_capacity(cones.len());
        for (c, cone) in cones.iter().enumerate() {
            let o = match &warm[c] {
                Some(cert) => opts.clone().warm_from(cert),
                None => opts.clone(),
            };
            let rep = cone_margin(state, *cone, &o)?;
            margins.push(rep.margin);
            warm[c] = Some(rep.certificate);
        }
        let pinching = if with_pinching {
            let mut o = opts.clone();
            o.warm_starts = pinch_warm.clone();
            let ext = sectional_extremes(state, &o)?;
            pinch_warm = vec![ext.plane_min.to_rows(), ext.plane_max.to_rows()];
            pinching_ratio_of(&ext).ok()
        } else {
            None
        };
        out.push(Diagnostic {
            t: traj.times[i],
            h: traj.steps[i],
            scal: state.scalar(),
            norm: state.max_norm(),
            pinching,
            margins,
        });
    }
    Ok(out)
}

/// Whitespace-separated columns with a `#` header line.
pub fn diagnostics_columns(records: &[Diagnostic], cones: &[ConeId]) -> String {
    let mut s = String::from("# t h scal norm pinching");
    for c in cones {
        s.push_str(&format!(" margin:{c}"));
    }
    s.push('\n');
    for r in records {
        s.push_str(&format!("{:.16e} {:.16e} {:.16e} {:.16e}", r.t, r.h, r.scal, r.norm));
        match r.pinching {
            Some(p) => s.push_str(&format!(" {p:.16e}")),
            None => s.push_str(" nan"),
        }
        for m in &r.margins {
            s.push_str(&format!(" {m:.16e}"));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceConfig {
    pub cone: ConeId,
    pub n: usize,
    pub samples: usize,
    /// Integration horizon; the run stops at `min(horizon, 0.9·T)` where `T`
    /// is the detected blowup time. `None` means `0.9·T`.
    pub horizon: Option<f64>,
    pub seed: u64,
    /// Starting tensors are random tensors shifted to this margin; `None`
    /// uses the raw random tensors and flags those outside the cone.
    pub start_margin: Option<f64>,
    /// Additional cones whose minimum margins are recorded along each run.
    pub tracked: Vec<ConeId>,
    /// Growth of `ln ‖R‖` between margin evaluations along a trajectory.
    pub log_step: f64,
    /// Restarts for margin evaluations along trajectories (warm-started).
    pub trajectory_restarts: usize,
}

impl InvarianceConfig {
    pub fn new(cone: ConeId, n: usize, samples: usize, seed: u64) -> Self {
        Self {
            cone,
            n,
            samples,
            horizon: None,
            seed,
            start_margin: Some(0.1),
            tracked: Vec::new(),
            log_step: 0.05,
            trajectory_restarts: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedMargin {
    pub cone: ConeId,
    /// Minimum of `margin / ‖R‖` along the run.
    pub min_relative: f64,
    /// The start is strictly inside this cone; only then can it be lost.
    pub initially_inside: bool,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRun {
    pub index: usize,
    pub seed: u64,
    pub initial_margin: f64,
    /// The start is not strictly inside the cone; no invariance claim is made.
    pub outside_cone: bool,
    pub t_blowup: Option<f64>,
    pub t_stop: f64,
    pub checks: usize,
    /// Minimum of `margin / ‖R‖` along the run (max-norm of the raw state).
    pub min_relative_margin: f64,
    pub violated: bool,
    pub tracked: Vec<TrackedMargin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub config: InvarianceConfig,
    pub runs: Vec<InvarianceRun>,
    /// Indices of runs with a violation of the main or a tracked cone.
    pub violations: Vec<usize>,
    pub outside_cone: usize,
}

/// Violation threshold relative to the current max-norm.
pub const INVARIANCE_TOL: f64 = 1e-6;

fn invariance_run(
    config: &InvarianceConfig,
    index: usize,
    ctl: &StepControl,
    opts: &MarginOptions,
) -> Result<InvarianceRun> {
    let seed = config.seed.wrapping_add(index as u64);
    let mut o = opts.clone().with_seed(seed);
    let raw = random_tensor(config.n, seed, 1.0);
    let start = match config.start_margin {
        Some(target) => shift_into_cone(&raw, config.cone, target, &o)?.tensor,
        None => raw,
    };
    let first = cone_margin(&start, config.cone, &o)?;
    let mut run = InvarianceRun {
        index,
        seed,
        initial_margin: first.margin,
        outside_cone: !first.is_strict(&start),
        t_blowup: None,
        t_stop: 0.0,
        checks: 0,
        min_relative_margin: first.margin / start.max_norm(),
        violated: false,
        tracked: Vec::new(),
    };
    if run.outside_cone {
        return Ok(run);
    }

    let raw_ctl = StepControl {
        normalize: Normalization::None,
        ..ctl.clone()
    };
    let cap = 1e3 / start.max_norm();
    run.t_blowup = detect_blowup(&start, cap, &raw_ctl)?;
    let limit = run.t_blowup.map_or(f64::INFINITY, |t| 0.9 * t);
    run.t_stop = config.horizon.unwrap_or(f64::INFINITY).min(limit);
    if !run.t_stop.is_finite() {
        run.t_stop = cap;
    }
    let traj = integrate(&start, run.t_stop, &raw_ctl)?;
    let idx = checkpoints(&traj, config.log_step);
    run.checks = idx.len();

    o.optimizer.restarts = config.trajectory_restarts;
    o = o.warm_from(&first.certificate);
    let mut cones = vec![config.cone];
    cones.extend(config.tracked.iter().copied());
    let diags = diagnose(&traj, &idx, &cones, false, &o)?;
    for (c, cone) in cones.iter().enumerate() {
        let min_rel = diags
            .iter()
            .map(|d| d.margins[c] / d.norm.max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min);
        let violated = min_rel < -INVARIANCE_TOL;
        if c == 0 {
            run.min_relative_margin = min_rel;
            run.violated = violated;
        } else {
            let initially_inside = diags[0].margins[c] > STRICTNESS * diags[0].norm;
            run.tracked.push(TrackedMargin {
                cone: *cone,
                min_relative: min_rel,
                initially_inside,
                violated: initially_inside && violated,
            });
        }
    }
    Ok(run)
}

/// Samples starting tensors inside `config.cone`, flows each to
/// `min(horizon, 0.9·T)` and records the smallest relative margin seen.
pub fn invariance_experiment(
    config: &InvarianceConfig,
    ctl: &StepControl,
    opts: &MarginOptions,
) -> Result<InvarianceReport> {
    match config.cone {
        ConeId::Pic | ConeId::Pic1 | ConeId::Pic2 | ConeId::TwoPositive | ConeId::OperatorNonneg => {}
        other => {
            return Err(Error::SpecInvalid(format!(
                "invariance experiments support pic, pic1, pic2, 2pos and opnonneg, not {other}"
            )))
        }
    }
    ctl.validate()?;
    let runs: Vec<InvarianceRun> = (0..config.samples)
        .into_par_iter()
        .map(|i| invariance_run(config, i, ctl, opts))
        .collect::<Result<_>>()?;
    let violations = runs
        .iter()
        .filter(|r| r.violated || r.tracked.iter().any(|t| t.violated))
        .map(|r| r.index)
        .collect();
    let outside_cone = runs.iter().filter(|r| r.outside_cone).count();
    Ok(InvarianceReport {
        config: config.clone(),
        runs,
        violations,
        outside_cone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    /// Refuse starts outside the strict PIC2 cone with `λ, μ ∈ [0, 1]`.
    pub require_cone: bool,
    pub ratio_threshold: f64,
    pub log_step: f64,
    pub trajectory_restarts: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            require_cone: true,
            ratio_threshold: 0.99,
            log_step: 0.05,
            trajectory_restarts: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub t: f64,
    pub ratio: f64,
    pub ray_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub initial_margin: f64,
    pub initial_ratio: f64,
    pub t_blowup: Option<f64>,
    pub series: Vec<ConvergencePoint>,
    pub max_ratio: f64,
    /// Ratio exceeded the threshold before blowup.
    pub reached_threshold: bool,
    pub final_ray_distance: f64,
    /// Ray distance never increased over the last quarter of the checkpoints.
    pub monotone_final_quarter: bool,
}

/// `‖R/scal − I/scal(I)‖` with `I` the unit constant-curvature tensor.
pub fn ray_distance(r: &CurvatureTensor) -> f64 {
    let n = r.dim();
    let unit = constant_curvature(n, 1.0);
    let s = r.scalar();
    if s == 0.0 {
        return f64::INFINITY;
    }
    (&r.scaled(1.0 / s) - &unit.scaled(1.0 / unit.scalar())).norm()
}

/// Flows `r0` to blowup and tracks the pinching ratio and the distance to the
/// constant-curvature ray of the normalized solution.
pub fn convergence_experiment(
    r0: &CurvatureTensor,
    ctl: &StepControl,
    opts: &MarginOptions,
    conv: &ConvergenceOptions,
) -> Result<ConvergenceReport> {
    ctl.validate()?;
    let cone = ConeId::Pic2;
    let mut o = opts.clone();
    o.lambda_range = LambdaRange::Unit;
    let rep = cone_margin(r0, cone, &o)?;
    if conv.require_cone && !rep.is_strict(r0) {
        return Err(Error::NotInCone { margin: rep.margin });
    }
    let ctl = StepControl {
        normalize: Normalization::FixedScal(1.0),
        ..ctl.clone()
    };
    let cap = 1e3 / r0.max_norm().max(f64::MIN_POSITIVE);
    let (traj, t_blowup) = match integrate(r0, cap, &ctl) {
        Ok(traj) => (traj, None),
        Err(Error::BlowupReached { trajectory, t_blowup, .. }) => (*trajectory, Some(t_blowup)),
        Err(e) => return Err(e),
    };
    let idx = checkpoints(&traj, conv.log_step);
    o.optimizer.restarts = conv.trajectory_restarts;
    let diags = diagnose(&traj, &idx, &[], true, &o)?;
    let series: Vec<ConvergencePoint> = idx
        .iter()
        .zip(&diags)
        .map(|(&i, d)| ConvergencePoint {
            t: d.t,
            ratio: d.pinching.unwrap_or(f64::NEG_INFINITY),
            ray_distance: ray_distance(&traj.states[i]),
        })
        .collect();
    let max_ratio = series.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
    let quarter = &series[series.len() - series.len().div_ceil(4)..];
    let monotone = quarter
        .windows(2)
        .all(|w| w[1].ray_distance <= w[0].ray_distance + 1e-12);
    Ok(ConvergenceReport {
        initial_margin: rep.margin,
        initial_ratio: series[0].ratio,
        t_blowup,
        max_ratio,
        reached_threshold: max_ratio > conv.ratio_threshold,
        final_ray_distance: series.last().map_or(f64::NAN, |p| p.ray_distance),
        monotone_final_quarter: monotone,
        series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorPoint {
    pub t: f64,
    /// `|Ric̊|² / ((3/(2t))^σ scal^{2−σ})`, with `σ = ρ²`; 0 at `t = 0`.
    pub q: f64,
    pub exceeds: bool,
}

/// Ratio of `|Ric̊|²` to the interior-estimate bound along a three-dimensional
/// trajectory, using raw time and raw states.
pub fn interior_estimate_monitor(traj: &FlowTrajectory, rho: f64) -> Result<Vec<InteriorPoint>> {
    let n = traj.states.first().map_or(0, |s| s.dim());
    if n != 3 {
        return Err(Error::WrongDimension {
            expected: "n = 3".into(),
            got: n,
        });
    }
    let sigma = rho * rho;
    let mut out = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let r = traj.raw_state(i);
        let scal = r.scalar();
        let ric = r.ricci();
        let tol = 1e-12 * r.max_norm().max(1.0);
        let shifted = &ric - nalgebra::DMatrix::identity(3, 3) * (rho * scal);
        let min_eig = shifted.symmetric_eigenvalues().min();
        if scal < -tol || min_eig < -tol {
            return Err(Error::HypothesisViolated {
                index: i,
                reason: format!("Ric − ρ·scal has eigenvalue {min_eig:e}, scal = {scal:e}"),
            });
        }
        let ric0 = &ric - nalgebra::DMatrix::identity(3, 3) * (scal / 3.0);
        let num: f64 = ric0.iter().map(|x| x * x).sum();
        let t = traj.times[i];
        let q = if t <= 0.0 || num == 0.0 {
            0.0
        } else {
            num / ((1.5 / t).powf(sigma) * scal.powf(2.0 - sigma))
        };
        out.push(InteriorPoint { t, q, exceeds: q > 1.0 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_curvature_ray() {
        let r = constant_curvature(4, 2.0);
        assert!(ray_distance(&r) < 1e-15);
        let rep = convergence_experiment(
            &r,
            &StepControl::default(),
            &MarginOptions::default().with_restarts(4),
            &ConvergenceOptions {
                trajectory_restarts: 2,
                log_step: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(rep.series.iter().all(|p| (p.ratio - 1.0).abs() < 1e-9 && p.ray_distance < 1e-9));
        assert!(rep.t_blowup.is_some());
    }

    #[test]
    fn interior_monitor_round_sphere() {
        let traj = integrate(&constant_curvature(3, 1.0), 0.2, &StepControl::default()).unwrap();
        let q = interior_estimate_monitor(&traj, 0.2).unwrap();
        assert!(q.iter().all(|p| p.q.abs() < 1e-20));
        let traj4 = integrate(&constant_curvature(4, 1.0), 0.01, &StepControl::default()).unwrap();
        assert!(matches!(interior_estimate_monitor(&traj4, 0.2), Err(Error::WrongDimension { .. })));
    }

    #[test]
    fn interior_monitor_rejects_unpinched() {
        let traj = integrate(&constant_curvature(3, -1.0), 0.1, &StepControl::default()).unwrap();
        assert!(matches!(
            interior_estimate_monitor(&traj, 0.2),
            Err(Error::HypothesisViolated { index: 0, .. })
        ));
    }

    #[test]
    fn outside_cone_inputs_are_flagged() {
        let mut cfg = InvarianceConfig::new(ConeId::Pic, 4, 6, 1);
        cfg.start_margin = None;
        let rep = invariance_experiment(&cfg, &StepControl::default(), &MarginOptions::default().with_restarts(8)).unwrap();
        assert!(rep.outside_cone > 0);
        assert!(rep.runs.iter().filter(|r| r.outside_cone).all(|r| r.checks == 0));
    }

    #[test]
    fn tracked_cones_outside_at_start_are_not_violations() {
        let mut cfg = InvarianceConfig::new(ConeId::Pic, 5, 3, 7);
        cfg.tracked = vec![ConeId::Pic1];
        let rep = invariance_experiment(&cfg, &StepControl::default(), &MarginOptions::default().with_restarts(8)).unwrap();
        let t: Vec<&TrackedMargin> = rep.runs.iter().flat_map(|r| &r.tracked).collect();
        assert!(t.iter().any(|t| !t.initially_inside && t.min_relative < 0.0));
        assert!(t.iter().all(|t| !t.violated || t.initially_inside));
        assert!(rep.violations.is_empty());
    }
}
