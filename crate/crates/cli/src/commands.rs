use std::path::{Path, PathBuf};
use std::time::Instant;

use curvlab::conditions::{
    complex_condition_crosscheck, cone_margin, pinching_ratio_of, sectional_extremes, Certificate, STRICTNESS,
};
use curvlab::flow::experiments::{
    checkpoints, convergence_experiment, diagnose, diagnostics_columns, invariance_experiment, ConvergenceOptions,
    InvarianceConfig,
};
use curvlab::flow::{boundary_inward_value, integrate, key_inequality_residual, FlowTrajectory};
use curvlab::io::{read_tensor, tensor_to_string};
use curvlab::{BianchiMode, ConeId, CurvatureTensor, Error as CoreError};

use crate::config::{parse_model, ExperimentConfig, InputSource};
use crate::report::{
    write_atomic, BoundaryResult, CheckItem, CheckResult, ConeOutcome, ConvergenceResult, CrosscheckResult,
    EmitResult, EvolveResult, ItemError, Results, RunReport, StateSummary, Violation,
};
use crate::{CliError, Result};

pub const DEFAULT_INVARIANCE_SAMPLES: usize = 10;
pub const DEFAULT_CROSSCHECK_SAMPLES: usize = 200;
/// Boundary checks: value tolerance per unit `max(1, |R|²)`.
pub const BOUNDARY_VALUE_TOL: f64 = 1e-8;
/// Boundary checks: first-variation tolerance per unit `max(1, |R|)`.
pub const BOUNDARY_RESIDUAL_TOL: f64 = 1e-6;

/// Cone inclusions checked by `check` whenever both ends are requested.
fn implied(stronger: ConeId, weaker: ConeId) -> bool {
    use ConeId::*;
    match (stronger, weaker) {
        (OperatorNonneg, TwoPositive | Pic2 | Pic1 | Pic | SecNonneg) => true,
        (Pic2, Pic1 | Pic | SecNonneg) => true,
        (Pic1, Pic) => true,
        (PointwisePinched(d), Pic2 | Pic1 | Pic | SecNonneg) => d >= 0.25,
        (PointwisePinched(d), PointwisePinched(e)) => d > e,
        _ => false,
    }
}

/// Runs one configured command and returns its report.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = match config.command.as_str() {
        "check" => check(config)?,
        "evolve" => evolve(config)?,
        "invariance" => invariance(config)?,
        "convergence" => convergence(config)?,
        "boundary" => boundary(config)?,
        "crosscheck" => crosscheck(config)?,
        "emit-model" => emit_model(config)?,
        other => return Err(CliError::Config(format!("unknown command '{other}'"))),
    };
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn input_label(config: &ExperimentConfig) -> String {
    match &config.input {
        Some(InputSource::Model(m)) => m.clone(),
        Some(InputSource::File(p)) => p.display().to_string(),
        None => String::new(),
    }
}

fn single_input(config: &ExperimentConfig) -> Result<CurvatureTensor> {
    if let Some(InputSource::File(p)) = &config.input {
        if p.is_dir() {
            return Err(CliError::Input(format!("{} is a directory; only check accepts collections", p.display())));
        }
    }
    config.load_input()
}

/// Items for `check`: one tensor, or every file of a directory in name order.
fn check_items(config: &ExperimentConfig) -> Result<Vec<(String, std::result::Result<CurvatureTensor, String>)>> {
    match &config.input {
        Some(InputSource::File(dir)) if dir.is_dir() => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(CliError::Input(format!("{} contains no tensor files", dir.display())));
            }
            Ok(paths
                .into_iter()
                .map(|p| {
                    let t = read_tensor(&p, BianchiMode::Strict).map_err(|e| e.to_string());
                    (file_label(&p), t)
                })
                .collect())
        }
        _ => Ok(vec![(input_label(config), Ok(config.load_input()?))]),
    }
}

fn file_label(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn default_cones(n: usize) -> Vec<ConeId> {
    let mut cones = vec![ConeId::SecNonneg];
    if n >= 4 {
        cones.extend([ConeId::Pic, ConeId::Pic1, ConeId::Pic2]);
    }
    if n >= 3 {
        cones.extend([ConeId::TwoPositive, ConeId::OperatorNonneg]);
    }
    cones
}

fn einstein_residual(r: &CurvatureTensor) -> f64 {
    let n = r.dim();
    let ric = r.ricci();
    let mean = r.scalar() / n as f64;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { mean } else { 0.0 };
            worst = worst.max((ric[(i, j)] - target).abs());
        }
    }
    worst
}

fn check(config: &ExperimentConfig) -> Result<RunReport> {
    let opts = config.margin_options();
    let mut items = Vec::new();
    let mut violations = Vec::new();
    let mut errors = Vec::new();
    for (label, loaded) in check_items(config)? {
        let r = match loaded {
            Ok(r) => r,
            Err(message) => {
                errors.push(ItemError { item: label, message });
                continue;
            }
        };
        let cones = if config.cones.is_empty() {
            default_cones(r.dim())
        } else {
            config.cones.clone()
        };
        let outcomes: Vec<ConeOutcome> = cones
            .iter()
            .map(|&cone| match cone_margin(&r, cone, &opts) {
                Ok(rep) => ConeOutcome {
                    cone,
                    strict: Some(rep.is_strict(&r)),
                    report: Some(rep),
                    error: None,
                },
                Err(e) => ConeOutcome {
                    cone,
                    strict: None,
                    report: None,
                    error: Some(e.to_string()),
                },
            })
            .collect();
        for o in &outcomes {
            if let Some(e) = &o.error {
                errors.push(ItemError {
                    item: format!("{label}: {}", o.cone),
                    message: e.clone(),
                });
            }
        }
        let tol = STRICTNESS * r.max_norm();
        for s in &outcomes {
            for w in &outcomes {
                let (Some(sr), Some(wr)) = (&s.report, &w.report) else { continue };
                if implied(s.cone, w.cone) && s.strict == Some(true) && wr.margin < -tol {
                    violations.push(Violation {
                        item: label.clone(),
                        kind: "implication".into(),
                        detail: format!(
                            "{} margin {:e} is strict but {} margin is {:e}",
                            s.cone, sr.margin, w.cone, wr.margin
                        ),
                    });
                }
            }
        }
        let wants_pinching = cones.iter().any(|c| matches!(c, ConeId::PointwisePinched(_)));
        let (sectional, pinching_ratio) = if wants_pinching {
            match sectional_extremes(&r, &opts) {
                Ok(ext) => {
                    let ratio = pinching_ratio_of(&ext).ok();
                    (Some(ext), ratio)
                }
                Err(e) => {
                    errors.push(ItemError {
                        item: format!("{label}: pinching"),
                        message: e.to_string(),
                    });
                    (None, None)
                }
            }
        } else {
            (None, None)
        };
        items.push(CheckItem {
            item: label,
            n: r.dim(),
            max_norm: r.max_norm(),
            scal: r.scalar(),
            einstein_residual: einstein_residual(&r),
            cones: outcomes,
            sectional,
            pinching_ratio,
        });
    }
    let ratios: Vec<f64> = items.iter().filter_map(|i| i.pinching_ratio).collect();
    let batch_pinching = (!ratios.is_empty()).then(|| ratios.iter().copied().fold(f64::INFINITY, f64::min));
    let mut report = RunReport::new(config.clone(), Results::Check(CheckResult { items, batch_pinching }));
    report.violations = violations;
    report.errors = errors;
    Ok(report)
}

fn summary(t: f64, r: &CurvatureTensor) -> StateSummary {
    StateSummary {
        t,
        scal: r.scalar(),
        max_norm: r.max_norm(),
        norm: r.norm(),
    }
}

fn evolve(config: &ExperimentConfig) -> Result<RunReport> {
    let t_end = config
        .t_end
        .ok_or_else(|| CliError::Config("evolve needs --t-end".into()))?;
    let r0 = single_input(config)?;
    let (traj, t_blowup): (FlowTrajectory, Option<f64>) = match integrate(&r0, t_end, &config.step) {
        Ok(traj) => (traj, None),
        Err(CoreError::BlowupReached { trajectory, t_blowup, .. }) => (*trajectory, Some(t_blowup)),
        Err(e) => return Err(e.into()),
    };
    let idx = checkpoints(&traj, config.log_step);
    let with_pinching = config.cones.iter().any(|c| matches!(c, ConeId::PointwisePinched(_)));
    let diagnostics = diagnose(&traj, &idx, &config.cones, with_pinching, &config.margin_options())?;

    if let Some(path) = &config.columns {
        write_atomic(path, &diagnostics_columns(&diagnostics, &config.cones))?;
    }
    let mut dumped = 0;
    if let Some((every, dir)) = &config.dump {
        std::fs::create_dir_all(dir)?;
        for i in (0..traj.len()).step_by(*every) {
            write_atomic(&dir.join(format!("state_{i:06}.json")), &tensor_to_string(&traj.states[i]))?;
            dumped += 1;
        }
    }

    let last = traj.len() - 1;
    let result = EvolveResult {
        n: r0.dim(),
        t_end,
        outcome: if t_blowup.is_some() { "blowup" } else { "completed" }.into(),
        t_last: traj.last_time(),
        t_blowup,
        records: traj.len(),
        reprojections: traj.reprojections,
        initial: summary(0.0, &r0),
        last: summary(traj.last_time(), &traj.raw_state(last)),
        last_stored: summary(traj.last_time(), traj.final_state()),
        diagnostics,
        dumped_states: dumped,
    };
    Ok(RunReport::new(config.clone(), Results::Evolve(result)))
}

fn invariance(config: &ExperimentConfig) -> Result<RunReport> {
    let cone = config.cones.first().copied().unwrap_or(ConeId::Pic);
    let samples = config.samples.unwrap_or(DEFAULT_INVARIANCE_SAMPLES);
    let mut inv = InvarianceConfig::new(cone, config.dim, samples, config.seed);
    inv.tracked = config.cones.iter().skip(1).copied().collect();
    inv.horizon = config.horizon;
    inv.start_margin = config.start_margin;
    inv.log_step = config.log_step;
    let rep = invariance_experiment(&inv, &config.step, &config.margin_options())?;
    let mut violations = Vec::new();
    for &i in &rep.violations {
        let run = &rep.runs[i];
        let mut detail = format!("{} relative margin {:e}", cone, run.min_relative_margin);
        for t in run.tracked.iter().filter(|t| t.violated) {
            detail.push_str(&format!("; {} relative margin {:e}", t.cone, t.min_relative));
        }
        violations.push(Violation {
            item: format!("run {i} (seed {})", run.seed),
            kind: "invariance".into(),
            detail,
        });
    }
    let mut report = RunReport::new(config.clone(), Results::Invariance(rep));
    report.violations = violations;
    Ok(report)
}

fn convergence(config: &ExperimentConfig) -> Result<RunReport> {
    let r0 = single_input(config)?;
    let options = ConvergenceOptions {
        require_cone: !config.allow_boundary,
        log_step: config.log_step,
        ..ConvergenceOptions::default()
    };
    let rep = convergence_experiment(&r0, &config.step, &config.margin_options(), &options)?;
    let label = input_label(config);
    let mut violations = Vec::new();
    if !rep.reached_threshold {
        violations.push(Violation {
            item: label.clone(),
            kind: "pinching".into(),
            detail: format!(
                "largest ratio {} does not exceed {}",
                rep.max_ratio, options.ratio_threshold
            ),
        });
    }
    if !rep.monotone_final_quarter {
        violations.push(Violation {
            item: label,
            kind: "ray_distance".into(),
            detail: "distance to the constant-curvature ray increases in the final quarter".into(),
        });
    }
    let mut report = RunReport::new(config.clone(), Results::Convergence(ConvergenceResult { options, report: rep }));
    report.violations = violations;
    Ok(report)
}

fn boundary(config: &ExperimentConfig) -> Result<RunReport> {
    let r = single_input(config)?;
    let pic = cone_margin(&r, ConeId::Pic, &config.margin_options())?;
    let Certificate::Frame { frame, .. } = &pic.certificate else {
        return Err(CliError::Input("PIC certificate is not a frame".into()));
    };
    let inward_value = boundary_inward_value(&r, frame)?;
    let key = key_inequality_residual(&r, frame)?;
    let scale = r.max_norm().max(1.0);
    let value_tolerance = BOUNDARY_VALUE_TOL * scale * scale;
    let residual_tolerance = BOUNDARY_RESIDUAL_TOL * scale;
    let applicable = pic.margin >= -STRICTNESS * r.max_norm();
    let label = input_label(config);
    let mut violations = Vec::new();
    if applicable {
        let mut flag = |kind: &str, detail: String| {
            violations.push(Violation {
                item: label.clone(),
                kind: kind.into(),
                detail,
            })
        };
        if inward_value < -value_tolerance {
            flag("inward_value", format!("{inward_value:e} < -{value_tolerance:e}"));
        }
        if key.residual < -value_tolerance {
            flag("key_inequality", format!("{:e} < -{value_tolerance:e}", key.residual));
        }
        let step1 = key.step1_residuals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if step1 >= residual_tolerance {
            flag("step1_residual", format!("{step1:e} >= {residual_tolerance:e}"));
        }
        if key.step2_residual >= residual_tolerance {
            flag("step2_residual", format!("{:e} >= {residual_tolerance:e}", key.step2_residual));
        }
    }
    let result = BoundaryResult {
        n: r.dim(),
        pic,
        applicable,
        inward_value,
        key_inequality: key,
        value_tolerance,
        residual_tolerance,
    };
    let mut report = RunReport::new(config.clone(), Results::Boundary(result));
    report.violations = violations;
    Ok(report)
}

fn crosscheck(config: &ExperimentConfig) -> Result<RunReport> {
    let r = single_input(config)?;
    let samples = config.samples.unwrap_or(DEFAULT_CROSSCHECK_SAMPLES);
    let cones = if config.cones.is_empty() {
        vec![ConeId::Pic, ConeId::Pic1, ConeId::Pic2]
    } else {
        config.cones.clone()
    };
    let opts = config.margin_options();
    let label = input_label(config);
    let mut verdicts = Vec::new();
    let mut errors = Vec::new();
    let mut violations = Vec::new();
    for cone in cones {
        match complex_condition_crosscheck(&r, cone, samples, &opts) {
            Ok(v) => {
                if !v.agree {
                    violations.push(Violation {
                        item: label.clone(),
                        kind: "crosscheck".into(),
                        detail: format!(
                            "{}: frame margin {:e}, {} negative samples, smallest {:e}",
                            cone, v.frame_margin, v.negative_samples, v.min_sample
                        ),
                    });
                }
                verdicts.push(v);
            }
            Err(e) => errors.push(ItemError {
                item: format!("{label}: {cone}"),
                message: e.to_string(),
            }),
        }
    }
    let mut report = RunReport::new(config.clone(), Results::Crosscheck(CrosscheckResult { samples, verdicts }));
    report.violations = violations;
    report.errors = errors;
    Ok(report)
}

fn emit_model(config: &ExperimentConfig) -> Result<RunReport> {
    let r = single_input(config)?;
    let model = match &config.input {
        Some(InputSource::Model(text)) => parse_model(text)?.to_string(),
        _ => input_label(config),
    };
    let document = tensor_to_string(&r);
    let written_to = match &config.out {
        Some(path) => {
            write_atomic(path, &document)?;
            Some(path.display().to_string())
        }
        None => None,
    };
    let result = EmitResult {
        model,
        n: r.dim(),
        entries: r.canonical_entries().len(),
        written_to,
    };
    let mut report = RunReport::new(config.clone(), Results::Emit(result));
    if config.out.is_none() {
        report.artifact = Some(document);
    }
    Ok(report)
}
