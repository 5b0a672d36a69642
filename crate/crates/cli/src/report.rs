use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use curvlab::conditions::{ConditionReport, CrosscheckVerdict, SectionalExtremes};
use curvlab::flow::experiments::{ConvergenceOptions, ConvergenceReport, Diagnostic, InvarianceReport};
use curvlab::flow::KeyInequality;
use curvlab::ConeId;

use crate::config::ExperimentConfig;
use crate::{exit, Result};

pub const TOOL: &str = "curvlab";

/// One document per run. Field order is fixed by declaration order.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub results: Results,
    pub violations: Vec<Violation>,
    pub errors: Vec<ItemError>,
    /// Excluded from determinism comparisons.
    pub wall_time_s: f64,
    /// Side output (a tensor document) that is not part of the report.
    #[serde(skip)]
    pub artifact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub item: String,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemError {
    pub item: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Results {
    Check(CheckResult),
    Evolve(EvolveResult),
    Invariance(InvarianceReport),
    Convergence(ConvergenceResult),
    Boundary(BoundaryResult),
    Crosscheck(CrosscheckResult),
    Emit(EmitResult),
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub items: Vec<CheckItem>,
    /// Smallest pointwise pinching ratio over all items (the batch pinching constant).
    pub batch_pinching: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub item: String,
    pub n: usize,
    pub max_norm: f64,
    pub scal: f64,
    /// Largest entry of `Ric − (scal/n) g`.
    pub einstein_residual: f64,
    pub cones: Vec<ConeOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sectional: Option<SectionalExtremes>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pinching_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeOutcome {
    pub cone: ConeId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StateSummary {
    pub t: f64,
    pub scal: f64,
    pub max_norm: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveResult {
    pub n: usize,
    pub t_end: f64,
    /// `completed` or `blowup`.
    pub outcome: String,
    pub t_last: f64,
    pub t_blowup: Option<f64>,
    pub records: usize,
    pub reprojections: usize,
    pub initial: StateSummary,
    /// Unnormalized final state.
    pub last: StateSummary,
    /// Final state as stored (rescaled when normalization is on).
    pub last_stored: StateSummary,
    pub diagnostics: Vec<Diagnostic>,
    pub dumped_states: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceResult {
    pub options: ConvergenceOptions,
    pub report: ConvergenceReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryResult {
    pub n: usize,
    pub pic: ConditionReport,
    /// Whether the tensor lies in the closed PIC cone, so the checks apply.
    pub applicable: bool,
    pub inward_value: f64,
    pub key_inequality: KeyInequality,
    pub value_tolerance: f64,
    pub residual_tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckResult {
    pub samples: usize,
    pub verdicts: Vec<CrosscheckVerdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmitResult {
    pub model: String,
    pub n: usize,
    pub entries: usize,
    pub written_to: Option<String>,
}

impl RunReport {
    pub fn new(config: ExperimentConfig, results: Results) -> Self {
        Self {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command: config.command.clone(),
            seed: config.seed,
            config,
            results,
            violations: Vec::new(),
            errors: Vec::new(),
            wall_time_s: 0.0,
            artifact: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if !self.errors.is_empty() {
            exit::ERROR
        } else if !self.violations.is_empty() {
            exit::VIOLATIONS
        } else {
            exit::OK
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Report text with the timing field zeroed, for byte comparisons.
    pub fn to_json_untimed(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.wall_time_s = 0.0;
        copy.to_json()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} (seed {})", TOOL, self.command, self.seed);
        match &self.results {
            Results::Check(c) => {
                for item in &c.items {
                    let _ = writeln!(s, "  {} (n={}): scal {:.6}", item.item, item.n, item.scal);
                    for o in &item.cones {
                        match (&o.report, &o.error) {
                            (Some(r), _) => {
                                let _ = writeln!(s, "    {:<14} margin {:+.6e}", o.cone.to_string(), r.margin);
                            }
                            (None, Some(e)) => {
                                let _ = writeln!(s, "    {:<14} error: {e}", o.cone.to_string());
                            }
                            _ => {}
                        }
                    }
                    if let Some(p) = item.pinching_ratio {
                        let _ = writeln!(s, "    pinching ratio {p:.6}");
                    }
                }
                if let (Some(p), true) = (c.batch_pinching, c.items.len() > 1) {
                    let _ = writeln!(s, "  batch pinching {p:.6}");
                }
            }
            Results::Evolve(e) => {
                let _ = writeln!(
                    s,
                    "  {} at t = {:.10}: scal {:.10e}, |R| {:.6e}",
                    e.outcome, e.t_last, e.last.scal, e.last.max_norm
                );
                if let Some(tb) = e.t_blowup {
                    let _ = writeln!(s, "  blowup estimate {tb:.10}");
                }
            }
            Results::Invariance(r) => {
                let _ = writeln!(
                    s,
                    "  {} runs in {} (n={}), {} violating, {} started outside",
                    r.runs.len(),
                    r.config.cone,
                    r.config.n,
                    r.violations.len(),
                    r.outside_cone
                );
                let worst = r.runs.iter().map(|x| x.min_relative_margin).fold(f64::INFINITY, f64::min);
                let _ = writeln!(s, "  smallest relative margin {worst:+.3e}");
            }
            Results::Convergence(c) => {
                let r = &c.report;
                let _ = writeln!(
                    s,
                    "  ratio {:.6} -> max {:.6}, ray distance {:.3e}, monotone tail {}",
                    r.initial_ratio, r.max_ratio, r.final_ray_distance, r.monotone_final_quarter
                );
            }
            Results::Boundary(b) => {
                let _ = writeln!(
                    s,
                    "  pic margin {:+.3e}, inward {:+.6e}, key residual {:+.6e}",
                    b.pic.margin, b.inward_value, b.key_inequality.residual
                );
            }
            Results::Crosscheck(c) => {
                for v in &c.verdicts {
                    let _ = writeln!(
                        s,
                        "  {:<6} frame {:+.6e}, samples min {:+.6e}, agree {}",
                        v.cone.to_string(),
                        v.frame_margin,
                        v.min_sample,
                        v.agree
                    );
                }
            }
            Results::Emit(e) => {
                let _ = writeln!(s, "  {} (n={}, {} entries)", e.model, e.n, e.entries);
            }
        }
        for v in &self.violations {
            let _ = writeln!(s, "  VIOLATION {} [{}]: {}", v.item, v.kind, v.detail);
        }
        for e in &self.errors {
            let _ = writeln!(s, "  ERROR {}: {}", e.item, e.message);
        }
        s
    }
}

/// Writes through a temporary file in the target directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
