use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use curvlab::conditions::STRICTNESS;
use curvlab::flow::{Method, Normalization, StepControl};
use curvlab::io::read_tensor;
use curvlab::{BianchiMode, ConeId, CurvatureTensor, LambdaRange, MarginOptions, ModelSpec};

use crate::{CliError, Result};

#[derive(Parser, Debug, Clone)]
#[command(name = "curvlab", version, about = "Curvature cones and the Hamilton reaction ODE")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Cone margins and certificates for one tensor.
    Check(RunArgs),
    /// Integrate dR/dt = Q(R) and record diagnostics.
    Evolve(RunArgs),
    /// Flow random tensors from inside a cone and look for margin violations.
    Invariance(RunArgs),
    /// Track pinching and the distance to the constant-curvature ray to blowup.
    Convergence(RunArgs),
    /// Inward-pointing and key-inequality checks at the PIC minimizing frame.
    Boundary(RunArgs),
    /// Compare frame margins with complexified-vector samples.
    Crosscheck(RunArgs),
    /// Write a model tensor in the sym-reduced tensor format.
    EmitModel(RunArgs),
}

impl Command {
    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Check(a)
            | Command::Evolve(a)
            | Command::Invariance(a)
            | Command::Convergence(a)
            | Command::Boundary(a)
            | Command::Crosscheck(a)
            | Command::EmitModel(a) => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Check(_) => "check",
            Command::Evolve(_) => "evolve",
            Command::Invariance(_) => "invariance",
            Command::Convergence(_) => "convergence",
            Command::Boundary(_) => "boundary",
            Command::Crosscheck(_) => "crosscheck",
            Command::EmitModel(_) => "emit-model",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RangeArg {
    #[value(name = "01")]
    #[serde(rename = "01")]
    Unit,
    #[value(name = "sym")]
    #[serde(rename = "sym")]
    Symmetric,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Rk45,
    Rk4,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Model in text form, e.g. "fs(2)" or "shift(rand(4,seed=3,scale=1.0),pic,0.0)".
    #[arg(long)]
    pub model: Option<String>,
    /// Tensor document in the sym-reduced format.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated cones: sec, pic, pic1, pic2, 2pos, opnonneg, pinch(δ), ric(ρ), pic1scal(ρ), pic2scal(ρ).
    #[arg(long, value_delimiter = ',')]
    pub cones: Vec<String>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Flow horizon for invariance runs; defaults to 90% of the detected blowup time.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path (written atomically); the report goes to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 64)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value = "01")]
    pub lambda_range: RangeArg,
    /// Dimension of sampled tensors (invariance).
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Margin that sampled starting tensors are shifted to (invariance); negative disables shifting.
    #[arg(long, default_value_t = 0.1)]
    pub start_margin: f64,
    #[arg(long, value_enum, default_value = "rk45")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1e-3)]
    pub h_init: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_steps: usize,
    /// Rescale stored states to this scalar curvature (evolve).
    #[arg(long)]
    pub normalize: Option<f64>,
    /// Columnar diagnostics file (evolve).
    #[arg(long)]
    pub columns: Option<PathBuf>,
    /// Dump every k-th state as a tensor document into --dump-dir (evolve).
    #[arg(long)]
    pub dump_every: Option<usize>,
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
    /// Run convergence diagnostics even if the start is not strictly inside the cone.
    #[arg(long)]
    pub allow_boundary: bool,
    /// Growth of ln‖R‖ between diagnostic evaluations along trajectories.
    #[arg(long, default_value_t = 0.05)]
    pub log_step: f64,
    /// Print nothing to stdout beyond errors.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSource {
    Model(String),
    File(PathBuf),
}

/// Resolved configuration, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub input: Option<InputSource>,
    pub cones: Vec<ConeId>,
    pub t_end: Option<f64>,
    pub samples: Option<usize>,
    pub horizon: Option<f64>,
    pub seed: u64,
    pub restarts: usize,
    pub lambda_range: RangeArg,
    pub strictness: f64,
    pub dim: usize,
    pub start_margin: Option<f64>,
    pub step: StepControl,
    pub log_step: f64,
    pub allow_boundary: bool,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub columns: Option<PathBuf>,
    #[serde(skip)]
    pub dump: Option<(usize, PathBuf)>,
    #[serde(skip)]
    pub quiet: bool,
}

fn needs_input(command: &str) -> bool {
    command != "invariance"
}

impl ExperimentConfig {
    pub fn from_command(command: &Command) -> Result<Self> {
        let a = command.args();
        let name = command.name();
        let input = match (&a.model, &a.input) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either --model or --input, not both".into())),
            (Some(m), None) => Some(InputSource::Model(m.clone())),
            (None, Some(p)) => Some(InputSource::File(p.clone())),
            (None, None) => None,
        };
        if needs_input(name) && input.is_none() {
            return Err(CliError::Config(format!("{name} needs --model or --input")));
        }
        if !needs_input(name) && input.is_some() {
            return Err(CliError::Config("invariance samples its own tensors; drop --model/--input".into()));
        }
        let cones = a
            .cones
            .iter()
            .map(|c| c.parse::<ConeId>().map_err(|e| CliError::Config(format!("--cones: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let step = StepControl {
            method: match a.method {
                MethodArg::Rk45 => Method::Rk45,
                MethodArg::Rk4 => Method::Rk4,
            },
            h_init: a.h_init,
            rel_tol: a.rel_tol,
            max_steps: a.max_steps,
            normalize: a.normalize.map_or(Normalization::None, Normalization::FixedScal),
        };
        step.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if a.restarts == 0 {
            return Err(CliError::Config("--restarts must be at least 1".into()));
        }
        if !(a.log_step > 0.0) {
            return Err(CliError::Config("--log-step must be positive".into()));
        }
        let dump = match (a.dump_every, &a.dump_dir) {
            (Some(0), _) => return Err(CliError::Config("--dump-every must be at least 1".into())),
            (Some(k), Some(dir)) => Some((k, dir.clone())),
            (Some(_), None) => return Err(CliError::Config("--dump-every needs --dump-dir".into())),
            (None, Some(_)) => return Err(CliError::Config("--dump-dir needs --dump-every".into())),
            (None, None) => None,
        };
        Ok(Self {
            command: name.to_string(),
            input,
            cones,
            t_end: a.t_end,
            samples: a.samples,
            horizon: a.horizon,
            seed: a.seed,
            restarts: a.restarts,
            lambda_range: a.lambda_range,
            strictness: STRICTNESS,
            dim: a.dim,
            start_margin: (a.start_margin >= 0.0).then_some(a.start_margin),
            step,
            log_step: a.log_step,
            allow_boundary: a.allow_boundary,
            out: a.out.clone(),
            columns: a.columns.clone(),
            dump,
            quiet: a.quiet,
        })
    }

    pub fn margin_options(&self) -> MarginOptions {
        let mut o = MarginOptions::default().with_restarts(self.restarts).with_seed(self.seed);
        o.lambda_range = match self.lambda_range {
            RangeArg::Unit => LambdaRange::Unit,
            RangeArg::Symmetric => LambdaRange::Symmetric,
        };
        o
    }

    /// Builds or reads the input tensor.
    pub fn load_input(&self) -> Result<CurvatureTensor> {
        match &self.input {
            Some(InputSource::Model(text)) => {
                let spec = parse_model(text)?;
                Ok(spec.build_with(&self.margin_options())?)
            }
            Some(InputSource::File(path)) => read_tensor(path, BianchiMode::Strict)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
            None => Err(CliError::Config("no input given".into())),
        }
    }
}

/// Parses a model in its canonical text form.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    text.parse::<ModelSpec>().map_err(|e| CliError::Input(format!("model '{text}': {e}")))
}
