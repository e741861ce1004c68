//! Flag surface shared by every subcommand, config-file merging, and the
//! small parsers (grids, formats, parameter resolution) behind it.

use std::fmt;
use std::path::PathBuf;

use percascade::analytic::{CascadeParameters, ParameterError, Phase};

/// Anything that should abort with exit code 2: bad flags, bad config
/// files, bad grids, rejected parameters, I/O trouble.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Raw option set before defaults: every field optional so that a config
/// file can supply any value a flag did not. Flags win on conflict.
#[derive(clap::Args, Clone, Debug, Default)]
pub struct RawOpts {
    /// Stability index alpha in (1, 2); simulation excludes 3/2.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Loop weight n in (0, 2); needs --phase to pick the alpha branch.
    #[arg(long)]
    pub n: Option<f64>,
    /// Phase (dense or dilute) resolving --n to an alpha.
    #[arg(long)]
    pub phase: Option<String>,
    /// Power exponent theta: a single value, or start:stop:step where the
    /// command tabulates over theta.
    #[arg(long)]
    pub theta: Option<String>,
    /// Base perimeter (root value / first-passage depth).
    #[arg(long)]
    pub p: Option<u64>,
    /// Number of cascade generations to grow.
    #[arg(long)]
    pub generations: Option<u32>,
    /// Monte Carlo replicates / trees / rows, depending on the command.
    #[arg(long)]
    pub replicates: Option<u64>,
    /// Expansion threshold: nodes below it stay leaves.
    #[arg(long)]
    pub tmin: Option<u64>,
    /// Master seed; everything downstream is a pure function of it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: PERCASCADE_WORKERS, else 1). Results are
    /// byte-identical for any value; only wall time changes.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format: json or csv.
    #[arg(long)]
    pub format: Option<String>,
    /// Evaluation point(s) for tables and x-grids: value or start:stop:step.
    #[arg(long)]
    pub x: Option<String>,
    /// Tilt grid for the nesting cumulant table: value or start:stop:step.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Step law for `sample walk`: pm1, drift, skip, or stable (--alpha).
    #[arg(long)]
    pub law: Option<String>,
    /// key=value file supplying defaults for any flag not given.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl RawOpts {
    /// Merges the config file (if any) into unset fields: one `key=value`
    /// per line, `#` comments, keys named like the long flags.
    pub fn merged_with_config(mut self) -> Result<RawOpts, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(|e| {
            config(format!("cannot read config {}: {e}", path.display()))
        })?;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    idx + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            let parse_err = |what: &str| {
                config(format!(
                    "{}:{}: invalid {what} value {value:?}",
                    path.display(),
                    idx + 1
                ))
            };
            match key {
                "alpha" => fill(&mut self.alpha, value.parse().map_err(|_| parse_err(key))?),
                "n" => fill(&mut self.n, value.parse().map_err(|_| parse_err(key))?),
                "phase" => fill(&mut self.phase, value.to_string()),
                "theta" => fill(&mut self.theta, value.to_string()),
                "p" => fill(&mut self.p, value.parse().map_err(|_| parse_err(key))?),
                "generations" => {
                    fill(&mut self.generations, value.parse().map_err(|_| parse_err(key))?)
                }
                "replicates" => {
                    fill(&mut self.replicates, value.parse().map_err(|_| parse_err(key))?)
                }
                "tmin" => fill(&mut self.tmin, value.parse().map_err(|_| parse_err(key))?),
                "seed" => fill(&mut self.seed, value.parse().map_err(|_| parse_err(key))?),
                "workers" => fill(&mut self.workers, value.parse().map_err(|_| parse_err(key))?),
                "out" => fill(&mut self.out, PathBuf::from(value)),
                "format" => fill(&mut self.format, value.to_string()),
                "x" => fill(&mut self.x, value.to_string()),
                "lambda" => fill(&mut self.lambda, value.to_string()),
                "law" => fill(&mut self.law, value.to_string()),
                other => {
                    return Err(config(format!(
                        "{}:{}: unknown config key {other:?}",
                        path.display(),
                        idx + 1
                    )))
                }
            }
        }
        Ok(self)
    }

    /// Single theta value; rejects grid syntax.
    pub fn theta_value(&self) -> Result<Option<f64>, CliError> {
        match &self.theta {
            None => Ok(None),
            Some(s) => s
                .parse::<f64>()
                .map(Some)
                .map_err(|_| config(format!("--theta {s:?}: expected a single value here"))),
        }
    }
}

fn fill<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

/// Output format for reports, samples, and tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutFormat {
    Json,
    Csv,
}

/// The format flag, if any; commands apply their own default.
pub fn parse_format(o: &RawOpts) -> Result<Option<OutFormat>, CliError> {
    match o.format.as_deref() {
        None => Ok(None),
        Some("json") => Ok(Some(OutFormat::Json)),
        Some("csv") => Ok(Some(OutFormat::Csv)),
        Some(other) => Err(config(format!("--format {other:?}: expected json or csv"))),
    }
}

/// `start:stop:step` (inclusive of start, exclusive of stop beyond
/// rounding) or a single value.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| config(format!("grid {text:?}: {s:?} is not a number")))
    };
    match parts.len() {
        1 => Ok(vec![num(parts[0])?]),
        3 => {
            let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            grid_from(start, stop, step)
        }
        _ => Err(config(format!(
            "grid {text:?}: expected a value or start:stop:step"
        ))),
    }
}

/// Arithmetic grid `start, start+step, ...` strictly below `stop` (up to
/// a relative rounding guard, so `0:1:0.1` has exactly ten points).
pub fn grid_from(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step.is_finite() && step != 0.0) {
        return Err(config(format!("grid step {step} must be finite and nonzero")));
    }
    let span = (stop - start) / step;
    if !(span > 0.0) {
        return Err(config(format!(
            "empty grid: start {start}, stop {stop}, step {step}"
        )));
    }
    let count = (span - 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

fn parse_phase(text: &str) -> Result<Phase, CliError> {
    match text {
        "dense" => Ok(Phase::Dense),
        "dilute" => Ok(Phase::Dilute),
        other => Err(config(format!("--phase {other:?}: expected dense or dilute"))),
    }
}

fn explain(e: ParameterError) -> CliError {
    match e {
        ParameterError::AlphaCritical => config(
            "alpha = 3/2 is the critical point between the dense and dilute phases; \
             simulation excludes it. Tabulation (`table`) still accepts it.",
        ),
        other => config(format!("invalid parameters: {other:?}")),
    }
}

/// Cascade parameters for simulation commands: `--alpha`, or `--n` with
/// `--phase`, else the given default. Rejects `alpha = 3/2`.
pub fn resolve_params(o: &RawOpts, default_alpha: f64) -> Result<CascadeParameters, CliError> {
    match (o.alpha, o.n) {
        (Some(_), Some(_)) => Err(config("give either --alpha or --n, not both")),
        (Some(alpha), None) => CascadeParameters::from_alpha(alpha).map_err(explain),
        (None, Some(n)) => {
            let phase = match &o.phase {
                Some(s) => parse_phase(s)?,
                None => return Err(config("--n needs --phase (dense or dilute)")),
            };
            CascadeParameters::from_n_loop(n, phase).map_err(explain)
        }
        (None, None) => CascadeParameters::from_alpha(default_alpha).map_err(explain),
    }
}

/// Parameters for tabulation: as [`resolve_params`], except the critical
/// `alpha = 3/2` is admitted (the closed forms are defined there even
/// though the samplers refuse it). Both phases coincide at the critical
/// point, so the phase tag is arbitrary.
pub fn resolve_params_table(o: &RawOpts, default_alpha: f64) -> Result<CascadeParameters, CliError> {
    let critical = |alpha: f64| CascadeParameters {
        alpha,
        phase: Phase::Dilute,
        n_loop: 2.0 * (std::f64::consts::PI * (alpha - 1.5)).cos(),
        kappa_cle: 4.0 / (alpha - 0.5),
        theta_malthus: 2.0f64.min(2.0 * alpha - 1.0),
        levy_scale: 1.0,
    };
    match (o.alpha, o.n) {
        (Some(alpha), None) if alpha == 1.5 => Ok(critical(alpha)),
        (None, None) if default_alpha == 1.5 => Ok(critical(default_alpha)),
        _ => resolve_params(o, default_alpha),
    }
}
