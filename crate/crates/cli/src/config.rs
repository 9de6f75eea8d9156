//! Run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use clap::Args;
use epibundle_core::bundle::{RouteMode, SequenceSchedule};
use epibundle_core::corpus::{corpus_get, corpus_names, parse_piecewise, ExampleCase, PiecewiseExpr};
use epibundle_core::subderiv::EpiGrid;
use epibundle_core::{Error, FunctionOracle, PrimalDualPair, Result, Vector};
use serde::{Deserialize, Serialize};

/// Every field is optional so a `--config` file and command-line flags can
/// be layered; flags win.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Registry name, piecewise text, or a path to a file holding piecewise text.
    #[arg(long = "fn", value_name = "FUNCTION")]
    pub function: Option<String>,
    /// Base point x̄ (comma-separated).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Option<Vec<f64>>,
    /// Subgradient v̄ (comma-separated).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub v: Option<Vec<f64>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "r-level")]
    pub r_level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Central-difference step for gradients of piecewise functions.
    #[arg(long = "grad-step")]
    pub grad_step: Option<f64>,

    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long = "t-rho")]
    pub t_rho: Option<f64>,
    #[arg(long = "t-levels")]
    pub t_levels: Option<usize>,
    /// Number of sweep directions.
    #[arg(long)]
    pub directions: Option<usize>,
    #[arg(long = "ball-samples")]
    pub ball_samples: Option<usize>,
    #[arg(long = "est-tol")]
    pub est_tol: Option<f64>,

    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long = "cluster-eps")]
    pub cluster_eps: Option<f64>,
    #[arg(long = "random-phases")]
    pub random_phases: Option<usize>,
    /// Sine levels c for oscillation-aware paths with sin(1/x) = c.
    #[arg(long = "sine-levels", value_delimiter = ',', allow_negative_numbers = true)]
    pub sine_levels: Option<Vec<f64>>,
    /// Convergence tolerance of finite-difference Hessian probes.
    #[arg(long = "hess-tol")]
    pub hess_tol: Option<f64>,

    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Directory for CSV tables.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

macro_rules! layer {
    ($dst:expr, $src:expr, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::argument(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::argument(format!("bad config {}: {e}", path.display())))
    }

    /// `self` overridden by every field set in `top`.
    pub fn layered(mut self, top: &RunConfig) -> RunConfig {
        layer!(
            self, top, function, x, v, lambda, r_level, seed, grad_step, t0, t_rho, t_levels, directions,
            ball_samples, est_tol, r0, rho, levels, cluster_eps, random_phases, sine_levels, hess_tol, json, csv
        );
        self
    }
}

/// Where a function came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Registry,
    Piecewise,
    File,
}

pub struct Resolved {
    pub source: Source,
    pub oracle: FunctionOracle,
    pub case: Option<ExampleCase>,
    pub piecewise: Option<PiecewiseExpr>,
    pub pair: PrimalDualPair,
    pub lambda: f64,
    pub r_level: f64,
    pub grid: EpiGrid,
    pub schedule: SequenceSchedule,
    pub seed: u64,
}

impl Resolved {
    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "source": self.source,
            "label": self.oracle.label(),
            "dim": self.dim(),
            "x": self.pair.x.as_slice(),
            "v": self.pair.v.as_slice(),
            "fx": self.pair.fx,
            "lambda": self.lambda,
            "r_level": self.r_level,
            "piecewise": self.piecewise.as_ref().map(|p| serde_json::json!({
                "text": p.pretty_print(),
                "breakpoints": p.breakpoints,
                "uncovered": p.gaps,
            })),
        })
    }
}

fn vector(name: &str, v: &[f64], n: usize) -> Result<Vector> {
    if v.len() != n {
        return Err(Error::argument(format!("--{name} needs {n} components, got {}", v.len())));
    }
    if v.iter().any(|t| !t.is_finite()) {
        return Err(Error::argument(format!("--{name} must be finite")));
    }
    Ok(Vector::from_column_slice(v))
}

pub fn resolve(cfg: &RunConfig) -> Result<Resolved> {
    let spec = cfg
        .function
        .as_deref()
        .ok_or_else(|| Error::argument("--fn is required (registry name, piecewise text or file path)"))?;
    let (source, case, piecewise) = if corpus_names().contains(&spec) {
        (Source::Registry, Some(corpus_get(spec)?), None)
    } else if Path::new(spec).is_file() {
        let text = std::fs::read_to_string(spec)
            .map_err(|e| Error::argument(format!("cannot read {spec}: {e}")))?;
        (Source::File, None, Some(parse_piecewise(&text)?))
    } else if spec.contains(" on ") {
        (Source::Piecewise, None, Some(parse_piecewise(spec)?))
    } else {
        return Err(Error::Lookup(format!(
            "{spec:?} is not a registry name, a file, or piecewise text; known names: {}",
            corpus_names().join(", ")
        )));
    };
    let grad_step = cfg.grad_step.unwrap_or(1e-6);
    if !(grad_step > 0.0) {
        return Err(Error::argument("--grad-step must be positive"));
    }
    let oracle = match (&case, &piecewise) {
        (Some(c), _) => c.oracle.clone(),
        (None, Some(p)) => p.to_oracle("piecewise", Some(grad_step)),
        _ => unreachable!(),
    };
    let n = oracle.dim();
    let x = match &cfg.x {
        Some(x) => vector("x", x, n)?,
        None => case.as_ref().map_or(Vector::zeros(n), |c| c.base_pair.x.clone()),
    };
    let v = match &cfg.v {
        Some(v) => vector("v", v, n)?,
        None => case.as_ref().map_or(Vector::zeros(n), |c| c.base_pair.v.clone()),
    };
    let pair = PrimalDualPair::new(&oracle, x, v)?;
    if oracle.has_subgrad_graph() && !oracle.in_subgrad_graph(&pair.x, &pair.v)? {
        return Err(Error::argument(format!(
            "v = {:?} is not a subgradient of {} at x = {:?}",
            pair.v.as_slice(),
            oracle.label(),
            pair.x.as_slice()
        )));
    }
    let lambda = cfg.lambda.unwrap_or(case.as_ref().map_or(0.1, |c| c.lambda));
    let r_level = cfg.r_level.unwrap_or(case.as_ref().map_or(0.0, |c| c.r_level));
    let seed = cfg.seed.unwrap_or(0);

    let mut grid = case.as_ref().map_or_else(|| EpiGrid::new(n), |c| c.grid.clone());
    grid.seed = seed;
    if let Some(t) = cfg.t0 {
        grid.t0 = t;
    }
    if let Some(t) = cfg.t_rho {
        grid.t_rho = t;
    }
    if let Some(t) = cfg.t_levels {
        grid.t_levels = t;
    }
    if let Some(b) = cfg.ball_samples {
        grid.ball_samples = b;
    }
    if let Some(e) = cfg.est_tol {
        grid.est_tol = e;
    }
    if let Some(d) = cfg.directions {
        grid = grid.with_directions(d);
    }
    grid.validate()?;

    let mut schedule = case.as_ref().map_or_else(|| SequenceSchedule::new(n), |c| c.schedule.clone());
    schedule.seed = seed;
    if let Some(r) = cfg.r0 {
        schedule.r0 = r;
    }
    if let Some(r) = cfg.rho {
        schedule.rho = r;
    }
    if let Some(l) = cfg.levels {
        schedule.levels = l;
    }
    if let Some(e) = cfg.cluster_eps {
        schedule.cluster_eps = e;
    }
    if let Some(p) = cfg.random_phases {
        schedule.random_phases = p;
    }
    if let Some(c) = &cfg.sine_levels {
        schedule = schedule.with_sine_levels(c);
    }
    if let Some(t) = cfg.hess_tol {
        schedule.probe.hess_tol = t;
    }
    schedule.validate()?;

    Ok(Resolved {
        source,
        oracle,
        case,
        piecewise,
        pair,
        lambda,
        r_level,
        grid,
        schedule,
        seed,
    })
}

pub fn parse_route_mode(s: &str) -> std::result::Result<RouteMode, String> {
    match s {
        "envelope" | "envelope_route" => Ok(RouteMode::EnvelopeRoute),
        "direct" | "direct_route" => Ok(RouteMode::DirectRoute),
        "both" => Ok(RouteMode::Both),
        _ => Err(format!("unknown route {s:?}; use envelope, direct or both")),
    }
}
