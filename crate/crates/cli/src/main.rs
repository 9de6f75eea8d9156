mod commands;
mod config;
mod corpus_run;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epibundle_core::bundle::RouteMode;
use epibundle_core::gtd::Route;

use config::{parse_route_mode, RunConfig};

const GRAMMAR: &str = "\
Functions (--fn) are a registry name (see `epibundle corpus list`), a
piecewise definition, or a path to a file holding one:

  program  := piece (\";\" piece)* [\";\"]
  piece    := expr \"on\" interval
  interval := (\"[\" | \"(\") bound \",\" bound (\"]\" | \")\")
  bound    := [\"-\" | \"+\"] (\"inf\" | number)
  expr     := term ((\"+\" | \"-\") term)*
  term     := unary ((\"*\" | \"/\") unary)*
  unary    := \"-\" unary | power
  power    := atom [\"^\" unary]
  atom     := number | \"x\" | func \"(\" expr \")\" | \"(\" expr \")\"
  func     := abs | sgn | sin | cos | sqrt

Example: --fn \"x^2 on [0,inf); 1 on (-inf,0)\". Brackets close an
interval, parentheses open it; uncovered points evaluate to +inf.

Exit codes: 0 verdict computed, 1 corpus mismatch, 2 argument or
capability error, 3 numeric error. EPIBUNDLE_THREADS caps worker threads.";

#[derive(Parser)]
#[command(name = "epibundle", version, about = "Second-order variational analysis of nonsmooth functions", after_help = GRAMMAR)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    #[command(flatten)]
    pub run: RunConfig,
    /// JSON file with a run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Moreau envelope, its gradient and (optionally) Hessian at z.
    Envelope {
        #[command(flatten)]
        common: Common,
        /// Evaluation point (default x̄ + λv̄).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        z: Option<Vec<f64>>,
        /// Also probe the envelope Hessian.
        #[arg(long)]
        hessian: bool,
        /// CSV file for the prox objective samples (1-D searches).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Proximal mapping at z.
    Prox {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        z: Option<Vec<f64>>,
    },
    /// Second-order subderivative estimates and the twice epi-differentiability test.
    Subderiv {
        #[command(flatten)]
        common: Common,
        /// Direction (comma-separated); repeat for several. Default: the sweep.
        #[arg(long, allow_hyphen_values = true)]
        w: Vec<String>,
    },
    /// Generalized twice differentiability verdict.
    GtdCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "both", value_parser = parse_route)]
        route: Route,
        /// Also report the envelope identity gap (gtd verdicts only).
        #[arg(long)]
        identity: bool,
    },
    /// Quadratic bundle sampler.
    QuadBundle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        attentive: bool,
        /// envelope, direct or both (default: the registry entry's route, else envelope).
        #[arg(long, value_parser = parse_route_mode)]
        route: Option<RouteMode>,
    },
    /// Hessian bundle of a C^{1,1} function.
    HessianBundle {
        #[command(flatten)]
        common: Common,
    },
    /// Sampled second-order growth at the base pair.
    GrowthCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        kappa: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3])]
        radius: Vec<f64>,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
    },
    /// Sampled variational s-convexity certificate over a localization.
    SvarCert {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        s: f64,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        /// Localization radius (default: the registry entry's, else 0.25).
        #[arg(long)]
        eps: Option<f64>,
        /// Number of subdifferential-graph samples.
        #[arg(long, default_value_t = 32)]
        samples: usize,
    },
    /// The example registry.
    Corpus {
        #[command(subcommand)]
        cmd: CorpusCmd,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Registry names and descriptions.
    List {
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Expected-versus-computed table; exit 1 on any mismatch.
    Run {
        names: Vec<String>,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// One entry with its ground truths as JSON.
    Export {
        name: String,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn parse_route(s: &str) -> Result<Route, String> {
    match s {
        "direct" | "direct_fit" => Ok(Route::DirectFit),
        "moreau" => Ok(Route::Moreau),
        "both" => Ok(Route::Both),
        _ => Err(format!("unknown route {s:?}; use direct, moreau or both")),
    }
}

fn init_threads() {
    if let Ok(s) = std::env::var("EPIBUNDLE_THREADS") {
        match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("epibundle: ignoring EPIBUNDLE_THREADS={s:?}"),
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Envelope { common, z, hessian, trace } => commands::envelope(&common, z, hessian, trace),
        Cmd::Prox { common, z } => commands::prox(&common, z),
        Cmd::Subderiv { common, w } => commands::subderiv(&common, &w),
        Cmd::GtdCheck { common, route, identity } => commands::gtd_check(&common, route, identity),
        Cmd::QuadBundle { common, attentive, route } => commands::quad_bundle(&common, attentive, route),
        Cmd::HessianBundle { common } => commands::hessian_bundle(&common),
        Cmd::GrowthCheck { common, kappa, radius, samples } => commands::growth_check(&common, kappa, &radius, samples),
        Cmd::SvarCert { common, s, radius, eps, samples } => commands::svar_cert(&common, s, radius, eps, samples),
        Cmd::Corpus { cmd } => match cmd {
            CorpusCmd::List { json } => corpus_run::list(json),
            CorpusCmd::Run { names, all, json } => corpus_run::run(&names, all, json),
            CorpusCmd::Export { name, json } => corpus_run::export(&name, json),
        },
    };
    report::finish(outcome)
}
