//! `dyson-rg`: batch front end for fixed points, spectra, flows, critical
//! points and critical exponents of the Dyson hierarchical model.

mod commands;
mod config;
mod error;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dyson_rg::critparam::Side;

use config::{At, ExperimentConfig};
use error::{CliError, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "dyson-rg", version, about = "Renormalization-group lab for the Dyson hierarchical model")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Directory for all artifacts (created if missing).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Grid intervals N (even).
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Grid half-width L.
    #[arg(long, global = true)]
    grid_l: Option<f64>,
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Args, Default)]
struct ModelArgs {
    /// Long-range exponent, 1 < a < 2.
    #[arg(long, conflicts_with = "epsilon")]
    a: Option<f64>,
    /// Sets a = 3/2 + epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Default)]
struct FamilyArgs {
    /// Use the non-Gaussian fixed point written by `fixed-point --non-gaussian`.
    #[arg(long)]
    non_gaussian: bool,
    /// Path of that fixed point's density JSON.
    #[arg(long)]
    fixed_point: Option<PathBuf>,
    /// Quartic coefficient of the one-parameter family.
    #[arg(long, allow_hyphen_values = true)]
    b4: Option<f64>,
}

#[derive(Args, Default)]
struct SearchArgs {
    /// RG steps per probe flow.
    #[arg(long)]
    m_max: Option<usize>,
    /// Final bracket width.
    #[arg(long)]
    tol_t: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    High,
    Low,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Gaussian or non-Gaussian fixed point.
    FixedPoint {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        non_gaussian: bool,
        /// Hermite basis size of the non-Gaussian solver.
        #[arg(long)]
        hermite_m: Option<usize>,
    },
    /// Leading eigenvalues and eigenfunctions of the linearized map.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of eigenpairs.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        at: Option<At>,
        #[arg(long)]
        fixed_point: Option<PathBuf>,
    },
    /// RG flow of a family member or a Gaussian.
    Flow {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        family: FamilyArgs,
        /// Family parameter of the starting density.
        #[arg(long, allow_hyphen_values = true)]
        t: Option<f64>,
        /// Start from a centred Gaussian of this variance instead.
        #[arg(long)]
        variance: Option<f64>,
        /// Number of RG steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Bisection for the critical parameter of a one-parameter family.
    Critical {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Susceptibility and magnetization near t_c, with exponent fits.
    Observables {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        family: FamilyArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, value_enum)]
        side: Option<SideArg>,
        /// Use this t_c instead of searching for it.
        #[arg(long, allow_hyphen_values = true)]
        t_c: Option<f64>,
        /// Explicit parameters, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        t_values: Option<Vec<f64>>,
        /// RG step budget per point.
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Checks the atomic recursion against direct enumeration.
    Oracle {
        #[command(flatten)]
        model: ModelArgs,
        /// Depth, volume 2^n.
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        beta: Option<f64>,
        /// Draw a random symmetric single-spin measure from this seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_model(cfg: &mut ExperimentConfig, m: ModelArgs) {
    if let Some(a) = m.a {
        cfg.a = a;
        cfg.epsilon = None;
    }
    if m.epsilon.is_some() {
        cfg.epsilon = m.epsilon;
    }
}

fn apply_family(cfg: &mut ExperimentConfig, f: FamilyArgs) {
    cfg.non_gaussian |= f.non_gaussian;
    if f.fixed_point.is_some() {
        cfg.fixed_point = f.fixed_point;
    }
    if f.b4.is_some() {
        cfg.b4 = f.b4;
    }
}

fn apply_search(cfg: &mut ExperimentConfig, s: SearchArgs) {
    set(&mut cfg.m_max, s.m_max);
    if s.tol_t.is_some() {
        cfg.tol_t = s.tol_t;
    }
}

/// Defaults, then the config file, then flags.
fn resolve(global: GlobalArgs, command: Command) -> Result<(ExperimentConfig, Runner), CliError> {
    let mut cfg = match &global.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.output_dir, global.output_dir);
    if global.threads.is_some() {
        cfg.threads = global.threads;
    }
    set(&mut cfg.grid.n, global.grid_n);
    set(&mut cfg.grid.l, global.grid_l);
    let runner: Runner = match command {
        Command::FixedPoint {
            model,
            non_gaussian,
            hermite_m,
        } => {
            apply_model(&mut cfg, model);
            cfg.non_gaussian |= non_gaussian;
            set(&mut cfg.hermite_m, hermite_m);
            commands::fixed_point
        }
        Command::Spectrum {
            model,
            k,
            at,
            fixed_point,
        } => {
            apply_model(&mut cfg, model);
            set(&mut cfg.k, k);
            if let Some(at) = at {
                cfg.non_gaussian = at == At::NonGaussian;
            }
            if fixed_point.is_some() {
                cfg.fixed_point = fixed_point;
            }
            commands::spectrum
        }
        Command::Flow {
            model,
            family,
            t,
            variance,
            steps,
        } => {
            apply_model(&mut cfg, model);
            apply_family(&mut cfg, family);
            set(&mut cfg.t, t);
            if variance.is_some() {
                cfg.variance = variance;
            }
            set(&mut cfg.flow_steps, steps);
            commands::flow
        }
        Command::Critical { model, family, search } => {
            apply_model(&mut cfg, model);
            apply_family(&mut cfg, family);
            apply_search(&mut cfg, search);
            commands::critical
        }
        Command::Observables {
            model,
            family,
            search,
            side,
            t_c,
            t_values,
            n_max,
        } => {
            apply_model(&mut cfg, model);
            apply_family(&mut cfg, family);
            apply_search(&mut cfg, search);
            if let Some(side) = side {
                cfg.side = match side {
                    SideArg::High => Side::High,
                    SideArg::Low => Side::Low,
                    SideArg::Both => Side::Both,
                };
            }
            if t_c.is_some() {
                cfg.t_c = t_c;
            }
            if t_values.is_some() {
                cfg.t_values = t_values;
            }
            set(&mut cfg.n_max, n_max);
            commands::observables
        }
        Command::Oracle { model, n, beta, seed } => {
            apply_model(&mut cfg, model);
            set(&mut cfg.n, n);
            set(&mut cfg.beta, beta);
            if seed.is_some() {
                cfg.seed = seed;
            }
            commands::oracle
        }
    };
    cfg.validate()?;
    Ok((cfg, runner))
}

type Runner = fn(&ExperimentConfig) -> Result<(), CliError>;

fn run(args: Vec<OsString>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let print_config = cli.global.print_config;
    let (cfg, runner) = resolve(cli.global, cli.command)?;
    if print_config {
        let text = serde_json::to_string_pretty(&cfg).expect("config serializes");
        let _ = writeln!(std::io::stdout(), "{text}");
        return Ok(());
    }
    commands::ensure_output_dir(&cfg.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    pool.install(|| runner(&cfg))
}

fn main() {
    if let Err(e) = run(std::env::args_os().collect()) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
