use std::fmt::Write as _;
use std::path::Path;

use dyson_rg::critparam::{
    critical_search, fit_observables, geometric_offsets, magnetization_csv, observable_t_values, susceptibility_csv,
    CriticalSearchResult, DensityFamily, ExponentEstimate,
};
use dyson_rg::density::{gaussian_density, CsvFloat, GridDensity, ModelParams};
use dyson_rg::fixedpoint::{fixed_point_residual, gaussian_fixed_point, non_gaussian_fixed_point, FixedPointResult};
use dyson_rg::model::{enumerate_total_spin, rg_step_atomic, AtomicMeasure};
use dyson_rg::rgflow::{flow_to, FlowOptions};
use dyson_rg::spectral::{build_linearization, eigen_spectrum, exponents_from_spectrum, BASE_RESIDUAL_TOLERANCE};
use dyson_rg::RgError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{At, ExperimentConfig};
use crate::error::{CliError, EXIT_MISMATCH};

/// Largest atom-wise discrepancy the oracle accepts.
pub const ORACLE_TOLERANCE: f64 = 1e-10;
/// Residual a solved non-Gaussian fixed point must reach.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-8;

type CmdResult = Result<(), CliError>;

fn write(cfg: &ExperimentConfig, name: &str, contents: &str) -> CmdResult {
    let path = cfg.output_dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(cfg: &ExperimentConfig, name: &str, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).expect("summaries serialize");
    text.push('\n');
    write(cfg, name, &text)
}

/// The non-Gaussian fixed point written by `fixed-point --non-gaussian`.
fn load_fixed_point(cfg: &ExperimentConfig, params: &ModelParams) -> Result<GridDensity, CliError> {
    let path = cfg.fixed_point_path();
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::missing(format!(
            "cannot read fixed-point artifact {} ({e}); run `fixed-point --non-gaussian` first",
            path.display()
        ))
    })?;
    let p = GridDensity::from_json(&text)
        .map_err(|e| CliError::missing(format!("{}: {e}", path.display())))?;
    if p.grid() != cfg.grid_spec()? {
        return Err(CliError::config(format!(
            "{} was computed on grid L={} N={}, configured grid is L={} N={}",
            path.display(),
            p.grid().half_width,
            p.grid().nodes,
            cfg.grid.l,
            cfg.grid.n
        )));
    }
    let residual = fixed_point_residual(&p, params)?;
    if !(residual < BASE_RESIDUAL_TOLERANCE) {
        return Err(RgError::NotAFixedPoint { residual }.into());
    }
    Ok(p)
}

fn base_density(cfg: &ExperimentConfig, params: &ModelParams) -> Result<GridDensity, CliError> {
    if cfg.non_gaussian {
        load_fixed_point(cfg, params)
    } else {
        Ok(gaussian_fixed_point(params, cfg.grid_spec()?)?)
    }
}

fn family(cfg: &ExperimentConfig, params: &ModelParams) -> Result<DensityFamily, CliError> {
    let fam = if cfg.non_gaussian {
        DensityFamily::non_gaussian_default(params, load_fixed_point(cfg, params)?, None)?
    } else {
        DensityFamily::gaussian_default(params, cfg.grid_spec()?)?
    };
    Ok(match cfg.b4 {
        Some(b4) => fam.with_b4(b4)?,
        None => fam,
    })
}

/// (gamma, beta) expected at the fixed point with leading unstable eigenvalue
/// `lambda1`: from the eigenvalue at the non-Gaussian fixed point, mean-field
/// values at the Gaussian one.
fn predicted_exponents(cfg: &ExperimentConfig, params: &ModelParams, lambda1: f64) -> Result<(f64, f64), CliError> {
    if cfg.non_gaussian {
        Ok(exponents_from_spectrum(lambda1, params)?)
    } else {
        Ok((1.0, 0.5))
    }
}

/// Leading unstable eigenvalue at the family's fixed point.
fn lambda1(cfg: &ExperimentConfig, params: &ModelParams, base: &GridDensity) -> Result<f64, CliError> {
    if cfg.non_gaussian {
        let s = eigen_spectrum(&build_linearization(base, params)?, 2)?;
        Ok(s.eigenvalues[1])
    } else {
        Ok(params.gaussian_eigenvalue(1))
    }
}

#[derive(Serialize)]
struct GridSummary {
    #[serde(rename = "L")]
    l: f64,
    #[serde(rename = "N")]
    n: usize,
}

fn grid_summary(cfg: &ExperimentConfig) -> GridSummary {
    GridSummary {
        l: cfg.grid.l,
        n: cfg.grid.n,
    }
}

#[derive(Serialize)]
struct FixedPointSummary {
    a: f64,
    kind: &'static str,
    grid: GridSummary,
    residual_l1: f64,
    variance: f64,
    excess_kurtosis: f64,
    seed_constant: Option<f64>,
    newton_steps: usize,
}

pub fn fixed_point(cfg: &ExperimentConfig) -> CmdResult {
    let params = cfg.params()?;
    let grid = cfg.grid_spec()?;
    let (kind, result) = if cfg.non_gaussian {
        let r = non_gaussian_fixed_point(&params, grid, cfg.hermite_m)?;
        ("non_gaussian", r)
    } else {
        let density = gaussian_fixed_point(&params, grid)?;
        let residual_l1 = fixed_point_residual(&density, &params)?;
        let r = FixedPointResult {
            density,
            residual_l1,
            newton_trace: Vec::new(),
            seed_constant: None,
        };
        ("gaussian", r)
    };
    let p = &result.density;
    write(cfg, "fixed_point.csv", &p.to_csv())?;
    write(cfg, "fixed_point_density.json", &p.to_json())?;
    write_json(
        cfg,
        "fixed_point.json",
        &FixedPointSummary {
            a: params.a,
            kind,
            grid: grid_summary(cfg),
            residual_l1: result.residual_l1,
            variance: p.variance(),
            excess_kurtosis: p.excess_kurtosis(),
            seed_constant: result.seed_constant,
            newton_steps: result.newton_trace.len(),
        },
    )?;
    println!(
        "{kind} fixed point at a={}: residual {:.3e}, variance {:.9}, excess kurtosis {:.6}",
        params.a,
        result.residual_l1,
        p.variance(),
        p.excess_kurtosis()
    );
    if cfg.non_gaussian && !(result.residual_l1 < FIXED_POINT_TOLERANCE) {
        return Err(CliError::numerical(format!(
            "residual {:.3e} above {FIXED_POINT_TOLERANCE:e}",
            result.residual_l1
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SpectrumSummary {
    a: f64,
    at: At,
    grid: GridSummary,
    eigenvalues: Vec<f64>,
    residuals: Vec<f64>,
    gamma_predicted: Option<f64>,
    beta_predicted: Option<f64>,
}

pub fn spectrum(cfg: &ExperimentConfig) -> CmdResult {
    let params = cfg.params()?;
    let base = base_density(cfg, &params)?;
    let s = eigen_spectrum(&build_linearization(&base, &params)?, cfg.k)?;
    let mut csv = String::from("j,eigenvalue,residual\n");
    for (j, (l, r)) in s.eigenvalues.iter().zip(&s.residuals).enumerate() {
        let _ = writeln!(csv, "{j},{},{}", CsvFloat(*l), CsvFloat(*r));
    }
    write(cfg, "spectrum.csv", &csv)?;
    for j in 0..s.eigenvalues.len() {
        write(cfg, &format!("eigenfunction_{j}.csv"), &s.eigenfunction_csv(j).expect("j < k"))?;
    }
    let exps = s.eigenvalues.get(1).and_then(|l| predicted_exponents(cfg, &params, *l).ok());
    write_json(
        cfg,
        "spectrum.json",
        &SpectrumSummary {
            a: params.a,
            at: if cfg.non_gaussian { At::NonGaussian } else { At::Gaussian },
            grid: grid_summary(cfg),
            eigenvalues: s.eigenvalues.clone(),
            residuals: s.residuals.clone(),
            gamma_predicted: exps.map(|e| e.0),
            beta_predicted: exps.map(|e| e.1),
        },
    )?;
    let shown: Vec<String> = s.eigenvalues.iter().map(|l| format!("{l:.6}")).collect();
    println!("eigenvalues at a={}: [{}]", params.a, shown.join(", "));
    Ok(())
}

#[derive(Serialize)]
struct FlowSummary {
    a: f64,
    start: String,
    classification: &'static str,
    steps: usize,
    min_l1: f64,
    final_variance: f64,
    final_kurtosis: f64,
}

pub fn flow(cfg: &ExperimentConfig) -> CmdResult {
    let params = cfg.params()?;
    let fam = family(cfg, &params)?;
    let (start, label) = match cfg.variance {
        Some(v) => (gaussian_density(v, cfg.grid_spec()?)?, format!("gaussian variance {v}")),
        None => (
            dyson_rg::critparam::family_density(&fam, cfg.t)?,
            format!("family member t = {}", cfg.t),
        ),
    };
    let trace = flow_to(
        &start,
        &fam.base,
        &params,
        FlowOptions {
            m_max: cfg.flow_steps,
            stop_on_convergence: false,
        },
    )?;
    write(cfg, "flow.csv", &trace.to_csv())?;
    write_json(
        cfg,
        "flow.json",
        &FlowSummary {
            a: params.a,
            start: label,
            classification: trace.classification.label(),
            steps: trace.steps(),
            min_l1: trace.min_l1(),
            final_variance: trace.final_density.variance(),
            final_kurtosis: trace.final_density.excess_kurtosis(),
        },
    )?;
    println!(
        "flow at a={} from t={}: {} after {} steps",
        params.a,
        cfg.t,
        trace.classification.label(),
        trace.steps()
    );
    Ok(())
}

fn search(cfg: &ExperimentConfig, fam: &DensityFamily) -> Result<CriticalSearchResult, CliError> {
    let tol = cfg.tol_t.unwrap_or(1e-12 * fam.range_width());
    Ok(critical_search(fam, cfg.m_max, tol)?)
}

#[derive(Serialize)]
struct CriticalSummary<'a> {
    a: f64,
    fixed_point: At,
    t_range: (f64, f64),
    high_t_above: bool,
    #[serde(flatten)]
    result: &'a CriticalSearchResult,
}

pub fn critical(cfg: &ExperimentConfig) -> CmdResult {
    let params = cfg.params()?;
    let fam = family(cfg, &params)?;
    let cs = search(cfg, &fam)?;
    let mut csv = String::from("t,classification,steps,min_l1,steps_near_fixed_point\n");
    for p in &cs.probes {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            CsvFloat(p.t),
            p.classification.label(),
            p.steps,
            CsvFloat(p.min_l1),
            p.steps_near_fixed_point
        );
    }
    write(cfg, "probes.csv", &csv)?;
    write_json(
        cfg,
        "critical.json",
        &CriticalSummary {
            a: params.a,
            fixed_point: if cfg.non_gaussian { At::NonGaussian } else { At::Gaussian },
            t_range: fam.t_range,
            high_t_above: cs.high_t_above(),
            result: &cs,
        },
    )?;
    println!(
        "t_c = {:.15} at a={} ({} brackets, final width {:.3e})",
        cs.t_c,
        params.a,
        cs.brackets.len(),
        cs.brackets.last().map_or(f64::NAN, |b| b.1 - b.0)
    );
    Ok(())
}

#[derive(Serialize)]
struct ObservablesSummary {
    a: f64,
    fixed_point: At,
    t_c: f64,
    high_t_above: bool,
    brackets: Option<Vec<(f64, f64)>>,
    gamma_fit: Option<f64>,
    gamma_stderr: Option<f64>,
    beta_fit: Option<f64>,
    beta_stderr: Option<f64>,
    estimator_agreement: Option<f64>,
    flagged_points: usize,
    lambda1_used: f64,
    gamma_predicted: f64,
    beta_predicted: f64,
}

pub fn observables(cfg: &ExperimentConfig) -> CmdResult {
    let params = cfg.params()?;
    let fam = family(cfg, &params)?;
    let (t_c, high_t_above, brackets) = match cfg.t_c {
        Some(t_c) => {
            // Orientation from the endpoint classification alone.
            let probe = critical_search(&fam, cfg.m_max, fam.range_width())?;
            (t_c, probe.high_t_above(), None)
        }
        None => {
            let cs = search(cfg, &fam)?;
            (cs.t_c, cs.high_t_above(), Some(cs.brackets))
        }
    };
    let t_values = match &cfg.t_values {
        Some(ts) => ts.clone(),
        None => {
            let o = &cfg.offsets;
            let offsets = geometric_offsets(fam.range_width(), o.lo_exp, o.hi_exp, o.count);
            observable_t_values(t_c, high_t_above, &offsets, cfg.side)
        }
    };
    let fit = fit_observables(&fam, t_c, high_t_above, &t_values, cfg.n_max)?;
    if !fit.susceptibility.is_empty() {
        write(cfg, "susceptibility.csv", &susceptibility_csv(&fit.susceptibility))?;
    }
    if !fit.magnetization.is_empty() {
        write(cfg, "magnetization.csv", &magnetization_csv(&fit.magnetization))?;
    }
    let l1 = lambda1(cfg, &params, &fam.base)?;
    let (gamma_predicted, beta_predicted) = predicted_exponents(cfg, &params, l1)?;
    let value = |e: Option<ExponentEstimate>| e.map(|e| e.value);
    let stderr = |e: Option<ExponentEstimate>| e.map(|e| e.stderr);
    write_json(
        cfg,
        "observables.json",
        &ObservablesSummary {
            a: params.a,
            fixed_point: if cfg.non_gaussian { At::NonGaussian } else { At::Gaussian },
            t_c,
            high_t_above,
            brackets,
            gamma_fit: value(fit.gamma),
            gamma_stderr: stderr(fit.gamma),
            beta_fit: value(fit.beta),
            beta_stderr: stderr(fit.beta),
            estimator_agreement: fit.estimator_agreement,
            flagged_points: fit.flagged(),
            lambda1_used: l1,
            gamma_predicted,
            beta_predicted,
        },
    )?;
    let show = |e: Option<ExponentEstimate>| e.map_or("n/a".to_string(), |e| format!("{:.4} +- {:.4}", e.value, e.stderr));
    println!(
        "t_c = {t_c:.15}: gamma {} (predicted {gamma_predicted:.4}), beta {} (predicted {beta_predicted:.4}), {} flagged",
        show(fit.gamma),
        show(fit.beta),
        fit.flagged()
    );
    Ok(())
}

#[derive(Serialize)]
struct OracleLevel {
    n: u32,
    atoms: usize,
    max_discrepancy: f64,
}

#[derive(Serialize)]
struct OracleSummary {
    a: f64,
    beta: f64,
    seed: Option<u64>,
    single_spin: Vec<(f64, f64)>,
    levels: Vec<OracleLevel>,
    max_discrepancy: f64,
    tolerance: f64,
    passed: bool,
}

fn random_measure(seed: u64, n: u32) -> Result<AtomicMeasure, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rng.gen_range(0.5..1.5);
    let w = rng.gen_range(0.1..1.0);
    // Two atoms keep n = 4 within the enumeration budget.
    let atoms = if n <= 3 {
        vec![(-x, 1.0), (0.0, w), (x, 1.0)]
    } else {
        vec![(-x, 1.0), (x, 1.0)]
    };
    Ok(AtomicMeasure::new(atoms)?)
}

pub fn oracle(cfg: &ExperimentConfig) -> CmdResult {
    let a = cfg.effective_a();
    let nu0 = match cfg.seed {
        Some(seed) => random_measure(seed, cfg.n)?,
        None => AtomicMeasure::coin(),
    };
    let mut nu = nu0.clone();
    let mut levels = Vec::new();
    for n in 1..=cfg.n {
        nu = rg_step_atomic(&nu, cfg.beta, a)?;
        let direct = enumerate_total_spin(n, &nu0, cfg.beta, a)?;
        levels.push(OracleLevel {
            n,
            atoms: nu.len(),
            max_discrepancy: nu.max_atom_discrepancy(&direct),
        });
    }
    let worst = levels.iter().map(|l| l.max_discrepancy).fold(0.0, f64::max);
    let passed = worst <= ORACLE_TOLERANCE;
    write_json(
        cfg,
        "oracle.json",
        &OracleSummary {
            a,
            beta: cfg.beta,
            seed: cfg.seed,
            single_spin: nu0.atoms().to_vec(),
            levels,
            max_discrepancy: worst,
            tolerance: ORACLE_TOLERANCE,
            passed,
        },
    )?;
    println!(
        "recursion vs enumeration up to n={} at a={a}, beta={}: max discrepancy {worst:.3e}",
        cfg.n, cfg.beta
    );
    if passed {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_MISMATCH,
            message: format!("discrepancy {worst:.3e} above {ORACLE_TOLERANCE:e}"),
        })
    }
}

pub fn ensure_output_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::config(format!("cannot create output directory {}: {e}", dir.display())))
}
