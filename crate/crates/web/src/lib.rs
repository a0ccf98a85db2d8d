//! WebAssembly bindings for a small browser demo: the linearized spectrum at
//! the Gaussian fixed point, the RG flow of a one-parameter family member,
//! and a coarse critical-point search. Results are returned as JSON strings.

use dyson_rg::critparam::{critical_search, family_density, DensityFamily};
use dyson_rg::density::{GridDensity, GridSpec, ModelParams};
use dyson_rg::fixedpoint::gaussian_fixed_point;
use dyson_rg::rgflow::{flow_to, rg_step, FlowOptions};
use dyson_rg::spectral::{build_linearization, eigen_spectrum};
use dyson_rg::Result;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Points per density snapshot sent to the page.
const SNAPSHOT_POINTS: usize = 256;
/// Snapshots cover |s| <= this.
const SNAPSHOT_RANGE: f64 = 4.0;

#[derive(Serialize)]
struct SpectrumOut {
    eigenvalues: Vec<f64>,
    predicted: Vec<f64>,
}

pub fn spectrum_json(a: f64, k: usize, grid_n: usize) -> Result<String> {
    let params = ModelParams::new(a)?;
    let grid = GridSpec::new(GridSpec::default().half_width, grid_n)?;
    let p0 = gaussian_fixed_point(&params, grid)?;
    let s = eigen_spectrum(&build_linearization(&p0, &params)?, k)?;
    let out = SpectrumOut {
        predicted: (0..s.eigenvalues.len()).map(|j| params.gaussian_eigenvalue(j)).collect(),
        eigenvalues: s.eigenvalues,
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

#[derive(Serialize)]
struct Snapshot {
    m: usize,
    variance: f64,
    s: Vec<f64>,
    p: Vec<f64>,
}

#[derive(Serialize)]
struct FlowOut {
    classification: &'static str,
    steps: usize,
    snapshots: Vec<Snapshot>,
}

fn snapshot(m: usize, p: &GridDensity) -> Snapshot {
    let grid = p.grid();
    let (s, v): (Vec<f64>, Vec<f64>) = (0..SNAPSHOT_POINTS)
        .map(|i| {
            let x = -SNAPSHOT_RANGE + 2.0 * SNAPSHOT_RANGE * i as f64 / (SNAPSHOT_POINTS - 1) as f64;
            let y = if x.abs() <= grid.half_width { p.eval(x) } else { 0.0 };
            (x, y)
        })
        .unzip();
    Snapshot {
        m,
        variance: p.variance(),
        s,
        p: v,
    }
}

/// Flow of the default Gaussian-family member at t, with density snapshots
/// until the flow leaves the grid or `steps` is reached.
pub fn flow_json(a: f64, t: f64, steps: usize, grid_n: usize) -> Result<String> {
    let params = ModelParams::new(a)?;
    let grid = GridSpec::new(GridSpec::default().half_width, grid_n)?;
    let fam = DensityFamily::gaussian_default(&params, grid)?;
    let start = family_density(&fam, t)?;
    let trace = flow_to(
        &start,
        &fam.base,
        &params,
        FlowOptions {
            m_max: steps,
            stop_on_convergence: false,
        },
    )?;
    let mut snapshots = vec![snapshot(0, &start)];
    let mut p = start;
    for m in 1..=trace.steps() {
        match rg_step(&p, &params) {
            Ok(next) => p = next,
            Err(_) => break,
        }
        snapshots.push(snapshot(m, &p));
    }
    let out = FlowOut {
        classification: trace.classification.label(),
        steps: trace.steps(),
        snapshots,
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

#[derive(Serialize)]
struct CriticalOut {
    t_c: f64,
    bracket: (f64, f64),
    high_t_above: bool,
    probes: Vec<(f64, &'static str)>,
}

/// Bisection for t_c of the default Gaussian family down to width `tol`.
pub fn critical_json(a: f64, tol: f64, grid_n: usize) -> Result<String> {
    let params = ModelParams::new(a)?;
    let grid = GridSpec::new(GridSpec::default().half_width, grid_n)?;
    let fam = DensityFamily::gaussian_default(&params, grid)?;
    let cs = critical_search(&fam, 200, tol)?;
    let out = CriticalOut {
        t_c: cs.t_c,
        bracket: *cs.brackets.last().expect("at least the initial bracket"),
        high_t_above: cs.high_t_above(),
        probes: cs.probes.iter().map(|p| (p.t, p.classification.label())).collect(),
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn spectrum(a: f64, k: usize, grid_n: usize) -> std::result::Result<String, JsError> {
    js(spectrum_json(a, k, grid_n))
}

#[wasm_bindgen]
pub fn flow(a: f64, t: f64, steps: usize, grid_n: usize) -> std::result::Result<String, JsError> {
    js(flow_json(a, t, steps, grid_n))
}

#[wasm_bindgen]
pub fn critical(a: f64, tol: f64, grid_n: usize) -> std::result::Result<String, JsError> {
    js(critical_json(a, tol, grid_n))
}
