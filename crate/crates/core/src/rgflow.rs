//! The RG map on densities, flows and their classification, and rescaling to
//! CLT normalization.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::density::{cubic_weights, interpolate, CsvFloat, GridDensity, GridSpec, ModelParams};
use crate::error::{Result, RgError};

const KERNEL_FLOOR: f64 = 1e-300;

/// Affine coordinates x = scale * (S - center) in which a density is stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub center: f64,
    pub scale: f64,
}

impl Frame {
    pub const IDENTITY: Frame = Frame {
        center: 0.0,
        scale: 1.0,
    };

    pub fn symmetric(scale: f64) -> Self {
        Frame { center: 0.0, scale }
    }

    pub fn to_local(&self, s: f64) -> f64 {
        self.scale * (s - self.center)
    }

    pub fn to_global(&self, x: f64) -> f64 {
        self.center + x / self.scale
    }
}

/// Visits the quadrature terms of sum_k w_k e^(-beta (x_k - eta)^2) q(2 eta - x_k) q(x_k).
/// The callback gets the node k, the kernel weight w_k e^(...), the first node
/// index of the four-point stencil for q(2 eta - x_k) and the stencil weights.
#[inline]
pub(crate) fn visit_pairs(
    grid: &GridSpec,
    eta: f64,
    beta: f64,
    mut f: impl FnMut(usize, f64, isize, &[f64; 4]),
) {
    let h = grid.spacing();
    let l = grid.half_width;
    let n = grid.nodes as isize;
    let g = (2.0 * eta + 2.0 * l) / h;
    if !g.is_finite() {
        return;
    }
    let j0 = g.floor();
    let w = cubic_weights(g - j0);
    let j0 = j0 as isize;
    let k_lo = (j0 - 1 - n).max(0);
    let k_hi = (j0 + 2).min(n);
    if k_lo > k_hi {
        return;
    }
    if beta == 0.0 {
        for k in k_lo..=k_hi {
            f(k as usize, grid.weight(k as usize), j0 - k - 1, &w);
        }
        return;
    }
    let kc = ((eta + l) / h).round().clamp(k_lo as f64, k_hi as f64) as isize;
    let d = grid.node(kc as usize) - eta;
    let g0 = (-beta * d * d).exp();
    let decay = (-2.0 * beta * h * h).exp();
    if g0 >= KERNEL_FLOOR {
        f(kc as usize, grid.weight(kc as usize) * g0, j0 - kc - 1, &w);
    }
    let mut gk = g0;
    let mut ratio = (-beta * (2.0 * d * h + h * h)).exp();
    for k in kc + 1..=k_hi {
        gk *= ratio;
        ratio *= decay;
        if gk < KERNEL_FLOOR {
            break;
        }
        f(k as usize, grid.weight(k as usize) * gk, j0 - k - 1, &w);
    }
    let mut gk = g0;
    let mut ratio = (-beta * (-2.0 * d * h + h * h)).exp();
    for k in (k_lo..kc).rev() {
        gk *= ratio;
        ratio *= decay;
        if gk < KERNEL_FLOOR {
            break;
        }
        f(k as usize, grid.weight(k as usize) * gk, j0 - k - 1, &w);
    }
}

#[inline]
pub(crate) fn stencil(q: &[f64], base: isize, w: &[f64; 4]) -> f64 {
    let n = q.len() as isize;
    if base >= 0 && base + 3 < n {
        let b = base as usize;
        w[0] * q[b] + w[1] * q[b + 1] + w[2] * q[b + 2] + w[3] * q[b + 3]
    } else {
        let mut acc = 0.0;
        for (m, wm) in w.iter().enumerate() {
            let idx = base + m as isize;
            if idx >= 0 && idx < n {
                acc += wm * q[idx as usize];
            }
        }
        acc
    }
}

/// Pair integral at centre `eta` with kernel coefficient `beta`.
pub(crate) fn pair_integral(grid: &GridSpec, q: &[f64], eta: f64, beta: f64) -> f64 {
    let mut acc = 0.0;
    visit_pairs(grid, eta, beta, |k, wk, base, w| {
        let qk = q[k];
        if qk != 0.0 {
            acc += wk * qk * stencil(q, base, w);
        }
    });
    acc
}

#[cfg(feature = "parallel")]
pub(crate) fn map_indices<F>(range: std::ops::Range<usize>, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    use rayon::prelude::*;
    range.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<F>(range: std::ops::Range<usize>, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64,
{
    range.map(f).collect()
}

/// Output log-values T_i + ln I_i of one step taken from frame `from` to
/// frame `to`, for output nodes `indices`.
fn log_outputs(
    grid: &GridSpec,
    q: &[f64],
    from: Frame,
    to: Frame,
    coupling: f64,
    params: &ModelParams,
    indices: std::ops::Range<usize>,
) -> Vec<f64> {
    let k = from.scale;
    let m = from.center;
    let kernel = coupling / (k * k);
    let lift = 2f64.powf(params.a / 2.0);
    map_indices(indices, |i| {
        let s_out = to.to_global(grid.node(i));
        let eta = 0.5 * k * (lift * s_out - 2.0 * m);
        let tilt = coupling * (2.0 * m * eta / k + eta * eta / (k * k));
        let integral = pair_integral(grid, q, eta, kernel);
        if integral > 0.0 {
            tilt + integral.ln()
        } else {
            f64::NEG_INFINITY
        }
    })
}

fn exp_normalized(logs: &[f64]) -> Result<Vec<f64>> {
    let lmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lmax.is_finite() {
        return Err(RgError::InvalidInput("step produced no mass".into()));
    }
    Ok(logs.iter().map(|l| (l - lmax).exp()).collect())
}

/// True when the unnormalized output is still rising at the grid edge, i.e.
/// the normalizer integral does not converge on the grid.
fn rising_edge(logs_outer: &[f64]) -> bool {
    let n = logs_outer.len();
    if n < 2 {
        return false;
    }
    let lmax = logs_outer.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let edge = logs_outer[n - 1];
    edge >= logs_outer[n - 2] && edge >= lmax - 1.0
}

/// One RG step for a density stored in frame `from`, returning normalized
/// values in frame `to` on the same grid. Frames centred at 0 give an exactly
/// even result.
pub fn framed_step(
    values: &[f64],
    grid: &GridSpec,
    from: Frame,
    to: Frame,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    framed_step_with_coupling(values, grid, from, to, 1.0, params)
}

pub(crate) fn framed_step_with_coupling(
    values: &[f64],
    grid: &GridSpec,
    from: Frame,
    to: Frame,
    coupling: f64,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    if values.len() != grid.len() {
        return Err(RgError::InvalidInput("values do not match the grid".into()));
    }
    let n = grid.nodes;
    let c = grid.center();
    let mut out = if from.center == 0.0 && to.center == 0.0 {
        let half_logs = log_outputs(grid, values, from, to, coupling, params, c..n + 1);
        if rising_edge(&half_logs) {
            return Err(RgError::NormalizerDivergence);
        }
        let half = exp_normalized(&half_logs)?;
        let mut full = vec![0.0; grid.len()];
        for (j, v) in half.iter().enumerate() {
            full[c + j] = *v;
            full[c - j] = *v;
        }
        full
    } else {
        let logs = log_outputs(grid, values, from, to, coupling, params, 0..n + 1);
        let rev: Vec<f64> = logs[..=c].iter().rev().cloned().collect();
        if rising_edge(&logs[c..]) || rising_edge(&rev) {
            return Err(RgError::NormalizerDivergence);
        }
        exp_normalized(&logs)?
    };
    let mass = grid.integrate(&out);
    out.iter_mut().for_each(|v| *v /= mass);
    Ok(out)
}

/// ln of the pair integral for log-values `lq` (-inf marks zero), summed
/// without a kernel floor so that arbitrarily deep tails keep their weight.
fn log_pair_integral(grid: &GridSpec, lq: &[f64], log_w: &[f64], eta: f64, beta: f64) -> f64 {
    let h = grid.spacing();
    let n = grid.nodes as isize;
    let g = (2.0 * eta + 2.0 * grid.half_width) / h;
    if !g.is_finite() {
        return f64::NEG_INFINITY;
    }
    let j0 = g.floor();
    let w = cubic_weights(g - j0);
    let j0 = j0 as isize;
    let k_lo = (j0 - 1 - n).max(0);
    let k_hi = (j0 + 2).min(n);
    let mut terms = Vec::with_capacity((k_hi - k_lo + 1).max(0) as usize);
    let mut lmax = f64::NEG_INFINITY;
    for k in k_lo..=k_hi {
        let a = lq[k as usize];
        let base = j0 - k - 1;
        if a == f64::NEG_INFINITY || base < 0 || base + 3 > n {
            continue;
        }
        let s = &lq[base as usize..base as usize + 4];
        if s.contains(&f64::NEG_INFINITY) {
            continue;
        }
        let interp = w[0] * s[0] + w[1] * s[1] + w[2] * s[2] + w[3] * s[3];
        let d = grid.node(k as usize) - eta;
        let t = log_w[k as usize] + a + interp - beta * d * d;
        lmax = lmax.max(t);
        terms.push(t);
    }
    if lmax == f64::NEG_INFINITY {
        return lmax;
    }
    lmax + terms.iter().map(|t| (t - lmax).exp()).sum::<f64>().ln()
}

/// [`framed_step`] on log-densities (-inf marks zero). The result is
/// normalized to unit mass in frame `to`. Unlike the linear version this
/// keeps tails far below the floating-point range, which matters when the
/// tilt of the map amplifies them. The output is the exact image of the
/// zero-extended input on the window of `to`; no divergence check is made,
/// so the caller is responsible for choosing windows that contain the mass.
pub fn framed_step_log(
    log_values: &[f64],
    grid: &GridSpec,
    from: Frame,
    to: Frame,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    if log_values.len() != grid.len() {
        return Err(RgError::InvalidInput("values do not match the grid".into()));
    }
    let n = grid.nodes;
    let c = grid.center();
    let k = from.scale;
    let m = from.center;
    let kernel = 1.0 / (k * k);
    let lift = 2f64.powf(params.a / 2.0);
    let log_w: Vec<f64> = (0..grid.len()).map(|i| grid.weight(i).ln()).collect();
    let eval = |i: usize| {
        let s_out = to.to_global(grid.node(i));
        let eta = 0.5 * k * (lift * s_out - 2.0 * m);
        let tilt = 2.0 * m * eta / k + eta * eta / (k * k);
        tilt + log_pair_integral(grid, log_values, &log_w, eta, kernel)
    };
    let logs = if from.center == 0.0 && to.center == 0.0 {
        let half = map_indices(c..n + 1, eval);
        let mut full = vec![0.0; grid.len()];
        for (j, v) in half.iter().enumerate() {
            full[c + j] = *v;
            full[c - j] = *v;
        }
        full
    } else {
        map_indices(0..n + 1, eval)
    };
    let lmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lmax.is_finite() {
        return Err(RgError::InvalidInput("step produced no mass".into()));
    }
    let rel: Vec<f64> = logs.iter().map(|l| (l - lmax).exp()).collect();
    let log_mass = lmax + grid.integrate(&rel).ln();
    Ok(logs.iter().map(|l| l - log_mass).collect())
}

/// The RG map at unit coupling.
pub fn rg_step(p: &GridDensity, params: &ModelParams) -> Result<GridDensity> {
    rg_step_general_beta(p, 1.0, params)
}

/// The RG map with the coupling `beta` kept explicit.
pub fn rg_step_general_beta(p: &GridDensity, beta: f64, params: &ModelParams) -> Result<GridDensity> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(RgError::ParameterOutOfRange {
            name: "beta",
            value: beta,
            expected: "beta >= 0",
        });
    }
    let grid = p.grid();
    let out = framed_step_with_coupling(
        p.values(),
        &grid,
        Frame::IDENTITY,
        Frame::IDENTITY,
        beta,
        params,
    )?;
    GridDensity::new(grid, out)
}

/// Variance map of the Gaussian family, v -> 2^(1-a) v / (1 - v).
pub fn gaussian_variance_map(v: f64, params: &ModelParams) -> Result<f64> {
    if !(v > 0.0 && v < 1.0) {
        return Err(RgError::ParameterOutOfRange {
            name: "v",
            value: v,
            expected: "0 < v < 1",
        });
    }
    Ok(2f64.powf(1.0 - params.a) * v / (1.0 - v))
}

/// Mean-map companion of [`gaussian_variance_map`] for a Gaussian centred at m.
pub fn gaussian_mean_map(m: f64, v: f64, params: &ModelParams) -> f64 {
    2f64.powf(1.0 - params.a / 2.0) * m / (1.0 - v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    #[serde(rename = "converged")]
    ConvergedToFixedPoint,
    CollapsedHighT,
    EscapedLowT,
    Undecided,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::ConvergedToFixedPoint => "converged",
            Classification::CollapsedHighT => "collapsed_high_t",
            Classification::EscapedLowT => "escaped_low_t",
            Classification::Undecided => "undecided",
        }
    }
}

/// Thresholds separating the flow regimes.
pub mod thresholds {
    /// Collapse when variance stays below this fraction of the fixed point's.
    pub const COLLAPSE_FRACTION: f64 = 0.25;
    pub const COLLAPSE_STEPS: usize = 3;
    /// Escape when variance exceeds this multiple of the fixed point's.
    pub const ESCAPE_FACTOR: f64 = 4.0;
    pub const EDGE_CELLS: usize = 2;
    pub const EDGE_MASS: f64 = 0.02;
    pub const CONVERGED_L1: f64 = 1e-6;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub m: usize,
    pub variance: f64,
    pub fourth_cumulant: f64,
    pub kurtosis: f64,
    pub l1_to_fp: f64,
    pub peak_location: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub params: ModelParams,
    pub iterates: Vec<StepSummary>,
    pub final_density: GridDensity,
    pub classification: Classification,
}

impl FlowTrace {
    /// Number of RG steps taken.
    pub fn steps(&self) -> usize {
        self.iterates.last().map(|s| s.m).unwrap_or(0)
    }

    pub fn min_l1(&self) -> f64 {
        self.iterates.iter().map(|s| s.l1_to_fp).fold(f64::INFINITY, f64::min)
    }

    /// Steps spent within `radius` (L1) of the fixed point before the last exit.
    pub fn steps_within(&self, radius: f64) -> usize {
        self.iterates
            .iter()
            .rposition(|s| s.l1_to_fp <= radius)
            .map(|i| i + 1)
            .unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,variance,kurtosis,l1_to_fp,classification\n");
        let last = self.iterates.len() - 1;
        for (i, s) in self.iterates.iter().enumerate() {
            let label = if i == last {
                self.classification.label()
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.m,
                CsvFloat(s.variance),
                CsvFloat(s.kurtosis),
                CsvFloat(s.l1_to_fp),
                label
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub m_max: usize,
    /// Stop (and classify as converged) once within the convergence radius.
    pub stop_on_convergence: bool,
}

impl FlowOptions {
    pub fn new(m_max: usize) -> Self {
        Self {
            m_max,
            stop_on_convergence: true,
        }
    }
}

/// Iterates the map from `p0` towards the Gaussian fixed point.
pub fn flow(p0: &GridDensity, params: &ModelParams, m_max: usize) -> Result<FlowTrace> {
    let target = crate::fixedpoint::gaussian_fixed_point(params, p0.grid())?;
    flow_to(p0, &target, params, FlowOptions::new(m_max))
}

/// Iterates the map from `p0`, measuring distances to `target`.
pub fn flow_to(
    p0: &GridDensity,
    target: &GridDensity,
    params: &ModelParams,
    opts: FlowOptions,
) -> Result<FlowTrace> {
    use thresholds::*;
    if opts.m_max < 1 {
        return Err(RgError::ParameterOutOfRange {
            name: "m_max",
            value: 0.0,
            expected: "m_max >= 1",
        });
    }
    let sigma = target.variance();
    let mut p = p0.clone();
    let mut iterates = Vec::new();
    let mut low_run = 0;
    let mut m = 0;
    let classification = loop {
        let summary = StepSummary {
            m,
            variance: p.variance(),
            fourth_cumulant: p.fourth_cumulant(),
            kurtosis: p.excess_kurtosis(),
            l1_to_fp: p.l1_distance(target)?,
            peak_location: p.peak_location(),
        };
        let var = summary.variance;
        let l1 = summary.l1_to_fp;
        iterates.push(summary);
        if opts.stop_on_convergence && l1 < CONVERGED_L1 {
            break Classification::ConvergedToFixedPoint;
        }
        if var > ESCAPE_FACTOR * sigma || p.edge_mass(EDGE_CELLS) > EDGE_MASS {
            break Classification::EscapedLowT;
        }
        low_run = if var < COLLAPSE_FRACTION * sigma { low_run + 1 } else { 0 };
        if low_run >= COLLAPSE_STEPS {
            break Classification::CollapsedHighT;
        }
        if m == opts.m_max {
            break Classification::Undecided;
        }
        match rg_step(&p, params) {
            Ok(next) => p = next,
            Err(RgError::NormalizerDivergence) => break Classification::EscapedLowT,
            Err(e) => return Err(e),
        }
        m += 1;
    };
    Ok(FlowTrace {
        params: *params,
        iterates,
        final_density: p,
        classification,
    })
}

/// Density of the CLT-normalized sum: pushforward of the n-th iterate under
/// s -> 2^(n(a-1)/2) s.
pub fn rescale_to_clt(p: &GridDensity, n: u32, params: &ModelParams) -> Result<GridDensity> {
    if n == 0 {
        return Ok(p.clone());
    }
    let f = 2f64.powf(n as f64 * (params.a - 1.0) / 2.0);
    let grid = p.grid();
    let reach = grid.half_width / f;
    let inside: f64 = (0..grid.len())
        .filter(|&i| grid.node(i).abs() <= reach)
        .map(|i| grid.weight(i) * p.values()[i])
        .sum();
    let lost = (1.0 - inside).max(0.0);
    if lost > 1e-10 {
        return Err(RgError::ResolutionLoss { lost_mass: lost });
    }
    GridDensity::from_fn(grid, |s| interpolate(&grid, p.values(), s / f).max(0.0) / f)
}
