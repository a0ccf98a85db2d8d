//! The Gaussian fixed point, the epsilon-expansion seed and the Newton solver
//! for the non-Gaussian fixed point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::{
    gaussian_density, hermite_h, l1_on_grid, GridDensity, GridSpec, HermiteBasis, ModelParams,
};
use crate::error::{Result, RgError};
use crate::rgflow::{rg_step, stencil, visit_pairs};

/// Accepted L1 residual of a solved fixed point.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Largest epsilon for which the seed and solver are attempted.
pub const MAX_EPSILON: f64 = 0.1;
const JACOBIAN_STEP: f64 = 1e-6;
const MAX_HALVINGS: usize = 20;
const STALL_WINDOW: usize = 5;
const STALL_FACTOR: f64 = 0.99;
const SEED_BASIS: usize = 6;
/// Grid Newton leaves nodes below this fraction of the peak untouched.
const NEWTON_FLOOR: f64 = 1e-40;
/// Once the L1 target is met, Newton continues until ln R(p) - ln p is this
/// small at every solved node, so that the tail is resolved too.
const LOG_RESIDUAL_TOLERANCE: f64 = 1e-8;
const POLISH_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonStage {
    Coefficient,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonStep {
    pub step: usize,
    /// Grid L1 residual of the iterate after this step.
    pub residual: f64,
    pub damping: f64,
    pub stage: NewtonStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub density: GridDensity,
    pub residual_l1: f64,
    pub newton_trace: Vec<NewtonStep>,
    /// Constant c of the epsilon seed, when the solve started from one.
    pub seed_constant: Option<f64>,
}

/// L1 norm of R(p) - p.
pub fn fixed_point_residual(p: &GridDensity, params: &ModelParams) -> Result<f64> {
    rg_step(p, params)?.l1_distance(p)
}

/// The Gaussian fixed point, variance 1 - 2^(1-a).
pub fn gaussian_fixed_point(params: &ModelParams, grid: GridSpec) -> Result<GridDensity> {
    gaussian_density(params.sigma, grid)
}

fn check_epsilon(params: &ModelParams) -> Result<f64> {
    let eps = params.epsilon;
    if !(-1e-15..=MAX_EPSILON + 1e-12).contains(&eps) {
        return Err(RgError::ParameterOutOfRange {
            name: "epsilon",
            value: eps,
            expected: "0 <= a - 3/2 <= 0.1",
        });
    }
    Ok(eps.max(0.0))
}

/// p*0 e^(-b G2 - c eps G4) with G2, G4 at the eigen scale, normalized.
pub fn seed_density(params: &ModelParams, grid: GridSpec, b: f64, c: f64) -> Result<GridDensity> {
    let eps = params.epsilon;
    let sigma = params.sigma;
    let k = params.eigen_scale;
    GridDensity::from_fn(grid, |s| {
        (-s * s / (2.0 * sigma) - b * hermite_h(2, k * s) - c * eps * hermite_h(4, k * s)).exp()
    })
}

/// Residual components of [`seed_density`] along G2 and G4.
fn seed_components(params: &ModelParams, grid: GridSpec, basis: &HermiteBasis, b: f64, c: f64) -> Result<(f64, f64)> {
    let p = seed_density(params, grid, b, c)?;
    let r = rg_step(&p, params)?;
    let diff: Vec<f64> = r.values().iter().zip(p.values()).map(|(x, y)| x - y).collect();
    let coeffs = basis.project_values(&diff)?.coeffs;
    Ok((coeffs[1], coeffs[2]))
}

/// The b cancelling the G2 residual component at fixed c (secant from `b0`).
fn balance_quadratic(params: &ModelParams, grid: GridSpec, basis: &HermiteBasis, c: f64, b0: f64) -> Result<(f64, f64)> {
    let (mut x0, mut x1) = (b0, b0 * 1.1 + 1e-6);
    let (mut f0, mut g4) = seed_components(params, grid, basis, x0, c)?;
    for _ in 0..40 {
        let (f1, g1) = seed_components(params, grid, basis, x1, c)?;
        g4 = g1;
        if f1 == 0.0 || f1 == f0 || (x1 - x0).abs() <= 1e-14 * (1.0 + x1.abs()) {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        x0 = x1;
        f0 = f1;
        x1 = x2;
    }
    Ok((x1, g4))
}

/// Ansatz p*0 e^(-c eps G4) with c chosen so that the G4 component of
/// R(p) - p vanishes, where the residual is evaluated after a quadratic
/// correction e^(-b G2) cancels its (relevant) G2 component. Returns the
/// uncorrected ansatz and c.
pub fn epsilon_seed(params: &ModelParams, grid: GridSpec) -> Result<(GridDensity, f64)> {
    let eps = check_epsilon(params)?;
    if eps == 0.0 {
        return Ok((gaussian_fixed_point(params, grid)?, 0.0));
    }
    let basis = HermiteBasis::new(params, grid, SEED_BASIS)?;
    // The component changes sign more than once on (0, 10]; the physical root
    // is the first one away from c = 0.
    let samples = 60;
    let (lo_c, hi_c) = (1e-3f64, 10.0f64);
    let ratio = (hi_c / lo_c).powf(1.0 / (samples - 1) as f64);
    let mut prev_c = lo_c;
    let (mut prev_b, mut prev_f) = balance_quadratic(params, grid, &basis, prev_c, 0.0)?;
    let mut bracket = None;
    for i in 1..samples {
        let c = lo_c * ratio.powi(i as i32);
        let (b, f) = balance_quadratic(params, grid, &basis, c, prev_b)?;
        if f == 0.0 {
            let _ = b;
            return Ok((seed_density(params, grid, 0.0, c)?, c));
        }
        if f.signum() != prev_f.signum() {
            bracket = Some((prev_c, prev_b, prev_f, c));
            break;
        }
        prev_c = c;
        prev_b = b;
        prev_f = f;
    }
    let (mut lo, mut b, mut f_lo, mut hi) = bracket.ok_or_else(|| {
        RgError::NoSignChange("the G4 component of the seed residual on [1e-3, 10]".into())
    })?;
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        let (bm, f) = balance_quadratic(params, grid, &basis, mid, b)?;
        b = bm;
        if f == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    Ok((seed_density(params, grid, 0.0, c)?, c))
}

/// Positive part of the Hermite expansion, normalized.
fn density_from_coeffs(basis_values: &[Vec<f64>], c: &[f64], grid: GridSpec) -> Result<GridDensity> {
    let values: Vec<f64> = (0..grid.len())
        .map(|i| {
            let v: f64 = c.iter().zip(basis_values).map(|(cj, b)| cj * b[i]).sum();
            v.max(0.0)
        })
        .collect();
    GridDensity::new(grid, values)
}

fn stalled(history: &[f64]) -> bool {
    let n = history.len();
    n > STALL_WINDOW && history[n - 1] > STALL_FACTOR * history[n - 1 - STALL_WINDOW]
}

/// Damped Newton for a fixed point near `seed`: first on the Hermite
/// coefficients of p = (sum c_j G_2j p*0)_+, then on the log-density at the
/// grid nodes, where the truncated expansion's representation error is absent.
pub fn solve_fixed_point(seed: &GridDensity, params: &ModelParams, m: usize) -> Result<FixedPointResult> {
    if !(8..=16).contains(&m) {
        return Err(RgError::ParameterOutOfRange {
            name: "M",
            value: m as f64,
            expected: "8 <= M <= 16",
        });
    }
    let seed_residual = fixed_point_residual(seed, params)?;
    if !(seed_residual < 0.1) {
        return Err(RgError::InvalidInput(format!(
            "seed residual {seed_residual:.3e} is not below 0.1"
        )));
    }
    let grid = seed.grid();
    let basis = HermiteBasis::new(params, grid, m)?;
    let mut trace = Vec::new();

    let (stage1, step) = coefficient_newton(seed, &basis, params, &mut trace)?;
    let start = if stage1.1 < seed_residual {
        stage1
    } else {
        (seed.clone(), seed_residual)
    };
    let mut attempt = Vec::new();
    let mut best = grid_newton(start, params, step, &mut attempt)?;
    if best.1 >= RESIDUAL_TOLERANCE {
        // The clipped expansion can leave tails the log-Newton handles
        // poorly; retry from the seed itself.
        let mut retry = Vec::new();
        let alt = grid_newton((seed.clone(), seed_residual), params, step, &mut retry)?;
        if alt.1 < best.1 {
            best = alt;
            attempt = retry;
        }
    }
    trace.extend(attempt);
    let result = FixedPointResult {
        density: best.0,
        residual_l1: best.1,
        newton_trace: trace,
        seed_constant: None,
    };
    if result.residual_l1 < RESIDUAL_TOLERANCE {
        Ok(result)
    } else {
        Err(RgError::NewtonStall {
            best: Box::new(result),
        })
    }
}

/// Seeds with [`epsilon_seed`] and solves with [`solve_fixed_point`].
pub fn non_gaussian_fixed_point(params: &ModelParams, grid: GridSpec, m: usize) -> Result<FixedPointResult> {
    let (seed, c) = epsilon_seed(params, grid)?;
    match solve_fixed_point(&seed, params, m) {
        Ok(mut r) => {
            r.seed_constant = Some(c);
            Ok(r)
        }
        Err(RgError::NewtonStall { mut best }) => {
            best.seed_constant = Some(c);
            Err(RgError::NewtonStall { best })
        }
        Err(e) => Err(e),
    }
}

type Iterate = (GridDensity, f64);

fn grid_newton(start: Iterate, params: &ModelParams, mut step: usize, trace: &mut Vec<NewtonStep>) -> Result<Iterate> {
    let mut best = start;
    let mut history = vec![best.1];
    for _ in 0..40 {
        if best.1 < RESIDUAL_TOLERANCE {
            break;
        }
        let Some((next, res, damping)) = grid_newton_step(&best.0, best.1, params)? else {
            break;
        };
        step += 1;
        trace.push(NewtonStep {
            step,
            residual: res,
            damping,
            stage: NewtonStage::Grid,
        });
        best = (next, res);
        history.push(res);
        if stalled(&history) {
            break;
        }
    }
    if best.1 < RESIDUAL_TOLERANCE {
        let mut log_res = max_log_residual(&best.0, params)?;
        for _ in 0..POLISH_STEPS {
            if log_res < LOG_RESIDUAL_TOLERANCE {
                break;
            }
            let Some((next, res, next_log)) = polish_step(&best.0, params)? else {
                break;
            };
            if !(res < RESIDUAL_TOLERANCE && next_log < log_res) {
                break;
            }
            step += 1;
            trace.push(NewtonStep {
                step,
                residual: res,
                damping: 1.0,
                stage: NewtonStage::Grid,
            });
            best = (next, res);
            log_res = next_log;
        }
    }
    Ok(best)
}

fn solved_nodes(half: &[f64], r: &[f64]) -> Vec<usize> {
    let peak = half.iter().cloned().fold(0.0, f64::max);
    let floor = NEWTON_FLOOR * peak;
    (0..half.len()).filter(|&j| half[j] > floor && r[j] > floor).collect()
}

/// Largest |ln R(p) - ln p| over the nodes the grid Newton solves for.
fn max_log_residual(p: &GridDensity, params: &ModelParams) -> Result<f64> {
    let r = rg_step(p, params)?;
    let (half, rh) = (p.half_values(), r.half_values());
    Ok(solved_nodes(half, rh)
        .into_iter()
        .map(|j| (rh[j].ln() - half[j].ln()).abs())
        .fold(0.0, f64::max))
}

/// An undamped grid Newton step with its L1 and log residuals.
fn polish_step(p: &GridDensity, params: &ModelParams) -> Result<Option<(GridDensity, f64, f64)>> {
    let Some((half, mask, delta)) = newton_direction(p, params) else {
        return Ok(None);
    };
    let mut trial = half;
    for (ii, &i) in mask.iter().enumerate() {
        trial[i] *= delta[ii].exp();
    }
    let Ok(t) = GridDensity::from_half(p.grid(), &trial) else {
        return Ok(None);
    };
    let res = fixed_point_residual(&t, params)?;
    let log_res = max_log_residual(&t, params)?;
    Ok(Some((t, res, log_res)))
}

fn coefficient_newton(
    seed: &GridDensity,
    basis: &HermiteBasis,
    params: &ModelParams,
    trace: &mut Vec<NewtonStep>,
) -> Result<(Iterate, usize)> {
    let grid = seed.grid();
    let m = basis.size();
    let scale = basis.scale();
    let basis_values: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            (0..grid.len())
                .map(|i| {
                    let s = grid.node(i);
                    hermite_h(2 * j, scale * s) * crate::density::gaussian_pdf(s, params.sigma)
                })
                .collect()
        })
        .collect();
    let map = |c: &[f64]| -> Result<(DVector<f64>, GridDensity, f64)> {
        let p = density_from_coeffs(&basis_values, c, grid)?;
        let r = rg_step(&p, params)?;
        let proj = basis.project(&r)?;
        let f = DVector::from_iterator(m, proj.coeffs.iter().zip(c).map(|(x, y)| x - y));
        let res = l1_on_grid(&grid, r.values(), p.values());
        Ok((f, p, res))
    };
    let mut c: Vec<f64> = basis.project(seed)?.coeffs;
    let (mut f, mut p, mut res) = map(&c)?;
    let mut best = (p.clone(), res);
    let mut history = vec![res];
    let mut step = 0;
    for _ in 0..30 {
        if res < RESIDUAL_TOLERANCE || f.norm() < 1e-13 {
            break;
        }
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let mut cj = c.clone();
            cj[j] += JACOBIAN_STEP;
            let (fj, _, _) = map(&cj)?;
            jac.set_column(j, &((fj - &f) / JACOBIAN_STEP));
        }
        let Some(delta) = jac.lu().solve(&(-&f)) else {
            break;
        };
        let f_norm = f.norm();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = c.iter().zip(delta.iter()).map(|(x, d)| x + lambda * d).collect();
            if let Ok((ft, pt, rt)) = map(&trial) {
                if ft.norm() < f_norm {
                    accepted = Some((trial, ft, pt, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((trial, ft, pt, rt)) = accepted else {
            break;
        };
        c = trial;
        f = ft;
        p = pt;
        res = rt;
        step += 1;
        trace.push(NewtonStep {
            step,
            residual: res,
            damping: lambda,
            stage: NewtonStage::Coefficient,
        });
        if res < best.1 {
            best = (p.clone(), res);
        }
        history.push(res);
        if stalled(&history) {
            break;
        }
    }
    Ok((best, step))
}

/// R(p) on the half grid s >= 0 and its derivative with respect to even
/// perturbations of p (half-grid indexing on both sides).
pub(crate) fn step_with_jacobian(p: &GridDensity, params: &ModelParams) -> (Vec<f64>, DMatrix<f64>) {
    let grid = p.grid();
    let q = p.values();
    let c = grid.center();
    let n = grid.nodes;
    let rows = c + 1;
    let lift = 2f64.powf(params.a / 2.0);
    let mut integrals = vec![0.0; rows];
    let mut tilts = vec![0.0; rows];
    let mut d = DMatrix::zeros(rows, rows);
    let mut row = vec![0.0; n + 1];
    for i in 0..rows {
        let eta = 0.5 * lift * grid.node(c + i);
        tilts[i] = eta * eta;
        row.iter_mut().for_each(|x| *x = 0.0);
        let mut acc = 0.0;
        visit_pairs(&grid, eta, 1.0, |k, wk, base, w| {
            let r = stencil(q, base, w);
            acc += wk * q[k] * r;
            row[k] += wk * r;
            let scaled = wk * q[k];
            if scaled != 0.0 {
                for (mm, wm) in w.iter().enumerate() {
                    let idx = base + mm as isize;
                    if idx >= 0 && (idx as usize) <= n {
                        row[idx as usize] += scaled * wm;
                    }
                }
            }
        });
        integrals[i] = acc;
        d[(i, 0)] = row[c];
        for j in 1..rows {
            d[(i, j)] = row[c + j] + row[c - j];
        }
    }
    let shift = tilts
        .iter()
        .zip(&integrals)
        .map(|(t, v)| if *v > 0.0 { t + v.ln() } else { f64::NEG_INFINITY })
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = tilts.iter().map(|t| (t - shift).exp()).collect();
    let u: Vec<f64> = (0..rows).map(|i| e[i] * integrals[i]).collect();
    let wt = |j: usize| if j == 0 { grid.weight(c) } else { 2.0 * grid.weight(c + j) };
    let z: f64 = (0..rows).map(|j| wt(j) * u[j]).sum();
    let r: Vec<f64> = u.iter().map(|x| x / z).collect();
    let mut dz = vec![0.0; rows];
    for l in 0..rows {
        let f = wt(l) * e[l];
        for (j, dzj) in dz.iter_mut().enumerate() {
            *dzj += f * d[(l, j)];
        }
    }
    let mut jac = DMatrix::zeros(rows, rows);
    for i in 0..rows {
        for j in 0..rows {
            jac[(i, j)] = (e[i] * d[(i, j)] - r[i] * dz[j]) / z;
        }
    }
    (r, jac)
}

/// One damped Newton step on ln p over the nodes where p and R(p) are positive.
fn grid_newton_step(
    p: &GridDensity,
    residual: f64,
    params: &ModelParams,
) -> Result<Option<(GridDensity, f64, f64)>> {
    let grid = p.grid();
    let Some((half, mask, delta)) = newton_direction(p, params) else {
        return Ok(None);
    };
    let mut lambda = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let mut trial = half.clone();
        for (ii, &i) in mask.iter().enumerate() {
            trial[i] *= (lambda * delta[ii]).exp();
        }
        if let Ok(t) = GridDensity::from_half(grid, &trial) {
            if let Ok(res) = fixed_point_residual(&t, params) {
                if res < residual {
                    return Ok(Some((t, res, lambda)));
                }
            }
        }
        lambda *= 0.5;
    }
    Ok(None)
}

/// Full Newton correction of ln p on the solved nodes: (half values, nodes, step).
fn newton_direction(p: &GridDensity, params: &ModelParams) -> Option<(Vec<f64>, Vec<usize>, DVector<f64>)> {
    let (r, jac) = step_with_jacobian(p, params);
    let mut half: Vec<f64> = p.half_values().to_vec();
    for (h, rv) in half.iter_mut().zip(&r) {
        if *h == 0.0 {
            *h = *rv;
        }
    }
    let mask = solved_nodes(&half, &r);
    // Unsolved nodes are zeroed: stale values there would act as a source
    // for the far tail through the pairing of s ~ 0 with s ~ 2^(a/2) s'.
    let mut keep = vec![false; half.len()];
    mask.iter().for_each(|&j| keep[j] = true);
    half.iter_mut().zip(&keep).filter(|(_, k)| !**k).for_each(|(h, _)| *h = 0.0);
    let k = mask.len();
    let mut a = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (ii, &i) in mask.iter().enumerate() {
        for (jj, &j) in mask.iter().enumerate() {
            a[(ii, jj)] = jac[(i, j)] * half[j] / r[i];
        }
        a[(ii, ii)] -= 1.0;
        rhs[ii] = -(r[i].ln() - half[i].ln());
    }
    let delta = a.lu().solve(&rhs)?;
    Some((half, mask, delta))
}

/// Constants (C0, c0) with p(s) <= C0 p*0(s) e^(-c0 eps s^4) on the grid:
/// c0 is half the fitted quartic decay rate of ln(p/p*0) on |s| >= 1, and C0
/// is the smallest constant making the bound hold at every node.
pub fn fit_tail_bound(p: &GridDensity, params: &ModelParams) -> Result<(f64, f64)> {
    let eps = params.epsilon;
    if !(eps > 0.0) {
        return Err(RgError::ParameterOutOfRange {
            name: "epsilon",
            value: eps,
            expected: "epsilon > 0",
        });
    }
    let grid = p.grid();
    let c = grid.center();
    let half = p.half_values();
    let logp0 = |s: f64| -s * s / (2.0 * params.sigma) - 0.5 * (2.0 * std::f64::consts::PI * params.sigma).ln();
    let pts: Vec<(f64, f64)> = (0..half.len())
        .filter(|&j| grid.node(c + j) >= 1.0 && half[j] > 1e-280)
        .map(|j| {
            let s = grid.node(c + j);
            (eps * s.powi(4), half[j].ln() - logp0(s))
        })
        .collect();
    if pts.len() < 4 {
        return Err(RgError::Degenerate("too few tail nodes for the bound fit".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let c0 = -0.5 * slope;
    let big_c = (0..half.len())
        .filter(|&j| half[j] > 0.0)
        .map(|j| {
            let s = grid.node(c + j);
            (half[j].ln() - logp0(s) + c0 * eps * s.powi(4)).exp()
        })
        .fold(0.0, f64::max);
    Ok((big_c, c0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_fixed_point_examples() {
        let g = GridSpec::default();
        let m = ModelParams::new(1.5).unwrap();
        let p = gaussian_fixed_point(&m, g).unwrap();
        assert!((p.variance() - 0.292_893_218_813_452_5).abs() < 1e-8);
        assert!(fixed_point_residual(&p, &m).unwrap() < 1e-7);
        let near_two = ModelParams::new(1.999_999).unwrap();
        assert!((near_two.sigma - 0.5).abs() < 1e-6);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = GridSpec::new(8.0, 256).unwrap();
        let m = ModelParams::new(1.4).unwrap();
        let p = GridDensity::from_fn(g, |s| (-s * s / 0.6 - 0.1 * s.powi(4)).exp()).unwrap();
        let (r, jac) = step_with_jacobian(&p, &m);
        let base = rg_step(&p, &m).unwrap();
        for (ri, bi) in r.iter().zip(base.half_values()) {
            assert!((ri - bi).abs() < 1e-10 * bi + 1e-14);
        }
        let j = 17;
        let h = 1e-7;
        let c = g.center();
        let mut vals = p.values().to_vec();
        vals[c + j] += h;
        vals[c - j] += h;
        let out = crate::rgflow::framed_step(
            &vals,
            &g,
            crate::rgflow::Frame::IDENTITY,
            crate::rgflow::Frame::IDENTITY,
            &m,
        )
        .unwrap();
        for i in [0usize, 5, 17, 40, 90] {
            let fd = (out[c + i] - base.half_values()[i]) / h;
            let an = jac[(i, j)];
            assert!((fd - an).abs() < 1e-5 * (1.0 + an.abs()), "i={i} fd={fd} an={an}");
        }
    }

    #[test]
    fn seed_at_zero_epsilon_is_gaussian() {
        let m = ModelParams::new(1.5).unwrap();
        let (p, c) = epsilon_seed(&m, GridSpec::default()).unwrap();
        assert_eq!(c, 0.0);
        assert!((p.variance() - m.sigma).abs() < 1e-10);
        assert!(epsilon_seed(&ModelParams::new(1.4).unwrap(), GridSpec::default()).is_err());
    }

    #[test]
    fn solver_accepts_exact_seed_quickly() {
        let m = ModelParams::new(1.5).unwrap();
        let g = GridSpec::default();
        let p = gaussian_fixed_point(&m, g).unwrap();
        let r = solve_fixed_point(&p, &m, 12).unwrap();
        assert!(r.residual_l1 < RESIDUAL_TOLERANCE);
        assert!(r.newton_trace.len() <= 2, "{:?}", r.newton_trace);
        assert!(r.density.l1_distance(&p).unwrap() < 1e-6);
    }

    #[test]
    fn solver_rejects_bad_basis_size() {
        let m = ModelParams::new(1.55).unwrap();
        let p = gaussian_fixed_point(&m, GridSpec::default()).unwrap();
        assert!(solve_fixed_point(&p, &m, 4).is_err());
        assert!(solve_fixed_point(&p, &m, 20).is_err());
    }
}
