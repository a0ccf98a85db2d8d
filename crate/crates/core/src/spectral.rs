//! Linearization of the RG map at a fixed point, its leading even spectrum,
//! and the critical exponents implied by the unstable eigenvalue.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::{hermite_h, CsvFloat, GridDensity, GridSpec, ModelParams};
use crate::error::{Result, RgError};
use crate::fixedpoint::fixed_point_residual;
use crate::rgflow::{stencil, visit_pairs};

/// Largest fixed-point residual accepted as a linearization base.
pub const BASE_RESIDUAL_TOLERANCE: f64 = 1e-6;
const EIGEN_TOLERANCE: f64 = 1e-11;
const EIGEN_MAX_ITER: usize = 600;
/// The linearization is restricted to the nodes around s = 0 where the base
/// density is above this fraction of its peak and satisfies the fixed-point
/// relation L p = 2 p pointwise to [`BALANCE_TOLERANCE`]. Beyond that the tail
/// is not resolved, and the exponential tilt turns its noise into spurious modes.
pub const LINEARIZATION_FLOOR: f64 = 1e-30;
pub const BALANCE_TOLERANCE: f64 = 1e-4;

/// Derivative of the unnormalized map at a fixed point, with the normalizer
/// frozen at its fixed-point value, acting on even grid functions.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    /// Half-grid matrix on the resolved support: row i is output node s_i >= 0,
    /// column j input node s_j >= 0.
    pub matrix: DMatrix<f64>,
    pub base_point: GridDensity,
    pub params: ModelParams,
    pub normalizer: f64,
}

pub fn build_linearization(base: &GridDensity, params: &ModelParams) -> Result<LinearizedOperator> {
    let residual = fixed_point_residual(base, params)?;
    if !(residual < BASE_RESIDUAL_TOLERANCE) {
        return Err(RgError::NotAFixedPoint { residual });
    }
    let grid = base.grid();
    let q = base.values();
    let c = grid.center();
    let n = grid.nodes;
    let rows = c + 1;
    let lift = 2f64.powf(params.a / 2.0);
    let mut matrix = DMatrix::zeros(rows, rows);
    let mut row = vec![0.0; n + 1];
    let mut unnormalized = vec![0.0; rows];
    for i in 0..rows {
        let eta = 0.5 * lift * grid.node(c + i);
        let tilt = (eta * eta).exp();
        row.iter_mut().for_each(|x| *x = 0.0);
        let mut acc = 0.0;
        visit_pairs(&grid, eta, 1.0, |k, wk, b, w| {
            let r = stencil(q, b, w);
            row[k] += wk * r;
            acc += wk * r * q[k];
        });
        unnormalized[i] = tilt * acc;
        matrix[(i, 0)] = tilt * row[c];
        for j in 1..rows {
            matrix[(i, j)] = tilt * (row[c + j] + row[c - j]);
        }
    }
    let z: f64 = (0..rows)
        .map(|j| {
            let w = if j == 0 { grid.weight(c) } else { 2.0 * grid.weight(c + j) };
            w * unnormalized[j]
        })
        .sum();
    matrix *= 2.0 / z;
    let peak = q.iter().fold(0.0f64, |m, v| m.max(*v));
    let half = DVector::from_column_slice(&q[c..]);
    let image = &matrix * &half;
    let resolved = (0..rows)
        .take_while(|&i| {
            half[i] >= LINEARIZATION_FLOOR * peak && (image[i] / (2.0 * half[i]) - 1.0).abs() <= BALANCE_TOLERANCE
        })
        .count();
    if resolved < 2 {
        return Err(RgError::NotAFixedPoint { residual });
    }
    let matrix = matrix.view((0, 0), (resolved, resolved)).into_owned();
    Ok(LinearizedOperator {
        matrix,
        base_point: base.clone(),
        params: *params,
        normalizer: z,
    })
}

impl LinearizedOperator {
    pub fn grid(&self) -> GridSpec {
        self.base_point.grid()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Applies the operator to the even part of a full-grid function.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let g = self.grid();
        if f.len() != g.len() {
            return Err(RgError::InvalidInput("function does not match the grid".into()));
        }
        let c = g.center();
        let half = DVector::from_iterator(self.dim(), (0..self.dim()).map(|j| 0.5 * (f[c + j] + f[c - j])));
        let out = &self.matrix * half;
        Ok(mirror(&g, out.as_slice()))
    }
}

fn mirror(g: &GridSpec, half: &[f64]) -> Vec<f64> {
    let c = g.center();
    let mut full = vec![0.0; g.len()];
    for (j, v) in half.iter().enumerate() {
        full[c + j] = *v;
        full[c - j] = *v;
    }
    full
}

/// Trapezoid L2 inner product on the full grid.
pub fn inner_product(g: &GridSpec, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| g.weight(i) * x * y)
        .sum()
}

pub fn cosine_similarity(g: &GridSpec, a: &[f64], b: &[f64]) -> f64 {
    inner_product(g, a, b) / (inner_product(g, a, a) * inner_product(g, b, b)).sqrt()
}

/// H_2j(scale s) p(s) on the grid of `p`.
pub fn hermite_mode(p: &GridDensity, j: usize, scale: f64) -> Vec<f64> {
    let g = p.grid();
    (0..g.len())
        .map(|i| hermite_h(2 * j, scale * g.node(i)) * p.values()[i])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub grid: GridSpec,
    /// Sorted by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
    /// Full-grid, unit L2 norm, positive at s = 0 (or at the largest entry when s = 0 vanishes).
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Relative eigen-residual of e / p on the resolved half grid.
    pub residuals: Vec<f64>,
}

#[derive(Serialize)]
struct SpectrumSummary<'a> {
    eigenvalues: &'a [f64],
    residuals: &'a [f64],
}

impl Spectrum {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SpectrumSummary {
            eigenvalues: &self.eigenvalues,
            residuals: &self.residuals,
        })
        .expect("spectrum serializes")
    }

    pub fn eigenfunction_csv(&self, j: usize) -> Option<String> {
        use std::fmt::Write as _;
        let e = self.eigenfunctions.get(j)?;
        let mut out = String::from("s,e\n");
        for (i, v) in e.iter().enumerate() {
            let _ = writeln!(out, "{},{}", CsvFloat(self.grid.node(i)), CsvFloat(*v));
        }
        Some(out)
    }
}

/// Leading k eigenpairs by block subspace iteration with Rayleigh-Ritz
/// extraction on the dense half-grid matrix.
pub fn eigen_spectrum(op: &LinearizedOperator, k: usize) -> Result<Spectrum> {
    if k == 0 || k > 10 {
        return Err(RgError::ParameterOutOfRange {
            name: "k",
            value: k as f64,
            expected: "1 <= k <= 10",
        });
    }
    // Iterate on the ratio h = f / p, where the operator is a doubled
    // conditional expectation and well conditioned; in f itself the tilt
    // makes it strongly non-normal.
    let n = op.dim();
    let base = &op.base_point.half_values()[..n];
    let a = DMatrix::from_fn(n, n, |i, j| op.matrix[(i, j)] * base[j] / base[i]);
    let block = (k + 12).min(n);
    let g = op.grid();
    let c = g.center();
    let scale = op.params.eigen_scale;
    let mut q = DMatrix::from_fn(n, block, |i, j| {
        hermite_h(2 * j, scale * g.node(c + i)) + 1e-3 * ((i * (j + 3)) % 7) as f64
    });
    q = q.qr().q();
    let mut last = None;
    for it in 0..EIGEN_MAX_ITER {
        let z = &a * &q;
        let h = q.transpose() * &z;
        // Complex Ritz values can appear transiently before the subspace settles.
        let pairs = match ritz_pairs(&h, k) {
            Ok(p) => p,
            Err(e) if it + 1 == EIGEN_MAX_ITER => return Err(e),
            Err(_) => {
                q = z.qr().q();
                continue;
            }
        };
        let mut vals = Vec::with_capacity(k);
        let mut vecs = Vec::with_capacity(k);
        let mut res = Vec::with_capacity(k);
        for (mu, y) in pairs {
            let x = &q * &y;
            let ax = &z * &y;
            let r = (ax - &x * mu).norm() / x.norm();
            vals.push(mu);
            vecs.push(x);
            res.push(r);
        }
        let done = res
            .iter()
            .zip(&vals)
            .all(|(r, v)| *r <= EIGEN_TOLERANCE * v.abs().max(1.0));
        last = Some((vals, vecs, res));
        if done {
            break;
        }
        q = z.qr().q();
    }
    let (vals, vecs, res) = last.expect("at least one iteration");
    if res.iter().any(|r| !(*r <= 1e-6)) {
        return Err(RgError::NonConvergence(format!(
            "eigen-iteration residuals {res:?}"
        )));
    }
    let mut eigenfunctions = Vec::with_capacity(k);
    for h in vecs {
        let x = h.component_mul(&DVector::from_column_slice(base));
        let mut full = mirror(&g, x.as_slice());
        let norm = inner_product(&g, &full, &full).sqrt();
        let pivot = if full[c].abs() > 1e-12 * x.amax() {
            full[c]
        } else {
            *full
                .iter()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .expect("nonempty")
        };
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        full.iter_mut().for_each(|v| *v *= sign / norm);
        eigenfunctions.push(full);
    }
    Ok(Spectrum {
        grid: g,
        eigenvalues: vals,
        eigenfunctions,
        residuals: res,
    })
}

/// Top-k real eigenpairs of a small dense matrix, by decreasing magnitude.
fn ritz_pairs(h: &DMatrix<f64>, k: usize) -> Result<Vec<(f64, DVector<f64>)>> {
    let p = h.nrows();
    let eig = h.clone().complex_eigenvalues();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig[j].norm().total_cmp(&eig[i].norm()));
    let mut out = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mu = eig[i];
        if mu.im.abs() > 1e-9 * mu.norm().max(1e-300) {
            return Err(RgError::NonConvergence(format!(
                "complex Ritz value {mu} among the leading {k}"
            )));
        }
        let shifted = h - DMatrix::identity(p, p) * mu.re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let y: DVector<f64> = vt.row(imin).transpose();
        out.push((mu.re, y));
    }
    Ok(out)
}

/// gamma = (a-1)/log2(lambda1), beta = (2-a)/(2 log2(lambda1)).
pub fn exponents_from_spectrum(lambda1: f64, params: &ModelParams) -> Result<(f64, f64)> {
    if !(lambda1 > 1.0) {
        return Err(RgError::ParameterOutOfRange {
            name: "lambda1",
            value: lambda1,
            expected: "lambda1 > 1",
        });
    }
    let l = lambda1.log2();
    Ok(((params.a - 1.0) / l, (2.0 - params.a) / (2.0 * l)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::gaussian_fixed_point;

    fn op(a: f64, grid: GridSpec) -> LinearizedOperator {
        let m = ModelParams::new(a).unwrap();
        build_linearization(&gaussian_fixed_point(&m, grid).unwrap(), &m).unwrap()
    }

    #[test]
    fn fixed_point_is_doubled() {
        let o = op(1.25, GridSpec::default());
        let p = o.base_point.values().to_vec();
        let out = o.apply(&p).unwrap();
        let err: f64 = out.iter().zip(&p).map(|(x, y)| (x - 2.0 * y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5);
    }

    #[test]
    fn odd_functions_are_annihilated() {
        let o = op(1.25, GridSpec::new(10.0, 1024).unwrap());
        let g = o.grid();
        let f: Vec<f64> = (0..g.len()).map(|i| g.node(i) * (-g.node(i).powi(2)).exp()).collect();
        assert!(o.apply(&f).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn quadratic_mode_has_predicted_factor() {
        let m = ModelParams::new(1.25).unwrap();
        let o = op(1.25, GridSpec::default());
        let e = hermite_mode(&o.base_point, 1, m.eigen_scale);
        let out = o.apply(&e).unwrap();
        let ratio = inner_product(&o.grid(), &out, &e) / inner_product(&o.grid(), &e, &e);
        assert!((ratio - 2f64.powf(0.25)).abs() < 1e-5, "{ratio}");
    }

    #[test]
    fn non_fixed_point_rejected() {
        let m = ModelParams::new(1.25).unwrap();
        let p = crate::density::gaussian_density(0.3, GridSpec::default()).unwrap();
        assert!(matches!(
            build_linearization(&p, &m),
            Err(RgError::NotAFixedPoint { .. })
        ));
    }

    #[test]
    fn gaussian_spectrum_matches_formula() {
        for a in [1.1, 1.25, 1.4, 1.75] {
            let m = ModelParams::new(a).unwrap();
            let s = eigen_spectrum(&op(a, GridSpec::default()), 5).unwrap();
            for j in 0..5 {
                let expect = m.gaussian_eigenvalue(j);
                assert!((s.eigenvalues[j] / expect - 1.0).abs() < 1e-3, "a={a} j={j}");
                assert!(s.residuals[j] < 1e-6);
                let mode = hermite_mode(&s_base(&m), j, m.eigen_scale);
                assert!(cosine_similarity(&s.grid, &s.eigenfunctions[j], &mode).abs() > 0.999);
            }
        }
    }

    #[test]
    fn unresolved_tail_is_excluded() {
        let m = ModelParams::new(1.25).unwrap();
        let g = GridSpec::default();
        let p0 = gaussian_fixed_point(&m, g).unwrap();
        let noisy: Vec<f64> = (0..g.len())
            .map(|i| if g.node(i).abs() > 4.0 { 1e-20 * (1.0 + (i % 3) as f64) } else { p0.values()[i] })
            .collect();
        let p = GridDensity::new(g, noisy).unwrap();
        let o = build_linearization(&p, &m).unwrap();
        assert!(g.node(g.center() + o.dim() - 1) <= 4.0);
        let s = eigen_spectrum(&o, 3).unwrap();
        for j in 0..3 {
            assert!((s.eigenvalues[j] / m.gaussian_eigenvalue(j) - 1.0).abs() < 1e-4, "j={j}");
        }
    }

    fn s_base(m: &ModelParams) -> GridDensity {
        gaussian_fixed_point(m, GridSpec::default()).unwrap()
    }

    #[test]
    fn exponent_formulas() {
        let m = ModelParams::new(1.3).unwrap();
        let (g, _) = exponents_from_spectrum(2f64.powf(0.3), &m).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        let m = ModelParams::new(1.5).unwrap();
        let (g, b) = exponents_from_spectrum(2f64.sqrt(), &m).unwrap();
        assert!((g - 1.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
        assert!(exponents_from_spectrum(1.0, &m).is_err());
    }
}
