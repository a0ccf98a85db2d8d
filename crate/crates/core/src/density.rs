//! Even probability densities on a symmetric uniform grid, model constants,
//! the Hermite families and the projection onto them.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RgError};

/// Values below this fraction of the peak count as "contained" at the grid edge.
pub const TAIL_TOLERANCE: f64 = 1e-12;
/// Gram condition number above which a projection is refused.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// The long-range exponent `a` and the constants derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    /// Block-spin normalization exponent a/2.
    pub kappa: f64,
    /// Variance of the Gaussian fixed point, 1 - 2^(1-a).
    pub sigma: f64,
    /// Argument scale sqrt(1 - 2^(a-2)) of the Hermite family `hermite_g`.
    pub gamma_scale: f64,
    /// Argument scale under which H_2j(scale*s) p*0(s) are exact eigenfunctions
    /// of the linearization at the Gaussian fixed point.
    pub eigen_scale: f64,
    /// Distance a - 3/2 from the marginal exponent.
    pub epsilon: f64,
}

impl ModelParams {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 1.0 && a < 2.0) {
            return Err(RgError::ParameterOutOfRange {
                name: "a",
                value: a,
                expected: "1 < a < 2",
            });
        }
        let sigma = 1.0 - 2f64.powf(1.0 - a);
        let g2 = 1.0 - 2f64.powf(a - 2.0);
        Ok(Self {
            a,
            kappa: a / 2.0,
            sigma,
            gamma_scale: g2.sqrt(),
            eigen_scale: (g2 * (1.0 + sigma) / sigma).sqrt(),
            epsilon: a - 1.5,
        })
    }

    /// Argument contraction 2^((2-a)/2) of the map: output s pairs inputs around s/c.
    pub fn contraction(&self) -> f64 {
        2f64.powf((2.0 - self.a) / 2.0)
    }

    /// Eigenvalue 2^(1-(2-a)j) of the linearization at the Gaussian fixed point.
    pub fn gaussian_eigenvalue(&self, j: usize) -> f64 {
        2f64.powf(1.0 - (2.0 - self.a) * j as f64)
    }
}

/// Uniform symmetric grid s_i = -L + 2Li/N, i = 0..=N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            nodes: 2048,
        }
    }
}

impl GridSpec {
    pub fn new(half_width: f64, nodes: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(RgError::ParameterOutOfRange {
                name: "L",
                value: half_width,
                expected: "L > 0",
            });
        }
        if nodes < 8 || nodes % 2 != 0 {
            return Err(RgError::ParameterOutOfRange {
                name: "N",
                value: nodes as f64,
                expected: "even N >= 8",
            });
        }
        Ok(Self { half_width, nodes })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.nodes as f64
    }

    pub fn len(&self) -> usize {
        self.nodes + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn center(&self) -> usize {
        self.nodes / 2
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + self.spacing() * i as f64
    }

    pub fn nodes_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Trapezoid weight of node i.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.nodes {
            0.5 * self.spacing()
        } else {
            self.spacing()
        }
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().enumerate().map(|(i, v)| self.weight(i) * v).sum()
    }
}

/// Lagrange weights for nodes at offsets -1, 0, 1, 2 and local coordinate
/// `phi` in [0, 1) measured from offset 0.
#[inline]
pub(crate) fn cubic_weights(phi: f64) -> [f64; 4] {
    let a = phi + 1.0;
    let b = phi;
    let c = phi - 1.0;
    let d = phi - 2.0;
    [
        -b * c * d / 6.0,
        a * c * d / 2.0,
        -a * b * d / 2.0,
        a * b * c / 6.0,
    ]
}

/// Cubic interpolation of grid samples at `s`; zero outside the grid.
pub fn interpolate(grid: &GridSpec, values: &[f64], s: f64) -> f64 {
    let g = (s + grid.half_width) / grid.spacing();
    if !(g > -1.0 && g < grid.nodes as f64 + 1.0) {
        return 0.0;
    }
    let j = g.floor();
    let w = cubic_weights(g - j);
    let j = j as isize;
    let n = grid.nodes as isize;
    let mut acc = 0.0;
    for (m, wm) in w.iter().enumerate() {
        let idx = j - 1 + m as isize;
        if (0..=n).contains(&idx) {
            acc += wm * values[idx as usize];
        }
    }
    acc
}

/// An even, normalized probability density on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    #[serde(rename = "L")]
    half_width: f64,
    #[serde(rename = "N")]
    nodes: usize,
    values: Vec<f64>,
}

impl GridDensity {
    /// Symmetrizes and normalizes `values`. Tail containment is not required
    /// here; see [`GridDensity::check_containment`].
    pub fn new(grid: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        GridSpec::new(grid.half_width, grid.nodes)?;
        if values.len() != grid.len() {
            return Err(RgError::InvalidInput(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(RgError::InvalidInput(
                "density values must be finite and nonnegative".into(),
            ));
        }
        let n = grid.nodes;
        for i in 0..grid.center() {
            let m = 0.5 * (values[i] + values[n - i]);
            values[i] = m;
            values[n - i] = m;
        }
        let mass = grid.integrate(&values);
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(RgError::InvalidInput("density has no mass".into()));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(Self {
            half_width: grid.half_width,
            nodes: grid.nodes,
            values,
        })
    }

    /// Builds from the nonnegative half s >= 0 (index 0 is s = 0).
    pub fn from_half(grid: GridSpec, half: &[f64]) -> Result<Self> {
        let c = grid.center();
        if half.len() != c + 1 {
            return Err(RgError::InvalidInput("half-grid length mismatch".into()));
        }
        let mut values = vec![0.0; grid.len()];
        for (j, v) in half.iter().enumerate() {
            values[c + j] = *v;
            values[c - j] = *v;
        }
        Self::new(grid, values)
    }

    /// Samples an even function and normalizes it.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let c = grid.center();
        let half: Vec<f64> = (0..=c).map(|j| f(grid.node(c + j))).collect();
        Self::from_half(grid, &half)
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            half_width: self.half_width,
            nodes: self.nodes,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values on s >= 0, starting at s = 0.
    pub fn half_values(&self) -> &[f64] {
        &self.values[self.nodes / 2..]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid().integrate(&self.values)
    }

    pub fn moment(&self, k: u32) -> f64 {
        moments(self, k)
    }

    pub fn variance(&self) -> f64 {
        moments(self, 2)
    }

    pub fn fourth_cumulant(&self) -> f64 {
        let m2 = moments(self, 2);
        moments(self, 4) - 3.0 * m2 * m2
    }

    pub fn excess_kurtosis(&self) -> f64 {
        let m2 = moments(self, 2);
        moments(self, 4) / (m2 * m2) - 3.0
    }

    pub fn eval(&self, s: f64) -> f64 {
        interpolate(&self.grid(), &self.values, s)
    }

    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if self.grid() != other.grid() {
            return Err(RgError::InvalidInput("grids differ".into()));
        }
        Ok(l1_on_grid(&self.grid(), &self.values, &other.values))
    }

    /// Probability mass carried by the outermost `cells` intervals on both sides.
    pub fn edge_mass(&self, cells: usize) -> f64 {
        let g = self.grid();
        let cells = cells.min(g.center());
        let h = g.spacing();
        let side: f64 = (0..cells)
            .map(|i| 0.5 * h * (self.values[i] + self.values[i + 1]))
            .sum();
        2.0 * side
    }

    /// Edge value relative to the peak value.
    pub fn edge_ratio(&self) -> f64 {
        let peak = self.values.iter().cloned().fold(0.0, f64::max);
        self.values[0] / peak
    }

    pub fn check_containment(&self) -> Result<()> {
        let r = self.edge_ratio();
        if r < TAIL_TOLERANCE {
            Ok(())
        } else {
            Err(RgError::TailContainment(format!(
                "edge value is {r:.3e} of the peak"
            )))
        }
    }

    /// Location s >= 0 of the largest value, refined by a parabola through
    /// the three surrounding nodes.
    pub fn peak_location(&self) -> f64 {
        let g = self.grid();
        let half = self.half_values();
        let (k, _) = half
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        let h = g.spacing();
        if k == 0 || k + 1 >= half.len() {
            return k as f64 * h;
        }
        let (l, m, r) = (half[k - 1], half[k], half[k + 1]);
        let den = l - 2.0 * m + r;
        let off = if den != 0.0 { 0.5 * (l - r) / den } else { 0.0 };
        (k as f64 + off) * h
    }

    pub fn to_csv(&self) -> String {
        let g = self.grid();
        let mut out = String::from("s,p\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", CsvFloat(g.node(i)), CsvFloat(*v));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("density serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GridDensity = serde_json::from_str(text)
            .map_err(|e| RgError::InvalidInput(format!("density JSON: {e}")))?;
        GridDensity::new(GridSpec::new(raw.half_width, raw.nodes)?, raw.values)
    }
}

pub(crate) fn l1_on_grid(grid: &GridSpec, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| grid.weight(i) * (x - y).abs())
        .sum()
}

/// CSV number formatting: plain decimals for moderate magnitudes, shortest
/// round-trip exponent notation otherwise.
#[derive(Debug, Clone, Copy)]
pub struct CsvFloat(pub f64);

impl std::fmt::Display for CsvFloat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let x = self.0;
        if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&x.abs()) {
            write!(f, "{x}")
        } else {
            write!(f, "{x:e}")
        }
    }
}

/// Normalized centred Gaussian with variance `tau`; requires L >= 8 sqrt(tau).
pub fn gaussian_density(tau: f64, grid: GridSpec) -> Result<GridDensity> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(RgError::ParameterOutOfRange {
            name: "tau",
            value: tau,
            expected: "tau > 0",
        });
    }
    if grid.half_width <= 8.0 * tau.sqrt() {
        return Err(RgError::TailContainment(format!(
            "L = {} does not exceed 8 sqrt(tau) = {}",
            grid.half_width,
            8.0 * tau.sqrt()
        )));
    }
    gaussian_density_unchecked(tau, grid)
}

pub(crate) fn gaussian_density_unchecked(tau: f64, grid: GridSpec) -> Result<GridDensity> {
    GridDensity::from_fn(grid, |s| {
        (-s * s / (2.0 * tau)).exp() / (2.0 * std::f64::consts::PI * tau).sqrt()
    })
}

/// Trapezoid moment of order k; odd moments vanish by symmetry.
pub fn moments(p: &GridDensity, k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let g = p.grid();
    p.values
        .iter()
        .enumerate()
        .map(|(i, v)| g.weight(i) * v * g.node(i).powi(k as i32))
        .sum()
}

/// Physicists' Hermite polynomial H_k(x).
pub fn hermite_h(k: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 2.0 * x;
    for n in 1..k {
        let next = 2.0 * x * cur - 2.0 * n as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// G_2j(s) = H_2j(gamma_scale * s).
pub fn hermite_g(j: usize, s: f64, params: &ModelParams) -> f64 {
    hermite_h(2 * j, params.gamma_scale * s)
}

/// Coefficients of an even function in the basis H_2j(scale*s) p*0(s), j = 0..M-1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteCoeffs {
    pub params: ModelParams,
    pub scale: f64,
    pub coeffs: Vec<f64>,
}

impl HermiteCoeffs {
    /// Function values sum_j c_j H_2j(scale s) p*0(s) on `grid`.
    pub fn reconstruct(&self, grid: &GridSpec) -> Vec<f64> {
        let sigma = self.params.sigma;
        (0..grid.len())
            .map(|i| {
                let s = grid.node(i);
                let p0 = gaussian_pdf(s, sigma);
                let poly: f64 = self
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * hermite_h(2 * j, self.scale * s))
                    .sum();
                poly * p0
            })
            .collect()
    }
}

pub(crate) fn gaussian_pdf(s: f64, tau: f64) -> f64 {
    (-s * s / (2.0 * tau)).exp() / (2.0 * std::f64::consts::PI * tau).sqrt()
}

/// Weighted least-squares projection onto {H_2j(scale s) p*0(s)} under the
/// inner product <f, g> = integral f g / p*0.
#[derive(Debug, Clone)]
pub struct HermiteBasis {
    params: ModelParams,
    grid: GridSpec,
    scale: f64,
    /// Nodes entering the fit (p*0 not negligible).
    rows: Vec<usize>,
    /// sqrt(w_i / p*0_i) for each fitted row.
    rhs_factor: Vec<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    condition: f64,
}

impl HermiteBasis {
    /// Basis at the eigen scale of the Gaussian linearization.
    pub fn new(params: &ModelParams, grid: GridSpec, m: usize) -> Result<Self> {
        Self::with_scale(params, grid, m, params.eigen_scale)
    }

    pub fn with_scale(params: &ModelParams, grid: GridSpec, m: usize, scale: f64) -> Result<Self> {
        if m < 2 {
            return Err(RgError::ParameterOutOfRange {
                name: "M",
                value: m as f64,
                expected: "M >= 2",
            });
        }
        let sigma = params.sigma;
        // Skip nodes where p*0 underflows relative to its peak.
        let cutoff = (2.0 * sigma * 345.0).sqrt();
        let rows: Vec<usize> = (0..grid.len())
            .filter(|&i| grid.node(i).abs() <= cutoff)
            .collect();
        if rows.len() < 2 * m {
            return Err(RgError::InvalidInput("grid too coarse for projection".into()));
        }
        let mut design = DMatrix::zeros(rows.len(), m);
        let mut rhs_factor = Vec::with_capacity(rows.len());
        for (r, &i) in rows.iter().enumerate() {
            let s = grid.node(i);
            let w = grid.weight(i);
            let p0 = gaussian_pdf(s, sigma);
            let sw = (w * p0).sqrt();
            for j in 0..m {
                design[(r, j)] = sw * hermite_h(2 * j, scale * s);
            }
            rhs_factor.push((w / p0).sqrt());
        }
        let mut normalized = design.clone();
        for mut col in normalized.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        let sv = normalized.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 {
            (smax / smin).powi(2)
        } else {
            f64::INFINITY
        };
        if !(condition <= MAX_GRAM_CONDITION) {
            return Err(RgError::IllConditioned { condition });
        }
        let qr = design.qr();
        Ok(Self {
            params: *params,
            grid,
            scale,
            rows,
            rhs_factor,
            q: qr.q(),
            r: qr.r(),
            condition,
        })
    }

    pub fn size(&self) -> usize {
        self.r.ncols()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Condition number of the column-normalized Gram matrix.
    pub fn gram_condition(&self) -> f64 {
        self.condition
    }

    /// Projects raw grid values (any even function, not necessarily a density).
    pub fn project_values(&self, f: &[f64]) -> Result<HermiteCoeffs> {
        if f.len() != self.grid.len() {
            return Err(RgError::InvalidInput("grid mismatch in projection".into()));
        }
        let b = DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .zip(&self.rhs_factor)
                .map(|(&i, k)| k * f[i]),
        );
        let qtb = self.q.transpose() * b;
        let c = self
            .r
            .solve_upper_triangular(&qtb)
            .ok_or(RgError::IllConditioned {
                condition: f64::INFINITY,
            })?;
        Ok(HermiteCoeffs {
            params: self.params,
            scale: self.scale,
            coeffs: c.iter().cloned().collect(),
        })
    }

    pub fn project(&self, p: &GridDensity) -> Result<HermiteCoeffs> {
        if p.grid() != self.grid {
            return Err(RgError::InvalidInput("grid mismatch in projection".into()));
        }
        self.project_values(p.values())
    }
}

/// Projects `p` onto the first `m` eigen-scaled Hermite functions.
pub fn project_to_hermite(p: &GridDensity, m: usize, params: &ModelParams) -> Result<HermiteCoeffs> {
    HermiteBasis::new(params, p.grid(), m)?.project(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(a: f64) -> ModelParams {
        ModelParams::new(a).unwrap()
    }

    #[test]
    fn model_params_constants() {
        let m = p(1.5);
        assert_relative_eq!(m.sigma, 1.0 - 2f64.powf(-0.5), epsilon = 1e-15);
        assert_relative_eq!(m.kappa, 0.75);
        assert_relative_eq!(m.epsilon, 0.0);
        assert!(m.sigma > 0.0 && m.sigma < 1.0);
        assert!(ModelParams::new(2.5).is_err());
        assert!(ModelParams::new(1.0).is_err());
    }

    #[test]
    fn gaussian_variance_and_fourth_moment() {
        let g = GridSpec::default();
        for tau in [0.05, 0.2, 0.7] {
            let d = gaussian_density(tau, g).unwrap();
            assert!((moments(&d, 0) - 1.0).abs() < 1e-12);
            assert!((d.variance() - tau).abs() < 1e-8);
            assert!((moments(&d, 4) - 3.0 * tau * tau).abs() < 1e-8);
            assert_eq!(moments(&d, 3), 0.0);
        }
    }

    #[test]
    fn gaussian_containment_boundary_fires() {
        let g = GridSpec::new(4.0, 512).unwrap();
        assert!(matches!(
            gaussian_density(0.25, g),
            Err(RgError::TailContainment(_))
        ));
        assert!(gaussian_density(0.2, g).is_ok());
    }

    #[test]
    fn fixed_point_density_variance() {
        let m = p(1.5);
        let d = gaussian_density(m.sigma, GridSpec::default()).unwrap();
        assert!((d.variance() - 0.292_893_218_813_452_5).abs() < 1e-8);
    }

    #[test]
    fn hermite_small_orders() {
        let m = p(1.25);
        let g = m.gamma_scale;
        for s in [-2.0, -0.3, 0.0, 0.7, 3.1] {
            assert_eq!(hermite_g(0, s, &m), 1.0);
            assert_relative_eq!(hermite_g(1, s, &m), 4.0 * g * g * s * s - 2.0, epsilon = 1e-12);
        }
        assert_eq!(hermite_g(2, 0.0, &m), 12.0);
        let x = 0.37_f64;
        assert_relative_eq!(
            hermite_h(4, x),
            16.0 * x.powi(4) - 48.0 * x * x + 12.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn hermite_recurrence_holds() {
        for k in 1..24 {
            for i in 0..=40 {
                let x = -10.0 + 0.5 * i as f64;
                let lhs = hermite_h(k + 1, x);
                let rhs = 2.0 * x * hermite_h(k, x) - 2.0 * k as f64 * hermite_h(k - 1, x);
                let scale = lhs.abs().max(1.0);
                assert!((lhs - rhs).abs() <= 1e-9 * scale, "k={k} x={x}");
            }
        }
    }

    #[test]
    fn grid_density_is_even_and_normalized() {
        let g = GridSpec::new(5.0, 64).unwrap();
        let raw: Vec<f64> = (0..=64).map(|i| 1.0 + i as f64).collect();
        let d = GridDensity::new(g, raw).unwrap();
        let v = d.values();
        for i in 0..=64 {
            assert_eq!(v[i], v[64 - i]);
        }
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert!(GridDensity::new(g, vec![-1.0; 65]).is_err());
        assert!(GridDensity::new(g, vec![1.0; 10]).is_err());
    }

    #[test]
    fn interpolation_is_exact_for_cubics() {
        let g = GridSpec::new(3.0, 60).unwrap();
        let f = |s: f64| 1.0 + 0.5 * s - 0.2 * s * s + 0.03 * s * s * s;
        let vals: Vec<f64> = g.nodes_vec().into_iter().map(f).collect();
        for s in [-2.71, -0.013, 0.5, 1.77, 2.3] {
            assert_relative_eq!(interpolate(&g, &vals, s), f(s), epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_of_fixed_point_is_unit_vector() {
        let m = p(1.25);
        let g = GridSpec::default();
        let d = gaussian_density(m.sigma, g).unwrap();
        let c = project_to_hermite(&d, 12, &m).unwrap();
        assert!((c.coeffs[0] - 1.0).abs() < 1e-10);
        for x in &c.coeffs[1..] {
            assert!(x.abs() < 1e-10);
        }
    }

    #[test]
    fn projection_reads_linear_perturbation() {
        let m = p(1.25);
        let g = GridSpec::default();
        let basis = HermiteBasis::new(&m, g, 12).unwrap();
        let k = basis.scale();
        let d = GridDensity::from_fn(g, |s| {
            gaussian_pdf(s, m.sigma) * (1.0 + 0.01 * hermite_h(2, k * s))
        })
        .unwrap();
        let c = basis.project(&d).unwrap();
        assert!((c.coeffs[1] - 0.01).abs() < 2e-4, "{}", c.coeffs[1]);
    }

    #[test]
    fn projection_round_trip() {
        let m = p(1.4);
        let g = GridSpec::default();
        let basis = HermiteBasis::new(&m, g, 10).unwrap();
        let c = HermiteCoeffs {
            params: m,
            scale: basis.scale(),
            coeffs: vec![1.0, 0.02, -0.01, 0.005, 0.0, 0.001, -0.002, 0.0, 0.0003, 0.0001],
        };
        let vals = c.reconstruct(&g);
        let back = basis.project_values(&vals).unwrap();
        for (x, y) in back.coeffs.iter().zip(&c.coeffs) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn nominal_scale_basis_is_ill_conditioned_at_large_size() {
        let m = p(1.25);
        let r = HermiteBasis::with_scale(&m, GridSpec::default(), 12, m.gamma_scale);
        assert!(matches!(r, Err(RgError::IllConditioned { .. })));
    }

    #[test]
    fn json_round_trip() {
        let g = GridSpec::new(6.0, 128).unwrap();
        let d = gaussian_density(0.3, g).unwrap();
        let back = GridDensity::from_json(&d.to_json()).unwrap();
        assert!(d.l1_distance(&back).unwrap() < 1e-14);
        assert!(d.to_csv().starts_with("s,p\n"));
    }

    #[test]
    fn peak_location_of_bimodal_density() {
        let g = GridSpec::new(6.0, 600).unwrap();
        let d = GridDensity::from_fn(g, |s| {
            (-(s - 2.013) * (s - 2.013) / 0.1).exp() + (-(s + 2.013) * (s + 2.013) / 0.1).exp()
        })
        .unwrap();
        assert!((d.peak_location() - 2.013).abs() < 1e-4);
    }
}
