//! One-parameter families of single-spin densities, the nested-bracket search
//! for the critical point, and the observables tau(t), M(t) with their
//! power-law exponents.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::density::{gaussian_density, hermite_g, CsvFloat, GridDensity, GridSpec, ModelParams};
use crate::error::{Result, RgError};
use crate::rgflow::{
    flow_to, framed_step, framed_step_log, gaussian_variance_map, rg_step, Classification,
    FlowOptions, Frame,
};

/// Bracket refinement stops at this width relative to the initial range.
pub const RELATIVE_WIDTH_FLOOR: f64 = 1e-13;
/// L1 radius defining "near the fixed point" for drift-onset counts.
pub const DRIFT_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Gaussian,
    NonGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilyShape {
    /// p_t = C base e^(b2(t) G2 + b4 G4), b2(t) = slope t + offset.
    Exponential { b2_slope: f64, b2_offset: f64, b4: f64 },
    /// Gaussian of variance sigma + (t - t_star); the separatrix is t = t_star.
    GaussianLine { t_star: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityFamily {
    pub params: ModelParams,
    /// The fixed point the family passes near and flows are measured against.
    pub base: GridDensity,
    pub base_kind: BaseKind,
    pub shape: FamilyShape,
    pub t_range: (f64, f64),
}

impl DensityFamily {
    pub fn new(
        params: ModelParams,
        base: GridDensity,
        base_kind: BaseKind,
        shape: FamilyShape,
        t_range: (f64, f64),
    ) -> Result<Self> {
        let (t1, t2) = t_range;
        if !(t1 < t2) {
            return Err(RgError::InvalidInput("t_range must satisfy t1 < t2".into()));
        }
        if let FamilyShape::Exponential { b2_slope, b2_offset, b4 } = shape {
            if !(b2_slope > 0.0) {
                return Err(RgError::InvalidInput("b2 must be strictly increasing".into()));
            }
            if !(b4 <= 0.0) {
                return Err(RgError::InvalidInput("b4 must be nonpositive".into()));
            }
            let b2 = |t: f64| b2_slope * t + b2_offset;
            if !(b2(t1) < 0.0 && 0.0 < b2(t2)) {
                return Err(RgError::InvalidInput("b2 must change sign on t_range".into()));
            }
        }
        Ok(Self {
            params,
            base,
            base_kind,
            shape,
            t_range,
        })
    }

    /// Around the Gaussian fixed point: b2(t) = t, b4 = -0.01, t in [-0.25, 0.25].
    pub fn gaussian_default(params: &ModelParams, grid: GridSpec) -> Result<Self> {
        let base = crate::fixedpoint::gaussian_fixed_point(params, grid)?;
        Self::new(
            *params,
            base,
            BaseKind::Gaussian,
            FamilyShape::Exponential {
                b2_slope: 1.0,
                b2_offset: 0.0,
                b4: -0.01,
            },
            (-0.25, 0.25),
        )
    }

    /// Around a non-Gaussian fixed point `p1`: b2(t) = t, b4 = -eps^2, and a
    /// t-range of width `width` centred at 0 (eps^(3/2) when `None`).
    pub fn non_gaussian_default(params: &ModelParams, p1: GridDensity, width: Option<f64>) -> Result<Self> {
        let eps = params.epsilon;
        if !(eps > 0.0) {
            return Err(RgError::ParameterOutOfRange {
                name: "epsilon",
                value: eps,
                expected: "epsilon > 0",
            });
        }
        let w = width.unwrap_or(eps.powf(1.5));
        Self::new(
            *params,
            p1,
            BaseKind::NonGaussian,
            FamilyShape::Exponential {
                b2_slope: 1.0,
                b2_offset: 0.0,
                b4: -eps * eps,
            },
            (-0.5 * w, 0.5 * w),
        )
    }

    /// Gaussians of variance sigma + (t - t_star) on [t_star - h, t_star + h].
    pub fn gaussian_line(params: &ModelParams, grid: GridSpec, t_star: f64, half_range: f64) -> Result<Self> {
        let base = crate::fixedpoint::gaussian_fixed_point(params, grid)?;
        Self::new(
            *params,
            base,
            BaseKind::Gaussian,
            FamilyShape::GaussianLine { t_star },
            (t_star - half_range, t_star + half_range),
        )
    }

    pub fn grid(&self) -> GridSpec {
        self.base.grid()
    }

    pub fn range_width(&self) -> f64 {
        self.t_range.1 - self.t_range.0
    }

    /// The same family with a different quartic coefficient. The quadratic
    /// part of G4 shifts t_c roughly in proportion to b4, so a narrow range
    /// may need a smaller |b4| to contain it.
    pub fn with_b4(self, b4: f64) -> Result<Self> {
        match self.shape {
            FamilyShape::Exponential { b2_slope, b2_offset, .. } => Self::new(
                self.params,
                self.base,
                self.base_kind,
                FamilyShape::Exponential { b2_slope, b2_offset, b4 },
                self.t_range,
            ),
            FamilyShape::GaussianLine { .. } => {
                Err(RgError::InvalidInput("the Gaussian line has no quartic term".into()))
            }
        }
    }
}

/// The member of `fam` at parameter t.
pub fn family_density(fam: &DensityFamily, t: f64) -> Result<GridDensity> {
    let (t1, t2) = fam.t_range;
    let slack = 1e-12 * (t2 - t1);
    if !(t >= t1 - slack && t <= t2 + slack) {
        return Err(RgError::ParameterOutOfRange {
            name: "t",
            value: t,
            expected: "t within the family range",
        });
    }
    let grid = fam.grid();
    let p = match fam.shape {
        FamilyShape::Exponential { b2_slope, b2_offset, b4 } => {
            let b2 = b2_slope * t + b2_offset;
            let params = fam.params;
            let c = grid.center();
            let base = fam.base.half_values();
            let half: Vec<f64> = (0..=c)
                .map(|j| {
                    let s = grid.node(c + j);
                    base[j] * (b2 * hermite_g(1, s, &params) + b4 * hermite_g(2, s, &params)).exp()
                })
                .collect();
            if half.iter().any(|v| !v.is_finite()) {
                return Err(RgError::TailContainment("family member is not normalizable".into()));
            }
            GridDensity::from_half(grid, &half)?
        }
        FamilyShape::GaussianLine { t_star } => {
            let v = fam.params.sigma + (t - t_star);
            gaussian_density(v, grid)?
        }
    };
    p.check_containment()
        .map_err(|_| RgError::TailContainment("family member is not normalizable on the grid".into()))?;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub t: f64,
    pub classification: Classification,
    pub steps: usize,
    pub min_l1: f64,
    /// Steps spent within [`DRIFT_RADIUS`] of the fixed point.
    pub steps_near_fixed_point: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearchResult {
    pub brackets: Vec<(f64, f64)>,
    pub t_c: f64,
    pub fixed_point_used: BaseKind,
    pub m_used: usize,
    pub terminal_l1: f64,
    /// Every flow evaluated, endpoints first.
    pub probes: Vec<Probe>,
    /// Classification of the lower endpoint t1.
    pub lower_side: Classification,
}

impl CriticalSearchResult {
    /// Whether parameters above t_c collapse (the high-temperature side).
    pub fn high_t_above(&self) -> bool {
        self.lower_side == Classification::EscapedLowT
    }

    fn probe_at(&self, t: f64) -> Option<&Probe> {
        self.probes.iter().find(|p| p.t == t)
    }

    /// Points (-log2(width / range), onset) where onset is the smaller of
    /// the two bracket endpoints' counts of steps near the fixed point.
    pub fn drift_onsets(&self) -> Vec<(f64, f64)> {
        let (a, b) = self.brackets[0];
        let range = b - a;
        self.brackets
            .iter()
            .filter_map(|&(lo, hi)| {
                let x = self.probe_at(lo)?.steps_near_fixed_point;
                let y = self.probe_at(hi)?.steps_near_fixed_point;
                Some((-((hi - lo) / range).log2(), x.min(y) as f64))
            })
            .collect()
    }
}

fn probe(fam: &DensityFamily, t: f64, m_max: usize) -> Result<Probe> {
    let p = family_density(fam, t)?;
    let opts = FlowOptions {
        m_max,
        stop_on_convergence: false,
    };
    let trace = flow_to(&p, &fam.base, &fam.params, opts)?;
    Ok(Probe {
        t,
        classification: trace.classification,
        steps: trace.steps(),
        min_l1: trace.min_l1(),
        steps_near_fixed_point: trace.steps_within(DRIFT_RADIUS),
    })
}

/// Bisection on t between flows that collapse and flows that escape.
pub fn critical_search(fam: &DensityFamily, m_max: usize, tol_t: f64) -> Result<CriticalSearchResult> {
    let (t1, t2) = fam.t_range;
    let range = t2 - t1;
    if !(tol_t >= 1e-14 * range) {
        return Err(RgError::ParameterOutOfRange {
            name: "tol_t",
            value: tol_t,
            expected: "tol_t >= 1e-14 |t2 - t1|",
        });
    }
    let lo_probe = probe(fam, t1, m_max)?;
    let hi_probe = probe(fam, t2, m_max)?;
    for p in [&lo_probe, &hi_probe] {
        if p.classification == Classification::Undecided {
            return Err(RgError::UndecidedProbe { t: p.t });
        }
    }
    if lo_probe.classification == hi_probe.classification {
        return Err(RgError::SameClassificationAtEndpoints(
            lo_probe.classification.label().into(),
        ));
    }
    let lower_side = lo_probe.classification;
    let mut probes = vec![lo_probe, hi_probe];
    let (mut lo, mut hi) = (t1, t2);
    let mut brackets = vec![(lo, hi)];
    let floor = RELATIVE_WIDTH_FLOOR * range;
    while hi - lo > tol_t && hi - lo > floor {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p = probe(fam, mid, m_max)?;
        if p.classification == Classification::Undecided {
            return Err(RgError::UndecidedProbe { t: mid });
        }
        if p.classification == lower_side {
            lo = mid;
        } else {
            hi = mid;
        }
        probes.push(p);
        brackets.push((lo, hi));
    }
    let last = probes.last().expect("endpoint probes exist");
    Ok(CriticalSearchResult {
        t_c: 0.5 * (lo + hi),
        fixed_point_used: fam.base_kind,
        m_used: probes.iter().map(|p| p.steps).max().unwrap_or(0),
        terminal_l1: last.min_l1,
        brackets,
        probes,
        lower_side,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
}

/// Ordinary least squares y = intercept + slope x.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 3 {
        return Err(RgError::Degenerate("at least three points are needed".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-24 * (1.0 + mx * mx) * n) {
        return Err(RgError::Degenerate("x values do not vary".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let stderr = if points.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        stderr,
        r_squared,
    })
}

/// Slope and standard error of log2 y against log2 x.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 4 {
        return Err(RgError::Degenerate("at least four points are needed".into()));
    }
    if points.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(RgError::InvalidInput("log-log fit needs positive data".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|p| (p.0.log2(), p.1.log2())).collect();
    let f = linear_fit(&logs)?;
    Ok((f.slope, f.stderr))
}

/// Geometric offsets 2^(lo_exp..hi_exp) * range, `count` points.
pub fn geometric_offsets(range: f64, lo_exp: f64, hi_exp: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            let e = lo_exp + (hi_exp - lo_exp) * i as f64 / (count - 1).max(1) as f64;
            range * 2f64.powf(e)
        })
        .collect()
}

/// Tracking constants for deep flows.
pub mod tracking {
    /// Standard deviation (in frame units) that zoomed frames aim for, as a
    /// fraction of the grid half-width.
    pub const TARGET_STD_FRACTION: f64 = 0.125;
    /// Switch to the exact Gaussian recursion once the per-step variance is this small.
    pub const CLOSURE_VARIANCE: f64 = 1e-4;
    /// Largest per-step relative change of the second-moment magnetization at closure.
    pub const MOMENT_STABILITY: f64 = 1e-4;
    /// Depth in nats below the maximum at which a value counts as outside the support.
    pub const LOG_DEPTH: f64 = 80.0;
    /// Smallest fraction of the grid the output support must span.
    pub const MIN_FILL: f64 = 0.4;
    /// Fewest cells between the maximum and either end of the support.
    pub const MIN_TAIL_CELLS: usize = 8;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusceptibilityPoint {
    pub t: f64,
    pub tau: f64,
    /// RG steps taken on the grid before the Gaussian closure.
    pub steps: usize,
    /// Relative change of the CLT variance over the last two grid steps.
    pub drift: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationPoint {
    pub t: f64,
    /// From the location of the positive peak of the mean-spin density.
    pub m_peak: f64,
    /// From the square root of the second moment of the mean spin.
    pub m_second_moment: f64,
    /// CLT variance of one peak.
    pub tau: f64,
    pub steps: usize,
    pub flagged: bool,
}

/// Mean and variance (block-spin units) of values stored in `frame`.
fn frame_moments(grid: &GridSpec, vals: &[f64], frame: Frame) -> (f64, f64) {
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for (i, v) in vals.iter().enumerate() {
        let w = grid.weight(i) * v;
        m0 += w;
        m1 += w * grid.node(i);
    }
    let mean_x = m1 / m0;
    let mut m2 = 0.0;
    for (i, v) in vals.iter().enumerate() {
        let d = grid.node(i) - mean_x;
        m2 += grid.weight(i) * v * d * d;
    }
    let var_x = m2 / m0;
    (frame.to_global(mean_x), var_x / (frame.scale * frame.scale))
}

/// Parabola-refined location of the largest value, in frame units. On
/// log-values the refinement is exact for a Gaussian peak.
fn peak_in_frame(grid: &GridSpec, vals: &[f64]) -> f64 {
    let (k, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    let h = grid.spacing();
    if k == 0 || k + 1 >= vals.len() {
        return grid.node(k);
    }
    let (l, m, r) = (vals[k - 1], vals[k], vals[k + 1]);
    let den = l - 2.0 * m + r;
    let off = if den != 0.0 { 0.5 * (l - r) / den } else { 0.0 };
    grid.node(k) + off * h
}

/// Product of 1/(1 - v_k) over the remaining Gaussian recursion from v.
fn closure_factor(mut v: f64, params: &ModelParams) -> Result<f64> {
    let mut f = 1.0;
    while v > 1e-18 {
        f /= 1.0 - v;
        v = gaussian_variance_map(v, params)?;
    }
    Ok(f)
}

/// High-temperature side: flow until the variance collapses, then follow
/// the shrinking density in zoomed frames until it is Gaussian to working
/// precision, and finish with the exact Gaussian recursion.
fn track_collapse(fam: &DensityFamily, t: f64, n_max: usize) -> Result<SusceptibilityPoint> {
    use tracking::*;
    let params = fam.params;
    let grid = fam.grid();
    let sigma = fam.base.variance();
    let target_std = TARGET_STD_FRACTION * grid.half_width;
    let mut p = family_density(fam, t)?;
    let mut n = 0;
    let flagged = |n, tau, drift| SusceptibilityPoint {
        t,
        tau,
        steps: n,
        drift,
        flagged: true,
    };
    while p.variance() >= 0.25 * sigma {
        if n >= n_max || p.variance() > 4.0 * sigma {
            return Ok(flagged(n, f64::NAN, f64::NAN));
        }
        p = match rg_step(&p, &params) {
            Ok(q) => q,
            Err(RgError::NormalizerDivergence) => return Ok(flagged(n, f64::NAN, f64::NAN)),
            Err(e) => return Err(e),
        };
        n += 1;
    }
    let mut frame = Frame::IDENTITY;
    let mut vals = p.into_values();
    let clt = |n: usize, v: f64| v * 2f64.powf(n as f64 * (params.a - 1.0));
    let mut history = Vec::new();
    loop {
        let (_, v) = frame_moments(&grid, &vals, frame);
        history.push(clt(n, v));
        if v < CLOSURE_VARIANCE {
            let k = history.len();
            let drift = if k >= 3 {
                (history[k - 1] / history[k - 3] - 1.0).abs()
            } else {
                f64::NAN
            };
            let tau = clt(n, v) * closure_factor(v, &params)?;
            return Ok(SusceptibilityPoint {
                t,
                tau,
                steps: n,
                drift,
                flagged: !(drift < 0.01),
            });
        }
        if n >= n_max {
            return Ok(flagged(n, f64::NAN, f64::NAN));
        }
        let v_next = gaussian_variance_map(v, &params)?;
        let to = Frame::symmetric(target_std / v_next.sqrt());
        vals = framed_step(&vals, &grid, frame, to, &params)?;
        frame = to;
        n += 1;
    }
}

fn log_max(lv: &[f64]) -> f64 {
    lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Mean and variance (block-spin units) of log-values stored in `frame`.
fn log_frame_moments(grid: &GridSpec, lv: &[f64], frame: Frame) -> (f64, f64) {
    let lmax = log_max(lv);
    let vals: Vec<f64> = lv.iter().map(|l| (l - lmax).exp()).collect();
    frame_moments(grid, &vals, frame)
}

/// Log-ratio of stored log-values to the Gaussian of variance `sigma`.
fn gaussian_ratio(grid: &GridSpec, lv: &[f64], frame: Frame, sigma: f64) -> Vec<f64> {
    lv.iter()
        .enumerate()
        .map(|(i, l)| {
            let s = frame.to_global(grid.node(i));
            l + s * s / (2.0 * sigma)
        })
        .collect()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc })
        .0
}

fn ratio_peak(grid: &GridSpec, lv: &[f64], frame: Frame, sigma: f64) -> usize {
    argmax(&gaussian_ratio(grid, lv, frame, sigma))
}

/// First and last index where the log-ratio to the Gaussian of variance
/// `sigma` lies within [`tracking::LOG_DEPTH`] of its maximum. Each later step
/// at most doubles this ratio (up to slowly varying factors), so anything
/// outside never matters.
fn log_support(grid: &GridSpec, lv: &[f64], frame: Frame, sigma: f64) -> Option<(usize, usize)> {
    let ratio = gaussian_ratio(grid, lv, frame, sigma);
    let m = log_max(&ratio);
    if !m.is_finite() {
        return None;
    }
    let floor = m - tracking::LOG_DEPTH;
    let l = ratio.iter().position(|&v| v >= floor)?;
    let r = ratio.iter().rposition(|&v| v >= floor)?;
    Some((l, r))
}

/// Frame whose grid spans exactly [lo, hi] in block-spin units.
fn window_frame(grid: &GridSpec, lo: f64, hi: f64) -> Frame {
    Frame {
        center: 0.5 * (lo + hi),
        scale: grid.half_width / (0.5 * (hi - lo)),
    }
}

/// Refinement passes allowed when choosing the output frame of one step.
const FRAME_PASSES: usize = 6;

/// One RG step on the low-temperature side, carried on log-values, with an
/// output frame fitted to the support of the output: symmetric while the
/// density is unimodal, covering only s > 0 once the two peaks separate. The
/// first pass uses the window that provably contains the output (sums of two
/// input points); later passes zoom to where the output actually lives.
/// Returns None when the output cannot be both contained and resolved.
fn escape_step(
    grid: &GridSpec,
    lv: &[f64],
    from: Frame,
    split: bool,
    params: &ModelParams,
) -> Result<Option<(Vec<f64>, Frame, bool)>> {
    use tracking::*;
    let lift = 2f64.powf(params.a / 2.0);
    let h = grid.spacing();
    let Some((il, ir)) = log_support(grid, lv, from, params.sigma) else {
        return Ok(None);
    };
    let symmetric = |lo: f64, hi: f64| {
        let w = lo.abs().max(hi.abs());
        (-w, w)
    };
    let mut lo = 2.0 * from.to_global(grid.node(il) - h) / lift;
    let mut hi = 2.0 * from.to_global(grid.node(ir) + h) / lift;
    if !split {
        (lo, hi) = symmetric(lo, hi);
    }
    let mut split_out = split;
    for _ in 0..FRAME_PASSES {
        let to = window_frame(grid, lo, hi);
        let mut out = framed_step_log(lv, grid, from, to, params)?;
        if !split_out {
            // Once s = 0 has dropped out of the support, the two peaks never
            // interact again and only the positive one is followed.
            let ratio = gaussian_ratio(grid, &out, to, params.sigma);
            if ratio[grid.center()] < log_max(&ratio) - LOG_DEPTH {
                split_out = true;
            }
        }
        if split_out {
            for (i, v) in out.iter_mut().enumerate() {
                if to.to_global(grid.node(i)) <= 0.0 {
                    *v = f64::NEG_INFINITY;
                }
            }
        }
        let Some((jl, jr)) = log_support(grid, &out, to, params.sigma) else {
            return Ok(None);
        };
        // A ratio maximum at the end of the grid means the window cut off
        // the region that dominates later steps.
        let r_peak = ratio_peak(grid, &out, to, params.sigma);
        if r_peak < MIN_TAIL_CELLS || r_peak + MIN_TAIL_CELLS >= grid.len() {
            return Ok(None);
        }
        if (jr - jl) as f64 >= MIN_FILL * grid.nodes as f64 {
            return Ok(Some((out, to, split_out)));
        }
        lo = to.to_global(grid.node(jl) - h);
        hi = to.to_global(grid.node(jr) + h);
        if !split_out {
            (lo, hi) = symmetric(lo, hi);
        }
    }
    Ok(None)
}

/// Low-temperature side: flow in symmetric frames until the two peaks
/// separate, follow the positive peak in a frame fitted to it, and finish
/// with the exact Gaussian recursion for its mean and variance.
fn track_escape(fam: &DensityFamily, t: f64, n_max: usize) -> Result<MagnetizationPoint> {
    use tracking::*;
    let params = fam.params;
    let grid = fam.grid();
    let sigma = fam.base.variance();
    let flagged = |n| MagnetizationPoint {
        t,
        m_peak: f64::NAN,
        m_second_moment: f64::NAN,
        tau: f64::NAN,
        steps: n,
        flagged: true,
    };
    let mut lv: Vec<f64> = family_density(fam, t)?.values().iter().map(|v| v.ln()).collect();
    let mut frame = Frame::IDENTITY;
    let mut split = false;
    let mut last_m2 = f64::NAN;
    let mut low_run = 0;
    let mut n = 0;
    loop {
        let (mean, var) = log_frame_moments(&grid, &lv, frame);
        let to_mean_spin = 2f64.powf(-(n as f64) * (2.0 - params.a) / 2.0);
        let m2 = if split && var < CLOSURE_VARIANCE {
            (mean * mean + var).sqrt() * to_mean_spin * closure_factor(var, &params)?
        } else {
            f64::NAN
        };
        let settled = (m2 / last_m2 - 1.0).abs() < MOMENT_STABILITY;
        last_m2 = m2;
        if split && var < CLOSURE_VARIANCE && settled {
            // Peak location and curvature of the ratio to the Gaussian fixed
            // point are invariants of the Gaussian recursion, so they give the
            // limiting M and tau directly.
            let ratio = gaussian_ratio(&grid, &lv, frame, params.sigma);
            let k = argmax(&ratio);
            if k == 0 || k + 1 >= grid.len() {
                return Ok(flagged(n));
            }
            let h = grid.spacing() / frame.scale;
            let curvature = (ratio[k - 1] - 2.0 * ratio[k] + ratio[k + 1]) / (h * h);
            if !(curvature < 0.0) {
                return Ok(flagged(n));
            }
            let peak = frame.to_global(peak_in_frame(&grid, &ratio));
            return Ok(MagnetizationPoint {
                t,
                m_peak: peak * to_mean_spin,
                m_second_moment: m2,
                tau: 2f64.powf(n as f64 * (params.a - 1.0)) / -curvature,
                steps: n,
                flagged: false,
            });
        }
        if !split {
            low_run = if var < 0.25 * sigma { low_run + 1 } else { 0 };
        }
        if n >= n_max || low_run >= 3 {
            return Ok(flagged(n));
        }
        match escape_step(&grid, &lv, frame, split, &params)? {
            Some((v, f, s)) => {
                lv = v;
                frame = f;
                split = s;
            }
            None => return Ok(flagged(n)),
        }
        n += 1;
    }
}

fn is_high_t(t_c: f64, t: f64, high_t_above: bool) -> bool {
    (t > t_c) == high_t_above
}

/// Limiting CLT variance tau(t) for parameters on the collapsing side of t_c.
pub fn susceptibility_curve(
    fam: &DensityFamily,
    t_c: f64,
    t_values: &[f64],
    n_max: usize,
    high_t_above: bool,
) -> Result<Vec<SusceptibilityPoint>> {
    if let Some(&t) = t_values.iter().find(|&&t| !is_high_t(t_c, t, high_t_above)) {
        return Err(RgError::ParameterOutOfRange {
            name: "t",
            value: t,
            expected: "t on the high-temperature side of t_c",
        });
    }
    t_values.iter().map(|&t| track_collapse(fam, t, n_max)).collect()
}

/// Limiting magnetization M(t) (two estimators) and peak variance for
/// parameters on the escaping side of t_c.
pub fn magnetization_curve(
    fam: &DensityFamily,
    t_c: f64,
    t_values: &[f64],
    n_max: usize,
    high_t_above: bool,
) -> Result<Vec<MagnetizationPoint>> {
    if let Some(&t) = t_values.iter().find(|&&t| is_high_t(t_c, t, high_t_above)) {
        return Err(RgError::ParameterOutOfRange {
            name: "t",
            value: t,
            expected: "t on the low-temperature side of t_c",
        });
    }
    t_values.iter().map(|&t| track_escape(fam, t, n_max)).collect()
}

/// Which side(s) of t_c to evaluate observables on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    High,
    Low,
    Both,
}

/// An exponent from a log-log fit and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableFit {
    pub t_c: f64,
    pub high_t_above: bool,
    pub susceptibility: Vec<SusceptibilityPoint>,
    pub magnetization: Vec<MagnetizationPoint>,
    /// tau ~ |t - t_c|^(-gamma); `None` with fewer than four unflagged points.
    pub gamma: Option<ExponentEstimate>,
    /// M ~ |t - t_c|^beta; `None` with fewer than four unflagged points.
    pub beta: Option<ExponentEstimate>,
    /// Largest relative difference between the two M estimators.
    pub estimator_agreement: Option<f64>,
}

impl ObservableFit {
    pub fn flagged(&self) -> usize {
        self.susceptibility.iter().filter(|p| p.flagged).count()
            + self.magnetization.iter().filter(|p| p.flagged).count()
    }
}

fn fit_curve(points: Vec<(f64, f64)>, sign: f64) -> Option<ExponentEstimate> {
    if points.len() < 4 {
        return None;
    }
    fit_exponent(&points).ok().map(|(slope, stderr)| ExponentEstimate {
        value: sign * slope,
        stderr,
    })
}

/// Parameters t_c +- offset on the requested side(s), high-temperature side first.
pub fn observable_t_values(t_c: f64, high_t_above: bool, offsets: &[f64], side: Side) -> Vec<f64> {
    let dir = if high_t_above { 1.0 } else { -1.0 };
    let mut ts = Vec::new();
    if side != Side::Low {
        ts.extend(offsets.iter().map(|d| t_c + dir * d));
    }
    if side != Side::High {
        ts.extend(offsets.iter().map(|d| t_c - dir * d));
    }
    ts
}

/// Susceptibility on the high-temperature members of `t_values`,
/// magnetization on the others, and log-log exponent fits of both.
pub fn fit_observables(
    fam: &DensityFamily,
    t_c: f64,
    high_t_above: bool,
    t_values: &[f64],
    n_max: usize,
) -> Result<ObservableFit> {
    if let Some(&t) = t_values.iter().find(|t| !(t.is_finite() && **t != t_c)) {
        return Err(RgError::ParameterOutOfRange {
            name: "t",
            value: t,
            expected: "finite t != t_c",
        });
    }
    let (high, low): (Vec<f64>, Vec<f64>) = t_values.iter().partition(|&&t| is_high_t(t_c, t, high_t_above));
    let susceptibility = susceptibility_curve(fam, t_c, &high, n_max, high_t_above)?;
    let magnetization = magnetization_curve(fam, t_c, &low, n_max, high_t_above)?;
    let tau_pts = susceptibility
        .iter()
        .filter(|p| !p.flagged)
        .map(|p| ((p.t - t_c).abs(), p.tau))
        .collect();
    let m_pts = magnetization
        .iter()
        .filter(|p| !p.flagged)
        .map(|p| ((p.t - t_c).abs(), p.m_peak))
        .collect();
    let estimator_agreement = magnetization
        .iter()
        .filter(|p| !p.flagged)
        .map(|p| (p.m_second_moment / p.m_peak - 1.0).abs())
        .reduce(f64::max);
    Ok(ObservableFit {
        t_c,
        high_t_above,
        gamma: fit_curve(tau_pts, -1.0),
        beta: fit_curve(m_pts, 1.0),
        susceptibility,
        magnetization,
        estimator_agreement,
    })
}

/// `t,tau` rows; flagged points carry NaN.
pub fn susceptibility_csv(points: &[SusceptibilityPoint]) -> String {
    let mut out = String::from("t,tau\n");
    for p in points {
        let tau = if p.flagged { f64::NAN } else { p.tau };
        let _ = writeln!(out, "{},{}", CsvFloat(p.t), CsvFloat(tau));
    }
    out
}

/// `t,M,tau` rows with M from the peak location; flagged points carry NaN.
pub fn magnetization_csv(points: &[MagnetizationPoint]) -> String {
    let mut out = String::from("t,M,tau\n");
    for p in points {
        let (m, tau) = if p.flagged { (f64::NAN, f64::NAN) } else { (p.m_peak, p.tau) };
        let _ = writeln!(out, "{},{},{}", CsvFloat(p.t), CsvFloat(m), CsvFloat(tau));
    }
    out
}
