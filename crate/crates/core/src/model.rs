//! Hierarchical geometry, the Hamiltonian, exact enumeration of the Gibbs
//! measure for discrete spins, and the measure-level RG step.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RgError};

/// Locations closer than this are merged into one atom.
pub const MERGE_TOLERANCE: f64 = 1e-12;
/// Largest number of configurations `enumerate_total_spin` will visit.
pub const ENUMERATION_BUDGET: f64 = 1.1e6;

/// The volume V_n = {1, ..., 2^n}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HierarchicalVolume {
    pub n: u32,
}

impl HierarchicalVolume {
    pub fn new(n: u32) -> Result<Self> {
        if n > 30 {
            return Err(RgError::ParameterOutOfRange {
                name: "n",
                value: n as f64,
                expected: "n <= 30",
            });
        }
        Ok(Self { n })
    }

    pub fn size(&self) -> usize {
        1usize << self.n
    }
}

/// Spin values indexed by site 1..=2^n (stored zero-based).
#[derive(Debug, Clone, PartialEq)]
pub struct SpinConfig {
    n: u32,
    values: Vec<f64>,
}

impl SpinConfig {
    pub fn new(n: u32, values: Vec<f64>) -> Result<Self> {
        let vol = HierarchicalVolume::new(n)?;
        if values.len() != vol.size() {
            return Err(RgError::InvalidInput(format!(
                "configuration of length {} for n = {n}",
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Block spins (s(2u-1) + s(2u)) / 2^(a/2) on V_{n-1}.
    pub fn block(&self, a: f64) -> Option<SpinConfig> {
        if self.n == 0 {
            return None;
        }
        let f = 2f64.powf(a / 2.0);
        let values = self
            .values
            .chunks(2)
            .map(|p| (p[0] + p[1]) / f)
            .collect();
        Some(SpinConfig {
            n: self.n - 1,
            values,
        })
    }
}

/// d(x, y) = 2^(j-1) with j the smallest level at which x and y share a block.
pub fn hierarchical_distance(x: usize, y: usize, n: u32) -> Result<f64> {
    let vol = HierarchicalVolume::new(n)?;
    let max = vol.size();
    for site in [x, y] {
        if site < 1 || site > max {
            return Err(RgError::SiteOutOfRange { site, max });
        }
    }
    Ok(distance_zero_based(x - 1, y - 1))
}

fn distance_zero_based(x: usize, y: usize) -> f64 {
    if x == y {
        return 0.0;
    }
    let j = usize::BITS - (x ^ y).leading_zeros();
    2f64.powi(j as i32 - 1)
}

/// -sum_{x<y} s(x) s(y) / d(x,y)^a with unit coupling.
pub fn hamiltonian(config: &SpinConfig, a: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(RgError::ParameterOutOfRange {
            name: "a",
            value: a,
            expected: "a > 0",
        });
    }
    let v = &config.values;
    let mut h = 0.0;
    for x in 0..v.len() {
        for y in x + 1..v.len() {
            h -= v[x] * v[y] / distance_zero_based(x, y).powf(a);
        }
    }
    Ok(h)
}

/// A finitely supported symmetric probability measure on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
}

impl AtomicMeasure {
    /// Sorts, merges coincident locations, normalizes positive weights and
    /// checks mirror symmetry.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(RgError::InvalidInput("measure has no atoms".into()));
        }
        if atoms
            .iter()
            .any(|(s, w)| !s.is_finite() || !w.is_finite() || *w <= 0.0)
        {
            return Err(RgError::InvalidInput(
                "atoms need finite locations and positive weights".into(),
            ));
        }
        let items: Vec<(f64, f64)> = atoms.into_iter().map(|(s, w)| (s, w.ln())).collect();
        AtomicMeasure {
            atoms: merge_atoms(items.clone(), false),
        }
        .check_symmetric()?;
        Ok(AtomicMeasure {
            atoms: merge_atoms(items, true),
        })
    }

    /// Fair +-1 coin.
    pub fn coin() -> Self {
        AtomicMeasure {
            atoms: vec![(-1.0, 0.5), (1.0, 0.5)],
        }
    }

    pub fn dirac_zero() -> Self {
        AtomicMeasure {
            atoms: vec![(0.0, 1.0)],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.atoms.len();
        (0..n).all(|i| {
            let (s, w) = self.atoms[i];
            let (t, u) = self.atoms[n - 1 - i];
            (s + t).abs() <= tol && (w - u).abs() <= tol
        })
    }

    fn check_symmetric(&self) -> Result<()> {
        if self.is_symmetric(1e-9) {
            Ok(())
        } else {
            Err(RgError::InvalidInput("measure is not symmetric".into()))
        }
    }

    /// Largest weight difference over atoms matched by location; unmatched
    /// atoms count with their full weight.
    pub fn max_atom_discrepancy(&self, other: &AtomicMeasure) -> f64 {
        matched_differences(self, other)
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Total-variation distance on atoms matched by location.
    pub fn total_variation(&self, other: &AtomicMeasure) -> f64 {
        0.5 * matched_differences(self, other).into_iter().sum::<f64>()
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms.iter().map(|(s, w)| w * s * s).sum()
    }
}

fn matched_differences(p: &AtomicMeasure, q: &AtomicMeasure) -> Vec<f64> {
    let (a, b) = (&p.atoms, &q.atoms);
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    let tol = 1e-9;
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i].0 < b[j].0 - tol) {
            out.push(a[i].1);
            i += 1;
        } else if i == a.len() || b[j].0 < a[i].0 - tol {
            out.push(b[j].1);
            j += 1;
        } else {
            out.push((a[i].1 - b[j].1).abs());
            i += 1;
            j += 1;
        }
    }
    out
}

/// Sorts (location, log-weight) pairs, merges locations within the merge
/// tolerance, and normalizes by max-subtraction. With `mirror`, mirror-image
/// supports are made exactly symmetric.
fn merge_atoms(mut items: Vec<(f64, f64)>, mirror: bool) -> Vec<(f64, f64)> {
    items.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for (s, lw) in items {
        match groups.last_mut() {
            Some((loc, lws)) if (s - *loc).abs() <= MERGE_TOLERANCE => lws.push(lw),
            _ => groups.push((s, vec![lw])),
        }
    }
    let lmax = groups
        .iter()
        .flat_map(|(_, l)| l.iter().cloned())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut atoms: Vec<(f64, f64)> = groups
        .into_iter()
        .map(|(s, l)| (s, l.iter().map(|x| (x - lmax).exp()).sum::<f64>()))
        .collect();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    atoms.iter_mut().for_each(|a| a.1 /= total);
    let n = atoms.len();
    let mirrored = (0..n).all(|i| (atoms[i].0 + atoms[n - 1 - i].0).abs() <= 1e-9);
    if mirror && mirrored {
        for i in 0..n / 2 {
            let s = 0.5 * (atoms[n - 1 - i].0 - atoms[i].0);
            let w = 0.5 * (atoms[i].1 + atoms[n - 1 - i].1);
            atoms[i] = (-s, w);
            atoms[n - 1 - i] = (s, w);
        }
        if n % 2 == 1 {
            atoms[n / 2].0 = 0.0;
        }
    }
    atoms
}

/// One measure-level RG step: pairs (s, t) weighted by e^(beta s t), mapped to
/// (s + t) / 2^(a/2), renormalized.
pub fn rg_step_atomic(nu: &AtomicMeasure, beta: f64, a: f64) -> Result<AtomicMeasure> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(RgError::ParameterOutOfRange {
            name: "beta",
            value: beta,
            expected: "beta >= 0",
        });
    }
    let f = 2f64.powf(a / 2.0);
    let mut items = Vec::with_capacity(nu.len() * nu.len());
    for &(s, ws) in &nu.atoms {
        for &(t, wt) in &nu.atoms {
            items.push(((s + t) / f, ws.ln() + wt.ln() + beta * s * t));
        }
    }
    Ok(AtomicMeasure {
        atoms: merge_atoms(items, true),
    })
}

/// Exact law of sum_x s(x) / 2^(n a/2) under the Gibbs weight
/// prod nu(s(x)) e^(-beta H_n(s)), by visiting every configuration.
pub fn enumerate_total_spin(n: u32, nu: &AtomicMeasure, beta: f64, a: f64) -> Result<AtomicMeasure> {
    let vol = HierarchicalVolume::new(n)?;
    let sites = vol.size();
    let k = nu.len();
    let count = (k as f64).powi(sites as i32);
    if count > ENUMERATION_BUDGET {
        return Err(RgError::ConfigurationBudget {
            count,
            budget: ENUMERATION_BUDGET,
        });
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(RgError::ParameterOutOfRange {
            name: "beta",
            value: beta,
            expected: "beta >= 0",
        });
    }
    let couplings: Vec<Vec<f64>> = (0..sites)
        .map(|x| {
            (0..sites)
                .map(|y| if x < y { distance_zero_based(x, y).powf(-a) } else { 0.0 })
                .collect()
        })
        .collect();
    let log_w: Vec<f64> = nu.atoms.iter().map(|(_, w)| w.ln()).collect();
    let norm = 2f64.powf(n as f64 * a / 2.0);
    let mut digits = vec![0usize; sites];
    let mut spins = vec![0.0; sites];
    let mut items = Vec::with_capacity(count as usize);
    loop {
        let mut lw = 0.0;
        let mut total = 0.0;
        for x in 0..sites {
            spins[x] = nu.atoms[digits[x]].0;
            lw += log_w[digits[x]];
            total += spins[x];
        }
        let mut h = 0.0;
        for x in 0..sites {
            for y in x + 1..sites {
                h -= spins[x] * spins[y] * couplings[x][y];
            }
        }
        items.push((total / norm, lw - beta * h));
        let mut pos = 0;
        loop {
            if pos == sites {
                return Ok(AtomicMeasure {
                    atoms: merge_atoms(items, true),
                });
            }
            digits[pos] += 1;
            if digits[pos] < k {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        assert_eq!(hierarchical_distance(5, 5, 3).unwrap(), 0.0);
        assert_eq!(hierarchical_distance(1, 2, 3).unwrap(), 1.0);
        assert_eq!(hierarchical_distance(1, 5, 3).unwrap(), 4.0);
        assert_eq!(hierarchical_distance(3, 4, 3).unwrap(), 1.0);
        assert_eq!(hierarchical_distance(2, 3, 3).unwrap(), 2.0);
        assert!(matches!(
            hierarchical_distance(0, 1, 3),
            Err(RgError::SiteOutOfRange { .. })
        ));
        assert!(hierarchical_distance(9, 1, 3).is_err());
    }

    #[test]
    fn distance_is_ultrametric() {
        for n in 0..=5u32 {
            let size = 1usize << n;
            for x in 1..=size {
                for y in 1..=size {
                    let dxy = hierarchical_distance(x, y, n).unwrap();
                    for z in 1..=size {
                        let dxz = hierarchical_distance(x, z, n).unwrap();
                        let dyz = hierarchical_distance(y, z, n).unwrap();
                        assert!(dxz <= dxy.max(dyz));
                    }
                }
            }
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let c = SpinConfig::new(1, vec![0.7, -1.3]).unwrap();
        assert!((hamiltonian(&c, 1.5).unwrap() - 0.7 * 1.3).abs() < 1e-15);
        let c = SpinConfig::new(2, vec![1.0; 4]).unwrap();
        assert_eq!(hamiltonian(&c, 1.0).unwrap(), -4.0);
        let c = SpinConfig::new(3, vec![0.0; 8]).unwrap();
        assert_eq!(hamiltonian(&c, 1.3).unwrap(), 0.0);
        assert!(SpinConfig::new(2, vec![1.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn hamiltonian_decomposes_over_blocks(
            n in 1u32..=5,
            a in 1.05f64..1.95,
            seed in proptest::collection::vec(-2.0f64..2.0, 32),
        ) {
            let cfg = SpinConfig::new(n, seed[..1 << n].to_vec()).unwrap();
            let v = cfg.values();
            let pairs: f64 = v.chunks(2).map(|p| p[0] * p[1]).sum();
            let coarse = cfg.block(a).unwrap();
            let lhs = hamiltonian(&cfg, a).unwrap();
            let rhs = -pairs + hamiltonian(&coarse, a).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn atomic_step_preserves_symmetry(
            locs in proptest::collection::vec(0.1f64..3.0, 1..4),
            ws in proptest::collection::vec(0.1f64..1.0, 4),
            beta in 0.0f64..1.5,
            a in 1.05f64..1.95,
        ) {
            let mut atoms = Vec::new();
            for (s, w) in locs.iter().zip(&ws) {
                atoms.push((*s, *w));
                atoms.push((-*s, *w));
            }
            let nu = AtomicMeasure::new(atoms).unwrap();
            let out = rg_step_atomic(&nu, beta, a).unwrap();
            prop_assert!(out.is_symmetric(1e-12));
            let mass: f64 = out.atoms().iter().map(|x| x.1).sum();
            prop_assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_from_coin() {
        let a = 1.3;
        let beta = 0.8;
        let out = rg_step_atomic(&AtomicMeasure::coin(), beta, a).unwrap();
        let enumerated = enumerate_total_spin(1, &AtomicMeasure::coin(), beta, a).unwrap();
        let loc = 2f64.powf(1.0 - a / 2.0);
        let z = 2.0 * beta.exp() + 2.0 * (-beta).exp();
        let expected = AtomicMeasure::new(vec![
            (-loc, beta.exp() / z),
            (0.0, 2.0 * (-beta).exp() / z),
            (loc, beta.exp() / z),
        ])
        .unwrap();
        assert!(out.max_atom_discrepancy(&expected) < 1e-14);
        assert!(enumerated.max_atom_discrepancy(&expected) < 1e-14);
    }

    #[test]
    fn zero_coupling_gives_binomial() {
        let out = rg_step_atomic(&AtomicMeasure::coin(), 0.0, 1.5).unwrap();
        let w: Vec<f64> = out.atoms().iter().map(|x| x.1).collect();
        assert_eq!(w.len(), 3);
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dirac_is_invariant() {
        let out = rg_step_atomic(&AtomicMeasure::dirac_zero(), 0.9, 1.4).unwrap();
        assert_eq!(out, AtomicMeasure::dirac_zero());
    }

    #[test]
    fn enumeration_budget_enforced() {
        assert!(matches!(
            enumerate_total_spin(5, &AtomicMeasure::coin(), 1.0, 1.5),
            Err(RgError::ConfigurationBudget { .. })
        ));
    }

    #[test]
    fn asymmetric_measure_rejected() {
        assert!(AtomicMeasure::new(vec![(-1.0, 0.3), (1.0, 0.7)]).is_err());
    }

    #[test]
    fn three_atom_recursion_matches_enumeration() {
        let nu = AtomicMeasure::new(vec![(-1.5, 0.25), (0.0, 0.5), (1.5, 0.25)]).unwrap();
        let mut it = nu.clone();
        for n in 1..=2u32 {
            it = rg_step_atomic(&it, 0.4, 1.6).unwrap();
            let e = enumerate_total_spin(n, &nu, 0.4, 1.6).unwrap();
            assert!(it.max_atom_discrepancy(&e) < 1e-10, "n={n}");
        }
    }
}
