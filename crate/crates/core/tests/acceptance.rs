//! One PASS/FAIL line per acceptance criterion. Runs sequentially so that the
//! runtime budgets are measured without contention.

use std::f64::consts::SQRT_2;
use std::time::{Duration, Instant};

use dyson_rg::critparam::{
    critical_search, fit_observables, geometric_offsets, observable_t_values, linear_fit, magnetization_csv, magnetization_curve,
    susceptibility_csv, susceptibility_curve, CriticalSearchResult, DensityFamily, Side,
};
use dyson_rg::density::{gaussian_density, GridDensity, GridSpec, ModelParams};
use dyson_rg::fixedpoint::{
    epsilon_seed, fit_tail_bound, fixed_point_residual, gaussian_fixed_point, non_gaussian_fixed_point,
};
use dyson_rg::model::{enumerate_total_spin, rg_step_atomic, AtomicMeasure};
use dyson_rg::rgflow::{gaussian_variance_map, rg_step};
use dyson_rg::spectral::{build_linearization, cosine_similarity, eigen_spectrum, exponents_from_spectrum, hermite_mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, name: &str, pass: bool, elapsed: Duration, detail: String) {
        if !pass {
            self.failures += 1;
        }
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name} ({:.1}s): {detail}", elapsed.as_secs_f64());
    }

    fn note(&self, detail: String) {
        println!("       {detail}");
    }
}

fn default_grid() -> GridSpec {
    GridSpec::new(10.0, 2048).unwrap()
}

fn gaussian_fixed_point_residual(r: &mut Report) {
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    for a in [1.1, 1.25, 1.5, 1.75] {
        let t = Instant::now();
        let m = ModelParams::new(a).unwrap();
        let p = gaussian_fixed_point(&m, default_grid()).unwrap();
        let res = fixed_point_residual(&p, &m).unwrap();
        slowest = slowest.max(t.elapsed());
        worst = worst.max(res);
        r.note(format!("a={a}: residual {res:.2e}"));
    }
    let pass = worst < 1e-7 && slowest < Duration::from_secs(1);
    r.line(
        "1",
        "Gaussian fixed point",
        pass,
        slowest,
        format!("max L1 residual {worst:.2e} (< 1e-7), slowest check {:.3}s (< 1s)", slowest.as_secs_f64()),
    );
}

fn gaussian_line_oracle(r: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a = rng.gen_range(1.05..1.95);
        let v = rng.gen_range(0.05..0.6);
        let m = ModelParams::new(a).unwrap();
        let g = default_grid();
        let out = rg_step(&gaussian_density(v, g).unwrap(), &m).unwrap();
        let expect = gaussian_density(gaussian_variance_map(v, &m).unwrap(), g).unwrap();
        worst = worst.max(out.l1_distance(&expect).unwrap());
    }
    let el = t.elapsed();
    let pass = worst < 1e-6 && el < Duration::from_secs(30);
    r.line("2", "Gaussian-line oracle", pass, el, format!("max L1 error over 50 cases {worst:.2e} (< 1e-6)"));
}

fn l0_spectrum(r: &mut Report) {
    let t = Instant::now();
    let mut eig_err = 0.0f64;
    let mut cos_nominal = 1.0f64;
    let mut cos_eigen = 1.0f64;
    for a in [1.1, 1.25, 1.5, 1.75] {
        let m = ModelParams::new(a).unwrap();
        let p0 = gaussian_fixed_point(&m, default_grid()).unwrap();
        let s = eigen_spectrum(&build_linearization(&p0, &m).unwrap(), 5).unwrap();
        let mut nominal = Vec::new();
        for j in 0..5 {
            eig_err = eig_err.max((s.eigenvalues[j] / m.gaussian_eigenvalue(j) - 1.0).abs());
            let cp = cosine_similarity(&s.grid, &s.eigenfunctions[j], &hermite_mode(&p0, j, m.gamma_scale)).abs();
            let ce = cosine_similarity(&s.grid, &s.eigenfunctions[j], &hermite_mode(&p0, j, m.eigen_scale)).abs();
            cos_nominal = cos_nominal.min(cp);
            cos_eigen = cos_eigen.min(ce);
            nominal.push(format!("{cp:.4}"));
        }
        r.note(format!("a={a}: eigenvalues {:.5?}, cosine with G_2j p*0 [{}]", s.eigenvalues, nominal.join(", ")));
    }
    let el = t.elapsed();
    r.note(format!(
        "eigenvalues: max relative error {eig_err:.2e} (< 1e-3) -> {}",
        if eig_err < 1e-3 { "ok" } else { "off" }
    ));
    r.note(format!(
        "eigenfunctions vs H_2j(gamma s) p*0 with gamma = sqrt(1 - 2^(a-2)): min cosine {cos_nominal:.4} (> 0.999) -> {}",
        if cos_nominal > 0.999 { "ok" } else { "off" }
    ));
    r.note(format!(
        "eigenfunctions vs H_2j(gamma' s) p*0 with the exact eigen-scale gamma': min cosine {cos_eigen:.6}"
    ));
    let pass = eig_err < 1e-3 && cos_nominal > 0.999 && el < Duration::from_secs(120);
    r.line(
        "3",
        "L0 spectrum",
        pass,
        el,
        format!("eigenvalue error {eig_err:.1e}, eigenfunction cosine {cos_nominal:.4}"),
    );
}

fn enumeration_oracle(r: &mut Report) {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for a in [1.25, 1.5, 1.75] {
        for beta in [0.0, 0.3, 1.0] {
            let mut nu = AtomicMeasure::coin();
            for n in 1..=4 {
                nu = rg_step_atomic(&nu, beta, a).unwrap();
                let direct = enumerate_total_spin(n, &AtomicMeasure::coin(), beta, a).unwrap();
                worst = worst.max(nu.max_atom_discrepancy(&direct));
            }
        }
    }
    let el = t.elapsed();
    let pass = worst < 1e-10 && el < Duration::from_secs(60);
    r.line("4", "Enumeration oracle", pass, el, format!("max atom-wise error {worst:.2e} (< 1e-10)"));
}

struct NonGaussian {
    density: GridDensity,
    lambda1: f64,
}

fn non_gaussian_fixed_point_check(r: &mut Report) -> Option<NonGaussian> {
    let t = Instant::now();
    let mut pass = true;
    let mut ratios = Vec::new();
    let mut kept = None;
    for eps in [0.02, 0.05] {
        let m = ModelParams::new(1.5 + eps).unwrap();
        let fp = match non_gaussian_fixed_point(&m, default_grid(), 12) {
            Ok(fp) => fp,
            Err(e) => {
                r.note(format!("eps={eps}: solver failed: {e}"));
                pass = false;
                continue;
            }
        };
        let (c0_big, c0) = fit_tail_bound(&fp.density, &m).unwrap();
        let g = fp.density.grid();
        let bound_holds = (0..g.len()).all(|i| {
            let s = g.node(i);
            let p0 = (-s * s / (2.0 * m.sigma)).exp() / (2.0 * std::f64::consts::PI * m.sigma).sqrt();
            fp.density.values()[i] <= c0_big * p0 * (-c0 * eps * s.powi(4)).exp() * (1.0 + 1e-9)
        });
        let s = eigen_spectrum(&build_linearization(&fp.density, &m).unwrap(), 3).unwrap();
        let (l0, l1, l2) = (s.eigenvalues[0], s.eigenvalues[1], s.eigenvalues[2]);
        let ok = fp.residual_l1 < 1e-8
            && c0_big > 0.0
            && c0 > 0.0
            && bound_holds
            && (l0 - 2.0).abs() <= 1e-3
            && (l1 - SQRT_2).abs() <= 5.0 * eps
            && l2 < 1.0;
        pass &= ok;
        ratios.push((1.0 - l2) / eps);
        r.note(format!(
            "eps={eps}: residual {:.2e}, tail bound C0={c0_big:.3} c0={c0:.3} holds={bound_holds}, \
             lambda = [{l0:.5}, {l1:.5}, {l2:.5}], (1-lambda2)/eps = {:.4}",
            fp.residual_l1,
            (1.0 - l2) / eps
        ));
        if eps == 0.05 {
            kept = Some(NonGaussian { density: fp.density, lambda1: l1 });
        }
    }
    let spread = if ratios.len() == 2 {
        let (lo, hi) = (ratios[0].min(ratios[1]), ratios[0].max(ratios[1]));
        hi / lo - 1.0
    } else {
        f64::INFINITY
    };
    pass &= spread <= 0.3;
    let el = t.elapsed();
    pass &= el < Duration::from_secs(600);
    r.line(
        "5",
        "Non-Gaussian fixed point",
        pass,
        el,
        format!("(1-lambda2)/eps spread {:.1}% (<= 30%)", 100.0 * spread),
    );
    kept
}

fn seed_scaling(r: &mut Report) {
    let t = Instant::now();
    let res = |eps: f64| {
        let m = ModelParams::new(1.5 + eps).unwrap();
        let (seed, _) = epsilon_seed(&m, default_grid()).unwrap();
        fixed_point_residual(&seed, &m).unwrap()
    };
    let (r2, r4) = (res(0.02), res(0.04));
    let ratio = r4 / r2;
    r.line(
        "5s",
        "Seed residual is second order",
        (ratio - 4.0).abs() <= 1.0,
        t.elapsed(),
        format!("residual(0.04)/residual(0.02) = {r4:.3e}/{r2:.3e} = {ratio:.3} (4 +- 1)"),
    );
}

fn critical_search_check(r: &mut Report) -> Option<(DensityFamily, CriticalSearchResult)> {
    let t = Instant::now();
    let m = ModelParams::new(1.25).unwrap();
    let fam = DensityFamily::gaussian_default(&m, default_grid()).unwrap();
    let cs = match critical_search(&fam, 400, 1e-12 * fam.range_width()) {
        Ok(cs) => cs,
        Err(e) => {
            r.line("6", "Critical search", false, t.elapsed(), format!("search failed: {e}"));
            return None;
        }
    };
    let (lo, hi) = *cs.brackets.last().unwrap();
    let width = (hi - lo) / fam.range_width();
    let onsets: Vec<(f64, f64)> = cs.drift_onsets().into_iter().skip(4).collect();
    let fit = linear_fit(&onsets).unwrap();
    let lambda1 = m.gaussian_eigenvalue(1);
    let expect = 1.0 / lambda1.log2();
    let linear = fit.r_squared > 0.99 && (fit.slope / expect - 1.0).abs() < 0.1;
    let el = t.elapsed();
    let pass = width <= 1e-12 && cs.terminal_l1 < 1e-3 && linear && el < Duration::from_secs(300);
    r.note(format!("t_c = {:.15}, {} brackets, m_used {}", cs.t_c, cs.brackets.len(), cs.m_used));
    r.line(
        "6",
        "Critical search",
        pass,
        el,
        format!(
            "final width {width:.1e} (<= 1e-12), terminal L1 {:.1e} (< 1e-3), drift onset slope {:.3} \
             vs 1/log2(lambda1) = {expect:.3}, R^2 {:.4}",
            cs.terminal_l1, fit.slope, fit.r_squared
        ),
    );
    Some((fam, cs))
}

struct ExponentFit {
    gamma: f64,
    beta: f64,
    agreement: f64,
    flagged: usize,
}

fn fit_both_sides(fam: &DensityFamily, cs: &CriticalSearchResult, n_max: usize) -> ExponentFit {
    let offsets = geometric_offsets(fam.range_width(), -10.0, -4.0, 7);
    let ts = observable_t_values(cs.t_c, cs.high_t_above(), &offsets, Side::Both);
    let f = fit_observables(fam, cs.t_c, cs.high_t_above(), &ts, n_max).unwrap();
    ExponentFit {
        gamma: f.gamma.map_or(f64::NAN, |e| e.value),
        beta: f.beta.map_or(f64::NAN, |e| e.value),
        agreement: f.estimator_agreement.unwrap_or(f64::NAN),
        flagged: f.flagged(),
    }
}

fn classical_exponents(r: &mut Report, search: Option<&(DensityFamily, CriticalSearchResult)>) {
    let t = Instant::now();
    let Some((fam, cs)) = search else {
        r.line("7", "Classical exponents", false, t.elapsed(), "no critical point".into());
        return;
    };
    let f = fit_both_sides(fam, cs, 400);
    let el = t.elapsed();
    let pass = (f.gamma - 1.0).abs() <= 0.1
        && (f.beta - 0.5).abs() <= 0.05
        && f.agreement < 0.02
        && el < Duration::from_secs(900);
    r.line(
        "7",
        "Classical exponents",
        pass,
        el,
        format!(
            "gamma {:.4} (1 +- 0.1), beta {:.4} (0.5 +- 0.05), M estimators differ by {:.2e} (< 2%), {} flagged points",
            f.gamma, f.beta, f.agreement, f.flagged
        ),
    );
}

fn non_classical_exponents(r: &mut Report, p1: Option<&NonGaussian>) {
    let t = Instant::now();
    let Some(p1) = p1 else {
        r.line("8", "Non-classical exponents", false, t.elapsed(), "no non-Gaussian fixed point".into());
        return;
    };
    let m = ModelParams::new(1.55).unwrap();
    let eps = m.epsilon;
    let fam = DensityFamily::non_gaussian_default(&m, p1.density.clone(), None)
        .and_then(|f| f.with_b4(-0.1 * eps * eps))
        .unwrap();
    let cs = match critical_search(&fam, 400, 1e-12 * fam.range_width()) {
        Ok(cs) => cs,
        Err(e) => {
            r.line("8", "Non-classical exponents", false, t.elapsed(), format!("search failed: {e}"));
            return;
        }
    };
    let (gamma, beta) = exponents_from_spectrum(p1.lambda1, &m).unwrap();
    let f = fit_both_sides(&fam, &cs, 400);
    let el = t.elapsed();
    let pass = (f.gamma / gamma - 1.0).abs() <= 0.1 && (f.beta / beta - 1.0).abs() <= 0.15 && el < Duration::from_secs(1800);
    r.note(format!("t_c = {:.12}, lambda1 = {:.6}", cs.t_c, p1.lambda1));
    r.line(
        "8",
        "Non-classical exponents",
        pass,
        el,
        format!(
            "gamma {:.4} vs {gamma:.4} (10%), beta {:.4} vs {beta:.4} (15%), {} flagged points",
            f.gamma, f.beta, f.flagged
        ),
    );
}

fn artifacts() -> Vec<String> {
    let m = ModelParams::new(1.25).unwrap();
    let g = default_grid();
    let fam = DensityFamily::gaussian_default(&m, g).unwrap();
    let t_c = -0.103626089486752;
    let sus = susceptibility_curve(&fam, t_c, &[-0.12, -0.15], 200, false).unwrap();
    let mag = magnetization_curve(&fam, t_c, &[-0.08, -0.05], 200, false).unwrap();
    let p0 = gaussian_fixed_point(&m, g).unwrap();
    let s = eigen_spectrum(&build_linearization(&p0, &m).unwrap(), 3).unwrap();
    vec![
        susceptibility_csv(&sus),
        magnetization_csv(&mag),
        p0.to_csv(),
        s.eigenfunction_csv(1).unwrap(),
    ]
}

fn determinism(r: &mut Report) {
    let t = Instant::now();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(artifacts)
    };
    let a = run(1);
    let b = run(4);
    let c = run(4);
    let pass = a == b && b == c;
    r.line(
        "9",
        "Determinism",
        pass,
        t.elapsed(),
        format!("{} CSV artifacts byte-identical across runs with 1 and 4 threads: {pass}", a.len()),
    );
}

fn main() {
    let mut r = Report { failures: 0 };
    gaussian_fixed_point_residual(&mut r);
    gaussian_line_oracle(&mut r);
    l0_spectrum(&mut r);
    enumeration_oracle(&mut r);
    let p1 = non_gaussian_fixed_point_check(&mut r);
    seed_scaling(&mut r);
    let search = critical_search_check(&mut r);
    classical_exponents(&mut r, search.as_ref());
    non_classical_exponents(&mut r, p1.as_ref());
    determinism(&mut r);
    println!("{} criteria failed", r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}
