//! Acceptance suite: every criterion below runs at its stated tolerance and
//! prints one pass/fail line. Run with `--nocapture` to watch progress:
//!
//!   cargo test -p bltail-core --test acceptance -- --nocapture

use std::time::Instant;

use bltail_core::cell::{
    compute_m, extract_tail, mu_at, solve_cell, CellKnobs, CellSpec, TailEstimate,
};
use bltail_core::experiments::{run, ExperimentKind, RunConfig, Verdict, VERDICT_UNCERTAINTY_FACTOR};
use bltail_core::grid::{assemble, initial_guess, solve, AssembleSpec, BoxGrid, SolveParams};
use bltail_core::homogenize::{effective_operator, linear_correctors, CorrectorKnobs};
use bltail_core::lattice::{
    dirichlet_approx, is_irreducible, period_t, tangent_basis, Direction, LatticeVector,
};
use bltail_core::linalg::{SymMat, Vect};
use bltail_core::operators::{
    check_ellipticity, perturb_operator, IsaacsFamily, MatrixField, Operator, TorusFunction,
};
use bltail_core::reduction::{l_xi_with_profile, ReductionKnobs};

struct Criterion {
    name: &'static str,
    ok: bool,
    detail: String,
    seconds: f64,
}

fn record(
    out: &mut Vec<Criterion>,
    name: &'static str,
    f: impl FnOnce() -> Result<(bool, String), bltail_core::Error>,
) {
    let t0 = Instant::now();
    let (ok, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let seconds = t0.elapsed().as_secs_f64();
    println!(
        "criterion {name}: {} ({seconds:.1}s) — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    out.push(Criterion { name, ok, detail, seconds });
}

fn lv(c: &[i64]) -> LatticeVector {
    LatticeVector::new(c).unwrap()
}

fn laplacian_strip(
    n_lat: usize,
    depth: f64,
    h: f64,
    order: usize,
) -> (BoxGrid<f64>, bltail_core::grid::DiscreteProblem<f64>) {
    let op = Operator::<f64>::laplacian(2);
    let lateral = vec![Vect::from_f64s(&[n_lat as f64 * h, 0.0])];
    let grid = BoxGrid::strip(&lateral, &Vect::axis(2, 1), depth, h).unwrap();
    let bottom = |p: &Vect<f64>| (2.0 * std::f64::consts::PI * p.get(0)).cos();
    let top = |_: &Vect<f64>| 0.0;
    let p = assemble(
        &grid,
        AssembleSpec {
            op: &op,
            order,
            frames: 8,
            coef_offset: Vect::zero(2),
            coef_scale: 1.0,
            bottom: &bottom,
            top: &top,
            rhs: None,
        },
    )
    .unwrap();
    (grid, p)
}

/// 1. Laplacian strip with boundary cos(2πz₁), L = 1: sup error ≤ 2% at
///    h = 1/64, R = 3; empirical order ≥ 1 under h → h/2; runtime ≤ 10 s.
fn criterion_1() -> Result<(bool, String), bltail_core::Error> {
    let t0 = Instant::now();
    let tp = 2.0 * std::f64::consts::PI;
    let mut errs = Vec::new();
    for nh in [32usize, 64] {
        let h = 1.0 / nh as f64;
        let (grid, p) = laplacian_strip(nh, 3.0, h, 1);
        let (u, _) = solve(&p, None, &SolveParams::with_tol(1e-11))?;
        let mut sup = 0.0f64;
        for c in 0..grid.layers() {
            for lat in 0..grid.npl() {
                let pos = grid.position(lat, c);
                let exact = (tp * pos.get(0)).cos() * (-tp * pos.get(1)).exp();
                sup = sup.max((u.value(lat, c) - exact).abs());
            }
        }
        errs.push(sup);
    }
    let order = (errs[0] / errs[1]).log2();
    let secs = t0.elapsed().as_secs_f64();
    let ok = errs[1] <= 0.02 && order >= 1.0 && secs <= 10.0;
    Ok((ok, format!("sup err(h=1/64) = {:.3e} (≤ 2e-2), order = {order:.2} (≥ 1), {secs:.1}s (≤ 10)", errs[1])))
}

/// 2. Linear-homogeneous oracle: for F = −Tr and 5 trig ψ in d = 2, 3,
///    μ(ν) = ⟨ψ⟩ within 1e−3 for 10 directions each (incl. near-rational).
///    Runtime ≤ 5 min total.
fn criterion_2() -> Result<(bool, String), bltail_core::Error> {
    let t0 = Instant::now();
    let tol = 1e-3;

    // d = 2: ψ modes avoid every test direction (alignment shifts the
    // τ = 0 rational tail away from ⟨ψ⟩ by design, not by error)
    let psis2: Vec<TorusFunction<f64>> = vec![
        TorusFunction::cosine(2, 1.0, &[1, 0], 0.0).shift_const(0.3),
        TorusFunction::cosine(2, 0.5, &[0, 1], 0.7).shift_const(-0.2),
        TorusFunction::cosine(2, 0.4, &[1, 1], 0.0)
            .add_scaled(&TorusFunction::cosine(2, 0.3, &[1, -1], 0.3), 1.0)?
            .shift_const(0.1),
        TorusFunction::cosine(2, 0.6, &[2, 1], 1.1).shift_const(0.45),
        TorusFunction::cosine(2, 0.25, &[1, 0], 0.2)
            .add_scaled(&TorusFunction::cosine(2, 0.25, &[0, 1], -0.4), 1.0)?,
    ];
    let dirs2: Vec<Direction<f64>> = vec![
        Direction::from_lattice(&lv(&[1, 3])),
        Direction::from_lattice(&lv(&[3, 1])),
        Direction::from_lattice(&lv(&[1, 4])),
        Direction::from_lattice(&lv(&[3, 4])),
        Direction::from_lattice(&lv(&[4, 3])),
        Direction::from_lattice(&lv(&[2, 5])),
        Direction::from_lattice(&lv(&[5, 3])),
        Direction::from_lattice(&lv(&[1, 5])), // near the e₂ axis
        Direction::from_lattice(&lv(&[5, 2])),
        // genuinely irrational, replaced by a Dirichlet approximant
        Direction::from_unnormalized(Vect::from_f64s(&[1.0, std::f64::consts::SQRT_2]))?,
    ];
    let knobs2 = CellKnobs { h: 1.0 / 8.0, depth_factor: 2.5, ..Default::default() };

    let psis3: Vec<TorusFunction<f64>> = vec![
        TorusFunction::cosine(3, 1.0, &[1, 0, 0], 0.0).shift_const(0.3),
        TorusFunction::cosine(3, 0.5, &[0, 1, 1], 0.4).shift_const(-0.15),
        TorusFunction::cosine(3, 0.5, &[1, 1, 0], 0.0)
            .add_scaled(&TorusFunction::cosine(3, 0.5, &[1, -1, 0], 0.0), 1.0)?
            .shift_const(0.3),
        TorusFunction::cosine(3, 0.4, &[0, 0, 1], 0.9).shift_const(0.05),
        TorusFunction::cosine(3, 0.3, &[1, 0, 1], -0.5).shift_const(0.5),
    ];
    let dirs3: Vec<Direction<f64>> = vec![
        Direction::from_lattice(&lv(&[1, 1, 1])),
        Direction::from_lattice(&lv(&[1, 2, 2])),
        Direction::from_lattice(&lv(&[0, 1, 2])),
        Direction::from_lattice(&lv(&[1, 0, 2])),
        Direction::from_lattice(&lv(&[2, 1, 0])),
        Direction::from_lattice(&lv(&[1, 2, 0])),
        Direction::from_lattice(&lv(&[2, 2, 1])),
        Direction::from_lattice(&lv(&[1, 1, 2])),
        Direction::from_lattice(&lv(&[3, 1, 1])),
        Direction::from_unnormalized(Vect::from_f64s(&[1.0, std::f64::consts::SQRT_2, 1.2]))?,
    ];
    let knobs3 = CellKnobs { h: 1.0 / 6.0, depth_factor: 2.5, ..Default::default() };

    let mut worst = 0.0f64;
    let mut count = 0usize;
    for (psis, dirs, knobs) in [(&psis2, &dirs2, &knobs2), (&psis3, &dirs3, &knobs3)] {
        let op = Operator::<f64>::laplacian(psis[0].dim());
        for psi in psis.iter() {
            let mean = psi.mean();
            use rayon::prelude::*;
            let errs: Result<Vec<f64>, bltail_core::Error> = dirs
                .par_iter()
                .map(|nu| {
                    let est = mu_at(&op, psi, nu, 0.05, knobs)?;
                    Ok((est.tail.mu - mean).abs())
                })
                .collect();
            for e in errs? {
                worst = worst.max(e);
                count += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = worst <= tol && secs <= 300.0;
    Ok((ok, format!("{count} tails, worst |μ − ⟨ψ⟩| = {worst:.2e} (≤ 1e-3), {secs:.0}s (≤ 300)")))
}

fn fitted_rate(op: &Operator<f64>, period: f64, h: f64, depth: f64) -> Result<TailEstimate<f64>, bltail_core::Error> {
    let lateral = vec![Vect::from_f64s(&[period, 0.0])];
    let grid = BoxGrid::strip(&lateral, &Vect::axis(2, 1), depth, h)?;
    let bottom = move |p: &Vect<f64>| (2.0 * std::f64::consts::PI * p.get(0) / period).cos();
    let top = |_: &Vect<f64>| 0.0;
    let p = assemble(
        &grid,
        AssembleSpec {
            op,
            order: 2,
            frames: 16,
            coef_offset: Vect::zero(2),
            coef_scale: 1.0,
            bottom: &bottom,
            top: &top,
            rhs: None,
        },
    )?;
    let kappa = 2.0 * std::f64::consts::PI / (period * op.lambda_ratio().sqrt());
    let (u, _) = solve(&p, Some(initial_guess(&p, kappa)), &SolveParams::with_tol(1e-10))?;
    extract_tail(&u)
}

/// 3. Exponential tail rate: Laplacian rate = 2π/L ± 5% at L ∈ {1, 2};
///    Pucci(1,2) rate at L = 2 within 15% of half the L = 1 rate.
fn criterion_3() -> Result<(bool, String), bltail_core::Error> {
    let lap = Operator::<f64>::laplacian(2);
    let mut ok = true;
    let mut notes = Vec::new();
    let mut lap_rates = Vec::new();
    for period in [1.0f64, 2.0] {
        let tail = fitted_rate(&lap, period, period / 32.0, 2.2 * period)?;
        let expect = 2.0 * std::f64::consts::PI / period;
        let rel = (tail.decay_rate - expect).abs() / expect;
        ok &= rel <= 0.05;
        lap_rates.push(tail.decay_rate);
        notes.push(format!("lap L={period}: rate {:.4} vs {expect:.4} ({:.1}%)", tail.decay_rate, rel * 100.0));
    }
    let pucci = Operator::<f64>::pucci_plus(2, 1.0, 2.0);
    let r1 = fitted_rate(&pucci, 1.0, 1.0 / 32.0, 2.2)?.decay_rate;
    let r2 = fitted_rate(&pucci, 2.0, 2.0 / 32.0, 4.4)?.decay_rate;
    let rel = (r2 - r1 / 2.0).abs() / (r1 / 2.0);
    ok &= r1 > 0.0 && rel <= 0.15;
    notes.push(format!("pucci rates {r1:.4}/{r2:.4}, halving error {:.1}%", rel * 100.0));
    Ok((ok, notes.join("; ")))
}

/// 4. m_ξ structure: aligned-cosine exactness (1e−6) for every implemented
///    operator kind, and periodicity closure ≤ 2× per-sample residual for
///    generic ψ.
fn criterion_4() -> Result<(bool, String), bltail_core::Error> {
    let mut ok = true;
    let mut notes = Vec::new();
    let knobs = CellKnobs { h: 1.0 / 8.0, depth_factor: 2.0, ..Default::default() };

    let ops3: Vec<(&str, Operator<f64>)> = vec![
        ("linear", Operator::laplacian(3)),
        ("pucci", Operator::pucci_plus(3, 1.0, 2.0)),
        ("perturbed", perturb_operator(&Operator::laplacian(3), &Vect::axis(3, 0), 0.5)?),
    ];
    let xi3 = lv(&[0, 0, 1]);
    let psi3 = TorusFunction::cosine(3, 1.0, &[0, 0, 1], 0.0);
    let mut worst = 0.0f64;
    for (name, op) in &ops3 {
        let m = compute_m(op, &psi3, &xi3, 8, &knobs)?;
        for (k, s) in m.samples.iter().enumerate() {
            let t = m.period * k as f64 / m.samples.len() as f64;
            let expect = (2.0 * std::f64::consts::PI * xi3.norm::<f64>() * t).cos();
            worst = worst.max((s - expect).abs());
        }
        let _ = name;
    }
    // oblique ξ in d = 2 as well
    let xi2 = lv(&[1, 1]);
    let m2 = compute_m(
        &Operator::<f64>::pucci_plus(2, 1.0, 2.0),
        &TorusFunction::cosine(2, 1.0, &[1, 1], 0.0),
        &xi2,
        8,
        &knobs,
    )?;
    for (k, s) in m2.samples.iter().enumerate() {
        let t = m2.period * k as f64 / m2.samples.len() as f64;
        let expect = (2.0 * std::f64::consts::PI * xi2.norm::<f64>() * t).cos();
        worst = worst.max((s - expect).abs());
    }
    ok &= worst <= 1e-6;
    notes.push(format!("aligned-cos worst error {worst:.2e} (≤ 1e-6)"));

    // generic ψ closure at ξ = (1,2) with n not commensurate with the shift
    let psi = TorusFunction::cosine(2, 1.0, &[1, 0], 0.0).shift_const(0.3);
    let m = compute_m(
        &Operator::<f64>::laplacian(2),
        &psi,
        &lv(&[1, 2]),
        8,
        &CellKnobs { h: 1.0 / 16.0, depth_factor: 2.0, ..Default::default() },
    )?;
    let bound = 2.0 * m.max_residual();
    ok &= m.closure_err <= bound;
    notes.push(format!("closure {:.2e} ≤ 2×residual {bound:.2e}", m.closure_err));
    Ok((ok, notes.join("; ")))
}

/// 5. Rotation-invariant continuity for Pucci(1,2), d = 3, ξ = (0,0,1):
///    L_ξ(η) over 8 tangent angles spreads ≤ 3× combined uncertainty, and
///    |μ(ν(t)) − L_ξ| decreases as t halves over ≈{0.2, 0.1, 0.05, 0.025}
///    (geodesic points taken at the exact rationals tan t = 1/k).
fn criterion_5() -> Result<(bool, String), bltail_core::Error> {
    let op = Operator::<f64>::pucci_plus(3, 1.0, 2.0);
    let psi = TorusFunction::cosine(3, 0.5, &[0, 0, 1], 0.0)
        .add_scaled(&TorusFunction::cosine(3, 0.3, &[1, 0, 0], 0.0), 1.0)?;
    let xi = lv(&[0, 0, 1]);
    let cell = CellKnobs { h: 1.0 / 12.0, depth_factor: 4.0, ..Default::default() };
    let m = compute_m(&op, &psi, &xi, 12, &cell)?;

    let red = ReductionKnobs { nodes_per_period: 24, depth_factor: 4.0, ..Default::default() };
    let corr = CorrectorKnobs::default();
    let mut l_vals = Vec::new();
    let mut l_unc = 0.0f64;
    for j in 0..8 {
        let th = 2.0 * std::f64::consts::PI * j as f64 / 8.0;
        let eta = Vect::from_f64s(&[th.cos(), th.sin(), 0.0]);
        let lim = l_xi_with_profile(&op, &m, &xi, &eta, &red, &corr, None)?;
        l_vals.push(lim.value);
        l_unc = l_unc.max(lim.uncertainty);
    }
    let spread = l_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - l_vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread_ok = spread <= VERDICT_UNCERTAINTY_FACTOR * l_unc;
    let l_ref = l_vals[0];

    // geodesic toward ξ̂ with velocity −e₁: exact rational points ν ∝ (−1, 0, k)
    let cases: [(i64, f64, f64); 4] =
        [(5, 1.0 / 8.0, 3.0), (10, 1.0 / 7.0, 2.2), (20, 1.0 / 6.0, 1.8), (40, 1.0 / 5.0, 1.7)];
    let mut gaps = Vec::new();
    let mut uncs = Vec::new();
    for (k, h, df) in cases {
        let xik = lv(&[-1, 0, k]);
        let knobs = CellKnobs { h, depth_factor: df, ..Default::default() };
        let spec = CellSpec { op: &op, psi: &psi, xi: xik, tau: Vect::zero(3), knobs };
        let sol = solve_cell(&spec)?;
        let tail = extract_tail(&sol.u)?;
        gaps.push((tail.mu - l_ref).abs());
        uncs.push(tail.residual_osc + l_unc);
    }
    let mut trend_ok = true;
    for w in 0..gaps.len() - 1 {
        if gaps[w + 1] > gaps[w] + uncs[w] + uncs[w + 1] {
            trend_ok = false;
        }
    }
    let ok = spread_ok && trend_ok;
    Ok((
        ok,
        format!(
            "L spread {spread:.2e} ≤ 3×{l_unc:.2e}: {spread_ok}; gaps {:?} decreasing up to uncertainty: {trend_ok}",
            gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>()
        ),
    ))
}

/// 6. Discontinuity lab: base −Tr, d = 3, ξ = (0,0,1), m-profile 0.5·cos,
///    δ = 0.5: strict resolved split L(η₂) − L(η₁) > 3× uncertainty, with
///    L(η₂) at the profile mean and L^δ(η₁) ≤ L⁰(η₁). Runtime ≤ 10 min.
fn criterion_6() -> Result<(bool, String), bltail_core::Error> {
    let t0 = Instant::now();
    let cfg = RunConfig::from_toml(
        r#"
experiment = "discontinuity-lab"
xi = [0, 0, 1]
eta1 = [1.0, 0.0, 0.0]
eta2 = [0.0, 1.0, 0.0]
delta_list = [0.0, 0.25, 0.5]

[operator]
kind = "linear"
[operator.a]
form = "const"
rows = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]

[numerics]
h = 0.1
m_samples = 8
depth_factor = 2.0
nodes_per_period = 32
red_depth_factor = 4.0
"#,
    )?;
    assert_eq!(cfg.experiment, ExperimentKind::DiscontinuityLab);
    let rep = run(&cfg)?;
    // columns: delta, L1, u1, L2, u2, split, combined, verdict
    let parse = |r: &Vec<String>, i: usize| -> f64 { r[i].parse().unwrap() };
    let row0 = &rep.rows[0];
    let row_half = rep.rows.iter().find(|r| r[0] == "0.5").unwrap();
    let l1_0 = parse(row0, 1);
    let (l1, u1, l2, u2, split, combined) = (
        parse(row_half, 1),
        parse(row_half, 2),
        parse(row_half, 3),
        parse(row_half, 4),
        parse(row_half, 5),
        parse(row_half, 6),
    );
    let detected = rep.verdict == Verdict::Ok && row_half[7] == "discontinuity detected";
    let mean_ok = l2.abs() <= 1e-4 + VERDICT_UNCERTAINTY_FACTOR * u2;
    let ordering_ok = l1 <= l1_0 + u1 + parse(row0, 2);
    let secs = t0.elapsed().as_secs_f64();
    let ok = detected && split > VERDICT_UNCERTAINTY_FACTOR * combined && mean_ok && ordering_ok && secs <= 600.0;
    Ok((
        ok,
        format!(
            "split {split:.4} > 3×{combined:.1e}: {detected}; L(η₂) = {l2:.2e} ≈ mean 0; L^δ(η₁) = {l1:.4} ≤ L⁰(η₁) = {l1_0:.4}; {secs:.0}s"
        ),
    ))
}

/// 7. Effective operator: layered A = (2 + sin 2πy₁)Id homogenizes to
///    √3·Id within 1%; homogeneous F̄ = F exactly; interior rate slope
///    1.0 ± 0.2 over ε ∈ {1/8, 1/16, 1/32}.
fn criterion_7() -> Result<(bool, String), bltail_core::Error> {
    let mut ok = true;
    let mut notes = Vec::new();

    let a = TorusFunction::<f64>::cosine(2, 1.0, &[1, 0], -std::f64::consts::FRAC_PI_2)
        .shift_const(2.0);
    let field = MatrixField::isotropic(a);
    let knobs = CorrectorKnobs { torus_n: 64, tol: 1e-8, ..Default::default() };
    let eff = linear_correctors(&field, 3.0, &knobs)?;
    let h = 3f64.sqrt();
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let expect = if i == j { h } else { 0.0 };
            worst = worst.max((eff.a_bar.get(i, j) - expect).abs());
        }
    }
    ok &= worst <= 0.01 * h;
    notes.push(format!("‖Ā − √3·Id‖∞ = {worst:.2e} (≤ {:.2e})", 0.01 * h));

    // homogeneous operator: exact, zero iterations
    let pucci = Operator::<f64>::pucci_plus(2, 1.0, 2.0);
    let m = SymMat::from_rows(&[&[1.0, 0.4], &[0.4, -0.7]]).unwrap();
    let sol = effective_operator(&pucci, &m, &CorrectorKnobs::default())?;
    let exact = pucci.eval(&m, &Vect::zero(2))?;
    ok &= sol.fbar == exact && sol.iterations == 0;
    notes.push(format!("homogeneous F̄ − F = {:+.1e} in {} iterations", sol.fbar - exact, sol.iterations));

    // interior homogenization rate
    let cfg = RunConfig::from_toml(
        r#"
experiment = "homogenize"
eps_list = [0.125, 0.0625, 0.03125]

[operator]
kind = "linear"
lambda = 3.0
[operator.a]
form = "isotropic"
[operator.a.a]
dim = 2
terms = [
    { amp = 2.0, freq = [0, 0], phase = 0.0 },
    { amp = 1.0, freq = [1, 0], phase = -1.5707963267948966 },
]

[psi]
dim = 2
terms = [{ amp = 1.0, freq = [1, 0], phase = 0.0 }]

[numerics]
torus_n = 64
cells_per_eps = 8
"#,
    )?;
    let rep = run(&cfg)?;
    let slope = rep.summary["rate_slope"].as_f64().unwrap_or(f64::NAN);
    ok &= (slope - 1.0).abs() <= 0.2;
    notes.push(format!("interior rate slope {slope:.3} (1.0 ± 0.2)"));
    Ok((ok, notes.join("; ")))
}

/// 8. Number theory: the Dirichlet bound on 1000 random (α, N ≤ 200)
///    instances against exhaustive minimization; period_T and tangent_basis
///    exact for all ξ with |ξ|∞ ≤ 10.
fn criterion_8() -> Result<(bool, String), bltail_core::Error> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut violations = 0usize;
    for _ in 0..1000 {
        let n = 1 + rng.gen_range(0..2usize);
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let cap = rng.gen_range(1..=200u64);
        let (p, q) = dirichlet_approx(&alpha, cap)?;
        let bound = (cap as f64).powf(-1.0 / n as f64);
        let err = alpha
            .iter()
            .zip(&p)
            .map(|(a, pi)| (q as f64 * a - *pi as f64).abs())
            .fold(0.0f64, f64::max);
        // exhaustive check: the theorem bound and minimality of q
        let exhaustive = |qq: i64| -> f64 {
            alpha
                .iter()
                .map(|a| {
                    let qa = qq as f64 * a;
                    (qa - qa.round()).abs()
                })
                .fold(0.0f64, f64::max)
        };
        if err > bound + 1e-12 {
            violations += 1;
        }
        for qq in 1..q {
            if exhaustive(qq) < bound - 1e-12 {
                violations += 1;
                break;
            }
        }
    }

    let mut lattice_failures = 0usize;
    for dim in [2usize, 3] {
        let r = 10i64;
        let mut stack = vec![Vec::<i64>::new()];
        while let Some(partial) = stack.pop() {
            if partial.len() == dim {
                if partial.iter().all(|&c| c == 0) {
                    continue;
                }
                let xi = LatticeVector::new(&partial).unwrap();
                // period only defined for irreducible ξ
                if is_irreducible(&xi) {
                    let t: f64 = period_t(&xi).unwrap();
                    if (t * xi.norm::<f64>() - 1.0).abs() > 1e-15 {
                        lattice_failures += 1;
                    }
                } else if period_t::<f64>(&xi).is_ok() {
                    lattice_failures += 1;
                }
                let basis = tangent_basis(&xi);
                if basis.len() != dim - 1 {
                    lattice_failures += 1;
                }
                for f in &basis {
                    if f.dot(&xi) != 0 || f.norm2() > xi.norm2() {
                        lattice_failures += 1;
                    }
                }
                if dim == 3 {
                    // rank check via the cross product
                    let (a, b) = (&basis[0], &basis[1]);
                    let cr = [
                        a.get(1) * b.get(2) - a.get(2) * b.get(1),
                        a.get(2) * b.get(0) - a.get(0) * b.get(2),
                        a.get(0) * b.get(1) - a.get(1) * b.get(0),
                    ];
                    if cr.iter().all(|&c| c == 0) {
                        lattice_failures += 1;
                    }
                }
            } else {
                for c in -r..=r {
                    let mut next = partial.clone();
                    next.push(c);
                    stack.push(next);
                }
            }
        }
    }
    let ok = violations == 0 && lattice_failures == 0;
    Ok((ok, format!("dirichlet violations {violations}/1000, lattice failures {lattice_failures}")))
}

/// 9. Property suite: maximum principle, operator-comparison ordering,
///    homogeneity, Pucci sandwich, shift equivariance of μ — 200 randomized
///    instances each, zero violations.
fn criterion_9() -> Result<(bool, String), bltail_core::Error> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(514);
    let mut notes = Vec::new();
    let mut ok = true;

    let rand_psi = |rng: &mut rand_chacha::ChaCha8Rng| -> TorusFunction<f64> {
        let mut psi = TorusFunction::constant(2, rng.gen_range(-0.5..0.5));
        for _ in 0..rng.gen_range(1..3) {
            let f = [rng.gen_range(-2i64..3), rng.gen_range(-2i64..3)];
            if f == [0, 0] {
                continue;
            }
            psi = psi
                .add_scaled(
                    &TorusFunction::cosine(2, 1.0, &f, rng.gen_range(0.0..6.28)),
                    rng.gen_range(0.1..0.6),
                )
                .unwrap();
        }
        psi
    };
    let pick_op = |rng: &mut rand_chacha::ChaCha8Rng, dim: usize| -> Operator<f64> {
        match rng.gen_range(0..3) {
            0 => Operator::laplacian(dim),
            1 => Operator::pucci_plus(dim, 1.0, rng.gen_range(1.5..3.0)),
            _ => {
                let mut e = Vect::zero(dim);
                for i in 0..dim {
                    e.set(i, rng.gen_range(-1.0..1.0));
                }
                let e = e.normalize().unwrap();
                perturb_operator(&Operator::laplacian(dim), &e, rng.gen_range(0.1..0.8)).unwrap()
            }
        }
    };

    // (a) discrete maximum principle on random strips
    let mut violations = 0usize;
    let knobs = CellKnobs { h: 1.0 / 8.0, depth_factor: 1.5, tol_factor: 1e-9, ..Default::default() };
    for _ in 0..200 {
        let op = pick_op(&mut rng, 2);
        let psi = rand_psi(&mut rng);
        let spec = CellSpec { op: &op, psi: &psi, xi: lv(&[0, 1]), tau: Vect::zero(2), knobs: knobs.clone() };
        let sol = solve_cell(&spec)?;
        let (lo, hi) = psi.bounds_estimate(64);
        for v in &sol.u.values {
            if *v < lo - 1e-8 || *v > hi + 1e-8 {
                violations += 1;
                break;
            }
        }
    }
    ok &= violations == 0;
    notes.push(format!("max principle {violations}/200"));

    // (b) operator comparison: F_δ ≥ F pointwise ⇒ u_δ ≤ u nodewise
    let mut violations = 0usize;
    for _ in 0..200 {
        let psi = rand_psi(&mut rng);
        let base = Operator::<f64>::laplacian(2);
        let mut e = Vect::zero(2);
        for i in 0..2 {
            e.set(i, rng.gen_range(-1.0..1.0));
        }
        let e = match e.normalize() {
            Ok(v) => v,
            Err(_) => Vect::axis(2, 0),
        };
        let fd = perturb_operator(&base, &e, rng.gen_range(0.1..0.9))?;
        let mk = |op: &Operator<f64>| -> Result<Vec<f64>, bltail_core::Error> {
            let spec = CellSpec { op, psi: &psi, xi: lv(&[0, 1]), tau: Vect::zero(2), knobs: CellKnobs { two_pass: false, ..knobs.clone() } };
            Ok(solve_cell(&spec)?.u.values)
        };
        let u = mk(&base)?;
        let ud = mk(&fd)?;
        if ud.iter().zip(u.iter()).any(|(a, b)| *a > *b + 1e-7) {
            violations += 1;
        }
    }
    ok &= violations == 0;
    notes.push(format!("comparison {violations}/200"));

    // (c) positive homogeneity of every operator kind
    let mut violations = 0usize;
    for _ in 0..200 {
        let dim = if rng.gen_bool(0.5) { 2 } else { 3 };
        let op = pick_op(&mut rng, dim);
        let mut m = SymMat::zero(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, rng.gen_range(-2.0..2.0));
            }
        }
        let t: f64 = rng.gen_range(0.1..4.0);
        let y = Vect::zero(dim);
        let lhs = op.eval(&m.scale(t), &y)?;
        let rhs = t * op.eval(&m, &y)?;
        if (lhs - rhs).abs() > 1e-12 * t * m.norm_inf().max(1.0) {
            violations += 1;
        }
    }
    ok &= violations == 0;
    notes.push(format!("homogeneity {violations}/200"));

    // (d) degenerate ellipticity + Pucci sandwich via randomized witnesses
    let mut failures = 0usize;
    for (i, op) in [
        Operator::<f64>::laplacian(2),
        Operator::pucci_plus(2, 1.0, 2.0),
        Operator::pucci_plus(3, 1.0, 2.5),
        perturb_operator(&Operator::laplacian(3), &Vect::axis(3, 1), 0.5)?,
    ]
    .iter()
    .enumerate()
    {
        if check_ellipticity(op, 200, 1000 + i as u64).is_err() {
            failures += 1;
        }
    }
    ok &= failures == 0;
    notes.push(format!("sandwich failures {failures}/4 ops × 200"));

    // (e) shift equivariance of μ
    let mut violations = 0usize;
    for _ in 0..200 {
        let op = pick_op(&mut rng, 2);
        let psi = rand_psi(&mut rng);
        let c: f64 = rng.gen_range(-1.0..1.0);
        let spec = CellSpec { op: &op, psi: &psi, xi: lv(&[0, 1]), tau: Vect::zero(2), knobs: knobs.clone() };
        let t1 = extract_tail(&solve_cell(&spec)?.u)?;
        let shifted = psi.shift_const(c);
        let spec2 = CellSpec { op: &op, psi: &shifted, xi: lv(&[0, 1]), tau: Vect::zero(2), knobs: knobs.clone() };
        let t2 = extract_tail(&solve_cell(&spec2)?.u)?;
        if ((t2.mu - t1.mu) - c).abs() > 1e-7 {
            violations += 1;
        }
    }
    ok &= violations == 0;
    notes.push(format!("shift equivariance {violations}/200"));

    Ok((ok, notes.join("; ")))
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    record(&mut results, "1 exact-solution validation", criterion_1);
    record(&mut results, "2 linear-homogeneous oracle", criterion_2);
    record(&mut results, "3 exponential tail rate", criterion_3);
    record(&mut results, "4 m_xi structure", criterion_4);
    record(&mut results, "5 rotation-invariant continuity", criterion_5);
    record(&mut results, "6 discontinuity lab", criterion_6);
    record(&mut results, "7 effective operator", criterion_7);
    record(&mut results, "8 number theory", criterion_8);
    record(&mut results, "9 property suite", criterion_9);

    let total: f64 = results.iter().map(|c| c.seconds).sum();
    println!("acceptance total: {total:.0}s");
    let failed: Vec<&Criterion> = results.iter().filter(|c| !c.ok).collect();
    assert!(
        failed.is_empty(),
        "failed criteria: {}",
        failed
            .iter()
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect::<Vec<_>>()
            .join("; ")
    );
}
