//! Half-space cell problems: strips framed on a rational direction ξ,
//! boundary layer tails μ with fitted decay rates, the 1/|ξ|-periodic
//! offset profile m_ξ, and tails at arbitrary directions through rational
//! approximants.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::grid::{assemble, initial_guess, solve, AssembleSpec, BoxGrid, GridFunction, SolveParams, SolveReport};
use crate::lattice::{
    is_irreducible, rational_approx_direction, tangent_lattice_basis, Direction, LatticeVector,
    RationalityTag,
};
use crate::linalg::Vect;
use crate::operators::{Operator, TorusFunction};
use crate::scalar::{cnt, lit, to_f64, Real};

/// Numerical knobs for cell solves (concrete f64 so configs serialize).
#[derive(Clone, Debug)]
pub struct CellKnobs {
    /// target mesh width
    pub h: f64,
    /// strip depth override; default max(depth_factor · L_cell, 3)
    pub depth: Option<f64>,
    pub depth_factor: f64,
    pub stencil_order: usize,
    pub frames: usize,
    /// tol = max(abs_tol, tol_factor · osc of boundary data)
    pub tol_factor: f64,
    pub abs_tol: f64,
    pub max_outer: usize,
    /// re-cap the far field with the extracted tail and re-solve
    pub two_pass: bool,
    /// when set, double the depth (≤ `max_doublings`) until the residual
    /// oscillation at the extraction slice is below this target
    pub residual_target: Option<f64>,
    pub max_doublings: usize,
}

impl Default for CellKnobs {
    fn default() -> Self {
        CellKnobs {
            h: 1.0 / 16.0,
            depth: None,
            depth_factor: 6.0,
            stencil_order: 2,
            frames: 16,
            tol_factor: 1e-8,
            abs_tol: 1e-12,
            max_outer: 100_000,
            two_pass: true,
            residual_target: None,
            max_doublings: 2,
        }
    }
}

/// Boundary layer tail with fit diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct TailEstimate<T> {
    pub mu: T,
    /// fitted c in osc(s) ≈ C · e^{−c·s} over the middle half of the strip
    pub decay_rate: T,
    /// oscillation at the extraction slice
    pub residual_osc: T,
    /// R² of the log-linear fit (1 for constant data)
    pub fit_quality: T,
}

/// Full cell specification (rational-direction path).
#[derive(Clone)]
pub struct CellSpec<'a, T> {
    pub op: &'a Operator<T>,
    pub psi: &'a TorusFunction<T>,
    pub xi: LatticeVector,
    pub tau: Vect<T>,
    pub knobs: CellKnobs,
}

pub struct CellSolution<T> {
    pub u: GridFunction<T>,
    pub report: SolveReport,
    pub lateral_diam: T,
    pub boundary_mean: T,
    pub boundary_osc: T,
    pub depth: T,
}

/// Lateral frame of the strip at ξ: reduced tangent-lattice vectors.
pub fn strip_frame<T: Real>(xi: &LatticeVector) -> Result<(Vec<Vect<T>>, Vect<T>)> {
    let basis = tangent_lattice_basis(xi)?;
    let lateral: Vec<Vect<T>> = basis.iter().map(|b| b.to_vect()).collect();
    Ok((lateral, xi.hat()))
}

fn lateral_diam<T: Real>(lateral: &[Vect<T>]) -> T {
    match lateral.len() {
        1 => lateral[0].norm(),
        _ => {
            let a = lateral[0].add(&lateral[1]).norm();
            let b = lateral[0].sub(&lateral[1]).norm();
            a.max(b)
        }
    }
}

/// Solve the half-space cell problem F(D²v, y+τ) = 0 in P_ξ, v = ψ(y+τ)
/// on ∂P_ξ, truncated at a far-field Dirichlet cap (two-pass re-capped).
pub fn solve_cell<T: Real>(spec: &CellSpec<'_, T>) -> Result<CellSolution<T>> {
    if !is_irreducible(&spec.xi) {
        return Err(Error::Precondition(format!(
            "solve_cell requires an irreducible ξ, gcd = {}",
            spec.xi.gcd()
        )));
    }
    if spec.psi.dim() != spec.xi.dim || spec.op.dim() != spec.xi.dim {
        return Err(Error::Dimension { expected: spec.xi.dim, got: spec.psi.dim() });
    }
    let (lateral, xi_hat) = strip_frame::<T>(&spec.xi)?;
    let ldiam = lateral_diam(&lateral);
    let base_depth = spec
        .knobs
        .depth
        .map(lit::<T>)
        .unwrap_or_else(|| (lit::<T>(spec.knobs.depth_factor) * ldiam).max(lit(3.0)));

    let mut depth = base_depth;
    let mut attempt = 0usize;
    loop {
        let sol = solve_cell_at_depth(spec, &lateral, &xi_hat, ldiam, depth)?;
        let tail = extract_tail(&sol.u);
        let retry = match (&tail, spec.knobs.residual_target) {
            (Err(Error::StripTooShort { .. }), _) => true,
            (Ok(t), Some(target)) => to_f64(t.residual_osc) > target,
            _ => false,
        };
        if !retry || attempt >= spec.knobs.max_doublings {
            return Ok(sol);
        }
        attempt += 1;
        depth = depth * lit(2.0);
    }
}

fn solve_cell_at_depth<T: Real>(
    spec: &CellSpec<'_, T>,
    lateral: &[Vect<T>],
    xi_hat: &Vect<T>,
    ldiam: T,
    depth: T,
) -> Result<CellSolution<T>> {
    let grid = BoxGrid::strip(lateral, xi_hat, depth, lit(spec.knobs.h))?;
    let psi = spec.psi;
    let tau = spec.tau;
    let bottom = move |p: &Vect<T>| psi.eval(&p.add(&tau));

    // pass 1: cap with the lateral mean of the boundary data
    let npl = grid.npl();
    let mut mean_b = T::zero();
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for lat in 0..npl {
        let v = bottom(&grid.position(lat, 0));
        mean_b += v;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    mean_b /= cnt(npl);
    let osc_b = hi - lo;
    let tol = lit::<T>(spec.knobs.abs_tol).max(lit::<T>(spec.knobs.tol_factor) * osc_b);
    let mut params = SolveParams::with_tol(tol);
    params.max_outer = spec.knobs.max_outer;

    let run = |cap: T, guess: Option<GridFunction<T>>| -> Result<(GridFunction<T>, SolveReport)> {
        let top = move |_: &Vect<T>| cap;
        let p = assemble(
            &grid,
            AssembleSpec {
                op: spec.op,
                order: spec.knobs.stencil_order,
                frames: spec.knobs.frames,
                coef_offset: tau,
                coef_scale: T::one(),
                bottom: &bottom,
                top: &top,
                rhs: None,
            },
        )?;
        let g = guess.or_else(|| {
            let lam = spec.op.lambda_ratio().max(T::one());
            let kappa = (T::PI() * lit(2.0)) / (ldiam.max(lit(1e-9)) * lam.sqrt());
            Some(initial_guess(&p, kappa))
        });
        solve(&p, g, &params)
    };

    let (u1, rep1) = run(mean_b, None)?;
    if !spec.knobs.two_pass {
        return Ok(CellSolution {
            u: u1,
            report: rep1,
            lateral_diam: ldiam,
            boundary_mean: mean_b,
            boundary_osc: osc_b,
            depth,
        });
    }
    let t1 = extract_tail(&u1)?;
    // second pass with the provisional tail as the far-field value
    let mut guess = u1;
    let layers = guess.grid.layers();
    for lat in 0..npl {
        guess.values[(layers - 1) * npl + lat] = t1.mu;
    }
    let (u2, rep2) = run(t1.mu, Some(guess))?;
    Ok(CellSolution {
        u: u2,
        report: rep2,
        lateral_diam: ldiam,
        boundary_mean: mean_b,
        boundary_osc: osc_b,
        depth,
    })
}

/// Extract the boundary layer tail from a solved strip: lateral mean a few
/// lateral-period-scaled layers below the cap, with a log-linear decay fit
/// of the slice oscillation over the middle half of the strip.
pub fn extract_tail<T: Real>(u: &GridFunction<T>) -> Result<TailEstimate<T>> {
    let stats = u.layer_stats();
    let ns = u.grid.layers() - 1;
    let hs = u.grid.normal_step();
    let osc_b = stats[0].2 - stats[0].1;
    let scale = stats.iter().fold(T::zero(), |m, s| m.max(s.2.abs()).max(s.1.abs())).max(T::one());

    // extraction slice: below the cap by ~3/4 of the largest lateral extent
    let mut l_max = T::zero();
    for i in 0..u.grid.lateral_axes() {
        l_max = l_max.max(u.grid.steps[i].norm() * cnt(u.grid.n[i]));
    }
    let buffer = (to_f64(l_max / hs) * 0.75).ceil().max(1.0) as usize;
    let c_star = (ns - buffer.min(ns / 3)).max(ns / 2);

    let residual_osc = stats[c_star].2 - stats[c_star].1;
    let mu = stats[c_star].0;

    if osc_b <= scale * lit(1e-13) {
        // constant boundary data: everything is exact
        return Ok(TailEstimate {
            mu,
            decay_rate: T::zero(),
            residual_osc,
            fit_quality: T::one(),
        });
    }
    if residual_osc > lit::<T>(0.1) * osc_b {
        return Err(Error::StripTooShort {
            top_osc: to_f64(residual_osc),
            boundary_osc: to_f64(osc_b),
        });
    }

    // log-linear decay fit over the middle half
    let c_lo = (ns / 4).max(1);
    let c_hi = (3 * ns / 4).min(ns - 1);
    let floor = scale * lit(1e-14);
    let mut xs: Vec<T> = Vec::new();
    let mut ys: Vec<T> = Vec::new();
    for c in c_lo..=c_hi {
        let osc = stats[c].2 - stats[c].1;
        if osc > floor {
            xs.push(hs * cnt(c));
            ys.push(osc.ln());
        }
    }
    let (decay_rate, fit_quality) = if xs.len() >= 3 {
        let (slope, r2) = linear_fit(&xs, &ys);
        if slope >= T::zero() {
            return Err(Error::TailDiagnostic(format!(
                "non-decaying oscillation profile: fitted slope {:+.3e}",
                to_f64(slope)
            )));
        }
        (-slope, r2)
    } else {
        // oscillation already at rounding level in the fit window
        (T::zero(), T::one())
    };

    Ok(TailEstimate { mu, decay_rate, residual_osc, fit_quality })
}

/// least squares slope and R² of y against x
pub fn linear_fit<T: Real>(xs: &[T], ys: &[T]) -> (T, T) {
    let n = cnt::<T>(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (*x - mx) * (*x - mx);
        sxy += (*x - mx) * (*y - my);
        syy += (*y - my) * (*y - my);
    }
    if sxx <= T::epsilon() {
        return (T::zero(), T::one());
    }
    let slope = sxy / sxx;
    let r2 = if syy <= T::epsilon() { T::one() } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}

/// Sampled 1/|ξ|-periodic profile m_ξ(t) with per-sample tails and a
/// periodicity-closure check |m(T) − m(0)|.
#[derive(Clone, Debug)]
pub struct ProfileM<T> {
    pub period: T,
    pub samples: Vec<T>,
    pub tails: Vec<TailEstimate<T>>,
    pub closure_err: T,
}

impl<T: Real> ProfileM<T> {
    pub fn constant(period: T, value: T) -> Self {
        ProfileM {
            period,
            samples: vec![value; 4],
            tails: vec![
                TailEstimate { mu: value, decay_rate: T::zero(), residual_osc: T::zero(), fit_quality: T::one() };
                4
            ],
            closure_err: T::zero(),
        }
    }

    pub fn min(&self) -> T {
        self.samples.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.samples.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn mean(&self) -> T {
        self.samples.iter().copied().sum::<T>() / cnt(self.samples.len())
    }

    pub fn max_residual(&self) -> T {
        self.tails.iter().fold(T::zero(), |m, t| m.max(t.residual_osc))
    }

    /// Trigonometric interpolation through the equispaced samples.
    pub fn eval(&self, t: T) -> T {
        let n = self.samples.len();
        let x = (t / self.period).fract();
        let x = if x < T::zero() { x + T::one() } else { x };
        let two_pi = T::PI() * lit(2.0);
        let nf = cnt::<T>(n);
        let mut out = self.samples.iter().copied().sum::<T>() / nf;
        let kmax = (n - 1) / 2;
        for k in 1..=kmax {
            let mut a = T::zero();
            let mut b = T::zero();
            for (j, m) in self.samples.iter().enumerate() {
                let th = two_pi * cnt::<T>(k * j) / nf;
                a += *m * th.cos();
                b += *m * th.sin();
            }
            a = a * lit(2.0) / nf;
            b = b * lit(2.0) / nf;
            let th = two_pi * cnt::<T>(k) * x;
            out += a * th.cos() + b * th.sin();
        }
        if n % 2 == 0 {
            let mut a = T::zero();
            for (j, m) in self.samples.iter().enumerate() {
                let s = if j % 2 == 0 { T::one() } else { -T::one() };
                a += *m * s;
            }
            a /= nf;
            out += a * (T::PI() * cnt::<T>(n) * x).cos();
        }
        out
    }
}

/// Sample m_ξ(t) = lim v_{ξ̂, tξ̂}(Rξ̂) over one period T = 1/|ξ|.
/// An extra closure sample at t = T verifies the periodicity.
pub fn compute_m<T: Real>(
    op: &Operator<T>,
    psi: &TorusFunction<T>,
    xi: &LatticeVector,
    n_samples: usize,
    knobs: &CellKnobs,
) -> Result<ProfileM<T>> {
    if n_samples < 4 {
        return Err(Error::Parameter("compute_m requires at least 4 samples".into()));
    }
    if !is_irreducible(xi) {
        return Err(Error::Precondition("compute_m requires an irreducible ξ".into()));
    }
    let period = T::one() / xi.norm::<T>();
    let xh = xi.hat::<T>();
    let ts: Vec<T> = (0..=n_samples)
        .map(|k| period * cnt::<T>(k) / cnt(n_samples))
        .collect();
    let results: Result<Vec<TailEstimate<T>>> = {
        use rayon::prelude::*;
        ts.par_iter()
            .map(|t| {
                let spec = CellSpec {
                    op,
                    psi,
                    xi: *xi,
                    tau: xh.scale(*t),
                    knobs: knobs.clone(),
                };
                let sol = solve_cell(&spec)?;
                extract_tail(&sol.u)
            })
            .collect()
    };
    let mut tails = results?;
    let closure = tails.pop().unwrap();
    let closure_err = (closure.mu - tails[0].mu).abs();
    Ok(ProfileM {
        period,
        samples: tails.iter().map(|t| t.mu).collect(),
        tails,
        closure_err,
    })
}

/// Tail at an arbitrary direction with its uncertainty budget.
#[derive(Clone, Debug)]
pub struct MuEstimate<T> {
    pub tail: TailEstimate<T>,
    pub xi: LatticeVector,
    /// |ξ − |ξ|ν| replacement gap (0 when ν is exactly rational)
    pub gap: T,
    /// residual oscillation plus the gap-driven modulus (heuristic, reported)
    pub uncertainty: T,
}

/// μ(ν, ψ, F): rational and tagged directions are computed at their lattice
/// representative with τ = 0; other directions are replaced by a Dirichlet
/// approximant at the requested accuracy.
pub fn mu_at<T: Real>(
    op: &Operator<T>,
    psi: &TorusFunction<T>,
    nu: &Direction<T>,
    accuracy: T,
    knobs: &CellKnobs,
) -> Result<MuEstimate<T>> {
    let (xi, gap) = match &nu.tag {
        RationalityTag::Rational(xi) => (*xi, T::zero()),
        RationalityTag::Approximated { xi, error } => (*xi, lit(*error)),
        RationalityTag::Irrational => {
            rational_approx_direction(nu, accuracy.max(lit(1e-6)).min(lit(0.49)))?
        }
    };
    let mut k = knobs.clone();
    if k.residual_target.is_none() {
        k.residual_target = Some(to_f64(accuracy) * 0.5);
    }
    let spec = CellSpec { op, psi, xi, tau: Vect::zero(xi.dim), knobs: k };
    let sol = solve_cell(&spec)?;
    let tail = extract_tail(&sol.u)?;
    // heuristic replacement modulus ~ osc(ψ) · (|ξ| |ν − ξ̂|)^{1/2}
    let dir_gap = if gap > T::zero() { gap / xi.norm::<T>() } else { T::zero() };
    let modulus = sol.boundary_osc * (xi.norm::<T>() * dir_gap).min(T::one()).sqrt();
    Ok(MuEstimate {
        tail,
        xi,
        gap,
        uncertainty: tail.residual_osc + modulus,
    })
}

/// Concurrent memo table for m_ξ profiles keyed by a caller-built hash.
#[derive(Default)]
pub struct MProfileCache<T> {
    map: Mutex<HashMap<u64, Arc<ProfileM<T>>>>,
}

impl<T: Real> MProfileCache<T> {
    pub fn new() -> Self {
        MProfileCache { map: Mutex::new(HashMap::new()) }
    }

    pub fn get_or_compute(
        &self,
        key: u64,
        f: impl FnOnce() -> Result<ProfileM<T>>,
    ) -> Result<Arc<ProfileM<T>>> {
        if let Some(p) = self.map.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(f()?);
        self.map.lock().unwrap().insert(key, p.clone());
        Ok(p)
    }
}

/// FNV-1a over a canonical string; used for memo keys and manifests.
pub fn stable_hash(parts: &[String]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for p in parts {
        for b in p.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
