//! The second-cell-problem pipeline: reduced 2-D strip problems W with the
//! projected operator G, directional limits L_ξ(η), and the asymptotic-gap
//! experiment comparing μ along geodesics with L.

use crate::cell::{
    compute_m, extract_tail, mu_at, stable_hash, CellKnobs, MProfileCache, ProfileM, TailEstimate,
};
use crate::error::{Error, Result};
use crate::grid::{assemble, initial_guess, solve, AssembleSpec, BoxGrid, GridFunction, SolveParams};
use crate::homogenize::{envelope_2d, linear_correctors, CorrectorKnobs, EffectiveCache};
use crate::lattice::{geodesic_toward, rational_approx_direction, Direction, LatticeVector, RationalityTag};
use crate::linalg::Vect;
use crate::operators::{project_2d, MatrixField, Operator, Operator2D};
use crate::scalar::{lit, to_f64, Real};

#[derive(Clone, Debug)]
pub struct ReductionKnobs {
    /// lateral mesh: nodes per 1/|ξ| period
    pub nodes_per_period: usize,
    /// strip depth in units of the lateral period
    pub depth_factor: f64,
    pub stencil_order: usize,
    pub frames: usize,
    pub tol_factor: f64,
    pub abs_tol: f64,
    pub max_outer: usize,
    /// re-solve at h/2 and fold the disagreement into the uncertainty
    pub refine_check: bool,
}

impl Default for ReductionKnobs {
    fn default() -> Self {
        ReductionKnobs {
            nodes_per_period: 24,
            depth_factor: 6.0,
            stencil_order: 2,
            frames: 16,
            tol_factor: 1e-8,
            abs_tol: 1e-12,
            max_outer: 100_000,
            refine_check: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DirectionalLimit<T> {
    pub eta: Vect<T>,
    pub value: T,
    /// residual oscillation of the 2-D tail plus refinement disagreement
    pub uncertainty: T,
}

/// Solve the reduced problem G(D²W) = 0 on the upper half plane with
/// boundary W = m(z₁), lateral period 1/|ξ|, and extract its tail.
pub fn solve_w<T: Real>(
    g: &Operator2D<T>,
    m: &ProfileM<T>,
    knobs: &ReductionKnobs,
) -> Result<(GridFunction<T>, TailEstimate<T>)> {
    solve_w_at(g, m, knobs, knobs.nodes_per_period)
}

fn solve_w_at<T: Real>(
    g: &Operator2D<T>,
    m: &ProfileM<T>,
    knobs: &ReductionKnobs,
    nodes_per_period: usize,
) -> Result<(GridFunction<T>, TailEstimate<T>)> {
    let period = m.period;
    let h = period / lit(nodes_per_period as f64);
    let depth = (period * lit(knobs.depth_factor)).max(lit(1.5));
    let lateral = vec![Vect::from_slice(&[period, T::zero()])];
    let normal = Vect::axis(2, 1);
    let grid = BoxGrid::strip(&lateral, &normal, depth, h)?;

    let mean = m.mean();
    let bottom = move |p: &Vect<T>| m.eval(p.get(0));
    let osc = m.max() - m.min();
    let tol = lit::<T>(knobs.abs_tol).max(lit::<T>(knobs.tol_factor) * osc);
    let mut params = SolveParams::with_tol(tol);
    params.max_outer = knobs.max_outer;

    let run = |cap: T, guess: Option<GridFunction<T>>| -> Result<(GridFunction<T>, _)> {
        let top = move |_: &Vect<T>| cap;
        let p = assemble(
            &grid,
            AssembleSpec {
                op: &g.op,
                order: knobs.stencil_order,
                frames: knobs.frames,
                coef_offset: Vect::zero(2),
                coef_scale: T::one(),
                bottom: &bottom,
                top: &top,
                rhs: None,
            },
        )?;
        let guess = guess.or_else(|| {
            let lam = g.op.lambda_ratio().max(T::one());
            let kappa = (T::PI() * lit(2.0)) / (period * lam.sqrt());
            Some(initial_guess(&p, kappa))
        });
        solve(&p, guess, &params)
    };
    let (u1, _) = run(mean, None)?;
    let t1 = extract_tail(&u1)?;
    let mut guess = u1;
    let npl = guess.grid.npl();
    let layers = guess.grid.layers();
    for lat in 0..npl {
        guess.values[(layers - 1) * npl + lat] = t1.mu;
    }
    let (u2, _) = run(t1.mu, Some(guess))?;
    let tail = extract_tail(&u2)?;
    Ok((u2, tail))
}

/// Effective 2-D operator for the reduced problem: exact projection for
/// homogeneous operators, the compressed effective matrix for linear ones,
/// and the affine F̄ envelope otherwise.
pub fn reduced_operator<T: Real>(
    op: &Operator<T>,
    xi: &LatticeVector,
    eta: &Vect<T>,
    m_scale: T,
    corrector: &CorrectorKnobs,
    fbar_cache: Option<&EffectiveCache<T>>,
) -> Result<Operator2D<T>> {
    if op.spatially_homogeneous() {
        return project_2d(op, xi, eta);
    }
    if let Operator::Isaacs(fam) = op {
        if fam.n_min == 1 && fam.n_max == 1 {
            let eff = linear_correctors(&fam.mats[0], fam.lambda, corrector)?;
            let fbar = Operator::linear(MatrixField::Const(eff.a_bar), fam.lambda)?;
            return project_2d(&fbar, xi, eta);
        }
    }
    // nonlinear inhomogeneous: envelope over memoized F̄ queries
    let xh = xi.hat::<T>();
    let period: T = T::one() / xi.norm::<T>();
    let two_pi = T::PI() * lit(2.0);
    let hess_scale = (two_pi / period) * (two_pi / period) * m_scale.max(lit(1e-3));
    let env = envelope_2d(op, eta, &xh, hess_scale, corrector.frames, corrector, fbar_cache)?;
    Ok(Operator2D { xi: *xi, xi_hat: xh, eta: *eta, op: env })
}

/// L_ξ(η): tail of the reduced 2-D problem with boundary profile
/// m_ξ(·; (ψ, F)), solved at two resolutions for an uncertainty estimate.
pub fn l_xi<T: Real>(
    op: &Operator<T>,
    psi: &crate::operators::TorusFunction<T>,
    xi: &LatticeVector,
    eta: &Vect<T>,
    cell_knobs: &CellKnobs,
    red_knobs: &ReductionKnobs,
    m_samples: usize,
    m_cache: Option<&MProfileCache<T>>,
    corrector: &CorrectorKnobs,
    fbar_cache: Option<&EffectiveCache<T>>,
) -> Result<DirectionalLimit<T>> {
    let m = m_profile_cached(op, psi, xi, m_samples, cell_knobs, m_cache)?;
    l_xi_with_profile(op, &m, xi, eta, red_knobs, corrector, fbar_cache)
}

/// L_ξ(η) from an already computed boundary profile.
pub fn l_xi_with_profile<T: Real>(
    op: &Operator<T>,
    m: &ProfileM<T>,
    xi: &LatticeVector,
    eta: &Vect<T>,
    red_knobs: &ReductionKnobs,
    corrector: &CorrectorKnobs,
    fbar_cache: Option<&EffectiveCache<T>>,
) -> Result<DirectionalLimit<T>> {
    let g = reduced_operator(op, xi, eta, m.max() - m.min(), corrector, fbar_cache)?;
    let (_, tail) = solve_w(&g, m, red_knobs)?;
    let mut unc = tail.residual_osc + m.max_residual();
    let mut value = tail.mu;
    if red_knobs.refine_check {
        let (_, fine) = solve_w_at(&g, m, red_knobs, red_knobs.nodes_per_period * 2)?;
        unc = unc + (fine.mu - tail.mu).abs();
        value = fine.mu;
    }
    // maximum principle bound
    let (lo, hi) = (m.min(), m.max());
    if value < lo - unc - lit(1e-9) || value > hi + unc + lit(1e-9) {
        return Err(Error::TailDiagnostic(format!(
            "directional limit {} escapes the profile range [{}, {}]",
            to_f64(value),
            to_f64(lo),
            to_f64(hi)
        )));
    }
    Ok(DirectionalLimit { eta: *eta, value, uncertainty: unc })
}

pub fn m_profile_cached<T: Real>(
    op: &Operator<T>,
    psi: &crate::operators::TorusFunction<T>,
    xi: &LatticeVector,
    n_samples: usize,
    knobs: &CellKnobs,
    cache: Option<&MProfileCache<T>>,
) -> Result<std::sync::Arc<ProfileM<T>>> {
    let key = stable_hash(&[
        format!("{op:?}"),
        format!("{psi:?}"),
        format!("{:?}", xi.comps()),
        format!("{n_samples}"),
        format!("{knobs:?}"),
    ]);
    match cache {
        Some(c) => c.get_or_compute(key, || compute_m(op, psi, xi, n_samples, knobs)),
        None => Ok(std::sync::Arc::new(compute_m(op, psi, xi, n_samples, knobs)?)),
    }
}

/// One row of the asymptotic-gap table along a geodesic ν(t).
#[derive(Clone, Debug)]
pub struct GapRow {
    pub t: f64,
    pub xi_used: Vec<i64>,
    pub gap_to_xi: f64,
    pub mu: f64,
    pub mu_uncertainty: f64,
    pub l_value: f64,
    pub l_uncertainty: f64,
    pub abs_gap: f64,
}

/// μ(ν(t)) along the geodesic toward ξ̂ with initial velocity −η̂, against
/// the fixed directional limit L_ξ(η̂). Approximants that collapse onto the
/// base direction are refined until they resolve ν(t).
pub fn asymptotic_gap<T: Real>(
    op: &Operator<T>,
    psi: &crate::operators::TorusFunction<T>,
    xi: &LatticeVector,
    eta_hat: &Vect<T>,
    t_list: &[f64],
    accuracy: f64,
    cell_knobs: &CellKnobs,
    red_knobs: &ReductionKnobs,
    m_samples: usize,
    m_cache: Option<&MProfileCache<T>>,
    corrector: &CorrectorKnobs,
) -> Result<Vec<GapRow>> {
    let limit = l_xi(
        op, psi, xi, eta_hat, cell_knobs, red_knobs, m_samples, m_cache, corrector, None,
    )?;
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let nu = geodesic_toward(xi, eta_hat, lit::<T>(t))?;
        let nu = resolve_direction(&nu, xi, accuracy)?;
        let est = mu_at(op, psi, &nu, lit(accuracy), cell_knobs)?;
        rows.push(GapRow {
            t,
            xi_used: est.xi.comps().to_vec(),
            gap_to_xi: to_f64(est.gap),
            mu: to_f64(est.tail.mu),
            mu_uncertainty: to_f64(est.uncertainty),
            l_value: to_f64(limit.value),
            l_uncertainty: to_f64(limit.uncertainty),
            abs_gap: (to_f64(est.tail.mu) - to_f64(limit.value)).abs(),
        });
    }
    Ok(rows)
}

/// Directions already carrying a rational tag are used as-is. Otherwise a
/// Dirichlet approximant is taken, shrinking eps until the approximant is
/// not collinear with the base ξ (the low rational wins the absolute
/// Dirichlet criterion for any ν close to it).
pub fn resolve_direction<T: Real>(
    nu: &Direction<T>,
    base_xi: &LatticeVector,
    accuracy: f64,
) -> Result<Direction<T>> {
    match &nu.tag {
        RationalityTag::Rational(_) | RationalityTag::Approximated { .. } => Ok(nu.clone()),
        RationalityTag::Irrational => {
            let base = base_xi.reduced();
            let mut eps = accuracy.clamp(1e-9, 0.4);
            for _ in 0..24 {
                let (xi, gap) = rational_approx_direction(nu, lit::<T>(eps))?;
                let collinear = {
                    let a = xi.reduced();
                    a == base || a.comps().iter().zip(base.comps()).all(|(x, b)| *x == -*b)
                };
                if !collinear {
                    return Ok(Direction {
                        v: nu.v,
                        tag: RationalityTag::Approximated { xi, error: to_f64(gap) },
                    });
                }
                eps *= 0.25;
            }
            Err(Error::Parameter(
                "could not resolve a rational approximant distinct from the base direction".into(),
            ))
        }
    }
}
