//! Effective operators: the ergodic cell problem on the torus (pseudo-time
//! with mean renormalization), linear correctors with the effective matrix,
//! and the interior homogenization rate experiment on slabs.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::grid::{assemble, solve, stencil_offsets, AssembleSpec, BoxGrid, SolveParams};
use crate::linalg::{SymMat, Vect};
use crate::operators::{GameOperator, MatrixField, Operator, TorusFunction};
use crate::scalar::{cnt, lit, to_f64, Real};

#[derive(Clone, Debug)]
pub struct CorrectorKnobs {
    /// nodes per axis; 0 = auto (64 in 2-D, 32 in 3-D)
    pub torus_n: usize,
    /// spread target relative to the operator scale
    pub tol: f64,
    pub max_steps: usize,
    pub stencil_order: usize,
    pub frames: usize,
    /// also run the δ-penalized route (δu + F = const) as a cross-check
    pub delta_path: bool,
    pub warm_start: bool,
}

impl Default for CorrectorKnobs {
    fn default() -> Self {
        CorrectorKnobs {
            torus_n: 0,
            tol: 1e-7,
            max_steps: 200_000,
            stencil_order: 2,
            frames: 16,
            delta_path: false,
            warm_start: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CorrectorSolution<T> {
    pub m: SymMat<T>,
    /// corrector values on the torus grid, v(0) = 0
    pub v: Vec<T>,
    pub torus_n: usize,
    pub fbar: T,
    pub spread: T,
    pub iterations: usize,
    /// −δ·⟨u_δ⟩ when the δ-path cross-check was requested
    pub fbar_delta: Option<T>,
}

struct TorusScheme<T> {
    dim: usize,
    n: usize,
    nodes: usize,
    dirs: Vec<[i32; 3]>,
    game: GameOperator<T>,
    /// per class, per control: (stencil weights, offset −Tr(A M))
    classes: Vec<Vec<(Vec<T>, T)>>,
    class_of: Vec<u32>,
    tau: T,
}

impl<T: Real> TorusScheme<T> {
    fn build(op: &Operator<T>, m: &SymMat<T>, n: usize, knobs: &CorrectorKnobs) -> Result<Self> {
        let dim = op.dim();
        let game = op.as_game(knobs.frames)?;
        let mut order = knobs.stencil_order.clamp(1, 3);
        let (dirs, ws) = loop {
            let dirs = stencil_offsets(dim, order);
            let h = T::one() / cnt::<T>(n);
            let ws: Vec<Vect<T>> = dirs
                .iter()
                .map(|o| {
                    let mut w = Vect::zero(dim);
                    for i in 0..dim {
                        w.set(i, lit::<T>(o[i] as f64) * h);
                    }
                    w
                })
                .collect();
            // probe decomposability on a sample of coefficient values
            let mut ok = true;
            'probe: for k in 0..(4usize.pow(dim as u32)) {
                let mut y = Vect::zero(dim);
                let mut rem = k;
                for i in 0..dim {
                    y.set(i, cnt::<T>(rem % 4) / cnt(4));
                    rem /= 4;
                }
                for c in &game.controls {
                    if crate::grid::decompose_raw(&c.mat.eval(&y), &ws).is_err() {
                        ok = false;
                        break 'probe;
                    }
                }
            }
            if ok || order == 3 {
                break (dirs, ws);
            }
            order += 1;
        };

        let nodes = n.pow(dim as u32);
        let mut classes: Vec<Vec<(Vec<T>, T)>> = Vec::new();
        let mut index: HashMap<u64, u32> = HashMap::new();
        let mut class_of = vec![0u32; nodes];
        for node in 0..nodes {
            let y = torus_pos::<T>(node, n, dim);
            let mats: Vec<SymMat<T>> = game.controls.iter().map(|c| c.mat.eval(&y)).collect();
            let mut h = 0xcbf29ce484222325u64;
            for mm in &mats {
                for i in 0..mm.dim {
                    for j in i..mm.dim {
                        let q = (to_f64(mm.get(i, j)) * 1e12).round() as i64;
                        for b in q.to_le_bytes() {
                            h ^= b as u64;
                            h = h.wrapping_mul(0x100000001b3);
                        }
                    }
                }
            }
            let id = if let Some(&id) = index.get(&h) {
                id
            } else {
                let mut per = Vec::with_capacity(mats.len());
                for (ci, a) in mats.iter().enumerate() {
                    let w = crate::grid::decompose_raw(a, &ws).map_err(|e| match e {
                        Error::ConeViolation { residual } => Error::Monotonicity {
                            node: [node % n, (node / n) % n, node / (n * n)],
                            control: ci,
                            residual,
                            order,
                        },
                        other => other,
                    })?;
                    let off = -a.frobenius_inner(m) + game.controls[ci].offset;
                    per.push((w, off));
                }
                let id = classes.len() as u32;
                classes.push(per);
                index.insert(h, id);
                id
            };
            class_of[node] = id;
        }
        // explicit-step stability: τ · max Σ 2λ ≤ 0.9
        let mut max_diag = T::zero();
        for cl in &classes {
            for (w, _) in cl {
                let s = w.iter().fold(T::zero(), |s, v| s + *v) * lit(2.0);
                max_diag = max_diag.max(s);
            }
        }
        Ok(TorusScheme {
            dim,
            n,
            nodes,
            dirs,
            game,
            classes,
            class_of,
            tau: lit::<T>(0.9) / max_diag.max(T::epsilon()),
        })
    }

    #[inline]
    fn neighbor(&self, node: usize, off: &[i32; 3], sign: i32) -> usize {
        let n = self.n as i64;
        let mut c = [0i64; 3];
        let mut rem = node;
        for ci in c.iter_mut().take(self.dim) {
            *ci = (rem % self.n) as i64;
            rem /= self.n;
        }
        let mut idx = 0usize;
        let mut stride = 1usize;
        for i in 0..self.dim {
            let v = (c[i] + (sign * off[i]) as i64).rem_euclid(n) as usize;
            idx += v * stride;
            stride *= self.n;
        }
        idx
    }

    /// F_h(M + D²u, y) at every node
    fn field(&self, u: &[T], out: &mut [T]) {
        let nd = self.dirs.len();
        let mut d = vec![T::zero(); nd];
        let mut vals = vec![T::zero(); self.game.controls.len()];
        for node in 0..self.nodes {
            let u0 = u[node];
            for (di, off) in self.dirs.iter().enumerate() {
                let up = u[self.neighbor(node, off, 1)];
                let dn = u[self.neighbor(node, off, -1)];
                d[di] = lit::<T>(2.0) * u0 - up - dn;
            }
            let cl = &self.classes[self.class_of[node] as usize];
            for (k, (w, off)) in cl.iter().enumerate() {
                let mut s = *off;
                for (we, de) in w.iter().zip(d.iter()) {
                    s += *we * *de;
                }
                vals[k] = s;
            }
            out[node] = self.game.tree.fold(&vals).0;
        }
    }
}

fn torus_pos<T: Real>(node: usize, n: usize, dim: usize) -> Vect<T> {
    let mut y = Vect::zero(dim);
    let mut rem = node;
    for i in 0..dim {
        y.set(i, cnt::<T>(rem % n) / cnt(n));
        rem /= n;
    }
    y
}

fn default_n(dim: usize, requested: usize) -> usize {
    if requested > 0 {
        requested
    } else if dim == 2 {
        64
    } else {
        32
    }
}

/// Solve the ergodic cell problem F(M + D²v, y) = F̄(M) by pseudo-time
/// iteration with mean renormalization; stops when the spread of
/// F(M + D²_h u, ·) falls below the tolerance.
pub fn effective_operator<T: Real>(
    op: &Operator<T>,
    m: &SymMat<T>,
    knobs: &CorrectorKnobs,
) -> Result<CorrectorSolution<T>> {
    effective_operator_with_start(op, m, knobs, None)
}

pub fn effective_operator_with_start<T: Real>(
    op: &Operator<T>,
    m: &SymMat<T>,
    knobs: &CorrectorKnobs,
    start: Option<Vec<T>>,
) -> Result<CorrectorSolution<T>> {
    if m.dim != op.dim() {
        return Err(Error::Dimension { expected: op.dim(), got: m.dim });
    }
    // spatially homogeneous operators have v ≡ 0 and F̄ = F exactly
    let n = default_n(op.dim(), knobs.torus_n);
    if op.spatially_homogeneous() && start.is_none() {
        let fbar = op.eval(m, &Vect::zero(op.dim()))?;
        return Ok(CorrectorSolution {
            m: *m,
            v: vec![T::zero(); n.pow(op.dim() as u32)],
            torus_n: n,
            fbar,
            spread: T::zero(),
            iterations: 0,
            fbar_delta: None,
        });
    }

    let scale = (T::one() + m.norm_inf()) * op.lambda_ratio();
    let tol = lit::<T>(knobs.tol) * scale;

    let mut u: Vec<T>;
    if let Some(s) = start {
        if s.len() != n.pow(op.dim() as u32) {
            return Err(Error::Parameter("corrector start vector has wrong length".into()));
        }
        u = s;
    } else if knobs.warm_start && n >= 32 {
        // coarse-grid warm start, prolonged periodically
        let mut coarse_knobs = knobs.clone();
        coarse_knobs.torus_n = n / 2;
        coarse_knobs.warm_start = n / 2 >= 32;
        coarse_knobs.delta_path = false;
        let coarse = effective_operator(op, m, &coarse_knobs)?;
        u = prolong_periodic(&coarse.v, n / 2, n, op.dim());
    } else {
        u = vec![T::zero(); n.pow(op.dim() as u32)];
    }

    let scheme = TorusScheme::build(op, m, n, knobs)?;
    let mut f = vec![T::zero(); scheme.nodes];
    let mut spread;
    let mut mean;
    let mut iterations = 0usize;
    loop {
        scheme.field(&u, &mut f);
        mean = f.iter().copied().sum::<T>() / cnt(scheme.nodes);
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for v in &f {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        spread = hi - lo;
        if spread <= tol || iterations >= knobs.max_steps {
            break;
        }
        iterations += 1;
        for (uv, fv) in u.iter_mut().zip(f.iter()) {
            *uv = *uv - scheme.tau * (*fv - mean);
        }
        // mean-zero renormalization
        let um = u.iter().copied().sum::<T>() / cnt(scheme.nodes);
        for uv in u.iter_mut() {
            *uv -= um;
        }
    }
    if spread > tol {
        return Err(Error::NonConverged {
            residual: to_f64(spread),
            iterations,
            tol: to_f64(tol),
        });
    }
    let v0 = u[0];
    for uv in u.iter_mut() {
        *uv -= v0;
    }

    let fbar_delta = if knobs.delta_path {
        Some(delta_penalized_fbar(&scheme, knobs)?)
    } else {
        None
    };

    Ok(CorrectorSolution {
        m: *m,
        v: u,
        torus_n: n,
        fbar: mean,
        spread,
        iterations,
        fbar_delta,
    })
}

/// δ-penalized route: iterate u ← u − τ(δu + F_h(M + D²u, ·)) with the mean
/// mode pinned analytically (⟨u⟩ = −⟨F_h⟩/δ, since constants do not move
/// F_h); then F̄ ≈ −δ⟨u⟩.
fn delta_penalized_fbar<T: Real>(scheme: &TorusScheme<T>, knobs: &CorrectorKnobs) -> Result<T> {
    let delta = lit::<T>(1e-2);
    let mut u = vec![T::zero(); scheme.nodes];
    let mut f = vec![T::zero(); scheme.nodes];
    let tau = scheme.tau / (T::one() + delta * scheme.tau);
    let nodes = cnt::<T>(scheme.nodes);
    let scale = lit::<T>(knobs.tol * 10.0);
    let mut res = T::infinity();
    let mut it = 0usize;
    while it < knobs.max_steps {
        scheme.field(&u, &mut f);
        let mean_f = f.iter().copied().sum::<T>() / nodes;
        let mean_u = u.iter().copied().sum::<T>() / nodes;
        let shift = -mean_f / delta - mean_u;
        for uv in u.iter_mut() {
            *uv += shift;
        }
        res = T::zero();
        for (uv, fv) in u.iter().zip(f.iter()) {
            res = res.max((delta * *uv + *fv).abs());
        }
        if res <= scale {
            break;
        }
        for (uv, fv) in u.iter_mut().zip(f.iter()) {
            *uv = *uv - tau * (delta * *uv + *fv);
        }
        it += 1;
    }
    if res > scale {
        return Err(Error::NonConverged { residual: to_f64(res), iterations: it, tol: knobs.tol * 10.0 });
    }
    let um = u.iter().copied().sum::<T>() / nodes;
    Ok(-delta * um)
}

fn prolong_periodic<T: Real>(coarse: &[T], nc: usize, nf: usize, dim: usize) -> Vec<T> {
    let nodes = nf.pow(dim as u32);
    let mut out = vec![T::zero(); nodes];
    let g = TorusFunction::Grid {
        dim,
        n: [nc, nc, nc],
        values: coarse.to_vec(),
    };
    for (node, o) in out.iter_mut().enumerate() {
        *o = g.eval(&torus_pos::<T>(node, nf, dim));
    }
    out
}

/// Effective matrix of a linear operator −Tr(A(y) D²·) with its correctors.
#[derive(Clone, Debug)]
pub struct LinearEffective<T> {
    pub a_bar: SymMat<T>,
    pub correctors: Vec<CorrectorSolution<T>>,
}

pub fn linear_correctors<T: Real>(
    a: &MatrixField<T>,
    lambda: T,
    knobs: &CorrectorKnobs,
) -> Result<LinearEffective<T>> {
    let d = a.dim();
    let op = Operator::linear(a.clone(), lambda)?;
    let mut a_bar = SymMat::zero(d);
    let mut correctors = Vec::new();
    for i in 0..d {
        for j in i..d {
            let mut m = SymMat::zero(d);
            if i == j {
                m.set(i, i, T::one());
            } else {
                m.set(i, j, lit(0.5));
            }
            let sol = effective_operator(&op, &m, knobs)?;
            a_bar.set(i, j, -sol.fbar);
            correctors.push(sol);
        }
    }
    // Id ≤ Ā ≤ Λ·Id
    let e = a_bar.eigenvalues();
    if e[0] < T::one() - lit(1e-6) || *e.last().unwrap() > lambda + lit(1e-6) {
        return Err(Error::EllipticityWitness(format!(
            "effective matrix eigenvalues {:?} outside [1, {}]",
            e.iter().map(|v| to_f64(*v)).collect::<Vec<_>>(),
            to_f64(lambda)
        )));
    }
    Ok(LinearEffective { a_bar, correctors })
}

/// One row of the interior homogenization rate sweep.
#[derive(Clone, Debug)]
pub struct RateRow {
    pub eps: f64,
    pub h: f64,
    pub sup_err: f64,
}

/// Slab experiment 0 < x·e_d < R with oscillating coefficients A(x/ε)
/// against the homogenized solve with Ā; emits sup-errors per ε and lets
/// the caller fit the slope. Requires 1/ε ∈ N so the coefficient shares the
/// unit lateral period.
pub fn interior_rate_experiment<T: Real>(
    op: &Operator<T>,
    g_bottom: &TorusFunction<T>,
    g_top: &TorusFunction<T>,
    depth: T,
    eps_list: &[f64],
    cells_per_eps: usize,
    knobs: &CorrectorKnobs,
) -> Result<Vec<RateRow>> {
    let d = op.dim();
    if d != 2 {
        return Err(Error::Unsupported("interior rate experiment is implemented for d = 2".into()));
    }
    // effective operator for the comparison solve
    let op_bar: Operator<T> = if op.spatially_homogeneous() {
        op.clone()
    } else if let Operator::Isaacs(fam) = op {
        if fam.n_min == 1 && fam.n_max == 1 {
            let eff = linear_correctors(&fam.mats[0], fam.lambda, knobs)?;
            Operator::linear(MatrixField::Const(eff.a_bar), fam.lambda)?
        } else {
            return Err(Error::Unsupported(
                "interior rate experiment needs a linear or homogeneous operator".into(),
            ));
        }
    } else {
        return Err(Error::Unsupported(
            "interior rate experiment needs a linear or homogeneous operator".into(),
        ));
    };

    let mut rows = Vec::new();
    for &eps in eps_list {
        let inv = (1.0 / eps).round();
        if (inv - 1.0 / eps).abs() > 1e-9 {
            return Err(Error::Parameter(format!("1/ε must be an integer, got ε = {eps}")));
        }
        let h = eps / cells_per_eps as f64;
        let lateral = vec![Vect::from_f64s(&[1.0, 0.0])];
        let normal = Vect::axis(2, 1);
        let grid = BoxGrid::strip(&lateral, &normal, depth, lit(h))?;
        let bottom = |p: &Vect<T>| g_bottom.eval(p);
        let top = |p: &Vect<T>| g_top.eval(p);
        let mk = |o: &Operator<T>, scale: T| -> Result<crate::grid::GridFunction<T>> {
            let p = assemble(
                &grid,
                AssembleSpec {
                    op: o,
                    order: knobs.stencil_order,
                    frames: knobs.frames,
                    coef_offset: Vect::zero(2),
                    coef_scale: scale,
                    bottom: &bottom,
                    top: &top,
                    rhs: None,
                },
            )?;
            let osc = p.data_osc.max(lit(1e-6));
            let params = SolveParams::with_tol(osc * lit(1e-9));
            Ok(solve(&p, None, &params)?.0)
        };
        let u_eps = mk(op, T::one() / lit(eps))?;
        let u_bar = mk(&op_bar, T::one())?;
        let mut sup = T::zero();
        for (a, b) in u_eps.values.iter().zip(u_bar.values.iter()) {
            sup = sup.max((*a - *b).abs());
        }
        rows.push(RateRow { eps, h, sup_err: to_f64(sup) });
    }
    Ok(rows)
}

/// Concurrent memo for F̄ point queries keyed by quantized matrices.
#[derive(Default)]
pub struct EffectiveCache<T> {
    map: Mutex<HashMap<u64, T>>,
}

impl<T: Real> EffectiveCache<T> {
    pub fn new() -> Self {
        EffectiveCache { map: Mutex::new(HashMap::new()) }
    }

    fn key(m: &SymMat<T>) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for i in 0..m.dim {
            for j in i..m.dim {
                let q = (to_f64(m.get(i, j)) * 1e12).round() as i64;
                for b in q.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}

/// Pointwise F̄(M): exact evaluation for homogeneous operators, memoized
/// corrector solves otherwise.
pub fn effective_value<T: Real>(
    op: &Operator<T>,
    m: &SymMat<T>,
    knobs: &CorrectorKnobs,
    cache: Option<&EffectiveCache<T>>,
) -> Result<T> {
    if op.spatially_homogeneous() {
        return op.eval(m, &Vect::zero(op.dim()));
    }
    if let Some(c) = cache {
        let k = EffectiveCache::key(m);
        if let Some(v) = c.map.lock().unwrap().get(&k) {
            return Ok(*v);
        }
        let v = effective_operator(op, m, knobs)?.fbar;
        c.map.lock().unwrap().insert(k, v);
        return Ok(v);
    }
    Ok(effective_operator(op, m, knobs)?.fbar)
}

/// Min–max affine envelope of F̄ restricted to the (η, ξ̂)-plane, built from
/// memoized F̄ queries on a probe set of 2-D Hessians scaled by `scale`.
/// The envelope touches F̄ at every probe and stays uniformly elliptic.
pub fn envelope_2d<T: Real>(
    op: &Operator<T>,
    eta: &Vect<T>,
    xi_hat: &Vect<T>,
    scale: T,
    frames: usize,
    knobs: &CorrectorKnobs,
    cache: Option<&EffectiveCache<T>>,
) -> Result<Operator<T>> {
    let lambda = op.lambda_ratio();
    let frame_mats = crate::operators::pucci_frame_family::<T>(2, T::one(), lambda, frames);
    let mut probes: Vec<SymMat<T>> = vec![SymMat::zero(2)];
    let shapes: [[f64; 3]; 7] = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
        [1.0, 0.0, 1.0],
        [-1.0, 0.0, -1.0],
        [0.0, 1.0, 0.0],
    ];
    for mag in [0.5, 1.0, 2.0] {
        for sh in shapes {
            let mut n = SymMat::zero(2);
            n.set(0, 0, lit::<T>(sh[0] * mag) * scale);
            n.set(0, 1, lit::<T>(sh[1] * mag) * scale);
            n.set(1, 1, lit::<T>(sh[2] * mag) * scale);
            probes.push(n);
        }
    }
    let mut groups = Vec::with_capacity(probes.len());
    for nk in &probes {
        let mk = crate::operators::embed_2d(nk, eta, xi_hat);
        let fk = effective_value(op, &mk, knobs, cache)?;
        let mut members = Vec::with_capacity(frame_mats.len());
        for b in &frame_mats {
            members.push((*b, fk + b.frobenius_inner(nk)));
        }
        groups.push(members);
    }
    Ok(Operator::Envelope { dim: 2, groups, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_operator_is_exact() {
        let op = Operator::<f64>::pucci_plus(2, 1.0, 2.0);
        let m = SymMat::from_rows(&[&[1.0, 0.5], &[0.5, -2.0]]).unwrap();
        let sol = effective_operator(&op, &m, &CorrectorKnobs::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.fbar, op.eval(&m, &Vect::zero(2)).unwrap());
        assert!(sol.v.iter().all(|v| *v == 0.0));
    }

    fn layered() -> MatrixField<f64> {
        // sin(2πy₁) = cos(2πy₁ − π/2)
        let a = TorusFunction::cosine(2, 1.0, &[1, 0], -std::f64::consts::FRAC_PI_2)
            .shift_const(2.0);
        MatrixField::isotropic(a)
    }

    #[test]
    fn layered_linear_effective_matrix() {
        let knobs = CorrectorKnobs { torus_n: 48, tol: 1e-8, ..Default::default() };
        let eff = linear_correctors(&layered(), 3.0, &knobs).unwrap();
        // nondivergence layered medium: the 1-D corrector compensates every
        // matrix direction through y₁, so Ā = h_a·Id with the harmonic-type
        // mean h_a = 1/⟨1/a⟩ = √3 (quadrature oracle)
        let h = 3f64.sqrt();
        assert!(
            (eff.a_bar.get(0, 0) - h).abs() < 0.01 * h,
            "Ā₁₁ = {}",
            eff.a_bar.get(0, 0)
        );
        assert!((eff.a_bar.get(0, 1)).abs() < 1e-3);
        assert!((eff.a_bar.get(1, 1) - h).abs() < 0.01 * h, "Ā₂₂ = {}", eff.a_bar.get(1, 1));
    }

    #[test]
    fn effective_value_homogeneity() {
        let op = Operator::linear(layered(), 3.0).unwrap();
        let knobs = CorrectorKnobs { torus_n: 32, tol: 1e-7, ..Default::default() };
        let m = SymMat::from_rows(&[&[1.0, 0.2], &[0.2, 0.5]]).unwrap();
        let f1 = effective_value(&op, &m, &knobs, None).unwrap();
        let f2 = effective_value(&op, &m.scale(2.0), &knobs, None).unwrap();
        assert!((f2 - 2.0 * f1).abs() < 1e-4 * (1.0 + f1.abs()), "{f2} vs 2·{f1}");
    }

    #[test]
    fn two_starts_agree() {
        use rand::{Rng, SeedableRng};
        let op = Operator::linear(layered(), 3.0).unwrap();
        let knobs = CorrectorKnobs { torus_n: 32, tol: 1e-8, warm_start: false, ..Default::default() };
        let m = SymMat::identity(2);
        let n = 32 * 32;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            v
        };
        let s1 = effective_operator_with_start(&op, &m, &knobs, Some(mk(&mut rng))).unwrap();
        let s2 = effective_operator_with_start(&op, &m, &knobs, Some(mk(&mut rng))).unwrap();
        assert!((s1.fbar - s2.fbar).abs() <= 2.0 * 1e-8 * 4.0 * 2.0, "{} vs {}", s1.fbar, s2.fbar);
    }

    #[test]
    fn delta_path_cross_check() {
        let op = Operator::linear(layered(), 3.0).unwrap();
        let knobs = CorrectorKnobs {
            torus_n: 32,
            tol: 1e-7,
            delta_path: true,
            warm_start: false,
            ..Default::default()
        };
        let sol = effective_operator(&op, &SymMat::identity(2), &knobs).unwrap();
        let fd = sol.fbar_delta.unwrap();
        assert!((sol.fbar - fd).abs() < 0.05 * sol.fbar.abs(), "{} vs {fd}", sol.fbar);
    }
}
