//! Monotone wide-stencil finite differences on lateral-periodic strips with
//! Dirichlet faces, solved by Howard policy iteration with damped
//! Gauss–Seidel sweeps and a pseudo-time fallback.

use std::collections::HashMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{nnls, SymMat, Vect};
use crate::operators::{GameOperator, Operator};
use crate::scalar::{cnt, lit, to_f64, Real};

/// Structured box grid. Lateral axes are periodic with `n[i]` nodes; the
/// normal axis (index `dim−1`) has `n` cells, node layers 0..=n with both
/// extreme layers holding Dirichlet data.
#[derive(Clone, Debug)]
pub struct BoxGrid<T> {
    pub dim: usize,
    pub n: [usize; 3],
    pub steps: [Vect<T>; 3],
    pub origin: Vect<T>,
}

impl<T: Real> BoxGrid<T> {
    /// Strip spanned by lateral vectors (periodic cell) and a normal depth.
    pub fn strip(lateral: &[Vect<T>], normal_hat: &Vect<T>, depth: T, h: T) -> Result<Self> {
        let dim = lateral.len() + 1;
        if !(2..=3).contains(&dim) {
            return Err(Error::Dimension { expected: 3, got: dim });
        }
        let mut n = [0usize; 3];
        let mut steps = [Vect::zero(normal_hat.dim); 3];
        for (i, f) in lateral.iter().enumerate() {
            let len = f.norm();
            let ni = (to_f64(len / h)).round().max(1.0) as usize;
            if ni < 4 {
                // very short lateral extents still need a sane cell count
                n[i] = 4.max(ni);
            } else {
                n[i] = ni;
            }
            steps[i] = f.scale(T::one() / cnt(n[i]));
        }
        let ns = (to_f64(depth / h)).round() as usize;
        if ns < 4 {
            return Err(Error::Parameter(format!(
                "degenerate strip: depth {depth:.4} under 4 mesh cells at h = {h:.4}"
            )));
        }
        n[dim - 1] = ns;
        steps[dim - 1] = normal_hat.scale(depth / cnt(ns));
        Ok(BoxGrid { dim, n, steps, origin: Vect::zero(normal_hat.dim) })
    }

    pub fn lateral_axes(&self) -> usize {
        self.dim - 1
    }

    /// nodes per lateral layer
    pub fn npl(&self) -> usize {
        match self.dim {
            2 => self.n[0],
            _ => self.n[0] * self.n[1],
        }
    }

    pub fn layers(&self) -> usize {
        self.n[self.dim - 1] + 1
    }

    pub fn node_count(&self) -> usize {
        self.npl() * self.layers()
    }

    pub fn lat_coords(&self, lat: usize) -> [usize; 2] {
        match self.dim {
            2 => [lat, 0],
            _ => [lat % self.n[0], lat / self.n[0]],
        }
    }

    pub fn position(&self, lat: usize, layer: usize) -> Vect<T> {
        let lc = self.lat_coords(lat);
        let mut p = self.origin;
        p = p.add(&self.steps[0].scale(cnt(lc[0])));
        if self.dim == 3 {
            p = p.add(&self.steps[1].scale(cnt(lc[1])));
        }
        p.add(&self.steps[self.dim - 1].scale(cnt(layer)))
    }

    /// physical displacement of a stencil offset
    pub fn displacement(&self, off: &[i32; 3]) -> Vect<T> {
        let mut w = Vect::zero(self.steps[0].dim);
        for (i, &o) in off.iter().enumerate().take(self.dim) {
            if o != 0 {
                w = w.add(&self.steps[i].scale(lit(o as f64)));
            }
        }
        w
    }

    pub fn normal_step(&self) -> T {
        self.steps[self.dim - 1].norm()
    }
}

/// Grid function stored over every node layer (Dirichlet layers included).
#[derive(Clone, Debug)]
pub struct GridFunction<T> {
    pub grid: BoxGrid<T>,
    pub values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn value(&self, lat: usize, layer: usize) -> T {
        self.values[layer * self.grid.npl() + lat]
    }

    /// (mean, min, max) per normal layer.
    pub fn layer_stats(&self) -> Vec<(T, T, T)> {
        let npl = self.grid.npl();
        (0..self.grid.layers())
            .map(|c| {
                let s = &self.values[c * npl..(c + 1) * npl];
                let mut mean = T::zero();
                let mut lo = T::infinity();
                let mut hi = T::neg_infinity();
                for v in s {
                    mean += *v;
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                }
                (mean / cnt(npl), lo, hi)
            })
            .collect()
    }

    /// max − min over the lateral slice nearest to normal coordinate s.
    pub fn slice_osc(&self, s: T) -> T {
        let hs = self.grid.normal_step();
        let c = (to_f64(s / hs)).round().max(0.0) as usize;
        let c = c.min(self.grid.layers() - 1);
        let st = self.layer_stats();
        st[c].2 - st[c].1
    }

    /// Snapshot export: flat little-endian f64 binary, a JSON header with
    /// dims/steps, and an RFC-4180 CSV of (lat indices, layer, value).
    pub fn write_snapshot(&self, dir: &std::path::Path, name: &str) -> Result<()> {
        use std::io::Write;
        std::fs::create_dir_all(dir)?;
        let bin = dir.join(format!("{name}.f64le"));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&bin)?);
        for v in &self.values {
            w.write_all(&to_f64(*v).to_le_bytes())?;
        }
        w.flush()?;
        let header = serde_json::json!({
            "dims": self.grid.n[..self.grid.dim],
            "layers": self.grid.layers(),
            "nodes_per_layer": self.grid.npl(),
            "steps": (0..self.grid.dim).map(|i| self.grid.steps[i].to_f64s()).collect::<Vec<_>>(),
            "origin": self.grid.origin.to_f64s(),
            "byte_order": "little-endian f64, lateral index fastest, layer slowest",
        });
        std::fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&header).unwrap())?;
        let mut csv = csv::Writer::from_path(dir.join(format!("{name}.csv"))).map_err(csv_err)?;
        csv.write_record(["i", "j", "layer", "value"]).map_err(csv_err)?;
        let npl = self.grid.npl();
        for layer in 0..self.grid.layers() {
            for lat in 0..npl {
                let lc = self.grid.lat_coords(lat);
                csv.write_record(&[
                    lc[0].to_string(),
                    lc[1].to_string(),
                    layer.to_string(),
                    format!("{}", to_f64(self.value(lat, layer))),
                ])
                .map_err(csv_err)?;
            }
        }
        csv.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// Symmetric stencil offsets (canonical up to sign) for a given order:
/// 1 = axes, 2 = + face diagonals (and body diagonals in 3-D), 3 = + knight
/// moves in coordinate planes.
pub fn stencil_offsets(dim: usize, order: usize) -> Vec<[i32; 3]> {
    let mut out: Vec<[i32; 3]> = Vec::new();
    let mut push = |o: [i32; 3]| {
        // canonical sign: first nonzero component positive
        let mut c = o;
        for v in c.iter() {
            if *v != 0 {
                if *v < 0 {
                    for x in c.iter_mut() {
                        *x = -*x;
                    }
                }
                break;
            }
        }
        if !out.contains(&c) {
            out.push(c);
        }
    };
    for i in 0..dim {
        let mut o = [0i32; 3];
        o[i] = 1;
        push(o);
    }
    if order >= 2 {
        for i in 0..dim {
            for j in (i + 1)..dim {
                for s in [1i32, -1] {
                    let mut o = [0i32; 3];
                    o[i] = 1;
                    o[j] = s;
                    push(o);
                }
            }
        }
        if dim == 3 && order >= 2 {
            for s1 in [1i32, -1] {
                for s2 in [1i32, -1] {
                    push([1, s1, s2]);
                }
            }
        }
    }
    if order >= 3 {
        for i in 0..dim {
            for j in 0..dim {
                if i == j {
                    continue;
                }
                for s in [1i32, -1] {
                    let mut o = [0i32; 3];
                    o[i] = 2;
                    o[j] = s;
                    push(o);
                }
            }
        }
    }
    out
}

/// Nonnegative decomposition A = Σ_e λ_e ê⊗ê over unit stencil directions.
/// Returns the minimum-norm exact weights; cone violations report the
/// least-squares residual.
pub fn decompose_diffusion<T: Real>(a: &SymMat<T>, dirs: &[Vect<T>]) -> Result<Vec<T>> {
    let unit: Vec<Vect<T>> = dirs.iter().map(|d| d.normalize()).collect::<Result<_>>()?;
    decompose_raw(a, &unit)
}

/// Same as `decompose_diffusion` but with non-normalized displacement
/// vectors: A = Σ_e λ_e w_e ⊗ w_e.
pub fn decompose_raw<T: Real>(a: &SymMat<T>, ws: &[Vect<T>]) -> Result<Vec<T>> {
    let d = a.dim;
    let m = d * (d + 1) / 2;
    // isometric embedding of symmetric matrices: off-diagonals scaled by √2
    let sqrt2 = lit::<T>(2.0).sqrt();
    let flat = |s: &SymMat<T>| -> Vec<T> {
        let mut v = Vec::with_capacity(m);
        for i in 0..d {
            for j in i..d {
                v.push(if i == j { s.get(i, j) } else { s.get(i, j) * sqrt2 });
            }
        }
        v
    };
    let cols: Vec<Vec<T>> = ws.iter().map(|w| flat(&SymMat::outer(w))).collect();
    let b = flat(a);
    let (x, rnorm) = nnls(&cols, &b, 200);
    let tol = lit::<T>(1e-9) * a.frobenius_norm().max(T::one());
    if rnorm > tol {
        // report nearest representable matrix distance
        return Err(Error::ConeViolation { residual: to_f64(rnorm) });
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceSide {
    Bottom,
    Top,
}

/// Discretized problem on a strip: monotone stencil weights per control,
/// Dirichlet data on the normal faces, periodic lateral identification.
pub struct DiscreteProblem<T> {
    pub grid: BoxGrid<T>,
    pub dirs: Vec<[i32; 3]>,
    pub order: usize,
    pub game: GameOperator<T>,
    weights: WeightStore<T>,
    /// wrapped lateral neighbor index per (dir, sign, lat)
    lat_lut: Vec<[Vec<u32>; 2]>,
    pub bottom: Vec<T>,
    pub top: Vec<T>,
    /// boundary values at fractional arm crossings: keyed (dir, layer, side)
    crossings: HashMap<(usize, usize, u8), Vec<T>>,
    pub rhs: Option<Vec<T>>,
    pub data_osc: T,
}

enum WeightStore<T> {
    Shared(Vec<Vec<T>>),
    PerNode { class_of_interior: Vec<u32>, classes: Vec<Vec<Vec<T>>> },
}

impl<T: Real> DiscreteProblem<T> {
    #[inline]
    fn weights_at(&self, interior_idx: usize, ctrl: usize) -> &[T] {
        match &self.weights {
            WeightStore::Shared(w) => &w[ctrl],
            WeightStore::PerNode { class_of_interior, classes } => {
                &classes[class_of_interior[interior_idx] as usize][ctrl]
            }
        }
    }

    pub fn n_controls(&self) -> usize {
        self.game.controls.len()
    }
}

pub struct AssembleSpec<'a, T> {
    pub op: &'a Operator<T>,
    pub order: usize,
    pub frames: usize,
    /// coefficients evaluated at (position · coef_scale + coef_offset)
    pub coef_offset: Vect<T>,
    pub coef_scale: T,
    pub bottom: &'a dyn Fn(&Vect<T>) -> T,
    pub top: &'a dyn Fn(&Vect<T>) -> T,
    pub rhs: Option<&'a dyn Fn(&Vect<T>) -> T>,
}

/// Build the monotone discrete operator, raising the stencil order (up to 3)
/// until every control matrix decomposes over the direction cone.
pub fn assemble<T: Real>(grid: &BoxGrid<T>, spec: AssembleSpec<'_, T>) -> Result<DiscreteProblem<T>> {
    let mut order = spec.order.clamp(1, 3);
    loop {
        match assemble_at_order(grid, &spec, order) {
            Ok(p) => return Ok(p),
            Err(Error::ConeViolation { residual }) if order < 3 => {
                let _ = residual;
                order += 1;
            }
            Err(Error::Monotonicity { node, control, residual, .. }) if order < 3 => {
                let _ = (node, control, residual);
                order += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn assemble_at_order<T: Real>(
    grid: &BoxGrid<T>,
    spec: &AssembleSpec<'_, T>,
    order: usize,
) -> Result<DiscreteProblem<T>> {
    let game = spec.op.as_game(spec.frames)?;
    if game.dim != grid.dim {
        return Err(Error::Dimension { expected: grid.dim, got: game.dim });
    }
    let dirs = stencil_offsets(grid.dim, order);
    let ws: Vec<Vect<T>> = dirs.iter().map(|o| grid.displacement(o)).collect();
    let npl = grid.npl();
    let ns = grid.n[grid.dim - 1];

    // lateral wrap tables
    let mut lat_lut: Vec<[Vec<u32>; 2]> = Vec::with_capacity(dirs.len());
    for off in &dirs {
        let mut plus = vec![0u32; npl];
        let mut minus = vec![0u32; npl];
        for lat in 0..npl {
            let lc = grid.lat_coords(lat);
            let wrap = |x: i64, n: usize| -> usize { (x.rem_euclid(n as i64)) as usize };
            let tgt = |sign: i64| -> usize {
                let i = wrap(lc[0] as i64 + sign * off[0] as i64, grid.n[0]);
                if grid.dim == 2 {
                    i
                } else {
                    let j = wrap(lc[1] as i64 + sign * off[1] as i64, grid.n[1]);
                    i + j * grid.n[0]
                }
            };
            plus[lat] = tgt(1) as u32;
            minus[lat] = tgt(-1) as u32;
        }
        lat_lut.push([plus, minus]);
    }

    // stencil weights per control
    let consts_only = game.controls.iter().all(|c| c.mat.is_const());
    let weights = if consts_only {
        let mut shared = Vec::with_capacity(game.controls.len());
        for (ci, c) in game.controls.iter().enumerate() {
            let a = c.mat.eval(&Vect::zero(grid.dim));
            match decompose_raw(&a, &ws) {
                Ok(w) => shared.push(w),
                Err(Error::ConeViolation { residual }) => {
                    return Err(Error::Monotonicity { node: [0, 0, 0], control: ci, residual, order })
                }
                Err(e) => return Err(e),
            }
        }
        WeightStore::Shared(shared)
    } else {
        // cache decompositions by the quantized control-matrix tuple
        let mut classes: Vec<Vec<Vec<T>>> = Vec::new();
        let mut index: HashMap<u64, u32> = HashMap::new();
        let n_interior = npl * (ns.max(1) - 1);
        let mut class_of_interior = vec![0u32; n_interior];
        for c in 1..ns {
            for lat in 0..npl {
                let pos = grid.position(lat, c);
                let y = pos.scale(spec.coef_scale).add(&spec.coef_offset);
                let mats: Vec<SymMat<T>> = game.controls.iter().map(|ctl| ctl.mat.eval(&y)).collect();
                let mut h = 0xcbf29ce484222325u64;
                for m in &mats {
                    for i in 0..m.dim {
                        for j in i..m.dim {
                            let q = (to_f64(m.get(i, j)) * 1e12).round() as i64;
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
                    let mut per_ctrl = Vec::with_capacity(mats.len());
                    for (ci, a) in mats.iter().enumerate() {
                        match decompose_raw(a, &ws) {
                            Ok(w) => per_ctrl.push(w),
                            Err(Error::ConeViolation { residual }) => {
                                let lc = grid.lat_coords(lat);
                                return Err(Error::Monotonicity {
                                    node: [lc[0], lc[1], c],
                                    control: ci,
                                    residual,
                                    order,
                                });
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    let id = classes.len() as u32;
                    classes.push(per_ctrl);
                    index.insert(h, id);
                    id
                };
                class_of_interior[(c - 1) * npl + lat] = id;
            }
        }
        WeightStore::PerNode { class_of_interior, classes }
    };

    // face data
    let mut bottom = vec![T::zero(); npl];
    let mut top = vec![T::zero(); npl];
    for lat in 0..npl {
        bottom[lat] = (spec.bottom)(&grid.position(lat, 0));
        top[lat] = (spec.top)(&grid.position(lat, ns));
    }
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for v in bottom.iter().chain(top.iter()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }

    // fractional crossings for wide normal arms (|e_n| ≥ 2)
    let mut crossings: HashMap<(usize, usize, u8), Vec<T>> = HashMap::new();
    let nax = grid.dim - 1;
    for (di, off) in dirs.iter().enumerate() {
        let en = off[nax];
        if en.abs() < 2 {
            continue;
        }
        for c in 1..ns {
            for sign in [1i32, -1] {
                let target = c as i32 + sign * en;
                if (0..=ns as i32).contains(&target) {
                    continue;
                }
                let (face_layer, side, data): (T, u8, &dyn Fn(&Vect<T>) -> T) = if sign * en > 0 {
                    (cnt(ns), 1, spec.top)
                } else {
                    (T::zero(), 0, spec.bottom)
                };
                let tau = (face_layer - cnt(c)) / lit::<T>((sign * en) as f64);
                let w = grid.displacement(off).scale(lit::<T>(sign as f64) * tau);
                let mut vals = vec![T::zero(); npl];
                for (lat, v) in vals.iter_mut().enumerate() {
                    let p = grid.position(lat, c).add(&w);
                    *v = data(&p);
                }
                crossings.insert((di, c, side), vals);
            }
        }
    }

    let rhs = spec.rhs.map(|f| {
        let mut out = vec![T::zero(); npl * (ns - 1)];
        for c in 1..ns {
            for lat in 0..npl {
                out[(c - 1) * npl + lat] = f(&grid.position(lat, c));
            }
        }
        out
    });

    Ok(DiscreteProblem {
        grid: grid.clone(),
        dirs,
        order,
        game,
        weights,
        lat_lut,
        bottom,
        top,
        crossings,
        rhs,
        data_osc: hi - lo,
    })
}

/// Arm data for one direction at one node: coefficients and neighbor values.
struct Arm<T> {
    alpha0: T,
    alpha_p: T,
    alpha_m: T,
    up: T,
    down: T,
}

impl<T: Real> DiscreteProblem<T> {
    #[inline]
    fn arm(&self, u: &[T], di: usize, lat: usize, layer: usize) -> Arm<T> {
        let npl = self.grid.npl();
        let nax = self.grid.dim - 1;
        let en = self.dirs[di][nax];
        let ns = self.grid.n[nax];
        let fetch = |sign: i32| -> (T, T) {
            // returns (tau, value)
            let tgt = layer as i32 + sign * en;
            if (0..=ns as i32).contains(&tgt) {
                let lidx = if sign > 0 {
                    self.lat_lut[di][0][lat] as usize
                } else {
                    self.lat_lut[di][1][lat] as usize
                };
                (T::one(), u[tgt as usize * npl + lidx])
            } else {
                let side = if sign * en > 0 { 1u8 } else { 0u8 };
                let face_layer: T = if side == 1 { cnt(ns) } else { T::zero() };
                let tau = (face_layer - cnt(layer)) / lit::<T>((sign * en) as f64);
                let v = self.crossings[&(di, layer, side)][lat];
                (tau, v)
            }
        };
        let (tau_p, up) = fetch(1);
        let (tau_m, down) = fetch(-1);
        let two = lit::<T>(2.0);
        let alpha_p = two / (tau_p * (tau_p + tau_m));
        let alpha_m = two / (tau_m * (tau_p + tau_m));
        Arm { alpha0: alpha_p + alpha_m, alpha_p, alpha_m, up, down }
    }

    /// second-difference responses D_e at a node (λ-independent part)
    #[inline]
    fn responses(&self, u: &[T], lat: usize, layer: usize, out: &mut [T]) {
        let u0 = u[layer * self.grid.npl() + lat];
        for di in 0..self.dirs.len() {
            let a = self.arm(u, di, lat, layer);
            out[di] = a.alpha0 * u0 - a.alpha_p * a.up - a.alpha_m * a.down;
        }
    }

    /// F_h[u] at an interior node given the response vector.
    #[inline]
    fn fold_node(&self, interior_idx: usize, d: &[T], vals: &mut [T]) -> (T, usize) {
        for (k, ctl) in self.game.controls.iter().enumerate() {
            let w = self.weights_at(interior_idx, k);
            let mut s = ctl.offset;
            for (we, de) in w.iter().zip(d.iter()) {
                s += *we * *de;
            }
            vals[k] = s;
        }
        self.game.tree.fold(vals)
    }

    /// sup-norm residual of the discrete operator over interior nodes.
    pub fn residual(&self, u: &GridFunction<T>) -> T {
        let npl = self.grid.npl();
        let ns = self.grid.n[self.grid.dim - 1];
        let nd = self.dirs.len();
        let nc = self.n_controls();
        let mut d = vec![T::zero(); nd];
        let mut vals = vec![T::zero(); nc];
        let mut r = T::zero();
        for c in 1..ns {
            for lat in 0..npl {
                self.responses(&u.values, lat, c, &mut d);
                let idx = (c - 1) * npl + lat;
                let (mut v, _) = self.fold_node(idx, &d, &mut vals);
                if let Some(f) = &self.rhs {
                    v -= f[idx];
                }
                r = r.max(v.abs());
            }
        }
        r
    }
}

#[derive(Clone, Debug)]
pub struct SolveParams<T> {
    pub tol: T,
    pub max_outer: usize,
    pub omega: T,
    pub max_sweeps_per_outer: usize,
    pub auto_omega: bool,
    /// print per-outer residuals to stderr
    pub trace: bool,
}

impl<T: Real> SolveParams<T> {
    pub fn with_tol(tol: T) -> Self {
        SolveParams {
            tol,
            max_outer: 100_000,
            omega: lit(1.5),
            max_sweeps_per_outer: 40,
            auto_omega: true,
            trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    pub sweeps: usize,
    pub residual: f64,
    pub tol: f64,
    pub converged: bool,
    pub wall_seconds: f64,
    pub fallback_used: bool,
    pub stencil_order: usize,
}

/// Initial guess: Dirichlet faces plus an exponential lift of the bottom
/// oscillation towards the cap value.
pub fn initial_guess<T: Real>(p: &DiscreteProblem<T>, decay: T) -> GridFunction<T> {
    let npl = p.grid.npl();
    let layers = p.grid.layers();
    let hs = p.grid.normal_step();
    let mut mean_b = T::zero();
    for v in &p.bottom {
        mean_b += *v;
    }
    mean_b /= cnt(npl);
    let mut values = vec![T::zero(); npl * layers];
    for c in 0..layers {
        let s = hs * cnt(c);
        let damp = (-decay * s).exp();
        let frac = cnt::<T>(c) / cnt(layers - 1);
        for lat in 0..npl {
            let cap = p.top[lat];
            let base = mean_b + (cap - mean_b) * frac;
            values[c * npl + lat] = base + (p.bottom[lat] - mean_b) * damp;
        }
    }
    for lat in 0..npl {
        values[lat] = p.bottom[lat];
        values[(layers - 1) * npl + lat] = p.top[lat];
    }
    GridFunction { grid: p.grid.clone(), values }
}

/// Howard policy iteration: optimize controls against the current iterate,
/// relax the frozen linear system with SOR sweeps, repeat. Falls back to
/// explicit pseudo-time steps when the outer residual stalls.
pub fn solve<T: Real>(
    p: &DiscreteProblem<T>,
    u0: Option<GridFunction<T>>,
    params: &SolveParams<T>,
) -> Result<(GridFunction<T>, SolveReport)> {
    let start = Instant::now();
    let npl = p.grid.npl();
    let ns = p.grid.n[p.grid.dim - 1];
    let n_int = npl * (ns - 1);
    let nd = p.dirs.len();
    let nc = p.n_controls();

    let mut u = u0.unwrap_or_else(|| initial_guess(p, T::one()));
    // pin faces to the data regardless of the caller's guess
    for lat in 0..npl {
        u.values[lat] = p.bottom[lat];
        u.values[(p.grid.layers() - 1) * npl + lat] = p.top[lat];
    }

    let mut policy = vec![0u32; n_int];
    let mut d = vec![T::zero(); nd];
    let mut vals = vec![T::zero(); nc];

    let single_control = nc == 1;
    // frozen-policy systems are M-matrices; over-relax by the mixing length
    let mut omega = if params.auto_omega {
        let nmax = *p.grid.n[..p.grid.dim].iter().max().unwrap() as f64;
        lit::<T>((2.0 / (1.0 + (std::f64::consts::PI / nmax).sin())).min(1.95))
    } else {
        params.omega
    };

    let mut best_resid = T::infinity();
    let mut stall = 0usize;
    let mut fallback_used = false;
    let mut sweeps_total = 0usize;
    let mut outer = 0usize;
    let mut resid = T::infinity();

    while outer < params.max_outer {
        outer += 1;
        // policy improvement + residual
        resid = T::zero();
        for c in 1..ns {
            for lat in 0..npl {
                let idx = (c - 1) * npl + lat;
                self_responses(p, &u.values, lat, c, &mut d);
                let (mut v, leaf) = p.fold_node(idx, &d, &mut vals);
                if let Some(f) = &p.rhs {
                    v -= f[idx];
                }
                policy[idx] = leaf as u32;
                resid = resid.max(v.abs());
            }
        }
        if params.trace {
            eprintln!(
                "howard outer {outer}: resid {:.3e} (tol {:.1e}, sweeps {sweeps_total}, omega {:.2})",
                to_f64(resid),
                to_f64(params.tol),
                to_f64(omega)
            );
        }
        if resid <= params.tol {
            break;
        }
        if resid < best_resid {
            best_resid = resid;
            stall = 0;
        } else if resid > best_resid * lit(1.5) {
            // genuine cycling, not just slow progress
            stall += 1;
        }
        if stall >= 3 && !single_control {
            // Howard cycling: damp with explicit pseudo-time steps
            fallback_used = true;
            pseudo_time_steps(p, &mut u, 50, &mut vals, &mut d);
            stall = 0;
            continue;
        }

        // frozen-policy SOR sweeps, forward/backward alternation
        let max_n = *p.grid.n[..p.grid.dim].iter().max().unwrap();
        let inner_target = if single_control { params.tol } else { params.tol.max(resid * lit(0.1)) };
        let sweep_cap = params.max_sweeps_per_outer.max(4 * max_n);
        let mut prev_inner = T::infinity();
        let mut sweep = 0usize;
        loop {
            let forward = sweep % 2 == 0;
            sor_sweep(p, &mut u, &policy, omega, forward, &mut d);
            sweep += 1;
            sweeps_total += 1;
            if sweep % 8 == 0 || sweep >= sweep_cap {
                let ir = frozen_residual(p, &u, &policy, &mut d);
                if ir <= inner_target {
                    break;
                }
                if ir > prev_inner * lit(4.0) {
                    // divergence: halve the damping and keep going
                    omega = (omega * lit(0.5)).max(lit(0.4));
                }
                prev_inner = ir;
            }
            if sweep >= sweep_cap {
                break;
            }
        }
    }

    let converged = resid <= params.tol;
    let report = SolveReport {
        iterations: outer,
        sweeps: sweeps_total,
        residual: to_f64(resid),
        tol: to_f64(params.tol),
        converged,
        wall_seconds: start.elapsed().as_secs_f64(),
        fallback_used,
        stencil_order: p.order,
    };
    if !converged {
        return Err(Error::NonConverged {
            residual: report.residual,
            iterations: outer,
            tol: report.tol,
        });
    }
    Ok((u, report))
}

#[inline]
fn self_responses<T: Real>(p: &DiscreteProblem<T>, u: &[T], lat: usize, layer: usize, out: &mut [T]) {
    p.responses(u, lat, layer, out);
}

fn frozen_residual<T: Real>(
    p: &DiscreteProblem<T>,
    u: &GridFunction<T>,
    policy: &[u32],
    d: &mut [T],
) -> T {
    let npl = p.grid.npl();
    let ns = p.grid.n[p.grid.dim - 1];
    let mut r = T::zero();
    for c in 1..ns {
        for lat in 0..npl {
            let idx = (c - 1) * npl + lat;
            p.responses(&u.values, lat, c, d);
            let k = policy[idx] as usize;
            let w = p.weights_at(idx, k);
            let mut v = p.game.controls[k].offset;
            for (we, de) in w.iter().zip(d.iter()) {
                v += *we * *de;
            }
            if let Some(f) = &p.rhs {
                v -= f[idx];
            }
            r = r.max(v.abs());
        }
    }
    r
}

fn sor_sweep<T: Real>(
    p: &DiscreteProblem<T>,
    u: &mut GridFunction<T>,
    policy: &[u32],
    omega: T,
    forward: bool,
    _scratch: &mut [T],
) {
    let npl = p.grid.npl();
    let ns = p.grid.n[p.grid.dim - 1];
    let layer_range: Vec<usize> = if forward { (1..ns).collect() } else { (1..ns).rev().collect() };
    for &c in &layer_range {
        let lat_iter: Box<dyn Iterator<Item = usize>> = if forward {
            Box::new(0..npl)
        } else {
            Box::new((0..npl).rev())
        };
        for lat in lat_iter {
            let idx = (c - 1) * npl + lat;
            let k = policy[idx] as usize;
            let w = p.weights_at(idx, k);
            let mut numer = -p.game.controls[k].offset;
            if let Some(f) = &p.rhs {
                numer += f[idx];
            }
            let mut denom = T::zero();
            for (di, we) in w.iter().enumerate() {
                if *we == T::zero() {
                    continue;
                }
                let a = p.arm(&u.values, di, lat, c);
                numer += *we * (a.alpha_p * a.up + a.alpha_m * a.down);
                denom += *we * a.alpha0;
            }
            if denom <= T::zero() {
                continue;
            }
            let unew = numer / denom;
            let node = c * npl + lat;
            let old = u.values[node];
            u.values[node] = old + omega * (unew - old);
        }
    }
}

fn pseudo_time_steps<T: Real>(
    p: &DiscreteProblem<T>,
    u: &mut GridFunction<T>,
    steps: usize,
    vals: &mut [T],
    d: &mut [T],
) {
    let npl = p.grid.npl();
    let ns = p.grid.n[p.grid.dim - 1];
    // stability: τ · max Σ λ_e α0 ≤ 1
    let mut max_diag = T::zero();
    for c in 1..ns {
        for lat in 0..npl {
            let idx = (c - 1) * npl + lat;
            for k in 0..p.n_controls() {
                let w = p.weights_at(idx, k);
                let mut s = T::zero();
                for (di, we) in w.iter().enumerate() {
                    let a = p.arm(&u.values, di, lat, c);
                    s += *we * a.alpha0;
                }
                max_diag = max_diag.max(s);
            }
        }
    }
    let tau = lit::<T>(0.9) / max_diag.max(T::epsilon());
    let mut delta = vec![T::zero(); npl * (ns - 1)];
    for _ in 0..steps {
        for c in 1..ns {
            for lat in 0..npl {
                let idx = (c - 1) * npl + lat;
                p.responses(&u.values, lat, c, d);
                let (mut v, _) = p.fold_node(idx, d, vals);
                if let Some(f) = &p.rhs {
                    v -= f[idx];
                }
                delta[idx] = v;
            }
        }
        for c in 1..ns {
            for lat in 0..npl {
                let idx = (c - 1) * npl + lat;
                let node = c * npl + lat;
                u.values[node] = u.values[node] - tau * delta[idx];
            }
        }
    }
}
