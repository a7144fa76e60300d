//! Uniformly elliptic operators in Isaacs normal form, Pucci extremal
//! operators, 2-D projections onto (η, ξ̂)-planes and the monotone
//! perturbations used by the discontinuity experiments.
//!
//! Sign convention: an operator F evaluates the paper-style elliptic form
//! F(M, y) = min_a max_b −Tr(A^{ab}(y) M), decreasing in M. The Pucci kind
//! with sign `+` evaluates −P⁺(M) (a pure min over its diffusion ball) and
//! sign `−` evaluates −P⁻(M) (a pure max).

use crate::error::{Error, Result};
use crate::lattice::LatticeVector;
use crate::linalg::{SymMat, Vect};
use crate::scalar::{cnt, lit, Real};

/// One cosine term amp·cos(2π k·y + phase) of a trigonometric polynomial.
#[derive(Clone, Debug)]
pub struct TrigTerm<T> {
    pub amp: T,
    pub freq: [i64; 3],
    pub phase: T,
}

/// Z^d-periodic scalar field: closed-form trig polynomial or grid samples
/// on [0,1)^d with periodic multilinear interpolation.
#[derive(Clone, Debug)]
pub enum TorusFunction<T> {
    Trig { dim: usize, terms: Vec<TrigTerm<T>> },
    Grid { dim: usize, n: [usize; 3], values: Vec<T> },
}

impl<T: Real> TorusFunction<T> {
    pub fn zero(dim: usize) -> Self {
        TorusFunction::Trig { dim, terms: Vec::new() }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        TorusFunction::Trig { dim, terms: vec![TrigTerm { amp: c, freq: [0; 3], phase: T::zero() }] }
    }

    pub fn cosine(dim: usize, amp: T, freq: &[i64], phase: T) -> Self {
        let mut f = [0i64; 3];
        f[..freq.len()].copy_from_slice(freq);
        TorusFunction::Trig { dim, terms: vec![TrigTerm { amp, freq: f, phase }] }
    }

    pub fn dim(&self) -> usize {
        match self {
            TorusFunction::Trig { dim, .. } | TorusFunction::Grid { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, y: &Vect<T>) -> T {
        match self {
            TorusFunction::Trig { dim, terms } => {
                debug_assert_eq!(*dim, y.dim);
                let two_pi = T::PI() * lit(2.0);
                let mut s = T::zero();
                for t in terms {
                    let mut ky = T::zero();
                    for i in 0..*dim {
                        ky += lit::<T>(t.freq[i] as f64) * y.get(i);
                    }
                    s += t.amp * (two_pi * ky + t.phase).cos();
                }
                s
            }
            TorusFunction::Grid { dim, n, values } => {
                let d = *dim;
                let mut idx0 = [0usize; 3];
                let mut frac = [T::zero(); 3];
                for i in 0..d {
                    let x = y.get(i).fract();
                    let x = if x < T::zero() { x + T::one() } else { x };
                    let xf = x * cnt(n[i]);
                    let f = xf.floor();
                    idx0[i] = f.to_usize().unwrap_or(0).min(n[i] - 1);
                    frac[i] = xf - f;
                }
                let lin = |ix: [usize; 3]| -> usize {
                    match d {
                        2 => ix[0] % n[0] + (ix[1] % n[1]) * n[0],
                        _ => ix[0] % n[0] + (ix[1] % n[1]) * n[0] + (ix[2] % n[2]) * n[0] * n[1],
                    }
                };
                let mut s = T::zero();
                let corners = 1usize << d;
                for c in 0..corners {
                    let mut ix = idx0;
                    let mut w = T::one();
                    for i in 0..d {
                        if (c >> i) & 1 == 1 {
                            ix[i] += 1;
                            w = w * frac[i];
                        } else {
                            w = w * (T::one() - frac[i]);
                        }
                    }
                    s += w * values[lin(ix)];
                }
                s
            }
        }
    }

    /// Exact mean over the torus for trig polynomials, sample average for grids.
    pub fn mean(&self) -> T {
        match self {
            TorusFunction::Trig { terms, .. } => {
                let mut s = T::zero();
                for t in terms {
                    if t.freq.iter().all(|&k| k == 0) {
                        s += t.amp * t.phase.cos();
                    }
                }
                s
            }
            TorusFunction::Grid { values, .. } => {
                values.iter().copied().sum::<T>() / cnt(values.len())
            }
        }
    }

    /// Conservative oscillation bound (exact for single-mode profiles).
    pub fn osc_bound(&self) -> T {
        match self {
            TorusFunction::Trig { terms, .. } => {
                let mut s = T::zero();
                for t in terms {
                    if t.freq.iter().any(|&k| k != 0) {
                        s += t.amp.abs();
                    }
                }
                s * lit(2.0)
            }
            TorusFunction::Grid { values, .. } => {
                let mut lo = T::infinity();
                let mut hi = T::neg_infinity();
                for v in values {
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                }
                hi - lo
            }
        }
    }

    /// Min/max estimated by dense sampling (exact for grid representation).
    pub fn bounds_estimate(&self, per_axis: usize) -> (T, T) {
        match self {
            TorusFunction::Grid { values, .. } => {
                let mut lo = T::infinity();
                let mut hi = T::neg_infinity();
                for v in values {
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                }
                (lo, hi)
            }
            TorusFunction::Trig { dim, .. } => {
                let d = *dim;
                let n = per_axis.max(4);
                let mut lo = T::infinity();
                let mut hi = T::neg_infinity();
                let total = n.pow(d as u32);
                for k in 0..total {
                    let mut y = Vect::zero(d);
                    let mut rem = k;
                    for i in 0..d {
                        y.set(i, cnt::<T>(rem % n) / cnt(n));
                        rem /= n;
                    }
                    let v = self.eval(&y);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        }
    }

    pub fn add_scaled(&self, other: &TorusFunction<T>, c: T) -> Result<TorusFunction<T>> {
        match (self, other) {
            (TorusFunction::Trig { dim, terms }, TorusFunction::Trig { dim: d2, terms: t2 }) => {
                if dim != d2 {
                    return Err(Error::Dimension { expected: *dim, got: *d2 });
                }
                let mut terms = terms.clone();
                for t in t2 {
                    terms.push(TrigTerm { amp: c * t.amp, freq: t.freq, phase: t.phase });
                }
                Ok(TorusFunction::Trig { dim: *dim, terms })
            }
            _ => Err(Error::Unsupported("add_scaled requires two trig-polynomial fields".into())),
        }
    }

    pub fn shift_const(&self, c: T) -> TorusFunction<T> {
        match self {
            TorusFunction::Trig { dim, terms } => {
                let mut terms = terms.clone();
                terms.push(TrigTerm { amp: c, freq: [0; 3], phase: T::zero() });
                TorusFunction::Trig { dim: *dim, terms }
            }
            TorusFunction::Grid { dim, n, values } => TorusFunction::Grid {
                dim: *dim,
                n: *n,
                values: values.iter().map(|v| *v + c).collect(),
            },
        }
    }

    pub fn scale(&self, c: T) -> TorusFunction<T> {
        match self {
            TorusFunction::Trig { dim, terms } => TorusFunction::Trig {
                dim: *dim,
                terms: terms
                    .iter()
                    .map(|t| TrigTerm { amp: c * t.amp, freq: t.freq, phase: t.phase })
                    .collect(),
            },
            TorusFunction::Grid { dim, n, values } => TorusFunction::Grid {
                dim: *dim,
                n: *n,
                values: values.iter().map(|v| *v * c).collect(),
            },
        }
    }
}

/// ψ' = ψ + ε·cos(2π y·ξ). Sup-distance to ψ equals |ε|.
pub fn perturb_boundary<T: Real>(
    psi: &TorusFunction<T>,
    xi: &LatticeVector,
    eps: T,
) -> Result<TorusFunction<T>> {
    if psi.dim() != xi.dim {
        return Err(Error::Dimension { expected: psi.dim(), got: xi.dim });
    }
    match psi {
        TorusFunction::Trig { .. } => {
            let bump = TorusFunction::cosine(psi.dim(), T::one(), xi.comps(), T::zero());
            psi.add_scaled(&bump, eps)
        }
        TorusFunction::Grid { dim, n, values } => {
            let d = *dim;
            let mut out = values.clone();
            let two_pi = T::PI() * lit(2.0);
            for (idx, v) in out.iter_mut().enumerate() {
                let mut rem = idx;
                let mut ky = T::zero();
                for i in 0..d {
                    let c = rem % n[i];
                    rem /= n[i];
                    ky += lit::<T>(xi.get(i) as f64) * cnt::<T>(c) / cnt(n[i]);
                }
                *v += eps * (two_pi * ky).cos();
            }
            Ok(TorusFunction::Grid { dim: d, n: *n, values: out })
        }
    }
}

/// Symmetric-matrix-valued Z^d-periodic coefficient field.
#[derive(Clone, Debug)]
pub enum MatrixField<T> {
    Const(SymMat<T>),
    /// upper-triangle entries in row-major order: (0,0),(0,1),..,(1,1),..
    Entries { dim: usize, entries: Vec<TorusFunction<T>> },
}

impl<T: Real> MatrixField<T> {
    pub fn dim(&self) -> usize {
        match self {
            MatrixField::Const(m) => m.dim,
            MatrixField::Entries { dim, .. } => *dim,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, MatrixField::Const(_))
    }

    pub fn eval(&self, y: &Vect<T>) -> SymMat<T> {
        match self {
            MatrixField::Const(m) => *m,
            MatrixField::Entries { dim, entries } => {
                let d = *dim;
                let mut m = SymMat::zero(d);
                let mut k = 0;
                for i in 0..d {
                    for j in i..d {
                        m.set(i, j, entries[k].eval(y));
                        k += 1;
                    }
                }
                m
            }
        }
    }

    pub fn isotropic(a: TorusFunction<T>) -> Self {
        let d = a.dim();
        let mut entries = Vec::new();
        for i in 0..d {
            for j in i..d {
                if i == j {
                    entries.push(a.clone());
                } else {
                    entries.push(TorusFunction::zero(d));
                }
            }
        }
        MatrixField::Entries { dim: d, entries }
    }
}

/// Finite min–max table of diffusion coefficients:
/// F(M, y) = min_a max_b −Tr(A^{ab}(y) M), 1 ≤ A^{ab}(y) ≤ Λ.
#[derive(Clone, Debug)]
pub struct IsaacsFamily<T> {
    pub dim: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// row-major [a][b]
    pub mats: Vec<MatrixField<T>>,
    pub lambda: T,
}

impl<T: Real> IsaacsFamily<T> {
    pub fn new(dim: usize, n_min: usize, n_max: usize, mats: Vec<MatrixField<T>>, lambda: T) -> Result<Self> {
        if mats.len() != n_min * n_max {
            return Err(Error::Parameter(format!(
                "Isaacs table needs {} matrices, got {}",
                n_min * n_max,
                mats.len()
            )));
        }
        if lambda < T::one() {
            return Err(Error::Parameter("ellipticity ratio must satisfy Λ ≥ 1".into()));
        }
        let fam = IsaacsFamily { dim, n_min, n_max, mats, lambda };
        fam.validate_bounds()?;
        Ok(fam)
    }

    /// Eigenvalue check 1·Id ≤ A ≤ Λ·Id on sampled y.
    fn validate_bounds(&self) -> Result<()> {
        let tol = lit::<T>(1e-9);
        let samples: usize = if self.mats.iter().all(|m| m.is_const()) { 1 } else { 5 };
        for mf in &self.mats {
            for k in 0..samples.pow(self.dim as u32) {
                let mut y = Vect::zero(self.dim);
                let mut rem = k;
                for i in 0..self.dim {
                    y.set(i, cnt::<T>(rem % samples) / cnt(samples));
                    rem /= samples;
                }
                let a = mf.eval(&y);
                let e = a.eigenvalues();
                if e[0] < T::one() - tol || *e.last().unwrap() > self.lambda + tol {
                    return Err(Error::Parameter(format!(
                        "diffusion eigenvalues [{:?}] outside [1, Λ={}]",
                        e.iter().map(|v| v.to_f64().unwrap()).collect::<Vec<_>>(),
                        self.lambda.to_f64().unwrap()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn spatially_homogeneous(&self) -> bool {
        self.mats.iter().all(|m| m.is_const())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PucciSign {
    Plus,
    Minus,
}

/// Elliptic operator in the forms the lab manipulates.
#[derive(Clone, Debug)]
pub enum Operator<T> {
    Isaacs(IsaacsFamily<T>),
    Pucci { dim: usize, sign: PucciSign, lambda: T, big_lambda: T },
    /// max{F(M), F(M + ε (η₁ᵀMη₁) η₁⊗η₁)} stored as a wrapper, never flattened.
    Perturbed { base: Box<Operator<T>>, eta1: Vect<T>, eps: T },
    /// max of two operators (arises from projecting perturbations).
    MaxPair(Box<Operator<T>>, Box<Operator<T>>),
    /// 2-D view N ↦ F(Σ N_ij f_i⊗f_j) of a higher-dimensional operator.
    Embedded { base: Box<Operator<T>>, f1: Vect<T>, f2: Vect<T> },
    /// min over groups, max over members of (−Tr(A·M) + offset); internal
    /// affine envelope used when only pointwise F̄ values are available.
    Envelope { dim: usize, groups: Vec<Vec<(SymMat<T>, T)>>, lambda: T },
}

/// Raw Pucci extremal value P±_{λ,Λ}(M) from the eigenvalues of M.
pub fn pucci<T: Real>(sign: PucciSign, lambda: T, big_lambda: T, m: &SymMat<T>) -> Result<T> {
    if lambda <= T::zero() || lambda > big_lambda {
        return Err(Error::Parameter("Pucci parameters require 0 < λ ≤ Λ".into()));
    }
    let (top, bot) = match sign {
        PucciSign::Plus => (big_lambda, lambda),
        PucciSign::Minus => (lambda, big_lambda),
    };
    let mut s = T::zero();
    for e in m.eigenvalues() {
        if e > T::zero() {
            s += top * e;
        } else if e < T::zero() {
            s += bot * e;
        }
    }
    Ok(s)
}

impl<T: Real> Operator<T> {
    pub fn laplacian(dim: usize) -> Self {
        Operator::Isaacs(
            IsaacsFamily::new(dim, 1, 1, vec![MatrixField::Const(SymMat::identity(dim))], T::one())
                .unwrap(),
        )
    }

    pub fn linear(a: MatrixField<T>, lambda: T) -> Result<Self> {
        let dim = a.dim();
        Ok(Operator::Isaacs(IsaacsFamily::new(dim, 1, 1, vec![a], lambda)?))
    }

    pub fn pucci_plus(dim: usize, lambda: T, big_lambda: T) -> Self {
        Operator::Pucci { dim, sign: PucciSign::Plus, lambda, big_lambda }
    }

    pub fn dim(&self) -> usize {
        match self {
            Operator::Isaacs(f) => f.dim,
            Operator::Pucci { dim, .. } => *dim,
            Operator::Perturbed { base, .. } => base.dim(),
            Operator::MaxPair(a, _) => a.dim(),
            Operator::Embedded { .. } => 2,
            Operator::Envelope { dim, .. } => *dim,
        }
    }

    /// No y-dependence anywhere in the expression.
    pub fn spatially_homogeneous(&self) -> bool {
        match self {
            Operator::Isaacs(f) => f.spatially_homogeneous(),
            Operator::Pucci { .. } => true,
            Operator::Perturbed { base, .. } => base.spatially_homogeneous(),
            Operator::MaxPair(a, b) => a.spatially_homogeneous() && b.spatially_homogeneous(),
            Operator::Embedded { base, .. } => base.spatially_homogeneous(),
            Operator::Envelope { .. } => true,
        }
    }

    /// Declared/derived ellipticity ratio bound.
    pub fn lambda_ratio(&self) -> T {
        match self {
            Operator::Isaacs(f) => f.lambda,
            Operator::Pucci { lambda, big_lambda, .. } => *big_lambda / *lambda,
            Operator::Perturbed { base, eps, .. } => base.lambda_ratio() * (T::one() + *eps),
            Operator::MaxPair(a, b) => a.lambda_ratio().max(b.lambda_ratio()),
            Operator::Embedded { base, .. } => base.lambda_ratio(),
            Operator::Envelope { lambda, .. } => *lambda,
        }
    }

    pub fn eval(&self, m: &SymMat<T>, y: &Vect<T>) -> Result<T> {
        if m.dim != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: m.dim });
        }
        Ok(self.eval_unchecked(m, y))
    }

    fn eval_unchecked(&self, m: &SymMat<T>, y: &Vect<T>) -> T {
        match self {
            Operator::Isaacs(f) => {
                let mut outer = T::infinity();
                for a in 0..f.n_min {
                    let mut inner = T::neg_infinity();
                    for b in 0..f.n_max {
                        let mat = f.mats[a * f.n_max + b].eval(y);
                        inner = inner.max(-mat.frobenius_inner(m));
                    }
                    outer = outer.min(inner);
                }
                outer
            }
            Operator::Pucci { sign, lambda, big_lambda, .. } => {
                -pucci(*sign, *lambda, *big_lambda, m).expect("validated parameters")
            }
            Operator::Perturbed { base, eta1, eps } => {
                let t = m.quad_form(eta1);
                let shifted = m.add(&SymMat::outer(eta1).scale(*eps * t));
                base.eval_unchecked(m, y).max(base.eval_unchecked(&shifted, y))
            }
            Operator::MaxPair(a, b) => a.eval_unchecked(m, y).max(b.eval_unchecked(m, y)),
            Operator::Embedded { base, f1, f2 } => {
                let emb = embed_2d(m, f1, f2);
                base.eval_unchecked(&emb, y)
            }
            Operator::Envelope { groups, .. } => {
                let mut outer = T::infinity();
                for g in groups {
                    let mut inner = T::neg_infinity();
                    for (a, c) in g {
                        inner = inner.max(-a.frobenius_inner(m) + *c);
                    }
                    outer = outer.min(inner);
                }
                outer
            }
        }
    }
}

/// Embed a 2×2 matrix into d dimensions: Σ N_ij f_i ⊗ f_j.
pub fn embed_2d<T: Real>(n: &SymMat<T>, f1: &Vect<T>, f2: &Vect<T>) -> SymMat<T> {
    let d = f1.dim;
    let mut m: SymMat<T> = SymMat::zero(d);
    let fs = [f1, f2];
    for i in 0..2 {
        for j in 0..2 {
            let nij = n.get(i, j);
            if nij != T::zero() {
                for p in 0..d {
                    for q in 0..d {
                        let v = m.get(p, q) + nij * fs[i].get(p) * fs[j].get(q);
                        if p <= q {
                            m.set(p, q, v);
                        }
                    }
                }
            }
        }
    }
    // symmetrize exactly (N symmetric makes this a no-op analytically)
    let mut out = SymMat::zero(d);
    for p in 0..d {
        for q in p..d {
            out.set(p, q, (m.get(p, q) + m.get(q, p)) / lit(2.0));
        }
    }
    out
}

/// F_ε(M) = max{F(M), F(M + ε (η₁ᵀMη₁) η₁⊗η₁)} as a wrapper node.
pub fn perturb_operator<T: Real>(f: &Operator<T>, eta1: &Vect<T>, eps: T) -> Result<Operator<T>> {
    if eps <= T::zero() {
        return Err(Error::Parameter("perturbation strength must satisfy ε > 0".into()));
    }
    if !f.spatially_homogeneous() {
        return Err(Error::Precondition("perturb_operator requires a spatially homogeneous operator".into()));
    }
    if (eta1.norm() - T::one()).abs() > lit(1e-10) {
        return Err(Error::Parameter("η₁ must be a unit vector".into()));
    }
    if eta1.dim != f.dim() {
        return Err(Error::Dimension { expected: f.dim(), got: eta1.dim });
    }
    Ok(Operator::Perturbed { base: Box::new(f.clone()), eta1: *eta1, eps })
}

/// 2-D projection of a spatially homogeneous operator onto the plane
/// spanned by f₁ = η and f₂ = ξ̂. Orientation-sensitive: (ξ, η) and (ξ, −η)
/// give distinct objects.
#[derive(Clone, Debug)]
pub struct Operator2D<T> {
    pub xi: LatticeVector,
    pub xi_hat: Vect<T>,
    pub eta: Vect<T>,
    pub op: Operator<T>,
}

impl<T: Real> Operator2D<T> {
    pub fn eval(&self, n: &SymMat<T>) -> Result<T> {
        self.op.eval(n, &Vect::zero(2))
    }
}

pub fn project_2d<T: Real>(
    fbar: &Operator<T>,
    xi: &LatticeVector,
    eta: &Vect<T>,
) -> Result<Operator2D<T>> {
    let d = fbar.dim();
    if xi.dim != d || eta.dim != d {
        return Err(Error::Dimension { expected: d, got: xi.dim.min(eta.dim) });
    }
    if !fbar.spatially_homogeneous() {
        return Err(Error::Precondition("project_2d requires a spatially homogeneous operator".into()));
    }
    if (eta.norm() - T::one()).abs() > lit(1e-10) {
        return Err(Error::Frame("η must be a unit vector".into()));
    }
    let xh = xi.hat::<T>();
    if xh.dot(eta).abs() > lit(1e-9) {
        return Err(Error::Frame("η must be orthogonal to ξ".into()));
    }
    let op = compress(fbar, eta, &xh);
    Ok(Operator2D { xi: *xi, xi_hat: xh, eta: *eta, op })
}

fn compress<T: Real>(op: &Operator<T>, f1: &Vect<T>, f2: &Vect<T>) -> Operator<T> {
    match op {
        Operator::Pucci { sign, lambda, big_lambda, .. } => {
            // rank-2 embeddings of 2-D matrices have the 2-D eigenvalues
            // plus zeros, so the projection is the 2-D Pucci operator
            Operator::Pucci { dim: 2, sign: *sign, lambda: *lambda, big_lambda: *big_lambda }
        }
        Operator::Isaacs(fam) if fam.spatially_homogeneous() => {
            let mats = fam
                .mats
                .iter()
                .map(|mf| MatrixField::Const(compress_mat(&mf.eval(&Vect::zero(fam.dim)), f1, f2)))
                .collect();
            Operator::Isaacs(
                IsaacsFamily::new(2, fam.n_min, fam.n_max, mats, fam.lambda)
                    .expect("compression preserves eigenvalue bounds"),
            )
        }
        Operator::Perturbed { base, eta1, eps } => {
            let g_base = compress(base, f1, f2);
            // the shifted branch stays a linear family when the base is one
            if let Operator::Isaacs(fam) = base.as_ref() {
                if fam.spatially_homogeneous() {
                    let zero = Vect::zero(fam.dim);
                    let mats: Vec<MatrixField<T>> = fam
                        .mats
                        .iter()
                        .map(|mf| {
                            let a = mf.eval(&zero);
                            let shifted = a.add(&SymMat::outer(eta1).scale(*eps * a.quad_form(eta1)));
                            MatrixField::Const(compress_mat(&shifted, f1, f2))
                        })
                        .collect();
                    let fam2 = IsaacsFamily {
                        dim: 2,
                        n_min: fam.n_min,
                        n_max: fam.n_max,
                        mats,
                        lambda: fam.lambda * (T::one() + *eps),
                    };
                    return Operator::MaxPair(
                        Box::new(g_base),
                        Box::new(Operator::Isaacs(fam2)),
                    );
                }
            }
            // generic fallback keeps evaluation exact through the embedding
            Operator::Embedded { base: Box::new(op.clone()), f1: *f1, f2: *f2 }
        }
        Operator::MaxPair(a, b) => Operator::MaxPair(
            Box::new(compress(a, f1, f2)),
            Box::new(compress(b, f1, f2)),
        ),
        _ => Operator::Embedded { base: Box::new(op.clone()), f1: *f1, f2: *f2 },
    }
}

/// Compression B_ij = f_iᵀ A f_j of a d-dim matrix onto a 2-frame.
pub fn compress_mat<T: Real>(a: &SymMat<T>, f1: &Vect<T>, f2: &Vect<T>) -> SymMat<T> {
    let fs = [f1, f2];
    let mut b = SymMat::zero(2);
    for i in 0..2 {
        for j in i..2 {
            b.set(i, j, a.mul_vec(fs[j]).dot(fs[i]));
        }
    }
    b
}

// ---------------------------------------------------------------------------
// game form: what the monotone grid solver consumes
// ---------------------------------------------------------------------------

/// Linear leaf of the game tree: value −Tr(A(y)·M) + offset.
#[derive(Clone, Debug)]
pub struct GameControl<T> {
    pub mat: MatrixField<T>,
    pub offset: T,
}

#[derive(Clone, Debug)]
pub enum GameNode {
    Ctrl(usize),
    Min(Vec<GameNode>),
    Max(Vec<GameNode>),
}

impl GameNode {
    /// Fold leaf values through the min/max structure; returns (value, leaf).
    pub fn fold<T: Real>(&self, vals: &[T]) -> (T, usize) {
        match self {
            GameNode::Ctrl(k) => (vals[*k], *k),
            GameNode::Min(ch) => {
                let mut best = (T::infinity(), usize::MAX);
                for c in ch {
                    let v = c.fold(vals);
                    if v.0 < best.0 {
                        best = v;
                    }
                }
                best
            }
            GameNode::Max(ch) => {
                let mut best = (T::neg_infinity(), usize::MAX);
                for c in ch {
                    let v = c.fold(vals);
                    if v.0 > best.0 {
                        best = v;
                    }
                }
                best
            }
        }
    }

    fn offset_controls(&mut self, by: usize) {
        match self {
            GameNode::Ctrl(k) => *k += by,
            GameNode::Min(ch) | GameNode::Max(ch) => {
                for c in ch {
                    c.offset_controls(by);
                }
            }
        }
    }
}

/// Finite game representation of an operator, ready for discretization.
#[derive(Clone, Debug)]
pub struct GameOperator<T> {
    pub dim: usize,
    pub controls: Vec<GameControl<T>>,
    pub tree: GameNode,
    pub exact: bool,
}

impl<T: Real> GameOperator<T> {
    pub fn eval(&self, m: &SymMat<T>, y: &Vect<T>) -> T {
        let vals: Vec<T> = self
            .controls
            .iter()
            .map(|c| -c.mat.eval(y).frobenius_inner(m) + c.offset)
            .collect();
        self.tree.fold(&vals).0
    }
}

impl<T: Real> Operator<T> {
    /// Convert to a finite game of linear controls. Pucci operators are
    /// approximated by a rotated-frame family of `frames` angles; everything
    /// else is exact.
    pub fn as_game(&self, frames: usize) -> Result<GameOperator<T>> {
        match self {
            Operator::Isaacs(fam) => {
                let controls: Vec<GameControl<T>> = fam
                    .mats
                    .iter()
                    .map(|m| GameControl { mat: m.clone(), offset: T::zero() })
                    .collect();
                let tree = minmax_tree(fam.n_min, fam.n_max);
                Ok(GameOperator { dim: fam.dim, controls, tree, exact: true })
            }
            Operator::Pucci { dim, sign, lambda, big_lambda } => {
                let mats = pucci_frame_family(*dim, *lambda, *big_lambda, frames);
                let n = mats.len();
                let controls: Vec<GameControl<T>> = mats
                    .into_iter()
                    .map(|m| GameControl { mat: MatrixField::Const(m), offset: T::zero() })
                    .collect();
                let leaves: Vec<GameNode> = (0..n).map(GameNode::Ctrl).collect();
                let tree = match sign {
                    PucciSign::Plus => GameNode::Min(leaves),
                    PucciSign::Minus => GameNode::Max(leaves),
                };
                Ok(GameOperator { dim: *dim, controls, tree, exact: false })
            }
            Operator::Perturbed { base, eta1, eps } => {
                let g1 = base.as_game(frames)?;
                let mut controls = g1.controls.clone();
                let mut shifted: Vec<GameControl<T>> = Vec::with_capacity(g1.controls.len());
                for c in &g1.controls {
                    let mat = match &c.mat {
                        MatrixField::Const(a) => MatrixField::Const(
                            a.add(&SymMat::outer(eta1).scale(*eps * a.quad_form(eta1))),
                        ),
                        MatrixField::Entries { .. } => {
                            return Err(Error::Precondition(
                                "perturbed operators require homogeneous bases".into(),
                            ))
                        }
                    };
                    shifted.push(GameControl { mat, offset: c.offset });
                }
                let base_len = controls.len();
                controls.extend(shifted);
                let mut t2 = g1.tree.clone();
                t2.offset_controls(base_len);
                Ok(GameOperator {
                    dim: g1.dim,
                    controls,
                    tree: GameNode::Max(vec![g1.tree, t2]),
                    exact: g1.exact,
                })
            }
            Operator::MaxPair(a, b) => {
                let ga = a.as_game(frames)?;
                let gb = b.as_game(frames)?;
                let mut controls = ga.controls;
                let shift = controls.len();
                controls.extend(gb.controls);
                let mut tb = gb.tree;
                tb.offset_controls(shift);
                Ok(GameOperator {
                    dim: ga.dim,
                    controls,
                    tree: GameNode::Max(vec![ga.tree, tb]),
                    exact: ga.exact && gb.exact,
                })
            }
            Operator::Embedded { base, f1, f2 } => {
                let g = base.as_game(frames)?;
                let mut controls = Vec::with_capacity(g.controls.len());
                for c in &g.controls {
                    match &c.mat {
                        MatrixField::Const(a) => controls.push(GameControl {
                            mat: MatrixField::Const(compress_mat(a, f1, f2)),
                            offset: c.offset,
                        }),
                        MatrixField::Entries { .. } => {
                            return Err(Error::Precondition(
                                "embedded operators require homogeneous bases".into(),
                            ));
                        }
                    }
                }
                Ok(GameOperator { dim: 2, controls, tree: g.tree, exact: g.exact })
            }
            Operator::Envelope { dim, groups, .. } => {
                let mut controls = Vec::new();
                let mut outer = Vec::new();
                for g in groups {
                    let mut inner = Vec::new();
                    for (a, c) in g {
                        inner.push(GameNode::Ctrl(controls.len()));
                        controls.push(GameControl { mat: MatrixField::Const(*a), offset: *c });
                    }
                    outer.push(GameNode::Max(inner));
                }
                Ok(GameOperator { dim: *dim, controls, tree: GameNode::Min(outer), exact: false })
            }
        }
    }
}

fn minmax_tree(n_min: usize, n_max: usize) -> GameNode {
    let mut outer = Vec::with_capacity(n_min);
    for a in 0..n_min {
        let inner: Vec<GameNode> = (0..n_max).map(|b| GameNode::Ctrl(a * n_max + b)).collect();
        outer.push(GameNode::Max(inner));
    }
    GameNode::Min(outer)
}

/// Rotated-frame diffusion family for Pucci operators: Q diag(p) Qᵀ over a
/// deterministic rotation set and eigenvalue patterns p ∈ {λ, Λ}^d.
pub fn pucci_frame_family<T: Real>(dim: usize, lambda: T, big: T, frames: usize) -> Vec<SymMat<T>> {
    let frames = frames.max(2);
    let mut rots: Vec<Vec<Vect<T>>> = Vec::new();
    let half_pi = T::FRAC_PI_2();
    if dim == 2 {
        for j in 0..frames {
            let th = half_pi * cnt::<T>(j) / cnt(frames);
            let (s, c) = th.sin_cos();
            rots.push(vec![Vect::from_slice(&[c, s]), Vect::from_slice(&[-s, c])]);
        }
    } else {
        // sweep every coordinate plane at half the 2-D resolution, plus a
        // coarse grid of two-angle compositions for out-of-plane frames
        let k = (frames / 2).max(4);
        let rot_plane = |axis: usize, th: T| -> Vec<Vect<T>> {
            let (s, c) = th.sin_cos();
            let mut basis = vec![Vect::axis(3, 0), Vect::axis(3, 1), Vect::axis(3, 2)];
            let (i, j) = match axis {
                0 => (0, 1),
                1 => (1, 2),
                _ => (0, 2),
            };
            let mut bi = Vect::zero(3);
            let mut bj = Vect::zero(3);
            bi.set(i, c);
            bi.set(j, s);
            bj.set(i, -s);
            bj.set(j, c);
            basis[i] = bi;
            basis[j] = bj;
            basis
        };
        rots.push(vec![Vect::axis(3, 0), Vect::axis(3, 1), Vect::axis(3, 2)]);
        for axis in 0..3 {
            for j in 1..k {
                rots.push(rot_plane(axis, half_pi * cnt::<T>(j) / cnt(k)));
            }
        }
        let kc = (k / 2).max(2);
        for i in 1..kc {
            for j in 1..kc {
                let a = half_pi * cnt::<T>(i) / cnt(kc);
                let b = half_pi * cnt::<T>(j) / cnt(kc);
                let (sa, ca) = a.sin_cos();
                let (sb, cb) = b.sin_cos();
                let e1 = Vect::from_slice(&[ca, sa, T::zero()]);
                let e2 = Vect::from_slice(&[-sa * cb, ca * cb, sb]);
                let e3 = e1.cross(&e2);
                rots.push(vec![e1, e2, e3]);
            }
        }
    }
    let mut out: Vec<SymMat<T>> = Vec::new();
    let mut seen: Vec<u64> = Vec::new();
    let patterns = 1usize << dim;
    for p in 0..patterns {
        let uniform = p == 0 || p == patterns - 1;
        for (ri, q) in rots.iter().enumerate() {
            if uniform && ri > 0 {
                continue;
            }
            let mut m = SymMat::zero(dim);
            for (ax, qv) in q.iter().enumerate() {
                let ev = if (p >> ax) & 1 == 1 { big } else { lambda };
                m = m.add(&SymMat::outer(qv).scale(ev));
            }
            let h = quantized_hash(&m);
            if !seen.contains(&h) {
                seen.push(h);
                out.push(m);
            }
        }
    }
    out
}

fn quantized_hash<T: Real>(m: &SymMat<T>) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for i in 0..m.dim {
        for j in i..m.dim {
            let q = (m.get(i, j).to_f64().unwrap() * 1e12).round() as i64;
            for b in q.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

// ---------------------------------------------------------------------------
// ellipticity verification
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct EllipticityReport<T> {
    pub observed_ratio: T,
    pub declared_ratio: T,
    pub samples: usize,
}

/// Randomized check of the degenerate-ellipticity sandwich
/// Tr(N) ≤ F(M,y) − F(M+N,y) ≤ Λ·Tr(N) for N ⪰ 0 and of the Pucci sandwich
/// −P⁺(M−N) ≤ F(M,y) − F(N,y) ≤ −P⁻(M−N). Returns the tightest observed
/// upper ratio or a witness error.
pub fn check_ellipticity<T: Real>(
    f: &Operator<T>,
    n_samples: usize,
    seed: u64,
) -> Result<EllipticityReport<T>> {
    use rand::{Rng, SeedableRng};
    if n_samples < 1 {
        return Err(Error::Parameter("check_ellipticity requires n_samples ≥ 1".into()));
    }
    let d = f.dim();
    let declared = f.lambda_ratio();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rand_sym = |rng: &mut rand_chacha::ChaCha8Rng, scale: f64| -> SymMat<T> {
        let mut m = SymMat::zero(d);
        for i in 0..d {
            for j in i..d {
                m.set(i, j, lit(rng.gen_range(-scale..scale)));
            }
        }
        m
    };
    let mut observed = T::one();
    for k in 0..n_samples {
        let m = rand_sym(&mut rng, 2.0);
        // random PSD via squared symmetric matrix plus a diagonal bump
        let s = rand_sym(&mut rng, 1.0);
        let mut n = SymMat::zero(d);
        for i in 0..d {
            for j in i..d {
                let mut v = T::zero();
                for q in 0..d {
                    v += s.get(i, q) * s.get(q, j);
                }
                n.set(i, j, v);
            }
        }
        n = n.add(&SymMat::identity(d).scale(lit(rng.gen_range(0.01..0.5))));
        let mut y = Vect::zero(d);
        for i in 0..d {
            y.set(i, lit(rng.gen_range(0.0..1.0)));
        }

        let tr_n = n.trace();
        let diff = f.eval(&m, &y)? - f.eval(&m.add(&n), &y)?;
        let scale = (T::one() + m.norm_inf() + n.norm_inf()) * declared;
        let tol = scale * T::epsilon().sqrt() * lit(1e-2);
        if diff < tr_n - tol || diff > declared * tr_n + tol {
            return Err(Error::EllipticityWitness(format!(
                "sample {k}: F(M)−F(M+N) = {} outside [Tr N, Λ·Tr N] = [{}, {}]",
                diff.to_f64().unwrap(),
                tr_n.to_f64().unwrap(),
                (declared * tr_n).to_f64().unwrap()
            )));
        }
        observed = observed.max(diff / tr_n);

        // Pucci sandwich on an unconstrained pair
        let n2 = rand_sym(&mut rng, 2.0);
        let lhs = -pucci(PucciSign::Plus, T::one(), declared, &m.sub(&n2))?;
        let rhs = -pucci(PucciSign::Minus, T::one(), declared, &m.sub(&n2))?;
        let diff2 = f.eval(&m, &y)? - f.eval(&n2, &y)?;
        if diff2 < lhs - tol || diff2 > rhs + tol {
            return Err(Error::EllipticityWitness(format!(
                "sample {k}: Pucci sandwich violated: {} not in [{}, {}]",
                diff2.to_f64().unwrap(),
                lhs.to_f64().unwrap(),
                rhs.to_f64().unwrap()
            )));
        }
    }
    Ok(EllipticityReport { observed_ratio: observed, declared_ratio: declared, samples: n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(c: &[i64]) -> LatticeVector {
        LatticeVector::new(c).unwrap()
    }

    #[test]
    fn eval_trace_operator() {
        let f = Operator::<f64>::laplacian(2);
        let m = SymMat::identity(2);
        let y = Vect::zero(2);
        assert_eq!(f.eval(&m, &y).unwrap(), -2.0);
    }

    #[test]
    fn eval_two_member_max_family() {
        // family {Id, 2Id} under one max-control, M = −Id → max{2, 4} = 4
        let fam = IsaacsFamily::new(
            2,
            1,
            2,
            vec![
                MatrixField::Const(SymMat::identity(2)),
                MatrixField::Const(SymMat::identity(2).scale(2.0)),
            ],
            2.0,
        )
        .unwrap();
        let f = Operator::Isaacs(fam);
        let m = SymMat::identity(2).scale(-1.0);
        assert_eq!(f.eval(&m, &Vect::zero(2)).unwrap(), 4.0);
    }

    #[test]
    fn positive_homogeneity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let ops: Vec<Operator<f64>> = vec![
            Operator::laplacian(3),
            Operator::pucci_plus(3, 1.0, 2.0),
            perturb_operator(&Operator::laplacian(3), &Vect::axis(3, 0), 0.5).unwrap(),
        ];
        for f in &ops {
            for _ in 0..50 {
                let mut m = SymMat::zero(3);
                for i in 0..3 {
                    for j in i..3 {
                        m.set(i, j, rng.gen_range(-1.0..1.0));
                    }
                }
                let t: f64 = rng.gen_range(0.1..5.0);
                let y = Vect::zero(3);
                let a = f.eval(&m.scale(t), &y).unwrap();
                let b = t * f.eval(&m, &y).unwrap();
                assert!((a - b).abs() <= 1e-12 * t * m.norm_inf().max(1.0));
            }
        }
    }

    #[test]
    fn pucci_values() {
        let m = SymMat::diag(&[1.0, -1.0]);
        assert_eq!(pucci(PucciSign::Plus, 1.0, 2.0, &m).unwrap(), 1.0);
        assert_eq!(pucci(PucciSign::Minus, 1.0, 2.0, &m).unwrap(), -1.0);
        let z = SymMat::zero(3);
        assert_eq!(pucci(PucciSign::Plus, 1.0, 7.0, &z).unwrap(), 0.0);
        assert!(pucci(PucciSign::Plus, 3.0, 2.0, &z).is_err());
    }

    #[test]
    fn projection_of_trace_is_trace() {
        let f = Operator::<f64>::laplacian(3);
        let xi = lv(&[0, 0, 1]);
        let eta = Vect::from_f64s(&[1.0, 0.0, 0.0]);
        let g = project_2d(&f, &xi, &eta).unwrap();
        let n = SymMat::from_rows(&[&[1.0, 0.3], &[0.3, -2.0]]).unwrap();
        assert!((g.eval(&n).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn projection_of_pucci_is_2d_pucci() {
        use rand::{Rng, SeedableRng};
        let f = Operator::<f64>::pucci_plus(3, 1.0, 2.0);
        let xi = lv(&[1, 1, 2]);
        let xh = xi.hat::<f64>();
        // any unit η ⊥ ξ
        let raw = Vect::from_f64s(&[1.0, -1.0, 0.0]);
        let eta = raw.sub(&xh.scale(raw.dot(&xh))).normalize().unwrap();
        let g = project_2d(&f, &xi, &eta).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let mut n = SymMat::zero(2);
            for i in 0..2 {
                for j in i..2 {
                    n.set(i, j, rng.gen_range(-2.0..2.0));
                }
            }
            let expect = -pucci(PucciSign::Plus, 1.0, 2.0, &n).unwrap();
            assert!((g.eval(&n).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_rotation_invariance_for_pucci() {
        let f = Operator::<f64>::pucci_plus(3, 1.0, 2.0);
        let xi = lv(&[0, 0, 1]);
        let e1 = Vect::from_f64s(&[1.0, 0.0, 0.0]);
        let mix = Vect::from_f64s(&[0.6, 0.8, 0.0]);
        let g1 = project_2d(&f, &xi, &e1).unwrap();
        let g2 = project_2d(&f, &xi, &mix).unwrap();
        let n = SymMat::from_rows(&[&[-1.0, 0.4], &[0.4, 2.0]]).unwrap();
        assert!((g1.eval(&n).unwrap() - g2.eval(&n).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn perturbation_branch_algebra() {
        let f = Operator::<f64>::laplacian(3);
        let eta1 = Vect::axis(3, 0);
        let eps = 0.5;
        let fe = perturb_operator(&f, &eta1, eps).unwrap();
        let y = Vect::zero(3);
        // η₁ᵀMη₁ = 0 → unchanged
        let m = SymMat::diag(&[0.0, 1.0, -2.0]);
        assert_eq!(fe.eval(&m, &y).unwrap(), f.eval(&m, &y).unwrap());
        // M = η₁⊗η₁ → max{−1, −(1+ε)} = −1
        let m = SymMat::outer(&eta1);
        assert_eq!(fe.eval(&m, &y).unwrap(), -1.0);
        // M = −η₁⊗η₁ → max{1, 1+ε} = 1+ε
        let m = SymMat::outer(&eta1).scale(-1.0);
        assert_eq!(fe.eval(&m, &y).unwrap(), 1.0 + eps);
        assert!(perturb_operator(&f, &eta1, 0.0).is_err());
    }

    #[test]
    fn perturbation_dominates_base() {
        use rand::{Rng, SeedableRng};
        let f = Operator::<f64>::pucci_plus(3, 1.0, 2.0);
        let eta1 = Vect::from_f64s(&[0.0, 0.6, 0.8]);
        let fe = perturb_operator(&f, &eta1, 0.25).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let y = Vect::zero(3);
        for _ in 0..60 {
            let mut m = SymMat::zero(3);
            for i in 0..3 {
                for j in i..3 {
                    m.set(i, j, rng.gen_range(-2.0..2.0));
                }
            }
            let gap = fe.eval(&m, &y).unwrap() - f.eval(&m, &y).unwrap();
            assert!(gap >= -1e-13);
            // F_ε → F uniformly with gap ≤ Λ(F)·ε on ‖M‖ ≲ 1
            assert!(gap <= 2.0 * 0.25 * (m.norm_inf() * 3.0).max(1.0) + 1e-12);
        }
    }

    #[test]
    fn projection_identities_of_perturbation() {
        // Base −Tr in d = 3, perturb along η₁ = e₁.
        let f = Operator::<f64>::laplacian(3);
        let eta1 = Vect::axis(3, 0);
        let fe = perturb_operator(&f, &eta1, 0.5).unwrap();
        let xi = lv(&[0, 0, 1]);
        // η₂ = e₂ ⊥ η₁: projection unchanged for every N
        let g2 = project_2d(&fe, &xi, &Vect::axis(3, 1)).unwrap();
        let base2 = project_2d(&f, &xi, &Vect::axis(3, 1)).unwrap();
        // η₁-plane: strictly bigger when N₁₁ < 0
        let g1 = project_2d(&fe, &xi, &eta1).unwrap();
        let base1 = project_2d(&f, &xi, &eta1).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let mut n = SymMat::zero(2);
            for i in 0..2 {
                for j in i..2 {
                    n.set(i, j, rng.gen_range(-2.0..2.0));
                }
            }
            assert_eq!(g2.eval(&n).unwrap(), base2.eval(&n).unwrap());
            let (a, b) = (g1.eval(&n).unwrap(), base1.eval(&n).unwrap());
            if n.get(0, 0) < -1e-9 {
                assert!(a > b);
            } else {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn ellipticity_checks() {
        let f = Operator::<f64>::laplacian(2);
        let r = check_ellipticity(&f, 100, 42).unwrap();
        assert!((r.observed_ratio - 1.0).abs() < 1e-9);

        let p = Operator::<f64>::pucci_plus(2, 1.0, 2.0);
        let r = check_ellipticity(&p, 200, 42).unwrap();
        assert!(r.observed_ratio <= 2.0 + 1e-9);
        // tight on N = diag(1, 0): F(M)−F(M+N) = P⁺(M+N)−P⁺(M) = Λ at M = 0
        let m0 = SymMat::zero(2);
        let n = SymMat::diag(&[1.0, 0.0]);
        let d = p.eval(&m0, &Vect::zero(2)).unwrap() - p.eval(&n, &Vect::zero(2)).unwrap();
        assert!((d - 2.0).abs() < 1e-13);

        let fe = perturb_operator(&Operator::<f64>::laplacian(3), &Vect::axis(3, 0), 0.5).unwrap();
        let r = check_ellipticity(&fe, 200, 7).unwrap();
        assert!(r.observed_ratio <= 1.5 + 1e-9);
    }

    #[test]
    fn torus_function_eval_and_mean() {
        let psi = TorusFunction::<f64>::cosine(2, 1.0, &[1, 0], 0.0).shift_const(0.3);
        let y = Vect::from_f64s(&[0.25, 0.9]);
        assert!((psi.eval(&y) - 0.3).abs() < 1e-15);
        assert!((psi.mean() - 0.3).abs() < 1e-15);
        // periodicity
        let y2 = Vect::from_f64s(&[1.25, -0.1]);
        let z = Vect::from_f64s(&[0.25, 0.9]);
        assert!((psi.eval(&y2) - psi.eval(&z)).abs() < 1e-12);
    }

    #[test]
    fn grid_torus_function_interpolates() {
        let n = 8usize;
        let mut values = vec![0.0f64; n * n];
        for j in 0..n {
            for i in 0..n {
                let y: Vect<f64> = Vect::from_f64s(&[i as f64 / n as f64, j as f64 / n as f64]);
                values[i + j * n] = (2.0 * std::f64::consts::PI * y.get(0)).cos();
            }
        }
        let g = TorusFunction::Grid { dim: 2, n: [n, n, 0], values };
        // exact at nodes, close off-grid
        let y = Vect::from_f64s(&[0.375, 0.2]);
        assert!((g.eval(&y) - (2.0 * std::f64::consts::PI * 0.375).cos()).abs() < 1e-12);
        let y = Vect::from_f64s(&[0.4, 0.2]);
        assert!((g.eval(&y) - (2.0 * std::f64::consts::PI * 0.4).cos()).abs() < 0.05);
    }

    #[test]
    fn perturb_boundary_cases() {
        let zero = TorusFunction::<f64>::zero(3);
        let xi = lv(&[0, 0, 1]);
        let p = perturb_boundary(&zero, &xi, 0.5).unwrap();
        let y = Vect::from_f64s(&[0.2, 0.7, 0.125]);
        assert!((p.eval(&y) - 0.5 * (2.0 * std::f64::consts::PI * 0.125).cos()).abs() < 1e-14);

        let same = perturb_boundary(&zero, &xi, 0.0).unwrap();
        assert_eq!(same.eval(&y), 0.0);

        let base = TorusFunction::<f64>::cosine(3, 1.0, &[0, 0, 1], 0.0);
        let doubled = perturb_boundary(&base, &xi, 1.0).unwrap();
        assert!((doubled.eval(&y) - 2.0 * base.eval(&y)).abs() < 1e-14);
    }

    #[test]
    fn pucci_family_respects_bounds() {
        let fam = pucci_frame_family::<f64>(2, 1.0, 2.0, 16);
        assert!(fam.len() > 16);
        for m in &fam {
            let e = m.eigenvalues();
            assert!(e[0] > 1.0 - 1e-12 && e[1] < 2.0 + 1e-12);
        }
        // finite-family Pucci-plus approximates from above: min over family ≥ −P⁺
        let f = Operator::<f64>::pucci_plus(2, 1.0, 2.0);
        let g = f.as_game(16).unwrap();
        let m = SymMat::from_rows(&[&[0.7, -0.4], &[-0.4, -1.2]]).unwrap();
        let approx = g.eval(&m, &Vect::zero(2));
        let exact = f.eval(&m, &Vect::zero(2)).unwrap();
        assert!(approx >= exact - 1e-12);
        assert!(approx - exact < 0.05 * (1.0 + m.norm_inf()));
    }
}
