//! Small dense linear algebra for d ∈ {2, 3}: vectors, symmetric matrices,
//! Jacobi eigenvalues, Gaussian elimination and a nonnegative least squares
//! routine used by the stencil decompositions.

use crate::error::{Error, Result};
use crate::scalar::{cnt, lit, Real};

pub const MAX_DIM: usize = 3;

/// Fixed-capacity vector with runtime dimension 1..=3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vect<T> {
    pub dim: usize,
    a: [T; MAX_DIM],
}

impl<T: Real> Vect<T> {
    pub fn zero(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        Vect { dim, a: [T::zero(); MAX_DIM] }
    }

    pub fn from_slice(v: &[T]) -> Self {
        let mut out = Self::zero(v.len());
        out.a[..v.len()].copy_from_slice(v);
        out
    }

    pub fn from_f64s(v: &[f64]) -> Self {
        let mut out = Self::zero(v.len());
        for (i, x) in v.iter().enumerate() {
            out.a[i] = lit(*x);
        }
        out
    }

    pub fn axis(dim: usize, k: usize) -> Self {
        let mut v = Self::zero(dim);
        v.a[k] = T::one();
        v
    }

    #[inline]
    pub fn get(&self, i: usize) -> T {
        debug_assert!(i < self.dim);
        self.a[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: T) {
        debug_assert!(i < self.dim);
        self.a[i] = v;
    }

    pub fn comps(&self) -> &[T] {
        &self.a[..self.dim]
    }

    pub fn dot(&self, o: &Self) -> T {
        debug_assert_eq!(self.dim, o.dim);
        let mut s = T::zero();
        for i in 0..self.dim {
            s += self.a[i] * o.a[i];
        }
        s
    }

    pub fn norm2(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm2().sqrt()
    }

    pub fn norm_inf(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.dim {
            m = m.max(self.a[i].abs());
        }
        m
    }

    pub fn add(&self, o: &Self) -> Self {
        debug_assert_eq!(self.dim, o.dim);
        let mut r = *self;
        for i in 0..self.dim {
            r.a[i] += o.a[i];
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        debug_assert_eq!(self.dim, o.dim);
        let mut r = *self;
        for i in 0..self.dim {
            r.a[i] -= o.a[i];
        }
        r
    }

    pub fn scale(&self, t: T) -> Self {
        let mut r = *self;
        for i in 0..self.dim {
            r.a[i] = r.a[i] * t;
        }
        r
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n <= T::epsilon() * cnt(16) {
            return Err(Error::Parameter("cannot normalize near-zero vector".into()));
        }
        Ok(self.scale(T::one() / n))
    }

    /// Cross product, dim 3 only.
    pub fn cross(&self, o: &Self) -> Self {
        debug_assert_eq!(self.dim, 3);
        let (a, b) = (&self.a, &o.a);
        Vect {
            dim: 3,
            a: [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ],
        }
    }

    pub fn to_f64s(&self) -> Vec<f64> {
        self.comps().iter().map(|x| x.to_f64().unwrap()).collect()
    }
}

/// Symmetric d×d matrix, d ∈ {2, 3}, stored dense.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMat<T> {
    pub dim: usize,
    a: [[T; MAX_DIM]; MAX_DIM],
}

impl<T: Real> SymMat<T> {
    pub fn zero(dim: usize) -> Self {
        assert!((2..=MAX_DIM).contains(&dim));
        SymMat { dim, a: [[T::zero(); MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zero(dim);
        for i in 0..dim {
            m.a[i][i] = T::one();
        }
        m
    }

    pub fn diag(v: &[T]) -> Self {
        let mut m = Self::zero(v.len());
        for (i, x) in v.iter().enumerate() {
            m.a[i][i] = *x;
        }
        m
    }

    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let d = rows.len();
        let mut m = Self::zero(d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Dimension { expected: d, got: r.len() });
            }
            for (j, x) in r.iter().enumerate() {
                m.a[i][j] = *x;
            }
        }
        m.check_symmetric()?;
        Ok(m)
    }

    pub fn check_symmetric(&self) -> Result<()> {
        let tol = self.norm_inf().max(T::one()) * T::epsilon() * cnt(64);
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                if (self.a[i][j] - self.a[j][i]).abs() > tol {
                    return Err(Error::Parameter("matrix is not symmetric".into()));
                }
            }
        }
        Ok(())
    }

    /// Rank-one matrix v ⊗ v.
    pub fn outer(v: &Vect<T>) -> Self {
        let mut m = Self::zero(v.dim);
        for i in 0..v.dim {
            for j in 0..v.dim {
                m.a[i][j] = v.get(i) * v.get(j);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.dim && j < self.dim);
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.dim && j < self.dim);
        self.a[i][j] = v;
        self.a[j][i] = v;
    }

    pub fn trace(&self) -> T {
        let mut s = T::zero();
        for i in 0..self.dim {
            s += self.a[i][i];
        }
        s
    }

    pub fn add(&self, o: &Self) -> Self {
        debug_assert_eq!(self.dim, o.dim);
        let mut r = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                r.a[i][j] += o.a[i][j];
            }
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        debug_assert_eq!(self.dim, o.dim);
        let mut r = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                r.a[i][j] -= o.a[i][j];
            }
        }
        r
    }

    pub fn scale(&self, t: T) -> Self {
        let mut r = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                r.a[i][j] = r.a[i][j] * t;
            }
        }
        r
    }

    pub fn mul_vec(&self, v: &Vect<T>) -> Vect<T> {
        debug_assert_eq!(self.dim, v.dim);
        let mut r = Vect::zero(self.dim);
        for i in 0..self.dim {
            let mut s = T::zero();
            for j in 0..self.dim {
                s += self.a[i][j] * v.get(j);
            }
            r.set(i, s);
        }
        r
    }

    /// Tr(self · other) for symmetric matrices.
    pub fn frobenius_inner(&self, o: &Self) -> T {
        debug_assert_eq!(self.dim, o.dim);
        let mut s = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.a[i][j] * o.a[i][j];
            }
        }
        s
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_inner(self).sqrt()
    }

    pub fn norm_inf(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max(self.a[i][j].abs());
            }
        }
        m
    }

    /// Quadratic form vᵀ M v.
    pub fn quad_form(&self, v: &Vect<T>) -> T {
        self.mul_vec(v).dot(v)
    }

    /// Eigenvalues in ascending order via cyclic Jacobi.
    pub fn eigenvalues(&self) -> Vec<T> {
        let d = self.dim;
        let mut m = self.a;
        let scale = self.norm_inf().max(T::epsilon());
        let tol = scale * T::epsilon() * cnt(8);
        for _sweep in 0..64 {
            let mut off = T::zero();
            for i in 0..d {
                for j in (i + 1)..d {
                    off = off.max(m[i][j].abs());
                }
            }
            if off <= tol {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    if m[p][q].abs() <= tol * lit(1e-2) {
                        continue;
                    }
                    // Jacobi rotation annihilating m[p][q]
                    let theta = (m[q][q] - m[p][p]) / (lit::<T>(2.0) * m[p][q]);
                    let t = {
                        let s = if theta >= T::zero() { T::one() } else { -T::one() };
                        s / (theta.abs() + (theta * theta + T::one()).sqrt())
                    };
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let (mkp, mkq) = (m[k][p], m[k][q]);
                        m[k][p] = c * mkp - s * mkq;
                        m[k][q] = s * mkp + c * mkq;
                    }
                    for k in 0..d {
                        let (mpk, mqk) = (m[p][k], m[q][k]);
                        m[p][k] = c * mpk - s * mqk;
                        m[q][k] = s * mpk + c * mqk;
                    }
                }
            }
        }
        let mut eig: Vec<T> = (0..d).map(|i| m[i][i]).collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eig
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> T {
        *self.eigenvalues().last().unwrap()
    }
}

/// Solve a dense n×n system by Gaussian elimination with partial pivoting.
/// Returns None when the matrix is numerically singular.
pub fn solve_dense<T: Real>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut m: Vec<Vec<T>> = a.iter().map(|r| r.clone()).collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() < T::epsilon() * cnt(64) {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in (col + 1)..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                let v = m[col][c];
                m[r][c] = m[r][c] - f * v;
            }
            let v = rhs[col];
            rhs[r] = rhs[r] - f * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for c in (row + 1)..n {
            s = s - m[row][c] * x[c];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

/// Nonnegative least squares min ‖Ax − b‖, Lawson–Hanson active set,
/// followed by a null-space polish towards the minimum-norm exact solution
/// when the residual is (numerically) zero. The polish makes the output
/// unique across column orderings.
pub fn nnls<T: Real>(cols: &[Vec<T>], b: &[T], max_iter: usize) -> (Vec<T>, T) {
    let ncols = cols.len();
    let nrows = b.len();
    let mut x = vec![T::zero(); ncols];
    let mut passive: Vec<usize> = Vec::new();
    let scale = b.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::one());
    let tol = scale * T::epsilon() * cnt(256);

    let residual = |x: &[T]| -> Vec<T> {
        let mut r = b.to_vec();
        for (j, col) in cols.iter().enumerate() {
            if x[j] != T::zero() {
                for i in 0..nrows {
                    r[i] = r[i] - col[i] * x[j];
                }
            }
        }
        r
    };

    // least squares restricted to the passive set via normal equations
    let solve_passive = |p: &[usize]| -> Option<Vec<T>> {
        let k = p.len();
        let mut g = vec![vec![T::zero(); k]; k];
        let mut rhs = vec![T::zero(); k];
        for (ai, &ci) in p.iter().enumerate() {
            for (aj, &cj) in p.iter().enumerate() {
                let mut s = T::zero();
                for r in 0..nrows {
                    s += cols[ci][r] * cols[cj][r];
                }
                g[ai][aj] = s;
            }
            let mut s = T::zero();
            for r in 0..nrows {
                s += cols[ci][r] * b[r];
            }
            rhs[ai] = s;
        }
        // light Tikhonov guard keeps near-dependent passive sets solvable
        for i in 0..k {
            g[i][i] += scale * T::epsilon() * cnt(4);
        }
        solve_dense(&g, &rhs)
    };

    for _ in 0..max_iter.max(4 * ncols) {
        let r = residual(&x);
        // gradient w = Aᵀ r on the active (zero) set
        let mut best = None;
        for j in 0..ncols {
            if passive.contains(&j) {
                continue;
            }
            let mut w = T::zero();
            for i in 0..nrows {
                w += cols[j][i] * r[i];
            }
            if w > tol {
                match best {
                    Some((_, bw)) if w <= bw => {}
                    _ => best = Some((j, w)),
                }
            }
        }
        let Some((enter, _)) = best else { break };
        passive.push(enter);
        // inner loop: enforce nonnegativity on the passive solution
        loop {
            let Some(z) = solve_passive(&passive) else {
                passive.pop();
                break;
            };
            if z.iter().all(|v| *v > -tol) {
                for (&j, v) in passive.iter().zip(z.iter()) {
                    x[j] = v.max(T::zero());
                }
                for j in 0..ncols {
                    if !passive.contains(&j) {
                        x[j] = T::zero();
                    }
                }
                break;
            }
            // step back along the segment to the feasibility boundary
            let mut alpha = T::one();
            for (idx, &j) in passive.iter().enumerate() {
                if z[idx] <= -tol {
                    let a = x[j] / (x[j] - z[idx]);
                    alpha = alpha.min(a);
                }
            }
            for (idx, &j) in passive.iter().enumerate() {
                x[j] = x[j] + alpha * (z[idx] - x[j]);
            }
            let drop: Vec<usize> =
                passive.iter().copied().filter(|&j| x[j] <= tol).collect();
            for j in drop {
                x[j] = T::zero();
                passive.retain(|&p| p != j);
            }
        }
    }

    let r = residual(&x);
    let rnorm = r.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
    if rnorm <= tol * cnt(4) {
        polish_min_norm(cols, b, &mut x, tol);
    }
    let r = residual(&x);
    let rnorm = r.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
    (x, rnorm)
}

/// Move an exact nonnegative solution towards the minimum-norm point of the
/// feasible polytope {x ≥ 0 : Ax = b}. Projected steps on the null space.
fn polish_min_norm<T: Real>(cols: &[Vec<T>], b: &[T], x: &mut [T], tol: T) {
    let ncols = cols.len();
    let nrows = b.len();
    // null-space basis of A (columns as variables) via Gram-Schmidt on
    // candidate kernel vectors obtained from the normal matrix
    let mut at_a = vec![vec![T::zero(); ncols]; ncols];
    for i in 0..ncols {
        for j in 0..ncols {
            let mut s = T::zero();
            for r in 0..nrows {
                s += cols[i][r] * cols[j][r];
            }
            at_a[i][j] = s;
        }
    }
    // power-iteration-free kernel extraction: eliminate and read free columns
    let mut m = at_a.clone();
    let mut pivots = Vec::new();
    let mut row = 0usize;
    for col in 0..ncols {
        let mut piv = None;
        for r in row..ncols {
            if m[r][col].abs() > tol {
                piv = Some(r);
                break;
            }
        }
        let Some(p) = piv else { continue };
        m.swap(row, p);
        let d = m[row][col];
        for c in 0..ncols {
            m[row][c] = m[row][c] / d;
        }
        for r in 0..ncols {
            if r != row {
                let f = m[r][col];
                if f != T::zero() {
                    for c in 0..ncols {
                        let v = m[row][c];
                        m[r][c] = m[r][c] - f * v;
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
        if row == ncols {
            break;
        }
    }
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    if free.is_empty() {
        return;
    }
    let mut basis: Vec<Vec<T>> = Vec::new();
    for &fc in &free {
        let mut v = vec![T::zero(); ncols];
        v[fc] = T::one();
        for (ri, &pc) in pivots.iter().enumerate() {
            v[pc] = -m[ri][fc];
        }
        basis.push(v);
    }
    // few rounds of exact minimization over the null space with clipping
    for _ in 0..8 {
        let k = basis.len();
        let mut g = vec![vec![T::zero(); k]; k];
        let mut rhs = vec![T::zero(); k];
        for i in 0..k {
            for j in 0..k {
                let mut s = T::zero();
                for c in 0..ncols {
                    s += basis[i][c] * basis[j][c];
                }
                g[i][j] = s;
            }
            let mut s = T::zero();
            for c in 0..ncols {
                s += basis[i][c] * x[c];
            }
            rhs[i] = -s;
        }
        let Some(step) = solve_dense(&g, &rhs) else { return };
        let mut cand = x.to_vec();
        for (i, s) in step.iter().enumerate() {
            for c in 0..ncols {
                cand[c] = cand[c] + *s * basis[i][c];
            }
        }
        let worst = cand.iter().cloned().fold(T::zero(), T::min);
        if worst >= -tol {
            for (xc, cc) in x.iter_mut().zip(cand.iter()) {
                *xc = cc.max(T::zero());
            }
            return;
        }
        // shrink towards feasibility and retry with the blocked coordinate
        let mut alpha = T::one();
        for c in 0..ncols {
            let d = cand[c] - x[c];
            if d < T::zero() && cand[c] < T::zero() {
                alpha = alpha.min(x[c] / (x[c] - cand[c]));
            }
        }
        for c in 0..ncols {
            let d = cand[c] - x[c];
            x[c] = (x[c] + alpha * d).max(T::zero());
        }
        // freeze coordinates at zero by removing their null-space motion
        let blocked: Vec<usize> =
            (0..ncols).filter(|&c| x[c] <= tol).collect();
        basis.retain(|v| blocked.iter().all(|&c| v[c].abs() <= tol));
        if basis.is_empty() {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_diag() {
        let m = SymMat::<f64>::diag(&[3.0, -1.0]);
        let e = m.eigenvalues();
        assert!((e[0] + 1.0).abs() < 1e-13);
        assert!((e[1] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn eigenvalues_rotated() {
        // eigenvalues 1 and 4, eigenvectors at 45 degrees
        let m = SymMat::<f64>::from_rows(&[&[2.5, 1.5], &[1.5, 2.5]]).unwrap();
        let e = m.eigenvalues();
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_3d() {
        let m = SymMat::<f64>::from_rows(&[
            &[2.0, 1.0, 0.0],
            &[1.0, 2.0, 0.0],
            &[0.0, 0.0, 5.0],
        ])
        .unwrap();
        let e = m.eigenvalues();
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 3.0).abs() < 1e-12);
        assert!((e[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn solve_small_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_dense::<f64>(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nnls_exact_fit() {
        // b = 2*c0 + 0.5*c2
        let cols = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0],
        ];
        let b = [2.5, 0.5, 0.5];
        let (x, r) = nnls::<f64>(&cols, &b, 50);
        assert!(r < 1e-10);
        assert!((x[0] - 2.0).abs() < 1e-9);
        assert!(x[1].abs() < 1e-9);
        assert!((x[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn nnls_infeasible_reports_residual() {
        let cols = vec![vec![1.0, 0.0]];
        let b = [0.0, 1.0];
        let (_, r) = nnls::<f64>(&cols, &b, 50);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generic_f32_instantiation() {
        let m = SymMat::<f32>::diag(&[2.0, 1.0]);
        let e = m.eigenvalues();
        assert!((e[1] - 2.0).abs() < 1e-5);
    }
}
