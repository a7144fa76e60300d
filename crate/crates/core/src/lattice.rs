//! Number theory of rational directions: irreducibility, the boundary
//! period T(ξ̂), tangent lattice bases, simultaneous Dirichlet approximation
//! and geodesic geometry on the sphere of normals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vect;
use crate::scalar::{cnt, lit, Real};

/// Nonzero integer lattice vector in Z^d, d ∈ {2, 3}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeVector {
    pub dim: usize,
    comps: [i64; 3],
}

impl LatticeVector {
    pub fn new(comps: &[i64]) -> Result<Self> {
        let dim = comps.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::Dimension { expected: 3, got: dim });
        }
        if comps.iter().all(|&c| c == 0) {
            return Err(Error::Precondition("lattice vector must be nonzero".into()));
        }
        let mut a = [0i64; 3];
        a[..dim].copy_from_slice(comps);
        Ok(LatticeVector { dim, comps: a })
    }

    pub fn comps(&self) -> &[i64] {
        &self.comps[..self.dim]
    }

    pub fn get(&self, i: usize) -> i64 {
        self.comps[i]
    }

    pub fn gcd(&self) -> i64 {
        self.comps().iter().fold(0i64, |g, &c| gcd(g, c.abs()))
    }

    pub fn dot(&self, o: &LatticeVector) -> i64 {
        self.comps().iter().zip(o.comps()).map(|(a, b)| a * b).sum()
    }

    pub fn norm2(&self) -> i64 {
        self.dot(self)
    }

    pub fn norm<T: Real>(&self) -> T {
        lit::<T>(self.norm2() as f64).sqrt()
    }

    pub fn norm_inf(&self) -> i64 {
        self.comps().iter().map(|c| c.abs()).max().unwrap()
    }

    /// Unit vector ξ̂ in the working scalar type.
    pub fn hat<T: Real>(&self) -> Vect<T> {
        let n = self.norm::<T>();
        let mut v = Vect::zero(self.dim);
        for i in 0..self.dim {
            v.set(i, lit::<T>(self.comps[i] as f64) / n);
        }
        v
    }

    pub fn to_vect<T: Real>(&self) -> Vect<T> {
        let mut v = Vect::zero(self.dim);
        for i in 0..self.dim {
            v.set(i, lit::<T>(self.comps[i] as f64));
        }
        v
    }

    pub fn reduced(&self) -> LatticeVector {
        let g = self.gcd();
        let mut a = [0i64; 3];
        for i in 0..self.dim {
            a[i] = self.comps[i] / g;
        }
        LatticeVector { dim: self.dim, comps: a }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Extended gcd: returns (g, u, v) with u·a + v·b = g ≥ 0.
fn egcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        if a < 0 {
            (-a, -1, 0)
        } else {
            (a, 1, 0)
        }
    } else {
        let (g, u, v) = egcd(b, a % b);
        (g, v, u - (a / b) * v)
    }
}

/// true iff gcd of the components is 1.
pub fn is_irreducible(xi: &LatticeVector) -> bool {
    xi.gcd() == 1
}

/// Boundary period T(ξ̂) = 1/|ξ| of the hyperplane lattice for irreducible ξ.
pub fn period_t<T: Real>(xi: &LatticeVector) -> Result<T> {
    if !is_irreducible(xi) {
        return Err(Error::Precondition(format!(
            "period_t requires an irreducible lattice vector, gcd = {}",
            xi.gcd()
        )));
    }
    Ok(T::one() / xi.norm::<T>())
}

/// Tangent vectors f^j = ξ_m e_j − ξ_j e_m where m is the index of the
/// largest |component| (first such index on ties). Each f^j ⊥ ξ, |f^j| ≤ |ξ|.
pub fn tangent_basis(xi: &LatticeVector) -> Vec<LatticeVector> {
    let d = xi.dim;
    let m = (0..d)
        .max_by_key(|&i| (xi.get(i).abs(), std::cmp::Reverse(i)))
        .unwrap();
    let mut out = Vec::with_capacity(d - 1);
    for j in 0..d {
        if j == m {
            continue;
        }
        let mut c = [0i64; 3];
        c[j] = xi.get(m);
        c[m] = -xi.get(j);
        out.push(LatticeVector { dim: d, comps: c });
    }
    out
}

/// Exact basis of the full tangent lattice {x ∈ Z^d : x·ξ = 0}, Lagrange
/// reduced. Unlike `tangent_basis` this never spans a strict sublattice,
/// which keeps strip periodicity cells minimal.
pub fn tangent_lattice_basis(xi: &LatticeVector) -> Result<Vec<LatticeVector>> {
    let xi = xi.reduced();
    match xi.dim {
        2 => {
            let v = LatticeVector { dim: 2, comps: [-xi.get(1), xi.get(0), 0] };
            Ok(vec![v])
        }
        3 => {
            let (x1, x2, x3) = (xi.get(0), xi.get(1), xi.get(2));
            // kernel of (x1 x2 x3): k1 from the first two entries, k2 via Bézout
            let (k1, k2) = if x1 == 0 && x2 == 0 {
                (
                    LatticeVector { dim: 3, comps: [1, 0, 0] },
                    LatticeVector { dim: 3, comps: [0, 1, 0] },
                )
            } else {
                let (g, u, v) = egcd(x1, x2);
                let k1 = LatticeVector { dim: 3, comps: [-x2 / g, x1 / g, 0] };
                let k2 = LatticeVector { dim: 3, comps: [u * x3, v * x3, -g] };
                (k1, k2)
            };
            debug_assert_eq!(k1.dot(&xi), 0);
            debug_assert_eq!(k2.dot(&xi), 0);
            let (a, b) = lagrange_reduce(k1, k2);
            // covolume check: |a × b| must equal |ξ|
            let cr = [
                a.get(1) * b.get(2) - a.get(2) * b.get(1),
                a.get(2) * b.get(0) - a.get(0) * b.get(2),
                a.get(0) * b.get(1) - a.get(1) * b.get(0),
            ];
            let cross2: i64 = cr.iter().map(|c| c * c).sum();
            if cross2 != xi.norm2() {
                return Err(Error::Precondition(format!(
                    "tangent lattice covolume check failed for {:?}",
                    xi.comps()
                )));
            }
            Ok(vec![a, b])
        }
        _ => Err(Error::Dimension { expected: 3, got: xi.dim }),
    }
}

fn lagrange_reduce(mut a: LatticeVector, mut b: LatticeVector) -> (LatticeVector, LatticeVector) {
    if a.norm2() > b.norm2() {
        std::mem::swap(&mut a, &mut b);
    }
    loop {
        // round(b·a / a·a)
        let num = b.dot(&a);
        let den = a.norm2();
        let q = ((2 * num + den.signum() * den) as f64 / (2 * den) as f64).floor() as i64;
        let mut c = [0i64; 3];
        for i in 0..a.dim {
            c[i] = b.get(i) - q * a.get(i);
        }
        let bn = LatticeVector { dim: a.dim, comps: c };
        if bn.norm2() >= a.norm2() {
            return (a, bn);
        }
        b = a;
        a = bn;
    }
}

/// Simultaneous Dirichlet approximation: smallest q ∈ [1, N] with
/// max_i |q·α_i − p_i| ≤ N^{−1/n}, p_i = round(q·α_i).
pub fn dirichlet_approx<T: Real>(alpha: &[T], n_max: u64) -> Result<(Vec<i64>, i64)> {
    if n_max < 1 {
        return Err(Error::Parameter("dirichlet_approx requires N ≥ 1".into()));
    }
    if n_max > 1_000_000 {
        return Err(Error::Parameter(format!(
            "dirichlet_approx search cap exceeded: N = {n_max} > 1e6"
        )));
    }
    let n = alpha.len().max(1);
    let bound = lit::<T>(n_max as f64).powf(-T::one() / cnt(n));
    // the pigeonhole proof gives a strict inequality; fall back to ≤ only
    // when exact ties exhaust the strict search
    for strict in [true, false] {
        for q in 1..=n_max {
            let qf = lit::<T>(q as f64);
            let mut ps = Vec::with_capacity(alpha.len());
            let mut ok = true;
            for &a in alpha {
                let qa = qf * a;
                let p = qa.round();
                let err = (qa - p).abs();
                if (strict && err >= bound) || (!strict && err > bound) {
                    ok = false;
                    break;
                }
                ps.push(p.to_f64().unwrap() as i64);
            }
            if ok {
                return Ok((ps, q as i64));
            }
        }
    }
    Err(Error::Parameter("dirichlet_approx found no admissible q (unexpected)".into()))
}

/// Rationality of a unit direction.
#[derive(Clone, Debug, PartialEq)]
pub enum RationalityTag {
    Rational(LatticeVector),
    Irrational,
    Approximated { xi: LatticeVector, error: f64 },
}

/// Unit direction ν ∈ S^{d−1} with a rationality tag.
#[derive(Clone, Debug)]
pub struct Direction<T> {
    pub v: Vect<T>,
    pub tag: RationalityTag,
}

impl<T: Real> Direction<T> {
    pub fn new(v: Vect<T>) -> Result<Self> {
        let n = v.norm();
        if (n - T::one()).abs() > lit(1e-12) {
            return Err(Error::Precondition(format!(
                "direction must be unit length, |ν| = {}",
                n.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(Direction { v, tag: RationalityTag::Irrational })
    }

    pub fn from_unnormalized(v: Vect<T>) -> Result<Self> {
        Ok(Direction { v: v.normalize()?, tag: RationalityTag::Irrational })
    }

    pub fn from_lattice(xi: &LatticeVector) -> Self {
        Direction { v: xi.hat(), tag: RationalityTag::Rational(xi.reduced()) }
    }

    pub fn dim(&self) -> usize {
        self.v.dim
    }
}

/// Approach direction η ⊥ ξ with |η| = geodesic angle to ν.
#[derive(Clone, Debug)]
pub struct ApproachDirection<T> {
    pub eta: Vect<T>,
    pub degenerate: bool,
}

impl<T: Real> ApproachDirection<T> {
    pub fn angle(&self) -> T {
        self.eta.norm()
    }
}

/// Decompose ν = cos(|η|) ξ̂ − sin(|η|) η̂ into the approach vector η ⊥ ξ.
pub fn approach_direction<T: Real>(nu: &Direction<T>, xi: &LatticeVector) -> Result<ApproachDirection<T>> {
    if nu.dim() != xi.dim {
        return Err(Error::Dimension { expected: xi.dim, got: nu.dim() });
    }
    let xh = xi.hat::<T>();
    let c = nu.v.dot(&xh).min(T::one()).max(-T::one());
    if (c + T::one()).abs() <= lit(1e-14) {
        return Err(Error::Precondition("approach direction undefined for ν = −ξ̂".into()));
    }
    let theta = c.acos();
    let tangential = nu.v.sub(&xh.scale(c));
    let tnorm = tangential.norm();
    if tnorm <= lit(1e-14) {
        return Ok(ApproachDirection { eta: Vect::zero(nu.dim()), degenerate: true });
    }
    let eta_hat = tangential.scale(-T::one() / tnorm);
    Ok(ApproachDirection { eta: eta_hat.scale(theta), degenerate: false })
}

/// Geodesic point ν(t) = cos(t) ξ̂ − sin(t) η̂ leaving ξ̂ with velocity −η̂.
pub fn geodesic_toward<T: Real>(xi: &LatticeVector, eta_hat: &Vect<T>, t: T) -> Result<Direction<T>> {
    let xh = xi.hat::<T>();
    if eta_hat.dim != xi.dim {
        return Err(Error::Dimension { expected: xi.dim, got: eta_hat.dim });
    }
    if xh.dot(eta_hat).abs() > lit(1e-10) {
        return Err(Error::Frame("geodesic velocity must be orthogonal to ξ".into()));
    }
    if t < T::zero() || t > T::FRAC_PI_4() {
        return Err(Error::Parameter("geodesic parameter restricted to [0, π/4]".into()));
    }
    let v = xh.scale(t.cos()).sub(&eta_hat.scale(t.sin()));
    Direction::new(v)
}

/// Replace ν by a nearby irreducible rational direction using Dirichlet's
/// theorem with N = ceil(eps^{−(d−1)/d}). Returns (ξ, gap = |ξ − |ξ|ν|).
pub fn rational_approx_direction<T: Real>(nu: &Direction<T>, eps: T) -> Result<(LatticeVector, T)> {
    if eps <= T::zero() || eps >= lit(0.5) {
        return Err(Error::Parameter("rational_approx_direction requires eps ∈ (0, 1/2)".into()));
    }
    let d = nu.dim();
    if let RationalityTag::Rational(xi) = &nu.tag {
        return Ok((*xi, T::zero()));
    }
    // largest-|component| normalization, ties broken by lowest index
    let m = (0..d)
        .max_by(|&i, &j| {
            nu.v.get(i)
                .abs()
                .partial_cmp(&nu.v.get(j).abs())
                .unwrap()
                .then(j.cmp(&i))
        })
        .unwrap();
    let ratios: Vec<T> = (0..d).filter(|&i| i != m).map(|i| nu.v.get(i) / nu.v.get(m)).collect();
    let n_cap = lit::<T>(10.0)
        .powf(cnt::<T>(6))
        .min(eps.powf(-cnt::<T>(d - 1) / cnt(d)).ceil());
    let n_max = n_cap.to_f64().unwrap().max(1.0) as u64;
    let (ps, q) = dirichlet_approx(&ratios, n_max)?;
    let mut comps = vec![0i64; d];
    comps[m] = q * nu.v.get(m).signum().to_f64().unwrap() as i64;
    let mut k = 0;
    for i in 0..d {
        if i != m {
            comps[i] = ps[k] * nu.v.get(m).signum().to_f64().unwrap() as i64;
            k += 1;
        }
    }
    // exact-rational inputs can still produce q·ν with a common factor
    let xi = LatticeVector::new(&comps)?.reduced();
    let gap = xi.to_vect::<T>().sub(&nu.v.scale(xi.norm())).norm();
    Ok((xi, gap))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(c: &[i64]) -> LatticeVector {
        LatticeVector::new(c).unwrap()
    }

    #[test]
    fn irreducibility() {
        assert!(is_irreducible(&lv(&[2, 1, 0])));
        assert!(!is_irreducible(&lv(&[2, 4, 6])));
        assert!(!is_irreducible(&lv(&[0, 0, 5])));
    }

    #[test]
    fn period_values() {
        assert!((period_t::<f64>(&lv(&[1, 0, 0])).unwrap() - 1.0).abs() < 1e-15);
        assert!((period_t::<f64>(&lv(&[1, 1])).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((period_t::<f64>(&lv(&[3, 4])).unwrap() - 0.2).abs() < 1e-15);
        assert!(period_t::<f64>(&lv(&[2, 4])).is_err());
    }

    #[test]
    fn tangent_basis_examples() {
        let f = tangent_basis(&lv(&[1, 2]));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].comps(), &[2, -1]);
        assert_eq!(f[0].dot(&lv(&[1, 2])), 0);
        assert_eq!(f[0].norm2(), 5);

        let f = tangent_basis(&lv(&[0, 0, 1]));
        assert_eq!(f[0].comps(), &[1, 0, 0]);
        assert_eq!(f[1].comps(), &[0, 1, 0]);

        let xi = lv(&[1, 1, 2]);
        let f = tangent_basis(&xi);
        assert_eq!(f[0].comps(), &[2, 0, -1]);
        assert_eq!(f[1].comps(), &[0, 2, -1]);
        for v in &f {
            assert_eq!(v.dot(&xi), 0);
            assert!(v.norm2() <= xi.norm2());
        }
    }

    #[test]
    fn tangent_lattice_full_rank_and_minimal() {
        // Lemma-style construction spans a sublattice here; the exact basis
        // must recover e2.
        let xi = lv(&[-1, 0, 10]);
        let b = tangent_lattice_basis(&xi).unwrap();
        assert_eq!(b.len(), 2);
        for v in &b {
            assert_eq!(v.dot(&xi), 0);
        }
        let shortest = b.iter().map(|v| v.norm2()).min().unwrap();
        assert_eq!(shortest, 1); // contains ±e2
    }

    #[test]
    fn tangent_lattice_various() {
        for c in [[1i64, 1, 2], [3, 4, 5], [2, -3, 7], [0, 1, 0], [5, 0, 3]] {
            let xi = lv(&c).reduced();
            let b = tangent_lattice_basis(&xi).unwrap();
            for v in &b {
                assert_eq!(v.dot(&xi), 0, "xi={c:?}");
            }
        }
    }

    #[test]
    fn dirichlet_examples() {
        let (p, q) = dirichlet_approx::<f64>(&[2f64.sqrt()], 10).unwrap();
        assert_eq!((q, p[0]), (5, 7));
        assert!((5.0 * 2f64.sqrt() - 7.0).abs() <= 0.1 + 1e-12);

        let (p, q) = dirichlet_approx::<f64>(&[0.5], 2).unwrap();
        assert_eq!((q, p[0]), (2, 1));

        let (p, q) = dirichlet_approx::<f64>(&[2f64.sqrt(), 3f64.sqrt()], 49).unwrap();
        let bound = 49f64.powf(-0.5);
        assert!((q as f64 * 2f64.sqrt() - p[0] as f64).abs() <= bound + 1e-12);
        assert!((q as f64 * 3f64.sqrt() - p[1] as f64).abs() <= bound + 1e-12);
    }

    #[test]
    fn dirichlet_vs_exhaustive_minimizer() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = 1 + rng.gen_range(0..2usize);
            let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let cap = rng.gen_range(1..200u64);
            let (p, q) = dirichlet_approx(&alpha, cap).unwrap();
            let bound = (cap as f64).powf(-1.0 / n as f64);
            let err = |q: i64| -> f64 {
                alpha
                    .iter()
                    .map(|a| {
                        let qa = q as f64 * a;
                        (qa - qa.round()).abs()
                    })
                    .fold(0.0, f64::max)
            };
            // the theorem bound holds
            let e = alpha
                .iter()
                .zip(&p)
                .map(|(a, p)| (q as f64 * a - *p as f64).abs())
                .fold(0.0, f64::max);
            assert!(e <= bound + 1e-12);
            // and q is the smallest strictly-admissible denominator
            for qq in 1..q {
                assert!(err(qq) >= bound - 1e-12, "q={q} not minimal for alpha={alpha:?} N={cap}");
            }
        }
    }

    #[test]
    fn approx_direction_rational_inputs() {
        let nu = Direction::<f64>::from_lattice(&lv(&[1, 0, 0]));
        let (xi, gap) = rational_approx_direction(&nu, 0.05).unwrap();
        assert_eq!(xi.comps(), &[1, 0, 0]);
        assert_eq!(gap, 0.0);

        let nu = Direction::<f64>::from_unnormalized(Vect::from_f64s(&[3.0, 4.0])).unwrap();
        let (xi, gap) = rational_approx_direction(&nu, 0.05).unwrap();
        assert_eq!(xi.comps(), &[3, 4]);
        assert!(gap < 1e-9);
    }

    #[test]
    fn approx_direction_golden() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let nu = Direction::<f64>::from_unnormalized(Vect::from_f64s(&[1.0, phi])).unwrap();
        let (xi, gap) = rational_approx_direction(&nu, 0.05).unwrap();
        // consecutive Fibonacci components
        let fib = [1i64, 2, 3, 5, 8, 13, 21, 34, 55];
        let c = xi.comps();
        assert!(fib.windows(2).any(|w| c == [w[0], w[1]]), "got {:?}", c);
        let n = (0.05f64).powf(-0.5).ceil();
        assert!(gap <= 2.0 * n.powf(-1.0) + 0.05 * xi.norm::<f64>());
    }

    #[test]
    fn approach_geodesic_roundtrip() {
        let xi = lv(&[0, 0, 1]);
        let eta_hat = Vect::from_f64s(&[1.0, 0.0, 0.0]);
        for &t in &[0.0f64, 0.05, 0.2, 0.7] {
            let nu = geodesic_toward(&xi, &eta_hat, t).unwrap();
            let ad = approach_direction(&nu, &xi).unwrap();
            if t == 0.0 {
                assert!(ad.degenerate);
            } else {
                assert!((ad.angle() - t).abs() < 1e-12);
                assert!(ad.eta.sub(&eta_hat.scale(t)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn approach_direction_examples() {
        let xi = lv(&[0, 0, 1]);
        let th: f64 = std::f64::consts::PI / 6.0;
        let nu: Direction<f64> =
            Direction::new(Vect::from_f64s(&[-th.sin(), 0.0, th.cos()])).unwrap();
        let ad = approach_direction(&nu, &xi).unwrap();
        assert!((ad.angle() - th).abs() < 1e-12);
        assert!((ad.eta.get(0) - th).abs() < 1e-12);

        // |η| = |ν − ξ̂| + O(|ν − ξ̂|²)
        let t: f64 = 0.1;
        let dir = Vect::from_f64s(&[1.0, 1.0, 0.0]).normalize().unwrap();
        let nu = Direction::new(
            Vect::from_f64s(&[0.0, 0.0, t.cos()]).sub(&dir.scale(t.sin()).scale(-1.0).scale(-1.0)),
        )
        .unwrap();
        let ad = approach_direction(&nu, &xi).unwrap();
        let gap = nu.v.sub(&xi.hat::<f64>()).norm();
        assert!((ad.angle() - gap).abs() < 2e-3);
    }

    #[test]
    fn geodesic_example_components() {
        let xi = lv(&[0, 0, 1]);
        let nu = geodesic_toward(&xi, &Vect::from_f64s(&[1.0, 0.0, 0.0]), 0.2).unwrap();
        assert!((nu.v.get(0) + 0.2f64.sin()).abs() < 1e-15);
        assert!((nu.v.get(2) - 0.2f64.cos()).abs() < 1e-15);
    }
}
