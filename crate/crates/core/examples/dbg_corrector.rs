// scratch: trace spread decay for the failing corrector configs
use bltail_core::homogenize::{effective_operator, CorrectorKnobs};
use bltail_core::linalg::SymMat;
use bltail_core::operators::{MatrixField, Operator, TorusFunction};

fn op2() -> Operator<f64> {
    let a = TorusFunction::<f64>::cosine(2, 1.0, &[1, 0], -std::f64::consts::FRAC_PI_2).shift_const(2.0);
    Operator::linear(MatrixField::isotropic(a), 3.0).unwrap()
}

fn main() {
    let op = op2();
    let mut m = SymMat::zero(2);
    m.set(0, 0, 1.0);
    for (label, m, n, tol) in [
        ("e11 n=48 tol=1e-8", m, 48usize, 1e-8f64),
        ("Id  n=32 tol=1e-7", SymMat::identity(2), 32, 1e-7),
    ] {
        let knobs = CorrectorKnobs { torus_n: n, tol, warm_start: false, max_steps: 400000, ..Default::default() };
        match effective_operator(&op, &m, &knobs) {
            Ok(sol) => println!("{label}: fbar={:+.8} iters={} spread={:.2e}", sol.fbar, sol.iterations, sol.spread),
            Err(e) => println!("{label}: FAILED {e}"),
        }
    }
}
