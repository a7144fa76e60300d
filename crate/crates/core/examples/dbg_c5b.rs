// scratch: isolate the k-strip bias: Laplacian oracle + h refinement
use std::io::Write;
use std::time::Instant;
use bltail_core::cell::{extract_tail, solve_cell, CellKnobs, CellSpec};
use bltail_core::lattice::LatticeVector;
use bltail_core::linalg::Vect;
use bltail_core::operators::{Operator, TorusFunction};

fn say(msg: String) { println!("{msg}"); std::io::stdout().flush().unwrap(); }

fn main() {
    let psi = TorusFunction::cosine(3, 0.5, &[0, 0, 1], 0.0)
        .add_scaled(&TorusFunction::cosine(3, 0.3, &[1, 0, 0], 0.0), 1.0)
        .unwrap();
    for (name, op) in [("lap", Operator::<f64>::laplacian(3)), ("pucci", Operator::<f64>::pucci_plus(3, 1.0, 2.0))] {
        for (k, h, df) in [(10i64, 1.0/7.0, 2.2), (10, 1.0/10.0, 2.2), (5, 1.0/8.0, 3.0), (5, 1.0/12.0, 3.0)] {
            let t0 = Instant::now();
            let xik = LatticeVector::new(&[-1, 0, k]).unwrap();
            let knobs = CellKnobs { h, depth_factor: df, frames: 16, ..Default::default() };
            let spec = CellSpec { op: &op, psi: &psi, xi: xik, tau: Vect::zero(3), knobs };
            match solve_cell(&spec) {
                Ok(sol) => {
                    let tail = extract_tail(&sol.u).unwrap();
                    say(format!("{name} k={k} h={h:.4}: mu={:+.6} resid={:.2e} wall={:.0}s", tail.mu, tail.residual_osc, t0.elapsed().as_secs_f64()));
                }
                Err(e) => say(format!("{name} k={k} h={h:.4}: FAILED {e}")),
            }
        }
    }
}
