// scratch: calibrate criterion-5 geometry, unbuffered
use std::io::Write;
use std::time::Instant;
use bltail_core::cell::{compute_m, extract_tail, solve_cell, CellKnobs, CellSpec};
use bltail_core::homogenize::CorrectorKnobs;
use bltail_core::lattice::LatticeVector;
use bltail_core::linalg::Vect;
use bltail_core::operators::{Operator, TorusFunction};
use bltail_core::reduction::{l_xi_with_profile, ReductionKnobs};

fn say(msg: String) {
    println!("{msg}");
    std::io::stdout().flush().unwrap();
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ks: Vec<i64> = args.get(1).map(|s| s.split(',').map(|x| x.parse().unwrap()).collect()).unwrap_or(vec![5, 10, 20]);
    let op = Operator::<f64>::pucci_plus(3, 1.0, 2.0);
    let psi = TorusFunction::cosine(3, 0.5, &[0, 0, 1], 0.0)
        .add_scaled(&TorusFunction::cosine(3, 0.3, &[1, 0, 0], 0.0), 1.0)
        .unwrap();
    let xi = LatticeVector::new(&[0, 0, 1]).unwrap();

    let t0 = Instant::now();
    let cell = CellKnobs { h: 1.0 / 12.0, depth_factor: 4.0, frames: 16, ..Default::default() };
    let m = compute_m(&op, &psi, &xi, 12, &cell).unwrap();
    say(format!("m profile in {:.1}s; m(0)={:.5} mean={:.5} osc={:.5} maxresid={:.2e}", t0.elapsed().as_secs_f64(), m.samples[0], m.mean(), m.max()-m.min(), m.max_residual()));

    let red = ReductionKnobs { nodes_per_period: 24, depth_factor: 4.0, ..Default::default() };
    let t0 = Instant::now();
    let lim = l_xi_with_profile(&op, &m, &xi, &Vect::axis(3,0), &red, &CorrectorKnobs::default(), None).unwrap();
    say(format!("L(e1) = {:.6} ± {:.2e} in {:.1}s", lim.value, lim.uncertainty, t0.elapsed().as_secs_f64()));
    let t0 = Instant::now();
    let lim2 = l_xi_with_profile(&op, &m, &xi, &Vect::axis(3,1), &red, &CorrectorKnobs::default(), None).unwrap();
    say(format!("L(e2) = {:.6} ± {:.2e} in {:.1}s", lim2.value, lim2.uncertainty, t0.elapsed().as_secs_f64()));

    for k in ks {
        let (h, df) = match k { 5 => (1.0/8.0, 3.0), 10 => (1.0/7.0, 2.2), 20 => (1.0/6.0, 1.8), _ => (1.0/5.0, 1.7) };
        let t0 = Instant::now();
        let xik = LatticeVector::new(&[-1, 0, k]).unwrap();
        let knobs = CellKnobs { h, depth_factor: df, frames: 16, two_pass: true, ..Default::default() };
        let spec = CellSpec { op: &op, psi: &psi, xi: xik, tau: Vect::zero(3), knobs };
        match solve_cell(&spec) {
            Ok(sol) => {
                let tail = extract_tail(&sol.u).unwrap();
                say(format!("k={k}: mu={:.6} |mu-L|={:.3e} resid={:.2e} depth={:.1} wall={:.1}s it={} sw={}",
                    tail.mu, (tail.mu - lim.value).abs(), tail.residual_osc, sol.depth, t0.elapsed().as_secs_f64(), sol.report.iterations, sol.report.sweeps));
            }
            Err(e) => say(format!("k={k}: FAILED {e} after {:.1}s", t0.elapsed().as_secs_f64())),
        }
    }
}
