//! Config-driven experiment runners: continuity sweep, discontinuity lab,
//! decay-rate fits, m_ξ profiles, directional limits, effective operators
//! and Dirichlet approximation tables, with reproducible CSV/JSON reports.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{compute_m, extract_tail, linear_fit, mu_at, stable_hash, CellKnobs, MProfileCache};
use crate::error::{Error, Result};
use crate::grid::{assemble, initial_guess, solve, AssembleSpec, BoxGrid, SolveParams};
use crate::homogenize::{interior_rate_experiment, linear_correctors, CorrectorKnobs};
use crate::lattice::{
    dirichlet_approx, geodesic_toward, tangent_lattice_basis, Direction, LatticeVector,
};
use crate::linalg::{SymMat, Vect};
use crate::operators::{perturb_operator, Operator, TorusFunction};
use crate::opspec::{OperatorSpec, PsiSpec};
use crate::reduction::{
    asymptotic_gap, l_xi_with_profile, m_profile_cached, resolve_direction, ReductionKnobs,
};

/// Verdicts are only issued outside uncertainty bands; the factor is a
/// fixed convention of this lab, not a constant from the literature.
pub const VERDICT_UNCERTAINTY_FACTOR: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Tail,
    Mxi,
    Ltail,
    Homogenize,
    ContinuitySweep,
    DiscontinuityLab,
    RateFit,
    Dirichlet,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Tail => "tail",
            ExperimentKind::Mxi => "mxi",
            ExperimentKind::Ltail => "ltail",
            ExperimentKind::Homogenize => "homogenize",
            ExperimentKind::ContinuitySweep => "continuity-sweep",
            ExperimentKind::DiscontinuityLab => "discontinuity-lab",
            ExperimentKind::RateFit => "rate-fit",
            ExperimentKind::Dirichlet => "dirichlet",
        }
    }
}

/// Numerical defaults, all in one place.
///
/// | knob              | default | meaning                                      |
/// |-------------------|---------|----------------------------------------------|
/// | h                 | 1/16    | strip mesh width                             |
/// | depth_factor      | 6.0     | strip depth in lateral-cell diameters        |
/// | stencil_order     | 2       | axes + diagonals; raised on cone failure     |
/// | frames            | 16      | Pucci rotation-frame count                   |
/// | tol_factor        | 1e-8    | solver tol relative to boundary oscillation  |
/// | abs_tol           | 1e-12   | solver tol floor                             |
/// | max_outer         | 1e5     | Howard outer iteration cap                   |
/// | two_pass          | true    | re-cap far field with the extracted tail     |
/// | m_samples         | 16      | m_ξ samples per 1/|ξ| period                 |
/// | nodes_per_period  | 24      | reduced 2-D problem lateral resolution       |
/// | red_depth_factor  | 6.0     | reduced strip depth in periods               |
/// | refine_check      | true    | h/2 re-solve folded into uncertainties       |
/// | torus_n           | 0=auto  | corrector grid (64 in 2-D, 32 in 3-D)        |
/// | corrector_tol     | 1e-7    | corrector spread target                      |
/// | cells_per_eps     | 8       | slab cells per oscillation period ε          |
/// | accuracy          | 1e-3    | μ accuracy target / approximant budget       |
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsCfg {
    pub h: f64,
    pub depth: Option<f64>,
    pub depth_factor: f64,
    pub stencil_order: usize,
    pub frames: usize,
    pub tol_factor: f64,
    pub abs_tol: f64,
    pub max_outer: usize,
    pub two_pass: bool,
    pub m_samples: usize,
    pub nodes_per_period: usize,
    pub red_depth_factor: f64,
    pub refine_check: bool,
    pub torus_n: usize,
    pub corrector_tol: f64,
    pub cells_per_eps: usize,
    pub accuracy: f64,
}

impl Default for NumericsCfg {
    fn default() -> Self {
        NumericsCfg {
            h: 1.0 / 16.0,
            depth: None,
            depth_factor: 6.0,
            stencil_order: 2,
            frames: 16,
            tol_factor: 1e-8,
            abs_tol: 1e-12,
            max_outer: 100_000,
            two_pass: true,
            m_samples: 16,
            nodes_per_period: 24,
            red_depth_factor: 6.0,
            refine_check: true,
            torus_n: 0,
            corrector_tol: 1e-7,
            cells_per_eps: 8,
            accuracy: 1e-3,
        }
    }
}

impl NumericsCfg {
    pub fn cell_knobs(&self) -> CellKnobs {
        CellKnobs {
            h: self.h,
            depth: self.depth,
            depth_factor: self.depth_factor,
            stencil_order: self.stencil_order,
            frames: self.frames,
            tol_factor: self.tol_factor,
            abs_tol: self.abs_tol,
            max_outer: self.max_outer,
            two_pass: self.two_pass,
            residual_target: None,
            max_doublings: 2,
        }
    }

    pub fn reduction_knobs(&self) -> ReductionKnobs {
        ReductionKnobs {
            nodes_per_period: self.nodes_per_period,
            depth_factor: self.red_depth_factor,
            stencil_order: self.stencil_order,
            frames: self.frames,
            tol_factor: self.tol_factor,
            abs_tol: self.abs_tol,
            max_outer: self.max_outer,
            refine_check: self.refine_check,
        }
    }

    pub fn corrector_knobs(&self) -> CorrectorKnobs {
        CorrectorKnobs {
            torus_n: self.torus_n,
            tol: self.corrector_tol,
            max_steps: self.max_outer.max(200_000),
            stencil_order: self.stencil_order,
            frames: self.frames,
            delta_path: false,
            warm_start: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub operator: Option<OperatorSpec>,
    #[serde(default)]
    pub psi: Option<PsiSpec>,
    #[serde(default)]
    pub xi: Option<Vec<i64>>,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default)]
    pub directions: Vec<Vec<f64>>,
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    #[serde(default)]
    pub eta1: Option<Vec<f64>>,
    #[serde(default)]
    pub eta2: Option<Vec<f64>>,
    #[serde(default = "default_eta_count")]
    pub eta_count: usize,
    #[serde(default)]
    pub t_list: Vec<f64>,
    #[serde(default)]
    pub delta_list: Vec<f64>,
    #[serde(default)]
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub period_list: Vec<f64>,
    #[serde(default)]
    pub alphas: Vec<Vec<f64>>,
    #[serde(default)]
    pub big_n: Option<u64>,
    #[serde(default)]
    pub random_instances: usize,
    #[serde(default)]
    pub scan_count: usize,
    #[serde(default = "default_scan_angle")]
    pub scan_max_angle: f64,
    #[serde(default)]
    pub numerics: NumericsCfg,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub out: Option<String>,
}

fn default_eta_count() -> usize {
    8
}

fn default_scan_angle() -> f64 {
    0.35
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        // accept both a bare config and a manifest wrapper
        let v: serde_json::Value =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("config: {e}")))?;
        let inner = if v.get("config").is_some() && v.get("experiment").is_none() {
            v.get("config").unwrap().clone()
        } else {
            v
        };
        serde_json::from_value(inner).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    fn operator(&self) -> Result<Operator<f64>> {
        self.operator
            .as_ref()
            .ok_or_else(|| Error::Parameter("config needs an [operator] section".into()))?
            .build()
    }

    fn psi(&self, dim: usize) -> Result<TorusFunction<f64>> {
        match &self.psi {
            Some(p) => p.build(),
            None => Ok(TorusFunction::zero(dim)),
        }
    }

    fn xi(&self) -> Result<LatticeVector> {
        let c = self
            .xi
            .as_ref()
            .ok_or_else(|| Error::Parameter("config needs xi = [..]".into()))?;
        LatticeVector::new(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: serde_json::Value,
    pub manifest: serde_json::Value,
    pub verdict: Verdict,
}

fn manifest_for(cfg: &RunConfig) -> serde_json::Value {
    let cfg_json = serde_json::to_value(cfg).expect("config serializes");
    let hash = stable_hash(&[cfg_json.to_string()]);
    serde_json::json!({
        "kind": cfg.experiment.as_str(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": format!("{hash:016x}"),
        "verdict_uncertainty_factor": VERDICT_UNCERTAINTY_FACTOR,
        "config": cfg_json,
    })
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Write results.csv (RFC 4180), results.json and manifest.json into
/// `outdir`. Refuses to overwrite existing report files unless forced.
pub fn emit_report(report: &Report, outdir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(outdir)?;
    let files = ["results.csv", "results.json", "manifest.json"];
    for f in files {
        let p = outdir.join(f);
        if p.exists() && !force {
            return Err(Error::WouldOverwrite(p.display().to_string()));
        }
    }
    let csv_path = outdir.join("results.csv");
    {
        let mut w = csv::Writer::from_path(&csv_path)
            .map_err(|e| Error::Parse(format!("csv: {e}")))?;
        w.write_record(&report.columns).map_err(|e| Error::Parse(format!("csv: {e}")))?;
        for row in &report.rows {
            w.write_record(row).map_err(|e| Error::Parse(format!("csv: {e}")))?;
        }
        w.flush()?;
    }
    let json_path = outdir.join("results.json");
    let payload = serde_json::json!({
        "kind": report.kind,
        "columns": report.columns,
        "rows": report.rows,
        "summary": report.summary,
    });
    std::fs::write(&json_path, serde_json::to_string_pretty(&payload).unwrap())?;
    let man_path = outdir.join("manifest.json");
    std::fs::write(&man_path, serde_json::to_string_pretty(&report.manifest).unwrap())?;
    Ok(vec![csv_path, json_path, man_path])
}

/// Dispatch on the experiment kind inside a rayon pool of the configured
/// size (results are gathered in config order, so the output is identical
/// across thread counts).
pub fn run(cfg: &RunConfig) -> Result<Report> {
    let threads = cfg.threads;
    if threads == 0 {
        dispatch(cfg)
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        pool.install(|| dispatch(cfg))
    }
}

fn dispatch(cfg: &RunConfig) -> Result<Report> {
    match cfg.experiment {
        ExperimentKind::Tail => run_tail(cfg),
        ExperimentKind::Mxi => run_mxi(cfg),
        ExperimentKind::Ltail => run_ltail(cfg),
        ExperimentKind::Homogenize => run_homogenize(cfg),
        ExperimentKind::ContinuitySweep => run_continuity_sweep(cfg),
        ExperimentKind::DiscontinuityLab => run_discontinuity_lab(cfg),
        ExperimentKind::RateFit => run_rate_fit(cfg),
        ExperimentKind::Dirichlet => run_dirichlet(cfg),
    }
}

/// Orthonormal tangent frame at ξ̂ from the reduced tangent lattice basis.
pub fn tangent_frame(xi: &LatticeVector) -> Result<Vec<Vect<f64>>> {
    let basis = tangent_lattice_basis(xi)?;
    let mut out: Vec<Vect<f64>> = Vec::new();
    for b in &basis {
        let mut v: Vect<f64> = b.to_vect();
        for prev in &out {
            let c = v.dot(prev);
            v = v.sub(&prev.scale(c));
        }
        out.push(v.normalize()?);
    }
    Ok(out)
}

fn direction_from(cfg_dir: &[f64]) -> Result<Direction<f64>> {
    Direction::from_unnormalized(Vect::from_f64s(cfg_dir))
}

// ---------------------------------------------------------------------------
// runners
// ---------------------------------------------------------------------------

fn run_tail(cfg: &RunConfig) -> Result<Report> {
    let op = cfg.operator()?;
    let psi = cfg.psi(op.dim())?;
    let knobs = cfg.numerics.cell_knobs();
    let mut dirs: Vec<Direction<f64>> = Vec::new();
    if let Some(xi) = &cfg.xi {
        dirs.push(Direction::from_lattice(&LatticeVector::new(xi)?));
    }
    if let Some(d) = &cfg.direction {
        dirs.push(direction_from(d)?);
    }
    for d in &cfg.directions {
        dirs.push(direction_from(d)?);
    }
    if dirs.is_empty() {
        return Err(Error::Parameter("tail needs xi, direction or directions".into()));
    }
    let rows: Result<Vec<Vec<String>>> = dirs
        .par_iter()
        .map(|nu| {
            let est = mu_at(&op, &psi, nu, cfg.numerics.accuracy, &knobs)?;
            Ok(vec![
                format!("{:?}", nu.v.to_f64s()),
                format!("{:?}", est.xi.comps()),
                fmt(est.gap),
                fmt(est.tail.mu),
                fmt(est.tail.decay_rate),
                fmt(est.tail.residual_osc),
                fmt(est.tail.fit_quality),
                fmt(est.uncertainty),
            ])
        })
        .collect();
    let rows = rows?;
    let summary = serde_json::json!({
        "count": rows.len(),
        "mu_first": rows.first().map(|r| r[3].clone()),
    });
    Ok(Report {
        kind: "tail".into(),
        columns: vec![
            "nu".into(),
            "xi".into(),
            "gap".into(),
            "mu".into(),
            "decay_rate".into(),
            "residual_osc".into(),
            "fit_quality".into(),
            "uncertainty".into(),
        ],
        rows,
        summary,
        manifest: manifest_for(cfg),
        verdict: Verdict::Ok,
    })
}

fn run_mxi(cfg: &RunConfig) -> Result<Report> {
    let op = cfg.operator()?;
    let psi = cfg.psi(op.dim())?;
    let xi = cfg.xi()?;
    let knobs = cfg.numerics.cell_knobs();
    let m = compute_m(&op, &psi, &xi, cfg.numerics.m_samples, &knobs)?;
    let mut rows = Vec::new();
    for (k, tail) in m.tails.iter().enumerate() {
        let t = m.period * k as f64 / m.samples.len() as f64;
        rows.push(vec![
            fmt(t),
            fmt(tail.mu),
            fmt(tail.residual_osc),
            fmt(tail.decay_rate),
            fmt(tail.fit_quality),
        ]);
    }
    let summary = serde_json::json!({
        "period": m.period,
        "mean": m.mean(),
        "closure_err": m.closure_err,
        "max_residual": m.max_residual(),
    });
    Ok(Report {
        kind: "mxi".into(),
        columns: vec!["t".into(), "m".into(), "residual".into(), "rate".into(), "fit_quality".into()],
        rows,
        summary,
        manifest: manifest_for(cfg),
        verdict: Verdict::Ok,
    })
}

fn eta_samples(cfg: &RunConfig, xi: &LatticeVector) -> Result<Vec<(f64, Vect<f64>)>> {
    if let Some(e) = &cfg.eta {
        let v = Vect::from_f64s(e).normalize()?;
        return Ok(vec![(0.0, v)]);
    }
    let frame = tangent_frame(xi)?;
    if frame.len() == 1 {
        return Ok(vec![(0.0, frame[0]), (std::f64::consts::PI, frame[0].scale(-1.0))]);
    }
    let n = cfg.eta_count.max(2);
    Ok((0..n)
        .map(|j| {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            (th, frame[0].scale(th.cos()).add(&frame[1].scale(th.sin())))
        })
        .collect())
}

fn run_ltail(cfg: &RunConfig) -> Result<Report> {
    let op = cfg.operator()?;
    let psi = cfg.psi(op.dim())?;
    let xi = cfg.xi()?;
    let cell = cfg.numerics.cell_knobs();
    let red = cfg.numerics.reduction_knobs();
    let corr = cfg.numerics.corrector_knobs();
    let cache = MProfileCache::new();
    let m = m_profile_cached(&op, &psi, &xi, cfg.numerics.m_samples, &cell, Some(&cache))?;
    let etas = eta_samples(cfg, &xi)?;
    let rows: Result<Vec<Vec<String>>> = etas
        .par_iter()
        .map(|(th, eta)| {
            let lim = l_xi_with_profile(&op, &m, &xi, eta, &red, &corr, None)?;
            Ok(vec![
                fmt(*th),
                format!("{:?}", eta.to_f64s()),
                fmt(lim.value),
                fmt(lim.uncertainty),
            ])
        })
        .collect();
    let rows = rows?;
    let vals: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let uncs: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_unc = uncs.iter().cloned().fold(0.0, f64::max);
    let summary = serde_json::json!({
        "profile_mean": m.mean(),
        "spread": spread,
        "max_uncertainty": max_unc,
        "spread_within_bands": spread <= VERDICT_UNCERTAINTY_FACTOR * max_unc.max(1e-300),
    });
    Ok(Report {
        kind: "ltail".into(),
        columns: vec!["theta".into(), "eta".into(), "L".into(), "uncertainty".into()],
        rows,
        summary,
        manifest: manifest_for(cfg),
        verdict: Verdict::Ok,
    })
}

fn run_homogenize(cfg: &RunConfig) -> Result<Report> {
    let op = cfg.operator()?;
    let corr = cfg.numerics.corrector_knobs();
    let mut rows = Vec::new();
    let mut summary = serde_json::Map::new();
    let mut columns: Vec<String> = vec!["item".into(), "i".into(), "j".into(), "value".into()];

    if let Operator::Isaacs(fam) = &op {
        if fam.n_min == 1 && fam.n_max == 1 && !fam.spatially_homogeneous() {
            let eff = linear_correctors(&fam.mats[0], fam.lambda, &corr)?;
            for i in 0..op.dim() {
                for j in i..op.dim() {
                    rows.push(vec![
                        "a_bar".into(),
                        i.to_string(),
                        j.to_string(),
                        fmt(eff.a_bar.get(i, j)),
                    ]);
                }
            }
            summary.insert(
                "a_bar".into(),
                serde_json::json!((0..op.dim())
                    .map(|i| (0..op.dim()).map(|j| eff.a_bar.get(i, j)).collect::<Vec<_>>())
                    .collect::<Vec<_>>()),
            );
        }
    }
    if rows.is_empty() {
        // homogeneous (or nonlinear) path: report F̄ on probe matrices
        let d = op.dim();
        let mut probes: Vec<SymMat<f64>> = vec![SymMat::identity(d)];
        for i in 0..d {
            let mut m = SymMat::zero(d);
            m.set(i, i, 1.0);
            probes.push(m);
        }
        for m in &probes {
            let sol = crate::homogenize::effective_operator(&op, m, &corr)?;
            rows.push(vec![
                "fbar".into(),
                fmt(m.get(0, 0)),
                fmt(m.get(d - 1, d - 1)),
                fmt(sol.fbar),
            ]);
        }
    }

    // optional interior rate sweep
    if !cfg.eps_list.is_empty() {
        let psi_b = cfg
            .psi
            .as_ref()
            .map(|p| p.build())
            .transpose()?
            .unwrap_or_else(|| TorusFunction::cosine(2, 1.0, &[1, 0], 0.0));
        let psi_t = TorusFunction::constant(2, 0.0);
        let rate_rows = interior_rate_experiment(
            &op,
            &psi_b,
            &psi_t,
            1.0,
            &cfg.eps_list,
            cfg.numerics.cells_per_eps,
            &corr,
        )?;
        columns = vec!["item".into(), "eps".into(), "h".into(), "sup_err".into()];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in &rate_rows {
            rows.push(vec!["rate".into(), fmt(r.eps), fmt(r.h), fmt(r.sup_err)]);
            if r.sup_err > 0.0 {
                xs.push(r.eps.ln());
                ys.push(r.sup_err.ln());
            }
        }
        if xs.len() >= 2 {
            let (slope, r2) = linear_fit(&xs, &ys);
            summary.insert("rate_slope".into(), serde_json::json!(slope));
            summary.insert("rate_fit_r2".into(), serde_json::json!(r2));
        }
    }

    Ok(Report {
        kind: "homogenize".into(),
        columns,
        rows,
        summary: serde_json::Value::Object(summary),
        manifest: manifest_for(cfg),
        verdict: Verdict::Ok,
    })
}

fn run_continuity_sweep(cfg: &RunConfig) -> Result<Report> {
    let op = cfg.operator()?;
    let psi = cfg.psi(op.dim())?;
    let xi = cfg.xi()?;
    match &op {
        Operator::Pucci { .. } => {}
        Operator::Isaacs(f) if f.n_min == 1 && f.n_max == 1 => {}
        _ => {
            return Err(Error::Precondition(
                "continuity sweep requires a rotation-invariant (Pucci) or linear operator".into(),
            ))
        }
    }
    let cell = cfg.numerics.cell_knobs();
    let red = cfg.numerics.reduction_knobs();
    let corr = cfg.numerics.corrector_knobs();
    let frame = tangent_frame(&xi)?;
    let eta_hat = match &cfg.eta {
        Some(e) => Vect::from_f64s(e).normalize()?,
        None => frame[0],
    };
    let t_list: Vec<f64> =
        if cfg.t_list.is_empty() { vec![0.2, 0.1, 0.05, 0.025] } else { cfg.t_list.clone() };
    let gap_rows = asymptotic_gap(
        &op,
        &psi,
        &xi,
        &eta_hat,
        &t_list,
        cfg.numerics.accuracy,
        &cell,
        &red,
        cfg.numerics.m_samples,
        None,
        &corr,
    )?;
    let mut rows = Vec::new();
    for r in &gap_rows {
        rows.push(vec![
            "approach".into(),
            fmt(r.t),
            format!("{:?}", r.xi_used),
            fmt(r.gap_to_xi),
            fmt(r.mu),
            fmt(r.mu_uncertainty),
            fmt(r.l_value),
            fmt(r.l_uncertainty),
            fmt(r.abs_gap),
        ]);
    }
    // optional symmetric great-circle scan through ξ̂
    if cfg.scan_count > 0 {
        let n = cfg.scan_count;
        let theta_max = cfg.scan_max_angle;
        let thetas: Vec<f64> = (0..n)
            .map(|j| -theta_max + 2.0 * theta_max * j as f64 / (n - 1).max(1) as f64)
            .filter(|t| t.abs() > 1e-9)
            .collect();
        let scan: Result<Vec<Vec<String>>> = thetas
            .par_iter()
            .map(|&th| {
                let e = if th >= 0.0 { eta_hat } else { eta_hat.scale(-1.0) };
                let nu = geodesic_toward(&xi, &e, th.abs())?;
                let nu = resolve_direction(&nu, &xi, cfg.numerics.accuracy)?;
                let est = mu_at(&op, &psi, &nu, cfg.numerics.accuracy, &cell)?;
                Ok(vec![
                    "scan".into(),
                    fmt(th),
                    format!("{:?}", est.xi.comps()),
                    fmt(est.gap),
                    fmt(est.tail.mu),
                    fmt(est.uncertainty),
                    String::new(),
                    String::new(),
                    String::new(),
                ])
            })
            .collect();
        rows.extend(scan?);
    }
    // local modulus fit |μ(ν(t)) − L| ≈ C t^α near ξ̂
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in &gap_rows {
        if r.abs_gap > r.mu_uncertainty + r.l_uncertainty {
            xs.push(r.t.ln());
            ys.push(r.abs_gap.ln());
        }
    }
    let modulus = if xs.len() >= 2 {
        let (alpha, r2) = linear_fit(&xs, &ys);
        serde_json::json!({"alpha": alpha, "r2": r2, "points": xs.len()})
    } else {
        serde_json::json!({"note": "gaps inside uncertainty bands; no modulus fitted"})
    };
    let summary = serde_json::json!({
        "limit": gap_rows.first().map(|r| r.l_value),
        "limit_uncertainty": gap_rows.first().map(|r| r.l_uncertainty),
        "local_modulus": modulus,
    });
    Ok(Report {
        kind: "continuity-sweep".into(),
        columns: vec![
            "label".into(),
            "t".into(),
            "xi_used".into(),
            "gap_to_xi".into(),
            "mu".into(),
            "mu_uncertainty".into(),
            "L".into(),
            "L_uncertainty".into(),
            "abs_gap".into(),
        ],
        rows,
        summary,
        manifest: manifest_for(cfg),
        verdict: Verdict::Ok,
    })
}

fn run_discontinuity_lab(cfg: &RunConfig) -> Result<Report> {
    let base = cfg.operator()?;
    if base.dim() != 3 {
        return Err(Error::Precondition("discontinuity lab requires d = 3".into()));
    }
    if !base.spatially_homogeneous() {
        return Err(Error::Precondition("discontinuity lab requires a homogeneous base operator".into()));
    }
    let xi = cfg.xi()?;
    let frame = tangent_frame(&xi)?;
    let eta1 = match &cfg.eta1 {
        Some(e) => Vect::from_f64s(e).normalize()?,
        None => frame[0],
    };
    let eta2 = match &cfg.eta2 {
        Some(e) => Vect::from_f64s(e).normalize()?,
        None => frame[1],
    };
    if eta1.dot(&eta2).abs() > 1e-9 {
        return Err(Error::Frame("η₁ and η₂ must be orthogonal".into()));
    }
    // default boundary data: ψ = 0.5·cos(2π y·ξ), whose m-profile is exactly
    // 0.5·cos(2π|ξ|t) for every operator
    let psi = match &cfg.psi {
        Some(p) => p.build()?,
        None => TorusFunction::cosine(3, 0.5, xi.comps(), 0.0),
    };
    let deltas: Vec<f64> =
        if cfg.delta_list.is_empty() { vec![0.0, 0.25, 0.5] } else { cfg.delta_list.clone() };
    let cell = cfg.numerics.cell_knobs();
    let red = cfg.numerics.reduction_knobs();
    let corr = cfg.numerics.corrector_knobs();

    let per_delta: Result<Vec<(f64, f64, f64, f64, f64)>> = deltas
        .par_iter()
        .map(|&delta| {
            let op = if delta > 0.0 {
                perturb_operator(&base, &eta1, delta)?
            } else {
                base.clone()
            };
            let m = compute_m(&op, &psi, &xi, cfg.numerics.m_samples, &cell)?;
            let l1 = l_xi_with_profile(&op, &m, &xi, &eta1, &red, &corr, None)?;
            let l2 = l_xi_with_profile(&op, &m, &xi, &eta2, &red, &corr, None)?;
            Ok((delta, l1.value, l1.uncertainty, l2.value, l2.uncertainty))
        })
        .collect();
    let per_delta = per_delta?;

    let mut rows = Vec::new();
    let mut any_detected = false;
    let mut max_split = 0.0f64;
    for (delta, l1, u1, l2, u2) in &per_delta {
        let split = l2 - l1;
        let combined = u1 + u2;
        let verdict = if split > VERDICT_UNCERTAINTY_FACTOR * combined {
            any_detected = true;
            "discontinuity detected"
        } else {
            "below resolution"
        };
        max_split = max_split.max(split);
        rows.push(vec![
            fmt(*delta),
            fmt(*l1),
            fmt(*u1),
            fmt(*l2),
            fmt(*u2),
            fmt(split),
            fmt(combined),
            verdict.into(),
        ]);
    }
    // comparison ordering along the ladder: L¹(δ) non-increasing
    let mut ordering_ok = true;
    for w in per_delta.windows(2) {
        let (_, l1a, u1a, _, _) = w[0];
        let (_, l1b, u1b, _, _) = w[1];
        if l1b > l1a + u1a + u1b {
            ordering_ok = false;
        }
    }
    let summary = serde_json::json!({
        "detected": any_detected,
        "max_split": max_split,
        "ordering_l1_nonincreasing": ordering_ok,
        "eta1": eta1.to_f64s(),
        "eta2": eta2.to_f64s(),
    });
    Ok(Report {
        kind: "discontinuity-lab".into(),
        columns: vec![
            "delta".into(),
            "L_eta1".into(),
            "L_eta1_uncertainty".into(),
            "L_eta2".into(),
            "L_eta2_uncertainty".into(),
            "split".into(),
            "combined_uncertainty".into(),
            "verdict".into(),
        ],
        rows,
        summary,
        manifest: manifest_for(cfg),
        verdict: if any_detected { Verdict::Ok } else { Verdict::Inconclusive },
    })
}

fn run_rate_fit(cfg: &RunConfig) -> Result<Report> {
    let op = cfg.operator()?;
    if op.dim() != 2 {
        return Err(Error::Unsupported("rate fit strips are two-dimensional".into()));
    }
    let periods: Vec<f64> =
        if cfg.period_list.is_empty() { vec![1.0, 2.0] } else { cfg.period_list.clone() };
    let n = cfg.numerics.clone();
    let rows: Result<Vec<(f64, f64, f64, f64)>> = periods
        .par_iter()
        .map(|&period| {
            let h = period / (period / n.h).round().max(8.0);
            let depth = n.depth.unwrap_or(n.depth_factor * period / 2.0).max(1.5);
            let lateral = vec![Vect::from_f64s(&[period, 0.0])];
            let grid = BoxGrid::strip(&lateral, &Vect::axis(2, 1), depth, h)?;
            let bottom =
                move |p: &Vect<f64>| (2.0 * std::f64::consts::PI * p.get(0) / period).cos();
            let top = |_: &Vect<f64>| 0.0;
            let p = assemble(
                &grid,
                AssembleSpec {
                    op: &op,
                    order: n.stencil_order,
                    frames: n.frames,
                    coef_offset: Vect::zero(2),
                    coef_scale: 1.0,
                    bottom: &bottom,
                    top: &top,
                    rhs: None,
                },
            )?;
            let params = SolveParams::with_tol(2.0 * n.tol_factor.max(1e-10));
            let kappa = 2.0 * std::f64::consts::PI / (period * op.lambda_ratio().sqrt());
            let (u, _) = solve(&p, Some(initial_guess(&p, kappa)), &params)?;
            let tail = extract_tail(&u)?;
            Ok((period, tail.decay_rate, tail.fit_quality, tail.mu))
        })
        .collect();
    let rows = rows?;
    let mut out_rows = Vec::new();
    for (period, rate, q, mu) in &rows {
        out_rows.push(vec![fmt(*period), fmt(*rate), fmt(*q), fmt(*mu)]);
    }
    let mut ratios = Vec::new();
    for w in rows.windows(2) {
        // rate should scale like 1/L: rate(L₂)/rate(L₁) ≈ L₁/L₂
        ratios.push(serde_json::json!({
            "periods": [w[0].0, w[1].0],
            "rate_ratio": w[1].1 / w[0].1,
            "expected_ratio": w[0].0 / w[1].0,
        }));
    }
    let summary = serde_json::json!({
        "rates": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
        "scaling": ratios,
    });
    Ok(Report {
        kind: "rate-fit".into(),
        columns: vec!["period".into(), "rate".into(), "fit_quality".into(), "mu".into()],
        rows: out_rows,
        summary,
        manifest: manifest_for(cfg),
        verdict: Verdict::Ok,
    })
}

fn run_dirichlet(cfg: &RunConfig) -> Result<Report> {
    use rand::{Rng, SeedableRng};
    let mut cases: Vec<(Vec<f64>, u64)> = Vec::new();
    let default_n = cfg.big_n.unwrap_or(100);
    for a in &cfg.alphas {
        cases.push((a.clone(), default_n));
    }
    if cfg.random_instances > 0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.random_instances {
            let n = 1 + rng.gen_range(0..2usize);
            let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let cap = rng.gen_range(1..=200u64);
            cases.push((alpha, cap));
        }
    }
    if cases.is_empty() {
        return Err(Error::Parameter("dirichlet needs alphas or random_instances".into()));
    }
    let mut rows = Vec::new();
    let mut violations = 0usize;
    for (alpha, n_cap) in &cases {
        let (p, q) = dirichlet_approx(alpha, *n_cap)?;
        let bound = (*n_cap as f64).powf(-1.0 / alpha.len() as f64);
        let err = alpha
            .iter()
            .zip(&p)
            .map(|(a, p)| (q as f64 * a - *p as f64).abs())
            .fold(0.0f64, f64::max);
        // independent exhaustive minimizer over the full admissible range
        let mut best_q = 1i64;
        let mut best_err = f64::INFINITY;
        for qq in 1..=*n_cap as i64 {
            let e = alpha
                .iter()
                .map(|a| {
                    let qa = qq as f64 * a;
                    (qa - qa.round()).abs()
                })
                .fold(0.0f64, f64::max);
            if e < best_err {
                best_err = e;
                best_q = qq;
            }
        }
        let ok = err <= bound + 1e-12;
        if !ok {
            violations += 1;
        }
        rows.push(vec![
            format!("{alpha:?}"),
            n_cap.to_string(),
            q.to_string(),
            format!("{p:?}"),
            fmt(err),
            fmt(bound),
            best_q.to_string(),
            fmt(best_err),
            ok.to_string(),
        ]);
    }
    let summary = serde_json::json!({
        "instances": rows.len(),
        "violations": violations,
    });
    Ok(Report {
        kind: "dirichlet".into(),
        columns: vec![
            "alpha".into(),
            "N".into(),
            "q".into(),
            "p".into(),
            "err".into(),
            "bound".into(),
            "exhaustive_best_q".into(),
            "exhaustive_best_err".into(),
            "within_bound".into(),
        ],
        rows,
        summary,
        manifest: manifest_for(cfg),
        verdict: if violations == 0 { Verdict::Ok } else { Verdict::Inconclusive },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_toml_round_trip() {
        let toml_text = r#"
experiment = "mxi"
xi = [0, 1]
seed = 7

[operator]
kind = "linear"
lambda = 1.0
[operator.a]
form = "const"
rows = [[1.0, 0.0], [0.0, 1.0]]

[psi]
dim = 2
terms = [{ amp = 0.5, freq = [1, 0], phase = 0.0 }]

[numerics]
h = 0.125
m_samples = 4
"#;
        let cfg = RunConfig::from_toml(toml_text).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Mxi);
        assert_eq!(cfg.numerics.m_samples, 4);
        assert_eq!(cfg.numerics.depth_factor, 6.0); // default preserved
        let js = serde_json::to_string(&cfg).unwrap();
        let cfg2 = RunConfig::from_json(&js).unwrap();
        assert_eq!(cfg.numerics, cfg2.numerics);
    }

    #[test]
    fn manifest_wrapper_accepted() {
        let cfg = RunConfig::from_toml(
            r#"
experiment = "dirichlet"
alphas = [[0.5]]
big_n = 2
[operator]
kind = "pucci"
dim = 2
sign = "+"
lambda = 1.0
big_lambda = 2.0
"#,
        )
        .unwrap();
        let rep = run(&cfg).unwrap();
        let manifest_text = serde_json::to_string(&rep.manifest).unwrap();
        let back = RunConfig::from_json(&manifest_text).unwrap();
        assert_eq!(back.experiment, ExperimentKind::Dirichlet);
    }

    #[test]
    fn dirichlet_runner_verifies() {
        let cfg = RunConfig::from_toml(
            r#"
experiment = "dirichlet"
random_instances = 50
seed = 11
[operator]
kind = "pucci"
dim = 2
sign = "+"
lambda = 1.0
big_lambda = 2.0
"#,
        )
        .unwrap();
        let rep = run(&cfg).unwrap();
        assert_eq!(rep.verdict, Verdict::Ok);
        assert_eq!(rep.rows.len(), 50);
        assert_eq!(rep.summary["violations"], 0);
    }

    #[test]
    fn emit_and_refuse_overwrite() {
        let cfg = RunConfig::from_toml(
            r#"
experiment = "dirichlet"
alphas = [[0.25], [1.5]]
big_n = 10
[operator]
kind = "pucci"
dim = 2
sign = "+"
lambda = 1.0
big_lambda = 2.0
"#,
        )
        .unwrap();
        let rep = run(&cfg).unwrap();
        let dir = std::env::temp_dir().join(format!("bltail-test-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let files = emit_report(&rep, &dir, false).unwrap();
        assert_eq!(files.len(), 3);
        assert!(matches!(emit_report(&rep, &dir, false), Err(Error::WouldOverwrite(_))));
        // forced rewrite is bitwise identical
        let before = std::fs::read(&files[0]).unwrap();
        emit_report(&rep, &dir, true).unwrap();
        let after = std::fs::read(&files[0]).unwrap();
        assert_eq!(before, after);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn rate_fit_runner_on_laplacian() {
        let cfg = RunConfig::from_toml(
            r#"
experiment = "rate-fit"
period_list = [1.0]
[operator]
kind = "linear"
[operator.a]
form = "const"
rows = [[1.0, 0.0], [0.0, 1.0]]
[numerics]
h = 0.0625
depth = 2.0
"#,
        )
        .unwrap();
        let rep = run(&cfg).unwrap();
        let rate: f64 = rep.rows[0][1].parse().unwrap();
        let expect = 2.0 * std::f64::consts::PI;
        assert!((rate - expect).abs() < 0.05 * expect, "rate {rate}");
    }

    #[test]
    fn determinism_across_thread_counts() {
        let base = r#"
experiment = "mxi"
xi = [0, 1]
[operator]
kind = "linear"
[operator.a]
form = "const"
rows = [[1.0, 0.0], [0.0, 1.0]]
[psi]
dim = 2
terms = [{ amp = 0.5, freq = [1, 0], phase = 0.0 }]
[numerics]
h = 0.125
m_samples = 4
depth_factor = 2.0
"#;
        let mut cfg1 = RunConfig::from_toml(base).unwrap();
        cfg1.threads = 1;
        let mut cfg4 = RunConfig::from_toml(base).unwrap();
        cfg4.threads = 4;
        let r1 = run(&cfg1).unwrap();
        let r4 = run(&cfg4).unwrap();
        assert_eq!(r1.rows, r4.rows);
    }
}
