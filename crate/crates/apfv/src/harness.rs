//! Run orchestration: TOML config parsing, single runs, convergence-order
//! studies, CSV emission, and the quasi-1-D coarse-AP-versus-fine-upwind
//! demonstration.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{build_cartesian, Mesh, MeshError, MeshKind, Rect};
use crate::models::ModelError;
use crate::problems::{moment_errors, parse_problem, Problem, ProblemError};
use crate::schemes::{
    build_closure, damping_factors, Bc, BcKind, CellSource, ComposedOperator, FluxKind,
    HyperbolicOperator, JlbOperator, SchemeError,
};
use crate::system::{to_diagonal, Coefficients, Field, SystemError};
use crate::timeint::{stable_dt, Integrator, TimeError, TimeScheme};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Configuration problems (CLI exit code 2).
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Time(#[from] TimeError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

impl HarnessError {
    /// CLI exit code: 2 for configuration errors, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub kind: String,
    pub nx: usize,
    pub ny: usize,
    pub seed: u64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { kind: "cartesian".into(), nx: 40, ny: 40, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    /// `explicit`, `semi-implicit` or `implicit`.
    pub scheme: String,
    pub cfl: f64,
    /// Fixed step size; overrides the stability estimate.
    pub dt: Option<f64>,
    /// Overrides the problem's duration.
    pub t_final: Option<f64>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { scheme: "implicit".into(), cfl: 0.45, dt: None, t_final: None }
    }
}

/// One run or study, fully described. Empty text parses to all defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Model shorthand; `problem` defaults to `diffusion:<model>`.
    pub model: Option<String>,
    pub problem: Option<String>,
    pub mesh: MeshConfig,
    pub epsilon: Option<f64>,
    /// Override of the uniform scattering coefficient.
    pub sigma: Option<f64>,
    /// `jlb+upwind` or `jlb+rusanov`.
    pub scheme: Option<String>,
    pub time: TimeConfig,
    pub output_dir: Option<String>,
    /// `(nx, ny)` resolutions of a convergence study.
    pub refinements: Vec<[usize; 2]>,
}

impl RunConfig {
    pub fn problem_string(&self) -> Result<String, HarnessError> {
        match (&self.problem, &self.model) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(m)) => Ok(format!("diffusion:{m}")),
            (None, None) => Ok("diffusion:s2".into()),
        }
    }

    pub fn flux_kind(&self) -> Result<FluxKind, HarnessError> {
        match self.scheme.as_deref().unwrap_or("jlb+upwind") {
            "jlb+upwind" => Ok(FluxKind::Upwind),
            "jlb+rusanov" => Ok(FluxKind::BlockRusanov),
            other => Err(HarnessError::Config(format!("unknown scheme `{other}`"))),
        }
    }

    pub fn time_scheme(&self) -> Result<TimeScheme, HarnessError> {
        TimeScheme::parse(&self.time.scheme)
            .ok_or_else(|| HarnessError::Config(format!("unknown time scheme `{}`", self.time.scheme)))
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) {
                return Err(HarnessError::Config(format!("epsilon must be positive, got {eps}")));
            }
        }
        if let Some(s) = self.sigma {
            if s < 0.0 {
                return Err(HarnessError::Config(format!("sigma must be non-negative, got {s}")));
            }
        }
        if !(self.time.cfl > 0.0) {
            return Err(HarnessError::Config(format!("cfl must be positive, got {}", self.time.cfl)));
        }
        if let Some(dt) = self.time.dt {
            if !(dt > 0.0) {
                return Err(HarnessError::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if MeshKind::parse(&self.mesh.kind).is_none() {
            return Err(HarnessError::Config(format!("unknown mesh kind `{}`", self.mesh.kind)));
        }
        self.flux_kind()?;
        self.time_scheme()?;
        Ok(())
    }
}

/// Parse and validate a TOML config.
pub fn parse_config(text: &str) -> Result<RunConfig, HarnessError> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Result of one run on one mesh.
pub struct RunOutcome {
    pub mesh: Mesh,
    /// Final state in diagonal variables.
    pub v: Field,
    /// Kernel moment per cell.
    pub rho: Vec<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub steps: usize,
    pub dt: f64,
    pub wall_s: f64,
}

const DEFAULT_EPS: f64 = 1e-6;

/// Execute one run: build the mesh and operators for the configured problem
/// and integrate to the final time.
pub fn execute_run(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let problem = parse_problem(&cfg.problem_string()?)?;
    let kind = MeshKind::parse(&cfg.mesh.kind)
        .ok_or_else(|| HarnessError::Config(format!("unknown mesh kind `{}`", cfg.mesh.kind)))?;
    let mesh = kind.build(cfg.mesh.nx, cfg.mesh.ny, cfg.mesh.seed, problem.domain)?;
    run_on_mesh(cfg, &problem, mesh)
}

/// Execute a run on an existing mesh (shared by the study driver).
pub fn run_on_mesh(
    cfg: &RunConfig,
    problem: &Problem,
    mesh: Mesh,
) -> Result<RunOutcome, HarnessError> {
    let start = Instant::now();
    let system = &problem.system;
    system.validate()?;
    let mut spec = system.spectral()?;
    let report = system.check_structure(&mut spec)?;
    if !report.h2_holds {
        return Err(HarnessError::Config(format!(
            "model `{}` does not satisfy the isotropic structure the schemes require",
            system.name
        )));
    }
    let decomp = system.decompose(&spec, &report)?;

    let eps = cfg.epsilon.unwrap_or(DEFAULT_EPS);
    let mut coeffs = problem.coefficients(&mesh, eps);
    if let Some(s) = cfg.sigma {
        coeffs.sigma = vec![s; mesh.n_cells()];
    }

    let closure = build_closure(&mesh, problem.bc)?;
    let jlb = JlbOperator::new(&mesh, &closure, &report, &coeffs)?;
    let remainder_norm = decomp.a1pp.norm_inf().max(decomp.a2pp.norm_inf());
    let mut hyp = if remainder_norm > 0.0 {
        Some(HyperbolicOperator::remainder(
            &mesh,
            &closure,
            &decomp,
            &coeffs,
            cfg.flux_kind()?,
        )?)
    } else {
        None
    };

    let scheme = cfg.time_scheme()?;
    let c0 = report.lambda / (report.a * report.a);
    if scheme == TimeScheme::SemiImplicit {
        if let Some(h) = &mut hyp {
            let d = damping_factors(&mesh, &closure, &h.speeds, &coeffs, c0);
            h.set_damping(d);
        }
    }

    let c_max = report.a.max(
        hyp.as_ref()
            .map_or(0.0, |h| h.speeds.iter().fold(0.0f64, |m, &s| m.max(s))),
    );
    let sigma_max = coeffs.sigma.iter().fold(0.0f64, |m, &s| m.max(s));
    let diag_max = decomp.dpp.iter().chain(decomp.dp.iter()).fold(0.0f64, |m, &d| m.max(d));
    let dt = match cfg.time.dt {
        Some(dt) => dt,
        None => stable_dt(scheme, &mesh, eps, sigma_max, c_max, diag_max, c0, cfg.time.cfl),
    };

    let source = CellSource::new(decomp.dpp.clone(), eps);
    let op = ComposedOperator {
        jlb: Some(jlb),
        hyp,
        source,
        coeffs: &coeffs,
        n_comp: system.n,
    };

    let e1 = spec.q.column(0);
    let u0 = problem.initial_state(&mesh, &e1);
    let mut v = to_diagonal(&u0, &spec.q)?;

    let t_final = cfg.time.t_final.unwrap_or(problem.t_final);
    let mut integrator = Integrator::new(&op, &mesh, scheme);
    let steps = integrator.run(&mut v, dt, t_final, |_, _, _| {})?;

    let rho: Vec<f64> = (0..mesh.n_cells()).map(|j| v.cell(j)[0]).collect();
    let (l1, l2) = if problem.has_exact() {
        let (l1, l2) = moment_errors(&mesh, &rho, |x| problem.exact_moment(x).unwrap());
        (Some(l1), Some(l2))
    } else {
        (None, None)
    };

    let wall_s = start.elapsed().as_secs_f64();

    if let Some(dir) = &cfg.output_dir {
        let dir = Path::new(dir);
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("field.csv"), field_csv(&mesh, &v))?;
        mesh.export_file(&dir.join("mesh.txt"))?;
    }

    Ok(RunOutcome { mesh, v, rho, l1, l2, steps, dt, wall_s })
}

/// One row of a convergence study.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub l1: f64,
    pub l2: f64,
    pub order_l1: Option<f64>,
    pub order_l2: Option<f64>,
}

/// Pairwise convergence order `log(e_c/e_f)/log(h_c/h_f)`; undefined unless
/// both errors are strictly positive and the mesh sizes differ.
pub fn refinement_order(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Option<f64> {
    if e_coarse > 0.0 && e_fine > 0.0 && h_coarse > h_fine {
        Some((e_coarse / e_fine).ln() / (h_coarse / h_fine).ln())
    } else {
        None
    }
}

/// Run the configured problem on every refinement and assemble the error
/// and order table (`h = 1/nx`).
pub fn convergence_study(cfg: &RunConfig) -> Result<Vec<StudyRow>, HarnessError> {
    cfg.validate()?;
    if cfg.refinements.len() < 2 {
        return Err(HarnessError::Config(
            "a convergence study needs at least two refinements".into(),
        ));
    }
    let problem = parse_problem(&cfg.problem_string()?)?;
    if !problem.has_exact() {
        return Err(HarnessError::Config(format!(
            "problem `{}` has no analytic reference for a study",
            problem.name
        )));
    }
    let kind = MeshKind::parse(&cfg.mesh.kind)
        .ok_or_else(|| HarnessError::Config(format!("unknown mesh kind `{}`", cfg.mesh.kind)))?;
    let mut rows: Vec<StudyRow> = Vec::new();
    for &[nx, ny] in &cfg.refinements {
        let mut sub = cfg.clone();
        sub.mesh.nx = nx;
        sub.mesh.ny = ny;
        sub.output_dir = None;
        // the stated parabolic step refers to the mesh of each row
        if cfg.time.dt.is_none() && cfg.time_scheme()? != TimeScheme::Explicit {
            let h = 1.0 / nx as f64;
            sub.time.dt = Some(0.5 * h * h);
        }
        let mesh = kind.build(nx, ny, cfg.mesh.seed, problem.domain)?;
        let out = run_on_mesh(&sub, &problem, mesh)?;
        let h = 1.0 / nx as f64;
        let (order_l1, order_l2) = match rows.last() {
            Some(prev) => (
                refinement_order(prev.l1, out.l1.unwrap(), prev.h, h),
                refinement_order(prev.l2, out.l2.unwrap(), prev.h, h),
            ),
            None => (None, None),
        };
        rows.push(StudyRow {
            nx,
            ny,
            h,
            l1: out.l1.unwrap(),
            l2: out.l2.unwrap(),
            order_l1,
            order_l2,
        });
    }
    if let Some(dir) = &cfg.output_dir {
        let dir = Path::new(dir);
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("study.csv"), study_csv(&rows))?;
    }
    Ok(rows)
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Field CSV: `cell_id, xc, yc, area, rho, V_1..V_n` at full double
/// precision, LF line endings.
pub fn field_csv(mesh: &Mesh, v: &Field) -> String {
    let mut out = String::new();
    out.push_str("cell_id,xc,yc,area,rho");
    for i in 1..=v.n_comp {
        out.push_str(&format!(",V_{i}"));
    }
    out.push('\n');
    for j in 0..mesh.n_cells() {
        let c = mesh.cell_center[j];
        out.push_str(&format!(
            "{j},{},{},{},{}",
            fmt17(c[0]),
            fmt17(c[1]),
            fmt17(mesh.cell_area[j]),
            fmt17(v.cell(j)[0])
        ));
        for x in v.cell(j) {
            out.push(',');
            out.push_str(&fmt17(*x));
        }
        out.push('\n');
    }
    out
}

/// Study CSV with columns `nx, ny, h, L1, L2, order_L1, order_L2` (orders
/// blank on the first row).
pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("nx,ny,h,L1,L2,order_L1,order_L2\n");
    for r in rows {
        let ord = |o: Option<f64>| o.map(fmt17).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.nx,
            r.ny,
            fmt17(r.h),
            fmt17(r.l1),
            fmt17(r.l2),
            ord(r.order_l1),
            ord(r.order_l2),
        ));
    }
    out
}

/// Write a field CSV to disk.
pub fn emit_field(mesh: &Mesh, v: &Field, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, field_csv(mesh, v))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Quasi-1-D demonstration: coarse AP run versus fine full-system upwinding

#[derive(Debug, Clone)]
pub struct DemoRow {
    pub scheme: &'static str,
    pub cells: usize,
    pub l1: f64,
    pub l2: f64,
    pub wall_s: f64,
}

const DEMO_EPS: f64 = 1e-3;
const DEMO_T0: f64 = 0.01;
const DEMO_T: f64 = 0.01;
const DEMO_HEIGHT: f64 = 0.02;

fn demo_exact(x: f64, t: f64) -> f64 {
    // 1-D heat kernel with unit diffusion coefficient, released at x = 1
    (1.0 / (4.0 * std::f64::consts::PI * t).sqrt()) * (-(x - 1.0).powi(2) / (4.0 * t)).exp()
}

fn demo_run(nx: usize, ap: bool) -> Result<DemoRow, HarnessError> {
    let start = Instant::now();
    let system = crate::models::heat_p1_system(1.0, 1.0)?;
    system.validate()?;
    let mut spec = system.spectral()?;
    let report = system.check_structure(&mut spec)?;
    let decomp = system.decompose(&spec, &report)?;
    let domain = Rect::new(0.0, 0.0, 2.0, DEMO_HEIGHT);
    let mesh = build_cartesian(nx, 1, domain)?;
    let bc = Bc { x: BcKind::Vacuum, y: BcKind::Periodic };
    let closure = build_closure(&mesh, bc)?;
    let coeffs = Coefficients::uniform(DEMO_EPS, 1.0, mesh.n_cells());

    let mut v = Field::zeros(mesh.n_cells(), 3);
    for j in 0..mesh.n_cells() {
        v.cell_mut(j)[0] = demo_exact(mesh.cell_center[j][0], DEMO_T0);
    }

    let hx = domain.width() / nx as f64;
    let (op, scheme, dt);
    let jlb;
    let full_upwind;
    if ap {
        jlb = JlbOperator::new(&mesh, &closure, &report, &coeffs)?;
        op = ComposedOperator {
            jlb: Some(jlb),
            hyp: None,
            source: CellSource::new(decomp.dpp.clone(), DEMO_EPS),
            coeffs: &coeffs,
            n_comp: 3,
        };
        scheme = TimeScheme::Implicit;
        dt = 0.5 * hx * hx;
    } else {
        full_upwind = HyperbolicOperator::new(
            &mesh,
            &closure,
            &decomp.a1p,
            &decomp.a2p,
            &coeffs,
            FluxKind::Upwind,
            false,
        )?;
        op = ComposedOperator {
            jlb: None,
            hyp: Some(full_upwind),
            source: CellSource::new(spec.lambdas.clone(), DEMO_EPS),
            coeffs: &coeffs,
            n_comp: 3,
        };
        scheme = TimeScheme::Explicit;
        // hyperbolic CFL on the short cell dimension, capped by the
        // explicit relaxation limit
        dt = (0.45 * DEMO_EPS * hx).min(0.9 * DEMO_EPS * DEMO_EPS);
    }

    let mut integrator = Integrator::new(&op, &mesh, scheme);
    integrator.run(&mut v, dt, DEMO_T, |_, _, _| {})?;

    let rho: Vec<f64> = (0..mesh.n_cells()).map(|j| v.cell(j)[0]).collect();
    let (l1, l2) = moment_errors(&mesh, &rho, |x| demo_exact(x[0], DEMO_T0 + DEMO_T));
    // per-unit-height norms so the strip height drops out
    Ok(DemoRow {
        scheme: if ap { "nodal-ap" } else { "upwind" },
        cells: nx,
        l1: l1 / DEMO_HEIGHT,
        l2: l2 / DEMO_HEIGHT.sqrt(),
        wall_s: start.elapsed().as_secs_f64(),
    })
}

/// The coarse-AP-beats-fine-upwind table: both schemes at 50 and 500 cells
/// on the quasi-1-D relaxation problem at `eps = 1e-3`.
pub fn table1_demo() -> Result<Vec<DemoRow>, HarnessError> {
    Ok(vec![
        demo_run(50, true)?,
        demo_run(500, true)?,
        demo_run(50, false)?,
        demo_run(500, false)?,
    ])
}
