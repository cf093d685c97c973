//! Benchmark problems: diffusion against the heat kernel, free transport
//! with exact profiles, point-source releases, and the lattice shielding
//! configuration, together with the error norms and wavefront measurements
//! used to assess them.

use thiserror::Error;

use crate::mesh::{Mesh, Rect};
use crate::models::{parse_model, pn_system, sn_quadrature, sn_system, ModelError};
use crate::schemes::{Bc, BcKind};
use crate::system::{Coefficients, Field, FriedrichsSystem, SystemError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem string `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Fundamental solution of `dp/dt = d lap p` released at `center`.
pub fn heat_kernel(d: f64, t: f64, center: [f64; 2], x: [f64; 2]) -> f64 {
    let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
    (1.0 / (4.0 * std::f64::consts::PI * d * t)) * (-r2 / (4.0 * d * t)).exp()
}

/// Spatial coefficient layout of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffLayout {
    /// One scattering coefficient everywhere, no absorption, no source.
    Uniform,
    /// The shielding lattice: absorbing squares, a central absorbing source
    /// square, scattering background.
    Lattice,
}

/// A fully specified benchmark run up to the mesh and `eps`.
pub struct Problem {
    pub name: String,
    pub system: FriedrichsSystem,
    pub bc: Bc,
    pub domain: Rect,
    /// Duration of the run.
    pub t_final: f64,
    /// Default scattering coefficient (layout `Uniform`).
    pub sigma: f64,
    pub layout: CoeffLayout,
    init: InitKind,
    exact: ExactKind,
}

enum InitKind {
    /// Equilibrium profile `U_j = rho(x_j) E_1`.
    Equilibrium(Box<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
    /// Raw per-component profile in original variables.
    Components(Box<dyn Fn([f64; 2], usize) -> f64 + Send + Sync>),
    /// Unit mass dropped into the cell(s) nearest to the point, split
    /// equally on ties, carried by `E_1`.
    Point([f64; 2]),
    Zero,
}

enum ExactKind {
    None,
    Moment(Box<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
}

/// Lower-left corners of the absorbing unit squares of the lattice
/// configuration (the central source square included).
pub fn lattice_absorbers() -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 1..=5 {
        for j in 1..=5 {
            if (i + j) % 2 == 0 && (i, j) != (3, 5) {
                out.push((i, j));
            }
        }
    }
    assert_eq!(out.len(), 12);
    out
}

impl Problem {
    /// Coefficient fields on a concrete mesh.
    pub fn coefficients(&self, mesh: &Mesh, eps: f64) -> Coefficients {
        match self.layout {
            CoeffLayout::Uniform => Coefficients::uniform(eps, self.sigma, mesh.n_cells()),
            CoeffLayout::Lattice => {
                let absorbers = lattice_absorbers();
                let n = mesh.n_cells();
                let mut c = Coefficients::uniform(eps, 1.0, n);
                for j in 0..n {
                    let x = mesh.cell_center[j];
                    let (ci, cj) = (x[0].floor() as i64, x[1].floor() as i64);
                    let absorbed = ci >= 0
                        && cj >= 0
                        && absorbers.contains(&(ci as usize, cj as usize));
                    if absorbed {
                        c.sigma[j] = 0.0;
                        c.sigma_a[j] = 10.0;
                    }
                    if (ci, cj) == (3, 3) {
                        c.q_src[j] = 1.0;
                    }
                }
                c
            }
        }
    }

    /// Initial state in original variables; `e1` is the kernel eigenvector.
    pub fn initial_state(&self, mesh: &Mesh, e1: &[f64]) -> Field {
        let n = self.system.n;
        let mut u = Field::zeros(mesh.n_cells(), n);
        match &self.init {
            InitKind::Zero => {}
            InitKind::Equilibrium(rho) => {
                for j in 0..mesh.n_cells() {
                    let r = rho(mesh.cell_center[j]);
                    for (c, e) in u.cell_mut(j).iter_mut().zip(e1) {
                        *c = r * e;
                    }
                }
            }
            InitKind::Components(f) => {
                for j in 0..mesh.n_cells() {
                    let x = mesh.cell_center[j];
                    for (i, c) in u.cell_mut(j).iter_mut().enumerate() {
                        *c = f(x, i);
                    }
                }
            }
            InitKind::Point(p) => {
                let mut best = f64::INFINITY;
                for j in 0..mesh.n_cells() {
                    let x = mesh.cell_center[j];
                    let d = (x[0] - p[0]).hypot(x[1] - p[1]);
                    best = best.min(d);
                }
                let hits: Vec<usize> = (0..mesh.n_cells())
                    .filter(|&j| {
                        let x = mesh.cell_center[j];
                        (x[0] - p[0]).hypot(x[1] - p[1]) <= best + 1e-12
                    })
                    .collect();
                let vol: f64 = hits.iter().map(|&j| mesh.cell_area[j]).sum();
                for &j in &hits {
                    for (c, e) in u.cell_mut(j).iter_mut().zip(e1) {
                        *c = e / vol;
                    }
                }
            }
        }
        u
    }

    /// Exact kernel moment at the final time, when available.
    pub fn exact_moment(&self, x: [f64; 2]) -> Option<f64> {
        match &self.exact {
            ExactKind::None => None,
            ExactKind::Moment(f) => Some(f(x)),
        }
    }

    pub fn has_exact(&self) -> bool {
        matches!(self.exact, ExactKind::Moment(_))
    }
}

/// Build a problem from its CLI string: `diffusion:<model>`, `transport1`,
/// `transport2`, `transport3`, `fundamental:<p1|p3>`, `lattice:<p1|p3>`.
pub fn parse_problem(s: &str) -> Result<Problem, ProblemError> {
    if let Some(model) = s.strip_prefix("diffusion:") {
        let system = parse_model(model)?;
        return diffusion_problem(system, s);
    }
    match s {
        "transport1" => transport_case_1(),
        "transport2" => transport_case_2(),
        "transport3" => transport_case_3(),
        "fundamental:p1" => fundamental(pn_system(1)?, s),
        "fundamental:p3" => fundamental(pn_system(3)?, s),
        "lattice:p1" => lattice(pn_system(1)?, s),
        "lattice:p3" => lattice(pn_system(3)?, s),
        _ => Err(ProblemError::Unknown(s.into())),
    }
}

const DIFFUSION_T0: f64 = 0.01;
const DIFFUSION_T: f64 = 0.01;

/// Equilibrium heat-kernel release on `[0,2]^2`: the kernel moment follows
/// the scalar diffusion equation with the model's limit coefficient.
fn diffusion_problem(system: FriedrichsSystem, name: &str) -> Result<Problem, ProblemError> {
    system.validate()?;
    let mut spec = system.spectral()?;
    let report = system.check_structure(&mut spec)?;
    let sigma = 1.0;
    let d = report.a * report.a / (report.lambda * sigma);
    let center = [1.0, 1.0];
    Ok(Problem {
        name: name.into(),
        system,
        bc: Bc::uniform(BcKind::Vacuum),
        domain: Rect::new(0.0, 0.0, 2.0, 2.0),
        t_final: DIFFUSION_T,
        sigma,
        layout: CoeffLayout::Uniform,
        init: InitKind::Equilibrium(Box::new(move |x| {
            heat_kernel(d, DIFFUSION_T0, center, x)
        })),
        exact: ExactKind::Moment(Box::new(move |x| {
            heat_kernel(d, DIFFUSION_T0 + DIFFUSION_T, center, x)
        })),
    })
}

/// Free transport of a square indicator carried by the `+x` ordinate of the
/// four-direction system; the angular mean is discontinuous.
fn transport_case_1() -> Result<Problem, ProblemError> {
    let q = sn_quadrature(4)?;
    let w = q.weights[0];
    let sqrt_w = w.sqrt();
    let system = sn_system(&q)?;
    let t = 0.1;
    let indicator = |x: [f64; 2]| -> f64 {
        if (0.4..=0.6).contains(&x[0]) && (0.4..=0.6).contains(&x[1]) {
            1.0
        } else {
            0.0
        }
    };
    Ok(Problem {
        name: "transport1".into(),
        system,
        bc: Bc::uniform(BcKind::Vacuum),
        domain: Rect::unit(),
        t_final: t,
        sigma: 0.0,
        layout: CoeffLayout::Uniform,
        init: InitKind::Components(Box::new(move |x, i| {
            if i == 0 {
                sqrt_w * indicator(x)
            } else {
                0.0
            }
        })),
        exact: ExactKind::Moment(Box::new(move |x| w * indicator([x[0] - t, x[1]]))),
    })
}

const GAUSS_VAR: f64 = 0.01;

fn gaussian(x: [f64; 2], c: [f64; 2]) -> f64 {
    let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
    (-r2 / (2.0 * GAUSS_VAR)).exp()
}

/// Free transport of a smooth bump on every ordinate: the angular mean
/// splits into four drifting Gaussians.
fn transport_case_2() -> Result<Problem, ProblemError> {
    let q = sn_quadrature(4)?;
    let w = q.weights[0];
    let sqrt_w = w.sqrt();
    let dirs = q.directions.clone();
    let system = sn_system(&q)?;
    let t = 0.2;
    let center = [1.0, 1.0];
    Ok(Problem {
        name: "transport2".into(),
        system,
        bc: Bc::uniform(BcKind::Vacuum),
        domain: Rect::new(0.0, 0.0, 2.0, 2.0),
        t_final: t,
        sigma: 0.0,
        layout: CoeffLayout::Uniform,
        init: InitKind::Components(Box::new(move |x, _| sqrt_w * gaussian(x, center))),
        exact: ExactKind::Moment(Box::new(move |x| {
            dirs.iter()
                .map(|d| w * gaussian([x[0] - t * d[0], x[1] - t * d[1]], center))
                .sum()
        })),
    })
}

/// Point release with unit scattering: a qualitative intermediate-regime
/// run without a closed-form reference.
fn transport_case_3() -> Result<Problem, ProblemError> {
    let q = sn_quadrature(4)?;
    let system = sn_system(&q)?;
    Ok(Problem {
        name: "transport3".into(),
        system,
        bc: Bc::uniform(BcKind::Vacuum),
        domain: Rect::new(0.0, 0.0, 2.0, 2.0),
        t_final: 0.5,
        sigma: 1.0,
        layout: CoeffLayout::Uniform,
        init: InitKind::Point([1.0, 1.0]),
        exact: ExactKind::None,
    })
}

/// Point release of the kernel moment at unit scattering; the wavefront
/// location at the final time probes the model's maximal speed.
fn fundamental(system: FriedrichsSystem, name: &str) -> Result<Problem, ProblemError> {
    system.validate()?;
    Ok(Problem {
        name: name.into(),
        system,
        bc: Bc::uniform(BcKind::Vacuum),
        domain: Rect::new(0.0, 0.0, 2.0, 2.0),
        t_final: 1.0,
        sigma: 1.0,
        layout: CoeffLayout::Uniform,
        init: InitKind::Point([1.0, 1.0]),
        exact: ExactKind::None,
    })
}

/// The shielding lattice on `[0,7]^2`: absorbing squares around a central
/// absorbing source square in a scattering background, started from zero.
fn lattice(system: FriedrichsSystem, name: &str) -> Result<Problem, ProblemError> {
    system.validate()?;
    Ok(Problem {
        name: name.into(),
        system,
        bc: Bc::uniform(BcKind::Vacuum),
        domain: Rect::new(0.0, 0.0, 7.0, 7.0),
        t_final: 3.2,
        sigma: 1.0,
        layout: CoeffLayout::Lattice,
        init: InitKind::Zero,
        exact: ExactKind::None,
    })
}

// ---------------------------------------------------------------------------
// Error norms and wavefront measurement

/// Volume-weighted L1 and L2 errors of a cell scalar against a reference
/// evaluated at the cell centers.
pub fn moment_errors(
    mesh: &Mesh,
    rho: &[f64],
    exact: impl Fn([f64; 2]) -> f64,
) -> (f64, f64) {
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for j in 0..mesh.n_cells() {
        let e = rho[j] - exact(mesh.cell_center[j]);
        l1 += mesh.cell_area[j] * e.abs();
        l2 += mesh.cell_area[j] * e * e;
    }
    (l1, l2.sqrt())
}

/// Area-weighted radial profile of `|rho|` around `center` with the given
/// bin width; returns `(bin center radius, mean magnitude)` pairs.
pub fn radial_profile(
    mesh: &Mesh,
    rho: &[f64],
    center: [f64; 2],
    bin: f64,
) -> Vec<(f64, f64)> {
    let mut sums: Vec<(f64, f64)> = Vec::new();
    for j in 0..mesh.n_cells() {
        let x = mesh.cell_center[j];
        let r = (x[0] - center[0]).hypot(x[1] - center[1]);
        let b = (r / bin) as usize;
        if b >= sums.len() {
            sums.resize(b + 1, (0.0, 0.0));
        }
        sums[b].0 += mesh.cell_area[j] * rho[j].abs();
        sums[b].1 += mesh.cell_area[j];
    }
    sums.iter()
        .enumerate()
        .filter(|(_, (_, a))| *a > 0.0)
        .map(|(b, (s, a))| ((b as f64 + 0.5) * bin, s / a))
        .collect()
}

/// Radius of the outermost local maximum of the radial profile that still
/// reaches `threshold` times the global maximum: the wavefront location of
/// an expanding point release.
pub fn support_radius(
    mesh: &Mesh,
    rho: &[f64],
    center: [f64; 2],
    bin: f64,
    threshold: f64,
) -> Option<f64> {
    let profile = radial_profile(mesh, rho, center, bin);
    let max = profile.iter().fold(0.0f64, |m, &(_, v)| m.max(v));
    if max <= 0.0 {
        return None;
    }
    for i in (0..profile.len()).rev() {
        let v = profile[i].1;
        if v < threshold * max {
            continue;
        }
        let left = if i > 0 { profile[i - 1].1 } else { 0.0 };
        let right = if i + 1 < profile.len() { profile[i + 1].1 } else { 0.0 };
        if v >= left && v >= right {
            return Some(profile[i].0);
        }
    }
    None
}
