//! Time integration: explicit Euler, the locally implicit (semi-implicit)
//! update that keeps the stiff relaxation stable at parabolic step sizes,
//! and the fully implicit Euler step with a sparse linear solve.

use thiserror::Error;

use crate::mesh::Mesh;
use crate::numerics::{NumericsError, SparseOperator};
use crate::par;
use crate::schemes::{mat2_add, mat2_id, mat2_inv, mat2_scale, mat2_vec, ComposedOperator};
use crate::system::Field;

#[derive(Debug, Error)]
pub enum TimeError {
    #[error("bad time configuration: {0}")]
    BadConfig(String),
    #[error("linear solve failed: {0}")]
    Solve(#[from] NumericsError),
    #[error("local relaxation solve became singular in cell {0}")]
    SingularLocal(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScheme {
    Explicit,
    SemiImplicit,
    Implicit,
}

impl TimeScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "explicit" => Some(Self::Explicit),
            "semi-implicit" | "semi_implicit" => Some(Self::SemiImplicit),
            "implicit" => Some(Self::Implicit),
            _ => None,
        }
    }
}

/// Stable step size for the given scheme.
///
/// * explicit: hyperbolic restriction `cfl * eps * h / c_max` capped by the
///   relaxation stiffness `eps^2 / (sigma_max * diag_max)`;
/// * semi-implicit: the hyperbolic part is damped, so the restriction
///   relaxes towards the parabolic `c0 * sigma * h^2` scale;
/// * implicit: parabolic default `h^2 / 2`.
pub fn stable_dt(
    scheme: TimeScheme,
    mesh: &Mesh,
    eps: f64,
    sigma_max: f64,
    c_max: f64,
    diag_max: f64,
    c0: f64,
    cfl: f64,
) -> f64 {
    let h = mesh.h_min();
    match scheme {
        TimeScheme::Explicit => {
            let hyp = cfl * eps * h / c_max;
            if sigma_max * diag_max > 0.0 {
                hyp.min(cfl * 2.0 * eps * eps / (sigma_max * diag_max))
            } else {
                hyp
            }
        }
        TimeScheme::SemiImplicit => cfl * (eps * h / c_max + 0.5 * c0 * sigma_max * h * h),
        TimeScheme::Implicit => 0.5 * h * h,
    }
}

/// Weighted L2 norm `sqrt(sum_j |Omega_j| |V_j|^2)`.
pub fn weighted_l2(mesh: &Mesh, v: &Field) -> f64 {
    let mut s = 0.0;
    for j in 0..v.n_cells() {
        let c = v.cell(j);
        s += mesh.cell_area[j] * c.iter().map(|x| x * x).sum::<f64>();
    }
    s.sqrt()
}

const IMPLICIT_TOL: f64 = 1e-12;
const IMPLICIT_MAX_ITER: usize = 2000;

/// Stepper bound to one composed operator; the implicit system matrix is
/// cached between equal-size steps.
pub struct Integrator<'a, 'b> {
    pub op: &'a ComposedOperator<'b>,
    pub mesh: &'a Mesh,
    pub scheme: TimeScheme,
    affine: Field,
    implicit: Option<(f64, SparseOperator)>,
    /// Per-cell inverses of the local relaxation blocks (semi-implicit).
    local: Option<(f64, Vec<[[f64; 2]; 2]>)>,
}

impl<'a, 'b> Integrator<'a, 'b> {
    pub fn new(op: &'a ComposedOperator<'b>, mesh: &'a Mesh, scheme: TimeScheme) -> Self {
        let affine = op.affine();
        Self { op, mesh, scheme, affine, implicit: None, local: None }
    }

    fn implicit_matrix(&mut self, dt: f64) -> &SparseOperator {
        let stale = match &self.implicit {
            Some((cached, _)) => *cached != dt,
            None => true,
        };
        if stale {
            let dim = self.mesh.n_cells() * self.op.n_comp;
            let mut triplets = self.op.triplets(-dt);
            for i in 0..dim {
                triplets.push((i, i, 1.0));
            }
            self.implicit = Some((dt, SparseOperator::from_triplets(dim, &triplets)));
        }
        &self.implicit.as_ref().unwrap().1
    }

    fn local_inverses(&mut self, dt: f64) -> Result<&Vec<[[f64; 2]; 2]>, TimeError> {
        let stale = match &self.local {
            Some((cached, _)) => *cached != dt,
            None => true,
        };
        if stale {
            let eps = self.op.source.eps;
            let mut inv = Vec::with_capacity(self.mesh.n_cells());
            for j in 0..self.mesh.n_cells() {
                let relax = match &self.op.jlb {
                    Some(jlb) => jlb.relax_matrix(j),
                    None => [[0.0; 2]; 2],
                };
                let m = mat2_add(
                    mat2_id(),
                    mat2_scale(relax, dt / (eps * self.mesh.cell_area[j])),
                );
                let (m_inv, _) = mat2_inv(m).ok_or(TimeError::SingularLocal(j))?;
                inv.push(m_inv);
            }
            self.local = Some((dt, inv));
        }
        Ok(&self.local.as_ref().unwrap().1)
    }

    /// Advance `v` by one step of size `dt`.
    pub fn step(&mut self, v: &mut Field, dt: f64) -> Result<(), TimeError> {
        match self.scheme {
            TimeScheme::Explicit => {
                let rate = self.op.apply(v);
                for (x, (r, b)) in
                    v.data.iter_mut().zip(rate.data.iter().zip(&self.affine.data))
                {
                    *x += dt * (r + b);
                }
                Ok(())
            }
            TimeScheme::Implicit => {
                let rhs: Vec<f64> = v
                    .data
                    .iter()
                    .zip(&self.affine.data)
                    .map(|(x, b)| x + dt * b)
                    .collect();
                let mat = self.implicit_matrix(dt);
                let sol = mat.solve(&rhs, IMPLICIT_TOL, IMPLICIT_MAX_ITER)?;
                v.data = sol;
                Ok(())
            }
            TimeScheme::SemiImplicit => {
                // explicit fluxes (the hyperbolic part carries its damping
                // factors), then cell-local implicit relaxation
                let mut rate = Field::zeros(v.n_cells(), v.n_comp);
                if let Some(jlb) = &self.op.jlb {
                    jlb.apply_flux_into(v, &mut rate);
                }
                if let Some(h) = &self.op.hyp {
                    h.apply_into(v, &mut rate);
                }
                let local = self.local_inverses(dt)?.clone();
                let coeffs = self.op.coeffs;
                let diag = &self.op.source.diag;
                let eps2 = self.op.source.eps * self.op.source.eps;
                let n_comp = v.n_comp;
                let rate_data = &rate.data;
                par::for_each_chunk_mut(&mut v.data, n_comp, |j, vj| {
                    let rj = &rate_data[j * n_comp..(j + 1) * n_comp];
                    for i in 0..n_comp {
                        vj[i] += dt * rj[i];
                    }
                    let u = mat2_vec(local[j], [vj[1], vj[2]]);
                    vj[1] = u[0];
                    vj[2] = u[1];
                    let s = coeffs.sigma[j] / eps2;
                    for i in 3..n_comp {
                        vj[i] /= 1.0 + dt * s * diag[i];
                    }
                    vj[0] = (vj[0] + dt * coeffs.q_src[j]) / (1.0 + dt * coeffs.sigma_a[j]);
                });
                Ok(())
            }
        }
    }

    /// Run to `t_final`, truncating the last step; `observer` sees the state
    /// after every step.
    pub fn run(
        &mut self,
        v: &mut Field,
        dt: f64,
        t_final: f64,
        mut observer: impl FnMut(usize, f64, &Field),
    ) -> Result<usize, TimeError> {
        if !(dt > 0.0) || !(t_final >= 0.0) {
            return Err(TimeError::BadConfig(format!(
                "need dt > 0 and t_final >= 0, got dt = {dt}, t_final = {t_final}"
            )));
        }
        let mut t = 0.0;
        let mut steps = 0;
        while t < t_final - 1e-14 * t_final.max(1.0) {
            let step_dt = dt.min(t_final - t);
            self.step(v, step_dt)?;
            t += step_dt;
            steps += 1;
            observer(steps, t, v);
        }
        Ok(steps)
    }
}
