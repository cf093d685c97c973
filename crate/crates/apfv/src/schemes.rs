//! Spatial discretizations in diagonal variables: the nodal AP scheme for
//! the heat-like block, upwind / block-Rusanov fluxes for the remainder
//! block, local relaxation sources, and the ghost-cell boundary closure.
//!
//! All generated meshes keep their boundary on the axis-aligned domain
//! rectangle, so reflective/vacuum ghosts are axis mirrors and periodic
//! wraparound is resolved by exact coordinate matching of boundary nodes.

use std::collections::HashMap;

use thiserror::Error;

use crate::mesh::Mesh;
use crate::numerics::{pos_neg_split, sym_eigendecompose, DenseMatrix, NumericsError};
use crate::par;
use crate::system::{Coefficients, Decomposition, Field, StructureReport};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("unsupported boundary condition: {0}")]
    UnsupportedBc(String),
    #[error("singular node matrix at node class {class} (condition estimate {cond:.3e})")]
    SingularNodeMatrix { class: usize, cond: f64 },
    #[error("stabilization speed {s:.3e} below the spectral radius {rho:.3e}")]
    BadSpeed { s: f64, rho: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Periodic,
    Reflective,
    Vacuum,
}

/// Per-axis boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bc {
    pub x: BcKind,
    pub y: BcKind,
}

impl Bc {
    pub fn uniform(kind: BcKind) -> Self {
        Self { x: kind, y: kind }
    }
}

/// How the state of a node/edge contribution is derived from a real cell.
/// The reflections negate the normal component of the `(V_2, V_3)` velocity
/// pair and leave everything else untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateRef {
    Real(usize),
    ReflectX(usize),
    ReflectY(usize),
    ReflectXy(usize),
    Vacuum,
}

impl StateRef {
    /// Owner cell whose state feeds this reference, if any.
    pub fn owner(&self) -> Option<usize> {
        match *self {
            StateRef::Real(j)
            | StateRef::ReflectX(j)
            | StateRef::ReflectY(j)
            | StateRef::ReflectXy(j) => Some(j),
            StateRef::Vacuum => None,
        }
    }

    /// Sign factors applied to `(p, u_x, u_y)` of the owner.
    fn signs(&self) -> [f64; 3] {
        match self {
            StateRef::Real(_) => [1.0, 1.0, 1.0],
            StateRef::ReflectX(_) => [1.0, -1.0, 1.0],
            StateRef::ReflectY(_) => [1.0, 1.0, -1.0],
            StateRef::ReflectXy(_) => [1.0, -1.0, -1.0],
            StateRef::Vacuum => [0.0, 0.0, 0.0],
        }
    }
}

/// One corner contribution to a node solve: geometry plus the state rule.
#[derive(Debug, Clone, Copy)]
pub struct Contrib {
    pub state: StateRef,
    pub l: f64,
    pub n: [f64; 2],
    /// `x_r - x_center` of the (possibly mirrored) contributing cell.
    pub dx: [f64; 2],
}

/// Merged node: contributions of all periodically identified mesh nodes
/// plus their ghost mirrors.
#[derive(Debug, Clone)]
pub struct NodeClass {
    pub contribs: Vec<Contrib>,
}

/// Resolution of a boundary edge's neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeNeighbor {
    Interior(usize),
    Periodic(usize),
    Vacuum,
    ReflectX,
    ReflectY,
}

/// Geometry-only boundary closure shared by all operators on a mesh.
#[derive(Debug, Clone)]
pub struct Closure {
    pub classes: Vec<NodeClass>,
    pub class_of_node: Vec<usize>,
    pub edge_neighbors: Vec<EdgeNeighbor>,
    /// Effective center-to-center distance per edge (wrap-corrected for
    /// periodic edges).
    pub edge_d: Vec<f64>,
    /// Edges incident to each cell.
    pub cell_edges: Vec<Vec<usize>>,
}

const COORD_QUANTUM: f64 = 1e-9;

fn quantize(p: [f64; 2], scale: f64) -> (i64, i64) {
    (
        (p[0] / (COORD_QUANTUM * scale)).round() as i64,
        (p[1] / (COORD_QUANTUM * scale)).round() as i64,
    )
}

/// Sides of the domain rectangle a point lies on.
fn sides_of(p: [f64; 2], mesh: &Mesh) -> (bool, bool, bool, bool) {
    let d = &mesh.domain;
    let tol = COORD_QUANTUM * d.width().max(d.height());
    (
        (p[0] - d.x0).abs() <= tol,
        (p[0] - d.x1).abs() <= tol,
        (p[1] - d.y0).abs() <= tol,
        (p[1] - d.y1).abs() <= tol,
    )
}

/// Build the node classes and edge neighbor table for the given boundary
/// conditions.
pub fn build_closure(mesh: &Mesh, bc: Bc) -> Result<Closure, SchemeError> {
    let d = &mesh.domain;
    let scale = d.width().max(d.height());
    let n_nodes = mesh.nodes.len();

    // Periodic identification: map every node to a canonical position with
    // periodic high sides folded onto the low sides.
    let canonical = |p: [f64; 2]| -> [f64; 2] {
        let (_, on_x1, _, on_y1) = sides_of(p, mesh);
        let mut q = p;
        if bc.x == BcKind::Periodic && on_x1 {
            q[0] = d.x0;
        }
        if bc.y == BcKind::Periodic && on_y1 {
            q[1] = d.y0;
        }
        q
    };
    let mut class_of_node = vec![usize::MAX; n_nodes];
    let mut class_members: Vec<Vec<usize>> = Vec::new();
    let mut key_to_class: HashMap<(i64, i64), usize> = HashMap::new();
    for r in 0..n_nodes {
        let key = quantize(canonical(mesh.nodes[r]), scale);
        let class = *key_to_class.entry(key).or_insert_with(|| {
            class_members.push(Vec::new());
            class_members.len() - 1
        });
        class_of_node[r] = class;
        class_members[class].push(r);
    }
    if bc.x == BcKind::Periodic || bc.y == BcKind::Periodic {
        // each folded boundary node must have found a partner
        for (r, &class) in class_of_node.iter().enumerate() {
            let p = mesh.nodes[r];
            let (on_x0, on_x1, on_y0, on_y1) = sides_of(p, mesh);
            let px = bc.x == BcKind::Periodic && (on_x0 || on_x1);
            let py = bc.y == BcKind::Periodic && (on_y0 || on_y1);
            let expected = match (px, py) {
                (true, true) => 4,
                (true, false) | (false, true) => 2,
                (false, false) => 1,
            };
            if class_members[class].len() != expected {
                return Err(SchemeError::UnsupportedBc(format!(
                    "periodic wraparound: boundary node {r} at ({:.6}, {:.6}) has no matching partner",
                    p[0], p[1]
                )));
            }
        }
    }

    // Node contributions: real corners of every class member, plus axis
    // mirrors across each adjacent non-periodic boundary side.
    let mut classes: Vec<NodeClass> =
        (0..class_members.len()).map(|_| NodeClass { contribs: Vec::new() }).collect();
    for (j, cell) in mesh.cells.iter().enumerate() {
        for (pos, &r) in cell.iter().enumerate() {
            let c = &mesh.corners[j][pos];
            let xr = mesh.nodes[r];
            let xc = mesh.cell_center[j];
            let class = class_of_node[r];
            let contribs = &mut classes[class].contribs;
            contribs.push(Contrib {
                state: StateRef::Real(j),
                l: c.l,
                n: c.n,
                dx: [xr[0] - xc[0], xr[1] - xc[1]],
            });
            if !mesh.boundary_node[r] {
                continue;
            }
            let (on_x0, on_x1, on_y0, on_y1) = sides_of(xr, mesh);
            let mx = match (bc.x, on_x0, on_x1) {
                (BcKind::Periodic, _, _) | (_, false, false) => None,
                (_, true, _) => Some(d.x0),
                (_, _, true) => Some(d.x1),
            };
            let my = match (bc.y, on_y0, on_y1) {
                (BcKind::Periodic, _, _) | (_, false, false) => None,
                (_, true, _) => Some(d.y0),
                (_, _, true) => Some(d.y1),
            };
            let vac = |k: BcKind| k == BcKind::Vacuum;
            if let Some(cx) = mx {
                contribs.push(Contrib {
                    state: if vac(bc.x) { StateRef::Vacuum } else { StateRef::ReflectX(j) },
                    l: c.l,
                    n: [-c.n[0], c.n[1]],
                    dx: [xr[0] - (2.0 * cx - xc[0]), xr[1] - xc[1]],
                });
            }
            if let Some(cy) = my {
                contribs.push(Contrib {
                    state: if vac(bc.y) { StateRef::Vacuum } else { StateRef::ReflectY(j) },
                    l: c.l,
                    n: [c.n[0], -c.n[1]],
                    dx: [xr[0] - xc[0], xr[1] - (2.0 * cy - xc[1])],
                });
            }
            if let (Some(cx), Some(cy)) = (mx, my) {
                let state = if vac(bc.x) || vac(bc.y) {
                    StateRef::Vacuum
                } else {
                    StateRef::ReflectXy(j)
                };
                contribs.push(Contrib {
                    state,
                    l: c.l,
                    n: [-c.n[0], -c.n[1]],
                    dx: [xr[0] - (2.0 * cx - xc[0]), xr[1] - (2.0 * cy - xc[1])],
                });
            }
        }
    }

    // Edge neighbors: interior edges resolve directly; boundary edges match
    // by side.
    let mut edge_neighbors = Vec::with_capacity(mesh.edges.len());
    let mut edge_d = Vec::with_capacity(mesh.edges.len());
    // index boundary edges by quantized folded midpoint for periodic matching
    let mut boundary_by_mid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (ei, e) in mesh.edges.iter().enumerate() {
        if e.k.is_none() {
            boundary_by_mid
                .entry(quantize(canonical(e.midpoint), scale))
                .or_default()
                .push(ei);
        }
    }
    for (ei, e) in mesh.edges.iter().enumerate() {
        match e.k {
            Some(k) => {
                edge_neighbors.push(EdgeNeighbor::Interior(k));
                edge_d.push(e.d_jk);
            }
            None => {
                let (on_x0, on_x1, on_y0, on_y1) = sides_of(e.midpoint, mesh);
                let axis_x = on_x0 || on_x1;
                let kind = if axis_x { bc.x } else { bc.y };
                debug_assert!(axis_x || on_y0 || on_y1, "boundary edge off the domain rectangle");
                match kind {
                    BcKind::Vacuum => {
                        edge_neighbors.push(EdgeNeighbor::Vacuum);
                        edge_d.push(e.d_jk);
                    }
                    BcKind::Reflective => {
                        edge_neighbors
                            .push(if axis_x { EdgeNeighbor::ReflectX } else { EdgeNeighbor::ReflectY });
                        edge_d.push(e.d_jk);
                    }
                    BcKind::Periodic => {
                        let key = quantize(canonical(e.midpoint), scale);
                        let partners = boundary_by_mid.get(&key).cloned().unwrap_or_default();
                        let partner = partners.iter().copied().find(|&p| p != ei).ok_or_else(|| {
                            SchemeError::UnsupportedBc(format!(
                                "periodic wraparound: boundary edge at ({:.6}, {:.6}) has no partner",
                                e.midpoint[0], e.midpoint[1]
                            ))
                        })?;
                        let pe = &mesh.edges[partner];
                        edge_neighbors.push(EdgeNeighbor::Periodic(pe.j));
                        edge_d.push(0.5 * e.d_jk + 0.5 * pe.d_jk);
                    }
                }
            }
        }
    }

    let mut cell_edges = vec![Vec::new(); mesh.n_cells()];
    for (ei, e) in mesh.edges.iter().enumerate() {
        cell_edges[e.j].push(ei);
        if let Some(k) = e.k {
            cell_edges[k].push(ei);
        }
    }

    Ok(Closure { classes, class_of_node, edge_neighbors, edge_d, cell_edges })
}

// ---------------------------------------------------------------------------
// 2x2 helpers for the node solves

pub type Mat2 = [[f64; 2]; 2];

pub fn mat2_zero() -> Mat2 {
    [[0.0; 2]; 2]
}

pub fn mat2_id() -> Mat2 {
    [[1.0, 0.0], [0.0, 1.0]]
}

pub fn mat2_add(a: Mat2, b: Mat2) -> Mat2 {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

pub fn mat2_sub(a: Mat2, b: Mat2) -> Mat2 {
    [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]]
}

pub fn mat2_scale(a: Mat2, s: f64) -> Mat2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

pub fn mat2_mul(a: Mat2, b: Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

pub fn mat2_vec(a: Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Inverse with a crude condition estimate (Frobenius-based); `None` when
/// the estimate exceeds the singularity threshold.
pub fn mat2_inv(a: Mat2) -> Option<(Mat2, f64)> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let norm = a[0][0].hypot(a[0][1]).hypot(a[1][0].hypot(a[1][1]));
    if det.abs() <= 1e-300 {
        return None;
    }
    let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
    let inv_norm = inv[0][0].hypot(inv[0][1]).hypot(inv[1][0].hypot(inv[1][1]));
    Some((inv, norm * inv_norm))
}

const NODE_COND_LIMIT: f64 = 1e12;

fn outer(a: [f64; 2], b: [f64; 2]) -> Mat2 {
    [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]]
}

// ---------------------------------------------------------------------------
// Nodal AP operator for the heat-like block

/// Per-class solve data for the nodal AP scheme.
#[derive(Debug, Clone)]
struct ClassSolve {
    inv_a: Mat2,
    m_r: Mat2,
}

/// Nodal AP discretization of the heat-like block, acting on components
/// `(V_1, V_2, V_3)` of the diagonal field.
pub struct JlbOperator<'a> {
    pub mesh: &'a Mesh,
    pub closure: &'a Closure,
    pub a: f64,
    pub eps: f64,
    solves: Vec<ClassSolve>,
    /// Per-cell relaxation matrix `sum_r alpha_jr (I - M_r)`.
    relax: Vec<Mat2>,
}

/// Node state `(p, u_x, u_y)` for one contribution.
#[inline]
fn contrib_state(v: &Field, c: &Contrib) -> [f64; 3] {
    match c.state.owner() {
        None => [0.0; 3],
        Some(j) => {
            let s = c.state.signs();
            let cell = v.cell(j);
            [s[0] * cell[0], s[1] * cell[1], s[2] * cell[2]]
        }
    }
}

impl<'a> JlbOperator<'a> {
    pub fn new(
        mesh: &'a Mesh,
        closure: &'a Closure,
        report: &StructureReport,
        coeffs: &Coefficients,
    ) -> Result<Self, SchemeError> {
        let a = report.a;
        let lambda = report.lambda;
        let eps = coeffs.eps;
        let mut solves = Vec::with_capacity(closure.classes.len());
        for (ci, class) in closure.classes.iter().enumerate() {
            let mut a_mat = mat2_zero();
            let mut b_mat = mat2_zero();
            let mut sigma_sum = 0.0;
            let mut sigma_n = 0usize;
            for c in &class.contribs {
                a_mat = mat2_add(a_mat, mat2_scale(outer(c.n, c.n), c.l));
                b_mat = mat2_add(b_mat, mat2_scale(outer(c.n, c.dx), c.l));
                if let StateRef::Real(j) = c.state {
                    sigma_sum += coeffs.sigma[j];
                    sigma_n += 1;
                }
            }
            let sigma = sigma_sum / sigma_n.max(1) as f64;
            let (inv_a, cond) = mat2_inv(a_mat)
                .ok_or(SchemeError::SingularNodeMatrix { class: ci, cond: f64::INFINITY })?;
            if cond > NODE_COND_LIMIT {
                return Err(SchemeError::SingularNodeMatrix { class: ci, cond });
            }
            let shifted = mat2_add(a_mat, mat2_scale(b_mat, sigma * lambda / (a * eps)));
            let (inv_shifted, cond_s) = mat2_inv(shifted)
                .ok_or(SchemeError::SingularNodeMatrix { class: ci, cond: f64::INFINITY })?;
            if cond_s > NODE_COND_LIMIT {
                return Err(SchemeError::SingularNodeMatrix { class: ci, cond: cond_s });
            }
            let m_r = mat2_mul(inv_shifted, a_mat);
            solves.push(ClassSolve { inv_a, m_r });
        }

        let mut relax = vec![mat2_zero(); mesh.n_cells()];
        for (j, cell) in mesh.cells.iter().enumerate() {
            let mut acc = mat2_zero();
            for (pos, &r) in cell.iter().enumerate() {
                let c = &mesh.corners[j][pos];
                let class = closure.class_of_node[r];
                let alpha = mat2_scale(outer(c.n, c.n), c.l);
                acc = mat2_add(acc, mat2_mul(alpha, mat2_sub(mat2_id(), solves[class].m_r)));
            }
            relax[j] = acc;
        }

        Ok(Self { mesh, closure, a, eps, solves, relax })
    }

    /// Node velocities `u_r` per node class.
    pub fn node_velocities(&self, v: &Field) -> Vec<[f64; 2]> {
        par::map_indexed(self.closure.classes.len(), |ci| {
            let class = &self.closure.classes[ci];
            let mut rhs = [0.0f64; 2];
            for c in &class.contribs {
                let st = contrib_state(v, c);
                rhs[0] += c.l * st[0] * c.n[0];
                rhs[1] += c.l * st[0] * c.n[1];
                let alpha_u = mat2_vec(mat2_scale(outer(c.n, c.n), c.l), [st[1], st[2]]);
                rhs[0] += alpha_u[0];
                rhs[1] += alpha_u[1];
            }
            mat2_vec(self.solves[ci].inv_a, rhs)
        })
    }

    /// Add the flux part of the scheme (everything except the cell
    /// relaxation term) into `out`, which accumulates `dV/dt`.
    pub fn apply_flux_into(&self, v: &Field, out: &mut Field) {
        let u_r = self.node_velocities(v);
        let n_comp = v.n_comp;
        let mesh = self.mesh;
        let closure = self.closure;
        let a_over_eps = self.a / self.eps;
        let solves = &self.solves;
        par::for_each_chunk_mut(&mut out.data, n_comp, |j, out_j| {
            let inv_vol = 1.0 / mesh.cell_area[j];
            let uj = [v.cell(j)[1], v.cell(j)[2]];
            let mut dp = 0.0;
            let mut du = [0.0f64; 2];
            for (pos, &r) in mesh.cells[j].iter().enumerate() {
                let c = &mesh.corners[j][pos];
                let class = closure.class_of_node[r];
                let w = mat2_vec(solves[class].m_r, u_r[class]);
                dp += c.l * (w[0] * c.n[0] + w[1] * c.n[1]);
                let alpha = mat2_scale(outer(c.n, c.n), c.l);
                let m_du = mat2_vec(
                    solves[class].m_r,
                    [uj[0] - u_r[class][0], uj[1] - u_r[class][1]],
                );
                let t = mat2_vec(alpha, m_du);
                du[0] += t[0];
                du[1] += t[1];
            }
            out_j[0] -= a_over_eps * inv_vol * dp;
            out_j[1] -= a_over_eps * inv_vol * du[0];
            out_j[2] -= a_over_eps * inv_vol * du[1];
        });
    }

    /// Add the cell relaxation term `-(1/eps) (sum_r alpha (I - M_r)) u_j`
    /// into `out`.
    pub fn apply_relax_into(&self, v: &Field, out: &mut Field) {
        let n_comp = v.n_comp;
        let mesh = self.mesh;
        let relax = &self.relax;
        let inv_eps = 1.0 / self.eps;
        par::for_each_chunk_mut(&mut out.data, n_comp, |j, out_j| {
            let inv_vol = 1.0 / mesh.cell_area[j];
            let uj = [v.cell(j)[1], v.cell(j)[2]];
            let t = mat2_vec(relax[j], uj);
            out_j[1] -= inv_eps * inv_vol * t[0];
            out_j[2] -= inv_eps * inv_vol * t[1];
        });
    }

    /// Full operator application (fluxes plus relaxation).
    pub fn apply_into(&self, v: &Field, out: &mut Field) {
        self.apply_flux_into(v, out);
        self.apply_relax_into(v, out);
    }

    /// Per-cell relaxation matrix (needed by the locally implicit update).
    pub fn relax_matrix(&self, j: usize) -> Mat2 {
        self.relax[j]
    }

    /// Expand the operator into sparse triplets over the cell-major field
    /// layout, scaled by `scale`.
    pub fn triplets(&self, n_comp: usize, scale: f64, out: &mut Vec<(usize, usize, f64)>) {
        let mesh = self.mesh;
        let closure = self.closure;
        let a_over_eps = self.a / self.eps;
        // node solutions as linear maps of contributing states:
        // u_r = inv_a * sum_c [ l n p_c + alpha u_c ]
        for j in 0..mesh.n_cells() {
            let inv_vol = 1.0 / mesh.cell_area[j];
            let row_p = j * n_comp;
            let row_u = [j * n_comp + 1, j * n_comp + 2];
            for (pos, &r) in mesh.cells[j].iter().enumerate() {
                let c = &mesh.corners[j][pos];
                let class_id = closure.class_of_node[r];
                let class = &closure.classes[class_id];
                let solve = &self.solves[class_id];
                let alpha_jr = mat2_scale(outer(c.n, c.n), c.l);
                let m = solve.m_r;
                // p-row coefficient on u_r: -(a/eps/vol) l n^t M
                let pn = mat2_vec(
                    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]],
                    [c.l * c.n[0], c.l * c.n[1]],
                ); // M^t (l n)
                // u-rows coefficient on u_r: +(a/eps/vol) alpha M (from -(alpha M (u_j - u_r)))
                let am = mat2_mul(alpha_jr, m);
                for contrib in &class.contribs {
                    let Some(owner) = contrib.state.owner() else { continue };
                    let signs = contrib.state.signs();
                    // u_r contribution of this contrib:
                    //   on p_owner:  inv_a (l n) * sign_p
                    //   on u_owner:  inv_a alpha_c * diag(sign_u)
                    let g_p = mat2_vec(solve.inv_a, [contrib.l * contrib.n[0], contrib.l * contrib.n[1]]);
                    let alpha_c = mat2_scale(outer(contrib.n, contrib.n), contrib.l);
                    let g_u = mat2_mul(solve.inv_a, alpha_c);
                    let col_p = owner * n_comp;
                    let col_u = [owner * n_comp + 1, owner * n_comp + 2];
                    // p-row
                    let coef_p = -(a_over_eps * inv_vol) * (pn[0] * g_p[0] + pn[1] * g_p[1]);
                    out.push((row_p, col_p, scale * coef_p * signs[0]));
                    for (d, &col) in col_u.iter().enumerate() {
                        let coef = -(a_over_eps * inv_vol)
                            * (pn[0] * g_u[0][d] + pn[1] * g_u[1][d]);
                        out.push((row_p, col, scale * coef * signs[d + 1]));
                    }
                    // u-rows: +(a/eps/vol) (alpha M) u_r
                    for (i, &row) in row_u.iter().enumerate() {
                        let coef_p =
                            (a_over_eps * inv_vol) * (am[i][0] * g_p[0] + am[i][1] * g_p[1]);
                        out.push((row, col_p, scale * coef_p * signs[0]));
                        for (d, &col) in col_u.iter().enumerate() {
                            let coef = (a_over_eps * inv_vol)
                                * (am[i][0] * g_u[0][d] + am[i][1] * g_u[1][d]);
                            out.push((row, col, scale * coef * signs[d + 1]));
                        }
                    }
                }
                // u-rows: -(a/eps/vol) alpha M u_j (local part)
                for (i, &row) in row_u.iter().enumerate() {
                    for (d, &col) in row_u.iter().enumerate() {
                        out.push((row, col, -scale * a_over_eps * inv_vol * am[i][d]));
                    }
                }
            }
            // cell relaxation: -(1/eps/vol) relax_j u_j
            let relax = self.relax[j];
            for (i, &row) in [row_u[0], row_u[1]].iter().enumerate() {
                for (d, &col) in [row_u[0], row_u[1]].iter().enumerate() {
                    out.push((row, col, -scale * relax[i][d] / (self.eps * mesh.cell_area[j])));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Limit diffusion scheme (shared by the AP consistency tests and the
// harness demo)

/// One explicit evaluation of the coarse-grid limit diffusion scheme:
/// `dp_j/dt = -(a^2/(sigma lambda)) (1/|Omega_j|) sum_r l_jr (u_r, n_jr)`
/// with node velocities from the beta-tensor solve
/// `(sum_j l n (x) (x_r - x_j)) u_r = sum_j l p_j n`.
pub fn limit_diffusion_rate(
    mesh: &Mesh,
    closure: &Closure,
    report: &StructureReport,
    coeffs: &Coefficients,
    p: &[f64],
) -> Result<Vec<f64>, SchemeError> {
    let mut u_r = vec![[0.0f64; 2]; closure.classes.len()];
    for (ci, class) in closure.classes.iter().enumerate() {
        let mut b_mat = mat2_zero();
        let mut rhs = [0.0f64; 2];
        for c in &class.contribs {
            b_mat = mat2_add(b_mat, mat2_scale(outer(c.n, c.dx), c.l));
            let pc = match c.state.owner() {
                Some(j) => c.state.signs()[0] * p[j],
                None => 0.0,
            };
            rhs[0] += c.l * pc * c.n[0];
            rhs[1] += c.l * pc * c.n[1];
        }
        let (inv_b, cond) = mat2_inv(b_mat)
            .ok_or(SchemeError::SingularNodeMatrix { class: ci, cond: f64::INFINITY })?;
        if cond > NODE_COND_LIMIT {
            return Err(SchemeError::SingularNodeMatrix { class: ci, cond });
        }
        u_r[ci] = mat2_vec(inv_b, rhs);
    }
    let mut rate = vec![0.0f64; mesh.n_cells()];
    for (j, cell) in mesh.cells.iter().enumerate() {
        let d = report.a * report.a / (coeffs.sigma[j] * report.lambda);
        let mut s = 0.0;
        for (pos, &r) in cell.iter().enumerate() {
            let c = &mesh.corners[j][pos];
            let class = closure.class_of_node[r];
            s += c.l * (u_r[class][0] * c.n[0] + u_r[class][1] * c.n[1]);
        }
        rate[j] = -d * s / mesh.cell_area[j];
    }
    Ok(rate)
}

// ---------------------------------------------------------------------------
// Hyperbolic operators for the remainder block

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxKind {
    Upwind,
    /// Rusanov with the stabilization suppressed on the kernel component
    /// (whose rows of the remainder matrices vanish identically).
    BlockRusanov,
}

#[derive(Debug, Clone)]
enum EdgeFlux {
    Upwind { g_plus: DenseMatrix, g_minus: DenseMatrix },
    Rusanov { g: DenseMatrix, s: f64 },
}

/// Edge-based discretization of a symmetric flux pair, scaled by `1/eps`.
///
/// Used in two roles: for the remainder block (`zero_kernel = true`, the
/// kernel row/column of the edge matrices is forced to exact zero and the
/// Rusanov stabilization skips it) and for full-system upwinding without
/// the nodal scheme (`zero_kernel = false`).
pub struct HyperbolicOperator<'a> {
    pub mesh: &'a Mesh,
    pub closure: &'a Closure,
    pub eps: f64,
    pub n_comp: usize,
    zero_kernel: bool,
    /// Flux data per edge (shared between edges with equal normals).
    flux: Vec<usize>,
    flux_data: Vec<EdgeFlux>,
    /// Max wave speed per edge (the Rusanov speed; also used by the
    /// semi-implicit damping factors).
    pub speeds: Vec<f64>,
    /// Optional per-edge damping factor (semi-implicit runs).
    pub damping: Option<Vec<f64>>,
}

impl<'a> HyperbolicOperator<'a> {
    /// Remainder-block operator from a decomposition.
    pub fn remainder(
        mesh: &'a Mesh,
        closure: &'a Closure,
        decomp: &Decomposition,
        coeffs: &Coefficients,
        kind: FluxKind,
    ) -> Result<Self, SchemeError> {
        Self::new(mesh, closure, &decomp.a1pp, &decomp.a2pp, coeffs, kind, true)
    }

    pub fn new(
        mesh: &'a Mesh,
        closure: &'a Closure,
        a1: &DenseMatrix,
        a2: &DenseMatrix,
        coeffs: &Coefficients,
        kind: FluxKind,
        zero_kernel: bool,
    ) -> Result<Self, SchemeError> {
        let n_comp = a1.rows;
        let mut cache: HashMap<(i64, i64), usize> = HashMap::new();
        let mut flux_data: Vec<EdgeFlux> = Vec::new();
        let mut speeds_by_data: Vec<f64> = Vec::new();
        let mut flux = Vec::with_capacity(mesh.edges.len());
        for e in &mesh.edges {
            let key = (
                (e.normal[0] / 1e-12).round() as i64,
                (e.normal[1] / 1e-12).round() as i64,
            );
            let idx = match cache.get(&key) {
                Some(&i) => i,
                None => {
                    let g = a1.scale(e.normal[0]).add(&a2.scale(e.normal[1]));
                    let (lambdas, _) = sym_eigendecompose(&g, 1e-10 * g.norm_inf().max(1.0))?;
                    let rho = lambdas.iter().fold(0.0f64, |m, l| m.max(l.abs()));
                    let data = match kind {
                        FluxKind::Upwind => {
                            let (mut g_plus, mut g_minus) = pos_neg_split(&g)?;
                            if zero_kernel {
                                // the kernel row/column is exactly zero in G;
                                // keep it exactly zero in the split parts too
                                for m in [&mut g_plus, &mut g_minus] {
                                    for i in 0..n_comp {
                                        m.set(0, i, 0.0);
                                        m.set(i, 0, 0.0);
                                    }
                                }
                            }
                            EdgeFlux::Upwind { g_plus, g_minus }
                        }
                        FluxKind::BlockRusanov => EdgeFlux::Rusanov { g, s: rho },
                    };
                    flux_data.push(data);
                    speeds_by_data.push(rho);
                    let i = flux_data.len() - 1;
                    cache.insert(key, i);
                    i
                }
            };
            flux.push(idx);
        }
        let speeds = flux.iter().map(|&i| speeds_by_data[i]).collect();
        Ok(Self {
            mesh,
            closure,
            eps: coeffs.eps,
            n_comp,
            zero_kernel,
            flux,
            flux_data,
            speeds,
            damping: None,
        })
    }

    /// Install per-edge damping factors (semi-implicit time stepping).
    pub fn set_damping(&mut self, damping: Vec<f64>) {
        assert_eq!(damping.len(), self.mesh.edges.len());
        self.damping = Some(damping);
    }

    /// Neighbor state of an edge seen from its owner cell.
    fn neighbor_state(&self, v: &Field, ei: usize, buf: &mut Vec<f64>) {
        buf.clear();
        match self.closure.edge_neighbors[ei] {
            EdgeNeighbor::Interior(k) | EdgeNeighbor::Periodic(k) => {
                buf.extend_from_slice(v.cell(k));
            }
            EdgeNeighbor::Vacuum => buf.resize(self.n_comp, 0.0),
            EdgeNeighbor::ReflectX => {
                buf.extend_from_slice(v.cell(self.mesh.edges[ei].j));
                buf[1] = -buf[1];
            }
            EdgeNeighbor::ReflectY => {
                buf.extend_from_slice(v.cell(self.mesh.edges[ei].j));
                buf[2] = -buf[2];
            }
        }
    }

    /// Per-edge flux vectors (from the owner's side), length `n_comp` each.
    fn edge_fluxes(&self, v: &Field) -> Vec<f64> {
        let n_comp = self.n_comp;
        let n_edges = self.mesh.edges.len();
        let flat = par::map_indexed(n_edges, |ei| {
            let mut vk = Vec::with_capacity(n_comp);
            self.neighbor_state(v, ei, &mut vk);
            let vj = v.cell(self.mesh.edges[ei].j);
            let mut f = vec![0.0; n_comp];
            match &self.flux_data[self.flux[ei]] {
                EdgeFlux::Upwind { g_plus, g_minus } => {
                    for i in 0..n_comp {
                        let mut s = 0.0;
                        for c in 0..n_comp {
                            s += g_plus.get(i, c) * vj[c] + g_minus.get(i, c) * vk[c];
                        }
                        f[i] = s;
                    }
                }
                EdgeFlux::Rusanov { g, s } => {
                    for i in 0..n_comp {
                        let mut acc = 0.0;
                        for c in 0..n_comp {
                            acc += g.get(i, c) * 0.5 * (vj[c] + vk[c]);
                        }
                        if i != 0 || !self.zero_kernel {
                            acc += 0.5 * s * (vj[i] - vk[i]);
                        }
                        f[i] = acc;
                    }
                }
            }
            if let Some(d) = &self.damping {
                for x in &mut f {
                    *x *= d[ei];
                }
            }
            f
        });
        flat.into_iter().flatten().collect()
    }

    /// Add `dV/dt` of the remainder block into `out`.
    pub fn apply_into(&self, v: &Field, out: &mut Field) {
        let fluxes = self.edge_fluxes(v);
        let n_comp = self.n_comp;
        let mesh = self.mesh;
        let closure = self.closure;
        let inv_eps = 1.0 / self.eps;
        par::for_each_chunk_mut(&mut out.data, n_comp, |j, out_j| {
            let inv_vol = inv_eps / mesh.cell_area[j];
            for &ei in &closure.cell_edges[j] {
                let e = &mesh.edges[ei];
                let f = &fluxes[ei * n_comp..(ei + 1) * n_comp];
                let sign = if e.j == j { -1.0 } else { 1.0 };
                for i in 0..n_comp {
                    out_j[i] += sign * e.length * inv_vol * f[i];
                }
            }
        });
    }

    /// Sparse triplets of the operator, scaled by `scale`.
    pub fn triplets(&self, scale: f64, out: &mut Vec<(usize, usize, f64)>) {
        let n_comp = self.n_comp;
        for (ei, e) in self.mesh.edges.iter().enumerate() {
            let damp = self.damping.as_ref().map_or(1.0, |d| d[ei]);
            let w = damp * e.length / self.eps;
            // flux = A vj + B vk (with the neighbor possibly ghost-derived)
            let (a_mat, b_mat) = match &self.flux_data[self.flux[ei]] {
                EdgeFlux::Upwind { g_plus, g_minus } => (g_plus.clone(), g_minus.clone()),
                EdgeFlux::Rusanov { g, s } => {
                    let mut a = g.scale(0.5);
                    let mut b = g.scale(0.5);
                    let start = if self.zero_kernel { 1 } else { 0 };
                    for i in start..n_comp {
                        a.add_to(i, i, 0.5 * s);
                        b.add_to(i, i, -0.5 * s);
                    }
                    (a, b)
                }
            };
            let j = e.j;
            let mut push_block = |row_cell: usize, sign: f64, m: &DenseMatrix, col_cell: usize, col_signs: Option<[f64; 2]>| {
                for i in 0..n_comp {
                    for c in 0..n_comp {
                        let mut v = m.get(i, c);
                        if v == 0.0 {
                            continue;
                        }
                        if let Some(s) = col_signs {
                            if c == 1 {
                                v *= s[0];
                            } else if c == 2 {
                                v *= s[1];
                            }
                        }
                        out.push((
                            row_cell * n_comp + i,
                            col_cell * n_comp + c,
                            scale * sign * w / self.mesh.cell_area[row_cell] * v,
                        ));
                    }
                }
            };
            match self.closure.edge_neighbors[ei] {
                EdgeNeighbor::Interior(k) | EdgeNeighbor::Periodic(k) => {
                    push_block(j, -1.0, &a_mat, j, None);
                    push_block(j, -1.0, &b_mat, k, None);
                    if let EdgeNeighbor::Interior(k) = self.closure.edge_neighbors[ei] {
                        push_block(k, 1.0, &a_mat, j, None);
                        push_block(k, 1.0, &b_mat, k, None);
                    } else {
                        // the wrapped partner edge carries the mirror flux
                        let _ = k;
                    }
                }
                EdgeNeighbor::Vacuum => {
                    push_block(j, -1.0, &a_mat, j, None);
                }
                EdgeNeighbor::ReflectX => {
                    push_block(j, -1.0, &a_mat, j, None);
                    push_block(j, -1.0, &b_mat, j, Some([-1.0, 1.0]));
                }
                EdgeNeighbor::ReflectY => {
                    push_block(j, -1.0, &a_mat, j, None);
                    push_block(j, -1.0, &b_mat, j, Some([1.0, -1.0]));
                }
            }
        }
    }
}

/// Per-edge flux damping factors `2 S eps / (2 S eps + c0 sigma_e d_e)` for
/// the semi-implicit update; `c0 = lambda / a^2` calibrates against the
/// one-dimensional relaxation scheme. Edges with vanishing denominator keep
/// factor one.
pub fn damping_factors(
    mesh: &Mesh,
    closure: &Closure,
    speeds: &[f64],
    coeffs: &Coefficients,
    c0: f64,
) -> Vec<f64> {
    mesh.edges
        .iter()
        .enumerate()
        .map(|(ei, e)| {
            let sigma_e = match closure.edge_neighbors[ei] {
                EdgeNeighbor::Interior(k) | EdgeNeighbor::Periodic(k) => {
                    0.5 * (coeffs.sigma[e.j] + coeffs.sigma[k])
                }
                _ => coeffs.sigma[e.j],
            };
            let num = 2.0 * speeds[ei] * coeffs.eps;
            let den = num + c0 * sigma_e * closure.edge_d[ei];
            if den > 0.0 {
                num / den
            } else {
                1.0
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Local sources

/// Cell-local diagonal sources: the `D''` relaxation, kernel absorption and
/// the fixed kernel source.
pub struct CellSource {
    /// Diagonal of `D''` (or `D'` where the heat block is not discretized
    /// by the nodal scheme).
    pub diag: Vec<f64>,
    pub eps: f64,
}

impl CellSource {
    pub fn new(diag: Vec<f64>, eps: f64) -> Self {
        Self { diag, eps }
    }

    /// Add `-(sigma_j/eps^2) diag_i V_i - sigma_a_j V_1 delta_{i1}` into
    /// `out`.
    pub fn apply_into(&self, coeffs: &Coefficients, v: &Field, out: &mut Field) {
        let n_comp = v.n_comp;
        let inv_eps2 = 1.0 / (self.eps * self.eps);
        let diag = &self.diag;
        par::for_each_chunk_mut(&mut out.data, n_comp, |j, out_j| {
            let vj = v.cell(j);
            let s = coeffs.sigma[j] * inv_eps2;
            for i in 0..n_comp {
                out_j[i] -= s * diag[i] * vj[i];
            }
            out_j[0] -= coeffs.sigma_a[j] * vj[0];
        });
    }

    /// Constant affine part (the fixed kernel source `Q`).
    pub fn affine(&self, coeffs: &Coefficients, n_comp: usize) -> Field {
        let mut f = Field::zeros(coeffs.sigma.len(), n_comp);
        for j in 0..coeffs.sigma.len() {
            f.cell_mut(j)[0] = coeffs.q_src[j];
        }
        f
    }

    pub fn triplets(
        &self,
        coeffs: &Coefficients,
        n_comp: usize,
        scale: f64,
        out: &mut Vec<(usize, usize, f64)>,
    ) {
        let inv_eps2 = 1.0 / (self.eps * self.eps);
        for j in 0..coeffs.sigma.len() {
            for i in 0..n_comp {
                let mut v = -coeffs.sigma[j] * inv_eps2 * self.diag[i];
                if i == 0 {
                    v -= coeffs.sigma_a[j];
                }
                if v != 0.0 {
                    out.push((j * n_comp + i, j * n_comp + i, scale * v));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Composition

/// Full spatial operator `L`: nodal AP block plus hyperbolic remainder plus
/// local sources, with matrix-free application and sparse assembly that
/// agree to rounding.
pub struct ComposedOperator<'a> {
    pub jlb: Option<JlbOperator<'a>>,
    pub hyp: Option<HyperbolicOperator<'a>>,
    pub source: CellSource,
    pub coeffs: &'a Coefficients,
    pub n_comp: usize,
}

impl<'a> ComposedOperator<'a> {
    /// `dV/dt = L V` (without the affine source).
    pub fn apply(&self, v: &Field) -> Field {
        let mut out = Field::zeros(v.n_cells(), v.n_comp);
        if let Some(jlb) = &self.jlb {
            jlb.apply_into(v, &mut out);
        }
        if let Some(h) = &self.hyp {
            h.apply_into(v, &mut out);
        }
        self.source.apply_into(self.coeffs, v, &mut out);
        out
    }

    /// Constant affine part of the right-hand side.
    pub fn affine(&self) -> Field {
        self.source.affine(self.coeffs, self.n_comp)
    }

    /// Triplets of `scale * L`.
    pub fn triplets(&self, scale: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        if let Some(jlb) = &self.jlb {
            jlb.triplets(self.n_comp, scale, &mut out);
        }
        if let Some(h) = &self.hyp {
            h.triplets(scale, &mut out);
        }
        self.source.triplets(self.coeffs, self.n_comp, scale, &mut out);
        out
    }
}
