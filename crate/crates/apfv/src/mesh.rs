//! Unstructured polygonal 2-D meshes and their nodal/edge geometry.
//!
//! Five generators are provided (Cartesian, randomly perturbed quads, a
//! smooth sine deformation, a layered Kershaw-type shear, and regular /
//! random triangulations), all logically Cartesian so periodic boundary
//! conditions can be matched geometrically. The corner quantities
//! `l_jr`, `n_jr` follow the half-diagonal convention: `l_jr n_jr` is the
//! rotated half-vector from `x_{r-1}` to `x_{r+1}`.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::numerics::Rng;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("bad resolution: {0}")]
    BadResolution(String),
    #[error("tangled mesh: cell {cell} has non-positive area {area:.3e}")]
    Tangled { cell: usize, area: f64 },
    #[error("node {node} is not a vertex of cell {cell}")]
    NotAVertex { cell: usize, node: usize },
    #[error("degenerate corner at cell {cell}, node {node}: neighbors coincide")]
    DegenerateCorner { cell: usize, node: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Axis-aligned rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn unit() -> Self {
        Self { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 }
    }

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        assert!(x1 > x0 && y1 > y0, "empty domain");
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Interior or boundary edge; `k == None` marks a boundary edge. The normal
/// points outward from cell `j`.
#[derive(Debug, Clone)]
pub struct Edge {
    pub j: usize,
    pub k: Option<usize>,
    pub nodes: (usize, usize),
    pub length: f64,
    pub normal: [f64; 2],
    /// Center-to-center distance; for boundary edges, twice the distance
    /// from the cell center to the edge midpoint (the ghost-cell distance).
    pub d_jk: f64,
    pub midpoint: [f64; 2],
}

/// Corner data of one cell vertex: `l_jr`, `n_jr`.
#[derive(Debug, Clone, Copy)]
pub struct Corner {
    pub node: usize,
    pub l: f64,
    pub n: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    /// CCW vertex indices per cell.
    pub cells: Vec<Vec<usize>>,
    pub cell_area: Vec<f64>,
    /// Arithmetic mean of the vertices.
    pub cell_center: Vec<[f64; 2]>,
    /// Per cell, one corner record per vertex (same order as `cells`).
    pub corners: Vec<Vec<Corner>>,
    pub edges: Vec<Edge>,
    /// Incident cells per node.
    pub node_cells: Vec<Vec<usize>>,
    pub domain: Rect,
    /// `true` for nodes lying on the domain boundary.
    pub boundary_node: Vec<bool>,
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

impl Mesh {
    /// Assemble the derived geometry from raw nodes and CCW cells.
    pub fn from_cells(
        nodes: Vec<[f64; 2]>,
        cells: Vec<Vec<usize>>,
        domain: Rect,
    ) -> Result<Self, MeshError> {
        let n_cells = cells.len();
        let mut cell_area = Vec::with_capacity(n_cells);
        let mut cell_center = Vec::with_capacity(n_cells);
        for (j, cell) in cells.iter().enumerate() {
            let mut area = 0.0;
            let mut cx = 0.0;
            let mut cy = 0.0;
            let m = cell.len();
            for i in 0..m {
                let a = nodes[cell[i]];
                let b = nodes[cell[(i + 1) % m]];
                area += a[0] * b[1] - b[0] * a[1];
                cx += a[0];
                cy += a[1];
            }
            area *= 0.5;
            if area <= 0.0 {
                return Err(MeshError::Tangled { cell: j, area });
            }
            cell_area.push(area);
            cell_center.push([cx / m as f64, cy / m as f64]);
        }

        let mut corners = Vec::with_capacity(n_cells);
        for (j, cell) in cells.iter().enumerate() {
            let m = cell.len();
            let mut cc = Vec::with_capacity(m);
            for i in 0..m {
                let prev = nodes[cell[(i + m - 1) % m]];
                let next = nodes[cell[(i + 1) % m]];
                let ln = [0.5 * (next[1] - prev[1]), 0.5 * (prev[0] - next[0])];
                let l = norm(ln);
                if l == 0.0 {
                    return Err(MeshError::DegenerateCorner { cell: j, node: cell[i] });
                }
                cc.push(Corner { node: cell[i], l, n: [ln[0] / l, ln[1] / l] });
            }
            corners.push(cc);
        }

        // pair half-edges on their sorted node pair
        let mut half: std::collections::HashMap<(usize, usize), (usize, usize)> =
            std::collections::HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for (j, cell) in cells.iter().enumerate() {
            let m = cell.len();
            for i in 0..m {
                let a = cell[i];
                let b = cell[(i + 1) % m];
                let key = (a.min(b), a.max(b));
                match half.remove(&key) {
                    None => {
                        half.insert(key, (j, edges.len()));
                        let pa = nodes[a];
                        let pb = nodes[b];
                        let t = sub(pb, pa);
                        let length = norm(t);
                        // CCW orientation: outward normal is the tangent rotated -90°
                        let normal = [t[1] / length, -t[0] / length];
                        let midpoint = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                        let d_jk =
                            2.0 * norm(sub(midpoint, cell_center[j]));
                        edges.push(Edge { j, k: None, nodes: (a, b), length, normal, d_jk, midpoint });
                    }
                    Some((_, edge_idx)) => {
                        let e = &mut edges[edge_idx];
                        e.k = Some(j);
                        e.d_jk = norm(sub(cell_center[e.j], cell_center[j]));
                    }
                }
            }
        }

        let mut node_cells = vec![Vec::new(); nodes.len()];
        for (j, cell) in cells.iter().enumerate() {
            for &r in cell {
                node_cells[r].push(j);
            }
        }

        let mut boundary_node = vec![false; nodes.len()];
        for e in &edges {
            if e.k.is_none() {
                boundary_node[e.nodes.0] = true;
                boundary_node[e.nodes.1] = true;
            }
        }

        Ok(Self {
            nodes,
            cells,
            cell_area,
            cell_center,
            corners,
            edges,
            node_cells,
            domain,
            boundary_node,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Smallest cell length scale `min_j sqrt(|Ω_j|)`.
    pub fn h_min(&self) -> f64 {
        self.cell_area.iter().fold(f64::INFINITY, |m, a| m.min(a.sqrt()))
    }

    /// Corner quantities `(l_jr, n_jr)` of node `r` inside cell `j`.
    pub fn corner_geometry(&self, cell: usize, node: usize) -> Result<(f64, [f64; 2]), MeshError> {
        let pos = self.cells[cell]
            .iter()
            .position(|&r| r == node)
            .ok_or(MeshError::NotAVertex { cell, node })?;
        let c = self.corners[cell][pos];
        Ok((c.l, c.n))
    }

    /// Plain-text export: `nodes N cells M`, node lines `x y`, cell lines
    /// `k i1 .. ik`.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "nodes {} cells {}", self.nodes.len(), self.cells.len()).unwrap();
        for p in &self.nodes {
            writeln!(out, "{:.17e} {:.17e}", p[0], p[1]).unwrap();
        }
        for cell in &self.cells {
            write!(out, "{}", cell.len()).unwrap();
            for &r in cell {
                write!(out, " {}", r).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn export_file(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.export_text())?;
        Ok(())
    }

    pub fn import_text(text: &str) -> Result<Self, MeshError> {
        let mut lines = text.lines().enumerate();
        let (line_no, header) = lines
            .next()
            .ok_or(MeshError::Parse { line: 1, msg: "empty file".into() })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "nodes" || parts[2] != "cells" {
            return Err(MeshError::Parse {
                line: line_no + 1,
                msg: "expected header `nodes N cells M`".into(),
            });
        }
        let parse_count = |s: &str, line: usize| -> Result<usize, MeshError> {
            s.parse().map_err(|_| MeshError::Parse { line, msg: format!("bad count `{s}`") })
        };
        let n_nodes = parse_count(parts[1], line_no + 1)?;
        let n_cells = parse_count(parts[3], line_no + 1)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for _ in 0..n_nodes {
            let (ln, text) = lines
                .next()
                .ok_or(MeshError::Parse { line: 0, msg: "truncated node list".into() })?;
            let mut it = text.split_whitespace();
            let mut coord = [0.0f64; 2];
            for c in &mut coord {
                *c = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or(MeshError::Parse { line: ln + 1, msg: "bad node line".into() })?;
            }
            for d in 0..2 {
                min[d] = min[d].min(coord[d]);
                max[d] = max[d].max(coord[d]);
            }
            nodes.push(coord);
        }
        let mut cells = Vec::with_capacity(n_cells);
        for _ in 0..n_cells {
            let (ln, text) = lines
                .next()
                .ok_or(MeshError::Parse { line: 0, msg: "truncated cell list".into() })?;
            let mut it = text.split_whitespace();
            let k: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or(MeshError::Parse { line: ln + 1, msg: "bad cell line".into() })?;
            let mut cell = Vec::with_capacity(k);
            for _ in 0..k {
                let idx: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or(MeshError::Parse { line: ln + 1, msg: "bad cell line".into() })?;
                if idx >= n_nodes {
                    return Err(MeshError::Parse {
                        line: ln + 1,
                        msg: format!("node index {idx} out of range"),
                    });
                }
                cell.push(idx);
            }
            cells.push(cell);
        }
        let domain = Rect::new(min[0], min[1], max[0], max[1]);
        Self::from_cells(nodes, cells, domain)
    }

    pub fn import_file(path: &Path) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path)?;
        Self::import_text(&text)
    }
}

fn node_index(nx: usize, i: usize, j: usize) -> usize {
    j * (nx + 1) + i
}

fn quad_nodes(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> [f64; 2]) -> Vec<[f64; 2]> {
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push(f(i, j));
        }
    }
    nodes
}

fn quad_cells(nx: usize, ny: usize) -> Vec<Vec<usize>> {
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![
                node_index(nx, i, j),
                node_index(nx, i + 1, j),
                node_index(nx, i + 1, j + 1),
                node_index(nx, i, j + 1),
            ]);
        }
    }
    cells
}

fn check_resolution(nx: usize, ny: usize, min: usize) -> Result<(), MeshError> {
    if nx < min || ny < min {
        return Err(MeshError::BadResolution(format!(
            "need at least {min}x{min} cells, got {nx}x{ny}"
        )));
    }
    Ok(())
}

/// Uniform axis-aligned quadrilaterals. A single cell row/column is allowed
/// (quasi-1-D strips).
pub fn build_cartesian(nx: usize, ny: usize, domain: Rect) -> Result<Mesh, MeshError> {
    check_resolution(nx, ny, 1)?;
    let hx = domain.width() / nx as f64;
    let hy = domain.height() / ny as f64;
    let nodes = quad_nodes(nx, ny, |i, j| {
        [domain.x0 + i as f64 * hx, domain.y0 + j as f64 * hy]
    });
    Mesh::from_cells(nodes, quad_cells(nx, ny), domain)
}

/// Cartesian mesh with interior nodes displaced by a uniform random vector
/// in `[-amplitude*h, amplitude*h]^2`; boundary nodes stay put.
pub fn build_random_quad(
    nx: usize,
    ny: usize,
    amplitude: f64,
    seed: u64,
    domain: Rect,
) -> Result<Mesh, MeshError> {
    check_resolution(nx, ny, 2)?;
    if !(0.0..0.5).contains(&amplitude) {
        return Err(MeshError::BadResolution(format!(
            "perturbation amplitude {amplitude} outside [0, 0.5)"
        )));
    }
    let hx = domain.width() / nx as f64;
    let hy = domain.height() / ny as f64;
    let mut rng = Rng::new(seed);
    let nodes = quad_nodes(nx, ny, |i, j| {
        let base = [domain.x0 + i as f64 * hx, domain.y0 + j as f64 * hy];
        if i == 0 || i == nx || j == 0 || j == ny {
            base
        } else {
            [
                base[0] + rng.uniform(-amplitude * hx, amplitude * hx),
                base[1] + rng.uniform(-amplitude * hy, amplitude * hy),
            ]
        }
    });
    Mesh::from_cells(nodes, quad_cells(nx, ny), domain)
}

/// Fixed amplitude of the smooth sine deformation.
const SMOOTH_ALPHA: f64 = 0.1;

/// Smoothly deformed Cartesian mesh: both reference coordinates are shifted
/// by `alpha * sin(2*pi*xi) * sin(2*pi*eta)`, which vanishes on the boundary.
pub fn build_smooth(nx: usize, ny: usize, domain: Rect) -> Result<Mesh, MeshError> {
    check_resolution(nx, ny, 4)?;
    let nodes = quad_nodes(nx, ny, |i, j| {
        let xi = i as f64 / nx as f64;
        let eta = j as f64 / ny as f64;
        let bump = SMOOTH_ALPHA
            * (2.0 * std::f64::consts::PI * xi).sin()
            * (2.0 * std::f64::consts::PI * eta).sin();
        [
            domain.x0 + (xi + bump) * domain.width(),
            domain.y0 + (eta + bump) * domain.height(),
        ]
    });
    Mesh::from_cells(nodes, quad_cells(nx, ny), domain)
}

/// Break parameter of the Kershaw shear profiles: the slopes of the two
/// piecewise-linear column profiles are `eps` and `2 - eps`.
const KERSHAW_EPS: f64 = 0.6;

fn kershaw_right(eta: f64) -> f64 {
    if eta <= 0.5 {
        (2.0 - KERSHAW_EPS) * eta
    } else {
        1.0 + KERSHAW_EPS * (eta - 1.0)
    }
}

fn kershaw_left(eta: f64) -> f64 {
    1.0 - kershaw_right(1.0 - eta)
}

/// Layered Z-shear mesh: columns interpolate between two kinked vertical
/// profiles in four x-layers (left, left-to-right, right, right-to-left),
/// producing strongly skewed quads while keeping the boundary on the domain
/// edges.
pub fn build_kershaw(nx: usize, ny: usize, domain: Rect) -> Result<Mesh, MeshError> {
    check_resolution(nx, ny, 4)?;
    if nx % 2 != 0 {
        return Err(MeshError::BadResolution(format!("kershaw needs even nx, got {nx}")));
    }
    let q1 = nx / 4;
    let q2 = nx / 2;
    let q3 = (3 * nx) / 4;
    let blend = move |i: usize| -> f64 {
        // weight of the "right" profile in column i
        if i <= q1 {
            0.0
        } else if i <= q2 {
            (i - q1) as f64 / (q2 - q1) as f64
        } else if i <= q3 {
            1.0
        } else {
            1.0 - (i - q3) as f64 / (nx - q3) as f64
        }
    };
    let nodes = quad_nodes(nx, ny, |i, j| {
        let xi = i as f64 / nx as f64;
        let eta = j as f64 / ny as f64;
        let w = blend(i);
        let y = (1.0 - w) * kershaw_left(eta) + w * kershaw_right(eta);
        [domain.x0 + xi * domain.width(), domain.y0 + y * domain.height()]
    });
    Mesh::from_cells(nodes, quad_cells(nx, ny), domain)
}

/// Triangulations obtained by splitting each (optionally node-perturbed)
/// Cartesian quad along the alternating diagonal.
pub fn build_triangular(
    nx: usize,
    ny: usize,
    randomize: bool,
    seed: u64,
    domain: Rect,
) -> Result<Mesh, MeshError> {
    check_resolution(nx, ny, 2)?;
    let base = if randomize {
        build_random_quad(nx, ny, 0.2, seed, domain)?
    } else {
        build_cartesian(nx, ny, domain)?
    };
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = node_index(nx, i, j);
            let b = node_index(nx, i + 1, j);
            let c = node_index(nx, i + 1, j + 1);
            let d = node_index(nx, i, j + 1);
            if (i + j) % 2 == 0 {
                cells.push(vec![a, b, c]);
                cells.push(vec![a, c, d]);
            } else {
                cells.push(vec![a, b, d]);
                cells.push(vec![b, c, d]);
            }
        }
    }
    Mesh::from_cells(base.nodes, cells, domain)
}

/// The five generator kinds understood by the CLI and the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    Cartesian,
    RandomQuad,
    Smooth,
    Kershaw,
    TriangularRegular,
    TriangularRandom,
}

impl MeshKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cartesian" => Some(Self::Cartesian),
            "random" | "random_quad" => Some(Self::RandomQuad),
            "smooth" => Some(Self::Smooth),
            "kershaw" => Some(Self::Kershaw),
            "triangular" | "triangular_regular" => Some(Self::TriangularRegular),
            "triangular_random" => Some(Self::TriangularRandom),
            _ => None,
        }
    }

    pub fn build(
        self,
        nx: usize,
        ny: usize,
        seed: u64,
        domain: Rect,
    ) -> Result<Mesh, MeshError> {
        match self {
            Self::Cartesian => build_cartesian(nx, ny, domain),
            Self::RandomQuad => build_random_quad(nx, ny, 0.2, seed, domain),
            Self::Smooth => build_smooth(nx, ny, domain),
            Self::Kershaw => build_kershaw(nx, ny, domain),
            Self::TriangularRegular => build_triangular(nx, ny, false, seed, domain),
            Self::TriangularRandom => build_triangular(nx, ny, true, seed, domain),
        }
    }
}
