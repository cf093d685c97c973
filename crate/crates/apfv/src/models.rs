//! Model builders: hyperbolic heat (P_1), spherical-harmonic P_N systems,
//! and discrete-ordinates S_N systems on the unit circle.
//!
//! The 2-D P_N moment system is assembled in its raw (non-symmetric) form
//! from the square-root recurrence coefficients and then symmetrized by the
//! diagonal rescaling that multiplies every order `m >= 1` unknown by
//! `-sqrt(2)`; the resulting symmetry is asserted, so an assembly bug cannot
//! slip through silently.

use thiserror::Error;

use crate::numerics::DenseMatrix;
use crate::system::{Field, FriedrichsSystem, SpectralData};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad coefficient: {0}")]
    BadCoefficient(String),
    #[error("bad moment index (l={l}, m={m})")]
    BadIndex { l: i64, m: i64 },
    #[error("bad direction count {0}: need a positive multiple of 4")]
    BadCount(usize),
    #[error("symmetrized moment system failed the symmetry check (defect {0:.3e})")]
    SymmetryFailure(f64),
    #[error("unknown model string `{0}`")]
    UnknownModel(String),
}

/// Degree/order index of a 2-D moment unknown; the reduction to the
/// half-space keeps `0 <= m <= l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PnIndex {
    pub l: usize,
    pub m: usize,
}

/// Enumeration order of the moment unknowns: m-major blocks
/// `(0,0..N), (1,1..N), .., (N,N)`.
pub fn pn_indices(n: usize) -> Vec<PnIndex> {
    let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for m in 0..=n {
        for l in m..=n {
            out.push(PnIndex { l, m });
        }
    }
    out
}

fn pn_offset(n: usize, l: usize, m: usize) -> usize {
    // start of block m plus position of l inside it
    m * (n + 1) - (m * m - m) / 2 + (l - m)
}

/// The six square-root recurrence coefficients of degree `l`, order `m`.
pub fn pn_coefficients(l: i64, m: i64) -> Result<(f64, f64, f64, f64, f64, f64), ModelError> {
    if m < 0 || l < m {
        return Err(ModelError::BadIndex { l, m });
    }
    let (l, m) = (l as f64, m as f64);
    let a = (((l - m + 1.0) * (l + m + 1.0)) / ((2.0 * l + 3.0) * (2.0 * l + 1.0))).sqrt();
    let b = (((l - m) * (l + m)) / ((2.0 * l + 1.0) * (2.0 * l - 1.0))).sqrt();
    let c = (((l + m + 1.0) * (l + m + 2.0)) / ((2.0 * l + 3.0) * (2.0 * l + 1.0))).sqrt();
    let d = (((l - m) * (l - m - 1.0)) / ((2.0 * l + 1.0) * (2.0 * l - 1.0))).sqrt();
    let e = (((l - m + 1.0) * (l - m + 2.0)) / ((2.0 * l + 3.0) * (2.0 * l + 1.0))).sqrt();
    let f = (((l + m) * (l + m - 1.0)) / ((2.0 * l + 1.0) * (2.0 * l - 1.0))).sqrt();
    Ok((a, b, c, d, e, f))
}

/// 3x3 system in the unknowns `(p, u_x, u_y)` whose kernel moment obeys a
/// diffusion equation with coefficient `a^2 / (lambda sigma)`.
pub fn heat_p1_system(a: f64, lambda: f64) -> Result<FriedrichsSystem, ModelError> {
    if a <= 0.0 || lambda <= 0.0 {
        return Err(ModelError::BadCoefficient(format!(
            "wave coefficient {a} and relaxation rate {lambda} must be positive"
        )));
    }
    let a1 = DenseMatrix::from_rows(&[&[0.0, a, 0.0], &[a, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
    let a2 = DenseMatrix::from_rows(&[&[0.0, 0.0, a], &[0.0, 0.0, 0.0], &[a, 0.0, 0.0]]);
    let r = DenseMatrix::diag(&[0.0, lambda, lambda]);
    Ok(FriedrichsSystem::new(a1, a2, r, "heat-p1"))
}

/// Symmetrized 2-D moment system of odd truncation degree `N`; dimension
/// `(N+1)(N+2)/2`.
pub fn pn_system(n: usize) -> Result<FriedrichsSystem, ModelError> {
    if n == 0 || n % 2 == 0 {
        return Err(ModelError::BadCoefficient(format!(
            "truncation degree must be odd and positive, got {n}"
        )));
    }
    let dim = (n + 1) * (n + 2) / 2;
    let idx = |l: usize, m: usize| pn_offset(n, l, m);
    let sqrt2_inv = std::f64::consts::FRAC_1_SQRT_2;
    let mut a1 = DenseMatrix::zeros(dim, dim);
    let mut a2 = DenseMatrix::zeros(dim, dim);

    for p in pn_indices(n) {
        let (l, m) = (p.l, p.m);
        let row = idx(l, m);
        // same-order coupling (tridiagonal inside each m block); the
        // identity A_{l-1}^m = B_l^m makes it symmetric as-is
        if l + 1 <= n {
            let (a_lm, ..) = pn_coefficients(l as i64, m as i64)?;
            a1.set(row, idx(l + 1, m), a_lm);
            a1.set(idx(l + 1, m), row, a_lm);
        }
        // order-changing couplings; the -sqrt(2) rescaling of the m >= 1
        // unknowns turns the raw one-sided factors into a symmetric pattern
        if m == 0 {
            if l >= 2 {
                let (.., e_lm, _) = pn_coefficients(l as i64 - 1, 1)?;
                a2.set(row, idx(l - 1, 1), -sqrt2_inv * e_lm);
            }
            if l + 1 <= n {
                let (.., f_lm) = pn_coefficients(l as i64 + 1, 1)?;
                a2.set(row, idx(l + 1, 1), sqrt2_inv * f_lm);
            }
        } else {
            // couplings to order m - 1
            let (c_scale, d_scale) = if m == 1 {
                (sqrt2_inv, -sqrt2_inv)
            } else {
                (-0.5, 0.5)
            };
            if l >= 1 && m - 1 <= l - 1 {
                let (_, _, c_lm, ..) = pn_coefficients(l as i64 - 1, m as i64 - 1)?;
                a2.set(row, idx(l - 1, m - 1), c_scale * c_lm);
            }
            if l + 1 <= n {
                let (_, _, _, d_lm, ..) = pn_coefficients(l as i64 + 1, m as i64 - 1)?;
                a2.set(row, idx(l + 1, m - 1), d_scale * d_lm);
            }
            // couplings to order m + 1
            if l >= 1 && m + 1 <= l - 1 {
                let (.., e_lm, _) = pn_coefficients(l as i64 - 1, m as i64 + 1)?;
                a2.set(row, idx(l - 1, m + 1), 0.5 * e_lm);
            }
            if l + 1 <= n && m + 1 <= l + 1 {
                let (.., f_lm) = pn_coefficients(l as i64 + 1, m as i64 + 1)?;
                a2.set(row, idx(l + 1, m + 1), -0.5 * f_lm);
            }
        }
    }

    let defect = a1.symmetry_defect().max(a2.symmetry_defect());
    if defect > 1e-12 {
        return Err(ModelError::SymmetryFailure(defect));
    }
    let mut r_diag = vec![1.0; dim];
    r_diag[idx(0, 0)] = 0.0;
    let r = DenseMatrix::diag(&r_diag);
    Ok(FriedrichsSystem::new(a1, a2, r, format!("p{n}")))
}

/// Unit-circle quadrature set with directions, weights and second-moment
/// constant.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub directions: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub d_c: f64,
}

/// Equally spaced directions on the unit circle starting on the x-axis
/// (`theta_i = 2 pi (i-1)/n`), equal weights `1/n`; for `n = 4` this yields
/// the axis-aligned set `(±1,0), (0,±1)`.
pub fn sn_quadrature(n: usize) -> Result<Quadrature, ModelError> {
    if n < 4 || n % 4 != 0 {
        return Err(ModelError::BadCount(n));
    }
    let mut directions = Vec::with_capacity(n);
    let w = 1.0 / n as f64;
    // snap the cardinal directions to exact axis vectors so the n = 4 set
    // (and the axis members of larger sets) is reproduced without rounding
    let snap = |x: f64| {
        if x.abs() < 1e-15 {
            0.0
        } else if (x.abs() - 1.0).abs() < 1e-15 {
            x.signum()
        } else {
            x
        }
    };
    for i in 0..n {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        directions.push([snap(theta.cos()), snap(theta.sin())]);
    }
    let mut d_c = 0.0;
    for d in &directions {
        d_c += w * d[0] * d[0];
    }
    Ok(Quadrature { directions, weights: vec![w; n], d_c })
}

/// Discrete-ordinates system in the weighted unknowns `U_i = sqrt(w_i) f_i`:
/// diagonal flux matrices and the rank-one projector
/// `R = I - sqrt(w) (x) sqrt(w)`.
pub fn sn_system(q: &Quadrature) -> Result<FriedrichsSystem, ModelError> {
    let n = q.directions.len();
    if n == 0 || q.weights.len() != n {
        return Err(ModelError::BadCount(n));
    }
    let a1 = DenseMatrix::diag(&q.directions.iter().map(|d| d[0]).collect::<Vec<_>>());
    let a2 = DenseMatrix::diag(&q.directions.iter().map(|d| d[1]).collect::<Vec<_>>());
    let sqrt_w: Vec<f64> = q.weights.iter().map(|w| w.sqrt()).collect();
    let mut r = DenseMatrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            r.add_to(i, j, -sqrt_w[i] * sqrt_w[j]);
        }
    }
    Ok(FriedrichsSystem::new(a1, a2, r, format!("s{}", n / 2)))
}

/// Kernel moment `rho_j = (U_j, E_1)` of a field in original variables.
///
/// For the discrete-ordinates systems `E_1 = sqrt(w)`, so this equals
/// `sum_i w_i f_i` (the angular mean, not the `1/n`-weighted sum some
/// outputs use; the harness documents the normalization).
pub fn first_moment(u: &Field, spec: &SpectralData) -> Vec<f64> {
    let e1 = spec.q.column(0);
    (0..u.n_cells())
        .map(|j| u.cell(j).iter().zip(&e1).map(|(x, y)| x * y).sum())
        .collect()
}

/// Parse a CLI model string: `p1`, `pn:<N>`, `sn:<n>`, `s2`.
pub fn parse_model(s: &str) -> Result<FriedrichsSystem, ModelError> {
    if s == "p1" {
        return pn_system(1);
    }
    if s == "s2" {
        return sn_system(&sn_quadrature(4)?);
    }
    if let Some(n) = s.strip_prefix("pn:") {
        let n: usize = n.parse().map_err(|_| ModelError::UnknownModel(s.into()))?;
        return pn_system(n);
    }
    if let Some(n) = s.strip_prefix("sn:") {
        let n: usize = n.parse().map_err(|_| ModelError::UnknownModel(s.into()))?;
        return sn_system(&sn_quadrature(n)?);
    }
    Err(ModelError::UnknownModel(s.into()))
}
