//! Second moments of the limit vector `Z = (𝓦, W, 𝓟, P)` of the normalised
//! weighted/unweighted Wiener index and path length.
//!
//! `Z` is the fixed point of `Z =d A₁Z + A₂Z′ + C` with `Z, Z′, U`
//! independent and centred, so `M = E[ZZᵀ]` solves the linear system
//! `M = E[A₁MA₁ᵀ] + E[A₂MA₂ᵀ] + E[CCᵀ]` in the 10 free entries of a
//! symmetric 4×4 matrix.

use std::f64::consts::PI;

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::quadrature::integrate;

/// Coordinate names in the order used by every matrix here.
pub const COORDINATES: [&str; 4] = ["Ww", "W", "Pw", "P"];
/// Growth exponent of the normalisation of each coordinate (`𝓦/n²`, ...).
pub const SCALING: [u32; 4] = [2, 2, 1, 1];
/// Tolerance for agreement with the closed-form constants.
pub const CONSTANT_TOLERANCE: f64 = 1e-6;

/// Upper-triangular index pairs of the free entries of a symmetric 4×4.
const PAIRS: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub a1: Matrix4<f64>,
    pub a2: Matrix4<f64>,
    pub c: Vector4<f64>,
}

pub fn eval_coefficients(u: f64) -> Result<Coefficients> {
    if !(u > 0.0 && u < 1.0) {
        return Err(out_of_range("u", u, "(0, 1)"));
    }
    Ok(coefficients(u))
}

fn coefficients(u: f64) -> Coefficients {
    let v = 1.0 - u;
    #[rustfmt::skip]
    let a1 = Matrix4::new(
        u * u * u, 0.0,   u * u * v, 0.0,
        0.0,       u * u, 0.0,       u * v,
        0.0,       0.0,   u * u,     0.0,
        0.0,       0.0,   0.0,       u,
    );
    #[rustfmt::skip]
    let a2 = Matrix4::new(
        v * v * v, u * v * v, u * v * v, u * u * v,
        0.0,       v * v,     0.0,       u * v,
        0.0,       0.0,       v * v,     u * v,
        0.0,       0.0,       0.0,       v,
    );
    let (lu, lv) = (u.ln(), v.ln());
    let c = Vector4::new(
        u * u * lu + (1.0 - u * u) * lv + u * (-14.0 * u * u + 9.0 * u + 5.0) / 4.0,
        2.0 * u * lu + 2.0 * v * lv + 6.0 * u * v,
        u * u * lu + (1.0 - u * u) * lv + u,
        2.0 * u * lu + 2.0 * v * lv + 1.0,
    );
    Coefficients { a1, a2, c }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix4<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest singular value, `√λ_max(MMᵀ)`.
pub fn spectral_norm(m: &Matrix4<f64>) -> f64 {
    (m * m.transpose()).symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Componentwise `∫₀¹ C(u) du`.
pub fn c_integrals(tol: f64) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = integrate(|u| coefficients(u).c[i], 0.0, 1.0, tol, 0.0)?.value;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    /// `E[U²] + E[(1−U)²]`.
    pub analytic: f64,
    /// `E[ρ(A₁)²] + E[ρ(A₂)²]` with `ρ` the spectral radius, by quadrature.
    pub radius_sum: f64,
    /// Largest `|ρ(A₁(u)) − u|` or `|ρ(A₂(u)) − (1−u)|` over the grid.
    pub max_radius_deviation: f64,
    /// `E[λ_max(A₁A₁ᵀ)] + E[λ_max(A₂A₂ᵀ)]`.
    pub norm_sum: f64,
    /// Largest `‖A₁(u)‖₂ − u` over the grid; positive means the spectral
    /// norm exceeds the spectral radius.
    pub max_norm_excess: f64,
    pub grid_points: usize,
}

impl ContractionReport {
    pub fn contracts(&self) -> bool {
        self.radius_sum < 1.0 && self.norm_sum < 1.0
    }
}

pub fn contraction_check() -> Result<ContractionReport> {
    let grid_points = 999;
    let mut max_radius_deviation = 0.0f64;
    let mut max_norm_excess = f64::NEG_INFINITY;
    for i in 1..=grid_points {
        let u = i as f64 / (grid_points + 1) as f64;
        let co = coefficients(u);
        max_radius_deviation = max_radius_deviation
            .max((spectral_radius(&co.a1) - u).abs())
            .max((spectral_radius(&co.a2) - (1.0 - u)).abs());
        max_norm_excess = max_norm_excess.max(spectral_norm(&co.a1) - u);
    }
    let radius_sum = integrate(
        |u| {
            let co = coefficients(u);
            spectral_radius(&co.a1).powi(2) + spectral_radius(&co.a2).powi(2)
        },
        0.0,
        1.0,
        1e-13,
        0.0,
    )?
    .value;
    let norm_sum = integrate(
        |u| {
            let co = coefficients(u);
            spectral_norm(&co.a1).powi(2) + spectral_norm(&co.a2).powi(2)
        },
        0.0,
        1.0,
        1e-9,
        0.0,
    )?
    .value;
    Ok(ContractionReport {
        analytic: 2.0 / 3.0,
        radius_sum,
        max_radius_deviation,
        norm_sum,
        max_norm_excess,
        grid_points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSystem {
    /// `E[ZZᵀ]`, coordinates ordered as in [`COORDINATES`].
    pub m: Matrix4<f64>,
    /// Linear part `L` acting on the 10 free entries.
    pub operator: SMatrix<f64, 10, 10>,
    /// Free entries of `E[CCᵀ]`.
    pub rhs: SVector<f64, 10>,
    pub quad_tol: f64,
    /// `max |M − E[A₁MA₁ᵀ + A₂MA₂ᵀ + CCᵀ]|`, recomputed with full-matrix
    /// quadrature independent of the assembled system.
    pub residual: f64,
    pub min_eigenvalue: f64,
}

fn pack(m: &Matrix4<f64>) -> SVector<f64, 10> {
    SVector::from_fn(|r, _| {
        let (i, j) = PAIRS[r];
        m[(i, j)]
    })
}

fn unpack(x: &SVector<f64, 10>) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    for (r, &(i, j)) in PAIRS.iter().enumerate() {
        m[(i, j)] = x[r];
        m[(j, i)] = x[r];
    }
    m
}

pub fn solve_second_moments(quad_tol: f64) -> Result<MomentSystem> {
    if !(1e-14..=1e-8).contains(&quad_tol) {
        return Err(out_of_range("quad_tol", quad_tol, "[1e-14, 1e-8]"));
    }
    let mut operator = SMatrix::<f64, 10, 10>::zeros();
    let mut rhs = SVector::<f64, 10>::zeros();
    for (r, &(i, j)) in PAIRS.iter().enumerate() {
        rhs[r] = integrate(
            |u| {
                let c = coefficients(u).c;
                c[i] * c[j]
            },
            0.0,
            1.0,
            quad_tol,
            0.0,
        )?
        .value;
        for (col, &(k, l)) in PAIRS.iter().enumerate() {
            // coefficient of M_kl (= M_lk) in (A M Aᵀ)_ij
            let entry = |a: &Matrix4<f64>| {
                let mut t = a[(i, k)] * a[(j, l)];
                if k != l {
                    t += a[(i, l)] * a[(j, k)];
                }
                t
            };
            operator[(r, col)] = integrate(
                |u| {
                    let co = coefficients(u);
                    entry(&co.a1) + entry(&co.a2)
                },
                0.0,
                1.0,
                quad_tol,
                0.0,
            )?
            .value;
        }
    }
    let system = SMatrix::<f64, 10, 10>::identity() - operator;
    let x = system.lu().solve(&rhs).ok_or(Error::Singular)?;
    let m = unpack(&x);
    let min_eigenvalue = m.symmetric_eigenvalues().min();
    if m.cholesky().is_none() {
        return Err(Error::InvalidInput(format!(
            "second-moment matrix is not positive definite (min eigenvalue {min_eigenvalue})"
        )));
    }
    let mut residual = 0.0f64;
    for &(i, j) in PAIRS.iter() {
        let image = integrate(
            |u| {
                let co = coefficients(u);
                let t = co.a1 * m * co.a1.transpose() + co.a2 * m * co.a2.transpose() + co.c * co.c.transpose();
                t[(i, j)]
            },
            0.0,
            1.0,
            quad_tol,
            0.0,
        )?
        .value;
        residual = residual.max((image - m[(i, j)]).abs());
    }
    Ok(MomentSystem {
        m,
        operator,
        rhs,
        quad_tol,
        residual,
        min_eigenvalue,
    })
}

impl MomentSystem {
    /// Residual of the assembled linear system itself.
    pub fn linear_residual(&self) -> f64 {
        let x = pack(&self.m);
        (x - self.operator * x - self.rhs).amax()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }
}

/// One computed moment with its closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub name: String,
    pub row: usize,
    pub col: usize,
    /// Power of `n` by which the raw (co)variance grows.
    pub growth: u32,
    pub computed: f64,
    pub target_expr: String,
    pub target: f64,
    pub abs_error: f64,
    pub pass: bool,
}

/// Closed forms of the variances and covariances of `Z`.
pub fn closed_forms() -> Vec<(usize, usize, &'static str, f64)> {
    let p2 = PI * PI;
    vec![
        (0, 0, "(2413-240pi^2)/1440", (2413.0 - 240.0 * p2) / 1440.0),
        (1, 1, "(20-2pi^2)/3", (20.0 - 2.0 * p2) / 3.0),
        (2, 2, "(65-6pi^2)/36", (65.0 - 6.0 * p2) / 36.0),
        (3, 3, "(21-2pi^2)/3", (21.0 - 2.0 * p2) / 3.0),
        (3, 2, "(21-2pi^2)/6", (21.0 - 2.0 * p2) / 6.0),
        (3, 1, "(20-2pi^2)/3", (20.0 - 2.0 * p2) / 3.0),
        (2, 1, "(10-pi^2)/3", (10.0 - p2) / 3.0),
        (3, 0, "(10-pi^2)/3", (10.0 - p2) / 3.0),
        (1, 0, "(10-pi^2)/3", (10.0 - p2) / 3.0),
        (2, 0, "(481-48pi^2)/288", (481.0 - 48.0 * p2) / 288.0),
    ]
}

pub fn covariance_report(system: &MomentSystem) -> Vec<Constant> {
    closed_forms()
        .into_iter()
        .map(|(i, j, expr, target)| {
            let computed = system.entry(i, j);
            let name = if i == j {
                format!("Var({})", COORDINATES[i])
            } else {
                format!("Cov({},{})", COORDINATES[i], COORDINATES[j])
            };
            let abs_error = (computed - target).abs();
            Constant {
                name,
                row: i,
                col: j,
                growth: SCALING[i] + SCALING[j],
                computed,
                target_expr: expr.to_string(),
                target,
                abs_error,
                pass: abs_error <= CONSTANT_TOLERANCE,
            }
        })
        .collect()
}
