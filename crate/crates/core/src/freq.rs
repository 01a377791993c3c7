//! Frequency-domain analysis of the linear single-track model.
//!
//! Eliminating the distributed states leaves the 6x6 characteristic matrix
//! acting on `(x, Y, u(1))`:
//!
//! ```text
//!        [ sI - A1       -A2        0          ]
//! A(s) = [ -K Psi A3      I        -K Psi A4   ]
//!        [ -Sigma A3      0        I - Sigma A4 ]
//! ```
//!
//! with `K = diag(C_i / 2a_i)`, `Sigma = diag((1 - e^{-vs_i s}) / s)` and
//! `Psi = diag((vs_i s + e^{-vs_i s} - 1) / (vs_i s^2))`, `vs_i = 2a_i / vx`.
//! Right-half-plane zeros of `det A(s)` are counted with the argument
//! principle on a rectangle that provably encloses all of them.

use std::f64::consts::PI;

use nalgebra::{Matrix2, SMatrix};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lambert::{expm1, phi};
use crate::vehicle::{build_matrices, derive_params, Axle, ModelMatrices, RawParams, VehicleParams};

pub type Matrix6c = SMatrix<Complex64, 6, 6>;

/// `(z + e^{-z} - 1) / z^2`, with its limit 1/2 at the origin.
pub fn psi_kernel(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        // sum_{n>=0} (-z)^n / (n+2)!
        let mut term = Complex64::new(0.5, 0.0);
        let mut sum = term;
        for n in 1..30 {
            term *= -z / (n as f64 + 2.0);
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        (z + expm1(-z)) / (z * z)
    }
}

/// `zeta(xi, s) = (1 - e^{-vs s xi}) / (vs s)`.
pub fn zeta(xi: f64, s: Complex64, varsigma: f64) -> Complex64 {
    xi * phi(varsigma * s * xi)
}

/// Diagonals of `Sigma(1, s)` and `Psi(s)`.
pub fn sigma_psi(s: Complex64, p: &VehicleParams) -> ([Complex64; 2], [Complex64; 2]) {
    let f = |axle: Axle| {
        let vs = p.varsigma(axle);
        (vs * phi(vs * s), vs * psi_kernel(vs * s))
    };
    let (s1, p1) = f(Axle::Front);
    let (s2, p2) = f(Axle::Rear);
    ([s1, s2], [p1, p2])
}

fn cplx(m: &Matrix2<f64>) -> SMatrix<Complex64, 2, 2> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn diag(d: [Complex64; 2]) -> SMatrix<Complex64, 2, 2> {
    let z = Complex64::new(0.0, 0.0);
    SMatrix::<Complex64, 2, 2>::new(d[0], z, z, d[1])
}

/// `A(s)` for given model matrices.
pub fn char_matrix_with(s: Complex64, p: &VehicleParams, mm: &ModelMatrices) -> Matrix6c {
    let (sig, psi) = sigma_psi(s, p);
    let k = cplx(&mm.force_scale);
    let (sig, psi) = (diag(sig), diag(psi));
    let (a1, a2, a3, a4) = (cplx(&mm.a1), cplx(&mm.a2), cplx(&mm.a3), cplx(&mm.a4));
    let eye = SMatrix::<Complex64, 2, 2>::identity();
    let mut m = Matrix6c::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&(eye * s - a1));
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&(-a2));
    m.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-(k * psi * a3)));
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&eye);
    m.fixed_view_mut::<2, 2>(2, 4).copy_from(&(-(k * psi * a4)));
    m.fixed_view_mut::<2, 2>(4, 0).copy_from(&(-(sig * a3)));
    m.fixed_view_mut::<2, 2>(4, 4).copy_from(&(eye - sig * a4));
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharMatrixEval {
    pub s: Complex64,
    pub a_of_s: Matrix6c,
    pub det: Complex64,
}

pub fn char_matrix(s: Complex64, p: &VehicleParams) -> CharMatrixEval {
    let a_of_s = char_matrix_with(s, p, &build_matrices(p));
    CharMatrixEval {
        s,
        det: a_of_s.determinant(),
        a_of_s,
    }
}

/// Radius beyond which `det A(s)` has no zeros in the closed right half plane.
///
/// For `|s| >= max(4 g, 2 upsilon)` the Hardy bounds `|Sigma| <= 2/|s|`,
/// `|Psi| <= 2/|s|` make the Schur complement `sI - A1 - A2 M(s)` invertible
/// once `|s| > |A1| + 2 sqrt(|A2| |K| |A3|)`.
pub fn enclosing_radius(p: &VehicleParams, mm: &ModelMatrices) -> f64 {
    let g = mm.a4[(0, 0)].abs().max(mm.a4[(1, 1)].abs());
    let ups = p.upsilon(Axle::Front).max(p.upsilon(Axle::Rear));
    let lumped = mm.a1.norm() + 2.0 * (mm.a2.norm() * mm.force_scale.norm() * mm.a3.norm()).sqrt();
    1.5 * (4.0 * g).max(2.0 * ups).max(lumped).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootCount {
    pub count: usize,
    pub radius: f64,
    pub epsilon: f64,
    pub retries: u32,
}

pub const CONTOUR_EPSILON: f64 = 1e-9;
const MAX_RETRIES: u32 = 5;
const MAX_ARG_STEP: f64 = PI / 8.0;

enum Walk {
    Winding(f64),
    Grazed,
}

fn walk_edge<F: Fn(Complex64) -> Complex64>(
    f: &F,
    a: Complex64,
    b: Complex64,
    n: usize,
    floor: f64,
) -> Walk {
    let mut total = 0.0;
    let mut za = a;
    let mut fa = f(a);
    for i in 1..=n {
        let zb = a + (b - a) * (i as f64 / n as f64);
        let fb = f(zb);
        match refine(f, za, fa, zb, fb, floor, 0) {
            Some(d) => total += d,
            None => return Walk::Grazed,
        }
        za = zb;
        fa = fb;
    }
    Walk::Winding(total)
}

fn refine<F: Fn(Complex64) -> Complex64>(
    f: &F,
    za: Complex64,
    fa: Complex64,
    zb: Complex64,
    fb: Complex64,
    floor: f64,
    depth: u32,
) -> Option<f64> {
    if fa.norm() <= floor || fb.norm() <= floor || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    let d = (fb / fa).arg();
    if d.abs() <= MAX_ARG_STEP {
        return Some(d);
    }
    if depth >= 40 {
        return None;
    }
    let zm = 0.5 * (za + zb);
    let fm = f(zm);
    Some(refine(f, za, fa, zm, fm, floor, depth + 1)? + refine(f, zm, fm, zb, fb, floor, depth + 1)?)
}

/// Winding number of `f` around the rectangle `[-eps, radius] x [-radius, radius]`.
fn winding<F: Fn(Complex64) -> Complex64>(f: &F, eps: f64, radius: f64, h: f64, floor: f64) -> Option<f64> {
    let corners = [
        Complex64::new(-eps, -radius),
        Complex64::new(radius, -radius),
        Complex64::new(radius, radius),
        Complex64::new(-eps, radius),
    ];
    let mut total = 0.0;
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        let n = (((b - a).norm() / h).ceil() as usize).clamp(64, 200_000);
        match walk_edge(f, a, b, n, floor) {
            Walk::Winding(w) => total += w,
            Walk::Grazed => return None,
        }
    }
    Some(total / (2.0 * PI))
}

/// Number of zeros of `det A(s)` with `Re s > -eps` for the given radius.
pub fn count_rhp_roots_with(p: &VehicleParams, radius: Option<f64>) -> Result<RootCount> {
    let mm = build_matrices(p);
    let base = radius.unwrap_or_else(|| enclosing_radius(p, &mm));
    let vs_max = p.varsigma(Axle::Front).max(p.varsigma(Axle::Rear));
    // Phase of e^{-vs s} turns by at most 0.2 rad between samples.
    let h = (0.2 / vs_max).min(base / 200.0);
    let det = |s: Complex64| char_matrix_with(s, p, &mm).determinant();
    let scale = det(Complex64::new(base, 0.0)).norm().max(det(Complex64::new(1.0, 0.0)).norm());
    let floor = 1e-14 * scale;
    for retry in 0..=MAX_RETRIES {
        let eps = CONTOUR_EPSILON * (1.0 + 10.0 * retry as f64);
        let r = base * (1.0 + 0.0173 * retry as f64);
        if let Some(w) = winding(&det, eps, r, h, floor) {
            let count = w.round();
            if (w - count).abs() > 0.05 || count < 0.0 {
                return Err(Error::Frequency(format!("non-integer winding number {w:.4}")));
            }
            return Ok(RootCount {
                count: count as usize,
                radius: r,
                epsilon: eps,
                retries: retry,
            });
        }
    }
    Err(Error::Frequency(format!(
        "det A(s) vanishes on the contour after {MAX_RETRIES} perturbations (vx = {})",
        p.vx()
    )))
}

pub fn count_rhp_roots(p: &VehicleParams) -> Result<usize> {
    Ok(count_rhp_roots_with(p, None)?.count)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityChart {
    pub chi_grid: Vec<f64>,
    pub vx_grid: Vec<f64>,
    /// `rhp_count[i][j]` for `chi_grid[i]`, `vx_grid[j]`; `None` where the
    /// count failed.
    pub rhp_count: Vec<Vec<Option<usize>>>,
    pub unstable: Vec<Vec<bool>>,
    pub errors: Vec<String>,
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Count right-half-plane roots over a `(chi, vx)` grid. `chi` is realised by
/// rescaling the front cornering stiffness.
pub fn stability_chart(
    base: &RawParams,
    chi_range: (f64, f64),
    vx_range: (f64, f64),
    resolution: (usize, usize),
) -> StabilityChart {
    let chi_grid = linspace(chi_range.0, chi_range.1, resolution.0);
    let vx_grid = linspace(vx_range.0, vx_range.1, resolution.1);
    let cells: Vec<(usize, usize)> = (0..chi_grid.len())
        .flat_map(|i| (0..vx_grid.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<usize>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let p = derive_params(&(*base).with_chi(chi_grid[i]), vx_grid[j])?;
            count_rhp_roots(&p)
        })
        .collect();
    let mut rhp_count = vec![vec![None; vx_grid.len()]; chi_grid.len()];
    let mut unstable = vec![vec![false; vx_grid.len()]; chi_grid.len()];
    let mut errors = Vec::new();
    for (&(i, j), r) in cells.iter().zip(results) {
        match r {
            Ok(c) => {
                rhp_count[i][j] = Some(c);
                unstable[i][j] = c >= 1;
            }
            Err(e) => errors.push(format!("chi = {}, vx = {}: {e}", chi_grid[i], vx_grid[j])),
        }
    }
    StabilityChart {
        chi_grid,
        vx_grid,
        rhp_count,
        unstable,
        errors,
    }
}

impl StabilityChart {
    /// CSV rows `chi,vx,rhp_count` with an empty count for failed cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chi,vx,rhp_count\n");
        for (i, chi) in self.chi_grid.iter().enumerate() {
            for (j, vx) in self.vx_grid.iter().enumerate() {
                let c = self.rhp_count[i][j].map(|c| c.to_string()).unwrap_or_default();
                out.push_str(&format!("{chi},{vx},{c}\n"));
            }
        }
        out
    }
}

/// Transfer function from a uniform source to `u(xi, s)` of the scalar
/// transport equation with trailing-edge feedback ratio `gamma_bar`.
pub fn scalar_transfer_gain(xi: f64, s: Complex64, upsilon: f64, gamma_bar: f64) -> Result<Complex64> {
    let vs = 1.0 / upsilon;
    let den = 1.0 - gamma_bar * zeta(1.0, s, vs);
    if den.norm() < 1e-12 {
        return Err(Error::Frequency(format!("s = {s} is a pole of the transfer function")));
    }
    Ok(vs * zeta(xi, s, vs) / den)
}
