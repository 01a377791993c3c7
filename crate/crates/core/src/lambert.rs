//! Complex Lambert W on arbitrary branches and the pole lattice of the
//! isolated tire transport equation with trailing-edge feedback.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

const E: f64 = std::f64::consts::E;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const MAX_ITER: usize = 200;

/// `exp(z) - 1` without cancellation for small `|z|`.
pub fn expm1(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    Complex64::new(
        z.re.exp_m1() * c - 2.0 * half * half,
        z.re.exp() * s,
    )
}

fn halley(z: Complex64, mut w: Complex64) -> Complex64 {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom.norm() == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        w -= step;
        if step.norm() <= 4.0 * f64::EPSILON * (1.0 + w.norm()) {
            break;
        }
    }
    w
}

fn halley_real(x: f64, mut w: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

/// Expansion about the branch point `z = -1/e`; `sign` selects the sheet.
fn branch_point_seed(z: Complex64, sign: f64) -> Complex64 {
    let p = sign * (2.0 * (E * z + 1.0)).sqrt();
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

fn asymptotic_seed(z: Complex64, k: i32) -> Complex64 {
    let l1 = Complex64::new(z.norm().ln(), z.arg() + TWO_PI * k as f64);
    let l2 = l1.ln();
    l1 - l2 + l2 / l1
}

/// Branch `k` of the Lambert W function, `w e^w = z`.
///
/// Real arguments on `(-1/e, 0)` are taken on the upper side of the cut,
/// where branches 0 and -1 are real.
pub fn lambert_w(z: Complex64, k: i32) -> Result<Complex64> {
    if !z.is_finite() {
        return Err(Error::Frequency(format!("Lambert W of non-finite argument {z}")));
    }
    if z == Complex64::new(0.0, 0.0) {
        return if k == 0 {
            Ok(z)
        } else {
            Err(Error::Frequency(format!("Lambert W branch {k} is singular at 0")))
        };
    }
    let on_real_interval = z.im == 0.0 && z.re >= -1.0 / E && z.re < 0.0;
    if on_real_interval && (k == 0 || k == -1) {
        let x = z.re;
        let d = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        let sign = if k == 0 { 1.0 } else { -1.0 };
        let seed = if d < 0.5 {
            -1.0 + sign * d - d * d / 3.0 + sign * 11.0 / 72.0 * d * d * d
        } else if k == 0 {
            x
        } else {
            let l1 = (-x).ln();
            l1 - (-l1).ln()
        };
        return Ok(Complex64::new(halley_real(x, seed), 0.0));
    }
    let near_branch = (z + 1.0 / E).norm() < 0.25;
    let seed = match k {
        0 if (z + 1.0 / E).norm() < 1.0 => branch_point_seed(z, 1.0),
        0 if z.norm() <= 3.0 => (1.0 + z).ln(),
        -1 if near_branch && z.im >= 0.0 => branch_point_seed(z, -1.0),
        1 if near_branch && z.im < 0.0 => branch_point_seed(z, -1.0),
        _ => asymptotic_seed(z, k),
    };
    let w = halley(z, seed);
    if !w.is_finite() {
        return Err(Error::Frequency(format!("Lambert W iteration diverged for z = {z}, k = {k}")));
    }
    Ok(w)
}

/// `(1 - e^{-sigma}) / sigma`, with its limit 1 at the origin.
pub fn phi(sigma: Complex64) -> Complex64 {
    if sigma.norm() < 0.5 {
        // Alternating series sum_{n>=0} (-sigma)^n / (n+1)!.
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for n in 1..30 {
            term *= -sigma / (n as f64 + 1.0);
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        -expm1(-sigma) / sigma
    }
}

/// `1 - gamma_bar zeta(1, s)` for the scalar transport equation with
/// transport speed `upsilon`.
pub fn characteristic_residual(s: Complex64, upsilon: f64, gamma_bar: f64) -> Complex64 {
    1.0 - gamma_bar * phi(s / upsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdePole {
    pub branch: i32,
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

impl PdePole {
    pub fn s(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Newton refinement of `sigma = gamma_bar (1 - e^{-sigma})`.
fn polish(mut sigma: Complex64, gamma_bar: f64) -> Complex64 {
    for _ in 0..MAX_ITER {
        let h = sigma + gamma_bar * expm1(-sigma);
        let dh = 1.0 - gamma_bar * (-sigma).exp();
        if dh.norm() == 0.0 {
            break;
        }
        let step = h / dh;
        sigma -= step;
        if step.norm() <= 1e-17 * (1.0 + sigma.norm()) {
            break;
        }
    }
    sigma
}

/// Poles of `u_t + upsilon u_xi = gamma u(1, t)`, `gamma / upsilon = gamma_bar`,
/// for the Lambert branches in `k_range`.
///
/// Branch 0 maps to the removable point `s = 0` and is a pole only for
/// `gamma_bar = 1`. Each pole is refined by Newton iteration on the
/// characteristic equation and checked to residual `1e-10`.
pub fn scalar_pde_poles(
    upsilon: f64,
    gamma_bar: f64,
    k_range: std::ops::RangeInclusive<i32>,
) -> Result<Vec<PdePole>> {
    if !(gamma_bar > 0.0 && gamma_bar <= 1.0) {
        return Err(Error::Frequency(format!("feedback ratio must lie in (0, 1], got {gamma_bar}")));
    }
    if !(upsilon > 0.0 && upsilon.is_finite()) {
        return Err(Error::Frequency(format!("transport speed must be positive, got {upsilon}")));
    }
    let marginal = gamma_bar == 1.0;
    let rho = gamma_bar * (-gamma_bar).exp();
    let z = Complex64::new(-rho, 0.0);
    let mut poles: Vec<PdePole> = Vec::new();
    for k in k_range {
        let sigma = if k == 0 || (k == -1 && marginal) {
            if !marginal {
                continue;
            }
            Complex64::new(0.0, 0.0)
        } else {
            polish(lambert_w(z, k)? + gamma_bar, gamma_bar)
        };
        let s = sigma * upsilon;
        let residual = characteristic_residual(s, upsilon, gamma_bar).norm();
        if residual > 1e-10 {
            return Err(Error::Frequency(format!(
                "pole on branch {k} fails the characteristic equation (residual {residual:.2e})"
            )));
        }
        let dup = poles
            .iter()
            .any(|q| (q.s() - s).norm() <= 1e-9 * (1.0 + s.norm()));
        if !dup {
            poles.push(PdePole {
                branch: k,
                re: s.re,
                im: s.im,
                residual,
            });
        }
    }
    Ok(poles)
}
