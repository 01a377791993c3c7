//! Single-track vehicle parameters, the constant matrices of the ODE-PDE
//! state-space form, slip kinematics and closed-form steady states.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Front or rear axle. Used to index per-axle arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axle {
    Front,
    Rear,
}

impl Axle {
    pub const BOTH: [Axle; 2] = [Axle::Front, Axle::Rear];

    pub fn index(self) -> usize {
        match self {
            Axle::Front => 0,
            Axle::Rear => 1,
        }
    }
}

/// Raw parameter set as tabulated for the linear single-track model.
///
/// Field names on disk follow the usual symbols (`m`, `Iz`, `l1`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawParams {
    pub m: f64,
    #[serde(rename = "Iz")]
    pub iz: f64,
    pub l1: f64,
    pub l2: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub a1: f64,
    pub a2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for RawParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl RawParams {
    /// Reference passenger-car values used throughout the examples and tests.
    pub fn reference() -> Self {
        Self {
            m: 1300.0,
            iz: 2000.0,
            l1: 1.0,
            l2: 1.6,
            c1: 7.0e4,
            c2: 9.0e4,
            a1: 0.055,
            a2: 0.045,
            lambda1: 0.195,
            lambda2: 0.225,
        }
    }

    /// Understeer ratio `C1 l1 / (C2 l2)`.
    pub fn chi(&self) -> f64 {
        self.c1 * self.l1 / (self.c2 * self.l2)
    }

    /// Rescale the front cornering stiffness so that `chi()` equals `chi`.
    pub fn with_chi(mut self, chi: f64) -> Self {
        self.c1 = chi * self.c2 * self.l2 / self.l1;
        self
    }
}

/// Validated physical constants of the single-track model at a fixed
/// longitudinal speed, including the derived carcass stiffnesses.
///
/// Immutable once built: a different speed means a new value
/// (see [`VehicleParams::with_speed`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VehicleParams {
    raw: RawParams,
    w: [f64; 2],
    vx: f64,
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and strictly positive",
        })
    }
}

/// Validate a raw parameter set and attach a longitudinal speed.
///
/// Carcass stiffnesses follow from `lambda_i = a_i + C_i / w_i`.
pub fn derive_params(raw: &RawParams, vx: f64) -> Result<VehicleParams> {
    positive("m", raw.m)?;
    positive("Iz", raw.iz)?;
    positive("l1", raw.l1)?;
    positive("l2", raw.l2)?;
    positive("C1", raw.c1)?;
    positive("C2", raw.c2)?;
    positive("a1", raw.a1)?;
    positive("a2", raw.a2)?;
    positive("lambda1", raw.lambda1)?;
    positive("lambda2", raw.lambda2)?;
    positive("vx", vx)?;
    if raw.lambda1 <= raw.a1 {
        return Err(Error::InvalidParameter {
            name: "lambda1",
            value: raw.lambda1,
            reason: "relaxation length must exceed the patch semilength a1",
        });
    }
    if raw.lambda2 <= raw.a2 {
        return Err(Error::InvalidParameter {
            name: "lambda2",
            value: raw.lambda2,
            reason: "relaxation length must exceed the patch semilength a2",
        });
    }
    let w = [
        raw.c1 / (raw.lambda1 - raw.a1),
        raw.c2 / (raw.lambda2 - raw.a2),
    ];
    Ok(VehicleParams { raw: *raw, w, vx })
}

impl VehicleParams {
    pub fn with_speed(&self, vx: f64) -> Result<Self> {
        derive_params(&self.raw, vx)
    }

    pub fn raw(&self) -> &RawParams {
        &self.raw
    }

    pub fn m(&self) -> f64 {
        self.raw.m
    }

    pub fn iz(&self) -> f64 {
        self.raw.iz
    }

    pub fn vx(&self) -> f64 {
        self.vx
    }

    /// Distance of the axle from the centre of gravity.
    pub fn l(&self, axle: Axle) -> f64 {
        match axle {
            Axle::Front => self.raw.l1,
            Axle::Rear => self.raw.l2,
        }
    }

    /// Axle cornering stiffness.
    pub fn c(&self, axle: Axle) -> f64 {
        match axle {
            Axle::Front => self.raw.c1,
            Axle::Rear => self.raw.c2,
        }
    }

    /// Contact-patch semilength.
    pub fn a(&self, axle: Axle) -> f64 {
        match axle {
            Axle::Front => self.raw.a1,
            Axle::Rear => self.raw.a2,
        }
    }

    pub fn lambda(&self, axle: Axle) -> f64 {
        match axle {
            Axle::Front => self.raw.lambda1,
            Axle::Rear => self.raw.lambda2,
        }
    }

    /// Carcass stiffness, derived.
    pub fn w(&self, axle: Axle) -> f64 {
        self.w[axle.index()]
    }

    /// Transport speed of bristle deformation across the normalised patch.
    pub fn upsilon(&self, axle: Axle) -> f64 {
        self.vx / (2.0 * self.a(axle))
    }

    /// Transit time `2 a / vx` of a bristle through the patch.
    pub fn varsigma(&self, axle: Axle) -> f64 {
        2.0 * self.a(axle) / self.vx
    }

    /// Trailing-edge feedback gain relative to the transport speed, in (0, 1).
    pub fn gamma_bar(&self, axle: Axle) -> f64 {
        self.c(axle) / (self.lambda(axle) * self.w(axle))
    }

    /// Factor `C / (2a)` mapping the integrated deformation to axle force.
    pub fn force_scale(&self, axle: Axle) -> f64 {
        self.c(axle) / (2.0 * self.a(axle))
    }

    pub fn chi(&self) -> f64 {
        self.raw.chi()
    }

    pub fn is_understeer(&self) -> bool {
        self.raw.c1 * self.raw.l1 < self.raw.c2 * self.raw.l2
    }

    /// Wheelbase `l1 + l2`.
    pub fn wheelbase(&self) -> f64 {
        self.raw.l1 + self.raw.l2
    }
}

/// Constant matrices of the state-space form, measurement equation and
/// force-tracking error dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMatrices {
    pub a1: Matrix2<f64>,
    pub a2: Matrix2<f64>,
    pub a3: Matrix2<f64>,
    pub a4: Matrix2<f64>,
    pub b: Matrix2<f64>,
    pub upsilon: Matrix2<f64>,
    pub c1: Matrix2<f64>,
    pub c2: Matrix2<f64>,
    pub c3: Matrix2<f64>,
    pub a3bar: Matrix2<f64>,
    pub a4bar: Matrix2<f64>,
    pub bbar: Matrix2<f64>,
    /// `diag(C_i / 2a_i)`: integrated deformation to axle force.
    pub force_scale: Matrix2<f64>,
}

pub fn build_matrices(p: &VehicleParams) -> ModelMatrices {
    let vx = p.vx();
    let (m, iz) = (p.m(), p.iz());
    let (l1, l2) = (p.l(Axle::Front), p.l(Axle::Rear));
    let (c1, c2) = (p.c(Axle::Front), p.c(Axle::Rear));
    let (a1, a2) = (p.a(Axle::Front), p.a(Axle::Rear));
    let (la1, la2) = (p.lambda(Axle::Front), p.lambda(Axle::Rear));
    let (w1, w2) = (p.w(Axle::Front), p.w(Axle::Rear));

    let g1 = vx * c1 / (2.0 * a1 * la1 * w1);
    let g2 = vx * c2 / (2.0 * a2 * la2 * w2);

    ModelMatrices {
        a1: Matrix2::new(0.0, -vx, 0.0, 0.0),
        a2: Matrix2::new(-1.0 / m, -1.0 / m, -l1 / iz, l2 / iz),
        a3: Matrix2::new(
            2.0 * a1 / la1,
            2.0 * a1 * l1 / la1,
            2.0 * a2 / la2,
            -2.0 * a2 * l2 / la2,
        ),
        a4: Matrix2::new(g1, 0.0, 0.0, g2),
        b: Matrix2::new(-2.0 * a1 * vx / la1, 0.0, 0.0, -2.0 * a2 * vx / la2),
        upsilon: Matrix2::new(vx / (2.0 * a1), 0.0, 0.0, vx / (2.0 * a2)),
        c1: Matrix2::new(0.0, 1.0, 2.0 * a1 / la1, 2.0 * a1 * l1 / la1),
        c2: Matrix2::new(0.0, 0.0, g1, 0.0),
        c3: Matrix2::new(0.0, 0.0, -2.0 * a1 * vx / la1, 0.0),
        a3bar: Matrix2::new(c1 / la1, c1 * l1 / la1, c2 / la2, -c2 * l2 / la2),
        a4bar: Matrix2::new(
            -vx * c1 / (4.0 * a1 * la1),
            0.0,
            0.0,
            -vx * c2 / (4.0 * a2 * la2),
        ),
        bbar: Matrix2::new(-vx * c1 / la1, 0.0, 0.0, -vx * c2 / la2),
        force_scale: Matrix2::new(c1 / (2.0 * a1), 0.0, 0.0, c2 / (2.0 * a2)),
    }
}

/// Slip angles of the front and rear axle for lumped state `x = (vy, r)`
/// and steering pair `delta`.
pub fn slip_angles(p: &VehicleParams, x: &Vector2<f64>, delta: &Vector2<f64>) -> Vector2<f64> {
    let vx = p.vx();
    Vector2::new(
        (x[0] + p.l(Axle::Front) * x[1]) / vx - delta[0],
        (x[0] - p.l(Axle::Rear) * x[1]) / vx - delta[1],
    )
}

/// Steady state of the linear single-track model under constant steering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub vy_star: f64,
    pub r_star: f64,
    pub y_star: [f64; 2],
    /// Slope of the stationary (linear) bristle profile per axle.
    pub u_star_slope: [f64; 2],
}

impl Equilibrium {
    pub fn state(&self) -> Vector2<f64> {
        Vector2::new(self.vy_star, self.r_star)
    }

    pub fn forces(&self) -> Vector2<f64> {
        Vector2::new(self.y_star[0], self.y_star[1])
    }

    /// Right-hand side of the rigid-body equations evaluated at the
    /// equilibrium: `[-Y1 - Y2 - m vx r, -l1 Y1 + l2 Y2]`.
    pub fn residual(&self, p: &VehicleParams) -> [f64; 2] {
        let [y1, y2] = self.y_star;
        [
            -y1 - y2 - p.m() * p.vx() * self.r_star,
            -p.l(Axle::Front) * y1 + p.l(Axle::Rear) * y2,
        ]
    }
}

/// `C1 C2 (l1+l2)^2 - m vx^2 (C1 l1 - C2 l2)`; vanishes at the critical speed.
pub fn equilibrium_denominator(p: &VehicleParams) -> f64 {
    let (c1, c2) = (p.c(Axle::Front), p.c(Axle::Rear));
    let (l1, l2) = (p.l(Axle::Front), p.l(Axle::Rear));
    let vx = p.vx();
    c1 * c2 * (l1 + l2).powi(2) - p.m() * vx * vx * (c1 * l1 - c2 * l2)
}

pub fn equilibrium(p: &VehicleParams, delta_star: &Vector2<f64>) -> Result<Equilibrium> {
    let (c1, c2) = (p.c(Axle::Front), p.c(Axle::Rear));
    let (l1, l2) = (p.l(Axle::Front), p.l(Axle::Rear));
    let (m, vx) = (p.m(), p.vx());
    let (d1, d2) = (delta_star[0], delta_star[1]);

    let den = equilibrium_denominator(p);
    let scale = c1 * c2 * (l1 + l2).powi(2);
    if den.abs() <= 1e-12 * scale {
        return Err(Error::CriticalSpeed { vx });
    }

    let vy = (vx * c1 * c2 * (l1 + l2) * (d1 * l2 + d2 * l1)
        - m * vx.powi(3) * (c1 * l1 * d1 - c2 * l2 * d2))
        / den;
    let r = vx * c1 * c2 * (l1 + l2) * (d1 - d2) / den;

    let alpha = slip_angles(p, &Vector2::new(vy, r), delta_star);
    let y_star = [c1 * alpha[0], c2 * alpha[1]];
    Ok(Equilibrium {
        vy_star: vy,
        r_star: r,
        y_star,
        u_star_slope: steady_bristle_slope(p, &alpha),
    })
}

/// Speed at which an oversteer vehicle has no equilibrium; `None` for
/// neutral or understeer vehicles.
pub fn critical_speed(p: &VehicleParams) -> Option<f64> {
    let (c1, c2) = (p.c(Axle::Front), p.c(Axle::Rear));
    let (l1, l2) = (p.l(Axle::Front), p.l(Axle::Rear));
    let margin = c1 * l1 - c2 * l2;
    if margin > 0.0 {
        Some((c1 * c2 * (l1 + l2).powi(2) / (p.m() * margin)).sqrt())
    } else {
        None
    }
}

/// Slope `k_i = 4 a_i alpha_i` of the stationary bristle profile
/// `u_i(xi) = k_i xi`, the unique slope whose force integral equals
/// `C_i alpha_i`.
pub fn steady_bristle_slope(p: &VehicleParams, alpha: &Vector2<f64>) -> [f64; 2] {
    [
        4.0 * p.a(Axle::Front) * alpha[0],
        4.0 * p.a(Axle::Rear) * alpha[1],
    ]
}
