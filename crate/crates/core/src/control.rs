//! Force-tracking steering control: gains and their certificate, reference
//! generation from a sine path, and the control law in state-feedback and
//! output-feedback form.

use std::fmt;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observer::Observer;
use crate::plant::eigen2;
use crate::vehicle::ModelMatrices;

/// Controller and observer gains. `l2` is always derived as `-A3 C1m^-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSet {
    pub f: Matrix2<f64>,
    pub fbar: Matrix2<f64>,
    pub l1: Matrix2<f64>,
    pub l2: Matrix2<f64>,
}

/// Flat, serialisable form of the free gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainBlock {
    #[serde(rename = "F")]
    pub f: [[f64; 2]; 2],
    #[serde(rename = "Fbar")]
    pub fbar: [[f64; 2]; 2],
    #[serde(rename = "L1")]
    pub l1: [[f64; 2]; 2],
}

fn from_rows(r: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1])
}

fn to_rows(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Pole locations used by [`GainSet::pole_placement`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolePlacement {
    pub lumped: [f64; 2],
    pub force: [f64; 2],
    pub observer: [f64; 2],
}

impl Default for PolePlacement {
    fn default() -> Self {
        Self {
            lumped: [-3.0, -4.0],
            force: [-5.0, -6.0],
            observer: [-8.0, -10.0],
        }
    }
}

/// Named gain sources.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "preset")]
pub enum GainPreset {
    /// Gains tuned for the low-speed shimmy case and reused elsewhere.
    #[default]
    Baseline,
    PolePlacement(PolePlacement),
    Custom(GainBlock),
}

impl GainPreset {
    pub fn build(&self, mm: &ModelMatrices) -> Result<GainSet> {
        match self {
            GainPreset::Baseline => GainSet::from_block(&GainBlock::baseline(), mm),
            GainPreset::PolePlacement(pp) => GainSet::pole_placement(mm, pp),
            GainPreset::Custom(b) => GainSet::from_block(b, mm),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GainPreset::Baseline => "baseline",
            GainPreset::PolePlacement(_) => "pole-placement",
            GainPreset::Custom(_) => "custom",
        }
    }
}

impl GainBlock {
    pub fn baseline() -> Self {
        Self {
            f: [[24e3, 7.08e3], [15e3, -33.1e3]],
            fbar: [[2.8e-6, 0.0], [0.0, 2.5e-6]],
            l1: [[45.0, -44.3], [-40.0, 0.0]],
        }
    }
}

/// `-A3 C1m^-1`: the injection gain that cancels the front-field error source.
pub fn decoupling_gain(mm: &ModelMatrices) -> Result<Matrix2<f64>> {
    let c1_inv = mm
        .c1
        .try_inverse()
        .ok_or_else(|| Error::Control("measurement matrix C1m is singular".into()))?;
    Ok(-mm.a3 * c1_inv)
}

impl GainSet {
    pub fn from_block(b: &GainBlock, mm: &ModelMatrices) -> Result<Self> {
        Ok(Self {
            f: from_rows(&b.f),
            fbar: from_rows(&b.fbar),
            l1: from_rows(&b.l1),
            l2: decoupling_gain(mm)?,
        })
    }

    pub fn block(&self) -> GainBlock {
        GainBlock {
            f: to_rows(&self.f),
            fbar: to_rows(&self.fbar),
            l1: to_rows(&self.l1),
        }
    }

    /// Diagonal closed-loop matrices with the requested eigenvalues.
    pub fn pole_placement(mm: &ModelMatrices, pp: &PolePlacement) -> Result<Self> {
        let inv = |m: &Matrix2<f64>, name: &str| {
            m.try_inverse()
                .ok_or_else(|| Error::Control(format!("{name} is singular")))
        };
        let d = |v: [f64; 2]| Matrix2::new(v[0], 0.0, 0.0, v[1]);
        Ok(Self {
            f: inv(&mm.a2, "A2")? * (d(pp.lumped) - mm.a1),
            fbar: inv(&mm.bbar, "Bbar")? * d(pp.force),
            l1: (d(pp.observer) - mm.a1) * inv(&mm.c1, "C1m")?,
            l2: decoupling_gain(mm)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainCheck {
    pub name: &'static str,
    pub pass: bool,
    /// Eigenvalues `(re, im)`; empty for the identity check.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Frobenius norm of `L2 + A3 C1m^-1` for the identity check.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub checks: Vec<GainCheck>,
}

impl Certificate {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// `Err` listing every violated condition with its spectrum.
    pub fn ensure(&self) -> Result<()> {
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| match c.residual {
                Some(r) => format!("{} (residual {r:.3e})", c.name),
                None => format!("{} not Hurwitz, eigenvalues {}", c.name, fmt_eigs(&c.eigenvalues)),
            })
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Control(failed.join("; ")))
        }
    }
}

fn fmt_eigs(e: &[(f64, f64)]) -> String {
    e.iter()
        .map(|(re, im)| format!("{re:.4}{im:+.4}i"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:<6} eigenvalues / residual", "condition", "status")?;
        for c in &self.checks {
            let detail = match c.residual {
                Some(r) => format!("{r:.3e}"),
                None => fmt_eigs(&c.eigenvalues),
            };
            writeln!(f, "{:<16} {:<6} {detail}", c.name, if c.pass { "pass" } else { "FAIL" })?;
        }
        Ok(())
    }
}

/// Check the Hurwitz conditions on `A1 + A2 F`, `Bbar Fbar`, `A1 + L1 C1m`
/// and the identity `L2 = -A3 C1m^-1`.
pub fn validate_gains(g: &GainSet, mm: &ModelMatrices) -> Certificate {
    let hurwitz = |name: &'static str, m: Matrix2<f64>| {
        let e = eigen2(&m);
        GainCheck {
            name,
            pass: e.iter().all(|(re, _)| *re < 0.0),
            eigenvalues: e.to_vec(),
            residual: None,
        }
    };
    let identity = match mm.c1.try_inverse() {
        Some(c1_inv) => {
            let r = (g.l2 + mm.a3 * c1_inv).norm();
            GainCheck {
                name: "L2 = -A3 C1^-1",
                pass: r <= 1e-12 * (1.0 + mm.a3.norm() * c1_inv.norm()),
                eigenvalues: vec![],
                residual: Some(r),
            }
        }
        None => GainCheck {
            name: "L2 = -A3 C1^-1",
            pass: false,
            eigenvalues: vec![],
            residual: Some(f64::INFINITY),
        },
    };
    Certificate {
        checks: vec![
            hurwitz("A1 + A2 F", mm.a1 + mm.a2 * g.f),
            hurwitz("Bbar Fbar", mm.bbar * g.fbar),
            hurwitz("A1 + L1 C1", mm.a1 + g.l1 * mm.c1),
            identity,
        ],
    }
}

/// Lumped reference and its first two derivatives, plus the pose reference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReferenceState {
    pub x_ref: Vector2<f64>,
    pub x_ref_dot: Vector2<f64>,
    pub x_ref_ddot: Vector2<f64>,
    pub y_o_ref: f64,
    pub psi_ref: f64,
}

impl ReferenceState {
    /// Constant lumped reference, no path.
    pub fn constant(x: Vector2<f64>) -> Self {
        Self {
            x_ref: x,
            ..Self::default()
        }
    }
}

/// Sinusoidal path `yO = A sin(omega xO)` with heading `omega A cos(omega xO)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinePath {
    pub amplitude: f64,
    pub omega: f64,
}

/// Outer-loop pose gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathGains {
    pub f1: f64,
    pub f2: f64,
}

impl Default for PathGains {
    fn default() -> Self {
        Self { f1: 8.0, f2: 3.0 }
    }
}

/// Lumped reference that steers the pose errors `e_y = yO - yO_ref`,
/// `e_psi = psi - psi_ref` to zero along the path, with `xO ~ vx t`.
///
/// Derivatives assume the closed outer loop `e_y' = vx e_psi - f1 e_y`,
/// `e_psi' = -f2 e_psi`, so they depend only on the current pose and time.
pub fn reference_from_path(
    y_o: f64,
    psi: f64,
    path: &SinePath,
    gains: &PathGains,
    t: f64,
    vx: f64,
) -> Result<ReferenceState> {
    let (f1, f2) = (gains.f1, gains.f2);
    if !(f1 > 0.0 && f2 > 0.0) {
        return Err(Error::Control(format!("path gains must be positive, got f1 = {f1}, f2 = {f2}")));
    }
    let a = path.amplitude;
    let big = path.omega * vx;
    let (s, c) = (big * t).sin_cos();
    // Path position and heading with three time derivatives.
    let y = [a * s, a * big * c, -a * big * big * s, -a * big.powi(3) * c];
    let h = path.omega * a;
    let p = [h * c, -h * big * s, -h * big * big * c, h * big.powi(3) * s];

    let ey = y_o - y[0];
    let epsi = psi - p[0];
    let ey_d = vx * epsi - f1 * ey;
    let epsi_d = -f2 * epsi;
    let ey_dd = vx * epsi_d - f1 * ey_d;
    let epsi_dd = -f2 * epsi_d;

    Ok(ReferenceState {
        x_ref: Vector2::new(-f1 * ey - vx * p[0] + y[1], -f2 * epsi + p[1]),
        x_ref_dot: Vector2::new(-f1 * ey_d - vx * p[1] + y[2], -f2 * epsi_d + p[2]),
        x_ref_ddot: Vector2::new(-f1 * ey_dd - vx * p[2] + y[3], -f2 * epsi_dd + p[3]),
        y_o_ref: y[0],
        psi_ref: p[0],
    })
}

/// Force reference and its derivative for lumped state `x` and forces `y`.
pub fn y_ref_pair(
    x: &Vector2<f64>,
    y: &Vector2<f64>,
    r: &ReferenceState,
    g: &GainSet,
    mm: &ModelMatrices,
) -> (Vector2<f64>, Vector2<f64>) {
    let a2_inv = mm.a2.try_inverse().expect("A2 is invertible for valid parameters");
    let y_ref = g.f * (x - r.x_ref) - a2_inv * (mm.a1 * r.x_ref - r.x_ref_dot);
    let y_ref_dot = g.f * (mm.a1 * x + mm.a2 * y - r.x_ref_dot) - a2_inv * (mm.a1 * r.x_ref_dot - r.x_ref_ddot);
    (y_ref, y_ref_dot)
}

/// `delta = Fbar (Y - Y_ref) - Bbar^-1 [Abar3 x + Abar4 u(1) - Y_ref']`.
pub fn control_input(
    x: &Vector2<f64>,
    u1: &Vector2<f64>,
    y: &Vector2<f64>,
    r: &ReferenceState,
    g: &GainSet,
    mm: &ModelMatrices,
) -> Vector2<f64> {
    let (y_ref, y_ref_dot) = y_ref_pair(x, y, r, g, mm);
    let bbar_inv = mm.bbar.try_inverse().expect("Bbar is invertible for valid parameters");
    g.fbar * (y - y_ref) - bbar_inv * (mm.a3bar * x + mm.a4bar * u1 - y_ref_dot)
}

/// Control law evaluated on the observer's estimates.
pub fn output_feedback_controller(
    o: &Observer,
    r: &ReferenceState,
    g: &GainSet,
    mm: &ModelMatrices,
) -> Vector2<f64> {
    control_input(&o.x_hat(), &o.trailing_edges(), &o.forces(), r, g, mm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{build_matrices, derive_params, equilibrium, RawParams};

    fn mm(vx: f64) -> ModelMatrices {
        build_matrices(&derive_params(&RawParams::reference(), vx).unwrap())
    }

    #[test]
    fn baseline_gains_certified_at_both_speeds() {
        for vx in [0.4, 20.0] {
            let m = mm(vx);
            let cert = validate_gains(&GainPreset::Baseline.build(&m).unwrap(), &m);
            assert!(cert.all_pass(), "vx = {vx}\n{cert}");
        }
    }

    #[test]
    fn zero_state_feedback_fails() {
        let m = mm(0.4);
        let mut g = GainPreset::Baseline.build(&m).unwrap();
        g.f = Matrix2::zeros();
        let cert = validate_gains(&g, &m);
        assert!(!cert.checks[0].pass);
        assert_eq!(cert.checks[0].eigenvalues, vec![(0.0, 0.0), (0.0, 0.0)]);
        let err = cert.ensure().unwrap_err().to_string();
        assert!(err.contains("A1 + A2 F"), "{err}");
    }

    #[test]
    fn negative_inverse_force_gain_passes() {
        let m = mm(20.0);
        let mut g = GainPreset::Baseline.build(&m).unwrap();
        g.fbar = -m.bbar.try_inverse().unwrap();
        let c = &validate_gains(&g, &m).checks[1];
        assert!(c.pass);
        for (re, im) in &c.eigenvalues {
            assert!((re + 1.0).abs() <= 1e-12 && im.abs() <= 1e-6, "{re} {im}");
        }
    }

    #[test]
    fn decoupling_identity_holds() {
        for vx in [0.4, 5.0, 20.0] {
            let m = mm(vx);
            let l2 = decoupling_gain(&m).unwrap();
            assert!((m.a3 + l2 * m.c1).amax() <= 1e-12);
        }
    }

    #[test]
    fn pole_placement_hits_targets() {
        let m = mm(20.0);
        let g = GainPreset::PolePlacement(PolePlacement::default()).build(&m).unwrap();
        let cert = validate_gains(&g, &m);
        assert!(cert.all_pass());
        let sorted = |mut v: Vec<(f64, f64)>| {
            v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            v.iter().map(|e| e.0).collect::<Vec<_>>()
        };
        let close = |a: Vec<f64>, b: [f64; 2]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9);
        assert!(close(sorted(cert.checks[0].eigenvalues.clone()), [-4.0, -3.0]));
        assert!(close(sorted(cert.checks[1].eigenvalues.clone()), [-6.0, -5.0]));
        assert!(close(sorted(cert.checks[2].eigenvalues.clone()), [-10.0, -8.0]));
    }

    #[test]
    fn zero_reference_gives_zero_force_reference() {
        let m = mm(0.4);
        let g = GainPreset::Baseline.build(&m).unwrap();
        let r = ReferenceState::default();
        let (y, yd) = y_ref_pair(&Vector2::zeros(), &Vector2::zeros(), &r, &g, &m);
        assert_eq!(y, Vector2::zeros());
        assert_eq!(yd, Vector2::zeros());
        let d = control_input(&Vector2::zeros(), &Vector2::zeros(), &Vector2::zeros(), &r, &g, &m);
        assert_eq!(d, Vector2::zeros());
    }

    #[test]
    fn constant_reference_force_matches_equilibrium() {
        let p = derive_params(&RawParams::reference(), 20.0).unwrap();
        let m = build_matrices(&p);
        let g = GainPreset::Baseline.build(&m).unwrap();
        let eq = equilibrium(&p, &Vector2::new(0.02, 0.005)).unwrap();
        let r = ReferenceState::constant(eq.state());
        let (y_ref, _) = y_ref_pair(&eq.state(), &eq.forces(), &r, &g, &m);
        assert!((y_ref - eq.forces()).amax() <= 1e-9 * eq.forces().amax());
    }

    #[test]
    fn exact_tracking_cancels_coupling_only() {
        let m = mm(20.0);
        let g = GainPreset::Baseline.build(&m).unwrap();
        let r = ReferenceState::default();
        let x = Vector2::new(0.1, 0.02);
        let u1 = Vector2::new(1e-3, -2e-3);
        // Choose Y on the reference manifold.
        let y_on = {
            let a2_inv = m.a2.try_inverse().unwrap();
            g.f * x - a2_inv * Vector2::zeros()
        };
        let (y_ref, y_ref_dot) = y_ref_pair(&x, &y_on, &r, &g, &m);
        assert!((y_on - y_ref).amax() <= 1e-9);
        let d = control_input(&x, &u1, &y_on, &r, &g, &m);
        let expected = -m.bbar.try_inverse().unwrap() * (m.a3bar * x + m.a4bar * u1 - y_ref_dot);
        assert!((d - expected).amax() <= 1e-12 * expected.amax());
    }

    #[test]
    fn path_reference_on_path_at_origin() {
        let (a, w, vx) = (25.0, 0.01, 20.0);
        let path = SinePath { amplitude: a, omega: w };
        let pg = PathGains::default();
        let r = reference_from_path(0.0, w * a, &path, &pg, 0.0, vx).unwrap();
        // -vx psi_ref(0) + yO_ref'(0) = -vx w A + A w vx = 0.
        assert!(r.x_ref[0].abs() <= 1e-12);
        assert_eq!(r.psi_ref, w * a);
        assert!(reference_from_path(0.0, 0.0, &path, &PathGains { f1: 0.0, f2: 3.0 }, 0.0, vx).is_err());
    }

    #[test]
    fn zero_amplitude_stabilises_pose() {
        let path = SinePath { amplitude: 0.0, omega: 0.05 };
        let pg = PathGains::default();
        let r = reference_from_path(0.5, 0.1, &path, &pg, 1.3, 20.0).unwrap();
        assert_eq!(r.x_ref, Vector2::new(-8.0 * 0.5, -3.0 * 0.1));
        assert_eq!(r.y_o_ref, 0.0);
    }

    #[test]
    fn reference_derivatives_match_finite_differences_along_outer_loop() {
        // Propagate the pose with the closed outer-loop error dynamics and
        // compare the analytic derivatives with central differences.
        let path = SinePath { amplitude: 2.0, omega: 0.05 };
        let pg = PathGains::default();
        let vx = 20.0;
        let (t0, ey0, ep0) = (0.7, 0.3, -0.05);
        let pose = |t: f64| {
            let dt = t - t0;
            let ep = ep0 * (-pg.f2 * dt).exp();
            // e_y' = vx e_psi - f1 e_y with e_psi = ep0 e^{-f2 t}.
            let k = vx * ep0 / (pg.f1 - pg.f2);
            let ey = (ey0 - k) * (-pg.f1 * dt).exp() + k * (-pg.f2 * dt).exp();
            let big = path.omega * vx;
            let y = path.amplitude * (big * t).sin() + ey;
            let psi = path.omega * path.amplitude * (big * t).cos() + ep;
            (y, psi)
        };
        let xr = |t: f64| {
            let (y, psi) = pose(t);
            reference_from_path(y, psi, &path, &pg, t, vx).unwrap()
        };
        let h = 1e-5;
        let fd = (xr(t0 + h).x_ref - xr(t0 - h).x_ref) / (2.0 * h);
        let fdd = (xr(t0 + h).x_ref_dot - xr(t0 - h).x_ref_dot) / (2.0 * h);
        let r = xr(t0);
        assert!((fd - r.x_ref_dot).amax() <= 1e-6 * (1.0 + r.x_ref_dot.amax()));
        assert!((fdd - r.x_ref_ddot).amax() <= 1e-6 * (1.0 + r.x_ref_ddot.amax()));
    }

    #[test]
    fn force_error_follows_closed_loop_dynamics() {
        use crate::plant::{LinearPlant, Plant, PlantState, SimConfig};
        let p = derive_params(&RawParams::reference(), 20.0).unwrap();
        let m = build_matrices(&p);
        let g = GainSet::pole_placement(&m, &PolePlacement::default()).unwrap();
        let cfg = SimConfig { dt: 1e-5, ..SimConfig::default() };
        let mut plant = LinearPlant::new(&p, &cfg).unwrap().with_state(PlantState {
            vy: 0.2,
            r: -0.1,
            ..PlantState::default()
        });
        let r = ReferenceState::constant(Vector2::new(0.05, 0.02));
        let err = |plant: &LinearPlant| {
            let x = plant.state().lumped();
            let y = plant.axle_forces();
            (y - y_ref_pair(&x, &y, &r, &g, &m).0, control_input(&x, &plant.trailing_edges(), &y, &r, &g, &m))
        };
        // Integral form over windows of 0.05 s: shift events make the
        // single-step difference quotient jumpy, the window average is not.
        let closed = m.bbar * g.fbar;
        let (e_start, _) = err(&plant);
        for _ in 0..10 {
            let (e0, _) = err(&plant);
            let mut integral = Vector2::zeros();
            for _ in 0..5000 {
                let (ea, delta) = err(&plant);
                plant.step(&delta).unwrap();
                let (eb, _) = err(&plant);
                integral += (ea + eb) * (0.5 * cfg.dt);
            }
            let (e1, _) = err(&plant);
            let residual = (e1 - e0 - closed * integral).amax();
            assert!(residual <= 1e-3 * e_start.amax(), "{residual} vs {}", e_start.amax());
        }
    }

    #[test]
    fn matched_observer_reproduces_state_feedback() {
        use crate::observer::Observer;
        use crate::plant::{LinearPlant, Plant, PlantState, SimConfig};
        let p = derive_params(&RawParams::reference(), 20.0).unwrap();
        let m = build_matrices(&p);
        let g = GainPreset::Baseline.build(&m).unwrap();
        let cfg = SimConfig::default();
        let x0 = Vector2::new(0.03, 0.01);
        let mut plant = LinearPlant::new(&p, &cfg)
            .unwrap()
            .with_state(PlantState { vy: x0[0], r: x0[1], ..PlantState::default() });
        let mut obs = Observer::new(&p, &cfg, &g).unwrap().with_state(x0);
        let r = ReferenceState::constant(Vector2::zeros());
        for _ in 0..500 {
            let x = plant.state().lumped();
            let state_fb = control_input(&x, &plant.trailing_edges(), &plant.axle_forces(), &r, &g, &m);
            let output_fb = output_feedback_controller(&obs, &r, &g, &m);
            assert!((state_fb - output_fb).amax() <= 1e-9 * (1.0 + state_fb.amax()));
            let y = plant.clean_measurement(&state_fb);
            obs.step(&y, &state_fb).unwrap();
            plant.step(&state_fb).unwrap();
        }
    }
}
