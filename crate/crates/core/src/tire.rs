//! Distributed bristle deformation on the normalised contact patch.
//!
//! Each field stores nodal values at `xi_j = j / n` for `j = 1..=n`; the
//! leading edge `xi = 0` is the boundary node and is identically zero.
//! Two time integrators are provided:
//!
//! * [`BristleField::step_upwind`]: first-order upwind with an explicit
//!   trailing-edge feedback, valid for Courant numbers up to one.
//! * [`BristleField::advance`]: upwind sub-steps at Courant number exactly
//!   one, i.e. an exact shift along characteristics. Source and trailing
//!   feedback are frozen over the call. Any duration is accepted; the field
//!   keeps the phase of its sub-step clock across calls.

use std::io::Write;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::vehicle::{Axle, VehicleParams};

/// Default number of cells per patch.
pub const DEFAULT_CELLS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct BristleField {
    axle: Axle,
    upsilon: f64,
    values: Vec<f64>,
    /// Source collected by the bristle currently entering at the leading edge.
    entering: f64,
    /// Time elapsed since the last characteristic shift.
    phase: f64,
}

impl BristleField {
    pub fn new(axle: Axle, n_cells: usize, upsilon: f64) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::Tire(format!("need at least 2 cells, got {n_cells}")));
        }
        if !(upsilon.is_finite() && upsilon > 0.0) {
            return Err(Error::Tire(format!("transport speed must be positive, got {upsilon}")));
        }
        Ok(Self {
            axle,
            upsilon,
            values: vec![0.0; n_cells],
            entering: 0.0,
            phase: 0.0,
        })
    }

    /// Field for `axle` of `p` with the transport speed `vx / (2 a)`.
    pub fn for_axle(p: &VehicleParams, axle: Axle, n_cells: usize) -> Result<Self> {
        Self::new(axle, n_cells, p.upsilon(axle))
    }

    /// Sample `profile` at the grid nodes. The boundary value is forced to 0.
    pub fn with_profile(mut self, profile: impl Fn(f64) -> f64) -> Self {
        let n = self.values.len();
        for (j, v) in self.values.iter_mut().enumerate() {
            *v = profile((j + 1) as f64 / n as f64);
        }
        self
    }

    pub fn axle(&self) -> Axle {
        self.axle
    }

    pub fn upsilon(&self) -> f64 {
        self.upsilon
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn dxi(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    /// Weight of the upstream neighbour when mapping the bristle-following
    /// nodes back onto the fixed grid.
    fn lag(&self) -> f64 {
        self.phase / self.shift_period()
    }

    fn upstream(&self, i: usize) -> f64 {
        if i == 0 {
            self.entering
        } else {
            self.values[i - 1]
        }
    }

    /// Value at the fixed node `xi_{i+1}`.
    pub fn value(&self, i: usize) -> f64 {
        let th = self.lag();
        th * self.upstream(i) + (1.0 - th) * self.values[i]
    }

    /// Nodal values `u(xi_1) ..= u(1)` on the fixed grid.
    pub fn values(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.value(i)).collect()
    }

    /// `(xi, u)` pairs including the leading-edge boundary node.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.values.len() as f64;
        std::iter::once((0.0, 0.0))
            .chain((0..self.values.len()).map(move |i| ((i + 1) as f64 / n, self.value(i))))
    }

    /// Boundary value at the leading edge. Always zero.
    pub fn leading_edge(&self) -> f64 {
        0.0
    }

    /// `u(1, t)` as it enters the trailing-edge feedback, the measurement
    /// equation and the control laws.
    pub fn trailing_edge(&self) -> f64 {
        self.value(self.values.len() - 1)
    }

    /// Trapezoidal `int_0^1 u dxi` including the zero boundary node.
    pub fn integral(&self) -> f64 {
        let n = self.values.len();
        let inner: f64 = (0..n - 1).map(|i| self.value(i)).sum();
        (inner + 0.5 * self.value(n - 1)) / n as f64
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.values.len()).fold(0.0, |m, i| m.max(self.value(i).abs()))
    }

    /// Discrete L2 norm on the patch.
    pub fn l2_norm(&self) -> f64 {
        let n = self.values.len();
        let inner: f64 = (0..n - 1).map(|i| self.value(i).powi(2)).sum();
        ((inner + 0.5 * self.value(n - 1).powi(2)) / n as f64).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite()) && self.entering.is_finite()
    }

    pub fn reset(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        self.entering = 0.0;
        self.phase = 0.0;
    }

    /// Map the bristle-following nodes back onto the fixed grid.
    fn settle(&mut self) {
        if self.phase == 0.0 {
            return;
        }
        self.values = self.values();
        self.entering = 0.0;
        self.phase = 0.0;
    }

    /// Courant number of a step `dt` on this grid.
    pub fn courant(&self, dt: f64) -> f64 {
        self.upsilon * dt * self.values.len() as f64
    }

    /// Duration of one characteristic shift, `dxi / upsilon`.
    pub fn shift_period(&self) -> f64 {
        self.dxi() / self.upsilon
    }

    /// One first-order upwind step of
    /// `u_t + upsilon u_xi = source + gain u(1, t)`.
    ///
    /// The trailing-edge value is taken from the start of the step.
    pub fn step_upwind(&mut self, source: f64, gain: f64, dt: f64) -> Result<()> {
        let courant = self.courant(dt);
        if !(dt > 0.0) || courant > 1.0 + 1e-12 {
            return Err(Error::Cfl {
                courant,
                dt,
                speed: self.upsilon,
            });
        }
        self.settle();
        let forcing = dt * (source + gain * self.values[self.values.len() - 1]);
        let mut upstream = 0.0;
        for v in self.values.iter_mut() {
            let old = *v;
            *v = old - courant * (old - upstream) + forcing;
            upstream = old;
        }
        Ok(())
    }

    /// Advance by `dt` along characteristics with a frozen right-hand side
    /// `source + gain u(1, t)`.
    pub fn advance(&mut self, source: f64, gain: f64, dt: f64) {
        self.advance_impl(source, gain, dt, None);
    }

    /// Same as [`advance`](Self::advance) with pointwise friction clamping:
    /// a node whose deformation exceeds `bound[j]` in magnitude slides and is
    /// clamped to the bound with the sign of the unconstrained value.
    ///
    /// `bound` holds one limit per node followed by the limit of the bristle
    /// entering at the leading edge.
    pub fn advance_saturated(&mut self, source: f64, gain: f64, bound: &[f64], dt: f64) {
        debug_assert_eq!(bound.len(), self.values.len() + 1);
        self.advance_impl(source, gain, dt, Some(bound));
    }

    fn advance_impl(&mut self, source: f64, gain: f64, dt: f64, bound: Option<&[f64]>) {
        let rate = source + gain * self.trailing_edge();
        let period = self.shift_period();
        let mut remaining = dt;
        loop {
            let to_shift = period - self.phase;
            if remaining < to_shift {
                self.accumulate(rate * remaining, bound);
                self.phase += remaining;
                return;
            }
            self.accumulate(rate * to_shift, bound);
            self.shift(bound);
            self.phase = 0.0;
            remaining -= to_shift;
        }
    }

    fn accumulate(&mut self, increment: f64, bound: Option<&[f64]>) {
        self.entering += increment;
        match bound {
            None => {
                for v in self.values.iter_mut() {
                    *v += increment;
                }
            }
            Some(b) => {
                for (v, &lim) in self.values.iter_mut().zip(b) {
                    *v = clamp_sym(*v + increment, lim);
                }
                self.entering = clamp_sym(self.entering, b[self.values.len()]);
            }
        }
    }

    fn shift(&mut self, bound: Option<&[f64]>) {
        let n = self.values.len();
        self.values.copy_within(0..n - 1, 1);
        self.values[0] = self.entering;
        self.entering = 0.0;
        if let Some(b) = bound {
            self.values[n - 1] = clamp_sym(self.values[n - 1], b[n - 1]);
        }
    }
}

fn clamp_sym(v: f64, lim: f64) -> f64 {
    if v > lim {
        lim
    } else if v < -lim {
        -lim
    } else {
        v
    }
}

/// Axle forces `Y_i = (C_i / 2a_i) int_0^1 u_i dxi`.
pub fn axle_forces(front: &BristleField, rear: &BristleField, p: &VehicleParams) -> Vector2<f64> {
    Vector2::new(
        p.force_scale(Axle::Front) * front.integral(),
        p.force_scale(Axle::Rear) * rear.integral(),
    )
}

/// `u(1, t)` of a front/rear pair.
pub fn trailing_edges(front: &BristleField, rear: &BristleField) -> Vector2<f64> {
    Vector2::new(front.trailing_edge(), rear.trailing_edge())
}

/// Normal pressure distribution over the patch, normalised to unit integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PressureShape {
    /// `q(xi) = 6 xi (1 - xi)`.
    #[default]
    Parabolic,
}

impl PressureShape {
    pub fn density(self, xi: f64) -> f64 {
        match self {
            PressureShape::Parabolic => 6.0 * xi * (1.0 - xi),
        }
    }

    /// `int_0^xi q`.
    pub fn cumulative(self, xi: f64) -> f64 {
        match self {
            PressureShape::Parabolic => xi * xi * (3.0 - 2.0 * xi),
        }
    }

    /// Pressure averaged over the dual cell of each node: the trapezoid
    /// weights times these values sum to `1 - int_0^{dxi/2} q`.
    ///
    /// A final entry holds the average over the leading half cell, which
    /// limits the bristle entering the patch.
    pub fn nodal_weights(self, n_cells: usize) -> Vec<f64> {
        let h = 1.0 / n_cells as f64;
        let mut w: Vec<f64> = (1..=n_cells)
            .map(|j| {
                let xi = j as f64 * h;
                let lo = xi - 0.5 * h;
                let hi = (xi + 0.5 * h).min(1.0);
                (self.cumulative(hi) - self.cumulative(lo)) / (hi - lo)
            })
            .collect();
        w.push(self.cumulative(0.5 * h) / (0.5 * h));
        w
    }
}

/// Friction data of one tire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearBrushParams {
    pub mu: f64,
    /// Instantaneous normal load (N).
    pub fz: f64,
    pub pressure_shape: PressureShape,
}

impl NonlinearBrushParams {
    pub fn new(mu: f64, fz: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Tire(format!("friction coefficient must be positive, got {mu}")));
        }
        if !(fz >= 0.0) {
            return Err(Error::Tire(format!("normal load must be non-negative, got {fz}")));
        }
        Ok(Self {
            mu,
            fz,
            pressure_shape: PressureShape::Parabolic,
        })
    }
}

/// One tire of the double-track plant: a bristle field carrying the tire's
/// own deflection and the stiffness data that turns it into a force.
///
/// A tire takes half of its axle's stiffness, so the sum of the left and
/// right fields is the axle-equivalent deformation of the single-track model.
///
/// The trailing-edge feedback stands for the carcass deflection, which
/// follows the transmitted force rather than the local friction limit. It
/// is taken from an unclamped elastic twin of the field, corrected by the
/// force lost to sliding: `e(1) - 2 (int e - int u)`. This equals `u(1)`
/// while no bristle slides and `2 int u` in any steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct TireBrush {
    pub field: BristleField,
    elastic: BristleField,
    /// `C / 2a` of the axle; tire force is this times the field integral.
    force_scale: f64,
    /// `2a / C`: converts a force per unit patch coordinate into deflection.
    compliance: f64,
    /// Slip-to-source factor `vx a / lambda` (half the axle value).
    slip_gain: f64,
    /// Trailing feedback gain, same as the axle PDE.
    feedback_gain: f64,
    weights: Vec<f64>,
    bound: Vec<f64>,
}

impl TireBrush {
    pub fn new(p: &VehicleParams, axle: Axle, n_cells: usize, shape: PressureShape) -> Result<Self> {
        let a = p.a(axle);
        Ok(Self {
            field: BristleField::for_axle(p, axle, n_cells)?,
            elastic: BristleField::for_axle(p, axle, n_cells)?,
            force_scale: p.force_scale(axle),
            compliance: 2.0 * a / p.c(axle),
            slip_gain: p.vx() * a / p.lambda(axle),
            feedback_gain: p.vx() * p.c(axle) / (2.0 * a * p.lambda(axle) * p.w(axle)),
            weights: shape.nodal_weights(n_cells),
            bound: vec![f64::INFINITY; n_cells + 1],
        })
    }

    pub fn force(&self) -> f64 {
        self.force_scale * self.field.integral()
    }

    /// Material derivative of the tire deflection in adhesion, i.e. the
    /// quantity sensed by an in-tire accelerometer.
    pub fn bristle_velocity(&self, slip: f64) -> f64 {
        self.source(slip) + self.feedback_gain * self.carcass_feedback()
    }

    /// Deflection fed back at the trailing edge.
    pub fn carcass_feedback(&self) -> f64 {
        self.elastic.trailing_edge() - 2.0 * (self.elastic.integral() - self.field.integral())
    }

    /// Reset both the clamped field and its elastic twin.
    pub fn reset(&mut self) {
        self.field.reset();
        self.elastic.reset();
    }

    pub fn source(&self, slip: f64) -> f64 {
        self.slip_gain * slip
    }

    pub fn feedback_gain(&self) -> f64 {
        self.feedback_gain
    }

    /// Pointwise deflection limit `2a mu Fz q(xi) / C` at each node.
    pub fn friction_bound(&self) -> &[f64] {
        &self.bound[..self.field.n_cells()]
    }

    fn update_bound(&mut self, np: &NonlinearBrushParams) {
        let scale = self.compliance * np.mu * np.fz;
        for (b, w) in self.bound.iter_mut().zip(&self.weights) {
            *b = scale * w;
        }
    }
}

/// Advance one tire by `dt` under slip angle `slip`, clamping sliding
/// bristles to the friction limit. Returns the resulting tire force.
pub fn step_nonlinear_brush(
    tire: &mut TireBrush,
    slip: f64,
    np: &NonlinearBrushParams,
    dt: f64,
) -> f64 {
    if np.fz <= 0.0 {
        tire.reset();
        return 0.0;
    }
    tire.update_bound(np);
    let source = tire.source(slip);
    let gain = tire.feedback_gain;
    let rate = source + gain * tire.carcass_feedback();
    tire.elastic.advance(source, gain, dt);
    let bound = std::mem::take(&mut tire.bound);
    tire.field.advance_saturated(rate, 0.0, &bound, dt);
    tire.bound = bound;
    tire.force()
}

/// Write field snapshots as CSV rows `xi,u_front,u_rear,u_front_est,u_rear_est`.
pub fn write_snapshot_csv<W: Write>(
    mut out: W,
    front: &[f64],
    rear: &[f64],
    front_est: &[f64],
    rear_est: &[f64],
) -> Result<()> {
    let n = front.len();
    if rear.len() != n || front_est.len() != n || rear_est.len() != n {
        return Err(Error::Tire("snapshot columns differ in length".into()));
    }
    writeln!(out, "xi,u_front,u_rear,u_front_est,u_rear_est")?;
    writeln!(out, "0,0,0,0,0")?;
    for j in 0..n {
        let xi = (j + 1) as f64 / n as f64;
        writeln!(
            out,
            "{xi},{},{},{},{}",
            front[j], rear[j], front_est[j], rear_est[j]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{derive_params, RawParams};
    use approx::assert_relative_eq;

    fn table(vx: f64) -> VehicleParams {
        derive_params(&RawParams::reference(), vx).unwrap()
    }

    #[test]
    fn zero_field_stays_zero() {
        let mut f = BristleField::new(Axle::Front, 32, 10.0).unwrap();
        f.step_upwind(0.0, 5.0, 1e-3).unwrap();
        f.advance(0.0, 5.0, 0.37);
        assert_eq!(f.sup_norm(), 0.0);
        assert_eq!(f.trailing_edge(), 0.0);
    }

    #[test]
    fn rejects_cfl_violation() {
        let mut f = BristleField::new(Axle::Front, 64, 200.0).unwrap();
        let err = f.step_upwind(0.0, 0.0, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
        assert!(f.step_upwind(0.0, 0.0, 1.0 / (64.0 * 200.0)).is_ok());
    }

    #[test]
    fn upwind_bump_exits_after_transit_time() {
        let upsilon = 2.0;
        let n = 100;
        let dt = 0.5 / (n as f64 * upsilon);
        let mut f = BristleField::new(Axle::Front, n, upsilon)
            .unwrap()
            .with_profile(|xi| (-((xi - 0.2) / 0.03).powi(2)).exp());
        let peak = |f: &BristleField| {
            f.nodes()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap()
                .0
        };
        let steps_to_trailing = (0.8 / upsilon / dt).round() as usize;
        for _ in 0..steps_to_trailing {
            f.step_upwind(0.0, 0.0, dt).unwrap();
        }
        // Peak reached the trailing edge after 0.8 / upsilon within two cells.
        assert!((peak(&f) - 1.0).abs() <= 2.0 / n as f64, "peak at {}", peak(&f));
    }

    #[test]
    fn characteristic_transport_is_exact_shift() {
        let upsilon = 3.0;
        let mut f = BristleField::new(Axle::Rear, 50, upsilon)
            .unwrap()
            .with_profile(|xi| xi * (1.0 - xi));
        let before = f.values();
        // Ten shifts.
        f.advance(0.0, 0.0, 10.0 * f.shift_period());
        let after = f.values();
        for (a, b) in after[10..].iter().zip(&before[..40]) {
            assert!((a - b).abs() <= 1e-9);
        }
        assert!(after[..9].iter().all(|&v| v == 0.0));
        // Extinct after one transit.
        f.advance(0.0, 0.0, 1.0 / upsilon);
        assert_eq!(f.sup_norm(), 0.0);
    }

    #[test]
    fn constant_source_converges_to_linear_profile() {
        let p = table(20.0);
        let alpha = 0.01;
        let source = p.vx() * 2.0 * p.a(Axle::Front) / p.lambda(Axle::Front) * alpha;
        let gain = p.gamma_bar(Axle::Front) * p.upsilon(Axle::Front);
        let mut f = BristleField::for_axle(&p, Axle::Front, 64).unwrap();
        for _ in 0..4000 {
            f.advance(source, gain, 1e-4);
        }
        let k = 4.0 * p.a(Axle::Front) * alpha;
        for (xi, u) in f.nodes() {
            assert!((u - k * xi).abs() <= 1e-9 * k, "u({xi}) = {u}");
        }
        assert_relative_eq!(f.trailing_edge(), k, max_relative = 1e-9);
        let y = p.force_scale(Axle::Front) * f.integral();
        assert_relative_eq!(y, p.c(Axle::Front) * alpha, max_relative = 1e-9);
    }

    #[test]
    fn upwind_steady_state_matches_closed_form() {
        let p = table(20.0);
        let alpha = -0.02;
        let axle = Axle::Rear;
        let source = p.vx() * 2.0 * p.a(axle) / p.lambda(axle) * alpha;
        let gain = p.gamma_bar(axle) * p.upsilon(axle);
        let mut f = BristleField::for_axle(&p, axle, 32).unwrap();
        let dt = 0.6 / f.courant(1.0);
        for _ in 0..20000 {
            f.step_upwind(source, gain, dt).unwrap();
        }
        assert_relative_eq!(f.trailing_edge(), 4.0 * p.a(axle) * alpha, max_relative = 1e-8);
    }

    #[test]
    fn axle_force_of_linear_profile() {
        let p = table(20.0);
        let front = BristleField::for_axle(&p, Axle::Front, 64)
            .unwrap()
            .with_profile(|xi| 4.0 * 0.055 * 0.01 * xi);
        let rear = BristleField::for_axle(&p, Axle::Rear, 64).unwrap();
        let y = axle_forces(&front, &rear, &p);
        assert_relative_eq!(y[0], 700.0, max_relative = 1e-12);
        assert_eq!(y[1], 0.0);
    }

    #[test]
    fn trapezoid_is_second_order() {
        let exact = 1.0 / 3.0;
        let err = |n: usize| {
            let f = BristleField::new(Axle::Front, n, 1.0)
                .unwrap()
                .with_profile(|xi| xi * xi);
            (f.integral() - exact).abs()
        };
        for n in [8, 16, 32, 64] {
            assert!(err(n) / err(2 * n) >= 4.0 - 1e-9);
        }
    }

    #[test]
    fn trailing_edge_of_linear_profile() {
        let f = BristleField::new(Axle::Front, 16, 1.0)
            .unwrap()
            .with_profile(|xi| 0.3 * xi);
        assert_relative_eq!(f.trailing_edge(), 0.3, max_relative = 1e-15);
    }

    #[test]
    fn pressure_weights_integrate_to_one_minus_leading_half_cell() {
        for n in [4, 16, 64] {
            let w = PressureShape::Parabolic.nodal_weights(n);
            let h = 1.0 / n as f64;
            assert_eq!(w.len(), n + 1);
            let total: f64 = w[..n - 1].iter().sum::<f64>() * h + 0.5 * h * w[n - 1];
            let expected = 1.0 - PressureShape::Parabolic.cumulative(0.5 * h);
            assert_relative_eq!(total, expected, max_relative = 1e-12);
            assert!(w.iter().all(|&q| q > 0.0));
        }
    }

    #[test]
    fn huge_friction_reproduces_linear_step_bitwise() {
        let p = table(20.0);
        let mut tire = TireBrush::new(&p, Axle::Front, 64, PressureShape::Parabolic).unwrap();
        let mut linear = BristleField::for_axle(&p, Axle::Front, 64).unwrap();
        let np = NonlinearBrushParams::new(1e12, 4000.0).unwrap();
        for k in 0..500 {
            let slip = 0.02 * (k as f64 * 0.01).sin();
            step_nonlinear_brush(&mut tire, slip, &np, 1e-3);
            linear.advance(tire.source(slip), tire.feedback_gain(), 1e-3);
        }
        assert_eq!(tire.field, linear);
    }

    #[test]
    fn unloaded_tire_has_no_force() {
        let p = table(20.0);
        let mut tire = TireBrush::new(&p, Axle::Rear, 32, PressureShape::Parabolic).unwrap();
        let np = NonlinearBrushParams::new(1.0, 4000.0).unwrap();
        step_nonlinear_brush(&mut tire, 0.05, &np, 1e-2);
        assert!(tire.force() != 0.0);
        let unloaded = NonlinearBrushParams::new(1.0, 0.0).unwrap();
        assert_eq!(step_nonlinear_brush(&mut tire, 0.05, &unloaded, 1e-3), 0.0);
        assert_eq!(tire.field.sup_norm(), 0.0);
    }

    #[test]
    fn large_slip_force_is_friction_limited() {
        let p = table(20.0);
        let np = NonlinearBrushParams::new(0.9, 3500.0).unwrap();
        for axle in Axle::BOTH {
            let mut tire = TireBrush::new(&p, axle, 64, PressureShape::Parabolic).unwrap();
            for _ in 0..2000 {
                let f = step_nonlinear_brush(&mut tire, 0.6, &np, 1e-3);
                assert!(f.abs() <= np.mu * np.fz * (1.0 + 1e-12));
            }
            assert!(tire.force().abs() > 0.9 * np.mu * np.fz);
            for (u, b) in tire.field.values.iter().zip(tire.friction_bound()) {
                assert!(u.abs() <= *b);
            }
        }
    }

    /// Stationary profile of the discrete clamped transport for a given
    /// feedback value, at one shift per step. A bristle is clamped where it
    /// accumulates and again where it lands.
    fn stationary_profile(inc: f64, bound: &[f64]) -> Vec<f64> {
        let n = bound.len() - 1;
        let mut v = vec![0.0; n];
        v[0] = clamp_sym(clamp_sym(inc, bound[n]), bound[0]);
        for j in 1..n {
            v[j] = clamp_sym(clamp_sym(v[j - 1] + inc, bound[j - 1]), bound[j]);
        }
        v
    }

    fn trapezoid(v: &[f64]) -> f64 {
        let n = v.len();
        (v[..n - 1].iter().sum::<f64>() + 0.5 * v[n - 1]) / n as f64
    }

    #[test]
    fn steady_moderate_slip_matches_fixed_point_oracle() {
        let p = table(20.0);
        let np = NonlinearBrushParams::new(1.0, 3900.0).unwrap();
        for (axle, slip) in [(Axle::Front, 0.01), (Axle::Rear, -0.02), (Axle::Front, 0.04)] {
            let mut tire = TireBrush::new(&p, axle, 64, PressureShape::Parabolic).unwrap();
            let dt = tire.field.shift_period();
            let mut force = 0.0;
            for _ in 0..64 * 400 {
                force = step_nonlinear_brush(&mut tire, slip, &np, dt);
            }
            // Oracle: bisection on the carcass feedback, which must equal
            // twice the integral of the stationary profile it generates.
            let bound = tire.bound.clone();
            let (s, g) = (tire.source(slip), tire.feedback_gain());
            let residual = |fb: f64| 2.0 * trapezoid(&stationary_profile((s + g * fb) * dt, &bound)) - fb;
            let (mut lo, mut hi) = (-1.0, 1.0);
            assert!(residual(lo) * residual(hi) < 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if residual(lo) * residual(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let fb = 0.5 * (lo + hi);
            let oracle = tire.force_scale * trapezoid(&stationary_profile((s + g * fb) * dt, &bound));
            assert_relative_eq!(force, oracle, max_relative = 1e-6);
            // Sliding is active: the force falls short of the linear value.
            assert!(force.abs() < 0.5 * p.c(axle) * slip.abs());
        }
    }

    #[test]
    fn force_curve_saturates_monotonically() {
        let p = table(20.0);
        let np = NonlinearBrushParams::new(1.0, 3900.0).unwrap();
        let mut last = 0.0;
        for slip in [0.002, 0.01, 0.03, 0.1, 0.3] {
            let mut tire = TireBrush::new(&p, Axle::Front, 64, PressureShape::Parabolic).unwrap();
            let mut f = 0.0;
            for _ in 0..2000 {
                f = step_nonlinear_brush(&mut tire, slip, &np, 1e-3);
            }
            assert!(f > last && f <= np.mu * np.fz);
            last = f;
        }
        assert!(last > 0.8 * np.fz);
    }

    #[test]
    fn transport_without_feedback_extinguishes_after_one_transit() {
        let upsilon = 20.0 / 0.11;
        let dt = 1e-3;
        let mut f = BristleField::new(Axle::Front, 64, upsilon)
            .unwrap()
            .with_profile(|xi| (3.0 * xi).sin());
        let steps = ((1.0 / upsilon) / dt).ceil() as usize + 2;
        for _ in 0..steps {
            f.advance(0.0, 0.0, dt);
        }
        assert!(f.sup_norm() <= 1e-12);
    }

    #[test]
    fn marginal_feedback_preserves_linear_profile() {
        let upsilon = 4.0;
        let mut f = BristleField::new(Axle::Rear, 64, upsilon)
            .unwrap()
            .with_profile(|xi| 0.2 * xi);
        let dt = 1e-3;
        for _ in 0..(10.0 / upsilon / dt) as usize {
            f.advance(0.0, upsilon, dt);
        }
        for (xi, u) in f.nodes() {
            assert!((u - 0.2 * xi).abs() <= 1e-6 * 0.2, "u({xi}) = {u}");
        }
    }

    #[test]
    fn upwind_converges_at_first_order() {
        let upsilon = 1.0;
        let profile = |xi: f64| (std::f64::consts::PI * xi).sin().powi(2);
        let err = |n: usize| {
            let dt = 0.5 / (n as f64 * upsilon);
            let mut f = BristleField::new(Axle::Front, n, upsilon).unwrap().with_profile(profile);
            let steps = (0.25 / dt).round() as usize;
            for _ in 0..steps {
                f.step_upwind(0.0, 0.0, dt).unwrap();
            }
            let t = steps as f64 * dt;
            f.nodes()
                .map(|(xi, u)| {
                    let exact = if xi >= upsilon * t { profile(xi - upsilon * t) } else { 0.0 };
                    (u - exact).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(100), err(200), err(400));
        assert!(e1 / e2 > 1.7 && e2 / e3 > 1.7, "{e1} {e2} {e3}");
    }

    proptest::proptest! {
        #[test]
        fn fields_stay_finite_with_zero_leading_edge(
            sources in proptest::collection::vec(-1.0f64..1.0, 1..40),
            gain in 0.0f64..5.0,
            dt in 1e-4f64..5e-2,
        ) {
            let mut f = BristleField::new(Axle::Front, 16, 5.0).unwrap();
            let mut g = f.clone();
            for s in &sources {
                f.advance(*s, gain, dt);
                g.step_upwind(*s, gain, f.shift_period() * 0.9).unwrap();
            }
            proptest::prop_assert_eq!(f.leading_edge(), 0.0);
            proptest::prop_assert_eq!(f.nodes().next().unwrap(), (0.0, 0.0));
            proptest::prop_assert!(f.is_finite() && g.is_finite());
        }

        #[test]
        fn clamped_field_respects_friction_bound(
            slips in proptest::collection::vec(-0.5f64..0.5, 1..200),
            mu in 0.2f64..1.5,
            fz in 100.0f64..6000.0,
        ) {
            let p = table(15.0);
            let np = NonlinearBrushParams::new(mu, fz).unwrap();
            let mut tire = TireBrush::new(&p, Axle::Rear, 32, PressureShape::Parabolic).unwrap();
            for slip in &slips {
                let force = step_nonlinear_brush(&mut tire, *slip, &np, 1e-3);
                proptest::prop_assert!(force.abs() <= mu * fz * (1.0 + 1e-12));
                for (u, b) in tire.field.values.iter().zip(tire.friction_bound()) {
                    proptest::prop_assert!(u.abs() <= *b);
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_brush_params() {
        assert!(NonlinearBrushParams::new(0.0, 100.0).is_err());
        assert!(NonlinearBrushParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn snapshot_has_header_and_boundary_row() {
        let v = vec![1.0, 2.0];
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &v, &v, &v, &v).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,0,0,0,0");
        assert_eq!(lines[3], "1,2,2,2,2");
    }
}
