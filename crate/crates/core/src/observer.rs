//! Luenberger-type observer: a copy of the linear model driven by the
//! measurement error, with the front-field injection chosen so that the
//! estimation error fields see no lumped source.

use nalgebra::Vector2;
use serde::Serialize;

use crate::control::GainSet;
use crate::error::{Error, Result};
use crate::plant::{advance_field, SimConfig};
use crate::tire::{self, BristleField};
use crate::vehicle::{build_matrices, Axle, ModelMatrices, VehicleParams};

#[derive(Debug, Clone)]
pub struct Observer {
    p: VehicleParams,
    mm: ModelMatrices,
    cfg: SimConfig,
    l1: nalgebra::Matrix2<f64>,
    l2: nalgebra::Matrix2<f64>,
    t: f64,
    x_hat: Vector2<f64>,
    fields: [BristleField; 2],
}

/// Serialisable view of the observer at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObserverState {
    pub t: f64,
    pub x_hat: [f64; 2],
    pub y_hat_forces: [f64; 2],
    pub u_hat: [Vec<f64>; 2],
}

/// Classic RK4 for `x' = A1 x + A2 Y(tau) + e`, forces linear in the step.
fn lumped_rk4(
    x: &Vector2<f64>,
    mm: &ModelMatrices,
    y0: &Vector2<f64>,
    y1: &Vector2<f64>,
    e: &Vector2<f64>,
    dt: f64,
) -> Vector2<f64> {
    let f = |tau: f64, x: &Vector2<f64>| mm.a1 * x + mm.a2 * (y0 + (y1 - y0) * tau) + e;
    let k1 = f(0.0, x);
    let k2 = f(0.5, &(x + k1 * (0.5 * dt)));
    let k3 = f(0.5, &(x + k2 * (0.5 * dt)));
    let k4 = f(1.0, &(x + k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

impl Observer {
    pub fn new(p: &VehicleParams, cfg: &SimConfig, gains: &GainSet) -> Result<Self> {
        cfg.validate(p)?;
        Ok(Self {
            p: *p,
            mm: build_matrices(p),
            cfg: *cfg,
            l1: gains.l1,
            l2: gains.l2,
            t: 0.0,
            x_hat: Vector2::zeros(),
            fields: [
                BristleField::for_axle(p, Axle::Front, cfg.n_cells)?,
                BristleField::for_axle(p, Axle::Rear, cfg.n_cells)?,
            ],
        })
    }

    pub fn with_state(mut self, x_hat: Vector2<f64>) -> Self {
        self.x_hat = x_hat;
        self
    }

    /// Start from given field estimates, sampled on the observer's grid.
    pub fn with_profiles(mut self, front: impl Fn(f64) -> f64, rear: impl Fn(f64) -> f64) -> Self {
        let [f, r] = self.fields.clone();
        self.fields = [f.with_profile(front), r.with_profile(rear)];
        self
    }

    /// Copy the plant's field state exactly (same grid and phase).
    pub fn with_fields(mut self, fields: [BristleField; 2]) -> Result<Self> {
        if fields.iter().any(|f| f.n_cells() != self.cfg.n_cells) {
            return Err(Error::Control("observer and plant grids differ".into()));
        }
        self.fields = fields;
        Ok(self)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn x_hat(&self) -> Vector2<f64> {
        self.x_hat
    }

    pub fn fields(&self) -> &[BristleField; 2] {
        &self.fields
    }

    /// Estimated axle forces.
    pub fn forces(&self) -> Vector2<f64> {
        tire::axle_forces(&self.fields[0], &self.fields[1], &self.p)
    }

    /// Estimated trailing-edge deflections.
    pub fn trailing_edges(&self) -> Vector2<f64> {
        tire::trailing_edges(&self.fields[0], &self.fields[1])
    }

    /// Predicted measurement `C1 x + C2 u(1) + C3 delta`.
    pub fn y_hat(&self, delta: &Vector2<f64>) -> Vector2<f64> {
        self.mm.c1 * self.x_hat + self.mm.c2 * self.trailing_edges() + self.mm.c3 * delta
    }

    pub fn snapshot(&self) -> ObserverState {
        let y = self.forces();
        ObserverState {
            t: self.t,
            x_hat: [self.x_hat[0], self.x_hat[1]],
            y_hat_forces: [y[0], y[1]],
            u_hat: [self.fields[0].values(), self.fields[1].values()],
        }
    }

    /// Advance one step with measurement `y` taken under command `delta`.
    ///
    /// The innovation and the lumped source are held over the step, exactly
    /// as the plant holds its own sources.
    pub fn step(&mut self, y: &Vector2<f64>, delta: &Vector2<f64>) -> Result<()> {
        let dt = self.cfg.dt;
        let innovation = y - self.y_hat(delta);
        let y0 = self.forces();
        let source = self.mm.a3 * self.x_hat + self.mm.b * delta - self.l2 * innovation;
        for (i, f) in self.fields.iter_mut().enumerate() {
            advance_field(f, self.cfg.scheme, source[i], self.mm.a4[(i, i)], dt)?;
        }
        let y1 = self.forces();
        self.x_hat = lumped_rk4(&self.x_hat, &self.mm, &y0, &y1, &(-self.l1 * innovation), dt);
        self.t += dt;
        let sup = self.fields.iter().fold(0.0f64, |m, f| m.max(f.sup_norm()));
        let norm = self.x_hat.amax().max(sup);
        if !norm.is_finite() || norm > self.cfg.blow_up {
            return Err(Error::BlowUp {
                t: self.t,
                norm,
                bound: self.cfg.blow_up,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::GainPreset;
    use crate::plant::{LinearPlant, Plant, PlantState};
    use crate::vehicle::{derive_params, RawParams};

    fn setup(vx: f64, dt: f64) -> (VehicleParams, SimConfig, GainSet) {
        let p = derive_params(&RawParams::reference(), vx).unwrap();
        let cfg = SimConfig {
            dt,
            ..SimConfig::default()
        };
        let g = GainPreset::Baseline.build(&build_matrices(&p)).unwrap();
        (p, cfg, g)
    }

    #[test]
    fn matched_start_stays_matched() {
        let (p, cfg, g) = setup(20.0, 1e-3);
        let x0 = Vector2::new(0.05, -0.02);
        let mut plant = LinearPlant::new(&p, &cfg)
            .unwrap()
            .with_state(PlantState { vy: x0[0], r: x0[1], ..PlantState::default() });
        let mut obs = Observer::new(&p, &cfg, &g).unwrap().with_state(x0);
        for k in 0..2000 {
            let d = Vector2::new(0.01 * (k as f64 * 1e-3).sin(), -0.005);
            let y = plant.clean_measurement(&d);
            obs.step(&y, &d).unwrap();
            plant.step(&d).unwrap();
        }
        let err = (obs.x_hat() - plant.state().lumped()).amax();
        assert!(err <= 1e-10, "{err}");
        assert!((obs.forces() - plant.axle_forces()).amax() <= 1e-6);
    }

    #[test]
    fn lumped_error_decays_with_observer_rate() {
        let (p, cfg, g) = setup(20.0, 1e-3);
        let mut plant = LinearPlant::new(&p, &cfg)
            .unwrap()
            .with_state(PlantState { vy: 0.1, r: 0.05, ..PlantState::default() });
        let mut obs = Observer::new(&p, &cfg, &g).unwrap();
        let d = Vector2::zeros();
        for _ in 0..3000 {
            let y = plant.clean_measurement(&d);
            obs.step(&y, &d).unwrap();
            plant.step(&d).unwrap();
        }
        let err = (obs.x_hat() - plant.state().lumped()).norm();
        assert!(err <= 1e-6 * 0.1, "{err}");
    }

    #[test]
    fn rejects_mismatched_grid() {
        let (p, cfg, g) = setup(5.0, 1e-3);
        let other = BristleField::for_axle(&p, Axle::Front, 8).unwrap();
        let rear = BristleField::for_axle(&p, Axle::Rear, 8).unwrap();
        assert!(Observer::new(&p, &cfg, &g).unwrap().with_fields([other, rear]).is_err());
    }
}
