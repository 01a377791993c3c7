//! Time integration of the coupled rigid-body and tire models.
//!
//! Both plants use the same splitting: the fields are advanced first with
//! the slip source and trailing-edge feedback of the start of the step; RK4
//! then advances lateral velocity, yaw rate and pose with axle forces
//! interpolated linearly between the old and new fields.

use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tire::{step_nonlinear_brush, BristleField, NonlinearBrushParams, PressureShape, TireBrush};
use crate::vehicle::{build_matrices, slip_angles, Axle, ModelMatrices, VehicleParams};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    #[default]
    LinearSingleTrack,
    NonlinearDoubleTrack,
}

/// Field time integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdeScheme {
    /// Upwind sub-steps at Courant number one; any `dt`.
    #[default]
    Characteristic,
    /// One upwind step per outer step; requires `dt` within the CFL limit.
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// Horizon (s).
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_cells: usize,
    pub blow_up: f64,
    pub plant_kind: PlantKind,
    pub scheme: PdeScheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 10.0,
            n_cells: crate::tire::DEFAULT_CELLS,
            blow_up: 1e6,
            plant_kind: PlantKind::LinearSingleTrack,
            scheme: PdeScheme::Characteristic,
        }
    }
}

impl SimConfig {
    /// Checks `dt`, horizon and grid, and the CFL limit when the upwind
    /// scheme is selected.
    pub fn validate(&self, p: &VehicleParams) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::Config(format!("horizon must be non-negative, got {}", self.horizon)));
        }
        if self.n_cells < 2 {
            return Err(Error::Config(format!("n_cells must be at least 2, got {}", self.n_cells)));
        }
        if !(self.blow_up > 0.0) {
            return Err(Error::Config(format!("blow_up must be positive, got {}", self.blow_up)));
        }
        if self.scheme == PdeScheme::Upwind {
            let speed = p.upsilon(Axle::Front).max(p.upsilon(Axle::Rear));
            let courant = speed * self.dt * self.n_cells as f64;
            if courant > 1.0 + 1e-12 {
                return Err(Error::Cfl {
                    courant,
                    dt: self.dt,
                    speed,
                });
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Load-transfer and friction constants of the double-track plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleTrackParams {
    /// Centre-of-gravity height (m).
    pub h_cg: f64,
    /// Track width (m).
    pub track: f64,
    pub mu: f64,
    pub load_transfer: bool,
}

impl Default for DoubleTrackParams {
    fn default() -> Self {
        Self {
            h_cg: 0.5,
            track: 1.5,
            mu: 1.0,
            load_transfer: true,
        }
    }
}

/// Lumped state and pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PlantState {
    pub t: f64,
    pub vy: f64,
    pub r: f64,
    pub x_o: f64,
    pub y_o: f64,
    pub psi: f64,
}

impl PlantState {
    pub fn lumped(&self) -> Vector2<f64> {
        Vector2::new(self.vy, self.r)
    }

    pub fn set_lumped(&mut self, x: &Vector2<f64>) {
        self.vy = x[0];
        self.r = x[1];
    }
}

type Rigid = [f64; 5];

fn rigid_rhs(z: &Rigid, vx: f64, mm: &ModelMatrices, forces: &Vector2<f64>) -> Rigid {
    let x = Vector2::new(z[0], z[1]);
    let dx = mm.a1 * x + mm.a2 * forces;
    let (s, c) = z[4].sin_cos();
    [
        dx[0],
        dx[1],
        vx * c - z[0] * s,
        vx * s + z[0] * c,
        z[1],
    ]
}

/// Classic RK4; `f` receives the fraction of the step elapsed.
fn rk4<F: Fn(f64, &Rigid) -> Rigid>(z: &Rigid, dt: f64, f: F) -> Rigid {
    let add = |a: &Rigid, b: &Rigid, h: f64| -> Rigid {
        let mut o = *a;
        for i in 0..5 {
            o[i] += h * b[i];
        }
        o
    };
    let k1 = f(0.0, z);
    let k2 = f(0.5, &add(z, &k1, 0.5 * dt));
    let k3 = f(0.5, &add(z, &k2, 0.5 * dt));
    let k4 = f(1.0, &add(z, &k3, dt));
    let mut o = *z;
    for i in 0..5 {
        o[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

/// Advance the rigid body with axle forces varying linearly from `y0` to `y1`.
pub(crate) fn advance_rigid(
    s: &mut PlantState,
    vx: f64,
    mm: &ModelMatrices,
    y0: &Vector2<f64>,
    y1: &Vector2<f64>,
    dt: f64,
) {
    let z = rk4(&[s.vy, s.r, s.x_o, s.y_o, s.psi], dt, |tau, z| {
        rigid_rhs(z, vx, mm, &(y0 + (y1 - y0) * tau))
    });
    s.vy = z[0];
    s.r = z[1];
    s.x_o = z[2];
    s.y_o = z[3];
    s.psi = z[4];
    s.t += dt;
}

/// Integrate the planar kinematics over `dt` holding `vy` and `r`.
pub fn update_pose(s: &PlantState, vx: f64, dt: f64) -> PlantState {
    let (vy, r) = (s.vy, s.r);
    let z = rk4(&[vy, r, s.x_o, s.y_o, s.psi], dt, |_, z| {
        let (sn, c) = z[4].sin_cos();
        [0.0, 0.0, vx * c - vy * sn, vx * sn + vy * c, r]
    });
    PlantState {
        t: s.t + dt,
        x_o: z[2],
        y_o: z[3],
        psi: z[4],
        ..*s
    }
}

/// Common interface of the simulated vehicles.
pub trait Plant {
    fn params(&self) -> &VehicleParams;
    fn state(&self) -> &PlantState;
    /// Axle forces `(Y1, Y2)` at the current instant.
    fn axle_forces(&self) -> Vector2<f64>;
    /// Axle-equivalent `u(1, t)` pair.
    fn trailing_edges(&self) -> Vector2<f64>;
    /// Axle-equivalent nodal deflection on the fixed grid, front and rear.
    fn axle_profiles(&self) -> [Vec<f64>; 2];
    /// Noise-free measurement: yaw rate and the front smart-tire channel.
    fn clean_measurement(&self, delta: &Vector2<f64>) -> Vector2<f64>;
    /// Advance by one step under steering `delta`.
    fn step(&mut self, delta: &Vector2<f64>) -> Result<()>;
    fn kind(&self) -> PlantKind;
}

/// `vx a / lambda`: half the slip-to-source factor of an axle.
fn half_slip_gain(p: &VehicleParams, axle: Axle) -> f64 {
    p.vx() * p.a(axle) / p.lambda(axle)
}

fn check_blow_up(s: &PlantState, field_sup: f64, bound: f64) -> Result<()> {
    let norm = s.vy.abs().max(s.r.abs()).max(field_sup);
    if !norm.is_finite() || norm > bound {
        return Err(Error::BlowUp {
            t: s.t,
            norm,
            bound,
        });
    }
    Ok(())
}

/// Linear single-track model with one distributed field per axle.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    p: VehicleParams,
    mm: ModelMatrices,
    cfg: SimConfig,
    state: PlantState,
    fields: [BristleField; 2],
}

impl LinearPlant {
    pub fn new(p: &VehicleParams, cfg: &SimConfig) -> Result<Self> {
        cfg.validate(p)?;
        Ok(Self {
            p: *p,
            mm: build_matrices(p),
            cfg: *cfg,
            state: PlantState::default(),
            fields: [
                BristleField::for_axle(p, Axle::Front, cfg.n_cells)?,
                BristleField::for_axle(p, Axle::Rear, cfg.n_cells)?,
            ],
        })
    }

    pub fn with_state(mut self, s: PlantState) -> Self {
        self.state = s;
        self
    }

    pub fn with_profiles(mut self, front: impl Fn(f64) -> f64, rear: impl Fn(f64) -> f64) -> Self {
        let [f, r] = self.fields.clone();
        self.fields = [f.with_profile(front), r.with_profile(rear)];
        self
    }

    pub fn fields(&self) -> &[BristleField; 2] {
        &self.fields
    }

    pub fn matrices(&self) -> &ModelMatrices {
        &self.mm
    }

    /// Field source `A3 x + B delta` evaluated through the slip angles.
    pub fn field_source(&self, delta: &Vector2<f64>) -> Vector2<f64> {
        let alpha = slip_angles(&self.p, &self.state.lumped(), delta);
        Vector2::new(
            2.0 * half_slip_gain(&self.p, Axle::Front) * alpha[0],
            2.0 * half_slip_gain(&self.p, Axle::Rear) * alpha[1],
        )
    }
}

pub(crate) fn advance_field(f: &mut BristleField, scheme: PdeScheme, source: f64, gain: f64, dt: f64) -> Result<()> {
    match scheme {
        PdeScheme::Characteristic => {
            f.advance(source, gain, dt);
            Ok(())
        }
        PdeScheme::Upwind => f.step_upwind(source, gain, dt),
    }
}

impl Plant for LinearPlant {
    fn params(&self) -> &VehicleParams {
        &self.p
    }

    fn state(&self) -> &PlantState {
        &self.state
    }

    fn axle_forces(&self) -> Vector2<f64> {
        crate::tire::axle_forces(&self.fields[0], &self.fields[1], &self.p)
    }

    fn trailing_edges(&self) -> Vector2<f64> {
        crate::tire::trailing_edges(&self.fields[0], &self.fields[1])
    }

    fn axle_profiles(&self) -> [Vec<f64>; 2] {
        [self.fields[0].values(), self.fields[1].values()]
    }

    fn clean_measurement(&self, delta: &Vector2<f64>) -> Vector2<f64> {
        let mm = &self.mm;
        mm.c1 * self.state.lumped() + mm.c2 * self.trailing_edges() + mm.c3 * delta
    }

    fn step(&mut self, delta: &Vector2<f64>) -> Result<()> {
        let dt = self.cfg.dt;
        let y0 = self.axle_forces();
        let source = self.field_source(delta);
        for (i, f) in self.fields.iter_mut().enumerate() {
            advance_field(f, self.cfg.scheme, source[i], self.mm.a4[(i, i)], dt)?;
        }
        let y1 = self.axle_forces();
        advance_rigid(&mut self.state, self.p.vx(), &self.mm, &y0, &y1, dt);
        let sup = self.fields.iter().fold(0.0f64, |m, f| m.max(f.sup_norm()));
        check_blow_up(&self.state, sup, self.cfg.blow_up)
    }

    fn kind(&self) -> PlantKind {
        PlantKind::LinearSingleTrack
    }
}

/// Wheel positions of the double-track plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wheel {
    FrontLeft,
    FrontRight,
    RearLeft,
    RearRight,
}

impl Wheel {
    pub const ALL: [Wheel; 4] = [Wheel::FrontLeft, Wheel::FrontRight, Wheel::RearLeft, Wheel::RearRight];

    pub fn axle(self) -> Axle {
        match self {
            Wheel::FrontLeft | Wheel::FrontRight => Axle::Front,
            Wheel::RearLeft | Wheel::RearRight => Axle::Rear,
        }
    }

    /// +1 on the left, -1 on the right.
    pub fn side(self) -> f64 {
        match self {
            Wheel::FrontLeft | Wheel::RearLeft => 1.0,
            Wheel::FrontRight | Wheel::RearRight => -1.0,
        }
    }
}

/// Double-track plant: four friction-limited brush tires with lateral load
/// transfer, driving the same rigid body as the single-track model.
#[derive(Debug, Clone)]
pub struct DoubleTrackPlant {
    p: VehicleParams,
    mm: ModelMatrices,
    cfg: SimConfig,
    dtp: DoubleTrackParams,
    state: PlantState,
    tires: [TireBrush; 4],
    loads: [f64; 4],
}

impl DoubleTrackPlant {
    pub fn new(p: &VehicleParams, cfg: &SimConfig, dtp: &DoubleTrackParams) -> Result<Self> {
        cfg.validate(p)?;
        if !(dtp.mu > 0.0 && dtp.h_cg >= 0.0 && dtp.track >= 0.0) {
            return Err(Error::Config(
                "double-track constants need mu > 0, h_cg >= 0, track >= 0".into(),
            ));
        }
        if dtp.load_transfer && dtp.track <= 0.0 {
            return Err(Error::Config("load transfer needs a positive track width".into()));
        }
        let tire = |w: Wheel| TireBrush::new(p, w.axle(), cfg.n_cells, PressureShape::Parabolic);
        let mut plant = Self {
            p: *p,
            mm: build_matrices(p),
            cfg: *cfg,
            dtp: *dtp,
            state: PlantState::default(),
            tires: [
                tire(Wheel::FrontLeft)?,
                tire(Wheel::FrontRight)?,
                tire(Wheel::RearLeft)?,
                tire(Wheel::RearRight)?,
            ],
            loads: [0.0; 4],
        };
        plant.loads = plant.wheel_loads(&Vector2::zeros());
        Ok(plant)
    }

    pub fn with_state(mut self, s: PlantState) -> Self {
        self.state = s;
        self
    }

    pub fn tires(&self) -> &[TireBrush; 4] {
        &self.tires
    }

    /// Static axle loads `(m g l2 / L, m g l1 / L)`.
    pub fn static_axle_loads(&self) -> [f64; 2] {
        let mg = self.p.m() * GRAVITY;
        let l = self.p.wheelbase();
        [mg * self.p.l(Axle::Rear) / l, mg * self.p.l(Axle::Front) / l]
    }

    /// Normal loads under the lateral acceleration produced by `forces`.
    pub fn wheel_loads(&self, forces: &Vector2<f64>) -> [f64; 4] {
        let axle = self.static_axle_loads();
        let ay = -(forces[0] + forces[1]) / self.p.m();
        let mut out = [0.0; 4];
        for (k, w) in Wheel::ALL.iter().enumerate() {
            let fz = axle[w.axle().index()];
            let transfer = if self.dtp.load_transfer {
                fz * ay * self.dtp.h_cg / (GRAVITY * self.dtp.track)
            } else {
                0.0
            };
            // Positive lateral acceleration points left and loads the right side.
            out[k] = (0.5 * fz - w.side() * transfer).max(0.0);
        }
        out
    }

    pub fn loads(&self) -> [f64; 4] {
        self.loads
    }

    /// Per-wheel slip angles including the track-width yaw contribution.
    pub fn wheel_slips(&self, delta: &Vector2<f64>) -> [f64; 4] {
        let (vy, r, vx) = (self.state.vy, self.state.r, self.p.vx());
        let half_track = 0.5 * self.dtp.track;
        let mut out = [0.0; 4];
        for (k, w) in Wheel::ALL.iter().enumerate() {
            let axle = w.axle();
            let lat = match axle {
                Axle::Front => vy + self.p.l(axle) * r,
                Axle::Rear => vy - self.p.l(axle) * r,
            };
            out[k] = lat / (vx - w.side() * r * half_track) - delta[axle.index()];
        }
        out
    }

    pub fn tire_forces(&self) -> [f64; 4] {
        [
            self.tires[0].force(),
            self.tires[1].force(),
            self.tires[2].force(),
            self.tires[3].force(),
        ]
    }
}

impl Plant for DoubleTrackPlant {
    fn params(&self) -> &VehicleParams {
        &self.p
    }

    fn state(&self) -> &PlantState {
        &self.state
    }

    fn axle_forces(&self) -> Vector2<f64> {
        let f = self.tire_forces();
        Vector2::new(f[0] + f[1], f[2] + f[3])
    }

    fn trailing_edges(&self) -> Vector2<f64> {
        let t = |k: usize| self.tires[k].field.trailing_edge();
        Vector2::new(t(0) + t(1), t(2) + t(3))
    }

    fn axle_profiles(&self) -> [Vec<f64>; 2] {
        let sum = |a: usize, b: usize| {
            let (l, r) = (self.tires[a].field.values(), self.tires[b].field.values());
            l.iter().zip(&r).map(|(x, y)| x + y).collect()
        };
        [sum(0, 1), sum(2, 3)]
    }

    /// The smart-tire channel is the sum of the front tires' bristle
    /// velocities at the leading edge.
    fn clean_measurement(&self, delta: &Vector2<f64>) -> Vector2<f64> {
        let slips = self.wheel_slips(delta);
        Vector2::new(
            self.state.r,
            self.tires[0].bristle_velocity(slips[0]) + self.tires[1].bristle_velocity(slips[1]),
        )
    }

    fn step(&mut self, delta: &Vector2<f64>) -> Result<()> {
        let dt = self.cfg.dt;
        let forces = self.axle_forces();
        self.loads = self.wheel_loads(&forces);
        let slips = self.wheel_slips(delta);
        for k in 0..4 {
            let np = NonlinearBrushParams::new(self.dtp.mu, self.loads[k])?;
            if self.cfg.scheme == PdeScheme::Upwind {
                return Err(Error::Config(
                    "the double-track plant supports only the characteristic scheme".into(),
                ));
            }
            step_nonlinear_brush(&mut self.tires[k], slips[k], &np, dt);
        }
        let y1 = self.axle_forces();
        advance_rigid(&mut self.state, self.p.vx(), &self.mm, &forces, &y1, dt);
        let sup = self.tires.iter().fold(0.0f64, |m, t| m.max(t.field.sup_norm()));
        check_blow_up(&self.state, sup, self.cfg.blow_up)
    }

    fn kind(&self) -> PlantKind {
        PlantKind::NonlinearDoubleTrack
    }
}

/// Build the plant selected by `cfg.plant_kind`.
pub fn make_plant(p: &VehicleParams, cfg: &SimConfig, dtp: &DoubleTrackParams) -> Result<Box<dyn Plant + Send>> {
    Ok(match cfg.plant_kind {
        PlantKind::LinearSingleTrack => Box::new(LinearPlant::new(p, cfg)?),
        PlantKind::NonlinearDoubleTrack => Box::new(DoubleTrackPlant::new(p, cfg, dtp)?),
    })
}

/// Form in which the smart tire reports the front bristle dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Y2Mode {
    /// Bristle velocity at the leading edge (m/s).
    #[default]
    MaterialDerivative,
    /// Deflection slope at the leading edge (-), rescaled by the transport
    /// speed before use.
    LeadingEdgeSlope,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    /// Yaw-rate noise std (rad/s).
    pub sigma_r: f64,
    /// Absolute smart-tire noise std in the units of the selected form.
    /// When absent, `sigma_tire_rel` times the channel's running RMS is used.
    pub sigma_tire: Option<f64>,
    pub sigma_tire_rel: f64,
    /// Steering actuator noise std (rad).
    pub sigma_delta: f64,
    pub seed: u64,
    pub y2_mode: Y2Mode,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            sigma_r: 0.01,
            sigma_tire: None,
            sigma_tire_rel: 0.01,
            sigma_delta: 5e-4,
            seed: 0,
            y2_mode: Y2Mode::MaterialDerivative,
        }
    }
}

impl SensorModel {
    pub fn noiseless() -> Self {
        Self {
            sigma_r: 0.0,
            sigma_tire: Some(0.0),
            sigma_tire_rel: 0.0,
            sigma_delta: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.sigma_r) && ok(self.sigma_tire_rel) && ok(self.sigma_delta))
            || self.sigma_tire.is_some_and(|s| !ok(s))
        {
            return Err(Error::Config("noise standard deviations must be non-negative".into()));
        }
        Ok(())
    }
}

/// Seeded noise source for measurements and steering actuation.
#[derive(Debug, Clone)]
pub struct Sensors {
    model: SensorModel,
    rng: ChaCha8Rng,
    /// Transport speed of the front patch, for the slope form.
    upsilon1: f64,
    sum_sq: f64,
    count: u64,
}

impl Sensors {
    pub fn new(model: &SensorModel, p: &VehicleParams) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            model: *model,
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            upsilon1: p.upsilon(Axle::Front),
            sum_sq: 0.0,
            count: 0,
        })
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    fn gauss(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sigma).expect("validated std").sample(&mut self.rng)
    }

    /// Add channel noise to a clean measurement.
    pub fn measure(&mut self, clean: &Vector2<f64>) -> Vector2<f64> {
        let y1 = clean[0] + self.gauss(self.model.sigma_r);
        let scale = match self.model.y2_mode {
            Y2Mode::MaterialDerivative => 1.0,
            Y2Mode::LeadingEdgeSlope => self.upsilon1,
        };
        let raw = clean[1] / scale;
        self.sum_sq += raw * raw;
        self.count += 1;
        let sigma = self
            .model
            .sigma_tire
            .unwrap_or_else(|| self.model.sigma_tire_rel * (self.sum_sq / self.count as f64).sqrt());
        let y2 = (raw + self.gauss(sigma)) * scale;
        Vector2::new(y1, y2)
    }

    /// Steering actually applied for a commanded pair.
    pub fn actuate(&mut self, delta: &Vector2<f64>) -> Vector2<f64> {
        let s = self.model.sigma_delta;
        Vector2::new(delta[0] + self.gauss(s), delta[1] + self.gauss(s))
    }
}

/// Noisy measurement of `plant` under the applied steering `delta`.
pub fn measure(plant: &dyn Plant, delta: &Vector2<f64>, sensors: &mut Sensors) -> Vector2<f64> {
    sensors.measure(&plant.clean_measurement(delta))
}

/// Log-linear least-squares slope of `values` against `times`.
pub fn log_slope(times: &[f64], values: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    num / den
}

/// Maxima of `values` over consecutive windows of `window` seconds.
pub fn window_maxima(times: &[f64], values: &[f64], window: f64) -> (Vec<f64>, Vec<f64>) {
    let (mut tc, mut vm) = (Vec::new(), Vec::new());
    let Some(&t0) = times.first() else {
        return (tc, vm);
    };
    let mut k = 0usize;
    let mut best = f64::NEG_INFINITY;
    for (&t, &v) in times.iter().zip(values) {
        let idx = ((t - t0) / window).floor() as usize;
        if idx != k {
            tc.push(t0 + (k as f64 + 0.5) * window);
            vm.push(best);
            k = idx;
            best = f64::NEG_INFINITY;
        }
        best = best.max(v);
    }
    tc.push(t0 + (k as f64 + 0.5) * window);
    vm.push(best);
    (tc, vm)
}

/// Free response of the linear plant from lumped initial state `x0`:
/// returns times and `|(vy, r)|`. Stops early at blow-up.
pub fn free_response(
    p: &VehicleParams,
    cfg: &SimConfig,
    x0: &Vector2<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut plant = LinearPlant::new(p, cfg)?.with_state(PlantState {
        vy: x0[0],
        r: x0[1],
        ..Default::default()
    });
    let steps = cfg.steps();
    let (mut ts, mut ns) = (Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1));
    ts.push(0.0);
    ns.push(x0.norm());
    for _ in 0..steps {
        if plant.step(&Vector2::zeros()).is_err() {
            break;
        }
        ts.push(plant.state.t);
        ns.push(plant.state.lumped().norm());
    }
    Ok((ts, ns))
}

/// Exponential growth rate of the free-response envelope, fitted to window
/// maxima after the first `skip` seconds.
pub fn envelope_growth_rate(times: &[f64], norms: &[f64], skip: f64, window: f64) -> f64 {
    let start = times.iter().position(|&t| t >= skip).unwrap_or(0);
    let (tc, vm) = window_maxima(&times[start..], &norms[start..], window);
    log_slope(&tc, &vm)
}

/// Eigenvalues of a real 2x2 matrix as `(re, im)` pairs.
pub fn eigen2(m: &Matrix2<f64>) -> [(f64, f64); 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [(0.5 * tr + s, 0.0), (0.5 * tr - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(0.5 * tr, s), (0.5 * tr, -s)]
    }
}
