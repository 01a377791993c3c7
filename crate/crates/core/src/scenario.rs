//! Closed-loop scenarios: configuration, presets, the simulation loop
//! (plant, sensors, observer, controller), CSV export and tracking metrics.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::control::{
    output_feedback_controller, reference_from_path, validate_gains, GainPreset, PathGains, ReferenceState,
    SinePath,
};
use crate::error::{Error, Result};
use crate::observer::Observer;
use crate::plant::{
    measure, DoubleTrackParams, DoubleTrackPlant, LinearPlant, Plant, PlantKind, PlantState, SensorModel,
    Sensors, SimConfig,
};
use crate::tire::write_snapshot_csv;
use crate::vehicle::{build_matrices, derive_params, RawParams, VehicleParams};

/// Names accepted by [`Config::preset`].
pub const PRESETS: [&str; 3] = ["shimmy", "sine-mild", "avoidance"];

/// Lumped reference: a constant set point or a sinusoidal path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSpec {
    Constant {
        #[serde(default)]
        vy: f64,
        #[serde(default)]
        r: f64,
    },
    Sine {
        amplitude: f64,
        omega: f64,
        #[serde(default = "default_f1")]
        f1: f64,
        #[serde(default = "default_f2")]
        f2: f64,
    },
}

fn default_f1() -> f64 {
    PathGains::default().f1
}

fn default_f2() -> f64 {
    PathGains::default().f2
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec::Constant { vy: 0.0, r: 0.0 }
    }
}

impl ReferenceSpec {
    /// Reference at time `t` for the current pose.
    pub fn evaluate(&self, y_o: f64, psi: f64, t: f64, vx: f64) -> Result<ReferenceState> {
        match *self {
            ReferenceSpec::Constant { vy, r } => Ok(ReferenceState::constant(Vector2::new(vy, r))),
            ReferenceSpec::Sine { amplitude, omega, f1, f2 } => {
                reference_from_path(y_o, psi, &SinePath { amplitude, omega }, &PathGains { f1, f2 }, t, vx)
            }
        }
    }
}

/// Initial plant state and observer estimate. Fields start undeformed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialCondition {
    pub vy: f64,
    pub r: f64,
    pub y_o: f64,
    pub psi: f64,
    pub x_hat: [f64; 2],
}

/// `[scenario]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    /// Preset the rest of the file is layered on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Longitudinal speed (m/s).
    pub vx: f64,
    /// Controller activation time (s); steering is zero before it.
    pub activation: f64,
    /// Required whenever any noise level is non-zero.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            preset: None,
            vx: 20.0,
            activation: 0.0,
            seed: None,
        }
    }
}

/// `[chart]` section: stability-chart grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartSpec {
    pub chi: [f64; 2],
    pub vx: [f64; 2],
    pub n_chi: usize,
    pub n_vx: usize,
}

impl Default for ChartSpec {
    fn default() -> Self {
        Self {
            chi: [0.2, 1.4],
            vx: [0.2, 20.0],
            n_chi: 10,
            n_vx: 10,
        }
    }
}

/// `[poles]` section: Lambert lattice of the isolated tire equation.
/// `upsilon`/`gamma_bar` override the per-axle values of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoleSpec {
    pub k_min: i32,
    pub k_max: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_bar: Option<f64>,
}

impl Default for PoleSpec {
    fn default() -> Self {
        Self {
            k_min: -3,
            k_max: 3,
            upsilon: None,
            gamma_bar: None,
        }
    }
}

/// `[equilibrium]` section: constant steering pair (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumSpec {
    pub delta: [f64; 2],
}

/// Full configuration file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub vehicle: RawParams,
    pub sim: SimConfig,
    pub double_track: DoubleTrackParams,
    pub sensors: SensorModel,
    pub gains: GainPreset,
    pub reference: ReferenceSpec,
    pub initial: InitialCondition,
    pub chart: ChartSpec,
    pub poles: PoleSpec,
    pub equilibrium: EquilibriumSpec,
}

/// Tag keys of the internally tagged sections.
const TAGS: [&str; 2] = ["kind", "preset"];

fn tag(v: &toml::Value) -> Option<(&str, &toml::Value)> {
    let t = v.as_table()?;
    TAGS.iter().find_map(|k| t.get(*k).map(|x| (*k, x)))
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // A different variant replaces the section whole so
                    // fields of two variants never mix.
                    Some(slot)
                        if slot.is_table()
                            && v.is_table()
                            && tag(&v).is_none_or(|(key, val)| slot.get(key) == Some(val)) =>
                    {
                        merge(slot, v)
                    }
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl Config {
    /// One of the shipped presets, see [`PRESETS`].
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = Config::default();
        c.scenario.name = name.into();
        c.scenario.preset = Some(name.into());
        match name {
            "shimmy" => {
                c.scenario.vx = 0.4;
                c.scenario.activation = 2.0;
                c.scenario.seed = Some(1);
                // The lightly damped low-speed mode needs a fine step.
                c.sim.dt = 1e-4;
                c.sim.horizon = 6.0;
                c.initial.vy = 1e-4;
            }
            "sine-mild" | "avoidance" => {
                // Avoidance runs two path periods: the heading error at
                // activation alone gives an RMS of about omega A / sqrt(2 f2 T)
                // over the horizon, so one period would be dominated by it.
                let (amplitude, omega, activation, periods, seed) = if name == "sine-mild" {
                    (25.0, 0.01, 0.0, 1.0, 2)
                } else {
                    (2.0, 0.05, 0.3, 2.0, 3)
                };
                c.scenario.vx = 20.0;
                c.scenario.activation = activation;
                c.scenario.seed = Some(seed);
                c.sim.plant_kind = PlantKind::NonlinearDoubleTrack;
                c.sim.horizon = periods * 2.0 * std::f64::consts::PI / (omega * 20.0);
                c.reference = ReferenceSpec::Sine {
                    amplitude,
                    omega,
                    f1: default_f1(),
                    f2: default_f2(),
                };
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(c)
    }

    /// Parse TOML, layering it on `[scenario] preset` when given.
    pub fn from_toml(text: &str) -> Result<Self> {
        let over: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let preset = over
            .get("scenario")
            .and_then(|s| s.get("preset"))
            .map(|p| {
                p.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| Error::Config("`scenario.preset` must be a string".into()))
            })
            .transpose()?;
        let Some(name) = preset else {
            return toml::from_str(text).map_err(|e| Error::Config(e.to_string()));
        };
        let base = Config::preset(&name)?;
        let mut value = toml::Value::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut value, over);
        value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn params(&self) -> Result<VehicleParams> {
        derive_params(&self.vehicle, self.scenario.vx)
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            name: self.scenario.name.clone(),
            vehicle: self.vehicle,
            vx: self.scenario.vx,
            sim: self.sim,
            double_track: self.double_track,
            sensors: self.sensors,
            gains: self.gains,
            reference: self.reference,
            initial: self.initial,
            activation: self.scenario.activation,
            seed: self.scenario.seed,
        }
    }
}

/// Everything a closed-loop run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub vehicle: RawParams,
    pub vx: f64,
    /// Plant kind, step, horizon and grid.
    pub sim: SimConfig,
    pub double_track: DoubleTrackParams,
    pub sensors: SensorModel,
    pub gains: GainPreset,
    pub reference: ReferenceSpec,
    pub initial: InitialCondition,
    pub activation: f64,
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.activation >= 0.0 && self.sim.horizon > self.activation) {
            return Err(Error::Scenario(format!(
                "horizon {} must exceed activation time {}",
                self.sim.horizon, self.activation
            )));
        }
        let s = &self.sensors;
        let noisy = s.sigma_r > 0.0 || s.sigma_delta > 0.0 || s.sigma_tire.map_or(s.sigma_tire_rel > 0.0, |v| v > 0.0);
        if noisy && self.seed.is_none() {
            return Err(Error::Scenario("a seed is required for runs with sensor noise".into()));
        }
        Ok(())
    }
}

/// Column-named numeric table, the in-memory form of every CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Scenario(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    /// CSV with shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd
            .headers()
            .map_err(|e| Error::Io(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::Io(format!("bad number `{f}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_csv(&text)
    }
}

pub const SERIES_COLUMNS: [&str; 16] = [
    "t", "vy", "r", "xO", "yO", "psi", "Y1", "Y2", "delta1", "delta2", "y1", "y2", "vy_est", "r_est", "Y1_est",
    "Y2_est",
];

pub const REFERENCE_COLUMNS: [&str; 6] = ["t", "yO_ref", "psi_ref", "vy_ref", "r_ref", "active"];

/// Tracking indicators over the post-activation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rms_y: f64,
    pub max_y: f64,
    pub rms_psi: f64,
    pub max_psi: f64,
    /// First time after activation from which `|x - x_ref|` stays below
    /// [`SETTLE_FRACTION`] of its reference peak; `None` if it never does.
    pub settle_time: Option<f64>,
}

/// Settling threshold as a fraction of the pre-activation peak of
/// `|x - x_ref|` (of the whole-run peak when there is no pre-activation part).
pub const SETTLE_FRACTION: f64 = 0.05;

fn rms_max(e: &[f64]) -> (f64, f64) {
    if e.is_empty() {
        return (0.0, 0.0);
    }
    let ms = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
    (ms.sqrt(), e.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// RMS and max of `|yO_ref - yO|`, `|psi_ref - psi|` over rows with
/// `active = 1`, plus the settling time of the lumped error.
pub fn compute_metrics(result: &Table, reference: &Table) -> Result<Metrics> {
    if result.rows.len() != reference.rows.len() {
        return Err(Error::Scenario(format!(
            "series lengths differ: {} vs {}",
            result.rows.len(),
            reference.rows.len()
        )));
    }
    let t = result.column("t")?;
    let t_ref = reference.column("t")?;
    if t.iter().zip(&t_ref).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs())) {
        return Err(Error::Scenario("time grids are not aligned".into()));
    }
    let (y, psi, vy, r) = (result.column("yO")?, result.column("psi")?, result.column("vy")?, result.column("r")?);
    let (y_ref, psi_ref) = (reference.column("yO_ref")?, reference.column("psi_ref")?);
    let (vy_ref, r_ref) = (reference.column("vy_ref")?, reference.column("r_ref")?);
    let active = reference.column("active")?;

    let idx: Vec<usize> = (0..t.len()).filter(|&k| active[k] != 0.0).collect();
    let ey: Vec<f64> = idx.iter().map(|&k| y_ref[k] - y[k]).collect();
    let ep: Vec<f64> = idx.iter().map(|&k| psi_ref[k] - psi[k]).collect();
    let (rms_y, max_y) = rms_max(&ey);
    let (rms_psi, max_psi) = rms_max(&ep);

    let ex: Vec<f64> = (0..t.len()).map(|k| (vy[k] - vy_ref[k]).hypot(r[k] - r_ref[k])).collect();
    let pre_peak = (0..t.len()).filter(|&k| active[k] == 0.0).map(|k| ex[k]).fold(0.0f64, f64::max);
    let peak = if pre_peak > 0.0 { pre_peak } else { ex.iter().copied().fold(0.0, f64::max) };
    let threshold = SETTLE_FRACTION * peak;
    let mut settle_time = None;
    for &k in idx.iter().rev() {
        if ex[k] >= threshold {
            break;
        }
        settle_time = Some(t[k]);
    }
    Ok(Metrics {
        rms_y,
        max_y,
        rms_psi,
        max_psi,
        settle_time,
    })
}

/// Output of [`run_scenario`].
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub name: String,
    pub series: Table,
    pub reference: Table,
    pub metrics: Metrics,
    /// Final axle-equivalent fields `[front, rear]`, true and estimated.
    pub fields: [Vec<f64>; 2],
    pub fields_est: [Vec<f64>; 2],
}

/// Paths written by [`ScenarioResult::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFiles {
    pub series: PathBuf,
    pub reference: PathBuf,
    pub metrics: PathBuf,
    pub fields: PathBuf,
}

impl ScenarioResult {
    pub fn write(&self, dir: &Path) -> Result<OutputFiles> {
        fs::create_dir_all(dir)?;
        let files = OutputFiles {
            series: dir.join(format!("{}.csv", self.name)),
            reference: dir.join(format!("{}_reference.csv", self.name)),
            metrics: dir.join(format!("{}_metrics.json", self.name)),
            fields: dir.join(format!("{}_fields.csv", self.name)),
        };
        fs::write(&files.series, self.series.to_csv())?;
        fs::write(&files.reference, self.reference.to_csv())?;
        let json = serde_json::to_string_pretty(&self.metrics).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(&files.metrics, json + "\n")?;
        let mut buf = Vec::new();
        write_snapshot_csv(&mut buf, &self.fields[0], &self.fields[1], &self.fields_est[0], &self.fields_est[1])?;
        fs::write(&files.fields, buf)?;
        Ok(files)
    }
}

/// Closed-loop run: plant, seeded sensors, observer and output-feedback
/// controller. Gains are certified before the first step.
pub fn run_scenario(sc: &Scenario) -> Result<ScenarioResult> {
    sc.validate()?;
    let p = derive_params(&sc.vehicle, sc.vx)?;
    let mm = build_matrices(&p);
    let gains = sc.gains.build(&mm)?;
    validate_gains(&gains, &mm).ensure()?;

    let mut sensor_model = sc.sensors;
    sensor_model.seed = sc.seed.unwrap_or(0);
    let mut sensors = Sensors::new(&sensor_model, &p)?;

    let init = &sc.initial;
    let s0 = PlantState {
        vy: init.vy,
        r: init.r,
        y_o: init.y_o,
        psi: init.psi,
        ..PlantState::default()
    };
    let mut plant: Box<dyn Plant> = match sc.sim.plant_kind {
        PlantKind::LinearSingleTrack => Box::new(LinearPlant::new(&p, &sc.sim)?.with_state(s0)),
        PlantKind::NonlinearDoubleTrack => {
            Box::new(DoubleTrackPlant::new(&p, &sc.sim, &sc.double_track)?.with_state(s0))
        }
    };
    let mut observer = Observer::new(&p, &sc.sim, &gains)?.with_state(Vector2::from(init.x_hat));

    let mut series = Table::new(&SERIES_COLUMNS);
    let mut reference = Table::new(&REFERENCE_COLUMNS);
    let steps = sc.sim.steps();
    let dt = sc.sim.dt;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let s = *plant.state();
        // The path clock starts when the controller engages.
        let r = sc.reference.evaluate(s.y_o, s.psi, t - sc.activation, sc.vx)?;
        // Activation is judged on the step index to avoid drift in `t`.
        let active = t >= sc.activation - 0.5 * dt;
        let (cmd, applied) = if active {
            let c = output_feedback_controller(&observer, &r, &gains, &mm);
            (c, sensors.actuate(&c))
        } else {
            (Vector2::zeros(), Vector2::zeros())
        };
        let y = measure(plant.as_ref(), &applied, &mut sensors);
        let yf = plant.axle_forces();
        let (xh, yh) = (observer.x_hat(), observer.forces());
        series.rows.push(vec![
            t, s.vy, s.r, s.x_o, s.y_o, s.psi, yf[0], yf[1], applied[0], applied[1], y[0], y[1], xh[0], xh[1],
            yh[0], yh[1],
        ]);
        reference
            .rows
            .push(vec![t, r.y_o_ref, r.psi_ref, r.x_ref[0], r.x_ref[1], if active { 1.0 } else { 0.0 }]);
        if k == steps {
            break;
        }
        observer.step(&y, &cmd)?;
        plant.step(&applied)?;
    }
    let metrics = compute_metrics(&series, &reference)?;
    let est = observer.fields();
    Ok(ScenarioResult {
        name: sc.name.clone(),
        series,
        reference,
        metrics,
        fields: plant.axle_profiles(),
        fields_est: [est[0].values(), est[1].values()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(t: &[f64], y: &[f64], y_ref: &[f64]) -> (Table, Table) {
        let mut a = Table::new(&SERIES_COLUMNS);
        let mut b = Table::new(&REFERENCE_COLUMNS);
        for k in 0..t.len() {
            let mut row = vec![0.0; SERIES_COLUMNS.len()];
            row[0] = t[k];
            row[4] = y[k];
            row[5] = y[k];
            a.rows.push(row);
            b.rows.push(vec![t[k], y_ref[k], y_ref[k], 0.0, 0.0, 1.0]);
        }
        (a, b)
    }

    #[test]
    fn identical_series_give_zero_metrics() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.01).collect();
        let y: Vec<f64> = t.iter().map(|v| v.sin()).collect();
        let (a, b) = table(&t, &y, &y);
        let m = compute_metrics(&a, &b).unwrap();
        assert_eq!((m.rms_y, m.max_y, m.rms_psi, m.max_psi), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_offset() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let y = vec![0.0; 50];
        let (a, b) = table(&t, &y, &vec![0.1; 50]);
        let m = compute_metrics(&a, &b).unwrap();
        assert!((m.rms_y - 0.1).abs() < 1e-15 && (m.max_y - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sine_error_rms() {
        // Whole periods on a uniform grid: the discrete mean of sin^2 is 1/2.
        let n = 1000;
        let amp = 0.3;
        let t: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        let e: Vec<f64> = t.iter().map(|v| amp * (2.0 * std::f64::consts::PI * 3.0 * v).sin()).collect();
        let (a, b) = table(&t, &vec![0.0; n], &e);
        let m = compute_metrics(&a, &b).unwrap();
        assert!((m.rms_y - amp / 2f64.sqrt()).abs() < 1e-12);
        assert!(m.max_y >= m.rms_y);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let (a, mut b) = table(&[0.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]);
        b.rows.pop();
        assert!(compute_metrics(&a, &b).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = Table::new(&["a", "b"]);
        t.rows.push(vec![0.1 + 0.2, -1.234_567_890_123_456_7e-300]);
        t.rows.push(vec![f64::MAX, 1.0 / 3.0]);
        assert_eq!(Table::from_csv(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn presets_resolve_and_certify() {
        for name in PRESETS {
            let c = Config::preset(name).unwrap();
            let sc = c.scenario();
            sc.validate().unwrap();
            let p = c.params().unwrap();
            let mm = build_matrices(&p);
            validate_gains(&sc.gains.build(&mm).unwrap(), &mm).ensure().unwrap();
        }
        assert!(Config::preset("nope").is_err());
    }

    #[test]
    fn toml_layers_on_preset() {
        let c = Config::from_toml("[scenario]\npreset = \"avoidance\"\nseed = 9\n[sim]\ndt = 0.002\n").unwrap();
        assert_eq!(c.scenario.vx, 20.0);
        assert_eq!(c.scenario.seed, Some(9));
        assert_eq!(c.sim.dt, 0.002);
        assert_eq!(c.sim.plant_kind, PlantKind::NonlinearDoubleTrack);
        assert!(matches!(c.reference, ReferenceSpec::Sine { amplitude, .. } if amplitude == 2.0));
    }

    #[test]
    fn toml_round_trip() {
        let c = Config::preset("sine-mild").unwrap();
        assert_eq!(Config::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Config::from_toml("[sim]\nbogus = 1\n").is_err());
    }

    #[test]
    fn noisy_run_needs_seed() {
        let mut sc = Config::preset("shimmy").unwrap().scenario();
        sc.seed = None;
        assert!(matches!(run_scenario(&sc), Err(Error::Scenario(_))));
        sc.seed = Some(1);
        sc.sim.horizon = 1.0;
        assert!(run_scenario(&sc).is_err());
    }

    #[test]
    fn short_run_is_deterministic_and_reproducible_from_csv() {
        let mut sc = Config::preset("avoidance").unwrap().scenario();
        sc.sim.horizon = 0.6;
        let a = run_scenario(&sc).unwrap();
        let b = run_scenario(&sc).unwrap();
        assert_eq!(a.series.to_csv(), b.series.to_csv());
        let back = compute_metrics(
            &Table::from_csv(&a.series.to_csv()).unwrap(),
            &Table::from_csv(&a.reference.to_csv()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, a.metrics);
        assert_eq!(a.series.rows.len(), sc.sim.steps() + 1);
    }
}
