use thiserror::Error;

/// Errors raised by the simulation and analysis modules.
///
/// Messages are prefixed with the module that produced them so the CLI can
/// surface them verbatim as one-line diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vehicle: invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("vehicle: no equilibrium at the critical speed vx = {vx} m/s")]
    CriticalSpeed { vx: f64 },

    #[error("tire: CFL number {courant:.4} exceeds 1 (dt = {dt}, transport speed = {speed})")]
    Cfl { courant: f64, dt: f64, speed: f64 },

    #[error("tire: {0}")]
    Tire(String),

    #[error("plant: state norm {norm:.3e} exceeded blow-up bound {bound:.1e} at t = {t:.4} s")]
    BlowUp { t: f64, norm: f64, bound: f64 },

    #[error("freq: {0}")]
    Frequency(String),

    #[error("control: {0}")]
    Control(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
