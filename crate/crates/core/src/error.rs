use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("component mismatch: expected {expected}, found {found}")]
    ComponentMismatch { expected: usize, found: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported norm exponent r = {0}")]
    UnsupportedExponent(f64),

    #[error("eigensolver failed at wavevector {0:?}")]
    EigenFailure([f64; 3]),

    #[error("non-finite value at t = {time} (last valid state kept)")]
    NonFinite { time: f64 },

    #[error("blow-up detected at t = {time}: norm {norm:.3e} exceeds {limit:.3e}")]
    BlowUp { time: f64, norm: f64, limit: f64 },

    #[error("CFL number {cfl:.3} exceeds 1 at t = {time}")]
    CflViolation { time: f64, cfl: f64 },

    #[error("time {time} outside forcing window [{start}, {end}]")]
    OutsideWindow { time: f64, start: f64, end: f64 },

    #[error("density argument 1 + delta*b = {value:.6e} is not positive at grid point {position:?}")]
    NonPositiveDensity { value: f64, position: [usize; 3] },

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("config: {0}")]
    Config(String),

    #[error("sweep aborted after {} records: {source}", partial.len())]
    SweepAborted {
        partial: Vec<crate::experiment::SweepRecord>,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
