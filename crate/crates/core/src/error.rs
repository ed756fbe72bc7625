use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not unitary (max deviation of U†U from I {0:.3e})")]
    NotUnitary(f64),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("atom index {index} out of range for {count} atoms")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("atom {0} paired with itself")]
    SameAtom(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("time {t} µs outside segment of duration {duration} µs")]
    TimeOutOfSegment { t: f64, duration: f64 },
    #[error("time {t} µs outside schedule span [0, {total}] µs")]
    TimeOutOfSchedule { t: f64, total: f64 },
    #[error("truncation order {order} too small for modulation index {alpha} (need at least {required})")]
    TruncationTooSmall {
        order: usize,
        alpha: f64,
        required: usize,
    },
    #[error("unsupported atom count {0} (expected 1, 2 or 3)")]
    UnsupportedAtomCount(usize),
    #[error("integrator step size underflow at t = {t} µs (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),
    #[error("density matrix invariant violated at t = {t} µs: {what}")]
    InvariantViolation { t: f64, what: String },
    #[error("averaging window [{start}, {end}] outside trajectory span")]
    WindowOutOfRange { start: f64, end: f64 },
    #[error("unknown population label `{0}`")]
    UnknownLabel(String),
    #[error("Floquet propagator requires a dissipation-free pure FFM window")]
    DissipativeScheduleUnsupported,
    #[error("reference state has no overlap with any Floquet mode")]
    ZeroOverlap,
    #[error("probabilities not normalized (sum {0})")]
    NotNormalized(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fit did not converge: {0}")]
    NoConvergence(String),
    #[error("frequency {f} MHz outside model band [{lo}, {hi}] MHz")]
    FrequencyOutOfBand { f: f64, lo: f64, hi: f64 },
    #[error("target power {target} unreachable (open range ({lo}, {hi}))")]
    TargetUnreachable { target: f64, lo: f64, hi: f64 },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("compensation objective is flat at the starting point")]
    NoImprovement,
    #[error("sample {index} failed: {source}")]
    SampleFailed { index: usize, source: Box<Error> },
    #[error("failed to parse data: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
