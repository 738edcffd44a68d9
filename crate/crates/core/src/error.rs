use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("site {site} out of range for {n_spins} spins")]
    SiteOutOfRange { site: usize, n_spins: usize },

    #[error("unknown axis map `{0}`")]
    UnknownAxisMap(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("protocol {kind} requires parameter `{name}`")]
    MissingParameter {
        kind: &'static str,
        name: &'static str,
    },

    #[error("degenerate modulation: Omega0 equals Omega3 ({0} rad/us)")]
    DegenerateModulation(f64),

    #[error("time step {dt} us exceeds the sampling bound {bound} us (fastest frequency {omega} rad/us)")]
    TimeStepTooLarge { dt: f64, bound: f64, omega: f64 },

    #[error("norm drifted by {0:e} during propagation")]
    NormDrift(f64),

    #[error("unsupported pairing: {0}")]
    UnsupportedPairing(String),

    #[error("state dimension {got} does not match expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("no resonance minimum interior to the scanned range (minimum at edge x = {0})")]
    BracketingFailure(f64),

    #[error("protocol is not tuned to the target: nominal resonance {nominal} rad/us vs omega_l {omega_l} rad/us")]
    Untuned { nominal: f64, omega_l: f64 },

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("decay not observed within t_max = {0} us")]
    DecayNotObserved(f64),

    #[error("sampling interval {sample_dt} us aliases beat frequency {frequency} MHz (Nyquist {nyquist} MHz)")]
    Aliasing {
        sample_dt: f64,
        frequency: f64,
        nyquist: f64,
    },

    #[error("power cap exceeded: |Omega(t)| = {amplitude} rad/us > {cap} rad/us at t = {t} us")]
    PowerCap { amplitude: f64, cap: f64, t: f64 },

    #[error("at scan point x = {x}: {source}")]
    AtScanPoint {
        x: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_point(self, x: f64) -> Error {
        match self {
            e @ Error::AtScanPoint { .. } => e,
            e => Error::AtScanPoint {
                x,
                source: Box::new(e),
            },
        }
    }
}
