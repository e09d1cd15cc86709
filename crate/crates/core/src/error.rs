use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "Hilbert space of {n_sites} sites x {levels} levels has dimension {dim}, above the cap of {cap}; \
         lower levels_per_site or raise the cap"
    )]
    DimensionCap {
        n_sites: usize,
        levels: usize,
        dim: usize,
        cap: usize,
    },

    #[error("invalid Fock space: {0}")]
    InvalidSpace(String),

    #[error("site index {site} out of range for a space of {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("operation requires {expected} sites, got {got}")]
    UnsupportedSiteCount { expected: usize, got: usize },

    #[error("operator dimension {got} does not match space dimension {expected}")]
    SizeMismatch { expected: usize, got: usize },

    #[error(
        "frequency {freq_ghz:.6} GHz is at or below the waveguide cutoff {cutoff_ghz:.6} GHz \
         (evanescent regime is not modeled)"
    )]
    BelowCutoff { freq_ghz: f64, cutoff_ghz: f64 },

    #[error("no decoherence-free frequency found above cutoff: {0}")]
    NoRoot(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "correlated decay matrix has eigenvalue {min_eig:.3e} rad/s below the tolerance {tol:.3e}; \
         the Markovian waveguide model is not valid for this configuration"
    )]
    NotPositive { min_eig: f64, tol: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("integrator step size underflow at t = {t:.6e} s (h = {h:.3e} s)")]
    StepUnderflow { t: f64, h: f64 },

    #[error("trace drifted by {drift:.3e} at t = {t:.6e} s")]
    TraceDrift { t: f64, drift: f64 },

    #[error(
        "probe saturates the emitters (max <n> = {max_occupation:.4} >= {limit}); reduce the probe amplitude"
    )]
    Saturation { max_occupation: f64, limit: f64 },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("closed-form coefficient is singular for U = 0; use the harmonic (U = 0) collective states instead")]
    SingularCoefficient,

    #[error("adiabatic elimination undefined: both the detuning and the decay of the eliminated level vanish")]
    UndefinedRegime,

    #[error("ambiguous assignment for state {label}: candidates {candidates:?}")]
    AmbiguousAssignment {
        label: String,
        candidates: Vec<(usize, f64)>,
    },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by the user's input rather than by numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidParameter(_)
                | Error::DimensionCap { .. }
                | Error::InvalidSpace(_)
                | Error::SiteOutOfRange { .. }
                | Error::UnsupportedSiteCount { .. }
                | Error::BelowCutoff { .. }
        )
    }
}
