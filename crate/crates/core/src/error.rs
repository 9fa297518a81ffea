use thiserror::Error;

/// Errors surfaced by the simulation and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller-side mistake: bad argument, dimension mismatch, out-of-range parameter.
    #[error("input error: {0}")]
    Input(String),

    /// Inconsistent configuration (mode/flag mismatch, missing constant, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested combination is not supported by the library.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// Non-finite value produced while stepping a chain. Carries the last
    /// valid state so a partial run can be reported.
    #[error("numeric fault at step {step} (gamma = {gamma}): {context}; last state {state:?}")]
    Numeric {
        context: String,
        state: Vec<f64>,
        gamma: f64,
        step: u64,
    },

    /// A hard resource limit was exceeded (e.g. Poisson intensity overflow).
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// A numeric integral diverged; reported as hypothesis-failure evidence.
    #[error("divergent integral while computing {what}: partial sum {partial:e}")]
    Divergent { what: String, partial: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
