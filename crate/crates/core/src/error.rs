use thiserror::Error;

/// Errors produced by construction, configuration, and integration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "fock truncation too small: nbar = {nbar} leaves tail weight \
         {tail:.3e} above fock_dim = {fock_dim}; need fock_dim >= {required}"
    )]
    TruncationTooSmall {
        nbar: f64,
        fock_dim: usize,
        tail: f64,
        required: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "detuning too close to an atomic resonance: |Delta| and |Delta - omega_f| \
         must both exceed 2*pi*1 GHz (got {delta_hz:.3e} Hz from the nearer pole)"
    )]
    PoleProximity { delta_hz: f64 },

    #[error("no gate time root in detuning bracket: attainable t_g range is [{t_min:.3e}, {t_max:.3e}] s")]
    NoRoot { t_min: f64, t_max: f64 },

    #[error("integration failure: step size underflow at t = {t_reached:.6e} s of {duration:.6e} s")]
    StepUnderflow { t_reached: f64, duration: f64 },

    #[error("integration failure in shot {shot}: {source}")]
    ShotFailure {
        shot: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("singular readout confusion matrix (epsilon = {0})")]
    SingularConfusion(f64),

    #[error("fit degeneracy: {0}")]
    FitDegeneracy(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
