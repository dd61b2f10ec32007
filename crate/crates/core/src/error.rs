use thiserror::Error;

/// Errors produced while configuring or running a simulation.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("generation failed: {0}")]
    Generation(String),

    /// The stacked channel rows of a multi-user group are (numerically) rank deficient.
    #[error("degenerate user selection: channel stack of {users} users is rank deficient")]
    DegenerateSelection { users: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("drop {drop}: {source}")]
    Drop {
        drop: usize,
        #[source]
        source: Box<SimError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
