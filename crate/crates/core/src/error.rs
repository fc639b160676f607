use thiserror::Error;

/// Errors produced by the mirror-array toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid plane: {0}")]
    InvalidPlane(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("point is at or behind the camera plane (depth {depth:.3e} m)")]
    BehindCamera { depth: f64 },

    #[error("pixel ({u:.2}, {v:.2}) lies outside the undistortion domain")]
    OutOfDomain { u: f64, v: f64 },

    #[error("undistortion diverged after {iterations} iterations (residual {residual:.3e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("minimum gap {min_gap} m leaves no room in a {cell} m cell")]
    InfeasibleSpacing { min_gap: f64, cell: f64 },

    #[error("footprint of mirror {mirror} is unbounded at depth {depth} m")]
    FootprintUnbounded { mirror: usize, depth: f64 },

    #[error("grid fit is underdetermined: {0}")]
    Underdetermined(String),

    #[error("initial design violates constraints: {0}")]
    InfeasibleStart(String),

    #[error("point is not visible via mirror {mirror}")]
    NotVisible { mirror: usize },

    #[error("normal equations are rank deficient for mirror {mirror}")]
    RankDeficient { mirror: usize },

    #[error("homography for view ({s}, {t}) is near-singular (condition {condition:.3e})")]
    SingularHomography { s: usize, t: usize, condition: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// An i/o failure on a known file; the cause is kept in the message only.
    #[error("{}: {err}", path.display())]
    File {
        path: std::path::PathBuf,
        err: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Divergence { .. }
            | Error::RankDeficient { .. }
            | Error::SingularHomography { .. }
            | Error::FootprintUnbounded { .. } => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
