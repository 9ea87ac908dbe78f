//! Unified error type for the toolkit.
//!
//! Every fallible operation returns [`Error`]. Variants are grouped by the
//! stage that produces them; [`Error::exit_code`] maps each group to a stable
//! process exit code so shell scripts can branch on the failure family.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario file missing, unparsable, or semantically invalid
    /// (empty parameter range, unknown keys, bad combinations).
    #[error("configuration error: {0}")]
    Config(String),

    /// Mesh construction or query failed (degenerate extents, zero
    /// subdivisions, inverted element, unknown boundary tag).
    #[error("mesh error: {0}")]
    Mesh(String),

    /// A deformation state left the admissible set of the material model,
    /// e.g. det F <= 0 under the compressible neo-Hookean law.
    #[error("inadmissible deformation state{}: det F = {det_f} <= 0", element_label(*.element))]
    InadmissibleState { det_f: f64, element: Option<usize> },

    /// Newton iteration exhausted its budget or diverged.
    #[error("Newton did not converge after {iters} iterations (last residual {last_residual:.3e})")]
    NonConvergence { iters: usize, last_residual: f64 },

    /// Linear solve failed: the tangent matrix is singular (or produced
    /// non-finite values) at the current state.
    #[error("singular tangent matrix: {0}")]
    SingularJacobian(String),

    /// A parameter sweep could not complete (invalid plan, first step failed).
    #[error("continuation error: {0}")]
    Continuation(String),

    /// Reduced-basis construction or evaluation failed (all-zero snapshots,
    /// dimension mismatch between basis and operator).
    #[error("reduction error: {0}")]
    Reduction(String),

    /// Stored offline artifacts do not match the scenario they are loaded
    /// for (mesh fingerprint mismatch, truncated or foreign file).
    #[error("stale or incompatible artifacts: {0}")]
    StaleArtifacts(String),

    /// Two diagrams were compared on different parameter grids.
    #[error("parameter grids do not match: {0}")]
    GridMismatch(String),

    /// Filesystem or serialization failure.
    #[error("i/o error: {0}")]
    Io(String),
}

fn element_label(element: Option<usize>) -> String {
    match element {
        Some(e) => format!(" in element {e}"),
        None => String::new(),
    }
}

impl Error {
    /// Stable exit code per failure family, used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Mesh(_) => 3,
            Error::InadmissibleState { .. } => 4,
            Error::NonConvergence { .. } | Error::SingularJacobian(_) | Error::Continuation(_) => 5,
            Error::Reduction(_) => 6,
            Error::StaleArtifacts(_) | Error::GridMismatch(_) => 7,
            Error::Io(_) => 8,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
