use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no quadrature rule of degree {0} (supported: 1..=12)")]
    UnsupportedQuadratureDegree(usize),

    #[error("structured mesh needs a positive even n, got {0}")]
    OddMeshSize(usize),

    #[error("triangle index {0} out of range")]
    TriangleIndex(usize),

    #[error("refinement closure did not terminate after {0} sweeps")]
    ClosureDepth(usize),

    #[error("dof map does not match the mesh: {0}")]
    MapMismatch(String),

    #[error("unsupported space pair {0}")]
    SpacePair(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("evaluation at the singular point (origin)")]
    SingularPoint,

    #[error("Kellogg system did not converge; best residual {best_residual:.3e}")]
    NoConvergence { best_residual: f64 },

    #[error("adaptive loop {loop_index} failed after {} completed loops: {source}", partial.len())]
    Aborted {
        loop_index: usize,
        source: Box<Error>,
        partial: Vec<crate::estimator::ErrorReport>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
