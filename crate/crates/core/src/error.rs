use thiserror::Error;

#[derive(Debug, Error)]
pub enum CmdpError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("infeasible transition box at (h={h}, s={s}, a={a}): sum(lower)={lower_sum}, sum(upper)={upper_sum}")]
    InfeasibleBox {
        h: usize,
        s: usize,
        a: usize,
        lower_sum: f64,
        upper_sum: f64,
    },

    #[error("box row does not intersect the simplex: sum(lower)={lower_sum}, sum(upper)={upper_sum}")]
    InfeasibleRow { lower_sum: f64, upper_sum: f64 },

    #[error("the constrained problem is infeasible (phase-one residual {residual})")]
    Infeasible { residual: f64 },

    #[error("inner solver failed in episode {episode}: {reason}")]
    InnerSolver { episode: usize, reason: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CmdpError>;
