//! Error type shared across the crate.

use crate::mdp::ErgodicityVerdict;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("chain is not ergodic (verdict: {0:?})")]
    NotErgodic(ErgodicityVerdict),

    #[error("stationary distribution did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error(
        "gamma = 1 requires a rho-centered input; center the reward first (rho-mean = {0:.3e})"
    )]
    CenterRewardFirst(f64),

    #[error("rank-deficient columns: Gram condition number {cond:.3e} exceeds {limit:.1e}")]
    RankDeficient { cond: f64, limit: f64 },

    #[error("feature set is not L2(rho)-orthonormal: Gram deviation {0:.3e}")]
    NotOrthonormal(f64),

    #[error("closed form requires a deterministic environment")]
    StochasticEnvironment,

    #[error("dimension {d} out of range 1..={max}")]
    DimensionOutOfRange { d: usize, max: usize },

    #[error("temperature {0} below the minimum {1:.1e}")]
    InvalidTemperature(f64, f64),

    #[error(
        "policy puts mass on an action the reference policy excludes at state {0}: KL is infinite"
    )]
    InfinitePenalty(usize),

    #[error("weight vector has a non-positive entry at index {0}")]
    ZeroWeight(usize),

    #[error("matrix is not symmetric: max asymmetry {0:.3e}")]
    NotSymmetric(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
