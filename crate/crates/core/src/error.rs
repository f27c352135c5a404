use thiserror::Error;

pub type Result<T> = std::result::Result<T, XcfError>;

#[derive(Debug, Error)]
pub enum XcfError {
    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("ghost layers are not filled")]
    GhostsUnfilled,

    #[error("bad magic")]
    BadMagic,

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite value in snapshot at node {node}")]
    NonFiniteSnapshot { node: usize },

    #[error("metric is not positive definite at node ({i}, {j}, {k})")]
    NotPositiveDefinite { i: usize, j: usize, k: usize },

    #[error("Einstein tensor is singular at node {node}")]
    DegenerateEinstein { node: usize },

    #[error("adapted-gauge violated: |g_3a| = {value:e} on the {face} face")]
    AdaptedGaugeViolated { face: &'static str, value: f64 },

    #[error("dirichlet-exact mode needs an exact-solution hook")]
    MissingExactSolution,

    #[error("invalid lambda description: {0}")]
    InvalidLambda(String),

    #[error("eigenvalue iteration did not converge for matrix {0}")]
    EigenNoConvergence(String),

    #[error("gauge drift out of chart at node ({i}, {j}, {k})")]
    GaugeDrift { i: usize, j: usize, k: usize },

    #[error("inverse-map Newton iteration failed at node ({i}, {j}, {k})")]
    NewtonFailed { i: usize, j: usize, k: usize },

    #[error("gauge map is not orientation preserving at node ({i}, {j}, {k})")]
    SingularJacobian { i: usize, j: usize, k: usize },

    #[error("non-finite {what}")]
    NonFinite { what: String },

    #[error("space form evaluated outside its lifetime (t = {t})")]
    OutsideLifetime { t: f64 },

    #[error("probe rejected: {0}")]
    ProbeRejected(String),

    #[error("invalid time interval: {0}")]
    InvalidTime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
