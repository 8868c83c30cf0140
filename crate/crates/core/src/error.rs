use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("payload does not belong to {group}: {detail}")]
    PayloadMismatch { group: String, detail: String },

    #[error("operator norm power iteration did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("no canonical metric for {0}")]
    NoCanonicalMetric(String),

    #[error("empty ball: no element found within radius {radius}")]
    EmptyBall { radius: f64 },

    #[error("filtration level {level}: {reason}")]
    Filtration { level: i32, reason: String },

    #[error("chain infimum on an infinite group needs a working window")]
    NeedsWindow,

    #[error("measured sandwich ratio {ratio} exceeds 4")]
    SandwichRatio { ratio: f64 },

    #[error("metric is unbounded and no cap was supplied")]
    Unbounded,

    #[error("cannot embed {sub} into {parent}")]
    Embedding { sub: String, parent: String },

    #[error("metric invariant violated: {0}")]
    MetricInvariant(String),

    #[error("degenerate sampling: {0}")]
    DegenerateSampling(String),

    #[error("no square root: {0}")]
    NoRoot(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("contraction failed at step {step}: measured ratio {ratio}")]
    Contraction { step: usize, ratio: f64 },

    #[error("parameter needs chain depth {needed}, chain has depth {depth}")]
    DepthExceeded { needed: usize, depth: usize },

    #[error("word search exhausted its truncation ({explored} nodes) before reaching the target")]
    Unreachable { explored: usize },

    #[error("degenerate denominator: infimum outside the ball is {0}")]
    DegenerateDenominator(f64),

    #[error("witness replay mismatch at exponent {exponent}: recorded {recorded}, replayed {replayed}")]
    Replay {
        exponent: i64,
        recorded: f64,
        replayed: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
