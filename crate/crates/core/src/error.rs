use thiserror::Error;

use crate::fixedpoint::FixedPointResult;

pub type Result<T> = std::result::Result<T, RgError>;

#[derive(Debug, Error)]
pub enum RgError {
    #[error("site {site} outside 1..={max}")]
    SiteOutOfRange { site: usize, max: usize },

    #[error("parameter {name} = {value} out of range: {expected}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{count} configurations exceed the enumeration budget of {budget}")]
    ConfigurationBudget { count: f64, budget: f64 },

    #[error("tail containment violated: {0}")]
    TailContainment(String),

    #[error("projection ill-conditioned (Gram condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("normalizer diverges: integrand does not decay at the grid edge")]
    NormalizerDivergence,

    #[error("rescaled support exceeds the grid (mass {lost_mass:.3e} outside)")]
    ResolutionLoss { lost_mass: f64 },

    #[error("base density is not a fixed point (L1 residual {residual:.3e})")]
    NotAFixedPoint { residual: f64 },

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("Newton stalled at L1 residual {:.3e}", best.residual_l1)]
    NewtonStall { best: Box<FixedPointResult> },

    #[error("no sign change of {0}")]
    NoSignChange(String),

    #[error("both family endpoints classify as {0}")]
    SameClassificationAtEndpoints(String),

    #[error("probe at t = {t} was undecided within the step budget")]
    UndecidedProbe { t: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),
}
