use thiserror::Error;

use crate::alphabet_model::MembershipReport;
use crate::experiments::GridPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("distribution pair is outside the model class: {0}")]
    OutsideModelClass(MembershipReport),

    #[error("enumeration needs about {estimated:.3e} histogram triples, budget is {budget:.3e}")]
    EnumerationBudget { estimated: f64, budget: f64 },

    #[error("every grid point observed zero errors; censored points: {}", fmt_points(.censored))]
    AllCensored { censored: Vec<GridPoint> },

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
}

impl Error {
    pub(crate) fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for the statistical degeneracies a sweep can end in.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::AllCensored { .. } | Error::DegenerateGrid(_))
    }
}

fn fmt_points(points: &[GridPoint]) -> String {
    points
        .iter()
        .map(|p| format!("(m={}, N={}, n={})", p.m, p.n_train, p.n_test))
        .collect::<Vec<_>>()
        .join(", ")
}
