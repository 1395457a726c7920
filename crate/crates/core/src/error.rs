use thiserror::Error;

use crate::domain::Finding;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("loss `{loss}` cannot be evaluated on {point} points")]
    IncompatibleVariant { loss: String, point: String },

    #[error("KL divergence undefined: reference has zero mass at index {index} where the argument is positive")]
    KlUndefined { index: usize },

    #[error("coverage level gamma = {0} is outside (0, 1)")]
    InvalidGamma(f64),

    #[error("confidence parameter eta = {0} is outside (0, 1)")]
    InvalidEta(f64),

    #[error("quantile level {0} is outside the admissible range")]
    AlphaOutOfRange(f64),

    #[error("sub-Gaussian parameter sigma must be present and positive")]
    NonpositiveSigma,

    #[error("confidence-set family {family} cannot wrap a {point} center")]
    IncompatibleHint { family: String, point: String },

    #[error("invalid parameter point: {0}")]
    InvalidPoint(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("certified slack {slack:e} exceeds the cap {cap:e}")]
    MeshTooCoarse { slack: f64, cap: f64 },

    #[error("scenario `{0}` has no second simulator estimate")]
    MissingSecondSimulator(String),

    #[error("pairwise comparison requires one simulator budget k across all scenarios")]
    MixedBudgets,

    #[error("dataset failed validation with {} finding(s)", .0.len())]
    InvalidDataset(Vec<Finding>),

    #[error("scenario `{id}`: {source}")]
    Scenario {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("quantile curve must contain at least one finite value")]
    EmptyCurve,
}

impl Error {
    pub(crate) fn in_scenario(self, id: &str) -> Self {
        match self {
            Error::Scenario { .. } => self,
            other => Error::Scenario {
                id: id.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, looking through scenario wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Scenario { source, .. } => source.root(),
            other => other,
        }
    }
}
