use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row} of the kernel sums to {sum}, expected 1")]
    NonStochastic { row: usize, sum: f64 },
    #[error("detailed balance fails between {x} and {y} by {defect:e}")]
    NotReversible { x: usize, y: usize, defect: f64 },
    #[error("the chain is not irreducible")]
    NotIrreducible,
    #[error("the reflected chain on {side} is not irreducible")]
    NotIrreducibleRestricted { side: &'static str },
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("survival probability {survival:e} is below 1e-300")]
    SurvivalUnderflow { survival: f64 },
    #[error("{quantity} is not monotone in lambda near lambda = {lambda}")]
    MonotonicityViolation { quantity: &'static str, lambda: f64 },
    #[error("not a unit flow: conservation defect {defect:e}")]
    NotUnitFlow { defect: f64 },
    #[error("flow charges the edge ({from}, {to}) which has zero conductance")]
    FlowOffSupport { from: usize, to: usize },
    #[error("bound not applicable: {0}")]
    Inapplicable(String),
    #[error("bad partition: {0}")]
    BadPartition(String),
    #[error("xi = {xi} is not below 1")]
    XiTooLarge { xi: f64 },
    #[error("trajectory exceeded the budget of {budget} clock rings")]
    StepBudgetExceeded { budget: u64 },
    #[error("{what} is too large: {size} exceeds the limit {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("no double well for beta = {beta}, h = {h}")]
    NoDoubleWell { beta: f64, h: f64 },
    #[error("bad geometry: {0}")]
    BadGeometry(String),
    #[error("power iteration did not converge after {iterations} steps")]
    NoConvergence { iterations: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
