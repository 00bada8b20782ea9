use thiserror::Error;

#[derive(Debug, Error)]
pub enum OfalError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("cannot parse coordinate {0:?}")]
    Coordinate(String),

    #[error("server layout is empty")]
    EmptyLayout,

    #[error("server positions are unsorted at index {index}")]
    Unsorted { index: usize },

    #[error("duplicate server position at index {index}")]
    Duplicate { index: usize },

    #[error("too many servers: {count} (at most {max} supported)")]
    TooManyServers { count: usize, max: usize },

    #[error("expected {expected} capacities, found {found}")]
    CapacityCount { expected: usize, found: usize },

    #[error("non-positive capacity at server {index}")]
    NonPositiveCapacity { index: usize },

    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{requests} requests exceed total capacity {capacity}")]
    CapacityExceeded { requests: usize, capacity: u64 },

    #[error("server {server} assigned more than its capacity {capacity}")]
    CapacityViolated { server: usize, capacity: u32 },

    #[error("rule {rule} chose server {server}, which is not free")]
    RuleChoseFullServer { rule: String, server: usize },

    #[error("rule {rule} covers {rule_servers} servers but the instance has {servers}")]
    RuleMismatch {
        rule: String,
        rule_servers: usize,
        servers: usize,
    },

    #[error("enumeration guard exceeded: {what} ({size} > {limit})")]
    GuardExceeded {
        what: &'static str,
        size: u128,
        limit: u128,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hybrid precondition failed: {0}")]
    HybridPrecondition(String),
}

pub type Result<T, E = OfalError> = std::result::Result<T, E>;
