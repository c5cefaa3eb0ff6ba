use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HkError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("rational value needs {bits} bits, budget is {budget}; rerun in float64 mode")]
    Overflow { bits: u64, budget: u64 },

    #[error("controller `{controller}` needs m = {expected}, instance has m = {got}")]
    WrongM {
        controller: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("mass placement needs {needed} strategic agents, only {got} available")]
    InsufficientM { needed: usize, got: usize },

    #[error("no valid spacing epsilon for component {component} within {halvings} halvings")]
    EpsilonFailure { component: usize, halvings: u32 },

    #[error("search would expand {branches} branches, cap is {cap}")]
    BudgetExceeded { branches: u64, cap: u64 },

    #[error("directive has {got} entries, expected {expected}")]
    DirectiveLength { expected: usize, got: usize },

    #[error("invariant `{property}` violated at t = {t}: {detail}")]
    MonitorViolation {
        property: &'static str,
        t: u64,
        detail: String,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = HkError> = std::result::Result<T, E>;
