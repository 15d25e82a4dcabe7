use thiserror::Error;

use crate::fragment::FragmentType;
use crate::game::{MatrixViolation, Player};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("not a Prisoner's Dilemma: {}", join_violations(.0))]
    InvalidMatrix(Vec<MatrixViolation>),

    #[error("agreement has no stages")]
    EmptyAgreement,

    #[error("fragment has no stages")]
    EmptyFragment,

    #[error("fragment contains a B<->D stage")]
    NashStageInFragment,

    #[error("no deposit formula for {0} fragments")]
    NoDepositFormula(FragmentType),

    #[error("fragment {0} is not in canonical stage order")]
    NonCanonicalOrder(String),

    #[error("decomposition shape: {0}")]
    DecompositionShape(String),

    #[error(
        "{player} cannot be protected: composition {composition} has no dominant fragment for them"
    )]
    Unprotectable { player: Player, composition: String },

    #[error("no admissible decomposition for composition {0}")]
    NoAdmissibleDecomposition(String),

    #[error("horizon {n} exceeds the limit of {limit} stages")]
    HorizonTooLarge { n: usize, limit: usize },

    #[error("deposit {deposit} is below the schedule's initial level {required}")]
    DepositBelowSchedule { deposit: String, required: String },

    #[error("{player} returned illegal move {symbol:?} at stage {stage}")]
    IllegalMove {
        player: Player,
        symbol: char,
        stage: usize,
    },

    #[error("escrow already settled")]
    AlreadySettled,

    #[error("escrow cannot {action} in phase {phase}")]
    InvalidPhase { action: &'static str, phase: String },

    #[error("parse error: {0}")]
    Parse(String),
}

fn join_violations(v: &[MatrixViolation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
