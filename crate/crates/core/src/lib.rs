//! Deposit-backed agreements in a finitely repeated prisoner's dilemma.
//!
//! Two players, Tom (moves `A`/`B`) and Jack (moves `C`/`D`), agree on a
//! sequence of stage outcomes. Each posts a deposit with an escrow that is
//! forfeited on deviation. This crate computes which agreements are worth
//! making, how large the deposits must be, and checks the result both
//! analytically and by playing matches.
//!
//! All arithmetic is exact.

pub mod deposit;
pub mod error;
pub mod escrow;
pub mod explorer;
pub mod fragment;
pub mod game;
pub mod rational;
pub mod verifier;

pub use deposit::{
    decompose, deposit_max, deposit_with_trailing, refund_schedule, DecomposePolicy, Decomposition,
    DecompositionReport, DepositPair, RefundLevel, RefundSchedule,
};
pub use error::{Error, Result};
pub use escrow::{
    run_match, EscrowState, Ledger, MoveEvent, Phase, Strategy, StrategyScript, Transcript,
};
pub use explorer::{enumerate, AgreementRow, CensusOptions, CensusReport, Threshold};
pub use fragment::{
    classify, fragment_deposit, DominanceMode, Fragment, FragmentCounts, FragmentType,
};
pub use game::{
    agreement_payoff, is_effective, nash_baseline, stage_payoff, Agreement, Composition, JackMove,
    PayoffMatrix, PayoffSummary, Player, StagePair, TomMove,
};
pub use rational::Rational;
pub use verifier::{
    exhaustive_oracle, minimal_deposits, one_shot_gains, verify, VerificationReport,
};
