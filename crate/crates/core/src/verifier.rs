//! Incentive check for an agreement backed by deposits.
//!
//! Play is assumed to fall back to mutual defection for good after any
//! departure from the agreement, and a departing player forfeits their
//! deposit. With that continuation fixed, backward induction reduces to one
//! comparison per stage and player: the gain from a single deviation against
//! the deposit at stake. Ties go to compliance.
//!
//! [`exhaustive_oracle`] is a separate, slower implementation that walks the
//! deviation game explicitly. It exists to cross-check [`verify`].

use serde::{Deserialize, Serialize};

use crate::deposit::DepositPair;
use crate::error::{Error, Result};
use crate::game::{Agreement, PayoffMatrix, Player, StagePair};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationGain {
    /// 1-based stage index.
    pub stage: usize,
    pub player: Player,
    /// Deviation value minus compliance value, before any forfeiture.
    pub gain: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub sufficient: bool,
    pub deposits: DepositPair,
    /// Gains exactly equal to the deposit.
    pub binding: Vec<DeviationGain>,
    /// Gains strictly above the deposit.
    pub violations: Vec<DeviationGain>,
    pub minimal: DepositPair,
}

/// Gain from a one-stage deviation at every stage, for both players, in
/// stage order (Tom before Jack within a stage).
pub fn one_shot_gains(ag: &Agreement, m: &PayoffMatrix) -> Vec<DeviationGain> {
    let stages = ag.stages();
    let n = stages.len();
    // suffix[k] = agreed payoffs from stage k+1 (0-based k) to the end
    let mut suffix = vec![(Rational::zero(), Rational::zero()); n + 1];
    for k in (0..n).rev() {
        let (t, j) = m.cell(stages[k]);
        suffix[k] = (&suffix[k + 1].0 + t, &suffix[k + 1].1 + j);
    }

    let mut gains = Vec::with_capacity(2 * n);
    for (k, &pair) in stages.iter().enumerate() {
        let after = n - k - 1;
        for player in Player::BOTH {
            let deviation = m.payoff_of(pair.deviated_by(player), player);
            let (nash, compliant) = match player {
                Player::Tom => (&m.g, &suffix[k].0),
                Player::Jack => (&m.h, &suffix[k].1),
            };
            gains.push(DeviationGain {
                stage: k + 1,
                player,
                gain: deviation + nash.times(after) - compliant,
            });
        }
    }
    gains
}

/// Per-player maximum one-shot gain, floored at zero.
pub fn minimal_deposits(ag: &Agreement, m: &PayoffMatrix) -> DepositPair {
    minimal_from_gains(&one_shot_gains(ag, m))
}

fn minimal_from_gains(gains: &[DeviationGain]) -> DepositPair {
    let mut out = DepositPair::zero();
    for g in gains {
        let slot = out.get_mut(g.player);
        if g.gain > *slot {
            *slot = g.gain.clone();
        }
    }
    out
}

pub fn verify(ag: &Agreement, dep: &DepositPair, m: &PayoffMatrix) -> VerificationReport {
    let gains = one_shot_gains(ag, m);
    let minimal = minimal_from_gains(&gains);
    let mut binding = Vec::new();
    let mut violations = Vec::new();
    for g in gains {
        let stake = dep.get(g.player);
        if g.gain > *stake {
            violations.push(g);
        } else if g.gain == *stake {
            binding.push(g);
        }
    }
    VerificationReport {
        sufficient: violations.is_empty(),
        deposits: dep.clone(),
        binding,
        violations,
        minimal,
    }
}

pub const ORACLE_LIMIT: usize = 12;

/// Money for each player at the end of one fully specified play.
#[derive(Clone)]
struct Ledger {
    tom: Rational,
    jack: Rational,
}

impl Ledger {
    fn credit(&mut self, pair: StagePair, m: &PayoffMatrix) {
        let (t, j) = m.cell(pair);
        self.tom += t;
        self.jack += j;
    }

    fn of(&self, p: Player) -> &Rational {
        match p {
            Player::Tom => &self.tom,
            Player::Jack => &self.jack,
        }
    }
}

/// Whether mutual compliance is a subgame-perfect path of the deviation
/// game. At each on-path stage both players choose to comply or to switch to
/// their other move; any switch forfeits the switcher's deposit and forces
/// mutual defection for the remaining stages. Stages are walked explicitly,
/// and every leaf's money is accumulated stage by stage.
pub fn exhaustive_oracle(ag: &Agreement, dep: &DepositPair, m: &PayoffMatrix) -> Result<bool> {
    if ag.len() > ORACLE_LIMIT {
        return Err(Error::HorizonTooLarge {
            n: ag.len(),
            limit: ORACLE_LIMIT,
        });
    }
    let start = Ledger {
        tom: Rational::zero(),
        jack: Rational::zero(),
    };
    Ok(on_path_value(ag.stages(), 0, start, dep, m).is_some())
}

/// Value of the subgame entered at stage `k` with nobody having deviated,
/// assuming both comply there and later. `None` when some player strictly
/// prefers to deviate somewhere in the subgame.
fn on_path_value(
    stages: &[StagePair],
    k: usize,
    so_far: Ledger,
    dep: &DepositPair,
    m: &PayoffMatrix,
) -> Option<Ledger> {
    if k == stages.len() {
        // nobody deviated: both stakes come back
        return Some(so_far);
    }
    let agreed = stages[k];

    let mut comply = so_far.clone();
    comply.credit(agreed, m);
    let comply_value = on_path_value(stages, k + 1, comply, dep, m)?;

    for player in Player::BOTH {
        let tom_switch = player == Player::Tom;
        let jack_switch = player == Player::Jack;
        let deviant =
            play_out_after_switch(stages, k, so_far.clone(), tom_switch, jack_switch, dep, m);
        if deviant.of(player) > comply_value.of(player) {
            return None;
        }
    }
    Some(comply_value)
}

/// Leaf money when the given players switch at stage `k` and play is forced
/// to mutual defection afterwards.
fn play_out_after_switch(
    stages: &[StagePair],
    k: usize,
    mut ledger: Ledger,
    tom_switch: bool,
    jack_switch: bool,
    dep: &DepositPair,
    m: &PayoffMatrix,
) -> Ledger {
    let agreed = stages[k];
    let tom = if tom_switch {
        agreed.tom().flipped()
    } else {
        agreed.tom()
    };
    let jack = if jack_switch {
        agreed.jack().flipped()
    } else {
        agreed.jack()
    };
    ledger.credit(StagePair::from_moves(tom, jack), m);
    for _ in k + 1..stages.len() {
        ledger.credit(StagePair::BD, m);
    }
    if tom_switch {
        ledger.tom -= &dep.tom;
    }
    if jack_switch {
        ledger.jack -= &dep.jack;
    }
    ledger
}
