//! Deterministic escrow protocol.
//!
//! A third party takes both deposits, watches each round, and on the first
//! deviation moves every deviator's held deposit to a sink and forces mutual
//! defection for the rest of the match. With a refund schedule, tranches are
//! paid back at fragment boundaries while nobody has deviated. Whatever is
//! still held for a compliant player is refunded at settlement.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deposit::{DepositPair, RefundSchedule};
use crate::error::{Error, Result};
use crate::game::{Agreement, JackMove, PayoffMatrix, Player, StagePair, TomMove};
use crate::rational::Rational;
use crate::verifier::one_shot_gains;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Collecting,
    /// Next stage to be played (1-based).
    Playing {
        stage: usize,
    },
    Reverted {
        since_stage: usize,
    },
    Settled,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Collecting => f.write_str("collecting"),
            Phase::Playing { stage } => write!(f, "playing(stage {stage})"),
            Phase::Reverted { since_stage } => write!(f, "reverted(since stage {since_stage})"),
            Phase::Settled => f.write_str("settled"),
        }
    }
}

/// Money that passed through the escrow. `deposits_in = refunds_out +
/// forfeits` for each player, and the sink holds exactly the forfeits.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ledger {
    pub deposits_in: DepositPair,
    pub refunds_out: DepositPair,
    pub forfeits: DepositPair,
    pub sink: Rational,
}

impl Ledger {
    pub fn is_conserved(&self) -> bool {
        self.deposits_in == self.refunds_out.plus(&self.forfeits)
            && self.sink == &self.forfeits.tom + &self.forfeits.jack
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscrowState {
    phase: Phase,
    horizon: usize,
    held: DepositPair,
    schedule: Option<RefundSchedule>,
    forfeited_to_sink: Rational,
    deviated: [bool; 2],
    ledger: Ledger,
}

fn idx(p: Player) -> usize {
    match p {
        Player::Tom => 0,
        Player::Jack => 1,
    }
}

impl EscrowState {
    pub fn new(
        deposits: DepositPair,
        schedule: Option<RefundSchedule>,
        horizon: usize,
    ) -> Result<Self> {
        if !deposits.is_non_negative() {
            return Err(Error::Parse(format!("negative deposit {deposits}")));
        }
        if let Some(s) = &schedule {
            if !deposits.covers(s.initial()) {
                return Err(Error::DepositBelowSchedule {
                    deposit: deposits.to_string(),
                    required: s.initial().to_string(),
                });
            }
        }
        Ok(EscrowState {
            phase: Phase::Collecting,
            horizon,
            held: deposits,
            schedule,
            forfeited_to_sink: Rational::zero(),
            deviated: [false; 2],
            ledger: Ledger::default(),
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn held(&self) -> &DepositPair {
        &self.held
    }

    pub fn forfeited_to_sink(&self) -> &Rational {
        &self.forfeited_to_sink
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn deviated(&self, p: Player) -> bool {
        self.deviated[idx(p)]
    }

    fn bad_phase(&self, action: &'static str) -> Error {
        Error::InvalidPhase {
            action,
            phase: self.phase.to_string(),
        }
    }

    /// Take both deposits and open stage 1.
    pub fn collect(&mut self) -> Result<()> {
        if self.phase != Phase::Collecting {
            return Err(self.bad_phase("collect"));
        }
        self.ledger.deposits_in = self.held.clone();
        self.phase = Phase::Playing { stage: 1 };
        Ok(())
    }

    /// The pair both players must play at the next stage.
    pub fn prescribed(&self, agreed: StagePair) -> StagePair {
        match self.phase {
            Phase::Reverted { .. } => StagePair::BD,
            _ => agreed,
        }
    }

    /// Record the outcome of `stage`, given who departed from the
    /// prescription.
    pub fn record(&mut self, stage: usize, tom_deviated: bool, jack_deviated: bool) -> Result<()> {
        match self.phase {
            Phase::Playing { stage: expected } if expected == stage && stage <= self.horizon => {}
            // reversion is exogenous: the forced pair cannot be departed from
            Phase::Reverted { .. } if !tom_deviated && !jack_deviated => return Ok(()),
            _ => return Err(self.bad_phase("record a stage")),
        }
        if tom_deviated || jack_deviated {
            for (p, dev) in [(Player::Tom, tom_deviated), (Player::Jack, jack_deviated)] {
                if dev {
                    let lost = std::mem::take(self.held.get_mut(p));
                    *self.ledger.forfeits.get_mut(p) += &lost;
                    self.forfeited_to_sink += &lost;
                    self.ledger.sink += lost;
                    self.deviated[idx(p)] = true;
                }
            }
            self.phase = Phase::Reverted { since_stage: stage };
            return Ok(());
        }
        if let Some(s) = &self.schedule {
            let level = s.remaining_after(stage).clone();
            for p in Player::BOTH {
                let held = self.held.get_mut(p);
                if *level.get(p) < *held {
                    let tranche = &*held - level.get(p);
                    *self.ledger.refunds_out.get_mut(p) += &tranche;
                    *held = level.get(p).clone();
                }
            }
        }
        self.phase = Phase::Playing { stage: stage + 1 };
        Ok(())
    }

    /// Pay back whatever is still held (only compliant players have anything
    /// left) and close the escrow.
    pub fn settle(&mut self) -> Result<Ledger> {
        match self.phase {
            Phase::Settled => return Err(Error::AlreadySettled),
            Phase::Collecting => return Err(self.bad_phase("settle")),
            Phase::Playing { stage } if stage <= self.horizon => {
                return Err(self.bad_phase("settle"))
            }
            _ => {}
        }
        for p in Player::BOTH {
            let rest = std::mem::take(self.held.get_mut(p));
            *self.ledger.refunds_out.get_mut(p) += rest;
        }
        self.phase = Phase::Settled;
        Ok(self.ledger.clone())
    }
}

/// What a strategy sees before choosing a move.
pub struct MoveContext<'a> {
    pub stage: usize,
    pub player: Player,
    /// This player's agreed move symbol at this stage.
    pub agreed: char,
    pub history: &'a [MoveEvent],
    /// Deposit currently held for this player.
    pub held: &'a Rational,
    pub agreement: &'a Agreement,
    pub matrix: &'a PayoffMatrix,
}

/// A move chooser. Returns a move symbol: `A`/`B` for Tom, `C`/`D` for Jack.
pub trait Strategy {
    fn choose(&mut self, ctx: &MoveContext<'_>) -> char;
}

fn other_symbol(c: char) -> char {
    match c {
        'A' => 'B',
        'B' => 'A',
        'C' => 'D',
        'D' => 'C',
        x => x,
    }
}

#[derive(Debug, Clone)]
pub enum StrategyScript {
    Compliant,
    /// Depart from the agreement at this 1-based stage.
    DefectAt(usize),
    /// Depart whenever the one-shot gain strictly exceeds the held deposit.
    BestResponse {
        gains: Option<Vec<(Rational, Rational)>>,
    },
    RandomSeeded {
        seed: u64,
        p_defect: f64,
        rng: ChaCha8Rng,
    },
}

impl StrategyScript {
    pub fn best_response() -> Self {
        StrategyScript::BestResponse { gains: None }
    }

    pub fn random(seed: u64, p_defect: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_defect) {
            return Err(Error::Parse(format!(
                "defection probability {p_defect} outside [0, 1]"
            )));
        }
        Ok(StrategyScript::RandomSeeded {
            seed,
            p_defect,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// `compliant`, `defect-at:K`, `best-response`, or `random:P` (seeded
    /// with `seed`).
    pub fn parse(s: &str, seed: u64) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.as_str(), None),
        };
        let bad = || Error::Parse(format!("unknown strategy {s:?}"));
        match (name, arg) {
            ("compliant", None) => Ok(StrategyScript::Compliant),
            ("best-response", None) => Ok(StrategyScript::best_response()),
            ("defect-at", Some(k)) => {
                let k = k.parse::<usize>().map_err(|_| bad())?;
                if k == 0 {
                    return Err(Error::Parse("defect-at stages are 1-based".into()));
                }
                Ok(StrategyScript::DefectAt(k))
            }
            ("random", Some(p)) => {
                StrategyScript::random(seed, p.parse::<f64>().map_err(|_| bad())?)
            }
            _ => Err(bad()),
        }
    }
}

impl FromStr for StrategyScript {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyScript::parse(s, 0)
    }
}

impl Strategy for StrategyScript {
    fn choose(&mut self, ctx: &MoveContext<'_>) -> char {
        match self {
            StrategyScript::Compliant => ctx.agreed,
            StrategyScript::DefectAt(k) => {
                if ctx.stage == *k {
                    other_symbol(ctx.agreed)
                } else {
                    ctx.agreed
                }
            }
            StrategyScript::BestResponse { gains } => {
                let gains = gains.get_or_insert_with(|| {
                    let all = one_shot_gains(ctx.agreement, ctx.matrix);
                    all.chunks(2)
                        .map(|c| (c[0].gain.clone(), c[1].gain.clone()))
                        .collect()
                });
                let (tom, jack) = &gains[ctx.stage - 1];
                let gain = match ctx.player {
                    Player::Tom => tom,
                    Player::Jack => jack,
                };
                if gain > ctx.held {
                    other_symbol(ctx.agreed)
                } else {
                    ctx.agreed
                }
            }
            StrategyScript::RandomSeeded { p_defect, rng, .. } => {
                if rng.random_bool(*p_defect) {
                    other_symbol(ctx.agreed)
                } else {
                    ctx.agreed
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveEvent {
    pub stage: usize,
    pub prescribed: StagePair,
    pub tom_move: TomMove,
    pub jack_move: JackMove,
    pub tom_compliant: bool,
    pub jack_compliant: bool,
    /// Game payoffs accumulated through this stage.
    pub running_payoffs: (Rational, Rational),
    pub held: DepositPair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub events: Vec<MoveEvent>,
    pub ledger: Ledger,
}

impl Transcript {
    /// Game payoffs over the whole match.
    pub fn payoffs(&self) -> (Rational, Rational) {
        self.events
            .last()
            .map(|e| e.running_payoffs.clone())
            .unwrap_or_default()
    }

    /// Game payoffs minus forfeited deposits.
    pub fn net(&self) -> (Rational, Rational) {
        let (t, j) = self.payoffs();
        (
            t - &self.ledger.forfeits.tom,
            j - &self.ledger.forfeits.jack,
        )
    }

    /// One event per line, then the ledger.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("serializable event"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.ledger).expect("serializable ledger"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        let lines: Vec<&str> = s.lines().filter(|l| !l.trim().is_empty()).collect();
        let (last, body) = lines
            .split_last()
            .ok_or_else(|| Error::Parse("empty transcript".into()))?;
        let parse_err = |e: serde_json::Error| Error::Parse(e.to_string());
        let events = body
            .iter()
            .map(|l| serde_json::from_str(l).map_err(parse_err))
            .collect::<Result<Vec<MoveEvent>>>()?;
        let ledger = serde_json::from_str(last).map_err(parse_err)?;
        Ok(Transcript { events, ledger })
    }
}

fn tom_from_symbol(c: char, stage: usize) -> Result<TomMove> {
    match c {
        'A' => Ok(TomMove::A),
        'B' => Ok(TomMove::B),
        _ => Err(Error::IllegalMove {
            player: Player::Tom,
            symbol: c,
            stage,
        }),
    }
}

fn jack_from_symbol(c: char, stage: usize) -> Result<JackMove> {
    match c {
        'C' => Ok(JackMove::C),
        'D' => Ok(JackMove::D),
        _ => Err(Error::IllegalMove {
            player: Player::Jack,
            symbol: c,
            stage,
        }),
    }
}

/// Play one match under escrow.
pub fn run_match(
    ag: &Agreement,
    deposits: &DepositPair,
    tom: &mut dyn Strategy,
    jack: &mut dyn Strategy,
    m: &PayoffMatrix,
    refunds: Option<&RefundSchedule>,
) -> Result<Transcript> {
    let mut escrow = EscrowState::new(deposits.clone(), refunds.cloned(), ag.len())?;
    escrow.collect()?;
    let mut events: Vec<MoveEvent> = Vec::with_capacity(ag.len());
    let mut running = (Rational::zero(), Rational::zero());

    for (k, &agreed) in ag.stages().iter().enumerate() {
        let stage = k + 1;
        let prescribed = escrow.prescribed(agreed);
        let (tom_move, jack_move) =
            if prescribed == agreed && !matches!(escrow.phase(), Phase::Reverted { .. }) {
                let ctx = |player, agreed_symbol, held| MoveContext {
                    stage,
                    player,
                    agreed: agreed_symbol,
                    history: &events,
                    held,
                    agreement: ag,
                    matrix: m,
                };
                let t = tom.choose(&ctx(Player::Tom, agreed.tom().symbol(), &escrow.held().tom));
                let j = jack.choose(&ctx(
                    Player::Jack,
                    agreed.jack().symbol(),
                    &escrow.held().jack,
                ));
                (tom_from_symbol(t, stage)?, jack_from_symbol(j, stage)?)
            } else {
                (prescribed.tom(), prescribed.jack())
            };
        let tom_compliant = tom_move == prescribed.tom();
        let jack_compliant = jack_move == prescribed.jack();
        escrow.record(stage, !tom_compliant, !jack_compliant)?;

        let (t, j) = m.cell(StagePair::from_moves(tom_move, jack_move));
        running.0 += t;
        running.1 += j;
        events.push(MoveEvent {
            stage,
            prescribed,
            tom_move,
            jack_move,
            tom_compliant,
            jack_compliant,
            running_payoffs: running.clone(),
            held: escrow.held().clone(),
        });
    }
    let ledger = escrow.settle()?;
    Ok(Transcript { events, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deposit::{decompose, refund_schedule, DecomposePolicy};
    use crate::game::{agreement_payoff, Composition};

    fn int(n: i64) -> Rational {
        Rational::from_integer(n)
    }

    struct Fixed(char);

    impl Strategy for Fixed {
        fn choose(&mut self, _: &MoveContext<'_>) -> char {
            self.0
        }
    }

    #[test]
    fn compliant_row5_match() {
        let m = PayoffMatrix::worked();
        let d = decompose(Composition::new(16, 12, 1), &m, DecomposePolicy::Balanced).unwrap();
        let ag = d.agreement().unwrap();
        let dep = DepositPair::from_integers(6, 20);
        let t = run_match(
            &ag,
            &dep,
            &mut StrategyScript::Compliant,
            &mut StrategyScript::Compliant,
            &m,
            None,
        )
        .unwrap();
        // 16*10 + 12*4 + 8 and 16*4 + 12*24 + 8
        assert_eq!(t.payoffs(), (int(216), int(360)));
        let s = agreement_payoff(&ag, &m);
        assert_eq!(t.payoffs(), (s.tom_total, s.jack_total));
        assert_eq!(t.ledger.refunds_out, dep);
        assert!(t.ledger.forfeits == DepositPair::zero() && t.ledger.is_conserved());
    }

    #[test]
    fn early_defection_is_deterred() {
        let m = PayoffMatrix::worked();
        let ag: Agreement = "AC,AC,AC".parse().unwrap();
        let t = run_match(
            &ag,
            &DepositPair::from_integers(6, 20),
            &mut StrategyScript::DefectAt(1),
            &mut StrategyScript::Compliant,
            &m,
            None,
        )
        .unwrap();
        assert_eq!(t.payoffs().0, int(10 + 6 + 6));
        assert_eq!(t.net().0, int(16));
        assert!(t.net().0 < int(24));
        assert_eq!(t.ledger.refunds_out, DepositPair::from_integers(0, 20));
        assert_eq!(t.ledger.sink, int(6));
        assert!(t.events[1..].iter().all(|e| e.prescribed == StagePair::BD));
    }

    #[test]
    fn zero_money_match() {
        let m = PayoffMatrix::worked();
        let ag: Agreement = "AD,BC,AC".parse().unwrap();
        let t = run_match(
            &ag,
            &DepositPair::zero(),
            &mut StrategyScript::Compliant,
            &mut StrategyScript::Compliant,
            &m,
            None,
        )
        .unwrap();
        assert_eq!(t.ledger, Ledger::default());
        assert!(t.ledger.is_conserved());
    }

    #[test]
    fn simultaneous_defection_forfeits_both() {
        let m = PayoffMatrix::worked();
        let ag: Agreement = "AC,AC".parse().unwrap();
        let t = run_match(
            &ag,
            &DepositPair::from_integers(6, 20),
            &mut StrategyScript::DefectAt(2),
            &mut StrategyScript::DefectAt(2),
            &m,
            None,
        )
        .unwrap();
        assert_eq!(t.ledger.forfeits, DepositPair::from_integers(6, 20));
        assert_eq!(t.ledger.sink, int(26));
        assert_eq!(t.ledger.refunds_out, DepositPair::zero());
    }

    #[test]
    fn deviation_after_a_tranche_forfeits_only_what_is_held() {
        let m = PayoffMatrix::worked();
        let d = decompose(Composition::new(16, 12, 1), &m, DecomposePolicy::Balanced).unwrap();
        let sched = refund_schedule(&d, &m).unwrap();
        let ag = d.agreement().unwrap();
        // stage 3 is inside the first exchange block; held is (2, 4) by then
        let t = run_match(
            &ag,
            &DepositPair::from_integers(6, 20),
            &mut StrategyScript::DefectAt(3),
            &mut StrategyScript::Compliant,
            &m,
            Some(&sched),
        )
        .unwrap();
        assert_eq!(t.ledger.forfeits, DepositPair::from_integers(2, 0));
        assert_eq!(t.ledger.refunds_out, DepositPair::from_integers(4, 20));
        assert!(t.ledger.is_conserved());
    }

    #[test]
    fn illegal_symbols_are_rejected() {
        let m = PayoffMatrix::worked();
        let ag: Agreement = "AC".parse().unwrap();
        let err = run_match(
            &ag,
            &DepositPair::zero(),
            &mut Fixed('C'),
            &mut StrategyScript::Compliant,
            &m,
            None,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::IllegalMove {
                player: Player::Tom,
                symbol: 'C',
                stage: 1
            }
        );
    }

    #[test]
    fn settlement_rules() {
        let mut e = EscrowState::new(DepositPair::from_integers(1, 1), None, 2).unwrap();
        assert!(matches!(e.settle(), Err(Error::InvalidPhase { .. })));
        e.collect().unwrap();
        assert!(matches!(e.collect(), Err(Error::InvalidPhase { .. })));
        e.record(1, false, false).unwrap();
        assert!(matches!(e.settle(), Err(Error::InvalidPhase { .. })));
        assert!(matches!(
            e.record(3, false, false),
            Err(Error::InvalidPhase { .. })
        ));
        e.record(2, false, false).unwrap();
        let l = e.settle().unwrap();
        assert_eq!(l.refunds_out, DepositPair::from_integers(1, 1));
        assert_eq!(e.settle(), Err(Error::AlreadySettled));
    }

    #[test]
    fn reverted_escrow_settles_early() {
        let mut e = EscrowState::new(DepositPair::from_integers(3, 5), None, 4).unwrap();
        e.collect().unwrap();
        e.record(1, true, false).unwrap();
        assert_eq!(e.phase(), Phase::Reverted { since_stage: 1 });
        assert_eq!(e.prescribed(StagePair::AC), StagePair::BD);
        assert!(e.deviated(Player::Tom) && !e.deviated(Player::Jack));
        let l = e.settle().unwrap();
        assert_eq!(l.forfeits, DepositPair::from_integers(3, 0));
        assert_eq!(l.refunds_out, DepositPair::from_integers(0, 5));
        assert_eq!(*e.forfeited_to_sink(), int(3));
    }

    #[test]
    fn schedule_must_fit_in_deposit() {
        let m = PayoffMatrix::worked();
        let d = decompose(Composition::new(1, 1, 0), &m, DecomposePolicy::Balanced).unwrap();
        let sched = refund_schedule(&d, &m).unwrap();
        assert!(matches!(
            EscrowState::new(DepositPair::from_integers(1, 1), Some(sched), 2),
            Err(Error::DepositBelowSchedule { .. })
        ));
    }

    #[test]
    fn strategy_parsing() {
        assert!(matches!(
            StrategyScript::parse("compliant", 0),
            Ok(StrategyScript::Compliant)
        ));
        assert!(matches!(
            StrategyScript::parse("defect-at:3", 0),
            Ok(StrategyScript::DefectAt(3))
        ));
        assert!(matches!(
            StrategyScript::parse("Best-Response", 0),
            Ok(StrategyScript::BestResponse { .. })
        ));
        assert!(matches!(
            StrategyScript::parse("random:0.25", 9),
            Ok(StrategyScript::RandomSeeded { seed: 9, .. })
        ));
        for bad in ["defect-at:0", "random:1.5", "random", "sneaky"] {
            assert!(StrategyScript::parse(bad, 0).is_err(), "{bad}");
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let m = PayoffMatrix::worked();
        let ag: Agreement = "AC,AD,BC".parse().unwrap();
        let t = run_match(
            &ag,
            &DepositPair::from_integers(6, 20),
            &mut StrategyScript::Compliant,
            &mut StrategyScript::DefectAt(2),
            &m,
            None,
        )
        .unwrap();
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(Transcript::from_jsonl(&text).unwrap(), t);
    }
}
