//! The 2x2 stage game, agreements over N repetitions, and their payoffs
//! measured against permanent mutual defection.
//!
//! Tom is the row player with moves `A` (cooperate) and `B` (defect); Jack
//! is the column player with `C` (cooperate) and `D` (defect). The matrix
//! cells are `AC = (a, b)`, `AD = (c, d)`, `BC = (e, f)`, `BD = (g, h)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Player {
    Tom,
    Jack,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::Tom, Player::Jack];

    pub fn other(self) -> Player {
        match self {
            Player::Tom => Player::Jack,
            Player::Jack => Player::Tom,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Player::Tom => f.write_str("Tom"),
            Player::Jack => f.write_str("Jack"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TomMove {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JackMove {
    C,
    D,
}

impl TomMove {
    pub fn flipped(self) -> TomMove {
        match self {
            TomMove::A => TomMove::B,
            TomMove::B => TomMove::A,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            TomMove::A => 'A',
            TomMove::B => 'B',
        }
    }
}

impl JackMove {
    pub fn flipped(self) -> JackMove {
        match self {
            JackMove::C => JackMove::D,
            JackMove::D => JackMove::C,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            JackMove::C => 'C',
            JackMove::D => 'D',
        }
    }
}

/// One stage of play: Tom's move paired with Jack's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StagePair {
    AC,
    AD,
    BC,
    BD,
}

impl StagePair {
    pub const ALL: [StagePair; 4] = [StagePair::AC, StagePair::AD, StagePair::BC, StagePair::BD];
    /// The pairs that may appear inside an effective agreement.
    pub const AGREEABLE: [StagePair; 3] = [StagePair::AC, StagePair::AD, StagePair::BC];

    pub fn from_moves(tom: TomMove, jack: JackMove) -> StagePair {
        match (tom, jack) {
            (TomMove::A, JackMove::C) => StagePair::AC,
            (TomMove::A, JackMove::D) => StagePair::AD,
            (TomMove::B, JackMove::C) => StagePair::BC,
            (TomMove::B, JackMove::D) => StagePair::BD,
        }
    }

    pub fn tom(self) -> TomMove {
        match self {
            StagePair::AC | StagePair::AD => TomMove::A,
            StagePair::BC | StagePair::BD => TomMove::B,
        }
    }

    pub fn jack(self) -> JackMove {
        match self {
            StagePair::AC | StagePair::BC => JackMove::C,
            StagePair::AD | StagePair::BD => JackMove::D,
        }
    }

    /// The pair reached when `player` alone switches to their other move.
    pub fn deviated_by(self, player: Player) -> StagePair {
        match player {
            Player::Tom => StagePair::from_moves(self.tom().flipped(), self.jack()),
            Player::Jack => StagePair::from_moves(self.tom(), self.jack().flipped()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StagePair::AC => "AC",
            StagePair::AD => "AD",
            StagePair::BC => "BC",
            StagePair::BD => "BD",
        }
    }
}

impl fmt::Display for StagePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StagePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AC" => Ok(StagePair::AC),
            "AD" => Ok(StagePair::AD),
            "BC" => Ok(StagePair::BC),
            "BD" => Ok(StagePair::BD),
            other => Err(Error::Parse(format!("unknown stage pair {other:?}"))),
        }
    }
}

/// One failed ordering axiom, e.g. `e > a` with the offending values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixViolation {
    pub inequality: String,
    pub left: Rational,
    pub right: Rational,
}

impl fmt::Display for MatrixViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} fails ({} > {} is false)",
            self.inequality, self.left, self.right
        )
    }
}

/// Stage payoffs. Must satisfy `e > a > g > c` (Tom) and `d > b > h > f`
/// (Jack); see [`PayoffMatrix::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffMatrix {
    pub a: Rational,
    pub b: Rational,
    pub c: Rational,
    pub d: Rational,
    pub e: Rational,
    pub f: Rational,
    pub g: Rational,
    pub h: Rational,
}

impl PayoffMatrix {
    #[allow(clippy::too_many_arguments)]
    pub fn from_integers(a: i64, b: i64, c: i64, d: i64, e: i64, f: i64, g: i64, h: i64) -> Self {
        PayoffMatrix {
            a: a.into(),
            b: b.into(),
            c: c.into(),
            d: d.into(),
            e: e.into(),
            f: f.into(),
            g: g.into(),
            h: h.into(),
        }
    }

    /// The worked valuation: AC (8,8), AD (4,24), BC (10,4), BD (6,6).
    pub fn worked() -> Self {
        PayoffMatrix::from_integers(8, 8, 4, 24, 10, 4, 6, 6)
    }

    /// Every violated ordering axiom, in chain order (Tom's chain first).
    pub fn violations(&self) -> Vec<MatrixViolation> {
        let chains: [[(&str, &Rational); 4]; 2] = [
            [
                ("e", &self.e),
                ("a", &self.a),
                ("g", &self.g),
                ("c", &self.c),
            ],
            [
                ("d", &self.d),
                ("b", &self.b),
                ("h", &self.h),
                ("f", &self.f),
            ],
        ];
        chains
            .iter()
            .flat_map(|chain| chain.windows(2))
            .filter(|w| w[0].1 <= w[1].1)
            .map(|w| MatrixViolation {
                inequality: format!("{} > {}", w[0].0, w[1].0),
                left: w[0].1.clone(),
                right: w[1].1.clone(),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidMatrix(v))
        }
    }

    /// `(tom, jack)` payoffs for one stage.
    pub fn stage_payoff(&self, pair: StagePair) -> (Rational, Rational) {
        let (t, j) = self.cell(pair);
        (t.clone(), j.clone())
    }

    pub fn cell(&self, pair: StagePair) -> (&Rational, &Rational) {
        match pair {
            StagePair::AC => (&self.a, &self.b),
            StagePair::AD => (&self.c, &self.d),
            StagePair::BC => (&self.e, &self.f),
            StagePair::BD => (&self.g, &self.h),
        }
    }

    pub fn payoff_of(&self, pair: StagePair, player: Player) -> &Rational {
        let (t, j) = self.cell(pair);
        match player {
            Player::Tom => t,
            Player::Jack => j,
        }
    }

    /// Payoff of `n` rounds of mutual defection: `(n·g, n·h)`.
    pub fn nash_baseline(&self, n: usize) -> (Rational, Rational) {
        (self.g.times(n), self.h.times(n))
    }

    /// Apply `x -> scale·x + shift` to all eight entries.
    pub fn affine(&self, scale: &Rational, shift: &Rational) -> PayoffMatrix {
        let t = |x: &Rational| scale * x + shift;
        PayoffMatrix {
            a: t(&self.a),
            b: t(&self.b),
            c: t(&self.c),
            d: t(&self.d),
            e: t(&self.e),
            f: t(&self.f),
            g: t(&self.g),
            h: t(&self.h),
        }
    }
}

/// An ordered sequence of stage pairs, one per repetition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<StagePair>", into = "Vec<StagePair>")]
pub struct Agreement {
    stages: Vec<StagePair>,
}

impl Agreement {
    pub fn new(stages: Vec<StagePair>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::EmptyAgreement);
        }
        Ok(Agreement { stages })
    }

    pub fn stages(&self) -> &[StagePair] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn is_bd_free(&self) -> bool {
        !self.stages.contains(&StagePair::BD)
    }

    /// Tom's move string, e.g. `"ABB"`.
    pub fn tom_moves(&self) -> String {
        self.stages.iter().map(|p| p.tom().symbol()).collect()
    }

    /// Jack's move string, e.g. `"DCC"`.
    pub fn jack_moves(&self) -> String {
        self.stages.iter().map(|p| p.jack().symbol()).collect()
    }

    /// Counts of the agreeable pairs; BD stages are not counted.
    pub fn composition(&self) -> Composition {
        let count = |k| self.stages.iter().filter(|&&p| p == k).count();
        Composition::new(
            count(StagePair::BC),
            count(StagePair::AD),
            count(StagePair::AC),
        )
    }

    pub fn payoff(&self, m: &PayoffMatrix) -> PayoffSummary {
        agreement_payoff(self, m)
    }

    pub fn is_effective(&self, m: &PayoffMatrix) -> bool {
        is_effective(self, m)
    }
}

impl TryFrom<Vec<StagePair>> for Agreement {
    type Error = Error;

    fn try_from(stages: Vec<StagePair>) -> Result<Self> {
        Agreement::new(stages)
    }
}

impl From<Agreement> for Vec<StagePair> {
    fn from(a: Agreement) -> Self {
        a.stages
    }
}

impl fmt::Display for Agreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(p.as_str())?;
        }
        Ok(())
    }
}

/// Comma- or whitespace-separated stage tokens: `"AC,BC BC,AD"`.
impl FromStr for Agreement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let stages = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Agreement::new(stages)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayoffSummary {
    pub stages: usize,
    pub tom_total: Rational,
    pub jack_total: Rational,
    pub tom_expectation: Rational,
    pub jack_expectation: Rational,
}

impl PayoffSummary {
    fn from_totals(stages: usize, tom_total: Rational, jack_total: Rational) -> Self {
        PayoffSummary {
            tom_expectation: tom_total.per(stages),
            jack_expectation: jack_total.per(stages),
            stages,
            tom_total,
            jack_total,
        }
    }

    pub fn total(&self, player: Player) -> &Rational {
        match player {
            Player::Tom => &self.tom_total,
            Player::Jack => &self.jack_total,
        }
    }

    pub fn expectation(&self, player: Player) -> &Rational {
        match player {
            Player::Tom => &self.tom_expectation,
            Player::Jack => &self.jack_expectation,
        }
    }
}

pub fn stage_payoff(pair: StagePair, m: &PayoffMatrix) -> (Rational, Rational) {
    m.stage_payoff(pair)
}

pub fn agreement_payoff(ag: &Agreement, m: &PayoffMatrix) -> PayoffSummary {
    let mut tom = Rational::zero();
    let mut jack = Rational::zero();
    for &p in ag.stages() {
        let (t, j) = m.cell(p);
        tom += t;
        jack += j;
    }
    PayoffSummary::from_totals(ag.len(), tom, jack)
}

pub fn nash_baseline(n: usize, m: &PayoffMatrix) -> (Rational, Rational) {
    m.nash_baseline(n)
}

/// Both players strictly better off than `N` rounds of mutual defection.
pub fn is_effective(ag: &Agreement, m: &PayoffMatrix) -> bool {
    beats_baseline(&agreement_payoff(ag, m), m)
}

pub(crate) fn beats_baseline(s: &PayoffSummary, m: &PayoffMatrix) -> bool {
    let (tom_base, jack_base) = m.nash_baseline(s.stages);
    s.tom_total > tom_base && s.jack_total > jack_base
}

/// Stage-pair counts of an agreement, ignoring order: `(n_bc, n_ad, n_ac)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct Composition {
    pub n_bc: usize,
    pub n_ad: usize,
    pub n_ac: usize,
}

impl Composition {
    pub fn new(n_bc: usize, n_ad: usize, n_ac: usize) -> Self {
        Composition { n_bc, n_ad, n_ac }
    }

    pub fn len(&self) -> usize {
        self.n_bc + self.n_ad + self.n_ac
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.n_bc, self.n_ad, self.n_ac)
    }
}

/// `"n_bc,n_ad,n_ac"`, e.g. `"16,12,1"`.
impl FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad composition count {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match parts[..] {
            [bc, ad, ac] => Ok(Composition::new(bc, ad, ac)),
            _ => Err(Error::Parse(format!(
                "composition needs three counts n_bc,n_ad,n_ac; got {s:?}"
            ))),
        }
    }
}

/// Totals for a composition without materializing an ordering.
pub fn composition_payoff(c: &Composition, m: &PayoffMatrix) -> Result<PayoffSummary> {
    if c.is_empty() {
        return Err(Error::EmptyAgreement);
    }
    let tom = m.e.times(c.n_bc) + m.c.times(c.n_ad) + m.a.times(c.n_ac);
    let jack = m.f.times(c.n_bc) + m.d.times(c.n_ad) + m.b.times(c.n_ac);
    Ok(PayoffSummary::from_totals(c.len(), tom, jack))
}
