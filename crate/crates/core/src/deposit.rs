//! Composite deposits for whole agreements.
//!
//! An agreement is split into contiguous fragments. When every fragment is
//! weakly dominant over mutual defection, the per-player maximum of the
//! fragment deposits secures the whole agreement. A single non-dominant
//! fragment at the end adds its own deposit on top. Once a fragment has been
//! played out without a deviation, its share of the stake can be released,
//! so the held amount steps down at fragment boundaries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragment::{
    fragment_deposit, fragment_payoff_vs_nash, is_dominant, DepositShape, DominanceMode, Fragment,
    FragmentCounts, FragmentType,
};
use crate::game::{Agreement, Composition, PayoffMatrix, Player, StagePair};
use crate::rational::Rational;

/// Per-player stake. Orders lexicographically by `(tom, jack)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct DepositPair {
    pub tom: Rational,
    pub jack: Rational,
}

impl DepositPair {
    pub fn new(tom: Rational, jack: Rational) -> Self {
        DepositPair { tom, jack }
    }

    pub fn from_integers(tom: i64, jack: i64) -> Self {
        DepositPair::new(tom.into(), jack.into())
    }

    pub fn zero() -> Self {
        DepositPair::default()
    }

    pub fn get(&self, player: Player) -> &Rational {
        match player {
            Player::Tom => &self.tom,
            Player::Jack => &self.jack,
        }
    }

    pub fn get_mut(&mut self, player: Player) -> &mut Rational {
        match player {
            Player::Tom => &mut self.tom,
            Player::Jack => &mut self.jack,
        }
    }

    /// Componentwise maximum.
    pub fn join(&self, other: &DepositPair) -> DepositPair {
        DepositPair::new(
            self.tom.clone().max(other.tom.clone()),
            self.jack.clone().max(other.jack.clone()),
        )
    }

    pub fn plus(&self, other: &DepositPair) -> DepositPair {
        DepositPair::new(&self.tom + &other.tom, &self.jack + &other.jack)
    }

    /// Componentwise `>=`.
    pub fn covers(&self, other: &DepositPair) -> bool {
        self.tom >= other.tom && self.jack >= other.jack
    }

    pub fn is_non_negative(&self) -> bool {
        !self.tom.is_negative() && !self.jack.is_negative()
    }
}

impl fmt::Display for DepositPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.tom, self.jack)
    }
}

/// `"t,j"`, each side an integer, fraction, or decimal.
impl FromStr for DepositPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (t, j) = s
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("deposits need two values t,j; got {s:?}")))?;
        let pair = DepositPair::new(t.parse()?, j.parse()?);
        if !pair.is_non_negative() {
            return Err(Error::Parse(format!(
                "deposits must be non-negative; got {s:?}"
            )));
        }
        Ok(pair)
    }
}

/// Contiguous split of an agreement into fragments, optionally closed by a
/// single fragment that is not dominant over mutual defection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub fragments: Vec<Fragment>,
    pub trailing: Option<Fragment>,
}

impl Decomposition {
    pub fn new(fragments: Vec<Fragment>, trailing: Option<Fragment>) -> Self {
        Decomposition {
            fragments,
            trailing,
        }
    }

    /// Dominant fragments followed by the trailing one, if any.
    pub fn all_fragments(&self) -> impl Iterator<Item = &Fragment> {
        self.fragments.iter().chain(self.trailing.iter())
    }

    pub fn len(&self) -> usize {
        self.all_fragments().map(Fragment::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stages(&self) -> Vec<StagePair> {
        self.all_fragments()
            .flat_map(|f| f.order().iter().copied())
            .collect()
    }

    pub fn agreement(&self) -> Result<Agreement> {
        Agreement::new(self.stages())
    }

    pub fn composition(&self) -> Composition {
        let mut c = Composition::default();
        for f in self.all_fragments() {
            let k = f.counts();
            c.n_ac += k.x_ac;
            c.n_bc += k.y_bc;
            c.n_ad += k.z_ad;
        }
        c
    }

    /// Prop-1 form when there is no trailing fragment, Prop-2 form otherwise.
    pub fn deposit(&self, m: &PayoffMatrix) -> Result<DepositPair> {
        match self.trailing {
            None => deposit_max(self, m),
            Some(_) => deposit_with_trailing(self, m),
        }
    }

    fn check_dominant_part(&self, m: &PayoffMatrix) -> Result<()> {
        for (i, f) in self.fragments.iter().enumerate() {
            if !is_dominant(f, m, DominanceMode::Weak) {
                return Err(Error::DecompositionShape(format!(
                    "fragment {} ({f}) is not dominant over mutual defection",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    fn dominant_max(&self, m: &PayoffMatrix) -> Result<DepositPair> {
        self.fragments
            .iter()
            .map(|f| fragment_deposit(f, m))
            .try_fold(DepositPair::zero(), |acc, d| Ok(acc.join(&d?)))
    }
}

/// Per-player maximum of the fragment deposits. Every fragment must be
/// weakly dominant and carry a table formula.
pub fn deposit_max(d: &Decomposition, m: &PayoffMatrix) -> Result<DepositPair> {
    if d.trailing.is_some() {
        return Err(Error::DecompositionShape(
            "maximum-only deposit needs a decomposition without a trailing fragment".into(),
        ));
    }
    if d.fragments.is_empty() {
        return Err(Error::EmptyAgreement);
    }
    d.check_dominant_part(m)?;
    d.dominant_max(m)
}

/// Maximum over the dominant fragments plus the trailing fragment's own
/// deposit. The dominant part must be an optional full-cooperation fragment
/// followed by mutually beneficial ones.
pub fn deposit_with_trailing(d: &Decomposition, m: &PayoffMatrix) -> Result<DepositPair> {
    for (i, f) in d.fragments.iter().enumerate() {
        let ok = match f.kind() {
            FragmentType::FullCooperation => i == 0,
            FragmentType::MutuallyBeneficial => true,
            _ => false,
        };
        if !ok {
            return Err(Error::DecompositionShape(format!(
                "fragment {} ({f}) is {}; expected an optional leading full-cooperation \
                 fragment followed by mutually beneficial ones",
                i + 1,
                f.kind()
            )));
        }
    }
    let Some(trailing) = &d.trailing else {
        return deposit_max(d, m);
    };
    d.check_dominant_part(m)?;
    Ok(d.dominant_max(m)?.plus(&fragment_deposit(trailing, m)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefundLevel {
    /// Number of completed stages.
    pub stage: usize,
    /// Deposit still held from then on.
    pub remaining: DepositPair,
}

/// Held deposit as a step function of completed stages. The first level is
/// at stage 0 (the full stake); the last is at the final stage and is zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefundSchedule {
    pub levels: Vec<RefundLevel>,
}

impl RefundSchedule {
    pub fn initial(&self) -> &DepositPair {
        &self.levels[0].remaining
    }

    pub fn horizon(&self) -> usize {
        self.levels.last().map_or(0, |l| l.stage)
    }

    /// Deposit held once `completed` stages have been played without a
    /// deviation.
    pub fn remaining_after(&self, completed: usize) -> &DepositPair {
        self.levels
            .iter()
            .rev()
            .find(|l| l.stage <= completed)
            .map(|l| &l.remaining)
            .unwrap_or_else(|| self.initial())
    }

    /// Levels at which the held amount actually changes.
    pub fn changes(&self) -> Vec<&RefundLevel> {
        let mut out = Vec::new();
        let mut prev = self.initial();
        for l in &self.levels[1..] {
            if l.remaining != *prev {
                out.push(l);
            }
            prev = &l.remaining;
        }
        out
    }
}

/// After the first `j` fragments complete, the held deposit is the maximum
/// over the fragments not yet begun, plus the trailing fragment's deposit
/// until the agreement is over.
pub fn refund_schedule(d: &Decomposition, m: &PayoffMatrix) -> Result<RefundSchedule> {
    let initial = d.deposit(m)?;
    let deps = d
        .fragments
        .iter()
        .map(|f| fragment_deposit(f, m))
        .collect::<Result<Vec<_>>>()?;
    let tail = match &d.trailing {
        Some(t) => fragment_deposit(t, m)?,
        None => DepositPair::zero(),
    };

    let mut levels = vec![RefundLevel {
        stage: 0,
        remaining: initial,
    }];
    let mut stage = 0;
    for (j, f) in d.fragments.iter().enumerate() {
        stage += f.len();
        let rest = deps[j + 1..]
            .iter()
            .fold(DepositPair::zero(), |acc, x| acc.join(x));
        levels.push(RefundLevel {
            stage,
            remaining: rest.plus(&tail),
        });
    }
    if let Some(t) = &d.trailing {
        stage += t.len();
        levels.push(RefundLevel {
            stage,
            remaining: DepositPair::zero(),
        });
    }
    Ok(RefundSchedule { levels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecomposePolicy {
    /// One full-cooperation fragment, then `min(n_ad, n_bc)` mutually
    /// beneficial fragments with one unit of the scarcer pair each.
    #[default]
    Balanced,
    /// Best balanced split over every mutually-beneficial fragment count.
    MinimizeMax,
    /// Exhaustive search over fragment multisets; at most 12 stages.
    ExhaustiveBest,
}

impl fmt::Display for DecomposePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecomposePolicy::Balanced => "balanced",
            DecomposePolicy::MinimizeMax => "minimize-max",
            DecomposePolicy::ExhaustiveBest => "exhaustive-best",
        })
    }
}

impl FromStr for DecomposePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "balanced" => Ok(DecomposePolicy::Balanced),
            "minimize-max" | "minimizemax" => Ok(DecomposePolicy::MinimizeMax),
            "exhaustive-best" | "exhaustivebest" => Ok(DecomposePolicy::ExhaustiveBest),
            other => Err(Error::Parse(format!(
                "unknown decomposition policy {other:?}"
            ))),
        }
    }
}

pub const EXHAUSTIVE_LIMIT: usize = 12;

pub fn decompose(
    c: Composition,
    m: &PayoffMatrix,
    policy: DecomposePolicy,
) -> Result<Decomposition> {
    if c.is_empty() {
        return Err(Error::EmptyAgreement);
    }
    if c.n_ac == 0 && (c.n_ad == 0) != (c.n_bc == 0) {
        // only BC stages: Jack is below the baseline everywhere; only AD: Tom
        let player = if c.n_bc > 0 {
            Player::Jack
        } else {
            Player::Tom
        };
        return Err(Error::Unprotectable {
            player,
            composition: c.to_string(),
        });
    }
    match policy {
        DecomposePolicy::Balanced => Ok(balanced_split(c, m)),
        DecomposePolicy::MinimizeMax => minimize_max(c, m),
        DecomposePolicy::ExhaustiveBest => exhaustive_best(c, m),
    }
}

/// Split `total` into `parts` shares differing by at most one, largest first.
fn balanced_shares(total: usize, parts: usize) -> Vec<usize> {
    let (q, r) = (total / parts, total % parts);
    (0..parts).map(|i| if i < r { q + 1 } else { q }).collect()
}

fn full_cooperation(n_ac: usize) -> Fragment {
    Fragment::canonical(FragmentCounts::new(n_ac, 0, 0)).expect("n_ac > 0")
}

/// Leading AC fragment (if any) plus the given mutually beneficial blocks.
/// Blocks that are not weakly dominant are merged into one trailing block.
fn assemble(n_ac: usize, blocks: &[(usize, usize)], m: &PayoffMatrix) -> Decomposition {
    let mut fragments = Vec::new();
    if n_ac > 0 {
        fragments.push(full_cooperation(n_ac));
    }
    let mut leftover = FragmentCounts::default();
    for &(z_ad, y_bc) in blocks {
        let f = Fragment::canonical(FragmentCounts::new(0, y_bc, z_ad)).expect("non-empty block");
        if is_dominant(&f, m, DominanceMode::Weak) {
            fragments.push(f);
        } else {
            leftover.y_bc += y_bc;
            leftover.z_ad += z_ad;
        }
    }
    let trailing =
        (leftover.total() > 0).then(|| Fragment::canonical(leftover).expect("non-empty leftover"));
    Decomposition::new(fragments, trailing)
}

/// Composition with AC and at most one of AD/BC.
fn without_exchange(c: Composition, m: &PayoffMatrix) -> Decomposition {
    if c.n_ad == 0 && c.n_bc == 0 {
        return Decomposition::new(vec![full_cooperation(c.n_ac)], None);
    }
    let f = Fragment::canonical(FragmentCounts::new(c.n_ac, c.n_bc, c.n_ad)).expect("non-empty");
    if is_dominant(&f, m, DominanceMode::Weak) {
        Decomposition::new(vec![f], None)
    } else {
        Decomposition::new(Vec::new(), Some(f))
    }
}

fn balanced_split(c: Composition, m: &PayoffMatrix) -> Decomposition {
    if c.n_ad == 0 || c.n_bc == 0 {
        return without_exchange(c, m);
    }
    let p = c.n_ad.min(c.n_bc);
    let blocks: Vec<(usize, usize)> = if c.n_ad <= c.n_bc {
        balanced_shares(c.n_bc, p)
            .into_iter()
            .map(|y| (1, y))
            .collect()
    } else {
        balanced_shares(c.n_ad, p)
            .into_iter()
            .map(|z| (z, 1))
            .collect()
    };
    assemble(c.n_ac, &blocks, m)
}

fn minimize_max(c: Composition, m: &PayoffMatrix) -> Result<Decomposition> {
    if c.n_ad == 0 || c.n_bc == 0 {
        return Ok(without_exchange(c, m));
    }
    let mut best: Option<(DepositPair, Decomposition)> = None;
    // more fragments first, so ties keep the finer split
    for parts in (1..=c.n_ad.min(c.n_bc)).rev() {
        let blocks: Vec<(usize, usize)> = balanced_shares(c.n_ad, parts)
            .into_iter()
            .zip(balanced_shares(c.n_bc, parts))
            .collect();
        let d = assemble(c.n_ac, &blocks, m);
        let Ok(dep) = d.deposit(m) else { continue };
        if best.as_ref().is_none_or(|(b, _)| dep < *b) {
            best = Some((dep, d));
        }
    }
    best.map(|(_, d)| d)
        .ok_or_else(|| Error::NoAdmissibleDecomposition(c.to_string()))
}

/// Every fragment shape with a table formula that fits inside `c`.
fn table_shapes(c: Composition) -> Vec<FragmentCounts> {
    let mut shapes = Vec::new();
    for x in 0..=c.n_ac {
        for y in 0..=c.n_bc {
            for z in 0..=c.n_ad {
                let k = FragmentCounts::new(x, y, z);
                let listed = match (x > 0, y > 0, z > 0) {
                    (true, false, false) | (false, true, true) => true,
                    (true, true, false) | (true, false, true) => true,
                    _ => false,
                };
                if listed {
                    shapes.push(k);
                }
            }
        }
    }
    shapes
}

struct Candidate {
    counts: FragmentCounts,
    fragment: Fragment,
    deposit: DepositPair,
    dominant: bool,
}

fn exhaustive_best(c: Composition, m: &PayoffMatrix) -> Result<Decomposition> {
    if c.len() > EXHAUSTIVE_LIMIT {
        return Err(Error::HorizonTooLarge {
            n: c.len(),
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let candidates: Vec<Candidate> = table_shapes(c)
        .into_iter()
        .map(|counts| {
            let fragment = Fragment::canonical(counts).expect("non-empty shape");
            Candidate {
                deposit: fragment_deposit(&fragment, m).expect("listed shape"),
                dominant: is_dominant(&fragment, m, DominanceMode::Weak),
                counts,
                fragment,
            }
        })
        .collect();

    let mut best: Option<(DepositPair, Decomposition)> = None;
    let mut chosen = Vec::new();
    let target = FragmentCounts::new(c.n_ac, c.n_bc, c.n_ad);
    search(&candidates, 0, target, &mut chosen, &mut |picks| {
        if let Some((dep, d)) = evaluate_multiset(&candidates, picks) {
            if best.as_ref().is_none_or(|(b, _)| dep < *b) {
                best = Some((dep, d));
            }
        }
    });
    best.map(|(_, d)| d)
        .ok_or_else(|| Error::NoAdmissibleDecomposition(c.to_string()))
}

/// Enumerate multisets of candidate indices (non-decreasing) whose counts sum
/// exactly to `remaining`.
fn search(
    candidates: &[Candidate],
    start: usize,
    remaining: FragmentCounts,
    chosen: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    if remaining.total() == 0 {
        visit(chosen);
        return;
    }
    for (i, cand) in candidates.iter().enumerate().skip(start) {
        let k = cand.counts;
        if k.x_ac <= remaining.x_ac && k.y_bc <= remaining.y_bc && k.z_ad <= remaining.z_ad {
            chosen.push(i);
            let rest = FragmentCounts::new(
                remaining.x_ac - k.x_ac,
                remaining.y_bc - k.y_bc,
                remaining.z_ad - k.z_ad,
            );
            search(candidates, i, rest, chosen, visit);
            chosen.pop();
        }
    }
}

fn evaluate_multiset(
    candidates: &[Candidate],
    picks: &[usize],
) -> Option<(DepositPair, Decomposition)> {
    let non_dominant: Vec<usize> = picks
        .iter()
        .copied()
        .filter(|&i| !candidates[i].dominant)
        .collect();
    let mut dominant: Vec<usize> = picks
        .iter()
        .copied()
        .filter(|&i| candidates[i].dominant)
        .collect();
    // full cooperation leads; then larger deposits first so refunds come early
    dominant.sort_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        let lead = |c: &Candidate| c.fragment.kind() != FragmentType::FullCooperation;
        lead(ca)
            .cmp(&lead(cb))
            .then_with(|| cb.deposit.cmp(&ca.deposit))
            .then_with(|| cb.fragment.len().cmp(&ca.fragment.len()))
            .then_with(|| a.cmp(&b))
    });
    let max = dominant.iter().fold(DepositPair::zero(), |acc, &i| {
        acc.join(&candidates[i].deposit)
    });
    let fragments: Vec<Fragment> = dominant
        .iter()
        .map(|&i| candidates[i].fragment.clone())
        .collect();
    match non_dominant[..] {
        [] => Some((max, Decomposition::new(fragments, None))),
        [t] => {
            let shape_ok = fragments.iter().enumerate().all(|(i, f)| match f.kind() {
                FragmentType::FullCooperation => i == 0,
                FragmentType::MutuallyBeneficial => true,
                _ => false,
            });
            shape_ok.then(|| {
                let trailing = candidates[t].fragment.clone();
                (
                    max.plus(&candidates[t].deposit),
                    Decomposition::new(fragments, Some(trailing)),
                )
            })
        }
        _ => None,
    }
}

/// One fragment of a [`DecompositionReport`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentReport {
    pub text: String,
    pub kind: FragmentType,
    pub shape: Option<u8>,
    pub first_stage: usize,
    pub last_stage: usize,
    pub tom_delta: Rational,
    pub jack_delta: Rational,
    pub dominant: bool,
    pub trailing: bool,
    pub deposit: Option<DepositPair>,
}

/// JSON-facing summary of a decomposition, its deposits, and refunds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub composition: Composition,
    pub agreement: String,
    pub fragments: Vec<FragmentReport>,
    pub max_only_deposit: Option<DepositPair>,
    pub with_trailing_deposit: Option<DepositPair>,
    pub deposit: DepositPair,
    pub schedule: RefundSchedule,
}

impl DecompositionReport {
    pub fn build(d: &Decomposition, m: &PayoffMatrix) -> Result<Self> {
        let mut fragments = Vec::new();
        let mut stage = 0;
        for (f, trailing) in d
            .fragments
            .iter()
            .map(|f| (f, false))
            .chain(d.trailing.iter().map(|f| (f, true)))
        {
            let check = fragment_payoff_vs_nash(f, m, DominanceMode::Weak);
            fragments.push(FragmentReport {
                text: f.text(),
                kind: f.kind(),
                shape: f.deposit_shape().ok().map(DepositShape::number),
                first_stage: stage + 1,
                last_stage: stage + f.len(),
                tom_delta: check.tom_delta,
                jack_delta: check.jack_delta,
                dominant: check.dominant,
                trailing,
                deposit: fragment_deposit(f, m).ok(),
            });
            stage += f.len();
        }
        Ok(DecompositionReport {
            composition: d.composition(),
            agreement: d.agreement()?.to_string(),
            fragments,
            max_only_deposit: deposit_max(d, m).ok(),
            with_trailing_deposit: deposit_with_trailing(d, m).ok(),
            deposit: d.deposit(m)?,
            schedule: refund_schedule(d, m)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frag(x: usize, y: usize, z: usize) -> Fragment {
        Fragment::canonical(FragmentCounts::new(x, y, z)).unwrap()
    }

    fn dp(t: i64, j: i64) -> DepositPair {
        DepositPair::from_integers(t, j)
    }

    fn row5() -> Decomposition {
        let mut fragments = vec![frag(1, 0, 0)];
        fragments.extend(std::iter::repeat_n(frag(0, 2, 1), 4));
        fragments.extend(std::iter::repeat_n(frag(0, 1, 1), 8));
        Decomposition::new(fragments, None)
    }

    fn shapes(d: &Decomposition) -> Vec<(usize, usize, usize)> {
        d.all_fragments()
            .map(|f| {
                let c = f.counts();
                (c.x_ac, c.y_bc, c.z_ad)
            })
            .collect()
    }

    #[test]
    fn max_only_deposit() {
        let m = PayoffMatrix::worked();
        assert_eq!(deposit_max(&row5(), &m).unwrap(), dp(6, 20));
        let single = Decomposition::new(vec![frag(0, 2, 1)], None);
        assert_eq!(deposit_max(&single, &m).unwrap(), dp(2, 4));
        let two = Decomposition::new(vec![frag(0, 2, 2), frag(0, 1, 1)], None);
        assert_eq!(deposit_max(&two, &m).unwrap(), dp(4, 4));
    }

    #[test]
    fn max_only_rejects_mixed_and_non_dominant() {
        let m = PayoffMatrix::worked();
        let mixed = Decomposition::new(vec![frag(1, 1, 1)], None);
        assert_eq!(
            deposit_max(&mixed, &m),
            Err(Error::NoDepositFormula(FragmentType::Mixed))
        );
        // Tom: 3*4 + 10 = 22 < 24
        let weak = Decomposition::new(vec![frag(0, 1, 3)], None);
        assert!(matches!(
            deposit_max(&weak, &m),
            Err(Error::DecompositionShape(_))
        ));
    }

    #[test]
    fn trailing_fragment_adds_its_deposit() {
        let m = PayoffMatrix::worked();
        let base = Decomposition::new(vec![frag(0, 1, 1)], None);
        assert_eq!(
            deposit_with_trailing(&base, &m).unwrap(),
            deposit_max(&base, &m).unwrap()
        );

        let d = Decomposition::new(vec![frag(0, 1, 1)], Some(frag(0, 1, 1)));
        assert_eq!(deposit_with_trailing(&d, &m).unwrap(), dp(4, 4));

        let coop = Decomposition::new(vec![frag(2, 0, 0)], None);
        assert_eq!(deposit_with_trailing(&coop, &m).unwrap(), dp(6, 20));

        let bad = Decomposition::new(vec![frag(0, 1, 1), frag(2, 0, 0)], Some(frag(0, 1, 3)));
        assert!(matches!(
            deposit_with_trailing(&bad, &m),
            Err(Error::DecompositionShape(_))
        ));
    }

    #[test]
    fn row5_refunds() {
        let m = PayoffMatrix::worked();
        let s = refund_schedule(&row5(), &m).unwrap();
        assert_eq!(*s.remaining_after(0), dp(6, 20));
        assert_eq!(*s.remaining_after(1), dp(2, 4));
        assert_eq!(*s.remaining_after(12), dp(2, 4));
        assert_eq!(*s.remaining_after(13), dp(2, 2));
        assert_eq!(*s.remaining_after(28), dp(2, 2));
        assert_eq!(*s.remaining_after(29), dp(0, 0));
        let changes: Vec<usize> = s.changes().iter().map(|l| l.stage).collect();
        assert_eq!(changes, [1, 13, 29]);
        assert_eq!(s.horizon(), 29);
    }

    #[test]
    fn refunds_with_trailing() {
        let m = PayoffMatrix::worked();
        let d = Decomposition::new(vec![frag(0, 1, 1)], Some(frag(0, 1, 3)));
        let s = refund_schedule(&d, &m).unwrap();
        // trailing deposit: Tom 3*2, Jack 1*2
        assert_eq!(*s.initial(), dp(2 + 6, 2 + 2));
        assert_eq!(*s.remaining_after(2), dp(6, 2));
        assert_eq!(*s.remaining_after(6), dp(0, 0));
    }

    #[test]
    fn balanced_split_examples() {
        let m = PayoffMatrix::worked();
        let pb =
            |b, d, a| decompose(Composition::new(b, d, a), &m, DecomposePolicy::Balanced).unwrap();

        let d = pb(16, 12, 1);
        let mut expected = vec![(1, 0, 0)];
        expected.extend(std::iter::repeat_n((0, 2, 1), 4));
        expected.extend(std::iter::repeat_n((0, 1, 1), 8));
        assert_eq!(shapes(&d), expected);
        assert_eq!(d, row5());

        let d = pb(20, 9, 0);
        assert_eq!(d.fragments.len(), 9);
        assert!(d
            .fragments
            .iter()
            .all(|f| f.counts().z_ad == 1 && (2..=3).contains(&f.counts().y_bc)));
        assert_eq!(d.deposit(&m).unwrap(), dp(2, 6));

        let d = pb(26, 3, 0);
        assert_eq!(shapes(&d), [(0, 9, 1), (0, 9, 1), (0, 8, 1)]);
        assert_eq!(d.deposit(&m).unwrap(), dp(2, 18));

        let d = pb(10, 19, 0);
        assert_eq!(d.fragments.len(), 10);
        assert!(d.trailing.is_none());
        assert_eq!(d.deposit(&m).unwrap(), dp(4, 2));
    }

    #[test]
    fn balanced_split_without_exchange() {
        let m = PayoffMatrix::worked();
        let pb = |b, d, a| decompose(Composition::new(b, d, a), &m, DecomposePolicy::Balanced);
        assert_eq!(shapes(&pb(0, 0, 3).unwrap()), [(3, 0, 0)]);
        // Jack: 2*8 + 4 = 20 >= 18
        let d = pb(1, 0, 2).unwrap();
        assert_eq!(shapes(&d), [(2, 1, 0)]);
        assert!(d.trailing.is_none());
        assert_eq!(d.deposit(&m).unwrap(), dp(6, 22));
        // Jack: 8 + 3*4 = 20 < 24, so the block trails
        let d = pb(3, 0, 1).unwrap();
        assert!(d.fragments.is_empty());
        assert_eq!(d.deposit(&m).unwrap(), dp(6, 20 + 3 * 2));
    }

    #[test]
    fn unprotectable_compositions() {
        let m = PayoffMatrix::worked();
        let err = decompose(Composition::new(5, 0, 0), &m, DecomposePolicy::Balanced).unwrap_err();
        assert!(matches!(
            err,
            Error::Unprotectable {
                player: Player::Jack,
                ..
            }
        ));
        let err =
            decompose(Composition::new(0, 4, 0), &m, DecomposePolicy::MinimizeMax).unwrap_err();
        assert!(matches!(
            err,
            Error::Unprotectable {
                player: Player::Tom,
                ..
            }
        ));
        assert_eq!(
            decompose(Composition::new(0, 0, 0), &m, DecomposePolicy::Balanced),
            Err(Error::EmptyAgreement)
        );
    }

    #[test]
    fn non_dominant_blocks_trail() {
        let m = PayoffMatrix::worked();
        // 10 BC over one AD: Jack 24 + 40 = 64 < 66
        let d = decompose(Composition::new(10, 1, 0), &m, DecomposePolicy::Balanced).unwrap();
        assert!(d.fragments.is_empty());
        assert_eq!(
            d.trailing.as_ref().unwrap().counts(),
            FragmentCounts::new(0, 10, 1)
        );
        // (19, 2, 2): blocks 10 and 9 BC; the 10-block trails
        let d = decompose(Composition::new(19, 2, 2), &m, DecomposePolicy::Balanced).unwrap();
        assert_eq!(shapes(&d), [(2, 0, 0), (0, 9, 1), (0, 10, 1)]);
        assert_eq!(d.deposit(&m).unwrap(), dp(6 + 2, 20 + 20));
    }

    #[test]
    fn policies_never_beat_exhaustive() {
        let m = PayoffMatrix::worked();
        for n in 1..=8usize {
            for ac in 0..=n {
                for ad in 0..=(n - ac) {
                    let c = Composition::new(n - ac - ad, ad, ac);
                    let Ok(pb) = decompose(c, &m, DecomposePolicy::Balanced) else {
                        continue;
                    };
                    let pb_dep = pb.deposit(&m).unwrap();
                    let mm = decompose(c, &m, DecomposePolicy::MinimizeMax).unwrap();
                    let ex = decompose(c, &m, DecomposePolicy::ExhaustiveBest).unwrap();
                    let (mm_dep, ex_dep) = (mm.deposit(&m).unwrap(), ex.deposit(&m).unwrap());
                    assert!(mm_dep <= pb_dep, "{c}");
                    assert!(ex_dep <= mm_dep, "{c}: {ex_dep} vs {mm_dep}");
                    assert_eq!(ex.composition(), c);
                }
            }
        }
    }

    #[test]
    fn exhaustive_limit() {
        let m = PayoffMatrix::worked();
        assert_eq!(
            decompose(
                Composition::new(7, 6, 0),
                &m,
                DecomposePolicy::ExhaustiveBest
            ),
            Err(Error::HorizonTooLarge { n: 13, limit: 12 })
        );
    }

    #[test]
    fn report_round_trips() {
        let m = PayoffMatrix::worked();
        let r = DecompositionReport::build(&row5(), &m).unwrap();
        assert_eq!(r.deposit, dp(6, 20));
        assert_eq!(r.fragments[1].text, "1*AD+2*BC");
        assert_eq!(
            (r.fragments[1].first_stage, r.fragments[1].last_stage),
            (2, 4)
        );
        let json = serde_json::to_string(&r).unwrap();
        let back: DecompositionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn deposit_pair_parse() {
        assert_eq!("6,20".parse::<DepositPair>().unwrap(), dp(6, 20));
        assert_eq!(
            "1/2, 0.25".parse::<DepositPair>().unwrap(),
            DepositPair::new(Rational::new(1, 2).unwrap(), Rational::new(1, 4).unwrap())
        );
        assert!("-1,2".parse::<DepositPair>().is_err());
        assert!("1".parse::<DepositPair>().is_err());
    }
}
