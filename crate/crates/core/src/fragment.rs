//! Agreement fragments: contiguous blocks built from `x` AC pairs, `y` BC
//! pairs, and `z` AD pairs, their taxonomy, their standing against mutual
//! defection, and the per-fragment deposit table.
//!
//! | row | shape (canonical order)   | Tom          | Jack            |
//! |-----|---------------------------|--------------|-----------------|
//! | 1   | `AC^x`                    | e−c          | d−f             |
//! | 2   | `AD^z BC^y`               | z(g−c)       | y(h−f)          |
//! | 3   | `AC^x BC^y`               | e−c          | (d−f) + y(h−f)  |
//! | 4   | `AC^x AD^z`               | (e−c)+z(g−c) | d−f             |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::deposit::DepositPair;
use crate::error::{Error, Result};
use crate::game::{PayoffMatrix, StagePair};
use crate::rational::Rational;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct FragmentCounts {
    pub x_ac: usize,
    pub y_bc: usize,
    pub z_ad: usize,
}

impl FragmentCounts {
    pub fn new(x_ac: usize, y_bc: usize, z_ad: usize) -> Self {
        FragmentCounts { x_ac, y_bc, z_ad }
    }

    pub fn total(&self) -> usize {
        self.x_ac + self.y_bc + self.z_ad
    }

    pub fn classify(&self) -> Result<FragmentType> {
        classify(*self)
    }

    fn add(&mut self, pair: StagePair) -> Result<()> {
        match pair {
            StagePair::AC => self.x_ac += 1,
            StagePair::BC => self.y_bc += 1,
            StagePair::AD => self.z_ad += 1,
            StagePair::BD => return Err(Error::NashStageInFragment),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FragmentType {
    FullCooperation,
    MutuallyBeneficial,
    Compensation,
    StrongCompensation,
    Mixed,
}

impl fmt::Display for FragmentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FragmentType::FullCooperation => "full-cooperation",
            FragmentType::MutuallyBeneficial => "mutually-beneficial",
            FragmentType::Compensation => "compensation",
            FragmentType::StrongCompensation => "strong-compensation",
            FragmentType::Mixed => "mixed",
        })
    }
}

/// Which row of the deposit table a fragment falls under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DepositShape {
    /// `AC^x`
    FullCooperation,
    /// `AD^z BC^y`
    MutuallyBeneficial,
    /// `AC^x BC^y`
    CooperationThenBc,
    /// `AC^x AD^z`
    CooperationThenAd,
}

impl DepositShape {
    pub fn number(self) -> u8 {
        match self {
            DepositShape::FullCooperation => 1,
            DepositShape::MutuallyBeneficial => 2,
            DepositShape::CooperationThenBc => 3,
            DepositShape::CooperationThenAd => 4,
        }
    }
}

pub fn classify(c: FragmentCounts) -> Result<FragmentType> {
    let FragmentCounts {
        x_ac: x,
        y_bc: y,
        z_ad: z,
    } = c;
    Ok(match (x > 0, y > 0, z > 0) {
        (false, false, false) => return Err(Error::EmptyFragment),
        (true, false, false) => FragmentType::FullCooperation,
        (false, true, true) => FragmentType::MutuallyBeneficial,
        (false, _, _) => FragmentType::StrongCompensation,
        (true, true, true) => FragmentType::Mixed,
        (true, _, _) => FragmentType::Compensation,
    })
}

/// A contiguous block of stage pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fragment {
    counts: FragmentCounts,
    order: Vec<StagePair>,
}

impl Fragment {
    /// The fragment with the given counts in canonical order: all AC first,
    /// then all AD, then all BC.
    pub fn canonical(counts: FragmentCounts) -> Result<Self> {
        if counts.total() == 0 {
            return Err(Error::EmptyFragment);
        }
        Ok(Fragment {
            order: canonical_order(counts),
            counts,
        })
    }

    pub fn from_stages(stages: &[StagePair]) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::EmptyFragment);
        }
        let mut counts = FragmentCounts::default();
        for &p in stages {
            counts.add(p)?;
        }
        Ok(Fragment {
            counts,
            order: stages.to_vec(),
        })
    }

    pub fn counts(&self) -> FragmentCounts {
        self.counts
    }

    pub fn order(&self) -> &[StagePair] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn kind(&self) -> FragmentType {
        classify(self.counts).expect("fragments are non-empty")
    }

    pub fn is_canonical(&self) -> bool {
        self.order == canonical_order(self.counts)
    }

    pub fn deposit_shape(&self) -> Result<DepositShape> {
        let c = self.counts;
        let row = match self.kind() {
            FragmentType::FullCooperation => DepositShape::FullCooperation,
            FragmentType::MutuallyBeneficial => DepositShape::MutuallyBeneficial,
            FragmentType::Compensation if c.y_bc > 0 => DepositShape::CooperationThenBc,
            FragmentType::Compensation => DepositShape::CooperationThenAd,
            other => return Err(Error::NoDepositFormula(other)),
        };
        if !self.is_canonical() {
            return Err(Error::NonCanonicalOrder(self.text()));
        }
        Ok(row)
    }

    /// Text form such as `"1*AD+2*BC"`: one `k*XX` term per run of equal
    /// pairs.
    pub fn text(&self) -> String {
        let mut terms: Vec<(usize, StagePair)> = Vec::new();
        for &p in &self.order {
            match terms.last_mut() {
                Some((k, q)) if *q == p => *k += 1,
                _ => terms.push((1, p)),
            }
        }
        terms
            .iter()
            .map(|(k, p)| format!("{k}*{p}"))
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Parses `"x*AC+y*BC+z*AD"`; terms may come in any order, a bare `AD`
/// means `1*AD`, and repeated pair kinds add up. The result is canonical.
impl FromStr for Fragment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut counts = FragmentCounts::default();
        for term in s.split('+').map(str::trim) {
            let (k, pair) = match term.split_once('*') {
                Some((k, p)) => (
                    k.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad fragment term {term:?}")))?,
                    p.parse::<StagePair>()?,
                ),
                None => (1, term.parse::<StagePair>()?),
            };
            for _ in 0..k {
                counts.add(pair)?;
            }
        }
        Fragment::canonical(counts)
    }
}

fn canonical_order(c: FragmentCounts) -> Vec<StagePair> {
    let mut order = Vec::with_capacity(c.total());
    order.extend(std::iter::repeat_n(StagePair::AC, c.x_ac));
    order.extend(std::iter::repeat_n(StagePair::AD, c.z_ad));
    order.extend(std::iter::repeat_n(StagePair::BC, c.y_bc));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum DominanceMode {
    Strict,
    #[default]
    Weak,
}

impl FromStr for DominanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strict" => Ok(DominanceMode::Strict),
            "weak" => Ok(DominanceMode::Weak),
            other => Err(Error::Parse(format!("unknown dominance mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub dominant: bool,
    pub tom_delta: Rational,
    pub jack_delta: Rational,
}

/// Fragment totals minus the same number of mutual-defection rounds.
pub fn fragment_payoff_vs_nash(
    f: &Fragment,
    m: &PayoffMatrix,
    mode: DominanceMode,
) -> DominanceCheck {
    let (mut tom, mut jack) = (Rational::zero(), Rational::zero());
    for &p in f.order() {
        let (t, j) = m.cell(p);
        tom += t;
        jack += j;
    }
    let (tom_base, jack_base) = m.nash_baseline(f.len());
    let tom_delta = tom - tom_base;
    let jack_delta = jack - jack_base;
    let dominant = match mode {
        DominanceMode::Weak => !tom_delta.is_negative() && !jack_delta.is_negative(),
        DominanceMode::Strict => tom_delta.is_positive() && jack_delta.is_positive(),
    };
    DominanceCheck {
        dominant,
        tom_delta,
        jack_delta,
    }
}

pub fn is_dominant(f: &Fragment, m: &PayoffMatrix, mode: DominanceMode) -> bool {
    fragment_payoff_vs_nash(f, m, mode).dominant
}

/// Deposit from the fragment table. Mixed and strong-compensation
/// fragments have no formula, and the fragment must be in canonical order.
pub fn fragment_deposit(f: &Fragment, m: &PayoffMatrix) -> Result<DepositPair> {
    let c = f.counts();
    let tom_coop = &m.e - &m.c;
    let jack_coop = &m.d - &m.f;
    let tom_per_ad = &m.g - &m.c;
    let jack_per_bc = &m.h - &m.f;
    let (tom, jack) = match f.deposit_shape()? {
        DepositShape::FullCooperation => (tom_coop, jack_coop),
        DepositShape::MutuallyBeneficial => (tom_per_ad.times(c.z_ad), jack_per_bc.times(c.y_bc)),
        DepositShape::CooperationThenBc => (tom_coop, jack_coop + jack_per_bc.times(c.y_bc)),
        DepositShape::CooperationThenAd => (tom_coop + tom_per_ad.times(c.z_ad), jack_coop),
    };
    Ok(DepositPair::new(tom, jack))
}
