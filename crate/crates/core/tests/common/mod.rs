//! Generators shared by the integration tests.
#![allow(dead_code)]

use pdescrow_core::{Agreement, PayoffMatrix, Rational, StagePair};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(n)
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(n, d).unwrap()
}

/// Build a valid matrix from a base and three positive steps per player.
/// Tom: c < g < a < e. Jack: f < h < b < d.
pub fn matrix_from_steps(tom: (i64, [i64; 3]), jack: (i64, [i64; 3]), den: i64) -> PayoffMatrix {
    let q = |n: i64| ratio(n, den);
    let c = tom.0;
    let g = c + tom.1[0];
    let a = g + tom.1[1];
    let e = a + tom.1[2];
    let f = jack.0;
    let h = f + jack.1[0];
    let b = h + jack.1[1];
    let d = b + jack.1[2];
    let m = PayoffMatrix {
        a: q(a),
        b: q(b),
        c: q(c),
        d: q(d),
        e: q(e),
        f: q(f),
        g: q(g),
        h: q(h),
    };
    m.validate().expect("steps are positive");
    m
}

pub fn random_matrix(rng: &mut ChaCha8Rng) -> PayoffMatrix {
    let mut steps = || {
        [
            rng.random_range(1..=9),
            rng.random_range(1..=9),
            rng.random_range(1..=9),
        ]
    };
    let tom_steps = steps();
    let jack_steps = steps();
    let den = rng.random_range(1..=4);
    matrix_from_steps(
        (rng.random_range(-10..=10), tom_steps),
        (rng.random_range(-10..=10), jack_steps),
        den,
    )
}

pub fn random_bd_free(rng: &mut ChaCha8Rng, max_len: usize) -> Agreement {
    let n = rng.random_range(1..=max_len);
    let stages = (0..n)
        .map(|_| *StagePair::AGREEABLE.choose(rng).unwrap())
        .collect();
    Agreement::new(stages).unwrap()
}

/// Every BD-free agreement of exactly `n` stages.
pub fn all_bd_free(n: usize) -> Vec<Agreement> {
    let mut out: Vec<Vec<StagePair>> = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                StagePair::AGREEABLE.iter().map(move |&p| {
                    let mut v = prefix.clone();
                    v.push(p);
                    v
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|s| Agreement::new(s).unwrap())
        .collect()
}
