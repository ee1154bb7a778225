#![allow(dead_code)]

use broker_core::mechanism::Valuation;
use broker_core::{Coord, Mechanism};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform multiple of `2^-bits`.
pub fn dyadic(rng: &mut impl Rng, bits: u32) -> Coord {
    Coord::dyadic(rng.gen_range(0..=1u64 << bits), bits).unwrap()
}

/// Uniform over the raw fixed-point range.
pub fn coord(rng: &mut impl Rng) -> Coord {
    Coord::from_raw(rng.gen_range(0..=Coord::ONE.raw())).unwrap()
}

pub fn point(rng: &mut impl Rng) -> Valuation {
    Valuation::new(coord(rng), coord(rng))
}

pub fn dyadic_point(rng: &mut impl Rng, bits: u32) -> Valuation {
    Valuation::new(dyadic(rng, bits), dyadic(rng, bits))
}

pub fn dyadic_multiset(rng: &mut impl Rng, max_n: usize, bits: u32) -> Vec<(Valuation, u64)> {
    let n = rng.gen_range(1..=max_n);
    (0..n).map(|_| (dyadic_point(rng, bits), rng.gen_range(1..=3))).collect()
}

/// Random staircase with up to `k` corners.
pub fn staircase(rng: &mut impl Rng, k: usize) -> Mechanism {
    let n = rng.gen_range(1..=k);
    Mechanism::rectangle_union((0..n).map(|_| point(rng)))
}

/// Random staircase contained in the upper triangle `s <= b`.
pub fn upper_staircase(rng: &mut impl Rng, k: usize) -> Mechanism {
    let n = rng.gen_range(1..=k);
    Mechanism::rectangle_union((0..n).map(|_| {
        let (a, b) = (coord(rng), coord(rng));
        Valuation::new(a.min(b), a.max(b))
    }))
}

pub fn dyadic_staircase(rng: &mut impl Rng, k: usize, bits: u32) -> Mechanism {
    let n = rng.gen_range(1..=k);
    Mechanism::rectangle_union((0..n).map(|_| dyadic_point(rng, bits)))
}

/// Uniform points plus points on the boundary of `m`.
pub fn probes(rng: &mut impl Rng, m: &Mechanism, n: usize) -> Vec<Valuation> {
    let vs = m.vertices().to_vec();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !vs.is_empty() && out.len() % 10 == 0 {
            let i = rng.gen_range(0..vs.len());
            let j = (i + 1).min(vs.len() - 1);
            let (u, w) = (vs[i], vs[j]);
            let s = if u.s == w.s { u.s } else { Coord::from_raw(rng.gen_range(u.s.raw()..=w.s.raw())).unwrap() };
            let b = if u.b == w.b { u.b } else { Coord::from_raw(rng.gen_range(u.b.raw()..=w.b.raw())).unwrap() };
            out.push(Valuation::new(s, b));
        } else {
            out.push(point(rng));
        }
    }
    out
}
