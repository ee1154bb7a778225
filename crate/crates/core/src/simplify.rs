//! Snapping a staircase onto the dyadic grid of lines `x = iε`, `y = iε`.
//!
//! The boundary is traced against the grid: on every horizontal line it
//! reaches, the leftmost boundary point is kept, and on every vertical line
//! it reaches, the topmost one; the entry and exit points are always kept.
//! Consecutive trace points are joined through their south-east corner.
//! The result contains the original region, loses at most `2ε` of profit on
//! every valuation it already traded, and has exactly the same trace.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::env::{integrate_piecewise, ExactLaw};
use crate::error::{Error, Result};
use crate::fixed::{Coord, FRAC_BITS};
use crate::mechanism::{Mechanism, Valuation};

/// Grid step `2^-h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadicPrecision(u32);

impl DyadicPrecision {
    pub fn new(h: u32) -> Result<DyadicPrecision> {
        if h > FRAC_BITS {
            return Err(Error::BadPrecision(h));
        }
        Ok(DyadicPrecision(h))
    }

    pub fn exponent(self) -> u32 {
        self.0
    }

    pub fn step(self) -> Coord {
        Coord::dyadic(1, self.0).expect("checked exponent")
    }

    pub fn finer(self) -> Result<DyadicPrecision> {
        Self::new(self.0 + 1)
    }
}

/// How a trace point arises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crossing {
    Entry,
    Exit,
    /// Leftmost boundary point on the horizontal line with this index.
    Horizontal(u64),
    /// Topmost boundary point on the vertical line with this index.
    Vertical(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Intersection {
    pub point: Valuation,
    /// Index of the boundary segment carrying the point (0 for the entry).
    pub segment: usize,
    pub crossings: Vec<Crossing>,
}

/// Trace of the boundary against the grid, in boundary order.
pub fn boundary_intersections(m: &Mechanism, prec: DyadicPrecision) -> Vec<Intersection> {
    let Some(path) = m.boundary() else {
        return Vec::new();
    };
    let step = prec.step().raw();
    let mut out: Vec<Intersection> = Vec::new();
    let mut push = |point: Valuation, segment: usize, how: Crossing| {
        if let Some(last) = out.last_mut() {
            if last.point == point {
                if !last.crossings.contains(&how) {
                    last.crossings.push(how);
                }
                return;
            }
        }
        out.push(Intersection { point, segment, crossings: vec![how] });
    };
    let vs = path.vertices();
    push(vs[0], 0, Crossing::Entry);
    for (k, (u, w)) in path.segments().enumerate() {
        if u.s == w.s {
            // Lines crossed going up, excluding the one already reached at `u`.
            let mut y = (u.b.raw() / step + 1) * step;
            while y <= w.b.raw() {
                push(Valuation::new(u.s, Coord::from_raw(y).expect("in range")), k, Crossing::Horizontal(y / step));
                y += step;
            }
        } else {
            // Lines left behind going right, including the one at `u`.
            let mut x = u.s.raw().div_ceil(step) * step;
            while x < w.s.raw() {
                push(Valuation::new(Coord::from_raw(x).expect("in range"), u.b), k, Crossing::Vertical(x / step));
                x += step;
            }
        }
    }
    let end = *vs.last().expect("non-empty");
    if end.s.raw() % step == 0 {
        push(end, vs.len().saturating_sub(2), Crossing::Vertical(end.s.raw() / step));
    }
    push(end, vs.len().saturating_sub(2), Crossing::Exit);
    out
}

pub fn intersection_points(m: &Mechanism, prec: DyadicPrecision) -> Vec<Valuation> {
    boundary_intersections(m, prec).into_iter().map(|i| i.point).collect()
}

/// Coarsest staircase through the trace, approximating from the south-east.
pub fn simplify(m: &Mechanism, prec: DyadicPrecision) -> Mechanism {
    let pts = intersection_points(m, prec);
    if pts.is_empty() {
        return Mechanism::Empty;
    }
    let mut vs = Vec::with_capacity(2 * pts.len());
    vs.push(pts[0]);
    for w in pts.windows(2) {
        vs.push(Valuation::new(w[1].s, w[0].b));
        vs.push(w[1]);
    }
    Mechanism::from_vertices(vs).expect("trace is monotone")
}

/// Level `h` of the approximating sequence.
pub fn approximate(m: &Mechanism, h: u32) -> Result<Mechanism> {
    Ok(simplify(m, DyadicPrecision::new(h)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DichotomyOutcome {
    IncrementBounded,
    ProfitGap,
    Both,
    Neither,
}

/// Moments of the profit increment between consecutive approximation levels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DichotomyWitness {
    /// `E[profit(φ_h) - profit(φ_{h+1})]`.
    pub mean_drop: BigRational,
    /// `E[(profit(φ_{h+1}) - profit(φ_h))^2]`.
    pub second_moment: BigRational,
    pub outcome: DichotomyOutcome,
}

/// Evaluates which clause of the local dichotomy holds at level `h`.
pub fn dichotomy_witness(m: &Mechanism, h: u32, law: &ExactLaw) -> Result<DichotomyWitness> {
    let coarse = approximate(m, h)?;
    let fine = approximate(m, h + 1)?;
    let diff = |s: &BigRational, b: &BigRational| {
        crate::env::profit_at(&coarse, s, b) - crate::env::profit_at(&fine, s, b)
    };
    let mechs = [&coarse, &fine];
    let mean_drop = integrate_piecewise(law, &mechs, &diff);
    let second_moment = integrate_piecewise(law, &mechs, &|s, b| {
        let d = diff(s, b);
        &d * &d
    });
    let scale = BigRational::new(1.into(), num_bigint::BigInt::from(2u8).pow(h));
    let gap = mean_drop >= BigRational::from_integer(31.into()) * &scale;
    let bounded = second_moment <= BigRational::from_integer(136.into()) * &scale;
    let outcome = match (gap, bounded) {
        (true, true) => DichotomyOutcome::Both,
        (true, false) => DichotomyOutcome::ProfitGap,
        (false, true) => DichotomyOutcome::IncrementBounded,
        (false, false) => DichotomyOutcome::Neither,
    };
    Ok(DichotomyWitness { mean_drop, second_moment, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::Amount;

    fn v(s: f64, b: f64) -> Valuation {
        Valuation::from_f64(s, b).unwrap()
    }

    fn path(pts: &[(f64, f64)]) -> Mechanism {
        Mechanism::from_vertices(pts.iter().map(|&(s, b)| v(s, b)).collect()).unwrap()
    }

    fn p(h: u32) -> DyadicPrecision {
        DyadicPrecision::new(h).unwrap()
    }

    fn example() -> Mechanism {
        path(&[(0.0, 0.3), (0.1, 0.3), (0.1, 0.6), (0.4, 0.6), (0.4, 1.0)])
    }

    #[test]
    fn trace_of_worked_example() {
        assert_eq!(intersection_points(&example(), p(1)), vec![v(0.0, 0.3), v(0.1, 0.5), v(0.4, 1.0)]);
    }

    #[test]
    fn simplified_worked_example() {
        let s = simplify(&example(), p(1));
        let want = path(&[(0.0, 0.3), (0.1, 0.3), (0.1, 0.5), (0.4, 0.5), (0.4, 1.0)]);
        assert_eq!(s, want);
        let q = v(0.2, 0.8);
        assert_eq!(example().profit(q), Coord::from_f64(0.6).unwrap() - Coord::from_f64(0.4).unwrap());
        assert_eq!(s.profit(q), Coord::from_f64(0.5).unwrap() - Coord::from_f64(0.4).unwrap());
        assert_eq!(intersection_points(&s, p(1)), intersection_points(&example(), p(1)));
    }

    #[test]
    fn coarsest_level_is_a_rectangle() {
        let s = approximate(&example(), 0).unwrap();
        assert_eq!(s, Mechanism::posted_prices(Coord::from_f64(0.4).unwrap(), Coord::from_f64(0.3).unwrap()));
    }

    #[test]
    fn grid_aligned_segment_keeps_no_interior_points() {
        let m = path(&[(0.0, 0.3), (0.5, 0.3), (0.5, 0.75), (0.8, 0.75), (0.8, 1.0)]);
        let pts = intersection_points(&m, p(2));
        let on_line: Vec<_> = pts.iter().filter(|u| u.s == Coord::HALF).copied().collect();
        assert_eq!(on_line, vec![v(0.5, 0.5), v(0.5, 0.75)]);
        assert_eq!(simplify(&m, p(2)), m);
    }

    #[test]
    fn empty_stays_empty() {
        assert!(simplify(&Mechanism::Empty, p(3)).is_empty());
        assert!(boundary_intersections(&Mechanism::Empty, p(3)).is_empty());
    }

    #[test]
    fn single_corner_at_origin_column() {
        let m = path(&[(0.0, 1.0)]);
        assert_eq!(simplify(&m, p(4)), m);
        let m = path(&[(0.0, 0.3), (0.0, 1.0), (0.05, 1.0)]);
        let s = simplify(&m, p(2));
        assert!(s.contains(v(0.05, 1.0)));
        assert!(s.contains(v(0.0, 0.3)));
    }

    #[test]
    fn profit_drop_bounded_on_traded_points() {
        let m = example();
        let eps = p(2).step().as_amount();
        let s = simplify(&m, p(2));
        for i in 0..=32 {
            for j in 0..=32 {
                let q = v(i as f64 / 32.0, j as f64 / 32.0);
                if m.contains(q) {
                    assert!(s.contains(q));
                    assert!(m.profit(q) - s.profit(q) <= eps + eps);
                    assert!(m.profit(q) - s.profit(q) >= Amount::ZERO);
                }
            }
        }
    }

    #[test]
    fn precision_range_checked() {
        assert!(DyadicPrecision::new(63).is_err());
        assert_eq!(p(3).step(), Coord::from_f64(0.125).unwrap());
    }
}
