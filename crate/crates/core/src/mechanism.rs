//! Monotone allocation regions and their threshold payments.
//!
//! A mechanism posts a region `A` of the unit square that is closed towards
//! the north-west: if `(s, b)` trades then so does every `(s', b')` with
//! `s' <= s` and `b' >= b`. Every such region with finitely many corners is
//! the union of the rectangles `[0, c.s] x [c.b, 1]` over its corners `c`,
//! which are the south-east turning points of its boundary staircase.
//!
//! Corners are the canonical form. Two mechanisms are equal exactly when
//! their regions are equal.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fixed::{Amount, Coord};

/// A pair of private values, seller first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(Coord, Coord)", into = "(Coord, Coord)")]
pub struct Valuation {
    pub s: Coord,
    pub b: Coord,
}

impl From<(Coord, Coord)> for Valuation {
    fn from((s, b): (Coord, Coord)) -> Self {
        Valuation { s, b }
    }
}

impl From<Valuation> for (Coord, Coord) {
    fn from(v: Valuation) -> Self {
        (v.s, v.b)
    }
}

impl Valuation {
    pub const fn new(s: Coord, b: Coord) -> Valuation {
        Valuation { s, b }
    }

    /// Convenience constructor for literals, rounding to the nearest coordinate.
    pub fn from_f64(s: f64, b: f64) -> Result<Valuation> {
        Ok(Valuation::new(Coord::from_f64(s)?, Coord::from_f64(b)?))
    }

    /// Parses `"s,b"`.
    pub fn parse_pair(text: &str) -> Result<Valuation> {
        let (s, b) = text
            .split_once(',')
            .ok_or_else(|| Error::InvalidNumber(text.to_string()))?;
        Ok(Valuation::new(s.parse()?, b.parse()?))
    }

    /// `self ⪯ other`: `self` lies weakly south-east of `other`.
    pub fn precedes(self, other: Valuation) -> bool {
        self.s >= other.s && self.b <= other.b
    }

    pub fn in_upper_triangle(self) -> bool {
        self.s <= self.b
    }

    pub fn gap(self) -> Amount {
        self.b - self.s
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.s, self.b)
    }
}

/// Reduces a set of points to the antichain generating the same union of
/// rectangles. Output is sorted with both coordinates strictly increasing.
pub fn pareto_corners<I: IntoIterator<Item = Valuation>>(points: I) -> Vec<Valuation> {
    let mut pts: Vec<Valuation> = points.into_iter().collect();
    pts.sort_by(|x, y| y.s.cmp(&x.s).then(x.b.cmp(&y.b)));
    let mut out: Vec<Valuation> = Vec::new();
    for p in pts {
        match out.last() {
            Some(last) if p.b >= last.b => {}
            _ => out.push(p),
        }
    }
    out.reverse();
    out
}

/// Canonical monotone staircase from the left edge to the top edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoundaryPath {
    corners: Vec<Valuation>,
    vertices: Vec<Valuation>,
}

impl BoundaryPath {
    /// Validates and canonicalizes a vertex sequence. Consecutive vertices must
    /// share a coordinate and be non-decreasing in both; repeated and collinear
    /// vertices are merged.
    pub fn new(vertices: Vec<Valuation>) -> Result<BoundaryPath> {
        let first = *vertices.first().ok_or(Error::EmptyMechanism)?;
        let last = *vertices.last().expect("non-empty");
        if first.s != Coord::ZERO {
            return Err(Error::BadStart);
        }
        if last.b != Coord::ONE {
            return Err(Error::BadEnd);
        }
        for (i, w) in vertices.windows(2).enumerate() {
            if w[1].s < w[0].s || w[1].b < w[0].b {
                return Err(Error::NotMonotone(i + 1));
            }
            if w[1].s != w[0].s && w[1].b != w[0].b {
                return Err(Error::NotAxisParallel(i));
            }
        }
        Ok(Self::from_corners_unchecked(pareto_corners(vertices)))
    }

    /// Staircase generated by an antichain produced by [`pareto_corners`].
    fn from_corners_unchecked(corners: Vec<Valuation>) -> BoundaryPath {
        debug_assert!(!corners.is_empty());
        let mut vertices = Vec::with_capacity(2 * corners.len() + 1);
        if corners[0].s > Coord::ZERO {
            vertices.push(Valuation::new(Coord::ZERO, corners[0].b));
        }
        for (i, c) in corners.iter().enumerate() {
            vertices.push(*c);
            if let Some(next) = corners.get(i + 1) {
                vertices.push(Valuation::new(c.s, next.b));
            }
        }
        let tail = *corners.last().expect("non-empty");
        if tail.b < Coord::ONE {
            vertices.push(Valuation::new(tail.s, Coord::ONE));
        }
        BoundaryPath { corners, vertices }
    }

    pub fn vertices(&self) -> &[Valuation] {
        &self.vertices
    }

    /// South-east turning points, both coordinates strictly increasing.
    pub fn corners(&self) -> &[Valuation] {
        &self.corners
    }

    /// Boundary segments as consecutive vertex pairs.
    pub fn segments(&self) -> impl Iterator<Item = (Valuation, Valuation)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Threshold prices charged to the seller (`p`) and the buyer (`q`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Payments {
    pub seller: Coord,
    pub buyer: Coord,
}

impl Payments {
    pub fn profit(self) -> Amount {
        self.buyer - self.seller
    }
}

/// Gains from trade and social welfare at one valuation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EfficiencyMetrics {
    pub gft: Amount,
    pub social_welfare: Amount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BudgetBalance {
    Strong,
    Weak,
    None,
}

/// Dominant-strategy incentive compatible, individually rational mechanism.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub enum Mechanism {
    #[default]
    Empty,
    Staircase(BoundaryPath),
}

impl Mechanism {
    pub fn from_vertices(vertices: Vec<Valuation>) -> Result<Mechanism> {
        if vertices.is_empty() {
            return Ok(Mechanism::Empty);
        }
        BoundaryPath::new(vertices).map(Mechanism::Staircase)
    }

    /// Smallest mechanism whose region contains every rectangle
    /// `[0, p.s] x [p.b, 1]`.
    pub fn rectangle_union<I: IntoIterator<Item = Valuation>>(points: I) -> Mechanism {
        let corners = pareto_corners(points);
        if corners.is_empty() {
            Mechanism::Empty
        } else {
            Mechanism::Staircase(BoundaryPath::from_corners_unchecked(corners))
        }
    }

    /// Fixed prices: trade iff `s <= p` and `b >= q`.
    pub fn posted_prices(p: Coord, q: Coord) -> Mechanism {
        Self::rectangle_union([Valuation::new(p, q)])
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Mechanism::Empty)
    }

    pub fn corners(&self) -> &[Valuation] {
        match self {
            Mechanism::Empty => &[],
            Mechanism::Staircase(path) => path.corners(),
        }
    }

    pub fn vertices(&self) -> &[Valuation] {
        match self {
            Mechanism::Empty => &[],
            Mechanism::Staircase(path) => path.vertices(),
        }
    }

    pub fn boundary(&self) -> Option<&BoundaryPath> {
        match self {
            Mechanism::Empty => None,
            Mechanism::Staircase(path) => Some(path),
        }
    }

    pub fn contains(&self, v: Valuation) -> bool {
        self.payments(v).is_some()
    }

    /// Threshold payments, or `None` when `v` does not trade.
    pub fn payments(&self, v: Valuation) -> Option<Payments> {
        let corners = self.corners();
        let qi = corners.partition_point(|c| c.s < v.s);
        let q = corners.get(qi)?.b;
        if q > v.b {
            return None;
        }
        let pi = corners.partition_point(|c| c.b <= v.b);
        let p = corners[pi - 1].s;
        Some(Payments { seller: p, buyer: q })
    }

    pub fn profit(&self, v: Valuation) -> Amount {
        self.payments(v).map_or(Amount::ZERO, Payments::profit)
    }

    pub fn efficiency(&self, v: Valuation) -> EfficiencyMetrics {
        let gft = if self.contains(v) { v.gap() } else { Amount::ZERO };
        EfficiencyMetrics { gft, social_welfare: gft + v.s.as_amount() }
    }

    /// Classifies the mechanism by its worst-case payment imbalance, reading
    /// the extreme payments off the valuation `(0, 1)`.
    pub fn budget_balance(&self) -> Result<BudgetBalance> {
        let corners = self.corners();
        let (first, last) = match (corners.first(), corners.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(Error::EmptyMechanism),
        };
        let seller_max = last.s;
        let buyer_min = first.b;
        Ok(if corners.len() == 1 && first.s == first.b {
            BudgetBalance::Strong
        } else if seller_max <= buyer_min {
            BudgetBalance::Weak
        } else {
            BudgetBalance::None
        })
    }

    /// Drops the part of the region that trades below the diagonal. The
    /// result is generated by the boundary points of `self` lying in
    /// `{s <= b}`; it never trades at a loss and earns at least as much as
    /// `self` on every valuation.
    pub fn restrict_to_upper_triangle(&self) -> Mechanism {
        let Some(path) = self.boundary() else {
            return Mechanism::Empty;
        };
        let mut keep: Vec<Valuation> = Vec::new();
        for v in path.vertices() {
            if v.in_upper_triangle() {
                keep.push(*v);
            }
        }
        for (u, w) in path.segments() {
            if u.b == w.b && u.s <= u.b && u.b <= w.s {
                keep.push(Valuation::new(u.b, u.b));
            }
            if u.s == w.s && u.b <= u.s && u.s <= w.b {
                keep.push(Valuation::new(u.s, u.s));
            }
        }
        Self::rectangle_union(keep)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Empty => f.write_str("EMPTY"),
            Mechanism::Staircase(path) => {
                let parts: Vec<String> = path.vertices().iter().map(|v| v.to_string()).collect();
                f.write_str(&parts.join(" -> "))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MechanismJson {
    vertices: Vec<Valuation>,
}

impl Serialize for Mechanism {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MechanismJson { vertices: self.vertices().to_vec() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mechanism {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Mechanism, D::Error> {
        let raw = MechanismJson::deserialize(d)?;
        Mechanism::from_vertices(raw.vertices).map_err(serde::de::Error::custom)
    }
}

/// Staircase that trades almost everywhere along the segment `a -> b`
/// except in square notches of half-width `notch` around each sample.
///
/// The segment is cut into cells of width `resolution` in the seller
/// coordinate; each notch-free piece `[lo, hi]` of a cell becomes the corner
/// `(hi, y(lo))`, so every sample is excluded and the rest of the segment
/// trades at a spread of at most `resolution` below the segment's offset.
pub fn notched_staircase(
    a: Valuation,
    b: Valuation,
    samples: &[Valuation],
    notch: Coord,
    resolution: Coord,
) -> Result<Mechanism> {
    if !(a.s < b.s && a.b < b.b) {
        return Err(Error::InvalidConfig("segment must increase in both coordinates".into()));
    }
    if notch == Coord::ZERO || notch >= resolution {
        return Err(Error::NotchTooWide);
    }
    let dx = (b.s.raw() - a.s.raw()) as i128;
    let dy = (b.b.raw() - a.b.raw()) as i128;
    for p in samples {
        let on_line = (p.b.raw() as i128 - a.b.raw() as i128) * dx
            == (p.s.raw() as i128 - a.s.raw() as i128) * dy;
        if !on_line || p.s < a.s || p.s > b.s {
            return Err(Error::OffSegment(p.to_string()));
        }
    }
    let y_at = |x: u64| -> u64 {
        let off = (x - a.s.raw()) as i128;
        (a.b.raw() as i128 + (off * dy).div_euclid(dx)) as u64
    };

    // Excised open intervals, merged.
    let mut cuts: Vec<(u64, u64)> = samples
        .iter()
        .map(|p| (p.s.raw().saturating_sub(notch.raw()), p.s.raw() + notch.raw()))
        .collect();
    cuts.sort_unstable();
    let mut merged: Vec<(u64, u64)> = Vec::new();
    for (lo, hi) in cuts {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }

    let mut breaks: BTreeSet<u64> = BTreeSet::new();
    let mut x = a.s.raw();
    while x < b.s.raw() {
        breaks.insert(x);
        x = x.saturating_add(resolution.raw());
    }
    breaks.insert(b.s.raw());
    for &(lo, hi) in &merged {
        breaks.insert(lo.clamp(a.s.raw(), b.s.raw()));
        breaks.insert(hi.clamp(a.s.raw(), b.s.raw()));
    }
    let pts: Vec<u64> = breaks.into_iter().collect();
    let inside_cut = |x0: u64, x1: u64| merged.iter().any(|&(lo, hi)| x0 >= lo && x1 <= hi);
    let mut corners = Vec::new();
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if lo < hi && !inside_cut(lo, hi) {
            corners.push(Valuation::new(Coord::from_raw(hi)?, Coord::from_raw(y_at(lo))?));
        }
    }
    let m = Mechanism::rectangle_union(corners);
    debug_assert!(samples.iter().all(|p| !m.contains(*p)));
    Ok(m)
}

/// Which incentive constraint failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    SellerIncentive,
    BuyerIncentive,
    SellerParticipation,
    BuyerParticipation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// True value of the deviating agent and the opponent's bid.
    pub value: Coord,
    pub other_bid: Coord,
    /// Profitable misreport, if any.
    pub misreport: Option<Coord>,
    pub gain: Amount,
}

/// Payment rule under audit: returns `(seller receives, buyer pays)` when
/// trade happens at the given bids.
pub trait PaymentRule {
    fn settle(&self, m: &Mechanism, bids: Valuation) -> Option<(Amount, Amount)>;
}

/// Threshold payments of the mechanism itself.
pub struct ThresholdPayments;

impl PaymentRule for ThresholdPayments {
    fn settle(&self, m: &Mechanism, bids: Valuation) -> Option<(Amount, Amount)> {
        m.payments(bids).map(|p| (p.seller.as_amount(), p.buyer.as_amount()))
    }
}

impl<F: Fn(&Mechanism, Valuation) -> Option<(Amount, Amount)>> PaymentRule for F {
    fn settle(&self, m: &Mechanism, bids: Valuation) -> Option<(Amount, Amount)> {
        self(m, bids)
    }
}

/// Exhaustive incentive audit under threshold payments.
pub fn verify_dsic_ir(m: &Mechanism, step: Coord) -> Result<Vec<Violation>> {
    verify_dsic_ir_with(m, step, &ThresholdPayments)
}

/// Audits truthfulness and participation for every value and bid on the
/// grid of multiples of `step` together with the boundary coordinates.
pub fn verify_dsic_ir_with<R: PaymentRule>(
    m: &Mechanism,
    step: Coord,
    rule: &R,
) -> Result<Vec<Violation>> {
    if step == Coord::ZERO || step > Coord::HALF || !step.raw().is_power_of_two() {
        return Err(Error::BadStep);
    }
    let mut grid: BTreeSet<Coord> = BTreeSet::new();
    let mut x = 0u64;
    while x <= Coord::ONE.raw() {
        grid.insert(Coord::from_raw(x)?);
        x += step.raw();
    }
    for v in m.vertices() {
        grid.insert(v.s);
        grid.insert(v.b);
    }
    let grid: Vec<Coord> = grid.into_iter().collect();
    let mut out = Vec::new();

    for &other in &grid {
        // Seller side: buyer bids `other`.
        let outcomes: Vec<Option<Amount>> = grid
            .iter()
            .map(|&bid| rule.settle(m, Valuation::new(bid, other)).map(|(p, _)| p))
            .collect();
        let best_trade = outcomes
            .iter()
            .zip(&grid)
            .filter_map(|(o, bid)| o.map(|p| (p, *bid)))
            .max_by_key(|(p, _)| *p);
        let idle_bid = outcomes.iter().zip(&grid).find(|(o, _)| o.is_none()).map(|(_, b)| *b);
        for (value, outcome) in grid.iter().zip(&outcomes) {
            let truthful = outcome.unwrap_or(value.as_amount());
            if truthful < value.as_amount() {
                out.push(Violation {
                    kind: ViolationKind::SellerParticipation,
                    value: *value,
                    other_bid: other,
                    misreport: None,
                    gain: value.as_amount() - truthful,
                });
            }
            let mut best = (truthful, None);
            if let Some(bid) = idle_bid {
                if value.as_amount() > best.0 {
                    best = (value.as_amount(), Some(bid));
                }
            }
            if let Some((p, bid)) = best_trade {
                if p > best.0 {
                    best = (p, Some(bid));
                }
            }
            if let (gain, Some(bid)) = (best.0 - truthful, best.1) {
                if gain > Amount::ZERO {
                    out.push(Violation {
                        kind: ViolationKind::SellerIncentive,
                        value: *value,
                        other_bid: other,
                        misreport: Some(bid),
                        gain,
                    });
                }
            }
        }

        // Buyer side: seller bids `other`.
        let outcomes: Vec<Option<Amount>> = grid
            .iter()
            .map(|&bid| rule.settle(m, Valuation::new(other, bid)).map(|(_, q)| q))
            .collect();
        let cheapest = outcomes
            .iter()
            .zip(&grid)
            .filter_map(|(o, bid)| o.map(|q| (q, *bid)))
            .min_by_key(|(q, _)| *q);
        for (value, outcome) in grid.iter().zip(&outcomes) {
            let truthful = outcome.map_or(Amount::ZERO, |q| value.as_amount() - q);
            if truthful < Amount::ZERO {
                out.push(Violation {
                    kind: ViolationKind::BuyerParticipation,
                    value: *value,
                    other_bid: other,
                    misreport: None,
                    gain: -truthful,
                });
            }
            let mut best = (truthful, None);
            if truthful < Amount::ZERO {
                if let Some((bid, _)) = grid.iter().zip(&outcomes).find(|(_, o)| o.is_none()) {
                    best = (Amount::ZERO, Some(*bid));
                }
            }
            if let Some((q, bid)) = cheapest {
                let u = value.as_amount() - q;
                if u > best.0 {
                    best = (u, Some(bid));
                }
            }
            if let (gain, Some(bid)) = (best.0 - truthful, best.1) {
                if gain > Amount::ZERO {
                    out.push(Violation {
                        kind: ViolationKind::BuyerIncentive,
                        value: *value,
                        other_bid: other,
                        misreport: Some(bid),
                        gain,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Coord {
        Coord::from_f64(x).unwrap()
    }

    fn v(s: f64, b: f64) -> Valuation {
        Valuation::from_f64(s, b).unwrap()
    }

    fn path(pts: &[(f64, f64)]) -> Mechanism {
        Mechanism::from_vertices(pts.iter().map(|&(s, b)| v(s, b)).collect()).unwrap()
    }

    #[test]
    fn degenerate_staircase_profits() {
        let m = path(&[(0.0, 0.5), (0.0, 1.0), (0.05, 1.0)]);
        assert_eq!(m.profit(v(0.0, 0.5)), c(0.5).as_amount());
        assert_eq!(m.profit(v(0.05, 1.0)), Coord::ONE - c(0.05));
        assert!(!m.contains(v(0.05, 0.5)));
        assert_eq!(m.profit(v(0.5, 0.5)), Amount::ZERO);
    }

    #[test]
    fn single_vertex_trades_only_at_corner() {
        let m = path(&[(0.0, 1.0)]);
        assert!(m.contains(v(0.0, 1.0)));
        assert_eq!(m.profit(v(0.0, 1.0)), Amount::ONE);
        assert!(!m.contains(v(0.0, 0.99)));
    }

    #[test]
    fn rectangle_union_drops_dominated() {
        let m = Mechanism::rectangle_union([v(0.0, 1.0), v(0.25, 0.75)]);
        assert_eq!(m.vertices(), &[v(0.0, 0.75), v(0.25, 0.75), v(0.25, 1.0)]);
        let p = m.payments(v(0.0, 1.0)).unwrap();
        assert_eq!((p.seller, p.buyer), (c(0.25), c(0.75)));
    }

    #[test]
    fn canonicalization_merges_collinear() {
        let a = path(&[(0.0, 0.2), (0.1, 0.2), (0.3, 0.2), (0.3, 0.6), (0.3, 1.0)]);
        let b = path(&[(0.0, 0.2), (0.3, 0.2), (0.3, 1.0)]);
        assert_eq!(a, b);
        assert_eq!(a.vertices().len(), 3);
    }

    #[test]
    fn invalid_paths_rejected() {
        let bad = |pts: &[(f64, f64)]| Mechanism::from_vertices(pts.iter().map(|&(s, b)| v(s, b)).collect());
        assert_eq!(bad(&[(0.1, 0.5), (0.1, 1.0)]), Err(Error::BadStart));
        assert_eq!(bad(&[(0.0, 0.5), (0.2, 0.5)]), Err(Error::BadEnd));
        assert_eq!(bad(&[(0.0, 0.5), (0.2, 0.4), (0.2, 1.0)]), Err(Error::NotMonotone(1)));
        assert_eq!(bad(&[(0.0, 0.5), (0.2, 0.7), (0.2, 1.0)]), Err(Error::NotAxisParallel(0)));
    }

    #[test]
    fn budget_balance_classes() {
        let strong = Mechanism::posted_prices(c(0.5), c(0.5));
        assert_eq!(strong.budget_balance(), Ok(BudgetBalance::Strong));
        let weak = Mechanism::posted_prices(c(0.25), c(0.75));
        assert_eq!(weak.budget_balance(), Ok(BudgetBalance::Weak));
        let none = Mechanism::rectangle_union([v(0.0, 0.25), v(0.75, 1.0)]);
        assert_eq!(none.budget_balance(), Ok(BudgetBalance::None));
        assert_eq!(Mechanism::Empty.budget_balance(), Err(Error::EmptyMechanism));
    }

    #[test]
    fn efficiency_counts_only_trades() {
        let m = Mechanism::posted_prices(c(0.25), c(0.75));
        let e = m.efficiency(v(0.25, 0.75));
        assert_eq!(e.gft, c(0.75) - c(0.25));
        assert_eq!(e.social_welfare, c(0.75).as_amount());
        let e = m.efficiency(v(0.5, 0.75));
        assert_eq!(e.gft, Amount::ZERO);
        assert_eq!(e.social_welfare, c(0.5).as_amount());
    }

    #[test]
    fn restriction_clips_below_diagonal() {
        let m = path(&[(0.0, 0.5), (0.6, 0.5), (0.6, 1.0)]);
        let r = m.restrict_to_upper_triangle();
        assert!(r.vertices().iter().all(|u| u.in_upper_triangle()));
        assert_eq!(r.corners(), &[v(0.5, 0.5), v(0.6, 0.6)]);
        let inside = path(&[(0.0, 0.5), (0.2, 0.5), (0.2, 1.0)]);
        assert_eq!(inside.restrict_to_upper_triangle(), inside);
    }

    #[test]
    fn json_roundtrip_exact() {
        let m = path(&[(0.0, 0.3), (0.1, 0.3), (0.1, 1.0)]);
        let text = serde_json::to_string(&m).unwrap();
        let back: Mechanism = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let empty: Mechanism = serde_json::from_str(r#"{"vertices": []}"#).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn notched_excludes_samples() {
        let a = v(0.0, 0.5);
        let b = v(0.5, 1.0);
        let samples = [v(0.125, 0.625), v(0.3125, 0.8125)];
        let m = notched_staircase(a, b, &samples, c(1.0 / 512.0), c(1.0 / 128.0)).unwrap();
        for p in samples {
            assert_eq!(m.profit(p), Amount::ZERO);
        }
        assert!(m.contains(v(0.25, 0.75)));
        assert!(notched_staircase(a, b, &samples, c(1.0 / 64.0), c(1.0 / 128.0)).is_err());
        assert!(notched_staircase(a, b, &[v(0.1, 0.7)], c(1.0 / 512.0), c(1.0 / 128.0)).is_err());
    }

    #[test]
    fn threshold_payments_pass_audit() {
        let m = path(&[(0.0, 0.25), (0.25, 0.25), (0.25, 0.75), (0.5, 0.75), (0.5, 1.0)]);
        assert!(verify_dsic_ir(&m, c(1.0 / 16.0)).unwrap().is_empty());
    }

    #[test]
    fn underpaying_seller_is_caught() {
        let m = Mechanism::posted_prices(c(0.5), c(0.5));
        let cut = c(0.01).as_amount();
        let rule = |m: &Mechanism, bids: Valuation| {
            m.payments(bids).map(|p| (p.seller.as_amount() - cut, p.buyer.as_amount()))
        };
        let found = verify_dsic_ir_with(&m, c(1.0 / 16.0), &rule).unwrap();
        assert!(found.iter().any(|f| f.kind == ViolationKind::SellerIncentive));
    }

    #[test]
    fn overcharging_buyer_is_caught() {
        let m = Mechanism::posted_prices(c(0.25), c(0.75));
        let rule = |m: &Mechanism, bids: Valuation| {
            m.payments(bids).map(|_| (c(0.25).as_amount(), bids.b.as_amount()))
        };
        let found = verify_dsic_ir_with(&m, c(1.0 / 16.0), &rule).unwrap();
        assert!(found.iter().any(|f| f.kind == ViolationKind::BuyerIncentive));
    }
}
