//! Joint ads: two advertisers who must both be shown or neither.
//!
//! Allocation regions are closed towards the north-east and the broker
//! collects both thresholds, so revenue lies in `[0, 2]`. Reflecting the
//! first coordinate (`x -> 1 - x`) turns such a region into a bilateral
//! trade region; simplification goes through that reflection.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fixed::{Amount, Coord};
use crate::grid::{InfluenceRegion, Interval, PointGrid, TieBreak};
use crate::learner::{LearnerConfig, Problem};
use crate::mechanism::{Mechanism, Valuation};
use crate::simplify::{simplify, DyadicPrecision};

/// North-east monotone region given by its south-west corners, sorted with
/// `x` strictly increasing and `y` strictly decreasing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct NeMechanism {
    corners: Vec<Valuation>,
}

/// Minimal points of a set under the componentwise order.
fn minimal_corners<I: IntoIterator<Item = Valuation>>(points: I) -> Vec<Valuation> {
    let mut pts: Vec<Valuation> = points.into_iter().collect();
    pts.sort();
    let mut out: Vec<Valuation> = Vec::new();
    for p in pts {
        match out.last() {
            Some(last) if p.b >= last.b => {}
            _ => out.push(p),
        }
    }
    out
}

/// `(x, y) -> (1 - x, y)`.
pub fn reflect(v: Valuation) -> Valuation {
    Valuation::new(Coord::from_raw(Coord::ONE.raw() - v.s.raw()).expect("in range"), v.b)
}

impl NeMechanism {
    pub fn empty() -> NeMechanism {
        NeMechanism::default()
    }

    /// Union of the quadrants `[c.x, 1] x [c.y, 1]`.
    pub fn from_corners<I: IntoIterator<Item = Valuation>>(points: I) -> NeMechanism {
        NeMechanism { corners: minimal_corners(points) }
    }

    /// Reserve prices for both advertisers.
    pub fn posted(p1: Coord, p2: Coord) -> NeMechanism {
        Self::from_corners([Valuation::new(p1, p2)])
    }

    /// Validates a descending staircase from the top edge to the right edge.
    pub fn from_vertices(vertices: Vec<Valuation>) -> Result<NeMechanism> {
        let Some(first) = vertices.first() else {
            return Ok(NeMechanism::empty());
        };
        if first.b != Coord::ONE {
            return Err(Error::BadStart);
        }
        if vertices.last().expect("non-empty").s != Coord::ONE {
            return Err(Error::BadEnd);
        }
        for (i, w) in vertices.windows(2).enumerate() {
            if w[1].s < w[0].s || w[1].b > w[0].b {
                return Err(Error::NotMonotone(i + 1));
            }
            if w[1].s != w[0].s && w[1].b != w[0].b {
                return Err(Error::NotAxisParallel(i));
            }
        }
        Ok(Self::from_corners(vertices))
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    pub fn corners(&self) -> &[Valuation] {
        &self.corners
    }

    /// Boundary from the top edge down to the right edge.
    pub fn vertices(&self) -> Vec<Valuation> {
        let cs = &self.corners;
        let mut out = Vec::with_capacity(2 * cs.len() + 1);
        let Some(first) = cs.first() else {
            return out;
        };
        if first.b < Coord::ONE {
            out.push(Valuation::new(first.s, Coord::ONE));
        }
        for (i, c) in cs.iter().enumerate() {
            out.push(*c);
            if let Some(next) = cs.get(i + 1) {
                out.push(Valuation::new(next.s, c.b));
            }
        }
        let last = *cs.last().expect("non-empty");
        if last.s < Coord::ONE {
            out.push(Valuation::new(Coord::ONE, last.b));
        }
        out
    }

    /// Threshold bids `(p1, p2)` when the ads are shown.
    pub fn prices(&self, v: Valuation) -> Option<(Coord, Coord)> {
        let cs = &self.corners;
        let i = cs.partition_point(|c| c.b > v.b);
        let p1 = cs.get(i)?.s;
        if p1 > v.s {
            return None;
        }
        let k = cs.partition_point(|c| c.s <= v.s);
        Some((p1, cs[k - 1].b))
    }

    pub fn contains(&self, v: Valuation) -> bool {
        self.prices(v).is_some()
    }

    pub fn revenue(&self, v: Valuation) -> Amount {
        self.prices(v).map_or(Amount::ZERO, |(p1, p2)| p1.as_amount() + p2.as_amount())
    }

    /// The bilateral trade region obtained by reflecting `x`.
    pub fn reflected(&self) -> Mechanism {
        Mechanism::rectangle_union(self.corners.iter().map(|c| reflect(*c)))
    }

    pub fn from_reflected(m: &Mechanism) -> NeMechanism {
        Self::from_corners(m.corners().iter().map(|c| reflect(*c)))
    }
}

impl fmt::Display for NeMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("EMPTY");
        }
        let parts: Vec<String> = self.vertices().iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(" -> "))
    }
}

#[derive(Serialize, Deserialize)]
struct NeJson {
    problem: String,
    vertices: Vec<Valuation>,
}

impl Serialize for NeMechanism {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NeJson { problem: "joint-ads".into(), vertices: self.vertices() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for NeMechanism {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<NeMechanism, D::Error> {
        let raw = NeJson::deserialize(d)?;
        NeMechanism::from_vertices(raw.vertices).map_err(serde::de::Error::custom)
    }
}

/// Coarsest north-east staircase through the reflected trace; it contains
/// the original region and loses at most `2ε` per shown valuation.
pub fn simplify_ne(m: &NeMechanism, prec: DyadicPrecision) -> NeMechanism {
    NeMechanism::from_reflected(&simplify(&m.reflected(), prec))
}

/// Edge of a descending staircase, for the revenue decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeEdge {
    Entry(Valuation),
    Down(Valuation, Valuation),
    Right(Valuation, Valuation),
    Exit(Valuation),
}

impl NeEdge {
    pub fn weight(&self) -> Amount {
        match *self {
            NeEdge::Entry(u) | NeEdge::Down(u, _) => u.s.as_amount(),
            NeEdge::Right(u, _) | NeEdge::Exit(u) => u.b.as_amount(),
        }
    }

    pub fn influence(&self) -> InfluenceRegion {
        match *self {
            NeEdge::Entry(u) => InfluenceRegion {
                s: Interval::closed(u.s, Coord::ONE),
                b: Interval::closed(Coord::ONE, Coord::ONE),
            },
            NeEdge::Down(top, bottom) => InfluenceRegion {
                s: Interval::closed(top.s, Coord::ONE),
                b: Interval::closed_open(bottom.b, top.b),
            },
            NeEdge::Right(l, r) => InfluenceRegion {
                s: Interval::closed_open(l.s, r.s),
                b: Interval::closed(l.b, Coord::ONE),
            },
            NeEdge::Exit(u) => InfluenceRegion {
                s: Interval::closed(Coord::ONE, Coord::ONE),
                b: Interval::closed(u.b, Coord::ONE),
            },
        }
    }
}

pub fn ne_edges(m: &NeMechanism) -> Vec<NeEdge> {
    let vs = m.vertices();
    let Some(first) = vs.first() else {
        return Vec::new();
    };
    let mut out = vec![NeEdge::Entry(*first)];
    for w in vs.windows(2) {
        if w[0].s == w[1].s {
            out.push(NeEdge::Down(w[0], w[1]));
        } else {
            out.push(NeEdge::Right(w[0], w[1]));
        }
    }
    out.push(NeEdge::Exit(*vs.last().expect("non-empty")));
    out
}

pub fn total_revenue(m: &NeMechanism, points: &[(Valuation, u64)]) -> Amount {
    points.iter().map(|(v, n)| m.revenue(*v).times(*n)).sum()
}

pub fn total_revenue_by_edges(m: &NeMechanism, points: &[(Valuation, u64)]) -> Amount {
    ne_edges(m)
        .iter()
        .map(|e| e.weight().times(crate::grid::count_in_region(points, &e.influence())))
        .sum()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pred {
    Start,
    Above,
    Left,
}

/// Revenue-maximizing descending staircase on the sample grid.
pub fn empirical_optimum_ne(grid: &PointGrid, tie_break: TieBreak) -> (NeMechanism, Amount) {
    if grid.is_empty() {
        return (NeMechanism::empty(), Amount::ZERO);
    }
    let (xs, ys) = (grid.xs(), grid.ys());
    let (nx, ny) = (xs.len(), ys.len());
    let (top, right) = (ny - 1, nx - 1);
    let mut cnt = vec![0u64; nx * ny];
    for (v, n) in grid.points() {
        let i = xs.binary_search(&v.s).expect("indexed");
        let j = ys.binary_search(&v.b).expect("indexed");
        cnt[j * nx + i] += n;
    }
    // row_suffix[j][i]: samples at b = ys[j] with s >= xs[i].
    // col_suffix[i][j]: samples at s = xs[i] with b >= ys[j].
    let mut row_suffix = vec![0u64; nx * ny];
    let mut col_suffix = vec![0u64; nx * ny];
    for j in 0..ny {
        let mut acc = 0;
        for i in (0..nx).rev() {
            acc += cnt[j * nx + i];
            row_suffix[j * nx + i] = acc;
        }
    }
    for i in 0..nx {
        let mut acc = 0;
        for j in (0..ny).rev() {
            acc += cnt[j * nx + i];
            col_suffix[i * ny + j] = acc;
        }
    }
    let down_into = |i: usize, j: usize| xs[i].as_amount().times(row_suffix[j * nx + i]);
    let right_from = |i: usize, j: usize| ys[j].as_amount().times(col_suffix[i * ny + j]);
    let entry = |i: usize| xs[i].as_amount().times(row_suffix[top * nx + i]);
    let exit = |j: usize| ys[j].as_amount().times(col_suffix[right * ny + j]);

    let minimal = tie_break == TieBreak::MinimalRegion;
    let better = |cand: Amount, cur: Amount, preferred: bool| cand > cur || (cand == cur && preferred);
    let mut best: Vec<(Amount, Pred)> = vec![(Amount::ZERO, Pred::Start); nx * ny];
    for i in 0..nx {
        for j in (0..ny).rev() {
            let mut cur: Option<(Amount, Pred)> = (j == top).then(|| (entry(i), Pred::Start));
            if j < top {
                let cand = best[(j + 1) * nx + i].0 + down_into(i, j);
                cur = match cur {
                    Some((c, p)) if !better(cand, c, !minimal) => Some((c, p)),
                    _ => Some((cand, Pred::Above)),
                };
            }
            if i > 0 {
                let cand = best[j * nx + i - 1].0 + right_from(i - 1, j);
                cur = match cur {
                    Some((c, p)) if !better(cand, c, !minimal) => Some((c, p)),
                    _ => Some((cand, Pred::Left)),
                };
            }
            best[j * nx + i] = cur.expect("top row or has a predecessor");
        }
    }
    let mut end: Option<(Amount, usize)> = None;
    for j in 0..ny {
        let cand = best[j * nx + right].0 + exit(j);
        end = match end {
            Some((c, k)) if !better(cand, c, minimal) => Some((c, k)),
            _ => Some((cand, j)),
        };
    }
    let (value, mut j) = end.expect("non-empty column");
    let mut i = right;
    let mut nodes = vec![grid.node(i, j)];
    loop {
        match best[j * nx + i].1 {
            Pred::Start => break,
            Pred::Above => j += 1,
            Pred::Left => i -= 1,
        }
        nodes.push(grid.node(i, j));
    }
    nodes.reverse();
    (NeMechanism::from_vertices(nodes).expect("grid staircase"), value)
}

/// Joint-ads revenue maximization.
pub struct JointAds;

impl Problem for JointAds {
    const NAME: &'static str = "joint-ads";
    type Mech = NeMechanism;

    fn optimum(grid: &PointGrid, cfg: &LearnerConfig) -> (NeMechanism, Amount) {
        empirical_optimum_ne(grid, cfg.tie_break)
    }

    fn simplify(m: &NeMechanism, prec: DyadicPrecision) -> NeMechanism {
        simplify_ne(m, prec)
    }

    fn gain(m: &NeMechanism, v: Valuation) -> Amount {
        m.revenue(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: f64, b: f64) -> Valuation {
        Valuation::from_f64(s, b).unwrap()
    }

    fn c(x: f64) -> Coord {
        Coord::from_f64(x).unwrap()
    }

    #[test]
    fn posted_prices_revenue() {
        let m = NeMechanism::posted(c(0.3), c(0.6));
        assert_eq!(m.revenue(v(0.5, 0.7)), c(0.3).as_amount() + c(0.6).as_amount());
        assert_eq!(m.revenue(v(0.2, 0.7)), Amount::ZERO);
    }

    #[test]
    fn staircase_thresholds() {
        let m = NeMechanism::from_vertices(vec![v(0.2, 1.0), v(0.2, 0.5), v(0.7, 0.5), v(0.7, 0.1), v(1.0, 0.1)]).unwrap();
        assert_eq!(m.corners(), &[v(0.2, 0.5), v(0.7, 0.1)]);
        // At x = 0.8 the region already starts at y = 0.1.
        assert_eq!(m.prices(v(0.8, 0.6)), Some((c(0.2), c(0.1))));
        assert_eq!(m.revenue(v(0.8, 0.6)), c(0.2).as_amount() + c(0.1).as_amount());
        assert_eq!(m.prices(v(0.5, 0.6)), Some((c(0.2), c(0.5))));
        assert_eq!(m.prices(v(0.5, 0.3)), None);
    }

    #[test]
    fn optimum_on_single_point() {
        let g = PointGrid::from_samples(&[v(0.5, 0.5)]);
        let (m, val) = empirical_optimum_ne(&g, TieBreak::MinimalRegion);
        assert_eq!(val, Amount::ONE);
        assert_eq!(m.corners(), &[v(0.5, 0.5)]);
        let (m, val) = empirical_optimum_ne(&PointGrid::from_samples(&[]), TieBreak::MinimalRegion);
        assert!(m.is_empty());
        assert_eq!(val, Amount::ZERO);
    }

    #[test]
    fn decomposition_matches_direct() {
        let m = NeMechanism::from_corners([v(0.5, 0.5)]);
        let pts = [(v(0.5, 0.7), 1), (v(0.5, 0.5), 2), (v(1.0, 1.0), 1), (v(0.9, 0.5), 1)];
        assert_eq!(total_revenue(&m, &pts), total_revenue_by_edges(&m, &pts));
    }

    #[test]
    fn simplification_contains_and_snaps() {
        let m = NeMechanism::from_corners([v(0.3, 0.6), v(0.6, 0.2)]);
        let s = simplify_ne(&m, DyadicPrecision::new(2).unwrap());
        let prec = DyadicPrecision::new(2).unwrap();
        assert_eq!(
            crate::simplify::intersection_points(&s.reflected(), prec),
            crate::simplify::intersection_points(&m.reflected(), prec)
        );
        for i in 0..=20 {
            for j in 0..=20 {
                let q = v(i as f64 / 20.0, j as f64 / 20.0);
                if m.contains(q) {
                    assert!(s.contains(q));
                    assert!(m.revenue(q) - s.revenue(q) <= c(0.5).as_amount());
                }
            }
        }
    }

    #[test]
    fn json_is_tagged() {
        let m = NeMechanism::posted(c(0.25), c(0.5));
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"problem\":\"joint-ads\""));
        let back: NeMechanism = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
