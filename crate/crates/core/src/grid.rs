//! Point grid over a sample multiset and the exact empirical optimum.
//!
//! Total profit of a staircase decomposes over its edges: a vertical edge at
//! `x` charges `x` to every sample whose seller threshold it sets, and a
//! horizontal edge at `y` collects `y` from every sample whose buyer
//! threshold it sets. Two terminal edges handle the samples on the left
//! column and on the top row. Maximizing over staircases is then a longest
//! path problem on the grid DAG.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixed::{Amount, Coord};
use crate::mechanism::{BoundaryPath, Mechanism, Valuation};

/// Grid lines through every sample coordinate plus the square's borders.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointGrid {
    xs: Vec<Coord>,
    ys: Vec<Coord>,
    points: Vec<(Valuation, u64)>,
    counts: Vec<u64>,
}

impl PointGrid {
    pub fn new<I: IntoIterator<Item = (Valuation, u64)>>(points: I) -> PointGrid {
        let mut merged: BTreeMap<Valuation, u64> = BTreeMap::new();
        for (v, n) in points {
            if n > 0 {
                *merged.entry(v).or_default() += n;
            }
        }
        let mut xs = vec![Coord::ZERO, Coord::ONE];
        let mut ys = vec![Coord::ZERO, Coord::ONE];
        for v in merged.keys() {
            xs.push(v.s);
            ys.push(v.b);
        }
        xs.sort_unstable();
        xs.dedup();
        ys.sort_unstable();
        ys.dedup();
        let nx = xs.len();
        let mut counts = vec![0; nx * ys.len()];
        for (v, n) in &merged {
            let i = xs.binary_search(&v.s).expect("indexed");
            let j = ys.binary_search(&v.b).expect("indexed");
            counts[j * nx + i] += n;
        }
        PointGrid { xs, ys, points: merged.into_iter().collect(), counts }
    }

    pub fn from_samples(samples: &[Valuation]) -> PointGrid {
        Self::new(samples.iter().map(|v| (*v, 1)))
    }

    pub fn xs(&self) -> &[Coord] {
        &self.xs
    }

    pub fn ys(&self) -> &[Coord] {
        &self.ys
    }

    /// Distinct samples with multiplicities, sorted.
    pub fn points(&self) -> &[(Valuation, u64)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn node(&self, i: usize, j: usize) -> Valuation {
        Valuation::new(self.xs[i], self.ys[j])
    }

    fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[j * self.xs.len() + i]
    }

    /// All rightward and upward unit edges.
    pub fn edges(&self) -> Vec<GridEdge> {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let mut out = Vec::with_capacity(nx * (ny - 1) + ny * (nx - 1));
        for j in 0..ny {
            for i in 0..nx {
                if i + 1 < nx {
                    out.push(GridEdge::horizontal(self.node(i, j), self.node(i + 1, j)));
                }
                if j + 1 < ny {
                    out.push(GridEdge::vertical(self.node(i, j), self.node(i, j + 1)));
                }
            }
        }
        out
    }

    /// Every edge with its weight and its sample count, for debugging.
    pub fn dump(&self) -> GridDump {
        let weights = self
            .edges()
            .into_iter()
            .map(|e| {
                let count = count_in_region(&self.points, &e.influence());
                EdgeDump { kind: e.kind, from: e.from, to: e.to, weight: e.weight(), count }
            })
            .collect();
        GridDump { xs: self.xs.clone(), ys: self.ys.clone(), weights }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridDump {
    pub xs: Vec<Coord>,
    pub ys: Vec<Coord>,
    pub weights: Vec<EdgeDump>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeDump {
    pub kind: EdgeKind,
    pub from: Valuation,
    pub to: Valuation,
    pub weight: Amount,
    pub count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Horizontal,
    Vertical,
    /// Zero-length edge where the path enters on the left border.
    Entry,
    /// Zero-length edge where the path leaves through the top border.
    Exit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridEdge {
    pub kind: EdgeKind,
    pub from: Valuation,
    pub to: Valuation,
}

impl GridEdge {
    pub fn horizontal(from: Valuation, to: Valuation) -> GridEdge {
        GridEdge { kind: EdgeKind::Horizontal, from, to }
    }

    pub fn vertical(from: Valuation, to: Valuation) -> GridEdge {
        GridEdge { kind: EdgeKind::Vertical, from, to }
    }

    pub fn entry(at: Valuation) -> GridEdge {
        GridEdge { kind: EdgeKind::Entry, from: at, to: at }
    }

    pub fn exit(at: Valuation) -> GridEdge {
        GridEdge { kind: EdgeKind::Exit, from: at, to: at }
    }

    /// Profit contributed per sample in the influence region.
    pub fn weight(&self) -> Amount {
        match self.kind {
            EdgeKind::Horizontal | EdgeKind::Entry => self.from.b.as_amount(),
            EdgeKind::Vertical | EdgeKind::Exit => -self.from.s.as_amount(),
        }
    }

    /// Samples whose buyer (horizontal) or seller (vertical) threshold is
    /// set by this edge.
    pub fn influence(&self) -> InfluenceRegion {
        let (u, w) = (self.from, self.to);
        match self.kind {
            EdgeKind::Horizontal => InfluenceRegion {
                s: Interval::open_closed(u.s, w.s),
                b: Interval::closed(u.b, Coord::ONE),
            },
            EdgeKind::Entry => InfluenceRegion {
                s: Interval::closed(Coord::ZERO, Coord::ZERO),
                b: Interval::closed(u.b, Coord::ONE),
            },
            EdgeKind::Vertical => InfluenceRegion {
                s: Interval::closed(Coord::ZERO, u.s),
                b: Interval::closed_open(u.b, w.b),
            },
            EdgeKind::Exit => InfluenceRegion {
                s: Interval::closed(Coord::ZERO, u.s),
                b: Interval::closed(Coord::ONE, Coord::ONE),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interval {
    pub lo: Coord,
    pub hi: Coord,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn closed(lo: Coord, hi: Coord) -> Interval {
        Interval { lo, hi, lo_closed: true, hi_closed: true }
    }

    pub fn closed_open(lo: Coord, hi: Coord) -> Interval {
        Interval { lo, hi, lo_closed: true, hi_closed: false }
    }

    pub fn open_closed(lo: Coord, hi: Coord) -> Interval {
        Interval { lo, hi, lo_closed: false, hi_closed: true }
    }

    pub fn contains(&self, x: Coord) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InfluenceRegion {
    pub s: Interval,
    pub b: Interval,
}

impl InfluenceRegion {
    pub fn contains(&self, v: Valuation) -> bool {
        self.s.contains(v.s) && self.b.contains(v.b)
    }
}

pub fn count_in_region(points: &[(Valuation, u64)], region: &InfluenceRegion) -> u64 {
    points.iter().filter(|(v, _)| region.contains(*v)).map(|(_, n)| n).sum()
}

/// Entry edge, unit edges split at the grid lines, and exit edge.
pub fn path_edges(path: &BoundaryPath, grid: &PointGrid) -> Vec<GridEdge> {
    let vs = path.vertices();
    let mut out = vec![GridEdge::entry(vs[0])];
    for (u, w) in path.segments() {
        if u.b == w.b {
            let mut prev = u;
            for &x in grid.xs().iter().filter(|&&x| x > u.s && x < w.s) {
                let next = Valuation::new(x, u.b);
                out.push(GridEdge::horizontal(prev, next));
                prev = next;
            }
            out.push(GridEdge::horizontal(prev, w));
        } else {
            let mut prev = u;
            for &y in grid.ys().iter().filter(|&&y| y > u.b && y < w.b) {
                let next = Valuation::new(u.s, y);
                out.push(GridEdge::vertical(prev, next));
                prev = next;
            }
            out.push(GridEdge::vertical(prev, w));
        }
    }
    out.push(GridEdge::exit(*vs.last().expect("non-empty")));
    out
}

/// Sum of per-sample profits.
pub fn total_profit(m: &Mechanism, points: &[(Valuation, u64)]) -> Amount {
    points.iter().map(|(v, n)| m.profit(*v).times(*n)).sum()
}

/// Same total obtained edge by edge from weights and region counts.
pub fn total_profit_by_edges(m: &Mechanism, grid: &PointGrid) -> Amount {
    let Some(path) = m.boundary() else {
        return Amount::ZERO;
    };
    path_edges(path, grid)
        .iter()
        .map(|e| e.weight().times(count_in_region(grid.points(), &e.influence())))
        .sum()
}

/// Preference among equally profitable staircases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Go up before going right; stop at the leftmost exit.
    #[default]
    MinimalRegion,
    /// Go right before going up; stop at the rightmost exit.
    MaximalRegion,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OptimumOptions {
    pub restrict_to_upper_triangle: bool,
    pub tie_break: TieBreak,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pred {
    Start,
    Below,
    Left,
}

/// Staircase of maximum total profit over grid paths, with its value.
/// The empty sample set yields the empty mechanism.
pub fn empirical_optimum(grid: &PointGrid, opts: OptimumOptions) -> (Mechanism, Amount) {
    if grid.is_empty() {
        return (Mechanism::Empty, Amount::ZERO);
    }
    let (xs, ys) = (grid.xs(), grid.ys());
    let (nx, ny) = (xs.len(), ys.len());
    let top = ny - 1;
    let valid = |i: usize, j: usize| !opts.restrict_to_upper_triangle || xs[i] <= ys[j];

    // row_prefix[j][i]: samples at b = ys[j] with s <= xs[i].
    // col_suffix[i][j]: samples at s = xs[i] with b >= ys[j].
    let mut row_prefix = vec![0u64; nx * ny];
    let mut col_suffix = vec![0u64; nx * ny];
    for j in 0..ny {
        let mut acc = 0;
        for i in 0..nx {
            acc += grid.count(i, j);
            row_prefix[j * nx + i] = acc;
        }
    }
    for i in 0..nx {
        let mut acc = 0;
        for j in (0..ny).rev() {
            acc += grid.count(i, j);
            col_suffix[i * ny + j] = acc;
        }
    }
    let vertical = |i: usize, j: usize| -xs[i].as_amount().times(row_prefix[j * nx + i]);
    let horizontal = |i: usize, j: usize| ys[j].as_amount().times(col_suffix[(i + 1) * ny + j]);
    let entry = |j: usize| ys[j].as_amount().times(col_suffix[j]);
    let exit = |i: usize| -xs[i].as_amount().times(row_prefix[top * nx + i]);

    let minimal = opts.tie_break == TieBreak::MinimalRegion;
    let better = |cand: Amount, cur: Amount, preferred: bool| {
        cand > cur || (cand == cur && preferred)
    };
    let mut best: Vec<Option<(Amount, Pred)>> = vec![None; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            if !valid(i, j) {
                continue;
            }
            let mut cur: Option<(Amount, Pred)> = None;
            if i == 0 {
                cur = Some((entry(j), Pred::Start));
            }
            if j > 0 {
                if let Some((val, _)) = best[(j - 1) * nx + i] {
                    let cand = val + vertical(i, j - 1);
                    cur = match cur {
                        Some((c, p)) if !better(cand, c, !minimal) => Some((c, p)),
                        _ => Some((cand, Pred::Below)),
                    };
                }
            }
            if i > 0 {
                if let Some((val, _)) = best[j * nx + i - 1] {
                    let cand = val + horizontal(i - 1, j);
                    cur = match cur {
                        Some((c, p)) if !better(cand, c, minimal) => Some((c, p)),
                        _ => Some((cand, Pred::Left)),
                    };
                }
            }
            best[j * nx + i] = cur;
        }
    }

    let mut end: Option<(Amount, usize)> = None;
    for i in 0..nx {
        if let Some((val, _)) = best[top * nx + i] {
            let cand = val + exit(i);
            end = match end {
                Some((c, k)) if !better(cand, c, !minimal) => Some((c, k)),
                _ => Some((cand, i)),
            };
        }
    }
    let (value, mut i) = end.expect("top-left node always valid");
    let mut j = top;
    let mut nodes = vec![grid.node(i, j)];
    loop {
        match best[j * nx + i].expect("reachable").1 {
            Pred::Start => break,
            Pred::Below => j -= 1,
            Pred::Left => i -= 1,
        }
        nodes.push(grid.node(i, j));
    }
    nodes.reverse();
    let m = Mechanism::from_vertices(nodes).expect("grid paths are staircases");
    (m, value)
}

/// Number of complete paths on an `nx` by `ny` node grid.
pub fn count_complete_paths(nx: usize, ny: usize) -> u128 {
    let mut f = vec![0u128; nx * ny];
    for i in (0..nx).rev() {
        for j in (0..ny).rev() {
            let mut n = u128::from(j + 1 == ny);
            if j + 1 < ny {
                n += f[i * ny + j + 1];
            }
            if i + 1 < nx {
                n += f[(i + 1) * ny + j];
            }
            f[i * ny + j] = n;
        }
    }
    (0..ny).map(|j| f[j]).sum()
}

pub const MAX_ENUMERATION_NODES: usize = 121;

/// Lazily yields every staircase running along grid edges from the left
/// border to the top border.
pub fn enumerate_complete_paths(grid: &PointGrid) -> Result<CompletePaths<'_>> {
    let nodes = grid.xs().len() * grid.ys().len();
    if nodes > MAX_ENUMERATION_NODES {
        return Err(Error::GridTooLarge(nodes));
    }
    Ok(CompletePaths { grid, stack: Vec::new(), next_start: 0 })
}

pub struct CompletePaths<'a> {
    grid: &'a PointGrid,
    stack: Vec<(usize, usize, u8)>,
    next_start: usize,
}

impl Iterator for CompletePaths<'_> {
    type Item = BoundaryPath;

    fn next(&mut self) -> Option<BoundaryPath> {
        let (nx, ny) = (self.grid.xs().len(), self.grid.ys().len());
        loop {
            if self.stack.is_empty() {
                if self.next_start >= ny {
                    return None;
                }
                self.stack.push((0, self.next_start, 0));
                self.next_start += 1;
            }
            let frame = self.stack.last_mut().expect("non-empty");
            let (i, j, action) = *frame;
            frame.2 += 1;
            match action {
                0 if j + 1 == ny => {
                    let vs = self.stack.iter().map(|&(i, j, _)| self.grid.node(i, j)).collect();
                    return Some(BoundaryPath::new(vs).expect("grid paths are staircases"));
                }
                0 => {}
                1 if j + 1 < ny => self.stack.push((i, j + 1, 0)),
                2 if i + 1 < nx => self.stack.push((i + 1, j, 0)),
                1 | 2 => {}
                _ => {
                    self.stack.pop();
                }
            }
        }
    }
}
