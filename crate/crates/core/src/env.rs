//! Valuation sources and exact expectations.

use std::fmt;
use std::path::Path;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fixed::{parse_rational, Coord};
use crate::mechanism::{Mechanism, Valuation};

/// An exact probability or rational parameter, written as `"3/8"` or `"0.375"`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ratio(pub BigRational);

impl Ratio {
    pub fn new(num: i64, den: i64) -> Ratio {
        Ratio(BigRational::new(num.into(), den.into()))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Ratio, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let text = match &v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            _ => return Err(serde::de::Error::custom("expected a number or string")),
        };
        parse_rational(&text).map(Ratio).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub value: Valuation,
    pub prob: Ratio,
}

/// Which of the two reference mechanisms the biased pair favors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Favored {
    M1,
    M2,
}

/// Serializable description of a valuation source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EnvSpec {
    FiniteSupport { atoms: Vec<Atom> },
    SegmentUniform { from: Valuation, to: Valuation },
    TwoPointBiased { bias: Ratio, favored: Favored },
    #[serde(rename = "ADVERSARIAL_3T")]
    Adversarial3t { delta: Coord },
    Replay { path: String },
}

/// The two-atom law on which posting the corner `(0, 1)` and posting the
/// prices `(1/4, 3/4)` tie in expectation.
pub fn two_atom_support() -> [Valuation; 2] {
    let q = Coord::dyadic(1, 2).expect("const");
    let tq = Coord::dyadic(3, 2).expect("const");
    [Valuation::new(Coord::ZERO, Coord::ONE), Valuation::new(q, tq)]
}

impl EnvSpec {
    pub fn uniform_over(values: &[Valuation]) -> EnvSpec {
        let n = values.len() as i64;
        EnvSpec::FiniteSupport {
            atoms: values.iter().map(|v| Atom { value: *v, prob: Ratio::new(1, n) }).collect(),
        }
    }

    /// Biased pair with `ε = 1/(4√T)`: exact when `T` is a perfect square,
    /// otherwise rounded down to a multiple of `2^-32`. Returns the environment and
    /// the unrounded bias.
    pub fn two_point_for_horizon(horizon: u64, favored: Favored) -> Result<(EnvSpec, f64)> {
        if horizon == 0 {
            return Err(Error::InvalidEnvironment("horizon must be positive".into()));
        }
        let exact = 1.0 / (4.0 * (horizon as f64).sqrt());
        let root = horizon.isqrt();
        let bias = if root * root == horizon {
            Ratio::new(1, 4 * root as i64)
        } else {
            let scaled = (exact * (1u64 << 32) as f64).floor() as i64;
            Ratio(BigRational::new(scaled.into(), BigInt::from(1u64 << 32)))
        };
        Ok((EnvSpec::TwoPointBiased { bias, favored }, exact))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::FiniteSupport { .. } | EnvSpec::TwoPointBiased { .. } => {
                let atoms = self.atoms()?;
                if atoms.is_empty() {
                    return Err(Error::InvalidEnvironment("no atoms".into()));
                }
                let mut total = BigRational::zero();
                for (_, p) in &atoms {
                    if p.is_negative() {
                        return Err(Error::InvalidEnvironment("negative probability".into()));
                    }
                    total += p;
                }
                if !total.is_one() {
                    return Err(Error::InvalidEnvironment(format!("probabilities sum to {total}")));
                }
                common_denominator(&atoms)?;
                Ok(())
            }
            EnvSpec::SegmentUniform { .. } => Ok(()),
            EnvSpec::Adversarial3t { delta } => {
                if *delta == Coord::ZERO || delta.raw() < (1 << 16) {
                    return Err(Error::InvalidEnvironment("delta must be positive".into()));
                }
                Ok(())
            }
            EnvSpec::Replay { path } => load_replay(Path::new(path)).map(|_| ()),
        }
    }

    /// Support with probabilities for the discrete variants.
    pub fn atoms(&self) -> Result<Vec<(Valuation, BigRational)>> {
        match self {
            EnvSpec::FiniteSupport { atoms } => {
                Ok(atoms.iter().map(|a| (a.value, a.prob.0.clone())).collect())
            }
            EnvSpec::TwoPointBiased { bias, favored } => {
                let eps = &bias.0;
                if eps.is_negative() || eps > &BigRational::one() {
                    return Err(Error::InvalidEnvironment("bias must lie in [0, 1]".into()));
                }
                let half = BigRational::new(1.into(), 2.into());
                let up = (BigRational::one() + eps) * &half;
                let down = (BigRational::one() - eps) * &half;
                let [m1, m2] = two_atom_support();
                Ok(match favored {
                    Favored::M1 => vec![(m1, up), (m2, down)],
                    Favored::M2 => vec![(m1, down), (m2, up)],
                })
            }
            _ => Err(Error::NoExactExpectation),
        }
    }

    pub fn exact_law(&self) -> Result<ExactLaw> {
        match self {
            EnvSpec::SegmentUniform { from, to } => Ok(ExactLaw::Segment { from: *from, to: *to }),
            EnvSpec::FiniteSupport { .. } | EnvSpec::TwoPointBiased { .. } => Ok(ExactLaw::Atoms(self.atoms()?)),
            _ => Err(Error::NoExactExpectation),
        }
    }

    /// Sampler for rounds `1..=horizon` seeded by `seed`.
    pub fn stream(&self, seed: u64, horizon: u64) -> Result<EnvStream> {
        self.validate()?;
        let kind = match self {
            EnvSpec::FiniteSupport { .. } | EnvSpec::TwoPointBiased { .. } => {
                let atoms = self.atoms()?;
                let den = common_denominator(&atoms)?;
                let mut cumulative = Vec::with_capacity(atoms.len());
                let mut acc = 0u64;
                for (_, p) in &atoms {
                    acc += (p * BigRational::from_integer(den.into())).to_integer().to_u64().expect("bounded");
                    cumulative.push(acc);
                }
                StreamKind::Atoms { values: atoms.iter().map(|a| a.0).collect(), cumulative, total: den }
            }
            EnvSpec::SegmentUniform { from, to } => StreamKind::Segment {
                from: *from,
                ds: to.s.raw() as i128 - from.s.raw() as i128,
                db: to.b.raw() as i128 - from.b.raw() as i128,
            },
            EnvSpec::Adversarial3t { delta } => StreamKind::Adversarial(AdversarialState::new(*delta, horizon)),
            EnvSpec::Replay { path } => StreamKind::Replay(load_replay(Path::new(path))?),
        };
        Ok(EnvStream { rng: ChaCha8Rng::seed_from_u64(seed), kind, round: 0 })
    }
}

fn common_denominator(atoms: &[(Valuation, BigRational)]) -> Result<u64> {
    let mut den = BigInt::one();
    for (_, p) in atoms {
        den = den.lcm(p.denom());
    }
    den.to_u64()
        .ok_or_else(|| Error::InvalidEnvironment("probability denominators too large".into()))
}

/// Reads `t,s,b` rows with `t = 1, 2, ...`.
pub fn load_replay(path: &Path) -> Result<Vec<Valuation>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::InvalidEnvironment(e.to_string()))?;
    let mut out = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() != 3 {
            return Err(Error::InvalidEnvironment(format!("row {} has {} fields", k + 1, row.len())));
        }
        let t: u64 = row[0].trim().parse().map_err(|_| Error::InvalidNumber(row[0].to_string()))?;
        if t != k as u64 + 1 {
            return Err(Error::InvalidEnvironment(format!("expected round {}, found {t}", k + 1)));
        }
        out.push(Valuation::new(row[1].parse()?, row[2].parse()?));
    }
    Ok(out)
}

pub fn write_replay(path: &Path, values: &[Valuation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "s", "b"])?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([(k + 1).to_string(), v.s.to_string(), v.b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Seeded stream of valuations; rounds are drawn in order.
pub struct EnvStream {
    rng: ChaCha8Rng,
    kind: StreamKind,
    round: u64,
}

enum StreamKind {
    Atoms { values: Vec<Valuation>, cumulative: Vec<u64>, total: u64 },
    Segment { from: Valuation, ds: i128, db: i128 },
    Adversarial(AdversarialState),
    Replay(Vec<Valuation>),
}

impl EnvStream {
    /// Valuation for the next round.
    pub fn sample(&mut self) -> Result<Valuation> {
        self.round += 1;
        match &mut self.kind {
            StreamKind::Atoms { values, cumulative, total } => {
                let u = self.rng.gen_range(0..*total);
                let k = cumulative.partition_point(|&c| c <= u);
                Ok(values[k])
            }
            StreamKind::Segment { from, ds, db } => {
                let u = (self.rng.gen::<u64>() >> 2) as i128;
                let shift = |d: i128| (u * d).div_euclid(1i128 << 62);
                let s = from.s.raw() as i128 + shift(*ds);
                let b = from.b.raw() as i128 + shift(*db);
                Ok(Valuation::new(Coord::from_raw(s as u64)?, Coord::from_raw(b as u64)?))
            }
            StreamKind::Adversarial(state) => {
                let right = self.rng.gen::<bool>();
                Ok(state.step(right))
            }
            StreamKind::Replay(rows) => {
                rows.get(self.round as usize - 1).copied().ok_or(Error::ReplayExhausted(self.round))
            }
        }
    }

    pub fn rounds_drawn(&self) -> u64 {
        self.round
    }

    pub fn adversarial_trace(&self) -> Option<&AdversarialTrace> {
        match &self.kind {
            StreamKind::Adversarial(state) => Some(&state.trace),
            _ => None,
        }
    }
}

/// One round of the adversarial construction. Exact positions are integers
/// in units of `delta / denominator`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdversarialRound {
    /// `+1` emits `(b_t, 1/2)`, `-1` emits `(a_t, 1)`.
    pub gamma: i8,
    pub a_units: i128,
    pub b_units: i128,
    pub emitted: Valuation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdversarialTrace {
    pub delta: Coord,
    pub denominator: i128,
    /// Rounds after this one reuse its step length.
    pub exact_rounds: u32,
    pub rounds: Vec<AdversarialRound>,
}

impl AdversarialTrace {
    pub fn exact(&self, units: i128) -> BigRational {
        self.delta.to_rational() * BigRational::new(units.into(), self.denominator.into())
    }

    fn to_coord(&self, units: i128) -> Coord {
        let num = self.delta.raw() as i128 * units;
        let raw = (2 * num + self.denominator).div_euclid(2 * self.denominator);
        Coord::from_raw(raw.clamp(0, Coord::ONE.raw() as i128) as u64).expect("clamped")
    }
}

struct AdversarialState {
    a: i128,
    b: i128,
    trace: AdversarialTrace,
}

/// Largest `n` with `delta / 3^n >= 2^-50`.
fn resolvable_rounds(delta: Coord) -> u32 {
    let budget = delta.raw() >> 12;
    let mut n = 0;
    let mut p: u64 = 1;
    while p * 3 <= budget {
        p *= 3;
        n += 1;
    }
    n.max(1)
}

impl AdversarialState {
    fn new(delta: Coord, horizon: u64) -> AdversarialState {
        let n = resolvable_rounds(delta).min(horizon.clamp(1, u32::MAX as u64) as u32);
        let p = 3i128.pow(n - 1);
        AdversarialState {
            a: 2 * p,
            b: 4 * p,
            trace: AdversarialTrace { delta, denominator: 6 * p, exact_rounds: n, rounds: Vec::new() },
        }
    }

    fn step(&mut self, right: bool) -> Valuation {
        let t = self.trace.rounds.len() as u32 + 1;
        let n = self.trace.exact_rounds;
        let emitted = if right {
            Valuation::new(self.trace.to_coord(self.b), Coord::HALF)
        } else {
            Valuation::new(self.trace.to_coord(self.a), Coord::ONE)
        };
        self.trace.rounds.push(AdversarialRound {
            gamma: if right { 1 } else { -1 },
            a_units: self.a,
            b_units: self.b,
            emitted,
        });
        let next = 2 * 3i128.pow(n.saturating_sub(t + 1));
        if right {
            self.a = self.b + next;
            self.b += 2 * next;
        } else {
            self.b = self.a - next;
            self.a -= 2 * next;
        }
        emitted
    }
}

/// Separation witness for an adversarial trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdversarialCertificate {
    pub tau: Coord,
    /// Mechanism trading `[0, τ] x [1/2, 1]` and the top segment up to `δ`.
    pub m_star: Mechanism,
}

/// Checks that every position stays in `[0, δ]` and that some `τ` separates
/// the right-move rounds from the left-move rounds, exactly and after
/// rounding to coordinates.
pub fn adversarial_certificate(trace: &AdversarialTrace) -> Result<AdversarialCertificate> {
    for (k, r) in trace.rounds.iter().enumerate() {
        if r.a_units < 0 || r.b_units > trace.denominator || r.a_units >= r.b_units {
            return Err(Error::Certificate(format!("round {} leaves [0, delta]", k + 1)));
        }
    }
    let rights = trace.rounds.iter().filter(|r| r.gamma > 0);
    let lefts = trace.rounds.iter().filter(|r| r.gamma < 0);
    let right_max = rights.clone().map(|r| r.b_units).max();
    let left_min = lefts.clone().map(|r| r.a_units).min();
    if let (Some(r), Some(l)) = (right_max, left_min) {
        if r >= l {
            return Err(Error::Certificate("no separating threshold (trace exceeds exact horizon)".into()));
        }
    }
    let right_coord = rights.map(|r| r.emitted.s).max();
    let left_coord = lefts.map(|r| r.emitted.s).min();
    let tau = match right_coord {
        Some(c) => c.checked_add(Coord::ULP).ok_or_else(|| Error::Certificate("threshold overflow".into()))?,
        None => Coord::ZERO,
    };
    if let Some(l) = left_coord {
        if tau >= l {
            return Err(Error::Certificate("threshold not strictly separating after rounding".into()));
        }
    }
    let m_star = Mechanism::rectangle_union([
        Valuation::new(tau, Coord::HALF),
        Valuation::new(trace.delta, Coord::ONE),
    ]);
    Ok(AdversarialCertificate { tau, m_star })
}

/// Law with an exact expectation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExactLaw {
    Atoms(Vec<(Valuation, BigRational)>),
    Segment { from: Valuation, to: Valuation },
}

/// Profit of `m` at a rational valuation.
pub fn profit_at(m: &Mechanism, s: &BigRational, b: &BigRational) -> BigRational {
    let corners = m.corners();
    let Some(qc) = corners.iter().find(|c| &c.s.to_rational() >= s) else {
        return BigRational::zero();
    };
    let q = qc.b.to_rational();
    if &q > b {
        return BigRational::zero();
    }
    let p = corners
        .iter()
        .rev()
        .find(|c| &c.b.to_rational() <= b)
        .expect("q corner qualifies")
        .s
        .to_rational();
    q - p
}

/// `E[f(v)]` for `f` constant between the corner coordinates of `mechs`.
pub fn integrate_piecewise(
    law: &ExactLaw,
    mechs: &[&Mechanism],
    f: &dyn Fn(&BigRational, &BigRational) -> BigRational,
) -> BigRational {
    match law {
        ExactLaw::Atoms(atoms) => atoms
            .iter()
            .map(|(v, p)| p * f(&v.s.to_rational(), &v.b.to_rational()))
            .fold(BigRational::zero(), |a, x| a + x),
        ExactLaw::Segment { from, to } => {
            let (a_s, a_b) = (from.s.to_rational(), from.b.to_rational());
            let ds = to.s.to_rational() - &a_s;
            let db = to.b.to_rational() - &a_b;
            if ds.is_zero() && db.is_zero() {
                return f(&a_s, &a_b);
            }
            let mut cuts = vec![BigRational::zero(), BigRational::one()];
            for m in mechs {
                for c in m.corners() {
                    if !ds.is_zero() {
                        cuts.push((c.s.to_rational() - &a_s) / &ds);
                    }
                    if !db.is_zero() {
                        cuts.push((c.b.to_rational() - &a_b) / &db);
                    }
                }
            }
            cuts.retain(|l| !l.is_negative() && l <= &BigRational::one());
            cuts.sort();
            cuts.dedup();
            let half = BigRational::new(1.into(), 2.into());
            let mut total = BigRational::zero();
            for w in cuts.windows(2) {
                let mid = (&w[0] + &w[1]) * &half;
                let s = &a_s + &ds * &mid;
                let b = &a_b + &db * &mid;
                total += (&w[1] - &w[0]) * f(&s, &b);
            }
            total
        }
    }
}

/// `E[profit(m, v)]` under `env`, exactly.
pub fn expected_profit_exact(m: &Mechanism, env: &EnvSpec) -> Result<BigRational> {
    let law = env.exact_law()?;
    Ok(integrate_piecewise(&law, &[m], &|s, b| profit_at(m, s, b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: f64, b: f64) -> Valuation {
        Valuation::from_f64(s, b).unwrap()
    }

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn biased_probabilities_exact() {
        let spec = EnvSpec::TwoPointBiased { bias: Ratio::new(1, 10), favored: Favored::M1 };
        let atoms = spec.atoms().unwrap();
        assert_eq!(atoms[0].1, r(11, 20));
        assert_eq!(atoms[1].1, r(9, 20));
    }

    #[test]
    fn horizon_bias_exact_for_squares() {
        let (spec, exact) = EnvSpec::two_point_for_horizon(400, Favored::M1).unwrap();
        assert_eq!(spec, EnvSpec::TwoPointBiased { bias: Ratio::new(1, 80), favored: Favored::M1 });
        assert!((exact - 0.0125).abs() < 1e-15);
        let (spec, _) = EnvSpec::two_point_for_horizon(1000, Favored::M2).unwrap();
        let EnvSpec::TwoPointBiased { bias, .. } = spec else { unreachable!() };
        assert!(bias.0 < r(1, 4) * r(1, 31));
    }

    #[test]
    fn atoms_must_sum_to_one() {
        let spec = EnvSpec::FiniteSupport {
            atoms: vec![Atom { value: v(0.0, 1.0), prob: Ratio::new(1, 3) }],
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = EnvSpec::uniform_over(&two_atom_support());
        let draw = |seed| {
            let mut s = spec.stream(seed, 50).unwrap();
            (0..50).map(|_| s.sample().unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn segment_samples_lie_on_diagonal_band() {
        let spec = EnvSpec::SegmentUniform { from: v(0.0, 0.5), to: v(0.5, 1.0) };
        let mut s = spec.stream(3, 100).unwrap();
        for _ in 0..100 {
            let x = s.sample().unwrap();
            assert_eq!(x.b - x.s, Coord::HALF.as_amount());
        }
    }

    #[test]
    fn adversarial_first_moves() {
        let delta = Coord::from_f64(0.3).unwrap();
        let mut st = AdversarialState::new(delta, 10);
        let first = st.step(true);
        assert!((first.s.to_f64() - 0.2).abs() < 1e-15);
        assert_eq!(first.b, Coord::HALF);
        let tr = &st.trace;
        let a2 = tr.exact(st.a);
        let b2 = tr.exact(st.b);
        let d = delta.to_rational();
        assert_eq!(a2, &d * r(7, 9));
        assert_eq!(b2, &d * r(8, 9));
    }

    #[test]
    fn certificate_on_mixed_trace() {
        let spec = EnvSpec::Adversarial3t { delta: Coord::dyadic(1, 2).unwrap() };
        let mut s = spec.stream(11, 25).unwrap();
        for _ in 0..25 {
            s.sample().unwrap();
        }
        let cert = adversarial_certificate(s.adversarial_trace().unwrap()).unwrap();
        for r in &s.adversarial_trace().unwrap().rounds {
            if r.gamma > 0 {
                assert!(r.emitted.s < cert.tau);
            } else {
                assert!(r.emitted.s > cert.tau);
            }
        }
    }

    #[test]
    fn segment_expectation_of_rectangle() {
        let spec = EnvSpec::SegmentUniform { from: v(0.0, 0.5), to: v(0.5, 1.0) };
        let m = Mechanism::posted_prices(Coord::dyadic(1, 2).unwrap(), Coord::dyadic(1, 2).unwrap());
        // Trades everywhere on the segment at profit 0.
        assert_eq!(expected_profit_exact(&m, &spec).unwrap(), r(0, 1));
        let m = Mechanism::posted_prices(Coord::dyadic(1, 3).unwrap(), Coord::dyadic(3, 2).unwrap());
        // Needs s <= 1/8 and s >= 1/4 at once.
        assert_eq!(expected_profit_exact(&m, &spec).unwrap(), r(0, 1));
        let m = Mechanism::posted_prices(Coord::dyadic(3, 3).unwrap(), Coord::dyadic(5, 3).unwrap());
        // s in [1/8, 3/8] has probability 1/2 and profit 1/4.
        assert_eq!(expected_profit_exact(&m, &spec).unwrap(), r(1, 8));
    }

    #[test]
    fn replay_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let vals = vec![v(0.1, 0.9), v(0.25, 0.5)];
        write_replay(&path, &vals).unwrap();
        let spec = EnvSpec::Replay { path: path.to_string_lossy().into_owned() };
        let mut s = spec.stream(0, 2).unwrap();
        assert_eq!(s.sample().unwrap(), vals[0]);
        assert_eq!(s.sample().unwrap(), vals[1]);
        assert_eq!(s.sample(), Err(Error::ReplayExhausted(3)));
    }
}
