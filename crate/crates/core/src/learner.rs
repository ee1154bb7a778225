//! Simplify-the-best-mechanism online learner.
//!
//! Round 1 posts the empty mechanism. Every later round computes the exact
//! empirical optimum on the history, snaps it to the dyadic grid of step
//! `ε_t`, and posts the result. `ε_t` shrinks like `sqrt(log³T / t)`.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvSpec, EnvStream};
use crate::error::{Error, Result};
use crate::fixed::Amount;
use crate::grid::{empirical_optimum, OptimumOptions, PointGrid, TieBreak};
use crate::mechanism::{Mechanism, Valuation};
use crate::simplify::{simplify, DyadicPrecision};

/// A pricing problem the learner can play.
pub trait Problem {
    const NAME: &'static str;
    type Mech: Clone + Eq + Hash + Serialize + Default + Send;

    /// Best mechanism on the sample multiset with its total gain.
    fn optimum(grid: &PointGrid, cfg: &LearnerConfig) -> (Self::Mech, Amount);
    fn simplify(m: &Self::Mech, prec: DyadicPrecision) -> Self::Mech;
    fn gain(m: &Self::Mech, v: Valuation) -> Amount;
}

/// Profit maximization for a seller and a buyer.
pub struct BilateralTrade;

impl Problem for BilateralTrade {
    const NAME: &'static str = "bilateral-trade";
    type Mech = Mechanism;

    fn optimum(grid: &PointGrid, cfg: &LearnerConfig) -> (Mechanism, Amount) {
        let opts = OptimumOptions {
            restrict_to_upper_triangle: cfg.restrict_to_upper_triangle,
            tie_break: cfg.tie_break,
        };
        empirical_optimum(grid, opts)
    }

    fn simplify(m: &Mechanism, prec: DyadicPrecision) -> Mechanism {
        simplify(m, prec)
    }

    fn gain(m: &Mechanism, v: Valuation) -> Amount {
        m.profit(v)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

fn default_constant() -> f64 {
    200.0
}
fn default_finest() -> u32 {
    20
}
fn default_coarsest() -> u32 {
    1
}
fn default_stride() -> u64 {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// Number of rounds `T`.
    #[serde(default)]
    pub horizon: u64,
    /// Constant `c` in `ε_t = c·sqrt(log³T / (t-1))`.
    #[serde(default = "default_constant")]
    pub schedule_constant: f64,
    #[serde(default)]
    pub log_base: LogBase,
    /// `ε_t` never drops below `2^-finest_exponent`.
    #[serde(default = "default_finest")]
    pub finest_exponent: u32,
    /// `ε_t` never exceeds `2^-coarsest_exponent`.
    #[serde(default = "default_coarsest")]
    pub coarsest_exponent: u32,
    /// Recompute the posted mechanism every `stride` rounds.
    #[serde(default = "default_stride")]
    pub stride: u64,
    /// With `stride > 1`, also compute the per-round mechanism and report the
    /// profit difference.
    #[serde(default)]
    pub audit_stride: bool,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default = "default_true")]
    pub restrict_to_upper_triangle: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            horizon: 0,
            schedule_constant: default_constant(),
            log_base: LogBase::Natural,
            finest_exponent: default_finest(),
            coarsest_exponent: default_coarsest(),
            stride: 1,
            audit_stride: false,
            tie_break: TieBreak::MinimalRegion,
            restrict_to_upper_triangle: true,
        }
    }
}

impl LearnerConfig {
    pub fn with_horizon(horizon: u64) -> LearnerConfig {
        LearnerConfig { horizon, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if !(self.schedule_constant.is_finite() && self.schedule_constant > 0.0) {
            return bad("schedule constant must be positive");
        }
        if self.coarsest_exponent == 0 || self.coarsest_exponent > self.finest_exponent {
            return bad("need 1 <= coarsest_exponent <= finest_exponent");
        }
        if self.finest_exponent > 60 {
            return bad("finest_exponent must be at most 60");
        }
        if self.stride == 0 {
            return bad("stride must be positive");
        }
        Ok(())
    }

    /// Hex digest of the canonical JSON form.
    pub fn hash_with(&self, extra: &impl Serialize) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("serializable"));
        h.update(serde_json::to_vec(extra).expect("serializable"));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `ε_t` rounded down to a power of two and clamped to the configured range.
pub fn precision_schedule(t: u64, cfg: &LearnerConfig) -> Result<DyadicPrecision> {
    if t < 2 {
        return Err(Error::InvalidConfig("the schedule starts at round 2".into()));
    }
    let l = cfg.log_base.log(cfg.horizon as f64).max(0.0);
    let raw = cfg.schedule_constant * (l.powi(3) / (t - 1) as f64).sqrt();
    let mut h = cfg.coarsest_exponent;
    while h < cfg.finest_exponent && 2f64.powi(-(h as i32)) > raw {
        h += 1;
    }
    DyadicPrecision::new(h)
}

/// Online state: the history and the mechanism currently cached.
pub struct Learner<P: Problem> {
    cfg: LearnerConfig,
    round: u64,
    history: BTreeMap<Valuation, u64>,
    cached: Option<P::Mech>,
    pub recomputations: u64,
}

/// What the learner posts in one round.
pub struct Posted<M> {
    pub mechanism: M,
    pub precision: Option<DyadicPrecision>,
    /// Per-round mechanism, when auditing a stride.
    pub fresh: Option<M>,
}

impl<P: Problem> Learner<P> {
    pub fn new(cfg: LearnerConfig) -> Result<Learner<P>> {
        cfg.validate()?;
        Ok(Learner { cfg, round: 0, history: BTreeMap::new(), cached: None, recomputations: 0 })
    }

    fn compute(&self, prec: DyadicPrecision) -> P::Mech {
        let grid = PointGrid::new(self.history.iter().map(|(v, n)| (*v, *n)));
        let (best, _) = P::optimum(&grid, &self.cfg);
        P::simplify(&best, prec)
    }

    /// Mechanism for the next round.
    pub fn post(&mut self) -> Result<Posted<P::Mech>> {
        self.round += 1;
        let t = self.round;
        if t == 1 {
            return Ok(Posted { mechanism: P::Mech::default(), precision: None, fresh: None });
        }
        let prec = precision_schedule(t, &self.cfg)?;
        let due = (t - 2).is_multiple_of(self.cfg.stride);
        if due || self.cached.is_none() {
            let m = self.compute(prec);
            self.recomputations += 1;
            self.cached = Some(m);
            let m = self.cached.clone().expect("set");
            return Ok(Posted { mechanism: m.clone(), precision: Some(prec), fresh: None });
        }
        let fresh = self.cfg.audit_stride.then(|| self.compute(prec));
        Ok(Posted { mechanism: self.cached.clone().expect("set"), precision: Some(prec), fresh })
    }

    /// Records the valuation revealed at the end of the round.
    pub fn observe(&mut self, v: Valuation) {
        *self.history.entry(v).or_default() += 1;
    }

    pub fn round(&self) -> u64 {
        self.round
    }
}

/// Best fixed mechanism in hindsight and its total gain.
pub fn hindsight_benchmark<P: Problem>(values: &[Valuation], cfg: &LearnerConfig) -> (P::Mech, Amount) {
    let grid = PointGrid::from_samples(values);
    let unrestricted = LearnerConfig { restrict_to_upper_triangle: false, ..cfg.clone() };
    P::optimum(&grid, &unrestricted)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub t: u64,
    /// `log2(1/ε_t)`, absent in round 1.
    pub precision: Option<u32>,
    pub valuation: Valuation,
    pub profit: Amount,
    pub cum_profit: Amount,
    pub mech_id: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult<M> {
    pub problem: String,
    pub horizon: u64,
    pub seed: u64,
    pub config_hash: String,
    pub config: LearnerConfig,
    pub cum_profit: Amount,
    pub benchmark: Amount,
    pub regret: Amount,
    pub benchmark_mechanism: M,
    pub recomputations: u64,
    /// Total gain of per-round recomputation minus the strided learner's.
    pub stride_deviation: Option<Amount>,
    /// Distinct posted mechanisms, indexed by `mech_id`.
    pub mechanisms: Vec<M>,
    pub rounds: Vec<RoundRecord>,
}

impl<M: Serialize> RunResult<M> {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Per-round rows `t,eps_t,profit_t,cum_profit,posted_mech_id`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "eps_t", "profit_t", "cum_profit", "posted_mech_id"])?;
        for r in &self.rounds {
            let eps = r.precision.map(|h| format!("{}", 2f64.powi(-(h as i32)))).unwrap_or_default();
            w.write_record([
                r.t.to_string(),
                eps,
                r.profit.to_f64().to_string(),
                r.cum_profit.to_f64().to_string(),
                r.mech_id.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Plays `cfg.horizon` rounds against `stream`.
pub fn run_stream<P: Problem>(stream: &mut EnvStream, cfg: &LearnerConfig, seed: u64, env: &EnvSpec) -> Result<RunResult<P::Mech>> {
    let mut learner = Learner::<P>::new(cfg.clone())?;
    let mut ids: HashMap<P::Mech, usize> = HashMap::new();
    let mut mechanisms = Vec::new();
    let mut rounds = Vec::with_capacity(cfg.horizon as usize);
    let mut values = Vec::with_capacity(cfg.horizon as usize);
    let mut cum = Amount::ZERO;
    let mut deviation: Option<Amount> = None;
    for t in 1..=cfg.horizon {
        let posted = learner.post()?;
        let v = stream.sample()?;
        let profit = P::gain(&posted.mechanism, v);
        if let Some(fresh) = &posted.fresh {
            *deviation.get_or_insert(Amount::ZERO) += P::gain(fresh, v) - profit;
        }
        cum += profit;
        let next_id = mechanisms.len();
        let id = *ids.entry(posted.mechanism.clone()).or_insert_with(|| {
            mechanisms.push(posted.mechanism.clone());
            next_id
        });
        rounds.push(RoundRecord {
            t,
            precision: posted.precision.map(DyadicPrecision::exponent),
            valuation: v,
            profit,
            cum_profit: cum,
            mech_id: id,
        });
        learner.observe(v);
        values.push(v);
    }
    let (benchmark_mechanism, benchmark) = hindsight_benchmark::<P>(&values, cfg);
    if cfg.audit_stride && cfg.stride > 1 && deviation.is_none() {
        deviation = Some(Amount::ZERO);
    }
    Ok(RunResult {
        problem: P::NAME.to_string(),
        horizon: cfg.horizon,
        seed,
        config_hash: cfg.hash_with(&(P::NAME, env, seed)),
        config: cfg.clone(),
        cum_profit: cum,
        benchmark,
        regret: benchmark - cum,
        benchmark_mechanism,
        recomputations: learner.recomputations,
        stride_deviation: deviation,
        mechanisms,
        rounds,
    })
}

/// Plays one seeded run against `env`.
pub fn run<P: Problem>(env: &EnvSpec, cfg: &LearnerConfig, seed: u64) -> Result<RunResult<P::Mech>> {
    cfg.validate()?;
    let mut stream = env.stream(seed, cfg.horizon)?;
    run_stream::<P>(&mut stream, cfg, seed, env)
}
