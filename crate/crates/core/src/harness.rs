//! Seeded regret sweeps over horizons.
//!
//! Runs are independent and execute on a rayon pool; every artifact is
//! written from results sorted by `(T, run index)`, so the bytes do not
//! depend on scheduling. Timestamps go only to the sidecar `run.log`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::fixed::Amount;
use crate::joint_ads::JointAds;
use crate::learner::{run, BilateralTrade, LearnerConfig, Problem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Bilateral,
    JointAds,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Bilateral => BilateralTrade::NAME,
            ProblemKind::JointAds => JointAds::NAME,
        }
    }
}

/// Either a number of derived seeds or an explicit list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn len(&self) -> usize {
        match self {
            Seeds::Count(n) => *n as usize,
            Seeds::List(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    pub environment: EnvSpec,
    pub horizons: Vec<u64>,
    pub seeds: Seeds,
    #[serde(default)]
    pub master_seed: u64,
    /// The horizon field is ignored; each run uses its own `T`.
    #[serde(default)]
    pub learner: LearnerConfig,
    /// Stride for every horizon unless overridden.
    #[serde(default)]
    pub stride: Option<u64>,
    /// Per-horizon stride.
    #[serde(default)]
    pub stride_overrides: BTreeMap<u64, u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Fill the `wall_ms` column; disable for byte-identical reruns.
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
    /// Write per-run JSON and CSV files.
    #[serde(default = "default_true")]
    pub write_runs: bool,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<ExperimentSpec> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentSpec> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn config_for(&self, horizon: u64) -> LearnerConfig {
        let mut cfg = self.learner.clone();
        cfg.horizon = horizon;
        if let Some(s) = self.stride {
            cfg.stride = s;
        }
        if let Some(s) = self.stride_overrides.get(&horizon) {
            cfg.stride = *s;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::InvalidConfig("at least one horizon is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if let Some(t) = self.horizons.iter().find(|t| **t < 2) {
            return Err(Error::InvalidConfig(format!("horizon {t} is below 2")));
        }
        for t in &self.horizons {
            self.config_for(*t).validate()?;
        }
        self.environment.validate()
    }

    /// `(T, index, seed)` for every run, in output order.
    pub fn tasks(&self) -> Vec<(u64, usize, u64)> {
        let mut horizons = self.horizons.clone();
        horizons.sort_unstable();
        horizons.dedup();
        let mut out = Vec::new();
        for t in horizons {
            for idx in 0..self.seeds.len() {
                let seed = match &self.seeds {
                    Seeds::Count(_) => derive_seed(self.master_seed, t, idx as u64),
                    Seeds::List(v) => v[idx],
                };
                out.push((t, idx, seed));
            }
        }
        out
    }
}

/// First eight bytes of `SHA-256(master ‖ T ‖ index)`, little endian.
pub fn derive_seed(master: u64, horizon: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(horizon.to_le_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("eight bytes"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub problem: String,
    pub horizon: u64,
    pub index: usize,
    pub seed: u64,
    pub regret: Option<Amount>,
    pub benchmark: Option<Amount>,
    pub cum_profit: Option<Amount>,
    pub recomputations: Option<u64>,
    pub stride_deviation: Option<Amount>,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_ms: Option<u128>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HorizonStats {
    pub horizon: u64,
    pub runs: usize,
    pub mean_regret: f64,
    pub std_regret: f64,
}

/// Least-squares fit of `ln(mean regret)` against `ln T`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub problem: String,
    pub master_seed: u64,
    pub runs: Vec<RunSummary>,
    pub per_horizon: Vec<HorizonStats>,
    pub slope: Option<SlopeFit>,
    pub failures: usize,
}

impl SweepSummary {
    pub fn mean_regret(&self, horizon: u64) -> Option<f64> {
        self.per_horizon.iter().find(|h| h.horizon == horizon).map(|h| h.mean_regret)
    }
}

/// Fit over points with positive mean; `None` with fewer than three.
pub fn fit_slope(points: &[(f64, f64)], level: f64) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(t, m)| *t > 0.0 && *m > 0.0).map(|(t, m)| (t.ln(), m.ln())).collect();
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let se = (sse / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0).expect("positive dof").inverse_cdf(0.5 + level / 2.0);
    Some(SlopeFit { slope, intercept, level, ci_low: slope - t * se, ci_high: slope + t * se, points: n })
}

/// Per-horizon statistics over successful runs; the mean is taken from the
/// exact regret sum.
pub fn horizon_stats(runs: &[RunSummary]) -> Vec<HorizonStats> {
    let mut by_t: BTreeMap<u64, Vec<Amount>> = BTreeMap::new();
    for r in runs {
        if let Some(g) = r.regret {
            by_t.entry(r.horizon).or_default().push(g);
        }
    }
    by_t.into_iter()
        .map(|(horizon, gs)| {
            let n = gs.len();
            let sum: BigRational = gs.iter().map(|g| g.to_rational()).sum();
            let mean_exact = sum / BigRational::from_integer(n.into());
            let mean = mean_exact.to_f64().unwrap_or(f64::NAN);
            let std = if n > 1 {
                let ss: f64 = gs.iter().map(|g| (g.to_rational() - &mean_exact).to_f64().unwrap_or(f64::NAN).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            HorizonStats { horizon, runs: n, mean_regret: mean, std_regret: std }
        })
        .collect()
}

pub struct SweepOptions {
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    pub out_dir: PathBuf,
}

struct Log {
    file: fs::File,
}

impl Log {
    fn open(dir: &Path) -> Result<Log> {
        Ok(Log { file: fs::OpenOptions::new().create(true).append(true).open(dir.join("run.log"))? })
    }

    fn line(&mut self, msg: &str) -> Result<()> {
        let ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        writeln!(self.file, "[{ms}] {msg}")?;
        Ok(())
    }
}

fn run_one<P: Problem>(spec: &ExperimentSpec, horizon: u64, index: usize, seed: u64, runs_dir: Option<&Path>) -> RunSummary {
    let started = Instant::now();
    let cfg = spec.config_for(horizon);
    let mut out = RunSummary {
        problem: P::NAME.to_string(),
        horizon,
        index,
        seed,
        regret: None,
        benchmark: None,
        cum_profit: None,
        recomputations: None,
        stride_deviation: None,
        error: None,
        wall_ms: None,
    };
    let result = run::<P>(&spec.environment, &cfg, seed).and_then(|r| {
        if let Some(dir) = runs_dir {
            let stem = format!("{}_T{}_r{:03}", P::NAME, horizon, index);
            r.write_json(&dir.join(format!("{stem}.json")))?;
            r.write_csv(&dir.join(format!("{stem}.csv")))?;
        }
        Ok(r)
    });
    match result {
        Ok(r) => {
            out.regret = Some(r.regret);
            out.benchmark = Some(r.benchmark);
            out.cum_profit = Some(r.cum_profit);
            out.recomputations = Some(r.recomputations);
            out.stride_deviation = r.stride_deviation;
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out.wall_ms = Some(started.elapsed().as_millis());
    out
}

/// Runs every `(T, seed)` pair and writes the artifacts under
/// `opts.out_dir`. Failed runs are reported in the summary, not raised.
pub fn run_sweep(spec: &ExperimentSpec, opts: &SweepOptions) -> Result<SweepSummary> {
    spec.validate()?;
    fs::create_dir_all(&opts.out_dir)?;
    let runs_dir = opts.out_dir.join("runs");
    if spec.write_runs {
        fs::create_dir_all(&runs_dir)?;
    }
    let mut log = Log::open(&opts.out_dir)?;
    let tasks = spec.tasks();
    log.line(&format!("sweep start: {} runs of {}", tasks.len(), spec.problem.name()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let dir = spec.write_runs.then_some(runs_dir.as_path());
    let mut runs: Vec<RunSummary> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(t, idx, seed)| match spec.problem {
                ProblemKind::Bilateral => run_one::<BilateralTrade>(spec, t, idx, seed, dir),
                ProblemKind::JointAds => run_one::<JointAds>(spec, t, idx, seed, dir),
            })
            .collect()
    });
    runs.sort_by_key(|r| (r.horizon, r.index));
    for r in &runs {
        let status = r.error.as_deref().unwrap_or("ok");
        log.line(&format!("T={} run={} seed={} wall_ms={} {status}", r.horizon, r.index, r.seed, r.wall_ms.unwrap_or(0)))?;
    }

    let per_horizon = horizon_stats(&runs);
    let pts: Vec<(f64, f64)> = per_horizon.iter().map(|h| (h.horizon as f64, h.mean_regret)).collect();
    let summary = SweepSummary {
        problem: spec.problem.name().to_string(),
        master_seed: spec.master_seed,
        failures: runs.iter().filter(|r| r.error.is_some()).count(),
        slope: fit_slope(&pts, 0.95),
        per_horizon,
        runs,
    };
    write_aggregate(&opts.out_dir.join("aggregate.csv"), &summary.runs, spec.record_wall_time)?;
    let mut f = fs::File::create(opts.out_dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n")?;
    log.line(&format!("sweep done: {} failures", summary.failures))?;
    Ok(summary)
}

/// Columns `problem,T,seed,regret,benchmark,cum_profit,wall_ms`; failed runs
/// leave the numeric columns empty.
pub fn write_aggregate(path: &Path, runs: &[RunSummary], wall_time: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["problem", "T", "seed", "regret", "benchmark", "cum_profit", "wall_ms"])?;
    let show = |a: Option<Amount>| a.map(|x| x.to_string()).unwrap_or_default();
    for r in runs {
        let wall = if wall_time { r.wall_ms.map(|w| w.to_string()).unwrap_or_default() } else { String::new() };
        w.write_record([
            r.problem.clone(),
            r.horizon.to_string(),
            r.seed.to_string(),
            show(r.regret),
            show(r.benchmark),
            show(r.cum_profit),
            wall,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::two_atom_support;

    fn spec(horizons: Vec<u64>, seeds: u64) -> ExperimentSpec {
        ExperimentSpec {
            problem: ProblemKind::Bilateral,
            environment: EnvSpec::uniform_over(&two_atom_support()),
            horizons,
            seeds: Seeds::Count(seeds),
            master_seed: 7,
            learner: LearnerConfig::default(),
            stride: None,
            stride_overrides: BTreeMap::new(),
            output_dir: None,
            record_wall_time: false,
            write_runs: true,
        }
    }

    #[test]
    fn seeds_depend_on_all_inputs() {
        let a = derive_seed(1, 100, 0);
        assert_ne!(a, derive_seed(2, 100, 0));
        assert_ne!(a, derive_seed(1, 101, 0));
        assert_ne!(a, derive_seed(1, 100, 1));
        assert_eq!(a, derive_seed(1, 100, 0));
    }

    #[test]
    fn horizon_below_two_rejected() {
        assert!(matches!(spec(vec![1, 10], 2).validate(), Err(Error::InvalidConfig(_))));
        assert!(spec(vec![10], 0).validate().is_err());
        assert!(spec(vec![], 1).validate().is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|t: &f64| (*t, 3.0 * t.sqrt())).collect();
        let fit = fit_slope(&pts, 0.95).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!(fit_slope(&pts[..2], 0.95).is_none());
    }

    #[test]
    fn sweep_is_byte_identical() {
        let s = spec(vec![20, 40, 80], 3);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = run_sweep(&s, &SweepOptions { jobs: Some(1), out_dir: a.path().into() }).unwrap();
        let sb = run_sweep(&s, &SweepOptions { jobs: Some(4), out_dir: b.path().into() }).unwrap();
        assert_eq!(sa.failures, 0);
        assert_eq!(sa.runs.len(), 9);
        for f in ["aggregate.csv", "summary.json", "runs/bilateral-trade_T40_r001.json", "runs/bilateral-trade_T80_r002.csv"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        assert_eq!(sa.per_horizon, sb.per_horizon);
        let rows = fs::read_to_string(a.path().join("aggregate.csv")).unwrap().lines().count();
        assert_eq!(rows, 1 + 9);
    }

    #[test]
    fn failed_runs_are_isolated() {
        let mut s = spec(vec![5, 10], 2);
        let dir = tempfile::tempdir().unwrap();
        let replay = dir.path().join("r.csv");
        crate::env::write_replay(&replay, &[two_atom_support()[0]; 6]).unwrap();
        s.environment = EnvSpec::Replay { path: replay.to_string_lossy().into() };
        let out = run_sweep(&s, &SweepOptions { jobs: None, out_dir: dir.path().join("o") }).unwrap();
        assert_eq!(out.failures, 2);
        assert!(out.runs.iter().filter(|r| r.horizon == 5).all(|r| r.error.is_none()));
    }

    #[test]
    fn stride_override_applies() {
        let mut s = spec(vec![100, 200], 1);
        s.stride = Some(2);
        s.stride_overrides.insert(200, 8);
        assert_eq!(s.config_for(100).stride, 2);
        assert_eq!(s.config_for(200).stride, 8);
    }

    #[test]
    fn spec_parses_from_json() {
        let text = r#"{"problem":"joint-ads","environment":{"variant":"FINITE_SUPPORT","atoms":[{"value":["1","1"],"prob":"1/2"},{"value":["0.5","0.5"],"prob":"1/2"}]},"horizons":[100,200],"seeds":[1,2,3],"stride_overrides":{"200":4}}"#;
        let s = ExperimentSpec::from_json(text).unwrap();
        assert_eq!(s.problem, ProblemKind::JointAds);
        assert_eq!(s.tasks().len(), 6);
        assert_eq!(s.config_for(200).stride, 4);
        assert!(ExperimentSpec::from_json(r#"{"problem":"x"}"#).is_err());
    }
}
