use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use broker_core::grid::{empirical_optimum, OptimumOptions, PointGrid, TieBreak};
use broker_core::harness::{run_sweep, ExperimentSpec, SweepOptions};
use broker_core::joint_ads::{empirical_optimum_ne, NeMechanism};
use broker_core::{Error, Mechanism, Valuation};
use clap::{Args, Parser, Subcommand};

/// Online brokerage simulator.
#[derive(Parser)]
#[command(name = "broker", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded regret sweep described by a JSON experiment file.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory.
        #[arg(long, env = "BROKER_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Exact hindsight optimum of a CSV of valuations.
    Bench {
        #[arg(long)]
        points: PathBuf,
        /// Maximize joint-ads revenue instead of bilateral profit.
        #[arg(long)]
        joint_ads: bool,
        /// Only trade above the diagonal.
        #[arg(long)]
        restrict: bool,
        /// Break ties towards the largest region.
        #[arg(long)]
        maximal: bool,
        /// Write the grid and edge weights as JSON.
        #[arg(long)]
        dump_grid: Option<PathBuf>,
    },
    /// Query a mechanism file.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    mech: PathBuf,
    /// One valuation `s,b`.
    #[arg(long, conflicts_with = "batch", required_unless_present_any = ["batch", "render"])]
    query: Option<String>,
    /// CSV of valuations, one answer row each.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Print a 64x64 raster of the allocation region.
    #[arg(long)]
    render: bool,
}

enum Loaded {
    Bilateral(Mechanism),
    JointAds(NeMechanism),
}

impl Loaded {
    fn contains(&self, v: Valuation) -> bool {
        match self {
            Loaded::Bilateral(m) => m.contains(v),
            Loaded::JointAds(m) => m.contains(v),
        }
    }

    fn answer(&self, v: Valuation) -> [String; 4] {
        let none = || ["no trade".to_string(), String::new(), String::new(), "0".to_string()];
        match self {
            Loaded::Bilateral(m) => match m.payments(v) {
                Some(p) => ["trade".into(), p.seller.to_string(), p.buyer.to_string(), p.profit().to_string()],
                None => none(),
            },
            Loaded::JointAds(m) => match m.prices(v) {
                Some((p1, p2)) => ["shown".into(), p1.to_string(), p2.to_string(), m.revenue(v).to_string()],
                None => none(),
            },
        }
    }
}

fn load_mechanism(path: &Path) -> Result<Loaded, Error> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("problem").and_then(|p| p.as_str()) == Some("joint-ads") {
        Ok(Loaded::JointAds(serde_json::from_value(value)?))
    } else {
        Ok(Loaded::Bilateral(serde_json::from_value(value)?))
    }
}

/// Rows of `s,b` or `t,s,b`; a non-numeric first row is a header.
fn read_valuations(path: &Path) -> Result<Vec<Valuation>, Error> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Parse(format!("row {} needs at least two columns", i + 1)));
        }
        let (s, b) = (&rec[rec.len() - 2], &rec[rec.len() - 1]);
        match (s.parse(), b.parse()) {
            (Ok(s), Ok(b)) => out.push(Valuation::new(s, b)),
            _ if i == 0 => continue,
            _ => return Err(Error::Parse(format!("row {}: bad valuation `{s},{b}`", i + 1))),
        }
    }
    Ok(out)
}

fn cmd_run(spec: &Path, jobs: Option<usize>, out: Option<PathBuf>) -> Result<bool, Error> {
    let spec = ExperimentSpec::load(spec)?;
    spec.validate()?;
    let out_dir = out.or_else(|| spec.output_dir.clone()).unwrap_or_else(|| PathBuf::from("broker-out"));
    let summary = run_sweep(&spec, &SweepOptions { jobs, out_dir: out_dir.clone() })?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "problem {} runs {} failures {}", summary.problem, summary.runs.len(), summary.failures)?;
    for h in &summary.per_horizon {
        writeln!(stdout, "T={} runs={} mean_regret={:.4} std={:.4}", h.horizon, h.runs, h.mean_regret, h.std_regret)?;
    }
    if let Some(fit) = &summary.slope {
        writeln!(stdout, "slope {:.4} ({:.0}% CI {:.4} .. {:.4})", fit.slope, fit.level * 100.0, fit.ci_low, fit.ci_high)?;
    }
    for r in summary.runs.iter().filter(|r| r.error.is_some()) {
        eprintln!("run T={} index={} failed: {}", r.horizon, r.index, r.error.as_deref().unwrap_or(""));
    }
    writeln!(stdout, "artifacts in {}", out_dir.display())?;
    Ok(summary.failures == 0)
}

fn cmd_bench(points: &Path, joint_ads: bool, restrict: bool, maximal: bool, dump: Option<PathBuf>) -> Result<bool, Error> {
    let values = read_valuations(points)?;
    let started = Instant::now();
    let grid = PointGrid::from_samples(&values);
    let tie_break = if maximal { TieBreak::MaximalRegion } else { TieBreak::MinimalRegion };
    let (value, json) = if joint_ads {
        let (m, v) = empirical_optimum_ne(&grid, tie_break);
        (v, serde_json::to_string(&m)?)
    } else {
        let (m, v) = empirical_optimum(&grid, OptimumOptions { restrict_to_upper_triangle: restrict, tie_break });
        (v, serde_json::to_string(&m)?)
    };
    let elapsed = started.elapsed();
    if let Some(path) = dump {
        fs::write(path, serde_json::to_string_pretty(&grid.dump())?)?;
    }
    println!("{value}");
    println!("{json}");
    eprintln!("points {} wall_ms {}", values.len(), elapsed.as_millis());
    Ok(true)
}

fn render(m: &Loaded) -> String {
    const N: u32 = 64;
    let mut out = String::with_capacity(((N + 1) * N) as usize);
    for row in (0..N).rev() {
        for col in 0..N {
            let v = Valuation::from_f64((col as f64 + 0.5) / N as f64, (row as f64 + 0.5) / N as f64).expect("cell centre");
            out.push(if m.contains(v) { '#' } else { '.' });
        }
        out.push('\n');
    }
    out
}

fn cmd_inspect(args: &InspectArgs) -> Result<bool, Error> {
    let m = load_mechanism(&args.mech)?;
    let mut stdout = std::io::stdout().lock();
    if let Some(q) = &args.query {
        let v = Valuation::parse_pair(q)?;
        let [status, p, q, gain] = m.answer(v);
        if p.is_empty() {
            writeln!(stdout, "{status}")?;
        } else {
            writeln!(stdout, "{status} p={p} q={q} profit={gain}")?;
        }
    }
    if let Some(batch) = &args.batch {
        let mut w = csv::Writer::from_writer(&mut stdout);
        w.write_record(["s", "b", "outcome", "p", "q", "profit"])?;
        for v in read_valuations(batch)? {
            let [status, p, q, gain] = m.answer(v);
            w.write_record([v.s.to_string(), v.b.to_string(), status, p, q, gain])?;
        }
        w.flush()?;
    }
    if args.render {
        stdout.write_all(render(&m).as_bytes())?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Run { spec, jobs, out } => cmd_run(spec, *jobs, out.clone()),
        Command::Bench { points, joint_ads, restrict, maximal, dump_grid } => {
            cmd_bench(points, *joint_ads, *restrict, *maximal, dump_grid.clone())
        }
        Command::Inspect(args) => cmd_inspect(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
