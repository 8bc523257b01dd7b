//! `mim`: simulate multi-index data, compute leap decompositions, recover
//! index spaces and run scaling sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mim_core::estimator::{
    iterate_adaptive, iterate_leaps, KernelSpec, LeapSchedule, Provenance, SubspaceRecord, UStatOptions,
};
use mim_core::harness::{report, run_sweep, ExperimentConfig};
use mim_core::leap::{info_leap_decomposition, leap_decomposition, LeapBudget, LeapConfig};
use mim_core::models::{sample, Dataset, LinkSpec, PlantedModel};
use mim_core::{subspace_distance, MemoryBudget};

#[derive(Parser)]
#[command(name = "mim", version, about = "Gaussian multi-index models: leaps, recovery, scaling sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plant a model and write a dataset plus `<out>.truth.json`.
    Simulate(SimulateArgs),
    /// Monte-Carlo leap decomposition of a link.
    Leap(LeapArgs),
    /// Recover an index space from a dataset.
    Estimate(EstimateArgs),
    /// Run an experiment config.
    Sweep(SweepArgs),
    /// Aggregate sweep records into CSV and xy files.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    link: String,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LeapArgs {
    #[arg(long)]
    link: String,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 6)]
    kmax: usize,
    #[arg(long, default_value_t = 1e-2)]
    tol: f64,
    /// Monte-Carlo sample count.
    #[arg(long, default_value_t = 1_000_000)]
    budget: usize,
    /// Information leaps (label-weighted moments) instead of generative ones.
    #[arg(long)]
    info: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON schedule `{"steps": [{"k": 2, "s": 2}, ...]}`.
    #[arg(long, conflicts_with = "adaptive", required_unless_present = "adaptive")]
    schedule: Option<PathBuf>,
    #[arg(long, requires = "kmax")]
    adaptive: bool,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long, default_value = "rbf")]
    kernel: String,
    #[arg(long)]
    out: PathBuf,
    /// Planted subspace to measure the error against.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn truth_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".truth.json");
    PathBuf::from(name)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let link = LinkSpec::from_name(&a.link, a.r, a.noise)?;
    let model = PlantedModel::new(a.d, link, a.seed)?;
    let data = sample(&model, a.n, a.seed)?;
    data.write(&a.out)?;
    let provenance = Provenance {
        seeds: vec![a.seed],
        n: a.n,
        note: Some(format!("planted index space of {}", model.tag())),
        ..Default::default()
    };
    let truth = truth_path(&a.out);
    SubspaceRecord::new(&model.index_space(), provenance).write(&truth)?;
    println!("wrote {} samples in R^{} to {} (truth: {})", a.n, a.d, a.out.display(), truth.display());
    Ok(())
}

fn leap(a: LeapArgs) -> Result<()> {
    let link = LinkSpec::from_name(&a.link, a.r, None)?;
    let config = LeapConfig {
        k_max: a.kmax,
        tol: a.tol,
        ..LeapConfig::default()
    };
    let budget = LeapBudget::default().with_n_mc(a.budget);
    let decomposition = if a.info {
        info_leap_decomposition(&link, &config, &budget)?
    } else {
        leap_decomposition(&link, &config, &budget)?
    };
    let report = decomposition.report(&link);
    std::fs::write(&a.out, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} r={}: leaps {:?}, {} = {}",
        report.link,
        report.r,
        report.leaps,
        if a.info { "l*" } else { "k*" },
        report.k_star
    );
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let data = Dataset::read(&a.data)?;
    let kernel: KernelSpec = a.kernel.parse()?;
    let opts = UStatOptions {
        seed: data.seed(),
        budget: MemoryBudget::from_env(),
        ..UStatOptions::default()
    };
    let (result, k, schedule) = if let Some(path) = &a.schedule {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let schedule: LeapSchedule = serde_json::from_str(&text).context("parsing schedule")?;
        let k = (schedule.steps.len() == 1).then(|| schedule.steps[0].k);
        (iterate_leaps(&data, &schedule, &kernel, &opts)?, k, schedule.tag())
    } else {
        let Some(kmax) = a.kmax else { bail!("--adaptive needs --kmax") };
        let result = iterate_adaptive(&data, kmax, data.d(), 1, &kernel, 10.0, &opts)?;
        if result.steps.is_empty() {
            bail!("no order up to {kmax} shows outlier eigenvalues");
        }
        let k = result.steps.first().map(|s| s.k);
        (result, k, format!("adaptive:kmax={kmax}"))
    };
    let mut provenance = Provenance {
        k,
        schedule: Some(schedule),
        kernel: kernel.to_string(),
        seeds: vec![data.seed()],
        n: data.n(),
        path: result.steps.iter().map(|s| s.path.tag()).collect::<Vec<_>>().join("+"),
        fold_boundaries: result.fold_boundaries(),
        note: None,
    };
    if let Some(truth) = &a.truth {
        let planted = SubspaceRecord::read(truth)?.subspace()?;
        let error = subspace_distance(&result.subspace, &planted)?;
        provenance.note = Some(format!("distance to {}: {error}", truth.display()));
        println!("error {error:.6}");
    }
    SubspaceRecord::new(&result.subspace, provenance).write(&a.out)?;
    println!("recovered a {}-dimensional subspace of R^{}", result.subspace.dim(), data.d());
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = ExperimentConfig::read(&a.config)?;
    let table = run_sweep(&cfg, &a.out)?;
    for row in &table.rows {
        match row.n_star {
            Some(n) => println!("d = {:>4}: n* = {n}", row.d),
            None => println!("d = {:>4}: censored", row.d),
        }
    }
    if let Some(fit) = &table.fit {
        let se = fit.slope_se.map(|s| format!(" ± {s:.3}")).unwrap_or_default();
        println!("slope {:.3}{se} over {} points", fit.slope, fit.points);
    }
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Leap(a) => leap(a),
        Command::Estimate(a) => estimate(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => {
            let summary = report(&a.input, &a.out)?;
            println!("{} records, {} files in {}", summary.records, summary.files.len(), a.out.display());
            Ok(())
        }
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MIM_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("MIM_THREADS={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
