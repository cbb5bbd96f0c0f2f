use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qst_core::ensembles::{self, EnsembleSpec};
use qst_core::experiment::{self, ExperimentSpec, RankAnalysisSpec, SweepResult};
use qst_core::measurement::{self, CouplerSource, DetectorMode, MeasurementRecord};
use qst_core::recovery::{self, RecoveryConfig, Solver};
use qst_core::{metrics, ComplexMatrixParts, DensityMatrix};

#[derive(Parser)]
#[command(name = "qst", version, about = "Single-observable tomography experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fidelity versus rank.
    Sweep(SweepArgs),
    /// Fidelity spread across random couplers for a fixed state set.
    CouplerStudy(SweepArgs),
    /// Haar couplers against waveguide arrays.
    CouplerCompare {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Waveguide coupling angles.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
        thetas: Vec<f64>,
    },
    /// Recovery from collision-free outcomes only.
    Click(SweepArgs),
    /// Numerical rank of the measurement matrix versus port count.
    RankAnalysis(RankArgs),
    /// LogDet against constrained least squares on paired instances.
    SolverCompare(SweepArgs),
    /// Sample a state and coupler, emit the measurement record as JSON.
    Simulate(SimulateArgs),
    /// Recover a state from a measurement record.
    Recover(RecoverArgs),
    /// Check unitarity, homomorphism and interference identities of the lift.
    LiftCheck {
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// JSON experiment spec; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named spec to start from (ignored with --config).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV and JSON results.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    couplers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    #[arg(long = "photons", short = 'n')]
    photons: Option<usize>,
    #[arg(long = "original-ports", short = 'm')]
    original_ports: Option<usize>,
    #[arg(long = "ports", short = 'M')]
    ports: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    solver: Option<Solver>,
    #[arg(long)]
    scenario: Option<String>,
    /// Suppress per-trial progress on stderr.
    #[arg(long)]
    quiet: bool,
}

impl SweepArgs {
    fn spec(&self, default_preset: &str) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => read_json(path)?,
            None => ExperimentSpec::preset(self.preset.as_deref().unwrap_or(default_preset))?,
        };
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = self.trials {
            spec.trials = v;
        }
        if let Some(v) = self.couplers {
            spec.couplers = v;
        }
        if let Some(v) = &self.ranks {
            spec.ranks = v.clone();
        }
        if let Some(v) = self.photons {
            spec.photons = v;
        }
        if let Some(v) = self.original_ports {
            spec.original_ports = v;
        }
        if let Some(v) = self.ports {
            spec.ports = v;
        }
        if let Some(v) = self.mu {
            spec.depolarization = v;
        }
        if let Some(v) = self.snr_db {
            spec.snr_db = v.is_finite().then_some(v);
        }
        if let Some(v) = self.solver {
            spec.recovery.solver = v;
        }
        if let Some(v) = &self.scenario {
            spec.scenario = v.clone();
        }
        spec.output = Some(self.out.clone());
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    couplers: Option<usize>,
    /// Port counts `M`.
    #[arg(long = "ports", value_delimiter = ',')]
    ports: Option<Vec<usize>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplerKind {
    Haar,
    Evanescent,
    Block,
    Identity,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    Click,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long = "photons", short = 'n', default_value_t = 3)]
    photons: usize,
    #[arg(long = "original-ports", short = 'm', default_value_t = 3)]
    original_ports: usize,
    #[arg(long = "ports", short = 'M', default_value_t = 7)]
    ports: usize,
    #[arg(long, value_enum, default_value_t = CouplerKind::Haar)]
    coupler: CouplerKind,
    #[arg(long, default_value_t = 1)]
    coupler_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 1)]
    rank: usize,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 1)]
    state_seed: u64,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 1)]
    noise_seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
    /// Record destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the sampled state here.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct RecoverArgs {
    /// Measurement record JSON.
    #[arg(long)]
    record: PathBuf,
    /// Recovery config JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    solver: Option<Solver>,
    /// True state, to report fidelity.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn progress(quiet: bool) -> impl FnMut(&experiment::SweepRow) {
    move |row| {
        if !quiet {
            eprintln!(
                "{} rank={} coupler={} trial={} fidelity={:.4}",
                row.scenario, row.rank, row.coupler_idx, row.trial_idx, row.fidelity
            );
        }
    }
}

fn print_summary(label: &str, res: &SweepResult) {
    println!("{label}: d={} D={} fraction={:.4}", res.spec.dim(), res.spec.rows(), res.spec.measurement_fraction());
    println!("{:>6} {:>8} {:>8} {:>8} {:>6}", "rank", "mean", "std", "min", "fail");
    for (rank, s) in &res.by_rank {
        println!("{rank:>6} {:>8.4} {:>8.4} {:>8.4} {:>6}", s.mean, s.std, s.min, s.failures);
    }
}

fn save(res: &SweepResult, dir: &Path) -> Result<()> {
    let (csv, json) = res.write_to_dir(dir)?;
    eprintln!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn sweep(args: &SweepArgs, default_preset: &str, click: bool) -> Result<()> {
    let mut spec = args.spec(default_preset)?;
    if click {
        spec.mode = DetectorMode::Click;
    }
    let res = experiment::run_with_progress(&spec, progress(args.quiet))?;
    print_summary(&spec.scenario, &res);
    save(&res, &args.out)
}

fn coupler_study(args: &SweepArgs) -> Result<()> {
    let spec = args.spec("coupler_study")?;
    let res = experiment::run_with_progress(&spec, progress(args.quiet))?;
    print_summary(&spec.scenario, &res);
    let o = res.overall();
    println!("across couplers: mean={:.4} std={:.4}", o.mean, o.std);
    save(&res, &args.out)
}

fn coupler_compare(args: &SweepArgs, thetas: &[f64]) -> Result<()> {
    let spec = args.spec("coupler_comparison")?;
    let cmp = experiment::run_coupler_comparison(&spec, thetas)?;
    print_summary("haar", &cmp.haar);
    for (theta, res) in &cmp.evanescent {
        print_summary(&format!("evanescent theta={theta}"), res);
    }
    for (rank, gap) in &cmp.gap {
        println!("rank {rank}: haar - best waveguide (theta={}) = {gap:.4}", cmp.best_theta[rank]);
    }
    save(&cmp.haar, &args.out.join("haar"))?;
    for (theta, res) in &cmp.evanescent {
        save(res, &args.out.join(format!("evanescent_{theta}")))?;
    }
    fs::write(args.out.join("coupler_comparison.json"), serde_json::to_string_pretty(&(&cmp.best_theta, &cmp.gap))?)?;
    Ok(())
}

fn solver_compare(args: &SweepArgs) -> Result<()> {
    let spec = args.spec("solver_comparison")?;
    let cmp = experiment::run_solver_comparison(&spec)?;
    print_summary("logdet", &cmp.logdet);
    print_summary("least_squares", &cmp.least_squares);
    for (rank, diff) in &cmp.mean_difference {
        println!("rank {rank}: mean(logdet - least_squares) = {diff:+.4}");
    }
    println!("overall: {:+.4}", cmp.overall_difference());
    save(&cmp.logdet, &args.out.join("logdet"))?;
    save(&cmp.least_squares, &args.out.join("least_squares"))
}

fn rank_analysis(args: &RankArgs) -> Result<()> {
    let mut spec: RankAnalysisSpec = match &args.config {
        Some(path) => read_json(path)?,
        None => RankAnalysisSpec::default(),
    };
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.couplers {
        spec.couplers = v;
    }
    if let Some(v) = &args.ports {
        spec.ports = v.clone();
    }
    let rows = experiment::run_rank_analysis(&spec)?;
    println!("{:>5} {:>6} {:>10} {:>10} {:>10}", "M", "D", "min(D,d2)", "mean rank", "coupler");
    for r in &rows {
        let kind = serde_json::to_value(r.coupler)?["kind"].as_str().unwrap_or("").to_string();
        println!("{:>5} {:>6} {:>10} {:>10.2} {:>10}", r.ports, r.rows, r.full_rank, r.mean_rank, kind);
    }
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("rank_analysis.csv");
    experiment::write_rank_csv(&rows, fs::File::create(&path)?)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let source = match args.coupler {
        CouplerKind::Haar => CouplerSource::Haar { seed: args.coupler_seed },
        CouplerKind::Evanescent => CouplerSource::Evanescent { theta: args.theta },
        CouplerKind::Block => CouplerSource::BlockHaar { seed: args.coupler_seed },
        CouplerKind::Identity => CouplerSource::Identity,
    };
    let mode = match args.mode {
        Mode::Full => DetectorMode::Full,
        Mode::Click => DetectorMode::Click,
    };
    let u = source.build(args.ports, args.original_ports)?;
    let a = measurement::build_measurement_matrix(&u, args.original_ports, args.photons, mode)?;
    let rho = ensembles::sample_density_matrix(&EnsembleSpec {
        dim: a.dim(),
        rank: args.rank,
        depolarization: args.mu,
        seed: args.state_seed,
    })?;
    let mut record = measurement::measure(&a, &rho)?.with_coupler(source);
    if let Some(snr) = args.snr_db {
        record = measurement::add_noise(&record, snr, args.noise_seed)?;
    }
    if let Some(path) = &args.truth {
        fs::write(path, serde_json::to_string_pretty(&rho.to_parts())?)?;
    }
    emit(&record.to_json()?, args.out.as_deref())
}

fn recover(args: &RecoverArgs) -> Result<()> {
    let record = MeasurementRecord::from_json(&fs::read_to_string(&args.record)?)?;
    let mut cfg: RecoveryConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => RecoveryConfig::default(),
    };
    if let Some(s) = args.solver {
        cfg.solver = s;
    }
    let Some(source) = record.coupler else {
        bail!("record carries no coupler description");
    };
    let u = source.build(record.ports, record.original_ports)?;
    let a = measurement::build_measurement_matrix(&u, record.original_ports, record.photons, record.mode)?;
    let res = recovery::recover(&record, &a, &cfg)?;
    let mut report = serde_json::to_value(res.report())?;
    if let Some(path) = &args.truth {
        let parts: ComplexMatrixParts = read_json(path)?;
        let truth = DensityMatrix::new(parts.to_matrix()?)?;
        report["fidelity"] = metrics::fidelity(&truth, &res.rho)?.into();
    }
    emit(&serde_json::to_string_pretty(&report)?, args.out.as_deref())
}

fn lift_check(samples: usize, seed: u64) -> Result<()> {
    let check = experiment::run_lift_check(samples, seed)?;
    println!("{}", serde_json::to_string_pretty(&check)?);
    if !check.passes() {
        bail!("lifting identities violated");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Sweep(args) => sweep(args, "noiseless", false),
        Command::CouplerStudy(args) => coupler_study(args),
        Command::CouplerCompare { sweep, thetas } => coupler_compare(sweep, thetas),
        Command::Click(args) => sweep(args, "click", true),
        Command::RankAnalysis(args) => rank_analysis(args),
        Command::SolverCompare(args) => solver_compare(args),
        Command::Simulate(args) => simulate(args),
        Command::Recover(args) => recover(args),
        Command::LiftCheck { samples, seed } => lift_check(*samples, *seed),
    }
}
