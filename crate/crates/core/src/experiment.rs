//! Seeded end-to-end studies: sample a state, simulate the single-observable
//! record, recover, score.
//!
//! # Seeds
//!
//! Every random draw derives from the master seed by [`derive_seed`], which
//! folds a list of words through splitmix64. The scenario name enters as its
//! 64-bit FNV-1a hash. Streams:
//!
//! - coupler `c`: `[scenario, COUPLER, c]`
//! - state for rank `r`, trial `t`: `[scenario, STATE, r, t]`
//! - trial seed (noise): `[scenario, TRIAL, r, c, t]`
//!
//! States depend only on `(rank, trial)` and couplers only on the coupler
//! index, so every coupler sees the same state set and runs that differ only in
//! solver are paired draw for draw.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::ensembles::{self, EnsembleSpec};
use crate::error::{QstError, Result};
use crate::fock;
use crate::measurement::{self, CouplerSource, DetectorMode, MeasurementMatrix};
use crate::metrics;
use crate::recovery::{self, RecoveryConfig, Solver};

const STREAM_COUPLER: u64 = 1;
const STREAM_STATE: u64 = 2;
const STREAM_TRIAL: u64 = 3;

/// Relative singular-value cutoff for the rank of the measurement matrix.
pub const RANK_TOL: f64 = 1e-8;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix64(master), |h, &w| splitmix64(h ^ splitmix64(w)))
}

/// Coupler family sampled per coupler index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplerFamily {
    Haar,
    /// Nearest-neighbour waveguide array; deterministic, so one coupler suffices.
    Evanescent { theta: f64 },
    BlockHaar,
    Identity,
}

impl CouplerFamily {
    pub fn source(&self, seed: u64) -> CouplerSource {
        match *self {
            CouplerFamily::Haar => CouplerSource::Haar { seed },
            CouplerFamily::Evanescent { theta } => CouplerSource::Evanescent { theta },
            CouplerFamily::BlockHaar => CouplerSource::BlockHaar { seed },
            CouplerFamily::Identity => CouplerSource::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub scenario: String,
    pub photons: usize,
    pub original_ports: usize,
    pub ports: usize,
    pub ranks: Vec<usize>,
    pub trials: usize,
    pub couplers: usize,
    pub depolarization: f64,
    pub snr_db: Option<f64>,
    pub mode: DetectorMode,
    pub coupler: CouplerFamily,
    pub recovery: RecoveryConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: "sweep".into(),
            photons: 3,
            original_ports: 3,
            ports: 7,
            ranks: vec![1, 2],
            trials: 50,
            couplers: 5,
            depolarization: 0.0,
            snr_db: None,
            mode: DetectorMode::Full,
            coupler: CouplerFamily::Haar,
            recovery: RecoveryConfig::default(),
            seed: 2024,
            output: None,
        }
    }
}

impl ExperimentSpec {
    /// Dimension of the original `N`-photon space.
    pub fn dim(&self) -> usize {
        fock::fock_dimension(self.photons, self.original_ports)
    }

    /// Number of recorded outcomes.
    pub fn rows(&self) -> usize {
        match self.mode {
            DetectorMode::Full => fock::fock_dimension(self.photons, self.ports),
            DetectorMode::Click => fock::binomial(self.ports, self.photons),
        }
    }

    pub fn measurement_fraction(&self) -> f64 {
        let d = self.dim() as f64;
        self.rows() as f64 / (d * d)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(QstError::InvalidArgument(what));
        if self.photons == 0 || self.original_ports == 0 {
            return bad("need at least one photon and one original port".into());
        }
        if self.original_ports > self.ports {
            return bad(format!("original ports {} exceed ports {}", self.original_ports, self.ports));
        }
        if self.mode == DetectorMode::Click && self.photons > self.ports {
            return bad("click detection needs N <= M".into());
        }
        let d = self.dim();
        if self.ranks.is_empty() || self.ranks.iter().any(|&r| r == 0 || r > d) {
            return bad(format!("ranks must lie in 1..={d}"));
        }
        if self.trials == 0 || self.couplers == 0 {
            return bad("trials and couplers must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.depolarization) {
            return bad("depolarization must lie in [0, 1]".into());
        }
        if self.snr_db.is_some_and(|s| s.is_nan() || s == f64::NEG_INFINITY) {
            return bad("snr_db must be a number or +inf".into());
        }
        self.recovery.validate()
    }

    /// FNV-1a hash of the canonical JSON form, written to every output.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        format!("{:016x}", fnv1a(json.as_bytes()))
    }

    fn scenario_word(&self) -> u64 {
        fnv1a(self.scenario.as_bytes())
    }

    pub fn coupler_seed(&self, coupler_idx: usize) -> u64 {
        derive_seed(self.seed, &[self.scenario_word(), STREAM_COUPLER, coupler_idx as u64])
    }

    pub fn state_seed(&self, rank: usize, trial_idx: usize) -> u64 {
        derive_seed(self.seed, &[self.scenario_word(), STREAM_STATE, rank as u64, trial_idx as u64])
    }

    pub fn trial_seed(&self, rank: usize, coupler_idx: usize, trial_idx: usize) -> u64 {
        derive_seed(
            self.seed,
            &[self.scenario_word(), STREAM_TRIAL, rank as u64, coupler_idx as u64, trial_idx as u64],
        )
    }

    pub fn coupler_source(&self, coupler_idx: usize) -> CouplerSource {
        self.coupler.source(self.coupler_seed(coupler_idx))
    }

    pub fn measurement_matrix(&self, coupler_idx: usize) -> Result<MeasurementMatrix> {
        let u = self.coupler_source(coupler_idx).build(self.ports, self.original_ports)?;
        measurement::build_measurement_matrix(&u, self.original_ports, self.photons, self.mode)
    }

    pub fn sample_state(&self, rank: usize, trial_idx: usize) -> Result<DensityMatrix> {
        ensembles::sample_density_matrix(&EnsembleSpec {
            dim: self.dim(),
            rank,
            depolarization: self.depolarization,
            seed: self.state_seed(rank, trial_idx),
        })
    }

    /// Named configurations. `full_protocol` and `large` use full-size
    /// trial counts and take hours.
    pub fn preset(name: &str) -> Result<Self> {
        let base = ExperimentSpec { scenario: name.to_string(), ..Self::default() };
        let spec = match name {
            "noiseless" => base,
            "noisy" => ExperimentSpec { depolarization: 0.02, snr_db: Some(25.0), ..base },
            "click" => ExperimentSpec {
                original_ports: 4,
                ports: 11,
                mode: DetectorMode::Click,
                snr_db: Some(25.0),
                trials: 30,
                couplers: 1,
                ..base
            },
            "coupler_study" => ExperimentSpec {
                original_ports: 4,
                ports: 10,
                ranks: vec![2],
                trials: 1,
                couplers: 30,
                ..base
            },
            "solver_comparison" => ExperimentSpec {
                original_ports: 4,
                ports: 11,
                ranks: vec![1, 2, 3],
                snr_db: Some(25.0),
                trials: 10,
                couplers: 1,
                ..base
            },
            "rank_sweep" => ExperimentSpec { ranks: (1..=10).collect(), trials: 10, couplers: 2, ..base },
            "coupler_comparison" => ExperimentSpec { ranks: (1..=6).collect(), trials: 10, couplers: 2, ..base },
            "full_protocol" => ExperimentSpec {
                ranks: (1..=10).collect(),
                trials: 200,
                couplers: 10,
                ..base
            },
            "large" => ExperimentSpec {
                original_ports: 7,
                ports: 16,
                ranks: vec![1, 2, 3],
                trials: 15,
                couplers: 1,
                ..base
            },
            other => return Err(QstError::InvalidArgument(format!("unknown preset `{other}`"))),
        };
        Ok(spec)
    }

    pub const PRESETS: &'static [&'static str] = &[
        "noiseless",
        "noisy",
        "click",
        "coupler_study",
        "solver_comparison",
        "rank_sweep",
        "coupler_comparison",
        "full_protocol",
        "large",
    ];
}

/// One `(rank, coupler, trial)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub rank: usize,
    pub coupler_idx: usize,
    pub trial_idx: usize,
    /// NaN when the trial failed.
    pub fidelity: f64,
    pub residual: f64,
    pub converged: bool,
    pub n_outer_iters: usize,
    #[serde(rename = "D")]
    pub rows: usize,
    pub d: usize,
    pub meas_fraction: f64,
    pub snr_db: Option<f64>,
    pub mu: f64,
    pub seed: u64,
    pub state_seed: u64,
    pub coupler_seed: u64,
    pub error: Option<String>,
}

impl SweepRow {
    pub const CSV_HEADER: [&'static str; 14] = [
        "scenario",
        "rank",
        "coupler_idx",
        "trial_idx",
        "fidelity",
        "residual",
        "converged",
        "n_outer_iters",
        "D",
        "d",
        "meas_fraction",
        "snr_db",
        "mu",
        "seed",
    ];

    fn csv_record(&self) -> [String; 14] {
        [
            self.scenario.clone(),
            self.rank.to_string(),
            self.coupler_idx.to_string(),
            self.trial_idx.to_string(),
            self.fidelity.to_string(),
            self.residual.to_string(),
            self.converged.to_string(),
            self.n_outer_iters.to_string(),
            self.rows.to_string(),
            self.d.to_string(),
            self.meas_fraction.to_string(),
            self.snr_db.map_or_else(|| "inf".to_string(), |s| s.to_string()),
            self.mu.to_string(),
            self.seed.to_string(),
        ]
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.fidelity.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64], failures: usize) -> Self {
        let n = values.len();
        if n == 0 {
            return Summary { count: 0, failures, mean: f64::NAN, std: f64::NAN, min: f64::NAN, max: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Summary {
            count: n,
            failures,
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: ExperimentSpec,
    pub config_hash: String,
    pub rows: Vec<SweepRow>,
    /// Fidelity summary per rank.
    pub by_rank: BTreeMap<usize, Summary>,
}

impl SweepResult {
    pub fn from_rows(spec: &ExperimentSpec, rows: Vec<SweepRow>) -> Self {
        let by_rank = summarize_by(&rows, |r| r.rank);
        SweepResult { spec: spec.clone(), config_hash: spec.config_hash(), rows, by_rank }
    }

    pub fn mean_fidelity(&self, rank: usize) -> Option<f64> {
        self.by_rank.get(&rank).map(|s| s.mean)
    }

    pub fn overall(&self) -> Summary {
        let ok: Vec<f64> = self.rows.iter().filter(|r| r.is_ok()).map(|r| r.fidelity).collect();
        Summary::of(&ok, self.rows.len() - ok.len())
    }

    pub fn by_coupler(&self) -> BTreeMap<usize, Summary> {
        summarize_by(&self.rows, |r| r.coupler_idx)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(SweepRow::CSV_HEADER)?;
        for row in &self.rows {
            w.write_record(row.csv_record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SweepSummaryJson {
            spec: &self.spec,
            config_hash: &self.config_hash,
            by_rank: &self.by_rank,
            overall: self.overall(),
        })?)
    }

    /// Writes `<scenario>.csv` and `<scenario>.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.spec.scenario));
        let json_path = dir.join(format!("{}.json", self.spec.scenario));
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        std::fs::write(&json_path, self.to_json()?)?;
        Ok((csv_path, json_path))
    }
}

#[derive(Serialize)]
struct SweepSummaryJson<'a> {
    spec: &'a ExperimentSpec,
    config_hash: &'a str,
    by_rank: &'a BTreeMap<usize, Summary>,
    overall: Summary,
}

fn summarize_by(rows: &[SweepRow], key: impl Fn(&SweepRow) -> usize) -> BTreeMap<usize, Summary> {
    let mut groups: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for row in rows {
        let entry = groups.entry(key(row)).or_default();
        if row.is_ok() {
            entry.0.push(row.fidelity);
        } else {
            entry.1 += 1;
        }
    }
    groups.into_iter().map(|(k, (v, f))| (k, Summary::of(&v, f))).collect()
}

struct TrialOutcome {
    fidelity: f64,
    residual: f64,
    converged: bool,
    outer: usize,
}

fn trial_outcome(
    spec: &ExperimentSpec,
    a: &MeasurementMatrix,
    rank: usize,
    coupler_idx: usize,
    trial_idx: usize,
) -> Result<TrialOutcome> {
    let rho = spec.sample_state(rank, trial_idx)?;
    let mut record = measurement::measure(a, &rho)?.with_coupler(spec.coupler_source(coupler_idx));
    if let Some(snr) = spec.snr_db {
        record = measurement::add_noise(&record, snr, spec.trial_seed(rank, coupler_idx, trial_idx))?;
    }
    let res = recovery::recover(&record, a, &spec.recovery)?;
    Ok(TrialOutcome {
        fidelity: metrics::fidelity(&rho, &res.rho)?,
        residual: res.residual,
        converged: res.converged,
        outer: res.outer_iters,
    })
}

fn make_row(
    spec: &ExperimentSpec,
    a: Option<&MeasurementMatrix>,
    rank: usize,
    coupler_idx: usize,
    trial_idx: usize,
) -> SweepRow {
    let outcome = a
        .ok_or_else(|| QstError::InvalidArgument("coupler construction failed".into()))
        .and_then(|a| trial_outcome(spec, a, rank, coupler_idx, trial_idx));
    let (fidelity, residual, converged, n_outer_iters, error) = match outcome {
        Ok(o) => (o.fidelity, o.residual, o.converged, o.outer, None),
        Err(e) => (f64::NAN, f64::NAN, false, 0, Some(e.to_string())),
    };
    SweepRow {
        scenario: spec.scenario.clone(),
        rank,
        coupler_idx,
        trial_idx,
        fidelity,
        residual,
        converged,
        n_outer_iters,
        rows: spec.rows(),
        d: spec.dim(),
        meas_fraction: spec.measurement_fraction(),
        snr_db: spec.snr_db,
        mu: spec.depolarization,
        seed: spec.trial_seed(rank, coupler_idx, trial_idx),
        state_seed: spec.state_seed(rank, trial_idx),
        coupler_seed: spec.coupler_seed(coupler_idx),
        error,
    }
}

/// Re-runs one trial in isolation.
pub fn run_trial(spec: &ExperimentSpec, rank: usize, coupler_idx: usize, trial_idx: usize) -> Result<SweepRow> {
    spec.validate()?;
    let a = spec.measurement_matrix(coupler_idx)?;
    Ok(make_row(spec, Some(&a), rank, coupler_idx, trial_idx))
}

/// Runs every `(rank, coupler, trial)` cell. Rows are ordered by coupler, then
/// rank, then trial. Per-trial failures are recorded in the row.
pub fn run_fidelity_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    run_with_progress(spec, |_| {})
}

/// [`run_fidelity_sweep`] with a callback after each row.
pub fn run_with_progress(spec: &ExperimentSpec, mut progress: impl FnMut(&SweepRow)) -> Result<SweepResult> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.ranks.len() * spec.couplers * spec.trials);
    for c in 0..spec.couplers {
        let a = spec.measurement_matrix(c).ok();
        for &rank in &spec.ranks {
            for t in 0..spec.trials {
                let row = make_row(spec, a.as_ref(), rank, c, t);
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(SweepResult::from_rows(spec, rows))
}

/// Fidelity across couplers with the state set held fixed.
pub fn run_coupler_study(spec: &ExperimentSpec) -> Result<SweepResult> {
    run_fidelity_sweep(spec)
}

/// Sweep restricted to collision-free outcomes.
pub fn run_click_experiment(spec: &ExperimentSpec) -> Result<SweepResult> {
    let spec = ExperimentSpec { mode: DetectorMode::Click, ..spec.clone() };
    run_fidelity_sweep(&spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplerComparison {
    pub haar: SweepResult,
    pub evanescent: Vec<(f64, SweepResult)>,
    /// Per rank, the waveguide angle with the highest mean fidelity.
    pub best_theta: BTreeMap<usize, f64>,
    /// Per rank, Haar mean minus the best waveguide mean.
    pub gap: BTreeMap<usize, f64>,
}

/// Haar couplers against waveguide arrays over an angle sweep. The waveguide
/// arms use one coupler each since they are deterministic.
pub fn run_coupler_comparison(spec: &ExperimentSpec, thetas: &[f64]) -> Result<CouplerComparison> {
    if thetas.is_empty() {
        return Err(QstError::InvalidArgument("need at least one waveguide angle".into()));
    }
    // shared scenario name keeps the state draws identical across arms
    let haar = run_fidelity_sweep(&ExperimentSpec { coupler: CouplerFamily::Haar, ..spec.clone() })?;
    let mut evanescent = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let arm = ExperimentSpec { coupler: CouplerFamily::Evanescent { theta }, couplers: 1, ..spec.clone() };
        evanescent.push((theta, run_fidelity_sweep(&arm)?));
    }
    let mut best_theta = BTreeMap::new();
    let mut gap = BTreeMap::new();
    for &rank in &spec.ranks {
        let best = evanescent
            .iter()
            .filter_map(|(theta, res)| res.mean_fidelity(rank).filter(|m| m.is_finite()).map(|m| (*theta, m)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let (Some((theta, mean)), Some(h)) = (best, haar.mean_fidelity(rank)) {
            best_theta.insert(rank, theta);
            gap.insert(rank, h - mean);
        }
    }
    Ok(CouplerComparison { haar, evanescent, best_theta, gap })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverComparison {
    pub logdet: SweepResult,
    pub least_squares: SweepResult,
    /// Per rank, mean over paired trials of `F_logdet - F_ls`.
    pub mean_difference: BTreeMap<usize, f64>,
}

impl SolverComparison {
    pub fn overall_difference(&self) -> f64 {
        let diffs = paired_differences(&self.logdet.rows, &self.least_squares.rows);
        diffs.iter().map(|(_, d)| d).sum::<f64>() / diffs.len().max(1) as f64
    }
}

fn paired_differences(a: &[SweepRow], b: &[SweepRow]) -> Vec<(usize, f64)> {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.is_ok() && y.is_ok())
        .map(|(x, y)| (x.rank, x.fidelity - y.fidelity))
        .collect()
}

/// Both solvers on identical states, couplers and noise draws.
pub fn run_solver_comparison(spec: &ExperimentSpec) -> Result<SolverComparison> {
    let arm = |solver: Solver| {
        let recovery = spec.recovery.clone().with_solver(solver);
        run_fidelity_sweep(&ExperimentSpec { recovery, ..spec.clone() })
    };
    let logdet = arm(Solver::LogDet)?;
    let least_squares = arm(Solver::LeastSquares)?;
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (rank, diff) in paired_differences(&logdet.rows, &least_squares.rows) {
        groups.entry(rank).or_default().push(diff);
    }
    let mean_difference = groups
        .into_iter()
        .map(|(rank, v)| (rank, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    Ok(SolverComparison { logdet, least_squares, mean_difference })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankAnalysisSpec {
    pub photons: usize,
    pub original_ports: usize,
    pub ports: Vec<usize>,
    pub couplers: usize,
    pub seed: u64,
    pub rel_tol: f64,
    /// Also run block-diagonal couplers that never mix original and ancilla ports.
    pub block_control: bool,
}

impl Default for RankAnalysisSpec {
    fn default() -> Self {
        Self {
            photons: 3,
            original_ports: 4,
            ports: vec![7, 9, 11, 13],
            couplers: 100,
            seed: 2024,
            rel_tol: RANK_TOL,
            block_control: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub ports: usize,
    #[serde(rename = "D")]
    pub rows: usize,
    pub d: usize,
    /// `min(D, d^2)`.
    pub full_rank: usize,
    pub coupler: CouplerFamily,
    pub mean_rank: f64,
    pub min_rank: usize,
    pub max_rank: usize,
}

/// Mean numerical rank of the full-detection measurement matrix per port count.
pub fn run_rank_analysis(spec: &RankAnalysisSpec) -> Result<Vec<RankRow>> {
    if spec.couplers == 0 || spec.ports.is_empty() {
        return Err(QstError::InvalidArgument("need at least one coupler and one port count".into()));
    }
    let d = fock::fock_dimension(spec.photons, spec.original_ports);
    let mut families = vec![CouplerFamily::Haar];
    if spec.block_control {
        families.push(CouplerFamily::BlockHaar);
    }
    let mut out = Vec::new();
    for &ports in &spec.ports {
        let rows = fock::fock_dimension(spec.photons, ports);
        for family in &families {
            let mut ranks = Vec::with_capacity(spec.couplers);
            for c in 0..spec.couplers {
                let seed = derive_seed(spec.seed, &[ports as u64, STREAM_COUPLER, c as u64]);
                let u = family.source(seed).build(ports, spec.original_ports)?;
                let a = measurement::build_measurement_matrix(&u, spec.original_ports, spec.photons, DetectorMode::Full)?;
                ranks.push(a.numerical_rank(spec.rel_tol));
            }
            out.push(RankRow {
                ports,
                rows,
                d,
                full_rank: rows.min(d * d),
                coupler: *family,
                mean_rank: ranks.iter().sum::<usize>() as f64 / ranks.len() as f64,
                min_rank: *ranks.iter().min().unwrap_or(&0),
                max_rank: *ranks.iter().max().unwrap_or(&0),
            });
        }
    }
    Ok(out)
}

pub fn write_rank_csv<W: Write>(rows: &[RankRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ports", "D", "d", "full_rank", "coupler", "mean_rank", "min_rank", "max_rank"])?;
    for r in rows {
        let family = match r.coupler {
            CouplerFamily::Haar => "haar".to_string(),
            CouplerFamily::BlockHaar => "block_haar".to_string(),
            CouplerFamily::Identity => "identity".to_string(),
            CouplerFamily::Evanescent { theta } => format!("evanescent:{theta}"),
        };
        w.write_record([
            r.ports.to_string(),
            r.rows.to_string(),
            r.d.to_string(),
            r.full_rank.to_string(),
            family,
            r.mean_rank.to_string(),
            r.min_rank.to_string(),
            r.max_rank.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Worst deviations seen by [`run_lift_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftCheck {
    pub samples: usize,
    /// max `||L(U)^dag L(U) - I||_F`.
    pub unitarity: f64,
    /// max `||L(U V) - L(U) L(V)||_F`.
    pub homomorphism: f64,
    /// max `||L_1(U) - U||_F` for one photon.
    pub single_photon: f64,
    /// `|<1,1| L(BS) |1,1>|` for a balanced beam splitter.
    pub hong_ou_mandel: f64,
    /// max relative error of `Per(J_n) = n!` for the all-ones matrix, `n <= 8`.
    pub permanent_ones: f64,
}

impl LiftCheck {
    pub fn passes(&self) -> bool {
        self.unitarity <= 1e-9
            && self.homomorphism <= 1e-8
            && self.single_photon <= 1e-12
            && self.hong_ou_mandel <= 1e-12
            && self.permanent_ones <= 1e-12
    }
}

/// Lifts Haar couplers with `N` in `{2, 3}` and `M` in `4..=8` and records the
/// worst deviation from each structural identity.
pub fn run_lift_check(samples: usize, seed: u64) -> Result<LiftCheck> {
    use crate::linalg::CMatrix;
    use crate::optical::{self, PortUnitary};
    use num_complex::Complex64;

    let mut check = LiftCheck {
        samples,
        unitarity: 0.0,
        homomorphism: 0.0,
        single_photon: 0.0,
        hong_ou_mandel: 0.0,
        permanent_ones: 0.0,
    };
    for s in 0..samples {
        let ports = 4 + s % 5;
        let photons = 2 + s % 2;
        let u = ensembles::sample_haar_unitary(ports, derive_seed(seed, &[STREAM_COUPLER, s as u64, 0]));
        let v = ensembles::sample_haar_unitary(ports, derive_seed(seed, &[STREAM_COUPLER, s as u64, 1]));
        let lu = optical::lift_unitary(&u, photons)?;
        let lv = optical::lift_unitary(&v, photons)?;
        let luv = optical::lift_unitary(&u.compose(&v)?, photons)?;
        let eye = CMatrix::identity(lu.dim(), lu.dim());
        check.unitarity = check.unitarity.max((lu.matrix().adjoint() * lu.matrix() - eye).norm());
        check.homomorphism = check.homomorphism.max((luv.matrix() - lu.matrix() * lv.matrix()).norm());
        let l1 = optical::lift_unitary(&u, 1)?;
        check.single_photon = check.single_photon.max((l1.matrix() - u.matrix()).norm());
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let bs = PortUnitary::new(CMatrix::from_row_slice(2, 2, &[h, h, h, -h].map(|x| Complex64::new(x, 0.0))))?;
    let lifted = optical::lift_unitary(&bs, 2)?;
    let one_one = fock::index_of(lifted.basis(), &crate::fock::Occupation::new(vec![1, 1]))?;
    check.hong_ou_mandel = lifted.matrix()[(one_one, one_one)].norm();
    let mut factorial = 1.0;
    for n in 1..=8 {
        factorial *= n as f64;
        let per = optical::permanent(&CMatrix::from_element(n, n, Complex64::new(1.0, 0.0)))?;
        check.permanent_ones = check.permanent_ones.max((per - factorial).norm() / factorial);
    }
    Ok(check)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                out[idx[k]] = avg;
            }
            i = j + 1;
        }
        out
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
