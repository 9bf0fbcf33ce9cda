//! Seeded Monte Carlo campaigns: convergence census (which critical value
//! each random start reaches), saddle-escape probes and the least-squares
//! comparison, with resumable on-disk persistence.
//!
//! Trials are independent and run on the current rayon pool. Trial `k`
//! draws everything from `trial_seed(master_seed, k)`, so results do not
//! depend on scheduling or on which trials were already on disk.
//!
//! Output directory layout:
//!
//! | file | content |
//! |------|---------|
//! | `config.json` | the config and its hash, written first |
//! | `trials.jsonl` | one [`TrialRecord`] per line, appended as trials finish |
//! | `campaign.json` | the full result |
//! | `trials.csv` | `trial,seed,terminal_loss,matched_index,r,escaped,runtime_s` |

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::defaults;
use crate::error::{Error, Result};
use crate::flow::{check_exponential_preconditions, integrate, IntegratorConfig, StopReason};
use crate::hessian::tangent_basis;
use crate::io::{read_json, write_json, ProblemFile};
use crate::landscape::{classify_limit, construct_saddle, critical_values, CriticalValueTable, Saddle, SaddleOptions, Subset};
use crate::linalg::{frobenius_distance, random_orthogonal};
use crate::network::{loss, LayerDims, WeightTuple};
use crate::reduction::{
    end_to_end, generate_problem, least_squares_solution, reduce_problem, ProblemShape, RawProblem,
    ReducedProblem,
};

/// Where the data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    Generated {
        shape: ProblemShape,
        scale: f64,
        seed: u64,
    },
    /// A JSON problem file; its `hidden_dims` are ignored in favour of the config's.
    File { path: PathBuf },
    Inline {
        #[serde(rename = "X", with = "crate::io::rows")]
        x: DMatrix<f64>,
        #[serde(rename = "Y", with = "crate::io::rows")]
        y: DMatrix<f64>,
    },
}

impl ProblemSource {
    pub fn load(&self) -> Result<RawProblem> {
        match self {
            ProblemSource::Generated { shape, scale, seed } => generate_problem(*shape, *scale, *seed),
            ProblemSource::File { path } => read_json::<ProblemFile>(path)?.raw(),
            ProblemSource::Inline { x, y } => RawProblem::new(x.clone(), y.clone()),
        }
    }
}

/// Initial-condition law for convergence campaigns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitDistribution {
    /// I.i.d. centered Gaussian entries; `scale = None` means `1/√fan_in` per layer.
    Gaussian { scale: Option<f64> },
    /// Every trial starts at `W = 0`.
    Zero,
}

impl Default for InitDistribution {
    fn default() -> Self {
        InitDistribution::Gaussian { scale: None }
    }
}

/// How a saddle is perturbed in escape probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Uniform on the unit sphere of the full weight space.
    Ambient,
    /// Uniform direction inside the stratum's tangent space (single hidden layer only).
    Tangent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    /// `d_1, …, d_H`, input side first.
    pub hidden_dims: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub init: InitDistribution,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Terminal (reduced) loss below this counts as a global minimum.
    #[serde(default = "default_global_tol")]
    pub global_loss_tol: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub master_seed: u64,
}

fn default_global_tol() -> f64 {
    defaults::GLOBAL_LOSS_TOL
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSource, hidden_dims: Vec<usize>, trials: usize, master_seed: u64) -> Self {
        Self {
            problem,
            hidden_dims,
            trials,
            init: InitDistribution::default(),
            integrator: IntegratorConfig::default(),
            global_loss_tol: defaults::GLOBAL_LOSS_TOL,
            output: None,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::ConfigInvalid("trials must be at least 1".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::ConfigInvalid("at least one hidden layer is required".into()));
        }
        if let InitDistribution::Gaussian { scale: Some(s) } = self.init {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::ConfigInvalid(format!("init scale must be positive, got {s}")));
            }
        }
        if !(self.global_loss_tol > 0.0) {
            return Err(Error::ConfigInvalid("global_loss_tol must be positive".into()));
        }
        self.integrator.validate()
    }

    /// SHA-256 of the JSON form with `output` cleared, hex encoded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        hash_json(&c)
    }
}

/// SHA-256 of the compact JSON form, hex encoded.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Build identifier stored with every result.
pub fn build_id() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// SplitMix64 finalizer applied to `master + (k+1)·φ`.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    let mut z = master_seed.wrapping_add((trial as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One trial. Failures are recorded in `error` instead of aborting the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub terminal_loss: Option<f64>,
    pub grad_norm: Option<f64>,
    pub stop_reason: Option<StopReason>,
    pub final_time: Option<f64>,
    /// 0-based index into the critical-value table.
    pub matched_index: Option<usize>,
    pub matched_value: Option<f64>,
    pub r: Option<usize>,
    pub fitted: Option<Subset>,
    pub global: bool,
    /// Escape probes only.
    pub escaped: Option<bool>,
    /// `‖W_total − W_LS‖_F / ‖W_LS‖_F` at global terminals.
    pub least_squares_error: Option<f64>,
    pub runtime_s: f64,
    pub error: Option<String>,
}

impl TrialRecord {
    fn empty(trial: usize, seed: u64) -> Self {
        Self {
            trial,
            seed,
            terminal_loss: None,
            grad_norm: None,
            stop_reason: None,
            final_time: None,
            matched_index: None,
            matched_value: None,
            r: None,
            fitted: None,
            global: false,
            escaped: None,
            least_squares_error: None,
            runtime_s: 0.0,
            error: None,
        }
    }

    /// The fields that must agree between reruns of one config.
    pub fn classification(&self) -> (usize, u64, Option<usize>, Option<usize>, bool, Option<bool>) {
        (self.trial, self.seed, self.matched_index, self.r, self.global, self.escaped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvfResult {
    pub trials: usize,
    pub global_count: usize,
    pub global_fraction: f64,
    /// Trials per rank `r` of the classified terminal.
    pub strata: BTreeMap<usize, usize>,
    /// Trials that failed or did not reach a critical point.
    pub unclassified: usize,
    /// Trials per critical-value table index.
    pub value_counts: Vec<usize>,
    pub critical_values: CriticalValueTable,
    pub records: Vec<TrialRecord>,
    pub config_hash: String,
    pub build: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeResult {
    pub fitted: Subset,
    pub epsilon: f64,
    pub mode: Perturbation,
    pub saddle_loss: f64,
    /// A trial escapes when its terminal loss is below this.
    pub threshold: f64,
    pub trials: usize,
    pub escaped_count: usize,
    pub escape_fraction: f64,
    pub records: Vec<TrialRecord>,
    pub config_hash: String,
    pub build: String,
}

/// Everything a trial needs, built once per campaign.
struct Context {
    raw: RawProblem,
    reduced: ReducedProblem,
    table: CriticalValueTable,
    dims: LayerDims,
}

impl Context {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let raw = cfg.problem.load()?;
        let reduced = reduce_problem(&raw, &cfg.hidden_dims)?;
        let table = critical_values(reduced.s_y())?;
        let dims = reduced.dims().clone();
        Ok(Self {
            raw,
            reduced,
            table,
            dims,
        })
    }

    /// Integrates from `w0` (reduced coordinates) and classifies the end point.
    fn finish(&self, cfg: &ExperimentConfig, w0: &WeightTuple, rec: &mut TrialRecord) -> Result<WeightTuple> {
        let s_y = self.reduced.s_y();
        let traj = integrate(w0, s_y, &cfg.integrator)?;
        rec.terminal_loss = Some(traj.final_loss());
        rec.grad_norm = Some(traj.final_grad_norm());
        rec.stop_reason = Some(traj.stop_reason);
        rec.final_time = Some(traj.final_time());
        let report = classify_limit(&traj.terminal, s_y, &self.table)?;
        rec.matched_index = Some(report.matched_index);
        rec.matched_value = Some(report.matched_value);
        rec.r = Some(report.r);
        rec.fitted = Some(report.fitted_subset);
        rec.global = report.loss < cfg.global_loss_tol;
        if rec.global {
            rec.least_squares_error = Some(compare_least_squares(&self.raw, &traj.terminal, &self.reduced)?);
        }
        Ok(traj.terminal)
    }
}

fn default_scales(dims: &LayerDims) -> Vec<f64> {
    dims.widths()[..dims.depth() + 1]
        .iter()
        .map(|&fan_in| 1.0 / (fan_in as f64).sqrt())
        .collect()
}

/// Draws an initial state from `init`.
pub fn initial_state(dims: &LayerDims, init: &InitDistribution, seed: u64) -> WeightTuple {
    match init {
        InitDistribution::Zero => WeightTuple::zeros(dims),
        InitDistribution::Gaussian { scale } => {
            let scales = match scale {
                Some(s) => vec![*s; dims.depth() + 1],
                None => default_scales(dims),
            };
            WeightTuple::gaussian(dims, &scales, &mut ChaCha8Rng::seed_from_u64(seed))
        }
    }
}

fn timed(trial: usize, seed: u64, f: impl FnOnce(&mut TrialRecord) -> Result<()>) -> TrialRecord {
    let start = Instant::now();
    let mut rec = TrialRecord::empty(trial, seed);
    if let Err(e) = f(&mut rec) {
        rec.error = Some(e.to_string());
    }
    rec.runtime_s = start.elapsed().as_secs_f64();
    rec
}

/// Append-only store in the output directory.
struct Store {
    dir: PathBuf,
    jsonl: Mutex<BufWriter<File>>,
}

impl Store {
    /// Opens `dir`, checking any previous config against `hash`, and returns
    /// the records already present.
    fn open<C: Serialize>(dir: &Path, kind: &str, config: &C, hash: &str) -> Result<(Self, Vec<TrialRecord>)> {
        fs::create_dir_all(dir)?;
        let cfg_path = dir.join("config.json");
        if cfg_path.exists() {
            let prev: serde_json::Value = read_json(&cfg_path)?;
            let prev_hash = prev.get("config_hash").and_then(|h| h.as_str()).unwrap_or("");
            if prev_hash != hash {
                return Err(Error::ConfigInvalid(format!(
                    "{} holds a campaign with config hash {prev_hash}, not {hash}",
                    dir.display()
                )));
            }
        } else {
            write_json(
                &serde_json::json!({ "kind": kind, "config_hash": hash, "config": config }),
                &cfg_path,
            )?;
        }
        let path = dir.join("trials.jsonl");
        let mut done = Vec::new();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                // a torn last line from an interrupted run is skipped
                if let Ok(rec) = serde_json::from_str::<TrialRecord>(&line?) {
                    done.push(rec);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((
            Self {
                dir: dir.to_path_buf(),
                jsonl: Mutex::new(BufWriter::new(file)),
            },
            done,
        ))
    }

    fn append(&self, rec: &TrialRecord) -> Result<()> {
        let mut w = self.jsonl.lock().expect("store lock");
        serde_json::to_writer(&mut *w, rec)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn finish<T: Serialize>(&self, result: &T, records: &[TrialRecord]) -> Result<()> {
        write_json(result, self.dir.join("campaign.json"))?;
        write_trials_csv(records, File::create(self.dir.join("trials.csv"))?)
    }
}

/// Flat per-trial table; missing values are empty fields.
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trial", "seed", "terminal_loss", "matched_index", "r", "escaped", "runtime_s"])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for rec in records {
        w.write_record([
            rec.trial.to_string(),
            rec.seed.to_string(),
            opt(rec.terminal_loss.map(|x| format!("{x:?}"))),
            opt(rec.matched_index.map(|x| x.to_string())),
            opt(rec.r.map(|x| x.to_string())),
            opt(rec.escaped.map(|x| x.to_string())),
            format!("{:?}", rec.runtime_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the trials not yet on disk and returns all records sorted by index.
fn run_trials<C: Serialize>(
    trials: usize,
    output: Option<&Path>,
    kind: &str,
    config: &C,
    hash: &str,
    trial: impl Fn(usize) -> TrialRecord + Sync,
) -> Result<(Vec<TrialRecord>, Option<Store>)> {
    let (store, done) = match output {
        Some(dir) => {
            let (s, d) = Store::open(dir, kind, config, hash)?;
            (Some(s), d)
        }
        None => (None, Vec::new()),
    };
    let mut by_index: HashMap<usize, TrialRecord> =
        done.into_iter().filter(|r| r.trial < trials).map(|r| (r.trial, r)).collect();
    let todo: Vec<usize> = (0..trials).filter(|k| !by_index.contains_key(k)).collect();
    let fresh: Vec<TrialRecord> = todo
        .into_par_iter()
        .map(|k| {
            let rec = trial(k);
            if let Some(s) = &store {
                // persistence failure of one line is reported, not fatal
                if let Err(e) = s.append(&rec) {
                    eprintln!("warning: could not persist trial {k}: {e}");
                }
            }
            rec
        })
        .collect();
    by_index.extend(fresh.into_iter().map(|r| (r.trial, r)));
    let mut records: Vec<TrialRecord> = by_index.into_values().collect();
    records.sort_by_key(|r| r.trial);
    Ok((records, store))
}

/// Integrates `trials` random starts, classifies each terminal against the
/// critical-value table and aggregates the census.
pub fn run_ovf(cfg: &ExperimentConfig) -> Result<OvfResult> {
    cfg.validate()?;
    let ctx = Context::new(cfg)?;
    let hash = cfg.hash();
    let (records, store) = run_trials(cfg.trials, cfg.output.as_deref(), "ovf", cfg, &hash, |k| {
        let seed = trial_seed(cfg.master_seed, k);
        timed(k, seed, |rec| {
            let w0 = initial_state(&ctx.dims, &cfg.init, seed);
            ctx.finish(cfg, &w0, rec).map(drop)
        })
    })?;

    let mut strata = BTreeMap::new();
    let mut value_counts = vec![0; ctx.table.len()];
    let mut unclassified = 0;
    for rec in &records {
        match (rec.r, rec.matched_index) {
            (Some(r), Some(i)) => {
                *strata.entry(r).or_insert(0) += 1;
                value_counts[i] += 1;
            }
            _ => unclassified += 1,
        }
    }
    let global_count = records.iter().filter(|r| r.global).count();
    let result = OvfResult {
        trials: cfg.trials,
        global_count,
        global_fraction: global_count as f64 / cfg.trials as f64,
        strata,
        unclassified,
        value_counts,
        critical_values: ctx.table.clone(),
        records,
        config_hash: hash,
        build: build_id(),
    };
    if let Some(s) = store {
        s.finish(&result, &result.records)?;
    }
    Ok(result)
}

/// A unit vector drawn uniformly from the sphere of the given space.
fn unit_direction(dims: &LayerDims, rng: &mut ChaCha8Rng) -> WeightTuple {
    let n = dims.state_dim();
    let v = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(rng));
    WeightTuple::from_flat(dims, (&v / v.norm()).as_slice()).expect("length matches")
}

fn tangent_direction(basis: &[WeightTuple], dims: &LayerDims, rng: &mut ChaCha8Rng) -> Result<WeightTuple> {
    if basis.is_empty() {
        return Err(Error::ConfigInvalid("stratum has no tangent directions".into()));
    }
    let mut d = WeightTuple::zeros(dims);
    for t in basis {
        let c: f64 = StandardNormal.sample(rng);
        d = d.add_scaled(t, c)?;
    }
    let n = d.norm();
    Ok(d.scaled(1.0 / n))
}

/// Starts each trial at `saddle + ε·u` with `u` a random unit direction and
/// records whether the terminal loss drops below `L(saddle) − δ`, `δ` half
/// the gap to the next lower critical value. The saddle itself is built
/// once from the master seed.
pub fn run_saddle_escape(
    cfg: &ExperimentConfig,
    fitted: Subset,
    epsilon: f64,
    mode: Perturbation,
) -> Result<EscapeResult> {
    cfg.validate()?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::ConfigInvalid(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let ctx = Context::new(cfg)?;
    let s_y = ctx.reduced.s_y();
    let index = ctx
        .table
        .index_of_fitted(fitted)
        .ok_or_else(|| Error::SubsetTooLarge {
            size: fitted.len(),
            d_y: s_y.len(),
        })?;
    let saddle_loss = ctx.table.value(index);
    let delta = ctx
        .table
        .half_gap_below(index)
        .ok_or_else(|| Error::ConfigInvalid(format!("{fitted} fits every output: nothing to escape to")))?;
    let threshold = saddle_loss - delta;
    let saddle = construct_saddle(s_y, &ctx.dims, fitted, cfg.master_seed, SaddleOptions::default())?;
    let basis = match mode {
        Perturbation::Tangent => tangent_basis(&saddle)?,
        Perturbation::Ambient => Vec::new(),
    };

    #[derive(Serialize)]
    struct EscapeConfig<'a> {
        config: &'a ExperimentConfig,
        fitted: Subset,
        epsilon: f64,
        mode: Perturbation,
    }
    let mut plain = cfg.clone();
    plain.output = None;
    let full = EscapeConfig {
        config: &plain,
        fitted,
        epsilon,
        mode,
    };
    let hash = hash_json(&full);

    let (records, store) = run_trials(cfg.trials, cfg.output.as_deref(), "escape", &full, &hash, |k| {
        let seed = trial_seed(cfg.master_seed, k);
        timed(k, seed, |rec| {
            let w0 = perturbed_start(&saddle, &basis, &ctx.dims, mode, epsilon, seed)?;
            ctx.finish(cfg, &w0, rec)?;
            rec.escaped = rec.terminal_loss.map(|l| l < threshold);
            Ok(())
        })
    })?;
    let escaped_count = records.iter().filter(|r| r.escaped == Some(true)).count();
    let result = EscapeResult {
        fitted,
        epsilon,
        mode,
        saddle_loss,
        threshold,
        trials: cfg.trials,
        escaped_count,
        escape_fraction: escaped_count as f64 / cfg.trials as f64,
        records,
        config_hash: hash,
        build: build_id(),
    };
    if let Some(s) = store {
        s.finish(&result, &result.records)?;
    }
    Ok(result)
}

fn perturbed_start(
    saddle: &Saddle,
    basis: &[WeightTuple],
    dims: &LayerDims,
    mode: Perturbation,
    epsilon: f64,
    seed: u64,
) -> Result<WeightTuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = match mode {
        Perturbation::Ambient => unit_direction(dims, &mut rng),
        Perturbation::Tangent => tangent_direction(basis, dims, &mut rng)?,
    };
    saddle.weights.add_scaled(&u, epsilon)
}

/// Maps a global-minimum terminal (reduced coordinates) back to raw
/// coordinates and returns `‖W_total − W_LS‖_F / ‖W_LS‖_F`.
pub fn compare_least_squares(raw: &RawProblem, terminal: &WeightTuple, reduced: &ReducedProblem) -> Result<f64> {
    let l = loss(terminal, reduced.s_y())?;
    if l >= defaults::GLOBAL_LOSS_TOL {
        return Err(Error::NotGlobalMinimum { loss: l });
    }
    let w_total = end_to_end(&reduced.to_raw(terminal)?);
    let w_ls = least_squares_solution(raw)?;
    Ok(frobenius_distance(&w_total, &w_ls) / w_ls.norm())
}

/// A random start satisfying the exponential-rate preconditions on a
/// pyramidal architecture. `W_j = U diag(σ) Vᵀ` with random orthonormal
/// frames and singular values drawn from `base_scale·ratio^{j−1}·[0.8, 1.2]`.
/// For `ratio > 1.5` every `σ(W_{j+1})²` exceeds `‖W_j‖²`, so each `C_j` has
/// `d_{j+1}` positive eigenvalues (Weyl).
pub fn pyramidal_exponential_init(dims: &LayerDims, base_scale: f64, ratio: f64, seed: u64) -> Result<WeightTuple> {
    if dims.hidden().windows(2).any(|p| p[0] < p[1]) || dims.hidden().last().is_some_and(|&d| d < dims.d_y()) {
        return Err(Error::ConfigInvalid(format!(
            "dims {:?} are not pyramidal",
            dims.to_output_first()
        )));
    }
    if !(base_scale > 0.0 && base_scale.is_finite() && ratio > 1.5 && ratio.is_finite()) {
        return Err(Error::ConfigInvalid(format!(
            "need base_scale > 0 and ratio > 1.5, got {base_scale} and {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = (1..=dims.depth() + 1)
        .map(|j| {
            let (rows, cols) = (dims.width(j), dims.width(j - 1));
            let k = rows.min(cols);
            let u = random_orthogonal(rows, &mut rng).columns(0, k).into_owned();
            let v = random_orthogonal(cols, &mut rng).columns(0, k).into_owned();
            let level = base_scale * ratio.powi(j as i32 - 1);
            let s = DVector::from_fn(k, |_, _| level * rng.random_range(0.8..1.2));
            u * DMatrix::from_diagonal(&s) * v.transpose()
        })
        .collect();
    let w = WeightTuple::new(layers)?;
    match check_exponential_preconditions(&w) {
        Some(_) => Ok(w),
        None => Err(Error::ConfigInvalid("pyramidal initialization missed the preconditions".into())),
    }
}
