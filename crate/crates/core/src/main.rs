//! `lingdd`: command-line front end over the library.
//!
//! Exit codes: 0 success, 2 invalid input or violated assumptions, 3 numerical failure.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use lingdd::defaults;
use lingdd::error::{Error, Result};
use lingdd::experiments::{
    self, hash_json, initial_state, run_ovf, run_saddle_escape, ExperimentConfig, InitDistribution, Perturbation,
    ProblemSource,
};
use lingdd::flow::{fit_rate, integrate, invariant_drift, IntegratorConfig};
use lingdd::hessian::{negative_direction, spectrum, tangent_kernel_check};
use lingdd::io::{read_json, write_json, ProblemFile};
use lingdd::landscape::{classify_limit, construct_saddle, critical_values, SaddleOptions, Subset};
use lingdd::network::{LayerDims, WeightTuple};
use lingdd::reduction::{check_assumptions, generate_problem, reduce_problem, ProblemShape, ReducedProblem};

#[derive(Parser)]
#[command(name = "lingdd", version, about = "Gradient-descent dynamics of deep linear networks")]
struct Cli {
    /// Worker threads for experiment campaigns (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random problem file satisfying the assumptions.
    Gen(GenArgs),
    /// Integrate the flow from one initial state and classify the terminal.
    Simulate(SimulateArgs),
    /// Print and export the critical-value table.
    Landscape(LandscapeArgs),
    /// Hessian spectrum, negative direction and tangent/kernel check at a saddle.
    Hessian(HessianArgs),
    /// Convergence census over random initializations.
    Ovf(OvfArgs),
    /// Saddle-escape probe.
    Escape(EscapeArgs),
    /// Print every numeric default.
    Defaults,
}

#[derive(Args, Serialize)]
struct GenArgs {
    /// Widths output first: d_y,d_H,...,d_1,d_x.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// Number of samples.
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of the entries of X and Y.
    #[arg(long, default_value_t = defaults::PROBLEM_SCALE)]
    scale: f64,
    /// Output file (default: problem.json in the output directory).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct OutDir {
    /// Output directory (default: $LINGDD_OUT, else the current directory).
    #[arg(long = "out")]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct FlowArgs {
    /// Integration horizon.
    #[arg(long, default_value_t = defaults::T_MAX)]
    tmax: f64,
    #[arg(long, default_value_t = defaults::GRAD_STOP)]
    grad_stop: f64,
    /// Fixed-step RK4 with this step instead of adaptive RK45.
    #[arg(long, conflicts_with = "discrete")]
    rk4_step: Option<f64>,
    /// Discrete gradient descent (requires --lr).
    #[arg(long, requires = "lr")]
    discrete: bool,
    /// Learning rate for --discrete.
    #[arg(long)]
    lr: Option<f64>,
    /// Record every n-th accepted step.
    #[arg(long, default_value_t = defaults::SNAPSHOT_STRIDE)]
    stride: usize,
}

impl FlowArgs {
    fn config(&self) -> IntegratorConfig {
        let base = if self.discrete {
            IntegratorConfig::discrete(self.lr.unwrap_or(0.0))
        } else if let Some(h) = self.rk4_step {
            IntegratorConfig::rk4(h)
        } else {
            IntegratorConfig::default()
        };
        base.with_t_max(self.tmax)
            .with_grad_stop(self.grad_stop)
            .with_stride(self.stride)
    }
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Problem JSON file.
    problem: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start from these weights (reduced coordinates) instead of a random draw.
    #[arg(long)]
    init_file: Option<PathBuf>,
    /// Gaussian init scale (default 1/sqrt(fan_in)).
    #[arg(long)]
    init_scale: Option<f64>,
    #[command(flatten)]
    flow: FlowArgs,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct LandscapeArgs {
    problem: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct HessianArgs {
    problem: PathBuf,
    /// Fitted subset of the saddle, 1-based, e.g. '{1}' or '{}'.
    #[arg(long, conflicts_with = "weights")]
    saddle: Option<Subset>,
    /// Analyze these weights (reduced coordinates) instead of a constructed saddle.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative eigenvalue threshold for the kernel.
    #[arg(long, default_value_t = defaults::ZERO_TOL)]
    zero_tol: f64,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct CampaignArgs {
    /// Problem JSON file (optional with --config).
    problem: Option<PathBuf>,
    /// Experiment config JSON; command-line options are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    init_scale: Option<f64>,
    #[command(flatten)]
    flow: FlowArgs,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct OvfArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
}

#[derive(Args, Serialize)]
struct EscapeArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    /// Fitted subset of the saddle, 1-based.
    #[arg(long)]
    saddle: Subset,
    #[arg(long, default_value_t = defaults::ESCAPE_EPSILON)]
    epsilon: f64,
    /// Perturb along the stratum instead of the full space.
    #[arg(long)]
    tangent: bool,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_hash: String,
    started_unix: f64,
    finished_unix: f64,
    outputs: Vec<PathBuf>,
    version: String,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn out_dir(o: &OutDir) -> Result<PathBuf> {
    let dir = o
        .out
        .clone()
        .or_else(|| std::env::var_os(defaults::OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_manifest(path: &Path, command: &str, hash: String, started: f64, outputs: Vec<PathBuf>) -> Result<()> {
    let m = RunManifest {
        command: command.into(),
        config_hash: hash,
        started_unix: started,
        finished_unix: now(),
        outputs,
        version: experiments::build_id(),
    };
    write_json(&m, path)
}

fn load_reduced(path: &Path) -> Result<(ProblemFile, ReducedProblem)> {
    let file: ProblemFile = read_json(path)?;
    let reduced = reduce_problem(&file.raw()?, &file.hidden_dims)?;
    Ok((file, reduced))
}

fn load_weights(path: &Path, dims: &LayerDims) -> Result<WeightTuple> {
    let w: WeightTuple = read_json(path)?;
    if &w.dims() != dims {
        return Err(Error::ShapeMismatch(format!(
            "weights have dims {:?}, the problem needs {:?}",
            w.dims().to_output_first(),
            dims.to_output_first()
        )));
    }
    Ok(w)
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let started = now();
    let dims = LayerDims::from_output_first(&a.dims)?;
    dims.check_dimension_order()?;
    let shape = ProblemShape {
        m: a.m,
        d_x: dims.d_x(),
        d_y: dims.d_y(),
    };
    if a.m < shape.d_x {
        return Err(Error::DimensionOrder(format!("m = {} < d_x = {}", a.m, shape.d_x)));
    }
    let mut seed = a.seed;
    let raw = loop {
        match generate_problem(shape, a.scale, seed) {
            Ok(raw) => break raw,
            Err(Error::AssumptionViolation(_)) if seed < a.seed + 100 => {
                eprintln!("seed {seed} violated the assumptions, retrying with {}", seed + 1);
                seed += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let reduced = reduce_problem(&raw, dims.hidden())?;
    let report = check_assumptions(&raw, &reduced);
    let out = match &a.output {
        Some(p) => p.clone(),
        None => out_dir(&OutDir { out: None })?.join("problem.json"),
    };
    write_json(&ProblemFile::new(&raw, dims.hidden().to_vec()), &out)?;
    let report_path = out.with_extension("report.json");
    write_json(&report, &report_path)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("wrote {} (seed {seed})", out.display());
    let manifest = PathBuf::from(format!("{}.manifest.json", out.display()));
    write_manifest(&manifest, "gen", hash_json(a), started, vec![out, report_path])
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let started = now();
    let (_, reduced) = load_reduced(&a.problem)?;
    let dims = reduced.dims().clone();
    let s_y: &DVector<f64> = reduced.s_y();
    let w0 = match &a.init_file {
        Some(p) => load_weights(p, &dims)?,
        None => initial_state(&dims, &InitDistribution::Gaussian { scale: a.init_scale }, a.seed),
    };
    let cfg = a.flow.config();
    let traj = integrate(&w0, s_y, &cfg)?;
    let dir = out_dir(&a.out)?;
    let csv_path = dir.join("trajectory.csv");
    let json_path = dir.join("trajectory.json");
    let report_path = dir.join("simulate.json");
    traj.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    write_json(&traj, &json_path)?;

    println!("stop_reason {}", traj.stop_reason);
    println!(
        "t {:.6e}  loss {:.12e}  grad_norm {:.3e}  (raw loss adds offset {:.12e})",
        traj.final_time(),
        traj.final_loss(),
        traj.final_grad_norm(),
        reduced.offset()
    );
    let drift = invariant_drift(&traj)?;
    let label = if traj.conserved { "invariant drift" } else { "invariant drift (not conserved in discrete mode)" };
    println!("{label}: {}", drift.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(" "));

    let table = critical_values(s_y)?;
    let classification = match classify_limit(&traj.terminal, s_y, &table) {
        Ok(rep) => {
            println!(
                "matched critical value #{} = {:.12e} (distance {:.3e}), r = {}, fitted {}",
                rep.matched_index + 1,
                rep.matched_value,
                rep.match_distance,
                rep.r,
                rep.fitted_subset
            );
            if let Ok(rate) = fit_rate(&traj, rep.matched_value) {
                println!("decay {:?}, rate {:.6e}, fit quality {:.6}", rate.kind, rate.rate, rate.fit_quality);
            }
            Some(rep)
        }
        Err(Error::NotCritical { grad_norm, .. }) => {
            println!("terminal not critical (grad_norm {grad_norm:.3e}); not classified");
            None
        }
        Err(e) => return Err(e),
    };
    write_json(
        &serde_json::json!({
            "stop_reason": traj.stop_reason,
            "final_time": traj.final_time(),
            "final_loss": traj.final_loss(),
            "final_grad_norm": traj.final_grad_norm(),
            "invariant_drift": drift,
            "conserved": traj.conserved,
            "classification": classification,
            "terminal": traj.terminal,
        }),
        &report_path,
    )?;
    write_manifest(
        &dir.join("manifest.json"),
        "simulate",
        hash_json(a),
        started,
        vec![csv_path, json_path, report_path],
    )
}

fn cmd_landscape(a: &LandscapeArgs) -> Result<()> {
    let started = now();
    let (_, reduced) = load_reduced(&a.problem)?;
    let table = critical_values(reduced.s_y())?;
    print!("{}", table.to_text());
    let dir = out_dir(&a.out)?;
    let csv_path = dir.join("critical_values.csv");
    let json_path = dir.join("critical_values.json");
    table.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    write_json(&table, &json_path)?;
    write_manifest(&dir.join("manifest.json"), "landscape", hash_json(a), started, vec![csv_path, json_path])
}

fn cmd_hessian(a: &HessianArgs) -> Result<()> {
    let started = now();
    let (_, reduced) = load_reduced(&a.problem)?;
    let s_y = reduced.s_y();
    let dims = reduced.dims().clone();
    let dir = out_dir(&a.out)?;
    let mut outputs = Vec::new();
    let (w, saddle) = match (&a.weights, a.saddle) {
        (Some(p), _) => (load_weights(p, &dims)?, None),
        (None, Some(fitted)) => {
            let s = construct_saddle(s_y, &dims, fitted, a.seed, SaddleOptions::default())?;
            let path = dir.join("saddle.json");
            write_json(&s.weights, &path)?;
            outputs.push(path);
            (s.weights.clone(), Some(s))
        }
        (None, None) => return Err(Error::ConfigInvalid("give --saddle or --weights".into())),
    };
    let spec = spectrum(&w, s_y, a.zero_tol)?;
    println!(
        "eigenvalues: {} negative, {} zero, {} positive (spectral radius {:.6e})",
        spec.negative, spec.zero, spec.positive, spec.spectral_radius
    );
    let neg = match negative_direction(&w, s_y) {
        Ok(Some(d)) => {
            println!("negative direction: form value {:.6e} along output {}", d.value, d.coordinate + 1);
            Some(d.value)
        }
        Ok(None) => {
            println!("negative direction: none (global minimum or r_Z = r)");
            None
        }
        Err(Error::NotCritical { grad_norm, .. }) => {
            println!("negative direction: point not critical (grad_norm {grad_norm:.3e})");
            None
        }
        Err(e) => return Err(e),
    };
    let tangent = match &saddle {
        Some(s) if s.blocks.is_some() => {
            let rep = tangent_kernel_check(s, &w, s_y, a.zero_tol)?;
            println!(
                "kernel dim {} vs d(r) {} (r = {}; alternative count {}{}); tangent check {}",
                rep.kernel_dimension,
                rep.expected_dimension,
                rep.r,
                rep.naive_dimension,
                if rep.naive_dimension != rep.expected_dimension { ", differs" } else { "" },
                if rep.passes { "passed" } else { "FAILED" }
            );
            Some(rep)
        }
        _ => None,
    };
    let csv_path = dir.join("spectrum.csv");
    let json_path = dir.join("hessian.json");
    spec.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    write_json(
        &serde_json::json!({
            "spectrum": spec,
            "negative_direction_value": neg,
            "tangent_kernel": tangent,
            "fitted": a.saddle,
        }),
        &json_path,
    )?;
    outputs.extend([csv_path, json_path]);
    write_manifest(&dir.join("manifest.json"), "hessian", hash_json(a), started, outputs)
}

fn campaign_config(c: &CampaignArgs, dir: &Path) -> Result<ExperimentConfig> {
    if let Some(p) = &c.config {
        let mut cfg: ExperimentConfig = read_json(p)?;
        if cfg.output.is_none() {
            cfg.output = Some(dir.to_path_buf());
        }
        return Ok(cfg);
    }
    let path = c
        .problem
        .clone()
        .ok_or_else(|| Error::ConfigInvalid("give a problem file or --config".into()))?;
    let file: ProblemFile = read_json(&path)?;
    let mut cfg = ExperimentConfig::new(ProblemSource::File { path }, file.hidden_dims, c.trials, c.seed);
    cfg.init = InitDistribution::Gaussian { scale: c.init_scale };
    cfg.integrator = c.flow.config();
    cfg.output = Some(dir.to_path_buf());
    Ok(cfg)
}

fn campaign_outputs(dir: &Path) -> Vec<PathBuf> {
    ["config.json", "trials.jsonl", "campaign.json", "trials.csv"]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

fn cmd_ovf(a: &OvfArgs) -> Result<()> {
    let started = now();
    let dir = out_dir(&a.campaign.out)?;
    let cfg = campaign_config(&a.campaign, &dir)?;
    let res = run_ovf(&cfg)?;
    let strata: Vec<String> = res.strata.iter().map(|(r, n)| format!("r={r}: {n}")).collect();
    println!("strata {} | unclassified {}", strata.join(", "), res.unclassified);
    println!(
        "global minimum fraction {}/{} = {:.6}",
        res.global_count, res.trials, res.global_fraction
    );
    write_manifest(&dir.join("manifest.json"), "ovf", res.config_hash, started, campaign_outputs(&dir))
}

fn cmd_escape(a: &EscapeArgs) -> Result<()> {
    let started = now();
    let dir = out_dir(&a.campaign.out)?;
    let cfg = campaign_config(&a.campaign, &dir)?;
    let mode = if a.tangent { Perturbation::Tangent } else { Perturbation::Ambient };
    let res = run_saddle_escape(&cfg, a.saddle, a.epsilon, mode)?;
    println!(
        "saddle {} at loss {:.12e}; escape threshold {:.12e}",
        res.fitted, res.saddle_loss, res.threshold
    );
    println!(
        "escape fraction {}/{} = {:.6}",
        res.escaped_count, res.trials, res.escape_fraction
    );
    write_manifest(&dir.join("manifest.json"), "escape", res.config_hash, started, campaign_outputs(&dir))
}

fn cmd_defaults() {
    for (name, value) in defaults::table() {
        println!("{name:<24} {value}");
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::ConfigInvalid("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    }
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Landscape(a) => cmd_landscape(a),
        Command::Hessian(a) => cmd_hessian(a),
        Command::Ovf(a) => cmd_ovf(a),
        Command::Escape(a) => cmd_escape(a),
        Command::Defaults => {
            cmd_defaults();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
