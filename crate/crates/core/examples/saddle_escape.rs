//! Perturb a saddle and check that the flow leaves it, in the full space
//! and along the stratum.
//!
//! cargo run --release --example saddle_escape

use lingdd::experiments::{run_saddle_escape, ExperimentConfig, Perturbation, ProblemSource};
use lingdd::reduction::ProblemShape;
use lingdd::Result;

fn main() -> Result<()> {
    let problem = ProblemSource::Generated {
        shape: ProblemShape { m: 6, d_x: 4, d_y: 2 },
        scale: 1.0,
        seed: 7,
    };
    let cfg = ExperimentConfig::new(problem, vec![3], 20, 3);
    for fitted in ["{}", "{1}", "{2}"] {
        let res = run_saddle_escape(&cfg, fitted.parse()?, 1e-3, Perturbation::Ambient)?;
        println!(
            "{fitted:<4} ambient: {}/{} escaped below {:.4}",
            res.escaped_count, res.trials, res.threshold
        );
    }

    // along the stratum the loss stays at the saddle value over a short horizon
    let mut short = ExperimentConfig::new(cfg.problem.clone(), vec![3], 5, 3);
    short.integrator = short.integrator.with_t_max(5.0);
    let res = run_saddle_escape(&short, "{1}".parse()?, 1e-3, Perturbation::Tangent)?;
    for r in &res.records {
        println!(
            "tangent trial {}: loss {:.8} vs saddle {:.8}",
            r.trial,
            r.terminal_loss.unwrap_or(f64::NAN),
            res.saddle_loss
        );
    }
    Ok(())
}
