//! Compare the fitted terminal decay rate with the rate predicted from the
//! initial invariants on a pyramidal architecture.
//!
//! cargo run --release --example exponential_rate

use lingdd::experiments::pyramidal_exponential_init;
use lingdd::flow::{exponential_bound_violation, fit_rate, integrate, IntegratorConfig};
use lingdd::reduction::{generate_problem, reduce_problem, ProblemShape};
use lingdd::Result;

fn main() -> Result<()> {
    let raw = generate_problem(ProblemShape { m: 8, d_x: 5, d_y: 2 }, 1.0, 5)?;
    let reduced = reduce_problem(&raw, &[4, 3])?;
    let s_y = reduced.s_y();
    for seed in 0..5 {
        let w0 = pyramidal_exponential_init(reduced.dims(), 0.5, 2.0, seed)?;
        let traj = integrate(&w0, s_y, &IntegratorConfig::default().with_stride(1))?;
        let est = fit_rate(&traj, 0.0)?;
        let pred = est.prediction.as_ref().expect("preconditions hold by construction");
        println!(
            "seed {seed}: {:?} rate {:.4} (R² {:.6})  predicted >= {:.4}  bound violation {:.2e}",
            est.kind,
            est.rate,
            est.fit_quality,
            pred.alpha,
            exponential_bound_violation(&traj, pred.alpha, 0.05)
        );
    }
    Ok(())
}
