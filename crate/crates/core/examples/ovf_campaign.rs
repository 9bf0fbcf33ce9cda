//! A seeded convergence census: where do random initializations end up?
//!
//! cargo run --release --example ovf_campaign [trials] [output-dir]

use lingdd::experiments::{run_ovf, ExperimentConfig, ProblemSource};
use lingdd::reduction::ProblemShape;
use lingdd::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().and_then(|t| t.parse().ok()).unwrap_or(50);
    let problem = ProblemSource::Generated {
        shape: ProblemShape { m: 8, d_x: 4, d_y: 2 },
        scale: 1.0,
        seed: 1,
    };
    for hidden in [vec![3], vec![3, 3]] {
        let mut cfg = ExperimentConfig::new(problem.clone(), hidden.clone(), trials, 42);
        cfg.output = args.next().map(Into::into);
        let res = run_ovf(&cfg)?;
        println!(
            "hidden {hidden:?}: global {}/{}  strata {:?}  per level {:?}",
            res.global_count, res.trials, res.strata, res.value_counts
        );
    }
    Ok(())
}
