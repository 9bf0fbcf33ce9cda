//! Integrate the gradient flow from a random start, watch the conserved
//! quantities and export the trajectory as CSV.
//!
//! cargo run --example gradient_flow [out.csv]

use std::fs::File;

use lingdd::experiments::{initial_state, InitDistribution};
use lingdd::flow::{integrate, invariant_drift, IntegratorConfig};
use lingdd::landscape::{classify_limit, critical_values};
use lingdd::reduction::{generate_problem, reduce_problem, ProblemShape};
use lingdd::Result;

fn main() -> Result<()> {
    let raw = generate_problem(ProblemShape { m: 10, d_x: 5, d_y: 3 }, 1.0, 3)?;
    let reduced = reduce_problem(&raw, &[4, 4])?;
    let s_y = reduced.s_y();
    let w0 = initial_state(reduced.dims(), &InitDistribution::default(), 11);

    let traj = integrate(&w0, s_y, &IntegratorConfig::default())?;
    println!(
        "{} after t = {:.3} ({} steps accepted, {} rejected)",
        traj.stop_reason,
        traj.final_time(),
        traj.accepted_steps,
        traj.rejected_steps
    );
    println!("max relative drift of C_j: {:?}", invariant_drift(&traj)?);

    let table = critical_values(s_y)?;
    let report = classify_limit(&traj.terminal, s_y, &table)?;
    println!(
        "terminal loss {:.3e} matches level {} (r = {}, fitted {})",
        report.loss,
        report.matched_index + 1,
        report.r,
        report.fitted_subset
    );

    if let Some(path) = std::env::args().nth(1) {
        traj.write_csv(File::create(&path)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
