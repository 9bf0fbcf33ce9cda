//! At a global minimum the end-to-end product equals the least-squares
//! solution of the raw problem.
//!
//! cargo run --release --example least_squares

use lingdd::experiments::{compare_least_squares, initial_state, InitDistribution};
use lingdd::flow::{integrate, IntegratorConfig};
use lingdd::reduction::{end_to_end, generate_problem, least_squares_solution, reduce_problem, ProblemShape};
use lingdd::Result;

fn main() -> Result<()> {
    let raw = generate_problem(ProblemShape { m: 12, d_x: 5, d_y: 3 }, 1.0, 2)?;
    let w_ls = least_squares_solution(&raw)?;
    println!("W_LS =\n{w_ls:.4}");
    for hidden in [vec![4], vec![4, 4], vec![3, 4, 5]] {
        let reduced = reduce_problem(&raw, &hidden)?;
        let w0 = initial_state(reduced.dims(), &InitDistribution::default(), 9);
        let traj = integrate(&w0, reduced.s_y(), &IntegratorConfig::default())?;
        let err = compare_least_squares(&raw, &traj.terminal, &reduced)?;
        let total = end_to_end(&reduced.to_raw(&traj.terminal)?);
        println!("hidden {hidden:?}: relative error {err:.3e}, |W_total| = {:.6}", total.norm());
    }
    Ok(())
}
