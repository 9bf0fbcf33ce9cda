//! Generate a random problem, reduce it to canonical coordinates and map a
//! weight tuple back and forth.
//!
//! cargo run --example reduction

use lingdd::network::loss;
use lingdd::reduction::{check_assumptions, generate_problem, reduce_problem, ProblemShape};
use lingdd::{LayerDims, Result, WeightTuple};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let shape = ProblemShape { m: 8, d_x: 4, d_y: 2 };
    let raw = generate_problem(shape, 1.0, 7)?;
    let reduced = reduce_problem(&raw, &[3])?;
    println!("S_Y = {:?}", reduced.s_y().as_slice());
    println!("offset = {:.6}", reduced.offset());
    println!("{:#?}", check_assumptions(&raw, &reduced));

    // the raw loss equals the reduced loss plus the constant offset
    let dims = LayerDims::new(4, &[3], 2)?;
    let w = WeightTuple::gaussian(&dims, &[0.5, 0.5], &mut ChaCha8Rng::seed_from_u64(1));
    let w_bar = reduced.to_reduced(&w)?;
    let l_raw = raw.loss(&w)?;
    let l_red = loss(&w_bar, reduced.s_y())? + reduced.offset();
    println!("raw loss {l_raw:.12}  reduced + offset {l_red:.12}");

    let back = reduced.to_raw(&w_bar)?;
    println!("round-trip error {:.3e}", back.add_scaled(&w, -1.0)?.norm());
    Ok(())
}
