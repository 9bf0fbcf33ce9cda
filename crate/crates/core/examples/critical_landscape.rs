//! The finite set of critical values and the classification of a point
//! against it.
//!
//! cargo run --example critical_landscape

use lingdd::landscape::{classify_limit, construct_saddle, critical_values, SaddleOptions};
use lingdd::{LayerDims, Result};
use nalgebra::DVector;

fn main() -> Result<()> {
    let s_y = DVector::from_vec(vec![3.0, 2.0, 1.0]);
    let table = critical_values(&s_y)?;
    print!("{}", table.to_text());

    let dims = LayerDims::from_output_first(&[3, 4, 4, 5])?;
    for text in ["{}", "{2}", "{1,3}", "{2,3}"] {
        let saddle = construct_saddle(&s_y, &dims, text.parse()?, 1, SaddleOptions::default())?;
        let rep = classify_limit(&saddle.weights, &s_y, &table)?;
        println!(
            "constructed {text:<8} -> level {} value {:.4}, r = {}, r_Z = {}, consistent {}",
            rep.matched_index + 1,
            rep.matched_value,
            rep.r,
            rep.r_z,
            rep.consistent
        );
    }
    Ok(())
}
