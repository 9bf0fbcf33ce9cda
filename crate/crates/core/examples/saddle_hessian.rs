//! Second-order analysis at constructed single-hidden-layer saddles:
//! spectrum, a certified descent direction and the kernel/tangent check.
//!
//! cargo run --example saddle_hessian

use lingdd::defaults::ZERO_TOL;
use lingdd::hessian::{negative_direction, spectrum, tangent_kernel_check};
use lingdd::landscape::{construct_saddle, SaddleOptions, Subset};
use lingdd::{LayerDims, Result};
use nalgebra::DVector;

fn main() -> Result<()> {
    let s_y = DVector::from_vec(vec![3.0, 2.0, 1.0]);
    let dims = LayerDims::from_output_first(&[3, 4, 6])?;
    for mask in 0..(1u64 << 3) - 1 {
        let fitted = Subset::from_mask(mask);
        let saddle = construct_saddle(&s_y, &dims, fitted, 2, SaddleOptions::default())?;
        let spec = spectrum(&saddle.weights, &s_y, ZERO_TOL)?;
        let dir = negative_direction(&saddle.weights, &s_y)?.expect("saddle");
        let check = tangent_kernel_check(&saddle, &saddle.weights, &s_y, ZERO_TOL)?;
        println!(
            "{:<7} -/0/+ = {}/{}/{}  descent value {:.3}  kernel {} = d(r) {} (alt. {})  tangent {}",
            fitted.to_string(),
            spec.negative,
            spec.zero,
            spec.positive,
            dir.value,
            check.kernel_dimension,
            check.expected_dimension,
            check.naive_dimension,
            if check.passes { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
