//! Property-based invariants across modules.

use lingdd::experiments::trial_seed;
use lingdd::hessian::{first_variation, hessian_matrix, quadratic_form};
use lingdd::landscape::{critical_values, Subset};
use lingdd::linalg::random_orthogonal;
use lingdd::network::{apply_group_action, gradient, loss};
use lingdd::reduction::{generate_problem, reduce_problem, ProblemShape};
use lingdd::{LayerDims, WeightTuple};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_dims() -> impl Strategy<Value = LayerDims> {
    (1usize..=3, 0usize..=2, prop::collection::vec(0usize..=2, 1..=3)).prop_map(|(d_y, extra_x, extra_h)| {
        let hidden: Vec<usize> = extra_h.iter().map(|e| d_y + e).collect();
        LayerDims::new(d_y + extra_x, &hidden, d_y).unwrap()
    })
}

fn arb_case() -> impl Strategy<Value = (LayerDims, u64)> {
    (arb_dims(), any::<u64>())
}

fn setup(dims: &LayerDims, seed: u64) -> (WeightTuple, WeightTuple, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = vec![0.8; dims.depth() + 1];
    let w = WeightTuple::gaussian(dims, &scales, &mut rng);
    let xi = WeightTuple::gaussian(dims, &scales, &mut rng);
    let s_y = DVector::from_fn(dims.d_y(), |i, _| 3.0 - 0.7 * i as f64);
    (w, xi, s_y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_nonnegative_and_gradient_pairs_with_first_variation((dims, seed) in arb_case()) {
        let (w, xi, s_y) = setup(&dims, seed);
        prop_assert!(loss(&w, &s_y).unwrap() >= 0.0);
        let g = gradient(&w, &s_y).unwrap();
        let fv = first_variation(&w, &xi, &s_y).unwrap();
        prop_assert!((g.dot(&xi).unwrap() - fv).abs() <= 1e-9 * (1.0 + fv.abs()));
    }

    #[test]
    fn loss_is_invariant_under_group_action((dims, seed) in arb_case()) {
        let (w, _, s_y) = setup(&dims, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let us: Vec<_> = dims.hidden().iter().map(|&d| random_orthogonal(d, &mut rng)).collect();
        let mut mu = vec![1.0; dims.depth() + 1];
        mu[0] = 2.0;
        mu[dims.depth()] = 0.5;
        let moved = apply_group_action(&w, &us, &mu).unwrap();
        let (a, b) = (loss(&w, &s_y).unwrap(), loss(&moved, &s_y).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn hessian_matrix_reproduces_form((dims, seed) in arb_case()) {
        let (w, xi, s_y) = setup(&dims, seed);
        let a = hessian_matrix(&w, &s_y).unwrap();
        prop_assert_eq!(&a, &a.transpose());
        let f = xi.flatten();
        let q = quadratic_form(&w, &xi, &s_y).unwrap();
        prop_assert!((0.5 * f.dot(&(&a * &f)) - q).abs() <= 1e-8 * (1.0 + q.abs()));
    }

    #[test]
    fn flatten_round_trip((dims, seed) in arb_case()) {
        let (w, _, _) = setup(&dims, seed);
        let back = WeightTuple::from_flat(&dims, w.flatten().as_slice()).unwrap();
        prop_assert_eq!(back, w);
    }

    #[test]
    fn weight_json_round_trip((dims, seed) in arb_case()) {
        let (w, _, _) = setup(&dims, seed);
        let text = serde_json::to_string(&w).unwrap();
        let back: WeightTuple = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, w);
    }

    #[test]
    fn table_is_sorted_and_complete(values in prop::collection::btree_set(1u32..1000, 1..=5)) {
        let mut v: Vec<f64> = values.iter().map(|&x| x as f64 / 100.0).collect();
        v.reverse();
        let s_y = DVector::from_vec(v);
        match critical_values(&s_y) {
            Ok(t) => {
                prop_assert_eq!(t.len(), 1 << s_y.len());
                prop_assert!(t.entries.windows(2).all(|p| p[0].value > p[1].value));
                prop_assert!((t.head() - 0.5 * s_y.norm_squared()).abs() <= 1e-12 * t.head());
                prop_assert_eq!(t.value(t.global_index()), 0.0);
            }
            // sums of squares may collide
            Err(e) => prop_assert!(matches!(e, lingdd::Error::DegenerateSpectrum(_))),
        }
    }

    #[test]
    fn subset_text_round_trip(mask in 0u64..(1 << 12)) {
        let s = Subset::from_mask(mask);
        let back: Subset = s.to_string().parse().unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn reduction_round_trip(seed in any::<u64>(), extra in 0usize..3) {
        let shape = ProblemShape { m: 6 + extra, d_x: 4, d_y: 2 };
        if let Ok(raw) = generate_problem(shape, 1.0, seed) {
            let red = reduce_problem(&raw, &[3]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = WeightTuple::gaussian(red.dims(), &[0.5, 0.5], &mut rng);
            let w_raw = red.to_raw(&w).unwrap();
            prop_assert!(red.to_reduced(&w_raw).unwrap().add_scaled(&w, -1.0).unwrap().norm() < 1e-9);
            let lr = raw.loss(&w_raw).unwrap();
            let lb = loss(&w, red.s_y()).unwrap() + red.offset();
            prop_assert!((lr - lb).abs() <= 1e-9 * (1.0 + lr));
        }
    }

    #[test]
    fn trial_seeds_depend_only_on_master_and_index(master in any::<u64>(), k in 0usize..10_000) {
        prop_assert_eq!(trial_seed(master, k), trial_seed(master, k));
        prop_assert_ne!(trial_seed(master, k), trial_seed(master, k + 1));
    }
}
