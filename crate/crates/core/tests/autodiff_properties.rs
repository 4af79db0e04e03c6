use proptest::prelude::*;

use shrinknet::autodiff::Tape;
use shrinknet::gradcheck::{check_gradients, random_tensor, GRAD_TOL};
use shrinknet::Tensor;

fn shapes() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    prop::collection::vec(1usize..4, 1..4).prop_flat_map(|full| {
        let n = full.len();
        (Just(full.clone()), 0..=n, prop::collection::vec(any::<bool>(), n)).prop_map(move |(full, keep, ones)| {
            // Trailing suffix of `full`, with some axes collapsed to 1.
            let part = full[n - keep..]
                .iter()
                .zip(&ones[n - keep..])
                .map(|(&d, &one)| if one { 1 } else { d })
                .collect::<Vec<_>>();
            (full, if part.is_empty() { vec![1] } else { part })
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn broadcast_gradients_match_finite_differences((full, part) in shapes(), op in 0usize..4, seed in 0u64..1000) {
        let a = random_tensor(&full, seed, 1.0);
        let b = random_tensor(&part, seed + 1, 1.0).map(|v| if op == 3 { 1.5 + v.abs() } else { v });
        let w = random_tensor(&full, seed + 2, 1.0);
        let report = check_gradients(&[a, b], 1e-4, 1e-6, |tape, v| {
            let y = match op {
                0 => v[0].add(&v[1])?,
                1 => v[0].sub(&v[1])?,
                2 => v[0].mul(&v[1])?,
                _ => v[0].div(&v[1])?,
            };
            Ok(y.mul(&tape.constant(w.clone()))?.sum())
        });
        prop_assert!(report.is_ok(), "{:?}", report.err());
        prop_assert!(report.unwrap().max_rel_err < GRAD_TOL);
    }

    #[test]
    fn broadcast_gradient_sums_over_repeated_axes((full, part) in shapes()) {
        let tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&full));
        let b = tape.var(Tensor::zeros(&part));
        let grads = tape.backward(a.add(&b).unwrap().sum()).unwrap();
        let g = grads.get(b).unwrap();
        let copies = full.iter().product::<usize>() / part.iter().product::<usize>();
        prop_assert_eq!(g.shape(), &part[..]);
        prop_assert!(g.data().iter().all(|&x| x == copies as f64));
    }
}

#[test]
fn incompatible_shapes_name_both_operands() {
    let tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2]));
    let msg = a.add(&b).err().expect("no broadcast from [2] to [2, 3]").to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[2]"), "{msg}");
}
