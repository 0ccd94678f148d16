use deeplight_tensor::{ops, Tensor};
use proptest::prelude::*;

fn tensor_strategy(max_c: usize) -> impl Strategy<Value = (Tensor, usize)> {
    (1usize..3, 1..=max_c, 1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(n, c, h, w, r)| {
        let shape = vec![n, c * r * r, h, w];
        let numel: usize = shape.iter().product();
        prop::collection::vec(-10.0f32..10.0, numel)
            .prop_map(move |data| (Tensor::new(&shape, data).unwrap(), r))
    })
}

proptest! {
    #[test]
    fn shuffle_round_trips((x, r) in tensor_strategy(3)) {
        let y = ops::pixel_shuffle(&x, r).unwrap();
        prop_assert_eq!(ops::pixel_unshuffle(&y, r).unwrap(), x);
    }

    #[test]
    fn shuffle_preserves_value_multiset((x, r) in tensor_strategy(2)) {
        let y = ops::pixel_shuffle(&x, r).unwrap();
        let mut a: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn identity_warp_reproduces_input(
        n in 1usize..3, c in 1usize..3, h in 1usize..12, w in 1usize..12, seed in 0u32..1000
    ) {
        let x = Tensor::from_fn(&[n, c, h, w], |i| ((i as u32 * 2654435761u32 ^ seed) % 1000) as f32 / 1000.0);
        let theta = Tensor::from_fn(&[n, 2, 3], |i| [1.0, 0.0, 0.0, 0.0, 1.0, 0.0][i % 6]);
        let grid = ops::affine_grid(&theta, h, w).unwrap();
        let y = ops::grid_sample(&x, &grid).unwrap();
        prop_assert!(y.max_abs_diff(&x) < 1e-6);
    }

    #[test]
    fn resize_preserves_constants(h in 1usize..9, w in 1usize..9, oh in 1usize..20, ow in 1usize..20, v in -5.0f32..5.0) {
        let x = Tensor::full(&[1, 2, h, w], v);
        let y = ops::resize_bilinear(&x, oh, ow).unwrap();
        prop_assert!(y.data().iter().all(|&u| (u - v).abs() <= 1e-5 * v.abs().max(1.0)));
    }
}
