//! Finite-difference checks of the spatial operators, printed as a table.

use deeplight_tensor::gradcheck::check;
use deeplight_tensor::{Graph, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Case = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>);

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut rand = |shape: &[usize], s: f32| Tensor::from_fn(shape, |_| rng.gen_range(-s..s));

    let cases: Vec<Case> = vec![
        (
            "conv2d",
            vec![rand(&[1, 2, 6, 6], 1.0), rand(&[3, 2, 3, 3], 0.5), rand(&[3], 0.5)],
            Box::new(|g, v| g.conv2d(v[0], v[1], Some(v[2]), 1, 1)),
        ),
        (
            "deformable_conv2d",
            vec![rand(&[1, 2, 6, 6], 1.0), rand(&[1, 18, 6, 6], 0.7), rand(&[3, 2, 3, 3], 0.5), rand(&[3], 0.5)],
            Box::new(|g, v| g.deformable_conv2d(v[0], v[1], v[2], Some(v[3]))),
        ),
        (
            "affine_grid + grid_sample",
            vec![rand(&[1, 1, 7, 7], 1.0), rand(&[1, 2, 3], 0.3)],
            Box::new(|g, v| {
                let grid = g.affine_grid(v[1], 5, 5)?;
                g.grid_sample(v[0], grid)
            }),
        ),
        (
            "pixel_shuffle",
            vec![rand(&[1, 8, 3, 3], 1.0)],
            Box::new(|g, v| g.pixel_shuffle(v[0], 2)),
        ),
    ];

    println!("{:<28} {:>12} {:>12}", "operator", "worst rel", "max abs");
    for (name, inputs, f) in cases {
        let r = check(&inputs, 1e-3, f)?;
        let abs = r.max_abs_error.iter().copied().fold(0.0, f64::max);
        println!("{name:<28} {:>12.2e} {:>12.2e}", r.worst(), abs);
    }
    Ok(())
}
