//! Recovers a global translation with a spatial transformer: an affine
//! grid, bilinear sampling and Adam on the six transform parameters.

use deeplight_tensor::{Adam, AdamConfig, Graph, ParamStore, Result, Tensor};

fn blob(cy: f32, cx: f32) -> Tensor {
    Tensor::from_fn(&[1, 1, 24, 24], |i| {
        let (y, x) = ((i / 24) as f32, (i % 24) as f32);
        (-((y - cy).powi(2) + (x - cx).powi(2)) / 18.0).exp()
    })
}

fn main() -> Result<()> {
    let source = blob(12.0, 12.0);
    // the target is the source moved 2 px right and 1 px down
    let target = blob(13.0, 14.0);

    let mut store = ParamStore::new();
    store.insert("theta", Tensor::new(&[1, 2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0])?)?;
    let mut adam = Adam::new(AdamConfig { lr: 0.01, ..AdamConfig::default() }, &store);

    for step in 0..=300 {
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let theta = bound.get("theta")?;
        let x = g.constant(source.clone());
        let t = g.constant(target.clone());
        let grid = g.affine_grid(theta, 24, 24)?;
        let warped = g.grid_sample(x, grid)?;
        let diff = g.sub(warped, t)?;
        let sq = g.mul(diff, diff)?;
        let loss = g.mean(sq);
        if step % 50 == 0 {
            println!("step {step:>3}  loss {:.3e}", g.value(loss).item().unwrap_or(f32::NAN));
        }
        g.backward(loss)?;
        store.collect_grads(&mut g, &bound)?;
        adam.step(&mut store)?;
    }

    // normalized coordinates span 2 units over 24 px
    let th = store.get("theta")?.data().to_vec();
    println!("translation: x {:+.2} px, y {:+.2} px (expected -2, -1: the grid samples the source)", th[2] * 12.0, th[5] * 12.0);
    Ok(())
}
