//! Sub-pixel convolution: a 1×1 convolution to r² channels followed by a
//! pixel shuffle, trained to reproduce nearest-neighbour ×2 upsampling.

use deeplight_tensor::{Adam, AdamConfig, Graph, ParamStore, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lr = Tensor::from_fn(&[1, 1, 6, 6], |_| rng.gen_range(0.0..1.0));
    let hr = Tensor::from_fn(&[1, 1, 12, 12], |i| lr.data()[(i / 12 / 2) * 6 + (i % 12) / 2]);

    // the shuffle itself is a pure permutation
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_fn(&[1, 4, 2, 2], |i| i as f32));
    let up = g.pixel_shuffle(x, 2)?;
    let down = g.pixel_unshuffle(up, 2)?;
    println!("shuffle then unshuffle is exact: {}", g.value(down).max_abs_diff(g.value(x)) == 0.0);

    let mut store = ParamStore::new();
    store.insert("w", Tensor::from_fn(&[4, 1, 1, 1], |_| rng.gen_range(-0.5..0.5)))?;
    store.insert("b", Tensor::zeros(&[4]))?;
    let mut adam = Adam::new(AdamConfig { lr: 0.05, ..AdamConfig::default() }, &store);
    for step in 0..=200 {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(lr.clone());
        let y = g.constant(hr.clone());
        let feat = g.conv2d(x, p.get("w")?, Some(p.get("b")?), 1, 0)?;
        let pred = g.pixel_shuffle(feat, 2)?;
        let d = g.sub(pred, y)?;
        let a = g.abs(d);
        let loss = g.mean(a);
        if step % 50 == 0 {
            println!("step {step:>3}  L1 {:.4}", g.value(loss).item().unwrap_or(f32::NAN));
        }
        g.backward(loss)?;
        store.collect_grads(&mut g, &p)?;
        adam.step(&mut store)?;
    }
    println!("learned weights {:?} (nearest neighbour is all ones)", store.get("w")?.data());
    Ok(())
}
