//! Builds the network, counts parameters per stage and checks the output
//! pyramid and the identity warp at initialization.

use deeplight::model::{build, Session};
use deeplight::{Ablation, ModelConfig};
use deeplight_tensor::Tensor;

fn main() -> deeplight::Result<()> {
    let cfg = ModelConfig::default();
    let state = build(&cfg, 0)?;
    println!("{} parameters in {} tensors", state.num_parameters(), state.params.len());
    for stage in ["caa", "amff", "aer"] {
        let n: usize = state
            .params
            .iter()
            .filter(|(name, _)| name.starts_with(stage))
            .map(|(_, p)| p.value.numel())
            .sum();
        println!("  {stage:<5} {n:>8}");
    }

    let (h, w) = cfg.lr_size;
    let lr = Tensor::from_fn(&[1, 1, h, w], |i| ((i * 37) % 101) as f32 / 100.0);
    let dmo = Tensor::zeros(&[1, cfg.dmo_bands, h * 8, w * 8]);
    let dem = Tensor::zeros(&[1, 1, h * 8, w * 8]);
    let mut s = Session::frozen(&state);
    let (a, b, c) = s.inputs(&lr, &dmo, &dem);
    let out = s.forward(a, b, c)?;
    for (j, v) in out.sr_pyramid.iter().enumerate() {
        println!("scale {j}: {:?}", s.value(*v).shape());
    }
    if let Some(omega) = out.features.warp_omega {
        println!("initial warp {:?}", s.value(omega).data());
    }

    for a in Ablation::ALL {
        let n = build(&ModelConfig { ablation: a, ..cfg.clone() }, 0)?.num_parameters();
        println!("{:<12} {n:>8}", a.label());
    }
    Ok(())
}
