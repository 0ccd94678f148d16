//! Evaluates the training objective on one synthetic scene for the full
//! model and for the two ablations that change its shape.

use deeplight::dataset::{generate_scene, SceneSpec};
use deeplight::model::{build, Session};
use deeplight::objective::{composite, LossConfig};
use deeplight::{Ablation, ModelConfig};

fn main() -> deeplight::Result<()> {
    let scene = generate_scene(&SceneSpec { seed: 1, hr_size: 128, warp_max_px: 4.0, ..SceneSpec::default() });
    for a in [Ablation::None, Ablation::NoIsp, Ablation::NoAer] {
        let cfg = ModelConfig { lr_size: (16, 16), base_channels: 8, ablation: a, ..ModelConfig::default() };
        let state = build(&cfg, 0)?;
        let loss_cfg = LossConfig::default().for_ablation(a);
        let mut s = Session::trainable(&state);
        let (l, d, e) = s.inputs(&scene.lr_ntl.to_tensor(), &scene.dmo.to_tensor(), &scene.dem.to_tensor());
        let out = s.forward(l, d, e)?;
        let t = composite(&mut s.graph, &out, &scene.hr_ntl.to_tensor(), &scene.isp.to_tensor(), &loss_cfg)?;
        let v = |x| s.value(x).item().unwrap_or(f32::NAN);
        let scales: Vec<String> = t.scale_l1.iter().map(|&x| format!("{:.4}", v(x))).collect();
        let bce = t.bce.map_or("-".to_string(), |b| format!("{:.4}", v(b)));
        println!(
            "{:<10} alpha {:.1}  total {:.4}  L1 per scale [{}]  BCE {bce}",
            a.label(),
            loss_cfg.alpha,
            v(t.total),
            scales.join(", ")
        );
    }
    Ok(())
}
