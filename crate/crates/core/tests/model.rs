use std::path::Path;

use deeplight::model::checkpoint::Checkpoint;
use deeplight::model::{build, Session};
use deeplight::{Ablation, Error, ModelConfig};
use deeplight_tensor::{ops, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(ablation: Ablation) -> ModelConfig {
    ModelConfig {
        lr_size: (8, 8),
        base_channels: 8,
        num_res_blocks: 2,
        ablation,
        ..ModelConfig::default()
    }
}

fn inputs(cfg: &ModelConfig, n: usize, seed: u64) -> (Tensor, Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = cfg.lr_size;
    let (hh, ww) = cfg.hr_size();
    let mut t = |c, h, w| Tensor::from_fn(&[n, c, h, w], |_| rng.gen_range(0.0f32..1.0));
    (t(1, h, w), t(cfg.dmo_bands, hh, ww), t(1, hh, ww))
}

fn conv(o: usize, i: usize, k: usize) -> usize {
    o * i * k * k + o
}

#[test]
fn default_parameter_count_matches_layer_tally() {
    let c = 32;
    let aux_down = |bands| conv(c, bands, 3) + 2 * conv(c, c, 3);
    let calib = 2 * conv(c, c, 3);
    let caa = aux_down(7) + calib + aux_down(1) + calib
        + conv(c, 1, 3) + conv(c, c, 3) + conv(6, c, 1) // f_loc
        + conv(18, 1, 3) + conv(c, 1, 3) + conv(c, c, 3); // offsets, deformable, reconstruction
    let branch = 3 * (conv(c, 2 * c, 3) + conv(c, c, 3)) + conv(c, 2 * c, 3);
    let cmfm = 2 * conv(c, c, 3) + 2 * conv(c, c, 1) + 2 * branch + conv(c, 2 * c, 3) + conv(c, c, 3);
    let aer = 3 * (conv(4 * c, c, 1) + conv(1, c, 1)) + conv(1, 1, 3);
    let expected = caa + 2 * cmfm + aer;
    let state = build(&ModelConfig::default(), 0).unwrap();
    assert_eq!(state.num_parameters(), expected);
    assert_eq!(expected, 611_687);
}

#[test]
fn initial_warp_is_identity_and_ntl_path_is_plain_convolution() {
    let cfg = small(Ablation::None);
    let state = build(&cfg, 3).unwrap();
    let (n_l, dmo, dem) = inputs(&cfg, 2, 1);
    let mut s = Session::frozen(&state);
    let (a, b, c) = s.inputs(&n_l, &dmo, &dem);
    let feats = s.caa_forward(a, b, c).unwrap();

    let omega = s.value(feats.warp_omega.unwrap());
    let identity = Tensor::from_fn(&[2, 2, 3], |i| [1.0, 0.0, 0.0, 0.0, 1.0, 0.0][i % 6]);
    assert_eq!(omega.max_abs_diff(&identity), 0.0);

    let p = |name: &str| state.params.get(name).unwrap();
    let act = |t: Tensor| t.map(|v| if v > 0.0 { v } else { 0.1 * v });
    let x = act(ops::conv2d(&n_l, p("caa.deform.weight"), Some(p("caa.deform.bias")), 1, 1).unwrap());
    let plain = act(ops::conv2d(&x, p("caa.recon.weight"), Some(p("caa.recon.bias")), 1, 1).unwrap());
    let f_ntl = s.value(feats.f_ntl.unwrap());
    assert!(f_ntl.max_abs_diff(&plain) < 1e-5, "{}", f_ntl.max_abs_diff(&plain));
    for f in [feats.f_ntl, feats.f_dmo, feats.f_dem] {
        assert_eq!(s.value(f.unwrap()).shape(), &[2, 8, 8, 8]);
    }
}

#[test]
fn pyramid_shapes_for_x4_and_x8() {
    for (r, m) in [(4usize, 2usize), (8, 3)] {
        let cfg = ModelConfig {
            scale_r: r,
            num_scales_m: m,
            ..small(Ablation::None)
        };
        let state = build(&cfg, 0).unwrap();
        let (a, b, c) = inputs(&cfg, 1, 2);
        let out = state.predict(&a, &b, &c).unwrap();
        let shapes: Vec<_> = out.sr_pyramid.iter().map(|t| t.shape().to_vec()).collect();
        let want: Vec<_> = (1..=m).map(|j| vec![1, 1, 8 << j, 8 << j]).collect();
        assert_eq!(shapes, want, "r = {r}");
        let isp = out.isp_logits.unwrap();
        assert_eq!(isp.shape(), &[1, 1, 8 * r, 8 * r]);
        assert!(isp.data().iter().all(|&z| {
            let p = deeplight_tensor::sigmoid(z);
            p > 0.0 && p < 1.0
        }));
    }
}

#[test]
fn default_config_pyramid_at_32x32() {
    let cfg = ModelConfig {
        base_channels: 4,
        num_res_blocks: 1,
        ..ModelConfig::default()
    };
    let state = build(&cfg, 0).unwrap();
    let (a, b, c) = inputs(&cfg, 1, 3);
    let out = state.predict(&a, &b, &c).unwrap();
    let sizes: Vec<_> = out.sr_pyramid.iter().map(|t| t.shape()[2]).collect();
    assert_eq!(sizes, [64, 128, 256]);
}

#[test]
fn build_and_forward_are_deterministic() {
    let cfg = small(Ablation::None);
    assert_eq!(build(&cfg, 9).unwrap(), build(&cfg, 9).unwrap());
    assert_ne!(build(&cfg, 9).unwrap(), build(&cfg, 10).unwrap());
    let state = build(&cfg, 9).unwrap();
    let (a, b, c) = inputs(&cfg, 2, 4);
    assert_eq!(state.predict(&a, &b, &c).unwrap(), state.predict(&a, &b, &c).unwrap());
}

#[test]
fn every_ablation_runs_with_expected_outputs() {
    for ab in Ablation::ALL {
        let cfg = small(ab);
        let state = build(&cfg, 1).unwrap();
        let (a, b, c) = inputs(&cfg, 1, 5);
        let out = state.predict(&a, &b, &c).unwrap();
        let expect_scales = if ab == Ablation::NoAer { 1 } else { 3 };
        assert_eq!(out.sr_pyramid.len(), expect_scales, "{ab}");
        assert_eq!(out.finest().shape(), &[1, 1, 64, 64], "{ab}");
        assert_eq!(out.isp_logits.is_some(), ab.uses_isp(), "{ab}");
        assert!(out.finest().all_finite(), "{ab}");
    }
}

#[test]
fn zero_inputs_give_finite_outputs() {
    let cfg = small(Ablation::None);
    let state = build(&cfg, 2).unwrap();
    let (a, b, c) = inputs(&cfg, 1, 0);
    let z = |t: &Tensor| Tensor::zeros(t.shape());
    let out = state.predict(&z(&a), &z(&b), &z(&c)).unwrap();
    assert!(out.sr_pyramid.iter().all(Tensor::all_finite));
    assert!(out.isp_logits.unwrap().all_finite());
}

#[test]
fn no_dmo_ignores_dmo_exactly() {
    let cfg = small(Ablation::NoDmo);
    let state = build(&cfg, 4).unwrap();
    let (a, b, c) = inputs(&cfg, 1, 6);
    let base = state.predict(&a, &b, &c).unwrap();
    let perturbed = b.map(|v| 1.0 - v * 0.5);
    assert_eq!(base, state.predict(&a, &perturbed, &c).unwrap());
}

#[test]
fn every_parameter_receives_a_finite_gradient() {
    for ab in [Ablation::None, Ablation::NoAmff, Ablation::NoCaa, Ablation::NoAer, Ablation::NoLrNtl] {
        let cfg = small(ab);
        let mut state = build(&cfg, 5).unwrap();
        let (a, b, c) = inputs(&cfg, 2, 7);
        let mut s = Session::trainable(&state);
        let (va, vb, vc) = s.inputs(&a, &b, &c);
        let out = s.forward(va, vb, vc).unwrap();
        let mut terms: Vec<_> = out.sr_pyramid.iter().map(|&p| s.graph.mean(p)).collect();
        terms.extend(out.isp_logits.map(|l| s.graph.mean(l)));
        let mut loss = terms[0];
        for &t in &terms[1..] {
            loss = s.graph.add(loss, t).unwrap();
        }
        s.graph.backward(loss).unwrap();
        state.params.collect_grads(&mut s.graph, &s.params).unwrap();
        for (name, p) in state.params.iter() {
            assert!(p.grad.as_ref().unwrap().all_finite(), "{ab}: {name}");
        }
    }
}

#[test]
fn fused_feature_depends_on_all_three_modalities() {
    let cfg = small(Ablation::None);
    let state = build(&cfg, 6).unwrap();
    let (a, b, c) = inputs(&cfg, 1, 8);
    let mut s = Session::trainable(&state);
    let va = s.graph.variable(a);
    let vb = s.graph.variable(b);
    let vc = s.graph.variable(c);
    let feats = s.caa_forward(va, vb, vc).unwrap();
    let feats = s.amff_forward(feats).unwrap();
    let m = s.graph.mean(feats.f_main_fused.unwrap());
    s.graph.backward(m).unwrap();
    for (name, v) in [("ntl", va), ("dmo", vb), ("dem", vc)] {
        let g = s.graph.grad(v).unwrap();
        assert!(g.data().iter().any(|&x| x != 0.0), "{name} gradient is zero");
    }
}

#[test]
fn cmfm_zeroed_second_input_has_no_influence() {
    let cfg = small(Ablation::None);
    let mut state = build(&cfg, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut feat = || Tensor::from_fn(&[1, 8, 8, 8], |_| rng.gen_range(-1.0f32..1.0));
    let (fa, fb) = (feat(), feat());

    // with live weights both inputs matter
    let mut s = Session::trainable(&state);
    let (va, vb) = (s.graph.variable(fa.clone()), s.graph.variable(fb.clone()));
    let y = s.cmfm("amff.aux", va, vb).unwrap();
    assert_eq!(s.value(y).shape(), &[1, 8, 8, 8]);
    let m = s.graph.mean(y);
    s.graph.backward(m).unwrap();
    assert!(s.graph.grad(va).unwrap().data().iter().any(|&x| x != 0.0));
    assert!(s.graph.grad(vb).unwrap().data().iter().any(|&x| x != 0.0));

    for w in ["amff.aux.in_b.weight", "amff.aux.proj_b.weight"] {
        let t = state.params.get_mut(w).unwrap();
        *t = Tensor::zeros(t.shape());
    }
    let mut s = Session::trainable(&state);
    let (va, vb) = (s.graph.variable(fa), s.graph.variable(Tensor::zeros(fb.shape())));
    let y = s.cmfm("amff.aux", va, vb).unwrap();
    let m = s.graph.mean(y);
    s.graph.backward(m).unwrap();
    assert!(s.graph.grad(vb).unwrap().data().iter().all(|&x| x == 0.0));
}

#[test]
fn mismatched_auxiliary_size_is_a_dimension_error() {
    let cfg = small(Ablation::None);
    let state = build(&cfg, 0).unwrap();
    let (a, _, c) = inputs(&cfg, 1, 0);
    let wrong = Tensor::zeros(&[1, 7, 32, 32]);
    match state.predict(&a, &wrong, &c) {
        Err(Error::Tensor(e)) => assert!(e.to_string().contains("DMO"), "{e}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_config_is_rejected_by_build() {
    let cfg = ModelConfig {
        base_channels: 2,
        ..ModelConfig::default()
    };
    assert!(matches!(build(&cfg, 0), Err(Error::Config { field, .. }) if field == "base_channels"));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = small(Ablation::NoAmff);
    let state = build(&cfg, 11).unwrap();
    let mut ck = Checkpoint::new(state);
    ck.step = 42;
    ck.meta.set("run", "unit");
    ck.optimizer = Some(deeplight_tensor::Adam::new(Default::default(), &ck.state.params));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.dlck");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_bytes(), ck.to_bytes());
}

#[test]
fn corrupt_checkpoints_report_offsets() {
    let ck = Checkpoint::new(build(&small(Ablation::None), 0).unwrap());
    let bytes = ck.to_bytes();
    let p = Path::new("mem.dlck");

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bad, p), Err(Error::Format { offset: 0, .. })));

    let cut = &bytes[..bytes.len() - 3];
    match Checkpoint::from_bytes(cut, p) {
        Err(Error::Format { offset, msg, .. }) => {
            assert!(offset > 12, "{offset}");
            assert!(msg.contains("truncated"), "{msg}");
        }
        other => panic!("unexpected {other:?}"),
    }

    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(Checkpoint::from_bytes(&extra, p), Err(Error::Format { .. })));
}
