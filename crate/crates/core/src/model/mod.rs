//! The three-stage super-resolution network: calibration-aware alignment
//! (CAA), auxiliary-to-main multi-modality feature fusion (AMFF) and
//! auxiliary-embedded refinement (AER).
//!
//! Forward passes are recorded into a [`Session`], which owns one graph and
//! the parameter handles bound into it. A [`ModelState`] is never borrowed
//! by a session, so it can be updated from the session's gradients once
//! the backward pass has run.

mod aer;
mod amff;
mod caa;
pub mod checkpoint;
mod plan;

use deeplight_tensor::{Bound, Graph, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use plan::{plan, Init, ParamSpec, RESIDUAL_GAIN};

use crate::config::ModelConfig;
use crate::error::{Error, Result};

/// Negative slope of every leaky ReLU in the network.
pub const LEAKY_SLOPE: f32 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl ModelState {
    pub fn num_parameters(&self) -> usize {
        self.params.numel()
    }

    /// Inference on plain tensors; no gradients are tracked.
    pub fn predict(&self, n_l: &Tensor, m_dmo: &Tensor, m_dem: &Tensor) -> Result<ForwardOutputs> {
        let mut s = Session::frozen(self);
        let inputs = s.inputs(n_l, m_dmo, m_dem);
        let out = s.forward(inputs.0, inputs.1, inputs.2)?;
        Ok(s.outputs(&out))
    }
}

/// 64-bit FNV-1a, used to derive stable per-parameter seeds.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn init_tensor(spec: &ParamSpec, seed: u64) -> Tensor {
    match spec.init {
        Init::Zeros => Tensor::zeros(&spec.shape),
        Init::IdentityAffine => Tensor::from_fn(&spec.shape, |i| [1.0, 0.0, 0.0, 0.0, 1.0, 0.0][i % 6]),
        Init::He { gain } => {
            let fan_in: usize = spec.shape[1..].iter().product();
            let std = gain * (2.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in as f32)).sqrt();
            // Each tensor draws from its own stream keyed by name, so
            // variants that share a layer also share its initial weights.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(spec.name.as_bytes()));
            Tensor::from_fn(&spec.shape, |_| {
                let z: f32 = StandardNormal.sample(&mut rng);
                z * std
            })
        }
    }
}

/// Builds and initializes a model; deterministic in `(config, seed)`.
pub fn build(config: &ModelConfig, seed: u64) -> Result<ModelState> {
    config.validate()?;
    let mut params = ParamStore::new();
    for spec in plan(config) {
        let t = init_tensor(&spec, seed);
        params.insert(spec.name, t)?;
    }
    Ok(ModelState {
        config: config.clone(),
        params,
    })
}

/// Per-modality features on the low-resolution grid. Features an ablation
/// removes are `None`; the fusion stage substitutes for them.
#[derive(Clone, Copy, Debug, Default)]
pub struct FeatureSet {
    pub f_ntl: Option<Var>,
    pub f_dmo: Option<Var>,
    pub f_dem: Option<Var>,
    pub f_aux_fused: Option<Var>,
    pub f_main_fused: Option<Var>,
    /// Global affine warp `N×2×3` estimated from the low-resolution input.
    pub warp_omega: Option<Var>,
}

/// Graph handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub sr_pyramid: Vec<Var>,
    pub isp_logits: Option<Var>,
    pub features: FeatureSet,
}

/// Multi-scale predictions, coarsest first, and ISP logits at full scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutputs {
    pub sr_pyramid: Vec<Tensor>,
    pub isp_logits: Option<Tensor>,
}

impl ForwardOutputs {
    /// The finest prediction, at `r·h × r·w`.
    pub fn finest(&self) -> &Tensor {
        self.sr_pyramid.last().expect("pyramid is never empty")
    }
}

/// One recorded forward (and optionally backward) pass.
pub struct Session {
    pub graph: Graph,
    pub params: Bound,
    config: ModelConfig,
}

impl Session {
    /// Parameters are bound as gradient-tracked variables.
    pub fn trainable(state: &ModelState) -> Self {
        let mut graph = Graph::new();
        let params = state.params.bind(&mut graph);
        Self {
            graph,
            params,
            config: state.config.clone(),
        }
    }

    /// Parameters are bound as constants; used for evaluation.
    pub fn frozen(state: &ModelState) -> Self {
        let mut graph = Graph::new();
        let params = state.params.bind_frozen(&mut graph);
        Self {
            graph,
            params,
            config: state.config.clone(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input(&mut self, t: &Tensor) -> Var {
        self.graph.constant(t.clone())
    }

    pub fn inputs(&mut self, n_l: &Tensor, m_dmo: &Tensor, m_dem: &Tensor) -> (Var, Var, Var) {
        (self.input(n_l), self.input(m_dmo), self.input(m_dem))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.graph.value(v)
    }

    fn param(&self, name: &str) -> Result<Var> {
        Ok(self.params.get(name)?)
    }

    /// Convolution with the named layer's weight and bias; same padding.
    pub(crate) fn conv(&mut self, name: &str, x: Var, stride: usize) -> Result<Var> {
        let w = self.param(&format!("{name}.weight"))?;
        let b = self.param(&format!("{name}.bias"))?;
        let k = self.graph.shape(w)[2];
        Ok(self.graph.conv2d(x, w, Some(b), stride, k / 2)?)
    }

    pub(crate) fn conv_act(&mut self, name: &str, x: Var, stride: usize) -> Result<Var> {
        let y = self.conv(name, x, stride)?;
        Ok(self.graph.leaky_relu(y, LEAKY_SLOPE))
    }

    /// Full pipeline: alignment, fusion, refinement.
    pub fn forward(&mut self, n_l: Var, m_dmo: Var, m_dem: Var) -> Result<ForwardVars> {
        let feats = self.caa_forward(n_l, m_dmo, m_dem)?;
        let feats = self.amff_forward(feats)?;
        let f_main = feats
            .f_main_fused
            .ok_or_else(|| Error::State("fusion produced no main feature".into()))?;
        let mut out = self.aer_forward(f_main)?;
        out.features = feats;
        Ok(out)
    }

    pub fn outputs(&self, vars: &ForwardVars) -> ForwardOutputs {
        ForwardOutputs {
            sr_pyramid: vars.sr_pyramid.iter().map(|&v| self.value(v).clone()).collect(),
            isp_logits: vars.isp_logits.map(|v| self.value(v).clone()),
        }
    }
}
