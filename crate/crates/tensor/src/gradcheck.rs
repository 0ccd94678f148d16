//! Central finite-difference gradient checking.
//!
//! The numerical side only ever runs forward passes, so it is independent
//! of every backward rule it is used to verify. The (possibly non-scalar)
//! output is projected onto fixed pseudo-random weights and the projection
//! is accumulated in `f64` to keep rounding noise below the step size.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Per input: `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.
    pub rel_error: Vec<f64>,
    pub max_abs_error: Vec<f64>,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Vec<f64>>,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.rel_error.iter().copied().fold(0.0, f64::max)
    }
}

/// SplitMix64 projection weights in `[-1, 1)`.
pub fn projection(len: usize, seed: u64) -> Vec<f32> {
    let mut state = seed;
    (0..len)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            ((z >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
        })
        .collect()
}

/// Checks `∂⟨f(inputs), r⟩/∂inputs` for every input. `f` records its
/// computation into the graph and returns the output node.
pub fn check<F>(inputs: &[Tensor], eps: f32, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let out_shape = g.shape(out).to_vec();
    let r = projection(g.value(out).numel(), 0x5eed);
    let rv = g.constant(Tensor::new(&out_shape, r.clone())?);
    let prod = g.mul(out, rv)?;
    let loss = g.sum(prod);
    g.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out)
            .data()
            .iter()
            .zip(&r)
            .map(|(&y, &w)| y as f64 * w as f64)
            .sum())
    };

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for k in 0..inputs.len() {
        let mut col = Vec::with_capacity(inputs[k].numel());
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + eps;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - eps;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            // the actual perturbation after rounding to f32
            let h = (orig + eps) as f64 - (orig - eps) as f64;
            col.push((up - down) / h);
        }
        numeric.push(col);
    }

    let mut rel_error = Vec::new();
    let mut max_abs_error = Vec::new();
    for (a, n) in analytic.iter().zip(&numeric) {
        let (mut diff, mut na, mut nn, mut worst) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (&x, &y) in a.data().iter().zip(n) {
            let d = x as f64 - y;
            diff += d * d;
            na += (x as f64).powi(2);
            nn += y * y;
            worst = worst.max(d.abs());
        }
        let denom = na.sqrt().max(nn.sqrt());
        rel_error.push(if denom == 0.0 { 0.0 } else { diff.sqrt() / denom });
        max_abs_error.push(worst);
    }
    Ok(GradCheck {
        rel_error,
        max_abs_error,
        analytic,
        numeric,
    })
}
