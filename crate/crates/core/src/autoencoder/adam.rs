//! Adam parameter updates with bias correction.
//!
//! Per tensor entry: `m ← β₁m + (1-β₁)g`, `v ← β₂v + (1-β₂)g²`, then
//! `θ ← θ - lr·m̂/(√v̂ + ε)` with `m̂ = m/(1-β₁ᵗ)`, `v̂ = v/(1-β₂ᵗ)`.
//! Moments exist for every trainable tensor: weights, biases, and
//! normalization scale/shift. Running statistics are not optimized.

use crate::error::{Error, Result};
use crate::linalg::Mat;

use super::train::TrainConfig;
use super::{Gradients, ModelParams};

struct TensorMoments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl TensorMoments {
    fn zeros(len: usize) -> TensorMoments {
        TensorMoments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

struct LayerMoments {
    weight: TensorMoments,
    bias: TensorMoments,
    norm: Option<(TensorMoments, TensorMoments)>, // (gamma, beta)
}

/// First/second moment accumulators plus the step counter.
pub struct AdamState {
    step: u64,
    layers: Vec<LayerMoments>,
}

impl AdamState {
    /// Zero moments shaped like the model's trainable tensors.
    pub fn new(params: &ModelParams) -> AdamState {
        let layers = params
            .layers()
            .iter()
            .map(|l| LayerMoments {
                weight: TensorMoments::zeros(l.weight.rows() * l.weight.cols()),
                bias: TensorMoments::zeros(l.bias.len()),
                norm: l.norm.as_ref().map(|n| {
                    (
                        TensorMoments::zeros(n.gamma.len()),
                        TensorMoments::zeros(n.beta.len()),
                    )
                }),
            })
            .collect();
        AdamState { step: 0, layers }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

fn update_slice(
    theta: &mut [f64],
    grad: &[f64],
    moments: &mut TensorMoments,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..theta.len() {
        let g = grad[i];
        moments.m[i] = beta1 * moments.m[i] + (1.0 - beta1) * g;
        moments.v[i] = beta2 * moments.v[i] + (1.0 - beta2) * g * g;
        let m_hat = moments.m[i] / bc1;
        let v_hat = moments.v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

fn mat_as_slice(m: &Mat) -> &[f64] {
    m.as_slice()
}

/// One Adam step over every trainable tensor; increments the step counter.
/// Deterministic: identical `(params, grads, state, cfg)` always produce
/// identical results.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.layers.len() != params.layers().len() || state.layers.len() != params.layers().len() {
        return Err(Error::ShapeMismatch {
            tensor: "optimizer state".to_string(),
            expected: (params.layers().len(), 0),
            found: (grads.layers.len(), state.layers.len()),
        });
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.adam_beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.adam_beta2.powi(state.step as i32);

    for (i, layer) in params.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers[i];
        let s = &mut state.layers[i];
        update_slice(
            layer.weight.as_mut_slice(),
            mat_as_slice(&g.weight),
            &mut s.weight,
            cfg.learning_rate,
            cfg.adam_beta1,
            cfg.adam_beta2,
            cfg.adam_epsilon,
            bc1,
            bc2,
        );
        update_slice(
            &mut layer.bias,
            &g.bias,
            &mut s.bias,
            cfg.learning_rate,
            cfg.adam_beta1,
            cfg.adam_beta2,
            cfg.adam_epsilon,
            bc1,
            bc2,
        );
        if let (Some(norm), Some(ng), Some((gm, bm))) =
            (&mut layer.norm, &g.norm, &mut s.norm)
        {
            update_slice(
                &mut norm.gamma,
                &ng.gamma,
                gm,
                cfg.learning_rate,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_epsilon,
                bc1,
                bc2,
            );
            update_slice(
                &mut norm.beta,
                &ng.beta,
                bm,
                cfg.learning_rate,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_epsilon,
                bc1,
                bc2,
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{Architecture, Gradients, LayerGrads, ModelParams};
    use super::*;

    fn zero_grads(params: &ModelParams) -> Gradients {
        Gradients {
            layers: params
                .layers()
                .iter()
                .map(|l| LayerGrads {
                    weight: Mat::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                    norm: l.norm.as_ref().map(|n| super::super::NormGrads {
                        gamma: vec![0.0; n.gamma.len()],
                        beta: vec![0.0; n.beta.len()],
                    }),
                })
                .collect(),
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let arch = Architecture::new(4, vec![2]).unwrap();
        let mut model = ModelParams::init(&arch, true, 5).unwrap();
        let before = model.trainable_values();
        let grads = zero_grads(&model);
        let mut state = AdamState::new(&model);
        let cfg = TrainConfig::default();
        adam_step(&mut model, &grads, &mut state, &cfg).unwrap();
        assert_eq!(model.trainable_values(), before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_learning_rate() {
        // Hand recurrence: m=0.1, v=0.001, m̂=1, v̂=1 → Δθ = -lr/(1+ε) ≈ -lr.
        let arch = Architecture::new(4, vec![2]).unwrap();
        let mut model = ModelParams::init(&arch, false, 6).unwrap();
        let w_before = model.layers()[0].weight.get(0, 0);
        let b_before = model.layers()[0].bias[1];
        let mut grads = zero_grads(&model);
        grads.layers[0].weight.set(0, 0, 1.0);
        let mut state = AdamState::new(&model);
        let cfg = TrainConfig::default();
        adam_step(&mut model, &grads, &mut state, &cfg).unwrap();
        let delta = model.layers()[0].weight.get(0, 0) - w_before;
        assert!((delta + cfg.learning_rate).abs() <= 1e-9, "delta {}", delta);
        assert_eq!(model.layers()[0].bias[1], b_before, "untouched parameter");
    }

    #[test]
    fn multi_step_matches_scalar_reference_recurrence() {
        // Oracle: an independent scalar Adam implementation.
        let arch = Architecture::new(4, vec![2]).unwrap();
        let mut model = ModelParams::init(&arch, false, 7).unwrap();
        let theta0 = model.layers()[0].weight.get(1, 2);
        let cfg = TrainConfig::default();
        let g_seq = [0.5, -1.25, 0.0, 2.0, 0.75];

        let mut state = AdamState::new(&model);
        for &g in &g_seq {
            let mut grads = zero_grads(&model);
            grads.layers[0].weight.set(1, 2, g);
            adam_step(&mut model, &grads, &mut state, &cfg).unwrap();
        }

        let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
        for (t, &g) in g_seq.iter().enumerate() {
            let t = (t + 1) as i32;
            m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
            v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g;
            let m_hat = m / (1.0 - cfg.adam_beta1.powi(t));
            let v_hat = v / (1.0 - cfg.adam_beta2.powi(t));
            theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        }

        let got = model.layers()[0].weight.get(1, 2);
        assert!((got - theta).abs() <= 1e-15, "{} vs {}", got, theta);
        assert_eq!(state.step_count(), g_seq.len() as u64);
    }

    #[test]
    fn identical_calls_from_identical_state_agree() {
        let arch = Architecture::new(5, vec![2]).unwrap();
        let model0 = ModelParams::init(&arch, true, 8).unwrap();
        let mut grads = zero_grads(&model0);
        grads.layers[1].bias[0] = 0.3;
        grads.layers[0].weight.set(1, 1, -0.7);
        let cfg = TrainConfig::default();

        let mut a = model0.clone();
        let mut sa = AdamState::new(&a);
        adam_step(&mut a, &grads, &mut sa, &cfg).unwrap();

        let mut b = model0.clone();
        let mut sb = AdamState::new(&b);
        adam_step(&mut b, &grads, &mut sb, &cfg).unwrap();

        let va: Vec<u64> = a.trainable_values().iter().map(|x| x.to_bits()).collect();
        let vb: Vec<u64> = b.trainable_values().iter().map(|x| x.to_bits()).collect();
        assert_eq!(va, vb);
    }
}
