//! Analytic gradients of the training objective by reverse-mode
//! differentiation through affine, batch-normalization, and ReLU stages.
//!
//! Conventions fixed here (and matched by the finite-difference tests):
//! the ReLU subgradient at exactly 0 is 0, and the L1 subgradient of a
//! zero weight is 0.

use crate::error::Result;
use crate::linalg::Mat;

use super::forward::{forward_batch, ForwardCache, ForwardMode};
use super::{Gradients, LayerGrads, ModelParams, NormGrads};

/// Gradient of `objective(params, batch, λ₁, λ₂)` with respect to every
/// trainable parameter (weights, biases, normalization scale/shift).
/// Uses Train-mode forward so normalization differentiates through the
/// batch statistics, exactly like the objective it matches.
pub fn gradients(
    params: &ModelParams,
    batch: &Mat,
    lambda_l1: f64,
    lambda_l2: f64,
) -> Result<Gradients> {
    let cache = forward_batch(params, batch, ForwardMode::Train)?;
    Ok(gradients_with_cache(params, batch, &cache, lambda_l1, lambda_l2))
}

/// Backward pass over an existing forward cache (the training loop reuses
/// the cache it already computed for the loss).
pub(crate) fn gradients_with_cache(
    params: &ModelParams,
    batch: &Mat,
    cache: &ForwardCache,
    lambda_l1: f64,
    lambda_l2: f64,
) -> Gradients {
    let n_layers = params.layers().len();
    let mut layer_grads: Vec<Option<LayerGrads>> = vec![None; n_layers];

    // d(objective)/d(output) for the summed squared error.
    let out = cache.output();
    let mut d_act = Mat::zeros(out.rows(), out.cols());
    for r in 0..out.rows() {
        for c in 0..out.cols() {
            d_act.set(r, c, 2.0 * (out.get(r, c) - batch.get(r, c)));
        }
    }

    for i in (0..n_layers).rev() {
        let layer = &params.layers()[i];
        let lc = &cache.layers[i];

        // Through the ReLU: pass where the pre-activation was positive.
        let mut d_h = d_act;
        for (dv, hv) in d_h.as_mut_slice().iter_mut().zip(lc.h.as_slice()) {
            if *hv <= 0.0 {
                *dv = 0.0;
            }
        }

        // Through the normalization (if present), producing d(z) and the
        // scale/shift gradients.
        let (d_z, norm_grads) = match (&layer.norm, &lc.xhat, &lc.inv_std) {
            (Some(norm), Some(xhat), Some(inv_std)) => {
                let b = d_h.rows() as f64;
                let cols = d_h.cols();
                let mut d_gamma = vec![0.0; cols];
                let mut d_beta = vec![0.0; cols];
                for r in 0..d_h.rows() {
                    for c in 0..cols {
                        d_gamma[c] += d_h.get(r, c) * xhat.get(r, c);
                        d_beta[c] += d_h.get(r, c);
                    }
                }
                // d(xhat) = d_h * gamma; fold the batch-statistics terms:
                // dz = inv_std/B * (B*dxhat - Σdxhat - xhat*Σ(dxhat*xhat)).
                let mut sum_dx = vec![0.0; cols];
                let mut sum_dx_xhat = vec![0.0; cols];
                for r in 0..d_h.rows() {
                    for c in 0..cols {
                        let dx = d_h.get(r, c) * norm.gamma[c];
                        sum_dx[c] += dx;
                        sum_dx_xhat[c] += dx * xhat.get(r, c);
                    }
                }
                let mut d_z = Mat::zeros(d_h.rows(), cols);
                for r in 0..d_h.rows() {
                    for c in 0..cols {
                        let dx = d_h.get(r, c) * norm.gamma[c];
                        let v = (inv_std[c] / b)
                            * (b * dx - sum_dx[c] - xhat.get(r, c) * sum_dx_xhat[c]);
                        d_z.set(r, c, v);
                    }
                }
                (d_z, Some(NormGrads { gamma: d_gamma, beta: d_beta }))
            }
            _ => (d_h, None),
        };

        // Affine: dW = dzᵀ·x (+ regularizers), db = column sums of dz,
        // and the gradient flowing into the previous layer is dz·W.
        let mut d_w = d_z.transposed_mul(&lc.input);
        for (g, &w) in d_w.as_mut_slice().iter_mut().zip(layer.weight.as_slice()) {
            let sign = if w > 0.0 {
                1.0
            } else if w < 0.0 {
                -1.0
            } else {
                0.0
            };
            *g += lambda_l1 * sign + 2.0 * lambda_l2 * w;
        }
        let d_b = d_z.column_sums();
        d_act = d_z.mul(&layer.weight);

        layer_grads[i] = Some(LayerGrads {
            weight: d_w,
            bias: d_b,
            norm: norm_grads,
        });
    }

    Gradients {
        layers: layer_grads.into_iter().map(|g| g.expect("filled")).collect(),
    }
}
