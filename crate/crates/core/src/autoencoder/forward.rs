//! Forward pass with cached intermediates, reconstruction loss, and the
//! regularized training objective.
//!
//! Every layer computes `a = ReLU(norm(W·x + b))` where `norm` is batch
//! normalization on hidden layers (identity when disabled, and always
//! identity on the output layer). Train mode normalizes with the current
//! batch's statistics; Infer mode uses the stored running statistics, making
//! it a pure function of `(params, x)`.

use crate::error::{Error, Result};
use crate::linalg::Mat;

use super::{ModelParams, NORM_EPS};

/// Which normalization statistics the forward pass uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Batch statistics; requires the whole batch as context.
    Train,
    /// Frozen running statistics; row-independent and bitwise reproducible.
    Infer,
}

/// Intermediates of one layer, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Layer input `x` (batch rows).
    pub input: Mat,
    /// Affine output `z = x·Wᵀ + b`.
    pub z: Mat,
    /// Normalized activations `x̂` (only when the layer has norm params).
    pub xhat: Option<Mat>,
    /// Per-column `1/√(σ² + ε)` used by the normalization.
    pub inv_std: Option<Vec<f64>>,
    /// Batch mean per column (Train mode with norm only).
    pub batch_mean: Option<Vec<f64>>,
    /// Biased batch variance per column (Train mode with norm only).
    pub batch_var: Option<Vec<f64>>,
    /// Pre-ReLU activations (post-norm).
    pub h: Mat,
    /// Post-ReLU activations — the next layer's input.
    pub a: Mat,
}

/// Full forward trace: one [`LayerCache`] per layer, encoder first.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
}

impl ForwardCache {
    /// The reconstruction — the last layer's post-ReLU output.
    pub fn output(&self) -> &Mat {
        &self.layers.last().expect("at least one layer").a
    }
}

fn column_mean_var(m: &Mat) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mut mean = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            mean[c] += v;
        }
    }
    for v in &mut mean {
        *v /= n;
    }
    let mut var = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            let d = v - mean[c];
            var[c] += d * d;
        }
    }
    for v in &mut var {
        *v /= n;
    }
    (mean, var)
}

/// Run a batch (rows = samples) through the network, caching intermediates.
/// Pure: never mutates `params` — running statistics are updated separately
/// by the training loop.
pub fn forward_batch(params: &ModelParams, x: &Mat, mode: ForwardMode) -> Result<ForwardCache> {
    if x.cols() != params.arch().input_dim {
        return Err(Error::ShapeMismatch {
            tensor: "forward input".to_string(),
            expected: (x.rows(), params.arch().input_dim),
            found: (x.rows(), x.cols()),
        });
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput {
            what: "forward batch".to_string(),
        });
    }

    let mut layers = Vec::with_capacity(params.layers().len());
    let mut current = x.clone();
    for layer in params.layers() {
        let mut z = current.mul_transposed(&layer.weight);
        z.add_row_vector(&layer.bias);

        let (h, xhat, inv_std, batch_mean, batch_var) = match &layer.norm {
            Some(norm) => {
                let (mean, var, keep_stats) = match mode {
                    ForwardMode::Train => {
                        let (m, v) = column_mean_var(&z);
                        (m, v, true)
                    }
                    ForwardMode::Infer => {
                        (norm.running_mean.clone(), norm.running_var.clone(), false)
                    }
                };
                let inv_std: Vec<f64> =
                    var.iter().map(|&v| 1.0 / (v + NORM_EPS).sqrt()).collect();
                let mut xhat = Mat::zeros(z.rows(), z.cols());
                let mut h = Mat::zeros(z.rows(), z.cols());
                for r in 0..z.rows() {
                    for c in 0..z.cols() {
                        let n = (z.get(r, c) - mean[c]) * inv_std[c];
                        xhat.set(r, c, n);
                        h.set(r, c, norm.gamma[c] * n + norm.beta[c]);
                    }
                }
                (
                    h,
                    Some(xhat),
                    Some(inv_std),
                    keep_stats.then_some(mean),
                    keep_stats.then_some(var),
                )
            }
            None => (z.clone(), None, None, None, None),
        };

        let mut a = h.clone();
        for v in a.as_mut_slice() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let next = a.clone();
        layers.push(LayerCache {
            input: current,
            z,
            xhat,
            inv_std,
            batch_mean,
            batch_var,
            h,
            a,
        });
        current = next;
    }
    Ok(ForwardCache { layers })
}

/// Reconstruct a single vector in Infer mode; returns the output row.
pub fn forward(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    let m = Mat::from_vec(1, x.len(), x.to_vec());
    let cache = forward_batch(params, &m, ForwardMode::Infer)?;
    Ok(cache.output().row(0).to_vec())
}

/// Squared Euclidean distance `Σ (aᵢ - bᵢ)²`.
pub fn reconstruction_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            tensor: "reconstruction loss operands".to_string(),
            expected: (1, a.len()),
            found: (1, b.len()),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Weight-only regularization penalty `λ₁·Σ|w| + λ₂·Σw²` (biases and
/// normalization parameters are exempt).
pub fn penalty(params: &ModelParams, lambda_l1: f64, lambda_l2: f64) -> f64 {
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for layer in params.layers() {
        for &w in layer.weight.as_slice() {
            l1 += w.abs();
            l2 += w * w;
        }
    }
    lambda_l1 * l1 + lambda_l2 * l2
}

/// Training objective over a batch: `Σ_x ||f(x) - x||²` (Train-mode forward,
/// so batch statistics feed the normalization) plus the weight penalty.
pub fn objective(
    params: &ModelParams,
    batch: &Mat,
    lambda_l1: f64,
    lambda_l2: f64,
) -> Result<f64> {
    let cache = forward_batch(params, batch, ForwardMode::Train)?;
    let out = cache.output();
    let mut data_term = 0.0;
    for r in 0..batch.rows() {
        data_term += reconstruction_loss(out.row(r), batch.row(r))?;
    }
    Ok(data_term + penalty(params, lambda_l1, lambda_l2))
}

#[cfg(test)]
mod tests {
    use super::super::{Architecture, LayerParams, ModelParams};
    use super::*;
    use rand::Rng;

    fn plain_model(arch: &Architecture, fill: impl Fn(usize) -> f64) -> ModelParams {
        let widths = arch.layer_widths();
        let layers = (0..arch.total_layers())
            .map(|i| LayerParams {
                weight: Mat::from_fn(widths[i + 1], widths[i], |r, c| fill(i + r + c)),
                bias: vec![0.0; widths[i + 1]],
                norm: None,
            })
            .collect();
        ModelParams::from_layers(arch.clone(), layers).unwrap()
    }

    #[test]
    fn zero_weights_reconstruct_zero() {
        let arch = Architecture::new(5, vec![3]).unwrap();
        let model = plain_model(&arch, |_| 0.0);
        let y = forward(&model, &[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap();
        assert_eq!(y, vec![0.0; 5]);
    }

    #[test]
    fn hand_evaluated_two_layer_chain() {
        // 1x1 layers: enc W=[2], dec W=[3], x=[1] -> enc out 2, final 6.
        let arch = Architecture {
            input_dim: 1,
            encoder_dims: vec![1],
        };
        // Bypass the bottleneck<input check via from_layers? validate() runs
        // there too, so build a legal 2->1->2 net and check by hand instead.
        assert!(arch.validate().is_err());

        let arch = Architecture::new(2, vec![1]).unwrap();
        let layers = vec![
            LayerParams {
                weight: Mat::from_vec(1, 2, vec![2.0, 0.0]),
                bias: vec![0.0],
                norm: None,
            },
            LayerParams {
                weight: Mat::from_vec(2, 1, vec![3.0, 5.0]),
                bias: vec![0.0; 2],
                norm: None,
            },
        ];
        let model = ModelParams::from_layers(arch, layers).unwrap();
        // x = [1, 7]: enc = ReLU(2*1 + 0*7) = 2; dec = ReLU([3*2, 5*2]).
        let y = forward(&model, &[1.0, 7.0]).unwrap();
        assert_eq!(y, vec![6.0, 10.0]);
    }

    #[test]
    fn forward_matches_independent_matrix_oracle() {
        // Oracle: naive per-vector matrix products + ReLU, no Mat reuse.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let arch = Architecture::new(8, vec![4, 2]).unwrap();
        let model = {
            let widths = arch.layer_widths();
            let layers = (0..arch.total_layers())
                .map(|i| LayerParams {
                    weight: Mat::from_fn(widths[i + 1], widths[i], |_, _| {
                        rng.gen_range(-1.0..1.0)
                    }),
                    bias: (0..widths[i + 1]).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                    norm: None,
                })
                .collect();
            ModelParams::from_layers(arch.clone(), layers).unwrap()
        };
        for _ in 0..10 {
            let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let got = forward(&model, &x).unwrap();

            let mut v = x.clone();
            for layer in model.layers() {
                let mut next = vec![0.0; layer.weight.rows()];
                for (r, out) in next.iter_mut().enumerate() {
                    let mut s = layer.bias[r];
                    for (c, &xv) in v.iter().enumerate() {
                        s += layer.weight.get(r, c) * xv;
                    }
                    *out = if s > 0.0 { s } else { 0.0 };
                }
                v = next;
            }
            for (g, e) in got.iter().zip(&v) {
                assert!((g - e).abs() <= 1e-10, "got {} expected {}", g, e);
            }
        }
    }

    #[test]
    fn activations_are_nonnegative() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let arch = Architecture::new(6, vec![3]).unwrap();
        let model = ModelParams::init(&arch, true, 4).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let m = Mat::from_vec(1, 6, x);
            for mode in [ForwardMode::Train, ForwardMode::Infer] {
                let cache = forward_batch(&model, &m, mode).unwrap();
                for layer in &cache.layers {
                    assert!(layer.a.as_slice().iter().all(|&v| v >= 0.0));
                }
            }
        }
    }

    #[test]
    fn infer_mode_is_bitwise_repeatable() {
        let arch = Architecture::new(7, vec![4, 2]).unwrap();
        let model = ModelParams::init(&arch, true, 11).unwrap();
        let x: Vec<f64> = (0..7).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let a = forward(&model, &x).unwrap();
        let b = forward(&model, &x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn train_mode_uses_batch_statistics() {
        // With gamma=1, beta=0 the normalized pre-activations of each column
        // have ~zero mean over the batch in Train mode.
        let arch = Architecture::new(4, vec![2]).unwrap();
        let mut model = ModelParams::init(&arch, true, 3).unwrap();
        // Shift running stats far away so Train/Infer visibly differ.
        if let Some(norm) = &mut model.layers_mut()[0].norm {
            norm.running_mean.iter_mut().for_each(|v| *v = 100.0);
        }
        let x = Mat::from_fn(16, 4, |r, c| (r * 4 + c) as f64 * 0.1);
        let train_cache = forward_batch(&model, &x, ForwardMode::Train).unwrap();
        let infer_cache = forward_batch(&model, &x, ForwardMode::Infer).unwrap();
        let h_train = &train_cache.layers[0].h;
        for c in 0..h_train.cols() {
            let mean: f64 =
                (0..16).map(|r| h_train.get(r, c)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-9, "column {} mean {}", c, mean);
        }
        assert_ne!(
            train_cache.layers[0].h.as_slice(),
            infer_cache.layers[0].h.as_slice()
        );
    }

    #[test]
    fn loss_examples() {
        assert_eq!(reconstruction_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert!(reconstruction_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn loss_matches_summation_oracle() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut expect = 0.0;
            for i in 0..12 {
                let d = a[i] - b[i];
                expect += d * d;
            }
            let got = reconstruction_loss(&a, &b).unwrap();
            assert!((got - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn objective_without_penalties_is_sum_of_losses() {
        let arch = Architecture::new(3, vec![2]).unwrap();
        let model = ModelParams::init(&arch, false, 1).unwrap();
        let batch = Mat::from_fn(5, 3, |r, c| (r + c) as f64 * 0.2);
        let obj = objective(&model, &batch, 0.0, 0.0).unwrap();
        let cache = forward_batch(&model, &batch, ForwardMode::Train).unwrap();
        let mut total = 0.0;
        for r in 0..5 {
            total += reconstruction_loss(cache.output().row(r), batch.row(r)).unwrap();
        }
        assert!((obj - total).abs() <= 1e-12);
    }

    #[test]
    fn zero_weights_have_zero_penalty() {
        let arch = Architecture::new(3, vec![2]).unwrap();
        let model = {
            let widths = arch.layer_widths();
            let layers = (0..2)
                .map(|i| LayerParams {
                    weight: Mat::zeros(widths[i + 1], widths[i]),
                    bias: vec![1.0; widths[i + 1]], // biases are exempt
                    norm: None,
                })
                .collect();
            ModelParams::from_layers(arch, layers).unwrap()
        };
        assert_eq!(penalty(&model, 0.5, 0.5), 0.0);
    }

    #[test]
    fn objective_matches_independent_recomputation() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let arch = Architecture::new(5, vec![3]).unwrap();
        let model = ModelParams::init(&arch, false, 21).unwrap();
        let batch = Mat::from_fn(7, 5, |_, _| rng.gen_range(0.0..1.0));
        let (l1, l2) = (1e-3, 1e-2);

        let got = objective(&model, &batch, l1, l2).unwrap();

        // Independent recomputation with scalar loops.
        let mut expect = 0.0;
        for r in 0..batch.rows() {
            let mut v = batch.row(r).to_vec();
            for layer in model.layers() {
                let mut next = vec![0.0; layer.weight.rows()];
                for (j, out) in next.iter_mut().enumerate() {
                    let mut s = layer.bias[j];
                    for (c, &xv) in v.iter().enumerate() {
                        s += layer.weight.get(j, c) * xv;
                    }
                    *out = s.max(0.0);
                }
                v = next;
            }
            for (recon, orig) in v.iter().zip(batch.row(r)) {
                expect += (recon - orig) * (recon - orig);
            }
        }
        let mut p1 = 0.0;
        let mut p2 = 0.0;
        for layer in model.layers() {
            for &w in layer.weight.as_slice() {
                p1 += w.abs();
                p2 += w * w;
            }
        }
        expect += l1 * p1 + l2 * p2;

        let rel = (got - expect).abs() / expect.abs().max(1.0);
        assert!(rel <= 1e-10, "objective {} vs oracle {}", got, expect);
    }

    /// Duplicating the dataset doubles the data term, not the penalty.
    #[test]
    fn duplicated_batch_doubles_only_the_data_term() {
        let arch = Architecture::new(4, vec![2]).unwrap();
        let model = ModelParams::init(&arch, false, 2).unwrap();
        let batch = Mat::from_fn(6, 4, |r, c| ((r + 1) * (c + 2)) as f64 * 0.05);
        let mut doubled = Mat::zeros(12, 4);
        for r in 0..6 {
            doubled.row_mut(r).copy_from_slice(batch.row(r));
            doubled.row_mut(r + 6).copy_from_slice(batch.row(r));
        }
        let (l1, l2) = (1e-2, 1e-3);
        let single = objective(&model, &batch, l1, l2).unwrap();
        let double = objective(&model, &doubled, l1, l2).unwrap();
        let pen = penalty(&model, l1, l2);
        let data_single = single - pen;
        assert!((double - (2.0 * data_single + pen)).abs() <= 1e-9);
    }
}
