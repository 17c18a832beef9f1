//! Textual model persistence.
//!
//! Line-oriented format:
//!
//! ```text
//! AEMODEL v1
//! ARCH <input_dim> <encoder_width...>
//! TENSOR enc0.weight <rows> <cols>
//! <cols space-separated values per row, rows lines>
//! TENSOR enc0.bias 1 <n>
//! ...
//! ```
//!
//! Values are written as 17-significant-digit scientific decimals, the
//! shortest width guaranteed to round-trip every finite `f64` bit-exactly.
//! Tensor order is fixed (layers in network order; per layer: weight, bias,
//! then gamma/beta/running_mean/running_var when present), so serialization
//! is canonical and the file's SHA-256 identifies the model.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Mat;

use super::{layer_name, Architecture, LayerParams, ModelParams, NormParams};

const MAGIC: &str = "AEMODEL v1";

fn push_tensor(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    out.push_str(&format!("TENSOR {} {} {}\n", name, rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            if c > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{:.16e}", values[r * cols + c]));
        }
        out.push('\n');
    }
}

/// Canonical textual serialization.
pub fn model_to_string(params: &ModelParams) -> String {
    let arch = params.arch();
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("ARCH {}", arch.input_dim));
    for d in &arch.encoder_dims {
        out.push_str(&format!(" {}", d));
    }
    out.push('\n');

    let n = arch.n_layers();
    for (i, layer) in params.layers().iter().enumerate() {
        let name = layer_name(i, n);
        push_tensor(
            &mut out,
            &format!("{}.weight", name),
            layer.weight.rows(),
            layer.weight.cols(),
            layer.weight.as_slice(),
        );
        push_tensor(&mut out, &format!("{}.bias", name), 1, layer.bias.len(), &layer.bias);
        if let Some(norm) = &layer.norm {
            push_tensor(&mut out, &format!("{}.gamma", name), 1, norm.gamma.len(), &norm.gamma);
            push_tensor(&mut out, &format!("{}.beta", name), 1, norm.beta.len(), &norm.beta);
            push_tensor(
                &mut out,
                &format!("{}.running_mean", name),
                1,
                norm.running_mean.len(),
                &norm.running_mean,
            );
            push_tensor(
                &mut out,
                &format!("{}.running_var", name),
                1,
                norm.running_var.len(),
                &norm.running_var,
            );
        }
    }
    out
}

/// SHA-256 of the canonical serialization, hex-encoded. Two models share a
/// fingerprint iff they serialize identically.
pub fn model_fingerprint(params: &ModelParams) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_to_string(params).as_bytes());
    hex::encode(hasher.finalize())
}

pub fn save_model(params: &ModelParams, path: &Path) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(model_to_string(params).as_bytes())
        .map_err(|e| Error::io(path, e))
}

struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Parser<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some((idx, line)) => Ok((idx + 1, line)),
            None => Err(Error::ModelFormat {
                line: 0,
                reason: "unexpected end of file".to_string(),
            }),
        }
    }
}

fn parse_tensor(parser: &mut Parser<'_>, expected_name: &str) -> Result<(usize, usize, Vec<f64>)> {
    let (lineno, header) = parser.next_line()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "TENSOR" {
        return Err(Error::ModelFormat {
            line: lineno,
            reason: format!("expected `TENSOR {} <rows> <cols>`, found `{}`", expected_name, header),
        });
    }
    if parts[1] != expected_name {
        return Err(Error::ModelFormat {
            line: lineno,
            reason: format!("expected tensor `{}`, found `{}`", expected_name, parts[1]),
        });
    }
    let rows: usize = parts[2].parse().map_err(|_| Error::ModelFormat {
        line: lineno,
        reason: format!("bad row count `{}`", parts[2]),
    })?;
    let cols: usize = parts[3].parse().map_err(|_| Error::ModelFormat {
        line: lineno,
        reason: format!("bad column count `{}`", parts[3]),
    })?;
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (lineno, line) = parser.next_line().map_err(|_| Error::ModelFormat {
            line: 0,
            reason: format!("tensor `{}` truncated", expected_name),
        })?;
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::ModelFormat {
                line: lineno,
                reason: format!("bad value `{}` in tensor `{}`", tok, expected_name),
            })?;
            if !v.is_finite() {
                return Err(Error::ModelFormat {
                    line: lineno,
                    reason: format!("non-finite value in tensor `{}`", expected_name),
                });
            }
            values.push(v);
            count += 1;
        }
        if count != cols {
            return Err(Error::ModelFormat {
                line: lineno,
                reason: format!(
                    "tensor `{}` declares {} columns but row has {}",
                    expected_name, cols, count
                ),
            });
        }
    }
    Ok((rows, cols, values))
}

/// Load a model file; the inverse of [`save_model`], bit-exact.
pub fn load_model(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut parser = Parser {
        lines: text.lines().enumerate(),
    };

    let (lineno, magic) = parser.next_line()?;
    if magic != MAGIC {
        return Err(Error::ModelFormat {
            line: lineno,
            reason: format!("expected `{}`, found `{}`", MAGIC, magic),
        });
    }

    let (lineno, arch_line) = parser.next_line()?;
    let parts: Vec<&str> = arch_line.split_whitespace().collect();
    if parts.len() < 3 || parts[0] != "ARCH" {
        return Err(Error::ModelFormat {
            line: lineno,
            reason: format!("expected `ARCH <input> <widths...>`, found `{}`", arch_line),
        });
    }
    let mut dims = Vec::with_capacity(parts.len() - 1);
    for p in &parts[1..] {
        dims.push(p.parse::<usize>().map_err(|_| Error::ModelFormat {
            line: lineno,
            reason: format!("bad architecture width `{}`", p),
        })?);
    }
    let arch = Architecture::new(dims[0], dims[1..].to_vec())?;

    // Peek layer by layer; a layer has norm tensors iff a gamma block
    // follows its bias block. Detect by cloning the iterator position: the
    // simplest robust approach is to parse the required tensors and then
    // look ahead at the next line.
    let n = arch.n_layers();
    let widths = arch.layer_widths();
    let mut layers = Vec::with_capacity(arch.total_layers());
    for i in 0..arch.total_layers() {
        let name = layer_name(i, n);
        let (rows, cols, w) = parse_tensor(&mut parser, &format!("{}.weight", name))?;
        let weight = Mat::from_vec(rows, cols, w);
        let (_, _, bias) = parse_tensor(&mut parser, &format!("{}.bias", name))?;

        // Look ahead: does a `<name>.gamma` tensor follow?
        let has_norm = {
            let mut peek = parser.lines.clone();
            match peek.next() {
                Some((_, line)) => line
                    .split_whitespace()
                    .nth(1)
                    .map(|t| t == format!("{}.gamma", name))
                    .unwrap_or(false),
                None => false,
            }
        };
        let norm = if has_norm {
            let (_, _, gamma) = parse_tensor(&mut parser, &format!("{}.gamma", name))?;
            let (_, _, beta) = parse_tensor(&mut parser, &format!("{}.beta", name))?;
            let (_, _, running_mean) = parse_tensor(&mut parser, &format!("{}.running_mean", name))?;
            let (_, _, running_var) = parse_tensor(&mut parser, &format!("{}.running_var", name))?;
            Some(NormParams {
                gamma,
                beta,
                running_mean,
                running_var,
            })
        } else {
            None
        };
        layers.push(LayerParams {
            weight,
            bias,
            norm,
        });
        // Shape errors against the architecture surface from from_layers
        // below; catch obviously wrong weight shapes early for a better
        // line-context message.
        let expected = (widths[i + 1], widths[i]);
        if (rows, cols) != expected {
            return Err(Error::ShapeMismatch {
                tensor: format!("{}.weight", name),
                expected,
                found: (rows, cols),
            });
        }
    }

    if let Some((idx, line)) = parser.lines.next() {
        if !line.trim().is_empty() {
            return Err(Error::ModelFormat {
                line: idx + 1,
                reason: format!("trailing content `{}`", line),
            });
        }
    }

    ModelParams::from_layers(arch, layers)
}

#[cfg(test)]
mod tests {
    use super::super::{Architecture, ModelParams};
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(seed: u64, batchnorm: bool) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = rng.gen_range(4..12);
        let bottleneck = rng.gen_range(1..input);
        let arch = Architecture::new(input, vec![bottleneck]).unwrap();
        let mut model = ModelParams::init(&arch, batchnorm, seed).unwrap();
        // Perturb everything, including running stats, to non-default values.
        let mut vals = model.trainable_values();
        for v in &mut vals {
            *v += rng.gen_range(-2.0..2.0);
        }
        model.set_trainable_values(&vals);
        for layer in model.layers_mut() {
            if let Some(norm) = &mut layer.norm {
                for v in &mut norm.running_mean {
                    *v = rng.gen_range(-3.0..3.0);
                }
                for v in &mut norm.running_var {
                    *v = rng.gen_range(0.0..5.0);
                }
            }
        }
        model
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..10u64 {
            let model = random_model(seed, seed % 2 == 0);
            let path = dir.path().join(format!("m{}.model", seed));
            save_model(&model, &path).unwrap();
            let loaded = load_model(&path).unwrap();
            let a: Vec<u64> = model.trainable_values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = loaded.trainable_values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "seed {}", seed);
            assert_eq!(model_to_string(&model), model_to_string(&loaded));
        }
    }

    #[test]
    fn truncated_file_fails_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let model = random_model(3, true);
        let path = dir.path().join("full.model");
        save_model(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.len() / 2;
        let truncated = dir.path().join("cut.model");
        std::fs::write(&truncated, &text[..cut]).unwrap();
        assert!(load_model(&truncated).is_err());
    }

    #[test]
    fn mismatched_declared_size_names_the_layer() {
        let dir = tempfile::tempdir().unwrap();
        let model = random_model(4, false);
        let path = dir.path().join("m.model");
        save_model(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // Corrupt dec0.weight's declared column count.
        let corrupted: String = text
            .lines()
            .map(|l| {
                if l.starts_with("TENSOR dec0.weight") {
                    let mut parts: Vec<String> =
                        l.split_whitespace().map(|s| s.to_string()).collect();
                    let cols: usize = parts[3].parse().unwrap();
                    parts[3] = (cols + 1).to_string();
                    parts.join(" ")
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let bad = dir.path().join("bad.model");
        std::fs::write(&bad, corrupted).unwrap();
        match load_model(&bad) {
            Err(Error::ModelFormat { reason, .. }) => {
                assert!(reason.contains("dec0.weight"), "reason: {}", reason)
            }
            Err(Error::ShapeMismatch { tensor, .. }) => assert!(tensor.contains("dec0")),
            other => panic!("expected a shape/format error, got {:?}", other),
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.model");
        std::fs::write(&path, "AEMODEL v2\nARCH 4 2\n").unwrap();
        match load_model(&path) {
            Err(Error::ModelFormat { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected ModelFormat, got {:?}", other),
        }
    }

    #[test]
    fn fingerprint_tracks_parameter_changes() {
        let model = random_model(5, true);
        let fp1 = model_fingerprint(&model);
        assert_eq!(fp1.len(), 64);
        assert_eq!(fp1, model_fingerprint(&model), "stable");

        let mut other = model.clone();
        let mut vals = other.trainable_values();
        vals[0] += 1e-12;
        other.set_trainable_values(&vals);
        assert_ne!(fp1, model_fingerprint(&other));
    }

    #[test]
    fn infer_losses_agree_before_and_after_roundtrip() {
        use super::super::forward;
        let dir = tempfile::tempdir().unwrap();
        let model = random_model(6, true);
        let dim = model.arch().input_dim;
        let path = dir.path().join("m.model");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..10 {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            let a = forward(&model, &x).unwrap();
            let b = forward(&loaded, &x).unwrap();
            let la: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let lb: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
            assert_eq!(la, lb);
        }
    }
}
