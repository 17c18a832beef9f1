//! Window scoring, threshold calibration, verdicts, and evaluation.
//!
//! A trained model assigns every window a reconstruction loss; benign
//! windows reconstruct well and attack windows do not, so the loss itself is
//! the anomaly score. A threshold calibrated on benign losses alone turns
//! scores into verdicts: strictly above the threshold means attack. The
//! evaluation summary compares verdicts against ground-truth labels and
//! describes the two loss distributions (confusion counts, precision /
//! recall / F1, per-class quartiles, and the attack-to-benign mean ratio).

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::autoencoder::{forward, reconstruction_loss, ModelParams};
use crate::engineering::WindowedMatrix;
use crate::error::{Error, Result};
use crate::telemetry::Label;

/// Exact header of the persisted detection-result file.
pub const DETECTION_HEADER: &str = "window_start_us,loss,verdict,label";

/// How the verdict cutoff is chosen from benign calibration losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMethod {
    /// Nearest-rank percentile of the calibration losses; `p` in (0, 100].
    BenignPercentile(f64),
    /// Maximum calibration loss — zero false positives on the calibration
    /// set by construction.
    MaxBenign,
    /// Operator-supplied cutoff; calibration losses are ignored.
    Manual(f64),
}

/// A calibrated verdict cutoff. Losses strictly above `value` are attacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub method: ThresholdMethod,
    /// Number of benign losses the calibration saw.
    pub calibration_size: usize,
}

/// One scored window with its verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowVerdict {
    /// Microseconds from flight start.
    pub window_start_us: i64,
    pub loss: f64,
    pub verdict: Label,
}

/// Verdicts for a whole session plus the cutoff and model that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub windows: Vec<WindowVerdict>,
    pub threshold: Threshold,
    /// Fingerprint of the scoring model (hex SHA-256 of its canonical text).
    pub model_fingerprint: String,
}

/// Five-number summary of a loss sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Compute from a non-empty sample. Quantiles interpolate linearly
    /// between order statistics at rank `(n - 1) * p`.
    pub fn from_sample(sample: &[f64]) -> Result<Quartiles> {
        if sample.is_empty() {
            return Err(Error::EmptyInput {
                what: "quartile sample".to_string(),
            });
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "quartile sample".to_string(),
            });
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let quantile = |p: f64| -> f64 {
            let h = (sorted.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        };
        Ok(Quartiles {
            min: sorted[0],
            q1: quantile(0.25),
            median: quantile(0.5),
            q3: quantile(0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Verdict quality against ground truth. "Positive" means an attack
/// verdict. Quartiles and the separation ratio describe losses grouped by
/// *label*, so they characterize the two true distributions regardless of
/// where the threshold fell; a class absent from the labels leaves its
/// fields empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No attack verdicts were issued, so precision was vacuous and is
    /// reported as 1.
    pub precision_degenerate: bool,
    /// No attack labels exist, so recall was vacuous and is reported as 1.
    pub recall_degenerate: bool,
    pub benign_quartiles: Option<Quartiles>,
    pub attack_quartiles: Option<Quartiles>,
    /// mean(attack-labeled losses) / mean(benign-labeled losses); empty when
    /// either class is absent or the benign mean is zero.
    pub separation: Option<f64>,
}

/// Score every row of a scaled matrix: inference-mode reconstruction loss,
/// in row order. The matrix must have exactly the model's input width.
pub fn score(model: &ModelParams, data: &WindowedMatrix) -> Result<Vec<(i64, f64)>> {
    if data.n_features() != model.arch().input_dim {
        return Err(Error::SchemaMismatch {
            context: "score".to_string(),
            detail: format!(
                "matrix has {} features but the model expects {}",
                data.n_features(),
                model.arch().input_dim
            ),
        });
    }
    let mut out = Vec::with_capacity(data.n_windows());
    for r in 0..data.n_windows() {
        let row = data.row(r);
        let recon = forward(model, row)?;
        let loss = reconstruction_loss(&recon, row)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: format!("reconstruction loss of window row {}", r),
            });
        }
        out.push((data.window_starts()[r], loss));
    }
    Ok(out)
}

/// Choose the verdict cutoff from benign losses.
///
/// `BenignPercentile(p)` takes the nearest-rank percentile: the smallest
/// calibration loss with at least `p` percent of the sample at or below it.
/// `MaxBenign` takes the maximum. `Manual` passes its value through
/// unchanged. The losses must be non-empty and finite in every case, and
/// the resulting cutoff must be non-negative.
pub fn calibrate_threshold(benign_losses: &[f64], method: ThresholdMethod) -> Result<Threshold> {
    if benign_losses.is_empty() {
        return Err(Error::EmptyInput {
            what: "calibration losses".to_string(),
        });
    }
    if benign_losses.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "calibration losses".to_string(),
        });
    }
    let value = match method {
        ThresholdMethod::BenignPercentile(p) => {
            if !(p > 0.0 && p <= 100.0) {
                return Err(Error::BadConfig {
                    reason: format!("percentile must be in (0, 100], got {}", p),
                });
            }
            let mut sorted = benign_losses.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            let rank = ((p / 100.0) * n as f64).ceil() as usize;
            sorted[rank.clamp(1, n) - 1]
        }
        ThresholdMethod::MaxBenign => benign_losses.iter().cloned().fold(f64::MIN, f64::max),
        ThresholdMethod::Manual(v) => {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "manual threshold".to_string(),
                });
            }
            v
        }
    };
    if value < 0.0 {
        return Err(Error::BadConfig {
            reason: format!("threshold must be non-negative, got {}", value),
        });
    }
    Ok(Threshold {
        value,
        method,
        calibration_size: benign_losses.len(),
    })
}

/// Turn scores into verdicts: loss strictly above the cutoff is an attack,
/// a tie stays benign.
pub fn detect(
    scores: &[(i64, f64)],
    threshold: Threshold,
    model_fingerprint: String,
) -> DetectionResult {
    let windows = scores
        .iter()
        .map(|&(start, loss)| WindowVerdict {
            window_start_us: start,
            loss,
            verdict: if loss > threshold.value {
                Label::Attack
            } else {
                Label::Benign
            },
        })
        .collect();
    DetectionResult {
        windows,
        threshold,
        model_fingerprint,
    }
}

/// Pairwise ranking AUC: the probability that a uniformly drawn
/// attack-labeled loss exceeds a uniformly drawn benign-labeled loss, ties
/// counting half. 1.0 means the classes separate perfectly by loss alone.
pub fn ranking_auc(benign_losses: &[f64], attack_losses: &[f64]) -> Result<f64> {
    if benign_losses.is_empty() || attack_losses.is_empty() {
        return Err(Error::EmptyInput {
            what: "AUC loss class".to_string(),
        });
    }
    let mut favorable = 0.0;
    for &a in attack_losses {
        for &b in benign_losses {
            if a > b {
                favorable += 1.0;
            } else if a == b {
                favorable += 0.5;
            }
        }
    }
    Ok(favorable / (benign_losses.len() * attack_losses.len()) as f64)
}

/// Compare verdicts against ground truth, one label per window in order.
pub fn evaluate(result: &DetectionResult, labels: &[Label]) -> Result<EvalSummary> {
    if labels.len() != result.windows.len() {
        return Err(Error::SchemaMismatch {
            context: "evaluate".to_string(),
            detail: format!(
                "{} verdicts but {} labels",
                result.windows.len(),
                labels.len()
            ),
        });
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    let mut benign_losses = Vec::new();
    let mut attack_losses = Vec::new();
    for (w, &label) in result.windows.iter().zip(labels) {
        match (w.verdict, label) {
            (Label::Attack, Label::Attack) => tp += 1,
            (Label::Attack, Label::Benign) => fp += 1,
            (Label::Benign, Label::Benign) => tn += 1,
            (Label::Benign, Label::Attack) => fn_ += 1,
        }
        match label {
            Label::Benign => benign_losses.push(w.loss),
            Label::Attack => attack_losses.push(w.loss),
        }
    }
    let precision_degenerate = tp + fp == 0;
    let recall_degenerate = tp + fn_ == 0;
    let precision = if precision_degenerate {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if recall_degenerate {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let separation = if benign_losses.is_empty() || attack_losses.is_empty() {
        None
    } else {
        let b = mean(&benign_losses);
        (b > 0.0).then(|| mean(&attack_losses) / b)
    };
    Ok(EvalSummary {
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        precision,
        recall,
        f1,
        precision_degenerate,
        recall_degenerate,
        benign_quartiles: match benign_losses.is_empty() {
            true => None,
            false => Some(Quartiles::from_sample(&benign_losses)?),
        },
        attack_quartiles: match attack_losses.is_empty() {
            true => None,
            false => Some(Quartiles::from_sample(&attack_losses)?),
        },
        separation,
    })
}

impl DetectionResult {
    /// Export one CSV row per window. The label column carries ground truth
    /// when given (one per window, in order) and stays empty otherwise.
    pub fn save(&self, labels: Option<&[Label]>, path: &Path) -> Result<()> {
        if let Some(l) = labels {
            if l.len() != self.windows.len() {
                return Err(Error::SchemaMismatch {
                    context: "detection export".to_string(),
                    detail: format!("{} verdicts but {} labels", self.windows.len(), l.len()),
                });
            }
        }
        let mut out = String::new();
        out.push_str(DETECTION_HEADER);
        out.push('\n');
        for (i, w) in self.windows.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                w.window_start_us,
                w.loss,
                w.verdict,
                labels.map(|l| l[i].to_string()).unwrap_or_default()
            ));
        }
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Read back a detection export: the scored windows and, if the label
/// column was filled, the ground truth. Mixed labeled/unlabeled rows are
/// rejected.
pub fn load_detection(path: &Path) -> Result<(Vec<WindowVerdict>, Option<Vec<Label>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .unwrap_or_default();
    if header != DETECTION_HEADER {
        return Err(Error::BadHeader {
            path: path.to_path_buf(),
            expected: DETECTION_HEADER.to_string(),
            found: header,
        });
    }
    let mut windows = Vec::new();
    let mut labels: Vec<Option<Label>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let bad_row = |reason: String| Error::BadRow {
            path: path.to_path_buf(),
            line: lineno,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad_row(format!("expected 4 fields, found {}", fields.len())));
        }
        let window_start_us = fields[0]
            .parse::<i64>()
            .map_err(|_| bad_row(format!("bad window_start_us `{}`", fields[0])))?;
        let loss = fields[1]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad_row(format!("bad loss `{}`", fields[1])))?;
        let verdict = Label::parse(fields[2])
            .ok_or_else(|| bad_row(format!("bad verdict `{}`", fields[2])))?;
        let label = if fields[3].is_empty() {
            None
        } else {
            Some(
                Label::parse(fields[3])
                    .ok_or_else(|| bad_row(format!("bad label `{}`", fields[3])))?,
            )
        };
        windows.push(WindowVerdict {
            window_start_us,
            loss,
            verdict,
        });
        labels.push(label);
    }
    let labels = if labels.iter().all(|l| l.is_none()) {
        None
    } else if labels.iter().all(|l| l.is_some()) {
        Some(labels.into_iter().map(|l| l.unwrap()).collect())
    } else {
        return Err(Error::SchemaMismatch {
            context: format!("detection file {}", path.display()),
            detail: "mix of labeled and unlabeled rows".to_string(),
        });
    };
    Ok((windows, labels))
}

impl EvalSummary {
    /// Export as flat `key=value` lines. Keys for an absent class are
    /// omitted, so a benign-only session yields a single-class report.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_key_values().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("true_positives", self.true_positives.to_string());
        kv("false_positives", self.false_positives.to_string());
        kv("true_negatives", self.true_negatives.to_string());
        kv("false_negatives", self.false_negatives.to_string());
        kv("precision", format!("{}", self.precision));
        kv("recall", format!("{}", self.recall));
        kv("f1", format!("{}", self.f1));
        kv(
            "precision_degenerate",
            self.precision_degenerate.to_string(),
        );
        kv("recall_degenerate", self.recall_degenerate.to_string());
        let mut class = |prefix: &str, q: &Option<Quartiles>| {
            if let Some(q) = q {
                for (suffix, v) in [
                    ("min", q.min),
                    ("q1", q.q1),
                    ("median", q.median),
                    ("q3", q.q3),
                    ("max", q.max),
                ] {
                    out.push_str(&format!("{}_loss_{}={}\n", prefix, suffix, v));
                }
            }
        };
        class("benign", &self.benign_quartiles);
        class("attack", &self.attack_quartiles);
        if let Some(s) = self.separation {
            out.push_str(&format!("separation={}\n", s));
        }
        out
    }
}

impl Threshold {
    /// Export as flat `key=value` lines mirroring the summary format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let method = match self.method {
            ThresholdMethod::BenignPercentile(p) => format!("benign_percentile {}", p),
            ThresholdMethod::MaxBenign => "max_benign".to_string(),
            ThresholdMethod::Manual(v) => format!("manual {}", v),
        };
        let text = format!(
            "value={}\nmethod={}\ncalibration_size={}\n",
            self.value, method, self.calibration_size
        );
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Threshold> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value = None;
        let mut method = None;
        let mut calibration_size = None;
        for line in text.lines() {
            let bad = |detail: &str| Error::SchemaMismatch {
                context: format!("threshold file {}", path.display()),
                detail: detail.to_string(),
            };
            let (k, v) = line.split_once('=').ok_or_else(|| bad("line without `=`"))?;
            match k {
                "value" => {
                    value = Some(v.parse::<f64>().map_err(|_| bad("bad value"))?);
                }
                "method" => {
                    method = Some(match v.split_once(' ') {
                        Some(("benign_percentile", p)) => ThresholdMethod::BenignPercentile(
                            p.parse().map_err(|_| bad("bad percentile"))?,
                        ),
                        Some(("manual", m)) => {
                            ThresholdMethod::Manual(m.parse().map_err(|_| bad("bad manual"))?)
                        }
                        None if v == "max_benign" => ThresholdMethod::MaxBenign,
                        _ => return Err(bad("unknown method")),
                    });
                }
                "calibration_size" => {
                    calibration_size =
                        Some(v.parse::<usize>().map_err(|_| bad("bad calibration_size"))?);
                }
                _ => return Err(bad("unknown key")),
            }
        }
        let missing = |detail: &str| Error::SchemaMismatch {
            context: format!("threshold file {}", path.display()),
            detail: detail.to_string(),
        };
        Ok(Threshold {
            value: value.ok_or_else(|| missing("missing value"))?,
            method: method.ok_or_else(|| missing("missing method"))?,
            calibration_size: calibration_size.ok_or_else(|| missing("missing calibration_size"))?,
        })
    }
}
