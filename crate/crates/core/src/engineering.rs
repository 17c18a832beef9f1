//! Window pooling and min-max scaling.
//!
//! Sensors report at different rates, so raw logs have unequal per-feature
//! lengths. Pooling unifies them: the session is cut into fixed windows
//! (500 ms by default, aligned to flight start, half-open) and one value per
//! feature per window is sampled uniformly from that window's records. The
//! sample is drawn from an RNG derived per (session, feature, window), so
//! results are reproducible and independent of evaluation order.
//!
//! Scaling maps each feature to the unit interval with the training extrema:
//! `x_scaled = (x - min) / (max - min)`. The scaler is fit on training data
//! only and re-applied verbatim at test time; test values outside the
//! training range clamp to [0, 1] under the default policy.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::seeding;
use crate::selection::FeatureCatalog;
use crate::telemetry::{FlightLog, Label};

/// Exact header of the persisted scaler file.
pub const SCALER_HEADER: &str = "feature_name,min,max";

/// What to do with a (feature, window) cell that has no records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmptyWindowPolicy {
    /// Repeat the feature's most recent pooled value; windows before the
    /// feature's first record are dropped entirely.
    CarryForward,
    /// Drop any window in which at least one feature has no records.
    DropWindow,
}

/// Pooling knobs. `window_ms` must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolingConfig {
    pub window_ms: u32,
    pub rng_seed: u64,
    pub empty_window_policy: EmptyWindowPolicy,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        PoolingConfig {
            window_ms: 500,
            rng_seed: 0,
            empty_window_policy: EmptyWindowPolicy::CarryForward,
        }
    }
}

/// How scaled values outside the training range are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipPolicy {
    /// Clamp to [0, 1] — keeps test inputs inside the box the model saw.
    ClipToUnit,
    /// Leave values as the raw affine image (may leave [0, 1]).
    PassThrough,
}

/// Per-feature training extrema plus the clip policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    /// (feature_name, min, max) in matrix column order.
    features: Vec<(String, f64, f64)>,
    pub clip_policy: ClipPolicy,
}

/// Pooled (and possibly scaled) data: one row per window, one column per
/// selected feature in catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedMatrix {
    feature_names: Vec<String>,
    values: Mat,
    /// Window start offsets, microseconds from flight start; one per row.
    window_starts: Vec<i64>,
    labels: Option<Vec<Label>>,
}

impl WindowedMatrix {
    pub fn new(
        feature_names: Vec<String>,
        values: Mat,
        window_starts: Vec<i64>,
        labels: Option<Vec<Label>>,
    ) -> Result<WindowedMatrix> {
        if values.cols() != feature_names.len() {
            return Err(Error::SchemaMismatch {
                context: "windowed matrix".to_string(),
                detail: format!(
                    "{} columns but {} feature names",
                    values.cols(),
                    feature_names.len()
                ),
            });
        }
        if values.rows() != window_starts.len() {
            return Err(Error::SchemaMismatch {
                context: "windowed matrix".to_string(),
                detail: format!(
                    "{} rows but {} window starts",
                    values.rows(),
                    window_starts.len()
                ),
            });
        }
        if let Some(l) = &labels {
            if l.len() != values.rows() {
                return Err(Error::SchemaMismatch {
                    context: "windowed matrix".to_string(),
                    detail: format!("{} rows but {} labels", values.rows(), l.len()),
                });
            }
        }
        if !values.is_finite() {
            return Err(Error::NonFinite {
                what: "windowed matrix entries".to_string(),
            });
        }
        Ok(WindowedMatrix {
            feature_names,
            values,
            window_starts,
            labels,
        })
    }

    pub fn n_windows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_features(&self) -> usize {
        self.values.cols()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn window_starts(&self) -> &[i64] {
        &self.window_starts
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Split into (first `idx` rows, rest), preserving order. Used for the
    /// time-ordered train/validation split.
    pub fn split_at_row(&self, idx: usize) -> (WindowedMatrix, WindowedMatrix) {
        let take = |range: std::ops::Range<usize>| {
            let mut m = Mat::zeros(range.len(), self.n_features());
            for (out_r, in_r) in range.clone().enumerate() {
                m.row_mut(out_r).copy_from_slice(self.values.row(in_r));
            }
            WindowedMatrix {
                feature_names: self.feature_names.clone(),
                values: m,
                window_starts: self.window_starts[range.clone()].to_vec(),
                labels: self.labels.as_ref().map(|l| l[range].to_vec()),
            }
        };
        (take(0..idx), take(idx..self.n_windows()))
    }

    /// Stack two matrices with identical schemas, rows of `self` first.
    pub fn vstack(&self, other: &WindowedMatrix) -> Result<WindowedMatrix> {
        if self.feature_names != other.feature_names {
            return Err(Error::SchemaMismatch {
                context: "vstack".to_string(),
                detail: "feature name lists differ".to_string(),
            });
        }
        if self.labels.is_some() != other.labels.is_some() {
            return Err(Error::SchemaMismatch {
                context: "vstack".to_string(),
                detail: "one matrix is labeled, the other is not".to_string(),
            });
        }
        let mut m = Mat::zeros(self.n_windows() + other.n_windows(), self.n_features());
        for r in 0..self.n_windows() {
            m.row_mut(r).copy_from_slice(self.values.row(r));
        }
        for r in 0..other.n_windows() {
            m.row_mut(self.n_windows() + r).copy_from_slice(other.values.row(r));
        }
        let mut starts = self.window_starts.clone();
        starts.extend_from_slice(&other.window_starts);
        let labels = self.labels.as_ref().map(|l| {
            let mut l = l.clone();
            l.extend_from_slice(other.labels.as_deref().unwrap());
            l
        });
        Ok(WindowedMatrix {
            feature_names: self.feature_names.clone(),
            values: m,
            window_starts: starts,
            labels,
        })
    }

    /// Rows whose label is Benign; errors if the matrix is unlabeled.
    pub fn benign_rows(&self) -> Result<WindowedMatrix> {
        let labels = self.labels.as_ref().ok_or_else(|| Error::SchemaMismatch {
            context: "benign_rows".to_string(),
            detail: "matrix has no labels".to_string(),
        })?;
        let keep: Vec<usize> = (0..self.n_windows())
            .filter(|&r| labels[r] == Label::Benign)
            .collect();
        let mut m = Mat::zeros(keep.len(), self.n_features());
        for (out_r, &in_r) in keep.iter().enumerate() {
            m.row_mut(out_r).copy_from_slice(self.values.row(in_r));
        }
        Ok(WindowedMatrix {
            feature_names: self.feature_names.clone(),
            values: m,
            window_starts: keep.iter().map(|&r| self.window_starts[r]).collect(),
            labels: Some(vec![Label::Benign; keep.len()]),
        })
    }

    /// Export as CSV: `window_start_us,label,<feature...>`. Values are
    /// written with shortest-round-trip formatting, so a reload is exact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("window_start_us,label");
        for name in &self.feature_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for r in 0..self.n_windows() {
            out.push_str(&self.window_starts[r].to_string());
            out.push(',');
            if let Some(l) = &self.labels {
                out.push_str(&l[r].to_string());
            }
            for v in self.values.row(r) {
                out.push(',');
                out.push_str(&format!("{}", v));
            }
            out.push('\n');
        }
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<WindowedMatrix> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(h) => h.map_err(|e| Error::io(path, e))?,
            None => {
                return Err(Error::BadHeader {
                    path: path.to_path_buf(),
                    expected: "window_start_us,label,<feature...>".to_string(),
                    found: "<empty file>".to_string(),
                })
            }
        };
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "window_start_us" || cols[1] != "label" {
            return Err(Error::BadHeader {
                path: path.to_path_buf(),
                expected: "window_start_us,label,<feature...>".to_string(),
                found: header.clone(),
            });
        }
        let feature_names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
        let n_features = feature_names.len();

        let mut starts = Vec::new();
        let mut labels: Vec<Option<Label>> = Vec::new();
        let mut data = Vec::new();
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n_features + 2 {
                return Err(Error::BadRow {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: format!(
                        "expected {} fields, found {}",
                        n_features + 2,
                        fields.len()
                    ),
                });
            }
            let start = fields[0].parse::<i64>().map_err(|_| Error::BadRow {
                path: path.to_path_buf(),
                line: lineno,
                reason: format!("bad window_start_us `{}`", fields[0]),
            })?;
            let label = if fields[1].is_empty() {
                None
            } else {
                Some(Label::parse(fields[1]).ok_or_else(|| Error::BadRow {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: format!("bad label `{}`", fields[1]),
                })?)
            };
            starts.push(start);
            labels.push(label);
            for f in &fields[2..] {
                let v = f.parse::<f64>().map_err(|_| Error::BadRow {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: format!("bad value `{}`", f),
                })?;
                data.push(v);
            }
        }
        let n_rows = starts.len();
        let labels = if labels.iter().all(|l| l.is_none()) {
            None
        } else if labels.iter().all(|l| l.is_some()) {
            Some(labels.into_iter().map(|l| l.unwrap()).collect())
        } else {
            return Err(Error::SchemaMismatch {
                context: format!("matrix file {}", path.display()),
                detail: "mix of labeled and unlabeled rows".to_string(),
            });
        };
        WindowedMatrix::new(feature_names, Mat::from_vec(n_rows, n_features, data), starts, labels)
    }
}

/// Pool one log into a fixed-width window matrix.
///
/// For every (feature, window) cell with at least one record, one record's
/// value is sampled uniformly using a generator derived from
/// `(rng_seed, session_id, feature_name, window_index)` — rerunning with the
/// same seed reproduces the matrix bit for bit, and pooling cells in any
/// order (or in parallel) gives the same result. Cells with no records are
/// resolved by the configured [`EmptyWindowPolicy`].
pub fn pool_timestamps(
    log: &FlightLog,
    catalog: &FeatureCatalog,
    cfg: &PoolingConfig,
) -> Result<WindowedMatrix> {
    if cfg.window_ms == 0 {
        return Err(Error::BadConfig {
            reason: "window_ms must be positive".to_string(),
        });
    }
    let features: Vec<String> = catalog
        .selected_features()
        .into_iter()
        .map(|s| s.to_string())
        .collect();
    if features.is_empty() {
        return Err(Error::EmptyInput {
            what: "selected feature set".to_string(),
        });
    }

    let win_us = cfg.window_ms as i64 * 1000;
    let n_windows = log.window_count(cfg.window_ms) as usize;

    // Bucket record values per (column, window), preserving log order.
    let col_of: std::collections::HashMap<&str, usize> = features
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut cells: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); n_windows]; features.len()];
    for rec in log.records() {
        if let Some(&c) = col_of.get(rec.feature_name.as_str()) {
            let w = (rec.timestamp_us / win_us) as usize;
            if w < n_windows {
                cells[c][w].push(rec.value);
            }
        }
    }

    for (c, feature) in features.iter().enumerate() {
        if cells[c].iter().all(|samples| samples.is_empty()) {
            return Err(Error::FeatureEmpty {
                feature: feature.clone(),
                session: log.session_id().to_string(),
            });
        }
    }

    // Sample one value per non-empty cell.
    let mut pooled: Vec<Vec<Option<f64>>> = vec![vec![None; n_windows]; features.len()];
    for (c, feature) in features.iter().enumerate() {
        for (w, samples) in cells[c].iter().enumerate() {
            if samples.is_empty() {
                continue;
            }
            let mut rng =
                seeding::cell_rng(cfg.rng_seed, log.session_id(), feature, w as u64);
            let pick = rng.gen_range(0..samples.len());
            pooled[c][w] = Some(samples[pick]);
        }
    }

    // Resolve empty cells.
    let keep_row: Vec<bool> = match cfg.empty_window_policy {
        EmptyWindowPolicy::CarryForward => {
            for col in pooled.iter_mut() {
                let mut last: Option<f64> = None;
                for cell in col.iter_mut() {
                    match *cell {
                        Some(v) => last = Some(v),
                        None => *cell = last,
                    }
                }
            }
            // Only leading windows (before some feature's first record)
            // can still be empty.
            (0..n_windows)
                .map(|w| pooled.iter().all(|col| col[w].is_some()))
                .collect()
        }
        EmptyWindowPolicy::DropWindow => (0..n_windows)
            .map(|w| pooled.iter().all(|col| col[w].is_some()))
            .collect(),
    };

    let kept: Vec<usize> = (0..n_windows).filter(|&w| keep_row[w]).collect();
    let mut values = Mat::zeros(kept.len(), features.len());
    let mut starts = Vec::with_capacity(kept.len());
    let mut labels = Vec::with_capacity(kept.len());
    for (r, &w) in kept.iter().enumerate() {
        for c in 0..features.len() {
            values.set(r, c, pooled[c][w].expect("kept rows are fully populated"));
        }
        let start = w as i64 * win_us;
        starts.push(start);
        labels.push(log.window_label(start, win_us));
    }

    WindowedMatrix::new(features, values, starts, Some(labels))
}

impl ScalerParams {
    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|(n, _, _)| n.as_str()).collect()
    }

    pub fn bounds(&self) -> &[(String, f64, f64)] {
        &self.features
    }

    /// Persist as CSV with shortest-round-trip decimal formatting (exact
    /// on reload). The clip policy is configuration, not data, and is not
    /// stored in the file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(SCALER_HEADER);
        out.push('\n');
        for (name, min, max) in &self.features {
            out.push_str(&format!("{},{},{}\n", name, min, max));
        }
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, clip_policy: ClipPolicy) -> Result<ScalerParams> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(h) => h.map_err(|e| Error::io(path, e))?,
            None => String::new(),
        };
        if header != SCALER_HEADER {
            return Err(Error::BadHeader {
                path: path.to_path_buf(),
                expected: SCALER_HEADER.to_string(),
                found: header,
            });
        }
        let mut features = Vec::new();
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::BadRow {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let min = fields[1].parse::<f64>().map_err(|_| Error::BadRow {
                path: path.to_path_buf(),
                line: lineno,
                reason: format!("bad min `{}`", fields[1]),
            })?;
            let max = fields[2].parse::<f64>().map_err(|_| Error::BadRow {
                path: path.to_path_buf(),
                line: lineno,
                reason: format!("bad max `{}`", fields[2]),
            })?;
            if !(min.is_finite() && max.is_finite()) || max < min {
                return Err(Error::BadRow {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: format!("invalid bounds min={} max={}", fields[1], fields[2]),
                });
            }
            features.push((fields[0].to_string(), min, max));
        }
        Ok(ScalerParams {
            features,
            clip_policy,
        })
    }
}

/// Fit per-column extrema on training data. Errors on a constant column,
/// which the selection stage should have dropped as tranquil.
pub fn fit_scaler(train: &WindowedMatrix, clip_policy: ClipPolicy) -> Result<ScalerParams> {
    if train.n_windows() == 0 {
        return Err(Error::EmptyInput {
            what: "training matrix for scaler fit".to_string(),
        });
    }
    let mut features = Vec::with_capacity(train.n_features());
    for c in 0..train.n_features() {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for r in 0..train.n_windows() {
            let v = train.values().get(r, c);
            min = min.min(v);
            max = max.max(v);
        }
        if min == max {
            return Err(Error::ConstantColumn {
                feature: train.feature_names()[c].clone(),
            });
        }
        features.push((train.feature_names()[c].clone(), min, max));
    }
    Ok(ScalerParams {
        features,
        clip_policy,
    })
}

/// Map every entry through `(x - min) / (max - min)`, clamping per policy.
/// Training extrema map to exactly 0 and 1: `(min-min)/(max-min)` is `0/d`
/// and `(max-min)/(max-min)` is `d/d`, both exact in IEEE arithmetic.
pub fn apply_scaler(m: &WindowedMatrix, s: &ScalerParams) -> Result<WindowedMatrix> {
    check_schema(m, s)?;
    let mut values = Mat::zeros(m.n_windows(), m.n_features());
    for c in 0..m.n_features() {
        let (_, min, max) = s.features[c];
        let d = max - min;
        for r in 0..m.n_windows() {
            let mut y = (m.values().get(r, c) - min) / d;
            if s.clip_policy == ClipPolicy::ClipToUnit {
                y = y.clamp(0.0, 1.0);
            }
            values.set(r, c, y);
        }
    }
    WindowedMatrix::new(
        m.feature_names().to_vec(),
        values,
        m.window_starts().to_vec(),
        m.labels().map(|l| l.to_vec()),
    )
}

/// Inverse of [`apply_scaler`] under PassThrough: `x = y*(max-min) + min`.
pub fn unscale(m: &WindowedMatrix, s: &ScalerParams) -> Result<WindowedMatrix> {
    check_schema(m, s)?;
    let mut values = Mat::zeros(m.n_windows(), m.n_features());
    for c in 0..m.n_features() {
        let (_, min, max) = s.features[c];
        let d = max - min;
        for r in 0..m.n_windows() {
            values.set(r, c, m.values().get(r, c) * d + min);
        }
    }
    WindowedMatrix::new(
        m.feature_names().to_vec(),
        values,
        m.window_starts().to_vec(),
        m.labels().map(|l| l.to_vec()),
    )
}

fn check_schema(m: &WindowedMatrix, s: &ScalerParams) -> Result<()> {
    if m.n_features() != s.features.len()
        || m.feature_names()
            .iter()
            .zip(&s.features)
            .any(|(a, (b, _, _))| a != b)
    {
        return Err(Error::SchemaMismatch {
            context: "scaler application".to_string(),
            detail: format!(
                "matrix columns [{}] do not match scaler columns [{}]",
                m.feature_names().join(" "),
                s.feature_names().join(" ")
            ),
        });
    }
    Ok(())
}
