//! Pipeline configuration.
//!
//! One TOML file captures every knob, using flat dotted keys
//! (`pooling.window_ms = 500`); every omitted key falls back to the same
//! default the owning module uses, so an empty file plus a `[logs]` table
//! is a complete experiment description. Relative paths resolve against
//! the config file's directory, which keeps a dataset directory
//! self-contained. The command line can override the output directory and
//! the experiment seed; the seed override feeds every stochastic choice
//! (pooling, weight init, shuffling, and the default test start).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use uav_ids_core::autoencoder::TrainConfig;
use uav_ids_core::detector::ThresholdMethod;
use uav_ids_core::engineering::{ClipPolicy, EmptyWindowPolicy, PoolingConfig};
use uav_ids_core::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsSection,
    /// session_id → raw log path. BTreeMap keeps command output in a
    /// stable (lexicographic) session order.
    #[serde(default)]
    pub logs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub pooling: PoolingSection,
    #[serde(default)]
    pub scaler: ScalerSection,
    #[serde(default)]
    pub architecture: ArchitectureSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub threshold: ThresholdSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub report: ReportSection,
    /// Command-line seed override; not a config-file key.
    #[serde(skip)]
    pub seed_override: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub category_map: PathBuf,
    pub annotations: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolingSection {
    pub window_ms: Option<u32>,
    pub rng_seed: Option<u64>,
    pub empty_window_policy: Option<EmptyWindowPolicyName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyWindowPolicyName {
    CarryForward,
    DropWindow,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalerSection {
    pub clip_policy: Option<ClipPolicyName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipPolicyName {
    ClipToUnit,
    PassThrough,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSection {
    #[serde(default = "default_encoder_dims")]
    pub encoder_dims: Vec<usize>,
}

fn default_encoder_dims() -> Vec<usize> {
    vec![24, 12, 6]
}

impl Default for ArchitectureSection {
    fn default() -> Self {
        ArchitectureSection {
            encoder_dims: default_encoder_dims(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_epsilon: Option<f64>,
    pub lambda_l1: Option<f64>,
    pub lambda_l2: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub rng_seed: Option<u64>,
    pub batchnorm_enabled: Option<bool>,
    pub batchnorm_momentum: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub method: Option<ThresholdMethodName>,
    pub percentile: Option<f64>,
    pub manual_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethodName {
    BenignPercentile,
    MaxBenign,
    Manual,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub format: Option<ReportFormat>,
}

/// What `report` emits: CSVs always; SVG plots unless format is `csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Svg,
}

fn session_id_ok(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl PipelineConfig {
    /// Read and validate a config file. Relative paths become absolute
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Error::BadConfig {
            reason: format!(
                "{}: {}",
                path.display(),
                e.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
            ),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        cfg.paths.category_map = resolve(&cfg.paths.category_map);
        cfg.paths.annotations = resolve(&cfg.paths.annotations);
        cfg.paths.output_dir = resolve(&cfg.paths.output_dir);
        for path in cfg.logs.values_mut() {
            *path = if path.is_absolute() {
                path.clone()
            } else {
                base.join(&path)
            };
        }
        for session in cfg.logs.keys() {
            if !session_id_ok(session) {
                return Err(Error::BadConfig {
                    reason: format!(
                        "session id `{}` may only contain letters, digits, `-`, `_`",
                        session
                    ),
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        let f = self.train_fraction();
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::BadConfig {
                reason: format!("split.train_fraction must lie in (0, 1), got {}", f),
            });
        }
        if let Some(w) = self.pooling.window_ms {
            if w == 0 {
                return Err(Error::BadConfig {
                    reason: "pooling.window_ms must be positive".to_string(),
                });
            }
        }
        self.threshold_method()?;
        Ok(())
    }

    /// Apply command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>) -> PipelineConfig {
        self.seed_override = seed;
        if let Some(out) = out {
            self.paths.output_dir = out;
        }
        self
    }

    /// Seed feeding every stochastic choice outside training (and training
    /// too when the command line overrides it).
    pub fn experiment_seed(&self) -> u64 {
        self.seed_override
            .or(self.training.rng_seed)
            .unwrap_or_else(|| TrainConfig::default().rng_seed)
    }

    pub fn pooling_config(&self) -> PoolingConfig {
        let d = PoolingConfig::default();
        PoolingConfig {
            window_ms: self.pooling.window_ms.unwrap_or(d.window_ms),
            rng_seed: self
                .seed_override
                .or(self.pooling.rng_seed)
                .unwrap_or(d.rng_seed),
            empty_window_policy: match self.pooling.empty_window_policy {
                Some(EmptyWindowPolicyName::CarryForward) => EmptyWindowPolicy::CarryForward,
                Some(EmptyWindowPolicyName::DropWindow) => EmptyWindowPolicy::DropWindow,
                None => d.empty_window_policy,
            },
        }
    }

    pub fn clip_policy(&self) -> ClipPolicy {
        match self.scaler.clip_policy {
            Some(ClipPolicyName::PassThrough) => ClipPolicy::PassThrough,
            _ => ClipPolicy::ClipToUnit,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        let t = &self.training;
        TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
            adam_beta1: t.adam_beta1.unwrap_or(d.adam_beta1),
            adam_beta2: t.adam_beta2.unwrap_or(d.adam_beta2),
            adam_epsilon: t.adam_epsilon.unwrap_or(d.adam_epsilon),
            lambda_l1: t.lambda_l1.unwrap_or(d.lambda_l1),
            lambda_l2: t.lambda_l2.unwrap_or(d.lambda_l2),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            epochs: t.epochs.unwrap_or(d.epochs),
            rng_seed: self.seed_override.or(t.rng_seed).unwrap_or(d.rng_seed),
            batchnorm_enabled: t.batchnorm_enabled.unwrap_or(d.batchnorm_enabled),
            batchnorm_momentum: t.batchnorm_momentum.unwrap_or(d.batchnorm_momentum),
        }
    }

    pub fn threshold_method(&self) -> Result<ThresholdMethod> {
        let method = self
            .threshold
            .method
            .unwrap_or(ThresholdMethodName::BenignPercentile);
        Ok(match method {
            ThresholdMethodName::BenignPercentile => {
                ThresholdMethod::BenignPercentile(self.threshold.percentile.unwrap_or(99.0))
            }
            ThresholdMethodName::MaxBenign => ThresholdMethod::MaxBenign,
            ThresholdMethodName::Manual => {
                let v = self.threshold.manual_value.ok_or_else(|| Error::BadConfig {
                    reason: "threshold.method = \"manual\" requires threshold.manual_value"
                        .to_string(),
                })?;
                ThresholdMethod::Manual(v)
            }
        })
    }

    pub fn train_fraction(&self) -> f64 {
        self.split.train_fraction.unwrap_or(0.8)
    }

    pub fn report_format(&self) -> ReportFormat {
        self.report.format.unwrap_or(ReportFormat::Svg)
    }

    pub fn out_dir(&self) -> &Path {
        &self.paths.output_dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("config.toml");
        std::fs::write(&path, body).unwrap();
        path
    }

    const PATHS: &str = "paths.category_map = \"categories.csv\"\n\
                         paths.annotations = \"annotations.csv\"\n";
    const LOGS: &str = "[logs]\nbenign-flight = \"benign.csv\"\n";

    /// Dotted keys must precede the `[logs]` table header or TOML would
    /// nest them under `logs`.
    fn with_overrides_block(overrides: &str) -> String {
        format!("{}{}{}", PATHS, overrides, LOGS)
    }

    const MINIMAL: &str = r#"
paths.category_map = "categories.csv"
paths.annotations = "annotations.csv"

[logs]
benign-flight = "benign.csv"
"#;

    #[test]
    fn minimal_config_gets_module_defaults() {
        let dir = tempdir().unwrap();
        let cfg = PipelineConfig::load(&write_config(dir.path(), MINIMAL)).unwrap();
        assert_eq!(cfg.train_config(), TrainConfig::default());
        assert_eq!(cfg.pooling_config(), PoolingConfig::default());
        assert_eq!(cfg.clip_policy(), ClipPolicy::ClipToUnit);
        assert_eq!(
            cfg.threshold_method().unwrap(),
            ThresholdMethod::BenignPercentile(99.0)
        );
        assert_eq!(cfg.train_fraction(), 0.8);
        assert_eq!(cfg.architecture.encoder_dims, vec![24, 12, 6]);
        assert_eq!(cfg.report_format(), ReportFormat::Svg);
        // Relative paths resolve against the config directory.
        assert_eq!(cfg.paths.category_map, dir.path().join("categories.csv"));
        assert_eq!(cfg.logs["benign-flight"], dir.path().join("benign.csv"));
        assert_eq!(cfg.out_dir(), dir.path().join("out"));
    }

    #[test]
    fn dotted_keys_override_defaults() {
        let dir = tempdir().unwrap();
        let body = with_overrides_block(
            "pooling.window_ms = 250\ntraining.epochs = 5\ntraining.rng_seed = 9\n\
             threshold.method = \"manual\"\nthreshold.manual_value = 0.5\n\
             split.train_fraction = 0.7\nreport.format = \"csv\"\n",
        );
        let cfg = PipelineConfig::load(&write_config(dir.path(), &body)).unwrap();
        assert_eq!(cfg.pooling_config().window_ms, 250);
        assert_eq!(cfg.train_config().epochs, 5);
        assert_eq!(cfg.train_config().rng_seed, 9);
        assert_eq!(
            cfg.threshold_method().unwrap(),
            ThresholdMethod::Manual(0.5)
        );
        assert_eq!(cfg.train_fraction(), 0.7);
        assert_eq!(cfg.report_format(), ReportFormat::Csv);
    }

    #[test]
    fn seed_override_wins_everywhere() {
        let dir = tempdir().unwrap();
        let body = with_overrides_block("pooling.rng_seed = 3\ntraining.rng_seed = 4\n");
        let cfg = PipelineConfig::load(&write_config(dir.path(), &body))
            .unwrap()
            .with_overrides(Some(42), None);
        assert_eq!(cfg.pooling_config().rng_seed, 42);
        assert_eq!(cfg.train_config().rng_seed, 42);
        assert_eq!(cfg.experiment_seed(), 42);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_one_line_errors() {
        let dir = tempdir().unwrap();
        let bad = with_overrides_block("pooling.windw_ms = 250\n");
        let err = PipelineConfig::load(&write_config(dir.path(), &bad)).unwrap_err();
        let msg = err.to_string();
        assert!(!msg.contains('\n'), "multi-line error: {:?}", msg);
        assert!(msg.contains("windw_ms"));

        let bad = with_overrides_block("split.train_fraction = 1.5\n");
        assert!(PipelineConfig::load(&write_config(dir.path(), &bad)).is_err());

        let bad = with_overrides_block("threshold.method = \"manual\"\n");
        assert!(PipelineConfig::load(&write_config(dir.path(), &bad)).is_err());
    }

    #[test]
    fn bad_session_ids_are_rejected() {
        let dir = tempdir().unwrap();
        let body = r#"
paths.category_map = "c.csv"
paths.annotations = "a.csv"

[logs]
"../escape" = "x.csv"
"#;
        assert!(PipelineConfig::load(&write_config(dir.path(), body)).is_err());
    }
}
