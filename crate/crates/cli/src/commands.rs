//! The five pipeline commands.
//!
//! `prepare` turns raw logs into pooled window matrices plus a feature
//! catalog and a scaler fit on the benign training split; `train` fits the
//! autoencoder on that split; `detect` calibrates a threshold on the benign
//! validation split and writes per-window verdicts for one session; `eval`
//! summarizes verdicts against ground truth; `report` renders plot-ready
//! CSVs and SVG figures. Every command is deterministic given the config
//! and seed, and reruns produce byte-identical artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveTime;
use rand::Rng;

use uav_ids_core::autoencoder::{
    load_model, model_fingerprint, save_model, train, Architecture,
};
use uav_ids_core::detector::{
    calibrate_threshold, detect, evaluate, load_detection, score, DetectionResult, Quartiles,
    Threshold,
};
use uav_ids_core::engineering::{apply_scaler, fit_scaler, pool_timestamps, ScalerParams, WindowedMatrix};
use uav_ids_core::selection::{load_category_map, select_features};
use uav_ids_core::telemetry::{
    apply_annotation, parse_annotations, parse_log, FlightLog, Label, SessionAnnotation,
};
use uav_ids_core::{seeding, Error, Result};

use crate::config::{PipelineConfig, ReportFormat};
use crate::svg;

/// Artifact layout under the output directory.
pub struct Artifacts {
    out: PathBuf,
}

impl Artifacts {
    pub fn new(out: &Path) -> Artifacts {
        Artifacts { out: out.to_path_buf() }
    }

    pub fn catalog(&self) -> PathBuf {
        self.out.join("catalog.csv")
    }

    pub fn scaler(&self) -> PathBuf {
        self.out.join("scaler.csv")
    }

    pub fn session_matrix(&self, session: &str) -> PathBuf {
        self.out.join("sessions").join(format!("{}.csv", session))
    }

    pub fn train_split(&self) -> PathBuf {
        self.out.join("split").join("train.csv")
    }

    pub fn validation_split(&self) -> PathBuf {
        self.out.join("split").join("validation.csv")
    }

    pub fn model(&self) -> PathBuf {
        self.out.join("model.txt")
    }

    pub fn trace(&self) -> PathBuf {
        self.out.join("trace.csv")
    }

    pub fn threshold(&self) -> PathBuf {
        self.out.join("threshold.txt")
    }

    pub fn detections(&self, session: &str) -> PathBuf {
        self.out.join("detections").join(format!("{}.csv", session))
    }

    pub fn eval_summary(&self, session: &str) -> PathBuf {
        self.out.join("eval").join(format!("{}.txt", session))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_annotated_logs(cfg: &PipelineConfig) -> Result<Vec<(FlightLog, usize)>> {
    let annotations = parse_annotations(&cfg.paths.annotations)?;
    let mut logs = Vec::new();
    for (session, path) in &cfg.logs {
        let (log, report) = parse_log(path, session)?;
        let sa = annotations
            .iter()
            .find(|a| &a.session_id == session)
            .ok_or_else(|| Error::BadConfig {
                reason: format!(
                    "no annotation row for session `{}` in {}",
                    session,
                    cfg.paths.annotations.display()
                ),
            })?;
        logs.push((apply_annotation(log, sa)?, report.rows_rejected));
    }
    Ok(logs)
}

fn session_annotation(cfg: &PipelineConfig, session: &str) -> Result<SessionAnnotation> {
    parse_annotations(&cfg.paths.annotations)?
        .into_iter()
        .find(|a| a.session_id == session)
        .ok_or_else(|| Error::BadConfig {
            reason: format!("no annotation row for session `{}`", session),
        })
}

fn require_known_session(cfg: &PipelineConfig, session: &str) -> Result<()> {
    if cfg.logs.contains_key(session) {
        Ok(())
    } else {
        Err(Error::BadConfig {
            reason: format!(
                "unknown session `{}`; configured sessions: {}",
                session,
                cfg.logs.keys().cloned().collect::<Vec<_>>().join(", ")
            ),
        })
    }
}

/// Parse logs, select features, pool every session, and fit the scaler on
/// the time-ordered benign training split.
pub fn cmd_prepare(cfg: &PipelineConfig) -> Result<String> {
    if cfg.logs.is_empty() {
        return Err(Error::BadConfig {
            reason: "config has no [logs] entries".to_string(),
        });
    }
    let entries = load_category_map(&cfg.paths.category_map)?;
    let logs = load_annotated_logs(cfg)?;
    let bare_logs: Vec<FlightLog> = logs.iter().map(|(l, _)| l.clone()).collect();
    let (catalog, selection) = select_features(&bare_logs, &entries)?;

    let artifacts = Artifacts::new(cfg.out_dir());
    ensure_dir(&artifacts.out)?;
    ensure_dir(&artifacts.out.join("sessions"))?;
    ensure_dir(&artifacts.out.join("split"))?;
    catalog.save(&artifacts.catalog())?;

    let pooling = cfg.pooling_config();
    let mut train_pool: Option<WindowedMatrix> = None;
    let mut validation_pool: Option<WindowedMatrix> = None;
    let mut summary = String::new();
    write!(summary, "{}", selection).unwrap();
    for (log, rejected) in &logs {
        let matrix = pool_timestamps(log, &catalog, &pooling)?;
        matrix.save(&artifacts.session_matrix(log.session_id()))?;
        writeln!(
            summary,
            "session {}: {} windows ({} rejected rows)",
            log.session_id(),
            matrix.n_windows(),
            rejected
        )
        .unwrap();
        if log.annotation().is_none() {
            // Benign session: contributes to the time-ordered 80/20 split.
            let cut = (matrix.n_windows() as f64 * cfg.train_fraction()).floor() as usize;
            if cut == 0 || cut == matrix.n_windows() {
                return Err(Error::BadConfig {
                    reason: format!(
                        "benign session `{}` has too few windows ({}) to split",
                        log.session_id(),
                        matrix.n_windows()
                    ),
                });
            }
            let (head, tail) = matrix.split_at_row(cut);
            train_pool = Some(match train_pool {
                Some(acc) => acc.vstack(&head)?,
                None => head,
            });
            validation_pool = Some(match validation_pool {
                Some(acc) => acc.vstack(&tail)?,
                None => tail,
            });
        }
    }
    let train_pool = train_pool.ok_or_else(|| Error::EmptyInput {
        what: "benign training windows (no session without an attack annotation)".to_string(),
    })?;
    let validation_pool = validation_pool.unwrap();

    let scaler = fit_scaler(&train_pool, cfg.clip_policy())?;
    scaler.save(&artifacts.scaler())?;
    train_pool.save(&artifacts.train_split())?;
    validation_pool.save(&artifacts.validation_split())?;
    writeln!(
        summary,
        "benign split: {} training windows, {} validation windows",
        train_pool.n_windows(),
        validation_pool.n_windows()
    )
    .unwrap();
    Ok(summary)
}

/// Train the autoencoder on the scaled benign training split.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<String> {
    let artifacts = Artifacts::new(cfg.out_dir());
    let train_raw = WindowedMatrix::load(&artifacts.train_split())?;
    let scaler = ScalerParams::load(&artifacts.scaler(), cfg.clip_policy())?;
    let scaled = apply_scaler(&train_raw, &scaler)?;
    let arch = Architecture::new(scaled.n_features(), cfg.architecture.encoder_dims.clone())?;
    let (model, trace) = train(&scaled, &arch, &cfg.train_config())?;
    save_model(&model, &artifacts.model())?;
    trace.save(&artifacts.trace())?;
    Ok(format!(
        "trained {} epochs on {} windows; final mean loss {:.6}\nmodel fingerprint {}",
        trace.epochs.len(),
        scaled.n_windows(),
        trace.epochs.last().map(|e| e.mean_loss).unwrap_or(f64::NAN),
        model_fingerprint(&model)
    ))
}

fn micros_from(start: NaiveTime, t: NaiveTime) -> i64 {
    t.signed_duration_since(start)
        .num_microseconds()
        .expect("clock offsets fit i64 microseconds")
}

/// Index of the first scored window: an explicit pre-attack start time, or
/// a seeded uniform choice among the pre-attack windows.
fn resolve_test_start(
    cfg: &PipelineConfig,
    session: &str,
    matrix: &WindowedMatrix,
    annotation: &SessionAnnotation,
    test_start: Option<&str>,
) -> Result<usize> {
    let first_attack = matrix
        .labels()
        .and_then(|l| l.iter().position(|x| *x == Label::Attack));
    match test_start {
        Some(text) => {
            let t = NaiveTime::parse_from_str(text, "%H:%M:%S").map_err(|_| {
                Error::BadClockTime {
                    value: text.to_string(),
                }
            })?;
            let offset = micros_from(annotation.flight_start, t);
            if offset < 0 {
                return Err(Error::BadConfig {
                    reason: format!("test start {} is before the flight start", text),
                });
            }
            if let Some(attack) = &annotation.attack {
                if t >= attack.attack_start {
                    return Err(Error::BadConfig {
                        reason: format!(
                            "test start {} is not before the attack start {}",
                            text,
                            attack.attack_start.format("%H:%M:%S")
                        ),
                    });
                }
            }
            matrix
                .window_starts()
                .iter()
                .position(|&s| s >= offset)
                .ok_or_else(|| Error::BadConfig {
                    reason: format!("test start {} is past the end of the session", text),
                })
        }
        None => match first_attack {
            // Seeded default stands in for a randomly chosen pre-attack
            // start; benign sessions score in full.
            Some(k) if k > 0 => {
                let mut rng = seeding::labeled_rng(
                    cfg.experiment_seed(),
                    &format!("test-start:{}", session),
                );
                Ok(rng.gen_range(0..k))
            }
            _ => Ok(0),
        },
    }
}

/// Calibrate the threshold on the benign validation split and write
/// per-window verdicts for one session.
pub fn cmd_detect(cfg: &PipelineConfig, session: &str, test_start: Option<&str>) -> Result<String> {
    require_known_session(cfg, session)?;
    let artifacts = Artifacts::new(cfg.out_dir());
    let model = load_model(&artifacts.model())?;
    let fingerprint = model_fingerprint(&model);
    let scaler = ScalerParams::load(&artifacts.scaler(), cfg.clip_policy())?;

    let validation = WindowedMatrix::load(&artifacts.validation_split())?;
    let validation_losses: Vec<f64> = score(&model, &apply_scaler(&validation, &scaler)?)?
        .iter()
        .map(|&(_, l)| l)
        .collect();
    let threshold = calibrate_threshold(&validation_losses, cfg.threshold_method()?)?;
    threshold.save(&artifacts.threshold())?;

    let matrix = WindowedMatrix::load(&artifacts.session_matrix(session))?;
    let annotation = session_annotation(cfg, session)?;
    let start_idx = resolve_test_start(cfg, session, &matrix, &annotation, test_start)?;
    let (_, tested) = matrix.split_at_row(start_idx);

    let scaled = apply_scaler(&tested, &scaler)?;
    let scores = score(&model, &scaled)?;
    let result = detect(&scores, threshold, fingerprint);
    ensure_dir(&artifacts.out.join("detections"))?;
    result.save(scaled.labels(), &artifacts.detections(session))?;

    let flagged = result
        .windows
        .iter()
        .filter(|w| w.verdict == Label::Attack)
        .count();
    Ok(format!(
        "threshold {:.6} ({:?}, {} calibration windows)\nsession {}: scored {} windows from index {}; {} flagged",
        threshold.value,
        threshold.method,
        threshold.calibration_size,
        session,
        result.windows.len(),
        start_idx,
        flagged
    ))
}

/// Summarize one session's verdicts against ground truth.
pub fn cmd_eval(cfg: &PipelineConfig, session: &str) -> Result<String> {
    require_known_session(cfg, session)?;
    let artifacts = Artifacts::new(cfg.out_dir());
    let (windows, labels) = load_detection(&artifacts.detections(session))?;
    let labels = labels.ok_or_else(|| Error::SchemaMismatch {
        context: format!("evaluation of session {}", session),
        detail: "detection file has no ground-truth labels".to_string(),
    })?;
    let threshold = Threshold::load(&artifacts.threshold())?;
    let model_fingerprint = match load_model(&artifacts.model()) {
        Ok(model) => model_fingerprint(&model),
        Err(_) => String::new(),
    };
    let result = DetectionResult {
        windows,
        threshold,
        model_fingerprint,
    };
    let summary = evaluate(&result, &labels)?;
    ensure_dir(&artifacts.out.join("eval"))?;
    summary.save(&artifacts.eval_summary(session))?;
    Ok(summary.to_key_values())
}

/// Render plot-ready CSVs (and SVG figures unless `report.format = "csv"`)
/// for every session with detection output.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<String> {
    let artifacts = Artifacts::new(cfg.out_dir());
    let report_dir = artifacts.report_dir();
    let window_s = cfg.pooling_config().window_ms as f64 / 1000.0;
    let mut written = Vec::new();

    for session in cfg.logs.keys() {
        let detections_path = artifacts.detections(session);
        if !detections_path.exists() {
            continue;
        }
        ensure_dir(&report_dir)?;
        let (windows, labels) = load_detection(&detections_path)?;
        let threshold = Threshold::load(&artifacts.threshold())?;

        // Loss trace: one row per window, time in seconds from flight start.
        let mut trace_csv = String::from("window_time_s,loss,threshold,verdict,label\n");
        for (i, w) in windows.iter().enumerate() {
            let label = labels
                .as_ref()
                .map(|l| l[i].to_string())
                .unwrap_or_default();
            writeln!(
                trace_csv,
                "{},{},{},{},{}",
                w.window_start_us as f64 / 1e6,
                w.loss,
                threshold.value,
                w.verdict,
                label
            )
            .unwrap();
        }
        let trace_path = report_dir.join(format!("{}_trace.csv", session));
        std::fs::write(&trace_path, trace_csv).map_err(|e| Error::io(&trace_path, e))?;
        written.push(trace_path);

        // Per-class loss distributions, grouped by ground truth when
        // available and by verdict otherwise.
        let class_of = |i: usize| -> Label {
            labels
                .as_ref()
                .map(|l| l[i])
                .unwrap_or(windows[i].verdict)
        };
        let split_losses = |wanted: Label| -> Vec<f64> {
            windows
                .iter()
                .enumerate()
                .filter(|(i, _)| class_of(*i) == wanted)
                .map(|(_, w)| w.loss)
                .collect()
        };
        let mut classes: Vec<(&str, Quartiles)> = Vec::new();
        let mut dist_csv = String::from("class,min,q1,median,q3,max\n");
        for (name, losses) in [
            ("benign", split_losses(Label::Benign)),
            ("attack", split_losses(Label::Attack)),
        ] {
            if losses.is_empty() {
                continue;
            }
            let q = Quartiles::from_sample(&losses)?;
            writeln!(dist_csv, "{},{},{},{},{},{}", name, q.min, q.q1, q.median, q.q3, q.max)
                .unwrap();
            classes.push((name, q));
        }
        let dist_path = report_dir.join(format!("{}_distribution.csv", session));
        std::fs::write(&dist_path, dist_csv).map_err(|e| Error::io(&dist_path, e))?;
        written.push(dist_path);

        if cfg.report_format() == ReportFormat::Svg {
            let points: Vec<(f64, f64)> = windows
                .iter()
                .map(|w| (w.window_start_us as f64 / 1e6, w.loss))
                .collect();
            let attack_span = labels.as_ref().and_then(|l| {
                let first = l.iter().position(|x| *x == Label::Attack)?;
                let last = l.iter().rposition(|x| *x == Label::Attack)?;
                Some((
                    windows[first].window_start_us as f64 / 1e6,
                    windows[last].window_start_us as f64 / 1e6 + window_s,
                ))
            });
            let trace_svg = svg::loss_trace(
                &format!("reconstruction loss — {}", session),
                &points,
                threshold.value,
                attack_span,
            );
            let path = report_dir.join(format!("{}_trace.svg", session));
            std::fs::write(&path, trace_svg).map_err(|e| Error::io(&path, e))?;
            written.push(path);

            let dist_svg = svg::loss_distribution(
                &format!("loss distribution — {}", session),
                &classes,
            );
            let path = report_dir.join(format!("{}_distribution.svg", session));
            std::fs::write(&path, dist_svg).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }

    if written.is_empty() {
        return Err(Error::EmptyInput {
            what: format!(
                "detection outputs under {} (run `detect` first)",
                artifacts.out.join("detections").display()
            ),
        });
    }
    let mut summary = String::new();
    for path in &written {
        writeln!(summary, "wrote {}", path.display()).unwrap();
    }
    Ok(summary)
}
