//! Synthetic telemetry with a known low-dimensional structure.
//!
//! Real flight telemetry is strongly correlated: a handful of latent flight
//! states (position, attitude, energy) drive dozens of recorded channels.
//! This module fabricates data with exactly that shape — a uniform
//! low-dimensional latent vector pushed through a fixed random linear map
//! plus small Gaussian noise, rescaled to the unit interval — so detection
//! quality can be measured against perfect ground truth:
//!
//! * **benign** windows live on the latent manifold;
//! * **link-flood** windows add a constant offset to a fixed subset of
//!   coordinates (saturation, as when a flooded link pins status channels);
//! * **position-drift** windows add a coherent, growing offset to the
//!   GPS-role coordinates (as when spoofed satellite fixes walk the
//!   reported position away from the flown one).
//!
//! The same generator can also write full raw telemetry logs (plus
//! annotations and a category map) to disk, which exercises the entire
//! pipeline from CSV parsing onward.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::engineering::WindowedMatrix;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::seeding;
use crate::selection::FeatureCategory;
use crate::telemetry::Label;

/// Pooled window length used by the fabricated matrices, µs.
pub const WINDOW_US: i64 = 500_000;

/// The informative feature set: 33 channels in catalog (lexicographic-free,
/// declaration) order. The first seven are the GPS-role coordinates that
/// position-drift attacks displace.
pub const FEATURES: [(&str, FeatureCategory); 33] = [
    ("gps_latitude", FeatureCategory::Location),
    ("gps_longitude", FeatureCategory::Location),
    ("gps_altitude", FeatureCategory::Location),
    ("gps_eph", FeatureCategory::Location),
    ("gps_epv", FeatureCategory::Location),
    ("gps_ground_speed", FeatureCategory::Location),
    ("gps_course", FeatureCategory::Location),
    ("local_x", FeatureCategory::PositionOrientation),
    ("local_y", FeatureCategory::PositionOrientation),
    ("local_z", FeatureCategory::PositionOrientation),
    ("roll", FeatureCategory::PositionOrientation),
    ("pitch", FeatureCategory::PositionOrientation),
    ("yaw", FeatureCategory::PositionOrientation),
    ("roll_rate", FeatureCategory::PositionOrientation),
    ("pitch_rate", FeatureCategory::PositionOrientation),
    ("yaw_rate", FeatureCategory::PositionOrientation),
    ("quat_w", FeatureCategory::PositionOrientation),
    ("quat_x", FeatureCategory::PositionOrientation),
    ("quat_y", FeatureCategory::PositionOrientation),
    ("quat_z", FeatureCategory::PositionOrientation),
    ("heading", FeatureCategory::PositionOrientation),
    ("accel_x", FeatureCategory::Imu),
    ("accel_y", FeatureCategory::Imu),
    ("accel_z", FeatureCategory::Imu),
    ("gyro_x", FeatureCategory::Imu),
    ("gyro_y", FeatureCategory::Imu),
    ("gyro_z", FeatureCategory::Imu),
    ("baro_pressure", FeatureCategory::Imu),
    ("baro_temperature", FeatureCategory::Imu),
    ("battery_voltage", FeatureCategory::SystemStatus),
    ("battery_current", FeatureCategory::SystemStatus),
    ("cpu_load", FeatureCategory::SystemStatus),
    ("link_quality", FeatureCategory::SystemStatus),
];

/// Number of GPS-role coordinates (a prefix of [`FEATURES`]).
pub const N_GPS_ROLE: usize = 7;

/// Number of coordinates a link-flood attack saturates.
pub const N_FLOOD_COORDS: usize = 8;

/// Generator knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub latent_dim: usize,
    /// Standard deviation of the additive Gaussian noise, in unit-interval
    /// coordinates.
    pub noise_sigma: f64,
    /// Offset a link-flood adds to each saturated coordinate.
    pub flood_offset: f64,
    /// Seed for the fixed map and every draw stream.
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            latent_dim: 4,
            noise_sigma: 0.01,
            flood_offset: 0.3,
            seed: 0,
        }
    }
}

/// A fixed latent-to-telemetry map with its attack geometry. Construction
/// is fully determined by the seed; draw streams are labeled so different
/// datasets (train, fresh benign, attacks) are independent but individually
/// reproducible.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    cfg: SyntheticConfig,
    /// n_features × latent_dim mixing map.
    map: Mat,
    /// Per-feature affine taking raw map output to the unit interval.
    lo: Vec<f64>,
    span: Vec<f64>,
    /// Coordinates a link-flood saturates (distinct, sorted).
    flood_coords: Vec<usize>,
    /// Drift direction (±1) per GPS-role coordinate.
    gps_directions: Vec<f64>,
}

impl SyntheticGenerator {
    pub fn new(cfg: SyntheticConfig) -> Result<SyntheticGenerator> {
        if cfg.latent_dim == 0 || cfg.latent_dim >= FEATURES.len() {
            return Err(Error::BadConfig {
                reason: format!(
                    "latent_dim must be in 1..{}, got {}",
                    FEATURES.len(),
                    cfg.latent_dim
                ),
            });
        }
        if !(cfg.noise_sigma.is_finite() && cfg.noise_sigma >= 0.0) {
            return Err(Error::BadConfig {
                reason: "noise_sigma must be finite and non-negative".to_string(),
            });
        }
        let n = FEATURES.len();
        let mut rng = seeding::labeled_rng(cfg.seed, "latent-map");
        let map = Mat::from_fn(n, cfg.latent_dim, |_, _| rng.gen_range(-1.0..1.0));

        // A latent in [0,1]^k keeps row j of the map inside
        // [sum of negative entries, sum of positive entries]; widening by a
        // noise margin keeps ~4 sigma of the Gaussian inside [0,1].
        let margin = 4.0 * cfg.noise_sigma;
        let mut lo = Vec::with_capacity(n);
        let mut span = Vec::with_capacity(n);
        for j in 0..n {
            let row = map.row(j);
            let neg: f64 = row.iter().filter(|v| **v < 0.0).sum();
            let pos: f64 = row.iter().filter(|v| **v > 0.0).sum();
            lo.push(neg - margin);
            span.push((pos - neg) + 2.0 * margin);
        }

        let mut rng = seeding::labeled_rng(cfg.seed, "flood-coords");
        let mut flood_coords: Vec<usize> = Vec::new();
        while flood_coords.len() < N_FLOOD_COORDS {
            let c = rng.gen_range(0..n);
            if !flood_coords.contains(&c) {
                flood_coords.push(c);
            }
        }
        flood_coords.sort_unstable();

        let mut rng = seeding::labeled_rng(cfg.seed, "gps-directions");
        let gps_directions = (0..N_GPS_ROLE)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();

        Ok(SyntheticGenerator {
            cfg,
            map,
            lo,
            span,
            flood_coords,
            gps_directions,
        })
    }

    pub fn feature_names() -> Vec<String> {
        FEATURES.iter().map(|(n, _)| n.to_string()).collect()
    }

    pub fn flood_coords(&self) -> &[usize] {
        &self.flood_coords
    }

    /// One on-manifold row in unit-interval coordinates.
    fn draw_row(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let latent: Vec<f64> = (0..self.cfg.latent_dim).map(|_| rng.gen::<f64>()).collect();
        (0..FEATURES.len())
            .map(|j| {
                let raw: f64 = self
                    .map
                    .row(j)
                    .iter()
                    .zip(&latent)
                    .map(|(w, z)| w * z)
                    .sum::<f64>()
                    + self.cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal);
                ((raw - self.lo[j]) / self.span[j]).clamp(0.0, 1.0)
            })
            .collect()
    }

    fn rows_to_matrix(&self, rows: Vec<Vec<f64>>, label: Label) -> WindowedMatrix {
        let n = rows.len();
        let starts = (0..n as i64).map(|i| i * WINDOW_US).collect();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        WindowedMatrix::new(
            Self::feature_names(),
            Mat::from_vec(n, FEATURES.len(), flat),
            starts,
            Some(vec![label; n]),
        )
        .expect("generator emits a consistent matrix")
    }

    /// `n_windows` benign windows. Distinct `stream` labels give
    /// independent draws; the same label reproduces the same matrix.
    pub fn benign(&self, n_windows: usize, stream: &str) -> WindowedMatrix {
        let mut rng = seeding::labeled_rng(self.cfg.seed, &format!("draw:{}", stream));
        let rows = (0..n_windows).map(|_| self.draw_row(&mut rng)).collect();
        self.rows_to_matrix(rows, Label::Benign)
    }

    /// `n_windows` link-flood windows: benign draws with `flood_offset`
    /// added to each saturated coordinate. Values may leave the unit
    /// interval; a clip-to-unit scaler saturates them, mirroring pinned
    /// status channels under flooding.
    pub fn link_flood(&self, n_windows: usize, stream: &str) -> WindowedMatrix {
        let mut rng = seeding::labeled_rng(self.cfg.seed, &format!("draw:{}", stream));
        let rows = (0..n_windows)
            .map(|_| {
                let mut row = self.draw_row(&mut rng);
                for &c in &self.flood_coords {
                    row[c] += self.cfg.flood_offset;
                }
                row
            })
            .collect();
        self.rows_to_matrix(rows, Label::Attack)
    }

    /// `n_windows` position-drift windows: benign draws whose GPS-role
    /// coordinates move coherently along fixed per-coordinate directions,
    /// the displacement ramping from 0.1 to 0.5 over the sequence.
    pub fn position_drift(&self, n_windows: usize, stream: &str) -> WindowedMatrix {
        let mut rng = seeding::labeled_rng(self.cfg.seed, &format!("draw:{}", stream));
        let rows = (0..n_windows)
            .map(|i| {
                let mut row = self.draw_row(&mut rng);
                let ramp = if n_windows > 1 {
                    i as f64 / (n_windows - 1) as f64
                } else {
                    1.0
                };
                let displacement = 0.1 + 0.4 * ramp;
                for (g, dir) in self.gps_directions.iter().enumerate() {
                    row[g] += dir * displacement;
                }
                row
            })
            .collect();
        self.rows_to_matrix(rows, Label::Attack)
    }
}

/// Paths of one generated fixture dataset.
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub category_map: PathBuf,
    pub annotations: PathBuf,
    /// (session_id, log path); benign first, then link-flood, then drift.
    pub logs: Vec<(String, PathBuf)>,
}

/// Session layout of the generated fixture dataset. All times are
/// wall-clock `HH:MM:SS`; windows are 500 ms aligned to flight start.
const FIXTURE_SESSIONS: [(&str, &str, &str, Option<(&str, &str, &str)>); 3] = [
    ("benign-flight", "14:00:00", "14:21:00", None),
    (
        "flood-flight",
        "15:00:00",
        "15:01:30",
        Some(("dos", "15:01:00", "15:01:15")),
    ),
    (
        "drift-flight",
        "16:00:00",
        "16:01:30",
        Some(("gps_spoofing", "16:00:50", "16:01:18")),
    ),
];

fn clock_seconds(hms: &str) -> i64 {
    let parts: Vec<i64> = hms.split(':').map(|p| p.parse().unwrap()).collect();
    parts[0] * 3600 + parts[1] * 60 + parts[2]
}

/// Write a complete raw dataset under `dir`: three telemetry logs (one
/// benign, one with a link-flood interval, one with a position-drift
/// interval), an annotation file, and a category map.
///
/// Beyond the informative features the logs carry three pipeline probes: a
/// `motor_1_rpm` control channel (excluded by category), a constant
/// `firmware_rev` channel (tranquil), and a `gimbal_mode` channel present
/// only in the benign log (missing elsewhere).
pub fn write_fixture_logs(dir: &Path, seed: u64) -> Result<FixturePaths> {
    let generator = SyntheticGenerator::new(SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    })?;

    // Fixed per-feature affine from unit-interval to plausible raw ranges,
    // so the pipeline's scaler has real work to undo.
    let mut rng = seeding::labeled_rng(seed, "raw-affine");
    let affine: Vec<(f64, f64)> = (0..FEATURES.len())
        .map(|_| (rng.gen_range(-100.0..100.0), rng.gen_range(0.5..200.0)))
        .collect();

    let category_map = dir.join("category_map.csv");
    let mut map_text = String::from("feature_name,category\n");
    for (name, category) in FEATURES {
        map_text.push_str(&format!("{},{}\n", name, category));
    }
    map_text.push_str("motor_1_rpm,control\n");
    map_text.push_str("firmware_rev,system_status\n");
    map_text.push_str("gimbal_mode,system_status\n");
    std::fs::write(&category_map, map_text).map_err(|e| Error::io(&category_map, e))?;

    let annotations = dir.join("annotations.csv");
    let mut ann_text =
        String::from("session_id,attack_kind,flight_start,attack_start,attack_end,flight_end\n");
    for (session, start, end, attack) in FIXTURE_SESSIONS {
        match attack {
            Some((kind, a_start, a_end)) => ann_text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                session, kind, start, a_start, a_end, end
            )),
            None => ann_text.push_str(&format!("{},,{},,,{}\n", session, start, end)),
        }
    }
    std::fs::write(&annotations, ann_text).map_err(|e| Error::io(&annotations, e))?;

    let mut logs = Vec::new();
    for (session, start, end, attack) in FIXTURE_SESSIONS {
        let duration_us = (clock_seconds(end) - clock_seconds(start)) * 1_000_000;
        let n_windows = (duration_us / WINDOW_US) as usize;
        let attack_us = attack.map(|(_, a_start, a_end)| {
            (
                (clock_seconds(a_start) - clock_seconds(start)) * 1_000_000,
                (clock_seconds(a_end) - clock_seconds(start)) * 1_000_000,
            )
        });
        // A window is attacked when its half-open span intersects the
        // closed attack interval — the same rule window labeling applies.
        let window_attacked = |w: usize| -> bool {
            attack_us.is_some_and(|(a, b)| {
                let start = w as i64 * WINDOW_US;
                start <= b && a < start + WINDOW_US
            })
        };
        let attacked_windows = (0..n_windows).filter(|&w| window_attacked(w)).count();
        let attack_kind = attack.map(|(kind, _, _)| kind);

        // Per-window unit-interval values for the informative features.
        let benign = generator.benign(n_windows, &format!("fixture:{}", session));
        let attack_rows = match attack_kind {
            Some("dos") => {
                Some(generator.link_flood(attacked_windows, &format!("fixture-attack:{}", session)))
            }
            Some(_) => Some(
                generator.position_drift(attacked_windows, &format!("fixture-attack:{}", session)),
            ),
            None => None,
        };

        let mut rng = seeding::labeled_rng(seed, &format!("fixture-log:{}", session));
        let mut text = String::from("timestamp_us,feature_name,value\n");
        let mut attack_row_idx = 0usize;
        for w in 0..n_windows {
            let attacked = window_attacked(w);
            let unit_row: Vec<f64> = if attacked {
                let row = attack_rows.as_ref().unwrap().row(attack_row_idx).to_vec();
                attack_row_idx += 1;
                row
            } else {
                benign.row(w).to_vec()
            };
            let window_start = w as i64 * WINDOW_US;
            for (j, (name, _)) in FEATURES.iter().enumerate() {
                let (shift, range) = affine[j];
                let raw = shift + range * unit_row[j];
                for _ in 0..rng.gen_range(1..=3u32) {
                    let ts = window_start + rng.gen_range(0..WINDOW_US);
                    let jitter = 0.002 * range * rng.sample::<f64, _>(StandardNormal);
                    text.push_str(&format!("{},{},{}\n", ts, name, raw + jitter));
                }
            }
            // Pipeline probes: a varying control channel, a constant
            // channel, and a benign-only channel.
            let ts = window_start + rng.gen_range(0..WINDOW_US);
            text.push_str(&format!(
                "{},motor_1_rpm,{}\n",
                ts,
                4000.0 + rng.gen_range(-500.0..500.0)
            ));
            text.push_str(&format!("{},firmware_rev,1.0\n", ts));
            if session == "benign-flight" {
                text.push_str(&format!("{},gimbal_mode,2.0\n", ts));
            }
        }
        let path = dir.join(format!("{}.csv", session));
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        logs.push((session.to_string(), path));
    }

    Ok(FixturePaths {
        category_map,
        annotations,
        logs,
    })
}
