//! Feature selection: two rules, applied in order.
//!
//! 1. Hardware generality — features in the control category (actuator
//!    inputs, motor commands) differ per airframe and are excluded.
//! 2. Sensor stability — a feature is dropped as *missing* if any provided
//!    log has no records for it, and as *tranquil* if every recorded value
//!    across every log is identical (exact 64-bit equality; an epsilon would
//!    silently drop slowly-drifting sensors).
//!
//! The surviving set is persisted as a [`FeatureCatalog`] whose lexicographic
//! order fixes the column order of every downstream matrix. Selection is a
//! pure function of the log set and the catalog's name/category pairs, so
//! re-running it on its own output changes nothing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::telemetry::FlightLog;

/// Exact header of the user-editable category mapping file.
pub const CATEGORY_MAP_HEADER: &str = "feature_name,category";
/// Exact header of the persisted catalog.
pub const CATALOG_HEADER: &str = "feature_name,category,selected";

/// Feature families. Control is hardware-specific and never selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeatureCategory {
    Location,
    PositionOrientation,
    Imu,
    SystemStatus,
    Control,
}

impl FeatureCategory {
    pub fn parse(s: &str) -> Option<FeatureCategory> {
        match s.to_ascii_lowercase().as_str() {
            "location" => Some(FeatureCategory::Location),
            "position_orientation" => Some(FeatureCategory::PositionOrientation),
            "imu" => Some(FeatureCategory::Imu),
            "system_status" => Some(FeatureCategory::SystemStatus),
            "control" => Some(FeatureCategory::Control),
            _ => None,
        }
    }

    pub const ALL: [FeatureCategory; 5] = [
        FeatureCategory::Location,
        FeatureCategory::PositionOrientation,
        FeatureCategory::Imu,
        FeatureCategory::SystemStatus,
        FeatureCategory::Control,
    ];
}

impl fmt::Display for FeatureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FeatureCategory::Location => "location",
            FeatureCategory::PositionOrientation => "position_orientation",
            FeatureCategory::Imu => "imu",
            FeatureCategory::SystemStatus => "system_status",
            FeatureCategory::Control => "control",
        };
        write!(f, "{}", s)
    }
}

/// One catalog row: a known feature, its family, and whether it survived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub feature_name: String,
    pub category: FeatureCategory,
    pub selected: bool,
}

/// The persisted feature universe, sorted lexicographically by name.
///
/// The selected subset, in catalog order, defines the column order of every
/// windowed matrix downstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureCatalog {
    entries: Vec<CatalogEntry>,
}

impl FeatureCatalog {
    /// Build a catalog with every feature initially selected.
    /// Fails on duplicate feature names.
    pub fn new(mut entries: Vec<CatalogEntry>) -> Result<FeatureCatalog> {
        entries.sort_by(|a, b| a.feature_name.cmp(&b.feature_name));
        for pair in entries.windows(2) {
            if pair[0].feature_name == pair[1].feature_name {
                return Err(Error::BadConfig {
                    reason: format!("duplicate feature `{}` in catalog", pair[0].feature_name),
                });
            }
        }
        Ok(FeatureCatalog { entries })
    }

    /// Catalog from a category mapping, everything selected.
    pub fn from_category_map(map: &BTreeMap<String, FeatureCategory>) -> FeatureCatalog {
        let entries = map
            .iter()
            .map(|(name, cat)| CatalogEntry {
                feature_name: name.clone(),
                category: *cat,
                selected: true,
            })
            .collect();
        // BTreeMap iteration is already sorted and duplicate-free.
        FeatureCatalog { entries }
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    /// Names of selected features, in catalog (lexicographic) order.
    pub fn selected_features(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.selected)
            .map(|e| e.feature_name.as_str())
            .collect()
    }

    pub fn selected_count(&self) -> usize {
        self.entries.iter().filter(|e| e.selected).count()
    }

    /// Persist as CSV, one row per entry, selected flagged 1/0.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut body = String::new();
        body.push_str(CATALOG_HEADER);
        body.push('\n');
        for e in &self.entries {
            body.push_str(&format!(
                "{},{},{}\n",
                e.feature_name,
                e.category,
                if e.selected { 1 } else { 0 }
            ));
        }
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Load a persisted catalog, enforcing the no-selected-control invariant.
    pub fn load(path: &Path) -> Result<FeatureCatalog> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(BufReader::new(file));
        let header = reader
            .headers()
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if header != CATALOG_HEADER {
            return Err(Error::BadHeader {
                path: path.to_path_buf(),
                expected: CATALOG_HEADER.to_string(),
                found: header,
            });
        }
        let mut entries = Vec::new();
        for (idx, row) in reader.records().enumerate() {
            let line = idx + 2;
            let row = row.map_err(|e| Error::io(path, std::io::Error::other(e)))?;
            if row.len() != 3 {
                return Err(Error::BadRow {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("expected 3 fields, found {}", row.len()),
                });
            }
            let category =
                FeatureCategory::parse(row[1].trim()).ok_or_else(|| Error::UnknownCategory {
                    feature: row[0].to_string(),
                    value: row[1].to_string(),
                })?;
            let selected = match row[2].trim() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::BadRow {
                        path: path.to_path_buf(),
                        line,
                        reason: format!("selected must be 0 or 1, found `{}`", other),
                    })
                }
            };
            if selected && category == FeatureCategory::Control {
                return Err(Error::BadRow {
                    path: path.to_path_buf(),
                    line,
                    reason: format!(
                        "control-category feature `{}` marked selected",
                        row[0].trim()
                    ),
                });
            }
            entries.push(CatalogEntry {
                feature_name: row[0].trim().to_string(),
                category,
                selected,
            });
        }
        FeatureCatalog::new(entries)
    }
}

/// Why each input feature was kept or dropped; the four lists partition the
/// catalog's feature set and are each sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionReport {
    pub kept: Vec<String>,
    pub dropped_category: Vec<String>,
    pub dropped_missing: Vec<String>,
    pub dropped_tranquil: Vec<String>,
}

impl fmt::Display for SelectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "kept {} features; dropped {} control, {} missing, {} tranquil",
            self.kept.len(),
            self.dropped_category.len(),
            self.dropped_missing.len(),
            self.dropped_tranquil.len()
        )?;
        for (label, list) in [
            ("kept", &self.kept),
            ("dropped_category", &self.dropped_category),
            ("dropped_missing", &self.dropped_missing),
            ("dropped_tranquil", &self.dropped_tranquil),
        ] {
            if !list.is_empty() {
                writeln!(f, "  {}: {}", label, list.join(", "))?;
            }
        }
        Ok(())
    }
}

/// Load the user-editable `feature_name,category` mapping.
pub fn load_category_map(path: &Path) -> Result<BTreeMap<String, FeatureCategory>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let header = reader
        .headers()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CATEGORY_MAP_HEADER {
        return Err(Error::BadHeader {
            path: path.to_path_buf(),
            expected: CATEGORY_MAP_HEADER.to_string(),
            found: header,
        });
    }
    let mut map = BTreeMap::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        if row.len() != 2 {
            return Err(Error::BadRow {
                path: path.to_path_buf(),
                line,
                reason: format!("expected 2 fields, found {}", row.len()),
            });
        }
        let name = row[0].trim().to_string();
        if !crate::telemetry::feature_name_ok(&name) {
            return Err(Error::BadRow {
                path: path.to_path_buf(),
                line,
                reason: format!("feature name `{}` is empty or contains forbidden characters", name),
            });
        }
        let category =
            FeatureCategory::parse(row[1].trim()).ok_or_else(|| Error::UnknownCategory {
                feature: name.clone(),
                value: row[1].to_string(),
            })?;
        if map.insert(name.clone(), category).is_some() {
            return Err(Error::BadRow {
                path: path.to_path_buf(),
                line,
                reason: format!("duplicate feature `{}`", name),
            });
        }
    }
    Ok(map)
}

/// Rule 1: deselect every control-category entry; all other families pass.
pub fn filter_by_category(catalog: &FeatureCatalog) -> FeatureCatalog {
    let entries = catalog
        .entries
        .iter()
        .map(|e| CatalogEntry {
            selected: e.selected && e.category != FeatureCategory::Control,
            ..e.clone()
        })
        .collect();
    FeatureCatalog { entries }
}

/// Per-feature stability evidence gathered from one pass over the logs.
struct Stability {
    /// Number of logs the feature appears in.
    logs_seen: usize,
    /// First value ever observed for the feature.
    first_value: f64,
    /// Whether every observed value equals `first_value` (exact equality).
    all_identical: bool,
}

/// Rule 2: drop features that are missing from any log or tranquil across
/// all logs. Control entries are reported as category drops.
///
/// The result depends only on the logs and the catalog's name/category
/// pairs — input selection flags are ignored — which makes the operation
/// idempotent by construction.
pub fn drop_unstable(
    logs: &[FlightLog],
    catalog: &FeatureCatalog,
) -> Result<(FeatureCatalog, SelectionReport)> {
    if logs.is_empty() {
        return Err(Error::EmptyInput {
            what: "log set for feature selection".to_string(),
        });
    }

    let mut stability: BTreeMap<&str, Stability> = BTreeMap::new();
    for log in logs {
        let mut seen_in_this_log: BTreeMap<&str, bool> = BTreeMap::new();
        for rec in log.records() {
            let name = rec.feature_name.as_str();
            if !seen_in_this_log.contains_key(name) {
                seen_in_this_log.insert(name, true);
                stability
                    .entry(name)
                    .and_modify(|s| s.logs_seen += 1)
                    .or_insert(Stability {
                        logs_seen: 1,
                        first_value: rec.value,
                        all_identical: true,
                    });
            }
            let s = stability.get_mut(name).expect("inserted above");
            if rec.value != s.first_value {
                s.all_identical = false;
            }
        }
    }

    let mut entries = Vec::with_capacity(catalog.entries.len());
    let mut report = SelectionReport {
        kept: Vec::new(),
        dropped_category: Vec::new(),
        dropped_missing: Vec::new(),
        dropped_tranquil: Vec::new(),
    };

    for e in &catalog.entries {
        let name = e.feature_name.clone();
        let selected = if e.category == FeatureCategory::Control {
            report.dropped_category.push(name);
            false
        } else {
            match stability.get(e.feature_name.as_str()) {
                Some(s) if s.logs_seen == logs.len() => {
                    if s.all_identical {
                        report.dropped_tranquil.push(name);
                        false
                    } else {
                        report.kept.push(name);
                        true
                    }
                }
                // Absent from at least one log (or from all of them).
                _ => {
                    report.dropped_missing.push(name);
                    false
                }
            }
        };
        entries.push(CatalogEntry {
            feature_name: e.feature_name.clone(),
            category: e.category,
            selected,
        });
    }

    Ok((FeatureCatalog { entries }, report))
}

/// Full selection pipeline: category map → category filter → stability
/// filter. The returned catalog is ready to persist.
pub fn select_features(
    logs: &[FlightLog],
    categories: &BTreeMap<String, FeatureCategory>,
) -> Result<(FeatureCatalog, SelectionReport)> {
    let catalog = FeatureCatalog::from_category_map(categories);
    let catalog = filter_by_category(&catalog);
    drop_unstable(logs, &catalog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::RawRecord;
    use chrono::NaiveTime;
    use proptest::prelude::*;

    fn mklog(session: &str, rows: &[(&str, f64)]) -> FlightLog {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (name, v))| RawRecord {
                timestamp_us: i as i64 * 1000,
                feature_name: name.to_string(),
                value: *v,
            })
            .collect();
        FlightLog::from_records(
            session,
            records,
            NaiveTime::from_hms_opt(10, 0, 0).unwrap(),
            NaiveTime::from_hms_opt(10, 30, 0).unwrap(),
        )
        .unwrap()
    }

    fn catalog(entries: &[(&str, FeatureCategory)]) -> FeatureCatalog {
        FeatureCatalog::new(
            entries
                .iter()
                .map(|(n, c)| CatalogEntry {
                    feature_name: n.to_string(),
                    category: *c,
                    selected: true,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn control_features_are_dropped_others_kept() {
        let cat = catalog(&[
            ("throttle_actuator_input", FeatureCategory::Control),
            ("latitude", FeatureCategory::Location),
        ]);
        let filtered = filter_by_category(&cat);
        assert_eq!(filtered.selected_features(), vec!["latitude"]);
    }

    #[test]
    fn empty_catalog_filters_to_empty() {
        let cat = FeatureCatalog::new(vec![]).unwrap();
        assert_eq!(filter_by_category(&cat).selected_count(), 0);
    }

    #[test]
    fn feature_absent_from_one_log_is_missing() {
        let benign = mklog("benign", &[("alt", 1.0), ("alt", 2.0), ("vel", 3.0)]);
        let dos = mklog("dos", &[("alt", 1.5), ("alt", 2.5)]);
        let cat = catalog(&[
            ("alt", FeatureCategory::Location),
            ("vel", FeatureCategory::Location),
        ]);
        let (out, report) = drop_unstable(&[benign, dos], &cat).unwrap();
        assert_eq!(report.dropped_missing, vec!["vel"]);
        assert_eq!(report.kept, vec!["alt"]);
        assert_eq!(out.selected_features(), vec!["alt"]);
    }

    #[test]
    fn constant_feature_everywhere_is_tranquil() {
        let a = mklog("a", &[("gain", 42.0), ("gain", 42.0), ("alt", 1.0), ("alt", 2.0)]);
        let b = mklog("b", &[("gain", 42.0), ("alt", 3.0)]);
        let cat = catalog(&[
            ("gain", FeatureCategory::SystemStatus),
            ("alt", FeatureCategory::Location),
        ]);
        let (_, report) = drop_unstable(&[a, b], &cat).unwrap();
        assert_eq!(report.dropped_tranquil, vec!["gain"]);
        assert_eq!(report.kept, vec!["alt"]);
    }

    #[test]
    fn constant_in_one_log_varying_in_another_is_kept() {
        // Oracle: enumerate distinct value sets per feature with a brute-force
        // scan; a feature is tranquil iff the union has exactly one value.
        let a = mklog("a", &[("x", 5.0), ("x", 5.0)]);
        let b = mklog("b", &[("x", 5.0), ("x", 6.0)]);
        let logs = [a, b];

        let mut distinct: Vec<u64> = logs
            .iter()
            .flat_map(|l| l.records().iter())
            .filter(|r| r.feature_name == "x")
            .map(|r| r.value.to_bits())
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        assert!(distinct.len() > 1, "oracle says x varies");

        let cat = catalog(&[("x", FeatureCategory::Imu)]);
        let (_, report) = drop_unstable(&logs, &cat).unwrap();
        assert_eq!(report.kept, vec!["x"]);
    }

    #[test]
    fn catalog_feature_absent_from_all_logs_is_missing() {
        let a = mklog("a", &[("alt", 1.0), ("alt", 2.0)]);
        let cat = catalog(&[
            ("alt", FeatureCategory::Location),
            ("ghost", FeatureCategory::Imu),
        ]);
        let (_, report) = drop_unstable(&[a], &cat).unwrap();
        assert_eq!(report.dropped_missing, vec!["ghost"]);
    }

    #[test]
    fn empty_log_set_is_an_error() {
        let cat = catalog(&[("alt", FeatureCategory::Location)]);
        assert!(matches!(
            drop_unstable(&[], &cat),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn catalog_roundtrips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.csv");
        let mut cat = catalog(&[
            ("alt", FeatureCategory::Location),
            ("roll_rate", FeatureCategory::PositionOrientation),
            ("servo1", FeatureCategory::Control),
        ]);
        cat = filter_by_category(&cat);
        cat.save(&path).unwrap();
        let loaded = FeatureCatalog::load(&path).unwrap();
        assert_eq!(loaded, cat);
    }

    #[test]
    fn load_rejects_selected_control_feature() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.csv");
        std::fs::write(&path, format!("{}\nservo1,control,1\n", CATALOG_HEADER)).unwrap();
        assert!(matches!(
            FeatureCatalog::load(&path),
            Err(Error::BadRow { .. })
        ));
    }

    #[test]
    fn category_map_loads_and_rejects_unknowns() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("map.csv");
        std::fs::write(
            &good,
            format!("{}\nalt,location\nax,IMU\n", CATEGORY_MAP_HEADER),
        )
        .unwrap();
        let map = load_category_map(&good).unwrap();
        assert_eq!(map["alt"], FeatureCategory::Location);
        assert_eq!(map["ax"], FeatureCategory::Imu);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, format!("{}\nalt,telemetry\n", CATEGORY_MAP_HEADER)).unwrap();
        assert!(matches!(
            load_category_map(&bad),
            Err(Error::UnknownCategory { .. })
        ));
    }

    #[test]
    fn report_lists_partition_the_catalog() {
        let a = mklog("a", &[("alt", 1.0), ("alt", 2.0), ("gain", 7.0)]);
        let b = mklog("b", &[("alt", 3.0), ("gain", 7.0)]);
        let cat = catalog(&[
            ("alt", FeatureCategory::Location),
            ("gain", FeatureCategory::SystemStatus),
            ("ghost", FeatureCategory::Imu),
            ("servo1", FeatureCategory::Control),
        ]);
        let (_, r) = drop_unstable(&[a, b], &cat).unwrap();
        let mut all: Vec<&String> = r
            .kept
            .iter()
            .chain(&r.dropped_category)
            .chain(&r.dropped_missing)
            .chain(&r.dropped_tranquil)
            .collect();
        all.sort();
        let names: Vec<&String> = all;
        assert_eq!(
            names,
            vec![&"alt".to_string(), &"gain".to_string(), &"ghost".to_string(), &"servo1".to_string()]
        );
    }

    // -- property tests ------------------------------------------------

    const POOL: [(&str, FeatureCategory); 6] = [
        ("f_alt", FeatureCategory::Location),
        ("f_vel", FeatureCategory::Location),
        ("f_roll", FeatureCategory::PositionOrientation),
        ("f_accel", FeatureCategory::Imu),
        ("f_batt", FeatureCategory::SystemStatus),
        ("f_servo", FeatureCategory::Control),
    ];

    fn arb_log(session: &'static str) -> impl Strategy<Value = FlightLog> {
        // Values from a tiny discrete set so tranquil/missing cases occur.
        proptest::collection::vec((0usize..POOL.len(), 0u8..3), 0..30).prop_map(move |rows| {
            let rows: Vec<(&str, f64)> = rows
                .into_iter()
                .map(|(i, v)| (POOL[i].0, v as f64))
                .collect();
            mklog(session, &rows)
        })
    }

    fn full_catalog() -> FeatureCatalog {
        catalog(&POOL)
    }

    proptest! {
        #[test]
        fn selection_is_idempotent(a in arb_log("a"), b in arb_log("b")) {
            let logs = [a, b];
            let (first, _) = drop_unstable(&logs, &full_catalog()).unwrap();
            let (second, _) = drop_unstable(&logs, &first).unwrap();
            prop_assert_eq!(first, second);
        }

        /// The missing rule is monotone in the log set; a newly added log
        /// can only rescue a feature that was previously tranquil (its
        /// values break the all-identical condition), never one that was
        /// missing.
        #[test]
        fn adding_a_log_grows_missing_and_rescues_only_tranquil(
            a in arb_log("a"),
            b in arb_log("b"),
            c in arb_log("c"),
        ) {
            let small = [a.clone(), b.clone()];
            let large = [a, b, c];
            let (_, rep_small) = drop_unstable(&small, &full_catalog()).unwrap();
            let (cat_large, rep_large) = drop_unstable(&large, &full_catalog()).unwrap();

            let missing_large: std::collections::BTreeSet<_> =
                rep_large.dropped_missing.iter().collect();
            for m in &rep_small.dropped_missing {
                prop_assert!(missing_large.contains(m),
                    "feature {} missing with fewer logs but not with more", m);
            }

            let explainable: std::collections::BTreeSet<&str> = rep_small
                .kept
                .iter()
                .chain(&rep_small.dropped_tranquil)
                .map(|s| s.as_str())
                .collect();
            for kept in cat_large.selected_features() {
                prop_assert!(explainable.contains(kept),
                    "feature {} selected with more logs but neither kept nor tranquil before",
                    kept);
            }
        }

        #[test]
        fn report_partitions_the_feature_set(a in arb_log("a"), b in arb_log("b")) {
            let logs = [a, b];
            let (_, r) = drop_unstable(&logs, &full_catalog()).unwrap();
            let mut all: Vec<String> = r.kept.clone();
            all.extend(r.dropped_category.clone());
            all.extend(r.dropped_missing.clone());
            all.extend(r.dropped_tranquil.clone());
            all.sort();
            let mut expected: Vec<String> =
                POOL.iter().map(|(n, _)| n.to_string()).collect();
            expected.sort();
            prop_assert_eq!(all, expected);
        }
    }
}
