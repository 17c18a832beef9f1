//! Generate a self-contained demo dataset plus a matching `config.toml`.
//!
//! Writes three synthetic flight logs (one benign, one with a telemetry
//! flood, one with a position drift), the category map, the annotation
//! table, and a pipeline config wired to them:
//!
//! ```text
//! cargo run --example generate_demo_data -- demo
//! cargo run --bin uav-ids -- --config demo/config.toml prepare
//! cargo run --bin uav-ids -- --config demo/config.toml train
//! cargo run --bin uav-ids -- --config demo/config.toml detect flood-flight
//! cargo run --bin uav-ids -- --config demo/config.toml eval flood-flight
//! cargo run --bin uav-ids -- --config demo/config.toml report
//! ```

use std::fmt::Write as _;
use std::path::Path;

use uav_ids_core::synthetic::write_fixture_logs;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "demo".to_string());
    let dir = Path::new(&dir);
    if let Err(e) = run(dir) {
        eprintln!("error: {}", e);
        std::process::exit(1);
    }
}

fn run(dir: &Path) -> uav_ids_core::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| uav_ids_core::Error::io(dir, e))?;
    let fixture = write_fixture_logs(dir, 7)?;

    let mut config = String::new();
    writeln!(
        config,
        "paths.category_map = {:?}",
        fixture.category_map.file_name().unwrap()
    )
    .unwrap();
    writeln!(
        config,
        "paths.annotations = {:?}",
        fixture.annotations.file_name().unwrap()
    )
    .unwrap();
    writeln!(config, "paths.output_dir = \"out\"").unwrap();
    writeln!(config, "\n[logs]").unwrap();
    for (session, path) in &fixture.logs {
        writeln!(config, "{} = {:?}", session, path.file_name().unwrap()).unwrap();
    }
    let config_path = dir.join("config.toml");
    std::fs::write(&config_path, config).map_err(|e| uav_ids_core::Error::io(&config_path, e))?;

    println!("wrote demo dataset and {}", config_path.display());
    Ok(())
}
