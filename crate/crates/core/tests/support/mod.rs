//! Shared helpers for the integration suites: fixture loading and access to
//! the bundled corpus.

use std::fs;
use std::path::{Path, PathBuf};

use crossfoot_core::audit::AuditConfig;
use crossfoot_core::canonical::load_canonical;
use crossfoot_core::workbook::Workbook;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Fixture base names, sorted (config sidecars excluded).
pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(fixture_dir())
        .expect("fixtures directory")
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json") && !n.ends_with(".config.json"))
        .map(|n| n.trim_end_matches(".json").to_string())
        .collect();
    names.sort();
    names
}

/// Load a fixture and its sidecar config (default config when absent).
pub fn load_fixture(name: &str) -> (Workbook, AuditConfig) {
    let path = fixture_dir().join(format!("{name}.json"));
    let bytes = fs::read(&path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    let wb = load_canonical(&bytes).unwrap_or_else(|e| panic!("load {name}: {e}"));
    let config_path = fixture_dir().join(format!("{name}.config.json"));
    let config = if config_path.exists() {
        AuditConfig::from_json(&fs::read(&config_path).unwrap()).unwrap()
    } else {
        AuditConfig::default()
    };
    (wb, config)
}

pub fn golden_findings(name: &str) -> serde_json::Value {
    let path = golden_dir().join(format!("{name}.json"));
    serde_json::from_slice(&fs::read(&path).unwrap_or_else(|e| panic!("golden for {name}: {e}")))
        .unwrap()
}
