#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rentsim::RunConfig;

pub fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthcity")
}

/// The fixture config scaled down to `n_agents`, writing runs under `out`.
pub fn small_config(n_agents: usize, out: &Path) -> RunConfig {
    let text = std::fs::read_to_string(fixture().join("run.toml")).unwrap();
    let mut cfg = RunConfig::from_toml_str(&text, &fixture()).unwrap();
    cfg.n_agents = n_agents;
    cfg.market.yearly_supply = Some((n_agents as u32 * 6) / 5);
    cfg.output_dir = out.to_path_buf();
    cfg
}

pub fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|r| r.unwrap()).collect()
}
