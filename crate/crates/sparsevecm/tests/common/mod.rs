//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use std::path::Path;

use sparsevecm::config::PipelineConfig;
use sparsevecm::{io, synth};

/// Writes a synthetic dataset into `dir` and returns a pipeline config
/// reading it, with outputs under `dir/out`.
pub fn synthetic(dir: &Path, spec: &synth::SynthSpec) -> PipelineConfig {
    let data = synth::generate(spec).expect("synthetic data");
    io::write_prices(&dir.join("prices.csv"), &data.prices).expect("prices");
    io::write_cpi(&dir.join("cpi.csv"), &data.cpi).expect("cpi");
    PipelineConfig {
        prices: "prices.csv".into(),
        cpi: Some("cpi.csv".into()),
        cpi_base: Some(synth::base_month(spec).to_string()),
        output: "out".into(),
        seed: Some(spec.seed),
        commodities: Some(synth::commodity_names(spec.commodities)),
        periods: data.periods,
        base_dir: dir.to_path_buf(),
        ..Default::default()
    }
}
