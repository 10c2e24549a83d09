//! Line-delimited `key=value` output records.
//!
//! Every record starts with `schema=spw-cli/1`. Wall-clock durations use
//! keys prefixed with `time_ms.` so consumers can drop them when comparing
//! runs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use spw_core::{ClassWeightMode, Reduction, SpwConfig};

pub const SCHEMA: &str = "spw-cli/1";
pub const TIMING_PREFIX: &str = "time_ms.";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    entries: Vec<(String, String)>,
}

impl Record {
    pub fn new() -> Self {
        Self { entries: vec![("schema".into(), SCHEMA.into())] }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) -> &mut Self {
        let value = value.to_string().replace('\n', " ");
        self.entries.push((key.into(), value));
        self
    }

    pub fn push_timing(&mut self, stage: &str, elapsed: Duration) -> &mut Self {
        self.push(format!("{TIMING_PREFIX}{stage}"), format!("{:.3}", elapsed.as_secs_f64() * 1e3))
    }

    pub fn push_config(&mut self, cfg: &SpwConfig) -> &mut Self {
        self.push("config.lambda", cfg.lambda)
            .push("config.beta", cfg.beta)
            .push("config.levels", cfg.levels)
            .push("config.orientations", cfg.orientations)
            .push("config.class_weights", class_weight_name(cfg.class_weights))
            .push("config.reduction", reduction_name(cfg.reduction))
            .push("config.prediction_map", cfg.include_prediction)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// The record without timing entries.
    pub fn without_timings(&self) -> Record {
        Record { entries: self.entries.iter().filter(|(k, _)| !k.starts_with(TIMING_PREFIX)).cloned().collect() }
    }

    pub fn parse(text: &str) -> Record {
        let entries = text
            .lines()
            .filter_map(|line| line.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Record { entries }
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub fn class_weight_name(mode: ClassWeightMode) -> &'static str {
    match mode {
        ClassWeightMode::Uniform => "uniform",
        ClassWeightMode::InverseFrequency => "invfreq",
    }
}

pub fn reduction_name(r: Reduction) -> &'static str {
    match r {
        Reduction::Sum => "sum",
        Reduction::Mean => "mean",
    }
}

/// Inputs, outputs, seed and stage timings of one run.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub config: Option<SpwConfig>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub timings: Vec<(String, Duration)>,
}

impl RunManifest {
    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        if let Some(cfg) = &self.config {
            r.push_config(cfg);
        }
        if let Some(seed) = self.seed {
            r.push("seed", seed);
        }
        for (i, p) in self.inputs.iter().enumerate() {
            r.push(format!("input.{i}"), p.display());
        }
        r.push("outputs", self.outputs.len());
        for (i, p) in self.outputs.iter().enumerate() {
            r.push(format!("output.{i}"), p.display());
        }
        for (stage, d) in &self.timings {
            r.push_timing(stage, *d);
        }
        r
    }
}
