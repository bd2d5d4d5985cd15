use std::fs;
use std::path::Path;

use anyhow::Context;
use pbic_core::Dataset;
use serde::Serialize;
use serde_json::{json, Value};

/// The flags an artifact was produced with, minus the program path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Invocation {
    pub args: Vec<String>,
    pub version: &'static str,
}

impl Invocation {
    pub fn new(argv: &[String]) -> Self {
        Self { args: argv.iter().skip(1).cloned().collect(), version: env!("CARGO_PKG_VERSION") }
    }

    /// One-line form for SVG `<desc>` elements.
    pub fn describe(&self) -> String {
        format!("pbic {} (version {})", self.args.join(" "), self.version)
    }
}

pub fn dataset_summary(data: &Dataset, source: &Path) -> Value {
    json!({
        "name": data.name(),
        "source": source.display().to_string(),
        "n": data.n(),
        "dim": data.dim(),
        "has_labels": data.labels().is_some(),
    })
}

pub fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
