//! Experiment config resolution: preset, then config file, then `--set`
//! overrides, each layered over the previous one as TOML tables.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use grae_core::presets::preset;
use grae_core::ExperimentConfig;
use toml::{Table, Value};

pub fn resolve(
    preset_name: Option<&str>,
    config_path: Option<&Path>,
    overrides: &[String],
    steps: Option<usize>,
    seed: Option<u64>,
) -> Result<ExperimentConfig> {
    let base = match preset_name {
        Some(name) => preset(name)?,
        None => ExperimentConfig::default(),
    };
    let mut table = Table::try_from(&base).context("serializing base config")?;

    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file: Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        merge(&mut table, file);
    }
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{item}` must have the form key=value"))?;
        set_path(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    if let Some(steps) = steps {
        table.insert("steps".into(), Value::Integer(steps as i64));
    }
    if let Some(seed) = seed {
        let seed = i64::try_from(seed).map_err(|_| anyhow!("invalid config field `seed`: must fit in 63 bits"))?;
        table.insert("seed".into(), Value::Integer(seed));
    }

    let config: ExperimentConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!("invalid config: {}", e.message()))?;
    config.validate()?;
    Ok(config)
}

fn merge(into: &mut Table, from: Table) {
    for (key, value) in from {
        match (into.get_mut(&key), value) {
            (Some(Value::Table(dst)), Value::Table(src)) => merge(dst, src),
            (_, value) => {
                into.insert(key, value);
            }
        }
    }
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            bail!("override key `{key}` has an empty segment");
        }
        if parts.peek().is_none() {
            cur.insert(part.to_owned(), value);
            return Ok(());
        }
        cur = match cur.entry(part.to_owned()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            _ => bail!("override key `{key}`: `{part}` is not a table"),
        };
    }
    bail!("override key is empty")
}
