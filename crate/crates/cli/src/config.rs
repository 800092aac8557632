use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{usage, CliResult};

/// Parsed config file: one table per subcommand.
#[derive(Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

pub const SECTIONS: [&str; 6] = [
    "aggregate",
    "prune",
    "synth",
    "metrics",
    "estimate",
    "bench",
];

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        if let Some(unknown) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(usage(format!(
                "config {}: unknown section [{unknown}]",
                path.display()
            )));
        }
        Ok(Self { table })
    }

    fn section(&self, name: &str) -> CliResult<Map<String, Value>> {
        match self.table.get(name) {
            None => Ok(Map::new()),
            Some(toml::Value::Table(t)) => match serde_json::to_value(t) {
                Ok(Value::Object(map)) => Ok(map),
                _ => Err(usage(format!("config section [{name}] is not a table"))),
            },
            Some(_) => Err(usage(format!("config entry {name} must be a table"))),
        }
    }

    /// Fills every field left unset on the command line from the section
    /// `name`. `exclusive` lists groups of keys of which only one may be set;
    /// a member given on the command line masks the others from the file.
    pub fn merge<T>(&self, name: &str, cli: &T, exclusive: &[&[&str]]) -> CliResult<T>
    where
        T: Serialize + DeserializeOwned + Default,
    {
        let known = to_map(&T::default());
        let mut file = self.section(name)?;
        if let Some(key) = file.keys().find(|k| !known.contains_key(*k)) {
            return Err(usage(format!(
                "config section [{name}]: unknown key {key:?}"
            )));
        }
        let flags = to_map(cli);
        for group in exclusive {
            if group.iter().any(|k| !flags[*k].is_null()) {
                for k in *group {
                    file.remove(*k);
                }
            }
        }
        let mut merged = file;
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
        serde_json::from_value(Value::Object(merged))
            .map_err(|e| usage(format!("config section [{name}]: {e}")))
    }
}

pub fn to_map<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => map,
        _ => unreachable!("argument structs serialize to objects"),
    }
}
