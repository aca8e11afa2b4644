//! Run manifests: the resolved parameters of a command, written next to its
//! outputs so the run can be repeated exactly.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub parameters: BTreeMap<String, Value>,
    pub master_seed: Option<u64>,
    pub tool_version: String,
    /// RFC 3339, UTC.
    pub started: String,
    pub finished: Option<String>,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str, master_seed: Option<u64>) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            parameters: BTreeMap::new(),
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: now(),
            finished: None,
            outputs: Vec::new(),
        }
    }

    pub fn param<V: Serialize>(&mut self, key: &str, value: V) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.parameters.insert(key.to_string(), v);
        self
    }

    pub fn output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn finish(&mut self) {
        self.finished = Some(now());
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::start("simulate", Some(7));
        m.param("theta", 10.0).param("algo", "cdf");
        m.output("path_0000.csv");
        m.finish();
        let p = dir.path().join("manifest.json");
        m.save(&p).unwrap();
        let back = RunManifest::load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.parameters["algo"], "cdf");
        assert!(chrono::DateTime::parse_from_rfc3339(&back.started).is_ok());
    }
}
