//! Flat `key = value` experiment files and flag/file/default resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use feedback_learn::{Activation, SignPolicy};
use serde_json::{Map, Value};

pub const SEED_ENV: &str = "FEEDBACK_LEARN_SEED";

/// Parses a config file. Blank lines and lines starting with `#` are
/// skipped; underscores in keys are read as hyphens; repeated keys are an
/// error.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key {key}", i + 1));
        }
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// A value that can be read from a config file and echoed into JSON.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn to_json(&self) -> Value;
}

macro_rules! numeric_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn to_json(&self) -> Value {
                serde_json::json!(self)
            }
        }
    )*};
}

numeric_value!(f64, u64, usize, bool);

impl ConfigValue for String {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(s.to_string())
    }
    fn to_json(&self) -> Value {
        Value::String(self.clone())
    }
}

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(PathBuf::from(s))
    }
    fn to_json(&self) -> Value {
        Value::String(self.display().to_string())
    }
}

fn display_value<T: FromStr + Display>(s: &str) -> Result<T, String>
where
    T::Err: Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

impl ConfigValue for Activation {
    fn parse_value(s: &str) -> Result<Self, String> {
        display_value(s)
    }
    fn to_json(&self) -> Value {
        Value::String(self.to_string())
    }
}

impl ConfigValue for SignPolicy {
    fn parse_value(s: &str) -> Result<Self, String> {
        display_value(s)
    }
    fn to_json(&self) -> Value {
        Value::String(self.to_string())
    }
}

/// Comma-separated layer widths, e.g. `784,100,100,10`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims(pub Vec<usize>);

impl ConfigValue for Dims {
    fn parse_value(s: &str) -> Result<Self, String> {
        let dims = s
            .split(',')
            .map(|d| d.trim().parse::<usize>().map_err(|e| format!("{d:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if dims.len() < 2 || dims.contains(&0) {
            return Err("need at least two positive widths".into());
        }
        Ok(Dims(dims))
    }
    fn to_json(&self) -> Value {
        Value::String(
            self.0
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )
    }
}

pub struct Resolver {
    experiment: &'static str,
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    echo: Map<String, Value>,
}

impl Resolver {
    pub fn new(experiment: &'static str, config: Option<&Path>) -> Result<Self, String> {
        let mut file = match config {
            Some(path) => read_config(path)?,
            None => BTreeMap::new(),
        };
        if let Some(named) = file.remove("experiment") {
            if named != experiment {
                return Err(format!(
                    "config is for experiment {named:?}, not {experiment:?}"
                ));
            }
        }
        let mut echo = Map::new();
        echo.insert("experiment".into(), Value::String(experiment.into()));
        Ok(Self {
            experiment,
            file,
            used: BTreeSet::new(),
            echo,
        })
    }

    fn file_value<T: ConfigValue>(&mut self, key: &str) -> Result<Option<T>, String> {
        self.used.insert(key.to_string());
        self.file
            .get(key)
            .map(|raw| T::parse_value(raw).map_err(|e| format!("config key {key}: {e}")))
            .transpose()
    }

    /// Flag value, else config-file value, else `default`.
    pub fn get<T: ConfigValue>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, String> {
        let file_value = self.file_value(key)?;
        let value = flag.or(file_value).unwrap_or(default);
        self.echo.insert(key.to_string(), value.to_json());
        Ok(value)
    }

    /// Like `get` but with no default; absent values echo as null.
    pub fn get_opt<T: ConfigValue>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>, String> {
        let file_value = self.file_value(key)?;
        let value = flag.or(file_value);
        self.echo.insert(
            key.to_string(),
            value.as_ref().map_or(Value::Null, T::to_json),
        );
        Ok(value)
    }

    /// Seed from the flag, then the config file, then the environment,
    /// then zero.
    pub fn seed(&mut self, flag: Option<u64>) -> Result<u64, String> {
        let file_value = self.file_value::<u64>("seed")?;
        let from_env = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<u64>()
                    .map_err(|e| format!("{SEED_ENV}: {e}"))?,
            ),
            Err(_) => None,
        };
        let seed = flag.or(file_value).or(from_env).unwrap_or(0);
        self.echo.insert("seed".into(), seed.to_json());
        Ok(seed)
    }

    /// Rejects config-file keys the experiment never asked for, and
    /// returns the resolved configuration.
    pub fn finish(self) -> Result<Map<String, Value>, String> {
        let unknown: Vec<&String> = self
            .file
            .keys()
            .filter(|k| !self.used.contains(*k))
            .collect();
        if !unknown.is_empty() {
            let list: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            return Err(format!(
                "unknown config key(s) for {}: {}",
                self.experiment,
                list.join(", ")
            ));
        }
        Ok(self.echo)
    }
}
