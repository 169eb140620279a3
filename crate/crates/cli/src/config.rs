//! Flat JSON run configuration. Values given on the command line override
//! the same keys from `--config`; every key read is recorded so unknown keys
//! can be rejected and the effective configuration echoed.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::Failure;

pub struct Config {
    values: Map<String, Value>,
    used: BTreeSet<String>,
    effective: Map<String, Value>,
}

impl Config {
    /// Merges the file at `path` (if any) with the serialized flags.
    pub fn load<F: Serialize>(path: Option<&Path>, flags: &F) -> Result<Self, Failure> {
        let mut values = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", p.display())))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(Failure::Usage(format!("config {} is not a JSON object", p.display()))),
                    Err(e) => return Err(Failure::Usage(format!("config {}: {e}", p.display()))),
                }
            }
            None => Map::new(),
        };
        let flags = serde_json::to_value(flags).expect("flags serialize");
        if let Value::Object(m) = flags {
            for (k, v) in m {
                if !v.is_null() && v != Value::Array(vec![]) {
                    values.insert(k, v);
                }
            }
        }
        Ok(Self {
            values,
            used: BTreeSet::new(),
            effective: Map::new(),
        })
    }

    fn raw(&mut self, key: &str) -> Option<Value> {
        self.used.insert(key.to_owned());
        self.values.get(key).cloned()
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        self.effective
            .insert(key.to_owned(), serde_json::to_value(value).expect("config value serializes"));
    }

    fn bad(key: &str, expected: &str, got: &Value) -> Failure {
        Failure::Usage(format!("config key \"{key}\": expected {expected}, got {got}"))
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, Failure> {
        let v = match self.raw(key) {
            None => default,
            Some(v) => v.as_f64().ok_or_else(|| Self::bad(key, "a number", &v))?,
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn f64_opt(&mut self, key: &str) -> Result<Option<f64>, Failure> {
        let v = match self.raw(key) {
            None => None,
            Some(v) => Some(v.as_f64().ok_or_else(|| Self::bad(key, "a number", &v))?),
        };
        if let Some(x) = v {
            self.record(key, &x);
        }
        Ok(v)
    }

    pub fn usize_opt(&mut self, key: &str) -> Result<Option<usize>, Failure> {
        let v = match self.raw(key) {
            None => None,
            Some(v) => Some(
                v.as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| Self::bad(key, "a non-negative integer", &v))?,
            ),
        };
        if let Some(n) = v {
            self.record(key, &n);
        }
        Ok(v)
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, Failure> {
        let v = self.usize_opt(key)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, Failure> {
        let v = match self.raw(key) {
            None => default,
            Some(v) => v.as_u64().ok_or_else(|| Self::bad(key, "a non-negative integer", &v))?,
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, Failure> {
        let v = match self.raw(key) {
            None => default,
            Some(v) => v.as_bool().ok_or_else(|| Self::bad(key, "true or false", &v))?,
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn string_or(&mut self, key: &str, default: &str) -> Result<String, Failure> {
        let v = match self.raw(key) {
            None => default.to_owned(),
            Some(Value::String(s)) => s,
            Some(v) => return Err(Self::bad(key, "a string", &v)),
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn path_opt(&mut self, key: &str) -> Result<Option<PathBuf>, Failure> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => {
                self.record(key, &s);
                Ok(Some(PathBuf::from(s)))
            }
            Some(v) => Err(Self::bad(key, "a path string", &v)),
        }
    }

    pub fn path(&mut self, key: &str) -> Result<PathBuf, Failure> {
        self.path_opt(key)?
            .ok_or_else(|| Failure::Missing(key.to_owned()))
    }

    pub fn f64_list_or(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, Failure> {
        let v = match self.raw(key) {
            None => default.to_vec(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| Self::bad(key, "a list of numbers", x)))
                .collect::<Result<_, _>>()?,
            Some(v) => return Err(Self::bad(key, "a list of numbers", &v)),
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn usize_list_or(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>, Failure> {
        let v = match self.raw(key) {
            None => default.to_vec(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|n| n as usize)
                        .ok_or_else(|| Self::bad(key, "a list of non-negative integers", x))
                })
                .collect::<Result<_, _>>()?,
            Some(v) => return Err(Self::bad(key, "a list of non-negative integers", &v)),
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Rejects keys no reader asked for and returns the effective settings.
    pub fn finish(self) -> Result<Map<String, Value>, Failure> {
        if let Some(k) = self.values.keys().find(|k| !self.used.contains(*k)) {
            return Err(Failure::Usage(format!("config key \"{k}\" is not used by this command")));
        }
        Ok(self.effective)
    }
}
