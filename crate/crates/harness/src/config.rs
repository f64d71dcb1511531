//! Typed access to experiment configs.
//!
//! Keys are dotted paths into a TOML table (`system.beta`). Every value read,
//! including defaults, is remembered so that the manifest shows exactly what
//! a run used.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;
use toml::Value;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing config key `{0}`")]
    Missing(String),
    #[error("config key `{key}`: expected {expected}")]
    WrongType { key: String, expected: &'static str },
    #[error("config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct Config {
    root: toml::Table,
    used: RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(Config {
            root: text.parse::<toml::Table>()?,
            used: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    fn lookup(&self, key: &str) -> Option<&Value> {
        let mut parts = key.split('.');
        let mut v = self.root.get(parts.next()?)?;
        for p in parts {
            v = v.as_table()?.get(p)?;
        }
        Some(v)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.lookup(key).is_some()
    }

    fn note(&self, key: &str, v: &Value) {
        self.used.borrow_mut().insert(key.to_string(), v.to_string());
    }

    fn require(&self, key: &str) -> Result<&Value, ConfigError> {
        let v = self.lookup(key).ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        self.note(key, v);
        Ok(v)
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        as_f64(key, self.require(key)?)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        if self.contains(key) {
            return self.f64(key);
        }
        self.note(key, &Value::Float(default));
        Ok(default)
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        match self.require(key)? {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            _ => Err(ConfigError::WrongType {
                key: key.into(),
                expected: "a non-negative integer",
            }),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        if self.contains(key) {
            return self.u64(key);
        }
        self.note(key, &Value::Integer(default as i64));
        Ok(default)
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.u64(key).map(|v| v as usize)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.u64_or(key, default as u64).map(|v| v as usize)
    }

    pub fn str(&self, key: &str) -> Result<String, ConfigError> {
        match self.require(key)? {
            Value::String(s) => Ok(s.clone()),
            _ => Err(ConfigError::WrongType {
                key: key.into(),
                expected: "a string",
            }),
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> Result<String, ConfigError> {
        if self.contains(key) {
            return self.str(key);
        }
        self.note(key, &Value::String(default.into()));
        Ok(default.into())
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        if !self.contains(key) {
            self.note(key, &Value::Boolean(default));
            return Ok(default);
        }
        match self.require(key)? {
            Value::Boolean(b) => Ok(*b),
            _ => Err(ConfigError::WrongType {
                key: key.into(),
                expected: "a boolean",
            }),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        match self.require(key)? {
            Value::Array(a) => a.iter().map(|v| as_f64(key, v)).collect(),
            _ => Err(ConfigError::WrongType {
                key: key.into(),
                expected: "an array of numbers",
            }),
        }
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        if self.contains(key) {
            return self.f64_list(key);
        }
        self.note(key, &Value::Array(default.iter().map(|&x| Value::Float(x)).collect()));
        Ok(default.to_vec())
    }

    pub fn str_list(&self, key: &str) -> Result<Vec<String>, ConfigError> {
        match self.require(key)? {
            Value::Array(a) => a
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(ConfigError::WrongType {
                        key: key.into(),
                        expected: "an array of strings",
                    }),
                })
                .collect(),
            _ => Err(ConfigError::WrongType {
                key: key.into(),
                expected: "an array of strings",
            }),
        }
    }

    /// Sets `key` (creating tables on the way), for command-line overrides.
    pub fn set(&mut self, key: &str, value: Value) {
        let parts: Vec<&str> = key.split('.').collect();
        let mut t = &mut self.root;
        for p in &parts[..parts.len() - 1] {
            let entry = t
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(toml::Table::new()));
            if !entry.is_table() {
                *entry = Value::Table(toml::Table::new());
            }
            t = entry.as_table_mut().expect("table");
        }
        t.insert(parts[parts.len() - 1].to_string(), value);
    }

    /// Every key read so far with the value used, sorted by key.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.used.borrow().clone()
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(ConfigError::WrongType {
            key: key.into(),
            expected: "a number",
        }),
    }
}

/// Parses a `key=value` override; the value is read as TOML, falling back
/// to a bare string.
pub fn parse_override(s: &str) -> Option<(String, Value)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    let v = v.trim();
    let value = format!("x = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| Value::String(v.to_string()));
    Some((k.to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_key_names_the_path() {
        let c = Config::parse("[system]\nbeta = 0.5\n").unwrap();
        assert_eq!(c.f64("system.beta").unwrap(), 0.5);
        let e = c.f64("system.z").unwrap_err();
        assert_eq!(e.to_string(), "missing config key `system.z`");
    }

    #[test]
    fn defaults_are_recorded() {
        let c = Config::parse("[mc]\nsamples = 10\n").unwrap();
        assert_eq!(c.usize("mc.samples").unwrap(), 10);
        assert_eq!(c.f64_or("tolerance.sigmas", 3.0).unwrap(), 3.0);
        let r = c.resolved();
        assert_eq!(r["mc.samples"], "10");
        assert_eq!(r["tolerance.sigmas"], "3.0");
    }

    #[test]
    fn integers_read_as_floats_but_not_back() {
        let c = Config::parse("a = 2\nb = 2.5\n").unwrap();
        assert_eq!(c.f64("a").unwrap(), 2.0);
        assert!(matches!(c.u64("b"), Err(ConfigError::WrongType { .. })));
    }

    #[test]
    fn overrides_create_tables() {
        let mut c = Config::parse("").unwrap();
        let (k, v) = parse_override("system.beta=0.25").unwrap();
        c.set(&k, v);
        let (k, v) = parse_override("potential.kind=lj").unwrap();
        c.set(&k, v);
        assert_eq!(c.f64("system.beta").unwrap(), 0.25);
        assert_eq!(c.str("potential.kind").unwrap(), "lj");
    }
}
