//! Flat `key = value` text configs, shared by model files, training configs
//! and synthesis specs. Lines starting with `#` are comments; keys are
//! serialized in sorted order so files are diff-stable.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn new() -> Self {
        KvMap::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
            })?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KvMap { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn set_list<I: IntoIterator<Item = impl ToString>>(&mut self, key: &str, values: I) {
        let joined = values
            .into_iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.entries.insert(key.to_string(), joined);
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::invalid(format!("missing config key `{key}`")))
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.raw(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::invalid(format!("key `{key}` is not an integer")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::invalid(format!("key `{key}` is not an integer")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::invalid(format!("key `{key}` is not a number")))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.raw(key)? {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::invalid(format!(
                "key `{key}` is not a boolean (got {other:?})"
            ))),
        }
    }

    /// Comma-separated integer list; empty string parses as an empty list.
    pub fn get_usize_list(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.raw(key)?.trim();
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|part| {
                part.trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("key `{key}`: bad integer {part:?}")))
            })
            .collect()
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}
