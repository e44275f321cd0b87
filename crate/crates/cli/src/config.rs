//! Layered settings: command-line flags over a JSON config file over defaults.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

/// Keys read from an optional JSON object; flags take precedence.
#[derive(Debug, Default)]
pub struct Layers {
    file: Map<String, Value>,
}

impl Layers {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Layers::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        match serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))? {
            Value::Object(file) => Ok(Layers { file }),
            _ => Err(anyhow!("config {} must be a JSON object", path.display())),
        }
    }

    fn from_file<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.file.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .with_context(|| format!("config key `{key}` has the wrong type")),
        }
    }

    pub fn get<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.from_file(key),
        }
    }

    /// An off-by-default switch, turned on by the flag or the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.from_file(key)?.unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layers(json: &str) -> Layers {
        match serde_json::from_str(json).unwrap() {
            Value::Object(file) => Layers { file },
            _ => unreachable!(),
        }
    }

    #[test]
    fn precedence() {
        let l = layers(r#"{"folds": 5, "eta": 1.5}"#);
        assert_eq!(l.get(Some(3usize), "folds", 10).unwrap(), 3);
        assert_eq!(l.get(None, "folds", 10usize).unwrap(), 5);
        assert_eq!(l.get(None, "epsilon", 0.1).unwrap(), 0.1);
        assert_eq!(l.get(None::<f64>, "eta", 0.0).unwrap(), 1.5);
    }

    #[test]
    fn wrong_type_is_an_error() {
        let l = layers(r#"{"folds": "many"}"#);
        assert!(l.get(None, "folds", 10usize).is_err());
    }

    #[test]
    fn switches() {
        let l = layers(r#"{"no_truncate": true}"#);
        assert!(l.switch(false, "no_truncate").unwrap());
        assert!(!Layers::default().switch(false, "no_truncate").unwrap());
        assert!(Layers::default().switch(true, "no_truncate").unwrap());
    }
}
