//! Flat `key=value` text configuration.
//!
//! Every configuration struct in the crate implements [`KvConfig`]; files and
//! command-line overrides go through the same `set` path so unknown keys and
//! malformed values are rejected uniformly.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{NuqError, Result};

pub trait KvConfig {
    /// Every accepted key with a one-line description.
    fn key_docs() -> &'static [(&'static str, &'static str)];

    fn set(&mut self, key: &str, value: &str) -> Result<()>;

    /// Current values, in `key_docs` order.
    fn entries(&self) -> Vec<(&'static str, String)>;

    fn validate(&self) -> Result<()>;

    fn to_kv_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (key, value) in parse_lines(text, origin)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for item in overrides {
            let item = item.as_ref();
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| NuqError::config(item, "override must have the form key=value"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| NuqError::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Help text listing every key and its current (default) value.
    fn help_listing(&self) -> String
    where
        Self: Sized,
    {
        let values = self.entries();
        let mut out = String::new();
        for ((key, doc), (_, value)) in Self::key_docs().iter().zip(values.iter()) {
            out.push_str(&format!("  {key:<22} {doc} [default: {value}]\n"));
        }
        out
    }
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_lines(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            NuqError::format(origin, format!("line {}: expected key=value, got `{line}`", lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    value
        .parse::<T>()
        .map_err(|e| NuqError::config(key, format!("cannot parse `{value}`: {e}")))
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(NuqError::config(key, format!("expected a boolean, got `{value}`"))),
    }
}

pub fn unknown_key(key: &str) -> NuqError {
    NuqError::config(key, "unknown key")
}

/// Formats floats so that they parse back to the identical value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
