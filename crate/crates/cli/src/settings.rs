//! Flat `key=value` settings from a config file, overridden by flags.
//!
//! A section such as `target` can be given whole (`target=banana:dim=2`),
//! by kind (`target.kind=banana`) or parameter by parameter
//! (`target.curvature=0.5`). When a flag names a different kind than the
//! file, the file's parameters for that section are dropped.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use mcmc_core::{Descriptor, Error};

/// A failed run, mapped onto an exit status and a JSON error line.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config { field: String, message: String },
    Io { path: String, message: String },
    Divergence(String),
    Runtime(String),
}

impl Failure {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Failure::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Failure::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Io { .. } => 1,
            Failure::Config { .. } => 2,
            Failure::Divergence(_) | Failure::Runtime(_) => 3,
        }
    }

    /// One-line JSON: `{"error": kind, "field": name-or-null, "message": text}`.
    pub fn json_line(&self) -> String {
        let (kind, field, message) = match self {
            Failure::Config { field, message } => ("config", Some(field.clone()), message.clone()),
            Failure::Io { path, message } => ("io", Some(path.clone()), message.clone()),
            Failure::Divergence(m) => ("divergence", None, m.clone()),
            Failure::Runtime(m) => ("runtime", None, m.clone()),
        };
        serde_json::json!({ "error": kind, "field": field, "message": message }).to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { field, message } => Failure::Config { field, message },
            Error::DimensionMismatch { .. } => Failure::config("x0", e.to_string()),
            Error::RejectedInput(_) | Error::InconsistentStrategy => Failure::config("input", e.to_string()),
            Error::Divergence { .. } => Failure::Divergence(e.to_string()),
            Error::UndefinedVariance | Error::DegenerateIntegrand(_) => Failure::Runtime(e.to_string()),
        }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// Parses `key=value` lines; blank lines and `#` comments are ignored.
pub fn parse_config_text(text: &str) -> Outcome<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("line {}", i + 1), format!("expected key=value, got `{line}`")))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Failure::config(format!("line {}", i + 1), "empty key"));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Failure::config(key, "given twice in the config file"));
        }
    }
    Ok(out)
}

/// Splits `key=value` strings passed with `--set`.
pub fn parse_assignments(items: &[String]) -> Outcome<Vec<(String, String)>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| Failure::config("set", format!("expected key=value, got `{s}`")))
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    flags: BTreeMap<String, String>,
}

impl Settings {
    pub fn new(file: BTreeMap<String, String>, flags: BTreeMap<String, String>) -> Self {
        Settings { file, flags }
    }

    /// Rejects any key that is neither a listed scalar nor inside a listed section.
    pub fn reject_unknown(&self, scalars: &[&str], sections: &[&str]) -> Outcome<()> {
        for key in self.file.keys().chain(self.flags.keys()) {
            let head = key.split('.').next().unwrap_or(key);
            let ok = if key.contains('.') {
                sections.contains(&head)
            } else {
                scalars.contains(&key.as_str()) || sections.contains(&key.as_str()) || key == "command"
            };
            if !ok {
                return Err(Failure::config(key.clone(), "unknown key"));
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.flags.get(key).or_else(|| self.file.get(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, expected: &str) -> Outcome<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Failure::config(key, format!("expected {expected}, got `{v}`"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Outcome<usize> {
        Ok(self.get(key, "a non-negative integer")?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Outcome<u64> {
        Ok(self.get(key, "a non-negative integer")?.unwrap_or(default))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Outcome<f64> {
        let v: f64 = self.get(key, "a number")?.unwrap_or(default);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Failure::config(key, "must be finite"))
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Outcome<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(Failure::config(key, format!("expected true or false, got `{v}`"))),
        }
    }

    pub fn required(&self, key: &str) -> Outcome<&str> {
        self.raw(key)
            .ok_or_else(|| Failure::config(key, "required but not given"))
    }

    /// Positive integer with a default.
    pub fn count_or(&self, key: &str, default: usize) -> Outcome<usize> {
        let v = self.usize_or(key, default)?;
        if v == 0 {
            return Err(Failure::config(key, "must be at least 1"));
        }
        Ok(v)
    }

    /// Merged descriptor for `section`, or `None` when nothing names it.
    pub fn descriptor(&self, section: &str) -> Outcome<Option<Descriptor>> {
        let mut current: Option<Descriptor> = None;
        for layer in [&self.file, &self.flags] {
            if let Some(text) = layer.get(section) {
                let d = Descriptor::parse(section, text)?;
                current = Some(merge(current, d));
            }
            if let Some(kind) = layer.get(&format!("{section}.kind")) {
                current = Some(merge(current, Descriptor::new(section, kind)));
            }
            let prefix = format!("{section}.");
            for (k, v) in layer.range(prefix.clone()..) {
                let Some(param) = k.strip_prefix(&prefix) else { break };
                if param == "kind" {
                    continue;
                }
                match current.as_mut() {
                    Some(d) => {
                        d.params.insert(param.to_string(), v.clone());
                    }
                    None => return Err(Failure::config(format!("{section}.kind"), "parameters given without a kind")),
                }
            }
        }
        Ok(current)
    }

    pub fn required_descriptor(&self, section: &str) -> Outcome<Descriptor> {
        self.descriptor(section)?
            .ok_or_else(|| Failure::config(section, "required but not given"))
    }
}

fn merge(base: Option<Descriptor>, top: Descriptor) -> Descriptor {
    match base {
        Some(mut b) if b.kind == top.kind => {
            b.params.extend(top.params);
            b
        }
        _ => top,
    }
}

/// Comma- or slash-separated list of numbers, e.g. an initial state.
pub fn parse_numbers(key: &str, text: &str) -> Outcome<Vec<f64>> {
    text.split([',', '/'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Failure::config(key, format!("expected numbers, got `{s}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(file: &str, flags: &[(&str, &str)]) -> Settings {
        let flags = flags.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Settings::new(parse_config_text(file).unwrap(), flags)
    }

    #[test]
    fn flags_override_file() {
        let s = settings("steps=100\nseed=3\n", &[("steps", "500")]);
        assert_eq!(s.usize_or("steps", 1).unwrap(), 500);
        assert_eq!(s.u64_or("seed", 0).unwrap(), 3);
    }

    #[test]
    fn section_layers_merge() {
        let s = settings("sampler.kind=mh\nsampler.sigma=2\n", &[]);
        assert_eq!(s.descriptor("sampler").unwrap().unwrap().to_string(), "mh:sigma=2");

        let s = settings("sampler=hmc:eps=0.1,steps=5\n", &[("sampler", "hmc:eps=0.2")]);
        assert_eq!(s.descriptor("sampler").unwrap().unwrap().to_string(), "hmc:eps=0.2,steps=5");

        let s = settings("sampler=hmc:eps=0.1\n", &[("sampler", "mh:sigma=1")]);
        assert_eq!(s.descriptor("sampler").unwrap().unwrap().to_string(), "mh:sigma=1");

        let s = settings("sampler.sigma=2\n", &[]);
        assert!(s.descriptor("sampler").is_err());
        assert!(settings("", &[]).descriptor("target").unwrap().is_none());
    }

    #[test]
    fn unknown_keys_rejected() {
        let s = settings("stepz=10\n", &[]);
        let err = s.reject_unknown(&["steps"], &["target"]).unwrap_err();
        assert_eq!(err, Failure::config("stepz", "unknown key"));
        let s = settings("target.dim=2\ncommand=sample\n", &[]);
        assert!(s.reject_unknown(&["steps"], &["target"]).is_ok());
        assert!(settings("sampler.sigma=1\n", &[]).reject_unknown(&[], &["target"]).is_err());
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(parse_config_text("steps\n").is_err());
        assert!(parse_config_text("a=1\na=2\n").is_err());
        assert!(parse_config_text("# comment\n\n a = 1 \n").unwrap()["a"] == "1");
    }

    #[test]
    fn typed_values() {
        let s = settings("steps=abc\nflag=maybe\nx=inf\n", &[]);
        assert!(matches!(s.usize_or("steps", 1), Err(Failure::Config { .. })));
        assert!(s.bool_or("flag", false).is_err());
        assert!(s.f64_or("x", 0.0).is_err());
        assert!(settings("steps=0\n", &[]).count_or("steps", 5).is_err());
        assert_eq!(parse_numbers("x0", "1, -2/3").unwrap(), vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn error_lines_are_json() {
        let line = Failure::config("steps", "must be at least 1").json_line();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "config");
        assert_eq!(v["field"], "steps");
        assert_eq!(Failure::Divergence("x".into()).exit_code(), 3);
    }
}
