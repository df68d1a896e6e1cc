//! Compact `kind:key=value,key=value` descriptors used to name targets,
//! samplers, estimators and constraints on the command line and in config
//! files.
//!
//! Vector values separate coordinates with `/` (`mean=1/-2`); lists of
//! vectors separate entries with `;` (`means=-4;4`).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Descriptor {
    pub kind: String,
    pub params: BTreeMap<String, String>,
    /// Prefix used when reporting offending fields, e.g. `target`.
    pub section: String,
}

impl Descriptor {
    pub fn new(section: &str, kind: &str) -> Self {
        Descriptor {
            kind: kind.to_string(),
            params: BTreeMap::new(),
            section: section.to_string(),
        }
    }

    pub fn parse(section: &str, text: &str) -> Result<Self> {
        let text = text.trim();
        let (kind, rest) = match text.split_once(':') {
            Some((k, r)) => (k.trim(), r),
            None => (text, ""),
        };
        if kind.is_empty() {
            return Err(Error::config(section, "missing kind"));
        }
        let mut d = Descriptor::new(section, kind);
        for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::config(section, format!("expected key=value, got `{item}`")))?;
            let k = k.trim();
            if d.params.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::config(d.field(k), "given twice"));
            }
        }
        Ok(d)
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn field(&self, key: &str) -> String {
        format!("{}.{}", self.section, key)
    }

    /// Fails on the first parameter not listed in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::config(
                self.field(k),
                format!("unknown parameter for kind `{}`", self.kind),
            )),
            None => Ok(()),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.params
            .get(key)
            .map(|v| parse_f64(&self.field(key), v))
            .transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.params.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(self.field(key), format!("expected a non-negative integer, got `{v}`"))),
            None => Ok(default),
        }
    }

    pub fn get_vector(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.params
            .get(key)
            .map(|v| parse_vector(&self.field(key), v))
            .transpose()
    }

    pub fn get_list(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        self.params
            .get(key)
            .map(|v| {
                v.split(';')
                    .map(|item| parse_vector(&self.field(key), item))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            write!(f, "{}{}={}", if i == 0 { ':' } else { ',' }, k, v)?;
        }
        Ok(())
    }
}

impl FromStr for Descriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Descriptor::parse("descriptor", s)
    }
}

pub fn parse_f64(field: &str, text: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::config(field, format!("expected a number, got `{text}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, format!("expected a finite number, got `{text}`")))
    }
}

/// Parses `a/b/c` into a vector.
pub fn parse_vector(field: &str, text: &str) -> Result<Vec<f64>> {
    text.split('/').map(|c| parse_f64(field, c)).collect()
}

/// Broadcasts a one-element vector to `dim` coordinates.
pub fn broadcast(field: &str, v: Vec<f64>, dim: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v),
        n => Err(Error::config(field, format!("expected 1 or {dim} coordinates, got {n}"))),
    }
}
