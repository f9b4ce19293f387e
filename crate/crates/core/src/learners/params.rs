use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single hyperparameter value as it appears in configs and grid files.
/// Absent values (`None` in a grid) are spelled as the text `"none"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
    Ints(Vec<i64>),
}

impl ParamValue {
    pub fn is_none(&self) -> bool {
        matches!(self, ParamValue::Text(t) if t.eq_ignore_ascii_case("none"))
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(i) => Some(*i),
            ParamValue::Float(f) if f.fract() == 0.0 => Some(*f as i64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Text(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Text(t) => f.write_str(t),
            ParamValue::Ints(v) => {
                let parts: Vec<String> = v.iter().map(i64::to_string).collect();
                write!(f, "({})", parts.join(","))
            }
        }
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<i32> for ParamValue {
    fn from(v: i32) -> Self {
        ParamValue::Int(v as i64)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

impl From<Vec<i64>> for ParamValue {
    fn from(v: Vec<i64>) -> Self {
        ParamValue::Ints(v)
    }
}

/// Typed, validated access to a hyperparameter map. Every lookup marks the
/// key as consumed; [`ParamReader::finish`] rejects keys nobody asked for.
pub(crate) struct ParamReader<'a> {
    algorithm: &'static str,
    params: &'a BTreeMap<String, ParamValue>,
    seen: Vec<&'static str>,
}

impl<'a> ParamReader<'a> {
    pub fn new(algorithm: &'static str, params: &'a BTreeMap<String, ParamValue>) -> Self {
        ParamReader {
            algorithm,
            params,
            seen: Vec::new(),
        }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a ParamValue> {
        self.seen.push(key);
        self.params.get(key)
    }

    fn bad(&self, key: &str, v: &ParamValue, expected: &str) -> Error {
        Error::Config(format!(
            "{}: `{key}` = {v} is not {expected}",
            self.algorithm
        ))
    }

    pub fn f64_or(&mut self, key: &'static str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) if v.is_none() => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.bad(key, v, "a finite number")),
        }
    }

    pub fn opt_f64(&mut self, key: &'static str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) if v.is_none() => Ok(None),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| self.bad(key, v, "a finite number")),
        }
    }

    pub fn usize_or(&mut self, key: &'static str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_i64()
                .filter(|i| *i >= 0)
                .map(|i| i as usize)
                .ok_or_else(|| self.bad(key, v, "a non-negative integer")),
        }
    }

    /// Integer where `none` or any negative value means "unlimited".
    pub fn opt_limit(&mut self, key: &'static str, default: Option<usize>) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(default),
            Some(v) if v.is_none() => Ok(None),
            Some(v) => match v.as_i64() {
                Some(i) if i < 0 => Ok(None),
                Some(i) => Ok(Some(i as usize)),
                None => Err(self.bad(key, v, "an integer or none")),
            },
        }
    }

    pub fn choice(
        &mut self,
        key: &'static str,
        options: &[&'static str],
        default: &'static str,
    ) -> Result<&'static str> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => {
                let text = v.to_string().to_ascii_lowercase();
                options
                    .iter()
                    .find(|o| **o == text)
                    .copied()
                    .ok_or_else(|| self.bad(key, v, &format!("one of {options:?}")))
            }
        }
    }

    pub fn ints_or(&mut self, key: &'static str, default: &[i64]) -> Result<Vec<i64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(ParamValue::Ints(v)) => Ok(v.clone()),
            Some(v) => Err(self.bad(key, v, "a list of integers")),
        }
    }

    pub fn finish(self) -> Result<()> {
        for key in self.params.keys() {
            if !self.seen.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "{}: unknown hyperparameter `{key}`",
                    self.algorithm
                )));
            }
        }
        Ok(())
    }
}
