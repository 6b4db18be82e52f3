//! Flat `key = value` configuration text.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Lists are comma separated and matrices use `;` between rows:
//!
//! ```text
//! # experiment 1, quick run
//! trials = 20
//! betas = -0.9, 0, 0.9
//! w = 1, 0.5; -0.7, 1.2
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(bad(format!("line {}: invalid key `{key}`", lineno + 1)));
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(bad(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Apply a `key=value` override, replacing any file value.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| bad(format!("override `{assignment}` is not key=value")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(bad(format!("override `{assignment}` has an empty key")));
        }
        self.entries.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Remove and parse `key`, leaving `target` untouched when absent.
    pub fn take<T: FromStr>(&mut self, key: &str, target: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.entries.remove(key) {
            *target = v.parse().map_err(|e| bad(format!("`{key} = {v}`: {e}")))?;
        }
        Ok(())
    }

    pub fn take_list<T: FromStr>(&mut self, key: &str, target: &mut Vec<T>) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.entries.remove(key) {
            *target = parse_list(&v).map_err(|e| bad(format!("`{key}`: {e}")))?;
        }
        Ok(())
    }

    pub fn take_matrix(&mut self, key: &str, target: &mut DMatrix<f64>) -> Result<()> {
        if let Some(v) = self.entries.remove(key) {
            *target = parse_matrix(&v).map_err(|e| bad(format!("`{key}`: {e}")))?;
        }
        Ok(())
    }

    /// Fail if any key was never consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.entries.into_keys().collect();
            Err(bad(format!("unknown keys: {}", keys.join(", "))))
        }
    }
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let out: Vec<T> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|e| format!("`{}`: {e}", p.trim()))
        })
        .collect::<std::result::Result<_, _>>()?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn parse_matrix(s: &str) -> std::result::Result<DMatrix<f64>, String> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(parse_list)
        .collect::<std::result::Result<_, _>>()?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err("ragged matrix rows".into());
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Matrix in the same `a, b; c, d` notation the parser accepts.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    m.row_iter()
        .map(|r| {
            r.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_matrices() {
        let mut kv = KvConfig::parse(
            "# header\n trials = 20  # inline\n\nbetas = -0.9, 0, 0.9\nw = 1, 2; 3, 4\n",
        )
        .unwrap();
        let mut trials = 0usize;
        let mut betas: Vec<f64> = vec![];
        let mut w = DMatrix::zeros(0, 0);
        let mut untouched = 7u64;
        kv.take("trials", &mut trials).unwrap();
        kv.take_list("betas", &mut betas).unwrap();
        kv.take_matrix("w", &mut w).unwrap();
        kv.take("seed", &mut untouched).unwrap();
        kv.finish().unwrap();
        assert_eq!(trials, 20);
        assert_eq!(betas, vec![-0.9, 0.0, 0.9]);
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(untouched, 7);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KvConfig::parse("trials 20").is_err());
        assert!(KvConfig::parse("a = 1\na = 2").is_err());
        assert!(KvConfig::parse("two words = 1").is_err());
        let mut kv = KvConfig::parse("trials = many").unwrap();
        assert!(kv.take("trials", &mut 0usize).is_err());
        assert!(KvConfig::parse("typo = 1").unwrap().finish().is_err());
        let mut kv = KvConfig::parse("w = 1, 2; 3").unwrap();
        assert!(kv.take_matrix("w", &mut DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut kv = KvConfig::parse("trials = 20").unwrap();
        kv.set("trials=5").unwrap();
        assert!(kv.set("novalue").is_err());
        let mut t = 0usize;
        kv.take("trials", &mut t).unwrap();
        assert_eq!(t, 5);
    }

    #[test]
    fn matrix_notation_round_trips() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 2.25, 0.1, 3.0, -7.0]);
        let mut kv = KvConfig::parse(&format!("w = {}", format_matrix(&m))).unwrap();
        let mut back = DMatrix::zeros(0, 0);
        kv.take_matrix("w", &mut back).unwrap();
        assert_eq!(back, m);
    }
}
