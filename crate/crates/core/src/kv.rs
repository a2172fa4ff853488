//! Flat `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment line, blank lines are ignored.
//! Keys are unique; the value is everything after the first `=`, trimmed.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: format!("expected `key = value`, found `{line}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            if entries
                .insert(key.to_string(), (i + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Malformed {
                    line: i + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::InvalidConfig(format!("missing key `{key}`")))
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value for `{key}`: `{v}`"))),
        }
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| Error::InvalidConfig(format!("bad value for `{key}`: `{v}`")))
    }

    /// Entries whose key starts with `prefix`, with the prefix removed.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.entries
            .iter()
            .filter_map(move |(k, (_, v))| k.strip_prefix(prefix).map(|rest| (rest, v.as_str())))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Splits a comma-separated list, dropping empty items.
pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let kv = KeyValues::parse("# header\nseed = 7\n\nagents = A, B ,C\n").unwrap();
        assert_eq!(kv.parse_required::<u64>("seed").unwrap(), 7);
        assert_eq!(split_list(kv.get("agents").unwrap()), vec!["A", "B", "C"]);
        assert_eq!(kv.parse_or("missing", 3usize).unwrap(), 3);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(matches!(
            KeyValues::parse("a = 1\na = 2"),
            Err(Error::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            KeyValues::parse("no equals sign"),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn prefix_iteration() {
        let kv = KeyValues::parse("transition.A = B:1\ntransition.B = A:1\nseed = 1").unwrap();
        let rows: Vec<_> = kv.with_prefix("transition.").collect();
        assert_eq!(rows, vec![("A", "B:1"), ("B", "A:1")]);
    }
}
