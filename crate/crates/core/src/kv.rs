//! Plain-text `key = value` documents with optional `[section]` headers.
//!
//! Used for every manifest the crate writes and for run configuration
//! files. Lines starting with `#` are comments. Keys keep their order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    /// `(section, key, value)`; the unnamed leading section is `""`.
    entries: Vec<(String, String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut doc = KvDoc::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::format(origin, format!("line {}: unterminated section header", lineno + 1)))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(origin, format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::format(origin, format!("line {}: empty key", lineno + 1)));
            }
            if doc.get_in(&section, key).is_some() {
                return Err(Error::format(
                    origin,
                    format!("line {}: duplicate key `{key}`", lineno + 1),
                ));
            }
            doc.entries
                .push((section.clone(), key.to_string(), value.trim().to_string()));
        }
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.set_in("", key, value);
    }

    pub fn set_in(&mut self, section: &str, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self
            .entries
            .iter_mut()
            .find(|(s, k, _)| s == section && k == key)
        {
            Some(entry) => entry.2 = value,
            None => self.entries.push((section.into(), key.into(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.get_in("", key)
    }

    pub fn get_in(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(s, k, _)| s == section && k == key)
            .map(|(_, _, v)| v.as_str())
    }

    pub fn require(&self, key: &str, origin: &Path) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format(origin, format!("missing key `{key}`")))
    }

    pub fn parse_value<V: FromStr>(&self, key: &str, origin: &Path) -> Result<V> {
        let raw = self.require(key, origin)?;
        raw.parse()
            .map_err(|_| Error::format(origin, format!("cannot parse `{key} = {raw}`")))
    }

    pub fn sections(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        if self.entries.iter().any(|(s, _, _)| s.is_empty()) {
            out.push("");
        }
        for (s, _, _) in &self.entries {
            if !out.contains(&s.as_str()) {
                out.push(s);
            }
        }
        out
    }

    pub fn section_entries<'a>(&'a self, section: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries
            .iter()
            .filter(move |(s, _, _)| s == section)
            .map(|(_, k, v)| (k.as_str(), v.as_str()))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for section in self.sections() {
            if !section.is_empty() {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{section}]");
            }
            for (k, v) in self.section_entries(section) {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    /// SHA-256 of [`KvDoc::render`] as lowercase hex.
    pub fn digest(&self) -> String {
        Sha256::digest(self.render().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

/// Comma-separated list helper for manifest values.
pub fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn split_list<V: FromStr>(raw: &str, origin: &Path, key: &str) -> Result<Vec<V>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::format(origin, format!("bad list element `{s}` in `{key}`")))
        })
        .collect()
}
