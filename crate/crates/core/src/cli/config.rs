//! Line-based `key = value` files with `[section]` headers.
//!
//! Keys before the first header live in the unnamed top-level section and are
//! addressed with an empty section name. Every key must be consumed by the
//! command reading the file; leftovers are reported as unknown.

use std::cell::Cell;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
    used: Cell<bool>,
}

#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: Vec<Entry>,
    origin: String,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_named(&text, &path.display().to_string())
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_named(text, "<config>")
    }

    fn parse_named(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = ConfigFile {
            entries: Vec::new(),
            origin: origin.to_string(),
        };
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("{origin}:{line}: unterminated section header")))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::Config(format!("{origin}:{line}: empty section name")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{line}: expected `key = value`")))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("{origin}:{line}: missing key")));
            }
            if cfg.entries.iter().any(|e| e.section == section && e.key == key) {
                return Err(Error::Config(format!("{origin}:{line}: duplicate key {}", cfg.qualified(&section, key))));
            }
            cfg.entries.push(Entry {
                section: section.clone(),
                key: key.to_string(),
                value: v.trim().to_string(),
                line,
                used: Cell::new(false),
            });
        }
        Ok(cfg)
    }

    fn qualified(&self, section: &str, key: &str) -> String {
        if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        }
    }

    /// Raw value of `section.key`, marking it as consumed.
    pub fn raw(&self, section: &str, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|e| e.section == section && e.key == key)
            .map(|e| {
                e.used.set(true);
                (e.value.as_str(), e.line)
            })
    }

    fn bad(&self, line: usize, section: &str, key: &str, value: &str, what: &str) -> Error {
        Error::Config(format!(
            "{}:{line}: {} = {value:?} is not {what}",
            self.origin,
            self.qualified(section, key)
        ))
    }

    /// Parsed scalar value.
    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| self.bad(line, section, key, v, std::any::type_name::<T>())),
        }
    }

    /// Comma-separated list parsed with `f`.
    pub fn list<T>(
        &self,
        section: &str,
        key: &str,
        what: &str,
        f: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<Vec<T>>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|item| f(item.trim()).ok_or_else(|| self.bad(line, section, key, v, what)))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// A single value parsed with `f`.
    pub fn with<T>(&self, section: &str, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => f(v).map(Some).ok_or_else(|| self.bad(line, section, key, v, what)),
        }
    }

    /// Fails on the first key nobody asked for.
    pub fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|e| !e.used.get()) {
            None => Ok(()),
            Some(e) => Err(Error::Config(format!(
                "{}:{}: unknown key {}",
                self.origin,
                e.line,
                self.qualified(&e.section, &e.key)
            ))),
        }
    }
}

/// `on`/`off`, `true`/`false`, `yes`/`no`.
pub fn parse_switch(s: &str) -> Option<bool> {
    match s {
        "on" | "true" | "yes" => Some(true),
        "off" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// A dropout rate or `off`.
pub fn parse_dropout(s: &str) -> Option<Option<f64>> {
    if s == "off" || s == "none" {
        return Some(None);
    }
    s.parse::<f64>().ok().filter(|p| (0.0..1.0).contains(p)).map(Some)
}

/// `lr:epochs` pairs.
pub fn parse_stage(s: &str) -> Option<(f64, usize)> {
    let (lr, ep) = s.split_once(':')?;
    Some((lr.trim().parse().ok()?, ep.trim().parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let c = ConfigFile::parse("seed = 3 # top\n\n[train]\nmomentum = 0.5\n[sweep]\nwidths = 2, 4\n").unwrap();
        assert_eq!(c.get::<u64>("", "seed").unwrap(), Some(3));
        assert_eq!(c.get::<f64>("train", "momentum").unwrap(), Some(0.5));
        assert_eq!(c.list("sweep", "widths", "a width", |s| s.parse::<usize>().ok()).unwrap(), Some(vec![2, 4]));
        assert_eq!(c.get::<f64>("train", "absent").unwrap(), None);
        c.finish().unwrap();
    }

    #[test]
    fn unknown_key_is_reported_with_line() {
        let c = ConfigFile::parse("[train]\nmomentum = 0.9\nmomentun = 0.9\n").unwrap();
        c.get::<f64>("train", "momentum").unwrap();
        let e = c.finish().unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(e.to_string().contains(":3: unknown key train.momentun"), "{e}");
    }

    #[test]
    fn malformed_lines_are_config_errors() {
        for text in ["[train\n", "novalue\n", "= 3\n", "a = 1\na = 2\n", "[]\n"] {
            assert!(matches!(ConfigFile::parse(text), Err(Error::Config(_))), "{text:?}");
        }
        let c = ConfigFile::parse("seed = x\n").unwrap();
        assert!(matches!(c.get::<u64>("", "seed"), Err(Error::Config(_))));
    }

    #[test]
    fn value_helpers() {
        assert_eq!(parse_switch("on"), Some(true));
        assert_eq!(parse_switch("maybe"), None);
        assert_eq!(parse_dropout("off"), Some(None));
        assert_eq!(parse_dropout("0.2"), Some(Some(0.2)));
        assert_eq!(parse_dropout("1.5"), None);
        assert_eq!(parse_stage("0.1:6"), Some((0.1, 6)));
        assert_eq!(parse_stage("0.1"), None);
    }
}
