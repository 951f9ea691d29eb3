//! Flat `key = value` configuration with `[section]` headers.
//!
//! Lines starting with `#` or `;` are comments, as is anything after ` #`.
//! Numbers accept a `pi` factor: `4pi`, `4*pi`, `pi`, `-0.5pi`.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("key `{key}`: {message}")]
    Key { key: String, message: String },
    #[error("section [{section}]: {message}")]
    Section { section: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl ConfigError {
    pub fn key(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Key { key: key.into(), message: message.into() }
    }
}

#[derive(Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// One `[section]` and its entries, remembering which keys were read.
#[derive(Debug)]
pub struct Section {
    pub name: String,
    pub line: usize,
    entries: Vec<Entry>,
    used: RefCell<BTreeSet<String>>,
}

impl Section {
    fn new(name: &str, line: usize) -> Self {
        Section { name: name.to_string(), line, entries: Vec::new(), used: RefCell::new(BTreeSet::new()) }
    }

    fn full(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.iter().any(|e| e.key == key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        let e = self.entries.iter().find(|e| e.key == key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(e.value.as_str())
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => parse_number(v)
                .map(Some)
                .ok_or_else(|| ConfigError::key(self.full(key), format!("`{v}` is not a number"))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.f64(key)?.ok_or_else(|| ConfigError::key(self.full(key), "missing"))
    }

    /// A float that must be finite and strictly positive.
    pub fn positive_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.f64_or(key, default)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(ConfigError::key(self.full(key), format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| ConfigError::key(self.full(key), format!("`{v}` is not a non-negative integer"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "yes" | "on" | "1") => Ok(true),
            Some("false" | "no" | "off" | "0") => Ok(false),
            Some(v) => Err(ConfigError::key(self.full(key), format!("`{v}` is not a boolean"))),
        }
    }

    /// Comma-separated numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|p| {
                parse_number(p.trim()).ok_or_else(|| ConfigError::key(self.full(key), format!("`{}` is not a number", p.trim())))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        Ok(self.list(key)?.unwrap_or_else(|| default.to_vec()))
    }

    /// Fails on the first key nobody asked for.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.entries.iter().find(|e| !used.contains(&e.key)) {
            Some(e) => Err(ConfigError::key(self.full(&e.key), format!("unknown key (line {})", e.line))),
            None => Ok(()),
        }
    }
}

#[derive(Debug)]
pub struct ConfigFile {
    sections: Vec<Section>,
    used: RefCell<BTreeSet<String>>,
    /// Stands in for absent sections.
    empty: Section,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: Vec<Section> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| !n.is_empty() && !n.contains(char::is_whitespace))
                    .ok_or_else(|| ConfigError::Syntax { line, message: format!("bad section header `{body}`") })?;
                if sections.iter().any(|s| s.name == name) {
                    return Err(ConfigError::Syntax { line, message: format!("section [{name}] repeated") });
                }
                sections.push(Section::new(name, line));
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, message: format!("expected key = value, got `{body}`") })?;
            let key = key.trim();
            let value = value.trim();
            let section = sections
                .last_mut()
                .ok_or_else(|| ConfigError::Syntax { line, message: format!("key `{key}` before any section") })?;
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax { line, message: format!("bad key `{key}`") });
            }
            if section.has(key) {
                return Err(ConfigError::key(section.full(key), format!("repeated on line {line}")));
            }
            section.entries.push(Entry { key: key.to_string(), value: value.to_string(), line });
        }
        Ok(ConfigFile { sections, used: RefCell::new(BTreeSet::new()), empty: Section::new("", 0) })
    }

    /// The named section, or an empty one if absent.
    pub fn section(&self, name: &str) -> &Section {
        self.used.borrow_mut().insert(name.to_string());
        match self.sections.iter().find(|s| s.name == name) {
            Some(s) => s,
            None => &self.empty,
        }
    }

    pub fn require_section(&self, name: &str) -> Result<&Section, ConfigError> {
        self.used.borrow_mut().insert(name.to_string());
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ConfigError::Section { section: name.to_string(), message: "missing".into() })
    }

    /// Sections whose name starts with `prefix.`, with the remainder of the name.
    pub fn sections_with_prefix<'a>(&'a self, prefix: &str) -> Vec<(&'a str, &'a Section)> {
        let p = format!("{prefix}.");
        let out: Vec<_> = self
            .sections
            .iter()
            .filter_map(|s| s.name.strip_prefix(&p).map(|rest| (rest, s)))
            .collect();
        for (_, s) in &out {
            self.used.borrow_mut().insert(s.name.clone());
        }
        out
    }

    /// Fails on unknown sections or keys.
    pub fn finish(&self) -> Result<(), ConfigError> {
        for s in &self.sections {
            if !self.used.borrow().contains(&s.name) {
                return Err(ConfigError::Section { section: s.name.clone(), message: format!("unknown section (line {})", s.line) });
            }
            s.finish()?;
        }
        Ok(())
    }
}

fn strip_comment(line: &str) -> &str {
    let t = line.trim_start();
    if t.starts_with('#') || t.starts_with(';') {
        return "";
    }
    match line.find(" #") {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Parse a float with an optional `pi` factor.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some(head) = s.strip_suffix("pi") {
        let head = head.trim_end().trim_end_matches('*').trim_end();
        let coef = match head {
            "" | "+" => 1.0,
            "-" => -1.0,
            h => h.parse::<f64>().ok()?,
        };
        return Some(coef * PI);
    }
    s.parse::<f64>().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_with_pi() {
        assert_eq!(parse_number("4pi"), Some(4.0 * PI));
        assert_eq!(parse_number("4 * pi"), Some(4.0 * PI));
        assert_eq!(parse_number("pi"), Some(PI));
        assert_eq!(parse_number("-pi"), Some(-PI));
        assert_eq!(parse_number("1e-3"), Some(1e-3));
        assert_eq!(parse_number("four"), None);
        assert_eq!(parse_number(""), None);
    }

    #[test]
    fn sections_and_unknown_keys() {
        let c = ConfigFile::parse("# c\n[a]\nx = 1 # trailing\ny = 2pi\n[check.foo]\ntolerance = 0.1\n").unwrap();
        let a = c.section("a");
        assert_eq!(a.f64_or("x", 0.0).unwrap(), 1.0);
        assert!(c.finish().unwrap_err().to_string().contains("a.y"));
        assert_eq!(a.f64_or("y", 0.0).unwrap(), 2.0 * PI);
        assert!(c.finish().unwrap_err().to_string().contains("check.foo"));
        let checks = c.sections_with_prefix("check");
        assert_eq!(checks[0].0, "foo");
        checks[0].1.f64("tolerance").unwrap();
        c.finish().unwrap();
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let e = ConfigFile::parse("[a]\nnonsense\n").unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 2, .. }));
        assert!(ConfigFile::parse("x = 1\n").is_err());
        assert!(ConfigFile::parse("[a]\nx = 1\nx = 2\n").unwrap_err().to_string().contains("a.x"));
        assert!(ConfigFile::parse("[a]\n[a]\n").is_err());
    }

    #[test]
    fn bad_values_name_the_key() {
        let c = ConfigFile::parse("[s]\nn = -3\nb = maybe\nl = 1, two\n").unwrap();
        let s = c.section("s");
        assert!(s.usize_or("n", 1).unwrap_err().to_string().contains("s.n"));
        assert!(s.bool_or("b", true).unwrap_err().to_string().contains("s.b"));
        assert!(s.list("l").unwrap_err().to_string().contains("s.l"));
    }
}
