//! Plain-text experiment configuration.
//!
//! ```text
//! # comment
//! [section]
//! key = value    # trailing comment
//! ```
//!
//! Keys before the first header belong to the unnamed section `""`.
//! Overrides of the form `section.key=value` replace file entries.

use crate::arithmetic::{Frequency, DEFAULT_CAP};
use crate::error::{Error, Result};
use crate::potentials::Potential;
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    /// 1-based source line; 0 for command-line overrides.
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
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
                    .ok_or_else(|| config_err(line, format!("unterminated section header `{body}`")))?
                    .trim();
                if !is_name(name) {
                    return Err(config_err(line, format!("bad section name `{name}`")));
                }
                section = name.to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("expected `key = value`, got `{body}`")))?;
            let k = k.trim();
            if !is_name(k) {
                return Err(config_err(line, format!("bad key `{k}`")));
            }
            let map = cfg.sections.entry(section.clone()).or_default();
            if let Some(prev) = map.get(k) {
                return Err(config_err(
                    line,
                    format!("duplicate key `{k}` (first set on line {})", prev.line),
                ));
            }
            map.insert(
                k.to_string(),
                Entry {
                    value: v.trim().to_string(),
                    line,
                },
            );
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Applies `section.key=value`.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(0, format!("override `{assignment}` is not `section.key=value`")))?;
        let (section, key) = match path.trim().rsplit_once('.') {
            Some((s, k)) => (s.trim(), k.trim()),
            None => ("", path.trim()),
        };
        if !is_name(key) || !(section.is_empty() || is_name(section)) {
            return Err(config_err(0, format!("bad override key `{path}`")));
        }
        self.sections.entry(section.to_string()).or_default().insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                line: 0,
            },
        );
        Ok(())
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|m| m.get(key))
    }

    /// Section contents as plain strings.
    pub fn section_values(&self, section: &str) -> BTreeMap<String, String> {
        self.sections
            .get(section)
            .map(|m| m.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect())
            .unwrap_or_default()
    }

    fn section_line(&self, section: &str) -> usize {
        self.sections
            .get(section)
            .and_then(|m| m.values().map(|e| e.line).filter(|&l| l > 0).min())
            .unwrap_or(0)
    }

    /// Parses a value, reporting the line and `section.key` on failure.
    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|_| config_err(e.line, format!("{section}.{key}: cannot parse `{}`", e.value))),
        }
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.get(section, key)?
            .ok_or_else(|| config_err(self.section_line(section), format!("missing key {section}.{key}")))
    }

    /// Finite float with a range check.
    pub fn float_in(&self, section: &str, key: &str, default: f64, lo: f64, hi: f64) -> Result<f64> {
        let v: f64 = self.get_or(section, key, default)?;
        if !(v.is_finite() && v >= lo && v <= hi) {
            let line = self.entry(section, key).map(|e| e.line).unwrap_or(0);
            return Err(config_err(
                line,
                format!("{section}.{key} = {v} is outside [{lo}, {hi}]"),
            ));
        }
        Ok(v)
    }

    /// Integer with a lower bound.
    pub fn count_at_least(&self, section: &str, key: &str, default: usize, min: usize) -> Result<usize> {
        let v: usize = self.get_or(section, key, default)?;
        if v < min {
            let line = self.entry(section, key).map(|e| e.line).unwrap_or(0);
            return Err(config_err(line, format!("{section}.{key} = {v} must be >= {min}")));
        }
        Ok(v)
    }

    /// The `[potential]` section.
    pub fn potential(&self) -> Result<Potential> {
        if !self.has_section("potential") {
            return Err(config_err(0, "missing [potential] section"));
        }
        Potential::from_config(&self.section_values("potential")).map_err(|e| match e {
            Error::Parameter(msg) => config_err(self.section_line("potential"), msg),
            other => other,
        })
    }

    /// A frequency at `section.key`.
    pub fn frequency(&self, section: &str, key: &str) -> Result<Option<Frequency>> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => parse_frequency(&e.value)
                .map(Some)
                .map_err(|err| config_err(e.line, format!("{section}.{key}: {err}"))),
        }
    }
}

/// `golden`, `p/q`, or a decimal (treated as irrational with the default cap).
pub fn parse_frequency(s: &str) -> Result<Frequency> {
    let s = s.trim();
    if s == "golden" {
        return Ok(Frequency::golden());
    }
    if let Some((p, q)) = s.split_once('/') {
        let p: u64 = p
            .trim()
            .parse()
            .map_err(|_| Error::param(format!("bad numerator in `{s}`")))?;
        let q: u64 = q
            .trim()
            .parse()
            .map_err(|_| Error::param(format!("bad denominator in `{s}`")))?;
        return Frequency::rational(p, q);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::param(format!("`{s}` is not a frequency")))?;
    Frequency::irrational(v, DEFAULT_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# experiment
seed = 7
[potential]
kind = poisson-peak   # analytic peak
K = 10
lambda = 1e4

[scan]
e_min = -3
e_count = 512
";

    #[test]
    fn parses_sections_and_comments() {
        let c = Config::parse(SAMPLE).unwrap();
        assert_eq!(c.get::<u64>("", "seed").unwrap(), Some(7));
        assert_eq!(c.entry("potential", "kind").unwrap().value, "poisson-peak");
        assert_eq!(c.entry("potential", "kind").unwrap().line, 5);
        assert_eq!(c.require::<f64>("scan", "e_min").unwrap(), -3.0);
        let v = c.potential().unwrap();
        assert_eq!(v.height(), 10.0);
    }

    #[test]
    fn diagnostics_carry_lines() {
        let bad = "[scan]\ne_count = many\n";
        let c = Config::parse(bad).unwrap();
        match c.get::<usize>("scan", "e_count") {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("scan.e_count"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(Config::parse("[scan\n"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(
            Config::parse("a = 1\na = 2\n"),
            Err(Error::Config { line: 2, .. })
        ));
        assert!(matches!(
            Config::parse("\n\njunk\n"),
            Err(Error::Config { line: 3, .. })
        ));
        let c = Config::parse("[scan]\ne_count = 1\n").unwrap();
        assert!(matches!(
            c.count_at_least("scan", "e_count", 2, 2),
            Err(Error::Config { line: 2, .. })
        ));
    }

    #[test]
    fn overrides_replace_entries() {
        let mut c = Config::parse(SAMPLE).unwrap();
        c.set("scan.e_count=16").unwrap();
        c.set("seed = 9").unwrap();
        assert_eq!(c.get::<usize>("scan", "e_count").unwrap(), Some(16));
        assert_eq!(c.get::<u64>("", "seed").unwrap(), Some(9));
        assert!(c.set("nonsense").is_err());
    }

    #[test]
    fn frequencies() {
        assert_eq!(parse_frequency("1/2").unwrap().as_rational(), Some((1, 2)));
        assert_eq!(parse_frequency("2/4").unwrap().as_rational(), Some((1, 2)));
        assert!(!parse_frequency("golden").unwrap().is_rational());
        assert!(parse_frequency("0.3819660112501051").is_ok());
        assert!(parse_frequency("x").is_err());
    }
}
