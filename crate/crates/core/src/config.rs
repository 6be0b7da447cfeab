//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment. Every key must appear in the
//! command's schema; values from the file are overridden by `--set` pairs and
//! unset keys fall back to the schema default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Bumped whenever a CSV layout or a schema key changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    PositiveFloat,
    Int,
    Bool,
    /// Comma-separated floats, possibly empty.
    FloatList,
    /// Comma-separated `p:q` exponent pairs; `inf` allowed.
    PairList,
    /// One of a fixed set of words.
    Choice(&'static [&'static str]),
    /// Free text such as a path; may be empty.
    Text,
}

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub kind: Kind,
    pub help: &'static str,
}

impl Key {
    pub const fn new(name: &'static str, default: &'static str, kind: Kind, help: &'static str) -> Self {
        Key {
            name,
            default,
            kind,
            help,
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: {what}"))
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| bad(key, s, "not a number"))?;
    if v.is_nan() {
        return Err(bad(key, s, "not a number"));
    }
    Ok(v)
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|item| parse_f64(key, item)).collect()
}

fn parse_pairs(key: &str, s: &str) -> Result<Vec<(f64, f64)>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|item| {
            let (p, q) = item.split_once(':').ok_or_else(|| bad(key, item, "expected p:q"))?;
            Ok((parse_f64(key, p)?, parse_f64(key, q)?))
        })
        .collect()
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, s, "expected true or false")),
    }
}

impl Kind {
    fn check(&self, key: &str, value: &str) -> Result<()> {
        match self {
            Kind::Float => parse_f64(key, value).and_then(|v| {
                if v.is_finite() {
                    Ok(())
                } else {
                    Err(bad(key, value, "must be finite"))
                }
            }),
            Kind::PositiveFloat => parse_f64(key, value).and_then(|v| {
                if v > 0.0 && v.is_finite() {
                    Ok(())
                } else {
                    Err(bad(key, value, "must be positive and finite"))
                }
            }),
            Kind::Int => value
                .trim()
                .parse::<u64>()
                .map(|_| ())
                .map_err(|_| bad(key, value, "not a non-negative integer")),
            Kind::Bool => parse_bool(key, value).map(|_| ()),
            Kind::FloatList => parse_list(key, value).map(|_| ()),
            Kind::PairList => parse_pairs(key, value).map(|_| ()),
            Kind::Choice(words) => {
                if words.contains(&value.trim()) {
                    Ok(())
                } else {
                    Err(bad(key, value, &format!("expected one of {}", words.join(", "))))
                }
            }
            Kind::Text => Ok(()),
        }
    }
}

/// Parses file text into ordered `(key, value)` pairs with their line numbers.
pub fn parse_text(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((i + 1, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// A fully resolved configuration: every schema key has a validated value.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    command: String,
    values: BTreeMap<&'static str, String>,
    order: Vec<&'static str>,
}

impl Config {
    /// Layers schema defaults, then `file_text`, then `overrides`.
    pub fn resolve(command: &str, schema: &[Key], file_text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let lookup = |k: &str| -> Result<&Key> {
            schema.iter().find(|key| key.name == k).ok_or_else(|| {
                let known: Vec<&str> = schema.iter().map(|key| key.name).collect();
                Error::Config(format!(
                    "unknown key {k:?} for {command}; known keys: {}",
                    known.join(", ")
                ))
            })
        };
        let mut values: BTreeMap<&'static str, String> =
            schema.iter().map(|k| (k.name, k.default.to_string())).collect();
        if let Some(text) = file_text {
            let mut seen = BTreeMap::new();
            for (line, k, v) in parse_text(text)? {
                let key = lookup(&k)?;
                if let Some(prev) = seen.insert(key.name, line) {
                    return Err(Error::Config(format!("key {k:?} set twice (lines {prev} and {line})")));
                }
                values.insert(key.name, v);
            }
        }
        for item in overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {item:?}")))?;
            let key = lookup(k.trim())?;
            values.insert(key.name, v.trim().to_string());
        }
        for key in schema {
            key.kind.check(key.name, &values[key.name])?;
        }
        Ok(Config {
            command: command.to_string(),
            values,
            order: schema.iter().map(|k| k.name).collect(),
        })
    }

    pub fn load(command: &str, schema: &[Key], path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(
                std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            ),
            None => None,
        };
        Config::resolve(command, schema, text.as_deref(), overrides)
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("key {key:?} is not in the {} schema", self.command))
    }

    pub fn text(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.raw(key))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let s = self.raw(key);
        s.trim().parse().map_err(|_| bad(key, s, "not a non-negative integer"))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        let s = self.raw(key);
        s.trim().parse().map_err(|_| bad(key, s, "not a non-negative integer"))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        parse_bool(key, self.raw(key))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        parse_list(key, self.raw(key))
    }

    pub fn pairs(&self, key: &str) -> Result<Vec<(f64, f64)>> {
        parse_pairs(key, self.raw(key))
    }

    pub fn parsed<T: FromStr<Err = Error>>(&self, key: &str) -> Result<T> {
        self.raw(key).trim().parse()
    }

    /// `key = value` lines in schema order.
    pub fn lines(&self) -> Vec<String> {
        self.order.iter().map(|k| format!("{k} = {}", self.values[k])).collect()
    }

    /// Comment block opening every CSV the CLI writes.
    pub fn csv_preamble(&self) -> String {
        let mut s = format!(
            "# kfp schema_version = {SCHEMA_VERSION}\n# command = {}\n",
            self.command
        );
        for line in self.lines() {
            s.push_str("# ");
            s.push_str(&line);
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.lines() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &[Key] = &[
        Key::new("dt", "0.01", Kind::PositiveFloat, "step"),
        Key::new("times", "1,2", Kind::FloatList, "times"),
        Key::new("pairs", "1:inf", Kind::PairList, "pairs"),
        Key::new("mode", "a", Kind::Choice(&["a", "b"]), "mode"),
        Key::new("count", "3", Kind::Int, "count"),
        Key::new("flag", "false", Kind::Bool, "flag"),
    ];

    #[test]
    fn defaults_file_and_overrides_layer() {
        let text = "# comment\ndt = 0.05   # trailing\n\ntimes = 0.5, 1.5\n";
        let c = Config::resolve("x", SCHEMA, Some(text), &["dt=0.2".into(), "mode = b".into()]).unwrap();
        assert_eq!(c.f64("dt").unwrap(), 0.2);
        assert_eq!(c.list("times").unwrap(), vec![0.5, 1.5]);
        assert_eq!(c.text("mode"), "b");
        assert_eq!(c.usize("count").unwrap(), 3);
        assert!(!c.bool("flag").unwrap());
        assert_eq!(c.pairs("pairs").unwrap(), vec![(1.0, f64::INFINITY)]);
        assert_eq!(c.lines()[0], "dt = 0.2");
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        assert!(matches!(
            Config::resolve("x", SCHEMA, Some("speed = 3"), &[]),
            Err(Error::Config(_))
        ));
        assert!(Config::resolve("x", SCHEMA, None, &["speed=3".into()]).is_err());
        assert!(Config::resolve("x", SCHEMA, Some("dt = 1\ndt = 2"), &[]).is_err());
        assert!(Config::resolve("x", SCHEMA, Some("dt 1"), &[]).is_err());
        assert!(Config::resolve("x", SCHEMA, None, &["dt".into()]).is_err());
    }

    #[test]
    fn values_are_validated() {
        for bad in [
            "dt=0",
            "dt=-1",
            "dt=abc",
            "times=1,,2",
            "pairs=1-2",
            "mode=c",
            "count=-1",
            "flag=maybe",
            "dt=nan",
        ] {
            assert!(Config::resolve("x", SCHEMA, None, &[bad.into()]).is_err(), "{bad}");
        }
        let c = Config::resolve("x", SCHEMA, None, &["times=".into()]).unwrap();
        assert!(c.list("times").unwrap().is_empty());
    }

    #[test]
    fn preamble_carries_version_and_every_key() {
        let c = Config::resolve("demo", SCHEMA, None, &[]).unwrap();
        let pre = c.csv_preamble();
        assert!(pre.starts_with(&format!("# kfp schema_version = {SCHEMA_VERSION}\n")));
        assert!(pre.contains("# command = demo\n"));
        assert_eq!(pre.lines().count(), SCHEMA.len() + 2);
        assert!(pre.lines().all(|l| l.starts_with('#')));
    }
}
