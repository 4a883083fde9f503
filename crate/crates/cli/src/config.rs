//! Flat key=value configuration with `[section]` headers.
//!
//! The format is deliberately dumb: one key per line, `#` comments, no
//! nesting, no quoting. Unknown sections and keys are rejected with line
//! numbers so a typo cannot silently fall back to a default. A resolved
//! config renders back to the same format (the run manifest), and re-running
//! from a manifest reproduces the run bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// Section/key schema, in canonical render order.
const SCHEMA: &[(&str, &[&str])] = &[
    ("system", &["m", "theta"]),
    ("network", &["graph", "agents", "edge_prob", "directed", "edges"]),
    ("gains", &["h", "epsilon", "strengthened", "c_star", "c_delta_star"]),
    ("schedule", &["levels"]),
    ("run", &["gamma", "p0", "horizon", "seed"]),
    ("spectral", &["lambdas", "h", "probes"]),
    ("power", &["lambda", "h", "epsilon", "s_max", "trials", "seed"]),
];

fn known_section(section: &str) -> Option<&'static [&'static str]> {
    SCHEMA
        .iter()
        .find(|(s, _)| *s == section)
        .map(|(_, keys)| *keys)
}

/// Parsed (or programmatically resolved) configuration values.
#[derive(Clone, Debug, Default)]
pub struct Config {
    values: BTreeMap<(String, String), String>,
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("{origin}:{lineno}: unterminated section header"))?
                    .trim()
                    .to_string();
                if known_section(&name).is_none() {
                    bail!("{origin}:{lineno}: unknown section [{name}]");
                }
                section = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{lineno}: expected `key = value`"))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let section = section
                .clone()
                .ok_or_else(|| anyhow!("{origin}:{lineno}: key `{key}` before any [section]"))?;
            let keys = known_section(&section).unwrap();
            if !keys.contains(&key.as_str()) {
                bail!("{origin}:{lineno}: unknown key `{key}` in [{section}]");
            }
            if values.insert((section.clone(), key.clone()), value).is_some() {
                bail!("{origin}:{lineno}: duplicate key `{key}` in [{section}]");
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Config::parse(&text, &path.display().to_string())
    }

    /// Applies one `section.key=value` override (CLI `--set` / sweep grids).
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (target, value) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{assignment}`: expected section.key=value"))?;
        let (section, key) = target
            .trim()
            .split_once('.')
            .ok_or_else(|| anyhow!("override `{assignment}`: expected section.key=value"))?;
        let keys = known_section(section)
            .ok_or_else(|| anyhow!("override `{assignment}`: unknown section [{section}]"))?;
        if !keys.contains(&key) {
            bail!("override `{assignment}`: unknown key `{key}` in [{section}]");
        }
        self.values
            .insert((section.to_string(), key.to_string()), value.trim().to_string());
        Ok(())
    }

    pub fn put(&mut self, section: &str, key: &str, value: impl std::fmt::Display) {
        debug_assert!(known_section(section).is_some_and(|ks| ks.contains(&key)));
        self.values
            .insert((section.to_string(), key.to_string()), value.to_string());
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
    }

    fn required(&self, section: &str, key: &str) -> Result<&str> {
        self.raw(section, key)
            .ok_or_else(|| anyhow!("missing required key `{key}` in [{section}]"))
    }

    pub fn get_usize(&self, section: &str, key: &str) -> Result<usize> {
        self.required(section, key)?
            .parse()
            .with_context(|| format!("[{section}] {key}: expected an unsigned integer"))
    }

    pub fn get_u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("[{section}] {key}: expected an unsigned integer")),
        }
    }

    pub fn get_usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .with_context(|| format!("[{section}] {key}: expected an unsigned integer")),
        }
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<f64> {
        parse_float(self.required(section, key)?)
            .with_context(|| format!("[{section}] {key}: expected a number"))
    }

    pub fn get_f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => {
                parse_float(v).with_context(|| format!("[{section}] {key}: expected a number"))
            }
        }
    }

    /// `auto` (or absence) means "let the toolkit choose".
    pub fn get_auto_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some("auto") => Ok(None),
            Some(v) => parse_float(v)
                .map(Some)
                .with_context(|| format!("[{section}] {key}: expected a number or `auto`")),
        }
    }

    pub fn get_auto_u32(&self, section: &str, key: &str) -> Result<Option<u32>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some("auto") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .with_context(|| format!("[{section}] {key}: expected an integer or `auto`")),
        }
    }

    pub fn get_bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.raw(section, key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => bail!("[{section}] {key}: expected true or false, got `{v}`"),
        }
    }

    /// Rotation angle; accepts plain numbers and `pi` forms (`pi/3`, `2pi/5`,
    /// `0.75pi`).
    pub fn get_theta(&self, section: &str, key: &str) -> Result<f64> {
        let raw = self.required(section, key)?;
        parse_theta(raw).with_context(|| format!("[{section}] {key}: bad angle `{raw}`"))
    }

    pub fn get_f64_list(&self, section: &str, key: &str) -> Result<Vec<f64>> {
        let raw = self.required(section, key)?;
        raw.split_whitespace()
            .map(|tok| {
                parse_float(tok).with_context(|| format!("[{section}] {key}: bad number `{tok}`"))
            })
            .collect()
    }

    pub fn get_f64_list_or(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        if self.raw(section, key).is_none() {
            return Ok(default.to_vec());
        }
        self.get_f64_list(section, key)
    }

    /// Renders in canonical order; `Config::parse` of the output yields the
    /// same map, which is what makes manifests re-runnable bit for bit.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (section, keys) in SCHEMA {
            let present: Vec<_> = keys
                .iter()
                .filter_map(|k| self.raw(section, k).map(|v| (*k, v)))
                .collect();
            if present.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "[{section}]");
            for (k, v) in present {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

fn parse_float(tok: &str) -> Result<f64> {
    tok.parse::<f64>().map_err(|e| anyhow!("{e}"))
}

pub fn parse_theta(raw: &str) -> Result<f64> {
    let s = raw.trim();
    if let Some(rest) = s.find("pi").map(|i| (&s[..i], &s[i + 2..])) {
        let (before, after) = rest;
        let mult = match before.trim() {
            "" => 1.0,
            "-" => -1.0,
            v => parse_float(v)?,
        };
        let div = match after.trim() {
            "" => 1.0,
            v => {
                let v = v
                    .strip_prefix('/')
                    .ok_or_else(|| anyhow!("expected `pi/<d>` after the pi factor"))?;
                parse_float(v.trim())?
            }
        };
        if div == 0.0 {
            bail!("division by zero in angle");
        }
        return Ok(mult * std::f64::consts::PI / div);
    }
    parse_float(s)
}
