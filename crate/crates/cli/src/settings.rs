//! Run settings from flags and `key = value` config files. Flags win over
//! the file, the file over built-in defaults. Every value actually used is
//! recorded so it can be written back as a config that replays the run.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Every key a config file may contain; identical to the long flag names.
pub const KNOWN_KEYS: &[&str] = &[
    "input",
    "col1",
    "col2",
    "time",
    "negate",
    "months",
    "q-thold",
    "q-thold-plus",
    "bandwidth",
    "resolution",
    "pbase",
    "p",
    "mode",
    "beta",
    "eta-quantile",
    "marginals",
    "level",
    "probes",
    "block",
    "replicates",
    "seed",
    "threads",
    "u-min",
    "u-max",
    "u-steps",
    "family",
    "param",
    "margins",
    "n",
    "out",
    "svg",
    "dump-grid",
];

/// Parse `key = value` lines; `#` starts a comment line.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut entries = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected key = value", lineno + 1)));
        };
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("line {}: unknown key {key:?}", lineno + 1)));
        }
        if entries.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
        }
    }
    Ok(entries)
}

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.display().to_string(), e))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            used: RefCell::default(),
        })
    }

    fn raw(&self, key: &str, flag: &Option<String>, default: Option<&str>) -> Option<String> {
        let v = flag
            .clone()
            .or_else(|| self.file.get(key).cloned())
            .or_else(|| default.map(str::to_string))?;
        self.used.borrow_mut().insert(key.to_string(), v.clone());
        Some(v)
    }

    /// Resolved value of `key`, parsed as `T`.
    pub fn get<T>(&self, key: &str, flag: &Option<String>, default: Option<&str>) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let v = self
            .raw(key, flag, default)
            .ok_or_else(|| CliError::Config(format!("missing required setting {key:?}")))?;
        v.parse()
            .map_err(|e| CliError::Config(format!("invalid value for {key}: {v:?} ({e})")))
    }

    pub fn opt<T>(&self, key: &str, flag: &Option<String>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.raw(key, flag, None) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Config(format!("invalid value for {key}: {v:?} ({e})"))),
        }
    }

    /// Boolean switch: a flag sets it, otherwise the file, otherwise false.
    pub fn switch(&self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = if flag { Some("true".to_string()) } else { None };
        self.get(key, &v, Some("false"))
    }

    /// Make a path setting absolute so the replay config works from any
    /// directory.
    pub fn absolute(&self, key: &str, path: &str) -> String {
        let abs = std::path::absolute(path).map_or_else(|_| path.to_string(), |p| p.display().to_string());
        self.used.borrow_mut().insert(key.to_string(), abs.clone());
        abs
    }

    /// Settings consumed so far, for the manifest and the replay config.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.used.borrow().clone()
    }
}

/// Replay config in the same `key = value` format.
pub fn render_config(values: &BTreeMap<String, String>) -> String {
    values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Comma-separated list of probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbList(pub Vec<f64>);

impl FromStr for ProbList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(ProbList(Vec::new()));
        }
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(ProbList)
    }
}

/// `auto` or `h1,h2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth(pub Option<[f64; 2]>);

impl FromStr for Bandwidth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim() == "auto" {
            return Ok(Bandwidth(None));
        }
        let v = ProbList::from_str(s)?.0;
        match v.as_slice() {
            [a, b] => Ok(Bandwidth(Some([*a, *b]))),
            _ => Err("expected auto or two comma-separated values".into()),
        }
    }
}
