//! Layered parameters: explicit flags override a `key=value` config file,
//! which overrides a named preset, which overrides built-in defaults.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

pub type Table = BTreeMap<String, String>;

/// Every key a flag, config file or preset may set.
pub const KNOWN_KEYS: &[&str] = &[
    "lambda",
    "capacity",
    "cost",
    "reward",
    "eta",
    "rho",
    "t-max",
    "points",
    "vary",
    "from",
    "to",
    "model",
    "tstar",
    "blocks",
    "dt",
    "burn-in",
    "seed",
    "stream",
    "runs",
    "threads",
    "bin-width",
    "paths",
    "grid-min",
    "grid-max",
    "grid-step",
    "kink-guard",
    "scan-t",
    "scan-points",
];

const EO_BASELINE: &[(&str, &str)] = &[
    ("lambda", "1.2"),
    ("capacity", "1"),
    ("cost", "0.3"),
    ("reward", "0"),
    ("eta", "0"),
];

pub const PRESETS: &[(&str, &[(&str, &str)])] = &[
    ("eo-baseline", EO_BASELINE),
    (
        "eo-vary-reward",
        &[
            ("lambda", "1.2"),
            ("capacity", "1"),
            ("cost", "0.3"),
            ("eta", "0"),
            ("vary", "reward"),
            ("from", "0"),
            ("to", "0.25"),
            ("points", "50"),
        ],
    ),
    (
        "eo-vary-lambda",
        &[
            ("capacity", "1"),
            ("cost", "0.3"),
            ("reward", "0"),
            ("eta", "0"),
            ("vary", "lambda"),
            ("from", "0.35"),
            ("to", "5"),
            ("points", "100"),
        ],
    ),
    (
        "uc-vary-lambda",
        &[("lambda", "0.5,1,2,4"), ("capacity", "1"), ("t-max", "5"), ("points", "101")],
    ),
    (
        "uc-vary-capacity",
        &[("lambda", "1"), ("capacity", "0.5,1,2"), ("t-max", "5"), ("points", "101")],
    ),
    (
        "patient-baseline",
        &[
            ("lambda", "1.2"),
            ("capacity", "1"),
            ("rho", "1"),
            ("paths", "1000000"),
            ("scan-t", "1"),
        ],
    ),
];

/// Normalizes `t_max` and `--t-max` to `t-max`.
pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('_', "-")
}

fn check_key(key: &str, flag: &str) -> CliResult<()> {
    if KNOWN_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(CliError::validation(flag, format!("unknown key `{key}`")))
    }
}

/// Parses a flat `key=value` file. Blank lines and `#` comments are skipped;
/// unknown or repeated keys are errors.
pub fn parse_config(text: &str) -> CliResult<Table> {
    let mut out = Table::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::validation("config", format!("line {}: expected key=value", n + 1)))?;
        let key = normalize_key(k);
        check_key(&key, "config")?;
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::validation("config", format!("line {}: `{key}` set twice", n + 1)));
        }
    }
    Ok(out)
}

pub fn preset(name: &str) -> CliResult<Table> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, kv)| kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::validation("preset", format!("unknown preset `{name}`; expected one of {}", names.join(", ")))
        })
}

/// Where a resolved value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Flag,
    Config,
    Preset,
    Env,
    Default,
}

/// Parameter layers for one command invocation.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    flags: Table,
    config: Table,
    preset: Table,
    env_seed: Option<String>,
    /// Values actually read, for the manifest.
    used: std::cell::RefCell<Table>,
}

impl Settings {
    pub fn new(flags: Table, config: Table, preset: Table, env_seed: Option<String>) -> CliResult<Self> {
        for k in flags.keys() {
            check_key(k, k)?;
        }
        Ok(Self {
            flags,
            config,
            preset,
            env_seed,
            used: Default::default(),
        })
    }

    /// Raw value and its source. `SEED` from the environment only backs `seed`.
    pub fn lookup(&self, key: &str) -> Option<(String, Source)> {
        let hit = self
            .flags
            .get(key)
            .map(|v| (v.clone(), Source::Flag))
            .or_else(|| self.config.get(key).map(|v| (v.clone(), Source::Config)))
            .or_else(|| self.preset.get(key).map(|v| (v.clone(), Source::Preset)))
            .or_else(|| {
                (key == "seed")
                    .then(|| self.env_seed.clone().map(|v| (v, Source::Env)))
                    .flatten()
            });
        if let Some((v, _)) = &hit {
            self.used.borrow_mut().insert(key.to_string(), v.clone());
        }
        hit
    }

    pub fn raw(&self, key: &str) -> Option<String> {
        self.lookup(key).map(|(v, _)| v)
    }

    fn parse_value<T: FromStr>(key: &str, v: &str) -> CliResult<T> {
        v.trim()
            .parse()
            .map_err(|_| CliError::validation(key, format!("cannot parse `{v}`")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.raw(key).map(|v| Self::parse_value(key, &v)).transpose()
    }

    /// Value of `key`, or `default` (recorded in the manifest) when unset.
    pub fn get_or<T: FromStr + ToString>(&self, key: &str, default: T) -> CliResult<T> {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => {
                self.used.borrow_mut().insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> CliResult<T> {
        self.get(key)?
            .ok_or_else(|| CliError::validation(key, "is required"))
    }

    /// Comma-separated list.
    pub fn list_or(&self, key: &str, default: &str) -> CliResult<Vec<f64>> {
        let raw = self.raw(key).unwrap_or_else(|| {
            self.used.borrow_mut().insert(key.to_string(), default.to_string());
            default.to_string()
        });
        let out = raw
            .split(',')
            .map(|v| Self::parse_value::<f64>(key, v))
            .collect::<CliResult<Vec<_>>>()?;
        if out.is_empty() {
            return Err(CliError::validation(key, "empty list"));
        }
        Ok(out)
    }

    /// Every value read so far, defaults included.
    pub fn resolved(&self) -> Table {
        self.used.borrow().clone()
    }
}
