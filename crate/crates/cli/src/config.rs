//! Plain-text `key=value` config files. Unknown keys are rejected so typos
//! surface immediately; flags always override file values.

use duorec_core::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

pub const KNOWN_KEYS: &[&str] = &[
    "epochs",
    "dim",
    "eps",
    "lr",
    "lr_map",
    "batch",
    "map_batch",
    "dropout",
    "feature_mode",
    "rs_activation",
    "ae_hidden",
    "ae_epochs",
    "ae_lr",
    "whiten",
    "users",
    "items",
    "overlap",
    "noise",
    "feature_noise",
    "ratings_per_user",
    "feature_dim",
];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut values = BTreeMap::new();
        let Some(path) = path else {
            return Ok(Self { values });
        };
        let lines = duorec_core::fileio::read_lines(path)?;
        for (i, raw) in lines.iter().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    file: path.display().to_string(),
                    line: i + 1,
                    message: format!("expected key=value, got {line:?}"),
                });
            };
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Parse {
                    file: path.display().to_string(),
                    line: i + 1,
                    message: format!("unknown config key {key:?}"),
                });
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Validation(format!("config key {key} has unparsable value {raw:?}"))
            }),
        }
    }

    /// Flag wins, then file value, then the given default.
    pub fn resolve<T: std::str::FromStr + Clone>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.parse::<T>(key)?.unwrap_or(default))
    }

    pub fn resolve_opt<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.parse::<T>(key)
    }
}

/// `"32,16"` → `[32, 16]`; empty string → no hidden layers.
pub fn parse_widths(raw: &str) -> Result<Vec<usize>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|f| {
            f.trim()
                .parse::<usize>()
                .map_err(|_| Error::Validation(format!("bad layer width {f:?}")))
        })
        .collect()
}

pub fn parse_usize_list(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|f| {
            f.trim()
                .parse::<usize>()
                .map_err(|_| Error::Validation(format!("bad count {f:?}")))
        })
        .collect()
}
