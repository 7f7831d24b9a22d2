//! Flag resolution against an optional key=value config file.
//!
//! Keys use the long flag names with `-` or `_` interchangeable. A flag given
//! on the command line always wins over the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use locus_core::model_io::read_key_value;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let entries = read_key_value(path)?
            .into_iter()
            .map(|(k, v)| (normalize(&k), v))
            .collect();
        Ok(ConfigFile { entries })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize(key)).map(String::as_str)
    }

    /// `flag` if set, otherwise the parsed config entry.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key '{key}': cannot parse '{v}': {e}")))
            })
            .transpose()
    }

    pub fn flag(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

/// Parses `"0,0.5, 1"` into numbers.
pub fn parse_list<T>(text: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| CliError::Usage(format!("{what}: cannot parse '{s}': {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage(format!("{what} is empty")));
    }
    Ok(values)
}
