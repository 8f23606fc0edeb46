//! Flat `key = value` files for attack scenarios.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::CliError;

pub struct Params {
    entries: Vec<(String, String)>,
    used: BTreeSet<String>,
}

impl Params {
    pub fn empty() -> Self {
        Params {
            entries: Vec::new(),
            used: BTreeSet::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim().to_string();
            if entries.iter().any(|(e, _)| *e == k) {
                return Err(CliError::Config(format!("duplicate key `{k}`")));
            }
            entries.push((k, v.trim().to_string()));
        }
        Ok(Params {
            entries,
            used: BTreeSet::new(),
        })
    }

    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get_opt(key)?.unwrap_or(default))
    }

    pub fn get_opt<T>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some((_, v)) = self.entries.iter().find(|(k, _)| k == key) else {
            return Ok(None);
        };
        self.used.insert(key.to_string());
        v.parse()
            .map(Some)
            .map_err(|e| CliError::Config(format!("field `{key}`: `{v}`: {e}")))
    }

    /// Every entry not yet read, rendered back as config text.
    pub fn take_rest(&mut self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            if self.used.insert(k.clone()) {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    /// Fails on any key no scenario asked for.
    pub fn finish(self) -> Result<(), CliError> {
        match self.entries.iter().find(|(k, _)| !self.used.contains(k)) {
            Some((k, _)) => Err(CliError::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let mut p = Params::parse("a = 1\nb = 2").unwrap();
        assert_eq!(p.get("a", 0u32).unwrap(), 1);
        assert!(p.finish().is_err());
    }

    #[test]
    fn rest_is_unread_entries() {
        let mut p = Params::parse("depth = 3 # comment\nt = 10").unwrap();
        assert_eq!(p.get("depth", 0u64).unwrap(), 3);
        assert_eq!(p.take_rest(), "t = 10\n");
        p.finish().unwrap();
    }

    #[test]
    fn bad_value_names_field() {
        let mut p = Params::parse("trials = x").unwrap();
        let e = p.get("trials", 0u64).unwrap_err().to_string();
        assert!(e.contains("trials"), "{e}");
    }
}
