//! Flat `key = value` text files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! consumed by the reader; [`KvFile::finish`] reports the leftovers.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct KvFile {
    entries: BTreeMap<String, (String, usize)>,
    make_error: fn(String) -> Error,
}

impl KvFile {
    /// Parses `text`; problems are reported through `make_error`.
    pub fn parse(text: &str, make_error: fn(String) -> Error) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(make_error(format!("line {}: expected `key = value`, got `{line}`", i + 1)));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(make_error(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(make_error(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(Self { entries, make_error })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Removes and parses `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|e| (self.make_error)(format!("line {line}: `{key}`: {e}"))),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Removes and parses a comma-separated list of `N` reals.
    pub fn take_array<const N: usize>(&mut self, key: &str) -> Result<Option<[f64; N]>> {
        let Some((v, line)) = self.entries.remove(key) else { return Ok(None) };
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        if parts.len() != N {
            return Err((self.make_error)(format!("line {line}: `{key}` needs {N} comma-separated numbers")));
        }
        let mut out = [0.0; N];
        for (o, p) in out.iter_mut().zip(parts) {
            *o = p.parse().map_err(|e| (self.make_error)(format!("line {line}: `{key}`: {e}")))?;
        }
        Ok(Some(out))
    }

    pub fn take_array_or<const N: usize>(&mut self, key: &str, default: [f64; N]) -> Result<[f64; N]> {
        Ok(self.take_array(key)?.unwrap_or(default))
    }

    /// Errors if any key was never taken.
    pub fn finish(self) -> Result<()> {
        match self.entries.iter().min_by_key(|(_, (_, line))| *line) {
            None => Ok(()),
            Some((k, (_, line))) => Err((self.make_error)(format!("line {line}: unknown key `{k}`"))),
        }
    }
}

/// Formats a list of reals as `a, b, c` using round-trip precision.
pub fn format_array(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_arrays() {
        let mut kv = KvFile::parse("# c\n\nsteps = 30\n eye = 1, -2.5, 3\n", Error::Config).unwrap();
        assert_eq!(kv.take::<u64>("steps").unwrap(), Some(30));
        assert_eq!(kv.take_array::<3>("eye").unwrap(), Some([1.0, -2.5, 3.0]));
        assert_eq!(kv.take::<u64>("missing").unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let kv = KvFile::parse("a = 1\nb = 2\n", Error::Config).unwrap();
        let err = kv.finish().unwrap_err().to_string();
        assert!(err.contains("unknown key `a`"), "{err}");
        assert!(KvFile::parse("a = 1\na = 2\n", Error::Config).is_err());
        assert!(KvFile::parse("just words\n", Error::Config).is_err());
        let mut kv = KvFile::parse("n = x\nv = 1, 2\n", Error::Spec).unwrap();
        assert!(matches!(kv.take::<u32>("n"), Err(Error::Spec(_))));
        assert!(kv.take_array::<3>("v").is_err());
    }

    #[test]
    fn arrays_round_trip_exactly() {
        let v = [0.1, -1e-17, 12345.678901234567];
        let text = format!("v = {}", format_array(&v));
        let mut kv = KvFile::parse(&text, Error::Config).unwrap();
        assert_eq!(kv.take_array::<3>("v").unwrap(), Some(v));
    }
}
