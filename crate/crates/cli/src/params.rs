//! Flag / config-file / default resolution.
//!
//! The config file is a JSON object whose keys are the long flag names
//! (`"q-grid"`, `"trials"`, ...). A flag given on the command line wins over
//! the file, which wins over the built-in default. Keys that no option of
//! the chosen subcommand reads are rejected.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Keys accepted at the top level of every config file.
const GLOBAL_KEYS: [&str; 3] = ["seed", "threads", "sequential"];

pub struct Params {
    map: Map<String, Value>,
    used: RefCell<BTreeSet<String>>,
}

impl Params {
    pub fn empty() -> Self {
        Params { map: Map::new(), used: RefCell::new(BTreeSet::new()) }
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::empty()) };
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(map)) => Ok(Params { map, used: RefCell::new(BTreeSet::new()) }),
            Ok(_) => Err(Error::Config(format!("{} must hold a JSON object", path.display()))),
            Err(e) => Err(Error::Config(format!("{}: {e}", path.display()))),
        }
    }

    /// Flag value if given, otherwise the config entry, otherwise `None`.
    pub fn opt<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        self.used.borrow_mut().insert(key.to_string());
        if flag.is_some() {
            return Ok(flag);
        }
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| Error::Config(format!("config key '{key}': {e}"))),
        }
    }

    pub fn or<T: DeserializeOwned>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        Ok(self.opt(key, flag)?.unwrap_or(default))
    }

    pub fn require<T: DeserializeOwned>(&self, key: &str, flag: Option<T>) -> Result<T> {
        self.opt(key, flag)?.ok_or_else(|| Error::Usage(format!("--{key} is required")))
    }

    /// Rejects config keys that the subcommand never looked at.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .map
            .keys()
            .map(String::as_str)
            .filter(|k| !used.contains(*k) && !GLOBAL_KEYS.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }

    pub fn global<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        self.opt(key, None)
    }
}

/// A list of numbers, written `a,b,c` or as an arithmetic progression
/// `a,b,...,c` (step `b - a`, inclusive end).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "GridRepr")]
pub struct Grid(pub Vec<f64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum GridRepr {
    List(Vec<f64>),
    Text(String),
}

impl TryFrom<GridRepr> for Grid {
    type Error = String;
    fn try_from(r: GridRepr) -> std::result::Result<Self, String> {
        match r {
            GridRepr::List(v) => Ok(Grid(v)),
            GridRepr::Text(s) => s.parse(),
        }
    }
}

impl FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let num = |p: &str| p.parse::<f64>().map_err(|_| format!("'{p}' is not a number"));
        if let Some(pos) = parts.iter().position(|p| *p == "...") {
            if pos != 2 || parts.len() != 4 {
                return Err(format!("progression must look like a,b,...,c; got '{s}'"));
            }
            let (a, b, c) = (num(parts[0])?, num(parts[1])?, num(parts[3])?);
            let step = b - a;
            if !(step > 0.0) || c < a {
                return Err(format!("progression '{s}' must be increasing"));
            }
            let n = ((c - a) / step + 1e-9).floor() as usize;
            if n > 1_000_000 {
                return Err(format!("progression '{s}' has too many points"));
            }
            // Rounded to 12 decimals so 0.1-steps print as 0.3 rather than 0.30000000000000004.
            let round = |x: f64| (x * 1e12).round() / 1e12;
            return Ok(Grid((0..=n).map(|i| round(a + i as f64 * step)).collect()));
        }
        parts.into_iter().filter(|p| !p.is_empty()).map(num).collect::<std::result::Result<_, _>>().map(Grid)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl Grid {
    pub fn non_empty(self, key: &str) -> Result<Self> {
        if self.0.is_empty() {
            Err(Error::Usage(format!("--{key} must not be empty")))
        } else {
            Ok(self)
        }
    }

    pub fn to_uints<T: TryFrom<u64>>(&self, key: &str) -> Result<Vec<T>> {
        self.0
            .iter()
            .map(|&x| {
                if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
                    T::try_from(x as u64).ok()
                } else {
                    None
                }
                .ok_or_else(|| Error::Usage(format!("--{key}: {x} is not a valid non-negative integer")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_progression() {
        let g: Grid = "0,0.1,...,0.5".parse().unwrap();
        assert_eq!(g.0, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
        let g: Grid = "2,4,...,10".parse().unwrap();
        assert_eq!(g.0, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
        assert!("1,0,...,3".parse::<Grid>().is_err());
        assert!("1,...,3".parse::<Grid>().is_err());
    }

    #[test]
    fn grid_from_json_list_or_text() {
        let a: Grid = serde_json::from_str("[1, 2.5]").unwrap();
        let b: Grid = serde_json::from_str("\"1,2.5\"").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flag_beats_config_beats_default() {
        let p = Params { map: serde_json::from_str(r#"{"trials": 5, "bogus": 1}"#).unwrap(), used: Default::default() };
        assert_eq!(p.or("trials", Some(9usize), 1).unwrap(), 9);
        assert_eq!(p.or("trials", None::<usize>, 1).unwrap(), 5);
        assert_eq!(p.or("length", None::<usize>, 1).unwrap(), 1);
        assert!(matches!(p.finish(), Err(Error::Config(_))));
    }
}
