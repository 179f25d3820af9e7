pub mod eval;
pub mod gen;
pub mod probe;
pub mod report;

use serde_json::{Map, Value};

pub type Summary = Map<String, Value>;

/// Builds a summary map from `key => value` pairs.
macro_rules! summary {
    ($($k:literal => $v:expr),* $(,)?) => {{
        let mut m = $crate::cmd::Summary::new();
        $(m.insert($k.into(), serde_json::json!($v));)*
        m
    }};
}
pub(crate) use summary;

/// CSV output built row by row.
pub struct Table(csv::Writer<Vec<u8>>);

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> crate::error::Result<Self> {
        let mut t = Table(csv::Writer::from_writer(Vec::new()));
        t.row(header.iter().map(|s| s.as_ref().to_string()).collect())?;
        Ok(t)
    }

    pub fn row(&mut self, fields: Vec<String>) -> crate::error::Result<()> {
        self.0.write_record(&fields).map_err(|e| crate::error::usage(e.to_string()))
    }

    pub fn finish(self) -> crate::error::Result<Vec<u8>> {
        self.0.into_inner().map_err(|e| crate::error::usage(e.to_string()))
    }
}
