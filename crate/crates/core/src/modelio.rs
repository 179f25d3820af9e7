//! Wire formats shared with external model adapters.
//!
//! Records are JSON lines. Every line starts with `"kind"` and `"id"`, then the
//! record's fields in the order listed on each type, then any unknown keys
//! (sorted) carried over from decoding. Floats are written with 17
//! significant digits so decoding restores the exact bits.
//!
//! Bulk tensors use the TSB1 layout: the magic `TSB1`, a little-endian `u32`
//! header length, a JSON header `{"dtype":"f64","shape":[..],"order":"row-major"}`
//! and the raw little-endian doubles.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::evalkit::QuantileForecast;

pub const TSB1_MAGIC: &[u8; 4] = b"TSB1";

pub type Extra = BTreeMap<String, Value>;

/// Builds one JSON line with a fixed key order.
pub struct LineWriter {
    buf: String,
    id: String,
}

impl LineWriter {
    fn new(kind: &str, id: &str) -> Self {
        let mut w = LineWriter { buf: String::from("{"), id: id.to_string() };
        w.key("kind");
        w.buf.push_str(&quote(kind));
        w.key("id");
        w.buf.push_str(&quote(id));
        w
    }

    fn key(&mut self, k: &str) {
        if self.buf.len() > 1 {
            self.buf.push(',');
        }
        self.buf.push_str(&quote(k));
        self.buf.push(':');
    }

    fn num(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Serialize { id: self.id.clone(), msg: format!("non-finite value {x}") });
        }
        write!(self.buf, "{x:.16e}").expect("write to String");
        Ok(())
    }

    pub fn f64(&mut self, k: &str, x: f64) -> Result<()> {
        self.key(k);
        self.num(x)
    }

    pub fn f64s(&mut self, k: &str, xs: &[f64]) -> Result<()> {
        self.key(k);
        self.push_array(xs)
    }

    fn push_array(&mut self, xs: &[f64]) -> Result<()> {
        self.buf.push('[');
        for (i, &x) in xs.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            self.num(x)?;
        }
        self.buf.push(']');
        Ok(())
    }

    pub fn f64_rows(&mut self, k: &str, rows: &[Vec<f64>]) -> Result<()> {
        self.key(k);
        self.buf.push('[');
        for (i, r) in rows.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            self.push_array(r)?;
        }
        self.buf.push(']');
        Ok(())
    }

    pub fn uint(&mut self, k: &str, x: u64) {
        self.key(k);
        write!(self.buf, "{x}").expect("write to String");
    }

    pub fn uints(&mut self, k: &str, xs: &[usize]) {
        self.key(k);
        let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
        write!(self.buf, "[{}]", parts.join(",")).expect("write to String");
    }

    pub fn boolean(&mut self, k: &str, b: bool) {
        self.key(k);
        self.buf.push_str(if b { "true" } else { "false" });
    }

    pub fn string(&mut self, k: &str, s: &str) {
        self.key(k);
        self.buf.push_str(&quote(s));
    }

    pub fn string_map(&mut self, k: &str, m: &BTreeMap<String, String>) {
        self.key(k);
        self.buf.push('{');
        for (i, (a, b)) in m.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            write!(self.buf, "{}:{}", quote(a), quote(b)).expect("write to String");
        }
        self.buf.push('}');
    }

    fn extra(&mut self, extra: &Extra) -> Result<()> {
        for (k, v) in extra {
            self.key(k);
            let s = serde_json::to_string(v)
                .map_err(|e| Error::Serialize { id: self.id.clone(), msg: e.to_string() })?;
            self.buf.push_str(&s);
        }
        Ok(())
    }

    fn finish(mut self) -> String {
        self.buf.push_str("}\n");
        self.buf
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// Field access for one decoded line. Keys that are read are removed; the
/// rest become the record's unknown-key side map.
pub struct Fields {
    obj: Map<String, Value>,
    line: usize,
}

impl Fields {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line, msg: msg.into() }
    }

    fn take(&mut self, k: &str) -> Result<Value> {
        self.obj.remove(k).ok_or_else(|| self.err(format!("missing key '{k}'")))
    }

    fn take_opt(&mut self, k: &str) -> Option<Value> {
        self.obj.remove(k).filter(|v| !v.is_null())
    }

    fn as_f64(&self, k: &str, v: &Value) -> Result<f64> {
        v.as_f64().ok_or_else(|| self.err(format!("'{k}' must be a number")))
    }

    fn as_f64s(&self, k: &str, v: &Value) -> Result<Vec<f64>> {
        v.as_array()
            .ok_or_else(|| self.err(format!("'{k}' must be an array of numbers")))?
            .iter()
            .map(|x| self.as_f64(k, x))
            .collect()
    }

    pub fn f64(&mut self, k: &str) -> Result<f64> {
        let v = self.take(k)?;
        self.as_f64(k, &v)
    }

    pub fn f64s(&mut self, k: &str) -> Result<Vec<f64>> {
        let v = self.take(k)?;
        self.as_f64s(k, &v)
    }

    pub fn opt_f64s(&mut self, k: &str) -> Result<Option<Vec<f64>>> {
        self.take_opt(k).map(|v| self.as_f64s(k, &v)).transpose()
    }

    pub fn opt_f64_rows(&mut self, k: &str) -> Result<Option<Vec<Vec<f64>>>> {
        match self.take_opt(k) {
            None => Ok(None),
            Some(v) => v
                .as_array()
                .ok_or_else(|| self.err(format!("'{k}' must be an array of arrays")))?
                .iter()
                .map(|r| self.as_f64s(k, r))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn uint(&mut self, k: &str) -> Result<u64> {
        let v = self.take(k)?;
        v.as_u64().ok_or_else(|| self.err(format!("'{k}' must be a nonnegative integer")))
    }

    pub fn opt_uint(&mut self, k: &str) -> Result<Option<u64>> {
        match self.take_opt(k) {
            None => Ok(None),
            Some(v) => v.as_u64().map(Some).ok_or_else(|| self.err(format!("'{k}' must be a nonnegative integer"))),
        }
    }

    pub fn uints(&mut self, k: &str) -> Result<Vec<usize>> {
        let v = self.take(k)?;
        v.as_array()
            .ok_or_else(|| self.err(format!("'{k}' must be an array of integers")))?
            .iter()
            .map(|x| x.as_u64().map(|u| u as usize).ok_or_else(|| self.err(format!("'{k}' must hold integers"))))
            .collect()
    }

    pub fn boolean(&mut self, k: &str) -> Result<bool> {
        let v = self.take(k)?;
        v.as_bool().ok_or_else(|| self.err(format!("'{k}' must be a boolean")))
    }

    pub fn string(&mut self, k: &str) -> Result<String> {
        let v = self.take(k)?;
        v.as_str().map(str::to_string).ok_or_else(|| self.err(format!("'{k}' must be a string")))
    }

    pub fn opt_string(&mut self, k: &str) -> Result<Option<String>> {
        match self.take_opt(k) {
            None => Ok(None),
            Some(v) => v.as_str().map(|s| Some(s.to_string())).ok_or_else(|| self.err(format!("'{k}' must be a string"))),
        }
    }

    pub fn string_map(&mut self, k: &str) -> Result<BTreeMap<String, String>> {
        let v = self.take(k)?;
        let obj = v.as_object().ok_or_else(|| self.err(format!("'{k}' must be an object")))?;
        obj.iter()
            .map(|(a, b)| {
                b.as_str()
                    .map(|s| (a.clone(), s.to_string()))
                    .ok_or_else(|| self.err(format!("'{k}.{a}' must be a string")))
            })
            .collect()
    }

    fn payload(&mut self) -> Result<Payload> {
        match (self.opt_f64s("data")?, self.opt_string("tensor")?) {
            (Some(d), None) => Ok(Payload::Inline(d)),
            (None, Some(p)) => Ok(Payload::Sidecar(p)),
            _ => Err(self.err("exactly one of 'data' or 'tensor' is required")),
        }
    }

    fn into_extra(self) -> Extra {
        self.obj.into_iter().collect()
    }
}

/// A record type with a JSON-lines encoding.
pub trait Record: Sized {
    const KIND: &'static str;
    fn id(&self) -> &str;
    fn extra(&self) -> &Extra;
    fn extra_mut(&mut self) -> &mut Extra;
    fn write_fields(&self, w: &mut LineWriter) -> Result<()>;
    fn read_fields(f: &mut Fields) -> Result<Self>;
    /// Structural checks beyond parsing.
    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

pub fn encode_record<R: Record>(r: &R) -> Result<String> {
    let mut w = LineWriter::new(R::KIND, r.id());
    r.write_fields(&mut w)?;
    w.extra(r.extra())?;
    Ok(w.finish())
}

pub fn encode_records<R: Record>(batch: &[R]) -> Result<String> {
    let mut seen = HashSet::new();
    let mut out = String::new();
    for r in batch {
        if !seen.insert(r.id()) {
            return Err(Error::Serialize { id: r.id().to_string(), msg: "duplicate id in batch".into() });
        }
        out.push_str(&encode_record(r)?);
    }
    Ok(out)
}

fn decode_line<R: Record>(text: &str, line: usize) -> Result<R> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
    let Value::Object(obj) = value else {
        return Err(Error::Parse { line, msg: "expected a JSON object".into() });
    };
    let mut f = Fields { obj, line };
    let kind = f.string("kind")?;
    if kind != R::KIND {
        return Err(f.err(format!("expected kind '{}', found '{kind}'", R::KIND)));
    }
    let mut rec = R::read_fields(&mut f)?;
    *rec.extra_mut() = f.into_extra();
    rec.validate().map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("line {line}: {m}")),
        other => other,
    })?;
    Ok(rec)
}

/// Strict decode. Blank lines are not allowed; ids must be unique.
pub fn decode_records<R: Record>(text: &str) -> Result<Vec<R>> {
    let mut out: Vec<R> = Vec::new();
    let mut seen = HashSet::new();
    let n_lines = text.split_inclusive('\n').count();
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let line = i + 1;
        let Some(body) = raw.strip_suffix('\n') else {
            // Only the final line can lack a newline; treat it as truncated.
            debug_assert_eq!(line, n_lines);
            return Err(Error::Parse { line, msg: "truncated line (missing newline)".into() });
        };
        let rec: R = decode_line(body, line)?;
        if !seen.insert(rec.id().to_string()) {
            return Err(Error::Parse { line, msg: format!("duplicate id '{}'", rec.id()) });
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextRecord {
    pub id: String,
    pub values: Vec<f64>,
    pub dt: f64,
    pub tags: BTreeMap<String, String>,
    pub prediction_length: usize,
    pub extra: Extra,
}

impl ContextRecord {
    pub fn new(id: impl Into<String>, values: Vec<f64>, prediction_length: usize) -> Self {
        ContextRecord {
            id: id.into(),
            values,
            dt: 1.0,
            tags: BTreeMap::new(),
            prediction_length,
            extra: Extra::new(),
        }
    }

    pub fn tag(mut self, k: &str, v: impl ToString) -> Self {
        self.tags.insert(k.to_string(), v.to_string());
        self
    }
}

/// Keys: `kind, id, dt, prediction_length, tags, values`.
impl Record for ContextRecord {
    const KIND: &'static str = "context";
    fn id(&self) -> &str {
        &self.id
    }
    fn extra(&self) -> &Extra {
        &self.extra
    }
    fn extra_mut(&mut self) -> &mut Extra {
        &mut self.extra
    }
    fn write_fields(&self, w: &mut LineWriter) -> Result<()> {
        w.f64("dt", self.dt)?;
        w.uint("prediction_length", self.prediction_length as u64);
        w.string_map("tags", &self.tags);
        w.f64s("values", &self.values)
    }
    fn read_fields(f: &mut Fields) -> Result<Self> {
        Ok(ContextRecord {
            id: f.string("id")?,
            dt: f.f64("dt")?,
            prediction_length: f.uint("prediction_length")? as usize,
            tags: f.string_map("tags")?,
            values: f.f64s("values")?,
            extra: Extra::new(),
        })
    }
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::validation(format!("record {}: dt must be positive", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    pub id: String,
    pub producer: String,
    pub point: Option<Vec<f64>>,
    pub quantiles: Option<QuantileForecast>,
    pub samples: Option<Vec<Vec<f64>>>,
    pub extra: Extra,
}

impl ForecastRecord {
    pub fn point(id: impl Into<String>, producer: impl Into<String>, values: Vec<f64>) -> Self {
        ForecastRecord {
            id: id.into(),
            producer: producer.into(),
            point: Some(values),
            quantiles: None,
            samples: None,
            extra: Extra::new(),
        }
    }

    /// Forecast horizon implied by whichever payload is present.
    pub fn horizon(&self) -> Option<usize> {
        self.point
            .as_ref()
            .map(Vec::len)
            .or_else(|| self.quantiles.as_ref().map(QuantileForecast::horizon))
            .or_else(|| self.samples.as_ref().and_then(|s| s.first().map(Vec::len)))
    }

    /// The point forecast, or the median quantile if only quantiles are present.
    pub fn point_or_median(&self) -> Option<Vec<f64>> {
        self.point.clone().or_else(|| self.quantiles.as_ref().and_then(|q| q.median()))
    }
}

/// Keys: `kind, id, producer, point, quantile_levels, quantile_values, samples`
/// (absent payloads are omitted).
impl Record for ForecastRecord {
    const KIND: &'static str = "forecast";
    fn id(&self) -> &str {
        &self.id
    }
    fn extra(&self) -> &Extra {
        &self.extra
    }
    fn extra_mut(&mut self) -> &mut Extra {
        &mut self.extra
    }
    fn write_fields(&self, w: &mut LineWriter) -> Result<()> {
        w.string("producer", &self.producer);
        if let Some(p) = &self.point {
            w.f64s("point", p)?;
        }
        if let Some(q) = &self.quantiles {
            w.f64s("quantile_levels", &q.levels)?;
            w.f64_rows("quantile_values", &q.values)?;
        }
        if let Some(s) = &self.samples {
            w.f64_rows("samples", s)?;
        }
        Ok(())
    }
    fn read_fields(f: &mut Fields) -> Result<Self> {
        let id = f.string("id")?;
        let producer = f.string("producer")?;
        let point = f.opt_f64s("point")?;
        let levels = f.opt_f64s("quantile_levels")?;
        let values = f.opt_f64_rows("quantile_values")?;
        let quantiles = match (levels, values) {
            (Some(l), Some(v)) => Some(QuantileForecast::new(l, v).map_err(|e| f.err(e.to_string()))?),
            (None, None) => None,
            _ => return Err(f.err("quantile_levels and quantile_values must appear together")),
        };
        let samples = f.opt_f64_rows("samples")?;
        Ok(ForecastRecord { id, producer, point, quantiles, samples, extra: Extra::new() })
    }
    fn validate(&self) -> Result<()> {
        let mut lens = Vec::new();
        if let Some(p) = &self.point {
            lens.push(p.len());
        }
        if let Some(q) = &self.quantiles {
            lens.push(q.horizon());
        }
        if let Some(s) = &self.samples {
            lens.extend(s.iter().map(Vec::len));
        }
        if lens.is_empty() {
            return Err(Error::validation(format!("forecast {} carries no payload", self.id)));
        }
        if lens.iter().any(|&l| l != lens[0]) {
            return Err(Error::validation(format!("forecast {} has payloads of different lengths", self.id)));
        }
        Ok(())
    }
}

/// Tensor data either inline or in a TSB1 sidecar next to the JSON-lines file.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Inline(Vec<f64>),
    Sidecar(String),
}

impl Payload {
    fn write(&self, w: &mut LineWriter) -> Result<()> {
        match self {
            Payload::Inline(d) => w.f64s("data", d),
            Payload::Sidecar(p) => {
                w.string("tensor", p);
                Ok(())
            }
        }
    }

    /// Resolves the data, reading a sidecar relative to `base_dir`.
    pub fn load(&self, shape: &[usize], base_dir: &Path) -> Result<Vec<f64>> {
        let data = match self {
            Payload::Inline(d) => d.clone(),
            Payload::Sidecar(p) => {
                let t = read_tensor_file(&base_dir.join(p))?;
                if t.shape != shape {
                    return Err(Error::validation(format!(
                        "sidecar {p} has shape {:?}, record declares {shape:?}",
                        t.shape
                    )));
                }
                t.data
            }
        };
        check_shape(shape, data.len())?;
        Ok(data)
    }
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    let want: usize = shape.iter().product();
    if want != len {
        return Err(Error::validation(format!("shape {shape:?} needs {want} values, payload has {len}")));
    }
    Ok(())
}

fn check_inline(p: &Payload, shape: &[usize]) -> Result<()> {
    match p {
        Payload::Inline(d) => check_shape(shape, d.len()),
        Payload::Sidecar(_) => Ok(()),
    }
}

/// `d x L` embedded vectors (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    pub id: String,
    pub source: String,
    pub layer: Option<usize>,
    pub patch_size: usize,
    pub shape: Vec<usize>,
    pub payload: Payload,
    pub extra: Extra,
}

impl EmbeddingDump {
    pub fn view(&self, base_dir: &Path) -> Result<crate::geoprobe::EmbeddingDumpView> {
        let data = self.payload.load(&self.shape, base_dir)?;
        let m = crate::linalg::from_row_major(self.shape[0], self.shape[1], &data);
        crate::geoprobe::EmbeddingDumpView::new(m, self.source.clone(), self.layer, self.patch_size)
    }
}

/// Keys: `kind, id, source, layer, patch_size, shape, data|tensor`.
impl Record for EmbeddingDump {
    const KIND: &'static str = "embedding";
    fn id(&self) -> &str {
        &self.id
    }
    fn extra(&self) -> &Extra {
        &self.extra
    }
    fn extra_mut(&mut self) -> &mut Extra {
        &mut self.extra
    }
    fn write_fields(&self, w: &mut LineWriter) -> Result<()> {
        w.string("source", &self.source);
        if let Some(l) = self.layer {
            w.uint("layer", l as u64);
        }
        w.uint("patch_size", self.patch_size as u64);
        w.uints("shape", &self.shape);
        self.payload.write(w)
    }
    fn read_fields(f: &mut Fields) -> Result<Self> {
        Ok(EmbeddingDump {
            id: f.string("id")?,
            source: f.string("source")?,
            layer: f.opt_uint("layer")?.map(|l| l as usize),
            patch_size: f.uint("patch_size")? as usize,
            shape: f.uints("shape")?,
            payload: f.payload()?,
            extra: Extra::new(),
        })
    }
    fn validate(&self) -> Result<()> {
        if self.shape.len() != 2 {
            return Err(Error::validation(format!("embedding {} must be 2-D (d, L)", self.id)));
        }
        check_inline(&self.payload, &self.shape)
    }
}

/// `rows x cols` attention scores (row-major) for one layer and head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub id: String,
    pub source: String,
    pub layer: usize,
    pub head: usize,
    pub post_softmax: bool,
    pub shape: Vec<usize>,
    pub payload: Payload,
    pub extra: Extra,
}

impl AttentionDump {
    /// Post-softmax rows must be nonnegative and sum to 1 within 1e-6.
    pub fn check_rows(&self, data: &[f64]) -> Result<()> {
        if !self.post_softmax {
            return Ok(());
        }
        let cols = self.shape[1].max(1);
        for (r, row) in data.chunks(cols).enumerate() {
            if row.iter().any(|&x| x < 0.0) {
                return Err(Error::validation(format!("attention {} row {r} has negative scores", self.id)));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::validation(format!("attention {} row {r} sums to {s}", self.id)));
            }
        }
        Ok(())
    }

    pub fn load(&self, base_dir: &Path) -> Result<Vec<f64>> {
        let data = self.payload.load(&self.shape, base_dir)?;
        self.check_rows(&data)?;
        Ok(data)
    }
}

/// Keys: `kind, id, source, layer, head, post_softmax, shape, data|tensor`.
impl Record for AttentionDump {
    const KIND: &'static str = "attention";
    fn id(&self) -> &str {
        &self.id
    }
    fn extra(&self) -> &Extra {
        &self.extra
    }
    fn extra_mut(&mut self) -> &mut Extra {
        &mut self.extra
    }
    fn write_fields(&self, w: &mut LineWriter) -> Result<()> {
        w.string("source", &self.source);
        w.uint("layer", self.layer as u64);
        w.uint("head", self.head as u64);
        w.boolean("post_softmax", self.post_softmax);
        w.uints("shape", &self.shape);
        self.payload.write(w)
    }
    fn read_fields(f: &mut Fields) -> Result<Self> {
        Ok(AttentionDump {
            id: f.string("id")?,
            source: f.string("source")?,
            layer: f.uint("layer")? as usize,
            head: f.uint("head")? as usize,
            post_softmax: f.boolean("post_softmax")?,
            shape: f.uints("shape")?,
            payload: f.payload()?,
            extra: Extra::new(),
        })
    }
    fn validate(&self) -> Result<()> {
        if self.shape.len() != 2 {
            return Err(Error::validation(format!("attention {} must be 2-D (rows, cols)", self.id)));
        }
        check_inline(&self.payload, &self.shape)?;
        if let Payload::Inline(d) = &self.payload {
            self.check_rows(d)?;
        }
        Ok(())
    }
}

/// `steps x vocab_size` logits (row-major), one row per generation step.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitDump {
    pub id: String,
    pub source: String,
    pub vocab_size: usize,
    pub shape: Vec<usize>,
    pub payload: Payload,
    /// Optional bin centres for each vocabulary entry.
    pub bin_centers: Option<Vec<f64>>,
    pub extra: Extra,
}

impl LogitDump {
    pub fn inline(id: impl Into<String>, rows: &[Vec<f64>]) -> Self {
        let vocab = rows.first().map_or(0, Vec::len);
        LogitDump {
            id: id.into(),
            source: String::new(),
            vocab_size: vocab,
            shape: vec![rows.len(), vocab],
            payload: Payload::Inline(rows.concat()),
            bin_centers: None,
            extra: Extra::new(),
        }
    }

    pub fn steps(&self, base_dir: &Path) -> Result<Vec<Vec<f64>>> {
        let data = self.payload.load(&self.shape, base_dir)?;
        let v = self.vocab_size.max(1);
        Ok(data.chunks(v).map(<[f64]>::to_vec).collect())
    }
}

/// Keys: `kind, id, source, vocab_size, shape, data|tensor, bin_centers`.
impl Record for LogitDump {
    const KIND: &'static str = "logits";
    fn id(&self) -> &str {
        &self.id
    }
    fn extra(&self) -> &Extra {
        &self.extra
    }
    fn extra_mut(&mut self) -> &mut Extra {
        &mut self.extra
    }
    fn write_fields(&self, w: &mut LineWriter) -> Result<()> {
        w.string("source", &self.source);
        w.uint("vocab_size", self.vocab_size as u64);
        w.uints("shape", &self.shape);
        self.payload.write(w)?;
        if let Some(b) = &self.bin_centers {
            w.f64s("bin_centers", b)?;
        }
        Ok(())
    }
    fn read_fields(f: &mut Fields) -> Result<Self> {
        Ok(LogitDump {
            id: f.string("id")?,
            source: f.string("source")?,
            vocab_size: f.uint("vocab_size")? as usize,
            shape: f.uints("shape")?,
            payload: f.payload()?,
            bin_centers: f.opt_f64s("bin_centers")?,
            extra: Extra::new(),
        })
    }
    fn validate(&self) -> Result<()> {
        if self.shape.len() != 2 || self.shape[1] != self.vocab_size {
            return Err(Error::validation(format!(
                "logits {} shape {:?} does not match vocabulary size {}",
                self.id, self.shape, self.vocab_size
            )));
        }
        if let Some(b) = &self.bin_centers {
            if b.len() != self.vocab_size {
                return Err(Error::validation(format!("logits {} has {} bin centres", self.id, b.len())));
            }
        }
        check_inline(&self.payload, &self.shape)
    }
}

/// Teacher-forced per-step log-probabilities of one future.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbDump {
    pub id: String,
    pub branch: Option<String>,
    pub logprobs: Vec<f64>,
    pub extra: Extra,
}

impl LogProbDump {
    pub fn new(id: impl Into<String>, logprobs: Vec<f64>) -> Self {
        LogProbDump { id: id.into(), branch: None, logprobs, extra: Extra::new() }
    }
}

/// Keys: `kind, id, branch, logprobs`.
impl Record for LogProbDump {
    const KIND: &'static str = "logprob";
    fn id(&self) -> &str {
        &self.id
    }
    fn extra(&self) -> &Extra {
        &self.extra
    }
    fn extra_mut(&mut self) -> &mut Extra {
        &mut self.extra
    }
    fn write_fields(&self, w: &mut LineWriter) -> Result<()> {
        if let Some(b) = &self.branch {
            w.string("branch", b);
        }
        w.f64s("logprobs", &self.logprobs)
    }
    fn read_fields(f: &mut Fields) -> Result<Self> {
        Ok(LogProbDump {
            id: f.string("id")?,
            branch: f.opt_string("branch")?,
            logprobs: f.f64s("logprobs")?,
            extra: Extra::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

fn tensor_header(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!(r#"{{"dtype":"f64","shape":[{}],"order":"row-major"}}"#, dims.join(","))
}

pub fn write_tensor(shape: &[usize], data: &[f64]) -> Result<Vec<u8>> {
    check_shape(shape, data.len())?;
    let header = tensor_header(shape);
    let mut out = Vec::with_capacity(8 + header.len() + 8 * data.len());
    out.extend_from_slice(TSB1_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn read_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 8 || &bytes[..4] != TSB1_MAGIC {
        return Err(Error::Format("missing TSB1 magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(8..8 + hlen).ok_or_else(|| Error::Format("truncated TSB1 header".into()))?;
    let header: Value =
        serde_json::from_slice(body).map_err(|e| Error::Format(format!("bad TSB1 header: {e}")))?;
    if header.get("dtype").and_then(Value::as_str) != Some("f64") {
        return Err(Error::Format("TSB1 dtype must be f64".into()));
    }
    if header.get("order").and_then(Value::as_str) != Some("row-major") {
        return Err(Error::Format("TSB1 order must be row-major".into()));
    }
    let shape: Vec<usize> = header
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Format("TSB1 header lacks a shape".into()))?
        .iter()
        .map(|d| d.as_u64().map(|u| u as usize).ok_or_else(|| Error::Format("TSB1 shape must hold integers".into())))
        .collect::<Result<_>>()?;
    let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Format("TSB1 shape overflows".into()))?;
    let raw = &bytes[8 + hlen..];
    if raw.len() != count * 8 {
        return Err(Error::Format(format!("TSB1 payload has {} bytes, shape needs {}", raw.len(), count * 8)));
    }
    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(Tensor { shape, data })
}

pub fn read_tensor_file(path: &Path) -> Result<Tensor> {
    read_tensor(&fs::read(path)?)
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    let res = (|| {
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

pub fn write_records_file<R: Record>(path: &Path, batch: &[R]) -> Result<()> {
    write_atomic(path, encode_records(batch)?.as_bytes())
}

pub fn read_records_file<R: Record>(path: &Path) -> Result<Vec<R>> {
    let text = fs::read_to_string(path)?;
    decode_records(&text)
}

/// CSV tables for the analysis outputs.
pub mod tables {
    use crate::error::{Error, Result};
    use crate::geoprobe::Histogram;
    use crate::mlplab::{RankReport, Sampler};
    use crate::regprobe::{BridgeCurve, LossField};
    use crate::simplab::{BinStat, WinRatePoint};

    fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    fn csv_err(e: csv::Error) -> Error {
        Error::Format(e.to_string())
    }

    fn row(w: &mut csv::Writer<Vec<u8>>, fields: Vec<String>) -> Result<()> {
        w.write_record(&fields).map_err(csv_err)
    }

    fn sampler_name(s: Sampler) -> &'static str {
        match s {
            Sampler::SameBand => "same_band",
            Sampler::Disjoint => "disjoint",
        }
    }

    /// One row per (sweep value, sampler, trial).
    pub fn rank_report_csv(r: &RankReport) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["experiment", &r.parameter, "sampler", "trial", "seed", "stable_rank",
            "squared_stable_rank", "min_relative", "sigma2_over_sigma1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(r.eps.iter().map(|e| format!("eps_rank_{e}")));
        header.push("norm_ratio".into());
        row(&mut w, header)?;
        for c in &r.cells {
            let mut f = vec![
                r.experiment.name().to_string(),
                c.value.to_string(),
                sampler_name(c.sampler).to_string(),
                c.trial.to_string(),
                c.seed.to_string(),
                c.stable_rank.to_string(),
                c.squared_stable_rank.to_string(),
                c.min_relative.to_string(),
                c.sigma2_over_sigma1().to_string(),
            ];
            f.extend(c.eps_ranks.iter().map(|x| x.to_string()));
            f.push(c.norm_ratio.map(|x| x.to_string()).unwrap_or_default());
            row(&mut w, f)?;
        }
        finish(w)
    }

    pub fn bridge_curve_csv(c: &BridgeCurve) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        row(&mut w, ["q", "median", "q30", "q70", "trials"].map(String::from).to_vec())?;
        for p in &c.points {
            row(&mut w, vec![p.q.to_string(), p.median.to_string(), p.q30.to_string(), p.q70.to_string(), p.trials.to_string()])?;
        }
        finish(w)
    }

    pub fn loss_field_csv(f: &LossField) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        row(&mut w, ["i", "j", "q0", "qh", "q1", "yhat", "mse", "mae", "ce", "ce_infinite", "mse_min", "mae_min", "ce_min"]
            .map(String::from)
            .to_vec())?;
        for (idx, p) in f.points.iter().enumerate() {
            row(&mut w, vec![
                p.i.to_string(),
                p.j.to_string(),
                p.q.q0.to_string(),
                p.q.qh.to_string(),
                p.q.q1.to_string(),
                p.yhat.to_string(),
                p.mse.to_string(),
                p.mae.to_string(),
                p.ce.to_string(),
                p.ce_infinite.to_string(),
                f.mse_minima.contains(&idx).to_string(),
                f.mae_minima.contains(&idx).to_string(),
                f.ce_minima.contains(&idx).to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn histogram_csv(h: &Histogram) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        row(&mut w, ["lo", "hi", "count"].map(String::from).to_vec())?;
        for (i, c) in h.counts.iter().enumerate() {
            row(&mut w, vec![h.bin_edges[i].to_string(), h.bin_edges[i + 1].to_string(), c.to_string()])?;
        }
        finish(w)
    }

    pub fn win_rate_csv(points: &[WinRatePoint]) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        row(&mut w, ["delta_k", "n", "w", "wilson_lo", "wilson_hi", "ties"].map(String::from).to_vec())?;
        for p in points {
            row(&mut w, vec![
                p.delta_k.to_string(),
                p.n.to_string(),
                p.w.to_string(),
                p.wilson_lo.to_string(),
                p.wilson_hi.to_string(),
                p.ties.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn bin_stats_csv(bins: &[BinStat]) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        row(&mut w, ["center", "mean", "lo", "hi", "n"].map(String::from).to_vec())?;
        for b in bins {
            row(&mut w, vec![b.center.to_string(), b.mean.to_string(), b.lo.to_string(), b.hi.to_string(), b.n.to_string()])?;
        }
        finish(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_batch_encodes_to_nothing() {
        assert_eq!(encode_records::<ContextRecord>(&[]).unwrap(), "");
        assert!(decode_records::<ContextRecord>("").unwrap().is_empty());
    }

    #[test]
    fn context_round_trip_and_key_order() {
        let a = ContextRecord::new("a", vec![0.1, -2.5e-300, 3.0], 4).tag("q", 0.25).tag("trial", 3);
        let b = ContextRecord::new("b", vec![1.0 / 3.0], 1);
        let text = encode_records(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(text.matches('\n').count(), 2);
        assert!(text.starts_with(r#"{"kind":"context","id":"a","dt":"#));
        let back: Vec<ContextRecord> = decode_records(&text).unwrap();
        assert_eq!(back, vec![a, b]);
        assert_eq!(back[1].values[0].to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn unknown_keys_survive() {
        let line = "{\"kind\":\"logprob\",\"id\":\"p\",\"logprobs\":[-1.5],\"zz\":{\"a\":1},\"model\":\"m\"}\n";
        let recs: Vec<LogProbDump> = decode_records(line).unwrap();
        assert_eq!(recs[0].extra.len(), 2);
        let again = encode_records(&recs).unwrap();
        let back: Vec<LogProbDump> = decode_records(&again).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn non_finite_is_a_serialize_error() {
        let r = ContextRecord::new("bad", vec![f64::NAN], 1);
        match encode_records(&[r]) {
            Err(Error::Serialize { id, .. }) => assert_eq!(id, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decode_errors_carry_line_numbers() {
        let good = encode_records(&[ContextRecord::new("a", vec![1.0], 1)]).unwrap();
        let nan = format!("{good}{{\"kind\":\"context\",\"id\":\"b\",\"dt\":1,\"prediction_length\":1,\"tags\":{{}},\"values\":[NaN]}}\n");
        assert!(matches!(decode_records::<ContextRecord>(&nan), Err(Error::Parse { line: 2, .. })));
        let truncated = format!("{good}{}", &good[..good.len() - 5]);
        assert!(matches!(decode_records::<ContextRecord>(&truncated), Err(Error::Parse { line: 2, .. })));
        let dup = format!("{good}{good}");
        assert!(matches!(decode_records::<ContextRecord>(&dup), Err(Error::Parse { line: 2, .. })));
        let wrong_kind = encode_records(&[LogProbDump::new("x", vec![-1.0])]).unwrap();
        assert!(matches!(decode_records::<ContextRecord>(&wrong_kind), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn shape_mismatch_is_validation() {
        let line = "{\"kind\":\"embedding\",\"id\":\"e\",\"source\":\"m\",\"patch_size\":1,\"shape\":[2,2],\"data\":[1,2,3]}\n";
        assert!(matches!(decode_records::<EmbeddingDump>(line), Err(Error::Validation(_))));
    }

    #[test]
    fn attention_rows_checked_only_post_softmax() {
        let mk = |post, data: Vec<f64>| AttentionDump {
            id: "a".into(),
            source: "m".into(),
            layer: 0,
            head: 1,
            post_softmax: post,
            shape: vec![2, 2],
            payload: Payload::Inline(data),
            extra: Extra::new(),
        };
        assert!(mk(true, vec![0.5, 0.5, 0.25, 0.75]).validate().is_ok());
        assert!(mk(true, vec![0.5, 0.6, 0.25, 0.75]).validate().is_err());
        assert!(mk(true, vec![1.5, -0.5, 0.25, 0.75]).validate().is_err());
        assert!(mk(false, vec![3.0, -1.0, 0.0, 7.0]).validate().is_ok());
    }

    #[test]
    fn tensor_layout() {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0, -0.0];
        let blob = write_tensor(&[2, 3], &data).unwrap();
        let header = tensor_header(&[2, 3]);
        assert_eq!(header, r#"{"dtype":"f64","shape":[2,3],"order":"row-major"}"#);
        assert_eq!(blob.len(), 8 + header.len() + 48);
        assert_eq!(&blob[..4], b"TSB1");
        assert_eq!(u32::from_le_bytes(blob[4..8].try_into().unwrap()) as usize, header.len());
        let t = read_tensor(&blob).unwrap();
        assert_eq!(t.shape, vec![2, 3]);
        assert!(t.data.iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));

        let empty = write_tensor(&[0], &[]).unwrap();
        assert!(read_tensor(&empty).unwrap().data.is_empty());

        let mut bad = blob.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor(&bad), Err(Error::Format(_))));
        assert!(matches!(read_tensor(&blob[..blob.len() - 1]), Err(Error::Format(_))));
        assert!(write_tensor(&[2, 2], &data).is_err());
    }

    #[test]
    fn sidecar_payload_loads_relative_to_base() {
        let dir = std::env::temp_dir().join(format!("tsb-sidecar-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        write_atomic(&dir.join("e.tsb"), &write_tensor(&[2, 2], &[1.0, 0.0, 0.0, 2.0]).unwrap()).unwrap();
        let dump = EmbeddingDump {
            id: "e".into(),
            source: "m".into(),
            layer: Some(3),
            patch_size: 16,
            shape: vec![2, 2],
            payload: Payload::Sidecar("e.tsb".into()),
            extra: Extra::new(),
        };
        let view = dump.view(&dir).unwrap();
        assert_eq!(view.vectors[(1, 1)], 2.0);
        let wrong = EmbeddingDump { shape: vec![4, 1], ..dump };
        assert!(wrong.view(&dir).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }
}
