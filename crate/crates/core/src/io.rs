//! Text formats: sparse multi-label datasets, true-statistics sidecars,
//! versioned model files, prediction lists, and a converter from the
//! labels-then-features interchange style.
//!
//! Dataset file:
//!
//! ```text
//! #ml-sparse v1 s=<s> d=<d>
//! <labels>\t<idx>:<val> <idx>:<val> ...
//! ```
//!
//! Labels are 1-based and comma-separated (empty for no labels); feature
//! indices are 1-based and strictly increasing.
//!
//! Model file: `key=value` header lines, one weight vector per line in
//! `{:.16e}` notation, and a closing `checksum=<sha256>` over every preceding
//! byte. A file without a valid checksum line is rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::baselines::{BrModel, EfpModel};
use crate::data::{Dataset, SparseRow};
use crate::error::{Error, Result};
use crate::fbeta::{BetaParam, LabelVec, StatIndex, StatVec};
use crate::loss::LossKind;
use crate::pipeline::{Algorithm, TrainedModel};
use crate::surrogate::SurrogateConfig;
use crate::trainer::{LinearModel, MultinomialModel};

pub const DATASET_MAGIC: &str = "#ml-sparse v1";
pub const SIDECAR_MAGIC: &str = "#q-sidecar v1";
pub const MODEL_MAGIC: &str = "#fcal-model v1";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

/// Parses `key=value` tokens of a header after `magic`.
fn header_fields<'a>(path: &Path, line: &'a str, magic: &str, keys: &[&str]) -> Result<Vec<&'a str>> {
    let rest = line
        .strip_prefix(magic)
        .ok_or_else(|| parse_err(path, 1, format!("expected header '{magic} ...'")))?;
    let tokens: Vec<&str> = rest.split_whitespace().collect();
    if tokens.len() != keys.len() {
        return Err(parse_err(path, 1, format!("header needs fields {}", keys.join(", "))));
    }
    tokens
        .iter()
        .zip(keys)
        .map(|(t, k)| {
            t.strip_prefix(k)
                .and_then(|v| v.strip_prefix('='))
                .ok_or_else(|| parse_err(path, 1, format!("expected '{k}=' in header, found '{t}'")))
        })
        .collect()
}

fn parse_usize(path: &Path, line: usize, what: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| parse_err(path, line, format!("bad {what} '{v}'")))
}

fn parse_f64(path: &Path, line: usize, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| parse_err(path, line, format!("bad number '{v}'")))?;
    if !x.is_finite() {
        return Err(parse_err(path, line, format!("non-finite number '{v}'")));
    }
    Ok(x)
}

/// Parses a comma-separated list of 1-based labels.
fn parse_labels(path: &Path, line: usize, field: &str, s: usize, base: usize) -> Result<LabelVec> {
    let mut active = Vec::new();
    if !field.trim().is_empty() {
        for tok in field.split(',') {
            let j = parse_usize(path, line, "label index", tok.trim())?;
            if j < base || j - base >= s {
                return Err(parse_err(path, line, format!("label {j} outside 1..={s}")));
            }
            active.push(j - base);
        }
    }
    let mut bits = vec![false; s];
    for j in active {
        if bits[j] {
            return Err(parse_err(path, line, format!("duplicate label {}", j + base)));
        }
        bits[j] = true;
    }
    LabelVec::new(bits).map_err(|e| parse_err(path, line, e.to_string()))
}

fn parse_features<'a>(path: &Path, line: usize, tokens: impl Iterator<Item = &'a str>, d: usize) -> Result<SparseRow> {
    let mut idx: Vec<u32> = Vec::new();
    let mut val = Vec::new();
    for tok in tokens {
        let (i, v) = tok.split_once(':').ok_or_else(|| parse_err(path, line, format!("expected 'index:value', found '{tok}'")))?;
        let i = parse_usize(path, line, "feature index", i)?;
        if i == 0 || i > d {
            return Err(parse_err(path, line, format!("feature index {i} outside 1..={d}")));
        }
        let i = (i - 1) as u32;
        if let Some(&last) = idx.last() {
            if i == last {
                return Err(parse_err(path, line, format!("duplicate feature index {}", i + 1)));
            }
            if i < last {
                return Err(parse_err(path, line, format!("feature index {} after {}", i + 1, last + 1)));
            }
        }
        idx.push(i);
        val.push(parse_f64(path, line, v)?);
    }
    SparseRow::new(idx, val).map_err(|e| parse_err(path, line, e.to_string()))
}

/// Parses dataset text; `path` only labels diagnostics.
pub fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let f = header_fields(path, header, DATASET_MAGIC, &["s", "d"])?;
    let s = parse_usize(path, 1, "s", f[0])?;
    let d = parse_usize(path, 1, "d", f[1])?;
    if s == 0 {
        return Err(parse_err(path, 1, "s must be at least 1"));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let (lab, feats) = line.split_once('\t').ok_or_else(|| parse_err(path, n, "missing tab between labels and features"))?;
        if feats.contains('\t') {
            return Err(parse_err(path, n, "more than one tab"));
        }
        labels.push(parse_labels(path, n, lab, s, 1)?);
        rows.push(parse_features(path, n, feats.split_whitespace(), d)?);
    }
    Dataset::new(s, d, rows, labels)
}

pub fn format_labels(y: &LabelVec) -> String {
    y.active().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(",")
}

pub fn format_dataset(data: &Dataset) -> String {
    let mut out = format!("{DATASET_MAGIC} s={} d={}\n", data.s(), data.d());
    for (x, y) in data.features().iter().zip(data.labels()) {
        out.push_str(&format_labels(y));
        out.push('\t');
        let feats: Vec<String> = x.iter().map(|(i, v)| format!("{}:{v:?}", i + 1)).collect();
        out.push_str(&feats.join(" "));
        out.push('\n');
    }
    out
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_dataset(&read(path)?, path)
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_dataset(data))
}

/// One labeling per line as 1-based comma-separated indices; empty lines are
/// empty labelings.
pub fn format_predictions(preds: &[LabelVec]) -> String {
    preds.iter().map(|y| format_labels(y) + "\n").collect()
}

pub fn save_predictions(preds: &[LabelVec], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_predictions(preds))
}

pub fn load_predictions(path: impl AsRef<Path>, s: usize) -> Result<Vec<LabelVec>> {
    let path = path.as_ref();
    read(path)?.lines().enumerate().map(|(i, l)| parse_labels(path, i + 1, l, s, 1)).collect()
}

/// True statistics, one `s²+1` vector per line in canonical order.
pub fn format_sidecar(s: usize, qs: &[StatVec]) -> Result<String> {
    let mut out = format!("{SIDECAR_MAGIC} s={s} n={}\n", qs.len());
    for q in qs {
        Error::check_dim(s, q.s())?;
        let vals: Vec<String> = q.entries().iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn save_sidecar(s: usize, qs: &[StatVec], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_sidecar(s, qs)?)
}

pub fn parse_sidecar(text: &str, path: &Path) -> Result<Vec<StatVec>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let f = header_fields(path, header, SIDECAR_MAGIC, &["s", "n"])?;
    let s = parse_usize(path, 1, "s", f[0])?;
    let n = parse_usize(path, 1, "n", f[1])?;
    let mut out = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let vals = line.split_whitespace().map(|t| parse_f64(path, i + 2, t)).collect::<Result<Vec<_>>>()?;
        if vals.len() != StatIndex::dim(s) {
            return Err(parse_err(path, i + 2, format!("expected {} values, found {}", StatIndex::dim(s), vals.len())));
        }
        out.push(StatVec::from_entries(s, vals)?);
    }
    if out.len() != n {
        return Err(parse_err(path, out.len() + 1, format!("header promises {n} vectors, found {}", out.len())));
    }
    Ok(out)
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<Vec<StatVec>> {
    let path = path.as_ref();
    parse_sidecar(&read(path)?, path)
}

fn checksum(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

fn push_vector(out: &mut String, w: &[f64]) {
    let vals: Vec<String> = w.iter().map(|v| format!("{v:.16e}")).collect();
    out.push_str(&vals.join(" "));
    out.push('\n');
}

pub fn format_model(model: &TrainedModel) -> String {
    let mut out = format!("{MODEL_MAGIC}\nalgorithm={}\n", model.algorithm());
    let (d, bias, reg) = match model {
        TrainedModel::Surrogate(m) => (m.d(), m.bias(), m.reg()),
        TrainedModel::Efp { model, .. } => (model.d(), model.bias(), model.reg()),
        TrainedModel::Br(m) => (m.d(), m.bias(), m.reg()),
    };
    let _ = writeln!(out, "s={}\nd={d}", model.s());
    if let Some(beta) = model.beta() {
        let _ = writeln!(out, "beta={:?}", beta.beta());
    }
    let _ = writeln!(out, "bias={bias}\nreg={reg:?}");
    let mut vectors: Vec<&[f64]> = Vec::new();
    match model {
        TrainedModel::Surrogate(m) => {
            let active: Vec<String> = m.config().active().iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "loss=logistic\nactive={}", active.join(" "));
            vectors.extend(m.weights().iter().map(Vec::as_slice));
        }
        TrainedModel::Efp { model, .. } => {
            let counts: Vec<String> = model.counts().iter().map(|k| k.to_string()).collect();
            let _ = writeln!(out, "counts={}", counts.join(","));
            vectors.push(model.zero_block());
            for block in model.label_blocks() {
                vectors.extend(block.weights.iter().map(Vec::as_slice));
            }
        }
        TrainedModel::Br(m) => vectors.extend(m.weights().iter().map(Vec::as_slice)),
    }
    let _ = writeln!(out, "vectors={}", vectors.len());
    for w in vectors {
        push_vector(&mut out, w);
    }
    let sum = checksum(&out);
    let _ = writeln!(out, "checksum={sum}");
    out
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_model(model))
}

struct Header<'a> {
    path: &'a Path,
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Header<'a> {
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.lines.get(self.pos).copied().unwrap_or("");
        self.pos += 1;
        line.strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .ok_or_else(|| Error::ModelFormat(format!("{}:{}: expected '{key}='", self.path.display(), self.pos)))
    }

    fn bad(&self, msg: impl std::fmt::Display) -> Error {
        Error::ModelFormat(format!("{}:{}: {msg}", self.path.display(), self.pos))
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.bad(format!("bad {key} '{v}'")))
    }

    fn f64(&mut self, key: &str) -> Result<f64> {
        let v = self.field(key)?;
        v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| self.bad(format!("bad {key} '{v}'")))
    }

    fn bool(&mut self, key: &str) -> Result<bool> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.bad(format!("bad {key} '{v}'")))
    }

    fn vectors(&mut self, n: usize, len: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let line = self.lines.get(self.pos).copied().ok_or_else(|| self.bad("file ends inside the weights"))?;
            self.pos += 1;
            let w = line
                .split(' ')
                .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| self.bad("bad weight"))?;
            if w.len() != len {
                return Err(self.bad(format!("expected {len} weights, found {}", w.len())));
            }
            out.push(w);
        }
        Ok(out)
    }
}

fn parse_stat_index(tok: &str, s: usize) -> Option<StatIndex> {
    if tok == "zero" {
        return Some(StatIndex::Zero);
    }
    let (j, k) = tok.split_once(':')?;
    let (j, k): (usize, usize) = (j.parse().ok()?, k.parse().ok()?);
    let idx = StatIndex::pair(j.checked_sub(1)?, k);
    idx.is_valid(s).then_some(idx)
}

/// Parses model text; the checksum must match before any field is read.
pub fn parse_model(text: &str, path: &Path) -> Result<TrainedModel> {
    let bad = |msg: &str| Error::ModelFormat(format!("{}: {msg}", path.display()));
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| bad("truncated model file"))?;
    let (body, tail) = text.split_at(body_end);
    let sum = tail
        .strip_prefix("checksum=")
        .map(|t| t.trim_end_matches('\n'))
        .ok_or_else(|| bad("truncated model file (no checksum line)"))?;
    if sum != checksum(body) {
        return Err(bad("checksum mismatch"));
    }
    let lines: Vec<&str> = body.lines().collect();
    if lines.first() != Some(&MODEL_MAGIC) {
        return Err(bad(&format!("unsupported model format (expected '{MODEL_MAGIC}')")));
    }
    let mut h = Header { path, lines, pos: 1 };
    let algorithm: Algorithm = h.field("algorithm")?.parse()?;
    let s = h.usize("s")?;
    let d = h.usize("d")?;
    let beta = if algorithm == Algorithm::Br { None } else { Some(BetaParam::new(h.f64("beta")?)?) };
    let bias = h.bool("bias")?;
    let reg = h.f64("reg")?;
    let len = d + usize::from(bias);
    let model = match algorithm {
        Algorithm::Surrogate => {
            if h.field("loss")? != "logistic" {
                return Err(h.bad("unsupported loss"));
            }
            let active = h
                .field("active")?
                .split(' ')
                .map(|t| parse_stat_index(t, s))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| h.bad("bad active index list"))?;
            let n = h.usize("vectors")?;
            let weights = h.vectors(n, len)?;
            let cfg = SurrogateConfig::new(s, beta.expect("surrogate beta"), LossKind::Logistic, active)?;
            TrainedModel::Surrogate(LinearModel::from_parts(cfg, d, bias, reg, weights)?)
        }
        Algorithm::Efp => {
            let raw = h.field("counts")?;
            let counts = if raw.is_empty() {
                Vec::new()
            } else {
                raw.split(',').map(|t| t.parse().ok()).collect::<Option<Vec<usize>>>().ok_or_else(|| h.bad("bad counts"))?
            };
            let n = h.usize("vectors")?;
            if n != 1 + s * (counts.len() + 1) {
                return Err(h.bad(format!("vector count {n} does not match s = {s} and {} counts", counts.len())));
            }
            let mut weights = h.vectors(n, len)?.into_iter();
            let zero_block = weights.next().expect("nonempty");
            let blocks = (0..s)
                .map(|_| MultinomialModel { d, bias, weights: weights.by_ref().take(counts.len() + 1).collect() })
                .collect();
            let model = EfpModel::from_parts(s, d, bias, reg, counts, zero_block, blocks)?;
            TrainedModel::Efp { model, beta: beta.expect("efp beta") }
        }
        Algorithm::Br => {
            let n = h.usize("vectors")?;
            if n != s {
                return Err(h.bad(format!("expected {s} vectors, found {n}")));
            }
            TrainedModel::Br(BrModel::from_parts(d, bias, reg, h.vectors(n, len)?)?)
        }
    };
    if h.pos != h.lines.len() {
        return Err(h.bad("unexpected trailing content"));
    }
    Ok(model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    parse_model(&read(path)?, path)
}

/// Loads a model and insists on its algorithm.
pub fn load_model_as(path: impl AsRef<Path>, expected: Algorithm) -> Result<TrainedModel> {
    let path = path.as_ref();
    let model = load_model(path)?;
    if model.algorithm() != expected {
        return Err(Error::ModelFormat(format!(
            "{}: model was trained with '{}', expected '{expected}'",
            path.display(),
            model.algorithm()
        )));
    }
    Ok(model)
}

pub fn load_surrogate(path: impl AsRef<Path>) -> Result<LinearModel> {
    match load_model_as(path, Algorithm::Surrogate)? {
        TrainedModel::Surrogate(m) => Ok(m),
        _ => unreachable!("algorithm checked"),
    }
}

/// Options for [`convert_labels_first`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConvertOptions {
    /// Declared tag count; inferred from the largest label when absent.
    pub s: Option<usize>,
    /// Declared feature count; inferred from the largest index when absent.
    pub d: Option<usize>,
    /// Labels in the input are 0-based (the usual LIBSVM multi-label style).
    pub zero_based_labels: bool,
}

/// Converts `l1,l2 idx:val idx:val ...` lines (feature indices 1-based) into
/// a dataset. A line whose first token contains `:` has no labels.
pub fn convert_labels_first(text: &str, path: &Path, opts: ConvertOptions) -> Result<Dataset> {
    let base = usize::from(!opts.zero_based_labels);
    let mut raw = Vec::new();
    let mut max_label = 0usize;
    let mut max_feat = 0usize;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace().peekable();
        let labels = match tokens.peek() {
            Some(t) if !t.contains(':') => tokens.next().unwrap_or(""),
            _ => "",
        };
        for tok in labels.split(',').filter(|t| !t.is_empty()) {
            let j = parse_usize(path, n, "label index", tok)?;
            if j < base {
                return Err(parse_err(path, n, format!("label {j} below base {base}")));
            }
            max_label = max_label.max(j - base + 1);
        }
        let feats: Vec<&str> = tokens.collect();
        for tok in &feats {
            if let Some((idx, _)) = tok.split_once(':') {
                max_feat = max_feat.max(parse_usize(path, n, "feature index", idx)?);
            }
        }
        raw.push((n, labels, feats));
    }
    let s = opts.s.unwrap_or(max_label.max(1));
    let d = opts.d.unwrap_or(max_feat);
    let mut rows = Vec::with_capacity(raw.len());
    let mut labels = Vec::with_capacity(raw.len());
    for (n, lab, feats) in raw {
        labels.push(parse_labels(path, n, lab, s, base)?);
        rows.push(parse_features(path, n, feats.into_iter(), d)?);
    }
    Dataset::new(s, d, rows, labels)
}
