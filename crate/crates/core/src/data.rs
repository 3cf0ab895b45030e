//! Sparse labeled datasets: LIBSVM text I/O and synthetic generation.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};
use crate::oracle::sample_sphere;
use crate::rng::RandomStream;
use crate::vector::DenseVector;

/// One sparse row. Indices are 0-based and strictly increasing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseRow {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseRow {
    /// Sorts by index; a repeated index keeps the last value given.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut pairs: Vec<(usize, f64)> = pairs.into_iter().collect();
        pairs.sort_by_key(|p| p.0);
        let mut row = SparseRow::default();
        for (i, v) in pairs {
            let i = u32::try_from(i).expect("feature index exceeds u32");
            if row.indices.last() == Some(&i) {
                *row.values.last_mut().unwrap() = v;
            } else {
                row.indices.push(i);
                row.values.push(v);
            }
        }
        row
    }

    pub fn from_dense(x: &[f64]) -> Self {
        Self::from_pairs(x.iter().copied().enumerate().filter(|(_, v)| *v != 0.0))
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    /// Entries beyond `x.len()` are ignored.
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.iter().filter_map(|(i, v)| x.get(i).map(|xi| xi * v)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn max_index(&self) -> Option<usize> {
        self.indices.last().map(|&i| i as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDataset {
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
    dim: usize,
}

impl SparseDataset {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::param(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
            return Err(Error::param(format!("label {l} is not +1 or -1")));
        }
        if let Some(m) = rows.iter().filter_map(SparseRow::max_index).max() {
            if m >= dim {
                return Err(Error::param(format!("feature index {} exceeds dimension {dim}", m + 1)));
            }
        }
        Ok(Self { rows, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ParseReport {
    pub rows_read: usize,
    /// 1-based, as written in the file; 0 when no features appear.
    pub max_feature_index: usize,
    /// Distinct raw labels in ascending order.
    pub label_set: Vec<f64>,
    /// How raw labels were mapped to +1/-1.
    pub label_rule: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Pads the dimension; must be at least the largest index in the file.
    pub dim: Option<usize>,
}

pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<(SparseDataset, ParseReport)> {
    parse_libsvm_with(reader, ParseOptions::default())
}

pub fn parse_libsvm_str(text: &str) -> Result<(SparseDataset, ParseReport)> {
    parse_libsvm(text.as_bytes())
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse(ParseError { line, column, message: message.into() })
}

fn parse_finite(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn parse_libsvm_with<R: BufRead>(mut reader: R, options: ParseOptions) -> Result<(SparseDataset, ParseReport)> {
    let mut report = ParseReport::default();
    let mut raw_labels: Vec<f64> = Vec::new();
    let mut label_lines: Vec<usize> = Vec::new();
    let mut rows: Vec<SparseRow> = Vec::new();
    let mut max_index = 0usize;
    let mut buf = Vec::new();
    let mut line_no = 0usize;

    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let line = std::str::from_utf8(&buf).map_err(|e| perr(line_no, e.valid_up_to() + 1, "invalid UTF-8"))?;
        let content = line.split('#').next().unwrap_or("");
        let mut tokens = tokens_with_columns(content);
        let Some((label_col, label_tok)) = tokens.next() else {
            continue;
        };
        let label =
            parse_finite(label_tok).ok_or_else(|| perr(line_no, label_col, format!("invalid label '{label_tok}'")))?;

        let mut pairs: Vec<(usize, f64)> = Vec::new();
        let mut ordered = true;
        for (col, tok) in tokens {
            let (idx_tok, val_tok) =
                tok.split_once(':').ok_or_else(|| perr(line_no, col, format!("missing ':' in '{tok}'")))?;
            let idx: u64 =
                idx_tok.parse().map_err(|_| perr(line_no, col, format!("invalid feature index '{idx_tok}'")))?;
            if idx == 0 {
                return Err(perr(line_no, col, "feature indices start at 1"));
            }
            if idx > u32::MAX as u64 {
                return Err(perr(line_no, col, format!("feature index {idx} too large")));
            }
            let val = parse_finite(val_tok)
                .ok_or_else(|| perr(line_no, col + idx_tok.len() + 1, format!("invalid value '{val_tok}'")))?;
            let idx = idx as usize;
            if let Some(&(prev, _)) = pairs.last() {
                if idx <= prev {
                    ordered = false;
                }
            }
            pairs.push((idx, val));
            max_index = max_index.max(idx);
        }
        if !ordered {
            report.warnings.push(format!("line {line_no}: indices not strictly increasing; sorted, last value kept"));
        }
        rows.push(SparseRow::from_pairs(pairs.into_iter().map(|(i, v)| (i - 1, v))));
        raw_labels.push(label);
        label_lines.push(line_no);
    }

    let (map, rule, label_set) = label_mapping(&raw_labels, &label_lines)?;
    let labels = raw_labels.iter().map(|&l| map(l)).collect();
    let dim = match options.dim {
        Some(d) if d < max_index => {
            return Err(Error::param(format!("explicit dimension {d} is below max feature index {max_index}")))
        }
        Some(d) => d,
        None => max_index,
    };
    report.rows_read = rows.len();
    report.max_feature_index = max_index;
    report.label_set = label_set;
    report.label_rule = rule;
    let ds = SparseDataset::new(rows, labels, dim)?;
    Ok((ds, report))
}

fn tokens_with_columns(s: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut rest = s;
    let mut offset = 0usize;
    std::iter::from_fn(move || {
        let start = rest.find(|c: char| !c.is_ascii_whitespace())?;
        let tail = &rest[start..];
        let len = tail.find(|c: char| c.is_ascii_whitespace()).unwrap_or(tail.len());
        let col = offset + start + 1;
        let tok = &tail[..len];
        offset += start + len;
        rest = &tail[len..];
        Some((col, tok))
    })
}

type LabelMap = (Box<dyn Fn(f64) -> f64>, String, Vec<f64>);

/// Two distinct labels: the larger becomes +1. One label: positive values
/// become +1, others -1. More than two is an error.
fn label_mapping(raw: &[f64], lines: &[usize]) -> Result<LabelMap> {
    let mut set: Vec<f64> = Vec::new();
    for (&l, &line) in raw.iter().zip(lines) {
        if !set.contains(&l) {
            if set.len() == 2 {
                return Err(perr(line, 1, format!("more than two distinct labels: {}, {}, {l}", set[0], set[1])));
            }
            set.push(l);
        }
    }
    set.sort_by(f64::total_cmp);
    Ok(match set.as_slice() {
        [] => (Box::new(|l| l), "no rows".into(), set),
        [only] => {
            let only = *only;
            let rule = format!("single label {only} -> {}", if only > 0.0 { "+1" } else { "-1" });
            (Box::new(|l: f64| if l > 0.0 { 1.0 } else { -1.0 }), rule, set)
        }
        [lo, hi] => {
            let hi = *hi;
            let rule = format!("{hi} -> +1, {lo} -> -1");
            (Box::new(move |l| if l == hi { 1.0 } else { -1.0 }), rule, set)
        }
        _ => unreachable!(),
    })
}

/// Opens a file, decompressing when the name ends in `.gz`.
pub fn load_libsvm(path: impl AsRef<Path>, options: ParseOptions) -> Result<(SparseDataset, ParseReport)> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let reader: Box<dyn Read> = if gz { Box::new(MultiGzDecoder::new(file)) } else { Box::new(file) };
    parse_libsvm_with(BufReader::new(reader), options)
}

/// Labels are written as `+1` / `-1`; values use the shortest round-trip form.
pub fn to_libsvm(ds: &SparseDataset) -> String {
    let mut out = String::new();
    for (row, label) in ds.rows.iter().zip(&ds.labels) {
        out.push_str(if *label > 0.0 { "+1" } else { "-1" });
        for (i, v) in row.iter() {
            let _ = write!(out, " {}:{}", i + 1, v);
        }
        out.push('\n');
    }
    out
}

/// Planted linear classifier. `x*` is uniform on the sphere; each row is a
/// standard Gaussian shifted by `margin` along `sign(z^T x*) x*`, labelled by
/// its side of the hyperplane and flipped with probability `noise`.
pub fn generate_synthetic(n: usize, d: usize, margin: f64, noise: f64, rng: &RandomStream) -> Result<SparseDataset> {
    if n == 0 || d == 0 {
        return Err(Error::param(format!("synthetic data needs n, d >= 1, got n={n} d={d}")));
    }
    if !(0.0..1.0).contains(&noise) {
        return Err(Error::param(format!("noise rate {noise} not in [0, 1)")));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::param(format!("margin {margin} must be finite and nonnegative")));
    }
    let x_star = sample_sphere(&mut rng.derive(&[0]), d);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = rng.derive(&[1, i as u64]);
        let mut z: DenseVector = (0..d).map(|_| r.standard_normal()).collect();
        let side = if z.dot(&x_star) >= 0.0 { 1.0 } else { -1.0 };
        z.axpy(side * margin, &x_star);
        let flip = r.uniform() < noise;
        labels.push(if flip { -side } else { side });
        rows.push(SparseRow::from_dense(&z));
    }
    SparseDataset::new(rows, labels, d)
}
