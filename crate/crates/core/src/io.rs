//! JSON problem files.
//!
//! Vectors and constraint rows are written either as a flat list of `q`
//! numbers (orthant-only spaces) or as one entry per block, where a PSD block
//! of order `n` is a full symmetric matrix given as `n²` row-major numbers
//! (nested `n × n` lists are accepted too).

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cones::{smat_unchecked, svec, Block, ConeSpec};
use crate::error::{Error, Result};
use crate::model::{MpcloInstance, RawInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDesc {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

/// The on-disk layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub version: u32,
    pub space: Vec<BlockDesc>,
    #[serde(rename = "A")]
    pub a: Vec<Value>,
    #[serde(rename = "M")]
    pub m: Vec<Value>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Value>>,
    pub c: Value,
    pub d: Value,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, Value>,
}

fn perr(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn parse_space(blocks: &[BlockDesc]) -> Result<ConeSpec> {
    let mut out = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        let size = b.dim.or(b.order);
        let blk = match (b.kind.as_str(), size) {
            ("orthant", Some(n)) => Block::Orthant(n),
            ("psd", Some(n)) => Block::Psd(n),
            (k, None) => return Err(perr(format!("block {i} ({k}) has no dim/order"))),
            (k, _) => return Err(perr(format!("block {i}: unknown type {k:?}"))),
        };
        out.push(blk);
    }
    ConeSpec::new(out)
}

fn numbers(v: &Value, what: &str) -> Result<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| perr(format!("{what}: expected a list")))?;
    let mut out = Vec::with_capacity(arr.len());
    for x in arr {
        match x {
            Value::Number(n) => out.push(n.as_f64().ok_or_else(|| perr(format!("{what}: bad number")))?),
            Value::Array(_) => out.extend(numbers(x, what)?),
            _ => return Err(perr(format!("{what}: expected numbers"))),
        }
    }
    Ok(out)
}

fn parse_vector(v: &Value, space: &ConeSpec, what: &str) -> Result<DVector<f64>> {
    let arr = v.as_array().ok_or_else(|| perr(format!("{what}: expected a list")))?;
    let flat = arr.iter().all(Value::is_number);
    if flat {
        if !space.is_orthant_only() {
            return Err(perr(format!("{what}: flat vectors need an orthant-only space")));
        }
        let xs = numbers(v, what)?;
        if xs.len() != space.total_dim() {
            return Err(Error::dim(what, space.total_dim(), xs.len()));
        }
        return Ok(DVector::from_vec(xs));
    }
    if arr.len() != space.blocks().len() {
        return Err(Error::dim(&format!("{what} blocks"), space.blocks().len(), arr.len()));
    }
    let mut out = Vec::with_capacity(space.total_dim());
    for (k, (blk, entry)) in space.blocks().iter().zip(arr).enumerate() {
        let xs = numbers(entry, what)?;
        match *blk {
            Block::Orthant(n) => {
                if xs.len() != n {
                    return Err(Error::dim(&format!("{what} block {k}"), n, xs.len()));
                }
                out.extend(xs);
            }
            Block::Psd(n) => {
                if xs.len() != n * n {
                    return Err(Error::dim(&format!("{what} block {k}"), n * n, xs.len()));
                }
                let m = DMatrix::from_row_slice(n, n, &xs);
                out.extend(svec(&m)?.iter());
            }
        }
    }
    Ok(DVector::from_vec(out))
}

fn parse_rows(rows: &[Value], space: &ConeSpec, what: &str) -> Result<DMatrix<f64>> {
    let q = space.total_dim();
    let mut m = DMatrix::zeros(rows.len(), q);
    for (i, r) in rows.iter().enumerate() {
        let v = parse_vector(r, space, &format!("{what} row {i}"))?;
        m.row_mut(i).copy_from(&v.transpose());
    }
    Ok(m)
}

impl ProblemFile {
    pub fn to_raw(&self) -> Result<RawInstance> {
        if self.version != 1 {
            return Err(perr(format!("unsupported version {}", self.version)));
        }
        let space = parse_space(&self.space)?;
        let a = parse_rows(&self.a, &space, "A")?;
        let m = parse_rows(&self.m, &space, "M")?;
        let b = match &self.b {
            Some(rows) => Some(parse_rows(rows, &space, "B")?),
            None => None,
        };
        let c = parse_vector(&self.c, &space, "c")?;
        let d = parse_vector(&self.d, &space, "d")?;
        let labels = self
            .labels
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect();
        Ok(RawInstance {
            space,
            a,
            b,
            m,
            c,
            d,
            labels,
        })
    }

    /// Canonical file for raw instance data.
    pub fn from_raw(raw: &RawInstance) -> Self {
        let space = raw
            .space
            .blocks()
            .iter()
            .map(|b| match *b {
                Block::Orthant(n) => BlockDesc {
                    kind: "orthant".into(),
                    dim: Some(n),
                    order: None,
                },
                Block::Psd(n) => BlockDesc {
                    kind: "psd".into(),
                    dim: None,
                    order: Some(n),
                },
            })
            .collect();
        let rows = |m: &DMatrix<f64>| -> Vec<Value> {
            (0..m.nrows())
                .map(|i| emit_vector(m.row(i).transpose().as_slice(), &raw.space))
                .collect()
        };
        ProblemFile {
            version: 1,
            space,
            a: rows(&raw.a),
            m: rows(&raw.m),
            b: raw.b.as_ref().map(rows),
            c: emit_vector(raw.c.as_slice(), &raw.space),
            d: emit_vector(raw.d.as_slice(), &raw.space),
            labels: raw
                .labels
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect(),
        }
    }
}

fn emit_vector(v: &[f64], space: &ConeSpec) -> Value {
    if space.is_orthant_only() {
        return json!(v);
    }
    let entries: Vec<Value> = space
        .ranges()
        .into_iter()
        .map(|(b, r)| match b {
            Block::Orthant(_) => json!(&v[r]),
            Block::Psd(n) => {
                let m = smat_unchecked(&v[r], n);
                let flat: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
                json!(flat)
            }
        })
        .collect();
    Value::Array(entries)
}

pub fn parse_problem(text: &str) -> Result<RawInstance> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| perr(e.to_string()))?;
    file.to_raw()
}

pub fn read_problem(path: &Path) -> Result<RawInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_problem(&text)
}

/// Read, validate and build an instance.
pub fn load_instance(path: &Path) -> Result<MpcloInstance> {
    MpcloInstance::new(read_problem(path)?)
}

/// Canonical JSON text.
pub fn emit_problem(raw: &RawInstance) -> String {
    let mut s = serde_json::to_string_pretty(&ProblemFile::from_raw(raw)).expect("serializable");
    s.push('\n');
    s
}

/// SHA-256 of the canonical form, hex encoded.
pub fn digest(raw: &RawInstance) -> String {
    let bytes = Sha256::digest(emit_problem(raw).as_bytes());
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
