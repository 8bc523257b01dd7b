use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MimError, Result};

const MAGIC: &[u8; 8] = b"MIMDATA1";
const MAGIC_STEM: &[u8; 7] = b"MIMDATA";

/// Samples `(x_i, y_i)` with `x` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    seed: u64,
    model_tag: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    n: usize,
    d: usize,
    seed: u64,
    model_tag: String,
    dtype: String,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: usize, seed: u64, model_tag: String) -> Result<Self> {
        let n = y.len();
        if d == 0 || x.len() != n * d {
            return Err(MimError::DimensionMismatch(format!(
                "x has {} entries, expected n·d = {n}·{d}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MimError::invalid("x contains non-finite entries"));
        }
        Ok(Dataset {
            n,
            d,
            x,
            y,
            seed,
            model_tag,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Row-major `n × d` inputs.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            n: range.len(),
            d: self.d,
            x: self.x[range.start * self.d..range.end * self.d].to_vec(),
            y: self.y[range].to_vec(),
            seed: self.seed,
            model_tag: self.model_tag.clone(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| MimError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = serde_json::to_vec(&Header {
            n: self.n,
            d: self.d,
            seed: self.seed,
            model_tag: self.model_tag.clone(),
            dtype: "f64le".into(),
        })?;
        let io = |e| MimError::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(header.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&header).map_err(io)?;
        for v in self.x.iter().chain(&self.y) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| MimError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(MimError::CorruptHeader("file shorter than the fixed preamble".into()));
        }
        if &bytes[..8] != MAGIC {
            if &bytes[..7] == MAGIC_STEM {
                return Err(MimError::VersionMismatch(format!(
                    "format version '{}', expected '1'",
                    bytes[7] as char
                )));
            }
            return Err(MimError::CorruptHeader("bad magic".into()));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() < hlen {
            return Err(MimError::CorruptHeader("header length exceeds file size".into()));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| MimError::CorruptHeader(e.to_string()))?;
        if header.dtype != "f64le" {
            return Err(MimError::CorruptHeader(format!("unsupported dtype '{}'", header.dtype)));
        }
        let payload = &body[hlen..];
        let expected = (header.n as u128) * (header.d as u128 + 1) * 8;
        if payload.len() as u128 != expected {
            return Err(MimError::Truncated {
                expected: expected as u64,
                found: payload.len() as u64,
            });
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let nd = header.n * header.d;
        Dataset::new(
            values[..nd].to_vec(),
            values[nd..].to_vec(),
            header.d,
            header.seed,
            header.model_tag,
        )
    }

    /// CSV with header `y,x1,...,xd`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| MimError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| MimError::io(path, e);
        let mut head = String::from("y");
        for j in 1..=self.d {
            head.push_str(&format!(",x{j}"));
        }
        writeln!(w, "{head}").map_err(io)?;
        for i in 0..self.n {
            let mut line = format!("{}", self.y[i]);
            for v in self.x_row(i) {
                line.push_str(&format!(",{v}"));
            }
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}
