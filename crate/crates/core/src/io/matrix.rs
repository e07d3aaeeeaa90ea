//! Matrix files.
//!
//! Binary layout: the 8-byte magic `MSKPLSM1`, `rows` and `cols` as
//! little-endian u64, one encoding byte (0 = f64 little-endian, 1 = decimal
//! text), then the row-major payload. Text payloads are whitespace separated.
//!
//! The CSV variant starts with a `rows,cols` line followed by one
//! comma-separated line per row.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::write_atomic;

pub const MAGIC: &[u8; 8] = b"MSKPLSM1";
const HEADER_LEN: usize = 8 + 8 + 8 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    F64Le,
    Text,
}

impl Encoding {
    fn tag(self) -> u8 {
        match self {
            Encoding::F64Le => 0,
            Encoding::Text => 1,
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::MatrixFile(msg.into())
}

pub fn encode_matrix(m: &Matrix, encoding: Encoding) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    out.push(encoding.tag());
    match encoding {
        Encoding::F64Le => {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Encoding::Text => {
            for i in 0..m.rows() {
                let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn encode_csv(m: &Matrix) -> String {
    let mut out = format!("{},{}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn checked_len(rows: u64, cols: u64) -> Result<usize> {
    rows.checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| bad(format!("header {rows}x{cols} is too large")))
}

fn finish(rows: usize, cols: usize, values: Vec<f64>) -> Result<Matrix> {
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(bad(format!(
            "non-finite entry {} at row {}, column {}",
            values[k],
            k / cols.max(1),
            k % cols.max(1)
        )));
    }
    Matrix::from_vec(rows, cols, values)
}

/// Parses either encoding, dispatching on the magic bytes.
pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    if !bytes.starts_with(MAGIC) {
        let text = std::str::from_utf8(bytes).map_err(|_| bad("neither the binary magic nor UTF-8 CSV"))?;
        return decode_csv(text);
    }
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("header truncated: {} of {HEADER_LEN} bytes", bytes.len())));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"));
    let (rows, cols) = (word(8), word(16));
    let n = checked_len(rows, cols)?;
    let payload = &bytes[HEADER_LEN..];
    let values: Vec<f64> = match bytes[24] {
        0 => {
            let expected = n.checked_mul(8).ok_or_else(|| bad("payload size overflows"))?;
            if payload.len() != expected {
                return Err(bad(format!(
                    "payload length mismatch: header {rows}x{cols} expects {expected} bytes, found {}",
                    payload.len()
                )));
            }
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        }
        1 => {
            let text = std::str::from_utf8(payload).map_err(|_| bad("text payload is not UTF-8"))?;
            let values = text
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}`"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != n {
                return Err(bad(format!(
                    "payload length mismatch: header {rows}x{cols} expects {n} values, found {}",
                    values.len()
                )));
            }
            values
        }
        e => return Err(bad(format!("unknown element encoding {e}"))),
    };
    finish(rows as usize, cols as usize, values)
}

pub fn decode_csv(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    let parse_dim = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad header `{header}`, expected rows,cols")));
    if dims.len() != 2 {
        return Err(bad(format!("bad header `{header}`, expected rows,cols")));
    }
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let n = checked_len(rows, cols)?;
    let mut values = Vec::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad(format!("bad number `{}` on data line {}", t.trim(), i + 1))))
            .collect::<Result<_>>()?;
        if row.len() as u64 != cols {
            return Err(bad(format!("data line {} has {} values, expected {cols}", i + 1, row.len())));
        }
        values.extend(row);
    }
    if values.len() != n {
        return Err(bad(format!(
            "payload length mismatch: header {rows}x{cols} expects {n} values, found {}",
            values.len()
        )));
    }
    finish(rows as usize, cols as usize, values)
}

pub fn ingest_matrix(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    decode_matrix(&bytes).map_err(|e| match e {
        Error::MatrixFile(msg) => Error::MatrixFile(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_matrix(path: &Path, m: &Matrix, encoding: Encoding) -> Result<()> {
    write_atomic(path, &encode_matrix(m, encoding))
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    write_atomic(path, encode_csv(m).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Matrix {
        Matrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin() / 3.0)
    }

    #[test]
    fn binary_round_trip_is_bitwise() {
        let m = sample();
        assert_eq!(decode_matrix(&encode_matrix(&m, Encoding::F64Le)).unwrap(), m);
        assert_eq!(decode_matrix(&encode_matrix(&m, Encoding::Text)).unwrap(), m);
    }

    #[test]
    fn truncated_payload_names_lengths() {
        let bytes = encode_matrix(&sample(), Encoding::F64Le);
        let err = decode_matrix(&bytes[..bytes.len() - 8]).unwrap_err().to_string();
        assert!(err.contains("168") && err.contains("160"), "{err}");
        assert!(decode_matrix(&bytes[..10]).is_err());
    }

    #[test]
    fn csv_matches_binary() {
        let m = sample();
        let back = decode_matrix(encode_csv(&m).as_bytes()).unwrap();
        assert!(back.max_abs_diff(&m) <= 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        let mut bytes = encode_matrix(&sample(), Encoding::F64Le);
        bytes[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_matrix(&bytes).is_err());
        assert!(decode_csv("2,2\n1,2\n3\n").is_err());
        assert!(decode_csv("2,2\n1,2\n").is_err());
        assert!(decode_csv("2;2\n").is_err());
        assert!(decode_csv("1,1\ninf\n").is_err());
    }
}
