//! Per-frame CTC log-probability matrices and their on-disk formats.
//!
//! Binary layout (little endian):
//!
//! ```text
//! "CTCL" | u8 version=1 | u8 flags (bit0 = normalized) | u16 reserved=0 | u32 T | u32 V | T*V f32 row-major
//! ```
//!
//! Anything that does not start with the magic is parsed as TSV: one frame per
//! line, `V` tab-separated decimal floats.

use std::io::{Read, Write};

use thiserror::Error;

use crate::vocab::TokenId;

pub const MAGIC: &[u8; 4] = b"CTCL";
pub const FORMAT_VERSION: u8 = 1;
const FLAG_NORMALIZED: u8 = 0x01;
const HEADER_LEN: usize = 16;

/// Allowed deviation of a normalized row's log-sum-exp from zero.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum LogProbError {
    #[error("bad magic: expected \"CTCL\" header")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown flag bits {0:#04x}")]
    UnknownFlags(u8),
    #[error("reserved header field must be zero, found {0}")]
    Reserved(u16),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing data after payload ({0} bytes)")]
    TrailingData(usize),
    #[error("invalid value {value} at frame {frame}, token {token}")]
    InvalidValue { frame: usize, token: usize, value: f32 },
    #[error("frame {frame} is flagged normalized but its log-sum-exp is {lse}")]
    NotNormalized { frame: usize, lse: f64 },
    #[error("row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("cannot parse {text:?} at line {line}")]
    Parse { line: usize, text: String },
    #[error("matrix dimensions overflow")]
    TooLarge,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A `T x V` matrix of natural-log token probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbMatrix {
    frames: usize,
    vocab_size: usize,
    values: Vec<f32>,
    normalized: bool,
}

impl LogProbMatrix {
    /// Validates values and, when `normalized`, every row's log-sum-exp.
    pub fn new(
        frames: usize,
        vocab_size: usize,
        values: Vec<f32>,
        normalized: bool,
    ) -> Result<Self, LogProbError> {
        let expected = frames.checked_mul(vocab_size).ok_or(LogProbError::TooLarge)?;
        if values.len() != expected {
            return Err(LogProbError::Truncated {
                expected: expected * 4,
                found: values.len() * 4,
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if v.is_nan() || v > 0.0 {
                return Err(LogProbError::InvalidValue {
                    frame: i / vocab_size.max(1),
                    token: i % vocab_size.max(1),
                    value: v,
                });
            }
        }
        let m = Self {
            frames,
            vocab_size,
            values,
            normalized,
        };
        if normalized {
            for t in 0..frames {
                let lse = log_sum_exp(m.row(t));
                if !((lse.abs()) <= NORMALIZATION_TOLERANCE) {
                    return Err(LogProbError::NotNormalized { frame: t, lse });
                }
            }
        }
        Ok(m)
    }

    /// Builds from rows, flagging the matrix normalized iff every row passes
    /// the log-sum-exp check.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, LogProbError> {
        let vocab_size = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * vocab_size);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != vocab_size {
                return Err(LogProbError::RaggedRow {
                    row: i,
                    expected: vocab_size,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        let normalized = vocab_size > 0
            && rows
                .iter()
                .all(|r| log_sum_exp(r).abs() <= NORMALIZATION_TOLERANCE);
        Self::new(rows.len(), vocab_size, values, normalized)
    }

    /// An empty matrix with `vocab_size` columns.
    pub fn empty(vocab_size: usize) -> Self {
        Self {
            frames: 0,
            vocab_size,
            values: Vec::new(),
            normalized: true,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f32] {
        &self.values[t * self.vocab_size..(t + 1) * self.vocab_size]
    }

    #[inline]
    pub fn get(&self, t: usize, token: TokenId) -> f64 {
        f64::from(self.values[t * self.vocab_size + token as usize])
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Reads the binary format, or TSV when the magic is absent.
    pub fn load<R: Read>(mut source: R) -> Result<Self, LogProbError> {
        let mut buf = Vec::new();
        source.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, LogProbError> {
        if buf.starts_with(MAGIC) {
            return Self::read_binary(buf);
        }
        let text = std::str::from_utf8(buf).map_err(|_| LogProbError::BadMagic)?;
        Self::read_tsv(text)
    }

    pub fn read_binary(buf: &[u8]) -> Result<Self, LogProbError> {
        if buf.len() < HEADER_LEN {
            if !buf.starts_with(&MAGIC[..buf.len().min(4)]) {
                return Err(LogProbError::BadMagic);
            }
            return Err(LogProbError::Truncated {
                expected: HEADER_LEN,
                found: buf.len(),
            });
        }
        if &buf[0..4] != MAGIC {
            return Err(LogProbError::BadMagic);
        }
        let version = buf[4];
        if version != FORMAT_VERSION {
            return Err(LogProbError::UnsupportedVersion(version));
        }
        let flags = buf[5];
        if flags & !FLAG_NORMALIZED != 0 {
            return Err(LogProbError::UnknownFlags(flags));
        }
        let reserved = u16::from_le_bytes([buf[6], buf[7]]);
        if reserved != 0 {
            return Err(LogProbError::Reserved(reserved));
        }
        let frames = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let vocab_size = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
        let n = frames.checked_mul(vocab_size).ok_or(LogProbError::TooLarge)?;
        let payload = &buf[HEADER_LEN..];
        let expected = n.checked_mul(4).ok_or(LogProbError::TooLarge)?;
        if payload.len() < expected {
            return Err(LogProbError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(LogProbError::TrailingData(payload.len() - expected));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(frames, vocab_size, values, flags & FLAG_NORMALIZED != 0)
    }

    pub fn read_tsv(text: &str) -> Result<Self, LogProbError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split('\t')
                .map(|s| {
                    let s = s.trim();
                    s.parse::<f32>().map_err(|_| LogProbError::Parse {
                        line: i + 1,
                        text: s.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<(), LogProbError> {
        out.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, LogProbError> {
        let frames = u32::try_from(self.frames).map_err(|_| LogProbError::TooLarge)?;
        let vocab = u32::try_from(self.vocab_size).map_err(|_| LogProbError::TooLarge)?;
        let mut buf = Vec::with_capacity(HEADER_LEN + self.values.len() * 4);
        buf.extend_from_slice(MAGIC);
        buf.push(FORMAT_VERSION);
        buf.push(if self.normalized { FLAG_NORMALIZED } else { 0 });
        buf.extend_from_slice(&0u16.to_le_bytes());
        buf.extend_from_slice(&frames.to_le_bytes());
        buf.extend_from_slice(&vocab.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        Ok(buf)
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<(), LogProbError> {
        for t in 0..self.frames {
            let line: Vec<String> = self.row(t).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join("\t"))?;
        }
        Ok(())
    }
}

pub fn log_sum_exp(row: &[f32]) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = row.iter().map(|&v| (f64::from(v) - max).exp()).sum();
    max + s.ln()
}
