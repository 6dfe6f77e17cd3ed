//! Binary segment / feature files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                         |
//! |-------:|-----:|-----------------------------------------------|
//! | 0      | 4    | magic (`EEGS` segment, `EEGT` temporal, `EEGP` spatial) |
//! | 4      | 4    | version, u32 = 1                              |
//! | 8      | 4    | rows, u32 (channels / windows)                |
//! | 12     | 4    | cols, u32 (samples / features)                |
//! | 16     | 8    | sampling rate, f64                            |
//! | 24     | 1    | label kind: 0 none, 1 class, 2 real           |
//! | 25     | 7    | reserved, zero                                |
//! | 32     | 8    | label: u64 class index or f64 target          |
//! | 40     | 8·rows·cols | payload, f64 row-major                 |

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::segment::{EegSegment, Label};

pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Segment,
    Temporal,
    Spatial,
}

impl FileKind {
    pub fn magic(self) -> &'static [u8; 4] {
        match self {
            FileKind::Segment => b"EEGS",
            FileKind::Temporal => b"EEGT",
            FileKind::Spatial => b"EEGP",
        }
    }
}

/// A decoded file: a real matrix plus sampling rate and label.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRecord {
    pub values: DMatrix<f64>,
    pub fs: f64,
    pub label: Label,
}

pub fn encode(kind: FileKind, record: &MatrixRecord) -> Vec<u8> {
    let (rows, cols) = record.values.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * rows * cols);
    out.extend_from_slice(kind.magic());
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    out.extend_from_slice(&record.fs.to_le_bytes());
    let (kind_byte, value) = match record.label {
        Label::None => (0u8, [0u8; 8]),
        Label::Class(k) => (1, (k as u64).to_le_bytes()),
        Label::Real(v) => (2, v.to_le_bytes()),
    };
    out.push(kind_byte);
    out.extend_from_slice(&[0u8; 7]);
    out.extend_from_slice(&value);
    for i in 0..rows {
        for j in 0..cols {
            out.extend_from_slice(&record.values[(i, j)].to_le_bytes());
        }
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn decode(kind: FileKind, bytes: &[u8]) -> Result<MatrixRecord> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[0..4] != kind.magic() {
        return Err(Error::Format {
            offset: 0,
            message: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[0..4]),
                String::from_utf8_lossy(kind.magic())
            ),
        });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let rows = u32_at(bytes, 8) as usize;
    let cols = u32_at(bytes, 12) as usize;
    let fs = f64_at(bytes, 16);
    let label = match bytes[24] {
        0 => Label::None,
        1 => Label::Class(u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize),
        2 => Label::Real(f64_at(bytes, 32)),
        other => {
            return Err(Error::Format {
                offset: 24,
                message: format!("unknown label kind {other}"),
            })
        }
    };
    let expected = (HEADER_LEN + 8 * rows * cols) as u64;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(Error::Format {
            offset: expected,
            message: format!("{} trailing bytes", actual - expected),
        });
    }
    let values = DMatrix::from_fn(rows, cols, |i, j| f64_at(bytes, HEADER_LEN + 8 * (i * cols + j)));
    Ok(MatrixRecord { values, fs, label })
}

pub fn write_record(path: &Path, kind: FileKind, record: &MatrixRecord) -> Result<()> {
    fs::write(path, encode(kind, record))?;
    Ok(())
}

pub fn read_record(path: &Path, kind: FileKind) -> Result<MatrixRecord> {
    decode(kind, &fs::read(path)?)
}

pub fn write_segment(path: &Path, segment: &EegSegment) -> Result<()> {
    write_record(
        path,
        FileKind::Segment,
        &MatrixRecord {
            values: segment.samples.clone(),
            fs: segment.fs,
            label: segment.label,
        },
    )
}

pub fn read_segment(path: &Path) -> Result<EegSegment> {
    let r = read_record(path, FileKind::Segment)?;
    EegSegment::new(r.values, r.fs, r.label)
}
