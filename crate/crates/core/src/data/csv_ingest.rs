//! CSV ingestion: channels as columns, one sample per row.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::segment::{EegSegment, Label};
use crate::signal::decimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelKind {
    #[default]
    Class,
    Real,
}

/// Layout of a CSV recording, read from a `key = value` manifest:
///
/// ```text
/// fs = 1000
/// channels = Fp1, Fp2, Cz
/// label_column = label
/// label_kind = class
/// segment_seconds = 8
/// decimate = 5
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct CsvManifest {
    pub fs: f64,
    pub channels: Vec<String>,
    pub label_column: Option<String>,
    pub label_kind: LabelKind,
    pub segment_seconds: Option<f64>,
    pub decimate: usize,
}

impl CsvManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Csv {
                line: i as u64 + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str| -> Result<Option<f64>> {
            kv.get(key)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("manifest {key} = {v}")))
                })
                .transpose()
        };
        let fs = num("fs")?.ok_or_else(|| Error::InvalidParameter("manifest lacks fs".into()))?;
        let channels: Vec<String> = kv
            .get("channels")
            .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();
        if channels.is_empty() {
            return Err(Error::InvalidParameter("manifest lists no channels".into()));
        }
        let label_kind = match kv.get("label_kind").map(String::as_str) {
            None | Some("class") => LabelKind::Class,
            Some("real") => LabelKind::Real,
            Some(other) => return Err(Error::InvalidParameter(format!("label_kind = {other}"))),
        };
        Ok(Self {
            fs,
            channels,
            label_column: kv.get("label_column").cloned(),
            label_kind,
            segment_seconds: num("segment_seconds")?,
            decimate: num("decimate")?.map_or(1, |v| v as usize),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Reads a recording, decimates it and cuts it into non-overlapping segments.
/// Each segment takes the label found on its first row.
pub fn ingest_csv(path: &Path, manifest: &CsvManifest) -> Result<Vec<EegSegment>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(&e))?;
    let headers = reader.headers().map_err(|e| csv_error(&e))?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Csv {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let chan_idx = manifest
        .channels
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let label_idx = manifest.label_column.as_deref().map(column).transpose()?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); chan_idx.len()];
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(&e))?;
        let line = row as u64 + 2;
        let cell = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| Error::Csv {
                line,
                message: format!("non-numeric cell {raw:?} in column {}", i + 1),
            })
        };
        for (col, &i) in columns.iter_mut().zip(&chan_idx) {
            col.push(cell(i)?);
        }
        if let Some(i) = label_idx {
            labels.push(cell(i)?);
        }
    }

    let label_at = |row: usize| -> Label {
        match labels.get(row) {
            None => Label::None,
            Some(&v) => match manifest.label_kind {
                LabelKind::Class => Label::Class(v.max(0.0).round() as usize),
                LabelKind::Real => Label::Real(v),
            },
        }
    };

    let whole = EegSegment::from_rows(&columns, manifest.fs, Label::None)?;
    let whole = decimate(&whole, manifest.decimate)?;
    let factor = manifest.decimate.max(1);
    let total = whole.len();
    let seg_len = match manifest.segment_seconds {
        Some(s) => (s * whole.fs).round() as usize,
        None => total,
    };
    if seg_len < 2 || seg_len > total {
        return Err(Error::Length {
            what: "csv segment",
            needed: seg_len.max(2),
            actual: total,
        });
    }
    (0..total / seg_len)
        .map(|k| {
            let start = k * seg_len;
            let x = whole.samples.columns(start, seg_len).into_owned();
            EegSegment::new(x, whole.fs, label_at(start * factor))
        })
        .collect()
}

fn csv_error(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

/// Convenience for tests and tools: a CSV body with one column per channel.
pub fn to_csv(names: &[&str], data: &DMatrix<f64>, labels: Option<&[f64]>) -> String {
    let mut s = names.join(",");
    if labels.is_some() {
        s.push_str(",label");
    }
    s.push('\n');
    for t in 0..data.ncols() {
        let mut row: Vec<String> = (0..data.nrows()).map(|c| data[(c, t)].to_string()).collect();
        if let Some(l) = labels {
            row.push(l[t].to_string());
        }
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}
