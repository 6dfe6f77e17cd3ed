//! File formats, CSV ingestion and synthetic generators.

mod csv_ingest;
mod format;
pub mod synth;

pub use csv_ingest::{ingest_csv, to_csv, CsvManifest, LabelKind};
pub use format::{
    decode, encode, read_record, read_segment, write_record, write_segment, FileKind, MatrixRecord, HEADER_LEN,
    VERSION,
};
