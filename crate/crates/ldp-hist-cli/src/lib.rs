//! Experiment harness for LDP distribution estimation: dataset synthesis and
//! ingestion, reproducible experiment pipelines over the mechanisms in
//! `ldp-hist`, and the file formats the CLI stages exchange.

pub mod dataset;
pub mod experiment;
pub mod report_io;
