//! Crime-data ingestion: Chicago-style CSV parsing, the weekly evening
//! window, severity classes, train/test splits, year folding and per-block
//! count tensors.

pub mod blocks;
pub mod calendar;
pub mod events;
pub mod fold;
pub mod parse;
pub mod severity;
pub mod synth;

pub use blocks::{BlockDef, BlockMap};
pub use calendar::{block_counts, CycleCalendar};
pub use events::{read_events, write_events, CrimeEvent, Dataset, Split};
pub use fold::{fold_key, fold_years, FoldKey};
pub use parse::{
    filter_window, parse_csv, ColumnMapping, ParseReport, RawEvent, SchemaConfig, WindowSpec,
};
pub use severity::{Severity, SeverityClassifier};
