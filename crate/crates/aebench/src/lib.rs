//! File formats, sequence IO, reports and the command line for
//! [`aebench_core`].
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod cli;
pub mod config;
pub mod crf_file;
pub mod error;
pub mod fsutil;
pub mod pgm;
pub mod report;
pub mod sequence;
pub mod svg;
pub mod trajectory_file;

pub use error::{FormatError, FormatResult};
