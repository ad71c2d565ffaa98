//! Offline auto-exposure benchmarking core.
//!
//! Everything in this crate is a pure function of its inputs (plus explicit
//! seeds), so it builds without `std`; only `alloc` is required. File formats,
//! reports and the command line live in the `aebench` companion crate.
//!
//! Module map:
//!
//! - [`photometry`]: camera response curves, their estimation from an
//!   exposure stack, and DN ⇄ relative-exposure conversion.
//! - [`emulation`]: re-exposing a bracket to an arbitrary exposure time,
//!   bracket selection and the emulation validation protocol.
//! - [`ae_control`]: the exposure controllers and the closed-loop runner.
//! - [`features`]: corner detection, patch matching, grid uniformity and
//!   success curves.
//! - [`trajectory`]: two-view relative pose, trajectory composition,
//!   similarity alignment and relative pose error.
//! - [`synth`]: procedural HDR scenes and bracketed sequence rendering.
//! - [`bench`]: glue that runs controllers over sequences and scores them.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

extern crate alloc;

pub mod ae_control;
pub mod bench;
pub mod emulation;
mod error;
pub mod features;
mod image;
pub mod photometry;
pub mod stats;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
pub use image::{RadianceImage, RawImage, DN_LEVELS, MAX_DN};
pub use nalgebra;
