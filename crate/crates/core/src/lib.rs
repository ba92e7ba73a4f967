//! Fusion of class-agnostic instance masks with semantic logits over
//! sliding windows of equirectangular panoramas.
//!
//! The crate consumes model outputs (TA logits, instance masks, student
//! logits) and produces ensemble labels with confidence weights, refined
//! overlap boundaries, the adaptation loss stack as scalar diagnostics, and
//! IoU metrics. Everything is deterministic and pure; windows and overlaps
//! may be processed in parallel without changing results.
//!
//! Module map:
//!
//! * [`grid`]: logits, label maps, softmax, entropy, top-2 gap
//! * [`window`]: window planning, extraction and stitching
//! * [`masks`], [`fusion`]: instance masks and cross-task fusion
//! * [`boundary`]: boundary maps, refinement and boundary losses
//! * [`losses`]: consistency, cross-entropy and total losses
//! * [`metrics`]: confusion matrix, IoU, mIoU
//! * [`synth`]: deterministic synthetic scenes
//! * [`io`]: NPY, RLE mask JSON, configs, manifests
//! * [`pipeline`], [`cli`]: end-to-end runs

pub mod boundary;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod grid;
pub mod io;
pub mod losses;
pub mod masks;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
pub use grid::{ClassCatalog, Label, LabelMap, LogitsGrid, ProbVector};
