//! screenopt: construction, evaluation, and two-stage analysis of two- and
//! three-level screening experimental designs.
//!
//! The library is organized around a pipeline:
//!
//! - [`design`]: designs with replicate pairing, model expansion, degree-of-
//!   freedom accounting, and DSD/ADSD constructors;
//! - [`criteria`]: the expected confidence interval (ECI) criterion, alias and
//!   variance summaries, and the constrained reduced lack-of-fit criterion;
//! - [`constructor`]: a multi-restart coordinate exchange search with
//!   simultaneous replicate-row updates;
//! - [`analysis`]: stage-1 t-tests with a pre-selection variance estimator and
//!   stage-2 all-subsets mBIC / guided subsets selection;
//! - [`simulation`]: screening simulation harnesses and replay of the reactor
//!   example;
//! - [`numerics`]: the supporting dense linear algebra and distribution
//!   functions.

pub mod analysis;
pub mod constructor;
pub mod criteria;
pub mod design;
pub mod error;
pub mod numerics;
pub mod report;
pub mod simulation;

pub use error::{Error, Result};
