//! Simulation toolkit for detecting recycled microcontrollers from SRAM
//! power-on fingerprints.
//!
//! The crate models an SRAM cell population whose power-on states carry a
//! manufacturing fingerprint, ages that population under software-directed
//! BTI-style stress, profiles the bit-level write bias of the software that
//! ran on the part, and scores candidate devices against a baseline of known
//! new parts. A Monte Carlo evaluation layer turns a handful of simulated
//! reference devices into ROC curves over a whole aging schedule.
//!
//! Module map:
//! - [`sram`]: generative cell model, power-on sampling, bias maps, summaries
//! - [`aging`]: acceleration factor, directed margin drift, recovery
//! - [`swbias`]: write-trace replay and software bias profiles
//! - [`classify`]: scoring rules and the decision threshold machinery
//! - [`stats`]: Welch's t, Shapiro-Wilk, Moran's I, ROC/AUROC
//! - [`eval`]: population pipelines and Monte Carlo ROC evaluation
//! - [`family`]: calibrated device-family presets
//! - [`io`]: on-disk formats (snapshot sets, traces, CSV artifacts)

pub mod aging;
pub mod classify;
pub mod error;
pub mod eval;
pub mod family;
pub mod io;
pub mod seed;
pub mod sram;
pub mod stats;
pub mod swbias;

pub use error::{Error, Result};
