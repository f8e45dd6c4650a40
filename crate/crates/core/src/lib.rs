//! Generalized metastable switch (MSS) memristor model.
//!
//! A memristor is represented as a population of `N` two-state switches whose
//! voltage-dependent transitions are sampled every time step, blended with a
//! parallel Schottky diode branch. The crate provides:
//!
//! * [`model`]: device parameters, transition probabilities, conductance and
//!   the per-step population update (stochastic and mean-field).
//! * [`stochastics`]: seedable random streams and the transition-count sampler.
//! * [`drivers`]: drive waveforms and the fixed-step time grid.
//! * [`circuit`]: series chains of devices and resistors.
//! * [`fitting`]: recovering device parameters from a measured I-V trace.
//! * [`trace`], [`analysis`], [`io`], [`config`], [`sim`]: simulation records,
//!   loop metrics, CSV/SVG emission and the configuration schema behind the
//!   `mss` command-line tool.

pub mod analysis;
pub mod circuit;
pub mod config;
pub mod drivers;
pub mod error;
pub mod fitting;
pub mod io;
pub mod model;
pub mod sim;
pub mod stochastics;
pub mod trace;

pub use error::{Error, Result};
pub use model::{DeviceState, DiodeParams, MeanFieldState, Memristor, MssParams};
pub use stochastics::{make_stream, RandomStream, SamplerMode};
pub use trace::{Trace, TraceRow};
