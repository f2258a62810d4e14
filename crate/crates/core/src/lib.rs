//! Model of an adaptive ECG edge node.
//!
//! The crate covers the whole on-node pipeline of a single-lead ECG wearable:
//!
//! * [`trace_io`] reads and writes sampled traces and beat annotations and
//!   generates deterministic synthetic recordings.
//! * [`dsp`] is the integer filtering chain and the online R-peak detector,
//!   plus detector scoring against annotations.
//! * [`qcnn`] runs the quantized 1D-CNN beat classifier (integer path and a
//!   real-valued reference path) and computes confusion-matrix metrics.
//! * [`procnet`] is the process network (tasks joined by blocking FIFOs) and
//!   the discrete-event engine that executes it on a single simulated core.
//! * [`adam`] is the adaptive runtime manager that picks the operating mode,
//!   clock frequency and sleep policy and rewires the network.
//! * [`power`] holds the platform constants and the energy model.

pub mod adam;
pub mod dsp;
pub mod error;
pub mod power;
pub mod procnet;
pub mod qcnn;
pub mod trace_io;

pub use error::{Error, Result};
