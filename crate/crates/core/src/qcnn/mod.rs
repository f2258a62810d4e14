//! Quantized 1D-CNN beat classifier.
//!
//! The network is always `conv -> relu -> pool -> conv -> relu -> pool -> fc
//! -> relu -> fc` with zero bias everywhere. Activations are asymmetric int8
//! (`real = scale * (q - zero_point)`), weights are symmetric int8, and every
//! conv/fc layer requantizes its int32 accumulator with an integer multiplier
//! and right shift, so arbitrary (non power-of-two) scales are supported
//! without floating point at inference time.
//!
//! [`infer_float`] runs the same topology in `f64` on dequantized weights and
//! serves as the reference path.

mod frames;
mod infer;
mod metrics;
mod model;
mod quant;

pub use frames::{augment, default_shifts, extract_frame, extract_window, quantize_frame, FRAME_LEN};
pub use infer::{argmax_lowest, infer_float, infer_float_layers, infer_quant, QuantOutput};
pub use metrics::{classify_run, BeatClassifier, ConfusionMatrix, Metrics};
pub use model::{LayerKind, LayerSpec, QModel, WeightEncoding, WEIGHT_FORMAT};
pub use quant::{round_half_away_shift, QTensor, QuantParams, Requant};
