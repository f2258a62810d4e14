use super::quant::{QTensor, QuantParams};
use crate::trace_io::EcgTrace;
use crate::{Error, Result};

/// CNN input frame length in samples.
pub const FRAME_LEN: usize = 198;

/// `len` samples starting at `center - len / 2`; positions outside the trace
/// read as zero.
pub fn extract_window(samples: &[i16], center: i64, len: usize) -> Vec<i16> {
    let start = center - (len / 2) as i64;
    (0..len as i64)
        .map(|i| {
            let j = start + i;
            if j >= 0 && (j as usize) < samples.len() {
                samples[j as usize]
            } else {
                0
            }
        })
        .collect()
}

/// The 198-sample frame centred on `center` (frame index 99 is `center`).
pub fn extract_frame(trace: &EcgTrace, center: usize) -> Vec<i16> {
    extract_window(&trace.samples, center as i64, FRAME_LEN)
}

pub fn quantize_frame(frame: &[i16], qp: QuantParams) -> QTensor {
    let data = frame.iter().map(|&v| qp.quantize(v as f64)).collect();
    QTensor {
        channels: 1,
        length: frame.len(),
        data,
        qparams: qp,
    }
}

/// Offsets `-48, -45, ..., 45, 48`: the original frame plus 32 decentred
/// copies, 3 samples apart.
pub fn default_shifts() -> Vec<i64> {
    (-16..=16).map(|k| 3 * k).collect()
}

/// One frame per offset, each extracted at `center + offset`.
pub fn augment(trace: &EcgTrace, center: usize, shifts: &[i64]) -> Result<Vec<Vec<i16>>> {
    if shifts.is_empty() {
        return Err(Error::InvalidArgument("augmentation needs at least one shift".into()));
    }
    Ok(shifts
        .iter()
        .map(|&s| extract_window(&trace.samples, center as i64 + s, FRAME_LEN))
        .collect())
}
