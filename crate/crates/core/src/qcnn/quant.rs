use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Affine int8 quantization: `real = scale * (q - zero_point)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
}

impl QuantParams {
    pub fn new(scale: f64, zero_point: i32) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Model(format!("scale must be positive, got {scale}")));
        }
        if !(-128..=127).contains(&zero_point) {
            return Err(Error::Model(format!("zero point {zero_point} outside int8")));
        }
        Ok(Self { scale, zero_point })
    }

    /// `clamp(round(x / scale) + zero_point)`, rounding half away from zero.
    pub fn quantize(&self, x: f64) -> i8 {
        let q = (x / self.scale).round() + self.zero_point as f64;
        q.clamp(-128.0, 127.0) as i8
    }

    pub fn dequantize(&self, q: i8) -> f64 {
        self.scale * (q as i32 - self.zero_point) as f64
    }
}

/// `round(p / 2^shift)` with ties away from zero.
pub fn round_half_away_shift(p: i64, shift: u32) -> i64 {
    if shift == 0 {
        return p;
    }
    let half = 1i64 << (shift - 1);
    let mag = (p.unsigned_abs() + half as u64) >> shift;
    if p < 0 {
        -(mag as i64)
    } else {
        mag as i64
    }
}

/// Fixed-point form `multiplier / 2^shift` of a positive real rescale factor,
/// with `multiplier` normalized into `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requant {
    pub multiplier: i32,
    pub shift: u32,
}

impl Requant {
    pub const MAX_SHIFT: u32 = 62;

    pub fn from_real(m: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Model(format!("requantization factor must be positive, got {m}")));
        }
        let mut exp = m.log2().floor() as i64;
        // log2 can be off by one ulp near powers of two
        while m * 2f64.powi((30 - exp) as i32) >= 2f64.powi(31) {
            exp += 1;
        }
        while m * 2f64.powi((30 - exp) as i32) < 2f64.powi(30) {
            exp -= 1;
        }
        let mut shift = 30 - exp;
        let mut mult = (m * 2f64.powi(shift as i32)).round() as i64;
        if mult == 1 << 31 {
            mult = 1 << 30;
            shift -= 1;
        }
        if !(0..=Self::MAX_SHIFT as i64).contains(&shift) {
            return Err(Error::Model(format!("requantization factor {m} out of representable range")));
        }
        Ok(Self {
            multiplier: mult as i32,
            shift: shift as u32,
        })
    }

    pub fn to_real(&self) -> f64 {
        self.multiplier as f64 / 2f64.powi(self.shift as i32)
    }

    /// `sat8(round((acc * multiplier) / 2^shift) + zero_point)`.
    pub fn apply(&self, acc: i32, zero_point: i32) -> i8 {
        let scaled = round_half_away_shift(acc as i64 * self.multiplier as i64, self.shift);
        (scaled + zero_point as i64).clamp(-128, 127) as i8
    }
}

/// Int8 tensor in `(channels, length)` layout, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    pub channels: usize,
    pub length: usize,
    pub data: Vec<i8>,
    pub qparams: QuantParams,
}

impl QTensor {
    pub fn new(channels: usize, length: usize, data: Vec<i8>, qparams: QuantParams) -> Result<Self> {
        if data.len() != channels * length {
            return Err(Error::Shape(format!(
                "{} values for a {channels}x{length} tensor",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            length,
            data,
            qparams,
        })
    }

    pub fn at(&self, c: usize, t: usize) -> i8 {
        self.data[c * self.length + t]
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.data.iter().map(|&q| self.qparams.dequantize(q)).collect()
    }
}
