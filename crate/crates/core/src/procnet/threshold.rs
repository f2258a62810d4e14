use serde::{Deserialize, Serialize};

use super::packet::{saturate_bpm, Packet};
use super::OperatingMode;
use crate::{Error, Result};

/// When the threshold task lets a packet through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdPolicy {
    pub low_bpm: f64,
    pub high_bpm: f64,
    /// Class indices that count as anomalies.
    pub anomalous: Vec<usize>,
    pub always_send: bool,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            low_bpm: 50.0,
            high_bpm: 120.0,
            anomalous: vec![1, 2, 3, 4],
            always_send: false,
        }
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.low_bpm < self.high_bpm) {
            return Err(Error::Config(format!(
                "threshold band low {} must be below high {}",
                self.low_bpm, self.high_bpm
            )));
        }
        if let Some(c) = self.anomalous.iter().find(|&&c| c >= 5) {
            return Err(Error::Config(format!("anomalous class index {c} out of range")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdInput {
    Peak { bpm: Option<f64>, timestamp_ms: u32 },
    Classified { bpm: Option<f64>, class: usize, timestamp_ms: u32 },
}

/// The outbound packet, if any, and whether its bpm saturated.
///
/// A beat without a rate estimate is never out of band.
pub fn threshold_task(mode: OperatingMode, input: ThresholdInput, policy: &ThresholdPolicy) -> Option<(Packet, bool)> {
    match (mode, input) {
        (OperatingMode::PeakDetection, ThresholdInput::Peak { bpm, timestamp_ms }) => {
            let out_of_band = bpm.is_some_and(|b| b < policy.low_bpm || b > policy.high_bpm);
            (policy.always_send || out_of_band).then(|| {
                let (bpm, sat) = saturate_bpm(bpm);
                (Packet::Peak { bpm, timestamp_ms }, sat)
            })
        }
        (
            OperatingMode::CnnProcessing,
            ThresholdInput::Classified {
                bpm,
                class,
                timestamp_ms,
            },
        ) => (policy.always_send || policy.anomalous.contains(&class)).then(|| {
            let (bpm, sat) = saturate_bpm(bpm);
            (
                Packet::Cnn {
                    bpm,
                    label: class as u8,
                    timestamp_ms,
                },
                sat,
            )
        }),
        _ => None,
    }
}
