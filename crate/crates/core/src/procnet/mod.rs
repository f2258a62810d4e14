//! Task graph with bounded FIFOs, the three operating-mode topologies and a
//! deterministic discrete-event engine.

mod engine;
mod log;
mod network;
mod packet;
mod threshold;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

pub use engine::{simulate, SimConfig, SimReport, Simulator};
pub use log::{EventKind, SimEvent, SimLog};
pub use network::{build_network, Envelope, Fifo, Message, ProcessNetwork, TaskSpec};
pub use packet::{
    decode_packet, encode_packet, format_packet_index, read_packet_log, saturate_bpm, timestamp_ms, write_packet_log,
    Packet, PacketRecord,
};
pub use threshold::{threshold_task, ThresholdInput, ThresholdPolicy};

/// Simulated time in picoseconds.
pub type SimTime = u64;

pub const PS_PER_S: u64 = 1_000_000_000_000;

pub fn s_to_ps(s: f64) -> SimTime {
    (s * PS_PER_S as f64).round().max(0.0) as SimTime
}

pub fn ps_to_s(t: SimTime) -> f64 {
    t as f64 / PS_PER_S as f64
}

/// Exact decimal seconds, twelve fractional digits.
pub fn format_ps(t: SimTime) -> String {
    format!("{}.{:012}", t / PS_PER_S, t % PS_PER_S)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    GetData,
    Peak,
    Cnn,
    Threshold,
    Send,
}

impl TaskId {
    /// In priority order, highest first.
    pub const ALL: [TaskId; 5] = [TaskId::GetData, TaskId::Peak, TaskId::Cnn, TaskId::Threshold, TaskId::Send];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::GetData => "get_data",
            TaskId::Peak => "peak",
            TaskId::Cnn => "cnn",
            TaskId::Threshold => "threshold",
            TaskId::Send => "send",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperatingMode {
    #[serde(rename = "raw")]
    RawData,
    #[serde(rename = "peak")]
    PeakDetection,
    #[serde(rename = "cnn")]
    CnnProcessing,
}

impl OperatingMode {
    pub const ALL: [OperatingMode; 3] = [
        OperatingMode::RawData,
        OperatingMode::PeakDetection,
        OperatingMode::CnnProcessing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatingMode::RawData => "raw",
            OperatingMode::PeakDetection => "peak",
            OperatingMode::CnnProcessing => "cnn",
        }
    }

    /// The task chain of the mode, source first.
    pub fn chain(self) -> &'static [TaskId] {
        use TaskId::*;
        match self {
            OperatingMode::RawData => &[GetData, Send],
            OperatingMode::PeakDetection => &[GetData, Peak, Threshold, Send],
            OperatingMode::CnnProcessing => &[GetData, Peak, Cnn, Threshold, Send],
        }
    }

    pub fn tasks(self) -> BTreeSet<TaskId> {
        self.chain().iter().copied().collect()
    }

    pub fn edges(self) -> BTreeSet<(TaskId, TaskId)> {
        self.chain().windows(2).map(|w| (w[0], w[1])).collect()
    }
}

impl fmt::Display for OperatingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "raw" | "raw_data" | "rawdata" => Ok(OperatingMode::RawData),
            "peak" | "peak_detection" | "peakdetection" => Ok(OperatingMode::PeakDetection),
            "cnn" | "cnn_processing" | "cnnprocessing" => Ok(OperatingMode::CnnProcessing),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?} (expected raw, peak or cnn)"))),
        }
    }
}
