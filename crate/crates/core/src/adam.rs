//! Adaptive runtime manager: picks the operating mode and clock frequency and
//! rewires the process network.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::power::NodeConfig;
use crate::procnet::{OperatingMode, ProcessNetwork, TaskId};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub period_s: f64,
    pub util_max: f64,
    pub freq_set_hz: Vec<f64>,
    pub raw_mode_pin_hz: f64,
    /// Heart-rate estimate used before any beat has been observed.
    pub initial_bpm: f64,
    /// Number of RR intervals the moving average spans.
    pub rr_window: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            period_s: 1.0,
            util_max: 0.40,
            freq_set_hz: vec![2e6, 4e6, 8e6],
            raw_mode_pin_hz: 8e6,
            initial_bpm: 60.0,
            rr_window: 4,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self, node: &NodeConfig) -> Result<()> {
        if !(self.util_max > 0.0 && self.util_max < 1.0) {
            return Err(Error::Config(format!("util_max must be in (0, 1), got {}", self.util_max)));
        }
        if !(self.period_s > 0.0) || !self.period_s.is_finite() {
            return Err(Error::Config(format!("period_s must be positive, got {}", self.period_s)));
        }
        if self.freq_set_hz.is_empty() {
            return Err(Error::Config("freq_set_hz is empty".into()));
        }
        if !(self.initial_bpm >= 0.0) || self.rr_window == 0 {
            return Err(Error::Config("initial_bpm must be >= 0 and rr_window >= 1".into()));
        }
        for &f in self.freq_set_hz.iter().chain([&self.raw_mode_pin_hz]) {
            node.idle_power_w(f)?;
        }
        Ok(())
    }

    fn sorted_freqs(&self) -> Vec<f64> {
        let mut f = self.freq_set_hz.clone();
        f.sort_by(f64::total_cmp);
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum GatewayCommand {
    SetMode { mode: OperatingMode },
    SetBand { low_bpm: f64, high_bpm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamInputs {
    pub pending_command: Option<GatewayCommand>,
    pub observed_bpm: f64,
    /// Fraction of charge left. Logged only; no policy reacts to it.
    pub battery_level: f64,
    pub current_mode: OperatingMode,
    pub current_freq_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamDecision {
    pub mode: OperatingMode,
    pub freq_hz: f64,
    pub sleep_enabled: bool,
    pub rerouted_edges: BTreeSet<(TaskId, TaskId)>,
    /// No frequency met the utilization ceiling; the maximum was chosen.
    pub overload: bool,
}

/// Cycles spent per sample and per beat by a mode. The send task is left out
/// of the beat term: the threshold task suppresses it in steady state.
pub fn workload_cycles(mode: OperatingMode, cfg: &NodeConfig) -> Result<(f64, f64)> {
    let c = &cfg.cycles;
    Ok(match mode {
        OperatingMode::RawData => (c.get_data as f64 + c.send as f64 * cfg.alpha(), 0.0),
        OperatingMode::PeakDetection => ((c.get_data + c.peak) as f64, c.threshold as f64),
        OperatingMode::CnnProcessing => (
            (c.get_data + c.peak) as f64,
            (cfg.cnn_cost()?.cycles + c.threshold) as f64,
        ),
    })
}

/// Fraction of the core busy at `freq_hz` for the given mode and heart rate.
pub fn estimate_utilization(mode: OperatingMode, bpm: f64, cfg: &NodeConfig, freq_hz: f64) -> Result<f64> {
    if !(bpm >= 0.0) {
        return Err(Error::InvalidArgument(format!("bpm must be non-negative, got {bpm}")));
    }
    if !(freq_hz > 0.0) {
        return Err(Error::UnknownFrequency(freq_hz));
    }
    let (per_sample, per_beat) = workload_cycles(mode, cfg)?;
    Ok((per_sample * cfg.sample_rate_hz + per_beat * bpm / 60.0) / freq_hz)
}

pub fn decide(inputs: &AdamInputs, cfg: &AdamConfig, node: &NodeConfig) -> Result<AdamDecision> {
    if !(inputs.observed_bpm >= 0.0) {
        return Err(Error::InvalidArgument(format!("observed bpm {} is negative", inputs.observed_bpm)));
    }
    let mode = match inputs.pending_command {
        Some(GatewayCommand::SetMode { mode }) => mode,
        _ => inputs.current_mode,
    };
    let (freq_hz, overload) = if mode == OperatingMode::RawData {
        (cfg.raw_mode_pin_hz, false)
    } else {
        let freqs = cfg.sorted_freqs();
        let mut chosen = None;
        for &f in &freqs {
            if estimate_utilization(mode, inputs.observed_bpm, node, f)? <= cfg.util_max {
                chosen = Some(f);
                break;
            }
        }
        match chosen {
            Some(f) => (f, false),
            None => (*freqs.last().ok_or_else(|| Error::Config("freq_set_hz is empty".into()))?, true),
        }
    };
    Ok(AdamDecision {
        mode,
        freq_hz,
        sleep_enabled: true,
        rerouted_edges: mode.edges(),
        overload,
    })
}

/// Reconfigures `network` to the decided mode. Fails without touching the
/// network if an edge that would disappear still holds messages.
/// Returns whether anything changed.
pub fn apply(decision: &AdamDecision, network: &mut ProcessNetwork) -> Result<bool> {
    network.reconfigure(decision.mode)
}

/// Exponential moving average of RR intervals, reported as beats per minute.
#[derive(Debug, Clone, PartialEq)]
pub struct BpmEstimator {
    alpha: f64,
    rr_s: Option<f64>,
    initial_bpm: f64,
}

impl BpmEstimator {
    pub fn new(window: usize, initial_bpm: f64) -> Self {
        Self {
            alpha: 2.0 / (window as f64 + 1.0),
            rr_s: None,
            initial_bpm,
        }
    }

    pub fn update(&mut self, rr_s: f64) {
        if !(rr_s > 0.0) {
            return;
        }
        self.rr_s = Some(match self.rr_s {
            None => rr_s,
            Some(prev) => prev + self.alpha * (rr_s - prev),
        });
    }

    pub fn bpm(&self) -> f64 {
        self.rr_s.map_or(self.initial_bpm, |rr| 60.0 / rr)
    }
}

/// Parses a command script: one `t_seconds set_mode <raw|peak|cnn>` or
/// `t_seconds set_band <low> <high>` per line, `#` comments. The result is
/// sorted by time, keeping file order for equal times.
pub fn parse_script(text: &str, origin: &Path) -> Result<Vec<(f64, GatewayCommand)>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let t: f64 = toks[0]
            .parse()
            .map_err(|_| err(n, format!("bad time {:?}", toks[0])))?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(err(n, format!("time must be non-negative, got {t}")));
        }
        let cmd = match (toks.get(1).copied(), toks.len()) {
            (Some("set_mode"), 3) => GatewayCommand::SetMode {
                mode: toks[2].parse().map_err(|e: Error| err(n, e.to_string()))?,
            },
            (Some("set_band"), 4) => {
                let num = |s: &str| s.parse::<f64>().map_err(|_| err(n, format!("bad bpm {s:?}")));
                let (low_bpm, high_bpm) = (num(toks[2])?, num(toks[3])?);
                if !(low_bpm < high_bpm) {
                    return Err(err(n, format!("band low {low_bpm} must be below high {high_bpm}")));
                }
                GatewayCommand::SetBand { low_bpm, high_bpm }
            }
            _ => return Err(err(n, format!("unrecognized command {line:?}"))),
        };
        out.push((t, cmd));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

pub fn load_script(path: impl AsRef<Path>) -> Result<Vec<(f64, GatewayCommand)>> {
    let path = path.as_ref();
    parse_script(&std::fs::read_to_string(path)?, path)
}
