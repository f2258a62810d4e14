//! Platform constants, closed-form per-mode power, battery life and the
//! simulation energy ledger.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::procnet::{EventKind, OperatingMode, SimLog, TaskId};
use crate::{Error, Result};

/// Per-activation task energies in joules. `get_data_peak` is the combined
/// cost of acquiring and peak-processing one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskEnergy {
    pub get_data: f64,
    pub get_data_peak: f64,
    pub threshold: f64,
    pub send: f64,
}

impl Default for TaskEnergy {
    fn default() -> Self {
        Self {
            get_data: 2.96e-6,
            get_data_peak: 3.76e-6,
            threshold: 2.73e-6,
            send: 83.96e-6,
        }
    }
}

/// Cycles per activation. `peak` excludes the acquisition cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskCycles {
    pub get_data: u64,
    pub peak: u64,
    pub threshold: u64,
    pub send: u64,
}

impl Default for TaskCycles {
    fn default() -> Self {
        Self {
            get_data: 841,
            peak: 1550,
            threshold: 910,
            send: 25_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnCost {
    /// Topology name, e.g. `4_4_100`.
    pub name: String,
    pub energy_j: f64,
    pub cycles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdlePoint {
    pub freq_hz: f64,
    pub power_w: f64,
}

/// Hardware constants of the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    pub sample_rate_hz: f64,
    /// Samples per raw-data packet (the reciprocal of alpha).
    pub samples_per_packet: usize,
    pub sensor_power_w: f64,
    /// Active CNN model, looked up in `cnn_models`.
    pub cnn_model: String,
    pub energy_j: TaskEnergy,
    pub cycles: TaskCycles,
    pub cnn_models: Vec<CnnCost>,
    pub idle_power: Vec<IdlePoint>,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 330.0,
            samples_per_packet: 8,
            sensor_power_w: 237e-6,
            cnn_model: "4_4_100".into(),
            energy_j: TaskEnergy::default(),
            cycles: TaskCycles::default(),
            cnn_models: vec![
                CnnCost {
                    name: "4_4_100".into(),
                    energy_j: 148.78e-6,
                    cycles: 361_360,
                },
                CnnCost {
                    name: "20_20_100".into(),
                    energy_j: 660.37e-6,
                    cycles: 1_719_582,
                },
            ],
            idle_power: vec![
                IdlePoint {
                    freq_hz: 2e6,
                    power_w: 2.609e-3,
                },
                IdlePoint {
                    freq_hz: 4e6,
                    power_w: 3.101e-3,
                },
                IdlePoint {
                    freq_hz: 8e6,
                    power_w: 4.546e-3,
                },
            ],
        }
    }
}

fn same_freq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

impl NodeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: NodeConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("node config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.sample_rate_hz) {
            return bad(format!("sample_rate_hz must be positive, got {}", self.sample_rate_hz));
        }
        if self.samples_per_packet == 0 {
            return bad("samples_per_packet must be at least 1".into());
        }
        let e = &self.energy_j;
        for (name, v) in [
            ("sensor_power_w", self.sensor_power_w),
            ("energy_j.get_data", e.get_data),
            ("energy_j.get_data_peak", e.get_data_peak),
            ("energy_j.threshold", e.threshold),
            ("energy_j.send", e.send),
        ] {
            if !positive(v) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if e.get_data_peak < e.get_data {
            return bad("energy_j.get_data_peak must not be below energy_j.get_data".into());
        }
        let c = &self.cycles;
        if [c.get_data, c.peak, c.threshold, c.send].contains(&0) {
            return bad("task cycles must be positive".into());
        }
        for m in &self.cnn_models {
            if !positive(m.energy_j) || m.cycles == 0 {
                return bad(format!("cnn model {} needs positive energy and cycles", m.name));
            }
        }
        if self.idle_power.is_empty() {
            return bad("idle_power table is empty".into());
        }
        for p in &self.idle_power {
            if !positive(p.freq_hz) || !positive(p.power_w) {
                return bad(format!("idle power entry {p:?} must be positive"));
            }
        }
        self.cnn_cost()?;
        Ok(())
    }

    /// `1 / samples_per_packet`.
    pub fn alpha(&self) -> f64 {
        1.0 / self.samples_per_packet as f64
    }

    /// Frequencies with an idle-power entry, ascending.
    pub fn freq_set(&self) -> Vec<f64> {
        let mut f: Vec<f64> = self.idle_power.iter().map(|p| p.freq_hz).collect();
        f.sort_by(f64::total_cmp);
        f
    }

    pub fn idle_power_w(&self, freq_hz: f64) -> Result<f64> {
        self.idle_power
            .iter()
            .find(|p| same_freq(p.freq_hz, freq_hz))
            .map(|p| p.power_w)
            .ok_or(Error::UnknownFrequency(freq_hz))
    }

    pub fn cnn_cost(&self) -> Result<&CnnCost> {
        self.cnn_cost_of(&self.cnn_model)
    }

    pub fn cnn_cost_of(&self, name: &str) -> Result<&CnnCost> {
        self.cnn_models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::UnknownCnnModel(name.to_string()))
    }

    pub fn task_cycles(&self, task: TaskId) -> Result<u64> {
        Ok(match task {
            TaskId::GetData => self.cycles.get_data,
            TaskId::Peak => self.cycles.peak,
            TaskId::Cnn => self.cnn_cost()?.cycles,
            TaskId::Threshold => self.cycles.threshold,
            TaskId::Send => self.cycles.send,
        })
    }

    /// Energy of one activation. The peak task is charged the increment of
    /// `get_data_peak` over `get_data`.
    pub fn task_energy_j(&self, task: TaskId) -> Result<f64> {
        let e = &self.energy_j;
        Ok(match task {
            TaskId::GetData => e.get_data,
            TaskId::Peak => e.get_data_peak - e.get_data,
            TaskId::Cnn => self.cnn_cost()?.energy_j,
            TaskId::Threshold => e.threshold,
            TaskId::Send => e.send,
        })
    }
}

/// Closed-form average power of a mode.
///
/// `peak_send_rate_hz` is the packet rate of the peak mode; it is ignored by
/// the other modes. The CNN mode transmits once per beat.
pub fn mode_power(mode: OperatingMode, bpm: f64, peak_send_rate_hz: f64, cfg: &NodeConfig, freq_hz: f64) -> Result<f64> {
    if !(bpm >= 0.0) || !(peak_send_rate_hz >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bpm and send rate must be non-negative, got {bpm} and {peak_send_rate_hz}"
        )));
    }
    let e = &cfg.energy_j;
    let fs = cfg.sample_rate_hz;
    let base = cfg.idle_power_w(freq_hz)? + cfg.sensor_power_w;
    let dynamic = match mode {
        OperatingMode::RawData => (e.get_data + cfg.alpha() * e.send) * fs,
        OperatingMode::PeakDetection => e.get_data_peak * fs + (e.threshold + e.send) * peak_send_rate_hz,
        OperatingMode::CnnProcessing => {
            e.get_data_peak * fs + (cfg.cnn_cost()?.energy_j + e.threshold + e.send) * bpm / 60.0
        }
    };
    Ok(dynamic + base)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Battery {
    pub capacity_mah: f64,
    pub voltage_v: f64,
}

impl Default for Battery {
    fn default() -> Self {
        Self {
            capacity_mah: 600.0,
            voltage_v: 3.7,
        }
    }
}

impl Battery {
    pub fn new(capacity_mah: f64, voltage_v: f64) -> Result<Self> {
        if !(capacity_mah > 0.0) || !(voltage_v > 0.0) {
            return Err(Error::InvalidArgument("battery capacity and voltage must be positive".into()));
        }
        Ok(Self { capacity_mah, voltage_v })
    }

    pub fn energy_j(&self) -> f64 {
        self.capacity_mah / 1000.0 * 3600.0 * self.voltage_v
    }
}

pub fn battery_life_days(power_w: f64, battery: &Battery) -> Result<f64> {
    if !(power_w > 0.0) {
        return Err(Error::InvalidArgument(format!("power must be positive, got {power_w}")));
    }
    Ok(battery.energy_j() / power_w / 86_400.0)
}

/// Wall time of one activation of `task` at `freq_hz`.
pub fn exec_time(task: TaskId, freq_hz: f64, cfg: &NodeConfig) -> Result<f64> {
    if !(freq_hz > 0.0) {
        return Err(Error::UnknownFrequency(freq_hz));
    }
    Ok(cfg.task_cycles(task)? as f64 / freq_hz)
}

/// Energy broken down by component over a simulated interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLedger {
    /// Indexed by [`TaskId::index`].
    pub task_j: [f64; 5],
    pub task_activations: [u64; 5],
    pub idle_j: f64,
    pub sensor_j: f64,
    pub duration_s: f64,
    /// Time spent in each mode, indexed by [`OperatingMode::index`].
    pub mode_time_s: [f64; 3],
    /// `(freq_hz, seconds)` in ascending frequency.
    pub freq_time_s: Vec<(f64, f64)>,
}

impl EnergyLedger {
    pub fn total_j(&self) -> f64 {
        self.task_j.iter().sum::<f64>() + self.idle_j + self.sensor_j
    }

    pub fn average_power_w(&self) -> Option<f64> {
        (self.duration_s > 0.0).then(|| self.total_j() / self.duration_s)
    }

    pub fn components(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = TaskId::ALL
            .iter()
            .map(|t| (t.name().to_string(), self.task_j[t.index()]))
            .collect();
        out.push(("idle".into(), self.idle_j));
        out.push(("sensor".into(), self.sensor_j));
        out
    }

    /// CSV `component,joules,share` with a final `total` row.
    pub fn to_csv(&self) -> String {
        let total = self.total_j();
        let mut out = String::from("component,joules,share\n");
        for (name, j) in self.components() {
            let share = if total > 0.0 { j / total } else { 0.0 };
            let _ = writeln!(out, "{name},{j:.9e},{share:.6}");
        }
        let _ = writeln!(out, "total,{total:.9e},{:.6}", if total > 0.0 { 1.0 } else { 0.0 });
        out
    }
}

/// Accounts a simulation log: each completed activation is charged its task
/// energy, the platform draws idle power at the current clock over the whole
/// run, and the sensor draws constant power.
pub fn ledger_from_sim(log: &SimLog, cfg: &NodeConfig) -> Result<EnergyLedger> {
    let mut ledger = EnergyLedger {
        task_j: [0.0; 5],
        task_activations: [0; 5],
        idle_j: 0.0,
        sensor_j: 0.0,
        duration_s: log.duration_s(),
        mode_time_s: [0.0; 3],
        freq_time_s: cfg.freq_set().into_iter().map(|f| (f, 0.0)).collect(),
    };
    let mut freq = log.initial_freq_hz;
    let mut mode = log.initial_mode;
    let mut last = 0u64;
    let mut close_segment = |ledger: &mut EnergyLedger, until: u64, freq: f64, mode: OperatingMode| -> Result<()> {
        let dt = crate::procnet::ps_to_s(until.saturating_sub(last));
        last = until.max(last);
        ledger.idle_j += cfg.idle_power_w(freq)? * dt;
        ledger.mode_time_s[mode.index()] += dt;
        if let Some(slot) = ledger.freq_time_s.iter_mut().find(|(f, _)| same_freq(*f, freq)) {
            slot.1 += dt;
        }
        Ok(())
    };
    for ev in &log.events {
        match ev.kind {
            EventKind::TaskEnd { task } => {
                ledger.task_j[task.index()] += cfg.task_energy_j(task)?;
                ledger.task_activations[task.index()] += 1;
            }
            EventKind::FreqChange { to_hz, .. } => {
                close_segment(&mut ledger, ev.t, freq, mode)?;
                freq = to_hz;
            }
            EventKind::ModeChange { to, .. } => {
                close_segment(&mut ledger, ev.t, freq, mode)?;
                mode = to;
            }
            _ => {}
        }
    }
    close_segment(&mut ledger, log.end, freq, mode)?;
    ledger.sensor_j = cfg.sensor_power_w * ledger.duration_s;
    Ok(ledger)
}
