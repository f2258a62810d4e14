//! Simulation helpers shared by the process-network tests.

use ecgnode::adam::{self, AdamInputs, GatewayCommand};
use ecgnode::power::{ledger_from_sim, mode_power};
use ecgnode::procnet::{simulate, EventKind, OperatingMode, Packet, SimConfig, SimReport, Simulator, TaskId};
use ecgnode::qcnn::{BeatClassifier, QModel};
use ecgnode::trace_io::EcgTrace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MODES: [OperatingMode; 3] = [
    OperatingMode::RawData,
    OperatingMode::PeakDetection,
    OperatingMode::CnnProcessing,
];

pub fn checked(mode: OperatingMode) -> SimConfig {
    SimConfig {
        initial_mode: mode,
        check_invariants: true,
        ..Default::default()
    }
}

pub fn random_script(rng: &mut ChaCha8Rng, horizon: f64) -> Vec<(f64, GatewayCommand)> {
    let mut script: Vec<(f64, GatewayCommand)> = (0..rng.random_range(0..5))
        .map(|_| {
            let t = rng.random_range(0.0..horizon);
            let cmd = if rng.random_bool(0.75) {
                GatewayCommand::SetMode {
                    mode: MODES[rng.random_range(0..3)],
                }
            } else {
                let lo = rng.random_range(30.0..90.0);
                GatewayCommand::SetBand {
                    low_bpm: lo,
                    high_bpm: lo + rng.random_range(10.0..80.0),
                }
            };
            (t, cmd)
        })
        .collect();
    script.sort_by(|a, b| a.0.total_cmp(&b.0));
    script
}

pub fn raw_samples(report: &SimReport) -> usize {
    report
        .packets
        .iter()
        .map(|p| match &p.packet {
            Packet::Raw { samples, .. } => samples.len(),
            _ => 0,
        })
        .sum()
}

/// Samples still inside the node plus those the peak task has read.
pub fn samples_held(sim: &Simulator<'_>) -> usize {
    let peak_reads = sim
        .log()
        .events
        .iter()
        .filter(|e| e.kind == EventKind::TaskStart { task: TaskId::Peak })
        .count();
    let net = sim.network();
    let queued = net.fifo(TaskId::GetData, TaskId::Peak).map_or(0, |f| f.len())
        + net.fifo(TaskId::GetData, TaskId::Send).map_or(0, |f| f.len() * 8);
    peak_reads + queued + sim.adc_len() + sim.raw_pending()
}

/// Runs to the horizon and returns the report with the number of samples
/// accounted for: shipped raw, read by the peak task, or still queued.
pub fn run_checked(
    cfg: SimConfig,
    t: &EcgTrace,
    model: &QModel,
    script: &[(f64, GatewayCommand)],
    horizon: f64,
) -> (SimReport, usize) {
    let mut sim = Simulator::new(cfg, t, Some(model as &dyn BeatClassifier), script).unwrap();
    sim.step(horizon).unwrap();
    sim.finish().unwrap();
    let held = samples_held(&sim);
    let report = sim.into_report();
    let accounted = held + raw_samples(&report);
    (report, accounted)
}

fn ensure(ok: bool, seed: u64, what: impl std::fmt::Display) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(format!("seed {seed}: {what}"))
    }
}

/// One randomized run: random rate, noise, initial mode and command script.
/// Checks the core timeline, sample conservation, packet/mode consistency,
/// the frequency set, and that a second run yields a byte-identical log.
/// FIFO conservation and topology are checked by the engine after every
/// event.
pub fn check_seed(seed: u64, model: &QModel) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bpm = rng.random_range(40.0..180.0);
    let horizon = 8.0;
    let t = super::trace(bpm, horizon, rng.random_range(0.0..40.0), seed);
    let script = random_script(&mut rng, horizon);
    let mode = MODES[rng.random_range(0..3)];
    let (report, accounted) = run_checked(checked(mode), &t, model, &script, horizon);
    let log = &report.log;

    let (busy, asleep) = log.core_timeline().map_err(|e| format!("seed {seed}: {e}"))?;
    ensure(busy + asleep == log.end, seed, "busy + asleep != duration")?;
    ensure(log.count("sample_drop") == 0, seed, "samples dropped")?;
    ensure(accounted == log.count("sample_in"), seed, "samples lost")?;
    ensure(log.count("task_start") == log.count("task_end"), seed, "unfinished task")?;
    ensure(log.count("packet_out") == report.packets.len(), seed, "packet count")?;

    // a packet was produced in a mode the network has been in; messages on
    // surviving edges may drain after a switch
    let mut current = log.initial_mode;
    let mut visited = vec![current];
    let mut sent = report.packets.iter();
    for e in &log.events {
        match e.kind {
            EventKind::ModeChange { from, to } => {
                ensure(from == current, seed, "mode change from a stale mode")?;
                current = to;
                visited.push(to);
            }
            EventKind::PacketOut { mode, .. } => {
                let p = sent.next().ok_or(format!("seed {seed}: packet_out without record"))?;
                ensure(p.t == e.t && p.packet.mode() == mode, seed, "packet record mismatch")?;
                ensure(visited.contains(&mode), seed, format!("{mode} packet never produced"))?;
            }
            EventKind::FreqChange { to_hz, .. } => {
                ensure([2e6, 4e6, 8e6].contains(&to_hz), seed, format!("frequency {to_hz}"))?;
            }
            _ => {}
        }
    }
    if report.final_mode == OperatingMode::RawData {
        ensure(report.final_freq_hz == 8e6, seed, "raw mode not pinned to 8 MHz")?;
    }

    let again = simulate(&checked(mode), &t, Some(model as &dyn BeatClassifier), &script, Some(horizon))
        .map_err(|e| format!("seed {seed}: {e}"))?;
    ensure(again.log.to_csv() == log.to_csv(), seed, "log differs between runs")?;
    ensure(again.packets == report.packets, seed, "packets differ between runs")
}

#[derive(Debug, Clone, Copy)]
pub struct PowerCase {
    pub freq_hz: f64,
    pub sim_w: f64,
    pub formula_w: f64,
}

impl PowerCase {
    pub fn rel_err(&self) -> f64 {
        (self.sim_w - self.formula_w).abs() / self.formula_w
    }
}

/// 60 s stationary run against the closed form. Every beat is transmitted
/// so both count the same sends; the rate estimate starts at the true rate
/// so the clock never changes.
pub fn power_case(mode: OperatingMode, bpm: f64, model: &QModel) -> Result<PowerCase, String> {
    let mut cfg = SimConfig {
        initial_mode: mode,
        ..Default::default()
    };
    cfg.policy.always_send = true;
    cfg.adam.initial_bpm = bpm;
    let t = super::trace(bpm, 60.0, 10.0, bpm as u64);
    let r = simulate(&cfg, &t, Some(model as &dyn BeatClassifier), &[], None).map_err(|e| e.to_string())?;
    let inputs = AdamInputs {
        pending_command: None,
        observed_bpm: bpm,
        battery_level: 1.0,
        current_mode: mode,
        current_freq_hz: 8e6,
    };
    let freq_hz = adam::decide(&inputs, &cfg.adam, &cfg.node).map_err(|e| e.to_string())?.freq_hz;
    if r.log.count("freq_change") != 0 || r.final_freq_hz != freq_hz {
        return Err(format!("{mode} {bpm}: clock moved during a stationary run"));
    }
    let sim_w = ledger_from_sim(&r.log, &cfg.node)
        .map_err(|e| e.to_string())?
        .average_power_w()
        .ok_or("empty run")?;
    let formula_w = mode_power(mode, bpm, bpm / 60.0, &cfg.node, freq_hz).map_err(|e| e.to_string())?;
    Ok(PowerCase {
        freq_hz,
        sim_w,
        formula_w,
    })
}
