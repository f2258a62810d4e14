use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::log::{EventKind, SimEvent, SimLog};
use super::network::{build_network, Message, ProcessNetwork};
use super::packet::{encode_packet, timestamp_ms, Packet, PacketRecord};
use super::threshold::{threshold_task, ThresholdInput, ThresholdPolicy};
use super::{s_to_ps, OperatingMode, SimTime, TaskId, PS_PER_S};
use crate::adam::{self, AdamConfig, AdamDecision, AdamInputs, BpmEstimator, GatewayCommand};
use crate::dsp::{DetectorConfig, PeakDetector, PeakEvent, ThresholdRule};
use crate::power::NodeConfig;
use crate::qcnn::BeatClassifier;
use crate::trace_io::EcgTrace;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub node: NodeConfig,
    pub adam: AdamConfig,
    pub detector: DetectorConfig,
    pub policy: ThresholdPolicy,
    pub initial_mode: OperatingMode,
    /// Messages per FIFO edge.
    pub fifo_capacity: usize,
    /// Samples the ADC can hold before the acquisition task reads them.
    pub adc_buffer: usize,
    pub battery_level: f64,
    /// Verify FIFO conservation and topology after every event.
    pub check_invariants: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            node: NodeConfig::default(),
            adam: AdamConfig::default(),
            detector: DetectorConfig::default(),
            policy: ThresholdPolicy::default(),
            initial_mode: OperatingMode::CnnProcessing,
            fifo_capacity: 16,
            adc_buffer: 256,
            battery_level: 1.0,
            check_invariants: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.node.validate()?;
        self.adam.validate(&self.node)?;
        self.detector.validate()?;
        self.policy.validate()?;
        if self.fifo_capacity == 0 || self.adc_buffer == 0 {
            return Err(Error::Config("fifo_capacity and adc_buffer must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.battery_level) {
            return Err(Error::Config(format!("battery_level {} outside [0, 1]", self.battery_level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub log: SimLog,
    pub packets: Vec<PacketRecord>,
    /// Global sample indices of detected R peaks.
    pub detected_peaks: Vec<u64>,
    /// `(peak index, class index)` for every classified beat.
    pub classifications: Vec<(u64, usize)>,
    pub dropped_samples: u64,
    pub saturated_packets: u64,
    pub overload_decisions: u64,
    pub final_mode: OperatingMode,
    pub final_freq_hz: f64,
}

#[derive(Debug, Clone, Copy)]
struct PendingBeat {
    peak_index: u64,
    bpm: Option<f64>,
}

/// State of the peak task: detector, recent samples for framing, and beats
/// waiting for their frame to complete.
struct PeakStage {
    detector: PeakDetector,
    base: Option<u64>,
    last_index: u64,
    history: VecDeque<i16>,
    history_start: u64,
    history_cap: usize,
    outbox: VecDeque<PendingBeat>,
    scratch: Vec<PeakEvent>,
}

impl PeakStage {
    fn new(cfg: &DetectorConfig, frame_len: usize) -> Result<Self> {
        let learn = match cfg.threshold {
            ThresholdRule::Auto { learn_s, .. } => (learn_s * cfg.design_rate_hz).ceil() as usize,
            ThresholdRule::Fixed(_) => 0,
        };
        Ok(Self {
            detector: PeakDetector::new(*cfg)?,
            base: None,
            last_index: 0,
            history: VecDeque::new(),
            history_start: 0,
            history_cap: learn + 2 * frame_len + cfg.refractory_samples() + 1024,
            outbox: VecDeque::new(),
            scratch: Vec::new(),
        })
    }

    /// Feeds one sample; returns newly detected events.
    fn push(&mut self, index: u64, value: i16) -> Vec<PeakEvent> {
        let base = *self.base.get_or_insert(index);
        if self.history.is_empty() {
            self.history_start = index;
        }
        self.history.push_back(value);
        if self.history.len() > self.history_cap {
            self.history.pop_front();
            self.history_start += 1;
        }
        self.last_index = index;
        self.scratch.clear();
        self.detector.push(value, &mut self.scratch);
        let mut events = std::mem::take(&mut self.scratch);
        for e in &mut events {
            e.peak_index += base as usize;
        }
        events
    }

    fn frame(&self, center: u64, len: usize) -> Vec<i16> {
        let start = center as i64 - (len / 2) as i64;
        (0..len as i64)
            .map(|i| {
                let g = start + i;
                if g >= self.history_start as i64 && g <= self.last_index as i64 {
                    self.history[(g - self.history_start as i64) as usize]
                } else {
                    0
                }
            })
            .collect()
    }
}

#[derive(Debug)]
enum Work {
    Acquire { index: u64, t: SimTime, value: i16 },
    Detect { index: u64, value: i16 },
    Classify { peak_index: u64, t: SimTime, bpm: Option<f64>, class: usize },
    Gate(Option<(Packet, bool)>),
    Transmit(Packet),
}

#[derive(Debug)]
struct Running {
    task: TaskId,
    end: SimTime,
    work: Work,
}

/// Deterministic single-core execution of the process network over a trace.
pub struct Simulator<'a> {
    cfg: SimConfig,
    trace: &'a EcgTrace,
    classifier: Option<&'a dyn BeatClassifier>,
    script: Vec<(SimTime, GatewayCommand)>,
    next_cmd: usize,
    net: ProcessNetwork,
    freq_hz: f64,
    now: SimTime,
    next_sample: usize,
    next_tick: SimTime,
    tick_period: SimTime,
    adam_due: bool,
    pending_cmd: Option<GatewayCommand>,
    target: Option<AdamDecision>,
    running: Option<Running>,
    sleeping: bool,
    adc: VecDeque<(u64, SimTime, i16)>,
    raw_acc: Vec<i16>,
    raw_acc_t: SimTime,
    peak: Option<PeakStage>,
    frame_len: usize,
    bpm: BpmEstimator,
    log: SimLog,
    packets: Vec<PacketRecord>,
    detected_peaks: Vec<u64>,
    classifications: Vec<(u64, usize)>,
    dropped_samples: u64,
    saturated_packets: u64,
    overload_decisions: u64,
}

impl<'a> Simulator<'a> {
    /// `script` holds `(seconds, command)` pairs in time order.
    pub fn new(
        cfg: SimConfig,
        trace: &'a EcgTrace,
        classifier: Option<&'a dyn BeatClassifier>,
        script: &[(f64, GatewayCommand)],
    ) -> Result<Self> {
        cfg.validate()?;
        if (trace.sample_rate_hz - cfg.detector.design_rate_hz).abs() > 1e-9 {
            return Err(Error::SampleRateMismatch {
                expected: cfg.detector.design_rate_hz,
                actual: trace.sample_rate_hz,
            });
        }
        let needs_cnn = cfg.initial_mode == OperatingMode::CnnProcessing
            || script.iter().any(|(_, c)| {
                matches!(
                    c,
                    GatewayCommand::SetMode {
                        mode: OperatingMode::CnnProcessing
                    }
                )
            });
        if needs_cnn && classifier.is_none() {
            return Err(Error::Config("cnn mode requires a model".into()));
        }
        if script.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidArgument("command script is not sorted by time".into()));
        }
        let bpm = BpmEstimator::new(cfg.adam.rr_window, cfg.adam.initial_bpm);
        let initial = adam::decide(
            &AdamInputs {
                pending_command: None,
                observed_bpm: bpm.bpm(),
                battery_level: cfg.battery_level,
                current_mode: cfg.initial_mode,
                current_freq_hz: cfg.adam.raw_mode_pin_hz,
            },
            &cfg.adam,
            &cfg.node,
        )?;
        let net = build_network(cfg.initial_mode, &cfg.node, cfg.fifo_capacity)?;
        let frame_len = classifier.map_or(crate::qcnn::FRAME_LEN, |c| c.frame_len());
        let peak = if net.task(TaskId::Peak).enabled {
            Some(PeakStage::new(&cfg.detector, frame_len)?)
        } else {
            None
        };
        let tick_period = s_to_ps(cfg.adam.period_s).max(1);
        Ok(Self {
            script: script.iter().map(|&(t, c)| (s_to_ps(t), c)).collect(),
            next_cmd: 0,
            freq_hz: initial.freq_hz,
            now: 0,
            next_sample: 0,
            next_tick: tick_period,
            tick_period,
            adam_due: false,
            pending_cmd: None,
            target: None,
            running: None,
            sleeping: false,
            adc: VecDeque::with_capacity(cfg.adc_buffer),
            raw_acc: Vec::new(),
            raw_acc_t: 0,
            peak,
            frame_len,
            bpm,
            log: SimLog::empty(cfg.initial_mode, initial.freq_hz, 0),
            packets: Vec::new(),
            detected_peaks: Vec::new(),
            classifications: Vec::new(),
            dropped_samples: 0,
            saturated_packets: 0,
            overload_decisions: u64::from(initial.overload),
            net,
            cfg,
            trace,
            classifier,
        })
    }

    pub fn network(&self) -> &ProcessNetwork {
        &self.net
    }

    pub fn log(&self) -> &SimLog {
        &self.log
    }

    pub fn freq_hz(&self) -> f64 {
        self.freq_hz
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Samples waiting in the ADC buffer.
    pub fn adc_len(&self) -> usize {
        self.adc.len()
    }

    /// Samples collected for a raw packet that is not full yet.
    pub fn raw_pending(&self) -> usize {
        self.raw_acc.len()
    }

    fn sample_time(&self, i: u64) -> SimTime {
        let fs = self.trace.sample_rate_hz;
        if fs.fract() == 0.0 {
            let fs = fs as u128;
            ((i as u128 * PS_PER_S as u128 * 2 + fs) / (2 * fs)) as SimTime
        } else {
            (i as f64 * PS_PER_S as f64 / fs).round() as SimTime
        }
    }

    fn emit(&mut self, kind: EventKind) {
        self.log.events.push(SimEvent { t: self.now, kind });
    }

    fn next_event_time(&self, until: SimTime) -> Option<SimTime> {
        let mut best: Option<SimTime> = None;
        let mut consider = |t: SimTime| {
            if t <= until {
                best = Some(best.map_or(t, |b| b.min(t)));
            }
        };
        if let Some(r) = &self.running {
            consider(r.end);
        }
        if self.next_sample < self.trace.len() {
            consider(self.sample_time(self.next_sample as u64));
        }
        if let Some(&(t, _)) = self.script.get(self.next_cmd) {
            consider(t.max(self.now));
        }
        consider(self.next_tick);
        best
    }

    /// Runs every event up to and including `until_s` seconds. A task still
    /// executing at the horizon is carried over to the next call.
    pub fn step(&mut self, until_s: f64) -> Result<()> {
        let until = s_to_ps(until_s).max(self.now);
        while let Some(t) = self.next_event_time(until) {
            if t > self.now && self.running.is_none() && !self.sleeping {
                self.emit(EventKind::SleepEnter);
                self.sleeping = true;
            }
            self.now = t;
            if self.running.as_ref().is_some_and(|r| r.end == t) {
                self.finish_task()?;
            }
            while self.next_sample < self.trace.len() && self.sample_time(self.next_sample as u64) == t {
                self.arrive();
            }
            while self.script.get(self.next_cmd).is_some_and(|&(ct, _)| ct <= t) {
                let (_, cmd) = self.script[self.next_cmd];
                self.next_cmd += 1;
                match cmd {
                    GatewayCommand::SetBand { low_bpm, high_bpm } => {
                        self.cfg.policy.low_bpm = low_bpm;
                        self.cfg.policy.high_bpm = high_bpm;
                    }
                    GatewayCommand::SetMode { .. } => {
                        self.pending_cmd = Some(cmd);
                        self.adam_due = true;
                    }
                }
            }
            if self.next_tick == t {
                self.adam_due = true;
                self.next_tick += self.tick_period;
            }
            if self.running.is_none() {
                self.schedule()?;
            }
            if self.cfg.check_invariants {
                self.check_invariants()?;
            }
        }
        if self.running.is_none() && !self.sleeping {
            self.emit(EventKind::SleepEnter);
            self.sleeping = true;
        }
        self.now = until;
        self.log.end = self.log.end.max(until);
        Ok(())
    }

    /// Lets an in-flight task run to completion without admitting further
    /// events, so the log ends with the core asleep.
    pub fn finish(&mut self) -> Result<()> {
        if let Some(end) = self.running.as_ref().map(|r| r.end) {
            self.now = end;
            self.finish_task()?;
            self.emit(EventKind::SleepEnter);
            self.sleeping = true;
            self.log.end = self.log.end.max(end);
        }
        Ok(())
    }

    fn arrive(&mut self) {
        let i = self.next_sample;
        self.next_sample += 1;
        let index = i as u64;
        if self.adc.len() >= self.cfg.adc_buffer {
            self.dropped_samples += 1;
            self.emit(EventKind::SampleDrop { index });
        } else {
            self.adc.push_back((index, self.now, self.trace.samples[i]));
            self.emit(EventKind::SampleIn { index });
        }
    }

    fn run_adam(&mut self) -> Result<()> {
        let current_mode = self.target.as_ref().map_or(self.net.mode(), |d| d.mode);
        let inputs = AdamInputs {
            pending_command: self.pending_cmd.take(),
            observed_bpm: self.bpm.bpm(),
            battery_level: self.cfg.battery_level,
            current_mode,
            current_freq_hz: self.freq_hz,
        };
        let d = adam::decide(&inputs, &self.cfg.adam, &self.cfg.node)?;
        self.overload_decisions += u64::from(d.overload);
        if d.mode == self.net.mode() {
            self.target = None;
            self.set_freq(d.freq_hz);
        } else {
            if d.mode == OperatingMode::CnnProcessing && self.classifier.is_none() {
                return Err(Error::Config("cnn mode requires a model".into()));
            }
            self.target = Some(d);
        }
        Ok(())
    }

    fn set_freq(&mut self, f: f64) {
        if f != self.freq_hz {
            self.emit(EventKind::FreqChange {
                from_hz: self.freq_hz,
                to_hz: f,
            });
            self.freq_hz = f;
        }
    }

    fn try_apply(&mut self) -> Result<()> {
        let Some(d) = &self.target else {
            return Ok(());
        };
        let leaving_raw = self.net.mode() == OperatingMode::RawData;
        if self.net.pending_on_removed(d.mode) > 0 || (leaving_raw && !self.raw_acc.is_empty()) {
            return Ok(());
        }
        let d = self.target.take().expect("checked above");
        let from = self.net.mode();
        let had_peak = self.net.task(TaskId::Peak).enabled;
        adam::apply(&d, &mut self.net)?;
        self.emit(EventKind::ModeChange { from, to: d.mode });
        self.set_freq(d.freq_hz);
        let has_peak = self.net.task(TaskId::Peak).enabled;
        if !has_peak {
            self.peak = None;
        } else if !had_peak {
            self.peak = Some(PeakStage::new(&self.cfg.detector, self.frame_len)?);
        }
        Ok(())
    }

    /// True when a pending reconfiguration drops `task`'s output edge while
    /// keeping its input, so the task must hold off.
    fn gated(&self, task: TaskId) -> bool {
        let Some(d) = &self.target else {
            return false;
        };
        let removed = self.net.removed_edges(d.mode);
        let out_removed = self
            .net
            .output_of(task)
            .is_some_and(|f| removed.contains(&(f.src, f.dst)));
        let in_removed = self
            .net
            .input_of(task)
            .is_some_and(|f| removed.contains(&(f.src, f.dst)));
        out_removed && !in_removed
    }

    fn output_has_space(&self, task: TaskId) -> bool {
        self.net.output_of(task).is_some_and(|f| !f.is_full())
    }

    fn input_ready(&self, task: TaskId) -> bool {
        self.net.input_of(task).is_some_and(|f| !f.is_empty())
    }

    fn runnable(&self, task: TaskId) -> bool {
        if !self.net.task(task).enabled {
            return false;
        }
        match task {
            TaskId::GetData => {
                if self.adc.is_empty() {
                    return false;
                }
                if self.net.mode() == OperatingMode::RawData {
                    if self.gated(task) && self.raw_acc.is_empty() {
                        return false;
                    }
                    self.raw_acc.len() + 1 < self.cfg.node.samples_per_packet || self.output_has_space(task)
                } else {
                    !self.gated(task) && self.output_has_space(task)
                }
            }
            TaskId::Peak | TaskId::Cnn | TaskId::Threshold => {
                self.input_ready(task) && !self.gated(task) && self.output_has_space(task)
            }
            TaskId::Send => self.input_ready(task),
        }
    }

    fn schedule(&mut self) -> Result<()> {
        if self.adam_due {
            self.adam_due = false;
            self.run_adam()?;
        }
        self.try_apply()?;
        match TaskId::ALL.into_iter().find(|&t| self.runnable(t)) {
            Some(task) => self.start_task(task),
            None => {
                if self.net.queued() > 0 {
                    return Err(Error::Deadlock {
                        t: super::ps_to_s(self.now),
                        snapshot: self.net.occupancy(),
                    });
                }
                Ok(())
            }
        }
    }

    fn pop_input(&mut self, task: TaskId) -> Message {
        self.net
            .input_of_mut(task)
            .and_then(|f| f.pop())
            .expect("runnable task has input")
            .msg
    }

    fn start_task(&mut self, task: TaskId) -> Result<()> {
        if self.sleeping {
            self.emit(EventKind::SleepExit);
            self.sleeping = false;
        }
        self.emit(EventKind::TaskStart { task });
        let work = match task {
            TaskId::GetData => {
                let (index, t, value) = self.adc.pop_front().expect("runnable get_data has a sample");
                Work::Acquire { index, t, value }
            }
            TaskId::Peak => match self.pop_input(task) {
                Message::Sample { index, value, .. } => Work::Detect { index, value },
                other => return Err(unexpected(task, &other)),
            },
            TaskId::Cnn => match self.pop_input(task) {
                Message::Beat {
                    peak_index,
                    t,
                    bpm,
                    frame: Some(frame),
                } => {
                    let classifier = self
                        .classifier
                        .ok_or_else(|| Error::Config("cnn mode requires a model".into()))?;
                    let class = classifier.classify(&frame)?;
                    Work::Classify {
                        peak_index,
                        t,
                        bpm,
                        class,
                    }
                }
                other => return Err(unexpected(task, &other)),
            },
            TaskId::Threshold => {
                let input = match self.pop_input(task) {
                    Message::Beat { t, bpm, .. } => (
                        OperatingMode::PeakDetection,
                        ThresholdInput::Peak {
                            bpm,
                            timestamp_ms: timestamp_ms(t),
                        },
                    ),
                    Message::Classified { t, bpm, class, .. } => (
                        OperatingMode::CnnProcessing,
                        ThresholdInput::Classified {
                            bpm,
                            class,
                            timestamp_ms: timestamp_ms(t),
                        },
                    ),
                    other => return Err(unexpected(task, &other)),
                };
                Work::Gate(threshold_task(input.0, input.1, &self.cfg.policy))
            }
            TaskId::Send => match self.pop_input(task) {
                Message::Outbound(p) => Work::Transmit(p),
                Message::RawBatch { t, samples } => Work::Transmit(Packet::Raw {
                    samples,
                    timestamp_ms: timestamp_ms(t),
                }),
                other => return Err(unexpected(task, &other)),
            },
        };
        let cycles = self.net.task(task).cycles as u128;
        let dur = ((cycles * PS_PER_S as u128) as f64 / self.freq_hz).round() as SimTime;
        self.running = Some(Running {
            task,
            end: self.now + dur.max(1),
            work,
        });
        Ok(())
    }

    fn push_output(&mut self, task: TaskId, msg: Message) -> Result<()> {
        let fifo = self
            .net
            .output_of_mut(task)
            .ok_or_else(|| Error::InvalidArgument(format!("{task} has no output edge")))?;
        fifo.push(msg)
            .map(|_| ())
            .map_err(|_| Error::InvalidArgument(format!("{task} wrote to a full fifo")))
    }

    fn finish_task(&mut self) -> Result<()> {
        let r = self.running.take().expect("task running");
        match r.work {
            Work::Acquire { index, t, value } => {
                if self.net.mode() == OperatingMode::RawData {
                    if self.raw_acc.is_empty() {
                        self.raw_acc_t = t;
                    }
                    self.raw_acc.push(value);
                    if self.raw_acc.len() >= self.cfg.node.samples_per_packet {
                        let samples = std::mem::take(&mut self.raw_acc);
                        self.push_output(r.task, Message::RawBatch { t: self.raw_acc_t, samples })?;
                    }
                } else {
                    self.push_output(r.task, Message::Sample { index, t, value })?;
                }
            }
            Work::Detect { index, value } => self.finish_peak(index, value)?,
            Work::Classify {
                peak_index,
                t,
                bpm,
                class,
            } => {
                self.classifications.push((peak_index, class));
                self.push_output(
                    r.task,
                    Message::Classified {
                        peak_index,
                        t,
                        bpm,
                        class,
                    },
                )?;
            }
            Work::Gate(out) => {
                if let Some((p, saturated)) = out {
                    self.saturated_packets += u64::from(saturated);
                    self.push_output(r.task, Message::Outbound(p))?;
                }
            }
            Work::Transmit(packet) => {
                self.emit(EventKind::TaskEnd { task: r.task });
                self.emit(EventKind::PacketOut {
                    mode: packet.mode(),
                    size: encode_packet(&packet).len(),
                });
                self.packets.push(PacketRecord { t: self.now, packet });
                return Ok(());
            }
        }
        self.emit(EventKind::TaskEnd { task: r.task });
        Ok(())
    }

    fn finish_peak(&mut self, index: u64, value: i16) -> Result<()> {
        let fs = self.trace.sample_rate_hz;
        let stage = self
            .peak
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument("peak task ran without a detector".into()))?;
        for e in stage.push(index, value) {
            if let Some(rr) = e.rr_samples {
                self.bpm.update(rr as f64 / fs);
            }
            self.detected_peaks.push(e.peak_index as u64);
            stage.outbox.push_back(PendingBeat {
                peak_index: e.peak_index as u64,
                bpm: e.bpm,
            });
        }
        let with_frame = self.net.mode() == OperatingMode::CnnProcessing;
        let tail = (self.frame_len - 1 - self.frame_len / 2) as u64;
        loop {
            let stage = self.peak.as_ref().expect("checked above");
            let Some(&beat) = stage.outbox.front() else { break };
            if with_frame && stage.last_index < beat.peak_index + tail {
                break;
            }
            if !self.output_has_space(TaskId::Peak) {
                break;
            }
            let frame = with_frame.then(|| stage.frame(beat.peak_index, self.frame_len));
            let t = self.sample_time(beat.peak_index);
            self.peak.as_mut().expect("checked above").outbox.pop_front();
            self.push_output(
                TaskId::Peak,
                Message::Beat {
                    peak_index: beat.peak_index,
                    t,
                    bpm: beat.bpm,
                    frame,
                },
            )?;
        }
        Ok(())
    }

    fn check_invariants(&self) -> Result<()> {
        for f in self.net.fifos() {
            if !f.conserves() || f.len() > f.capacity() {
                return Err(Error::InvalidArgument(format!(
                    "fifo {}->{} violates conservation: {}",
                    f.src,
                    f.dst,
                    self.net.occupancy()
                )));
            }
        }
        if self.adc.len() > self.cfg.adc_buffer {
            return Err(Error::InvalidArgument("adc buffer overflow".into()));
        }
        self.net.check_topology()
    }

    pub fn into_report(self) -> SimReport {
        SimReport {
            final_mode: self.net.mode(),
            final_freq_hz: self.freq_hz,
            log: self.log,
            packets: self.packets,
            detected_peaks: self.detected_peaks,
            classifications: self.classifications,
            dropped_samples: self.dropped_samples,
            saturated_packets: self.saturated_packets,
            overload_decisions: self.overload_decisions,
        }
    }
}

fn unexpected(task: TaskId, msg: &Message) -> Error {
    Error::InvalidArgument(format!("{task} received unexpected message {msg:?}"))
}

/// Simulates `until_s` seconds of `trace` (its full duration when `None`).
/// A task in flight at the horizon runs to completion.
pub fn simulate(
    cfg: &SimConfig,
    trace: &EcgTrace,
    classifier: Option<&dyn BeatClassifier>,
    script: &[(f64, GatewayCommand)],
    until_s: Option<f64>,
) -> Result<SimReport> {
    let mut sim = Simulator::new(cfg.clone(), trace, classifier, script)?;
    sim.step(until_s.unwrap_or_else(|| trace.duration_s()))?;
    sim.finish()?;
    Ok(sim.into_report())
}
