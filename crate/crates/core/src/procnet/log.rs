use std::fmt::Write as _;

use super::{format_ps, ps_to_s, OperatingMode, SimTime, TaskId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    SampleIn { index: u64 },
    /// The ADC buffer was full and the sample was lost.
    SampleDrop { index: u64 },
    TaskStart { task: TaskId },
    TaskEnd { task: TaskId },
    PacketOut { mode: OperatingMode, size: usize },
    ModeChange { from: OperatingMode, to: OperatingMode },
    FreqChange { from_hz: f64, to_hz: f64 },
    SleepEnter,
    SleepExit,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SampleIn { .. } => "sample_in",
            EventKind::SampleDrop { .. } => "sample_drop",
            EventKind::TaskStart { .. } => "task_start",
            EventKind::TaskEnd { .. } => "task_end",
            EventKind::PacketOut { .. } => "packet_out",
            EventKind::ModeChange { .. } => "mode_change",
            EventKind::FreqChange { .. } => "freq_change",
            EventKind::SleepEnter => "sleep_enter",
            EventKind::SleepExit => "sleep_exit",
        }
    }

    fn detail(&self) -> String {
        match self {
            EventKind::SampleIn { index } | EventKind::SampleDrop { index } => format!("index={index}"),
            EventKind::TaskStart { task } | EventKind::TaskEnd { task } => format!("task={task}"),
            EventKind::PacketOut { mode, size } => format!("mode={mode} size={size}"),
            EventKind::ModeChange { from, to } => format!("from={from} to={to}"),
            EventKind::FreqChange { from_hz, to_hz } => format!("from_hz={from_hz} to_hz={to_hz}"),
            EventKind::SleepEnter | EventKind::SleepExit => String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub t: SimTime,
    pub kind: EventKind,
}

/// Totally ordered event log of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub initial_mode: OperatingMode,
    pub initial_freq_hz: f64,
    pub events: Vec<SimEvent>,
    /// Simulated end: the requested horizon or the last task end, whichever
    /// is later.
    pub end: SimTime,
}

impl SimLog {
    pub fn empty(initial_mode: OperatingMode, initial_freq_hz: f64, end: SimTime) -> Self {
        Self {
            initial_mode,
            initial_freq_hz,
            events: Vec::new(),
            end,
        }
    }

    pub fn duration_s(&self) -> f64 {
        ps_to_s(self.end)
    }

    pub fn count(&self, name: &str) -> usize {
        self.events.iter().filter(|e| e.kind.name() == name).count()
    }

    /// CSV `t_s,kind,detail`, preceded by `#`-comment lines with the
    /// initial mode and clock.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# initial_mode={} initial_freq_hz={}\nt_s,kind,detail\n",
            self.initial_mode, self.initial_freq_hz
        );
        for e in &self.events {
            let _ = writeln!(out, "{},{},{}", format_ps(e.t), e.kind.name(), e.kind.detail());
        }
        let _ = writeln!(out, "{},end,", format_ps(self.end));
        out
    }

    /// Walks the core timeline and returns `(busy, asleep)` time. Fails if
    /// events are out of order, two tasks overlap, or the core is neither busy
    /// nor asleep for a nonzero span.
    pub fn core_timeline(&self) -> Result<(SimTime, SimTime)> {
        #[derive(PartialEq)]
        enum Core {
            Idle,
            Busy(TaskId),
            Asleep,
        }
        let bad = |t: SimTime, m: String| Err(Error::InvalidArgument(format!("timeline at {}: {m}", format_ps(t))));
        let mut state = Core::Idle;
        let (mut busy, mut asleep) = (0, 0);
        let mut since = 0;
        let mut last = 0;
        for e in &self.events {
            if e.t < last {
                return bad(e.t, "events out of order".into());
            }
            last = e.t;
            match (&state, e.kind) {
                (Core::Idle, EventKind::TaskStart { task }) => {
                    if e.t != since {
                        return bad(e.t, "core idle without sleeping".into());
                    }
                    state = Core::Busy(task);
                    since = e.t;
                }
                (Core::Idle, EventKind::SleepEnter) => {
                    if e.t != since {
                        return bad(e.t, "core idle without sleeping".into());
                    }
                    state = Core::Asleep;
                    since = e.t;
                }
                (Core::Busy(running), EventKind::TaskEnd { task }) if *running == task => {
                    busy += e.t - since;
                    state = Core::Idle;
                    since = e.t;
                }
                (Core::Asleep, EventKind::SleepExit) => {
                    asleep += e.t - since;
                    state = Core::Idle;
                    since = e.t;
                }
                (_, EventKind::TaskStart { .. } | EventKind::TaskEnd { .. } | EventKind::SleepEnter | EventKind::SleepExit) => {
                    return bad(e.t, format!("unexpected {}", e.kind.name()));
                }
                _ => {}
            }
        }
        match state {
            Core::Asleep => asleep += self.end.saturating_sub(since),
            Core::Busy(_) => return bad(self.end, "task still running at end".into()),
            Core::Idle if self.end > since => return bad(since, "core idle without sleeping".into()),
            Core::Idle => {}
        }
        Ok((busy, asleep))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: SimTime, kind: EventKind) -> SimEvent {
        SimEvent { t, kind }
    }

    #[test]
    fn timeline_accounting() {
        let mut log = SimLog::empty(OperatingMode::RawData, 8e6, 100);
        log.events = vec![
            ev(0, EventKind::SampleIn { index: 0 }),
            ev(0, EventKind::TaskStart { task: TaskId::GetData }),
            ev(10, EventKind::TaskEnd { task: TaskId::GetData }),
            ev(10, EventKind::SleepEnter),
            ev(50, EventKind::SleepExit),
            ev(50, EventKind::TaskStart { task: TaskId::Send }),
            ev(70, EventKind::TaskEnd { task: TaskId::Send }),
            ev(70, EventKind::SleepEnter),
        ];
        assert_eq!(log.core_timeline().unwrap(), (30, 70));
        assert_eq!(log.count("task_end"), 2);
        let csv = log.to_csv();
        assert!(csv.contains("0.000000000010,task_end,task=get_data\n"));
        assert!(csv.ends_with("0.000000000100,end,\n"));
    }

    #[test]
    fn timeline_rejects_overlap() {
        let mut log = SimLog::empty(OperatingMode::RawData, 8e6, 100);
        log.events = vec![
            ev(0, EventKind::TaskStart { task: TaskId::GetData }),
            ev(5, EventKind::TaskStart { task: TaskId::Send }),
        ];
        assert!(log.core_timeline().is_err());
        log.events = vec![ev(5, EventKind::SleepEnter)];
        assert!(log.core_timeline().is_err());
    }
}
