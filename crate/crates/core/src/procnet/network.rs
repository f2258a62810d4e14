use std::collections::{BTreeSet, VecDeque};

use super::packet::Packet;
use super::{OperatingMode, SimTime, TaskId};
use crate::power::NodeConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// One ADC sample, `GetData -> Peak`.
    Sample { index: u64, t: SimTime, value: i16 },
    /// A full raw-data packet worth of samples, `GetData -> Send`.
    RawBatch { t: SimTime, samples: Vec<i16> },
    /// A detected beat, `Peak -> Threshold` or `Peak -> Cnn` (with its frame).
    Beat {
        peak_index: u64,
        t: SimTime,
        bpm: Option<f64>,
        frame: Option<Vec<i16>>,
    },
    /// A classified beat, `Cnn -> Threshold`.
    Classified {
        peak_index: u64,
        t: SimTime,
        bpm: Option<f64>,
        class: usize,
    },
    /// A packet cleared for transmission, `Threshold -> Send`.
    Outbound(Packet),
}

/// A message tagged with its write sequence number on the FIFO.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub msg: Message,
}

/// Bounded FIFO between two tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Fifo {
    pub src: TaskId,
    pub dst: TaskId,
    capacity: usize,
    queue: VecDeque<Envelope>,
    written: u64,
    read: u64,
}

impl Fifo {
    pub fn new(src: TaskId, dst: TaskId, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("fifo capacity must be positive".into()));
        }
        Ok(Self {
            src,
            dst,
            capacity,
            queue: VecDeque::with_capacity(capacity),
            written: 0,
            read: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.queue.len() >= self.capacity
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn read(&self) -> u64 {
        self.read
    }

    /// Hands the message back when the FIFO is full.
    pub fn push(&mut self, msg: Message) -> std::result::Result<u64, Message> {
        if self.is_full() {
            return Err(msg);
        }
        let seq = self.written;
        self.queue.push_back(Envelope { seq, msg });
        self.written += 1;
        Ok(seq)
    }

    pub fn pop(&mut self) -> Option<Envelope> {
        let e = self.queue.pop_front()?;
        self.read += 1;
        Some(e)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Envelope> {
        self.queue.iter()
    }

    /// `written == read + queued`.
    pub fn conserves(&self) -> bool {
        self.written == self.read + self.queue.len() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskSpec {
    pub id: TaskId,
    pub cycles: u64,
    pub enabled: bool,
}

/// The active task graph of one operating mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessNetwork {
    mode: OperatingMode,
    tasks: [TaskSpec; 5],
    fifos: Vec<Fifo>,
    fifo_capacity: usize,
}

pub fn build_network(mode: OperatingMode, cfg: &NodeConfig, fifo_capacity: usize) -> Result<ProcessNetwork> {
    let mut tasks = [TaskSpec {
        id: TaskId::GetData,
        cycles: 1,
        enabled: false,
    }; 5];
    for t in TaskId::ALL {
        tasks[t.index()] = TaskSpec {
            id: t,
            cycles: cfg.task_cycles(t)?,
            enabled: mode.tasks().contains(&t),
        };
    }
    let fifos = mode
        .edges()
        .into_iter()
        .map(|(s, d)| Fifo::new(s, d, fifo_capacity))
        .collect::<Result<_>>()?;
    Ok(ProcessNetwork {
        mode,
        tasks,
        fifos,
        fifo_capacity,
    })
}

impl ProcessNetwork {
    pub fn mode(&self) -> OperatingMode {
        self.mode
    }

    pub fn task(&self, id: TaskId) -> &TaskSpec {
        &self.tasks[id.index()]
    }

    pub fn active_tasks(&self) -> BTreeSet<TaskId> {
        self.tasks.iter().filter(|t| t.enabled).map(|t| t.id).collect()
    }

    pub fn edges(&self) -> BTreeSet<(TaskId, TaskId)> {
        self.fifos.iter().map(|f| (f.src, f.dst)).collect()
    }

    pub fn fifos(&self) -> &[Fifo] {
        &self.fifos
    }

    pub fn fifo(&self, src: TaskId, dst: TaskId) -> Option<&Fifo> {
        self.fifos.iter().find(|f| f.src == src && f.dst == dst)
    }

    pub fn input_of(&self, task: TaskId) -> Option<&Fifo> {
        self.fifos.iter().find(|f| f.dst == task)
    }

    pub fn input_of_mut(&mut self, task: TaskId) -> Option<&mut Fifo> {
        self.fifos.iter_mut().find(|f| f.dst == task)
    }

    pub fn output_of(&self, task: TaskId) -> Option<&Fifo> {
        self.fifos.iter().find(|f| f.src == task)
    }

    pub fn output_of_mut(&mut self, task: TaskId) -> Option<&mut Fifo> {
        self.fifos.iter_mut().find(|f| f.src == task)
    }

    pub fn queued(&self) -> usize {
        self.fifos.iter().map(Fifo::len).sum()
    }

    /// Edges that exist now but not in `target`.
    pub fn removed_edges(&self, target: OperatingMode) -> BTreeSet<(TaskId, TaskId)> {
        self.edges().difference(&target.edges()).copied().collect()
    }

    /// Messages still queued on edges that `target` drops.
    pub fn pending_on_removed(&self, target: OperatingMode) -> usize {
        let removed = self.removed_edges(target);
        self.fifos
            .iter()
            .filter(|f| removed.contains(&(f.src, f.dst)))
            .map(Fifo::len)
            .sum()
    }

    /// Switches to `target`: surviving FIFOs keep their contents, dropped
    /// FIFOs must already be empty. Returns whether anything changed.
    pub fn reconfigure(&mut self, target: OperatingMode) -> Result<bool> {
        if target == self.mode {
            return Ok(false);
        }
        let pending = self.pending_on_removed(target);
        if pending > 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot leave {} mode with {pending} messages on edges being removed",
                self.mode
            )));
        }
        let keep = target.edges();
        self.fifos.retain(|f| keep.contains(&(f.src, f.dst)));
        for (s, d) in &keep {
            if self.fifo(*s, *d).is_none() {
                self.fifos.push(Fifo::new(*s, *d, self.fifo_capacity)?);
            }
        }
        self.fifos.sort_by_key(|f| (f.src, f.dst));
        let active = target.tasks();
        for t in &mut self.tasks {
            t.enabled = active.contains(&t.id);
        }
        self.mode = target;
        self.check_topology()?;
        Ok(true)
    }

    /// Active tasks and edges equal the mode's topology exactly.
    pub fn check_topology(&self) -> Result<()> {
        if self.active_tasks() != self.mode.tasks() || self.edges() != self.mode.edges() {
            return Err(Error::InvalidArgument(format!(
                "network does not match {} topology: tasks {:?}, edges {:?}",
                self.mode,
                self.active_tasks(),
                self.edges()
            )));
        }
        if self.fifos.len() != self.edges().len() {
            return Err(Error::InvalidArgument("duplicate fifo".into()));
        }
        Ok(())
    }

    /// Human-readable FIFO occupancy, e.g. `get_data->peak 3/16`.
    pub fn occupancy(&self) -> String {
        self.fifos
            .iter()
            .map(|f| format!("{}->{} {}/{}", f.src, f.dst, f.len(), f.capacity))
            .collect::<Vec<_>>()
            .join(", ")
    }
}
