//! Integer QRS filtering chain, online R-peak detector and detector scoring.
//!
//! The chain is DC blocker -> low-pass -> first difference -> square, all in
//! saturating 32-bit integer arithmetic (the square is widened to 64 bits and
//! clamped back). A peak is an episode where the filtered signal rises above
//! the threshold, falls back under it and reaches a local minimum; the episode
//! maximum, shifted back by the chain's group delay, is the R-peak estimate.

use serde::{Deserialize, Serialize};

use crate::trace_io::{BeatAnnotation, EcgTrace};
use crate::{Error, Result};

/// Q15 representation of the DC-blocker pole 0.995.
pub const DEFAULT_DC_POLE_Q15: i32 = 32604;
/// `m` of the integer low-pass `y[n] = 2y[n-1] - y[n-2] + x[n] - 2x[n-m] + x[n-2m]`.
pub const DEFAULT_LP_TAPS: usize = 6;
pub const DEFAULT_TOLERANCE_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterCoeffs {
    pub dc_pole_q15: i32,
    pub lp_taps: usize,
}

impl Default for FilterCoeffs {
    fn default() -> Self {
        Self {
            dc_pole_q15: DEFAULT_DC_POLE_Q15,
            lp_taps: DEFAULT_LP_TAPS,
        }
    }
}

impl FilterCoeffs {
    /// Integer group delay of the chain. The low-pass is a symmetric
    /// triangular FIR of length `2m - 1` (delay `m - 1`); the half-sample
    /// delay of the first difference is dropped.
    pub fn group_delay_samples(&self) -> usize {
        self.lp_taps.saturating_sub(1)
    }

    fn validate(&self) -> Result<()> {
        if self.lp_taps == 0 || !(0..32768).contains(&self.dc_pole_q15) {
            return Err(Error::Config(format!("invalid filter coefficients {self:?}")));
        }
        Ok(())
    }
}

fn clamp32(v: i64) -> i64 {
    v.clamp(i32::MIN as i64, i32::MAX as i64)
}

/// Streaming state of the filtering chain.
#[derive(Debug, Clone)]
pub struct FilterChain {
    coeffs: FilterCoeffs,
    dc_x1: i64,
    dc_y1: i64,
    // low-pass input history, newest at `lp_head`
    lp_hist: Vec<i64>,
    lp_head: usize,
    lp_y1: i64,
    lp_y2: i64,
    d_x1: i64,
}

impl FilterChain {
    pub fn new(coeffs: FilterCoeffs) -> Self {
        Self {
            coeffs,
            dc_x1: 0,
            dc_y1: 0,
            lp_hist: vec![0; 2 * coeffs.lp_taps + 1],
            lp_head: 0,
            lp_y1: 0,
            lp_y2: 0,
            d_x1: 0,
        }
    }

    pub fn coeffs(&self) -> &FilterCoeffs {
        &self.coeffs
    }

    pub fn group_delay_samples(&self) -> usize {
        self.coeffs.group_delay_samples()
    }

    /// Pretends the input has been at `x` forever, so the DC blocker does not
    /// see a step from zero on the first sample.
    pub fn prime(&mut self, x: i16) {
        self.dc_x1 = x as i64;
    }

    fn lp_at(&self, delay: usize) -> i64 {
        let n = self.lp_hist.len();
        self.lp_hist[(self.lp_head + n - delay) % n]
    }

    /// Feeds one raw sample and returns the squared-derivative output (>= 0).
    pub fn step(&mut self, x: i16) -> i32 {
        let x = x as i64;
        let pole = self.coeffs.dc_pole_q15 as i64;
        // integer division truncates toward zero so the feedback decays to 0
        let dc = clamp32(x - self.dc_x1 + (self.dc_y1 * pole) / 32768);
        self.dc_x1 = x;
        self.dc_y1 = dc;

        let m = self.coeffs.lp_taps;
        let n = self.lp_hist.len();
        self.lp_head = (self.lp_head + 1) % n;
        self.lp_hist[self.lp_head] = dc;
        let lp = clamp32(2 * self.lp_y1 - self.lp_y2 + dc - 2 * self.lp_at(m) + self.lp_at(2 * m));
        self.lp_y2 = self.lp_y1;
        self.lp_y1 = lp;

        let d = clamp32(lp - self.d_x1);
        self.d_x1 = lp;

        (d * d).min(i32::MAX as i64) as i32
    }
}

/// How the detection threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Fixed threshold in filtered-signal units.
    Fixed(f64),
    /// `fraction` of the filtered-signal maximum over the first `learn_s`
    /// seconds. Events in the learning window are released once it closes.
    Auto { fraction: f64, learn_s: f64 },
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Auto {
            fraction: 0.3,
            learn_s: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub design_rate_hz: f64,
    pub coeffs: FilterCoeffs,
    pub threshold: ThresholdRule,
    pub refractory_s: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            design_rate_hz: crate::trace_io::DEFAULT_SAMPLE_RATE_HZ,
            coeffs: FilterCoeffs::default(),
            threshold: ThresholdRule::default(),
            refractory_s: 0.2,
        }
    }
}

impl DetectorConfig {
    pub fn refractory_samples(&self) -> usize {
        (self.refractory_s * self.design_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.coeffs.validate()?;
        if !(self.design_rate_hz > 0.0) || !(self.refractory_s >= 0.0) {
            return Err(Error::Config("detector rate must be positive, refractory non-negative".into()));
        }
        match self.threshold {
            ThresholdRule::Fixed(t) if !(t > 0.0) => {
                Err(Error::Config(format!("threshold must be positive, got {t}")))
            }
            ThresholdRule::Auto { fraction, learn_s } if !(fraction > 0.0) || !(learn_s > 0.0) => {
                Err(Error::Config("auto threshold needs positive fraction and window".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEvent {
    /// Sample index of the R peak after group-delay compensation.
    pub peak_index: usize,
    /// Samples since the previous event; `None` for the first one.
    pub rr_samples: Option<usize>,
    pub bpm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DetState {
    Below,
    Above,
    SeekingMin,
}

/// Streaming R-peak detector. Single owner; feed samples in order.
#[derive(Debug, Clone)]
pub struct PeakDetector {
    cfg: DetectorConfig,
    chain: FilterChain,
    threshold: Option<f64>,
    learn: Vec<i32>,
    learn_len: usize,
    refractory: usize,
    state: DetState,
    next_index: usize,
    prev: i32,
    best: (usize, i32),
    last_peak: Option<usize>,
    primed: bool,
}

impl PeakDetector {
    pub fn new(cfg: DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        let (threshold, learn_len) = match cfg.threshold {
            ThresholdRule::Fixed(t) => (Some(t), 0),
            ThresholdRule::Auto { learn_s, .. } => {
                (None, ((learn_s * cfg.design_rate_hz).round() as usize).max(1))
            }
        };
        Ok(Self {
            chain: FilterChain::new(cfg.coeffs),
            threshold,
            learn: Vec::with_capacity(learn_len),
            learn_len,
            refractory: cfg.refractory_samples(),
            state: DetState::Below,
            next_index: 0,
            prev: 0,
            best: (0, 0),
            last_peak: None,
            primed: false,
            cfg,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Threshold in use, once known.
    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    /// Number of samples consumed so far.
    pub fn samples_seen(&self) -> usize {
        self.next_index
    }

    /// Feeds one sample; completed events are appended to `out`.
    pub fn push(&mut self, x: i16, out: &mut Vec<PeakEvent>) {
        if !self.primed {
            self.chain.prime(x);
            self.primed = true;
        }
        let y = self.chain.step(x);
        let idx = self.next_index;
        self.next_index += 1;
        if self.threshold.is_some() {
            self.advance(idx, y, out);
        } else {
            self.learn.push(y);
            if self.learn.len() >= self.learn_len {
                self.close_learning(out);
            }
        }
    }

    /// Flushes a trailing learning window and a finished-but-unclosed episode.
    pub fn finish(&mut self, out: &mut Vec<PeakEvent>) {
        if self.threshold.is_none() {
            self.close_learning(out);
        }
        if self.state == DetState::SeekingMin {
            self.emit(out);
            self.state = DetState::Below;
        }
    }

    fn close_learning(&mut self, out: &mut Vec<PeakEvent>) {
        let fraction = match self.cfg.threshold {
            ThresholdRule::Auto { fraction, .. } => fraction,
            ThresholdRule::Fixed(_) => unreachable!("fixed threshold never learns"),
        };
        let max = self.learn.iter().copied().max().unwrap_or(0) as f64;
        self.threshold = Some((fraction * max).max(1.0));
        let buffered = std::mem::take(&mut self.learn);
        let start = self.next_index - buffered.len();
        for (i, y) in buffered.into_iter().enumerate() {
            self.advance(start + i, y, out);
        }
    }

    fn advance(&mut self, idx: usize, y: i32, out: &mut Vec<PeakEvent>) {
        let th = self.threshold.expect("threshold set before advancing");
        if self.state == DetState::SeekingMin && y >= self.prev {
            // previous sample was the local minimum
            self.emit(out);
            self.state = DetState::Below;
        }
        match self.state {
            DetState::Below => {
                if y as f64 > th {
                    self.state = DetState::Above;
                    self.best = (idx, y);
                }
            }
            DetState::Above => {
                if y > self.best.1 {
                    self.best = (idx, y);
                }
                if y as f64 <= th {
                    self.state = DetState::SeekingMin;
                }
            }
            DetState::SeekingMin => {}
        }
        self.prev = y;
    }

    fn emit(&mut self, out: &mut Vec<PeakEvent>) {
        let peak = self.best.0.saturating_sub(self.chain.group_delay_samples());
        let rr = match self.last_peak {
            Some(last) if peak <= last || peak - last < self.refractory => return,
            Some(last) => Some(peak - last),
            None => None,
        };
        self.last_peak = Some(peak);
        out.push(PeakEvent {
            peak_index: peak,
            rr_samples: rr,
            bpm: rr.map(|r| 60.0 * self.cfg.design_rate_hz / r as f64),
        });
    }
}

/// Runs the detector over a whole trace.
pub fn detect(cfg: &DetectorConfig, trace: &EcgTrace) -> Result<Vec<PeakEvent>> {
    if (trace.sample_rate_hz - cfg.design_rate_hz).abs() > 1e-9 {
        return Err(Error::SampleRateMismatch {
            expected: cfg.design_rate_hz,
            actual: trace.sample_rate_hz,
        });
    }
    let mut det = PeakDetector::new(*cfg)?;
    let mut out = Vec::new();
    for &x in &trace.samples {
        det.push(x, &mut out);
    }
    det.finish(&mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// `None` when there are no annotations.
    pub tpr: Option<f64>,
    /// `None` when there are no events.
    pub ppv: Option<f64>,
}

impl DetectorScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        Self {
            tp,
            fp,
            fn_,
            tpr: ratio(tp, tp + fn_),
            ppv: ratio(tp, tp + fp),
        }
    }

    pub fn merge(&self, other: &DetectorScore) -> DetectorScore {
        Self::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruePositive {
    /// Index into the events slice.
    pub event: usize,
    /// Index into the annotations slice.
    pub annotation: usize,
    pub label: char,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    pub tp: Vec<TruePositive>,
    /// Unmatched event indices.
    pub fp: Vec<usize>,
    /// Unmatched annotation indices.
    pub fn_: Vec<usize>,
}

impl Matching {
    pub fn score(&self) -> DetectorScore {
        DetectorScore::from_counts(self.tp.len(), self.fp.len(), self.fn_.len())
    }
}

/// Greedy one-to-one matching. Events are taken in index order; each is
/// paired with the nearest still-unmatched annotation within `tolerance`
/// samples (inclusive), ties going to the earlier annotation.
pub fn match_outcomes(events: &[PeakEvent], annotations: &[BeatAnnotation], tolerance: usize) -> Matching {
    let mut ev_order: Vec<usize> = (0..events.len()).collect();
    ev_order.sort_by_key(|&i| events[i].peak_index);
    let mut ann_order: Vec<usize> = (0..annotations.len()).collect();
    ann_order.sort_by_key(|&i| annotations[i].peak_index);
    let ann_pos: Vec<usize> = ann_order.iter().map(|&i| annotations[i].peak_index).collect();

    let mut taken = vec![false; annotations.len()];
    let mut out = Matching::default();
    for &e in &ev_order {
        let p = events[e].peak_index;
        let lo = ann_pos.partition_point(|&a| a + tolerance < p);
        let mut best: Option<(usize, usize)> = None;
        for (k, &a) in ann_pos.iter().enumerate().skip(lo) {
            if a > p + tolerance {
                break;
            }
            if taken[k] {
                continue;
            }
            let d = a.abs_diff(p);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        match best {
            Some((k, _)) => {
                taken[k] = true;
                let annotation = ann_order[k];
                out.tp.push(TruePositive {
                    event: e,
                    annotation,
                    label: annotations[annotation].label,
                });
            }
            None => out.fp.push(e),
        }
    }
    out.fn_ = ann_order
        .iter()
        .enumerate()
        .filter(|(k, _)| !taken[*k])
        .map(|(_, &i)| i)
        .collect();
    out
}

pub fn score(events: &[PeakEvent], annotations: &[BeatAnnotation], tolerance: usize) -> DetectorScore {
    match_outcomes(events, annotations, tolerance).score()
}
