//! ECG traces, beat annotations and the synthetic trace generator.
//!
//! Trace file layout (UTF-8):
//!
//! ```text
//! sample_rate_hz=330
//! record_id=100
//! -12
//! 5
//! ...
//! ```
//!
//! Annotation file layout: one `<peak_index>,<label_char>` per line.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 330.0;

/// A single-lead sampled ECG recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgTrace {
    pub sample_rate_hz: f64,
    pub samples: Vec<i16>,
    pub record_id: String,
}

impl EcgTrace {
    pub fn new(sample_rate_hz: f64, samples: Vec<i16>, record_id: impl Into<String>) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            sample_rate_hz,
            samples,
            record_id: record_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// One of the two 5-class beat alphabets. The class order is the CNN output
/// index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum LabelSet {
    #[serde(rename = "NLRAV")]
    Nlrav,
    #[serde(rename = "NSVFQ")]
    Nsvfq,
}

impl LabelSet {
    pub const NUM_CLASSES: usize = 5;

    pub fn classes(self) -> [char; 5] {
        match self {
            LabelSet::Nlrav => ['N', 'L', 'R', 'A', 'V'],
            LabelSet::Nsvfq => ['N', 'S', 'V', 'F', 'Q'],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelSet::Nlrav => "NLRAV",
            LabelSet::Nsvfq => "NSVFQ",
        }
    }

    pub fn index_of(self, label: char) -> Option<usize> {
        self.classes().iter().position(|&c| c == label)
    }

    pub fn label(self, index: usize) -> Option<char> {
        self.classes().get(index).copied()
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LabelSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NLRAV" => Ok(LabelSet::Nlrav),
            "NSVFQ" => Ok(LabelSet::Nsvfq),
            _ => Err(Error::InvalidArgument(format!("unknown label set {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeatAnnotation {
    pub peak_index: usize,
    pub label: char,
}

impl BeatAnnotation {
    pub fn new(peak_index: usize, label: char) -> Self {
        Self { peak_index, label }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<EcgTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_trace(&text, path)
}

/// Parses a trace document; `origin` is only used in error messages.
pub fn parse_trace(text: &str, origin: &Path) -> Result<EcgTrace> {
    let mut lines = text.lines().enumerate();

    let rate = match lines.next() {
        Some((_, l)) => match l.trim().strip_prefix("sample_rate_hz=") {
            Some(v) => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|r| *r > 0.0 && r.is_finite())
                .ok_or_else(|| parse_err(origin, 1, format!("bad sample rate {v:?}")))?,
            None => return Err(parse_err(origin, 1, "expected `sample_rate_hz=<float>`")),
        },
        None => return Err(parse_err(origin, 1, "missing header")),
    };
    let record_id = match lines.next() {
        Some((_, l)) => l
            .trim_end_matches('\r')
            .strip_prefix("record_id=")
            .ok_or_else(|| parse_err(origin, 2, "expected `record_id=<string>`"))?
            .to_string(),
        None => return Err(parse_err(origin, 2, "missing record_id header")),
    };

    let mut samples = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: i64 = line
            .parse()
            .map_err(|_| parse_err(origin, i + 1, format!("non-integer sample {line:?}")))?;
        if v < i16::MIN as i64 || v > i16::MAX as i64 {
            return Err(parse_err(origin, i + 1, format!("sample {v} out of 16-bit range")));
        }
        samples.push(v as i16);
    }
    if samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    EcgTrace::new(rate, samples, record_id)
}

pub fn format_trace(trace: &EcgTrace) -> String {
    let mut out = String::with_capacity(trace.samples.len() * 6 + 48);
    let _ = writeln!(out, "sample_rate_hz={}", trace.sample_rate_hz);
    let _ = writeln!(out, "record_id={}", trace.record_id);
    for s in &trace.samples {
        let _ = writeln!(out, "{s}");
    }
    out
}

pub fn save_trace(trace: &EcgTrace, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_trace(trace))?;
    Ok(())
}

pub fn load_annotations(path: impl AsRef<Path>, labels: LabelSet) -> Result<Vec<BeatAnnotation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_annotations(&text, labels, path)
}

/// Parses annotation rows, sorts them by index and rejects duplicates.
pub fn parse_annotations(text: &str, labels: LabelSet, origin: &Path) -> Result<Vec<BeatAnnotation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, label) = line
            .split_once(',')
            .ok_or_else(|| parse_err(origin, i + 1, "expected `<peak_index>,<label>`"))?;
        let peak_index: usize = idx
            .trim()
            .parse()
            .map_err(|_| parse_err(origin, i + 1, format!("bad peak index {idx:?}")))?;
        let mut chars = label.trim().chars();
        let label = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => return Err(parse_err(origin, i + 1, format!("bad label {label:?}"))),
        };
        if labels.index_of(label).is_none() {
            return Err(Error::UnknownLabel(label));
        }
        out.push(BeatAnnotation { peak_index, label });
    }
    out.sort_by_key(|a| a.peak_index);
    if let Some(w) = out.windows(2).find(|w| w[0].peak_index == w[1].peak_index) {
        return Err(Error::DuplicateAnnotation(w[0].peak_index));
    }
    Ok(out)
}

pub fn format_annotations(annotations: &[BeatAnnotation]) -> String {
    let mut out = String::with_capacity(annotations.len() * 8);
    for a in annotations {
        let _ = writeln!(out, "{},{}", a.peak_index, a.label);
    }
    out
}

pub fn save_annotations(annotations: &[BeatAnnotation], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_annotations(annotations))?;
    Ok(())
}

/// Checks that every annotation points inside `trace`.
pub fn check_annotations(trace: &EcgTrace, annotations: &[BeatAnnotation]) -> Result<()> {
    match annotations.iter().find(|a| a.peak_index >= trace.len()) {
        Some(a) => Err(Error::InvalidArgument(format!(
            "annotation at {} beyond trace length {}",
            a.peak_index,
            trace.len()
        ))),
        None => Ok(()),
    }
}

/// Parameters of the synthetic ECG generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub bpm: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Standard deviation of the additive Gaussian noise, ADC units.
    pub noise_amp: f64,
    pub seed: u64,
    /// Width (sigma) of the Gaussian R spike, in samples.
    pub spike_sigma: f64,
    pub spike_amplitude: f64,
    /// Every n-th beat is an ectopic `V` beat (wider spike); `None` means all `N`.
    pub ectopic_every: Option<usize>,
}

impl SynthParams {
    pub fn new(bpm: f64, duration_s: f64, sample_rate_hz: f64, noise_amp: f64, seed: u64) -> Self {
        Self {
            bpm,
            duration_s,
            sample_rate_hz,
            noise_amp,
            seed,
            spike_sigma: 5.0,
            spike_amplitude: 1200.0,
            ectopic_every: None,
        }
    }

    /// Samples between adjacent beats.
    pub fn spacing(&self) -> usize {
        (self.sample_rate_hz * 60.0 / self.bpm).round() as usize
    }
}

/// Deterministic synthetic ECG: zero baseline, Gaussian R spikes at exact
/// `spacing()` intervals starting half a spacing in, plus seeded noise.
pub fn synth_trace(params: &SynthParams) -> Result<(EcgTrace, Vec<BeatAnnotation>)> {
    if !(20.0..=300.0).contains(&params.bpm) {
        return Err(Error::InvalidArgument(format!("bpm {} outside [20, 300]", params.bpm)));
    }
    if !(params.duration_s > 0.0) {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }
    if !(params.sample_rate_hz > 0.0) {
        return Err(Error::InvalidArgument("sample rate must be positive".into()));
    }
    if params.noise_amp < 0.0 || !(params.spike_sigma > 0.0) {
        return Err(Error::InvalidArgument("noise and spike width must be non-negative".into()));
    }
    if params.ectopic_every == Some(0) {
        return Err(Error::InvalidArgument("ectopic_every must be at least 1".into()));
    }

    let n = (params.duration_s * params.sample_rate_hz).round() as usize;
    let spacing = params.spacing();
    let mut signal = vec![0.0f64; n];
    let mut annotations = Vec::new();

    let mut beat = 0usize;
    let mut apex = spacing / 2;
    while apex < n {
        let ectopic = params.ectopic_every.is_some_and(|k| (beat + 1) % k == 0);
        let (sigma, amp, label) = if ectopic {
            (params.spike_sigma * 2.5, params.spike_amplitude * 1.25, 'V')
        } else {
            (params.spike_sigma, params.spike_amplitude, 'N')
        };
        let reach = (sigma * 8.0).ceil() as usize;
        let lo = apex.saturating_sub(reach);
        let hi = (apex + reach + 1).min(n);
        for (i, s) in signal.iter_mut().enumerate().take(hi).skip(lo) {
            let z = (i as f64 - apex as f64) / sigma;
            *s += amp * (-0.5 * z * z).exp();
        }
        annotations.push(BeatAnnotation::new(apex, label));
        beat += 1;
        apex += spacing;
    }

    if params.noise_amp > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let normal = Normal::new(0.0, params.noise_amp)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for s in signal.iter_mut() {
            *s += normal.sample(&mut rng);
        }
    }

    let samples = signal
        .iter()
        .map(|v| v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16)
        .collect();
    let trace = EcgTrace::new(
        params.sample_rate_hz,
        samples,
        format!("synth-{}bpm-s{}", params.bpm, params.seed),
    )?;
    Ok((trace, annotations))
}

/// Convenience used by examples and tests: default origin for in-memory parsing.
pub fn memory_origin() -> PathBuf {
    PathBuf::from("<memory>")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<EcgTrace> {
        parse_trace(text, &memory_origin())
    }

    #[test]
    fn trace_count_preserved() {
        let mut text = String::from("sample_rate_hz=330\nrecord_id=r1\n");
        for i in 0..990 {
            text.push_str(&format!("{}\n", i % 100 - 50));
        }
        let t = parse(&text).unwrap();
        assert_eq!(t.sample_rate_hz, 330.0);
        assert_eq!(t.len(), 990);
        assert_eq!(t.record_id, "r1");
    }

    #[test]
    fn empty_data_section() {
        let err = parse("sample_rate_hz=330\nrecord_id=x\n").unwrap_err();
        assert_eq!(err.to_string(), "empty trace");
    }

    #[test]
    fn sixteen_bit_boundary() {
        let err = parse("sample_rate_hz=330\nrecord_id=x\n1\n32768\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
        let ok = parse("sample_rate_hz=330\nrecord_id=x\n-32768\n32767\n").unwrap();
        assert_eq!(ok.samples, vec![-32768, 32767]);
    }

    #[test]
    fn malformed_header_and_samples() {
        assert!(matches!(parse("rate=330\nrecord_id=x\n1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("sample_rate_hz=0\nrecord_id=x\n1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("sample_rate_hz=330\nid=x\n1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse("sample_rate_hz=330\nrecord_id=x\n1\n2.5\n"),
            Err(Error::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn canonical_round_trip() {
        let text = "sample_rate_hz=330\nrecord_id=abc\n1\n-2\n3\n";
        assert_eq!(format_trace(&parse(text).unwrap()), text);
        let text = "sample_rate_hz=360.5\nrecord_id=\n0\n";
        assert_eq!(format_trace(&parse(text).unwrap()), text);
    }

    #[test]
    fn annotations_sorted() {
        let a = parse_annotations("100,N\n300,V\n200,L\n", LabelSet::Nlrav, &memory_origin()).unwrap();
        let idx: Vec<_> = a.iter().map(|a| (a.peak_index, a.label)).collect();
        assert_eq!(idx, vec![(100, 'N'), (200, 'L'), (300, 'V')]);
    }

    #[test]
    fn annotations_unknown_label() {
        let err = parse_annotations("100,X\n", LabelSet::Nlrav, &memory_origin()).unwrap_err();
        assert_eq!(err.to_string(), "unknown label X");
        // S exists only in the AAMI-style alphabet
        assert!(parse_annotations("5,S\n", LabelSet::Nlrav, &memory_origin()).is_err());
        assert!(parse_annotations("5,S\n", LabelSet::Nsvfq, &memory_origin()).is_ok());
    }

    #[test]
    fn annotations_empty_and_duplicates() {
        assert!(parse_annotations("", LabelSet::Nsvfq, &memory_origin()).unwrap().is_empty());
        let err = parse_annotations("5,N\n5,V\n", LabelSet::Nlrav, &memory_origin()).unwrap_err();
        assert!(matches!(err, Error::DuplicateAnnotation(5)));
    }

    #[test]
    fn label_sets() {
        assert_eq!(LabelSet::Nlrav.classes(), ['N', 'L', 'R', 'A', 'V']);
        assert_eq!(LabelSet::Nsvfq.index_of('Q'), Some(4));
        assert_eq!("nsvfq".parse::<LabelSet>().unwrap(), LabelSet::Nsvfq);
    }

    #[test]
    fn synth_60bpm() {
        let (t, a) = synth_trace(&SynthParams::new(60.0, 10.0, 330.0, 0.0, 7)).unwrap();
        assert_eq!(t.len(), 3300);
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[1].peak_index - w[0].peak_index == 330));
        assert!(a.iter().all(|a| a.label == 'N'));
    }

    #[test]
    fn synth_deterministic() {
        let p = SynthParams::new(60.0, 10.0, 330.0, 0.0, 7);
        let a = format_trace(&synth_trace(&p).unwrap().0);
        let b = format_trace(&synth_trace(&p).unwrap().0);
        assert_eq!(a.as_bytes(), b.as_bytes());
        let noisy = SynthParams { noise_amp: 25.0, ..p };
        assert_eq!(synth_trace(&noisy).unwrap().0, synth_trace(&noisy).unwrap().0);
    }

    #[test]
    fn synth_200bpm() {
        let (_, a) = synth_trace(&SynthParams::new(200.0, 3.0, 330.0, 0.0, 1)).unwrap();
        // floor(330 * 60 / 200) = 99
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[1].peak_index - w[0].peak_index == 99));
    }

    #[test]
    fn synth_preconditions() {
        assert!(synth_trace(&SynthParams::new(10.0, 1.0, 330.0, 0.0, 0)).is_err());
        assert!(synth_trace(&SynthParams::new(301.0, 1.0, 330.0, 0.0, 0)).is_err());
        assert!(synth_trace(&SynthParams::new(60.0, 0.0, 330.0, 0.0, 0)).is_err());
    }

    #[test]
    fn synth_ectopic_labels() {
        let p = SynthParams {
            ectopic_every: Some(3),
            ..SynthParams::new(60.0, 10.0, 330.0, 0.0, 0)
        };
        let (_, a) = synth_trace(&p).unwrap();
        let labels: String = a.iter().map(|a| a.label).collect();
        assert_eq!(labels, "NNVNNVNNVN");
    }
}
