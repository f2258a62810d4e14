use std::fmt::Write as _;

use serde::Serialize;

use super::frames::{extract_window, quantize_frame};
use super::infer::infer_quant;
use super::model::QModel;
use crate::dsp::{detect, match_outcomes, DetectorConfig, DetectorScore};
use crate::trace_io::{BeatAnnotation, EcgTrace, LabelSet};
use crate::{Error, Result};

/// Anything that maps a raw frame to a class index of its label set.
pub trait BeatClassifier {
    fn label_set(&self) -> LabelSet;
    fn frame_len(&self) -> usize;
    fn classify(&self, frame: &[i16]) -> Result<usize>;
}

impl BeatClassifier for QModel {
    fn label_set(&self) -> LabelSet {
        self.label_set
    }

    fn frame_len(&self) -> usize {
        self.input_len
    }

    fn classify(&self, frame: &[i16]) -> Result<usize> {
        Ok(infer_quant(self, &quantize_frame(frame, self.input_qparams))?.class)
    }
}

/// Post-deployment confusion matrix: `counts[predicted][true]` over the
/// detector's true positives, plus the detector's misses and false alarms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub label_set: LabelSet,
    pub counts: [[u64; 5]; 5],
    pub detector_fp: u64,
    pub detector_fn: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// `diagonal / (sum + detector_fp + detector_fn)`.
    pub acc_pipeline: Option<f64>,
    /// Per true class: `counts[j][j] / column j`.
    pub sensitivity: [Option<f64>; 5],
    /// Per predicted class: `counts[i][i] / row i`.
    pub precision: [Option<f64>; 5],
    pub macro_sensitivity: Option<f64>,
    pub macro_precision: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

impl ConfusionMatrix {
    pub fn new(label_set: LabelSet) -> Self {
        Self {
            label_set,
            counts: [[0; 5]; 5],
            detector_fp: 0,
            detector_fn: 0,
        }
    }

    pub fn from_counts(label_set: LabelSet, counts: [[u64; 5]; 5], detector_fp: u64, detector_fn: u64) -> Self {
        Self {
            label_set,
            counts,
            detector_fp,
            detector_fn,
        }
    }

    pub fn record(&mut self, predicted: usize, truth: usize) {
        self.counts[predicted][truth] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..5).map(|i| self.counts[i][i]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.label_set != self.label_set {
            return Err(Error::InvalidArgument(format!(
                "cannot merge {} and {} matrices",
                self.label_set, other.label_set
            )));
        }
        for i in 0..5 {
            for j in 0..5 {
                self.counts[i][j] += other.counts[i][j];
            }
        }
        self.detector_fp += other.detector_fp;
        self.detector_fn += other.detector_fn;
        Ok(())
    }

    /// Detector counts implied by the matrix (every classified beat is a TP).
    pub fn detector_score(&self) -> DetectorScore {
        DetectorScore::from_counts(
            self.total() as usize,
            self.detector_fp as usize,
            self.detector_fn as usize,
        )
    }

    pub fn metrics(&self) -> Metrics {
        let col = |j: usize| (0..5).map(|i| self.counts[i][j]).sum::<u64>();
        let row = |i: usize| self.counts[i].iter().sum::<u64>();
        let sensitivity: [Option<f64>; 5] = std::array::from_fn(|j| ratio(self.counts[j][j], col(j)));
        let precision: [Option<f64>; 5] = std::array::from_fn(|i| ratio(self.counts[i][i], row(i)));
        Metrics {
            acc_pipeline: ratio(self.diagonal(), self.total() + self.detector_fp + self.detector_fn),
            macro_sensitivity: mean_defined(&sensitivity),
            macro_precision: mean_defined(&precision),
            sensitivity,
            precision,
        }
    }

    /// CSV: header `predicted\true,<classes>`, five count rows, then `fp` and
    /// `fn` footer rows.
    pub fn to_csv(&self) -> String {
        let classes = self.label_set.classes();
        let mut out = String::from("predicted\\true");
        for c in classes {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (i, c) in classes.iter().enumerate() {
            let _ = write!(out, "{c}");
            for v in self.counts[i] {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "fp,{}", self.detector_fp);
        let _ = writeln!(out, "fn,{}", self.detector_fn);
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("confusion matrix csv: {m}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let classes: String = header
            .split(',')
            .skip(1)
            .map(|c| c.trim())
            .collect::<Vec<_>>()
            .concat();
        let label_set: LabelSet = classes.parse()?;
        let mut m = Self::new(label_set);
        for (i, c) in label_set.classes().iter().enumerate() {
            let line = lines.next().ok_or_else(|| bad("missing row"))?;
            let mut cells = line.split(',').map(str::trim);
            if cells.next() != Some(c.to_string().as_str()) {
                return Err(bad(&format!("row {} should be labelled {c}", i + 1)));
            }
            for j in 0..5 {
                m.counts[i][j] = cells
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(&format!("bad count in row {c}")))?;
            }
        }
        for _ in 0..2 {
            let line = lines.next().ok_or_else(|| bad("missing fp/fn footer"))?;
            let (key, v) = line.split_once(',').ok_or_else(|| bad("bad footer"))?;
            let v: u64 = v.trim().parse().map_err(|_| bad("bad footer count"))?;
            match key.trim() {
                "fp" => m.detector_fp = v,
                "fn" => m.detector_fn = v,
                k => return Err(bad(&format!("unknown footer {k}"))),
            }
        }
        Ok(m)
    }
}

/// Detects peaks, matches them to the annotations, then classifies each true
/// positive on the frame centred at the *detected* index.
pub fn classify_run<C: BeatClassifier + ?Sized>(
    classifier: &C,
    trace: &EcgTrace,
    annotations: &[BeatAnnotation],
    detector: &DetectorConfig,
    tolerance: usize,
) -> Result<ConfusionMatrix> {
    let labels = classifier.label_set();
    let truth: Vec<usize> = annotations
        .iter()
        .map(|a| labels.index_of(a.label).ok_or(Error::UnknownLabel(a.label)))
        .collect::<Result<_>>()?;
    let mut cm = ConfusionMatrix::new(labels);
    if trace.is_empty() {
        cm.detector_fn = annotations.len() as u64;
        return Ok(cm);
    }
    let events = detect(detector, trace)?;
    let matching = match_outcomes(&events, annotations, tolerance);
    for tp in &matching.tp {
        let center = events[tp.event].peak_index as i64;
        let frame = extract_window(&trace.samples, center, classifier.frame_len());
        let predicted = classifier.classify(&frame)?;
        cm.record(predicted, truth[tp.annotation]);
    }
    cm.detector_fp = matching.fp.len() as u64;
    cm.detector_fn = matching.fn_.len() as u64;
    Ok(cm)
}
