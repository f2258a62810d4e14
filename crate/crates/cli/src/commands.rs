use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ecgnode::adam::{self, decide, estimate_utilization, AdamInputs, GatewayCommand};
use ecgnode::dsp::{detect, score as score_events, DetectorScore};
use ecgnode::power::{battery_life_days, ledger_from_sim, mode_power, NodeConfig};
use ecgnode::procnet::{
    format_packet_index, simulate as run_sim, write_packet_log, OperatingMode, SimConfig, SimReport,
};
use ecgnode::qcnn::{classify_run, BeatClassifier, ConfusionMatrix, Metrics, QModel};
use ecgnode::trace_io::{
    check_annotations, load_annotations, load_trace, save_annotations, save_trace, synth_trace, EcgTrace, LabelSet,
    SynthParams,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::FileConfig;
use crate::{PowerArgs, ScoreArgs, SimulateArgs, SynthArgs, Usage};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summary types serialize");
    s.push('\n');
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn load_traces(paths: &[PathBuf]) -> Result<Vec<EcgTrace>> {
    let traces: Vec<EcgTrace> = paths
        .par_iter()
        .map(|p| load_trace(p).with_context(|| format!("loading trace {}", p.display())))
        .collect::<Result<_>>()?;
    let mut seen = BTreeSet::new();
    for t in &traces {
        if !seen.insert(t.record_id.as_str()) {
            return Err(Usage(format!("record id {:?} appears more than once", t.record_id)).into());
        }
    }
    Ok(traces)
}

fn load_model(path: &Path) -> Result<QModel> {
    QModel::load(path).with_context(|| format!("loading weights {}", path.display()))
}

pub fn synth(cfg: &FileConfig, a: &SynthArgs) -> Result<()> {
    if a.record.is_empty() || a.record.contains(['/', '\\']) {
        return Err(Usage(format!("invalid record name {:?}", a.record)).into());
    }
    let mut p = SynthParams::new(a.bpm, a.duration, a.rate, a.noise, a.seed.unwrap_or(cfg.seed));
    p.ectopic_every = a.ectopic_every;
    let (mut trace, anns) = synth_trace(&p)?;
    trace.record_id = a.record.clone();
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_trace(&trace, a.out.join(format!("{}.trace", a.record)))?;
    save_annotations(&anns, a.out.join(format!("{}.ann", a.record)))?;
    println!("{}: {} samples, {} beats", a.record, trace.len(), anns.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunSummary {
    record: String,
    duration_s: f64,
    initial_mode: OperatingMode,
    final_mode: OperatingMode,
    final_freq_hz: f64,
    avg_power_w: Option<f64>,
    energy_j: f64,
    battery_days: Option<f64>,
    packets: usize,
    packet_bytes: usize,
    detected_peaks: usize,
    classifications: BTreeMap<String, usize>,
    mode_changes: usize,
    freq_changes: usize,
    dropped_samples: u64,
    saturated_packets: u64,
    overload_decisions: u64,
    mode_time_s: BTreeMap<OperatingMode, f64>,
}

fn needs_cnn(cfg: &SimConfig, script: &[(f64, GatewayCommand)]) -> bool {
    cfg.initial_mode == OperatingMode::CnnProcessing
        || script.iter().any(|(_, c)| {
            matches!(
                c,
                GatewayCommand::SetMode {
                    mode: OperatingMode::CnnProcessing
                }
            )
        })
}

fn cnn_model_name(node: &NodeConfig, flag: Option<&str>, model: Option<&QModel>) -> String {
    if let Some(name) = flag {
        return name.to_string();
    }
    match model.map(QModel::topology_name) {
        Some(t) if node.cnn_models.iter().any(|c| c.name == t) => t,
        _ => node.cnn_model.clone(),
    }
}

fn summarize(report: &SimReport, cfg: &SimConfig, file: &FileConfig, record: &str, labels: Option<LabelSet>) -> Result<RunSummary> {
    let ledger = ledger_from_sim(&report.log, &cfg.node)?;
    let avg = ledger.average_power_w();
    let mut classifications = BTreeMap::new();
    if let Some(labels) = labels {
        for c in labels.classes() {
            classifications.insert(c.to_string(), 0);
        }
        for &(_, k) in &report.classifications {
            let label = labels.label(k).map_or_else(|| k.to_string(), String::from);
            *classifications.entry(label).or_insert(0) += 1;
        }
    }
    Ok(RunSummary {
        record: record.to_string(),
        duration_s: ledger.duration_s,
        initial_mode: cfg.initial_mode,
        final_mode: report.final_mode,
        final_freq_hz: report.final_freq_hz,
        avg_power_w: avg,
        energy_j: ledger.total_j(),
        battery_days: avg.map(|w| battery_life_days(w, &file.battery)).transpose()?,
        packets: report.packets.len(),
        packet_bytes: write_packet_log(&report.packets).len() - 2 * report.packets.len(),
        detected_peaks: report.detected_peaks.len(),
        classifications,
        mode_changes: report.log.count("mode_change"),
        freq_changes: report.log.count("freq_change"),
        dropped_samples: report.dropped_samples,
        saturated_packets: report.saturated_packets,
        overload_decisions: report.overload_decisions,
        mode_time_s: OperatingMode::ALL
            .iter()
            .map(|&m| (m, ledger.mode_time_s[m.index()]))
            .collect(),
    })
}

fn classifications_csv(report: &SimReport, labels: Option<LabelSet>) -> String {
    let mut out = String::from("peak_index,class,label\n");
    for &(peak, k) in &report.classifications {
        let label = labels.and_then(|l| l.label(k)).map(String::from).unwrap_or_default();
        let _ = writeln!(out, "{peak},{k},{label}");
    }
    out
}

pub fn simulate(file: &FileConfig, a: &SimulateArgs) -> Result<()> {
    let mut cfg = file.sim_config()?;
    let script = match &a.script {
        Some(p) => adam::load_script(p).with_context(|| format!("loading script {}", p.display()))?,
        None => Vec::new(),
    };
    if let Some(mode) = a.mode {
        cfg.initial_mode = mode;
    }
    if a.always_send {
        cfg.policy.always_send = true;
    }
    if let Some(d) = a.duration {
        if !(d > 0.0) {
            return Err(Usage(format!("duration must be positive, got {d}")).into());
        }
    }
    let model = a.weights.as_deref().map(load_model).transpose()?;
    if needs_cnn(&cfg, &script) && model.is_none() {
        return Err(Usage("cnn mode needs --weights".into()).into());
    }
    cfg.node.cnn_model = cnn_model_name(&cfg.node, a.cnn_model.as_deref(), model.as_ref());
    cfg.validate()?;

    let traces = load_traces(&a.traces)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let labels = model.as_ref().map(|m| m.label_set);
    let mut summaries: Vec<RunSummary> = traces
        .par_iter()
        .map(|trace| {
            let id = trace.record_id.as_str();
            let classifier = model.as_ref().map(|m| m as &dyn BeatClassifier);
            let report = run_sim(&cfg, trace, classifier, &script, a.duration)
                .with_context(|| format!("simulating {id}"))?;
            let out = |ext: &str| a.out.join(format!("{id}.{ext}"));
            write(&out("events.csv"), report.log.to_csv())?;
            write(&out("packets.bin"), write_packet_log(&report.packets))?;
            write(&out("packets.csv"), format_packet_index(&report.packets))?;
            write(&out("classifications.csv"), classifications_csv(&report, labels))?;
            let ledger = ledger_from_sim(&report.log, &cfg.node)?;
            write(&out("energy.csv"), ledger.to_csv())?;
            let summary = summarize(&report, &cfg, file, id, labels)?;
            write(&out("summary.json"), json(&summary))?;
            Ok(summary)
        })
        .collect::<Result<_>>()?;
    summaries.sort_by(|x, y| x.record.cmp(&y.record));
    write(&a.out.join("summary.json"), json(&summaries))?;
    println!("record,mode,avg_power_w,packets,detected_peaks");
    for s in &summaries {
        println!(
            "{},{},{},{},{}",
            s.record,
            s.final_mode,
            opt(s.avg_power_w),
            s.packets,
            s.detected_peaks
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RecordScore {
    record: String,
    detector: DetectorScore,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<Metrics>,
    #[serde(skip)]
    confusion: Option<ConfusionMatrix>,
}

#[derive(Debug, Serialize)]
struct ScoreReport {
    label_set: Option<LabelSet>,
    tolerance_samples: Option<usize>,
    detector: DetectorScore,
    metrics: Option<Metrics>,
    records: Vec<RecordScore>,
}

fn annotation_paths(a: &ScoreArgs) -> Result<Vec<PathBuf>> {
    if a.annotations.is_empty() {
        return Ok(a.traces.iter().map(|t| t.with_extension("ann")).collect());
    }
    if a.annotations.len() != a.traces.len() {
        return Err(Usage(format!(
            "{} annotation files for {} traces",
            a.annotations.len(),
            a.traces.len()
        ))
        .into());
    }
    Ok(a.annotations.clone())
}

fn detector_csv(report: &ScoreReport) -> String {
    let mut out = String::from("record,tp,fp,fn,tpr,ppv\n");
    let rows = report
        .records
        .iter()
        .map(|r| (r.record.as_str(), &r.detector))
        .chain([("all", &report.detector)]);
    for (name, d) in rows {
        let _ = writeln!(out, "{name},{},{},{},{},{}", d.tp, d.fp, d.fn_, opt(d.tpr), opt(d.ppv));
    }
    out
}

fn from_counts(path: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cm = ConfusionMatrix::from_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    let report = ScoreReport {
        label_set: Some(cm.label_set),
        tolerance_samples: None,
        detector: cm.detector_score(),
        metrics: Some(cm.metrics()),
        records: Vec::new(),
    };
    let body = json(&report);
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write(&dir.join("metrics.json"), &body)?;
    }
    print!("{body}");
    Ok(())
}

pub fn score(file: &FileConfig, a: &ScoreArgs) -> Result<()> {
    if let Some(path) = &a.from_counts {
        return from_counts(path, a.out.as_deref());
    }
    let mut det = file.detector.clone();
    if let Some(t) = a.threshold {
        det.threshold = crate::config::Threshold::Fixed(t);
    }
    if let Some(r) = a.refractory {
        det.refractory_s = r;
    }
    let tolerance = a.tolerance.unwrap_or(det.tolerance_samples);
    det.rule()?;

    let model = a.weights.as_deref().map(load_model).transpose()?;
    let labels: LabelSet = match &model {
        Some(m) => m.label_set,
        None => a.labels.parse().map_err(|e: ecgnode::Error| Usage(e.to_string()))?,
    };
    let ann_paths = annotation_paths(a)?;
    for p in &ann_paths {
        if !p.is_file() {
            return Err(ecgnode::Error::InvalidArgument(format!("missing annotations {}", p.display())).into());
        }
    }
    let traces = load_traces(&a.traces)?;

    let mut records: Vec<RecordScore> = traces
        .par_iter()
        .zip(&ann_paths)
        .map(|(trace, ann_path)| {
            let id = trace.record_id.clone();
            let anns = load_annotations(ann_path, labels)
                .with_context(|| format!("loading annotations {} under {labels}", ann_path.display()))?;
            check_annotations(trace, &anns)?;
            let cfg = det.config(trace.sample_rate_hz)?;
            let (detector, confusion) = match &model {
                Some(m) => {
                    let cm = classify_run(m, trace, &anns, &cfg, tolerance).with_context(|| format!("scoring {id}"))?;
                    (cm.detector_score(), Some(cm))
                }
                None => (score_events(&detect(&cfg, trace)?, &anns, tolerance), None),
            };
            Ok(RecordScore {
                record: id,
                detector,
                metrics: confusion.as_ref().map(ConfusionMatrix::metrics),
                confusion,
            })
        })
        .collect::<Result<_>>()?;
    records.sort_by(|x, y| x.record.cmp(&y.record));

    let detector = records
        .iter()
        .fold(DetectorScore::from_counts(0, 0, 0), |acc, r| acc.merge(&r.detector));
    let mut total = model.as_ref().map(|_| ConfusionMatrix::new(labels));
    if let Some(total) = &mut total {
        for r in &records {
            if let Some(cm) = &r.confusion {
                total.merge(cm)?;
            }
        }
    }
    let report = ScoreReport {
        label_set: model.as_ref().map(|_| labels),
        tolerance_samples: Some(tolerance),
        detector,
        metrics: total.as_ref().map(ConfusionMatrix::metrics),
        records,
    };

    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write(&dir.join("detector.csv"), detector_csv(&report))?;
        if let Some(total) = &total {
            write(&dir.join("confusion.csv"), total.to_csv())?;
            for r in &report.records {
                if let Some(cm) = &r.confusion {
                    write(&dir.join(format!("{}.confusion.csv", r.record)), cm.to_csv())?;
                }
            }
        }
        write(&dir.join("metrics.json"), json(&report))?;
    }
    print!("{}", detector_csv(&report));
    if let Some(acc) = report.metrics.as_ref().and_then(|m| m.acc_pipeline) {
        println!("acc_pipeline,{acc}");
    }
    Ok(())
}

pub fn power(file: &FileConfig, a: &PowerArgs) -> Result<()> {
    let mut node = file.node.clone();
    if let Some(m) = &a.model {
        node.cnn_model = m.clone();
    }
    let fixed = match a.freq.as_str() {
        "auto" => None,
        f => Some(
            f.parse::<f64>()
                .map_err(|_| Usage(format!("--freq must be a number of Hz or \"auto\", got {f:?}")))?,
        ),
    };
    if !(a.send_rate >= 0.0) {
        return Err(Usage(format!("--send-rate must be non-negative, got {}", a.send_rate)).into());
    }
    println!("mode,bpm,model,freq_hz,utilization,overload,power_w,battery_days");
    for &mode in &a.modes {
        for &bpm in &a.bpms {
            let (freq, overload) = match fixed {
                Some(f) => (f, false),
                None => {
                    let d = decide(
                        &AdamInputs {
                            pending_command: None,
                            observed_bpm: bpm,
                            battery_level: 1.0,
                            current_mode: mode,
                            current_freq_hz: file.adam.raw_mode_pin_hz,
                        },
                        &file.adam,
                        &node,
                    )?;
                    (d.freq_hz, d.overload)
                }
            };
            let w = mode_power(mode, bpm, a.send_rate, &node, freq)?;
            let util = estimate_utilization(mode, bpm, &node, freq)?;
            let model = if mode == OperatingMode::CnnProcessing {
                node.cnn_model.as_str()
            } else {
                "-"
            };
            println!(
                "{mode},{bpm},{model},{freq},{util:.4},{overload},{w:.6e},{:.3}",
                battery_life_days(w, &file.battery)?
            );
        }
    }
    Ok(())
}
