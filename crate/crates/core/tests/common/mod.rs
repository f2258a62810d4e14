//! Shared helpers for integration tests: fixture models and synthetic frames.
#![allow(dead_code)]

pub mod netsim;
pub mod oracle;

use std::path::PathBuf;

use ecgnode::qcnn::{infer_float_layers, LayerSpec, QModel, QuantParams, WeightEncoding, FRAME_LEN};
use ecgnode::trace_io::{synth_trace, EcgTrace, LabelSet, SynthParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const KERNEL: usize = 7;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn load_fixture(name: &str) -> QModel {
    QModel::load(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

/// Committed fixtures: file name, generator.
pub fn fixtures() -> Vec<(&'static str, QModel, WeightEncoding)> {
    vec![
        (
            "nlrav_4_4_100.json",
            calibrated_model(LabelSet::Nlrav, 4, 4, 100, 1, Style::Random),
            WeightEncoding::Integers,
        ),
        (
            "nsvfq_20_20_100.json",
            calibrated_model(LabelSet::Nsvfq, 20, 20, 100, 2, Style::Random),
            WeightEncoding::Base64,
        ),
        (
            "nlrav_4_4_100_normal.json",
            calibrated_model(LabelSet::Nlrav, 4, 4, 100, 3, Style::NormalOnly),
            WeightEncoding::Integers,
        ),
    ]
}

pub fn trace(bpm: f64, secs: f64, noise: f64, seed: u64) -> EcgTrace {
    synth_trace(&SynthParams::new(bpm, secs, 330.0, noise, seed)).unwrap().0
}

/// ECG-like frames: windows of noisy synthetic traces at random rates,
/// centred near a beat with up to ±48 samples of jitter.
pub fn ecg_frames(seed: u64, n: usize) -> Vec<Vec<i16>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut p = SynthParams::new(
            rng.random_range(40.0..180.0),
            6.0,
            330.0,
            rng.random_range(0.0..80.0),
            rng.random(),
        );
        p.spike_amplitude = rng.random_range(500.0..1800.0);
        p.spike_sigma = rng.random_range(3.0..9.0);
        if rng.random_bool(0.3) {
            p.ectopic_every = Some(rng.random_range(2..5));
        }
        let (t, anns) = synth_trace(&p).unwrap();
        for a in anns.iter().skip(1).take(4) {
            let c = a.peak_index as i64 + rng.random_range(-48..=48);
            out.push(ecgnode::qcnn::extract_window(&t.samples, c, FRAME_LEN));
        }
    }
    out.truncate(n);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    /// Gaussian int8 weights.
    Random,
    /// Non-negative features and a final layer that favours class 0.
    NormalOnly,
}

fn weights(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, style: Style, rows: Option<usize>) -> (Vec<i8>, f64) {
    let normal = Normal::new(0.0f64, 40.0).unwrap();
    let w = (0..n)
        .map(|i| {
            let v = normal.sample(rng).round().clamp(-127.0, 127.0) as i8;
            match (style, rows) {
                (Style::Random, _) => v,
                (Style::NormalOnly, Some(per_row)) if i / per_row == 0 => v.unsigned_abs().max(1) as i8,
                (Style::NormalOnly, Some(_)) => -(v.unsigned_abs().max(1) as i8),
                (Style::NormalOnly, None) => v.unsigned_abs().clamp(1, 127) as i8,
            }
        })
        .collect();
    (w, (2.0 / fan_in as f64).sqrt() / 40.0)
}

/// Low-frequency first-layer kernels: a windowed cosine per channel with
/// random frequency and phase.
fn smooth_kernels(rng: &mut ChaCha8Rng, c1: usize) -> (Vec<i8>, f64) {
    let mut w = Vec::with_capacity(c1 * KERNEL);
    for _ in 0..c1 {
        let f = rng.random_range(0.0..0.25);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for t in 0..KERNEL {
            let x = t as f64 - (KERNEL / 2) as f64;
            let hann = 0.5 + 0.5 * (std::f64::consts::PI * x / (KERNEL / 2 + 1) as f64).cos();
            w.push((100.0 * hann * (std::f64::consts::TAU * f * x + phase).cos()).round() as i8);
        }
    }
    (w, (2.0 / KERNEL as f64).sqrt() / 40.0)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Final layer from spherical k-means over hidden features, one centroid per
/// class, so the head separates the modes of the data.
fn centroid_head(rng: &mut ChaCha8Rng, feats: &[Vec<f64>]) -> (Vec<i8>, f64) {
    let pts: Vec<Vec<f64>> = feats.iter().map(|f| unit(f)).collect();
    let dim = pts[0].len();
    let mut cents: Vec<Vec<f64>> = (0..5).map(|_| pts[rng.random_range(0..pts.len())].clone()).collect();
    for _ in 0..50 {
        let mut sums = vec![vec![0.0; dim]; 5];
        for p in &pts {
            let k = (0..5)
                .max_by(|&a, &b| dot(p, &cents[a]).total_cmp(&dot(p, &cents[b])))
                .unwrap();
            sums[k].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for (c, s) in cents.iter_mut().zip(&sums) {
            if s.iter().any(|&x| x != 0.0) {
                *c = unit(s);
            }
        }
    }
    let peak = cents.iter().flatten().fold(0f64, |m, x| m.max(x.abs()));
    let w = cents.iter().flatten().map(|x| (x / peak * 127.0).round() as i8).collect();
    (w, (2.0 / dim as f64).sqrt() / 40.0)
}

fn layers(params: &[(Vec<i8>, f64)], c1: usize, c2: usize, fc1: usize, qps: [QuantParams; 4]) -> Vec<LayerSpec> {
    let flat = c2 * ((((FRAME_LEN - KERNEL + 1) / 2) - KERNEL + 1) / 2);
    vec![
        LayerSpec::conv1d(1, c1, KERNEL, 1, params[0].0.clone(), params[0].1, qps[0]),
        LayerSpec::relu(),
        LayerSpec::maxpool1d(2, 2),
        LayerSpec::conv1d(c1, c2, KERNEL, 1, params[1].0.clone(), params[1].1, qps[1]),
        LayerSpec::relu(),
        LayerSpec::maxpool1d(2, 2),
        LayerSpec::fully_connected(flat, fc1, params[2].0.clone(), params[2].1, qps[2]),
        LayerSpec::relu(),
        LayerSpec::fully_connected(fc1, 5, params[3].0.clone(), params[3].1, qps[3]),
    ]
}

/// Min/max calibration of a random model on synthetic ECG frames. Layers
/// followed by a ReLU are calibrated on `[0, max]`.
pub fn calibrated_model(labels: LabelSet, c1: usize, c2: usize, fc1: usize, seed: u64, style: Style) -> QModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat = c2 * 45;
    let mut params = vec![
        match style {
            Style::Random => smooth_kernels(&mut rng, c1),
            Style::NormalOnly => weights(&mut rng, c1 * KERNEL, KERNEL, style, None),
        },
        weights(&mut rng, c2 * c1 * KERNEL, c1 * KERNEL, style, None),
        weights(&mut rng, fc1 * flat, flat, style, None),
        weights(&mut rng, 5 * fc1, fc1, style, Some(fc1)),
    ];
    let unit = QuantParams::new(1.0, 0).unwrap();
    let name = format!("{labels}_{c1}_{c2}_{fc1}");
    let frames = ecg_frames(seed ^ 0xCA11_B4A7, 400);
    let mut probe = QModel::new(&name, labels, FRAME_LEN, unit, layers(&params, c1, c2, fc1, [unit; 4])).unwrap();
    if style == Style::Random {
        let feats: Vec<Vec<f64>> = frames
            .iter()
            .map(|f| infer_float_layers(&probe, f).unwrap().swap_remove(7))
            .collect();
        params[3] = centroid_head(&mut rng, &feats);
        probe = QModel::new(&name, labels, FRAME_LEN, unit, layers(&params, c1, c2, fc1, [unit; 4])).unwrap();
    }

    let mut in_max = 0f64;
    let mut lo = [0f64; 4];
    let mut hi = [0f64; 4];
    for f in &frames {
        in_max = f.iter().fold(in_max, |m, &v| m.max((v as f64).abs()));
        let outs = infer_float_layers(&probe, f).unwrap();
        for (k, &li) in [0usize, 3, 6, 8].iter().enumerate() {
            for &v in &outs[li] {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
    }
    let relu_qp = |max: f64| QuantParams::new((max / 255.0).max(1e-12), -128).unwrap();
    let range = hi[3] - lo[3];
    let s = (range / 255.0).max(1e-12);
    let z = (-128.0 - lo[3] / s).round().clamp(-128.0, 127.0) as i32;
    let qps = [
        relu_qp(hi[0]),
        relu_qp(hi[1]),
        relu_qp(hi[2]),
        QuantParams::new(s, z).unwrap(),
    ];
    let input = QuantParams::new((in_max / 127.0).max(1e-12), 0).unwrap();
    QModel::new(name, labels, FRAME_LEN, input, layers(&params, c1, c2, fc1, qps)).unwrap()
}
