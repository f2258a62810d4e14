//! Brute-force reference implementations for quantized inference.

use ecgnode::qcnn::{LayerKind, LayerSpec, QModel, QTensor, QuantParams, Requant};
use ecgnode::trace_io::LabelSet;

#[derive(Debug, Clone)]
pub struct Small {
    pub input_len: usize,
    pub c1: usize,
    pub c2: usize,
    pub fc1: usize,
    pub k1: usize,
    pub s1: usize,
    pub k2: usize,
    pub s2: usize,
    pub pool: (usize, usize),
    pub seed: u64,
}

pub fn out_len(len: usize, k: usize, s: usize) -> Option<usize> {
    (len >= k).then(|| (len - k) / s + 1)
}

impl Small {
    pub fn flat(&self) -> Option<usize> {
        let (pk, ps) = self.pool;
        let l = out_len(self.input_len, self.k1, self.s1)?;
        let l = out_len(l, pk, ps)?;
        let l = out_len(l, self.k2, self.s2)?;
        let l = out_len(l, pk, ps)?;
        Some(l * self.c2)
    }
}

/// Tiny xorshift so weights and parameters follow from one seed.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }
    pub fn i8(&mut self) -> i8 {
        self.next() as i8
    }
    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
    pub fn qp(&mut self) -> QuantParams {
        QuantParams::new(0.01 + self.unit() * 2.0, (self.next() % 256) as i32 - 128).unwrap()
    }
}

pub fn build(s: &Small) -> (QModel, QTensor) {
    let mut r = Lcg(s.seed | 1);
    let mut w = |n: usize| (0..n).map(|_| r.i8()).collect::<Vec<i8>>();
    let (w1, w2, w3, w4) = (
        w(s.c1 * s.k1),
        w(s.c2 * s.c1 * s.k2),
        w(s.fc1 * s.flat().unwrap()),
        w(5 * s.fc1),
    );
    let mut r = Lcg(s.seed.rotate_left(17) | 1);
    let layers = vec![
        LayerSpec::conv1d(1, s.c1, s.k1, s.s1, w1, 0.001 + r.unit() * 0.05, r.qp()),
        LayerSpec::relu(),
        LayerSpec::maxpool1d(s.pool.0, s.pool.1),
        LayerSpec::conv1d(s.c1, s.c2, s.k2, s.s2, w2, 0.001 + r.unit() * 0.05, r.qp()),
        LayerSpec::relu(),
        LayerSpec::maxpool1d(s.pool.0, s.pool.1),
        LayerSpec::fully_connected(s.flat().unwrap(), s.fc1, w3, 0.001 + r.unit() * 0.05, r.qp()),
        LayerSpec::relu(),
        LayerSpec::fully_connected(s.fc1, 5, w4, 0.001 + r.unit() * 0.05, r.qp()),
    ];
    let input_qp = r.qp();
    let name = format!("NLRAV_{}_{}_{}", s.c1, s.c2, s.fc1);
    let model = QModel::new(name, LabelSet::Nlrav, s.input_len, input_qp, layers).unwrap();
    let data = (0..s.input_len).map(|_| r.i8()).collect();
    (model, QTensor::new(1, s.input_len, data, input_qp).unwrap())
}

// ---- scalar integer oracle -------------------------------------------------

pub fn requant_oracle(acc: i128, rq: Requant, zero_point: i32) -> i8 {
    let acc = acc.clamp(i32::MIN as i128, i32::MAX as i128);
    let p = acc * rq.multiplier as i128;
    let d = 1i128 << rq.shift;
    // round half away from zero: floor((2|p| + d) / 2d)
    let mag = (2 * p.abs() + d) / (2 * d);
    let q = if p < 0 { -mag } else { mag } + zero_point as i128;
    q.clamp(-128, 127) as i8
}

pub fn oracle(model: &QModel, input: &QTensor) -> [i8; 5] {
    // x[c][t]
    let mut x: Vec<Vec<i8>> = vec![input.data.clone()];
    for l in &model.layers {
        let zin = l.input_qparams.zero_point as i128;
        let zout = l.output_qparams.zero_point;
        x = match l.kind {
            LayerKind::Conv1d => {
                let len = x[0].len();
                let n = (len - l.kernel) / l.stride + 1;
                (0..l.out_channels)
                    .map(|o| {
                        (0..n)
                            .map(|t| {
                                let mut acc = 0i128;
                                for (c, row) in x.iter().enumerate() {
                                    for j in 0..l.kernel {
                                        let wv = l.weights[o * l.in_channels * l.kernel + c * l.kernel + j] as i128;
                                        acc += (row[t * l.stride + j] as i128 - zin) * wv;
                                    }
                                }
                                requant_oracle(acc, l.requant.unwrap(), zout)
                            })
                            .collect()
                    })
                    .collect()
            }
            LayerKind::FullyConnected => {
                let flat: Vec<i8> = x.concat();
                vec![(0..l.out_channels)
                    .map(|o| {
                        let acc: i128 = flat
                            .iter()
                            .enumerate()
                            .map(|(i, &v)| (v as i128 - zin) * l.weights[o * flat.len() + i] as i128)
                            .sum();
                        requant_oracle(acc, l.requant.unwrap(), zout)
                    })
                    .collect()]
            }
            LayerKind::Relu => x
                .iter()
                .map(|row| row.iter().map(|&v| if (v as i128) < zin { zin as i8 } else { v }).collect())
                .collect(),
            LayerKind::Maxpool1d => x
                .iter()
                .map(|row| {
                    let n = (row.len() - l.kernel) / l.stride + 1;
                    (0..n)
                        .map(|t| *row[t * l.stride..t * l.stride + l.kernel].iter().max().unwrap())
                        .collect()
                })
                .collect(),
        };
    }
    x.concat().try_into().unwrap()
}

/// Direct summation over dequantized weights, written independently of
/// `infer_float`: explicit per-channel buffers, pooling by fold.
pub fn float_oracle(model: &QModel, frame: &[i16]) -> [f64; 5] {
    let mut x: Vec<Vec<f64>> = vec![frame.iter().map(|&v| v as f64).collect()];
    for l in &model.layers {
        x = match l.kind {
            LayerKind::Conv1d => {
                let n = (x[0].len() - l.kernel) / l.stride + 1;
                (0..l.out_channels)
                    .map(|o| {
                        (0..n)
                            .map(|t| {
                                x.iter()
                                    .enumerate()
                                    .flat_map(|(c, row)| {
                                        (0..l.kernel).map(move |j| (c, j, row[t * l.stride + j]))
                                    })
                                    .map(|(c, j, v)| {
                                        v * l.weights[(o * l.in_channels + c) * l.kernel + j] as f64 * l.weight_scale
                                    })
                                    .sum()
                            })
                            .collect()
                    })
                    .collect()
            }
            LayerKind::FullyConnected => {
                let flat = x.concat();
                vec![(0..l.out_channels)
                    .map(|o| {
                        flat.iter()
                            .zip(&l.weights[o * flat.len()..(o + 1) * flat.len()])
                            .map(|(v, &w)| v * w as f64 * l.weight_scale)
                            .sum()
                    })
                    .collect()]
            }
            LayerKind::Relu => x.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect(),
            LayerKind::Maxpool1d => x
                .iter()
                .map(|row| {
                    row.windows(l.kernel)
                        .step_by(l.stride)
                        .map(|w| w.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                        .collect()
                })
                .collect(),
        };
    }
    x.concat().try_into().unwrap()
}

impl Small {
    /// A random valid small model description drawn from `seed`.
    pub fn random(seed: u64) -> Self {
        let mut r = Lcg(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1);
        loop {
            let mut pick = |lo: u64, hi: u64| (lo + r.next() % (hi - lo + 1)) as usize;
            let s = Small {
                input_len: pick(6, 16),
                c1: pick(1, 4),
                c2: pick(1, 4),
                fc1: pick(1, 8),
                k1: pick(1, 3),
                s1: pick(1, 2),
                k2: pick(1, 3),
                s2: pick(1, 2),
                pool: (pick(1, 2), pick(1, 2)),
                seed: r.next(),
            };
            if s.flat().is_some() {
                return s;
            }
        }
    }
}
