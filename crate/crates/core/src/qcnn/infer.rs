use super::model::{LayerKind, LayerSpec, QModel};
use super::quant::QTensor;
use crate::trace_io::LabelSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantOutput {
    pub class: usize,
    pub outputs: [i8; LabelSet::NUM_CLASSES],
}

/// Index of the maximum, lowest index on ties.
pub fn argmax_lowest<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn sat32(acc: i64) -> i32 {
    acc.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

fn conv_q(layer: &LayerSpec, x: &[i8], in_len: usize) -> Vec<i8> {
    let rq = layer.requant.expect("conv layer has requant");
    let z_in = layer.input_qparams.zero_point;
    let z_out = layer.output_qparams.zero_point;
    let (out_ch, out_len) = layer.output_shape;
    let k = layer.kernel;
    let mut out = Vec::with_capacity(out_ch * out_len);
    for oc in 0..out_ch {
        let w_oc = &layer.weights[oc * layer.in_channels * k..(oc + 1) * layer.in_channels * k];
        for t in 0..out_len {
            let start = t * layer.stride;
            let mut acc: i64 = 0;
            for ic in 0..layer.in_channels {
                let xs = &x[ic * in_len + start..ic * in_len + start + k];
                let ws = &w_oc[ic * k..(ic + 1) * k];
                acc += xs
                    .iter()
                    .zip(ws)
                    .map(|(&xv, &wv)| (xv as i32 - z_in) as i64 * wv as i64)
                    .sum::<i64>();
            }
            out.push(rq.apply(sat32(acc), z_out));
        }
    }
    out
}

fn fc_q(layer: &LayerSpec, x: &[i8]) -> Vec<i8> {
    let rq = layer.requant.expect("fc layer has requant");
    let z_in = layer.input_qparams.zero_point;
    let z_out = layer.output_qparams.zero_point;
    layer
        .weights
        .chunks_exact(layer.in_channels)
        .map(|row| {
            let acc: i64 = x
                .iter()
                .zip(row)
                .map(|(&xv, &wv)| (xv as i32 - z_in) as i64 * wv as i64)
                .sum();
            rq.apply(sat32(acc), z_out)
        })
        .collect()
}

fn pool<T: PartialOrd + Copy>(x: &[T], channels: usize, in_len: usize, kernel: usize, stride: usize, out_len: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(channels * out_len);
    for c in 0..channels {
        let row = &x[c * in_len..(c + 1) * in_len];
        for t in 0..out_len {
            let win = &row[t * stride..t * stride + kernel];
            let mut m = win[0];
            for &v in &win[1..] {
                if v > m {
                    m = v;
                }
            }
            out.push(m);
        }
    }
    out
}

/// Integer-only inference. Bit-exact: no floating point is touched.
pub fn infer_quant(model: &QModel, input: &QTensor) -> Result<QuantOutput> {
    if input.channels != 1 || input.length != model.input_len {
        return Err(Error::Shape(format!(
            "model expects 1x{}, got {}x{}",
            model.input_len, input.channels, input.length
        )));
    }
    if input.qparams != model.input_qparams {
        return Err(Error::Shape(format!(
            "input quantization {:?} differs from model input {:?}",
            input.qparams, model.input_qparams
        )));
    }
    let mut x = input.data.clone();
    let mut len = input.length;
    for layer in &model.layers {
        x = match layer.kind {
            LayerKind::Conv1d => conv_q(layer, &x, len),
            LayerKind::FullyConnected => fc_q(layer, &x),
            LayerKind::Relu => {
                let z = layer.input_qparams.zero_point.clamp(-128, 127) as i8;
                x.into_iter().map(|v| v.max(z)).collect()
            }
            LayerKind::Maxpool1d => pool(&x, layer.in_channels, len, layer.kernel, layer.stride, layer.output_shape.1),
        };
        len = layer.output_shape.1;
    }
    let outputs: [i8; 5] = x
        .as_slice()
        .try_into()
        .map_err(|_| Error::Shape(format!("model produced {} outputs", x.len())))?;
    Ok(QuantOutput {
        class: argmax_lowest(&outputs),
        outputs,
    })
}

/// Real-valued reference inference on dequantized weights. The input is the
/// raw frame in ADC units (the same domain the input scale maps from).
pub fn infer_float(model: &QModel, frame: &[i16]) -> Result<[f64; 5]> {
    let layers = infer_float_layers(model, frame)?;
    let last = layers.last().expect("model has layers");
    last.as_slice()
        .try_into()
        .map_err(|_| Error::Shape(format!("model produced {} outputs", last.len())))
}

/// Like [`infer_float`], returning every layer's output in order.
pub fn infer_float_layers(model: &QModel, frame: &[i16]) -> Result<Vec<Vec<f64>>> {
    if frame.len() != model.input_len {
        return Err(Error::Shape(format!(
            "model expects {} samples, got {}",
            model.input_len,
            frame.len()
        )));
    }
    let mut x: Vec<f64> = frame.iter().map(|&v| v as f64).collect();
    let mut len = frame.len();
    let mut outputs = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        x = match layer.kind {
            LayerKind::Conv1d => {
                let (out_ch, out_len) = layer.output_shape;
                let k = layer.kernel;
                let mut out = Vec::with_capacity(out_ch * out_len);
                for oc in 0..out_ch {
                    for t in 0..out_len {
                        let mut acc = 0.0;
                        for ic in 0..layer.in_channels {
                            for j in 0..k {
                                acc += x[ic * len + t * layer.stride + j]
                                    * layer.weight((oc * layer.in_channels + ic) * k + j);
                            }
                        }
                        out.push(acc);
                    }
                }
                out
            }
            LayerKind::FullyConnected => (0..layer.out_channels)
                .map(|o| {
                    x.iter()
                        .enumerate()
                        .map(|(i, &v)| v * layer.weight(o * layer.in_channels + i))
                        .sum()
                })
                .collect(),
            LayerKind::Relu => x.into_iter().map(|v| v.max(0.0)).collect(),
            LayerKind::Maxpool1d => pool(&x, layer.in_channels, len, layer.kernel, layer.stride, layer.output_shape.1),
        };
        len = layer.output_shape.1;
        outputs.push(x.clone());
    }
    Ok(outputs)
}
