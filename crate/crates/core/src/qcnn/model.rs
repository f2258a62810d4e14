//! Model topology, validation and the JSON weight-file format.

use std::fmt;
use std::path::Path;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::quant::{QuantParams, Requant};
use crate::trace_io::LabelSet;
use crate::{Error, Result};

pub const WEIGHT_FORMAT: &str = "ecgnode-qcnn/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d,
    Relu,
    Maxpool1d,
    FullyConnected,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Conv1d => "conv1d",
            LayerKind::Relu => "relu",
            LayerKind::Maxpool1d => "maxpool1d",
            LayerKind::FullyConnected => "fully_connected",
        };
        f.write_str(s)
    }
}

const TOPOLOGY: [LayerKind; 9] = [
    LayerKind::Conv1d,
    LayerKind::Relu,
    LayerKind::Maxpool1d,
    LayerKind::Conv1d,
    LayerKind::Relu,
    LayerKind::Maxpool1d,
    LayerKind::FullyConnected,
    LayerKind::Relu,
    LayerKind::FullyConnected,
];

/// One layer. For conv layers weights are laid out `[out][in][kernel]`, for
/// fully connected layers `[out][in]`; `in_channels`/`out_channels` are the
/// feature counts of a fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weights: Vec<i8>,
    pub weight_scale: f64,
    /// Output quantization. Relu and pooling layers inherit their input's.
    pub output_qparams: QuantParams,
    /// Derived at load time for conv/fc layers.
    pub requant: Option<Requant>,
    /// Input quantization, filled in by [`QModel::new`].
    pub input_qparams: QuantParams,
    /// Output `(channels, length)`; fully connected layers report `(features, 1)`.
    pub output_shape: (usize, usize),
}

impl LayerSpec {
    fn placeholder_qp() -> QuantParams {
        QuantParams {
            scale: 1.0,
            zero_point: 0,
        }
    }

    pub fn conv1d(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        weights: Vec<i8>,
        weight_scale: f64,
        output_qparams: QuantParams,
    ) -> Self {
        Self {
            kind: LayerKind::Conv1d,
            in_channels,
            out_channels,
            kernel,
            stride,
            weights,
            weight_scale,
            output_qparams,
            requant: None,
            input_qparams: Self::placeholder_qp(),
            output_shape: (0, 0),
        }
    }

    pub fn fully_connected(
        in_features: usize,
        out_features: usize,
        weights: Vec<i8>,
        weight_scale: f64,
        output_qparams: QuantParams,
    ) -> Self {
        Self {
            kind: LayerKind::FullyConnected,
            kernel: 1,
            stride: 1,
            ..Self::conv1d(in_features, out_features, 1, 1, weights, weight_scale, output_qparams)
        }
    }

    pub fn relu() -> Self {
        Self {
            kind: LayerKind::Relu,
            kernel: 1,
            stride: 1,
            ..Self::conv1d(0, 0, 1, 1, Vec::new(), 1.0, Self::placeholder_qp())
        }
    }

    pub fn maxpool1d(kernel: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Maxpool1d,
            ..Self::conv1d(0, 0, kernel, stride, Vec::new(), 1.0, Self::placeholder_qp())
        }
    }

    /// Real weight value.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i] as f64 * self.weight_scale
    }
}

/// A validated, immutable quantized model.
#[derive(Debug, Clone, PartialEq)]
pub struct QModel {
    pub name: String,
    pub label_set: LabelSet,
    pub input_len: usize,
    pub input_qparams: QuantParams,
    pub layers: Vec<LayerSpec>,
}

fn conv_out_len(len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 || len < kernel {
        return Err(Error::Model(format!(
            "window {kernel}/stride {stride} does not fit length {len}"
        )));
    }
    Ok((len - kernel) / stride + 1)
}

impl QModel {
    /// Validates topology and shapes and derives the requantization
    /// parameters of every conv/fc layer. This is the only place real
    /// arithmetic touches quantization parameters.
    pub fn new(
        name: impl Into<String>,
        label_set: LabelSet,
        input_len: usize,
        input_qparams: QuantParams,
        mut layers: Vec<LayerSpec>,
    ) -> Result<Self> {
        let name = name.into();
        QuantParams::new(input_qparams.scale, input_qparams.zero_point)?;
        let kinds: Vec<LayerKind> = layers.iter().map(|l| l.kind).collect();
        if kinds != TOPOLOGY {
            let got: Vec<String> = kinds.iter().map(|k| k.to_string()).collect();
            return Err(Error::Model(format!(
                "expected conv,relu,pool,conv,relu,pool,fc,relu,fc; got {}",
                got.join(",")
            )));
        }

        let mut qp = input_qparams;
        let (mut channels, mut length) = (1usize, input_len);
        for (i, layer) in layers.iter_mut().enumerate() {
            layer.input_qparams = qp;
            match layer.kind {
                LayerKind::Conv1d | LayerKind::FullyConnected => {
                    let fan_in = if layer.kind == LayerKind::Conv1d {
                        if layer.in_channels != channels {
                            return Err(Error::Model(format!(
                                "layer {i}: expects {} input channels, gets {channels}",
                                layer.in_channels
                            )));
                        }
                        length = conv_out_len(length, layer.kernel, layer.stride)
                            .map_err(|e| Error::Model(format!("layer {i}: {e}")))?;
                        layer.in_channels * layer.kernel
                    } else {
                        if layer.in_channels != channels * length {
                            return Err(Error::Model(format!(
                                "layer {i}: expects {} inputs, gets {}",
                                layer.in_channels,
                                channels * length
                            )));
                        }
                        length = 1;
                        layer.in_channels
                    };
                    if layer.out_channels == 0 {
                        return Err(Error::Model(format!("layer {i}: no outputs")));
                    }
                    if layer.weights.len() != layer.out_channels * fan_in {
                        return Err(Error::Model(format!(
                            "layer {i}: {} weights, expected {}",
                            layer.weights.len(),
                            layer.out_channels * fan_in
                        )));
                    }
                    if !(layer.weight_scale > 0.0) || !layer.weight_scale.is_finite() {
                        return Err(Error::Model(format!("layer {i}: weight scale must be positive")));
                    }
                    let out = layer.output_qparams;
                    QuantParams::new(out.scale, out.zero_point)
                        .map_err(|e| Error::Model(format!("layer {i}: {e}")))?;
                    layer.requant = Some(Requant::from_real(qp.scale * layer.weight_scale / out.scale)?);
                    channels = layer.out_channels;
                    qp = out;
                }
                LayerKind::Relu => {
                    layer.output_qparams = qp;
                    layer.in_channels = channels;
                    layer.out_channels = channels;
                }
                LayerKind::Maxpool1d => {
                    length = conv_out_len(length, layer.kernel, layer.stride)
                        .map_err(|e| Error::Model(format!("layer {i}: {e}")))?;
                    layer.output_qparams = qp;
                    layer.in_channels = channels;
                    layer.out_channels = channels;
                }
            }
            layer.output_shape = (channels, length);
        }
        if channels != LabelSet::NUM_CLASSES {
            return Err(Error::Model(format!("final layer has {channels} outputs, expected 5")));
        }

        let model = Self {
            name,
            label_set,
            input_len,
            input_qparams,
            layers,
        };
        let expected = model.canonical_name();
        if model.name != expected {
            return Err(Error::Model(format!(
                "name {:?} does not match topology {expected:?}",
                model.name
            )));
        }
        Ok(model)
    }

    /// `labels_c1_c2_fc1`, e.g. `NLRAV_4_4_100`.
    pub fn canonical_name(&self) -> String {
        format!(
            "{}_{}_{}_{}",
            self.label_set,
            self.layers[0].out_channels,
            self.layers[3].out_channels,
            self.layers[6].out_channels
        )
    }

    /// Topology part of the name, `c1_c2_fc1`; keys the platform cost tables.
    pub fn topology_name(&self) -> String {
        format!(
            "{}_{}_{}",
            self.layers[0].out_channels, self.layers[3].out_channels, self.layers[6].out_channels
        )
    }

    pub fn output_qparams(&self) -> QuantParams {
        self.layers[self.layers.len() - 1].output_qparams
    }

    /// Number of integer requantization stages (conv and fc layers).
    pub fn requant_stages(&self) -> usize {
        self.layers.iter().filter(|l| l.requant.is_some()).count()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightFile = serde_json::from_str(text)?;
        file.into_model()
    }

    pub fn to_json(&self) -> String {
        self.to_json_encoded(WeightEncoding::Integers)
    }

    pub fn to_json_encoded(&self, encoding: WeightEncoding) -> String {
        let file = WeightFile::from_model(self, encoding);
        let mut s = serde_json::to_string_pretty(&file).expect("weight file serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// How weight tensors are written to a weight file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightEncoding {
    /// JSON integer arrays.
    #[default]
    Integers,
    /// Standard base64 of the int8 bytes.
    Base64,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightFile {
    format: String,
    name: String,
    label_set: LabelSet,
    input_len: usize,
    input_scale: f64,
    input_zero_point: i32,
    layers: Vec<LayerRecord>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct LayerRecord {
    kind: Option<LayerKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    in_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_zero_point: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
}

impl WeightFile {
    fn from_model(m: &QModel, encoding: WeightEncoding) -> Self {
        let layers = m
            .layers
            .iter()
            .map(|l| match l.kind {
                LayerKind::Conv1d | LayerKind::FullyConnected => LayerRecord {
                    kind: Some(l.kind),
                    in_channels: Some(l.in_channels),
                    out_channels: Some(l.out_channels),
                    kernel: (l.kind == LayerKind::Conv1d).then_some(l.kernel),
                    stride: (l.kind == LayerKind::Conv1d).then_some(l.stride),
                    weight_scale: Some(l.weight_scale),
                    output_scale: Some(l.output_qparams.scale),
                    output_zero_point: Some(l.output_qparams.zero_point),
                    weights: (encoding == WeightEncoding::Integers)
                        .then(|| l.weights.iter().map(|&w| w as i64).collect()),
                    weights_b64: (encoding == WeightEncoding::Base64).then(|| {
                        let bytes: Vec<u8> = l.weights.iter().map(|&w| w as u8).collect();
                        base64::engine::general_purpose::STANDARD.encode(bytes)
                    }),
                    ..Default::default()
                },
                LayerKind::Relu => LayerRecord {
                    kind: Some(l.kind),
                    ..Default::default()
                },
                LayerKind::Maxpool1d => LayerRecord {
                    kind: Some(l.kind),
                    kernel: Some(l.kernel),
                    stride: Some(l.stride),
                    ..Default::default()
                },
            })
            .collect();
        Self {
            format: WEIGHT_FORMAT.to_string(),
            name: m.name.clone(),
            label_set: m.label_set,
            input_len: m.input_len,
            input_scale: m.input_qparams.scale,
            input_zero_point: m.input_qparams.zero_point,
            layers,
        }
    }

    fn into_model(self) -> Result<QModel> {
        if self.format != WEIGHT_FORMAT {
            return Err(Error::Model(format!("unsupported weight format {:?}", self.format)));
        }
        let input_qp = QuantParams::new(self.input_scale, self.input_zero_point)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, rec) in self.layers.into_iter().enumerate() {
            let missing = |field: &str| Error::Model(format!("layer {i}: missing `{field}`"));
            let kind = rec.kind.ok_or_else(|| missing("kind"))?;
            if let Some(bias) = &rec.bias {
                if bias.iter().any(|&b| b != 0.0) {
                    return Err(Error::Model(format!("layer {i}: bias must be zero")));
                }
            }
            let layer = match kind {
                LayerKind::Relu => LayerSpec::relu(),
                LayerKind::Maxpool1d => LayerSpec::maxpool1d(
                    rec.kernel.ok_or_else(|| missing("kernel"))?,
                    rec.stride.ok_or_else(|| missing("stride"))?,
                ),
                LayerKind::Conv1d | LayerKind::FullyConnected => {
                    let weights = match (rec.weights, rec.weights_b64) {
                        (Some(w), None) => w
                            .into_iter()
                            .map(|v| {
                                i8::try_from(v)
                                    .map_err(|_| Error::Model(format!("layer {i}: weight {v} outside int8")))
                            })
                            .collect::<Result<Vec<i8>>>()?,
                        (None, Some(b)) => base64::engine::general_purpose::STANDARD
                            .decode(b.trim())
                            .map_err(|e| Error::Model(format!("layer {i}: bad base64: {e}")))?
                            .into_iter()
                            .map(|b| b as i8)
                            .collect(),
                        _ => {
                            return Err(Error::Model(format!(
                                "layer {i}: exactly one of `weights`/`weights_b64` required"
                            )))
                        }
                    };
                    let out_qp = QuantParams::new(
                        rec.output_scale.ok_or_else(|| missing("output_scale"))?,
                        rec.output_zero_point.ok_or_else(|| missing("output_zero_point"))?,
                    )?;
                    let in_ch = rec.in_channels.ok_or_else(|| missing("in_channels"))?;
                    let out_ch = rec.out_channels.ok_or_else(|| missing("out_channels"))?;
                    let w_scale = rec.weight_scale.ok_or_else(|| missing("weight_scale"))?;
                    if kind == LayerKind::Conv1d {
                        LayerSpec::conv1d(
                            in_ch,
                            out_ch,
                            rec.kernel.ok_or_else(|| missing("kernel"))?,
                            rec.stride.unwrap_or(1),
                            weights,
                            w_scale,
                            out_qp,
                        )
                    } else {
                        LayerSpec::fully_connected(in_ch, out_ch, weights, w_scale, out_qp)
                    }
                }
            };
            layers.push(layer);
        }
        QModel::new(self.name, self.label_set, self.input_len, input_qp, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(s: f64, z: i32) -> QuantParams {
        QuantParams::new(s, z).unwrap()
    }

    fn tiny_layers() -> Vec<LayerSpec> {
        vec![
            LayerSpec::conv1d(1, 2, 3, 1, vec![1; 6], 0.01, qp(0.5, -3)),
            LayerSpec::relu(),
            LayerSpec::maxpool1d(2, 2),
            LayerSpec::conv1d(2, 2, 2, 1, vec![-1; 8], 0.02, qp(0.25, 0)),
            LayerSpec::relu(),
            LayerSpec::maxpool1d(1, 1),
            LayerSpec::fully_connected(4, 3, vec![2; 12], 0.05, qp(0.1, 4)),
            LayerSpec::relu(),
            LayerSpec::fully_connected(3, 5, vec![3; 15], 0.05, qp(0.2, 0)),
        ]
    }

    #[test]
    fn shapes_and_requant_derived() {
        // 8 -> conv3 -> 6 -> pool2 -> 3 -> conv2 -> 2 -> pool1 -> 2 -> fc(4)
        let m = QModel::new("NLRAV_2_2_3", LabelSet::Nlrav, 8, qp(10.0, 1), tiny_layers()).unwrap();
        assert_eq!(m.layers[5].output_shape, (2, 2));
        assert_eq!(m.requant_stages(), 4);
        let r = m.layers[0].requant.unwrap();
        assert!((r.to_real() - 10.0 * 0.01 / 0.5).abs() < 1e-9);
        // relu/pool inherit the conv output quantization
        assert_eq!(m.layers[2].output_qparams, qp(0.5, -3));
        assert_eq!(m.layers[3].input_qparams, qp(0.5, -3));
    }

    #[test]
    fn json_round_trip() {
        let m = QModel::new("NLRAV_2_2_3", LabelSet::Nlrav, 8, qp(10.0, 1), tiny_layers()).unwrap();
        let back = QModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        let b64 = m.to_json_encoded(WeightEncoding::Base64);
        assert!(b64.contains("weights_b64"));
        assert_eq!(QModel::from_json(&b64).unwrap(), m);
    }

    #[test]
    fn rejects_wrong_topology_and_name() {
        let mut layers = tiny_layers();
        layers.swap(1, 2);
        assert!(QModel::new("NLRAV_2_2_3", LabelSet::Nlrav, 8, qp(1.0, 0), layers).is_err());
        assert!(QModel::new("NLRAV_9_2_3", LabelSet::Nlrav, 8, qp(1.0, 0), tiny_layers()).is_err());
        let mut layers = tiny_layers();
        layers[6].in_channels = 5;
        assert!(QModel::new("NLRAV_2_2_3", LabelSet::Nlrav, 8, qp(1.0, 0), layers).is_err());
    }

    #[test]
    fn nonzero_bias_rejected() {
        let m = QModel::new("NSVFQ_2_2_3", LabelSet::Nsvfq, 8, qp(10.0, 1), tiny_layers()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["layers"][0]["bias"] = serde_json::json!([0.0, 0.5]);
        let err = QModel::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("bias must be zero"), "{err}");
        v["layers"][0]["bias"] = serde_json::json!([0.0, 0.0]);
        assert!(QModel::from_json(&v.to_string()).is_ok());
    }

    #[test]
    fn base64_weights_accepted() {
        let m = QModel::new("NSVFQ_2_2_3", LabelSet::Nsvfq, 8, qp(10.0, 1), tiny_layers()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        let bytes: Vec<u8> = m.layers[3].weights.iter().map(|&w| w as u8).collect();
        v["layers"][3].as_object_mut().unwrap().remove("weights");
        v["layers"][3]["weights_b64"] = base64::engine::general_purpose::STANDARD.encode(bytes).into();
        assert_eq!(QModel::from_json(&v.to_string()).unwrap(), m);
    }
}
