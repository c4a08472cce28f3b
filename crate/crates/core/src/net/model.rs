//! Network model and its on-disk directory format.
//!
//! A model directory holds `manifest.json` plus one raw little-endian
//! tensor file per weight or bias. Weights are row-major `[z, c, h, w]`;
//! biases are stored at accumulator scale.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{quantize_scalar, FixedSpec, QTensor};
use crate::net::layer::{Layer, LayerDesc, LayerKind};

pub const MANIFEST: &str = "manifest.json";

/// Pixel preprocessing: `(pixel - mean) * scale`, then quantization to the
/// model's input spec.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Preprocess {
    pub scale: f64,
    pub mean: Mean,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum Mean {
    #[default]
    None,
    PerChannel(Vec<f64>),
    PerPixel(Vec<f32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    pub name: String,
    /// Dataset tag (`mnist`, `cifar10`, ...) used to pick benchmark-specific
    /// hardware constants.
    pub benchmark: Option<String>,
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub preprocess: Preprocess,
    pub layers: Vec<Layer>,
}

impl NetworkModel {
    /// Assemble and validate a model from in-memory layers.
    pub fn new(
        name: impl Into<String>,
        input_shape: [usize; 3],
        num_classes: usize,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let model = NetworkModel {
            name: name.into(),
            benchmark: None,
            input_shape,
            num_classes,
            preprocess: Preprocess {
                scale: 1.0,
                mean: Mean::None,
            },
            layers,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_benchmark(mut self, tag: impl Into<String>) -> Self {
        self.benchmark = Some(tag.into());
        self
    }

    pub fn with_preprocess(mut self, preprocess: Preprocess) -> Result<Self> {
        self.preprocess = preprocess;
        self.validate()?;
        Ok(self)
    }

    pub fn input_spec(&self) -> FixedSpec {
        self.layers[0].desc.input_spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        let mut shape = self.input_shape;
        for (i, layer) in self.layers.iter().enumerate() {
            let d = &layer.desc;
            if d.input_shape != shape {
                return Err(Error::ShapeMismatch {
                    context: format!("input of layer {i} ({})", d.name),
                    expected: shape.to_vec(),
                    got: d.input_shape.to_vec(),
                });
            }
            if i > 0 {
                let prev = &self.layers[i - 1].desc;
                if prev.output_spec != d.input_spec {
                    return Err(Error::InvalidModel(format!(
                        "output spec of layer {} differs from input spec of layer {}",
                        i - 1,
                        i
                    )));
                }
            }
            match (&layer.weights, d.kind.is_mac()) {
                (Some(w), true) => {
                    let spec = w.spec();
                    if let Some(&bad) = w.data().iter().find(|&&v| !spec.contains(v as i64)) {
                        return Err(Error::WeightOutOfRange {
                            layer: i,
                            value: bad as i64,
                            min: spec.min_int(),
                            max: spec.max_int(),
                        });
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(Error::InvalidModel(format!(
                        "layer {i} weights do not match its kind"
                    )))
                }
            }
            shape = d.output_shape;
        }
        let out: usize = shape.iter().product();
        if out != self.num_classes {
            return Err(Error::ShapeMismatch {
                context: "network output vs class count".into(),
                expected: vec![self.num_classes],
                got: shape.to_vec(),
            });
        }
        if let Mean::PerChannel(m) = &self.preprocess.mean {
            if m.len() != self.input_shape[0] {
                return Err(Error::ShapeMismatch {
                    context: "per-channel mean".into(),
                    expected: vec![self.input_shape[0]],
                    got: vec![m.len()],
                });
            }
        }
        if let Mean::PerPixel(m) = &self.preprocess.mean {
            let n: usize = self.input_shape.iter().product();
            if m.len() != n {
                return Err(Error::ShapeMismatch {
                    context: "per-pixel mean".into(),
                    expected: vec![n],
                    got: vec![m.len()],
                });
            }
        }
        Ok(())
    }

    /// Indices of CONV and FC layers.
    pub fn mac_layers(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.desc.kind.is_mac())
            .map(|(i, _)| i)
    }

    /// Whether the activations entering each layer are known to be
    /// non-negative (unsigned spec, or produced behind a ReLU).
    pub fn nonnegative_inputs(&self) -> Vec<bool> {
        let mut flags = Vec::with_capacity(self.layers.len());
        let mut nonneg = !self.input_spec().signed;
        for layer in &self.layers {
            flags.push(nonneg);
            let d = &layer.desc;
            nonneg = d.has_relu || !d.output_spec.signed || (!d.kind.is_mac() && nonneg);
        }
        flags
    }

    /// Apply preprocessing to raw `[c, h, w]` pixel bytes.
    pub fn prepare_pixels(&self, pixels: &[u8]) -> Result<QTensor> {
        let n: usize = self.input_shape.iter().product();
        if pixels.len() != n {
            return Err(Error::ShapeMismatch {
                context: "image pixels".into(),
                expected: self.input_shape.to_vec(),
                got: vec![pixels.len()],
            });
        }
        let plane = self.input_shape[1] * self.input_shape[2];
        let spec = self.input_spec();
        let scale = self.preprocess.scale;
        let data = pixels
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mean = match &self.preprocess.mean {
                    Mean::None => 0.0,
                    Mean::PerChannel(m) => m[i / plane],
                    Mean::PerPixel(m) => m[i] as f64,
                };
                quantize_scalar((p as f64 - mean) * scale, spec)
            })
            .collect();
        Ok(QTensor::from_parts(self.input_shape.to_vec(), spec, data))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        load_model(dir)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        save_model(self, dir)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    I8,
    I16,
    I32,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::I8 => 1,
            DType::I16 => 2,
            DType::I32 => 4,
        }
    }

    fn for_bits(bits: u8) -> Self {
        if bits <= 8 {
            DType::I8
        } else {
            DType::I16
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorRef {
    pub file: String,
    pub dtype: DType,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreprocessEntry {
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    /// Per-pixel mean stored as little-endian f32 `[c, h, w]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_file: Option<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub out_channels: usize,
    #[serde(default)]
    pub kernel: [usize; 2],
    #[serde(default = "one_usize")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default)]
    pub has_relu: bool,
    #[serde(default)]
    pub has_bias: bool,
    pub input_spec: SpecEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_spec: Option<SpecEntry>,
    pub output_spec: SpecEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<TensorRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<TensorRef>,
}

fn one_usize() -> usize {
    1
}

/// `{bits, frac, signed}` as written in manifests.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpecEntry {
    pub bits: u8,
    pub frac: u8,
    pub signed: bool,
}

impl From<FixedSpec> for SpecEntry {
    fn from(s: FixedSpec) -> Self {
        SpecEntry {
            bits: s.bits,
            frac: s.frac,
            signed: s.signed,
        }
    }
}

impl SpecEntry {
    fn to_spec(self) -> Result<FixedSpec> {
        FixedSpec::new(self.bits, self.frac, self.signed)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocess: Option<PreprocessEntry>,
    pub layers: Vec<LayerEntry>,
}

fn read_tensor(dir: &Path, t: &TensorRef, expected_len: usize, context: &str) -> Result<Vec<i64>> {
    let path = dir.join(&t.file);
    if !path.is_file() {
        return Err(Error::MissingTensor(path));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let width = t.dtype.width();
    if bytes.len() != expected_len * width {
        return Err(Error::ShapeMismatch {
            context: format!("{context} ({})", path.display()),
            expected: vec![expected_len],
            got: vec![bytes.len() / width],
        });
    }
    Ok(bytes
        .chunks_exact(width)
        .map(|c| match t.dtype {
            DType::I8 => c[0] as i8 as i64,
            DType::I16 => i16::from_le_bytes([c[0], c[1]]) as i64,
            DType::I32 => i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as i64,
        })
        .collect())
}

fn write_tensor(path: &Path, dtype: DType, values: impl Iterator<Item = i64>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        match dtype {
            DType::I8 => bytes.push(v as i8 as u8),
            DType::I16 => bytes.extend_from_slice(&(v as i16).to_le_bytes()),
            DType::I32 => bytes.extend_from_slice(&(v as i32).to_le_bytes()),
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Load and validate a model directory.
pub fn load_model(dir: impl AsRef<Path>) -> Result<NetworkModel> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(Error::MissingManifest(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;

    let mut layers = Vec::with_capacity(manifest.layers.len());
    let mut shape = manifest.input_shape;
    for (i, entry) in manifest.layers.iter().enumerate() {
        let kind = LayerKind::parse(&entry.kind)?;
        let weight_spec = entry.weight_spec.map(SpecEntry::to_spec).transpose()?;
        let desc = LayerDesc::new(
            entry.name.clone(),
            kind,
            shape,
            entry.out_channels,
            (entry.kernel[0], entry.kernel[1]),
            entry.stride,
            entry.padding,
            entry.has_relu,
            entry.has_bias,
            entry.input_spec.to_spec()?,
            weight_spec,
            entry.output_spec.to_spec()?,
        )?;
        let layer = if kind.is_mac() {
            let wref = entry.weights.as_ref().ok_or_else(|| {
                Error::InvalidModel(format!("layer {} lists no weight tensor", entry.name))
            })?;
            let wshape = desc.weight_shape();
            let n: usize = wshape.iter().product();
            let raw = read_tensor(dir, wref, n, &format!("weights of layer {}", entry.name))?;
            let wspec = desc.weight_spec.expect("checked by LayerDesc::new");
            if let Some(&bad) = raw.iter().find(|&&v| !wspec.contains(v)) {
                return Err(Error::WeightOutOfRange {
                    layer: i,
                    value: bad,
                    min: wspec.min_int(),
                    max: wspec.max_int(),
                });
            }
            let weights = QTensor::new(
                wshape.to_vec(),
                wspec,
                raw.into_iter().map(|v| v as i32).collect(),
            )?;
            let bias = match (&entry.bias, desc.has_bias) {
                (Some(b), true) => Some(read_tensor(
                    dir,
                    b,
                    desc.out_channels(),
                    &format!("bias of layer {}", entry.name),
                )?),
                (None, true) => {
                    return Err(Error::InvalidModel(format!(
                        "layer {} has_bias but lists no bias tensor",
                        entry.name
                    )))
                }
                _ => None,
            };
            Layer::mac(desc, weights, bias)?
        } else {
            Layer::pool(desc)?
        };
        shape = layer.desc.output_shape;
        layers.push(layer);
    }

    let preprocess = match &manifest.preprocess {
        None => Preprocess {
            scale: 1.0,
            mean: Mean::None,
        },
        Some(p) => {
            let mean = match (&p.mean, &p.mean_file) {
                (Some(m), _) => Mean::PerChannel(m.clone()),
                (None, Some(f)) => {
                    let path = dir.join(f);
                    if !path.is_file() {
                        return Err(Error::MissingTensor(path));
                    }
                    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                    Mean::PerPixel(
                        bytes
                            .chunks_exact(4)
                            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                            .collect(),
                    )
                }
                (None, None) => Mean::None,
            };
            Preprocess {
                scale: p.scale,
                mean,
            }
        }
    };

    let mut model = NetworkModel::new(
        manifest.name.clone(),
        manifest.input_shape,
        manifest.num_classes,
        layers,
    )?;
    model.benchmark = manifest.benchmark.clone();
    model.with_preprocess(preprocess)
}

/// Write a model directory that [`load_model`] reads back unchanged.
pub fn save_model(model: &NetworkModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let d = &layer.desc;
        let mut weights = None;
        let mut bias = None;
        if let Some(w) = &layer.weights {
            let dtype = DType::for_bits(w.spec().bits);
            let file = format!("{}.weights.bin", d.name);
            write_tensor(&dir.join(&file), dtype, w.data().iter().map(|&v| v as i64))?;
            weights = Some(TensorRef { file, dtype });
        }
        if let Some(b) = &layer.bias {
            let file = format!("{}.bias.bin", d.name);
            write_tensor(&dir.join(&file), DType::I32, b.iter().copied())?;
            bias = Some(TensorRef {
                file,
                dtype: DType::I32,
            });
        }
        entries.push(LayerEntry {
            name: d.name.clone(),
            kind: d.kind.as_str().to_string(),
            out_channels: if d.kind.is_mac() { d.out_channels() } else { 0 },
            kernel: [d.kernel_h, d.kernel_w],
            stride: d.stride,
            padding: d.padding,
            has_relu: d.has_relu,
            has_bias: d.has_bias,
            input_spec: d.input_spec.into(),
            weight_spec: d.weight_spec.map(Into::into),
            output_spec: d.output_spec.into(),
            weights,
            bias,
        });
    }
    let preprocess = match &model.preprocess.mean {
        Mean::None if model.preprocess.scale == 1.0 => None,
        Mean::None => Some(PreprocessEntry {
            scale: model.preprocess.scale,
            mean: None,
            mean_file: None,
        }),
        Mean::PerChannel(m) => Some(PreprocessEntry {
            scale: model.preprocess.scale,
            mean: Some(m.clone()),
            mean_file: None,
        }),
        Mean::PerPixel(m) => {
            let file = "mean.f32".to_string();
            let bytes: Vec<u8> = m.iter().flat_map(|v| v.to_le_bytes()).collect();
            let path = dir.join(&file);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            Some(PreprocessEntry {
                scale: model.preprocess.scale,
                mean: None,
                mean_file: Some(file),
            })
        }
    };
    let manifest = Manifest {
        name: model.name.clone(),
        benchmark: model.benchmark.clone(),
        input_shape: model.input_shape,
        num_classes: model.num_classes,
        preprocess,
        layers: entries,
    };
    let path: PathBuf = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
