//! Reference networks with seeded synthetic weights, random toy models and
//! synthetic images.
//!
//! The reference networks follow the layer geometry of the Caffe LeNet and
//! CIFAR-10 "quick" models. Their weights are He-initialized, not trained.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fixed::{quantize_scalar, FixedSpec, QTensor};
use crate::net::{Layer, LayerDesc, LayerKind, Mean, NetworkModel, Preprocess, RawImages};

struct Builder {
    rng: ChaCha8Rng,
    bits: u8,
    shape: [usize; 3],
    spec: FixedSpec,
    layers: Vec<Layer>,
}

impl Builder {
    fn act_frac(bits: u8) -> u8 {
        if bits >= 16 {
            8
        } else {
            bits / 2
        }
    }

    fn new(seed: u64, bits: u8, input: [usize; 3]) -> Result<Self> {
        Ok(Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            bits,
            shape: input,
            spec: FixedSpec::new(bits, Self::act_frac(bits), true)?,
            layers: Vec::new(),
        })
    }

    fn mac(
        &mut self,
        name: &str,
        kind: LayerKind,
        out: usize,
        k: usize,
        pad: usize,
        relu: bool,
    ) -> Result<()> {
        let frac = Self::act_frac(self.bits);
        let out_spec = FixedSpec::new(self.bits, frac, !relu)?;
        let w_spec = FixedSpec::new(self.bits, self.bits - 2, true)?;
        let desc = LayerDesc::new(
            name,
            kind,
            self.shape,
            out,
            (k, k),
            1,
            pad,
            relu,
            true,
            self.spec,
            Some(w_spec),
            out_spec,
        )?;
        let fan_in = desc.kernel_len() as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
        let n: usize = desc.weight_shape().iter().product();
        let data: Vec<i32> = (0..n)
            .map(|_| quantize_scalar(normal.sample(&mut self.rng), w_spec))
            .collect();
        let weights = QTensor::new(desc.weight_shape().to_vec(), w_spec, data)?;
        let acc_scale = (1i64 << (self.spec.frac + w_spec.frac)) as f64;
        let bias = (0..out)
            .map(|_| (self.rng.gen_range(-0.05..0.05) * acc_scale).round() as i64)
            .collect();
        self.push(Layer::mac(desc, weights, Some(bias))?);
        Ok(())
    }

    fn pool(
        &mut self,
        name: &str,
        kind: LayerKind,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<()> {
        let desc = LayerDesc::new(
            name,
            kind,
            self.shape,
            0,
            (k, k),
            stride,
            pad,
            false,
            false,
            self.spec,
            None,
            self.spec,
        )?;
        self.push(Layer::pool(desc)?);
        Ok(())
    }

    fn push(&mut self, layer: Layer) {
        self.shape = layer.desc.output_shape;
        self.spec = layer.desc.output_spec;
        self.layers.push(layer);
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if !(4..=16).contains(&bits) {
        return Err(Error::InvalidSpec(format!(
            "reference networks need 4..=16 bits, got {bits}"
        )));
    }
    Ok(())
}

fn centered(channels: usize) -> Preprocess {
    Preprocess {
        scale: 1.0 / 128.0,
        mean: Mean::PerChannel(vec![127.5; channels]),
    }
}

/// LeNet-5 for 1x28x28 inputs. Its CONV layers have no ReLU.
pub fn lenet5(bits: u8) -> Result<NetworkModel> {
    check_bits(bits)?;
    let mut b = Builder::new(0x1e4e7 ^ bits as u64, bits, [1, 28, 28])?;
    b.mac("conv1", LayerKind::Conv, 20, 5, 0, false)?;
    b.pool("pool1", LayerKind::MaxPool, 2, 2, 0)?;
    b.mac("conv2", LayerKind::Conv, 50, 5, 0, false)?;
    b.pool("pool2", LayerKind::MaxPool, 2, 2, 0)?;
    b.mac("ip1", LayerKind::Fc, 500, 0, 0, true)?;
    b.mac("ip2", LayerKind::Fc, 10, 0, 0, false)?;
    NetworkModel::new(format!("lenet5-{bits}"), [1, 28, 28], 10, b.layers)?
        .with_benchmark("mnist")
        .with_preprocess(centered(1))
}

/// CIFAR-10 quick network for 3x32x32 inputs.
pub fn cifar_quick(bits: u8) -> Result<NetworkModel> {
    check_bits(bits)?;
    let mut b = Builder::new(0xc1fa ^ bits as u64, bits, [3, 32, 32])?;
    b.mac("conv1", LayerKind::Conv, 32, 5, 2, true)?;
    b.pool("pool1", LayerKind::MaxPool, 3, 2, 1)?;
    b.mac("conv2", LayerKind::Conv, 32, 5, 2, true)?;
    b.pool("pool2", LayerKind::AvgPool, 3, 2, 1)?;
    b.mac("conv3", LayerKind::Conv, 64, 5, 2, true)?;
    b.pool("pool3", LayerKind::AvgPool, 3, 2, 1)?;
    b.mac("ip1", LayerKind::Fc, 64, 0, 0, false)?;
    b.mac("ip2", LayerKind::Fc, 10, 0, 0, false)?;
    NetworkModel::new(format!("cifar-quick-{bits}"), [3, 32, 32], 10, b.layers)?
        .with_benchmark("cifar10")
        .with_preprocess(centered(3))
}

/// Look up a reference network by name (`lenet5`, `cifar_quick`).
pub fn by_name(name: &str, bits: u8) -> Result<NetworkModel> {
    match name.to_ascii_lowercase().replace('-', "_").as_str() {
        "lenet" | "lenet5" | "mnist" => lenet5(bits),
        "cifar_quick" | "cifarquick" | "cifar10" => cifar_quick(bits),
        other => Err(Error::InvalidModel(format!(
            "unknown reference network {other}"
        ))),
    }
}

/// A small random network: one to three CONV layers, optional pooling and
/// a final FC layer. Weights span the full range of their spec.
pub fn random_model<R: Rng>(rng: &mut R, bits: u8) -> Result<NetworkModel> {
    let c = rng.gen_range(1..=3);
    let hw = rng.gen_range(5..=9);
    let input = [c, hw, hw];
    let frac = rng.gen_range(0..bits / 2);
    let mut spec = FixedSpec::new(bits, frac, rng.gen_bool(0.7))?;
    let mut shape = input;
    let mut layers = Vec::new();

    let convs = rng.gen_range(1..=3);
    for i in 0..convs {
        let k = rng.gen_range(1..=3.min(shape[1]));
        let stride = rng.gen_range(1..=2);
        let pad = rng.gen_range(0..k);
        let relu = rng.gen_bool(0.8);
        let out_spec =
            FixedSpec::new(bits, rng.gen_range(0..bits / 2), !relu || rng.gen_bool(0.3))?;
        let w_spec = FixedSpec::new(bits, rng.gen_range(0..bits - 1), true)?;
        let desc = LayerDesc::new(
            format!("conv{i}"),
            LayerKind::Conv,
            shape,
            rng.gen_range(1..=6),
            (k, k),
            stride,
            pad,
            relu,
            rng.gen_bool(0.5),
            spec,
            Some(w_spec),
            out_spec,
        )?;
        layers.push(random_layer(rng, desc)?);
        shape = layers.last().expect("pushed").desc.output_shape;
        spec = out_spec;
        if shape[1] >= 2 && rng.gen_bool(0.4) {
            let kind = if rng.gen_bool(0.5) {
                LayerKind::MaxPool
            } else {
                LayerKind::AvgPool
            };
            let desc = LayerDesc::new(
                format!("pool{i}"),
                kind,
                shape,
                0,
                (2, 2),
                rng.gen_range(1..=2),
                rng.gen_range(0..=1),
                rng.gen_bool(0.2),
                false,
                spec,
                None,
                spec,
            )?;
            layers.push(Layer::pool(desc)?);
            shape = layers.last().expect("pushed").desc.output_shape;
        }
    }
    let classes = rng.gen_range(2..=5);
    let out_spec = FixedSpec::new(bits, rng.gen_range(0..bits / 2), true)?;
    let w_spec = FixedSpec::new(bits, rng.gen_range(0..bits - 1), true)?;
    let desc = LayerDesc::new(
        "fc",
        LayerKind::Fc,
        shape,
        classes,
        (0, 0),
        1,
        0,
        false,
        rng.gen_bool(0.5),
        spec,
        Some(w_spec),
        out_spec,
    )?;
    layers.push(random_layer(rng, desc)?);
    NetworkModel::new("toy", input, classes, layers)
}

fn random_layer<R: Rng>(rng: &mut R, desc: LayerDesc) -> Result<Layer> {
    let w_spec = desc.weight_spec.expect("mac layer");
    let (lo, hi) = (w_spec.min_int() as i32, w_spec.max_int() as i32);
    let n: usize = desc.weight_shape().iter().product();
    // mostly small weights with occasional extremes
    let data = (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                if rng.gen_bool(0.5) {
                    lo
                } else {
                    hi
                }
            } else {
                rng.gen_range(lo / 4..=hi / 4)
            }
        })
        .collect();
    let weights = QTensor::new(desc.weight_shape().to_vec(), w_spec, data)?;
    let bias = if desc.has_bias {
        let span = 1i64 << (desc.input_spec.bits + w_spec.bits - 4);
        Some(
            (0..desc.out_channels())
                .map(|_| rng.gen_range(-span..=span))
                .collect(),
        )
    } else {
        None
    };
    Layer::mac(desc, weights, bias)
}

/// A random activation tensor covering the full range of `spec`.
pub fn random_input<R: Rng>(rng: &mut R, shape: [usize; 3], spec: FixedSpec) -> QTensor {
    let n: usize = shape.iter().product();
    let (lo, hi) = (spec.min_int() as i32, spec.max_int() as i32);
    let data = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    QTensor::new(shape.to_vec(), spec, data).expect("values drawn inside the spec")
}

/// Smooth random images (blurred noise plus a gradient) with random labels.
pub fn synthetic_images(shape: [usize; 3], count: usize, classes: u8, seed: u64) -> RawImages {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [c, h, w] = shape;
    let mut pixels = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let noise: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(0.0..255.0)).collect();
        let (gx, gy) = (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        let mut img = vec![0u8; c * h * w];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let mut s = 0.0;
                    let mut k = 0.0;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                            if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                                s += noise[(ch * h + yy as usize) * w + xx as usize];
                                k += 1.0;
                            }
                        }
                    }
                    let v =
                        s / k + gx * (x as f64 - w as f64 / 2.0) + gy * (y as f64 - h as f64 / 2.0);
                    img[(ch * h + y) * w + x] = v.clamp(0.0, 255.0) as u8;
                }
            }
        }
        pixels.push(img);
        labels.push(rng.gen_range(0..classes.max(1)));
    }
    RawImages {
        shape,
        pixels,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::infer_exact;

    #[test]
    fn reference_shapes() {
        let l = lenet5(16).unwrap();
        let shapes: Vec<_> = l.layers.iter().map(|x| x.desc.output_shape).collect();
        assert_eq!(shapes[0], [20, 24, 24]);
        assert_eq!(shapes[2], [50, 8, 8]);
        assert_eq!(shapes[4], [500, 1, 1]);
        assert_eq!(l.layers[4].desc.kernel_len(), 800);
        let c = cifar_quick(8).unwrap();
        let shapes: Vec<_> = c.layers.iter().map(|x| x.desc.output_shape).collect();
        assert_eq!(shapes[0], [32, 32, 32]);
        assert_eq!(shapes[1], [32, 16, 16]);
        assert_eq!(shapes[3], [32, 8, 8]);
        assert_eq!(shapes[5], [64, 4, 4]);
        assert_eq!(c.benchmark.as_deref(), Some("cifar10"));
    }

    #[test]
    fn deterministic_weights() {
        assert_eq!(lenet5(8).unwrap().layers, lenet5(8).unwrap().layers);
        assert_ne!(
            lenet5(8).unwrap().layers[0].weights,
            lenet5(16).unwrap().layers[0].weights
        );
    }

    #[test]
    fn toy_models_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let bits = rng.gen_range(4..=12);
            let m = random_model(&mut rng, bits).unwrap();
            let x = random_input(&mut rng, m.input_shape, m.input_spec());
            let out = infer_exact(&m, &x).unwrap();
            assert_eq!(out.logits.len(), m.num_classes);
        }
    }

    #[test]
    fn synthetic_images_are_seeded() {
        let a = synthetic_images([3, 8, 8], 4, 10, 9);
        assert_eq!(a, synthetic_images([3, 8, 8], 4, 10, 9));
        assert_eq!(a.len(), 4);
    }
}
