use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{FixedSpec, QTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
    MaxPool,
    AvgPool,
}

impl LayerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conv" => Ok(LayerKind::Conv),
            "fc" => Ok(LayerKind::Fc),
            "maxpool" => Ok(LayerKind::MaxPool),
            "avgpool" => Ok(LayerKind::AvgPool),
            _ => Err(Error::UnknownLayerKind(s.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Fc => "fc",
            LayerKind::MaxPool => "maxpool",
            LayerKind::AvgPool => "avgpool",
        }
    }

    /// Layers executed as MACs on the crossbars.
    pub fn is_mac(&self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Fc)
    }
}

/// Static description of one layer. Shapes are `[channels, height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerDesc {
    pub name: String,
    pub kind: LayerKind,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub has_relu: bool,
    pub has_bias: bool,
    pub input_shape: [usize; 3],
    pub output_shape: [usize; 3],
    pub input_spec: FixedSpec,
    pub weight_spec: Option<FixedSpec>,
    pub output_spec: FixedSpec,
}

fn out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input + 2 * padding < kernel {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

impl LayerDesc {
    /// Build a descriptor and derive its output shape. For FC layers the
    /// kernel always covers the whole input volume.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        kind: LayerKind,
        input_shape: [usize; 3],
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        has_relu: bool,
        has_bias: bool,
        input_spec: FixedSpec,
        weight_spec: Option<FixedSpec>,
        output_spec: FixedSpec,
    ) -> Result<Self> {
        let name = name.into();
        let [c, h, w] = input_shape;
        let (kernel_h, kernel_w, stride, padding) = match kind {
            LayerKind::Fc => (h, w, 1, 0),
            _ => (kernel.0, kernel.1, stride, padding),
        };
        let bad = |msg: &str| Error::InvalidModel(format!("layer {name}: {msg}"));
        let oh = out_dim(h, kernel_h, stride, padding)
            .ok_or_else(|| bad("kernel does not fit input"))?;
        let ow = out_dim(w, kernel_w, stride, padding)
            .ok_or_else(|| bad("kernel does not fit input"))?;
        let output_shape = match kind {
            LayerKind::Conv | LayerKind::Fc => {
                if out_channels == 0 {
                    return Err(bad("zero output channels"));
                }
                if weight_spec.is_none() {
                    return Err(bad("missing weight spec"));
                }
                [out_channels, oh, ow]
            }
            LayerKind::MaxPool | LayerKind::AvgPool => {
                if padding >= kernel_h.max(kernel_w) {
                    return Err(bad("pool padding must be smaller than the window"));
                }
                if input_spec != output_spec {
                    return Err(bad("pooling cannot change the fixed-point spec"));
                }
                [c, oh, ow]
            }
        };
        if c == 0 {
            return Err(bad("empty input"));
        }
        input_spec.validate()?;
        output_spec.validate()?;
        if let Some(ws) = weight_spec {
            ws.validate()?;
            if !ws.signed {
                return Err(bad("weights must be signed"));
            }
        }
        Ok(LayerDesc {
            name,
            kind,
            kernel_h,
            kernel_w,
            stride,
            padding,
            has_relu,
            has_bias: has_bias && kind.is_mac(),
            input_shape,
            output_shape,
            input_spec,
            weight_spec,
            output_spec,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.input_shape[0]
    }

    pub fn out_channels(&self) -> usize {
        self.output_shape[0]
    }

    /// Rows of one kernel: `c * h * w`.
    pub fn kernel_len(&self) -> usize {
        self.in_channels() * self.kernel_h * self.kernel_w
    }

    /// Number of output spatial positions, i.e. MAC positions per channel.
    pub fn positions(&self) -> usize {
        self.output_shape[1] * self.output_shape[2]
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels(),
            self.in_channels(),
            self.kernel_h,
            self.kernel_w,
        ]
    }

    /// Right shift from accumulator scale to the output scale.
    pub fn requant_shift(&self) -> i32 {
        let wf = self.weight_spec.map(|s| s.frac as i32).unwrap_or(0);
        self.input_spec.frac as i32 + wf - self.output_spec.frac as i32
    }

    /// Gather the (zero padded) input window feeding output position
    /// `(oy, ox)` in `[c][kh][kw]` order.
    pub fn gather_window(&self, input: &[i32], oy: usize, ox: usize, out: &mut Vec<i32>) {
        let [c, h, w] = self.input_shape;
        out.clear();
        let y0 = (oy * self.stride) as isize - self.padding as isize;
        let x0 = (ox * self.stride) as isize - self.padding as isize;
        for ch in 0..c {
            let plane = &input[ch * h * w..(ch + 1) * h * w];
            for ky in 0..self.kernel_h {
                let y = y0 + ky as isize;
                for kx in 0..self.kernel_w {
                    let x = x0 + kx as isize;
                    if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                        out.push(0);
                    } else {
                        out.push(plane[y as usize * w + x as usize]);
                    }
                }
            }
        }
    }
}

/// A layer with its parameters. Weights are `[z, c, h, w]` row-major;
/// biases are at accumulator scale (`frac_in + frac_w`).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub desc: LayerDesc,
    pub weights: Option<QTensor>,
    pub bias: Option<Vec<i64>>,
}

impl Layer {
    pub fn pool(desc: LayerDesc) -> Result<Self> {
        if desc.kind.is_mac() {
            return Err(Error::InvalidModel(format!(
                "layer {} needs weights",
                desc.name
            )));
        }
        Ok(Layer {
            desc,
            weights: None,
            bias: None,
        })
    }

    pub fn mac(desc: LayerDesc, weights: QTensor, bias: Option<Vec<i64>>) -> Result<Self> {
        let expected = desc.weight_shape().to_vec();
        if weights.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                context: format!("weights of layer {}", desc.name),
                expected,
                got: weights.shape().to_vec(),
            });
        }
        if Some(weights.spec()) != desc.weight_spec {
            return Err(Error::InvalidModel(format!(
                "weight tensor spec differs from layer {} weight spec",
                desc.name
            )));
        }
        match (&bias, desc.has_bias) {
            (Some(b), true) if b.len() != desc.out_channels() => {
                return Err(Error::ShapeMismatch {
                    context: format!("bias of layer {}", desc.name),
                    expected: vec![desc.out_channels()],
                    got: vec![b.len()],
                })
            }
            (None, true) => {
                return Err(Error::InvalidModel(format!(
                    "layer {} declares a bias but none was given",
                    desc.name
                )))
            }
            _ => {}
        }
        let bias = if desc.has_bias { bias } else { None };
        Ok(Layer {
            desc,
            weights: Some(weights),
            bias,
        })
    }

    /// Kernel of output channel `z` as a flat slice.
    pub fn kernel(&self, z: usize) -> &[i32] {
        let k = self.desc.kernel_len();
        let w = self.weights.as_ref().expect("mac layer").data();
        &w[z * k..(z + 1) * k]
    }

    pub fn bias_of(&self, z: usize) -> i64 {
        self.bias.as_ref().map(|b| b[z]).unwrap_or(0)
    }
}

/// Run a pooling layer on already-quantized activations.
pub fn pool_forward(desc: &LayerDesc, input: &QTensor) -> QTensor {
    let [c, h, w] = desc.input_shape;
    let [_, oh, ow] = desc.output_shape;
    let data = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = (oy * desc.stride) as isize - desc.padding as isize;
                let x0 = (ox * desc.stride) as isize - desc.padding as isize;
                let mut max = i32::MIN;
                let mut sum = 0i64;
                let mut count = 0i64;
                for ky in 0..desc.kernel_h as isize {
                    for kx in 0..desc.kernel_w as isize {
                        let (y, x) = (y0 + ky, x0 + kx);
                        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                            continue;
                        }
                        let v = plane[y as usize * w + x as usize];
                        max = max.max(v);
                        sum += v as i64;
                        count += 1;
                    }
                }
                let v = match desc.kind {
                    LayerKind::MaxPool => max as i64,
                    _ => div_round_even(sum, count),
                };
                let v = if desc.has_relu { v.max(0) } else { v };
                out.push(desc.output_spec.saturate(v) as i32);
            }
        }
    }
    QTensor::from_parts(desc.output_shape.to_vec(), desc.output_spec, out)
}

/// Integer division rounding half to even.
pub(crate) fn div_round_even(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal if q & 1 == 1 => q + 1,
        _ => q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(bits: u8, frac: u8, signed: bool) -> FixedSpec {
        FixedSpec::new(bits, frac, signed).unwrap()
    }

    #[test]
    fn kinds_parse() {
        assert_eq!(LayerKind::parse("CONV").unwrap(), LayerKind::Conv);
        assert!(matches!(
            LayerKind::parse("lstm"),
            Err(Error::UnknownLayerKind(_))
        ));
    }

    #[test]
    fn conv_shapes() {
        let d = LayerDesc::new(
            "c",
            LayerKind::Conv,
            [3, 32, 32],
            32,
            (5, 5),
            1,
            2,
            true,
            true,
            s(16, 8, true),
            Some(s(16, 14, true)),
            s(16, 8, false),
        )
        .unwrap();
        assert_eq!(d.output_shape, [32, 32, 32]);
        assert_eq!(d.kernel_len(), 75);
        assert_eq!(d.requant_shift(), 14);
        let fc = LayerDesc::new(
            "f",
            LayerKind::Fc,
            [64, 4, 4],
            10,
            (0, 0),
            0,
            0,
            false,
            true,
            s(16, 8, false),
            Some(s(16, 14, true)),
            s(16, 8, true),
        )
        .unwrap();
        assert_eq!(fc.output_shape, [10, 1, 1]);
        assert_eq!(fc.kernel_len(), 1024);
    }

    #[test]
    fn kernel_too_big() {
        let r = LayerDesc::new(
            "c",
            LayerKind::Conv,
            [1, 2, 2],
            1,
            (3, 3),
            1,
            0,
            false,
            false,
            s(8, 0, true),
            Some(s(8, 0, true)),
            s(8, 0, true),
        );
        assert!(r.is_err());
    }

    #[test]
    fn pools() {
        let spec = s(8, 0, true);
        let d = LayerDesc::new(
            "p",
            LayerKind::AvgPool,
            [1, 2, 2],
            0,
            (2, 2),
            2,
            0,
            false,
            false,
            spec,
            None,
            spec,
        )
        .unwrap();
        let x = QTensor::new(vec![1, 2, 2], spec, vec![1, 2, 2, 0]).unwrap();
        // 5 / 4 = 1.25 -> 1
        assert_eq!(pool_forward(&d, &x).data(), &[1]);
        let x = QTensor::new(vec![1, 2, 2], spec, vec![1, 2, 2, 1]).unwrap();
        // 6 / 4 = 1.5 -> 2
        assert_eq!(pool_forward(&d, &x).data(), &[2]);
        let mut dm = d.clone();
        dm.kind = LayerKind::MaxPool;
        let x = QTensor::new(vec![1, 2, 2], spec, vec![-3, -1, -7, -2]).unwrap();
        assert_eq!(pool_forward(&dm, &x).data(), &[-1]);
    }

    #[test]
    fn rounding_division() {
        assert_eq!(div_round_even(5, 2), 2);
        assert_eq!(div_round_even(7, 2), 4);
        assert_eq!(div_round_even(-5, 2), -2);
        assert_eq!(div_round_even(-7, 2), -4);
        assert_eq!(div_round_even(10, 3), 3);
        assert_eq!(div_round_even(-10, 3), -3);
    }

    #[test]
    fn window_with_padding() {
        let spec = s(8, 0, true);
        let d = LayerDesc::new(
            "c",
            LayerKind::Conv,
            [1, 2, 2],
            1,
            (3, 3),
            1,
            1,
            false,
            false,
            spec,
            Some(spec),
            spec,
        )
        .unwrap();
        let mut win = Vec::new();
        d.gather_window(&[1, 2, 3, 4], 0, 0, &mut win);
        assert_eq!(win, vec![0, 0, 0, 0, 1, 2, 0, 3, 4]);
    }
}
