use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixed::{requantize, QTensor};
use crate::net::dataset::LabeledImage;
use crate::net::layer::{pool_forward, Layer};
use crate::net::model::NetworkModel;

/// Result of an exact forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactOutput {
    pub logits: Vec<i32>,
    /// Output of every layer, in order.
    pub activations: Vec<QTensor>,
}

pub(crate) fn check_input(model: &NetworkModel, input: &QTensor) -> Result<()> {
    if input.shape() != model.input_shape {
        return Err(Error::ShapeMismatch {
            context: "network input".into(),
            expected: model.input_shape.to_vec(),
            got: input.shape().to_vec(),
        });
    }
    if input.spec() != model.input_spec() {
        return Err(Error::InvalidModel(
            "input tensor spec differs from the model input spec".into(),
        ));
    }
    Ok(())
}

/// Walk the layers, running pools directly and delegating MAC layers.
pub(crate) fn forward<F>(model: &NetworkModel, input: &QTensor, mut mac: F) -> Result<Vec<QTensor>>
where
    F: FnMut(usize, &Layer, &QTensor) -> Result<QTensor>,
{
    check_input(model, input)?;
    let mut acts: Vec<QTensor> = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        let x = if i == 0 { input } else { &acts[i - 1] };
        let y = if layer.desc.kind.is_mac() {
            mac(i, layer, x)?
        } else {
            pool_forward(&layer.desc, x)
        };
        acts.push(y);
    }
    Ok(acts)
}

/// Final integer output of a MAC: requantize, then ReLU when the layer has one.
#[inline]
pub(crate) fn finish_output(layer: &Layer, acc: i64) -> i32 {
    let d = &layer.desc;
    let v = requantize(acc, d.requant_shift(), d.output_spec);
    if d.has_relu {
        v.max(0)
    } else {
        v
    }
}

fn mac_layer_exact(layer: &Layer, input: &QTensor) -> QTensor {
    let d = &layer.desc;
    let [z, oh, ow] = d.output_shape;
    let mut out = vec![0i32; z * oh * ow];
    let mut window = Vec::with_capacity(d.kernel_len());
    for oy in 0..oh {
        for ox in 0..ow {
            d.gather_window(input.data(), oy, ox, &mut window);
            for ch in 0..z {
                let acc: i64 = layer
                    .kernel(ch)
                    .iter()
                    .zip(&window)
                    .map(|(&w, &a)| w as i64 * a as i64)
                    .sum::<i64>()
                    + layer.bias_of(ch);
                out[(ch * oh + oy) * ow + ox] = finish_output(layer, acc);
            }
        }
    }
    QTensor::from_parts(d.output_shape.to_vec(), d.output_spec, out)
}

/// Exact quantized inference: integer MACs, requantization and ReLU.
pub fn infer_exact(model: &NetworkModel, input: &QTensor) -> Result<ExactOutput> {
    let activations = forward(model, input, |_, layer, x| Ok(mac_layer_exact(layer, x)))?;
    let logits = activations.last().expect("non-empty model").data().to_vec();
    Ok(ExactOutput {
        logits,
        activations,
    })
}

/// Index of the largest logit; the first one wins ties.
pub fn argmax(logits: &[i32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy of `infer` over `images`.
pub fn accuracy<F>(images: &[LabeledImage], infer: F) -> Result<f64>
where
    F: Fn(&LabeledImage) -> Result<Vec<i32>> + Sync,
{
    if images.is_empty() {
        return Err(Error::InvalidDataset(
            "accuracy needs at least one image".into(),
        ));
    }
    let correct = images
        .par_iter()
        .map(|img| infer(img).map(|l| (argmax(&l) == img.label) as usize))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / images.len() as f64)
}
