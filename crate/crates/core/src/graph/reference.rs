//! Dense plaintext forward pass straight from the weights file.
//!
//! Shares no code with the packed executor beyond the dense convolution and dense layer
//! references; activations use the normalized Hermite form, not the folded quadratic.

use super::model::{LayerKind, ModelWeights};
use super::GraphError;
use crate::aespa::{aespa_eval_plain, hermite_coeffs};
use crate::packing::{dense_conv2d, dense_linear, ConvLayerSpec, LinearSpec, PackingFormat, Shape, Tensor3};

enum Value {
    Tensor(Tensor3),
    Vector(Vec<f64>),
}

pub fn reference_forward(model: &ModelWeights, input: &Tensor3) -> Result<Vec<f64>, GraphError> {
    if input.shape != model.input_shape() {
        return Err(GraphError::ShapeChain(format!("input {} does not match model input {}", input.shape, model.input_shape())));
    }
    let mut inputs: Vec<Tensor3> = Vec::new();
    let mut cur = Value::Tensor(input.clone());
    for (idx, l) in model.layers.iter().enumerate() {
        if let Value::Tensor(t) = &cur {
            inputs.push(t.clone());
        } else {
            inputs.push(Tensor3::zeros(Shape::new(0, 0, 0)));
        }
        cur = match (l.kind, cur) {
            (LayerKind::Conv, Value::Tensor(t)) => {
                let [o, i, k, _] = l.shape[..] else { return Err(GraphError::Schema(format!("layer {idx}: conv shape"))) };
                let dummy = PackingFormat::a(1, 1, 1);
                let spec = ConvLayerSpec::new(i, o, k, l.stride.unwrap_or(1), l.weight_values()?, l.bias_values(o)?, dummy, dummy)
                    .map_err(|e| GraphError::ShapeChain(format!("layer {idx}: {e}")))?;
                if t.shape.c != i {
                    return Err(GraphError::ShapeChain(format!("layer {idx}: {} channels into a {i}-channel conv", t.shape.c)));
                }
                Value::Tensor(dense_conv2d(&t, &spec))
            }
            (LayerKind::Aespa, Value::Tensor(mut t)) => {
                let a = l.aespa.as_ref().ok_or_else(|| GraphError::Schema(format!("layer {idx}: missing aespa block")))?;
                let chs = a.channels()?;
                if chs.len() != t.shape.c {
                    return Err(GraphError::ShapeChain(format!("layer {idx}: {} activation channels for {}", chs.len(), t.shape.c)));
                }
                let basis = hermite_coeffs(chs[0].degree())?;
                let per = t.shape.h * t.shape.w;
                for (k, v) in t.data.iter_mut().enumerate() {
                    *v = aespa_eval_plain(*v, &chs[k / per], &basis)?;
                }
                Value::Tensor(t)
            }
            (LayerKind::Downsample, Value::Tensor(t)) => {
                let s = Shape::new(t.shape.c, t.shape.h / 2, t.shape.w / 2);
                let mut y = Tensor3::zeros(s);
                for c in 0..s.c {
                    for i in 0..s.h {
                        for j in 0..s.w {
                            y.set(c, i, j, t.get(c, 2 * i, 2 * j));
                        }
                    }
                }
                Value::Tensor(y)
            }
            (LayerKind::Avgpool, Value::Tensor(t)) => {
                let per = t.shape.h * t.shape.w;
                Value::Vector(t.data.chunks(per).map(|c| c.iter().sum::<f64>() / per as f64).collect())
            }
            (LayerKind::Fc, Value::Vector(x)) => {
                let [o, i] = l.shape[..] else { return Err(GraphError::Schema(format!("layer {idx}: fc shape"))) };
                if x.len() != i {
                    return Err(GraphError::ShapeChain(format!("layer {idx}: {} features into a {i}-input fc", x.len())));
                }
                let spec = LinearSpec::new(i, o, l.weight_values()?, l.bias_values(o)?)
                    .map_err(|e| GraphError::ShapeChain(format!("layer {idx}: {e}")))?;
                Value::Vector(dense_linear(&x, &spec))
            }
            (LayerKind::ResidualAdd, Value::Tensor(mut t)) => {
                let src = l.source.filter(|&s| s < idx).ok_or_else(|| GraphError::Schema(format!("layer {idx}: bad residual source")))?;
                let short = &inputs[src];
                if short.shape != t.shape {
                    return Err(GraphError::ShapeChain(format!("layer {idx}: residual {} + {}", t.shape, short.shape)));
                }
                t.data.iter_mut().zip(&short.data).for_each(|(a, b)| *a += b);
                Value::Tensor(t)
            }
            (k, _) => return Err(GraphError::ShapeChain(format!("layer {idx}: {k:?} cannot follow the previous layer"))),
        };
    }
    match cur {
        Value::Vector(v) => Ok(v),
        Value::Tensor(t) => Ok(t.data),
    }
}
