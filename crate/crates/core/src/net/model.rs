//! Forward and backward passes over a [`NetworkSpec`].
//!
//! SGFE's boundary map joins the eltwise max in logit units, `logit(clamp(B, ε, 1-ε))`, so
//! that a background pixel with `B = 0` contributes a strongly negative score instead of
//! flooring the sigmoid at 0.5. A zero boundary therefore leaves any non-negative trunk score
//! untouched, and a confident boundary (`B → 1`) still lifts the prediction towards 1.

use crate::error::{invalid, mismatch, Result};
use crate::field::{RgbFrame, ScalarField};

use super::arch::{LayerKind, NetworkSpec, Variant};
use super::ops;
use super::params::{bias_name, weight_name, Gradients, ParamStore};
use super::tensor::Tensor;

/// Clamp applied to boundary values before the logit.
pub const BOUNDARY_EPS: f64 = 1e-7;

pub fn boundary_logits(b: &ScalarField) -> Tensor {
    let data = b
        .values()
        .iter()
        .map(|&v| {
            let p = v.clamp(BOUNDARY_EPS, 1.0 - BOUNDARY_EPS);
            (p / (1.0 - p)).ln()
        })
        .collect();
    Tensor::from_vec(&[1, b.height(), b.width()], data).expect("field dims are positive")
}

/// The three colour planes as a (3, H, W) tensor.
pub fn frame_tensor(frame: &RgbFrame) -> Tensor {
    let (h, w) = frame.dims();
    Tensor::from_vec(&[3, h, w], frame.planar().to_vec()).expect("frame dims are positive")
}

/// Frame planes followed by the previous saliency map as a fourth channel.
pub fn assemble_sgfe_input(frame: &RgbFrame, prev_saliency: &ScalarField) -> Result<Tensor> {
    let (h, w) = frame.dims();
    if prev_saliency.dims() != (h, w) {
        return Err(mismatch!("frame {h}x{w} with previous saliency {:?}", prev_saliency.dims()));
    }
    let mut data = Vec::with_capacity(4 * h * w);
    data.extend_from_slice(frame.planar());
    data.extend_from_slice(prev_saliency.values());
    Tensor::from_vec(&[4, h, w], data)
}

/// Network input for any variant; `prev` is required for SGFE and ignored otherwise.
pub fn variant_input(variant: Variant, frame: &RgbFrame, prev: Option<&ScalarField>) -> Result<Tensor> {
    match (variant, prev) {
        (Variant::Sgfe, Some(p)) => assemble_sgfe_input(frame, p),
        (Variant::Sgfe, None) => Err(invalid!("SGFE needs the previous saliency map")),
        _ => Ok(frame_tensor(frame)),
    }
}

/// Everything backward needs: `acts[i]` is the input of layer `i`, the last entry the output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Tensor>,
    pool_argmax: Vec<Option<Vec<u32>>>,
    max_mask: Option<Vec<bool>>,
    aux_index: Option<usize>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        self.acts.last().expect("cache holds the input at least")
    }

    pub fn prediction(&self) -> ScalarField {
        let out = self.output();
        let s = out.shape();
        ScalarField::from_vec(s[1], s[2], out.data().to_vec()).expect("output is (1, H, W)")
    }

    /// Input of the final sigmoid.
    pub fn pre_sigmoid(&self) -> &Tensor {
        &self.acts[self.acts.len() - 2]
    }

    /// Score produced by the deconv stack before any boundary fusion.
    pub fn trunk_output(&self) -> &Tensor {
        match self.aux_index {
            Some(i) => &self.acts[i],
            None => self.pre_sigmoid(),
        }
    }

    pub fn activations(&self) -> &[Tensor] {
        &self.acts
    }

    /// Whether two passes took the same piecewise-linear branch everywhere: identical
    /// activation sign patterns, pooling winners and max routing.
    pub fn same_branches(&self, other: &ForwardCache) -> bool {
        self.pool_argmax == other.pool_argmax
            && self.max_mask == other.max_mask
            && self.acts.len() == other.acts.len()
            && self
                .acts
                .iter()
                .zip(&other.acts)
                .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| (*x > 0.0) == (*y > 0.0)))
    }
}

fn check_input(spec: &NetworkSpec, input: &Tensor, aux: Option<&ScalarField>) -> Result<()> {
    let want = [spec.input_channels, spec.scale.height, spec.scale.width];
    if input.shape() != want {
        return Err(mismatch!("input {:?} for a network expecting {want:?}", input.shape()));
    }
    if !input.is_finite() {
        return Err(invalid!("input contains non-finite values"));
    }
    match (spec.variant, aux) {
        (Variant::Sgfe, None) => Err(invalid!("SGFE forward needs a boundary map")),
        (Variant::Sgfe, Some(b)) if b.dims() != (spec.scale.height, spec.scale.width) => {
            Err(mismatch!("boundary map {:?} for a {}x{} network", b.dims(), spec.scale.height, spec.scale.width))
        }
        (v, Some(_)) if v != Variant::Sgfe => Err(invalid!("{v} takes no boundary map")),
        _ => Ok(()),
    }
}

pub fn forward(spec: &NetworkSpec, params: &ParamStore, input: &Tensor, aux: Option<&ScalarField>) -> Result<ForwardCache> {
    check_input(spec, input, aux)?;
    let mut acts = Vec::with_capacity(spec.layers.len() + 1);
    let mut pool_argmax = Vec::with_capacity(spec.layers.len());
    let mut max_mask = None;
    let mut aux_index = None;
    acts.push(input.clone());
    for (i, l) in spec.layers.iter().enumerate() {
        let x = &acts[i];
        let mut argmax = None;
        let y = match l.kind {
            LayerKind::Conv { stride, pad, .. } => {
                let w = params.require(&weight_name(&l.name))?;
                let b = params.require(&bias_name(&l.name))?;
                ops::conv_forward(x, w, b, stride, pad)?
            }
            LayerKind::Deconv { stride, crop, .. } => {
                let w = params.require(&weight_name(&l.name))?;
                let b = params.require(&bias_name(&l.name))?;
                ops::deconv_forward(x, w, Some(b), stride, crop)?
            }
            LayerKind::MaxPool { kernel, stride } => {
                let (y, a) = ops::maxpool_forward(x, kernel, stride)?;
                argmax = Some(a);
                y
            }
            LayerKind::Relu => ops::relu_forward(x),
            LayerKind::Sigmoid => ops::sigmoid_forward(x),
            LayerKind::EltwiseMax { .. } => {
                let b = boundary_logits(aux.expect("checked above"));
                let (y, mask) = ops::eltwise_max_forward(x, &b)?;
                max_mask = Some(mask);
                aux_index = Some(i);
                y
            }
        };
        pool_argmax.push(argmax);
        acts.push(y);
    }
    Ok(ForwardCache { acts, pool_argmax, max_mask, aux_index })
}

/// Parameter gradients given the gradient of the loss with respect to the prediction.
pub fn backward(spec: &NetworkSpec, params: &ParamStore, cache: &ForwardCache, grad_pred: &ScalarField) -> Result<Gradients> {
    if cache.acts.len() != spec.layers.len() + 1 {
        return Err(mismatch!("cache of {} activations for {} layers", cache.acts.len(), spec.layers.len()));
    }
    let out_shape = cache.output().shape().to_vec();
    if grad_pred.dims() != (out_shape[1], out_shape[2]) {
        return Err(mismatch!("prediction gradient {:?} for output {:?}", grad_pred.dims(), out_shape));
    }
    let mut grads = Gradients::zeros_like(params);
    let mut g = Tensor::from_vec(&out_shape, grad_pred.values().to_vec())?;
    for (i, l) in spec.layers.iter().enumerate().rev() {
        let x = &cache.acts[i];
        let y = &cache.acts[i + 1];
        g = match l.kind {
            LayerKind::Conv { stride, pad, .. } => {
                let (wn, bn) = (weight_name(&l.name), bias_name(&l.name));
                let (wi, bi) = (param_index(params, &wn)?, param_index(params, &bn)?);
                let w = params.require(&wn)?;
                let b = params.require(&bn)?;
                let cg = ops::conv_backward(x, w, b, &g, stride, pad, i > 0)?;
                grads.tensors[wi] = cg.weight;
                grads.tensors[bi] = cg.bias;
                match cg.input {
                    Some(gx) => gx,
                    None => break,
                }
            }
            LayerKind::Deconv { stride, crop, .. } => {
                let (wn, bn) = (weight_name(&l.name), bias_name(&l.name));
                let (wi, bi) = (param_index(params, &wn)?, param_index(params, &bn)?);
                let dg = ops::deconv_backward(x, params.require(&wn)?, &g, stride, crop)?;
                grads.tensors[wi] = dg.weight;
                grads.tensors[bi] = dg.bias;
                dg.input
            }
            LayerKind::MaxPool { .. } => {
                let arg = cache.pool_argmax[i].as_ref().ok_or_else(|| invalid!("cache lacks pooling indices"))?;
                ops::maxpool_backward(&g, arg, x.shape())?
            }
            LayerKind::Relu => ops::relu_backward(y, &g),
            LayerKind::Sigmoid => ops::sigmoid_backward(y, &g),
            LayerKind::EltwiseMax { .. } => {
                let mask = cache.max_mask.as_ref().ok_or_else(|| invalid!("cache lacks the max mask"))?;
                ops::eltwise_max_backward(&g, mask).0
            }
        };
    }
    Ok(grads)
}

fn param_index(params: &ParamStore, name: &str) -> Result<usize> {
    params.index_of(name).ok_or_else(|| invalid!("missing parameter {name}"))
}

/// Saliency prediction for one input.
pub fn predict(spec: &NetworkSpec, params: &ParamStore, input: &Tensor, aux: Option<&ScalarField>) -> Result<ScalarField> {
    Ok(forward(spec, params, input, aux)?.prediction())
}
