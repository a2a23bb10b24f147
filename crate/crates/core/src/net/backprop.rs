use ndarray::{s, Array2, Axis};

use super::{Activation, NetError, NetParams};

/// Stacks `2c + 1` neighbouring frames per row, replicating edge frames.
pub fn context_window(feats: &Array2<f64>, context: usize) -> Array2<f64> {
    if context == 0 {
        return feats.clone();
    }
    let (n, d) = feats.dim();
    let width = 2 * context + 1;
    let mut out = Array2::zeros((n, d * width));
    if n == 0 {
        return out;
    }
    for t in 0..n {
        for j in 0..width {
            let src = (t + j).saturating_sub(context).min(n - 1);
            out.slice_mut(s![t, j * d..(j + 1) * d])
                .assign(&feats.row(src));
        }
    }
    out
}

/// `dot` may return column-major results; parameters and logits stay row-major.
fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Layer inputs and outputs kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the network input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Array2<f64> {
        self.acts.last().expect("at least the input")
    }
}

fn check_input(params: &NetParams, feats: &Array2<f64>) -> Result<(), NetError> {
    if feats.ncols() != params.feature_dim {
        return Err(NetError::Dimension(format!(
            "features have {} dims, model expects {}",
            feats.ncols(),
            params.feature_dim
        )));
    }
    params.validate()
}

/// Per-frame logits (frames x classes).
pub fn forward(params: &NetParams, feats: &Array2<f64>) -> Result<Array2<f64>, NetError> {
    let mut cache = forward_cached(params, feats)?;
    Ok(cache.acts.pop().expect("non-empty"))
}

pub fn forward_cached(params: &NetParams, feats: &Array2<f64>) -> Result<ForwardCache, NetError> {
    check_input(params, feats)?;
    let mut acts = Vec::with_capacity(params.layers.len() + 1);
    acts.push(context_window(feats, params.context));
    for layer in &params.layers {
        let input = acts.last().expect("non-empty");
        let mut z = standard(input.dot(&layer.weight.t()));
        z += &layer.bias;
        match (&layer.recurrent, layer.activation) {
            (Some(u), act) => {
                // h_t = act(W x_t + b + U h_{t-1}), h_{-1} = 0
                for t in 0..z.nrows() {
                    if t > 0 {
                        let prev = z.row(t - 1).to_owned();
                        let rec = u.dot(&prev);
                        let mut row = z.row_mut(t);
                        row += &rec;
                    }
                    let mut row = z.row_mut(t);
                    if act == Activation::Tanh {
                        row.mapv_inplace(f64::tanh);
                    }
                }
            }
            (None, Activation::Tanh) => z.mapv_inplace(f64::tanh),
            (None, Activation::Identity) => {}
        }
        acts.push(z);
    }
    Ok(ForwardCache { acts })
}

/// Parameter gradient given the loss gradient with respect to the logits.
pub fn backward(
    params: &NetParams,
    cache: &ForwardCache,
    grad_logits: &Array2<f64>,
) -> Result<NetParams, NetError> {
    if grad_logits.dim() != cache.logits().dim() {
        return Err(NetError::Dimension(format!(
            "logit gradient {:?} does not match logits {:?}",
            grad_logits.dim(),
            cache.logits().dim()
        )));
    }
    let mut grads = params.zeros_like();
    let mut upstream = grad_logits.clone();
    for (i, layer) in params.layers.iter().enumerate().rev() {
        let out = &cache.acts[i + 1];
        let input = &cache.acts[i];
        let deriv = |a: f64| match layer.activation {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        };
        // Gradient w.r.t. the pre-activation of each frame.
        let dz = match &layer.recurrent {
            None => {
                let mut dz = upstream;
                dz.zip_mut_with(out, |g, &a| *g *= deriv(a));
                dz
            }
            Some(u) => {
                let n = out.nrows();
                let mut dz = Array2::zeros(out.raw_dim());
                let gu = grads.layers[i].recurrent.as_mut().expect("same shape");
                for t in (0..n).rev() {
                    let mut dh = upstream.row(t).to_owned();
                    if t + 1 < n {
                        dh += &u.t().dot(&dz.row(t + 1));
                    }
                    dh.zip_mut_with(&out.row(t), |g, &a| *g *= deriv(a));
                    if t > 0 {
                        let prev = out.row(t - 1);
                        for (r, &g) in dh.iter().enumerate() {
                            if g != 0.0 {
                                gu.row_mut(r).scaled_add(g, &prev);
                            }
                        }
                    }
                    dz.row_mut(t).assign(&dh);
                }
                dz
            }
        };
        grads.layers[i].weight = standard(dz.t().dot(input));
        grads.layers[i].bias = dz.sum_axis(Axis(0));
        if i > 0 {
            upstream = dz.dot(&layer.weight);
        } else {
            break;
        }
    }
    Ok(grads)
}
