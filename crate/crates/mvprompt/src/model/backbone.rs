//! Frozen transformer backbone.
//!
//! The backbone is randomly initialized once and never trained; adaptation
//! happens only through the prompts injected into its key/value streams and
//! through the per-view encoders feeding it. Layers are pre-norm:
//!
//! ```text
//! x1 = LN1(S);  attention(Q(x1), K(x1)+p_K, V(x1)+p_V);  S += proj
//! x2 = LN2(S);  S += W2 gelu(W1 x2 + b1) + b2
//! ```

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::param::ParamTensor;
use crate::rng::Rng;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct TransformerLayer {
    pub w_qkv: ParamTensor,
    pub b_qkv: ParamTensor,
    pub w_out: ParamTensor,
    pub b_out: ParamTensor,
    pub w_mlp1: ParamTensor,
    pub b_mlp1: ParamTensor,
    pub w_mlp2: ParamTensor,
    pub b_mlp2: ParamTensor,
    pub ln1_gamma: ParamTensor,
    pub ln1_beta: ParamTensor,
    pub ln2_gamma: ParamTensor,
    pub ln2_beta: ParamTensor,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub d_model: usize,
    pub heads: usize,
    pub layers: Vec<TransformerLayer>,
    /// Learned-at-init classification token, 1 x d_model, frozen like the
    /// rest of the backbone.
    pub cls: ParamTensor,
}

fn uniform_fan_in(rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(-bound, bound))
}

fn frozen(name: String, value: Matrix) -> ParamTensor {
    // trainable = false: the backbone can never be updated, in any session.
    ParamTensor::new(name, value, false)
}

impl Backbone {
    pub fn new(d_model: usize, layers: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if d_model == 0 || layers == 0 || heads == 0 {
            return Err(Error::Config(format!(
                "backbone needs d_model, layers, heads >= 1 (got {d_model}, {layers}, {heads})"
            )));
        }
        if d_model % heads != 0 {
            return Err(Error::Config(format!(
                "d_model {d_model} must divide evenly into {heads} heads"
            )));
        }
        let hidden = 4 * d_model;
        let mut built = Vec::with_capacity(layers);
        for i in 0..layers {
            let name = |field: &str| format!("backbone.layer{i}.{field}");
            built.push(TransformerLayer {
                w_qkv: frozen(name("w_qkv"), uniform_fan_in(d_model, 3 * d_model, d_model, rng)),
                b_qkv: frozen(name("b_qkv"), Matrix::zeros(1, 3 * d_model)),
                w_out: frozen(name("w_out"), uniform_fan_in(d_model, d_model, d_model, rng)),
                b_out: frozen(name("b_out"), Matrix::zeros(1, d_model)),
                w_mlp1: frozen(name("w_mlp1"), uniform_fan_in(d_model, hidden, d_model, rng)),
                b_mlp1: frozen(name("b_mlp1"), Matrix::zeros(1, hidden)),
                w_mlp2: frozen(name("w_mlp2"), uniform_fan_in(hidden, d_model, hidden, rng)),
                b_mlp2: frozen(name("b_mlp2"), Matrix::zeros(1, d_model)),
                ln1_gamma: frozen(name("ln1.gamma"), Matrix::from_fn(1, d_model, |_, _| 1.0)),
                ln1_beta: frozen(name("ln1.beta"), Matrix::zeros(1, d_model)),
                ln2_gamma: frozen(name("ln2.gamma"), Matrix::from_fn(1, d_model, |_, _| 1.0)),
                ln2_beta: frozen(name("ln2.beta"), Matrix::zeros(1, d_model)),
            });
        }
        let cls = frozen(
            "backbone.cls".into(),
            Matrix::from_fn(1, d_model, |_, _| rng.normal() * 0.02),
        );
        Ok(Backbone {
            d_model,
            heads,
            layers: built,
            cls,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn tensors(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend([
                &l.w_qkv, &l.b_qkv, &l.w_out, &l.b_out, &l.w_mlp1, &l.b_mlp1, &l.w_mlp2,
                &l.b_mlp2, &l.ln1_gamma, &l.ln1_beta, &l.ln2_gamma, &l.ln2_beta,
            ]);
        }
        out.push(&self.cls);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.extend([
                &mut l.w_qkv,
                &mut l.b_qkv,
                &mut l.w_out,
                &mut l.b_out,
                &mut l.w_mlp1,
                &mut l.b_mlp1,
                &mut l.w_mlp2,
                &mut l.b_mlp2,
                &mut l.ln1_gamma,
                &mut l.ln1_beta,
                &mut l.ln2_gamma,
                &mut l.ln2_beta,
            ]);
        }
        out.push(&mut self.cls);
        out
    }
}
