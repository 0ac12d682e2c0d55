//! Prompt-injected transformer classifier.
//!
//! Per-view linear encoders produce one token per view (missing views reduce
//! to the encoder bias), a frozen class token is prefixed, and the sequence
//! runs through a frozen pre-norm transformer. Adaptation happens through
//! two prompts of length d added to the key/value streams of every layer
//! after the QKV projection: the bank prompt selected by the sample's
//! missing pattern and the task prompt of the pathway being evaluated. The
//! first half of a prompt shifts K, the second half shifts V, which forces
//! d_model = d / 2. Queries are never altered.
//!
//! Each task pathway `t` ends in its own sigmoid head over that session's
//! classes; earlier pathways stay bit-frozen while later sessions train.

mod backbone;

pub use backbone::{Backbone, TransformerLayer, LAYER_NORM_EPS};

use std::collections::BTreeMap;

use crate::autodiff::{Grads, NodeId, Tape};
use crate::bank::{BankGrads, DenseBank, MissingPattern, PerViewBank, PromptBank, TensorTrainBank};
use crate::contrastive::{
    build_pairs, dynamic_contrastive_loss, dynamic_contrastive_loss_weighted, ViewWeights,
};
use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;
use crate::param::ParamTensor;
use crate::rng::Rng;

pub const PROB_CLAMP: f64 = 1e-7;

/// Which storage scheme backs the missing-pattern prompts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankChoice {
    TensorTrain,
    Dense,
    PerView,
}

/// Everything needed to build a model skeleton.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ModelSpec {
    pub view_dims: Vec<usize>,
    /// Prompt length d; the transformer width is d / 2.
    pub prompt_len: usize,
    pub layers: usize,
    pub heads: usize,
    /// Bank coefficient dimension k.
    pub factors: usize,
    /// Tensor-train ranks r_0..r_n (r_0 = 1).
    pub tt_ranks: Vec<usize>,
    pub bank_kind: BankChoice,
}

impl ModelSpec {
    pub fn n_views(&self) -> usize {
        self.view_dims.len()
    }

    pub fn d_model(&self) -> usize {
        self.prompt_len / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.view_dims.is_empty() {
            return Err(Error::Config("model needs at least one view".into()));
        }
        if self.view_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("view feature dims must be >= 1".into()));
        }
        if self.prompt_len % 2 != 0 || self.prompt_len == 0 {
            return Err(Error::Config(format!(
                "prompt length d={} must be even and positive: K and V each take half",
                self.prompt_len
            )));
        }
        if self.d_model() % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must divide evenly into {} heads",
                self.d_model(),
                self.heads
            )));
        }
        if self.tt_ranks.len() != self.n_views() + 1 {
            return Err(Error::Config(format!(
                "need {} tensor-train ranks r_0..r_n, got {}",
                self.n_views() + 1,
                self.tt_ranks.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ViewEncoder {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

#[derive(Clone, Debug)]
pub struct TaskPathway {
    pub prompt: ParamTensor,
    pub head_weight: ParamTensor,
    pub head_bias: ParamTensor,
    pub num_classes: usize,
}

/// Full model: encoders + frozen backbone + prompt bank + task pathways.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub spec: ModelSpec,
    pub encoders: Vec<ViewEncoder>,
    pub backbone: Backbone,
    pub bank: PromptBank,
    pub view_weights: ViewWeights,
    pub tasks: Vec<TaskPathway>,
    /// Forces both prompt contributions to zero (ablation arm).
    pub ablate_prompts: bool,
}

impl ModelState {
    /// Initializes a model. Rng consumption order (fixed): encoder weights
    /// by view, backbone layers, class token, bank tensors, then nothing for
    /// the zero-initialized view weights. Task pathways consume the rng when
    /// added.
    pub fn new(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_views();
        let d_model = spec.d_model();

        let mut encoders = Vec::with_capacity(n);
        for (v, &dv) in spec.view_dims.iter().enumerate() {
            let bound = 1.0 / (dv as f64).sqrt();
            let weight = Matrix::from_fn(d_model, dv, |_, _| rng.uniform(-bound, bound));
            encoders.push(ViewEncoder {
                weight: ParamTensor::new(format!("encoder{v}.weight"), weight, true),
                bias: ParamTensor::new(format!("encoder{v}.bias"), Matrix::zeros(1, d_model), true),
            });
        }

        let backbone = Backbone::new(d_model, spec.layers, spec.heads, rng)?;

        let bank = match spec.bank_kind {
            BankChoice::TensorTrain => PromptBank::TensorTrain(TensorTrainBank::new(
                n,
                spec.prompt_len,
                spec.factors,
                &spec.tt_ranks,
                rng,
            )?),
            BankChoice::Dense => PromptBank::Dense(DenseBank::new(n, spec.prompt_len, rng)?),
            BankChoice::PerView => PromptBank::PerView(PerViewBank::new(n, spec.prompt_len, rng)?),
        };

        let view_weights = ViewWeights::new(n);

        Ok(ModelState {
            spec,
            encoders,
            backbone,
            bank,
            view_weights,
            tasks: Vec::new(),
            ablate_prompts: false,
        })
    }

    /// Registers pathway `t = current task count`: a fresh task prompt and
    /// sigmoid head for `num_classes` classes.
    pub fn add_task(&mut self, num_classes: usize, rng: &mut Rng) -> Result<usize> {
        if num_classes == 0 {
            return Err(Error::Config("task needs at least one class".into()));
        }
        let idx = self.tasks.len();
        let d_model = self.spec.d_model();
        let prompt = Matrix::from_fn(1, self.spec.prompt_len, |_, _| rng.normal() * 0.02);
        let bound = 1.0 / (d_model as f64).sqrt();
        let head_w = Matrix::from_fn(num_classes, d_model, |_, _| rng.uniform(-bound, bound));
        self.tasks.push(TaskPathway {
            prompt: ParamTensor::new(format!("task{idx}.prompt"), prompt, true),
            head_weight: ParamTensor::new(format!("task{idx}.head.weight"), head_w, true),
            head_bias: ParamTensor::new(
                format!("task{idx}.head.bias"),
                Matrix::zeros(1, num_classes),
                true,
            ),
            num_classes,
        });
        Ok(idx)
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_views(&self) -> usize {
        self.spec.n_views()
    }

    /// Applies the session freeze schedule before training session
    /// `session_idx` (0-based). Session 0 trains encoders, bank, view
    /// weights, and its own pathway; later sessions train only their own
    /// pathway unless `train_bank_every_session` keeps the bank open.
    pub fn freeze_for_session(&mut self, session_idx: usize, train_bank_every_session: bool) {
        let later = session_idx > 0;
        for enc in &mut self.encoders {
            enc.weight.frozen = later;
            enc.bias.frozen = later;
        }
        for t in self.bank.tensors_mut() {
            t.frozen = later && !train_bank_every_session;
        }
        self.view_weights.raw.frozen = later;
        for (idx, task) in self.tasks.iter_mut().enumerate() {
            let frozen = idx != session_idx;
            task.prompt.frozen = frozen;
            task.head_weight.frozen = frozen;
            task.head_bias.frozen = frozen;
        }
    }

    /// Every tensor in fixed hierarchical order; the checkpoint layout and
    /// the optimizer both iterate this.
    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::new();
        for enc in &self.encoders {
            out.push(&enc.weight);
            out.push(&enc.bias);
        }
        out.extend(self.backbone.tensors());
        out.extend(self.bank.tensors());
        out.push(&self.view_weights.raw);
        for task in &self.tasks {
            out.push(&task.prompt);
            out.push(&task.head_weight);
            out.push(&task.head_bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out: Vec<&mut ParamTensor> = Vec::new();
        for enc in &mut self.encoders {
            out.push(&mut enc.weight);
            out.push(&mut enc.bias);
        }
        out.extend(self.backbone.tensors_mut());
        out.extend(self.bank.tensors_mut());
        out.push(&mut self.view_weights.raw);
        for task in &mut self.tasks {
            out.push(&mut task.prompt);
            out.push(&mut task.head_weight);
            out.push(&mut task.head_bias);
        }
        out
    }

    pub fn param(&self, name: &str) -> Option<&ParamTensor> {
        self.params().into_iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.params_mut().into_iter().find(|p| p.name == name)
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn forward_task(&self, sample: &SampleView, task_idx: usize) -> Result<ForwardOutput> {
        let mut builder = GraphBuilder::new(self, task_idx, false)?;
        let nodes = builder.forward_sample(sample)?;
        Ok(builder.extract(&nodes))
    }

    /// Forward pass that also captures per-layer Q matrices and attention
    /// rows for invariant checks.
    pub fn forward_task_traced(
        &self,
        sample: &SampleView,
        task_idx: usize,
    ) -> Result<(ForwardOutput, ForwardTrace)> {
        let mut builder = GraphBuilder::new(self, task_idx, false)?;
        let nodes = builder.forward_sample(sample)?;
        let out = builder.extract(&nodes);
        let trace = ForwardTrace {
            q: nodes
                .q_ids
                .iter()
                .map(|&id| builder.tape.value(id).clone())
                .collect(),
            attention: nodes
                .attn_ids
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|&id| builder.tape.value(id).clone())
                        .collect()
                })
                .collect(),
        };
        Ok((out, trace))
    }
}

/// Borrowed per-sample input: one feature slice per view plus the pattern.
pub struct SampleView<'a> {
    pub features: Vec<&'a [f64]>,
    pub pattern: &'a MissingPattern,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Class-token representation after the last layer, length d_model.
    pub z: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Per layer: the (n+1) x d_model query matrix.
    pub q: Vec<Matrix>,
    /// Per layer, per head: the (n+1) x (n+1) attention matrix.
    pub attention: Vec<Vec<Matrix>>,
}

/// Mean binary cross entropy over all entries, probabilities clamped into
/// [clamp, 1 - clamp]. Labels must be exactly 0 or 1.
pub fn bce_loss(probs: &Matrix, labels: &Matrix, clamp: f64) -> Result<f64> {
    if probs.shape() != labels.shape() {
        return Err(shape_err(format!(
            "bce probs {}x{} vs labels {}x{}",
            probs.rows(),
            probs.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Validation("bce over zero entries".into()));
    }
    if labels.data().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Validation("bce labels must be 0 or 1".into()));
    }
    let mut total = 0.0;
    for (p, y) in probs.data().iter().zip(labels.data()) {
        let pc = p.clamp(clamp, 1.0 - clamp);
        total += -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    }
    Ok(total / probs.len() as f64)
}

/// Splits a prompt into its K half and V half.
pub fn split_prompt(p: &[f64]) -> Result<(&[f64], &[f64])> {
    if p.len() % 2 != 0 || p.is_empty() {
        return Err(shape_err(format!(
            "prompt length {} cannot split into equal K/V halves",
            p.len()
        )));
    }
    Ok(p.split_at(p.len() / 2))
}

/// Loss pieces from one step: total = bce + lambda * contrastive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub bce: f64,
    pub contrastive: f64,
    pub total: f64,
}

/// Knobs for one optimization step.
#[derive(Clone, Debug)]
pub struct StepOptions {
    pub lambda: f64,
    pub alpha: f64,
    /// Pattern domain for the contrastive term (usually every nonzero
    /// pattern; subsampled when the view count makes that infeasible).
    pub dcl_patterns: Vec<MissingPattern>,
    pub weighted_positive_term: bool,
}

struct PatternNodes {
    leaf: NodeId,
    p_k: NodeId,
    p_v: NodeId,
}

struct LayerLeaves {
    w_qkv: NodeId,
    b_qkv: NodeId,
    w_out: NodeId,
    b_out: NodeId,
    w_mlp1: NodeId,
    b_mlp1: NodeId,
    w_mlp2: NodeId,
    b_mlp2: NodeId,
    ln1_gamma: NodeId,
    ln1_beta: NodeId,
    ln2_gamma: NodeId,
    ln2_beta: NodeId,
}

struct SampleNodes {
    z: NodeId,
    logits: NodeId,
    probs: NodeId,
    q_ids: Vec<NodeId>,
    attn_ids: Vec<Vec<NodeId>>,
}

/// Builds forward graphs for one task pathway, sharing parameter leaves
/// across every sample added to the same tape.
struct GraphBuilder<'a> {
    tape: Tape,
    state: &'a ModelState,
    grads_enabled: bool,
    enc_wt: Vec<NodeId>,
    enc_w: Vec<NodeId>,
    enc_b: Vec<NodeId>,
    layers: Vec<LayerLeaves>,
    cls: NodeId,
    head_w: NodeId,
    head_b: NodeId,
    task_prompt: Option<NodeId>,
    patterns: BTreeMap<usize, PatternNodes>,
}

impl<'a> GraphBuilder<'a> {
    fn new(state: &'a ModelState, task_idx: usize, grads_enabled: bool) -> Result<Self> {
        if task_idx >= state.tasks.len() {
            return Err(Error::Validation(format!(
                "task index {task_idx} out of range: {} pathways registered",
                state.tasks.len()
            )));
        }
        let mut tape = Tape::new();
        let need = |p: &ParamTensor| grads_enabled && p.updatable();

        let mut enc_w = Vec::new();
        let mut enc_wt = Vec::new();
        let mut enc_b = Vec::new();
        for enc in &state.encoders {
            let w = tape.leaf(enc.weight.value.clone(), need(&enc.weight));
            enc_wt.push(tape.transpose(w));
            enc_w.push(w);
            enc_b.push(tape.leaf(enc.bias.value.clone(), need(&enc.bias)));
        }

        let mut layers = Vec::new();
        for l in &state.backbone.layers {
            layers.push(LayerLeaves {
                w_qkv: tape.leaf(l.w_qkv.value.clone(), false),
                b_qkv: tape.leaf(l.b_qkv.value.clone(), false),
                w_out: tape.leaf(l.w_out.value.clone(), false),
                b_out: tape.leaf(l.b_out.value.clone(), false),
                w_mlp1: tape.leaf(l.w_mlp1.value.clone(), false),
                b_mlp1: tape.leaf(l.b_mlp1.value.clone(), false),
                w_mlp2: tape.leaf(l.w_mlp2.value.clone(), false),
                b_mlp2: tape.leaf(l.b_mlp2.value.clone(), false),
                ln1_gamma: tape.leaf(l.ln1_gamma.value.clone(), false),
                ln1_beta: tape.leaf(l.ln1_beta.value.clone(), false),
                ln2_gamma: tape.leaf(l.ln2_gamma.value.clone(), false),
                ln2_beta: tape.leaf(l.ln2_beta.value.clone(), false),
            });
        }
        let cls = tape.leaf(state.backbone.cls.value.clone(), false);

        let task = &state.tasks[task_idx];
        let head_w = tape.leaf(task.head_weight.value.clone(), need(&task.head_weight));
        let head_b = tape.leaf(task.head_bias.value.clone(), need(&task.head_bias));
        let task_prompt = if state.ablate_prompts {
            None
        } else {
            Some(tape.leaf(task.prompt.value.clone(), need(&task.prompt)))
        };

        Ok(GraphBuilder {
            tape,
            state,
            grads_enabled,
            enc_wt,
            enc_w,
            enc_b,
            layers,
            cls,
            head_w,
            head_b,
            task_prompt,
            patterns: BTreeMap::new(),
        })
    }

    /// Key/value prompt halves for a pattern, created once per tape.
    fn pattern_nodes(&mut self, pattern: &MissingPattern) -> Result<Option<(NodeId, NodeId)>> {
        let Some(task_prompt) = self.task_prompt else {
            return Ok(None);
        };
        let idx = pattern.index();
        if !self.patterns.contains_key(&idx) {
            let value = Matrix::row_vector(self.state.bank.prompt_for_pattern(pattern)?);
            let requires = self.grads_enabled && self.state.bank.updatable();
            let leaf = self.tape.leaf(value, requires);
            let d_model = self.state.spec.d_model();
            let sum = self.tape.add(leaf, task_prompt);
            let p_k = self.tape.slice_cols(sum, 0, d_model);
            let p_v = self.tape.slice_cols(sum, d_model, d_model);
            self.patterns.insert(idx, PatternNodes { leaf, p_k, p_v });
        }
        let nodes = &self.patterns[&idx];
        Ok(Some((nodes.p_k, nodes.p_v)))
    }

    fn forward_sample(&mut self, sample: &SampleView) -> Result<SampleNodes> {
        let spec = &self.state.spec;
        let n = spec.n_views();
        if sample.features.len() != n {
            return Err(shape_err(format!(
                "sample has {} views, model expects {n}",
                sample.features.len()
            )));
        }
        if sample.pattern.n_views() != n {
            return Err(shape_err(format!(
                "pattern has {} views, model expects {n}",
                sample.pattern.n_views()
            )));
        }
        for (v, feat) in sample.features.iter().enumerate() {
            if feat.len() != spec.view_dims[v] {
                return Err(shape_err(format!(
                    "view {v}: feature length {} but encoder expects {}",
                    feat.len(),
                    spec.view_dims[v]
                )));
            }
        }
        if !sample.pattern.any_observed() {
            return Err(Error::Validation(
                "sample observes no view; such rows must be excluded upstream".into(),
            ));
        }

        // Token per view; a missing view contributes exactly its encoder
        // bias, identical to encoding a zero feature vector.
        let mut rows = vec![self.cls];
        for v in 0..n {
            if sample.pattern.is_observed(v) {
                let x = self
                    .tape
                    .constant(Matrix::row_vector(sample.features[v].to_vec()));
                let xw = self.tape.matmul(x, self.enc_wt[v]);
                rows.push(self.tape.add(xw, self.enc_b[v]));
            } else {
                rows.push(self.enc_b[v]);
            }
        }
        let mut seq = self.tape.stack_rows(&rows);

        let injected = self.pattern_nodes(sample.pattern)?;
        let d_model = spec.d_model();
        let heads = spec.heads;
        let head_dim = d_model / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let mut q_ids = Vec::with_capacity(self.layers.len());
        let mut attn_ids = Vec::with_capacity(self.layers.len());

        for layer_idx in 0..self.layers.len() {
            let l = &self.layers[layer_idx];
            let (w_qkv, b_qkv, w_out, b_out) = (l.w_qkv, l.b_qkv, l.w_out, l.b_out);
            let (w_mlp1, b_mlp1, w_mlp2, b_mlp2) = (l.w_mlp1, l.b_mlp1, l.w_mlp2, l.b_mlp2);
            let (g1, be1, g2, be2) = (l.ln1_gamma, l.ln1_beta, l.ln2_gamma, l.ln2_beta);

            let x1 = self.tape.layer_norm(seq, g1, be1, LAYER_NORM_EPS);
            let qkv_lin = self.tape.matmul(x1, w_qkv);
            let qkv = self.tape.add_row_broadcast(qkv_lin, b_qkv);
            let q = self.tape.slice_cols(qkv, 0, d_model);
            let k_raw = self.tape.slice_cols(qkv, d_model, d_model);
            let v_raw = self.tape.slice_cols(qkv, 2 * d_model, d_model);
            // Prompts shift K and V only; Q is used untouched.
            let (k, v) = match injected {
                Some((p_k, p_v)) => (
                    self.tape.add_row_broadcast(k_raw, p_k),
                    self.tape.add_row_broadcast(v_raw, p_v),
                ),
                None => (k_raw, v_raw),
            };
            q_ids.push(q);

            let mut head_outs = Vec::with_capacity(heads);
            let mut layer_attn = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = self.tape.slice_cols(q, h * head_dim, head_dim);
                let kh = self.tape.slice_cols(k, h * head_dim, head_dim);
                let vh = self.tape.slice_cols(v, h * head_dim, head_dim);
                let kt = self.tape.transpose(kh);
                let scores = self.tape.matmul(qh, kt);
                let scaled = self.tape.scale(scores, scale);
                let attn = self.tape.softmax_rows(scaled);
                layer_attn.push(attn);
                head_outs.push(self.tape.matmul(attn, vh));
            }
            attn_ids.push(layer_attn);
            let merged = self.tape.concat_cols(&head_outs);
            let proj_lin = self.tape.matmul(merged, w_out);
            let proj = self.tape.add_row_broadcast(proj_lin, b_out);
            seq = self.tape.add(seq, proj);

            let x2 = self.tape.layer_norm(seq, g2, be2, LAYER_NORM_EPS);
            let h1_lin = self.tape.matmul(x2, w_mlp1);
            let h1 = self.tape.add_row_broadcast(h1_lin, b_mlp1);
            let h1a = self.tape.gelu(h1);
            let h2_lin = self.tape.matmul(h1a, w_mlp2);
            let h2 = self.tape.add_row_broadcast(h2_lin, b_mlp2);
            seq = self.tape.add(seq, h2);
        }

        let z = self.tape.row(seq, 0);
        let head_wt = self.tape.transpose(self.head_w);
        let logits_lin = self.tape.matmul(z, head_wt);
        let logits = self.tape.add(logits_lin, self.head_b);
        let probs = self.tape.sigmoid(logits);

        Ok(SampleNodes {
            z,
            logits,
            probs,
            q_ids,
            attn_ids,
        })
    }

    fn extract(&self, nodes: &SampleNodes) -> ForwardOutput {
        ForwardOutput {
            z: self.tape.value(nodes.z).data().to_vec(),
            logits: self.tape.value(nodes.logits).data().to_vec(),
            probs: self.tape.value(nodes.probs).data().to_vec(),
        }
    }
}

/// Value-only total loss for a batch, used by the finite-difference checker.
pub fn total_loss(
    state: &ModelState,
    samples: &[SampleView],
    labels: &Matrix,
    task_idx: usize,
    opts: &StepOptions,
) -> Result<LossBreakdown> {
    let (breakdown, _, _) = run_batch(state, samples, labels, task_idx, opts, false)?;
    Ok(breakdown)
}

/// One training step's gradients: builds the batch graph, backpropagates the
/// classification loss, adds the contrastive term analytically, and writes
/// gradients into every updatable tensor's grad buffer (after zeroing them).
/// The optimizer update is the caller's job.
pub fn backward_step(
    state: &mut ModelState,
    samples: &[SampleView],
    labels: &Matrix,
    task_idx: usize,
    opts: &StepOptions,
) -> Result<LossBreakdown> {
    for p in state.params_mut() {
        if p.updatable() {
            p.zero_grad();
        }
    }
    let (breakdown, grads, builder_state) = run_batch(state, samples, labels, task_idx, opts, true)?;
    let BuilderHarvest {
        enc_w,
        enc_b,
        head_w,
        head_b,
        task_prompt,
        pattern_leaves,
        bank_grads,
        weight_grads,
    } = builder_state.expect("grads requested");
    let mut grads = grads.expect("grads requested");

    for (v, id) in enc_w.iter().enumerate() {
        if let Some(g) = grads.take(*id) {
            state.encoders[v].weight.grad.add_assign(&g)?;
        }
    }
    for (v, id) in enc_b.iter().enumerate() {
        if let Some(g) = grads.take(*id) {
            state.encoders[v].bias.grad.add_assign(&g)?;
        }
    }
    if let Some(g) = grads.take(head_w) {
        state.tasks[task_idx].head_weight.grad.add_assign(&g)?;
    }
    if let Some(g) = grads.take(head_b) {
        state.tasks[task_idx].head_bias.grad.add_assign(&g)?;
    }
    if let Some(id) = task_prompt {
        if let Some(g) = grads.take(id) {
            state.tasks[task_idx].prompt.grad.add_assign(&g)?;
        }
    }

    if state.bank.updatable() && !state.ablate_prompts {
        let mut acc = BankGrads::zeros_like(&state.bank);
        let mut upstreams: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (pattern_idx, leaf) in &pattern_leaves {
            if let Some(g) = grads.get(*leaf) {
                upstreams.insert(*pattern_idx, g.data().to_vec());
            }
        }
        if let Some(bg) = &bank_grads {
            // bg columns follow opts.dcl_patterns order.
            for (col, pattern) in opts.dcl_patterns.iter().enumerate() {
                let entry = upstreams
                    .entry(pattern.index())
                    .or_insert_with(|| vec![0.0; state.bank.prompt_len()]);
                for (r, slot) in entry.iter_mut().enumerate() {
                    *slot += opts.lambda * bg.get(r, col);
                }
            }
        }
        let n = state.bank.n_views();
        for (idx, upstream) in &upstreams {
            let pattern = MissingPattern::from_index(*idx, n)?;
            state.bank.accumulate_backward(&pattern, upstream, &mut acc)?;
        }
        state.bank.apply_grads(&acc)?;
    }

    if state.view_weights.raw.updatable() {
        if let Some(wg) = &weight_grads {
            state
                .view_weights
                .raw
                .grad
                .add_assign(&wg.scale(opts.lambda))?;
        }
    }

    Ok(breakdown)
}

struct BuilderHarvest {
    enc_w: Vec<NodeId>,
    enc_b: Vec<NodeId>,
    head_w: NodeId,
    head_b: NodeId,
    task_prompt: Option<NodeId>,
    pattern_leaves: Vec<(usize, NodeId)>,
    /// d x |dcl_patterns| prompt gradients from the contrastive term.
    bank_grads: Option<Matrix>,
    weight_grads: Option<Matrix>,
}

fn run_batch(
    state: &ModelState,
    samples: &[SampleView],
    labels: &Matrix,
    task_idx: usize,
    opts: &StepOptions,
    grads_enabled: bool,
) -> Result<(LossBreakdown, Option<Grads>, Option<BuilderHarvest>)> {
    if samples.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    if task_idx >= state.tasks.len() {
        return Err(Error::Validation(format!(
            "task index {task_idx} out of range: {} pathways registered",
            state.tasks.len()
        )));
    }
    let n_classes = state.tasks[task_idx].num_classes;
    if labels.shape() != (samples.len(), n_classes) {
        return Err(shape_err(format!(
            "labels {}x{} but batch has {} samples over {} classes",
            labels.rows(),
            labels.cols(),
            samples.len(),
            n_classes
        )));
    }

    let mut builder = GraphBuilder::new(state, task_idx, grads_enabled)?;
    let mut sample_losses = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let nodes = builder.forward_sample(sample)?;
        let row = Matrix::row_vector(labels.row(i).to_vec());
        sample_losses.push(builder.tape.bce(nodes.probs, row, PROB_CLAMP));
    }
    let mut acc = sample_losses[0];
    for &loss in &sample_losses[1..] {
        acc = builder.tape.add(acc, loss);
    }
    let bce_node = builder.tape.scale(acc, 1.0 / samples.len() as f64);
    let bce = builder.tape.value(bce_node).get(0, 0);

    // Contrastive term over the configured pattern domain. Skipped when
    // disabled or when prompts are ablated (nothing trainable feeds it).
    let mut contrastive = 0.0;
    let mut bank_grads = None;
    let mut weight_grads = None;
    if opts.lambda != 0.0 && !state.ablate_prompts && !opts.dcl_patterns.is_empty() {
        let prompts = state.bank.materialize_patterns(&opts.dcl_patterns)?;
        let pairs = build_pairs(&opts.dcl_patterns, &state.view_weights)?;
        let out = if opts.weighted_positive_term {
            dynamic_contrastive_loss_weighted(
                &prompts,
                &pairs,
                opts.alpha,
                &opts.dcl_patterns,
                &state.view_weights,
            )?
        } else {
            dynamic_contrastive_loss(&prompts, &pairs, opts.alpha, state.n_views())?
        };
        contrastive = out.loss;
        bank_grads = Some(out.prompt_grads);
        weight_grads = Some(out.weight_grads);
    }

    let breakdown = LossBreakdown {
        bce,
        contrastive,
        total: bce + opts.lambda * contrastive,
    };

    if !grads_enabled {
        return Ok((breakdown, None, None));
    }

    let grads = builder.tape.backward(bce_node)?;
    let harvest = BuilderHarvest {
        enc_w: builder.enc_w.clone(),
        enc_b: builder.enc_b.clone(),
        head_w: builder.head_w,
        head_b: builder.head_b,
        task_prompt: builder.task_prompt,
        pattern_leaves: builder
            .patterns
            .iter()
            .map(|(idx, nodes)| (*idx, nodes.leaf))
            .collect(),
        bank_grads,
        weight_grads,
    };
    Ok((breakdown, Some(grads), Some(harvest)))
}
