//! Prompt banks: map a missing-view pattern to a d-vector prompt.
//!
//! Three interchangeable storage schemes:
//! - [`TensorTrainBank`]: compact factorized generator, parameters grow
//!   affinely in the view count.
//! - [`DenseBank`]: one explicit column per pattern (2^n columns).
//! - [`PerViewBank`]: one vector per view; a pattern's prompt is the sum
//!   over its observed views.

mod pattern;
mod tensor_train;

pub use pattern::MissingPattern;
pub use tensor_train::{TensorTrainBank, TtCore, TtGrads};

use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;
use crate::param::ParamTensor;
use crate::rng::Rng;

/// Hard cap on materialized bank size: 2^n * d must stay within 2^26 values.
pub const MATERIALIZE_BUDGET: usize = 1 << 26;

fn check_budget(n: usize, d: usize) -> Result<()> {
    if n >= usize::BITS as usize - 1 || (1usize << n).saturating_mul(d) > MATERIALIZE_BUDGET {
        return Err(Error::Capacity(format!(
            "materializing 2^{n} prompts of length {d} exceeds the budget of {MATERIALIZE_BUDGET} \
             values; subsample patterns (see dcl_pattern_subsample) instead of materializing"
        )));
    }
    Ok(())
}

/// Explicit table bank: column j holds the prompt for pattern index j.
#[derive(Clone, Debug)]
pub struct DenseBank {
    n: usize,
    d: usize,
    pub table: ParamTensor,
}

impl DenseBank {
    pub fn new(n: usize, d: usize, rng: &mut Rng) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Config(format!(
                "dense bank needs n, d >= 1 (got n={n}, d={d})"
            )));
        }
        check_budget(n, d)?;
        let table = Matrix::from_fn(d, 1 << n, |_, _| rng.normal() * 0.02);
        Ok(DenseBank {
            n,
            d,
            table: ParamTensor::new("bank.table", table, true),
        })
    }

    pub fn prompt_for_pattern(&self, m: &MissingPattern) -> Result<Vec<f64>> {
        if m.n_views() != self.n {
            return Err(shape_err(format!(
                "pattern has {} views, bank expects {}",
                m.n_views(),
                self.n
            )));
        }
        let j = m.index();
        Ok((0..self.d).map(|r| self.table.value.get(r, j)).collect())
    }

    pub fn param_count(&self) -> usize {
        self.d * (1 << self.n)
    }
}

/// Per-view bank: prompt(m) is the sum of the observed views' vectors.
#[derive(Clone, Debug)]
pub struct PerViewBank {
    n: usize,
    d: usize,
    pub views: Vec<ParamTensor>,
}

impl PerViewBank {
    pub fn new(n: usize, d: usize, rng: &mut Rng) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Config(format!(
                "per-view bank needs n, d >= 1 (got n={n}, d={d})"
            )));
        }
        let views = (0..n)
            .map(|v| {
                let m = Matrix::from_fn(d, 1, |_, _| rng.normal() * 0.02);
                ParamTensor::new(format!("bank.view{v}"), m, true)
            })
            .collect();
        Ok(PerViewBank { n, d, views })
    }

    pub fn prompt_for_pattern(&self, m: &MissingPattern) -> Result<Vec<f64>> {
        if m.n_views() != self.n {
            return Err(shape_err(format!(
                "pattern has {} views, bank expects {}",
                m.n_views(),
                self.n
            )));
        }
        let mut out = vec![0.0; self.d];
        for v in 0..self.n {
            if m.is_observed(v) {
                for (slot, x) in out.iter_mut().zip(self.views[v].value.data()) {
                    *slot += x;
                }
            }
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.n * self.d
    }
}

/// A prompt bank of any storage scheme.
#[derive(Clone, Debug)]
pub enum PromptBank {
    TensorTrain(TensorTrainBank),
    Dense(DenseBank),
    PerView(PerViewBank),
}

impl PromptBank {
    pub fn n_views(&self) -> usize {
        match self {
            PromptBank::TensorTrain(b) => b.n_views(),
            PromptBank::Dense(b) => b.n,
            PromptBank::PerView(b) => b.n,
        }
    }

    pub fn prompt_len(&self) -> usize {
        match self {
            PromptBank::TensorTrain(b) => b.prompt_len(),
            PromptBank::Dense(b) => b.d,
            PromptBank::PerView(b) => b.d,
        }
    }

    pub fn prompt_for_pattern(&self, m: &MissingPattern) -> Result<Vec<f64>> {
        match self {
            PromptBank::TensorTrain(b) => b.prompt_for_pattern(m),
            PromptBank::Dense(b) => b.prompt_for_pattern(m),
            PromptBank::PerView(b) => b.prompt_for_pattern(m),
        }
    }

    /// Every prompt as a d x 2^n matrix, column j = pattern index j.
    /// Column 0 (the all-zero pattern) exists as a bank entry even though no
    /// sample can carry that indicator. Refuses to allocate beyond
    /// [`MATERIALIZE_BUDGET`].
    pub fn materialize_all(&self) -> Result<Matrix> {
        let n = self.n_views();
        let d = self.prompt_len();
        check_budget(n, d)?;
        let mut out = Matrix::zeros(d, 1 << n);
        for j in 0..1usize << n {
            let m = MissingPattern::from_index(j, n)?;
            let prompt = self.prompt_for_pattern(&m)?;
            for (r, &x) in prompt.iter().enumerate() {
                out.set(r, j, x);
            }
        }
        Ok(out)
    }

    /// Prompts for an explicit pattern subset, column order following
    /// `patterns`.
    pub fn materialize_patterns(&self, patterns: &[MissingPattern]) -> Result<Matrix> {
        let d = self.prompt_len();
        let mut out = Matrix::zeros(d, patterns.len());
        for (j, m) in patterns.iter().enumerate() {
            let prompt = self.prompt_for_pattern(m)?;
            for (r, &x) in prompt.iter().enumerate() {
                out.set(r, j, x);
            }
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        match self {
            PromptBank::TensorTrain(b) => b.param_count(),
            PromptBank::Dense(b) => b.param_count(),
            PromptBank::PerView(b) => b.param_count(),
        }
    }

    pub fn tensors(&self) -> Vec<&ParamTensor> {
        match self {
            PromptBank::TensorTrain(b) => b.tensors(),
            PromptBank::Dense(b) => vec![&b.table],
            PromptBank::PerView(b) => b.views.iter().collect(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            PromptBank::TensorTrain(b) => b.tensors_mut(),
            PromptBank::Dense(b) => vec![&mut b.table],
            PromptBank::PerView(b) => b.views.iter_mut().collect(),
        }
    }

    /// True when any bank tensor may currently receive updates.
    pub fn updatable(&self) -> bool {
        self.tensors().iter().any(|t| t.updatable())
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for t in self.tensors_mut() {
            t.frozen = frozen;
        }
    }

    /// Accumulates d<upstream, prompt(m)>/d(bank tensors) into `acc`.
    pub fn accumulate_backward(
        &self,
        m: &MissingPattern,
        upstream: &[f64],
        acc: &mut BankGrads,
    ) -> Result<()> {
        match (self, acc) {
            (PromptBank::TensorTrain(b), BankGrads::TensorTrain(g)) => {
                let delta = b.pattern_backward(m, upstream)?;
                g.basis.add_assign(&delta.basis)?;
                for (slot, d) in g.cores.iter_mut().zip(&delta.cores) {
                    slot[0].add_assign(&d[0])?;
                    slot[1].add_assign(&d[1])?;
                }
                g.terminal.add_assign(&delta.terminal)?;
            }
            (PromptBank::Dense(b), BankGrads::Dense(table)) => {
                if upstream.len() != b.d {
                    return Err(shape_err(format!(
                        "upstream has {} entries, prompt length is {}",
                        upstream.len(),
                        b.d
                    )));
                }
                let j = m.index();
                for (r, &u) in upstream.iter().enumerate() {
                    let cur = table.get(r, j);
                    table.set(r, j, cur + u);
                }
            }
            (PromptBank::PerView(b), BankGrads::PerView(views)) => {
                if upstream.len() != b.d {
                    return Err(shape_err(format!(
                        "upstream has {} entries, prompt length is {}",
                        upstream.len(),
                        b.d
                    )));
                }
                for v in 0..b.n {
                    if m.is_observed(v) {
                        for (r, &u) in upstream.iter().enumerate() {
                            views[v].data_mut()[r] += u;
                        }
                    }
                }
            }
            _ => {
                return Err(Error::Validation(
                    "gradient accumulator does not match bank kind".into(),
                ))
            }
        }
        Ok(())
    }

    /// Writes accumulated gradients into the bank tensors' grad buffers.
    pub fn apply_grads(&mut self, grads: &BankGrads) -> Result<()> {
        match (self, grads) {
            (PromptBank::TensorTrain(b), BankGrads::TensorTrain(g)) => {
                b.basis.grad.add_assign(&g.basis)?;
                for (core, d) in b.cores.iter_mut().zip(&g.cores) {
                    core.slices[0].grad.add_assign(&d[0])?;
                    core.slices[1].grad.add_assign(&d[1])?;
                }
                b.terminal.grad.add_assign(&g.terminal)?;
            }
            (PromptBank::Dense(b), BankGrads::Dense(table)) => {
                b.table.grad.add_assign(table)?;
            }
            (PromptBank::PerView(b), BankGrads::PerView(views)) => {
                for (t, g) in b.views.iter_mut().zip(views) {
                    t.grad.add_assign(g)?;
                }
            }
            _ => {
                return Err(Error::Validation(
                    "gradient accumulator does not match bank kind".into(),
                ))
            }
        }
        Ok(())
    }
}

/// Zero-initialized gradient accumulator matching a bank's storage scheme.
#[derive(Clone, Debug)]
pub enum BankGrads {
    TensorTrain(TtGrads),
    Dense(Matrix),
    PerView(Vec<Matrix>),
}

impl BankGrads {
    pub fn zeros_like(bank: &PromptBank) -> Self {
        match bank {
            PromptBank::TensorTrain(b) => {
                let ranks = b.ranks();
                BankGrads::TensorTrain(TtGrads {
                    basis: Matrix::zeros(b.prompt_len(), b.factors()),
                    cores: (0..b.n_views())
                        .map(|ell| {
                            [
                                Matrix::zeros(ranks[ell], ranks[ell + 1]),
                                Matrix::zeros(ranks[ell], ranks[ell + 1]),
                            ]
                        })
                        .collect(),
                    terminal: Matrix::zeros(ranks[b.n_views()], b.factors()),
                })
            }
            PromptBank::Dense(b) => BankGrads::Dense(Matrix::zeros(b.d, 1 << b.n)),
            PromptBank::PerView(b) => {
                BankGrads::PerView((0..b.n).map(|_| Matrix::zeros(b.d, 1)).collect())
            }
        }
    }
}

/// One row of the parameter accounting table.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamCount {
    pub scheme: String,
    pub formula: String,
    pub count: u64,
}

/// Count for the dense table bank: (2^n) * d.
pub fn dense_count(n: u32, d: u64) -> ParamCount {
    ParamCount {
        scheme: "dense".into(),
        formula: "(2^n) * d".into(),
        count: (1u64 << n) * d,
    }
}

/// Count for the per-view bank: n * d.
pub fn per_view_count(n: u32, d: u64) -> ParamCount {
    ParamCount {
        scheme: "per-view".into(),
        formula: "n * d".into(),
        count: n as u64 * d,
    }
}

/// Count for a cubic cross-modal prompt scheme (reference point only, not a
/// runnable bank here): n^3 + d * r.
pub fn cross_modal_count(n: u32, d: u64, r: u64) -> ParamCount {
    ParamCount {
        scheme: "cross-modal".into(),
        formula: "n^3 + d * r".into(),
        count: (n as u64).pow(3) + d * r,
    }
}

/// Closed-form upper bound for a uniform-rank tensor-train bank:
/// n * R^2 * k + d * k.
pub fn tt_bound_count(n: u32, d: u64, k: u64, big_r: u64) -> ParamCount {
    ParamCount {
        scheme: "tt-bound".into(),
        formula: "n * R^2 * k + d * k".into(),
        count: n as u64 * big_r * big_r * k + d * k,
    }
}

/// Exact tensor-train count for explicit ranks r_0..r_n.
pub fn tt_exact_count(d: u64, k: u64, ranks: &[u64]) -> ParamCount {
    let n = ranks.len() - 1;
    let cores: u64 = (0..n).map(|ell| ranks[ell] * 2 * ranks[ell + 1]).sum();
    ParamCount {
        scheme: "tt-exact".into(),
        formula: "sum r_(l-1)*2*r_l + r_n*k + d*k".into(),
        count: cores + ranks[n] * k + d * k,
    }
}

/// Exact tensor-train count for uniform internal rank R (r_0 = 1).
pub fn tt_exact_uniform_count(n: u32, d: u64, k: u64, big_r: u64) -> ParamCount {
    let mut ranks = vec![big_r; n as usize + 1];
    ranks[0] = 1;
    tt_exact_count(d, k, &ranks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_basis_tt(n: usize, d: usize, rng: &mut Rng) -> TensorTrainBank {
        TensorTrainBank::with_uniform_rank(n, d, 2, 2, rng).unwrap()
    }

    #[test]
    fn dense_lookup_hits_requested_column() {
        let mut rng = Rng::new(0);
        let mut bank = DenseBank::new(6, 4, &mut rng).unwrap();
        // Column 3 = e1.
        for r in 0..4 {
            for j in 0..64 {
                bank.table.value.set(r, j, 0.0);
            }
        }
        bank.table.value.set(1, 3, 1.0);
        let mut bits = vec![false; 6];
        bits[0] = true;
        bits[1] = true;
        let got = bank
            .prompt_for_pattern(&MissingPattern::new(bits))
            .unwrap();
        assert_eq!(got, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn per_view_sums_observed_views() {
        let mut rng = Rng::new(0);
        let mut bank = PerViewBank::new(3, 2, &mut rng).unwrap();
        for (v, t) in bank.views.iter_mut().enumerate() {
            t.value = Matrix::from_vec(2, 1, vec![v as f64 + 1.0, 0.0]).unwrap();
        }
        let got = bank
            .prompt_for_pattern(&MissingPattern::new(vec![true, false, true]))
            .unwrap();
        assert_eq!(got, vec![4.0, 0.0]);
    }

    #[test]
    fn materialize_matches_per_pattern_lookup() {
        let mut rng = Rng::new(9);
        let bank = PromptBank::TensorTrain(unit_basis_tt(4, 5, &mut rng));
        let all = bank.materialize_all().unwrap();
        assert_eq!(all.shape(), (5, 16));
        for j in 0..16 {
            let m = MissingPattern::from_index(j, 4).unwrap();
            let p = bank.prompt_for_pattern(&m).unwrap();
            for r in 0..5 {
                assert_eq!(all.get(r, j), p[r]);
            }
        }
    }

    #[test]
    fn materialize_budget_enforced() {
        let mut rng = Rng::new(1);
        let bank = PromptBank::TensorTrain(
            TensorTrainBank::with_uniform_rank(24, 16, 2, 2, &mut rng).unwrap(),
        );
        let err = bank.materialize_all().unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
        assert!(err.to_string().contains("subsample"));
    }

    #[test]
    fn dense_construction_respects_budget() {
        let mut rng = Rng::new(1);
        assert!(matches!(
            DenseBank::new(24, 16, &mut rng),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn table_values_match_frozen_reference() {
        // n=6, d=128, k=4, R=2.
        assert_eq!(dense_count(6, 128).count, 8192);
        assert_eq!(per_view_count(6, 128).count, 768);
        assert_eq!(tt_bound_count(6, 128, 4, 2).count, 608);
        assert_eq!(tt_exact_uniform_count(6, 128, 4, 2).count, 564);
        assert_eq!(cross_modal_count(6, 128, 2).count, 216 + 256);
    }

    #[test]
    fn tt_exact_growth_is_affine_dense_growth_geometric() {
        let mut prev_exact = tt_exact_uniform_count(2, 128, 4, 2).count;
        let mut prev_dense = dense_count(2, 128).count;
        for n in 3..=10 {
            let exact = tt_exact_uniform_count(n, 128, 4, 2).count;
            let dense = dense_count(n, 128).count;
            assert_eq!(exact - prev_exact, 8, "2*R^2 new values per view at R=2");
            assert_eq!(dense, prev_dense * 2);
            prev_exact = exact;
            prev_dense = dense;
        }
    }

    #[test]
    fn bank_grads_accumulate_for_all_schemes() {
        let mut rng = Rng::new(21);
        let upstream = vec![1.0, -2.0, 0.5];
        let m = MissingPattern::new(vec![true, false]);

        let dense = PromptBank::Dense(DenseBank::new(2, 3, &mut rng).unwrap());
        let mut acc = BankGrads::zeros_like(&dense);
        dense.accumulate_backward(&m, &upstream, &mut acc).unwrap();
        dense.accumulate_backward(&m, &upstream, &mut acc).unwrap();
        if let BankGrads::Dense(t) = &acc {
            assert_eq!(t.get(1, 1), -4.0);
            assert_eq!(t.get(0, 0), 0.0);
        } else {
            panic!("wrong accumulator kind");
        }

        let pv = PromptBank::PerView(PerViewBank::new(2, 3, &mut rng).unwrap());
        let mut acc = BankGrads::zeros_like(&pv);
        pv.accumulate_backward(&m, &upstream, &mut acc).unwrap();
        if let BankGrads::PerView(views) = &acc {
            assert_eq!(views[0].data(), &[1.0, -2.0, 0.5]);
            assert_eq!(views[1].max_abs(), 0.0);
        } else {
            panic!("wrong accumulator kind");
        }
    }

    #[test]
    fn mismatched_accumulator_is_rejected() {
        let mut rng = Rng::new(4);
        let dense = PromptBank::Dense(DenseBank::new(2, 3, &mut rng).unwrap());
        let pv = PromptBank::PerView(PerViewBank::new(2, 3, &mut rng).unwrap());
        let mut acc = BankGrads::zeros_like(&pv);
        let m = MissingPattern::new(vec![true, false]);
        assert!(dense
            .accumulate_backward(&m, &[0.0, 0.0, 0.0], &mut acc)
            .is_err());
    }
}
