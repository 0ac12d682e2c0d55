//! Tensor-train factorized prompt bank.
//!
//! The bank stores one compact generator instead of a prompt per missing
//! pattern. A pattern m = (m_1..m_n) selects one slice per core; the chain
//! product of the selected slices with the terminal core yields a coefficient
//! row beta_m, and the prompt is the shared basis applied to it:
//!
//! ```text
//! beta_m = G_1(m_1) . G_2(m_2) ... G_n(m_n) . G_{n+1}    (1 x k)
//! prompt(m) = basis . beta_m^T                           (d-vector)
//! ```
//!
//! Core ell has slice shape r_{ell-1} x r_ell with the boundary rank r_0
//! fixed to 1 so the chain starts as a row; the terminal core is r_n x k.
//! Parameter count is sum over cores of r_{ell-1} * 2 * r_ell, plus r_n * k
//! for the terminal, plus d * k for the basis, independent of the 2^n
//! pattern count.

use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;
use crate::param::ParamTensor;
use crate::rng::Rng;

use super::pattern::MissingPattern;

/// One tensor-train core: two rank slices, one per indicator bit value.
#[derive(Clone, Debug)]
pub struct TtCore {
    /// slices[0] answers bit 0 (view missing), slices[1] bit 1 (observed).
    pub slices: [ParamTensor; 2],
}

impl TtCore {
    pub fn left_rank(&self) -> usize {
        self.slices[0].value.rows()
    }

    pub fn right_rank(&self) -> usize {
        self.slices[0].value.cols()
    }

    pub fn slice(&self, observed: bool) -> &Matrix {
        &self.slices[observed as usize].value
    }
}

/// Gradients of some scalar with respect to every bank tensor.
#[derive(Clone, Debug)]
pub struct TtGrads {
    pub basis: Matrix,
    pub cores: Vec<[Matrix; 2]>,
    pub terminal: Matrix,
}

#[derive(Clone, Debug)]
pub struct TensorTrainBank {
    n: usize,
    d: usize,
    k: usize,
    ranks: Vec<usize>,
    pub basis: ParamTensor,
    pub cores: Vec<TtCore>,
    pub terminal: ParamTensor,
}

impl TensorTrainBank {
    /// Builds a bank with explicit ranks `r_0..r_n` (length n + 1, r_0 = 1).
    /// All tensors are initialized from `rng` as normal(0, 0.02).
    pub fn new(n: usize, d: usize, k: usize, ranks: &[usize], rng: &mut Rng) -> Result<Self> {
        if n == 0 || d == 0 || k == 0 {
            return Err(Error::Config(format!(
                "tensor-train bank needs n, d, k >= 1 (got n={n}, d={d}, k={k})"
            )));
        }
        if ranks.len() != n + 1 {
            return Err(Error::Config(format!(
                "need {} ranks r_0..r_n, got {}",
                n + 1,
                ranks.len()
            )));
        }
        if ranks[0] != 1 {
            return Err(Error::Config(format!(
                "boundary rank r_0 must be 1 so the chain contracts to a row, got {}",
                ranks[0]
            )));
        }
        if ranks.iter().any(|&r| r == 0) {
            return Err(Error::Config("tensor-train ranks must be positive".into()));
        }

        let init = |rows: usize, cols: usize, rng: &mut Rng| {
            Matrix::from_fn(rows, cols, |_, _| rng.normal() * 0.02)
        };

        let basis = ParamTensor::new("bank.basis", init(d, k, rng), true);
        let mut cores = Vec::with_capacity(n);
        for ell in 0..n {
            let (lr, rr) = (ranks[ell], ranks[ell + 1]);
            let s0 = ParamTensor::new(format!("bank.core{ell}.s0"), init(lr, rr, rng), true);
            let s1 = ParamTensor::new(format!("bank.core{ell}.s1"), init(lr, rr, rng), true);
            cores.push(TtCore { slices: [s0, s1] });
        }
        let terminal = ParamTensor::new("bank.terminal", init(ranks[n], k, rng), true);

        Ok(TensorTrainBank {
            n,
            d,
            k,
            ranks: ranks.to_vec(),
            basis,
            cores,
            terminal,
        })
    }

    /// Uniform internal rank R: ranks (1, R, R, ..., R).
    pub fn with_uniform_rank(n: usize, d: usize, k: usize, r: usize, rng: &mut Rng) -> Result<Self> {
        let mut ranks = vec![r; n + 1];
        ranks[0] = 1;
        Self::new(n, d, k, &ranks, rng)
    }

    pub fn n_views(&self) -> usize {
        self.n
    }

    pub fn prompt_len(&self) -> usize {
        self.d
    }

    pub fn factors(&self) -> usize {
        self.k
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    fn check_pattern(&self, m: &MissingPattern) -> Result<()> {
        if m.n_views() != self.n {
            return Err(shape_err(format!(
                "pattern has {} views, bank expects {}",
                m.n_views(),
                self.n
            )));
        }
        Ok(())
    }

    /// Coefficient row beta_m, the chain product selected by the pattern.
    pub fn tt_coefficients(&self, m: &MissingPattern) -> Result<Matrix> {
        self.check_pattern(m)?;
        let mut row = Matrix::scalar(1.0);
        for (ell, core) in self.cores.iter().enumerate() {
            row = row.matmul(core.slice(m.is_observed(ell)))?;
        }
        row.matmul(&self.terminal.value)
    }

    /// The d-vector prompt basis . beta_m^T.
    pub fn prompt_for_pattern(&self, m: &MissingPattern) -> Result<Vec<f64>> {
        let beta = self.tt_coefficients(m)?;
        let col = self.basis.value.matmul(&beta.transpose())?;
        Ok(col.data().to_vec())
    }

    /// Gradients of the scalar <upstream, prompt(m)> with respect to every
    /// bank tensor. Prefix and suffix chain products isolate each core:
    /// with L_ell the product left of core ell and R_ell the product right
    /// of it (terminal included), the selected slice's gradient is
    /// L_ell^T (R_ell basis^T upstream)^T; the unselected slice gets zero.
    pub fn pattern_backward(&self, m: &MissingPattern, upstream: &[f64]) -> Result<TtGrads> {
        self.check_pattern(m)?;
        if upstream.len() != self.d {
            return Err(shape_err(format!(
                "upstream has {} entries, prompt length is {}",
                upstream.len(),
                self.d
            )));
        }
        let u = Matrix::from_vec(self.d, 1, upstream.to_vec())?;

        // prefix[ell]: 1 x r_ell product of cores 0..ell.
        let mut prefix = Vec::with_capacity(self.n + 1);
        prefix.push(Matrix::scalar(1.0));
        for (ell, core) in self.cores.iter().enumerate() {
            let next = prefix[ell].matmul(core.slice(m.is_observed(ell)))?;
            prefix.push(next);
        }
        // suffix[ell]: r_ell x k product of cores ell..n and the terminal.
        let mut suffix = vec![self.terminal.value.clone()];
        for ell in (0..self.n).rev() {
            let head = self.cores[ell]
                .slice(m.is_observed(ell))
                .matmul(&suffix[0])?;
            suffix.insert(0, head);
        }

        let beta = prefix[self.n].matmul(&self.terminal.value)?;
        let coeff = self.basis.value.transpose().matmul(&u)?; // k x 1

        let grad_basis = u.matmul(&beta)?;
        let mut grad_cores = Vec::with_capacity(self.n);
        for ell in 0..self.n {
            let right = suffix[ell + 1].matmul(&coeff)?; // r_{ell+1} x 1
            let grad = prefix[ell].transpose().matmul(&right.transpose())?;
            let zero = Matrix::zeros(self.ranks[ell], self.ranks[ell + 1]);
            let pair = if m.is_observed(ell) {
                [zero, grad]
            } else {
                [grad, zero]
            };
            grad_cores.push(pair);
        }
        let grad_terminal = prefix[self.n].transpose().matmul(&coeff.transpose())?;

        Ok(TtGrads {
            basis: grad_basis,
            cores: grad_cores,
            terminal: grad_terminal,
        })
    }

    /// Exact trainable parameter count of this bank.
    pub fn param_count(&self) -> usize {
        let core_params: usize = (0..self.n)
            .map(|ell| self.ranks[ell] * 2 * self.ranks[ell + 1])
            .sum();
        core_params + self.ranks[self.n] * self.k + self.d * self.k
    }

    pub fn tensors(&self) -> Vec<&ParamTensor> {
        let mut out = vec![&self.basis];
        for core in &self.cores {
            out.push(&core.slices[0]);
            out.push(&core.slices[1]);
        }
        out.push(&self.terminal);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = vec![&mut self.basis];
        for core in &mut self.cores {
            let [a, b] = &mut core.slices;
            out.push(a);
            out.push(b);
        }
        out.push(&mut self.terminal);
        out
    }
}
