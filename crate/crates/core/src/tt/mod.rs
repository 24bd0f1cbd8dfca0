//! Tensor-train vectors and operators.
//!
//! A vector train stores a tensor with `m` indices as a chain of order-3
//! cores; core `k` has shape `(r_{k-1}, n_k, r_k)` with boundary ranks 1.
//! Core 0 is the leftmost and carries the most significant index of the
//! flattened row-major layout, so for quantized grids the leftmost cores
//! resolve the coarsest scales. An operator train stores a matrix the same
//! way with order-4 cores `(r_{k-1}, p_k, q_k, r_k)`, `p` indexing rows and
//! `q` columns.

pub mod arithmetic;
pub mod linalg;
pub mod rounding;

use ndarray::{Array1, Array2, Array3, Array4};

use crate::error::{CoreError, Result};
use linalg::reshape2;

/// Rank-control policy for encoding, rounding, and sweep solves.
///
/// `eps` is a relative Frobenius budget: a rounding pass distributes
/// `eps * ||x||` across the bonds. `eps = 0` keeps everything above the
/// numerical-zero floor. `max_rank` caps every bond unconditionally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncPolicy {
    pub eps: f64,
    pub max_rank: Option<usize>,
}

impl TruncPolicy {
    /// Keep all numerically nonzero content.
    pub fn lossless() -> Self {
        TruncPolicy { eps: 0.0, max_rank: None }
    }

    pub fn with_eps(eps: f64) -> Self {
        TruncPolicy { eps, max_rank: None }
    }

    pub fn with_eps_and_cap(eps: f64, max_rank: usize) -> Self {
        TruncPolicy { eps, max_rank: Some(max_rank) }
    }
}

/// Vector in tensor-train form.
#[derive(Debug, Clone)]
pub struct TtVector {
    pub(crate) cores: Vec<Array3<f64>>,
    /// Index of the orthogonality center if the train is known to be
    /// orthogonal on both sides of it; `None` when unknown.
    pub(crate) center: Option<usize>,
}

impl TtVector {
    /// Build from cores, validating the chain.
    pub fn new(cores: Vec<Array3<f64>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(CoreError::ShapeMismatch("empty core chain".into()));
        }
        if cores[0].shape()[0] != 1 {
            return Err(CoreError::ShapeMismatch(format!(
                "left boundary rank {} != 1",
                cores[0].shape()[0]
            )));
        }
        if cores[cores.len() - 1].shape()[2] != 1 {
            return Err(CoreError::ShapeMismatch(format!(
                "right boundary rank {} != 1",
                cores[cores.len() - 1].shape()[2]
            )));
        }
        for k in 0..cores.len() - 1 {
            if cores[k].shape()[2] != cores[k + 1].shape()[0] {
                return Err(CoreError::ShapeMismatch(format!(
                    "bond {} rank mismatch: {} vs {}",
                    k,
                    cores[k].shape()[2],
                    cores[k + 1].shape()[0]
                )));
            }
        }
        Ok(TtVector { cores, center: None })
    }

    pub(crate) fn from_cores_unchecked(cores: Vec<Array3<f64>>, center: Option<usize>) -> Self {
        TtVector { cores, center }
    }

    /// Number of cores.
    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn cores(&self) -> &[Array3<f64>] {
        &self.cores
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    /// Physical dimension of each core.
    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[1]).collect()
    }

    /// Interior bond ranks (length `len() - 1`).
    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1]
            .iter()
            .map(|c| c.shape()[2])
            .collect()
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Total number of entries of the represented dense vector.
    pub fn dense_len(&self) -> usize {
        self.dims().iter().product()
    }

    /// Number of stored floats across all cores.
    pub fn storage_len(&self) -> usize {
        self.cores.iter().map(|c| c.len()).sum()
    }

    /// Rank-1 train of all ones.
    pub fn constant_one(dims: &[usize]) -> Self {
        let cores = dims
            .iter()
            .map(|&n| Array3::ones((1, n, 1)))
            .collect();
        TtVector { cores, center: Some(0) }
    }

    /// Rank-1 train from per-core factors.
    pub fn rank_one(factors: &[Array1<f64>]) -> Self {
        let cores = factors
            .iter()
            .map(|f| {
                Array3::from_shape_vec((1, f.len(), 1), f.to_vec()).expect("rank_one core")
            })
            .collect();
        TtVector { cores, center: None }
    }

    /// Encode a dense vector by successive SVD, left to right.
    ///
    /// `x` is read in row-major order over `dims`. The relative budget
    /// `policy.eps * ||x||` is split evenly across the `m - 1` bonds.
    /// Returns the train and the achieved truncation error (Frobenius).
    pub fn from_dense(x: &Array1<f64>, dims: &[usize], policy: &TruncPolicy) -> Result<(Self, f64)> {
        let total: usize = dims.iter().product();
        if x.len() != total {
            return Err(CoreError::ShapeMismatch(format!(
                "dense length {} != product of dims {}",
                x.len(),
                total
            )));
        }
        if dims.is_empty() {
            return Err(CoreError::ShapeMismatch("empty dims".into()));
        }
        let m = dims.len();
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            let cores = dims.iter().map(|&n| Array3::zeros((1, n, 1))).collect();
            return Ok((TtVector { cores, center: Some(0) }, 0.0));
        }
        let bond_budget = if m > 1 {
            policy.eps * nrm / ((m - 1) as f64).sqrt()
        } else {
            0.0
        };

        let mut cores = Vec::with_capacity(m);
        let mut rest: usize = total;
        let mut mat = reshape2(x, 1, total);
        let mut r_prev = 1usize;
        let mut disc_sq = 0.0;
        for (k, &n) in dims.iter().enumerate().take(m - 1) {
            rest /= n;
            let mat_k = reshape2(&mat, r_prev * n, rest);
            let t = linalg::svd_trunc(&mat_k, bond_budget, policy.max_rank)?;
            let r_new = t.s.len();
            cores.push(
                Array3::from_shape_vec(
                    (r_prev, n, r_new),
                    t.u.iter().cloned().collect(),
                )
                .expect("encode core shape"),
            );
            let mut sv = t.vt;
            for (i, &si) in t.s.iter().enumerate() {
                sv.row_mut(i).mapv_inplace(|v| v * si);
            }
            mat = sv;
            r_prev = r_new;
            disc_sq += t.discarded_sq;
            let _ = k;
        }
        cores.push(
            Array3::from_shape_vec((r_prev, dims[m - 1], 1), mat.iter().cloned().collect())
                .expect("encode tail shape"),
        );
        Ok((
            TtVector { cores, center: Some(m - 1) },
            disc_sq.max(0.0).sqrt(),
        ))
    }

    /// Contract to a dense vector in row-major order. Intended for small
    /// trains; the result has `dense_len()` entries.
    pub fn to_dense(&self) -> Array1<f64> {
        // State: (rows_produced, r_k) after absorbing core k.
        let mut state = Array2::ones((1, 1));
        for core in &self.cores {
            let (rl, n, rr) = (core.shape()[0], core.shape()[1], core.shape()[2]);
            let mat = reshape2(core, rl, n * rr);
            let prod = state.dot(&mat); // (rows, n * rr)
            state = reshape2(&prod, prod.nrows() * n, rr);
        }
        Array1::from_iter(state.column(0).iter().cloned())
    }

    /// Evaluate a single entry by multiplying the per-core slices.
    pub fn entry(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.cores.len());
        let mut v = Array2::ones((1, 1));
        for (core, &i) in self.cores.iter().zip(idx) {
            let slice = core.index_axis(ndarray::Axis(1), i);
            v = v.dot(&slice);
        }
        v[[0, 0]]
    }

    /// Frobenius norm.
    ///
    /// Computed by orthogonalizing a copy and reading the center core, not
    /// via `tt_inner(self, self)`: the inner product accumulates O(1)
    /// contributions that cancel, which floors its absolute accuracy and
    /// makes norms below ~1e-7 unmeasurable for trains with O(1) cores.
    pub fn norm(&self) -> f64 {
        let mut c = self.clone();
        match rounding::right_orthogonalize(&mut c) {
            Ok(()) => c.cores[0].iter().map(|v| v * v).sum::<f64>().sqrt(),
            Err(_) => arithmetic::tt_inner(self, self).max(0.0).sqrt(),
        }
    }

    /// Multiply by a scalar in place. Applied at the orthogonality center
    /// when one is known so orthogonality is preserved.
    pub fn scale(&mut self, alpha: f64) {
        let k = self.center.unwrap_or(0);
        self.cores[k].mapv_inplace(|v| v * alpha);
    }

    /// Sum of all entries, computed against the all-ones train.
    pub fn sum_entries(&self) -> f64 {
        arithmetic::tt_inner(self, &TtVector::constant_one(&self.dims()))
    }

    /// Mean of all entries.
    pub fn mean(&self) -> f64 {
        self.sum_entries() / self.dense_len() as f64
    }
}

/// Matrix (operator) in tensor-train form.
#[derive(Debug, Clone)]
pub struct TtOperator {
    pub(crate) cores: Vec<Array4<f64>>,
}

impl TtOperator {
    pub fn new(cores: Vec<Array4<f64>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(CoreError::ShapeMismatch("empty operator chain".into()));
        }
        if cores[0].shape()[0] != 1 || cores[cores.len() - 1].shape()[3] != 1 {
            return Err(CoreError::ShapeMismatch(
                "operator boundary ranks must be 1".into(),
            ));
        }
        for k in 0..cores.len() - 1 {
            if cores[k].shape()[3] != cores[k + 1].shape()[0] {
                return Err(CoreError::ShapeMismatch(format!(
                    "operator bond {} rank mismatch: {} vs {}",
                    k,
                    cores[k].shape()[3],
                    cores[k + 1].shape()[0]
                )));
            }
        }
        Ok(TtOperator { cores })
    }

    pub(crate) fn from_cores_unchecked(cores: Vec<Array4<f64>>) -> Self {
        TtOperator { cores }
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn cores(&self) -> &[Array4<f64>] {
        &self.cores
    }

    /// Row dimensions per core.
    pub fn dims_out(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[1]).collect()
    }

    /// Column dimensions per core.
    pub fn dims_in(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[2]).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1]
            .iter()
            .map(|c| c.shape()[3])
            .collect()
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Identity operator with the given per-core dimensions.
    pub fn identity(dims: &[usize]) -> Self {
        let cores = dims
            .iter()
            .map(|&n| {
                let mut c = Array4::zeros((1, n, n, 1));
                for i in 0..n {
                    c[[0, i, i, 0]] = 1.0;
                }
                c
            })
            .collect();
        TtOperator { cores }
    }

    /// Contract to a dense matrix (rows x cols in row-major index order).
    /// Intended for small operators in tests and diagnostics.
    pub fn to_dense(&self) -> Array2<f64> {
        let rows: usize = self.dims_out().iter().product();
        let cols: usize = self.dims_in().iter().product();
        // State over (produced row block, produced col block, rank).
        let mut state = Array1::ones(1);
        let mut prod_r = 1usize;
        let mut prod_c = 1usize;
        for core in &self.cores {
            let (rl, p, q, rr) = (
                core.shape()[0],
                core.shape()[1],
                core.shape()[2],
                core.shape()[3],
            );
            let sm = reshape2(&state, prod_r * prod_c, rl);
            let cm = reshape2(core, rl, p * q * rr);
            let next = sm.dot(&cm); // (R*C, p*q*rr)
            // Reorder (R, C, p, q, rr) -> (R, p, C, q, rr).
            let t = next
                .into_shape_with_order((prod_r, prod_c, p, q, rr))
                .expect("to_dense reshape");
            let t = t.permuted_axes([0, 2, 1, 3, 4]);
            prod_r *= p;
            prod_c *= q;
            state = Array1::from_iter(t.iter().cloned());
        }
        reshape2(&state, rows, cols)
    }

    /// Swap row and column indices.
    pub fn transpose(&self) -> Self {
        let cores = self
            .cores
            .iter()
            .map(|c| {
                c.clone()
                    .permuted_axes([0, 2, 1, 3])
                    .as_standard_layout()
                    .to_owned()
            })
            .collect();
        TtOperator { cores }
    }

    /// Number of stored floats across all cores.
    pub fn storage_len(&self) -> usize {
        self.cores.iter().map(|c| c.len()).sum()
    }

    /// Copy with every entry multiplied by `alpha` (applied to one core).
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.cores[0].mapv_inplace(|v| v * alpha);
        out
    }

    /// Frobenius norm, computed on the flattened vector train.
    pub fn frobenius(&self) -> f64 {
        let cores = self
            .cores
            .iter()
            .map(|c| {
                let (rl, p, q, rr) = (c.shape()[0], c.shape()[1], c.shape()[2], c.shape()[3]);
                Array3::from_shape_vec((rl, p * q, rr), c.iter().cloned().collect())
                    .expect("flatten op core")
            })
            .collect();
        TtVector::from_cores_unchecked(cores, None).norm()
    }
}

pub use arithmetic::{
    op_add, tt_add, tt_apply, tt_apply_dense, tt_apply_raw, tt_compose, tt_diag, tt_inner,
    tt_project_out, tt_scale,
};
pub use rounding::{right_orthogonalize, round_operator, truncate};
