//! Orthogonalization and rank rounding for trains.

use ndarray::{Array3, Array4};

use crate::error::Result;

use super::linalg::{reshape2, svd_trunc, thin_lq};
use super::{TtOperator, TtVector, TruncPolicy};

/// Bring the train to right-orthogonal form: after the call every core but
/// the first has orthonormal rows when flattened as `(r_left) x (n * r_right)`,
/// and the orthogonality center sits at core 0.
pub fn right_orthogonalize(x: &mut TtVector) -> Result<()> {
    let m = x.cores.len();
    for k in (1..m).rev() {
        let (rl, n, rr) = {
            let s = x.cores[k].shape();
            (s[0], s[1], s[2])
        };
        let mat = reshape2(&x.cores[k], rl, n * rr);
        let (l, q) = thin_lq(&mat)?;
        let keep = q.nrows();
        x.cores[k] = Array3::from_shape_vec((keep, n, rr), q.iter().cloned().collect())
            .expect("orth core shape");
        let prev = &x.cores[k - 1];
        let (pl, pn, pr) = {
            let s = prev.shape();
            (s[0], s[1], s[2])
        };
        debug_assert_eq!(pr, rl);
        let merged = reshape2(prev, pl * pn, pr).dot(&l); // (pl*pn, keep)
        x.cores[k - 1] = Array3::from_shape_vec((pl, pn, keep), merged.iter().cloned().collect())
            .expect("orth carry shape");
    }
    x.center = Some(0);
    Ok(())
}

/// Round the train in place under `policy`.
///
/// Right-orthogonalizes, then sweeps left to right truncating one bond at a
/// time by SVD. The relative budget `policy.eps * ||x||` is split evenly
/// across bonds; singular values at the numerical-zero floor are dropped
/// regardless of `eps`. Returns the accumulated truncation error
/// `sqrt(sum of discarded sigma^2)`, an upper bound on the Frobenius error.
pub fn truncate(x: &mut TtVector, policy: &TruncPolicy) -> Result<f64> {
    let m = x.cores.len();
    if m == 1 {
        x.center = Some(0);
        return Ok(0.0);
    }
    right_orthogonalize(x)?;
    let norm = x.cores[0].iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let dims = x.dims();
        x.cores = dims.iter().map(|&n| Array3::zeros((1, n, 1))).collect();
        x.center = Some(0);
        return Ok(0.0);
    }
    let budget = policy.eps * norm / ((m - 1) as f64).sqrt();
    let mut disc_sq = 0.0;
    for k in 0..m - 1 {
        let (rl, n, rr) = {
            let s = x.cores[k].shape();
            (s[0], s[1], s[2])
        };
        let mat = reshape2(&x.cores[k], rl * n, rr);
        let t = svd_trunc(&mat, budget, policy.max_rank)?;
        let keep = t.s.len();
        x.cores[k] = Array3::from_shape_vec((rl, n, keep), t.u.iter().cloned().collect())
            .expect("trunc core shape");
        let mut carry = t.vt; // (keep, rr)
        for (i, &si) in t.s.iter().enumerate() {
            carry.row_mut(i).mapv_inplace(|v| v * si);
        }
        let next = &x.cores[k + 1];
        let (nl, nn, nr) = {
            let s = next.shape();
            (s[0], s[1], s[2])
        };
        debug_assert_eq!(nl, rr);
        let merged = carry.dot(&reshape2(next, nl, nn * nr)); // (keep, nn*nr)
        x.cores[k + 1] = Array3::from_shape_vec((keep, nn, nr), merged.iter().cloned().collect())
            .expect("trunc carry shape");
        disc_sq += t.discarded_sq;
    }
    x.center = Some(m - 1);
    Ok(disc_sq.max(0.0).sqrt())
}

/// Round an operator train by flattening each core's row and column indices
/// into one physical index of size `p * q`, rounding as a vector train, and
/// splitting the index back.
pub fn round_operator(op: &mut TtOperator, policy: &TruncPolicy) -> Result<f64> {
    let pq: Vec<(usize, usize)> = op
        .cores
        .iter()
        .map(|c| (c.shape()[1], c.shape()[2]))
        .collect();
    let cores = op
        .cores
        .iter()
        .map(|c| {
            let (rl, p, q, rr) = (c.shape()[0], c.shape()[1], c.shape()[2], c.shape()[3]);
            Array3::from_shape_vec((rl, p * q, rr), c.iter().cloned().collect())
                .expect("flatten op core")
        })
        .collect();
    let mut flat = TtVector::from_cores_unchecked(cores, None);
    let err = truncate(&mut flat, policy)?;
    op.cores = flat
        .cores
        .into_iter()
        .zip(pq)
        .map(|(c, (p, q))| {
            let (rl, _, rr) = (c.shape()[0], c.shape()[1], c.shape()[2]);
            Array4::from_shape_vec((rl, p, q, rr), c.iter().cloned().collect())
                .expect("unflatten op core")
        })
        .collect();
    Ok(err)
}
