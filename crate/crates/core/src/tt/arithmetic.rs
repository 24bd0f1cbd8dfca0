//! Train arithmetic: addition, inner products, operator application and
//! composition, diagonal lifting, dense application.

use ndarray::{Array1, Array2, Array3, Array4, Axis};

use crate::error::{CoreError, Result};

use super::linalg::reshape2;
use super::rounding::truncate;
use super::{TtOperator, TtVector};

/// Kronecker product of two matrices, `(a ⊗ b)[(i·p+k),(j·q+l)] = a[i,j] b[k,l]`.
fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (m, n) = a.dim();
    let (p, q) = b.dim();
    let mut out = Array2::zeros((m * p, n * q));
    for i in 0..m {
        for j in 0..n {
            let aij = a[[i, j]];
            if aij == 0.0 {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * p..(i + 1) * p, j * q..(j + 1) * q]);
            block.zip_mut_with(b, |o, &bv| *o += aij * bv);
        }
    }
    out
}

/// Scaled copy.
pub fn tt_scale(x: &TtVector, alpha: f64) -> TtVector {
    let mut y = x.clone();
    y.scale(alpha);
    y
}

/// Exact sum of two trains. Bond ranks add; no rounding is performed.
pub fn tt_add(a: &TtVector, b: &TtVector) -> Result<TtVector> {
    if a.dims() != b.dims() {
        return Err(CoreError::ShapeMismatch(format!(
            "tt_add dims {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let m = a.len();
    if m == 1 {
        let core = &a.cores[0] + &b.cores[0];
        return Ok(TtVector::from_cores_unchecked(vec![core], None));
    }
    let mut cores = Vec::with_capacity(m);
    for k in 0..m {
        let ca = &a.cores[k];
        let cb = &b.cores[k];
        let n = ca.shape()[1];
        let (al, ar) = (ca.shape()[0], ca.shape()[2]);
        let (bl, br) = (cb.shape()[0], cb.shape()[2]);
        let core = if k == 0 {
            // Horizontal concatenation along the right rank.
            let mut c = Array3::zeros((1, n, ar + br));
            c.slice_mut(ndarray::s![.., .., ..ar]).assign(ca);
            c.slice_mut(ndarray::s![.., .., ar..]).assign(cb);
            c
        } else if k == m - 1 {
            let mut c = Array3::zeros((al + bl, n, 1));
            c.slice_mut(ndarray::s![..al, .., ..]).assign(ca);
            c.slice_mut(ndarray::s![al.., .., ..]).assign(cb);
            c
        } else {
            let mut c = Array3::zeros((al + bl, n, ar + br));
            c.slice_mut(ndarray::s![..al, .., ..ar]).assign(ca);
            c.slice_mut(ndarray::s![al.., .., ar..]).assign(cb);
            c
        };
        cores.push(core);
    }
    Ok(TtVector::from_cores_unchecked(cores, None))
}

/// Inner product `<a, b>` via transfer matrices.
pub fn tt_inner(a: &TtVector, b: &TtVector) -> f64 {
    assert_eq!(a.dims(), b.dims(), "tt_inner dimension mismatch");
    let mut v = Array2::ones((1, 1)); // (ra, rb)
    for (ca, cb) in a.cores.iter().zip(&b.cores) {
        let n = ca.shape()[1];
        let mut next = Array2::zeros((ca.shape()[2], cb.shape()[2]));
        for i in 0..n {
            let ai = ca.index_axis(Axis(1), i); // (ra_l, ra_r)
            let bi = cb.index_axis(Axis(1), i); // (rb_l, rb_r)
            next = next + ai.t().dot(&v).dot(&bi);
        }
        v = next;
    }
    v[[0, 0]]
}

/// Apply an operator train to a vector train without rounding. Bond ranks
/// multiply.
pub fn tt_apply_raw(op: &TtOperator, x: &TtVector) -> Result<TtVector> {
    if op.dims_in() != x.dims() {
        return Err(CoreError::ShapeMismatch(format!(
            "apply: operator column dims {:?} vs vector dims {:?}",
            op.dims_in(),
            x.dims()
        )));
    }
    let mut cores = Vec::with_capacity(op.len());
    for (w, c) in op.cores.iter().zip(&x.cores) {
        let (wa, p, q, wb) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        let (xa, _, xb) = (c.shape()[0], c.shape()[1], c.shape()[2]);
        let mut core = Array3::zeros((wa * xa, p, wb * xb));
        for i in 0..p {
            let mut acc = Array2::zeros((wa * xa, wb * xb));
            for j in 0..q {
                let wij = w
                    .index_axis(Axis(1), i)
                    .index_axis(Axis(1), j)
                    .to_owned(); // (wa, wb)
                let xj = c.index_axis(Axis(1), j).to_owned(); // (xa, xb)
                acc = acc + kron(&wij, &xj);
            }
            core.index_axis_mut(Axis(1), i).assign(&acc);
        }
        cores.push(core);
    }
    Ok(TtVector::from_cores_unchecked(cores, None))
}

/// Apply an operator train to a vector train, then round with `policy`.
/// Returns the rounded result and the truncation error bound.
pub fn tt_apply(op: &TtOperator, x: &TtVector, policy: &super::TruncPolicy) -> Result<(TtVector, f64)> {
    let mut y = tt_apply_raw(op, x)?;
    let err = truncate(&mut y, policy)?;
    Ok((y, err))
}

/// Compose two operator trains (`a` applied after `b`), then round.
pub fn tt_compose(
    a: &TtOperator,
    b: &TtOperator,
    policy: &super::TruncPolicy,
) -> Result<(TtOperator, f64)> {
    if a.dims_in() != b.dims_out() {
        return Err(CoreError::ShapeMismatch(format!(
            "compose: inner dims {:?} vs {:?}",
            a.dims_in(),
            b.dims_out()
        )));
    }
    let mut cores = Vec::with_capacity(a.len());
    for (wa, wb) in a.cores.iter().zip(&b.cores) {
        let (al, p, s, ar) = (wa.shape()[0], wa.shape()[1], wa.shape()[2], wa.shape()[3]);
        let (bl, _, q, br) = (wb.shape()[0], wb.shape()[1], wb.shape()[2], wb.shape()[3]);
        let mut core = Array4::zeros((al * bl, p, q, ar * br));
        for i in 0..p {
            for j in 0..q {
                let mut acc = Array2::zeros((al * bl, ar * br));
                for mid in 0..s {
                    let am = wa
                        .index_axis(Axis(1), i)
                        .index_axis(Axis(1), mid)
                        .to_owned();
                    let bm = wb
                        .index_axis(Axis(1), mid)
                        .index_axis(Axis(1), j)
                        .to_owned();
                    acc = acc + kron(&am, &bm);
                }
                core.index_axis_mut(Axis(1), i)
                    .index_axis_mut(Axis(1), j)
                    .assign(&acc);
            }
        }
        cores.push(core);
    }
    let mut out = TtOperator::from_cores_unchecked(cores);
    let err = super::rounding::round_operator(&mut out, policy)?;
    Ok((out, err))
}

/// Lift a vector train to the diagonal operator with those entries.
pub fn tt_diag(x: &TtVector) -> TtOperator {
    let cores = x
        .cores
        .iter()
        .map(|c| {
            let (rl, n, rr) = (c.shape()[0], c.shape()[1], c.shape()[2]);
            let mut w = Array4::zeros((rl, n, n, rr));
            for i in 0..n {
                w.index_axis_mut(Axis(1), i)
                    .index_axis_mut(Axis(1), i)
                    .assign(&c.index_axis(Axis(1), i));
            }
            w
        })
        .collect();
    TtOperator::from_cores_unchecked(cores)
}

/// Apply an operator train to a dense vector by progressive contraction.
///
/// Peak intermediate size is `max_rank * dense_len` floats; cost is a chain
/// of small matrix products instead of the rank-squared blowup of
/// train-times-train application. Used for residual checks when the exact
/// train route would be too expensive.
pub fn tt_apply_dense(op: &TtOperator, x: &Array1<f64>) -> Result<Array1<f64>> {
    let q_total: usize = op.dims_in().iter().product();
    if x.len() != q_total {
        return Err(CoreError::ShapeMismatch(format!(
            "apply_dense: operator columns {} vs dense length {}",
            q_total,
            x.len()
        )));
    }
    // State holds (rank, produced outputs P, remaining inputs Q) flattened
    // row-major.
    let mut state = x.to_owned();
    let mut rank = 1usize;
    let mut prod = 1usize;
    let mut rest = q_total;
    for w in &op.cores {
        let (rl, p, q, rr) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        debug_assert_eq!(rank, rl);
        let q_rest = rest / q;
        // (a, P, q_k, q_rest) -> (P, q_rest, a, q_k)
        let s4 = Array4::from_shape_vec((rank, prod, q, q_rest), state.to_vec())
            .expect("apply_dense state shape");
        let sm = reshape2(&s4.permuted_axes([1, 3, 0, 2]), prod * q_rest, rank * q);
        // Core as (a, q, p, b).
        let wm = reshape2(
            &w.clone().permuted_axes([0, 2, 1, 3]),
            rl * q,
            p * rr,
        );
        let out = sm.dot(&wm); // (P * q_rest, p * b)
        // (P, q_rest, p, b) -> (b, P, p, q_rest) fused to (b, P*p, q_rest).
        let o4 = out
            .into_shape_with_order((prod, q_rest, p, rr))
            .expect("apply_dense out shape");
        let perm = o4.permuted_axes([3, 0, 2, 1]);
        state = Array1::from_iter(perm.iter().cloned());
        rank = rr;
        prod *= p;
        rest = q_rest;
    }
    debug_assert_eq!(rank, 1);
    debug_assert_eq!(rest, 1);
    Ok(state)
}

/// Remove from `x` its component in the span of `basis`, then round at `policy`.
///
/// Coefficients come from the small Gram system, so the basis does not have to
/// be orthogonal, only linearly independent.
pub fn tt_project_out(
    x: &TtVector,
    basis: &[TtVector],
    policy: &super::TruncPolicy,
) -> Result<TtVector> {
    if basis.is_empty() {
        return Ok(x.clone());
    }
    let q = basis.len();
    let mut gram = Array2::zeros((q, q));
    let mut rhs = Array1::zeros(q);
    for i in 0..q {
        for j in i..q {
            let g = tt_inner(&basis[i], &basis[j]);
            gram[[i, j]] = g;
            gram[[j, i]] = g;
        }
        rhs[i] = tt_inner(&basis[i], x);
    }
    use ndarray_linalg::Solve;
    let coeffs = gram.solve(&rhs)?;
    let mut out = x.clone();
    for (k, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            out = tt_add(&out, &tt_scale(&basis[k], -c))?;
        }
    }
    truncate(&mut out, policy)?;
    Ok(out)
}

/// Exact sum of two operator trains (block-diagonal cores, ranks add).
pub fn op_add(a: &TtOperator, b: &TtOperator) -> Result<TtOperator> {
    if a.dims_out() != b.dims_out() || a.dims_in() != b.dims_in() {
        return Err(CoreError::ShapeMismatch(format!(
            "op_add dims {:?}x{:?} vs {:?}x{:?}",
            a.dims_out(),
            a.dims_in(),
            b.dims_out(),
            b.dims_in()
        )));
    }
    let m = a.cores.len();
    if m == 1 {
        let core = &a.cores[0] + &b.cores[0];
        return TtOperator::new(vec![core]);
    }
    let mut cores = Vec::with_capacity(m);
    for k in 0..m {
        let ca = &a.cores[k];
        let cb = &b.cores[k];
        let (p, q) = (ca.shape()[1], ca.shape()[2]);
        let (al, ar) = (ca.shape()[0], ca.shape()[3]);
        let (bl, br) = (cb.shape()[0], cb.shape()[3]);
        let core = if k == 0 {
            let mut c = Array4::zeros((1, p, q, ar + br));
            c.slice_mut(ndarray::s![.., .., .., ..ar]).assign(ca);
            c.slice_mut(ndarray::s![.., .., .., ar..]).assign(cb);
            c
        } else if k == m - 1 {
            let mut c = Array4::zeros((al + bl, p, q, 1));
            c.slice_mut(ndarray::s![..al, .., .., ..]).assign(ca);
            c.slice_mut(ndarray::s![al.., .., .., ..]).assign(cb);
            c
        } else {
            let mut c = Array4::zeros((al + bl, p, q, ar + br));
            c.slice_mut(ndarray::s![..al, .., .., ..ar]).assign(ca);
            c.slice_mut(ndarray::s![al.., .., .., ar..]).assign(cb);
            c
        };
        cores.push(core);
    }
    TtOperator::new(cores)
}
