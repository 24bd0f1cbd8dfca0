//! Dense kernels used by the train algorithms: thin QR/LQ and truncated SVD.

use ndarray::{Array1, Array2, ArrayBase, Data, Dimension};
use ndarray_linalg::{JobSvd, QR, SVD, SVDDC};

use crate::error::{CoreError, Result};

/// Relative singular value floor. Anything at or below `FLOOR * sigma_max`
/// is treated as numerical zero and always discarded, even at eps = 0.
pub const SIGMA_FLOOR: f64 = 1e-14;

/// Copy `a` into a (rows, cols) matrix reading entries in logical row-major
/// order. Works for any source layout.
pub fn reshape2<S, D>(a: &ArrayBase<S, D>, rows: usize, cols: usize) -> Array2<f64>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    debug_assert_eq!(a.len(), rows * cols, "reshape2 element count mismatch");
    let v: Vec<f64> = a.iter().cloned().collect();
    Array2::from_shape_vec((rows, cols), v).expect("reshape2 shape")
}

/// Thin QR factorization, `a = Q R`.
pub fn thin_qr(a: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let (q, r) = a.qr()?;
    Ok((q, r))
}

/// Thin LQ factorization, `a = L Q`, computed as the transposed QR of `aᵀ`.
pub fn thin_lq(a: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let at = a.t().as_standard_layout().to_owned();
    let (q, r) = at.qr()?;
    Ok((r.t().to_owned(), q.t().to_owned()))
}

/// Result of a truncated SVD: factors plus the squared Frobenius mass of the
/// discarded singular values.
pub struct TruncatedSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
    pub discarded_sq: f64,
}

fn economy_svd(a: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    // Divide-and-conquer first; fall back to the plain driver on the rare
    // convergence failure.
    let k = a.nrows().min(a.ncols());
    match a.svddc(JobSvd::Some) {
        Ok((Some(u), s, Some(vt))) => Ok((u, s, vt)),
        _ => {
            let (u, s, vt) = a.svd(true, true)?;
            let u = u.ok_or_else(|| CoreError::Backend("svd returned no U".into()))?;
            let vt = vt.ok_or_else(|| CoreError::Backend("svd returned no Vt".into()))?;
            // Plain driver may return full factors; slice to economy size.
            let u = u.slice(ndarray::s![.., ..k]).to_owned();
            let vt = vt.slice(ndarray::s![..k, ..]).to_owned();
            Ok((u, s, vt))
        }
    }
}

/// SVD of `a` truncated to the smallest rank whose discarded tail stays
/// within `abs_budget` (Frobenius), further capped at `max_rank`.
///
/// Singular values at or below `SIGMA_FLOOR * sigma_max` are always dropped.
/// At least one singular triple is kept so the factorization stays
/// well-formed, even for an all-zero input.
pub fn svd_trunc(
    a: &Array2<f64>,
    abs_budget: f64,
    max_rank: Option<usize>,
) -> Result<TruncatedSvd> {
    let (u, s, vt) = economy_svd(a)?;
    let k = s.len();
    let smax = s[0];

    // Largest rank allowed by the floor.
    let mut keep = if smax == 0.0 {
        1
    } else {
        s.iter().take_while(|&&x| x > SIGMA_FLOOR * smax).count().max(1)
    };

    // Shrink while the discarded tail fits in the budget.
    if abs_budget > 0.0 {
        let mut tail_sq: f64 = s.iter().skip(keep).map(|x| x * x).sum();
        while keep > 1 {
            let cand = s[keep - 1] * s[keep - 1];
            if tail_sq + cand <= abs_budget * abs_budget {
                tail_sq += cand;
                keep -= 1;
            } else {
                break;
            }
        }
    }

    if let Some(cap) = max_rank {
        keep = keep.min(cap.max(1));
    }

    let discarded_sq: f64 = s.iter().skip(keep).map(|x| x * x).sum();
    let _ = k;
    Ok(TruncatedSvd {
        u: u.slice(ndarray::s![.., ..keep]).to_owned(),
        s: s.slice(ndarray::s![..keep]).to_owned(),
        vt: vt.slice(ndarray::s![..keep, ..]).to_owned(),
        discarded_sq,
    })
}
