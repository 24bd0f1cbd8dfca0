//! Minimal CSR matrices and a deflated, Jacobi-preconditioned conjugate
//! gradient solver for the full-rank reference path.

use crate::error::{CoreError, Result};
use crate::par;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from COO triplets; duplicate entries are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(CoreError::ShapeMismatch(format!(
                    "triplet ({r}, {c}) out of bounds for {nrows}x{ncols}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut prev: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            if prev == Some((r, c)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                prev = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut out = CsrMatrix { nrows, ncols, indptr, indices, values };
        out.prune_zeros();
        Ok(out)
    }

    /// Drop stored entries that are exactly zero (e.g. stencil terms that
    /// cancelled during duplicate merging).
    fn prune_zeros(&mut self) {
        if !self.values.iter().any(|&v| v == 0.0) {
            return;
        }
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Matrix-vector product, parallel over rows when enabled.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec length mismatch");
        par::map_indexed(self.nrows, |r| self.row_dot(r, x))
    }

    /// Sequential lane of [`matvec`](Self::matvec).
    pub fn matvec_seq(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec length mismatch");
        par::map_indexed_seq(self.nrows, |r| self.row_dot(r, x))
    }

    #[inline]
    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.indptr[r]..self.indptr[r + 1] {
            acc += self.values[k] * x[self.indices[k]];
        }
        acc
    }

    /// Main diagonal (zeros where no stored entry exists).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows.min(self.ncols)];
        for r in 0..self.nrows.min(self.ncols) {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.indices[k] == r {
                    d[r] += self.values[k];
                }
            }
        }
        d
    }

    /// Copy with every stored value multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }
}

/// Conjugate gradient controls.
#[derive(Debug, Clone, Copy)]
pub struct CgConfig {
    /// Convergence threshold on `||r|| / ||b||` after deflation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig { tol: 1e-10, max_iter: 50_000 }
    }
}

/// Outcome metadata for an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nrm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormalize `vs` by modified Gram-Schmidt, dropping near-dependent
/// vectors.
fn orthonormalize(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for v in vs {
        let mut w = v.clone();
        for u in &basis {
            let c = dot(&w, u);
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= c * ui;
            }
        }
        let n = nrm2(&w);
        if n > 1e-12 {
            for wi in &mut w {
                *wi /= n;
            }
            basis.push(w);
        }
    }
    basis
}

fn project_out(x: &mut [f64], basis: &[Vec<f64>]) {
    for u in basis {
        let c = dot(x, u);
        for (xi, ui) in x.iter_mut().zip(u) {
            *xi -= c * ui;
        }
    }
}

/// Solve `A x = b` for symmetric positive semidefinite `A` whose kernel is
/// spanned by `nullspace`, using Jacobi-preconditioned conjugate gradients
/// with deflation: `b`, the iterates, and the residuals are kept orthogonal
/// to the kernel throughout.
pub fn cg_deflated(
    a: &CsrMatrix,
    b: &[f64],
    nullspace: &[Vec<f64>],
    cfg: &CgConfig,
) -> Result<(Vec<f64>, CgOutcome)> {
    if a.nrows() != a.ncols() {
        return Err(CoreError::ShapeMismatch("cg needs a square matrix".into()));
    }
    if b.len() != a.nrows() {
        return Err(CoreError::ShapeMismatch("cg rhs length mismatch".into()));
    }
    let basis = orthonormalize(nullspace);
    let mut rhs = b.to_vec();
    project_out(&mut rhs, &basis);
    let bnorm = nrm2(&rhs);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; b.len()],
            CgOutcome { iterations: 0, rel_residual: 0.0, converged: true },
        ));
    }
    // Jacobi preconditioner; zero diagonal entries fall back to identity.
    let minv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(ri, mi)| ri * mi).collect();
    project_out(&mut z, &basis);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut rel = 1.0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(CoreError::NotConverged(format!(
                "cg curvature became non-positive at iteration {it} (pAp = {pap:.3e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project_out(&mut r, &basis);
        rel = nrm2(&r) / bnorm;
        if rel <= cfg.tol {
            break;
        }
        z = r.iter().zip(&minv).map(|(ri, mi)| ri * mi).collect();
        project_out(&mut z, &basis);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    project_out(&mut x, &basis);
    let converged = rel <= cfg.tol;
    Ok((x, CgOutcome { iterations, rel_residual: rel, converged }))
}
