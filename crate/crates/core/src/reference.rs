//! Full-rank reference solvers: assemble the periodic cell problems as
//! sparse matrices over all lattice nodes and solve them with deflated
//! conjugate gradients. Slow but rank-free; the train path is validated
//! against this.

use ndarray::{Array2, Array4};

use crate::elastic::IsotropicPhase;
use crate::error::{CoreError, Result};
use crate::fdm::{central_diff_csr, scalar_nullspace, vector_nullspace, LatticeSpec};
use crate::rve::VoxelGrid;
use crate::sparse::{cg_deflated, CgConfig, CgOutcome, CsrMatrix};

/// Controls for the reference conjugate-gradient solves.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceConfig {
    /// Relative residual threshold after deflation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { tol: 1e-10, max_iter: 200_000 }
    }
}

/// Triplets of `D_j diag(c) D_jp` assembled directly from the stencil:
/// row `g` receives `s1 * s2 * c[g + s1 e_j] / (4 h^2)` at column
/// `g + s1 e_j + s2 e_jp` for the four sign choices.
fn d_diag_d_triplets(
    spec: &LatticeSpec,
    j: usize,
    jp: usize,
    c: &[f64],
) -> Vec<(usize, usize, f64)> {
    let nn = spec.total_nodes();
    let nax = spec.nodes_per_axis();
    let h = spec.h();
    let w = 1.0 / (4.0 * h * h);
    let mut trips = Vec::with_capacity(4 * nn);
    let step = |g: usize, axis: usize, s: i64| -> usize {
        let mut coords = spec.node_coords(g);
        coords[axis] = ((coords[axis] as i64 + s).rem_euclid(nax as i64)) as usize;
        spec.node_index(&coords)
    };
    for g in 0..nn {
        for s1 in [-1i64, 1] {
            let mid = step(g, j, s1);
            let cm = c[mid];
            if cm == 0.0 {
                continue;
            }
            for s2 in [-1i64, 1] {
                let col = step(mid, jp, s2);
                trips.push((g, col, (s1 * s2) as f64 * cm * w));
            }
        }
    }
    trips
}

/// Dense field from a two-phase grid.
fn phase_field(grid: &VoxelGrid, val_a: f64, val_b: f64) -> Vec<f64> {
    grid.data()
        .iter()
        .map(|&b| if b == 1 { val_a } else { val_b })
        .collect()
}

/// Effective conductivity by the evaluation identity
/// `kbar_ij = h^d (sum(kappa) delta_ij - <kappa, D_i phi_j>)`.
pub fn thermal_tensor_from_correctors(
    spec: &LatticeSpec,
    kappa: &[f64],
    diffs: &[CsrMatrix],
    correctors: &[Vec<f64>],
) -> Array2<f64> {
    let d = spec.dim();
    let hd = 1.0 / spec.total_nodes() as f64;
    let tot: f64 = kappa.iter().sum();
    let mut kbar = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let dphi = diffs[i].matvec(&correctors[j]);
            let cross: f64 = kappa.iter().zip(&dphi).map(|(k, g)| k * g).sum();
            kbar[[i, j]] = hd * (tot * ((i == j) as usize as f64) - cross);
        }
    }
    kbar
}

/// Result of the full-rank thermal homogenization.
#[derive(Debug, Clone)]
pub struct ThermalReference {
    pub kappa_eff: Array2<f64>,
    pub correctors: Vec<Vec<f64>>,
    pub outcomes: Vec<CgOutcome>,
}

/// Solve the `d` thermal cell problems at full rank and evaluate the
/// effective conductivity tensor.
///
/// The assembled operator `A = sum_i D_i diag(kappa) D_i` is negative
/// semidefinite; the solve runs on `-A` with the lattice parity kernel
/// deflated.
pub fn thermal_reference(
    grid: &VoxelGrid,
    kappa_a: f64,
    kappa_b: f64,
    cfg: &ReferenceConfig,
) -> Result<ThermalReference> {
    if kappa_a <= 0.0 || kappa_b <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "conductivities must be positive".into(),
        ));
    }
    let spec = *grid.spec();
    let d = spec.dim();
    let nn = spec.total_nodes();
    let kappa = phase_field(grid, kappa_a, kappa_b);

    let diffs: Vec<CsrMatrix> = (0..d)
        .map(|j| central_diff_csr(&spec, j))
        .collect::<Result<_>>()?;
    let mut trips = Vec::new();
    for j in 0..d {
        trips.extend(d_diag_d_triplets(&spec, j, j, &kappa));
    }
    let a = CsrMatrix::from_triplets(nn, nn, &trips)?;
    let neg_a = a.scaled(-1.0);
    let kernel = scalar_nullspace(&spec);
    let cg = CgConfig { tol: cfg.tol, max_iter: cfg.max_iter };

    let mut correctors = Vec::with_capacity(d);
    let mut outcomes = Vec::with_capacity(d);
    for j in 0..d {
        let b = diffs[j].matvec(&kappa);
        let neg_b: Vec<f64> = b.iter().map(|v| -v).collect();
        let (phi, out) = cg_deflated(&neg_a, &neg_b, &kernel, &cg)?;
        if !out.converged {
            return Err(CoreError::NotConverged(format!(
                "thermal reference axis {j}: residual {:.3e} after {} iterations",
                out.rel_residual, out.iterations
            )));
        }
        correctors.push(phi);
        outcomes.push(out);
    }
    let kappa_eff = thermal_tensor_from_correctors(&spec, &kappa, &diffs, &correctors);
    Ok(ThermalReference { kappa_eff, correctors, outcomes })
}

/// Result of the full-rank elastic homogenization.
#[derive(Debug, Clone)]
pub struct ElasticReference {
    /// Effective stiffness, full `d^4` tensor.
    pub c_eff: Array4<f64>,
    /// Correctors for the upper-triangle load pairs `(k, l)`, `k <= l`,
    /// component-major layout of length `d * N^d`.
    pub correctors: Vec<((usize, usize), Vec<f64>)>,
    pub outcomes: Vec<CgOutcome>,
}

/// Stiffness evaluation identity shared with the train path. `xi` maps the
/// normalized pair `(k, l)`, `k <= l`, to its corrector.
pub fn elastic_tensor_from_correctors(
    spec: &LatticeSpec,
    lambda: &[f64],
    mu: &[f64],
    diffs: &[CsrMatrix],
    xi: &dyn Fn(usize, usize) -> Vec<Vec<f64>>,
) -> Array4<f64> {
    let d = spec.dim();
    let nn = spec.total_nodes();
    let hd = 1.0 / nn as f64;
    let lam_tot: f64 = lambda.iter().sum();
    let mu_tot: f64 = mu.iter().sum();
    let mut c = Array4::zeros((d, d, d, d));
    for k in 0..d {
        for l in 0..d {
            let comps = xi(k.min(l), k.max(l));
            for i in 0..d {
                for j in 0..d {
                    let mut val = 0.0;
                    if i == j && k == l {
                        val += lam_tot;
                    }
                    if i == k && j == l {
                        val += mu_tot;
                    }
                    if i == l && j == k {
                        val += mu_tot;
                    }
                    let mut corr = 0.0;
                    if i == j {
                        for (kp, comp) in comps.iter().enumerate() {
                            let g = diffs[kp].matvec(comp);
                            corr += lambda.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                    let gj = diffs[j].matvec(&comps[i]);
                    corr += mu.iter().zip(&gj).map(|(a, b)| a * b).sum::<f64>();
                    let gi = diffs[i].matvec(&comps[j]);
                    corr += mu.iter().zip(&gi).map(|(a, b)| a * b).sum::<f64>();
                    c[[i, j, k, l]] = hd * (val - corr);
                }
            }
        }
    }
    c
}

/// Solve the elastic cell problems at full rank for every load pair
/// `(k, l)` with `k <= l`, and evaluate the effective stiffness.
///
/// Block operator: `K[j][jp] = D_j lam D_jp + D_jp mu D_j`, plus
/// `sum_i D_i mu D_i` on the diagonal blocks. Loads:
/// `F_j = delta_kl D_j lam + delta_jl D_k mu + delta_jk D_l mu`.
pub fn elastic_reference(
    grid: &VoxelGrid,
    phase_a: &IsotropicPhase,
    phase_b: &IsotropicPhase,
    cfg: &ReferenceConfig,
) -> Result<ElasticReference> {
    let spec = *grid.spec();
    let d = spec.dim();
    let nn = spec.total_nodes();
    let lambda = phase_field(grid, phase_a.lambda, phase_b.lambda);
    let mu = phase_field(grid, phase_a.mu, phase_b.mu);
    if mu.iter().any(|&v| v <= 0.0) {
        return Err(CoreError::InvalidParameter(
            "shear modulus must be positive in both phases".into(),
        ));
    }

    let diffs: Vec<CsrMatrix> = (0..d)
        .map(|j| central_diff_csr(&spec, j))
        .collect::<Result<_>>()?;

    // Assemble K over d * N^d unknowns, component-major.
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let off = |comp: usize, g: usize| comp * nn + g;
    for j in 0..d {
        for jp in 0..d {
            for (r, c, v) in d_diag_d_triplets(&spec, j, jp, &lambda) {
                trips.push((off(j, r), off(jp, c), v));
            }
            for (r, c, v) in d_diag_d_triplets(&spec, jp, j, &mu) {
                trips.push((off(j, r), off(jp, c), v));
            }
            if j == jp {
                for i in 0..d {
                    for (r, c, v) in d_diag_d_triplets(&spec, i, i, &mu) {
                        trips.push((off(j, r), off(jp, c), v));
                    }
                }
            }
        }
    }
    let k_mat = CsrMatrix::from_triplets(d * nn, d * nn, &trips)?;
    let neg_k = k_mat.scaled(-1.0);
    let kernel = vector_nullspace(&spec);
    let cg = CgConfig { tol: cfg.tol, max_iter: cfg.max_iter };

    let mut correctors = Vec::new();
    let mut outcomes = Vec::new();
    for k in 0..d {
        for l in k..d {
            let mut f = vec![0.0; d * nn];
            for j in 0..d {
                let mut fj = vec![0.0; nn];
                if k == l {
                    let t = diffs[j].matvec(&lambda);
                    for (a, b) in fj.iter_mut().zip(&t) {
                        *a += b;
                    }
                }
                if j == l {
                    let t = diffs[k].matvec(&mu);
                    for (a, b) in fj.iter_mut().zip(&t) {
                        *a += b;
                    }
                }
                if j == k {
                    let t = diffs[l].matvec(&mu);
                    for (a, b) in fj.iter_mut().zip(&t) {
                        *a += b;
                    }
                }
                f[j * nn..(j + 1) * nn].copy_from_slice(&fj);
            }
            let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
            let (xi, out) = cg_deflated(&neg_k, &neg_f, &kernel, &cg)?;
            if !out.converged {
                return Err(CoreError::NotConverged(format!(
                    "elastic reference load ({k},{l}): residual {:.3e} after {} iterations",
                    out.rel_residual, out.iterations
                )));
            }
            correctors.push(((k, l), xi));
            outcomes.push(out);
        }
    }

    let lookup = |k: usize, l: usize| -> Vec<Vec<f64>> {
        let xi = &correctors
            .iter()
            .find(|(kl, _)| *kl == (k, l))
            .expect("normalized pair present")
            .1;
        (0..d).map(|c| xi[c * nn..(c + 1) * nn].to_vec()).collect()
    };
    let c_eff = elastic_tensor_from_correctors(&spec, &lambda, &mu, &diffs, &lookup);
    Ok(ElasticReference { c_eff, correctors, outcomes })
}
