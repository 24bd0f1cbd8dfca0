//! Linear elastic cell problems in quantized-train form.
//!
//! Isotropic two-phase media with Lame fields `lambda`, `mu` over the
//! lattice. Displacements are vector-valued: trains gain one extra
//! "component" core of dimension `d` at the right end. Load cases are
//! indexed by symmetric strain pairs `(k, l)`, normalized to `k <= l`.

use std::time::Instant;

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fdm::{central_diff_qtt, parity_kernel_qtt, LatticeSpec};
use crate::mals::{mals_solve, MalsConfig};
use crate::reference::{elastic_reference, ReferenceConfig};
use crate::report::{SolveMethod, SolveReport};
use crate::rve::{material_field, VoxelGrid};
use crate::tt::{
    op_add, round_operator, tt_add, tt_apply_raw, tt_compose, tt_diag, tt_inner, tt_scale,
    truncate, TruncPolicy, TtOperator, TtVector,
};

/// Isotropic phase in Lame form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicPhase {
    pub lambda: f64,
    pub mu: f64,
}

impl IsotropicPhase {
    pub fn new(lambda: f64, mu: f64) -> Self {
        IsotropicPhase { lambda, mu }
    }

    /// From Young's modulus and Poisson ratio. Uses the three-dimensional
    /// (equivalently, plane strain) conversion
    /// `lambda = E nu / ((1 + nu)(1 - 2 nu))`, `mu = E / (2 (1 + nu))`.
    pub fn from_engineering(e: f64, nu: f64) -> Self {
        IsotropicPhase {
            lambda: e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
            mu: e / (2.0 * (1.0 + nu)),
        }
    }
}

/// Voigt pair ordering: `(0,0), (1,1), (0,1)` in 2D and
/// `(0,0), (1,1), (2,2), (1,2), (0,2), (0,1)` in 3D.
pub fn voigt_pairs(d: usize) -> Vec<(usize, usize)> {
    match d {
        2 => vec![(0, 0), (1, 1), (0, 1)],
        3 => vec![(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)],
        _ => panic!("voigt ordering defined for d in {{2, 3}}"),
    }
}

/// Effective stiffness with helpers for the standard reductions.
#[derive(Debug, Clone)]
pub struct ElasticityTensor {
    c: Array4<f64>,
}

impl ElasticityTensor {
    pub fn new(c: Array4<f64>) -> Result<Self> {
        let d = c.shape()[0];
        if c.shape() != [d, d, d, d] || !(2..=3).contains(&d) {
            return Err(CoreError::ShapeMismatch(format!(
                "stiffness tensor must be d^4 with d in {{2,3}}, got {:?}",
                c.shape()
            )));
        }
        Ok(ElasticityTensor { c })
    }

    pub fn dim(&self) -> usize {
        self.c.shape()[0]
    }

    pub fn tensor(&self) -> &Array4<f64> {
        &self.c
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.c[[i, j, k, l]]
    }

    /// Voigt matrix (unscaled, engineering convention for indices only).
    pub fn voigt(&self) -> Array2<f64> {
        let pairs = voigt_pairs(self.dim());
        let m = pairs.len();
        let mut out = Array2::zeros((m, m));
        for (a, &(i, j)) in pairs.iter().enumerate() {
            for (b, &(k, l)) in pairs.iter().enumerate() {
                out[[a, b]] = self.c[[i, j, k, l]];
            }
        }
        out
    }

    /// Mandel (orthonormal) matrix: shear rows and columns scaled by
    /// `sqrt(2)` so eigenvalues are those of the tensor as an operator on
    /// symmetric strains.
    pub fn mandel(&self) -> Array2<f64> {
        let d = self.dim();
        let pairs = voigt_pairs(d);
        let mut out = self.voigt();
        let s2 = 2f64.sqrt();
        for (a, &(i, j)) in pairs.iter().enumerate() {
            for (b, &(k, l)) in pairs.iter().enumerate() {
                let mut v = out[[a, b]];
                if i != j {
                    v *= s2;
                }
                if k != l {
                    v *= s2;
                }
                out[[a, b]] = v;
            }
        }
        out
    }

    /// Largest deviation from minor symmetry `C_ijkl = C_jikl = C_ijlk`.
    pub fn minor_asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let v = self.c[[i, j, k, l]];
                        worst = worst.max((v - self.c[[j, i, k, l]]).abs());
                        worst = worst.max((v - self.c[[i, j, l, k]]).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest deviation from major symmetry `C_ijkl = C_klij`.
    pub fn major_asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        worst = worst
                            .max((self.c[[i, j, k, l]] - self.c[[k, l, i, j]]).abs());
                    }
                }
            }
        }
        worst
    }

    /// Frobenius norm of the full tensor.
    pub fn frobenius(&self) -> f64 {
        self.c.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Isotropic stiffness tensor for a homogeneous phase.
pub fn isotropic_stiffness(d: usize, phase: &IsotropicPhase) -> Array4<f64> {
    let mut c = Array4::zeros((d, d, d, d));
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let mut v = 0.0;
                    if i == j && k == l {
                        v += phase.lambda;
                    }
                    if i == k && j == l {
                        v += phase.mu;
                    }
                    if i == l && j == k {
                        v += phase.mu;
                    }
                    c[[i, j, k, l]] = v;
                }
            }
        }
    }
    c
}

/// Place a scalar train in block `comp` of a vector train by appending a
/// component core `e_comp`.
fn lift_vector(v: &TtVector, comp: usize, d: usize) -> TtVector {
    let mut cores = v.cores().to_vec();
    let mut tail = Array3::zeros((1, d, 1));
    tail[[0, comp, 0]] = 1.0;
    cores.push(tail);
    TtVector::new(cores).expect("lifted vector train")
}

/// Extend a scalar operator with a component block: the result acts on
/// vector trains, reading component `col` and writing component `row`.
fn lift_operator(op: &TtOperator, block: &Array2<f64>) -> TtOperator {
    let d = block.nrows();
    let mut cores = op.cores().to_vec();
    let mut tail = Array4::zeros((1, d, d, 1));
    for r in 0..d {
        for c in 0..d {
            tail[[0, r, c, 0]] = block[[r, c]];
        }
    }
    cores.push(tail);
    TtOperator::new(cores).expect("lifted operator train")
}

fn unit_block(d: usize, row: usize, col: usize) -> Array2<f64> {
    let mut b = Array2::zeros((d, d));
    b[[row, col]] = 1.0;
    b
}

/// Scalar component `comp` of a vector train, obtained by contracting the
/// rightmost core with `e_comp`.
fn component(v: &TtVector, comp: usize) -> TtVector {
    let cores = v.cores();
    let m = cores.len();
    let tail = &cores[m - 1];
    let r = tail.shape()[0];
    let prev = &cores[m - 2];
    let (r2, n) = (prev.shape()[0], prev.shape()[1]);
    let mut merged = Array3::zeros((r2, n, 1));
    for a in 0..r2 {
        for p in 0..n {
            merged[[a, p, 0]] = (0..r).map(|b| prev[[a, p, b]] * tail[[b, comp, 0]]).sum();
        }
    }
    let mut out = cores[..m - 2].to_vec();
    out.push(merged);
    TtVector::new(out).expect("component train")
}

/// Assembled train-side elastic cell problem.
pub struct ElasticProblem {
    spec: LatticeSpec,
    /// Lame fields as scalar trains.
    lambda: TtVector,
    mu: TtVector,
    /// Negated block stiffness, positive semidefinite on vector trains.
    neg_op: TtOperator,
    /// Lossless central differences per axis (scalar trains).
    diffs: Vec<TtOperator>,
    /// Rigid-mode kernel: parity vectors crossed with unit components.
    kernel: Vec<TtVector>,
}

impl ElasticProblem {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn operator(&self) -> &TtOperator {
        &self.neg_op
    }

    pub fn kernel(&self) -> &[TtVector] {
        &self.kernel
    }
}

/// Accumulate an operator sum, rounding whenever ranks pile up.
fn op_accumulate(
    acc: Option<TtOperator>,
    term: TtOperator,
    policy: &TruncPolicy,
) -> Result<TtOperator> {
    let mut out = match acc {
        None => term,
        Some(a) => op_add(&a, &term)?,
    };
    if out.max_rank() > 192 {
        round_operator(&mut out, policy)?;
    }
    Ok(out)
}

/// Encode the microstructure and assemble the negated block stiffness
/// `-K`, where `K[j][jp] = D_j lam D_jp + D_jp mu D_j` plus
/// `sum_i D_i mu D_i` on the diagonal blocks. Representations are rounded
/// at `eps`; `chi_cap` bounds the indicator encoding rank.
pub fn assemble_elastic(
    grid: &VoxelGrid,
    phase_a: &IsotropicPhase,
    phase_b: &IsotropicPhase,
    eps: f64,
    chi_cap: Option<usize>,
) -> Result<ElasticProblem> {
    if phase_a.mu <= 0.0 || phase_b.mu <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "shear modulus must be positive in both phases".into(),
        ));
    }
    let spec = *grid.spec();
    let d = spec.dim();
    let policy = TruncPolicy::with_eps(eps);
    let chi_policy = TruncPolicy { eps, max_rank: chi_cap };
    let (chi, _) = grid.to_tt(&chi_policy)?;
    let lambda = material_field(&chi, phase_a.lambda, phase_b.lambda)?;
    let mu = material_field(&chi, phase_a.mu, phase_b.mu)?;
    let lam_diag = tt_diag(&lambda);
    let mu_diag = tt_diag(&mu);

    let mut diffs = Vec::with_capacity(d);
    let mut d_lam = Vec::with_capacity(d);
    let mut d_mu = Vec::with_capacity(d);
    for j in 0..d {
        let dj = central_diff_qtt(&spec, j)?;
        d_lam.push(tt_compose(&dj, &lam_diag, &policy)?.0);
        d_mu.push(tt_compose(&dj, &mu_diag, &policy)?.0);
        diffs.push(dj);
    }

    let mut neg: Option<TtOperator> = None;
    for j in 0..d {
        for jp in 0..d {
            let (lam_term, _) = tt_compose(&d_lam[j], &diffs[jp], &policy)?;
            neg = Some(op_accumulate(
                neg,
                lift_operator(&lam_term, &unit_block(d, j, jp)).scaled(-1.0),
                &policy,
            )?);
            let (mu_term, _) = tt_compose(&d_mu[jp], &diffs[j], &policy)?;
            neg = Some(op_accumulate(
                neg,
                lift_operator(&mu_term, &unit_block(d, j, jp)).scaled(-1.0),
                &policy,
            )?);
        }
    }
    // The shear Laplacian enters every diagonal block: extend once with the
    // identity component block.
    let mut lap: Option<TtOperator> = None;
    for i in 0..d {
        let (t, _) = tt_compose(&d_mu[i], &diffs[i], &policy)?;
        lap = Some(op_accumulate(lap, t, &policy)?);
    }
    let lap = lap.expect("d >= 2");
    let eye = Array2::from_shape_fn((d, d), |(r, c)| f64::from(r == c));
    let mut neg_op = op_add(
        &neg.expect("d >= 2"),
        &lift_operator(&lap, &eye).scaled(-1.0),
    )?;
    round_operator(&mut neg_op, &policy)?;

    let mut kernel = Vec::with_capacity(d << d);
    for parity in parity_kernel_qtt(&spec) {
        for c in 0..d {
            kernel.push(lift_vector(&parity, c, d));
        }
    }
    Ok(ElasticProblem { spec, lambda, mu, neg_op, diffs, kernel })
}

/// Load train for the symmetric strain pair `(k, l)`:
/// component `j` carries `delta_kl D_j lam + delta_jl D_k mu + delta_jk D_l mu`.
/// Symmetric in `(k, l)` by construction.
pub fn load_vector(problem: &ElasticProblem, k: usize, l: usize, eps: f64) -> Result<TtVector> {
    let d = problem.spec.dim();
    let policy = TruncPolicy::with_eps(eps);
    let mut f: Option<TtVector> = None;
    for j in 0..d {
        let mut gj: Option<TtVector> = None;
        let push = |g: TtVector, acc: &mut Option<TtVector>| -> Result<()> {
            *acc = Some(match acc.take() {
                None => g,
                Some(a) => tt_add(&a, &g)?,
            });
            Ok(())
        };
        if k == l {
            push(tt_apply_raw(&problem.diffs[j], &problem.lambda)?, &mut gj)?;
        }
        if j == l {
            push(tt_apply_raw(&problem.diffs[k], &problem.mu)?, &mut gj)?;
        }
        if j == k {
            push(tt_apply_raw(&problem.diffs[l], &problem.mu)?, &mut gj)?;
        }
        if let Some(g) = gj {
            let lifted = lift_vector(&g, j, d);
            f = Some(match f {
                None => lifted,
                Some(a) => tt_add(&a, &lifted)?,
            });
        }
    }
    let mut f = f.expect("every pair loads at least one component");
    truncate(&mut f, &policy)?;
    Ok(f)
}

/// Solve the vector cell problem for the strain pair `(k, l)` (normalized
/// internally to `k <= l`). The corrector is kernel-free.
pub fn solve_cell_elastic(
    problem: &ElasticProblem,
    k: usize,
    l: usize,
    cfg: &MalsConfig,
) -> Result<(TtVector, SolveReport)> {
    let d = problem.spec.dim();
    if k >= d || l >= d {
        return Err(CoreError::InvalidParameter(format!(
            "strain pair ({k},{l}) out of range for dimension {d}"
        )));
    }
    let (k, l) = (k.min(l), k.max(l));
    let start = Instant::now();
    let f = load_vector(problem, k, l, cfg.policy.eps)?;
    let neg_f = tt_scale(&f, -1.0);
    let (xi, out) = mals_solve(&problem.neg_op, &neg_f, &problem.kernel, cfg)?;
    let report = SolveReport {
        method: SolveMethod::Tt,
        converged: out.converged,
        iterations: out.sweeps(),
        residual: out.residual,
        residual_estimated: out.residual_estimated,
        max_rank: Some(out.max_rank),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((xi, report))
}

/// Evaluate the effective stiffness from correctors keyed by normalized
/// strain pairs (`k <= l`, one entry per Voigt pair).
pub fn homogenized_stiffness(
    problem: &ElasticProblem,
    correctors: &[((usize, usize), TtVector)],
) -> Result<ElasticityTensor> {
    let d = problem.spec.dim();
    let pairs = voigt_pairs(d);
    if correctors.len() != pairs.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "need {} correctors, got {}",
            pairs.len(),
            correctors.len()
        )));
    }
    let hd = problem.spec.h().powi(d as i32);
    let lam_tot = problem.lambda.sum_entries();
    let mu_tot = problem.mu.sum_entries();

    // Per pair: <mu, D_a xi_c> for all (c, a), and the lambda divergence.
    struct PairData {
        mu_term: Vec<Vec<f64>>,
        lam_div: f64,
    }
    let mut data: Vec<((usize, usize), PairData)> = Vec::with_capacity(correctors.len());
    for ((k, l), xi) in correctors {
        let comps: Vec<TtVector> = (0..d).map(|c| component(xi, c)).collect();
        let mut mu_term = vec![vec![0.0; d]; d];
        let mut lam_div = 0.0;
        for (c, compv) in comps.iter().enumerate() {
            for (a, diff) in problem.diffs.iter().enumerate() {
                let g = tt_apply_raw(diff, compv)?;
                mu_term[c][a] = tt_inner(&problem.mu, &g);
                if a == c {
                    lam_div += tt_inner(&problem.lambda, &g);
                }
            }
        }
        data.push(((*k, *l), PairData { mu_term, lam_div }));
    }
    let lookup = |k: usize, l: usize| -> Result<&PairData> {
        data.iter()
            .find(|(kl, _)| *kl == (k, l))
            .map(|(_, pd)| pd)
            .ok_or_else(|| {
                CoreError::InvalidParameter(format!("missing corrector for pair ({k},{l})"))
            })
    };

    let mut c = Array4::zeros((d, d, d, d));
    for k in 0..d {
        for l in 0..d {
            let pd = lookup(k.min(l), k.max(l))?;
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
                    let mut corr = pd.mu_term[i][j] + pd.mu_term[j][i];
                    if i == j {
                        corr += pd.lam_div;
                    }
                    c[[i, j, k, l]] = hd * (val - corr);
                }
            }
        }
    }
    ElasticityTensor::new(c)
}

/// Result of a full elastic homogenization run.
#[derive(Debug, Clone)]
pub struct ElasticResult {
    pub c_eff: ElasticityTensor,
    /// One report per Voigt load pair, in `voigt_pairs` order.
    pub reports: Vec<SolveReport>,
    /// Largest bond rank in the assembled operator (train method only).
    pub operator_rank: Option<usize>,
}

/// Homogenize with the quantized-train pipeline. The solver's rank cap
/// also bounds the indicator encoding.
pub fn elastic_tt(
    grid: &VoxelGrid,
    phase_a: &IsotropicPhase,
    phase_b: &IsotropicPhase,
    eps: f64,
    cfg: &MalsConfig,
) -> Result<ElasticResult> {
    let problem = assemble_elastic(grid, phase_a, phase_b, eps, cfg.policy.max_rank)?;
    let pairs = voigt_pairs(problem.spec.dim());
    let mut correctors = Vec::with_capacity(pairs.len());
    let mut reports = Vec::with_capacity(pairs.len());
    for &(k, l) in &pairs {
        let (xi, report) = solve_cell_elastic(&problem, k, l, cfg)?;
        correctors.push(((k, l), xi));
        reports.push(report);
    }
    let c_eff = homogenized_stiffness(&problem, &correctors)?;
    Ok(ElasticResult {
        c_eff,
        reports,
        operator_rank: Some(problem.neg_op.max_rank()),
    })
}

/// Homogenize with the full-rank reference path, wrapped in the same
/// result types as the train pipeline.
pub fn elastic_full(
    grid: &VoxelGrid,
    phase_a: &IsotropicPhase,
    phase_b: &IsotropicPhase,
    cfg: &ReferenceConfig,
) -> Result<ElasticResult> {
    let start = Instant::now();
    let reference = elastic_reference(grid, phase_a, phase_b, cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    let loads = reference.outcomes.len().max(1);
    let per_load = elapsed / loads as f64;
    let reports = reference
        .outcomes
        .iter()
        .map(|o| SolveReport {
            method: SolveMethod::Full,
            converged: o.converged,
            iterations: o.iterations,
            residual: o.rel_residual,
            residual_estimated: false,
            max_rank: None,
            wall_seconds: per_load,
        })
        .collect();
    Ok(ElasticResult {
        c_eff: ElasticityTensor::new(reference.c_eff)?,
        reports,
        operator_rank: None,
    })
}
