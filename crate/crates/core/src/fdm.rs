//! Periodic central-difference operators on quantized lattices.
//!
//! The unit cell `[0, 1)^d` is sampled at `N = 2^n` nodes per axis with
//! spacing `h = 1/N`. Node `g` encodes its coordinates in binary: axis `j`
//! occupies bits `j*n .. (j+1)*n - 1` of `g`, so the flat index is
//! `g = sum_j N^j g_j`. Train core `k` (leftmost = 0) carries global bit
//! `d*n - 1 - k`; within each axis block the leftmost core holds the
//! coarsest scale bit.

use ndarray::{Array4, Axis};

use crate::error::{CoreError, Result};
use crate::sparse::CsrMatrix;
use crate::tt::{round_operator, TruncPolicy, TtOperator, TtVector};

/// Geometry of a quantized periodic lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSpec {
    d: usize,
    n: usize,
}

impl LatticeSpec {
    /// `d` spatial dimensions (2 or 3), `2^n` nodes per axis.
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(CoreError::InvalidParameter(format!(
                "spatial dimension must be 2 or 3, got {d}"
            )));
        }
        if n == 0 || d * n > 40 {
            return Err(CoreError::InvalidParameter(format!(
                "bits per axis must satisfy 1 <= n and d*n <= 40, got n = {n}"
            )));
        }
        Ok(LatticeSpec { d, n })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn bits_per_axis(&self) -> usize {
        self.n
    }

    pub fn nodes_per_axis(&self) -> usize {
        1 << self.n
    }

    pub fn total_nodes(&self) -> usize {
        1 << (self.d * self.n)
    }

    pub fn num_cores(&self) -> usize {
        self.d * self.n
    }

    /// Grid spacing `1 / N`.
    pub fn h(&self) -> f64 {
        1.0 / self.nodes_per_axis() as f64
    }

    /// Physical dimensions of the quantized train: all 2.
    pub fn core_dims(&self) -> Vec<usize> {
        vec![2; self.num_cores()]
    }

    /// Per-axis integer coordinates of node `g`.
    pub fn node_coords(&self, g: usize) -> Vec<usize> {
        let mask = self.nodes_per_axis() - 1;
        (0..self.d).map(|j| (g >> (j * self.n)) & mask).collect()
    }

    /// Flat node index from per-axis coordinates.
    pub fn node_index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.d);
        coords
            .iter()
            .enumerate()
            .map(|(j, &c)| c << (j * self.n))
            .sum()
    }
}

// 2x2 building blocks for the quantized difference cores.
fn block_delta() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}
fn block_up() -> [[f64; 2]; 2] {
    // Maps bit 1 -> row 0: the "0 after carry" transition.
    [[0.0, 1.0], [0.0, 0.0]]
}
fn block_down() -> [[f64; 2]; 2] {
    [[0.0, 0.0], [1.0, 0.0]]
}

fn set_block(core: &mut Array4<f64>, a: usize, b: usize, blk: [[f64; 2]; 2]) {
    for p in 0..2 {
        for q in 0..2 {
            core[[a, p, q, b]] = blk[p][q];
        }
    }
}

/// Difference core: five rank channels track "identity so far", the carry
/// and borrow of an in-progress shift by one node, and the two wrap-around
/// paths of the periodic boundary.
fn diff_core() -> Array4<f64> {
    let mut c = Array4::zeros((5, 2, 2, 5));
    set_block(&mut c, 0, 0, block_delta());
    set_block(&mut c, 0, 1, block_up());
    set_block(&mut c, 0, 2, block_down());
    set_block(&mut c, 1, 1, block_down());
    set_block(&mut c, 2, 2, block_up());
    set_block(&mut c, 3, 3, block_down());
    set_block(&mut c, 4, 4, block_up());
    c
}

/// Identity core that passes all five channels through.
fn pass_core() -> Array4<f64> {
    let mut c = Array4::zeros((5, 2, 2, 5));
    for r in 0..5 {
        set_block(&mut c, r, r, block_delta());
    }
    c
}

/// Periodic central difference along `axis` as an exact quantized operator
/// train, `(D u)_g = (u_{g+e} - u_{g-e}) / (2h)`, rounded losslessly so the
/// bond ranks are minimal.
pub fn central_diff_qtt(spec: &LatticeSpec, axis: usize) -> Result<TtOperator> {
    if axis >= spec.d {
        return Err(CoreError::InvalidParameter(format!(
            "axis {axis} out of range for dimension {}",
            spec.d
        )));
    }
    let dn = spec.num_cores();
    let mut cores: Vec<Array4<f64>> = (0..dn)
        .map(|pos| {
            let bit = dn - 1 - pos;
            let in_axis = (axis * spec.n..(axis + 1) * spec.n).contains(&bit);
            if in_axis {
                diff_core()
            } else {
                pass_core()
            }
        })
        .collect();
    // Boundary contractions select the active channels. The identity cores
    // are diagonal in the channel index, so the selection propagates through
    // them unchanged.
    let inv2h = 1.0 / (2.0 * spec.h());
    let left = [inv2h, 0.0, 0.0, inv2h, inv2h];
    let right = [0.0, 1.0, -1.0, 1.0, -1.0];
    let first = &cores[0];
    let mut new_first = Array4::zeros((1, 2, 2, first.shape()[3]));
    for a in 0..5 {
        if left[a] != 0.0 {
            let slab = first.index_axis(Axis(0), a);
            new_first
                .index_axis_mut(Axis(0), 0)
                .zip_mut_with(&slab, |o, &v| *o += left[a] * v);
        }
    }
    cores[0] = new_first;
    let last = &cores[dn - 1];
    let mut new_last = Array4::zeros((last.shape()[0], 2, 2, 1));
    for b in 0..5 {
        if right[b] != 0.0 {
            let slab = last.index_axis(Axis(3), b);
            new_last
                .index_axis_mut(Axis(3), 0)
                .zip_mut_with(&slab, |o, &v| *o += right[b] * v);
        }
    }
    cores[dn - 1] = new_last;
    let mut op = TtOperator::new(cores)?;
    round_operator(&mut op, &TruncPolicy::lossless())?;
    Ok(op)
}

/// All `d` central differences, axis order 0..d.
pub fn gradient_qtt(spec: &LatticeSpec) -> Result<Vec<TtOperator>> {
    (0..spec.d).map(|j| central_diff_qtt(spec, j)).collect()
}

/// Periodic central difference along `axis` as a sparse matrix over all
/// `N^d` nodes.
pub fn central_diff_csr(spec: &LatticeSpec, axis: usize) -> Result<CsrMatrix> {
    if axis >= spec.d {
        return Err(CoreError::InvalidParameter(format!(
            "axis {axis} out of range for dimension {}",
            spec.d
        )));
    }
    let nn = spec.total_nodes();
    let nax = spec.nodes_per_axis();
    let inv2h = 1.0 / (2.0 * spec.h());
    let stride = 1usize << (axis * spec.n);
    let mut trips = Vec::with_capacity(2 * nn);
    for g in 0..nn {
        let c = (g >> (axis * spec.n)) & (nax - 1);
        let up = g - c * stride + ((c + 1) & (nax - 1)) * stride;
        let dn = g - c * stride + ((c + nax - 1) & (nax - 1)) * stride;
        trips.push((g, up, inv2h));
        trips.push((g, dn, -inv2h));
    }
    CsrMatrix::from_triplets(nn, nn, &trips)
}

/// Basis of the common kernel of all central differences: per-axis products
/// of the constant and the alternating sequence, `2^d` vectors of length
/// `N^d`. Pairwise orthogonal, not normalized.
pub fn scalar_nullspace(spec: &LatticeSpec) -> Vec<Vec<f64>> {
    let nn = spec.total_nodes();
    let mut basis = Vec::with_capacity(1 << spec.d);
    for mask in 0..(1usize << spec.d) {
        let mut v = vec![1.0; nn];
        for (g, vg) in v.iter_mut().enumerate() {
            let coords = spec.node_coords(g);
            for (j, &c) in coords.iter().enumerate() {
                if (mask >> j) & 1 == 1 && c % 2 == 1 {
                    *vg = -*vg;
                }
            }
        }
        basis.push(v);
    }
    basis
}

/// Kernel basis for the vector-valued (displacement) problem: every scalar
/// kernel vector placed in each of the `d` components, `d * 2^d` vectors of
/// length `d * N^d`, component-major layout.
pub fn vector_nullspace(spec: &LatticeSpec) -> Vec<Vec<f64>> {
    let nn = spec.total_nodes();
    let scalar = scalar_nullspace(spec);
    let mut basis = Vec::with_capacity(spec.d * scalar.len());
    for comp in 0..spec.d {
        for s in &scalar {
            let mut v = vec![0.0; spec.d * nn];
            v[comp * nn..(comp + 1) * nn].copy_from_slice(s);
            basis.push(v);
        }
    }
    basis
}

/// Quantized rank-1 identity operator for the lattice.
pub fn identity_qtt(spec: &LatticeSpec) -> TtOperator {
    TtOperator::identity(&spec.core_dims())
}

/// The kernel basis of [`scalar_nullspace`] as rank-1 trains.
///
/// The parity of a coordinate equals its lowest-order bit, so the alternating
/// factor lives on the single core holding that bit; every other core carries
/// the constant factor.
pub fn parity_kernel_qtt(spec: &LatticeSpec) -> Vec<TtVector> {
    let m = spec.num_cores();
    let mut basis = Vec::with_capacity(1 << spec.d);
    for mask in 0..(1usize << spec.d) {
        let mut factors = vec![ndarray::arr1(&[1.0, 1.0]); m];
        for j in 0..spec.d {
            if (mask >> j) & 1 == 1 {
                // Core holding global bit j*n, the lowest bit of axis j.
                factors[m - 1 - j * spec.n] = ndarray::arr1(&[1.0, -1.0]);
            }
        }
        basis.push(TtVector::rank_one(&factors));
    }
    basis
}
