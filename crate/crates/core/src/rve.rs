//! Two-phase microstructure generation and voxel exchange.
//!
//! Phase indicators live on the lattice nodes: `chi[g] = 1` marks phase A,
//! `0` phase B. Generators are deterministic in their seed.

use std::io::{Read, Write as IoWrite};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::fdm::LatticeSpec;
use crate::par;
use crate::tt::{tt_add, tt_scale, TtVector, TruncPolicy};

pub const VOXEL_FORMAT_VERSION: u32 = 1;

/// Node-indexed phase indicator plus generation provenance.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    spec: LatticeSpec,
    data: Vec<u8>,
    pub provenance: Provenance,
}

/// How a grid came to be; serialized into the voxel file header.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub generator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_point: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VoxelHeader {
    format_version: u32,
    d: usize,
    n: usize,
    #[serde(rename = "N")]
    nodes_per_axis: usize,
    #[serde(flatten)]
    provenance: Provenance,
}

impl VoxelGrid {
    pub fn new(spec: LatticeSpec, data: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if data.len() != spec.total_nodes() {
            return Err(CoreError::ShapeMismatch(format!(
                "voxel payload has {} bytes, lattice has {} nodes",
                data.len(),
                spec.total_nodes()
            )));
        }
        if let Some(bad) = data.iter().find(|&&b| b > 1) {
            return Err(CoreError::Format(format!(
                "voxel values must be 0 or 1, found {bad}"
            )));
        }
        Ok(VoxelGrid { spec, data, provenance })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Indicator value at node `g`.
    pub fn chi(&self, g: usize) -> u8 {
        self.data[g]
    }

    /// Fraction of nodes in phase A.
    pub fn volume_fraction(&self) -> f64 {
        self.data.iter().map(|&b| b as usize).sum::<usize>() as f64 / self.data.len() as f64
    }

    /// Dense indicator as floats in node order.
    pub fn to_dense(&self) -> ndarray::Array1<f64> {
        ndarray::Array1::from_iter(self.data.iter().map(|&b| b as f64))
    }

    /// Encode the indicator as a quantized train under `policy`.
    /// Returns the train and the encoding error.
    pub fn to_tt(&self, policy: &TruncPolicy) -> Result<(TtVector, f64)> {
        TtVector::from_dense(&self.to_dense(), &self.spec.core_dims(), policy)
    }

    /// SHA-256 of the serialized file image (header line plus payload).
    pub fn digest(&self) -> String {
        let bytes = self.serialize_bytes();
        let mut h = Sha256::new();
        h.update(&bytes);
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn serialize_bytes(&self) -> Vec<u8> {
        let header = VoxelHeader {
            format_version: VOXEL_FORMAT_VERSION,
            d: self.spec.dim(),
            n: self.spec.bits_per_axis(),
            nodes_per_axis: self.spec.nodes_per_axis(),
            provenance: self.provenance.clone(),
        };
        let mut bytes = serde_json::to_vec(&header).expect("header serializes");
        bytes.push(b'\n');
        bytes.extend_from_slice(&self.data);
        bytes
    }
}

/// Parameters for the periodic Voronoi generator.
#[derive(Debug, Clone, Copy)]
pub struct VoronoiConfig {
    pub n_point: usize,
    /// Target phase A volume fraction; each seed point is assigned phase A
    /// with this probability.
    pub v_f: f64,
    pub seed: u64,
}

/// Generate a periodic Voronoi two-phase structure.
///
/// `n_point` seed points are drawn uniformly in the unit cell (coordinates
/// in axis order per point), then each point is marked phase A with
/// probability `v_f`. Every node takes the phase of its nearest point under
/// the periodic (minimal-image) metric; distance ties go to the lowest point
/// index. Deterministic in `seed`.
pub fn generate_voronoi(spec: &LatticeSpec, cfg: &VoronoiConfig) -> Result<VoxelGrid> {
    if cfg.n_point == 0 {
        return Err(CoreError::InvalidParameter("n_point must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.v_f) {
        return Err(CoreError::InvalidParameter(format!(
            "volume fraction must lie in [0, 1], got {}",
            cfg.v_f
        )));
    }
    let d = spec.dim();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut points = Vec::with_capacity(cfg.n_point);
    for _ in 0..cfg.n_point {
        let p: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        points.push(p);
    }
    let phase_a: Vec<bool> = (0..cfg.n_point)
        .map(|_| rng.random::<f64>() < cfg.v_f)
        .collect();

    let h = spec.h();
    let spec_copy = *spec;
    let data: Vec<u8> = par::map_indexed(spec.total_nodes(), move |g| {
        let coords = spec_copy.node_coords(g);
        let mut best = f64::INFINITY;
        let mut best_idx = 0usize;
        for (i, p) in points.iter().enumerate() {
            let mut dist = 0.0;
            for (j, &pj) in p.iter().enumerate() {
                let y = h * coords[j] as f64;
                let dx = (y - pj).abs();
                let dx = dx.min(1.0 - dx);
                dist += dx * dx;
            }
            if dist < best {
                best = dist;
                best_idx = i;
            }
        }
        u8::from(phase_a[best_idx])
    });

    VoxelGrid::new(
        *spec,
        data,
        Provenance {
            generator: "voronoi".into(),
            seed: Some(cfg.seed),
            v_f: Some(cfg.v_f),
            n_point: Some(cfg.n_point),
        },
    )
}

/// Diagonal laminate: stripes at 45 degrees to the axes, exactly half the
/// cell in each phase. Two-dimensional lattices only.
///
/// `chi[g] = 1` iff `(g_0 - g_1) mod N < N / 2`, which is invariant under
/// the diagonal translation `(g_0, g_1) -> (g_0 + t, g_1 + t)`.
pub fn layered_rve_45(spec: &LatticeSpec) -> Result<VoxelGrid> {
    if spec.dim() != 2 {
        return Err(CoreError::InvalidParameter(
            "the diagonal laminate is defined for d = 2".into(),
        ));
    }
    let nax = spec.nodes_per_axis() as i64;
    let mut data = vec![0u8; spec.total_nodes()];
    for (g, v) in data.iter_mut().enumerate() {
        let c = spec.node_coords(g);
        let s = (c[0] as i64 - c[1] as i64).rem_euclid(nax);
        *v = u8::from(s < nax / 2);
    }
    VoxelGrid::new(
        *spec,
        data,
        Provenance {
            generator: "layered45".into(),
            seed: None,
            v_f: Some(0.5),
            n_point: None,
        },
    )
}

/// Two-phase coefficient field `(a - b) * chi + b` as a train. Exact: bond
/// ranks grow by one, no rounding.
pub fn material_field(chi: &TtVector, val_a: f64, val_b: f64) -> Result<TtVector> {
    let ones = TtVector::constant_one(&chi.dims());
    tt_add(&tt_scale(chi, val_a - val_b), &tt_scale(&ones, val_b))
}

/// Write a grid to the single-file voxel format: one JSON header line, then
/// `N^d` raw bytes of 0/1 in node order. The write is atomic (temp file then
/// rename).
pub fn write_voxel_file(path: &Path, grid: &VoxelGrid) -> Result<()> {
    let bytes = grid.serialize_bytes();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = dir.to_path_buf();
    let stem = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "voxel".into());
    tmp.push(format!(".{stem}.tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a grid from the voxel format, validating header and payload length.
pub fn read_voxel_file(path: &Path) -> Result<VoxelGrid> {
    let mut f = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CoreError::Format("missing header line".into()))?;
    let header: VoxelHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| CoreError::Format(format!("bad header: {e}")))?;
    if header.format_version != VOXEL_FORMAT_VERSION {
        return Err(CoreError::Format(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let spec = LatticeSpec::new(header.d, header.n)?;
    if header.nodes_per_axis != spec.nodes_per_axis() {
        return Err(CoreError::Format(format!(
            "header N = {} inconsistent with n = {}",
            header.nodes_per_axis, header.n
        )));
    }
    let payload = &bytes[nl + 1..];
    if payload.len() != spec.total_nodes() {
        return Err(CoreError::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            spec.total_nodes()
        )));
    }
    VoxelGrid::new(spec, payload.to_vec(), header.provenance)
}
