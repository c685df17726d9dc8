//! Problem-instance generation and the versioned JSON interchange format.
//!
//! An instance is a measurement matrix (inline or a seeded Gaussian
//! generator spec), a planted k-sparse solution, and the measurement
//! x = A·s₀ + noise. Noise is drawn on the ε-sphere (scaled by 1 − 1e-12 to
//! stay strictly inside the ball), which exercises error bounds at their
//! tightest. Generation is deterministic given the seed: the same seed
//! yields byte-identical JSON.

use crate::dictionary::Dictionary;
use crate::error::{Result, Sl0Error};
use crate::harness::rng::{derive_rng, gaussian_matrix, sample_support, sphere_point, standard_normal};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Draw cells of the master seed, so each ingredient has its own stream.
mod cell {
    pub const MATRIX: u64 = 0;
    pub const SUPPORT: u64 = 1;
    pub const VALUES: u64 = 2;
    pub const NOISE: u64 = 3;
}

/// Planted nonzero magnitudes stay at or above 3·σ_floor.
pub const DEFAULT_SIGMA_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorSpec {
    pub kind: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MatrixSource {
    Inline {
        #[serde(rename = "A")]
        rows: Vec<Vec<f64>>,
    },
    Generator {
        #[serde(rename = "A_generator")]
        spec: GeneratorSpec,
    },
}

/// A serialized sparse-recovery problem (schema version 1).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProblemInstance {
    pub schema: u32,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub matrix: MatrixSource,
    pub x: Vec<f64>,
    pub s0: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    /// Store the matrix inline (true) or as a generator spec (false).
    pub inline_matrix: bool,
    pub sigma_floor: f64,
}

impl GenerateConfig {
    pub fn new(n: usize, m: usize, k: usize, eps: f64, seed: u64) -> Self {
        GenerateConfig {
            n,
            m,
            k,
            eps,
            seed,
            inline_matrix: m <= 256,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
        }
    }
}

/// Deterministically generate an instance: Gaussian A with N(0, 1/n)
/// entries, support uniform without replacement, nonzero values N(0, 1)
/// with magnitudes at least 3·σ_floor, and, for ε > 0, noise uniform on the
/// ε·(1−1e-12) sphere.
pub fn generate(cfg: &GenerateConfig) -> Result<ProblemInstance> {
    if cfg.n < 1 || cfg.m <= cfg.n {
        return Err(Sl0Error::InvalidParameter(format!(
            "need m > n >= 1, got n = {}, m = {}",
            cfg.n, cfg.m
        )));
    }
    if cfg.k >= cfg.m {
        return Err(Sl0Error::InvalidParameter(format!(
            "need k < m, got k = {}, m = {}",
            cfg.k, cfg.m
        )));
    }
    if cfg.eps < 0.0 {
        return Err(Sl0Error::InvalidParameter(format!(
            "eps = {} negative",
            cfg.eps
        )));
    }
    let mut mat_rng = derive_rng(cfg.seed, cell::MATRIX, 0);
    let a = gaussian_matrix(cfg.n, cfg.m, 1.0 / cfg.n as f64, &mut mat_rng);

    let mut s0 = DVector::zeros(cfg.m);
    if cfg.k > 0 {
        let mut sup_rng = derive_rng(cfg.seed, cell::SUPPORT, 0);
        let support = sample_support(cfg.m, cfg.k, &mut sup_rng);
        let floor = 3.0 * cfg.sigma_floor;
        let mut val_rng = derive_rng(cfg.seed, cell::VALUES, 0);
        for &i in &support {
            let mut v = standard_normal(&mut val_rng);
            while v.abs() < floor {
                v = standard_normal(&mut val_rng);
            }
            s0[i] = v;
        }
    }

    let mut x = &a * &s0;
    if cfg.eps > 0.0 {
        let mut noise_rng = derive_rng(cfg.seed, cell::NOISE, 0);
        x += sphere_point(cfg.n, cfg.eps * (1.0 - 1e-12), &mut noise_rng);
    }

    let matrix = if cfg.inline_matrix {
        let rows = (0..cfg.n)
            .map(|i| (0..cfg.m).map(|j| a[(i, j)]).collect())
            .collect();
        MatrixSource::Inline { rows }
    } else {
        MatrixSource::Generator {
            spec: GeneratorSpec {
                kind: "gaussian".to_string(),
                seed: cfg.seed,
            },
        }
    };

    Ok(ProblemInstance {
        schema: SCHEMA_VERSION,
        n: cfg.n,
        m: cfg.m,
        k: cfg.k,
        eps: cfg.eps,
        seed: cfg.seed,
        matrix,
        x: x.iter().copied().collect(),
        s0: s0.iter().copied().collect(),
    })
}

impl ProblemInstance {
    /// The raw (not orthonormalized) measurement matrix, regenerated from
    /// the generator spec when not stored inline.
    pub fn raw_matrix(&self) -> Result<DMatrix<f64>> {
        match &self.matrix {
            MatrixSource::Inline { rows } => {
                if rows.len() != self.n || rows.iter().any(|r| r.len() != self.m) {
                    return Err(Sl0Error::Format(
                        "inline matrix shape does not match n, m".into(),
                    ));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(DMatrix::from_row_slice(self.n, self.m, &flat))
            }
            MatrixSource::Generator { spec } => {
                if spec.kind != "gaussian" {
                    return Err(Sl0Error::Format(format!(
                        "unknown matrix generator kind {:?}",
                        spec.kind
                    )));
                }
                let mut rng = derive_rng(spec.seed, cell::MATRIX, 0);
                Ok(gaussian_matrix(self.n, self.m, 1.0 / self.n as f64, &mut rng))
            }
        }
    }

    pub fn measurement(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    pub fn planted(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.s0)
    }

    /// Orthonormalize the stored system, returning the dictionary and the
    /// consistently transformed measurement.
    pub fn orthonormalized(&self) -> Result<(Dictionary, DVector<f64>)> {
        Dictionary::orthonormalize(&self.raw_matrix()?, &self.measurement())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: ProblemInstance = serde_json::from_str(text)?;
        if inst.schema != SCHEMA_VERSION {
            return Err(Sl0Error::Format(format!(
                "unsupported schema version {}",
                inst.schema
            )));
        }
        Ok(inst)
    }
}

/// A deterministic n×m dictionary (n = m−2) whose null space is spanned by
/// the two-column frame b_j = √(2/m)·(cos(jπ/m), sin(jπ/m)). The equiangular
/// spread keeps the worst-case null-space energy ratio γ(n₀) small, which
/// random Gaussian systems of this size do not achieve; used where a
/// certified small γ is required at desk scale.
pub fn equiangular_dictionary(m: usize) -> Result<Dictionary> {
    if m < 4 {
        return Err(Sl0Error::InvalidParameter(format!(
            "equiangular design needs m >= 4, got {m}"
        )));
    }
    let n = m - 2;
    let scale = (2.0 / m as f64).sqrt();
    let mut null_basis = DMatrix::zeros(m, 2);
    for j in 0..m {
        let theta = j as f64 * std::f64::consts::PI / m as f64;
        null_basis[(j, 0)] = scale * theta.cos();
        null_basis[(j, 1)] = scale * theta.sin();
    }
    // rows of A = orthonormal completion of the null-basis columns
    let projector = DMatrix::identity(m, m) - &null_basis * null_basis.transpose();
    let eig = projector.symmetric_eigen();
    let mut cols: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    cols.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    if cols.len() != n {
        return Err(Sl0Error::NotOrthonormal { max_dev: f64::NAN });
    }
    let mut a = DMatrix::zeros(n, m);
    for (row, &col) in cols.iter().enumerate() {
        for i in 0..m {
            a[(row, i)] = eig.eigenvectors[(i, col)];
        }
    }
    Dictionary::from_orthonormal(a)
}
