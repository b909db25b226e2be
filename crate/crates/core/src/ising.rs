//! Complex partition functions of the random Ising model associated with
//! each measurement outcome, and the outcome-probability identity
//!
//! `prob(a, b | beta) = |Z|^2 / 2^(2 N_X + N_Z)`,
//!
//! where `Z = sum_s exp(-i H(s))` over primitive spins with
//! `H(s) = sum_<ij> (pi/4) s_i s_j - sum_i h^_i s_i` and
//! `h^_i = (pi/4) deg(i) - (alpha_i + vartheta_i) / 2`,
//! `alpha_i = pi a_i`, `vartheta_i = beta_i + (pi/4) b_i`.
//!
//! The dark-edge share of the quench field does not appear in `h^`: once a
//! dangling site is read out in Z it contributes `(pi/8) b_i s_i`, which is
//! exactly the `(pi/4) b_i` in `vartheta_i`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Architecture, IsingCouplings, Lattice, BRIGHT_COUPLING};
use crate::prep::{product_state, BetaConfig};
use crate::statevec::{evolve_diagonal, measurement_distribution, MAX_QUBITS};

/// Largest primitive-site count accepted by [`z_bruteforce`].
pub const MAX_BRUTEFORCE_SITES: usize = 24;
/// Largest row count accepted by [`z_transfer`].
pub const MAX_TRANSFER_ROWS: usize = 26;

/// Effective fields on an `rows x cols` primitive grid with uniform coupling
/// `pi/4` on every grid edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingFieldConfig {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, one per primitive site (radians).
    pub field: Vec<f64>,
    /// Number of dangling sites folded into the fields.
    pub n_z: usize,
}

impl IsingFieldConfig {
    pub fn new(rows: usize, cols: usize, field: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("lattice", "rows and cols must be positive"));
        }
        if field.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: field.len(),
            });
        }
        Ok(IsingFieldConfig {
            rows,
            cols,
            field,
            n_z: 0,
        })
    }

    pub fn n_x(&self) -> usize {
        self.rows * self.cols
    }

    /// Field-free part `(pi/4) deg(i)` of site `k`.
    pub fn base_field(&self, k: usize) -> f64 {
        let (r, c) = (k / self.cols, k % self.cols);
        let deg = (r > 0) as usize
            + (r + 1 < self.rows) as usize
            + (c > 0) as usize
            + (c + 1 < self.cols) as usize;
        BRIGHT_COUPLING * deg as f64
    }
}

/// Complex partition function stored as `mantissa * exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionValue {
    pub mantissa: Complex64,
    pub log_scale: f64,
    pub n_x: usize,
    pub n_z: usize,
}

impl PartitionValue {
    pub fn value(&self) -> Complex64 {
        self.mantissa * self.log_scale.exp()
    }

    pub fn ln_abs(&self) -> f64 {
        self.mantissa.norm().ln() + self.log_scale
    }

    /// `|Z|^2 / 2^(2 N_X + N_Z)`.
    pub fn probability(&self) -> f64 {
        if self.mantissa.norm() == 0.0 {
            return 0.0;
        }
        (2.0 * self.ln_abs() - (2 * self.n_x + self.n_z) as f64 * LN_2).exp()
    }
}

/// Effective fields for outcome `(a, b)` of `lattice` prepared with `beta`.
pub fn field_config(
    lattice: &Lattice,
    a: &[bool],
    b: &[bool],
    beta: &BetaConfig,
) -> Result<IsingFieldConfig> {
    beta.check_lattice(lattice)?;
    let np = lattice.n_primitive();
    if a.len() != np {
        return Err(Error::DimensionMismatch {
            expected: np,
            actual: a.len(),
        });
    }
    if b.len() != lattice.n_dangling() {
        return Err(Error::DimensionMismatch {
            expected: lattice.n_dangling(),
            actual: b.len(),
        });
    }
    let field = (0..np)
        .map(|k| {
            let alpha = if a[k] { PI } else { 0.0 };
            let dangling = b.get(k).map_or(0.0, |&bk| if bk { PI / 4.0 } else { 0.0 });
            let vartheta = beta.primitive_angle(k) + dangling;
            BRIGHT_COUPLING * lattice.primitive_degree(k) as f64 - (alpha + vartheta) / 2.0
        })
        .collect();
    Ok(IsingFieldConfig {
        rows: lattice.rows,
        cols: lattice.cols,
        field,
        n_z: lattice.n_dangling(),
    })
}

/// Direct sum over all `2^N_X` spin assignments.
pub fn z_bruteforce(config: &IsingFieldConfig) -> Result<PartitionValue> {
    let n = config.n_x();
    if n > MAX_BRUTEFORCE_SITES {
        return Err(Error::TooLarge {
            what: "brute-force spin count",
            size: n,
            limit: MAX_BRUTEFORCE_SITES,
        });
    }
    let (rows, cols) = (config.rows, config.cols);
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            if c + 1 < cols {
                edges.push((k, k + 1));
            }
            if r + 1 < rows {
                edges.push((k, k + cols));
            }
        }
    }
    let field = &config.field;
    let term = |x: usize| {
        let mut h = 0.0;
        for &(i, j) in &edges {
            h += if (x >> i ^ x >> j) & 1 == 0 {
                BRIGHT_COUPLING
            } else {
                -BRIGHT_COUPLING
            };
        }
        for (k, f) in field.iter().enumerate() {
            h -= if x >> k & 1 == 0 { *f } else { -*f };
        }
        Complex64::from_polar(1.0, -h)
    };
    let total: Complex64 = (0..1usize << n)
        .into_par_iter()
        .with_min_len(1 << 12)
        .map(term)
        .sum();
    Ok(PartitionValue {
        mantissa: total,
        log_scale: 0.0,
        n_x: n,
        n_z: config.n_z,
    })
}

/// Column-by-column transfer-matrix evaluation in `O(cols * rows * 2^rows)`.
///
/// The running vector is rescaled to unit max-modulus after every column and
/// the scale is accumulated in `log_scale`, so long lattices neither overflow
/// nor underflow.
pub fn z_transfer(config: &IsingFieldConfig) -> Result<PartitionValue> {
    let (n, m) = (config.rows, config.cols);
    if n > MAX_TRANSFER_ROWS {
        return Err(Error::TooLarge {
            what: "transfer-matrix rows",
            size: n,
            limit: MAX_TRANSFER_ROWS,
        });
    }
    let dim = 1usize << n;
    let same = Complex64::from_polar(1.0, -BRIGHT_COUPLING);
    let flip = Complex64::from_polar(1.0, BRIGHT_COUPLING);

    // Weight of column `j` in spin configuration `x` (bit i = row i).
    let column_weight = |j: usize, x: usize| {
        let mut h = 0.0;
        for i in 0..n {
            if i + 1 < n {
                h += if (x >> i ^ x >> (i + 1)) & 1 == 0 {
                    BRIGHT_COUPLING
                } else {
                    -BRIGHT_COUPLING
                };
            }
            let f = config.field[i * m + j];
            h -= if x >> i & 1 == 0 { f } else { -f };
        }
        Complex64::from_polar(1.0, -h)
    };

    let mut v: Vec<Complex64> = (0..dim).map(|x| column_weight(0, x)).collect();
    let mut log_scale = 0.0;
    for j in 1..m {
        // Inter-column couplings factorize into one 2x2 butterfly per row.
        for i in 0..n {
            let bit = 1usize << i;
            for x in 0..dim {
                if x & bit == 0 {
                    let (u, w) = (v[x], v[x | bit]);
                    v[x] = same * u + flip * w;
                    v[x | bit] = flip * u + same * w;
                }
            }
        }
        let mut peak: f64 = 0.0;
        for (x, val) in v.iter_mut().enumerate() {
            *val *= column_weight(j, x);
            peak = peak.max(val.norm());
        }
        if peak > 0.0 {
            let inv = 1.0 / peak;
            for val in &mut v {
                *val *= inv;
            }
            log_scale += peak.ln();
        }
    }
    let total: Complex64 = v.iter().sum();
    Ok(PartitionValue {
        mantissa: total,
        log_scale,
        n_x: n * m,
        n_z: config.n_z,
    })
}

/// Outcome of comparing exact outcome probabilities with the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub arch: Architecture,
    pub rows: usize,
    pub cols: usize,
    pub beta: String,
    pub outcomes: usize,
    pub max_residual: f64,
    /// Per-outcome residuals, indexed like the outcome table; only filled on request.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Vec<f64>>,
}

/// Maximum over all outcomes of `|prob(a,b|beta) - |Z|^2 / 2^(2 N_X + N_Z)|`.
pub fn check_identity(arch: Architecture, rows: usize, cols: usize, beta: &BetaConfig) -> Result<f64> {
    Ok(identity_report(arch, rows, cols, beta, false)?.max_residual)
}

pub fn identity_report(
    arch: Architecture,
    rows: usize,
    cols: usize,
    beta: &BetaConfig,
    verbose: bool,
) -> Result<IdentityReport> {
    let lattice = Lattice::build(arch, rows, cols)?;
    if lattice.n_sites() > MAX_QUBITS {
        return Err(Error::TooLarge {
            what: "identity-check qubits",
            size: lattice.n_sites(),
            limit: MAX_QUBITS,
        });
    }
    let psi = product_state(beta, &lattice)?;
    let out = evolve_diagonal(&psi, &IsingCouplings::from_lattice(&lattice), &lattice)?;
    let table = measurement_distribution(&out, &lattice)?;
    let np = lattice.n_primitive();
    let residuals = (0..table.len())
        .into_par_iter()
        .map(|idx| {
            let a: Vec<bool> = (0..np).map(|k| idx >> k & 1 == 1).collect();
            let b: Vec<bool> = (0..lattice.n_dangling())
                .map(|k| idx >> (np + k) & 1 == 1)
                .collect();
            let cfg = field_config(&lattice, &a, &b, beta)?;
            let z = z_transfer(&cfg)?;
            Ok((table.probs[idx] - z.probability()).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(IdentityReport {
        arch,
        rows,
        cols,
        beta: beta.bitstring(),
        outcomes: residuals.len(),
        max_residual: residuals.iter().copied().fold(0.0, f64::max),
        residuals: verbose.then_some(residuals),
    })
}
