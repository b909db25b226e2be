//! Preparation angles and product input states.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Architecture, Lattice};
use crate::rng::RandomStream;
use crate::statevec::StateVector;

/// Translation symmetry of the preparation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symmetry {
    /// Disordered: independent per site.
    #[serde(rename = "DO")]
    Disordered,
    /// Constant along each column, independent across columns.
    #[serde(rename = "TI_(1,inf)")]
    ColumnConstant,
    /// Constant over the whole lattice.
    #[serde(rename = "TI_(1,1)")]
    Uniform,
}

impl Symmetry {
    pub fn of(arch: Architecture) -> Self {
        match arch {
            Architecture::I => Symmetry::Disordered,
            Architecture::II => Symmetry::ColumnConstant,
            Architecture::III => Symmetry::Uniform,
        }
    }
}

impl fmt::Display for Symmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Symmetry::Disordered => "DO",
            Symmetry::ColumnConstant => "TI_(1,inf)",
            Symmetry::Uniform => "TI_(1,1)",
        })
    }
}

/// Angle scale `theta` of the architecture.
pub fn theta_of(arch: Architecture) -> f64 {
    match arch {
        Architecture::II => PI / 8.0,
        _ => PI / 4.0,
    }
}

/// Options that the preparation ensemble does not fix by itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepOptions {
    /// Whether the uniform architecture-III angle is `theta` (true) or 0.
    pub uniform_on: bool,
}

impl Default for PrepOptions {
    fn default() -> Self {
        PrepOptions { uniform_on: true }
    }
}

/// Preparation angles `beta_i in {0, theta}` on the primitive sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaConfig {
    pub symmetry: Symmetry,
    pub theta: f64,
    /// One flag per primitive site (row-major); `true` means angle `theta`.
    #[serde(with = "bitstring")]
    pub bits: Vec<bool>,
    rows: usize,
    cols: usize,
}

impl BetaConfig {
    /// Configuration determined by the independent bits of the symmetry class:
    /// one per site (DO), one per column (TI_(1,inf)) or none (TI_(1,1)).
    pub fn from_free_bits(lattice: &Lattice, free: &[bool], opts: &PrepOptions) -> Result<Self> {
        let symmetry = Symmetry::of(lattice.arch);
        let expected = free_bit_count(lattice);
        if free.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: free.len(),
            });
        }
        let (rows, cols) = (lattice.rows, lattice.cols);
        let bits = (0..rows * cols)
            .map(|k| match symmetry {
                Symmetry::Disordered => free[k],
                Symmetry::ColumnConstant => free[k % cols],
                Symmetry::Uniform => opts.uniform_on,
            })
            .collect();
        Ok(BetaConfig {
            symmetry,
            theta: theta_of(lattice.arch),
            bits,
            rows,
            cols,
        })
    }

    pub fn zeros(lattice: &Lattice) -> Self {
        BetaConfig {
            symmetry: Symmetry::of(lattice.arch),
            theta: theta_of(lattice.arch),
            bits: vec![false; lattice.n_primitive()],
            rows: lattice.rows,
            cols: lattice.cols,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Angle at primitive site `k`.
    pub fn primitive_angle(&self, k: usize) -> f64 {
        if self.bits[k] {
            self.theta
        } else {
            0.0
        }
    }

    /// Angle at any lattice site; dangling sites carry their host's angle.
    pub fn angle(&self, lattice: &Lattice, site: usize) -> f64 {
        let k = lattice.host_of(site).unwrap_or(site);
        self.primitive_angle(k)
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.bits.len()).map(|k| self.primitive_angle(k)).collect()
    }

    /// The independent bits of this configuration.
    pub fn free_bits(&self) -> Vec<bool> {
        match self.symmetry {
            Symmetry::Disordered => self.bits.clone(),
            Symmetry::ColumnConstant => self.bits[..self.cols].to_vec(),
            Symmetry::Uniform => Vec::new(),
        }
    }

    /// True if the configuration respects its symmetry class.
    pub fn is_symmetric(&self) -> bool {
        match self.symmetry {
            Symmetry::Disordered => true,
            Symmetry::ColumnConstant => {
                (0..self.bits.len()).all(|k| self.bits[k] == self.bits[k % self.cols])
            }
            Symmetry::Uniform => self.bits.iter().all(|&b| b == self.bits[0]),
        }
    }

    pub fn check_lattice(&self, lattice: &Lattice) -> Result<()> {
        if self.rows != lattice.rows || self.cols != lattice.cols {
            return Err(Error::invalid(
                "beta",
                format!(
                    "built for {}x{} but lattice is {}x{}",
                    self.rows, self.cols, lattice.rows, lattice.cols
                ),
            ));
        }
        if self.symmetry != Symmetry::of(lattice.arch) {
            return Err(Error::invalid(
                "beta",
                format!("symmetry {} does not match architecture {}", self.symmetry, lattice.arch),
            ));
        }
        Ok(())
    }

    pub fn bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Number of independent preparation bits; `|Gamma| = 2^free_bit_count`.
pub fn free_bit_count(lattice: &Lattice) -> usize {
    match Symmetry::of(lattice.arch) {
        Symmetry::Disordered => lattice.n_primitive(),
        Symmetry::ColumnConstant => lattice.cols,
        Symmetry::Uniform => 0,
    }
}

/// Draw a preparation configuration uniformly from the allowed set.
pub fn sample_beta(arch: Architecture, lattice: &Lattice, stream: &RandomStream) -> Result<BetaConfig> {
    sample_beta_with(arch, lattice, stream, &PrepOptions::default())
}

pub fn sample_beta_with(
    arch: Architecture,
    lattice: &Lattice,
    stream: &RandomStream,
    opts: &PrepOptions,
) -> Result<BetaConfig> {
    if arch != lattice.arch {
        return Err(Error::invalid(
            "arch",
            format!("lattice was built for architecture {}, not {arch}", lattice.arch),
        ));
    }
    let mut rng = stream.rng();
    let free: Vec<bool> = (0..free_bit_count(lattice)).map(|_| rng.random()).collect();
    BetaConfig::from_free_bits(lattice, &free, opts)
}

/// Every configuration in the allowed set, in counting order of the free bits.
pub fn enumerate_gamma(lattice: &Lattice, opts: &PrepOptions) -> Result<Vec<BetaConfig>> {
    let k = free_bit_count(lattice);
    if k > 20 {
        return Err(Error::TooLarge {
            what: "preparation ensemble (free bits)",
            size: k,
            limit: 20,
        });
    }
    (0..1usize << k)
        .map(|mask| {
            let free: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
            BetaConfig::from_free_bits(lattice, &free, opts)
        })
        .collect()
}

/// Product state `prod_i (|0> + e^{i beta_i}|1>) / sqrt(2)` over all sites.
pub fn product_state(beta: &BetaConfig, lattice: &Lattice) -> Result<StateVector> {
    beta.check_lattice(lattice)?;
    let n = lattice.n_sites();
    if n > crate::statevec::MAX_QUBITS {
        return Err(Error::TooLarge {
            what: "state vector qubits",
            size: n,
            limit: crate::statevec::MAX_QUBITS,
        });
    }
    let angles: Vec<f64> = (0..n).map(|s| beta.angle(lattice, s)).collect();
    let norm = (0.5f64).powf(n as f64 / 2.0);
    let amps = (0..1usize << n)
        .map(|x| {
            let mut phase = 0.0;
            for (k, a) in angles.iter().enumerate() {
                if x >> k & 1 == 1 {
                    phase += a;
                }
            }
            Complex64::from_polar(norm, phase)
        })
        .collect();
    StateVector::from_amplitudes(n, amps)
}

mod bitstring {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let text: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(serde::de::Error::custom(format!("bad bit `{other}`"))),
            })
            .collect()
    }
}
