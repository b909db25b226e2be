//! Logical circuit families encoded by the lattice architectures, and their
//! anti-concentration and Porter-Thomas statistics.
//!
//! Column `j` of an `n x m` lattice acts on the `n` logical qubits as
//! `H . Z^a . CZ-chain . diag(1, e^{i beta})`, starting from `|+>^n`. The
//! byproduct layer `Z^a` carries the X-outcomes of column `j` and is absent
//! for the last column, whose outcomes are the circuit output `x`. For
//! architecture III the dangling outcome `s` of each site adds `s pi/4` to its
//! phase.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Architecture, Lattice};
use crate::prep::{sample_beta_with, BetaConfig, PrepOptions};
use crate::rng::RandomStream;
use crate::statevec::{ProbTable, StateVector};

/// Largest logical width simulated densely.
pub const MAX_LOGICAL_QUBITS: usize = 20;

/// Slack applied to the `p >= 2^-n` test so that exactly-uniform entries
/// are not lost to rounding.
const GAMMA_REL_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Layer {
    /// `diag(1, e^{i phi_q})` on every qubit.
    Phase(Vec<f64>),
    /// `Z` on every qubit whose flag is set.
    Byproduct(Vec<bool>),
    /// CZ on every adjacent pair `(q, q+1)`.
    CzChain,
    Hadamard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalCircuit {
    pub n: usize,
    pub columns: usize,
    pub layers: Vec<Layer>,
}

impl LogicalCircuit {
    /// Phases per column, for inspection.
    pub fn phase_layers(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Phase(p) => Some(p.as_slice()),
                _ => None,
            })
            .collect()
    }
}

/// Circuit realized by `lattice` prepared with `beta` when the non-output
/// sites read `y` (ascending site order).
pub fn build_circuit(lattice: &Lattice, beta: &BetaConfig, y: &[bool]) -> Result<LogicalCircuit> {
    beta.check_lattice(lattice)?;
    let (n, m) = (lattice.rows, lattice.cols);
    let non_out = lattice.non_output_sites();
    if y.len() != non_out.len() {
        return Err(Error::DimensionMismatch {
            expected: non_out.len(),
            actual: y.len(),
        });
    }
    let mut bit = vec![false; lattice.n_sites()];
    for (&s, &v) in non_out.iter().zip(y) {
        bit[s] = v;
    }
    let mut layers = Vec::with_capacity(4 * m);
    for j in 0..m {
        let phases = (0..n)
            .map(|i| {
                let k = lattice.primitive_index(i, j);
                let extra = match lattice.dangling_of(k) {
                    Some(d) if bit[d] => PI / 4.0,
                    _ => 0.0,
                };
                beta.primitive_angle(k) + extra
            })
            .collect();
        layers.push(Layer::Phase(phases));
        if j + 1 < m {
            let a = (0..n).map(|i| bit[lattice.primitive_index(i, j)]).collect();
            layers.push(Layer::Byproduct(a));
        }
        layers.push(Layer::CzChain);
        layers.push(Layer::Hadamard);
    }
    Ok(LogicalCircuit {
        n,
        columns: m,
        layers,
    })
}

/// Output distribution `|<x| C |+>^n|^2`, bit `i` of `x` = qubit `i`.
pub fn simulate_circuit(circuit: &LogicalCircuit) -> Result<ProbTable> {
    let n = circuit.n;
    if n > MAX_LOGICAL_QUBITS {
        return Err(Error::TooLarge {
            what: "logical qubits",
            size: n,
            limit: MAX_LOGICAL_QUBITS,
        });
    }
    let dim = 1usize << n;
    let amp = Complex64::new((dim as f64).sqrt().recip(), 0.0);
    let mut psi = StateVector::from_amplitudes(n, vec![amp; dim])?;
    for layer in &circuit.layers {
        match layer {
            Layer::Phase(p) => {
                let rot: Vec<Complex64> = p.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
                psi.apply_diagonal(|x| {
                    let mut f = Complex64::new(1.0, 0.0);
                    for (q, r) in rot.iter().enumerate() {
                        if x >> q & 1 == 1 {
                            f *= r;
                        }
                    }
                    f
                });
            }
            Layer::Byproduct(a) => {
                for (q, _) in a.iter().enumerate().filter(|(_, &z)| z) {
                    psi.apply_z(q);
                }
            }
            Layer::CzChain => {
                psi.apply_diagonal(|x| {
                    if (x & (x >> 1)).count_ones() % 2 == 1 {
                        Complex64::new(-1.0, 0.0)
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                });
            }
            Layer::Hadamard => {
                for q in 0..n {
                    psi.apply_hadamard(q);
                }
            }
        }
    }
    ProbTable::new(n, psi.amplitudes().iter().map(|a| a.norm_sqr()).collect())
}

/// Fraction of outcomes with probability at least `2^-n`.
pub fn gamma(table: &ProbTable) -> f64 {
    let threshold = (1.0 - GAMMA_REL_SLACK) / table.len() as f64;
    table.probs.iter().filter(|&&p| p >= threshold).count() as f64 / table.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntiConcentration {
    pub gammas: Vec<f64>,
    pub mean_gamma: f64,
    /// Fraction of instances with `gamma >= 1/e`.
    pub alpha: f64,
}

pub fn anti_concentration_stats(tables: &[ProbTable]) -> Result<AntiConcentration> {
    let first = tables
        .first()
        .ok_or_else(|| Error::invalid("tables", "empty ensemble"))?;
    if let Some(t) = tables.iter().find(|t| t.n_bits != first.n_bits) {
        return Err(Error::DimensionMismatch {
            expected: first.n_bits,
            actual: t.n_bits,
        });
    }
    let gammas: Vec<f64> = tables.iter().map(gamma).collect();
    Ok(summarize_gammas(gammas))
}

pub fn summarize_gammas(gammas: Vec<f64>) -> AntiConcentration {
    let count = gammas.len().max(1) as f64;
    let mean_gamma = gammas.iter().sum::<f64>() / count;
    let cut = (-1.0f64).exp();
    let alpha = gammas.iter().filter(|&&g| g >= cut).count() as f64 / count;
    AntiConcentration {
        gammas,
        mean_gamma,
        alpha,
    }
}

/// Number of equal-mass Porter-Thomas bins used for `2^n` outcomes.
pub fn pt_bins(n: usize) -> usize {
    let outcomes = 1u64 << n.min(40);
    outcomes.div_ceil(5).min(100) as usize
}

/// Total-variation distance between the binned distribution of the table's
/// `2^n` probabilities and the Porter-Thomas law `2^n exp(-2^n p)`.
///
/// Bin `i` covers `[-ln(1 - i/B), -ln(1 - (i+1)/B)) / 2^n`, so every bin has PT
/// mass exactly `1/B`.
pub fn pt_tv_distance(table: &ProbTable) -> f64 {
    let bins = pt_bins(table.n_bits);
    let dim = table.len() as f64;
    let mut counts = vec![0usize; bins];
    for &p in &table.probs {
        let u = 1.0 - (-dim * p.max(0.0)).exp();
        let b = ((u * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let expect = 1.0 / bins as f64;
    0.5 * counts
        .iter()
        .map(|&c| (c as f64 / dim - expect).abs())
        .sum::<f64>()
}

/// One random lattice instance: preparation angles and non-output outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub beta: BetaConfig,
    pub y: Vec<bool>,
}

/// Draw `beta` and a uniform `y` from `stream`. The two draws use separate
/// substreams.
pub fn sample_instance(lattice: &Lattice, stream: &RandomStream, opts: &PrepOptions) -> Result<Instance> {
    let beta = sample_beta_with(lattice.arch, lattice, &stream.substream(0), opts)?;
    let mut rng = stream.substream(1).rng();
    let y = (0..lattice.n_sites() - lattice.rows).map(|_| rng.random()).collect();
    Ok(Instance { beta, y })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceStats {
    pub instance: u64,
    /// Address of the random stream that regenerates this instance.
    pub stream: String,
    pub gamma: f64,
    pub tv: f64,
}

/// Simulate `instances` random circuits of the family encoded by `arch` on an
/// `n x m` lattice; instance `k` uses `stream.substream(k)`.
pub fn run_ensemble(
    arch: Architecture,
    n: usize,
    m: usize,
    instances: usize,
    stream: &RandomStream,
    opts: &PrepOptions,
) -> Result<Vec<InstanceStats>> {
    let lattice = Lattice::build(arch, n, m)?;
    if n > MAX_LOGICAL_QUBITS {
        return Err(Error::TooLarge {
            what: "logical qubits",
            size: n,
            limit: MAX_LOGICAL_QUBITS,
        });
    }
    (0..instances as u64)
        .into_par_iter()
        .map(|k| {
            let sub = stream.substream(k);
            let inst = sample_instance(&lattice, &sub, opts)?;
            let table = simulate_circuit(&build_circuit(&lattice, &inst.beta, &inst.y)?)?;
            Ok(InstanceStats {
                instance: k,
                stream: sub.address(),
                gamma: gamma(&table),
                tv: pt_tv_distance(&table),
            })
        })
        .collect()
}
