//! Dense state vectors, the diagonal quench, fixed-basis measurement and
//! shot sampling.
//!
//! Basis index bit `k` is lattice site `k`. Measurement reads primitive sites
//! in the X basis (a Hadamard is applied before taking moduli) and dangling
//! sites in the Z basis.

use std::io::Write;

use num_complex::Complex64;
use rand::distr::Distribution;
use rand_distr::weighted::WeightedAliasIndex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{IsingCouplings, Lattice};
use crate::rng::RandomStream;

/// Largest qubit count for which dense vectors and tables are built.
pub const MAX_QUBITS: usize = 24;

/// Shots drawn per random substream when sampling.
const SHOT_CHUNK: usize = 1 << 16;

const PAR_CHUNK: usize = 1 << 12;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n` qubits.
    pub fn zero(n: usize) -> Result<Self> {
        check_size(n)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n, amps })
    }

    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_size(n)?;
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                actual: amps.len(),
            });
        }
        Ok(StateVector { n, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn apply_hadamard(&mut self, q: usize) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a, b) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = (a + b) * s;
                self.amps[i | bit] = (a - b) * s;
            }
        }
    }

    pub fn apply_x(&mut self, q: usize) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                self.amps.swap(i, i | bit);
            }
        }
    }

    pub fn apply_z(&mut self, q: usize) {
        let bit = 1usize << q;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & bit != 0 {
                *a = -*a;
            }
        }
    }

    pub fn apply_y(&mut self, q: usize) {
        // Y = i X Z
        self.apply_z(q);
        self.apply_x(q);
        let i = Complex64::new(0.0, 1.0);
        for a in &mut self.amps {
            *a *= i;
        }
    }

    /// Multiply every amplitude by `phase(index)`.
    pub fn apply_diagonal(&mut self, phase: impl Fn(usize) -> Complex64 + Sync) {
        self.amps
            .par_chunks_mut(PAR_CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                let base = c * PAR_CHUNK;
                for (off, a) in chunk.iter_mut().enumerate() {
                    *a *= phase(base + off);
                }
            });
    }
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_QUBITS {
        return Err(Error::TooLarge {
            what: "dense state qubits",
            size: n,
            limit: MAX_QUBITS,
        });
    }
    Ok(())
}

/// Apply the quench `U = exp(+i H)` where `H(s)` is the classical energy of
/// basis state `s` under `couplings`.
///
/// The positive exponent is the one under which dark edges act as
/// controlled-T (not its inverse) and under which the partition-function
/// identity holds for dangling outcomes `b = 1`.
pub fn evolve_diagonal(
    state: &StateVector,
    couplings: &IsingCouplings,
    lattice: &Lattice,
) -> Result<StateVector> {
    let n = lattice.n_sites();
    if state.n != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: state.n,
        });
    }
    if couplings.field.len() != n || couplings.coupling.len() != lattice.edges.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: couplings.field.len(),
        });
    }
    let edges: Vec<(usize, usize, f64)> = lattice
        .edges
        .iter()
        .zip(&couplings.coupling)
        .map(|(e, &j)| (e.a, e.b, j))
        .collect();
    let field = &couplings.field;
    let mut out = state.clone();
    out.apply_diagonal(|x| {
        let mut e = 0.0;
        for &(a, b, j) in &edges {
            if (x >> a ^ x >> b) & 1 == 0 {
                e += j;
            } else {
                e -= j;
            }
        }
        for (k, h) in field.iter().enumerate() {
            if x >> k & 1 == 0 {
                e -= h;
            } else {
                e += h;
            }
        }
        Complex64::from_polar(1.0, e)
    });
    Ok(out)
}

/// Dense probability table over `n_bits`-bit outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbTable {
    pub n_bits: usize,
    pub probs: Vec<f64>,
}

impl ProbTable {
    pub fn new(n_bits: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << n_bits {
            return Err(Error::DimensionMismatch {
                expected: 1 << n_bits,
                actual: probs.len(),
            });
        }
        Ok(ProbTable { n_bits, probs })
    }

    pub fn uniform(n_bits: usize) -> Self {
        let len = 1usize << n_bits;
        ProbTable {
            n_bits,
            probs: vec![1.0 / len as f64; len],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &ProbTable) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn tv_distance(&self, other: &ProbTable) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Little-endian float64 dump of the table.
    pub fn write_le<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.probs {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_le(bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 8 != 0 {
            return Err(Error::invalid("table", "byte length is not a multiple of 8"));
        }
        let probs: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let n_bits = probs.len().trailing_zeros() as usize;
        ProbTable::new(n_bits, probs)
    }

    /// Draw `shots` outcome indices. Shots are generated in fixed-size chunks,
    /// each from its own substream of `stream`.
    pub fn sample_indices(&self, shots: usize, stream: &RandomStream) -> Result<Vec<usize>> {
        if shots == 0 {
            return Err(Error::invalid("shots", "must be positive"));
        }
        let alias = WeightedAliasIndex::new(self.probs.clone())
            .map_err(|e| Error::invalid("table", e.to_string()))?;
        let chunks = shots.div_ceil(SHOT_CHUNK);
        let out: Vec<Vec<usize>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let len = SHOT_CHUNK.min(shots - c * SHOT_CHUNK);
                let mut rng = stream.substream(c as u64).rng();
                (0..len).map(|_| alias.sample(&mut rng)).collect()
            })
            .collect();
        Ok(out.concat())
    }
}

/// One lattice readout: `a` over primitive (X-measured) sites and `b` over
/// dangling (Z-measured) sites, both in site order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub a: Vec<bool>,
    pub b: Vec<bool>,
}

impl OutcomeRecord {
    pub fn from_index(lattice: &Lattice, index: usize) -> Self {
        let np = lattice.n_primitive();
        OutcomeRecord {
            a: (0..np).map(|k| index >> k & 1 == 1).collect(),
            b: (0..lattice.n_dangling())
                .map(|k| index >> (np + k) & 1 == 1)
                .collect(),
        }
    }

    pub fn index(&self) -> usize {
        self.a
            .iter()
            .chain(&self.b)
            .enumerate()
            .fold(0, |acc, (k, &bit)| acc | (bit as usize) << k)
    }

    pub fn a_string(&self) -> String {
        bits_to_string(&self.a)
    }

    pub fn b_string(&self) -> String {
        bits_to_string(&self.b)
    }
}

pub(crate) fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Outcome probabilities of measuring primitive sites in X and dangling sites
/// in Z. The table is indexed like the state (bit `k` = site `k`).
pub fn measurement_distribution(state: &StateVector, lattice: &Lattice) -> Result<ProbTable> {
    if state.n != lattice.n_sites() {
        return Err(Error::DimensionMismatch {
            expected: lattice.n_sites(),
            actual: state.n,
        });
    }
    let mut rotated = state.clone();
    for k in 0..lattice.n_primitive() {
        rotated.apply_hadamard(k);
    }
    let probs = rotated.amps.iter().map(|a| a.norm_sqr()).collect();
    ProbTable::new(state.n, probs)
}

/// Independent shots from the measurement distribution of `state`.
pub fn sample_shots(
    state: &StateVector,
    lattice: &Lattice,
    shots: usize,
    stream: &RandomStream,
) -> Result<Vec<OutcomeRecord>> {
    if shots == 0 {
        return Err(Error::invalid("shots", "must be positive"));
    }
    let table = measurement_distribution(state, lattice)?;
    Ok(table
        .sample_indices(shots, stream)?
        .into_iter()
        .map(|i| OutcomeRecord::from_index(lattice, i))
        .collect())
}

/// Low `len` bits of `value` as a bit list.
pub fn bits_of(value: usize, len: usize) -> Vec<bool> {
    (0..len).map(|k| value >> k & 1 == 1).collect()
}

/// Full basis index from output bits `x` (by row) and non-output bits `y`
/// (ascending site order).
pub fn join_outputs(lattice: &Lattice, x: usize, y: &[bool]) -> usize {
    let mut idx = 0;
    for (i, s) in lattice.output_sites().into_iter().enumerate() {
        idx |= (x >> i & 1) << s;
    }
    for (&bit, s) in y.iter().zip(lattice.non_output_sites()) {
        idx |= (bit as usize) << s;
    }
    idx
}

fn check_y(lattice: &Lattice, y: &[bool]) -> Result<()> {
    let expected = lattice.n_sites() - lattice.rows;
    if y.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: y.len(),
        });
    }
    Ok(())
}

/// Marginal probability `q(y)` of the non-output bits.
pub fn marginal_y(full: &ProbTable, lattice: &Lattice, y: &[bool]) -> Result<f64> {
    check_full(full, lattice)?;
    check_y(lattice, y)?;
    Ok((0..1usize << lattice.rows)
        .map(|x| full.probs[join_outputs(lattice, x, y)])
        .sum())
}

/// Conditional distribution `q(x | y) = q(x, y) / q(y)` of the output bits
/// (the last primitive column, bit `i` = row `i`).
pub fn conditional_distribution(full: &ProbTable, lattice: &Lattice, y: &[bool]) -> Result<ProbTable> {
    check_full(full, lattice)?;
    check_y(lattice, y)?;
    let n = lattice.rows;
    let joint: Vec<f64> = (0..1usize << n)
        .map(|x| full.probs[join_outputs(lattice, x, y)])
        .collect();
    let qy: f64 = joint.iter().sum();
    if qy < 1e-15 {
        return Err(Error::ZeroProbability(qy));
    }
    ProbTable::new(n, joint.into_iter().map(|p| p / qy).collect())
}

fn check_full(full: &ProbTable, lattice: &Lattice) -> Result<()> {
    if full.n_bits != lattice.n_sites() {
        return Err(Error::DimensionMismatch {
            expected: lattice.n_sites(),
            actual: full.n_bits,
        });
    }
    Ok(())
}

/// Write shot records as CSV rows `instance,a,b`.
pub fn write_shots_csv<W: Write>(w: W, instance: u64, shots: &[OutcomeRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["instance", "a", "b"])?;
    for s in shots {
        wtr.write_record([instance.to_string(), s.a_string(), s.b_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Architecture, EdgeClass};
    use crate::prep::{product_state, sample_beta, BetaConfig};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn quenched(arch: Architecture, r: usize, c: usize, seed: u64) -> (Lattice, StateVector) {
        let l = Lattice::build(arch, r, c).unwrap();
        let b = sample_beta(arch, &l, &RandomStream::new(seed)).unwrap();
        let psi = product_state(&b, &l).unwrap();
        let out = evolve_diagonal(&psi, &IsingCouplings::from_lattice(&l), &l).unwrap();
        (l, out)
    }

    #[test]
    fn empty_hamiltonian_is_identity() {
        let l = Lattice::build(Architecture::I, 1, 1).unwrap();
        let psi = product_state(&BetaConfig::zeros(&l), &l).unwrap();
        let out = evolve_diagonal(&psi, &IsingCouplings::from_lattice(&l), &l).unwrap();
        assert_eq!(out, psi);
    }

    /// Compare two states up to a global phase.
    fn same_ray(a: &StateVector, b: &StateVector) -> bool {
        (a.inner(b).norm() - 1.0).abs() < 1e-12
    }

    #[test]
    fn bright_edge_is_cz() {
        let l = Lattice::build(Architecture::I, 1, 2).unwrap();
        let psi = product_state(&BetaConfig::zeros(&l), &l).unwrap();
        let out = evolve_diagonal(&psi, &IsingCouplings::from_lattice(&l), &l).unwrap();
        let h = Complex64::new(0.5, 0.0);
        let cz = StateVector::from_amplitudes(2, vec![h, h, h, -h]).unwrap();
        assert!(same_ray(&out, &cz));
    }

    #[test]
    fn dark_edge_is_controlled_t() {
        let l = Lattice::build(Architecture::III, 1, 1).unwrap();
        assert_eq!(l.count_edges(EdgeClass::Dark), 1);
        let psi = product_state(&BetaConfig::zeros(&l), &l).unwrap();
        let out = evolve_diagonal(&psi, &IsingCouplings::from_lattice(&l), &l).unwrap();
        let h = Complex64::new(0.5, 0.0);
        let ct = StateVector::from_amplitudes(
            2,
            vec![h, h, h, h * Complex64::from_polar(1.0, PI / 4.0)],
        )
        .unwrap();
        assert!(same_ray(&out, &ct));
    }

    #[test]
    fn plus_state_measures_zero() {
        let l = Lattice::build(Architecture::I, 1, 1).unwrap();
        let psi = product_state(&BetaConfig::zeros(&l), &l).unwrap();
        let t = measurement_distribution(&psi, &l).unwrap();
        assert!((t.probs[0] - 1.0).abs() < 1e-15);
        let shots = sample_shots(&psi, &l, 100, &RandomStream::new(1)).unwrap();
        assert!(shots.iter().all(|s| !s.a[0]));
    }

    #[test]
    fn zero_shots_rejected() {
        let (l, s) = quenched(Architecture::I, 1, 2, 0);
        assert!(sample_shots(&s, &l, 0, &RandomStream::new(0)).is_err());
    }

    #[test]
    fn shots_reproducible_and_accurate() {
        let (l, s) = quenched(Architecture::I, 2, 2, 4);
        let stream = RandomStream::new(77);
        let a = sample_shots(&s, &l, 100_000, &stream).unwrap();
        let b = sample_shots(&s, &l, 100_000, &stream).unwrap();
        assert_eq!(a, b);
        let exact = measurement_distribution(&s, &l).unwrap();
        let mut counts = vec![0.0; exact.len()];
        for r in &a {
            counts[r.index()] += 1.0 / a.len() as f64;
        }
        let emp = ProbTable::new(exact.n_bits, counts).unwrap();
        assert!(emp.tv_distance(&exact) < 0.02);
    }

    #[test]
    fn marginal_is_uniform() {
        for arch in [Architecture::I, Architecture::II] {
            let (l, s) = quenched(arch, 2, 2, 9);
            let full = measurement_distribution(&s, &l).unwrap();
            for y in 0..4 {
                let y = bits_of(y, 2);
                assert!((marginal_y(&full, &l, &y).unwrap() - 0.25).abs() < 1e-12);
                let c = conditional_distribution(&full, &l, &y).unwrap();
                assert!((c.total() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mirror_symmetry_commutes() {
        // Mirroring columns of a 2x3 lattice is an automorphism of the
        // couplings, so it commutes with the quench.
        let l = Lattice::build(Architecture::I, 2, 3).unwrap();
        let c = IsingCouplings::from_lattice(&l);
        let mirror = |x: usize| {
            let mut y = 0;
            for r in 0..2 {
                for col in 0..3 {
                    y |= (x >> (r * 3 + col) & 1) << (r * 3 + 2 - col);
                }
            }
            y
        };
        let amps: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let psi = StateVector::from_amplitudes(6, amps.clone()).unwrap();
        let mut perm = vec![Complex64::new(0.0, 0.0); 64];
        for i in 0..64 {
            perm[mirror(i)] = amps[i];
        }
        let psi_m = StateVector::from_amplitudes(6, perm).unwrap();
        let a = evolve_diagonal(&psi, &c, &l).unwrap();
        let b = evolve_diagonal(&psi_m, &c, &l).unwrap();
        for i in 0..64 {
            assert!((a.amps[i] - b.amps[mirror(i)]).norm() < 1e-12);
        }
    }

    #[test]
    fn le_dump_round_trip() {
        let (l, s) = quenched(Architecture::III, 1, 2, 1);
        let t = measurement_distribution(&s, &l).unwrap();
        let mut buf = Vec::new();
        t.write_le(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * 16);
        assert_eq!(ProbTable::read_le(&buf).unwrap(), t);
    }

    #[test]
    fn csv_shots() {
        let (l, s) = quenched(Architecture::III, 1, 1, 0);
        let shots = sample_shots(&s, &l, 3, &RandomStream::new(2)).unwrap();
        let mut buf = Vec::new();
        write_shots_csv(&mut buf, 5, &shots).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("instance,a,b\n5,"));
    }

    #[test]
    fn dimension_mismatch() {
        let l = Lattice::build(Architecture::I, 2, 2).unwrap();
        let s = StateVector::zero(3).unwrap();
        assert!(evolve_diagonal(&s, &IsingCouplings::from_lattice(&l), &l).is_err());
        assert!(StateVector::zero(MAX_QUBITS + 1).is_err());
    }

    proptest! {
        #[test]
        fn evolution_preserves_norm(seed in 0u64..1000, arch_i in 0usize..3) {
            let arch = Architecture::ALL[arch_i];
            let (l, s) = quenched(arch, 2, 2, seed);
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
            let t = measurement_distribution(&s, &l).unwrap();
            prop_assert!((t.total() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn outcome_index_round_trip(idx in 0usize..256) {
            let l = Lattice::build(Architecture::III, 2, 2).unwrap();
            prop_assert_eq!(OutcomeRecord::from_index(&l, idx).index(), idx);
        }
    }
}
