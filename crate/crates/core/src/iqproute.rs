//! Dense IQP circuits and their linear-depth nearest-neighbor compilation.
//!
//! Gates are `exp(i theta X_u)` and `exp(i theta X_u X_v)` with `theta = k pi/8`.
//! All gates commute, so a normalized circuit can be scheduled on a line by an
//! odd-even transposition network: every logical pair becomes adjacent exactly
//! once in `n` rounds, its gate is applied there and the pair is swapped. The
//! network leaves the qubits in reversed order.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Angles are stored as multiples of `pi/8` modulo `2 pi`.
pub const ANGLE_MODULUS: u8 = 16;
/// Largest width accepted by [`verify_schedule`].
pub const MAX_VERIFY_QUBITS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IqpCircuit {
    pub n: usize,
    /// `(qubit, k)` for `exp(i k pi/8 X)`.
    pub singles: Vec<(usize, u8)>,
    /// `((u, v), k)` for `exp(i k pi/8 X_u X_v)`.
    pub pairs: Vec<((usize, usize), u8)>,
}

pub fn angle(k: u8) -> f64 {
    k as f64 * std::f64::consts::PI / 8.0
}

impl IqpCircuit {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "must be positive"));
        }
        Ok(IqpCircuit {
            n,
            singles: Vec::new(),
            pairs: Vec::new(),
        })
    }

    pub fn gate_count(&self) -> usize {
        self.singles.len() + self.pairs.len()
    }

    fn validate(&self) -> Result<()> {
        for &(q, _) in &self.singles {
            if q >= self.n {
                return Err(Error::invalid("circuit", format!("qubit {q} out of range")));
            }
        }
        for &((u, v), _) in &self.pairs {
            if u >= self.n || v >= self.n || u == v {
                return Err(Error::invalid("circuit", format!("bad pair ({u}, {v})")));
            }
        }
        Ok(())
    }

    /// Normal form: sorted, ordered pairs, at most one gate per support, no
    /// zero angles.
    pub fn is_normalized(&self) -> bool {
        let singles_ok = self.singles.windows(2).all(|w| w[0].0 < w[1].0)
            && self.singles.iter().all(|&(q, k)| q < self.n && k > 0 && k < ANGLE_MODULUS);
        let pairs_ok = self.pairs.windows(2).all(|w| w[0].0 < w[1].0)
            && self
                .pairs
                .iter()
                .all(|&((u, v), k)| u < v && v < self.n && k > 0 && k < ANGLE_MODULUS);
        singles_ok && pairs_ok
    }
}

/// Fill every single-qubit and pair slot with a uniform angle in `{0..7} pi/8`.
pub fn random_iqp(n: usize, stream: &RandomStream) -> Result<IqpCircuit> {
    let mut c = IqpCircuit::new(n)?;
    let mut rng = stream.rng();
    for q in 0..n {
        c.singles.push((q, rng.random_range(0..8)));
    }
    for u in 0..n {
        for v in u + 1..n {
            c.pairs.push(((u, v), rng.random_range(0..8)));
        }
    }
    Ok(c)
}

/// Merge gates on identical supports (angles add modulo `2 pi`) and drop
/// identities.
pub fn normalize(circuit: &IqpCircuit) -> Result<IqpCircuit> {
    circuit.validate()?;
    let mut singles = BTreeMap::new();
    for &(q, k) in &circuit.singles {
        let e = singles.entry(q).or_insert(0u8);
        *e = (*e + k % ANGLE_MODULUS) % ANGLE_MODULUS;
    }
    let mut pairs = BTreeMap::new();
    for &((u, v), k) in &circuit.pairs {
        let e = pairs.entry((u.min(v), u.max(v))).or_insert(0u8);
        *e = (*e + k % ANGLE_MODULUS) % ANGLE_MODULUS;
    }
    Ok(IqpCircuit {
        n: circuit.n,
        singles: singles.into_iter().filter(|&(_, k)| k != 0).collect(),
        pairs: pairs.into_iter().filter(|&(_, k)| k != 0).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleOp {
    pub pos: usize,
    pub logical: usize,
    pub angle: u8,
}

/// Two-qubit operation on positions `(pos, pos + 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOp {
    pub pos: usize,
    pub logical: (usize, usize),
    /// Zero for a pure SWAP.
    pub angle: u8,
}

/// One transposition round: a gate layer (single-qubit gates at resting
/// positions and pair gates) followed by a SWAP layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub round: usize,
    pub singles: Vec<SingleOp>,
    pub gates: Vec<PairOp>,
    pub swaps: Vec<PairOp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub n: usize,
    pub rounds: Vec<Round>,
}

impl Schedule {
    /// Gate layers plus SWAP layers that contain at least one operation.
    pub fn depth(&self) -> usize {
        self.rounds
            .iter()
            .map(|r| {
                usize::from(!r.singles.is_empty() || !r.gates.is_empty()) + usize::from(!r.swaps.is_empty())
            })
            .sum()
    }

    /// Logical pairs in the order they become adjacent.
    pub fn meetings(&self) -> Vec<(usize, usize)> {
        self.rounds
            .iter()
            .flat_map(|r| r.swaps.iter().map(|s| (s.logical.0.min(s.logical.1), s.logical.0.max(s.logical.1))))
            .collect()
    }

    /// Logical qubit at each position after the schedule.
    pub fn final_order(&self) -> Vec<usize> {
        let mut at: Vec<usize> = (0..self.n).collect();
        for r in &self.rounds {
            for s in &r.swaps {
                at.swap(s.pos, s.pos + 1);
            }
        }
        at
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Compile a normalized circuit onto a line with `n` odd-even transposition
/// rounds. Round `r` pairs positions `(p, p+1)` with `p = r mod 2, r mod 2 + 2, ...`.
/// A single-qubit gate is applied the first time its qubit rests at the
/// boundary of the line.
pub fn schedule_linear(circuit: &IqpCircuit) -> Result<Schedule> {
    if !circuit.is_normalized() {
        return Err(Error::invalid("circuit", "schedule_linear requires a normalized circuit"));
    }
    let n = circuit.n;
    let pair_angle: BTreeMap<(usize, usize), u8> = circuit.pairs.iter().copied().collect();
    let mut single_angle: BTreeMap<usize, u8> = circuit.singles.iter().copied().collect();
    let mut at: Vec<usize> = (0..n).collect();
    let mut rounds = Vec::with_capacity(n);
    for r in 0..n {
        let start = r % 2;
        let mut busy = vec![false; n];
        let mut gates = Vec::new();
        let mut swaps = Vec::new();
        let mut p = start;
        while p + 1 < n {
            busy[p] = true;
            busy[p + 1] = true;
            let (u, v) = (at[p], at[p + 1]);
            let key = (u.min(v), u.max(v));
            if let Some(&k) = pair_angle.get(&key) {
                gates.push(PairOp {
                    pos: p,
                    logical: (u, v),
                    angle: k,
                });
            }
            swaps.push(PairOp {
                pos: p,
                logical: (u, v),
                angle: 0,
            });
            p += 2;
        }
        let mut singles = Vec::new();
        for p in [0, n - 1] {
            if !busy[p] {
                if let Some(k) = single_angle.remove(&at[p]) {
                    singles.push(SingleOp {
                        pos: p,
                        logical: at[p],
                        angle: k,
                    });
                }
            }
            if n == 1 {
                break;
            }
        }
        for s in &swaps {
            at.swap(s.pos, s.pos + 1);
        }
        rounds.push(Round {
            round: r,
            singles,
            gates,
            swaps,
        });
    }
    if let Some((&q, _)) = single_angle.iter().next() {
        return Err(Error::invalid(
            "schedule",
            format!("logical qubit {q} never rests at a boundary"),
        ));
    }
    Ok(Schedule { n, rounds })
}

fn apply_x_rotation(state: &mut [Complex64], mask: usize, k: u8) {
    let (c, s) = (angle(k).cos(), angle(k).sin());
    let i_s = Complex64::new(0.0, s);
    let old = state.to_vec();
    for (x, a) in state.iter_mut().enumerate() {
        *a = old[x] * c + old[x ^ mask] * i_s;
    }
}

fn dense_unitary(n: usize, apply: impl Fn(&mut Vec<Complex64>)) -> DMatrix<Complex64> {
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[col] = Complex64::new(1.0, 0.0);
        apply(&mut v);
        for (row, a) in v.into_iter().enumerate() {
            m[(row, col)] = a;
        }
    }
    m
}

/// Dense unitary of `circuit`; bit `q` of a basis index is qubit `q`.
pub fn circuit_unitary(circuit: &IqpCircuit) -> Result<DMatrix<Complex64>> {
    circuit.validate()?;
    check_verify_size(circuit.n)?;
    Ok(dense_unitary(circuit.n, |v| {
        for &(q, k) in &circuit.singles {
            apply_x_rotation(v, 1 << q, k);
        }
        for &((u, w), k) in &circuit.pairs {
            apply_x_rotation(v, 1 << u | 1 << w, k);
        }
    }))
}

/// Dense unitary of `schedule` on positions, followed by the inverse of the
/// reversal so that bit `q` again labels logical qubit `q`.
pub fn schedule_unitary(schedule: &Schedule) -> Result<DMatrix<Complex64>> {
    let n = schedule.n;
    check_verify_size(n)?;
    Ok(dense_unitary(n, |v| {
        for r in &schedule.rounds {
            for s in &r.singles {
                apply_x_rotation(v, 1 << s.pos, s.angle);
            }
            for g in &r.gates {
                apply_x_rotation(v, 0b11 << g.pos, g.angle);
            }
            for s in &r.swaps {
                let (a, b) = (s.pos, s.pos + 1);
                let old = v.clone();
                for (x, amp) in v.iter_mut().enumerate() {
                    let y = if (x >> a ^ x >> b) & 1 == 1 {
                        x ^ (1 << a | 1 << b)
                    } else {
                        x
                    };
                    *amp = old[y];
                }
            }
        }
        let old = v.clone();
        for (x, amp) in v.iter_mut().enumerate() {
            *amp = old[reverse_bits(x, n)];
        }
    }))
}

fn reverse_bits(x: usize, n: usize) -> usize {
    (0..n).fold(0, |acc, q| acc | (x >> q & 1) << (n - 1 - q))
}

fn check_verify_size(n: usize) -> Result<()> {
    if n > MAX_VERIFY_QUBITS {
        return Err(Error::TooLarge {
            what: "verification qubits",
            size: n,
            limit: MAX_VERIFY_QUBITS,
        });
    }
    Ok(())
}

/// Operator-norm distance between the schedule (with the reversal undone) and
/// the circuit, after optimal global-phase alignment.
pub fn verify_schedule(circuit: &IqpCircuit, schedule: &Schedule) -> Result<f64> {
    if circuit.n != schedule.n {
        return Err(Error::DimensionMismatch {
            expected: circuit.n,
            actual: schedule.n,
        });
    }
    let target = circuit_unitary(circuit)?;
    let got = schedule_unitary(schedule)?;
    // tr(T^dagger G) in a fixed summation order.
    let overlap: Complex64 = target.iter().zip(got.iter()).map(|(t, g)| t.conj() * g).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let diff = got.map(|a| a * phase.conj()) - target;
    let sv = diff.singular_values();
    Ok(sv.iter().copied().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_qubit_circuit() {
        let c = random_iqp(1, &RandomStream::new(0)).unwrap();
        assert!(c.pairs.is_empty());
        let s = schedule_linear(&normalize(&c).unwrap()).unwrap();
        assert!(verify_schedule(&normalize(&c).unwrap(), &s).unwrap() < 1e-12);
    }

    #[test]
    fn four_qubit_counts() {
        let c = normalize(&random_iqp(4, &RandomStream::new(3)).unwrap()).unwrap();
        assert!(c.singles.len() <= 4 && c.pairs.len() <= 6);
    }

    #[test]
    fn reproducible() {
        let s = RandomStream::new(8);
        assert_eq!(random_iqp(6, &s).unwrap(), random_iqp(6, &s).unwrap());
    }

    #[test]
    fn merge_and_drop() {
        let mut c = IqpCircuit::new(3).unwrap();
        c.pairs = vec![((0, 1), 1), ((1, 0), 1), ((1, 2), 9), ((2, 1), 7)];
        c.singles = vec![(2, 15), (2, 1)];
        let nc = normalize(&c).unwrap();
        assert_eq!(nc.pairs, vec![((0, 1), 2)]);
        assert!(nc.singles.is_empty());
        let mut bad = IqpCircuit::new(2).unwrap();
        bad.pairs = vec![((1, 1), 1)];
        assert!(normalize(&bad).is_err());
    }

    #[test]
    fn normalization_preserves_unitary() {
        let mut c = random_iqp(5, &RandomStream::new(1)).unwrap();
        let extra = random_iqp(5, &RandomStream::new(2)).unwrap();
        c.singles.extend(extra.singles);
        c.pairs.extend(extra.pairs.into_iter().map(|((u, v), k)| ((v, u), k)));
        let nc = normalize(&c).unwrap();
        assert!(nc.gate_count() <= 15);
        let d = circuit_unitary(&c).unwrap() - circuit_unitary(&nc).unwrap();
        let norm = d.singular_values().iter().copied().fold(0.0, f64::max);
        assert!(norm < 1e-12);
    }

    #[test]
    fn four_qubit_schedule() {
        let c = normalize(&random_iqp(4, &RandomStream::new(5)).unwrap()).unwrap();
        let s = schedule_linear(&c).unwrap();
        let mut m = s.meetings();
        m.sort();
        assert_eq!(m, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(s.final_order(), vec![3, 2, 1, 0]);
    }

    #[test]
    fn two_qubit_schedule() {
        let c = normalize(&random_iqp(2, &RandomStream::new(5)).unwrap()).unwrap();
        let s = schedule_linear(&c).unwrap();
        assert_eq!(s.meetings().len(), 1);
        assert!(s.depth() <= 4);
    }

    #[test]
    fn unnormalized_rejected() {
        let mut c = IqpCircuit::new(2).unwrap();
        c.singles = vec![(0, 0)];
        assert!(schedule_linear(&c).is_err());
    }

    #[test]
    fn identity_deviation_zero() {
        let c = IqpCircuit::new(3).unwrap();
        let s = schedule_linear(&c).unwrap();
        assert!(verify_schedule(&c, &s).unwrap() < 1e-12);
    }

    #[test]
    fn dropped_swap_detected() {
        let c = normalize(&random_iqp(5, &RandomStream::new(9)).unwrap()).unwrap();
        let mut s = schedule_linear(&c).unwrap();
        s.rounds[1].swaps.pop();
        assert!(verify_schedule(&c, &s).unwrap() >= 0.1);
    }

    #[test]
    fn structure_up_to_64() {
        for n in 1..=64 {
            let mut c = IqpCircuit::new(n).unwrap();
            c.singles = (0..n).map(|q| (q, 1)).collect();
            let s = schedule_linear(&c).unwrap();
            assert!(s.depth() <= 2 * n + 2);
            let mut m = s.meetings();
            m.sort();
            m.dedup();
            assert_eq!(m.len(), n * (n - 1) / 2);
            assert_eq!(s.meetings().len(), n * (n - 1) / 2);
            assert_eq!(s.final_order(), (0..n).rev().collect::<Vec<_>>());
            let placed: usize = s.rounds.iter().map(|r| r.singles.len()).sum();
            assert_eq!(placed, n);
        }
    }

    #[test]
    fn json_layers() {
        let c = normalize(&random_iqp(3, &RandomStream::new(2)).unwrap()).unwrap();
        let json = schedule_linear(&c).unwrap().to_json().unwrap();
        let back: Schedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back.n, 3);
    }

    proptest! {
        #[test]
        fn normalize_idempotent(seed: u64, n in 1usize..8) {
            let c = normalize(&random_iqp(n, &RandomStream::new(seed)).unwrap()).unwrap();
            prop_assert!(c.is_normalized());
            prop_assert_eq!(normalize(&c).unwrap(), c);
        }

        #[test]
        fn schedules_verify(seed: u64, n in 2usize..=6) {
            let c = normalize(&random_iqp(n, &RandomStream::new(seed)).unwrap()).unwrap();
            let s = schedule_linear(&c).unwrap();
            prop_assert!(verify_schedule(&c, &s).unwrap() < 1e-9);
        }
    }
}
