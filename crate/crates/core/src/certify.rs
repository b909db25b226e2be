//! Parent Hamiltonians of the quenched resource states and the energy-based
//! certification protocol.
//!
//! Every site `i` carries one stabilizer `S_i` of `|Psi_beta>`; the parent
//! Hamiltonian is `H = sum_i (1 - S_i) / 2`, which has ground energy 0, gap 1
//! and term norm `J = 1`. A preparation `rho` then obeys the fidelity witness
//! `F >= 1 - tr(H rho)`.
//!
//! Stabilizers are written as sums of products of on-site observables
//! `Z` and `X_phi = cos(phi) X + sin(phi) Y`. For architectures I and II each
//! term is a single product `X_beta,i prod_j Z_j`. In architecture III the
//! controlled-T on the dangling bond splits each term into four products.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Architecture, EdgeClass, Lattice};
use crate::prep::BetaConfig;
use crate::rng::RandomStream;
use crate::statevec::StateVector;

/// Largest site count handled by the certification simulator.
pub const MAX_CERTIFY_SITES: usize = 20;

/// On-site observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "phi")]
pub enum LocalOp {
    Z,
    /// `cos(phi) X + sin(phi) Y`.
    X(f64),
}

impl LocalOp {
    fn same_as(&self, other: &LocalOp) -> bool {
        match (self, other) {
            (LocalOp::Z, LocalOp::Z) => true,
            (LocalOp::X(a), LocalOp::X(b)) => ((a - b) / (2.0 * PI)).fract().abs() < 1e-12,
            _ => false,
        }
    }
}

/// `coef * prod_k op_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub coef: f64,
    pub factors: Vec<(usize, LocalOp)>,
}

impl Product {
    fn mask(&self) -> u64 {
        self.factors.iter().fold(0, |m, &(s, _)| m | 1 << s)
    }

    /// `P |state>`.
    fn apply(&self, state: &StateVector) -> StateVector {
        let mut out = state.clone();
        for &(site, op) in &self.factors {
            match op {
                LocalOp::Z => out.apply_z(site),
                LocalOp::X(phi) => {
                    // X_phi |0> = e^{i phi} |1>,  X_phi |1> = e^{-i phi} |0>
                    let bit = 1usize << site;
                    let (up, down) = (Complex64::from_polar(1.0, phi), Complex64::from_polar(1.0, -phi));
                    let amps = out.amplitudes_mut();
                    for x in 0..amps.len() {
                        if x & bit == 0 {
                            let (a0, a1) = (amps[x], amps[x | bit]);
                            amps[x | bit] = a0 * up;
                            amps[x] = a1 * down;
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Primitive,
    Dangling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizerTerm {
    pub center: usize,
    pub kind: TermKind,
    /// Sites acted on, ascending.
    pub support: Vec<usize>,
    /// `S = sum of products`.
    pub products: Vec<Product>,
}

impl StabilizerTerm {
    pub fn locality(&self) -> usize {
        self.support.len()
    }

    pub fn apply(&self, state: &StateVector) -> StateVector {
        let n = state.n_qubits();
        let mut acc = vec![Complex64::new(0.0, 0.0); 1 << n];
        for p in &self.products {
            let v = p.apply(state);
            for (a, b) in acc.iter_mut().zip(v.amplitudes()) {
                *a += b * p.coef;
            }
        }
        StateVector::from_amplitudes(n, acc).expect("same dimension")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentHamiltonian {
    pub arch: Architecture,
    pub n_sites: usize,
    pub terms: Vec<StabilizerTerm>,
}

impl ParentHamiltonian {
    /// Ground energy (projector convention).
    pub const E0: f64 = 0.0;
    /// Spectral gap.
    pub const GAP: f64 = 1.0;
    /// Largest term norm `max ||(1 - S_i)/2||`.
    pub const J: f64 = 1.0;

    /// `<state| H |state>`.
    pub fn energy(&self, state: &StateVector) -> f64 {
        self.terms
            .iter()
            .map(|t| (1.0 - state.inner(&t.apply(state)).re) / 2.0)
            .sum()
    }
}

fn sorted_support(products: &[Product]) -> Vec<usize> {
    let mut s: Vec<usize> = products
        .iter()
        .flat_map(|p| p.factors.iter().map(|&(k, _)| k))
        .collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// Branches of `CT X_phi CT^dagger` on target `t` with control `c`:
/// `1/2 [X_phi + X_{phi+pi/4}] + 1/2 Z_c [X_phi - X_{phi+pi/4}]`.
/// Entry `(obs, zc)` is the product with `X_{phi + obs pi/4}` on `t` and
/// `Z_c^zc`.
fn ct_branches(t: usize, c: usize, phi: f64, rest: &[(usize, LocalOp)]) -> Vec<Product> {
    let mut out = Vec::with_capacity(4);
    for zc in 0..2 {
        for obs in 0..2 {
            let coef = if obs == 1 && zc == 1 { -0.5 } else { 0.5 };
            let mut factors = vec![(t, LocalOp::X(phi + obs as f64 * PI / 4.0))];
            if zc == 1 {
                factors.push((c, LocalOp::Z));
            }
            factors.extend_from_slice(rest);
            factors.sort_by_key(|f| f.0);
            out.push(Product { coef, factors });
        }
    }
    out
}

/// Branch index `obs + 2 zc` used by [`ct_branches`].
fn branch(obs: usize, zc: usize) -> usize {
    obs + 2 * zc
}

/// One stabilizer per site of `lattice`, for the state prepared with `beta`.
pub fn parent_hamiltonian(lattice: &Lattice, beta: &BetaConfig) -> Result<ParentHamiltonian> {
    beta.check_lattice(lattice)?;
    if lattice.n_sites() > 64 {
        return Err(Error::TooLarge {
            what: "parent Hamiltonian sites",
            size: lattice.n_sites(),
            limit: 64,
        });
    }
    let mut terms = Vec::with_capacity(lattice.n_sites());
    for k in 0..lattice.n_primitive() {
        let phi = beta.primitive_angle(k);
        let zs: Vec<(usize, LocalOp)> = lattice.bright_neighbors(k).map(|j| (j, LocalOp::Z)).collect();
        let products = match lattice.dangling_of(k) {
            None => {
                let mut factors = vec![(k, LocalOp::X(phi))];
                factors.extend(zs);
                factors.sort_by_key(|f| f.0);
                vec![Product { coef: 1.0, factors }]
            }
            Some(d) => ct_branches(k, d, phi, &zs),
        };
        terms.push(StabilizerTerm {
            center: k,
            kind: TermKind::Primitive,
            support: sorted_support(&products),
            products,
        });
    }
    for d in lattice.n_primitive()..lattice.n_sites() {
        let host = lattice.host_of(d).expect("dangling site has a host");
        let products = ct_branches(d, host, beta.angle(lattice, d), &[]);
        terms.push(StabilizerTerm {
            center: d,
            kind: TermKind::Dangling,
            support: sorted_support(&products),
            products,
        });
    }
    Ok(ParentHamiltonian {
        arch: lattice.arch,
        n_sites: lattice.n_sites(),
        terms,
    })
}

/// Energy contribution `constant + sum coef (-1)^{|x & mask|}` of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProduct {
    pub term: usize,
    pub coef: f64,
    pub mask: u64,
}

/// Sites measured together in one round, with the observables they carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementGroup {
    pub part: usize,
    /// One observable per site.
    pub bases: Vec<LocalOp>,
    /// Undo the dark-edge controlled-T gates before measuring (two-body mode).
    pub undo_dark_edges: bool,
    pub constant: f64,
    pub products: Vec<GroupProduct>,
}

impl MeasurementGroup {
    pub fn energy(&self, outcome: u64) -> f64 {
        self.constant
            + self
                .products
                .iter()
                .map(|p| {
                    if (outcome & p.mask).count_ones() % 2 == 0 {
                        p.coef
                    } else {
                        -p.coef
                    }
                })
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecompositionKind {
    /// Checkerboard split with on-site measurements (architectures I, II).
    TwoColor,
    /// Checkerboard split measuring across dark edges (architecture III).
    TwoBody,
    /// On-site product expansion (architecture III).
    OnSite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub kind: DecompositionKind,
    pub kappa: usize,
    pub alpha: f64,
    pub tau: usize,
    /// Term indices of each part.
    pub parts: Vec<Vec<usize>>,
    pub groups: Vec<MeasurementGroup>,
}

impl Decomposition {
    /// Within every group each product's factors match the site observables.
    pub fn is_conflict_free(&self, parent: &ParentHamiltonian) -> bool {
        self.groups.iter().all(|g| {
            g.products.iter().all(|gp| {
                let term = &parent.terms[gp.term];
                term.products.iter().any(|p| {
                    p.mask() == gp.mask
                        && (g.undo_dark_edges
                            || p.factors.iter().all(|(s, op)| g.bases[*s].same_as(op)))
                })
            })
        })
    }
}

fn part_alpha(parts: &[Vec<usize>], total: usize) -> f64 {
    parts.iter().map(Vec::len).max().unwrap_or(0) as f64 / total as f64
}

fn center_angle(parent: &ParentHamiltonian, k: usize) -> f64 {
    match parent.terms[k].products[0]
        .factors
        .iter()
        .find(|(s, _)| *s == k)
    {
        Some((_, LocalOp::X(phi))) => *phi,
        _ => 0.0,
    }
}

/// Checkerboard decomposition for architectures I and II: part `c` holds the
/// terms centered on color `c`, measured with `X_beta` on those centers and
/// `Z` everywhere else.
pub fn two_color_decomposition(parent: &ParentHamiltonian, lattice: &Lattice) -> Result<Decomposition> {
    if lattice.arch.has_dangling_bonds() {
        return Err(Error::invalid(
            "decomposition",
            "dangling-bond lattices need the two-body or on-site decomposition",
        ));
    }
    let n = lattice.n_sites();
    let mut parts = vec![Vec::new(), Vec::new()];
    let mut groups = Vec::new();
    for c in 0..2 {
        let mut bases = vec![LocalOp::Z; n];
        let mut products = Vec::new();
        for (t, term) in parent.terms.iter().enumerate() {
            if lattice.color(term.center) == c {
                parts[c].push(t);
                bases[term.center] = LocalOp::X(center_angle(parent, term.center));
                products.push(GroupProduct {
                    term: t,
                    coef: -0.5,
                    mask: term.products[0].mask(),
                });
            }
        }
        groups.push(MeasurementGroup {
            part: c,
            bases,
            undo_dark_edges: false,
            constant: parts[c].len() as f64 / 2.0,
            products,
        });
    }
    Ok(Decomposition {
        kind: DecompositionKind::TwoColor,
        kappa: 2,
        alpha: part_alpha(&parts, parent.terms.len()),
        tau: 1,
        parts,
        groups,
    })
}

/// Part `c` of a dangling-bond lattice: primitive terms centered on color `c`
/// and dangling terms whose host has the other color.
fn dangling_parts(parent: &ParentHamiltonian, lattice: &Lattice) -> Vec<Vec<usize>> {
    let mut parts = vec![Vec::new(), Vec::new()];
    for (t, term) in parent.terms.iter().enumerate() {
        let c = match term.kind {
            TermKind::Primitive => lattice.color(term.center),
            TermKind::Dangling => 1 - lattice.color(lattice.host_of(term.center).expect("host")),
        };
        parts[c].push(t);
    }
    parts
}

fn require_dangling(lattice: &Lattice) -> Result<()> {
    if !lattice.arch.has_dangling_bonds() {
        return Err(Error::invalid("decomposition", "lattice has no dangling bonds"));
    }
    Ok(())
}

/// Two-body decomposition for architecture III. Each round first undoes the
/// controlled-T on every dark edge; the terms then reduce to
/// `X_beta prod Z` (primitive) and `X_beta` (dangling).
pub fn two_body_decomposition(parent: &ParentHamiltonian, lattice: &Lattice) -> Result<Decomposition> {
    require_dangling(lattice)?;
    let n = lattice.n_sites();
    let parts = dangling_parts(parent, lattice);
    let groups = parts
        .iter()
        .enumerate()
        .map(|(c, part)| {
            let mut bases = vec![LocalOp::Z; n];
            let mut products = Vec::new();
            for &t in part {
                let term = &parent.terms[t];
                let phi = match term.products[0].factors.iter().find(|(s, _)| *s == term.center) {
                    Some((_, LocalOp::X(phi))) => *phi,
                    _ => 0.0,
                };
                bases[term.center] = LocalOp::X(phi);
                // Branch (obs = 0, zc = 0) is the reduced term once Z on the
                // control is dropped.
                let reduced = &term.products[branch(0, 0)];
                products.push(GroupProduct {
                    term: t,
                    coef: -0.5,
                    mask: reduced.mask(),
                });
            }
            MeasurementGroup {
                part: c,
                bases,
                undo_dark_edges: true,
                constant: part.len() as f64 / 2.0,
                products,
            }
        })
        .collect();
    Ok(Decomposition {
        kind: DecompositionKind::TwoBody,
        kappa: 2,
        alpha: part_alpha(&parts, parent.terms.len()),
        tau: 2,
        parts,
        groups,
    })
}

/// On-site decomposition for architecture III with `kappa = 32` groups
/// `(c, p, q)`: part `c`, branch `p` of the primitive terms in the part and
/// branch `q` of its dangling terms. Every branch of a term appears in four
/// groups, so each group carries a quarter of its weight.
pub fn onsite_decomposition(parent: &ParentHamiltonian, lattice: &Lattice) -> Result<Decomposition> {
    require_dangling(lattice)?;
    let n = lattice.n_sites();
    let parts = dangling_parts(parent, lattice);
    let mut groups = Vec::with_capacity(32);
    for (c, part) in parts.iter().enumerate() {
        for p in 0..4 {
            for q in 0..4 {
                let mut bases = vec![LocalOp::Z; n];
                let mut products = Vec::new();
                for &t in part {
                    let term = &parent.terms[t];
                    let b = match term.kind {
                        TermKind::Primitive => p,
                        TermKind::Dangling => q,
                    };
                    let prod = &term.products[b];
                    for &(s, op) in &prod.factors {
                        if s == term.center {
                            bases[s] = op;
                        }
                    }
                    products.push(GroupProduct {
                        term: t,
                        coef: -prod.coef / 8.0,
                        mask: prod.mask(),
                    });
                }
                groups.push(MeasurementGroup {
                    part: c,
                    bases,
                    undo_dark_edges: false,
                    constant: part.len() as f64 / 32.0,
                    products,
                });
            }
        }
    }
    Ok(Decomposition {
        kind: DecompositionKind::OnSite,
        kappa: 32,
        alpha: part_alpha(&parts, parent.terms.len()),
        tau: 1,
        parts,
        groups,
    })
}

/// Default decomposition of each architecture.
pub fn decompose(parent: &ParentHamiltonian, lattice: &Lattice, kind: DecompositionKind) -> Result<Decomposition> {
    match kind {
        DecompositionKind::TwoColor => two_color_decomposition(parent, lattice),
        DecompositionKind::TwoBody => two_body_decomposition(parent, lattice),
        DecompositionKind::OnSite => onsite_decomposition(parent, lattice),
    }
}

/// Unrounded sample bound
/// `(alpha^2 kappa^2 J^2 / (2 Delta^2 eps^2)) ln(-(kappa + 1) / ln(1 - p_err)) N^2`.
pub fn sample_bound(
    kappa: usize,
    alpha: f64,
    j: f64,
    delta: f64,
    eps: f64,
    p_err: f64,
    n_sites: usize,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "must be positive"));
    }
    if !(p_err > 0.0 && p_err < 0.5) {
        return Err(Error::invalid("p_err", "must lie in (0, 1/2)"));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "must be positive"));
    }
    if kappa == 0 || !(alpha > 0.0 && alpha <= 1.0) || !(j > 0.0) || n_sites == 0 {
        return Err(Error::invalid("decomposition", "kappa, alpha, J and N must be positive"));
    }
    let k = kappa as f64;
    let n = n_sites as f64;
    let coef = alpha * alpha * k * k * j * j / (2.0 * delta * delta * eps * eps);
    Ok(coef * (-(k + 1.0) / (1.0 - p_err).ln()).ln() * n * n)
}

/// Smallest integer number of rounds per group satisfying [`sample_bound`].
pub fn required_samples(
    kappa: usize,
    alpha: f64,
    j: f64,
    delta: f64,
    eps: f64,
    p_err: f64,
    n_sites: usize,
) -> Result<u64> {
    Ok(sample_bound(kappa, alpha, j, delta, eps, p_err, n_sites)?.ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum NoiseModel {
    None,
    /// Each site independently replaced by the maximally mixed state with
    /// probability `p` (a uniform Pauli from {I, X, Y, Z}).
    Depolarizing { p: f64 },
    /// Coherent `exp(-i angle Z / 2)` on every site of every copy.
    ZRotation { angle: f64 },
}

/// Supplies one fresh preparation per measurement round.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    state: StateVector,
    noise: NoiseModel,
}

impl Source {
    pub fn perfect(state: StateVector) -> Result<Self> {
        check_sites(state.n_qubits())?;
        Ok(Source {
            state,
            noise: NoiseModel::None,
        })
    }

    /// `Z_site |state>`: anticommutes with the stabilizer centered on a
    /// primitive `site` and commutes with all others.
    pub fn flipped(state: &StateVector, site: usize) -> Result<Self> {
        if site >= state.n_qubits() {
            return Err(Error::invalid("site", format!("{site} out of range")));
        }
        let mut s = state.clone();
        s.apply_z(site);
        Source::perfect(s)
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    fn error_rate(&self) -> f64 {
        match self.noise {
            NoiseModel::Depolarizing { p } => 0.75 * p,
            _ => 0.0,
        }
    }

    /// One corrupted copy.
    pub fn prepare<R: Rng>(&self, rng: &mut R) -> StateVector {
        let q = self.error_rate();
        let mut pattern = 0u64;
        if q > 0.0 {
            for site in 0..self.state.n_qubits() {
                if rng.random::<f64>() < q {
                    pattern |= rng.random_range(1..4u64) << (2 * site);
                }
            }
        }
        self.with_pattern(pattern)
    }

    /// The state with Pauli error `pattern` (2 bits per site: 1 = X, 2 = Y, 3 = Z).
    fn with_pattern(&self, pattern: u64) -> StateVector {
        let mut s = self.state.clone();
        for site in 0..s.n_qubits() {
            match pattern >> (2 * site) & 3 {
                1 => s.apply_x(site),
                2 => s.apply_y(site),
                3 => s.apply_z(site),
                _ => {}
            }
        }
        s
    }
}

fn check_sites(n: usize) -> Result<()> {
    if n > MAX_CERTIFY_SITES {
        return Err(Error::TooLarge {
            what: "certification sites",
            size: n,
            limit: MAX_CERTIFY_SITES,
        });
    }
    Ok(())
}

/// Wrap `state` in a noisy source.
pub fn apply_noise(state: &StateVector, model: NoiseModel) -> Result<Source> {
    check_sites(state.n_qubits())?;
    match model {
        NoiseModel::None => Source::perfect(state.clone()),
        NoiseModel::Depolarizing { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("p", "depolarizing probability must lie in [0, 1]"));
            }
            Ok(Source {
                state: state.clone(),
                noise: model,
            })
        }
        NoiseModel::ZRotation { angle } => {
            if !angle.is_finite() {
                return Err(Error::invalid("angle", "must be finite"));
            }
            let mut s = state.clone();
            let n = s.n_qubits();
            s.apply_diagonal(|x| Complex64::from_polar(1.0, -angle / 2.0 * (n as f64 - 2.0 * x.count_ones() as f64)));
            Ok(Source {
                state: s,
                noise: model,
            })
        }
    }
}

/// Outcome probabilities of `state` measured in the group's bases.
fn group_distribution(state: &StateVector, group: &MeasurementGroup, lattice: &Lattice) -> Vec<f64> {
    let mut s = state.clone();
    if group.undo_dark_edges {
        let dark: Vec<(usize, usize)> = lattice
            .edges
            .iter()
            .filter(|e| e.class == EdgeClass::Dark)
            .map(|e| (e.a, e.b))
            .collect();
        let ct_dag = Complex64::from_polar(1.0, -PI / 4.0);
        s.apply_diagonal(|x| {
            let hits = dark.iter().filter(|&&(a, b)| x >> a & 1 == 1 && x >> b & 1 == 1).count();
            ct_dag.powi(hits as i32)
        });
    }
    for (site, op) in group.bases.iter().enumerate() {
        if let LocalOp::X(phi) = *op {
            let rot = Complex64::from_polar(1.0, -phi);
            let bit = 1usize << site;
            for (x, a) in s.amplitudes_mut().iter_mut().enumerate() {
                if x & bit != 0 {
                    *a *= rot;
                }
            }
            s.apply_hadamard(site);
        }
    }
    s.amplitudes().iter().map(|a| a.norm_sqr()).collect()
}

/// Result of one simulated measurement round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub group: usize,
    /// Measured bits, bit `k` = site `k` (0 means eigenvalue +1).
    pub outcome: u64,
    /// `(-1)^{|outcome & mask|}` for each group product.
    pub values: Vec<i8>,
    pub energy: f64,
}

/// Prepare a fresh copy from `source`, measure it in group `g`'s pattern and
/// reconstruct the product values and energy sample.
pub fn measurement_round<R: Rng>(
    source: &Source,
    decomposition: &Decomposition,
    g: usize,
    lattice: &Lattice,
    rng: &mut R,
) -> Result<RoundRecord> {
    let group = decomposition
        .groups
        .get(g)
        .ok_or_else(|| Error::invalid("group", format!("{g} out of range")))?;
    if group.bases.len() != source.state.n_qubits() || lattice.n_sites() != group.bases.len() {
        return Err(Error::DimensionMismatch {
            expected: group.bases.len(),
            actual: source.state.n_qubits(),
        });
    }
    let copy = source.prepare(rng);
    let probs = group_distribution(&copy, group, lattice);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut outcome = probs.len() - 1;
    for (x, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            outcome = x;
            break;
        }
    }
    let outcome = outcome as u64;
    let values = group
        .products
        .iter()
        .map(|p| if (outcome & p.mask).count_ones() % 2 == 0 { 1 } else { -1 })
        .collect();
    Ok(RoundRecord {
        group: g,
        outcome,
        values,
        energy: group.energy(outcome),
    })
}

/// Distribution of a group's energy sample for one error pattern.
#[derive(Debug, Clone)]
struct EnergyDist {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl EnergyDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.values.len() == 1 {
            return self.values[0];
        }
        let u = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.values[i.min(self.values.len() - 1)]
    }
}

/// Fast energy sampler: energy distributions are cached per
/// `(group, error pattern)`, and errors are placed by geometric gaps so a
/// round costs O(1) random draws on average.
pub struct EnergySampler<'a> {
    source: &'a Source,
    decomposition: &'a Decomposition,
    lattice: &'a Lattice,
    cache: HashMap<(usize, u64), EnergyDist>,
}

impl<'a> EnergySampler<'a> {
    pub fn new(source: &'a Source, decomposition: &'a Decomposition, lattice: &'a Lattice) -> Result<Self> {
        if source.state.n_qubits() != lattice.n_sites() {
            return Err(Error::DimensionMismatch {
                expected: lattice.n_sites(),
                actual: source.state.n_qubits(),
            });
        }
        Ok(EnergySampler {
            source,
            decomposition,
            lattice,
            cache: HashMap::new(),
        })
    }

    fn dist(&mut self, g: usize, pattern: u64) -> &EnergyDist {
        let (source, decomposition, lattice) = (self.source, self.decomposition, self.lattice);
        self.cache.entry((g, pattern)).or_insert_with(|| {
            let group = &decomposition.groups[g];
            let probs = group_distribution(&source.with_pattern(pattern), group, lattice);
            // Energies are multiples of 1/32; key them exactly.
            let mut by_value: std::collections::BTreeMap<i64, f64> = Default::default();
            for (x, p) in probs.into_iter().enumerate() {
                if p > 0.0 {
                    let key = (group.energy(x as u64) * 1024.0).round() as i64;
                    *by_value.entry(key).or_insert(0.0) += p;
                }
            }
            let mut values = Vec::new();
            let mut cumulative = Vec::new();
            let mut acc = 0.0;
            for (k, p) in by_value {
                acc += p;
                values.push(k as f64 / 1024.0);
                cumulative.push(acc);
            }
            EnergyDist { values, cumulative }
        })
    }

    /// Mean energy of group `g` over `rounds` rounds drawn from `stream`.
    pub fn group_mean(&mut self, g: usize, rounds: u64, stream: &RandomStream) -> Result<f64> {
        if rounds == 0 {
            return Err(Error::invalid("rounds", "must be positive"));
        }
        let n = self.source.state.n_qubits() as u64;
        let q = self.source.error_rate();
        let mut rng = stream.rng();
        let geo = if q > 0.0 {
            Some(Geometric::new(q).map_err(|e| Error::invalid("p", e.to_string()))?)
        } else {
            None
        };
        // Flat index (round * n + site) of the next error.
        let mut next = geo.as_ref().map_or(u64::MAX, |g| g.sample(&mut rng));
        let mut total = 0.0;
        for r in 0..rounds {
            let end = (r + 1) * n;
            let mut pattern = 0u64;
            while next < end {
                let site = next - r * n;
                pattern |= rng.random_range(1..4u64) << (2 * site);
                next = next
                    .saturating_add(1)
                    .saturating_add(geo.as_ref().expect("errors imply a rate").sample(&mut rng));
            }
            total += self.dist(g, pattern).sample(&mut rng);
        }
        Ok(total / rounds as f64)
    }
}

/// `(E*, F*_min)` from per-group sample means: `E* = sum of means`,
/// `F*_min = 1 - E* / Delta`.
pub fn estimate_witness(group_means: &[f64], delta: f64) -> Result<(f64, f64)> {
    if group_means.is_empty() {
        return Err(Error::invalid("samples", "no group means"));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "must be positive"));
    }
    let e: f64 = group_means.iter().sum();
    Ok((e, 1.0 - e / delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub f_t: f64,
    pub eps: f64,
    pub p_err: f64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.f_t) {
            return Err(Error::invalid("F_T", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        if self.eps > (1.0 - self.f_t) / 2.0 + 1e-12 {
            return Err(Error::invalid(
                "eps",
                format!("{} exceeds (1 - F_T)/2 = {}", self.eps, (1.0 - self.f_t) / 2.0),
            ));
        }
        if !(self.p_err > 0.0 && self.p_err < 0.5) {
            return Err(Error::invalid("p_err", "must lie in (0, 1/2)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub arch: Architecture,
    pub n: usize,
    pub m_lattice: usize,
    pub seed: u64,
    pub stream: String,
    #[serde(rename = "F_T")]
    pub f_t: f64,
    pub eps: f64,
    pub p_err: f64,
    pub decomposition: DecompositionKind,
    pub kappa: usize,
    pub alpha: f64,
    pub m_samples: u64,
    #[serde(rename = "E_star")]
    pub e_star: f64,
    #[serde(rename = "F_min_star")]
    pub f_min_star: f64,
    pub verdict: Verdict,
}

/// Run the weak-membership test: `m` rounds per group with `m` from
/// [`required_samples`] over all lattice sites; accept iff
/// `F*_min >= F_T + eps`.
pub fn run_protocol(
    config: &ProtocolConfig,
    sampler: &mut EnergySampler<'_>,
    stream: &RandomStream,
) -> Result<CertificationReport> {
    config.validate()?;
    let dec = sampler.decomposition;
    let lattice = sampler.lattice;
    let m = required_samples(
        dec.kappa,
        dec.alpha,
        ParentHamiltonian::J,
        ParentHamiltonian::GAP,
        config.eps,
        config.p_err,
        lattice.n_sites(),
    )?;
    let means = (0..dec.groups.len())
        .map(|g| sampler.group_mean(g, m, &stream.substream(g as u64)))
        .collect::<Result<Vec<f64>>>()?;
    let (e_star, f_min_star) = estimate_witness(&means, ParentHamiltonian::GAP)?;
    let verdict = if f_min_star >= config.f_t + config.eps {
        Verdict::Accept
    } else {
        Verdict::Reject
    };
    Ok(CertificationReport {
        arch: lattice.arch,
        n: lattice.rows,
        m_lattice: lattice.cols,
        seed: stream.seed(),
        stream: stream.address(),
        f_t: config.f_t,
        eps: config.eps,
        p_err: config.p_err,
        decomposition: dec.kind,
        kappa: dec.kappa,
        alpha: dec.alpha,
        m_samples: m,
        e_star,
        f_min_star,
        verdict,
    })
}

/// Dense density matrix used as an exact oracle for small lattices.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    n: usize,
    /// Row-major `rho[x * dim + y]`.
    rho: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn pure(state: &StateVector) -> Result<Self> {
        let n = state.n_qubits();
        if n > 12 {
            return Err(Error::TooLarge {
                what: "density-matrix qubits",
                size: n,
                limit: 12,
            });
        }
        let a = state.amplitudes();
        let dim = a.len();
        let mut rho = vec![Complex64::new(0.0, 0.0); dim * dim];
        for x in 0..dim {
            for y in 0..dim {
                rho[x * dim + y] = a[x] * a[y].conj();
            }
        }
        Ok(DensityMatrix { n, rho })
    }

    fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|x| self.rho[x * self.dim() + x].re).sum()
    }

    /// `rho -> (1 - p) rho + p tr_k(rho) (x) I/2`.
    pub fn depolarize(&mut self, site: usize, p: f64) {
        let dim = self.dim();
        let bit = 1usize << site;
        let old = self.rho.clone();
        for x in 0..dim {
            for y in 0..dim {
                let mut v = old[x * dim + y] * (1.0 - p);
                if (x ^ y) & bit == 0 {
                    let (x0, y0) = (x & !bit, y & !bit);
                    let (x1, y1) = (x | bit, y | bit);
                    v += (old[x0 * dim + y0] + old[x1 * dim + y1]) * (p / 2.0);
                }
                self.rho[x * dim + y] = v;
            }
        }
    }

    /// `tr(P rho)` for one product.
    fn product_expectation(&self, p: &Product) -> Complex64 {
        let dim = self.dim();
        let mut total = Complex64::new(0.0, 0.0);
        for y in 0..dim {
            // P |y> = c |f(y)>, and tr(P rho) = sum_y c(y) rho[y][f(y)]
            let mut c = Complex64::new(p.coef, 0.0);
            let mut fy = y;
            for &(s, op) in &p.factors {
                let b = y >> s & 1;
                match op {
                    LocalOp::Z => {
                        if b == 1 {
                            c = -c;
                        }
                    }
                    LocalOp::X(phi) => {
                        c *= Complex64::from_polar(1.0, if b == 0 { phi } else { -phi });
                        fy ^= 1 << s;
                    }
                }
            }
            total += c * self.rho[y * dim + fy];
        }
        total
    }

    pub fn term_expectation(&self, term: &StabilizerTerm) -> f64 {
        term.products.iter().map(|p| self.product_expectation(p)).sum::<Complex64>().re
    }

    /// `tr(H rho)`.
    pub fn energy(&self, parent: &ParentHamiltonian) -> f64 {
        parent
            .terms
            .iter()
            .map(|t| (1.0 - self.term_expectation(t)) / 2.0)
            .sum()
    }

    /// `<psi| rho |psi>`.
    pub fn fidelity(&self, psi: &StateVector) -> f64 {
        let a = psi.amplitudes();
        let dim = self.dim();
        let mut f = Complex64::new(0.0, 0.0);
        for x in 0..dim {
            for y in 0..dim {
                f += a[x].conj() * self.rho[x * dim + y] * a[y];
            }
        }
        f.re
    }
}

/// Exact density matrix of one copy from `source`.
pub fn source_density(source: &Source) -> Result<DensityMatrix> {
    let mut rho = DensityMatrix::pure(&source.state)?;
    if let NoiseModel::Depolarizing { p } = source.noise {
        for site in 0..source.state.n_qubits() {
            rho.depolarize(site, p);
        }
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::IsingCouplings;
    use crate::prep::{product_state, sample_beta};
    use crate::statevec::evolve_diagonal;

    fn resource(arch: Architecture, r: usize, c: usize, seed: u64) -> (Lattice, BetaConfig, StateVector) {
        let l = Lattice::build(arch, r, c).unwrap();
        let b = sample_beta(arch, &l, &RandomStream::new(seed)).unwrap();
        let psi = evolve_diagonal(&product_state(&b, &l).unwrap(), &IsingCouplings::from_lattice(&l), &l).unwrap();
        (l, b, psi)
    }

    #[test]
    fn stabilizers_fix_state() {
        for (arch, r, c) in [
            (Architecture::I, 3, 3),
            (Architecture::II, 3, 3),
            (Architecture::III, 2, 2),
        ] {
            let (l, b, psi) = resource(arch, r, c, 1);
            let h = parent_hamiltonian(&l, &b).unwrap();
            assert_eq!(h.terms.len(), l.n_sites());
            for t in &h.terms {
                let v = t.apply(&psi);
                let dev = v
                    .amplitudes()
                    .iter()
                    .zip(psi.amplitudes())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                assert!(dev < 1e-10, "{arch} term {}", t.center);
            }
            assert!(h.energy(&psi).abs() < 1e-10);
        }
    }

    #[test]
    fn localities() {
        let (l, b, _) = resource(Architecture::I, 3, 3, 0);
        let h = parent_hamiltonian(&l, &b).unwrap();
        assert_eq!(h.terms[4].locality(), 5);
        assert_eq!(h.terms[0].locality(), 3);
        assert_eq!(h.terms[1].locality(), 4);
    }

    #[test]
    fn two_color_sizes() {
        let (l, b, _) = resource(Architecture::I, 3, 3, 0);
        let h = parent_hamiltonian(&l, &b).unwrap();
        let d = two_color_decomposition(&h, &l).unwrap();
        assert_eq!((d.parts[0].len(), d.parts[1].len()), (5, 4));
        assert!((d.alpha - 5.0 / 9.0).abs() < 1e-15);
        assert!(d.is_conflict_free(&h));
        let (l4, b4, _) = resource(Architecture::II, 4, 4, 0);
        let h4 = parent_hamiltonian(&l4, &b4).unwrap();
        assert_eq!(two_color_decomposition(&h4, &l4).unwrap().alpha, 0.5);
    }

    #[test]
    fn dangling_decompositions() {
        let (l, b, _) = resource(Architecture::III, 2, 2, 0);
        let h = parent_hamiltonian(&l, &b).unwrap();
        assert!(two_color_decomposition(&h, &l).is_err());
        let tb = two_body_decomposition(&h, &l).unwrap();
        assert_eq!((tb.kappa, tb.tau), (2, 2));
        let os = onsite_decomposition(&h, &l).unwrap();
        assert_eq!((os.kappa, os.tau, os.groups.len()), (32, 1, 32));
        assert!(os.alpha <= 5.0 / 9.0);
        assert!(os.is_conflict_free(&h));
    }

    /// Exact group-energy expectation summed over groups equals tr(H rho).
    fn decomposition_energy(source: &Source, d: &Decomposition, l: &Lattice) -> f64 {
        d.groups
            .iter()
            .map(|g| {
                let mut e = 0.0;
                for pattern_prob in [1.0] {
                    let probs = group_distribution(&source.state, g, l);
                    e += pattern_prob
                        * probs
                            .iter()
                            .enumerate()
                            .map(|(x, p)| p * g.energy(x as u64))
                            .sum::<f64>();
                }
                e
            })
            .sum()
    }

    #[test]
    fn decompositions_reproduce_energy() {
        // A coherent error gives a pure state with nonzero energy, so the
        // group sums can be checked against the direct expectation.
        for (arch, kinds) in [
            (Architecture::I, vec![DecompositionKind::TwoColor]),
            (Architecture::III, vec![DecompositionKind::TwoBody, DecompositionKind::OnSite]),
        ] {
            let (l, b, psi) = resource(arch, 2, 2, 3);
            let h = parent_hamiltonian(&l, &b).unwrap();
            let src = apply_noise(&psi, NoiseModel::ZRotation { angle: 0.4 }).unwrap();
            let exact = h.energy(&src.state);
            assert!(exact > 0.05);
            for kind in kinds {
                let d = decompose(&h, &l, kind).unwrap();
                let e = decomposition_energy(&src, &d, &l);
                assert!((e - exact).abs() < 1e-10, "{arch} {kind:?}: {e} vs {exact}");
            }
        }
    }

    #[test]
    fn perfect_rounds_are_zero() {
        let (l, b, psi) = resource(Architecture::I, 3, 3, 2);
        let h = parent_hamiltonian(&l, &b).unwrap();
        let d = two_color_decomposition(&h, &l).unwrap();
        let src = Source::perfect(psi).unwrap();
        let mut rng = RandomStream::new(1).rng();
        for g in 0..2 {
            for _ in 0..20 {
                let r = measurement_round(&src, &d, g, &l, &mut rng).unwrap();
                assert_eq!(r.energy, 0.0);
                assert!(r.values.iter().all(|&v| v == 1));
            }
        }
    }

    #[test]
    fn rounds_reproducible() {
        let (l, b, psi) = resource(Architecture::I, 2, 2, 2);
        let h = parent_hamiltonian(&l, &b).unwrap();
        let d = two_color_decomposition(&h, &l).unwrap();
        let src = apply_noise(&psi, NoiseModel::Depolarizing { p: 0.5 }).unwrap();
        let a: Vec<RoundRecord> = {
            let mut rng = RandomStream::new(4).rng();
            (0..10).map(|_| measurement_round(&src, &d, 0, &l, &mut rng).unwrap()).collect()
        };
        let mut rng = RandomStream::new(4).rng();
        let b2: Vec<RoundRecord> = (0..10).map(|_| measurement_round(&src, &d, 0, &l, &mut rng).unwrap()).collect();
        assert_eq!(a, b2);
    }

    #[test]
    fn depolarized_site_costs_half_per_term() {
        let (l, b, psi) = resource(Architecture::I, 3, 3, 5);
        let h = parent_hamiltonian(&l, &b).unwrap();
        let mut rho = DensityMatrix::pure(&psi).unwrap();
        rho.depolarize(4, 1.0);
        // Site 4 sits in its own term and the 4 neighbor terms.
        assert!((rho.energy(&h) - 2.5).abs() < 1e-10);
        assert!((rho.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_energy_matches_closed_form() {
        let (l, b, psi) = resource(Architecture::I, 3, 3, 6);
        let h = parent_hamiltonian(&l, &b).unwrap();
        let p = 0.1;
        let rho = source_density(&apply_noise(&psi, NoiseModel::Depolarizing { p }).unwrap()).unwrap();
        let closed: f64 = h
            .terms
            .iter()
            .map(|t| (1.0 - (1.0 - p).powi(t.locality() as i32)) / 2.0)
            .sum();
        assert!((rho.energy(&h) - closed).abs() < 1e-10);
        assert!(rho.fidelity(&psi) >= 1.0 - rho.energy(&h) - 1e-12);
    }

    #[test]
    fn sampler_matches_density_oracle() {
        let (l, b, psi) = resource(Architecture::I, 3, 3, 7);
        let h = parent_hamiltonian(&l, &b).unwrap();
        let d = two_color_decomposition(&h, &l).unwrap();
        let src = apply_noise(&psi, NoiseModel::Depolarizing { p: 0.1 }).unwrap();
        let exact = source_density(&src).unwrap().energy(&h);
        let mut s = EnergySampler::new(&src, &d, &l).unwrap();
        let rounds = 10_000;
        let means: Vec<f64> = (0..2)
            .map(|g| s.group_mean(g, rounds, &RandomStream::new(8).substream(g as u64)).unwrap())
            .collect();
        let (e, _) = estimate_witness(&means, 1.0).unwrap();
        // Each group energy lies in [0, 5]; 3 sigma of the sum is well under 0.15.
        assert!(e > 0.0);
        assert!((e - exact).abs() < 0.15, "{e} vs {exact}");
    }

    #[test]
    fn flipped_source_has_unit_energy() {
        let (l, b, psi) = resource(Architecture::I, 3, 3, 1);
        let h = parent_hamiltonian(&l, &b).unwrap();
        let src = Source::flipped(&psi, 4).unwrap();
        assert!((h.energy(src.state()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sample_bound_values() {
        let c = sample_bound(2, 5.0 / 9.0, 1.0, 1.0, 0.05, 0.05, 1).unwrap();
        assert!((c - 1004.6).abs() < 0.1, "{c}");
        let a = sample_bound(2, 0.5, 1.0, 1.0, 0.05, 0.05, 9).unwrap();
        let b = sample_bound(2, 0.5, 1.0, 1.0, 0.1, 0.05, 9).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
        assert!(sample_bound(2, 0.5, 1.0, 1.0, 0.0, 0.05, 9).is_err());
        assert!(sample_bound(2, 0.5, 1.0, 1.0, 0.05, 0.5, 9).is_err());
    }

    #[test]
    fn witness_arithmetic() {
        assert_eq!(estimate_witness(&[0.0, 0.0], 1.0).unwrap(), (0.0, 1.0));
        let (e, f) = estimate_witness(&[0.1, 0.2], 1.0).unwrap();
        assert!((e - 0.3).abs() < 1e-15 && (f - 0.7).abs() < 1e-15);
        assert!(estimate_witness(&[], 1.0).is_err());
    }

    #[test]
    fn config_constraint() {
        let bad = ProtocolConfig { f_t: 0.9, eps: 0.2, p_err: 0.05 };
        assert!(bad.validate().is_err());
        let ok = ProtocolConfig { f_t: 0.9, eps: 0.05, p_err: 0.05 };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn noise_validation() {
        let (_, _, psi) = resource(Architecture::I, 2, 2, 0);
        assert!(apply_noise(&psi, NoiseModel::Depolarizing { p: 1.5 }).is_err());
        let s = apply_noise(&psi, NoiseModel::Depolarizing { p: 0.0 }).unwrap();
        let mut rng = RandomStream::new(0).rng();
        assert_eq!(s.prepare(&mut rng), psi);
    }

    #[test]
    fn protocol_accepts_perfect_and_rejects_flipped() {
        let (l, b, psi) = resource(Architecture::III, 2, 2, 0);
        let h = parent_hamiltonian(&l, &b).unwrap();
        let cfg = ProtocolConfig { f_t: 0.5, eps: 0.25, p_err: 0.2 };
        for kind in [DecompositionKind::TwoBody, DecompositionKind::OnSite] {
            let d = decompose(&h, &l, kind).unwrap();
            let good = Source::perfect(psi.clone()).unwrap();
            let mut s = EnergySampler::new(&good, &d, &l).unwrap();
            let rep = run_protocol(&cfg, &mut s, &RandomStream::new(3)).unwrap();
            assert_eq!(rep.verdict, Verdict::Accept);
            // On-site products are not stabilizers, so only their weighted
            // sum vanishes; single rounds fluctuate.
            match kind {
                DecompositionKind::OnSite => assert!(rep.e_star.abs() < cfg.eps),
                _ => assert!(rep.e_star.abs() < 1e-12),
            }
            let bad = Source::flipped(&psi, 0).unwrap();
            let mut s = EnergySampler::new(&bad, &d, &l).unwrap();
            let rep = run_protocol(&cfg, &mut s, &RandomStream::new(3)).unwrap();
            assert_eq!(rep.verdict, Verdict::Reject);
        }
    }

    #[test]
    fn report_json_fields() {
        let (l, b, psi) = resource(Architecture::I, 2, 2, 0);
        let h = parent_hamiltonian(&l, &b).unwrap();
        let d = two_color_decomposition(&h, &l).unwrap();
        let src = Source::perfect(psi).unwrap();
        let mut s = EnergySampler::new(&src, &d, &l).unwrap();
        let cfg = ProtocolConfig { f_t: 0.9, eps: 0.05, p_err: 0.05 };
        let rep = run_protocol(&cfg, &mut s, &RandomStream::new(1)).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        for key in ["\"F_T\"", "\"E_star\"", "\"F_min_star\"", "\"m_samples\"", "\"verdict\":\"accept\""] {
            assert!(json.contains(key), "{json}");
        }
    }
}
