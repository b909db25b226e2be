//! Lattice geometry and quench couplings.
//!
//! Primitive sites form an open `rows x cols` square grid indexed row-major
//! (`r * cols + c`). Architecture III attaches one dangling-bond site to every
//! primitive site; the dangling partner of primitive site `k` has index
//! `rows * cols + k`. Bit `k` of a computational basis index is site `k`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coupling on bright (primitive-primitive) edges; realizes CZ.
pub const BRIGHT_COUPLING: f64 = PI / 4.0;
/// Coupling on dark (primitive-dangling) edges; realizes controlled-T.
pub const DARK_COUPLING: f64 = PI / 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    /// Disordered preparation, angles in {0, pi/4}.
    I,
    /// Column-constant preparation, angles in {0, pi/8}.
    II,
    /// Uniform preparation on the dangling-bond lattice.
    III,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::I, Architecture::II, Architecture::III];

    /// Qubits per primitive cell.
    pub fn cell_size(self) -> usize {
        match self {
            Architecture::III => 2,
            _ => 1,
        }
    }

    pub fn has_dangling_bonds(self) -> bool {
        self == Architecture::III
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Architecture::I => "I",
            Architecture::II => "II",
            Architecture::III => "III",
        };
        f.write_str(s)
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "1" | "i" => Ok(Architecture::I),
            "II" | "2" | "ii" => Ok(Architecture::II),
            "III" | "3" | "iii" => Ok(Architecture::III),
            other => Err(Error::invalid("arch", format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteKind {
    Primitive,
    Dangling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Site {
    pub index: usize,
    pub kind: SiteKind,
    /// Grid row of the site (of its host, for dangling sites).
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeClass {
    Bright,
    Dark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub class: EdgeClass,
}

impl Edge {
    pub fn other(&self, site: usize) -> Option<usize> {
        if site == self.a {
            Some(self.b)
        } else if site == self.b {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lattice {
    pub arch: Architecture,
    pub rows: usize,
    pub cols: usize,
    pub sites: Vec<Site>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, EdgeClass)>>,
}

/// Serialized form; deserialization rebuilds and cross-checks the geometry.
#[derive(Deserialize)]
struct LatticeDoc {
    arch: Architecture,
    rows: usize,
    cols: usize,
    sites: Vec<Site>,
    edges: Vec<Edge>,
}

impl<'de> Deserialize<'de> for Lattice {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let doc = LatticeDoc::deserialize(de)?;
        let lattice =
            Lattice::build(doc.arch, doc.rows, doc.cols).map_err(serde::de::Error::custom)?;
        if lattice.sites != doc.sites || lattice.edges != doc.edges {
            return Err(serde::de::Error::custom(
                "site or edge list does not match the declared geometry",
            ));
        }
        Ok(lattice)
    }
}

impl Lattice {
    /// Build the lattice of `arch` with `rows x cols` primitive sites.
    pub fn build(arch: Architecture, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 {
            return Err(Error::invalid("rows", "must be at least 1"));
        }
        if cols == 0 {
            return Err(Error::invalid("cols", "must be at least 1"));
        }
        let n_prim = rows * cols;
        let mut sites = Vec::with_capacity(n_prim * arch.cell_size());
        for r in 0..rows {
            for c in 0..cols {
                sites.push(Site {
                    index: r * cols + c,
                    kind: SiteKind::Primitive,
                    row: r,
                    col: c,
                });
            }
        }
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let k = r * cols + c;
                if c + 1 < cols {
                    edges.push(Edge { a: k, b: k + 1, class: EdgeClass::Bright });
                }
                if r + 1 < rows {
                    edges.push(Edge { a: k, b: k + cols, class: EdgeClass::Bright });
                }
            }
        }
        if arch.has_dangling_bonds() {
            for k in 0..n_prim {
                let host = sites[k];
                sites.push(Site {
                    index: n_prim + k,
                    kind: SiteKind::Dangling,
                    row: host.row,
                    col: host.col,
                });
                edges.push(Edge { a: k, b: n_prim + k, class: EdgeClass::Dark });
            }
        }
        let mut adjacency = vec![Vec::new(); sites.len()];
        for e in &edges {
            adjacency[e.a].push((e.b, e.class));
            adjacency[e.b].push((e.a, e.class));
        }
        Ok(Lattice {
            arch,
            rows,
            cols,
            sites,
            edges,
            adjacency,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_primitive(&self) -> usize {
        self.rows * self.cols
    }

    pub fn n_dangling(&self) -> usize {
        self.n_sites() - self.n_primitive()
    }

    pub fn primitive_index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    pub fn is_primitive(&self, site: usize) -> bool {
        site < self.n_primitive()
    }

    /// Dangling partner of a primitive site (architecture III only).
    pub fn dangling_of(&self, primitive: usize) -> Option<usize> {
        (self.arch.has_dangling_bonds() && primitive < self.n_primitive())
            .then(|| self.n_primitive() + primitive)
    }

    /// Primitive host of a dangling site.
    pub fn host_of(&self, dangling: usize) -> Option<usize> {
        (dangling >= self.n_primitive() && dangling < self.n_sites())
            .then(|| dangling - self.n_primitive())
    }

    pub fn neighbors(&self, site: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[site].iter().map(|&(j, _)| j)
    }

    pub fn bright_neighbors(&self, site: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[site]
            .iter()
            .filter(|(_, c)| *c == EdgeClass::Bright)
            .map(|&(j, _)| j)
    }

    /// Number of bright edges at `site`.
    pub fn primitive_degree(&self, site: usize) -> usize {
        self.adjacency[site].iter().filter(|(_, c)| *c == EdgeClass::Bright).count()
    }

    /// Number of dark edges at `site`.
    pub fn dangling_degree(&self, site: usize) -> usize {
        self.adjacency[site].iter().filter(|(_, c)| *c == EdgeClass::Dark).count()
    }

    pub fn count_edges(&self, class: EdgeClass) -> usize {
        self.edges.iter().filter(|e| e.class == class).count()
    }

    /// Primitive sites of the right-most column, ordered by row. Their outcomes
    /// form the logical output `x`.
    pub fn output_sites(&self) -> Vec<usize> {
        (0..self.rows).map(|r| self.primitive_index(r, self.cols - 1)).collect()
    }

    /// All remaining sites in ascending index order. Their outcomes form `y`.
    pub fn non_output_sites(&self) -> Vec<usize> {
        (0..self.n_sites())
            .filter(|&s| !(self.is_primitive(s) && self.sites[s].col == self.cols - 1))
            .collect()
    }

    /// Checkerboard color of a primitive site (`(row + col) % 2`).
    pub fn color(&self, site: usize) -> usize {
        let s = self.sites[site];
        (s.row + s.col) % 2
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Per-edge couplings and per-site fields of the quench Hamiltonian
/// `H = sum_e J_e Z_a Z_b - sum_i h_i Z_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingCouplings {
    /// Aligned with `Lattice::edges`.
    pub coupling: Vec<f64>,
    pub field: Vec<f64>,
}

impl IsingCouplings {
    /// `J = pi/4` on bright and `pi/16` on dark edges; each site's field is the
    /// sum of its incident couplings, so `h_i = (pi/4) deg_P(i) + (pi/16) deg_DB(i)`.
    pub fn from_lattice(lattice: &Lattice) -> Self {
        let coupling: Vec<f64> = lattice
            .edges
            .iter()
            .map(|e| match e.class {
                EdgeClass::Bright => BRIGHT_COUPLING,
                EdgeClass::Dark => DARK_COUPLING,
            })
            .collect();
        let field = (0..lattice.n_sites())
            .map(|i| {
                BRIGHT_COUPLING * lattice.primitive_degree(i) as f64
                    + DARK_COUPLING * lattice.dangling_degree(i) as f64
            })
            .collect();
        IsingCouplings { coupling, field }
    }

    /// Classical energy of basis state `index` (bit 0 is spin +1).
    pub fn energy(&self, lattice: &Lattice, index: usize) -> f64 {
        let spin = |k: usize| if index >> k & 1 == 0 { 1.0 } else { -1.0 };
        let mut e = 0.0;
        for (edge, j) in lattice.edges.iter().zip(&self.coupling) {
            e += j * spin(edge.a) * spin(edge.b);
        }
        for (k, h) in self.field.iter().enumerate() {
            e -= h * spin(k);
        }
        e
    }

    /// Diagonal of `exp(i H_e)` on the two sites of edge `e`, in the order
    /// |00>, |01>, |10>, |11> (first bit = `edge.a`). `H_e` is the coupling term
    /// plus the share `J_e` of both endpoint fields.
    pub fn edge_unitary(&self, lattice: &Lattice, e: usize) -> [Complex64; 4] {
        let _ = lattice.edges[e];
        let j = self.coupling[e];
        let mut out = [Complex64::new(0.0, 0.0); 4];
        for (idx, slot) in out.iter_mut().enumerate() {
            let sa = if idx >> 1 & 1 == 0 { 1.0 } else { -1.0 };
            let sb = if idx & 1 == 0 { 1.0 } else { -1.0 };
            let energy = j * sa * sb - j * (sa + sb);
            *slot = Complex64::from_polar(1.0, energy);
        }
        out
    }
}

pub fn ising_couplings(lattice: &Lattice) -> IsingCouplings {
    IsingCouplings::from_lattice(lattice)
}
