//! Exact causal-cone statevector simulation of the translation-invariant
//! circuits on the infinite lattice.
//!
//! A depth-N circuit of one-site X rotations and nearest-neighbor ZZ gates
//! can only correlate sites within Manhattan distance N of an observable's
//! support. Backward light-cone extraction collects exactly the gates that
//! do not cancel in the Heisenberg picture, and a dense statevector on the
//! cone then gives expectation values with no tensor-network approximation.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::sequences::GateSequence;
use crate::tensor::{C64, Tensor};
use crate::{Error, Result};

pub type Site = (i64, i64);

const NEIGHBOR_STEPS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Default cap on cone qubits (amplitude vector of 2^26 is about 1 GiB).
pub const DEFAULT_QUBIT_CAP: usize = 26;

/// Gates of one circuit layer, restricted to the cone and indexed by cone
/// site number.
#[derive(Clone, Debug)]
struct ConeLayer {
    zz_bonds: Vec<(usize, usize)>,
    x_sites: Vec<usize>,
}

/// Finite gate set around an observable's support.
#[derive(Clone, Debug)]
pub struct ConeCircuit {
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
    layers: Vec<ConeLayer>,
    depth: usize,
}

impl ConeCircuit {
    pub fn qubit_count(&self) -> usize {
        self.sites.len()
    }

    pub fn site_index(&self, site: Site) -> Option<usize> {
        self.index.get(&site).copied()
    }
}

/// Backward light-cone extraction for a depth-N sequence and an observable
/// support. `extra_growth` enlarges the cone by whole layer-growth steps and
/// is used for radius-stability checks.
pub fn extract_cone(
    depth: usize,
    support: &[Site],
    qubit_cap: usize,
    extra_growth: usize,
) -> Result<ConeCircuit> {
    if support.is_empty() {
        return Err(Error::Shape("empty observable support".into()));
    }
    // BTreeSet keeps the site enumeration deterministic.
    let mut current: BTreeSet<Site> = support.iter().copied().collect();
    // Walk layers backward (layer N acts last); each layer records the X
    // gates on the current support, then grows the support by the ZZ gates
    // touching it.
    let mut raw_layers: Vec<(Vec<Site>, Vec<(Site, Site)>)> = Vec::new();
    for _ in 0..depth {
        let x_sites: Vec<Site> = current.iter().copied().collect();
        let mut bonds: Vec<(Site, Site)> = Vec::new();
        let snapshot: Vec<Site> = current.iter().copied().collect();
        for &s in &snapshot {
            for &(dx, dy) in &NEIGHBOR_STEPS {
                let n = (s.0 + dx, s.1 + dy);
                // Each lattice bond once: orient from the lexicographically
                // smaller endpoint.
                let bond = if s < n { (s, n) } else { (n, s) };
                if !bonds.contains(&bond) {
                    bonds.push(bond);
                }
                current.insert(n);
            }
        }
        raw_layers.push((x_sites, bonds));
    }
    for _ in 0..extra_growth {
        let snapshot: Vec<Site> = current.iter().copied().collect();
        for &s in &snapshot {
            for &(dx, dy) in &NEIGHBOR_STEPS {
                current.insert((s.0 + dx, s.1 + dy));
            }
        }
    }
    if current.len() > qubit_cap {
        return Err(Error::ConeTooLarge {
            sites: current.len(),
            cap: qubit_cap,
            depth,
        });
    }
    let sites: Vec<Site> = current.iter().copied().collect();
    let index: HashMap<Site, usize> = sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    // raw_layers[0] is layer N; flip to forward order.
    let layers: Vec<ConeLayer> = raw_layers
        .iter()
        .rev()
        .map(|(x_sites, bonds)| ConeLayer {
            zz_bonds: bonds
                .iter()
                .map(|&(a, b)| (index[&a], index[&b]))
                .collect(),
            x_sites: x_sites.iter().map(|s| index[s]).collect(),
        })
        .collect();
    Ok(ConeCircuit {
        sites,
        index,
        layers,
        depth,
    })
}

/// Dense statevector on the cone, evolved from |+>^n by the sequence.
pub struct ConeState {
    amps: Vec<C64>,
    n: usize,
}

impl ConeState {
    fn plus_state(n: usize) -> ConeState {
        let dim = 1usize << n;
        let amp = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
        ConeState {
            amps: vec![amp; dim],
            n,
        }
    }

    fn apply_zz(&mut self, i: usize, j: usize, beta: f64) {
        // exp(i beta Z_i Z_j): diagonal phase by the parity of bits i, j.
        let same = C64::new(beta.cos(), beta.sin());
        let diff = same.conj();
        let (mi, mj) = (1usize << i, 1usize << j);
        for (idx, a) in self.amps.iter_mut().enumerate() {
            if ((idx & mi) == 0) == ((idx & mj) == 0) {
                *a *= same;
            } else {
                *a *= diff;
            }
        }
    }

    fn apply_x_rotation(&mut self, i: usize, theta: f64) {
        // exp(i theta X_i)
        let c = C64::new(theta.cos(), 0.0);
        let is = C64::new(0.0, theta.sin());
        let m = 1usize << i;
        for idx in 0..self.amps.len() {
            if idx & m == 0 {
                let a0 = self.amps[idx];
                let a1 = self.amps[idx | m];
                self.amps[idx] = c * a0 + is * a1;
                self.amps[idx | m] = is * a0 + c * a1;
            }
        }
    }

    pub fn qubit_count(&self) -> usize {
        self.n
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// <psi| prod_k O_k |psi> for one-site operators O_k on distinct qubits.
    pub fn expectation(&self, ops: &[(usize, &Tensor)]) -> C64 {
        let mut work = self.amps.clone();
        for &(q, op) in ops {
            let m = 1usize << q;
            let (o00, o01) = (op.get(&[0, 0]), op.get(&[0, 1]));
            let (o10, o11) = (op.get(&[1, 0]), op.get(&[1, 1]));
            for idx in 0..work.len() {
                if idx & m == 0 {
                    let a0 = work[idx];
                    let a1 = work[idx | m];
                    work[idx] = o00 * a0 + o01 * a1;
                    work[idx | m] = o10 * a0 + o11 * a1;
                }
            }
        }
        self.amps
            .iter()
            .zip(work.iter())
            .map(|(a, w)| a.conj() * w)
            .sum()
    }
}

/// Evolve |+>^cone by the cone-restricted gates of the sequence.
pub fn evolve_cone(cone: &ConeCircuit, seq: &GateSequence) -> Result<ConeState> {
    if cone.depth != seq.depth() {
        return Err(Error::Sequence(format!(
            "cone depth {} != sequence depth {}",
            cone.depth,
            seq.depth()
        )));
    }
    let g = seq.gate_field();
    let mut state = ConeState::plus_state(cone.qubit_count());
    for (j, layer) in cone.layers.iter().enumerate() {
        let beta = seq.beta[j];
        for &(a, b) in &layer.zz_bonds {
            state.apply_zz(a, b, beta);
        }
        let theta = seq.effective_alpha(j) * g;
        if theta != 0.0 {
            for &q in &layer.x_sites {
                state.apply_x_rotation(q, theta);
            }
        }
    }
    Ok(state)
}

/// Exact expectation of a product of one-site operators at the given lattice
/// sites, for the infinite-lattice circuit described by `seq`.
pub fn exact_expectation(
    seq: &GateSequence,
    ops: &[(Site, Tensor)],
    qubit_cap: usize,
) -> Result<C64> {
    let support: Vec<Site> = ops.iter().map(|(s, _)| *s).collect();
    let cone = extract_cone(seq.depth(), &support, qubit_cap, 0)?;
    let state = evolve_cone(&cone, seq)?;
    let indexed: Vec<(usize, &Tensor)> = ops
        .iter()
        .map(|(s, op)| (cone.site_index(*s).expect("support in cone"), op))
        .collect();
    Ok(state.expectation(&indexed))
}

pub fn pauli_x() -> Tensor {
    Tensor::mat2([
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
    ])
}

pub fn pauli_z() -> Tensor {
    Tensor::mat2([
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
    ])
}

/// Oracle values for the standard probe set: <X>, <Z>, <Z0 Z1> on a
/// horizontal bond, and the distance-2 ZZ correlator along a row.
#[derive(Clone, Debug, Serialize)]
pub struct OracleProbe {
    pub x: f64,
    pub z: f64,
    pub zz_bond: f64,
    pub zz_dist2: f64,
}

pub fn probe(seq: &GateSequence, qubit_cap: usize) -> Result<OracleProbe> {
    let x = exact_expectation(seq, &[((0, 0), pauli_x())], qubit_cap)?;
    let z = exact_expectation(seq, &[((0, 0), pauli_z())], qubit_cap)?;
    let zz = exact_expectation(
        seq,
        &[((0, 0), pauli_z()), ((1, 0), pauli_z())],
        qubit_cap,
    )?;
    let zz2 = exact_expectation(
        seq,
        &[((0, 0), pauli_z()), ((2, 0), pauli_z())],
        qubit_cap,
    )?;
    Ok(OracleProbe {
        x: x.re,
        z: z.re,
        zz_bond: zz.re,
        zz_dist2: zz2.re,
    })
}

/// Energy per bond assembled from oracle one- and two-site values:
/// E = -<Z0 Z1> - (g/2) <X>.
pub fn energy_per_bond(seq: &GateSequence, qubit_cap: usize) -> Result<f64> {
    let p = probe(seq, qubit_cap)?;
    Ok(-p.zz_bond - 0.5 * seq.target_field() * p.x)
}
