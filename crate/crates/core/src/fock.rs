//! Truncated Fock space of `N` indistinguishable photons in `M` ports.
//!
//! States are stored in colexicographic order: occupation vectors are compared
//! starting from the last port. Every occupation with empty trailing ports sorts
//! before any occupation that populates them, so the basis of the first `m`
//! ports is exactly the first `C(m-1+N, N)` entries of the `M`-port basis.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{QstError, Result};

/// Photon counts per port.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Occupation(Vec<u32>);

impl Occupation {
    pub fn new(counts: Vec<u32>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn ports(&self) -> usize {
        self.0.len()
    }

    pub fn photons(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    /// True when no port holds more than one photon.
    pub fn is_collision_free(&self) -> bool {
        self.0.iter().all(|&c| c <= 1)
    }

    /// Port labels repeated by multiplicity, e.g. `(2, 0, 1)` gives `[0, 0, 2]`.
    pub fn mode_list(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(port, &c)| std::iter::repeat_n(port, c as usize))
            .collect()
    }

    /// Product of factorials of the counts.
    pub fn factorial_product(&self) -> f64 {
        self.0
            .iter()
            .map(|&c| (1..=c).map(f64::from).product::<f64>())
            .product()
    }

    fn colex_cmp(&self, other: &Self) -> Ordering {
        self.0.iter().rev().cmp(other.0.iter().rev())
    }
}

/// Binomial coefficient `C(n, k)`; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Dimension of the `N`-photon space over `M` ports, `C(M-1+N, N)`.
pub fn fock_dimension(photons: usize, ports: usize) -> usize {
    if ports == 0 {
        return 0;
    }
    binomial(ports - 1 + photons, photons)
}

#[derive(Debug, Clone)]
pub struct FockBasis {
    photons: usize,
    ports: usize,
    states: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
}

impl FockBasis {
    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Occupation] {
        &self.states
    }

    pub fn state(&self, position: usize) -> &Occupation {
        &self.states[position]
    }
}

/// All occupations of `photons` photons over `ports` ports, in canonical order.
pub fn enumerate_basis(photons: usize, ports: usize) -> Result<FockBasis> {
    if photons == 0 || ports == 0 {
        return Err(QstError::DegenerateSpace { photons, ports });
    }
    let mut states = Vec::with_capacity(fock_dimension(photons, ports));
    let mut counts = vec![0u32; ports];
    compositions(&mut counts, 0, photons as u32, &mut states);
    states.sort_by(Occupation::colex_cmp);
    let index = states
        .iter()
        .enumerate()
        .map(|(k, s)| (s.clone(), k))
        .collect();
    Ok(FockBasis {
        photons,
        ports,
        states,
        index,
    })
}

fn compositions(counts: &mut [u32], port: usize, remaining: u32, out: &mut Vec<Occupation>) {
    if port + 1 == counts.len() {
        counts[port] = remaining;
        out.push(Occupation(counts.to_vec()));
        return;
    }
    for c in 0..=remaining {
        counts[port] = c;
        compositions(counts, port + 1, remaining - c, out);
    }
    counts[port] = 0;
}

pub fn index_of(basis: &FockBasis, occ: &Occupation) -> Result<usize> {
    basis
        .index
        .get(occ)
        .copied()
        .ok_or_else(|| QstError::OccupationNotFound(occ.0.clone()))
}

/// Positions of the collision-free occupations (every port holds 0 or 1 photons).
/// Empty when there are more photons than ports.
pub fn click_subset(basis: &FockBasis) -> Vec<usize> {
    basis
        .states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_collision_free())
        .map(|(k, _)| k)
        .collect()
}

/// Positions of occupations with no photons beyond the first `m` ports.
pub fn original_subspace_indices(basis: &FockBasis, m: usize) -> Result<Vec<usize>> {
    if m > basis.ports {
        return Err(QstError::InvalidArgument(format!(
            "original port count {m} exceeds total ports {}",
            basis.ports
        )));
    }
    Ok(basis
        .states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.0[m..].iter().all(|&c| c == 0))
        .map(|(k, _)| k)
        .collect())
}
