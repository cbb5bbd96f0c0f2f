//! The single observable and its outcome statistics.
//!
//! Three routes compute the same outcome probabilities and are cross-checked in
//! tests: evolving the embedded state through the lifted unitary, the POVM on the
//! original space, and the measurement matrix acting on the vectorized state.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::ensembles::{self, rng_from_seed};
use crate::error::{QstError, Result};
use crate::fock::{self, FockBasis, Occupation};
use crate::linalg::{self, CMatrix, CVector};
use crate::optical::{self, LiftedUnitary, PortUnitary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorMode {
    /// Number-resolving detectors: all `D` outcomes.
    Full,
    /// Click detectors: only collision-free outcomes.
    Click,
}

/// How a coupler was produced, so a record can be recovered in a separate process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplerSource {
    Haar { seed: u64 },
    Evanescent { theta: f64 },
    /// Independent Haar couplers on the original and the ancilla ports.
    BlockHaar { seed: u64 },
    Identity,
}

impl CouplerSource {
    pub fn build(&self, ports: usize, original_ports: usize) -> Result<PortUnitary> {
        match *self {
            CouplerSource::Haar { seed } => Ok(ensembles::sample_haar_unitary(ports, seed)),
            CouplerSource::Evanescent { theta } => ensembles::evanescent_coupler(ports, theta),
            CouplerSource::BlockHaar { seed } => {
                if original_ports == 0 || original_ports >= ports {
                    return Err(QstError::InvalidArgument(
                        "block coupler needs at least one original and one ancilla port".into(),
                    ));
                }
                let mut rng = rng_from_seed(seed);
                let a = ensembles::haar_unitary(&mut rng, original_ports);
                let b = ensembles::haar_unitary(&mut rng, ports - original_ports);
                Ok(a.direct_sum(&b))
            }
            CouplerSource::Identity => Ok(PortUnitary::identity(ports)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub values: Vec<f64>,
    pub mode: DetectorMode,
    pub photons: usize,
    pub original_ports: usize,
    pub ports: usize,
    /// `None` when noiseless.
    pub snr_db: Option<f64>,
    /// Expected total noise power `E||n||^2` on the retained entries.
    pub noise_power: Option<f64>,
    pub noise_seed: Option<u64>,
    pub coupler: Option<CouplerSource>,
}

impl MeasurementRecord {
    pub fn ancilla_ports(&self) -> usize {
        self.ports - self.original_ports
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_coupler(mut self, source: CouplerSource) -> Self {
        self.coupler = Some(source);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One spectral projector of the observable: outcome label and `U^dag |n>`.
#[derive(Debug, Clone)]
pub struct SpectralProjector {
    pub outcome: usize,
    pub occupation: Occupation,
    pub vector: CVector,
}

/// The projectors `U^dag |n^i><n^i| U` of the single observable, one per Fock state.
pub fn observable_spectrum(lifted: &LiftedUnitary) -> Vec<SpectralProjector> {
    let u = lifted.matrix();
    lifted
        .basis()
        .states()
        .iter()
        .enumerate()
        .map(|(i, occ)| SpectralProjector {
            outcome: i,
            occupation: occ.clone(),
            vector: u.row(i).adjoint(),
        })
        .collect()
}

/// `sum_i (i + 1) P_i`, labelling outcomes by their 1-based basis position.
pub fn reconstruct_observable(spectrum: &[SpectralProjector]) -> CMatrix {
    let d = spectrum.first().map_or(0, |p| p.vector.len());
    spectrum.iter().fold(CMatrix::zeros(d, d), |acc, p| {
        acc + linalg::outer(&p.vector).scale((p.outcome + 1) as f64)
    })
}

fn original_basis_check(rho0: &DensityMatrix, photons: usize, m: usize) -> Result<()> {
    let d = fock::fock_dimension(photons, m);
    if rho0.dim() != d {
        return Err(QstError::DimensionMismatch {
            expected: d,
            actual: rho0.dim(),
        });
    }
    Ok(())
}

fn check_ports(m: usize, ports: usize) -> Result<()> {
    if m == 0 || m > ports {
        return Err(QstError::InvalidArgument(format!(
            "original ports {m} must lie in 1..={ports}"
        )));
    }
    Ok(())
}

/// Outcome probabilities by explicit Fock-space evolution of `rho_0 (x) |0><0|`.
pub fn simulate_measurements(
    rho0: &DensityMatrix,
    u: &PortUnitary,
    m: usize,
    photons: usize,
) -> Result<MeasurementRecord> {
    check_ports(m, u.dim())?;
    original_basis_check(rho0, photons, m)?;
    let lifted = optical::lift_unitary(u, photons)?;
    let embedded = optical::embed_with_ancilla(rho0, lifted.basis(), m)?;
    let out = optical::evolve_density(&embedded, &lifted)?;
    let values = out.matrix().diagonal().iter().map(|z| z.re).collect();
    Ok(MeasurementRecord {
        values,
        mode: DetectorMode::Full,
        photons,
        original_ports: m,
        ports: u.dim(),
        snr_db: None,
        noise_power: None,
        noise_seed: None,
        coupler: None,
    })
}

/// Additive white Gaussian noise with total-power SNR
/// `10 log10(||y||^2 / E||n||^2) = snr_db`; negative results are clamped to zero.
/// An infinite SNR leaves the record untouched.
pub fn add_noise(record: &MeasurementRecord, snr_db: f64, seed: u64) -> Result<MeasurementRecord> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(QstError::InvalidArgument(format!("invalid SNR {snr_db}")));
    }
    if snr_db == f64::INFINITY {
        return Ok(record.clone());
    }
    let mut rng = rng_from_seed(seed);
    let (noise, power) = noise_vector(&mut rng, &record.values, snr_db);
    let mut out = record.clone();
    for (v, n) in out.values.iter_mut().zip(noise) {
        *v = (*v + n).max(0.0);
    }
    out.snr_db = Some(snr_db);
    out.noise_power = Some(power);
    out.noise_seed = Some(seed);
    Ok(out)
}

/// Per-entry i.i.d. noise draws and the expected total power they carry.
pub(crate) fn noise_vector<R: Rng + ?Sized>(rng: &mut R, y: &[f64], snr_db: f64) -> (Vec<f64>, f64) {
    let signal: f64 = y.iter().map(|v| v * v).sum();
    let power = signal / 10f64.powf(snr_db / 10.0);
    if y.is_empty() || power == 0.0 {
        return (vec![0.0; y.len()], 0.0);
    }
    let sigma = (power / y.len() as f64).sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    ((0..y.len()).map(|_| normal.sample(rng)).collect(), power)
}

/// Keep only collision-free outcomes, in `click_subset` order.
pub fn restrict_to_clicks(record: &MeasurementRecord, basis: &FockBasis) -> Result<MeasurementRecord> {
    if record.mode == DetectorMode::Click {
        return Err(QstError::AlreadyRestricted);
    }
    if basis.dim() != record.values.len() {
        return Err(QstError::DimensionMismatch {
            expected: basis.dim(),
            actual: record.values.len(),
        });
    }
    let keep = fock::click_subset(basis);
    let mut out = record.clone();
    out.values = keep.iter().map(|&i| record.values[i]).collect();
    out.mode = DetectorMode::Click;
    out.noise_power = record
        .noise_power
        .map(|p| p * keep.len() as f64 / basis.dim() as f64);
    Ok(out)
}

/// Rank-one POVM on the original space induced by the ancilla and the projective
/// measurement on the full space.
#[derive(Debug, Clone)]
pub struct PovmSet {
    elements: Vec<CMatrix>,
}

impl PovmSet {
    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `||sum_i E_i - I||_F`.
    pub fn resolution_error(&self) -> f64 {
        let d = self.elements.first().map_or(0, |e| e.nrows());
        let sum = self.elements.iter().fold(CMatrix::zeros(d, d), |a, e| a + e);
        (sum - CMatrix::identity(d, d)).norm()
    }

    /// `Tr(E_i rho)` for every element.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| linalg::trace(&(e * rho.matrix())).re)
            .collect()
    }
}

/// `E_i = a_i a_i^dag` with `(a_i)_j = conj(U_{i j})`, `j` ranging over the
/// occupations with empty ancilla ports. This ordering of the conjugation makes
/// `Tr(E_i rho_0)` equal the probability of outcome `i`.
pub fn povm_elements(u: &PortUnitary, m: usize, photons: usize) -> Result<PovmSet> {
    check_ports(m, u.dim())?;
    let basis = fock::enumerate_basis(photons, u.dim())?;
    let orig = fock::original_subspace_indices(&basis, m)?;
    let q = optical::lifted_columns(u, &basis, &orig);
    let elements = (0..q.nrows())
        .map(|i| {
            let a: CVector = q.row(i).adjoint();
            linalg::outer(&a)
        })
        .collect();
    Ok(PovmSet { elements })
}

/// The linear map `rho_0 -> y`.
///
/// Stored compactly as the `rows x d` block `Q` of the lifted unitary (measured
/// outcomes by original-space inputs): `y_k = (Q rho_0 Q^dag)_kk`. The dense
/// `rows x d^2` form is available from [`MeasurementMatrix::dense`].
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    block: CMatrix,
    mode: DetectorMode,
    photons: usize,
    original_ports: usize,
    ports: usize,
    /// Position of each row in the `M`-port Fock basis.
    outcome_indices: Vec<usize>,
}

impl MeasurementMatrix {
    /// Measurement matrix from an explicit `rows x d` outcome block, for designs
    /// that do not come from a coupler.
    pub fn from_block(block: CMatrix, mode: DetectorMode, photons: usize, original_ports: usize, ports: usize) -> Self {
        let outcome_indices = (0..block.nrows()).collect();
        Self {
            block,
            mode,
            photons,
            original_ports,
            ports,
            outcome_indices,
        }
    }

    pub fn rows(&self) -> usize {
        self.block.nrows()
    }

    /// Original-space dimension `d`.
    pub fn dim(&self) -> usize {
        self.block.ncols()
    }

    pub fn mode(&self) -> DetectorMode {
        self.mode
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn original_ports(&self) -> usize {
        self.original_ports
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn outcome_indices(&self) -> &[usize] {
        &self.outcome_indices
    }

    pub fn block(&self) -> &CMatrix {
        &self.block
    }

    /// Rows measured over the `d^2` entries needed for full tomography.
    pub fn measurement_fraction(&self) -> f64 {
        self.rows() as f64 / (self.dim() * self.dim()) as f64
    }

    /// `A vec(X)` for any square `X` of size `d` (real part; exact for Hermitian `X`).
    pub fn apply(&self, x: &CMatrix) -> Vec<f64> {
        let qx = &self.block * x;
        (0..self.rows())
            .map(|k| {
                qx.row(k)
                    .iter()
                    .zip(self.block.row(k).iter())
                    .map(|(a, b)| (a * b.conj()).re)
                    .sum()
            })
            .collect()
    }

    /// Adjoint map `r -> sum_k r_k E_k = Q^dag diag(r) Q`.
    pub fn adjoint(&self, r: &[f64]) -> CMatrix {
        let mut scaled = self.block.clone();
        for (k, &rk) in r.iter().enumerate() {
            scaled.row_mut(k).scale_mut(rk);
        }
        self.block.adjoint() * scaled
    }

    /// Dense `rows x d^2` matrix acting on the column-stacked state: entry
    /// `(k, i + j d)` is `B^k_ij = Q_ki conj(Q_kj)`.
    pub fn dense(&self) -> CMatrix {
        let d = self.dim();
        let q = &self.block;
        CMatrix::from_fn(self.rows(), d * d, |k, idx| {
            let (i, j) = (idx % d, idx / d);
            q[(k, i)] * q[(k, j)].conj()
        })
    }

    /// Column-stacked vectorization matching [`MeasurementMatrix::dense`].
    pub fn vectorize(x: &CMatrix) -> CVector {
        CVector::from_iterator(x.len(), x.iter().copied())
    }

    /// Real `rows x d^2` representation over an orthonormal basis of Hermitian
    /// matrices. Its rank equals the complex rank of [`MeasurementMatrix::dense`].
    pub fn real_form(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(self.rows(), d * d);
        for k in 0..self.rows() {
            let a: CVector = self.block.row(k).adjoint();
            let coords = linalg::hermitian_coordinates(&linalg::outer(&a));
            for (c, v) in coords.into_iter().enumerate() {
                out[(k, c)] = v;
            }
        }
        out
    }

    /// Singular values above `rel_tol` times the largest.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        linalg::numerical_rank_real(&self.real_form(), rel_tol)
    }

    /// Power-iteration estimate of `||A||_op^2`, the largest eigenvalue of `A^* A`.
    pub fn operator_norm_sq(&self, iterations: usize) -> f64 {
        let d = self.dim();
        // deterministic, generic start: a fixed full-rank Hermitian matrix
        let mut x = CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::new(1.0 + i as f64 / d as f64, 0.0)
            } else {
                Complex64::new(0.1 / (1 + i + j) as f64, 0.05 * (i as f64 - j as f64) / d as f64)
            }
        });
        x = linalg::hermitian_part(&x);
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let norm = x.norm();
            if norm == 0.0 {
                return 0.0;
            }
            x.unscale_mut(norm);
            let y = self.adjoint(&self.apply(&x));
            estimate = linalg::real_inner(&x, &y);
            x = y;
        }
        estimate
    }
}

/// Measurement matrix for coupler `u`, `m` original ports and `photons` photons.
pub fn build_measurement_matrix(
    u: &PortUnitary,
    m: usize,
    photons: usize,
    mode: DetectorMode,
) -> Result<MeasurementMatrix> {
    check_ports(m, u.dim())?;
    let basis = fock::enumerate_basis(photons, u.dim())?;
    let orig = fock::original_subspace_indices(&basis, m)?;
    let rows: Vec<usize> = match mode {
        DetectorMode::Full => (0..basis.dim()).collect(),
        DetectorMode::Click => fock::click_subset(&basis),
    };
    let block = optical::lifted_block(u, &basis, &rows, &orig);
    Ok(MeasurementMatrix {
        block,
        mode,
        photons,
        original_ports: m,
        ports: u.dim(),
        outcome_indices: rows,
    })
}

/// Forward model through the measurement matrix; same result as
/// [`simulate_measurements`] (followed by [`restrict_to_clicks`] in click mode).
pub fn measure(a: &MeasurementMatrix, rho0: &DensityMatrix) -> Result<MeasurementRecord> {
    if rho0.dim() != a.dim() {
        return Err(QstError::DimensionMismatch {
            expected: a.dim(),
            actual: rho0.dim(),
        });
    }
    Ok(MeasurementRecord {
        values: a.apply(rho0.matrix()),
        mode: a.mode(),
        photons: a.photons(),
        original_ports: a.original_ports(),
        ports: a.ports(),
        snr_db: None,
        noise_power: None,
        noise_seed: None,
        coupler: None,
    })
}
