//! Statistical pilot beams, MMSE data precoding, null-space sensing beams
//! and the equal power split.

use crate::linalg::{self, ComplexMatrix, ComplexVector};
use crate::scenario::{db_to_linear, linear_to_db, ScenarioConfig};
use crate::{Error, Result};
use num_complex::Complex64;

/// Singular values below this fraction of the largest are treated as zero
/// when forming the null-space projector.
pub const PROJECTOR_CUTOFF: f64 = 1e-10;

/// Pilot beams: the `streams` dominant eigenvectors of the transmit
/// correlation `E[HᴴH]`.
pub fn pilot_precoder(transmit_corr: &ComplexMatrix, streams: usize) -> Result<ComplexMatrix> {
    if streams == 0 || streams > transmit_corr.nrows() {
        return Err(Error::InvalidParameter(format!(
            "cannot take {streams} eigenvectors of a {0}×{0} matrix",
            transmit_corr.nrows()
        )));
    }
    Ok(linalg::psd_eig(transmit_corr)?.leading(streams))
}

/// `E[ẼᴴẼ]` for an error `vec(Ẽ)` with covariance `cov` (UE index fastest):
/// the sum of the `M_UE` diagonal entries of each BS-antenna block, with the
/// transposition a right-multiplied channel needs.
pub fn transmit_error_correlation(cov: &ComplexMatrix, ue_antennas: usize) -> ComplexMatrix {
    let m_bs = cov.nrows() / ue_antennas;
    ComplexMatrix::from_fn(m_bs, m_bs, |t, u| {
        (0..ue_antennas).map(|r| cov[(r + ue_antennas * u, r + ue_antennas * t)]).sum()
    })
}

/// Estimated downlink to one UE as seen by the precoder design.
#[derive(Clone, Debug)]
pub struct UeLink {
    /// `Ĥ ∈ C^{M_UE × M_BS}`.
    pub estimate: ComplexMatrix,
    /// Error covariance `Ξ̃` of `vec(H)`.
    pub error_cov: ComplexMatrix,
    /// Amplitude path gain.
    pub alpha: f64,
    /// Power per data stream.
    pub stream_power: f64,
}

/// Regularised MMSE precoder `F = T⁻¹ [α₁Ĥ₁ᴴ, …, α_KĤ_Kᴴ]`, columns
/// normalised, with `T = Σ_k p_k α_k² (Ĥ_kᴴĤ_k + E[Ẽ_kᴴẼ_k]) + σ² I`.
pub fn mmse_precoder(links: &[UeLink], noise_var: f64) -> Result<ComplexMatrix> {
    let first = links.first().ok_or_else(|| Error::InvalidParameter("no UE links".into()))?;
    let m_bs = first.estimate.ncols();
    let mut t = ComplexMatrix::identity(m_bs, m_bs) * Complex64::new(noise_var, 0.0);
    let mut rhs_cols = Vec::new();
    for l in links {
        let m_ue = l.estimate.nrows();
        if l.estimate.ncols() != m_bs || l.error_cov.nrows() != m_ue * m_bs {
            return Err(Error::Dimension("UE links disagree on antenna counts".into()));
        }
        let w = Complex64::new(l.stream_power * l.alpha * l.alpha, 0.0);
        t += (linalg::gram(&l.estimate.adjoint()) + transmit_error_correlation(&l.error_cov, m_ue)) * w;
        let ha = l.estimate.adjoint() * Complex64::new(l.alpha, 0.0);
        rhs_cols.extend(ha.column_iter().map(|c| c.into_owned()));
    }
    linalg::symmetrize(&mut t);
    let rhs = ComplexMatrix::from_columns(&rhs_cols);
    let mut f = linalg::hermitian_solve(&t, &rhs)?;
    normalize_columns(&mut f)?;
    Ok(f)
}

/// Scales every column to unit norm; a (numerically) zero column is an error.
pub fn normalize_columns(f: &mut ComplexMatrix) -> Result<()> {
    let scale = f.norm().max(f64::MIN_POSITIVE);
    for (j, mut c) in f.column_iter_mut().enumerate() {
        let n = c.norm();
        if n <= 1e-14 * scale || n == 0.0 {
            return Err(Error::Degenerate(format!("precoder column {j} vanishes")));
        }
        c.unscale_mut(n);
    }
    Ok(())
}

/// Orthogonal projector onto the null space of a stacked channel estimate.
#[derive(Clone, Debug)]
pub struct NullSpaceProjector {
    /// Orthonormal basis of the row space of `Ĥ` (M_BS × rank).
    pub row_basis: ComplexMatrix,
}

impl NullSpaceProjector {
    /// `stacked` is `K·M_UE × M_BS`. The row space comes from the small
    /// eigenproblem of `ĤĤᴴ`: `v = Ĥᴴu/σ`.
    pub fn new(stacked: &ComplexMatrix) -> Result<Self> {
        let m_bs = stacked.ncols();
        if stacked.nrows() == 0 || stacked.norm() == 0.0 {
            return Ok(Self { row_basis: ComplexMatrix::zeros(m_bs, 0) });
        }
        let eig = linalg::hermitian_eig(&linalg::gram(stacked))?;
        let smax = eig.max_value().max(0.0).sqrt();
        let mut cols = Vec::new();
        for (j, &l) in eig.values.iter().enumerate() {
            let s = l.max(0.0).sqrt();
            if s <= PROJECTOR_CUTOFF * smax {
                break;
            }
            let v = stacked.adjoint() * eig.vectors.column(j) / Complex64::new(s, 0.0);
            cols.push(v);
        }
        let mut basis = ComplexMatrix::from_columns(&cols);
        // One Gram–Schmidt pass removes the rounding left by the eigensolver.
        for j in 0..basis.ncols() {
            for k in 0..j {
                let p = basis.column(k).dotc(&basis.column(j));
                let ck = basis.column(k).into_owned();
                basis.column_mut(j).axpy(-p, &ck, ONE_C);
            }
            let n = basis.column(j).norm();
            basis.column_mut(j).unscale_mut(n);
        }
        Ok(Self { row_basis: basis })
    }

    pub fn rank(&self) -> usize {
        self.row_basis.ncols()
    }

    /// `(I − Ĥ†Ĥ) a`.
    pub fn apply(&self, a: &ComplexVector) -> ComplexVector {
        if self.rank() == 0 {
            return a.clone();
        }
        let coeff = self.row_basis.adjoint() * a;
        a - &self.row_basis * coeff
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let m = self.row_basis.nrows();
        ComplexMatrix::identity(m, m) - linalg::matmul_adj(&self.row_basis, &self.row_basis)
    }
}

const ONE_C: Complex64 = linalg::ONE;

/// Unit-norm sensing beam `(I − Ĥ†Ĥ) a / ‖·‖`. Fails when the projection
/// removes the steering vector (norm below 1e-12 of the input).
pub fn sensing_precoder(projector: &NullSpaceProjector, steering: &ComplexVector) -> Result<ComplexVector> {
    let f = projector.apply(steering);
    let n = f.norm();
    if n < 1e-12 * steering.norm() {
        return Err(Error::Degenerate("steering direction lies in the communication row space".into()));
    }
    Ok(f / Complex64::new(n, 0.0))
}

/// Equal split of the transmit budget over streams and subcarriers.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    pub total: f64,
    pub comm_total: f64,
    pub sensing_total: f64,
    /// Power of each communication stream on each subcarrier.
    pub comm_per_stream: f64,
    /// Power of the sensing stream on each subcarrier.
    pub sensing_per_subcarrier: f64,
    pub comm_streams: usize,
    pub subcarriers: usize,
}

impl PowerAllocation {
    /// `P_comm/(M_UE K V)` per communication stream, `P_sens/V` for sensing.
    pub fn new(total_w: f64, tradeoff: f64, comm_streams: usize, subcarriers: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&tradeoff) || total_w < 0.0 || comm_streams == 0 || subcarriers == 0 {
            return Err(Error::InvalidParameter("bad power allocation inputs".into()));
        }
        let comm_total = tradeoff * total_w;
        let sensing_total = total_w - comm_total;
        Ok(Self {
            total: total_w,
            comm_total,
            sensing_total,
            comm_per_stream: comm_total / (comm_streams * subcarriers) as f64,
            sensing_per_subcarrier: sensing_total / subcarriers as f64,
            comm_streams,
            subcarriers,
        })
    }

    /// Amplitudes `[√ρ_comm, …, √ρ_comm, √ρ_sens]` (diagonal of `P`).
    pub fn amplitudes(&self) -> Vec<f64> {
        let mut a = vec![self.comm_per_stream.sqrt(); self.comm_streams];
        a.push(self.sensing_per_subcarrier.sqrt());
        a
    }

    /// Power summed over all streams and subcarriers of one slot.
    pub fn slot_power(&self) -> f64 {
        let per_subcarrier: f64 = self.amplitudes().iter().map(|a| a * a).sum();
        per_subcarrier * self.subcarriers as f64
    }
}

pub fn allocate_powers(cfg: &ScenarioConfig) -> Result<PowerAllocation> {
    PowerAllocation::new(
        db_to_linear(cfg.power.total_dbm - 30.0),
        cfg.power.tradeoff,
        cfg.array.ues * cfg.array.ue_antennas,
        cfg.ofdm.subcarriers,
    )
}

/// `10·log10(α² P_comm / σ²)`.
pub fn ue_snr_db(alpha: f64, comm_power_w: f64, noise_var: f64) -> f64 {
    linear_to_db(alpha * alpha * comm_power_w / noise_var)
}

/// Single-user rate `log2 det(I + α² H F P² Fᴴ Hᴴ / σ²)` in bit/s/Hz.
pub fn link_rate(h: &ComplexMatrix, f: &ComplexMatrix, amplitudes: &[f64], alpha: f64, noise_var: f64) -> Result<f64> {
    if f.ncols() != amplitudes.len() || h.ncols() != f.nrows() {
        return Err(Error::Dimension("channel, precoder and powers do not conform".into()));
    }
    let mut hf = h * f;
    for (j, a) in amplitudes.iter().enumerate() {
        hf.column_mut(j).scale_mut(*a * alpha);
    }
    let mut g = linalg::gram(&hf) / Complex64::new(noise_var, 0.0);
    for k in 0..g.nrows() {
        g[(k, k)] += ONE_C;
    }
    let eig = linalg::hermitian_eig(&g)?;
    Ok(eig.values.iter().map(|l| l.max(f64::MIN_POSITIVE).log2()).sum())
}

/// Unit-column precoders for every (slot, coherence block), plus the power
/// diagonal shared by all of them.
#[derive(Clone, Debug)]
pub struct PrecoderSet {
    pub slots: usize,
    pub blocks: usize,
    /// `F` at index `slot·blocks + block`.
    pub matrices: Vec<ComplexMatrix>,
    pub amplitudes: Vec<f64>,
    pub pilot_slot: Vec<bool>,
}

impl PrecoderSet {
    pub fn get(&self, slot: usize, block: usize) -> &ComplexMatrix {
        &self.matrices[slot * self.blocks + block]
    }

    /// `F P` for every entry, the form the radar echo model consumes.
    pub fn effective(&self) -> Vec<ComplexMatrix> {
        let p = ComplexMatrix::from_diagonal(&ComplexVector::from_iterator(
            self.amplitudes.len(),
            self.amplitudes.iter().map(|a| Complex64::new(*a, 0.0)),
        ));
        self.matrices.iter().map(|f| f * &p).collect()
    }

    /// Largest deviation of any column norm from one.
    pub fn column_norm_error(&self) -> f64 {
        self.matrices
            .iter()
            .flat_map(|f| f.column_iter().map(|c| (c.norm() - 1.0).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }
}
