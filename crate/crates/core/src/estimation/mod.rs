//! Despreading and the aging-aware multi-pilot MMSE channel estimator.

use crate::covariance::UeCovariance;
use crate::linalg::{self, ComplexMatrix, ComplexVector};
use crate::{Error, Result};
use num_complex::Complex64;

/// `Ỹ = Y ℶᴴ / √τ_p`. `tau` is passed separately so the pilot energy
/// bookkeeping can be checked independently of the sequences themselves.
pub fn despread(y: &ComplexMatrix, pilot: &ComplexMatrix, tau: f64) -> Result<ComplexMatrix> {
    if y.ncols() != pilot.ncols() {
        return Err(Error::Dimension(format!(
            "observation has {} columns, pilot has {}",
            y.ncols(),
            pilot.ncols()
        )));
    }
    if tau <= 0.0 {
        return Err(Error::InvalidParameter(format!("pilot energy {tau} must be positive")));
    }
    Ok(linalg::matmul_adj(y, pilot) / Complex64::new(tau.sqrt(), 0.0))
}

/// One despread pilot observation with the precoding it went through.
#[derive(Clone, Debug)]
pub struct PilotObservation {
    pub slot: i64,
    /// Effective `F P` (M_BS × S) used at this pilot.
    pub precoder: ComplexMatrix,
    /// `Ỹ` (M_UE × S).
    pub despread: ComplexMatrix,
}

/// Pilot observations of one UE, newest first.
#[derive(Clone, Debug, Default)]
pub struct PilotHistory {
    pub entries: Vec<PilotObservation>,
}

impl PilotHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an observation; entries stay sorted newest first.
    pub fn push(&mut self, obs: PilotObservation) -> Result<()> {
        if let Some(first) = self.entries.first() {
            if first.precoder.shape() != obs.precoder.shape() || first.despread.shape() != obs.despread.shape() {
                return Err(Error::Dimension("pilot observations must share shapes".into()));
            }
            if self.entries.iter().any(|e| e.slot == obs.slot) {
                return Err(Error::InvalidParameter(format!("slot {} already observed", obs.slot)));
            }
        }
        let at = self.entries.partition_point(|e| e.slot > obs.slot);
        self.entries.insert(at, obs);
        Ok(())
    }

    /// Keeps only the newest `count` observations.
    pub fn truncate(&mut self, count: usize) {
        self.entries.truncate(count);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn slots(&self) -> Vec<i64> {
        self.entries.iter().map(|e| e.slot).collect()
    }

    pub fn precoders(&self) -> Vec<ComplexMatrix> {
        self.entries.iter().map(|e| e.precoder.clone()).collect()
    }

    /// Checks that consecutive pilots are exactly `spacing` slots apart.
    pub fn check_spacing(&self, spacing: i64) -> Result<()> {
        for w in self.entries.windows(2) {
            if w[0].slot - w[1].slot != spacing {
                return Err(Error::InvalidParameter(format!(
                    "pilots at slots {} and {} are not {spacing} apart",
                    w[1].slot, w[0].slot
                )));
            }
        }
        Ok(())
    }

    /// `ỹ = [vec(Ỹ_newest); …; vec(Ỹ_oldest)]`.
    pub fn stacked_observation(&self) -> ComplexVector {
        let mut out = Vec::new();
        for e in &self.entries {
            out.extend_from_slice(e.despread.as_slice());
        }
        ComplexVector::from_vec(out)
    }
}

/// `(F P)ᵀ ⊗ I_{M_UE}`: maps `vec(H)` to `vec(H F P)`.
pub fn pilot_operator(precoder: &ComplexMatrix, ue_antennas: usize) -> ComplexMatrix {
    linalg::kron(&precoder.transpose(), &ComplexMatrix::identity(ue_antennas, ue_antennas))
}

fn block_diagonal(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Block-diagonal stack of the per-pilot operators, newest pilot first.
pub fn build_stacked_operator(history: &PilotHistory, ue_antennas: usize) -> Result<ComplexMatrix> {
    if history.is_empty() {
        return Err(Error::InvalidParameter("pilot history is empty".into()));
    }
    let blocks: Vec<ComplexMatrix> = history.entries.iter().map(|e| pilot_operator(&e.precoder, ue_antennas)).collect();
    Ok(block_diagonal(&blocks))
}

/// Linear MMSE estimator of `h` at one slot from a set of pilot slots.
///
/// Built from second-order statistics only, so it can be reused across
/// channel and noise realisations.
#[derive(Clone, Debug)]
pub struct MmseEstimator {
    pub target_slot: i64,
    pub pilot_slots: Vec<i64>,
    /// `ĥ = A ỹ`.
    pub gain: ComplexMatrix,
    /// Covariance of the estimate, `Ξ̂`.
    pub estimate_cov: ComplexMatrix,
    /// Covariance of the error, `Ξ̃ = C − Ξ̂`.
    pub error_cov: ComplexMatrix,
}

impl MmseEstimator {
    /// `alpha` is the amplitude path gain, `tau` the pilot energy per
    /// sequence entry sum (`ℶℶᴴ = τ I`), `noise_var` the UE noise power.
    /// `slots[j]` pairs with `precoders[j]`; ordering is free but must match
    /// the stacking of the observation vector.
    pub fn new(
        ue: &UeCovariance,
        slots: &[i64],
        precoders: &[ComplexMatrix],
        alpha: f64,
        tau: f64,
        noise_var: f64,
        target_slot: i64,
    ) -> Result<Self> {
        if slots.is_empty() || slots.len() != precoders.len() {
            return Err(Error::Dimension("need one precoder per pilot slot".into()));
        }
        if noise_var <= 0.0 || tau <= 0.0 {
            return Err(Error::InvalidParameter("noise power and pilot energy must be positive".into()));
        }
        let m_ue = ue.ue_antennas();
        let m_bs = ue.bs_antennas();
        if precoders.iter().any(|f| f.nrows() != m_bs) {
            return Err(Error::Dimension(format!("precoders must have {m_bs} rows")));
        }
        let c = &ue.channel;
        let blocks: Vec<ComplexMatrix> = precoders.iter().map(|f| pilot_operator(f, m_ue)).collect();

        // F̆ Eᴴ: block j is ζ(target − s_j) · F̆_j C.
        let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
        let d = c.nrows();
        let mut fe = ComplexMatrix::zeros(rows, d);
        let mut fc = Vec::with_capacity(blocks.len());
        let mut r = 0;
        for (b, &s) in blocks.iter().zip(slots) {
            let bc = linalg::matmul(b, c);
            let z = ue.zeta(target_slot - s);
            fe.view_mut((r, 0), bc.shape()).copy_from(&(&bc * Complex64::new(z, 0.0)));
            fc.push(bc);
            r += b.nrows();
        }

        // Ā = α²τ F̆ (T ⊗ C) F̆ᴴ + σ² I, assembled block by block.
        let a2t = alpha * alpha * tau;
        let mut abar = ComplexMatrix::zeros(rows, rows);
        let mut ra = 0;
        for (a, ba) in blocks.iter().enumerate() {
            let mut rb = 0;
            for (b, bb) in blocks.iter().enumerate() {
                let z = ue.zeta(slots[a] - slots[b]);
                if z != 0.0 {
                    let blk = linalg::matmul_adj(&fc[a], bb) * Complex64::new(a2t * z, 0.0);
                    abar.view_mut((ra, rb), blk.shape()).copy_from(&blk);
                }
                rb += bb.nrows();
            }
            ra += ba.nrows();
        }
        linalg::symmetrize(&mut abar);
        for k in 0..rows {
            abar[(k, k)] += Complex64::new(noise_var, 0.0);
        }

        let x = linalg::hermitian_solve(&abar, &fe)?;
        let gain = x.adjoint() * Complex64::new(alpha * tau.sqrt(), 0.0);
        let mut estimate_cov = linalg::adj_matmul(&fe, &x) * Complex64::new(a2t, 0.0);
        linalg::symmetrize(&mut estimate_cov);
        let mut error_cov = c - &estimate_cov;
        linalg::symmetrize(&mut error_cov);
        let scale = linalg::trace_re(c).max(f64::MIN_POSITIVE);
        for m in [&estimate_cov, &error_cov] {
            let eig = linalg::hermitian_eig(m)?;
            let low = eig.values.last().copied().unwrap_or(0.0);
            if low < -1e-9 * scale {
                return Err(Error::NotPsd { eigenvalue: low, floor: -1e-9 * scale });
            }
        }
        Ok(Self { target_slot, pilot_slots: slots.to_vec(), gain, estimate_cov, error_cov })
    }

    /// Estimator matching the slots and precoders recorded in `history`.
    pub fn for_history(
        history: &PilotHistory,
        ue: &UeCovariance,
        alpha: f64,
        tau: f64,
        noise_var: f64,
        target_slot: i64,
    ) -> Result<Self> {
        Self::new(ue, &history.slots(), &history.precoders(), alpha, tau, noise_var, target_slot)
    }

    /// Analytic NMSE `Tr(Ξ̃)` (the channel covariance has unit trace).
    pub fn nmse(&self) -> f64 {
        linalg::trace_re(&self.error_cov)
    }

    pub fn apply(&self, history: &PilotHistory) -> Result<ChannelEstimate> {
        if history.slots() != self.pilot_slots {
            return Err(Error::InvalidParameter("history does not match the estimator's pilot slots".into()));
        }
        let y = history.stacked_observation();
        if y.len() != self.gain.ncols() {
            return Err(Error::Dimension(format!("observation length {} vs {}", y.len(), self.gain.ncols())));
        }
        Ok(ChannelEstimate {
            h: &self.gain * y,
            estimate_cov: self.estimate_cov.clone(),
            error_cov: self.error_cov.clone(),
            slot: self.target_slot,
            nmse: self.nmse(),
        })
    }
}

/// Estimate of `vec(H)` at one slot with its analytic statistics.
#[derive(Clone, Debug)]
pub struct ChannelEstimate {
    pub h: ComplexVector,
    pub estimate_cov: ComplexMatrix,
    pub error_cov: ComplexMatrix,
    pub slot: i64,
    pub nmse: f64,
}

impl ChannelEstimate {
    /// `Ĥ ∈ C^{M_UE × M_BS}`.
    pub fn matrix(&self, ue_antennas: usize) -> ComplexMatrix {
        ComplexMatrix::from_column_slice(ue_antennas, self.h.len() / ue_antennas, self.h.as_slice())
    }
}

pub fn mmse_estimate(
    history: &PilotHistory,
    ue: &UeCovariance,
    alpha: f64,
    tau: f64,
    noise_var: f64,
    target_slot: i64,
) -> Result<ChannelEstimate> {
    MmseEstimator::for_history(history, ue, alpha, tau, noise_var, target_slot)?.apply(history)
}

/// Analytic NMSE at slots `0..=data_slots` of a frame whose pilot sits at
/// slot 0, using that pilot and `past_pilots` earlier ones spaced
/// `data_slots + 1` apart, all with the same precoder.
pub fn nmse_curve(
    ue: &UeCovariance,
    precoder: &ComplexMatrix,
    alpha: f64,
    tau: f64,
    noise_var: f64,
    data_slots: usize,
    past_pilots: usize,
) -> Result<Vec<f64>> {
    let spacing = data_slots as i64 + 1;
    let slots: Vec<i64> = (0..=past_pilots as i64).map(|j| -j * spacing).collect();
    let precoders = vec![precoder.clone(); slots.len()];
    (0..=data_slots as i64)
        .map(|i| MmseEstimator::new(ue, &slots, &precoders, alpha, tau, noise_var, i).map(|e| e.nmse()))
        .collect()
}

#[cfg(test)]
mod tests;
