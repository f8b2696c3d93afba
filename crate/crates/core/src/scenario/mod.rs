//! Random processes of the system: aging UE channels, target echoes,
//! clutter and noise, and the received pilot and radar observations.

mod config;

pub use config::*;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::covariance::{
    complex_normal, spatial_covariance, ClusterSet, ClutterCovariance, DiffuseFreqParams, UeCovariance,
    SPEED_OF_LIGHT,
};
use crate::error::{Error, Result};
use crate::linalg::{self, cis, ComplexMatrix, ComplexTensor3, ComplexVector, ZERO};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Array steering vector with centred indices `n = −⌊m/2⌋, …`:
/// `aₙ = e^{−jπ n sin θ}` (half-wavelength spacing).
pub fn steering_a(theta: f64, m: usize) -> ComplexVector {
    let s = theta.sin();
    let offset = (m / 2) as f64;
    ComplexVector::from_fn(m, |i, _| cis(-PI * (i as f64 - offset) * s))
}

/// Same as [`steering_a`] but parameterised directly by `u = sin θ`.
pub fn steering_a_sine(u: f64, m: usize) -> ComplexVector {
    let offset = (m / 2) as f64;
    ComplexVector::from_fn(m, |i, _| cis(-PI * (i as f64 - offset) * u))
}

/// Slow-time (Doppler) steering vector `bᵢ = e^{−j2πfTi}`.
pub fn steering_b(doppler_hz: f64, symbols: usize, symbol_time: f64) -> ComplexVector {
    ComplexVector::from_fn(symbols, |i, _| cis(-2.0 * PI * doppler_hz * symbol_time * i as f64))
}

/// Fast-time (delay) steering vector `d_v = e^{j2πΔf τ v}`.
pub fn steering_d(delay_s: f64, subcarriers: usize, spacing_hz: f64) -> ComplexVector {
    ComplexVector::from_fn(subcarriers, |v, _| cis(2.0 * PI * spacing_hz * delay_s * v as f64))
}

/// One point target as seen from the array.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub position: [f64; 2],
    pub angle: f64,
    pub range: f64,
    pub delay: f64,
    pub doppler: f64,
    pub velocity: f64,
    pub rcs: f64,
    pub gain: Complex64,
}

pub type TargetSet = Vec<Target>;

/// Monostatic radar-equation gain with isotropic antennas:
/// `|α|² = c²σ/((4π)³ f_c² r⁴)`, phase `2π f_c τ`.
pub fn target_gain(range_m: f64, rcs_linear: f64, carrier_hz: f64) -> Result<Complex64> {
    if !(range_m > 0.0) {
        return Err(Error::InvalidParameter(format!("target range must be positive, got {range_m}")));
    }
    let power = SPEED_OF_LIGHT.powi(2) * rcs_linear / ((4.0 * PI).powi(3) * carrier_hz.powi(2) * range_m.powi(4));
    let delay = 2.0 * range_m / SPEED_OF_LIGHT;
    Ok(Complex64::from_polar(power.sqrt(), 2.0 * PI * carrier_hz * delay))
}

pub fn make_target(cfg: &TargetConfig, carrier_hz: f64) -> Result<Target> {
    let range = cfg.x_m.hypot(cfg.y_m);
    let wavelength = SPEED_OF_LIGHT / carrier_hz;
    let rcs = db_to_linear(cfg.rcs_dbsm);
    Ok(Target {
        position: [cfg.x_m, cfg.y_m],
        angle: cfg.y_m.atan2(cfg.x_m),
        range,
        delay: 2.0 * range / SPEED_OF_LIGHT,
        doppler: 2.0 * cfg.velocity_mps / wavelength,
        velocity: cfg.velocity_mps,
        rcs,
        gain: target_gain(range, rcs, carrier_hz)?,
    })
}

/// Slot- and subcarrier-dependent sensing channel
/// `G = Σₗ αₗ e^{−j2π f_D,ₗ T i} e^{j2πΔf v τₗ} a(θₗ) a(θₗ)ᴴ`.
pub fn sensing_channel(slot: usize, subcarrier: usize, targets: &[Target], scenario: &Scenario) -> ComplexMatrix {
    let m = scenario.bs_antennas();
    let mut g = ComplexMatrix::zeros(m, m);
    for t in targets {
        let a = steering_a(t.angle, m);
        let coeff = t.gain * scenario.target_phase(t, slot, subcarrier);
        g += (&a * a.adjoint()) * coeff;
    }
    g
}

/// Linear-scale view of a configuration plus derived model objects.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub symbol_time: f64,
    pub wavelength: f64,
    /// Amplitude gain α_k. The configured dB value is read as 10·log10(α),
    /// which puts the UE SNR `α²P_comm/σ²` at 22 + 10·log10(γ) dB for the
    /// default powers.
    pub ue_gain: f64,
    pub ue_noise: f64,
    pub radar_noise: f64,
    pub total_power: f64,
    pub clutter_power: f64,
    pub ue_clusters: ClusterSet,
    pub ue: UeCovariance,
    pub clutter_clusters: ClusterSet,
    pub diffuse: DiffuseFreqParams,
    pub targets: TargetSet,
}

fn spread_angles(center_deg: f64, width_deg: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![center_deg.to_radians()];
    }
    (0..count)
        .map(|n| (center_deg + width_deg * (n as f64 / (count - 1) as f64 - 0.5)).to_radians())
        .collect()
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let symbol_time = cfg.symbol_time();
        let wavelength = SPEED_OF_LIGHT / cfg.ofdm.carrier_hz;
        let u = &cfg.ue;
        let ue_clusters = ClusterSet::from_angles(
            spread_angles(u.tx_center_deg, u.tx_separation_deg, u.clusters),
            u.angular_spread_deg.to_radians(),
        );
        ue_clusters.validate()?;
        let rx_clusters = ClusterSet::from_angles(
            spread_angles(u.rx_center_deg, u.rx_separation_deg, u.clusters),
            u.rx_angular_spread_deg.to_radians(),
        );
        rx_clusters.validate()?;
        let tx = spatial_covariance(&ue_clusters, cfg.array.bs_antennas);
        let rx = spatial_covariance(&rx_clusters, cfg.array.ue_antennas);
        let ue = UeCovariance::new(tx, rx, u.doppler_hz, symbol_time);

        let c = &cfg.clutter;
        let clutter_clusters = ClusterSet {
            angles: c.angles_deg.iter().map(|a| a.to_radians()).collect(),
            angular_spread: c.angular_spread_deg.to_radians(),
            dopplers: Some(c.dopplers_hz.clone()),
            ranges: Some(c.ranges_m.clone()),
            delay_spread: c.delay_spread_s,
            coherent_symbols: c.coherent_symbols,
        };
        clutter_clusters.validate()?;
        let diffuse = DiffuseFreqParams {
            decay_base: c.diffuse_decay,
            coherence_bandwidth: c.diffuse_bandwidth_hz,
            power_ratio: db_to_linear(c.diffuse_power_db),
        };
        diffuse.validate()?;
        let targets = cfg
            .targets
            .iter()
            .map(|t| make_target(t, cfg.ofdm.carrier_hz))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            symbol_time,
            wavelength,
            ue_gain: db_to_linear(u.path_gain_db),
            ue_noise: db_to_linear(cfg.power.ue_noise_db),
            radar_noise: db_to_linear(cfg.power.radar_noise_db),
            total_power: db_to_linear(cfg.power.total_dbm - 30.0),
            clutter_power: db_to_linear(c.texture_db),
            ue_clusters,
            ue,
            clutter_clusters,
            diffuse,
            targets,
            cfg,
        })
    }

    pub fn bs_antennas(&self) -> usize {
        self.cfg.array.bs_antennas
    }

    pub fn ue_antennas(&self) -> usize {
        self.cfg.array.ue_antennas
    }

    pub fn ues(&self) -> usize {
        self.cfg.array.ues
    }

    pub fn streams(&self) -> usize {
        self.cfg.streams()
    }

    pub fn slots(&self) -> usize {
        self.cfg.ofdm.symbols
    }

    pub fn subcarriers(&self) -> usize {
        self.cfg.ofdm.subcarriers
    }

    pub fn spacing(&self) -> f64 {
        self.cfg.ofdm.subcarrier_spacing_hz
    }

    pub fn cube_dims(&self) -> [usize; 3] {
        [self.bs_antennas(), self.slots(), self.subcarriers()]
    }

    /// Number of coherence blocks covering the subcarriers.
    pub fn blocks(&self) -> usize {
        self.subcarriers().div_ceil(self.cfg.ofdm.coherence_block)
    }

    pub fn block_of(&self, subcarrier: usize) -> usize {
        subcarrier / self.cfg.ofdm.coherence_block
    }

    pub fn clutter_covariance(&self) -> Result<ClutterCovariance> {
        ClutterCovariance::from_model(
            &self.clutter_clusters,
            &self.diffuse,
            self.cube_dims(),
            self.symbol_time,
            self.spacing(),
            self.clutter_power,
        )
    }

    /// `e^{−j2π f_D T i} e^{j2πΔf v τ}` for one target.
    pub fn target_phase(&self, t: &Target, slot: usize, subcarrier: usize) -> Complex64 {
        cis(-2.0 * PI * t.doppler * self.symbol_time * slot as f64 + 2.0 * PI * self.spacing() * t.delay * subcarrier as f64)
    }

    /// Beamsweep direction for each slot.
    pub fn sweep_angles(&self) -> Vec<f64> {
        let s = &self.cfg.sensing;
        sweep_grid(s.sweep_start_deg.to_radians(), s.sweep_end_deg.to_radians(), self.slots(), s.sweep_grid)
    }
}

/// `count` directions between `start` and `end`, uniform in sin θ or in θ.
pub fn sweep_grid(start: f64, end: f64, count: usize, grid: SweepGrid) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (start + end)];
    }
    (0..count)
        .map(|i| {
            let f = i as f64 / (count - 1) as f64;
            match grid {
                SweepGrid::Sine => (start.sin() + f * (end.sin() - start.sin())).asin(),
                SweepGrid::Angle => start + f * (end - start),
            }
        })
        .collect()
}

/// Jointly Gaussian channel realisations of one UE at a set of slots.
#[derive(Clone, Debug)]
pub struct UeChannelSeries {
    /// Column `j` is `vec(H)` at `slots[j]`.
    pub h: ComplexMatrix,
    pub slots: Vec<i64>,
    pub ue_antennas: usize,
}

impl UeChannelSeries {
    pub fn vector(&self, j: usize) -> ComplexVector {
        self.h.column(j).into_owned()
    }

    /// `H ∈ C^{M_UE × M_BS}` at column `j`.
    pub fn matrix(&self, j: usize) -> ComplexMatrix {
        let d = self.h.nrows();
        ComplexMatrix::from_column_slice(self.ue_antennas, d / self.ue_antennas, self.h.column(j).as_slice())
    }

    pub fn index_of(&self, slot: i64) -> Option<usize> {
        self.slots.binary_search(&slot).ok()
    }
}

/// Real factor `L` with `L Lᵀ = T`, `T = [ζ(s_a − s_b)]`. Cholesky first; a
/// singular but PSD matrix (e.g. zero Doppler) falls back to an eigen
/// factor, which is exact. Clearly indefinite matrices are rejected.
pub fn temporal_factor(ue: &UeCovariance, slots: &[i64]) -> Result<DMatrix<f64>> {
    let n = slots.len();
    let t = DMatrix::from_fn(n, n, |a, b| ue.zeta(slots[a] - slots[b]));
    if let Some(ch) = t.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = t.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lmin < -1e-10 * lmax {
        return Err(Error::NotPsd { eigenvalue: lmin, floor: -1e-10 * lmax });
    }
    if lmin < 0.0 {
        log::warn!("temporal correlation matrix has eigenvalue {lmin:.3e}; clipped to zero");
    }
    let mut f = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        f.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    Ok(f)
}

/// Exact joint draw with covariance `Toeplitz(ζ) ⊗ C_k` over the given slots.
pub fn sample_ue_channel_series<R: Rng + ?Sized>(
    ue: &UeCovariance,
    slots: &[i64],
    rng: &mut R,
) -> Result<UeChannelSeries> {
    if slots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("slots must be strictly increasing".into()));
    }
    let spatial = linalg::psd_factor(&ue.channel, 1e-14)?;
    let temporal = linalg::to_complex(&temporal_factor(ue, slots)?);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let white = ComplexMatrix::from_fn(spatial.ncols(), temporal.ncols(), |_, _| complex_normal(rng, s));
    let h = linalg::matmul(&linalg::matmul(&spatial, &white), &temporal.transpose());
    Ok(UeChannelSeries { h, slots: slots.to_vec(), ue_antennas: ue.ue_antennas() })
}

/// Orthogonal pilot sequences: rows of a `τ_p`-point DFT matrix with unit-modulus
/// entries (a unitary DFT scaled by √τ_p), UE `k` taking rows `kS … kS+S−1`.
/// `ℶ_k ℶ_{k'}ᴴ = τ_p I δ_{kk'}`.
pub fn pilot_matrices(ues: usize, streams: usize, length: usize) -> Result<Vec<ComplexMatrix>> {
    if length < ues * streams {
        return Err(Error::InvalidParameter(format!(
            "pilot length {length} cannot host {} orthogonal sequences",
            ues * streams
        )));
    }
    Ok((0..ues)
        .map(|k| {
            ComplexMatrix::from_fn(streams, length, |s, t| {
                let row = (k * streams + s) as f64;
                cis(-2.0 * PI * row * t as f64 / length as f64)
            })
        })
        .collect())
}

/// Pilot observation at one UE: `Y = α H F P Σₖ ℶₖ + N`, `N` iid `CN(0, σ²)`.
/// `powers` holds the diagonal of `P` (amplitudes).
pub fn received_pilot<R: Rng + ?Sized>(
    alpha: f64,
    channel: &ComplexMatrix,
    precoder: &ComplexMatrix,
    powers: &[f64],
    pilots: &[ComplexMatrix],
    noise_var: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    let streams = precoder.ncols();
    if channel.ncols() != precoder.nrows() || powers.len() != streams {
        return Err(Error::Dimension("channel, precoder and powers do not conform".into()));
    }
    let first = pilots.first().ok_or_else(|| Error::Dimension("no pilot sequences".into()))?;
    let mut sum = ComplexMatrix::zeros(first.nrows(), first.ncols());
    for p in pilots {
        if p.shape() != sum.shape() || p.nrows() != streams {
            return Err(Error::Dimension("pilot matrices must be S × τ_p".into()));
        }
        sum += p;
    }
    let mut fp = precoder.clone();
    for (j, &p) in powers.iter().enumerate() {
        fp.column_mut(j).scale_mut(p);
    }
    let mut y = (channel * fp * sum) * Complex64::new(alpha, 0.0);
    if noise_var > 0.0 {
        let s = (0.5 * noise_var).sqrt();
        y.iter_mut().for_each(|z| *z += complex_normal(rng, s));
    }
    Ok(y)
}

/// Noise-free target echoes `Σ G_{i,v} F_{i,v} P x_{i,v}`.
///
/// `precoders[i·blocks + b]` is the effective `F P` (M_BS × S) for slot `i`
/// and coherence block `b`; `symbols` has dims `[S, I, V]`.
pub fn target_echo_cube(
    scenario: &Scenario,
    targets: &[Target],
    precoders: &[ComplexMatrix],
    symbols: &ComplexTensor3,
) -> Result<ComplexTensor3> {
    let [m, slots, subcarriers] = scenario.cube_dims();
    let streams = scenario.streams();
    let blocks = scenario.blocks();
    if symbols.dims() != [streams, slots, subcarriers] {
        return Err(Error::Dimension(format!(
            "symbol cube {:?} does not match [{streams}, {slots}, {subcarriers}]",
            symbols.dims()
        )));
    }
    if precoders.len() != slots * blocks {
        return Err(Error::Dimension(format!("expected {} precoders, got {}", slots * blocks, precoders.len())));
    }
    let steer: Vec<ComplexVector> = targets.iter().map(|t| steering_a(t.angle, m)).collect();
    let mut out = ComplexTensor3::zeros([m, slots, subcarriers]);
    let mut s = vec![ZERO; m];
    for i in 0..slots {
        for v in 0..subcarriers {
            let fp = &precoders[i * blocks + scenario.block_of(v)];
            let x = symbols.fibre(i, v);
            for (row, sr) in s.iter_mut().enumerate() {
                *sr = (0..streams).map(|k| fp[(row, k)] * x[k]).sum();
            }
            let y = out.fibre_mut(i, v);
            for (t, a) in targets.iter().zip(&steer) {
                let inner: Complex64 = a.iter().zip(&s).map(|(ai, si)| ai.conj() * si).sum();
                let coeff = t.gain * scenario.target_phase(t, i, v) * inner;
                for (yr, ar) in y.iter_mut().zip(a.iter()) {
                    *yr += coeff * ar;
                }
            }
        }
    }
    Ok(out)
}

/// Radar observation `y = G s + c + n`: target echoes plus an optional clutter
/// cube plus iid `CN(0, σ²)` noise.
pub fn received_radar_cube<R: Rng + ?Sized>(
    scenario: &Scenario,
    targets: &[Target],
    precoders: &[ComplexMatrix],
    symbols: &ComplexTensor3,
    clutter: Option<&ComplexTensor3>,
    noise_var: f64,
    rng: &mut R,
) -> Result<ComplexTensor3> {
    let mut y = target_echo_cube(scenario, targets, precoders, symbols)?;
    if let Some(c) = clutter {
        y.add_assign(c)?;
    }
    if noise_var > 0.0 {
        let s = (0.5 * noise_var).sqrt();
        y.as_mut_slice().iter_mut().for_each(|z| *z += complex_normal(rng, s));
    }
    Ok(y)
}
