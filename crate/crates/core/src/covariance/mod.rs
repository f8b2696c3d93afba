//! Closed-form covariance models: UE spatial/temporal correlation and the
//! three Kronecker factors of the clutter covariance.

mod bessel;

pub use bessel::bessel_j0;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    self, cis, psd_eig, toeplitz_hermitian, toeplitz_symmetric, Axis, ComplexMatrix, ComplexTensor3,
};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Scattering clusters (UE side) or clutter patches (radar side).
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSet {
    /// Mean angle of each cluster seen from the array, radians.
    pub angles: Vec<f64>,
    /// Gaussian angular spread, radians.
    pub angular_spread: f64,
    /// Per-cluster Doppler shift, Hz.
    pub dopplers: Option<Vec<f64>>,
    /// Per-cluster median range, metres.
    pub ranges: Option<Vec<f64>>,
    /// Gaussian delay spread, seconds.
    pub delay_spread: f64,
    /// Doppler coherence length in symbols.
    pub coherent_symbols: f64,
}

impl ClusterSet {
    pub fn from_angles(angles: Vec<f64>, angular_spread: f64) -> Self {
        Self {
            angles,
            angular_spread,
            dopplers: None,
            ranges: None,
            delay_spread: 0.0,
            coherent_symbols: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.angles.len();
        if n == 0 {
            return Err(Error::InvalidParameter("cluster set is empty".into()));
        }
        if !(self.angular_spread > 0.0) {
            return Err(Error::InvalidParameter(format!("angular spread must be positive, got {}", self.angular_spread)));
        }
        if let Some(bad) = self.angles.iter().find(|a| !(a.abs() < PI / 2.0)) {
            return Err(Error::InvalidParameter(format!("cluster angle {bad} rad outside (−π/2, π/2)")));
        }
        for (name, list) in [("dopplers", &self.dopplers), ("ranges", &self.ranges)] {
            if let Some(list) = list {
                if list.len() != n {
                    return Err(Error::InvalidParameter(format!("{name} has {} entries for {n} clusters", list.len())));
                }
            }
        }
        if self.delay_spread < 0.0 || !(self.coherent_symbols > 0.0) {
            return Err(Error::InvalidParameter("delay spread must be ≥ 0 and coherence length > 0".into()));
        }
        Ok(())
    }

    fn dopplers_or_zero(&self) -> Vec<f64> {
        self.dopplers.clone().unwrap_or_else(|| vec![0.0; self.len()])
    }

    fn ranges_or_zero(&self) -> Vec<f64> {
        self.ranges.clone().unwrap_or_else(|| vec![0.0; self.len()])
    }
}

/// Diffuse (non-coherent) part of the clutter frequency correlation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffuseFreqParams {
    /// Correlation decay base μ_f, strictly inside (0, 1).
    pub decay_base: f64,
    /// Bandwidth over which the correlation falls by one factor of μ_f, Hz.
    pub coherence_bandwidth: f64,
    /// Linear power ratio χ relative to the coherent part.
    pub power_ratio: f64,
}

impl DiffuseFreqParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_base > 0.0 && self.decay_base < 1.0) {
            return Err(Error::InvalidParameter(format!("decay base must lie in (0,1), got {}", self.decay_base)));
        }
        if !(self.coherence_bandwidth > 0.0) || self.power_ratio < 0.0 {
            return Err(Error::InvalidParameter("coherence bandwidth must be > 0 and power ratio ≥ 0".into()));
        }
        Ok(())
    }
}

/// `(1/N) Σₙ e^{−jπk sinψₙ} e^{−(π²/2)(k cosψₙ ς)²}` for antenna offset `k`.
fn spatial_lag(clusters: &ClusterSet, k: f64) -> Complex64 {
    let n = clusters.len() as f64;
    let s = clusters.angular_spread;
    clusters
        .angles
        .iter()
        .map(|&psi| {
            let taper = (-0.5 * PI * PI * (k * psi.cos() * s).powi(2)).exp();
            cis(-PI * k * psi.sin()) * taper
        })
        .sum::<Complex64>()
        / n
}

/// Spatial covariance of a uniform linear array with half-wavelength spacing
/// under the small-spread Gaussian cluster approximation. Unit diagonal.
pub fn spatial_covariance(clusters: &ClusterSet, antennas: usize) -> ComplexMatrix {
    let first_column: Vec<Complex64> = (0..antennas).map(|k| spatial_lag(clusters, k as f64)).collect();
    let mut c = toeplitz_hermitian(&first_column);
    for i in 0..antennas {
        c[(i, i)] = linalg::ONE;
    }
    c
}

/// Channel time correlation `J0(2π·T·f_D·lag)`.
pub fn temporal_corr(lag: usize, doppler_hz: f64, symbol_time: f64) -> f64 {
    bessel_j0(2.0 * PI * symbol_time * doppler_hz * lag as f64)
}

/// Clutter slow-time covariance: Gaussian Doppler spectra around each patch's
/// Doppler, width set by the coherence length. Unit diagonal.
pub fn doppler_covariance(clusters: &ClusterSet, symbols: usize, symbol_time: f64) -> ComplexMatrix {
    let dopplers = clusters.dopplers_or_zero();
    let n = clusters.len() as f64;
    let ic = clusters.coherent_symbols;
    let first_column: Vec<Complex64> = (0..symbols)
        .map(|k| {
            let k = k as f64;
            let taper = (-k * k / (2.0 * ic * ic)).exp();
            dopplers.iter().map(|&f| cis(-2.0 * PI * f * symbol_time * k)).sum::<Complex64>() * (taper / n)
        })
        .collect();
    let mut b = toeplitz_hermitian(&first_column);
    for i in 0..symbols {
        b[(i, i)] = linalg::ONE;
    }
    b
}

/// Coherent and diffuse parts of the clutter frequency covariance.
#[derive(Clone, Debug)]
pub struct FrequencyCovariance {
    /// Patch-driven part, Hermitian Toeplitz with unit diagonal.
    pub coherent: ComplexMatrix,
    /// Exponentially decaying part, real symmetric Toeplitz with diagonal χ.
    pub diffuse: ComplexMatrix,
}

impl FrequencyCovariance {
    pub fn total(&self) -> ComplexMatrix {
        &self.coherent + &self.diffuse
    }
}

pub fn coherent_frequency_covariance(clusters: &ClusterSet, subcarriers: usize, spacing_hz: f64) -> ComplexMatrix {
    let ranges = clusters.ranges_or_zero();
    let n = clusters.len() as f64;
    let spread = clusters.delay_spread;
    let first_column: Vec<Complex64> = (0..subcarriers)
        .map(|k| {
            let k = k as f64;
            let taper = (-2.0 * (PI * spacing_hz * k * spread).powi(2)).exp();
            ranges
                .iter()
                .map(|&r| cis(2.0 * PI * spacing_hz * (2.0 * r / SPEED_OF_LIGHT) * k))
                .sum::<Complex64>()
                * (taper / n)
        })
        .collect();
    let mut b = toeplitz_hermitian(&first_column);
    for i in 0..subcarriers {
        b[(i, i)] = linalg::ONE;
    }
    b
}

pub fn diffuse_frequency_covariance(diffuse: &DiffuseFreqParams, subcarriers: usize, spacing_hz: f64) -> ComplexMatrix {
    let step = spacing_hz / diffuse.coherence_bandwidth;
    let row: Vec<f64> = (0..subcarriers)
        .map(|k| if k == 0 { diffuse.power_ratio } else { diffuse.power_ratio * diffuse.decay_base.powf(k as f64 * step) })
        .collect();
    linalg::to_complex(&toeplitz_symmetric(&row))
}

pub fn frequency_covariance(
    clusters: &ClusterSet,
    diffuse: &DiffuseFreqParams,
    subcarriers: usize,
    spacing_hz: f64,
) -> FrequencyCovariance {
    FrequencyCovariance {
        coherent: coherent_frequency_covariance(clusters, subcarriers, spacing_hz),
        diffuse: diffuse_frequency_covariance(diffuse, subcarriers, spacing_hz),
    }
}

/// Statistics of one UE's channel `h = vec(H)`, `H ∈ C^{M_UE × M_BS}`.
#[derive(Clone, Debug)]
pub struct UeCovariance {
    /// BS-side (transmit) spatial covariance, unit diagonal.
    pub tx: ComplexMatrix,
    /// UE-side (receive) spatial covariance, unit diagonal.
    pub rx: ComplexMatrix,
    /// `C = (C_tx ⊗ C_rx) / tr(·)`, unit trace. With column stacking the UE
    /// antenna index runs fastest in `h`.
    pub channel: ComplexMatrix,
    pub doppler_hz: f64,
    pub symbol_time: f64,
}

impl UeCovariance {
    pub fn new(tx: ComplexMatrix, rx: ComplexMatrix, doppler_hz: f64, symbol_time: f64) -> Self {
        let mut channel = linalg::kron(&tx, &rx);
        let tr = linalg::trace_re(&channel);
        channel /= Complex64::new(tr, 0.0);
        Self { tx, rx, channel, doppler_hz, symbol_time }
    }

    pub fn bs_antennas(&self) -> usize {
        self.tx.nrows()
    }

    pub fn ue_antennas(&self) -> usize {
        self.rx.nrows()
    }

    /// ζ at a signed slot lag (the correlation is even in the lag).
    pub fn zeta(&self, lag: i64) -> f64 {
        temporal_corr(lag.unsigned_abs() as usize, self.doppler_hz, self.symbol_time)
    }

    pub fn zeta_sequence(&self, max_lag: usize) -> Vec<f64> {
        (0..=max_lag).map(|i| temporal_corr(i, self.doppler_hz, self.symbol_time)).collect()
    }

    /// Transmit correlation `E[Hᴴ H]` seen by a precoder acting as `H·s`.
    ///
    /// With `vec(H) ~ CN(0, C_tx ⊗ C_rx)` this is `conj(C_tx)` scaled by the
    /// receive trace; it is the matrix whose dominant eigenvectors maximise
    /// the received pilot energy.
    pub fn transmit_correlation(&self) -> ComplexMatrix {
        let m_ue = self.ue_antennas();
        let m_bs = self.bs_antennas();
        ComplexMatrix::from_fn(m_bs, m_bs, |t, u| {
            (0..m_ue).map(|r| self.channel[(r + m_ue * u, r + m_ue * t)]).sum()
        })
    }
}

/// Kronecker-separable clutter covariance `δ²·(B_sp ⊗ B_t ⊗ B_f)`.
#[derive(Clone, Debug)]
pub struct ClutterCovariance {
    pub space: ComplexMatrix,
    pub time: ComplexMatrix,
    pub frequency: FrequencyCovariance,
    /// Texture δ²_cl (linear power).
    pub power: f64,
}

impl ClutterCovariance {
    pub fn from_model(
        clusters: &ClusterSet,
        diffuse: &DiffuseFreqParams,
        dims: [usize; 3],
        symbol_time: f64,
        spacing_hz: f64,
        power: f64,
    ) -> Result<Self> {
        clusters.validate()?;
        diffuse.validate()?;
        Ok(Self {
            space: spatial_covariance(clusters, dims[0]),
            time: doppler_covariance(clusters, dims[1], symbol_time),
            frequency: frequency_covariance(clusters, diffuse, dims[2], spacing_hz),
            power,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.space.nrows(), self.time.nrows(), self.frequency.coherent.nrows()]
    }

    /// Expected per-axis second moments `E[Uₖ Uₖᴴ]/(product of other dims)`.
    pub fn axis_second_moment(&self, axis: Axis) -> ComplexMatrix {
        let freq = self.frequency.total();
        let mean_diag = |m: &ComplexMatrix| linalg::trace_re(m) / m.nrows() as f64;
        let (own, a, b) = match axis {
            Axis::First => (&self.space, mean_diag(&self.time), mean_diag(&freq)),
            Axis::Second => (&self.time, mean_diag(&self.space), mean_diag(&freq)),
            Axis::Third => (&freq, mean_diag(&self.space), mean_diag(&self.time)),
        };
        own * Complex64::new(self.power * a * b, 0.0)
    }
}

/// Eigen-directions below this fraction of the largest eigenvalue are dropped
/// when colouring; their contribution to second moments is below 1e-13.
const COLOURING_CUTOFF: f64 = 1e-13;

/// Draw one clutter cube `c ~ CN(0, δ²·(B_f ⊗ B_t ⊗ B_sp))` in the crate's
/// tensor layout by colouring a white cube along each mode. The full
/// covariance is never formed.
pub fn sample_separable_clutter<R: Rng + ?Sized>(cov: &ClutterCovariance, rng: &mut R) -> Result<ComplexTensor3> {
    let freq = cov.frequency.total();
    let factors = [
        linalg::psd_factor(&cov.space, COLOURING_CUTOFF)?,
        linalg::psd_factor(&cov.time, COLOURING_CUTOFF)?,
        linalg::psd_factor(&freq, COLOURING_CUTOFF)?,
    ];
    let white_dims = [factors[0].ncols(), factors[1].ncols(), factors[2].ncols()];
    let mut cube = white_gaussian(white_dims, 1.0, rng);
    // Colour the largest mode last so the intermediate cubes stay small.
    for (axis, factor) in Axis::ALL.into_iter().zip(&factors) {
        cube = cube.mode_product(axis, factor)?;
    }
    cube.scale_mut(cov.power.sqrt());
    Ok(cube)
}

/// Cube of iid `CN(0, variance)` entries.
pub fn white_gaussian<R: Rng + ?Sized>(dims: [usize; 3], variance: f64, rng: &mut R) -> ComplexTensor3 {
    let s = (0.5 * variance).sqrt();
    ComplexTensor3::from_fn(dims, |_, _, _| complex_normal(rng, s))
}

/// One `CN(0, 2s²)` sample.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, s: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Returns an error when `a` has an eigenvalue below the PSD floor.
pub fn assert_psd(a: &ComplexMatrix) -> Result<()> {
    psd_eig(a).map(|_| ())
}
