//! Radar receive chain: per-axis sample covariances, MUSIC clutter
//! parameter search and covariance reconstruction, separable whitening,
//! matched filtering and range/angle/velocity maps.

pub mod maps;
pub mod whitening;

pub use maps::*;
pub use whitening::*;

use std::f64::consts::PI;

use crate::covariance::{
    coherent_frequency_covariance, doppler_covariance, spatial_covariance, ClusterSet, SPEED_OF_LIGHT,
};
use crate::linalg::{self, cis, Axis, ComplexMatrix, ComplexTensor3};
use crate::scenario::Scenario;
use crate::{Error, Result};
use num_complex::Complex64;

/// Sample covariance along one axis with the noise floor removed:
/// `U_k(Y) U_k(Y)ᴴ / (product of the other dims) − σ² I`.
pub fn sample_covariance(cube: &ComplexTensor3, axis: Axis, noise_var: f64) -> ComplexMatrix {
    let u = cube.unfold(axis);
    let mut c = linalg::gram(&u) / Complex64::new(u.ncols() as f64, 0.0);
    for k in 0..c.nrows() {
        c[(k, k)] -= Complex64::new(noise_var, 0.0);
    }
    c
}

pub fn sample_cov_space(cube: &ComplexTensor3, noise_var: f64) -> ComplexMatrix {
    sample_covariance(cube, Axis::First, noise_var)
}

pub fn sample_cov_time(cube: &ComplexTensor3, noise_var: f64) -> ComplexMatrix {
    sample_covariance(cube, Axis::Second, noise_var)
}

pub fn sample_cov_freq(cube: &ComplexTensor3, noise_var: f64) -> ComplexMatrix {
    sample_covariance(cube, Axis::Third, noise_var)
}

/// Angle grid uniform in `sin θ` over `[−1, 1)`, returned as `sin θ`.
pub fn sine_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| -1.0 + 2.0 * k as f64 / points as f64).collect()
}

/// Doppler grid over `[−1/(2T), 1/(2T))`, Hz.
pub fn doppler_grid(points: usize, symbol_time: f64) -> Vec<f64> {
    (0..points).map(|k| (-0.5 + k as f64 / points as f64) / symbol_time).collect()
}

/// Range grid over the unambiguous interval `[0, c/(2Δf))`, metres.
pub fn range_grid(points: usize, spacing_hz: f64) -> Vec<f64> {
    let max = SPEED_OF_LIGHT / (2.0 * spacing_hz);
    (0..points).map(|k| max * k as f64 / points as f64).collect()
}

/// Spatial search steering `e^{−jπ n u}`, `n = 0…M−1`.
pub fn space_search_matrix(sines: &[f64], antennas: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(antennas, sines.len(), |n, g| cis(-PI * n as f64 * sines[g]))
}

/// Slow-time search steering `e^{−j2πfTi}`, matching the clutter Doppler factor.
pub fn doppler_search_matrix(dopplers: &[f64], symbols: usize, symbol_time: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(symbols, dopplers.len(), |i, g| cis(-2.0 * PI * dopplers[g] * symbol_time * i as f64))
}

/// Fast-time search steering `e^{j2πΔf(2r/c)v}`, matching the coherent
/// clutter frequency factor.
pub fn range_search_matrix(ranges: &[f64], subcarriers: usize, spacing_hz: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(subcarriers, ranges.len(), |v, g| {
        cis(2.0 * PI * spacing_hz * (2.0 * ranges[g] / SPEED_OF_LIGHT) * v as f64)
    })
}

/// A MUSIC pseudospectrum on a parameter grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoSpectrum {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub subspace_dim: usize,
}

impl PseudoSpectrum {
    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

/// Smallest admissible noise-subspace energy, relative to `‖a‖²`, so that a
/// steering vector inside the signal subspace gives a large finite value.
const MUSIC_FLOOR: f64 = 1e-14;

/// MUSIC against precomputed steering columns: `1 / ‖Γᴴa‖²`, evaluated as
/// `‖a‖² − ‖U_sᴴa‖²` with `U_s` the `signal_dim` dominant eigenvectors.
pub fn music_from_steering(cov: &ComplexMatrix, steering: &ComplexMatrix, signal_dim: usize) -> Result<Vec<f64>> {
    let n = cov.nrows();
    if signal_dim >= n {
        return Err(Error::InvalidParameter(format!("signal dimension {signal_dim} must be below {n}")));
    }
    if steering.nrows() != n {
        return Err(Error::Dimension(format!("steering length {} vs covariance size {n}", steering.nrows())));
    }
    let eig = linalg::hermitian_eig_tol(cov, 1e-9)?;
    let us = eig.leading(signal_dim);
    let proj = linalg::adj_matmul(&us, steering);
    Ok((0..steering.ncols())
        .map(|g| {
            let a2 = steering.column(g).norm_squared();
            let s2 = proj.column(g).norm_squared();
            1.0 / (a2 - s2).max(MUSIC_FLOOR * a2)
        })
        .collect())
}

/// MUSIC pseudospectrum of `cov` over `grid` with steering `steer(x)`.
pub fn music_spectrum(
    cov: &ComplexMatrix,
    steer: impl Fn(f64) -> linalg::ComplexVector,
    signal_dim: usize,
    grid: &[f64],
) -> Result<PseudoSpectrum> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }
    let cols: Vec<_> = grid.iter().map(|&x| steer(x)).collect();
    let a = ComplexMatrix::from_columns(&cols);
    Ok(PseudoSpectrum { grid: grid.to_vec(), values: music_from_steering(cov, &a, signal_dim)?, subspace_dim: signal_dim })
}

/// Peaks of a (circular) spectrum: local maxima above `median · 10^{threshold/10}`,
/// strongest first. Returns up to `count` indices and whether fewer were found.
/// Missing peaks are filled by repeating the strongest one.
pub fn pick_peaks(values: &[f64], count: usize, threshold_db: f64) -> (Vec<usize>, bool) {
    let n = values.len();
    if n == 0 || count == 0 {
        return (Vec::new(), count > 0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    let floor = median * 10f64.powf(threshold_db / 10.0);
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&k| {
            let v = values[k];
            let prev = values[(k + n - 1) % n];
            let next = values[(k + 1) % n];
            v > floor && v > prev && v >= next
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks.truncate(count);
    let under = peaks.len() < count;
    if under {
        let strongest = peaks.first().copied().unwrap_or_else(|| {
            (0..n).fold(0, |best, k| if values[k] > values[best] { k } else { best })
        });
        while peaks.len() < count {
            peaks.push(strongest);
        }
    }
    (peaks, under)
}

/// Inputs of the clutter covariance search that are not in the data.
#[derive(Clone, Debug)]
pub struct ClutterSearch {
    pub patches: usize,
    pub signal_dim: usize,
    pub angle_points: usize,
    pub doppler_points: usize,
    pub range_points: usize,
    pub threshold_db: f64,
    pub angular_spread: f64,
    pub coherent_symbols: f64,
    pub delay_spread: f64,
    pub symbol_time: f64,
    pub spacing_hz: f64,
    pub noise_var: f64,
}

impl ClutterSearch {
    pub fn from_scenario(sc: &Scenario) -> Self {
        let p = &sc.cfg.processing;
        let patches = sc.clutter_clusters.len();
        Self {
            patches,
            signal_dim: if p.clutter_subspace_dim == 0 { patches } else { p.clutter_subspace_dim },
            angle_points: p.angle_grid,
            doppler_points: p.doppler_grid,
            range_points: p.range_grid,
            threshold_db: p.peak_threshold_db,
            angular_spread: sc.clutter_clusters.angular_spread,
            coherent_symbols: sc.clutter_clusters.coherent_symbols,
            delay_spread: sc.clutter_clusters.delay_spread,
            symbol_time: sc.symbol_time,
            spacing_hz: sc.spacing(),
            noise_var: sc.radar_noise,
        }
    }
}

/// Clutter statistics recovered from one data cube.
#[derive(Clone, Debug)]
pub struct EstimatedClutter {
    pub space: ComplexMatrix,
    pub time: ComplexMatrix,
    /// Coherent (patch-driven) part only; the diffuse component is not modelled.
    pub frequency: ComplexMatrix,
    /// Per-element clutter power `tr(Ŝ_sp)/M`.
    pub power: f64,
    pub angles: Vec<f64>,
    pub dopplers: Vec<f64>,
    pub ranges: Vec<f64>,
    /// Per axis (space, time, frequency): fewer than the requested peaks found.
    pub under_resolved: [bool; 3],
    pub spectra: [PseudoSpectrum; 3],
}

/// Sample covariances → MUSIC searches → closed-form reconstruction.
pub fn estimate_clutter_covariances(cube: &ComplexTensor3, search: &ClutterSearch) -> Result<EstimatedClutter> {
    let [m, slots, subcarriers] = cube.dims();
    let s_sp = sample_cov_space(cube, search.noise_var);
    let s_t = sample_cov_time(cube, search.noise_var);
    let s_f = sample_cov_freq(cube, search.noise_var);
    let power = (linalg::trace_re(&s_sp) / m as f64).max(0.0);

    let sines = sine_grid(search.angle_points);
    let dopplers = doppler_grid(search.doppler_points, search.symbol_time);
    let ranges = range_grid(search.range_points, search.spacing_hz);
    let p_sp = music_from_steering(&s_sp, &space_search_matrix(&sines, m), search.signal_dim)?;
    let p_t = music_from_steering(&s_t, &doppler_search_matrix(&dopplers, slots, search.symbol_time), search.signal_dim)?;
    let p_f = music_from_steering(&s_f, &range_search_matrix(&ranges, subcarriers, search.spacing_hz), search.signal_dim)?;

    let (i_sp, u_sp) = pick_peaks(&p_sp, search.patches, search.threshold_db);
    let (i_t, u_t) = pick_peaks(&p_t, search.patches, search.threshold_db);
    let (i_f, u_f) = pick_peaks(&p_f, search.patches, search.threshold_db);
    for (name, under) in [("angle", u_sp), ("Doppler", u_t), ("range", u_f)] {
        if under {
            log::warn!("clutter {name} search resolved fewer than {} peaks", search.patches);
        }
    }
    let limit = (PI / 2.0).sin() - 1e-9;
    let angles: Vec<f64> = i_sp.iter().map(|&k| sines[k].clamp(-limit, limit).asin()).collect();
    let est_dopplers: Vec<f64> = i_t.iter().map(|&k| dopplers[k]).collect();
    let est_ranges: Vec<f64> = i_f.iter().map(|&k| ranges[k]).collect();

    let clusters = ClusterSet {
        angles: angles.clone(),
        angular_spread: search.angular_spread,
        dopplers: Some(est_dopplers.clone()),
        ranges: Some(est_ranges.clone()),
        delay_spread: search.delay_spread,
        coherent_symbols: search.coherent_symbols,
    };
    clusters.validate()?;
    Ok(EstimatedClutter {
        space: spatial_covariance(&clusters, m),
        time: doppler_covariance(&clusters, slots, search.symbol_time),
        frequency: coherent_frequency_covariance(&clusters, subcarriers, search.spacing_hz),
        power,
        angles,
        dopplers: est_dopplers,
        ranges: est_ranges,
        under_resolved: [u_sp, u_t, u_f],
        spectra: [
            PseudoSpectrum { grid: sines, values: p_sp, subspace_dim: search.signal_dim },
            PseudoSpectrum { grid: dopplers, values: p_t, subspace_dim: search.signal_dim },
            PseudoSpectrum { grid: ranges, values: p_f, subspace_dim: search.signal_dim },
        ],
    })
}

/// `10·log10(‖est − truth‖² / ‖truth‖²)`.
pub fn nmse_db(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> f64 {
    10.0 * linalg::relative_frobenius_sq(estimate, truth).log10()
}
