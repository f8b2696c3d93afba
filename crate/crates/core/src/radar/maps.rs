//! Clutter-aware matched filtering and range–angle / range–velocity maps.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::covariance::SPEED_OF_LIGHT;
use crate::linalg::{self, ComplexMatrix, ComplexTensor3, ZERO};
use crate::radar::{music_from_steering, sine_grid};
use crate::scenario::steering_a_sine;
use crate::{Error, Result};

/// Per-cell channel estimates for one stream, `φ = y xᴴ/‖x‖²` column `s`.
#[derive(Clone, Debug)]
pub struct MatchedFilterOutput {
    /// `[M, I, V]`.
    pub phi: ComplexTensor3,
    /// `(slot, subcarrier)` cells skipped because `‖x‖` was below the gap tolerance.
    pub gaps: Vec<(usize, usize)>,
}

/// Minimum-norm single-snapshot solution of `y = Φ x`, stream `stream` only.
pub fn matched_filter(y: &ComplexTensor3, x: &ComplexTensor3, stream: usize, gap_tol: f64) -> Result<MatchedFilterOutput> {
    let [m, slots, subcarriers] = y.dims();
    let [s, xi, xv] = x.dims();
    if xi != slots || xv != subcarriers || stream >= s {
        return Err(Error::Dimension(format!("observation {:?} and symbols {:?} / stream {stream}", y.dims(), x.dims())));
    }
    let mut phi = ComplexTensor3::zeros([m, slots, subcarriers]);
    let mut gaps = Vec::new();
    for v in 0..subcarriers {
        for i in 0..slots {
            let xs = x.fibre(i, v);
            let n2: f64 = xs.iter().map(|z| z.norm_sqr()).sum();
            if n2.sqrt() < gap_tol {
                gaps.push((i, v));
                continue;
            }
            let w = xs[stream].conj() / n2;
            let ys = y.fibre(i, v);
            for (o, yy) in phi.fibre_mut(i, v).iter_mut().zip(ys) {
                *o = yy * w;
            }
        }
    }
    Ok(MatchedFilterOutput { phi, gaps })
}

/// `r_{i,v'} = Σ_v e^{−j2πvv'/V'} φ_{i,v}` for every antenna; output `[M, I, V']`.
pub fn range_profiles(phi: &ComplexTensor3, padded: usize) -> Result<ComplexTensor3> {
    let [m, slots, subcarriers] = phi.dims();
    if padded < subcarriers {
        return Err(Error::InvalidParameter(format!("padding {padded} below {subcarriers} subcarriers")));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(padded);
    let mut out = ComplexTensor3::zeros([m, slots, padded]);
    let mut buf = vec![ZERO; padded];
    for i in 0..slots {
        for a in 0..m {
            buf.iter_mut().for_each(|z| *z = ZERO);
            for (v, b) in buf.iter_mut().take(subcarriers).enumerate() {
                *b = phi.get(a, i, v);
            }
            fft.process(&mut buf);
            for (k, z) in buf.iter().enumerate() {
                out.set(a, i, k, *z);
            }
        }
    }
    Ok(out)
}

/// RA map (`V' × G`, MUSIC per range bin with `signal_dim` sources) and the
/// strongest angle (as `sin θ`) in each bin.
pub fn range_angle_map(profiles: &ComplexTensor3, sines: &[f64], signal_dim: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let [m, slots, bins] = profiles.dims();
    let steering = ComplexMatrix::from_columns(&sines.iter().map(|&u| steering_a_sine(u, m)).collect::<Vec<_>>());
    let mut map = DMatrix::zeros(bins, sines.len());
    let mut best = Vec::with_capacity(bins);
    for k in 0..bins {
        let mut q = ComplexMatrix::zeros(m, m);
        for i in 0..slots {
            let r = profiles.fibre(i, k);
            for c in 0..m {
                let rc = r[c].conj();
                for rr in 0..m {
                    q[(rr, c)] += r[rr] * rc;
                }
            }
        }
        q /= Complex64::new(slots as f64, 0.0);
        linalg::symmetrize(&mut q);
        let p = music_from_steering(&q, &steering, signal_dim)?;
        let arg = p.iter().enumerate().fold(0, |b, (g, v)| if *v > p[b] { g } else { b });
        best.push(sines[arg]);
        for (g, v) in p.into_iter().enumerate() {
            map[(k, g)] = v;
        }
    }
    Ok((map, best))
}

/// RV map (`I' × V'`): per range bin, beamform towards that bin's strongest
/// angle and transform over slots. Rows run from `−1/(2T)` upward.
pub fn range_velocity_map(profiles: &ComplexTensor3, best_sines: &[f64], padded: usize) -> Result<DMatrix<f64>> {
    let [m, slots, bins] = profiles.dims();
    if padded < slots || best_sines.len() != bins {
        return Err(Error::InvalidParameter("velocity padding below slot count or angle list mismatch".into()));
    }
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(padded);
    let mut map = DMatrix::zeros(padded, bins);
    let mut buf = vec![ZERO; padded];
    let half = padded / 2;
    for k in 0..bins {
        let a = steering_a_sine(best_sines[k], m);
        buf.iter_mut().for_each(|z| *z = ZERO);
        for (i, b) in buf.iter_mut().take(slots).enumerate() {
            let r = profiles.fibre(i, k);
            *b = a.iter().zip(r).map(|(ai, ri)| ai.conj() * ri).sum();
        }
        ifft.process(&mut buf);
        for (j, z) in buf.iter().enumerate() {
            map[((j + half) % padded, k)] = z.norm();
        }
    }
    Ok(map)
}

/// Modified Bessel function `I₀` by its power series (fine for β ≲ 50).
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Symmetric Kaiser window of length `n` and shape `beta`.
pub fn kaiser_window(n: usize, beta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let norm = bessel_i0(beta);
    (0..n)
        .map(|k| {
            let t = 2.0 * k as f64 / (n - 1) as f64 - 1.0;
            bessel_i0(beta * (1.0 - t * t).max(0.0).sqrt()) / norm
        })
        .collect()
}

/// Dominant singular triplet of a real matrix by power iteration on `AᵀA`.
pub fn top_singular_triplet(a: &DMatrix<f64>) -> (f64, DVector<f64>, DVector<f64>) {
    let mut v = DVector::from_element(a.ncols(), 1.0 / (a.ncols() as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..2000 {
        let u = a * &v;
        let mut w = a.transpose() * &u;
        let n = w.norm();
        if n == 0.0 {
            return (0.0, DVector::zeros(a.nrows()), v);
        }
        w /= n;
        let s = (a * &w).norm();
        let done = (s - sigma).abs() <= 1e-15 * s && (&w - &v).norm() < 1e-12;
        v = w;
        sigma = s;
        if done {
            break;
        }
    }
    let u = a * &v / sigma;
    (sigma, u, v)
}

/// Which matrix axis holds range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RangeAxis {
    Rows,
    Columns,
}

/// Subtract `fraction·σ₁u₁v₁ᵀ`, clip at zero, then optionally taper along
/// range with a Kaiser window of shape `kaiser`.
pub fn postprocess_map(map: &DMatrix<f64>, fraction: f64, kaiser: Option<f64>, range: RangeAxis) -> DMatrix<f64> {
    let mut out = map.clone();
    if fraction > 0.0 {
        let (s, u, v) = top_singular_triplet(map);
        out -= (u * v.transpose()) * (fraction * s);
        out.iter_mut().for_each(|x| *x = x.max(0.0));
    }
    if let Some(beta) = kaiser {
        match range {
            RangeAxis::Rows => {
                let w = kaiser_window(out.nrows(), beta);
                for (r, wr) in w.iter().enumerate() {
                    out.row_mut(r).scale_mut(*wr);
                }
            }
            RangeAxis::Columns => {
                let w = kaiser_window(out.ncols(), beta);
                for (c, wc) in w.iter().enumerate() {
                    out.column_mut(c).scale_mut(*wc);
                }
            }
        }
    }
    out
}

/// Strongest local maxima (8-neighbourhood, non-wrapping) of a map.
pub fn map_peaks(map: &DMatrix<f64>, count: usize) -> Vec<(usize, usize)> {
    let (r, c) = map.shape();
    let mut peaks = Vec::new();
    for i in 0..r {
        for j in 0..c {
            let v = map[(i, j)];
            let mut is_max = v > 0.0;
            'n: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= r as i64 || nj >= c as i64 {
                        continue;
                    }
                    let w = map[(ni as usize, nj as usize)];
                    // Ties go to the first cell in scan order.
                    if w > v || (w == v && (ni, nj) < (i as i64, j as i64)) {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                peaks.push((i, j));
            }
        }
    }
    peaks.sort_by(|a, b| map[*b].total_cmp(&map[*a]).then(a.cmp(b)));
    peaks.truncate(count);
    peaks
}

/// Largest value within `radius` cells of `(row, col)` (clamped at the edges).
pub fn local_max(map: &DMatrix<f64>, row: usize, col: usize, radius: usize) -> f64 {
    let (r, c) = map.shape();
    let mut best = f64::NEG_INFINITY;
    for i in row.saturating_sub(radius)..=(row + radius).min(r - 1) {
        for j in col.saturating_sub(radius)..=(col + radius).min(c - 1) {
            best = best.max(map[(i, j)]);
        }
    }
    best
}

/// Weakest target peak over the strongest cell outside every target's
/// neighbourhood, in dB.
pub fn peak_to_background_db(map: &DMatrix<f64>, cells: &[(usize, usize)], radius: usize) -> f64 {
    let peak = cells.iter().map(|&(r, c)| local_max(map, r, c, radius)).fold(f64::INFINITY, f64::min);
    let mut background: f64 = 0.0;
    for i in 0..map.nrows() {
        for j in 0..map.ncols() {
            let near = cells.iter().any(|&(r, c)| i.abs_diff(r) <= radius && j.abs_diff(c) <= radius);
            if !near {
                background = background.max(map[(i, j)]);
            }
        }
    }
    10.0 * (peak / background).log10()
}

/// Axes shared by the RA and RV maps.
#[derive(Clone, Debug, PartialEq)]
pub struct MapAxes {
    /// Range of each RA row / RV column, metres.
    pub range_m: Vec<f64>,
    /// `sin θ` of each RA column.
    pub angle_sine: Vec<f64>,
    /// Radial velocity of each RV row, m/s.
    pub velocity_mps: Vec<f64>,
    pub range_step: f64,
    pub velocity_step: f64,
}

impl MapAxes {
    pub fn new(range_bins: usize, angle_points: usize, velocity_bins: usize, spacing_hz: f64, symbol_time: f64, wavelength: f64) -> Self {
        let range_step = SPEED_OF_LIGHT / (2.0 * spacing_hz * range_bins as f64);
        let velocity_step = wavelength / (2.0 * velocity_bins as f64 * symbol_time);
        let half = (velocity_bins / 2) as f64;
        Self {
            range_m: (0..range_bins).map(|k| k as f64 * range_step).collect(),
            angle_sine: sine_grid(angle_points),
            velocity_mps: (0..velocity_bins).map(|k| (k as f64 - half) * velocity_step).collect(),
            range_step,
            velocity_step,
        }
    }

    pub fn range_bin(&self, range_m: f64) -> usize {
        let n = self.range_m.len();
        ((range_m / self.range_step).round() as i64).rem_euclid(n as i64) as usize
    }

    pub fn angle_cell(&self, angle_rad: f64) -> usize {
        let n = self.angle_sine.len();
        (((angle_rad.sin() + 1.0) * n as f64 / 2.0).round() as i64).rem_euclid(n as i64) as usize
    }

    pub fn velocity_bin(&self, velocity_mps: f64) -> usize {
        let n = self.velocity_mps.len();
        ((velocity_mps / self.velocity_step).round() as i64 + (n / 2) as i64).rem_euclid(n as i64) as usize
    }
}

/// Range–angle and range–velocity maps of one stream, raw and post-processed.
#[derive(Clone, Debug)]
pub struct RadarMaps {
    pub stream: usize,
    pub axes: MapAxes,
    pub ra: DMatrix<f64>,
    pub rv: DMatrix<f64>,
    pub ra_post: DMatrix<f64>,
    pub rv_post: DMatrix<f64>,
    pub sv_fraction: f64,
    pub kaiser_order: Option<f64>,
    pub gaps: usize,
}

/// Options for [`compute_maps`].
#[derive(Clone, Debug)]
pub struct MapOptions {
    pub stream: usize,
    pub range_padding: usize,
    pub velocity_padding: usize,
    pub angle_points: usize,
    pub signal_dim: usize,
    pub sv_fraction: f64,
    pub kaiser_order: Option<f64>,
    pub gap_tol: f64,
    pub spacing_hz: f64,
    pub symbol_time: f64,
    pub wavelength: f64,
}

/// Matched filter → range profiles → RA/RV maps → post-processing, for
/// already-whitened observation and symbol cubes.
pub fn compute_maps(y: &ComplexTensor3, x: &ComplexTensor3, opts: &MapOptions) -> Result<RadarMaps> {
    let mf = matched_filter(y, x, opts.stream, opts.gap_tol)?;
    let profiles = range_profiles(&mf.phi, opts.range_padding)?;
    let axes = MapAxes::new(opts.range_padding, opts.angle_points, opts.velocity_padding, opts.spacing_hz, opts.symbol_time, opts.wavelength);
    let (ra, best) = range_angle_map(&profiles, &axes.angle_sine, opts.signal_dim)?;
    let rv = range_velocity_map(&profiles, &best, opts.velocity_padding)?;
    Ok(RadarMaps {
        stream: opts.stream,
        ra_post: postprocess_map(&ra, opts.sv_fraction, opts.kaiser_order, RangeAxis::Rows),
        rv_post: postprocess_map(&rv, opts.sv_fraction, opts.kaiser_order, RangeAxis::Columns),
        axes,
        ra,
        rv,
        sv_fraction: opts.sv_fraction,
        kaiser_order: opts.kaiser_order,
        gaps: mf.gaps.len(),
    })
}

/// Phase ramp used by tests and examples: `e^{j2π k v / V'}` puts a
/// frequency-flat response into range bin `k`.
pub fn range_bin_ramp(bin: f64, padded: usize, v: usize) -> Complex64 {
    linalg::cis(2.0 * PI * bin * v as f64 / padded as f64)
}
