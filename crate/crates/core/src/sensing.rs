//! End-to-end monostatic sensing: simulate one coherent processing interval
//! (downlink, target echoes, clutter, noise), then whiten and form maps.

use nalgebra::DMatrix;
use rand::Rng;

use crate::covariance::{sample_separable_clutter, ClutterCovariance};
use crate::downlink::{simulate_downlink, DownlinkRealisation};
use crate::linalg::ComplexTensor3;
use crate::radar::{
    compute_maps, estimate_clutter_covariances, map_peaks, ClutterSearch, EstimatedClutter,
    MapAxes, MapOptions, RadarMaps, Whitener, WhiteningModel,
};
use crate::scenario::{received_radar_cube, target_echo_cube, Scenario, Whitening};
use crate::Result;

/// Everything observed (and the ground truth behind it) in one interval.
#[derive(Clone, Debug)]
pub struct SensingScene {
    pub downlink: DownlinkRealisation,
    pub clutter_truth: ClutterCovariance,
    /// Echoes + clutter + noise, `[M, I, V]`.
    pub observation: ComplexTensor3,
    /// Clutter + noise only, for the estimation debug switch.
    pub interference: ComplexTensor3,
}

pub fn simulate_scene<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> Result<SensingScene> {
    let downlink = simulate_downlink(sc, rng)?;
    let clutter_truth = sc.clutter_covariance()?;
    let clutter = sample_separable_clutter(&clutter_truth, rng)?;
    let precoders = downlink.effective_precoders();
    let interference = received_radar_cube(sc, &[], &precoders, &downlink.symbols, Some(&clutter), sc.radar_noise, rng)?;
    let mut observation = target_echo_cube(sc, &sc.targets, &precoders, &downlink.symbols)?;
    observation.add_assign(&interference)?;
    Ok(SensingScene { downlink, clutter_truth, observation, interference })
}

/// Whitening operators, optional clutter estimate and per-stream maps.
#[derive(Clone, Debug)]
pub struct SensingOutcome {
    pub whitening: Whitening,
    pub whitener: Whitener,
    pub estimated: Option<EstimatedClutter>,
    pub maps: Vec<RadarMaps>,
}

pub fn map_options(sc: &Scenario, stream: usize) -> MapOptions {
    let p = &sc.cfg.processing;
    MapOptions {
        stream,
        range_padding: sc.cfg.ofdm.range_padding,
        velocity_padding: sc.cfg.ofdm.velocity_padding,
        angle_points: p.map_angle_grid,
        signal_dim: if p.target_subspace_dim == 0 { sc.targets.len().max(1) } else { p.target_subspace_dim },
        sv_fraction: p.sv_fraction,
        kaiser_order: (p.kaiser_order > 0.0).then_some(p.kaiser_order),
        gap_tol: sc.cfg.tolerances.matched_filter_gap,
        spacing_hz: sc.spacing(),
        symbol_time: sc.symbol_time,
        wavelength: sc.wavelength,
    }
}

/// Fit the whitener for `mode`, apply it to observation and symbols alike,
/// and form maps for each requested stream.
pub fn process_scene(sc: &Scenario, scene: &SensingScene, mode: Whitening, streams: &[usize]) -> Result<SensingOutcome> {
    let [_, slots, subcarriers] = sc.cube_dims();
    let (whitener, estimated) = match mode {
        Whitening::None => (Whitener::identity(slots, subcarriers), None),
        Whitening::True => {
            (Whitener::fit(&WhiteningModel::from_truth(&scene.clutter_truth, sc.radar_noise))?, None)
        }
        Whitening::Estimated => {
            let source = if sc.cfg.processing.exclude_targets_from_estimation {
                &scene.interference
            } else {
                &scene.observation
            };
            let est = estimate_clutter_covariances(source, &ClutterSearch::from_scenario(sc))?;
            (Whitener::fit(&WhiteningModel::from_estimate(&est, sc.radar_noise))?, Some(est))
        }
    };
    let y = whitener.apply(&scene.observation)?;
    let x = whitener.apply(&scene.downlink.symbols)?;
    let maps = streams.iter().map(|&s| compute_maps(&y, &x, &map_options(sc, s))).collect::<Result<_>>()?;
    Ok(SensingOutcome { whitening: mode, whitener, estimated, maps })
}

/// Ground-truth map cells of one target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TargetCell {
    pub range_bin: usize,
    pub angle_cell: usize,
    pub velocity_bin: usize,
}

pub fn target_cells(sc: &Scenario, axes: &MapAxes) -> Vec<TargetCell> {
    sc.targets
        .iter()
        .map(|t| TargetCell {
            range_bin: axes.range_bin(t.range),
            angle_cell: axes.angle_cell(t.angle),
            velocity_bin: axes.velocity_bin(t.velocity),
        })
        .collect()
}

/// How well one set of maps localises the configured targets.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalisationReport {
    pub truth: Vec<TargetCell>,
    /// Strongest RA local maxima (range bin, angle cell), as many as targets.
    pub ra_peaks: Vec<(usize, usize)>,
    /// Strongest RV local maximum (velocity bin, range bin) within each
    /// target's range neighbourhood.
    pub rv_peaks: Vec<(usize, usize)>,
    /// Each target matched by one of the global RA peaks (±1 bin, ±1 cell).
    pub ra_hit: Vec<bool>,
    /// RV peak within ±1 velocity bin.
    pub rv_hit: Vec<bool>,
    /// Weakest target peak over the strongest cell outside all target
    /// neighbourhoods on the post-processed RA map, dB.
    pub background_ratio_db: f64,
    /// Weakest target peak over the strongest clutter-ridge cell (columns
    /// within one beamwidth of a clutter patch, outside target
    /// neighbourhoods) on the post-processed RA map, dB.
    pub ridge_ratio_db: f64,
}

impl LocalisationReport {
    pub fn all_found(&self) -> bool {
        self.ra_hit.iter().chain(&self.rv_hit).all(|&h| h)
    }
}

/// Half-widths (range bins, angle cells) of the neighbourhood a target's
/// mainlobe occupies: one zero-padding factor in range, one array
/// beamwidth in angle.
pub fn target_neighbourhood(sc: &Scenario) -> (usize, usize) {
    let range = sc.cfg.ofdm.range_padding.div_ceil(sc.subcarriers());
    let angle = sc.cfg.processing.map_angle_grid.div_ceil(sc.bs_antennas());
    (range, angle)
}

fn circular_gap(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

fn excluded_background(
    map: &DMatrix<f64>,
    cells: &[(usize, usize)],
    radius: (usize, usize),
    columns: impl Fn(usize) -> bool,
) -> f64 {
    let mut background: f64 = 0.0;
    for r in 0..map.nrows() {
        for c in (0..map.ncols()).filter(|&c| columns(c)) {
            let near = cells.iter().any(|&(tr, tc)| r.abs_diff(tr) <= radius.0 && c.abs_diff(tc) <= radius.1);
            if !near {
                background = background.max(map[(r, c)]);
            }
        }
    }
    background
}

/// Score the post-processed maps of one stream against the configured targets.
pub fn localisation_report(sc: &Scenario, maps: &RadarMaps) -> LocalisationReport {
    let truth = target_cells(sc, &maps.axes);
    let ra = &maps.ra_post;
    let rv = &maps.rv_post;
    let n_range = ra.nrows();
    let ra_peaks = map_peaks(ra, truth.len());
    let ra_hit = truth
        .iter()
        .map(|t| {
            ra_peaks
                .iter()
                .any(|&(r, a)| circular_gap(r, t.range_bin, n_range) <= 1 && a.abs_diff(t.angle_cell) <= 1)
        })
        .collect();
    let rv_peaks: Vec<(usize, usize)> = truth
        .iter()
        .map(|t| {
            let mut best = (0, t.range_bin);
            let mut value = f64::NEG_INFINITY;
            for dr in -1i64..=1 {
                let c = (t.range_bin as i64 + dr).rem_euclid(n_range as i64) as usize;
                for j in 0..rv.nrows() {
                    if rv[(j, c)] > value {
                        value = rv[(j, c)];
                        best = (j, c);
                    }
                }
            }
            best
        })
        .collect();
    let rv_hit = truth
        .iter()
        .zip(&rv_peaks)
        .map(|(t, &(j, _))| circular_gap(j, t.velocity_bin, rv.nrows()) <= 1)
        .collect();
    let cells: Vec<(usize, usize)> = truth.iter().map(|t| (t.range_bin, t.angle_cell)).collect();
    let radius = target_neighbourhood(sc);
    let peak = cells.iter().map(|&(r, c)| crate::radar::local_max(ra, r, c, 1)).fold(f64::INFINITY, f64::min);
    let background = excluded_background(ra, &cells, radius, |_| true);
    let ridge = excluded_background(ra, &cells, radius, clutter_columns(sc, &maps.axes));
    LocalisationReport {
        truth,
        ra_peaks,
        rv_peaks,
        ra_hit,
        rv_hit,
        background_ratio_db: 10.0 * (peak / background).log10(),
        ridge_ratio_db: 10.0 * (peak / ridge).log10(),
    }
}

/// Predicate for RA columns within one beamwidth of a clutter patch angle.
pub fn clutter_columns(sc: &Scenario, axes: &MapAxes) -> impl Fn(usize) -> bool {
    let centres: Vec<usize> = sc.clutter_clusters.angles.iter().map(|&a| axes.angle_cell(a)).collect();
    let width = target_neighbourhood(sc).1;
    move |c| centres.iter().any(|&k| c.abs_diff(k) <= width)
}

/// Target-peak-to-clutter-ridge ratio of the raw (unprocessed) RA map, dB.
pub fn raw_ridge_ratio_db(sc: &Scenario, maps: &RadarMaps) -> f64 {
    let truth = target_cells(sc, &maps.axes);
    let cells: Vec<(usize, usize)> = truth.iter().map(|t| (t.range_bin, t.angle_cell)).collect();
    let peak = cells.iter().map(|&(r, c)| crate::radar::local_max(&maps.ra, r, c, 1)).fold(f64::INFINITY, f64::min);
    let ridge = excluded_background(&maps.ra, &cells, target_neighbourhood(sc), clutter_columns(sc, &maps.axes));
    10.0 * (peak / ridge).log10()
}
