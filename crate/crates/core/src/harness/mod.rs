//! Experiment driver: sweeps over configuration keys, deterministic
//! per-point seeding, one grid file per sweep point and a JSON manifest
//! written last.

pub mod grid;

pub use grid::{Grid, GridAxis};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::downlink::frame_nmse_curve;
use crate::radar::{estimate_clutter_covariances, nmse_db, ClutterSearch, RadarMaps};
use crate::scenario::{linear_to_db, Scenario, ScenarioConfig, Whitening};
use crate::sensing::{localisation_report, process_scene, simulate_scene};
use crate::{Error, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    NmseSurface,
    NmseFrame,
    ClutterNmse,
    RadarMaps,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Self::NmseSurface, Self::NmseFrame, Self::ClutterNmse, Self::RadarMaps];

    pub fn id(self) -> &'static str {
        match self {
            Self::NmseSurface => "nmse-surface",
            Self::NmseFrame => "nmse-frame",
            Self::ClutterNmse => "clutter-nmse",
            Self::RadarMaps => "radar-maps",
        }
    }

    /// Sweeps used when none are given.
    pub fn default_sweeps(self) -> Vec<SweepAxis> {
        let floats = |key: &str, v: &[f64]| SweepAxis::new(key, v.iter().map(|&x| toml::Value::Float(x)).collect());
        let ints = |key: &str, v: &[i64]| SweepAxis::new(key, v.iter().map(|&x| toml::Value::Integer(x)).collect());
        match self {
            Self::NmseSurface => vec![floats("power.tradeoff", &[0.05, 0.5, 0.95])],
            Self::NmseFrame => vec![
                ints("frame.data_slots", &[10, 35]),
                floats("ue.doppler_hz", &[50.0, 100.0, 500.0]),
                ints("frame.past_pilots", &[0, 2, 6]),
            ],
            Self::ClutterNmse => vec![floats("clutter.diffuse_power_db", &[-10.0, -5.0, 0.0, 5.0, 10.0])],
            Self::RadarMaps => vec![floats("power.tradeoff", &[0.05, 0.5, 0.95])],
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.id() == s || (s == "clutter-nmse-sweep" && *e == Self::ClutterNmse))
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// One swept configuration key and its values.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

impl SweepAxis {
    pub fn new(key: &str, values: Vec<toml::Value>) -> Self {
        Self { key: key.into(), values }
    }

    /// Parse `key=v1,v2,…`; each value is read as a TOML literal.
    pub fn parse(spec: &str) -> Result<Self> {
        let (key, list) = spec.split_once('=').ok_or_else(|| Error::Config(format!("sweep '{spec}' must be key=v1,v2,…")))?;
        let values = list
            .split(',')
            .map(|v| {
                let doc: toml::Table = format!("v = {}", v.trim())
                    .parse()
                    .map_err(|e: toml::de::Error| Error::Config(format!("sweep value '{v}': {e}")))?;
                Ok(doc["v"].clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(key.trim(), values))
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub base: ScenarioConfig,
    pub sweeps: Vec<SweepAxis>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Modes for radar maps; ignored by the other experiments.
    pub whitening: Vec<Whitening>,
}

/// One point of the sweep product.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub label: String,
    pub assignments: Vec<(String, String)>,
    pub config: ScenarioConfig,
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, base: ScenarioConfig, out_dir: impl Into<PathBuf>) -> Self {
        let seeds = vec![base.run.seed];
        let whitening = vec![base.processing.whitening];
        Self { experiment, sweeps: experiment.default_sweeps(), base, seeds, out_dir: out_dir.into(), whitening }
    }

    /// Every sweep key must exist and every value must give a valid config.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.whitening.is_empty() {
            return Err(Error::Config("at least one whitening mode is required".into()));
        }
        for axis in &self.sweeps {
            if axis.values.is_empty() {
                return Err(Error::Config(format!("sweep '{}' has no values", axis.key)));
            }
            for v in &axis.values {
                self.base.with_value(&axis.key, v.clone())?;
            }
        }
        Ok(())
    }

    /// Cartesian product of the sweeps, first axis slowest.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        self.validate()?;
        let mut points = vec![(Vec::<(String, String)>::new(), self.base.clone())];
        for axis in &self.sweeps {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for (assign, cfg) in &points {
                for v in &axis.values {
                    let mut a = assign.clone();
                    a.push((axis.key.clone(), value_label(v)));
                    next.push((a, cfg.with_value(&axis.key, v.clone())?));
                }
            }
            points = next;
        }
        Ok(points
            .into_iter()
            .enumerate()
            .map(|(index, (assignments, config))| {
                let label = if assignments.is_empty() {
                    "base".to_string()
                } else {
                    assignments.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
                };
                SweepPoint { index, label, assignments, config }
            })
            .collect())
    }
}

/// Seed for one unit of work, independent of scheduling order.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn rng_for(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputRecord {
    /// Path relative to the experiment directory.
    pub file: String,
    pub sha256: String,
    pub point: BTreeMap<String, String>,
    pub summary: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub code_version: String,
    pub sweeps: Vec<String>,
    pub files: Vec<OutputRecord>,
}

fn file_name(parts: &[&str]) -> String {
    let joined = parts.join("__");
    let clean: String = joined
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._=,-".contains(c) { c } else { '_' })
        .collect();
    format!("{clean}.grid")
}

fn write_grid(dir: &Path, name: String, grid: &Grid, point: BTreeMap<String, String>, summary: BTreeMap<String, f64>) -> Result<OutputRecord> {
    let text = grid.to_text();
    std::fs::write(dir.join(&name), &text)?;
    Ok(OutputRecord { file: name, sha256: hex::encode(Sha256::digest(text.as_bytes())), point, summary })
}

fn point_map(p: &SweepPoint, extra: &[(&str, String)]) -> BTreeMap<String, String> {
    p.assignments.iter().cloned().chain(extra.iter().map(|(k, v)| (k.to_string(), v.clone()))).collect()
}

/// Run an experiment, write its files and the manifest, and return the manifest.
pub fn run(spec: &ExperimentSpec) -> Result<Manifest> {
    let points = spec.points()?;
    let dir = spec.out_dir.join(spec.experiment.id());
    std::fs::create_dir_all(&dir)?;
    let per_point: Vec<Vec<OutputRecord>> = match spec.experiment {
        Experiment::NmseSurface => points.par_iter().map(|p| nmse_surface_point(&dir, p)).collect::<Result<_>>()?,
        Experiment::NmseFrame => points.par_iter().map(|p| nmse_frame_point(&dir, p)).collect::<Result<_>>()?,
        Experiment::ClutterNmse => {
            points.par_iter().map(|p| clutter_nmse_point(&dir, p, &spec.seeds)).collect::<Result<_>>()?
        }
        Experiment::RadarMaps => {
            let tasks: Vec<(&SweepPoint, Whitening, u64)> = points
                .iter()
                .flat_map(|p| spec.whitening.iter().flat_map(move |&w| spec.seeds.iter().map(move |&s| (p, w, s))))
                .collect();
            tasks.par_iter().map(|&(p, w, s)| radar_maps_point(&dir, p, w, s, spec.seeds.len() > 1)).collect::<Result<_>>()?
        }
    };
    let mut files: Vec<OutputRecord> = per_point.into_iter().flatten().collect();
    files.sort_by(|a, b| a.file.cmp(&b.file));
    let manifest = Manifest {
        experiment: spec.experiment,
        config_hash: spec.base.hash(),
        seeds: spec.seeds.clone(),
        code_version: CODE_VERSION.into(),
        sweeps: spec
            .sweeps
            .iter()
            .map(|a| format!("{}={}", a.key, a.values.iter().map(value_label).collect::<Vec<_>>().join(",")))
            .collect(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

/// Frame lengths and pilot counts spanned by each NMSE surface.
pub const SURFACE_DATA_SLOTS: (usize, usize, usize) = (0, 5, 11);
pub const SURFACE_PAST_PILOTS: usize = 7;

fn nmse_surface_point(dir: &Path, p: &SweepPoint) -> Result<Vec<OutputRecord>> {
    let (start, step, count) = SURFACE_DATA_SLOTS;
    let mut values = DMatrix::zeros(count, SURFACE_PAST_PILOTS);
    for r in 0..count {
        for c in 0..SURFACE_PAST_PILOTS {
            let mut cfg = p.config.clone();
            cfg.frame.data_slots = start + r * step;
            cfg.frame.past_pilots = c;
            let curve = frame_nmse_curve(&Scenario::new(cfg)?)?;
            values[(r, c)] = curve.iter().sum::<f64>() / curve.len() as f64;
        }
    }
    let grid = Grid::new(
        "mean frame NMSE",
        GridAxis::new("data_slots", "slots", start as f64, step as f64, count),
        GridAxis::new("past_pilots", "pilots", 0.0, 1.0, SURFACE_PAST_PILOTS),
        values.clone(),
    )?;
    let summary = BTreeMap::from([
        ("min".to_string(), values.min()),
        ("max".to_string(), values.max()),
    ]);
    Ok(vec![write_grid(dir, file_name(&[&p.label]), &grid, point_map(p, &[]), summary)?])
}

fn nmse_frame_point(dir: &Path, p: &SweepPoint) -> Result<Vec<OutputRecord>> {
    let sc = Scenario::new(p.config.clone())?;
    let curve = frame_nmse_curve(&sc)?;
    let mut block = p.config.clone();
    block.frame.past_pilots = 0;
    let reference = frame_nmse_curve(&Scenario::new(block)?)?[0];
    let n = curve.len();
    let values = DMatrix::from_fn(n, 2, |i, c| if c == 0 { curve[i] } else { reference });
    let grid = Grid::new(
        "NMSE along the frame (aging-aware, block fading)",
        GridAxis::new("slot", "slots", 0.0, 1.0, n),
        GridAxis::new("curve", "index", 0.0, 1.0, 2),
        values,
    )?;
    let summary = BTreeMap::from([
        ("first".to_string(), curve[0]),
        ("last".to_string(), curve[n - 1]),
        ("block_fading".to_string(), reference),
        ("max_rise".to_string(), curve.iter().cloned().fold(0.0, f64::max) / curve[0] - 1.0),
    ]);
    Ok(vec![write_grid(dir, file_name(&[&p.label]), &grid, point_map(p, &[]), summary)?])
}

/// NMSEs (linear) of one clutter estimate: space, time, frequency, coherent frequency.
pub fn clutter_nmse_once(sc: &Scenario, seed: u64, parts: &[&str]) -> Result<[f64; 4]> {
    let mut rng = rng_for(seed, parts);
    let scene = simulate_scene(sc, &mut rng)?;
    let source = if sc.cfg.processing.exclude_targets_from_estimation { &scene.interference } else { &scene.observation };
    let est = estimate_clutter_covariances(source, &ClutterSearch::from_scenario(sc))?;
    let t = &scene.clutter_truth;
    let lin = |e, tr| 10f64.powf(nmse_db(e, tr) / 10.0);
    Ok([
        lin(&est.space, &t.space),
        lin(&est.time, &t.time),
        lin(&est.frequency, &t.frequency.total()),
        lin(&est.frequency, &t.frequency.coherent),
    ])
}

pub const CLUTTER_SERIES: [&str; 4] = ["space", "time", "frequency", "frequency_coherent"];

fn clutter_nmse_point(dir: &Path, p: &SweepPoint, seeds: &[u64]) -> Result<Vec<OutputRecord>> {
    let sc = Scenario::new(p.config.clone())?;
    let cubes = p.config.run.monte_carlo.max(1);
    let mut rows = Vec::with_capacity(seeds.len() * cubes);
    for &seed in seeds {
        for c in 0..cubes {
            rows.push(clutter_nmse_once(&sc, seed, &[&p.label, &c.to_string()])?);
        }
    }
    let values = DMatrix::from_fn(rows.len(), 4, |r, c| rows[r][c]);
    let grid = Grid::new(
        "clutter covariance NMSE per cube (space, time, frequency, coherent frequency)",
        GridAxis::new("cube", "index", 0.0, 1.0, rows.len()),
        GridAxis::new("series", "index", 0.0, 1.0, 4),
        values.clone(),
    )?;
    let summary = CLUTTER_SERIES
        .iter()
        .enumerate()
        .map(|(k, name)| (format!("{name}_db"), linear_to_db(values.column(k).mean())))
        .collect();
    Ok(vec![write_grid(dir, file_name(&[&p.label]), &grid, point_map(p, &[]), summary)?])
}

fn whitening_label(w: Whitening) -> &'static str {
    match w {
        Whitening::None => "none",
        Whitening::Estimated => "estimated",
        Whitening::True => "true",
    }
}

fn map_grids(maps: &RadarMaps) -> Result<[(&'static str, Grid); 4]> {
    let a = &maps.axes;
    let range = GridAxis::new("range", "m", 0.0, a.range_step, a.range_m.len());
    let angle = GridAxis::new("sin_theta", "1", -1.0, 2.0 / a.angle_sine.len() as f64, a.angle_sine.len());
    let velocity = GridAxis::new("velocity", "m/s", a.velocity_mps[0], a.velocity_step, a.velocity_mps.len());
    let ra = |title: &str, m: &DMatrix<f64>| Grid::new(title, range.clone(), angle.clone(), m.clone());
    let rv = |title: &str, m: &DMatrix<f64>| Grid::new(title, velocity.clone(), range.clone(), m.clone());
    Ok([
        ("ra", ra("range-angle MUSIC map", &maps.ra)?),
        ("ra_post", ra("range-angle map after SV subtraction and Kaiser taper", &maps.ra_post)?),
        ("rv", rv("range-velocity map", &maps.rv)?),
        ("rv_post", rv("range-velocity map after SV subtraction and Kaiser taper", &maps.rv_post)?),
    ])
}

fn radar_maps_point(dir: &Path, p: &SweepPoint, mode: Whitening, seed: u64, tag_seed: bool) -> Result<Vec<OutputRecord>> {
    let sc = Scenario::new(p.config.clone())?;
    let wl = whitening_label(mode);
    let seed_tag = format!("seed={seed}");
    let mut rng = rng_for(seed, &[&p.label]);
    let scene = simulate_scene(&sc, &mut rng)?;
    let streams: Vec<usize> = (0..sc.streams()).collect();
    let out = process_scene(&sc, &scene, mode, &streams)?;
    let mut records = Vec::new();
    for maps in &out.maps {
        let stream = maps.stream.to_string();
        let mut summary = BTreeMap::new();
        if maps.stream == sc.streams() - 1 {
            let r = localisation_report(&sc, maps);
            summary.insert("ridge_ratio_db".to_string(), r.ridge_ratio_db);
            summary.insert("background_ratio_db".to_string(), r.background_ratio_db);
            summary.insert("targets_found".to_string(), if r.all_found() { 1.0 } else { 0.0 });
        }
        for (kind, grid) in map_grids(maps)? {
            let mut parts = vec![p.label.as_str(), wl];
            if tag_seed {
                parts.push(&seed_tag);
            }
            let stream_tag = format!("stream={stream}");
            parts.push(&stream_tag);
            parts.push(kind);
            let point = point_map(p, &[("whitening", wl.into()), ("seed", seed.to_string()), ("stream", stream.clone()), ("map", kind.into())]);
            records.push(write_grid(dir, file_name(&parts), &grid, point, summary.clone())?);
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::desk();
        cfg.array.bs_antennas = 8;
        cfg.ofdm.subcarriers = 40;
        cfg.ofdm.symbols = 24;
        cfg.ofdm.range_padding = 120;
        cfg.ofdm.velocity_padding = 72;
        cfg.frame.data_slots = 7;
        cfg.frame.past_pilots = 2;
        cfg.processing.map_angle_grid = 32;
        cfg.processing.angle_grid = 128;
        cfg.processing.doppler_grid = 128;
        cfg.processing.range_grid = 256;
        cfg.run.monte_carlo = 2;
        cfg
    }

    #[test]
    fn experiment_ids_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.id().parse::<Experiment>().unwrap(), e);
        }
        assert_eq!("clutter-nmse-sweep".parse::<Experiment>().unwrap(), Experiment::ClutterNmse);
        assert!("nmse".parse::<Experiment>().is_err());
    }

    #[test]
    fn sweep_parsing_and_validation() {
        let a = SweepAxis::parse("power.tradeoff=0.1, 0.9").unwrap();
        assert_eq!(a.values, vec![toml::Value::Float(0.1), toml::Value::Float(0.9)]);
        let w = SweepAxis::parse("processing.whitening=\"true\",\"none\"").unwrap();
        assert_eq!(w.values[0], toml::Value::String("true".into()));
        assert!(SweepAxis::parse("no_equals").is_err());
        let mut spec = ExperimentSpec::new(Experiment::NmseFrame, tiny(), "unused");
        spec.sweeps = vec![SweepAxis::parse("power.no_such_key=1").unwrap()];
        assert!(spec.validate().is_err());
        spec.sweeps = vec![SweepAxis::parse("power.tradeoff=1.5").unwrap()];
        assert!(spec.validate().is_err());
        spec.sweeps = vec![a, SweepAxis::parse("frame.past_pilots=0,1,2").unwrap()];
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[4].label, "power.tradeoff=0.9,frame.past_pilots=1");
        assert_eq!(pts[4].config.frame.past_pilots, 1);
        assert_eq!(pts[4].config.power.tradeoff, 0.9);
    }

    #[test]
    fn derived_seeds_depend_on_every_part() {
        let a = derive_seed(1, &["x", "0"]);
        assert_ne!(a, derive_seed(2, &["x", "0"]));
        assert_ne!(a, derive_seed(1, &["x", "1"]));
        assert_ne!(derive_seed(1, &["ab", "c"]), derive_seed(1, &["a", "bc"]));
        assert_eq!(a, derive_seed(1, &["x", "0"]));
    }

    #[test]
    fn nmse_frame_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = ExperimentSpec::new(Experiment::NmseFrame, tiny(), dir.path());
        spec.sweeps = vec![SweepAxis::parse("ue.doppler_hz=50.0,500.0").unwrap()];
        let m = run(&spec).unwrap();
        assert_eq!(m.files.len(), 2);
        let g = Grid::read(&dir.path().join("nmse-frame").join(&m.files[0].file)).unwrap();
        assert_eq!(g.values.shape(), (8, 2));
        assert!(g.values.column(1).iter().all(|&v| v == g.values[(0, 1)]));
        let text = std::fs::read_to_string(dir.path().join("nmse-frame/manifest.json")).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(json["experiment"], "nmse-frame");
        assert_eq!(json["files"].as_array().unwrap().len(), 2);
        assert_eq!(json["config_hash"], spec.base.hash());
    }

    #[test]
    fn nmse_surface_grid_shape() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = ExperimentSpec::new(Experiment::NmseSurface, tiny(), dir.path());
        spec.sweeps = vec![SweepAxis::parse("power.tradeoff=0.05,0.95").unwrap()];
        let m = run(&spec).unwrap();
        let low = Grid::read(&dir.path().join("nmse-surface").join(&m.files[0].file)).unwrap();
        let high = Grid::read(&dir.path().join("nmse-surface").join(&m.files[1].file)).unwrap();
        assert_eq!(low.values.shape(), (SURFACE_DATA_SLOTS.2, SURFACE_PAST_PILOTS));
        // More communication power gives lower NMSE everywhere.
        assert!(low.values.iter().zip(high.values.iter()).all(|(l, h)| h < l));
    }

    #[test]
    fn clutter_and_radar_runs_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        for exp in [Experiment::ClutterNmse, Experiment::RadarMaps] {
            let mut spec = ExperimentSpec::new(exp, tiny(), dir.path().join("a"));
            spec.sweeps = vec![SweepAxis::parse("power.tradeoff=0.5").unwrap()];
            spec.whitening = vec![Whitening::None, Whitening::True];
            let a = run(&spec).unwrap();
            spec.out_dir = dir.path().join("b");
            let b = run(&spec).unwrap();
            assert_eq!(a, b);
            for f in &a.files {
                let pa = dir.path().join("a").join(exp.id()).join(&f.file);
                let pb = dir.path().join("b").join(exp.id()).join(&f.file);
                assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
            }
        }
        let maps = std::fs::read_dir(dir.path().join("a/radar-maps")).unwrap().count();
        // 2 modes × 3 streams × 4 maps + manifest.
        assert_eq!(maps, 25);
    }
}
