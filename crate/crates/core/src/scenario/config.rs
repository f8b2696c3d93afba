//! Experiment configuration. Every quantity is stored in the unit it is
//! usually quoted in (dB, dBm, degrees); [`crate::scenario::Scenario`]
//! converts once to linear scale.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub run: RunConfig,
    pub array: ArrayConfig,
    pub ofdm: OfdmConfig,
    pub frame: FrameConfig,
    pub power: PowerConfig,
    pub ue: UeConfig,
    pub clutter: ClutterConfig,
    pub sensing: SensingConfig,
    pub processing: ProcessingConfig,
    pub tolerances: ToleranceConfig,
    pub targets: Vec<TargetConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Independent repetitions per sweep point.
    pub monte_carlo: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub bs_antennas: usize,
    pub ue_antennas: usize,
    pub ues: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmConfig {
    pub subcarriers: usize,
    pub symbols: usize,
    pub subcarrier_spacing_hz: f64,
    pub cyclic_prefix_s: f64,
    pub carrier_hz: f64,
    /// Subcarriers sharing one communication channel realisation.
    pub coherence_block: usize,
    /// Pilot subcarriers at the start of each coherence block.
    pub pilot_subcarriers: usize,
    /// Zero-padded DFT length along subcarriers (range profiles).
    pub range_padding: usize,
    /// Zero-padded DFT length along slots (velocity profiles).
    pub velocity_padding: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    /// Data slots between consecutive pilot slots.
    pub data_slots: usize,
    /// Earlier pilot slots used by the estimator.
    pub past_pilots: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub total_dbm: f64,
    /// Fraction of the budget given to communication streams.
    pub tradeoff: f64,
    pub ue_noise_db: f64,
    pub radar_noise_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub path_gain_db: f64,
    pub doppler_hz: f64,
    pub clusters: usize,
    pub angular_spread_deg: f64,
    /// Centre of the cluster angles seen from the BS.
    pub tx_center_deg: f64,
    /// Width of the interval holding the BS-side cluster angles.
    pub tx_separation_deg: f64,
    pub rx_center_deg: f64,
    pub rx_separation_deg: f64,
    pub rx_angular_spread_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterConfig {
    pub texture_db: f64,
    pub angles_deg: Vec<f64>,
    pub dopplers_hz: Vec<f64>,
    pub ranges_m: Vec<f64>,
    pub angular_spread_deg: f64,
    pub delay_spread_s: f64,
    pub coherent_symbols: f64,
    pub diffuse_decay: f64,
    pub diffuse_bandwidth_hz: f64,
    pub diffuse_power_db: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepGrid {
    /// Uniform in sin θ.
    Sine,
    /// Uniform in θ.
    Angle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingConfig {
    pub sweep_start_deg: f64,
    pub sweep_end_deg: f64,
    pub sweep_grid: SweepGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Whitening {
    None,
    Estimated,
    True,
}

impl std::str::FromStr for Whitening {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "estimated" => Ok(Self::Estimated),
            "true" => Ok(Self::True),
            other => Err(Error::Config(format!("unknown whitening mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessingConfig {
    pub angle_grid: usize,
    pub doppler_grid: usize,
    pub range_grid: usize,
    /// Angle cells of the range–angle map.
    pub map_angle_grid: usize,
    /// MUSIC signal dimension for the clutter searches; 0 means the patch count.
    pub clutter_subspace_dim: usize,
    /// MUSIC signal dimension per range bin; 0 means the target count.
    pub target_subspace_dim: usize,
    pub peak_threshold_db: f64,
    pub whitening: Whitening,
    pub sv_fraction: f64,
    /// Kaiser window shape along range at export; 0 disables it.
    pub kaiser_order: f64,
    /// Debug switch: leave targets out of the cube used for clutter estimation.
    pub exclude_targets_from_estimation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub hermitian: f64,
    pub psd: f64,
    pub projector_cutoff: f64,
    pub matched_filter_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub x_m: f64,
    pub y_m: f64,
    pub rcs_dbsm: f64,
    pub velocity_mps: f64,
}

impl TargetConfig {
    pub fn polar(range_m: f64, angle_deg: f64, rcs_dbsm: f64, velocity_mps: f64) -> Self {
        let a = angle_deg.to_radians();
        Self { x_m: range_m * a.cos(), y_m: range_m * a.sin(), rcs_dbsm, velocity_mps }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            other => Err(Error::Config(format!("unknown scale '{other}'"))),
        }
    }
}

impl Default for ScenarioConfig {
    /// Full-scale defaults together with the pinned reference geometry.
    fn default() -> Self {
        Self {
            run: RunConfig { seed: 1, monte_carlo: 15 },
            array: ArrayConfig { bs_antennas: 32, ue_antennas: 2, ues: 1 },
            ofdm: OfdmConfig {
                subcarriers: 1000,
                symbols: 1000,
                subcarrier_spacing_hz: 20e3,
                cyclic_prefix_s: 1e-6,
                carrier_hz: 2e9,
                coherence_block: 20,
                pilot_subcarriers: 3,
                range_padding: 3000,
                velocity_padding: 3000,
            },
            frame: FrameConfig { data_slots: 35, past_pilots: 6 },
            power: PowerConfig { total_dbm: 32.0, tradeoff: 0.5, ue_noise_db: -160.0, radar_noise_db: -160.0 },
            ue: UeConfig {
                path_gain_db: -70.0,
                doppler_hz: 100.0,
                clusters: 4,
                angular_spread_deg: 1.0,
                tx_center_deg: -60.0,
                tx_separation_deg: 6.0,
                rx_center_deg: 0.0,
                rx_separation_deg: 60.0,
                rx_angular_spread_deg: 5.0,
            },
            clutter: ClutterConfig {
                texture_db: -133.0,
                angles_deg: vec![-45.0, -15.0, 5.0, 62.0],
                dopplers_hz: vec![0.0, 80.0, -160.0, 520.0],
                ranges_m: vec![30.0, 60.0, 250.0, 400.0],
                angular_spread_deg: 2.0,
                delay_spread_s: 1e-9,
                coherent_symbols: 1000.0,
                diffuse_decay: 0.9,
                diffuse_bandwidth_hz: 50e3,
                diffuse_power_db: 0.0,
            },
            sensing: SensingConfig { sweep_start_deg: 10.0, sweep_end_deg: 50.0, sweep_grid: SweepGrid::Sine },
            processing: ProcessingConfig {
                angle_grid: 1024,
                doppler_grid: 1024,
                range_grid: 2048,
                map_angle_grid: 1024,
                clutter_subspace_dim: 0,
                target_subspace_dim: 0,
                peak_threshold_db: 6.0,
                whitening: Whitening::Estimated,
                sv_fraction: 0.8,
                kaiser_order: 3.0,
                exclude_targets_from_estimation: false,
            },
            tolerances: ToleranceConfig { hermitian: 1e-12, psd: 1e-10, projector_cutoff: 1e-10, matched_filter_gap: 1e-12 },
            targets: vec![TargetConfig::polar(100.0, 20.0, 5.0, 15.0), TargetConfig::polar(170.0, 40.0, 1.0, -30.0)],
        }
    }
}

impl ScenarioConfig {
    /// Desk-scale overrides: 16 BS antennas, 256 slots and subcarriers,
    /// 5 repetitions; zero padding keeps the factor of three.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.apply_scale(Scale::Desk);
        cfg
    }

    pub fn apply_scale(&mut self, scale: Scale) {
        if scale == Scale::Desk {
            self.array.bs_antennas = 16;
            self.ofdm.subcarriers = 256;
            self.ofdm.symbols = 256;
            self.ofdm.range_padding = 768;
            self.ofdm.velocity_padding = 768;
            self.run.monte_carlo = 5;
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration always serialises")
    }

    /// SHA-256 of the canonical serialisation.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    /// Set a value by dotted key (e.g. `power.tradeoff`). The key must exist.
    pub fn with_value(&self, key: &str, value: toml::Value) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| Error::Config(format!("unknown configuration key '{key}'")))?;
        }
        let value = match (&*slot, value) {
            // Integer sweep values are accepted for float keys and vice versa when exact.
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (toml::Value::Integer(_), toml::Value::Float(f)) if f.fract() == 0.0 => toml::Value::Integer(f as i64),
            (_, v) => v,
        };
        *slot = value;
        let cfg: Self = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn streams(&self) -> usize {
        self.array.ues * self.array.ue_antennas + 1
    }

    pub fn symbol_time(&self) -> f64 {
        1.0 / self.ofdm.subcarrier_spacing_hz + self.ofdm.cyclic_prefix_s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let a = &self.array;
        let o = &self.ofdm;
        if a.bs_antennas == 0 || a.ue_antennas == 0 || a.ues == 0 {
            return bad("antenna and UE counts must be positive".into());
        }
        if o.subcarriers == 0 || o.symbols == 0 || o.coherence_block == 0 {
            return bad("subcarriers, symbols and coherence block must be positive".into());
        }
        if o.pilot_subcarriers < self.streams() * a.ues {
            return bad(format!(
                "pilot length {} is shorter than streams·UEs = {}",
                o.pilot_subcarriers,
                self.streams() * a.ues
            ));
        }
        if o.pilot_subcarriers > o.coherence_block {
            return bad("pilot subcarriers do not fit in a coherence block".into());
        }
        if o.range_padding < o.subcarriers || o.velocity_padding < o.symbols {
            return bad("zero-padded lengths must be at least the unpadded ones".into());
        }
        if !(o.subcarrier_spacing_hz > 0.0 && o.carrier_hz > 0.0 && o.cyclic_prefix_s >= 0.0) {
            return bad("spacing and carrier must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.power.tradeoff) {
            return bad(format!("power tradeoff {} outside [0, 1]", self.power.tradeoff));
        }
        let c = &self.clutter;
        let n = c.angles_deg.len();
        if n == 0 || c.dopplers_hz.len() != n || c.ranges_m.len() != n {
            return bad("clutter angles, dopplers and ranges must be nonempty and equally long".into());
        }
        if self.ue.clusters == 0 {
            return bad("UE needs at least one cluster".into());
        }
        if self.processing.sv_fraction < 0.0 || self.processing.sv_fraction > 1.0 {
            return bad("sv_fraction outside [0, 1]".into());
        }
        if self.processing.angle_grid < 2 || self.processing.doppler_grid < 2 || self.processing.range_grid < 2 {
            return bad("search grids need at least two points".into());
        }
        if self.processing.map_angle_grid < 2 {
            return bad("map angle grid needs at least two points".into());
        }
        for t in &self.targets {
            if t.x_m.hypot(t.y_m) <= 0.0 {
                return bad("target at the array origin".into());
            }
        }
        Ok(())
    }
}
