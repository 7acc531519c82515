//! Simulation configuration, presets and validation.
//!
//! Configuration files are TOML tables whose keys are the [`SimConfig`] field
//! names. A file only needs the keys it overrides; everything else comes from
//! the selected [`Preset`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::PathlossParams;
use crate::error::{Result, SimError};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// UMi rows of the path-loss parameter table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathlossProfile {
    StreetCanyon,
    OpenSquare,
}

impl PathlossProfile {
    /// `(n, sigma_db)` for the LOS and NLOS rows.
    pub fn exponents(self) -> ((f64, f64), (f64, f64)) {
        match self {
            PathlossProfile::StreetCanyon => ((1.98, 3.1), (3.19, 8.2)),
            PathlossProfile::OpenSquare => ((2.89, 7.1), (1.73, 3.02)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Full-size deployment: 250 m square, 100 APs, 60 trials.
    Paper,
    /// Small deployment for quick runs and CI.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(SimError::Config(format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub area_side_m: f64,
    /// Number of access points (M).
    pub num_aps: usize,
    /// Number of mobile stations (K).
    pub num_users: usize,
    /// Antennas per AP (N_AP).
    pub ap_antennas: usize,
    /// Antennas per MS (N_MS).
    pub ms_antennas: usize,
    /// Multiplexing order (P), also the number of RF chains per AP in hybrid mode.
    pub streams: usize,
    /// MSs served per AP in user-centric mode.
    pub users_per_ap: usize,
    /// In user-centric mode, zero-force toward every MS instead of only the
    /// served ones. Power is still shared among the served MSs only.
    pub uc_null_all_users: bool,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    /// Pilot length in samples.
    pub pilot_length: usize,
    /// Coherence length in samples.
    pub coherence_length: usize,
    pub pilot_power_w: f64,
    /// Apply an independent random sign to every pilot sample column of
    /// each user, so cross-user pilot correlation is random rather than 0 or 1.
    pub pilot_scrambling: bool,
    /// Reference uplink data power. Sweeps replace it with each grid point.
    pub ul_data_power_w: f64,
    /// Transmit-power grid in dBW, shared by downlink (per-AP power) and
    /// uplink (per-MS power).
    pub dl_power_grid_dbw: Vec<f64>,
    pub cluster_density_per_sqm: f64,
    pub rays_per_cluster: usize,
    /// Excess path length budget of the gating ellipse.
    pub ellipse_excess_m: f64,
    /// Per-axis standard deviation of a ray around its cluster center.
    pub ray_spread_m: f64,
    /// ULA element spacing in wavelengths.
    pub element_spacing: f64,
    pub pathloss_profile: PathlossProfile,
    pub pathloss_b: f64,
    pub pathloss_c: f64,
    pub f0_ref_hz: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub hybrid_max_iters: usize,
    pub hybrid_tol: f64,
    /// Serving schemes to evaluate, by registry name.
    pub schemes: Vec<String>,
    /// CSI sources to evaluate, by registry name.
    pub csi_modes: Vec<String>,
    /// Beamforming architectures to evaluate, by registry name.
    pub beamformers: Vec<String>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

impl SimConfig {
    pub fn preset(preset: Preset) -> Self {
        let paper = SimConfig {
            area_side_m: 250.0,
            num_aps: 100,
            num_users: 5,
            ap_antennas: 16,
            ms_antennas: 8,
            streams: 2,
            users_per_ap: 1,
            uc_null_all_users: false,
            carrier_hz: 73e9,
            bandwidth_hz: 200e6,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 6.0,
            pilot_length: 128,
            coherence_length: 1024,
            pilot_power_w: 0.1,
            pilot_scrambling: true,
            ul_data_power_w: 1.0,
            dl_power_grid_dbw: (-30..=30).step_by(5).map(f64::from).collect(),
            cluster_density_per_sqm: 0.4,
            rays_per_cluster: 3,
            ellipse_excess_m: 30.0,
            ray_spread_m: 2.0,
            element_spacing: 0.5,
            pathloss_profile: PathlossProfile::OpenSquare,
            pathloss_b: 0.0,
            pathloss_c: SPEED_OF_LIGHT,
            f0_ref_hz: 73e9,
            trials: 60,
            master_seed: 1,
            hybrid_max_iters: 100,
            hybrid_tol: 1e-4,
            schemes: vec!["CF".into(), "UC".into()],
            csi_modes: vec!["PCSI".into(), "ICSI".into()],
            beamformers: vec!["FD".into(), "HY".into()],
        };
        match preset {
            Preset::Paper => paper,
            Preset::Desk => SimConfig {
                area_side_m: 100.0,
                num_aps: 20,
                num_users: 4,
                trials: 10,
                ..paper
            },
        }
    }

    /// Heavily loaded variant of the full preset (K = 20, N = 3).
    pub fn paper_heavy() -> Self {
        SimConfig {
            num_users: 20,
            users_per_ap: 3,
            ..Self::preset(Preset::Paper)
        }
    }

    /// Parses a TOML document on top of `base`.
    pub fn from_toml_str(text: &str, base: &SimConfig) -> Result<Self> {
        let overrides: toml::Table = toml::from_str(text)?;
        let mut merged =
            toml::Table::try_from(base).map_err(|e| SimError::Config(format!("cannot serialize base config: {e}")))?;
        for (key, value) in overrides {
            merged.insert(key, value);
        }
        let cfg: SimConfig = merged.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: impl AsRef<Path>, base: &SimConfig) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("SimConfig is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(SimError::Config(msg));
        let counts = [
            ("num_aps", self.num_aps),
            ("num_users", self.num_users),
            ("ap_antennas", self.ap_antennas),
            ("ms_antennas", self.ms_antennas),
            ("streams", self.streams),
            ("users_per_ap", self.users_per_ap),
            ("pilot_length", self.pilot_length),
            ("coherence_length", self.coherence_length),
            ("rays_per_cluster", self.rays_per_cluster),
            ("trials", self.trials),
            ("hybrid_max_iters", self.hybrid_max_iters),
        ];
        for (name, v) in counts {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if !self.ms_antennas.is_multiple_of(self.streams) {
            return err(format!(
                "streams ({}) must divide ms_antennas ({})",
                self.streams, self.ms_antennas
            ));
        }
        if self.pilot_length >= self.coherence_length {
            return err(format!(
                "pilot_length ({}) must be shorter than coherence_length ({})",
                self.pilot_length, self.coherence_length
            ));
        }
        if !self.pilot_length.is_power_of_two() {
            return err(format!("pilot_length ({}) must be a power of two", self.pilot_length));
        }
        if self.streams > self.pilot_length {
            return err("streams must not exceed pilot_length".into());
        }
        if self.users_per_ap > self.num_users {
            return err(format!(
                "users_per_ap ({}) exceeds num_users ({})",
                self.users_per_ap, self.num_users
            ));
        }
        if self.dl_power_grid_dbw.is_empty() {
            return err("power grid is empty".into());
        }
        if self.dl_power_grid_dbw.iter().any(|p| !p.is_finite()) {
            return err("power grid entries must be finite".into());
        }
        let positive = [
            ("area_side_m", self.area_side_m),
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("pilot_power_w", self.pilot_power_w),
            ("ul_data_power_w", self.ul_data_power_w),
            ("ellipse_excess_m", self.ellipse_excess_m),
            ("element_spacing", self.element_spacing),
            ("f0_ref_hz", self.f0_ref_hz),
            ("hybrid_tol", self.hybrid_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.cluster_density_per_sqm >= 0.0 && self.ray_spread_m >= 0.0) {
            return err("cluster density and ray spread must be non-negative".into());
        }
        for (name, list) in [
            ("schemes", &self.schemes),
            ("csi_modes", &self.csi_modes),
            ("beamformers", &self.beamformers),
        ] {
            if list.is_empty() {
                return err(format!("{name} must name at least one strategy"));
            }
        }
        Ok(())
    }

    /// Carrier wavelength in meters.
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Thermal noise power over the band including the noise figure, in dBm.
    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    /// Thermal noise power per complex sample, in watts.
    pub fn noise_power_w(&self) -> f64 {
        10f64.powf((self.noise_power_dbm() - 30.0) / 10.0)
    }

    /// Number of clusters in the square at the configured density.
    pub fn cluster_count(&self) -> usize {
        (self.cluster_density_per_sqm * self.area_side_m * self.area_side_m).round() as usize
    }

    pub fn los_pathloss(&self) -> PathlossParams {
        let ((n, sigma_db), _) = self.pathloss_profile.exponents();
        self.pathloss_params(n, sigma_db)
    }

    pub fn nlos_pathloss(&self) -> PathlossParams {
        let (_, (n, sigma_db)) = self.pathloss_profile.exponents();
        self.pathloss_params(n, sigma_db)
    }

    fn pathloss_params(&self, n: f64, sigma_db: f64) -> PathlossParams {
        PathlossParams {
            n,
            sigma_db,
            b: self.pathloss_b,
            c: self.pathloss_c,
            f0_ref_hz: self.f0_ref_hz,
        }
    }
}
