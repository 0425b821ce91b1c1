//! Scenario configuration for the Monte Carlo experiments.
//!
//! A [`ScenarioConfig`] pins everything a sweep needs: platform preset
//! (which fixes base-station height and panel orientation), cell and
//! scattering-ring geometry, array layout, link budget, QoS targets, and
//! trial counts. Configs load from flat `key = value` TOML; unknown keys
//! are rejected so typos fail loudly instead of silently running the
//! default.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::LargeScaleParams;
use crate::geometry::{ArrayGeometry, GeometryError, Orientation};

/// Errors raised while loading or validating a scenario.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The config file could not be read.
    #[error("cannot read config file {path}: {source}")]
    Io {
        /// Path that failed to open.
        path: String,
        /// Underlying I/O error.
        #[source]
        source: std::io::Error,
    },
    /// The config text is not valid TOML or contains unknown keys.
    #[error("config parse error: {0}")]
    Parse(String),
    /// A field value fails the scenario invariants.
    #[error("invalid config: {field}: {why}")]
    Invalid {
        /// Offending field name.
        field: &'static str,
        /// What the invariant requires.
        why: String,
    },
    /// The array layout implied by the config is unbuildable.
    #[error("array geometry: {0}")]
    Geometry(#[from] GeometryError),
}

/// Converts a dBm figure to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Base-station platform preset: fixes height and panel orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    /// Stratospheric platform at 20 km, down-facing horizontal panel.
    Haps,
    /// Terrestrial tower at 25 m, vertical panel.
    Terrestrial,
}

impl Platform {
    /// Base-station height above the ground plane, metres.
    pub fn height_m(self) -> f64 {
        match self {
            Platform::Haps => 20_000.0,
            Platform::Terrestrial => 25.0,
        }
    }

    /// Panel mounting for this platform.
    pub fn orientation(self) -> Orientation {
        match self {
            Platform::Haps => Orientation::Horizontal,
            Platform::Terrestrial => Orientation::Vertical,
        }
    }
}

fn default_platform() -> Platform {
    Platform::Haps
}
fn default_cell_radius() -> f64 {
    1000.0
}
fn default_carrier_freq() -> f64 {
    2.5e9
}
fn default_n_clusters() -> usize {
    4
}
fn default_users_per_cluster() -> usize {
    2
}
fn default_n_rx() -> usize {
    4
}
fn default_corr_threshold() -> f64 {
    0.7
}
fn default_r_min() -> f64 {
    2.0
}
fn default_p_tol_dbm() -> f64 {
    1.0
}
fn default_noise_density() -> f64 {
    -174.0
}
fn default_bandwidth_hz() -> f64 {
    15e3
}
fn default_kappa() -> f64 {
    9.61
}
fn default_omega() -> f64 {
    0.16
}
fn default_ring_radius() -> f64 {
    50.0
}
fn default_seed() -> u64 {
    1
}
fn default_n_trials() -> usize {
    500
}
fn default_spacing() -> f64 {
    0.5
}
fn default_quad_nodes() -> usize {
    40
}
fn default_p_transmit_dbm() -> f64 {
    40.0
}

/// Complete description of one simulated scenario.
///
/// Every field has a default, so an empty TOML file is a valid scenario;
/// the shipped files under `configs/` override only what they need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Platform preset (height + panel orientation).
    pub platform: Platform,
    /// Cell radius the users are dropped in, metres.
    pub cell_radius: f64,
    /// Carrier frequency, Hz.
    pub carrier_freq: f64,
    /// Number of clusters, which equals the number of transmit antennas.
    pub n_clusters: usize,
    /// Users multiplexed per cluster.
    pub users_per_cluster: usize,
    /// Receive antennas per user; must be at least `n_clusters`.
    pub n_rx: usize,
    /// Correlation threshold for joining a cluster, in [0, 1].
    pub corr_threshold: f64,
    /// Per-user minimum rate target, bps/Hz.
    pub r_min: f64,
    /// Received-power gap needed to decode-and-cancel, dBm; the linear
    /// value is used directly in the noise-normalized power domain.
    pub p_tol_dbm: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_density_dbm_hz: f64,
    /// Noise-equivalent bandwidth, Hz. Rates are in bps/Hz, so this
    /// only sets the noise floor. The default is one 15 kHz OFDM
    /// subcarrier, the usual narrowband link-level convention.
    pub bandwidth_hz: f64,
    /// LoS-probability crossing point, degrees.
    pub kappa: f64,
    /// LoS-probability slope, 1/degree.
    pub omega: f64,
    /// Scatterer-ring radius around each user, metres.
    pub ring_radius: f64,
    /// Base RNG seed; trials derive independent streams from it.
    pub seed: u64,
    /// Monte Carlo trials per sweep point.
    pub n_trials: usize,
    /// Static circuit power added to the transmit power in the
    /// energy-efficiency denominator, watts.
    pub fixed_circuit_power_w: f64,
    /// Horizontal element spacing, wavelengths.
    pub d_h: f64,
    /// Vertical element spacing, wavelengths.
    pub d_v: f64,
    /// Optional explicit panel width (elements); both or neither of
    /// `m_h`/`m_v` must be given, and their product must equal the
    /// element count the experiment asks for.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_h: Option<usize>,
    /// Optional explicit panel height (elements).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_v: Option<usize>,
    /// Gauss–Legendre nodes per axis for the covariance integral.
    pub quad_nodes: usize,
    /// Transmit power used by sweeps that fix the budget (QoS sweep),
    /// dBm.
    pub p_transmit_dbm: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            platform: default_platform(),
            cell_radius: default_cell_radius(),
            carrier_freq: default_carrier_freq(),
            n_clusters: default_n_clusters(),
            users_per_cluster: default_users_per_cluster(),
            n_rx: default_n_rx(),
            corr_threshold: default_corr_threshold(),
            r_min: default_r_min(),
            p_tol_dbm: default_p_tol_dbm(),
            noise_density_dbm_hz: default_noise_density(),
            bandwidth_hz: default_bandwidth_hz(),
            kappa: default_kappa(),
            omega: default_omega(),
            ring_radius: default_ring_radius(),
            seed: default_seed(),
            n_trials: default_n_trials(),
            fixed_circuit_power_w: 0.0,
            d_h: default_spacing(),
            d_v: default_spacing(),
            m_h: None,
            m_v: None,
            quad_nodes: default_quad_nodes(),
            p_transmit_dbm: default_p_transmit_dbm(),
        }
    }
}

impl ScenarioConfig {
    /// Parses and validates a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses, and validates a scenario from a TOML file.
    pub fn from_toml_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Serializes the scenario back to flat TOML (the echo format).
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Checks every scenario invariant, naming the first violated field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    field,
                    why: format!("must be positive and finite, got {v}"),
                })
            }
        }
        positive("cell_radius", self.cell_radius)?;
        positive("carrier_freq", self.carrier_freq)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("kappa", self.kappa)?;
        positive("omega", self.omega)?;
        positive("d_h", self.d_h)?;
        positive("d_v", self.d_v)?;
        if self.n_clusters < 1 {
            return Err(ConfigError::Invalid {
                field: "n_clusters",
                why: "need at least one cluster".into(),
            });
        }
        if self.users_per_cluster < 1 {
            return Err(ConfigError::Invalid {
                field: "users_per_cluster",
                why: "need at least one user per cluster".into(),
            });
        }
        if self.n_rx < self.n_clusters {
            return Err(ConfigError::Invalid {
                field: "n_rx",
                why: format!(
                    "detection needs n_rx >= n_clusters, got {} < {}",
                    self.n_rx, self.n_clusters
                ),
            });
        }
        if !(self.corr_threshold >= 0.0 && self.corr_threshold <= 1.0) {
            return Err(ConfigError::Invalid {
                field: "corr_threshold",
                why: format!("must lie in [0, 1], got {}", self.corr_threshold),
            });
        }
        if !(self.r_min >= 0.0 && self.r_min.is_finite()) {
            return Err(ConfigError::Invalid {
                field: "r_min",
                why: format!("must be nonnegative and finite, got {}", self.r_min),
            });
        }
        if !self.p_tol_dbm.is_finite() {
            return Err(ConfigError::Invalid {
                field: "p_tol_dbm",
                why: "must be finite".into(),
            });
        }
        if !self.noise_density_dbm_hz.is_finite() {
            return Err(ConfigError::Invalid {
                field: "noise_density_dbm_hz",
                why: "must be finite".into(),
            });
        }
        if !(self.ring_radius >= 0.0) || self.ring_radius >= self.cell_radius {
            return Err(ConfigError::Invalid {
                field: "ring_radius",
                why: format!(
                    "must satisfy 0 <= ring_radius < cell_radius, got {} vs {}",
                    self.ring_radius, self.cell_radius
                ),
            });
        }
        if self.n_trials < 1 {
            return Err(ConfigError::Invalid {
                field: "n_trials",
                why: "need at least one trial".into(),
            });
        }
        if !(self.fixed_circuit_power_w >= 0.0 && self.fixed_circuit_power_w.is_finite()) {
            return Err(ConfigError::Invalid {
                field: "fixed_circuit_power_w",
                why: format!("must be nonnegative, got {}", self.fixed_circuit_power_w),
            });
        }
        if self.quad_nodes < 4 {
            return Err(ConfigError::Invalid {
                field: "quad_nodes",
                why: format!("need at least 4 nodes, got {}", self.quad_nodes),
            });
        }
        if !self.p_transmit_dbm.is_finite() {
            return Err(ConfigError::Invalid {
                field: "p_transmit_dbm",
                why: "must be finite".into(),
            });
        }
        match (self.m_h, self.m_v) {
            (None, None) => {}
            (Some(mh), Some(mv)) => {
                if mh < 1 || mv < 1 {
                    return Err(ConfigError::Invalid {
                        field: "m_h",
                        why: "panel dimensions must be at least 1".into(),
                    });
                }
                if mh * mv != self.n_clusters {
                    return Err(ConfigError::Invalid {
                        field: "m_h",
                        why: format!(
                            "m_h * m_v = {} must equal n_clusters = {}",
                            mh * mv,
                            self.n_clusters
                        ),
                    });
                }
            }
            _ => {
                return Err(ConfigError::Invalid {
                    field: "m_h",
                    why: "give both m_h and m_v, or neither".into(),
                });
            }
        }
        Ok(())
    }

    /// Number of users dropped per trial.
    pub fn n_users(&self) -> usize {
        self.n_clusters * self.users_per_cluster
    }

    /// Noise power over the configured bandwidth, watts.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz + 10.0 * self.bandwidth_hz.log10())
    }

    /// Transmit SNR `rho = P / sigma^2` for a budget in watts.
    pub fn rho(&self, p_watts: f64) -> f64 {
        p_watts / self.noise_power_w()
    }

    /// SIC decoding gap as a linear value in the noise-normalized power
    /// domain.
    pub fn p_tol_fraction(&self) -> f64 {
        dbm_to_watts(self.p_tol_dbm)
    }

    /// Carrier wavelength, metres.
    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Large-scale fading parameters implied by the scenario.
    pub fn large_scale(&self) -> LargeScaleParams {
        LargeScaleParams {
            carrier_freq_hz: self.carrier_freq,
            kappa: self.kappa,
            omega: self.omega,
            ..LargeScaleParams::default()
        }
    }

    /// Builds the transmit panel for `antennas` elements. Explicit
    /// `m_h`/`m_v` apply when they match the requested count (i.e. for
    /// the allocation pipeline, where antennas = `n_clusters`); the
    /// statistics experiments that ask for other counts get the
    /// most-square panel.
    pub fn geometry_for(&self, antennas: usize) -> Result<ArrayGeometry, ConfigError> {
        let orientation = self.platform.orientation();
        match (self.m_h, self.m_v) {
            (Some(mh), Some(mv)) if mh * mv == antennas => Ok(ArrayGeometry::new(
                mh,
                mv,
                self.d_h,
                self.d_v,
                self.wavelength(),
                orientation,
            )?),
            _ => {
                if (self.d_h - self.d_v).abs() > f64::EPSILON * self.d_h.abs() {
                    // Near-square factorization with distinct spacings.
                    let mut mv = (antennas as f64).sqrt().floor() as usize;
                    while mv > 1 && antennas % mv != 0 {
                        mv -= 1;
                    }
                    Ok(ArrayGeometry::new(
                        antennas / mv,
                        mv,
                        self.d_h,
                        self.d_v,
                        self.wavelength(),
                        orientation,
                    )?)
                } else {
                    Ok(ArrayGeometry::near_square(
                        antennas,
                        self.d_h,
                        self.wavelength(),
                        orientation,
                    )?)
                }
            }
        }
    }

    /// Panel for the allocation pipeline: one antenna per cluster.
    pub fn geometry(&self) -> Result<ArrayGeometry, ConfigError> {
        self.geometry_for(self.n_clusters)
    }
}

// ---------- Tests ----------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.platform, Platform::Haps);
        assert_eq!(cfg.n_users(), 8);
    }

    #[test]
    fn empty_toml_is_all_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
    }

    #[test]
    fn parses_flat_keys() {
        let cfg = ScenarioConfig::from_toml_str(
            "platform = \"terrestrial\"\nn_clusters = 2\nusers_per_cluster = 3\nn_rx = 2\nd_h = 2.5\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(cfg.platform, Platform::Terrestrial);
        assert_eq!(cfg.platform.height_m(), 25.0);
        assert_eq!(cfg.n_users(), 6);
        assert_eq!(cfg.d_h, 2.5);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_toml_str("n_cluters = 4\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "got {err:?}");
        assert!(err.to_string().contains("n_cluters"));
    }

    #[test]
    fn invariants_are_enforced() {
        for (text, field) in [
            ("cell_radius = -1.0", "cell_radius"),
            ("n_rx = 2", "n_rx"), // below the default n_clusters = 4
            ("corr_threshold = 1.5", "corr_threshold"),
            ("ring_radius = 2000.0", "ring_radius"),
            ("n_trials = 0", "n_trials"),
            ("m_h = 2", "m_h"),
            ("m_h = 3\nm_v = 2", "m_h"),
        ] {
            let err = ScenarioConfig::from_toml_str(text).unwrap_err();
            match err {
                ConfigError::Invalid { field: f, .. } => assert_eq!(f, field, "for {text}"),
                other => panic!("expected Invalid for {text}, got {other:?}"),
            }
        }
    }

    #[test]
    fn noise_power_matches_hand_computation() {
        let cfg = ScenarioConfig {
            bandwidth_hz: 10e6,
            ..ScenarioConfig::default()
        };
        // -174 dBm/Hz + 70 dB = -104 dBm = 10^(-13.4) W.
        let expected = 10f64.powf(-13.4);
        assert!((cfg.noise_power_w() - expected).abs() < 1e-9 * expected);
        // rho at 30 dBm (1 W).
        let rho = cfg.rho(dbm_to_watts(30.0));
        assert!((rho - 1.0 / expected).abs() < 1e-6 / expected);
    }

    #[test]
    fn dbm_roundtrip() {
        for dbm in [-10.0, 0.0, 20.0, 46.0] {
            assert!((watts_to_dbm(dbm_to_watts(dbm)) - dbm).abs() < 1e-12);
        }
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn geometry_respects_overrides_for_matching_count() {
        let cfg = ScenarioConfig {
            m_h: Some(4),
            m_v: Some(1),
            ..ScenarioConfig::default()
        };
        cfg.validate().unwrap();
        let geom = cfg.geometry().unwrap();
        assert_eq!((geom.m_h(), geom.m_v()), (4, 1));
        // A statistics experiment asking for 64 antennas falls back to
        // the most-square panel.
        let geom64 = cfg.geometry_for(64).unwrap();
        assert_eq!((geom64.m_h(), geom64.m_v()), (8, 8));
    }

    #[test]
    fn config_echo_roundtrips_through_toml() {
        let cfg = ScenarioConfig {
            platform: Platform::Terrestrial,
            n_trials: 7,
            ..ScenarioConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
