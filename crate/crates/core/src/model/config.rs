use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and topological parameters of one network realisation.
///
/// Power is given in dB relative to the noise reference and converted with
/// `10^(dB/10)`; information quantities are in nats (per Hz).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub num_errhs: usize,
    pub num_users: usize,
    pub num_groups: usize,
    pub antennas: usize,
    pub num_files: usize,
    pub file_size: f64,
    pub cache_fraction: f64,
    pub fronthaul_capacity: f64,
    pub power_db: f64,
    pub noise_power: f64,
    pub reference_distance: f64,
    pub path_loss_exponent: f64,
    pub cell_radius: f64,
    /// Fixed cloud-fetch overhead added to every fronthaul delay, in seconds.
    pub fetch_overhead: f64,
    /// Users are dealt round-robin into groups; otherwise requests are drawn per user.
    pub balanced_groups: bool,
    /// With per-user requests, redraw until exactly `num_groups` distinct files appear.
    pub strict_group_count: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_errhs: 3,
            num_users: 6,
            num_groups: 3,
            antennas: 1,
            num_files: 10,
            file_size: 1.5,
            cache_fraction: 0.5,
            fronthaul_capacity: 2.0,
            power_db: 20.0,
            noise_power: 1.0,
            reference_distance: 50.0,
            path_loss_exponent: 3.0,
            cell_radius: 500.0,
            fetch_overhead: 0.01,
            balanced_groups: true,
            strict_group_count: true,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_errhs == 0 || self.num_users == 0 || self.antennas == 0 || self.num_files == 0 {
            return bad("counts (errhs, users, antennas, files) must be positive".into());
        }
        if self.num_groups == 0 || self.num_groups > self.num_users || self.num_groups > self.num_files {
            return bad(format!(
                "num_groups = {} must lie in 1..=min(num_users, num_files) = {}",
                self.num_groups,
                self.num_users.min(self.num_files)
            ));
        }
        let positive = [
            ("file_size", self.file_size),
            ("fronthaul_capacity", self.fronthaul_capacity),
            ("noise_power", self.noise_power),
            ("reference_distance", self.reference_distance),
            ("path_loss_exponent", self.path_loss_exponent),
            ("cell_radius", self.cell_radius),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and positive, got {v}"));
            }
        }
        if !self.power_db.is_finite() {
            return bad("power_db must be finite".into());
        }
        if !(self.fetch_overhead.is_finite() && self.fetch_overhead >= 0.0) {
            return bad(format!("fetch_overhead must be non-negative, got {}", self.fetch_overhead));
        }
        if !(0.0..=1.0).contains(&self.cache_fraction) {
            return bad(format!("cache_fraction must lie in [0, 1], got {}", self.cache_fraction));
        }
        Ok(())
    }

    pub fn power_linear(&self) -> f64 {
        10f64.powf(self.power_db / 10.0)
    }

    /// Per-eRRH cache size `floor(xi * S * F)` in nats.
    pub fn cache_capacity(&self) -> f64 {
        (self.cache_fraction * self.file_size * self.num_files as f64 + 1e-9).floor()
    }

    /// Whole files stored at every eRRH, `floor(xi * F)`.
    pub fn cached_files_per_errh(&self) -> usize {
        (self.cache_fraction * self.num_files as f64 + 1e-9).floor() as usize
    }

    pub fn stacked_dim(&self) -> usize {
        self.num_errhs * self.antennas
    }
}
