use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and radio parameters, all in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub station_x: f64,
    pub station_y: f64,
    /// Battery abstraction: UAVs hover no farther than this from the station.
    pub placement_radius_m: f64,
    pub grid_spacing_m: f64,
    pub comm_range_m: f64,
    pub sensing_range_m: f64,
    pub deterrence_range_m: f64,
    pub uav_total: usize,
    pub block_count: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            station_x: 0.0,
            station_y: 0.0,
            placement_radius_m: 2500.0,
            grid_spacing_m: 50.0,
            comm_range_m: 500.0,
            sensing_range_m: 100.0,
            deterrence_range_m: 320.0,
            uav_total: 20,
            block_count: 12,
        }
    }
}

impl WorldConfig {
    pub fn station(&self) -> [f64; 2] {
        [self.station_x, self.station_y]
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("placement_radius_m", self.placement_radius_m),
            ("grid_spacing_m", self.grid_spacing_m),
            ("comm_range_m", self.comm_range_m),
            ("sensing_range_m", self.sensing_range_m),
            ("deterrence_range_m", self.deterrence_range_m),
        ];
        for (name, v) in ranges {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.grid_spacing_m > self.placement_radius_m {
            return Err(Error::Config(format!(
                "grid spacing {} exceeds placement radius {}",
                self.grid_spacing_m, self.placement_radius_m
            )));
        }
        if self.uav_total == 0 {
            return Err(Error::Config("uav_total must be at least 1".into()));
        }
        if self.block_count == 0 {
            return Err(Error::Config("block_count must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_bad_values_rejected() {
        WorldConfig::default().validate().unwrap();
        for bad in [
            WorldConfig {
                comm_range_m: 0.0,
                ..WorldConfig::default()
            },
            WorldConfig {
                grid_spacing_m: 5000.0,
                ..WorldConfig::default()
            },
            WorldConfig {
                uav_total: 0,
                ..WorldConfig::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }
}
