//! Reconstruction parameters, loadable from TOML.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config syntax: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Algorithm and performance switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mode {
    /// Enclose updates with a ball around the camera instead of grid cells.
    pub spherical_enclosing: bool,
    pub boundary_hash: bool,
    pub next_tet_cache: bool,
    /// Integrate point updates immediately instead of freezing each point
    /// after its second observing keyframe.
    pub moving_points: bool,
}

impl Mode {
    pub fn proposed() -> Self {
        Mode {
            spherical_enclosing: false,
            boundary_hash: true,
            next_tet_cache: true,
            moving_points: true,
        }
    }

    /// Ball enclosing, full boundary scans, no caching, frozen points.
    pub fn baseline() -> Self {
        Mode {
            spherical_enclosing: true,
            boundary_hash: false,
            next_tet_cache: false,
            moving_points: false,
        }
    }
}

impl Default for Mode {
    fn default() -> Self {
        Mode::proposed()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Steiner lattice spacing, meters.
    pub l_steiner: f64,
    /// Cells per axis of the initial Steiner cube.
    pub initial_cells: u32,
    /// Weight above which a tetrahedron counts as free space.
    pub t_free: f64,
    /// Weight added to tetrahedra a ray traverses.
    pub w1: f64,
    /// Weight added to the facet-neighbors of a ray's path.
    pub w2: f64,
    /// Ball radius of spherical enclosing, before the lattice margin.
    pub r_max: f64,
    /// Half-width, in cells, of the block enclosing each updated point.
    pub enclosing_radius: u32,
    /// Extra keyframes a discarded insertion is retried for.
    pub insertion_retries: u32,
    /// Verify all invariants after every keyframe.
    pub debug_invariants: bool,
    pub mode: Mode,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            l_steiner: 10.0,
            initial_cells: 5,
            t_free: 1.0,
            w1: 1.0,
            w2: 0.25,
            r_max: 40.0,
            enclosing_radius: 2,
            insertion_retries: 1,
            debug_invariants: false,
            mode: Mode::proposed(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !(self.l_steiner.is_finite() && self.l_steiner > 0.0) {
            return bad("l_steiner must be positive");
        }
        if self.initial_cells == 0 {
            return bad("initial_cells must be at least 1");
        }
        if !(self.t_free.is_finite() && self.t_free >= 0.0) {
            return bad("t_free must be non-negative");
        }
        if !(self.w2 >= 0.0 && self.w1 >= self.w2 && self.w1.is_finite()) {
            return bad("weights must satisfy w1 >= w2 >= 0");
        }
        if !(self.r_max.is_finite() && self.r_max >= 0.0) {
            return bad("r_max must be non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c = Config::from_toml("t_free = 2.0\n[mode]\nboundary_hash = false\n").unwrap();
        assert_eq!(c.t_free, 2.0);
        assert_eq!(c.l_steiner, 10.0);
        assert!(!c.mode.boundary_hash);
        assert!(c.mode.next_tet_cache);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_toml("w1 = 0.1\nw2 = 0.5\n").is_err());
        assert!(Config::from_toml("l_steiner = 0\n").is_err());
        assert!(Config::from_toml("no_such_key = 1\n").is_err());
    }
}
