//! Mode comparison harness: runs one log under several modes and compares
//! timings and outputs.

use serde::{Deserialize, Serialize};

use crate::config::{Config, Mode};
use crate::io::KeyframeBatch;
use crate::mesh::TriangleMesh;
use crate::reconstructor::{KeyframeStats, ReconstructError, Reconstructor};

/// Result of running a whole log under one mode.
pub struct Run {
    pub name: String,
    pub mode: Mode,
    pub stats: Vec<KeyframeStats>,
    pub mesh: TriangleMesh,
    pub reconstructor: Reconstructor,
}

impl Run {
    pub fn total_seconds(&self) -> f64 {
        self.stats.iter().map(|s| s.timings.total).sum()
    }

    /// Keyframes per second.
    pub fn freq(&self) -> f64 {
        let t = self.total_seconds();
        if t > 0.0 {
            self.stats.len() as f64 / t
        } else {
            f64::INFINITY
        }
    }

    /// Least-squares slope of per-keyframe time against keyframe position,
    /// seconds per keyframe.
    pub fn slope(&self) -> f64 {
        let y: Vec<f64> = self.stats.iter().map(|s| s.timings.total).collect();
        slope(&y)
    }
}

/// Runs `log` from scratch under `cfg`.
pub fn run(name: &str, cfg: &Config, log: &[KeyframeBatch]) -> Result<Run, ReconstructError> {
    let mut r = Reconstructor::new(cfg.clone())?;
    let mut stats = Vec::with_capacity(log.len());
    for b in log {
        stats.push(r.process_keyframe(b.clone())?);
    }
    Ok(Run {
        name: name.to_string(),
        mode: cfg.mode,
        stats,
        mesh: r.surface(),
        reconstructor: r,
    })
}

/// Least-squares slope of `y` against `0..y.len()`.
pub fn slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// The baseline, the proposed mode, and the proposed mode with one switch
/// flipped at a time.
pub fn mode_matrix() -> Vec<(&'static str, Mode)> {
    let p = Mode::proposed();
    vec![
        ("baseline", Mode::baseline()),
        ("proposed", p),
        ("no_cache", Mode { next_tet_cache: false, ..p }),
        ("no_hash", Mode { boundary_hash: false, ..p }),
        ("spherical_enclosing", Mode { spherical_enclosing: true, ..p }),
        ("frozen_points", Mode { moving_points: false, ..p }),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub name: String,
    pub mode: Mode,
    pub keyframes: usize,
    pub total_seconds: f64,
    pub freq: f64,
    /// Seconds per keyframe per keyframe.
    pub slope: f64,
    /// Baseline total over this mode's total.
    pub speedup_vs_baseline: Option<f64>,
    /// Whether the final surface equals the proposed mode's bit for bit.
    pub mesh_matches_proposed: Option<bool>,
    pub surface_vertices: usize,
    pub surface_triangles: usize,
    pub per_keyframe_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: Vec<ModeReport>,
    /// Baseline total time over proposed total time.
    pub speedup: Option<f64>,
    /// Proposed slope over baseline slope.
    pub slope_ratio: Option<f64>,
}

/// Runs every mode in `modes` over `log` and compares them.
pub fn bench(cfg: &Config, log: &[KeyframeBatch], modes: &[(&str, Mode)]) -> Result<BenchReport, ReconstructError> {
    let mut runs = Vec::new();
    for &(name, mode) in modes {
        let cfg = Config { mode, ..cfg.clone() };
        runs.push(run(name, &cfg, log)?);
    }
    Ok(report(&runs))
}

pub fn report(runs: &[Run]) -> BenchReport {
    let find = |n: &str| runs.iter().find(|r| r.name == n);
    let base = find("baseline");
    let prop = find("proposed");
    let reports = runs
        .iter()
        .map(|r| ModeReport {
            name: r.name.clone(),
            mode: r.mode,
            keyframes: r.stats.len(),
            total_seconds: r.total_seconds(),
            freq: r.freq(),
            slope: r.slope(),
            speedup_vs_baseline: base.map(|b| b.total_seconds() / r.total_seconds()),
            mesh_matches_proposed: prop.map(|p| p.mesh == r.mesh),
            surface_vertices: r.mesh.vertices.len(),
            surface_triangles: r.mesh.triangles.len(),
            per_keyframe_seconds: r.stats.iter().map(|s| s.timings.total).collect(),
        })
        .collect();
    BenchReport {
        runs: reports,
        speedup: base.zip(prop).map(|(b, p)| b.total_seconds() / p.total_seconds()),
        slope_ratio: base.zip(prop).map(|(b, p)| p.slope() / b.slope()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_line() {
        let y: Vec<f64> = (0..10).map(|i| 3.0 + 0.5 * i as f64).collect();
        assert!((slope(&y) - 0.5).abs() < 1e-12);
        assert_eq!(slope(&[1.0]), 0.0);
        assert!(slope(&[2.0; 5]).abs() < 1e-15);
    }
}
