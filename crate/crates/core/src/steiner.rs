//! Incrementally grown lattice of Steiner points.
//!
//! The lattice anchors at the bootstrap camera and only ever grows by whole
//! layers. Cell indices are measured from that fixed anchor, so they stay
//! valid as the bounds expand in any direction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("steiner grid already bootstrapped")]
    AlreadyBootstrapped,
    #[error("steiner grid not bootstrapped")]
    NotBootstrapped,
    #[error("point outside grid bounds")]
    OutOfBounds,
    #[error("invalid grid parameters: {0}")]
    InvalidParameters(String),
}

/// Index of a lattice cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub i: i64,
    pub j: i64,
    pub k: i64,
}

impl CellIndex {
    pub fn new(i: i64, j: i64, k: i64) -> Self {
        CellIndex { i, j, k }
    }
}

/// Lattice anchor and spacing; all that is needed to map points to cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellFrame {
    pub origin: Point,
    pub spacing: f64,
}

impl CellFrame {
    /// Unclamped cell containing `p`.
    pub fn cell_floor(&self, p: &Point) -> CellIndex {
        let f = |a: usize| ((p[a] - self.origin[a]) / self.spacing).floor() as i64;
        CellIndex::new(f(0), f(1), f(2))
    }

    /// Cells overlapped by the box `[min, max]`, inclusive.
    pub fn cell_range(&self, min: &Point, max: &Point) -> (CellIndex, CellIndex) {
        (self.cell_floor(min), self.cell_floor(max))
    }

    pub fn lattice_point(&self, i: i64, j: i64, k: i64) -> Point {
        Point::new(
            self.origin.x + i as f64 * self.spacing,
            self.origin.y + j as f64 * self.spacing,
            self.origin.z + k as f64 * self.spacing,
        )
    }
}

#[derive(Debug, Clone)]
pub struct SteinerGrid {
    spacing: f64,
    initial_cells: u32,
    frame: Option<CellFrame>,
    /// Lattice coordinates of the bounds, inclusive.
    lo: [i64; 3],
    hi: [i64; 3],
}

impl SteinerGrid {
    pub fn new(spacing: f64, initial_cells: u32) -> Result<Self, GridError> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(GridError::InvalidParameters(format!("spacing {spacing}")));
        }
        if initial_cells == 0 {
            return Err(GridError::InvalidParameters("initial cube needs at least one cell".into()));
        }
        Ok(SteinerGrid {
            spacing,
            initial_cells,
            frame: None,
            lo: [0; 3],
            hi: [0; 3],
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn is_bootstrapped(&self) -> bool {
        self.frame.is_some()
    }

    pub fn frame(&self) -> Option<CellFrame> {
        self.frame
    }

    /// Lays down the initial cube of lattice points centered on `c0`.
    pub fn bootstrap(&mut self, c0: &Point) -> Result<Vec<Point>, GridError> {
        if self.frame.is_some() {
            return Err(GridError::AlreadyBootstrapped);
        }
        let half = self.initial_cells as f64 * self.spacing / 2.0;
        let frame = CellFrame {
            origin: Point::new(c0.x - half, c0.y - half, c0.z - half),
            spacing: self.spacing,
        };
        let n = self.initial_cells as i64;
        self.frame = Some(frame);
        self.lo = [0; 3];
        self.hi = [n; 3];
        let mut out = Vec::with_capacity(((n + 1) * (n + 1) * (n + 1)) as usize);
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    out.push(frame.lattice_point(i, j, k));
                }
            }
        }
        Ok(out)
    }

    pub fn bounds_min(&self) -> Option<Point> {
        self.frame.map(|f| f.lattice_point(self.lo[0], self.lo[1], self.lo[2]))
    }

    pub fn bounds_max(&self) -> Option<Point> {
        self.frame.map(|f| f.lattice_point(self.hi[0], self.hi[1], self.hi[2]))
    }

    /// Whether `p` lies strictly inside the bounds.
    pub fn strictly_contains(&self, p: &Point) -> bool {
        match (self.bounds_min(), self.bounds_max()) {
            (Some(lo), Some(hi)) => (0..3).all(|a| lo[a] < p[a] && p[a] < hi[a]),
            _ => false,
        }
    }

    /// Number of lattice points currently in the grid.
    pub fn num_points(&self) -> usize {
        (0..3).map(|a| (self.hi[a] - self.lo[a] + 1) as usize).product()
    }

    /// Appends whole layers until `p` is strictly inside the bounds and
    /// returns the new lattice points in insertion order.
    pub fn ensure_contains(&mut self, p: &Point) -> Result<Vec<Point>, GridError> {
        let frame = self.frame.ok_or(GridError::NotBootstrapped)?;
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(GridError::OutOfBounds);
        }
        let mut out = Vec::new();
        for axis in 0..3 {
            loop {
                let hi = frame.lattice_point(self.hi[0], self.hi[1], self.hi[2])[axis];
                if p[axis] < hi {
                    break;
                }
                self.hi[axis] += 1;
                self.push_layer(axis, self.hi[axis], &mut out);
            }
            loop {
                let lo = frame.lattice_point(self.lo[0], self.lo[1], self.lo[2])[axis];
                if p[axis] > lo {
                    break;
                }
                self.lo[axis] -= 1;
                self.push_layer(axis, self.lo[axis], &mut out);
            }
        }
        Ok(out)
    }

    fn push_layer(&self, axis: usize, at: i64, out: &mut Vec<Point>) {
        let frame = self.frame.unwrap();
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for u in self.lo[a]..=self.hi[a] {
            for w in self.lo[b]..=self.hi[b] {
                let mut c = [0i64; 3];
                c[axis] = at;
                c[a] = u;
                c[b] = w;
                out.push(frame.lattice_point(c[0], c[1], c[2]));
            }
        }
    }

    /// Lowest and highest valid cell index.
    pub fn cell_bounds(&self) -> (CellIndex, CellIndex) {
        (
            CellIndex::new(self.lo[0], self.lo[1], self.lo[2]),
            CellIndex::new(self.hi[0] - 1, self.hi[1] - 1, self.hi[2] - 1),
        )
    }

    /// Cell containing `p`. Points on the upper bound belong to the last cell.
    pub fn cell_of(&self, p: &Point) -> Result<CellIndex, GridError> {
        let frame = self.frame.ok_or(GridError::NotBootstrapped)?;
        let lo = self.bounds_min().unwrap();
        let hi = self.bounds_max().unwrap();
        if (0..3).any(|a| !(lo[a] <= p[a] && p[a] <= hi[a])) {
            return Err(GridError::OutOfBounds);
        }
        Ok(self.clamp(frame.cell_floor(p)))
    }

    pub fn clamp(&self, c: CellIndex) -> CellIndex {
        let (lo, hi) = self.cell_bounds();
        CellIndex::new(c.i.clamp(lo.i, hi.i), c.j.clamp(lo.j, hi.j), c.k.clamp(lo.k, hi.k))
    }

    /// Cells within `radius` cells of `center` on every axis, clipped to the grid.
    pub fn block(&self, center: CellIndex, radius: i64) -> impl Iterator<Item = CellIndex> {
        let (lo, hi) = self.cell_bounds();
        let i0 = (center.i - radius).max(lo.i);
        let i1 = (center.i + radius).min(hi.i);
        let j0 = (center.j - radius).max(lo.j);
        let j1 = (center.j + radius).min(hi.j);
        let k0 = (center.k - radius).max(lo.k);
        let k1 = (center.k + radius).min(hi.k);
        (i0..=i1).flat_map(move |i| (j0..=j1).flat_map(move |j| (k0..=k1).map(move |k| CellIndex::new(i, j, k))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SteinerGrid {
        let mut g = SteinerGrid::new(10.0, 5).unwrap();
        g.bootstrap(&Point::origin()).unwrap();
        g
    }

    #[test]
    fn bootstrap_cube() {
        let mut g = SteinerGrid::new(10.0, 5).unwrap();
        let pts = g.bootstrap(&Point::origin()).unwrap();
        assert_eq!(pts.len(), 216);
        assert_eq!(g.bounds_min().unwrap(), Point::new(-25., -25., -25.));
        assert_eq!(g.bounds_max().unwrap(), Point::new(25., 25., 25.));
        assert_eq!(g.bootstrap(&Point::origin()), Err(GridError::AlreadyBootstrapped));
    }

    #[test]
    fn bootstrap_translates_with_camera() {
        let mut g = SteinerGrid::new(10.0, 5).unwrap();
        g.bootstrap(&Point::new(3., 3., 3.)).unwrap();
        assert_eq!(g.bounds_min().unwrap(), Point::new(-22., -22., -22.));
        assert_eq!(g.bounds_max().unwrap(), Point::new(28., 28., 28.));
    }

    #[test]
    fn ensure_contains_inside_is_noop() {
        let mut g = grid();
        assert!(g.ensure_contains(&Point::new(1., 2., 3.)).unwrap().is_empty());
    }

    #[test]
    fn ensure_contains_adds_one_x_layer() {
        let mut g = grid();
        let added = g.ensure_contains(&Point::new(27., 0., 0.)).unwrap();
        // One layer: 6 (y) x 6 (z) lattice points at x = 35.
        assert_eq!(added.len(), 36);
        assert!(added.iter().all(|p| p.x == 35.0));
        assert_eq!(g.bounds_max().unwrap().x, 35.0);
    }

    #[test]
    fn point_on_bound_triggers_expansion() {
        let mut g = grid();
        assert_eq!(g.ensure_contains(&Point::new(25., 0., 0.)).unwrap().len(), 36);
    }

    #[test]
    fn two_axes() {
        let mut g = grid();
        let q = Point::new(-31., 44., 0.);
        let added = g.ensure_contains(&q).unwrap();
        assert!(g.strictly_contains(&q));
        // -x: one 6x6 layer; +y: two layers of 7 (x) x 6 (z).
        assert_eq!(added.len(), 36 + 2 * 42);
        assert_eq!(g.num_points(), 216 + added.len());
    }

    #[test]
    fn cell_of_examples() {
        let g = grid();
        let lo = g.bounds_min().unwrap();
        assert_eq!(g.cell_of(&(lo + crate::geom::Vec3::new(0.5, 0.5, 0.5))).unwrap(), CellIndex::new(0, 0, 0));
        assert_eq!(g.cell_of(&(lo + crate::geom::Vec3::new(10., 0., 0.))).unwrap(), CellIndex::new(1, 0, 0));
        assert_eq!(g.cell_of(&Point::new(100., 0., 0.)), Err(GridError::OutOfBounds));
        assert_eq!(g.cell_of(&Point::new(25., 25., 25.)).unwrap(), CellIndex::new(4, 4, 4));
    }

    #[test]
    fn block_is_clipped() {
        let g = grid();
        assert_eq!(g.block(CellIndex::new(2, 2, 2), 2).count(), 125);
        assert_eq!(g.block(CellIndex::new(0, 0, 0), 2).count(), 27);
    }
}
