//! Walking camera-to-point segments through the tetrahedralization and
//! maintaining the visibility weights they induce.
//!
//! A ray adds `w1` to every tetrahedron it traverses and `w2` once to each
//! finite facet-neighbor of its path. Every contribution is recorded on the
//! tetrahedron as `(ray, role)`, which is what lets retracing touch only the
//! tetrahedra whose contribution actually changed.

use crate::delaunay::{DelaunayError, Label, RayId, RayRole, TetHandle, Triangulation, VertexId, FACET_OUT};
use crate::geom::{orient3d, Point};

/// Weights below this after a decrement count as drift, not rounding.
const CLAMP_TOLERANCE: f64 = 1e-9;

/// What a traced ray contributed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Contribution {
    /// Point end to camera end.
    pub path: Vec<TetHandle>,
    /// Finite facet-neighbors of the path that are not on it.
    pub neighbors: Vec<TetHandle>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceCounters {
    /// Steps at which a cached hint was available.
    pub proposals: u64,
    /// Steps at which the cached hint was the right exit.
    pub hits: u64,
    pub steps: u64,
    pub walk_failures: u64,
    /// Decrements that would have gone below zero.
    pub clamped: u64,
}

impl TraceCounters {
    pub fn hit_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.hits as f64 / self.proposals as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct RayTracer {
    pub w1: f64,
    pub w2: f64,
    pub cache: bool,
    pub counters: TraceCounters,
    /// Outside tetrahedra whose weight dropped, for the caller to re-examine.
    lowered: Vec<TetHandle>,
    /// Tetrahedra whose weight rose.
    raised: Vec<TetHandle>,
}

impl RayTracer {
    pub fn new(w1: f64, w2: f64, cache: bool) -> Self {
        RayTracer {
            w1,
            w2,
            cache,
            counters: TraceCounters::default(),
            lowered: Vec::new(),
            raised: Vec::new(),
        }
    }

    pub fn take_lowered(&mut self) -> Vec<TetHandle> {
        std::mem::take(&mut self.lowered)
    }

    pub fn take_raised(&mut self) -> Vec<TetHandle> {
        std::mem::take(&mut self.raised)
    }

    fn weight_of(&self, role: RayRole) -> f64 {
        match role {
            RayRole::Traversed => self.w1,
            RayRole::Neighbor => self.w2,
        }
    }

    /// Tetrahedra crossed by the segment from vertex `point` to `camera`.
    pub fn walk(&mut self, tri: &mut Triangulation, point: VertexId, camera: &Point) -> Result<Vec<TetHandle>, DelaunayError> {
        let first = self.first_tet(tri, point, camera)?;
        let mut path = Vec::with_capacity(64);
        path.push(first);
        self.walk_from(tri, point, camera, path, None)
    }

    /// Continues a walk whose first steps are `path`. If `rejoin` holds the
    /// live tail of an earlier walk of the same segment, marked with the
    /// given stamp, the walk adopts that tail once it steps onto it the way
    /// the earlier walk did.
    fn walk_from(
        &mut self,
        tri: &mut Triangulation,
        point: VertexId,
        camera: &Point,
        mut path: Vec<TetHandle>,
        rejoin: Option<(&[TetHandle], u32)>,
    ) -> Result<Vec<TetHandle>, DelaunayError> {
        let p = *tri.position(point);
        let mut cur = *path.last().expect("walk needs a start");
        let guard = tri.num_tets();
        loop {
            if contains(tri, cur, camera) {
                return Ok(path);
            }
            if path.len() > guard {
                self.counters.walk_failures += 1;
                return Err(DelaunayError::WalkFailure);
            }
            let prev = path.len().checked_sub(2).map(|i| path[i]);
            let next = self.next_tet(tri, cur, prev, &p, camera).ok_or_else(|| {
                self.counters.walk_failures += 1;
                DelaunayError::WalkFailure
            })?;
            if tri.is_infinite(next) {
                self.counters.walk_failures += 1;
                return Err(DelaunayError::WalkFailure);
            }
            if self.cache {
                tri.tet_mut(cur).next_hint = Some(next);
            }
            if let Some((tail, stamp)) = rejoin {
                if tri.is_marked(cur, stamp) {
                    let j = tail.iter().position(|&h| h == cur).unwrap();
                    if tail.get(j + 1) == Some(&next) {
                        path.extend_from_slice(&tail[j + 1..]);
                        return Ok(path);
                    }
                }
            }
            cur = next;
            path.push(cur);
        }
    }

    /// The tetrahedron of the star of `point` that the segment leaves through.
    fn first_tet(&self, tri: &Triangulation, point: VertexId, camera: &Point) -> Result<TetHandle, DelaunayError> {
        let mut best: Option<(bool, u64, TetHandle)> = None;
        for h in tri.star(point) {
            let t = tri.tet(h);
            if t.is_infinite() {
                continue;
            }
            let pi = t.index_of(point).unwrap();
            let mut strict = true;
            let mut ok = true;
            for i in 0..4 {
                if i == pi {
                    continue;
                }
                match tri.orient_replaced(h, i, camera) {
                    s if s < 0 => {
                        ok = false;
                        break;
                    }
                    0 => strict = false,
                    _ => {}
                }
            }
            if !ok {
                continue;
            }
            let better = match best {
                None => true,
                Some((bs, bseq, _)) => (strict && !bs) || (strict == bs && t.seq < bseq),
            };
            if better {
                best = Some((strict, t.seq, h));
            }
        }
        best.map(|b| b.2).ok_or(DelaunayError::WalkFailure)
    }

    /// Neighbor across the facet through which the line `p -> c` leaves `cur`.
    /// The cached hint is tested first and taken only on a clean crossing,
    /// which is exactly the facet the full scan would return.
    pub fn next_tet(
        &mut self,
        tri: &Triangulation,
        cur: TetHandle,
        prev: Option<TetHandle>,
        p: &Point,
        c: &Point,
    ) -> Option<TetHandle> {
        self.counters.steps += 1;
        let t = tri.tet(cur);
        if self.cache {
            if let Some(hint) = t.next_hint.filter(|&h| tri.is_alive(h)) {
                if let Some(i) = t.neighbor_index(hint) {
                    self.counters.proposals += 1;
                    if exit_crossing(tri, cur, i, p, c) == Some(true) {
                        self.counters.hits += 1;
                        return Some(hint);
                    }
                }
            }
        }
        let mut fallback = None;
        for i in 0..4 {
            let nb = t.n[i];
            if Some(nb) == prev {
                continue;
            }
            match exit_crossing(tri, cur, i, p, c) {
                Some(true) => return Some(nb),
                Some(false) if fallback.is_none() => fallback = Some(nb),
                _ => {}
            }
        }
        fallback
    }

    fn contribute(&mut self, tri: &mut Triangulation, h: TetHandle, ray: RayId, role: RayRole) {
        let w = self.weight_of(role);
        let t = tri.tet_mut(h);
        t.weight += w;
        t.rays.push((ray, role));
        self.raised.push(h);
    }

    fn withdraw(&mut self, tri: &mut Triangulation, h: TetHandle, ray: RayId, role: RayRole) {
        let w = self.weight_of(role);
        let t = tri.tet_mut(h);
        let Some(pos) = t.rays.iter().position(|&(r, ro)| r == ray && ro == role) else {
            return;
        };
        t.rays.swap_remove(pos);
        t.weight -= w;
        if t.weight < 0.0 {
            if t.weight < -CLAMP_TOLERANCE {
                self.counters.clamped += 1;
            }
            t.weight = 0.0;
        }
        if t.label() == Label::Outside {
            self.lowered.push(h);
        }
    }

    /// Finite neighbors of `path` that are not on it, in path order. Path
    /// tets end up stamped with the first returned stamp, neighbors with
    /// the second.
    fn path_neighbors(tri: &Triangulation, path: &[TetHandle]) -> (Vec<TetHandle>, u32, u32) {
        let on_path = tri.new_mark();
        for &h in path {
            tri.mark(h, on_path);
        }
        let near = tri.new_mark();
        let mut out = Vec::with_capacity(2 * path.len() + 2);
        for &h in path {
            for nb in tri.tet(h).n {
                if !tri.is_infinite(nb) && !tri.is_marked(nb, on_path) && !tri.is_marked(nb, near) {
                    tri.mark(nb, near);
                    out.push(nb);
                }
            }
        }
        (out, on_path, near)
    }

    /// Walks the ray and adds its weights.
    pub fn trace(&mut self, tri: &mut Triangulation, ray: RayId, point: VertexId, camera: &Point) -> Result<Contribution, DelaunayError> {
        let path = self.walk(tri, point, camera)?;
        let (neighbors, _, _) = Self::path_neighbors(tri, &path);
        for &h in &path {
            self.contribute(tri, h, ray, RayRole::Traversed);
        }
        for &h in &neighbors {
            self.contribute(tri, h, ray, RayRole::Neighbor);
        }
        Ok(Contribution { path, neighbors })
    }

    /// Removes a ray's weights from the tetrahedra of `old` that are still alive.
    pub fn untrace(&mut self, tri: &mut Triangulation, ray: RayId, old: &Contribution) {
        for &h in &old.path {
            if tri.is_alive(h) {
                self.withdraw(tri, h, ray, RayRole::Traversed);
            }
        }
        for &h in &old.neighbors {
            if tri.is_alive(h) {
                self.withdraw(tri, h, ray, RayRole::Neighbor);
            }
        }
    }

    /// Re-walks a ray after its surroundings changed. Weights change only
    /// where the ray's role on a tetrahedron appeared, vanished or changed.
    /// On failure the old contribution is withdrawn.
    pub fn retrace(
        &mut self,
        tri: &mut Triangulation,
        ray: RayId,
        point: VertexId,
        camera: &Point,
        old: &Contribution,
    ) -> Result<Contribution, DelaunayError> {
        // A walk is a function of the live tetrahedra it visits, so the old
        // path is still correct up to its first destroyed tetrahedron.
        // Likewise, past its last destroyed tetrahedron the old path is
        // still correct once the new walk steps onto it the same way.
        let walked = self.first_tet(tri, point, camera).and_then(|first| {
            let mut prefix = Vec::with_capacity(old.path.len() + 16);
            if old.path.first() == Some(&first) {
                prefix.extend(old.path.iter().copied().take_while(|&h| tri.is_alive(h)));
            } else {
                prefix.push(first);
            }
            let dead = old.path.iter().rposition(|&h| !tri.is_alive(h));
            let tail = &old.path[dead.map_or(old.path.len(), |d| d + 1)..];
            let stamp = tri.new_mark();
            for &h in tail {
                tri.mark(h, stamp);
            }
            self.walk_from(tri, point, camera, prefix, Some((tail, stamp)))
        });
        let path = match walked {
            Ok(p) => p,
            Err(e) => {
                self.untrace(tri, ray, old);
                return Err(e);
            }
        };
        let (neighbors, on_path, near) = Self::path_neighbors(tri, &path);
        let mut kept = Vec::with_capacity(old.path.len() + old.neighbors.len());
        let old_roles = old
            .path
            .iter()
            .map(|&h| (h, RayRole::Traversed, on_path))
            .chain(old.neighbors.iter().map(|&h| (h, RayRole::Neighbor, near)));
        let mut stale = Vec::with_capacity(old.path.len() + old.neighbors.len());
        for (h, role, stamp) in old_roles {
            if !tri.is_alive(h) {
                continue;
            }
            if tri.is_marked(h, stamp) {
                kept.push(h);
            } else {
                stale.push((h, role));
            }
        }
        for (h, role) in stale {
            self.withdraw(tri, h, ray, role);
        }
        let unchanged = tri.new_mark();
        for &h in &kept {
            tri.mark(h, unchanged);
        }
        for (hs, role) in [(&path, RayRole::Traversed), (&neighbors, RayRole::Neighbor)] {
            for &h in hs.iter() {
                if !tri.is_marked(h, unchanged) {
                    self.contribute(tri, h, ray, role);
                }
            }
        }
        Ok(Contribution { path, neighbors })
    }
}

/// Whether the closed tetrahedron `h` contains `c`.
fn contains(tri: &Triangulation, h: TetHandle, c: &Point) -> bool {
    !tri.is_infinite(h) && (0..4).all(|i| tri.orient_replaced(h, i, c) >= 0)
}

/// Whether the line `p -> c` leaves `cur` through facet `i`: `c` must be
/// strictly beyond the facet and the line must meet the facet triangle.
/// `Some(true)` for a crossing through the triangle interior, `Some(false)`
/// for one through its boundary, `None` otherwise.
fn exit_crossing(tri: &Triangulation, cur: TetHandle, i: usize, p: &Point, c: &Point) -> Option<bool> {
    if tri.orient_replaced(cur, i, c) >= 0 {
        return None;
    }
    let t = tri.tet(cur);
    let f = FACET_OUT[i];
    let a = tri.position(t.v[f[0]]);
    let b = tri.position(t.v[f[1]]);
    let d = tri.position(t.v[f[2]]);
    let s = [orient3d(p, c, a, b), orient3d(p, c, b, d), orient3d(p, c, d, a)];
    let pos = s.iter().any(|&x| x > 0);
    let neg = s.iter().any(|&x| x < 0);
    if pos && neg {
        return None;
    }
    if !pos && !neg {
        // The line lies in the facet plane.
        return None;
    }
    Some(s.iter().all(|&x| x != 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delaunay::VertexKind;

    fn cube_with_point() -> (Triangulation, VertexId) {
        let mut pts = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    pts.push((Point::new(i as f64 * 10.0, j as f64 * 10.0, k as f64 * 10.0), VertexKind::Steiner));
                }
            }
        }
        let (mut tri, _) = Triangulation::from_points(&pts).unwrap();
        let v = tri.insert(Point::new(3.1, 4.2, 5.3), VertexKind::Slam(1), None).unwrap();
        (tri, v)
    }

    #[test]
    fn path_is_connected_and_ends_at_camera() {
        let (mut tri, v) = cube_with_point();
        let mut rt = RayTracer::new(1.0, 0.25, false);
        let cam = Point::new(17.3, 15.1, 12.7);
        let c = rt.trace(&mut tri, 0, v, &cam).unwrap();
        assert!(tri.tet(c.path[0]).index_of(v).is_some());
        assert!(contains(&tri, *c.path.last().unwrap(), &cam));
        for w in c.path.windows(2) {
            assert!(tri.tet(w[0]).neighbor_index(w[1]).is_some());
        }
        for &h in &c.path {
            assert_eq!(tri.tet(h).weight, 1.0);
        }
        for &h in &c.neighbors {
            assert_eq!(tri.tet(h).weight, 0.25);
        }
    }

    #[test]
    fn point_and_camera_in_same_tet() {
        let (mut tri, v) = cube_with_point();
        let mut rt = RayTracer::new(1.0, 0.25, false);
        let start = rt.first_tet(&tri, v, &Point::new(3.2, 4.3, 5.4)).unwrap();
        let pts = tri.tet_points(start);
        let centroid = Point::from((pts[0].coords + pts[1].coords + pts[2].coords + pts[3].coords) / 4.0);
        let cam = Point::from(tri.position(v).coords * 0.5 + centroid.coords * 0.5);
        let c = rt.trace(&mut tri, 0, v, &cam).unwrap();
        assert_eq!(c.path.len(), 1);
        assert_eq!(c.neighbors.len(), 4);
    }

    #[test]
    fn untrace_restores_bitwise() {
        let (mut tri, v) = cube_with_point();
        let mut rt = RayTracer::new(1.0, 0.25, false);
        let before: Vec<f64> = tri.tets().map(|(_, t)| t.weight).collect();
        let cam = Point::new(17.3, 15.1, 12.7);
        let c = rt.trace(&mut tri, 7, v, &cam).unwrap();
        rt.untrace(&mut tri, 7, &c);
        let after: Vec<f64> = tri.tets().map(|(_, t)| t.weight).collect();
        assert_eq!(before, after);
        assert!(tri.tets().all(|(_, t)| t.rays.is_empty()));
        // Second untrace finds nothing to remove.
        rt.untrace(&mut tri, 7, &c);
        assert_eq!(rt.counters.clamped, 0);
    }

    #[test]
    fn retrace_without_change_is_identity() {
        let (mut tri, v) = cube_with_point();
        let mut rt = RayTracer::new(1.0, 0.25, false);
        let cam = Point::new(17.3, 15.1, 12.7);
        let c = rt.trace(&mut tri, 0, v, &cam).unwrap();
        let w: Vec<f64> = tri.tets().map(|(_, t)| t.weight).collect();
        let c2 = rt.retrace(&mut tri, 0, v, &cam, &c).unwrap();
        assert_eq!(c, c2);
        assert_eq!(w, tri.tets().map(|(_, t)| t.weight).collect::<Vec<_>>());
    }

    #[test]
    fn cache_is_transparent() {
        let (mut a, v) = cube_with_point();
        let mut b = a.clone();
        let mut ra = RayTracer::new(1.0, 0.25, true);
        let mut rb = RayTracer::new(1.0, 0.25, false);
        let cams = [Point::new(17.3, 15.1, 12.7), Point::new(17.5, 15.0, 12.9), Point::new(1.5, 18.0, 19.0)];
        for (i, cam) in cams.iter().enumerate() {
            let ca = ra.trace(&mut a, i as u32, v, cam).unwrap();
            let cb = rb.trace(&mut b, i as u32, v, cam).unwrap();
            assert_eq!(ca, cb);
        }
        assert!(ra.counters.hits > 0);
        let wa: Vec<f64> = a.tets().map(|(_, t)| t.weight).collect();
        let wb: Vec<f64> = b.tets().map(|(_, t)| t.weight).collect();
        assert_eq!(wa, wb);
    }
}
