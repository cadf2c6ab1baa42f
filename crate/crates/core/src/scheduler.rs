//! Per-keyframe batching of ray operations.
//!
//! Each ray collects at most one of each operation between flushes. At flush
//! the set is resolved (`{Trace, Retrace}` is a trace, `{Untrace, Retrace}`
//! an untrace, `{Untrace, Trace, ..}` an untrace followed by a trace) and all
//! untraces run first, then traces, then retraces.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashMap as HashMap;

use serde::{Deserialize, Serialize};

use crate::delaunay::{PointId, RayId, TetHandle, Triangulation, VertexId};
use crate::geom::Point;
use crate::raytracer::{Contribution, RayTracer};

pub type CameraId = u32;

const TRACE: u8 = 1;
const UNTRACE: u8 = 2;
const RETRACE: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayOp {
    Trace,
    Untrace,
    Retrace,
}

impl RayOp {
    fn bit(self) -> u8 {
        match self {
            RayOp::Trace => TRACE,
            RayOp::Untrace => UNTRACE,
            RayOp::Retrace => RETRACE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayStatus {
    /// Never traced, or untraced and awaiting a trace.
    Pending,
    Traced,
    /// Some path tetrahedra were destroyed; a retrace is queued.
    Stale,
    /// The last walk failed; retried at every flush.
    Failed,
    Removed,
}

#[derive(Debug, Clone)]
pub struct Ray {
    pub id: RayId,
    pub camera: CameraId,
    pub point: PointId,
    pub contribution: Option<Contribution>,
    pub status: RayStatus,
    retire: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushStats {
    pub traced: usize,
    pub retraced: usize,
    pub untraced: usize,
    /// Resolved operations that had nothing to act on (no vertex for the
    /// point yet, or an untrace of a ray that was never traced).
    pub skipped: usize,
    /// Operations left after deduplication.
    pub resolved: usize,
    pub walk_failures: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Scheduler {
    rays: Vec<Ray>,
    by_point: HashMap<PointId, Vec<RayId>>,
    by_pair: HashMap<(CameraId, PointId), RayId>,
    ops: BTreeMap<RayId, u8>,
    failed: BTreeSet<RayId>,
}

impl Scheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ray(&self, id: RayId) -> &Ray {
        &self.rays[id as usize]
    }

    /// Rays that are not removed.
    pub fn live_rays(&self) -> impl Iterator<Item = &Ray> {
        self.rays.iter().filter(|r| r.status != RayStatus::Removed)
    }

    pub fn rays_of(&self, point: PointId) -> &[RayId] {
        self.by_point.get(&point).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn pending_ops(&self) -> usize {
        self.ops.len()
    }

    /// Registers the observation of `point` from `camera`; returns the ray
    /// and whether it is new.
    pub fn add_ray(&mut self, camera: CameraId, point: PointId) -> (RayId, bool) {
        if let Some(&id) = self.by_pair.get(&(camera, point)) {
            return (id, false);
        }
        let id = self.rays.len() as RayId;
        self.rays.push(Ray {
            id,
            camera,
            point,
            contribution: None,
            status: RayStatus::Pending,
            retire: false,
        });
        self.by_pair.insert((camera, point), id);
        self.by_point.entry(point).or_default().push(id);
        (id, true)
    }

    pub fn schedule(&mut self, ray: RayId, op: RayOp) {
        *self.ops.entry(ray).or_default() |= op.bit();
    }

    /// Queues a retrace for every ray contributing to any of `tets`.
    pub fn schedule_region(&mut self, tri: &Triangulation, tets: &[TetHandle]) {
        let ids = self.region_rays(tri, tets);
        self.schedule_all(&ids, RayOp::Retrace);
    }

    fn schedule_point(&mut self, point: PointId, op: RayOp) {
        let ids = self.by_point.get(&point).cloned().unwrap_or_default();
        for id in ids {
            self.schedule(id, op);
        }
    }

    /// Before inserting `point` into `region`.
    pub fn on_point_added(&mut self, tri: &Triangulation, point: PointId, region: &[TetHandle]) {
        self.schedule_point(point, RayOp::Trace);
        self.schedule_region(tri, region);
    }

    /// Before deleting the star of `point`; its rays are untraced and dropped.
    pub fn on_point_removed(&mut self, tri: &Triangulation, point: PointId, star: &[TetHandle]) {
        self.retire_point(point);
        self.schedule_region(tri, star);
    }

    /// Before deleting the star of a point about to move. The rays keep their
    /// ids; the caller reports the new position's region via
    /// [`Scheduler::on_point_added`].
    pub fn on_point_moved(&mut self, tri: &Triangulation, point: PointId, old_star: &[TetHandle]) {
        self.schedule_point(point, RayOp::Untrace);
        self.schedule_point(point, RayOp::Trace);
        self.schedule_region(tri, old_star);
    }

    /// Untraces and then deletes every ray ending at `point`.
    pub fn retire_point(&mut self, point: PointId) {
        let ids = self.by_point.get(&point).cloned().unwrap_or_default();
        for id in ids {
            self.schedule(id, RayOp::Untrace);
            self.rays[id as usize].retire = true;
        }
    }

    /// Rays contributing to any of `tets`, sorted.
    pub fn region_rays(&self, tri: &Triangulation, tets: &[TetHandle]) -> Vec<RayId> {
        let mut out: Vec<RayId> = tets.iter().flat_map(|&h| tri.tet(h).rays.iter().map(|&(r, _)| r)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn schedule_all(&mut self, ids: &[RayId], op: RayOp) {
        for &id in ids {
            self.schedule(id, op);
            let ray = &mut self.rays[id as usize];
            if op == RayOp::Retrace && ray.status == RayStatus::Traced {
                ray.status = RayStatus::Stale;
            }
        }
    }

    /// Resolves and executes all queued operations.
    pub fn flush(
        &mut self,
        tri: &mut Triangulation,
        tracer: &mut RayTracer,
        camera_of: impl Fn(CameraId) -> Option<Point>,
        vertex_of: impl Fn(PointId) -> Option<VertexId>,
    ) -> FlushStats {
        for &id in &self.failed {
            *self.ops.entry(id).or_default() |= TRACE;
        }
        let ops = std::mem::take(&mut self.ops);
        let mut stats = FlushStats::default();
        let mut untraces = Vec::new();
        let mut traces = Vec::new();
        let mut retraces = Vec::new();
        for (&id, &bits) in &ops {
            if bits & UNTRACE != 0 {
                untraces.push(id);
                if bits & TRACE != 0 {
                    traces.push(id);
                }
            } else if bits & TRACE != 0 {
                traces.push(id);
            } else if bits & RETRACE != 0 {
                retraces.push(id);
            }
        }
        stats.resolved = untraces.len() + traces.len() + retraces.len();

        for id in untraces {
            let ray = &mut self.rays[id as usize];
            match ray.contribution.take() {
                Some(c) => {
                    tracer.untrace(tri, id, &c);
                    stats.untraced += 1;
                }
                None => stats.skipped += 1,
            }
            ray.status = RayStatus::Pending;
            if ray.retire {
                ray.status = RayStatus::Removed;
                self.failed.remove(&id);
                let key = (ray.camera, ray.point);
                self.by_pair.remove(&key);
                if let Some(list) = self.by_point.get_mut(&key.1) {
                    list.retain(|&r| r != id);
                    if list.is_empty() {
                        self.by_point.remove(&key.1);
                    }
                }
            }
        }

        for id in traces {
            let ray = &self.rays[id as usize];
            if ray.status == RayStatus::Removed {
                stats.skipped += 1;
                continue;
            }
            let (Some(v), Some(cam)) = (vertex_of(ray.point), camera_of(ray.camera)) else {
                stats.skipped += 1;
                continue;
            };
            if let Some(old) = self.rays[id as usize].contribution.take() {
                tracer.untrace(tri, id, &old);
            }
            stats.traced += 1;
            self.finish(tracer.trace(tri, id, v, &cam), id, &mut stats);
        }

        for id in retraces {
            let ray = &self.rays[id as usize];
            if ray.status == RayStatus::Removed {
                stats.skipped += 1;
                continue;
            }
            let (Some(v), Some(cam)) = (vertex_of(ray.point), camera_of(ray.camera)) else {
                stats.skipped += 1;
                continue;
            };
            stats.retraced += 1;
            let result = match self.rays[id as usize].contribution.take() {
                Some(old) => tracer.retrace(tri, id, v, &cam, &old),
                None => tracer.trace(tri, id, v, &cam),
            };
            self.finish(result, id, &mut stats);
        }
        stats
    }

    fn finish(&mut self, result: Result<Contribution, crate::delaunay::DelaunayError>, id: RayId, stats: &mut FlushStats) {
        let ray = &mut self.rays[id as usize];
        match result {
            Ok(c) => {
                ray.contribution = Some(c);
                ray.status = RayStatus::Traced;
                self.failed.remove(&id);
            }
            Err(_) => {
                self.failed.insert(id);
                ray.contribution = None;
                ray.status = RayStatus::Failed;
                stats.walk_failures += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delaunay::VertexKind;

    fn setup() -> (Triangulation, RayTracer, Scheduler) {
        let mut pts = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    pts.push((Point::new(i as f64 * 10.0, j as f64 * 10.0, k as f64 * 10.0), VertexKind::Steiner));
                }
            }
        }
        let (tri, _) = Triangulation::from_points(&pts).unwrap();
        (tri, RayTracer::new(1.0, 0.25, false), Scheduler::new())
    }

    #[test]
    fn added_point_with_two_observations() {
        let (mut tri, mut rt, mut s) = setup();
        let p = Point::new(4.1, 5.2, 6.3);
        s.add_ray(0, 9);
        s.add_ray(1, 9);
        let region = tri.conflict_region(&p, None).unwrap();
        s.on_point_added(&tri, 9, &region.tets);
        let (v, _) = tri.insert_vertex(p, VertexKind::Slam(9), &region).unwrap();
        let cams = [Point::new(15., 15., 15.), Point::new(2., 18., 3.)];
        let st = s.flush(&mut tri, &mut rt, |c| Some(cams[c as usize]), |_| Some(v));
        assert_eq!((st.traced, st.retraced, st.untraced), (2, 0, 0));
        assert_eq!(st.resolved, 2);
    }

    #[test]
    fn resolution_rules() {
        let (mut tri, mut rt, mut s) = setup();
        let (r, _) = s.add_ray(0, 1);
        s.schedule(r, RayOp::Trace);
        s.schedule(r, RayOp::Retrace);
        s.schedule(r, RayOp::Trace);
        let v = tri.insert(Point::new(4.1, 5.2, 6.3), VertexKind::Slam(1), None).unwrap();
        let cam = Point::new(15., 15., 15.);
        let st = s.flush(&mut tri, &mut rt, |_| Some(cam), |_| Some(v));
        assert_eq!((st.traced, st.retraced, st.untraced, st.resolved), (1, 0, 0, 1));

        s.schedule(r, RayOp::Untrace);
        s.schedule(r, RayOp::Retrace);
        let st = s.flush(&mut tri, &mut rt, |_| Some(cam), |_| Some(v));
        assert_eq!((st.traced, st.retraced, st.untraced, st.resolved), (0, 0, 1, 1));
        assert!(tri.tets().all(|(_, t)| t.weight == 0.0));

        s.schedule(r, RayOp::Trace);
        s.flush(&mut tri, &mut rt, |_| Some(cam), |_| Some(v));
        for op in [RayOp::Retrace, RayOp::Trace, RayOp::Untrace] {
            s.schedule(r, op);
        }
        let st = s.flush(&mut tri, &mut rt, |_| Some(cam), |_| Some(v));
        assert_eq!((st.traced, st.retraced, st.untraced, st.resolved), (1, 0, 1, 2));
        assert_eq!(s.ray(r).status, RayStatus::Traced);
    }

    #[test]
    fn removal_retires_rays() {
        let (mut tri, mut rt, mut s) = setup();
        let v = tri.insert(Point::new(4.1, 5.2, 6.3), VertexKind::Slam(1), None).unwrap();
        s.add_ray(0, 1);
        s.add_ray(1, 1);
        s.schedule_point(1, RayOp::Trace);
        let cams = [Point::new(15., 15., 15.), Point::new(2., 18., 3.)];
        s.flush(&mut tri, &mut rt, |c| Some(cams[c as usize]), |_| Some(v));
        let star = tri.star(v);
        s.on_point_removed(&tri, 1, &star);
        tri.remove_vertex(v).unwrap();
        let st = s.flush(&mut tri, &mut rt, |c| Some(cams[c as usize]), |_| None);
        assert_eq!((st.traced, st.retraced, st.untraced), (0, 0, 2));
        assert_eq!(s.live_rays().count(), 0);
        assert!(tri.tets().all(|(_, t)| t.weight == 0.0 && t.rays.is_empty()));
    }
}
