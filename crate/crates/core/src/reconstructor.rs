//! The per-keyframe pipeline.
//!
//! For every keyframe: grow the Steiner grid around the new content, compute
//! the enclosing set of everything about to change, shrink O out of it,
//! apply Steiner, removal, move and insertion updates to the triangulation,
//! flush the queued ray operations, then grow O back and run the genus step.

use std::collections::BTreeMap;

use rustc_hash::{FxHashMap as HashMap, FxHashSet as HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, ConfigError, Mode};
use crate::delaunay::{DelaunayError, Label, PointId, TetHandle, Triangulation, VertexId, VertexKind, DUPLICATE_TOLERANCE};
use crate::geom::Point;
use crate::io::KeyframeBatch;
use crate::manifold::{boundary_vertices, Manifold};
use crate::mesh::TriangleMesh;
use crate::raytracer::RayTracer;
use crate::scheduler::{CameraId, RayOp, Scheduler};
use crate::steiner::{CellFrame, CellIndex, GridError, SteinerGrid};

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("mode can only change between keyframes")]
    InvalidMidFrame,
    #[error("keyframe {got} does not follow {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("no keyframe has been started")]
    NoFrame,
    #[error("observation references unknown {kind} {id}")]
    UnknownId { kind: &'static str, id: u64 },
    #[error("at least one keyframe is required")]
    Empty,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Delaunay(#[from] DelaunayError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Wall-clock seconds per pipeline step, measured exclusively.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimings {
    pub initialize_steiner: f64,
    pub shrink: f64,
    pub point_insertion: f64,
    pub ray_tracing: f64,
    pub grow: f64,
    pub total: f64,
}

/// One record per keyframe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeyframeStats {
    pub index: u64,
    pub timings: StepTimings,
    /// Moves integrated (vertex removed and re-inserted).
    pub moving_points: usize,
    /// First-time insertions of SLAM points.
    pub new_points: usize,
    pub tets_shrunk: usize,
    pub steiner_cells_shrunk: usize,
    /// Insertions refused because their conflict region touched O, plus
    /// duplicates.
    pub points_not_added: usize,
    pub traced: usize,
    pub retraced: usize,
    pub untraced: usize,
    /// Resolved flush operations with nothing to act on.
    pub skipped_ray_ops: usize,
    /// Flush operations left after deduplication.
    pub resolved_ray_ops: usize,
    pub walk_failures: usize,
    pub cache_proposals: u64,
    pub cache_hits: u64,
    pub cache_hit_rate: f64,
    pub steiner_inserted: usize,
    pub steiner_pending: usize,
    pub points_removed: usize,
    /// Removals and moves postponed because the star touched O.
    pub deferred_updates: usize,
    /// Removals and moves given up after staying blocked.
    pub updates_abandoned: usize,
    pub duplicates: usize,
    pub points_dropped: usize,
    pub containment_checks: usize,
    pub containment_violations: usize,
    pub shrink_stuck: usize,
    /// Outside tetrahedra returned to Inside after losing their free-space weight.
    pub revoked: usize,
    pub grown: usize,
    pub grow_rejected: usize,
    pub genus_commits: usize,
    pub vertices: usize,
    pub tets: usize,
    pub outside_tets: usize,
}

/// Tetrahedra that may be affected by this keyframe's updates.
#[derive(Debug, Clone)]
pub struct EnclosingSet {
    pub cells: HashSet<CellIndex>,
    /// Baseline ball around the camera.
    pub ball: Option<(Point, f64)>,
    frame: CellFrame,
    bounds: (CellIndex, CellIndex),
}

impl EnclosingSet {
    pub fn contains_point(&self, p: &Point) -> bool {
        if let Some((c, r)) = &self.ball {
            if (p - c).norm() <= *r {
                return true;
            }
        }
        let c = self.frame.cell_floor(p);
        let (lo, hi) = self.bounds;
        let c = CellIndex::new(c.i.clamp(lo.i, hi.i), c.j.clamp(lo.j, hi.j), c.k.clamp(lo.k, hi.k));
        self.cells.contains(&c)
    }

    /// A tetrahedron belongs to the set when any finite vertex does.
    pub fn contains_tet(&self, tri: &Triangulation, h: TetHandle) -> bool {
        tri.tet(h)
            .v
            .iter()
            .any(|&v| v != crate::delaunay::INFINITE && self.contains_point(tri.position(v)))
    }

    /// Materializes the tetrahedra of the set (full scan).
    pub fn tets(&self, tri: &Triangulation) -> Vec<TetHandle> {
        tri.tets().map(|(h, _)| h).filter(|&h| self.contains_tet(tri, h)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PointState {
    /// Known but not in the triangulation.
    Waiting,
    Inserted,
    Dropped,
    Removed,
}

#[derive(Debug, Clone)]
struct PointRecord {
    /// Latest position estimate.
    pos: Point,
    vertex: Option<VertexId>,
    state: PointState,
    /// Keyframes with at least one observation.
    sightings: u32,
    last_sighting: Option<u64>,
    ever_inserted: bool,
}

pub struct Reconstructor {
    cfg: Config,
    mode: Mode,
    grid: SteinerGrid,
    tri: Triangulation,
    manifold: Manifold,
    tracer: RayTracer,
    sched: Scheduler,
    cameras: HashMap<CameraId, Point>,
    points: BTreeMap<PointId, PointRecord>,
    pending_steiner: Vec<Point>,
    /// Points waiting for insertion, with attempts left.
    queue: BTreeMap<PointId, u32>,
    /// Removals and moves waiting for their star to leave O, with
    /// keyframes left before they are abandoned.
    pending_removals: BTreeMap<PointId, u32>,
    pending_moves: BTreeMap<PointId, u32>,
    last_index: Option<u64>,
    staged: Option<KeyframeBatch>,
    containment_violations: usize,
}

impl Reconstructor {
    pub fn new(cfg: Config) -> Result<Self, ReconstructError> {
        cfg.validate()?;
        let mode = cfg.mode;
        let grid = SteinerGrid::new(cfg.l_steiner, cfg.initial_cells)?;
        Ok(Reconstructor {
            grid,
            tri: Triangulation::new(),
            manifold: Manifold::new(cfg.t_free),
            tracer: RayTracer::new(cfg.w1, cfg.w2, mode.next_tet_cache),
            sched: Scheduler::new(),
            cameras: HashMap::default(),
            points: BTreeMap::new(),
            pending_steiner: Vec::new(),
            queue: BTreeMap::new(),
            pending_removals: BTreeMap::new(),
            pending_moves: BTreeMap::new(),
            last_index: None,
            staged: None,
            containment_violations: 0,
            mode,
            cfg,
        })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn triangulation(&self) -> &Triangulation {
        &self.tri
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn grid(&self) -> &SteinerGrid {
        &self.grid
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.sched
    }

    pub fn tracer(&self) -> &RayTracer {
        &self.tracer
    }

    pub fn camera(&self, id: CameraId) -> Option<Point> {
        self.cameras.get(&id).copied()
    }

    pub fn vertex_of(&self, p: PointId) -> Option<VertexId> {
        self.points.get(&p).and_then(|r| r.vertex)
    }

    /// Total containment violations seen so far.
    pub fn containment_violations(&self) -> usize {
        self.containment_violations
    }

    pub fn surface(&self) -> TriangleMesh {
        self.manifold.extract_surface(&self.tri)
    }

    pub fn set_mode(&mut self, mode: Mode) -> Result<(), ReconstructError> {
        if self.staged.is_some() {
            return Err(ReconstructError::InvalidMidFrame);
        }
        self.mode = mode;
        self.cfg.mode = mode;
        self.tracer.cache = mode.next_tet_cache;
        if self.grid.is_bootstrapped() {
            self.manifold.set_hash_enabled(&self.tri, mode.boundary_hash);
        }
        Ok(())
    }

    /// Processes the first keyframes.
    pub fn bootstrap(&mut self, batches: Vec<KeyframeBatch>) -> Result<Vec<KeyframeStats>, ReconstructError> {
        if batches.is_empty() {
            return Err(ReconstructError::Empty);
        }
        batches.into_iter().map(|b| self.process_keyframe(b)).collect()
    }

    pub fn process_keyframe(&mut self, batch: KeyframeBatch) -> Result<KeyframeStats, ReconstructError> {
        self.begin_keyframe(batch)?;
        self.end_keyframe()
    }

    /// Stages a keyframe. The mode is locked until [`Self::end_keyframe`].
    pub fn begin_keyframe(&mut self, batch: KeyframeBatch) -> Result<(), ReconstructError> {
        if self.staged.is_some() {
            return Err(ReconstructError::InvalidMidFrame);
        }
        if let Some(last) = self.last_index {
            if batch.index <= last {
                return Err(ReconstructError::OutOfOrder { last, got: batch.index });
            }
        }
        self.staged = Some(batch);
        Ok(())
    }

    pub fn end_keyframe(&mut self) -> Result<KeyframeStats, ReconstructError> {
        let batch = self.staged.take().ok_or(ReconstructError::NoFrame)?;
        self.last_index = Some(batch.index);
        self.run(batch)
    }

    fn bootstrap_grid(&mut self, c0: &Point) -> Result<(), ReconstructError> {
        let pts = self.grid.bootstrap(c0)?;
        let input: Vec<(Point, VertexKind)> = pts.into_iter().map(|p| (p, VertexKind::Steiner)).collect();
        self.tri = Triangulation::from_points(&input)?.0;
        self.manifold.set_frame(self.grid.frame().unwrap());
        self.manifold.set_hash_enabled(&self.tri, self.mode.boundary_hash);
        Ok(())
    }

    fn ingest(&mut self, batch: &KeyframeBatch, st: &mut KeyframeStats) -> Result<(), ReconstructError> {
        self.cameras.insert(batch.camera.id, batch.camera.center);
        for &pid in &batch.removed_points {
            let Some(rec) = self.points.get_mut(&pid) else { continue };
            match rec.state {
                PointState::Inserted => {
                    self.pending_removals.entry(pid).or_insert(1 + self.cfg.insertion_retries);
                    self.pending_moves.remove(&pid);
                }
                PointState::Waiting => {
                    rec.state = PointState::Removed;
                    self.queue.remove(&pid);
                    self.sched.retire_point(pid);
                    st.points_removed += 1;
                }
                PointState::Dropped | PointState::Removed => rec.state = PointState::Removed,
            }
        }
        for &(pid, pos) in &batch.moved_points {
            let Some(rec) = self.points.get_mut(&pid) else { continue };
            match rec.state {
                PointState::Inserted if self.mode.moving_points && !self.pending_removals.contains_key(&pid) => {
                    rec.pos = pos;
                    self.pending_moves.entry(pid).or_insert(1 + self.cfg.insertion_retries);
                }
                PointState::Waiting => rec.pos = pos,
                _ => {}
            }
        }
        for &(pid, pos) in &batch.new_points {
            self.points.insert(
                pid,
                PointRecord {
                    pos,
                    vertex: None,
                    state: PointState::Waiting,
                    sightings: 0,
                    last_sighting: None,
                    ever_inserted: false,
                },
            );
            if self.mode.moving_points {
                self.queue.insert(pid, 1 + self.cfg.insertion_retries);
            }
        }
        for &(cam, pid) in &batch.observations {
            if !self.cameras.contains_key(&cam) {
                return Err(ReconstructError::UnknownId { kind: "camera", id: cam as u64 });
            }
            let Some(rec) = self.points.get_mut(&pid) else {
                return Err(ReconstructError::UnknownId { kind: "point", id: pid });
            };
            if matches!(rec.state, PointState::Removed | PointState::Dropped) {
                continue;
            }
            if rec.last_sighting != Some(batch.index) {
                rec.last_sighting = Some(batch.index);
                rec.sightings += 1;
                if !self.mode.moving_points && rec.state == PointState::Waiting && rec.sightings == 2 && !rec.ever_inserted {
                    self.queue.insert(pid, 1 + self.cfg.insertion_retries);
                }
            }
            let (ray, fresh) = self.sched.add_ray(cam, pid);
            if fresh && rec.state == PointState::Inserted && !self.pending_moves.contains_key(&pid) {
                self.sched.schedule(ray, RayOp::Trace);
            }
        }
        Ok(())
    }

    /// Cells within the enclosing radius of each position, plus the baseline
    /// ball when spherical enclosing is on.
    pub fn enclosing_set(&self, positions: &[Point], camera: &Point) -> EnclosingSet {
        let frame = self.grid.frame().expect("grid bootstrapped");
        let r = self.cfg.enclosing_radius as i64;
        let ball = self
            .mode
            .spherical_enclosing
            .then(|| (*camera, self.cfg.r_max + 3f64.sqrt() * self.cfg.l_steiner));
        let mut cells = HashSet::default();
        for p in positions {
            if let Some((c, rad)) = &ball {
                // Content inside the ball is covered by it.
                if (p - c).norm() + 3f64.sqrt() * self.cfg.l_steiner <= *rad {
                    continue;
                }
            }
            let c = self.grid.clamp(frame.cell_floor(p));
            cells.extend(self.grid.block(c, r));
        }
        EnclosingSet {
            cells,
            ball,
            frame,
            bounds: self.grid.cell_bounds(),
        }
    }

    fn touches_outside(&self, tets: &[TetHandle]) -> bool {
        tets.iter().any(|&h| self.tri.tet(h).label() == Label::Outside)
    }

    fn check_containment(&mut self, e: &EnclosingSet, region: &[TetHandle], st: &mut KeyframeStats) {
        st.containment_checks += 1;
        let ok = region
            .iter()
            .filter(|&&h| !self.tri.is_infinite(h))
            .all(|&h| e.contains_tet(&self.tri, h));
        if !ok {
            st.containment_violations += 1;
            self.containment_violations += 1;
        }
    }

    fn drop_point(&mut self, pid: PointId, st: &mut KeyframeStats) {
        if let Some(rec) = self.points.get_mut(&pid) {
            rec.state = PointState::Dropped;
        }
        self.sched.retire_point(pid);
        st.points_dropped += 1;
    }

    fn run(&mut self, batch: KeyframeBatch) -> Result<KeyframeStats, ReconstructError> {
        let t_start = Instant::now();
        let mut st = KeyframeStats {
            index: batch.index,
            ..Default::default()
        };
        let mut timings = StepTimings::default();
        let camera = batch.camera.center;

        // Steiner grid.
        let t = Instant::now();
        if !self.grid.is_bootstrapped() {
            self.bootstrap_grid(&camera)?;
        }
        self.ingest(&batch, &mut st)?;
        let mut targets: Vec<Point> = vec![camera];
        targets.extend(self.queue.keys().map(|p| self.points[p].pos));
        targets.extend(self.pending_moves.keys().map(|p| self.points[p].pos));
        for p in &targets {
            let layer = self.grid.ensure_contains(p)?;
            self.pending_steiner.extend(layer);
        }
        timings.initialize_steiner += t.elapsed().as_secs_f64();

        // Enclosing set and shrink.
        let t = Instant::now();
        let mut positions = targets[1..].to_vec();
        for pid in self.pending_moves.keys().chain(self.pending_removals.keys()) {
            if let Some(v) = self.points[pid].vertex {
                positions.push(*self.tri.position(v));
            }
        }
        positions.extend(self.pending_steiner.iter().copied());
        let e = self.enclosing_set(&positions, &camera);
        st.steiner_cells_shrunk = e.cells.len();
        if !positions.is_empty() && !self.manifold.is_empty() {
            let seeds = if self.mode.spherical_enclosing {
                self.manifold.boundary_tets(&self.tri)
            } else {
                self.manifold.boundary_lookup(&self.tri, &e.cells)
            };
            let s = self.manifold.shrink(&mut self.tri, |tri, h| e.contains_tet(tri, h), seeds);
            st.tets_shrunk = s.removed;
            st.shrink_stuck = s.stuck;
        }
        timings.shrink += t.elapsed().as_secs_f64();

        // Steiner insertion.
        let t = Instant::now();
        let steiner = std::mem::take(&mut self.pending_steiner);
        for p in steiner {
            let region = match self.tri.conflict_region(&p, None) {
                Ok(r) => r,
                Err(DelaunayError::DuplicateVertex(_)) => continue,
                Err(err) => return Err(err.into()),
            };
            if self.touches_outside(&region.tets) {
                self.pending_steiner.push(p);
                continue;
            }
            self.check_containment(&e, &region.tets, &mut st);
            self.sched.schedule_region(&self.tri, &region.tets);
            self.tri.insert_vertex(p, VertexKind::Steiner, &region)?;
            st.steiner_inserted += 1;
        }
        st.steiner_pending = self.pending_steiner.len();
        timings.initialize_steiner += t.elapsed().as_secs_f64();

        // Removals, moves, insertions.
        let t = Instant::now();
        self.apply_removals(&mut st);
        self.apply_moves(&mut st);
        self.apply_insertions(&e, &mut st);
        timings.point_insertion += t.elapsed().as_secs_f64();

        // Ray tracing.
        let t = Instant::now();
        let before = self.tracer.counters;
        let cameras = &self.cameras;
        let points = &self.points;
        let fs = self.sched.flush(
            &mut self.tri,
            &mut self.tracer,
            |c| cameras.get(&c).copied(),
            |p| points.get(&p).and_then(|r| r.vertex),
        );
        st.traced = fs.traced;
        st.retraced = fs.retraced;
        st.untraced = fs.untraced;
        st.skipped_ray_ops = fs.skipped;
        st.resolved_ray_ops = fs.resolved;
        st.walk_failures = fs.walk_failures;
        st.cache_proposals = self.tracer.counters.proposals - before.proposals;
        st.cache_hits = self.tracer.counters.hits - before.hits;
        st.cache_hit_rate = if st.cache_proposals > 0 {
            st.cache_hits as f64 / st.cache_proposals as f64
        } else {
            0.0
        };
        timings.ray_tracing += t.elapsed().as_secs_f64();

        // Grow and genus.
        let t = Instant::now();
        self.regrow(&e, &mut st);
        timings.grow += t.elapsed().as_secs_f64();

        timings.total = t_start.elapsed().as_secs_f64();
        st.timings = timings;
        st.vertices = self.tri.num_vertices();
        st.tets = self.tri.num_tets();
        st.outside_tets = self.manifold.len();

        if self.cfg.debug_invariants {
            self.verify()?;
        }
        Ok(st)
    }

    fn apply_removals(&mut self, st: &mut KeyframeStats) {
        let pending: Vec<PointId> = self.pending_removals.keys().copied().collect();
        for pid in pending {
            let v = self.points[&pid].vertex.expect("inserted point has a vertex");
            let star = self.tri.star(v);
            let blocked = self.touches_outside(&star) || star.iter().any(|&h| self.tri.is_infinite(h));
            let rays = self.sched.region_rays(&self.tri, &star);
            if blocked || self.tri.remove_vertex(v).is_err() {
                self.defer_removal(pid, st);
                continue;
            }
            self.sched.schedule_all(&rays, RayOp::Retrace);
            self.sched.retire_point(pid);
            let rec = self.points.get_mut(&pid).unwrap();
            rec.vertex = None;
            rec.state = PointState::Removed;
            self.pending_removals.remove(&pid);
            st.points_removed += 1;
        }
    }

    fn apply_moves(&mut self, st: &mut KeyframeStats) {
        let pending: Vec<PointId> = self.pending_moves.keys().copied().collect();
        for pid in pending {
            let rec = &self.points[&pid];
            let v = rec.vertex.expect("inserted point has a vertex");
            let target = rec.pos;
            let old = *self.tri.position(v);
            if (target - old).norm() <= DUPLICATE_TOLERANCE {
                self.pending_moves.remove(&pid);
                continue;
            }
            // A move onto another vertex is rejected outright.
            match self.tri.conflict_region(&target, Some(self.tri.incident_tet(v))) {
                Err(DelaunayError::DuplicateVertex(_)) => {
                    self.points.get_mut(&pid).unwrap().pos = old;
                    self.pending_moves.remove(&pid);
                    st.duplicates += 1;
                    continue;
                }
                _ => {}
            }
            let star = self.tri.star(v);
            let blocked = self.touches_outside(&star) || star.iter().any(|&h| self.tri.is_infinite(h));
            let rays = self.sched.region_rays(&self.tri, &star);
            if blocked || self.tri.remove_vertex(v).is_err() {
                self.defer_move(pid, old, st);
                continue;
            }
            self.sched.schedule_all(&rays, RayOp::Retrace);
            for &r in self.sched.rays_of(pid).to_vec().iter() {
                self.sched.schedule(r, RayOp::Untrace);
            }
            let rec = self.points.get_mut(&pid).unwrap();
            rec.vertex = None;
            rec.state = PointState::Waiting;
            self.pending_moves.remove(&pid);
            self.queue.insert(pid, 1 + self.cfg.insertion_retries);
            st.moving_points += 1;
        }
    }

    /// A removal that stays blocked is abandoned: the point's rays are
    /// withdrawn and its vertex stays behind as an orphan.
    fn defer_removal(&mut self, pid: PointId, st: &mut KeyframeStats) {
        st.deferred_updates += 1;
        let left = self.pending_removals.get_mut(&pid).unwrap();
        *left -= 1;
        if *left == 0 {
            self.pending_removals.remove(&pid);
            self.sched.retire_point(pid);
            let rec = self.points.get_mut(&pid).unwrap();
            rec.vertex = None;
            rec.state = PointState::Removed;
            st.updates_abandoned += 1;
        }
    }

    /// A move that stays blocked is abandoned and the point keeps its old
    /// position.
    fn defer_move(&mut self, pid: PointId, old: Point, st: &mut KeyframeStats) {
        st.deferred_updates += 1;
        let left = self.pending_moves.get_mut(&pid).unwrap();
        *left -= 1;
        if *left == 0 {
            self.pending_moves.remove(&pid);
            self.points.get_mut(&pid).unwrap().pos = old;
            // Rays observed while the move was pending were never traced.
            for &r in self.sched.rays_of(pid).to_vec().iter() {
                if self.sched.ray(r).contribution.is_none() {
                    self.sched.schedule(r, RayOp::Trace);
                }
            }
            st.updates_abandoned += 1;
        }
    }

    fn apply_insertions(&mut self, e: &EnclosingSet, st: &mut KeyframeStats) {
        let queue: Vec<(PointId, u32)> = self.queue.iter().map(|(&p, &n)| (p, n)).collect();
        for (pid, attempts) in queue {
            let pos = self.points[&pid].pos;
            let region = match self.tri.conflict_region(&pos, None) {
                Ok(r) => r,
                Err(DelaunayError::DuplicateVertex(_)) => {
                    st.duplicates += 1;
                    st.points_not_added += 1;
                    self.queue.remove(&pid);
                    self.drop_point(pid, st);
                    continue;
                }
                Err(_) => {
                    self.discard(pid, attempts, st);
                    continue;
                }
            };
            if self.touches_outside(&region.tets) || region.tets.iter().any(|&h| self.tri.is_infinite(h)) {
                self.discard(pid, attempts, st);
                continue;
            }
            self.check_containment(e, &region.tets, st);
            self.sched.on_point_added(&self.tri, pid, &region.tets);
            let v = match self.tri.insert_vertex(pos, VertexKind::Slam(pid), &region) {
                Ok((v, _)) => v,
                Err(_) => {
                    self.discard(pid, attempts, st);
                    continue;
                }
            };
            self.queue.remove(&pid);
            let rec = self.points.get_mut(&pid).unwrap();
            if !rec.ever_inserted {
                st.new_points += 1;
            }
            rec.vertex = Some(v);
            rec.state = PointState::Inserted;
            rec.ever_inserted = true;
        }
    }

    fn discard(&mut self, pid: PointId, attempts: u32, st: &mut KeyframeStats) {
        st.points_not_added += 1;
        if attempts > 1 {
            self.queue.insert(pid, attempts - 1);
        } else {
            self.queue.remove(&pid);
            self.drop_point(pid, st);
        }
    }

    fn regrow(&mut self, e: &EnclosingSet, st: &mut KeyframeStats) {
        let t_free = self.manifold.t_free();
        let mut lowered = self.tracer.take_lowered();
        self.tri.retain_unique_live(&mut lowered);
        lowered.sort_unstable();
        lowered.retain(|&h| self.manifold.contains(&self.tri, h) && self.tri.tet(h).weight <= t_free);
        if !lowered.is_empty() {
            let s = self
                .manifold
                .shrink(&mut self.tri, |tri, h| tri.tet(h).weight <= t_free, lowered);
            st.revoked = s.removed;
        }

        let mut raised = self.tracer.take_raised();
        // Only seeds the weight-ordered heap, so order does not matter.
        self.tri.retain_unique_live(&mut raised);
        let free = |tri: &Triangulation, h: TetHandle| {
            tri.is_alive(h) && {
                let t = tri.tet(h);
                !t.is_infinite() && t.label() == Label::Inside && t.weight > t_free
            }
        };
        let mut seeds: Vec<TetHandle> = Vec::new();
        if self.manifold.is_empty() {
            let best = self
                .tri
                .tets()
                .filter(|&(h, _)| free(&self.tri, h))
                .max_by(|a, b| a.1.weight.total_cmp(&b.1.weight).then(b.1.seq.cmp(&a.1.seq)));
            seeds.extend(best.map(|(h, _)| h));
        } else {
            let boundary = if self.mode.spherical_enclosing {
                self.manifold.boundary_tets(&self.tri)
            } else {
                self.manifold.boundary_lookup(&self.tri, &e.cells)
            };
            for h in boundary {
                seeds.extend(self.tri.tet(h).n.iter().copied().filter(|&nb| free(&self.tri, nb)));
            }
            for h in raised {
                if free(&self.tri, h) && self.tri.tet(h).n.iter().any(|&nb| self.manifold.contains(&self.tri, nb)) {
                    seeds.push(h);
                }
            }
        }
        let g = self.manifold.grow(&mut self.tri, seeds);
        st.grown = g.added;
        st.grow_rejected = g.rejected;

        let boundary = if self.mode.spherical_enclosing {
            self.manifold.boundary_tets(&self.tri)
        } else {
            self.manifold.boundary_lookup(&self.tri, &e.cells)
        };
        let verts = boundary_vertices(&self.tri, &boundary);
        st.genus_commits = self.manifold.genus_step(&mut self.tri, verts);
    }

    /// Checks every structural invariant; O(size of the reconstruction).
    pub fn verify(&self) -> Result<(), ReconstructError> {
        self.tri.validate().map_err(ReconstructError::Invariant)?;
        self.manifold.validate(&self.tri).map_err(ReconstructError::Invariant)?;
        for (h, t) in self.tri.tets() {
            if t.is_infinite() && (t.weight != 0.0 || t.label() != Label::Inside) {
                return Err(ReconstructError::Invariant(format!("infinite tet {h:?} carries weight or label")));
            }
        }
        for v in self.tri.vertex_ids() {
            if matches!(self.tri.vertex(v).kind, VertexKind::Slam(_)) && !self.grid.strictly_contains(self.tri.position(v)) {
                return Err(ReconstructError::Invariant(format!("vertex {v:?} on or outside the grid bounds")));
            }
        }
        Ok(())
    }

    /// Zeroes all weights and traces every live traced ray from scratch,
    /// returning the resulting weight of each live tetrahedron. The
    /// reconstruction itself is left untouched.
    pub fn fresh_weights(&self) -> HashMap<TetHandle, f64> {
        let mut tri = self.tri.clone();
        for h in tri.tet_handles() {
            let t = tri.tet_mut(h);
            t.weight = 0.0;
            t.rays.clear();
        }
        let mut tracer = RayTracer::new(self.cfg.w1, self.cfg.w2, false);
        for ray in self.sched.live_rays() {
            if ray.contribution.is_none() {
                continue;
            }
            let (Some(v), Some(c)) = (self.vertex_of(ray.point), self.camera(ray.camera)) else {
                continue;
            };
            let _ = tracer.trace(&mut tri, ray.id, v, &c);
        }
        tri.tets().map(|(h, t)| (h, t.weight)).collect()
    }
}
