//! Synthetic scenes with known geometry, standing in for SLAM output.
//!
//! Features are found by casting rays from each keyframe camera into the
//! scene, so every observation is unoccluded by construction. Estimates
//! carry Gaussian noise and, for a fraction of points, an extra offset that
//! shrinks to zero over the point's first few observations; each
//! improvement is emitted as a move record.

use std::collections::BTreeMap;

use nalgebra::{Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delaunay::PointId;
use crate::geom::{ray_triangle, Point, Vec3};
use crate::io::{Camera, KeyframeBatch, Pose};
use crate::mesh::TriangleMesh;
use crate::scheduler::CameraId;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("no evaluation ray hit the mesh")]
    NoHits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    /// Straight corridor along +x with pillars; forward motion.
    Corridor,
    /// Closed room with a central pillar; the camera circles inside.
    Box,
    /// Building front with balconies; the camera passes along it.
    Facade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Corridor: (unused, width, height). Box: room extents. Facade:
    /// (distance to facade, unused, height).
    pub dims: [f64; 3],
    /// Camera advance per keyframe, meters.
    pub step: f64,
    pub keyframes: u32,
    pub points_per_keyframe: u32,
    /// Standard deviation of isotropic position noise, meters.
    pub noise_sigma: f64,
    /// Fraction of points whose estimate starts off and converges.
    pub churn_fraction: f64,
    /// Initial offset of churned points, meters.
    pub churn_offset: f64,
    /// Observations over which a churned estimate converges.
    pub churn_observations: u32,
    /// Fraction of points that SLAM later deletes.
    pub removal_fraction: f64,
    pub max_range: f64,
    /// Full cone angle of the camera, degrees.
    pub fov_deg: f64,
    /// Maximum keyframes observing the same point.
    pub max_observations: u32,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            kind: SceneKind::Corridor,
            dims: [0.0, 8.0, 4.0],
            step: 1.0,
            keyframes: 100,
            points_per_keyframe: 60,
            noise_sigma: 0.0,
            churn_fraction: 0.0,
            churn_offset: 0.5,
            churn_observations: 3,
            removal_fraction: 0.0,
            max_range: 30.0,
            fov_deg: 90.0,
            max_observations: 4,
            seed: 7,
        }
    }
}

impl SceneSpec {
    pub fn corridor(keyframes: u32, seed: u64) -> Self {
        SceneSpec {
            keyframes,
            seed,
            ..Default::default()
        }
    }

    pub fn room(keyframes: u32, seed: u64) -> Self {
        SceneSpec {
            kind: SceneKind::Box,
            dims: [20.0, 16.0, 6.0],
            keyframes,
            seed,
            ..Default::default()
        }
    }

    pub fn facade(keyframes: u32, seed: u64) -> Self {
        SceneSpec {
            kind: SceneKind::Facade,
            dims: [12.0, 0.0, 12.0],
            keyframes,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        let dims_needed: &[usize] = match self.kind {
            SceneKind::Corridor => &[1, 2],
            SceneKind::Box => &[0, 1, 2],
            SceneKind::Facade => &[0, 2],
        };
        if dims_needed.iter().any(|&i| !(self.dims[i].is_finite() && self.dims[i] > 0.0)) {
            return bad("scene dimensions must be positive");
        }
        if !(self.step.is_finite() && self.step >= 0.0) {
            return bad("step must be non-negative");
        }
        if self.keyframes == 0 {
            return bad("at least one keyframe");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        for (name, f) in [("churn_fraction", self.churn_fraction), ("removal_fraction", self.removal_fraction)] {
            if !(0.0..=1.0).contains(&f) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if !(self.churn_offset.is_finite() && self.churn_offset >= 0.0) {
            return bad("churn_offset must be non-negative");
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return bad("max_range must be positive");
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return bad("fov_deg must be in (0, 180)");
        }
        if self.max_observations == 0 {
            return bad("max_observations must be at least 1");
        }
        Ok(())
    }
}

/// Exact scene geometry and the true positions behind a generated log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub triangles: Vec<[[f64; 3]; 3]>,
    pub points: BTreeMap<PointId, [f64; 3]>,
    pub cameras: BTreeMap<CameraId, [f64; 3]>,
    pub observations: Vec<(CameraId, PointId)>,
}

impl GroundTruth {
    pub fn surface_mesh(&self) -> TriangleMesh {
        let mut mesh = TriangleMesh::default();
        for t in &self.triangles {
            let base = mesh.vertices.len() as u32;
            mesh.vertices.extend(t.iter().map(|p| Point::from(*p)));
            mesh.triangles.push([base, base + 1, base + 2]);
        }
        mesh
    }
}

fn arr(p: &Point) -> [f64; 3] {
    [p.x, p.y, p.z]
}

struct Scene {
    tris: Vec<[Point; 3]>,
}

impl Scene {
    fn quad(&mut self, o: Point, u: Vec3, v: Vec3) {
        self.tris.push([o, o + u, o + u + v]);
        self.tris.push([o, o + u + v, o + v]);
    }

    fn cuboid(&mut self, lo: Point, hi: Point) {
        let d = hi - lo;
        let (x, y, z) = (Vec3::new(d.x, 0., 0.), Vec3::new(0., d.y, 0.), Vec3::new(0., 0., d.z));
        self.quad(lo, y, x);
        self.quad(lo + z, x, y);
        self.quad(lo, x, z);
        self.quad(lo + y, z, x);
        self.quad(lo, z, y);
        self.quad(lo + x, y, z);
    }

    /// Nearest hit along `o + t d`, `t > eps`.
    fn cast(&self, o: &Point, d: &Vec3) -> Option<f64> {
        self.tris
            .iter()
            .filter_map(|t| ray_triangle(o, d, [&t[0], &t[1], &t[2]], 1e-9))
            .min_by(f64::total_cmp)
    }

    fn visible(&self, cam: &Point, p: &Point) -> bool {
        let d = p - cam;
        match self.cast(cam, &d) {
            Some(t) => t >= 1.0 - 1e-6,
            None => true,
        }
    }
}

struct Trajectory {
    centers: Vec<Point>,
    looks: Vec<Vec3>,
}

fn build(spec: &SceneSpec) -> (Scene, Trajectory) {
    let mut s = Scene { tris: Vec::new() };
    let n = spec.keyframes as usize;
    let mut centers = Vec::with_capacity(n);
    let mut looks = Vec::with_capacity(n);
    match spec.kind {
        SceneKind::Corridor => {
            let (w, h) = (spec.dims[1], spec.dims[2]);
            let x0 = -spec.max_range;
            let len = spec.step * n as f64 + 2.0 * spec.max_range;
            let y0 = -w / 2.0;
            let (ex, ey, ez) = (Vec3::new(len, 0., 0.), Vec3::new(0., w, 0.), Vec3::new(0., 0., h));
            let o = Point::new(x0, y0, 0.);
            s.quad(o, ey, ex);
            s.quad(o + ez, ex, ey);
            s.quad(o, ex, ez);
            s.quad(o + ey, ez, ex);
            s.quad(o, ez, ey);
            s.quad(o + ex, ey, ez);
            let pillar = 0.6_f64.min(w / 6.0);
            let mut x = x0 + 4.0;
            while x + pillar < x0 + len {
                s.cuboid(Point::new(x, y0, 0.), Point::new(x + pillar, y0 + pillar, h));
                s.cuboid(Point::new(x + 4.0, -y0 - pillar, 0.), Point::new(x + 4.0 + pillar, -y0, h));
                x += 8.0;
            }
            for k in 0..n {
                centers.push(Point::new(k as f64 * spec.step, 0.0, h / 2.0));
                let yaw = 0.25 * (k as f64 / 12.0).sin();
                looks.push(Vec3::new(yaw.cos(), yaw.sin(), 0.0));
            }
        }
        SceneKind::Box => {
            let d = spec.dims;
            s.cuboid(Point::origin(), Point::new(d[0], d[1], d[2]));
            let c = Point::new(d[0] / 2.0, d[1] / 2.0, 0.0);
            let pw = (d[0].min(d[1]) * 0.1).max(0.5);
            s.cuboid(Point::new(c.x - pw / 2.0, c.y - pw / 2.0, 0.0), Point::new(c.x + pw / 2.0, c.y + pw / 2.0, d[2]));
            let (rx, ry) = (0.3 * d[0], 0.3 * d[1]);
            let z = d[2] * 0.4;
            for k in 0..n {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                centers.push(Point::new(c.x + rx * a.cos(), c.y + ry * a.sin(), z));
                let tangent = Vec3::new(-rx * a.sin(), ry * a.cos(), 0.0).normalize();
                let outward = Vec3::new(a.cos(), a.sin(), 0.0);
                looks.push((tangent + 0.6 * outward).normalize());
            }
        }
        SceneKind::Facade => {
            let (dist, h) = (spec.dims[0], spec.dims[2]);
            let y0 = -spec.max_range;
            let len = spec.step * n as f64 + 2.0 * spec.max_range;
            s.quad(Point::new(-spec.max_range, y0, 0.), Vec3::new(dist + spec.max_range, 0., 0.), Vec3::new(0., len, 0.));
            s.quad(Point::new(dist, y0, 0.), Vec3::new(0., len, 0.), Vec3::new(0., 0., h));
            let mut y = y0 + 2.0;
            while y + 3.0 < y0 + len {
                for &z in &[h * 0.3, h * 0.65] {
                    s.cuboid(Point::new(dist - 1.0, y, z), Point::new(dist, y + 3.0, z + 0.3));
                }
                y += 6.0;
            }
            for k in 0..n {
                centers.push(Point::new(0.0, k as f64 * spec.step, 1.6));
                let yaw = 0.5 * (k as f64 / 10.0).sin();
                looks.push(Vec3::new(yaw.cos(), yaw.sin(), 0.15).normalize());
            }
        }
    }
    (s, Trajectory { centers, looks })
}

fn pose_of(look: &Vec3, fov_deg: f64) -> Pose {
    let rot = Rotation3::face_towards(look, &Vec3::z());
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    let f = 320.0 / (fov_deg.to_radians() / 2.0).tan();
    Pose {
        q: [q.w, q.i, q.j, q.k],
        intrinsics: [f, f, 320.0, 240.0],
    }
}

struct Feature {
    truth: Point,
    noise: Vec3,
    drift: Vec3,
    seen: u32,
    born: usize,
    remove_at: Option<usize>,
    alive: bool,
}

impl Feature {
    fn estimate(&self, churn_obs: u32) -> Point {
        let left = if churn_obs == 0 {
            0.0
        } else {
            1.0 - (self.seen.min(churn_obs) as f64 / churn_obs as f64)
        };
        self.truth + self.noise + self.drift * left
    }
}

/// Generates a keyframe log and its ground truth. Deterministic in the seed.
pub fn generate(spec: &SceneSpec) -> Result<(Vec<KeyframeBatch>, GroundTruth), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let (scene, traj) = build(spec);
    let half_fov = spec.fov_deg.to_radians() / 2.0;
    let cos_half = half_fov.cos();
    let mut gt = GroundTruth {
        triangles: scene.tris.iter().map(|t| [arr(&t[0]), arr(&t[1]), arr(&t[2])]).collect(),
        ..Default::default()
    };
    let mut feats: BTreeMap<PointId, Feature> = BTreeMap::new();
    let mut next_id: PointId = 0;
    let mut log = Vec::with_capacity(traj.centers.len());
    // Points older than this are no longer re-observed.
    let window = 40usize;

    for (k, (c, look)) in traj.centers.iter().zip(&traj.looks).enumerate() {
        let cam_id = k as CameraId;
        let mut batch = KeyframeBatch::new(
            k as u64,
            Camera {
                id: cam_id,
                center: *c,
                pose: Some(pose_of(look, spec.fov_deg)),
            },
        );
        gt.cameras.insert(cam_id, arr(c));

        for (&id, f) in feats.iter_mut() {
            if f.alive && f.remove_at == Some(k) {
                f.alive = false;
                batch.removed_points.push(id);
            }
        }

        // Re-observations of recent points.
        for (&id, f) in feats.iter_mut() {
            if !f.alive || f.seen >= spec.max_observations || k - f.born > window {
                continue;
            }
            let d = f.truth - c;
            let dist = d.norm();
            if dist > spec.max_range || dist < 1e-6 || d.dot(look) / dist < cos_half {
                continue;
            }
            if !scene.visible(c, &f.truth) {
                continue;
            }
            let before = f.estimate(spec.churn_observations);
            f.seen += 1;
            let after = f.estimate(spec.churn_observations);
            if after != before {
                batch.moved_points.push((id, after));
            }
            batch.observations.push((cam_id, id));
            gt.observations.push((cam_id, id));
        }

        // New features: rays cast inside the view cone.
        let mut made = 0;
        let mut attempts = 0;
        while made < spec.points_per_keyframe && attempts < spec.points_per_keyframe * 20 {
            attempts += 1;
            let dir = loop {
                let v: [f64; 3] = UnitSphere.sample(&mut rng);
                let v = Vec3::new(v[0], v[1], v[2]);
                if v.dot(look) >= cos_half {
                    break v;
                }
            };
            let Some(t) = scene.cast(c, &dir) else { continue };
            if t > spec.max_range || t < 0.5 {
                continue;
            }
            let truth = c + dir * t;
            let n = if spec.noise_sigma > 0.0 {
                Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                Vec3::zeros()
            };
            let drift = if spec.churn_fraction > 0.0 && rng.gen_bool(spec.churn_fraction) {
                let v: [f64; 3] = UnitSphere.sample(&mut rng);
                Vec3::new(v[0], v[1], v[2]) * spec.churn_offset
            } else {
                Vec3::zeros()
            };
            let remove_at = (spec.removal_fraction > 0.0 && rng.gen_bool(spec.removal_fraction)).then(|| k + rng.gen_range(5..15));
            let mut f = Feature {
                truth,
                noise: n,
                drift,
                seen: 0,
                born: k,
                remove_at,
                alive: true,
            };
            let id = next_id;
            next_id += 1;
            batch.new_points.push((id, f.estimate(spec.churn_observations)));
            f.seen = 1;
            batch.observations.push((cam_id, id));
            gt.observations.push((cam_id, id));
            gt.points.insert(id, arr(&truth));
            feats.insert(id, f);
            made += 1;
        }
        log.push(batch);
    }
    Ok((log, gt))
}

/// Depth error of a mesh along camera-to-point rays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub mae: f64,
    pub hits: usize,
    pub rays: usize,
    pub hit_fraction: f64,
}

/// Casts every ground-truth observation ray against `mesh` and compares the
/// nearest hit distance with the true point distance.
pub fn evaluate_depth_mae(mesh: &TriangleMesh, gt: &GroundTruth) -> Result<DepthReport, SynthError> {
    let bvh = Bvh::new(mesh);
    let mut sum = 0.0;
    let mut hits = 0;
    let mut rays = 0;
    for &(cam, pid) in &gt.observations {
        let (Some(c), Some(p)) = (gt.cameras.get(&cam), gt.points.get(&pid)) else {
            continue;
        };
        let (c, p) = (Point::from(*c), Point::from(*p));
        let d = p - c;
        let truth = d.norm();
        if truth < 1e-9 {
            continue;
        }
        rays += 1;
        let dir = d / truth;
        if let Some(t) = bvh.cast(mesh, &c, &dir) {
            sum += (t - truth).abs();
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(SynthError::NoHits);
    }
    Ok(DepthReport {
        mae: sum / hits as f64,
        hits,
        rays,
        hit_fraction: hits as f64 / rays as f64,
    })
}

/// Bounding volume hierarchy over mesh triangles.
struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
}

struct BvhNode {
    lo: Point,
    hi: Point,
    /// Leaf: range into `order`. Inner: children indices.
    start: u32,
    count: u32,
    left: u32,
}

impl Bvh {
    fn new(mesh: &TriangleMesh) -> Self {
        let centroids: Vec<Point> = mesh
            .triangles
            .iter()
            .map(|t| Point::from((mesh.vertices[t[0] as usize].coords + mesh.vertices[t[1] as usize].coords + mesh.vertices[t[2] as usize].coords) / 3.0))
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::new(),
            order: (0..mesh.triangles.len() as u32).collect(),
        };
        if !mesh.triangles.is_empty() {
            bvh.build(mesh, &centroids, 0, mesh.triangles.len());
        }
        bvh
    }

    fn build(&mut self, mesh: &TriangleMesh, cent: &[Point], start: usize, end: usize) -> u32 {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for &ti in &self.order[start..end] {
            for &v in &mesh.triangles[ti as usize] {
                let p = mesh.vertices[v as usize];
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(BvhNode {
            lo,
            hi,
            start: start as u32,
            count: (end - start) as u32,
            left: 0,
        });
        if end - start <= 4 {
            return id;
        }
        let ext = hi - lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| cent[a as usize][axis].total_cmp(&cent[b as usize][axis]));
        let left = self.build(mesh, cent, start, mid);
        self.build(mesh, cent, mid, end);
        let node = &mut self.nodes[id as usize];
        node.count = 0;
        node.left = left;
        id
    }

    fn cast(&self, mesh: &TriangleMesh, o: &Point, d: &Vec3) -> Option<f64> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut best: Option<f64> = None;
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            let limit = best.unwrap_or(f64::INFINITY);
            if !slab(&node.lo, &node.hi, o, &inv, limit) {
                continue;
            }
            if node.count > 0 {
                for &ti in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let t = mesh.triangles[ti as usize];
                    let tri = [&mesh.vertices[t[0] as usize], &mesh.vertices[t[1] as usize], &mesh.vertices[t[2] as usize]];
                    if let Some(h) = ray_triangle(o, d, tri, 1e-9) {
                        if best.map_or(true, |b| h < b) {
                            best = Some(h);
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.left + 1 + self.subtree_len(node.left));
            }
        }
        best
    }

    fn subtree_len(&self, n: u32) -> u32 {
        let node = &self.nodes[n as usize];
        if node.count > 0 {
            0
        } else {
            let l = self.subtree_len(node.left);
            let r = self.subtree_len(node.left + 1 + l);
            1 + l + 1 + r
        }
    }
}

fn slab(lo: &Point, hi: &Point, o: &Point, inv: &Vec3, limit: f64) -> bool {
    let mut t0: f64 = 0.0;
    let mut t1 = limit;
    for a in 0..3 {
        let mut ta = (lo[a] - 1e-9 - o[a]) * inv[a];
        let mut tb = (hi[a] + 1e-9 - o[a]) * inv[a];
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        if ta.is_nan() || tb.is_nan() {
            // Ray parallel to and on the slab plane.
            continue;
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}
