//! Dynamic 3D Delaunay tetrahedralization.
//!
//! The convex hull is closed by a single infinite vertex (`VertexId(0)`), so
//! every facet has exactly two incident tetrahedra. Insertion is
//! Bowyer–Watson (locate, grow the conflict region, star it from the new
//! vertex); removal retriangulates the hole left by a vertex star with a
//! local Delaunay triangulation of the link vertices.
//!
//! Ties in the in-sphere predicate are broken by symbolic perturbation keyed
//! on each vertex's `key` (its creation order), which makes the triangulation
//! of a given vertex set unique and independent of the insertion history.

use std::cell::Cell;
use rustc_hash::{FxHashMap as HashMap, FxHashSet as HashSet};

use thiserror::Error;

use crate::geom::{self, Point};

/// Points closer than this are treated as the same vertex.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub u32);

/// The vertex at infinity closing the convex hull.
pub const INFINITE: VertexId = VertexId(0);

/// Generational handle to a tetrahedron slot. A handle goes stale when its
/// tetrahedron is destroyed, even if the slot is later reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TetHandle {
    idx: u32,
    gen: u32,
}

impl TetHandle {
    const DANGLING: TetHandle = TetHandle {
        idx: u32::MAX,
        gen: 0,
    };

    pub fn index(self) -> usize {
        self.idx as usize
    }
}

pub type PointId = u64;
pub type RayId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VertexKind {
    Infinite,
    Steiner,
    Slam(PointId),
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub pos: Point,
    pub kind: VertexKind,
    pub alive: bool,
    /// Perturbation rank.
    pub key: u64,
    tet: TetHandle,
    /// Live incident tetrahedra, and how many of them are Outside.
    degree: u32,
    outside: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Inside,
    Outside,
}

/// How a ray contributed weight to a tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RayRole {
    Traversed,
    Neighbor,
}

#[derive(Debug, Clone)]
pub struct Tet {
    /// Positively oriented. For infinite tetrahedra, replacing the infinite
    /// vertex by any point beyond the hull facet yields positive orientation.
    pub v: [VertexId; 4],
    /// `n[i]` is the neighbor across the facet opposite `v[i]`.
    pub n: [TetHandle; 4],
    /// Creation sequence number, used for deterministic tie-breaking.
    pub seq: u64,
    pub weight: f64,
    label: Label,
    pub next_hint: Option<TetHandle>,
    pub rays: Vec<(RayId, RayRole)>,
    gen: u32,
    alive: bool,
    /// Visit stamp for traversals that only borrow the triangulation.
    mark: Cell<u32>,
}

impl Tet {
    pub fn is_infinite(&self) -> bool {
        self.v.contains(&INFINITE)
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn index_of(&self, v: VertexId) -> Option<usize> {
        self.v.iter().position(|&x| x == v)
    }

    pub fn neighbor_index(&self, h: TetHandle) -> Option<usize> {
        self.n.iter().position(|&x| x == h)
    }
}

/// Vertex indices of the facet opposite vertex `i`, oriented so that the
/// right-hand normal points away from the tetrahedron.
pub const FACET_OUT: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DelaunayError {
    #[error("point lies outside the triangulated hull")]
    OutOfHull,
    #[error("point duplicates vertex {0:?}")]
    DuplicateVertex(VertexId),
    #[error("vertex {0:?} cannot be removed")]
    CannotRemove(VertexId),
    #[error("could not retriangulate the cavity of vertex {0:?}")]
    StuckCavity(VertexId),
    #[error("point location walk did not terminate")]
    WalkFailure,
    #[error("fewer than four affinely independent points")]
    Degenerate,
}

/// Tetrahedra whose circumspheres contain a query point.
#[derive(Debug, Clone, Default)]
pub struct ConflictRegion {
    pub tets: Vec<TetHandle>,
    /// `(region tet, facet index)` pairs on the region boundary.
    pub boundary_facets: Vec<(TetHandle, u8)>,
}

/// Result of removing a vertex.
#[derive(Debug, Clone, Default)]
pub struct Removal {
    /// The destroyed star.
    pub star: Vec<TetHandle>,
    /// Outer tetrahedra across the hole boundary, with the facet index.
    pub hole_boundary: Vec<(TetHandle, u8)>,
    pub new_tets: Vec<TetHandle>,
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    vertices: Vec<Vertex>,
    tets: Vec<Tet>,
    free: Vec<u32>,
    next_seq: u64,
    live: usize,
    live_outside: usize,
    last: TetHandle,
    rng: u32,
    epoch: Cell<u32>,
}

impl Default for Triangulation {
    fn default() -> Self {
        Self::new()
    }
}

fn facet_key(a: VertexId, b: VertexId, c: VertexId) -> [u32; 3] {
    let mut k = [a.0, b.0, c.0];
    k.sort_unstable();
    k
}

impl Triangulation {
    /// An empty triangulation holding only the infinite vertex.
    pub fn new() -> Self {
        Triangulation {
            vertices: vec![Vertex {
                pos: Point::origin(),
                kind: VertexKind::Infinite,
                alive: true,
                key: 0,
                tet: TetHandle::DANGLING,
                degree: 0,
                outside: 0,
            }],
            tets: Vec::new(),
            free: Vec::new(),
            next_seq: 0,
            live: 0,
            live_outside: 0,
            last: TetHandle::DANGLING,
            rng: 0x9e37_79b9,
            epoch: Cell::new(0),
        }
    }

    /// Builds the triangulation of `points`. Returns vertex ids parallel to
    /// the input.
    pub fn from_points(points: &[(Point, VertexKind)]) -> Result<(Self, Vec<VertexId>), DelaunayError> {
        let mut tri = Triangulation::new();
        let ids: Vec<VertexId> = points
            .iter()
            .map(|(p, k)| {
                let key = tri.vertices.len() as u64;
                tri.push_vertex(*p, *k, key)
            })
            .collect();
        let simplex = tri.find_simplex(&ids).ok_or(DelaunayError::Degenerate)?;
        tri.build_simplex(simplex);
        for &id in &ids {
            if simplex.contains(&id) {
                continue;
            }
            let p = tri.vertices[id.0 as usize].pos;
            let key = tri.vertices[id.0 as usize].key;
            let region = tri.conflict_region_keyed(&p, key, None)?;
            tri.attach_vertex(id, &region);
        }
        Ok((tri, ids))
    }

    fn push_vertex(&mut self, pos: Point, kind: VertexKind, key: u64) -> VertexId {
        let id = VertexId(self.vertices.len() as u32);
        self.vertices.push(Vertex {
            pos,
            kind,
            alive: true,
            key,
            tet: TetHandle::DANGLING,
            degree: 0,
            outside: 0,
        });
        id
    }

    fn find_simplex(&self, ids: &[VertexId]) -> Option<[VertexId; 4]> {
        let pos = |v: VertexId| &self.vertices[v.0 as usize].pos;
        let a = *ids.first()?;
        let b = *ids.iter().find(|&&v| (pos(v) - pos(a)).norm() > DUPLICATE_TOLERANCE)?;
        let c = *ids.iter().find(|&&v| {
            let cr = (pos(b) - pos(a)).cross(&(pos(v) - pos(a)));
            cr.norm() > 1e-12
        })?;
        let d = *ids
            .iter()
            .find(|&&v| geom::orient3d(pos(a), pos(b), pos(c), pos(v)) != 0)?;
        Some([a, b, c, d])
    }

    fn build_simplex(&mut self, s: [VertexId; 4]) {
        let mut v = s;
        if self.orient(v) < 0 {
            v.swap(0, 1);
        }
        let fin = self.alloc_tet(v);
        let mut created = vec![fin];
        for i in 0..4 {
            let mut iv = v;
            iv[i] = INFINITE;
            // Replacing vertex i by a point beyond facet i flips orientation.
            let (a, b) = if i == 0 { (1, 2) } else { (0, if i == 1 { 2 } else { 1 }) };
            iv.swap(a, b);
            created.push(self.alloc_tet(iv));
        }
        self.link_by_facets(&created);
        for &h in &created {
            self.touch_vertices(h);
        }
        self.last = fin;
    }

    /// Links all facets shared between tetrahedra of `set`.
    fn link_by_facets(&mut self, set: &[TetHandle]) {
        let mut open: HashMap<[u32; 3], (TetHandle, usize)> = HashMap::default();
        for &h in set {
            for i in 0..4 {
                let v = self.tets[h.index()].v;
                let f = FACET_OUT[i];
                let key = facet_key(v[f[0]], v[f[1]], v[f[2]]);
                if let Some((o, j)) = open.remove(&key) {
                    self.tets[h.index()].n[i] = o;
                    self.tets[o.index()].n[j] = h;
                } else {
                    open.insert(key, (h, i));
                }
            }
        }
    }

    fn alloc_tet(&mut self, v: [VertexId; 4]) -> TetHandle {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.live += 1;
        for u in v {
            self.vertices[u.0 as usize].degree += 1;
        }
        if let Some(idx) = self.free.pop() {
            let t = &mut self.tets[idx as usize];
            t.gen = t.gen.wrapping_add(1);
            t.v = v;
            t.n = [TetHandle::DANGLING; 4];
            t.seq = seq;
            t.weight = 0.0;
            t.label = Label::Inside;
            t.next_hint = None;
            t.rays.clear();
            t.alive = true;
            TetHandle { idx, gen: t.gen }
        } else {
            let idx = self.tets.len() as u32;
            self.tets.push(Tet {
                v,
                n: [TetHandle::DANGLING; 4],
                seq,
                weight: 0.0,
                label: Label::Inside,
                next_hint: None,
                rays: Vec::new(),
                gen: 0,
                alive: true,
                mark: Cell::new(0),
            });
            TetHandle { idx, gen: 0 }
        }
    }

    fn kill_tet(&mut self, h: TetHandle) {
        let t = &mut self.tets[h.index()];
        debug_assert!(t.alive && t.gen == h.gen);
        for u in t.v {
            let vx = &mut self.vertices[u.0 as usize];
            vx.degree -= 1;
            if t.label == Label::Outside {
                vx.outside -= 1;
            }
        }
        if t.label == Label::Outside {
            self.live_outside -= 1;
        }
        t.alive = false;
        t.rays = Vec::new();
        t.next_hint = None;
        self.free.push(h.idx);
        self.live -= 1;
    }

    fn touch_vertices(&mut self, h: TetHandle) {
        for v in self.tets[h.index()].v {
            self.vertices[v.0 as usize].tet = h;
        }
    }

    // ---- accessors -------------------------------------------------------

    pub fn is_alive(&self, h: TetHandle) -> bool {
        self.tets
            .get(h.index())
            .is_some_and(|t| t.alive && t.gen == h.gen)
    }

    /// The tetrahedron behind a live handle.
    pub fn tet(&self, h: TetHandle) -> &Tet {
        let t = &self.tets[h.index()];
        debug_assert!(t.alive && t.gen == h.gen, "stale tet handle");
        t
    }

    pub fn tet_mut(&mut self, h: TetHandle) -> &mut Tet {
        let t = &mut self.tets[h.index()];
        debug_assert!(t.alive && t.gen == h.gen, "stale tet handle");
        t
    }

    pub fn vertex(&self, v: VertexId) -> &Vertex {
        &self.vertices[v.0 as usize]
    }

    pub fn position(&self, v: VertexId) -> &Point {
        &self.vertices[v.0 as usize].pos
    }

    pub fn is_infinite(&self, h: TetHandle) -> bool {
        self.tet(h).is_infinite()
    }

    /// Number of live tetrahedra, infinite ones included.
    pub fn num_tets(&self) -> usize {
        self.live
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.iter().skip(1).filter(|v| v.alive).count()
    }

    /// Iterates live tetrahedra in slot order.
    pub fn tets(&self) -> impl Iterator<Item = (TetHandle, &Tet)> {
        self.tets.iter().enumerate().filter(|(_, t)| t.alive).map(|(i, t)| {
            (
                TetHandle {
                    idx: i as u32,
                    gen: t.gen,
                },
                t,
            )
        })
    }

    pub fn tet_handles(&self) -> Vec<TetHandle> {
        self.tets().map(|(h, _)| h).collect()
    }

    /// Live finite vertices.
    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, v)| v.alive)
            .map(|(i, _)| VertexId(i as u32))
    }

    /// Some live tetrahedron incident to `v`.
    pub fn incident_tet(&self, v: VertexId) -> TetHandle {
        self.vertices[v.0 as usize].tet
    }

    pub fn tet_points(&self, h: TetHandle) -> [Point; 4] {
        let v = self.tet(h).v;
        [
            *self.position(v[0]),
            *self.position(v[1]),
            *self.position(v[2]),
            *self.position(v[3]),
        ]
    }

    fn orient(&self, v: [VertexId; 4]) -> i8 {
        geom::orient3d(
            self.position(v[0]),
            self.position(v[1]),
            self.position(v[2]),
            self.position(v[3]),
        )
    }

    /// Orientation of tet `h` with vertex `i` replaced by `p`. For a finite
    /// tetrahedron this is negative iff `p` lies strictly beyond facet `i`.
    pub fn orient_replaced(&self, h: TetHandle, i: usize, p: &Point) -> i8 {
        let v = self.tet(h).v;
        let mut q = [
            self.position(v[0]),
            self.position(v[1]),
            self.position(v[2]),
            self.position(v[3]),
        ];
        q[i] = p;
        geom::orient3d(q[0], q[1], q[2], q[3])
    }

    /// All tetrahedra incident to `v`, starting from its stored incident tet.
    pub fn star(&self, v: VertexId) -> Vec<TetHandle> {
        let start = self.vertices[v.0 as usize].tet;
        let e = self.next_epoch();
        let mut out = Vec::with_capacity(32);
        out.push(start);
        self.tet(start).mark.set(e);
        let mut i = 0;
        while i < out.len() {
            let t = self.tet(out[i]);
            for k in 0..4 {
                if t.v[k] == v {
                    continue;
                }
                let nb = self.tet(t.n[k]);
                if nb.mark.get() != e {
                    nb.mark.set(e);
                    out.push(t.n[k]);
                }
            }
            i += 1;
        }
        out
    }

    /// A fresh stamp for [`Self::mark`] and [`Self::is_marked`]. A tet
    /// holds one mark at a time, so a stamp is invalidated by any later
    /// marking, including the ones done by [`Self::star`] and
    /// [`Self::retain_unique_live`].
    pub fn new_mark(&self) -> u32 {
        self.next_epoch()
    }

    /// Relabels `h`, keeping the per-vertex Outside counts current.
    pub fn set_label(&mut self, h: TetHandle, label: Label) {
        let t = &mut self.tets[h.index()];
        debug_assert!(t.alive && t.gen == h.gen);
        if t.label == label {
            return;
        }
        t.label = label;
        match label {
            Label::Outside => self.live_outside += 1,
            Label::Inside => self.live_outside -= 1,
        }
        for u in t.v {
            let vx = &mut self.vertices[u.0 as usize];
            match label {
                Label::Outside => vx.outside += 1,
                Label::Inside => vx.outside -= 1,
            }
        }
    }

    /// Number of live Outside tetrahedra.
    pub fn num_outside(&self) -> usize {
        self.live_outside
    }

    /// Number of live tetrahedra incident to `v`.
    pub fn degree(&self, v: VertexId) -> u32 {
        self.vertices[v.0 as usize].degree
    }

    /// Number of Outside tetrahedra incident to `v`.
    pub fn outside_degree(&self, v: VertexId) -> u32 {
        self.vertices[v.0 as usize].outside
    }

    pub fn mark(&self, h: TetHandle, stamp: u32) {
        self.tet(h).mark.set(stamp);
    }

    pub fn is_marked(&self, h: TetHandle, stamp: u32) -> bool {
        self.tet(h).mark.get() == stamp
    }

    /// Drops dead and repeated handles from `v`, keeping first occurrences.
    pub fn retain_unique_live(&self, v: &mut Vec<TetHandle>) {
        let stamp = self.next_epoch();
        v.retain(|&h| {
            if !self.is_alive(h) || self.is_marked(h, stamp) {
                return false;
            }
            self.mark(h, stamp);
            true
        });
    }

    fn next_epoch(&self) -> u32 {
        let e = self.epoch.get().wrapping_add(1);
        if e == 0 {
            for t in &self.tets {
                t.mark.set(0);
            }
            self.epoch.set(1);
            return 1;
        }
        self.epoch.set(e);
        e
    }

    fn next_rand(&mut self) -> u32 {
        let mut x = self.rng;
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        self.rng = x;
        x
    }

    fn any_live(&self) -> Option<TetHandle> {
        if self.is_alive(self.last) {
            return Some(self.last);
        }
        self.tets().map(|(h, _)| h).next()
    }

    // ---- point location --------------------------------------------------

    /// Visibility walk. Returns the finite tetrahedron containing `p`, or the
    /// infinite one whose hull facet `p` lies strictly beyond.
    fn walk(&mut self, p: &Point, hint: Option<TetHandle>) -> Result<TetHandle, DelaunayError> {
        let mut cur = match hint.filter(|h| self.is_alive(*h)) {
            Some(h) => h,
            None => self.any_live().ok_or(DelaunayError::Degenerate)?,
        };
        if let Some(i) = self.tet(cur).index_of(INFINITE) {
            cur = self.tet(cur).n[i];
        }
        let mut prev = TetHandle::DANGLING;
        let guard = self.live + 16;
        for _ in 0..guard {
            let t = self.tet(cur);
            if t.is_infinite() {
                return Ok(cur);
            }
            let start = (self.next_rand() % 4) as usize;
            let mut next = None;
            for k in 0..4 {
                let i = (start + k) % 4;
                let nb = self.tet(cur).n[i];
                if nb == prev {
                    continue;
                }
                if self.orient_replaced(cur, i, p) < 0 {
                    next = Some(nb);
                    break;
                }
            }
            match next {
                Some(nb) => {
                    prev = cur;
                    cur = nb;
                }
                None => return Ok(cur),
            }
        }
        Err(DelaunayError::WalkFailure)
    }

    /// Finite tetrahedron containing `p`, starting the walk at `hint`.
    pub fn locate(&mut self, p: &Point, hint: Option<TetHandle>) -> Result<TetHandle, DelaunayError> {
        let h = self.walk(p, hint)?;
        if self.is_infinite(h) {
            Err(DelaunayError::OutOfHull)
        } else {
            Ok(h)
        }
    }

    fn in_conflict(&self, h: TetHandle, p: &Point, key: u64) -> bool {
        let t = self.tet(h);
        let pos = |i: usize| self.position(t.v[i]);
        let key_of = |i: usize| self.vertices[t.v[i].0 as usize].key;
        if let Some(inf) = t.index_of(INFINITE) {
            let o = self.orient_replaced(h, inf, p);
            if o != 0 {
                return o > 0;
            }
            let f: Vec<usize> = (0..4).filter(|&i| i != inf).collect();
            geom::coplanar_in_circle_perturbed(
                [pos(f[0]), pos(f[1]), pos(f[2]), p],
                [key_of(f[0]), key_of(f[1]), key_of(f[2]), key],
            ) > 0
        } else {
            geom::in_sphere_perturbed(
                [pos(0), pos(1), pos(2), pos(3), p],
                [key_of(0), key_of(1), key_of(2), key_of(3), key],
            ) > 0
        }
    }

    fn check_duplicate(&self, h: TetHandle, p: &Point) -> Result<(), DelaunayError> {
        for v in self.tet(h).v {
            if v != INFINITE && (self.position(v) - p).norm() <= DUPLICATE_TOLERANCE {
                return Err(DelaunayError::DuplicateVertex(v));
            }
        }
        Ok(())
    }

    /// Conflict region of a point about to be inserted as the next vertex.
    pub fn conflict_region(&mut self, p: &Point, hint: Option<TetHandle>) -> Result<ConflictRegion, DelaunayError> {
        let key = self.vertices.len() as u64;
        self.conflict_region_keyed(p, key, hint)
    }

    fn conflict_region_keyed(
        &mut self,
        p: &Point,
        key: u64,
        hint: Option<TetHandle>,
    ) -> Result<ConflictRegion, DelaunayError> {
        let start = self.walk(p, hint)?;
        self.check_duplicate(start, p)?;
        if !self.in_conflict(start, p, key) {
            return Err(DelaunayError::WalkFailure);
        }
        let mut region = vec![start];
        let mut verdict: HashMap<TetHandle, bool> = HashMap::default();
        verdict.insert(start, true);
        let mut boundary = Vec::new();
        let mut i = 0;
        while i < region.len() {
            let cur = region[i];
            for f in 0..4 {
                let nb = self.tet(cur).n[f];
                let inside = match verdict.get(&nb) {
                    Some(&b) => b,
                    None => {
                        let b = self.in_conflict(nb, p, key);
                        verdict.insert(nb, b);
                        if b {
                            region.push(nb);
                        }
                        b
                    }
                };
                if !inside {
                    boundary.push((cur, f as u8));
                }
            }
            i += 1;
        }
        for &h in &region {
            self.check_duplicate(h, p)?;
        }
        Ok(ConflictRegion {
            tets: region,
            boundary_facets: boundary,
        })
    }

    /// Inserts `p` into its (freshly computed) conflict region.
    pub fn insert_vertex(
        &mut self,
        p: Point,
        kind: VertexKind,
        region: &ConflictRegion,
    ) -> Result<(VertexId, Vec<TetHandle>), DelaunayError> {
        if region.tets.is_empty() || region.tets.iter().any(|&h| !self.is_alive(h)) {
            return Err(DelaunayError::WalkFailure);
        }
        let key = self.vertices.len() as u64;
        let id = self.push_vertex(p, kind, key);
        let new = self.attach_vertex(id, region);
        Ok((id, new))
    }

    /// Convenience: locate, compute the conflict region, insert.
    pub fn insert(&mut self, p: Point, kind: VertexKind, hint: Option<TetHandle>) -> Result<VertexId, DelaunayError> {
        let region = self.conflict_region(&p, hint)?;
        Ok(self.insert_vertex(p, kind, &region)?.0)
    }

    fn attach_vertex(&mut self, id: VertexId, region: &ConflictRegion) -> Vec<TetHandle> {
        let mut created = Vec::with_capacity(region.boundary_facets.len());
        let mut open: HashMap<(u32, u32), (TetHandle, usize)> = HashMap::default();
        for &(t, i) in &region.boundary_facets {
            let i = i as usize;
            let (mut v, outer) = {
                let tt = self.tet(t);
                (tt.v, tt.n[i])
            };
            v[i] = id;
            let nt = self.alloc_tet(v);
            self.tet_mut(nt).n[i] = outer;
            let j = self.tet(outer).neighbor_index(t).expect("asymmetric adjacency");
            self.tet_mut(outer).n[j] = nt;
            for k in 0..4 {
                if k == i {
                    continue;
                }
                let others: Vec<u32> = (0..4).filter(|&m| m != i && m != k).map(|m| v[m].0).collect();
                let key = (others[0].min(others[1]), others[0].max(others[1]));
                if let Some((o, ok)) = open.remove(&key) {
                    self.tet_mut(nt).n[k] = o;
                    self.tet_mut(o).n[ok] = nt;
                } else {
                    open.insert(key, (nt, k));
                }
            }
            created.push(nt);
        }
        debug_assert!(open.is_empty(), "cavity boundary is not a closed surface");
        for &h in &region.tets {
            self.kill_tet(h);
        }
        for &h in &created {
            self.touch_vertices(h);
        }
        if let Some(&h) = created.first() {
            self.last = h;
        }
        created
    }

    /// Removes a SLAM vertex and retriangulates its star.
    pub fn remove_vertex(&mut self, v: VertexId) -> Result<Removal, DelaunayError> {
        let vert = self.vertices.get(v.0 as usize).ok_or(DelaunayError::CannotRemove(v))?;
        if !vert.alive || !matches!(vert.kind, VertexKind::Slam(_)) {
            return Err(DelaunayError::CannotRemove(v));
        }
        let star = self.star(v);
        if star.iter().any(|&h| self.is_infinite(h)) {
            return Err(DelaunayError::CannotRemove(v));
        }

        // Hole boundary: facet triple -> (outer tet, index in outer, star tet, index in star).
        let mut hole: HashMap<[u32; 3], (TetHandle, usize, TetHandle, usize)> = HashMap::default();
        let mut hole_order: Vec<[u32; 3]> = Vec::with_capacity(star.len());
        let mut link: Vec<VertexId> = Vec::new();
        for &h in &star {
            let t = self.tet(h);
            let i = t.index_of(v).unwrap();
            let outer = t.n[i];
            let j = self.tet(outer).neighbor_index(h).unwrap();
            let f = FACET_OUT[i];
            let key = facet_key(t.v[f[0]], t.v[f[1]], t.v[f[2]]);
            hole.insert(key, (outer, j, h, i));
            hole_order.push(key);
            for &u in &t.v {
                if u != v && !link.contains(&u) {
                    link.push(u);
                }
            }
        }
        link.sort_unstable();

        // Local Delaunay triangulation of the link, perturbed with global keys.
        let mut local = Triangulation::new();
        let mut to_global = vec![INFINITE];
        let mut local_ids = Vec::with_capacity(link.len());
        for &g in &link {
            let gv = &self.vertices[g.0 as usize];
            local_ids.push(local.push_vertex(gv.pos, gv.kind, gv.key));
            to_global.push(g);
        }
        let simplex = local.find_simplex(&local_ids).ok_or(DelaunayError::StuckCavity(v))?;
        local.build_simplex(simplex);
        for &lid in &local_ids {
            if simplex.contains(&lid) {
                continue;
            }
            let (p, key) = {
                let lv = &local.vertices[lid.0 as usize];
                (lv.pos, lv.key)
            };
            let region = local
                .conflict_region_keyed(&p, key, None)
                .map_err(|_| DelaunayError::StuckCavity(v))?;
            local.attach_vertex(lid, &region);
        }
        let glob = |l: VertexId| to_global[l.0 as usize];

        let mut local_facets: HashMap<[u32; 3], Vec<TetHandle>> = HashMap::default();
        for (lh, t) in local.tets() {
            for f in FACET_OUT {
                let key = facet_key(glob(t.v[f[0]]), glob(t.v[f[1]]), glob(t.v[f[2]]));
                local_facets.entry(key).or_default().push(lh);
            }
        }

        // Pick, for every hole facet, the local tet on the hole side.
        let mut inside: Vec<TetHandle> = Vec::new();
        for key in &hole_order {
            let (_, _, sh, si) = hole[key];
            let cands = local_facets.get(key).ok_or(DelaunayError::StuckCavity(v))?;
            let mut picked = None;
            for &lh in cands {
                let lt = local.tet(lh);
                if lt.is_infinite() {
                    continue;
                }
                let apex = lt
                    .v
                    .iter()
                    .map(|&l| glob(l))
                    .find(|g| !key.contains(&g.0))
                    .unwrap();
                if self.orient_replaced(sh, si, self.position(apex)) > 0 {
                    picked = Some(lh);
                }
            }
            let lh = picked.ok_or(DelaunayError::StuckCavity(v))?;
            if !inside.contains(&lh) {
                inside.push(lh);
            }
        }
        let mut k = 0;
        while k < inside.len() {
            let lt = local.tet(inside[k]).clone();
            for (i, f) in FACET_OUT.iter().enumerate() {
                let key = facet_key(glob(lt.v[f[0]]), glob(lt.v[f[1]]), glob(lt.v[f[2]]));
                if hole.contains_key(&key) {
                    continue;
                }
                let nb = lt.n[i];
                if local.is_infinite(nb) {
                    return Err(DelaunayError::StuckCavity(v));
                }
                if !inside.contains(&nb) {
                    inside.push(nb);
                }
            }
            k += 1;
        }

        // Commit: create global copies and glue them in.
        let mut map: HashMap<TetHandle, TetHandle> = HashMap::default();
        let mut new_tets = Vec::with_capacity(inside.len());
        for &lh in &inside {
            let lv = local.tet(lh).v;
            let gh = self.alloc_tet([glob(lv[0]), glob(lv[1]), glob(lv[2]), glob(lv[3])]);
            map.insert(lh, gh);
            new_tets.push(gh);
        }
        let mut hole_boundary = Vec::with_capacity(hole.len());
        for &lh in &inside {
            let gh = map[&lh];
            let lt = local.tet(lh).clone();
            for (i, f) in FACET_OUT.iter().enumerate() {
                let key = facet_key(glob(lt.v[f[0]]), glob(lt.v[f[1]]), glob(lt.v[f[2]]));
                if let Some(&(outer, j, _, _)) = hole.get(&key) {
                    self.tet_mut(gh).n[i] = outer;
                    self.tet_mut(outer).n[j] = gh;
                    hole_boundary.push((outer, j as u8));
                } else {
                    self.tet_mut(gh).n[i] = map[&lt.n[i]];
                }
            }
        }
        for &h in &star {
            self.kill_tet(h);
        }
        self.vertices[v.0 as usize].alive = false;
        for &h in &new_tets {
            self.touch_vertices(h);
        }
        if let Some(&h) = new_tets.first() {
            self.last = h;
        }
        Ok(Removal {
            star,
            hole_boundary,
            new_tets,
        })
    }

    // ---- validation ------------------------------------------------------

    /// Structural check: adjacency symmetry, matching shared facets,
    /// orientation, vertex incidence.
    pub fn validate(&self) -> Result<(), String> {
        for (h, t) in self.tets() {
            let inf = t.v.iter().filter(|&&v| v == INFINITE).count();
            if inf > 1 {
                return Err(format!("{h:?} has {inf} infinite vertices"));
            }
            for i in 0..4 {
                let nb = t.n[i];
                if !self.is_alive(nb) {
                    return Err(format!("{h:?} has dead neighbor {i}"));
                }
                let nt = self.tet(nb);
                let Some(j) = nt.neighbor_index(h) else {
                    return Err(format!("{h:?} neighbor {i} is not symmetric"));
                };
                let f = FACET_OUT[i];
                let g = FACET_OUT[j];
                if facet_key(t.v[f[0]], t.v[f[1]], t.v[f[2]]) != facet_key(nt.v[g[0]], nt.v[g[1]], nt.v[g[2]]) {
                    return Err(format!("{h:?} and {nb:?} disagree on their shared facet"));
                }
            }
            if inf == 0 {
                if self.orient(t.v) <= 0 {
                    return Err(format!("{h:?} is not positively oriented"));
                }
            } else {
                let k = t.index_of(INFINITE).unwrap();
                let nb = self.tet(t.n[k]);
                let apex = nb.v[nb.neighbor_index(h).unwrap()];
                if self.orient_replaced(h, k, self.position(apex)) >= 0 {
                    return Err(format!("{h:?} hull facet is misoriented"));
                }
            }
        }
        for v in self.vertex_ids() {
            let h = self.vertices[v.0 as usize].tet;
            if !self.is_alive(h) || self.tet(h).index_of(v).is_none() {
                return Err(format!("{v:?} has no valid incident tet"));
            }
        }
        // Cached counters against a recount.
        let mut degree = vec![0u32; self.vertices.len()];
        let mut outside = vec![0u32; self.vertices.len()];
        let mut live_outside = 0;
        for (_, t) in self.tets() {
            let out = t.label == Label::Outside;
            live_outside += out as usize;
            for u in t.v {
                degree[u.0 as usize] += 1;
                outside[u.0 as usize] += out as u32;
            }
        }
        if live_outside != self.live_outside {
            return Err(format!("{} Outside tets counted, {} cached", live_outside, self.live_outside));
        }
        for v in self.vertex_ids() {
            let x = &self.vertices[v.0 as usize];
            if x.degree != degree[v.0 as usize] || x.outside != outside[v.0 as usize] {
                return Err(format!("{v:?} cached degree/outside count is stale"));
            }
        }
        Ok(())
    }

    /// Brute-force empty-circumsphere check with exact, unperturbed
    /// semantics: counts (tet, vertex) pairs with the vertex strictly inside.
    pub fn delaunay_violations(&self) -> usize {
        let verts: Vec<VertexId> = self.vertex_ids().collect();
        let mut bad = 0;
        for (_, t) in self.tets() {
            if t.is_infinite() {
                continue;
            }
            let [a, b, c, d] = t.v.map(|v| self.position(v));
            for &u in &verts {
                if t.v.contains(&u) {
                    continue;
                }
                if geom::in_sphere(a, b, c, d, self.position(u)) > 0 {
                    bad += 1;
                }
            }
        }
        bad
    }

    /// Set of finite tetrahedra as sorted vertex-id quadruples.
    pub fn finite_tet_keys(&self) -> HashSet<[u32; 4]> {
        self.tets()
            .filter(|(_, t)| !t.is_infinite())
            .map(|(_, t)| {
                let mut k = t.v.map(|v| v.0);
                k.sort_unstable();
                k
            })
            .collect()
    }
}
