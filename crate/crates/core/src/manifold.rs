//! The Outside set O and its boundary surface.
//!
//! Every label change goes through a local regularity test: after the change,
//! each affected vertex must see its boundary triangles as either nothing or
//! a single closed fan. That keeps the boundary of O a closed 2-manifold at
//! all times.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rustc_hash::{FxHashMap as HashMap, FxHashSet as HashSet};

use crate::delaunay::{Label, TetHandle, Triangulation, VertexId, FACET_OUT, INFINITE};
use crate::geom::Aabb;
use crate::mesh::TriangleMesh;
use crate::steiner::{CellFrame, CellIndex};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GrowStats {
    pub added: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShrinkStats {
    pub removed: usize,
    pub stuck: usize,
}

fn flipped(l: Label) -> Label {
    match l {
        Label::Inside => Label::Outside,
        Label::Outside => Label::Inside,
    }
}

/// Cell range of a finite tetrahedron's bounding box.
fn tet_cells(tri: &Triangulation, frame: &CellFrame, h: TetHandle) -> (CellIndex, CellIndex) {
    let pts = tri.tet_points(h);
    let bb = Aabb::from_points(pts.iter());
    frame.cell_range(&bb.min, &bb.max)
}

fn cells_in(lo: CellIndex, hi: CellIndex) -> impl Iterator<Item = CellIndex> {
    (lo.i..=hi.i).flat_map(move |i| (lo.j..=hi.j).flat_map(move |j| (lo.k..=hi.k).map(move |k| CellIndex::new(i, j, k))))
}

/// Boundary tetrahedra bucketed by the grid cells their bounding boxes overlap.
#[derive(Debug, Clone, Default)]
pub struct BoundaryHash {
    table: HashMap<CellIndex, HashSet<TetHandle>>,
    entries: HashMap<TetHandle, (CellIndex, CellIndex)>,
}

impl BoundaryHash {
    fn insert(&mut self, h: TetHandle, range: (CellIndex, CellIndex)) {
        for c in cells_in(range.0, range.1) {
            self.table.entry(c).or_default().insert(h);
        }
        self.entries.insert(h, range);
    }

    fn remove(&mut self, h: TetHandle) {
        if let Some((lo, hi)) = self.entries.remove(&h) {
            for c in cells_in(lo, hi) {
                if let Some(list) = self.table.get_mut(&c) {
                    list.remove(&h);
                    if list.is_empty() {
                        self.table.remove(&c);
                    }
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, h: TetHandle) -> bool {
        self.entries.contains_key(&h)
    }

    /// Entries of one cell, in no particular order.
    pub fn cell(&self, c: &CellIndex) -> impl Iterator<Item = TetHandle> + '_ {
        self.table.get(c).into_iter().flatten().copied()
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    weight: f64,
    seq: u64,
    h: TetHandle,
}

impl PartialEq for Candidate {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Candidate {
    // Heaviest first; older tetrahedra win ties.
    fn cmp(&self, o: &Self) -> Ordering {
        self.weight
            .total_cmp(&o.weight)
            .then_with(|| Reverse(self.seq).cmp(&Reverse(o.seq)))
    }
}

/// The carved free-space set and its boundary index.
#[derive(Debug, Clone)]
pub struct Manifold {
    t_free: f64,
    /// Size of O. Membership itself lives in the tetrahedron labels.
    count: usize,
    frame: Option<CellFrame>,
    hash: Option<BoundaryHash>,
}

impl Manifold {
    pub fn new(t_free: f64) -> Self {
        Manifold {
            t_free,
            count: 0,
            frame: None,
            hash: None,
        }
    }

    pub fn t_free(&self) -> f64 {
        self.t_free
    }

    pub fn set_frame(&mut self, frame: CellFrame) {
        self.frame = Some(frame);
    }

    /// Tetrahedra of O in handle order.
    pub fn outside<'a>(&self, tri: &'a Triangulation) -> impl Iterator<Item = TetHandle> + 'a {
        tri.tets().filter(|(_, t)| t.label() == Label::Outside).map(|(h, _)| h)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, tri: &Triangulation, h: TetHandle) -> bool {
        tri.is_alive(h) && tri.tet(h).label() == Label::Outside
    }

    pub fn hash(&self) -> Option<&BoundaryHash> {
        self.hash.as_ref()
    }

    pub fn hash_enabled(&self) -> bool {
        self.hash.is_some()
    }

    /// Turns the boundary hash on (rebuilding it) or off.
    pub fn set_hash_enabled(&mut self, tri: &Triangulation, on: bool) {
        self.hash = if on { Some(self.build_hash(tri)) } else { None };
    }

    fn build_hash(&self, tri: &Triangulation) -> BoundaryHash {
        let mut hash = BoundaryHash::default();
        if let Some(frame) = &self.frame {
            for h in self.outside(tri) {
                if is_boundary_tet(tri, h) {
                    hash.insert(h, tet_cells(tri, frame, h));
                }
            }
        }
        hash
    }

    fn refresh_hash(&mut self, tri: &Triangulation, h: TetHandle) {
        let (Some(hash), Some(frame)) = (self.hash.as_mut(), self.frame.as_ref()) else {
            return;
        };
        let want = tri.is_alive(h) && is_boundary_tet(tri, h);
        match (want, hash.contains(h)) {
            (true, false) => hash.insert(h, tet_cells(tri, frame, h)),
            (false, true) => hash.remove(h),
            _ => {}
        }
    }

    /// Records a label already written to the triangulation.
    fn commit_label(&mut self, tri: &Triangulation, h: TetHandle) {
        match tri.tet(h).label() {
            Label::Outside => self.count += 1,
            Label::Inside => self.count -= 1,
        }
        if self.hash.is_some() {
            self.refresh_hash(tri, h);
            for nb in tri.tet(h).n {
                self.refresh_hash(tri, nb);
            }
        }
    }

    pub fn set_label(&mut self, tri: &mut Triangulation, h: TetHandle, label: Label) {
        if tri.tet(h).label() == label {
            return;
        }
        debug_assert!(label == Label::Inside || !tri.is_infinite(h));
        tri.set_label(h, label);
        self.commit_label(tri, h);
    }

    /// Drops everything; all live tetrahedra become Inside.
    pub fn clear(&mut self, tri: &mut Triangulation) {
        for h in self.outside(tri).collect::<Vec<_>>() {
            tri.set_label(h, Label::Inside);
        }
        self.count = 0;
        if let Some(hash) = self.hash.as_mut() {
            *hash = BoundaryHash::default();
        }
    }

    /// Whether adding `t` to O keeps the boundary a manifold. Assumes O is
    /// manifold now, which every single-tet edit here preserves.
    pub fn is_addition_manifold(&self, tri: &Triangulation, t: TetHandle) -> bool {
        let tet = tri.tet(t);
        if tet.is_infinite() || tet.label() != Label::Inside {
            return false;
        }
        single_flip_regular(tri, t, Label::Outside)
    }

    /// Whether removing `t` from O keeps the boundary a manifold, under the
    /// same assumption as [`Self::is_addition_manifold`].
    pub fn is_removal_manifold(&self, tri: &Triangulation, t: TetHandle) -> bool {
        let tet = tri.tet(t);
        if tet.label() != Label::Outside {
            return false;
        }
        // Removing a tet buried in O would open a void.
        if tet.n.iter().all(|&nb| tri.tet(nb).label() == Label::Outside) {
            return false;
        }
        single_flip_regular(tri, t, Label::Inside)
    }

    fn is_free(&self, tri: &Triangulation, h: TetHandle) -> bool {
        let t = tri.tet(h);
        !t.is_infinite() && t.label() == Label::Inside && t.weight > self.t_free
    }

    /// Weight-prioritized region growing of O from `seeds`.
    pub fn grow(&mut self, tri: &mut Triangulation, seeds: impl IntoIterator<Item = TetHandle>) -> GrowStats {
        let mut stats = GrowStats::default();
        let mut heap = BinaryHeap::new();
        // Tets currently in the heap carry this stamp.
        let queued = tri.new_mark();
        let push = |tri: &Triangulation, heap: &mut BinaryHeap<Candidate>, h| {
            if !tri.is_marked(h, queued) {
                tri.mark(h, queued);
                let t = tri.tet(h);
                heap.push(Candidate {
                    weight: t.weight,
                    seq: t.seq,
                    h,
                });
            }
        };
        for h in seeds {
            if tri.is_alive(h) && self.is_free(tri, h) {
                push(tri, &mut heap, h);
            }
        }
        while let Some(c) = heap.pop() {
            tri.mark(c.h, 0);
            if !self.is_free(tri, c.h) {
                continue;
            }
            if !self.is_addition_manifold(tri, c.h) {
                stats.rejected += 1;
                continue;
            }
            self.set_label(tri, c.h, Label::Outside);
            stats.added += 1;
            for nb in tri.tet(c.h).n {
                if self.is_free(tri, nb) {
                    push(tri, &mut heap, nb);
                }
            }
        }
        stats
    }

    /// Peels tetrahedra satisfying `in_set` off O, starting from `seeds`.
    pub fn shrink(
        &mut self,
        tri: &mut Triangulation,
        in_set: impl Fn(&Triangulation, TetHandle) -> bool,
        seeds: impl IntoIterator<Item = TetHandle>,
    ) -> ShrinkStats {
        let mut stats = ShrinkStats::default();
        let mut queue = VecDeque::new();
        let mut blocked = Vec::new();
        // Tets currently in the queue carry this stamp.
        let queued = tri.new_mark();
        let enqueue = |tri: &Triangulation, queue: &mut VecDeque<TetHandle>, h| {
            if !tri.is_marked(h, queued) {
                tri.mark(h, queued);
                queue.push_back(h);
            }
        };
        for h in seeds {
            if self.contains(tri, h) && in_set(tri, h) {
                enqueue(tri, &mut queue, h);
            }
        }
        while let Some(h) = queue.pop_front() {
            tri.mark(h, 0);
            if tri.tet(h).label() != Label::Outside {
                continue;
            }
            if !self.is_removal_manifold(tri, h) {
                blocked.push(h);
                continue;
            }
            self.set_label(tri, h, Label::Inside);
            stats.removed += 1;
            for nb in tri.tet(h).n {
                if tri.tet(nb).label() == Label::Outside && in_set(tri, nb) {
                    enqueue(tri, &mut queue, nb);
                }
            }
        }
        tri.retain_unique_live(&mut blocked);
        stats.stuck = blocked.iter().filter(|&&h| tri.tet(h).label() == Label::Outside).count();
        stats
    }

    /// Bulk-carves the whole star of each candidate boundary vertex whose
    /// incident tetrahedra are all free space, which lets O change genus.
    /// Each bulk addition is kept only if every touched vertex stays regular.
    pub fn genus_step(&mut self, tri: &mut Triangulation, candidates: impl IntoIterator<Item = VertexId>) -> usize {
        let mut verts: Vec<VertexId> = candidates.into_iter().filter(|&v| v != INFINITE).collect();
        verts.sort_unstable();
        verts.dedup();
        let mut commits = 0;
        for v in verts {
            if !tri.vertex(v).alive {
                continue;
            }
            let star = tri.star(v);
            let mut any_out = false;
            let mut flip = Vec::new();
            let mut eligible = true;
            for &h in &star {
                let t = tri.tet(h);
                if t.is_infinite() || t.weight <= self.t_free {
                    eligible = false;
                    break;
                }
                match t.label() {
                    Label::Outside => any_out = true,
                    Label::Inside => flip.push(h),
                }
            }
            if !eligible || !any_out || flip.is_empty() {
                continue;
            }
            for &h in &flip {
                tri.set_label(h, Label::Outside);
            }
            let mut touched: Vec<VertexId> = flip.iter().flat_map(|&h| tri.tet(h).v).collect();
            touched.sort_unstable();
            touched.dedup();
            if touched.iter().all(|&u| vertex_regular(tri, u, &[])) {
                for &h in &flip {
                    self.commit_label(tri, h);
                }
                commits += 1;
            } else {
                for &h in &flip {
                    tri.set_label(h, Label::Inside);
                }
            }
        }
        commits
    }

    /// Boundary tetrahedra whose bounding box overlaps any of `cells`, in
    /// handle order. Uses the hash when enabled, else scans O.
    pub fn boundary_lookup(&self, tri: &Triangulation, cells: &HashSet<CellIndex>) -> Vec<TetHandle> {
        let mut out: Vec<TetHandle> = match &self.hash {
            Some(hash) => {
                let mut v: Vec<TetHandle> = cells.iter().flat_map(|c| hash.cell(c)).collect();
                tri.retain_unique_live(&mut v);
                v.sort_unstable();
                v
            }
            None => self.scan_boundary(tri, cells),
        };
        out.retain(|&h| tri.is_alive(h));
        out
    }

    /// Brute-force boundary lookup; the reference for the hash.
    pub fn scan_boundary(&self, tri: &Triangulation, cells: &HashSet<CellIndex>) -> Vec<TetHandle> {
        let Some(frame) = &self.frame else {
            return Vec::new();
        };
        self.outside(tri)
            .filter(|&h| is_boundary_tet(tri, h))
            .filter(|&h| {
                let (lo, hi) = tet_cells(tri, frame, h);
                cells_in(lo, hi).any(|c| cells.contains(&c))
            })
            .collect()
    }

    /// All boundary tetrahedra of O.
    pub fn boundary_tets(&self, tri: &Triangulation) -> Vec<TetHandle> {
        self.outside(tri).filter(|&h| is_boundary_tet(tri, h)).collect()
    }

    /// Triangles between O and its complement, oriented from Outside toward
    /// Inside, with vertices shared and deduplicated.
    pub fn extract_surface(&self, tri: &Triangulation) -> TriangleMesh {
        let mut mesh = TriangleMesh::default();
        let mut index: HashMap<VertexId, u32> = HashMap::default();
        for h in self.outside(tri) {
            let t = tri.tet(h);
            for i in 0..4 {
                if tri.tet(t.n[i]).label() != Label::Inside {
                    continue;
                }
                let mut tri_idx = [0u32; 3];
                for (slot, &k) in FACET_OUT[i].iter().enumerate() {
                    let v = t.v[k];
                    tri_idx[slot] = *index.entry(v).or_insert_with(|| {
                        mesh.vertices.push(*tri.position(v));
                        (mesh.vertices.len() - 1) as u32
                    });
                }
                mesh.triangles.push(tri_idx);
            }
        }
        mesh
    }

    /// Full consistency check: no tetrahedron of O was destroyed, infinite
    /// tetrahedra stay Inside, the hash matches a rebuild and the surface is
    /// a closed manifold.
    pub fn validate(&self, tri: &Triangulation) -> Result<(), String> {
        if tri.num_outside() != self.count {
            return Err(format!("O has {} tets but {} are labeled Outside", self.count, tri.num_outside()));
        }
        for (h, t) in tri.tets() {
            if t.is_infinite() && t.label() != Label::Inside {
                return Err(format!("infinite tet {h:?} is Outside"));
            }
        }
        if let Some(hash) = &self.hash {
            let fresh = self.build_hash(tri);
            if fresh.entries != hash.entries {
                return Err("boundary hash out of date".into());
            }
        }
        self.extract_surface(tri)
            .check_manifold()
            .map_err(|e| format!("surface not manifold: {e:?}"))
    }
}

/// Whether `h` is in O and has at least one Inside neighbor.
pub fn is_boundary_tet(tri: &Triangulation, h: TetHandle) -> bool {
    let t = tri.tet(h);
    t.label() == Label::Outside && t.n.iter().any(|&nb| tri.tet(nb).label() == Label::Inside)
}

/// Vertices of the boundary facets of the given boundary tetrahedra.
pub fn boundary_vertices(tri: &Triangulation, tets: &[TetHandle]) -> Vec<VertexId> {
    let mut out = Vec::new();
    for &h in tets {
        let t = tri.tet(h);
        if t.label() != Label::Outside {
            continue;
        }
        for i in 0..4 {
            if tri.tet(t.n[i]).label() == Label::Inside {
                out.extend(FACET_OUT[i].iter().map(|&k| t.v[k]));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Whether relabeling `t` to `to` keeps all four of its vertices regular,
/// given that they are regular now.
///
/// Around a regular vertex the tetrahedra labeled `to` cover a disk (or
/// nothing, or everything) of the link sphere. Adding the link triangle of
/// `t` keeps a disk when it meets the disk along two or three edges, or
/// along one edge whose opposite corner is off the disk; with no shared
/// edge it is only safe when the disk is empty.
fn single_flip_regular(tri: &Triangulation, t: TetHandle, to: Label) -> bool {
    let tet = tri.tet(t);
    let mut shared = [false; 4];
    for k in 0..4 {
        shared[k] = tri.tet(tet.n[k]).label() == to;
    }
    let count = |v: VertexId| match to {
        Label::Outside => tri.outside_degree(v),
        Label::Inside => tri.degree(v) - tri.outside_degree(v),
    };
    (0..4).all(|j| {
        let v = tet.v[j];
        let mut facets = (0..4).filter(|&k| k != j && shared[k]);
        match (facets.next(), facets.next()) {
            (Some(_), Some(_)) => true,
            (None, _) => count(v) == 0,
            (Some(k), None) => count(tet.v[k]) == 0 || !edge_touches(tri, t, j, k, to),
        }
    })
}

/// Whether any tetrahedron other than `t` around the edge `t.v[a]`–`t.v[b]`
/// is labeled `label`.
fn edge_touches(tri: &Triangulation, t: TetHandle, a: usize, b: usize, label: Label) -> bool {
    let tet = tri.tet(t);
    let (va, vb) = (tet.v[a], tet.v[b]);
    let mut rest = (0..4).filter(|&i| i != a && i != b);
    let (c, d) = (rest.next().unwrap(), rest.next().unwrap());
    // Cross the facet opposite `c`; the far vertex of the facet we keep is `d`.
    let mut keep = tet.v[d];
    let mut cur = tet.n[c];
    while cur != t {
        let ct = tri.tet(cur);
        if ct.label() == label {
            return true;
        }
        let far = ct.v.iter().position(|&x| x != va && x != vb && x != keep).unwrap();
        let next = ct.n[ct.index_of(keep).unwrap()];
        keep = ct.v[far];
        cur = next;
    }
    false
}

/// Whether the boundary triangles around `v` form nothing or one closed fan,
/// evaluated as if the labels of `flip` were inverted.
pub fn vertex_regular(tri: &Triangulation, v: VertexId, flip: &[TetHandle]) -> bool {
    if v == INFINITE {
        return true;
    }
    let label = |h: TetHandle| {
        let l = tri.tet(h).label();
        if flip.contains(&h) {
            flipped(l)
        } else {
            l
        }
    };
    // A vertex entirely on one side has no boundary around it.
    let mut out = tri.outside_degree(v) as i64;
    for &h in flip {
        let t = tri.tet(h);
        if t.v.contains(&v) {
            out += if t.label() == Label::Outside { -1 } else { 1 };
        }
    }
    if out == 0 || out == tri.degree(v) as i64 {
        return true;
    }
    // One walk over the star, collecting link edges on the way.
    let stamp = tri.new_mark();
    let start = tri.incident_tet(v);
    tri.mark(start, stamp);
    let mut stack = Vec::with_capacity(64);
    stack.push(start);
    let mut edges: Vec<(VertexId, VertexId)> = Vec::with_capacity(16);
    while let Some(h) = stack.pop() {
        let t = tri.tet(h);
        let outside = label(h) == Label::Outside;
        for k in 0..4 {
            if t.v[k] == v {
                continue;
            }
            let nb = t.n[k];
            if !tri.is_marked(nb, stamp) {
                tri.mark(nb, stamp);
                stack.push(nb);
            }
            if outside && label(nb) == Label::Inside {
                let mut other = t.v.iter().copied().filter(|&u| u != v && u != t.v[k]);
                edges.push((other.next().unwrap(), other.next().unwrap()));
            }
        }
    }
    single_cycle(&edges)
}

/// Whether an undirected edge list is empty or forms exactly one simple cycle.
fn single_cycle(edges: &[(VertexId, VertexId)]) -> bool {
    if edges.is_empty() {
        return true;
    }
    if edges.len() < 3 {
        return false;
    }
    let mut adj: Vec<(VertexId, [VertexId; 2], u8)> = Vec::with_capacity(edges.len());
    let mut add = |a: VertexId, b: VertexId| -> bool {
        match adj.iter_mut().find(|e| e.0 == a) {
            Some(e) => {
                if e.2 >= 2 {
                    return false;
                }
                e.1[e.2 as usize] = b;
                e.2 += 1;
            }
            None => adj.push((a, [b, b], 1)),
        }
        true
    };
    for &(a, b) in edges {
        if !add(a, b) || !add(b, a) {
            return false;
        }
    }
    if adj.iter().any(|e| e.2 != 2) || adj.len() != edges.len() {
        return false;
    }
    let next_of = |cur: VertexId, prev: VertexId| {
        let e = adj.iter().find(|e| e.0 == cur).unwrap();
        if e.1[0] != prev {
            e.1[0]
        } else {
            e.1[1]
        }
    };
    let start = adj[0].0;
    let mut prev = start;
    let mut cur = adj[0].1[0];
    let mut steps = 1;
    while cur != start {
        let n = next_of(cur, prev);
        prev = cur;
        cur = n;
        steps += 1;
        if steps > edges.len() {
            return false;
        }
    }
    steps == edges.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delaunay::VertexKind;
    use crate::geom::Point;

    fn v(i: u32) -> VertexId {
        VertexId(i)
    }

    #[test]
    fn cycle_detection() {
        assert!(single_cycle(&[]));
        assert!(single_cycle(&[(v(1), v(2)), (v(2), v(3)), (v(3), v(1))]));
        assert!(!single_cycle(&[(v(1), v(2)), (v(2), v(3))]));
        // Two triangles sharing a vertex: degree 4.
        assert!(!single_cycle(&[
            (v(1), v(2)),
            (v(2), v(3)),
            (v(3), v(1)),
            (v(1), v(4)),
            (v(4), v(5)),
            (v(5), v(1)),
        ]));
        // Two disjoint triangles.
        assert!(!single_cycle(&[
            (v(1), v(2)),
            (v(2), v(3)),
            (v(3), v(1)),
            (v(4), v(5)),
            (v(5), v(6)),
            (v(6), v(4)),
        ]));
    }

    fn single_tet() -> (Triangulation, TetHandle) {
        let pts = [
            (Point::new(0., 0., 0.), VertexKind::Steiner),
            (Point::new(1., 0., 0.), VertexKind::Steiner),
            (Point::new(0., 1., 0.), VertexKind::Steiner),
            (Point::new(0., 0., 1.), VertexKind::Steiner),
        ];
        let (tri, _) = Triangulation::from_points(&pts).unwrap();
        let h = tri.tets().find(|(_, t)| !t.is_infinite()).unwrap().0;
        (tri, h)
    }

    #[test]
    fn single_tet_surface() {
        let (mut tri, h) = single_tet();
        let mut m = Manifold::new(1.0);
        assert!(m.extract_surface(&tri).is_empty());
        assert!(m.is_addition_manifold(&tri, h));
        m.set_label(&mut tri, h, Label::Outside);
        let mesh = m.extract_surface(&tri);
        assert_eq!(mesh.triangles.len(), 4);
        assert_eq!(mesh.check_manifold(), Ok(()));
        assert_eq!(mesh.euler_characteristic(), 2);
        assert!(m.is_removal_manifold(&tri, h));
        m.validate(&tri).unwrap();
    }

    #[test]
    fn grow_two_adjacent() {
        // Bipyramid: two tets sharing the facet z = 0.
        let pts = [
            (Point::new(0., 0., 0.), VertexKind::Steiner),
            (Point::new(1., 0., 0.), VertexKind::Steiner),
            (Point::new(0., 1., 0.), VertexKind::Steiner),
            (Point::new(0.3, 0.3, 1.), VertexKind::Steiner),
            (Point::new(0.3, 0.3, -1.), VertexKind::Steiner),
        ];
        let (mut tri, _) = Triangulation::from_points(&pts).unwrap();
        let finite: Vec<_> = tri.tets().filter(|(_, t)| !t.is_infinite()).map(|(h, _)| h).collect();
        assert_eq!(finite.len(), 2);
        tri.tet_mut(finite[0]).weight = 5.0;
        tri.tet_mut(finite[1]).weight = 3.0;
        let mut m = Manifold::new(1.0);
        let s = m.grow(&mut tri, [finite[0]]);
        assert_eq!(s, GrowStats { added: 2, rejected: 0 });
        let mesh = m.extract_surface(&tri);
        assert_eq!(mesh.triangles.len(), 6);
        assert_eq!(mesh.euler_characteristic(), 2);
        m.validate(&tri).unwrap();
    }

    #[test]
    fn grow_ignores_light_tets() {
        let (mut tri, h) = single_tet();
        let mut m = Manifold::new(1.0);
        assert_eq!(m.grow(&mut tri, [h]), GrowStats::default());
        assert!(m.is_empty());
    }

    #[test]
    fn shrink_disjoint_is_noop() {
        let (mut tri, h) = single_tet();
        let mut m = Manifold::new(1.0);
        m.set_label(&mut tri, h, Label::Outside);
        let s = m.shrink(&mut tri, |_, _| false, [h]);
        assert_eq!(s, ShrinkStats::default());
        assert!(m.contains(&tri, h));
        let s = m.shrink(&mut tri, |_, _| true, [h]);
        assert_eq!(s, ShrinkStats { removed: 1, stuck: 0 });
        assert!(m.is_empty());
    }

    /// The closed-form single-tet tests agree with full link checks on
    /// every state reachable by manifold-preserving edits.
    #[test]
    fn single_flip_matches_link_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..80)
            .map(|_| (Point::new(rng.gen(), rng.gen(), rng.gen()), VertexKind::Steiner))
            .collect();
        let (mut tri, _) = Triangulation::from_points(&pts).unwrap();
        let mut m = Manifold::new(0.0);
        let handles: Vec<_> = tri.tet_handles().into_iter().filter(|&h| !tri.is_infinite(h)).collect();
        let (mut adds, mut removes) = (0, 0);
        for _ in 0..4000 {
            let h = handles[rng.gen_range(0..handles.len())];
            let t = tri.tet(h);
            let regular = t.v.iter().all(|&v| vertex_regular(&tri, v, &[h]));
            if t.label() == Label::Inside {
                assert_eq!(m.is_addition_manifold(&tri, h), regular);
                if regular {
                    m.set_label(&mut tri, h, Label::Outside);
                    adds += 1;
                }
            } else {
                let buried = t.n.iter().all(|&nb| tri.tet(nb).label() == Label::Outside);
                assert_eq!(m.is_removal_manifold(&tri, h), regular && !buried);
                if regular && !buried {
                    m.set_label(&mut tri, h, Label::Inside);
                    removes += 1;
                }
            }
        }
        assert!(adds > 100 && removes > 50, "{adds} {removes}");
        assert!(m.validate(&tri).is_ok());
    }
}
