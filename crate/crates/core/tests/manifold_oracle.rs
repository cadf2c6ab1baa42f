use std::collections::HashSet;

use carvemesh::delaunay::{Label, TetHandle, Triangulation, VertexKind};
use carvemesh::geom::Point;
use carvemesh::manifold::{boundary_vertices, Manifold};
use carvemesh::steiner::{CellFrame, CellIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;

/// Jittered `n`³ grid with unit spacing.
fn cloud(n: i32, seed: u64) -> Triangulation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = Point::new(
                    i as f64 + rng.gen_range(-0.3..0.3),
                    j as f64 + rng.gen_range(-0.3..0.3),
                    k as f64 + rng.gen_range(-0.3..0.3),
                );
                pts.push((p, VertexKind::Slam(pts.len() as u64)));
            }
        }
    }
    Triangulation::from_points(&pts).unwrap().0
}

fn centroid(tri: &Triangulation, h: TetHandle) -> Point {
    let p = tri.tet_points(h);
    Point::from((p[0].coords + p[1].coords + p[2].coords + p[3].coords) / 4.0)
}

fn set_weights(tri: &mut Triangulation, free: impl Fn(&Point) -> bool) {
    for h in tri.tet_handles() {
        let w = if !tri.is_infinite(h) && free(&centroid(tri, h)) { 2.0 } else { 0.0 };
        tri.tet_mut(h).weight = w;
    }
}

fn heaviest(tri: &Triangulation) -> TetHandle {
    tri.tets()
        .filter(|(_, t)| !t.is_infinite())
        .max_by(|a, b| a.1.weight.total_cmp(&b.1.weight).then(b.0.cmp(&a.0)))
        .unwrap()
        .0
}

fn frontier(m: &Manifold, tri: &Triangulation) -> Vec<TetHandle> {
    m.outside(tri).flat_map(|h| tri.tet(h).n).collect()
}

#[test]
fn genus_step_closes_a_ring() {
    // A thin tube around a circle, cut by the star of one vertex on it.
    let mut tri = cloud(12, 5);
    let c = Point::new(5.5, 5.5, 5.5);
    let tube = |p: &Point| {
        let r = ((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt();
        ((r - 3.0).powi(2) + (p.z - c.z).powi(2)).sqrt() < 0.8
    };
    let q = Point::new(c.x + 3.0, c.y, c.z);
    let v0 = tri
        .vertex_ids()
        .min_by(|&a, &b| (tri.position(a) - q).norm().total_cmp(&(tri.position(b) - q).norm()))
        .unwrap();
    let cut: HashSet<TetHandle> = tri.star(v0).into_iter().collect();
    set_weights(&mut tri, tube);
    for &h in &cut {
        tri.tet_mut(h).weight = 0.0;
    }
    let mut m = Manifold::new(1.0);
    let seed = heaviest(&tri);
    m.grow(&mut tri, [seed]);
    m.validate(&tri).unwrap();
    assert_eq!(m.extract_surface(&tri).euler_characteristic(), 2);

    // Opening the cut: one-at-a-time growth cannot close the loop.
    for &h in &cut {
        tri.tet_mut(h).weight = 2.0;
    }
    let f = frontier(&m, &tri);
    let g = m.grow(&mut tri, f);
    assert!(g.rejected > 0);
    m.validate(&tri).unwrap();
    assert_eq!(m.extract_surface(&tri).euler_characteristic(), 2);

    let boundary = m.boundary_tets(&tri);
    let verts = boundary_vertices(&tri, &boundary);
    let commits = m.genus_step(&mut tri, verts);
    assert_eq!(commits, 1);
    m.validate(&tri).unwrap();
    assert_eq!(m.extract_surface(&tri).euler_characteristic(), 0);
    assert!(m.outside(&tri).all(|h| tri.tet(h).weight > 1.0));
}

#[test]
fn grow_and_shrink_keep_manifold_and_hash() {
    let mut tri = cloud(9, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for h in tri.tet_handles() {
        if !tri.is_infinite(h) {
            tri.tet_mut(h).weight = if rng.gen_bool(0.8) { 1.5 } else { 0.5 };
        }
    }
    let frame = CellFrame { origin: Point::new(-0.5, -0.5, -0.5), spacing: 2.0 };
    let mut m = Manifold::new(1.0);
    m.set_frame(frame);
    m.set_hash_enabled(&tri, true);
    let seed = heaviest(&tri);
    m.grow(&mut tri, [seed]);
    assert!(m.len() > 100);
    m.validate(&tri).unwrap();

    for round in 0..25 {
        // Shrink everything with a centroid in a random box.
        let lo = Point::new(rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0));
        let hi = Point::new(lo.x + 2.5, lo.y + 2.5, lo.z + 2.5);
        let inside = |tri: &Triangulation, h: TetHandle| {
            let c = centroid(tri, h);
            (0..3).all(|a| lo[a] <= c[a] && c[a] <= hi[a])
        };
        let before = m.len();
        let seeds = m.boundary_tets(&tri);
        let s = m.shrink(&mut tri, inside, seeds);
        assert_eq!(before - m.len(), s.removed);
        m.validate(&tri).unwrap_or_else(|e| panic!("round {round} shrink: {e}"));

        // Lighten a few tets, then grow back.
        for h in tri.tet_handles() {
            if !tri.is_infinite(h) && tri.tet(h).label() == Label::Inside && rng.gen_bool(0.05) {
                tri.tet_mut(h).weight = 1.5 - tri.tet(h).weight + 0.5;
            }
        }
        let seeds: Vec<TetHandle> = tri.tet_handles().into_iter().filter(|&h| m.contains(&tri, h)).collect();
        let mut frontier = Vec::new();
        for h in seeds {
            frontier.extend(tri.tet(h).n);
        }
        m.grow(&mut tri, frontier);
        m.validate(&tri).unwrap_or_else(|e| panic!("round {round} grow: {e}"));
        assert!(m.outside(&tri).all(|h| tri.tet(h).weight > 1.0));

        // Hash lookup against a scan over random cell sets.
        let cells: FxHashSet<CellIndex> = (0..6)
            .map(|_| CellIndex::new(rng.gen_range(-1..5), rng.gen_range(-1..5), rng.gen_range(-1..5)))
            .collect();
        assert_eq!(m.boundary_lookup(&tri, &cells), m.scan_boundary(&tri, &cells));
    }
}

#[test]
fn shrink_never_touches_tets_outside_the_set() {
    let mut tri = cloud(7, 3);
    set_weights(&mut tri, |_| true);
    let mut m = Manifold::new(1.0);
    let seed = heaviest(&tri);
    m.grow(&mut tri, [seed]);
    let before: HashSet<TetHandle> = m.outside(&tri).collect();
    let seeds = m.boundary_tets(&tri);
    m.shrink(&mut tri, |tri, h| centroid(tri, h).x < 2.0, seeds);
    let after: HashSet<TetHandle> = m.outside(&tri).collect();
    assert!(after.is_subset(&before));
    for h in before.difference(&after) {
        assert!(centroid(&tri, *h).x < 2.0);
    }
    assert!(after.len() < before.len());
    m.validate(&tri).unwrap();
}
