use carvemesh::delaunay::{Triangulation, VertexId, VertexKind};
use carvemesh::geom::Point;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lattice(n: i32, l: f64) -> Vec<(Point, VertexKind)> {
    let mut pts = Vec::new();
    let h = (n - 1) as f64 * l / 2.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                pts.push((Point::new(i as f64 * l - h, j as f64 * l - h, k as f64 * l - h), VertexKind::Steiner));
            }
        }
    }
    pts
}

fn random_point(rng: &mut impl Rng, r: f64) -> Point {
    Point::new(rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r..r))
}

/// The triangulation rebuilt from its own vertices, for comparison.
fn rebuilt(tri: &Triangulation) -> Triangulation {
    let mut pts: Vec<(Point, VertexKind)> = tri.vertex_ids().map(|v| (*tri.position(v), tri.vertex(v).kind)).collect();
    pts.sort_by_key(|p| match p.1 {
        VertexKind::Steiner | VertexKind::Infinite => (0, 0),
        VertexKind::Slam(id) => (1, id),
    });
    Triangulation::from_points(&pts).unwrap().0
}

fn tet_coords(tri: &Triangulation) -> Vec<[[u64; 3]; 4]> {
    let mut out: Vec<[[u64; 3]; 4]> = tri
        .tets()
        .filter(|(_, t)| !t.is_infinite())
        .map(|(h, _)| {
            let mut k = tri.tet_points(h).map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]);
            k.sort_unstable();
            k
        })
        .collect();
    out.sort_unstable();
    out
}

#[test]
fn thousand_random_operations_stay_delaunay() {
    let (mut tri, _) = Triangulation::from_points(&lattice(6, 10.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut alive: Vec<(VertexId, u64)> = Vec::new();
    let mut next_id = 0u64;
    let (mut inserts, mut removes, mut moves) = (0, 0, 0);
    for op in 0..1000 {
        let r: f64 = rng.gen();
        if alive.len() < 200 && (r < 0.45 || alive.is_empty()) {
            let v = tri.insert(random_point(&mut rng, 24.0), VertexKind::Slam(next_id), None).unwrap();
            alive.push((v, next_id));
            next_id += 1;
            inserts += 1;
        } else if r < 0.75 {
            let (v, _) = alive.swap_remove(rng.gen_range(0..alive.len()));
            tri.remove_vertex(v).unwrap();
            removes += 1;
        } else {
            // A move is a removal followed by a re-insertion nearby.
            let i = rng.gen_range(0..alive.len());
            let (v, id) = alive[i];
            let p = *tri.position(v);
            let q = Point::new(
                (p.x + rng.gen_range(-1.0..1.0)).clamp(-24.0, 24.0),
                (p.y + rng.gen_range(-1.0..1.0)).clamp(-24.0, 24.0),
                (p.z + rng.gen_range(-1.0..1.0)).clamp(-24.0, 24.0),
            );
            tri.remove_vertex(v).unwrap();
            alive[i] = (tri.insert(q, VertexKind::Slam(id), None).unwrap(), id);
            moves += 1;
        }
        if op % 100 == 99 {
            tri.validate().unwrap();
            assert_eq!(tri.delaunay_violations(), 0, "after op {op}");
        }
    }
    assert!(inserts > 300 && removes > 100 && moves > 100);
    tri.validate().unwrap();
    assert_eq!(tri.delaunay_violations(), 0);
    // Points in general position have a unique Delaunay triangulation.
    assert_eq!(tet_coords(&tri), tet_coords(&rebuilt(&tri)));
}

#[test]
fn cospherical_clusters_survive_churn() {
    // Points on a small lattice are massively cospherical; exact predicates
    // with symbolic perturbation must still keep the structure consistent.
    let (mut tri, _) = Triangulation::from_points(&lattice(4, 10.0)).unwrap();
    let mut ids = Vec::new();
    let mut k = 0;
    for i in 0..4 {
        for j in 0..4 {
            for l in 0..4 {
                let p = Point::new(i as f64 * 2.5 - 4.0, j as f64 * 2.5 - 4.0, l as f64 * 2.5 - 4.0);
                ids.push(tri.insert(p, VertexKind::Slam(k), None).unwrap());
                k += 1;
            }
        }
    }
    tri.validate().unwrap();
    assert_eq!(tri.delaunay_violations(), 0);
    for v in ids.iter().step_by(3) {
        tri.remove_vertex(*v).unwrap();
    }
    tri.validate().unwrap();
    assert_eq!(tri.delaunay_violations(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn insert_remove_sequences(ops in prop::collection::vec((any::<bool>(), -14.0f64..14.0, -14.0f64..14.0, -14.0f64..14.0), 1..60)) {
        let (mut tri, _) = Triangulation::from_points(&lattice(4, 10.0)).unwrap();
        let mut alive = Vec::new();
        for (i, (remove, x, y, z)) in ops.into_iter().enumerate() {
            if remove && !alive.is_empty() {
                let v = alive.remove(i % alive.len());
                tri.remove_vertex(v).unwrap();
            } else if let Ok(v) = tri.insert(Point::new(x, y, z), VertexKind::Slam(i as u64), None) {
                alive.push(v);
            }
        }
        prop_assert!(tri.validate().is_ok());
        prop_assert_eq!(tri.delaunay_violations(), 0);
    }
}
