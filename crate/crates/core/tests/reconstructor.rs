use carvemesh::config::{Config, Mode};
use carvemesh::geom::Point;
use carvemesh::io::{Camera, KeyframeBatch};
use carvemesh::reconstructor::{ReconstructError, Reconstructor};
use carvemesh::synth::{generate, SceneSpec};

fn camera(id: u32, x: f64) -> Camera {
    Camera { id, center: Point::new(x, 0.0, 1.5), pose: None }
}

/// A wall of points at y = 4 seen by one camera per keyframe.
fn wall_batch(k: u64, first_id: u64, n: u64) -> KeyframeBatch {
    let mut b = KeyframeBatch::new(k, camera(k as u32, k as f64 * 0.5));
    for i in 0..n {
        let id = first_id + i;
        let t = id as f64;
        b.new_points.push((id, Point::new(0.37 * (t % 13.0) + 0.5 * k as f64, 4.0 + 0.05 * (t * 0.7).sin(), 0.29 * (t % 11.0))));
        b.observations.push((k as u32, id));
    }
    b
}

fn with_frames(cfg: Config, frames: u64) -> Reconstructor {
    let mut r = Reconstructor::new(cfg).unwrap();
    for k in 0..frames {
        r.process_keyframe(wall_batch(k, k * 30, 30)).unwrap();
    }
    r
}

#[test]
fn enclosing_set_is_a_block_of_125_cells() {
    let r = with_frames(Config::default(), 1);
    let cam = Point::new(0.0, 0.0, 1.5);
    let p = Point::new(0.1, 0.2, 0.3);
    let e = r.enclosing_set(&[p], &cam);
    assert_eq!(e.cells.len(), 125);
    // A second point in the same cell changes nothing.
    let e2 = r.enclosing_set(&[p, Point::new(0.2, 0.1, 0.4)], &cam);
    assert_eq!(e.cells, e2.cells);
    assert!(e.ball.is_none());
    assert!(e.contains_point(&Point::new(15.0, 15.0, 15.0)));
}

#[test]
fn spherical_enclosing_uses_the_ball() {
    let cfg = Config { mode: Mode::baseline(), ..Default::default() };
    let r = with_frames(cfg.clone(), 1);
    let cam = Point::new(0.0, 0.0, 1.5);
    let e = r.enclosing_set(&[Point::new(1.0, 1.0, 1.0)], &cam);
    let (c, rad) = e.ball.unwrap();
    assert_eq!(c, cam);
    assert!((rad - (cfg.r_max + 3f64.sqrt() * cfg.l_steiner)).abs() < 1e-12);
    // Points deep inside the ball need no cells.
    assert!(e.cells.is_empty());
}

#[test]
fn keyframe_without_points_leaves_the_surface_alone() {
    let mut r = with_frames(Config::default(), 4);
    let before = r.surface();
    assert!(!before.triangles.is_empty());
    let st = r.process_keyframe(KeyframeBatch::new(4, camera(99, 2.0))).unwrap();
    assert_eq!(st.new_points, 0);
    assert_eq!(st.tets_shrunk, 0);
    assert_eq!(r.surface(), before);
}

#[test]
fn sequencing_errors() {
    let mut r = with_frames(Config::default(), 2);
    assert!(matches!(
        r.process_keyframe(wall_batch(1, 500, 5)),
        Err(ReconstructError::OutOfOrder { last: 1, got: 1 })
    ));
    assert!(matches!(r.end_keyframe(), Err(ReconstructError::NoFrame)));
    r.begin_keyframe(wall_batch(2, 600, 5)).unwrap();
    assert!(matches!(r.set_mode(Mode::baseline()), Err(ReconstructError::InvalidMidFrame)));
    assert!(matches!(r.begin_keyframe(wall_batch(3, 700, 5)), Err(ReconstructError::InvalidMidFrame)));
    r.end_keyframe().unwrap();
    r.set_mode(Mode::baseline()).unwrap();
    assert_eq!(r.mode(), Mode::baseline());

    let mut b = KeyframeBatch::new(3, camera(3, 1.0));
    b.observations.push((3, 123456));
    assert!(matches!(r.process_keyframe(b), Err(ReconstructError::UnknownId { .. })));
}

#[test]
fn performance_flags_do_not_change_output() {
    let spec = SceneSpec { churn_fraction: 0.1, removal_fraction: 0.03, noise_sigma: 0.02, ..SceneSpec::corridor(30, 4) };
    let (log, _) = generate(&spec).unwrap();
    let run = |mode: Mode| {
        let mut r = Reconstructor::new(Config { mode, ..Default::default() }).unwrap();
        for b in &log {
            r.process_keyframe(b.clone()).unwrap();
        }
        let w: Vec<u64> = r.triangulation().tets().map(|(_, t)| t.weight.to_bits()).collect();
        (r.surface(), w)
    };
    let p = Mode::proposed();
    let reference = run(p);
    assert_eq!(run(Mode { next_tet_cache: false, ..p }), reference);
    assert_eq!(run(Mode { boundary_hash: false, ..p }), reference);
}

#[test]
fn stats_counters_cross_check() {
    let spec = SceneSpec { churn_fraction: 0.2, removal_fraction: 0.05, ..SceneSpec::corridor(30, 9) };
    let (log, _) = generate(&spec).unwrap();
    let mut r = Reconstructor::new(Config::default()).unwrap();
    let mut moved = 0;
    for b in log {
        let st = r.process_keyframe(b).unwrap();
        assert_eq!(st.traced + st.retraced + st.untraced + st.skipped_ray_ops, st.resolved_ray_ops);
        let t = st.timings;
        let parts = t.initialize_steiner + t.shrink + t.point_insertion + t.ray_tracing + t.grow;
        assert!(parts <= t.total + 1e-9);
        assert!(st.cache_hits <= st.cache_proposals);
        assert_eq!(st.outside_tets, r.manifold().len());
        assert_eq!(st.tets, r.triangulation().num_tets());
        moved += st.moving_points;
    }
    assert!(moved > 0);
}

#[test]
fn weights_match_a_fresh_retrace_after_moves_and_removals() {
    // Scripted: insert, move some points twice, remove others.
    let mut r = Reconstructor::new(Config::default()).unwrap();
    r.process_keyframe(wall_batch(0, 0, 40)).unwrap();
    r.process_keyframe(wall_batch(1, 40, 40)).unwrap();
    for k in 2..6u64 {
        let mut b = wall_batch(k, k * 40, 20);
        for id in (0..40).step_by(5) {
            let t = id as f64 + k as f64;
            b.moved_points.push((id, Point::new(0.37 * (id % 13) as f64 + 0.01 * t, 4.1 + 0.02 * k as f64, 0.29 * (id % 11) as f64)));
            b.observations.push((k as u32, id));
        }
        if k == 4 {
            b.removed_points.extend([1, 2, 3, 41, 42]);
        }
        r.process_keyframe(b).unwrap();
        let fresh = r.fresh_weights();
        let rays = r.scheduler().live_rays().count();
        assert!(rays <= 500);
        for (h, t) in r.triangulation().tets() {
            assert!((fresh[&h] - t.weight).abs() <= 1e-9, "keyframe {k}: {h:?} {} vs {}", t.weight, fresh[&h]);
        }
    }
}
