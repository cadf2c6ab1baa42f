use carvemesh::config::{Config, Mode};
use carvemesh::reconstructor::Reconstructor;
use carvemesh::synth::{evaluate_depth_mae, generate, SceneSpec};

fn run(spec: &SceneSpec, mode: Mode) -> Reconstructor {
    let (log, gt) = generate(spec).unwrap();
    let cfg = Config {
        debug_invariants: true,
        mode,
        ..Default::default()
    };
    let mut r = Reconstructor::new(cfg).unwrap();
    for b in log {
        let st = r.process_keyframe(b).unwrap();
        eprintln!("{st:?}");
        let mesh = r.surface();
        mesh.check_manifold().unwrap();
        let fresh = r.fresh_weights();
        for (h, t) in r.triangulation().tets() {
            assert_eq!(fresh[&h].to_bits(), t.weight.to_bits(), "weight drift at {h:?}");
        }
    }
    assert_eq!(r.containment_violations(), 0);
    eprintln!("{:?}", evaluate_depth_mae(&r.surface(), &gt));
    r
}

#[test]
fn corridor_with_churn_keeps_invariants() {
    let spec = SceneSpec {
        churn_fraction: 0.2,
        removal_fraction: 0.05,
        noise_sigma: 0.02,
        ..SceneSpec::corridor(25, 3)
    };
    run(&spec, Mode::proposed());
}
