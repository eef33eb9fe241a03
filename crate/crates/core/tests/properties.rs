mod common;

use common::*;
use jumpflow::experiments::{parse_config, ExperimentConfig, Scenario, SCENARIOS};
use jumpflow::geometry::Manifold;
use jumpflow::marcus::State;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marcus_flow_is_inverted_by_the_opposite_mark(seed in any::<u64>(), which in 0usize..14) {
        let g = &geometries()[which];
        prop_assert!(flow_inversion(g, 4, seed).unwrap() <= 1e-8, "{}", g.name);
    }
}

#[test]
fn geometry_list_covers_every_state_space() {
    let names: Vec<String> = geometries().into_iter().map(|g| g.name).collect();
    assert_eq!(names.len(), 14);
    for n in ["Sphere2", "Hyperboloid", "SO3 left", "Affine(2) right", "DilTrans(2) left", "warped"] {
        assert!(names.iter().any(|m| m.contains(n)), "{n}");
    }
}

#[test]
fn long_paths_keep_their_invariants() {
    for (name, jumps, err) in long_path_invariants(11).unwrap() {
        assert!(jumps >= 10_000, "{name}: {jumps} jumps");
        assert!(err <= 1e-10, "{name}: {err:e}");
    }
}

#[test]
fn adjoint_and_modulus_are_homomorphisms() {
    let (ad, chi, det) = homomorphism_defects(200, 12).unwrap();
    assert!(ad <= 1e-10 && chi <= 1e-10 && det <= 1e-10, "{ad:e} {chi:e} {det:e}");
}

#[test]
fn experiment_result_does_not_depend_on_threads() {
    let r = result_bytes(&[1, 3], 5).unwrap();
    assert_eq!(r[0], r[1]);
}

#[test]
fn default_configs_round_trip() {
    for (name, _) in SCENARIOS {
        let cfg = ExperimentConfig { seed: 9, output_dir: None, scenario: Scenario::default_for(name).unwrap() };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg, "{name}");
    }
    let short = parse_config(r#"{"seed": 1, "scenario": {"exit_polynomial": {}}}"#).unwrap();
    assert_eq!(short.scenario, Scenario::default_for("exit_polynomial").unwrap());
}

#[test]
fn states_serialise_with_plain_arrays() {
    let s = State::Frame(random_frame(Manifold::Sphere2, &mut rng(3)));
    let v = serde_json::to_value(&s).unwrap();
    assert_eq!(v["type"], "frame");
    assert_eq!(v["value"]["base"]["coords"].as_array().unwrap().len(), 3);
    assert_eq!(v["value"]["basis"][1].as_array().unwrap().len(), 3);
    assert_eq!(serde_json::from_value::<State>(v).unwrap(), s);
    let e: State = serde_json::from_str(r#"{"type": "euclid", "value": [1.0, -2.0]}"#).unwrap();
    assert_eq!(e.flat(), vec![1.0, -2.0]);
}
