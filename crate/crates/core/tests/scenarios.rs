//! Bundled scenario files.

use std::path::PathBuf;

use ncvsm_core::scenario::{parse_scenario, parse_scenario_str, serialize_scenario};
use ncvsm_core::ObjectKind;

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn reference_scenario_has_the_seven_reference_objects() {
    let s = parse_scenario(&bundled("reference.scn")).unwrap();
    let expected = [
        ("fan1", ObjectKind::VibratingClutter, 0.7, 1.5, 35),
        ("human1", ObjectKind::Human, 0.5, 2.0, 47),
        ("static1", ObjectKind::StaticClutter, 1.0, 2.3, 54),
        ("human2", ObjectKind::Human, 0.45, 2.6, 61),
        ("static2", ObjectKind::StaticClutter, 0.9, 2.9, 68),
        ("fan2", ObjectKind::VibratingClutter, 0.6, 3.1, 72),
        ("human3", ObjectKind::Human, 0.4, 3.5, 82),
    ];
    assert_eq!(s.scene.objects.len(), expected.len());
    for (o, (name, kind, x, d, bin)) in s.scene.objects.iter().zip(expected) {
        assert_eq!(
            (o.name.as_str(), o.kind, o.amplitude, o.requested_distance, o.bin),
            (name, kind, x, d, bin)
        );
    }
    assert_eq!(s.radar.samples_per_chirp, 200);
    assert_eq!(s.radar.chirps_per_frame, 150);
    assert_eq!(s.monitoring.jsr.lambda, 30.0);
    assert_eq!(s.monitoring.jsr.lipschitz, 4.5e6);
    assert_eq!(s.monitoring.jsr.max_iter, 1000);
    assert_eq!(s.sweep.snr_db, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
}

#[test]
fn cohort_scenario_expands_subjects() {
    let s = parse_scenario(&bundled("cohort.scn")).unwrap();
    let cohort = s.cohort.expect("cohort section");
    assert_eq!(cohort.target, "human2");
    assert_eq!(cohort.subjects.len(), 10);
    assert_eq!(s.sweep.seeds.len(), 20);
    assert_eq!(s.monitoring.targets, Some(vec!["human2".to_string()]));
}

#[test]
fn bundled_scenarios_round_trip() {
    for name in ["reference.scn", "cohort.scn"] {
        let path = bundled(name);
        let first = parse_scenario(&path).unwrap();
        let text = serialize_scenario(&first).unwrap();
        let again = parse_scenario_str(&text, &path, path.parent().unwrap()).unwrap();
        assert_eq!(first, again, "{name}");
    }
}
