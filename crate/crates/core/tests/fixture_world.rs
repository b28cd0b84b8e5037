//! Properties of the bundled synthetic-city fixture and of the world queries on it.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rentsim_core::population::SynthesisParams;
use rentsim_core::scenario::{apply_scenario, ScenarioSpec};
use rentsim_core::synthcity;
use rentsim_core::world::{
    buffer_coverage, load_world, FacilityGeometry, Mode, ServiceRadii, ServiceSite, TransportFacility, World,
};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthcity")
}

fn load() -> World {
    let d = fixture();
    load_world(&d.join("zones.csv"), &d.join("sites.csv"), &d.join("facilities.csv")).unwrap()
}

fn stop(x: f64, y: f64, r: f64) -> TransportFacility {
    let g = FacilityGeometry::parse_wkt(&format!("POINT({x} {y})")).unwrap();
    TransportFacility::new(900, Mode::Bus, g, r, vec![]).unwrap()
}

#[test]
fn bundled_fixture_matches_the_generator() {
    let world = load();
    assert_eq!(world.len(), 60);
    let city = synthcity::generate(60, 7).unwrap();
    assert_eq!(world, city.world);
    let synthesis = SynthesisParams::load(&fixture().join("synthesis.toml")).unwrap();
    assert_eq!(synthesis, city.synthesis);
    for (stem, spec) in &city.scenarios {
        let text = std::fs::read_to_string(fixture().join(format!("scenarios/{stem}.json"))).unwrap();
        let on_disk: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_value(on_disk).unwrap(), serde_json::to_value(spec).unwrap(), "{stem}");
    }
}

#[test]
fn centroid_distance_is_a_metric() {
    let world = load();
    let n = world.len();
    for a in 0..n {
        assert_eq!(world.zone_distance(a, a), 0.0);
        for b in 0..n {
            assert_eq!(world.zone_distance(a, b), world.zone_distance(b, a));
            if a != b {
                assert!(world.zone_distance(a, b) > 0.0);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let (a, b, c) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
        assert!(world.zone_distance(a, c) <= world.zone_distance(a, b) + world.zone_distance(b, c) + 1e-12);
    }
}

fn total_coverage(world: &World, f: &TransportFacility) -> f64 {
    world
        .zones()
        .iter()
        .map(|z| buffer_coverage(f, z, f.service_radius).unwrap())
        .sum()
}

#[test]
fn coverage_over_all_zones_is_the_clipped_buffer() {
    let world = load();
    let r = 0.9;
    let disk = PI * r * r;
    // the outline is the rectangle [0, 20] x [0, 12]
    let cases = [
        (7.3, 5.1, disk),
        (2.0, 2.0, disk),
        (0.0, 0.0, disk / 4.0),
        (20.0, 12.0, disk / 4.0),
        (10.0, 0.0, disk / 2.0),
        (0.0, 6.4, disk / 2.0),
    ];
    for (x, y, expected) in cases {
        let got = total_coverage(&world, &stop(x, y, r));
        assert!((got - expected).abs() < 1e-4, "({x}, {y}): {got} vs {expected}");
    }
}

#[test]
fn accessibility_scores_are_nonnegative_and_linear_in_weights() {
    let world = load();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for zi in 0..world.len() {
        let w1: [f64; 5] = std::array::from_fn(|_| rng.random::<f64>());
        let w2: [f64; 5] = std::array::from_fn(|_| rng.random::<f64>());
        let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
        let mix: [f64; 5] = std::array::from_fn(|k| a * w1[k] + b * w2[k]);
        let s = |w: &[f64; 5]| world.service_score(zi, w);
        assert!(s(&w1) >= 0.0 && s(&w2) >= 0.0);
        assert!((s(&mix) - (a * s(&w1) + b * s(&w2))).abs() <= 1e-9 * s(&mix).max(1.0));

        let t1: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
        let t2: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
        let tmix: [f64; 3] = std::array::from_fn(|k| a * t1[k] + b * t2[k]);
        let t = |w: &[f64; 3]| world.transit_score(zi, w);
        assert!(t(&t1) >= 0.0 && t(&t2) >= 0.0);
        assert!((t(&tmix) - (a * t(&t1) + b * t(&t2))).abs() <= 1e-9 * t(&tmix).max(1.0));
    }
}

#[test]
fn new_site_below_the_normalizer_never_lowers_service_access() {
    let world = load();
    let kind = world.sites()[0].kind;
    let max_area = world
        .sites()
        .iter()
        .filter(|s| s.kind == kind)
        .map(|s| s.area)
        .fold(0.0, f64::max);
    let mut sites = world.sites().to_vec();
    let z = &world.zones()[17];
    sites.push(ServiceSite {
        id: 10_000,
        kind,
        location: z.centroid,
        area: max_area / 2.0,
    });
    let bigger = World::new(world.zones().to_vec(), sites, world.facilities().to_vec()).unwrap();
    assert_eq!(bigger.service_normalizers(), world.service_normalizers());
    let mut weights = [0.0; 5];
    weights[kind.index()] = 1.0;
    for zi in 0..world.len() {
        assert!(bigger.service_score(zi, &weights) > world.service_score(zi, &weights));
    }
}

#[test]
fn scenario_facilities_never_lower_transit_access() {
    let world = load();
    let city = synthcity::generate(60, 7).unwrap();
    for (name, spec) in &city.scenarios {
        let sc = spec.build(&ServiceRadii::default()).unwrap();
        let alt = apply_scenario(&world, &sc).unwrap();
        for zi in 0..world.len() {
            for k in 0..3 {
                let before = world.transit_table()[zi][k];
                let after = alt.transit_table()[zi][k];
                assert!(after >= before, "{name}: zone {zi} mode {k} {before} -> {after}");
            }
        }
        // zones a new buffer reaches gain access exactly there
        let col = sc.facilities[0].mode.access().index();
        for (zi, z) in world.zones().iter().enumerate() {
            let cov: f64 = sc
                .facilities
                .iter()
                .map(|f| buffer_coverage(f, z, f.service_radius).unwrap())
                .sum();
            let rose = alt.transit_table()[zi][col] > world.transit_table()[zi][col];
            assert_eq!(rose, cov > 0.0, "{name}: zone {}", z.id);
        }
    }
}
