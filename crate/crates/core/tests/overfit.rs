mod common;

use common::probes::{discovery_probe, typeid_probe, valueex_probe};

#[test]
fn discovery_overfits_separable_corpus() {
    let p = discovery_probe();
    assert_eq!(p.f1, 1.0, "{p:?}");
    assert!(p.loss_fell);
    assert!(p.elapsed.as_secs() < 120, "{p:?}");
}

#[test]
fn typeid_overfits_separable_clusters() {
    let p = typeid_probe();
    assert_eq!(p.correct, p.total, "{p:?}");
}

/// The boundary loss is minimised by any radius between the two middle
/// member distances, so fitted radii settle with about half of each class
/// inside.
#[test]
fn fitted_radii_settle_at_the_median_distance() {
    let p = typeid_probe();
    for (inside, members) in p.per_class {
        assert!(inside.abs_diff(members / 2) <= 1, "{p:?}");
    }
}

#[test]
fn valueex_overfits_copy_task() {
    assert_eq!(valueex_probe(), (10, 10));
}
