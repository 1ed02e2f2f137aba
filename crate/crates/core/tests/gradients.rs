mod common;

use common::*;

#[test]
fn translation_pair_gradient() {
    let reports = collect_points(20, 1, transe_point);
    assert_eq!(reports.len(), 20);
    assert!(worst(&reports) <= TOLERANCE, "{reports:?}");
}

#[test]
fn answer_score_gradient() {
    let reports = collect_points(20, 2, am_score_point);
    assert_eq!(reports.len(), 20);
    assert!(worst(&reports) <= TOLERANCE, "{reports:?}");
}

#[test]
fn encoder_to_answer_gradient() {
    let fx = joint_fixture();
    let reports = collect_points(20, 3, |r| joint_point(&fx, r));
    assert_eq!(reports.len(), 20);
    assert!(worst(&reports) <= TOLERANCE, "{reports:?}");
}
