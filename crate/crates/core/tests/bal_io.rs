use nalgebra::{Vector2, Vector3};
use poba::synthetic::{ladybug_like, ring_scene, LADYBUG_CAMERAS};
use poba::trace::{read_trace, write_summary, write_trace, IterationRecord, SolverTrace};
use poba::{parse_bal, perturb, write_bal, BalError, BalProblem, CameraParams, Observation};
use proptest::prelude::*;

fn round_trip(problem: &BalProblem) -> BalProblem {
    let mut text = Vec::new();
    write_bal(problem, &mut text).unwrap();
    parse_bal(text.as_slice()).unwrap().problem
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6, -1.0..1.0, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX)]
}

prop_compose! {
    fn arb_camera()(
        axis in prop::array::uniform3(-1.0..1.0f64),
        angle in 0.0..6.0f64,
        t in prop::array::uniform3(finite()),
        focal in 1e-3..1e4f64,
        k in prop::array::uniform2(finite()),
    ) -> CameraParams {
        let axis = Vector3::from(axis);
        let rotation = if axis.norm() > 1e-3 { axis.normalize() * angle } else { Vector3::zeros() };
        CameraParams { rotation, translation: Vector3::from(t), focal, k1: k[0], k2: k[1] }
    }
}

prop_compose! {
    fn arb_problem()(n_cameras in 1usize..5, n_points in 1usize..8)(
        cameras in prop::collection::vec(arb_camera(), n_cameras),
        points in prop::collection::vec(prop::array::uniform3(finite()), n_points),
        pairs in prop::collection::btree_set((0..n_cameras, 0..n_points), 1..=n_cameras * n_points),
        pixels in prop::collection::vec(prop::array::uniform2(finite()), n_cameras * n_points),
    ) -> BalProblem {
        let observations = pairs
            .iter()
            .zip(&pixels)
            .map(|(&(camera, point), px)| Observation { camera, point, pixel: Vector2::from(*px) })
            .collect();
        BalProblem::new(cameras, points.into_iter().map(Vector3::from).collect(), observations).unwrap().problem
    }
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(problem in arb_problem()) {
        let once = round_trip(&problem);
        prop_assert_eq!(&once, &problem);
        prop_assert_eq!(round_trip(&once), once);
    }
}

#[test]
fn out_of_range_point_index_reports_its_line() {
    match parse_bal("1 1 1\n0 5 0.0 0.0\n".as_bytes()) {
        Err(BalError::IndexOutOfRange { line, what, index, count }) => {
            assert_eq!((line, what, index, count), (2, "point", 5, 1));
        }
        other => panic!("expected an index error, got {other:?}"),
    }
}

#[test]
fn scientific_notation_and_free_line_breaks_are_accepted() {
    let text = "1 1 1 0 0 1.5E+01 -2e-3\n0 0 0 1 2 3 5e2 0 0\n4 5\n6\n";
    let problem = parse_bal(text.as_bytes()).unwrap().problem;
    assert_eq!(problem.observations()[0].pixel, Vector2::new(15.0, -0.002));
    assert_eq!(problem.cameras()[0].focal, 500.0);
    assert_eq!(problem.points()[0], Vector3::new(4.0, 5.0, 6.0));
}

#[test]
fn ladybug_stand_in_has_forty_nine_poses_after_round_trip() {
    let problem = ladybug_like(0);
    let parsed = round_trip(&problem);
    assert_eq!(parsed.num_cameras(), LADYBUG_CAMERAS);
    assert_eq!(parsed, problem);
}

#[test]
fn perturbation_noise_has_the_requested_deviation() {
    let problem = ladybug_like(1);
    let sigma = 0.05;
    let noisy = perturb(&problem, sigma, 11).unwrap();
    let mut samples = Vec::new();
    for (a, b) in noisy.points().iter().zip(problem.points()) {
        samples.extend((a - b).iter().copied());
    }
    for (a, b) in noisy.cameras().iter().zip(problem.cameras()) {
        samples.extend((a.translation - b.translation).iter().copied());
    }
    assert!(samples.len() >= 10_000);
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let std = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((std - sigma).abs() <= 0.05 * sigma, "sample std {std}");
    // standard error of the mean is sigma / sqrt(n); allow five of them
    assert!(mean.abs() < 5.0 * sigma / n.sqrt(), "mean {mean}");
}

#[test]
fn perturbation_touches_only_landmarks_and_translations() {
    let problem = ring_scene(6, 40, 0.5, 2);
    let noisy = perturb(&problem, 0.1, 3).unwrap();
    assert_eq!(noisy.observations(), problem.observations());
    for (a, b) in noisy.cameras().iter().zip(problem.cameras()) {
        assert_eq!((a.rotation, a.focal, a.k1, a.k2), (b.rotation, b.focal, b.k1, b.k2));
        assert!((0..3).all(|i| a.translation[i] != b.translation[i]));
    }
    assert!(noisy.points().iter().zip(problem.points()).all(|(a, b)| (0..3).all(|i| a[i] != b[i])));
}

#[test]
fn perturbation_is_deterministic_and_zero_noise_is_exact() {
    let problem = ring_scene(4, 20, 0.5, 5);
    assert_eq!(perturb(&problem, 0.0, 7).unwrap(), problem);
    assert_eq!(perturb(&problem, 0.01, 1).unwrap(), perturb(&problem, 0.01, 1).unwrap());
    assert_ne!(perturb(&problem, 0.01, 1).unwrap(), perturb(&problem, 0.01, 2).unwrap());
    assert!(matches!(perturb(&problem, -0.1, 1), Err(BalError::NegativeSigma(_))));
    assert!(perturb(&problem, f64::NAN, 1).is_err());
}

fn one_record_trace() -> SolverTrace {
    SolverTrace {
        records: vec![IterationRecord {
            iter: 0,
            cumulative_time_s: 0.0,
            cost: 12.5,
            lambda: 1e-4,
            accepted: true,
            inner_iterations: 0,
            order_m: 0,
            series_capped: false,
            invalid_observations: 0,
            peak_bytes: 1024,
        }],
    }
}

#[test]
fn single_record_trace_is_two_lines_and_round_trips() {
    let trace = one_record_trace();
    let mut buf = Vec::new();
    write_trace(&trace, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(read_trace(buf.as_slice()).unwrap(), trace.rows());
    assert!(write_trace(&SolverTrace::default(), Vec::new()).is_err());
}

#[test]
fn summary_json_has_the_documented_fields() {
    let mut buf = Vec::new();
    write_summary(&one_record_trace().summary("p", "poba64"), &mut buf).unwrap();
    let value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    let mut keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["final_cost", "peak_bytes", "problem", "solver", "total_time_s"]);
    assert_eq!(value["final_cost"], 12.5);
}
