use poba::evalkit::{
    cost_threshold, default_alpha_grid, memory_account, performance_profile, run_benchmark, solved_percentages,
    solved_table, time_to_threshold, write_profile_csv, write_solved_csv, BenchMode, EvalError, RunRecord, SolverId,
};
use poba::synthetic::{random_small_problem, ring_scene};
use poba::{DampingMode, LandmarkBlock, Linearization};
use proptest::prelude::*;

fn record(problem: &str, solver: &str, trace: &[(f64, f64)]) -> RunRecord {
    RunRecord { problem: problem.into(), solver: solver.into(), f0: trace[0].1, trace: trace.to_vec(), peak_bytes: 0 }
}

fn three_solver_fixture() -> Vec<RunRecord> {
    vec![
        record("p", "a", &[(0.0, 100.0), (1.0, 50.0), (2.0, 10.0), (4.0, 2.0)]),
        record("p", "b", &[(0.0, 100.0), (0.5, 60.0), (3.0, 1.0)]),
        record("p", "c", &[(0.0, 100.0), (5.0, 90.0)]),
    ]
}

#[test]
fn three_solver_thresholds_and_times_match_hand_computation() {
    let recs = three_solver_fixture();
    let refs: Vec<&RunRecord> = recs.iter().collect();
    // f* = 1, so f_0.1 = 1 + 0.1 * 99 and f_0.01 = 1 + 0.01 * 99
    let t1 = cost_threshold(&refs, 0.1).unwrap();
    assert!((t1 - 10.9).abs() < 1e-12);
    assert_eq!([time_to_threshold(&recs[0], t1), time_to_threshold(&recs[1], t1)], [2.0, 3.0]);
    assert_eq!(time_to_threshold(&recs[2], t1), f64::INFINITY);
    let t2 = cost_threshold(&refs, 0.01).unwrap();
    assert!((t2 - 1.99).abs() < 1e-12);
    assert_eq!(time_to_threshold(&recs[0], t2), f64::INFINITY);
    assert_eq!(time_to_threshold(&recs[1], t2), 3.0);

    let curves = performance_profile(&recs, 0.1, &[1.0, 1.4, 1.5, 32.0]).unwrap();
    let rho: Vec<Vec<f64>> = curves.iter().map(|c| c.points.iter().map(|p| p.1).collect()).collect();
    assert_eq!(rho, vec![vec![100.0; 4], vec![0.0, 0.0, 100.0, 100.0], vec![0.0; 4]]);
    assert_eq!(curves.iter().map(|c| c.solver.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
}

#[test]
fn each_solver_fastest_on_one_problem_gives_fifty_percent() {
    let recs = vec![
        record("p1", "s1", &[(0.0, 10.0), (1.0, 0.0)]),
        record("p1", "s2", &[(0.0, 10.0), (2.0, 0.0)]),
        record("p2", "s1", &[(0.0, 8.0), (3.0, 1.0)]),
        record("p2", "s2", &[(0.0, 8.0), (1.5, 1.0)]),
    ];
    let curves = performance_profile(&recs, 0.01, &[1.0, 1.9, 2.0, 4.0]).unwrap();
    for curve in &curves {
        let rho: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
        assert_eq!(rho, vec![50.0, 50.0, 100.0, 100.0], "{}", curve.solver);
    }
    let solved = solved_percentages(&recs, 0.01).unwrap();
    assert_eq!(solved, vec![("s1".to_owned(), 100.0), ("s2".to_owned(), 100.0)]);
    let table = solved_table(&recs, 0.01).unwrap();
    assert_eq!((table[0].at_1, table[0].at_3, table[0].at_inf), (50.0, 100.0, 100.0));
}

#[test]
fn flat_problem_threshold_is_initial_cost() {
    let recs = [record("p", "a", &[(0.0, 7.0), (1.0, 7.0)]), record("p", "b", &[(0.0, 7.0)])];
    let refs: Vec<&RunRecord> = recs.iter().collect();
    for tau in [0.5, 0.01] {
        assert_eq!(cost_threshold(&refs, tau).unwrap(), 7.0);
    }
}

#[test]
fn csv_outputs_have_expected_headers() {
    let recs = three_solver_fixture();
    let mut buf = Vec::new();
    write_profile_csv(&performance_profile(&recs, 0.1, &default_alpha_grid(3)).unwrap(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha,solver,rho_percent"));
    assert_eq!(lines.next(), Some("1,a,100"));
    assert_eq!(text.lines().count(), 1 + 3 * 3);

    let mut buf = Vec::new();
    write_solved_csv(&solved_table(&recs, 0.1).unwrap(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("tau,solver,alpha_1,alpha_3,alpha_inf"));
    assert_eq!(text.lines().nth(3), Some("0.1,c,0,0,0"));
}

/// Random problems whose costs and tolerances are dyadic, so that affine
/// maps with power-of-two scale and integer shift are exact.
fn arb_records() -> impl Strategy<Value = Vec<RunRecord>> {
    (1usize..5, 1usize..4).prop_flat_map(|(n_problems, n_solvers)| {
        let traces = prop::collection::vec(prop::collection::vec((1u32..50, 0u32..64), 1..6), n_problems * n_solvers);
        (prop::collection::vec(64u32..256, n_problems), traces).prop_map(move |(f0s, traces)| {
            let mut out = Vec::new();
            for p in 0..n_problems {
                for s in 0..n_solvers {
                    let f0 = f0s[p] as f64;
                    let mut t = 0.0;
                    let mut c = f0;
                    let mut trace = vec![(0.0, f0)];
                    for &(dt, drop) in &traces[p * n_solvers + s] {
                        t += dt as f64 / 8.0;
                        c = (c - drop as f64).max(0.0);
                        trace.push((t, c));
                    }
                    out.push(RunRecord { problem: format!("p{p}"), solver: format!("s{s}"), f0, trace, peak_bytes: 0 });
                }
            }
            out
        })
    })
}

fn rho_table(records: &[RunRecord], tau: f64) -> Vec<Vec<f64>> {
    performance_profile(records, tau, &default_alpha_grid(40))
        .unwrap()
        .iter()
        .map(|c| c.points.iter().map(|p| p.1).collect())
        .collect()
}

proptest! {
    #[test]
    fn rho_is_monotone_and_bounded(records in arb_records(), tau in prop::sample::select(vec![0.5, 0.25, 0.125, 0.0625])) {
        for curve in rho_table(&records, tau) {
            prop_assert!(curve.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(curve.iter().all(|&r| (0.0..=100.0).contains(&r)));
        }
    }

    #[test]
    fn rho_is_invariant_under_problem_relabeling(records in arb_records(), shift in 0usize..7) {
        let n = records.iter().map(|r| r.problem.clone()).collect::<std::collections::BTreeSet<_>>().len();
        let relabeled: Vec<RunRecord> = records
            .iter()
            .rev()
            .map(|r| {
                let p: usize = r.problem[1..].parse().unwrap();
                RunRecord { problem: format!("q{}", (p + shift) % n), ..r.clone() }
            })
            .collect();
        // reversing also reverses solver order of first appearance
        let mut a = rho_table(&records, 0.125);
        let mut b = rho_table(&relabeled, 0.125);
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn profiles_are_invariant_under_affine_cost_maps(
        records in arb_records(),
        scale in prop::sample::select(vec![0.5, 1.0, 2.0, 8.0]),
        offset in -64i32..64,
    ) {
        let mapped: Vec<RunRecord> = records
            .iter()
            .map(|r| {
                let f = |c: f64| scale * c + offset as f64;
                RunRecord { f0: f(r.f0), trace: r.trace.iter().map(|&(t, c)| (t, f(c))).collect(), ..r.clone() }
            })
            .collect();
        for tau in [0.5, 0.25, 0.125] {
            prop_assert_eq!(rho_table(&records, tau), rho_table(&mapped, tau));
        }
    }
}

#[test]
fn harness_misuse_is_reported() {
    let recs = vec![record("p", "a", &[(0.0, 10.0), (1.0, 1.0)]), record("p", "b", &[(0.0, 12.0), (1.0, 1.0)])];
    assert!(matches!(performance_profile(&recs, 0.1, &[1.0]), Err(EvalError::InconsistentInitialCost { .. })));
    assert!(matches!(performance_profile(&recs[..1], 0.0, &[1.0]), Err(EvalError::InvalidTau(_))));
    assert!(matches!(performance_profile(&recs[..1], 0.1, &[2.0, 1.0]), Err(EvalError::InvalidAlphaGrid)));
}

#[test]
fn one_landmark_seen_three_times_uses_624_block_bytes() {
    let block = LandmarkBlock::<f64>::from_rows(0, vec![0, 1, 2], vec![0.5; 6 * 13]).unwrap();
    let lin = Linearization::from_blocks(3, vec![block]).unwrap();
    let sys = lin.damped(1e-2, DampingMode::Jacobi).unwrap();
    let account = memory_account(&sys);
    assert_eq!(account.block_bytes, 624);
    assert!(account.total() > 624);

    let block32 = LandmarkBlock::<f32>::from_rows(0, vec![0, 1, 2], vec![0.5; 6 * 13]).unwrap();
    let lin32 = Linearization::from_blocks(3, vec![block32]).unwrap();
    assert_eq!(memory_account(&lin32.damped(1e-2, DampingMode::Jacobi).unwrap()).block_bytes, 312);
}

#[test]
fn single_precision_halves_block_storage_on_a_problem() {
    let problem = ring_scene(7, 90, 0.5, 3);
    let state = problem.initial_state();
    let a = Linearization::<f64>::assemble(&problem, &state).unwrap();
    let b = Linearization::<f32>::assemble(&problem, &state).unwrap();
    let expected: usize = problem.num_observations() * 2 * 13 * 8;
    assert_eq!(a.block_bytes(), expected);
    assert_eq!(2 * b.block_bytes(), a.block_bytes());
    let (sa, sb) = (a.damped(1e-4, DampingMode::Jacobi).unwrap(), b.damped(1e-4, DampingMode::Jacobi).unwrap());
    assert!(memory_account(&sb).total() < memory_account(&sa).total());
}

#[test]
fn small_benchmark_runs_in_both_modes() {
    let problems: Vec<(String, poba::BalProblem)> =
        vec![("ring".into(), ring_scene(5, 40, 0.5, 1)), ("random".into(), random_small_problem(3))];
    let solvers = [SolverId::Poba64, SolverId::Pcg64, SolverId::Direct];
    let seq = run_benchmark(&problems, &solvers, 0.01, 7, BenchMode::Sequential).unwrap();
    let par = run_benchmark(&problems, &solvers, 0.01, 7, BenchMode::Parallel).unwrap();
    assert_eq!(seq.records.len(), 6);
    assert_eq!(seq.summaries.len(), 6);
    for (a, b) in seq.records.iter().zip(&par.records) {
        assert_eq!((&a.problem, &a.solver), (&b.problem, &b.solver));
        assert_eq!(a.final_cost(), b.final_cost());
        assert_eq!(a.f0, a.trace[0].1);
        assert!(a.peak_bytes > 0);
    }
    for tau in [0.1, 0.01, 0.003, 0.001] {
        for curve in performance_profile(&seq.records, tau, &default_alpha_grid(20)).unwrap() {
            assert!(curve.points.windows(2).all(|w| w[1].1 >= w[0].1));
        }
    }
    assert!(run_benchmark(&problems, &solvers, -1.0, 7, BenchMode::Sequential).is_err());
}
