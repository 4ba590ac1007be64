use rsvm_core::data::{gen_gaussian, Sample};
use rsvm_core::model;
use rsvm_core::screening::{
    audit_partition, certified_optimum, dynamic_screen, ideal_screen, verify_no_false_screening, Partition,
    SampleStatus, ScreenConfig, IDEAL_TOL,
};
use rsvm_core::{solve, Dataset, FrozenAssignment, Hyperparams, Rho};

fn three_samples() -> Dataset {
    Dataset::from_samples(&[
        Sample::new(vec![1.0], 1, 0.0),
        Sample::new(vec![-1.0], -1, 0.0),
        Sample::new(vec![3.0], 1, 0.0),
    ])
    .unwrap()
}

#[test]
fn three_sample_set_screens_only_the_far_sample() {
    let ds = three_samples();
    let hp = Hyperparams::new(1.0, 1e-8, 100_000).unwrap();
    let optimum = certified_optimum(&ds, &hp).unwrap();
    let ideal = ideal_screen(&optimum, &ds, IDEAL_TOL).unwrap();
    assert_eq!(ideal.screened_zero(), vec![2]);
    assert_eq!(ideal.free(), vec![0, 1]);

    let outcome = dynamic_screen(&ds, &hp, &ScreenConfig::default()).unwrap();
    assert!(outcome.converged());
    assert!(outcome.partition.screened_zero().iter().all(|&i| i == 2));
    assert!(outcome.partition.screened_c().is_empty());
    assert!((outcome.w[0] - 1.0).abs() <= 1e-4);
}

#[test]
fn f_min_of_n_matches_the_plain_solve() {
    let ds = gen_gaussian(60, 3, 2.0, 1.0, 11)
        .unwrap()
        .with_radii(&Rho::Uniform(0.02))
        .unwrap();
    let hp = Hyperparams::new(1.0, 1e-6, 100_000).unwrap();
    let config = ScreenConfig {
        f_min: ds.n(),
        ..ScreenConfig::default()
    };
    let outcome = dynamic_screen(&ds, &hp, &config).unwrap();
    let plain = solve(&ds, &hp, &FrozenAssignment::none(), &vec![0.0; ds.n()]).unwrap();
    assert_eq!(outcome.trace.len(), 1);
    assert_eq!(outcome.partition.n_free(), ds.n());
    assert_eq!(outcome.w, plain.iterate.w);
    assert_eq!(outcome.report.iterate.alpha, plain.iterate.alpha);
}

#[test]
fn infinite_tolerance_stops_after_the_first_evaluation() {
    let ds = three_samples();
    let hp = Hyperparams::new(1.0, f64::INFINITY, 100).unwrap();
    let outcome = dynamic_screen(&ds, &hp, &ScreenConfig::default()).unwrap();
    assert_eq!(outcome.trace.len(), 1);
    let row = &outcome.trace.rows[0];
    assert_eq!(row.iter, 0);
    assert_eq!(row.gap, 3.0);
    assert_eq!(row.radius, 6.0f64.sqrt());
    assert_eq!(row.n_free, 3);
}

#[test]
fn empty_partition_passes_the_audit() {
    let ds = three_samples();
    let hp = Hyperparams::with_c(1.0).unwrap();
    let report = verify_no_false_screening(&Partition::all_free(3), &ds, &hp).unwrap();
    assert!(report.passed());
    assert!(report.margin_violations.is_empty());
    assert!(report.reference_gap <= 1e-10);
}

#[test]
fn screening_the_worst_violator_fails_the_audit() {
    let ds = gen_gaussian(40, 2, 0.5, 1.0, 5).unwrap();
    let hp = Hyperparams::with_c(1.0).unwrap();
    let optimum = certified_optimum(&ds, &hp).unwrap();
    let losses: Vec<f64> = ds
        .samples()
        .map(|s| model::robust_loss(&optimum.w, s).unwrap())
        .collect();
    let worst = (0..ds.n()).max_by(|&a, &b| losses[a].total_cmp(&losses[b])).unwrap();
    assert!(losses[worst] > 1.0, "instance should contain a misclassified sample");

    let mut partition = Partition::all_free(ds.n());
    partition.screen(worst, SampleStatus::Zero, 1).unwrap();
    let report = audit_partition(&partition, &optimum, &ds, &hp).unwrap();
    assert!(!report.passed());
    assert_eq!(report.violations, vec![worst]);
    assert_eq!(report.margin_violations, vec![worst]);
}

#[test]
fn dynamic_screen_never_screens_falsely_on_random_seeds() {
    for seed in 0..20u64 {
        let c = [0.1, 1.0, 10.0][seed as usize % 3];
        let rho = [0.0, 0.01, 0.05][(seed as usize / 3) % 3];
        let ds = gen_gaussian(80, 4, 2.0, 1.0, seed)
            .unwrap()
            .with_radii(&Rho::Uniform(rho))
            .unwrap();
        let hp = Hyperparams::new(c, 1e-6, 1_000_000).unwrap();
        let outcome = dynamic_screen(&ds, &hp, &ScreenConfig::default()).unwrap();
        assert!(outcome.converged(), "seed {seed}");
        let report = verify_no_false_screening(&outcome.partition, &ds, &hp).unwrap();
        assert!(report.margin_violations.is_empty(), "seed {seed}: {report:?}");
        let primal_gap =
            (outcome.report.iterate.primal_value - certified_optimum(&ds, &hp).unwrap().primal_value).abs();
        assert!(primal_gap <= 1e-6, "seed {seed}: |ΔP| = {primal_gap}");
    }
}

#[test]
fn trace_csv_has_the_documented_columns() {
    let ds = gen_gaussian(100, 3, 3.0, 1.0, 1).unwrap();
    let outcome = dynamic_screen(&ds, &Hyperparams::with_c(1.0).unwrap(), &ScreenConfig::default()).unwrap();
    let csv = outcome.trace.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,gap,radius,n_zero,n_C,n_free,seconds"));
    assert_eq!(lines.count(), outcome.trace.len());
    let last = outcome.trace.rows.last().unwrap();
    assert_eq!(last.n_zero, outcome.partition.n_zero());
    assert_eq!(last.n_c, outcome.partition.n_c());
    assert_eq!(last.n_zero + last.n_c + last.n_free, ds.n());
}

#[test]
fn partition_sets_round_trip_through_json() {
    let ds = gen_gaussian(100, 3, 3.0, 1.0, 2).unwrap();
    let outcome = dynamic_screen(&ds, &Hyperparams::with_c(1.0).unwrap(), &ScreenConfig::default()).unwrap();
    let json = serde_json::to_string(&outcome.partition.to_sets()).unwrap();
    let sets = serde_json::from_str(&json).unwrap();
    let back = Partition::from_sets(&sets).unwrap();
    assert_eq!(back.screened_zero(), outcome.partition.screened_zero());
    assert_eq!(back.screened_c(), outcome.partition.screened_c());
}
