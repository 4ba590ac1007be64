use rsvm_core::bench::{run_grid, summarize, write_records_csv, GridConfig, Mode, RunRecord};
use rsvm_core::data::gen_gaussian;

fn record(mode: Mode, repeat: usize, seconds: f64) -> RunRecord {
    RunRecord {
        dataset: "toy".into(),
        c: 1.0,
        rho: 0.01,
        mode,
        repeat,
        wall_seconds: seconds,
        final_gap: 1e-7,
        screened_fraction: if mode == Mode::Screened { 0.9 } else { 0.0 },
        zero_fraction: if mode == Mode::Screened { 0.7 } else { 0.0 },
        primal: 1.0,
        w: vec![1.0],
        certified: true,
        contended: false,
        trace: None,
    }
}

#[test]
fn full_grids_with_three_repeats_give_96_ordered_records() {
    // The record count does not depend on n; a small instance keeps this fast.
    let ds = gen_gaussian(200, 5, 3.0, 1.0, 7).unwrap();
    let config = GridConfig {
        repeats: 3,
        ..GridConfig::default()
    };
    let records = run_grid(&ds, "gaussian", &config).unwrap();
    assert_eq!(records.len(), 96);
    assert!(records.iter().all(|r| r.certified && r.final_gap <= 1e-6));
    let mut expected = Vec::new();
    for &c in &config.c_grid {
        for &rho in &config.rho_grid {
            for repeat in 0..3 {
                expected.push((c, rho, repeat, Mode::Baseline));
                expected.push((c, rho, repeat, Mode::Screened));
            }
        }
    }
    let actual: Vec<_> = records.iter().map(|r| (r.c, r.rho, r.repeat, r.mode)).collect();
    assert_eq!(actual, expected);

    let summary = summarize(&records).unwrap();
    assert_eq!(summary.cells.len(), 16);
    assert_eq!(summary.excluded, 0);
    for pair in records.chunks(2) {
        assert!(
            (pair[0].primal - pair[1].primal).abs() <= 1e-6,
            "{} vs {}",
            pair[0].primal,
            pair[1].primal
        );
    }
}

#[test]
fn single_point_grids_give_two_records() {
    let ds = gen_gaussian(50, 2, 3.0, 1.0, 1).unwrap();
    let config = GridConfig {
        c_grid: vec![1.0],
        rho_grid: vec![0.02],
        repeats: 1,
        ..GridConfig::default()
    };
    let records = run_grid(&ds, "tiny", &config).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].mode, Mode::Baseline);
    assert_eq!(records[1].mode, Mode::Screened);
    assert!(records[1].trace.is_some());

    let mut csv = Vec::new();
    write_records_csv(&records, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("dataset,C,rho,mode,repeat,seconds,final_gap,screened_frac\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn parallel_grid_is_flagged_contended() {
    let ds = gen_gaussian(50, 2, 3.0, 1.0, 1).unwrap();
    let config = GridConfig {
        c_grid: vec![0.1, 1.0],
        rho_grid: vec![0.0, 0.02],
        repeats: 1,
        parallel: true,
        ..GridConfig::default()
    };
    let records = run_grid(&ds, "tiny", &config).unwrap();
    assert_eq!(records.len(), 8);
    assert!(records.iter().all(|r| r.contended));
    let summary = summarize(&records).unwrap();
    assert!(summary.contended);
    assert!(summary.to_markdown().contains("timings contended"));
}

#[test]
fn speedup_is_the_ratio_of_means() {
    let records = vec![
        record(Mode::Baseline, 0, 1.5),
        record(Mode::Screened, 0, 0.25),
        record(Mode::Baseline, 1, 2.5),
        record(Mode::Screened, 1, 0.75),
    ];
    let summary = summarize(&records).unwrap();
    let cell = &summary.cells[0];
    assert_eq!(cell.baseline_mean, 2.0);
    assert_eq!(cell.screened_mean, 0.5);
    assert_eq!(cell.speedup, 4.0);
}

#[test]
fn one_repeat_has_zero_spread() {
    let records = vec![record(Mode::Baseline, 0, 2.0), record(Mode::Screened, 0, 1.0)];
    let cell = &summarize(&records).unwrap().cells[0];
    assert_eq!(cell.baseline_std, 0.0);
    assert_eq!(cell.screened_std, 0.0);
}

#[test]
fn missing_mode_is_a_grid_mismatch() {
    let records = vec![record(Mode::Baseline, 0, 2.0)];
    assert!(summarize(&records).is_err());
}
