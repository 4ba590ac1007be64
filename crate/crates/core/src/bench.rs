//! Timed comparison of the plain solver against dynamic screening over a
//! grid of `(C, ρ)` values.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::data::{Dataset, Rho};
use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::par;
use crate::screening::{self, ScreenConfig, ScreenTrace};
use crate::solver::{self, FrozenAssignment};

pub const DEFAULT_C_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
pub const DEFAULT_RHO_GRID: [f64; 4] = [0.0, 0.01, 0.02, 0.05];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Screened,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Screened => "screened",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dataset: String,
    pub c: f64,
    pub rho: f64,
    pub mode: Mode,
    pub repeat: usize,
    pub wall_seconds: f64,
    pub final_gap: f64,
    /// `|R ∪ S| / n` at the end of screening; 0 for baseline runs.
    pub screened_fraction: f64,
    /// `|R| / n` at the end of screening; 0 for baseline runs.
    pub zero_fraction: f64,
    pub primal: f64,
    pub w: Vec<f64>,
    pub certified: bool,
    /// Timings were taken while other cells ran concurrently.
    pub contended: bool,
    pub trace: Option<ScreenTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub c_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    pub repeats: usize,
    pub eps: f64,
    pub max_epochs: usize,
    pub screen: ScreenConfig,
    /// Run `(C, ρ)` cells concurrently.
    pub parallel: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            c_grid: DEFAULT_C_GRID.to_vec(),
            rho_grid: DEFAULT_RHO_GRID.to_vec(),
            repeats: 10,
            eps: 1e-6,
            max_epochs: Hyperparams::default().max_epochs,
            screen: ScreenConfig::default(),
            parallel: false,
        }
    }
}

impl GridConfig {
    fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.rho_grid.is_empty() {
            return Err(Error::InvalidParameter("C and rho grids must be nonempty".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidParameter("repeats must be at least 1".into()));
        }
        if let Some(r) = self.rho_grid.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::InvalidParameter(format!("rho grid value {r} must be >= 0")));
        }
        self.screen.validate()?;
        Hyperparams::new(1.0, self.eps, self.max_epochs).map(|_| ())
    }
}

/// Runs every `(C, ρ, repeat)` once without and once with screening. Records
/// come back ordered by C, then ρ, then repeat, baseline before screened.
pub fn run_grid(ds: &Dataset, dataset_id: &str, config: &GridConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let cells: Vec<(f64, f64)> = config
        .c_grid
        .iter()
        .flat_map(|&c| config.rho_grid.iter().map(move |&rho| (c, rho)))
        .collect();
    let run_cell = |(c, rho): (f64, f64)| -> Result<Vec<RunRecord>> {
        let hp = Hyperparams::new(c, config.eps, config.max_epochs)?;
        let data = ds.with_radii(&Rho::Uniform(rho))?;
        let mut out = Vec::with_capacity(2 * config.repeats);
        for repeat in 0..config.repeats {
            out.push(baseline_run(&data, &hp, dataset_id, rho, repeat)?);
            out.push(screened_run(&data, &hp, &config.screen, dataset_id, rho, repeat)?);
        }
        Ok(out)
    };
    let per_cell = if config.parallel {
        par::map_items(cells, run_cell)
    } else {
        cells.into_iter().map(run_cell).collect()
    };
    let mut records = Vec::new();
    for cell in per_cell {
        records.extend(cell?);
    }
    if config.parallel {
        for r in &mut records {
            r.contended = true;
        }
    }
    Ok(records)
}

fn baseline_run(ds: &Dataset, hp: &Hyperparams, id: &str, rho: f64, repeat: usize) -> Result<RunRecord> {
    let alpha0 = vec![0.0; ds.n()];
    let start = Instant::now();
    let report = solver::solve(ds, hp, &FrozenAssignment::none(), &alpha0)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    Ok(RunRecord {
        dataset: id.to_string(),
        c: hp.c,
        rho,
        mode: Mode::Baseline,
        repeat,
        wall_seconds,
        final_gap: report.iterate.gap,
        screened_fraction: 0.0,
        zero_fraction: 0.0,
        primal: report.iterate.primal_value,
        w: report.iterate.w,
        certified: report.converged,
        contended: false,
        trace: None,
    })
}

fn screened_run(
    ds: &Dataset,
    hp: &Hyperparams,
    screen: &ScreenConfig,
    id: &str,
    rho: f64,
    repeat: usize,
) -> Result<RunRecord> {
    let start = Instant::now();
    let outcome = screening::dynamic_screen(ds, hp, screen)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    Ok(RunRecord {
        dataset: id.to_string(),
        c: hp.c,
        rho,
        mode: Mode::Screened,
        repeat,
        wall_seconds,
        final_gap: outcome.report.iterate.gap,
        screened_fraction: outcome.partition.screened_fraction(),
        zero_fraction: outcome.partition.zero_fraction(),
        primal: outcome.report.iterate.primal_value,
        certified: outcome.report.converged,
        w: outcome.w,
        contended: false,
        trace: Some(outcome.trace),
    })
}

/// Writes `dataset,C,rho,mode,repeat,seconds,final_gap,screened_frac`.
pub fn write_records_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dataset",
        "C",
        "rho",
        "mode",
        "repeat",
        "seconds",
        "final_gap",
        "screened_frac",
    ])?;
    for r in records {
        w.write_record([
            r.dataset.clone(),
            r.c.to_string(),
            r.rho.to_string(),
            r.mode.to_string(),
            r.repeat.to_string(),
            r.wall_seconds.to_string(),
            r.final_gap.to_string(),
            r.screened_fraction.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub dataset: String,
    pub c: f64,
    pub rho: f64,
    pub repeats: usize,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub screened_mean: f64,
    pub screened_std: f64,
    /// `baseline_mean / screened_mean`.
    pub speedup: f64,
    /// Mean final `|R ∪ S| / n` over screened runs.
    pub screened_fraction: f64,
    /// Mean final `|R| / n` over screened runs.
    pub zero_fraction: f64,
    /// Runs left out of the timing statistics because they failed to certify.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub contended: bool,
    pub excluded: usize,
}

/// Sample mean and standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

type CellKey = (String, u64, u64);

pub fn summarize(records: &[RunRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::MismatchedGrid("no records".into()));
    }
    let mut order: Vec<CellKey> = Vec::new();
    let mut groups: BTreeMap<CellKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.dataset.clone(), r.c.to_bits(), r.rho.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut cells = Vec::with_capacity(order.len());
    let mut excluded_total = 0;
    for key in order {
        let runs = &groups[&key];
        let by_mode = |mode: Mode| runs.iter().filter(move |r| r.mode == mode);
        let n_base = by_mode(Mode::Baseline).count();
        let n_scr = by_mode(Mode::Screened).count();
        if n_base == 0 || n_base != n_scr {
            return Err(Error::MismatchedGrid(format!(
                "cell ({}, C={}, rho={}) has {n_base} baseline and {n_scr} screened runs",
                key.0,
                f64::from_bits(key.1),
                f64::from_bits(key.2)
            )));
        }
        let times =
            |mode: Mode| -> Vec<f64> { by_mode(mode).filter(|r| r.certified).map(|r| r.wall_seconds).collect() };
        let (baseline_mean, baseline_std) = mean_std(&times(Mode::Baseline));
        let (screened_mean, screened_std) = mean_std(&times(Mode::Screened));
        let fractions: Vec<f64> = by_mode(Mode::Screened).map(|r| r.screened_fraction).collect();
        let zero: Vec<f64> = by_mode(Mode::Screened).map(|r| r.zero_fraction).collect();
        let excluded = runs.iter().filter(|r| !r.certified).count();
        excluded_total += excluded;
        cells.push(CellSummary {
            dataset: key.0.clone(),
            c: f64::from_bits(key.1),
            rho: f64::from_bits(key.2),
            repeats: n_base,
            baseline_mean,
            baseline_std,
            screened_mean,
            screened_std,
            speedup: baseline_mean / screened_mean,
            screened_fraction: mean_std(&fractions).0,
            zero_fraction: mean_std(&zero).0,
            excluded,
        });
    }
    Ok(Summary {
        cells,
        contended: records.iter().any(|r| r.contended),
        excluded: excluded_total,
    })
}

/// Screening-rate range published for a known benchmark dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRange {
    pub dataset: &'static str,
    pub low: f64,
    pub high: f64,
}

pub const REFERENCE_RANGES: [ReferenceRange; 2] = [
    ReferenceRange {
        dataset: "breast-cancer",
        low: 0.965,
        high: 0.989,
    },
    ReferenceRange {
        dataset: "spambase",
        low: 0.893,
        high: 0.998,
    },
];

pub fn reference_range(dataset: &str) -> Option<ReferenceRange> {
    REFERENCE_RANGES.iter().copied().find(|r| r.dataset == dataset)
}

impl Summary {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "dataset",
            "C",
            "rho",
            "repeats",
            "baseline_mean_s",
            "baseline_std_s",
            "screened_mean_s",
            "screened_std_s",
            "speedup",
            "screened_frac",
            "zero_frac",
            "excluded",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.dataset.clone(),
                c.c.to_string(),
                c.rho.to_string(),
                c.repeats.to_string(),
                c.baseline_mean.to_string(),
                c.baseline_std.to_string(),
                c.screened_mean.to_string(),
                c.screened_std.to_string(),
                c.speedup.to_string(),
                c.screened_fraction.to_string(),
                c.zero_fraction.to_string(),
                c.excluded.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str(
            "| dataset | C | rho | baseline s (mean ± std) | screened s (mean ± std) | speedup | screened | zero |\n",
        );
        s.push_str("|---|---|---|---|---|---|---|---|\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.2} | {:.1}% | {:.1}% |",
                c.dataset,
                c.c,
                c.rho,
                c.baseline_mean,
                c.baseline_std,
                c.screened_mean,
                c.screened_std,
                c.speedup,
                100.0 * c.screened_fraction,
                100.0 * c.zero_fraction
            );
        }
        let datasets: Vec<&str> = {
            let mut v: Vec<&str> = self.cells.iter().map(|c| c.dataset.as_str()).collect();
            v.dedup();
            v
        };
        for name in datasets {
            if let Some(r) = reference_range(name) {
                let fr: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.dataset == name)
                    .map(|c| c.screened_fraction)
                    .collect();
                let lo = fr.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = fr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let _ = writeln!(
                    s,
                    "\n{name}: screened fraction {:.1}%–{:.1}% (reference range {:.1}%–{:.1}%)",
                    100.0 * lo,
                    100.0 * hi,
                    100.0 * r.low,
                    100.0 * r.high
                );
            }
        }
        if self.contended {
            s.push_str("\nNote: timings contended (cells ran in parallel).\n");
        }
        if self.excluded > 0 {
            let _ = writeln!(
                s,
                "\nNote: {} uncertified runs excluded from timing statistics.",
                self.excluded
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(c: f64, mode: Mode, repeat: usize, secs: f64) -> RunRecord {
        RunRecord {
            dataset: "toy".into(),
            c,
            rho: 0.0,
            mode,
            repeat,
            wall_seconds: secs,
            final_gap: 0.0,
            screened_fraction: if mode == Mode::Screened { 0.5 } else { 0.0 },
            zero_fraction: 0.0,
            primal: 1.0,
            w: vec![],
            certified: true,
            contended: false,
            trace: None,
        }
    }

    #[test]
    fn speedup_arithmetic() {
        let recs = vec![
            record(1.0, Mode::Baseline, 0, 1.0),
            record(1.0, Mode::Screened, 0, 0.5),
            record(1.0, Mode::Baseline, 1, 3.0),
            record(1.0, Mode::Screened, 1, 0.5),
        ];
        let s = summarize(&recs).unwrap();
        assert_eq!(s.cells.len(), 1);
        let cell = &s.cells[0];
        assert_eq!(cell.baseline_mean, 2.0);
        assert_eq!(cell.screened_mean, 0.5);
        assert_eq!(cell.speedup, 4.0);
        assert_eq!(cell.screened_std, 0.0);
    }

    #[test]
    fn single_repeat_has_zero_std() {
        let recs = vec![record(1.0, Mode::Baseline, 0, 1.0), record(1.0, Mode::Screened, 0, 0.5)];
        let s = summarize(&recs).unwrap();
        assert_eq!(s.cells[0].baseline_std, 0.0);
        assert_eq!(s.cells[0].screened_std, 0.0);
    }

    #[test]
    fn mismatched_cells_rejected() {
        let recs = vec![record(1.0, Mode::Baseline, 0, 1.0), record(2.0, Mode::Screened, 0, 0.5)];
        assert!(matches!(summarize(&recs), Err(Error::MismatchedGrid(_))));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn uncertified_runs_are_excluded() {
        let mut bad = record(1.0, Mode::Baseline, 1, 100.0);
        bad.certified = false;
        let recs = vec![
            record(1.0, Mode::Baseline, 0, 1.0),
            record(1.0, Mode::Screened, 0, 0.5),
            bad,
            record(1.0, Mode::Screened, 1, 0.5),
        ];
        let s = summarize(&recs).unwrap();
        assert_eq!(s.excluded, 1);
        assert_eq!(s.cells[0].baseline_mean, 1.0);
        assert!(s.to_markdown().contains("uncertified"));
    }

    #[test]
    fn contended_annotation() {
        let mut r = vec![record(1.0, Mode::Baseline, 0, 1.0), record(1.0, Mode::Screened, 0, 0.5)];
        for x in &mut r {
            x.contended = true;
        }
        assert!(summarize(&r).unwrap().to_markdown().contains("timings contended"));
    }

    #[test]
    fn records_csv_header() {
        let mut buf = Vec::new();
        write_records_csv(&[record(1.0, Mode::Baseline, 0, 1.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dataset,C,rho,mode,repeat,seconds,final_gap,screened_frac\n"));
        assert!(text.contains("toy,1,0,baseline,0,1,0,0"));
    }

    #[test]
    fn default_grids() {
        let g = GridConfig::default();
        assert_eq!(g.c_grid, vec![0.01, 0.1, 1.0, 10.0]);
        assert_eq!(g.rho_grid, vec![0.0, 0.01, 0.02, 0.05]);
    }
}
