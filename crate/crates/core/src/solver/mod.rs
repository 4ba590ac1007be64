//! Box-constrained maximization of the robust SVM dual.
//!
//! The solver is projected gradient ascent with Armijo backtracking. The
//! first trial step is `1/L` with `L = Σᵢ(‖x̃ᵢ‖ + ρᵢ)²`; later trial steps use
//! the Barzilai-Borwein length of the previous move. Every epoch evaluates
//! the full duality gap, and the run stops at the first iterate whose gap is
//! within tolerance.

pub(crate) mod ascent;
pub mod oracle;

use std::collections::BTreeSet;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, DualIterate, Hyperparams};
use crate::numeric;

pub use oracle::brute_force_dual;

use ascent::{Ascent, StepOutcome};

/// Epochs between full rebuilds of the dual aggregates.
const RESYNC_EVERY: usize = 64;

/// Dual coordinates pinned to a bound for the whole solve.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrozenAssignment {
    fixed_zero: BTreeSet<usize>,
    fixed_c: BTreeSet<usize>,
}

impl FrozenAssignment {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(fixed_zero: impl IntoIterator<Item = usize>, fixed_c: impl IntoIterator<Item = usize>) -> Result<Self> {
        let fixed_zero: BTreeSet<usize> = fixed_zero.into_iter().collect();
        let fixed_c: BTreeSet<usize> = fixed_c.into_iter().collect();
        if let Some(i) = fixed_zero.intersection(&fixed_c).next() {
            return Err(Error::InvalidParameter(format!("sample {i} is pinned to both 0 and C")));
        }
        Ok(FrozenAssignment { fixed_zero, fixed_c })
    }

    pub fn fixed_zero(&self) -> &BTreeSet<usize> {
        &self.fixed_zero
    }

    pub fn fixed_c(&self) -> &BTreeSet<usize> {
        &self.fixed_c
    }

    /// Pinned value of coordinate `i`, if any.
    pub fn pinned(&self, i: usize, c: f64) -> Option<f64> {
        if self.fixed_zero.contains(&i) {
            Some(0.0)
        } else if self.fixed_c.contains(&i) {
            Some(c)
        } else {
            None
        }
    }

    fn check_range(&self, n: usize) -> Result<()> {
        match self.fixed_zero.iter().chain(&self.fixed_c).find(|&&i| i >= n) {
            Some(i) => Err(Error::InvalidParameter(format!(
                "pinned index {i} out of range for {n} samples"
            ))),
            None => Ok(()),
        }
    }

    fn free_indices(&self, n: usize) -> Vec<usize> {
        (0..n)
            .filter(|i| !self.fixed_zero.contains(i) && !self.fixed_c.contains(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterate: DualIterate,
    /// Accepted gradient steps.
    pub epochs: usize,
    pub converged: bool,
    /// Full-problem gap at every evaluated iterate, starting with `alpha0`.
    pub gap_history: Vec<f64>,
    /// Dual value at every evaluated iterate.
    pub dual_history: Vec<f64>,
}

/// What an observer sees after each gap evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EpochView<'a> {
    pub epoch: usize,
    pub alpha: &'a [f64],
    pub w: &'a [f64],
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// Gradient of the dual, `gᵢ = 1 − m·(yᵢ⟨x̃ᵢ, d⟩/‖d‖ − ρᵢ)` with
/// `m = [‖d‖ − s]₊`; all ones when `m = 0`.
pub fn dual_gradient(alpha: &[f64], ds: &Dataset) -> Result<Vec<f64>> {
    let (d, s) = model::dual_aggregates(alpha, ds)?;
    let d_norm = numeric::norm2(&d);
    let m = numeric::positive_part(d_norm - s);
    if m == 0.0 {
        return Ok(vec![1.0; ds.n()]);
    }
    let mut g = vec![0.0; ds.n()];
    crate::par::fill(&mut g, |i| {
        1.0 - m * (ds.y(i) * numeric::dot(ds.row(i), &d) / d_norm - ds.radius(i))
    });
    Ok(g)
}

/// Clamps `v` into `[0, C]ⁿ` and overwrites pinned coordinates.
pub fn project_box(v: &[f64], hp: &Hyperparams, frozen: &FrozenAssignment) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(i, &x)| frozen.pinned(i, hp.c).unwrap_or_else(|| x.clamp(0.0, hp.c)))
        .collect()
}

/// Maximizes the dual from `alpha0` until the gap drops to `hp.gap_tol` or
/// `hp.max_epochs` steps have been taken.
pub fn solve(ds: &Dataset, hp: &Hyperparams, frozen: &FrozenAssignment, alpha0: &[f64]) -> Result<SolveReport> {
    solve_observed(ds, hp, frozen, alpha0, |_| {})
}

/// [`solve`], calling `observer` after every gap evaluation.
pub fn solve_observed<F>(
    ds: &Dataset,
    hp: &Hyperparams,
    frozen: &FrozenAssignment,
    alpha0: &[f64],
    mut observer: F,
) -> Result<SolveReport>
where
    F: FnMut(&EpochView<'_>),
{
    model::check_box(alpha0, ds, hp)?;
    frozen.check_range(ds.n())?;
    if let Some(i) = (0..ds.n()).find(|&i| frozen.pinned(i, hp.c).is_some_and(|p| p != alpha0[i])) {
        return Err(Error::InvalidParameter(format!(
            "alpha0[{i}] = {} disagrees with its pinned value",
            alpha0[i]
        )));
    }

    let mut state = Ascent::new(ds, hp.c, alpha0.to_vec(), frozen.free_indices(ds.n()));
    let mut gap_history = Vec::new();
    let mut dual_history = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut epochs = 0;
    let mut since_resync = 0;

    loop {
        if since_resync >= RESYNC_EVERY {
            state.resync();
            since_resync = 0;
        }
        let report = state.evaluate()?;
        gap_history.push(report.gap);
        dual_history.push(report.dual);
        observer(&EpochView {
            epoch: epochs,
            alpha: &state.alpha,
            w: &state.w,
            primal: report.primal,
            dual: report.dual,
            gap: report.gap,
        });

        if report.gap <= hp.gap_tol {
            // Certify through the reference formulas, not the incremental state.
            let iterate = DualIterate::from_alpha(state.alpha.clone(), ds, hp)?;
            if iterate.gap <= hp.gap_tol {
                return Ok(SolveReport {
                    iterate,
                    epochs,
                    converged: true,
                    gap_history,
                    dual_history,
                });
            }
            state.resync();
            since_resync = 0;
        }
        if best.as_ref().is_none_or(|(g, _)| report.gap < *g) {
            best = Some((report.gap, state.alpha.clone()));
        }
        if epochs >= hp.max_epochs || state.free().is_empty() {
            break;
        }
        state.gradient_from_evaluation();
        match state.step()? {
            StepOutcome::Accepted => {
                epochs += 1;
                since_resync += 1;
            }
            StepOutcome::Stationary | StepOutcome::Stalled => break,
        }
    }

    let alpha = best.map_or(state.alpha, |(_, a)| a);
    let iterate = DualIterate::from_alpha(alpha, ds, hp)?;
    let converged = iterate.gap <= hp.gap_tol;
    Ok(SolveReport {
        iterate,
        epochs,
        converged,
        gap_history,
        dual_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;

    fn pair(rho: f64) -> Dataset {
        Dataset::from_samples(&[Sample::new(vec![1.0], 1, rho), Sample::new(vec![-1.0], -1, rho)]).unwrap()
    }

    fn hp(c: f64, tol: f64) -> Hyperparams {
        Hyperparams::new(c, tol, 100_000).unwrap()
    }

    #[test]
    fn gradient_values() {
        let ds = pair(0.0);
        assert_eq!(dual_gradient(&[0.0, 0.0], &ds).unwrap(), vec![1.0, 1.0]);
        let g = dual_gradient(&[0.25, 0.25], &ds).unwrap();
        for gi in g {
            assert!((gi - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn projection() {
        let h = hp(1.0, 1e-6);
        assert_eq!(
            project_box(&[-1.0, 0.5, 9.0], &h, &FrozenAssignment::none()),
            vec![0.0, 0.5, 1.0]
        );
        let frozen = FrozenAssignment::new([], [0]).unwrap();
        assert_eq!(project_box(&[0.2, 0.3], &h, &frozen), vec![1.0, 0.3]);
        let v = [0.0, 0.4, 1.0];
        assert_eq!(project_box(&v, &h, &FrozenAssignment::none()), v.to_vec());
    }

    #[test]
    fn frozen_validation() {
        assert!(FrozenAssignment::new([1, 2], [2]).is_err());
        let ds = pair(0.0);
        let frozen = FrozenAssignment::new([5], []).unwrap();
        assert!(solve(&ds, &hp(1.0, 1e-8), &frozen, &[0.0, 0.0]).is_err());
        let frozen = FrozenAssignment::new([], [0]).unwrap();
        assert!(solve(&ds, &hp(1.0, 1e-8), &frozen, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn analytic_optimum_without_radius() {
        let ds = pair(0.0);
        let r = solve(&ds, &hp(1.0, 1e-8), &FrozenAssignment::none(), &[0.0, 0.0]).unwrap();
        assert!(r.converged);
        assert!(r.iterate.gap <= 1e-8);
        assert!((r.iterate.dual_value - 0.5).abs() < 1e-8);
        assert!((r.iterate.w[0] - 1.0).abs() < 1e-4);
        assert_eq!(r.gap_history[0], 2.0);
    }

    #[test]
    fn analytic_optimum_with_radius() {
        let ds = pair(0.3);
        let r = solve(&ds, &hp(1.0, 1e-8), &FrozenAssignment::none(), &[0.0, 0.0]).unwrap();
        assert!(r.converged);
        assert!((r.iterate.dual_value - 1.02).abs() < 1e-8);
        assert!((r.iterate.w[0] - 1.4).abs() < 1e-4);
    }

    #[test]
    fn fully_frozen_returns_pinned_iterate() {
        let ds = pair(0.3);
        let frozen = FrozenAssignment::new([0], [1]).unwrap();
        let r = solve(&ds, &hp(1.0, 1e-8), &frozen, &[0.0, 1.0]).unwrap();
        assert_eq!(r.epochs, 0);
        assert_eq!(r.iterate.alpha, vec![0.0, 1.0]);
        assert_eq!(r.gap_history.len(), 1);
    }

    #[test]
    fn infeasible_start_rejected() {
        let ds = pair(0.3);
        assert!(matches!(
            solve(&ds, &hp(1.0, 1e-8), &FrozenAssignment::none(), &[2.0, 0.0]),
            Err(Error::BoxViolation { .. })
        ));
    }
}
