//! Safe sample screening over the GAP ball.
//!
//! For any dual-feasible `α` with primal partner `w`, strong convexity of the
//! primal puts the optimum inside the ball of radius `√(2·gap)` around `w`.
//! Bounding each robust margin over that ball decides, for some samples,
//! which bound their optimal dual variable sits at:
//!
//! * `LB > 1`: the sample is inactive, `αᵢ* = 0`;
//! * `UB < 1`: the sample is a margin violator, `αᵢ* = C`;
//! * otherwise nothing is known.
//!
//! [`dynamic_screen`] interleaves short solver runs with screening passes and
//! pins screened coordinates, so later passes only touch the free samples.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SampleView};
use crate::error::{Error, Result};
use crate::model::{self, DualIterate, Hyperparams};
use crate::numeric;
use crate::par;
use crate::solver::ascent::{Ascent, StepOutcome};
use crate::solver::{self, FrozenAssignment, SolveReport};

/// Gap below which an iterate counts as an exact optimum for
/// [`ideal_screen`] and for the no-false-screening audit.
pub const CERTIFIED_GAP: f64 = 1e-10;

/// Margin tolerance used by [`ideal_screen`] by default.
pub const IDEAL_TOL: f64 = 1e-7;

/// Euclidean ball guaranteed to contain the primal optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeBall {
    pub center: Vec<f64>,
    pub center_norm: f64,
    pub radius: f64,
    /// Gap the radius was derived from.
    pub gap: f64,
}

impl SafeBall {
    pub fn new(center: Vec<f64>, gap: f64) -> Result<Self> {
        if gap.is_nan() || gap < -model::GAP_FLOOR {
            return Err(Error::NegativeGap {
                gap,
                primal: f64::NAN,
                dual: f64::NAN,
            });
        }
        let gap = gap.max(0.0);
        Ok(SafeBall {
            center_norm: numeric::norm2(&center),
            center,
            radius: (2.0 * gap).sqrt(),
            gap,
        })
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        let dist = numeric::norm2(&w.iter().zip(&self.center).map(|(a, b)| a - b).collect::<Vec<_>>());
        dist <= self.radius
    }
}

pub fn gap_ball(iterate: &DualIterate) -> Result<SafeBall> {
    SafeBall::new(iterate.w.clone(), iterate.gap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Bounds on `ψ(w) = y⟨w, x̃⟩ − ρ‖w‖` valid for every `w` in the ball.
pub fn margin_bounds(ball: &SafeBall, sample: SampleView<'_>) -> Result<MarginBounds> {
    if ball.center.len() != sample.features.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.features.len(),
            found: ball.center.len(),
        });
    }
    Ok(bounds_with_norm(ball, sample, numeric::norm2(sample.features)))
}

#[inline]
fn bounds_with_norm(ball: &SafeBall, sample: SampleView<'_>, x_norm: f64) -> MarginBounds {
    let linear = sample.y() * numeric::dot(&ball.center, sample.features);
    let r = ball.radius;
    MarginBounds {
        lower: linear - sample.radius * (ball.center_norm + r) - r * x_norm,
        upper: linear - sample.radius * numeric::positive_part(ball.center_norm - r) + r * x_norm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScreenDecision {
    /// `αᵢ* = 0`.
    ScreenZero,
    /// `αᵢ* = C`.
    ScreenC,
    Keep,
}

/// Strict inequalities: a bound touching 1 keeps the sample.
pub fn classify(bounds: MarginBounds) -> ScreenDecision {
    if bounds.lower > 1.0 {
        ScreenDecision::ScreenZero
    } else if bounds.upper < 1.0 {
        ScreenDecision::ScreenC
    } else {
        ScreenDecision::Keep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleStatus {
    Free,
    Zero,
    AtC,
}

/// Disjoint cover of the sample indices by screened-zero, screened-C and free.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    status: Vec<SampleStatus>,
    /// Outer iteration at which each screened sample was fixed.
    screened_at: Vec<Option<usize>>,
}

/// Serialized form of a [`Partition`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSets {
    pub n: usize,
    pub screened_zero: Vec<usize>,
    pub screened_c: Vec<usize>,
    pub free: Vec<usize>,
}

impl Partition {
    pub fn all_free(n: usize) -> Self {
        Partition {
            status: vec![SampleStatus::Free; n],
            screened_at: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.status.len()
    }

    pub fn is_empty(&self) -> bool {
        self.status.is_empty()
    }

    pub fn status(&self, i: usize) -> SampleStatus {
        self.status[i]
    }

    pub fn screened_at(&self, i: usize) -> Option<usize> {
        self.screened_at[i]
    }

    /// Moves a free sample to a screened set. Screened samples never return.
    pub fn screen(&mut self, i: usize, status: SampleStatus, iteration: usize) -> Result<()> {
        if self.status[i] != SampleStatus::Free {
            return Err(Error::Partition(format!("sample {i} is already screened")));
        }
        if status == SampleStatus::Free {
            return Err(Error::Partition(format!("sample {i} cannot be screened as free")));
        }
        self.status[i] = status;
        self.screened_at[i] = Some(iteration);
        Ok(())
    }

    fn indices(&self, which: SampleStatus) -> Vec<usize> {
        self.status
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == which)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn screened_zero(&self) -> Vec<usize> {
        self.indices(SampleStatus::Zero)
    }

    pub fn screened_c(&self) -> Vec<usize> {
        self.indices(SampleStatus::AtC)
    }

    pub fn free(&self) -> Vec<usize> {
        self.indices(SampleStatus::Free)
    }

    fn count(&self, which: SampleStatus) -> usize {
        self.status.iter().filter(|&&s| s == which).count()
    }

    pub fn n_zero(&self) -> usize {
        self.count(SampleStatus::Zero)
    }

    pub fn n_c(&self) -> usize {
        self.count(SampleStatus::AtC)
    }

    pub fn n_free(&self) -> usize {
        self.count(SampleStatus::Free)
    }

    /// `|R ∪ S| / n`.
    pub fn screened_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (self.len() - self.n_free()) as f64 / self.len() as f64
    }

    /// `|R| / n`.
    pub fn zero_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.n_zero() as f64 / self.len() as f64
    }

    pub fn to_sets(&self) -> PartitionSets {
        PartitionSets {
            n: self.len(),
            screened_zero: self.screened_zero(),
            screened_c: self.screened_c(),
            free: self.free(),
        }
    }

    pub fn from_sets(sets: &PartitionSets) -> Result<Self> {
        let mut part = Partition::all_free(sets.n);
        let mut seen = vec![false; sets.n];
        for (list, status) in [
            (&sets.screened_zero, SampleStatus::Zero),
            (&sets.screened_c, SampleStatus::AtC),
            (&sets.free, SampleStatus::Free),
        ] {
            for &i in list {
                if i >= sets.n || seen[i] {
                    return Err(Error::Partition(format!("index {i} out of range or repeated")));
                }
                seen[i] = true;
                if status != SampleStatus::Free {
                    part.screen(i, status, 0)?;
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Partition("sets do not cover every sample".into()));
        }
        Ok(part)
    }
}

/// One row of the screening trace, written after each screening pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub gap: f64,
    pub radius: f64,
    pub n_zero: usize,
    #[serde(rename = "n_C")]
    pub n_c: usize,
    pub n_free: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScreenTrace {
    pub rows: Vec<TraceRow>,
}

impl ScreenTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with header `iter,gap,radius,n_zero,n_C,n_free,seconds`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for row in &self.rows {
            writer.serialize(row)?;
        }
        if self.rows.is_empty() {
            writer.write_record(["iter", "gap", "radius", "n_zero", "n_C", "n_free", "seconds"])?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Knobs of the dynamic screening loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenConfig {
    /// Stop screening once at most this many samples remain free.
    pub f_min: usize,
    /// Maximum solver epochs between two screening passes.
    pub screen_every: usize,
    /// An inner run also ends once the projected gradient norm falls below
    /// this fraction of its starting value.
    pub inner_decrease: f64,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        ScreenConfig {
            f_min: 0,
            screen_every: 10,
            inner_decrease: 0.1,
        }
    }
}

impl ScreenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.screen_every == 0 {
            return Err(Error::InvalidParameter("screen_every must be at least 1".into()));
        }
        if !(self.inner_decrease > 0.0 && self.inner_decrease < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "inner_decrease must lie in (0, 1), got {}",
                self.inner_decrease
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenOutcome {
    pub w: Vec<f64>,
    pub partition: Partition,
    pub trace: ScreenTrace,
    /// Final solve over the active set `F ∪ S`.
    pub report: SolveReport,
    /// Solver epochs spent inside the screening loop.
    pub screening_epochs: usize,
}

impl ScreenOutcome {
    pub fn converged(&self) -> bool {
        self.report.converged
    }
}

/// Dynamic safe screening.
///
/// Starting from `α = 0`, alternates a short projected-gradient run on the
/// free samples with a screening pass over them. The gap and ball always
/// refer to the full problem, with screened coordinates held at their
/// certified values. The loop ends when the gap reaches `hp.gap_tol` or at
/// most `config.f_min` samples are free; a last solve over `F ∪ S` (with `R`
/// held at zero) certifies the returned weights.
pub fn dynamic_screen(ds: &Dataset, hp: &Hyperparams, config: &ScreenConfig) -> Result<ScreenOutcome> {
    dynamic_screen_observed(ds, hp, config, |_, _| {})
}

/// [`dynamic_screen`], calling `observer(k, ball)` with the ball of every
/// outer iteration `k`.
pub fn dynamic_screen_observed<F>(
    ds: &Dataset,
    hp: &Hyperparams,
    config: &ScreenConfig,
    mut observer: F,
) -> Result<ScreenOutcome>
where
    F: FnMut(usize, &SafeBall),
{
    config.validate()?;
    let start = Instant::now();
    let n = ds.n();
    let c = hp.c;
    let mut partition = Partition::all_free(n);
    let mut state = Ascent::new(ds, c, vec![0.0; n], (0..n).collect());
    let mut trace = ScreenTrace::default();

    let first = state.evaluate()?;
    let mut gap = first.gap;
    let ball = SafeBall::new(state.w.clone(), gap)?;
    observer(0, &ball);
    trace.rows.push(trace_row(0, &ball, &partition, &start));

    let mut k = 0;
    let mut epochs = 0;
    while partition.n_free() > config.f_min && gap > hp.gap_tol && epochs < hp.max_epochs {
        k += 1;

        state.refresh_gradient();
        let initial = state.projected_gradient_norm();
        for _ in 0..config.screen_every {
            if epochs >= hp.max_epochs {
                break;
            }
            match state.step()? {
                StepOutcome::Accepted => epochs += 1,
                StepOutcome::Stationary | StepOutcome::Stalled => break,
            }
            state.refresh_gradient();
            if state.projected_gradient_norm() <= config.inner_decrease * initial {
                break;
            }
        }

        state.resync();
        gap = state.evaluate()?.gap;
        let ball = SafeBall::new(state.w.clone(), gap)?;
        observer(k, &ball);

        let free = state.free().to_vec();
        let decisions = par::map_blocks(free.len(), |range| {
            free[range]
                .iter()
                .map(|&i| classify(bounds_with_norm(&ball, ds.sample(i), ds.row_norm(i))))
                .collect::<Vec<_>>()
        });
        let mut pins = Vec::new();
        for (&i, decision) in free.iter().zip(decisions.into_iter().flatten()) {
            match decision {
                ScreenDecision::ScreenZero => {
                    partition.screen(i, SampleStatus::Zero, k)?;
                    pins.push((i, 0.0));
                }
                ScreenDecision::ScreenC => {
                    partition.screen(i, SampleStatus::AtC, k)?;
                    pins.push((i, c));
                }
                ScreenDecision::Keep => {}
            }
        }
        if !pins.is_empty() {
            state.pin(&pins);
            state.set_free(partition.free());
        }
        trace.rows.push(trace_row(k, &ball, &partition, &start));
    }

    let frozen = FrozenAssignment::new(partition.screened_zero(), [])?;
    let final_hp = Hyperparams {
        max_epochs: hp.max_epochs.saturating_sub(epochs).max(1),
        ..*hp
    };
    let report = solver::solve(ds, &final_hp, &frozen, &state.alpha)?;
    Ok(ScreenOutcome {
        w: report.iterate.w.clone(),
        partition,
        trace,
        report,
        screening_epochs: epochs,
    })
}

fn trace_row(iter: usize, ball: &SafeBall, partition: &Partition, start: &Instant) -> TraceRow {
    TraceRow {
        iter,
        gap: ball.gap,
        radius: ball.radius,
        n_zero: partition.n_zero(),
        n_c: partition.n_c(),
        n_free: partition.n_free(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Partition by exact margins at a certified optimum: `ψᵢ > 1 + tol` to the
/// zero set, `ψᵢ < 1 − tol` to the C set, the rest free.
pub fn ideal_screen(optimum: &DualIterate, ds: &Dataset, tol: f64) -> Result<Partition> {
    if optimum.gap > CERTIFIED_GAP {
        return Err(Error::Uncertified {
            gap: optimum.gap,
            required: CERTIFIED_GAP,
        });
    }
    let psi = model::margins(&optimum.w, ds)?;
    let mut partition = Partition::all_free(ds.n());
    for (i, &p) in psi.iter().enumerate() {
        if p > 1.0 + tol {
            partition.screen(i, SampleStatus::Zero, 0)?;
        } else if p < 1.0 - tol {
            partition.screen(i, SampleStatus::AtC, 0)?;
        }
    }
    Ok(partition)
}

/// Relative slack on `α` for the dual-route check of the audit.
pub const AUDIT_ALPHA_TOL: f64 = 1e-5;
/// Slack on `ψ` for the margin-route check of the audit.
pub const AUDIT_MARGIN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    /// Screened samples contradicted by both the reference dual values and
    /// the reference margins.
    pub violations: Vec<usize>,
    /// Screened samples whose reference margin contradicts the screen.
    pub margin_violations: Vec<usize>,
    /// Screened samples whose reference dual value contradicts the screen.
    /// Expected to be nonempty sometimes, since dual optima need not be
    /// unique.
    pub alpha_mismatches: Vec<usize>,
    pub reference_gap: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a partition against a certified reference optimum.
pub fn audit_partition(
    partition: &Partition,
    reference: &DualIterate,
    ds: &Dataset,
    hp: &Hyperparams,
) -> Result<AuditReport> {
    if partition.len() != ds.n() {
        return Err(Error::LengthMismatch {
            expected: ds.n(),
            found: partition.len(),
        });
    }
    let psi = model::margins(&reference.w, ds)?;
    let mut report = AuditReport {
        violations: Vec::new(),
        margin_violations: Vec::new(),
        alpha_mismatches: Vec::new(),
        reference_gap: reference.gap,
    };
    for (i, (&a, &psi)) in reference.alpha.iter().zip(&psi).enumerate() {
        let (alpha_ok, margin_ok) = match partition.status(i) {
            SampleStatus::Free => continue,
            SampleStatus::Zero => (a <= AUDIT_ALPHA_TOL * hp.c, psi >= 1.0 - AUDIT_MARGIN_TOL),
            SampleStatus::AtC => (a >= hp.c * (1.0 - AUDIT_ALPHA_TOL), psi <= 1.0 + AUDIT_MARGIN_TOL),
        };
        if !alpha_ok {
            report.alpha_mismatches.push(i);
        }
        if !margin_ok {
            report.margin_violations.push(i);
        }
        if !alpha_ok && !margin_ok {
            report.violations.push(i);
        }
    }
    Ok(report)
}

/// Solves the unscreened problem to [`CERTIFIED_GAP`] and audits `partition`
/// against it.
pub fn verify_no_false_screening(partition: &Partition, ds: &Dataset, hp: &Hyperparams) -> Result<AuditReport> {
    let reference = certified_optimum(ds, hp)?;
    audit_partition(partition, &reference, ds, hp)
}

/// Unscreened solve to [`CERTIFIED_GAP`].
pub fn certified_optimum(ds: &Dataset, hp: &Hyperparams) -> Result<DualIterate> {
    let strict = Hyperparams {
        gap_tol: CERTIFIED_GAP,
        max_epochs: hp.max_epochs.max(1_000_000),
        ..*hp
    };
    let report = solver::solve(ds, &strict, &FrozenAssignment::none(), &vec![0.0; ds.n()])?;
    if !report.converged {
        return Err(Error::Uncertified {
            gap: report.iterate.gap,
            required: CERTIFIED_GAP,
        });
    }
    Ok(report.iterate)
}
