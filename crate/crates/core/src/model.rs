//! Closed-form quantities of the robust SVM.
//!
//! Primal: `P(w) = ½‖w‖² + C Σᵢ [1 − yᵢ⟨w, x̃ᵢ⟩ + ρᵢ‖w‖]₊`.
//!
//! Dual over the box `[0, C]ⁿ`: `D(α) = 1ᵀα − ½[‖d‖ − s]₊²` with the
//! aggregates `d = Σ αᵢyᵢx̃ᵢ` and `s = Σ αᵢρᵢ`. The primal point paired with
//! `α` is `w = 0` when `‖d‖ ≤ s`, else `(1 − s/‖d‖)·d`.

use crate::data::{Dataset, SampleView};
use crate::error::{Error, Result};
use crate::numeric::{self, Neumaier};
use crate::par;

/// Gaps in `[-GAP_FLOOR·max(1,|P|), 0)` are rounding noise and clamp to 0.
pub const GAP_FLOOR: f64 = 1e-9;

/// Default tolerance for [`kkt_residuals`] reporting.
pub const KKT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    /// Regularization weight on the robust hinge losses.
    pub c: f64,
    /// Target duality gap.
    pub gap_tol: f64,
    pub max_epochs: usize,
}

impl Hyperparams {
    pub fn new(c: f64, gap_tol: f64, max_epochs: usize) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("C must be finite and > 0, got {c}")));
        }
        if gap_tol.is_nan() || gap_tol <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gap tolerance must be > 0, got {gap_tol}"
            )));
        }
        if max_epochs == 0 {
            return Err(Error::InvalidParameter("max_epochs must be positive".into()));
        }
        Ok(Hyperparams { c, gap_tol, max_epochs })
    }

    pub fn with_c(c: f64) -> Result<Self> {
        let d = Hyperparams::default();
        Hyperparams::new(c, d.gap_tol, d.max_epochs)
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            c: 1.0,
            gap_tol: 1e-6,
            max_epochs: 100_000,
        }
    }
}

/// Robust functional margin `ψ = y⟨w, x̃⟩ − ρ‖w‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

/// A feasible dual vector together with everything derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct DualIterate {
    pub alpha: Vec<f64>,
    pub d: Vec<f64>,
    pub s: f64,
    pub w: Vec<f64>,
    pub dual_value: f64,
    pub primal_value: f64,
    pub gap: f64,
}

impl DualIterate {
    pub fn from_alpha(alpha: Vec<f64>, ds: &Dataset, hp: &Hyperparams) -> Result<Self> {
        check_box(&alpha, ds, hp)?;
        let agg = aggregate(ds, &alpha);
        let w = primal_from_aggregates(&agg.d, agg.s);
        let dual_value = dual_from_aggregates(agg.sum_alpha, numeric::norm2(&agg.d), agg.s);
        let primal_value = primal_objective(&w, ds, hp)?;
        let gap = clamp_gap(primal_value, dual_value)?;
        Ok(DualIterate {
            alpha,
            d: agg.d,
            s: agg.s,
            w,
            dual_value,
            primal_value,
            gap,
        })
    }
}

/// Weighted aggregates `d = Σ αᵢyᵢx̃ᵢ`, `s = Σ αᵢρᵢ` and `Σ αᵢ`.
#[derive(Debug, Clone)]
pub(crate) struct Aggregates {
    pub d: Vec<f64>,
    pub s: f64,
    pub sum_alpha: f64,
}

#[derive(Clone)]
struct BlockAgg {
    d: Vec<f64>,
    s: f64,
    sum: f64,
}

/// Blocked accumulation of `Σ wᵢ yᵢ x̃ᵢ` over `indices` (all samples when
/// `None`), with weights read from `weights[i]`. Plain sums inside each block,
/// compensated merge across blocks in fixed order.
pub(crate) fn aggregate_over(ds: &Dataset, weights: &[f64], indices: Option<&[usize]>) -> Aggregates {
    let dim = ds.dim();
    let len = indices.map_or(ds.n(), <[usize]>::len);
    let blocks = par::map_blocks(len, |range| {
        let mut acc = BlockAgg {
            d: vec![0.0; dim],
            s: 0.0,
            sum: 0.0,
        };
        for k in range {
            let i = indices.map_or(k, |idx| idx[k]);
            let a = weights[i];
            if a == 0.0 {
                continue;
            }
            let coef = a * ds.y(i);
            for (dj, xj) in acc.d.iter_mut().zip(ds.row(i)) {
                *dj += coef * xj;
            }
            acc.s += a * ds.radius(i);
            acc.sum += a;
        }
        acc
    });
    let mut d = vec![Neumaier::default(); dim];
    let mut s = Neumaier::default();
    let mut sum = Neumaier::default();
    for b in blocks {
        for (acc, v) in d.iter_mut().zip(&b.d) {
            acc.add(*v);
        }
        s.add(b.s);
        sum.add(b.sum);
    }
    Aggregates {
        d: d.iter().map(Neumaier::value).collect(),
        s: s.value(),
        sum_alpha: sum.value(),
    }
}

pub(crate) fn aggregate(ds: &Dataset, alpha: &[f64]) -> Aggregates {
    aggregate_over(ds, alpha, None)
}

/// `1ᵀα − ½[‖d‖ − s]₊²` from precomputed pieces.
#[inline]
pub(crate) fn dual_from_aggregates(sum_alpha: f64, d_norm: f64, s: f64) -> f64 {
    let m = numeric::positive_part(d_norm - s);
    sum_alpha - 0.5 * m * m
}

/// Clamps rounding-level negative gaps to zero; anything more negative is a
/// bug in the caller's arithmetic.
pub fn clamp_gap(primal: f64, dual: f64) -> Result<f64> {
    let gap = primal - dual;
    if !gap.is_finite() {
        return Err(Error::NonFinite(format!("gap from primal {primal}, dual {dual}")));
    }
    if gap >= 0.0 {
        Ok(gap)
    } else if gap >= -GAP_FLOOR * primal.abs().max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeGap { gap, primal, dual })
    }
}

fn check_dim(w: &[f64], sample: &SampleView<'_>) -> Result<()> {
    if w.len() != sample.features.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.features.len(),
            found: w.len(),
        });
    }
    Ok(())
}

fn check_len(alpha: &[f64], ds: &Dataset) -> Result<()> {
    if alpha.len() != ds.n() {
        return Err(Error::LengthMismatch {
            expected: ds.n(),
            found: alpha.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_box(alpha: &[f64], ds: &Dataset, hp: &Hyperparams) -> Result<()> {
    check_len(alpha, ds)?;
    match alpha.iter().position(|a| !(*a >= 0.0 && *a <= hp.c)) {
        Some(index) => Err(Error::BoxViolation {
            index,
            value: alpha[index],
            c: hp.c,
        }),
        None => Ok(()),
    }
}

/// Worst-case hinge loss over the radius-ρ ball: `[1 − y⟨w, x̃⟩ + ρ‖w‖]₊`.
pub fn robust_loss(w: &[f64], sample: SampleView<'_>) -> Result<f64> {
    Ok(numeric::positive_part(1.0 - margin(w, sample)?.psi))
}

pub fn margin(w: &[f64], sample: SampleView<'_>) -> Result<Margin> {
    check_dim(w, &sample)?;
    Ok(Margin {
        psi: margin_with_norm(w, numeric::norm2(w), sample),
    })
}

#[inline]
pub(crate) fn margin_with_norm(w: &[f64], w_norm: f64, sample: SampleView<'_>) -> f64 {
    sample.y() * numeric::dot(w, sample.features) - sample.radius * w_norm
}

/// `ψᵢ(w)` for every sample.
pub fn margins(w: &[f64], ds: &Dataset) -> Result<Vec<f64>> {
    if w.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: w.len(),
        });
    }
    let w_norm = numeric::norm2(w);
    let mut out = vec![0.0; ds.n()];
    par::fill(&mut out, |i| margin_with_norm(w, w_norm, ds.sample(i)));
    Ok(out)
}

pub fn primal_objective(w: &[f64], ds: &Dataset, hp: &Hyperparams) -> Result<f64> {
    if w.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: w.len(),
        });
    }
    let w_norm = numeric::norm2(w);
    let partials = par::map_blocks(ds.n(), |range| {
        range
            .map(|i| numeric::positive_part(1.0 - margin_with_norm(w, w_norm, ds.sample(i))))
            .sum::<f64>()
    });
    let loss = numeric::sum(partials);
    let value = 0.5 * w_norm * w_norm + hp.c * loss;
    if !value.is_finite() {
        return Err(Error::NonFinite("primal objective".into()));
    }
    Ok(value)
}

/// Returns `(d, s)`.
pub fn dual_aggregates(alpha: &[f64], ds: &Dataset) -> Result<(Vec<f64>, f64)> {
    check_len(alpha, ds)?;
    let agg = aggregate(ds, alpha);
    Ok((agg.d, agg.s))
}

pub fn dual_objective(alpha: &[f64], ds: &Dataset, hp: &Hyperparams) -> Result<f64> {
    check_box(alpha, ds, hp)?;
    let agg = aggregate(ds, alpha);
    let value = dual_from_aggregates(agg.sum_alpha, numeric::norm2(&agg.d), agg.s);
    if !value.is_finite() {
        return Err(Error::NonFinite("dual objective".into()));
    }
    Ok(value)
}

/// Primal point paired with the aggregates `(d, s)`.
pub fn primal_from_aggregates(d: &[f64], s: f64) -> Vec<f64> {
    let norm = numeric::norm2(d);
    if norm <= s || norm == 0.0 {
        return vec![0.0; d.len()];
    }
    let scale = 1.0 - s / norm;
    d.iter().map(|x| scale * x).collect()
}

pub fn primal_from_dual(alpha: &[f64], ds: &Dataset) -> Result<Vec<f64>> {
    let (d, s) = dual_aggregates(alpha, ds)?;
    Ok(primal_from_aggregates(&d, s))
}

pub fn duality_gap(alpha: &[f64], ds: &Dataset, hp: &Hyperparams) -> Result<GapReport> {
    let dual = dual_objective(alpha, ds, hp)?;
    let w = primal_from_dual(alpha, ds)?;
    let primal = primal_objective(&w, ds, hp)?;
    Ok(GapReport {
        primal,
        dual,
        gap: clamp_gap(primal, dual)?,
    })
}

/// Per-sample complementary-slackness residuals of a dual point.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `[1 − ψᵢ]₊` when `αᵢ = 0`, `[ψᵢ − 1]₊` when `αᵢ = C`, `|ψᵢ − 1|`
    /// otherwise.
    pub residuals: Vec<f64>,
    pub max_violation: f64,
    /// Samples whose residual exceeds the tolerance.
    pub violations: Vec<usize>,
}

pub fn kkt_residuals(alpha: &[f64], ds: &Dataset, hp: &Hyperparams, tol: f64) -> Result<KktReport> {
    check_box(alpha, ds, hp)?;
    let w = primal_from_dual(alpha, ds)?;
    let psi = margins(&w, ds)?;
    let residuals: Vec<f64> = alpha
        .iter()
        .zip(&psi)
        .map(|(&a, &p)| {
            if a == 0.0 {
                numeric::positive_part(1.0 - p)
            } else if a == hp.c {
                numeric::positive_part(p - 1.0)
            } else {
                (p - 1.0).abs()
            }
        })
        .collect();
    let max_violation = residuals.iter().copied().fold(0.0, f64::max);
    let violations = residuals
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > tol)
        .map(|(i, _)| i)
        .collect();
    Ok(KktReport {
        residuals,
        max_violation,
        violations,
    })
}
