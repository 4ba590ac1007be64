//! Projected gradient ascent state shared by the plain solver and the
//! screening driver.
//!
//! The state keeps `α` together with its aggregates `d`, `s` and `1ᵀα`.
//! Steps move only the coordinates in the free set and update the aggregates
//! by the increment `Σ Δαᵢ yᵢ x̃ᵢ`, so a step costs `O(|free|·dim)` no matter
//! how many coordinates are pinned. Aggregates are rebuilt from scratch by
//! [`Ascent::resync`] to stop incremental drift.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, Aggregates, GapReport};
use crate::numeric::{self, Neumaier};
use crate::par;

/// Armijo sufficient-increase constant.
pub(crate) const ARMIJO_SIGMA: f64 = 1e-4;
const STEP_MAX: f64 = 1e12;
/// Rounding allowance, in units of machine epsilon, on a computed dual
/// increase.
const NOISE_ULPS: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StepOutcome {
    Accepted,
    /// The projected gradient on the free set is zero.
    Stationary,
    /// Backtracking shrank the step below any representable progress.
    Stalled,
}

pub(crate) struct Ascent<'a> {
    ds: &'a Dataset,
    c: f64,
    pub alpha: Vec<f64>,
    free: Vec<usize>,
    pub d: Vec<f64>,
    d_norm: f64,
    pub s: f64,
    sum_alpha: f64,
    pub dual: f64,
    /// Primal point paired with the current aggregates.
    pub w: Vec<f64>,
    /// `1 − ψᵢ(w)` for every sample, valid after [`Ascent::evaluate`].
    g_all: Vec<f64>,
    /// Gradient restricted to `free`, aligned with it.
    grad: Vec<f64>,
    step: f64,
    step_min: f64,
    /// Displacement and old gradient of the last accepted step, for the
    /// Barzilai-Borwein step length.
    last_move: Option<(Vec<f64>, Vec<f64>)>,
    scratch: Vec<f64>,
}

impl<'a> Ascent<'a> {
    pub fn new(ds: &'a Dataset, c: f64, alpha: Vec<f64>, free: Vec<usize>) -> Self {
        let curvature = numeric::sum((0..ds.n()).map(|i| {
            let r = ds.row_norm(i) + ds.radius(i);
            r * r
        }));
        let step = if curvature > 0.0 { 1.0 / curvature } else { 1.0 };
        let n = ds.n();
        let mut state = Ascent {
            ds,
            c,
            alpha,
            free,
            d: Vec::new(),
            d_norm: 0.0,
            s: 0.0,
            sum_alpha: 0.0,
            dual: 0.0,
            w: Vec::new(),
            g_all: vec![0.0; n],
            grad: Vec::new(),
            step,
            step_min: step * 1e-14,
            last_move: None,
            scratch: vec![0.0; n],
        };
        state.resync();
        state
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    /// Replaces the free set. Pinned values must already be written into
    /// `alpha` through [`Ascent::pin`].
    pub fn set_free(&mut self, free: Vec<usize>) {
        self.free = free;
        self.grad.clear();
        self.last_move = None;
    }

    /// Overwrites `alpha[i]`, adjusting the aggregates.
    pub fn pin(&mut self, pins: &[(usize, f64)]) {
        self.scratch.fill(0.0);
        let mut idx = Vec::with_capacity(pins.len());
        for &(i, v) in pins {
            let delta = v - self.alpha[i];
            if delta != 0.0 {
                self.scratch[i] = delta;
                idx.push(i);
            }
            self.alpha[i] = v;
        }
        if !idx.is_empty() {
            let inc = model::aggregate_over(self.ds, &self.scratch, Some(&idx));
            self.apply_increment(&inc);
        }
        for &i in &idx {
            self.scratch[i] = 0.0;
        }
    }

    /// Rebuilds the aggregates from `alpha`.
    pub fn resync(&mut self) {
        let agg = model::aggregate(self.ds, &self.alpha);
        self.d = agg.d;
        self.s = agg.s;
        self.sum_alpha = agg.sum_alpha;
        self.refresh_derived();
    }

    fn refresh_derived(&mut self) {
        self.d_norm = numeric::norm2(&self.d);
        self.dual = model::dual_from_aggregates(self.sum_alpha, self.d_norm, self.s);
        self.w = model::primal_from_aggregates(&self.d, self.s);
    }

    fn apply_increment(&mut self, inc: &Aggregates) {
        for (dj, x) in self.d.iter_mut().zip(&inc.d) {
            *dj += x;
        }
        self.s += inc.s;
        self.sum_alpha += inc.sum_alpha;
        self.refresh_derived();
    }

    fn w_norm(&self) -> f64 {
        numeric::positive_part(self.d_norm - self.s)
    }

    /// Full-problem primal value, dual value and gap at the current iterate.
    /// Costs one pass over all samples.
    pub fn evaluate(&mut self) -> Result<GapReport> {
        let ds = self.ds;
        let w = &self.w;
        let m = self.w_norm();
        par::fill(&mut self.g_all, |i| {
            1.0 - (ds.y(i) * numeric::dot(w, ds.row(i)) - ds.radius(i) * m)
        });
        let g_all = &self.g_all;
        let partials = par::map_blocks(g_all.len(), |r| {
            g_all[r].iter().map(|&g| numeric::positive_part(g)).sum::<f64>()
        });
        let loss = numeric::sum(partials);
        let primal = 0.5 * m * m + self.c * loss;
        let dual = self.dual;
        if !(primal.is_finite() && dual.is_finite()) {
            return Err(Error::NonFinite(format!("objectives: primal {primal}, dual {dual}")));
        }
        Ok(GapReport {
            primal,
            dual,
            gap: model::clamp_gap(primal, dual)?,
        })
    }

    /// Gathers the free-set gradient from the last [`Ascent::evaluate`].
    pub fn gradient_from_evaluation(&mut self) {
        self.grad.clear();
        self.grad.extend(self.free.iter().map(|&i| self.g_all[i]));
    }

    /// Recomputes the gradient on the free set only.
    pub fn refresh_gradient(&mut self) {
        let ds = self.ds;
        let w = &self.w;
        let m = self.w_norm();
        let free = &self.free;
        self.grad.resize(free.len(), 0.0);
        par::fill(&mut self.grad, |k| {
            let i = free[k];
            1.0 - (ds.y(i) * numeric::dot(w, ds.row(i)) - ds.radius(i) * m)
        });
    }

    /// Norm of the projected gradient on the free set.
    pub fn projected_gradient_norm(&self) -> f64 {
        numeric::sum(self.free.iter().zip(&self.grad).map(|(&i, &g)| {
            let a = self.alpha[i];
            let blocked = (a <= 0.0 && g < 0.0) || (a >= self.c && g > 0.0);
            if blocked {
                0.0
            } else {
                g * g
            }
        }))
        .sqrt()
    }

    fn update_step_length(&mut self) {
        let Some((moved, old_grad)) = self.last_move.take() else {
            return;
        };
        if old_grad.len() != self.grad.len() {
            return;
        }
        let mut ss = Neumaier::default();
        let mut sy = Neumaier::default();
        for ((&mv, &g_old), &g_new) in moved.iter().zip(&old_grad).zip(&self.grad) {
            ss.add(mv * mv);
            sy.add(mv * (g_old - g_new));
        }
        let (ss, sy) = (ss.value(), sy.value());
        self.step = if sy > 0.0 { ss / sy } else { STEP_MAX };
        self.step = self.step.clamp(self.step_min * 1e4, STEP_MAX);
    }

    /// One projected gradient step with Armijo backtracking. The gradient on
    /// the free set must be current.
    pub fn step(&mut self) -> Result<StepOutcome> {
        self.update_step_length();
        if self.projected_gradient_norm() == 0.0 {
            return Ok(StepOutcome::Stationary);
        }
        let ds = self.ds;
        let c = self.c;
        let mut eta = self.step;
        loop {
            let mut increase = Neumaier::default();
            let mut touched = Vec::new();
            for (&i, &g) in self.free.iter().zip(&self.grad) {
                let a = self.alpha[i];
                let moved = (a + eta * g).clamp(0.0, c) - a;
                if moved != 0.0 {
                    self.scratch[i] = moved;
                    touched.push(i);
                    increase.add(g * moved);
                }
            }
            let increase = increase.value();
            if touched.is_empty() || increase <= 0.0 {
                for &i in &touched {
                    self.scratch[i] = 0.0;
                }
                return Ok(StepOutcome::Stalled);
            }
            let inc = model::aggregate_over(ds, &self.scratch, Some(&touched));
            let (gain, noise) = self.dual_increase(&inc);
            if !gain.is_finite() {
                return Err(Error::NonFinite("dual objective during line search".into()));
            }
            if gain >= ARMIJO_SIGMA * increase - noise {
                let old_grad = self.grad.clone();
                let moved: Vec<f64> = self.free.iter().map(|&i| self.scratch[i]).collect();
                for (&i, &g) in self.free.iter().zip(&self.grad) {
                    if self.scratch[i] != 0.0 {
                        self.alpha[i] = (self.alpha[i] + eta * g).clamp(0.0, c);
                        self.scratch[i] = 0.0;
                    }
                }
                self.apply_increment(&inc);
                self.last_move = Some((moved, old_grad));
                self.step = eta;
                return Ok(StepOutcome::Accepted);
            }
            for &i in &touched {
                self.scratch[i] = 0.0;
            }
            eta *= 0.5;
            if eta < self.step_min {
                return Ok(StepOutcome::Stalled);
            }
        }
    }

    /// `D(α + Δα) − D(α)` computed from the increment to avoid cancelling
    /// the two large objective values, together with a bound on its rounding
    /// error. Close to the optimum the true increase falls below that bound
    /// while the gradient is still informative, so the line search treats
    /// anything inside it as no change.
    fn dual_increase(&self, inc: &Aggregates) -> (f64, f64) {
        let mut cross = Neumaier::default();
        let mut new_sq = Neumaier::default();
        for (dj, xj) in self.d.iter().zip(&inc.d) {
            cross.add(xj * (2.0 * dj + xj));
            let v = dj + xj;
            new_sq.add(v * v);
        }
        let new_norm = new_sq.value().sqrt();
        let denom = new_norm + self.d_norm;
        let norm_change = if denom > 0.0 { cross.value() / denom } else { 0.0 };
        let u_old = self.d_norm - self.s;
        // Change of ‖d‖ − s, kept apart from u_old so it is not rounded
        // against it.
        let du = norm_change - inc.s;
        let u_new = u_old + du;
        let quad_change = if u_old > 0.0 && u_new > 0.0 {
            du * (2.0 * u_old + du)
        } else {
            let m_new = numeric::positive_part(u_new);
            let m_old = numeric::positive_part(u_old);
            m_new * m_new - m_old * m_old
        };
        let scale = inc.sum_alpha.abs() + (u_old.abs() + du.abs()) * (norm_change.abs() + inc.s.abs());
        (inc.sum_alpha - 0.5 * quad_change, NOISE_ULPS * f64::EPSILON * scale)
    }
}
