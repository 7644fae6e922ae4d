//! Brute-force constrained minimisation: minimise cost subject to
//! `gain = G`, with `Q` eliminated analytically so the search runs over
//! `(F, A)` (or `A` alone for the baseline).
//!
//! The search is a logarithmic grid followed by zoom rounds. Each round
//! shrinks the log-width of the window tenfold around the incumbent and
//! keeps the same number of points per axis. Candidates are ordered by
//! `(cost, q, f, a)`, so the result does not depend on evaluation order.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::recover_q;
use crate::error::{EconError, Result};
use crate::model::{cost, gain, gamma_fn, GainTarget, ModelKind, Strategy, ValidatedParams};

/// Grids at or above this many cells are evaluated in parallel.
const PARALLEL_CELLS: usize = 10_000;

/// Relative slack allowed when checking that a point meets the gain target.
const GAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub refinements: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            min: 1e-3,
            max: 1e4,
            points: 200,
            refinements: 3,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.min.is_finite()) {
            return Err(EconError::domain("grid min must be finite and > 0"));
        }
        if !(self.max > self.min && self.max.is_finite()) {
            return Err(EconError::domain("grid max must be finite and > min"));
        }
        if self.points < 3 {
            return Err(EconError::domain("grid needs at least 3 points per axis"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: GridSpec =
            serde_json::from_str(text).map_err(|e| EconError::Domain(format!("grid spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// First-order diagnostics of the Lagrangian at a strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    /// Multiplier from the `A` stationarity condition.
    pub lambda: f64,
    pub residual_q: f64,
    /// `None` for the baseline, which has no feedback coordinate.
    pub residual_f: Option<f64>,
    /// Zero by construction of `lambda`.
    pub residual_a: f64,
    pub residual_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridMeta {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub refinements: usize,
    pub evaluations: usize,
    /// Final search window `[lo, hi]` for `A`.
    pub a_window: [f64; 2],
    /// Final search window for `F`; `None` when `F` was not searched.
    pub f_window: Option<[f64; 2]>,
    /// The feedback component sits at the lower grid bound, i.e. the
    /// optimum is the no-feedback corner.
    pub feedback_corner: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalStrategy {
    pub strategy: Strategy,
    pub achieved_gain: f64,
    pub total_cost: f64,
    pub kkt: KktReport,
    pub integer_neighbor: Option<Strategy>,
    pub grid_meta: GridMeta,
}

/// `cost(s) − λ·(gain(s) − g)`.
pub fn lagrangian(s: &Strategy, p: &ValidatedParams, g: GainTarget, lambda: f64) -> Result<f64> {
    s.validate()?;
    Ok(cost(s, p.cost()) - lambda * (gain(s, p.eff()) - g.value()))
}

struct Gradients {
    cost: [f64; 3],
    gain: [f64; 3],
}

fn gradients(s: &Strategy, p: &ValidatedParams) -> Gradients {
    let (e, c) = (p.eff(), p.cost());
    let g = gain(s, e);
    let (q, f, a) = (s.q, s.f, s.a);
    match s.model {
        ModelKind::Baseline => Gradients {
            cost: [c.c_query + a * c.c_assess, 0.0, q * c.c_assess],
            gain: [e.alpha * g / q, 0.0, e.beta * g / a],
        },
        ModelKind::FeedbackFirst => {
            let exponent = gamma_fn(f, e).value;
            Gradients {
                cost: [
                    c.c_query + f * c.c_feedback + a * c.c_assess,
                    q * c.c_feedback,
                    q * c.c_assess,
                ],
                gain: [exponent * g / q, e.gamma1 * q.ln() * g, e.beta * g / a],
            }
        }
        ModelKind::FeedbackAfter => Gradients {
            cost: [
                c.c_query + f * c.c_feedback + (1.0 + f) * a * c.c_assess,
                q * c.c_feedback + q * a * c.c_assess,
                q * (1.0 + f) * c.c_assess,
            ],
            gain: [e.alpha * g / q, e.gamma2 * g / (1.0 + f), e.beta * g / a],
        },
    }
}

/// Stationarity residuals of the Lagrangian, normalised by the norm of the
/// cost gradient.
pub fn kkt_residual(s: &Strategy, p: &ValidatedParams, _g: GainTarget) -> Result<KktReport> {
    s.validate()?;
    if s.q <= 0.0 || s.a <= 0.0 || (s.model.has_feedback() && s.f <= 0.0) {
        return Err(EconError::domain(
            "KKT residuals need strictly positive coordinates",
        ));
    }
    let grads = gradients(s, p);
    if grads.gain[2] == 0.0 || !grads.gain[2].is_finite() {
        return Err(EconError::domain("gain gradient in A vanishes"));
    }
    let lambda = grads.cost[2] / grads.gain[2];
    let norm = grads.cost.iter().map(|x| x * x).sum::<f64>().sqrt();
    let residual_q = (grads.cost[0] - lambda * grads.gain[0]) / norm;
    let residual_f = s
        .model
        .has_feedback()
        .then(|| (grads.cost[1] - lambda * grads.gain[1]) / norm);
    let residual_max = residual_q.abs().max(residual_f.map_or(0.0, f64::abs));
    Ok(KktReport {
        lambda,
        residual_q,
        residual_f,
        residual_a: 0.0,
        residual_max,
    })
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    q: f64,
    f: f64,
    a: f64,
}

impl Candidate {
    fn order(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.q.total_cmp(&other.q))
            .then(self.f.total_cmp(&other.f))
            .then(self.a.total_cmp(&other.a))
    }

    fn better(self, other: Self) -> Self {
        if other.order(&self) == Ordering::Less {
            other
        } else {
            self
        }
    }
}

/// One search axis in log10 coordinates, with exact endpoint values.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    bound_lo: f64,
    bound_hi: f64,
    value_lo: f64,
    value_hi: f64,
}

impl Axis {
    fn full(spec: &GridSpec) -> Self {
        let (lo, hi) = (spec.min.log10(), spec.max.log10());
        Axis {
            lo,
            hi,
            bound_lo: lo,
            bound_hi: hi,
            value_lo: spec.min,
            value_hi: spec.max,
        }
    }

    fn value(&self, i: usize, n: usize) -> f64 {
        if i == 0 && self.lo == self.bound_lo {
            return self.value_lo;
        }
        if i + 1 == n && self.hi == self.bound_hi {
            return self.value_hi;
        }
        10f64.powf(self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
    }

    fn zoom(&self, center: f64) -> Self {
        let half = (self.hi - self.lo) / 20.0;
        let c = if center == self.value_lo {
            self.bound_lo
        } else if center == self.value_hi {
            self.bound_hi
        } else {
            center.log10()
        };
        Axis {
            lo: (c - half).max(self.bound_lo),
            hi: (c + half).min(self.bound_hi),
            ..*self
        }
    }

    fn window(&self) -> [f64; 2] {
        [10f64.powf(self.lo), 10f64.powf(self.hi)]
    }
}

struct Search<'a> {
    model: ModelKind,
    p: &'a ValidatedParams,
    g: GainTarget,
    spec: GridSpec,
}

impl Search<'_> {
    fn evaluate(&self, f: f64, a: f64) -> Option<Candidate> {
        let q = recover_q(self.g, f, a, self.model, self.p).ok()?;
        let s = Strategy {
            model: self.model,
            q,
            f,
            a,
        };
        let c = cost(&s, self.p.cost());
        c.is_finite().then_some(Candidate { cost: c, q, f, a })
    }

    fn best_over(&self, f_axis: Option<&Axis>, fixed_f: f64, a_axis: &Axis) -> Option<Candidate> {
        let n = self.spec.points;
        let row = |i: usize| -> Option<Candidate> {
            let f = f_axis.map_or(fixed_f, |ax| ax.value(i, n));
            (0..n)
                .filter_map(|j| self.evaluate(f, a_axis.value(j, n)))
                .reduce(Candidate::better)
        };
        let rows = if f_axis.is_some() { n } else { 1 };
        if rows * n >= PARALLEL_CELLS {
            (0..rows)
                .into_par_iter()
                .filter_map(row)
                .reduce_with(Candidate::better)
        } else {
            (0..rows).filter_map(row).reduce(Candidate::better)
        }
    }

    fn run(&self, fixed_f: Option<f64>) -> Result<(Candidate, GridMeta)> {
        let searches_f = self.model.has_feedback() && fixed_f.is_none();
        let fixed = fixed_f.unwrap_or(0.0);
        let mut a_axis = Axis::full(&self.spec);
        let mut f_axis = searches_f.then(|| Axis::full(&self.spec));
        let per_round = self.spec.points * if searches_f { self.spec.points } else { 1 };

        let mut best = self
            .best_over(f_axis.as_ref(), fixed, &a_axis)
            .ok_or_else(|| EconError::domain("no grid point yields a finite cost"))?;
        for _ in 0..self.spec.refinements {
            a_axis = a_axis.zoom(best.a);
            f_axis = f_axis.map(|ax| ax.zoom(best.f));
            if let Some(c) = self.best_over(f_axis.as_ref(), fixed, &a_axis) {
                best = best.better(c);
            }
        }

        if best.a == self.spec.min || best.a == self.spec.max {
            return Err(EconError::Unbounded(format!(
                "assessment component at grid boundary {} ({} model)",
                best.a, self.model
            )));
        }
        if searches_f && best.f == self.spec.max {
            return Err(EconError::Unbounded(format!(
                "feedback component at upper grid boundary {} ({} model)",
                best.f, self.model
            )));
        }
        let meta = GridMeta {
            min: self.spec.min,
            max: self.spec.max,
            points: self.spec.points,
            refinements: self.spec.refinements,
            evaluations: per_round * (self.spec.refinements + 1),
            a_window: a_axis.window(),
            f_window: f_axis.map(|ax| ax.window()),
            feedback_corner: searches_f && best.f == self.spec.min,
        };
        Ok((best, meta))
    }
}

fn finish(
    model: ModelKind,
    best: Candidate,
    meta: GridMeta,
    p: &ValidatedParams,
    g: GainTarget,
) -> Result<OptimalStrategy> {
    let strategy = Strategy::new(model, best.q, best.f, best.a)?;
    let kkt = kkt_residual(&strategy, p, g)?;
    let mut sol = OptimalStrategy {
        strategy,
        achieved_gain: gain(&strategy, p.eff()),
        total_cost: best.cost,
        kkt,
        integer_neighbor: None,
        grid_meta: meta,
    };
    sol.integer_neighbor = integer_refine(&sol, p, g)
        .or_else(|_| integer_refine_within(&sol, p, g, 1))
        .ok();
    Ok(sol)
}

/// Minimises cost subject to reaching the gain target.
pub fn minimize_cost(
    model: ModelKind,
    p: &ValidatedParams,
    g: GainTarget,
    grid: &GridSpec,
) -> Result<OptimalStrategy> {
    grid.validate()?;
    let search = Search {
        model,
        p,
        g,
        spec: *grid,
    };
    let (best, meta) = search.run(None)?;
    finish(model, best, meta, p, g)
}

/// Minimises cost over `A` alone with the feedback rounds held at `f`.
pub fn minimize_cost_at_feedback(
    model: ModelKind,
    p: &ValidatedParams,
    g: GainTarget,
    f: f64,
    grid: &GridSpec,
) -> Result<OptimalStrategy> {
    grid.validate()?;
    if model == ModelKind::Baseline && f != 0.0 {
        return Err(EconError::domain("baseline has no feedback rounds"));
    }
    if !(f.is_finite() && f >= 0.0) {
        return Err(EconError::Domain(format!(
            "feedback rounds must be >= 0, got {f}"
        )));
    }
    let search = Search {
        model,
        p,
        g,
        spec: *grid,
    };
    let (best, meta) = search.run(Some(f))?;
    finish(model, best, meta, p, g)
}

/// Cheapest feasible integer strategy next to the continuous optimum.
///
/// Looks at `⌊·⌋`/`⌈·⌉` of each coordinate, plus for each `(f, a)` pair the
/// smallest integer `Q` that reaches the target.
pub fn integer_refine(
    sol: &OptimalStrategy,
    p: &ValidatedParams,
    g: GainTarget,
) -> Result<Strategy> {
    integer_refine_within(sol, p, g, 0)
}

/// [`integer_refine`] with the neighbourhood widened by `radius` units on
/// every axis.
pub fn integer_refine_within(
    sol: &OptimalStrategy,
    p: &ValidatedParams,
    g: GainTarget,
    radius: u32,
) -> Result<Strategy> {
    let s = sol.strategy;
    let r = radius as f64;
    let span = |x: f64, floor_min: f64| -> Vec<f64> {
        let lo = (x.floor() - r).max(floor_min);
        let hi = (x.ceil() + r).max(lo);
        let mut v = Vec::new();
        let mut k = lo;
        while k <= hi {
            v.push(k);
            k += 1.0;
        }
        v
    };
    let fs = if s.model.has_feedback() {
        span(s.f, 0.0)
    } else {
        vec![0.0]
    };
    let target = g.value() * (1.0 - GAIN_SLACK);
    let mut best: Option<(f64, Strategy)> = None;
    for &f in &fs {
        for a in span(s.a, 1.0) {
            let mut qs = span(s.q, 1.0);
            if let Ok(needed) = recover_q(g, f, a, s.model, p) {
                let mut q = (needed * (1.0 - 1e-12)).ceil().max(1.0);
                let probe = Strategy {
                    model: s.model,
                    q,
                    f,
                    a,
                };
                if gain(&probe, p.eff()) < target {
                    q += 1.0;
                }
                if q.is_finite() {
                    qs.push(q);
                }
            }
            for q in qs {
                let cand = Strategy {
                    model: s.model,
                    q,
                    f,
                    a,
                };
                if gain(&cand, p.eff()) < target {
                    continue;
                }
                let c = cost(&cand, p.cost());
                let replace = match &best {
                    None => true,
                    Some((bc, bs)) => {
                        c.total_cmp(bc)
                            .then(q.total_cmp(&bs.q))
                            .then(f.total_cmp(&bs.f))
                            .then(a.total_cmp(&bs.a))
                            == Ordering::Less
                    }
                };
                if replace {
                    best = Some((c, cand));
                }
            }
        }
    }
    best.map(|(_, s)| s).ok_or(EconError::Infeasible { radius })
}
