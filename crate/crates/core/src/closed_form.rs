//! Printed optimal-strategy formulas for all three models, evaluated exactly
//! as written, plus damped fixed-point solvers for the coupled pairs.
//!
//! None of these formulas is trusted on its own: the grid oracle in
//! [`crate::oracle`] is the reference and the audit in [`crate::statics`]
//! records where the two agree. In particular the feedback-first pair and
//! the fully solved feedback-after `A*` are known to deviate from a direct
//! re-derivation; they are still implemented verbatim.

use serde::{Deserialize, Serialize};

use crate::error::{EconError, Result};
use crate::model::{gamma_fn, GainTarget, ModelKind, ValidatedParams};

/// A formula value after clamping negative outputs to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Clamped {
    pub value: f64,
    pub raw: f64,
    pub corner: bool,
}

impl Clamped {
    fn from_raw(raw: f64) -> Self {
        if raw < 0.0 {
            Clamped {
                value: 0.0,
                raw,
                corner: true,
            }
        } else {
            Clamped {
                value: raw,
                raw,
                corner: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolutionSource {
    Model0,
    Model1Coupled,
    Model2Partial,
    Model2Full,
    Model2DraftCoupled,
}

impl SolutionSource {
    pub fn for_model(model: ModelKind) -> &'static [SolutionSource] {
        match model {
            ModelKind::Baseline => &[SolutionSource::Model0],
            ModelKind::FeedbackFirst => &[SolutionSource::Model1Coupled],
            ModelKind::FeedbackAfter => &[
                SolutionSource::Model2Partial,
                SolutionSource::Model2Full,
                SolutionSource::Model2DraftCoupled,
            ],
        }
    }

    pub fn model(self) -> ModelKind {
        match self {
            SolutionSource::Model0 => ModelKind::Baseline,
            SolutionSource::Model1Coupled => ModelKind::FeedbackFirst,
            _ => ModelKind::FeedbackAfter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormSolution {
    pub source: SolutionSource,
    pub a_star: f64,
    pub f_star: f64,
    pub q_star: f64,
    /// True when a raw formula value was negative and clamped to zero.
    pub corner: bool,
    pub raw_a: f64,
    pub raw_f: f64,
    /// Fixed-point iterations; zero for direct formulas.
    pub iterations: usize,
}

/// Settings of the damped fixed-point iteration used for coupled pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        FixedPointSettings {
            tol: 1e-9,
            max_iter: 1000,
            damping: 0.5,
        }
    }
}

/// Baseline: `A₀* = β·C_q / ((α−β)·C_a)`.
pub fn a0_star(p: &ValidatedParams) -> Result<f64> {
    let (e, c) = (p.eff(), p.cost());
    let gap = e.alpha - e.beta;
    if gap <= 0.0 {
        return Err(EconError::NoInteriorOptimum(format!(
            "alpha ({}) must exceed beta ({})",
            e.alpha, e.beta
        )));
    }
    Ok(e.beta * c.c_query / (gap * c.c_assess))
}

/// Feedback first: `A₁*(f) = (β·C_q + f·C_f) / ((γ₁·f + α − β)·C_a)`.
pub fn a1_star(f: f64, p: &ValidatedParams) -> Result<f64> {
    check_rounds(f)?;
    let (e, c) = (p.eff(), p.cost());
    let gap = gamma_fn(f, e).value - e.beta;
    if gap <= 0.0 {
        return Err(EconError::NoInteriorOptimum(format!(
            "gamma1*f + alpha - beta = {gap} is not positive"
        )));
    }
    Ok((e.beta * c.c_query + f * c.c_feedback) / (gap * c.c_assess))
}

/// Feedback first: `F₁*(a) = (β·C_q + (α−β)·a·C_a) / (γ₁·a·C_a + β·C_f)`.
pub fn f1_star(a: f64, p: &ValidatedParams) -> Result<Clamped> {
    check_assessments(a)?;
    let (e, c) = (p.eff(), p.cost());
    let den = e.gamma1 * a * c.c_assess + e.beta * c.c_feedback;
    if den <= 0.0 {
        return Err(EconError::Domain(format!(
            "F1* denominator {den} is not positive"
        )));
    }
    let num = e.beta * c.c_query + (e.alpha - e.beta) * a * c.c_assess;
    Ok(Clamped::from_raw(num / den))
}

/// Feedback after, intermediate form:
/// `A₂*(f) = β·(C_q + f·C_f) / ((α−β)·(f+1)·C_a)`.
pub fn a2_star_partial(f: f64, p: &ValidatedParams) -> Result<f64> {
    check_rounds(f)?;
    let (e, c) = (p.eff(), p.cost());
    let gap = e.alpha - e.beta;
    if gap <= 0.0 {
        return Err(EconError::NoInteriorOptimum(format!(
            "alpha ({}) must exceed beta ({})",
            e.alpha, e.beta
        )));
    }
    Ok(e.beta * (c.c_query + f * c.c_feedback) / (gap * (f + 1.0) * c.c_assess))
}

/// Feedback after, fully solved form:
/// `A₂*(f) = (γ₂·(C_q + C_f) − α·(1+f)·C_f) / ((α−γ₂)·(1+f)·C_a)`.
pub fn a2_star_full(f: f64, p: &ValidatedParams) -> Result<Clamped> {
    check_rounds(f)?;
    let (e, c) = (p.eff(), p.cost());
    let gap = e.alpha - e.gamma2;
    if gap == 0.0 {
        return Err(EconError::domain("alpha equals gamma2; A2* is undefined"));
    }
    let num = e.gamma2 * (c.c_query + c.c_feedback) - e.alpha * (1.0 + f) * c.c_feedback;
    Ok(Clamped::from_raw(num / (gap * (1.0 + f) * c.c_assess)))
}

/// Feedback after, fully solved form:
/// `F₂* = ((γ₂−β)·C_q + (β−α)·C_f) / ((α−γ₂)·C_f)`. Independent of `C_a`.
pub fn f2_star(p: &ValidatedParams) -> Result<Clamped> {
    let (e, c) = (p.eff(), p.cost());
    let gap = e.alpha - e.gamma2;
    if gap == 0.0 {
        return Err(EconError::domain("alpha equals gamma2; F2* is undefined"));
    }
    let num = (e.gamma2 - e.beta) * c.c_query + (e.beta - e.alpha) * c.c_feedback;
    Ok(Clamped::from_raw(num / (gap * c.c_feedback)))
}

/// Feedback after, coupled draft form:
/// `F₂*(a) = (β·C_q + (α−β)·a·C_a) / ((α−β)·a·C_a + β·C_f)`.
pub fn f2_star_draft(a: f64, p: &ValidatedParams) -> Result<Clamped> {
    check_assessments(a)?;
    let (e, c) = (p.eff(), p.cost());
    let spread = (e.alpha - e.beta) * a * c.c_assess;
    let den = spread + e.beta * c.c_feedback;
    if den <= 0.0 {
        return Err(EconError::Domain(format!(
            "draft F2* denominator {den} is not positive"
        )));
    }
    Ok(Clamped::from_raw((e.beta * c.c_query + spread) / den))
}

/// Inverts the gain constraint for `Q` given `(f, a)`.
pub fn recover_q(
    g: GainTarget,
    f: f64,
    a: f64,
    model: ModelKind,
    p: &ValidatedParams,
) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(EconError::Domain(format!(
            "cannot recover Q with a = {a}; assessments must be positive"
        )));
    }
    check_rounds(f)?;
    let e = p.eff();
    let (q_exp, rest) = match model {
        ModelKind::Baseline => (e.alpha, a.powf(e.beta)),
        ModelKind::FeedbackFirst => (gamma_fn(f, e).value, a.powf(e.beta)),
        ModelKind::FeedbackAfter => (e.alpha, (1.0 + f).powf(e.gamma2) * a.powf(e.beta)),
    };
    if q_exp <= 0.0 {
        return Err(EconError::domain("query exponent must be positive"));
    }
    Ok((g.value() / rest).powf(1.0 / q_exp))
}

fn check_rounds(f: f64) -> Result<()> {
    if f.is_finite() && f >= 0.0 {
        Ok(())
    } else {
        Err(EconError::Domain(format!(
            "feedback rounds must be finite and >= 0, got {f}"
        )))
    }
}

fn check_assessments(a: f64) -> Result<()> {
    if a.is_finite() && a >= 0.0 {
        Ok(())
    } else {
        Err(EconError::Domain(format!(
            "assessments must be finite and >= 0, got {a}"
        )))
    }
}

pub fn model0_solve(p: &ValidatedParams, g: GainTarget) -> Result<ClosedFormSolution> {
    let a = a0_star(p)?;
    let q = recover_q(g, 0.0, a, ModelKind::Baseline, p)?;
    Ok(ClosedFormSolution {
        source: SolutionSource::Model0,
        a_star: a,
        f_star: 0.0,
        q_star: q,
        corner: false,
        raw_a: a,
        raw_f: 0.0,
        iterations: 0,
    })
}

struct FixedPoint {
    a: f64,
    f: f64,
    raw_f: f64,
    corner: bool,
    iterations: usize,
}

/// Jacobi-style damped iteration `a ← a_of(f)`, `f ← max(0, f_of(a))`.
fn damped_fixed_point(
    start_a: f64,
    a_of: impl Fn(f64) -> Result<f64>,
    f_of: impl Fn(f64) -> Result<Clamped>,
    settings: &FixedPointSettings,
) -> Result<FixedPoint> {
    if !(settings.tol > 0.0) {
        return Err(EconError::domain("tolerance must be > 0"));
    }
    if !(settings.damping > 0.0 && settings.damping <= 1.0) {
        return Err(EconError::domain("damping must lie in (0, 1]"));
    }
    let (mut a, mut f) = (start_a, 0.0);
    let mut last_step = f64::INFINITY;
    for it in 1..=settings.max_iter {
        let a_target = a_of(f)?;
        let f_target = f_of(a)?;
        let a_next = a + settings.damping * (a_target - a);
        let f_next = f + settings.damping * (f_target.value - f);
        last_step = (a_next - a).abs().max((f_next - f).abs());
        a = a_next;
        f = f_next;
        if !last_step.is_finite() {
            break;
        }
        if last_step < settings.tol {
            let raw = f_of(a)?;
            return Ok(FixedPoint {
                a,
                f,
                raw_f: raw.raw,
                corner: raw.corner,
                iterations: it,
            });
        }
    }
    Err(EconError::Diverged {
        iterations: settings.max_iter,
        last_step,
    })
}

/// Solves the feedback-first pair `A₁*(F)`, `F₁*(A)` jointly.
pub fn model1_solve(
    p: &ValidatedParams,
    g: GainTarget,
    settings: &FixedPointSettings,
) -> Result<ClosedFormSolution> {
    let start = a0_star(p).unwrap_or(1.0);
    let fp = damped_fixed_point(start, |f| a1_star(f, p), |a| f1_star(a, p), settings)?;
    let q = recover_q(g, fp.f, fp.a, ModelKind::FeedbackFirst, p)?;
    Ok(ClosedFormSolution {
        source: SolutionSource::Model1Coupled,
        a_star: fp.a,
        f_star: fp.f,
        q_star: q,
        corner: fp.corner,
        raw_a: fp.a,
        raw_f: fp.raw_f,
        iterations: fp.iterations,
    })
}

/// Feedback after with `F₂*` from the fully solved form and `A` from the
/// intermediate form evaluated at that `F`.
pub fn model2_partial_solve(p: &ValidatedParams, g: GainTarget) -> Result<ClosedFormSolution> {
    let f = f2_star(p)?;
    let a = a2_star_partial(f.value, p)?;
    let q = recover_q(g, f.value, a, ModelKind::FeedbackAfter, p)?;
    Ok(ClosedFormSolution {
        source: SolutionSource::Model2Partial,
        a_star: a,
        f_star: f.value,
        q_star: q,
        corner: f.corner,
        raw_a: a,
        raw_f: f.raw,
        iterations: 0,
    })
}

/// Feedback after using both fully solved formulas.
pub fn model2_full_solve(p: &ValidatedParams, g: GainTarget) -> Result<ClosedFormSolution> {
    let f = f2_star(p)?;
    let a = a2_star_full(f.value, p)?;
    let q = recover_q(g, f.value, a.value, ModelKind::FeedbackAfter, p)?;
    Ok(ClosedFormSolution {
        source: SolutionSource::Model2Full,
        a_star: a.value,
        f_star: f.value,
        q_star: q,
        corner: f.corner || a.corner,
        raw_a: a.raw,
        raw_f: f.raw,
        iterations: 0,
    })
}

/// Feedback after using the coupled draft pair `A₂*(F)`, `F₂*(A)`.
pub fn model2_draft_solve(
    p: &ValidatedParams,
    g: GainTarget,
    settings: &FixedPointSettings,
) -> Result<ClosedFormSolution> {
    let start = a0_star(p).unwrap_or(1.0);
    let fp = damped_fixed_point(
        start,
        |f| a2_star_partial(f, p),
        |a| f2_star_draft(a, p),
        settings,
    )?;
    let q = recover_q(g, fp.f, fp.a, ModelKind::FeedbackAfter, p)?;
    Ok(ClosedFormSolution {
        source: SolutionSource::Model2DraftCoupled,
        a_star: fp.a,
        f_star: fp.f,
        q_star: q,
        corner: fp.corner,
        raw_a: fp.a,
        raw_f: fp.raw_f,
        iterations: fp.iterations,
    })
}

pub fn solve(
    source: SolutionSource,
    p: &ValidatedParams,
    g: GainTarget,
    settings: &FixedPointSettings,
) -> Result<ClosedFormSolution> {
    match source {
        SolutionSource::Model0 => model0_solve(p, g),
        SolutionSource::Model1Coupled => model1_solve(p, g, settings),
        SolutionSource::Model2Partial => model2_partial_solve(p, g),
        SolutionSource::Model2Full => model2_full_solve(p, g),
        SolutionSource::Model2DraftCoupled => model2_draft_solve(p, g, settings),
    }
}
