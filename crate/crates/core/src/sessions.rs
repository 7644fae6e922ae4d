//! Synthetic sessions following the query / feedback / assess grammar,
//! least-squares recovery of the model parameters from session logs, and
//! the feedback viability recommendation.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EconError, Result};
use crate::model::{cost, gain, CostParams, GainTarget, ModelKind, Strategy, ValidatedParams};
use crate::oracle::{minimize_cost, GridSpec};

/// Singular-value ratio below which a design counts as rank deficient.
pub const RANK_TOL: f64 = 1e-8;
/// Relative cost margin a feedback model must beat the baseline by.
pub const VIABILITY_MARGIN: f64 = 1e-6;
/// Largest count drawn by [`random_design`].
pub const DESIGN_MAX_COUNT: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Query,
    Feedback,
    Assess,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionAction {
    pub step: u64,
    pub kind: ActionKind,
    pub unit_cost: f64,
}

/// One simulated session. The noise stream of a session is its id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionLog {
    pub session_id: u64,
    pub model: ModelKind,
    pub q: u64,
    pub f: u64,
    pub a: u64,
    pub realized_gain: f64,
    pub realized_cost: f64,
    pub actions: Vec<SessionAction>,
}

/// Action totals `(queries, feedbacks, assessments)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActionCounts {
    pub query: u64,
    pub feedback: u64,
    pub assess: u64,
}

impl SessionLog {
    pub fn strategy(&self) -> Strategy {
        Strategy {
            model: self.model,
            q: self.q as f64,
            f: self.f as f64,
            a: self.a as f64,
        }
    }

    pub fn counts(&self) -> ActionCounts {
        let mut c = ActionCounts::default();
        for act in &self.actions {
            match act.kind {
                ActionKind::Query => c.query += 1,
                ActionKind::Feedback => c.feedback += 1,
                ActionKind::Assess => c.assess += 1,
            }
        }
        c
    }

    /// Gain spread evenly over the actions, for display only. The model
    /// attributes all gain at the end of the session.
    pub fn prorated_gain(&self) -> Vec<f64> {
        let n = self.actions.len() as f64;
        (1..=self.actions.len())
            .map(|k| self.realized_gain * k as f64 / n)
            .collect()
    }
}

fn count(v: f64, name: &str) -> Result<u64> {
    if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
        return Err(EconError::Domain(format!(
            "{name} must be a non-negative integer, got {v}"
        )));
    }
    Ok(v as u64)
}

/// Unrolls the action sequence of an integer strategy.
pub fn action_sequence(s: &Strategy, c: &CostParams) -> Result<Vec<SessionAction>> {
    s.validate()?;
    let (q, f, a) = (count(s.q, "q")?, count(s.f, "f")?, count(s.a, "a")?);
    let mut kinds = Vec::new();
    for _ in 0..q {
        kinds.push(ActionKind::Query);
        match s.model {
            ModelKind::Baseline => {
                kinds.extend((0..a).map(|_| ActionKind::Assess));
            }
            ModelKind::FeedbackFirst => {
                kinds.extend((0..f).map(|_| ActionKind::Feedback));
                kinds.extend((0..a).map(|_| ActionKind::Assess));
            }
            ModelKind::FeedbackAfter => {
                kinds.extend((0..a).map(|_| ActionKind::Assess));
                for _ in 0..f {
                    kinds.push(ActionKind::Feedback);
                    kinds.extend((0..a).map(|_| ActionKind::Assess));
                }
            }
        }
    }
    Ok(kinds
        .into_iter()
        .enumerate()
        .map(|(i, kind)| SessionAction {
            step: i as u64,
            kind,
            unit_cost: match kind {
                ActionKind::Query => c.c_query,
                ActionKind::Feedback => c.c_feedback,
                ActionKind::Assess => c.c_assess,
            },
        })
        .collect())
}

fn noise(sigma: f64, seed: u64, stream: u64) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(1.0);
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| EconError::Domain(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok(normal.sample(&mut rng).exp())
}

fn session(
    id: u64,
    s: &Strategy,
    p: &ValidatedParams,
    sigma: f64,
    seed: u64,
) -> Result<SessionLog> {
    let actions = action_sequence(s, p.cost())?;
    let mut c = ActionCounts::default();
    for act in &actions {
        match act.kind {
            ActionKind::Query => c.query += 1,
            ActionKind::Feedback => c.feedback += 1,
            ActionKind::Assess => c.assess += 1,
        }
    }
    let cp = p.cost();
    // Same association order as the cost function, so totals match it bit for bit.
    let realized_cost = c.query as f64 * cp.c_query
        + c.feedback as f64 * cp.c_feedback
        + c.assess as f64 * cp.c_assess;
    Ok(SessionLog {
        session_id: id,
        model: s.model,
        q: s.q as u64,
        f: s.f as u64,
        a: s.a as u64,
        realized_gain: gain(s, p.eff()) * noise(sigma, seed, id)?,
        realized_cost,
        actions,
    })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(EconError::Domain(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )))
    }
}

/// `n` sessions of one integer strategy, ids `0..n`.
pub fn simulate(
    s: &Strategy,
    p: &ValidatedParams,
    sigma: f64,
    seed: u64,
    n: usize,
) -> Result<Vec<SessionLog>> {
    check_sigma(sigma)?;
    if n == 0 {
        return Err(EconError::domain("need at least one session"));
    }
    if !s.is_integral() {
        return Err(EconError::domain(
            "simulated strategies must be integer valued",
        ));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|id| session(id, s, p, sigma, seed))
        .collect()
}

/// One session per strategy, ids in design order.
pub fn simulate_design(
    design: &[Strategy],
    p: &ValidatedParams,
    sigma: f64,
    seed: u64,
) -> Result<Vec<SessionLog>> {
    check_sigma(sigma)?;
    if design.is_empty() {
        return Err(EconError::domain("need at least one session"));
    }
    if let Some(s) = design.iter().find(|s| !s.is_integral()) {
        return Err(EconError::Domain(format!(
            "simulated strategies must be integer valued, got ({}, {}, {})",
            s.q, s.f, s.a
        )));
    }
    design
        .par_iter()
        .enumerate()
        .map(|(id, s)| session(id as u64, s, p, sigma, seed))
        .collect()
}

/// `n` integer strategies with every count drawn log-uniformly from
/// `1..=32`. The baseline keeps `f = 0`.
pub fn random_design(model: ModelKind, n: usize, seed: u64) -> Vec<Strategy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = ((DESIGN_MAX_COUNT + 1) as f64).ln();
    let mut draw = || {
        let u: f64 = rng.random_range(0.0..top);
        (u.exp().floor() as u64).clamp(1, DESIGN_MAX_COUNT) as f64
    };
    (0..n)
        .map(|_| {
            let q = draw();
            let f = draw();
            let a = draw();
            Strategy {
                model,
                q,
                f: if model.has_feedback() { f } else { 0.0 },
                a,
            }
        })
        .collect()
}

pub fn write_jsonl(logs: &[SessionLog], mut out: impl Write) -> Result<()> {
    for log in logs {
        let line = crate::json::to_string(log)?;
        writeln!(out, "{line}").map_err(|e| EconError::Domain(format!("writing logs: {e}")))?;
    }
    Ok(())
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<SessionLog>> {
    let mut logs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| EconError::Domain(format!("reading logs: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let log: SessionLog = serde_json::from_str(&line)
            .map_err(|e| EconError::Domain(format!("log line {}: {e}", i + 1)))?;
        logs.push(log);
    }
    Ok(logs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainEstimate {
    pub model: ModelKind,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    /// `γ₁` or `γ₂` depending on the model; absent for the baseline.
    pub gamma_hat: Option<f64>,
    /// Root mean square residual of the log-gain regression.
    pub residual_rms: f64,
    pub n_sessions: usize,
    pub condition_warning: bool,
    pub unidentifiable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate {
    pub model: ModelKind,
    pub cq_hat: f64,
    pub cf_hat: Option<f64>,
    pub ca_hat: f64,
    pub residual_rms: f64,
    pub n_sessions: usize,
    pub condition_warning: bool,
    pub unidentifiable: Vec<String>,
}

/// Gain and cost estimates merged into one document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationResult {
    pub model: ModelKind,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub gamma_hat: Option<f64>,
    pub cq_hat: f64,
    pub cf_hat: Option<f64>,
    pub ca_hat: f64,
    /// Log-space residual of the gain fit.
    pub residual_rms: f64,
    pub cost_residual_rms: f64,
    pub n_sessions: usize,
    pub condition_warning: bool,
    pub unidentifiable: Vec<String>,
}

impl EstimationResult {
    pub fn combine(g: &GainEstimate, c: &CostEstimate) -> Self {
        let mut unidentifiable = g.unidentifiable.clone();
        unidentifiable.extend(c.unidentifiable.iter().cloned());
        EstimationResult {
            model: g.model,
            alpha_hat: g.alpha_hat,
            beta_hat: g.beta_hat,
            gamma_hat: g.gamma_hat,
            cq_hat: c.cq_hat,
            cf_hat: c.cf_hat,
            ca_hat: c.ca_hat,
            residual_rms: g.residual_rms,
            cost_residual_rms: c.residual_rms,
            n_sessions: g.n_sessions,
            condition_warning: g.condition_warning || c.condition_warning,
            unidentifiable,
        }
    }
}

struct LeastSquares {
    coef: Vec<f64>,
    residual_rms: f64,
    rank_deficient: bool,
    unidentifiable: Vec<usize>,
}

fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> LeastSquares {
    let k = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = RANK_TOL * smax;
    let coef = svd
        .solve(&b, eps)
        .map(|c| c.iter().copied().collect::<Vec<_>>())
        .unwrap_or_else(|_| vec![f64::NAN; k]);
    let resid = &x * DVector::from_column_slice(&coef) - &b;
    let residual_rms = (resid.norm_squared() / rows.len() as f64).sqrt();

    let mut unidentifiable = BTreeSet::new();
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= eps {
            for j in 0..k {
                if v_t[(i, j)].abs() > 1e-6 {
                    unidentifiable.insert(j);
                }
            }
        }
    }
    // Fewer rows than columns leaves null directions with no singular value.
    let rank_deficient = !unidentifiable.is_empty() || smax == 0.0;
    LeastSquares {
        coef,
        residual_rms,
        rank_deficient,
        unidentifiable: unidentifiable.into_iter().collect(),
    }
}

fn check_logs(logs: &[SessionLog], required: usize) -> Result<ModelKind> {
    let Some(first) = logs.first() else {
        return Err(EconError::InsufficientDesign {
            distinct: 0,
            required,
        });
    };
    if logs.iter().any(|l| l.model != first.model) {
        return Err(EconError::domain("logs must share one model"));
    }
    let distinct: BTreeSet<(u64, u64, u64)> = logs.iter().map(|l| (l.q, l.f, l.a)).collect();
    if distinct.len() < required {
        return Err(EconError::InsufficientDesign {
            distinct: distinct.len(),
            required,
        });
    }
    Ok(first.model)
}

fn names(idx: &[usize], labels: &[&str]) -> Vec<String> {
    idx.iter().map(|&i| labels[i].to_string()).collect()
}

/// Least squares in log space on the model's gain equation.
pub fn fit_gain_params(logs: &[SessionLog], model: ModelKind) -> Result<GainEstimate> {
    let required = if model.has_feedback() { 3 } else { 2 };
    let found = check_logs(logs, required)?;
    if found != model {
        return Err(EconError::Domain(format!(
            "logs were generated under {found}, not {model}"
        )));
    }
    let mut rows = Vec::with_capacity(logs.len());
    let mut y = Vec::with_capacity(logs.len());
    for l in logs {
        if l.q == 0 || l.a == 0 {
            return Err(EconError::Domain(format!(
                "session {} has a zero count; gain fitting needs q, a >= 1",
                l.session_id
            )));
        }
        if !(l.realized_gain > 0.0 && l.realized_gain.is_finite()) {
            return Err(EconError::Domain(format!(
                "session {} has non-positive gain",
                l.session_id
            )));
        }
        let (lq, la, f) = ((l.q as f64).ln(), (l.a as f64).ln(), l.f as f64);
        rows.push(match model {
            ModelKind::Baseline => vec![lq, la],
            ModelKind::FeedbackFirst => vec![lq, f * lq, la],
            ModelKind::FeedbackAfter => vec![lq, (1.0 + f).ln(), la],
        });
        y.push(l.realized_gain.ln());
    }
    let fit = least_squares(&rows, &y);
    let (labels, alpha, beta, gamma): (&[&str], f64, f64, Option<f64>) = match model {
        ModelKind::Baseline => (&["alpha", "beta"], fit.coef[0], fit.coef[1], None),
        ModelKind::FeedbackFirst => (
            &["alpha", "gamma1", "beta"],
            fit.coef[0],
            fit.coef[2],
            Some(fit.coef[1]),
        ),
        ModelKind::FeedbackAfter => (
            &["alpha", "gamma2", "beta"],
            fit.coef[0],
            fit.coef[2],
            Some(fit.coef[1]),
        ),
    };
    Ok(GainEstimate {
        model,
        alpha_hat: alpha,
        beta_hat: beta,
        gamma_hat: gamma,
        residual_rms: fit.residual_rms,
        n_sessions: logs.len(),
        condition_warning: fit.rank_deficient,
        unidentifiable: names(&fit.unidentifiable, labels),
    })
}

/// Linear least squares of realized cost on the model's count regressors.
pub fn fit_cost_params(logs: &[SessionLog]) -> Result<CostEstimate> {
    let model = logs.first().map(|l| l.model).unwrap_or(ModelKind::Baseline);
    let required = if model.has_feedback() { 3 } else { 2 };
    let model = check_logs(logs, required)?;
    let mut rows = Vec::with_capacity(logs.len());
    let mut y = Vec::with_capacity(logs.len());
    for l in logs {
        let (q, f, a) = (l.q as f64, l.f as f64, l.a as f64);
        rows.push(match model {
            ModelKind::Baseline => vec![q, q * a],
            ModelKind::FeedbackFirst => vec![q, q * f, q * a],
            ModelKind::FeedbackAfter => vec![q, q * f, q * (1.0 + f) * a],
        });
        y.push(l.realized_cost);
    }
    let fit = least_squares(&rows, &y);
    let (labels, cq, cf, ca): (&[&str], f64, Option<f64>, f64) = match model {
        ModelKind::Baseline => (&["c_query", "c_assess"], fit.coef[0], None, fit.coef[1]),
        _ => (
            &["c_query", "c_feedback", "c_assess"],
            fit.coef[0],
            Some(fit.coef[1]),
            fit.coef[2],
        ),
    };
    let negative = cq < 0.0 || ca < 0.0 || cf.is_some_and(|v| v < 0.0);
    Ok(CostEstimate {
        model,
        cq_hat: cq,
        cf_hat: cf,
        ca_hat: ca,
        residual_rms: fit.residual_rms,
        n_sessions: logs.len(),
        condition_warning: fit.rank_deficient || negative,
        unidentifiable: names(&fit.unidentifiable, labels),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelCost {
    pub model: ModelKind,
    /// `None` when the oracle found no bounded optimum.
    pub total_cost: Option<f64>,
    pub f: Option<f64>,
    pub a: Option<f64>,
    pub comparable: bool,
    pub feedback_corner: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub cheapest: ModelKind,
    pub feedback_first_worthwhile: bool,
    pub feedback_after_worthwhile: bool,
    pub models: Vec<ModelCost>,
}

impl Recommendation {
    pub fn worthwhile(&self, model: ModelKind) -> bool {
        match model {
            ModelKind::Baseline => false,
            ModelKind::FeedbackFirst => self.feedback_first_worthwhile,
            ModelKind::FeedbackAfter => self.feedback_after_worthwhile,
        }
    }

    pub fn cost_of(&self, model: ModelKind) -> Option<&ModelCost> {
        self.models.iter().find(|m| m.model == model)
    }
}

/// Compares the oracle optimum of all three models at one target gain.
///
/// A feedback model is worthwhile iff its optimum gives feedback and costs
/// less than the baseline by more than [`VIABILITY_MARGIN`] relative.
/// The cheapest model is the lowest-cost eligible model; costs within the
/// margin of each other resolve towards the simpler interaction.
pub fn viability(p: &ValidatedParams, g: GainTarget, grid: &GridSpec) -> Result<Recommendation> {
    let models: Vec<ModelCost> = ModelKind::ALL
        .par_iter()
        .map(|&m| match minimize_cost(m, p, g, grid) {
            Ok(sol) => Ok(ModelCost {
                model: m,
                total_cost: Some(sol.total_cost),
                f: Some(sol.strategy.f),
                a: Some(sol.strategy.a),
                comparable: true,
                feedback_corner: sol.grid_meta.feedback_corner,
                note: None,
            }),
            Err(EconError::Unbounded(msg)) => Ok(ModelCost {
                model: m,
                total_cost: None,
                f: None,
                a: None,
                comparable: false,
                feedback_corner: false,
                note: Some(format!("not comparable: {msg}")),
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;

    let base = models[0].total_cost;
    let worthwhile = |m: &ModelCost| match (m.total_cost, base) {
        (Some(c), Some(b)) => !m.feedback_corner && c < b * (1.0 - VIABILITY_MARGIN),
        _ => false,
    };
    let eligible: Vec<&ModelCost> = models
        .iter()
        .filter(|m| m.comparable && (m.model == ModelKind::Baseline || !m.feedback_corner))
        .collect();
    let best = eligible
        .iter()
        .filter_map(|m| m.total_cost)
        .min_by(f64::total_cmp)
        .ok_or_else(|| EconError::Unbounded("no model has a bounded optimum".into()))?;
    // ModelKind::ALL is ordered simplest first.
    let cheapest = eligible
        .iter()
        .find(|m| {
            m.total_cost
                .is_some_and(|c| c <= best * (1.0 + VIABILITY_MARGIN))
        })
        .map(|m| m.model)
        .expect("the minimum belongs to an eligible model");

    Ok(Recommendation {
        cheapest,
        feedback_first_worthwhile: worthwhile(&models[1]),
        feedback_after_worthwhile: worthwhile(&models[2]),
        models,
    })
}

/// Total cost implied by the action tallies, for checking logs.
pub fn cost_from_counts(c: &ActionCounts, p: &CostParams) -> f64 {
    c.query as f64 * p.c_query + c.feedback as f64 * p.c_feedback + c.assess as f64 * p.c_assess
}

/// The counts implied by a strategy, for checking the grammar.
pub fn expected_counts(s: &Strategy) -> ActionCounts {
    let (q, f, a) = (s.q as u64, s.f as u64, s.a as u64);
    match s.model {
        ModelKind::Baseline => ActionCounts {
            query: q,
            feedback: 0,
            assess: q * a,
        },
        ModelKind::FeedbackFirst => ActionCounts {
            query: q,
            feedback: q * f,
            assess: q * a,
        },
        ModelKind::FeedbackAfter => ActionCounts {
            query: q,
            feedback: q * f,
            assess: q * (1 + f) * a,
        },
    }
}

/// True when the log's realized cost equals the cost function exactly.
pub fn cost_matches(log: &SessionLog, p: &CostParams) -> bool {
    log.realized_cost == cost(&log.strategy(), p)
}
