//! Comparative statics: parameter sweeps, finite-difference signs, and an
//! auditor that checks each behavioural claim about the optimal strategies
//! against both the printed formula and the grid oracle.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{
    a0_star, a1_star, a2_star_full, a2_star_partial, f1_star, f2_star, f2_star_draft, Clamped,
};
use crate::error::{EconError, Result};
use crate::model::{
    validate, CostParams, EfficiencyParams, GainTarget, ModelKind, ValidatedParams,
};
use crate::oracle::{minimize_cost, minimize_cost_at_feedback, GridSpec, OptimalStrategy};

/// Central-difference relative step.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Derivatives smaller than this in magnitude count as flat.
pub const FLAT_THRESHOLD: f64 = 1e-9;
/// Relative tolerance when comparing a printed formula value to the oracle.
pub const VALUE_AGREEMENT_TOL: f64 = 1e-2;
/// Maximum gap between formula-side and oracle-side fractions for a claim
/// verdict of agreement.
pub const FRACTION_AGREEMENT_TOL: f64 = 0.05;
/// Share of samples that must agree for a formula to be judged in agreement.
pub const FORMULA_AGREEMENT_SHARE: f64 = 0.95;

const MAX_COUNTEREXAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Alpha,
    Beta,
    Gamma1,
    Gamma2,
    CQuery,
    CFeedback,
    CAssess,
    /// Feedback rounds held fixed when a formula is conditional on them.
    F,
}

impl Parameter {
    pub const ALL: [Parameter; 8] = [
        Parameter::Alpha,
        Parameter::Beta,
        Parameter::Gamma1,
        Parameter::Gamma2,
        Parameter::CQuery,
        Parameter::CFeedback,
        Parameter::CAssess,
        Parameter::F,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::Alpha => "alpha",
            Parameter::Beta => "beta",
            Parameter::Gamma1 => "gamma1",
            Parameter::Gamma2 => "gamma2",
            Parameter::CQuery => "c_query",
            Parameter::CFeedback => "c_feedback",
            Parameter::CAssess => "c_assess",
            Parameter::F => "f",
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parameter {
    type Err = EconError;

    fn from_str(s: &str) -> Result<Self> {
        Parameter::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| EconError::Domain(format!("unknown parameter {s:?}")))
    }
}

/// Everything a formula may depend on: the model parameters plus the
/// conditioning counts for the coupled formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub eff: EfficiencyParams,
    pub cost: CostParams,
    pub f: f64,
    pub a: f64,
}

impl ParamPoint {
    pub fn new(p: &ValidatedParams, f: f64, a: f64) -> Self {
        ParamPoint {
            eff: *p.eff(),
            cost: *p.cost(),
            f,
            a,
        }
    }

    pub fn get(&self, param: Parameter) -> f64 {
        match param {
            Parameter::Alpha => self.eff.alpha,
            Parameter::Beta => self.eff.beta,
            Parameter::Gamma1 => self.eff.gamma1,
            Parameter::Gamma2 => self.eff.gamma2,
            Parameter::CQuery => self.cost.c_query,
            Parameter::CFeedback => self.cost.c_feedback,
            Parameter::CAssess => self.cost.c_assess,
            Parameter::F => self.f,
        }
    }

    pub fn with(&self, param: Parameter, v: f64) -> Self {
        let mut out = *self;
        match param {
            Parameter::Alpha => out.eff.alpha = v,
            Parameter::Beta => out.eff.beta = v,
            Parameter::Gamma1 => out.eff.gamma1 = v,
            Parameter::Gamma2 => out.eff.gamma2 = v,
            Parameter::CQuery => out.cost.c_query = v,
            Parameter::CFeedback => out.cost.c_feedback = v,
            Parameter::CAssess => out.cost.c_assess = v,
            Parameter::F => out.f = v,
        }
        out
    }

    pub fn validated(&self) -> Result<ValidatedParams> {
        if !(self.f.is_finite() && self.f >= 0.0) || !(self.a.is_finite() && self.a >= 0.0) {
            return Err(EconError::domain(
                "conditioning counts must be finite and >= 0",
            ));
        }
        validate(self.eff, self.cost)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    AStar,
    FStar,
}

/// A printed optimal-strategy formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaVariant {
    A0,
    A1,
    F1,
    A2Partial,
    A2Full,
    F2,
    F2Draft,
}

impl FormulaVariant {
    pub const ALL: [FormulaVariant; 7] = [
        FormulaVariant::A0,
        FormulaVariant::A1,
        FormulaVariant::F1,
        FormulaVariant::A2Partial,
        FormulaVariant::A2Full,
        FormulaVariant::F2,
        FormulaVariant::F2Draft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormulaVariant::A0 => "a0_star",
            FormulaVariant::A1 => "a1_star",
            FormulaVariant::F1 => "f1_star",
            FormulaVariant::A2Partial => "a2_star_partial",
            FormulaVariant::A2Full => "a2_star_full",
            FormulaVariant::F2 => "f2_star",
            FormulaVariant::F2Draft => "f2_star_draft",
        }
    }

    pub fn model(self) -> ModelKind {
        match self {
            FormulaVariant::A0 => ModelKind::Baseline,
            FormulaVariant::A1 | FormulaVariant::F1 => ModelKind::FeedbackFirst,
            _ => ModelKind::FeedbackAfter,
        }
    }

    pub fn quantity(self) -> Quantity {
        match self {
            FormulaVariant::F1 | FormulaVariant::F2 | FormulaVariant::F2Draft => Quantity::FStar,
            _ => Quantity::AStar,
        }
    }

    pub fn for_model(model: ModelKind) -> Vec<FormulaVariant> {
        FormulaVariant::ALL
            .into_iter()
            .filter(|v| v.model() == model)
            .collect()
    }

    /// Evaluates the formula; coupled formulas read their conditioning
    /// count from the point.
    pub fn evaluate(self, point: &ParamPoint) -> Result<Clamped> {
        let p = point.validated()?;
        let plain = |v: f64| Clamped {
            value: v,
            raw: v,
            corner: false,
        };
        match self {
            FormulaVariant::A0 => a0_star(&p).map(plain),
            FormulaVariant::A1 => a1_star(point.f, &p).map(plain),
            FormulaVariant::F1 => f1_star(point.a, &p),
            FormulaVariant::A2Partial => a2_star_partial(point.f, &p).map(plain),
            FormulaVariant::A2Full => a2_star_full(point.f, &p),
            FormulaVariant::F2 => f2_star(&p),
            FormulaVariant::F2Draft => f2_star_draft(point.a, &p),
        }
    }
}

impl FromStr for FormulaVariant {
    type Err = EconError;

    fn from_str(s: &str) -> Result<Self> {
        FormulaVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| EconError::Domain(format!("unknown formula {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
    #[serde(rename = "0")]
    Zero,
}

impl Sign {
    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
            Sign::Zero => "0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Published,
    Draft,
}

/// A comparative-statics statement about one optimal quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Claim {
    pub id: &'static str,
    pub model: ModelKind,
    pub quantity: Quantity,
    pub formula: FormulaVariant,
    pub parameter: Parameter,
    pub expected_sign: Sign,
    pub statement: &'static str,
    pub provenance: Provenance,
    /// The claim only speaks about strategies that give feedback.
    pub requires_feedback: bool,
    /// Audited and reported, never gating.
    pub informational: bool,
}

macro_rules! claim {
    ($id:expr, $formula:ident, $param:ident, $sign:ident, $prov:ident, $needs_f:expr, $text:expr) => {
        Claim {
            id: $id,
            model: FormulaVariant::$formula.model(),
            quantity: FormulaVariant::$formula.quantity(),
            formula: FormulaVariant::$formula,
            parameter: Parameter::$param,
            expected_sign: Sign::$sign,
            statement: $text,
            provenance: Provenance::$prov,
            requires_feedback: $needs_f,
            informational: matches!(Provenance::$prov, Provenance::Draft),
        }
    };
}

/// The fixed registry of audited claims, in stable order.
pub fn claim_registry() -> Vec<Claim> {
    vec![
        claim!("M0-1", A0, CQuery, Positive, Published, false,
            "baseline: costlier queries raise assessments per query"),
        claim!("M0-2", A0, CAssess, Negative, Published, false,
            "baseline: costlier assessments lower assessments per query"),
        claim!("M0-3", A0, Alpha, Negative, Published, false,
            "baseline: more efficient querying lowers assessments per query"),
        claim!("M0-4", A0, Beta, Positive, Published, false,
            "baseline: more efficient assessing raises assessments per query"),
        claim!("M1-1", A1, CQuery, Positive, Published, false,
            "feedback first: costlier queries raise assessments"),
        claim!("M1-2", A1, CAssess, Negative, Published, false,
            "feedback first: costlier assessments lower assessments"),
        claim!("M1-3", A1, CFeedback, Positive, Published, true,
            "feedback first: costlier feedback raises assessments when feedback is given"),
        claim!("M1-4", A1, F, Negative, Published, false,
            "feedback first: more feedback rounds lower assessments"),
        claim!("M1-5", F1, CQuery, Positive, Published, false,
            "feedback first: costlier queries raise feedback rounds"),
        claim!("M1-6", F1, CAssess, Positive, Published, false,
            "feedback first: costlier assessments raise feedback rounds"),
        claim!("M1-7", F1, CFeedback, Negative, Published, false,
            "feedback first: costlier feedback lowers feedback rounds"),
        claim!("M1-8", F1, Gamma1, Negative, Published, false,
            "feedback first: more effective feedback lowers feedback rounds"),
        claim!("M2-1", A2Partial, CFeedback, Positive, Published, true,
            "feedback after: costlier feedback raises assessments per round when feedback is given"),
        claim!("M2-2", A2Partial, CAssess, Negative, Published, false,
            "feedback after: costlier assessments lower assessments per round"),
        claim!("M2-3", A2Partial, Beta, Positive, Published, false,
            "feedback after: more efficient assessing raises assessments per round"),
        claim!("M2-4", F2, CQuery, Positive, Published, false,
            "feedback after: costlier queries raise feedback rounds"),
        claim!("M2-5", F2, CFeedback, Negative, Published, false,
            "feedback after: costlier feedback lowers feedback rounds"),
        claim!("M2-6", F2, Gamma2, Positive, Published, false,
            "feedback after: more effective feedback raises feedback rounds"),
        claim!("M2-7", F2, Alpha, Negative, Published, false,
            "feedback after: more efficient querying lowers feedback rounds"),
        claim!("M2-8", A2Partial, Gamma2, Negative, Draft, true,
            "feedback after (coupled form, unconfirmed): more effective feedback lowers assessments per round"),
        claim!("M2-9", F2Draft, Beta, Negative, Draft, false,
            "feedback after (coupled form): assessing efficiency approaching querying efficiency drives feedback down"),
        claim!("M1-9", F1, Beta, Positive, Draft, false,
            "feedback first: assessing efficiency approaching querying efficiency drives feedback up"),
    ]
}

pub fn find_claim(id: &str) -> Option<Claim> {
    claim_registry().into_iter().find(|c| c.id == id)
}

fn sign_of(plus: f64, minus: f64, x: f64, h: f64) -> Sign {
    let derivative = (plus - minus) / (2.0 * h * x);
    if derivative.abs() < FLAT_THRESHOLD {
        Sign::Zero
    } else if derivative > 0.0 {
        Sign::Positive
    } else {
        Sign::Negative
    }
}

fn perturbed(at: &ParamPoint, param: Parameter, h: f64) -> Result<(ParamPoint, ParamPoint, f64)> {
    if !(h > 0.0 && h < 1.0) {
        return Err(EconError::domain("relative step must lie in (0, 1)"));
    }
    let x = at.get(param);
    if !(x > 0.0) {
        return Err(EconError::Domain(format!(
            "{param} = {x}; a relative step needs a positive value"
        )));
    }
    let plus = at.with(param, x * (1.0 + h));
    let minus = at.with(param, x * (1.0 - h));
    plus.validated()?;
    minus.validated()?;
    Ok((plus, minus, x))
}

/// Sign of the central difference of `eval` in `param` at `at`.
pub fn finite_diff_sign(
    eval: impl Fn(&ParamPoint) -> Result<f64>,
    param: Parameter,
    at: &ParamPoint,
    h: f64,
) -> Result<Sign> {
    let (plus, minus, x) = perturbed(at, param, h)?;
    Ok(sign_of(eval(&plus)?, eval(&minus)?, x, h))
}

/// Closed interval sampled log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

/// Parameter box for the audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub alpha: Range,
    pub beta: Range,
    pub gamma1: Range,
    pub gamma2: Range,
    pub c_query: Range,
    pub c_feedback: Range,
    pub c_assess: Range,
    pub f: Range,
    pub a: Range,
}

impl Default for Region {
    fn default() -> Self {
        Region {
            alpha: Range(0.7, 0.95),
            beta: Range(0.1, 0.35),
            gamma1: Range(0.05, 0.3),
            gamma2: Range(0.4, 0.65),
            c_query: Range(5.0, 50.0),
            c_feedback: Range(0.5, 3.0),
            c_assess: Range(0.2, 2.0),
            f: Range(0.5, 8.0),
            a: Range(1.0, 30.0),
        }
    }
}

impl Region {
    fn ranges(&self) -> [(&'static str, Range); 9] {
        [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("c_query", self.c_query),
            ("c_feedback", self.c_feedback),
            ("c_assess", self.c_assess),
            ("f", self.f),
            ("a", self.a),
        ]
    }

    /// Every range must be positive and ordered, and the unit-bounded
    /// exponents must leave room for a relative step of `h`.
    pub fn validate(&self, h: f64) -> Result<()> {
        for (name, Range(lo, hi)) in self.ranges() {
            if !(lo > 0.0 && lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(EconError::Domain(format!(
                    "region range for {name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        for (name, Range(_, hi)) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma2", self.gamma2),
        ] {
            if hi * (1.0 + h) > 1.0 {
                return Err(EconError::Domain(format!(
                    "region upper bound for {name} leaves no room for the finite-difference step"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| EconError::Domain(format!("region file: {e}")))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> ParamPoint {
        let mut draw = |Range(lo, hi): Range| -> f64 {
            if lo == hi {
                return lo;
            }
            let u: f64 = rng.random();
            (lo.ln() + u * (hi.ln() - lo.ln())).exp()
        };
        let eff = EfficiencyParams {
            alpha: draw(self.alpha),
            beta: draw(self.beta),
            gamma1: draw(self.gamma1),
            gamma2: draw(self.gamma2),
        };
        let cost = CostParams {
            c_query: draw(self.c_query),
            c_feedback: draw(self.c_feedback),
            c_assess: draw(self.c_assess),
        };
        ParamPoint {
            eff,
            cost,
            f: draw(self.f),
            a: draw(self.a),
        }
    }
}

/// Settings shared by the audit and the oracle runs it triggers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub step: f64,
    /// Grid used for oracle solves inside the audit. Finite differences of
    /// the oracle need far finer final resolution than a single solve, so
    /// this trades base points for zoom rounds.
    pub oracle_grid: GridSpec,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            step: DEFAULT_STEP,
            oracle_grid: GridSpec {
                min: 1e-3,
                max: 1e4,
                points: 30,
                refinements: 9,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Holds,
    Violates(Sign),
    Flat,
    Skipped,
}

impl Outcome {
    fn observed(self) -> Option<Sign> {
        match self {
            Outcome::Holds => None,
            Outcome::Violates(s) => Some(s),
            Outcome::Flat => Some(Sign::Zero),
            Outcome::Skipped => None,
        }
    }

    fn label(self, expected: Sign) -> String {
        match self {
            Outcome::Holds => expected.symbol().to_string(),
            Outcome::Violates(s) => s.symbol().to_string(),
            Outcome::Flat => "flat".to_string(),
            Outcome::Skipped => "skipped".to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SideTally {
    pub holding: usize,
    pub violating: usize,
    pub flat_count: usize,
    pub skipped: usize,
    /// `holding / (samples − flats − skipped)`; `None` means no data.
    pub fraction_holding: Option<f64>,
}

impl SideTally {
    fn add(&mut self, o: Outcome) {
        match o {
            Outcome::Holds => self.holding += 1,
            Outcome::Violates(_) => self.violating += 1,
            Outcome::Flat => self.flat_count += 1,
            Outcome::Skipped => self.skipped += 1,
        }
    }

    fn finish(&mut self) {
        let n = self.holding + self.violating;
        self.fraction_holding = (n > 0).then(|| self.holding as f64 / n as f64);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Agrees,
    Disagrees,
    NoData,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Agrees => "AGREES",
            Verdict::Disagrees => "DISAGREES",
            Verdict::NoData => "NO_DATA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub sample: usize,
    pub point: ParamPoint,
    pub formula_sign: String,
    pub oracle_sign: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimResult {
    pub id: String,
    pub model: ModelKind,
    pub quantity: Quantity,
    pub formula_variant: FormulaVariant,
    pub parameter: Parameter,
    pub expected_sign: Sign,
    pub provenance: Provenance,
    pub informational: bool,
    pub statement: String,
    pub formula: SideTally,
    pub oracle: SideTally,
    /// Whether the printed formula and the oracle support the claim to the
    /// same extent.
    pub verdict: Verdict,
    pub counterexamples: Vec<Counterexample>,
}

/// How often a printed formula reproduces the oracle's optimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormulaAgreement {
    pub formula: FormulaVariant,
    pub model: ModelKind,
    pub evaluated: usize,
    pub agreeing: usize,
    pub skipped: usize,
    pub fraction_agreeing: Option<f64>,
    pub median_relative_error: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimAuditReport {
    pub seed: u64,
    pub samples: usize,
    pub gain_target: f64,
    pub config: AuditConfig,
    pub region: Region,
    pub claims: Vec<ClaimResult>,
    pub formulas: Vec<FormulaAgreement>,
}

impl ClaimAuditReport {
    pub fn claim(&self, id: &str) -> Option<&ClaimResult> {
        self.claims.iter().find(|c| c.id == id)
    }

    pub fn formula(&self, v: FormulaVariant) -> Option<&FormulaAgreement> {
        self.formulas.iter().find(|f| f.formula == v)
    }

    /// Aligned text table, one claim per row.
    pub fn render_text(&self) -> String {
        let frac = |t: &SideTally| {
            t.fraction_holding
                .map_or_else(|| "no data".to_string(), |f| format!("{f:.3}"))
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "claim audit: {} samples, seed {}, gain target {}",
            self.samples, self.seed, self.gain_target
        );
        let _ = writeln!(
            out,
            "{:<5} {:<3} {:>8} {:>8} {:<9} statement",
            "id", "exp", "formula", "oracle", "verdict"
        );
        for c in &self.claims {
            let _ = writeln!(
                out,
                "{:<5} {:<3} {:>8} {:>8} {:<9} {}{}",
                c.id,
                c.expected_sign.symbol(),
                frac(&c.formula),
                frac(&c.oracle),
                c.verdict.label(),
                c.statement,
                if c.informational {
                    " [informational]"
                } else {
                    ""
                }
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<16} {:<3} {:>9} {:>10} {:<9}",
            "formula", "mdl", "agreeing", "median-err", "verdict"
        );
        for f in &self.formulas {
            let _ = writeln!(
                out,
                "{:<16} {:<3} {:>9} {:>10} {:<9}",
                f.formula.name(),
                f.model.code(),
                f.fraction_agreeing
                    .map_or_else(|| "no data".to_string(), |x| format!("{x:.3}")),
                f.median_relative_error
                    .map_or_else(|| "-".to_string(), |x| format!("{x:.2e}")),
                f.verdict.label()
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Side {
    Base,
    Plus,
    Minus,
}

type SolveKey = (ModelKind, Option<Parameter>, Side);

/// Oracle solutions for one sample, computed on demand.
struct SampleSolver<'a> {
    point: ParamPoint,
    g: GainTarget,
    config: &'a AuditConfig,
    cache: HashMap<SolveKey, Option<OptimalStrategy>>,
}

impl SampleSolver<'_> {
    fn solve(
        &mut self,
        model: ModelKind,
        param: Option<Parameter>,
        side: Side,
    ) -> Option<OptimalStrategy> {
        let key = (model, param, side);
        if let Some(hit) = self.cache.get(&key) {
            return *hit;
        }
        let sol = self.compute(model, param, side).ok();
        self.cache.insert(key, sol);
        sol
    }

    fn compute(
        &self,
        model: ModelKind,
        param: Option<Parameter>,
        side: Side,
    ) -> Result<OptimalStrategy> {
        let point = match (param, side) {
            (Some(p), Side::Plus) => perturbed(&self.point, p, self.config.step)?.0,
            (Some(p), Side::Minus) => perturbed(&self.point, p, self.config.step)?.1,
            _ => self.point,
        };
        let vp = point.validated()?;
        let grid = &self.config.oracle_grid;
        if param == Some(Parameter::F) {
            minimize_cost_at_feedback(model, &vp, self.g, point.f, grid)
        } else {
            minimize_cost(model, &vp, self.g, grid)
        }
    }
}

fn formula_outcome(claim: &Claim, point: &ParamPoint, h: f64) -> Outcome {
    let Ok((plus, minus, x)) = perturbed(point, claim.parameter, h) else {
        return Outcome::Skipped;
    };
    let (Ok(vp), Ok(vm)) = (
        claim.formula.evaluate(&plus),
        claim.formula.evaluate(&minus),
    ) else {
        return Outcome::Skipped;
    };
    if vp.corner || vm.corner {
        return Outcome::Flat;
    }
    classify(sign_of(vp.value, vm.value, x, h), claim.expected_sign)
}

fn oracle_outcome(claim: &Claim, solver: &mut SampleSolver<'_>, h: f64) -> Outcome {
    let param = Some(claim.parameter);
    let plus = solver.solve(claim.model, param, Side::Plus);
    let minus = solver.solve(claim.model, param, Side::Minus);
    let (Some(plus), Some(minus)) = (plus, minus) else {
        return Outcome::Skipped;
    };
    let corner = plus.grid_meta.feedback_corner || minus.grid_meta.feedback_corner;
    if corner && (claim.quantity == Quantity::FStar || claim.requires_feedback) {
        return Outcome::Flat;
    }
    let pick = |s: &OptimalStrategy| match claim.quantity {
        Quantity::AStar => s.strategy.a,
        Quantity::FStar => s.strategy.f,
    };
    let x = solver.point.get(claim.parameter);
    classify(
        sign_of(pick(&plus), pick(&minus), x, h),
        claim.expected_sign,
    )
}

fn classify(observed: Sign, expected: Sign) -> Outcome {
    if observed == Sign::Zero {
        Outcome::Flat
    } else if observed == expected {
        Outcome::Holds
    } else {
        Outcome::Violates(observed)
    }
}

/// Printed formula vs oracle component at the oracle's own optimum.
/// Returns `(agrees, relative_error)` or `None` when either side fails.
fn formula_vs_oracle(v: FormulaVariant, solver: &mut SampleSolver<'_>) -> Option<(bool, f64)> {
    let sol = solver.solve(v.model(), None, Side::Base)?;
    let oracle_f = if sol.grid_meta.feedback_corner {
        0.0
    } else {
        sol.strategy.f
    };
    let at = ParamPoint {
        f: oracle_f,
        a: sol.strategy.a,
        ..solver.point
    };
    let printed = v.evaluate(&at).ok()?.value;
    let oracle = match v.quantity() {
        Quantity::AStar => sol.strategy.a,
        Quantity::FStar => oracle_f,
    };
    let scale = printed.abs().max(oracle.abs()).max(1.0);
    let err = (printed - oracle).abs() / scale;
    Some((err <= VALUE_AGREEMENT_TOL, err))
}

struct SampleResult {
    claims: Vec<(Outcome, Outcome)>,
    formulas: Vec<Option<(bool, f64)>>,
}

fn audit_sample(
    index: usize,
    region: &Region,
    seed: u64,
    g: GainTarget,
    config: &AuditConfig,
    claims: &[Claim],
) -> (ParamPoint, SampleResult) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let point = region.sample(&mut rng);
    let mut solver = SampleSolver {
        point,
        g,
        config,
        cache: HashMap::new(),
    };
    let claim_outcomes = claims
        .iter()
        .map(|c| {
            (
                formula_outcome(c, &point, config.step),
                oracle_outcome(c, &mut solver, config.step),
            )
        })
        .collect();
    let formulas = FormulaVariant::ALL
        .into_iter()
        .map(|v| formula_vs_oracle(v, &mut solver))
        .collect();
    (
        point,
        SampleResult {
            claims: claim_outcomes,
            formulas,
        },
    )
}

fn fraction_verdict(formula: &SideTally, oracle: &SideTally) -> Verdict {
    match (formula.fraction_holding, oracle.fraction_holding) {
        (Some(a), Some(b)) if (a - b).abs() <= FRACTION_AGREEMENT_TOL => Verdict::Agrees,
        (Some(_), Some(_)) => Verdict::Disagrees,
        _ => Verdict::NoData,
    }
}

/// Audits every registry claim over `samples` log-uniform draws from
/// `region`. Deterministic for fixed `(region, samples, seed, g, config)`.
pub fn audit_claims(
    region: &Region,
    samples: usize,
    seed: u64,
    g: GainTarget,
    config: &AuditConfig,
) -> Result<ClaimAuditReport> {
    region.validate(config.step)?;
    config.oracle_grid.validate()?;
    if !(config.step > 0.0 && config.step < 1.0) {
        return Err(EconError::domain("relative step must lie in (0, 1)"));
    }
    let claims = claim_registry();
    let per_sample: Vec<(ParamPoint, SampleResult)> = (0..samples)
        .into_par_iter()
        .map(|i| audit_sample(i, region, seed, g, config, &claims))
        .collect();

    let claim_results = claims
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut formula = SideTally::default();
            let mut oracle = SideTally::default();
            let mut counterexamples = Vec::new();
            for (i, (point, res)) in per_sample.iter().enumerate() {
                let (fo, oo) = res.claims[k];
                formula.add(fo);
                oracle.add(oo);
                let violated =
                    matches!(fo, Outcome::Violates(_)) || matches!(oo, Outcome::Violates(_));
                if violated && counterexamples.len() < MAX_COUNTEREXAMPLES {
                    debug_assert!(fo.observed().is_some() || oo.observed().is_some());
                    counterexamples.push(Counterexample {
                        sample: i,
                        point: *point,
                        formula_sign: fo.label(c.expected_sign),
                        oracle_sign: oo.label(c.expected_sign),
                    });
                }
            }
            formula.finish();
            oracle.finish();
            ClaimResult {
                id: c.id.to_string(),
                model: c.model,
                quantity: c.quantity,
                formula_variant: c.formula,
                parameter: c.parameter,
                expected_sign: c.expected_sign,
                provenance: c.provenance,
                informational: c.informational,
                statement: c.statement.to_string(),
                verdict: fraction_verdict(&formula, &oracle),
                formula,
                oracle,
                counterexamples,
            }
        })
        .collect();

    let formulas = FormulaVariant::ALL
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            let mut errors: Vec<f64> = Vec::new();
            let mut agreeing = 0;
            let mut skipped = 0;
            for (_, res) in &per_sample {
                match res.formulas[k] {
                    Some((ok, err)) => {
                        agreeing += usize::from(ok);
                        errors.push(err);
                    }
                    None => skipped += 1,
                }
            }
            let evaluated = errors.len();
            errors.sort_by(f64::total_cmp);
            let fraction = (evaluated > 0).then(|| agreeing as f64 / evaluated as f64);
            FormulaAgreement {
                formula: v,
                model: v.model(),
                evaluated,
                agreeing,
                skipped,
                fraction_agreeing: fraction,
                median_relative_error: (evaluated > 0).then(|| errors[evaluated / 2]),
                verdict: match fraction {
                    None => Verdict::NoData,
                    Some(x) if x >= FORMULA_AGREEMENT_SHARE => Verdict::Agrees,
                    Some(_) => Verdict::Disagrees,
                },
            }
        })
        .collect();

    Ok(ClaimAuditReport {
        seed,
        samples,
        gain_target: g.value(),
        config: *config,
        region: *region,
        claims: claim_results,
        formulas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    /// One entry per requested formula, in request order.
    pub formulas: Vec<f64>,
    pub oracle_f: f64,
    pub oracle_a: f64,
    pub total_cost: f64,
    pub achieved_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub model: ModelKind,
    pub parameter: Parameter,
    pub formulas: Vec<FormulaVariant>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// CSV with a header row; `.` decimal separator, no grouping.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(self.parameter.name());
        for v in &self.formulas {
            out.push(',');
            out.push_str(v.name());
        }
        out.push_str(",oracle_f,oracle_a,total_cost,achieved_gain\n");
        for r in &self.rows {
            let _ = write!(out, "{}", r.value);
            for x in &r.formulas {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(
                out,
                ",{},{},{},{}",
                r.oracle_f, r.oracle_a, r.total_cost, r.achieved_gain
            );
        }
        out
    }

    pub fn column(&self, v: FormulaVariant) -> Option<Vec<f64>> {
        let k = self.formulas.iter().position(|x| *x == v)?;
        Some(self.rows.iter().map(|r| r.formulas[k]).collect())
    }
}

/// Sweeps one parameter over an evenly spaced grid from `lo` to `hi`.
///
/// Each row carries the requested printed formulas and the oracle optimum.
/// Coupled formulas are evaluated at the oracle's other component, except
/// that a sweep over `f` holds the feedback rounds at the swept value and
/// runs the oracle conditionally on them.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    model: ModelKind,
    base: &ValidatedParams,
    vary: Parameter,
    lo: f64,
    hi: f64,
    steps: usize,
    g: GainTarget,
    formulas: &[FormulaVariant],
    grid: &GridSpec,
) -> Result<SweepTable> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(EconError::domain("sweep needs finite lo < hi"));
    }
    if steps < 2 {
        return Err(EconError::domain("sweep needs at least 2 steps"));
    }
    if let Some(v) = formulas.iter().find(|v| v.model() != model) {
        return Err(EconError::Domain(format!(
            "formula {} does not belong to model {model}",
            v.name()
        )));
    }
    if vary == Parameter::F && model == ModelKind::Baseline {
        return Err(EconError::domain(
            "the baseline has no feedback rounds to sweep",
        ));
    }
    let rows = (0..steps)
        .into_par_iter()
        .map(|i| {
            let value = if i + 1 == steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (steps - 1) as f64
            };
            let point = ParamPoint::new(base, 0.0, 0.0).with(vary, value);
            let vp = point.validated()?;
            let sol = if vary == Parameter::F {
                minimize_cost_at_feedback(model, &vp, g, value, grid)?
            } else {
                minimize_cost(model, &vp, g, grid)?
            };
            let at = ParamPoint {
                f: if vary == Parameter::F {
                    value
                } else {
                    sol.strategy.f
                },
                a: sol.strategy.a,
                ..point
            };
            let values = formulas
                .iter()
                .map(|v| v.evaluate(&at).map(|c| c.value))
                .collect::<Result<Vec<f64>>>()?;
            Ok(SweepRow {
                value,
                formulas: values,
                oracle_f: sol.strategy.f,
                oracle_a: sol.strategy.a,
                total_cost: sol.total_cost,
                achieved_gain: sol.achieved_gain,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        model,
        parameter: vary,
        formulas: formulas.to_vec(),
        rows,
    })
}
