//! Domain types and the gain and cost functions of the three interaction
//! models.
//!
//! * Baseline: a query is followed by `A` assessments.
//! * Feedback first: each query is refined by `F` feedback rounds before the
//!   results are assessed. Feedback raises the query exponent to `γ₁F + α`.
//! * Feedback after: each query is assessed, then `F` rounds of feedback each
//!   bring another `A` results. Feedback multiplies gain by `(1+F)^γ₂`.
//!
//! Counts are continuous non-negative reals; `0^0` evaluates to 1 so the
//! empty strategy is defined.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{EconError, Result};

/// Efficiency exponents of querying, assessing and the two feedback forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

/// Unit costs of a query, a feedback round and an assessment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub c_query: f64,
    pub c_feedback: f64,
    pub c_assess: f64,
}

impl EfficiencyParams {
    pub fn validate(&self) -> Result<()> {
        check_finite("alpha", self.alpha)?;
        check_finite("beta", self.beta)?;
        check_finite("gamma1", self.gamma1)?;
        check_finite("gamma2", self.gamma2)?;
        if self.alpha <= 0.0 {
            return Err(EconError::domain("alpha must be > 0"));
        }
        if self.alpha > 1.0 {
            return Err(EconError::domain("alpha must be <= 1"));
        }
        if self.beta <= 0.0 {
            return Err(EconError::domain("beta must be > 0"));
        }
        if self.beta > 1.0 {
            return Err(EconError::domain("beta must be <= 1"));
        }
        if self.gamma1 < 0.0 {
            return Err(EconError::domain("gamma1 must be >= 0"));
        }
        if self.gamma2 < 0.0 {
            return Err(EconError::domain("gamma2 must be >= 0"));
        }
        if self.gamma2 > 1.0 {
            return Err(EconError::domain("gamma2 must be <= 1"));
        }
        Ok(())
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_query", self.c_query),
            ("c_feedback", self.c_feedback),
            ("c_assess", self.c_assess),
        ] {
            check_finite(name, v)?;
            if v <= 0.0 {
                return Err(EconError::Domain(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(EconError::Domain(format!("{name} must be finite")))
    }
}

/// A parameter pair that has passed validation.
///
/// Only [`validate`] constructs one, so every downstream operation can rely
/// on the invariants without re-checking them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidatedParams {
    eff: EfficiencyParams,
    cost: CostParams,
}

impl ValidatedParams {
    pub fn eff(&self) -> &EfficiencyParams {
        &self.eff
    }

    pub fn cost(&self) -> &CostParams {
        &self.cost
    }
}

pub fn validate(eff: EfficiencyParams, cost: CostParams) -> Result<ValidatedParams> {
    eff.validate()?;
    cost.validate()?;
    Ok(ValidatedParams { eff, cost })
}

/// On-disk parameter file: one flat JSON object, every field required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub c_query: f64,
    pub c_feedback: f64,
    pub c_assess: f64,
}

impl ParamsFile {
    pub fn split(&self) -> (EfficiencyParams, CostParams) {
        (
            EfficiencyParams {
                alpha: self.alpha,
                beta: self.beta,
                gamma1: self.gamma1,
                gamma2: self.gamma2,
            },
            CostParams {
                c_query: self.c_query,
                c_feedback: self.c_feedback,
                c_assess: self.c_assess,
            },
        )
    }

    pub fn validated(&self) -> Result<ValidatedParams> {
        let (eff, cost) = self.split();
        validate(eff, cost)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| EconError::Domain(format!("parameter file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EconError::Domain(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| EconError::Domain(format!("{}: {e}", path.display())))
    }
}

impl From<&ValidatedParams> for ParamsFile {
    fn from(p: &ValidatedParams) -> Self {
        ParamsFile {
            alpha: p.eff.alpha,
            beta: p.eff.beta,
            gamma1: p.eff.gamma1,
            gamma2: p.eff.gamma2,
            c_query: p.cost.c_query,
            c_feedback: p.cost.c_feedback,
            c_assess: p.cost.c_assess,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "m0")]
    Baseline,
    #[serde(rename = "m1")]
    FeedbackFirst,
    #[serde(rename = "m2")]
    FeedbackAfter,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::Baseline,
        ModelKind::FeedbackFirst,
        ModelKind::FeedbackAfter,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ModelKind::Baseline => "m0",
            ModelKind::FeedbackFirst => "m1",
            ModelKind::FeedbackAfter => "m2",
        }
    }

    pub fn has_feedback(self) -> bool {
        !matches!(self, ModelKind::Baseline)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ModelKind {
    type Err = EconError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m0" | "baseline" => Ok(ModelKind::Baseline),
            "m1" | "feedback-first" | "feedbackfirst" => Ok(ModelKind::FeedbackFirst),
            "m2" | "feedback-after" | "feedbackafter" => Ok(ModelKind::FeedbackAfter),
            other => Err(EconError::Domain(format!(
                "unknown model {other:?} (expected m0, m1 or m2)"
            ))),
        }
    }
}

/// A point `(Q, F, A)` under one of the models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub model: ModelKind,
    pub q: f64,
    pub f: f64,
    pub a: f64,
}

impl Strategy {
    pub fn new(model: ModelKind, q: f64, f: f64, a: f64) -> Result<Self> {
        let s = Strategy { model, q, f, a };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("q", self.q), ("f", self.f), ("a", self.a)] {
            if !v.is_finite() || v < 0.0 {
                return Err(EconError::Domain(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.model == ModelKind::Baseline && self.f != 0.0 {
            return Err(EconError::domain("baseline strategies must have f = 0"));
        }
        Ok(())
    }

    pub fn is_integral(&self) -> bool {
        [self.q, self.f, self.a].iter().all(|v| v.fract() == 0.0)
    }
}

/// Desired level of gain; strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GainTarget(f64);

impl GainTarget {
    pub fn new(g: f64) -> Result<Self> {
        if g.is_finite() && g > 0.0 {
            Ok(GainTarget(g))
        } else {
            Err(EconError::Domain(format!(
                "gain target must be finite and > 0, got {g}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Query-efficiency exponent under feedback first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueryExponent {
    pub value: f64,
    /// Set when the exponent exceeds 1, i.e. querying has become
    /// super-linear. Not an error.
    pub super_linear: bool,
}

/// `Γ(f) = γ₁·f + α`.
pub fn gamma_fn(f: f64, eff: &EfficiencyParams) -> QueryExponent {
    let value = eff.gamma1 * f + eff.alpha;
    QueryExponent {
        value,
        super_linear: value > 1.0,
    }
}

pub fn gain(s: &Strategy, eff: &EfficiencyParams) -> f64 {
    match s.model {
        ModelKind::Baseline => s.q.powf(eff.alpha) * s.a.powf(eff.beta),
        ModelKind::FeedbackFirst => s.q.powf(gamma_fn(s.f, eff).value) * s.a.powf(eff.beta),
        ModelKind::FeedbackAfter => {
            s.q.powf(eff.alpha) * (1.0 + s.f).powf(eff.gamma2) * s.a.powf(eff.beta)
        }
    }
}

pub fn cost(s: &Strategy, c: &CostParams) -> f64 {
    match s.model {
        ModelKind::Baseline => s.q * c.c_query + s.q * s.a * c.c_assess,
        ModelKind::FeedbackFirst => {
            s.q * c.c_query + s.q * s.f * c.c_feedback + s.q * s.a * c.c_assess
        }
        ModelKind::FeedbackAfter => {
            s.q * c.c_query + s.q * s.f * c.c_feedback + s.q * (1.0 + s.f) * s.a * c.c_assess
        }
    }
}

#[cfg(test)]
mod tests {
    use super::Strategy as Point;
    use super::*;
    use proptest::prelude::*;
    use proptest::strategy::Strategy;

    fn eff(alpha: f64, beta: f64, gamma1: f64, gamma2: f64) -> EfficiencyParams {
        EfficiencyParams {
            alpha,
            beta,
            gamma1,
            gamma2,
        }
    }

    fn costs(c_query: f64, c_feedback: f64, c_assess: f64) -> CostParams {
        CostParams {
            c_query,
            c_feedback,
            c_assess,
        }
    }

    fn rel_close(x: f64, y: f64, tol: f64) -> bool {
        (x - y).abs() <= tol * x.abs().max(y.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn validate_accepts_typical_params() {
        assert!(validate(eff(0.9, 0.3, 0.1, 0.5), costs(10.0, 2.0, 1.0)).is_ok());
    }

    #[test]
    fn validate_names_violated_field() {
        let err = validate(eff(0.0, 0.3, 0.1, 0.5), costs(10.0, 2.0, 1.0)).unwrap_err();
        assert_eq!(err, EconError::domain("alpha must be > 0"));
        let err = validate(eff(0.9, 0.3, 0.1, 0.5), costs(10.0, 2.0, -1.0)).unwrap_err();
        assert_eq!(err, EconError::domain("c_assess must be > 0"));
        assert!(validate(eff(0.9, 1.2, 0.1, 0.5), costs(1.0, 1.0, 1.0)).is_err());
        assert!(validate(eff(0.9, 0.3, -0.1, 0.5), costs(1.0, 1.0, 1.0)).is_err());
        assert!(validate(eff(0.9, 0.3, 0.1, 1.5), costs(1.0, 1.0, 1.0)).is_err());
        assert!(validate(eff(0.9, 0.3, 0.1, 0.5), costs(f64::INFINITY, 1.0, 1.0)).is_err());
        assert!(validate(eff(f64::NAN, 0.3, 0.1, 0.5), costs(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn ideal_exponents_are_allowed() {
        assert!(validate(eff(1.0, 1.0, 0.0, 1.0), costs(1.0, 1.0, 1.0)).is_ok());
    }

    #[test]
    fn gamma_fn_values() {
        assert_eq!(gamma_fn(0.0, &eff(0.6, 0.3, 0.1, 0.5)).value, 0.6);
        assert!((gamma_fn(2.0, &eff(0.6, 0.3, 0.1, 0.5)).value - 0.8).abs() < 1e-15);
        assert_eq!(gamma_fn(5.0, &eff(0.7, 0.3, 0.0, 0.5)).value, 0.7);
        assert!(!gamma_fn(2.0, &eff(0.6, 0.3, 0.1, 0.5)).super_linear);
        assert!(gamma_fn(5.0, &eff(0.9, 0.3, 0.1, 0.5)).super_linear);
    }

    #[test]
    fn gain_examples() {
        let s = Point::new(ModelKind::Baseline, 2.0, 0.0, 3.0).unwrap();
        assert_eq!(gain(&s, &eff(1.0, 1.0, 0.0, 0.0)), 6.0);

        let s = Point::new(ModelKind::FeedbackAfter, 4.0, 0.0, 2.0).unwrap();
        let g = gain(&s, &eff(0.5, 0.5, 0.0, 0.7));
        assert!(rel_close(g, 2.0 * 2f64.sqrt(), 1e-12));
        assert!((g - 2.828427).abs() < 1e-6);

        let s = Point::new(ModelKind::FeedbackFirst, 10.0, 2.0, 1.0).unwrap();
        let g = gain(&s, &eff(0.6, 0.5, 0.1, 0.0));
        assert!((g - 6.309573).abs() < 1e-6);
    }

    #[test]
    fn zero_strategy_is_defined() {
        let s = Point::new(ModelKind::FeedbackAfter, 0.0, 0.0, 0.0).unwrap();
        let g = gain(&s, &eff(0.5, 0.5, 0.0, 0.5));
        assert!(g.is_finite());
        assert_eq!(cost(&s, &costs(1.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn cost_examples() {
        let c = costs(10.0, 2.0, 2.0);
        let s = Point::new(ModelKind::Baseline, 2.0, 0.0, 3.0).unwrap();
        assert_eq!(cost(&s, &c), 32.0);

        let c = costs(10.0, 2.0, 1.0);
        let s = Point::new(ModelKind::FeedbackFirst, 2.0, 3.0, 4.0).unwrap();
        assert_eq!(cost(&s, &c), 40.0);
        let s = Point::new(ModelKind::FeedbackAfter, 2.0, 3.0, 4.0).unwrap();
        assert_eq!(cost(&s, &c), 64.0);
    }

    #[test]
    fn baseline_rejects_feedback() {
        assert!(Point::new(ModelKind::Baseline, 1.0, 1.0, 1.0).is_err());
        assert!(Point::new(ModelKind::FeedbackAfter, -1.0, 0.0, 1.0).is_err());
        assert!(Point::new(ModelKind::FeedbackAfter, 1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn gain_target_rejects_non_positive() {
        assert!(GainTarget::new(0.0).is_err());
        assert!(GainTarget::new(-3.0).is_err());
        assert!(GainTarget::new(f64::INFINITY).is_err());
        assert_eq!(GainTarget::new(100.0).unwrap().value(), 100.0);
    }

    #[test]
    fn params_file_rejects_unknown_and_missing_fields() {
        let ok = r#"{"alpha":0.9,"beta":0.3,"gamma1":0.1,"gamma2":0.5,"c_query":10,"c_feedback":2,"c_assess":1}"#;
        let p = ParamsFile::from_json(ok).unwrap();
        assert!(p.validated().is_ok());
        let extra = r#"{"alpha":0.9,"beta":0.3,"gamma1":0.1,"gamma2":0.5,"c_query":10,"c_feedback":2,"c_assess":1,"delta":1}"#;
        assert!(ParamsFile::from_json(extra).is_err());
        let missing =
            r#"{"alpha":0.9,"beta":0.3,"gamma1":0.1,"c_query":10,"c_feedback":2,"c_assess":1}"#;
        assert!(ParamsFile::from_json(missing).is_err());
    }

    #[test]
    fn model_kind_parses_codes() {
        assert_eq!("m0".parse::<ModelKind>().unwrap(), ModelKind::Baseline);
        assert_eq!("M2".parse::<ModelKind>().unwrap(), ModelKind::FeedbackAfter);
        assert!("m3".parse::<ModelKind>().is_err());
        assert_eq!(
            serde_json::to_string(&ModelKind::FeedbackFirst).unwrap(),
            "\"m1\""
        );
    }

    fn arb_eff() -> impl Strategy<Value = EfficiencyParams> {
        (0.05f64..=1.0, 0.05f64..=1.0, 0.0f64..0.5, 0.0f64..=1.0).prop_map(|(a, b, g1, g2)| {
            EfficiencyParams {
                alpha: a,
                beta: b,
                gamma1: g1,
                gamma2: g2,
            }
        })
    }

    fn arb_cost() -> impl Strategy<Value = CostParams> {
        (0.01f64..100.0, 0.01f64..100.0, 0.01f64..100.0).prop_map(|(q, f, a)| CostParams {
            c_query: q,
            c_feedback: f,
            c_assess: a,
        })
    }

    proptest! {
        #[test]
        fn feedback_models_reduce_to_baseline(e in arb_eff(), c in arb_cost(),
                                              q in 0.01f64..1e4, a in 0.01f64..1e3) {
            let base = Point::new(ModelKind::Baseline, q, 0.0, a).unwrap();
            let g0 = gain(&base, &e);
            let c0 = cost(&base, &c);
            for m in [ModelKind::FeedbackFirst, ModelKind::FeedbackAfter] {
                let s = Point::new(m, q, 0.0, a).unwrap();
                prop_assert!(rel_close(gain(&s, &e), g0, 1e-12));
                prop_assert!(rel_close(cost(&s, &c), c0, 1e-12));
            }
        }

        #[test]
        fn gain_is_monotone_and_diminishing(e in arb_eff(), q in 0.1f64..1e3,
                                             f in 0.1f64..10.0, a in 0.1f64..100.0) {
            for m in ModelKind::ALL {
                let f = if m == ModelKind::Baseline { 0.0 } else { f };
                let s = Point::new(m, q, f, a).unwrap();
                let g = gain(&s, &e);
                let more_q = gain(&Point { q: q * 2.0, ..s }, &e);
                let more_a = gain(&Point { a: a * 2.0, ..s }, &e);
                prop_assert!(more_q > g);
                prop_assert!(more_a > g);
                if e.beta < 1.0 {
                    prop_assert!(more_a < 2.0 * g);
                }
                if m != ModelKind::FeedbackFirst && e.alpha < 1.0 {
                    prop_assert!(more_q < 2.0 * g);
                }
                if m == ModelKind::FeedbackAfter && e.gamma2 > 0.0 {
                    let more_f = gain(&Point { f: f + 1.0, ..s }, &e);
                    prop_assert!(more_f > g);
                }
            }
        }

        #[test]
        fn homogeneity_in_queries(e in arb_eff(), c in arb_cost(), q in 0.1f64..1e3,
                                  f in 0.0f64..10.0, a in 0.1f64..100.0, k in 0.1f64..10.0) {
            for m in [ModelKind::Baseline, ModelKind::FeedbackAfter] {
                let f = if m == ModelKind::Baseline { 0.0 } else { f };
                let s = Point::new(m, q, f, a).unwrap();
                let scaled = Point { q: k * q, ..s };
                prop_assert!(rel_close(gain(&scaled, &e), k.powf(e.alpha) * gain(&s, &e), 1e-12));
                prop_assert!(rel_close(cost(&scaled, &c), k * cost(&s, &c), 1e-12));
            }
        }

        #[test]
        fn cost_increases_in_counts_and_prices(c in arb_cost(), q in 0.1f64..1e3,
                                               f in 0.1f64..10.0, a in 0.1f64..100.0) {
            for m in [ModelKind::FeedbackFirst, ModelKind::FeedbackAfter] {
                let s = Point::new(m, q, f, a).unwrap();
                let base = cost(&s, &c);
                let bigger = [
                    Point { q: q * 1.5, ..s },
                    Point { f: f * 1.5, ..s },
                    Point { a: a * 1.5, ..s },
                ];
                for b in bigger {
                    prop_assert!(cost(&b, &c) > base);
                }
                let dearer = [
                    CostParams { c_query: c.c_query * 1.5, ..c },
                    CostParams { c_feedback: c.c_feedback * 1.5, ..c },
                    CostParams { c_assess: c.c_assess * 1.5, ..c },
                ];
                for d in dearer {
                    prop_assert!(cost(&s, &d) > base);
                }
            }
        }
    }
}
