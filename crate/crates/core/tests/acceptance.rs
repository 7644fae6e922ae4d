//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use convecon::closed_form::{a0_star, f2_star, recover_q};
use convecon::oracle::{minimize_cost, GridSpec};
use convecon::sessions::{
    expected_counts, fit_cost_params, fit_gain_params, random_design, simulate, simulate_design,
    viability,
};
use convecon::statics::{audit_claims, AuditConfig, FormulaVariant, Region, Verdict};
use convecon::{
    cost, gain, validate, CostParams, EfficiencyParams, GainTarget, ModelKind, Strategy,
    ValidatedParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs()
}

fn params(alpha: f64, beta: f64, g1: f64, g2: f64, cq: f64, cf: f64, ca: f64) -> ValidatedParams {
    validate(
        EfficiencyParams {
            alpha,
            beta,
            gamma1: g1,
            gamma2: g2,
        },
        CostParams {
            c_query: cq,
            c_feedback: cf,
            c_assess: ca,
        },
    )
    .expect("valid parameters")
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn random_params(rng: &mut ChaCha8Rng) -> ValidatedParams {
    let alpha = rng.random_range(0.3..1.0);
    let beta = rng.random_range(0.05..alpha);
    params(
        alpha,
        beta,
        rng.random_range(0.0..0.5),
        rng.random_range(0.0..1.0),
        log_uniform(rng, 0.1, 100.0),
        log_uniform(rng, 0.1, 100.0),
        log_uniform(rng, 0.1, 100.0),
    )
}

fn reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = random_params(&mut rng);
        let q = log_uniform(&mut rng, 1e-2, 1e4);
        let a = log_uniform(&mut rng, 1e-2, 1e4);
        let base = Strategy::new(ModelKind::Baseline, q, 0.0, a).unwrap();
        let (g0, c0) = (gain(&base, p.eff()), cost(&base, p.cost()));
        for m in [ModelKind::FeedbackFirst, ModelKind::FeedbackAfter] {
            let s = Strategy::new(m, q, 0.0, a).unwrap();
            worst = worst
                .max(rel(gain(&s, p.eff()), g0))
                .max(rel(cost(&s, p.cost()), c0));
        }
    }
    check(worst <= 1e-12, || format!("worst relative gap {worst:e}"))?;
    Ok(format!("1000 draws, worst relative gap {worst:e}"))
}

/// Draws parameters whose baseline optimum lies well inside the default grid.
fn baseline_instance(rng: &mut ChaCha8Rng, g: GainTarget) -> ValidatedParams {
    loop {
        let p = random_params(rng);
        if p.eff().alpha - p.eff().beta < 0.05 {
            continue;
        }
        let Ok(a) = a0_star(&p) else { continue };
        let Ok(q) = recover_q(g, 0.0, a, ModelKind::Baseline, &p) else {
            continue;
        };
        if (1e-2..=1e3).contains(&a) && (1e-2..=1e3).contains(&q) {
            return p;
        }
    }
}

fn baseline_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = GainTarget::new(100.0).unwrap();
    let (mut worst_a, mut worst_kkt): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let p = baseline_instance(&mut rng, g);
        let sol = minimize_cost(ModelKind::Baseline, &p, g, &GridSpec::default())
            .map_err(|e| e.to_string())?;
        worst_a = worst_a.max(rel(sol.strategy.a, a0_star(&p).unwrap()));
        worst_kkt = worst_kkt.max(sol.kkt.residual_max);
    }
    check(worst_a <= 1e-3 && worst_kkt <= 1e-3, || {
        format!("worst A error {worst_a:e}, worst KKT residual {worst_kkt:e}")
    })?;
    Ok(format!(
        "50 instances, worst A error {worst_a:.2e}, worst KKT residual {worst_kkt:.2e}"
    ))
}

fn expansion_path() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let targets = [10.0, 100.0, 1000.0].map(|g| GainTarget::new(g).unwrap());
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        // Feedback after needs alpha > gamma2 for a bounded optimum.
        let p = loop {
            let p = baseline_instance(&mut rng, targets[1]);
            if p.eff().alpha - p.eff().gamma2 < 0.02 {
                continue;
            }
            if f2_star(&p).is_ok_and(|f| f.raw <= 1e3) {
                break p;
            }
        };
        for model in [ModelKind::Baseline, ModelKind::FeedbackAfter] {
            let a: Vec<f64> = targets
                .iter()
                .map(|&g| minimize_cost(model, &p, g, &GridSpec::default()).map(|s| s.strategy.a))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            for x in &a[1..] {
                worst = worst.max(rel(*x, a[0]));
            }
        }
    }
    check(worst < 1e-3, || format!("A varies by {worst:e} across G"))?;
    Ok(format!(
        "10 instances x 2 models x G in {{10,100,1000}}, max A spread {worst:.2e}"
    ))
}

fn published_f2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = GainTarget::new(100.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    while accepted < 25 {
        let beta = rng.random_range(0.05..0.5);
        let gamma2 = rng.random_range(beta + 0.02..0.9);
        let alpha = rng.random_range(gamma2 + 0.02..1.0);
        let p = params(
            alpha,
            beta,
            0.1,
            gamma2,
            log_uniform(&mut rng, 0.5, 50.0),
            log_uniform(&mut rng, 0.1, 10.0),
            log_uniform(&mut rng, 0.1, 10.0),
        );
        let f = f2_star(&p).unwrap();
        if f.corner || !(1e-2..=1e3).contains(&f.raw) {
            continue;
        }
        let sol = minimize_cost(ModelKind::FeedbackAfter, &p, g, &GridSpec::default())
            .map_err(|e| e.to_string())?;
        worst = worst.max(rel(sol.strategy.f, f.value));
        accepted += 1;
    }
    check(worst <= 2e-2, || format!("worst F error {worst:e}"))?;
    Ok(format!("25 instances, worst F error {worst:.2e}"))
}

fn discrepancy_report() -> Outcome {
    let g = GainTarget::new(100.0).unwrap();
    let config = AuditConfig::default();
    let report =
        audit_claims(&Region::default(), 200, 42, g, &config).map_err(|e| e.to_string())?;
    let again = audit_claims(&Region::default(), 200, 42, g, &config).map_err(|e| e.to_string())?;
    check(report == again, || "audit is not deterministic".into())?;
    for id in ["M0-1", "M0-2", "M0-3", "M0-4"] {
        let c = report.claim(id).ok_or(format!("{id} missing"))?;
        check(c.formula.fraction_holding == Some(1.0), || {
            format!("{id} formula fraction {:?}", c.formula.fraction_holding)
        })?;
    }
    let decided = |v: Verdict| matches!(v, Verdict::Agrees | Verdict::Disagrees);
    for c in report
        .claims
        .iter()
        .filter(|c| c.model == ModelKind::FeedbackFirst)
    {
        check(decided(c.verdict), || format!("{} has no verdict", c.id))?;
    }
    let mut summary = Vec::new();
    for v in [
        FormulaVariant::A1,
        FormulaVariant::F1,
        FormulaVariant::A2Partial,
        FormulaVariant::A2Full,
        FormulaVariant::F2Draft,
    ] {
        let f = report.formula(v).ok_or(format!("{} missing", v.name()))?;
        check(decided(f.verdict), || {
            format!("{} has no verdict", v.name())
        })?;
        summary.push(format!("{}={}", v.name(), f.verdict.label()));
    }
    for c in report.claims.iter().filter(|c| c.informational) {
        summary.push(format!("{}={}", c.id, c.verdict.label()));
    }
    Ok(format!(
        "200 samples, M0 formula fractions 1.0; {}",
        summary.join(" ")
    ))
}

fn corner_behavior() -> Outcome {
    let p = params(0.9, 0.3, 0.2, 0.0, 10.0, 2.0, 1.0);
    let g = GainTarget::new(100.0).unwrap();
    let grid = GridSpec::default();
    let sol = minimize_cost(ModelKind::FeedbackAfter, &p, g, &grid).map_err(|e| e.to_string())?;
    check(sol.strategy.f == grid.min, || {
        format!("F = {}", sol.strategy.f)
    })?;
    let rec = viability(&p, g, &grid).map_err(|e| e.to_string())?;
    check(!rec.feedback_after_worthwhile, || {
        "feedback after reported worthwhile".into()
    })?;
    Ok(format!(
        "F = grid min {}, feedback after worthwhile = false, cheapest = {}",
        grid.min, rec.cheapest
    ))
}

fn estimation_round_trip() -> Outcome {
    let p = params(0.7, 0.4, 0.15, 0.5, 10.0, 2.0, 1.0);
    let mut worst_exact: f64 = 0.0;
    let mut worst_noisy: f64 = 0.0;
    for model in ModelKind::ALL {
        let truth_gamma = match model {
            ModelKind::Baseline => None,
            ModelKind::FeedbackFirst => Some(0.15),
            ModelKind::FeedbackAfter => Some(0.5),
        };
        let logs =
            simulate_design(&random_design(model, 60, 7), &p, 0.0, 7).map_err(|e| e.to_string())?;
        let gfit = fit_gain_params(&logs, model).map_err(|e| e.to_string())?;
        let cfit = fit_cost_params(&logs).map_err(|e| e.to_string())?;
        let mut errs = vec![
            (gfit.alpha_hat - 0.7).abs(),
            (gfit.beta_hat - 0.4).abs(),
            (cfit.cq_hat - 10.0).abs(),
            (cfit.ca_hat - 1.0).abs(),
        ];
        if let Some(t) = truth_gamma {
            errs.push((gfit.gamma_hat.unwrap() - t).abs());
            errs.push((cfit.cf_hat.unwrap() - 2.0).abs());
        }
        worst_exact = errs.into_iter().fold(worst_exact, f64::max);

        let logs = simulate_design(&random_design(model, 500, 8), &p, 0.05, 8)
            .map_err(|e| e.to_string())?;
        let gfit = fit_gain_params(&logs, model).map_err(|e| e.to_string())?;
        worst_noisy = worst_noisy
            .max((gfit.alpha_hat - 0.7).abs())
            .max((gfit.beta_hat - 0.4).abs());
        if let Some(t) = truth_gamma {
            worst_noisy = worst_noisy.max((gfit.gamma_hat.unwrap() - t).abs());
        }
    }
    check(worst_exact <= 1e-9 && worst_noisy <= 0.05, || {
        format!("noiseless error {worst_exact:e}, noisy exponent error {worst_noisy:e}")
    })?;
    Ok(format!(
        "noiseless max error {worst_exact:.2e}; sigma 0.05, 500 sessions: max exponent error {worst_noisy:.4}"
    ))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_convecon"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let params_path = dir.path().join("p.json");
    std::fs::write(
        &params_path,
        r#"{"alpha":0.9,"beta":0.3,"gamma1":0.2,"gamma2":0.5,"c_query":10,"c_feedback":2,"c_assess":1}"#,
    )
    .map_err(|e| e.to_string())?;
    let pp = params_path.to_str().unwrap();
    let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());

    let mut names = Vec::new();
    let oracle = ["oracle", "--model", "m2", "--params", pp, "--gain", "100"];
    check(run_cli(&oracle)? == run_cli(&oracle)?, || {
        "oracle output differs".into()
    })?;
    names.push("oracle");

    let mut files = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("audit{i}.json"));
        run_cli(&[
            "audit",
            "--samples",
            "20",
            "--seed",
            "42",
            "--output",
            out.to_str().unwrap(),
        ])?;
        files.push(read(&out)?);
    }
    check(files[0] == files[1], || "audit report differs".into())?;
    names.push("audit");

    let sim = [
        "simulate",
        "--model",
        "m1",
        "--params",
        pp,
        "--random-design",
        "--n",
        "50",
        "--sigma",
        "0.1",
        "--seed",
        "9",
    ];
    check(run_cli(&sim)? == run_cli(&sim)?, || {
        "simulate output differs".into()
    })?;
    names.push("simulate");
    Ok(format!("byte-identical reruns: {}", names.join(", ")))
}

fn grammar_accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for model in ModelKind::ALL {
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let q = rng.random_range(0..20u32) as f64;
            let f = if model.has_feedback() {
                rng.random_range(0..10u32) as f64
            } else {
                0.0
            };
            let a = rng.random_range(0..20u32) as f64;
            let s = Strategy::new(model, q, f, a).unwrap();
            let log = &simulate(&s, &p, 0.0, 0, 1).map_err(|e| e.to_string())?[0];
            check(log.counts() == expected_counts(&s), || {
                format!("counts differ for {s:?}")
            })?;
            check(log.realized_cost == cost(&s, p.cost()), || {
                format!(
                    "realized {} vs cost {} for {s:?}",
                    log.realized_cost,
                    cost(&s, p.cost())
                )
            })?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} strategies, realized cost identical to the cost function"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("reduction to the baseline", reduction),
        ("baseline closed form vs oracle", baseline_vs_oracle),
        ("expansion path", expansion_path),
        ("feedback-after F vs oracle", published_f2),
        ("discrepancy report", discrepancy_report),
        ("corner behavior", corner_behavior),
        ("estimation round trip", estimation_round_trip),
        ("determinism", determinism),
        ("grammar accounting", grammar_accounting),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {}: {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
