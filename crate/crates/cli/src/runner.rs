//! Experiment orchestration: build model/schedule/functionals from a
//! [`RunConfig`], drive R replica chains on disjoint rng streams, and emit
//! the run artifacts (trace.csv, report.txt, meta).

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use ergodic_core::empirical::EmpiricalAccumulator;
use ergodic_core::model::catalog::{self, CatalogEntry, Dynamics};
use ergodic_core::model::{
    standard_grid, validate_diffusion, validate_jump, LyapunovSpec, Psi, ScalarField,
    SmoothFunctional, TestFunctional,
};
use ergodic_core::oracles::{levy_ou_moments, stationary_density_1d, ReferenceLaw};
use ergodic_core::schedules::{
    check_avg_variation, check_sw1, check_sw2, ConditionReport, EpsShape, Schedule,
};
use ergodic_core::schemes::{
    simulate_chain, ChainState, EulerStepper, IncrementGenerator, IncrementMode, JumpEulerStepper,
    LevyAreaMode, MilsteinStepper, Stepper,
};
use ergodic_core::verify::{
    check_dominance_exp, check_r_p, check_r_p_lambda_exp, check_r_pq_jump, check_sublinearity,
    diffusion_af_functional, jump_af_functional, write_margins_csv, HypothesisMargin,
    JumpConstants,
};
use ergodic_core::{Error, Result};

use crate::config::{RunConfig, Scheme};

/// Environment variable prefixed to relative output paths.
pub const OUT_ROOT_ENV: &str = "ERGODIC_OUT_ROOT";

pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub fault: Option<String>,
}

fn out_dir_for(cfg: &RunConfig) -> PathBuf {
    let out = PathBuf::from(&cfg.out);
    if out.is_absolute() {
        return out;
    }
    match std::env::var(OUT_ROOT_ENV) {
        Ok(root) if !root.is_empty() => PathBuf::from(root).join(out),
        _ => out,
    }
}

fn lyapunov_for(cfg: &RunConfig, dim: usize) -> Result<LyapunovSpec> {
    let psi = match cfg.psi_exp_lambda {
        Some(lambda) => Psi::Exponential {
            lambda,
            p: cfg.psi_p,
        },
        None => Psi::Polynomial { p: cfg.psi_p },
    };
    if !(cfg.phi_a > 0.0 && cfg.phi_a <= 1.0) {
        return Err(Error::config("phi.a must lie in (0, 1]"));
    }
    // every catalog entry uses the essentially quadratic V = 1 + |x|^2
    Ok(catalog::quadratic_lyapunov(dim, psi, cfg.phi_a))
}

fn schedule_for(cfg: &RunConfig) -> Result<Schedule> {
    if cfg.weight_equal_to_step {
        Schedule::equal_polynomial(cfg.gamma1, cfg.theta)
    } else {
        Schedule::polynomial(cfg.gamma1, cfg.theta, cfg.eta1, cfg.kappa)
    }
}

fn levy_mode_for(cfg: &RunConfig) -> LevyAreaMode {
    match cfg.levy_area.as_str() {
        "commutative" => LevyAreaMode::CommutativeClosedForm,
        "substitute" => LevyAreaMode::CenteredSubstitute,
        _ => LevyAreaMode::Exact1d,
    }
}

fn increment_mode_for(cfg: &RunConfig) -> IncrementMode {
    if cfg.rng_mode == "rademacher" {
        IncrementMode::Rademacher
    } else {
        IncrementMode::Gaussian
    }
}

fn validate_scheme(cfg: &RunConfig, entry: &CatalogEntry) -> Result<()> {
    match (&cfg.scheme, &entry.dynamics) {
        (Scheme::JumpEuler, Dynamics::Jump { .. }) => Ok(()),
        (Scheme::JumpEuler, _) => Err(Error::config(format!(
            "scheme jump_euler needs a jump model, `{}` is a diffusion",
            entry.key
        ))),
        (_, Dynamics::Jump { .. }) => Err(Error::config(format!(
            "model `{}` is a jump model; use scheme = jump_euler",
            entry.key
        ))),
        (Scheme::Milstein, Dynamics::Diffusion(m)) => {
            // exponential-psi targets need commutative noise; a generic
            // substitute-mode run in d >= 2 is rejected up front
            if cfg.psi_exp_lambda.is_some() && m.dim >= 2 && !m.commutative_noise {
                return Err(Error::config(
                    "exponential psi with non-commutative noise in d >= 2 is unsupported",
                ));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// The registered observable suite: monomials per coordinate, bumps, and
/// (optionally) the streamed generator composites A[bump].
struct Suite {
    functionals: Vec<TestFunctional>,
    residual_labels: Vec<String>,
}

fn build_suite(cfg: &RunConfig, entry: &CatalogEntry, dim: usize) -> Result<Suite> {
    let mut fs = vec![TestFunctional::constant_one()];
    for coord in 0..dim {
        for degree in 1..=cfg.monomials {
            fs.push(TestFunctional::monomial(coord, degree));
        }
    }
    let mut residual_labels = Vec::new();
    for &c in &cfg.bump_centers {
        let mut center = vec![0.0; dim];
        center[0] = c;
        let bump = SmoothFunctional::bump(&center, cfg.bump_radius);
        fs.push(bump.as_test_functional());
        if cfg.report_residuals {
            let af = match &entry.dynamics {
                Dynamics::Diffusion(m) => diffusion_af_functional(m, &bump)?,
                Dynamics::Jump { model, drift } => jump_af_functional(model, drift, &bump)?,
            };
            residual_labels.push(af.label.clone());
            fs.push(af);
        }
    }
    Ok(Suite {
        functionals: fs,
        residual_labels,
    })
}

fn make_stepper(cfg: &RunConfig, entry: &CatalogEntry, stream_id: u64) -> Result<Box<dyn Stepper>> {
    let inc = IncrementGenerator::new(
        cfg.seed,
        stream_id,
        increment_mode_for(cfg),
        levy_mode_for(cfg),
    );
    match (&cfg.scheme, &entry.dynamics) {
        (Scheme::Euler, Dynamics::Diffusion(m)) => Ok(Box::new(EulerStepper::new(m.clone(), inc))),
        (Scheme::Milstein, Dynamics::Diffusion(m)) => {
            Ok(Box::new(MilsteinStepper::new(m.clone(), inc)?))
        }
        (Scheme::JumpEuler, Dynamics::Jump { model, drift }) => Ok(Box::new(
            JumpEulerStepper::new(model.clone(), drift.clone(), inc)?,
        )),
        _ => Err(Error::config("scheme/model combination rejected")),
    }
}

struct ReplicaResult {
    acc: EmpiricalAccumulator,
    state: Option<ChainState>,
    fault: Option<String>,
}

fn run_replicas(
    cfg: &RunConfig,
    entry: &CatalogEntry,
    suite: &Suite,
) -> Result<Vec<ReplicaResult>> {
    let sched = schedule_for(cfg)?;
    let dim = entry.dim();
    if cfg.x0.len() != dim {
        return Err(Error::config(format!(
            "x0 has {} coordinates, model dimension is {dim}",
            cfg.x0.len()
        )));
    }
    let results: Vec<Result<ReplicaResult>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for r in 0..cfg.chains {
            let sched = sched.clone();
            let entry = entry.clone();
            let functionals = suite.functionals.clone();
            let x0 = cfg.x0.clone();
            handles.push(scope.spawn(move || -> Result<ReplicaResult> {
                let mut acc = EmpiricalAccumulator::new(dim).with_trace();
                for f in functionals {
                    acc.register(f);
                }
                let mut stepper = make_stepper(cfg, &entry, r)?;
                match simulate_chain(stepper.as_mut(), &sched, &x0, cfg.steps, &mut [&mut acc]) {
                    Ok(state) => {
                        acc.record_checkpoint();
                        Ok(ReplicaResult {
                            acc,
                            state: Some(state),
                            fault: None,
                        })
                    }
                    Err(e) => {
                        acc.record_checkpoint();
                        Ok(ReplicaResult {
                            acc,
                            state: None,
                            fault: Some(e.to_string()),
                        })
                    }
                }
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("replica panicked"))
            .collect()
    });
    results.into_iter().collect()
}

/// The built-in reference law for a catalog model, when one is known.
fn reference_for(entry: &CatalogEntry, cfg: &RunConfig) -> Option<ReferenceLaw> {
    let p = |key: &str, default: f64| cfg.model_params.get(key).copied().unwrap_or(default);
    match entry.key.as_str() {
        "ou" | "double_well" | "weak_ou" => {
            let Dynamics::Diffusion(m) = &entry.dynamics else {
                return None;
            };
            if m.dim != 1 {
                return None;
            }
            let m = m.clone();
            let b = move |x: f64| {
                let mut out = [0.0];
                m.drift_into(&[x], &mut out);
                out[0]
            };
            let m2 = match &entry.dynamics {
                Dynamics::Diffusion(m) => m.clone(),
                _ => unreachable!(),
            };
            let sig = move |x: f64| {
                let mut out = [0.0];
                m2.diffusion_into(&[x], &mut out);
                out[0]
            };
            let grid: Vec<f64> = (0..4801)
                .map(|i| -12.0 + 24.0 * i as f64 / 4800.0)
                .collect();
            stationary_density_1d(b, sig, &grid).ok()
        }
        "cir" => {
            let Dynamics::Diffusion(m) = &entry.dynamics else {
                return None;
            };
            let m = m.clone();
            let b = move |x: f64| {
                let mut out = [0.0];
                m.drift_into(&[x], &mut out);
                out[0]
            };
            let m2 = match &entry.dynamics {
                Dynamics::Diffusion(mm) => mm.clone(),
                _ => unreachable!(),
            };
            let sig = move |x: f64| {
                let mut out = [0.0];
                m2.diffusion_into(&[x], &mut out);
                out[0].max(1e-9)
            };
            let grid: Vec<f64> = (0..4801).map(|i| 1e-6 + 24.0 * i as f64 / 4800.0).collect();
            stationary_density_1d(b, sig, &grid).ok()
        }
        "shot_noise_ou" => {
            let size = p("jump_size", 1.0);
            levy_ou_moments(p("theta", 1.0), p("rate", 1.0), size, size * size).ok()
        }
        "cpoisson_exp_ou" | "exp_tail_jump" => {
            // Exp(1) marks: m1 = 1, m2 = 2
            levy_ou_moments(p("theta", 1.0), p("rate", 1.0), 1.0, 2.0).ok()
        }
        _ => None,
    }
}

fn schedule_condition_lines(cfg: &RunConfig) -> Result<(Vec<String>, Vec<ConditionReport>)> {
    let sched = schedule_for(cfg)?;
    let eps = EpsShape::single(cfg.sw_eps_exponent);
    let reports = vec![
        check_sw1(&sched, cfg.sw_rho, &eps, cfg.sw_horizon)?,
        check_sw2(&sched, cfg.sw_horizon)?,
        check_avg_variation(&sched, cfg.sw_horizon)?,
    ];
    let mut lines = Vec::new();
    for r in &reports {
        let method = match r.method {
            ergodic_core::schedules::Method::Analytic => "analytic",
            ergodic_core::schedules::Method::PartialSum => "partial_sum",
        };
        let mut line = format!("{}: {} ({method})", r.condition, r.verdict);
        if matches!(r.condition, ergodic_core::schedules::ConditionId::SwI) {
            let _ = write!(
                line,
                ", rho = {}, eps exponent = {}",
                cfg.sw_rho, cfg.sw_eps_exponent
            );
        }
        if let Some(e) = r.evidence.series_exponent {
            let _ = write!(line, ", series exponent {e:.4}");
        }
        if let Some(s) = r.evidence.partial_sum {
            let _ = write!(line, ", partial sum {s:.6e}");
        }
        if let Some(n) = &r.evidence.note {
            let _ = write!(line, " [{n}]");
        }
        lines.push(line);
    }
    Ok((lines, reports))
}

fn hypothesis_margins(cfg: &RunConfig, entry: &CatalogEntry) -> Result<Vec<HypothesisMargin>> {
    let dim = entry.dim();
    let lyap = lyapunov_for(cfg, dim)?;
    let grid = standard_grid(dim);
    let mut margins = Vec::new();
    match &entry.dynamics {
        Dynamics::Diffusion(m) => {
            if cfg.check_rp {
                let poly = lyap.clone().with_psi(Psi::Polynomial { p: cfg.psi_p })?;
                margins.push(check_r_p(&poly, m, cfg.rp_alpha, cfg.rp_beta, &grid)?);
            }
            if cfg.check_exp || cfg.psi_exp_lambda.is_some() {
                let lambda = cfg.psi_exp_lambda.unwrap_or(cfg.exp_lambda);
                let exp_spec = lyap.clone().with_psi(Psi::Exponential {
                    lambda,
                    p: cfg.exp_p,
                })?;
                let c_sigma_value = cfg.exp_c_sigma;
                let c_sigma: ScalarField = Arc::new(move |_: &[f64]| c_sigma_value);
                margins.push(check_r_p_lambda_exp(
                    &exp_spec,
                    m,
                    cfg.exp_alpha,
                    cfg.exp_beta,
                    &c_sigma,
                    &grid,
                )?);
                // the dominance condition is flagged in every exponential run
                margins.push(check_dominance_exp(
                    &exp_spec,
                    m,
                    cfg.exp_p,
                    cfg.exp_dom_c,
                    &grid,
                )?);
            }
        }
        Dynamics::Jump { model, drift } => {
            let p = cfg.jump_p;
            let q = model.regime_q;
            let spec = lyap.clone().with_psi(Psi::Polynomial { p })?;
            let constants = JumpConstants::estimate(&spec, p, q, 100.0)?;
            margins.push(check_r_pq_jump(
                &spec,
                model,
                drift,
                cfg.jump_alpha,
                cfg.jump_beta,
                p,
                q,
                &grid,
                &constants,
            )?);
        }
    }
    Ok(margins)
}

/// Run the full experiment and write trace.csv, report.txt, meta.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts> {
    let entry = catalog::by_key(&cfg.model_key, &cfg.model_params)?;
    validate_scheme(cfg, &entry)?;
    let dim = entry.dim();
    let suite = build_suite(cfg, &entry, dim)?;
    let sched = schedule_for(cfg)?;

    let out_dir = out_dir_for(cfg);
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("meta"), cfg.echo())?;

    let replicas = run_replicas(cfg, &entry, &suite)?;
    let fault = replicas.iter().find_map(|r| r.fault.clone());

    // trace.csv: replica 0's checkpointed path
    {
        let mut buf = Vec::new();
        let sched_for_gamma = sched.clone();
        replicas[0].acc.write_trace_csv(
            move |n| sched_for_gamma.gamma_sum(n).unwrap_or(f64::NAN),
            &mut buf,
        )?;
        fs::write(out_dir.join("trace.csv"), buf)?;
    }

    // report.txt
    let mut report = String::new();
    let _ = writeln!(report, "ergodic run report");
    let _ = writeln!(report, "==================");
    let _ = writeln!(
        report,
        "model = {} (dim {dim}), scheme = {}, rng = {} seed {}",
        entry.key,
        match cfg.scheme {
            Scheme::Euler => "euler",
            Scheme::Milstein => "milstein",
            Scheme::JumpEuler => "jump_euler",
        },
        cfg.rng_mode,
        cfg.seed
    );
    let _ = writeln!(
        report,
        "schedule: gamma_n = {} n^-{:.6}, weights {}",
        cfg.gamma1,
        cfg.theta,
        if cfg.weight_equal_to_step {
            "equal_to_step".to_string()
        } else {
            format!("{} n^-{:.6}", cfg.eta1, cfg.kappa)
        }
    );
    let _ = writeln!(report, "chains = {}, steps = {}", cfg.chains, cfg.steps);
    for (ri, r) in replicas.iter().enumerate() {
        if let Some(state) = &r.state {
            let _ = writeln!(
                report,
                "replica {ri}: Gamma_N = {:.6e}, rng draws = {}",
                state.gamma_elapsed, state.draws
            );
        }
    }

    let _ = writeln!(report, "\n[schedule conditions]");
    let (lines, _) = schedule_condition_lines(cfg)?;
    for l in lines {
        let _ = writeln!(report, "{l}");
    }

    let _ = writeln!(report, "\n[hypothesis margins]");
    let margins = hypothesis_margins(cfg, &entry)?;
    for m in &margins {
        let verdict = if m.satisfied() { "holds" } else { "fails" };
        let _ = writeln!(
            report,
            "{}: {} (margin {:.6e} at argmin {:?}){}",
            m.hypothesis,
            verdict,
            m.margin,
            m.argmin,
            m.note
                .as_deref()
                .map(|n| format!(" [{n}]"))
                .unwrap_or_default()
        );
    }
    {
        let mut csv = Vec::new();
        write_margins_csv(&margins, &mut csv)?;
        fs::write(out_dir.join("hypotheses.csv"), csv)?;
    }

    let _ = writeln!(report, "\n[model validation]");
    let model_report = match &entry.dynamics {
        Dynamics::Diffusion(m) => validate_diffusion(m, &standard_grid(dim)),
        Dynamics::Jump { model, .. } => validate_jump(model, &standard_grid(dim)),
    };
    let _ = writeln!(
        report,
        "finite on grid: {}; commutativity residual: {:?}; censor max ratio: {:?}",
        model_report.finite_everywhere,
        model_report.commutativity_residual,
        model_report.censor_max_ratio
    );
    if let Dynamics::Jump { model, .. } = &entry.dynamics {
        let sub = check_sublinearity(model, &[1e2, 1e3, 1e4], 16);
        let verdict = if sub.consistent {
            "consistent".to_string()
        } else {
            format!("violated at radius {}", sub.violated_at_radius.unwrap())
        };
        let _ = writeln!(
            report,
            "sublinearity: {verdict} ({:?})",
            sub.max_ratio_by_radius
        );
    }

    let _ = writeln!(
        report,
        "\n[functionals] mean over {} replicas +- standard error",
        replicas.len()
    );
    let labels: Vec<String> = replicas[0]
        .acc
        .labels()
        .iter()
        .map(|s| s.to_string())
        .collect();
    for label in &labels {
        let vals: Vec<f64> = replicas.iter().filter_map(|r| r.acc.value(label)).collect();
        let (mean, se) = mean_se(&vals);
        let _ = writeln!(report, "{label}: {mean:.8e} +- {se:.3e}");
    }

    // merged accumulator across replicas, for quantiles and distances
    let merged = {
        let mut merged: Option<EmpiricalAccumulator> = None;
        for r in replicas.iter() {
            merged = Some(match merged {
                None => clone_shellless(&r.acc, dim)?,
                Some(m) => EmpiricalAccumulator::merge(m, &r.acc)?,
            });
        }
        merged.unwrap()
    };
    if merged.count() > 0 {
        let mut buf = Vec::new();
        merged.write_quantile_csv(&[0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95], &mut buf)?;
        fs::write(out_dir.join("quantiles.csv"), buf)?;
    }

    if cfg.report_wasserstein {
        let _ = writeln!(report, "\n[distance to reference]");
        match reference_for(&entry, cfg) {
            Some(law @ ReferenceLaw::Density1d { .. }) => {
                let mut buf = Vec::new();
                law.write_density_csv(&mut buf)?;
                fs::write(out_dir.join("reference.csv"), buf)?;
                let (w1, bound) = merged.wasserstein1_1d(0, |t| law.cdf(t), 1 << 15)?;
                let _ = writeln!(
                    report,
                    "wasserstein1 (coordinate 0, merged replicas): {w1:.6e} (grid bound {bound:.2e})"
                );
            }
            Some(ReferenceLaw::MomentSet(ms)) => {
                for (deg, expect) in ms {
                    let label = format!("x0^{deg}");
                    let vals: Vec<f64> = replicas
                        .iter()
                        .filter_map(|r| r.acc.value(&label))
                        .collect();
                    if vals.is_empty() {
                        continue;
                    }
                    let (mean, se) = mean_se(&vals);
                    let _ = writeln!(
                        report,
                        "moment {label}: simulated {mean:.6e} vs reference {expect:.6e} (se {se:.2e})"
                    );
                }
            }
            _ => {
                let _ = writeln!(report, "no built-in reference for model `{}`", entry.key);
            }
        }
    }

    if cfg.report_residuals && !suite.residual_labels.is_empty() {
        let _ = writeln!(
            report,
            "\n[generator residuals] |nu_n(Af)| final vs n ~ N/100"
        );
        for (ri, r) in replicas.iter().enumerate() {
            for label in &suite.residual_labels {
                let final_v = r.acc.value(label).unwrap_or(f64::NAN).abs();
                let early = r
                    .acc
                    .trace()
                    .and_then(|tr| {
                        let target = cfg.steps / 100;
                        let idx = labels.iter().position(|l| l == label)?;
                        tr.iter()
                            .rev()
                            .find(|e| e.n <= target.max(1))
                            .map(|e| e.values[idx].abs())
                    })
                    .unwrap_or(f64::NAN);
                let _ = writeln!(
                    report,
                    "replica {ri} {label}: {final_v:.4e} (was {early:.4e})"
                );
            }
        }
    }

    let _ = writeln!(report, "\n[fault]");
    match &fault {
        Some(f) => {
            let _ = writeln!(report, "{f}");
        }
        None => {
            let _ = writeln!(report, "none");
        }
    }
    fs::write(out_dir.join("report.txt"), report)?;

    Ok(RunArtifacts { out_dir, fault })
}

/// Fresh accumulator with the same registered suite, used as the merge seed.
fn clone_shellless(template: &EmpiricalAccumulator, dim: usize) -> Result<EmpiricalAccumulator> {
    // merging starts from an empty accumulator with matching functionals
    let mut acc = EmpiricalAccumulator::new(dim);
    for label in template.labels() {
        // values are merged in; the evaluator itself is irrelevant for a
        // merge seed, but labels must match
        acc.register(TestFunctional::new(
            label,
            Arc::new(|_: &[f64]| 0.0),
            ergodic_core::model::GrowthClass::Polynomial { degree: 0.0 },
        ));
    }
    EmpiricalAccumulator::merge(acc, template)
}

fn mean_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Hypothesis-and-schedule report without running any simulation.
pub fn check(cfg: &RunConfig) -> Result<String> {
    let entry = catalog::by_key(&cfg.model_key, &cfg.model_params)?;
    let mut out = String::new();
    let _ = writeln!(out, "ergodic check report for model `{}`", entry.key);
    let (lines, _) = schedule_condition_lines(cfg)?;
    let _ = writeln!(out, "\n[schedule conditions]");
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
    let _ = writeln!(out, "\n[hypothesis margins]");
    for m in hypothesis_margins(cfg, &entry)? {
        let verdict = if m.satisfied() { "holds" } else { "fails" };
        let _ = writeln!(
            out,
            "{}: {} (margin {:.6e} at argmin {:?}, params {:?}){}",
            m.hypothesis,
            verdict,
            m.margin,
            m.argmin,
            m.params,
            m.note
                .as_deref()
                .map(|n| format!(" [{n}]"))
                .unwrap_or_default()
        );
    }
    Ok(out)
}
