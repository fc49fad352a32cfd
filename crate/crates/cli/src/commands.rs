//! The five experiment commands: simulate, solve, anneal, verify and
//! fp-compare. Each reads a config, runs library code and writes
//! config-stamped output files.

use std::path::Path;

use anyhow::{anyhow, Result};
use serde::Serialize;

use mfbr::flow::fmt_f64;
use mfbr::{
    best_response_nu, bounds_certificate, check_convex_concave, check_flat_derivative,
    fit_exponential_rate, fit_log_log_rate, fp_br_equivalence_check, picard_solve, random_density,
    seeded_rng, simulate, simulate_fictitious_play, value, verify_inequalities, CheckReport,
    EquilibriumResult, EquivalenceReport, FlowConfig, InequalityCheck, PairState, RateFit,
    RegularizationParams, TraceField, Trajectory,
};

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{stamped_csv, stamped_json, write_atomic};

/// Distinguishes bad input (exit 2) from runs that fail numerically (exit 3).
#[derive(Debug)]
pub enum AppError {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            AppError::Config(e) => format!("configuration error: {e:#}"),
            AppError::Numerical(e) => format!("numerical failure: {e:#}"),
        }
    }
}

fn cfg_err(e: impl Into<anyhow::Error>) -> AppError {
    AppError::Config(e.into())
}

fn num_err(e: impl std::fmt::Display) -> AppError {
    AppError::Numerical(anyhow!("{e}"))
}

pub struct CommandCtx<'a> {
    pub config_path: &'a Path,
    pub out_dir: &'a Path,
    pub seed_override: Option<u64>,
}

fn load(ctx: &CommandCtx) -> Result<(ExperimentConfig, Experiment), AppError> {
    let config = ExperimentConfig::load(ctx.config_path, ctx.seed_override).map_err(cfg_err)?;
    let base = ctx
        .config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let experiment = config.build(&base).map_err(cfg_err)?;
    Ok((config, experiment))
}

fn flow_config(config: &ExperimentConfig) -> FlowConfig {
    FlowConfig {
        params: config.params(),
        tau: config.tau,
        scheme: config.scheme,
        t_end: config.t_end,
        record_stride: config.record_stride,
    }
}

fn base_dir(ctx: &CommandCtx) -> std::path::PathBuf {
    ctx.config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf()
}

/// Solves the regularized equilibrium for trace annotations. Non-convergence
/// is tolerated: the trace then simply lacks distance-to-equilibrium columns.
fn solve_for_annotations(
    experiment: &Experiment,
    params: &RegularizationParams,
    config: &ExperimentConfig,
) -> Result<Option<EquilibriumResult>, AppError> {
    let r = picard_solve(
        experiment.objective.as_dyn(),
        params,
        &experiment.refs,
        &config.picard.to_core(),
        None,
    )
    .map_err(num_err)?;
    Ok(r.converged.then_some(r))
}

#[derive(Serialize)]
struct FinalState {
    t: f64,
    lyapunov: f64,
    ni_upper: f64,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    kl_to_eq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tv2_to_eq: Option<f64>,
}

#[derive(Serialize)]
struct EquilibriumSummary {
    converged: bool,
    iterations: usize,
    final_tv_residual: f64,
    foc_residual_nu: f64,
    foc_residual_mu: f64,
}

impl From<&EquilibriumResult> for EquilibriumSummary {
    fn from(r: &EquilibriumResult) -> Self {
        Self {
            converged: r.converged,
            iterations: r.iterations,
            final_tv_residual: r.final_tv_residual,
            foc_residual_nu: r.foc_residual_nu,
            foc_residual_mu: r.foc_residual_mu,
        }
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    final_state: FinalState,
    /// Least-squares slope of log L(t); the transient before t = 1/alpha is
    /// excluded from the fit.
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_fit: Option<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_fit_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    equilibrium: Option<EquilibriumSummary>,
}

fn fit_after_transient(trace: &Trajectory, config: &ExperimentConfig) -> (Option<RateFit>, Option<String>) {
    let lo = 1.0 / config.alpha;
    let window = (lo < config.t_end).then_some((lo, config.t_end));
    match fit_exponential_rate(trace, TraceField::Lyapunov, window) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

pub fn run_simulate(ctx: &CommandCtx) -> Result<(), AppError> {
    let (config, experiment) = load(ctx)?;
    let params = config.params();
    let initial = experiment.initial_state(&base_dir(ctx)).map_err(cfg_err)?;
    let eq = solve_for_annotations(&experiment, &params, &config)?;
    let eq_pair = eq
        .as_ref()
        .map(|e| (e.nu_star.clone(), e.mu_star.clone()));
    let trace = simulate(
        &initial,
        experiment.objective.as_dyn(),
        &experiment.refs,
        &flow_config(&config),
        eq_pair.as_ref(),
    )
    .map_err(num_err)?;
    let (rate_fit, rate_fit_error) = fit_after_transient(&trace, &config);
    let last = trace.final_record().expect("simulate always records");
    let summary = SimulateSummary {
        final_state: FinalState {
            t: last.t,
            lyapunov: last.lyapunov,
            ni_upper: last.ni_upper,
            value: last.value,
            kl_to_eq: last.kl_to_eq,
            tv2_to_eq: last.tv2_to_eq,
        },
        rate_fit,
        rate_fit_error,
        equilibrium: eq.as_ref().map(EquilibriumSummary::from),
    };
    write_atomic(
        &ctx.out_dir.join("trace.csv"),
        &stamped_csv(&config, &trace.to_csv()).map_err(cfg_err)?,
    )
    .map_err(cfg_err)?;
    write_atomic(
        &ctx.out_dir.join("summary.json"),
        &stamped_json(&config, "simulate", &summary).map_err(cfg_err)?,
    )
    .map_err(cfg_err)?;
    Ok(())
}

#[derive(Serialize)]
struct SolvePayload {
    result: EquilibriumResult,
}

pub fn run_solve(ctx: &CommandCtx) -> Result<(), AppError> {
    let (config, experiment) = load(ctx)?;
    let result = picard_solve(
        experiment.objective.as_dyn(),
        &config.params(),
        &experiment.refs,
        &config.picard.to_core(),
        None,
    )
    .map_err(num_err)?;
    write_atomic(
        &ctx.out_dir.join("equilibrium.json"),
        &stamped_json(&config, "solve", &SolvePayload { result }).map_err(cfg_err)?,
    )
    .map_err(cfg_err)?;
    Ok(())
}

pub fn run_anneal(ctx: &CommandCtx) -> Result<(), AppError> {
    let (config, experiment) = load(ctx)?;
    let anneal = config
        .anneal
        .clone()
        .ok_or_else(|| cfg_err(anyhow!("anneal command needs an anneal section")))?;
    let mut body = String::from("sigma,value,gap,status\n");
    for &sigma in &anneal.sigma_list {
        let params =
            RegularizationParams::new(sigma, config.alpha).map_err(num_err)?;
        let r = picard_solve(
            experiment.objective.as_dyn(),
            &params,
            &experiment.refs,
            &config.picard.to_core(),
            None,
        )
        .map_err(num_err)?;
        if r.converged {
            let v = value(
                experiment.objective.as_dyn(),
                &r.nu_star,
                &r.mu_star,
                &params,
                &experiment.refs.pi,
                &experiment.refs.rho,
            )
            .map_err(num_err)?;
            let gap = anneal
                .f_star
                .map(|f| fmt_f64(v - f))
                .unwrap_or_default();
            body.push_str(&format!("{},{},{},ok\n", fmt_f64(sigma), fmt_f64(v), gap));
        } else {
            body.push_str(&format!("{},,,no_convergence\n", fmt_f64(sigma)));
        }
    }
    write_atomic(
        &ctx.out_dir.join("anneal.csv"),
        &stamped_csv(&config, &body).map_err(cfg_err)?,
    )
    .map_err(cfg_err)?;
    Ok(())
}

#[derive(Serialize)]
struct VerifyPayload {
    all_pass: bool,
    checks: Vec<InequalityCheck>,
    oracle_checks: Vec<CheckReport>,
    gibbs_bound_violations: usize,
    gibbs_bound_trials: usize,
}

pub fn run_verify(ctx: &CommandCtx) -> Result<(), AppError> {
    let (config, experiment) = load(ctx)?;
    let params = config.params();
    let oracle = experiment.objective.as_dyn();
    let initial = experiment.initial_state(&base_dir(ctx)).map_err(cfg_err)?;
    let eq = solve_for_annotations(&experiment, &params, &config)?;
    let eq_pair = eq
        .as_ref()
        .map(|e| (e.nu_star.clone(), e.mu_star.clone()));
    let trace = simulate(
        &initial,
        oracle,
        &experiment.refs,
        &flow_config(&config),
        eq_pair.as_ref(),
    )
    .map_err(num_err)?;
    let cert = bounds_certificate(oracle.bound_c_nu(), oracle.bound_c_mu(), params.sigma)
        .map_err(num_err)?;
    // slack absorbs integrator and round-off error on the per-record checks
    let slack = 10.0 * config.tau * config.tau + 1e-9;
    let checks = verify_inequalities(&trace, &cert, &experiment.refs, params.alpha, params.sigma, slack)
        .map_err(num_err)?;

    let oracle_checks = vec![
        check_convex_concave(oracle, 200, config.seed).map_err(num_err)?,
        check_flat_derivative(oracle, 1e-6, 100, config.seed).map_err(num_err)?,
    ];

    // random best-response evaluations against the Gibbs envelope
    let mut rng = seeded_rng(config.seed);
    let trials = 500usize;
    let mut violations = 0usize;
    if !cert.saturated {
        for _ in 0..trials {
            let nu = random_density(oracle.x_space(), &mut rng);
            let mu = random_density(oracle.y_space(), &mut rng);
            let psi = best_response_nu(oracle, &nu, &mu, &params, &experiment.refs.pi)
                .map_err(num_err)?;
            for (&p, &r) in psi
                .density
                .values()
                .iter()
                .zip(experiment.refs.pi.density())
            {
                if p < cert.k_psi * r - 1e-12 || p > cert.big_k_psi * r + 1e-12 {
                    violations += 1;
                }
            }
        }
    }

    let all_pass =
        checks.iter().all(|c| c.pass) && oracle_checks.iter().all(|c| c.pass) && violations == 0;
    let payload = VerifyPayload {
        all_pass,
        checks,
        oracle_checks,
        gibbs_bound_violations: violations,
        gibbs_bound_trials: if cert.saturated { 0 } else { trials },
    };
    write_atomic(
        &ctx.out_dir.join("report.json"),
        &stamped_json(&config, "verify", &payload).map_err(cfg_err)?,
    )
    .map_err(cfg_err)?;
    if !all_pass {
        return Err(AppError::Numerical(anyhow!(
            "verification checks failed, see report.json"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct FpComparePayload {
    equivalence: EquivalenceReport,
    /// Slope of log L against log t for the fictitious-play run.
    #[serde(skip_serializing_if = "Option::is_none")]
    fp_rate_fit: Option<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fp_rate_fit_error: Option<String>,
}

pub fn run_fp_compare(ctx: &CommandCtx) -> Result<(), AppError> {
    let (config, experiment) = load(ctx)?;
    if config.t_end <= 1.0 {
        return Err(cfg_err(anyhow!(
            "fp-compare needs t_end > 1, got {}",
            config.t_end
        )));
    }
    let oracle = experiment.objective.as_dyn();
    let initial = experiment.initial_state(&base_dir(ctx)).map_err(cfg_err)?;
    let fcfg = flow_config(&config);
    let equivalence = fp_br_equivalence_check(
        oracle,
        &experiment.refs,
        &fcfg,
        &initial.nu,
        &initial.mu,
        config.t_end,
    )
    .map_err(num_err)?;

    let fp_initial = PairState {
        nu: initial.nu.clone(),
        mu: initial.mu.clone(),
        t: 1.0,
    };
    let fp_trace = simulate_fictitious_play(&fp_initial, oracle, &experiment.refs, &fcfg, None)
        .map_err(num_err)?;
    let window = (10.0f64.min(config.t_end / 2.0), config.t_end);
    let (fp_rate_fit, fp_rate_fit_error) =
        match fit_log_log_rate(&fp_trace, TraceField::Lyapunov, Some(window)) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let payload = FpComparePayload {
        equivalence,
        fp_rate_fit,
        fp_rate_fit_error,
    };
    write_atomic(
        &ctx.out_dir.join("fp_compare.json"),
        &stamped_json(&config, "fp-compare", &payload).map_err(cfg_err)?,
    )
    .map_err(cfg_err)?;
    Ok(())
}
