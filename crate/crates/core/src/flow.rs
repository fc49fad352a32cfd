//! Time integration of the best-response flow and the fictitious-play flow,
//! with trajectory recording and the time-rescale equivalence check.
//!
//! Both schemes write each step as a convex combination of the incoming state
//! and its best response, so positivity and normalization are preserved by
//! construction. The responses are always evaluated at the incoming state
//! (Jacobi update), matching the simultaneous flow equations.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bestresponse::{
    best_response_mu, best_response_nu, lyapunov, BestResponseError, RegularizationParams,
};
use crate::equilibrium::value;
use crate::measure::{kl, tv, Density, MeasureError, ReferenceMeasure};
use crate::objective::Objective;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("explicit Euler requires alpha * tau <= 1, got {0}")]
    UnstableStep(f64),
    #[error("step size tau must be strictly positive, got {0}")]
    InvalidTau(f64),
    #[error("t_end must be at least tau (t_end {t_end}, tau {tau})")]
    HorizonTooShort { t_end: f64, tau: f64 },
    #[error("record stride must be at least 1")]
    ZeroStride,
    #[error("fictitious play requires a strictly positive start time, got {0}")]
    NonPositiveTime(f64),
    #[error(transparent)]
    BestResponse(#[from] BestResponseError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExplicitEuler,
    Exponential,
}

/// Reference measures for the two players.
#[derive(Debug, Clone)]
pub struct ReferencePair {
    pub pi: ReferenceMeasure,
    pub rho: ReferenceMeasure,
}

/// The pair of strategies at a given flow time.
#[derive(Debug, Clone)]
pub struct PairState {
    pub nu: Density,
    pub mu: Density,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowConfig {
    pub params: RegularizationParams,
    pub tau: f64,
    pub scheme: Scheme,
    pub t_end: f64,
    pub record_stride: usize,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(FlowError::InvalidTau(self.tau));
        }
        if self.t_end < self.tau {
            return Err(FlowError::HorizonTooShort {
                t_end: self.t_end,
                tau: self.tau,
            });
        }
        if self.record_stride == 0 {
            return Err(FlowError::ZeroStride);
        }
        if self.scheme == Scheme::ExplicitEuler && self.params.alpha * self.tau > 1.0 {
            return Err(FlowError::UnstableStep(self.params.alpha * self.tau));
        }
        Ok(())
    }
}

/// One diagnostic record along a trajectory. Densities are retained so the
/// inequality suite can be replayed over a finished run.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub nu: Density,
    pub mu: Density,
    pub lyapunov: f64,
    /// (sigma^2/2) * lyapunov, the Nikaido-Isoda upper bound.
    pub ni_upper: f64,
    pub value: f64,
    pub kl_to_eq: Option<f64>,
    pub tv2_to_eq: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn final_record(&self) -> Option<&TrajectoryRecord> {
        self.records.last()
    }

    /// Serializes diagnostics as CSV with header
    /// `t,lyapunov,ni_upper,value,kl_to_eq,tv2_to_eq`; the last two columns
    /// are empty when no equilibrium was supplied.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,lyapunov,ni_upper,value,kl_to_eq,tv2_to_eq\n");
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{},{}",
                fmt_f64(r.t),
                fmt_f64(r.lyapunov),
                fmt_f64(r.ni_upper),
                fmt_f64(r.value)
            );
            match (r.kl_to_eq, r.tv2_to_eq) {
                (Some(k), Some(v)) => {
                    let _ = writeln!(out, ",{},{}", fmt_f64(k), fmt_f64(v));
                }
                _ => out.push_str(",,\n"),
            }
        }
        out
    }
}

/// 17 significant digits: enough for exact f64 round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn convex_step(
    state: &PairState,
    psi: &Density,
    phi: &Density,
    weight: f64,
    dt: f64,
) -> Result<PairState, FlowError> {
    let mix = |a: &Density, b: &Density| -> Result<Density, MeasureError> {
        let vals = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (1.0 - weight) * x + weight * y)
            .collect();
        Density::new(Arc::clone(a.space()), vals)
    };
    Ok(PairState {
        nu: mix(&state.nu, psi)?,
        mu: mix(&state.mu, phi)?,
        t: state.t + dt,
    })
}

/// Forward Euler: nu <- nu + alpha tau (Psi - nu), a convex combination when
/// alpha tau <= 1.
pub fn step_explicit_euler(
    state: &PairState,
    oracle: &dyn Objective,
    refs: &ReferencePair,
    cfg: &FlowConfig,
) -> Result<PairState, FlowError> {
    step_with_tau(state, oracle, refs, cfg, cfg.tau)
}

/// Exponential (Duhamel) rule: nu <- e^{-alpha tau} nu + (1 - e^{-alpha tau}) Psi,
/// with the response frozen over the step. Exact whenever Psi is constant in
/// time, and positivity-preserving for any tau.
pub fn step_exponential(
    state: &PairState,
    oracle: &dyn Objective,
    refs: &ReferencePair,
    cfg: &FlowConfig,
) -> Result<PairState, FlowError> {
    step_with_tau(state, oracle, refs, cfg, cfg.tau)
}

fn step_with_tau(
    state: &PairState,
    oracle: &dyn Objective,
    refs: &ReferencePair,
    cfg: &FlowConfig,
    tau: f64,
) -> Result<PairState, FlowError> {
    let psi = best_response_nu(oracle, &state.nu, &state.mu, &cfg.params, &refs.pi)?;
    let phi = best_response_mu(oracle, &state.nu, &state.mu, &cfg.params, &refs.rho)?;
    let weight = match cfg.scheme {
        Scheme::ExplicitEuler => {
            let w = cfg.params.alpha * tau;
            if w > 1.0 {
                return Err(FlowError::UnstableStep(w));
            }
            w
        }
        Scheme::Exponential => 1.0 - (-cfg.params.alpha * tau).exp(),
    };
    convex_step(state, &psi.density, &phi.density, weight, tau)
}

/// One fictitious-play step with rate alpha / t over [t, t + tau], using the
/// exact integrating factor (t / (t + tau))^alpha.
pub fn step_fictitious_play(
    state: &PairState,
    oracle: &dyn Objective,
    refs: &ReferencePair,
    cfg: &FlowConfig,
) -> Result<PairState, FlowError> {
    fp_step_with_tau(state, oracle, refs, cfg, cfg.tau)
}

fn fp_step_with_tau(
    state: &PairState,
    oracle: &dyn Objective,
    refs: &ReferencePair,
    cfg: &FlowConfig,
    tau: f64,
) -> Result<PairState, FlowError> {
    if state.t <= 0.0 {
        return Err(FlowError::NonPositiveTime(state.t));
    }
    let psi = best_response_nu(oracle, &state.nu, &state.mu, &cfg.params, &refs.pi)?;
    let phi = best_response_mu(oracle, &state.nu, &state.mu, &cfg.params, &refs.rho)?;
    let weight = 1.0 - (state.t / (state.t + tau)).powf(cfg.params.alpha);
    convex_step(state, &psi.density, &phi.density, weight, tau)
}

fn make_record(
    state: &PairState,
    oracle: &dyn Objective,
    refs: &ReferencePair,
    params: &RegularizationParams,
    equilibrium: Option<&(Density, Density)>,
) -> Result<TrajectoryRecord, FlowError> {
    let psi = best_response_nu(oracle, &state.nu, &state.mu, params, &refs.pi)?;
    let phi = best_response_mu(oracle, &state.nu, &state.mu, params, &refs.rho)?;
    let l = lyapunov(&state.nu, &state.mu, &psi.density, &phi.density)?;
    let sigma2_half = 0.5 * params.sigma * params.sigma;
    let v = value(oracle, &state.nu, &state.mu, params, &refs.pi, &refs.rho)?;
    let (kl_to_eq, tv2_to_eq) = match equilibrium {
        Some((nu_star, mu_star)) => {
            let k = kl(&state.nu, nu_star)? + kl(&state.mu, mu_star)?;
            let a = tv(&state.nu, nu_star)?;
            let b = tv(&state.mu, mu_star)?;
            (Some(k), Some(a * a + b * b))
        }
        None => (None, None),
    };
    Ok(TrajectoryRecord {
        t: state.t,
        nu: state.nu.clone(),
        mu: state.mu.clone(),
        lyapunov: l,
        ni_upper: sigma2_half * l,
        value: v,
        kl_to_eq,
        tv2_to_eq,
    })
}

/// Integrates the best-response flow from `initial` to `cfg.t_end`, recording
/// diagnostics every `record_stride` steps (plus the initial and final
/// states). If an equilibrium is supplied, distances to it are recorded too.
pub fn simulate(
    initial: &PairState,
    oracle: &dyn Objective,
    refs: &ReferencePair,
    cfg: &FlowConfig,
    equilibrium: Option<&(Density, Density)>,
) -> Result<Trajectory, FlowError> {
    cfg.validate()?;
    let steps = (cfg.t_end / cfg.tau).round().max(1.0) as usize;
    let mut trajectory = Trajectory::default();
    let mut state = initial.clone();
    trajectory
        .records
        .push(make_record(&state, oracle, refs, &cfg.params, equilibrium)?);
    for k in 1..=steps {
        state = step_with_tau(&state, oracle, refs, cfg, cfg.tau)?;
        if k % cfg.record_stride == 0 || k == steps {
            trajectory
                .records
                .push(make_record(&state, oracle, refs, &cfg.params, equilibrium)?);
        }
    }
    Ok(trajectory)
}

/// Integrates the fictitious-play flow from `initial` (with t > 0) up to
/// physical time `t_end`, recording like [`simulate`].
pub fn simulate_fictitious_play(
    initial: &PairState,
    oracle: &dyn Objective,
    refs: &ReferencePair,
    cfg: &FlowConfig,
    equilibrium: Option<&(Density, Density)>,
) -> Result<Trajectory, FlowError> {
    if initial.t <= 0.0 {
        return Err(FlowError::NonPositiveTime(initial.t));
    }
    if !(cfg.tau.is_finite() && cfg.tau > 0.0) {
        return Err(FlowError::InvalidTau(cfg.tau));
    }
    if cfg.record_stride == 0 {
        return Err(FlowError::ZeroStride);
    }
    let steps = ((cfg.t_end - initial.t) / cfg.tau).round().max(1.0) as usize;
    let mut trajectory = Trajectory::default();
    let mut state = initial.clone();
    trajectory
        .records
        .push(make_record(&state, oracle, refs, &cfg.params, equilibrium)?);
    for k in 1..=steps {
        state = fp_step_with_tau(&state, oracle, refs, cfg, cfg.tau)?;
        if k % cfg.record_stride == 0 || k == steps {
            trajectory
                .records
                .push(make_record(&state, oracle, refs, &cfg.params, equilibrium)?);
        }
    }
    Ok(trajectory)
}

/// One checkpoint of the equivalence run: fictitious play at physical time t
/// against best response at flow time log t.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceCheckpoint {
    pub t: f64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub checkpoints: Vec<EquivalenceCheckpoint>,
    pub max_discrepancy: f64,
    /// First-order tolerance C * tau declared for this run.
    pub tolerance: f64,
    pub tau: f64,
}

/// Runs the best-response flow to time log T and the fictitious-play flow
/// from t = 1 to T with matched initial data, comparing the pairs
/// (FP at t, BR at log t) in total variation at a set of checkpoints.
///
/// Both flows shrink their final sub-step to land exactly on each checkpoint,
/// so the reported discrepancy is pure scheme error.
pub fn fp_br_equivalence_check(
    oracle: &dyn Objective,
    refs: &ReferencePair,
    cfg: &FlowConfig,
    nu0: &Density,
    mu0: &Density,
    horizon: f64,
) -> Result<EquivalenceReport, FlowError> {
    if !(horizon.is_finite() && horizon > 1.0) {
        return Err(FlowError::HorizonTooShort {
            t_end: horizon,
            tau: cfg.tau,
        });
    }
    if !(cfg.tau.is_finite() && cfg.tau > 0.0) {
        return Err(FlowError::InvalidTau(cfg.tau));
    }
    let s_end = horizon.ln();
    let n_checkpoints = 20usize;

    let mut br = PairState {
        nu: nu0.clone(),
        mu: mu0.clone(),
        t: 0.0,
    };
    let mut fp = PairState {
        nu: nu0.clone(),
        mu: mu0.clone(),
        t: 1.0,
    };

    let mut checkpoints = Vec::with_capacity(n_checkpoints);
    let mut max_discrepancy = 0.0f64;
    for j in 1..=n_checkpoints {
        let s_target = s_end * j as f64 / n_checkpoints as f64;
        let t_target = s_target.exp();
        while br.t < s_target - 1e-12 {
            let dt = cfg.tau.min(s_target - br.t);
            br = step_with_tau(&br, oracle, refs, cfg, dt)?;
        }
        while fp.t < t_target - 1e-12 {
            let dt = cfg.tau.min(t_target - fp.t);
            fp = fp_step_with_tau(&fp, oracle, refs, cfg, dt)?;
        }
        let d = tv(&fp.nu, &br.nu)? + tv(&fp.mu, &br.mu)?;
        max_discrepancy = max_discrepancy.max(d);
        checkpoints.push(EquivalenceCheckpoint {
            t: t_target,
            discrepancy: d,
        });
    }
    Ok(EquivalenceReport {
        checkpoints,
        max_discrepancy,
        tolerance: 5.0 * cfg.tau,
        tau: cfg.tau,
    })
}
