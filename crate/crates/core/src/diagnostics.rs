//! Trajectory diagnostics: exponential rate fits and bulk verification of
//! the inequalities the flow is supposed to satisfy along a trace.

use serde::Serialize;
use thiserror::Error;

use crate::bestresponse::BoundsCertificate;
use crate::flow::{ReferencePair, Trajectory, TrajectoryRecord};
use crate::measure::{jeffreys, kl, Density, MeasureError};

/// Values below this floor are dropped from log-linear fits; they are at the
/// level of accumulated round-off and carry no rate information.
pub const RATE_FLOOR: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("rate fit needs at least 10 usable records, found {0}")]
    TooFewPoints(usize),
    #[error("trace records lack equilibrium distances")]
    MissingEquilibriumColumns,
    #[error("fit window [{0}, {1}] is empty or reversed")]
    InvalidWindow(f64, f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Which diagnostic column of a trajectory to analyze.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceField {
    Lyapunov,
    NiUpper,
    KlToEq,
    Tv2ToEq,
}

impl TraceField {
    fn extract(self, r: &TrajectoryRecord) -> Option<f64> {
        match self {
            TraceField::Lyapunov => Some(r.lyapunov),
            TraceField::NiUpper => Some(r.ni_upper),
            TraceField::KlToEq => r.kl_to_eq,
            TraceField::Tv2ToEq => r.tv2_to_eq,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    /// d log(field) / dt from the least-squares line.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Time span of the records actually used.
    pub window: (f64, f64),
    pub points: usize,
}

/// Fits log(field) against t by least squares over the records whose time
/// lies in `window` (the whole trace when `None`). Records at or below the
/// round-off floor are excluded.
pub fn fit_exponential_rate(
    trace: &Trajectory,
    field: TraceField,
    window: Option<(f64, f64)>,
) -> Result<RateFit, DiagnosticsError> {
    if let Some((lo, hi)) = window {
        if !(lo < hi) {
            return Err(DiagnosticsError::InvalidWindow(lo, hi));
        }
    }
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut missing = false;
    for r in &trace.records {
        if let Some((lo, hi)) = window {
            if r.t < lo || r.t > hi {
                continue;
            }
        }
        match field.extract(r) {
            Some(v) if v > RATE_FLOOR => pts.push((r.t, v.ln())),
            Some(_) => {}
            None => missing = true,
        }
    }
    if pts.is_empty() && missing {
        return Err(DiagnosticsError::MissingEquilibriumColumns);
    }
    if pts.len() < 10 {
        return Err(DiagnosticsError::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for &(t, y) in &pts {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sty / stt;
    let intercept = mean_y - slope * mean_t;
    let r_squared = if syy > 0.0 { (sty * sty) / (stt * syy) } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        window: (pts[0].0, pts[pts.len() - 1].0),
        points: pts.len(),
    })
}

/// Fits log(field) against log(t), for flows whose diagnostics decay
/// polynomially rather than exponentially. Records with t <= 0 or field at
/// the round-off floor are excluded; otherwise behaves like
/// [`fit_exponential_rate`], with the returned window still in t units.
pub fn fit_log_log_rate(
    trace: &Trajectory,
    field: TraceField,
    window: Option<(f64, f64)>,
) -> Result<RateFit, DiagnosticsError> {
    if let Some((lo, hi)) = window {
        if !(lo < hi) {
            return Err(DiagnosticsError::InvalidWindow(lo, hi));
        }
    }
    let mut log_records = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        if r.t <= 0.0 {
            continue;
        }
        if let Some((lo, hi)) = window {
            if r.t < lo || r.t > hi {
                continue;
            }
        }
        let mut rec = r.clone();
        rec.t = r.t.ln();
        log_records.push(rec);
    }
    let fit = fit_exponential_rate(&Trajectory { records: log_records }, field, None)?;
    Ok(RateFit {
        window: (fit.window.0.exp(), fit.window.1.exp()),
        ..fit
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    #[serde(rename = "check_name")]
    pub name: String,
    pub pass: bool,
    /// Smallest slack observed, rhs minus lhs; negative means violated.
    pub worst_margin: f64,
    /// Time of the record attaining the worst margin.
    pub at_t: f64,
}

fn summarize(name: &str, margins: impl Iterator<Item = (f64, f64)>, slack: f64) -> InequalityCheck {
    let mut worst = f64::INFINITY;
    let mut at_t = f64::NAN;
    for (t, m) in margins {
        if m < worst {
            worst = m;
            at_t = t;
        }
    }
    InequalityCheck {
        name: name.to_string(),
        pass: worst >= -slack,
        worst_margin: worst,
        at_t,
    }
}

/// Checks, record by record, every inequality the trace is expected to obey:
/// Pinsker between the recorded TV and KL distances, the lower half of the
/// NI sandwich, interval-wise exponential contraction of the Lyapunov
/// function, the multiplicative density envelopes around the references, and
/// Jeffreys dominating KL against the reference. `slack` absorbs
/// discretization and round-off; checks needing equilibrium distances are
/// skipped when those columns are absent.
pub fn verify_inequalities(
    trace: &Trajectory,
    certificate: &BoundsCertificate,
    refs: &ReferencePair,
    alpha: f64,
    sigma: f64,
    slack: f64,
) -> Result<Vec<InequalityCheck>, DiagnosticsError> {
    let recs = &trace.records;
    let mut out = Vec::new();
    let s2h = 0.5 * sigma * sigma;

    let has_eq = recs.iter().all(|r| r.kl_to_eq.is_some());
    if has_eq {
        out.push(summarize(
            "pinsker_tv2_le_half_kl",
            recs.iter()
                .map(|r| (r.t, 0.5 * r.kl_to_eq.unwrap() - r.tv2_to_eq.unwrap())),
            slack,
        ));
        out.push(summarize(
            "sandwich_lower_le_ni_upper",
            recs.iter()
                .map(|r| (r.t, r.ni_upper - s2h * r.kl_to_eq.unwrap())),
            slack,
        ));
    }

    out.push(summarize(
        "lyapunov_interval_contraction",
        recs.windows(2).map(|w| {
            let dt = w[1].t - w[0].t;
            (w[1].t, (-alpha * dt).exp() * w[0].lyapunov - w[1].lyapunov)
        }),
        slack,
    ));

    if !certificate.saturated {
        let envelope = |t: f64,
                        d: &Density,
                        d0: &Density,
                        reference: &[f64],
                        k_lo: f64,
                        k_hi: f64| {
            let decay = (-alpha * t).exp();
            let grow = 1.0 - decay;
            let mut worst = f64::INFINITY;
            for ((&p, &p0), &r) in d.values().iter().zip(d0.values()).zip(reference) {
                let lo = grow * k_lo * r;
                let hi = grow * k_hi * r + decay * p0;
                worst = worst.min(p - lo).min(hi - p);
            }
            worst
        };
        let (nu0, mu0) = (&recs[0].nu, &recs[0].mu);
        out.push(summarize(
            "density_envelope_nu",
            recs.iter().map(|r| {
                (
                    r.t,
                    envelope(
                        r.t,
                        &r.nu,
                        nu0,
                        refs.pi.density(),
                        certificate.k_psi,
                        certificate.big_k_psi,
                    ),
                )
            }),
            slack,
        ));
        out.push(summarize(
            "density_envelope_mu",
            recs.iter().map(|r| {
                (
                    r.t,
                    envelope(
                        r.t,
                        &r.mu,
                        mu0,
                        refs.rho.density(),
                        certificate.k_phi,
                        certificate.big_k_phi,
                    ),
                )
            }),
            slack,
        ));
    }

    let mut jeffreys_margins = Vec::with_capacity(recs.len());
    let pi_d = refs.pi.as_density();
    let rho_d = refs.rho.as_density();
    for r in recs {
        let m_nu = jeffreys(&r.nu, &pi_d)? - kl(&r.nu, &pi_d)?;
        let m_mu = jeffreys(&r.mu, &rho_d)? - kl(&r.mu, &rho_d)?;
        jeffreys_margins.push((r.t, m_nu.min(m_mu)));
    }
    out.push(summarize(
        "jeffreys_ge_kl_to_reference",
        jeffreys_margins.into_iter(),
        slack,
    ));

    Ok(out)
}
