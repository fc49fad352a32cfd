//! Entropy-regularized two-player zero-sum games over probability measures:
//! Gibbs best-response maps with quantitative bounds certificates,
//! best-response and fictitious-play dynamics, damped fixed-point
//! equilibrium computation, and trajectory diagnostics.
//!
//! The regularized objective is
//! V(nu, mu) = F(nu, mu) + (sigma^2/2) (KL(nu|pi) - KL(mu|rho))
//! for a convex-concave payoff functional F and reference measures pi, rho.
//! All measures are discretized on weighted point sets ([`StrategySpace`]),
//! so integrals are weighted sums and everything is exact linear algebra in
//! the log domain.

pub mod bestresponse;
pub mod diagnostics;
pub mod equilibrium;
pub mod flow;
pub mod games;
pub mod measure;
pub mod objective;

pub use bestresponse::{
    best_response_mu, best_response_nu, bounds_certificate, lyapunov, BestResponse,
    BestResponseError, BoundsCertificate, RegularizationParams,
};
pub use diagnostics::{
    fit_exponential_rate, fit_log_log_rate, verify_inequalities, DiagnosticsError,
    InequalityCheck, RateFit, TraceField,
};
pub use equilibrium::{
    first_order_residual, ni_error, ni_log_partition, picard_solve, value, EquilibriumError,
    EquilibriumResult, NiMode, NiRecord, PicardConfig,
};
pub use flow::{
    fp_br_equivalence_check, simulate, simulate_fictitious_play, step_explicit_euler,
    step_exponential, step_fictitious_play, EquivalenceReport, FlowConfig, FlowError, PairState,
    ReferencePair, Scheme, Trajectory, TrajectoryRecord,
};
pub use games::{by_name as game_by_name, Game, GameError, BUILTIN_NAMES};
pub use measure::{
    jeffreys, kl, log_sum_exp, tv, Density, MeasureError, ReferenceMeasure, StrategySpace,
};
pub use objective::{
    check_convex_concave, check_flat_derivative, kernel_from_csv, random_density, seeded_rng,
    BilinearObjective, CheckReport, CompositeObjective, Objective, ObjectiveError,
};
