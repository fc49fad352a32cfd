//! Built-in example games for experiments and tests.

use std::sync::Arc;

use crate::flow::ReferencePair;
use crate::measure::{MeasureError, ReferenceMeasure, StrategySpace};
use crate::objective::{BilinearObjective, ObjectiveError};

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("unknown builtin game {0:?}; available: {}", BUILTIN_NAMES.join(", "))]
    Unknown(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

pub const BUILTIN_NAMES: [&str; 3] = ["matching_pennies", "asym_2x2", "gaussian_grid_64"];

/// A ready-to-run bilinear game: payoff kernel plus reference measures.
pub struct Game {
    pub name: &'static str,
    pub objective: BilinearObjective,
    pub refs: ReferencePair,
}

pub fn by_name(name: &str) -> Result<Game, GameError> {
    match name {
        "matching_pennies" => matching_pennies(),
        "asym_2x2" => asym_2x2(),
        "gaussian_grid_64" => gaussian_grid_64(),
        other => Err(GameError::Unknown(other.to_string())),
    }
}

fn uniform_pair(
    x: &Arc<StrategySpace>,
    y: &Arc<StrategySpace>,
) -> ReferencePair {
    ReferencePair {
        pi: ReferenceMeasure::uniform(Arc::clone(x)),
        rho: ReferenceMeasure::uniform(Arc::clone(y)),
    }
}

/// Zero-sum 2x2 with kernel [[1,-1],[-1,1]]; the unregularized equilibrium
/// is uniform for both players and stays uniform under regularization.
pub fn matching_pennies() -> Result<Game, GameError> {
    let x = StrategySpace::finite(2)?;
    let y = StrategySpace::finite(2)?;
    let refs = uniform_pair(&x, &y);
    let objective =
        BilinearObjective::new(vec![vec![1.0, -1.0], vec![-1.0, 1.0]], x, y)?;
    Ok(Game {
        name: "matching_pennies",
        objective,
        refs,
    })
}

/// Asymmetric 2x2 with kernel [[3,0],[1,2]]. The unregularized game has the
/// fully mixed equilibrium nu=(1/4,3/4), mu=(1/2,1/2) and value 3/2, which
/// the regularized equilibria approach as sigma shrinks.
pub fn asym_2x2() -> Result<Game, GameError> {
    let x = StrategySpace::finite(2)?;
    let y = StrategySpace::finite(2)?;
    let refs = uniform_pair(&x, &y);
    let objective =
        BilinearObjective::new(vec![vec![3.0, 0.0], vec![1.0, 2.0]], x, y)?;
    Ok(Game {
        name: "asym_2x2",
        objective,
        refs,
    })
}

/// Continuous game discretized on two 64-point grids over [-3, 3] with
/// standard Gaussian references and the smooth bounded kernel
/// f(x, y) = sin(x) cos(y) + x y / 9.
pub fn gaussian_grid_64() -> Result<Game, GameError> {
    let x = StrategySpace::grid_1d(-3.0, 3.0, 64)?;
    let y = StrategySpace::grid_1d(-3.0, 3.0, 64)?;
    let refs = ReferencePair {
        pi: ReferenceMeasure::gaussian(Arc::clone(&x), 0.0, 1.0)?,
        rho: ReferenceMeasure::gaussian(Arc::clone(&y), 0.0, 1.0)?,
    };
    let objective = BilinearObjective::from_fn(x, y, |p, q| {
        p[0].sin() * q[0].cos() + p[0] * q[0] / 9.0
    })?;
    Ok(Game {
        name: "gaussian_grid_64",
        objective,
        refs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bestresponse::RegularizationParams;
    use crate::equilibrium::{picard_solve, PicardConfig};
    use crate::objective::{check_convex_concave, check_flat_derivative, Objective};
    use approx::assert_abs_diff_eq;

    #[test]
    fn by_name_round_trip() {
        for name in BUILTIN_NAMES {
            let g = by_name(name).unwrap();
            assert_eq!(g.name, name);
        }
        assert!(matches!(by_name("nope"), Err(GameError::Unknown(_))));
    }

    #[test]
    fn builtin_oracles_pass_structure_checks() {
        for name in BUILTIN_NAMES {
            let g = by_name(name).unwrap();
            let cc = check_convex_concave(&g.objective, 50, 11).unwrap();
            assert!(cc.pass, "{name}: {cc:?}");
            let fd = check_flat_derivative(&g.objective, 1e-6, 20, 13).unwrap();
            assert!(fd.pass, "{name}: {fd:?}");
        }
    }

    #[test]
    fn pennies_bound_is_one() {
        let g = matching_pennies().unwrap();
        assert_abs_diff_eq!(g.objective.bound_c_nu(), 1.0);
        assert_abs_diff_eq!(g.objective.bound_c_mu(), 1.0);
    }

    #[test]
    fn asym_value_approaches_unregularized() {
        // value at the unregularized equalizer strategies is exactly 3/2
        let g = asym_2x2().unwrap();
        let nu = crate::measure::Density::new(Arc::clone(g.objective.x_space()), vec![0.25, 0.75])
            .unwrap();
        let mu = crate::measure::Density::new(Arc::clone(g.objective.y_space()), vec![0.5, 0.5])
            .unwrap();
        assert_abs_diff_eq!(g.objective.value(&nu, &mu), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn grid_game_solves_on_the_grid() {
        let g = gaussian_grid_64().unwrap();
        let params = RegularizationParams::new(1.0, 1.0).unwrap();
        let r = picard_solve(
            &g.objective,
            &params,
            &g.refs,
            &PicardConfig::default(),
            None,
        )
        .unwrap();
        assert!(r.converged, "residual {}", r.final_tv_residual);
        assert!(r.foc_residual_nu <= 1e-10);
    }
}
