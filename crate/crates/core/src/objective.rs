//! The convex-concave objective F with its flat derivatives, concrete
//! bilinear and composite nonlinear instances, and numerical checks of the
//! convexity/boundedness assumptions the convergence theory relies on.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::measure::{same_space, Density, MeasureError, StrategySpace};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("kernel matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    KernelShape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("non-finite kernel entry at ({0}, {1})")]
    NonFiniteKernel(usize, usize),
    #[error("non-finite entry at index {0} in {1}")]
    NonFiniteVector(usize, &'static str),
    #[error("density lives on the wrong strategy space for this objective")]
    SpaceMismatch,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// An oracle for F(nu, mu) with flat derivatives and declared bound constants.
///
/// `dnu` returns the vector x -> dF/dnu(nu, mu, x) over the first player's
/// grid, `dmu` the mirror over the second player's grid. The derivatives are
/// returned without any zero-mean normalization; the best-response maps are
/// invariant to constant shifts so none is needed.
pub trait Objective {
    fn value(&self, nu: &Density, mu: &Density) -> f64;
    fn dnu(&self, nu: &Density, mu: &Density) -> Vec<f64>;
    fn dmu(&self, nu: &Density, mu: &Density) -> Vec<f64>;
    /// Uniform bound on |dF/dnu|.
    fn bound_c_nu(&self) -> f64;
    /// Uniform bound on |dF/dmu|.
    fn bound_c_mu(&self) -> f64;
    fn x_space(&self) -> &Arc<StrategySpace>;
    fn y_space(&self) -> &Arc<StrategySpace>;
    /// Whether F is bilinear, i.e. dnu is independent of nu and dmu of mu.
    fn is_bilinear(&self) -> bool {
        false
    }
}

/// F(nu, mu) = sum_ij w_i w_j f(x_i, y_j) nu_i mu_j for a bounded kernel f.
#[derive(Debug, Clone)]
pub struct BilinearObjective {
    kernel: Vec<Vec<f64>>,
    x_space: Arc<StrategySpace>,
    y_space: Arc<StrategySpace>,
    max_abs: f64,
}

impl BilinearObjective {
    pub fn new(
        kernel: Vec<Vec<f64>>,
        x_space: Arc<StrategySpace>,
        y_space: Arc<StrategySpace>,
    ) -> Result<Self, ObjectiveError> {
        if kernel.len() != x_space.len() {
            return Err(ObjectiveError::KernelShape {
                rows: kernel.len(),
                cols: kernel.first().map_or(0, Vec::len),
                expected_rows: x_space.len(),
                expected_cols: y_space.len(),
            });
        }
        let mut max_abs = 0.0f64;
        for (i, row) in kernel.iter().enumerate() {
            if row.len() != y_space.len() {
                return Err(ObjectiveError::KernelShape {
                    rows: kernel.len(),
                    cols: row.len(),
                    expected_rows: x_space.len(),
                    expected_cols: y_space.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ObjectiveError::NonFiniteKernel(i, j));
                }
                max_abs = max_abs.max(v.abs());
            }
        }
        Ok(Self {
            kernel,
            x_space,
            y_space,
            max_abs,
        })
    }

    /// Builds the kernel by evaluating f on the product of grid points.
    pub fn from_fn(
        x_space: Arc<StrategySpace>,
        y_space: Arc<StrategySpace>,
        f: impl Fn(&[f64], &[f64]) -> f64,
    ) -> Result<Self, ObjectiveError> {
        let kernel = x_space
            .points()
            .iter()
            .map(|x| y_space.points().iter().map(|y| f(x, y)).collect())
            .collect();
        Self::new(kernel, x_space, y_space)
    }

    pub fn kernel(&self) -> &[Vec<f64>] {
        &self.kernel
    }

    pub fn max_abs_kernel(&self) -> f64 {
        self.max_abs
    }

    /// dF/dnu(x_i) = sum_j w_j f(x_i, y_j) mu_j; independent of nu.
    pub fn dnu_of_mu(&self, mu: &Density) -> Vec<f64> {
        let wy = self.y_space.weights();
        self.kernel
            .iter()
            .map(|row| {
                row.iter()
                    .zip(wy.iter().zip(mu.values()))
                    .map(|(f, (w, m))| f * w * m)
                    .sum()
            })
            .collect()
    }

    /// dF/dmu(y_j) = sum_i w_i f(x_i, y_j) nu_i; independent of mu.
    pub fn dmu_of_nu(&self, nu: &Density) -> Vec<f64> {
        let wx = self.x_space.weights();
        let mut out = vec![0.0; self.y_space.len()];
        for (row, (w, n)) in self.kernel.iter().zip(wx.iter().zip(nu.values())) {
            let wn = w * n;
            for (o, f) in out.iter_mut().zip(row) {
                *o += wn * f;
            }
        }
        out
    }
}

impl Objective for BilinearObjective {
    fn value(&self, nu: &Density, mu: &Density) -> f64 {
        // contract one side first, then take the expectation under nu
        let dnu = self.dnu_of_mu(mu);
        nu.expect(&dnu)
    }

    fn dnu(&self, _nu: &Density, mu: &Density) -> Vec<f64> {
        self.dnu_of_mu(mu)
    }

    fn dmu(&self, nu: &Density, _mu: &Density) -> Vec<f64> {
        self.dmu_of_nu(nu)
    }

    fn bound_c_nu(&self) -> f64 {
        self.max_abs
    }

    fn bound_c_mu(&self) -> f64 {
        self.max_abs
    }

    fn x_space(&self) -> &Arc<StrategySpace> {
        &self.x_space
    }

    fn y_space(&self) -> &Arc<StrategySpace> {
        &self.y_space
    }

    fn is_bilinear(&self) -> bool {
        true
    }
}

/// A genuinely nonlinear convex-concave test objective:
///
///   F(nu, mu) = <f, nu x mu> + (lambda/2) (int g dnu)^2 - (lambda/2) (int h dmu)^2
///
/// with dF/dnu = int f(., y) mu(dy) + lambda (int g dnu) g(.) and the mirrored
/// dF/dmu. The quadratic terms are convex in nu and concave in mu, so the
/// whole objective stays convex-concave for any lambda >= 0.
#[derive(Debug, Clone)]
pub struct CompositeObjective {
    bilinear: BilinearObjective,
    g: Vec<f64>,
    h: Vec<f64>,
    lambda: f64,
}

impl CompositeObjective {
    pub fn new(
        bilinear: BilinearObjective,
        g: Vec<f64>,
        h: Vec<f64>,
        lambda: f64,
    ) -> Result<Self, ObjectiveError> {
        if g.len() != bilinear.x_space.len() {
            return Err(ObjectiveError::NonFiniteVector(g.len(), "g length"));
        }
        if h.len() != bilinear.y_space.len() {
            return Err(ObjectiveError::NonFiniteVector(h.len(), "h length"));
        }
        for (i, &v) in g.iter().enumerate() {
            if !v.is_finite() {
                return Err(ObjectiveError::NonFiniteVector(i, "g"));
            }
        }
        for (i, &v) in h.iter().enumerate() {
            if !v.is_finite() {
                return Err(ObjectiveError::NonFiniteVector(i, "h"));
            }
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(ObjectiveError::NonFiniteVector(0, "lambda"));
        }
        Ok(Self {
            bilinear,
            g,
            h,
            lambda,
        })
    }
}

impl Objective for CompositeObjective {
    fn value(&self, nu: &Density, mu: &Density) -> f64 {
        let gn = nu.expect(&self.g);
        let hm = mu.expect(&self.h);
        self.bilinear.value(nu, mu) + 0.5 * self.lambda * (gn * gn - hm * hm)
    }

    fn dnu(&self, nu: &Density, mu: &Density) -> Vec<f64> {
        let gn = self.lambda * nu.expect(&self.g);
        let mut out = self.bilinear.dnu_of_mu(mu);
        for (o, g) in out.iter_mut().zip(&self.g) {
            *o += gn * g;
        }
        out
    }

    fn dmu(&self, nu: &Density, mu: &Density) -> Vec<f64> {
        let hm = self.lambda * mu.expect(&self.h);
        let mut out = self.bilinear.dmu_of_nu(nu);
        for (o, h) in out.iter_mut().zip(&self.h) {
            *o -= hm * h;
        }
        out
    }

    fn bound_c_nu(&self) -> f64 {
        let gmax = self.g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.bilinear.max_abs + self.lambda * gmax * gmax
    }

    fn bound_c_mu(&self) -> f64 {
        let hmax = self.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.bilinear.max_abs + self.lambda * hmax * hmax
    }

    fn x_space(&self) -> &Arc<StrategySpace> {
        &self.bilinear.x_space
    }

    fn y_space(&self) -> &Arc<StrategySpace> {
        &self.bilinear.y_space
    }

    fn is_bilinear(&self) -> bool {
        self.lambda == 0.0
    }
}

/// Draws an interior random density by exponentiating standard normals on the
/// grid and normalizing.
pub fn random_density(space: &Arc<StrategySpace>, rng: &mut impl Rng) -> Density {
    let z: Vec<f64> = (0..space.len())
        .map(|_| {
            // Box-Muller on two uniforms, one sample per point
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect();
    let vals: Vec<f64> = z.iter().map(|&z| z.exp()).collect();
    Density::from_unnormalized(Arc::clone(space), vals)
        .expect("exponentiated normals are positive and finite")
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Result of a randomized numerical check on an objective oracle.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub trials: usize,
    pub seed: u64,
    /// Worst-case violation; the check passes when it is below tolerance.
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Tests convexity in nu and concavity in mu through the first-order gap:
/// F(nu', mu) - F(nu, mu) >= <dnu(nu, mu), nu' - nu> and the mirror in mu.
pub fn check_convex_concave(
    oracle: &dyn Objective,
    trials: usize,
    seed: u64,
) -> Result<CheckReport, ObjectiveError> {
    let mut rng = seeded_rng(seed);
    let tolerance = 1e-9;
    let mut max_violation = 0.0f64;
    for _ in 0..trials.max(1) {
        let nu = random_density(oracle.x_space(), &mut rng);
        let nu2 = random_density(oracle.x_space(), &mut rng);
        let mu = random_density(oracle.y_space(), &mut rng);
        let mu2 = random_density(oracle.y_space(), &mut rng);

        let dnu = oracle.dnu(&nu, &mu);
        let lin: f64 = pair_integral(oracle.x_space(), &dnu, nu2.values(), nu.values());
        let gap = oracle.value(&nu2, &mu) - oracle.value(&nu, &mu) - lin;
        max_violation = max_violation.max(-gap);

        let dmu = oracle.dmu(&nu, &mu);
        let lin: f64 = pair_integral(oracle.y_space(), &dmu, mu2.values(), mu.values());
        let gap = oracle.value(&nu, &mu2) - oracle.value(&nu, &mu) - lin;
        max_violation = max_violation.max(gap);
    }
    Ok(CheckReport {
        name: "convex_concave",
        trials,
        seed,
        max_violation,
        tolerance,
        pass: max_violation <= tolerance,
    })
}

fn pair_integral(space: &Arc<StrategySpace>, d: &[f64], a: &[f64], b: &[f64]) -> f64 {
    space
        .weights()
        .iter()
        .zip(d.iter().zip(a.iter().zip(b)))
        .map(|(w, (d, (a, b)))| w * d * (a - b))
        .sum()
}

/// Directional finite-difference consistency of the flat derivative:
/// F(nu + eps (nu' - nu), mu) - F(nu, mu) = eps <dnu, nu' - nu> + O(eps^2).
pub fn check_flat_derivative(
    oracle: &dyn Objective,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<CheckReport, ObjectiveError> {
    assert!(eps > 0.0 && eps <= 0.1, "eps must lie in (0, 0.1]");
    let mut rng = seeded_rng(seed);
    let mut max_violation = 0.0f64;
    let scale = oracle.bound_c_nu().max(oracle.bound_c_mu()).max(1.0);
    for _ in 0..trials.max(1) {
        let nu = random_density(oracle.x_space(), &mut rng);
        let nu2 = random_density(oracle.x_space(), &mut rng);
        let mu = random_density(oracle.y_space(), &mut rng);
        let mu2 = random_density(oracle.y_space(), &mut rng);

        let blend_nu = blend(&nu, &nu2, eps)?;
        let fd = oracle.value(&blend_nu, &mu) - oracle.value(&nu, &mu);
        let lin = eps * pair_integral(oracle.x_space(), &oracle.dnu(&nu, &mu), nu2.values(), nu.values());
        max_violation = max_violation.max((fd - lin).abs() / (scale * eps));

        let blend_mu = blend(&mu, &mu2, eps)?;
        let fd = oracle.value(&nu, &blend_mu) - oracle.value(&nu, &mu);
        let lin = eps * pair_integral(oracle.y_space(), &oracle.dmu(&nu, &mu), mu2.values(), mu.values());
        max_violation = max_violation.max((fd - lin).abs() / (scale * eps));
    }
    // the remainder of a flat-derivative expansion is second order, so the
    // eps-relative error should itself be O(eps)
    let tolerance = eps;
    Ok(CheckReport {
        name: "flat_derivative",
        trials,
        seed,
        max_violation,
        tolerance,
        pass: max_violation <= tolerance,
    })
}

fn blend(a: &Density, b: &Density, eps: f64) -> Result<Density, MeasureError> {
    let vals = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (1.0 - eps) * x + eps * y)
        .collect();
    Density::new(Arc::clone(a.space()), vals)
}

/// Parses a kernel matrix from CSV text: one row per line, plain decimals.
/// A single non-numeric header line is permitted and skipped.
pub fn kernel_from_csv(text: &str) -> Result<Vec<Vec<f64>>, ObjectiveError> {
    let mut rows = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                for (j, &v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(ObjectiveError::NonFiniteKernel(li, j));
                    }
                }
                rows.push(row);
            }
            Err(_) if li == 0 && rows.is_empty() => continue, // header
            Err(_) => return Err(ObjectiveError::NonFiniteKernel(li, 0)),
        }
    }
    if rows.is_empty() {
        return Err(ObjectiveError::KernelShape {
            rows: 0,
            cols: 0,
            expected_rows: 1,
            expected_cols: 1,
        });
    }
    Ok(rows)
}

/// Ensures a density belongs to the given space of an objective.
pub fn expect_space(d: &Density, space: &Arc<StrategySpace>) -> Result<(), ObjectiveError> {
    if same_space(d.space(), space) {
        Ok(())
    } else {
        Err(ObjectiveError::SpaceMismatch)
    }
}
