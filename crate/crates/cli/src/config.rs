//! Experiment configuration: JSON schema, validation and construction of the
//! objective, reference measures and initial state.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use mfbr::{
    game_by_name, kernel_from_csv, random_density, seeded_rng, BilinearObjective,
    CompositeObjective, Density, Objective, PairState, PicardConfig, ReferenceMeasure,
    ReferencePair, RegularizationParams, Scheme, StrategySpace,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Strategy spaces and reference measures; must be omitted when the
    /// objective is a named builtin (the builtin carries its own).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spaces: Option<SpacesSpec>,
    pub objective: ObjectiveSpec,
    pub sigma: f64,
    pub alpha: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub tau: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub picard: PicardSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anneal: Option<AnnealSpec>,
}

fn default_scheme() -> Scheme {
    Scheme::Exponential
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesSpec {
    pub x: SpaceSpec,
    pub y: SpaceSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub kind: SpaceKind,
    pub n_points: usize,
    /// Required for grid spaces, forbidden for finite ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<(f64, f64)>,
    #[serde(default)]
    pub potential: PotentialSpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Finite,
    Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialSpec {
    #[default]
    Uniform,
    Gaussian {
        mean: f64,
        std: f64,
    },
    /// File with one potential value per line, matching the space size.
    Table {
        file: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Builtin {
        name: String,
    },
    Bilinear {
        kernel_file: PathBuf,
    },
    Composite {
        kernel_file: PathBuf,
        g: Vec<f64>,
        h: Vec<f64>,
        lambda: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    #[default]
    Reference,
    Random,
    /// Files with one density value per line for each side.
    Table {
        nu_file: PathBuf,
        mu_file: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSpec {
    pub damping: f64,
    pub tol_tv: f64,
    pub max_iter: usize,
}

impl Default for PicardSpec {
    fn default() -> Self {
        let d = PicardConfig::default();
        Self {
            damping: d.damping,
            tol_tv: d.tol_tv,
            max_iter: d.max_iter,
        }
    }
}

impl PicardSpec {
    pub fn to_core(&self) -> PicardConfig {
        PicardConfig {
            damping: self.damping,
            tol_tv: self.tol_tv,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSpec {
    pub sigma_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_star: Option<f64>,
}

/// Objective built from a config.
pub enum BuiltObjective {
    Bilinear(BilinearObjective),
    Composite(CompositeObjective),
}

impl BuiltObjective {
    pub fn as_dyn(&self) -> &dyn Objective {
        match self {
            BuiltObjective::Bilinear(o) => o,
            BuiltObjective::Composite(o) => o,
        }
    }

}

/// Fully constructed experiment: objective, references and parameters.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub objective: BuiltObjective,
    pub refs: ReferencePair,
}

impl ExperimentConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        RegularizationParams::new(self.sigma, self.alpha)
            .map_err(|e| anyhow!("{e}"))?;
        if !(self.tau.is_finite() && self.tau > 0.0) {
            bail!("tau must be positive, got {}", self.tau);
        }
        if !(self.t_end.is_finite()) || self.t_end < self.tau {
            bail!("t_end must be at least tau, got t_end={} tau={}", self.t_end, self.tau);
        }
        if self.record_stride == 0 {
            bail!("record_stride must be at least 1");
        }
        self.picard.to_core().validate().map_err(|e| anyhow!("{e}"))?;
        match (&self.objective, &self.spaces) {
            (ObjectiveSpec::Builtin { .. }, Some(_)) => {
                bail!("spaces must be omitted for a builtin objective")
            }
            (ObjectiveSpec::Builtin { .. }, None) => {}
            (_, None) => bail!("spaces are required for a kernel-file objective"),
            (_, Some(s)) => {
                s.x.validate("spaces.x")?;
                s.y.validate("spaces.y")?;
            }
        }
        if let Some(a) = &self.anneal {
            if a.sigma_list.is_empty() {
                bail!("anneal.sigma_list must be non-empty");
            }
            for w in a.sigma_list.windows(2) {
                if !(w[1] < w[0]) {
                    bail!("anneal.sigma_list must be strictly decreasing, got {:?}", a.sigma_list);
                }
            }
            if let Some(&last) = a.sigma_list.last() {
                if !(last.is_finite() && last > 0.0) {
                    bail!("anneal.sigma_list entries must be positive");
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> RegularizationParams {
        RegularizationParams::new(self.sigma, self.alpha).expect("validated at load time")
    }

    /// Builds the objective and reference measures. Paths in the config are
    /// resolved relative to `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Experiment> {
        let (objective, refs) = match &self.objective {
            ObjectiveSpec::Builtin { name } => {
                let game = game_by_name(name).map_err(|e| anyhow!("{e}"))?;
                (BuiltObjective::Bilinear(game.objective), game.refs)
            }
            ObjectiveSpec::Bilinear { kernel_file } => {
                let spaces = self.spaces.as_ref().expect("validated");
                let x = spaces.x.build_space()?;
                let y = spaces.y.build_space()?;
                let kernel = load_kernel(&base_dir.join(kernel_file), x.len(), y.len())?;
                let refs = ReferencePair {
                    pi: spaces.x.build_reference(&x, base_dir)?,
                    rho: spaces.y.build_reference(&y, base_dir)?,
                };
                let obj = BilinearObjective::new(kernel, x, y).map_err(|e| anyhow!("{e}"))?;
                (BuiltObjective::Bilinear(obj), refs)
            }
            ObjectiveSpec::Composite {
                kernel_file,
                g,
                h,
                lambda,
            } => {
                let spaces = self.spaces.as_ref().expect("validated");
                let x = spaces.x.build_space()?;
                let y = spaces.y.build_space()?;
                let kernel = load_kernel(&base_dir.join(kernel_file), x.len(), y.len())?;
                let refs = ReferencePair {
                    pi: spaces.x.build_reference(&x, base_dir)?,
                    rho: spaces.y.build_reference(&y, base_dir)?,
                };
                let bilinear =
                    BilinearObjective::new(kernel, x, y).map_err(|e| anyhow!("{e}"))?;
                let obj = CompositeObjective::new(bilinear, g.clone(), h.clone(), *lambda)
                    .map_err(|e| anyhow!("{e}"))?;
                (BuiltObjective::Composite(obj), refs)
            }
        };
        Ok(Experiment {
            config: self.clone(),
            objective,
            refs,
        })
    }
}

impl SpaceSpec {
    fn validate(&self, label: &str) -> Result<()> {
        if self.n_points == 0 {
            bail!("{label}: n_points must be at least 1");
        }
        match (self.kind, self.bounds) {
            (SpaceKind::Grid, None) => bail!("{label}: grid spaces need bounds"),
            (SpaceKind::Finite, Some(_)) => bail!("{label}: finite spaces take no bounds"),
            (SpaceKind::Grid, Some((lo, hi))) if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                bail!("{label}: bounds must be finite with lo < hi, got ({lo}, {hi})")
            }
            _ => {}
        }
        if let PotentialSpec::Gaussian { std, .. } = self.potential {
            if !(std.is_finite() && std > 0.0) {
                bail!("{label}: gaussian std must be positive, got {std}");
            }
        }
        Ok(())
    }

    fn build_space(&self) -> Result<Arc<StrategySpace>> {
        match self.kind {
            SpaceKind::Finite => StrategySpace::finite(self.n_points).map_err(|e| anyhow!("{e}")),
            SpaceKind::Grid => {
                let (lo, hi) = self.bounds.expect("validated");
                StrategySpace::grid_1d(lo, hi, self.n_points).map_err(|e| anyhow!("{e}"))
            }
        }
    }

    fn build_reference(
        &self,
        space: &Arc<StrategySpace>,
        base_dir: &Path,
    ) -> Result<ReferenceMeasure> {
        match &self.potential {
            PotentialSpec::Uniform => Ok(ReferenceMeasure::uniform(Arc::clone(space))),
            PotentialSpec::Gaussian { mean, std } => {
                ReferenceMeasure::gaussian(Arc::clone(space), *mean, *std)
                    .map_err(|e| anyhow!("{e}"))
            }
            PotentialSpec::Table { file } => {
                let raw = load_column(&base_dir.join(file), space.len())?;
                ReferenceMeasure::normalize(&raw, Arc::clone(space)).map_err(|e| anyhow!("{e}"))
            }
        }
    }
}

impl Experiment {
    /// Initial state at t=0 for the best-response flow, per the `initial` field.
    pub fn initial_state(&self, base_dir: &Path) -> Result<PairState> {
        let (nu, mu) = match &self.config.initial {
            InitialSpec::Reference => (self.refs.pi.as_density(), self.refs.rho.as_density()),
            InitialSpec::Random => {
                let mut rng = seeded_rng(self.config.seed);
                let nu = random_density(self.objective.as_dyn().x_space(), &mut rng);
                let mu = random_density(self.objective.as_dyn().y_space(), &mut rng);
                (nu, mu)
            }
            InitialSpec::Table { nu_file, mu_file } => {
                let x = self.objective.as_dyn().x_space();
                let y = self.objective.as_dyn().y_space();
                let nu_raw = load_column(&base_dir.join(nu_file), x.len())?;
                let mu_raw = load_column(&base_dir.join(mu_file), y.len())?;
                let nu = Density::new(Arc::clone(x), nu_raw).map_err(|e| anyhow!("{e}"))?;
                let mu = Density::new(Arc::clone(y), mu_raw).map_err(|e| anyhow!("{e}"))?;
                (nu, mu)
            }
        };
        Ok(PairState { nu, mu, t: 0.0 })
    }
}

fn load_kernel(path: &Path, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read kernel file {}", path.display()))?;
    let kernel = kernel_from_csv(&text)
        .with_context(|| format!("invalid kernel file {}", path.display()))?;
    if kernel.len() != rows || kernel.iter().any(|r| r.len() != cols) {
        bail!(
            "kernel file {} is {}x{}, expected {rows}x{cols}",
            path.display(),
            kernel.len(),
            kernel.first().map_or(0, |r| r.len()),
        );
    }
    Ok(kernel)
}

fn load_column(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read table file {}", path.display()))?;
    let mut vals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .with_context(|| format!("{}:{}: not a number: {line:?}", path.display(), i + 1))?;
        if !v.is_finite() {
            bail!("{}:{}: non-finite value {v}", path.display(), i + 1);
        }
        vals.push(v);
    }
    if vals.len() != expected {
        bail!(
            "table file {} has {} values, expected {expected}",
            path.display(),
            vals.len()
        );
    }
    Ok(vals)
}
