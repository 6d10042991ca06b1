//! JSON run configurations. Unknown keys are hard errors: silent typos
//! corrupt sweeps.

use memoryscope::dynamics::{
    DynamicalMapFamily, FpDephasingParams, THICKNESS_MAX_LAMBDA, THICKNESS_MIN_LAMBDA,
    ThicknessToTime,
};
use memoryscope::experiment::{NoiseSpec, calibrate_thickness_scale};
use memoryscope::measure::{PairLattice, TimeGrid};
use memoryscope::qstate::{BlochVector, DensityMatrix, bloch_to_density};
use memoryscope::surfaces::{
    DirectionLattice, EnclosingSurface, make_convex_combination_surface,
    make_hemispherical_sphere_surface, make_sphere_surface,
};
use serde::Deserialize;
use std::path::Path;

/// Either error class maps to its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2: unreadable, malformed, or inconsistent configuration.
    Config(String),
    /// Exit 3: validation or numerical failure during the run.
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Run(msg) => write!(f, "{msg}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 3,
        }
    }
}

pub fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Time grid, either directly in family time or as a plate-thickness window
/// in units of lambda0.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Thickness {
        #[serde(rename = "L_min_lambda")]
        l_min_lambda: f64,
        #[serde(rename = "L_max_lambda")]
        l_max_lambda: f64,
        points: usize,
    },
    Time { t_min: f64, t_max: f64, points: usize },
}

impl GridSpec {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            GridSpec::Thickness { l_min_lambda, l_max_lambda, .. } => (l_min_lambda, l_max_lambda),
            GridSpec::Time { t_min, t_max, .. } => (t_min, t_max),
        }
    }

    pub fn points(&self) -> usize {
        match *self {
            GridSpec::Thickness { points, .. } | GridSpec::Time { points, .. } => points,
        }
    }

    pub fn with_bounds(&self, lo: f64, hi: f64) -> GridSpec {
        match *self {
            GridSpec::Thickness { points, .. } => {
                GridSpec::Thickness { l_min_lambda: lo, l_max_lambda: hi, points }
            }
            GridSpec::Time { points, .. } => GridSpec::Time { t_min: lo, t_max: hi, points },
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid, CliError> {
        let (lo, hi) = self.bounds();
        TimeGrid::new(lo, hi, self.points()).map_err(config_err)
    }
}

/// Delay model for the dephasing family; `calibrated` fits the affine scale
/// by maximizing the model measure over the config's own grid window.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThicknessToTimeSpec {
    Physical,
    Affine { a: f64, b: f64 },
    Calibrated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpParamsSpec {
    pub a_alpha: f64,
    pub sigma: Option<f64>,
    pub delta_omega: Option<f64>,
    pub delta_n: Option<f64>,
    pub lambda0: Option<f64>,
    pub angular_convention: Option<memoryscope::dynamics::FrequencyConvention>,
    pub amplitude_convention: Option<memoryscope::dynamics::AmplitudeConvention>,
    pub thickness_to_time: Option<ThicknessToTimeSpec>,
}

impl FpParamsSpec {
    pub fn params(&self) -> FpDephasingParams {
        let mut p = FpDephasingParams::reported(self.a_alpha);
        if let Some(v) = self.sigma {
            p.sigma = v;
        }
        if let Some(v) = self.delta_omega {
            p.delta_omega = v;
        }
        if let Some(v) = self.delta_n {
            p.delta_n = v;
        }
        if let Some(v) = self.lambda0 {
            p.lambda0 = v;
        }
        if let Some(v) = self.angular_convention {
            p.angular_convention = v;
        }
        if let Some(v) = self.amplitude_convention {
            p.amplitude_convention = v;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeDampingSpec {
    pub gamma: f64,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomCptpSpec {
    pub seed: u64,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySpec {
    pub dim: usize,
    pub horizon: f64,
}

/// A reference or pair state, as Bloch coordinates or an explicit matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Bloch(BlochVector),
    Matrix(DensityMatrix),
}

impl StateSpec {
    pub fn state(&self) -> DensityMatrix {
        match self {
            StateSpec::Bloch(b) => bloch_to_density(b),
            StateSpec::Matrix(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Sphere { reference: StateSpec, eps: f64 },
    ConvexCombination { reference: StateSpec, w: f64 },
    HemisphericalPatchwork { reference: StateSpec, eps: f64 },
}

impl SurfaceSpec {
    pub fn reference(&self) -> DensityMatrix {
        match self {
            SurfaceSpec::Sphere { reference, .. }
            | SurfaceSpec::ConvexCombination { reference, .. }
            | SurfaceSpec::HemisphericalPatchwork { reference, .. } => reference.state(),
        }
    }

    pub fn build(&self) -> Result<EnclosingSurface, CliError> {
        match self {
            SurfaceSpec::Sphere { reference, eps } => {
                make_sphere_surface(&reference.state(), *eps).map_err(run_err)
            }
            SurfaceSpec::ConvexCombination { reference, w } => {
                make_convex_combination_surface(&reference.state(), *w).map_err(run_err)
            }
            SurfaceSpec::HemisphericalPatchwork { reference, eps } => {
                make_hemispherical_sphere_surface(&reference.state(), *eps).map_err(run_err)
            }
        }
    }
}

/// Sampling lattice; the first two kinds drive the local engine, the last
/// two the orthogonal-pair engine.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeSpec {
    QubitAngles { n_theta: usize, n_phi: usize },
    RandomDirections { n_directions: usize, seed: u64 },
    QubitAntipodal { n_theta: usize, n_phi: usize },
    RandomOrthogonal { n_pairs: usize, seed: u64 },
}

impl LatticeSpec {
    pub fn direction_lattice(&self) -> Result<DirectionLattice, CliError> {
        match *self {
            LatticeSpec::QubitAngles { n_theta, n_phi } => {
                Ok(DirectionLattice::QubitAngles { n_theta, n_phi })
            }
            LatticeSpec::RandomDirections { n_directions, seed } => {
                Ok(DirectionLattice::RandomDirections { n_directions, seed })
            }
            _ => Err(CliError::Config(
                "local mode needs a qubit_angles or random_directions lattice".into(),
            )),
        }
    }

    pub fn pair_lattice(&self) -> Result<PairLattice, CliError> {
        match *self {
            // An angular lattice doubles as the antipodal-pair grid.
            LatticeSpec::QubitAngles { n_theta, n_phi }
            | LatticeSpec::QubitAntipodal { n_theta, n_phi } => {
                Ok(PairLattice::QubitAntipodal { n_theta, n_phi })
            }
            LatticeSpec::RandomOrthogonal { n_pairs, seed } => {
                Ok(PairLattice::RandomOrthogonal { n_pairs, seed })
            }
            _ => Err(CliError::Config(
                "orthogonal mode needs a qubit_antipodal or random_orthogonal lattice".into(),
            )),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            LatticeSpec::RandomDirections { n_directions, .. } => {
                LatticeSpec::RandomDirections { n_directions, seed }
            }
            LatticeSpec::RandomOrthogonal { n_pairs, .. } => {
                LatticeSpec::RandomOrthogonal { n_pairs, seed }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub rho_a: StateSpec,
    pub rho_b: StateSpec,
}

/// One configuration shape serves every subcommand; each command checks for
/// the keys it needs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Option<String>,
    pub params: Option<serde_json::Value>,
    pub grid: Option<GridSpec>,
    pub surface: Option<SurfaceSpec>,
    pub lattice: Option<LatticeSpec>,
    pub pair: Option<PairSpec>,
    pub n_directions: Option<usize>,
    pub n_bins: Option<usize>,
    pub noise: Option<NoiseSpec>,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// The family with its grid and, for the dephasing model, the resolved
/// calibration.
pub struct FamilyRun {
    pub family: DynamicalMapFamily,
    pub grid: TimeGrid,
    pub calibration: Option<ThicknessToTime>,
    pub seed: Option<u64>,
}

pub fn build_family(
    config: &RunConfig,
    window: Option<(f64, f64)>,
    seed_override: Option<u64>,
) -> Result<FamilyRun, CliError> {
    let name = config
        .family
        .as_deref()
        .ok_or_else(|| CliError::Config("missing \"family\" key".into()))?;
    let params_value = config.params.clone().unwrap_or(serde_json::Value::Null);
    let mut grid = config
        .grid
        .ok_or_else(|| CliError::Config("missing \"grid\" key".into()))?;
    if let Some((lo, hi)) = window {
        grid = grid.with_bounds(lo, hi);
    }
    match name {
        "fp_dephasing" => {
            let spec: FpParamsSpec = serde_json::from_value(params_value).map_err(config_err)?;
            let params = spec.params();
            params.validate().map_err(config_err)?;
            let (lo, hi) = grid.bounds();
            if !(THICKNESS_MIN_LAMBDA..=THICKNESS_MAX_LAMBDA).contains(&lo)
                || !(THICKNESS_MIN_LAMBDA..=THICKNESS_MAX_LAMBDA).contains(&hi)
            {
                return Err(CliError::Config(format!(
                    "fp_dephasing window ({lo}, {hi}) must lie in \
                     [{THICKNESS_MIN_LAMBDA}, {THICKNESS_MAX_LAMBDA}] lambda0"
                )));
            }
            let calibration = match spec.thickness_to_time.unwrap_or(ThicknessToTimeSpec::Physical)
            {
                ThicknessToTimeSpec::Physical => ThicknessToTime::Physical,
                ThicknessToTimeSpec::Affine { a, b } => ThicknessToTime::Affine { a, b },
                ThicknessToTimeSpec::Calibrated => {
                    calibrate_thickness_scale(&params, grid.bounds(), grid.points())
                        .map_err(run_err)?
                }
            };
            Ok(FamilyRun {
                family: DynamicalMapFamily::fp_dephasing(params, calibration).map_err(run_err)?,
                grid: grid.time_grid()?,
                calibration: Some(calibration),
                seed: None,
            })
        }
        "amplitude_damping" => {
            let spec: AmplitudeDampingSpec =
                serde_json::from_value(params_value).map_err(config_err)?;
            let horizon = spec.horizon.unwrap_or(grid.bounds().1);
            Ok(FamilyRun {
                family: DynamicalMapFamily::amplitude_damping(spec.gamma, horizon)
                    .map_err(config_err)?,
                grid: grid.time_grid()?,
                calibration: None,
                seed: None,
            })
        }
        "random_cptp" => {
            let mut spec: RandomCptpSpec =
                serde_json::from_value(params_value).map_err(config_err)?;
            if let Some(seed) = seed_override {
                spec.seed = seed;
            }
            Ok(FamilyRun {
                family: DynamicalMapFamily::random_cptp(spec.seed, spec.dim)
                    .map_err(config_err)?,
                grid: grid.time_grid()?,
                calibration: None,
                seed: Some(spec.seed),
            })
        }
        "identity" => {
            let spec: IdentitySpec = serde_json::from_value(params_value).map_err(config_err)?;
            Ok(FamilyRun {
                family: DynamicalMapFamily::identity(spec.dim, spec.horizon),
                grid: grid.time_grid()?,
                calibration: None,
                seed: None,
            })
        }
        other => Err(CliError::Config(format!(
            "unknown family \"{other}\" (expected fp_dephasing, amplitude_damping, \
             random_cptp, or identity)"
        ))),
    }
}
