//! The two measure engines: maximization over orthogonal pairs and the
//! local enclosing-surface scan, sharing one increase-integration kernel.

use crate::dynamics::{ChannelAtTime, DynamicalMapFamily};
use crate::linalg::CMat;
use crate::qstate::{self, DensityMatrix, trace_distance};
use crate::surfaces::{DirectionLattice, EnclosingSurface};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Strict-increase tolerance; suppresses floating-point jitter on flat
/// trajectories.
pub const INCREASE_TOL: f64 = 1e-14;

/// Uniform, inclusive time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::EmptyLattice(format!("time grid needs >= 2 points, got {points}")));
        }
        if !(t_min < t_max) {
            return Err(Error::InvalidParameter(format!("t_min {t_min} must be < t_max {t_max}")));
        }
        Ok(TimeGrid { t_min, t_max, points })
    }

    pub fn times(&self) -> Vec<f64> {
        let step = (self.t_max - self.t_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.t_min + i as f64 * step).collect()
    }
}

/// Sampled trace-distance time series between two evolving states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceDistanceTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub initial_distance: f64,
}

impl TraceDistanceTrajectory {
    pub fn new(times: Vec<f64>, values: Vec<f64>, initial_distance: f64) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "trajectory lengths differ: {} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0 + 1e-12).contains(v)) {
            return Err(Error::InvalidParameter("trajectory values outside [0,1]".into()));
        }
        if initial_distance <= 0.0 {
            return Err(Error::CoincidentStates);
        }
        Ok(TraceDistanceTrajectory { times, values, initial_distance })
    }
}

/// A maximal run of strictly increasing samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncreaseInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMetadata {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    pub lattice: String,
}

/// Identification of the optimizing state or pair of a scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArgmaxDescriptor {
    None,
    /// Antipodal pure pair along (theta, phi).
    PairAngles { theta: f64, phi: f64 },
    /// Seeded random orthogonal pair, identified by lattice index.
    PairIndex { index: usize },
    /// Surface state, with angles when the lattice is angular.
    SurfacePoint {
        index: usize,
        theta: Option<f64>,
        phi: Option<f64>,
        state: Box<DensityMatrix>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureResult {
    pub value: f64,
    pub argmax_descriptor: ArgmaxDescriptor,
    pub increase_intervals: Vec<IncreaseInterval>,
    pub grid_metadata: GridMetadata,
}

/// Per-state row of a scan, for CSV streaming.
#[derive(Debug, Clone, Copy)]
pub struct ScanRow {
    pub index: usize,
    pub theta: f64,
    pub phi: f64,
    pub increase: f64,
    pub normalized_increase: f64,
}

pub struct ScanOutcome {
    pub result: MeasureResult,
    pub rows: Vec<ScanRow>,
}

/// Sampling specification for the orthogonal-pair engine.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairLattice {
    /// Antipodal pure qubit pairs on the (theta, phi) grid with
    /// theta_k = (k + 1/2) pi / n_theta and phi_j = 2 pi j / n_phi.
    QubitAntipodal { n_theta: usize, n_phi: usize },
    /// Seeded orthonormal pairs in dimension >= 2.
    RandomOrthogonal { n_pairs: usize, seed: u64 },
}

/// The maps of a family frozen on a whole grid, so scans over many states
/// reuse the per-time work.
pub struct ChannelTable {
    pub times: Vec<f64>,
    pub channels: Vec<ChannelAtTime>,
}

impl ChannelTable {
    pub fn build(family: &DynamicalMapFamily, grid: &TimeGrid) -> Result<Self> {
        let times = grid.times();
        let channels =
            times.iter().map(|&t| family.channel_at(t)).collect::<Result<Vec<_>>>()?;
        Ok(ChannelTable { times, channels })
    }

    /// Trace-distance trajectory between two states, skipping per-step state
    /// revalidation (the family's CPTP property is checked separately).
    pub fn distance_values(&self, rho_a: &CMat, rho_b: &CMat) -> Vec<f64> {
        let diff = rho_a - rho_b;
        self.channels
            .iter()
            .map(|ch| {
                let evolved = ch.apply_matrix(&diff);
                0.5 * evolved.eigvals_hermitian().iter().map(|v| v.abs()).sum::<f64>()
            })
            .collect()
    }
}

/// Pointwise trace-distance trajectory of a pair of states under a family.
pub fn trajectory(
    family: &DynamicalMapFamily,
    rho_a: &DensityMatrix,
    rho_b: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<TraceDistanceTrajectory> {
    if rho_a.dim() != family.dim() || rho_b.dim() != family.dim() {
        return Err(Error::DimensionMismatch(rho_a.dim(), family.dim()));
    }
    let initial = trace_distance(rho_a, rho_b)?;
    if initial <= qstate::TOL_DISTINCT {
        return Err(Error::CoincidentStates);
    }
    let table = ChannelTable::build(family, grid)?;
    let values = table.distance_values(rho_a.matrix(), rho_b.matrix());
    TraceDistanceTrajectory::new(table.times, values, initial)
}

/// Sum of gains over maximal strictly-increasing runs. The kernel both
/// engines share.
fn increase_runs(times: &[f64], values: &[f64]) -> (f64, Vec<IncreaseInterval>) {
    let mut intervals = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut telescoped = 0.0;
    for i in 0..values.len().saturating_sub(1) {
        let step = values[i + 1] - values[i];
        if step > INCREASE_TOL {
            telescoped += step;
            if run_start.is_none() {
                run_start = Some(i);
            }
        } else if let Some(s) = run_start.take() {
            intervals.push(IncreaseInterval {
                t_start: times[s],
                t_end: times[i],
                gain: values[i] - values[s],
            });
        }
    }
    if let Some(s) = run_start {
        let last = values.len() - 1;
        intervals.push(IncreaseInterval {
            t_start: times[s],
            t_end: times[last],
            gain: values[last] - values[s],
        });
    }
    // fold, not sum: an empty `sum()` yields -0.0.
    let total: f64 = intervals.iter().fold(0.0, |acc, iv| acc + iv.gain);
    debug_assert!((total - telescoped).abs() <= 1e-12 * (1.0 + telescoped.abs()));
    (total, intervals)
}

/// Integrate all increases of a trajectory; divide by the initial distance
/// when `normalize` is set.
pub fn integrate_increases(
    traj: &TraceDistanceTrajectory,
    normalize: bool,
) -> Result<MeasureResult> {
    if traj.values.len() < 2 {
        return Err(Error::EmptyLattice("trajectory shorter than 2 points".into()));
    }
    let (mut total, mut intervals) = increase_runs(&traj.times, &traj.values);
    if normalize {
        total /= traj.initial_distance;
        for iv in &mut intervals {
            iv.gain /= traj.initial_distance;
        }
    }
    Ok(MeasureResult {
        value: total,
        argmax_descriptor: ArgmaxDescriptor::None,
        increase_intervals: intervals,
        grid_metadata: GridMetadata {
            t_min: traj.times[0],
            t_max: *traj.times.last().unwrap(),
            points: traj.times.len(),
            lattice: "single trajectory".into(),
        },
    })
}

fn gain_sum(times: &[f64], values: &[f64]) -> f64 {
    increase_runs(times, values).0
}

/// Enumerate the orthogonal pairs of a lattice, in deterministic order.
fn orthogonal_pairs(
    lattice: &PairLattice,
    dim: usize,
) -> Result<Vec<(ArgmaxDescriptor, DensityMatrix, DensityMatrix)>> {
    match *lattice {
        PairLattice::QubitAntipodal { n_theta, n_phi } => {
            if dim != 2 {
                return Err(Error::DimensionMismatch(dim, 2));
            }
            if n_theta == 0 || n_phi == 0 {
                return Err(Error::EmptyLattice("antipodal lattice is empty".into()));
            }
            let mut pairs = Vec::with_capacity(n_theta * n_phi);
            for k in 0..n_theta {
                let theta = (k as f64 + 0.5) * std::f64::consts::PI / n_theta as f64;
                for j in 0..n_phi {
                    let phi = j as f64 * 2.0 * std::f64::consts::PI / n_phi as f64;
                    let b = crate::qstate::BlochVector::new(1.0, theta, phi)?;
                    let [x, y, z] = b.cartesian();
                    let rho1 = crate::qstate::bloch_to_density(&b);
                    let rho2 = crate::qstate::bloch_to_density(
                        &crate::qstate::BlochVector::from_cartesian(-x, -y, -z)?,
                    );
                    pairs.push((ArgmaxDescriptor::PairAngles { theta, phi }, rho1, rho2));
                }
            }
            Ok(pairs)
        }
        PairLattice::RandomOrthogonal { n_pairs, seed } => {
            if n_pairs == 0 {
                return Err(Error::EmptyLattice("random pair lattice is empty".into()));
            }
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut pairs = Vec::with_capacity(n_pairs);
            for index in 0..n_pairs {
                let (u, v) = random_orthonormal_pair(dim, &mut rng);
                pairs.push((
                    ArgmaxDescriptor::PairIndex { index },
                    DensityMatrix::pure(&u)?,
                    DensityMatrix::pure(&v)?,
                ));
            }
            Ok(pairs)
        }
    }
}

fn random_orthonormal_pair(
    dim: usize,
    rng: &mut impl rand::Rng,
) -> (Vec<crate::linalg::C64>, Vec<crate::linalg::C64>) {
    use crate::linalg::C64;
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let sample = |rng: &mut dyn rand::RngCore| -> Vec<C64> {
            (0..dim)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    C64::new(re, im)
                })
                .collect()
        };
        let u = sample(rng);
        let mut v = sample(rng);
        let nu: f64 = u.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if nu < 1e-6 {
            continue;
        }
        let u: Vec<C64> = u.iter().map(|a| a / nu).collect();
        let overlap: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi -= overlap * ui;
        }
        let nv: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if nv < 1e-6 {
            continue;
        }
        let v: Vec<C64> = v.iter().map(|a| a / nv).collect();
        return (u, v);
    }
}

fn lattice_tag(lattice: &PairLattice) -> String {
    match lattice {
        PairLattice::QubitAntipodal { n_theta, n_phi } => {
            format!("qubit antipodal {n_theta} x {n_phi}")
        }
        PairLattice::RandomOrthogonal { n_pairs, seed } => {
            format!("random orthogonal pairs n = {n_pairs}, seed = {seed}")
        }
    }
}

/// Measure engine over orthogonal initial pairs: max of the unnormalized
/// increase sum over the pair lattice. Ties break toward the earliest
/// lattice entry; the reduction is sequential, so the outcome does not
/// depend on worker count.
pub fn orthogonal_scan(
    family: &DynamicalMapFamily,
    lattice: &PairLattice,
    grid: &TimeGrid,
) -> Result<ScanOutcome> {
    let pairs = orthogonal_pairs(lattice, family.dim())?;
    let table = ChannelTable::build(family, grid)?;
    let gains: Vec<f64> = pairs
        .par_iter()
        .map(|(_, rho1, rho2)| {
            gain_sum(&table.times, &table.distance_values(rho1.matrix(), rho2.matrix()))
        })
        .collect();
    let mut best = 0usize;
    for (i, g) in gains.iter().enumerate() {
        if *g > gains[best] {
            best = i;
        }
    }
    let rows: Vec<ScanRow> = pairs
        .iter()
        .zip(&gains)
        .enumerate()
        .map(|(index, ((desc, _, _), &g))| {
            let (theta, phi) = match desc {
                ArgmaxDescriptor::PairAngles { theta, phi } => (*theta, *phi),
                _ => (f64::NAN, f64::NAN),
            };
            ScanRow { index, theta, phi, increase: g, normalized_increase: g }
        })
        .collect();
    let (desc, rho1, rho2) = &pairs[best];
    let values = table.distance_values(rho1.matrix(), rho2.matrix());
    let (value, intervals) = increase_runs(&table.times, &values);
    Ok(ScanOutcome {
        result: MeasureResult {
            value,
            argmax_descriptor: desc.clone(),
            increase_intervals: intervals,
            grid_metadata: GridMetadata {
                t_min: grid.t_min,
                t_max: grid.t_max,
                points: grid.points,
                lattice: lattice_tag(lattice),
            },
        },
        rows,
    })
}

pub fn measure_orthogonal_scan(
    family: &DynamicalMapFamily,
    lattice: &PairLattice,
    grid: &TimeGrid,
) -> Result<MeasureResult> {
    orthogonal_scan(family, lattice, grid).map(|o| o.result)
}

/// Local measure engine: max of the normalized increase sum over the states
/// of an enclosing surface around an interior reference state.
pub fn local_scan(
    family: &DynamicalMapFamily,
    rho0: &DensityMatrix,
    surface: &EnclosingSurface,
    lattice: &DirectionLattice,
    grid: &TimeGrid,
) -> Result<ScanOutcome> {
    if rho0.dim() != family.dim() {
        return Err(Error::DimensionMismatch(rho0.dim(), family.dim()));
    }
    if trace_distance(rho0, surface.reference())? > 1e-12 {
        return Err(Error::InvalidSurface(
            "surface reference differs from the supplied rho0".into(),
        ));
    }
    let margin = rho0.min_eigenvalue();
    if margin <= 0.0 {
        return Err(Error::NotInterior { margin, eps: 0.0 });
    }
    let samples = surface.sample(lattice)?;
    if samples.is_empty() {
        return Err(Error::EmptyLattice("surface lattice produced no samples".into()));
    }
    let table = ChannelTable::build(family, grid)?;
    let per_state: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let d0 = trace_distance(&s.state, rho0).expect("dimensions already checked");
            let g = gain_sum(&table.times, &table.distance_values(s.state.matrix(), rho0.matrix()));
            (g, g / d0)
        })
        .collect();
    let mut best = 0usize;
    for (i, (_, norm)) in per_state.iter().enumerate() {
        if *norm > per_state[best].1 {
            best = i;
        }
    }
    let rows: Vec<ScanRow> = samples
        .iter()
        .zip(&per_state)
        .map(|(s, &(g, gn))| ScanRow {
            index: s.index,
            theta: s.theta.unwrap_or(f64::NAN),
            phi: s.phi.unwrap_or(f64::NAN),
            increase: g,
            normalized_increase: gn,
        })
        .collect();
    let winner = &samples[best];
    let d0 = trace_distance(&winner.state, rho0)?;
    let values = table.distance_values(winner.state.matrix(), rho0.matrix());
    let (raw, mut intervals) = increase_runs(&table.times, &values);
    for iv in &mut intervals {
        iv.gain /= d0;
    }
    Ok(ScanOutcome {
        result: MeasureResult {
            value: raw / d0,
            argmax_descriptor: ArgmaxDescriptor::SurfacePoint {
                index: winner.index,
                theta: winner.theta,
                phi: winner.phi,
                state: Box::new(winner.state.clone()),
            },
            increase_intervals: intervals,
            grid_metadata: GridMetadata {
                t_min: grid.t_min,
                t_max: grid.t_max,
                points: grid.points,
                lattice: format!("{} on {}", surface.kind_name(), lattice.tag()),
            },
        },
        rows,
    })
}

pub fn measure_local_scan(
    family: &DynamicalMapFamily,
    rho0: &DensityMatrix,
    surface: &EnclosingSurface,
    lattice: &DirectionLattice,
    grid: &TimeGrid,
) -> Result<MeasureResult> {
    local_scan(family, rho0, surface, lattice, grid).map(|o| o.result)
}

/// Numerical check of the pointwise identity behind the theorem: for each
/// surface state rho with Jordan-Hahn pair (rho1, rho2) of rho - rho0,
/// D(Phi rho1, Phi rho2) = D(Phi rho, Phi rho0) / D(rho, rho0) at every
/// grid time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub n_states: usize,
    pub n_times: usize,
    /// Max over states and times of the distance-identity residual.
    pub max_pointwise_residual: f64,
    /// Max residual of the discrete derivative (sigma) identity.
    pub max_sigma_residual: f64,
    pub worst_state_index: usize,
}

pub fn equivalence_report(
    family: &DynamicalMapFamily,
    rho0: &DensityMatrix,
    surface: &EnclosingSurface,
    lattice: &DirectionLattice,
    grid: &TimeGrid,
) -> Result<EquivalenceReport> {
    if trace_distance(rho0, surface.reference())? > 1e-12 {
        return Err(Error::InvalidSurface(
            "surface reference differs from the supplied rho0".into(),
        ));
    }
    let samples = surface.sample(lattice)?;
    let table = ChannelTable::build(family, grid)?;
    let residuals: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let (pair, d0) =
                qstate::jordan_hahn_pair(&s.state, rho0).expect("surface excludes rho0");
            let direct =
                table.distance_values(pair.rho1().matrix(), pair.rho2().matrix());
            let local = table.distance_values(s.state.matrix(), rho0.matrix());
            let mut max_point = 0.0f64;
            for (a, b) in direct.iter().zip(&local) {
                max_point = max_point.max((a - b / d0).abs());
            }
            let mut max_sigma = 0.0f64;
            for i in 0..direct.len().saturating_sub(1) {
                let da = direct[i + 1] - direct[i];
                let db = (local[i + 1] - local[i]) / d0;
                max_sigma = max_sigma.max((da - db).abs());
            }
            (max_point, max_sigma)
        })
        .collect();
    let mut worst = 0usize;
    let mut max_pointwise = 0.0f64;
    let mut max_sigma = 0.0f64;
    for (i, (p, s)) in residuals.iter().enumerate() {
        if *p > max_pointwise {
            max_pointwise = *p;
            worst = i;
        }
        max_sigma = max_sigma.max(*s);
    }
    Ok(EquivalenceReport {
        n_states: samples.len(),
        n_times: table.times.len(),
        max_pointwise_residual: max_pointwise,
        max_sigma_residual: max_sigma,
        worst_state_index: worst,
    })
}

/// Write per-state scan rows as CSV with a fixed column dictionary.
pub fn write_scan_csv<W: std::io::Write>(rows: &[ScanRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "theta,phi,increase,normalized_increase")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.theta, r.phi, r.increase, r.normalized_increase)?;
    }
    Ok(())
}
