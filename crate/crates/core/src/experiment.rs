//! End-to-end reproduction of the photonic dephasing study at desk scale:
//! the two reference states, the 5000-state surface scans, trace-distance
//! increases between two plate thicknesses, local-coordinate binning and the
//! three-row measure table.

use crate::dynamics::{
    DynamicalMapFamily, FpDephasingParams, THICKNESS_MAX_LAMBDA, THICKNESS_MIN_LAMBDA,
    ThicknessToTime, kappa,
};
use crate::measure::{self, PairLattice, TimeGrid};
use crate::qstate::{
    BlochVector, DensityMatrix, bloch_to_density, density_to_bloch, trace_distance,
};
use crate::surfaces::{DirectionLattice, EnclosingSurface, make_convex_combination_surface};
use crate::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

/// First reference state: inside the equatorial plane.
pub fn reference_state_1() -> DensityMatrix {
    bloch_to_density(&BlochVector::new(0.20, PI / 2.0, 13.0 * PI / 50.0).unwrap())
}

/// Second reference state: northern hemisphere, close to the boundary.
pub fn reference_state_2() -> DensityMatrix {
    bloch_to_density(&BlochVector::new(0.88, 8.0 * PI / 50.0, 13.0 * PI / 50.0).unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceChoice {
    R1,
    R2,
    Custom(BlochVector),
}

impl ReferenceChoice {
    pub fn state(&self) -> DensityMatrix {
        match self {
            ReferenceChoice::R1 => reference_state_1(),
            ReferenceChoice::R2 => reference_state_2(),
            ReferenceChoice::Custom(b) => bloch_to_density(b),
        }
    }
}

/// Optional Gaussian perturbation of reconstructed Bloch vectors, emulating
/// detection noise. Off by default.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub seed: u64,
}

/// Configuration of one surface-scan experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dynamics: FpDephasingParams,
    pub thickness_to_time: ThicknessToTime,
    /// Evaluation window (L1, L2) in units of lambda0.
    pub window: (f64, f64),
    pub reference: ReferenceChoice,
    /// Convex-combination surface weight.
    pub surface_w: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_bins: usize,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        let (l1, l2) = self.window;
        if !(THICKNESS_MIN_LAMBDA..=THICKNESS_MAX_LAMBDA).contains(&l1)
            || !(THICKNESS_MIN_LAMBDA..=THICKNESS_MAX_LAMBDA).contains(&l2)
            || l1 >= l2
        {
            return Err(Error::Config(format!(
                "window ({l1}, {l2}) must satisfy {THICKNESS_MIN_LAMBDA} <= L1 < L2 <= {THICKNESS_MAX_LAMBDA}"
            )));
        }
        if self.n_bins < 2 {
            return Err(Error::Config(format!("n_bins = {} must be >= 2", self.n_bins)));
        }
        if self.n_theta == 0 || self.n_phi == 0 {
            return Err(Error::Config("lattice sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Spherical coordinates of the Bloch difference b(rho) - b(rho0), i.e. the
/// global axes translated to the reference state.
pub fn local_coords(rho: &DensityMatrix, rho0: &DensityMatrix) -> Result<(f64, f64, f64)> {
    let b = density_to_bloch(rho)?.cartesian();
    let b0 = density_to_bloch(rho0)?.cartesian();
    let d = [b[0] - b0[0], b[1] - b0[1], b[2] - b0[2]];
    let r_loc = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if r_loc <= 1e-14 {
        return Err(Error::CoincidentStates);
    }
    let theta_loc = (d[2] / r_loc).clamp(-1.0, 1.0).acos();
    let mut phi_loc = d[1].atan2(d[0]);
    if phi_loc < 0.0 {
        phi_loc += 2.0 * PI;
    }
    Ok((r_loc, theta_loc, phi_loc))
}

/// Signed trace-distance change between two plate thicknesses. Negative
/// values are preserved; the measure table reports small negatives for the
/// Markovian dynamics.
pub fn increase_between(
    family: &DynamicalMapFamily,
    rho_a: &DensityMatrix,
    rho_b: &DensityMatrix,
    l1: f64,
    l2: f64,
) -> Result<f64> {
    if l1 >= l2 {
        return Err(Error::InvalidParameter(format!("L1 = {l1} must be < L2 = {l2}")));
    }
    let d1 = trace_distance(&family.apply(l1, rho_a)?, &family.apply(l1, rho_b)?)?;
    let d2 = trace_distance(&family.apply(l2, rho_a)?, &family.apply(l2, rho_b)?)?;
    Ok(d2 - d1)
}

/// One row of a scan dataset.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanRecord {
    pub index: usize,
    /// Lattice angles of the generating pure state (surface scans) or of the
    /// pair axis (orthogonal scans).
    pub theta: f64,
    pub phi: f64,
    pub r_loc: f64,
    pub theta_loc: f64,
    pub phi_loc: f64,
    pub increase: f64,
    pub normalized_increase: f64,
}

fn perturbed_distance(
    rho_a: &DensityMatrix,
    rho_b: &DensityMatrix,
    noise: &NoiseSpec,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut jitter = |rho: &DensityMatrix| -> Result<DensityMatrix> {
        let b = density_to_bloch(rho)?.cartesian();
        let mut v = [0.0f64; 3];
        for (out, x) in v.iter_mut().zip(b) {
            let n: f64 = StandardNormal.sample(rng);
            *out = x + noise.amplitude * n;
        }
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        Ok(bloch_to_density(&BlochVector::from_cartesian(v[0], v[1], v[2])?))
    };
    trace_distance(&jitter(rho_a)?, &jitter(rho_b)?)
}

fn record_increase(
    family: &DynamicalMapFamily,
    rho_a: &DensityMatrix,
    rho_b: &DensityMatrix,
    l1: f64,
    l2: f64,
    noise: Option<&NoiseSpec>,
    index: usize,
) -> Result<f64> {
    match noise {
        None => increase_between(family, rho_a, rho_b, l1, l2),
        Some(spec) => {
            let mut rng = ChaCha8Rng::seed_from_u64(
                spec.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let d1 = perturbed_distance(
                &family.apply(l1, rho_a)?,
                &family.apply(l1, rho_b)?,
                spec,
                &mut rng,
            )?;
            let d2 = perturbed_distance(
                &family.apply(l2, rho_a)?,
                &family.apply(l2, rho_b)?,
                spec,
                &mut rng,
            )?;
            Ok(d2 - d1)
        }
    }
}

/// Scan all surface states of the configured lattice: one record per state,
/// theta-major order.
pub fn surface_scan_dataset(
    family: &DynamicalMapFamily,
    rho0: &DensityMatrix,
    surface: &EnclosingSurface,
    config: &ExperimentConfig,
) -> Result<Vec<ScanRecord>> {
    config.validate()?;
    let lattice = DirectionLattice::QubitAngles { n_theta: config.n_theta, n_phi: config.n_phi };
    let samples = surface.sample(&lattice)?;
    let (l1, l2) = config.window;
    samples
        .par_iter()
        .map(|s| {
            let d0 = trace_distance(&s.state, rho0)?;
            let (r_loc, theta_loc, phi_loc) = local_coords(&s.state, rho0)?;
            let increase =
                record_increase(family, &s.state, rho0, l1, l2, config.noise.as_ref(), s.index)?;
            Ok(ScanRecord {
                index: s.index,
                theta: s.theta.unwrap_or(f64::NAN),
                phi: s.phi.unwrap_or(f64::NAN),
                r_loc,
                theta_loc,
                phi_loc,
                increase,
                normalized_increase: increase / d0,
            })
        })
        .collect()
}

/// Companion dataset over antipodal pure pairs on the same angular lattice;
/// the pair axis plays the role of the local direction.
pub fn orthogonal_scan_dataset(
    family: &DynamicalMapFamily,
    config: &ExperimentConfig,
) -> Result<Vec<ScanRecord>> {
    config.validate()?;
    let (l1, l2) = config.window;
    let mut jobs = Vec::with_capacity(config.n_theta * config.n_phi);
    for k in 0..config.n_theta {
        let theta = (k as f64 + 0.5) * PI / config.n_theta as f64;
        for j in 0..config.n_phi {
            let phi = j as f64 * 2.0 * PI / config.n_phi as f64;
            jobs.push((k * config.n_phi + j, theta, phi));
        }
    }
    jobs.par_iter()
        .map(|&(index, theta, phi)| {
            let b = BlochVector::new(1.0, theta, phi)?;
            let [x, y, z] = b.cartesian();
            let rho1 = bloch_to_density(&b);
            let rho2 = bloch_to_density(&BlochVector::from_cartesian(-x, -y, -z)?);
            let increase =
                record_increase(family, &rho1, &rho2, l1, l2, config.noise.as_ref(), index)?;
            Ok(ScanRecord {
                index,
                theta,
                phi,
                r_loc: 2.0,
                theta_loc: theta,
                phi_loc: phi,
                increase,
                // Orthogonal pairs start at unit distance.
                normalized_increase: increase,
            })
        })
        .collect()
}

/// phi_loc-averaged profile: equal-width bins on z = cos(theta_loc) over
/// [-1, 1], per-bin mean and sample standard deviation of the normalized
/// increase. Empty bins are omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinnedProfile {
    pub theta_loc_centers: Vec<f64>,
    pub mean_increase: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn bin_average(records: &[ScanRecord], n_bins: usize) -> Result<BinnedProfile> {
    if records.is_empty() {
        return Err(Error::EmptyLattice("no records to bin".into()));
    }
    if n_bins < 2 {
        return Err(Error::InvalidParameter(format!("n_bins = {n_bins} must be >= 2")));
    }
    let mut sums = vec![0.0f64; n_bins];
    let mut sq_sums = vec![0.0f64; n_bins];
    let mut z_sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];
    for r in records {
        let z = r.theta_loc.cos();
        let mut bin = ((z + 1.0) / 2.0 * n_bins as f64) as usize;
        if bin >= n_bins {
            bin = n_bins - 1;
        }
        sums[bin] += r.normalized_increase;
        sq_sums[bin] += r.normalized_increase * r.normalized_increase;
        z_sums[bin] += z;
        counts[bin] += 1;
    }
    let mut profile = BinnedProfile {
        theta_loc_centers: Vec::new(),
        mean_increase: Vec::new(),
        std_dev: Vec::new(),
        counts: Vec::new(),
    };
    for b in 0..n_bins {
        if counts[b] == 0 {
            continue;
        }
        let n = counts[b] as f64;
        let mean = sums[b] / n;
        let var = if counts[b] > 1 { ((sq_sums[b] - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        profile.theta_loc_centers.push((z_sums[b] / n).clamp(-1.0, 1.0).acos());
        profile.mean_increase.push(mean);
        profile.std_dev.push(var.sqrt());
        profile.counts.push(counts[b]);
    }
    if profile.counts.is_empty() {
        return Err(Error::EmptyLattice("all bins empty".into()));
    }
    Ok(profile)
}

/// Windowed measure of the ideal equatorial orthogonal pair, straight from
/// the decoherence function: the model-theoretical value.
pub fn model_theoretical_measure(
    params: &FpDephasingParams,
    thickness_to_time: &ThicknessToTime,
    window: (f64, f64),
    points: usize,
) -> Result<f64> {
    let grid = TimeGrid::new(window.0, window.1, points)?;
    let values: Vec<f64> = grid
        .times()
        .iter()
        .map(|&l| kappa(thickness_to_time.tau(l, params).max(0.0), params).map(|k| k.norm()))
        .collect::<Result<_>>()?;
    let times = grid.times();
    let traj = measure::TraceDistanceTrajectory::new(times, values, 1.0)?;
    Ok(measure::integrate_increases(&traj, false)?.value)
}

/// Fit the affine thickness-to-delay scale on the most non-Markovian
/// dynamics: the scale is chosen to maximize the model measure over the
/// window. Deterministic coarse scan plus golden-section refinement.
pub fn calibrate_thickness_scale(
    params: &FpDephasingParams,
    window: (f64, f64),
    points: usize,
) -> Result<ThicknessToTime> {
    let (_, delta_omega) = params.angular_sigma_delta();
    let objective = |a: f64| -> f64 {
        model_theoretical_measure(params, &ThicknessToTime::Affine { a, b: 0.0 }, window, points)
            .unwrap_or(0.0)
    };
    // Coarse scan over the beat phase accumulated at the window end.
    let mut best_x = 1.0;
    let mut best_v = -1.0;
    let n_coarse = 600;
    for i in 0..n_coarse {
        let x = 0.5 + 12.0 * i as f64 / (n_coarse - 1) as f64;
        let v = objective(x / (delta_omega * window.1));
        if v > best_v {
            best_v = v;
            best_x = x;
        }
    }
    // Golden-section refinement around the coarse optimum.
    let golden = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (best_x - 0.05, best_x + 0.05);
    for _ in 0..60 {
        let x1 = hi - golden * (hi - lo);
        let x2 = lo + golden * (hi - lo);
        if objective(x1 / (delta_omega * window.1)) < objective(x2 / (delta_omega * window.1)) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok(ThicknessToTime::Affine { a: x / (delta_omega * window.1), b: 0.0 })
}

/// One row of the three-dynamics measure table.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeasureTableRow {
    pub a_alpha: f64,
    pub n_theo: f64,
    /// Local scan around the first reference state.
    pub n_ref1: f64,
    /// Local scan around the second reference state.
    pub n_ref2: f64,
    /// Orthogonal-pair scan.
    pub n_orthogonal: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureTable {
    pub rows: Vec<MeasureTableRow>,
    pub calibration: ThicknessToTime,
    pub window: (f64, f64),
}

impl MeasureTable {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Non-Markovianity measure, window [{}, {}] lambda0\n",
            self.window.0, self.window.1
        ));
        if let ThicknessToTime::Affine { a, b } = self.calibration {
            out.push_str(&format!("calibrated delay: tau = {a:e} * L + {b:e}\n"));
        }
        out.push_str("A_alpha   N_theo    N_ref1    N_ref2    N_orth\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<9.2} {:<9.4} {:<9.4} {:<9.4} {:<9.4}\n",
                r.a_alpha, r.n_theo, r.n_ref1, r.n_ref2, r.n_orthogonal
            ));
        }
        out
    }
}

/// Compute the measure table for the given amplitudes via all three
/// methods, sharing one calibration.
pub fn measure_table_run(
    base: &FpDephasingParams,
    calibration: &ThicknessToTime,
    window: (f64, f64),
    a_alphas: &[f64],
    grid_points: usize,
    n_theta: usize,
    n_phi: usize,
    surface_w: f64,
) -> Result<MeasureTable> {
    let grid = TimeGrid::new(window.0, window.1, grid_points)?;
    let lattice = DirectionLattice::QubitAngles { n_theta, n_phi };
    let pair_lattice = PairLattice::QubitAntipodal { n_theta, n_phi };
    let mut rows = Vec::new();
    for &a_alpha in a_alphas {
        let params = FpDephasingParams { a_alpha, ..*base };
        let family = DynamicalMapFamily::fp_dephasing(params, *calibration)?;
        let n_theo = model_theoretical_measure(&params, calibration, window, grid_points)?;
        let local = |rho0: &DensityMatrix| -> Result<f64> {
            let surface = make_convex_combination_surface(rho0, surface_w)?;
            Ok(measure::measure_local_scan(&family, rho0, &surface, &lattice, &grid)?.value)
        };
        let n_ref1 = local(&reference_state_1())?;
        let n_ref2 = local(&reference_state_2())?;
        let n_orthogonal =
            measure::measure_orthogonal_scan(&family, &pair_lattice, &grid)?.value;
        rows.push(MeasureTableRow { a_alpha, n_theo, n_ref1, n_ref2, n_orthogonal });
    }
    Ok(MeasureTable { rows, calibration: *calibration, window })
}

/// Configuration of the full reproduction pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceConfig {
    pub base: FpDephasingParams,
    pub a_alphas: Vec<f64>,
    pub window: (f64, f64),
    pub grid_points: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub surface_w: f64,
    pub n_bins: usize,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    /// When absent, the scale is calibrated on the first amplitude.
    #[serde(default)]
    pub calibration: Option<ThicknessToTime>,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        ReproduceConfig {
            base: FpDephasingParams::reported(0.64),
            a_alphas: vec![0.64, 0.22, 0.01],
            window: (175.0, THICKNESS_MAX_LAMBDA),
            grid_points: 2000,
            n_theta: 50,
            n_phi: 100,
            surface_w: 0.7,
            n_bins: 25,
            noise: None,
            calibration: None,
        }
    }
}

/// Everything the reproduction run wrote, for manifest assembly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReproduceOutputs {
    pub calibration: ThicknessToTime,
    pub table: MeasureTable,
    pub files: Vec<PathBuf>,
}

pub fn write_records_csv(records: &[ScanRecord], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "theta,phi,r_loc,theta_loc,phi_loc,increase,normalized_increase")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.theta, r.phi, r.r_loc, r.theta_loc, r.phi_loc, r.increase, r.normalized_increase
        )?;
    }
    Ok(())
}

pub fn write_profile_csv(profile: &BinnedProfile, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "theta_loc,mean_increase,std_dev,count")?;
    for i in 0..profile.counts.len() {
        writeln!(
            out,
            "{},{},{},{}",
            profile.theta_loc_centers[i],
            profile.mean_increase[i],
            profile.std_dev[i],
            profile.counts[i]
        )?;
    }
    Ok(())
}

fn amplitude_tag(a_alpha: f64) -> String {
    format!("a{:03.0}", a_alpha * 100.0)
}

/// Run the full pipeline: three dynamics times (two surface scans plus the
/// orthogonal-pair scan), datasets, binned profiles, heatmaps, measure
/// results and the table. Returns the file inventory.
pub fn run_reproduction(config: &ReproduceConfig, out_dir: &Path) -> Result<ReproduceOutputs> {
    config.base.validate()?;
    if config.a_alphas.is_empty() {
        return Err(Error::Config("a_alphas must not be empty".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let calibration = match config.calibration {
        Some(c) => c,
        None => {
            let params = FpDephasingParams { a_alpha: config.a_alphas[0], ..config.base };
            calibrate_thickness_scale(&params, config.window, config.grid_points)?
        }
    };
    let grid = TimeGrid::new(config.window.0, config.window.1, config.grid_points)?;
    let lattice = DirectionLattice::QubitAngles { n_theta: config.n_theta, n_phi: config.n_phi };
    let mut files = Vec::new();
    let write = |path: PathBuf, content: &str, files: &mut Vec<PathBuf>| -> Result<()> {
        std::fs::write(&path, content)?;
        files.push(path);
        Ok(())
    };
    for &a_alpha in &config.a_alphas {
        let tag = amplitude_tag(a_alpha);
        let params = FpDephasingParams { a_alpha, ..config.base };
        let family = DynamicalMapFamily::fp_dephasing(params, calibration)?;
        let exp_config = ExperimentConfig {
            dynamics: params,
            thickness_to_time: calibration,
            window: config.window,
            reference: ReferenceChoice::R1,
            surface_w: config.surface_w,
            n_theta: config.n_theta,
            n_phi: config.n_phi,
            n_bins: config.n_bins,
            noise: config.noise,
        };
        for (ref_tag, rho0) in [("r1", reference_state_1()), ("r2", reference_state_2())] {
            let surface = make_convex_combination_surface(&rho0, config.surface_w)?;
            let records = surface_scan_dataset(&family, &rho0, &surface, &exp_config)?;
            let csv_path = out_dir.join(format!("{tag}_surface_{ref_tag}.csv"));
            write_records_csv(&records, &csv_path)?;
            files.push(csv_path);
            let profile = bin_average(&records, config.n_bins)?;
            let profile_path = out_dir.join(format!("{tag}_surface_{ref_tag}_profile.csv"));
            write_profile_csv(&profile, &profile_path)?;
            files.push(profile_path);
            let heatmap = crate::svg::polar_heatmap(
                &records
                    .iter()
                    .map(|r| (r.theta_loc, r.phi_loc, r.normalized_increase))
                    .collect::<Vec<_>>(),
                &format!("normalized increase, A_alpha = {a_alpha}, reference {ref_tag}"),
            );
            write(out_dir.join(format!("{tag}_surface_{ref_tag}_heatmap.svg")), &heatmap, &mut files)?;
            let outcome = measure::local_scan(&family, &rho0, &surface, &lattice, &grid)?;
            write(
                out_dir.join(format!("{tag}_measure_{ref_tag}.json")),
                &serde_json::to_string_pretty(&outcome.result)?,
                &mut files,
            )?;
        }
        let orth_records = orthogonal_scan_dataset(&family, &exp_config)?;
        let orth_path = out_dir.join(format!("{tag}_orthogonal.csv"));
        write_records_csv(&orth_records, &orth_path)?;
        files.push(orth_path);
        let orth_profile = bin_average(&orth_records, config.n_bins)?;
        let orth_profile_path = out_dir.join(format!("{tag}_orthogonal_profile.csv"));
        write_profile_csv(&orth_profile, &orth_profile_path)?;
        files.push(orth_profile_path);
        let pair_lattice =
            PairLattice::QubitAntipodal { n_theta: config.n_theta, n_phi: config.n_phi };
        let orth_outcome = measure::orthogonal_scan(&family, &pair_lattice, &grid)?;
        write(
            out_dir.join(format!("{tag}_measure_orthogonal.json")),
            &serde_json::to_string_pretty(&orth_outcome.result)?,
            &mut files,
        )?;
    }
    let table = measure_table_run(
        &config.base,
        &calibration,
        config.window,
        &config.a_alphas,
        config.grid_points,
        config.n_theta,
        config.n_phi,
        config.surface_w,
    )?;
    write(out_dir.join("measure_table.txt"), &table.render_text(), &mut files)?;
    let mut table_csv = String::from("a_alpha,n_theo,n_ref1,n_ref2,n_orthogonal\n");
    for r in &table.rows {
        table_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.a_alpha, r.n_theo, r.n_ref1, r.n_ref2, r.n_orthogonal
        ));
    }
    write(out_dir.join("measure_table.csv"), &table_csv, &mut files)?;
    Ok(ReproduceOutputs { calibration, table, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            dynamics: FpDephasingParams::reported(0.64),
            thickness_to_time: ThicknessToTime::Affine { a: 2.5e-15, b: 0.0 },
            window: (175.0, 318.0),
            reference: ReferenceChoice::R1,
            surface_w: 0.7,
            n_theta: 10,
            n_phi: 20,
            n_bins: 8,
            noise: None,
        }
    }

    #[test]
    fn local_coords_pole_and_radius() {
        let rho0 = reference_state_1();
        let b0 = density_to_bloch(&rho0).unwrap().cartesian();
        let above =
            bloch_to_density(&BlochVector::from_cartesian(b0[0], b0[1], b0[2] + 0.3).unwrap());
        let (r_loc, theta_loc, _) = local_coords(&above, &rho0).unwrap();
        assert!(theta_loc.abs() < 1e-12);
        assert!((r_loc - 0.3).abs() < 1e-12);
        assert!((r_loc - 2.0 * trace_distance(&above, &rho0).unwrap()).abs() < 1e-12);
        assert!(local_coords(&rho0, &rho0).is_err());
    }

    #[test]
    fn local_coords_of_convex_point_match_pure_direction() {
        let rho0 = reference_state_2();
        let pure = bloch_to_density(&BlochVector::new(1.0, 1.1, 2.2).unwrap());
        let mixed = DensityMatrix::new(
            &rho0.matrix().scale_re(0.3) + &pure.matrix().scale_re(0.7),
        )
        .unwrap();
        let (_, theta_loc, phi_loc) = local_coords(&mixed, &rho0).unwrap();
        let bp = density_to_bloch(&pure).unwrap().cartesian();
        let b0 = density_to_bloch(&rho0).unwrap().cartesian();
        let d = [bp[0] - b0[0], bp[1] - b0[1], bp[2] - b0[2]];
        let nd = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        assert!((theta_loc - (d[2] / nd).acos()).abs() < 1e-12);
        let mut expected_phi = d[1].atan2(d[0]);
        if expected_phi < 0.0 {
            expected_phi += 2.0 * PI;
        }
        assert!((phi_loc - expected_phi).abs() < 1e-12);
    }

    #[test]
    fn increase_between_identity_is_zero() {
        let family = DynamicalMapFamily::identity(2, 400.0);
        let a = DensityMatrix::basis_state(2, 0);
        let b = DensityMatrix::maximally_mixed(2);
        assert_eq!(increase_between(&family, &a, &b, 175.0, 318.0).unwrap(), 0.0);
        assert!(increase_between(&family, &a, &b, 318.0, 175.0).is_err());
    }

    #[test]
    fn surface_dataset_shape_and_determinism() {
        let config = small_config();
        let family =
            DynamicalMapFamily::fp_dephasing(config.dynamics, config.thickness_to_time).unwrap();
        let rho0 = reference_state_1();
        let surface = make_convex_combination_surface(&rho0, config.surface_w).unwrap();
        let a = surface_scan_dataset(&family, &rho0, &surface, &config).unwrap();
        let b = surface_scan_dataset(&family, &rho0, &surface, &config).unwrap();
        assert_eq!(a.len(), 200);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.increase.to_bits(), y.increase.to_bits(), "bitwise deterministic");
        }
        // theta-major row order.
        for (i, r) in a.iter().enumerate() {
            assert_eq!(r.index, i);
        }
        // Mixedness: normalized increase is finite, r_loc below pure-shell radius.
        for r in &a {
            assert!(r.r_loc > 0.0 && r.r_loc < 2.0);
            assert!(r.normalized_increase.is_finite());
        }
    }

    #[test]
    fn bin_average_constant_profile() {
        let config = small_config();
        let records: Vec<ScanRecord> = (0..100)
            .map(|i| {
                let theta_loc = (i as f64 + 0.5) * PI / 100.0;
                ScanRecord {
                    index: i,
                    theta: theta_loc,
                    phi: 0.0,
                    r_loc: 1.0,
                    theta_loc,
                    phi_loc: 0.0,
                    increase: 0.25,
                    normalized_increase: 0.25,
                }
            })
            .collect();
        let profile = bin_average(&records, config.n_bins).unwrap();
        assert_eq!(profile.counts.iter().sum::<usize>(), 100);
        for (mean, std) in profile.mean_increase.iter().zip(&profile.std_dev) {
            assert!((mean - 0.25).abs() < 1e-15);
            assert_eq!(*std, 0.0);
        }
        assert!(bin_average(&records, 1).is_err());
        assert!(bin_average(&[], 4).is_err());
    }

    #[test]
    fn calibration_hits_reported_table_values() {
        let base = FpDephasingParams::reported(0.64);
        let window = (175.0, 318.0);
        let cal = calibrate_thickness_scale(&base, window, 2000).unwrap();
        let n64 = model_theoretical_measure(&base, &cal, window, 2000).unwrap();
        assert!((n64 - 0.59).abs() <= 0.02, "N(0.64) = {n64}");
        let p22 = FpDephasingParams { a_alpha: 0.22, ..base };
        let n22 = model_theoretical_measure(&p22, &cal, window, 2000).unwrap();
        assert!((n22 - 0.21).abs() <= 0.02, "N(0.22) = {n22}");
        let p01 = FpDephasingParams { a_alpha: 0.01, ..base };
        let n01 = model_theoretical_measure(&p01, &cal, window, 2000).unwrap();
        assert!(n01.abs() <= 0.02, "N(0.01) = {n01}");
    }

    #[test]
    fn negative_increases_are_preserved() {
        // Markovian single-peak dynamics: the trace distance falls over the
        // window, so the signed increase must come out negative.
        let params = FpDephasingParams::reported(0.0);
        let family = DynamicalMapFamily::fp_dephasing(params, ThicknessToTime::Physical).unwrap();
        let plus = bloch_to_density(&BlochVector::new(1.0, PI / 2.0, 0.0).unwrap());
        let minus = bloch_to_density(&BlochVector::new(1.0, PI / 2.0, PI).unwrap());
        let inc = increase_between(&family, &plus, &minus, 75.0, 318.0).unwrap();
        assert!(inc < 0.0);
    }
}
