mod config;
mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{CliError, RunConfig, build_family, config_err, load_config, run_err};
use manifest::ManifestBuilder;
use memoryscope::experiment::{self, ExperimentConfig, ReferenceChoice, ReproduceConfig};
use memoryscope::measure::{self, PairLattice};
use memoryscope::surfaces::{DirectionLattice, validate_surface};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "memoryscope",
    version,
    about = "Trace-distance non-Markovianity measures for open quantum systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the seed of seeded families and lattices.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all processors). Never affects results.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the evaluation window, in lambda0 units for thickness grids.
    #[arg(long, num_args = 2, value_names = ["L1", "L2"])]
    window: Option<Vec<f64>>,
}

impl Common {
    fn window(&self) -> Option<(f64, f64)> {
        self.window.as_ref().map(|w| (w[0], w[1]))
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Enclosing-surface scan around a reference state.
    Local,
    /// Orthogonal-pair maximization.
    Orthogonal,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the non-Markovianity measure of a configured family.
    Measure {
        #[arg(long, value_enum)]
        mode: Mode,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce the photonic dephasing study: scans, profiles, measure table.
    ReproducePaper {
        #[command(flatten)]
        common: Common,
    },
    /// Validate a family (CPTP on the grid) and/or a surface specification.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Scan an enclosing surface and emit the per-state dataset.
    ScanSurface {
        #[command(flatten)]
        common: Common,
    },
    /// Trace-distance trajectory of a configured state pair.
    Trajectory {
        #[command(flatten)]
        common: Common,
    },
}

fn verbose() -> bool {
    std::env::var("MEMORYSCOPE_LOG").map(|v| !v.is_empty() && v != "0" && v != "off").unwrap_or(false)
}

macro_rules! log {
    ($($arg:tt)*) => {
        if verbose() {
            eprintln!($($arg)*);
        }
    };
}

fn init_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Run(e.to_string()))?;
    }
    Ok(())
}

fn require_config(common: &Common) -> Result<(RunConfig, String), CliError> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let config = load_config(path)?;
    let hash = manifest::config_hash(Some(path))?;
    Ok((config, hash))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(value).map_err(run_err)?)
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Run(format!("cannot create {}: {e}", dir.display())))
}

fn describe_argmax(result: &measure::MeasureResult) -> String {
    match &result.argmax_descriptor {
        measure::ArgmaxDescriptor::None => "none".into(),
        measure::ArgmaxDescriptor::PairAngles { theta, phi } => {
            format!("antipodal pair at theta = {theta:.6}, phi = {phi:.6}")
        }
        measure::ArgmaxDescriptor::PairIndex { index } => format!("pair index {index}"),
        measure::ArgmaxDescriptor::SurfacePoint { index, theta, phi, .. } => match (theta, phi) {
            (Some(t), Some(p)) => {
                format!("surface state {index} at theta = {t:.6}, phi = {p:.6}")
            }
            _ => format!("surface state {index}"),
        },
    }
}

fn cmd_measure(mode: Mode, common: &Common) -> Result<(), CliError> {
    let (config, hash) = require_config(common)?;
    let run = build_family(&config, common.window(), common.seed)?;
    let outcome = match mode {
        Mode::Local => {
            let surface_spec = config
                .surface
                .as_ref()
                .ok_or_else(|| CliError::Config("local mode needs a \"surface\" key".into()))?;
            let surface = surface_spec.build()?;
            let lattice = match config.lattice {
                Some(spec) => {
                    let spec = match common.seed {
                        Some(s) => spec.with_seed(s),
                        None => spec,
                    };
                    spec.direction_lattice()?
                }
                None => DirectionLattice::experiment(),
            };
            let rho0 = surface_spec.reference();
            log!("local scan: {} states", lattice.len());
            measure::local_scan(&run.family, &rho0, &surface, &lattice, &run.grid)
                .map_err(run_err)?
        }
        Mode::Orthogonal => {
            let lattice = match config.lattice {
                Some(spec) => {
                    let spec = match common.seed {
                        Some(s) => spec.with_seed(s),
                        None => spec,
                    };
                    spec.pair_lattice()?
                }
                None => PairLattice::QubitAntipodal { n_theta: 50, n_phi: 100 },
            };
            log!("orthogonal scan");
            measure::orthogonal_scan(&run.family, &lattice, &run.grid).map_err(run_err)?
        }
    };
    println!("N = {:.6}", outcome.result.value);
    println!("argmax: {}", describe_argmax(&outcome.result));
    ensure_out(&common.out)?;
    let mut builder = ManifestBuilder::new(
        match mode {
            Mode::Local => "measure --mode local",
            Mode::Orthogonal => "measure --mode orthogonal",
        },
        hash,
        &common.out,
    );
    builder.window(common.window());
    builder.calibration(run.calibration);
    if let Some(seed) = run.seed {
        builder.seed("family", seed);
    }
    let result_path = common.out.join("measure.json");
    write_json(&result_path, &outcome.result)?;
    builder.output(&result_path)?;
    let csv_path = common.out.join("scan.csv");
    let file = std::fs::File::create(&csv_path)
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", csv_path.display())))?;
    measure::write_scan_csv(&outcome.rows, std::io::BufWriter::new(file)).map_err(run_err)?;
    builder.output(&csv_path)?;
    builder.write()?;
    Ok(())
}

fn cmd_validate(common: &Common) -> Result<(), CliError> {
    let (config, _) = require_config(common)?;
    if config.family.is_none() && config.surface.is_none() {
        return Err(CliError::Config(
            "validate needs a \"family\" and/or a \"surface\" key".into(),
        ));
    }
    let mut failed = false;
    if config.family.is_some() {
        let run = build_family(&config, common.window(), common.seed)?;
        let times = run.grid.times();
        let mut worst_trace = 0.0f64;
        let mut worst_choi = f64::INFINITY;
        let dim = run.family.dim();
        for &t in &times {
            let channel = run.family.channel_at(t).map_err(run_err)?;
            worst_trace = worst_trace.max(channel.trace_preservation_defect(dim));
            let choi_min = channel
                .choi(dim)
                .eigvals_hermitian()
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            worst_choi = worst_choi.min(choi_min);
        }
        let ok = worst_trace <= 1e-10 && worst_choi >= -1e-9;
        println!(
            "family: {} grid points, max trace defect {worst_trace:.3e}, \
             min Choi eigenvalue {worst_choi:.3e} -> {}",
            times.len(),
            if ok { "ok" } else { "FAIL" }
        );
        failed |= !ok;
    }
    if let Some(surface_spec) = &config.surface {
        let surface = surface_spec.build()?;
        let n = config.n_directions.unwrap_or(10_000);
        let report = validate_surface(&surface, n, common.seed.unwrap_or(7));
        println!(
            "surface ({}): {} directions, {} failures -> {}",
            report.kind,
            report.n_directions,
            report.n_failures,
            if report.passed() { "ok" } else { "FAIL" }
        );
        for f in &report.failures {
            println!("  direction {}: {}", f.direction_index, f.reason);
        }
        failed |= !report.passed();
    }
    if failed {
        return Err(CliError::Run("validation failed".into()));
    }
    println!("validation passed");
    Ok(())
}

fn cmd_scan_surface(common: &Common) -> Result<(), CliError> {
    let (config, hash) = require_config(common)?;
    let run = build_family(&config, common.window(), common.seed)?;
    let surface_spec = config
        .surface
        .as_ref()
        .ok_or_else(|| CliError::Config("scan-surface needs a \"surface\" key".into()))?;
    let surface = surface_spec.build()?;
    let rho0 = surface_spec.reference();
    let n_bins = config.n_bins.unwrap_or(25);
    ensure_out(&common.out)?;
    let mut builder = ManifestBuilder::new("scan-surface", hash, &common.out);
    builder.window(common.window());
    builder.calibration(run.calibration);
    if let Some(seed) = run.seed {
        builder.seed("family", seed);
    }
    if let Some(noise) = &config.noise {
        builder.seed("noise", noise.seed);
    }
    // The dephasing family on an angular lattice gets the full experiment
    // treatment: local coordinates, window increase, profile, heatmap.
    let fp_angles = config.family.as_deref() == Some("fp_dephasing")
        && matches!(
            config.lattice,
            None | Some(config::LatticeSpec::QubitAngles { .. })
        );
    if fp_angles {
        let (n_theta, n_phi) = match config.lattice {
            Some(config::LatticeSpec::QubitAngles { n_theta, n_phi }) => (n_theta, n_phi),
            _ => (50, 100),
        };
        let fp_spec: config::FpParamsSpec =
            serde_json::from_value(config.params.clone().unwrap_or(serde_json::Value::Null))
                .map_err(config_err)?;
        let (l1, l2) = {
            let times = run.grid.times();
            (times[0], *times.last().unwrap())
        };
        let exp_config = ExperimentConfig {
            dynamics: fp_spec.params(),
            thickness_to_time: run.calibration.expect("fp family always calibrated"),
            window: (l1, l2),
            reference: ReferenceChoice::Custom(
                memoryscope::qstate::density_to_bloch(&rho0).map_err(run_err)?,
            ),
            surface_w: 0.7,
            n_theta,
            n_phi,
            n_bins,
            noise: config.noise,
        };
        log!("surface scan: {} states", n_theta * n_phi);
        let records =
            experiment::surface_scan_dataset(&run.family, &rho0, &surface, &exp_config)
                .map_err(run_err)?;
        let csv_path = common.out.join("scan.csv");
        experiment::write_records_csv(&records, &csv_path).map_err(run_err)?;
        builder.output(&csv_path)?;
        let profile = experiment::bin_average(&records, n_bins).map_err(run_err)?;
        let profile_path = common.out.join("profile.csv");
        experiment::write_profile_csv(&profile, &profile_path).map_err(run_err)?;
        builder.output(&profile_path)?;
        let heatmap = memoryscope::svg::polar_heatmap(
            &records
                .iter()
                .map(|r| (r.theta_loc, r.phi_loc, r.normalized_increase))
                .collect::<Vec<_>>(),
            "normalized trace-distance increase",
        );
        let svg_path = common.out.join("heatmap.svg");
        std::fs::write(&svg_path, heatmap)
            .map_err(|e| CliError::Run(format!("cannot write {}: {e}", svg_path.display())))?;
        builder.output(&svg_path)?;
        let best = records
            .iter()
            .map(|r| r.normalized_increase)
            .fold(f64::NEG_INFINITY, f64::max);
        println!("max normalized increase = {best:.6} over {} states", records.len());
    } else {
        let lattice = match config.lattice {
            Some(spec) => spec.direction_lattice()?,
            None => DirectionLattice::experiment(),
        };
        log!("local scan: {} states", lattice.len());
        let outcome = measure::local_scan(&run.family, &rho0, &surface, &lattice, &run.grid)
            .map_err(run_err)?;
        let csv_path = common.out.join("scan.csv");
        let file = std::fs::File::create(&csv_path)
            .map_err(|e| CliError::Run(format!("cannot write {}: {e}", csv_path.display())))?;
        measure::write_scan_csv(&outcome.rows, std::io::BufWriter::new(file)).map_err(run_err)?;
        builder.output(&csv_path)?;
        let result_path = common.out.join("measure.json");
        write_json(&result_path, &outcome.result)?;
        builder.output(&result_path)?;
        println!("N = {:.6}", outcome.result.value);
    }
    builder.write()?;
    Ok(())
}

fn cmd_trajectory(common: &Common) -> Result<(), CliError> {
    let (config, hash) = require_config(common)?;
    let run = build_family(&config, common.window(), common.seed)?;
    let pair = config
        .pair
        .as_ref()
        .ok_or_else(|| CliError::Config("trajectory needs a \"pair\" key".into()))?;
    let traj = measure::trajectory(
        &run.family,
        &pair.rho_a.state(),
        &pair.rho_b.state(),
        &run.grid,
    )
    .map_err(run_err)?;
    ensure_out(&common.out)?;
    let mut builder = ManifestBuilder::new("trajectory", hash, &common.out);
    builder.window(common.window());
    builder.calibration(run.calibration);
    if let Some(seed) = run.seed {
        builder.seed("family", seed);
    }
    let csv_path = common.out.join("trajectory.csv");
    {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(&csv_path)
                .map_err(|e| CliError::Run(format!("cannot write {}: {e}", csv_path.display())))?,
        );
        writeln!(out, "t,distance").map_err(run_err)?;
        for (t, v) in traj.times.iter().zip(&traj.values) {
            writeln!(out, "{t},{v}").map_err(run_err)?;
        }
    }
    builder.output(&csv_path)?;
    let result = measure::integrate_increases(&traj, false).map_err(run_err)?;
    println!(
        "initial distance {:.6}, final {:.6}, summed increases {:.6} over {} intervals",
        traj.initial_distance,
        traj.values.last().copied().unwrap_or(f64::NAN),
        result.value,
        result.increase_intervals.len()
    );
    builder.write()?;
    Ok(())
}

fn cmd_reproduce_paper(common: &Common) -> Result<(), CliError> {
    let (config, hash) = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let config: ReproduceConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            (config, manifest::config_hash(Some(path))?)
        }
        None => (ReproduceConfig::default(), manifest::config_hash(None)?),
    };
    let config = match common.window() {
        Some(w) => ReproduceConfig { window: w, ..config },
        None => config,
    };
    log!(
        "reproduction: {} amplitudes, {} x {} lattice, window ({}, {})",
        config.a_alphas.len(),
        config.n_theta,
        config.n_phi,
        config.window.0,
        config.window.1
    );
    ensure_out(&common.out)?;
    let outputs = experiment::run_reproduction(&config, &common.out).map_err(run_err)?;
    print!("{}", outputs.table.render_text());
    let mut builder = ManifestBuilder::new("reproduce-paper", hash, &common.out);
    builder.window(Some(config.window));
    builder.calibration(Some(outputs.calibration));
    if let Some(noise) = &config.noise {
        builder.seed("noise", noise.seed);
    }
    for path in &outputs.files {
        builder.output(path)?;
    }
    let manifest = builder.write()?;
    println!("manifest hash: {}", manifest.manifest_hash);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Measure { mode, ref common } => {
            init_jobs(common.jobs)?;
            cmd_measure(mode, common)
        }
        Command::ReproducePaper { ref common } => {
            init_jobs(common.jobs)?;
            cmd_reproduce_paper(common)
        }
        Command::Validate { ref common } => {
            init_jobs(common.jobs)?;
            cmd_validate(common)
        }
        Command::ScanSurface { ref common } => {
            init_jobs(common.jobs)?;
            cmd_scan_surface(common)
        }
        Command::Trajectory { ref common } => {
            init_jobs(common.jobs)?;
            cmd_trajectory(common)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
