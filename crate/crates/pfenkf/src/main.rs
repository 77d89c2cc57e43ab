//! Command-line driver: ground-truth runs, synthetic data generation,
//! ensemble filtering, kernel calibration, and the verification battery.
//!
//! Exit codes: 0 on success, 1 when a verification check fails, 2 for
//! configuration problems, 3 for solver failures.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pfenkf::config::{ExperimentConfig, ExperimentKind, Preset};
use pfenkf::ensemble::{ensemble_anomalies, ensemble_mean, sample_prior, EnsembleState};
use pfenkf::error::{Error, Result};
use pfenkf::filter::{run_filter, FilterDriver, FilterRun};
use pfenkf::io;
use pfenkf::model::reaction_force;
use pfenkf::observation::{
    build_observation_matrix, calibrate_hyperparameters, generate_data, run_ground_truth,
    CalibrationSettings, DataBatch, GroundTruth, ObservationModel,
};
use pfenkf::validate;

#[derive(Parser)]
#[command(
    name = "pfenkf",
    version,
    about = "Micromorphic phase-field fracture with ensemble Kalman data assimilation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the refined ground truth and write its trajectory
    Truth(RunArgs),
    /// Generate synthetic sensor data from the ground truth
    GenerateData(RunArgs),
    /// Run the ensemble Kalman filter experiment
    Filter(RunArgs),
    /// Fit the discrepancy kernel to the first analysis batch
    Calibrate(RunArgs),
    /// Run the built-in verification checks
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment name: rod1d, sens2d, or linear-toy (optional with --config)
    experiment: Option<String>,
    /// TOML config file; replaces the preset entirely
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 is fully serial and the reproducibility reference
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Output directory override
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scale preset: desk or paper
    #[arg(long, default_value = "desk")]
    preset: String,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 1234)]
    seed: u64,
    /// Trim the large property sweeps for a faster pass
    #[arg(long)]
    quick: bool,
    /// Also write the report to <OUT>/validate.txt
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Truth(args) => {
            let (cfg, out) = resolve(&args)?;
            cmd_truth(&cfg, &out)
        }
        Command::GenerateData(args) => {
            let (cfg, out) = resolve(&args)?;
            cmd_generate_data(&cfg, &out)
        }
        Command::Filter(args) => {
            init_threads(args.parallel)?;
            let (cfg, out) = resolve(&args)?;
            cmd_filter(&cfg, &out, args.parallel > 1)
        }
        Command::Calibrate(args) => {
            init_threads(args.parallel)?;
            let (cfg, out) = resolve(&args)?;
            cmd_calibrate(&cfg, &out, args.parallel > 1)
        }
        Command::Validate(args) => cmd_validate(&args),
    }
}

fn init_threads(parallel: usize) -> Result<()> {
    if parallel == 0 {
        return Err(Error::Config("--parallel must be at least 1".into()));
    }
    if parallel > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

/// Record the exact resolved configuration alongside the run's artifacts.
fn write_config_artifact(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(Error::io(out))?;
    let path = out.join("config.toml");
    std::fs::write(&path, cfg.to_toml()?).map_err(Error::io(&path))
}

/// Turn the CLI arguments into a validated config and an output directory.
fn resolve(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = if let Some(path) = &args.config {
        let cfg = ExperimentConfig::load(path)?;
        if let Some(name) = &args.experiment {
            let kind = ExperimentKind::parse(name)?;
            if kind != cfg.experiment {
                return Err(Error::Config(format!(
                    "config file describes {} but {} was requested",
                    cfg.experiment, kind
                )));
            }
        }
        cfg
    } else {
        let name = args.experiment.as_deref().ok_or_else(|| {
            Error::Config("an experiment name (or --config) is required".into())
        })?;
        let kind = ExperimentKind::parse(name)?;
        let preset = Preset::parse(&args.preset)?;
        ExperimentConfig::preset(kind, preset)
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok((cfg, out))
}

/// Run the ground truth on its refined mesh, recording the analysis-step
/// snapshots plus the final state.
fn build_truth(cfg: &ExperimentConfig) -> Result<GroundTruth> {
    let mesh = cfg.mesh.build_truth(cfg.truth.refine)?;
    let bc = cfg.boundary_conditions(&mesh)?;
    let (boundary, component) = cfg.loaded_boundary();
    let mut record: BTreeSet<usize> = cfg.filter.analysis_steps.iter().copied().collect();
    record.insert(cfg.n_steps);
    let nucleus = cfg.truth.nucleus.map(|n| n.draw());
    run_ground_truth(
        mesh,
        &cfg.material,
        &bc,
        &cfg.load,
        &cfg.newton,
        cfg.n_steps,
        nucleus.as_ref(),
        &record,
        boundary,
        component,
    )
}

fn cmd_truth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let hash = cfg.hash();
    write_config_artifact(cfg, out)?;
    println!(
        "truth: {} over {} steps (config {})",
        cfg.experiment,
        cfg.n_steps,
        &hash[..12]
    );
    let truth = build_truth(cfg)?;
    println!(
        "truth mesh: {} nodes, {} dofs",
        truth.mesh.n_nodes(),
        truth.mesh.n_total_dofs()
    );
    io::write_forces_csv(&out.join("truth_forces.csv"), &hash, &truth_force_rows(cfg, &truth))?;
    truth.mesh.export_to_file(&out.join("truth_mesh.txt"))?;
    let final_state = truth.snapshot(cfg.n_steps)?;
    io::write_field_csv(&out.join("truth_field.csv"), &hash, &truth.mesh, final_state)?;
    io::write_phi_csv(&out.join("truth_phi.csv"), &hash, &truth.mesh, &final_state.phi_q)?;
    let peak = truth
        .forces
        .iter()
        .fold(0.0f64, |m, &(_, f)| m.max(f.abs()));
    let last = truth.forces.last().map(|&(_, f)| f).unwrap_or(0.0);
    println!("peak |force| {peak:.4e}, final force {last:.4e}");
    println!("wrote truth artifacts to {}", out.display());
    Ok(())
}

fn cmd_generate_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let hash = cfg.hash();
    write_config_artifact(cfg, out)?;
    if cfg.filter.analysis_steps.is_empty() {
        return Err(Error::Config(
            "no analysis steps configured, nothing to generate".into(),
        ));
    }
    println!(
        "generate-data: {} at steps {:?} (config {})",
        cfg.experiment,
        cfg.filter.analysis_steps,
        &hash[..12]
    );
    let truth = build_truth(cfg)?;
    let data = synthesize(cfg, &truth)?;
    write_data_artifacts(cfg, out, &hash, &truth, &data)?;
    let n_rows: usize = data.values().map(|b| b.n_obs() * b.ys[0].len()).sum();
    println!(
        "wrote {} batches ({} measurement rows) to {}",
        data.len(),
        n_rows,
        out.display()
    );
    Ok(())
}

fn synthesize(cfg: &ExperimentConfig, truth: &GroundTruth) -> Result<BTreeMap<usize, DataBatch>> {
    let sensors = cfg.observation.sensors.points();
    let mut data = BTreeMap::new();
    for &step in &cfg.filter.analysis_steps {
        let batch = generate_data(
            truth,
            &sensors,
            cfg.observation.rho,
            cfg.observation.sigma_e,
            cfg.observation.n_obs,
            cfg.seed,
            step,
        )?;
        data.insert(step, batch);
    }
    Ok(data)
}

/// Truth forces with the prescribed displacement recovered from the
/// schedule, in the `step,u_d,force` layout the CSVs use.
fn truth_force_rows(cfg: &ExperimentConfig, truth: &GroundTruth) -> Vec<(usize, f64, f64)> {
    truth
        .forces
        .iter()
        .map(|&(step, f)| (step, cfg.load.u_at(step), f))
        .collect()
}

fn write_data_artifacts(
    cfg: &ExperimentConfig,
    out: &Path,
    hash: &str,
    truth: &GroundTruth,
    data: &BTreeMap<usize, DataBatch>,
) -> Result<()> {
    let sensors = cfg.observation.sensors.points();
    io::write_data_csv(&out.join("data.csv"), hash, data, truth.mesh.dim())?;
    io::write_sensors_csv(&out.join("sensors.csv"), hash, &sensors, truth.mesh.dim())?;
    io::write_forces_csv(&out.join("truth_forces.csv"), hash, &truth_force_rows(cfg, truth))?;
    Ok(())
}

/// Use data.csv from the output directory when present; otherwise run the
/// ground truth now and persist the generated batches alongside the run.
fn load_or_generate_data(
    cfg: &ExperimentConfig,
    out: &Path,
    hash: &str,
) -> Result<BTreeMap<usize, DataBatch>> {
    let path = out.join("data.csv");
    if path.exists() {
        let (stored_hash, data) = io::read_data_csv(&path)?;
        println!("data: reusing {}", path.display());
        if let Some(h) = stored_hash {
            if h != hash {
                println!("note: data.csv was generated under config {}", &h[..12.min(h.len())]);
            }
        }
        return Ok(data);
    }
    println!("data: none found, running the ground truth");
    let truth = build_truth(cfg)?;
    let data = synthesize(cfg, &truth)?;
    write_data_artifacts(cfg, out, hash, &truth, &data)?;
    Ok(data)
}

fn cmd_filter(cfg: &ExperimentConfig, out: &Path, parallel: bool) -> Result<()> {
    let hash = cfg.hash();
    write_config_artifact(cfg, out)?;
    println!(
        "filter: {} with {} members over {} steps, analyses at {:?} (config {})",
        cfg.experiment,
        cfg.prior.n_ens,
        cfg.n_steps,
        cfg.filter.analysis_steps,
        &hash[..12]
    );
    let mesh = cfg.mesh.build()?;
    println!("ensemble mesh: {} nodes, {} dofs", mesh.n_nodes(), mesh.n_total_dofs());
    let bc = cfg.boundary_conditions(&mesh)?;
    let (boundary, component) = cfg.loaded_boundary();
    let sensors = cfg.observation.sensors.points();
    let matrix = build_observation_matrix(&mesh, &sensors)?;
    let obs = ObservationModel {
        matrix,
        rho: cfg.observation.rho,
        sigma_e: cfg.observation.sigma_e,
        kernel: cfg.observation.kernel,
    };
    let data = load_or_generate_data(cfg, out, &hash)?;

    let ens0 = sample_prior(&cfg.prior.spec, &mesh, cfg.prior.n_ens, cfg.seed)?;
    let control0 = cfg.output.control_run.then(|| ens0.clone());

    let driver = FilterDriver {
        mesh: &mesh,
        params: &cfg.material,
        bc: &bc,
        schedule: &cfg.load,
        newton: &cfg.newton,
        obs: &obs,
        config: &cfg.filter,
        data: &data,
        loaded_boundary: boundary,
        load_component: component,
        parallel,
    };
    let mut ens = ens0;
    let mut member_forces: Vec<(usize, usize, f64, f64)> = Vec::new();
    let run = run_filter(&mut ens, &driver, cfg.n_steps, |ens, rec| {
        record_member_forces(&mut member_forces, ens, &mesh, cfg, boundary, component);
        if rec.step % 20 == 0 || cfg.filter.analysis_steps.contains(&rec.step) {
            print_step(rec);
        }
    })?;

    write_run_artifacts(out, &hash, &run, &member_forces, "")?;
    io::save_checkpoint(&out.join("checkpoint"), &hash, &ens)?;

    if let Some(mut control) = control0 {
        println!("control: repeating the run without assimilation");
        let no_analysis = pfenkf::filter::FilterConfig {
            analysis_steps: Vec::new(),
            ..cfg.filter.clone()
        };
        let empty = BTreeMap::new();
        let control_driver = FilterDriver {
            config: &no_analysis,
            data: &empty,
            ..driver
        };
        let mut control_forces: Vec<(usize, usize, f64, f64)> = Vec::new();
        let control_run = run_filter(&mut control, &control_driver, cfg.n_steps, |ens, _| {
            record_member_forces(&mut control_forces, ens, &mesh, cfg, boundary, component);
        })?;
        write_run_artifacts(out, &hash, &control_run, &control_forces, "control_")?;
    }

    for a in &run.analyses {
        println!(
            "analysis at step {}: mean misfit {:.4e} -> {:.4e}",
            a.step, a.mean_pre_misfit, a.mean_post_misfit
        );
    }
    if let Some(last) = run.steps.last() {
        print_step(last);
    }
    println!("wrote filter artifacts to {}", out.display());
    Ok(())
}

fn record_member_forces(
    rows: &mut Vec<(usize, usize, f64, f64)>,
    ens: &EnsembleState,
    mesh: &pfenkf::mesh::Mesh,
    cfg: &ExperimentConfig,
    boundary: &str,
    component: usize,
) {
    for (i, m) in ens.members.iter().enumerate() {
        if !m.alive {
            continue;
        }
        if let Ok(f) = reaction_force(&m.state, mesh, &cfg.material, boundary, component) {
            rows.push((m.state.step, i, m.state.u_d, f));
        }
    }
}

fn print_step(rec: &pfenkf::filter::StepRecord) {
    let crack = match (rec.crack_mean, rec.crack_std) {
        (Some(m), Some(s)) => format!(", crack {m:.4} +/- {s:.4}"),
        (Some(m), None) => format!(", crack {m:.4}"),
        _ => String::new(),
    };
    println!(
        "step {:4}  u_d {:.4e}  force {:.4e} +/- {:.3e}  alive {}{}",
        rec.step, rec.u_d, rec.mean_force, rec.std_force, rec.n_alive, crack
    );
}

fn write_run_artifacts(
    out: &Path,
    hash: &str,
    run: &FilterRun,
    member_forces: &[(usize, usize, f64, f64)],
    prefix: &str,
) -> Result<()> {
    io::write_steps_csv(&out.join(format!("{prefix}steps.csv")), hash, &run.steps)?;
    io::write_ensemble_forces_csv(
        &out.join(format!("{prefix}forces.csv")),
        hash,
        member_forces,
    )?;
    if !run.analyses.is_empty() {
        io::write_analyses_csv(&out.join(format!("{prefix}analyses.csv")), hash, &run.analyses)?;
        let kernels: Vec<_> = run.analyses.iter().map(|a| (a.step, a.kernel)).collect();
        io::write_hyperparameters_csv(
            &out.join(format!("{prefix}hyperparameters.csv")),
            hash,
            &kernels,
        )?;
    }
    Ok(())
}

fn cmd_calibrate(cfg: &ExperimentConfig, out: &Path, parallel: bool) -> Result<()> {
    let hash = cfg.hash();
    write_config_artifact(cfg, out)?;
    let &first_step = cfg.filter.analysis_steps.first().ok_or_else(|| {
        Error::Config("calibration needs at least one analysis step".into())
    })?;
    println!(
        "calibrate: {} at step {first_step} (config {})",
        cfg.experiment,
        &hash[..12]
    );
    let mesh = cfg.mesh.build()?;
    let bc = cfg.boundary_conditions(&mesh)?;
    let (boundary, component) = cfg.loaded_boundary();
    let sensors = cfg.observation.sensors.points();
    let matrix = build_observation_matrix(&mesh, &sensors)?;
    let data = load_or_generate_data(cfg, out, &hash)?;
    let batch = data.get(&first_step).ok_or_else(|| {
        Error::Config(format!("no data batch for analysis step {first_step}"))
    })?;

    // Forecast the prior ensemble (no assimilation) up to the batch's step.
    let mut ens = sample_prior(&cfg.prior.spec, &mesh, cfg.prior.n_ens, cfg.seed)?;
    let no_analysis = pfenkf::filter::FilterConfig {
        analysis_steps: Vec::new(),
        ..cfg.filter.clone()
    };
    let empty = BTreeMap::new();
    let obs = ObservationModel {
        matrix,
        rho: cfg.observation.rho,
        sigma_e: cfg.observation.sigma_e,
        kernel: cfg.observation.kernel,
    };
    let driver = FilterDriver {
        mesh: &mesh,
        params: &cfg.material,
        bc: &bc,
        schedule: &cfg.load,
        newton: &cfg.newton,
        obs: &obs,
        config: &no_analysis,
        data: &empty,
        loaded_boundary: boundary,
        load_component: component,
        parallel,
    };
    run_filter(&mut ens, &driver, first_step, |_, _| {})?;

    let mean = ensemble_mean(&ens);
    let (_, anoms) = ensemble_anomalies(&ens);
    let mean_obs = obs.matrix.apply(&mean);
    let obs_anoms = obs.matrix.apply_matrix(&anoms);
    let fit = calibrate_hyperparameters(
        batch,
        &mean_obs,
        &obs_anoms,
        cfg.observation.rho,
        &sensors,
        mesh.dim(),
        cfg.observation.sigma_e,
        cfg.observation.kernel,
        &CalibrationSettings {
            map_prior: true,
            ..CalibrationSettings::default()
        },
    )?;
    println!(
        "fitted kernel: nu {} (fixed), sigma {:.6e}, length {:.6e}",
        fit.kernel.nu, fit.kernel.sigma, fit.kernel.length
    );
    println!(
        "negative log posterior {:.6e} after {} evaluations{}",
        fit.objective,
        fit.evaluations,
        if fit.converged { "" } else { " (not converged; best iterate reported)" }
    );
    io::write_hyperparameters_csv(
        &out.join("calibrated_kernel.csv"),
        &hash,
        &[(first_step, fit.kernel)],
    )?;
    println!("wrote calibration artifacts to {}", out.display());
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let results = validate::run_all(args.seed, args.quick);
    let report = validate::format_report(&results);
    print!("{report}");
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(Error::io(out))?;
        let path = out.join("validate.txt");
        std::fs::write(&path, &report).map_err(Error::io(&path))?;
    }
    validate::ensure_all_passed(&results)
}
