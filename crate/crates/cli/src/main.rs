//! Command-line harness: excite, simulate, train, estimate, bench, report.

use clap::{Parser, Subcommand, ValueEnum};
use extorq::harness::{
    self, estimates_from_csv, estimates_to_csv, excitation_from_doc, excitation_to_doc,
    experiment_from_doc, gmm_to_doc, gp_set_from_doc, gp_set_to_doc, kmp_set_from_doc,
    kmp_set_to_doc, run_experiment, ExperimentConfig, ObserverKind, TextDoc,
};
use extorq::observer::{AdaptationMode, PerJointModel, ResidualModel};
use extorq::{kmp_predict, Error, FourierTrajectoryParams, SampledTrajectory};
use nalgebra::DVector;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "extorq",
    about = "Sensorless external joint-torque estimation on synthetic manipulators",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Planar2,
    Chain6,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunKind {
    /// Contact-free motion over the training duration.
    Free,
    /// Motion with the configured external-torque profile applied.
    Loaded,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObserverArg {
    KmpAkf,
    GpAkf,
    InnovationAkf,
    StaticKf,
}

impl From<ObserverArg> for ObserverKind {
    fn from(arg: ObserverArg) -> Self {
        match arg {
            ObserverArg::KmpAkf => ObserverKind::Kmp,
            ObserverArg::GpAkf => ObserverKind::Gp,
            ObserverArg::InnovationAkf => ObserverKind::InnovationAkf,
            ObserverArg::StaticKf => ObserverKind::StaticKf,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration file; omit to use the built-in preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration preset used when no file is given.
    #[arg(long, value_enum, default_value = "planar2")]
    preset: Preset,
    /// Override the configuration's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize an excitation trajectory and record the realized motion.
    Excite {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a tracked trajectory and write the recording CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Excitation parameter file; omit to optimize one first.
        #[arg(long)]
        excitation: Option<PathBuf>,
        /// Free (training) or loaded (evaluation) run.
        #[arg(long, value_enum, default_value = "free")]
        kind: RunKind,
    },
    /// Fit per-joint residual models from a recording.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training recording CSV.
        #[arg(long)]
        data: PathBuf,
    },
    /// Run one observer over a recording and write its estimate trace.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Evaluation recording CSV.
        #[arg(long)]
        data: PathBuf,
        /// Directory holding kmp_set.txt / gp_set.txt from `train`.
        #[arg(long)]
        models: PathBuf,
        #[arg(long, value_enum)]
        observer: ObserverArg,
    },
    /// Full pipeline for every configured observer, optionally over
    /// several seeds, with a deterministic summary report.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Number of consecutive seeds to run, starting at the master seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Recompute metrics from an emitted estimate trace.
    Report {
        #[command(flatten)]
        common: Common,
        /// Estimate trace CSV from `estimate`.
        #[arg(long)]
        estimates: PathBuf,
        /// Recording CSV holding the ground-truth torque block.
        #[arg(long)]
        truth: PathBuf,
        /// Observer label for the report.
        #[arg(long, default_value = "observer")]
        label: String,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match &common.config {
        Some(path) => experiment_from_doc(&TextDoc::load(path, "experiment", 1)?)?,
        None => match common.preset {
            Preset::Planar2 => ExperimentConfig::planar2(),
            Preset::Chain6 => ExperimentConfig::chain6(),
        },
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn ensure_out(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_excite(common: &Common) -> Result<(), Error> {
    let config = load_config(common)?;
    ensure_out(&common.out).map_err(Error::stage("setup"))?;
    let params =
        harness::optimize_excitation(&config, config.seed).map_err(Error::stage("excite"))?;
    excitation_to_doc(&params)
        .save(&common.out.join("excitation.txt"))
        .map_err(Error::stage("write"))?;
    let model = config.build_model();
    let n = model.joints();
    let traj = extorq::simulate(
        &model,
        &config.friction,
        |t| params.eval(t),
        |_| DVector::zeros(n),
        config.t_s,
        config.train_duration,
        config.seed,
    )
    .map_err(Error::stage("simulate"))?;
    traj.save_csv(&common.out.join("trajectory.csv"))
        .map_err(Error::stage("write"))?;
    println!(
        "wrote {} and {} ({} samples)",
        common.out.join("excitation.txt").display(),
        common.out.join("trajectory.csv").display(),
        traj.len()
    );
    Ok(())
}

fn cmd_simulate(
    common: &Common,
    excitation: &Option<PathBuf>,
    kind: RunKind,
) -> Result<(), Error> {
    let config = load_config(common)?;
    ensure_out(&common.out).map_err(Error::stage("setup"))?;
    let params: FourierTrajectoryParams = match excitation {
        Some(path) => excitation_from_doc(&TextDoc::load(path, "excitation", 1)?)
            .map_err(Error::stage("excite"))?,
        None => {
            harness::optimize_excitation(&config, config.seed).map_err(Error::stage("excite"))?
        }
    };
    let model = config.build_model();
    let n = model.joints();
    let (duration, name): (f64, &str) = match kind {
        RunKind::Free => (config.train_duration, "free.csv"),
        RunKind::Loaded => (config.eval_duration, "loaded.csv"),
    };
    let profile = config.external_profile();
    let traj = extorq::simulate(
        &model,
        &config.friction,
        |t| params.eval(t),
        |t| match kind {
            RunKind::Free => DVector::zeros(n),
            RunKind::Loaded => profile(t),
        },
        config.t_s,
        duration,
        config.seed,
    )
    .map_err(Error::stage("simulate"))?;
    let path = common.out.join(name);
    traj.save_csv(&path).map_err(Error::stage("write"))?;
    println!("wrote {} ({} samples)", path.display(), traj.len());
    Ok(())
}

fn cmd_train(common: &Common, data: &Path) -> Result<(), Error> {
    let config = load_config(common)?;
    ensure_out(&common.out).map_err(Error::stage("setup"))?;
    let traj = SampledTrajectory::load_csv(data).map_err(Error::stage("load"))?;
    let model = config.build_model();
    let trained =
        harness::train_residual_models(&model, &traj, &config).map_err(Error::stage("train"))?;
    for (j, gmm) in trained.gmms.iter().enumerate() {
        gmm_to_doc(gmm)
            .save(&common.out.join(format!("gmm_j{j}.txt")))
            .map_err(Error::stage("write"))?;
    }
    kmp_set_to_doc(&trained.kmp)
        .save(&common.out.join("kmp_set.txt"))
        .map_err(Error::stage("write"))?;
    gp_set_to_doc(&trained.gp)
        .save(&common.out.join("gp_set.txt"))
        .map_err(Error::stage("write"))?;
    println!(
        "trained {} joints; held-out residual rmse kmp = {:?}, gp = {:?}",
        model.joints(),
        trained.kmp_test_rmse.as_slice(),
        trained.gp_test_rmse.as_slice()
    );
    Ok(())
}

fn cmd_estimate(
    common: &Common,
    data: &Path,
    models: &Path,
    observer: ObserverArg,
) -> Result<(), Error> {
    let config = load_config(common)?;
    ensure_out(&common.out).map_err(Error::stage("setup"))?;
    let traj = SampledTrajectory::load_csv(data).map_err(Error::stage("load"))?;
    let model = config.build_model();
    let n = model.joints();
    let kind: ObserverKind = observer.into();

    let kmp_set = PerJointModel(
        kmp_set_from_doc(&TextDoc::load(&models.join("kmp_set.txt"), "kmp-set", 1)?)
            .map_err(Error::stage("load"))?,
    );
    let static_var = if config.filter.static_model_var.is_empty() {
        DVector::from_fn(n, |j, _| {
            let joint_model = &kmp_set.0[j];
            let supports = &joint_model.reference().inputs;
            supports
                .iter()
                .map(|s| kmp_predict(joint_model, s).cov[(0, 0)])
                .sum::<f64>()
                / supports.len() as f64
        })
    } else {
        DVector::from_column_slice(&config.filter.static_model_var)
    };
    let filter_config = config.filter.build(n, config.t_s, &static_var);

    let gp_set;
    let (residual, mode): (&dyn ResidualModel, AdaptationMode) = match kind {
        ObserverKind::Kmp => (&kmp_set, AdaptationMode::VarianceAware),
        ObserverKind::Gp => {
            gp_set = PerJointModel(
                gp_set_from_doc(&TextDoc::load(&models.join("gp_set.txt"), "gp-set", 1)?)
                    .map_err(Error::stage("load"))?,
            );
            (&gp_set, AdaptationMode::VarianceAware)
        }
        ObserverKind::InnovationAkf => (
            &kmp_set,
            AdaptationMode::Innovation {
                rho_nu: config.filter.innovation_rho_nu,
                rho_d: config.filter.innovation_rho_d,
            },
        ),
        ObserverKind::StaticKf => (&kmp_set, AdaptationMode::Static),
    };
    let (outputs, seconds) = harness::run_observer(&model, residual, filter_config, mode, &traj)
        .map_err(Error::stage("estimate"))?;
    let path = common.out.join(format!("estimates_{}.csv", kind.name()));
    estimates_to_csv(&outputs, &traj.times, &path).map_err(Error::stage("write"))?;
    println!(
        "wrote {} ({} samples, {:.1} us/sample online)",
        path.display(),
        outputs.len(),
        1e6 * seconds / outputs.len().max(1) as f64
    );
    Ok(())
}

fn cmd_bench(common: &Common, seeds: u64) -> Result<(), Error> {
    let base = load_config(common)?;
    ensure_out(&common.out).map_err(Error::stage("setup"))?;
    let mut summary = TextDoc::new("bench-report", 1);
    summary.set_str("label", &base.label);
    summary.set_u64("seeds", seeds);
    summary.set_u64("first_seed", base.seed);
    let names: Vec<&str> = base.observers.iter().map(|k| k.name()).collect();
    summary.set_str("observers", &names.join(", "));

    let n = base.joints();
    let mut sums: Vec<Vec<f64>> = vec![vec![0.0; n]; base.observers.len()];
    let mut cart_sums = vec![0.0f64; base.observers.len()];
    for i in 0..seeds.max(1) {
        let mut config = base.clone();
        config.seed = base.seed.wrapping_add(i);
        let dir = common.out.join(format!("seed{}", config.seed));
        let output = run_experiment(&config, Some(&dir))?;
        for (o, report) in output.reports.iter().enumerate() {
            for j in 0..n {
                sums[o][j] += report.joint_rmse[j];
            }
            cart_sums[o] += report.cartesian_aggregate;
        }
    }
    let denom = seeds.max(1) as f64;
    for (o, kind) in base.observers.iter().enumerate() {
        let mean_joint: Vec<f64> = sums[o].iter().map(|s| s / denom).collect();
        println!(
            "{:>16}: joint rmse {:?} N m, cartesian {:.3}",
            kind.name(),
            mean_joint
                .iter()
                .map(|v| (v * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            cart_sums[o] / denom
        );
        summary.set_slice(&format!("{}.mean_joint_rmse", kind.name()), &mean_joint);
        summary.set_f64(
            &format!("{}.mean_cartesian_aggregate", kind.name()),
            cart_sums[o] / denom,
        );
    }
    summary
        .save(&common.out.join("report.txt"))
        .map_err(Error::stage("write"))?;
    println!("wrote {}", common.out.join("report.txt").display());
    Ok(())
}

fn cmd_report(common: &Common, estimates: &Path, truth: &Path, label: &str) -> Result<(), Error> {
    let config = load_config(common)?;
    ensure_out(&common.out).map_err(Error::stage("setup"))?;
    let (_, est) = estimates_from_csv(estimates).map_err(Error::stage("load"))?;
    let traj = SampledTrajectory::load_csv(truth).map_err(Error::stage("load"))?;
    let Some(tau_ext) = traj.tau_ext.as_ref() else {
        return Err(Error::Stage {
            stage: "load",
            source: Box::new(Error::EmptySeries("truth CSV has no tau_ext block")),
        });
    };
    let model = config.build_model();
    let metrics = harness::compute_metrics(&model, label, &est, tau_ext, &traj.q, 0.0)
        .map_err(Error::stage("report"))?;
    let mut doc = TextDoc::new("report", 1);
    doc.set_str("label", label);
    doc.set_slice("joint_rmse", &metrics.joint_rmse);
    doc.set_slice("cartesian_rmse", &metrics.cartesian_rmse);
    doc.set_f64("cartesian_aggregate", metrics.cartesian_aggregate);
    doc.save(&common.out.join("report.txt"))
        .map_err(Error::stage("write"))?;
    println!("wrote {}", common.out.join("report.txt").display());
    println!("joint rmse: {:?}", metrics.joint_rmse);
    Ok(())
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Excite { common } => cmd_excite(common),
        Command::Simulate {
            common,
            excitation,
            kind,
        } => cmd_simulate(common, excitation, *kind),
        Command::Train { common, data } => cmd_train(common, data),
        Command::Estimate {
            common,
            data,
            models,
            observer,
        } => cmd_estimate(common, data, models, *observer),
        Command::Bench { common, seeds } => cmd_bench(common, *seeds),
        Command::Report {
            common,
            estimates,
            truth,
            label,
        } => cmd_report(common, estimates, truth, label),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
