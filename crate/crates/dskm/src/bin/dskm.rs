//! Command-line front end: train, predict, gp, bench, synth, audit.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
//! divergence. All randomness flows from --seed; repeated runs with the
//! same flags are bit-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dskm::analysis::{coefficient_bound_audit, fit_loglog_slope_with_burn_in, mc_kernel_error};
use dskm::baselines::{norma_train, rpegasos_train};
use dskm::data::{parse_csv, parse_libsvm, split, synth_regression, write_csv, Dataset, Task};
use dskm::gp::{closed_form_posterior, ds_posterior_mean, ds_variance_testpoints};
use dskm::kernel::{median_heuristic, KernelFamily};
use dskm::predictor::{load, predict, predict_averaged, save};
use dskm::stream::{derive_salted, salt};
use dskm::trainer::{Trainer, TrainConfig};
use dskm::{Error, Kernel, Loss};

#[derive(Parser)]
#[command(name = "dskm", version, about = "Doubly stochastic kernel machines")]
struct Cli {
    /// Cap on internal parallelism (the implementation is single-threaded;
    /// accepted for interface stability).
    #[arg(long, global = true, env = "DSKM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it to disk; metrics stream on stdout.
    Train(TrainArgs),
    /// Evaluate a saved model on new data, emitting CSV scores.
    Predict(PredictArgs),
    /// Gaussian process posterior comparison (closed form vs stochastic).
    Gp(GpArgs),
    /// Compare solvers under a shared budget.
    Bench(BenchArgs),
    /// Generate the synthetic regression dataset.
    Synth(SynthArgs),
    /// Run a verification audit.
    Audit(AuditArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Libsvm,
}

#[derive(Args)]
struct DataArgs {
    /// Input dataset path.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct KernelArgs {
    /// gaussian | laplacian | cauchy | hellinger | arc-cosine |
    /// polynomial | linear
    #[arg(long, default_value = "gaussian")]
    kernel: String,
    /// Length scale: a number, or median:<mult> for the median heuristic.
    #[arg(long, default_value = "1")]
    bandwidth: String,
    /// Arc-cosine order (0 or 1).
    #[arg(long, default_value_t = 0)]
    order: u32,
    /// Polynomial degree.
    #[arg(long, default_value_t = 2)]
    degree: u32,
    /// Polynomial bias c.
    #[arg(long, default_value_t = 1.0)]
    bias: f64,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 1e-4)]
    nu: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Random features per block (r).
    #[arg(long, default_value_t = 64)]
    block_size: usize,
    #[arg(long, default_value_t = 1024)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// hinge | squared-hinge | logistic | multiclass:<C> | square | huber |
    /// eps:<e> | quantile:<tau> | novelty | density-ratio
    #[arg(long, default_value = "square")]
    loss: String,
    #[command(flatten)]
    sched: ScheduleArgs,
    #[arg(long)]
    model_out: PathBuf,
    /// Holdout fraction for the metrics stream.
    #[arg(long)]
    holdout: Option<f64>,
    /// Maintain the averaged iterate.
    #[arg(long)]
    average: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    /// Evaluate the averaged iterate instead of the last one.
    #[arg(long)]
    average: bool,
}

#[derive(Args)]
struct GpArgs {
    /// Synthetic training set size (no --data: the gp command always uses
    /// the synthetic generator).
    #[arg(long, default_value_t = 2048)]
    n: usize,
    /// Test grid size.
    #[arg(long, default_value_t = 256)]
    grid: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma2: f64,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    sched: ScheduleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Synthetic training set size.
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Comma-separated subset of dsgd,norma,rpegasos.
    #[arg(long, default_value = "dsgd,norma,rpegasos")]
    solvers: String,
    /// one-pass | seconds:<s>
    #[arg(long, default_value = "one-pass")]
    budget: String,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    sched: ScheduleArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    noiseless: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// coefficients | features
    #[arg(long)]
    check: String,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 1000)]
    t_max: usize,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Gp(a) => cmd_gp(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Audit(a) => cmd_audit(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => 4,
        Error::Parse { .. }
        | Error::Io(_)
        | Error::ModelFile(_)
        | Error::TargetMismatch(_)
        | Error::DimensionMismatch { .. } => 3,
        _ => 2,
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn read_dataset(args: &DataArgs) -> Result<Dataset, Error> {
    let file = File::open(&args.data)?;
    let reader = BufReader::new(file);
    match args.format {
        Format::Csv => parse_csv(reader),
        Format::Libsvm => parse_libsvm(reader),
    }
}

fn parse_loss(spec: &str) -> Result<Loss, Error> {
    Ok(match spec {
        "hinge" => Loss::Hinge,
        "squared-hinge" => Loss::SquaredHinge,
        "logistic" => Loss::Logistic,
        "square" => Loss::Square,
        "huber" => Loss::Huber,
        "novelty" => Loss::Novelty,
        "density-ratio" => Loss::KlDensityRatio,
        other => {
            if let Some(c) = other.strip_prefix("multiclass:") {
                Loss::MulticlassLogistic {
                    classes: c.parse().map_err(|_| usage("bad class count"))?,
                }
            } else if let Some(e) = other.strip_prefix("eps:") {
                Loss::EpsInsensitive {
                    eps: e.parse().map_err(|_| usage("bad eps"))?,
                }
            } else if let Some(t) = other.strip_prefix("quantile:") {
                Loss::Quantile {
                    tau: t.parse().map_err(|_| usage("bad quantile level"))?,
                }
            } else {
                return Err(usage(format!("unknown loss {other:?}")));
            }
        }
    })
}

/// Retag the dataset so targets match what the loss expects.
fn retask(ds: Dataset, loss: &Loss) -> Result<Dataset, Error> {
    match loss {
        Loss::Hinge | Loss::SquaredHinge | Loss::Logistic => ds.with_task(Task::Binary),
        Loss::MulticlassLogistic { classes } => ds.with_task(Task::Multiclass {
            classes: *classes,
        }),
        Loss::KlDensityRatio => ds.with_task(Task::Multiclass { classes: 2 }),
        _ => ds.with_task(Task::Regression),
    }
}

fn resolve_kernel(args: &KernelArgs, ds: Option<&Dataset>, seed: u64) -> Result<Kernel, Error> {
    let bandwidth = if let Some(mult) = args.bandwidth.strip_prefix("median:") {
        let mult: f64 = mult.parse().map_err(|_| usage("bad median multiplier"))?;
        let ds = ds.ok_or_else(|| usage("median bandwidth requires a dataset"))?;
        let mut s = derive_salted(seed, salt::MEDIAN, 0);
        let median = median_heuristic(&ds.x, ds.n, ds.d, 1 << 14, &mut s)?;
        if !(median > 0.0) {
            return Err(usage("median pairwise distance is zero"));
        }
        mult * median
    } else {
        args.bandwidth
            .parse()
            .map_err(|_| usage("bad bandwidth"))?
    };
    let spec = match args.kernel.as_str() {
        "gaussian" => Kernel::gaussian(bandwidth),
        "laplacian" => Kernel::laplacian(bandwidth),
        "cauchy" => Kernel::cauchy(bandwidth),
        "hellinger" => Kernel::hellinger(),
        "arc-cosine" => Kernel::arc_cosine(args.order),
        "polynomial" => Kernel::polynomial(args.degree, args.bias, 0),
        "linear" => Kernel::linear(),
        other => return Err(usage(format!("unknown kernel {other:?}"))),
    };
    spec.validate()?;
    Ok(spec)
}

fn make_config(sched: &ScheduleArgs, averaging: bool) -> TrainConfig {
    // Checkpoints at powers of two for the metrics stream.
    let mut schedule: Vec<usize> = (0..)
        .map(|k| 1usize << k)
        .take_while(|&t| t <= sched.iters)
        .collect();
    if schedule.last() != Some(&sched.iters) && sched.iters > 0 {
        schedule.push(sched.iters);
    }
    TrainConfig {
        theta: sched.theta,
        nu: sched.nu,
        batch_size: sched.batch_size,
        block_size: sched.block_size,
        iterations: sched.iters,
        base_seed: sched.seed,
        eval_schedule: schedule,
        averaging,
    }
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode, Error> {
    let loss = parse_loss(&args.loss)?;
    let full = retask(read_dataset(&args.data)?, &loss)?;
    let (train_ds, holdout) = match args.holdout {
        Some(f) => {
            let (tr, ho) = split(&full, f, args.sched.seed)?;
            (tr, Some(ho))
        }
        None => (full, None),
    };
    let mut kernel_spec = resolve_kernel(&args.kernel, Some(&train_ds), args.sched.seed)?;
    if kernel_spec.family == KernelFamily::PolynomialSketch {
        kernel_spec.sketch_dim = args.sched.block_size;
    }
    let config = make_config(&args.sched, args.average);

    let mut trainer = Trainer::new(&train_ds, config, kernel_spec, loss.clone())?;
    let probe = holdout.as_ref().map(|ho| {
        trainer.add_probe(&ho.x).expect("holdout probe");
        ho
    });

    println!("iteration,elapsed_secs,train_loss,holdout_error");
    trainer.run(|ckpt| {
        let holdout_err = match (&probe, ckpt.probes.first()) {
            (Some(ho), Some(snap)) => holdout_error(&loss, ho, &snap.last),
            _ => f64::NAN,
        };
        println!(
            "{},{:.3},{},{}",
            ckpt.iteration, ckpt.elapsed_secs, ckpt.train_loss, holdout_err
        );
    })?;
    let model = trainer.finish();
    let file = File::create(&args.model_out)?;
    save(&model, BufWriter::new(file))?;
    Ok(ExitCode::SUCCESS)
}

/// Mean loss (or error rate for classifiers) on a holdout set given tracked
/// f values.
fn holdout_error(loss: &Loss, ho: &Dataset, fvals: &[f64]) -> f64 {
    let c = loss.outputs();
    let n = ho.n;
    match loss {
        Loss::Hinge | Loss::SquaredHinge | Loss::Logistic => {
            let wrong = (0..n)
                .filter(|&i| (fvals[i] >= 0.0) != (ho.y[i] >= 0.0))
                .count();
            wrong as f64 / n as f64
        }
        Loss::MulticlassLogistic { .. } => {
            let wrong = (0..n)
                .filter(|&i| {
                    let row = &fvals[i * c..(i + 1) * c];
                    let argmax = row
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(k, _)| k)
                        .unwrap_or(0);
                    argmax != ho.y[i] as usize
                })
                .count();
            wrong as f64 / n as f64
        }
        _ => {
            (0..n)
                .map(|i| {
                    let e = fvals[i] - ho.y[i];
                    e * e
                })
                .sum::<f64>()
                / n as f64
        }
    }
}

fn cmd_predict(args: PredictArgs) -> Result<ExitCode, Error> {
    let model = load(BufReader::new(File::open(&args.model)?))?;
    let ds = read_dataset(&args.data)?;
    if ds.d != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: ds.d,
        });
    }
    let scores = if args.average {
        predict_averaged(&model, &ds.x, ds.n)?
    } else {
        predict(&model, &ds.x, ds.n)?
    };
    let mut out = BufWriter::new(File::create(&args.out)?);
    write!(out, "row")?;
    for c in 0..model.outputs {
        write!(out, ",score_{c}")?;
    }
    writeln!(out)?;
    for i in 0..ds.n {
        write!(out, "{i}")?;
        for c in 0..model.outputs {
            write!(out, ",{}", scores[i * model.outputs + c])?;
        }
        writeln!(out)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gp(args: GpArgs) -> Result<ExitCode, Error> {
    let ds = synth_regression(args.n, args.sched.seed, false)?;
    let kernel = resolve_kernel(&args.kernel, Some(&ds), args.sched.seed)?;
    // Deterministic test grid from a salted stream.
    let mut gs = derive_salted(args.sched.seed, salt::SYNTH, 1);
    let xstar: Vec<f64> = (0..args.grid * 2)
        .map(|_| 10.0 * gs.uniform() - 5.0)
        .collect();

    let (cf_means, cf_vars) = closed_form_posterior(
        &ds.x, ds.n, &ds.y, &xstar, args.grid, &kernel, args.sigma2,
    )?;

    let config = make_config(&args.sched, false);
    let mean_model = ds_posterior_mean(&ds, config.clone(), kernel.clone(), args.sigma2)?;
    let est_means = predict(&mean_model, &xstar, args.grid)?;
    let var_run =
        ds_variance_testpoints(&ds, &xstar, args.grid, &config, &kernel, args.sigma2)?;

    let mut out = BufWriter::new(File::create(&args.out)?);
    writeln!(out, "x1,x2,cf_mean,cf_var,est_mean,est_var")?;
    for i in 0..args.grid {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            xstar[i * 2],
            xstar[i * 2 + 1],
            cf_means[i],
            cf_vars[i],
            est_means[i],
            var_run.variances[i]
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, Error> {
    let solvers: Vec<&str> = args.solvers.split(',').map(str::trim).collect();
    for s in &solvers {
        if !matches!(*s, "dsgd" | "norma" | "rpegasos") {
            return Err(usage(format!("unknown solver {s:?}")));
        }
    }
    let full = synth_regression(args.n, args.sched.seed, false)?;
    let (train_ds, holdout) = split(&full, 0.2, args.sched.seed)?;
    let kernel = resolve_kernel(&args.kernel, Some(&train_ds), args.sched.seed)?;
    let truth: Vec<f64> = (0..holdout.n).map(|i| holdout.y[i]).collect();

    // Budget → iteration count (one-pass) or wall-clock limit.
    let mut sched = ScheduleArgs { ..args.sched };
    let time_limit = if args.budget == "one-pass" {
        sched.iters = train_ds.n.div_ceil(sched.batch_size);
        None
    } else if let Some(s) = args.budget.strip_prefix("seconds:") {
        let secs: f64 = s.parse().map_err(|_| usage("bad seconds budget"))?;
        Some(secs)
    } else {
        return Err(usage(format!("unknown budget {:?}", args.budget)));
    };
    let config = make_config(&sched, false);

    let mse = |pred: &[f64]| -> f64 {
        pred.iter()
            .zip(&truth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / truth.len() as f64
    };

    println!("solver,wall_secs,coefficient_numbers,holdout_mse,iterations");
    for solver in solvers {
        let start = Instant::now();
        match solver {
            "dsgd" => {
                let mut tr =
                    Trainer::new(&train_ds, config.clone(), kernel.clone(), Loss::Square)?;
                run_budgeted(&mut tr, &config, time_limit, start)?;
                let iters = tr.iteration();
                let model = tr.finish();
                let wall = start.elapsed().as_secs_f64();
                let err = mse(&predict(&model, &holdout.x, holdout.n)?);
                assert_eq!(model.coefficient_count(), iters * config.block_size);
                println!(
                    "dsgd,{wall:.3},{},{err},{iters}",
                    model.coefficient_count()
                );
            }
            "norma" => {
                let mut c = config.clone();
                if let Some(limit) = time_limit {
                    c.iterations = budget_iterations(limit, || {
                        let mut probe = c.clone();
                        probe.iterations = 8;
                        norma_train(&train_ds, &probe, kernel.clone(), Loss::Square).map(|_| ())
                    })?;
                }
                let model = norma_train(&train_ds, &c, kernel.clone(), Loss::Square)?;
                let wall = start.elapsed().as_secs_f64();
                let err = mse(&model.predict(&holdout.x, holdout.n)?);
                if c.batch_size == 1 {
                    assert_eq!(model.storage_count(), c.iterations * (train_ds.d + 1));
                }
                println!(
                    "norma,{wall:.3},{},{err},{}",
                    model.storage_count(),
                    c.iterations
                );
            }
            "rpegasos" => {
                let mut c = config.clone();
                if let Some(limit) = time_limit {
                    c.iterations = budget_iterations(limit, || {
                        let mut probe = c.clone();
                        probe.iterations = 8;
                        rpegasos_train(&train_ds, 256, &probe, kernel.clone(), Loss::Square)
                            .map(|_| ())
                    })?;
                }
                let model = rpegasos_train(&train_ds, 256, &c, kernel.clone(), Loss::Square)?;
                let wall = start.elapsed().as_secs_f64();
                let err = mse(&model.predict(&holdout.x, holdout.n)?);
                println!("rpegasos,{wall:.3},{},{err},{}", model.w.len(), c.iterations);
            }
            _ => unreachable!(),
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Step the trainer until the iteration budget or the wall-clock limit
/// (whichever comes first; at most one extra iteration past the limit).
fn run_budgeted(
    tr: &mut Trainer,
    config: &TrainConfig,
    time_limit: Option<f64>,
    start: Instant,
) -> Result<(), Error> {
    let max_iters = if time_limit.is_some() {
        usize::MAX
    } else {
        config.iterations
    };
    while tr.iteration() < max_iters {
        if let Some(limit) = time_limit {
            if start.elapsed().as_secs_f64() >= limit {
                break;
            }
        }
        tr.step()?;
    }
    Ok(())
}

/// Estimate how many iterations fit in `limit` seconds by timing a small
/// probe run.
fn budget_iterations(limit: f64, probe: impl FnOnce() -> Result<(), Error>) -> Result<usize, Error> {
    let start = Instant::now();
    probe()?;
    let per_iter = start.elapsed().as_secs_f64() / 8.0;
    Ok(((limit / per_iter.max(1e-9)) as usize).max(1))
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, Error> {
    let ds = synth_regression(args.n, args.seed, args.noiseless)?;
    let out = BufWriter::new(File::create(&args.out)?);
    write_csv(&ds, out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(args: AuditArgs) -> Result<ExitCode, Error> {
    match args.check.as_str() {
        "coefficients" => {
            let worst = coefficient_bound_audit(args.theta, args.nu, args.t_max)?;
            let pass = worst <= 1.0 + 1e-12;
            println!(
                "check=coefficients theta={} nu={} t_max={} worst_ratio={worst} pass={pass}",
                args.theta, args.nu, args.t_max
            );
            Ok(if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        "features" => {
            let spec = resolve_kernel(&args.kernel, None, args.seed)?;
            let mut s = derive_salted(args.seed, salt::DATA, 0);
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..20)
                .map(|_| {
                    (
                        vec![s.normal(), s.normal()],
                        vec![s.normal(), s.normal()],
                    )
                })
                .collect();
            let r_values: Vec<usize> = (6..=13).map(|k| 1usize << k).collect();
            let series = mc_kernel_error(&spec, &pairs, &r_values, args.seed)?;
            let slope = fit_loglog_slope_with_burn_in(&series, 0.0)?;
            let pass = (-0.7..=-0.3).contains(&slope);
            for (r, e) in &series {
                println!("r={r} max_error={e}");
            }
            println!(
                "check=features kernel={} slope={slope} pass={pass}",
                spec.family.name()
            );
            Ok(if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        other => Err(usage(format!("unknown audit {other:?}"))),
    }
}
