//! Command-line surface: instance generation, single solver runs, and the
//! experiment recipes. Exit codes distinguish input problems (2), enumeration
//! infeasibility (3), and solver divergence (4) so scripts can fall back from
//! the exact method to the stochastic one.

use popsynth_cli::{experiments, records, spec_file};

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use popsynth::exact::{solve_exact, EnumeratedModel, ExactOptions};
use popsynth::generators::synistat::{synistat_spec, synistat_split, synistat_targets};
use popsynth::generators::wu::{wu_generate, WuInstanceSpec};
use popsynth::generators::planted::planted_family_generate;
use popsynth::io;
use popsynth::metrics::{diversity, heldout_mre, kl_to_truth};
use popsynth::pcd::{fit_pcd, PcdConfig, StopReason};
use popsynth::raking::{draw_initial_sample, rake, RakeConfig};
use popsynth::ConstraintSet64;

use experiments::{run_experiment, ExperimentCtx};
use records::{write_result_csv, ResultRecord};
use spec_file::{parse_instance_spec, InstanceSpec};

#[derive(Parser)]
#[command(
    name = "popsynth",
    about = "Maximum-entropy synthesis of categorical populations from marginal constraints",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark instance: constraint set plus ground-truth files.
    Generate(GenerateArgs),
    /// Run one solver on a constraint-set file.
    Solve(SolveArgs),
    /// Run an experiment recipe over a solver grid.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Instance kind: synistat | wu | planted.
    kind: String,
    /// Instance spec file (wu/planted); see the format in the README.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Built-in preset: a0 | a1a (wu only).
    #[arg(long)]
    preset: Option<String>,
    /// Seed for presets.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Enumeration budget on |X|.
    #[arg(long, default_value_t = popsynth::DEFAULT_ENUM_BUDGET)]
    max_enum: f64,
}

#[derive(Args)]
struct SolveArgs {
    /// Solver: exact | pcd | raking.
    #[arg(long)]
    method: String,
    /// Constraint-set file.
    #[arg(long)]
    instance: PathBuf,
    /// Ground-truth λ file for KL / parameter-distance metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Held-out constraint-set file for per-table MREs.
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// Pool size (pcd) or sample size (raking).
    #[arg(long, default_value_t = 25_000)]
    pool_size: usize,
    /// Gibbs sweeps per outer iteration.
    #[arg(long, default_value_t = 5)]
    sweeps: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000)]
    max_iters: usize,
    /// Enumeration budget on |X| for exact operations.
    #[arg(long, default_value_t = popsynth::DEFAULT_ENUM_BUDGET)]
    max_enum: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (reserved for grid parallelism; single runs are serial).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// One of: a0, a1a, a1b, a1c, a2, istat-full, istat-heldout,
    /// istat-diversity, istat-poolsize.
    #[arg(long)]
    experiment: String,
    /// Pool-size grid override (repeatable).
    #[arg(long)]
    pool_size: Vec<usize>,
    /// Sweep grid override (repeatable).
    #[arg(long)]
    sweeps: Vec<usize>,
    /// Learning-rate override.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = popsynth::DEFAULT_ENUM_BUDGET)]
    max_enum: f64,
    /// Worker threads for independent grid cells.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Use the full-size grids instead of the desk-scale defaults.
    #[arg(long, default_value_t = false)]
    full_scale: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// 2 invalid input, 3 enumeration infeasible, 4 solver divergence.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<popsynth::Error>() {
        Some(popsynth::Error::EnumerationInfeasible { .. }) => 3,
        Some(popsynth::Error::ExactDivergence { .. }) => 4,
        Some(popsynth::Error::PcdDivergence { .. }) => 4,
        _ => 2,
    }
}

/// Default output root: --out, else $POPSYNTH_OUT, else ./runs.
fn out_root(flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| {
        std::env::var_os("POPSYNTH_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
    })
}

/// Fresh run directory named by (label, timestamp, seed); never reuses an
/// existing directory.
fn run_dir(root: &Path, label: &str, seed: u64) -> Result<PathBuf> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after epoch")
        .as_secs();
    let mut dir = root.join(format!("{label}-{stamp}-{seed}"));
    let mut suffix = 0u32;
    while dir.exists() {
        suffix += 1;
        dir = root.join(format!("{label}-{stamp}-{seed}-{suffix}"));
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn instance_summary(cs: &ConstraintSet64) -> String {
    let log10 = cs.schema().log_space_size() / std::f64::consts::LN_10;
    let arities = cs
        .arity_histogram()
        .iter()
        .map(|(a, c)| format!("{c} arity-{a}"))
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "K={}, log10|X|≈{:.2}, tables={}, m={} ({})",
        cs.schema().attr_count(),
        log10,
        cs.groups().len(),
        cs.len(),
        arities
    )
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let dir = run_dir(&out_root(args.out), &format!("generate-{}", args.kind), args.seed)?;
    match args.kind.as_str() {
        "synistat" => {
            let spec = synistat_spec();
            let cs = synistat_targets::<f64>(&spec);
            let (train, held) = synistat_split(&cs)?;
            write_file(&dir.join("constraints.txt"), &io::write_constraint_set(&cs)?)?;
            write_file(&dir.join("train.txt"), &io::write_constraint_set(&train)?)?;
            write_file(&dir.join("heldout.txt"), &io::write_constraint_set(&held)?)?;
            // the network definition is the ground truth
            write_file(
                &dir.join("ground_truth.txt"),
                include_str!("../../core/data/synistat_cpts.txt"),
            )?;
            println!("{}", instance_summary(&cs));
            let employment = cs.schema().attr_index("employment").expect("schema attr");
            let (sources, averaged) =
                popsynth::generators::synistat::implied_marginal_sources(&spec, employment);
            println!("implied employment marginal by source (diagnostic):");
            for (label, marginal) in sources {
                println!(
                    "  {label}: [{}]",
                    marginal.iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>().join(", ")
                );
            }
            println!(
                "  averaged+renormalized: [{}]",
                averaged.iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>().join(", ")
            );
            println!("largest |printed - implied| per constraint-only table:");
            for (label, delta) in popsynth::generators::synistat::binary_table_deltas(&spec) {
                println!("  {label}: {delta:.4}");
            }
        }
        "wu" => {
            let spec = match (&args.spec, &args.preset) {
                (Some(path), None) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    match parse_instance_spec(&text, args.max_enum)? {
                        InstanceSpec::Wu(spec) => spec,
                        InstanceSpec::Planted(_) => bail!("spec file has kind=planted, not wu"),
                    }
                }
                (None, Some(preset)) => match preset.as_str() {
                    "a0" => WuInstanceSpec::a0(args.seed),
                    "a1a" => WuInstanceSpec::a1a(args.seed),
                    other => bail!("unknown wu preset '{other}' (expected a0 or a1a)"),
                },
                _ => bail!("wu needs exactly one of --spec or --preset"),
            };
            let (cs, sample) = wu_generate::<f64>(&spec);
            write_file(&dir.join("constraints.txt"), &io::write_constraint_set(&cs)?)?;
            write_file(
                &dir.join("ground_truth_sample.txt"),
                &io::write_population::<f64>(cs.schema(), sample.view(), None)?,
            )?;
            println!("{}", instance_summary(&cs));
        }
        "planted" => {
            let Some(path) = &args.spec else {
                bail!("planted needs --spec");
            };
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let spec = match parse_instance_spec(&text, args.max_enum)? {
                InstanceSpec::Planted(spec) => spec,
                InstanceSpec::Wu(_) => bail!("spec file has kind=wu, not planted"),
            };
            let (cs, lambda_star) = planted_family_generate::<f64>(&spec)?;
            write_file(&dir.join("constraints.txt"), &io::write_constraint_set(&cs)?)?;
            write_file(
                &dir.join("ground_truth_lambda.txt"),
                &io::write_lambda(&cs, &lambda_star)?,
            )?;
            println!("{}", instance_summary(&cs));
            let realized_min = lambda_star.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let realized_max = lambda_star.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            println!("lambda* realized range: [{realized_min:.4}, {realized_max:.4}]");
        }
        other => bail!("unknown kind '{other}' (expected synistat, wu or planted)"),
    }
    Ok(())
}

fn load_constraints(path: &Path) -> Result<ConstraintSet64> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(io::parse_constraint_set::<f64>(&text)?)
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let cs = load_constraints(&args.instance)?;
    let truth_lambda = match &args.truth {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Some(io::parse_lambda(&cs, &text)?)
        }
        None => None,
    };
    let heldout = match &args.heldout {
        Some(path) => Some(load_constraints(path)?),
        None => None,
    };
    let dir = run_dir(&out_root(args.out), &format!("solve-{}", args.method), args.seed)?;
    let instance = args
        .instance
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "instance".to_string());

    let mut record = ResultRecord {
        experiment: "solve".into(),
        instance,
        method: args.method.clone(),
        status: "ok".into(),
        seed: args.seed,
        log10_space: Some(cs.schema().log_space_size() / std::f64::consts::LN_10),
        ..Default::default()
    };
    let targets = cs.targets();

    match args.method.as_str() {
        "exact" => {
            let opts = ExactOptions {
                budget: args.max_enum,
                max_iters: args.max_iters,
                ..Default::default()
            };
            let (lambda, report) = solve_exact(&cs, &targets, &opts)?;
            record.iterations = Some(report.iterations);
            record.stop_reason = if report.converged { "converged" } else { "max-iterations" }.into();
            record.wall_seconds = Some(report.wall_seconds);
            record.mre = Some(report.final_mre);
            if let Some(star) = &truth_lambda {
                record.delta_lambda = Some(lambda.relative_distance(star));
                let truth = EnumeratedModel::new(&cs, star, args.max_enum)?;
                record.kl = Some(kl_to_truth(&truth, &lambda, args.max_enum)?);
            }
            write_file(&dir.join("trace.csv"), &experiments::exact_trace_csv(&report))?;
            write_file(&dir.join("lambda.txt"), &io::write_lambda(&cs, &lambda)?)?;
        }
        "pcd" => {
            let config = PcdConfig {
                pool_size: args.pool_size,
                sweeps_per_step: args.sweeps,
                learning_rate: args.lr,
                max_iters: args.max_iters,
                seed: args.seed,
                ..Default::default()
            };
            record.n = Some(args.pool_size);
            record.sweeps = Some(args.sweeps);
            record.lr = Some(args.lr);
            let fit = fit_pcd(&cs, &targets, config)?;
            record.iterations = Some(fit.iterations);
            record.stop_reason = match fit.trace.stop_reason {
                StopReason::StoppingRule => "stopping-rule",
                StopReason::MaxIterations => "max-iterations",
            }
            .into();
            record.wall_seconds = Some(fit.wall_seconds);
            record.mre = fit.trace.mre.last().copied();
            let div = diversity(fit.pool.view(), None::<&[f64]>)?;
            record.neff = Some(div.n_eff);
            record.neff_ratio = Some(div.n_eff_ratio);
            record.entropy = Some(div.entropy);
            record.unique_profiles = Some(div.unique_profiles);
            record.gini = Some(div.gini);
            if let Some(star) = &truth_lambda {
                record.delta_lambda = Some(fit.lambda.relative_distance(star));
                match EnumeratedModel::new(&cs, star, args.max_enum) {
                    Ok(truth) => record.kl = kl_to_truth(&truth, &fit.lambda, args.max_enum).ok(),
                    Err(popsynth::Error::EnumerationInfeasible { .. }) => {
                        println!("KL unavailable: tuple space above the enumeration budget");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if let Some(held) = &heldout {
                let per_table = heldout_mre(fit.pool.view(), None::<&[f64]>, held)?;
                record.heldout_tables =
                    per_table.into_iter().map(|(k, v)| (k, v.value)).collect();
            }
            write_file(&dir.join("trace.csv"), &experiments::pcd_trace_csv(&fit))?;
            write_file(&dir.join("lambda.txt"), &io::write_lambda(&cs, &fit.lambda)?)?;
            let pool_view = fit.pool.view();
            write_file(
                &dir.join("pool.txt"),
                &io::write_population::<f64>(cs.schema(), pool_view, None)?,
            )?;
        }
        "raking" => {
            let started = std::time::Instant::now();
            let sample = draw_initial_sample::<f64>(cs.schema(), args.pool_size, args.seed)?;
            let rake_config = RakeConfig {
                max_cycles: args.max_iters,
                ..Default::default()
            };
            let (raked, report) = rake(&sample, &cs, &targets, &rake_config)?;
            record.n = Some(args.pool_size);
            record.iterations = Some(report.cycles);
            record.stop_reason = if report.diverged {
                "diverged"
            } else if report.converged {
                "converged"
            } else {
                "cycle-budget"
            }
            .into();
            record.wall_seconds = Some(started.elapsed().as_secs_f64());
            record.mre = Some(report.final_mre);
            let div = diversity(raked.view(), Some(raked.weights()))?;
            record.neff = Some(div.n_eff);
            record.neff_ratio = Some(div.n_eff_ratio);
            record.entropy = Some(div.entropy);
            record.unique_profiles = Some(div.unique_profiles);
            record.gini = Some(div.gini);
            if let Some(held) = &heldout {
                let per_table = heldout_mre(raked.view(), Some(raked.weights()), held)?;
                record.heldout_tables =
                    per_table.into_iter().map(|(k, v)| (k, v.value)).collect();
            }
            if !report.infeasible_constraints.is_empty() {
                println!(
                    "warning: {} constraints had no weighted support",
                    report.infeasible_constraints.len()
                );
            }
            write_file(
                &dir.join("weighted_sample.txt"),
                &io::write_weighted_sample(cs.schema(), &raked)?,
            )?;
        }
        other => bail!("unknown method '{other}' (expected exact, pcd or raking)"),
    }

    let preamble = vec![
        ("method".to_string(), args.method.clone()),
        ("instance".to_string(), args.instance.display().to_string()),
        ("seed".to_string(), args.seed.to_string()),
        ("pool_size".to_string(), args.pool_size.to_string()),
        ("sweeps".to_string(), args.sweeps.to_string()),
        ("lr".to_string(), args.lr.to_string()),
        ("max_enum".to_string(), format!("{:.3e}", args.max_enum)),
        ("threads".to_string(), args.threads.to_string()),
    ];
    write_file(
        &dir.join("record.csv"),
        &write_result_csv(&preamble, &[record.clone()]),
    )?;
    println!(
        "{} finished: status={} mre={:?} wall={:?}",
        args.method, record.status, record.mre, record.wall_seconds
    );
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    if !experiments::EXPERIMENT_IDS.contains(&args.experiment.as_str()) {
        bail!(
            "unknown experiment '{}' (expected one of {:?})",
            args.experiment,
            experiments::EXPERIMENT_IDS
        );
    }
    let dir = run_dir(&out_root(args.out), &args.experiment, args.seed)?;
    let ctx = ExperimentCtx {
        out_dir: dir,
        seed: args.seed,
        pool_sizes: if args.pool_size.is_empty() {
            None
        } else {
            Some(args.pool_size)
        },
        sweeps: if args.sweeps.is_empty() {
            None
        } else {
            Some(args.sweeps)
        },
        lr: args.lr,
        max_enum: args.max_enum,
        threads: args.threads,
        full_scale: args.full_scale,
    };
    run_experiment(&args.experiment, &ctx)
}
