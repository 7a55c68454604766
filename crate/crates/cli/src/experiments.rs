//! Experiment recipes. Each experiment builds its instances, runs a grid of
//! solver cells (optionally across worker threads), and emits a results CSV
//! mirroring the corresponding report table, per-run traces, and plot data.
//! Cell failures are recorded in the status column; the grid continues.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use popsynth::exact::{solve_exact, EnumeratedModel, ExactOptions};
use popsynth::generators::planted::{planted_family_generate, PlantedFamilySpec};
use popsynth::generators::synistat::{synistat_spec, synistat_split, synistat_targets};
use popsynth::generators::wu::{wu_generate, WuInstanceSpec, WuPattern};
use popsynth::metrics::{diversity, heldout_mre, kl_to_truth};
use popsynth::pcd::{fit_pcd, PcdConfig, StopReason};
use popsynth::raking::{draw_initial_sample, rake, RakeConfig};
use popsynth::{AttributeSchema, ConstraintSet64, LambdaVector64};

use crate::records::{write_result_csv, ResultRecord};

pub const EXPERIMENT_IDS: [&str; 9] = [
    "a0",
    "a1a",
    "a1b",
    "a1c",
    "a2",
    "istat-full",
    "istat-heldout",
    "istat-diversity",
    "istat-poolsize",
];

#[derive(Debug, Clone)]
pub struct ExperimentCtx {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub pool_sizes: Option<Vec<usize>>,
    pub sweeps: Option<Vec<usize>>,
    pub lr: Option<f64>,
    pub max_enum: f64,
    pub threads: usize,
    pub full_scale: bool,
}

/// A file to be written under the run directory once the grid finishes.
type ExtraFile = (String, String);

/// One grid cell, boxed for the worker queue.
type Cell = Box<dyn FnOnce() -> CellOutput + Send>;

struct CellOutput {
    record: ResultRecord,
    files: Vec<ExtraFile>,
}

pub fn run_experiment(id: &str, ctx: &ExperimentCtx) -> Result<()> {
    let cells: Vec<Cell> = match id {
        "a0" => a0_cells(ctx),
        "a1a" => a1a_cells(ctx),
        "a1b" => a1b_cells(ctx),
        "a1c" => a1c_cells(ctx),
        "a2" => a2_cells(ctx),
        "istat-full" => istat_full_cells(ctx),
        "istat-heldout" => istat_heldout_cells(ctx),
        "istat-diversity" => istat_diversity_cells(ctx),
        "istat-poolsize" => istat_poolsize_cells(ctx),
        other => bail!("unknown experiment '{other}' (expected one of {EXPERIMENT_IDS:?})"),
    };

    let outputs = run_cells(cells, ctx.threads);
    let records: Vec<ResultRecord> = outputs.iter().map(|o| o.record.clone()).collect();
    let preamble = vec![
        ("experiment".to_string(), id.to_string()),
        ("seed".to_string(), ctx.seed.to_string()),
        ("full_scale".to_string(), ctx.full_scale.to_string()),
        ("max_enum".to_string(), format!("{:.3e}", ctx.max_enum)),
    ];
    std::fs::create_dir_all(&ctx.out_dir)?;
    write_new(
        &ctx.out_dir.join("results.csv"),
        &write_result_csv(&preamble, &records),
    )?;
    for output in outputs {
        for (name, contents) in output.files {
            let path = ctx.out_dir.join(&name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            write_new(&path, &contents)?;
        }
    }
    for r in &records {
        println!(
            "{:<14} {:<28} {:<7} {:<9} mre={} wall={}",
            r.experiment,
            r.instance,
            r.method,
            r.status,
            r.mre.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into()),
            r.wall_seconds
                .map(|w| format!("{w:.1}s"))
                .unwrap_or_else(|| "-".into()),
        );
    }
    println!("results written to {}", ctx.out_dir.display());
    Ok(())
}

/// Append-only discipline: refuse to overwrite existing outputs.
fn write_new(path: &Path, contents: &str) -> Result<()> {
    if path.exists() {
        bail!("refusing to overwrite {}", path.display());
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run_cells(cells: Vec<Cell>, threads: usize) -> Vec<CellOutput> {
    let count = cells.len();
    let threads = threads.max(1).min(count.max(1));
    if threads <= 1 {
        return cells.into_iter().map(|c| c()).collect();
    }
    let queue: Vec<Mutex<Option<Cell>>> =
        cells.into_iter().map(|c| Mutex::new(Some(c))).collect();
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<CellOutput>>> = (0..count).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= count {
                    break;
                }
                let cell = queue[i].lock().unwrap().take().expect("cell taken once");
                *results[i].lock().unwrap() = Some(cell());
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("all cells ran"))
        .collect()
}

fn base_record(experiment: &str, instance: &str, method: &str, seed: u64) -> ResultRecord {
    ResultRecord {
        experiment: experiment.to_string(),
        instance: instance.to_string(),
        method: method.to_string(),
        status: "ok".to_string(),
        seed,
        ..Default::default()
    }
}

pub fn pcd_trace_csv(fit: &popsynth::PcdFit64) -> String {
    let mut out = String::from("iteration,mre,wall_seconds,stopped\n");
    let last = fit.trace.mre.len();
    for (i, (mre, wall)) in fit
        .trace
        .mre
        .iter()
        .zip(&fit.trace.wall_seconds)
        .enumerate()
    {
        let stopped = i + 1 == last && fit.trace.stop_reason == StopReason::StoppingRule;
        out.push_str(&format!("{},{:.17e},{:.6},{}\n", i + 1, mre, wall, stopped));
    }
    out
}

pub fn exact_trace_csv(report: &popsynth::ExactReport<f64>) -> String {
    let mut out = String::from("iteration,objective,grad_inf_norm,mre,elapsed_seconds\n");
    for row in &report.trace {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.6}\n",
            row.iteration, row.objective, row.grad_inf_norm, row.mre, row.elapsed_seconds
        ));
    }
    out
}

fn lorenz_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("population_share,weight_share\n");
    for (x, y) in points {
        out.push_str(&format!("{x:.17e},{y:.17e}\n"));
    }
    out
}

fn stop_reason_str(reason: StopReason) -> &'static str {
    match reason {
        StopReason::StoppingRule => "stopping-rule",
        StopReason::MaxIterations => "max-iterations",
    }
}

/// Run one PCD cell and fill the shared metric fields.
#[allow(clippy::too_many_arguments)]
fn pcd_cell(
    experiment: &str,
    instance: &str,
    cell_name: &str,
    cs: &ConstraintSet64,
    config: PcdConfig<f64>,
    truth: Option<&EnumeratedModel<f64>>,
    lambda_star: Option<&LambdaVector64>,
    heldout: Option<&ConstraintSet64>,
    max_enum: f64,
    with_diversity: bool,
) -> CellOutput {
    let mut record = base_record(experiment, instance, "pcd", config.seed);
    record.n = Some(config.pool_size);
    record.sweeps = Some(config.sweeps_per_step);
    record.lr = Some(config.learning_rate);
    record.log10_space = Some(cs.schema().log_space_size() / std::f64::consts::LN_10);
    let targets = cs.targets();
    match fit_pcd(cs, &targets, config) {
        Ok(fit) => {
            record.iterations = Some(fit.iterations);
            record.stop_reason = stop_reason_str(fit.trace.stop_reason).to_string();
            record.wall_seconds = Some(fit.wall_seconds);
            record.mre = fit.trace.mre.last().copied();
            if let Some(truth) = truth {
                record.kl = kl_to_truth(truth, &fit.lambda, max_enum).ok();
            }
            if let Some(star) = lambda_star {
                record.delta_lambda = Some(fit.lambda.relative_distance(star));
            }
            if let Some(held) = heldout {
                if let Ok(per_table) = heldout_mre(fit.pool.view(), None::<&[f64]>, held) {
                    record.heldout_tables = per_table
                        .into_iter()
                        .map(|(k, v)| (k, v.value))
                        .collect();
                }
            }
            let mut files = vec![(
                format!("traces/{cell_name}.csv"),
                pcd_trace_csv(&fit),
            )];
            if with_diversity {
                if let Ok(div) = diversity(fit.pool.view(), None::<&[f64]>) {
                    record.neff = Some(div.n_eff);
                    record.neff_ratio = Some(div.n_eff_ratio);
                    record.entropy = Some(div.entropy);
                    record.unique_profiles = Some(div.unique_profiles);
                    record.gini = Some(div.gini);
                    files.push((
                        format!("plots/lorenz-{cell_name}.csv"),
                        lorenz_csv(&div.lorenz),
                    ));
                }
            }
            CellOutput { record, files }
        }
        Err(e) => {
            record.status = format!("error:{e}");
            CellOutput {
                record,
                files: Vec::new(),
            }
        }
    }
}

fn raking_cell(
    experiment: &str,
    instance: &str,
    cell_name: &str,
    cs: &ConstraintSet64,
    n: usize,
    seed: u64,
    heldout: Option<&ConstraintSet64>,
) -> CellOutput {
    let mut record = base_record(experiment, instance, "raking", seed);
    record.n = Some(n);
    record.log10_space = Some(cs.schema().log_space_size() / std::f64::consts::LN_10);
    let run = || -> popsynth::Result<CellOutput> {
        let started = std::time::Instant::now();
        let sample = draw_initial_sample::<f64>(cs.schema(), n, seed)?;
        let (raked, report) = rake(&sample, cs, &cs.targets(), &RakeConfig::default())?;
        let mut record = record.clone();
        record.iterations = Some(report.cycles);
        record.stop_reason = if report.diverged {
            "diverged".to_string()
        } else if report.converged {
            "converged".to_string()
        } else {
            "cycle-budget".to_string()
        };
        record.wall_seconds = Some(started.elapsed().as_secs_f64());
        record.mre = Some(report.final_mre);
        let div = diversity(raked.view(), Some(raked.weights()))?;
        record.neff = Some(div.n_eff);
        record.neff_ratio = Some(div.n_eff_ratio);
        record.entropy = Some(div.entropy);
        record.unique_profiles = Some(div.unique_profiles);
        record.gini = Some(div.gini);
        if let Some(held) = heldout {
            let per_table = heldout_mre(raked.view(), Some(raked.weights()), held)?;
            record.heldout_tables = per_table.into_iter().map(|(k, v)| (k, v.value)).collect();
        }
        let files = vec![(
            format!("plots/lorenz-{cell_name}.csv"),
            lorenz_csv(&div.lorenz),
        )];
        Ok(CellOutput { record, files })
    };
    match run() {
        Ok(out) => out,
        Err(e) => {
            record.status = format!("error:{e}");
            CellOutput {
                record,
                files: Vec::new(),
            }
        }
    }
}

fn exact_cell(
    experiment: &str,
    instance: &str,
    cell_name: &str,
    cs: &ConstraintSet64,
    lambda_star: Option<&LambdaVector64>,
    max_enum: f64,
) -> (CellOutput, Option<LambdaVector64>) {
    let mut record = base_record(experiment, instance, "exact", 0);
    record.log10_space = Some(cs.schema().log_space_size() / std::f64::consts::LN_10);
    let opts = ExactOptions {
        budget: max_enum,
        ..Default::default()
    };
    match solve_exact(cs, &cs.targets(), &opts) {
        Ok((lambda, report)) => {
            record.iterations = Some(report.iterations);
            record.stop_reason = if report.converged {
                "converged".to_string()
            } else {
                "max-iterations".to_string()
            };
            record.wall_seconds = Some(report.wall_seconds);
            record.mre = Some(report.final_mre);
            if let Some(star) = lambda_star {
                record.delta_lambda = Some(lambda.relative_distance(star));
                if let Ok(truth) = EnumeratedModel::new(cs, star, max_enum) {
                    record.kl = kl_to_truth(&truth, &lambda, max_enum).ok();
                }
            }
            let files = vec![(
                format!("traces/{cell_name}.csv"),
                exact_trace_csv(&report),
            )];
            (
                CellOutput { record, files },
                Some(lambda),
            )
        }
        Err(e) => {
            record.status = format!("error:{e}");
            (
                CellOutput {
                    record,
                    files: Vec::new(),
                },
                None,
            )
        }
    }
}

fn pool_grid(ctx: &ExperimentCtx, desk: &[usize], full: &[usize]) -> Vec<usize> {
    if let Some(sizes) = &ctx.pool_sizes {
        sizes.clone()
    } else if ctx.full_scale {
        full.to_vec()
    } else {
        desk.to_vec()
    }
}

fn sweep_grid(ctx: &ExperimentCtx, default: &[usize]) -> Vec<usize> {
    ctx.sweeps.clone().unwrap_or_else(|| default.to_vec())
}

// --- individual experiments -------------------------------------------------

fn a0_cells(ctx: &ExperimentCtx) -> Vec<Cell> {
    let spec = WuInstanceSpec::a0(ctx.seed.max(1));
    let (cs, _) = wu_generate::<f64>(&spec);
    let instance = format!("wu-a0(seed={})", spec.seed);
    let (exact_out, lambda_hat) = exact_cell("a0", &instance, "exact", &cs, None, ctx.max_enum);
    let truth = lambda_hat
        .as_ref()
        .and_then(|l| EnumeratedModel::new(&cs, l, ctx.max_enum).ok());

    let mut cells: Vec<Cell> = vec![Box::new(move || exact_out)];
    let pools = pool_grid(ctx, &[500, 2_000, 10_000], &[500, 2_000, 10_000, 100_000]);
    for n in pools {
        let cs = cs.clone();
        let truth = truth.clone();
        let lambda_hat = lambda_hat.clone();
        let instance = instance.clone();
        let max_enum = ctx.max_enum;
        let config = PcdConfig {
            pool_size: n,
            sweeps_per_step: sweep_grid(ctx, &[3])[0],
            learning_rate: ctx.lr.unwrap_or(0.05),
            seed: ctx.seed.wrapping_add(10),
            ..Default::default()
        };
        cells.push(Box::new(move || {
            pcd_cell(
                "a0",
                &instance,
                &format!("pcd-n{n}"),
                &cs,
                config,
                truth.as_ref(),
                lambda_hat.as_ref(),
                None,
                max_enum,
                false,
            )
        }));
    }
    cells
}

fn a1a_cells(ctx: &ExperimentCtx) -> Vec<Cell> {
    let spec = WuInstanceSpec::a1a(ctx.seed.max(1));
    let (cs, _) = wu_generate::<f64>(&spec);
    let instance = format!("wu-a1a(seed={})", spec.seed);
    let (exact_out, lambda_hat) = exact_cell("a1a", &instance, "exact", &cs, None, ctx.max_enum);
    let truth = lambda_hat
        .as_ref()
        .and_then(|l| EnumeratedModel::new(&cs, l, ctx.max_enum).ok());
    let mut cells: Vec<Cell> = vec![Box::new(move || exact_out)];
    let pools = pool_grid(ctx, &[1_000, 5_000, 20_000], &[1_000, 5_000, 20_000, 50_000]);
    let mut grid: Vec<(usize, usize)> = pools
        .iter()
        .map(|&n| (n, sweep_grid(ctx, &[5])[0]))
        .collect();
    if ctx.full_scale {
        grid.push((20_000, 10));
    }
    for (n, s) in grid {
        let cs = cs.clone();
        let truth = truth.clone();
        let lambda_hat = lambda_hat.clone();
        let instance = instance.clone();
        let max_enum = ctx.max_enum;
        let config = PcdConfig {
            pool_size: n,
            sweeps_per_step: s,
            learning_rate: ctx.lr.unwrap_or(0.05),
            seed: ctx.seed.wrapping_add(10),
            ..Default::default()
        };
        cells.push(Box::new(move || {
            pcd_cell(
                "a1a",
                &instance,
                &format!("pcd-n{n}-s{s}"),
                &cs,
                config,
                truth.as_ref(),
                lambda_hat.as_ref(),
                None,
                max_enum,
                false,
            )
        }));
    }
    cells
}

fn a1b_cells(ctx: &ExperimentCtx) -> Vec<Cell> {
    let spec = PlantedFamilySpec::new(&[3; 10], 30, (-1.1, 1.1), ctx.seed.max(1), ctx.max_enum)
        .expect("valid spec");
    let (cs, lambda_star) = match planted_family_generate::<f64>(&spec) {
        Ok(pair) => pair,
        Err(e) => {
            let mut record = base_record("a1b", "planted-k10", "pcd", ctx.seed);
            record.status = format!("error:{e}");
            let cell: Cell = Box::new(move || CellOutput {
                record,
                files: Vec::new(),
            });
            return vec![cell];
        }
    };
    let instance = format!("planted-k10-m30(seed={})", spec.seed);
    let truth = EnumeratedModel::new(&cs, &lambda_star, ctx.max_enum).ok();
    let (exact_out, _) = exact_cell(
        "a1b",
        &instance,
        "exact",
        &cs,
        Some(&lambda_star),
        ctx.max_enum,
    );
    let mut cells: Vec<Cell> = vec![Box::new(move || exact_out)];
    let pools = pool_grid(ctx, &[1_000, 5_000, 10_000], &[1_000, 5_000, 10_000, 50_000]);
    for n in pools {
        let cs = cs.clone();
        let truth = truth.clone();
        let star = lambda_star.clone();
        let instance = instance.clone();
        let max_enum = ctx.max_enum;
        let config = PcdConfig {
            pool_size: n,
            sweeps_per_step: sweep_grid(ctx, &[5])[0],
            learning_rate: ctx.lr.unwrap_or(0.01),
            threshold: 0.01,
            max_iters: 2_000,
            seed: ctx.seed.wrapping_add(10),
            ..Default::default()
        };
        cells.push(Box::new(move || {
            pcd_cell(
                "a1b",
                &instance,
                &format!("pcd-n{n}"),
                &cs,
                config,
                truth.as_ref(),
                Some(&star),
                None,
                max_enum,
                false,
            )
        }));
    }
    cells
}

/// Ternary K=8 companion instance for the sensitivity grid: 25 unary plus 48
/// ternary atoms over three planted triples.
fn a1c_ternary_instance(seed: u64) -> WuInstanceSpec {
    let schema = AttributeSchema::unnamed(&[4, 4, 2, 2, 4, 4, 3, 2]).unwrap();
    let mut rng = popsynth::rng::substream(&[seed, popsynth::rng::tag::WU_MARGINALS]);
    let base_marginals: Vec<Vec<f64>> = schema
        .domain_sizes()
        .iter()
        .map(|&d| {
            let raw: Vec<f64> = (0..d)
                .map(|_| 0.2 + 0.8 * popsynth::rng::next_unit_f64(&mut rng))
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect();
    let patterns = vec![
        WuPattern {
            attrs: vec![0, 2, 3],
            values: vec![0, 0, 0],
            frequency: 0.20,
        },
        WuPattern {
            attrs: vec![1, 6, 7],
            values: vec![1, 0, 0],
            frequency: 0.15,
        },
        WuPattern {
            attrs: vec![2, 3, 7],
            values: vec![1, 1, 1],
            frequency: 0.30,
        },
    ];
    WuInstanceSpec::new(schema, base_marginals, patterns, 200_000, seed).unwrap()
}

fn a1c_cells(ctx: &ExperimentCtx) -> Vec<Cell> {
    let seed = ctx.seed.max(1);
    let blocks = [
        ("binary", wu_generate::<f64>(&WuInstanceSpec::a1a(seed)).0),
        ("ternary", wu_generate::<f64>(&a1c_ternary_instance(seed)).0),
    ];
    let pools = pool_grid(ctx, &[1_000, 5_000], &[1_000, 5_000, 20_000, 50_000]);
    let sweeps = sweep_grid(ctx, &[1, 5]);
    let mut cells: Vec<Cell> = Vec::new();
    for (block, cs) in blocks {
        let instance = format!("wu-a1c-{block}(seed={seed})");
        let (exact_out, lambda_hat) = exact_cell(
            "a1c",
            &instance,
            &format!("exact-{block}"),
            &cs,
            None,
            ctx.max_enum,
        );
        let truth = lambda_hat
            .as_ref()
            .and_then(|l| EnumeratedModel::new(&cs, l, ctx.max_enum).ok());
        cells.push(Box::new(move || exact_out));
        for &n in &pools {
            for &s in &sweeps {
                let cs = cs.clone();
                let truth = truth.clone();
                let instance = instance.clone();
                let max_enum = ctx.max_enum;
                let config = PcdConfig {
                    pool_size: n,
                    sweeps_per_step: s,
                    learning_rate: ctx.lr.unwrap_or(0.05),
                    seed: ctx.seed.wrapping_add(10),
                    ..Default::default()
                };
                let block = block.to_string();
                cells.push(Box::new(move || {
                    pcd_cell(
                        "a1c",
                        &instance,
                        &format!("pcd-{block}-n{n}-s{s}"),
                        &cs,
                        config,
                        truth.as_ref(),
                        None,
                        None,
                        max_enum,
                        false,
                    )
                }));
            }
        }
    }
    cells
}

/// Ternary scaling instance for one K: all-ternary planted patterns.
pub fn a2_instance(k: usize, seed: u64) -> WuInstanceSpec {
    let domains: Vec<usize> = if k == 12 {
        // keeps |X| below 1e5 so the exact reference stays available
        let mut d = vec![3usize; 7];
        d.extend(vec![2usize; 5]);
        d
    } else {
        vec![3usize; k]
    };
    let patterns = (k / 4).max(3);
    WuInstanceSpec::random(&domains, patterns, 3, 100_000, seed).expect("valid scaling instance")
}

fn a2_cells(ctx: &ExperimentCtx) -> Vec<Cell> {
    let ks: Vec<usize> = if ctx.full_scale {
        vec![12, 20, 30, 40, 50]
    } else {
        vec![12, 20]
    };
    let n = pool_grid(ctx, &[20_000], &[100_000])[0];
    let mut cells: Vec<Cell> = Vec::new();
    for k in ks {
        let seed = ctx.seed.max(1).wrapping_add(k as u64);
        let spec = a2_instance(k, seed);
        let (cs, _) = wu_generate::<f64>(&spec);
        let instance = format!("wu-a2-k{k}(seed={seed})");
        let enumerable = cs.schema().log_space_size() <= ctx.max_enum.ln();
        if enumerable {
            let (exact_out, _) =
                exact_cell("a2", &instance, &format!("exact-k{k}"), &cs, None, ctx.max_enum);
            cells.push(Box::new(move || exact_out));
        }
        let config = PcdConfig {
            pool_size: n,
            sweeps_per_step: sweep_grid(ctx, &[5])[0],
            learning_rate: ctx.lr.unwrap_or(if k >= 20 { 0.005 } else { 0.01 }),
            window: 100,
            threshold: 0.01,
            max_iters: 1_500,
            seed: ctx.seed.wrapping_add(10),
            ..Default::default()
        };
        {
            let cs = cs.clone();
            let instance = instance.clone();
            let max_enum = ctx.max_enum;
            cells.push(Box::new(move || {
                pcd_cell(
                    "a2",
                    &instance,
                    &format!("pcd-k{k}"),
                    &cs,
                    config,
                    None,
                    None,
                    None,
                    max_enum,
                    true,
                )
            }));
        }
        let rake_seed = ctx.seed.wrapping_add(20);
        cells.push(Box::new(move || {
            raking_cell("a2", &instance, &format!("raking-k{k}"), &cs, n, rake_seed, None)
        }));
    }
    cells
}

fn istat_full_cells(ctx: &ExperimentCtx) -> Vec<Cell> {
    let cs = synistat_targets::<f64>(&synistat_spec());
    let n = pool_grid(ctx, &[25_000], &[100_000])[0];
    let config = PcdConfig {
        pool_size: n,
        sweeps_per_step: sweep_grid(ctx, &[5])[0],
        learning_rate: ctx.lr.unwrap_or(0.01),
        max_iters: 1_000,
        seed: ctx.seed,
        ..Default::default()
    };
    let max_enum = ctx.max_enum;
    vec![Box::new(move || {
        pcd_cell(
            "istat-full",
            "synistat-31",
            "pcd",
            &cs,
            config,
            None,
            None,
            None,
            max_enum,
            true,
        )
    })]
}

fn istat_heldout_cells(ctx: &ExperimentCtx) -> Vec<Cell> {
    let cs = synistat_targets::<f64>(&synistat_spec());
    let (train, held) = synistat_split(&cs).expect("ternary groups present");
    let n = pool_grid(ctx, &[20_000], &[100_000])[0];
    let config = PcdConfig {
        pool_size: n,
        sweeps_per_step: sweep_grid(ctx, &[5])[0],
        learning_rate: ctx.lr.unwrap_or(0.01),
        max_iters: 800,
        seed: ctx.seed,
        ..Default::default()
    };
    let max_enum = ctx.max_enum;
    let rake_seed = ctx.seed.wrapping_add(20);
    let (train2, held2) = (train.clone(), held.clone());
    vec![
        Box::new(move || {
            pcd_cell(
                "istat-heldout",
                "synistat-28",
                "pcd",
                &train,
                config,
                None,
                None,
                Some(&held),
                max_enum,
                false,
            )
        }),
        Box::new(move || {
            raking_cell(
                "istat-heldout",
                "synistat-28",
                "raking",
                &train2,
                n,
                rake_seed,
                Some(&held2),
            )
        }),
    ]
}

fn istat_diversity_cells(ctx: &ExperimentCtx) -> Vec<Cell> {
    let cs = synistat_targets::<f64>(&synistat_spec());
    let n = pool_grid(ctx, &[20_000], &[100_000])[0];
    let config = PcdConfig {
        pool_size: n,
        sweeps_per_step: sweep_grid(ctx, &[5])[0],
        learning_rate: ctx.lr.unwrap_or(0.01),
        max_iters: 1_000,
        seed: ctx.seed,
        ..Default::default()
    };
    let cs2 = cs.clone();
    let max_enum = ctx.max_enum;
    let rake_seed = ctx.seed.wrapping_add(20);
    vec![
        Box::new(move || {
            pcd_cell(
                "istat-diversity",
                "synistat-31",
                "pcd",
                &cs,
                config,
                None,
                None,
                None,
                max_enum,
                true,
            )
        }),
        Box::new(move || {
            raking_cell(
                "istat-diversity",
                "synistat-31",
                "raking",
                &cs2,
                n,
                rake_seed,
                None,
            )
        }),
    ]
}

fn istat_poolsize_cells(ctx: &ExperimentCtx) -> Vec<Cell> {
    let cs = synistat_targets::<f64>(&synistat_spec());
    let pools = pool_grid(
        ctx,
        &[10_000, 25_000],
        &[10_000, 25_000, 50_000, 100_000, 200_000],
    );
    let mut cells: Vec<Cell> = Vec::new();
    for n in pools {
        let cs = cs.clone();
        let max_enum = ctx.max_enum;
        let config = PcdConfig {
            pool_size: n,
            sweeps_per_step: sweep_grid(ctx, &[5])[0],
            learning_rate: ctx.lr.unwrap_or(0.01),
            max_iters: 1_000,
            seed: ctx.seed,
            ..Default::default()
        };
        cells.push(Box::new(move || {
            pcd_cell(
                "istat-poolsize",
                "synistat-31",
                &format!("pcd-n{n}"),
                &cs,
                config,
                None,
                None,
                None,
                max_enum,
                false,
            )
        }));
    }
    let n = *pool_grid(ctx, &[25_000], &[100_000]).last().unwrap();
    let cs2 = cs.clone();
    let rake_seed = ctx.seed.wrapping_add(20);
    cells.push(Box::new(move || {
        raking_cell(
            "istat-poolsize",
            "synistat-31",
            "raking",
            &cs2,
            n,
            rake_seed,
            None,
        )
    }));
    cells
}
