use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lll_core::environments::{generate_domain, Domain, GenerationConfig, TaskSpec};
use lll_harness::config::{Algo, ExperimentConfig};
use lll_harness::error::{HarnessError, HarnessResult};
use lll_harness::experiments::{self as exp, Predictor};
use lll_harness::io::{read_json, read_tasks, write_csv, write_json, write_tasks, ModelFile};

#[derive(Parser)]
#[command(name = "lll", version, about = "Lifelong learning with coupled dictionaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a task file.
    GenTasks {
        #[arg(long)]
        domain: Domain,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// JSON object of parameter name to [low, high].
        #[arg(long)]
        ranges: Option<PathBuf>,
    },
    /// Train a model on a task file.
    Train {
        #[arg(long)]
        algo: Algo,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        /// Fail when a solver stops at its iteration cap.
        #[arg(long)]
        strict: bool,
        /// Experiment config JSON; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Predict models for held-out tasks from their descriptors.
    Zeroshot {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Policy-gradient iterations started from the prediction.
        #[arg(long)]
        warmstart: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Zero-shot performance for every subset of descriptor groups.
    AblateDescriptors {
        #[arg(long)]
        domain: Domain,
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-encounter dictionary update timings.
    BenchRuntime {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        algo: Algo,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Hyperparameter grid evaluated on held-out tasks.
    GridSearch {
        #[arg(long)]
        domain: Domain,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "2,4,6,8")]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1")]
        mus: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        heldout: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>, domain: Domain) -> HarnessResult<ExperimentConfig> {
    let cfg = match path {
        Some(p) => {
            let cfg: ExperimentConfig = read_json(p)?;
            if cfg.domain != domain {
                return Err(HarnessError::Config(format!(
                    "config is for domain {} but the tasks are {domain}",
                    cfg.domain
                )));
            }
            cfg
        }
        None => ExperimentConfig::for_domain(domain),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn task_domain(tasks: &[TaskSpec], fallback: Option<Domain>) -> HarnessResult<Domain> {
    let domain = match tasks.first() {
        Some(t) => t.domain,
        None => fallback.ok_or_else(|| HarnessError::Config("task file is empty".into()))?,
    };
    if tasks.iter().any(|t| t.domain != domain) {
        return Err(HarnessError::Config("task file mixes domains".into()));
    }
    Ok(domain)
}

/// `<stem>.config.json` next to an output file.
fn config_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.config.json"))
}

fn gen_tasks(domain: Domain, count: usize, seed: u64, out: &Path, ranges: Option<&Path>) -> HarnessResult<()> {
    let mut generation = GenerationConfig::default();
    if let Some(p) = ranges {
        let r: BTreeMap<String, (f64, f64)> = read_json(p)?;
        generation.ranges = r;
    }
    generation.resolved_ranges(domain)?;
    let tasks = generate_domain(domain, count, seed, &generation)?;
    write_tasks(out, &tasks)?;
    println!("{}", tasks.len());
    Ok(())
}

fn run(cli: Cli) -> HarnessResult<()> {
    let pool = exp::thread_pool();
    match cli.command {
        Command::GenTasks { domain, count, seed, out, ranges } => gen_tasks(domain, count, seed, &out, ranges.as_deref()),
        Command::Train { algo, tasks, k, mu, lambda, rho, seed, out, metrics, strict, config } => {
            let tasks = read_tasks(&tasks)?;
            let domain = task_domain(&tasks, None)?;
            let mut cfg = load_config(config.as_deref(), domain)?;
            cfg.algo = algo;
            cfg.n_tasks = tasks.len();
            cfg.strict |= strict;
            if let Some(k) = k {
                cfg.hyper.k = k;
            }
            if let Some(mu) = mu {
                cfg.hyper.mu = mu;
            }
            if let Some(lambda) = lambda {
                cfg.hyper.lambda = lambda;
            }
            if rho.is_some() {
                cfg.hyper.rho = rho;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.validate()?;
            let trained = pool.install(|| exp::train(&tasks, &cfg))?;
            if trained.unconverged > 0 {
                eprintln!("warning: {} solver calls stopped at their iteration cap", trained.unconverged);
            }
            write_json(&out, &trained.to_model_file(false))?;
            write_csv(&metrics, &exp::METRIC_HEADER, &trained.metrics)?;
            write_json(&config_path(&out), &cfg)?;
            let values = exp::lifelong_values(&trained);
            println!(
                "{} {} mean {:.4} over {} tasks, {} presentations",
                algo,
                exp::metric_name(domain),
                lll_harness::stats::mean(&values),
                values.len(),
                trained.order.len()
            );
            Ok(())
        }
        Command::Zeroshot { model, tasks, out, warmstart, config } => {
            let model: ModelFile = read_json(&model)?;
            let tasks = read_tasks(&tasks)?;
            let domain = task_domain(&tasks, Some(model.domain))?;
            if domain != model.domain {
                return Err(HarnessError::Config(format!(
                    "model is for domain {} but the tasks are {domain}",
                    model.domain
                )));
            }
            let mut cfg = load_config(config.as_deref(), domain)?;
            cfg.hyper = model.hyper;
            cfg.n_heldout = tasks.len();
            let predictor = Predictor::from_model(&model)?;
            let results = pool.install(|| exp::evaluate_heldout(&predictor, &tasks, &cfg, warmstart))?;
            let rows: Vec<_> = results.iter().flat_map(|r| r.rows(domain)).collect();
            write_csv(&out, &exp::ZEROSHOT_HEADER, &rows)?;
            write_json(&config_path(&out), &cfg)?;
            let values: Vec<f64> = results.iter().map(|r| r.zero_shot).collect();
            if !values.is_empty() {
                println!(
                    "zero-shot {} mean {:.4} over {} tasks",
                    exp::metric_name(domain),
                    lll_harness::stats::mean(&values),
                    values.len()
                );
            }
            Ok(())
        }
        Command::AblateDescriptors { domain, model_config, out } => {
            let cfg = load_config(model_config.as_deref(), domain)?;
            let train = generate_domain(domain, cfg.n_tasks, cfg.seed, &cfg.generation)?;
            let heldout = generate_domain(domain, cfg.n_heldout, cfg.seed.wrapping_add(1), &cfg.generation)?;
            let rows = pool.install(|| exp::ablate_descriptors(&train, &heldout, &cfg))?;
            write_csv(&out, &["subset", "groups", "metric", "mean", "stderr"], &rows)?;
            write_json(&config_path(&out), &cfg)?;
            for r in &rows {
                println!("{:>4} {} {:.4} ± {:.4}", r.subset, r.metric, r.mean, r.stderr);
            }
            Ok(())
        }
        Command::BenchRuntime { tasks, algo, out, repeats, config } => {
            let tasks = read_tasks(&tasks)?;
            let domain = task_domain(&tasks, None)?;
            let mut cfg = load_config(config.as_deref(), domain)?;
            cfg.algo = algo;
            cfg.n_tasks = tasks.len();
            let rows = pool.install(|| exp::bench_runtime(&tasks, &cfg, repeats))?;
            write_csv(&out, &["encounter_index", "task_count", "seconds"], &rows)?;
            write_json(&config_path(&out), &cfg)?;
            let x: Vec<f64> = rows.iter().map(|r| r.task_count as f64).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
            if let Some(fit) = lll_harness::stats::linear_fit(&x, &y) {
                let (lo, hi) = fit.slope_interval();
                println!("slope {:.3e} s/task, 95% CI [{lo:.3e}, {hi:.3e}]", fit.slope);
            }
            Ok(())
        }
        Command::GridSearch { domain, config, ks, mus, lambdas, heldout, out } => {
            let mut cfg = load_config(config.as_deref(), domain)?;
            cfg.n_heldout = heldout;
            let train = generate_domain(domain, cfg.n_tasks, cfg.seed, &cfg.generation)?;
            let held = generate_domain(domain, heldout, cfg.seed.wrapping_add(1), &cfg.generation)?;
            let rows = pool.install(|| exp::grid_search(&train, &held, &cfg, &ks, &mus, &lambdas))?;
            write_csv(&out, &["k", "mu", "lambda", "lifelong", "zeroshot"], &rows)?;
            write_json(&config_path(&out), &cfg)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
