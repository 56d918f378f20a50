use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use cve_gnn::config::{repro_settings, ExperimentSpec, Settings};
use cve_gnn::diagnostics::{
    bias_at_snapshot, gradient_check, rate_probe, save_probe_csv, write_probe_csv, ProbeRow, StepRule,
};
use cve_gnn::repro::run_repro;
use cve_gnn::sbm::{gen_sbm, SbmParams};
use cve_gnn::trainer::{evaluate_splits, train};
use cve_gnn::{
    build_normalized_propagation, checkpoint, init_threads, load_dataset, write_dataset, Dataset, Error, OptimizerKind,
    Result,
};

#[derive(Parser)]
#[command(name = "cve-gnn", version, about = "Train GCNs with sampled neighbors and control-variate gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write per-epoch metrics.
    Train(ExperimentArgs),
    /// Report train/val/test accuracy of a checkpoint.
    Evaluate {
        #[arg(long)]
        dataset_dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Estimate the gradient bias at trained snapshots for lr and lr / divisor.
    ProbeBias {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Optimizer steps before the snapshot.
        #[arg(long, default_value_t = 200)]
        snapshot_iters: usize,
        /// Monte-Carlo draws per estimate.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 4.0)]
        alpha_divisor: f64,
        #[arg(long, default_value_t = 1)]
        probe_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean exact squared gradient norm over horizons with lr = eta / sqrt(T).
    ProbeRate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        eta: f64,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
        /// Upper bound on exact gradient evaluations per horizon.
        #[arg(long, default_value_t = 50)]
        max_evals: usize,
        /// Use a constant learning rate (--lr) instead of eta / sqrt(T).
        #[arg(long)]
        constant_lr: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare backprop with central finite differences on one sampled plan.
    Gradcheck {
        /// Defaults to a generated 8-node graph.
        #[arg(long)]
        dataset_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        hidden_dim: usize,
        #[arg(long, default_value_t = 2)]
        neighbors: usize,
        #[arg(long, default_value_t = 3)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail above this relative error.
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
    /// Write a stochastic block model dataset.
    GenSbm {
        #[arg(long, default_value_t = 200)]
        nodes: usize,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long, default_value_t = 0.2)]
        p_in: f64,
        #[arg(long, default_value_t = 0.01)]
        p_out: f64,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a shipped reproduction config.
    Repro {
        dataset: String,
        optimizer: String,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// Key-value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    adam_bias_correction: Option<bool>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// without-replacement | with-replacement-dedup
    #[arg(long)]
    sampling_mode: Option<String>,
    /// pool | neighbors
    #[arg(long)]
    scale_rule: Option<String>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    /// last | uniform-random
    #[arg(long)]
    output_iterate: Option<String>,
    /// activated | linear
    #[arg(long)]
    cache_init: Option<String>,
    /// One thread and no wall-clock column, for byte-identical metrics.
    #[arg(long)]
    deterministic: bool,
}

impl ExperimentArgs {
    fn apply(&self, s: &mut Settings) -> Result<()> {
        let mut set = |k: &str, v: Option<String>| match v {
            Some(v) => s.set_flag(k, v),
            None => Ok(()),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        set("dataset-dir", path(&self.dataset_dir))?;
        set("optimizer", self.optimizer.clone())?;
        set("lr", self.lr.map(|v| v.to_string()))?;
        set("beta1", self.beta1.map(|v| v.to_string()))?;
        set("beta2", self.beta2.map(|v| v.to_string()))?;
        set("eps", self.eps.map(|v| v.to_string()))?;
        set("weight-decay", self.weight_decay.map(|v| v.to_string()))?;
        set("adam-bias-correction", self.adam_bias_correction.map(|v| v.to_string()))?;
        set("dropout", self.dropout.map(|v| v.to_string()))?;
        set("hidden-dim", self.hidden_dim.map(|v| v.to_string()))?;
        set("layers", self.layers.map(|v| v.to_string()))?;
        set("neighbors", self.neighbors.map(|v| v.to_string()))?;
        set("batch-size", self.batch_size.map(|v| v.to_string()))?;
        set("epochs", self.epochs.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("runs", self.runs.map(|v| v.to_string()))?;
        set("sampling-mode", self.sampling_mode.clone())?;
        set("scale-rule", self.scale_rule.clone())?;
        set("eval-every", self.eval_every.map(|v| v.to_string()))?;
        set("metrics-out", path(&self.metrics_out))?;
        set("checkpoint-out", path(&self.checkpoint_out))?;
        set("output-iterate", self.output_iterate.clone())?;
        set("cache-init", self.cache_init.clone())?;
        if self.deterministic {
            set("deterministic", Some("true".into()))?;
        }
        Ok(())
    }

    fn spec(&self, base: Option<Settings>) -> Result<ExperimentSpec> {
        let mut s = match (&self.config, base) {
            (Some(path), _) => Settings::load(path)?,
            (None, Some(b)) => b,
            (None, None) => Settings::new(),
        };
        self.apply(&mut s)?;
        let spec = ExperimentSpec::from_settings(&s)?;
        init_threads(if spec.train.record_wall_time { None } else { Some(1) });
        Ok(spec)
    }
}

fn dataset_dir(spec: &ExperimentSpec) -> Result<PathBuf> {
    if let Some(d) = &spec.dataset_dir {
        return Ok(d.clone());
    }
    match &spec.dataset {
        Some(name) => {
            Ok(std::env::var_os("CVE_GNN_DATA").map(PathBuf::from).unwrap_or_else(|| "data".into()).join(name))
        }
        None => Err(Error::Usage("--dataset-dir is required".into())),
    }
}

fn load(spec: &ExperimentSpec) -> Result<Dataset> {
    let dir = dataset_dir(spec)?;
    let data = load_dataset(&dir)?;
    eprintln!(
        "loaded {}: {} nodes, {} edges, {} features, {} classes, split {}/{}/{}",
        dir.display(),
        data.num_nodes(),
        data.graph.num_edges(),
        data.num_features(),
        data.num_classes(),
        data.split.train.len(),
        data.split.val.len(),
        data.split.test.len()
    );
    Ok(data)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

/// `metrics.csv` → `metrics-run2.csv`.
fn run_path(path: &Path, run: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-run{run}.{}", ext.to_string_lossy()),
        None => format!("{stem}-run{run}"),
    };
    path.with_file_name(name)
}

fn run_experiment(spec: &ExperimentSpec) -> Result<()> {
    let data = load(spec)?;
    if spec.runs == 1 {
        let (params, metrics) = train(&data, &spec.train)?;
        if let Some(path) = &spec.metrics_out {
            ensure_parent(path)?;
            metrics.save_csv(path)?;
        }
        if let Some(path) = &spec.checkpoint_out {
            ensure_parent(path)?;
            checkpoint::save(path, &params)?;
        }
        if let Some(last) = metrics.last() {
            println!(
                "epoch {} iter {}: train {:.4} val {:.4} test {:.4}; max test {:.4}",
                last.epoch,
                last.iter,
                last.train_acc,
                last.val_acc,
                last.test_acc,
                metrics.max_test_acc()
            );
        }
        return Ok(());
    }
    if spec.checkpoint_out.is_some() {
        return Err(Error::Usage("--checkpoint-out needs --runs 1".into()));
    }
    let summary = run_repro(&data, &spec.train, spec.runs)?;
    if let Some(path) = &spec.metrics_out {
        ensure_parent(path)?;
        for (r, m) in summary.runs.iter().enumerate() {
            m.save_csv(&run_path(path, r))?;
        }
    }
    for (seed, best) in summary.seeds.iter().zip(summary.per_run_max()) {
        println!("seed {seed}: max test accuracy {:.2}%", 100.0 * best);
    }
    println!("mean of per-run max test accuracy: {:.2}%", 100.0 * summary.mean_of_max());
    println!("max of mean test-accuracy curve:   {:.2}%", 100.0 * summary.max_of_mean());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(exp) => run_experiment(&exp.spec(None)?),
        Command::Repro { dataset, optimizer, exp } => {
            let kind: OptimizerKind = optimizer.parse()?;
            let spec = exp.spec(Some(repro_settings(&dataset, kind)?))?;
            if spec.large_scale {
                eprintln!("note: {dataset} is a large-scale configuration");
            }
            run_experiment(&spec)
        }
        Command::Evaluate { dataset_dir, checkpoint: path } => {
            let data = load_dataset(&dataset_dir)?;
            let params = checkpoint::load(&path)?;
            let p = build_normalized_propagation(&data.graph);
            let [tr, va, te] = evaluate_splits(&p, &data, &params)?;
            println!("train {tr:.4} val {va:.4} test {te:.4}");
            Ok(())
        }
        Command::ProbeBias { exp, snapshot_iters, samples, alpha_divisor, probe_seed, out } => {
            let spec = exp.spec(None)?;
            let data = load(&spec)?;
            if !(alpha_divisor > 1.0) {
                return Err(Error::Config("--alpha-divisor must exceed 1".into()));
            }
            let mut rows = Vec::new();
            for lr in [spec.train.optimizer.lr, spec.train.optimizer.lr / alpha_divisor] {
                let mut config = spec.train.clone();
                config.optimizer.lr = lr;
                let est = bias_at_snapshot(&data, &config, snapshot_iters, samples, probe_seed)?;
                println!(
                    "lr {lr:<10} bias {:.6e} ± {:.2e} (coordinate {}, {} samples)",
                    est.estimate, est.stderr, est.argmax, est.samples
                );
                rows.push(ProbeRow {
                    probe: "bias".into(),
                    param: format!("lr={lr}"),
                    estimate: est.estimate,
                    stderr: est.stderr,
                    samples: est.samples,
                });
            }
            write_rows(&rows, out.as_deref())
        }
        Command::ProbeRate { exp, eta, horizons, max_evals, constant_lr, out } => {
            let spec = exp.spec(None)?;
            let data = load(&spec)?;
            let rule =
                if constant_lr { StepRule::Constant(spec.train.optimizer.lr) } else { StepRule::InvSqrtT { eta } };
            let kind = spec.train.optimizer.kind;
            let trace = rate_probe(&data, &spec.train, kind, rule, &horizons, max_evals)?;
            let mut rows = Vec::new();
            for pt in &trace.points {
                println!(
                    "{kind} T {:<8} lr {:<12.6} mean |grad F|^2 {:.6e} ({} evaluations)",
                    pt.horizon, pt.lr, pt.statistic, pt.evaluated
                );
                rows.push(ProbeRow {
                    probe: format!("rate-{kind}"),
                    param: format!("T={}", pt.horizon),
                    estimate: pt.statistic,
                    stderr: f64::NAN,
                    samples: pt.evaluated,
                });
            }
            write_rows(&rows, out.as_deref())
        }
        Command::Gradcheck { dataset_dir, h, layers, hidden_dim, neighbors, batch_size, seed, tolerance } => {
            let data = match dataset_dir {
                Some(dir) => load_dataset(&dir)?,
                None => gen_sbm(&gradcheck_instance(seed))?,
            };
            let sampler = cve_gnn::SamplerConfig { neighbors, batch_size, seed, ..Default::default() };
            let r = gradient_check(&data, layers, hidden_dim, &sampler, h, seed)?;
            println!("{} parameters", r.params);
            println!("h   = {:e}: max relative error {:.3e}, max abs error {:.3e}", r.h, r.rel_error, r.abs_error);
            println!(
                "h/2 = {:e}: max relative error {:.3e}, max abs error {:.3e}",
                r.h / 2.0,
                r.rel_error_half,
                r.abs_error_half
            );
            if r.rel_error < tolerance {
                println!("PASS (tolerance {tolerance:e})");
                Ok(())
            } else {
                Err(Error::Config(format!("relative error {:.3e} exceeds {tolerance:e}", r.rel_error)))
            }
        }
        Command::GenSbm { nodes, blocks, p_in, p_out, dim, seed, out } => {
            let data = gen_sbm(&SbmParams { nodes, blocks, p_in, p_out, dim, seed })?;
            write_dataset(&out, &data)?;
            println!("wrote {} ({} nodes, {} edges)", out.display(), data.num_nodes(), data.graph.num_edges());
            Ok(())
        }
    }
}

/// The 8-node instance used when no dataset is given.
fn gradcheck_instance(seed: u64) -> SbmParams {
    SbmParams { nodes: 8, blocks: 2, p_in: 0.7, p_out: 0.2, dim: 3, seed }
}

fn write_rows(rows: &[ProbeRow], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            ensure_parent(path)?;
            save_probe_csv(rows, path)
        }
        None => write_probe_csv(rows, std::io::stdout().lock()),
    }
}

fn usage_error(kind: ErrorKind, e: Error) -> ! {
    let mut cmd = Cli::command();
    let sub = std::env::args().nth(1).unwrap_or_default();
    match cmd.find_subcommand_mut(&sub) {
        Some(sc) => sc.clone().bin_name(format!("cve-gnn {sub}")).error(kind, e).exit(),
        None => cmd.error(kind, e).exit(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Usage(_)) => usage_error(ErrorKind::ArgumentConflict, e),
        Err(e @ Error::Config(_)) => usage_error(ErrorKind::ValueValidation, e),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
