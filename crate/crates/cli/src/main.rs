//! Command-line front end: scenario generation, training, adaptation,
//! experiment grids, sweeps, timing, and plot-ready exports.
//!
//! Exit codes: 0 success, 1 config/user error, 2 partial experiment failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use cirloc::channel::write_dataset;
use cirloc::dil::{run_initial_training, DilModel, InitialArtifacts, Method};
use cirloc::harness::{
    build_tasks, compare_selection, run_cell_seed, run_experiment_prepared, sweep_lambda,
    timing_report, trajectory_csv, trajectory_rows, ExperimentSpec, InitialCache, PreparedTask,
    ResultTable, ScenarioConfig, SelectionSpec, TRAJECTORY_CSV_HEADER,
};
use cirloc::metrics::Metric;
use cirloc::nn::Checkpoint;
use cirloc::sampling::Strategy;

/// Environment variable naming the default output root (fallback: `runs`).
const OUT_ENV: &str = "CIRLOC_OUT";

#[derive(Parser)]
#[command(name = "cirloc", version, about = "Continual-learning experiments on synthetic CIR fingerprints")]
struct Cli {
    /// Experiment config (JSON). Defaults to the built-in desk preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the number of parallel grid cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (default: $CIRLOC_OUT/<subcommand> or runs/<subcommand>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides samples per task.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Dotted-path config overrides, e.g. `--override epochs_initial=5`
    /// or `--override scenario.samples_per_task=500`. Values parse as JSON.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes scene descriptors and per-task dataset files.
    GenScenario,
    /// Initial training on task 1; writes a checkpoint plus training artifacts.
    Train,
    /// Loads a `train` checkpoint and adapts through the remaining tasks.
    Adapt {
        /// Directory containing checkpoint_initial.json / artifacts_initial.json
        /// (defaults to the output directory).
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Full method × N × selection grid; writes results.csv/json + manifests.
    Run,
    /// λ × N grid on the first adaptation for one regularized method.
    SweepLambda,
    /// RD/ED/8-metric selection comparison at fixed N.
    CompareSelection,
    /// Per-method and per-strategy wall-clock report (JSON only).
    Timing,
    /// Re-emits plot-ready CSVs from a finished run directory.
    Export {
        /// Run directory produced by `run`.
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        what: ExportWhat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportWhat {
    Trajectories,
    Table,
    Cdf,
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

/// One grid method: either `"ewc"` (default λ) or `{"name": "ewc", "lambda": 1e4}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MethodSpec {
    Name(String),
    Full { name: String, lambda: f64 },
}

impl MethodSpec {
    fn resolve(&self) -> Result<(Method, f64)> {
        let (name, lambda) = match self {
            MethodSpec::Name(n) => (n.as_str(), None),
            MethodSpec::Full { name, lambda } => (name.as_str(), Some(*lambda)),
        };
        let method = Method::parse(name)?;
        Ok((method, lambda.unwrap_or_else(|| method.default_lambda())))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SweepSection {
    method: String,
    lambdas: Vec<f64>,
}

/// The single JSON config document all subcommands share.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CliConfig {
    scenario: ScenarioConfig,
    methods: Vec<MethodSpec>,
    ns: Vec<usize>,
    /// `random`/`rd`, `equally_distributed`/`ed`, `error_highest`,
    /// `error_lowest`, or `similarity:<metric>`.
    selections: Vec<String>,
    seeds: Vec<u64>,
    weight_averaging: bool,
    epochs_initial: usize,
    epochs_adapt: usize,
    hidden: Vec<usize>,
    sweep: Option<SweepSection>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            scenario: ScenarioConfig::default_desk(),
            methods: vec![MethodSpec::Name("finetune".into())],
            ns: vec![0],
            selections: vec!["random".into()],
            seeds: (0..5).collect(),
            weight_averaging: false,
            epochs_initial: 50,
            epochs_adapt: 5,
            hidden: vec![256, 128, 64],
            sweep: None,
        }
    }
}

fn parse_selection(s: &str) -> Result<SelectionSpec> {
    if let Some(rest) = s.strip_prefix("similarity:") {
        return Ok(SelectionSpec {
            strategy: Strategy::Similarity,
            metric: Some(Metric::parse(rest)?),
        });
    }
    let strategy = Strategy::parse(s)?;
    if strategy == Strategy::Similarity {
        bail!("similarity selection needs a metric, e.g. similarity:euclidean");
    }
    Ok(SelectionSpec {
        strategy,
        metric: None,
    })
}

impl CliConfig {
    fn to_spec(&self) -> Result<ExperimentSpec> {
        let methods = self
            .methods
            .iter()
            .map(MethodSpec::resolve)
            .collect::<Result<Vec<_>>>()?;
        let selections = self
            .selections
            .iter()
            .map(|s| parse_selection(s))
            .collect::<Result<Vec<_>>>()?;
        let spec = ExperimentSpec {
            scenario: self.scenario.clone(),
            methods,
            ns: self.ns.clone(),
            selections,
            seeds: self.seeds.clone(),
            weight_averaging: self.weight_averaging,
            epochs_initial: self.epochs_initial,
            epochs_adapt: self.epochs_adapt,
            hidden: self.hidden.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Applies `key.path=json-value` onto a JSON tree; bare words fall back to
/// string values.
fn apply_override(doc: &mut serde_json::Value, expr: &str) -> Result<()> {
    let (path, raw) = expr
        .split_once('=')
        .ok_or_else(|| anyhow!("override {expr:?} is not KEY=VALUE"))?;
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        node = node
            .get_mut(*part)
            .ok_or_else(|| anyhow!("unknown config path segment {part:?} in {path:?}"))?;
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| anyhow!("config path {path:?} does not address an object field"))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn load_config(cli: &Cli) -> Result<CliConfig> {
    let mut doc = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| "parsing config JSON")?
        }
        None => serde_json::to_value(CliConfig::default())?,
    };
    for o in &cli.overrides {
        apply_override(&mut doc, o)?;
    }
    let mut cfg: CliConfig =
        serde_json::from_value(doc).with_context(|| "config does not match the schema")?;
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(samples) = cli.samples {
        cfg.scenario.samples_per_task = samples;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, sub: &str) -> Result<PathBuf> {
    let dir = match &cli.out {
        Some(d) => d.clone(),
        None => {
            let root = std::env::var(OUT_ENV).unwrap_or_else(|_| "runs".into());
            Path::new(&root).join(sub)
        }
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &serde_json::to_string_pretty(value)?)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_gen_scenario(cfg: &CliConfig, dir: &Path) -> Result<()> {
    let tasks = build_tasks(&cfg.scenario)?;
    write_json(&dir.join("scenario.json"), &cfg.scenario)?;
    for task in &tasks {
        write_json(&dir.join(format!("task{}.scene.json", task.task_id)), &task.scene)?;
        let path = dir.join(format!("task{}.cird", task.task_id));
        write_dataset(
            &path,
            &task.dataset,
            task.scene.base_stations.len(),
            task.scene.n_taps,
        )?;
        println!(
            "task {}: {} samples ({} train / {} test, {} modified-region train) -> {}",
            task.task_id,
            task.dataset.len(),
            task.train.len(),
            task.test.len(),
            task.modified_train.len(),
            path.display()
        );
    }
    Ok(())
}

fn initial_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (
        dir.join("checkpoint_initial.json"),
        dir.join("artifacts_initial.json"),
    )
}

fn cmd_train(cfg: &CliConfig, dir: &Path) -> Result<()> {
    let spec = cfg.to_spec()?;
    let tasks = build_tasks(&cfg.scenario)?;
    let seed = spec.seeds[0];
    let dil_cfg = cirloc::dil::DilConfig {
        epochs_initial: spec.epochs_initial,
        epochs_adapt: spec.epochs_adapt,
        hidden: spec.hidden.clone(),
        ..cirloc::dil::DilConfig::new(Method::Finetune)
    };
    let dim = tasks[0].feature_dim();
    let (model, artifacts) = run_initial_training(dim, &dil_cfg, &tasks[0].train, seed)?;
    let (ckpt_path, art_path) = initial_paths(dir);
    Checkpoint::of(&model, None, seed, spec.epochs_initial).save(&ckpt_path)?;
    println!("wrote {}", ckpt_path.display());
    write_json(&art_path, &artifacts)?;
    println!(
        "initial training done: seed {seed}, final epoch loss {:.6}",
        artifacts.final_loss
    );
    Ok(())
}

fn cmd_adapt(cli: &Cli, cfg: &CliConfig, dir: &Path, from: Option<&Path>) -> Result<()> {
    let spec = cfg.to_spec()?;
    let tasks = build_tasks(&cfg.scenario)?;
    let src = from.unwrap_or(dir);
    let (ckpt_path, art_path) = initial_paths(src);
    let ckpt = Checkpoint::load(&ckpt_path)
        .with_context(|| format!("loading {} (run `train` first)", ckpt_path.display()))?;
    let artifacts: InitialArtifacts = serde_json::from_str(
        &std::fs::read_to_string(&art_path)
            .with_context(|| format!("loading {}", art_path.display()))?,
    )?;
    let (method, lambda) = spec.methods[0];
    let sel = spec.selections[0];
    let n = spec.ns[0];
    let seed = ckpt.seed;
    let dil_cfg = cirloc::dil::DilConfig {
        lambda,
        weight_averaging: spec.weight_averaging && method != Method::Pnn,
        epochs_initial: spec.epochs_initial,
        epochs_adapt: spec.epochs_adapt,
        hidden: spec.hidden.clone(),
        ..cirloc::dil::DilConfig::new(method)
    };
    let model = ckpt.model()?;
    let dil = DilModel::from_initial(dil_cfg, model, &artifacts, &tasks[0].train, seed)?;
    // Re-run the cell from the restored state through all tasks.
    let initial = (dil.model.clone(), artifacts);
    let (manifest, adapted) =
        run_cell_seed(&spec, &tasks, method, lambda, n, &sel, seed, &initial)?;
    let _ = cli;
    write_json(&dir.join("manifest_adapt.json"), &manifest)?;
    Checkpoint::of(&adapted.model, None, seed, spec.epochs_adapt)
        .save(&dir.join("checkpoint_adapted.json"))?;
    println!("wrote {}", dir.join("checkpoint_adapted.json").display());
    for (stage, maes) in manifest.maes.iter().enumerate() {
        let cells: Vec<String> = maes.iter().map(|m| format!("{m:.3}")).collect();
        println!("stage {stage}: per-domain MAE [{}] m", cells.join(", "));
    }
    Ok(())
}

/// Shared tail for grid commands: writes table, manifests, config echo, and
/// a first-cell trajectory dump; returns whether any cell failed.
fn emit_report(
    dir: &Path,
    cfg: &CliConfig,
    spec: &ExperimentSpec,
    tasks: &[PreparedTask],
    cache: Option<&InitialCache>,
    report: &cirloc::harness::ExperimentReport,
    stem: &str,
) -> Result<bool> {
    write_json(&dir.join("config.json"), cfg)?;
    write(&dir.join(format!("{stem}.csv")), &report.table.to_csv())?;
    write(&dir.join(format!("{stem}.json")), &report.table.to_json())?;
    write_json(&dir.join("manifests.json"), &report.manifests)?;
    if let Some(cache) = cache {
        // Trajectory dump for the first grid cell, first seed.
        let (method, lambda) = spec.methods[0];
        let sel = spec.selections[0];
        let seed = spec.seeds[0];
        let (_, model) = run_cell_seed(
            spec,
            tasks,
            method,
            lambda,
            spec.ns[0],
            &sel,
            seed,
            cache.get(seed),
        )?;
        let rows = trajectory_rows(&model, tasks)?;
        write(&dir.join("trajectories.csv"), &trajectory_csv(&rows))?;
    }
    if report.leakage_violations > 0 {
        bail!("leakage guard tripped: {} violations", report.leakage_violations);
    }
    if report.any_failed {
        let failed: Vec<String> = report
            .manifests
            .iter()
            .filter(|m| m.error.is_some())
            .map(|m| {
                format!(
                    "{} n={} {} seed={}: {}",
                    m.method,
                    m.n,
                    m.selection,
                    m.seed,
                    m.error.as_deref().unwrap_or("")
                )
            })
            .collect();
        eprintln!("failed cells:\n  {}", failed.join("\n  "));
    }
    Ok(report.any_failed)
}

fn cmd_run(cfg: &CliConfig, dir: &Path) -> Result<bool> {
    let spec = cfg.to_spec()?;
    let tasks = build_tasks(&spec.scenario)?;
    let cache = InitialCache::build(&spec, &tasks)?;
    let report = run_experiment_prepared(&spec, &tasks, &cache)?;
    emit_report(dir, cfg, &spec, &tasks, Some(&cache), &report, "results")
}

fn cmd_sweep(cfg: &CliConfig, dir: &Path) -> Result<bool> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow!("config has no `sweep` section"))?;
    let method = Method::parse(&sweep.method)?;
    let spec = cfg.to_spec()?;
    let report = sweep_lambda(&spec, method, &sweep.lambdas)?;
    let mut shaped = spec.clone();
    shaped.scenario.changes.truncate(1);
    shaped.methods = sweep.lambdas.iter().map(|&l| (method, l)).collect();
    let tasks = build_tasks(&shaped.scenario)?;
    emit_report(dir, cfg, &shaped, &tasks, None, &report, "sweep")
}

fn cmd_compare_selection(cfg: &CliConfig, dir: &Path) -> Result<bool> {
    let spec = cfg.to_spec()?;
    let n = spec.ns.first().copied().unwrap_or(50);
    let report = compare_selection(&spec, n)?;
    let tasks = build_tasks(&spec.scenario)?;
    emit_report(dir, cfg, &spec, &tasks, None, &report, "selection")
}

fn cmd_timing(cfg: &CliConfig, dir: &Path) -> Result<()> {
    let spec = cfg.to_spec()?;
    let report = timing_report(&spec)?;
    write_json(&dir.join("timing.json"), &report)?;
    for note in &report.notes {
        println!("{note}");
    }
    Ok(())
}

fn cmd_export(run_dir: &Path, what: ExportWhat, dir: &Path) -> Result<()> {
    match what {
        ExportWhat::Table => {
            let path = run_dir.join("results.json");
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("missing {}", path.display()))?;
            let table: ResultTable = serde_json::from_str(&text)?;
            write(&dir.join("table.csv"), &table.to_csv())?;
        }
        ExportWhat::Trajectories | ExportWhat::Cdf => {
            let path = run_dir.join("trajectories.csv");
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("missing {}", path.display()))?;
            let mut lines = text.lines();
            if lines.next() != Some(TRAJECTORY_CSV_HEADER) {
                bail!("{} has an unexpected header", path.display());
            }
            let mut errors: Vec<f64> = Vec::new();
            for line in lines {
                let err: f64 = line
                    .rsplit(',')
                    .next()
                    .ok_or_else(|| anyhow!("malformed trajectory row"))?
                    .parse()?;
                errors.push(err);
            }
            match what {
                ExportWhat::Trajectories => write(&dir.join("trajectories.csv"), &text)?,
                ExportWhat::Cdf => {
                    errors.sort_by(f64::total_cmp);
                    let mut out = String::from("quantile,error_m\n");
                    let n = errors.len() as f64;
                    for (i, e) in errors.iter().enumerate() {
                        out.push_str(&format!("{:.6},{:.6}\n", (i + 1) as f64 / n, e));
                    }
                    write(&dir.join("cdf.csv"), &out)?;
                }
                ExportWhat::Table => unreachable!(),
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<u8> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
    let sub = match &cli.cmd {
        Cmd::GenScenario => "gen-scenario",
        Cmd::Train => "train",
        Cmd::Adapt { .. } => "adapt",
        Cmd::Run => "run",
        Cmd::SweepLambda => "sweep-lambda",
        Cmd::CompareSelection => "compare-selection",
        Cmd::Timing => "timing",
        Cmd::Export { .. } => "export",
    };
    let dir = out_dir(cli, sub)?;
    let partial = match &cli.cmd {
        Cmd::Export { run_dir, what } => {
            cmd_export(run_dir, *what, &dir)?;
            false
        }
        cmd => {
            let cfg = load_config(cli)?;
            match cmd {
                Cmd::GenScenario => {
                    cmd_gen_scenario(&cfg, &dir)?;
                    false
                }
                Cmd::Train => {
                    cmd_train(&cfg, &dir)?;
                    false
                }
                Cmd::Adapt { from } => {
                    cmd_adapt(cli, &cfg, &dir, from.as_deref())?;
                    false
                }
                Cmd::Run => cmd_run(&cfg, &dir)?,
                Cmd::SweepLambda => cmd_sweep(&cfg, &dir)?,
                Cmd::CompareSelection => cmd_compare_selection(&cfg, &dir)?,
                Cmd::Timing => {
                    cmd_timing(&cfg, &dir)?;
                    false
                }
                Cmd::Export { .. } => unreachable!(),
            }
        }
    };
    Ok(if partial { 2 } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
