//! Experiment orchestration: builds task sequences from a scenario, runs the
//! method × N × selection grid over multiple seeds, and aggregates per-domain
//! MAE tables with full provenance manifests.
//!
//! One (cell, seed) run is single-threaded and deterministic; the grid runs
//! on a rayon work queue. Initial training depends only on the seed, so it is
//! computed once per seed and shared by every cell. Wall-clock numbers go to
//! JSON manifests only — CSV tables stay byte-reproducible.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{
    apply_change, generate_task, to_features, DomainChange, Obstacle, ObstacleChange, Position,
    Rect, RegionLabeler, Region, Scene, TaskDataset, WalkConfig,
};
use crate::dil::{
    evaluate_mae, run_initial_training, DilConfig, DilModel, InitialArtifacts, Method, TrainSet,
};
use crate::error::{Error, Result};
use crate::metrics::{Metric, ALL_METRICS};
use crate::nn::Mlp;
use crate::sampling::{
    compute_errors, select_by_error, select_by_similarity, select_equally_distributed,
    select_random, ExemplarSet, Strategy,
};

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// A scene plus the ordered domain changes and generation knobs that define
/// a task sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scene: Scene,
    pub changes: Vec<DomainChange>,
    pub samples_per_task: usize,
    pub walk: WalkConfig,
    pub train_ratio: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Two-domain desk default: a furnished 20×20 m room where one cabinet
    /// moves and a new shelf appears, leaving ~89% of the area static.
    pub fn default_desk() -> Self {
        let mut scene = Scene::default_desk();
        scene.obstacles = vec![
            Obstacle {
                id: 1,
                rect: Rect::new(4.0, 4.0, 8.0, 8.0),
                attenuation: 0.1,
            },
            Obstacle {
                id: 2,
                rect: Rect::new(12.0, 10.0, 16.0, 14.0),
                attenuation: 0.15,
            },
        ];
        ScenarioConfig {
            scene,
            changes: vec![DomainChange {
                changes: vec![
                    ObstacleChange::Move {
                        id: 1,
                        to: Rect::new(4.0, 12.0, 8.0, 16.0),
                    },
                    ObstacleChange::Insert {
                        obstacle: Obstacle {
                            id: 3,
                            rect: Rect::new(10.0, 2.0, 14.0, 5.0),
                            attenuation: 0.05,
                        },
                    },
                ],
            }],
            samples_per_task: 5_000,
            walk: WalkConfig::default(),
            train_ratio: 0.8,
            seed: 0,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.changes.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.samples_per_task < 1 {
            return Err(Error::InvalidConfig("samples_per_task must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.train_ratio) || self.train_ratio == 0.0 {
            return Err(Error::InvalidConfig("train_ratio must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// One task's data, featurized and split for the experiment loop.
#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub task_id: usize,
    pub scene: Scene,
    pub dataset: TaskDataset,
    /// Full train split.
    pub train: TrainSet,
    /// Modified-region subset of the train split (empty for task 0).
    pub modified_train: TrainSet,
    /// Static-region subset of the train split — the exemplar pool.
    pub static_train: TrainSet,
    pub static_positions: Vec<Position>,
    /// Test split features and reference positions.
    pub test: TrainSet,
}

impl PreparedTask {
    pub fn feature_dim(&self) -> usize {
        2 * self.scene.base_stations.len() * self.scene.n_taps
    }
}

fn subset(ds: &TaskDataset, idx: &[usize], n_bs: usize, n_taps: usize) -> TrainSet {
    let mut ts = TrainSet::default();
    for &i in idx {
        let s = &ds.samples[i];
        ts.ids.push(s.id);
        ts.xs.push(to_features(s, n_bs, n_taps));
        ts.ys.push([s.position.x, s.position.y]);
    }
    ts
}

/// Generates and featurizes the full task sequence of a scenario. Each task's
/// generation seed is derived from `(scenario seed, task id)`.
pub fn build_tasks(cfg: &ScenarioConfig) -> Result<Vec<PreparedTask>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.n_tasks());
    let mut scene = cfg.scene.clone();
    let mut labeler = RegionLabeler { modified: vec![] };
    for t in 0..cfg.n_tasks() {
        if t > 0 {
            let (next, lab) = apply_change(&scene, &cfg.changes[t - 1])?;
            scene = next;
            labeler = lab;
        }
        let task_seed = cfg
            .seed
            .wrapping_add((t as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let mut ds = generate_task(
            &scene,
            &cfg.walk,
            &labeler,
            t,
            cfg.samples_per_task,
            task_seed,
        )?;
        ds.split(cfg.train_ratio, cfg.seed);
        let n_bs = scene.base_stations.len();
        let n_taps = scene.n_taps;
        let train = subset(&ds, &ds.train_idx, n_bs, n_taps);
        let (mod_idx, stat_idx): (Vec<usize>, Vec<usize>) = ds
            .train_idx
            .iter()
            .copied()
            .partition(|&i| ds.samples[i].region == Region::Modified);
        let modified_train = subset(&ds, &mod_idx, n_bs, n_taps);
        let static_train = subset(&ds, &stat_idx, n_bs, n_taps);
        let static_positions = stat_idx
            .iter()
            .map(|&i| ds.samples[i].position)
            .collect();
        let test = subset(&ds, &ds.test_idx, n_bs, n_taps);
        out.push(PreparedTask {
            task_id: t,
            scene: scene.clone(),
            dataset: ds,
            train,
            modified_train,
            static_train,
            static_positions,
            test,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Experiment spec and result table
// ---------------------------------------------------------------------------

/// Which exemplar-selection variant a cell uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub strategy: Strategy,
    pub metric: Option<Metric>,
}

impl SelectionSpec {
    pub fn random() -> Self {
        SelectionSpec {
            strategy: Strategy::Random,
            metric: None,
        }
    }

    pub fn name(&self) -> String {
        match self.metric {
            Some(m) => format!("{}:{}", self.strategy.name(), m.name()),
            None => self.strategy.name().to_string(),
        }
    }

    /// RD, ED, and the eight similarity metrics — the full selection lineup.
    pub fn all_variants() -> Vec<SelectionSpec> {
        let mut v = vec![
            SelectionSpec {
                strategy: Strategy::Random,
                metric: None,
            },
            SelectionSpec {
                strategy: Strategy::EquallyDistributed,
                metric: None,
            },
        ];
        for m in ALL_METRICS {
            v.push(SelectionSpec {
                strategy: Strategy::Similarity,
                metric: Some(m),
            });
        }
        v
    }
}

/// The full grid an experiment covers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    /// (method, λ) pairs.
    pub methods: Vec<(Method, f64)>,
    pub ns: Vec<usize>,
    pub selections: Vec<SelectionSpec>,
    pub seeds: Vec<u64>,
    pub weight_averaging: bool,
    pub epochs_initial: usize,
    pub epochs_adapt: usize,
    pub hidden: Vec<usize>,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig) -> Self {
        ExperimentSpec {
            scenario,
            methods: vec![(Method::Finetune, 0.0)],
            ns: vec![0],
            selections: vec![SelectionSpec::random()],
            seeds: (0..5).collect(),
            weight_averaging: false,
            epochs_initial: 50,
            epochs_adapt: 5,
            hidden: vec![256, 128, 64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.methods.is_empty() || self.ns.is_empty() || self.selections.is_empty() {
            return Err(Error::InvalidConfig("empty grid axis".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("no seeds".into()));
        }
        for &(_, lambda) in &self.methods {
            if lambda < 0.0 {
                return Err(Error::InvalidConfig("lambda must be >= 0".into()));
            }
        }
        Ok(())
    }

    fn dil_config(&self, method: Method, lambda: f64) -> DilConfig {
        DilConfig {
            lambda,
            weight_averaging: self.weight_averaging && method != Method::Pnn,
            epochs_initial: self.epochs_initial,
            epochs_adapt: self.epochs_adapt,
            hidden: self.hidden.clone(),
            ..DilConfig::new(method)
        }
    }
}

/// One aggregated table cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    /// 0 = after initial training, t = after adapting to task t.
    pub stage: usize,
    pub test_domain: usize,
    pub method: String,
    pub lambda: f64,
    pub n: usize,
    pub selection: String,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub per_seed: Vec<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

pub const RESULT_CSV_HEADER: &str =
    "stage,test_domain,method,lambda,n,selection,mae_mean,mae_std";

impl ResultTable {
    /// Fixed-header CSV with all floats at six decimals; byte-reproducible
    /// for a given (config, seed).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULT_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{},{},{:.6},{:.6}\n",
                r.stage, r.test_domain, r.method, r.lambda, r.n, r.selection, r.mae_mean, r.mae_std
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn find(
        &self,
        stage: usize,
        test_domain: usize,
        method: &str,
        lambda: f64,
        n: usize,
        selection: &str,
    ) -> Option<&ResultRow> {
        self.rows.iter().find(|r| {
            r.stage == stage
                && r.test_domain == test_domain
                && r.method == method
                && r.lambda == lambda
                && r.n == n
                && r.selection == selection
        })
    }
}

/// Mean and population standard deviation (the reporting convention for the
/// seed axis).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

// ---------------------------------------------------------------------------
// Per-run manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExemplarProvenance {
    pub stage: usize,
    pub strategy: String,
    pub metric: Option<String>,
    pub ids: Vec<u64>,
    pub excluded: usize,
    pub selection_seconds: f64,
}

/// Full provenance of one (cell, seed) run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: String,
    pub lambda: f64,
    pub n: usize,
    pub selection: String,
    pub seed: u64,
    pub exemplars: Vec<ExemplarProvenance>,
    pub checkpoint_hashes: Vec<String>,
    /// maes[stage][domain].
    pub maes: Vec<Vec<f64>>,
    pub stage_seconds: Vec<f64>,
    pub leakage_violations: usize,
    pub error: Option<String>,
}

fn hash_params(params: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for p in params {
        hasher.update(p.to_le_bytes());
    }
    format!("{:x}", hasher.finalize())
}

// ---------------------------------------------------------------------------
// Core run loop
// ---------------------------------------------------------------------------

/// Initial training results per seed, shared across all grid cells (the
/// initial run is method-independent).
pub struct InitialCache {
    entries: HashMap<u64, (Mlp, InitialArtifacts)>,
}

impl InitialCache {
    /// Trains task 1 once per seed, in parallel.
    pub fn build(spec: &ExperimentSpec, tasks: &[PreparedTask]) -> Result<Self> {
        let base = spec.dil_config(Method::Finetune, 0.0);
        let dim = tasks[0].feature_dim();
        let entries: Result<HashMap<_, _>> = spec
            .seeds
            .par_iter()
            .map(|&seed| {
                run_initial_training(dim, &base, &tasks[0].train, seed)
                    .map(|pair| (seed, pair))
            })
            .collect();
        Ok(InitialCache { entries: entries? })
    }

    pub fn get(&self, seed: u64) -> &(Mlp, InitialArtifacts) {
        &self.entries[&seed]
    }
}

fn exemplar_train_set(pool: &TrainSet, ids: &[u64]) -> TrainSet {
    let by_id: HashMap<u64, usize> = pool
        .ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let mut out = TrainSet::default();
    for &id in ids {
        let i = by_id[&id];
        out.ids.push(id);
        out.xs.push(pool.xs[i].clone());
        out.ys.push(pool.ys[i]);
    }
    out
}

fn select_exemplars(
    sel: &SelectionSpec,
    n: usize,
    tasks: &[PreparedTask],
    t: usize,
    model: &DilModel,
    seed: u64,
) -> Result<ExemplarSet> {
    let pool = &tasks[t].static_train;
    let sel_seed = seed ^ (t as u64).wrapping_mul(0x517c_c1b7_2722_0a95);
    match sel.strategy {
        Strategy::Random => select_random(&pool.ids, n, sel_seed),
        Strategy::EquallyDistributed => {
            select_equally_distributed(&pool.ids, &tasks[t].static_positions, n, sel_seed)
        }
        Strategy::ErrorHighest | Strategy::ErrorLowest => {
            // Errors come from the pre-adaptation model (the checkpoint of
            // task t−1).
            let positions: Vec<Position> = pool
                .ys
                .iter()
                .map(|&[x, y]| Position::new(x, y))
                .collect();
            let records = match &model.state.pnn {
                Some(pnn) => {
                    let mut recs = Vec::with_capacity(pool.len());
                    for ((&id, x), p) in pool.ids.iter().zip(&pool.xs).zip(&positions) {
                        let pred = pnn.predict_for_task(t - 1, x)?;
                        let e = ((pred[0] - p.x).powi(2) + (pred[1] - p.y).powi(2)).sqrt();
                        recs.push(crate::sampling::ErrorRecord { id, error: e });
                    }
                    recs
                }
                None => compute_errors(&model.model, &pool.ids, &pool.xs, &positions)?,
            };
            select_by_error(&records, n, sel.strategy == Strategy::ErrorHighest)
        }
        Strategy::Similarity => {
            let metric = sel
                .metric
                .ok_or_else(|| Error::InvalidConfig("similarity needs a metric".into()))?;
            select_by_similarity(&tasks[t - 1].train.xs, &pool.ids, &pool.xs, metric, n)
        }
    }
}

fn eval_all_domains(model: &DilModel, tasks: &[PreparedTask]) -> Result<Vec<f64>> {
    tasks
        .iter()
        .map(|task| {
            evaluate_mae(
                |x| model.predict(task.task_id, x),
                &task.test.xs,
                &task.test.ys,
            )
        })
        .collect()
}

fn count_leakage(stream: &TrainSet, exemplars: &[u64], task: &PreparedTask) -> usize {
    let test_ids: std::collections::HashSet<u64> = task.test.ids.iter().copied().collect();
    stream
        .ids
        .iter()
        .filter(|id| test_ids.contains(id))
        .count()
        + exemplars.iter().filter(|id| test_ids.contains(id)).count()
}

/// Runs one grid cell for one seed: sequential adaptation over all tasks
/// with evaluation on every domain after every stage. Returns the manifest
/// and the final adapted model.
pub fn run_cell_seed(
    spec: &ExperimentSpec,
    tasks: &[PreparedTask],
    method: Method,
    lambda: f64,
    n: usize,
    sel: &SelectionSpec,
    seed: u64,
    initial: &(Mlp, InitialArtifacts),
) -> Result<(RunManifest, DilModel)> {
    let cfg = spec.dil_config(method, lambda);
    let mut model = DilModel::from_initial(
        cfg,
        initial.0.clone(),
        &initial.1,
        &tasks[0].train,
        seed,
    )?;
    let mut manifest = RunManifest {
        method: method.name().into(),
        lambda,
        n,
        selection: sel.name(),
        seed,
        exemplars: vec![],
        checkpoint_hashes: vec![hash_params(&model.state.checkpoints[0])],
        maes: vec![eval_all_domains(&model, tasks)?],
        stage_seconds: vec![],
        leakage_violations: count_leakage(&tasks[0].train, &[], &tasks[0]),
        error: None,
    };
    for t in 1..tasks.len() {
        let sel_start = Instant::now();
        let exemplars = select_exemplars(sel, n, tasks, t, &model, seed)?;
        let selection_seconds = sel_start.elapsed().as_secs_f64();
        let stream = tasks[t]
            .modified_train
            .concat(&exemplar_train_set(&tasks[t].static_train, &exemplars.ids));
        manifest.leakage_violations += count_leakage(&stream, &exemplars.ids, &tasks[t]);
        manifest.exemplars.push(ExemplarProvenance {
            stage: t,
            strategy: exemplars.strategy.clone(),
            metric: exemplars.metric.clone(),
            ids: exemplars.ids.clone(),
            excluded: exemplars.excluded,
            selection_seconds,
        });
        let stage_start = Instant::now();
        model.adapt(&stream)?;
        manifest.stage_seconds.push(stage_start.elapsed().as_secs_f64());
        manifest
            .checkpoint_hashes
            .push(hash_params(model.state.checkpoints.last().unwrap()));
        manifest.maes.push(eval_all_domains(&model, tasks)?);
    }
    Ok((manifest, model))
}

/// Aggregated experiment output: the table plus every per-run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub table: ResultTable,
    pub manifests: Vec<RunManifest>,
    pub leakage_violations: usize,
    pub any_failed: bool,
}

/// Builds cells from manifests: one row per (cell, stage, domain), mean ±
/// population std over seeds. Divergent runs yield rows flagged failed.
fn aggregate(
    spec: &ExperimentSpec,
    n_tasks: usize,
    manifests: &[RunManifest],
) -> ResultTable {
    let mut table = ResultTable::default();
    for &(method, lambda) in &spec.methods {
        for &n in &spec.ns {
            for sel in &spec.selections {
                let cell: Vec<&RunManifest> = manifests
                    .iter()
                    .filter(|m| {
                        m.method == method.name()
                            && m.lambda == lambda
                            && m.n == n
                            && m.selection == sel.name()
                    })
                    .collect();
                for stage in 0..n_tasks {
                    for domain in 0..n_tasks {
                        let per_seed: Vec<f64> = cell
                            .iter()
                            .filter(|m| m.error.is_none())
                            .map(|m| m.maes[stage][domain])
                            .collect();
                        let failed = per_seed.len() != spec.seeds.len();
                        let (mean, std) = if per_seed.is_empty() {
                            (f64::NAN, f64::NAN)
                        } else {
                            mean_std(&per_seed)
                        };
                        table.rows.push(ResultRow {
                            stage,
                            test_domain: domain,
                            method: method.name().into(),
                            lambda,
                            n,
                            selection: sel.name(),
                            mae_mean: mean,
                            mae_std: std,
                            per_seed,
                            failed,
                        });
                    }
                }
            }
        }
    }
    table
}

/// Runs the full grid: initial training cached per seed, cells × seeds on the
/// rayon pool, then aggregation. A diverging run marks its rows failed but
/// the table is still produced.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let tasks = build_tasks(&spec.scenario)?;
    let cache = InitialCache::build(spec, &tasks)?;
    run_experiment_prepared(spec, &tasks, &cache)
}

/// [`run_experiment`] over already-built tasks and initial cache, so callers
/// can reuse both for follow-up work (e.g. trajectory exports).
pub fn run_experiment_prepared(
    spec: &ExperimentSpec,
    tasks: &[PreparedTask],
    cache: &InitialCache,
) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut jobs: Vec<(Method, f64, usize, SelectionSpec, u64)> = Vec::new();
    for &(method, lambda) in &spec.methods {
        for &n in &spec.ns {
            for sel in &spec.selections {
                for &seed in &spec.seeds {
                    jobs.push((method, lambda, n, *sel, seed));
                }
            }
        }
    }
    let manifests: Vec<RunManifest> = jobs
        .par_iter()
        .map(|&(method, lambda, n, sel, seed)| {
            run_cell_seed(spec, tasks, method, lambda, n, &sel, seed, cache.get(seed))
                .map(|(m, _)| m)
                .unwrap_or_else(|e| RunManifest {
                    method: method.name().into(),
                    lambda,
                    n,
                    selection: sel.name(),
                    seed,
                    exemplars: vec![],
                    checkpoint_hashes: vec![],
                    maes: vec![],
                    stage_seconds: vec![],
                    leakage_violations: 0,
                    error: Some(e.to_string()),
                })
        })
        .collect();
    let table = aggregate(spec, tasks.len(), &manifests);
    let leakage_violations = manifests.iter().map(|m| m.leakage_violations).sum();
    let any_failed = manifests.iter().any(|m| m.error.is_some());
    Ok(ExperimentReport {
        table,
        manifests,
        leakage_violations,
        any_failed,
    })
}

// ---------------------------------------------------------------------------
// Protocol-shaped wrappers
// ---------------------------------------------------------------------------

/// λ-sweep over the first adaptation (T1→T2 only): the grid is (λ × N) for
/// one regularized method. The λ=0 column follows the finetune code path.
pub fn sweep_lambda(
    spec: &ExperimentSpec,
    method: Method,
    lambdas: &[f64],
) -> Result<ExperimentReport> {
    if !matches!(method, Method::Ewc | Method::Lwf | Method::Si) {
        return Err(Error::InvalidConfig(format!(
            "lambda sweep needs a regularized method, got {}",
            method.name()
        )));
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    let mut shaped = spec.clone();
    shaped.scenario.changes.truncate(1);
    shaped.methods = lambdas.iter().map(|&l| (method, l)).collect();
    run_experiment(&shaped)
}

/// Selection-strategy comparison at fixed N: RD, ED, and all
/// eight similarity metrics under one method.
pub fn compare_selection(spec: &ExperimentSpec, n: usize) -> Result<ExperimentReport> {
    let mut shaped = spec.clone();
    shaped.ns = vec![n];
    shaped.selections = SelectionSpec::all_variants();
    run_experiment(&shaped)
}

/// Per-test-sample prediction of a finished run; the plot-ready trajectory
/// record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub domain: usize,
    pub sample_id: u64,
    pub true_x: f64,
    pub true_y: f64,
    pub pred_x: f64,
    pub pred_y: f64,
    pub error_m: f64,
}

pub const TRAJECTORY_CSV_HEADER: &str =
    "domain,sample_id,true_x,true_y,pred_x,pred_y,error_m";

/// Final-stage predictions over every domain's test split.
pub fn trajectory_rows(model: &DilModel, tasks: &[PreparedTask]) -> Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::new();
    for task in tasks {
        for ((&id, x), y) in task.test.ids.iter().zip(&task.test.xs).zip(&task.test.ys) {
            let pred = model.predict(task.task_id, x)?;
            rows.push(TrajectoryRow {
                domain: task.task_id,
                sample_id: id,
                true_x: y[0],
                true_y: y[1],
                pred_x: pred[0],
                pred_y: pred[1],
                error_m: ((pred[0] - y[0]).powi(2) + (pred[1] - y[1]).powi(2)).sqrt(),
            });
        }
    }
    Ok(rows)
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.domain, r.sample_id, r.true_x, r.true_y, r.pred_x, r.pred_y, r.error_m
        ));
    }
    out
}

/// Per-method wall-clock per adaptation stage plus per-strategy selection
/// time, with the expected relative orderings reported softly (flags, not
/// failures).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingReport {
    /// method name → seconds per adaptation stage.
    pub adapt_seconds: Vec<(String, Vec<f64>)>,
    /// selection name → seconds per stage.
    pub selection_seconds: Vec<(String, Vec<f64>)>,
    /// Human-readable observations on expected orderings.
    pub notes: Vec<String>,
}

pub fn timing_report(spec: &ExperimentSpec) -> Result<TimingReport> {
    spec.validate()?;
    let tasks = build_tasks(&spec.scenario)?;
    let seed = spec.seeds[0];
    let mut one_seed = spec.clone();
    one_seed.seeds = vec![seed];
    let cache = InitialCache::build(&one_seed, &tasks)?;
    let initial = cache.get(seed);
    let n = spec.ns.iter().copied().max().unwrap_or(0);
    let mut adapt_seconds = Vec::new();
    for &(method, lambda) in &spec.methods {
        let (m, _) = run_cell_seed(
            spec,
            &tasks,
            method,
            lambda,
            n,
            &SelectionSpec::random(),
            seed,
            initial,
        )?;
        adapt_seconds.push((method.name().to_string(), m.stage_seconds));
    }
    // Selection timing under the first method.
    let (method, lambda) = spec.methods[0];
    let mut selection_seconds = Vec::new();
    for sel in SelectionSpec::all_variants() {
        let (m, _) = run_cell_seed(spec, &tasks, method, lambda, n, &sel, seed, initial)?;
        selection_seconds.push((
            sel.name(),
            m.exemplars.iter().map(|e| e.selection_seconds).collect(),
        ));
    }
    let mut notes = Vec::new();
    let total = |name: &str| -> Option<f64> {
        adapt_seconds
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.iter().sum())
    };
    if let (Some(lwf), Some(ewc), Some(si)) = (total("lwf"), total("ewc"), total("si")) {
        notes.push(format!(
            "expected lwf <= ewc < si: observed lwf={lwf:.3}s ewc={ewc:.3}s si={si:.3}s ({})",
            if lwf <= ewc && ewc < si { "holds" } else { "differs on this substrate" }
        ));
    }
    Ok(TimingReport {
        adapt_seconds,
        selection_seconds,
        notes,
    })
}
