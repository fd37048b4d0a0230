//! Subcommand implementations. Each returns a summary of what it wrote.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tubo_core::pipeline::{
    ForecastOutcome, MetricsReport, OnlineConfig, Source, Strategy, TrainedPool, evaluate, run_online,
    train_pool, uncertainty_windows,
};
use tubo_core::preprocess::{BurstDetector, BurstStats, burst_stats, split_burst};
use tubo_core::selection::{CalibrationMap, CorrelationEntry, argmin, correlation_report};
use tubo_core::synth::{self, GroundTruth, SynthSpec};
use tubo_core::te::{DegradationReport, Objective, SweepStrategy, degradation_sweep, k_shortest_paths};
use tubo_core::{DemandMatrix, DmSeries, rng};

use crate::config::{Overrides, RunConfig, sha256_hex};
use crate::dmcsv;
use crate::error::{Error, InModule, Result};
use crate::persist::{self, Manifest};
use crate::report::{self, Provenance};
use crate::topology;
use crate::REPORT_DIR_ENV;

pub const TRUTH_SCHEMA: &str = "tubo-truth/1";
pub const STATS_SCHEMA: &str = "tubo-stats/1";
pub const TRAIN_SCHEMA: &str = "tubo-train/1";
pub const EVALUATE_SCHEMA: &str = "tubo-evaluate/1";
pub const TE_SCHEMA: &str = "tubo-te/1";
pub const CDF_SCHEMA: &str = "tubo-od-mae-cdf/1";
pub const RATIO_SCHEMA: &str = "tubo-selection-ratios/1";
pub const DEGRADATION_SCHEMA: &str = "tubo-degradation/1";

pub const OUTCOMES_DIR: &str = "outcomes";
/// Outcome files written by `evaluate` and read by `te-sim`.
pub const TUBO_OUTCOMES: &str = "tubo.jsonl";
pub const ENSEMBLE_OUTCOMES: &str = "ensemble.jsonl";
pub const SINGLE_OUTCOMES: &str = "single.jsonl";

/// Tolerance on the oracle's own degradation.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

/// Effective configuration plus where its relative paths and reports live.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub config_path: Option<PathBuf>,
    pub report_dir: PathBuf,
}

impl Context {
    /// Load the config, apply overrides; the report directory comes from the
    /// environment when set.
    pub fn load(config_path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = RunConfig::load(config_path)?;
        config.apply(overrides);
        config.validate().map_err(Error::Usage)?;
        let report_dir = match std::env::var_os(REPORT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => RunConfig::resolve(config_path, &config.paths.reports),
        };
        Ok(Self { config, config_path: config_path.map(Path::to_path_buf), report_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        RunConfig::resolve(self.config_path.as_deref(), p)
    }

    pub fn data_path(&self) -> PathBuf {
        self.resolve(&self.config.paths.data)
    }

    pub fn models_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.models)
    }

    pub fn topology_path(&self) -> PathBuf {
        self.resolve(&self.config.paths.topology)
    }

    fn provenance(&self, command: &'static str) -> Provenance {
        Provenance::new(command, self.config.hash(), self.config.seed)
    }

    /// The series and the hash of its file bytes.
    pub fn load_data(&self) -> Result<(DmSeries, String)> {
        let path = self.data_path();
        let bytes = std::fs::read(&path).map_err(Error::io(&path))?;
        let text = String::from_utf8(bytes).map_err(|_| Error::format(&path, "not UTF-8"))?;
        let series = dmcsv::parse_dm_csv(&path, &text)?;
        Ok((series, sha256_hex(text.as_bytes())))
    }

    fn train_len(&self, series: &DmSeries) -> Result<usize> {
        let (train, _) = series.split(self.config.split()).in_module("series")?;
        Ok(train.len())
    }

    /// Manifest and primary/companion pools, refusing artifacts trained
    /// under another configuration or dataset.
    fn load_pools(&self, data_sha256: &str) -> Result<(Manifest, TrainedPool, TrainedPool)> {
        let dir = self.models_dir();
        let manifest = persist::load_manifest(&dir)?;
        let found = self.config.training_hash(data_sha256);
        if manifest.training_hash != found {
            return Err(Error::HashMismatch { dir, expected: manifest.training_hash, found });
        }
        let entry = |clip: bool| {
            manifest
                .pool(clip)
                .ok_or_else(|| Error::format(dir.join(persist::MANIFEST_FILE), format!("no pool with clip={clip}")))
        };
        let primary = persist::load_pool(&dir, entry(self.config.clip)?)?;
        let companion = persist::load_pool(&dir, entry(!self.config.clip)?)?;
        Ok((manifest, primary, companion))
    }
}

/// A synthetic-data spec file: one regime, or `regimes = [...]` concatenated.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GenSpec {
    Mixed { regimes: Vec<SynthSpec> },
    Single(SynthSpec),
}

impl GenSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::format(path, e))
        } else {
            toml::from_str(&text).map_err(|e| Error::format(path, e))
        }
    }

    /// Replace the seed; regime `i` of a mixed spec gets a derived seed.
    pub fn reseed(&mut self, seed: u64) {
        match self {
            GenSpec::Single(s) => s.seed = seed,
            GenSpec::Mixed { regimes } => {
                for (i, r) in regimes.iter_mut().enumerate() {
                    r.seed = rng::derive(seed, "regime", i as u64);
                }
            }
        }
    }

    fn seed(&self) -> u64 {
        match self {
            GenSpec::Single(s) => s.seed,
            GenSpec::Mixed { regimes } => regimes.first().map_or(0, |r| r.seed),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenSummary {
    pub series: PathBuf,
    pub truth: PathBuf,
    pub epochs: usize,
    pub nodes: usize,
    pub planted_bursts: usize,
}

#[derive(Serialize)]
struct TruthBody<'a> {
    epochs: usize,
    nodes: usize,
    series_sha256: String,
    truth: &'a GroundTruth,
}

/// Generate a synthetic series into `out/series.csv` with `out/truth.json`.
pub fn gen_data(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<GenSummary> {
    let mut spec = GenSpec::load(spec_path)?;
    if let Some(s) = seed {
        spec.reseed(s);
    }
    let generated = match &spec {
        GenSpec::Single(s) => synth::generate(s),
        GenSpec::Mixed { regimes } => synth::mixed_regime(regimes),
    }
    .in_module("synth")?;
    let csv = dmcsv::to_dm_csv(&generated.series);
    let series_path = out.join("series.csv");
    crate::write_file(&series_path, csv.as_bytes())?;
    let spec_hash = sha256_hex(&serde_json::to_vec(&spec).expect("spec serializes"));
    let prov = Provenance::new("gen", spec_hash, spec.seed());
    let truth_path = out.join("truth.json");
    let body = TruthBody {
        epochs: generated.series.len(),
        nodes: generated.series.nodes(),
        series_sha256: sha256_hex(csv.as_bytes()),
        truth: &generated.truth,
    };
    report::write_json(&truth_path, TRUTH_SCHEMA, &prov, &spec, &body)?;
    Ok(GenSummary {
        series: series_path,
        truth: truth_path,
        epochs: generated.series.len(),
        nodes: generated.series.nodes(),
        planted_bursts: generated.truth.bursts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    DmCsv,
    Long,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub output: PathBuf,
    pub epochs: usize,
    pub nodes: usize,
    pub missing_cells: usize,
}

/// Validate an input file and rewrite it as dm-csv.
pub fn ingest(
    input: &Path,
    format: InputFormat,
    nodes: Option<usize>,
    granularity_minutes: u32,
    out: &Path,
) -> Result<IngestSummary> {
    let series = match format {
        InputFormat::DmCsv => dmcsv::load_series(input)?,
        InputFormat::Long => dmcsv::load_long(input, nodes, granularity_minutes)?,
    };
    if let Some(n) = nodes
        && n != series.nodes() {
            return Err(Error::format(input, format!("file has {} nodes, --nodes says {n}", series.nodes())));
        }
    dmcsv::save_series(out, &series)?;
    let n = series.nodes();
    let missing = (0..series.len())
        .flat_map(|t| (0..n * n).map(move |od| (t, od)))
        .filter(|&(t, od)| !series.is_present(t, od))
        .count();
    Ok(IngestSummary { output: out.to_path_buf(), epochs: series.len(), nodes: n, missing_cells: missing })
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsBody {
    pub data_sha256: String,
    pub stats: BurstStats,
}

/// Burst statistics of the configured series, plus its burst indicators.
pub fn stats(ctx: &Context) -> Result<StatsBody> {
    let (series, sha) = ctx.load_data()?;
    let det = BurstDetector::new(ctx.config.threshold).in_module("preprocess")?;
    let w = ctx.config.window;
    let st = burst_stats(&series, w, &det).in_module("preprocess")?;
    let split = split_burst(&series, w, &det).in_module("preprocess")?;
    let body = StatsBody { data_sha256: sha, stats: st };
    let prov = ctx.provenance("stats");
    report::write_json(&ctx.report_dir.join("stats.json"), STATS_SCHEMA, &prov, &ctx.config, &body)?;
    crate::write_file(
        &ctx.report_dir.join("bursts.csv"),
        dmcsv::to_burst_csv(&split.bursts, series.granularity_minutes()).as_bytes(),
    )?;
    Ok(body)
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberTraining {
    pub model_id: String,
    pub validation_mae: f64,
    pub calibration: tubo_core::selection::Calibration,
    pub summary: tubo_core::models::TrainSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoolTraining {
    pub name: String,
    pub clip: bool,
    pub classifier_degenerate: bool,
    pub empty_pairs: Vec<usize>,
    pub members: Vec<MemberTraining>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainBody {
    pub training_hash: String,
    pub manifest_hash: String,
    pub train_epochs: usize,
    pub pools: Vec<PoolTraining>,
}

fn pool_name(clip: bool) -> &'static str {
    if clip { "clipped" } else { "unclipped" }
}

fn describe_pool(pool: &TrainedPool) -> PoolTraining {
    PoolTraining {
        name: pool_name(pool.clip).to_string(),
        clip: pool.clip,
        classifier_degenerate: pool.classifier.degenerate,
        empty_pairs: pool.empty_pairs.clone(),
        members: pool
            .models
            .iter()
            .zip(&pool.validation_mae)
            .map(|(m, &mae)| MemberTraining {
                model_id: m.model_id.clone(),
                validation_mae: mae,
                calibration: pool.calibration.get(&m.model_id).copied().unwrap_or(tubo_core::selection::Calibration::IDENTITY),
                summary: m.summary.clone(),
            })
            .collect(),
    }
}

/// Train the clipped and unclipped pools on the training split and persist
/// them with a manifest.
pub fn train(ctx: &Context) -> Result<TrainBody> {
    let (series, sha) = ctx.load_data()?;
    let (train, _) = series.split(ctx.config.split()).in_module("series")?;
    let dir = ctx.models_dir();
    let mut entries = Vec::new();
    let mut pools = Vec::new();
    for clip in [true, false] {
        let pool = train_pool(&train, &ctx.config.pool_config(clip)).in_module("pipeline")?;
        entries.push(persist::save_pool(&dir, pool_name(clip), &pool)?);
        pools.push(describe_pool(&pool));
    }
    let training_hash = ctx.config.training_hash(&sha);
    let manifest = Manifest {
        format: persist::MANIFEST_FORMAT.to_string(),
        tool_version: report::VERSION.to_string(),
        training_hash: training_hash.clone(),
        seed: ctx.config.seed,
        pools: entries,
    };
    let manifest_hash = persist::save_manifest(&dir, &manifest)?;
    let body = TrainBody { training_hash: training_hash.clone(), manifest_hash, train_epochs: train.len(), pools };
    let prov = ctx.provenance("train").with_training_hash(training_hash);
    report::write_json(&ctx.report_dir.join("train.json"), TRAIN_SCHEMA, &prov, &ctx.config, &body)?;
    Ok(body)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberScore {
    pub model_id: String,
    pub validation_mae: f64,
    /// Gated test MAE when this member forecasts every window.
    pub test_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClippingPair {
    pub model_id: String,
    pub mae_clipped: Option<f64>,
    pub mae_unclipped: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineScore {
    pub name: String,
    pub model_id: Option<String>,
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Correlation {
    Computed { entries: Vec<CorrelationEntry> },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluateBody {
    pub training_hash: String,
    pub primary_pool: String,
    pub gating: bool,
    pub train_epochs: usize,
    pub test_epochs: usize,
    pub metrics: MetricsReport,
    pub members: Vec<MemberScore>,
    pub best_member: Option<String>,
    pub worst_member: Option<String>,
    /// Selector MAE over the best member's test MAE.
    pub regret: Option<f64>,
    pub regret_bound: Option<f64>,
    /// Unclipped pool, ungated; the forecasts `te-sim` compares against.
    pub baselines: Vec<BaselineScore>,
    pub clipping: Vec<ClippingPair>,
    pub correlation: Correlation,
    pub calibration: CalibrationMap,
    pub self_checks: Vec<Check>,
}

impl EvaluateBody {
    pub fn failed_checks(&self) -> Vec<&Check> {
        self.self_checks.iter().filter(|c| !c.passed).collect()
    }
}

fn member_maes(
    series: &DmSeries,
    start: usize,
    pool: &TrainedPool,
    gating: bool,
    detector: &BurstDetector,
) -> Result<Vec<Option<f64>>> {
    (0..pool.models.len())
        .map(|i| {
            let cfg = OnlineConfig { strategy: Strategy::Single(i), gating, passes: 1 };
            let out = run_online(series, start, pool, &cfg).in_module("pipeline")?;
            Ok(evaluate(&out, series, pool.window, detector).in_module("pipeline")?.mae)
        })
        .collect()
}

fn nan_if_none(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::NAN)
}

/// Invariants of the online run, recomputed independently of the pipeline.
pub fn outcome_checks(
    outcomes: &[ForecastOutcome],
    series: &DmSeries,
    start: usize,
    pool: &TrainedPool,
    gating: bool,
    metrics: &MetricsReport,
) -> Vec<Check> {
    let n = series.nodes();
    let mut checks = Vec::new();

    let aligned = outcomes.len() == series.len() - start
        && outcomes.iter().enumerate().all(|(i, o)| o.epoch == series.epoch(start + i) && o.nodes == n);
    checks.push(Check::new(
        "outcomes-cover-test-split",
        aligned,
        format!("{} outcomes for {} test epochs", outcomes.len(), series.len() - start),
    ));

    let mut bad_argmin = 0;
    for o in outcomes {
        if let Some(r) = &o.selection {
            let scores: Vec<f64> = r.scores.iter().map(|s| s.score).collect();
            let ok = argmin(&scores) == Some(r.chosen_index)
                && pool.models.get(r.chosen_index).is_some_and(|m| m.model_id == r.chosen);
            bad_argmin += usize::from(!ok);
        }
    }
    checks.push(Check::new("selection-is-argmin", bad_argmin == 0, format!("{bad_argmin} records disagree")));

    let (mut bad_gate, mut bad_stand_in, mut bad_value) = (0, 0, 0);
    for (i, o) in outcomes.iter().enumerate() {
        let target = start + i;
        for od in 0..n * n {
            let diag = od / n == od % n;
            let v = o.values[od];
            if !(v.is_finite() && v >= 0.0) || (diag && v != 0.0) {
                bad_value += 1;
            }
            if diag {
                continue;
            }
            let fallback = o.sources[od] == Source::Fallback;
            if fallback != (gating && o.bursts[od] == 1) {
                bad_gate += 1;
            }
            if fallback {
                let stand_in = (0..target).rev().find_map(|k| series.get(k, od)).unwrap_or(0.0);
                bad_stand_in += usize::from(v != stand_in);
            }
        }
    }
    checks.push(Check::new("gating-consistent", bad_gate == 0, format!("{bad_gate} cells disagree")));
    checks.push(Check::new("fallback-is-last-measurement", bad_stand_in == 0, format!("{bad_stand_in} cells differ")));
    checks.push(Check::new("forecasts-finite-nonnegative", bad_value == 0, format!("{bad_value} bad cells")));

    let (mut sum, mut cnt) = (0.0, 0usize);
    for (i, o) in outcomes.iter().enumerate() {
        for od in (0..n * n).filter(|&od| od / n != od % n && o.sources[od] == Source::Forecast) {
            if let Some(y) = series.get(start + i, od) {
                sum += (o.values[od] - y).abs();
                cnt += 1;
            }
        }
    }
    let recomputed = (cnt > 0).then(|| sum / cnt as f64);
    let mae_ok = match (recomputed, metrics.mae) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * a.abs().max(1.0),
        (None, None) => true,
        _ => false,
    };
    checks.push(Check::new(
        "masked-mae-recomputed",
        mae_ok,
        format!("report {:?}, recomputed {recomputed:?}", metrics.mae),
    ));

    let selected: usize = metrics.selection_ratios.iter().map(|r| r.count).sum();
    let ratio_sum: f64 = metrics.selection_ratios.iter().map(|r| r.ratio).sum();
    let ratios_ok = selected == 0 || (ratio_sum - 1.0).abs() <= 1e-9;
    checks.push(Check::new("selection-ratios-sum-to-one", ratios_ok, format!("sum {ratio_sum}")));
    checks
}

#[derive(Serialize)]
struct CdfRow {
    rank_fraction: f64,
    mae: f64,
}

/// Online evaluation of the trained pools over the test split.
pub fn evaluate_cmd(ctx: &Context) -> Result<EvaluateBody> {
    let cfg = &ctx.config;
    let (series, sha) = ctx.load_data()?;
    let (manifest, primary, companion) = ctx.load_pools(&sha)?;
    let start = ctx.train_len(&series)?;
    let det = BurstDetector::new(primary.threshold).in_module("preprocess")?;
    let w = primary.window;

    let online = OnlineConfig { strategy: Strategy::Tubo, gating: cfg.gating, passes: cfg.passes };
    let outcomes = run_online(&series, start, &primary, &online).in_module("pipeline")?;
    let metrics = evaluate(&outcomes, &series, w, &det).in_module("pipeline")?;

    let primary_maes = member_maes(&series, start, &primary, cfg.gating, &det)?;
    let companion_maes = member_maes(&series, start, &companion, cfg.gating, &det)?;
    let members: Vec<MemberScore> = primary
        .models
        .iter()
        .zip(&primary.validation_mae)
        .zip(&primary_maes)
        .map(|((m, &v), &t)| MemberScore { model_id: m.model_id.clone(), validation_mae: v, test_mae: t })
        .collect();
    let test: Vec<f64> = primary_maes.iter().map(|&m| nan_if_none(m)).collect();
    let best = argmin(&test);
    let worst = argmin(&test.iter().map(|&m| -m).collect::<Vec<_>>());
    let regret = match (metrics.mae, best) {
        (Some(m), Some(b)) if test[b] > 0.0 => Some(m / test[b]),
        _ => None,
    };
    let (clipped_maes, unclipped_maes) =
        if primary.clip { (&primary_maes, &companion_maes) } else { (&companion_maes, &primary_maes) };
    let clipping = primary
        .models
        .iter()
        .enumerate()
        .map(|(i, m)| ClippingPair {
            model_id: m.model_id.clone(),
            mae_clipped: clipped_maes[i],
            mae_unclipped: unclipped_maes[i],
        })
        .collect();

    let baseline_pool = if primary.clip { &companion } else { &primary };
    let single = baseline_pool.best_member();
    let ungated = |strategy| OnlineConfig { strategy, gating: false, passes: cfg.passes };
    let ensemble_out = run_online(&series, start, baseline_pool, &ungated(Strategy::Ensemble)).in_module("pipeline")?;
    let single_out = run_online(&series, start, baseline_pool, &ungated(Strategy::Single(single))).in_module("pipeline")?;
    let baselines = vec![
        BaselineScore {
            name: "ensemble".into(),
            model_id: None,
            mae: evaluate(&ensemble_out, &series, w, &det).in_module("pipeline")?.mae,
        },
        BaselineScore {
            name: "single".into(),
            model_id: Some(baseline_pool.models[single].model_id.clone()),
            mae: evaluate(&single_out, &series, w, &det).in_module("pipeline")?.mae,
        },
    ];

    let correlation = if !cfg.evaluate.correlation {
        Correlation::Skipped { reason: "disabled in config".into() }
    } else {
        let windows = uncertainty_windows(&series, start, &primary, cfg.passes).in_module("selection")?;
        match correlation_report(&windows) {
            Ok(entries) => Correlation::Computed { entries },
            Err(e) => Correlation::Skipped { reason: e.to_string() },
        }
    };

    let mut self_checks = outcome_checks(&outcomes, &series, start, &primary, cfg.gating, &metrics);
    if let Some(bound) = cfg.evaluate.regret_bound {
        let ok = regret.is_some_and(|r| r <= bound);
        self_checks.push(Check::new("selector-regret", ok, format!("regret {regret:?}, bound {bound}")));
        let below_worst = match (metrics.mae, worst) {
            (Some(m), Some(k)) => m < test[k],
            _ => false,
        };
        self_checks.push(Check::new(
            "selector-below-worst-member",
            below_worst,
            format!("selector {:?}, worst {:?}", metrics.mae, worst.map(|k| test[k])),
        ));
    }

    let body = EvaluateBody {
        training_hash: manifest.training_hash.clone(),
        primary_pool: pool_name(primary.clip).to_string(),
        gating: cfg.gating,
        train_epochs: start,
        test_epochs: series.len() - start,
        metrics,
        best_member: best.map(|b| primary.models[b].model_id.clone()),
        worst_member: worst.map(|k| primary.models[k].model_id.clone()),
        members,
        regret,
        regret_bound: cfg.evaluate.regret_bound,
        baselines,
        clipping,
        correlation,
        calibration: primary.calibration.clone(),
        self_checks,
    };

    let dir = &ctx.report_dir;
    let prov = ctx.provenance("evaluate").with_training_hash(manifest.training_hash);
    report::write_json(&dir.join("metrics.json"), EVALUATE_SCHEMA, &prov, cfg, &body)?;
    let cdf = &body.metrics.per_od_mae;
    report::write_csv(
        &dir.join("od_mae_cdf.csv"),
        CDF_SCHEMA,
        &prov,
        cdf.iter().enumerate().map(|(i, &mae)| CdfRow { rank_fraction: (i + 1) as f64 / cdf.len() as f64, mae }),
    )?;
    report::write_csv(&dir.join("selection_ratios.csv"), RATIO_SCHEMA, &prov, &body.metrics.selection_ratios)?;
    report::write_jsonl(&dir.join("selections.jsonl"), outcomes.iter().filter_map(|o| o.selection.as_ref()))?;
    let od = dir.join(OUTCOMES_DIR);
    report::write_jsonl(&od.join(TUBO_OUTCOMES), &outcomes)?;
    report::write_jsonl(&od.join(ENSEMBLE_OUTCOMES), &ensemble_out)?;
    report::write_jsonl(&od.join(SINGLE_OUTCOMES), &single_out)?;

    let failed = body.failed_checks();
    if !failed.is_empty() {
        let names: Vec<&str> = failed.iter().map(|c| c.name.as_str()).collect();
        return Err(Error::SelfCheck(names.join(", ")));
    }
    Ok(body)
}

/// Just what `te-sim` needs from an outcome line.
#[derive(Deserialize)]
struct PlanLine {
    epoch: usize,
    nodes: usize,
    values: Vec<f64>,
}

fn read_plans(path: &Path) -> Result<Vec<DemandMatrix>> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let p: PlanLine = serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                msg: e.to_string(),
            })?;
            DemandMatrix::new(p.nodes, p.epoch, p.values).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    pub mean: f64,
    pub median_latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeBody {
    pub training_hash: String,
    pub objective: Objective,
    pub k: usize,
    pub first_epoch: usize,
    pub epochs: usize,
    pub unreachable_pairs: Vec<usize>,
    pub single_member: String,
    pub summary: Vec<StrategySummary>,
    /// oracle ≤ tubo ≤ min(ensemble, single) ≤ max(ensemble, single) ≤ reactive in median.
    pub ordering_holds: bool,
    pub strategies: Vec<DegradationReport>,
}

#[derive(Serialize)]
struct DegradationRow<'a> {
    strategy: &'a str,
    epoch: usize,
    achieved: f64,
    oracle: f64,
    degradation: f64,
    latency_achieved: f64,
    latency_oracle: f64,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    match xs.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => xs[n / 2],
        n => 0.5 * (xs[n / 2 - 1] + xs[n / 2]),
    }
}

/// Whether medians follow oracle ≤ tubo ≤ min(ensemble, single) ≤
/// max(ensemble, single) ≤ reactive, with the oracle at 0.
pub fn ordering_holds(summary: &[StrategySummary]) -> bool {
    let m = |name: &str| summary.iter().find(|s| s.strategy == name).map(|s| s.median);
    match (m("oracle"), m("tubo"), m("ensemble"), m("single"), m("reactive")) {
        (Some(o), Some(t), Some(e), Some(s), Some(r)) => {
            o.abs() <= ORACLE_TOLERANCE && o <= t && t <= e.min(s) && e.max(s) <= r
        }
        _ => false,
    }
}

/// Throughput degradation of every strategy under each objective.
pub fn te_sim(ctx: &Context) -> Result<Vec<TeBody>> {
    let cfg = &ctx.config;
    let (series, sha) = ctx.load_data()?;
    let (manifest, primary, companion) = ctx.load_pools(&sha)?;
    let topo = topology::load_topology(&ctx.topology_path())?;
    if topo.nodes() != series.nodes() {
        return Err(Error::format(
            ctx.topology_path(),
            format!("{} nodes, series has {}", topo.nodes(), series.nodes()),
        ));
    }
    let start = ctx.train_len(&series)?;
    let available = series.len() - start;
    let horizon = cfg.te.horizon.map_or(available, |h| h.min(available));
    let od = ctx.report_dir.join(OUTCOMES_DIR);
    let load = |file: &str| -> Result<Vec<DemandMatrix>> {
        let mut plans = read_plans(&od.join(file))?;
        if plans.len() != available {
            return Err(Error::format(
                od.join(file),
                format!("{} outcomes for {available} test epochs; rerun evaluate", plans.len()),
            ));
        }
        plans.truncate(horizon);
        Ok(plans)
    };
    let tubo = load(TUBO_OUTCOMES)?;
    let ensemble = load(ENSEMBLE_OUTCOMES)?;
    let single = load(SINGLE_OUTCOMES)?;
    let baseline_pool = if primary.clip { &companion } else { &primary };
    let single_member = baseline_pool.models[baseline_pool.best_member()].model_id.clone();

    let epochs: Vec<usize> = (start..start + horizon).collect();
    let paths = k_shortest_paths(&topo, cfg.te.k);
    let objectives: Vec<Objective> = match cfg.te.objective {
        Some(o) => vec![o],
        None => Objective::ALL.to_vec(),
    };
    let strategies = [
        SweepStrategy::Oracle,
        SweepStrategy::Plan { name: "tubo", plans: &tubo },
        SweepStrategy::Plan { name: "ensemble", plans: &ensemble },
        SweepStrategy::Plan { name: "single", plans: &single },
        SweepStrategy::Reactive,
    ];
    let prov = ctx.provenance("te-sim").with_training_hash(manifest.training_hash.clone());
    let mut out = Vec::new();
    for objective in objectives {
        let reports = degradation_sweep(&strategies, &epochs, &series, &topo, &paths, objective).in_module("te")?;
        let summary: Vec<StrategySummary> = reports
            .iter()
            .map(|r| StrategySummary {
                strategy: r.strategy.clone(),
                median: r.median,
                p5: r.p5,
                p95: r.p95,
                mean: r.mean,
                median_latency: median(&mut r.epochs.iter().map(|e| e.latency_achieved).collect::<Vec<_>>()),
            })
            .collect();
        let body = TeBody {
            training_hash: manifest.training_hash.clone(),
            objective,
            k: cfg.te.k,
            first_epoch: series.epoch(start),
            epochs: horizon,
            unreachable_pairs: paths.unreachable().to_vec(),
            single_member: single_member.clone(),
            ordering_holds: ordering_holds(&summary),
            summary,
            strategies: reports,
        };
        let name = objective.as_str();
        report::write_json(&ctx.report_dir.join(format!("te-{name}.json")), TE_SCHEMA, &prov, cfg, &body)?;
        let rows = body.strategies.iter().flat_map(|r| {
            r.epochs.iter().map(move |e| DegradationRow {
                strategy: &r.strategy,
                epoch: e.epoch,
                achieved: e.achieved,
                oracle: e.oracle,
                degradation: e.degradation,
                latency_achieved: e.latency_achieved,
                latency_oracle: e.latency_oracle,
            })
        });
        report::write_csv(&ctx.report_dir.join(format!("te-{name}-epochs.csv")), DEGRADATION_SCHEMA, &prov, rows)?;
        let oracle = body.summary.iter().find(|s| s.strategy == "oracle").map_or(f64::NAN, |s| s.median);
        if !(oracle.abs() <= ORACLE_TOLERANCE) {
            return Err(Error::SelfCheck(format!("{name}: oracle median degradation {oracle}")));
        }
        out.push(body);
    }
    Ok(out)
}
