//! Experiment orchestration: configs, seeded runs, sweeps and reports.
//!
//! Randomness is keyed so that results depend only on the config:
//!
//! - trial `t` draws from stream `t` of the `(master_seed, "trial")` key, so
//!   every grid point sees the same shocks trial by trial;
//! - vaccination orders draw from `(master_seed, "plan/<strategy>/<metric>")`
//!   and are shared by every fraction, which makes plans nest;
//! - bootstrap errors draw from a stream named after the grid point.
//!
//! Trials are split into fixed batches; each batch reduces to integer counts,
//! so the worker count never changes an output byte.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{build_balance_sheets, calibrate, BalanceSheetSet, CalibrationResult, DistFamily, RiskParams};
use crate::cascade::{CascadeWorkspace, TrialOutcome, OUTCOME_HEADER};
use crate::error::{Error, Result};
use crate::graphgen::{generate_network, load_network, save_network, InterbankNetwork, PowerLawParams};
use crate::immunize::{
    counteractive_order, counteractive_plan_from_order, uniform_order, uniform_plan_from_order,
    CounteractiveOrder, ImmunizationPlan, OrderMetric, Strategy,
};
use crate::metrics::{BootstrapSpec, RiskAggregate, RiskReport, CHI_GRID};
use crate::rng::{keyed_rng, short_hash, StreamKey};
use crate::shocks::{ReturnVector, ShockSampler, SHOCK_DUMP_HEADER};

/// Trials per work item.
const TRIAL_BATCH: u64 = 500;

fn default_k_loss() -> f64 {
    1.0
}

fn default_resamples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_trials: u64,
    /// Fraction of a defaulted borrower's liabilities its lenders lose.
    #[serde(default = "default_k_loss")]
    pub k_loss: f64,
    /// Bootstrap resamples for `E[C]` errors; 0 disables them.
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    pub network: NetworkSource,
    pub risk: RiskSection,
    pub grid: GridConfig,
}

/// Where the fixed network comes from. With both keys set, the file is
/// loaded when it exists and otherwise generated and written there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NetworkSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub beta_exp: f64,
    pub d_avg: f64,
    pub m_max: f64,
    pub n_banks: usize,
    pub seed: u64,
}

impl GenerateSpec {
    pub fn params(&self) -> PowerLawParams {
        PowerLawParams {
            beta_exp: self.beta_exp,
            d_avg: self.d_avg,
            m_max: self.m_max,
            n_banks: self.n_banks,
        }
    }

    pub fn generate(&self) -> Result<InterbankNetwork> {
        generate_network(&self.params(), &mut keyed_rng(self.seed, "network", 0))
    }
}

impl Default for GenerateSpec {
    fn default() -> Self {
        let p = PowerLawParams::default();
        Self {
            beta_exp: p.beta_exp,
            d_avg: p.d_avg,
            m_max: p.m_max,
            n_banks: p.n_banks,
            seed: 1,
        }
    }
}

/// Risk parameters shared by every grid point; `delta_s` and the
/// distribution family come from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSection {
    pub v_r: f64,
    pub delta_r: f64,
    pub theta_lw: f64,
    pub theta_aw: f64,
}

impl RiskSection {
    pub fn with(&self, delta_s: f64, family: DistFamily) -> RiskParams {
        RiskParams {
            v_r: self.v_r,
            delta_r: self.delta_r,
            delta_s,
            theta_lw: self.theta_lw,
            theta_aw: self.theta_aw,
            dist_family: family,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub strategy: Strategy,
    #[serde(default = "default_metric")]
    pub metric: OrderMetric,
}

fn default_metric() -> OrderMetric {
    OrderMetric::Random
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub strategies: Vec<StrategySpec>,
    pub fractions: Vec<f64>,
    pub rho: Vec<f64>,
    pub delta_s: Vec<f64>,
    #[serde(default = "default_chi")]
    pub chi: Vec<f64>,
    #[serde(default = "default_family")]
    pub dist_family: Vec<DistFamily>,
}

fn default_chi() -> Vec<f64> {
    CHI_GRID.to_vec()
}

fn default_family() -> Vec<DistFamily> {
    vec![DistFamily::StudentT]
}

/// 0.00, 0.05, ..., 1.00.
pub fn default_fraction_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

impl ExperimentConfig {
    /// Baseline parameters on a generated N = 1000 network.
    pub fn baseline() -> Self {
        let n = 1000;
        let rp = RiskParams::baseline(n);
        Self {
            master_seed: 2014,
            n_trials: 100_000,
            k_loss: 1.0,
            bootstrap_resamples: 1000,
            network: NetworkSource {
                path: None,
                generate: Some(GenerateSpec::default()),
            },
            risk: RiskSection {
                v_r: rp.v_r,
                delta_r: rp.delta_r,
                theta_lw: rp.theta_lw,
                theta_aw: rp.theta_aw,
            },
            grid: GridConfig {
                strategies: vec![
                    StrategySpec { strategy: Strategy::Uniform, metric: OrderMetric::Pagerank },
                    StrategySpec { strategy: Strategy::Uniform, metric: OrderMetric::InDegree },
                    StrategySpec { strategy: Strategy::Uniform, metric: OrderMetric::Random },
                    StrategySpec { strategy: Strategy::Counteractive, metric: OrderMetric::EdgeBetweenness },
                    StrategySpec { strategy: Strategy::Counteractive, metric: OrderMetric::Random },
                ],
                fractions: default_fraction_grid(),
                rho: vec![0.6],
                delta_s: vec![rp.delta_s],
                chi: CHI_GRID.to_vec(),
                dist_family: vec![DistFamily::StudentT],
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config and resolves a relative network path against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(p) = &cfg.network.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.network.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.k_loss) {
            return bad(format!("k_loss must lie in [0, 1], got {}", self.k_loss));
        }
        if self.network.path.is_none() && self.network.generate.is_none() {
            return bad("network needs `path`, `generate`, or both".into());
        }
        let g = &self.grid;
        for (name, empty) in [
            ("strategies", g.strategies.is_empty()),
            ("fractions", g.fractions.is_empty()),
            ("rho", g.rho.is_empty()),
            ("delta_s", g.delta_s.is_empty()),
            ("chi", g.chi.is_empty()),
            ("dist_family", g.dist_family.is_empty()),
        ] {
            if empty {
                return bad(format!("grid.{name} must not be empty"));
            }
        }
        for s in &g.strategies {
            if !s.metric.valid_for(s.strategy) {
                return bad(format!(
                    "metric {} is not valid for strategy {}",
                    s.metric.name(),
                    s.strategy.name()
                ));
            }
        }
        if let Some(f) = g.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return bad(format!("fraction {f} outside [0, 1]"));
        }
        if let Some(r) = g.rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return bad(format!("rho {r} outside [0, 1]"));
        }
        if let Some(c) = g.chi.iter().find(|c| !(**c >= 1.0)) {
            return bad(format!("chi {c} below 1"));
        }
        for &ds in &g.delta_s {
            for &fam in &g.dist_family {
                self.risk.with(ds, fam).validate()?;
            }
        }
        Ok(())
    }

    /// Every grid point, strategies outermost and fractions innermost.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let g = &self.grid;
        let mut points = Vec::new();
        for s in &g.strategies {
            for &family in &g.dist_family {
                for &delta_s in &g.delta_s {
                    for &rho in &g.rho {
                        for &fraction in &g.fractions {
                            points.push(GridPoint {
                                strategy: s.strategy,
                                metric: s.metric,
                                fraction,
                                rho,
                                delta_s,
                                dist_family: family,
                            });
                        }
                    }
                }
            }
        }
        points
    }

    pub fn resolve_network(&self) -> Result<InterbankNetwork> {
        match (&self.network.path, &self.network.generate) {
            (Some(p), None) => load_network(p),
            (Some(p), Some(_)) if p.exists() => load_network(p),
            (Some(p), Some(spec)) => {
                let g = spec.generate()?;
                if let Some(dir) = p.parent() {
                    fs::create_dir_all(dir)?;
                }
                save_network(&g, p)?;
                Ok(g)
            }
            (None, Some(spec)) => spec.generate(),
            (None, None) => Err(Error::Config("no network source".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub strategy: Strategy,
    pub metric: OrderMetric,
    pub fraction: f64,
    pub rho: f64,
    pub delta_s: f64,
    pub dist_family: DistFamily,
}

impl GridPoint {
    pub fn baseline(delta_s: f64) -> Self {
        Self {
            strategy: Strategy::None,
            metric: OrderMetric::Random,
            fraction: 0.0,
            rho: 0.0,
            delta_s,
            dist_family: DistFamily::StudentT,
        }
    }

    /// Filesystem-safe identifier, unique per grid point.
    pub fn id(&self) -> String {
        format!(
            "{}_{}_f{}_rho{}_ds{}_{}",
            self.strategy.name(),
            self.metric.name(),
            self.fraction,
            self.rho,
            self.delta_s,
            self.dist_family.name()
        )
    }

    fn stream(&self) -> u64 {
        let h = short_hash(self.id().as_bytes());
        u64::from_str_radix(&h, 16).expect("hex digest")
    }
}

/// Everything a grid point needs, cached across points.
pub struct ExperimentContext {
    pub config: ExperimentConfig,
    pub network: InterbankNetwork,
    pub network_hash: String,
    uniform_orders: Mutex<HashMap<OrderMetric, Vec<usize>>>,
    pair_orders: Mutex<HashMap<OrderMetric, CounteractiveOrder>>,
    models: Mutex<HashMap<(u64, DistFamily), (CalibrationResult, BalanceSheetSet)>>,
}

impl ExperimentContext {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let network = config.resolve_network()?;
        Ok(Self::with_network(config, network))
    }

    pub fn with_network(config: ExperimentConfig, network: InterbankNetwork) -> Self {
        let network_hash = network.content_hash();
        Self {
            config,
            network,
            network_hash,
            uniform_orders: Mutex::new(HashMap::new()),
            pair_orders: Mutex::new(HashMap::new()),
            models: Mutex::new(HashMap::new()),
        }
    }

    pub fn plan_seed(&self, strategy: Strategy, metric: OrderMetric) -> u64 {
        let domain = format!("plan/{}/{}", strategy.name(), metric.name());
        keyed_rng(self.config.master_seed, &domain, 0).random()
    }

    pub fn calibration(&self, point: &GridPoint) -> Result<(CalibrationResult, BalanceSheetSet)> {
        let key = (point.delta_s.to_bits(), point.dist_family);
        if let Some(hit) = self.models.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let rp = self.config.risk.with(point.delta_s, point.dist_family);
        let cal = calibrate(&rp)?;
        let sheets = build_balance_sheets(&self.network, &cal, &rp);
        self.models
            .lock()
            .expect("cache lock")
            .insert(key, (cal, sheets.clone()));
        Ok((cal, sheets))
    }

    pub fn plan(&self, point: &GridPoint) -> Result<ImmunizationPlan> {
        let seed = self.plan_seed(point.strategy, point.metric);
        match point.strategy {
            Strategy::None => Ok(ImmunizationPlan::none()),
            Strategy::Uniform => {
                let mut cache = self.uniform_orders.lock().expect("cache lock");
                if let std::collections::hash_map::Entry::Vacant(slot) = cache.entry(point.metric) {
                    slot.insert(uniform_order(&self.network, point.metric, seed)?);
                }
                uniform_plan_from_order(&self.network, &cache[&point.metric], point.metric, point.fraction, seed)
            }
            Strategy::Counteractive => {
                let mut cache = self.pair_orders.lock().expect("cache lock");
                if let std::collections::hash_map::Entry::Vacant(slot) = cache.entry(point.metric) {
                    slot.insert(counteractive_order(&self.network, point.metric, seed)?);
                }
                counteractive_plan_from_order(
                    &self.network,
                    &cache[&point.metric],
                    point.metric,
                    point.fraction,
                    point.rho,
                    seed,
                )
            }
        }
    }

    fn prepare(&self, point: &GridPoint) -> Result<(ShockSampler, BalanceSheetSet, ImmunizationPlan)> {
        let (cal, sheets) = self.calibration(point)?;
        let plan = self.plan(point)?;
        let rp = self.config.risk.with(point.delta_s, point.dist_family);
        let sampler = ShockSampler::new(&plan, &rp, &cal, self.network.n_banks())?;
        Ok((sampler, sheets, plan))
    }

    /// Runs `n_trials` trials for one grid point.
    pub fn run_point(&self, point: &GridPoint, pool: &rayon::ThreadPool) -> Result<PointResult> {
        let wrap = |e: Error| Error::GridPoint {
            point: point.id(),
            source: Box::new(e),
        };
        let (sampler, sheets, _) = self.prepare(point).map_err(wrap)?;
        let n = self.network.n_banks();
        let n_trials = self.config.n_trials;
        let k_loss = self.config.k_loss;
        let trial_key = StreamKey::new(self.config.master_seed, "trial");
        let batches = n_trials.div_ceil(TRIAL_BATCH);
        let g = &self.network;

        let aggregate = pool.install(|| {
            (0..batches)
                .into_par_iter()
                .map(|b| {
                    let mut agg = RiskAggregate::new(n);
                    let mut ws = CascadeWorkspace::new(n);
                    let mut rv = ReturnVector { eps: Vec::with_capacity(n), trial_id: 0 };
                    let end = ((b + 1) * TRIAL_BATCH).min(n_trials);
                    for t in b * TRIAL_BATCH..end {
                        let mut rng = trial_key.stream(t);
                        sampler.sample_into(&mut rng, &mut rv.eps);
                        rv.trial_id = t;
                        agg.record(&ws.run(&sheets, g, &rv, k_loss));
                    }
                    agg
                })
                .reduce(|| RiskAggregate::new(n), |a, b| a.merge(&b))
        });
        let report = self.report_for(point, &aggregate);
        Ok(PointResult {
            point: *point,
            aggregate,
            report,
            master_seed: self.config.master_seed,
            network_hash: self.network_hash.clone(),
        })
    }

    fn report_for(&self, point: &GridPoint, aggregate: &RiskAggregate) -> RiskReport {
        let bootstrap = BootstrapSpec {
            resamples: self.config.bootstrap_resamples,
            seed: self.config.master_seed,
            stream: point.stream(),
        };
        aggregate.report(&self.config.grid.chi, &bootstrap)
    }

    /// Sequential per-trial outcomes for the first `n` trials, plus their
    /// shock vectors when `with_shocks` is set. Same streams as
    /// [`run_point`](Self::run_point).
    pub fn trial_stream(
        &self,
        point: &GridPoint,
        n: u64,
        with_shocks: bool,
    ) -> Result<(Vec<TrialOutcome>, Vec<ReturnVector>)> {
        let (sampler, sheets, _) = self.prepare(point)?;
        let trial_key = StreamKey::new(self.config.master_seed, "trial");
        let mut ws = CascadeWorkspace::new(self.network.n_banks());
        let mut outcomes = Vec::new();
        let mut shocks = Vec::new();
        for t in 0..n.min(self.config.n_trials) {
            let rv = sampler.sample(&mut trial_key.stream(t), t);
            outcomes.push(ws.run(&sheets, &self.network, &rv, self.config.k_loss));
            if with_shocks {
                shocks.push(rv);
            }
        }
        Ok((outcomes, shocks))
    }
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: GridPoint,
    pub aggregate: RiskAggregate,
    pub report: RiskReport,
    pub master_seed: u64,
    pub network_hash: String,
}

impl PointResult {
    pub fn histogram_csv(&self) -> String {
        let comment = format!(
            "point={} n_trials={} master_seed={} network={}",
            self.point.id(),
            self.aggregate.n_trials(),
            self.master_seed,
            self.network_hash
        );
        self.aggregate.histogram.to_csv(&comment)
    }
}

/// One `sweep.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub metric: OrderMetric,
    pub fraction: f64,
    pub rho: f64,
    pub delta_s: f64,
    pub dist_family: DistFamily,
    pub chi: f64,
    pub expected_cost: f64,
    pub expected_cost_se: f64,
    pub crisis_freq: f64,
    pub crisis_freq_se: f64,
    pub crisis_size_mean: Option<f64>,
    pub disintegration_freq: f64,
    pub disintegration_freq_se: f64,
    pub mean_defaults: f64,
    pub n_trials: u64,
    pub master_seed: u64,
}

pub fn sweep_rows(results: &[PointResult]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for r in results {
        let p = &r.point;
        let rep = &r.report;
        for (k, &chi) in rep.chi_values.iter().enumerate() {
            rows.push(SweepRow {
                strategy: p.strategy,
                metric: p.metric,
                fraction: p.fraction,
                rho: p.rho,
                delta_s: p.delta_s,
                dist_family: p.dist_family,
                chi,
                expected_cost: rep.expected_cost[k],
                expected_cost_se: rep.expected_cost_se[k],
                crisis_freq: rep.crisis_freq,
                crisis_freq_se: rep.crisis_freq_se,
                crisis_size_mean: rep.crisis_size_mean,
                disintegration_freq: rep.disintegration_freq,
                disintegration_freq_se: rep.disintegration_freq_se,
                mean_defaults: rep.mean_defaults,
                n_trials: rep.n_trials,
                master_seed: r.master_seed,
            });
        }
    }
    rows
}

pub fn write_sweep_csv(path: &Path, comment: &str, rows: &[SweepRow]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf_string(&mut buf), "# {comment}").ok();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

// `csv::Writer` wants bytes; the comment line is written through this shim.
fn buf_string(buf: &mut Vec<u8>) -> impl std::fmt::Write + '_ {
    struct Shim<'a>(&'a mut Vec<u8>);
    impl std::fmt::Write for Shim<'_> {
        fn write_str(&mut self, s: &str) -> std::fmt::Result {
            self.0.extend_from_slice(s.as_bytes());
            Ok(())
        }
    }
    Shim(buf)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub results: Vec<PointResult>,
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        sweep_rows(&self.results)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepProgress {
    pub computed: usize,
    pub resumed: usize,
}

/// Runs every grid point, writing `points/<id>.json` after each one so an
/// interrupted sweep resumes where it stopped, then writes `sweep.csv`,
/// `histogram_<id>.csv` and `report.json` in grid order.
pub fn run_sweep(ctx: &ExperimentContext, out_dir: &Path, workers: usize) -> Result<(SweepResult, SweepProgress)> {
    let points_dir = out_dir.join("points");
    fs::create_dir_all(&points_dir)?;
    let pool = thread_pool(workers)?;
    let mut progress = SweepProgress::default();
    let mut results = Vec::new();
    for point in ctx.config.grid_points() {
        let file = points_dir.join(format!("{}.json", point.id()));
        if let Some(done) = load_point(&file, ctx, &point) {
            progress.resumed += 1;
            results.push(done);
            continue;
        }
        let result = ctx.run_point(&point, &pool)?;
        let tmp = file.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(&result)?)?;
        fs::rename(&tmp, &file)?;
        progress.computed += 1;
        results.push(result);
    }
    let sweep = SweepResult { results };
    write_outputs(ctx, out_dir, &sweep)?;
    Ok((sweep, progress))
}

fn load_point(file: &Path, ctx: &ExperimentContext, point: &GridPoint) -> Option<PointResult> {
    let bytes = fs::read(file).ok()?;
    let stored: PointResult = serde_json::from_slice(&bytes).ok()?;
    let fresh = stored.point.id() == point.id()
        && stored.master_seed == ctx.config.master_seed
        && stored.network_hash == ctx.network_hash
        && stored.aggregate.n_trials() == ctx.config.n_trials;
    if !fresh {
        return None;
    }
    // Reports are rebuilt so config-level settings (chi grid, bootstrap)
    // always match the current run.
    let report = ctx.report_for(point, &stored.aggregate);
    Some(PointResult { report, ..stored })
}

fn write_outputs(ctx: &ExperimentContext, out_dir: &Path, sweep: &SweepResult) -> Result<()> {
    let comment = format!(
        "contagion sweep network={} n_banks={} k_loss={} n_trials={} master_seed={}",
        ctx.network_hash,
        ctx.network.n_banks(),
        ctx.config.k_loss,
        ctx.config.n_trials,
        ctx.config.master_seed
    );
    write_sweep_csv(&out_dir.join("sweep.csv"), &comment, &sweep.rows())?;
    for r in &sweep.results {
        fs::write(out_dir.join(format!("histogram_{}.csv", r.point.id())), r.histogram_csv())?;
    }
    let reports: Vec<PointReport> = sweep.results.iter().map(PointReport::from).collect();
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&reports)?)?;
    Ok(())
}

/// `report.json` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub point: GridPoint,
    pub master_seed: u64,
    pub network_hash: String,
    #[serde(flatten)]
    pub report: RiskReport,
}

impl From<&PointResult> for PointReport {
    fn from(r: &PointResult) -> Self {
        Self {
            point: r.point,
            master_seed: r.master_seed,
            network_hash: r.network_hash.clone(),
            report: r.report.clone(),
        }
    }
}

/// Writes a single point's `report.json` and histogram.
pub fn write_point_outputs(out_dir: &Path, result: &PointResult) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&PointReport::from(result))?,
    )?;
    fs::write(
        out_dir.join(format!("histogram_{}.csv", result.point.id())),
        result.histogram_csv(),
    )?;
    Ok(())
}

pub fn write_outcome_stream(path: &Path, outcomes: &[TrialOutcome]) -> Result<()> {
    let mut s = String::from(OUTCOME_HEADER);
    s.push('\n');
    for (t, o) in outcomes.iter().enumerate() {
        s.push_str(&o.csv_row(t as u64));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_shock_dump(path: &Path, shocks: &[ReturnVector]) -> Result<()> {
    let mut s = String::from(SHOCK_DUMP_HEADER);
    s.push('\n');
    for rv in shocks {
        rv.write_csv_rows(&mut s);
    }
    fs::write(path, s)?;
    Ok(())
}

/// Minimum-over-fractions cost ratio for one `chi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeCostPoint {
    pub chi: f64,
    pub uniform_min: f64,
    pub counteractive_min: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeCostCurve {
    pub rho: f64,
    pub delta_s: f64,
    pub dist_family: DistFamily,
    pub points: Vec<RelativeCostPoint>,
    /// First `chi` at which the ratio reaches 1, linearly interpolated.
    pub chi_star: Option<f64>,
}

/// Ratio of the best PageRank-ordered uniform cost to the best randomly
/// ordered counteractive cost, per `chi`, for one `(rho, delta_s, family)`
/// slice of a sweep.
pub fn relative_cost_curve(
    rows: &[SweepRow],
    chi_grid: &[f64],
    rho: f64,
    delta_s: f64,
    dist_family: DistFamily,
) -> Result<RelativeCostCurve> {
    let slice = |strategy: Strategy, metric: OrderMetric| {
        rows.iter()
            .filter(move |r| {
                r.strategy == strategy
                    && r.metric == metric
                    && r.rho == rho
                    && r.delta_s == delta_s
                    && r.dist_family == dist_family
            })
            .collect::<Vec<_>>()
    };
    let uniform = slice(Strategy::Uniform, OrderMetric::Pagerank);
    let counter = slice(Strategy::Counteractive, OrderMetric::Random);
    let fractions = |rs: &[&SweepRow]| {
        let mut f: Vec<u64> = rs.iter().map(|r| r.fraction.to_bits()).collect();
        f.sort_unstable();
        f.dedup();
        f
    };
    if uniform.is_empty() || counter.is_empty() {
        return Err(Error::MissingCoverage(format!(
            "need uniform/pagerank and counteractive/random rows at rho={rho} delta_s={delta_s}"
        )));
    }
    if fractions(&uniform) != fractions(&counter) {
        return Err(Error::MissingCoverage(
            "uniform and counteractive rows cover different fraction grids".into(),
        ));
    }
    let min_cost = |rs: &[&SweepRow], chi: f64| -> Result<f64> {
        let costs: Vec<f64> = rs.iter().filter(|r| r.chi == chi).map(|r| r.expected_cost).collect();
        if costs.len() != fractions(rs).len() {
            return Err(Error::MissingCoverage(format!("chi={chi} missing for some fractions")));
        }
        Ok(costs.into_iter().fold(f64::INFINITY, f64::min))
    };
    let mut points = Vec::new();
    for &chi in chi_grid {
        let u = min_cost(&uniform, chi)?;
        let c = min_cost(&counter, chi)?;
        points.push(RelativeCostPoint {
            chi,
            uniform_min: u,
            counteractive_min: c,
            ratio: u / c,
        });
    }
    let chi_star = crossing(&points);
    Ok(RelativeCostCurve {
        rho,
        delta_s,
        dist_family,
        points,
        chi_star,
    })
}

/// Linear interpolation of the first place the ratio reaches 1.
pub fn crossing(points: &[RelativeCostPoint]) -> Option<f64> {
    if let Some(p) = points.first() {
        if p.ratio == 1.0 {
            return Some(p.chi);
        }
    }
    points.windows(2).find_map(|w| {
        let (a, b) = (w[0].ratio - 1.0, w[1].ratio - 1.0);
        if b == 0.0 {
            Some(w[1].chi)
        } else if a.signum() != b.signum() && a.is_finite() && b.is_finite() {
            Some(w[0].chi + (w[1].chi - w[0].chi) * a / (a - b))
        } else {
            None
        }
    })
}

/// Relative-cost curves for every `(rho, delta_s, family)` slice that has
/// both strategies.
pub fn relative_cost_curves(rows: &[SweepRow]) -> Vec<RelativeCostCurve> {
    let mut chis: Vec<f64> = rows.iter().map(|r| r.chi).collect();
    chis.sort_by(f64::total_cmp);
    chis.dedup();
    let mut slices: Vec<(f64, f64, DistFamily)> = Vec::new();
    for r in rows {
        let key = (r.rho, r.delta_s, r.dist_family);
        if !slices.contains(&key) {
            slices.push(key);
        }
    }
    slices
        .into_iter()
        .filter_map(|(rho, ds, fam)| relative_cost_curve(rows, &chis, rho, ds, fam).ok())
        .collect()
}

/// Plain-text table of crisis frequency and size by strategy and fraction.
pub fn crisis_table(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:<17} {:>8} {:>5} {:>10} {:>12} {:>11} {:>14}",
        "strategy", "metric", "fraction", "rho", "delta_s", "crisis_freq", "crisis_size", "disintegration"
    );
    let mut seen = Vec::new();
    for r in rows {
        let key = (r.strategy, r.metric, r.fraction.to_bits(), r.rho.to_bits(), r.delta_s.to_bits(), r.dist_family);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let size = r.crisis_size_mean.map_or("-".to_string(), |s| format!("{s:.1}"));
        let _ = writeln!(
            out,
            "{:<14} {:<17} {:>8.2} {:>5} {:>10.2e} {:>12.5} {:>11} {:>14.5}",
            r.strategy.name(),
            r.metric.name(),
            r.fraction,
            r.rho,
            r.delta_s,
            r.crisis_freq,
            size,
            r.disintegration_freq
        );
    }
    out
}
