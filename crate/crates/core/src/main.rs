use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use contagion::harness::{
    crisis_table, read_sweep_csv, relative_cost_curves, run_sweep, thread_pool, write_outcome_stream,
    write_point_outputs, write_shock_dump, ExperimentConfig, ExperimentContext, GenerateSpec, GridPoint,
};
use contagion::balance::calibrate;
use contagion::graphgen::save_network;
use contagion::{DistFamily, OrderMetric, Result, Strategy};

#[derive(Parser)]
#[command(name = "contagion", version, about = "Monte Carlo interbank default contagion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Baseline parameters when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of trials per grid point.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::baseline(),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(t) = self.trials {
            cfg.n_trials = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a power-law network and write it as an edge list.
    GenNet {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Network seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_banks: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print w_o, l_bar and v_s for every delta_s in the grid.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Run a single grid point.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "uniform")]
        strategy: StrategyArg,
        #[arg(long, value_enum, default_value = "pagerank")]
        metric: MetricArg,
        #[arg(long, default_value_t = 0.0)]
        fraction: f64,
        #[arg(long, default_value_t = 0.6)]
        rho: f64,
        /// Defaults to the first grid value.
        #[arg(long)]
        delta_s: Option<f64>,
        #[arg(long, value_enum, default_value = "student-t")]
        family: FamilyArg,
        /// Also write per-trial outcomes for the first N trials.
        #[arg(long, default_value_t = 0)]
        dump_outcomes: u64,
        /// Also write shock vectors for the first N trials.
        #[arg(long, default_value_t = 0)]
        dump_shocks: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full grid, resuming from any finished points in --out.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a finished sweep directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StrategyArg {
    None,
    Uniform,
    Counteractive,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MetricArg {
    Pagerank,
    InDegree,
    Eigenvector,
    NodeBetweenness,
    Restrepo,
    EdgeBetweenness,
    Random,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FamilyArg {
    StudentT,
    Normal,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::None => Strategy::None,
            StrategyArg::Uniform => Strategy::Uniform,
            StrategyArg::Counteractive => Strategy::Counteractive,
        }
    }
}

impl From<MetricArg> for OrderMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Pagerank => OrderMetric::Pagerank,
            MetricArg::InDegree => OrderMetric::InDegree,
            MetricArg::Eigenvector => OrderMetric::Eigenvector,
            MetricArg::NodeBetweenness => OrderMetric::NodeBetweenness,
            MetricArg::Restrepo => OrderMetric::Restrepo,
            MetricArg::EdgeBetweenness => OrderMetric::EdgeBetweenness,
            MetricArg::Random => OrderMetric::Random,
        }
    }
}

impl From<FamilyArg> for DistFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::StudentT => DistFamily::StudentT,
            FamilyArg::Normal => DistFamily::Normal,
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenNet { config, seed, n_banks, out } => {
            let mut spec = match config {
                Some(p) => ExperimentConfig::load(&p)?.network.generate.unwrap_or_default(),
                None => GenerateSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(n) = n_banks {
                spec.n_banks = n;
            }
            let g = spec.generate()?;
            ensure_parent(&out)?;
            save_network(&g, &out)?;
            println!(
                "wrote {} ({} banks, {} edges, hash {})",
                out.display(),
                g.n_banks(),
                g.n_edges(),
                g.content_hash()
            );
        }
        Command::Calibrate { common } => {
            let cfg = common.config()?;
            println!("dist_family,delta_s,w_o,l_bar,v_s");
            for &fam in &cfg.grid.dist_family {
                for &ds in &cfg.grid.delta_s {
                    let cal = calibrate(&cfg.risk.with(ds, fam))?;
                    println!("{},{},{},{},{}", fam.name(), ds, cal.w_o, cal.l_bar, cal.v_s);
                }
            }
        }
        Command::Run {
            common,
            strategy,
            metric,
            fraction,
            rho,
            delta_s,
            family,
            dump_outcomes,
            dump_shocks,
            out,
        } => {
            let cfg = common.config()?;
            let point = GridPoint {
                strategy: strategy.into(),
                metric: metric.into(),
                fraction,
                rho,
                delta_s: delta_s.unwrap_or(cfg.grid.delta_s[0]),
                dist_family: family.into(),
            };
            if !point.metric.valid_for(point.strategy) {
                return Err(contagion::Error::Config(format!(
                    "metric {} is not valid for strategy {}",
                    point.metric.name(),
                    point.strategy.name()
                )));
            }
            let ctx = ExperimentContext::new(cfg)?;
            let result = ctx.run_point(&point, &thread_pool(common.workers)?)?;
            write_point_outputs(&out, &result)?;
            let dump = dump_outcomes.max(dump_shocks);
            if dump > 0 {
                let (outcomes, shocks) = ctx.trial_stream(&point, dump, dump_shocks > 0)?;
                if dump_outcomes > 0 {
                    let n = dump_outcomes.min(outcomes.len() as u64) as usize;
                    write_outcome_stream(&out.join("outcomes.csv"), &outcomes[..n])?;
                }
                if dump_shocks > 0 {
                    let n = dump_shocks.min(shocks.len() as u64) as usize;
                    write_shock_dump(&out.join("shocks.csv"), &shocks[..n])?;
                }
            }
            fs::write(out.join("plan.csv"), ctx.plan(&point)?.to_csv())?;
            let r = &result.report;
            println!("point {}", point.id());
            println!("trials {}  mean defaults {:.4}", r.n_trials, r.mean_defaults);
            println!("crisis freq {:.6} +/- {:.6}", r.crisis_freq, r.crisis_freq_se);
            for (chi, c) in r.chi_values.iter().zip(&r.expected_cost) {
                println!("E[C] chi={chi}: {c:.6}");
            }
        }
        Command::Sweep { common, out } => {
            let cfg = common.config()?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), cfg.to_toml()?)?;
            let ctx = ExperimentContext::new(cfg)?;
            let (sweep, progress) = run_sweep(&ctx, &out, common.workers)?;
            println!(
                "{} grid points ({} computed, {} resumed) -> {}",
                sweep.results.len(),
                progress.computed,
                progress.resumed,
                out.join("sweep.csv").display()
            );
        }
        Command::Report { out } => {
            let rows = read_sweep_csv(&out.join("sweep.csv"))?;
            print!("{}", crisis_table(&rows));
            let curves = relative_cost_curves(&rows);
            let mut csv = String::from("rho,delta_s,dist_family,chi,uniform_min,counteractive_min,ratio\n");
            for c in &curves {
                println!(
                    "\nrelative cost rho={} delta_s={} {}: chi* = {}",
                    c.rho,
                    c.delta_s,
                    c.dist_family.name(),
                    c.chi_star.map_or("none".into(), |x| format!("{x:.3}"))
                );
                for p in &c.points {
                    println!("  chi={:<5} ratio={:.4}", p.chi, p.ratio);
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        c.rho,
                        c.delta_s,
                        c.dist_family.name(),
                        p.chi,
                        p.uniform_min,
                        p.counteractive_min,
                        p.ratio
                    ));
                }
            }
            fs::write(out.join("relative_cost.csv"), csv)?;
            fs::write(out.join("relative_cost.json"), serde_json::to_string_pretty(&curves)?)?;
        }
    }
    Ok(())
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}
