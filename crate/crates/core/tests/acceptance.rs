//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::time::Instant;

use common::*;
use contagion::balance::{build_balance_sheets, calibrate, solve_unit_networth, solve_vs};
use contagion::cascade::cascade_oracle;
use contagion::centrality::gscc_present_in;
use contagion::graphgen::{compute_chung_lu_constants, expected_in_degree, load_network};
use contagion::harness::{
    run_sweep, thread_pool, ExperimentConfig, ExperimentContext, GridPoint, NetworkSource, StrategySpec,
};
use contagion::rng::{keyed_rng, StreamKey};
use contagion::shocks::ShockSampler;
use contagion::{run_cascade, DistFamily, ImmunizationPlan, OrderMetric, PowerLawParams, RiskParams, Strategy};
use rand::Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn calibration() -> Outcome {
    let start = Instant::now();
    let rp = RiskParams::baseline(1000);
    let w_o = solve_unit_networth(&rp).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;
    for (delta_s, want) in [(1e-3, 10.930), (5e-4, 15.687), (1e-4, 47.296)] {
        let v = solve_vs(w_o, delta_s, DistFamily::StudentT).map_err(|e| e.to_string())?;
        ok &= (v - want).abs() <= 0.01;
        notes.push(format!("v_s({delta_s})={v:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 1.0;
    let msg = format!("{} in {secs:.3}s", notes.join(" "));
    if ok { Ok(msg) } else { Err(msg) }
}

fn chung_lu_constants() -> Outcome {
    let p = PowerLawParams::default();
    let (c, i0) = compute_chung_lu_constants(&p).map_err(|e| e.to_string())?;
    let i0_want = 1000.0 * 0.02f64.powf(1.5);
    let m = expected_in_degree(c, p.beta_exp, i0);
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    let msg = format!("c={c} i0={i0:.6} m={m}");
    if rel(c, 100.0) < 1e-12 && rel(i0, i0_want) < 1e-12 && rel(m, 50.0) < 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn balance_ratios() -> Outcome {
    let g = load_network(&canonical_network_path()).map_err(|e| e.to_string())?;
    let rp = RiskParams::baseline(g.n_banks());
    let s = build_balance_sheets(&g, &calibrate(&rp).map_err(|e| e.to_string())?, &rp);
    let mut worst = 0.0f64;
    for i in 0..g.n_banks() {
        let err = if s.l[i] > 0.0 {
            (s.w[i] / (s.a[i] + s.l[i]) - 0.1).abs() / 0.1
        } else {
            (s.w[i] / s.a[i] - 1.0 / 7.0).abs() * 7.0
        };
        worst = worst.max(err);
    }
    let msg = format!("{} banks, worst relative error {worst:.1e}", g.n_banks());
    if worst < 1e-14 { Ok(msg) } else { Err(msg) }
}

fn pair_sampler(rho: f64) -> Result<(ShockSampler, f64), String> {
    let rp = RiskParams::baseline(1000);
    let cal = calibrate(&rp).map_err(|e| e.to_string())?;
    let plan = ImmunizationPlan::with_pairs(2, vec![(0, 1)], rho);
    let sampler = ShockSampler::new(&plan, &rp, &cal, 2).map_err(|e| e.to_string())?;
    Ok((sampler, cal.w_o))
}

fn shock_moments() -> Outcome {
    let (sampler, _) = pair_sampler(0.6)?;
    let key = StreamKey::new(17, "acceptance-moments");
    let n = 100_000;
    let mut eps = Vec::new();
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for t in 0..n {
        sampler.sample_into(&mut key.stream(t), &mut eps);
        let (x, y) = (eps[0], eps[1]);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let nf = n as f64;
    let vx = sxx / nf - (sx / nf).powi(2);
    let vy = syy / nf - (sy / nf).powi(2);
    let corr = (sxy / nf - sx * sy / nf / nf) / (vx * vy).sqrt();
    let target = 5.0 / 3.0;
    let ok = (corr + 0.6).abs() <= 0.01 && (vx / target - 1.0).abs() < 0.02 && (vy / target - 1.0).abs() < 0.02;
    let msg = format!("corr={corr:.4} var=({vx:.4}, {vy:.4}) target var {target:.4}");
    if ok { Ok(msg) } else { Err(msg) }
}

fn pair_survival() -> Outcome {
    let (sampler, w_o) = pair_sampler(1.0)?;
    let delta = RiskParams::baseline(1000).delta_r;
    let key = StreamKey::new(18, "acceptance-survival");
    let n = 1_000_000u64;
    let mut eps = Vec::new();
    let mut both = 0u64;
    for t in 0..n {
        sampler.sample_into(&mut key.stream(t), &mut eps);
        if eps[0] >= -w_o && eps[1] >= -w_o {
            both += 1;
        }
    }
    let p = both as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let want = 1.0 - 2.0 * delta;
    let independent = (1.0 - delta).powi(2);
    let gap = independent - p;
    let ok = (p - want).abs() < 3.0 * se && (gap - delta * delta).abs() < 3.0 * se;
    let msg = format!(
        "P(both)={p:.6} vs 1-2d={want:.6} (se {se:.1e}); (1-d)^2 - P = {gap:.2e} vs d^2 = {:.2e}",
        delta * delta
    );
    if ok { Ok(msg) } else { Err(msg) }
}

fn cascade_correctness() -> Outcome {
    let mut rng = keyed_rng(19, "acceptance-cascade", 0);
    let n = 10_000;
    for t in 0..n {
        let inst = random_cascade_instance(&mut rng);
        let out = run_cascade(&inst.sheets, &inst.g, &inst.rv, inst.k_loss).map_err(|e| e.to_string())?;
        cascade_oracle(&inst.sheets, &inst.g, &inst.rv, inst.k_loss, &out)
            .map_err(|e| format!("instance {t}: {e}"))?;
        cascade_properties(&inst, &mut rng).map_err(|e| format!("instance {t}: {e}"))?;
    }
    Ok(format!("{n}/{n} instances agree; monotonicity and k=0 hold"))
}

fn gscc_exactness() -> Outcome {
    let mut rng = keyed_rng(20, "acceptance-gscc", 0);
    let n = 1000;
    let mut with_cycle = 0;
    for t in 0..n {
        let banks = rng.random_range(1..=50);
        let g = random_digraph(banks, rng.random_range(0.0..3.0) / banks as f64, &mut rng);
        let alive = vec![true; banks];
        let got = gscc_present_in(&g, &alive);
        if got != scc_oracle(&g, &alive) {
            return Err(format!("digraph {t} disagrees: {:?}", g.edges()));
        }
        with_cycle += got as usize;
    }
    Ok(format!("{n}/{n} digraphs agree ({with_cycle} with a cycle)"))
}

fn desk_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::baseline();
    cfg.n_trials = 10_000;
    cfg.bootstrap_resamples = 200;
    cfg.network = NetworkSource {
        path: Some(canonical_network_path()),
        generate: None,
    };
    cfg
}

fn qualitative() -> Outcome {
    let start = Instant::now();
    let cfg = desk_config();
    let delta_s = 1.0 / (10.0 * 1000.0);
    let ctx = ExperimentContext::new(cfg).map_err(|e| e.to_string())?;
    let pool = thread_pool(0).map_err(|e| e.to_string())?;
    let run = |strategy, metric, fraction| {
        let point = GridPoint {
            strategy,
            metric,
            fraction,
            rho: 0.6,
            delta_s,
            dist_family: DistFamily::StudentT,
        };
        ctx.run_point(&point, &pool).map(|r| r.report).map_err(|e| e.to_string())
    };
    let pr_02 = run(Strategy::Uniform, OrderMetric::Pagerank, 0.2)?;
    let rnd_02 = run(Strategy::Uniform, OrderMetric::Random, 0.2)?;
    let (pr_lo, pr_hi) = pr_02.crisis_interval();
    let (rnd_lo, rnd_hi) = rnd_02.crisis_interval();
    let a = pr_02.crisis_freq < rnd_02.crisis_freq && pr_hi < rnd_lo;

    let uni_0 = run(Strategy::Uniform, OrderMetric::Pagerank, 0.0)?;
    let uni_04 = run(Strategy::Uniform, OrderMetric::Pagerank, 0.4)?;
    let size = |r: &contagion::RiskReport| r.crisis_size_mean.unwrap_or(f64::NAN);
    let b = size(&uni_04) > size(&uni_0);

    let mut c = true;
    let mut c_notes = Vec::new();
    for metric in [OrderMetric::Random, OrderMetric::EdgeBetweenness] {
        let f0 = run(Strategy::Counteractive, metric, 0.0)?;
        let f6 = run(Strategy::Counteractive, metric, 0.6)?;
        c &= f6.crisis_freq < f0.crisis_freq;
        c_notes.push(format!("{} {:.4} -> {:.4}", metric.name(), f0.crisis_freq, f6.crisis_freq));
    }
    let msg = format!(
        "(a) pagerank {:.4} [{pr_lo:.4}, {pr_hi:.4}] vs random {:.4} [{rnd_lo:.4}, {rnd_hi:.4}]: {}; \
         (b) crisis size {:.1} -> {:.1}: {}; (c) {}: {}; {:.1}s",
        pr_02.crisis_freq,
        rnd_02.crisis_freq,
        verdict(a),
        size(&uni_0),
        size(&uni_04),
        verdict(b),
        c_notes.join(", "),
        verdict(c),
        start.elapsed().as_secs_f64()
    );
    if a && b && c { Ok(msg) } else { Err(msg) }
}

fn verdict(ok: bool) -> &'static str {
    if ok { "ok" } else { "failed" }
}

fn determinism() -> Outcome {
    let mut cfg = desk_config();
    cfg.n_trials = 2000;
    cfg.grid.fractions = vec![0.0, 0.3];
    cfg.grid.strategies = vec![
        StrategySpec { strategy: Strategy::Uniform, metric: OrderMetric::Pagerank },
        StrategySpec { strategy: Strategy::Counteractive, metric: OrderMetric::EdgeBetweenness },
        StrategySpec { strategy: Strategy::Counteractive, metric: OrderMetric::Random },
    ];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for workers in [1, 8] {
        let out = dir.path().join(format!("w{workers}"));
        let ctx = ExperimentContext::new(cfg.clone()).map_err(|e| e.to_string())?;
        run_sweep(&ctx, &out, workers).map_err(|e| e.to_string())?;
        let read = |f: &str| fs::read(out.join(f)).map_err(|e| e.to_string());
        outputs.push((read("sweep.csv")?, read("report.json")?));
    }
    let same = outputs[0] == outputs[1];
    let msg = format!(
        "sweep.csv {} bytes, report.json {} bytes, identical: {same}",
        outputs[0].0.len(),
        outputs[0].1.len()
    );
    if same { Ok(msg) } else { Err(msg) }
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("calibration", calibration),
        ("chung-lu constants", chung_lu_constants),
        ("balance-sheet ratios", balance_ratios),
        ("shock moments", shock_moments),
        ("pair survival", pair_survival),
        ("cascade correctness", cascade_correctness),
        ("gscc exactness", gscc_exactness),
        ("qualitative desk-scale", qualitative),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
