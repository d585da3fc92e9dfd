//! Fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::PathBuf;

use contagion::balance::{build_balance_sheets, calibrate};
use contagion::{BalanceSheetSet, InterbankNetwork, ReturnVector, RiskParams};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::Rng;

pub fn canonical_network_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/network.txt")
}

pub fn random_digraph(n: usize, p: f64, rng: &mut impl Rng) -> InterbankNetwork {
    let mut edges = Vec::new();
    for b in 0..n {
        for l in 0..n {
            if b != l && rng.random_bool(p.min(1.0)) {
                edges.push((b, l));
            }
        }
    }
    InterbankNetwork::from_edges(n, edges).unwrap()
}

/// True iff some strongly connected component has two or more banks.
pub fn scc_oracle(g: &InterbankNetwork, alive: &[bool]) -> bool {
    let mut dg = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..g.n_banks()).map(|_| dg.add_node(())).collect();
    for &(b, l) in g.edges() {
        if alive[b] && alive[l] {
            dg.add_edge(nodes[b], nodes[l], ());
        }
    }
    tarjan_scc(&dg).iter().any(|c| c.len() >= 2)
}

/// A small network with baseline-calibrated sheets, a shock vector that mixes
/// fundamental defaults, near misses and gains, and a loss fraction.
pub struct CascadeInstance {
    pub g: InterbankNetwork,
    pub sheets: BalanceSheetSet,
    pub rv: ReturnVector,
    pub k_loss: f64,
}

pub fn random_cascade_instance(rng: &mut impl Rng) -> CascadeInstance {
    let n = rng.random_range(1..=12);
    let g = random_digraph(n, rng.random_range(0.05..0.6), rng);
    let rp = RiskParams::baseline(1000);
    let cal = calibrate(&rp).unwrap();
    let sheets = build_balance_sheets(&g, &cal, &rp);
    let w_o = cal.w_o;
    let eps = (0..n)
        .map(|_| match rng.random_range(0..4) {
            0 => -w_o * rng.random_range(1.0..3.0),
            1 => -w_o * rng.random_range(0.0..1.0),
            2 => w_o * rng.random_range(0.0..2.0),
            // Exactly zero shocks can sit on a default threshold, where the
            // two formulations round differently.
            _ => w_o * rng.random_range(-1e-6..1e-6),
        })
        .collect();
    let k_loss = match rng.random_range(0..3) {
        0 => 1.0,
        1 => 0.0,
        _ => rng.random_range(0.0..1.0),
    };
    CascadeInstance {
        g,
        sheets,
        rv: ReturnVector { eps, trial_id: 0 },
        k_loss,
    }
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

/// Monotonicity and zero-loss checks for one instance. Returns a failure
/// description.
pub fn cascade_properties(inst: &CascadeInstance, rng: &mut impl Rng) -> Result<(), String> {
    use contagion::run_cascade;
    let CascadeInstance { g, sheets, rv, k_loss } = inst;
    let base = run_cascade(sheets, g, rv, *k_loss).unwrap();

    let zero = run_cascade(sheets, g, rv, 0.0).unwrap();
    if zero.defaulted != zero.fundamental || zero.fundamental != base.fundamental {
        return Err(format!("k=0 spread beyond fundamentals: {:?}", zero.defaulted));
    }

    let worse: Vec<f64> = rv.eps.iter().map(|&x| x - rng.random_range(0.0..sheets.w_o)).collect();
    let worse = run_cascade(sheets, g, &ReturnVector { eps: worse, trial_id: 0 }, *k_loss).unwrap();
    if !is_subset(&base.defaulted, &worse.defaulted) {
        return Err("lower returns removed a default".into());
    }

    let more = (k_loss + rng.random_range(0.0..=1.0 - k_loss)).min(1.0);
    let more = run_cascade(sheets, g, rv, more).unwrap();
    if !is_subset(&base.defaulted, &more.defaulted) {
        return Err("a larger loss fraction removed a default".into());
    }
    Ok(())
}
