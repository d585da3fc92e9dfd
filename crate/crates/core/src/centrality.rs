//! Bank and edge rankings, plus the GSCC presence test.
//!
//! All scores are computed on the project-wide adjacency `A[i][j] = 1` iff
//! bank `i` borrows from bank `j`; paths follow borrower -> lender edges.

use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::InterbankNetwork;
use crate::rng::keyed_rng;

/// Relative gap below which two scores count as tied when ranking.
pub const TIE_TOLERANCE: f64 = 1e-10;

const BRANDES_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Pagerank,
    InDegree,
    Eigenvector,
    NodeBetweenness,
    RestrepoIndex,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Pagerank => "pagerank",
            Metric::InDegree => "in_degree",
            Metric::Eigenvector => "eigenvector",
            Metric::NodeBetweenness => "node_betweenness",
            Metric::RestrepoIndex => "restrepo_index",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityScores {
    pub metric: Metric,
    pub scores: Vec<f64>,
    /// Bank ids, highest score first.
    pub order: Vec<usize>,
    pub tie_seed: u64,
    /// Set when the dominant eigenvalue is zero (acyclic graph) and the
    /// eigenvector-based scores are all zero.
    pub degenerate: bool,
}

impl CentralityScores {
    fn new(metric: Metric, scores: Vec<f64>, tie_seed: u64, degenerate: bool) -> Self {
        let order = ranked_order(&scores, tie_seed);
        Self {
            metric,
            scores,
            order,
            tie_seed,
            degenerate,
        }
    }

    /// `bank_id,score,rank` with a `#` header naming the metric and seed.
    pub fn to_csv(&self) -> String {
        let mut rank = vec![0usize; self.scores.len()];
        for (r, &bank) in self.order.iter().enumerate() {
            rank[bank] = r + 1;
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# metric={} tie_seed={}",
            self.metric.name(),
            self.tie_seed
        );
        out.push_str("bank_id,score,rank\n");
        for (bank, score) in self.scores.iter().enumerate() {
            let _ = writeln!(out, "{bank},{score:e},{}", rank[bank]);
        }
        out
    }
}

/// Descending order with ties shuffled.
///
/// Scores are sorted, then runs of neighbours within [`TIE_TOLERANCE`]
/// (relative) are treated as one tie group and shuffled with a generator
/// keyed by `tie_seed`.
pub fn ranked_order(scores: &[f64], tie_seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut rng = keyed_rng(tie_seed, "ties", 0);
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && tied(scores[order[end - 1]], scores[order[end]]) {
            end += 1;
        }
        order[start..end].shuffle(&mut rng);
        start = end;
    }
    order
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankParams {
    pub alpha: f64,
    pub beta_add: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            beta_add: 1.0,
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

/// `y_i = alpha * sum_j A_ij y_j / k_j^out + beta_add`, unnormalized.
///
/// A lender `j` of `i` always has `k_j^out >= 1`; banks with no borrowers
/// never appear in a sum.
pub fn pagerank(g: &InterbankNetwork, params: &PageRankParams, tie_seed: u64) -> Result<CentralityScores> {
    let n = g.n_banks();
    let inv_out: Vec<f64> = (0..n)
        .map(|j| match g.out_degree(j) {
            0 => 0.0,
            k => 1.0 / k as f64,
        })
        .collect();
    let step = |y: &[f64], i: usize| {
        let s: f64 = g.lenders_of(i).iter().map(|&j| y[j] * inv_out[j]).sum();
        params.alpha * s + params.beta_add
    };

    let mut y = vec![params.beta_add; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..params.max_iter {
        for (i, slot) in next.iter_mut().enumerate() {
            *slot = step(&y, i);
        }
        residual = y
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut y, &mut next);
        if residual < params.tol {
            return Ok(CentralityScores::new(Metric::Pagerank, y, tie_seed, false));
        }
    }
    Err(Error::NoConvergence {
        what: "pagerank",
        iterations: params.max_iter,
        residual,
    })
}

pub fn in_degree_scores(g: &InterbankNetwork, tie_seed: u64) -> CentralityScores {
    let scores = (0..g.n_banks()).map(|i| g.in_degree(i) as f64).collect();
    CentralityScores::new(Metric::InDegree, scores, tie_seed, false)
}

const EIGEN_TOL: f64 = 1e-12;
const EIGEN_MAX_ITER: usize = 200_000;

/// Dominant eigenvector of `A` (`transpose = false`) or `A^T`, by power
/// iteration on `A + I` so periodic graphs converge. Returns `(lambda, v)`
/// with `v` L2-normalized and non-negative, or `None` when `A` is nilpotent.
fn dominant_eigenvector(g: &InterbankNetwork, transpose: bool) -> Result<Option<(f64, Vec<f64>)>> {
    let n = g.n_banks();
    let alive = vec![true; n];
    if !gscc_present_in(g, &alive) {
        return Ok(None);
    }
    let neighbours = |i: usize| if transpose { g.borrowers_of(i) } else { g.lenders_of(i) };
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..EIGEN_MAX_ITER {
        for (i, slot) in next.iter_mut().enumerate() {
            *slot = v[i] + neighbours(i).iter().map(|&j| v[j]).sum::<f64>();
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        next.iter_mut().for_each(|x| *x /= norm);
        residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if residual < EIGEN_TOL {
            // Rayleigh-style estimate from A v against v.
            let av: f64 = (0..n)
                .map(|i| v[i] * neighbours(i).iter().map(|&j| v[j]).sum::<f64>())
                .sum();
            return Ok(Some((av, v)));
        }
    }
    Err(Error::NoConvergence {
        what: "eigenvector power iteration",
        iterations: EIGEN_MAX_ITER,
        residual,
    })
}

pub fn eigenvector_scores(g: &InterbankNetwork, tie_seed: u64) -> Result<CentralityScores> {
    Ok(match dominant_eigenvector(g, false)? {
        Some((_, v)) => CentralityScores::new(Metric::Eigenvector, v, tie_seed, false),
        None => CentralityScores::new(Metric::Eigenvector, vec![0.0; g.n_banks()], tie_seed, true),
    })
}

/// Dynamical importance `v_i u_i / (v . u)` from the right (`u`) and left
/// (`v`) dominant eigenvectors.
pub fn restrepo_index(g: &InterbankNetwork, tie_seed: u64) -> Result<CentralityScores> {
    let n = g.n_banks();
    let degenerate = || CentralityScores::new(Metric::RestrepoIndex, vec![0.0; n], tie_seed, true);
    let (Some((_, u)), Some((_, v))) = (dominant_eigenvector(g, false)?, dominant_eigenvector(g, true)?)
    else {
        return Ok(degenerate());
    };
    let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    if dot <= f64::EPSILON {
        return Ok(degenerate());
    }
    let scores = u.iter().zip(&v).map(|(a, b)| a * b / dot).collect();
    Ok(CentralityScores::new(Metric::RestrepoIndex, scores, tie_seed, false))
}

/// Largest eigenvalue of `A` restricted to `alive`, by power iteration on
/// `A + I` to tolerance `tol`. Zero when the restriction is nilpotent.
pub fn spectral_radius(g: &InterbankNetwork, alive: &[bool], tol: f64, max_iter: usize) -> Result<f64> {
    if !gscc_present_in(g, alive) {
        return Ok(0.0);
    }
    let n = g.n_banks();
    let mut v: Vec<f64> = alive.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    let mut next = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        for i in 0..n {
            next[i] = if alive[i] {
                v[i] + g.lenders_of(i).iter().filter(|&&j| alive[j]).map(|&j| v[j]).sum::<f64>()
            } else {
                0.0
            };
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        let prev = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let estimate = norm / prev - 1.0;
        next.iter_mut().for_each(|x| *x /= norm);
        std::mem::swap(&mut v, &mut next);
        if (estimate - lambda).abs() < tol {
            return Ok(estimate);
        }
        lambda = estimate;
    }
    Err(Error::NoConvergence {
        what: "spectral radius",
        iterations: max_iter,
        residual: f64::NAN,
    })
}

/// True iff the largest adjacency eigenvalue of the network minus `removed`
/// is at least 1.
///
/// For a 0/1 matrix without self-loops the spectral radius is either 0
/// (nilpotent) or at least 1, and it is 0 exactly when no directed cycle
/// survives. The test therefore follows the support of the power iterates
/// `A^k 1` on the surviving banks: the supports shrink monotonically, an
/// empty support means `A` is nilpotent, and a support that stops shrinking
/// is closed under "has a surviving lender inside", which forces a cycle.
pub fn gscc_present(g: &InterbankNetwork, removed: &[usize]) -> bool {
    let mut alive = vec![true; g.n_banks()];
    for &r in removed {
        alive[r] = false;
    }
    gscc_present_in(g, &alive)
}

/// [`gscc_present`] with the survivors given as a mask.
pub fn gscc_present_in(g: &InterbankNetwork, alive: &[bool]) -> bool {
    let mut support: Vec<usize> = (0..g.n_banks()).filter(|&i| alive[i]).collect();
    let mut in_support = alive.to_vec();
    let mut next = Vec::with_capacity(support.len());
    loop {
        if support.is_empty() {
            return false;
        }
        next.clear();
        next.extend(
            support
                .iter()
                .copied()
                .filter(|&i| g.lenders_of(i).iter().any(|&j| in_support[j])),
        );
        if next.len() == support.len() {
            return true;
        }
        for &i in &support {
            in_support[i] = false;
        }
        for &i in &next {
            in_support[i] = true;
        }
        std::mem::swap(&mut support, &mut next);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    /// `(borrower, lender)`.
    pub edge: (usize, usize),
    pub betweenness: f64,
}

/// Brandes accumulation over every source; returns `(node, edge)` betweenness
/// with edges indexed like `g.edges()`.
///
/// Sources are split into fixed chunks and partial sums are added in chunk
/// order, so the result does not depend on the thread count.
fn brandes(g: &InterbankNetwork) -> (Vec<f64>, Vec<f64>) {
    let n = g.n_banks();
    let m = g.n_edges();
    // Edge index of the k-th lender of v is the CSR position, which matches
    // the sorted edge list.
    let mut first_edge = vec![0usize; n + 1];
    for v in 0..n {
        first_edge[v + 1] = first_edge[v] + g.in_degree(v);
    }
    let sources: Vec<usize> = (0..n).filter(|&s| g.in_degree(s) > 0).collect();
    let partials: Vec<(Vec<f64>, Vec<f64>)> = sources
        .par_chunks(BRANDES_CHUNK)
        .map(|chunk| {
            let mut node = vec![0.0; n];
            let mut edge = vec![0.0; m];
            let mut ws = BrandesWorkspace::new(n);
            for &s in chunk {
                ws.accumulate(g, &first_edge, s, &mut node, &mut edge);
            }
            (node, edge)
        })
        .collect();
    let mut node = vec![0.0; n];
    let mut edge = vec![0.0; m];
    for (pn, pe) in partials {
        node.iter_mut().zip(pn).for_each(|(a, b)| *a += b);
        edge.iter_mut().zip(pe).for_each(|(a, b)| *a += b);
    }
    (node, edge)
}

struct BrandesWorkspace {
    dist: Vec<i64>,
    sigma: Vec<f64>,
    delta: Vec<f64>,
    stack: Vec<usize>,
    queue: std::collections::VecDeque<usize>,
}

impl BrandesWorkspace {
    fn new(n: usize) -> Self {
        Self {
            dist: vec![-1; n],
            sigma: vec![0.0; n],
            delta: vec![0.0; n],
            stack: Vec::with_capacity(n),
            queue: std::collections::VecDeque::with_capacity(n),
        }
    }

    fn accumulate(
        &mut self,
        g: &InterbankNetwork,
        first_edge: &[usize],
        s: usize,
        node: &mut [f64],
        edge: &mut [f64],
    ) {
        self.dist[s] = 0;
        self.sigma[s] = 1.0;
        self.queue.push_back(s);
        while let Some(v) = self.queue.pop_front() {
            self.stack.push(v);
            for &w in g.lenders_of(v) {
                if self.dist[w] < 0 {
                    self.dist[w] = self.dist[v] + 1;
                    self.queue.push_back(w);
                }
                if self.dist[w] == self.dist[v] + 1 {
                    self.sigma[w] += self.sigma[v];
                }
            }
        }
        // Predecessors are recovered from distances instead of stored lists.
        for &w in self.stack.iter().rev() {
            for (k, &x) in g.lenders_of(w).iter().enumerate() {
                if self.dist[x] == self.dist[w] + 1 {
                    let c = self.sigma[w] / self.sigma[x] * (1.0 + self.delta[x]);
                    edge[first_edge[w] + k] += c;
                    self.delta[w] += c;
                }
            }
            if w != s {
                node[w] += self.delta[w];
            }
        }
        for &v in &self.stack {
            self.dist[v] = -1;
            self.sigma[v] = 0.0;
            self.delta[v] = 0.0;
        }
        self.stack.clear();
    }
}

pub fn node_betweenness(g: &InterbankNetwork, tie_seed: u64) -> CentralityScores {
    let (node, _) = brandes(g);
    CentralityScores::new(Metric::NodeBetweenness, node, tie_seed, false)
}

pub fn edge_betweenness(g: &InterbankNetwork) -> Vec<EdgeScore> {
    let (_, edge) = brandes(g);
    g.edges()
        .iter()
        .zip(edge)
        .map(|(&e, b)| EdgeScore { edge: e, betweenness: b })
        .collect()
}

/// Scores for `metric`, with ties broken by `tie_seed`.
pub fn scores_for(g: &InterbankNetwork, metric: Metric, tie_seed: u64) -> Result<CentralityScores> {
    match metric {
        Metric::Pagerank => pagerank(g, &PageRankParams::default(), tie_seed),
        Metric::InDegree => Ok(in_degree_scores(g, tie_seed)),
        Metric::Eigenvector => eigenvector_scores(g, tie_seed),
        Metric::NodeBetweenness => Ok(node_betweenness(g, tie_seed)),
        Metric::RestrepoIndex => restrepo_index(g, tie_seed),
    }
}

/// Picks uniformly among the edges whose betweenness ties the maximum.
pub fn argmax_edge<R: Rng + ?Sized>(scores: &[EdgeScore], rng: &mut R) -> Option<(usize, usize)> {
    let max = scores.iter().map(|e| e.betweenness).fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<(usize, usize)> = scores
        .iter()
        .filter(|e| tied(e.betweenness, max))
        .map(|e| e.edge)
        .collect();
    top.choose(rng).copied()
}
