//! Scale-free directed interbank networks.
//!
//! Expected in-degrees follow `d_in(i) = c * i^(-1/(beta-1))` evaluated at
//! `i0 + k` for `k = 0..N`; out-degrees are a random permutation of the same
//! sequence. Every ordered pair is then wired independently with probability
//! `d_out(lender) * d_in(borrower) / (d * N)`.
//!
//! Edge convention used everywhere in the crate: the stored pair
//! `(borrower, lender)` means "borrower borrows from lender", which is
//! `A[borrower][lender] = 1`. The in-degree of a bank is its number of
//! lenders and its out-degree is its number of borrowers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Power-law parameters. `beta_exp` is the degree exponent, not the PageRank
/// additive constant.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawParams {
    pub beta_exp: f64,
    pub d_avg: f64,
    pub m_max: f64,
    pub n_banks: usize,
}

impl Default for PowerLawParams {
    fn default() -> Self {
        Self {
            beta_exp: 2.5,
            d_avg: 3.0,
            m_max: 50.0,
            n_banks: 1000,
        }
    }
}

impl PowerLawParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.beta_exp > 2.0) {
            return bad(format!("beta_exp must exceed 2, got {}", self.beta_exp));
        }
        if !(self.d_avg >= 1.0) {
            return bad(format!("d_avg must be at least 1, got {}", self.d_avg));
        }
        if !(self.m_max >= self.d_avg) {
            return bad(format!(
                "m_max ({}) must be at least d_avg ({})",
                self.m_max, self.d_avg
            ));
        }
        if self.n_banks == 0 {
            return bad("n_banks must be positive".into());
        }
        let max_prob = self.m_max * self.m_max / (self.d_avg * self.n_banks as f64);
        if !(max_prob < 1.0) {
            return bad(format!(
                "maximum wiring probability m^2/(dN) = {max_prob} must be below 1"
            ));
        }
        Ok(())
    }
}

/// Expected degree sequences plus the two constants they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeSequences {
    pub d_in: Vec<f64>,
    pub d_out: Vec<f64>,
    pub c_scale: f64,
    pub i0_offset: f64,
}

/// Returns `(c, i0)`.
///
/// `c = (beta-2)/(beta-1) * d * N^(1/(beta-1))` and
/// `i0 = N * ((d/m) * (beta-2)/(beta-1))^(beta-1)`, which makes
/// `c * i0^(-1/(beta-1)) = m`.
pub fn compute_chung_lu_constants(p: &PowerLawParams) -> Result<(f64, f64)> {
    p.validate()?;
    let ratio = (p.beta_exp - 2.0) / (p.beta_exp - 1.0);
    let n = p.n_banks as f64;
    let c = ratio * p.d_avg * n.powf(1.0 / (p.beta_exp - 1.0));
    let i0 = n * ((p.d_avg / p.m_max) * ratio).powf(p.beta_exp - 1.0);
    Ok((c, i0))
}

/// Expected in-degree at continuous index `i`.
pub fn expected_in_degree(c: f64, beta_exp: f64, i: f64) -> f64 {
    c * i.powf(-1.0 / (beta_exp - 1.0))
}

pub fn build_degree_sequences<R: Rng + ?Sized>(
    p: &PowerLawParams,
    rng: &mut R,
) -> Result<DegreeSequences> {
    let (c, i0) = compute_chung_lu_constants(p)?;
    let d_in: Vec<f64> = (0..p.n_banks)
        .map(|k| expected_in_degree(c, p.beta_exp, i0 + k as f64))
        .collect();
    let mut d_out = d_in.clone();
    d_out.shuffle(rng);
    Ok(DegreeSequences {
        d_in,
        d_out,
        c_scale: c,
        i0_offset: i0,
    })
}

/// Wires every ordered pair independently.
///
/// Pairs are visited borrower-major so a fixed RNG state gives a fixed
/// network.
pub fn wire_network<R: Rng + ?Sized>(
    seqs: &DegreeSequences,
    p: &PowerLawParams,
    rng: &mut R,
) -> Result<InterbankNetwork> {
    let n = seqs.d_in.len();
    if seqs.d_out.len() != n {
        return Err(Error::SizeMismatch(format!(
            "d_in has {n} entries, d_out has {}",
            seqs.d_out.len()
        )));
    }
    let norm = p.d_avg * n as f64;
    // The global maxima bound every pair; scan only when that bound fails.
    let max_out = seqs.d_out.iter().copied().fold(0.0, f64::max);
    let max_in = seqs.d_in.iter().copied().fold(0.0, f64::max);
    if max_out * max_in / norm >= 1.0 {
        for lender in 0..n {
            for borrower in (0..n).filter(|&b| b != lender) {
                let prob = seqs.d_out[lender] * seqs.d_in[borrower] / norm;
                if prob >= 1.0 {
                    return Err(Error::WiringProbability {
                        from: lender,
                        to: borrower,
                        prob,
                    });
                }
            }
        }
    }

    let mut edges = Vec::new();
    for borrower in 0..n {
        let din = seqs.d_in[borrower];
        for lender in 0..n {
            if lender == borrower {
                continue;
            }
            let prob = seqs.d_out[lender] * din / norm;
            if prob > 0.0 && rng.random::<f64>() < prob {
                edges.push((borrower, lender));
            }
        }
    }
    InterbankNetwork::from_edges(n, edges)
}

/// Convenience wrapper: sequences then wiring from one RNG.
pub fn generate_network<R: Rng + ?Sized>(
    p: &PowerLawParams,
    rng: &mut R,
) -> Result<InterbankNetwork> {
    let seqs = build_degree_sequences(p, rng)?;
    wire_network(&seqs, p, rng)
}

/// Immutable directed lending network.
///
/// `lenders_of(i)` is row `i` of the adjacency matrix, `borrowers_of(j)` is
/// column `j`.
#[derive(Debug, Clone)]
pub struct InterbankNetwork {
    n_banks: usize,
    edges: Vec<(usize, usize)>,
    lender_offsets: Vec<usize>,
    lender_targets: Vec<usize>,
    borrower_offsets: Vec<usize>,
    borrower_targets: Vec<usize>,
}

impl PartialEq for InterbankNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.n_banks == other.n_banks && self.edges == other.edges
    }
}

impl Eq for InterbankNetwork {}

impl InterbankNetwork {
    /// Builds a network from `(borrower, lender)` pairs, rejecting self-loops,
    /// duplicates and out-of-range ids.
    pub fn from_edges(n_banks: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(b, l) in &edges {
            if b >= n_banks || l >= n_banks {
                return Err(Error::InvalidParameter(format!(
                    "edge ({b}, {l}) out of range for {n_banks} banks"
                )));
            }
            if b == l {
                return Err(Error::InvalidParameter(format!("self-loop at bank {b}")));
            }
        }
        edges.sort_unstable();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_sorted_unique(n_banks, edges))
    }

    fn from_sorted_unique(n_banks: usize, edges: Vec<(usize, usize)>) -> Self {
        let (lender_offsets, lender_targets) = csr(n_banks, edges.iter().copied());
        let (borrower_offsets, borrower_targets) =
            csr(n_banks, edges.iter().map(|&(b, l)| (l, b)));
        Self {
            n_banks,
            edges,
            lender_offsets,
            lender_targets,
            borrower_offsets,
            borrower_targets,
        }
    }

    pub fn empty(n_banks: usize) -> Self {
        Self::from_sorted_unique(n_banks, Vec::new())
    }

    pub fn n_banks(&self) -> usize {
        self.n_banks
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// `(borrower, lender)` pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, borrower: usize, lender: usize) -> bool {
        self.lenders_of(borrower).binary_search(&lender).is_ok()
    }

    /// Banks that `borrower` borrows from (sorted).
    pub fn lenders_of(&self, borrower: usize) -> &[usize] {
        &self.lender_targets[self.lender_offsets[borrower]..self.lender_offsets[borrower + 1]]
    }

    /// Banks that borrow from `lender` (sorted).
    pub fn borrowers_of(&self, lender: usize) -> &[usize] {
        &self.borrower_targets[self.borrower_offsets[lender]..self.borrower_offsets[lender + 1]]
    }

    /// Number of lenders.
    pub fn in_degree(&self, bank: usize) -> usize {
        self.lender_offsets[bank + 1] - self.lender_offsets[bank]
    }

    /// Number of borrowers.
    pub fn out_degree(&self, bank: usize) -> usize {
        self.borrower_offsets[bank + 1] - self.borrower_offsets[bank]
    }

    /// Subgraph on the banks with `keep[i] == true`, ids unchanged.
    pub fn restrict(&self, keep: &[bool]) -> Self {
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|&(b, l)| keep[b] && keep[l])
            .collect();
        Self::from_sorted_unique(self.n_banks, edges)
    }

    /// Canonical edge-list text.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(16 + self.edges.len() * 10);
        let _ = writeln!(out, "n_banks={}", self.n_banks);
        for &(b, l) in &self.edges {
            let _ = writeln!(out, "{b} {l}");
        }
        out
    }

    /// Parses edge-list text. `origin` only labels errors.
    pub fn parse_edge_list(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let n_banks: usize = header
            .strip_prefix("n_banks=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(1, format!("expected `n_banks=<N>`, found `{header}`")))?;

        let mut edges = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut parts = line.split(' ');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(lineno, format!("expected `borrower lender`, found `{line}`")));
            };
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(lineno, format!("invalid bank id `{s}`")))
            };
            let (borrower, lender) = (parse(a)?, parse(b)?);
            if borrower >= n_banks || lender >= n_banks {
                return Err(err(
                    lineno,
                    format!("bank id out of range for n_banks={n_banks}"),
                ));
            }
            if borrower == lender {
                return Err(err(lineno, format!("self-loop at bank {borrower}")));
            }
            if !seen.insert((borrower, lender)) {
                return Err(err(lineno, format!("duplicate edge {borrower} {lender}")));
            }
            edges.push((borrower, lender));
        }
        edges.sort_unstable();
        Ok(Self::from_sorted_unique(n_banks, edges))
    }

    /// Short content hash of the canonical edge list.
    pub fn content_hash(&self) -> String {
        crate::rng::short_hash(self.to_edge_list().as_bytes())
    }
}

fn csr(n: usize, pairs: impl Iterator<Item = (usize, usize)> + Clone) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0usize; n + 1];
    for (src, _) in pairs.clone() {
        offsets[src + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut targets = vec![0usize; offsets[n]];
    for (src, dst) in pairs {
        targets[fill[src]] = dst;
        fill[src] += 1;
    }
    for i in 0..n {
        targets[offsets[i]..offsets[i + 1]].sort_unstable();
    }
    (offsets, targets)
}

pub fn save_network(g: &InterbankNetwork, path: &Path) -> Result<()> {
    fs::write(path, g.to_edge_list())?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<InterbankNetwork> {
    let text = fs::read_to_string(path)?;
    InterbankNetwork::parse_edge_list(&text, path)
}
