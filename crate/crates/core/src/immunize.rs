//! Vaccination plans.
//!
//! A uniform plan moves the top-ranked banks onto the common low-risk asset.
//! A counteractive plan pairs banks greedily by edge betweenness on the
//! residual network (or by uniformly random edges) and gives each pair
//! anti-correlated assets. Both build a full ordering once; a plan for a
//! given fraction is a prefix of it.

use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::centrality::{self, argmax_edge, edge_betweenness, Metric};
use crate::error::{Error, Result};
use crate::graphgen::InterbankNetwork;
use crate::rng::keyed_rng;
use crate::shocks::PairAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    Uniform,
    Counteractive,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Uniform => "uniform",
            Strategy::Counteractive => "counteractive",
        }
    }
}

/// Ordering rule. Uniform plans accept every variant except
/// `EdgeBetweenness`; counteractive plans accept `EdgeBetweenness` and
/// `Random`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum OrderMetric {
    Pagerank,
    InDegree,
    Eigenvector,
    NodeBetweenness,
    Restrepo,
    EdgeBetweenness,
    Random,
}

impl OrderMetric {
    pub fn name(self) -> &'static str {
        match self {
            OrderMetric::Pagerank => "pagerank",
            OrderMetric::InDegree => "in_degree",
            OrderMetric::Eigenvector => "eigenvector",
            OrderMetric::NodeBetweenness => "node_betweenness",
            OrderMetric::Restrepo => "restrepo",
            OrderMetric::EdgeBetweenness => "edge_betweenness",
            OrderMetric::Random => "random",
        }
    }

    fn centrality(self) -> Option<Metric> {
        match self {
            OrderMetric::Pagerank => Some(Metric::Pagerank),
            OrderMetric::InDegree => Some(Metric::InDegree),
            OrderMetric::Eigenvector => Some(Metric::Eigenvector),
            OrderMetric::NodeBetweenness => Some(Metric::NodeBetweenness),
            OrderMetric::Restrepo => Some(Metric::RestrepoIndex),
            OrderMetric::EdgeBetweenness | OrderMetric::Random => None,
        }
    }

    pub fn valid_for(self, strategy: Strategy) -> bool {
        match strategy {
            Strategy::None => true,
            Strategy::Uniform => self != OrderMetric::EdgeBetweenness,
            Strategy::Counteractive => {
                matches!(self, OrderMetric::EdgeBetweenness | OrderMetric::Random)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub network_hash: String,
    pub seed: u64,
    pub metric: String,
    /// Bank left over when the counteractive order runs out of partners.
    pub unpaired: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImmunizationPlan {
    pub strategy: Strategy,
    pub order_metric: OrderMetric,
    pub fraction: f64,
    /// Immunized banks in vaccination order.
    pub uniform_set: Vec<usize>,
    /// Pairs in vaccination order.
    pub pairs: PairAssignment,
    pub provenance: Provenance,
}

impl ImmunizationPlan {
    pub fn none() -> Self {
        Self {
            strategy: Strategy::None,
            order_metric: OrderMetric::Random,
            fraction: 0.0,
            uniform_set: Vec::new(),
            pairs: PairAssignment::default(),
            provenance: Provenance::default(),
        }
    }

    /// Hand-built uniform plan.
    pub fn with_uniform(n_banks: usize, banks: Vec<usize>) -> Self {
        Self {
            strategy: Strategy::Uniform,
            fraction: banks.len() as f64 / n_banks as f64,
            uniform_set: banks,
            ..Self::none()
        }
    }

    /// Hand-built counteractive plan.
    pub fn with_pairs(n_banks: usize, pairs: Vec<(usize, usize)>, rho: f64) -> Self {
        Self {
            strategy: Strategy::Counteractive,
            fraction: 2.0 * pairs.len() as f64 / n_banks as f64,
            pairs: PairAssignment { pairs, rho },
            ..Self::none()
        }
    }

    pub fn validate(&self, n_banks: usize) -> Result<()> {
        if !self.uniform_set.is_empty() && self.strategy != Strategy::Uniform {
            return Err(Error::InvalidParameter("uniform_set set on a non-uniform plan".into()));
        }
        if !self.pairs.pairs.is_empty() && self.strategy != Strategy::Counteractive {
            return Err(Error::InvalidParameter("pairs set on a non-counteractive plan".into()));
        }
        self.pairs.validate(n_banks)?;
        let mut seen = vec![false; n_banks];
        for &i in &self.uniform_set {
            if i >= n_banks || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParameter(format!("bad uniform bank {i}")));
            }
        }
        Ok(())
    }

    pub fn n_immunized(&self) -> usize {
        self.uniform_set.len() + 2 * self.pairs.pairs.len()
    }

    /// `rank,bank_id[,partner_id]` with a `#` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# strategy={} metric={} seed={} fraction={} network={}",
            self.strategy.name(),
            self.order_metric.name(),
            self.provenance.seed,
            self.fraction,
            self.provenance.network_hash
        );
        match self.strategy {
            Strategy::Counteractive => {
                out.push_str("rank,bank_id,partner_id\n");
                for (r, (a, b)) in self.pairs.pairs.iter().enumerate() {
                    let _ = writeln!(out, "{},{a},{b}", r + 1);
                }
            }
            _ => {
                out.push_str("rank,bank_id\n");
                for (r, a) in self.uniform_set.iter().enumerate() {
                    let _ = writeln!(out, "{},{a}", r + 1);
                }
            }
        }
        out
    }
}

/// Number of banks a fraction covers, `round(fraction * N)`.
pub fn immunized_count(fraction: f64, n_banks: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("fraction must lie in [0, 1], got {fraction}")));
    }
    Ok((fraction * n_banks as f64).round() as usize)
}

/// Full uniform vaccination order for `metric`.
pub fn uniform_order(g: &InterbankNetwork, metric: OrderMetric, seed: u64) -> Result<Vec<usize>> {
    match metric.centrality() {
        Some(m) => Ok(centrality::scores_for(g, m, seed)?.order),
        None if metric == OrderMetric::Random => {
            let mut order: Vec<usize> = (0..g.n_banks()).collect();
            order.shuffle(&mut keyed_rng(seed, "uniform-random", 0));
            Ok(order)
        }
        None => Err(Error::InvalidParameter(format!(
            "{} is not a uniform vaccination order",
            metric.name()
        ))),
    }
}

/// Builds a uniform plan from a precomputed order.
pub fn uniform_plan_from_order(
    g: &InterbankNetwork,
    order: &[usize],
    metric: OrderMetric,
    fraction: f64,
    seed: u64,
) -> Result<ImmunizationPlan> {
    let count = immunized_count(fraction, g.n_banks())?;
    Ok(ImmunizationPlan {
        strategy: Strategy::Uniform,
        order_metric: metric,
        fraction,
        uniform_set: order[..count].to_vec(),
        pairs: PairAssignment::default(),
        provenance: Provenance {
            network_hash: g.content_hash(),
            seed,
            metric: metric.name().into(),
            unpaired: None,
        },
    })
}

pub fn uniform_plan(
    g: &InterbankNetwork,
    metric: OrderMetric,
    fraction: f64,
    seed: u64,
) -> Result<ImmunizationPlan> {
    let order = uniform_order(g, metric, seed)?;
    uniform_plan_from_order(g, &order, metric, fraction, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounteractiveOrder {
    pub pairs: Vec<(usize, usize)>,
    pub unpaired: Option<usize>,
}

/// Greedy pair sequence.
///
/// Each round takes the residual network's top edge by betweenness (ties and
/// `Random` mode pick uniformly), records its endpoints, and deletes both
/// banks with every incident edge. Once no edges remain the rest of the
/// banks are paired uniformly at random.
pub fn counteractive_order(g: &InterbankNetwork, mode: OrderMetric, seed: u64) -> Result<CounteractiveOrder> {
    if !mode.valid_for(Strategy::Counteractive) {
        return Err(Error::InvalidParameter(format!(
            "{} is not a counteractive mode",
            mode.name()
        )));
    }
    let mut rng = keyed_rng(seed, "counteractive", 0);
    let n = g.n_banks();
    let mut alive = vec![true; n];
    let mut residual = g.clone();
    let mut pairs = Vec::new();
    while residual.n_edges() > 0 {
        let pick = match mode {
            OrderMetric::EdgeBetweenness => argmax_edge(&edge_betweenness(&residual), &mut rng),
            _ => residual.edges().choose(&mut rng).copied(),
        };
        let (a, b) = pick.expect("residual has edges");
        pairs.push((a, b));
        alive[a] = false;
        alive[b] = false;
        residual = residual.restrict(&alive);
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    rest.shuffle(&mut rng);
    let mut chunks = rest.chunks_exact(2);
    pairs.extend(chunks.by_ref().map(|c| (c[0], c[1])));
    let unpaired = chunks.remainder().first().copied();
    Ok(CounteractiveOrder { pairs, unpaired })
}

pub fn counteractive_plan_from_order(
    g: &InterbankNetwork,
    order: &CounteractiveOrder,
    mode: OrderMetric,
    fraction: f64,
    rho: f64,
    seed: u64,
) -> Result<ImmunizationPlan> {
    let n_pairs = (immunized_count(fraction, g.n_banks())? / 2).min(order.pairs.len());
    let plan = ImmunizationPlan {
        strategy: Strategy::Counteractive,
        order_metric: mode,
        fraction,
        uniform_set: Vec::new(),
        pairs: PairAssignment {
            pairs: order.pairs[..n_pairs].to_vec(),
            rho,
        },
        provenance: Provenance {
            network_hash: g.content_hash(),
            seed,
            metric: mode.name().into(),
            unpaired: order.unpaired,
        },
    };
    plan.pairs.validate(g.n_banks())?;
    Ok(plan)
}

pub fn counteractive_plan(
    g: &InterbankNetwork,
    mode: OrderMetric,
    fraction: f64,
    rho: f64,
    seed: u64,
) -> Result<ImmunizationPlan> {
    let order = counteractive_order(g, mode, seed)?;
    counteractive_plan_from_order(g, &order, mode, fraction, rho, seed)
}
