//! Per-trial external-asset returns.
//!
//! Returns are expressed in units of `w_o`: a bank fails fundamentally when
//! its draw `x_i < -w_o`, and its external asset moves by `(w_i / w_o) x_i`.
//!
//! Every trial draws one risky return per bank in bank order, then a single
//! shared low-risk return. Immunization only changes how those draws are
//! used, so two plans evaluated on the same trial stream see the same
//! underlying randomness:
//!
//! - risky banks keep their own draw;
//! - uniform-immunized banks all take the shared draw;
//! - the second member `b` of a pair `(a, b)` becomes
//!   `-rho * x_a + (1 - rho) * h_b`, where `h_b` is `b`'s own draw rescaled to
//!   variance `(1 + rho) sigma^2 / (1 - rho)`. The result keeps variance
//!   `sigma^2` and has correlation `-rho` with `x_a`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::balance::{CalibrationResult, DistFamily, RiskParams};
use crate::error::{Error, Result};
use crate::immunize::ImmunizationPlan;

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnVector {
    pub eps: Vec<f64>,
    pub trial_id: u64,
}

impl ReturnVector {
    /// `trial,bank_id,x` rows (no header).
    pub fn write_csv_rows(&self, out: &mut String) {
        for (bank, x) in self.eps.iter().enumerate() {
            let _ = writeln!(out, "{},{bank},{x:e}", self.trial_id);
        }
    }
}

pub const SHOCK_DUMP_HEADER: &str = "trial,bank_id,x";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairAssignment {
    pub pairs: Vec<(usize, usize)>,
    pub rho: f64,
}

impl PairAssignment {
    pub fn validate(&self, n_banks: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        let mut seen = vec![false; n_banks];
        for &(a, b) in &self.pairs {
            for x in [a, b] {
                if x >= n_banks {
                    return Err(Error::SizeMismatch(format!("pair member {x} >= {n_banks}")));
                }
                if std::mem::replace(&mut seen[x], true) {
                    return Err(Error::InvalidParameter(format!("bank {x} appears in two pairs")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Risky,
    Uniform,
    /// Second pair member; holds the partner's id.
    Follower(usize),
}

#[derive(Debug, Clone, Copy)]
enum Family {
    T { risky: StudentT<f64>, shared: StudentT<f64> },
    Normal { shared_sigma: f64 },
}

/// Precomputed sampler for one plan; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct ShockSampler {
    roles: Vec<Role>,
    family: Family,
    rho: f64,
    /// `(1 - rho) * sqrt((1 + rho) / (1 - rho))`, the weight on a follower's
    /// own draw.
    own_weight: f64,
}

impl ShockSampler {
    pub fn new(plan: &ImmunizationPlan, rp: &RiskParams, cal: &CalibrationResult, n_banks: usize) -> Result<Self> {
        plan.validate(n_banks)?;
        let mut roles = vec![Role::Risky; n_banks];
        for &i in &plan.uniform_set {
            roles[i] = Role::Uniform;
        }
        for &(a, b) in &plan.pairs.pairs {
            roles[b] = Role::Follower(a);
        }
        let family = match cal.dist_family {
            DistFamily::StudentT => Family::T {
                risky: StudentT::new(rp.v_r)
                    .map_err(|e| Error::InvalidParameter(format!("v_r: {e}")))?,
                shared: StudentT::new(cal.v_s)
                    .map_err(|e| Error::InvalidParameter(format!("v_s: {e}")))?,
            },
            DistFamily::Normal => Family::Normal { shared_sigma: cal.v_s },
        };
        let rho = plan.pairs.rho;
        let own_weight = if rho >= 1.0 {
            0.0
        } else {
            (1.0 - rho) * ((1.0 + rho) / (1.0 - rho)).sqrt()
        };
        Ok(Self {
            roles,
            family,
            rho,
            own_weight,
        })
    }

    pub fn n_banks(&self) -> usize {
        self.roles.len()
    }

    /// Fills `eps` with one trial's returns.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, eps: &mut Vec<f64>) {
        eps.clear();
        let shared = match self.family {
            Family::T { risky, shared } => {
                eps.extend((0..self.roles.len()).map(|_| risky.sample(rng)));
                shared.sample(rng)
            }
            Family::Normal { shared_sigma } => {
                eps.extend((0..self.roles.len()).map(|_| -> f64 { StandardNormal.sample(rng) }));
                shared_sigma * Distribution::<f64>::sample(&StandardNormal, rng)
            }
        };
        for i in 0..self.roles.len() {
            match self.roles[i] {
                Role::Risky => {}
                Role::Uniform => eps[i] = shared,
                Role::Follower(lead) => {
                    // Leads are never followers, so eps[lead] is still its raw draw.
                    eps[i] = -self.rho * eps[lead] + self.own_weight * eps[i];
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, trial_id: u64) -> ReturnVector {
        let mut eps = Vec::with_capacity(self.roles.len());
        self.sample_into(rng, &mut eps);
        ReturnVector { eps, trial_id }
    }
}

pub fn sample_returns<R: Rng + ?Sized>(
    plan: &ImmunizationPlan,
    rp: &RiskParams,
    cal: &CalibrationResult,
    n_banks: usize,
    rng: &mut R,
    trial_id: u64,
) -> Result<ReturnVector> {
    Ok(ShockSampler::new(plan, rp, cal, n_banks)?.sample(rng, trial_id))
}

/// Banks with `x_i < -w_o`.
pub fn fundamental_default_mask(rv: &ReturnVector, cal: &CalibrationResult) -> Vec<usize> {
    rv.eps
        .iter()
        .enumerate()
        .filter(|&(_, &x)| x < -cal.w_o)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::calibrate;
    use crate::immunize::ImmunizationPlan;
    use crate::rng::keyed_rng;

    fn setup() -> (RiskParams, CalibrationResult) {
        let rp = RiskParams::baseline(1000);
        let cal = calibrate(&rp).unwrap();
        (rp, cal)
    }

    fn moments(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / (n - 1.0);
        let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / (n - 1.0);
        let cov = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1.0);
        (vx, vy, cov / (vx * vy).sqrt())
    }

    fn pair_draws(rho: f64, draws: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let (rp, cal) = setup();
        let plan = ImmunizationPlan::with_pairs(2, vec![(0, 1)], rho);
        let sampler = ShockSampler::new(&plan, &rp, &cal, 2).unwrap();
        let mut rng = keyed_rng(seed, "pairs", 0);
        let mut eps = Vec::new();
        let (mut xa, mut xb) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
        for _ in 0..draws {
            sampler.sample_into(&mut rng, &mut eps);
            xa.push(eps[0]);
            xb.push(eps[1]);
        }
        (xa, xb)
    }

    #[test]
    fn rho_one_mirrors_exactly() {
        let (xa, xb) = pair_draws(1.0, 1000, 3);
        assert!(xa.iter().zip(&xb).all(|(a, b)| *b == -*a));
    }

    #[test]
    fn rho_zero_keeps_raw_draws() {
        let (rp, cal) = setup();
        let paired = ShockSampler::new(&ImmunizationPlan::with_pairs(2, vec![(0, 1)], 0.0), &rp, &cal, 2).unwrap();
        let none = ShockSampler::new(&ImmunizationPlan::none(), &rp, &cal, 2).unwrap();
        for t in 0..100 {
            let a = paired.sample(&mut keyed_rng(5, "x", t), t);
            let b = none.sample(&mut keyed_rng(5, "x", t), t);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn pair_correlation_and_variance() {
        let sigma2 = 5.0 / 3.0;
        for rho in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let (xa, xb) = pair_draws(rho, 100_000, 11);
            let (va, vb, corr) = moments(&xa, &xb);
            assert!((va / sigma2 - 1.0).abs() < 0.02, "rho={rho} var_a={va}");
            assert!((vb / sigma2 - 1.0).abs() < 0.02, "rho={rho} var_b={vb}");
            assert!((corr + rho).abs() < 0.01, "rho={rho} corr={corr}");
        }
    }

    #[test]
    fn uniform_banks_share_one_draw() {
        let (rp, cal) = setup();
        let plan = ImmunizationPlan::with_uniform(6, vec![1, 3, 4]);
        let sampler = ShockSampler::new(&plan, &rp, &cal, 6).unwrap();
        for t in 0..50 {
            let rv = sampler.sample(&mut keyed_rng(1, "u", t), t);
            assert_eq!(rv.eps[1].to_bits(), rv.eps[3].to_bits());
            assert_eq!(rv.eps[1].to_bits(), rv.eps[4].to_bits());
            assert_ne!(rv.eps[0], rv.eps[1]);
        }
    }

    #[test]
    fn same_stream_same_vector() {
        let (rp, cal) = setup();
        let plan = ImmunizationPlan::none();
        let a = sample_returns(&plan, &rp, &cal, 10, &mut keyed_rng(9, "s", 4), 4).unwrap();
        let b = sample_returns(&plan, &rp, &cal, 10, &mut keyed_rng(9, "s", 4), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_mask_is_strict() {
        let (_, cal) = setup();
        let rv = ReturnVector {
            eps: vec![0.0, -cal.w_o, -cal.w_o - 1e-9],
            trial_id: 0,
        };
        assert_eq!(fundamental_default_mask(&rv, &cal), vec![2]);
        let zeros = ReturnVector { eps: vec![0.0; 3], trial_id: 0 };
        assert!(fundamental_default_mask(&zeros, &cal).is_empty());
    }

    #[test]
    fn baseline_default_rate_per_bank() {
        // 10^5 draws of one bank: binomial interval around delta_r = 0.005.
        let (rp, cal) = setup();
        let sampler = ShockSampler::new(&ImmunizationPlan::none(), &rp, &cal, 1).unwrap();
        let mut rng = keyed_rng(21, "rate", 0);
        let mut eps = Vec::new();
        let mut hits = 0;
        for _ in 0..100_000 {
            sampler.sample_into(&mut rng, &mut eps);
            hits += usize::from(eps[0] < -cal.w_o);
        }
        let rate = hits as f64 / 1e5;
        assert!((rate - 0.005).abs() < 0.0005, "rate={rate}");
    }

    #[test]
    fn normal_family_shared_sigma() {
        let mut rp = RiskParams::baseline(1000);
        rp.dist_family = DistFamily::Normal;
        let cal = calibrate(&rp).unwrap();
        let plan = ImmunizationPlan::with_uniform(1, vec![0]);
        let sampler = ShockSampler::new(&plan, &rp, &cal, 1).unwrap();
        let mut rng = keyed_rng(2, "n", 0);
        let xs: Vec<f64> = (0..100_000).map(|t| sampler.sample(&mut rng, t).eps[0]).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((var.sqrt() / cal.v_s - 1.0).abs() < 0.01);
    }

    #[test]
    fn pair_validation() {
        let bad = PairAssignment { pairs: vec![(0, 1), (1, 2)], rho: 0.5 };
        assert!(bad.validate(3).is_err());
        let bad_rho = PairAssignment { pairs: vec![(0, 1)], rho: 1.5 };
        assert!(bad_rho.validate(2).is_err());
    }
}
