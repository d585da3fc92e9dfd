//! Default propagation for one trial.
//!
//! Bank `i` fails when its external loss plus its losses on defaulted
//! borrowers exceed its net worth:
//!
//! ```text
//! -(w_i / w_o) x_i + k * sum_{j defaulted, i lends to j} pi_j * p_bar_j > w_i
//! ```
//!
//! External gains offset interbank losses. Rounds are synchronous: every
//! bank made insolvent by the previous round's failures defaults together.
//! The map is monotone, so the final set is its least fixed point above the
//! fundamental defaults.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::balance::BalanceSheetSet;
use crate::centrality::gscc_present_in;
use crate::error::{Error, Result};
use crate::graphgen::InterbankNetwork;
use crate::shocks::ReturnVector;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Sorted ids of every defaulted bank.
    pub defaulted: Vec<usize>,
    pub n_default: usize,
    /// Sorted ids of the round-0 (fundamental) defaults.
    pub fundamental: Vec<usize>,
    /// Propagation rounds that added at least one default.
    pub rounds: usize,
    pub gscc_survives: bool,
}

pub const OUTCOME_HEADER: &str = "trial,n_default,n_fundamental,rounds,gscc_survives";

impl TrialOutcome {
    pub fn csv_row(&self, trial: u64) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{trial},{},{},{},{}",
            self.n_default,
            self.fundamental.len(),
            self.rounds,
            self.gscc_survives
        );
        s
    }
}

/// Reusable buffers for many trials on one network.
#[derive(Debug, Clone)]
pub struct CascadeWorkspace {
    defaulted: Vec<bool>,
    alive: Vec<bool>,
    ib_loss: Vec<f64>,
    touched: Vec<bool>,
    frontier: Vec<usize>,
    next: Vec<usize>,
    candidates: Vec<usize>,
}

impl CascadeWorkspace {
    pub fn new(n_banks: usize) -> Self {
        Self {
            defaulted: vec![false; n_banks],
            alive: vec![true; n_banks],
            ib_loss: vec![0.0; n_banks],
            touched: vec![false; n_banks],
            frontier: Vec::new(),
            next: Vec::new(),
            candidates: Vec::new(),
        }
    }

    /// Runs one cascade. `k_loss` is the fraction of a defaulted borrower's
    /// interbank liabilities its lenders lose.
    pub fn run(
        &mut self,
        sheets: &BalanceSheetSet,
        g: &InterbankNetwork,
        rv: &ReturnVector,
        k_loss: f64,
    ) -> TrialOutcome {
        let n = g.n_banks();
        let w_o = sheets.w_o;
        self.defaulted.fill(false);
        self.ib_loss.fill(0.0);
        self.frontier.clear();
        for (i, &x) in rv.eps.iter().enumerate() {
            if x < -w_o {
                self.defaulted[i] = true;
                self.frontier.push(i);
            }
        }
        let fundamental = self.frontier.clone();

        let mut rounds = 0;
        while !self.frontier.is_empty() && k_loss > 0.0 {
            self.candidates.clear();
            for &j in &self.frontier {
                let loss = k_loss * sheets.exposure_per_lender(j);
                for &lender in g.lenders_of(j) {
                    if !self.defaulted[lender] {
                        self.ib_loss[lender] += loss;
                        if !std::mem::replace(&mut self.touched[lender], true) {
                            self.candidates.push(lender);
                        }
                    }
                }
            }
            self.next.clear();
            for &i in &self.candidates {
                self.touched[i] = false;
                let threshold = -w_o + self.ib_loss[i] * w_o / sheets.w[i];
                if rv.eps[i] < threshold {
                    self.next.push(i);
                }
            }
            for &i in &self.next {
                self.defaulted[i] = true;
            }
            if self.next.is_empty() {
                break;
            }
            rounds += 1;
            std::mem::swap(&mut self.frontier, &mut self.next);
        }

        let defaulted: Vec<usize> = (0..n).filter(|&i| self.defaulted[i]).collect();
        for i in 0..n {
            self.alive[i] = !self.defaulted[i];
        }
        let gscc_survives = gscc_present_in(g, &self.alive);
        TrialOutcome {
            n_default: defaulted.len(),
            defaulted,
            fundamental,
            rounds,
            gscc_survives,
        }
    }
}

pub fn run_cascade(
    sheets: &BalanceSheetSet,
    g: &InterbankNetwork,
    rv: &ReturnVector,
    k_loss: f64,
) -> Result<TrialOutcome> {
    let n = g.n_banks();
    if sheets.n_banks() != n || rv.eps.len() != n {
        return Err(Error::SizeMismatch(format!(
            "network has {n} banks, sheets {}, returns {}",
            sheets.n_banks(),
            rv.eps.len()
        )));
    }
    Ok(CascadeWorkspace::new(n).run(sheets, g, rv, k_loss))
}

/// Largest instance the exhaustive checker accepts.
pub const ORACLE_MAX_BANKS: usize = 20;

/// Ground-truth checker for small instances.
///
/// Works from the balance-sheet inequality directly: bank `i` is insolvent
/// given a default set `S` when
/// `p_bar_i > sum_j pi_ji p_j + a~_i + b_i - d_i` with `p_j = (1-k) p_bar_j`
/// for `j` in `S`. The least fixed point is the intersection of all sets `S`
/// with `insolvent(S) ⊆ S`, found by enumerating every superset of the
/// fundamental defaults. Errors name the first bank on which `outcome`
/// disagrees.
pub fn cascade_oracle(
    sheets: &BalanceSheetSet,
    g: &InterbankNetwork,
    rv: &ReturnVector,
    k_loss: f64,
    outcome: &TrialOutcome,
) -> std::result::Result<(), String> {
    let n = g.n_banks();
    if n > ORACLE_MAX_BANKS {
        return Err(format!("oracle supports at most {ORACLE_MAX_BANKS} banks, got {n}"));
    }
    let insolvent = |i: usize, set: u32| -> bool {
        let mut interbank = 0.0;
        for &j in g.borrowers_of(i) {
            let p_j = if set >> j & 1 == 1 {
                (1.0 - k_loss) * sheets.p_bar[j]
            } else {
                sheets.p_bar[j]
            };
            interbank += sheets.pi(g, j, i) * p_j;
        }
        let a_tilde = sheets.a[i] + sheets.w[i] / sheets.w_o * rv.eps[i];
        sheets.p_bar[i] > interbank + a_tilde + sheets.b[i] - sheets.d[i]
    };
    let image = |set: u32| -> u32 {
        (0..n).filter(|&i| insolvent(i, set)).fold(0, |m, i| m | 1 << i)
    };

    let base = image(0);
    let free: Vec<usize> = (0..n).filter(|&i| base >> i & 1 == 0).collect();
    let mut least: u32 = if n == 0 { 0 } else { u32::MAX >> (32 - n) };
    for bits in 0u32..(1u32 << free.len()) {
        let mut set = base;
        for (k, &i) in free.iter().enumerate() {
            if bits >> k & 1 == 1 {
                set |= 1 << i;
            }
        }
        if image(set) & !set == 0 {
            least &= set;
        }
    }

    let got = outcome.defaulted.iter().fold(0u32, |m, &i| m | 1 << i);
    if got != least {
        let first = (0..n).find(|&i| (got ^ least) >> i & 1 == 1).unwrap_or(0);
        return Err(format!(
            "bank {first}: cascade says {}, least fixed point says {}",
            if got >> first & 1 == 1 { "defaulted" } else { "solvent" },
            if least >> first & 1 == 1 { "defaulted" } else { "solvent" },
        ));
    }
    let fundamental = outcome.fundamental.iter().fold(0u32, |m, &i| m | 1 << i);
    if fundamental != base {
        return Err(format!(
            "fundamental set {:?} differs from insolvency with no interbank losses",
            outcome.fundamental
        ));
    }
    if outcome.n_default != outcome.defaulted.len() || outcome.rounds > n {
        return Err("outcome counters are inconsistent".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::{build_balance_sheets, calibrate, RiskParams};

    fn sheets(g: &InterbankNetwork) -> BalanceSheetSet {
        let rp = RiskParams::baseline(1000);
        build_balance_sheets(g, &calibrate(&rp).unwrap(), &rp)
    }

    fn rv(eps: Vec<f64>) -> ReturnVector {
        ReturnVector { eps, trial_id: 0 }
    }

    #[test]
    fn no_shock_no_default() {
        let g = InterbankNetwork::from_edges(3, vec![(0, 1), (1, 2)]).unwrap();
        let s = sheets(&g);
        let out = run_cascade(&s, &g, &rv(vec![0.0; 3]), 1.0).unwrap();
        assert_eq!(out.n_default, 0);
        assert_eq!(out.rounds, 0);
        cascade_oracle(&s, &g, &rv(vec![0.0; 3]), 1.0, &out).unwrap();
    }

    #[test]
    fn lender_fails_through_single_loan() {
        // Bank 0 is the borrower, bank 1 its only lender.
        let g = InterbankNetwork::from_edges(2, vec![(0, 1)]).unwrap();
        let s = sheets(&g);
        let w_o = s.w_o;
        for x_lender in [0.0, w_o] {
            let shocks = rv(vec![-1.5 * w_o, x_lender]);
            let out = run_cascade(&s, &g, &shocks, 1.0).unwrap();
            assert_eq!(out.defaulted, vec![0, 1]);
            assert_eq!(out.fundamental, vec![0]);
            assert_eq!(out.rounds, 1);
            cascade_oracle(&s, &g, &shocks, 1.0, &out).unwrap();
        }
        // A gain of 2 w_o exactly covers the 3 w_o loss net of w_o: survives.
        let shocks = rv(vec![-1.5 * w_o, 2.0 * w_o + 1e-9]);
        let out = run_cascade(&s, &g, &shocks, 1.0).unwrap();
        assert_eq!(out.defaulted, vec![0]);
    }

    #[test]
    fn zero_recovery_loss_stops_at_fundamentals() {
        let g = InterbankNetwork::from_edges(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let s = sheets(&g);
        let shocks = rv(vec![-5.0, 0.0, 0.0]);
        let out = run_cascade(&s, &g, &shocks, 0.0).unwrap();
        assert_eq!(out.defaulted, vec![0]);
        assert_eq!(out.rounds, 0);
    }

    #[test]
    fn empty_network_defaults_are_fundamental() {
        let g = InterbankNetwork::empty(4);
        let s = sheets(&g);
        let shocks = rv(vec![-5.0, 1.0, -4.1, -3.0]);
        let out = run_cascade(&s, &g, &shocks, 1.0).unwrap();
        assert_eq!(out.defaulted, vec![0, 2]);
        assert_eq!(out.defaulted, out.fundamental);
        assert!(!out.gscc_survives);
        cascade_oracle(&s, &g, &shocks, 1.0, &out).unwrap();
    }

    #[test]
    fn gscc_flag_tracks_survivors() {
        let g = InterbankNetwork::from_edges(4, vec![(0, 1), (1, 2), (2, 0), (3, 0)]).unwrap();
        let s = sheets(&g);
        let calm = run_cascade(&s, &g, &rv(vec![0.0, 0.0, 0.0, 0.0]), 1.0).unwrap();
        assert!(calm.gscc_survives);
        let hit = run_cascade(&s, &g, &rv(vec![0.0, -10.0, 0.0, 0.0]), 1.0).unwrap();
        assert!(!hit.gscc_survives);
    }

    #[test]
    fn oracle_flags_wrong_outcome() {
        let g = InterbankNetwork::from_edges(2, vec![(0, 1)]).unwrap();
        let s = sheets(&g);
        let shocks = rv(vec![-10.0, 0.0]);
        let mut out = run_cascade(&s, &g, &shocks, 1.0).unwrap();
        out.defaulted = vec![0];
        out.n_default = 1;
        let err = cascade_oracle(&s, &g, &shocks, 1.0, &out).unwrap_err();
        assert!(err.starts_with("bank 1"), "{err}");
    }

    #[test]
    fn size_mismatch_is_reported() {
        let g = InterbankNetwork::empty(3);
        let s = sheets(&g);
        assert!(run_cascade(&s, &g, &rv(vec![0.0; 2]), 1.0).is_err());
    }

    #[test]
    fn outcome_csv_row() {
        let out = TrialOutcome {
            defaulted: vec![1, 2],
            n_default: 2,
            fundamental: vec![1],
            rounds: 1,
            gscc_survives: true,
        };
        assert_eq!(out.csv_row(7), "7,2,1,1,true");
    }
}
