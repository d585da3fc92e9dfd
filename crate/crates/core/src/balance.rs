//! Net-worth calibration and balance-sheet construction.
//!
//! Shocks to external assets are measured in units of `w_o`, the net worth
//! of a bank with a single borrower. `w_o` is pinned by the risky-asset
//! default probability, and the low-risk asset's degrees of freedom (or
//! standard deviation, for the normal family) by its own default
//! probability at the same threshold.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::graphgen::InterbankNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistFamily {
    #[default]
    StudentT,
    Normal,
}

impl DistFamily {
    pub fn name(self) -> &'static str {
        match self {
            DistFamily::StudentT => "student_t",
            DistFamily::Normal => "normal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskParams {
    pub v_r: f64,
    pub delta_r: f64,
    pub delta_s: f64,
    pub theta_lw: f64,
    pub theta_aw: f64,
    #[serde(default)]
    pub dist_family: DistFamily,
}

impl RiskParams {
    /// `v_r = 5`, `delta_r = 5/N`, `delta_s = 1/(10N)`, `theta_lw = 3`,
    /// `theta_aw = 7`.
    pub fn baseline(n_banks: usize) -> Self {
        let n = n_banks as f64;
        Self {
            v_r: 5.0,
            delta_r: 5.0 / n,
            delta_s: 1.0 / (10.0 * n),
            theta_lw: 3.0,
            theta_aw: 7.0,
            dist_family: DistFamily::StudentT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.dist_family == DistFamily::StudentT && !(self.v_r > 2.0) {
            return bad(format!("v_r must exceed 2 for finite variance, got {}", self.v_r));
        }
        if !(0.0 < self.delta_s && self.delta_s < self.delta_r && self.delta_r <= 0.5) {
            return bad(format!(
                "need 0 < delta_s < delta_r <= 0.5, got delta_s={} delta_r={}",
                self.delta_s, self.delta_r
            ));
        }
        if !(self.theta_lw > 0.0 && self.theta_aw > 0.0) {
            return bad(format!(
                "theta_lw and theta_aw must be positive, got {} and {}",
                self.theta_lw, self.theta_aw
            ));
        }
        Ok(())
    }

    /// Variance of a risky-asset return.
    pub fn risky_variance(&self) -> f64 {
        match self.dist_family {
            DistFamily::StudentT => self.v_r / (self.v_r - 2.0),
            DistFamily::Normal => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub w_o: f64,
    pub l_bar: f64,
    /// Degrees of freedom of the low-risk asset for the student-t family,
    /// its standard deviation for the normal family.
    pub v_s: f64,
    pub dist_family: DistFamily,
}

fn t_cdf(v: f64, x: f64) -> f64 {
    StudentsT::new(0.0, 1.0, v)
        .expect("degrees of freedom are positive")
        .cdf(x)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Lower-tail CDF of the risky return.
pub fn risky_cdf(rp: &RiskParams, x: f64) -> f64 {
    match rp.dist_family {
        DistFamily::StudentT => t_cdf(rp.v_r, x),
        DistFamily::Normal => std_normal().cdf(x),
    }
}

/// `w_o` such that `F(-w_o) = delta_r`.
///
/// Under the normal family the risky return is a unit normal.
pub fn solve_unit_networth(rp: &RiskParams) -> Result<f64> {
    rp.validate()?;
    let target = rp.delta_r;
    let f = |w: f64| risky_cdf(rp, -w) - target;
    // f is decreasing in w, f(0) = 0.5 - delta_r >= 0.
    if f(0.0) <= 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoConvergence {
                what: "quantile bracket",
                iterations: 40,
                residual: f(hi),
            });
        }
    }
    let root = bisect(f, 0.0, hi, 1e-14);
    let residual = f(root).abs();
    if residual > 1e-10 {
        return Err(Error::NoConvergence {
            what: "quantile bisection",
            iterations: 200,
            residual,
        });
    }
    Ok(root)
}

/// Bisection for a decreasing or increasing `f` with a sign change on
/// `[lo, hi]`; stops when the bracket is narrower than `rel_tol * hi`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * hi.abs().max(1e-300) {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub const VS_BRACKET: (f64, f64) = (2.0, 1e6);

/// Low-risk asset parameter: degrees of freedom `v` with `F_v(-w_o) =
/// delta_s` for the student-t family, or the standard deviation `sigma`
/// with `Phi(-w_o / sigma) = delta_s` for the normal family.
pub fn solve_vs(w_o: f64, delta_s: f64, family: DistFamily) -> Result<f64> {
    if !(delta_s > 0.0 && delta_s < 0.5) || !(w_o > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "solve_vs needs w_o > 0 and 0 < delta_s < 0.5, got w_o={w_o} delta_s={delta_s}"
        )));
    }
    match family {
        DistFamily::Normal => {
            let z = std_normal().inverse_cdf(delta_s);
            Ok(w_o / -z)
        }
        DistFamily::StudentT => {
            let (lo, hi) = VS_BRACKET;
            // Bisect in log(v); F_v(-w_o) falls as tails thin.
            let f = |log_v: f64| t_cdf(log_v.exp(), -w_o) - delta_s;
            let (f_lo, f_hi) = (f(lo.ln()), f(hi.ln()));
            if (f_lo > 0.0) == (f_hi > 0.0) {
                return Err(Error::NoRootInBracket {
                    w_o,
                    target: delta_s,
                    lo,
                    hi,
                });
            }
            let log_v = bisect(f, lo.ln(), hi.ln(), 1e-15);
            let v = log_v.exp();
            let residual = (t_cdf(v, -w_o) - delta_s).abs();
            if residual > 1e-8 {
                return Err(Error::NoConvergence {
                    what: "v_s bisection",
                    iterations: 200,
                    residual,
                });
            }
            Ok(v)
        }
    }
}

pub fn calibrate(rp: &RiskParams) -> Result<CalibrationResult> {
    let w_o = solve_unit_networth(rp)?;
    let v_s = solve_vs(w_o, rp.delta_s, rp.dist_family)?;
    Ok(CalibrationResult {
        w_o,
        l_bar: rp.theta_lw * w_o,
        v_s,
        dist_family: rp.dist_family,
    })
}

/// Every bank's balance sheet. Each edge carries exposure `l_bar`, so a
/// borrower splits its interbank liabilities equally across its lenders.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSheetSet {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub l: Vec<f64>,
    pub p_bar: Vec<f64>,
    pub d: Vec<f64>,
    pub w: Vec<f64>,
    pub d_in: Vec<usize>,
    pub d_out: Vec<usize>,
    /// `pi_ij` for every lender `j` of borrower `i` (`1 / d_in(i)`), zero for
    /// banks that do not borrow.
    pub pi_weight: Vec<f64>,
    pub w_o: f64,
    pub l_bar: f64,
}

impl BalanceSheetSet {
    pub fn n_banks(&self) -> usize {
        self.w.len()
    }

    /// `pi_ij`, zero when `i` does not borrow from `j`.
    pub fn pi(&self, g: &InterbankNetwork, i: usize, j: usize) -> f64 {
        if g.has_edge(i, j) {
            self.pi_weight[i]
        } else {
            0.0
        }
    }

    /// Claim of each lender on `borrower`: `pi * p_bar`.
    pub fn exposure_per_lender(&self, borrower: usize) -> f64 {
        self.pi_weight[borrower] * self.p_bar[borrower]
    }

    /// `(assets - liabilities) / assets` relative gap for bank `i`.
    pub fn identity_gap(&self, i: usize) -> f64 {
        let assets = self.a[i] + self.b[i] + self.l[i];
        let liabilities = self.p_bar[i] + self.d[i] + self.w[i];
        (assets - liabilities).abs() / assets.max(liabilities)
    }

    /// `bank_id,a,b,l,p_bar,d,w,d_in,d_out`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bank_id,a,b,l,p_bar,d,w,d_in,d_out\n");
        for i in 0..self.n_banks() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{},{},{},{}",
                self.a[i],
                self.b[i],
                self.l[i],
                self.p_bar[i],
                self.d[i],
                self.w[i],
                self.d_in[i],
                self.d_out[i]
            );
        }
        out
    }
}

pub fn build_balance_sheets(
    g: &InterbankNetwork,
    cal: &CalibrationResult,
    rp: &RiskParams,
) -> BalanceSheetSet {
    let n = g.n_banks();
    let l_bar = cal.l_bar;
    let mut sheets = BalanceSheetSet {
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        l: Vec::with_capacity(n),
        p_bar: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        d_in: Vec::with_capacity(n),
        d_out: Vec::with_capacity(n),
        pi_weight: Vec::with_capacity(n),
        w_o: cal.w_o,
        l_bar,
    };
    for i in 0..n {
        let (d_in, d_out) = (g.in_degree(i), g.out_degree(i));
        let l = d_out as f64 * l_bar;
        let p_bar = d_in as f64 * l_bar;
        let w = d_out.max(1) as f64 * l_bar / rp.theta_lw;
        let a = rp.theta_aw * w;
        let (b, d) = if p_bar + w > a + l {
            (p_bar + w - a - l, 0.0)
        } else {
            (0.0, a + l - p_bar - w)
        };
        sheets.a.push(a);
        sheets.b.push(b);
        sheets.l.push(l);
        sheets.p_bar.push(p_bar);
        sheets.d.push(d);
        sheets.w.push(w);
        sheets.d_in.push(d_in);
        sheets.d_out.push(d_out);
        sheets.pi_weight.push(if d_in > 0 { 1.0 / d_in as f64 } else { 0.0 });
    }
    sheets
}
