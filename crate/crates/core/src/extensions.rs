//! D-optimal annealing and equality budget constraints on the selection.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::anneal::{run_schedule, solve_cost_multiplier, AnnealSchedule, AnnealState, Saturation};
use crate::error::{Result, SsioError};
use crate::linalg::{Criterion, HardDesign, IncompleteMatrix};

const FEASIBILITY_STEPS: usize = 200;
const FEASIBILITY_RTOL: f64 = 1e-4;

/// Per-row feature costs `c_i` and per-feature totals `kappa`, enforcing
/// `sum_i c_i q_i = kappa`.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetSpec {
    /// `n x p`; row `i` holds the costs of experiment `i`.
    pub costs: DMatrix<f64>,
    pub caps: Vec<f64>,
}

impl BudgetSpec {
    pub fn new(costs: DMatrix<f64>, caps: Vec<f64>) -> Result<Self> {
        if costs.ncols() != caps.len() {
            return Err(SsioError::input(format!(
                "budget has {} cost columns but {} caps",
                costs.ncols(),
                caps.len()
            )));
        }
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(SsioError::input(format!(
                "budget cost {c} must be finite and non-negative"
            )));
        }
        if let Some(k) = caps.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
            return Err(SsioError::input(format!(
                "budget cap {k} must be finite and non-negative"
            )));
        }
        Ok(BudgetSpec { costs, caps })
    }

    /// Every experiment costs one unit of each feature and every cap is `r`:
    /// the budget coincides with the cardinality constraint.
    pub fn cardinality_replica(n: usize, p: usize, r: usize) -> Self {
        BudgetSpec {
            costs: DMatrix::from_element(n, p, 1.0),
            caps: vec![r as f64; p],
        }
    }

    pub fn check_shape(&self, n: usize, p: usize) -> Result<()> {
        if self.costs.shape() != (n, p) {
            return Err(SsioError::input(format!(
                "budget costs are {}x{} but the design matrix is {n}x{p}",
                self.costs.nrows(),
                self.costs.ncols()
            )));
        }
        Ok(())
    }

    /// `sum_i c_il q_i`
    pub fn spent(&self, q: &[f64], l: usize) -> f64 {
        self.costs
            .column(l)
            .iter()
            .zip(q)
            .map(|(c, qi)| c * qi)
            .sum()
    }

    /// `max_l |sum_i c_il q_i - kappa_l|`
    pub fn residual(&self, q: &[f64]) -> f64 {
        (0..self.caps.len())
            .map(|l| (self.spent(q, l) - self.caps[l]).abs())
            .fold(0.0, f64::max)
    }

    /// Features with at least one positive cost.
    pub fn active_features(&self) -> Vec<usize> {
        (0..self.caps.len())
            .filter(|&l| self.costs.column(l).iter().any(|&c| c > 0.0))
            .collect()
    }

    /// Looks for `q in [0,1]^n` with `sum q = r` and `C^T q = kappa` by
    /// alternating projections; returns the point found.
    pub fn check_feasible(&self, r: usize) -> Result<Vec<f64>> {
        let (n, p) = self.costs.shape();
        if r > n {
            return Err(SsioError::Infeasible(format!("r = {r} exceeds n = {n}")));
        }
        let mut a = DMatrix::zeros(p + 1, n);
        let mut b = DVector::zeros(p + 1);
        for i in 0..n {
            a[(0, i)] = 1.0;
            for l in 0..p {
                a[(l + 1, i)] = self.costs[(i, l)];
            }
        }
        b[0] = r as f64;
        for l in 0..p {
            b[l + 1] = self.caps[l];
        }
        let pinv = a
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| SsioError::Numerical(e.to_string()))?;
        let mut q = DVector::from_element(n, r as f64 / n as f64);
        for _ in 0..FEASIBILITY_STEPS {
            let corr = &pinv * (&a * &q - &b);
            q -= corr;
            q.apply(|v| *v = v.clamp(0.0, 1.0));
        }
        let resid = (&a * &q - &b).amax();
        let scale = b.amax().max(1.0);
        if resid > FEASIBILITY_RTOL * scale {
            return Err(SsioError::Infeasible(format!(
                "no relaxed selection meets the budget (residual {resid:.3e})"
            )));
        }
        Ok(q.iter().cloned().collect())
    }
}

/// Weight update with the budget term:
/// `q_i = 1 / (1 + exp{-(x_i^T R^{-2} x_i - mu - sum_j nu_j c_ij) / T})`,
/// blended with the state's damping.
pub fn budget_q_update(state: &AnnealState, budget: &BudgetSpec, nu: &[f64]) -> Result<Vec<f64>> {
    budget.check_shape(state.x.nrows(), state.x.ncols())?;
    if nu.len() != budget.caps.len() {
        return Err(SsioError::input("one multiplier per budget feature expected"));
    }
    let v = state.leverages()?;
    Ok(state.damped_step(Some(budget), &v, state.mu, nu))
}

/// Outcome of a single budget multiplier solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EtaUpdate {
    /// `exp(-nu_l / T)`
    pub eta: f64,
    pub nu: f64,
    pub status: EtaStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EtaStatus {
    Active,
    /// No row has a cost in this feature and its cap is zero.
    Inactive,
    /// The cap forces every costed row to zero weight (`eta -> 0`).
    SaturatedLow,
    /// The cap is at or above the total cost (`eta -> infinity`).
    SaturatedHigh,
}

/// Solves feature `l`'s budget equation `sum_i c_il q_i = kappa_l` for its
/// multiplier, the other multipliers and `mu` held fixed.
pub fn eta_update(
    state: &AnnealState,
    budget: &BudgetSpec,
    nu: &[f64],
    l: usize,
) -> Result<EtaUpdate> {
    budget.check_shape(state.x.nrows(), state.x.ncols())?;
    if l >= budget.caps.len() || nu.len() != budget.caps.len() {
        return Err(SsioError::input(format!("feature {l} out of range")));
    }
    let col: Vec<f64> = budget.costs.column(l).iter().cloned().collect();
    let kappa = budget.caps[l];
    let t = state.temperature;
    if col.iter().all(|&c| c == 0.0) {
        if kappa == 0.0 {
            return Ok(EtaUpdate {
                eta: (-nu[l] / t).exp(),
                nu: nu[l],
                status: EtaStatus::Inactive,
            });
        }
        return Err(SsioError::Infeasible(format!(
            "feature {l} has no costs but cap {kappa}"
        )));
    }
    let v = state.leverages()?;
    let w: Vec<f64> = (0..v.len())
        .map(|i| {
            let others: f64 = (0..nu.len())
                .filter(|&j| j != l)
                .map(|j| nu[j] * budget.costs[(i, j)])
                .sum();
            v[i] - state.mu - others
        })
        .collect();
    let (nl, sat) = solve_cost_multiplier(&w, &col, kappa, t, nu[l]);
    let status = match sat {
        Saturation::None => EtaStatus::Active,
        Saturation::Low => EtaStatus::SaturatedLow,
        Saturation::High => EtaStatus::SaturatedHigh,
    };
    let eta = match status {
        EtaStatus::SaturatedLow => 0.0,
        _ => (-nl / t).exp(),
    };
    Ok(EtaUpdate {
        eta,
        nu: nl,
        status,
    })
}

/// Annealing under the cardinality constraint plus `sum_i c_i q_i = kappa`.
pub fn constrained_anneal(
    problem: &IncompleteMatrix,
    r: usize,
    schedule: &AnnealSchedule,
    budget: &BudgetSpec,
) -> Result<(AnnealState, HardDesign)> {
    budget.check_shape(problem.rows(), problem.cols())?;
    budget.check_feasible(r)?;
    let state = AnnealState::new(problem, r, Criterion::A)?.with_budget(budget.clone())?;
    run_schedule(state, schedule)
}

/// Annealing on the D-criterion `det(R)^{-1/p}`.
pub fn d_anneal(
    problem: &IncompleteMatrix,
    r: usize,
    schedule: &AnnealSchedule,
) -> Result<(AnnealState, HardDesign)> {
    crate::anneal::anneal(problem, r, schedule, Criterion::D)
}
