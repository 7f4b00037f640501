use serde::Deserialize;

use crate::error::{Error, Result};

/// Knobs shared by every entropic solver in the crate.
///
/// `eta` and `eta_floor` are scale factors: the solvers multiply them by the
/// mean of the initial linearized cost, so the same parameters work across
/// instances with different distance scales. Annealing runs
/// `eta_k = max(eta * anneal_factor^k, eta_floor)` (in the same relative
/// units) until the outer objective stalls at the floor.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Initial entropic regularization, relative to the mean linearized cost.
    pub eta: f64,
    /// Multiplicative annealing factor, in (0, 1).
    pub anneal_factor: f64,
    /// Smallest regularization, same relative units as `eta`.
    pub eta_floor: f64,
    /// Total outer-iteration budget across all annealing levels.
    pub outer_max: usize,
    /// Iteration cap for each inner Sinkhorn solve.
    pub sinkhorn_max: usize,
    /// L1 marginal-violation target for inner Sinkhorn solves.
    pub sinkhorn_tol: f64,
    /// Relative objective-change threshold declaring an annealing level done.
    pub outer_tol: f64,
    /// Number of initializations: the product measure plus seeded random
    /// perturbations. Restarts are what break symmetric stalemates.
    pub restarts: usize,
    /// Seed for every random choice a solver makes.
    pub seed: u64,
    /// Round the returned plan onto the polytope so marginals hold exactly.
    pub round_plan: bool,
    /// Refuse plan tensors with more entries than this.
    pub tensor_cap: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            eta: 1.0,
            anneal_factor: 0.7,
            eta_floor: 1e-5,
            outer_max: 200,
            sinkhorn_max: 2000,
            sinkhorn_tol: 1e-9,
            outer_tol: 1e-8,
            restarts: 3,
            seed: 0,
            round_plan: true,
            tensor_cap: 10_000_000,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "anneal_factor must lie in (0, 1), got {}",
                self.anneal_factor
            )));
        }
        if !(self.eta_floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta_floor must be positive, got {}",
                self.eta_floor
            )));
        }
        if self.outer_max == 0 || self.sinkhorn_max == 0 || self.restarts == 0 {
            return Err(Error::InvalidParameter(
                "outer_max, sinkhorn_max and restarts must be at least 1".into(),
            ));
        }
        if !(self.sinkhorn_tol > 0.0) || !(self.outer_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "sinkhorn_tol and outer_tol must be positive".into(),
            ));
        }
        if self.tensor_cap == 0 {
            return Err(Error::InvalidParameter("tensor_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Convenience for tests and sweeps.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
