//! Free- and fixed-support GW barycenters on top of the multi-marginal
//! solver.
//!
//! Free support: solve the multi-marginal problem with coefficients
//! `c_ij = rho_i rho_j / 2`; the barycenter lives on the product of the
//! input supports with `d*(x, x') = sum_i rho_i d_i(x_i, x_i')` and the plan
//! itself as its measure. Entropic plans are dense, so atoms below a pruning
//! threshold are dropped and the retained weights renormalized.
//!
//! Fixed support: the support's distance matrix is prescribed and only the
//! weights are optimized, via the unbalanced multi-marginal problem whose
//! last axis (the support) carries no marginal constraint; the output
//! weights are that axis's marginal of the optimal plan.

use ndarray::{Array1, Array2, Dimension};
use rayon::prelude::*;

use crate::coupling::MultiPlan;
use crate::error::{Error, Result};
use crate::mgw::{solve_mgw, PairwiseCoefficients};
use crate::mmspace::{validate_dist_matrix, MmSpace, RawSpace};
use crate::params::SolverParams;

/// Nonnegative weights summing to one; zero-weight spaces are dropped before
/// solving.
#[derive(Debug, Clone)]
pub struct BarycenterWeights(Array1<f64>);

impl BarycenterWeights {
    pub fn new(rho: Array1<f64>) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::InvalidParameter("weights must be non-empty".into()));
        }
        for (i, &w) in rho.iter().enumerate() {
            if !(w >= 0.0) {
                return Err(Error::InvalidParameter(format!("rho[{i}] = {w} must be nonnegative")));
            }
        }
        let sum: f64 = rho.sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::WeightSumMismatch { sum, tol: 1e-12 });
        }
        Ok(BarycenterWeights(rho))
    }

    pub fn uniform(n: usize) -> Self {
        BarycenterWeights(Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct FreeBarycenter {
    pub bary: MmSpace,
    /// The full multi-marginal plan before pruning; feasible for the
    /// multi-marginal problem.
    pub plan: MultiPlan,
    /// The multi-marginal objective of `plan`.
    pub value: f64,
    pub converged: bool,
}

/// Solves the free-support barycenter problem. `prune_tol` defaults to
/// `1e-6 / (number of tensor entries)`, which removes at most a `1e-6`
/// fraction of the mass.
pub fn free_support_barycenter(
    spaces: &[&MmSpace],
    rho: &BarycenterWeights,
    params: &SolverParams,
    prune_tol: Option<f64>,
) -> Result<FreeBarycenter> {
    if spaces.len() != rho.len() {
        return Err(Error::LengthMismatch { expected: spaces.len(), got: rho.len() });
    }
    // zero-weight spaces contribute nothing to the cost; drop them
    let active: Vec<(usize, &MmSpace)> = spaces
        .iter()
        .enumerate()
        .filter(|(i, _)| rho.get(*i) > 0.0)
        .map(|(i, s)| (i, *s))
        .collect();
    if active.is_empty() {
        return Err(Error::InvalidParameter("all barycenter weights are zero".into()));
    }
    let act_spaces: Vec<&MmSpace> = active.iter().map(|(_, s)| *s).collect();
    let act_rho: Vec<f64> = active.iter().map(|(i, _)| rho.get(*i)).collect();
    let n = act_spaces.len();

    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                c[[i, j]] = 0.5 * act_rho[i] * act_rho[j];
            }
        }
    }
    let coeffs = PairwiseCoefficients::new(c)?;
    let constrained = vec![true; n];
    let res = solve_mgw(&act_spaces, &coeffs, params, &constrained)?;

    let entries = res.plan.mass().len();
    let prune = prune_tol.unwrap_or(1e-6 / entries as f64);

    let mut kept: Vec<(Vec<usize>, f64)> = Vec::new();
    for (ix, &v) in res.plan.mass().indexed_iter() {
        if v > prune {
            kept.push((ix.slice().to_vec(), v));
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptySupport { prune_tol: prune });
    }
    let total: f64 = kept.iter().map(|(_, v)| v).sum();
    let m = kept.len();
    let mut dist = Array2::zeros((m, m));
    for a in 0..m {
        for b in (a + 1)..m {
            let mut d = 0.0;
            for (axis, space) in act_spaces.iter().enumerate() {
                d += act_rho[axis] * space.dist()[[kept[a].0[axis], kept[b].0[axis]]];
            }
            dist[[a, b]] = d;
            dist[[b, a]] = d;
        }
    }
    let weights = Array1::from_iter(kept.iter().map(|(_, v)| v / total));
    let bary = crate::mmspace::validate(
        RawSpace { label: "barycenter".into(), dist: Some(dist), weights, coords: None },
        false,
    )?;
    Ok(FreeBarycenter { bary, plan: res.plan, value: res.value, converged: res.converged })
}

#[derive(Debug, Clone)]
pub struct FixedBarycenter {
    /// Optimized weights on the prescribed support: the support-axis
    /// marginal of `plan`, exactly.
    pub sigma_star: Array1<f64>,
    pub plan: MultiPlan,
    /// The multi-marginal objective of `plan`.
    pub value: f64,
    pub converged: bool,
}

/// Solves the fixed-support barycenter problem on a prescribed support
/// distance matrix; the support axis is unconstrained and its optimized
/// marginal is the barycenter's weight vector.
pub fn fixed_support_barycenter(
    spaces: &[&MmSpace],
    rho: &BarycenterWeights,
    support_dist: &Array2<f64>,
    params: &SolverParams,
) -> Result<FixedBarycenter> {
    if spaces.len() != rho.len() {
        return Err(Error::LengthMismatch { expected: spaces.len(), got: rho.len() });
    }
    validate_dist_matrix(support_dist, false)?;
    let ns = support_dist.nrows();
    let active: Vec<(usize, &MmSpace)> = spaces
        .iter()
        .enumerate()
        .filter(|(i, _)| rho.get(*i) > 0.0)
        .map(|(i, s)| (i, *s))
        .collect();
    if active.is_empty() {
        return Err(Error::InvalidParameter("all barycenter weights are zero".into()));
    }
    let act_rho: Vec<f64> = active.iter().map(|(i, _)| rho.get(*i)).collect();
    let n = active.len();

    // support enters as one more mm-space; its placeholder weights are the
    // uniform reference of the free axis and never constrain the plan
    let support = crate::mmspace::validate(
        RawSpace {
            label: "support".into(),
            dist: Some(support_dist.clone()),
            weights: Array1::from_elem(ns, 1.0 / ns as f64),
            coords: None,
        },
        false,
    )?;

    let mut all_spaces: Vec<&MmSpace> = active.iter().map(|(_, s)| *s).collect();
    all_spaces.push(&support);
    let mut c = Array2::zeros((n + 1, n + 1));
    for i in 0..n {
        c[[i, n]] = 0.5 * act_rho[i];
        c[[n, i]] = 0.5 * act_rho[i];
    }
    let coeffs = PairwiseCoefficients::new(c)?;
    let mut constrained = vec![true; n + 1];
    constrained[n] = false;
    let res = solve_mgw(&all_spaces, &coeffs, params, &constrained)?;
    let sigma_star = res.plan.axis_marginal(n);
    Ok(FixedBarycenter { sigma_star, plan: res.plan, value: res.value, converged: res.converged })
}

/// `sum_i rho_i GW^2(candidate, X_i)`; zero-weight terms are skipped, so a
/// degenerate `rho` reduces to a single squared distance. The pairwise
/// solves run in parallel.
pub fn barycenter_objective(
    candidate: &MmSpace,
    spaces: &[&MmSpace],
    rho: &BarycenterWeights,
    params: &SolverParams,
) -> Result<f64> {
    if spaces.len() != rho.len() {
        return Err(Error::LengthMismatch { expected: spaces.len(), got: rho.len() });
    }
    let active: Vec<(usize, &MmSpace)> = spaces
        .iter()
        .enumerate()
        .filter(|(i, _)| rho.get(*i) > 0.0)
        .map(|(i, s)| (i, *s))
        .collect();
    let terms: Vec<Result<f64>> = active
        .par_iter()
        .map(|(i, space)| {
            let res = crate::gw::solve_gw(candidate, space, params)?;
            if !res.converged {
                return Err(Error::NonConvergence {
                    context: format!("GW({}, {})", candidate.label(), space.label()),
                    iterations: res.outer_iterations,
                    last_change: res.last_change,
                });
            }
            Ok(rho.get(*i) * res.value * res.value)
        })
        .collect();
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total)
}
