//! Pairwise Gromov-Wasserstein: objective evaluation through the squared-loss
//! decomposition, the entropic alternating-minimization solver with annealing
//! and restarts, and the optimality residual used to test approximate
//! membership in the set of optimal plans.
//!
//! The quadratic objective is
//! `F(pi) = sum_{i,j,k,l} (d_X[i,k] - d_Y[j,l])^2 pi[i,j] pi[k,l]`
//! and expands into three matrix products, so evaluation costs
//! `O(n^2 m + n m^2)` instead of `O(n^2 m^2)`. Each outer step linearizes the
//! objective at the current plan and hands the resulting cost matrix to
//! log-domain Sinkhorn; the regularization anneals geometrically toward a
//! floor. The reported `value` is a distance, i.e. the square root of the
//! minimized objective.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coupling::{round_to_polytope, Plan2, MARGINAL_TOL};
use crate::error::{Error, Result};
use crate::mmspace::MmSpace;
use crate::params::SolverParams;
use crate::sinkhorn::{kl_against_product, log_weights, mean_abs, sinkhorn_log};

/// Scale for the default optimality threshold: a plan counts as approximately
/// optimal when its residual is at most `1e-5 * (1 + value^2)`.
pub const OPT_TOL_SCALE: f64 = 1e-5;

pub fn opt_tol(value_sq: f64) -> f64 {
    OPT_TOL_SCALE * (1.0 + value_sq)
}

/// Cross quadratic form
/// `Q(pi, rho) = sum (d_X[i,k] - d_Y[j,l])^2 pi[i,j] rho[k,l]`
/// via the decomposition; exact for arbitrary nonnegative matrices since the
/// marginals are recomputed from the arguments.
pub(crate) fn quad_cross(dx: &Array2<f64>, dy: &Array2<f64>, pi: &Array2<f64>, rho: &Array2<f64>) -> f64 {
    let p_pi = pi.sum_axis(ndarray::Axis(1));
    let q_pi = pi.sum_axis(ndarray::Axis(0));
    let p_rho = rho.sum_axis(ndarray::Axis(1));
    let q_rho = rho.sum_axis(ndarray::Axis(0));
    let dx2 = dx.mapv(|v| v * v);
    let dy2 = dy.mapv(|v| v * v);
    let term_x = p_pi.dot(&dx2.dot(&p_rho));
    let term_y = q_pi.dot(&dy2.dot(&q_rho));
    // d_Y is symmetric, so <pi, dx rho dy> needs no transpose
    let cross = (pi * &dx.dot(rho).dot(dy)).sum();
    term_x + term_y - 2.0 * cross
}

/// Linearized cost `C(rho)[i,j] = sum_{k,l} (d_X[i,k] - d_Y[j,l])^2 rho[k,l]`.
pub(crate) fn linearized_cost(dx: &Array2<f64>, dy: &Array2<f64>, rho: &Array2<f64>) -> Array2<f64> {
    let p = rho.sum_axis(ndarray::Axis(1));
    let q = rho.sum_axis(ndarray::Axis(0));
    let dx2p = dx.mapv(|v| v * v).dot(&p);
    let dy2q = dy.mapv(|v| v * v).dot(&q);
    let cross = dx.dot(rho).dot(dy);
    let (n, m) = (dx.nrows(), dy.nrows());
    Array2::from_shape_fn((n, m), |(i, j)| dx2p[i] + dy2q[j] - 2.0 * cross[[i, j]])
}

/// Evaluates the GW objective of a feasible plan between two spaces.
pub fn gw_objective(x: &MmSpace, y: &MmSpace, plan: &Plan2) -> Result<f64> {
    if plan.mass().nrows() != x.n() || plan.mass().ncols() != y.n() {
        return Err(Error::ShapeMismatch(format!(
            "plan is {}x{} for spaces of size {} and {}",
            plan.mass().nrows(),
            plan.mass().ncols(),
            x.n(),
            y.n()
        )));
    }
    for (axis, (got, want)) in
        [(0usize, (plan.mu(), x.weights())), (1, (plan.nu(), y.weights()))].into_iter()
    {
        let mut worst = 0.0f64;
        for (g, w) in got.iter().zip(want.iter()) {
            worst = worst.max((g - w).abs());
        }
        if worst > MARGINAL_TOL {
            return Err(Error::MarginalMismatch { axis, violation: worst, tol: MARGINAL_TOL });
        }
    }
    Ok(quad_cross(x.dist(), y.dist(), plan.mass(), plan.mass()))
}

/// One outer iteration of a solver, for diagnostics and the monotonicity
/// tests. `pair_energy` is the consecutive-pair entropic energy
/// `Q(pi_t, pi_{t+1}) + eta (KL(pi_t) + KL(pi_{t+1}))`, which alternating
/// minimization never increases at fixed `eta`.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub restart: usize,
    pub eta: f64,
    pub objective: f64,
    pub pair_energy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct GwResult {
    pub plan: Plan2,
    /// The GW distance (square root of the minimized objective).
    pub value: f64,
    /// False when the outer budget ran out before the objective stalled at
    /// the annealing floor; the best iterate is still returned.
    pub converged: bool,
    pub outer_iterations: usize,
    pub last_change: f64,
}

/// The annealing schedule shared by the entropic solvers. Levels above the
/// floor are warm-starts for the next level, so they stall early (loose
/// tolerance, capped iterations, at most half the outer budget in total);
/// only the floor level runs to the configured `outer_tol`.
pub(crate) struct AnnealSchedule {
    pub level_cap: usize,
    floor: f64,
    loose_tol: f64,
    strict_tol: f64,
}

impl AnnealSchedule {
    pub fn new(eta0: f64, floor: f64, params: &SolverParams) -> Self {
        let levels = if eta0 > floor {
            ((floor / eta0).ln() / params.anneal_factor.ln()).ceil().max(1.0) as usize
        } else {
            1
        };
        AnnealSchedule {
            level_cap: ((params.outer_max / 2) / levels).max(2),
            floor,
            loose_tol: params.outer_tol.max(1e-4),
            strict_tol: params.outer_tol,
        }
    }

    pub fn at_floor(&self, eta: f64) -> bool {
        eta <= self.floor * (1.0 + 1e-12)
    }

    pub fn stall_tol(&self, at_floor: bool) -> f64 {
        if at_floor {
            self.strict_tol
        } else {
            self.loose_tol
        }
    }
}

/// Restarts diversify the annealing path as well as the starting plan: the
/// continuation path out of the product measure bifurcates with the starting
/// temperature, and plan perturbations alone wash out in the first scaling
/// pass at high regularization. Restart 0 keeps the default path.
pub(crate) fn eta_start_multiplier(restart: usize) -> f64 {
    const MULTIPLIERS: [f64; 5] = [1.0, 0.3, 3.0, 0.1, 10.0];
    MULTIPLIERS[restart % MULTIPLIERS.len()]
}

pub(crate) fn perturbed_product(
    mu: &Array1<f64>,
    nu: &Array1<f64>,
    seed: u64,
    restart: usize,
) -> Array2<f64> {
    let mut plan = Array2::from_shape_fn((mu.len(), nu.len()), |(i, j)| mu[i] * nu[j]);
    if restart > 0 {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        for v in plan.iter_mut() {
            *v *= 1.0 + 0.5 * rng.random_range(0.0..1.0);
        }
        let total = plan.sum();
        plan.mapv_inplace(|v| v / total);
    }
    plan
}

/// Solves the pairwise GW problem; the returned value is the best over
/// `params.restarts` initializations (product measure, then seeded random
/// perturbations of it). Deterministic given `(params.seed, inputs)`.
pub fn solve_gw(x: &MmSpace, y: &MmSpace, params: &SolverParams) -> Result<GwResult> {
    solve_gw_traced(x, y, params).map(|(r, _)| r)
}

/// As [`solve_gw`], also returning the per-iteration trace.
pub fn solve_gw_traced(x: &MmSpace, y: &MmSpace, params: &SolverParams) -> Result<(GwResult, SolveTrace)> {
    params.validate()?;
    let (dx, dy) = (x.dist(), y.dist());
    let (mu, nu) = (x.weights(), y.weights());
    let (log_mu, log_nu) = (log_weights(mu), log_weights(nu));
    let mut trace = SolveTrace::default();

    struct Candidate {
        objective: f64,
        mass: Array2<f64>,
        converged: bool,
        iterations: usize,
        last_change: f64,
    }
    let mut best: Option<Candidate> = None;

    for restart in 0..params.restarts {
        let mut plan = perturbed_product(mu, nu, params.seed, restart);
        let mut objective = quad_cross(dx, dy, &plan, &plan);
        let scale = mean_abs(&linearized_cost(dx, dy, &plan));
        let mut converged = true;
        let mut iterations = 0usize;
        let mut last_change = 0.0f64;

        if scale > f64::MIN_POSITIVE && objective > 1e-30 {
            let floor = params.eta_floor * scale;
            let eta0 = (params.eta * eta_start_multiplier(restart) * scale).max(floor);
            let schedule = AnnealSchedule::new(eta0, floor, params);
            let mut eta = eta0;
            let mut f = Array1::zeros(mu.len());
            let mut g = Array1::zeros(nu.len());
            converged = false;
            'outer: loop {
                let at_floor = schedule.at_floor(eta);
                let stall_tol = schedule.stall_tol(at_floor);
                let mut level_iters = 0usize;
                let mut stalled = false;
                while iterations < params.outer_max && (at_floor || level_iters < schedule.level_cap) {
                    let cost = linearized_cost(dx, dy, &plan);
                    let run = sinkhorn_log(
                        &cost,
                        &log_mu,
                        &log_nu,
                        eta,
                        params.sinkhorn_max,
                        params.sinkhorn_tol,
                        &mut f,
                        &mut g,
                    )?;
                    let next = run.plan;
                    let next_obj = quad_cross(dx, dy, &next, &next);
                    let pair_energy = quad_cross(dx, dy, &plan, &next)
                        + eta
                            * (kl_against_product(&plan, &log_mu, &log_nu)
                                + kl_against_product(&next, &log_mu, &log_nu));
                    trace.entries.push(TraceEntry { restart, eta, objective: next_obj, pair_energy });
                    iterations += 1;
                    level_iters += 1;
                    last_change = (next_obj - objective).abs() / (1.0 + next_obj.abs());
                    plan = next;
                    objective = next_obj;
                    if last_change <= stall_tol || objective <= 1e-30 {
                        stalled = true;
                        break;
                    }
                }
                if at_floor || objective <= 1e-30 {
                    converged = stalled || objective <= 1e-30;
                    break 'outer;
                }
                if iterations >= params.outer_max {
                    break 'outer;
                }
                eta = (eta * params.anneal_factor).max(floor);
            }
        }

        let better = best.as_ref().map_or(true, |b| objective < b.objective);
        if better {
            best = Some(Candidate { objective, mass: plan, converged, iterations, last_change });
        }
    }

    let cand = best.expect("restarts >= 1");
    let mut mass = cand.mass;
    if params.round_plan {
        round_to_polytope(&mut mass, mu, nu);
    }
    let plan = Plan2::new(mass, mu.clone(), nu.clone())?;
    let objective = quad_cross(dx, dy, plan.mass(), plan.mass());
    Ok((
        GwResult {
            plan,
            value: objective.max(0.0).sqrt(),
            converged: cand.converged,
            outer_iterations: cand.iterations,
            last_change: cand.last_change,
        },
        trace,
    ))
}

/// `gw_objective(plan) - solve_gw(x, y).value^2`: nonnegative up to solver
/// error, and at most [`opt_tol`] of the value for plans accepted as
/// approximately optimal.
pub fn optimality_residual(x: &MmSpace, y: &MmSpace, plan: &Plan2, params: &SolverParams) -> Result<f64> {
    let objective = gw_objective(x, y, plan)?;
    let solved = solve_gw(x, y, params)?;
    if !solved.converged {
        return Err(Error::NonConvergence {
            context: format!("GW({}, {})", x.label(), y.label()),
            iterations: solved.outer_iterations,
            last_change: solved.last_change,
        });
    }
    Ok(objective - solved.value * solved.value)
}

/// Entropic optimal transport with a fixed cost matrix:
/// `plan = diag(u) exp(-cost/eta) diag(v)` with L1 marginal violation at most
/// `tol`. Log-domain throughout, so small `eta` cannot overflow.
pub fn sinkhorn(
    cost: &Array2<f64>,
    mu: &Array1<f64>,
    nu: &Array1<f64>,
    eta: f64,
    max_iter: usize,
    tol: f64,
) -> Result<Plan2> {
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow("sinkhorn cost must be finite".into()));
    }
    for (i, &w) in mu.iter().enumerate() {
        if !(w > 0.0) {
            return Err(Error::NonpositiveWeight { i, value: w });
        }
    }
    for (i, &w) in nu.iter().enumerate() {
        if !(w > 0.0) {
            return Err(Error::NonpositiveWeight { i, value: w });
        }
    }
    if !(tol > 0.0) || tol > MARGINAL_TOL {
        return Err(Error::InvalidParameter(format!(
            "sinkhorn tolerance must lie in (0, {MARGINAL_TOL}], got {tol}"
        )));
    }
    let mut f = Array1::zeros(mu.len());
    let mut g = Array1::zeros(nu.len());
    let run = sinkhorn_log(cost, &log_weights(mu), &log_weights(nu), eta, max_iter, tol, &mut f, &mut g)?;
    if run.violation > tol {
        return Err(Error::NonConvergence {
            context: "sinkhorn scaling".into(),
            iterations: run.iterations,
            last_change: run.violation,
        });
    }
    Plan2::new(run.plan, mu.clone(), nu.clone())
}
