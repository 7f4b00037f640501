//! Multi-marginal Gromov-Wasserstein with pairwise quadratic costs, the
//! epsilon-cost variant, and the unbalanced last-marginal variant used by
//! fixed-support barycenters.
//!
//! The cost couples every pair of spaces through
//! `sum_{i<j} 2 c_ij (d_i(x_i, x_i') - d_j(x_j, x_j'))^2`, so the objective
//! depends on a plan only through its pair 2-marginals. Each alternating
//! step therefore assembles the linearized cost tensor from per-pair
//! matrices (broadcast along their two axes) and hands it to the cyclic
//! multi-marginal Sinkhorn kernel; nothing of size `(prod n_i)^2` is ever
//! materialized.

use ndarray::{Array1, Array2, ArrayD, IxDyn};

use crate::coupling::{pair_marginal, round_to_polytope_multi, MultiPlan, Plan3};
use crate::error::{Error, Result};
use crate::gw::{linearized_cost, quad_cross, AnnealSchedule, SolveTrace, TraceEntry};
use crate::mmspace::MmSpace;
use crate::params::SolverParams;
use crate::sinkhorn::{kl_against_product_multi, log_weights, mean_abs, sinkhorn_multi_log};

/// Symmetric nonnegative pair coefficients `c_ij` with zero diagonal.
#[derive(Debug, Clone)]
pub struct PairwiseCoefficients {
    c: Array2<f64>,
}

impl PairwiseCoefficients {
    pub fn new(c: Array2<f64>) -> Result<Self> {
        let n = c.nrows();
        if c.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "coefficient matrix is {}x{}, must be square",
                n,
                c.ncols()
            )));
        }
        for i in 0..n {
            if c[[i, i]] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "coefficient diagonal must be zero, c[{i}][{i}] = {}",
                    c[[i, i]]
                )));
            }
            for j in 0..n {
                if !(c[[i, j]] >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "coefficients must be nonnegative, c[{i}][{j}] = {}",
                        c[[i, j]]
                    )));
                }
                if (c[[i, j]] - c[[j, i]]).abs() > 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "coefficients must be symmetric, c[{i}][{j}] != c[{j}][{i}]"
                    )));
                }
            }
        }
        Ok(PairwiseCoefficients { c })
    }

    /// All off-diagonal coefficients set to `value`.
    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        let mut c = Array2::from_elem((n, n), value);
        for i in 0..n {
            c[[i, i]] = 0.0;
        }
        PairwiseCoefficients::new(c)
    }

    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[[i, j]]
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.c
    }

    fn pairs(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.c[[i, j]] > 0.0 {
                    out.push((i, j, self.c[[i, j]]));
                }
            }
        }
        out
    }
}

/// The epsilon-perturbed cost over `(S, X, Y)`: full weight on both anchor
/// pairs, weight `eps` on the `(X, Y)` pair.
#[derive(Debug, Clone, Copy)]
pub struct EpsCost {
    pub eps: f64,
}

impl EpsCost {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        Ok(EpsCost { eps })
    }

    pub fn coefficients(&self) -> PairwiseCoefficients {
        let mut c = Array2::zeros((3, 3));
        c[[0, 1]] = 1.0;
        c[[1, 0]] = 1.0;
        c[[0, 2]] = 1.0;
        c[[2, 0]] = 1.0;
        c[[1, 2]] = self.eps;
        c[[2, 1]] = self.eps;
        PairwiseCoefficients::new(c).expect("valid by construction")
    }
}

fn check_spaces_plan(spaces: &[&MmSpace], mass_shape: &[usize]) -> Result<()> {
    if spaces.len() != mass_shape.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} spaces for a plan with {} axes",
            spaces.len(),
            mass_shape.len()
        )));
    }
    for (axis, (space, &n)) in spaces.iter().zip(mass_shape.iter()).enumerate() {
        if space.n() != n {
            return Err(Error::ShapeMismatch(format!(
                "axis {axis} has {n} atoms but space {} has {}",
                space.label(),
                space.n()
            )));
        }
    }
    Ok(())
}

/// Pair quadratic term `Q_ij` evaluated on the `(i, j)` 2-marginal.
fn pair_term(spaces: &[&MmSpace], mass: &ArrayD<f64>, i: usize, j: usize) -> f64 {
    let pm = pair_marginal(mass, i, j);
    quad_cross(spaces[i].dist(), spaces[j].dist(), &pm, &pm)
}

/// `sum_{i<j} 2 c_ij Q_ij(plan)`; agrees with the naive double tensor sum
/// over the pointwise cost.
pub fn mgw_objective(
    spaces: &[&MmSpace],
    coeffs: &PairwiseCoefficients,
    plan: &MultiPlan,
) -> Result<f64> {
    check_spaces_plan(spaces, plan.mass().shape())?;
    if coeffs.n() != spaces.len() {
        return Err(Error::ShapeMismatch(format!(
            "coefficients are {}x{} for {} spaces",
            coeffs.n(),
            coeffs.n(),
            spaces.len()
        )));
    }
    let mut total = 0.0;
    for (i, j, c) in coeffs.pairs() {
        total += 2.0 * c * pair_term(spaces, plan.mass(), i, j);
    }
    Ok(total)
}

fn objective_of(spaces: &[&MmSpace], pairs: &[(usize, usize, f64)], mass: &ArrayD<f64>) -> f64 {
    pairs.iter().map(|&(i, j, c)| 2.0 * c * pair_term(spaces, mass, i, j)).sum()
}

/// Cross energy `Q(pi, rho)` between two plans under the pairwise cost.
fn cross_energy(
    spaces: &[&MmSpace],
    pairs: &[(usize, usize, f64)],
    pi: &ArrayD<f64>,
    rho: &ArrayD<f64>,
) -> f64 {
    pairs
        .iter()
        .map(|&(i, j, c)| {
            let a = pair_marginal(pi, i, j);
            let b = pair_marginal(rho, i, j);
            2.0 * c * quad_cross(spaces[i].dist(), spaces[j].dist(), &a, &b)
        })
        .sum()
}

/// Linearized cost tensor `G(pi)[x] = sum_{i<j} 2 c_ij A_ij[x_i, x_j]` with
/// `A_ij` the pairwise linearized cost at the `(i, j)` 2-marginal of `pi`.
fn linearized_tensor(
    spaces: &[&MmSpace],
    pairs: &[(usize, usize, f64)],
    mass: &ArrayD<f64>,
) -> ArrayD<f64> {
    let shape: Vec<usize> = mass.shape().to_vec();
    let mut g = ArrayD::zeros(IxDyn(&shape));
    for &(i, j, c) in pairs {
        let pm = pair_marginal(mass, i, j);
        let a = linearized_cost(spaces[i].dist(), spaces[j].dist(), &pm);
        // broadcast A over the remaining axes
        let mut view_shape = vec![1usize; shape.len()];
        view_shape[i] = shape[i];
        view_shape[j] = shape[j];
        let a_dyn = a.into_shape_with_order(IxDyn(&view_shape)).expect("pair shape");
        let broadcast = a_dyn.broadcast(IxDyn(&shape)).expect("broadcastable");
        g.zip_mut_with(&broadcast, |dst, &src| *dst += 2.0 * c * src);
    }
    g
}

fn product_reference(refs: &[Array1<f64>], shape: &[usize]) -> ArrayD<f64> {
    let mut plan = ArrayD::from_elem(IxDyn(shape), 1.0);
    for (ix, v) in plan.indexed_iter_mut() {
        for axis in 0..refs.len() {
            *v *= refs[axis][ix[axis]];
        }
    }
    plan
}

#[derive(Debug, Clone)]
pub struct MgwResult {
    pub plan: MultiPlan,
    pub value: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub last_change: f64,
}

/// Solves the multi-marginal problem over the given spaces. Axes with
/// `constrained[i] == false` have no marginal constraint (the unbalanced
/// variant); their reference measure is uniform.
pub fn solve_mgw(
    spaces: &[&MmSpace],
    coeffs: &PairwiseCoefficients,
    params: &SolverParams,
    constrained: &[bool],
) -> Result<MgwResult> {
    solve_mgw_warm(spaces, coeffs, params, constrained, None).map(|(r, _)| r)
}

/// As [`solve_mgw`] with an optional warm-start plan. A warm start replaces
/// the restart sweep with a single refinement run whose regularization
/// begins two annealing levels above the floor.
pub fn solve_mgw_warm(
    spaces: &[&MmSpace],
    coeffs: &PairwiseCoefficients,
    params: &SolverParams,
    constrained: &[bool],
    warm_start: Option<&ArrayD<f64>>,
) -> Result<(MgwResult, SolveTrace)> {
    params.validate()?;
    let n_axes = spaces.len();
    if n_axes == 0 {
        return Err(Error::InvalidParameter("need at least one space".into()));
    }
    if coeffs.n() != n_axes || constrained.len() != n_axes {
        return Err(Error::ShapeMismatch(format!(
            "got {} spaces, {}x{} coefficients, {} constraint flags",
            n_axes,
            coeffs.n(),
            coeffs.n(),
            constrained.len()
        )));
    }
    let shape: Vec<usize> = spaces.iter().map(|s| s.n()).collect();
    let entries: usize = shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).unwrap_or(usize::MAX);
    if entries > params.tensor_cap {
        return Err(Error::TensorTooLarge { entries, cap: params.tensor_cap });
    }
    if let Some(w) = warm_start {
        if w.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "warm start has shape {:?}, expected {:?}",
                w.shape(),
                shape
            )));
        }
    }

    let refs: Vec<Array1<f64>> = spaces
        .iter()
        .zip(constrained.iter())
        .map(|(s, &con)| {
            if con {
                s.weights().clone()
            } else {
                Array1::from_elem(s.n(), 1.0 / s.n() as f64)
            }
        })
        .collect();
    let log_refs: Vec<Array1<f64>> = refs.iter().map(log_weights).collect();
    let pairs = coeffs.pairs();
    let mut trace = SolveTrace::default();

    struct Candidate {
        objective: f64,
        mass: ArrayD<f64>,
        converged: bool,
        iterations: usize,
        last_change: f64,
    }
    let mut best: Option<Candidate> = None;

    let restarts = if warm_start.is_some() { 1 } else { params.restarts };
    for restart in 0..restarts {
        let mut plan = match warm_start {
            Some(w) => w.clone(),
            None => {
                let mut p = product_reference(&refs, &shape);
                if restart > 0 {
                    use rand::{Rng, SeedableRng};
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                        params.seed.wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                    );
                    for v in p.iter_mut() {
                        *v *= 1.0 + 0.5 * rng.random_range(0.0..1.0);
                    }
                    let total = p.sum();
                    p.mapv_inplace(|v| v / total);
                }
                p
            }
        };
        let mut objective = objective_of(spaces, &pairs, &plan);
        let scale = mean_abs(&linearized_tensor(spaces, &pairs, &plan));
        let mut converged = true;
        let mut iterations = 0usize;
        let mut last_change = 0.0f64;

        if scale > f64::MIN_POSITIVE && objective > 1e-30 {
            let floor = params.eta_floor * scale;
            let eta0 = if warm_start.is_some() {
                // refine: a couple of levels of smoothing, then the floor
                (floor / (params.anneal_factor * params.anneal_factor)).min((params.eta * scale).max(floor))
            } else {
                (params.eta * crate::gw::eta_start_multiplier(restart) * scale).max(floor)
            };
            let schedule = AnnealSchedule::new(eta0, floor, params);
            let mut eta = eta0;
            let mut potentials: Vec<Array1<f64>> = shape.iter().map(|&n| Array1::zeros(n)).collect();
            converged = false;
            'outer: loop {
                let at_floor = schedule.at_floor(eta);
                let stall_tol = schedule.stall_tol(at_floor);
                let mut level_iters = 0usize;
                let mut stalled = false;
                while iterations < params.outer_max && (at_floor || level_iters < schedule.level_cap) {
                    let cost = linearized_tensor(spaces, &pairs, &plan);
                    let run = sinkhorn_multi_log(
                        &cost,
                        &log_refs,
                        constrained,
                        eta,
                        params.sinkhorn_max,
                        params.sinkhorn_tol,
                        &mut potentials,
                    )?;
                    let next = run.plan;
                    let next_obj = objective_of(spaces, &pairs, &next);
                    let pair_energy = cross_energy(spaces, &pairs, &plan, &next)
                        + eta
                            * (kl_against_product_multi(&plan, &log_refs)
                                + kl_against_product_multi(&next, &log_refs));
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

    let cand = best.expect("at least one restart");
    let mut mass = cand.mass;
    if params.round_plan {
        let prescribed: Vec<Option<&Array1<f64>>> = (0..n_axes)
            .map(|axis| constrained[axis].then(|| spaces[axis].weights()))
            .collect();
        round_to_polytope_multi(&mut mass, &prescribed);
    }
    let prescribed: Vec<Option<Array1<f64>>> = (0..n_axes)
        .map(|axis| constrained[axis].then(|| spaces[axis].weights().clone()))
        .collect();
    let plan = MultiPlan::new(mass, prescribed)?;
    let value = objective_of(spaces, &pairs, plan.mass());
    Ok((
        MgwResult {
            plan,
            value,
            converged: cand.converged,
            outer_iterations: cand.iterations,
            last_change: cand.last_change,
        },
        trace,
    ))
}

#[derive(Debug, Clone)]
pub struct MgwEpsResult {
    pub plan: Plan3,
    /// `eps * quad_part + anchor_sx + anchor_sy`.
    pub value: f64,
    /// `Q_XY` of the returned plan.
    pub quad_part: f64,
    /// `Q_SX` of the returned plan.
    pub anchor_sx: f64,
    /// `Q_SY` of the returned plan.
    pub anchor_sy: f64,
    pub converged: bool,
}

/// Solves the epsilon-perturbed three-marginal problem and splits its
/// objective into the quadratic `(X, Y)` part and the two anchor parts.
pub fn solve_mgw_eps(
    s: &MmSpace,
    x: &MmSpace,
    y: &MmSpace,
    eps: f64,
    params: &SolverParams,
    warm_start: Option<&Plan3>,
) -> Result<MgwEpsResult> {
    let eps = EpsCost::new(eps)?;
    let spaces = [s, x, y];
    let coeffs = eps.coefficients();
    let warm_mass = warm_start.map(|p| p.mass().clone().into_dyn());
    let (res, _) = solve_mgw_warm(
        &spaces,
        &coeffs,
        params,
        &[true, true, true],
        warm_mass.as_ref(),
    )?;
    let mass = res.plan.mass();
    let anchor_sx = pair_term(&spaces, mass, 0, 1);
    let anchor_sy = pair_term(&spaces, mass, 0, 2);
    let quad_part = pair_term(&spaces, mass, 1, 2);
    let plan = Plan3::from_multi(&res.plan)?;
    Ok(MgwEpsResult {
        plan,
        value: eps.eps * quad_part + anchor_sx + anchor_sy,
        quad_part,
        anchor_sx,
        anchor_sy,
        converged: res.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmspace::{generate, SpaceKind};
    use crate::oracle::naive_mgw_objective;

    fn two_point(a: f64) -> MmSpace {
        generate(SpaceKind::TwoPoint { a }, None).unwrap()
    }

    fn params() -> SolverParams {
        SolverParams::default()
    }

    #[test]
    fn coefficient_validation() {
        assert!(PairwiseCoefficients::uniform(3, 1.0).is_ok());
        let mut bad = Array2::zeros((2, 2));
        bad[[0, 0]] = 1.0;
        assert!(PairwiseCoefficients::new(bad).is_err());
        let mut asym = Array2::zeros((2, 2));
        asym[[0, 1]] = 1.0;
        assert!(PairwiseCoefficients::new(asym).is_err());
        assert!(EpsCost::new(0.0).is_err());
    }

    #[test]
    fn objective_identical_spaces_diagonal_plan_is_zero() {
        let x = generate(SpaceKind::RandomCloud { seed: 1, n: 3, d: 2 }, None).unwrap();
        let spaces = [&x, &x, &x];
        let mut mass = ArrayD::zeros(IxDyn(&[3, 3, 3]));
        for i in 0..3 {
            mass[[i, i, i]] = x.weights()[i];
        }
        let plan = MultiPlan::new(
            mass,
            vec![
                Some(x.weights().clone()),
                Some(x.weights().clone()),
                Some(x.weights().clone()),
            ],
        )
        .unwrap();
        let coeffs = PairwiseCoefficients::uniform(3, 1.0).unwrap();
        let v = mgw_objective(&spaces, &coeffs, &plan).unwrap();
        assert!(v.abs() < 1e-12, "objective {v}");
    }

    #[test]
    fn objective_two_marginal_reduction_is_gw() {
        let x = two_point(1.0);
        let y = two_point(3.0);
        let plan2 = crate::coupling::Plan2::identity(x.weights());
        let gw = crate::gw::gw_objective(&x, &y, &plan2).unwrap();

        let mass = plan2.mass().clone().into_dyn();
        let plan = MultiPlan::new(
            mass,
            vec![Some(x.weights().clone()), Some(y.weights().clone())],
        )
        .unwrap();
        let coeffs = PairwiseCoefficients::uniform(2, 0.5).unwrap();
        let v = mgw_objective(&[&x, &y], &coeffs, &plan).unwrap();
        assert!((v - gw).abs() < 1e-12, "mgw {v} vs gw {gw}");
    }

    #[test]
    fn objective_matches_naive_double_sum() {
        let a = two_point(1.0);
        let b = two_point(2.0);
        let c = two_point(3.0);
        let spaces = [&a, &b, &c];
        let refs: Vec<Array1<f64>> =
            spaces.iter().map(|s| s.weights().clone()).collect();
        let mass = product_reference(&refs, &[2, 2, 2]);
        let plan = MultiPlan::new(
            mass.clone(),
            refs.iter().cloned().map(Some).collect(),
        )
        .unwrap();
        let coeffs = PairwiseCoefficients::uniform(3, 1.0).unwrap();
        let fast = mgw_objective(&spaces, &coeffs, &plan).unwrap();
        let naive = naive_mgw_objective(&spaces, coeffs.matrix(), &mass);
        assert!(
            (fast - naive).abs() <= 1e-10 * (1.0 + naive.abs()),
            "fast {fast} vs naive {naive}"
        );
    }

    #[test]
    fn pair_marginal_invariance() {
        // adding a parity perturbation leaves every pair marginal unchanged,
        // so the objective cannot move
        let a = two_point(1.0);
        let b = two_point(2.0);
        let c = two_point(3.0);
        let spaces = [&a, &b, &c];
        let refs: Vec<Array1<f64>> = spaces.iter().map(|s| s.weights().clone()).collect();
        let base = product_reference(&refs, &[2, 2, 2]);
        let mut perturbed = base.clone();
        for (ix, v) in perturbed.indexed_iter_mut() {
            let parity = (ix[0] + ix[1] + ix[2]) % 2;
            *v += if parity == 0 { 0.05 } else { -0.05 };
        }
        let coeffs = PairwiseCoefficients::uniform(3, 1.0).unwrap();
        let plan_a = MultiPlan::new(base, refs.iter().cloned().map(Some).collect()).unwrap();
        let plan_b = MultiPlan::new(perturbed, refs.iter().cloned().map(Some).collect()).unwrap();
        let va = mgw_objective(&spaces, &coeffs, &plan_a).unwrap();
        let vb = mgw_objective(&spaces, &coeffs, &plan_b).unwrap();
        assert!((va - vb).abs() <= 1e-12, "{va} vs {vb}");
    }

    #[test]
    fn solve_identical_spaces_reaches_zero() {
        let x = generate(SpaceKind::RandomCloud { seed: 8, n: 3, d: 2 }, None).unwrap();
        let spaces = [&x, &x, &x];
        let coeffs = PairwiseCoefficients::uniform(3, 1.0).unwrap();
        let res = solve_mgw(&spaces, &coeffs, &params(), &[true, true, true]).unwrap();
        assert!(res.value <= 1e-4, "value {}", res.value);
    }

    #[test]
    fn solve_n2_matches_pairwise_solver() {
        let x = generate(SpaceKind::RandomCloud { seed: 21, n: 4, d: 2 }, None).unwrap();
        let y = generate(SpaceKind::RandomCloud { seed: 22, n: 4, d: 2 }, None).unwrap();
        let coeffs = PairwiseCoefficients::uniform(2, 0.5).unwrap();
        let res = solve_mgw(&[&x, &y], &coeffs, &params(), &[true, true]).unwrap();
        let gw = crate::gw::solve_gw(&x, &y, &params()).unwrap();
        let want = gw.value * gw.value;
        assert!(
            (res.value - want).abs() <= 0.01 * want.max(1e-9),
            "mgw {} vs gw^2 {want}",
            res.value
        );
    }

    #[test]
    fn solve_three_two_points_matches_brute_grid() {
        let a = two_point(1.0);
        let b = two_point(2.0);
        let c = two_point(3.0);
        let spaces = [&a, &b, &c];
        let coeffs = PairwiseCoefficients::uniform(3, 1.0).unwrap();
        let res = solve_mgw(&spaces, &coeffs, &params(), &[true, true, true]).unwrap();

        // independent brute grid: a 2x2x2 plan with uniform marginals has
        // four free entries, the rest are pinned by the marginal equations
        let mut best = f64::INFINITY;
        let steps = 21usize;
        let grid = |i: usize| 0.5 * i as f64 / (steps - 1) as f64;
        for p in (0..steps).map(grid) {
            for q in (0..steps).map(grid) {
                for r in (0..steps).map(grid) {
                    for w in (0..steps).map(grid) {
                        let mut m = ArrayD::zeros(IxDyn(&[2, 2, 2]));
                        m[[0, 0, 0]] = p;
                        m[[0, 0, 1]] = q;
                        m[[0, 1, 0]] = r;
                        m[[1, 0, 0]] = w;
                        let forced = [
                            ([0usize, 1, 1], 0.5 - p - q - r),
                            ([1, 0, 1], 0.5 - p - q - w),
                            ([1, 1, 0], 0.5 - p - r - w),
                        ];
                        let mut feasible = true;
                        for (ix, v) in forced {
                            if v < 0.0 {
                                feasible = false;
                                break;
                            }
                            m[IxDyn(&ix)] = v;
                        }
                        if !feasible {
                            continue;
                        }
                        let rest = 1.0 - m.sum();
                        if rest < 0.0 {
                            continue;
                        }
                        m[[1, 1, 1]] = rest;
                        let ok = (0..3).all(|axis| {
                            crate::coupling::axis_marginal(&m, axis)
                                .iter()
                                .all(|&v| (v - 0.5).abs() < 1e-9)
                        });
                        if !ok {
                            continue;
                        }
                        let obj = naive_mgw_objective(&spaces, coeffs.matrix(), &m);
                        if obj < best {
                            best = obj;
                        }
                    }
                }
            }
        }
        assert!(
            res.value <= best + 0.01 * (1.0 + best),
            "solver {} vs brute {best}",
            res.value
        );
    }

    #[test]
    fn eps_split_and_linearity() {
        let s = two_point(2.0);
        let x = two_point(1.0);
        let y = two_point(3.0);
        let res = solve_mgw_eps(&s, &x, &y, 0.5, &params(), None).unwrap();
        let recomposed = 0.5 * res.quad_part + res.anchor_sx + res.anchor_sy;
        assert!((res.value - recomposed).abs() < 1e-12);

        // evaluating one fixed plan under two eps values is monotone in eps
        let parts = |eps: f64| eps * res.quad_part + res.anchor_sx + res.anchor_sy;
        assert!(parts(0.25) <= parts(0.5));
    }

    #[test]
    fn eps_identical_spaces_near_zero() {
        let x = generate(SpaceKind::RandomCloud { seed: 31, n: 3, d: 2 }, None).unwrap();
        let res = solve_mgw_eps(&x, &x, &x, 1.0, &params(), None).unwrap();
        assert!(res.value <= 1e-4, "value {}", res.value);
        assert!(res.quad_part <= 1e-4, "quad {}", res.quad_part);
    }

    #[test]
    fn tensor_cap_enforced() {
        let x = generate(SpaceKind::RandomCloud { seed: 1, n: 30, d: 2 }, None).unwrap();
        let spaces = [&x, &x, &x, &x, &x];
        let coeffs = PairwiseCoefficients::uniform(5, 1.0).unwrap();
        let err = solve_mgw(&spaces, &coeffs, &params(), &[true; 5]).unwrap_err();
        assert_eq!(err.kind(), "TensorTooLarge");
    }

    #[test]
    fn unbalanced_axis_has_no_constraint() {
        let x = generate(SpaceKind::RandomCloud { seed: 14, n: 4, d: 2 }, None).unwrap();
        let y = generate(SpaceKind::RandomCloud { seed: 15, n: 4, d: 2 }, None).unwrap();
        let coeffs = PairwiseCoefficients::uniform(2, 0.5).unwrap();
        let res = solve_mgw(&[&x, &y], &coeffs, &params(), &[true, false]).unwrap();
        assert!(!res.plan.constrained()[1]);
        // the free marginal is an output: it matches the plan exactly
        let got = res.plan.axis_marginal(1);
        for (a, b) in got.iter().zip(res.plan.marginals()[1].iter()) {
            assert_eq!(a, b);
        }
    }
}
