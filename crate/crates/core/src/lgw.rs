//! Linear Gromov-Wasserstein against a reference space.
//!
//! The exact formulation minimizes the `(X, Y)` distance-mismatch energy
//! over 3-plans whose pair projections onto `(S, X)` and `(S, Y)` equal two
//! given (approximately optimal) anchor plans. A 3-plan with both pair
//! projections fixed decomposes, per reference atom `s`, into a free
//! coupling of the two conditionals `piSX[s, .]/sigma_s` and
//! `piSY[s, .]/sigma_s`; the solver alternates between linearizing the
//! quadratic energy at the current `(X, Y)` marginal and re-solving one
//! entropic coupling problem per reference atom. Every iterate stays exactly
//! feasible, so the anchor projections are preserved to machine precision.
//!
//! Also here: the map-based shortcut for graph-concentrated anchors, the
//! lower/upper bound check against pairwise GW, the all-pairs matrix, and
//! the epsilon-sweep tracing multi-marginal minimizers toward linear-GW
//! minimizers as the `(X, Y)` weight vanishes.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coupling::{glue, round_to_polytope, DiscreteMap, MapMode, Plan2, Plan3};
use crate::error::{Error, Result};
use crate::gw::{
    gw_objective, linearized_cost, opt_tol, quad_cross, solve_gw, AnnealSchedule, GwResult,
    SolveTrace, TraceEntry,
};
use crate::mgw::solve_mgw_eps;
use crate::mmspace::MmSpace;
use crate::params::SolverParams;
use crate::sinkhorn::{kl_against_product, log_weights, mean_abs, sinkhorn_log};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LgwMode {
    Exact,
    Maps,
}

#[derive(Debug, Clone)]
pub struct LgwResult {
    /// The linear GW distance (square root of the minimized energy).
    pub value: f64,
    pub plan3: Plan3,
    /// `|Q_SX(plan3) - gw_objective(S, X, piSX)|`; zero up to rounding since
    /// the per-atom updates never touch the pair projections.
    pub residual_sx: f64,
    /// The `(S, Y)` analogue.
    pub residual_sy: f64,
    pub mode: LgwMode,
    pub converged: bool,
}

/// The `(X, Y)` mismatch energy of a 3-plan, from its pair projection.
pub fn lgw_objective(x: &MmSpace, y: &MmSpace, plan3: &Plan3) -> Result<f64> {
    let dim = plan3.mass().dim();
    if dim.1 != x.n() || dim.2 != y.n() {
        return Err(Error::ShapeMismatch(format!(
            "plan is {:?} for spaces of size {} and {}",
            dim,
            x.n(),
            y.n()
        )));
    }
    let rho = plan3.mass().sum_axis(ndarray::Axis(0));
    Ok(quad_cross(x.dist(), y.dist(), &rho, &rho))
}

/// Conditionals of the anchor plans given each reference atom.
struct Conditionals {
    a: Vec<Array1<f64>>,
    b: Vec<Array1<f64>>,
    log_a: Vec<Array1<f64>>,
    log_b: Vec<Array1<f64>>,
}

fn conditionals(pi_sx: &Plan2, pi_sy: &Plan2, sigma: &Array1<f64>) -> Conditionals {
    let ns = sigma.len();
    let mut a = Vec::with_capacity(ns);
    let mut b = Vec::with_capacity(ns);
    for s in 0..ns {
        a.push(pi_sx.mass().row(s).mapv(|v| v / sigma[s]));
        b.push(pi_sy.mass().row(s).mapv(|v| v / sigma[s]));
    }
    let log_a = a.iter().map(log_weights).collect();
    let log_b = b.iter().map(log_weights).collect();
    Conditionals { a, b, log_a, log_b }
}

fn mix(slices: &[Array2<f64>], sigma: &Array1<f64>) -> Array2<f64> {
    let mut rho = Array2::zeros(slices[0].dim());
    for (s, k) in slices.iter().enumerate() {
        rho.scaled_add(sigma[s], k);
    }
    rho
}

/// Exact linear GW given anchor plans; verifies the anchors are
/// approximately optimal by solving the two pairwise problems first.
pub fn solve_lgw_exact(
    s: &MmSpace,
    x: &MmSpace,
    y: &MmSpace,
    pi_sx: &Plan2,
    pi_sy: &Plan2,
    params: &SolverParams,
) -> Result<LgwResult> {
    let gw_sx = converged_gw(s, x, params)?;
    let gw_sy = converged_gw(s, y, params)?;
    solve_lgw_exact_given_refs(
        s,
        x,
        y,
        pi_sx,
        pi_sy,
        gw_sx.value * gw_sx.value,
        gw_sy.value * gw_sy.value,
        params,
    )
    .map(|(r, _)| r)
}

/// As [`solve_lgw_exact`], returning the per-iteration trace as well.
pub fn solve_lgw_exact_traced(
    s: &MmSpace,
    x: &MmSpace,
    y: &MmSpace,
    pi_sx: &Plan2,
    pi_sy: &Plan2,
    params: &SolverParams,
) -> Result<(LgwResult, SolveTrace)> {
    let gw_sx = converged_gw(s, x, params)?;
    let gw_sy = converged_gw(s, y, params)?;
    solve_lgw_exact_given_refs(
        s,
        x,
        y,
        pi_sx,
        pi_sy,
        gw_sx.value * gw_sx.value,
        gw_sy.value * gw_sy.value,
        params,
    )
}

fn converged_gw(a: &MmSpace, b: &MmSpace, params: &SolverParams) -> Result<GwResult> {
    let res = solve_gw(a, b, params)?;
    if !res.converged {
        return Err(Error::NonConvergence {
            context: format!("GW({}, {})", a.label(), b.label()),
            iterations: res.outer_iterations,
            last_change: res.last_change,
        });
    }
    Ok(res)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_lgw_exact_given_refs(
    s: &MmSpace,
    x: &MmSpace,
    y: &MmSpace,
    pi_sx: &Plan2,
    pi_sy: &Plan2,
    gw2_sx: f64,
    gw2_sy: f64,
    params: &SolverParams,
) -> Result<(LgwResult, SolveTrace)> {
    params.validate()?;
    let sigma = s.weights();

    let anchor_obj_sx = gw_objective(s, x, pi_sx)?;
    let anchor_obj_sy = gw_objective(s, y, pi_sy)?;
    let res_sx = anchor_obj_sx - gw2_sx;
    if res_sx > opt_tol(gw2_sx) {
        return Err(Error::AnchorNotOptimal { side: "(S, X)", residual: res_sx, tol: opt_tol(gw2_sx) });
    }
    let res_sy = anchor_obj_sy - gw2_sy;
    if res_sy > opt_tol(gw2_sy) {
        return Err(Error::AnchorNotOptimal { side: "(S, Y)", residual: res_sy, tol: opt_tol(gw2_sy) });
    }

    // glue validates the shared marginal; its slices are the restart-0 init
    glue(pi_sx, pi_sy, sigma)?;
    let cond = conditionals(pi_sx, pi_sy, sigma);
    let ns = sigma.len();
    let (dx, dy) = (x.dist(), y.dist());
    let mut trace = SolveTrace::default();

    struct Candidate {
        objective: f64,
        slices: Vec<Array2<f64>>,
        converged: bool,
    }
    let mut best: Option<Candidate> = None;

    for restart in 0..params.restarts {
        let mut slices: Vec<Array2<f64>> = (0..ns)
            .map(|at| {
                let mut k = Array2::from_shape_fn((x.n(), y.n()), |(i, j)| {
                    cond.a[at][i] * cond.b[at][j]
                });
                if restart > 0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        params
                            .seed
                            .wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
                            .wrapping_add(at as u64),
                    );
                    for v in k.iter_mut() {
                        *v *= 1.0 + 0.5 * rng.random_range(0.0..1.0);
                    }
                    let total = k.sum();
                    if total > 0.0 {
                        k.mapv_inplace(|v| v / total);
                    }
                }
                k
            })
            .collect();
        let mut rho = mix(&slices, sigma);
        let mut objective = quad_cross(dx, dy, &rho, &rho);
        let scale = mean_abs(&linearized_cost(dx, dy, &rho));
        let mut converged = true;
        let mut iterations = 0usize;

        if scale > f64::MIN_POSITIVE && objective > 1e-30 {
            let floor = params.eta_floor * scale;
            let eta0 = (params.eta * crate::gw::eta_start_multiplier(restart) * scale).max(floor);
            let schedule = AnnealSchedule::new(eta0, floor, params);
            let mut eta = eta0;
            let mut pots: Vec<(Array1<f64>, Array1<f64>)> =
                (0..ns).map(|_| (Array1::zeros(x.n()), Array1::zeros(y.n()))).collect();
            converged = false;
            'outer: loop {
                let at_floor = schedule.at_floor(eta);
                let stall_tol = schedule.stall_tol(at_floor);
                let mut level_iters = 0usize;
                let mut stalled = false;
                while iterations < params.outer_max && (at_floor || level_iters < schedule.level_cap) {
                    let cost = linearized_cost(dx, dy, &rho);
                    let mut next = Vec::with_capacity(ns);
                    for at in 0..ns {
                        let (f, g) = &mut pots[at];
                        let run = sinkhorn_log(
                            &cost,
                            &cond.log_a[at],
                            &cond.log_b[at],
                            eta,
                            params.sinkhorn_max,
                            params.sinkhorn_tol,
                            f,
                            g,
                        )?;
                        next.push(run.plan);
                    }
                    let next_rho = mix(&next, sigma);
                    let next_obj = quad_cross(dx, dy, &next_rho, &next_rho);
                    let mut kl = 0.0;
                    for at in 0..ns {
                        kl += sigma[at]
                            * (kl_against_product(&slices[at], &cond.log_a[at], &cond.log_b[at])
                                + kl_against_product(&next[at], &cond.log_a[at], &cond.log_b[at]));
                    }
                    let pair_energy = quad_cross(dx, dy, &rho, &next_rho) + eta * kl;
                    trace.entries.push(TraceEntry { restart, eta, objective: next_obj, pair_energy });
                    iterations += 1;
                    level_iters += 1;
                    let change = (next_obj - objective).abs() / (1.0 + next_obj.abs());
                    slices = next;
                    rho = next_rho;
                    objective = next_obj;
                    if change <= stall_tol || objective <= 1e-30 {
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
            best = Some(Candidate { objective, slices, converged });
        }
    }

    let cand = best.expect("restarts >= 1");
    // restore exact per-atom feasibility, hence exact pair projections
    let mut mass = Array3::zeros((ns, x.n(), y.n()));
    let mut slices = cand.slices;
    for at in 0..ns {
        round_to_polytope(&mut slices[at], &cond.a[at], &cond.b[at]);
        for i in 0..x.n() {
            for j in 0..y.n() {
                mass[[at, i, j]] = sigma[at] * slices[at][[i, j]];
            }
        }
    }
    let plan3 = Plan3::new(mass, sigma.clone(), pi_sx.nu().clone(), pi_sy.nu().clone())?;
    let rho = plan3.mass().sum_axis(ndarray::Axis(0));
    let objective = quad_cross(dx, dy, &rho, &rho);

    let proj_sx = plan3.mass().sum_axis(ndarray::Axis(2));
    let proj_sy = plan3.mass().sum_axis(ndarray::Axis(1));
    let q_sx = quad_cross(s.dist(), dx, &proj_sx, &proj_sx);
    let q_sy = quad_cross(s.dist(), dy, &proj_sy, &proj_sy);

    Ok((
        LgwResult {
            value: objective.max(0.0).sqrt(),
            plan3,
            residual_sx: (q_sx - anchor_obj_sx).abs(),
            residual_sy: (q_sy - anchor_obj_sy).abs(),
            mode: LgwMode::Exact,
            converged: cand.converged,
        },
        trace,
    ))
}

/// Linear GW through maps: the graph-concentrated simplification
/// `sqrt( sum_{s,s'} (d_X(T1 s, T1 s') - d_Y(T2 s, T2 s'))^2 sigma_s sigma_s' )`.
pub fn lgw_via_maps(
    s: &MmSpace,
    x: &MmSpace,
    y: &MmSpace,
    t1: &DiscreteMap,
    t2: &DiscreteMap,
) -> Result<f64> {
    let ns = s.n();
    if t1.len() != ns || t2.len() != ns {
        return Err(Error::LengthMismatch { expected: ns, got: t1.len().min(t2.len()) });
    }
    for (atom, &t) in t1.indices().iter().enumerate() {
        if t >= x.n() {
            return Err(Error::IndexOutOfRange { atom, target: t, n: x.n() });
        }
    }
    for (atom, &t) in t2.indices().iter().enumerate() {
        if t >= y.n() {
            return Err(Error::IndexOutOfRange { atom, target: t, n: y.n() });
        }
    }
    let sigma = s.weights();
    let (dx, dy) = (x.dist(), y.dist());
    let mut total = 0.0;
    for a in 0..ns {
        for b in 0..ns {
            let gap = dx[[t1.apply(a), t1.apply(b)]] - dy[[t2.apply(a), t2.apply(b)]];
            total += gap * gap * sigma[a] * sigma[b];
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// Both estimates relating linear GW to pairwise GW:
/// `gw_xy <= lgw` and `lgw <= gw_sx + gw_sy`, checked with slack
/// `tol = 1e-2 (1 + gw_sx + gw_sy)`.
#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub gw_xy: f64,
    pub lgw: f64,
    pub gw_sx: f64,
    pub gw_sy: f64,
    pub tol: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

pub fn check_bounds(s: &MmSpace, x: &MmSpace, y: &MmSpace, params: &SolverParams) -> Result<BoundsReport> {
    let gw_xy = converged_gw(x, y, params)?.value;
    let sx = converged_gw(s, x, params)?;
    let sy = converged_gw(s, y, params)?;
    let (lgw, _) = solve_lgw_exact_given_refs(
        s,
        x,
        y,
        &sx.plan,
        &sy.plan,
        sx.value * sx.value,
        sy.value * sy.value,
        params,
    )?;
    let tol = 1e-2 * (1.0 + sx.value + sy.value);
    Ok(BoundsReport {
        gw_xy,
        lgw: lgw.value,
        gw_sx: sx.value,
        gw_sy: sy.value,
        tol,
        lower_ok: gw_xy <= lgw.value + tol,
        upper_ok: lgw.value <= sx.value + sy.value + tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixMode {
    Exact,
    /// Map-based approximation; the [`MapMode`] picks how anchors collapse.
    Maps(MapMode),
}

#[derive(Debug, Clone)]
pub struct MatrixFailure {
    pub i: usize,
    pub j: usize,
    pub error: Error,
}

/// All-pairs linear GW distances. Failed entries are `NaN` in `values` and
/// carried in `failures`.
#[derive(Debug, Clone)]
pub struct LgwMatrix {
    pub values: Array2<f64>,
    pub failures: Vec<MatrixFailure>,
}

/// Computes one anchor plan per space (N pairwise solves), then fills the
/// strictly upper triangle pair by pair — in parallel, with slot-indexed
/// writes so the result is identical for any thread count.
pub fn lgw_matrix(
    s: &MmSpace,
    spaces: &[&MmSpace],
    params: &SolverParams,
    mode: MatrixMode,
) -> Result<LgwMatrix> {
    if spaces.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "lgw_matrix needs at least 2 spaces, got {}",
            spaces.len()
        )));
    }
    let anchors: Vec<Result<GwResult>> = spaces
        .par_iter()
        .map(|x| converged_gw(s, x, params))
        .collect();

    let maps: Vec<Option<Result<DiscreteMap>>> = match mode {
        MatrixMode::Exact => vec![None; spaces.len()],
        MatrixMode::Maps(map_mode) => anchors
            .iter()
            .zip(spaces.iter())
            .map(|(anchor, x)| match anchor {
                Ok(a) => Some(crate::coupling::barycentric_map(&a.plan, map_mode, x)),
                Err(_) => None,
            })
            .collect(),
    };

    let pairs: Vec<(usize, usize)> = (0..spaces.len())
        .flat_map(|i| ((i + 1)..spaces.len()).map(move |j| (i, j)))
        .collect();
    let entries: Vec<(usize, usize, Result<f64>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let value = (|| -> Result<f64> {
                let ai = anchors[i].as_ref().map_err(|e| e.clone())?;
                let aj = anchors[j].as_ref().map_err(|e| e.clone())?;
                match mode {
                    MatrixMode::Exact => {
                        let (res, _) = solve_lgw_exact_given_refs(
                            s,
                            spaces[i],
                            spaces[j],
                            &ai.plan,
                            &aj.plan,
                            ai.value * ai.value,
                            aj.value * aj.value,
                            params,
                        )?;
                        Ok(res.value)
                    }
                    MatrixMode::Maps(_) => {
                        let ti = maps[i].as_ref().expect("map built").as_ref().map_err(|e| e.clone())?;
                        let tj = maps[j].as_ref().expect("map built").as_ref().map_err(|e| e.clone())?;
                        lgw_via_maps(s, spaces[i], spaces[j], ti, tj)
                    }
                }
            })();
            (i, j, value)
        })
        .collect();

    let mut values = Array2::zeros((spaces.len(), spaces.len()));
    let mut failures = Vec::new();
    for (i, j, value) in entries {
        match value {
            Ok(v) => {
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
            Err(error) => {
                values[[i, j]] = f64::NAN;
                values[[j, i]] = f64::NAN;
                failures.push(MatrixFailure { i, j, error });
            }
        }
    }
    Ok(LgwMatrix { values, failures })
}

/// One step of the epsilon sweep. The bookkeeping identity
/// `mgw_value = eps * quad_part + anchor_sx + anchor_sy` holds by
/// construction; the reference columns repeat the pairwise and linear GW
/// values the sweep is converging toward.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub eps: f64,
    pub mgw_value: f64,
    pub quad_part: f64,
    pub anchor_sx: f64,
    pub anchor_sy: f64,
    pub gw2_sx_ref: f64,
    pub gw2_sy_ref: f64,
    pub lgw_ref: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSchedule {
    pub eps0: f64,
    pub factor: f64,
    pub steps: usize,
}

impl SweepSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0) {
            return Err(Error::InvalidParameter(format!("eps0 must be positive, got {}", self.eps0)));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "factor must lie in (0, 1), got {}",
                self.factor
            )));
        }
        if self.steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "sweep needs at least 2 steps, got {}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Sweep outcome; `error` is set when a step aborted the sweep, with the
/// completed records retained.
#[derive(Debug, Clone)]
pub struct EpsSweep {
    pub records: Vec<SweepRecord>,
    pub error: Option<Error>,
}

/// Solves the epsilon-perturbed multi-marginal problem along a geometric
/// schedule `eps_k = eps0 * factor^k`, warm-starting each step from the
/// previous plan, and records the objective split next to the pairwise and
/// linear GW reference values.
pub fn epsilon_sweep(
    s: &MmSpace,
    x: &MmSpace,
    y: &MmSpace,
    schedule: SweepSchedule,
    params: &SolverParams,
) -> Result<EpsSweep> {
    schedule.validate()?;
    let sx = converged_gw(s, x, params)?;
    let sy = converged_gw(s, y, params)?;
    let gw2_sx_ref = sx.value * sx.value;
    let gw2_sy_ref = sy.value * sy.value;
    let (lgw, _) = solve_lgw_exact_given_refs(
        s, x, y, &sx.plan, &sy.plan, gw2_sx_ref, gw2_sy_ref, params,
    )?;
    let lgw_ref = lgw.value;

    let mut records = Vec::with_capacity(schedule.steps);
    let mut warm: Option<Plan3> = None;
    for k in 0..schedule.steps {
        let eps = schedule.eps0 * schedule.factor.powi(k as i32);
        match solve_mgw_eps(s, x, y, eps, params, warm.as_ref()) {
            Ok(res) => {
                records.push(SweepRecord {
                    eps,
                    mgw_value: res.value,
                    quad_part: res.quad_part,
                    anchor_sx: res.anchor_sx,
                    anchor_sy: res.anchor_sy,
                    gw2_sx_ref,
                    gw2_sy_ref,
                    lgw_ref,
                });
                warm = Some(res.plan);
            }
            Err(error) => return Ok(EpsSweep { records, error: Some(error) }),
        }
    }
    Ok(EpsSweep { records, error: None })
}

/// Renders sweep records in the fixed CSV schema.
pub fn sweep_to_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from("eps,mgw_value,quad_part,anchor_sx,anchor_sy,gw2_sx_ref,gw2_sy_ref,lgw_ref\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            crate::format_sig12(r.eps),
            crate::format_sig12(r.mgw_value),
            crate::format_sig12(r.quad_part),
            crate::format_sig12(r.anchor_sx),
            crate::format_sig12(r.anchor_sy),
            crate::format_sig12(r.gw2_sx_ref),
            crate::format_sig12(r.gw2_sy_ref),
            crate::format_sig12(r.lgw_ref),
        ));
    }
    out
}
