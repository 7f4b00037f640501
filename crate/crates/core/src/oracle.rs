//! Independent brute-force references for tiny instances.
//!
//! Everything here evaluates objectives by naive summation and minimizes by
//! scanning a dense grid over the low-dimensional transportation polytope,
//! deliberately sharing no code path with the solvers it checks. Grid scans
//! are used instead of vertex enumeration because the quadratic form may be
//! indefinite, so minima need not sit at polytope vertices.

use itertools::Itertools;
use ndarray::{Array1, Array2, Array3};

use crate::coupling::Plan2;
use crate::error::{Error, Result};
use crate::mmspace::MmSpace;

/// Hard cap on the number of grid points any oracle scan may visit.
pub const GRID_CAP: usize = 10_000_000;

/// A scan grid over the free cells of a coupling polytope.
#[derive(Debug, Clone, Copy)]
pub struct PolytopeGrid {
    /// Number of free dimensions, `(n-1)(m-1)` for a full 2-marginal polytope.
    pub dims: usize,
    /// Points per free dimension, endpoints included.
    pub resolution: usize,
}

impl PolytopeGrid {
    pub fn new(dims: usize, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be at least 2, got {resolution}"
            )));
        }
        let points = (resolution as f64).powi(dims as i32);
        if points > GRID_CAP as f64 {
            return Err(Error::TooLarge(format!(
                "{points:.0} grid points exceed the cap of {GRID_CAP}"
            )));
        }
        Ok(PolytopeGrid { dims, resolution })
    }

    pub fn points(&self) -> usize {
        (self.resolution as usize).pow(self.dims as u32)
    }
}

/// Quadruple-sum GW objective; the naive counterpart of the decomposed
/// evaluation in the solver.
pub fn naive_gw_objective(x: &MmSpace, y: &MmSpace, mass: &Array2<f64>) -> f64 {
    let (n, m) = (x.n(), y.n());
    let (dx, dy) = (x.dist(), y.dist());
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let w1 = mass[[i, j]];
            if w1 == 0.0 {
                continue;
            }
            for k in 0..n {
                for l in 0..m {
                    let gap = dx[[i, k]] - dy[[j, l]];
                    total += gap * gap * w1 * mass[[k, l]];
                }
            }
        }
    }
    total
}

/// Naive double tensor sum of `sum_{i<j} 2 c_ij (d_i - d_j)^2` over an
/// N-way plan; used to check the pairwise-decomposed multi-marginal
/// objective.
pub fn naive_mgw_objective(
    spaces: &[&MmSpace],
    coeffs: &Array2<f64>,
    mass: &ndarray::ArrayD<f64>,
) -> f64 {
    let mut total = 0.0;
    for (ix, &w1) in mass.indexed_iter() {
        if w1 == 0.0 {
            continue;
        }
        for (jx, &w2) in mass.indexed_iter() {
            if w2 == 0.0 {
                continue;
            }
            let mut c = 0.0;
            for a in 0..spaces.len() {
                for b in (a + 1)..spaces.len() {
                    let da = spaces[a].dist()[[ix[a], jx[a]]];
                    let db = spaces[b].dist()[[ix[b], jx[b]]];
                    let gap = da - db;
                    c += 2.0 * coeffs[[a, b]] * gap * gap;
                }
            }
            total += c * w1 * w2;
        }
    }
    total
}

/// Naive evaluation of the linear-GW integrand `Q_XY` of a 3-plan: project
/// onto `(X, Y)` by plain summation, then quadruple-sum.
pub fn naive_q_xy(x: &MmSpace, y: &MmSpace, mass: &Array3<f64>) -> f64 {
    let (ns, nx, ny) = mass.dim();
    let mut rho = Array2::zeros((nx, ny));
    for s in 0..ns {
        for i in 0..nx {
            for j in 0..ny {
                rho[[i, j]] += mass[[s, i, j]];
            }
        }
    }
    naive_gw_objective(x, y, &rho)
}

struct FreeCellScan {
    n: usize,
    m: usize,
    mu: Array1<f64>,
    nu: Array1<f64>,
    bounds: Vec<f64>,
    resolution: usize,
}

impl FreeCellScan {
    /// Reconstructs the full plan from free-cell values; `None` when the
    /// grid point leaves the polytope.
    fn complete(&self, t: &[f64]) -> Option<Array2<f64>> {
        let (n, m) = (self.n, self.m);
        let mut plan = Array2::zeros((n, m));
        for i in 0..(n - 1) {
            for j in 0..(m - 1) {
                plan[[i, j]] = t[i * (m - 1) + j];
            }
        }
        const SLACK: f64 = 1e-12;
        for i in 0..(n - 1) {
            let rest: f64 = (0..(m - 1)).map(|j| plan[[i, j]]).sum();
            let v = self.mu[i] - rest;
            if v < -SLACK {
                return None;
            }
            plan[[i, m - 1]] = v.max(0.0);
        }
        for j in 0..m {
            let rest: f64 = (0..(n - 1)).map(|i| plan[[i, j]]).sum();
            let v = self.nu[j] - rest;
            if v < -SLACK {
                return None;
            }
            plan[[n - 1, j]] = v.max(0.0);
        }
        Some(plan)
    }
}

/// Exhaustive scan of the GW objective over `Pi(mu, nu)`, parametrized by
/// the `(n-1)(m-1)` free cells. Infeasible grid points are skipped. For a
/// uniform 2x2 instance this is an exact one-dimensional scan.
pub fn brute_gw(x: &MmSpace, y: &MmSpace, resolution: usize) -> Result<f64> {
    let (n, m) = (x.n(), y.n());
    let dims = (n - 1) * (m - 1);
    if dims > 4 {
        return Err(Error::TooLarge(format!(
            "brute_gw handles at most 4 free dimensions, instance has {dims}"
        )));
    }
    let grid = PolytopeGrid::new(dims, resolution.max(2))?;
    let (mu, nu) = (x.weights().clone(), y.weights().clone());
    if dims == 0 {
        // one of the spaces is a single point: the product plan is the
        // unique coupling
        let plan = Plan2::independent(&mu, &nu);
        return Ok(naive_gw_objective(x, y, plan.mass()));
    }
    let mut bounds = Vec::with_capacity(dims);
    for i in 0..(n - 1) {
        for j in 0..(m - 1) {
            bounds.push(mu[i].min(nu[j]));
        }
    }
    let scan = FreeCellScan { n, m, mu, nu, bounds, resolution: grid.resolution };

    let steps = scan.resolution;
    let mut t = vec![0.0; dims];
    let mut index = vec![0usize; dims];
    let mut best = f64::INFINITY;
    'grid: loop {
        for d in 0..dims {
            t[d] = scan.bounds[d] * index[d] as f64 / (steps - 1) as f64;
        }
        if let Some(plan) = scan.complete(&t) {
            let obj = naive_gw_objective(x, y, &plan);
            if obj < best {
                best = obj;
            }
        }
        // odometer increment
        for d in 0..dims {
            index[d] += 1;
            if index[d] < steps {
                continue 'grid;
            }
            index[d] = 0;
        }
        break;
    }
    if best.is_infinite() {
        return Err(Error::NumericalOverflow(
            "no feasible grid point found; marginals may be degenerate".into(),
        ));
    }
    Ok(best)
}

/// Minimum of the GW objective over all permutation plans; an upper bound on
/// the squared GW distance. Requires equal-size uniform spaces, `n <= 6`.
pub fn permutation_gw_upper(x: &MmSpace, y: &MmSpace) -> Result<f64> {
    let n = x.n();
    if y.n() != n || n > 6 {
        return Err(Error::NotApplicable(format!(
            "permutation scan needs equal sizes at most 6, got {} and {}",
            n,
            y.n()
        )));
    }
    let uniform = 1.0 / n as f64;
    for w in x.weights().iter().chain(y.weights().iter()) {
        if (w - uniform).abs() > 1e-12 {
            return Err(Error::NotApplicable("permutation scan needs uniform weights".into()));
        }
    }
    let (dx, dy) = (x.dist(), y.dist());
    let mut best = f64::INFINITY;
    for perm in (0..n).permutations(n) {
        let mut obj = 0.0;
        for i in 0..n {
            for k in 0..n {
                let gap = dx[[i, k]] - dy[[perm[i], perm[k]]];
                obj += gap * gap;
            }
        }
        obj *= uniform * uniform;
        if obj < best {
            best = obj;
        }
    }
    Ok(best)
}

/// Support atoms and conditional weights of one row of an anchor plan.
struct Conditional {
    support: Vec<usize>,
    weights: Vec<f64>,
}

fn conditional(plan: &Plan2, s: usize, sigma_s: f64) -> Conditional {
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (j, &v) in plan.mass().row(s).iter().enumerate() {
        if v > 0.0 {
            support.push(j);
            weights.push(v / sigma_s);
        }
    }
    Conditional { support, weights }
}

/// Exhaustive scan of `Q_XY` over 3-plans whose pair projections equal the
/// given anchors. Feasible plans decompose per reference atom into couplings
/// of the conditionals; each per-atom polytope must have free dimension at
/// most 1 and the reference at most 3 atoms.
pub fn brute_lgw_inner(
    s: &MmSpace,
    x: &MmSpace,
    y: &MmSpace,
    pi_sx: &Plan2,
    pi_sy: &Plan2,
    resolution: usize,
) -> Result<f64> {
    let ns = s.n();
    if ns > 3 {
        return Err(Error::TooLarge(format!("reference space has {ns} atoms, cap is 3")));
    }
    let resolution = resolution.max(2);
    let sigma = s.weights();

    // per-atom coupling families: either forced (free dim 0) or a segment
    enum Family {
        Forced(Array2<f64>),
        Segment { base: Array2<f64>, dir: Array2<f64>, lo: f64, hi: f64 },
    }
    let mut families = Vec::with_capacity(ns);
    for at in 0..ns {
        let a = conditional(pi_sx, at, sigma[at]);
        let b = conditional(pi_sy, at, sigma[at]);
        let (na, nb) = (a.support.len(), b.support.len());
        let free = (na - 1) * (nb - 1);
        if free == 0 {
            // product of the conditionals is the unique coupling
            let mut k = Array2::zeros((x.n(), y.n()));
            for (ia, &xa) in a.support.iter().enumerate() {
                for (ib, &yb) in b.support.iter().enumerate() {
                    k[[xa, yb]] = a.weights[ia] * b.weights[ib];
                }
            }
            families.push(Family::Forced(k));
        } else if free == 1 {
            // both supports have exactly two atoms: one free parameter
            let (x0, x1) = (a.support[0], a.support[1]);
            let (y0, y1) = (b.support[0], b.support[1]);
            let (a0, a1) = (a.weights[0], a.weights[1]);
            let b0 = b.weights[0];
            let lo = (b0 - a1).max(0.0);
            let hi = a0.min(b0);
            let mut base = Array2::zeros((x.n(), y.n()));
            // K = [[t, a0 - t], [b0 - t, a1 - b0 + t]]
            base[[x0, y1]] = a0;
            base[[x1, y0]] = b0;
            base[[x1, y1]] = a1 - b0;
            let mut dir = Array2::zeros((x.n(), y.n()));
            dir[[x0, y0]] = 1.0;
            dir[[x0, y1]] = -1.0;
            dir[[x1, y0]] = -1.0;
            dir[[x1, y1]] = 1.0;
            families.push(Family::Segment { base, dir, lo, hi });
        } else {
            return Err(Error::TooLarge(format!(
                "conditional coupling polytope at reference atom {at} has free dimension {free}, cap is 1"
            )));
        }
    }

    let free_atoms: Vec<usize> = (0..ns)
        .filter(|&at| matches!(families[at], Family::Segment { .. }))
        .collect();
    PolytopeGrid::new(free_atoms.len(), resolution)?;

    let build_mass = |ts: &[f64]| -> Array3<f64> {
        let mut mass = Array3::zeros((ns, x.n(), y.n()));
        let mut free_i = 0;
        for at in 0..ns {
            let k = match &families[at] {
                Family::Forced(k) => k.clone(),
                Family::Segment { base, dir, .. } => {
                    let t = ts[free_i];
                    free_i += 1;
                    base + &(dir * t)
                }
            };
            for i in 0..x.n() {
                for j in 0..y.n() {
                    mass[[at, i, j]] = sigma[at] * k[[i, j]].max(0.0);
                }
            }
        }
        mass
    };

    let mut best = f64::INFINITY;
    let dims = free_atoms.len();
    let mut index = vec![0usize; dims];
    let mut ts = vec![0.0; dims];
    'grid: loop {
        for (d, &at) in free_atoms.iter().enumerate() {
            if let Family::Segment { lo, hi, .. } = &families[at] {
                ts[d] = lo + (hi - lo) * index[d] as f64 / (resolution - 1) as f64;
            }
        }
        let mass = build_mass(&ts);
        let obj = naive_q_xy(x, y, &mass);
        if obj < best {
            best = obj;
        }
        if dims == 0 {
            break;
        }
        for d in 0..dims {
            index[d] += 1;
            if index[d] < resolution {
                continue 'grid;
            }
            index[d] = 0;
        }
        break;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::glue;
    use crate::mmspace::{generate, single_point_space, Permutation, SpaceKind};
    use ndarray::array;

    fn two_point(a: f64) -> MmSpace {
        generate(SpaceKind::TwoPoint { a }, None).unwrap()
    }

    #[test]
    fn grid_caps_enforced() {
        assert!(PolytopeGrid::new(4, 100).is_err());
        assert!(PolytopeGrid::new(4, 56).is_ok());
        assert!(PolytopeGrid::new(1, 1).is_err());
    }

    #[test]
    fn brute_two_point_closed_form() {
        let v = brute_gw(&two_point(1.0), &two_point(3.0), 10_001).unwrap();
        assert!((v - 2.0).abs() <= 1e-4, "brute {v}");
    }

    #[test]
    fn brute_identical_space_is_zero() {
        let x = two_point(1.5);
        let v = brute_gw(&x, &x, 101).unwrap();
        assert!(v.abs() <= 1e-12, "brute {v}");
    }

    #[test]
    fn brute_below_any_permutation_plan() {
        let x = generate(SpaceKind::RandomCloud { seed: 9, n: 3, d: 2 }, None).unwrap();
        let y = generate(SpaceKind::RandomCloud { seed: 10, n: 3, d: 2 }, None).unwrap();
        let brute = brute_gw(&x, &y, 31).unwrap();
        let upper = permutation_gw_upper(&x, &y).unwrap();
        assert!(brute <= upper + 1e-9, "brute {brute} vs permutation {upper}");
    }

    #[test]
    fn brute_monotone_under_nested_refinement() {
        let x = generate(SpaceKind::RandomCloud { seed: 2, n: 3, d: 2 }, None).unwrap();
        let y = generate(SpaceKind::RandomCloud { seed: 5, n: 3, d: 2 }, None).unwrap();
        // nested grids: r -> 2r - 1 keeps every previous point
        let r1 = brute_gw(&x, &y, 9).unwrap();
        let r2 = brute_gw(&x, &y, 17).unwrap();
        let r3 = brute_gw(&x, &y, 33).unwrap();
        assert!(r2 <= r1 + 1e-12);
        assert!(r3 <= r2 + 1e-12);
    }

    #[test]
    fn permutation_upper_two_point() {
        let v = permutation_gw_upper(&two_point(1.0), &two_point(3.0)).unwrap();
        assert!((v - 2.0).abs() < 1e-12);

        let x = generate(SpaceKind::RandomCloud { seed: 4, n: 4, d: 2 }, None).unwrap();
        let p = Permutation::new(vec![2, 0, 3, 1]).unwrap();
        let y = crate::mmspace::apply_permutation(&x, &p).unwrap();
        let v = permutation_gw_upper(&x, &y).unwrap();
        assert!(v.abs() < 1e-12, "permuted copy should reach zero, got {v}");
    }

    #[test]
    fn permutation_upper_not_applicable() {
        let x = generate(SpaceKind::TwoPoint { a: 1.0 }, Some(array![0.3, 0.7])).unwrap();
        assert_eq!(permutation_gw_upper(&x, &x).unwrap_err().kind(), "NotApplicable");
    }

    #[test]
    fn lgw_inner_single_point_matches_brute_gw() {
        let s = single_point_space();
        let x = two_point(1.0);
        let y = two_point(3.0);
        let pi_sx = Plan2::new(x.weights().clone().insert_axis(ndarray::Axis(0)), s.weights().clone(), x.weights().clone()).unwrap();
        let pi_sy = Plan2::new(y.weights().clone().insert_axis(ndarray::Axis(0)), s.weights().clone(), y.weights().clone()).unwrap();
        let inner = brute_lgw_inner(&s, &x, &y, &pi_sx, &pi_sy, 4001).unwrap();
        let brute = brute_gw(&x, &y, 4001).unwrap();
        assert!((inner - brute).abs() <= 1e-9, "inner {inner} vs brute {brute}");
    }

    #[test]
    fn lgw_inner_deterministic_anchors_single_point_polytope() {
        // permutation anchors concentrate the conditionals; the only glued
        // plan is the permutation composition
        let s = two_point(2.0);
        let x = two_point(1.0);
        let y = two_point(3.0);
        let id = Permutation::identity(2);
        let swap = Permutation::new(vec![1, 0]).unwrap();
        let pi_sx = Plan2::from_permutation(&id, s.weights()).unwrap();
        let pi_sy = Plan2::from_permutation(&swap, s.weights()).unwrap();
        let inner = brute_lgw_inner(&s, &x, &y, &pi_sx, &pi_sy, 11).unwrap();
        assert!((inner - 2.0).abs() < 1e-12, "inner {inner}");

        // and it agrees with the glued plan evaluated naively
        let glued = glue(&pi_sx, &pi_sy, s.weights()).unwrap();
        let q = naive_q_xy(&x, &y, glued.mass());
        assert!((inner - q).abs() < 1e-12);
    }

    #[test]
    fn naive_matches_decomposed_on_random_plans() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for trial in 0..5 {
            let n = rng.random_range(2..6);
            let m = rng.random_range(2..6);
            let x = generate(SpaceKind::RandomCloud { seed: 20 + trial, n, d: 2 }, None).unwrap();
            let y = generate(SpaceKind::RandomCloud { seed: 40 + trial, n: m, d: 3 }, None).unwrap();
            let mut mass = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..1.0));
            let total = mass.sum();
            mass.mapv_inplace(|v| v / total);
            let naive = naive_gw_objective(&x, &y, &mass);
            let fast = crate::gw::quad_cross(x.dist(), y.dist(), &mass, &mass);
            assert!(
                (naive - fast).abs() <= 1e-10 * (1.0 + naive.abs()),
                "naive {naive} vs decomposed {fast}"
            );
        }
    }
}
