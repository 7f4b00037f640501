//! Log-domain Sinkhorn kernels: the two-marginal matrix case and the cyclic
//! multi-marginal tensor case. Everything runs on log potentials so the
//! annealed regularizations used by the outer solvers cannot overflow.

use ndarray::{Array1, Array2, ArrayD};

use crate::coupling::axis_marginal;
use crate::error::{Error, Result};

/// `log(sum(exp(xs)))` over finite and `-inf` entries.
fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for x in xs.clone() {
        if x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for x in xs {
        sum += (x - max).exp();
    }
    max + sum.ln()
}

pub(crate) fn log_weights(w: &Array1<f64>) -> Array1<f64> {
    w.mapv(|v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
}

/// Outcome of an inner scaling run. `violation` is the L1 marginal error at
/// exit; callers decide whether that is good enough.
pub(crate) struct ScalingRun {
    pub plan: Array2<f64>,
    pub iterations: usize,
    pub violation: f64,
}

/// Two-marginal log-domain Sinkhorn for `min <cost, pi> + eta * KL(pi | mu x nu)`
/// over `Pi(mu, nu)`.
///
/// The plan is `exp((f_i + g_j - cost_ij)/eta + log mu_i + log nu_j)`.
/// Potentials `f`, `g` are taken warm and left warm for the caller; zero
/// entries in the marginals are carried as `-inf` log weights and stay empty.
/// Column marginals are exact on exit; `violation` reports the row error.
pub(crate) fn sinkhorn_log(
    cost: &Array2<f64>,
    log_mu: &Array1<f64>,
    log_nu: &Array1<f64>,
    eta: f64,
    max_iter: usize,
    tol: f64,
    f: &mut Array1<f64>,
    g: &mut Array1<f64>,
) -> Result<ScalingRun> {
    let (n, m) = (log_mu.len(), log_nu.len());
    if cost.nrows() != n || cost.ncols() != m {
        return Err(Error::ShapeMismatch(format!(
            "cost is {}x{} for marginals of length {n} and {m}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("sinkhorn needs eta > 0, got {eta}")));
    }

    let mut plan = Array2::zeros((n, m));
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    for it in 0..max_iter {
        iterations = it + 1;
        for i in 0..n {
            let lse = logsumexp((0..m).map(|j| (g[j] - cost[[i, j]]) / eta + log_nu[j]));
            f[i] = if lse.is_finite() { -eta * lse } else { 0.0 };
        }
        for j in 0..m {
            let lse = logsumexp((0..n).map(|i| (f[i] - cost[[i, j]]) / eta + log_mu[i]));
            g[j] = if lse.is_finite() { -eta * lse } else { 0.0 };
        }
        violation = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..m {
                let l = (f[i] + g[j] - cost[[i, j]]) / eta + log_mu[i] + log_nu[j];
                let v = l.exp();
                plan[[i, j]] = v;
                row += v;
            }
            let mu_i = if log_mu[i].is_finite() { log_mu[i].exp() } else { 0.0 };
            violation += (row - mu_i).abs();
        }
        if !violation.is_finite() {
            return Err(Error::NumericalOverflow(
                "sinkhorn scaling produced non-finite marginals".into(),
            ));
        }
        if violation <= tol {
            break;
        }
    }
    Ok(ScalingRun { plan, iterations, violation })
}

/// Outcome of a multi-marginal scaling run. Iteration count and final
/// violation are diagnostics; the annealed callers re-round at the end, so
/// they only consume the plan.
#[allow(dead_code)]
pub(crate) struct MultiScalingRun {
    pub plan: ArrayD<f64>,
    pub iterations: usize,
    pub violation: f64,
}

/// Cyclic multi-marginal log-domain Sinkhorn.
///
/// Minimizes `<cost, pi> + eta * KL(pi | r)` where the reference `r` is the
/// product of `log_refs` (the prescribed marginal on constrained axes, a
/// uniform placeholder on free ones). Axes are updated in index order;
/// free axes keep their potentials at zero, which is exactly the unbalanced
/// variant with those marginals left as outputs.
pub(crate) fn sinkhorn_multi_log(
    cost: &ArrayD<f64>,
    log_refs: &[Array1<f64>],
    constrained: &[bool],
    eta: f64,
    max_iter: usize,
    tol: f64,
    potentials: &mut Vec<Array1<f64>>,
) -> Result<MultiScalingRun> {
    let ndim = cost.ndim();
    if log_refs.len() != ndim || constrained.len() != ndim || potentials.len() != ndim {
        return Err(Error::ShapeMismatch(format!(
            "cost has {ndim} axes; got {} refs, {} flags, {} potentials",
            log_refs.len(),
            constrained.len(),
            potentials.len()
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("sinkhorn needs eta > 0, got {eta}")));
    }

    // log-plan rebuilt from potentials; updated in place per axis afterwards
    let mut log_plan = cost.mapv(|c| -c / eta);
    for (ix, v) in log_plan.indexed_iter_mut() {
        for axis in 0..ndim {
            *v += potentials[axis][ix[axis]] / eta + log_refs[axis][ix[axis]];
        }
    }

    let targets: Vec<Option<Array1<f64>>> = (0..ndim)
        .map(|axis| {
            constrained[axis].then(|| log_refs[axis].mapv(|l| if l.is_finite() { l.exp() } else { 0.0 }))
        })
        .collect();

    let mut plan = log_plan.mapv(f64::exp);
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    for it in 0..max_iter {
        iterations = it + 1;
        for axis in 0..ndim {
            let Some(target) = &targets[axis] else { continue };
            let marginal = axis_marginal(&plan, axis);
            let delta: Array1<f64> = marginal
                .iter()
                .zip(target.iter())
                .map(|(&m, &t)| {
                    if t > 0.0 {
                        t.ln() - m.max(1e-300).ln()
                    } else {
                        0.0
                    }
                })
                .collect();
            for (ix, v) in log_plan.indexed_iter_mut() {
                *v += delta[ix[axis]];
            }
            for i in 0..delta.len() {
                potentials[axis][i] += eta * delta[i];
            }
            plan = log_plan.mapv(f64::exp);
        }
        violation = 0.0;
        for axis in 0..ndim {
            let Some(target) = &targets[axis] else { continue };
            let marginal = axis_marginal(&plan, axis);
            let err: f64 = marginal.iter().zip(target.iter()).map(|(m, t)| (m - t).abs()).sum();
            violation = violation.max(err);
        }
        if !violation.is_finite() {
            return Err(Error::NumericalOverflow(
                "multi-marginal scaling produced non-finite marginals".into(),
            ));
        }
        if violation <= tol {
            break;
        }
    }
    Ok(MultiScalingRun { plan, iterations, violation })
}

/// Generalized KL divergence of a plan against a product reference given by
/// log weights; `0 ln 0 = 0`.
pub(crate) fn kl_against_product(plan: &Array2<f64>, log_mu: &Array1<f64>, log_nu: &Array1<f64>) -> f64 {
    let mut kl = 0.0;
    let mut mass = 0.0;
    for ((i, j), &p) in plan.indexed_iter() {
        if p > 0.0 {
            kl += p * (p.ln() - log_mu[i] - log_nu[j]);
            mass += p;
        }
    }
    kl - mass + 1.0
}

/// KL of a plan tensor against the product of the given log weights.
pub(crate) fn kl_against_product_multi(plan: &ArrayD<f64>, log_refs: &[Array1<f64>]) -> f64 {
    let mut kl = 0.0;
    let mut mass = 0.0;
    for (ix, &p) in plan.indexed_iter() {
        if p > 0.0 {
            let mut log_r = 0.0;
            for axis in 0..log_refs.len() {
                log_r += log_refs[axis][ix[axis]];
            }
            kl += p * (p.ln() - log_r);
            mass += p;
        }
    }
    kl - mass + 1.0
}

/// Mean of a cost matrix or tensor, used to set the regularization scale.
pub(crate) fn mean_abs<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};

    #[test]
    fn zero_cost_gives_product_plan() {
        let cost = Array2::zeros((2, 3));
        let mu = array![0.5, 0.5];
        let nu = array![0.2, 0.3, 0.5];
        let mut f = Array1::zeros(2);
        let mut g = Array1::zeros(3);
        let run = sinkhorn_log(
            &cost,
            &log_weights(&mu),
            &log_weights(&nu),
            1.0,
            500,
            1e-12,
            &mut f,
            &mut g,
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((run.plan[[i, j]] - mu[i] * nu[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn small_eta_concentrates_on_cheap_cells() {
        let cost = array![[0.0, 10.0], [10.0, 0.0]];
        let mu = array![0.5, 0.5];
        let mut f = Array1::zeros(2);
        let mut g = Array1::zeros(2);
        let run = sinkhorn_log(
            &cost,
            &log_weights(&mu),
            &log_weights(&mu),
            1e-3,
            2000,
            1e-12,
            &mut f,
            &mut g,
        )
        .unwrap();
        let deviation = (run.plan[[0, 0]] - 0.5).abs()
            + (run.plan[[1, 1]] - 0.5).abs()
            + run.plan[[0, 1]].abs()
            + run.plan[[1, 0]].abs();
        assert!(deviation <= 1e-3, "deviation {deviation}");
    }

    #[test]
    fn marginal_violation_below_tolerance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let n = rng.random_range(2..6);
            let m = rng.random_range(2..6);
            let cost = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..3.0));
            let mut mu = Array1::from_shape_fn(n, |_| rng.random_range(0.1..1.0));
            let mut nu = Array1::from_shape_fn(m, |_| rng.random_range(0.1..1.0));
            mu /= mu.sum();
            nu /= nu.sum();
            let mut f = Array1::zeros(n);
            let mut g = Array1::zeros(m);
            let run = sinkhorn_log(
                &cost,
                &log_weights(&mu),
                &log_weights(&nu),
                0.5,
                5000,
                1e-9,
                &mut f,
                &mut g,
            )
            .unwrap();
            assert!(run.violation <= 1e-9, "violation {}", run.violation);
            // columns are exact after the final g update
            let cols = run.plan.sum_axis(Axis(0));
            for (c, w) in cols.iter().zip(nu.iter()) {
                assert!((c - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multi_marginal_matches_two_marginal() {
        let cost2 = array![[0.0, 2.0], [1.0, 0.5]];
        let mu = array![0.4, 0.6];
        let nu = array![0.7, 0.3];
        let mut f = Array1::zeros(2);
        let mut g = Array1::zeros(2);
        let two = sinkhorn_log(
            &cost2,
            &log_weights(&mu),
            &log_weights(&nu),
            0.3,
            5000,
            1e-12,
            &mut f,
            &mut g,
        )
        .unwrap();

        let cost_d = cost2.clone().into_dyn();
        let mut potentials = vec![Array1::zeros(2), Array1::zeros(2)];
        let multi = sinkhorn_multi_log(
            &cost_d,
            &[log_weights(&mu), log_weights(&nu)],
            &[true, true],
            0.3,
            5000,
            1e-12,
            &mut potentials,
        )
        .unwrap();
        for (a, b) in two.plan.iter().zip(multi.plan.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn free_axis_marginal_is_an_output() {
        // cost prefers column 0 strongly; the free axis should follow it
        let cost = array![[0.0, 5.0], [0.0, 5.0]].into_dyn();
        let mu = array![0.5, 0.5];
        let uniform = array![0.5, 0.5];
        let mut potentials = vec![Array1::zeros(2), Array1::zeros(2)];
        let run = sinkhorn_multi_log(
            &cost,
            &[log_weights(&mu), log_weights(&uniform)],
            &[true, false],
            0.5,
            2000,
            1e-12,
            &mut potentials,
        )
        .unwrap();
        let free = axis_marginal(&run.plan, 1);
        assert!(free[0] > 0.9, "free marginal {free:?}");
        // potentials on the free axis untouched
        assert_eq!(potentials[1], Array1::<f64>::zeros(2));
    }
}
