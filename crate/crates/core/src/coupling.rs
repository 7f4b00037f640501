//! Transport-plan containers (2-way, 3-way, N-way), marginal projections,
//! gluing, barycentric projection to maps, and rounding onto the
//! transportation polytope.
//!
//! Plans are stored dense; the crate targets desk-scale instances where
//! exact marginal arithmetic matters more than sparsity. Plans that violate
//! their marginal tolerances are rejected, never silently renormalized.

use ndarray::{Array1, Array2, Array3, ArrayD, Axis, Dimension, Ix1, Ix2, Ix3};

use crate::error::{Error, Result};
use crate::mmspace::MmSpace;

/// Per-entry tolerance for marginal constraints; absorbs Sinkhorn
/// termination error.
pub const MARGINAL_TOL: f64 = 1e-7;
/// Tolerance on the total mass of a plan.
pub const MASS_TOL: f64 = 1e-9;

fn check_nonneg<'a>(entries: impl Iterator<Item = (Vec<usize>, &'a f64)>) -> Result<()> {
    for (index, &v) in entries {
        if v < 0.0 {
            return Err(Error::NegativeMass { index, value: v });
        }
        if !v.is_finite() {
            return Err(Error::NumericalOverflow(format!("plan entry {index:?} is not finite")));
        }
    }
    Ok(())
}

fn check_marginal(axis: usize, got: &Array1<f64>, want: &Array1<f64>) -> Result<()> {
    let mut worst = 0.0f64;
    for (g, w) in got.iter().zip(want.iter()) {
        worst = worst.max((g - w).abs());
    }
    if worst > MARGINAL_TOL {
        return Err(Error::MarginalMismatch { axis, violation: worst, tol: MARGINAL_TOL });
    }
    Ok(())
}

fn check_mass(total: f64) -> Result<()> {
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::MassMismatch { total, tol: MASS_TOL });
    }
    Ok(())
}

/// A two-marginal transport plan: nonnegative `n x m` mass matrix whose row
/// sums match `mu` and column sums match `nu` within [`MARGINAL_TOL`].
#[derive(Debug, Clone)]
pub struct Plan2 {
    mass: Array2<f64>,
    mu: Array1<f64>,
    nu: Array1<f64>,
}

impl Plan2 {
    pub fn new(mass: Array2<f64>, mu: Array1<f64>, nu: Array1<f64>) -> Result<Self> {
        if mass.nrows() != mu.len() || mass.ncols() != nu.len() {
            return Err(Error::ShapeMismatch(format!(
                "plan is {}x{} for marginals of length {} and {}",
                mass.nrows(),
                mass.ncols(),
                mu.len(),
                nu.len()
            )));
        }
        check_nonneg(mass.indexed_iter().map(|((i, j), v)| (vec![i, j], v)))?;
        let plan = Plan2 { mass, mu, nu };
        check_marginal(0, &plan.row_marginal(), &plan.mu)?;
        check_marginal(1, &plan.col_marginal(), &plan.nu)?;
        check_mass(plan.total_mass())?;
        Ok(plan)
    }

    pub fn mass(&self) -> &Array2<f64> {
        &self.mass
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn nu(&self) -> &Array1<f64> {
        &self.nu
    }

    pub fn row_marginal(&self) -> Array1<f64> {
        self.mass.sum_axis(Axis(1))
    }

    pub fn col_marginal(&self) -> Array1<f64> {
        self.mass.sum_axis(Axis(0))
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.sum()
    }

    /// The product coupling `mu (x) nu`.
    pub fn independent(mu: &Array1<f64>, nu: &Array1<f64>) -> Self {
        let mut mass = Array2::zeros((mu.len(), nu.len()));
        for i in 0..mu.len() {
            for j in 0..nu.len() {
                mass[[i, j]] = mu[i] * nu[j];
            }
        }
        Plan2 { mass, mu: mu.clone(), nu: nu.clone() }
    }

    /// The identity coupling of `weights` with itself (diagonal plan).
    pub fn identity(weights: &Array1<f64>) -> Self {
        let n = weights.len();
        let mut mass = Array2::zeros((n, n));
        for i in 0..n {
            mass[[i, i]] = weights[i];
        }
        Plan2 { mass, mu: weights.clone(), nu: weights.clone() }
    }

    /// Deterministic plan `mass[i, p(i)] = w_i` induced by a permutation.
    pub fn from_permutation(p: &crate::mmspace::Permutation, weights: &Array1<f64>) -> Result<Self> {
        let n = weights.len();
        if p.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: p.len() });
        }
        let mut mass = Array2::zeros((n, n));
        let mut nu = Array1::zeros(n);
        for i in 0..n {
            mass[[i, p.apply(i)]] = weights[i];
            nu[p.apply(i)] = weights[i];
        }
        Ok(Plan2 { mass, mu: weights.clone(), nu })
    }
}

/// A three-marginal plan over `S x X x Y` with prescribed one-marginals.
#[derive(Debug, Clone)]
pub struct Plan3 {
    mass: Array3<f64>,
    sigma: Array1<f64>,
    mu: Array1<f64>,
    nu: Array1<f64>,
}

impl Plan3 {
    pub fn new(
        mass: Array3<f64>,
        sigma: Array1<f64>,
        mu: Array1<f64>,
        nu: Array1<f64>,
    ) -> Result<Self> {
        let dim = mass.dim();
        if dim.0 != sigma.len() || dim.1 != mu.len() || dim.2 != nu.len() {
            return Err(Error::ShapeMismatch(format!(
                "plan is {:?} for marginals of length {}, {}, {}",
                dim,
                sigma.len(),
                mu.len(),
                nu.len()
            )));
        }
        check_nonneg(mass.indexed_iter().map(|((s, x, y), v)| (vec![s, x, y], v)))?;
        let plan = Plan3 { mass, sigma, mu, nu };
        check_marginal(0, &plan.marginal(Axis3::S), &plan.sigma)?;
        check_marginal(1, &plan.marginal(Axis3::X), &plan.mu)?;
        check_marginal(2, &plan.marginal(Axis3::Y), &plan.nu)?;
        check_mass(plan.mass.sum())?;
        Ok(plan)
    }

    pub fn mass(&self) -> &Array3<f64> {
        &self.mass
    }

    pub fn sigma(&self) -> &Array1<f64> {
        &self.sigma
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn nu(&self) -> &Array1<f64> {
        &self.nu
    }

    pub fn marginal(&self, axis: Axis3) -> Array1<f64> {
        let (a, b) = match axis {
            Axis3::S => (1, 2),
            Axis3::X => (0, 2),
            Axis3::Y => (0, 1),
        };
        // sum the higher axis first so the lower index stays valid
        self.mass.sum_axis(Axis(b)).sum_axis(Axis(a.min(b)))
    }

    pub fn to_multi(&self) -> MultiPlan {
        MultiPlan {
            mass: self.mass.clone().into_dyn(),
            marginals: vec![self.sigma.clone(), self.mu.clone(), self.nu.clone()],
            constrained: vec![true, true, true],
        }
    }

    pub fn from_multi(plan: &MultiPlan) -> Result<Self> {
        let mass = plan
            .mass
            .clone()
            .into_dimensionality::<Ix3>()
            .map_err(|_| Error::ShapeMismatch("multi plan is not three-dimensional".into()))?;
        Plan3::new(
            mass,
            plan.marginals[0].clone(),
            plan.marginals[1].clone(),
            plan.marginals[2].clone(),
        )
    }
}

/// An N-marginal plan tensor. Axes with `constrained[i] == true` carry a
/// prescribed marginal; free axes store the achieved marginal instead (the
/// unbalanced case).
#[derive(Debug, Clone)]
pub struct MultiPlan {
    mass: ArrayD<f64>,
    marginals: Vec<Array1<f64>>,
    constrained: Vec<bool>,
}

impl MultiPlan {
    /// `prescribed[i] = Some(mu_i)` constrains axis `i`; `None` leaves it
    /// free and records the achieved marginal.
    pub fn new(mass: ArrayD<f64>, prescribed: Vec<Option<Array1<f64>>>) -> Result<Self> {
        if mass.ndim() != prescribed.len() {
            return Err(Error::ShapeMismatch(format!(
                "plan has {} axes but {} marginals were supplied",
                mass.ndim(),
                prescribed.len()
            )));
        }
        check_nonneg(mass.indexed_iter().map(|(ix, v)| (ix.slice().to_vec(), v)))?;
        check_mass(mass.sum())?;
        let mut marginals = Vec::with_capacity(prescribed.len());
        let mut constrained = Vec::with_capacity(prescribed.len());
        for (axis, p) in prescribed.into_iter().enumerate() {
            let got = axis_marginal(&mass, axis);
            match p {
                Some(want) => {
                    if want.len() != mass.shape()[axis] {
                        return Err(Error::ShapeMismatch(format!(
                            "axis {axis} has {} atoms but marginal has length {}",
                            mass.shape()[axis],
                            want.len()
                        )));
                    }
                    check_marginal(axis, &got, &want)?;
                    marginals.push(want);
                    constrained.push(true);
                }
                None => {
                    marginals.push(got);
                    constrained.push(false);
                }
            }
        }
        Ok(MultiPlan { mass, marginals, constrained })
    }

    pub fn mass(&self) -> &ArrayD<f64> {
        &self.mass
    }

    pub fn ndim(&self) -> usize {
        self.mass.ndim()
    }

    pub fn marginals(&self) -> &[Array1<f64>] {
        &self.marginals
    }

    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    pub fn axis_marginal(&self, axis: usize) -> Array1<f64> {
        axis_marginal(&self.mass, axis)
    }

    pub fn pair_marginal(&self, a: usize, b: usize) -> Array2<f64> {
        pair_marginal(&self.mass, a, b)
    }
}

/// Sums a plan tensor over every axis except `axis`.
pub(crate) fn axis_marginal(mass: &ArrayD<f64>, axis: usize) -> Array1<f64> {
    let mut acc = mass.clone();
    for ax in (0..mass.ndim()).rev() {
        if ax != axis {
            acc = acc.sum_axis(Axis(ax));
        }
    }
    acc.into_dimensionality::<Ix1>().expect("one axis left")
}

/// Sums a plan tensor over every axis except `a` and `b` (`a != b`); the
/// result is indexed `(a, b)`.
pub(crate) fn pair_marginal(mass: &ArrayD<f64>, a: usize, b: usize) -> Array2<f64> {
    assert!(a != b, "pair marginal needs distinct axes");
    let (lo, hi) = (a.min(b), a.max(b));
    let mut acc = mass.clone();
    for ax in (0..mass.ndim()).rev() {
        if ax != lo && ax != hi {
            acc = acc.sum_axis(Axis(ax));
        }
    }
    let m = acc.into_dimensionality::<Ix2>().expect("two axes left");
    if a < b {
        m
    } else {
        m.t().to_owned()
    }
}

/// Axes of a [`Plan3`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis3 {
    S,
    X,
    Y,
}

impl Axis3 {
    fn index(self) -> usize {
        match self {
            Axis3::S => 0,
            Axis3::X => 1,
            Axis3::Y => 2,
        }
    }
}

/// Projects a 3-plan onto an ordered pair of its axes by summing out the
/// remaining one; marginals are inherited.
pub fn project_pair(plan: &Plan3, axes: (Axis3, Axis3)) -> Result<Plan2> {
    let (a, b) = (axes.0.index(), axes.1.index());
    if a == b {
        return Err(Error::InvalidParameter("projection axes must be distinct".into()));
    }
    let mass = pair_marginal(&plan.mass.clone().into_dyn(), a, b);
    let margin = |axis: Axis3| match axis {
        Axis3::S => plan.sigma.clone(),
        Axis3::X => plan.mu.clone(),
        Axis3::Y => plan.nu.clone(),
    };
    Plan2::new(mass, margin(axes.0), margin(axes.1))
}

/// Glues two plans sharing the `S` marginal into a 3-plan by conditional
/// independence given `s`:
/// `mass[s, x, y] = piSX[s, x] * piSY[s, y] / sigma[s]`.
///
/// Both pair projections of the result reproduce the inputs exactly.
pub fn glue(pi_sx: &Plan2, pi_sy: &Plan2, sigma: &Array1<f64>) -> Result<Plan3> {
    let ns = sigma.len();
    if pi_sx.mass.nrows() != ns || pi_sy.mass.nrows() != ns {
        return Err(Error::ShapeMismatch(format!(
            "plans have {} and {} rows for a shared marginal of length {ns}",
            pi_sx.mass.nrows(),
            pi_sy.mass.nrows()
        )));
    }
    let rx = pi_sx.row_marginal();
    let ry = pi_sy.row_marginal();
    for s in 0..ns {
        let gap = (rx[s] - sigma[s]).abs().max((ry[s] - sigma[s]).abs());
        if gap > MARGINAL_TOL {
            return Err(Error::SharedMarginalMismatch { index: s, gap });
        }
    }
    let (nx, ny) = (pi_sx.mass.ncols(), pi_sy.mass.ncols());
    let mut mass = Array3::zeros((ns, nx, ny));
    for s in 0..ns {
        for x in 0..nx {
            let px = pi_sx.mass[[s, x]];
            if px == 0.0 {
                continue;
            }
            for y in 0..ny {
                mass[[s, x, y]] = px * pi_sy.mass[[s, y]] / sigma[s];
            }
        }
    }
    Plan3::new(mass, sigma.clone(), pi_sx.nu.clone(), pi_sy.nu.clone())
}

/// How to collapse a coupling into a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    /// Send each source atom to the target atom carrying the most mass;
    /// ties broken by the lowest index.
    ModeArgmax,
    /// Send each source atom to the target atom nearest to the conditional
    /// Euclidean mean of the row; requires target coordinates.
    EuclideanMean,
}

/// A map between spaces by atom index: `T(s) = target_index[s]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteMap {
    target_index: Vec<usize>,
}

impl DiscreteMap {
    pub fn new(target_index: Vec<usize>, target_n: usize) -> Result<Self> {
        for (atom, &t) in target_index.iter().enumerate() {
            if t >= target_n {
                return Err(Error::IndexOutOfRange { atom, target: t, n: target_n });
            }
        }
        Ok(DiscreteMap { target_index })
    }

    pub fn len(&self) -> usize {
        self.target_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_index.is_empty()
    }

    pub fn apply(&self, s: usize) -> usize {
        self.target_index[s]
    }

    pub fn indices(&self) -> &[usize] {
        &self.target_index
    }
}

/// Collapses a plan into a [`DiscreteMap`] from row atoms to column atoms of
/// `target`. Deterministic: ties always break toward the lowest index.
pub fn barycentric_map(plan: &Plan2, mode: MapMode, target: &MmSpace) -> Result<DiscreteMap> {
    let (ns, nt) = (plan.mass.nrows(), plan.mass.ncols());
    if target.n() != nt {
        return Err(Error::ShapeMismatch(format!(
            "plan has {nt} columns but target space has {} atoms",
            target.n()
        )));
    }
    let mut out = Vec::with_capacity(ns);
    match mode {
        MapMode::ModeArgmax => {
            for s in 0..ns {
                let mut best = 0usize;
                for x in 1..nt {
                    if plan.mass[[s, x]] > plan.mass[[s, best]] {
                        best = x;
                    }
                }
                out.push(best);
            }
        }
        MapMode::EuclideanMean => {
            let coords = target.coords().ok_or_else(|| {
                Error::MissingCoords(format!(
                    "euclidean_mean barycentric map needs coordinates on {}",
                    target.label()
                ))
            })?;
            let d = coords.ncols();
            for s in 0..ns {
                let row_mass: f64 = plan.mass.row(s).sum();
                let mut mean = vec![0.0; d];
                for x in 0..nt {
                    let w = plan.mass[[s, x]] / row_mass;
                    for k in 0..d {
                        mean[k] += w * coords[[x, k]];
                    }
                }
                let mut best = 0usize;
                let mut best_d2 = f64::INFINITY;
                for x in 0..nt {
                    let mut d2 = 0.0;
                    for k in 0..d {
                        let diff = coords[[x, k]] - mean[k];
                        d2 += diff * diff;
                    }
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = x;
                    }
                }
                out.push(best);
            }
        }
    }
    DiscreteMap::new(out, nt)
}

/// Rounds a nonnegative matrix onto the transportation polytope
/// `Pi(mu, nu)`: shrink rows, shrink columns, then distribute the missing
/// mass as a rank-one correction. The result has exact marginals up to
/// floating-point addition.
pub fn round_to_polytope(mass: &mut Array2<f64>, mu: &Array1<f64>, nu: &Array1<f64>) {
    let (n, m) = (mass.nrows(), mass.ncols());
    for i in 0..n {
        let r: f64 = mass.row(i).sum();
        let scale = if r > 0.0 { (mu[i] / r).min(1.0) } else { 1.0 };
        if scale < 1.0 {
            for j in 0..m {
                mass[[i, j]] *= scale;
            }
        }
    }
    for j in 0..m {
        let c: f64 = mass.column(j).sum();
        let scale = if c > 0.0 { (nu[j] / c).min(1.0) } else { 1.0 };
        if scale < 1.0 {
            for i in 0..n {
                mass[[i, j]] *= scale;
            }
        }
    }
    let row_err: Array1<f64> = (0..n).map(|i| mu[i] - mass.row(i).sum()).collect();
    let col_err: Array1<f64> = (0..m).map(|j| nu[j] - mass.column(j).sum()).collect();
    let deficit: f64 = row_err.sum();
    if deficit > 0.0 {
        for i in 0..n {
            if row_err[i] <= 0.0 {
                continue;
            }
            for j in 0..m {
                if col_err[j] > 0.0 {
                    mass[[i, j]] += row_err[i] * col_err[j] / deficit;
                }
            }
        }
    }
}

/// N-axis generalization of [`round_to_polytope`]. Only axes with a
/// prescribed marginal are enforced; free axes keep their conditional shape
/// in the correction term.
pub fn round_to_polytope_multi(mass: &mut ArrayD<f64>, prescribed: &[Option<&Array1<f64>>]) {
    let ndim = mass.ndim();
    assert_eq!(prescribed.len(), ndim);
    for (axis, want) in prescribed.iter().enumerate() {
        let Some(want) = want else { continue };
        let got = axis_marginal(mass, axis);
        let scale: Vec<f64> = got
            .iter()
            .zip(want.iter())
            .map(|(&g, &w)| if g > 0.0 { (w / g).min(1.0) } else { 1.0 })
            .collect();
        for (ix, v) in mass.indexed_iter_mut() {
            *v *= scale[ix[axis]];
        }
    }
    // per-axis deficits all equal 1 - total mass; fill with a product tensor
    let mut factors: Vec<Array1<f64>> = Vec::with_capacity(ndim);
    let mut deficit = 0.0;
    for (axis, want) in prescribed.iter().enumerate() {
        let got = axis_marginal(mass, axis);
        match want {
            Some(want) => {
                let err: Array1<f64> = want
                    .iter()
                    .zip(got.iter())
                    .map(|(&w, &g)| (w - g).max(0.0))
                    .collect();
                deficit = err.sum();
                factors.push(err);
            }
            None => {
                let total = got.sum();
                factors.push(if total > 0.0 {
                    got.mapv(|v| v / total)
                } else {
                    Array1::from_elem(got.len(), 1.0 / got.len() as f64)
                });
            }
        }
    }
    if deficit <= 0.0 {
        return;
    }
    // free-axis factors are unit-sum conditionals; scale them to the deficit
    for (axis, want) in prescribed.iter().enumerate() {
        if want.is_none() {
            factors[axis].mapv_inplace(|v| v * deficit);
        }
    }
    let denom = deficit.powi((ndim - 1) as i32);
    for (ix, v) in mass.indexed_iter_mut() {
        let mut add = 1.0;
        for axis in 0..ndim {
            add *= factors[axis][ix[axis]];
        }
        if add > 0.0 {
            *v += add / denom;
        }
    }
}
