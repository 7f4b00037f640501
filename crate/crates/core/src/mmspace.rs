//! Discrete metric measure spaces: a distance matrix together with strictly
//! positive probability weights, plus optional Euclidean coordinates.
//!
//! All solvers in this crate consume `dist` and `weights` only; coordinates
//! are metadata for Euclidean barycentric projection and for serialization.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Distance matrices must be symmetric to this absolute tolerance.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Slack allowed on the triangle inequality in strict mode.
pub const TRIANGLE_TOL: f64 = 1e-9;
/// Weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Provided distances must match coordinate-derived ones this closely.
pub const COORD_DIST_TOL: f64 = 1e-9;

/// A finite metric measure space.
///
/// Invariants (enforced by [`validate`] and preserved by every constructor):
/// symmetric distance matrix with zero diagonal, strictly positive weights
/// summing to one, and — when coordinates are present — distances equal to
/// the Euclidean distances of the coordinate rows. Strict mode additionally
/// requires positive off-diagonal distances and the triangle inequality.
///
/// Values are immutable after construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct MmSpace {
    label: String,
    dist: Array2<f64>,
    weights: Array1<f64>,
    coords: Option<Array2<f64>>,
}

impl MmSpace {
    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dist(&self) -> &Array2<f64> {
        &self.dist
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn coords(&self) -> Option<&Array2<f64>> {
        self.coords.as_ref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Candidate data for a space, prior to validation. Supply `dist` directly,
/// or `coords` from which distances are derived. Supplying both checks them
/// against each other.
#[derive(Debug, Clone)]
pub struct RawSpace {
    pub label: String,
    pub dist: Option<Array2<f64>>,
    pub weights: Array1<f64>,
    pub coords: Option<Array2<f64>>,
}

fn euclidean_dist(coords: &Array2<f64>) -> Array2<f64> {
    let n = coords.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for k in 0..coords.ncols() {
                let diff = coords[[i, k]] - coords[[j, k]];
                s += diff * diff;
            }
            let v = s.sqrt();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Checks the matrix-level axioms shared by spaces and barycenter supports.
pub(crate) fn validate_dist_matrix(dist: &Array2<f64>, strict: bool) -> Result<()> {
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "distance matrix is {}x{}, must be square",
            n,
            dist.ncols()
        )));
    }
    for i in 0..n {
        if dist[[i, i]] != 0.0 {
            return Err(Error::NonzeroDiagonal { i, value: dist[[i, i]] });
        }
        for j in 0..n {
            let v = dist[[i, j]];
            if !v.is_finite() {
                return Err(Error::NumericalOverflow(format!("dist[{i}][{j}] is not finite")));
            }
            if v < 0.0 {
                return Err(Error::NegativeDistance { i, j, value: v });
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (dist[[i, j]] - dist[[j, i]]).abs();
            if gap > SYMMETRY_TOL {
                return Err(Error::AsymmetricDistance { i, j, gap, tol: SYMMETRY_TOL });
            }
        }
    }
    if strict {
        for i in 0..n {
            for j in (i + 1)..n {
                if dist[[i, j]] <= 0.0 {
                    return Err(Error::ZeroDistance { i, j });
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let gap = dist[[i, k]] - dist[[i, j]] - dist[[j, k]];
                    if gap > TRIANGLE_TOL {
                        return Err(Error::TriangleViolation { i, j, k, gap });
                    }
                }
            }
        }
    }
    Ok(())
}

fn validate_weights(weights: &Array1<f64>) -> Result<()> {
    for (i, &w) in weights.iter().enumerate() {
        if !(w > 0.0) {
            return Err(Error::NonpositiveWeight { i, value: w });
        }
    }
    let sum: f64 = weights.sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::WeightSumMismatch { sum, tol: WEIGHT_SUM_TOL });
    }
    Ok(())
}

/// Validates candidate space data and returns an [`MmSpace`].
///
/// Strict mode (the default throughout the crate) enforces the metric axioms;
/// non-strict mode accepts pseudo-metrics, which the entropic solvers do not
/// require. Zero weights are always rejected: prune zero-mass atoms first.
pub fn validate(raw: RawSpace, strict: bool) -> Result<MmSpace> {
    let RawSpace { label, dist, weights, coords } = raw;
    let n = weights.len();
    if n == 0 {
        return Err(Error::InvalidParameter("space must have at least one atom".into()));
    }
    validate_weights(&weights)?;

    if let Some(c) = &coords {
        if c.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "coords have {} rows for {} weights",
                c.nrows(),
                n
            )));
        }
    }

    let dist = match (dist, &coords) {
        (Some(d), maybe_coords) => {
            if d.nrows() != n {
                return Err(Error::ShapeMismatch(format!(
                    "distance matrix is {}x{} for {} weights",
                    d.nrows(),
                    d.ncols(),
                    n
                )));
            }
            validate_dist_matrix(&d, strict)?;
            if let Some(c) = maybe_coords {
                let derived = euclidean_dist(c);
                for i in 0..n {
                    for j in 0..n {
                        if (d[[i, j]] - derived[[i, j]]).abs() > COORD_DIST_TOL {
                            return Err(Error::CoordDistMismatch {
                                i,
                                j,
                                dist: d[[i, j]],
                                derived: derived[[i, j]],
                            });
                        }
                    }
                }
            }
            d
        }
        (None, Some(c)) => {
            let d = euclidean_dist(c);
            validate_dist_matrix(&d, strict)?;
            d
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "space needs a distance matrix or coordinates".into(),
            ))
        }
    };

    Ok(MmSpace { label, dist, weights, coords })
}

/// A bijection of `{0, .., n-1}`, the discrete carrier of a candidate
/// measure-preserving isometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(Error::InvalidParameter(format!(
                    "permutation {perm:?} is not a bijection of 0..{n}"
                )));
            }
            seen[p] = true;
        }
        Ok(Permutation(perm))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    /// Fisher-Yates shuffle driven by the supplied generator.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        Permutation(perm)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &p) in self.0.iter().enumerate() {
            inv[p] = i;
        }
        Permutation(inv)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

/// Relabels the atoms of a space: `dist'[i][j] = dist[p(i)][p(j)]`,
/// `weights'[i] = weights[p(i)]`, coordinates permuted likewise.
pub fn apply_permutation(space: &MmSpace, p: &Permutation) -> Result<MmSpace> {
    let n = space.n();
    if p.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: p.len() });
    }
    let mut dist = Array2::zeros((n, n));
    let mut weights = Array1::zeros(n);
    for i in 0..n {
        weights[i] = space.weights[p.apply(i)];
        for j in 0..n {
            dist[[i, j]] = space.dist[[p.apply(i), p.apply(j)]];
        }
    }
    let coords = space.coords.as_ref().map(|c| {
        let mut out = Array2::zeros((n, c.ncols()));
        for i in 0..n {
            out.row_mut(i).assign(&c.row(p.apply(i)));
        }
        out
    });
    Ok(MmSpace { label: space.label.clone(), dist, weights, coords })
}

/// True iff `p` carries `x` onto `y` preserving distances and weights up to
/// `tol` entrywise.
pub fn is_isomorphism(p: &Permutation, x: &MmSpace, y: &MmSpace, tol: f64) -> Result<bool> {
    let n = x.n();
    if y.n() != n {
        return Err(Error::SizeMismatch(format!("spaces have {} and {} atoms", n, y.n())));
    }
    if p.len() != n {
        return Err(Error::SizeMismatch(format!(
            "permutation length {} for spaces of size {}",
            p.len(),
            n
        )));
    }
    for i in 0..n {
        if (x.weights[i] - y.weights[p.apply(i)]).abs() > tol {
            return Ok(false);
        }
        for j in 0..n {
            if (x.dist[[i, j]] - y.dist[[p.apply(i), p.apply(j)]]).abs() > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The one-atom space: `({s0}, 0, delta)`.
pub fn single_point_space() -> MmSpace {
    MmSpace {
        label: "single_point".into(),
        dist: Array2::zeros((1, 1)),
        weights: Array1::ones(1),
        coords: None,
    }
}

/// Test and experiment fixtures.
#[derive(Debug, Clone)]
pub enum SpaceKind {
    /// Two atoms at distance `a`.
    TwoPoint { a: f64 },
    /// `n` points drawn uniformly from the unit cube in `d` dimensions.
    RandomCloud { seed: u64, n: usize, d: usize },
    /// `n` points on the unit circle with chordal distances.
    Circle { n: usize },
}

/// Deterministic space generator; uniform weights unless overridden.
pub fn generate(kind: SpaceKind, weights: Option<Array1<f64>>) -> Result<MmSpace> {
    let (label, dist, coords): (String, Option<Array2<f64>>, Option<Array2<f64>>) = match kind {
        SpaceKind::TwoPoint { a } => {
            if !(a > 0.0) {
                return Err(Error::InvalidParameter(format!("two_point needs a > 0, got {a}")));
            }
            let mut d = Array2::zeros((2, 2));
            d[[0, 1]] = a;
            d[[1, 0]] = a;
            (format!("two_point({a})"), Some(d), None)
        }
        SpaceKind::RandomCloud { seed, n, d } => {
            if n == 0 || d == 0 {
                return Err(Error::InvalidParameter(format!(
                    "random_cloud needs n >= 1 and d >= 1, got n={n}, d={d}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut coords = Array2::zeros((n, d));
            for i in 0..n {
                for k in 0..d {
                    coords[[i, k]] = rng.random_range(0.0..1.0);
                }
            }
            (format!("random_cloud(seed={seed},n={n},d={d})"), None, Some(coords))
        }
        SpaceKind::Circle { n } => {
            if n == 0 {
                return Err(Error::InvalidParameter("circle needs n >= 1".into()));
            }
            let mut coords = Array2::zeros((n, 2));
            for i in 0..n {
                let theta = 2.0 * std::f64::consts::PI * (i as f64) / (n as f64);
                coords[[i, 0]] = theta.cos();
                coords[[i, 1]] = theta.sin();
            }
            (format!("circle({n})"), None, Some(coords))
        }
    };
    let n = dist.as_ref().map(|d| d.nrows()).or(coords.as_ref().map(|c| c.nrows())).unwrap();
    let weights = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: w.len() });
            }
            w
        }
        None => Array1::from_elem(n, 1.0 / n as f64),
    };
    validate(RawSpace { label, dist, weights, coords }, true)
}

/// JSON input schema for a space. Exactly one of `distance_matrix` / `points`
/// must be present; `points` are Euclidean coordinates.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceInput {
    pub label: String,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub distance_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub metric: Option<String>,
}

fn rows_to_array(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    if ncols == 0 {
        return Err(Error::ShapeMismatch(format!("{what} has an empty row")));
    }
    let mut out = Array2::zeros((nrows, ncols));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::ShapeMismatch(format!(
                "{what} row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

impl SpaceInput {
    pub fn into_raw(self) -> Result<RawSpace> {
        match (&self.distance_matrix, &self.points) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::InvalidParameter(
                    "exactly one of distance_matrix/points must be present".into(),
                ))
            }
            _ => {}
        }
        if self.points.is_some() {
            match self.metric.as_deref() {
                None | Some("euclidean") => {}
                Some(other) => {
                    return Err(Error::InvalidParameter(format!(
                        "unsupported metric {other:?}; only \"euclidean\" is available"
                    )))
                }
            }
        }
        let dist = self.distance_matrix.as_deref().map(|m| rows_to_array(m, "distance_matrix")).transpose()?;
        let coords = self.points.as_deref().map(|p| rows_to_array(p, "points")).transpose()?;
        Ok(RawSpace {
            label: self.label,
            dist,
            weights: Array1::from_vec(self.weights),
            coords,
        })
    }
}
