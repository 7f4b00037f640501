//! Discrete Gromov-Wasserstein (GW) transport toolkit.
//!
//! Implements, over finite metric measure spaces:
//!
//! - the pairwise GW distance with an entropic alternating-minimization
//!   solver ([`gw`]),
//! - the linear GW distance against a reference space, exact and map-based
//!   ([`lgw`]),
//! - multi-marginal GW with pairwise quadratic costs, including the
//!   unbalanced (free-marginal) variant ([`mgw`]),
//! - free- and fixed-support GW barycenters ([`barycenter`]),
//! - brute-force oracles for tiny instances ([`oracle`]), and
//! - an epsilon-sweep experiment tracing how minimizers of the perturbed
//!   multi-marginal problem approach linear-GW minimizers.

pub mod barycenter;
pub mod coupling;
pub mod error;
pub mod gw;
pub mod lgw;
pub mod mgw;
pub mod mmspace;
pub mod oracle;
pub mod params;
mod sinkhorn;

pub use barycenter::{
    barycenter_objective, fixed_support_barycenter, free_support_barycenter, BarycenterWeights,
    FixedBarycenter, FreeBarycenter,
};
pub use coupling::{
    barycentric_map, glue, project_pair, round_to_polytope, round_to_polytope_multi, Axis3,
    DiscreteMap, MapMode, MultiPlan, Plan2, Plan3, MARGINAL_TOL, MASS_TOL,
};
pub use error::{Error, Result};
pub use gw::{
    gw_objective, opt_tol, optimality_residual, sinkhorn, solve_gw, solve_gw_traced, GwResult,
    SolveTrace, TraceEntry,
};
pub use lgw::{
    check_bounds, epsilon_sweep, lgw_matrix, lgw_objective, lgw_via_maps, solve_lgw_exact,
    solve_lgw_exact_traced, sweep_to_csv, BoundsReport, EpsSweep, LgwMatrix, LgwMode, LgwResult,
    MatrixFailure, MatrixMode, SweepRecord, SweepSchedule,
};
pub use mgw::{
    mgw_objective, solve_mgw, solve_mgw_eps, solve_mgw_warm, EpsCost, MgwEpsResult, MgwResult,
    PairwiseCoefficients,
};
pub use mmspace::{
    apply_permutation, generate, is_isomorphism, single_point_space, validate, MmSpace,
    Permutation, RawSpace, SpaceInput, SpaceKind,
};
pub use params::SolverParams;

/// The fixed float serialization used by the CLI and the sweep CSV so that
/// identical runs emit identical bytes: 12 significant digits when that
/// representation parses back to the same value, otherwise the shortest
/// exact form. The fallback keeps generated fixtures (e.g. uniform weights
/// `1/6`) consumable by the validators, whose tolerances are tighter than 12
/// digits.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    if !x.is_finite() {
        return "null".into();
    }
    let short = format!("{x:.11e}");
    if short.parse::<f64>() == Ok(x) {
        short
    } else {
        format!("{x:e}")
    }
}
