//! Shared fixtures for the solver benchmarks.

use gromovlab::{generate, MmSpace, SolverParams, SpaceKind};

pub fn cloud(seed: u64, n: usize) -> MmSpace {
    generate(SpaceKind::RandomCloud { seed, n, d: 2 }, None).unwrap()
}

/// A single annealed run with a shorter schedule, so benchmark timings track
/// the kernels rather than restart counts.
pub fn bench_params() -> SolverParams {
    SolverParams { restarts: 1, outer_max: 100, ..Default::default() }
}
