//! Cross-cutting solver properties: monotone descent of the entropic
//! energy at fixed regularization, symmetry and isometry invariance of the
//! pairwise solver, and agreement with the brute-force oracles.

use gromovlab::oracle::{brute_gw, naive_gw_objective, permutation_gw_upper};
use gromovlab::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cloud(seed: u64, n: usize) -> MmSpace {
    generate(SpaceKind::RandomCloud { seed, n, d: 2 }, None).unwrap()
}

#[test]
fn outer_loop_monotone_in_entropic_energy_at_fixed_eta() {
    // tight inner tolerance so each block update is essentially exact
    let params = SolverParams {
        sinkhorn_tol: 1e-13,
        sinkhorn_max: 20_000,
        eta_floor: 0.3,
        restarts: 1,
        ..Default::default()
    };
    let x = cloud(11, 5);
    let y = cloud(12, 5);
    let (_, trace) = solve_gw_traced(&x, &y, &params).unwrap();
    assert!(!trace.entries.is_empty());
    let mut checked = 0;
    for w in trace.entries.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.restart == b.restart && a.eta == b.eta {
            assert!(
                b.pair_energy <= a.pair_energy + 1e-12 * (1.0 + a.pair_energy.abs()),
                "energy rose {} -> {} at eta {}",
                a.pair_energy,
                b.pair_energy,
                a.eta
            );
            checked += 1;
        }
    }
    assert!(checked > 0, "no fixed-eta pairs observed");
}

#[test]
fn lgw_outer_loop_monotone_at_fixed_eta() {
    let params = SolverParams {
        sinkhorn_tol: 1e-13,
        sinkhorn_max: 20_000,
        eta_floor: 0.3,
        restarts: 1,
        ..Default::default()
    };
    let s = cloud(13, 4);
    let x = cloud(14, 4);
    let y = cloud(15, 4);
    let sx = solve_gw(&s, &x, &params).unwrap();
    let sy = solve_gw(&s, &y, &params).unwrap();
    let (_, trace) = solve_lgw_exact_traced(&s, &x, &y, &sx.plan, &sy.plan, &params).unwrap();
    for w in trace.entries.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.restart == b.restart && a.eta == b.eta {
            assert!(
                b.pair_energy <= a.pair_energy + 1e-12 * (1.0 + a.pair_energy.abs()),
                "lgw energy rose {} -> {}",
                a.pair_energy,
                b.pair_energy
            );
        }
    }
}

#[test]
fn solver_symmetric_in_arguments() {
    let params = SolverParams::default();
    for seed in 0..4 {
        let x = cloud(100 + seed, 5);
        let y = cloud(200 + seed, 6);
        let xy = solve_gw(&x, &y, &params).unwrap().value;
        let yx = solve_gw(&y, &x, &params).unwrap().value;
        assert!(
            (xy - yx).abs() <= 1e-3 * (1.0 + xy),
            "seed {seed}: {xy} vs {yx}"
        );
    }
}

#[test]
fn solver_invariant_under_relabeling() {
    let params = SolverParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..4 {
        let x = cloud(300 + seed, 6);
        let p = Permutation::random(6, &mut rng);
        let y = apply_permutation(&x, &p).unwrap();
        let res = solve_gw(&x, &y, &params).unwrap();
        assert!(res.value <= 1e-4, "seed {seed}: value {}", res.value);
    }
}

#[test]
fn decomposed_objective_matches_naive_quadruple_sum() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..6 {
        let n = rng.random_range(2..=8);
        let m = rng.random_range(2..=8);
        let x = cloud(400 + trial, n);
        let y = cloud(500 + trial, m);
        let plan = solve_gw(&x, &y, &SolverParams::default()).unwrap().plan;
        let fast = gw_objective(&x, &y, &plan).unwrap();
        let naive = naive_gw_objective(&x, &y, plan.mass());
        assert!(
            (fast - naive).abs() <= 1e-10 * (1.0 + naive.abs()),
            "trial {trial}: {fast} vs {naive}"
        );
    }
}

#[test]
fn solver_matches_brute_oracle_on_small_instances() {
    let params = SolverParams::default();
    // 2x2 corpus
    let two = |a: f64| generate(SpaceKind::TwoPoint { a }, None).unwrap();
    for (x, y) in [
        (two(1.0), two(3.0)),
        (two(1.0), two(2.0)),
        (two(2.0), two(2.0)),
    ] {
        let solved = solve_gw(&x, &y, &params).unwrap();
        let brute = brute_gw(&x, &y, 20_001).unwrap();
        let got = solved.value * solved.value;
        assert!(
            (got - brute).abs() <= 0.01 * brute.max(1e-9),
            "2x2 {}/{}: {got} vs {brute}",
            x.label(),
            y.label()
        );
    }
    // non-uniform 2x2
    let xw = generate(SpaceKind::TwoPoint { a: 1.0 }, Some(ndarray::array![0.3, 0.7])).unwrap();
    let yw = generate(SpaceKind::TwoPoint { a: 2.5 }, Some(ndarray::array![0.6, 0.4])).unwrap();
    let solved = solve_gw(&xw, &yw, &params).unwrap();
    let brute = brute_gw(&xw, &yw, 20_001).unwrap();
    let got = solved.value * solved.value;
    assert!((got - brute).abs() <= 0.01 * brute.max(1e-9), "nonuniform: {got} vs {brute}");
}

#[test]
fn permutation_scan_upper_bounds_brute() {
    for seed in 0..3 {
        let x = cloud(600 + seed, 3);
        let y = cloud(700 + seed, 3);
        let brute = brute_gw(&x, &y, 33).unwrap();
        let upper = permutation_gw_upper(&x, &y).unwrap();
        assert!(brute <= upper + 1e-9, "{brute} vs {upper}");
    }
}

#[test]
fn sinkhorn_plan_hits_requested_tolerance() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let n = rng.random_range(2..7);
        let m = rng.random_range(2..7);
        let cost = ndarray::Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..2.0));
        let mut mu = ndarray::Array1::from_shape_fn(n, |_| rng.random_range(0.2..1.0));
        let mut nu = ndarray::Array1::from_shape_fn(m, |_| rng.random_range(0.2..1.0));
        mu /= mu.sum();
        nu /= nu.sum();
        let plan = sinkhorn(&cost, &mu, &nu, 0.7, 5000, 1e-9).unwrap();
        let viol: f64 = plan
            .row_marginal()
            .iter()
            .zip(mu.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(viol <= 1e-9, "violation {viol}");
    }
}
