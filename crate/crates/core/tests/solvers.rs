mod common;

use lensdoa::dictionary::{build_dictionary, build_grid_degrees, center, PowerDictionary};
use lensdoa::nnlasso::{fista_solve, nnlasso_solve, objective, prox_step, FistaConfig, Lambda};
use lensdoa::receiver::{Receiver, ReceiverSpec};
use lensdoa::sic::{best_atom, sic_solve};
use ndarray::{Array1, Array2, ArrayView1};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn standard() -> &'static PowerDictionary {
    static DICT: OnceLock<PowerDictionary> = OnceLock::new();
    DICT.get_or_init(|| {
        let rx = Receiver::new(ReceiverSpec::standard()).unwrap();
        build_dictionary(&build_grid_degrees(-15.0, 15.0, 0.1).unwrap(), &rx).unwrap()
    })
}

/// 16 cells x 31 angles of Gaussian bumps with a little jitter.
fn toy(seed: u64) -> PowerDictionary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = build_grid_degrees(-3.0, 3.0, 0.2).unwrap();
    let atoms = Array2::from_shape_fn((16, 31), |(m, j)| {
        let d = m as f64 - j as f64 / 2.0;
        (-0.3 * d * d).exp() + 0.05 * rng.random::<f64>()
    });
    PowerDictionary::from_atoms(grid, atoms, 0).unwrap()
}

fn mix(dict: &PowerDictionary, picks: &[(usize, f64)]) -> Vec<f64> {
    let mut y = vec![0.0; dict.num_cells()];
    for &(j, a) in picks {
        y.iter_mut().zip(dict.atom(j)).for_each(|(v, p)| *v += a * p);
    }
    center(&y)
}

#[test]
fn unregularized_fista_matches_nnls_oracle() {
    for seed in 0..4 {
        let dict = toy(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let y = Array1::from(center(&(0..16).map(|_| rng.random::<f64>()).collect::<Vec<_>>()));
        let cfg = FistaConfig { lambda: Lambda::Absolute(0.0), max_iter: 20_000, tol: 1e-14, ..Default::default() };
        let out = fista_solve(dict.centered(), y.view(), dict.lipschitz(), &cfg).unwrap();
        let oracle = common::nnls_active_set(dict.centered(), &y);
        let f = objective(dict.centered(), y.view(), &out.w, 0.0);
        let g = objective(dict.centered(), y.view(), &oracle, 0.0);
        assert!((f - g).abs() <= 1e-4 * g.max(1e-12 * y.dot(&y)), "seed {seed}: {f} vs {g}");
    }
}

#[test]
fn converged_iterate_is_a_fixed_point() {
    let dict = toy(9);
    let y = Array1::from(mix(&dict, &[(5, 1.0), (20, 0.6)]));
    let cfg = FistaConfig { max_iter: 50_000, tol: 1e-12, ..Default::default() };
    let out = fista_solve(dict.centered(), y.view(), dict.lipschitz(), &cfg).unwrap();
    assert!(out.converged);
    let again = prox_step(dict.centered(), y.view(), &out.w, dict.lipschitz(), out.lambda);
    let diff = (&again - &out.w).mapv(f64::abs).sum();
    assert!(diff <= 1e-6 * out.w.sum());
}

#[test]
fn single_atom_recovered_on_standard() {
    let dict = standard();
    let cfg = FistaConfig::default();
    for j in [3, 77, 150, 151, 222, 297] {
        let y = mix(dict, &[(j, 2.0)]);
        let out = nnlasso_solve(dict, &y, 1, &cfg).unwrap();
        let err = (out.angles[0] - dict.grid().angles()[j]).abs();
        assert!(err <= 0.5 * dict.grid().spacing(), "index {j}: off by {err}");
        let sic = sic_solve(dict, &y, 1).unwrap();
        assert_eq!(sic.indices, vec![j]);
    }
}

#[test]
fn shifted_source_shifts_the_estimate() {
    let dict = standard();
    let cfg = FistaConfig::default();
    let spacing = dict.grid().spacing();
    let est = |j: usize| nnlasso_solve(dict, &mix(dict, &[(j, 1.0)]), 1, &cfg).unwrap().angles[0];
    for (j, s) in [(100, 7), (140, 20), (180, 1)] {
        let moved = est(j + s) - est(j);
        assert!((moved - s as f64 * spacing).abs() <= spacing, "j = {j}, s = {s}");
    }
}

#[test]
fn three_on_grid_users_recovered_noiselessly() {
    let dict = standard();
    let truth = [40, 150, 260];
    let y = mix(dict, &truth.map(|j| (j, 1.0)));
    let out = nnlasso_solve(dict, &y, 3, &FistaConfig::default()).unwrap();
    let sic = sic_solve(dict, &y, 3).unwrap();
    for (k, &j) in truth.iter().enumerate() {
        let t = dict.grid().angles()[j];
        assert!((out.angles[k] - t).abs() <= dict.grid().spacing());
        assert!((sic.angles[k] - t).abs() <= dict.grid().spacing());
    }
    assert!(!out.under_detected);
}

#[test]
fn sic_matches_exhaustive_two_atom_fit() {
    let dict = standard();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..3 {
        let i = rng.random_range(0..120);
        let j = rng.random_range(180..301);
        let y = mix(dict, &[(i, 1.0), (j, rng.random_range(0.5..2.0))]);
        let (oi, oj, oracle_resid) = common::best_two_atom_fit(dict.centered(), &Array1::from(y.clone()));
        let sic = sic_solve(dict, &y, 2).unwrap();
        let mut picks = sic.indices.clone();
        picks.sort();
        assert_eq!(picks, vec![oi, oj]);
        assert!(*sic.residual_energy_trace.last().unwrap() >= oracle_resid - 1e-12);
        assert!(oracle_resid <= 1e-20 * sic.residual_energy_trace[0]);
    }
}

#[test]
fn best_atom_agrees_with_brute_force_cosine() {
    let dict = standard();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let r = Array1::from(center(&(0..64).map(|_| rng.random::<f64>()).collect::<Vec<_>>()));
        let got = best_atom(dict.centered(), dict.centered_norms(), r.view(), &[]).unwrap();
        let brute = (0..dict.len())
            .map(|i| {
                let p = dict.centered_atom(i);
                p.dot(&r) / (p.dot(&p).sqrt() * r.dot(&r).sqrt())
            })
            .enumerate()
            .fold((0, f64::MIN), |b, (i, s)| if s > b.1 { (i, s) } else { b })
            .0;
        assert_eq!(got, brute);
    }
}

fn profile_strategy() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, 64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fista_iterates_stay_nonnegative(y in profile_strategy(), lam in 0.0f64..0.05) {
        let dict = standard();
        let y = center(&y);
        let cfg = FistaConfig { lambda: Lambda::Relative(lam), max_iter: 200, ..Default::default() };
        let out = fista_solve(dict.centered(), ArrayView1::from(&y), dict.lipschitz(), &cfg).unwrap();
        prop_assert!(out.w.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn prox_step_does_not_increase_objective(y in profile_strategy(), seed in any::<u64>()) {
        let dict = standard();
        let y = Array1::from(center(&y));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Array1::from_shape_fn(dict.len(), |_| if rng.random::<f64>() < 0.05 { rng.random::<f64>() } else { 0.0 });
        let lam = 0.003 * dict.centered().t().dot(&y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let next = prox_step(dict.centered(), y.view(), &w, dict.lipschitz(), lam);
        let before = objective(dict.centered(), y.view(), &w, lam);
        prop_assert!(objective(dict.centered(), y.view(), &next, lam) <= before * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn sic_residual_energy_never_grows(y in profile_strategy(), k in 1usize..6) {
        let dict = standard();
        let y = center(&y);
        let out = sic_solve(dict, &y, k).unwrap();
        for w in out.residual_energy_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let mut picks = out.indices.clone();
        picks.sort();
        picks.dedup();
        prop_assert_eq!(picks.len(), k);
    }

    #[test]
    fn sic_residual_is_orthogonal_to_a_fitted_atom(y in profile_strategy()) {
        let dict = standard();
        let y = center(&y);
        let out = sic_solve(dict, &y, 1).unwrap();
        if out.amplitudes[0] > 0.0 {
            let p = dict.centered_atom(out.indices[0]);
            let r = Array1::from(y.clone()) - &(&p * out.amplitudes[0]);
            let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(p.dot(&r).abs() <= 1e-10 * p.dot(&p).sqrt() * y_norm);
        }
    }

    #[test]
    fn sic_is_scale_invariant(y in profile_strategy(), exp in -6.0f64..6.0) {
        let dict = standard();
        let y = center(&y);
        let c = 10f64.powf(exp);
        let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
        prop_assert_eq!(sic_solve(dict, &y, 3).unwrap().indices, sic_solve(dict, &scaled, 3).unwrap().indices);
    }

    #[test]
    fn nnlasso_angles_lie_on_the_grid_span(y in profile_strategy(), k in 1usize..5) {
        let dict = standard();
        let cfg = FistaConfig { max_iter: 300, ..Default::default() };
        let out = nnlasso_solve(dict, &center(&y), k, &cfg).unwrap();
        prop_assert_eq!(out.angles.len(), k);
        prop_assert!(out.angles.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(out.angles.iter().all(|a| dict.grid().contains(*a)));
    }
}
