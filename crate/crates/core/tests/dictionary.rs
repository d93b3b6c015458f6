mod common;

use lensdoa::atomic::{propagation_direction, DipoleSpec};
use lensdoa::dictionary::{
    build_atom, build_dictionary, build_grid_degrees, center, spectral_norm_sq, PowerDictionary,
};
use lensdoa::optics::ArraySpec;
use lensdoa::receiver::{Receiver, ReceiverSpec};
use lensdoa::Error;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn standard() -> (Receiver, PowerDictionary) {
    let rx = Receiver::new(ReceiverSpec::standard()).unwrap();
    let grid = build_grid_degrees(-15.0, 15.0, 0.1).unwrap();
    let dict = build_dictionary(&grid, &rx).unwrap();
    (rx, dict)
}

fn cosine(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

#[test]
fn standard_dictionary_shape_and_invariants() {
    let (_, dict) = standard();
    assert_eq!(dict.atoms().dim(), (64, 301));
    assert!(dict.atoms().iter().all(|v| *v >= 0.0));
    for (i, col) in dict.centered().columns().into_iter().enumerate() {
        let sum: f64 = col.sum();
        assert!(sum.abs() <= 1e-9 * dict.centered_norms()[i], "column {i} sums to {sum}");
    }
    assert!(dict.lipschitz() >= dict.spectral_sq());
    assert!(dict.lipschitz() > 0.0);
}

#[test]
fn standard_columns_are_distinct() {
    let (_, dict) = standard();
    let p = dict.centered();
    let mut max_cos = f64::MIN;
    for i in 0..dict.len() {
        for j in i + 1..dict.len() {
            max_cos = max_cos.max(cosine(p.column(i), p.column(j)));
        }
    }
    assert!(1.0 - max_cos > 0.0, "closest pair has cosine {max_cos}");
}

#[test]
fn neighbouring_columns_are_more_similar_than_distant_ones() {
    let (_, dict) = standard();
    let p = dict.centered();
    let far = 50; // 5 degrees
    for i in 1..dict.len() - 1 {
        let near = cosine(p.column(i), p.column(i + 1)).max(cosine(p.column(i), p.column(i - 1)));
        for j in [i.checked_sub(far), Some(i + far)].into_iter().flatten() {
            if j < dict.len() {
                assert!(near > cosine(p.column(i), p.column(j)), "i = {i}, j = {j}");
            }
        }
    }
}

#[test]
fn lipschitz_matches_dense_eigensolve_on_toy() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = build_grid_degrees(-3.0, 3.0, 0.2).unwrap();
    assert_eq!(grid.len(), 31);
    let atoms = Array2::from_shape_fn((16, 31), |(m, j)| {
        let d = m as f64 - j as f64 / 2.0;
        (-0.3 * d * d).exp() + 0.05 * rng.random::<f64>()
    });
    let dict = PowerDictionary::from_atoms(grid, atoms, 0).unwrap();
    let exact = common::dense_spectral_sq(dict.centered());
    assert!((dict.spectral_sq() - exact).abs() <= 1e-4 * exact);
    assert!((dict.lipschitz() / exact - 1.01).abs() < 1e-4);
}

#[test]
fn power_iteration_matches_dense_eigensolve_on_standard() {
    let (_, dict) = standard();
    let exact = common::dense_spectral_sq(dict.centered());
    let (est, _) = spectral_norm_sq(dict.centered(), 200, 1e-6);
    assert!((est - exact).abs() <= 1e-4 * exact);
}

#[test]
fn step_size_majorizes_the_quadratic() {
    let (_, dict) = standard();
    let p = dict.centered();
    let l = dict.lipschitz();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y = Array1::from_shape_fn(p.nrows(), |_| rng.random::<f64>() - 0.5) * p.column(0).dot(&p.column(0)).sqrt();
    let f = |w: &Array1<f64>| {
        let r = p.dot(w) - &y;
        0.5 * r.dot(&r)
    };
    for _ in 0..100 {
        let w = Array1::from_shape_fn(p.ncols(), |_| rng.random::<f64>());
        let grad = p.t().dot(&(p.dot(&w) - &y));
        let next = &w - &(&grad / l);
        assert!(f(&next) <= f(&w) + 1e-12 * f(&w).abs());
    }
}

#[test]
fn broadside_atom_peaks_at_centre_cells() {
    let (rx, _) = standard();
    let a = build_atom(0.0, &rx).unwrap();
    let peak = common::argmax(&a);
    assert!(peak == 31 || peak == 32);
    // the cells straddle the axis with a half-sample offset, so evenness is approximate
    let m = a.len();
    let max = a[peak];
    for i in 0..m {
        assert!((a[i] - a[m - 1 - i]).abs() < 0.25 * max, "cell {i}");
    }
}

#[test]
fn dipole_along_propagation_gives_zero_atom() {
    let theta = 0.1;
    let k = propagation_direction(theta);
    let mut spec = ReceiverSpec::standard();
    spec.dipole = DipoleSpec::new([k.x, k.y, k.z], 510e-9, 852e-9, 1.0).unwrap();
    let rx = Receiver::new(spec).unwrap();
    assert!(build_atom(theta, &rx).unwrap().iter().all(|v| v.abs() < 1e-30));
    let grid = build_grid_degrees(5.0, 6.0, 0.5).unwrap();
    let grid = lensdoa::dictionary::build_grid(theta - 0.01, grid.max(), 0.01).unwrap();
    assert!(matches!(build_dictionary(&grid, &rx), Err(Error::DegenerateAtom { .. })));
}

#[test]
fn doubling_the_dipole_quadruples_the_atom() {
    let spec = ReceiverSpec::standard();
    let mut doubled = spec.clone();
    doubled.dipole = spec.dipole.scaled(2.0);
    let a = build_atom(0.07, &Receiver::new(spec).unwrap()).unwrap();
    let b = build_atom(0.07, &Receiver::new(doubled).unwrap()).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((y - 4.0 * x).abs() <= 1e-12 * y.abs());
    }
}

#[test]
fn fitted_array_builds_for_every_benchmark_size() {
    let spec = ReceiverSpec::standard();
    for m in [16, 32, 64, 128, 256] {
        let array = ArraySpec::fitted(m, spec.lens.wavelength / 2.0, &spec.lens).unwrap();
        let cells = array.cell_indices(&spec.lens).unwrap();
        assert!(cells.windows(2).all(|w| w[1] > w[0]), "M = {m}");
    }
}

#[test]
fn argmax_over_cosine_is_normalization_insensitive() {
    let (_, dict) = standard();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = dict.centered();
    let norms = dict.centered_norms();
    for _ in 0..10 {
        let target = rng.random_range(0..dict.len());
        let noisy: Vec<f64> = dict
            .atom(target)
            .iter()
            .map(|v| v * (1.0 + 0.01 * (rng.random::<f64>() - 0.5)))
            .collect();
        let y = Array1::from(center(&noisy));
        let c = 10f64.powf(rng.random::<f64>() * 8.0 - 4.0);
        let best = |y: &Array1<f64>| {
            lensdoa::sic::best_atom(p, norms, y.view(), &[]).unwrap()
        };
        assert_eq!(best(&y), best(&(&y * c)));
    }
}

proptest! {
    #[test]
    fn centering_is_idempotent(v in proptest::collection::vec(-1e3f64..1e3, 1..100)) {
        let once = center(&v);
        let twice = center(&once);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()))));
        }
        let ones = vec![3.5; v.len()];
        prop_assert!(center(&ones).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn grid_is_uniform(min in -80.0f64..0.0, width in 0.5f64..80.0, steps in 1usize..500) {
        let spacing = width / steps as f64;
        let g = build_grid_degrees(min, (min + width).min(89.0), spacing);
        if let Ok(g) = g {
            prop_assert!(g.len() >= 2);
            for w in g.angles().windows(2) {
                prop_assert!((w[1] - w[0] - g.spacing()).abs() < 1e-12);
            }
        }
    }
}
