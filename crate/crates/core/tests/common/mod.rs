//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use lensdoa::optics::LensSpec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

/// Focal-plane field from the single-shot Fresnel integral over the lens
/// aperture, evaluated by direct summation on the aperture samples:
/// `u_f(x) ~ sum_p u0(x_p) exp(j pi (x - x_p)^2 / (lambda z)) dx`, `z = n_f dz`.
pub fn direct_fresnel_focal(theta: f64, lens: &LensSpec) -> Vec<Complex64> {
    let n = (lens.aperture_width / lens.sample_spacing).round() as usize;
    let k = 2.0 * PI / lens.wavelength;
    let f = lens.focal_length;
    let z = (f / lens.step).round() * lens.step;
    let xs: Vec<f64> =
        (0..n).map(|i| (i as f64 - (n as f64 - 1.0) / 2.0) * lens.sample_spacing).collect();
    let u0: Vec<Complex64> = xs
        .iter()
        .map(|&x| Complex64::from_polar(1.0, -k * (x * x + 2.0 * f * x * theta.sin()) / (2.0 * f)))
        .collect();
    xs.iter()
        .map(|&x| {
            u0.iter()
                .zip(&xs)
                .map(|(u, &xp)| u * Complex64::from_polar(1.0, PI * (x - xp).powi(2) / (lens.wavelength * z)))
                .sum::<Complex64>()
        })
        .collect()
}

pub fn peak_normalized_magnitude(u: &[Complex64]) -> Vec<f64> {
    let peak = u.iter().map(|c| c.norm()).fold(0.0, f64::max);
    u.iter().map(|c| c.norm() / peak).collect()
}

pub fn rel_l2(a: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(reference).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = reference.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b })
}

/// Largest eigenvalue of `P^T P` from a dense symmetric eigendecomposition.
pub fn dense_spectral_sq(p: &Array2<f64>) -> f64 {
    let m = DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| p[(i, j)]);
    let g = m.transpose() * &m;
    SymmetricEigen::new(g).eigenvalues.iter().cloned().fold(f64::MIN, f64::max)
}

/// Non-negative least squares by the Lawson-Hanson active-set method,
/// with the passive-set subproblems solved by SVD.
pub fn nnls_active_set(p: &Array2<f64>, y: &Array1<f64>) -> Array1<f64> {
    let (m, n) = p.dim();
    let a = DMatrix::from_fn(m, n, |i, j| p[(i, j)]);
    let b = DVector::from_iterator(m, y.iter().cloned());
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.norm() * b.norm().max(1e-300);
    let solve = |passive: &[bool]| {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_fn(m, cols.len(), |i, k| a[(i, cols[k])]);
        let z = sub.svd(true, true).solve(&b, 1e-14).expect("svd solve");
        let mut full = DVector::zeros(n);
        for (k, &j) in cols.iter().enumerate() {
            full[j] = z[k];
        }
        full
    };
    for _ in 0..10 * n {
        let w = a.transpose() * (&b - &a * &x);
        let Some(t) = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]))
        else {
            break;
        };
        passive[t] = true;
        loop {
            let z = solve(&passive);
            if (0..n).all(|j| !passive[j] || z[j] > 0.0) {
                x = z;
                break;
            }
            let alpha = (0..n)
                .filter(|&j| passive[j] && z[j] <= 0.0)
                .map(|j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            x = &x + (&z - &x) * alpha;
            for j in 0..n {
                if passive[j] && x[j] <= 1e-15 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    Array1::from_iter(x.iter().cloned())
}

/// Best non-negative two-atom fit over all column pairs: `(i, j, residual^2)`.
pub fn best_two_atom_fit(p: &Array2<f64>, y: &Array1<f64>) -> (usize, usize, f64) {
    let d = p.ncols();
    let mut best = (0, 0, f64::INFINITY);
    for i in 0..d {
        let a = p.column(i);
        for j in i + 1..d {
            let b = p.column(j);
            let (aa, ab, bb) = (a.dot(&a), a.dot(&b), b.dot(&b));
            let (ay, by) = (a.dot(y), b.dot(y));
            let det = aa * bb - ab * ab;
            // unconstrained 2x2 solve, then the single-atom faces of the orthant
            let mut candidates = vec![(ay.max(0.0) / aa, 0.0), (0.0, by.max(0.0) / bb)];
            if det > 0.0 {
                let u = (bb * ay - ab * by) / det;
                let v = (aa * by - ab * ay) / det;
                if u >= 0.0 && v >= 0.0 {
                    candidates.push((u, v));
                }
            }
            for (u, v) in candidates {
                let r = y - &(&a * u) - &(&b * v);
                let e = r.dot(&r);
                if e < best.2 {
                    best = (i, j, e);
                }
            }
        }
    }
    best
}
